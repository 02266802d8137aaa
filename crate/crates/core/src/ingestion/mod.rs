//! Loading compiler artifacts into [`CompilationUnit`]s.
//!
//! Two layouts are accepted: a standard-JSON output file (optionally wrapped
//! as `{input, output}` the way build-info files are) and a directory of
//! per-contract files (`X.bin-runtime`, `X.srcmap-runtime`, `X.ast.json`,
//! `X.sol`).

mod metadata;
mod source_map;
mod version;

pub use metadata::{strip_metadata, trailer_version};
pub use source_map::{decode_source_map, encode_source_map, JumpKind, SourceMapEntry, SourceMapError};
pub use version::{pragma_minimum, version_from_sources, Version};

use crate::ast::{self, AstNode, Span};
use crate::disasm::{self, DisasmError, Instruction};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Clone)]
pub struct CompilationUnit {
    pub contract_name: String,
    /// Runtime code with the metadata trailer removed.
    pub runtime_bytecode: Vec<u8>,
    /// One entry per instruction of `runtime_bytecode`.
    pub source_map: Vec<SourceMapEntry>,
    /// Synthetic root whose children are the per-file `SourceUnit`s.
    pub ast: AstNode,
    pub sources: Vec<(i64, String)>,
    pub compiler_version: Version,
    pub instructions: Vec<Instruction>,
    pub artifact: PathBuf,
}

impl CompilationUnit {
    pub fn source_text(&self, span: &Span) -> Option<&str> {
        let (_, text) = self.sources.iter().find(|(id, _)| *id == span.file)?;
        text.get(span.start..span.end())
    }

    pub fn source_name(&self, file: i64) -> Option<&str> {
        self.ast
            .children
            .iter()
            .find(|c| c.src.is_some_and(|s| s.file == file))
            .and_then(|c| c.attr_str("absolutePath"))
    }

    /// Identifier for reports: `<artifact>:<contract>`.
    pub fn id(&self) -> String {
        format!("{}:{}", self.artifact.display(), self.contract_name)
    }
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path} is not valid JSON: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error("no compiler version found for {0}")]
    VersionUnparseable(String),
    #[error("source map of {contract} has {entries} entries but the code has {instructions} instructions")]
    MapLengthMismatch { contract: String, entries: usize, instructions: usize },
    #[error("source map of {contract}: entry {index} points outside file {file}")]
    SpanOutOfBounds { contract: String, index: usize, file: i64 },
    #[error("contract {0} not found in artifact")]
    UnknownContract(String),
    #[error("artifact holds several deployable contracts ({0}); select one with PATH:NAME")]
    AmbiguousContract(String),
    #[error(transparent)]
    SourceMap(#[from] SourceMapError),
    #[error(transparent)]
    Disasm(#[from] DisasmError),
    #[error(transparent)]
    Ast(#[from] ast::AstError),
}

/// Raw pieces of one contract before validation.
struct RawContract {
    name: String,
    bytecode_hex: String,
    source_map: String,
    metadata_version: Option<Version>,
}

struct RawArtifact {
    path: PathBuf,
    contracts: Vec<RawContract>,
    asts: Vec<Value>,
    sources: Vec<(i64, String)>,
}

fn read(path: &Path) -> Result<String, IngestError> {
    fs::read_to_string(path).map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

fn read_json(path: &Path) -> Result<Value, IngestError> {
    serde_json::from_str(&read(path)?).map_err(|source| IngestError::Json { path: path.to_path_buf(), source })
}

fn read_standard_json(path: &Path) -> Result<RawArtifact, IngestError> {
    let doc = read_json(path)?;
    let (input, output) = match doc.get("output") {
        Some(out) => (doc.get("input"), out),
        None => (None, &doc),
    };
    let base_dir = path.parent().unwrap_or(Path::new("."));
    let mut sources = Vec::new();
    let mut asts = Vec::new();
    if let Some(srcs) = output.get("sources").and_then(Value::as_object) {
        for (file, entry) in srcs {
            let id = entry.get("id").and_then(Value::as_i64).unwrap_or(sources.len() as i64);
            if let Some(a) = entry.get("ast") {
                asts.push(a.clone());
            }
            let text = input
                .and_then(|i| i.pointer(&format!("/sources/{}/content", escape_pointer(file))))
                .and_then(Value::as_str)
                .map(str::to_string)
                .or_else(|| fs::read_to_string(base_dir.join(file)).ok());
            match text {
                Some(t) => sources.push((id, t)),
                None => return Err(IngestError::MissingArtifact(format!("source text of {file}"))),
            }
        }
    }
    let mut contracts = Vec::new();
    if let Some(files) = output.get("contracts").and_then(Value::as_object) {
        for per_file in files.values() {
            let Some(per_file) = per_file.as_object() else { continue };
            for (name, c) in per_file {
                let code = c.pointer("/evm/deployedBytecode/object").and_then(Value::as_str).unwrap_or("");
                if code.is_empty() {
                    continue;
                }
                let metadata_version = c
                    .get("metadata")
                    .and_then(Value::as_str)
                    .and_then(|m| serde_json::from_str::<Value>(m).ok())
                    .and_then(|m| m.pointer("/compiler/version").and_then(Value::as_str).and_then(Version::parse_loose));
                contracts.push(RawContract {
                    name: name.clone(),
                    bytecode_hex: code.to_string(),
                    source_map: c.pointer("/evm/deployedBytecode/sourceMap").and_then(Value::as_str).unwrap_or("").to_string(),
                    metadata_version,
                });
            }
        }
    }
    Ok(RawArtifact { path: path.to_path_buf(), contracts, asts, sources })
}

fn escape_pointer(s: &str) -> String {
    s.replace('~', "~0").replace('/', "~1")
}

fn read_loose_dir(dir: &Path) -> Result<RawArtifact, IngestError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|source| IngestError::Io { path: dir.to_path_buf(), source })?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(".bin-runtime")).map(str::to_string))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(IngestError::MissingArtifact(format!("no .bin-runtime file in {}", dir.display())));
    }
    let mut raw = RawArtifact { path: dir.to_path_buf(), contracts: Vec::new(), asts: Vec::new(), sources: Vec::new() };
    for name in names {
        let ast_path = dir.join(format!("{name}.ast.json"));
        if !ast_path.exists() {
            return Err(IngestError::MissingArtifact(ast_path.display().to_string()));
        }
        let ast = read_json(&ast_path)?;
        let file_id = ast.get("src").and_then(Value::as_str).and_then(Span::parse).map_or(0, |s| s.file);
        let text = read(&dir.join(format!("{name}.sol")))?;
        let srcmap_path = dir.join(format!("{name}.srcmap-runtime"));
        let source_map = if srcmap_path.exists() { read(&srcmap_path)?.trim().to_string() } else { String::new() };
        if !raw.sources.iter().any(|(id, _)| *id == file_id) {
            raw.sources.push((file_id, text));
            raw.asts.push(ast);
        }
        raw.contracts.push(RawContract {
            name: name.clone(),
            bytecode_hex: read(&dir.join(format!("{name}.bin-runtime")))?.trim().to_string(),
            source_map,
            metadata_version: None,
        });
    }
    Ok(raw)
}

fn read_raw(path: &Path) -> Result<RawArtifact, IngestError> {
    if path.is_dir() {
        read_loose_dir(path)
    } else if path.exists() {
        read_standard_json(path)
    } else {
        Err(IngestError::MissingArtifact(path.display().to_string()))
    }
}

fn build_ast_root(asts: &[Value]) -> Result<AstNode, IngestError> {
    let mut children = Vec::new();
    for a in asts {
        children.push(AstNode::from_json(a)?);
    }
    children.sort_by_key(|c| c.src.map(|s| s.file));
    Ok(AstNode {
        kind: "Sources".into(),
        id: None,
        src: None,
        field: String::new(),
        children,
        attributes: BTreeMap::new(),
    })
}

fn finish(raw: &RawArtifact, c: &RawContract, ast: AstNode) -> Result<CompilationUnit, IngestError> {
    let hex_text = c.bytecode_hex.trim().trim_start_matches("0x");
    if hex_text.contains("__") {
        // unlinked library placeholders: zero them so decoding stays aligned
        log::warn!("{}: unlinked library references replaced by zero addresses", c.name);
    }
    let normalized = replace_link_placeholders(hex_text);
    let full = hex::decode(&normalized).map_err(|e| IngestError::MissingArtifact(format!("bytecode of {}: {e}", c.name)))?;
    let code = strip_metadata(&full);
    if code.is_empty() {
        return Err(IngestError::MissingArtifact(format!("runtime bytecode of {}", c.name)));
    }
    if ast.children.is_empty() {
        return Err(IngestError::MissingArtifact(format!("AST for {}", c.name)));
    }

    let texts = raw.sources.iter().map(|(_, t)| t.as_str());
    let compiler_version = c
        .metadata_version
        .or_else(|| trailer_version(&full))
        .or_else(|| version_from_sources(texts))
        .ok_or_else(|| IngestError::VersionUnparseable(c.name.clone()))?;

    let instructions = disasm::disassemble(&code, compiler_version)?;
    let mut map = decode_source_map(&c.source_map)?;
    for e in map.iter_mut() {
        // compiler-generated sources (Yul utility files) are not part of the unit
        if e.file >= 0 && !raw.sources.iter().any(|(id, _)| *id == e.file) {
            e.file = -1;
        }
    }
    // the trailing end-of-code marker has no map entry
    let ends_with_marker = instructions.last().is_some_and(|i| i.opcode == 0xfe || i.opcode == 0x00);
    if map.len() + 1 == instructions.len() && ends_with_marker {
        map.push(SourceMapEntry::GENERATED);
    }
    if map.len() != instructions.len() {
        return Err(IngestError::MapLengthMismatch {
            contract: c.name.clone(),
            entries: map.len(),
            instructions: instructions.len(),
        });
    }
    for (index, e) in map.iter().enumerate() {
        if e.file < 0 {
            continue;
        }
        let len = raw.sources.iter().find(|(id, _)| *id == e.file).map_or(0, |(_, t)| t.len());
        if e.start < 0 || e.length < 0 || (e.start + e.length) as usize > len {
            return Err(IngestError::SpanOutOfBounds { contract: c.name.clone(), index, file: e.file });
        }
    }

    Ok(CompilationUnit {
        contract_name: c.name.clone(),
        runtime_bytecode: code,
        source_map: map,
        ast,
        sources: raw.sources.clone(),
        compiler_version,
        instructions,
        artifact: raw.path.clone(),
    })
}

/// `__$...$__` / `__Lib____` placeholders are 40 hex characters wide.
fn replace_link_placeholders(hex_text: &str) -> String {
    let mut out = String::with_capacity(hex_text.len());
    let bytes = hex_text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'_' && i + 40 <= bytes.len() && bytes[i + 1] == b'_' {
            out.push_str(&"0".repeat(40));
            i += 40;
        } else {
            out.push(bytes[i] as char);
            i += 1;
        }
    }
    out
}

/// Every deployable, most-derived contract in the artifact.
pub fn load_compilations(path: &Path) -> Result<Vec<CompilationUnit>, IngestError> {
    let raw = read_raw(path)?;
    if raw.contracts.is_empty() {
        return Err(IngestError::MissingArtifact(format!("no runtime bytecode in {}", path.display())));
    }
    if raw.asts.is_empty() {
        return Err(IngestError::MissingArtifact(format!("no AST in {}", path.display())));
    }
    let root = build_ast_root(&raw.asts)?;
    let names: Vec<String> = raw.contracts.iter().map(|c| c.name.clone()).collect();
    let keep = ast::most_derived(&root, &names);
    raw.contracts
        .iter()
        .filter(|c| keep.contains(&c.name))
        .map(|c| finish(&raw, c, root.clone()))
        .collect()
}

/// Loads one contract. `path` may carry a `:Name` suffix to pick a contract
/// when the artifact holds several unrelated ones.
pub fn load_compilation(path: &Path) -> Result<CompilationUnit, IngestError> {
    let (file, wanted) = split_contract_suffix(path);
    let raw = read_raw(&file)?;
    if raw.asts.is_empty() {
        return Err(IngestError::MissingArtifact(format!("no AST in {}", file.display())));
    }
    let root = build_ast_root(&raw.asts)?;
    if let Some(name) = wanted {
        let c = raw.contracts.iter().find(|c| c.name == name).ok_or(IngestError::UnknownContract(name))?;
        return finish(&raw, c, root);
    }
    let names: Vec<String> = raw.contracts.iter().map(|c| c.name.clone()).collect();
    let keep = ast::most_derived(&root, &names);
    match keep.as_slice() {
        [] => Err(IngestError::MissingArtifact(format!("no runtime bytecode in {}", file.display()))),
        [one] => {
            let c = raw.contracts.iter().find(|c| &c.name == one).expect("name comes from the list");
            finish(&raw, c, root)
        }
        many => Err(IngestError::AmbiguousContract(many.join(", "))),
    }
}

fn split_contract_suffix(path: &Path) -> (PathBuf, Option<String>) {
    if path.exists() {
        return (path.to_path_buf(), None);
    }
    let text = path.to_string_lossy();
    match text.rsplit_once(':') {
        Some((file, name)) if !name.contains('/') && Path::new(file).exists() => (PathBuf::from(file), Some(name.to_string())),
        _ => (path.to_path_buf(), None),
    }
}
