//! Compact-JSON AST model plus the function-level queries the engine needs:
//! which externally callable functions reach a `Transfer` emission, and
//! where `ownerOf` returns its value.

use crate::hash::keccak256;
use crate::ingestion::CompilationUnit;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub length: usize,
    pub file: i64,
}

impl Span {
    pub fn parse(src: &str) -> Option<Span> {
        let mut it = src.split(':');
        let start: i64 = it.next()?.parse().ok()?;
        let length: i64 = it.next()?.parse().ok()?;
        let file: i64 = it.next()?.parse().ok()?;
        if start < 0 || length < 0 {
            return None;
        }
        Some(Span { start: start as usize, length: length as usize, file })
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.file == other.file && self.start <= other.start && other.end() <= self.end()
    }

    pub fn disjoint(&self, other: &Span) -> bool {
        self.file != other.file || self.end() <= other.start || other.end() <= self.start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AstNode {
    pub kind: String,
    pub id: Option<i64>,
    pub src: Option<Span>,
    /// Key under which the parent holds this node (`body`, `statements`, ...).
    pub field: String,
    pub children: Vec<AstNode>,
    pub attributes: BTreeMap<String, Value>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AstError {
    #[error("compilation unit has no AST")]
    NoAst,
    #[error("malformed AST node: {0}")]
    Malformed(String),
}

impl AstNode {
    pub fn from_json(v: &Value) -> Result<AstNode, AstError> {
        Self::from_json_field(v, "")
    }

    fn from_json_field(v: &Value, field: &str) -> Result<AstNode, AstError> {
        let obj = v.as_object().ok_or_else(|| AstError::Malformed("expected an object".into()))?;
        let kind = obj
            .get("nodeType")
            .and_then(Value::as_str)
            .ok_or_else(|| AstError::Malformed("missing nodeType".into()))?
            .to_string();
        let mut node = AstNode {
            kind,
            id: obj.get("id").and_then(Value::as_i64),
            src: obj.get("src").and_then(Value::as_str).and_then(Span::parse),
            field: field.to_string(),
            children: Vec::new(),
            attributes: BTreeMap::new(),
        };
        for (key, value) in obj {
            if matches!(key.as_str(), "nodeType" | "id" | "src") {
                continue;
            }
            match value {
                Value::Object(o) if o.contains_key("nodeType") => {
                    node.children.push(Self::from_json_field(value, key)?);
                }
                Value::Array(items) if items.iter().any(is_node) => {
                    for item in items.iter().filter(|i| is_node(i)) {
                        node.children.push(Self::from_json_field(item, key)?);
                    }
                }
                _ => {
                    node.attributes.insert(key.clone(), value.clone());
                }
            }
        }
        // JSON object order is lost; source order is what every query wants
        node.children.sort_by_key(|c| c.src.map_or((i64::MAX, usize::MAX), |s| (s.file, s.start)));
        Ok(node)
    }

    pub fn attr_str(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).and_then(Value::as_str)
    }

    pub fn attr_i64(&self, key: &str) -> Option<i64> {
        self.attributes.get(key).and_then(Value::as_i64)
    }

    pub fn attr_bool(&self, key: &str) -> Option<bool> {
        self.attributes.get(key).and_then(Value::as_bool)
    }

    pub fn name(&self) -> Option<&str> {
        self.attr_str("name")
    }

    pub fn child(&self, field: &str) -> Option<&AstNode> {
        self.children.iter().find(|c| c.field == field)
    }

    pub fn children_of<'a>(&'a self, field: &'a str) -> impl Iterator<Item = &'a AstNode> + 'a {
        self.children.iter().filter(move |c| c.field == field)
    }

    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&AstNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            for c in n.children.iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    pub fn type_string(&self) -> Option<&str> {
        self.attributes.get("typeDescriptions")?.get("typeString")?.as_str()
    }

    fn referenced(&self) -> Option<i64> {
        self.attr_i64("referencedDeclaration")
    }
}

fn is_node(v: &Value) -> bool {
    v.as_object().is_some_and(|o| o.contains_key("nodeType"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    External,
    Public,
    Internal,
    Private,
}

impl Visibility {
    fn parse(s: &str) -> Visibility {
        match s {
            "external" => Visibility::External,
            "public" => Visibility::Public,
            "private" => Visibility::Private,
            _ => Visibility::Internal,
        }
    }

    pub fn is_callable(self) -> bool {
        matches!(self, Visibility::External | Visibility::Public)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionInfo {
    pub name: String,
    pub contract: String,
    pub selector: Option<[u8; 4]>,
    /// (name, canonical ABI type)
    pub params: Vec<(String, String)>,
    pub src_span: Span,
    pub visibility: Visibility,
    pub emits_transfer: bool,
    pub ast_id: i64,
}

impl FunctionInfo {
    pub fn signature(&self) -> String {
        let types: Vec<&str> = self.params.iter().map(|(_, t)| t.as_str()).collect();
        format!("{}({})", self.name, types.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReturnBinding {
    pub function_name: String,
    pub return_src_span: Span,
    pub returned_identifier: String,
    /// Every return statement of every `ownerOf` body in the unit.
    pub all_return_spans: Vec<Span>,
}

/// First four bytes of `hash_oracle(signature)`.
pub fn compute_selector(signature: &str, hash_oracle: impl Fn(&[u8]) -> [u8; 32]) -> [u8; 4] {
    let h = hash_oracle(signature.as_bytes());
    [h[0], h[1], h[2], h[3]]
}

/// Maps a compiler type string to its ABI spelling.
pub fn canonical_abi_type(type_string: &str) -> String {
    let mut t = type_string.trim().to_string();
    for suffix in [" storage ref", " storage pointer", " memory", " calldata", " storage"] {
        if let Some(stripped) = t.strip_suffix(suffix) {
            t = stripped.to_string();
        }
    }
    // array suffixes survive the rewrite of the element type
    let (elem, dims) = match t.find('[') {
        Some(i) => (t[..i].trim().to_string(), t[i..].to_string()),
        None => (t.clone(), String::new()),
    };
    let elem = if elem == "address payable" || elem.starts_with("contract ") || elem.starts_with("interface ") {
        "address".to_string()
    } else if elem.starts_with("enum ") {
        "uint8".to_string()
    } else if elem == "uint" {
        "uint256".to_string()
    } else if elem == "int" {
        "int256".to_string()
    } else {
        elem
    };
    format!("{elem}{dims}")
}

struct Index<'a> {
    by_id: HashMap<i64, &'a AstNode>,
    /// Enclosing contract of every function/modifier id.
    owner: HashMap<i64, &'a AstNode>,
    contracts: Vec<&'a AstNode>,
}

impl<'a> Index<'a> {
    fn new(root: &'a AstNode) -> Self {
        let mut by_id = HashMap::new();
        let mut owner = HashMap::new();
        let mut contracts = Vec::new();
        for n in root.walk() {
            if let Some(id) = n.id {
                by_id.insert(id, n);
            }
            if n.kind == "ContractDefinition" {
                contracts.push(n);
                for m in &n.children {
                    if let Some(id) = m.id {
                        owner.insert(id, n);
                    }
                }
            }
        }
        Index { by_id, owner, contracts }
    }

    fn contract(&self, name: &str) -> Option<&'a AstNode> {
        // a later definition with the same name shadows earlier ones in flattened files
        self.contracts.iter().rev().find(|c| c.name() == Some(name)).copied()
    }

    /// Contracts in C3 order, most derived first.
    fn linearization(&self, contract: &'a AstNode) -> Vec<&'a AstNode> {
        let ids: Vec<i64> = contract
            .attributes
            .get("linearizedBaseContracts")
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(Value::as_i64).collect())
            .unwrap_or_default();
        if ids.is_empty() {
            return vec![contract];
        }
        ids.iter().filter_map(|id| self.by_id.get(id).copied()).collect()
    }

    fn is_transfer_event(&self, event: &AstNode) -> bool {
        if event.kind != "EventDefinition" || event.name() != Some("Transfer") {
            return false;
        }
        let Some(params) = event.child("parameters") else { return false };
        let types: Vec<String> = params
            .children_of("parameters")
            .map(|p| canonical_abi_type(p.type_string().unwrap_or("")))
            .collect();
        types == ["address", "address", "uint256"]
    }

    /// Whether `call` (a FunctionCall) invokes the ERC-721 Transfer event.
    fn is_transfer_emission(&self, call: &AstNode) -> bool {
        let Some(callee) = call.child("expression") else { return false };
        let args = call.children_of("arguments").count();
        match callee.referenced().and_then(|id| self.by_id.get(&id)) {
            Some(decl) => self.is_transfer_event(decl),
            // `emit IERC721.Transfer(...)` style references may not resolve
            None => {
                let name = callee.attr_str("memberName").or(callee.name());
                let is_event = callee.type_string().is_some_and(|t| t.starts_with("function (address,address,uint256)"));
                name == Some("Transfer") && args == 3 && is_event
            }
        }
    }
}

/// All functions and modifiers visible in `contract`, most-derived override
/// first for each (name, arity).
struct ContractView<'a> {
    index: Index<'a>,
    linearization: Vec<&'a AstNode>,
}

impl<'a> ContractView<'a> {
    fn new(root: &'a AstNode, contract_name: &str) -> Option<Self> {
        let index = Index::new(root);
        let contract = index.contract(contract_name)?;
        let linearization = index.linearization(contract);
        Some(ContractView { index, linearization })
    }

    fn members(&self, kind: &'static str) -> impl Iterator<Item = &'a AstNode> + '_ {
        self.linearization
            .iter()
            .flat_map(move |c| c.children.iter().filter(move |n| n.kind == kind))
    }

    fn arity(f: &AstNode) -> usize {
        f.child("parameters").map_or(0, |p| p.children_of("parameters").count())
    }

    /// Bodies that a call to `decl` may dispatch to: the declaration itself
    /// plus same-name, same-arity definitions in the linearization.
    fn dispatch_targets(&self, decl: &'a AstNode) -> Vec<&'a AstNode> {
        let mut out = vec![decl];
        if let Some(name) = decl.name() {
            for f in self.members(if decl.kind == "ModifierDefinition" { "ModifierDefinition" } else { "FunctionDefinition" }) {
                if f.name() == Some(name) && Self::arity(f) == Self::arity(decl) && f.id != decl.id {
                    out.push(f);
                }
            }
        }
        out
    }

    fn emits_transfer(&self, root_fn: &'a AstNode) -> bool {
        let mut seen: HashSet<i64> = HashSet::new();
        let mut work = vec![root_fn];
        while let Some(f) = work.pop() {
            if let Some(id) = f.id {
                if !seen.insert(id) {
                    continue;
                }
            }
            for n in f.walk() {
                match n.kind.as_str() {
                    "FunctionCall" => {
                        if self.index.is_transfer_emission(n) {
                            return true;
                        }
                    }
                    "EmitStatement" => {
                        if n.child("eventCall").is_some_and(|c| self.index.is_transfer_emission(c)) {
                            return true;
                        }
                    }
                    _ => {}
                }
                if matches!(n.kind.as_str(), "Identifier" | "MemberAccess" | "IdentifierPath" | "ModifierInvocation") {
                    let target = if n.kind == "ModifierInvocation" {
                        n.child("modifierName").and_then(|m| m.referenced())
                    } else {
                        n.referenced()
                    };
                    let Some(decl) = target.and_then(|id| self.index.by_id.get(&id)) else { continue };
                    if matches!(decl.kind.as_str(), "FunctionDefinition" | "ModifierDefinition") && decl.id != f.id {
                        work.extend(self.dispatch_targets(decl));
                    }
                }
            }
        }
        false
    }

    fn function_info(&self, f: &'a AstNode, emits: bool) -> FunctionInfo {
        let params: Vec<(String, String)> = f
            .child("parameters")
            .map(|p| {
                p.children_of("parameters")
                    .map(|v| (v.name().unwrap_or("").to_string(), canonical_abi_type(v.type_string().unwrap_or(""))))
                    .collect()
            })
            .unwrap_or_default();
        let visibility = Visibility::parse(f.attr_str("visibility").unwrap_or("public"));
        let name = f.name().unwrap_or("").to_string();
        let mut info = FunctionInfo {
            name,
            contract: self.index.owner.get(&f.id.unwrap_or(-1)).and_then(|c| c.name()).unwrap_or("").to_string(),
            selector: None,
            params,
            src_span: f.src.unwrap_or(Span { start: 0, length: 0, file: -1 }),
            visibility,
            emits_transfer: emits,
            ast_id: f.id.unwrap_or(-1),
        };
        if visibility.is_callable() {
            let from_ast = f.attr_str("functionSelector").and_then(|s| hex::decode(s).ok()).and_then(|b| <[u8; 4]>::try_from(b).ok());
            info.selector = Some(from_ast.unwrap_or_else(|| compute_selector(&info.signature(), keccak256)));
        }
        info
    }

    fn is_plain_function(f: &AstNode) -> bool {
        let kind = f.attr_str("kind").unwrap_or("function");
        kind == "function" && !f.attr_bool("isConstructor").unwrap_or(false) && f.name().is_some_and(|n| !n.is_empty())
    }

    /// Externally callable functions after override resolution.
    fn callable(&self) -> Vec<&'a AstNode> {
        let mut seen: HashSet<String> = HashSet::new();
        let mut out = Vec::new();
        for f in self.members("FunctionDefinition") {
            if !Self::is_plain_function(f) || f.attr_bool("implemented") == Some(false) {
                continue;
            }
            let vis = Visibility::parse(f.attr_str("visibility").unwrap_or("public"));
            let key = self.function_info(f, false).signature();
            if seen.insert(key) && vis.is_callable() {
                out.push(f);
            }
        }
        out.sort_by_key(|f| f.src.map(|s| (s.file, s.start)));
        out
    }
}

fn root(unit: &CompilationUnit) -> Result<&AstNode, AstError> {
    if unit.ast.children.is_empty() {
        return Err(AstError::NoAst);
    }
    Ok(&unit.ast)
}

/// Externally callable functions of the unit's contract, each flagged with
/// whether it (transitively) emits `Transfer`.
pub fn callable_functions(unit: &CompilationUnit) -> Result<Vec<FunctionInfo>, AstError> {
    let root = root(unit)?;
    let Some(view) = ContractView::new(root, &unit.contract_name) else {
        return Ok(Vec::new());
    };
    Ok(view.callable().into_iter().map(|f| view.function_info(f, view.emits_transfer(f))).collect())
}

/// The externally callable functions that reach a `Transfer` emission.
pub fn select_target_functions(unit: &CompilationUnit) -> Result<Vec<FunctionInfo>, AstError> {
    Ok(callable_functions(unit)?.into_iter().filter(|f| f.emits_transfer).collect())
}

/// Location of `ownerOf`'s return value. The primary binding comes from the
/// override the contract actually exposes; return spans of every `ownerOf`
/// body are collected so calls to base implementations are tracked too.
pub fn find_owner_return_binding(unit: &CompilationUnit) -> Option<ReturnBinding> {
    let root = root(unit).ok()?;
    let view = ContractView::new(root, &unit.contract_name)?;
    let mut bodies: Vec<&AstNode> = view
        .members("FunctionDefinition")
        .filter(|f| f.name() == Some("ownerOf") && f.child("body").is_some())
        .collect();
    if bodies.is_empty() {
        return None;
    }
    let primary = bodies[0];
    bodies.sort_by_key(|f| f.src.map(|s| (s.file, s.start)));
    let returns_of = |f: &AstNode| -> Vec<Span> {
        f.walk().into_iter().filter(|n| n.kind == "Return").filter_map(|n| n.src).collect()
    };
    let all_return_spans: Vec<Span> = bodies.iter().flat_map(|f| returns_of(f)).collect();
    let first_return = primary.walk().into_iter().find(|n| n.kind == "Return")?;
    let expr = first_return.child("expression");
    let returned_identifier = match expr {
        Some(e) if e.kind == "Identifier" => e.name().unwrap_or("").to_string(),
        Some(e) => e.src.and_then(|s| unit.source_text(&s)).unwrap_or("").to_string(),
        None => String::new(),
    };
    Some(ReturnBinding {
        function_name: "ownerOf".into(),
        return_src_span: first_return.src?,
        returned_identifier,
        all_return_spans,
    })
}

/// Declared type string of every state variable visible in the contract.
pub fn state_variable_types(unit: &CompilationUnit) -> HashMap<String, String> {
    let mut out = HashMap::new();
    let Ok(root) = root(unit) else { return out };
    let Some(view) = ContractView::new(root, &unit.contract_name) else { return out };
    for v in view.members("VariableDeclaration") {
        if v.attr_bool("stateVariable") == Some(true) {
            if let (Some(name), Some(ty)) = (v.name(), v.type_string()) {
                out.entry(name.to_string()).or_insert_with(|| ty.to_string());
            }
        }
    }
    out
}

/// Contracts with runtime code that no other contract inherits from.
pub(crate) fn most_derived(root: &AstNode, candidates: &[String]) -> Vec<String> {
    let index = Index::new(root);
    let mut bases: HashSet<i64> = HashSet::new();
    for name in candidates {
        if let Some(c) = index.contract(name) {
            for b in index.linearization(c).iter().skip(1) {
                if let Some(id) = b.id {
                    bases.insert(id);
                }
            }
        }
    }
    candidates
        .iter()
        .filter(|n| index.contract(n).is_none_or(|c| c.id.is_none_or(|id| !bases.contains(&id))))
        .cloned()
        .collect()
}
