#!/usr/bin/env node
// Compiles Solidity fixtures with a solcjs package and writes build-info style
// artifacts ({input, output}) that the analyzer's loader accepts.
//
//   node scripts/compile_fixtures.js <solc-package-dir> <out-dir> <file.sol>...
//   node scripts/compile_fixtures.js --loose <solc-package-dir> <out-dir> <file.sol> <contract>
//
// The solc package dir is a directory containing node_modules/solc (e.g. after
// `npm install solc@0.8.21`). `--loose` writes the per-file layout instead:
// <name>.bin-runtime, <name>.srcmap-runtime, <name>.ast.json, <name>.sol.

const fs = require('fs');
const path = require('path');

let args = process.argv.slice(2);
let loose = false;
if (args[0] === '--loose') {
  loose = true;
  args = args.slice(1);
}
if (args.length < 3) {
  console.error('usage: compile_fixtures.js [--loose] <solc-package-dir> <out-dir> <file.sol>... [contract]');
  process.exit(2);
}
const solc = require(path.resolve(args[0], 'node_modules', 'solc'));
const outDir = args[1];
const files = loose ? [args[2]] : args.slice(2);
const version = solc.version().split('+')[0];

function compile(file) {
  const name = path.basename(file);
  const input = {
    language: 'Solidity',
    sources: { [name]: { content: fs.readFileSync(file, 'utf8') } },
    settings: {
      optimizer: { enabled: false, runs: 200 },
      outputSelection: {
        '*': {
          '*': ['abi', 'metadata', 'evm.deployedBytecode.object', 'evm.deployedBytecode.sourceMap'],
          '': ['ast'],
        },
      },
    },
  };
  const raw = solc.compileStandardWrapper
    ? solc.compileStandardWrapper(JSON.stringify(input))
    : solc.compile(JSON.stringify(input));
  const output = JSON.parse(raw);
  const errors = (output.errors || []).filter((e) => e.severity === 'error');
  if (errors.length > 0) {
    for (const e of errors) console.error(e.formattedMessage || e.message);
    process.exit(1);
  }
  return { input, output };
}

fs.mkdirSync(outDir, { recursive: true });
if (loose) {
  const { input, output } = compile(files[0]);
  const fileName = path.basename(files[0]);
  const contract = args[3];
  const c = output.contracts[fileName][contract];
  const base = path.join(outDir, contract);
  fs.writeFileSync(base + '.bin-runtime', c.evm.deployedBytecode.object + '\n');
  fs.writeFileSync(base + '.srcmap-runtime', c.evm.deployedBytecode.sourceMap + '\n');
  fs.writeFileSync(base + '.ast.json', JSON.stringify(output.sources[fileName].ast));
  fs.writeFileSync(base + '.sol', input.sources[fileName].content);
  console.log(`wrote ${base}.* (solc ${version})`);
} else {
  for (const file of files) {
    const artifact = compile(file);
    const stem = path.basename(file, '.sol');
    const out = path.join(outDir, `${stem}-${version}.json`);
    fs.writeFileSync(out, JSON.stringify(artifact));
    console.log(`wrote ${out}`);
  }
}
