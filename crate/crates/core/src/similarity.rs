//! Bytecode fingerprints: disassembly to mnemonics, opcode n-gram counts and
//! cosine similarity, plus grouping of byte-identical deployments.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ingest::ContractBytecode;
use crate::types::{encode_hex, Address};

pub const DEFAULT_NGRAM: usize = 5;

/// A normalized opcode byte. Bytes outside the instruction set are stored as
/// `INVALID` (0xfe).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Opcode(u8);

pub const INVALID: Opcode = Opcode(0xfe);

impl Opcode {
    pub fn from_byte(b: u8) -> Opcode {
        if mnemonic(b).is_some() {
            Opcode(b)
        } else {
            INVALID
        }
    }

    pub fn byte(self) -> u8 {
        self.0
    }

    pub fn name(self) -> &'static str {
        mnemonic(self.0).unwrap_or("INVALID")
    }

    /// Immediate bytes following the opcode.
    pub fn operand_len(self) -> usize {
        match self.0 {
            0x60..=0x7f => (self.0 - 0x5f) as usize,
            _ => 0,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

const PUSH: [&str; 32] = [
    "PUSH1", "PUSH2", "PUSH3", "PUSH4", "PUSH5", "PUSH6", "PUSH7", "PUSH8", "PUSH9", "PUSH10", "PUSH11", "PUSH12",
    "PUSH13", "PUSH14", "PUSH15", "PUSH16", "PUSH17", "PUSH18", "PUSH19", "PUSH20", "PUSH21", "PUSH22", "PUSH23",
    "PUSH24", "PUSH25", "PUSH26", "PUSH27", "PUSH28", "PUSH29", "PUSH30", "PUSH31", "PUSH32",
];
const DUP: [&str; 16] = [
    "DUP1", "DUP2", "DUP3", "DUP4", "DUP5", "DUP6", "DUP7", "DUP8", "DUP9", "DUP10", "DUP11", "DUP12", "DUP13",
    "DUP14", "DUP15", "DUP16",
];
const SWAP: [&str; 16] = [
    "SWAP1", "SWAP2", "SWAP3", "SWAP4", "SWAP5", "SWAP6", "SWAP7", "SWAP8", "SWAP9", "SWAP10", "SWAP11", "SWAP12",
    "SWAP13", "SWAP14", "SWAP15", "SWAP16",
];
const LOG: [&str; 5] = ["LOG0", "LOG1", "LOG2", "LOG3", "LOG4"];

/// Shanghai instruction set.
fn mnemonic(b: u8) -> Option<&'static str> {
    Some(match b {
        0x00 => "STOP",
        0x01 => "ADD",
        0x02 => "MUL",
        0x03 => "SUB",
        0x04 => "DIV",
        0x05 => "SDIV",
        0x06 => "MOD",
        0x07 => "SMOD",
        0x08 => "ADDMOD",
        0x09 => "MULMOD",
        0x0a => "EXP",
        0x0b => "SIGNEXTEND",
        0x10 => "LT",
        0x11 => "GT",
        0x12 => "SLT",
        0x13 => "SGT",
        0x14 => "EQ",
        0x15 => "ISZERO",
        0x16 => "AND",
        0x17 => "OR",
        0x18 => "XOR",
        0x19 => "NOT",
        0x1a => "BYTE",
        0x1b => "SHL",
        0x1c => "SHR",
        0x1d => "SAR",
        0x20 => "KECCAK256",
        0x30 => "ADDRESS",
        0x31 => "BALANCE",
        0x32 => "ORIGIN",
        0x33 => "CALLER",
        0x34 => "CALLVALUE",
        0x35 => "CALLDATALOAD",
        0x36 => "CALLDATASIZE",
        0x37 => "CALLDATACOPY",
        0x38 => "CODESIZE",
        0x39 => "CODECOPY",
        0x3a => "GASPRICE",
        0x3b => "EXTCODESIZE",
        0x3c => "EXTCODECOPY",
        0x3d => "RETURNDATASIZE",
        0x3e => "RETURNDATACOPY",
        0x3f => "EXTCODEHASH",
        0x40 => "BLOCKHASH",
        0x41 => "COINBASE",
        0x42 => "TIMESTAMP",
        0x43 => "NUMBER",
        0x44 => "PREVRANDAO",
        0x45 => "GASLIMIT",
        0x46 => "CHAINID",
        0x47 => "SELFBALANCE",
        0x48 => "BASEFEE",
        0x50 => "POP",
        0x51 => "MLOAD",
        0x52 => "MSTORE",
        0x53 => "MSTORE8",
        0x54 => "SLOAD",
        0x55 => "SSTORE",
        0x56 => "JUMP",
        0x57 => "JUMPI",
        0x58 => "PC",
        0x59 => "MSIZE",
        0x5a => "GAS",
        0x5b => "JUMPDEST",
        0x5f => "PUSH0",
        0x60..=0x7f => PUSH[(b - 0x60) as usize],
        0x80..=0x8f => DUP[(b - 0x80) as usize],
        0x90..=0x9f => SWAP[(b - 0x90) as usize],
        0xa0..=0xa4 => LOG[(b - 0xa0) as usize],
        0xf0 => "CREATE",
        0xf1 => "CALL",
        0xf2 => "CALLCODE",
        0xf3 => "RETURN",
        0xf4 => "DELEGATECALL",
        0xf5 => "CREATE2",
        0xfa => "STATICCALL",
        0xfd => "REVERT",
        0xfe => "INVALID",
        0xff => "SELFDESTRUCT",
        _ => return None,
    })
}

/// One decoded instruction: the opcode and how many operand bytes it
/// actually consumed (fewer than `operand_len` for a truncated PUSH).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Instruction {
    pub opcode: Opcode,
    pub operand_bytes: usize,
}

pub fn instructions(code: &[u8]) -> Vec<Instruction> {
    let mut out = Vec::with_capacity(code.len());
    let mut pc = 0;
    while pc < code.len() {
        let opcode = Opcode::from_byte(code[pc]);
        let operand_bytes = opcode.operand_len().min(code.len() - pc - 1);
        out.push(Instruction { opcode, operand_bytes });
        pc += 1 + operand_bytes;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpcodeSeq(pub Vec<Opcode>);

impl OpcodeSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn mnemonics(&self) -> Vec<&'static str> {
        self.0.iter().map(|o| o.name()).collect()
    }
}

/// Mnemonics with PUSH operands removed.
pub fn disassemble(code: &[u8]) -> OpcodeSeq {
    OpcodeSeq(instructions(code).into_iter().map(|i| i.opcode).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct OpcodeVector {
    pub counts: BTreeMap<Vec<Opcode>, u64>,
    pub total_chunks: u64,
}

impl OpcodeVector {
    pub fn is_empty(&self) -> bool {
        self.total_chunks == 0
    }

    fn norm_sq(&self) -> u128 {
        self.counts.values().map(|&c| c as u128 * c as u128).sum()
    }
}

/// Counts of every length-`n` window. `n` must be at least 1.
pub fn ngram_vector(seq: &OpcodeSeq, n: usize) -> OpcodeVector {
    assert!(n >= 1, "n-gram window must be at least 1");
    let mut v = OpcodeVector::default();
    for w in seq.0.windows(n) {
        *v.counts.entry(w.to_vec()).or_default() += 1;
        v.total_chunks += 1;
    }
    v
}

/// Cosine of two count vectors. Empty vectors compare as 0.0; callers that
/// know the code is byte-identical should use [`Fingerprint::similarity`].
pub fn cosine(a: &OpcodeVector, b: &OpcodeVector) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let (small, large) = if a.counts.len() <= b.counts.len() { (a, b) } else { (b, a) };
    let dot: u128 = small
        .counts
        .iter()
        .filter_map(|(k, &c)| large.counts.get(k).map(|&d| c as u128 * d as u128))
        .sum();
    let (na, nb) = (a.norm_sq(), b.norm_sq());
    if dot == na && na == nb {
        // Equal norms and full overlap means identical vectors.
        return 1.0;
    }
    (dot as f64 / ((na as f64).sqrt() * (nb as f64).sqrt())).clamp(0.0, 1.0)
}

/// A contract's code digest and n-gram vector.
#[derive(Debug, Clone)]
pub struct Fingerprint {
    pub address: Address,
    pub code_len: usize,
    pub digest: [u8; 32],
    pub vector: OpcodeVector,
}

impl Fingerprint {
    pub fn new(c: &ContractBytecode, n: usize) -> Fingerprint {
        Fingerprint {
            address: c.address,
            code_len: c.code.len(),
            digest: Sha256::digest(&c.code).into(),
            vector: ngram_vector(&disassemble(&c.code), n),
        }
    }

    /// Cosine, except that byte-identical code is exactly 1.0.
    pub fn similarity(&self, other: &Fingerprint) -> f64 {
        if self.digest == other.digest && self.code_len == other.code_len {
            1.0
        } else {
            cosine(&self.vector, &other.vector)
        }
    }
}

pub fn fingerprints(codes: &[ContractBytecode], n: usize) -> Vec<Fingerprint> {
    codes.par_iter().map(|c| Fingerprint::new(c, n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub addresses: Vec<Address>,
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

/// Pairwise similarity in input order. The upper triangle is computed in
/// parallel and mirrored, so the result is exactly symmetric.
pub fn similarity_matrix(codes: &[ContractBytecode], n: usize) -> SimilarityMatrix {
    let fps = fingerprints(codes, n);
    let m = fps.len();
    let upper: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i + 1..m).map(|j| fps[i].similarity(&fps[j])).collect())
        .collect();
    let mut values = vec![vec![1.0; m]; m];
    for (i, row) in upper.iter().enumerate() {
        for (k, &s) in row.iter().enumerate() {
            let j = i + 1 + k;
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    SimilarityMatrix { addresses: fps.iter().map(|f| f.address).collect(), values }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CloneCluster {
    pub size: usize,
    pub code_sha256: String,
    pub code_len: usize,
    pub addresses: Vec<Address>,
}

/// Groups of two or more contracts with byte-identical, non-empty code,
/// largest first (ties by digest). Addresses within a group are sorted.
pub fn clone_clusters(codes: &[ContractBytecode]) -> Vec<CloneCluster> {
    let mut groups: BTreeMap<&[u8], Vec<Address>> = BTreeMap::new();
    for c in codes.iter().filter(|c| !c.is_empty()) {
        groups.entry(&c.code).or_default().push(c.address);
    }
    let mut out: Vec<CloneCluster> = groups
        .into_iter()
        .filter(|(_, a)| a.len() > 1)
        .map(|(code, mut addresses)| {
            addresses.sort();
            addresses.dedup();
            CloneCluster {
                size: addresses.len(),
                code_sha256: encode_hex(&Sha256::digest(code)),
                code_len: code.len(),
                addresses,
            }
        })
        .filter(|c| c.size > 1)
        .collect();
    out.sort_by(|a, b| b.size.cmp(&a.size).then_with(|| a.code_sha256.cmp(&b.code_sha256)));
    out
}

pub fn write_matrix<W: Write>(w: W, m: &SimilarityMatrix) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["address".to_string()];
    header.extend(m.addresses.iter().map(|a| a.to_string()));
    wtr.write_record(&header)?;
    for (a, row) in m.addresses.iter().zip(&m.values) {
        let mut rec = vec![a.to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()
}

pub fn write_clusters<W: Write>(mut w: W, clusters: &[CloneCluster]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, clusters)?;
    writeln!(w)
}
