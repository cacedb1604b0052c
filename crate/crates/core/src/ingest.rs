//! Canonical data model and loaders for chain-data exports.
//!
//! Transactions, swaps, traces and bytecode arrive as newline-delimited JSON,
//! labels and OHLC bars as CSV. Every loader validates the record invariants
//! and reports failures with the 1-based line number and offending field.
//! Each format also has a writer producing the canonical form, so a loaded
//! collection can be written back and reloaded unchanged.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, Utc};
use num_bigint::BigUint;
use num_traits::Zero;
use serde::Deserialize;
use serde_json::json;

use crate::types::{decode_hex, encode_hex, Address, Chain, TxHash};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    File { path: PathBuf, source: Box<IngestError> },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Field { line: usize, field: &'static str, message: String },
    #[error("duplicate {what} {key} on lines {first_line} and {second_line}")]
    Duplicate { what: &'static str, key: String, first_line: usize, second_line: usize },
    #[error("read error: {0}")]
    Read(#[from] io::Error),
}

impl IngestError {
    fn field(line: usize, field: &'static str, message: impl Into<String>) -> Self {
        IngestError::Field { line, field, message: message.into() }
    }

    fn in_file(self, path: &Path) -> Self {
        match self {
            e @ (IngestError::Io { .. } | IngestError::File { .. }) => e,
            e => IngestError::File { path: path.to_path_buf(), source: Box::new(e) },
        }
    }
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// One DEX swap log.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwapEvent {
    pub tx_hash: TxHash,
    pub token_sold: Address,
    pub token_bought: Address,
    pub amount_sold: BigUint,
    pub amount_bought: BigUint,
    /// Log position within the transaction.
    pub evt_index: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TxStatus {
    Success,
    Revert,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub hash: TxHash,
    pub from_addr: Address,
    /// First callee. `None` for contract creations.
    pub to_addr: Option<Address>,
    pub block_number: u64,
    /// UTC seconds.
    pub timestamp: i64,
    pub gas_used: u64,
    /// Wei per gas, already resolved to the chain's effective price.
    pub gas_price: BigUint,
    pub calldata: Vec<u8>,
    pub status: TxStatus,
    pub chain: Chain,
}

impl TransactionRecord {
    pub fn date(&self) -> NaiveDate {
        utc_day(self.timestamp)
    }

    /// `gas_used * gas_price`, in wei.
    pub fn fee(&self) -> BigUint {
        &self.gas_price * self.gas_used
    }
}

pub fn utc_day(timestamp: i64) -> NaiveDate {
    DateTime::<Utc>::from_timestamp(timestamp, 0)
        .map(|t| t.date_naive())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CallType {
    Call,
    StaticCall,
    DelegateCall,
    CallCode,
    Create,
}

impl CallType {
    pub fn as_str(&self) -> &'static str {
        match self {
            CallType::Call => "call",
            CallType::StaticCall => "staticcall",
            CallType::DelegateCall => "delegatecall",
            CallType::CallCode => "callcode",
            CallType::Create => "create",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s.trim().to_ascii_lowercase().as_str() {
            "call" => CallType::Call,
            "staticcall" => CallType::StaticCall,
            "delegatecall" => CallType::DelegateCall,
            "callcode" => CallType::CallCode,
            "create" | "create2" => CallType::Create,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceCall {
    pub tx_hash: TxHash,
    pub call_type: CallType,
    pub callee: Option<Address>,
    /// First (up to) four bytes of the call input.
    pub selector: Vec<u8>,
    pub depth_order: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LabelKind {
    Router,
    Aggregator,
    Pool,
    Exclude,
}

impl LabelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LabelKind::Router => "router",
            LabelKind::Aggregator => "aggregator",
            LabelKind::Pool => "pool",
            LabelKind::Exclude => "exclude",
        }
    }
}

/// Address labels for a single chain. Kinds may overlap.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LabelSet {
    pub routers: BTreeSet<Address>,
    pub aggregators: BTreeSet<Address>,
    pub dex_pools: BTreeSet<Address>,
    /// Externally curated non-bot labels, address to reason.
    pub exclusion_labels: BTreeMap<Address, String>,
    notes: BTreeMap<(Address, LabelKind), String>,
}

impl LabelSet {
    pub fn is_router_or_aggregator(&self, addr: &Address) -> bool {
        self.routers.contains(addr) || self.aggregators.contains(addr)
    }

    pub fn insert(&mut self, addr: Address, kind: LabelKind, note: impl Into<String>) {
        let note = note.into();
        match kind {
            LabelKind::Router => {
                self.routers.insert(addr);
            }
            LabelKind::Aggregator => {
                self.aggregators.insert(addr);
            }
            LabelKind::Pool => {
                self.dex_pools.insert(addr);
            }
            LabelKind::Exclude => {
                let reason = if note.is_empty() { "excluded".to_string() } else { note.clone() };
                self.exclusion_labels.insert(addr, reason);
            }
        }
        self.notes.insert((addr, kind), note);
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OhlcBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
}

impl OhlcBar {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let prices = [self.open, self.high, self.low, self.close];
        if prices.iter().any(|p| !p.is_finite()) {
            return Err("non-finite price".into());
        }
        if self.low <= 0.0 {
            return Err(format!("low {} must be positive", self.low));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractBytecode {
    pub address: Address,
    pub code: Vec<u8>,
}

impl ContractBytecode {
    /// Empty code, e.g. a self-destructed contract.
    pub fn is_empty(&self) -> bool {
        self.code.is_empty()
    }
}

/// Swap events grouped by transaction, each group sorted by `evt_index`.
pub type SwapIndex = BTreeMap<TxHash, Vec<SwapEvent>>;
/// Trace calls grouped by transaction, each group sorted by `depth_order`.
pub type TraceIndex = BTreeMap<TxHash, Vec<TraceCall>>;

// ---------------------------------------------------------------------------
// field parsing

#[derive(Deserialize)]
#[serde(untagged)]
enum Scalar {
    Num(serde_json::Number),
    Str(String),
    Bool(bool),
}

impl Scalar {
    fn text(&self) -> String {
        match self {
            Scalar::Num(n) => n.to_string(),
            Scalar::Str(s) => s.trim().to_string(),
            Scalar::Bool(b) => b.to_string(),
        }
    }
}

type Row = HashMap<String, Option<Scalar>>;

fn parse_row(line_no: usize, line: &str) -> Result<Row> {
    serde_json::from_str(line)
        .map_err(|e| IngestError::Malformed { line: line_no, message: e.to_string() })
}

fn required(row: &Row, line: usize, field: &'static str) -> Result<String> {
    match row.get(field) {
        Some(Some(v)) => Ok(v.text()),
        _ => Err(IngestError::field(line, field, "missing")),
    }
}

fn optional(row: &Row, field: &str) -> Option<String> {
    row.get(field).and_then(|v| v.as_ref()).map(Scalar::text).filter(|s| !s.is_empty())
}

fn parse_addr(s: &str, line: usize, field: &'static str) -> Result<Address> {
    s.parse().map_err(|e| IngestError::field(line, field, format!("{e}")))
}

fn parse_hash(s: &str, line: usize, field: &'static str) -> Result<TxHash> {
    s.parse().map_err(|e| IngestError::field(line, field, format!("{e}")))
}

fn parse_u64(s: &str, line: usize, field: &'static str) -> Result<u64> {
    s.parse().map_err(|_| IngestError::field(line, field, format!("`{s}` is not an unsigned integer")))
}

fn parse_biguint(s: &str, line: usize, field: &'static str) -> Result<BigUint> {
    // Exports sometimes render integral amounts as `123.0`.
    let digits = s.strip_suffix(".0").unwrap_or(s);
    digits
        .parse()
        .map_err(|_| IngestError::field(line, field, format!("`{s}` is not an unsigned integer")))
}

/// Accepts RFC 3339 and the `YYYY-MM-DD HH:MM:SS[.fff][ UTC]` form common in
/// analytics exports. Naive timestamps are taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<i64> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.timestamp());
    }
    let s = s.strip_suffix(" UTC").unwrap_or(s);
    for fmt in ["%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc().timestamp());
        }
    }
    s.parse::<i64>().ok()
}

pub fn format_timestamp(ts: i64) -> String {
    DateTime::<Utc>::from_timestamp(ts, 0)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%SZ").to_string())
        .unwrap_or_default()
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io { path: path.to_path_buf(), source })
}

/// Yields `(line_no, line)` for non-blank lines.
fn numbered_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(i, line)| match line {
            Ok(l) if l.trim().is_empty() => None,
            Ok(l) => Some(Ok((i + 1, l))),
            Err(e) => Some(Err(IngestError::Read(e))),
        })
}

// ---------------------------------------------------------------------------
// transactions

/// Streaming reader over `transactions.jsonl`. Duplicate hashes are detected
/// across the whole stream.
pub struct TransactionReader {
    lines: Box<dyn Iterator<Item = Result<(usize, String)>>>,
    chain: Chain,
    seen: HashMap<TxHash, usize>,
}

impl TransactionReader {
    pub fn new<R: BufRead + 'static>(reader: R, chain: Chain) -> Self {
        Self { lines: Box::new(numbered_lines(reader)), chain, seen: HashMap::new() }
    }
}

impl Iterator for TransactionReader {
    type Item = Result<TransactionRecord>;

    fn next(&mut self) -> Option<Self::Item> {
        let (line_no, line) = match self.lines.next()? {
            Ok(l) => l,
            Err(e) => return Some(Err(e)),
        };
        let rec = match parse_transaction(line_no, &line, self.chain) {
            Ok(r) => r,
            Err(e) => return Some(Err(e)),
        };
        if let Some(first) = self.seen.insert(rec.hash, line_no) {
            return Some(Err(IngestError::Duplicate {
                what: "transaction hash",
                key: rec.hash.to_string(),
                first_line: first,
                second_line: line_no,
            }));
        }
        Some(Ok(rec))
    }
}

fn parse_transaction(line_no: usize, line: &str, chain: Chain) -> Result<TransactionRecord> {
    let row = parse_row(line_no, line)?;
    let hash = parse_hash(&required(&row, line_no, "hash")?, line_no, "hash")?;
    let from_addr = parse_addr(&required(&row, line_no, "from")?, line_no, "from")?;
    let to_addr = optional(&row, "to").map(|s| parse_addr(&s, line_no, "to")).transpose()?;
    let block_number = parse_u64(&required(&row, line_no, "block_number")?, line_no, "block_number")?;
    let time_text = required(&row, line_no, "block_time")?;
    let timestamp = parse_timestamp(&time_text)
        .ok_or_else(|| IngestError::field(line_no, "block_time", format!("unparseable `{time_text}`")))?;
    let gas_used = parse_u64(&required(&row, line_no, "gas_used")?, line_no, "gas_used")?;
    if gas_used == 0 {
        return Err(IngestError::field(line_no, "gas_used", "must be positive for an included transaction"));
    }
    let gas_price = parse_biguint(&required(&row, line_no, "gas_price")?, line_no, "gas_price")?;
    let calldata = match optional(&row, "calldata") {
        Some(s) => decode_hex(&s).map_err(|e| IngestError::field(line_no, "calldata", e.to_string()))?,
        None => Vec::new(),
    };
    let status = match required(&row, line_no, "status")?.as_str() {
        "1" | "true" => TxStatus::Success,
        "0" | "false" => TxStatus::Revert,
        other => return Err(IngestError::field(line_no, "status", format!("expected 0 or 1, got `{other}`"))),
    };
    if let Some(c) = optional(&row, "chain") {
        let parsed: Chain = c.parse().map_err(|e: String| IngestError::field(line_no, "chain", e))?;
        if parsed != chain {
            return Err(IngestError::field(line_no, "chain", format!("row is `{parsed}` but loading `{chain}`")));
        }
    }
    Ok(TransactionRecord {
        hash,
        from_addr,
        to_addr,
        block_number,
        timestamp,
        gas_used,
        gas_price,
        calldata,
        status,
        chain,
    })
}

/// Opens `transactions.jsonl` as a stream of records in file order.
pub fn stream_transactions(path: &Path, chain: Chain) -> Result<TransactionReader> {
    Ok(TransactionReader::new(open(path)?, chain))
}

pub fn load_transactions(path: &Path, chain: Chain) -> Result<Vec<TransactionRecord>> {
    stream_transactions(path, chain)?
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_file(path))
}

pub fn read_transactions<R: BufRead + 'static>(reader: R, chain: Chain) -> Result<Vec<TransactionRecord>> {
    TransactionReader::new(reader, chain).collect()
}

pub fn write_transactions<W: Write>(mut w: W, txs: &[TransactionRecord]) -> io::Result<()> {
    for tx in txs {
        let v = json!({
            "hash": tx.hash.to_string(),
            "from": tx.from_addr.to_string(),
            "to": tx.to_addr.map(|a| a.to_string()),
            "block_number": tx.block_number,
            "block_time": format_timestamp(tx.timestamp),
            "gas_used": tx.gas_used,
            "gas_price": tx.gas_price.to_string(),
            "calldata": encode_hex(&tx.calldata),
            "status": if tx.status == TxStatus::Success { 1 } else { 0 },
            "chain": tx.chain.as_str(),
        });
        writeln!(w, "{v}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// swaps

pub fn read_swaps<R: BufRead>(reader: R) -> Result<SwapIndex> {
    let mut seen: HashMap<(TxHash, u64), usize> = HashMap::new();
    let mut index = SwapIndex::new();
    for item in numbered_lines(reader) {
        let (line_no, line) = item?;
        let row = parse_row(line_no, &line)?;
        let tx_hash = parse_hash(&required(&row, line_no, "tx_hash")?, line_no, "tx_hash")?;
        let evt_index = parse_u64(&required(&row, line_no, "evt_index")?, line_no, "evt_index")?;
        let token_sold = parse_addr(&required(&row, line_no, "token_sold")?, line_no, "token_sold")?;
        let token_bought = parse_addr(&required(&row, line_no, "token_bought")?, line_no, "token_bought")?;
        let amount_sold = parse_biguint(&required(&row, line_no, "amount_sold")?, line_no, "amount_sold")?;
        let amount_bought = parse_biguint(&required(&row, line_no, "amount_bought")?, line_no, "amount_bought")?;
        if amount_sold.is_zero() {
            return Err(IngestError::field(line_no, "amount_sold", "must be positive"));
        }
        if amount_bought.is_zero() {
            return Err(IngestError::field(line_no, "amount_bought", "must be positive"));
        }
        if token_sold == token_bought {
            return Err(IngestError::field(line_no, "token_bought", "equals token_sold"));
        }
        if let Some(first) = seen.insert((tx_hash, evt_index), line_no) {
            return Err(IngestError::Duplicate {
                what: "swap (tx_hash, evt_index)",
                key: format!("({tx_hash}, {evt_index})"),
                first_line: first,
                second_line: line_no,
            });
        }
        index.entry(tx_hash).or_default().push(SwapEvent {
            tx_hash,
            token_sold,
            token_bought,
            amount_sold,
            amount_bought,
            evt_index,
        });
    }
    for group in index.values_mut() {
        group.sort_by_key(|s| s.evt_index);
    }
    Ok(index)
}

pub fn load_swaps(path: &Path) -> Result<SwapIndex> {
    read_swaps(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_swaps<W: Write>(mut w: W, swaps: &SwapIndex) -> io::Result<()> {
    for s in swaps.values().flatten() {
        let v = json!({
            "tx_hash": s.tx_hash.to_string(),
            "evt_index": s.evt_index,
            "token_sold": s.token_sold.to_string(),
            "token_bought": s.token_bought.to_string(),
            "amount_sold": s.amount_sold.to_string(),
            "amount_bought": s.amount_bought.to_string(),
        });
        writeln!(w, "{v}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// traces

pub fn read_traces<R: BufRead>(reader: R) -> Result<TraceIndex> {
    let mut seen: HashMap<(TxHash, u64), usize> = HashMap::new();
    let mut index = TraceIndex::new();
    for item in numbered_lines(reader) {
        let (line_no, line) = item?;
        let row = parse_row(line_no, &line)?;
        let tx_hash = parse_hash(&required(&row, line_no, "tx_hash")?, line_no, "tx_hash")?;
        let order = parse_u64(&required(&row, line_no, "order")?, line_no, "order")?;
        let ct = required(&row, line_no, "call_type")?;
        let call_type = CallType::parse(&ct)
            .ok_or_else(|| IngestError::field(line_no, "call_type", format!("unknown call type `{ct}`")))?;
        let callee = optional(&row, "to").map(|s| parse_addr(&s, line_no, "to")).transpose()?;
        let selector = match optional(&row, "input_selector") {
            Some(s) => decode_hex(&s).map_err(|e| IngestError::field(line_no, "input_selector", e.to_string()))?,
            None => Vec::new(),
        };
        if selector.len() > 4 {
            return Err(IngestError::field(line_no, "input_selector", "longer than 4 bytes"));
        }
        if let Some(first) = seen.insert((tx_hash, order), line_no) {
            return Err(IngestError::Duplicate {
                what: "trace (tx_hash, order)",
                key: format!("({tx_hash}, {order})"),
                first_line: first,
                second_line: line_no,
            });
        }
        index.entry(tx_hash).or_default().push(TraceCall {
            tx_hash,
            call_type,
            callee,
            selector,
            depth_order: order,
        });
    }
    for group in index.values_mut() {
        group.sort_by_key(|t| t.depth_order);
    }
    Ok(index)
}

pub fn load_traces(path: &Path) -> Result<TraceIndex> {
    read_traces(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_traces<W: Write>(mut w: W, traces: &TraceIndex) -> io::Result<()> {
    for t in traces.values().flatten() {
        let v = json!({
            "tx_hash": t.tx_hash.to_string(),
            "order": t.depth_order,
            "call_type": t.call_type.as_str(),
            "to": t.callee.map(|a| a.to_string()),
            "input_selector": encode_hex(&t.selector),
        });
        writeln!(w, "{v}")?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// labels

#[derive(Deserialize)]
struct LabelRow {
    address: String,
    kind: String,
    #[serde(default)]
    note: String,
}

fn csv_line(rec: &csv::StringRecord) -> usize {
    rec.position().map(|p| p.line() as usize).unwrap_or(0)
}

fn csv_error(e: csv::Error) -> IngestError {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    IngestError::Malformed { line, message: e.to_string() }
}

pub fn read_labels<R: io::Read>(reader: R) -> Result<LabelSet> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let mut labels = LabelSet::default();
    let mut seen: HashMap<(Address, LabelKind), usize> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = csv_line(&rec);
        let row: LabelRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| IngestError::Malformed { line, message: e.to_string() })?;
        let address = parse_addr(&row.address, line, "address")?;
        let kind = match row.kind.to_ascii_lowercase().as_str() {
            "router" => LabelKind::Router,
            "aggregator" => LabelKind::Aggregator,
            "pool" => LabelKind::Pool,
            "exclude" => LabelKind::Exclude,
            other => return Err(IngestError::field(line, "kind", format!("unknown label kind `{other}`"))),
        };
        if let Some(first) = seen.insert((address, kind), line) {
            return Err(IngestError::Duplicate {
                what: "label",
                key: format!("{address} {}", kind.as_str()),
                first_line: first,
                second_line: line,
            });
        }
        labels.insert(address, kind, row.note);
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<LabelSet> {
    read_labels(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_labels<W: Write>(w: W, labels: &LabelSet) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["address", "kind", "note"])?;
    let mut rows: Vec<(LabelKind, Address, &str)> = labels
        .notes
        .iter()
        .map(|((a, k), n)| (*k, *a, n.as_str()))
        .collect();
    rows.sort();
    for (kind, addr, note) in rows {
        wtr.write_record([addr.to_string().as_str(), kind.as_str(), note])?;
    }
    wtr.flush()
}

// ---------------------------------------------------------------------------
// OHLC

#[derive(Deserialize)]
struct OhlcRow {
    date: String,
    open: f64,
    high: f64,
    low: f64,
    close: f64,
}

pub fn read_ohlc<R: io::Read>(reader: R) -> Result<Vec<OhlcBar>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_error)?.clone();
    let mut bars: BTreeMap<NaiveDate, (usize, OhlcBar)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = csv_line(&rec);
        let row: OhlcRow = rec
            .deserialize(Some(&headers))
            .map_err(|e| IngestError::Malformed { line, message: e.to_string() })?;
        let day_text = row.date.get(..10).unwrap_or(&row.date);
        let date = NaiveDate::parse_from_str(day_text, "%Y-%m-%d")
            .map_err(|e| IngestError::field(line, "date", e.to_string()))?;
        let bar = OhlcBar { date, open: row.open, high: row.high, low: row.low, close: row.close };
        bar.validate().map_err(|m| IngestError::field(line, "high/low", m))?;
        match bars.entry(date) {
            Entry::Occupied(e) => {
                return Err(IngestError::Duplicate {
                    what: "OHLC date",
                    key: date.to_string(),
                    first_line: e.get().0,
                    second_line: line,
                })
            }
            Entry::Vacant(v) => {
                v.insert((line, bar));
            }
        }
    }
    Ok(bars.into_values().map(|(_, b)| b).collect())
}

pub fn load_ohlc(path: &Path) -> Result<Vec<OhlcBar>> {
    read_ohlc(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_ohlc<W: Write>(w: W, bars: &[OhlcBar]) -> io::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "open", "high", "low", "close"])?;
    for b in bars {
        wtr.write_record([
            b.date.to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
        ])?;
    }
    wtr.flush()
}

// ---------------------------------------------------------------------------
// bytecode

pub fn read_bytecode<R: BufRead>(reader: R) -> Result<Vec<ContractBytecode>> {
    let mut out: BTreeMap<Address, (usize, Vec<u8>)> = BTreeMap::new();
    for item in numbered_lines(reader) {
        let (line_no, line) = item?;
        let row = parse_row(line_no, &line)?;
        let address = parse_addr(&required(&row, line_no, "address")?, line_no, "address")?;
        let code = match optional(&row, "code") {
            Some(s) => decode_hex(&s).map_err(|e| IngestError::field(line_no, "code", e.to_string()))?,
            None => Vec::new(),
        };
        match out.entry(address) {
            Entry::Occupied(e) => {
                return Err(IngestError::Duplicate {
                    what: "bytecode address",
                    key: address.to_string(),
                    first_line: e.get().0,
                    second_line: line_no,
                })
            }
            Entry::Vacant(v) => {
                v.insert((line_no, code));
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|(address, (_, code))| ContractBytecode { address, code })
        .collect())
}

pub fn load_bytecode(path: &Path) -> Result<Vec<ContractBytecode>> {
    read_bytecode(open(path)?).map_err(|e| e.in_file(path))
}

pub fn write_bytecode<W: Write>(mut w: W, codes: &[ContractBytecode]) -> io::Result<()> {
    for c in codes {
        let v = json!({ "address": c.address.to_string(), "code": encode_hex(&c.code) });
        writeln!(w, "{v}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    const H1: &str = "0x1111111111111111111111111111111111111111111111111111111111111111";
    const H2: &str = "0x2222222222222222222222222222222222222222222222222222222222222222";
    const H3: &str = "0x3333333333333333333333333333333333333333333333333333333333333333";
    const A: &str = "0x00000000000000000000000000000000000000aa";
    const B: &str = "0x00000000000000000000000000000000000000bb";

    fn tx_line(hash: &str, status: &str, gas: &str) -> String {
        format!(
            r#"{{"hash":"{hash}","from":"{A}","to":"{B}","block_number":7,"block_time":"2024-03-13 10:00:00.000 UTC","gas_used":{gas},"gas_price":"1000","calldata":"0xdeadbeef","status":{status},"chain":"base"}}"#
        )
    }

    fn txs(text: String) -> Result<Vec<TransactionRecord>> {
        read_transactions(Cursor::new(text.into_bytes()), Chain::Base)
    }

    #[test]
    fn three_rows_in_order() {
        let text = [tx_line(H1, "1", "21000"), tx_line(H2, "0", "50000"), tx_line(H3, "\"1\"", "\"9\"")].join("\n");
        let recs = txs(text).unwrap();
        assert_eq!(recs.len(), 3);
        assert_eq!(recs[0].hash.to_string(), H1);
        assert_eq!(recs[2].hash.to_string(), H3);
        assert_eq!(recs[0].status, TxStatus::Success);
        assert_eq!(recs[1].status, TxStatus::Revert);
        assert_eq!(recs[2].gas_used, 9);
        assert_eq!(recs[0].chain, Chain::Base);
        assert_eq!(recs[0].date(), NaiveDate::from_ymd_opt(2024, 3, 13).unwrap());
        assert_eq!(recs[0].calldata, vec![0xde, 0xad, 0xbe, 0xef]);
    }

    #[test]
    fn zero_gas_rejected_with_field() {
        let err = txs(tx_line(H1, "1", "0")).unwrap_err();
        match err {
            IngestError::Field { line, field, .. } => {
                assert_eq!(line, 1);
                assert_eq!(field, "gas_used");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_hash_reports_both_lines() {
        let text = [tx_line(H1, "1", "1"), String::new(), tx_line(H1, "1", "2")].join("\n");
        match txs(text).unwrap_err() {
            IngestError::Duplicate { first_line, second_line, .. } => {
                assert_eq!((first_line, second_line), (1, 3));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn chain_mismatch_and_bad_status() {
        let line = tx_line(H1, "1", "1").replace("\"base\"", "\"optimism\"");
        assert!(matches!(txs(line), Err(IngestError::Field { field: "chain", .. })));
        let line = tx_line(H1, "2", "1");
        assert!(matches!(txs(line), Err(IngestError::Field { field: "status", .. })));
        assert!(matches!(txs("{not json".into()), Err(IngestError::Malformed { line: 1, .. })));
    }

    #[test]
    fn creation_has_no_callee() {
        let line = tx_line(H1, "1", "5").replace(&format!("\"to\":\"{B}\""), "\"to\":null");
        assert_eq!(txs(line).unwrap()[0].to_addr, None);
    }

    fn swap_line(hash: &str, idx: u64, sold: &str, bought: &str, amt: &str) -> String {
        format!(
            r#"{{"tx_hash":"{hash}","evt_index":{idx},"token_sold":"{sold}","token_bought":"{bought}","amount_sold":"{amt}","amount_bought":"7"}}"#
        )
    }

    #[test]
    fn swaps_grouped_by_tx() {
        let text = [swap_line(H1, 9, A, B, "1"), swap_line(H1, 5, B, A, "1")].join("\n");
        let idx = read_swaps(Cursor::new(text)).unwrap();
        assert_eq!(idx.len(), 1);
        let g = &idx[&H1.parse().unwrap()];
        assert_eq!(g.iter().map(|s| s.evt_index).collect::<Vec<_>>(), vec![5, 9]);

        let text = [swap_line(H1, 1, A, B, "1"), swap_line(H2, 1, A, B, "1")].join("\n");
        assert_eq!(read_swaps(Cursor::new(text)).unwrap().len(), 2);
    }

    #[test]
    fn swap_invariants_enforced() {
        let dup = [swap_line(H1, 3, A, B, "1"), swap_line(H1, 3, B, A, "1")].join("\n");
        assert!(matches!(read_swaps(Cursor::new(dup)), Err(IngestError::Duplicate { .. })));
        let zero = swap_line(H1, 3, A, B, "0");
        assert!(matches!(read_swaps(Cursor::new(zero)), Err(IngestError::Field { field: "amount_sold", .. })));
        let selfswap = swap_line(H1, 3, A, A, "4");
        assert!(read_swaps(Cursor::new(selfswap)).is_err());
    }

    #[test]
    fn ohlc_validation() {
        let ok = "date,open,high,low,close\n2024-03-13,100,100,100,100\n";
        assert_eq!(read_ohlc(Cursor::new(ok)).unwrap().len(), 1);
        let bad = "date,open,high,low,close\n2024-03-13,100,90,80,85\n";
        match read_ohlc(Cursor::new(bad)).unwrap_err() {
            IngestError::Field { line, .. } => assert_eq!(line, 2),
            e => panic!("unexpected {e}"),
        }
        let nonpos = "date,open,high,low,close\n2024-03-13,1,1,0,1\n";
        assert!(read_ohlc(Cursor::new(nonpos)).is_err());
    }

    #[test]
    fn empty_bytecode_flagged() {
        let text = format!("{{\"address\":\"{A}\",\"code\":\"0x\"}}\n{{\"address\":\"{B}\",\"code\":\"0x6001\"}}");
        let codes = read_bytecode(Cursor::new(text)).unwrap();
        assert!(codes[0].is_empty());
        assert!(!codes[1].is_empty());
    }

    #[test]
    fn labels_parse_and_reject_unknown_kind() {
        let text = format!("address,kind,note\n{A},router,uni\n{B},exclude,\n{B},pool,v2\n");
        let labels = read_labels(Cursor::new(text)).unwrap();
        assert!(labels.routers.contains(&A.parse().unwrap()));
        assert!(labels.dex_pools.contains(&B.parse().unwrap()));
        assert_eq!(labels.exclusion_labels[&B.parse::<Address>().unwrap()], "excluded");
        let bad = format!("address,kind,note\n{A},vault,\n");
        assert!(matches!(read_labels(Cursor::new(bad)), Err(IngestError::Field { field: "kind", .. })));
    }

    #[test]
    fn traces_sorted_and_selector_bounded() {
        let text = format!(
            "{{\"tx_hash\":\"{H1}\",\"order\":2,\"call_type\":\"staticcall\",\"to\":\"{A}\",\"input_selector\":\"0x0902f1ac\"}}\n\
             {{\"tx_hash\":\"{H1}\",\"order\":1,\"call_type\":\"CALL\",\"to\":\"{B}\",\"input_selector\":\"0x\"}}"
        );
        let idx = read_traces(Cursor::new(text)).unwrap();
        let g = &idx[&H1.parse().unwrap()];
        assert_eq!(g[0].depth_order, 1);
        assert_eq!(g[1].call_type, CallType::StaticCall);
        let long = format!(
            "{{\"tx_hash\":\"{H1}\",\"order\":1,\"call_type\":\"call\",\"to\":\"{B}\",\"input_selector\":\"0x0102030405\"}}"
        );
        assert!(read_traces(Cursor::new(long)).is_err());
    }

    #[test]
    fn timestamp_formats() {
        let want = 1_710_324_000;
        assert_eq!(parse_timestamp("2024-03-13T10:00:00Z"), Some(want));
        assert_eq!(parse_timestamp("2024-03-13 10:00:00.000 UTC"), Some(want));
        assert_eq!(parse_timestamp("2024-03-13 10:00:00"), Some(want));
        assert_eq!(format_timestamp(want), "2024-03-13T10:00:00Z");
    }
}
