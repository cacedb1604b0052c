//! Stage runners over a [`Config`].
//!
//! Every stage writes its artifacts under `<output_dir>/<chain>/` and reads
//! earlier stages' artifacts from the same place, so any stage can be rerun
//! alone. [`run_pipeline`] chains them without the round trip through disk.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::classifier::{self, ClassifiedTx};
use crate::config::{ChainInputs, Config};
use crate::detector::{self, CandidateSet};
use crate::ingest::{self, LabelSet, SwapIndex, TraceIndex, TransactionRecord};
use crate::metrics;
use crate::similarity;
use crate::stats::{self, RegressionEntry};
use crate::types::{Address, Chain};
use crate::validator::{self, ValidationInputs, ValidationOutcome};

pub const CANDIDATES: &str = "candidates.json";
pub const VALIDATION_REPORT: &str = "validation_report.csv";
pub const BOTS: &str = "bots.json";
pub const CLASSIFIED: &str = "classified.jsonl";
pub const METRICS_DIR: &str = "metrics";
pub const SIMILARITY_MATRIX: &str = "similarity_matrix.csv";
pub const CLONE_CLUSTERS: &str = "clone_clusters.json";
pub const REGRESSION_RESULTS: &str = "regression_results.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Detect,
    Validate,
    Classify,
    Metrics,
    Similarity,
    Regress,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Detect, Stage::Validate, Stage::Classify, Stage::Metrics, Stage::Similarity, Stage::Regress];

    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::Detect => "detect",
            Stage::Validate => "validate",
            Stage::Classify => "classify",
            Stage::Metrics => "metrics",
            Stage::Similarity => "similarity",
            Stage::Regress => "regress",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("missing input: {}", path.display())]
    MissingInput { path: PathBuf },
    #[error("{what} not configured for {chain}")]
    NotConfigured { what: &'static str, chain: Chain },
    #[error("{stage} failed for {chain}: {source}")]
    Stage { stage: Stage, chain: Chain, source: BoxError },
}

impl PipelineError {
    /// Missing or unconfigured inputs, as opposed to failures while running.
    pub fn is_missing_input(&self) -> bool {
        matches!(self, PipelineError::MissingInput { .. } | PipelineError::NotConfigured { .. })
    }
}

type Result<T, E = PipelineError> = std::result::Result<T, E>;

struct Ctx {
    stage: Stage,
    chain: Chain,
}

impl Ctx {
    fn err(&self, e: impl Into<BoxError>) -> PipelineError {
        PipelineError::Stage { stage: self.stage, chain: self.chain, source: e.into() }
    }

    fn write(&self, path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| self.err(e))?;
        }
        let file = File::create(path).map_err(|e| self.err(format!("{}: {e}", path.display())))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| self.err(format!("{}: {e}", path.display())))
    }

    fn open(&self, path: &Path) -> Result<BufReader<File>> {
        require(path)?;
        File::open(path).map(BufReader::new).map_err(|e| self.err(format!("{}: {e}", path.display())))
    }
}

fn require(path: &Path) -> Result<&Path> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(PipelineError::MissingInput { path: path.to_path_buf() })
    }
}

/// Raw inputs for one chain, loaded once.
#[derive(Debug, Clone)]
pub struct ChainData {
    pub chain: Chain,
    pub txs: Vec<TransactionRecord>,
    pub swaps: SwapIndex,
    pub traces: TraceIndex,
    pub labels: LabelSet,
}

fn load_chain(inputs: &ChainInputs, stage: Stage, need_traces: bool) -> Result<ChainData> {
    let ctx = Ctx { stage, chain: inputs.id };
    for p in [&inputs.transactions, &inputs.swaps, &inputs.labels] {
        require(p)?;
    }
    if need_traces {
        require(&inputs.traces)?;
    }
    let txs = ingest::load_transactions(&inputs.transactions, inputs.id).map_err(|e| ctx.err(e))?;
    let swaps = ingest::load_swaps(&inputs.swaps).map_err(|e| ctx.err(e))?;
    let traces = if need_traces {
        ingest::load_traces(&inputs.traces).map_err(|e| ctx.err(e))?
    } else {
        TraceIndex::new()
    };
    let labels = ingest::load_labels(&inputs.labels).map_err(|e| ctx.err(e))?;
    log::info!("{}: loaded {} transactions, {} swap groups", inputs.id, txs.len(), swaps.len());
    Ok(ChainData { chain: inputs.id, txs, swaps, traces, labels })
}

pub fn detect(cfg: &Config, data: &ChainData) -> Result<CandidateSet> {
    let ctx = Ctx { stage: Stage::Detect, chain: data.chain };
    let set = detector::detect_candidates(&data.txs, &data.swaps, &data.labels, &cfg.thresholds.detector());
    let c = set.counts;
    log::info!(
        "{}: {} trading txs, {} after router filter, {} cyclic, {} profitable; {} candidates",
        data.chain,
        c.trading,
        c.after_router_filter,
        c.after_cyclic_filter,
        c.after_profit_filter,
        set.contracts.len()
    );
    ctx.write(&cfg.chain_dir(data.chain).join(CANDIDATES), |w| detector::write_candidates(w, &set))?;
    Ok(set)
}

pub fn validate(cfg: &Config, data: &ChainData, candidates: &BTreeSet<Address>) -> Result<ValidationOutcome> {
    let ctx = Ctx { stage: Stage::Validate, chain: data.chain };
    let inputs = ValidationInputs {
        txs: &data.txs,
        traces: &data.traces,
        swaps: &data.swaps,
        pools: &data.labels.dex_pools,
        exclusions: &data.labels.exclusion_labels,
    };
    let outcome = validator::validate(candidates, &inputs, &cfg.thresholds.validator());
    log::info!("{}: {} bots, validated gas coverage {:.4}", data.chain, outcome.bots.len(), outcome.coverage);
    let dir = cfg.chain_dir(data.chain);
    ctx.write(&dir.join(VALIDATION_REPORT), |w| validator::write_report(w, &outcome))?;
    ctx.write(&dir.join(BOTS), |w| validator::write_bots(w, &outcome.bots))?;
    Ok(outcome)
}

pub fn classify(cfg: &Config, data: &ChainData, bots: &BTreeSet<Address>) -> Result<Vec<ClassifiedTx>> {
    let ctx = Ctx { stage: Stage::Classify, chain: data.chain };
    let c = classifier::classify_all(&data.txs, &data.swaps, &data.traces, &data.labels.dex_pools, bots)
        .map_err(|e| ctx.err(e))?;
    ctx.write(&cfg.chain_dir(data.chain).join(CLASSIFIED), |w| classifier::write_classified(w, &c.txs))?;
    Ok(c.txs)
}

pub fn metrics(cfg: &Config, data: &ChainData, bots: &BTreeSet<Address>, classified: &[ClassifiedTx]) -> Result<()> {
    let ctx = Ctx { stage: Stage::Metrics, chain: data.chain };
    let dir = cfg.chain_dir(data.chain).join(METRICS_DIR);
    let days = metrics::aggregate_daily(classified, &data.txs).map_err(|e| ctx.err(e))?;
    ctx.write(&dir.join("daily_gas.csv"), |w| metrics::write_daily_gas(w, &days))?;
    ctx.write(&dir.join("daily_shares.csv"), |w| metrics::write_daily_shares(w, &days))?;
    ctx.write(&dir.join("period_shares.csv"), |w| metrics::write_period_shares(w, &days))?;
    ctx.write(&dir.join("gas_price_stats.csv"), |w| metrics::write_gas_price_stats(w, &days))?;

    let (growth, skipped) = metrics::normalized_growth(&days, cfg.event_date);
    for (chain, cat, e) in skipped {
        log::warn!("{chain}: growth series {} not normalized: {e}", cat.name());
    }
    ctx.write(&dir.join("normalized_growth.csv"), |w| metrics::write_normalized_growth(w, &growth))?;

    let outcome = match metrics::outcome_distribution(classified) {
        Ok(d) => vec![(data.chain, d)],
        Err(e) => {
            log::warn!("{}: outcome distribution skipped: {e}", data.chain);
            Vec::new()
        }
    };
    ctx.write(&dir.join("outcome_distribution.csv"), |w| metrics::write_outcome_distribution(w, &outcome))?;

    let table = metrics::bot_stats_table(bots, &data.txs, &data.swaps);
    ctx.write(&dir.join("bot_stats.csv"), |w| metrics::write_bot_stats(w, data.chain, &table))?;

    let reverts = metrics::revert_share(classified, &data.txs).map_err(|e| ctx.err(e))?;
    ctx.write(&dir.join("revert_share.csv"), |w| metrics::write_revert_share(w, &reverts))?;

    let screen = metrics::single_swap_screen(classified, &data.txs, &data.swaps).map_err(|e| ctx.err(e))?;
    ctx.write(&dir.join("single_swap_screen.csv"), |w| metrics::write_single_swap_screen(w, &screen))?;
    Ok(())
}

pub fn similarity(cfg: &Config, inputs: &ChainInputs, bots: &BTreeSet<Address>) -> Result<()> {
    let ctx = Ctx { stage: Stage::Similarity, chain: inputs.id };
    let path = inputs
        .bytecode
        .as_deref()
        .ok_or(PipelineError::NotConfigured { what: "bytecode", chain: inputs.id })?;
    let codes = ingest::load_bytecode(require(path)?).map_err(|e| ctx.err(e))?;
    let bot_codes: Vec<_> = codes.iter().filter(|c| bots.contains(&c.address)).cloned().collect();
    let missing = bots.len() - bot_codes.len();
    if missing > 0 {
        log::warn!("{}: {missing} bots have no bytecode entry", inputs.id);
    }
    let n = cfg.thresholds.ngram;
    let matrix = similarity::similarity_matrix(&bot_codes, n);
    let clusters = similarity::clone_clusters(&codes);
    let dir = cfg.chain_dir(inputs.id);
    ctx.write(&dir.join(SIMILARITY_MATRIX), |w| similarity::write_matrix(w, &matrix))?;
    ctx.write(&dir.join(CLONE_CLUSTERS), |w| similarity::write_clusters(w, &clusters))?;
    Ok(())
}

pub fn regress(cfg: &Config, data: &ChainData, inputs: &ChainInputs, classified: &[ClassifiedTx]) -> Result<()> {
    let ctx = Ctx { stage: Stage::Regress, chain: data.chain };
    let path = cfg.ohlc_for(inputs).ok_or(PipelineError::NotConfigured { what: "ohlc", chain: data.chain })?;
    let bars = ingest::load_ohlc(require(path)?).map_err(|e| ctx.err(e))?;
    let counts = metrics::daily_counts(classified, &data.txs, &data.labels).map_err(|e| ctx.err(e))?;
    let entries: Vec<RegressionEntry> = match stats::build_frame(&counts, &bars, cfg.thresholds.allow_date_gaps) {
        Ok(frame) => {
            if frame.gaps_skipped > 0 {
                log::warn!("{}: {} differences across date gaps dropped", data.chain, frame.gaps_skipped);
            }
            stats::run_regressions(data.chain, &frame)
        }
        Err(e) => stats::DEPENDENTS.iter().map(|d| RegressionEntry::skipped(data.chain, d, &e)).collect(),
    };
    for e in entries.iter().filter(|e| e.reason.is_some()) {
        log::warn!("{}: regression of {} skipped: {}", data.chain, e.dependent, e.reason.as_deref().unwrap_or(""));
    }
    ctx.write(&cfg.chain_dir(data.chain).join(REGRESSION_RESULTS), |w| stats::write_results(w, &entries))
}

fn read_candidate_set(cfg: &Config, chain: Chain) -> Result<BTreeSet<Address>> {
    let ctx = Ctx { stage: Stage::Validate, chain };
    let r = ctx.open(&cfg.chain_dir(chain).join(CANDIDATES))?;
    let rows = detector::read_candidates(r).map_err(|e| ctx.err(e))?;
    Ok(rows.into_iter().map(|s| s.address).collect())
}

fn read_bot_set(cfg: &Config, chain: Chain, stage: Stage) -> Result<BTreeSet<Address>> {
    let ctx = Ctx { stage, chain };
    let r = ctx.open(&cfg.chain_dir(chain).join(BOTS))?;
    validator::read_bots(r).map_err(|e| ctx.err(e))
}

fn read_classified_txs(cfg: &Config, chain: Chain, stage: Stage) -> Result<Vec<ClassifiedTx>> {
    let ctx = Ctx { stage, chain };
    let r = ctx.open(&cfg.chain_dir(chain).join(CLASSIFIED))?;
    classifier::read_classified(r).map_err(|e| ctx.err(e))
}

/// Runs one stage for every configured chain from on-disk inputs.
pub fn run_stage(cfg: &Config, stage: Stage) -> Result<()> {
    for inputs in &cfg.chains {
        let chain = inputs.id;
        match stage {
            Stage::Detect => {
                detect(cfg, &load_chain(inputs, stage, false)?)?;
            }
            Stage::Validate => {
                let candidates = read_candidate_set(cfg, chain)?;
                validate(cfg, &load_chain(inputs, stage, true)?, &candidates)?;
            }
            Stage::Classify => {
                let bots = read_bot_set(cfg, chain, stage)?;
                classify(cfg, &load_chain(inputs, stage, true)?, &bots)?;
            }
            Stage::Metrics => {
                let bots = read_bot_set(cfg, chain, stage)?;
                let classified = read_classified_txs(cfg, chain, stage)?;
                metrics(cfg, &load_chain(inputs, stage, false)?, &bots, &classified)?;
            }
            Stage::Similarity => {
                let bots = read_bot_set(cfg, chain, stage)?;
                similarity(cfg, inputs, &bots)?;
            }
            Stage::Regress => {
                let classified = read_classified_txs(cfg, chain, stage)?;
                regress(cfg, &load_chain(inputs, stage, false)?, inputs, &classified)?;
            }
        }
    }
    Ok(())
}

/// Runs every stage for every chain. Similarity and regression are skipped
/// for chains without bytecode or OHLC inputs configured.
pub fn run_pipeline(cfg: &Config) -> Result<()> {
    for inputs in &cfg.chains {
        let data = load_chain(inputs, Stage::Detect, true)?;
        let candidates = detect(cfg, &data)?;
        let outcome = validate(cfg, &data, &candidates.contracts)?;
        let classified = classify(cfg, &data, &outcome.bots)?;
        metrics(cfg, &data, &outcome.bots, &classified)?;
        match similarity(cfg, inputs, &outcome.bots) {
            Err(PipelineError::NotConfigured { what, chain }) => log::info!("{chain}: no {what}; similarity skipped"),
            other => other?,
        }
        match regress(cfg, &data, inputs, &classified) {
            Err(PipelineError::NotConfigured { what, chain }) => log::info!("{chain}: no {what}; regression skipped"),
            other => other?,
        }
    }
    Ok(())
}
