//! Daily regression: volatility estimate, first differences, frame
//! construction and OLS with heteroskedasticity-robust (HC1) errors.

use std::io::{self, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, Normal};

use crate::ingest::OhlcBar;
use crate::metrics::DailyCounts;
use crate::types::Chain;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("series not sorted by date at {0}")]
    Unsorted(NaiveDate),
    #[error("date gap between {prev} and {next}")]
    DateGap { prev: NaiveDate, next: NaiveDate },
    #[error("no OHLC bar for {0}")]
    MissingOhlc(NaiveDate),
    #[error("no retail trades on {0}; aggregator fraction undefined")]
    NoRetailTrades(NaiveDate),
    #[error("design has {rows} rows for {cols} columns; need at least {}", cols + 1)]
    TooFewRows { rows: usize, cols: usize },
    #[error("response length {y} does not match design rows {rows}")]
    LengthMismatch { y: usize, rows: usize },
    #[error("design matrix is rank deficient: column `{column}` is collinear with earlier columns")]
    RankDeficient { column: String },
    #[error("non-finite value in column `{0}`")]
    NonFinite(String),
}

/// `0.5 ln(H/L)^2 - (2 ln 2 - 1) ln(C/O)^2`; non-negative for any valid bar.
pub fn garman_klass_radicand(bar: &OhlcBar) -> f64 {
    let hl = (bar.high / bar.low).ln();
    let co = (bar.close / bar.open).ln();
    0.5 * hl * hl - (2.0 * std::f64::consts::LN_2 - 1.0) * co * co
}

/// Garman-Klass intraday volatility. The radicand is clamped at zero against
/// rounding.
pub fn garman_klass(bar: &OhlcBar) -> f64 {
    garman_klass_radicand(bar).max(0.0).sqrt()
}

pub type Series = Vec<(NaiveDate, f64)>;

/// `x_t - x_{t-1}` dated at `t`. With `allow_gaps`, differences across a
/// missing date are dropped and counted instead of failing.
pub fn first_difference(series: &[(NaiveDate, f64)], allow_gaps: bool) -> Result<(Series, usize), StatsError> {
    let mut out = Vec::with_capacity(series.len().saturating_sub(1));
    let mut skipped = 0;
    for w in series.windows(2) {
        let ((d0, x0), (d1, x1)) = (w[0], w[1]);
        if d1 <= d0 {
            return Err(StatsError::Unsorted(d1));
        }
        if d0.succ_opt() != Some(d1) {
            if allow_gaps {
                skipped += 1;
                continue;
            }
            return Err(StatsError::DateGap { prev: d0, next: d1 });
        }
        out.push((d1, x1 - x0));
    }
    Ok((out, skipped))
}

pub const DEPENDENTS: [&str; 2] = ["d_cyclic_arb_tx", "d_cyclic_arb_tx_w_trade"];
pub const REGRESSORS: [&str; 4] = ["d_price", "d_volatility", "d_retail_txs", "d_retail_agg_frac"];

/// Differenced daily series, all on the same date index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFrame {
    pub dates: Vec<NaiveDate>,
    pub d_cyclic_arb_tx: Vec<f64>,
    pub d_cyclic_arb_tx_w_trade: Vec<f64>,
    pub d_price: Vec<f64>,
    pub d_volatility: Vec<f64>,
    pub d_retail_txs: Vec<f64>,
    pub d_retail_agg_frac: Vec<f64>,
    pub gaps_skipped: usize,
}

impl RegressionFrame {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dependent(&self, name: &str) -> Option<&[f64]> {
        match name {
            "d_cyclic_arb_tx" => Some(&self.d_cyclic_arb_tx),
            "d_cyclic_arb_tx_w_trade" => Some(&self.d_cyclic_arb_tx_w_trade),
            _ => None,
        }
    }

    pub fn design(&self) -> DesignMatrix {
        DesignMatrix::with_intercept(vec![
            ("d_price".into(), self.d_price.clone()),
            ("d_volatility".into(), self.d_volatility.clone()),
            ("d_retail_txs".into(), self.d_retail_txs.clone()),
            ("d_retail_agg_frac".into(), self.d_retail_agg_frac.clone()),
        ])
    }
}

/// Builds the frame for one chain. Price is the daily close.
pub fn build_frame(counts: &[DailyCounts], ohlc: &[OhlcBar], allow_gaps: bool) -> Result<RegressionFrame, StatsError> {
    let mut rows = Vec::with_capacity(counts.len());
    for c in counts {
        let bar = ohlc.iter().find(|b| b.date == c.date).ok_or(StatsError::MissingOhlc(c.date))?;
        if c.retail_trades == 0 {
            return Err(StatsError::NoRetailTrades(c.date));
        }
        rows.push((
            c.date,
            [
                c.cyclic_arb_txs as f64,
                c.cyclic_arb_trades as f64,
                bar.close,
                garman_klass(bar),
                c.retail_trades as f64,
                c.retail_aggregator_trades as f64 / c.retail_trades as f64,
            ],
        ));
    }
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(6);
    let mut dates = Vec::new();
    let mut gaps_skipped = 0;
    for k in 0..6 {
        let series: Series = rows.iter().map(|(d, v)| (*d, v[k])).collect();
        let (diff, skipped) = first_difference(&series, allow_gaps)?;
        if k == 0 {
            dates = diff.iter().map(|(d, _)| *d).collect();
            gaps_skipped = skipped;
        }
        cols.push(diff.into_iter().map(|(_, v)| v).collect());
    }
    let mut it = cols.into_iter();
    let mut next = || it.next().unwrap();
    Ok(RegressionFrame {
        dates,
        d_cyclic_arb_tx: next(),
        d_cyclic_arb_tx_w_trade: next(),
        d_price: next(),
        d_volatility: next(),
        d_retail_txs: next(),
        d_retail_agg_frac: next(),
        gaps_skipped,
    })
}

/// Column-major design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    /// Whether column 0 is the intercept; it is then left out of the F test.
    pub intercept: bool,
}

impl DesignMatrix {
    pub fn with_intercept(regressors: Vec<(String, Vec<f64>)>) -> DesignMatrix {
        let n = regressors.first().map_or(0, |r| r.1.len());
        let mut names = vec!["intercept".to_string()];
        let mut columns = vec![vec![1.0; n]];
        for (name, col) in regressors {
            names.push(name);
            columns.push(col);
        }
        DesignMatrix { names, columns, intercept: true }
    }

    pub fn rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn cols(&self) -> usize {
        self.columns.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.columns[j][i]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub robust_se: f64,
    pub t_stat: f64,
    pub p_value: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub coefficients: Vec<Coefficient>,
    pub residuals: Vec<f64>,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    /// Robust Wald F for all slopes jointly. `None` when the robust
    /// covariance of the slopes is singular.
    pub f_stat: Option<f64>,
    pub f_p_value: Option<f64>,
    /// Homoskedastic F from R². `None` when R² rounds to 1.
    pub f_stat_classical: Option<f64>,
    pub obs: usize,
}

impl OlsFit {
    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn robust_se(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.robust_se).collect()
    }
}

pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Relative threshold on the QR diagonal below which a column counts as
/// linearly dependent on those before it.
const RANK_TOL: f64 = 1e-10;

/// Least squares via Householder QR.
#[allow(clippy::needless_range_loop)]
pub fn ols_fit(y: &[f64], x: &DesignMatrix) -> Result<OlsFit, StatsError> {
    let (n, k) = (x.rows(), x.cols());
    if y.len() != n {
        return Err(StatsError::LengthMismatch { y: y.len(), rows: n });
    }
    if n < k + 1 {
        return Err(StatsError::TooFewRows { rows: n, cols: k });
    }
    for (name, col) in x.names.iter().zip(&x.columns) {
        if col.len() != n || col.iter().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite(name.clone()));
        }
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite("response".into()));
    }

    // a holds R in its upper triangle after the loop; qty holds Q^T y.
    let mut a = x.columns.clone();
    let mut qty = y.to_vec();
    for j in 0..k {
        let col_norm = x.columns[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm = a[j][j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm <= RANK_TOL * col_norm || col_norm == 0.0 {
            return Err(StatsError::RankDeficient { column: x.names[j].clone() });
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm_sq: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(a, b)| a * b).sum();
            let f = 2.0 * dot / vnorm_sq;
            for (c, vi) in col.iter_mut().zip(&v) {
                *c -= f * vi;
            }
        };
        for col in a.iter_mut().skip(j) {
            reflect(&mut col[j..]);
        }
        reflect(&mut qty[j..]);
        a[j][j] = alpha;
        for r in a[j].iter_mut().skip(j + 1) {
            *r = 0.0;
        }
    }
    let r = |i: usize, j: usize| a[j][i];

    let mut beta = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| r(i, j) * beta[j]).sum();
        beta[i] = (qty[i] - s) / r(i, i);
    }

    let residuals: Vec<f64> = (0..n)
        .map(|i| y[i] - (0..k).map(|j| x.get(i, j) * beta[j]).sum::<f64>())
        .collect();

    // R^{-1}, upper triangular.
    let mut rinv = vec![vec![0.0; k]; k];
    for c in 0..k {
        for i in (0..=c).rev() {
            let rhs = if i == c { 1.0 } else { 0.0 };
            let s: f64 = (i + 1..=c).map(|j| r(i, j) * rinv[j][c]).sum();
            rinv[i][c] = (rhs - s) / r(i, i);
        }
    }
    // Thin Q = X R^{-1}; robust covariance = c * R^{-1} (Q^T diag(e^2) Q) R^{-T}.
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..k).map(|c| (0..=c).map(|j| x.get(i, j) * rinv[j][c]).sum()).collect())
        .collect();
    let mut meat = vec![vec![0.0; k]; k];
    for (qi, e) in q.iter().zip(&residuals) {
        let w = e * e;
        for p in 0..k {
            for s in p..k {
                meat[p][s] += w * qi[p] * qi[s];
            }
        }
    }
    for p in 0..k {
        for s in 0..p {
            meat[p][s] = meat[s][p];
        }
    }
    let scale = n as f64 / (n - k) as f64;
    let mut cov = vec![vec![0.0; k]; k];
    for p in 0..k {
        for s in 0..k {
            let mut acc = 0.0;
            for u in p..k {
                for v in s..k {
                    acc += rinv[p][u] * meat[u][v] * rinv[s][v];
                }
            }
            cov[p][s] = scale * acc;
        }
    }
    for p in 0..k {
        for s in 0..p {
            let m = 0.5 * (cov[p][s] + cov[s][p]);
            cov[p][s] = m;
            cov[s][p] = m;
        }
    }

    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let center = if x.intercept { y.iter().sum::<f64>() / n as f64 } else { 0.0 };
    let sst: f64 = y.iter().map(|v| (v - center).powi(2)).sum();
    let r_squared = if sst == 0.0 {
        if ssr == 0.0 { 1.0 } else { 0.0 }
    } else {
        1.0 - ssr / sst
    };
    let dof = (n - k) as f64;
    let adj_r_squared = 1.0 - (1.0 - r_squared) * (n as f64 - if x.intercept { 1.0 } else { 0.0 }) / dof;

    let normal = Normal::standard();
    let coefficients = (0..k)
        .map(|j| {
            let se = cov[j][j].max(0.0).sqrt();
            let t_stat = beta[j] / se;
            let p_value = if t_stat.is_finite() { 2.0 * (1.0 - normal.cdf(t_stat.abs())) } else { 0.0 };
            Coefficient {
                name: x.names[j].clone(),
                estimate: beta[j],
                robust_se: se,
                t_stat,
                p_value,
                stars: stars(p_value).to_string(),
            }
        })
        .collect();

    let first = usize::from(x.intercept);
    let q_df = k - first;
    let (f_stat, f_p_value, f_stat_classical) = if q_df == 0 {
        (None, None, None)
    } else {
        let sub: Vec<Vec<f64>> = (first..k).map(|p| (first..k).map(|s| cov[p][s]).collect()).collect();
        let b: Vec<f64> = beta[first..].to_vec();
        let wald = solve_spd(&sub, &b).map(|z| b.iter().zip(&z).map(|(a, c)| a * c).sum::<f64>() / q_df as f64);
        let p = wald.and_then(|f| {
            FisherSnedecor::new(q_df as f64, dof).ok().map(|d| 1.0 - d.cdf(f))
        });
        let classical = (r_squared < 1.0).then(|| (r_squared / q_df as f64) / ((1.0 - r_squared) / dof));
        (wald, p, classical)
    };

    Ok(OlsFit {
        coefficients,
        residuals,
        r_squared,
        adj_r_squared,
        f_stat,
        f_p_value,
        f_stat_classical,
        obs: n,
    })
}

/// Solves `m z = b` for symmetric positive definite `m` by Cholesky.
fn solve_spd(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let k = b.len();
    let scale = (0..k).map(|i| m[i][i].abs()).fold(0.0, f64::max);
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let d = m[i][i] - s;
                if d.is_nan() || d <= RANK_TOL * scale {
                    return None;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    let mut z = vec![0.0; k];
    for i in 0..k {
        z[i] = (b[i] - (0..i).map(|p| l[i][p] * z[p]).sum::<f64>()) / l[i][i];
    }
    for i in (0..k).rev() {
        z[i] = (z[i] - (i + 1..k).map(|p| l[p][i] * z[p]).sum::<f64>()) / l[i][i];
    }
    Some(z)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitStatus {
    Ok,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionEntry {
    pub chain: Chain,
    pub dependent: String,
    pub status: FitStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<OlsFit>,
}

impl RegressionEntry {
    pub fn skipped(chain: Chain, dependent: &str, reason: impl ToString) -> RegressionEntry {
        RegressionEntry {
            chain,
            dependent: dependent.to_string(),
            status: FitStatus::Skipped,
            reason: Some(reason.to_string()),
            fit: None,
        }
    }
}

/// Fits both dependent variables for one chain. Failures become skipped
/// entries carrying the reason.
pub fn run_regressions(chain: Chain, frame: &RegressionFrame) -> Vec<RegressionEntry> {
    let x = frame.design();
    DEPENDENTS
        .iter()
        .map(|dep| match ols_fit(frame.dependent(dep).expect("known dependent"), &x) {
            Ok(fit) => RegressionEntry {
                chain,
                dependent: dep.to_string(),
                status: FitStatus::Ok,
                reason: None,
                fit: Some(fit),
            },
            Err(e) => RegressionEntry::skipped(chain, dep, e),
        })
        .collect()
}

pub fn write_results<W: Write>(mut w: W, entries: &[RegressionEntry]) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, entries)?;
    writeln!(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(n: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(2024, 3, n).unwrap()
    }

    fn bar(o: f64, h: f64, l: f64, c: f64) -> OhlcBar {
        OhlcBar { date: d(1), open: o, high: h, low: l, close: c }
    }

    #[test]
    fn gk_flat_bar() {
        assert_eq!(garman_klass(&bar(100.0, 100.0, 100.0, 100.0)), 0.0);
    }

    #[test]
    fn gk_zero_drift() {
        let s = garman_klass(&bar(105.0, 110.0, 100.0, 105.0));
        assert!((s - 0.5f64.sqrt() * 1.1f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn differencing() {
        let s = vec![(d(1), 3.0), (d(2), 5.0), (d(3), 4.0)];
        let (diff, _) = first_difference(&s, false).unwrap();
        assert_eq!(diff, vec![(d(2), 2.0), (d(3), -1.0)]);
        assert!(first_difference(&s[..1], false).unwrap().0.is_empty());
        let gap = vec![(d(1), 1.0), (d(3), 2.0), (d(4), 4.0)];
        assert_eq!(first_difference(&gap, false), Err(StatsError::DateGap { prev: d(1), next: d(3) }));
        assert_eq!(first_difference(&gap, true).unwrap(), (vec![(d(4), 2.0)], 1));
        let unsorted = vec![(d(2), 1.0), (d(1), 1.0)];
        assert_eq!(first_difference(&unsorted, false), Err(StatsError::Unsorted(d(1))));
    }

    fn counts(day: u32, arb: u64, trades: u64, retail: u64, agg: u64) -> DailyCounts {
        DailyCounts {
            chain: Chain::Base,
            date: d(day),
            cyclic_arb_txs: arb,
            cyclic_arb_trades: trades,
            retail_trades: retail,
            retail_aggregator_trades: agg,
        }
    }

    #[test]
    fn frame_by_hand() {
        let c = vec![counts(1, 10, 4, 200, 50), counts(2, 13, 4, 220, 110), counts(3, 13, 4, 220, 110)];
        let bars = vec![
            OhlcBar { date: d(1), open: 1.0, high: 2.0, low: 1.0, close: 2.0 },
            OhlcBar { date: d(2), open: 2.0, high: 3.0, low: 2.0, close: 3.0 },
            OhlcBar { date: d(3), open: 2.0, high: 3.0, low: 2.0, close: 3.0 },
        ];
        let f = build_frame(&c, &bars, false).unwrap();
        assert_eq!(f.dates, vec![d(2), d(3)]);
        assert_eq!(f.d_cyclic_arb_tx, vec![3.0, 0.0]);
        assert_eq!(f.d_cyclic_arb_tx_w_trade, vec![0.0, 0.0]);
        assert_eq!(f.d_price, vec![1.0, 0.0]);
        assert_eq!(f.d_retail_txs, vec![20.0, 0.0]);
        assert_eq!(f.d_retail_agg_frac, vec![0.25, 0.0]);
        assert_eq!(f.d_volatility[1], 0.0);
        assert_eq!(
            build_frame(&[counts(1, 1, 1, 0, 0)], &bars, false),
            Err(StatsError::NoRetailTrades(d(1)))
        );
        assert_eq!(build_frame(&[counts(9, 1, 1, 1, 0)], &bars, false), Err(StatsError::MissingOhlc(d(9))));
    }

    #[test]
    fn perfect_fit() {
        let xs: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = xs.iter().map(|x| 1.0 + 2.0 * x).collect();
        let fit = ols_fit(&y, &DesignMatrix::with_intercept(vec![("x".into(), xs)])).unwrap();
        assert!((fit.beta()[0] - 1.0).abs() < 1e-12);
        assert!((fit.beta()[1] - 2.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.residuals.iter().all(|e| e.abs() < 1e-12));
        assert_eq!(fit.f_stat_classical, None);
    }

    #[test]
    fn orthogonal_response() {
        let x = vec![-1.0, 1.0, -1.0, 1.0];
        let y = vec![1.0, 1.0, -1.0, -1.0];
        let fit = ols_fit(&y, &DesignMatrix::with_intercept(vec![("x".into(), x)])).unwrap();
        assert!(fit.beta()[1].abs() < 1e-9);
        assert!(fit.beta()[0].abs() < 1e-9);
    }

    #[test]
    fn collinear_column_named() {
        let a: Vec<f64> = (0..8).map(f64::from).collect();
        let b: Vec<f64> = a.iter().map(|v| 3.0 * v).collect();
        let x = DesignMatrix::with_intercept(vec![("a".into(), a), ("b".into(), b)]);
        assert_eq!(ols_fit(&[1.0; 8], &x), Err(StatsError::RankDeficient { column: "b".into() }));
    }

    #[test]
    fn too_few_rows() {
        let x = DesignMatrix::with_intercept(vec![("a".into(), vec![1.0, 2.0])]);
        assert_eq!(ols_fit(&[1.0, 2.0], &x), Err(StatsError::TooFewRows { rows: 2, cols: 2 }));
    }

    #[test]
    fn star_thresholds() {
        assert_eq!(stars(0.005), "***");
        assert_eq!(stars(0.01), "**");
        assert_eq!(stars(0.07), "*");
        assert_eq!(stars(0.1), "");
    }

    #[test]
    fn hc1_single_regressor_by_hand() {
        // Intercept-only model: HC1 variance of the mean is n/(n-1) * sum(e^2) / n^2.
        let y = [1.0, 2.0, 4.0, 7.0];
        let x = DesignMatrix { names: vec!["intercept".into()], columns: vec![vec![1.0; 4]], intercept: true };
        let fit = ols_fit(&y, &x).unwrap();
        let mean = 3.5;
        let ss: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
        let expect = (4.0 / 3.0 * ss / 16.0f64).sqrt();
        assert!((fit.robust_se()[0] - expect).abs() < 1e-12);
        assert_eq!(fit.f_stat, None);
    }
}
