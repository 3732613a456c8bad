//! Diminishing-returns gain model and regression analyses of observed gains.

mod stats;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stats::{beta_reg, f_upper, ln_gamma, t_two_sided};

/// The bundled per-host gain table.
pub const BUNDLED_GAINS_CSV: &str = include_str!("../../data/gains.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    LmeMicro,
    LmeMacro,
    Locomo,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::LmeMicro => "lme_micro",
            Metric::LmeMacro => "lme_macro",
            Metric::Locomo => "locomo",
        }
    }
}

/// One observed (base accuracy, gain) pair, both in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainPoint {
    pub host: String,
    pub metric: Metric,
    #[serde(rename = "base")]
    pub base_accuracy: f64,
    pub delta: f64,
}

impl GainPoint {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=100.0).contains(&self.base_accuracy) {
            return Err(Error::Schema(format!(
                "{}/{}: base accuracy {} outside [0, 100]",
                self.host,
                self.metric.as_str(),
                self.base_accuracy
            )));
        }
        if self.base_accuracy + self.delta > 100.0 {
            return Err(Error::Schema(format!(
                "{}/{}: base + delta exceeds 100",
                self.host,
                self.metric.as_str()
            )));
        }
        Ok(())
    }
}

/// Read `host,metric,base,delta` rows. Lines starting with `#` are ignored.
pub fn read_points(reader: impl Read) -> Result<Vec<GainPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut points = Vec::new();
    for (i, row) in rdr.deserialize::<GainPoint>().enumerate() {
        let p = row.map_err(|e| Error::Schema(format!("gain row {}: {e}", i + 1)))?;
        p.validate()?;
        points.push(p);
    }
    Ok(points)
}

pub fn bundled_points() -> Vec<GainPoint> {
    read_points(BUNDLED_GAINS_CSV.as_bytes()).expect("bundled gain table is valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModelParams {
    pub lambda: f64,
    pub delta_rho: f64,
    pub k_constant: f64,
}

/// `1 - exp(-x)` without cancellation for small x.
fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

impl GainModelParams {
    pub fn new(lambda: f64, delta_rho: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Argument(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(delta_rho >= 0.0 && delta_rho.is_finite()) {
            return Err(Error::Argument(format!(
                "delta_rho must be non-negative, got {delta_rho}"
            )));
        }
        Ok(GainModelParams {
            lambda,
            delta_rho,
            k_constant: one_minus_exp_neg(lambda * delta_rho),
        })
    }

    /// Base accuracy implied by a latent base density `rho_base`.
    pub fn base_accuracy(lambda: f64, rho_base: f64) -> f64 {
        one_minus_exp_neg(lambda * rho_base)
    }
}

/// Expected gain `(1 - e^{-λΔρ})(1 - p_base)` for a base accuracy in [0, 1].
pub fn predict_gain(p_base: f64, params: &GainModelParams) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_base) {
        return Err(Error::Argument(format!("p_base {p_base} outside [0, 1]")));
    }
    Ok(one_minus_exp_neg(params.lambda * params.delta_rho) * (1.0 - p_base))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
    /// Two-sided, t distribution with n − 2 df.
    pub p_value_slope: f64,
}

/// Ordinary least squares of `y` on `x`.
///
/// With zero residual the p-value is 0 (or 1 when the slope is also 0), and
/// R² is 1.
pub fn ols(xs: &[f64], ys: &[f64]) -> Result<RegressionFit> {
    let n = xs.len();
    if n != ys.len() {
        return Err(Error::Argument("x and y lengths differ".into()));
    }
    if n < 3 {
        return Err(Error::DegenerateDesign(format!(
            "need at least 3 points, got {n}"
        )));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateDesign("all x values are equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    // Relative cutoff so a float-exact line counts as a perfect fit.
    let exact = sse <= 1e-24 * syy.max(1.0);
    let r_squared = if syy == 0.0 || exact {
        1.0
    } else {
        1.0 - sse / syy
    };
    let df = nf - 2.0;
    let p_value_slope = if exact {
        if slope == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        let se = (sse / df / sxx).sqrt();
        t_two_sided(slope / se, df)
    };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        n,
        p_value_slope,
    })
}

/// Regress gain on base accuracy over all points.
pub fn fit_linear(points: &[GainPoint]) -> Result<RegressionFit> {
    let xs: Vec<f64> = points.iter().map(|p| p.base_accuracy).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.delta).collect();
    ols(&xs, &ys)
}

/// One fit per metric.
pub fn per_benchmark_fits(points: &[GainPoint]) -> Result<BTreeMap<Metric, RegressionFit>> {
    let mut groups: BTreeMap<Metric, Vec<GainPoint>> = BTreeMap::new();
    for p in points {
        groups.entry(p.metric).or_default().push(p.clone());
    }
    groups
        .into_iter()
        .map(|(m, pts)| {
            fit_linear(&pts).map(|f| (m, f)).map_err(|e| match e {
                Error::DegenerateDesign(msg) => {
                    Error::DegenerateDesign(format!("{}: {msg}", m.as_str()))
                }
                other => other,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NestedFTest {
    pub f_stat: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
    pub rss_restricted: f64,
    pub rss_full: f64,
}

/// Solve the least-squares problem `min ‖Xb − y‖` via the normal equations
/// and return the residual sum of squares.
fn lstsq_rss(design: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let p = design[0].len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for (row, &yi) in design.iter().zip(y) {
        for i in 0..p {
            for j in 0..p {
                a[i][j] += row[i] * row[j];
            }
            a[i][p] += row[i] * yi;
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..p {
        let pivot = (col..p)
            .max_by(|&r, &s| a[r][col].abs().total_cmp(&a[s][col].abs()))
            .expect("non-empty range");
        let scale = a.iter().map(|r| r[col].abs()).fold(0.0, f64::max);
        if a[pivot][col].abs() <= 1e-12 * scale.max(1.0) {
            return Err(Error::DegenerateDesign(
                "design matrix is rank deficient".into(),
            ));
        }
        a.swap(col, pivot);
        for r in 0..p {
            if r != col {
                let factor = a[r][col] / a[col][col];
                let pivot_row = a[col].clone();
                for (x, pv) in a[r][col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= factor * pv;
                }
            }
        }
    }
    let beta: Vec<f64> = (0..p).map(|i| a[i][p] / a[i][i]).collect();
    Ok(design
        .iter()
        .zip(y)
        .map(|(row, yi)| {
            let fit: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            (yi - fit).powi(2)
        })
        .sum())
}

/// Compare a common slope against per-group slopes, both with a common intercept.
pub fn nested_f_test(points: &[GainPoint], groups: &[String]) -> Result<NestedFTest> {
    if points.len() != groups.len() {
        return Err(Error::Argument(
            "one group label per point is required".into(),
        ));
    }
    let labels: Vec<&String> = {
        let mut l: Vec<&String> = groups.iter().collect();
        l.sort();
        l.dedup();
        l
    };
    if labels.len() < 2 {
        return Err(Error::Argument("need at least 2 groups".into()));
    }
    for l in &labels {
        let n = groups.iter().filter(|g| g == l).count();
        if n < 2 {
            return Err(Error::Argument(format!(
                "group {l:?} has {n} point(s), need at least 2"
            )));
        }
    }
    let n = points.len();
    let g = labels.len();
    let df_full = n as i64 - (1 + g) as i64;
    if df_full <= 0 {
        return Err(Error::Argument(format!(
            "{n} points cannot support {} parameters",
            1 + g
        )));
    }
    let y: Vec<f64> = points.iter().map(|p| p.delta).collect();
    let restricted: Vec<Vec<f64>> = points.iter().map(|p| vec![1.0, p.base_accuracy]).collect();
    let full: Vec<Vec<f64>> = points
        .iter()
        .zip(groups)
        .map(|(p, grp)| {
            let mut row = vec![1.0];
            row.extend(
                labels
                    .iter()
                    .map(|l| if *l == grp { p.base_accuracy } else { 0.0 }),
            );
            row
        })
        .collect();
    let rss_r = lstsq_rss(&restricted, &y)
        .map_err(|e| Error::Argument(format!("restricted model: {e}")))?;
    let rss_f = lstsq_rss(&full, &y).map_err(|e| Error::Argument(format!("full model: {e}")))?;
    let df1 = g - 1;
    let df2 = df_full as usize;
    let num = ((rss_r - rss_f) / df1 as f64).max(0.0);
    let f_stat = if rss_f <= 0.0 {
        if num > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    } else {
        num / (rss_f / df2 as f64)
    };
    Ok(NestedFTest {
        f_stat,
        df1,
        df2,
        p_value: f_upper(f_stat, df1 as f64, df2 as f64),
        rss_restricted: rss_r,
        rss_full: rss_f,
    })
}

/// Every analysis over one point set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub n: usize,
    pub pooled: RegressionFit,
    pub per_benchmark: BTreeMap<Metric, RegressionFit>,
    /// Absent when grouping by host is degenerate.
    pub host_slopes: Option<NestedFTest>,
}

pub fn analyze(points: &[GainPoint]) -> Result<GainReport> {
    let pooled = fit_linear(points)?;
    let per_benchmark = per_benchmark_fits(points)?;
    let hosts: Vec<String> = points.iter().map(|p| p.host.clone()).collect();
    let host_slopes = match nested_f_test(points, &hosts) {
        Ok(t) => Some(t),
        Err(e) => {
            log::warn!("skipping per-host slope test: {e}");
            None
        }
    };
    Ok(GainReport {
        n: points.len(),
        pooled,
        per_benchmark,
        host_slopes,
    })
}

fn fit_line(out: &mut String, label: &str, f: &RegressionFit) {
    let _ = writeln!(
        out,
        "{label:<12} n={:<3} slope={:+.4} intercept={:.3} R^2={:.4} p={:.3e}",
        f.n, f.slope, f.intercept, f.r_squared, f.p_value_slope
    );
}

impl GainReport {
    pub fn render(&self) -> String {
        let mut out = String::new();
        fit_line(&mut out, "pooled", &self.pooled);
        for (m, f) in &self.per_benchmark {
            fit_line(&mut out, m.as_str(), f);
        }
        match &self.host_slopes {
            Some(t) => {
                let _ = writeln!(
                    out,
                    "per-host slopes vs common slope: F({}, {}) = {:.4}, p = {:.4} (RSS {:.4} -> {:.4})",
                    t.df1, t.df2, t.f_stat, t.p_value, t.rss_restricted, t.rss_full
                );
            }
            None => out.push_str("per-host slopes vs common slope: not estimable\n"),
        }
        out
    }
}
