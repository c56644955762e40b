//! Statistical checks on simulated samples: exponentiality of rescaled exit
//! times, exit splits, empirical generators, and finite-dimensional
//! distributions against the limiting chain.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::limitchain::{chain_transition_matrix, time_scale, GeneratorMatrix};
use crate::simulate::ExitRecord;

/// Fewest uncensored times accepted by the distributional tests.
pub const MIN_SAMPLES: usize = 100;
/// Largest tolerated fraction of horizon-censored records.
pub const MAX_CENSORING: f64 = 0.01;
/// Largest tolerated fraction of snapshots outside every `B_Δ(m_j)`.
pub const MAX_UNCLASSIFIED: f64 = 0.05;
/// Terms of the Kolmogorov series.
const KOLMOGOROV_TERMS: usize = 100;

/// Exit or transition times collected from one well.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ExitSample {
    pub well: usize,
    /// Stopping times of uncensored records.
    pub times: Vec<f64>,
    /// Landing wells of uncensored records.
    pub landings: Vec<Option<usize>>,
    pub eps: f64,
    /// `λ^i(ε)` used to rescale the times.
    pub rate_used: f64,
    /// Records that hit the horizon or overflowed.
    pub censored: usize,
}

impl ExitSample {
    pub fn new(well: usize, eps: f64, rate_used: f64) -> Self {
        Self { well, eps, rate_used, ..Default::default() }
    }

    pub fn push(&mut self, record: &ExitRecord) {
        if record.censored() {
            self.censored += 1;
        } else {
            self.times.push(record.stop_time);
            self.landings.push(record.landing_well);
        }
    }

    pub fn from_records(well: usize, eps: f64, rate_used: f64, records: &[ExitRecord]) -> Self {
        let mut s = Self::new(well, eps, rate_used);
        records.iter().for_each(|r| s.push(r));
        s
    }

    /// Appends `other`; statistics of the merge equal those of the
    /// concatenated sample.
    pub fn merge(&mut self, other: &ExitSample) {
        self.times.extend_from_slice(&other.times);
        self.landings.extend_from_slice(&other.landings);
        self.censored += other.censored;
    }

    pub fn total(&self) -> usize {
        self.times.len() + self.censored
    }

    pub fn censoring_fraction(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            self.censored as f64 / self.total() as f64
        }
    }

    pub fn mean_time(&self) -> f64 {
        self.times.iter().sum::<f64>() / self.times.len() as f64
    }

    fn check_usable(&self) -> Result<()> {
        if self.times.len() < MIN_SAMPLES {
            return Err(Error::TooFewSamples { got: self.times.len(), needed: MIN_SAMPLES });
        }
        let f = self.censoring_fraction();
        if f > MAX_CENSORING {
            return Err(Error::ExcessCensoring { fraction: f, limit: MAX_CENSORING });
        }
        Ok(())
    }
}

/// JSON test summary `{test, statistic, p_value, n, pass}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub n: usize,
    pub pass: bool,
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        let s: f64 = (1..=KOLMOGOROV_TERMS)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=KOLMOGOROV_TERMS)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * x * x).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// One-sample Kolmogorov–Smirnov statistic of `data` against the CDF `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> f64 {
    let mut xs = data.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(k, &x)| {
            let f = cdf(x);
            (f - k as f64 / n).max((k + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// KS test of `{λ σ_k}` against `Exp(1)` with the asymptotic p-value.
pub fn ks_exponential(sample: &ExitSample) -> Result<KsResult> {
    sample.check_usable()?;
    let scaled: Vec<f64> = sample.times.iter().map(|t| t * sample.rate_used).collect();
    let d = ks_statistic(&scaled, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() });
    let n = scaled.len();
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf((n as f64).sqrt() * d), n })
}

/// Landing fraction of one destination against its target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub to: usize,
    pub observed: f64,
    pub target: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitTest {
    pub entries: Vec<SplitEntry>,
    /// Records that landed in a well.
    pub n: usize,
    /// Uncensored records that landed in no well's set.
    pub unlanded: usize,
    pub max_abs_z: f64,
    pub pass: bool,
}

/// `z_j = (p̂_j - q_ij/q_i)/SE_j` for every `j ≠ i`, with the binomial
/// standard error at the target `√(p(1-p)/n)`. Passes when every `|z_j| ≤ 3`.
pub fn exit_split_test(sample: &ExitSample, q: &GeneratorMatrix) -> Result<SplitTest> {
    let i = sample.well;
    let landed: Vec<usize> = sample.landings.iter().flatten().copied().collect();
    let n = landed.len();
    if n == 0 {
        return Err(Error::TooFewSamples { got: 0, needed: 1 });
    }
    let targets = q.jump_distribution(i).ok_or_else(|| Error::Precondition(format!("well {} is absorbing", i + 1)))?;
    let entries: Vec<SplitEntry> = (0..q.n)
        .filter(|&j| j != i)
        .map(|j| {
            let observed = landed.iter().filter(|&&l| l == j).count() as f64 / n as f64;
            let target = targets[j];
            let se = (target * (1.0 - target) / n as f64).sqrt();
            let diff = observed - target;
            let z = if diff == 0.0 {
                0.0
            } else if se == 0.0 {
                f64::INFINITY.copysign(diff)
            } else {
                diff / se
            };
            SplitEntry { to: j, observed, target, z }
        })
        .collect();
    let max_abs_z = entries.iter().map(|e| e.z.abs()).fold(0.0, f64::max);
    Ok(SplitTest { entries, n, unlanded: sample.landings.len() - n, max_abs_z, pass: max_abs_z <= 3.0 })
}

/// Generator estimated from transition samples, with delta-method standard
/// errors. Rows without a sample are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalGenerator {
    pub n: usize,
    pub q: Vec<Option<Vec<f64>>>,
    pub se: Vec<Option<Vec<f64>>>,
}

impl EmpiricalGenerator {
    /// Largest `|q̂_ij - q_ij| / SE_ij` over estimated entries (`SE = 0` counts
    /// only when the entries differ).
    pub fn max_abs_z(&self, q: &GeneratorMatrix) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            if let (Some(row), Some(se)) = (&self.q[i], &self.se[i]) {
                for j in 0..self.n {
                    let d = row[j] - q.get(i, j);
                    let z = if d == 0.0 {
                        0.0
                    } else if se[j] == 0.0 {
                        f64::INFINITY
                    } else {
                        d.abs() / se[j]
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }
}

/// `q̂_i = 1/(H(1/ε)·mean τ^i)` and `q̂_ij = q̂_i · (landing fraction to j)`.
pub fn empirical_generator(samples: &[Option<ExitSample>], eps: f64, model: &LevyModel) -> Result<EmpiricalGenerator> {
    let n = samples.len();
    let scale = time_scale(model, eps)?;
    let mut q = vec![None; n];
    let mut se = vec![None; n];
    for (i, s) in samples.iter().enumerate() {
        let Some(s) = s else { continue };
        s.check_usable()?;
        let k = s.times.len() as f64;
        let mean = s.mean_time();
        let var = s.times.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (k - 1.0);
        let qi = scale / mean;
        let qi_se = qi * (var / k).sqrt() / mean;
        let mut row = vec![0.0; n];
        let mut row_se = vec![0.0; n];
        for j in (0..n).filter(|&j| j != i) {
            let p = s.landings.iter().filter(|&&l| l == Some(j)).count() as f64 / k;
            let p_se = (p * (1.0 - p) / k).sqrt();
            row[j] = qi * p;
            row_se[j] = ((p * qi_se).powi(2) + (qi * p_se).powi(2)).sqrt();
        }
        row[i] = -row.iter().sum::<f64>();
        // Landing in no well leaves the row sum short of q̂_i; the diagonal
        // keeps the generator property.
        row_se[i] = qi_se;
        q[i] = Some(row);
        se[i] = Some(row_se);
    }
    Ok(EmpiricalGenerator { n, q, se })
}

/// Chi-square comparison at one time point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FddPoint {
    /// Time on the `t/H(1/ε)` scale.
    pub t: f64,
    pub counts: Vec<usize>,
    pub expected: Vec<f64>,
    pub unclassified: usize,
    pub unclassified_fraction: f64,
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
}

/// Per-time chi-square tests of well counts against row `i0` of `e^{tQ}`.
/// `snapshots[p][k]` is the well of path `p` at `times[k]`, `None` when
/// outside every `B_Δ(m_j)`.
pub fn fdd_test(
    snapshots: &[Vec<Option<usize>>],
    times: &[f64],
    q: &GeneratorMatrix,
    i0: usize,
) -> Result<Vec<FddPoint>> {
    if snapshots.is_empty() {
        return Err(Error::TooFewSamples { got: 0, needed: 1 });
    }
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut counts = vec![0usize; q.n];
        let mut unclassified = 0;
        for snap in snapshots {
            match snap.get(k).copied().flatten() {
                Some(j) => counts[j] += 1,
                None => unclassified += 1,
            }
        }
        let fraction = unclassified as f64 / snapshots.len() as f64;
        if fraction >= MAX_UNCLASSIFIED {
            return Err(Error::UnclassifiedExcess { time: t, fraction, limit: MAX_UNCLASSIFIED });
        }
        let row = &chain_transition_matrix(q, t)?[i0];
        let total: usize = counts.iter().sum();
        let expected: Vec<f64> = row.iter().map(|p| p * total as f64).collect();
        let (statistic, df, p_value) = chi_square(&counts, &expected);
        out.push(FddPoint {
            t,
            counts,
            expected,
            unclassified,
            unclassified_fraction: fraction,
            statistic,
            df,
            p_value,
        });
    }
    Ok(out)
}

/// Pearson statistic, degrees of freedom and p-value. Cells with zero
/// expectation are dropped unless observed, which gives p = 0.
fn chi_square(counts: &[usize], expected: &[f64]) -> (f64, usize, f64) {
    const NEGLIGIBLE: f64 = 1e-12;
    let mut stat = 0.0;
    let mut cells = 0;
    for (&o, &e) in counts.iter().zip(expected) {
        if e <= NEGLIGIBLE {
            if o > 0 {
                return (f64::INFINITY, 0, 0.0);
            }
            continue;
        }
        cells += 1;
        stat += (o as f64 - e).powi(2) / e;
    }
    if cells <= 1 {
        return (stat, 0, 1.0);
    }
    let df = cells - 1;
    let p = ChiSquared::new(df as f64).expect("positive degrees of freedom").sf(stat);
    (stat, df, p)
}

/// Fraction of `positions` farther than `delta` from `m_i`, for
/// snapshots taken at `t/ε^δ` with `0 < δ < r`. Non-finite positions count
/// as outside.
pub fn short_time_localization(positions: &[f64], minimum: f64, delta: f64, time_exponent: f64, r: f64) -> Result<f64> {
    if !(time_exponent > 0.0 && time_exponent < r) {
        return Err(Error::Precondition(format!("time exponent must lie in (0, r={r}), got {time_exponent}")));
    }
    if positions.is_empty() {
        return Err(Error::TooFewSamples { got: 0, needed: 1 });
    }
    let outside = positions.iter().filter(|&&x| !((x - minimum).abs() <= delta)).count();
    Ok(outside as f64 / positions.len() as f64)
}

/// True when `values` decreases step by step except for at most
/// `inversions` increases.
pub fn decreasing_up_to(values: &[f64], inversions: usize) -> bool {
    values.windows(2).filter(|w| w[1] > w[0]).count() <= inversions
}

/// Least-squares slope and intercept of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}
