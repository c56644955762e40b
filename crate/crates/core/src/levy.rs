//! The driving Lévy process: generating triplet with regularly varying
//! tails, the split into small jumps and compound-Poisson big jumps at level
//! `ε^{-ρ}`, and the samplers used by the path simulator.

use std::f64::consts::{E, FRAC_PI_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::rng::{exponential, uniform_open0};

/// Slowly varying factor `l(u)` of the tails.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SlowlyVarying {
    Constant,
    /// `l(u) = (ln(e + u))^p` with `p ∈ [-2, 2]`.
    LogPower(f64),
}

impl SlowlyVarying {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match *self {
            SlowlyVarying::Constant => 1.0,
            SlowlyVarying::LogPower(p) => (E + u).ln().powf(p),
        }
    }
}

/// Parametric right/left tails `H_±(u) = c_± u^{-r} l(u)` for `u ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailSpec {
    pub r: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub sv: SlowlyVarying,
}

impl TailSpec {
    pub fn new(r: f64, c_plus: f64, c_minus: f64, sv: SlowlyVarying) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::InvalidModel(format!("tail index r must be positive, got {r}")));
        }
        if !(c_plus > 0.0 && c_plus.is_finite()) {
            return Err(Error::InvalidModel("c_plus must be positive".into()));
        }
        if !(c_minus >= 0.0 && c_minus.is_finite()) {
            return Err(Error::InvalidModel("c_minus must be nonnegative".into()));
        }
        if let SlowlyVarying::LogPower(p) = sv {
            if !(-2.0..=2.0).contains(&p) {
                return Err(Error::InvalidModel(format!("log power must lie in [-2, 2], got {p}")));
            }
            // d/du [u^{-r} L^p] < 0  <=>  r > p u / ((e+u) ln(e+u))
            if p > 0.0 {
                let worst = (0..=2400)
                    .map(|k| {
                        let u = 10f64.powf(k as f64 / 200.0);
                        u / ((E + u) * (E + u).ln())
                    })
                    .fold(0.0, f64::max);
                if r <= p * worst {
                    return Err(Error::InvalidModel(format!(
                        "tail u^-{r} (ln(e+u))^{p} is not strictly decreasing on [1, inf)"
                    )));
                }
            }
        }
        Ok(Self { r, c_plus, c_minus, sv })
    }

    /// Tail ratio `κ = lim H_-(-u)/H_+(u)`.
    pub fn kappa(&self) -> f64 {
        self.c_minus / self.c_plus
    }

    /// Common shape `u^{-r} l(u)`, without the side constant.
    #[inline]
    pub fn shape(&self, u: f64) -> f64 {
        u.powf(-self.r) * self.sv.eval(u)
    }

    #[inline]
    pub fn plus(&self, u: f64) -> f64 {
        self.c_plus * self.shape(u)
    }

    #[inline]
    pub fn minus(&self, u: f64) -> f64 {
        self.c_minus * self.shape(u)
    }

    #[inline]
    pub fn total(&self, u: f64) -> f64 {
        (self.c_plus + self.c_minus) * self.shape(u)
    }

    /// `∫_1^A y^k (-d shape)(y)` for `k ∈ {1, 2}`, by parts:
    /// `shape(1) - A^k shape(A) + k ∫_1^A y^{k-1} shape(y) dy`.
    fn shape_moment(&self, k: i32, a: f64) -> f64 {
        if a <= 1.0 {
            return 0.0;
        }
        let kf = k as f64;
        let integral = match self.sv {
            SlowlyVarying::Constant => {
                let e = kf - self.r; // ∫_1^A y^{k-1-r} dy
                if e.abs() < 1e-12 {
                    a.ln()
                } else {
                    (a.powf(e) - 1.0) / e
                }
            }
            SlowlyVarying::LogPower(_) => {
                let f = |s: f64| (kf * s).exp() * self.shape(s.exp());
                quad::simpson_panels(&f, 0.0, a.ln(), 32, 1e-12)
            }
        };
        self.shape(1.0) - a.powf(kf) * self.shape(a) + kf * integral
    }
}

/// Lévy measure on `|y| ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum InnerProfile {
    /// Density `α c_± |y|^{-1-α}`, continuing a pure power tail.
    Stable { alpha: f64 },
    /// No mass below the unit cutoff.
    TruncatedEmpty,
}

/// Generating triplet `(d, ν, μ)` with truncation function `1{|y| ≤ 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevyModel {
    pub d: f64,
    pub mu: f64,
    pub tails: TailSpec,
    pub inner: InnerProfile,
}

impl LevyModel {
    pub fn new(d: f64, mu: f64, tails: TailSpec, inner: InnerProfile) -> Result<Self> {
        if !(d >= 0.0 && d.is_finite()) {
            return Err(Error::InvalidModel("Gaussian variance d must be finite and >= 0".into()));
        }
        if !mu.is_finite() {
            return Err(Error::InvalidModel("drift mu must be finite".into()));
        }
        if let InnerProfile::Stable { alpha } = inner {
            if !(alpha > 0.0 && alpha < 2.0) {
                return Err(Error::InvalidModel(format!("stable index must lie in (0, 2), got {alpha}")));
            }
            if (alpha - tails.r).abs() > 1e-12 {
                return Err(Error::InvalidModel(format!(
                    "stable inner profile needs alpha = r, got alpha = {alpha}, r = {}",
                    tails.r
                )));
            }
        }
        Ok(Self { d, mu, tails, inner })
    }

    /// Symmetric α-stable measure `ν(dy) = |y|^{-1-α} dy`, i.e. `H_±(u) = u^{-α}/α`.
    pub fn symmetric_stable(alpha: f64) -> Result<Self> {
        Self::stable(alpha, 1.0, 1.0)
    }

    /// Stable measure `(c_1 1{y<0} + c_2 1{y>0}) |y|^{-1-α} dy` with zero drift.
    pub fn stable(alpha: f64, c1: f64, c2: f64) -> Result<Self> {
        let tails = TailSpec::new(alpha, c2 / alpha, c1 / alpha, SlowlyVarying::Constant)?;
        Self::new(0.0, 0.0, tails, InnerProfile::Stable { alpha })
    }

    /// Density constants `(c_1, c_2)` of a stable measure.
    pub fn stable_weights(&self) -> Option<(f64, f64)> {
        match (self.inner, self.tails.sv) {
            (InnerProfile::Stable { alpha }, SlowlyVarying::Constant) => {
                Some((alpha * self.tails.c_minus, alpha * self.tails.c_plus))
            }
            _ => None,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.tails.kappa()
    }

    /// `∫_{|y| ≤ 1} y² ν(dy)`.
    pub fn inner_second_moment(&self) -> f64 {
        match self.inner {
            InnerProfile::Stable { alpha } => alpha * (self.tails.c_plus + self.tails.c_minus) / (2.0 - alpha),
            InnerProfile::TruncatedEmpty => 0.0,
        }
    }

    /// `∫_{1 < |y| ≤ a} y² ν(dy)`.
    pub fn outer_second_moment(&self, a: f64) -> f64 {
        (self.tails.c_plus + self.tails.c_minus) * self.tails.shape_moment(2, a)
    }

    /// `∫_{1 < |y| ≤ a} y ν(dy)`.
    pub fn outer_first_moment(&self, a: f64) -> f64 {
        (self.tails.c_plus - self.tails.c_minus) * self.tails.shape_moment(1, a)
    }
}

fn check_tail_arg(u: f64) -> Result<()> {
    if u >= 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("tails are defined for u >= 1, got {u}")))
    }
}

/// `H_+(u) = ν(u, ∞)`.
pub fn tail_plus(model: &LevyModel, u: f64) -> Result<f64> {
    check_tail_arg(u)?;
    Ok(model.tails.plus(u))
}

/// `H_-(-u) = ν(-∞, -u)`.
pub fn tail_minus(model: &LevyModel, u: f64) -> Result<f64> {
    check_tail_arg(u)?;
    Ok(model.tails.minus(u))
}

/// `H(u) = H_-(-u) + H_+(u)`.
pub fn tail_total(model: &LevyModel, u: f64) -> Result<f64> {
    check_tail_arg(u)?;
    Ok(model.tails.total(u))
}

fn check_eps_rho(eps: f64, rho: f64) -> Result<()> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    if !(rho > 0.5 && rho < 1.0) {
        return Err(Error::Domain(format!("rho must lie in (1/2, 1), got {rho}")));
    }
    Ok(())
}

/// Intensity `β_ε = H(ε^{-ρ})` of the big-jump compound Poisson part.
pub fn big_jump_rate(model: &LevyModel, eps: f64, rho: f64) -> Result<f64> {
    check_eps_rho(eps, rho)?;
    tail_total(model, eps.powf(-rho))
}

const TABLE_KNOTS: usize = 1024;

/// Law of one big jump `W` (before scaling by `ε`): `ν` restricted to
/// `|y| > threshold`, normalised.
#[derive(Debug, Clone)]
pub struct BigJumpLaw {
    threshold: f64,
    p_negative: f64,
    tails: TailSpec,
    /// `ln u` knots and `ln(shape(u)/shape(threshold))` at each, for non-power tails.
    table: Option<(Vec<f64>, Vec<f64>)>,
}

impl BigJumpLaw {
    fn new(tails: TailSpec, threshold: f64) -> Self {
        let p_negative = tails.c_minus / (tails.c_plus + tails.c_minus);
        let table = match tails.sv {
            SlowlyVarying::Constant => None,
            SlowlyVarying::LogPower(_) => {
                let log_a = threshold.ln();
                let base = tails.shape(threshold).ln();
                let log_ratio = |lu: f64| tails.shape(lu.exp()).ln() - base;
                // Extend until the conditional tail is far below 2^-53.
                let mut span = 4.0 / tails.r;
                while log_ratio(log_a + span) > -42.0 {
                    span *= 2.0;
                }
                let lu: Vec<f64> =
                    (0..TABLE_KNOTS).map(|k| log_a + span * k as f64 / (TABLE_KNOTS - 1) as f64).collect();
                let lr: Vec<f64> = lu.iter().map(|&x| log_ratio(x)).collect();
                Some((lu, lr))
            }
        };
        Self { threshold, p_negative, tails, table }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Probability that a big jump is negative, `H_-(-A)/H(A)`.
    pub fn p_negative(&self) -> f64 {
        self.p_negative
    }

    /// Magnitude `u ≥ threshold` with conditional tail `shape(u)/shape(threshold) = v`.
    pub fn magnitude_quantile(&self, v: f64) -> f64 {
        match &self.table {
            None => self.threshold * v.powf(-1.0 / self.tails.r),
            Some((lu, lr)) => {
                let target = v.ln();
                let base = self.tails.shape(self.threshold).ln();
                let g = |x: f64| self.tails.shape(x.exp()).ln() - base - target;
                // lr is decreasing; first knot strictly below the target.
                let k = lr.partition_point(|&r| r >= target);
                let (lo, hi) = if k == 0 {
                    return self.threshold;
                } else if k < lr.len() {
                    (lu[k - 1], lu[k])
                } else {
                    let mut hi = lu[lu.len() - 1];
                    while g(hi) > 0.0 {
                        hi += hi.abs().max(1.0);
                    }
                    (lu[lu.len() - 1], hi)
                };
                // relative tolerance 1e-10 on u is absolute 1e-10 on ln u
                quad::bisect(&g, lo, hi, 1e-10).exp()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let negative = rng.random::<f64>() < self.p_negative;
        let magnitude = self.magnitude_quantile(uniform_open0(rng));
        if negative {
            -magnitude
        } else {
            magnitude
        }
    }
}

/// The `ε`-dependent split `L = ξ^ε + η^ε` at jump size `ε^{-ρ}`, with the
/// small-jump part `εξ^ε` replaced by a Gaussian of matched mean and variance.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub eps: f64,
    pub rho: f64,
    /// Big-jump intensity `β_ε`.
    pub beta: f64,
    /// Variance per unit time of the small-jump surrogate.
    pub small_var: f64,
    /// Mean per unit time of the small-jump surrogate.
    pub small_mean: f64,
    jumps: Option<BigJumpLaw>,
}

impl Decomposition {
    pub fn new(model: &LevyModel, eps: f64, rho: f64) -> Result<Self> {
        check_eps_rho(eps, rho)?;
        let a = eps.powf(-rho);
        let beta = model.tails.total(a);
        let second = model.d + model.inner_second_moment() + model.outer_second_moment(a);
        let first = model.mu + model.outer_first_moment(a);
        Ok(Self {
            eps,
            rho,
            beta,
            small_var: eps * eps * second,
            small_mean: eps * first,
            jumps: Some(BigJumpLaw::new(model.tails, a)),
        })
    }

    /// Pure Brownian driver `ε(√d W_t + μ t)`: no jumps at all.
    pub fn brownian(eps: f64, d: f64, mu: f64) -> Result<Self> {
        if !(eps > 0.0) || !(d >= 0.0) || !mu.is_finite() {
            return Err(Error::Domain("brownian driver needs eps > 0, d >= 0".into()));
        }
        Ok(Self { eps, rho: f64::NAN, beta: 0.0, small_var: eps * eps * d, small_mean: eps * mu, jumps: None })
    }

    /// Same jumps, small-jump surrogate variance multiplied by `factor`.
    pub fn with_small_var_scaled(&self, factor: f64) -> Self {
        Self { small_var: self.small_var * factor, ..self.clone() }
    }

    /// Same decomposition with the small-jump surrogate switched off.
    pub fn without_small_jumps(&self) -> Self {
        Self { small_var: 0.0, small_mean: 0.0, ..self.clone() }
    }

    /// Same small-jump part, no big jumps.
    pub fn without_big_jumps(&self) -> Self {
        Self { beta: 0.0, jumps: None, ..self.clone() }
    }

    pub fn threshold(&self) -> f64 {
        self.jumps.as_ref().map_or(f64::INFINITY, |j| j.threshold)
    }

    pub fn jump_law(&self) -> Option<&BigJumpLaw> {
        self.jumps.as_ref()
    }
}

/// Waiting time to the next big jump, `-ln(U)/β_ε`.
pub fn sample_interjump_time<R: Rng + ?Sized>(decomposition: &Decomposition, rng: &mut R) -> f64 {
    exponential(decomposition.beta, rng)
}

/// Unscaled big jump `W`; the path moves by `ε W`.
pub fn sample_big_jump<R: Rng + ?Sized>(decomposition: &Decomposition, rng: &mut R) -> f64 {
    match &decomposition.jumps {
        Some(law) if decomposition.beta > 0.0 => law.sample(rng),
        _ => 0.0,
    }
}

/// Increment of the Gaussian small-jump surrogate over time `h`.
#[inline]
pub fn sample_small_increment<R: Rng + ?Sized>(decomposition: &Decomposition, h: f64, rng: &mut R) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    decomposition.small_mean * h + (decomposition.small_var * h).sqrt() * z
}

/// Increment of `εL` over time `h` under the decomposition: surrogate plus
/// a Poisson number of big jumps.
pub fn decomposed_increment<R: Rng + ?Sized>(decomposition: &Decomposition, h: f64, rng: &mut R) -> f64 {
    let mut x = sample_small_increment(decomposition, h, rng);
    let mean = decomposition.beta * h;
    if mean > 0.0 {
        let count: f64 = Poisson::new(mean).expect("positive Poisson mean").sample(rng);
        for _ in 0..count as u64 {
            x += decomposition.eps * sample_big_jump(decomposition, rng);
        }
    }
    x
}

/// Exact sampler for increments of `εL` with `L` stable, Lévy measure
/// `(c_1 1{y<0} + c_2 1{y>0}) |y|^{-1-α} dy`, zero Gaussian part and zero
/// triplet drift under truncation `1{|y| ≤ 1}`.
#[derive(Debug, Clone, Copy)]
pub struct StableIncrement {
    alpha: f64,
    beta: f64,
    sigma: f64,
    /// Location per unit time (α = 1) or triplet-to-stable drift shift (α ≠ 1).
    shift: f64,
}

impl StableIncrement {
    pub fn new(alpha: f64, c1: f64, c2: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 2.0) {
            return Err(Error::Domain(format!("stable index must lie in (0, 2), got {alpha}")));
        }
        if !(c1 >= 0.0 && c2 >= 0.0 && c1 + c2 > 0.0) {
            return Err(Error::Domain("stable side weights must be nonnegative, not both zero".into()));
        }
        let beta = (c2 - c1) / (c1 + c2);
        if (alpha - 1.0).abs() < 1e-12 {
            let sigma = (c1 + c2) * FRAC_PI_2;
            let euler_gamma = 0.577_215_664_901_532_9;
            Ok(Self { alpha: 1.0, beta, sigma, shift: (c2 - c1) * (1.0 - euler_gamma) })
        } else {
            let gamma_neg = statrs::function::gamma::gamma(2.0 - alpha) / (alpha * (alpha - 1.0));
            let scale_pow = -gamma_neg * (PI * alpha / 2.0).cos() * (c1 + c2);
            Ok(Self { alpha, beta, sigma: scale_pow.powf(1.0 / alpha), shift: (c2 - c1) / (alpha - 1.0) })
        }
    }

    /// Standard `S_α(1, β, 0)` variate by Chambers–Mallows–Stuck.
    pub fn standard<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v = PI * (rng.random::<f64>() - 0.5);
        let w = exponential(1.0, rng);
        let (a, b) = (self.alpha, self.beta);
        if a == 1.0 {
            let t = FRAC_PI_2 + b * v;
            (t * v.tan() - b * (FRAC_PI_2 * w * v.cos() / t).ln()) / FRAC_PI_2
        } else {
            let zeta = b * (PI * a / 2.0).tan();
            let xi = zeta.atan() / a;
            (1.0 + zeta * zeta).powf(1.0 / (2.0 * a)) * (a * (v + xi)).sin() / v.cos().powf(1.0 / a)
                * ((v - a * (v + xi)).cos() / w).powf((1.0 - a) / a)
        }
    }

    /// Increment of `εL` over time `h`.
    pub fn sample<R: Rng + ?Sized>(&self, eps: f64, h: f64, rng: &mut R) -> f64 {
        let s = self.standard(rng);
        let l = if self.alpha == 1.0 {
            let a = h * self.sigma;
            a * s + h * self.shift + 2.0 / PI * self.beta * a * a.ln()
        } else {
            h.powf(1.0 / self.alpha) * self.sigma * s + h * self.shift
        };
        eps * l
    }
}

/// One exact increment of `εL` over `h`; see [`StableIncrement`].
pub fn stable_increment<R: Rng + ?Sized>(
    alpha: f64,
    side_weights: (f64, f64),
    eps: f64,
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::Domain("time step must be positive".into()));
    }
    Ok(StableIncrement::new(alpha, side_weights.0, side_weights.1)?.sample(eps, h, rng))
}

/// For each `u` in `u_grid`, `max_λ |H_+(λu)/H_+(u) - λ^{-r}|` over `lambda_grid`.
pub fn rv_ratio_check(tails: &TailSpec, lambda_grid: &[f64], u_grid: &[f64]) -> Result<Vec<f64>> {
    if lambda_grid.iter().any(|l| !(0.5..=2.0).contains(l)) {
        return Err(Error::Domain("lambda grid must lie in [1/2, 2]".into()));
    }
    if u_grid.windows(2).any(|w| w[0] >= w[1]) || u_grid.iter().any(|&u| u * 0.5 < 1.0) {
        return Err(Error::Domain("u grid must be increasing with u/2 >= 1".into()));
    }
    Ok(u_grid
        .iter()
        .map(|&u| {
            lambda_grid
                .iter()
                .map(|&l| (tails.plus(l * u) / tails.plus(u) - l.powf(-tails.r)).abs())
                .fold(0.0, f64::max)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::path_stream;

    fn stable1() -> LevyModel {
        LevyModel::symmetric_stable(1.0).unwrap()
    }

    #[test]
    fn tail_values() {
        let m = stable1();
        assert!((tail_total(&m, 10.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(tail_plus(&m, 0.5).is_err());
        let one_sided = LevyModel::stable(1.5, 0.0, 1.0).unwrap();
        for u in [1.0, 3.0, 1e6] {
            assert_eq!(tail_minus(&one_sided, u).unwrap(), 0.0);
        }
        let t = TailSpec::new(1.7, 1.0, 0.5, SlowlyVarying::Constant).unwrap();
        assert!((t.plus(8.0) / t.plus(4.0) - 2f64.powf(-1.7)).abs() < 1e-15);
    }

    #[test]
    fn tail_spec_validation() {
        assert!(TailSpec::new(0.0, 1.0, 1.0, SlowlyVarying::Constant).is_err());
        assert!(TailSpec::new(1.0, 0.0, 1.0, SlowlyVarying::Constant).is_err());
        assert!(TailSpec::new(1.0, 1.0, -1.0, SlowlyVarying::Constant).is_err());
        assert!(TailSpec::new(1.0, 1.0, 1.0, SlowlyVarying::LogPower(3.0)).is_err());
        // u^-0.1 (ln(e+u))^2 increases near u = 1
        assert!(TailSpec::new(0.1, 1.0, 1.0, SlowlyVarying::LogPower(2.0)).is_err());
        assert!(TailSpec::new(1.0, 1.0, 1.0, SlowlyVarying::LogPower(2.0)).is_ok());
        assert!(LevyModel::new(
            0.0,
            0.0,
            TailSpec::new(1.0, 1.0, 1.0, SlowlyVarying::Constant).unwrap(),
            InnerProfile::Stable { alpha: 1.5 }
        )
        .is_err());
    }

    #[test]
    fn big_jump_rate_closed_form() {
        let m = stable1();
        assert!((big_jump_rate(&m, 0.01, 0.75).unwrap() - 2.0 * 0.01f64.powf(0.75)).abs() < 1e-14);
        let doubled = LevyModel::stable(1.0, 2.0, 2.0).unwrap();
        assert!((big_jump_rate(&doubled, 0.01, 0.75).unwrap() - 4.0 * 0.01f64.powf(0.75)).abs() < 1e-14);
        let mut prev = f64::INFINITY;
        for k in 1..12 {
            let b = big_jump_rate(&m, 0.5f64.powi(k), 0.7).unwrap();
            assert!(b < prev);
            prev = b;
        }
        assert!(big_jump_rate(&m, 0.01, 0.4).is_err());
        assert!(big_jump_rate(&m, 1.0, 0.7).is_err());
    }

    #[test]
    fn decomposition_moments_closed_form() {
        // ν = |y|^{-2}: ∫_{|y|≤A} y² ν = 2A, first moment 0.
        let d = Decomposition::new(&stable1(), 0.05, 0.7).unwrap();
        let a = 0.05f64.powf(-0.7);
        assert!((d.small_var - 0.0025 * 2.0 * a).abs() < 1e-14);
        assert!(d.small_mean.abs() < 1e-15);
        assert!((d.beta - 2.0 / a).abs() < 1e-14);
        // One-sided α = 1: mean picks up ε ∫_1^A y y^{-2} dy = ε ln A.
        let one = LevyModel::stable(1.0, 0.0, 1.0).unwrap();
        let d = Decomposition::new(&one, 0.05, 0.7).unwrap();
        assert!((d.small_mean - 0.05 * a.ln()).abs() < 1e-14);
        assert!((d.small_var - 0.0025 * a).abs() < 1e-14);
    }

    #[test]
    fn truncated_profile_variance_from_tails_only() {
        let tails = TailSpec::new(1.5, 1.0, 1.0, SlowlyVarying::Constant).unwrap();
        let m = LevyModel::new(0.0, 0.0, tails, InnerProfile::TruncatedEmpty).unwrap();
        let d = Decomposition::new(&m, 0.1, 0.7).unwrap();
        let a = 0.1f64.powf(-0.7);
        // density 1.5 y^{-2.5} per side on (1, A]: ∫ y² = 1.5 (A^{0.5} - 1)/0.5
        let expect = 0.01 * 2.0 * 3.0 * (a.sqrt() - 1.0);
        assert!((d.small_var - expect).abs() < 1e-13);
    }

    #[test]
    fn log_power_moments_match_direct_quadrature() {
        let tails = TailSpec::new(1.2, 1.0, 0.3, SlowlyVarying::LogPower(1.0)).unwrap();
        let m = LevyModel::new(0.0, 0.0, tails, InnerProfile::TruncatedEmpty).unwrap();
        let a: f64 = 50.0;
        // density -H'(y) by central differences, integrated on a fine grid
        let dens = |y: f64| -(tails.shape(y * (1.0 + 1e-6)) - tails.shape(y * (1.0 - 1e-6))) / (2e-6 * y);
        let n = 200_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        let (la, lb) = (0.0f64, a.ln());
        for k in 0..n {
            let s = la + (lb - la) * (k as f64 + 0.5) / n as f64;
            let y = s.exp();
            let w = dens(y) * y * (lb - la) / n as f64;
            m1 += y * w;
            m2 += y * y * w;
        }
        assert!((m.outer_first_moment(a) - 0.7 * m1).abs() < 1e-5 * m1);
        assert!((m.outer_second_moment(a) - 1.3 * m2).abs() < 1e-5 * m2);
    }

    #[test]
    fn interjump_inverse_transform() {
        let d = Decomposition::new(&stable1(), 0.05, 0.7).unwrap();
        let unit = Decomposition { beta: 1.0, ..d.clone() };
        let mut a = path_stream(3, 0);
        let mut b = path_stream(3, 0);
        for _ in 0..100 {
            let t = sample_interjump_time(&unit, &mut a);
            assert_eq!(t, -uniform_open0(&mut b).ln());
        }
        let fast = Decomposition { beta: 2.0, ..d };
        let mut a = path_stream(4, 0);
        let mut b = path_stream(4, 0);
        for _ in 0..100 {
            let slow = sample_interjump_time(&unit, &mut a);
            let quick = sample_interjump_time(&fast, &mut b);
            assert!((quick - slow / 2.0).abs() <= 1e-15 * slow);
        }
    }

    #[test]
    fn interjump_mean_within_clt_band() {
        let d = Decomposition::new(&stable1(), 0.05, 0.7).unwrap();
        let mut rng = path_stream(11, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_interjump_time(&d, &mut rng)).sum::<f64>() / n as f64;
        let band = 4.0 / (d.beta * (n as f64).sqrt());
        assert!((mean - 1.0 / d.beta).abs() < band, "{mean} vs {}", 1.0 / d.beta);
    }

    #[test]
    fn one_sided_jumps_are_positive() {
        let d = Decomposition::new(&LevyModel::stable(1.0, 0.0, 1.0).unwrap(), 0.05, 0.7).unwrap();
        let mut rng = path_stream(5, 0);
        for _ in 0..10_000 {
            assert!(sample_big_jump(&d, &mut rng) > 0.0);
        }
    }

    #[test]
    fn big_jump_median_is_pareto_median() {
        let alpha = 1.3;
        let d = Decomposition::new(&LevyModel::symmetric_stable(alpha).unwrap(), 0.05, 0.7).unwrap();
        let mut rng = path_stream(6, 0);
        let mut mags: Vec<f64> = (0..1_000_000).map(|_| sample_big_jump(&d, &mut rng).abs()).collect();
        mags.sort_by(f64::total_cmp);
        let median = mags[mags.len() / 2];
        let expect = d.threshold() * 2f64.powf(1.0 / alpha);
        // DKW-sized band translated through the local density
        assert!((median / expect - 1.0).abs() < 5e-3, "{median} vs {expect}");
    }

    #[test]
    fn log_power_quantiles_within_dkw_band() {
        let tails = TailSpec::new(1.0, 1.0, 1.0, SlowlyVarying::LogPower(1.5)).unwrap();
        let m = LevyModel::new(0.0, 0.0, tails, InnerProfile::TruncatedEmpty).unwrap();
        let d = Decomposition::new(&m, 0.05, 0.7).unwrap();
        let a = d.threshold();
        // Oracle quantiles by plain bisection on the conditional tail.
        let quantile = |v: f64| {
            let g = |u: f64| tails.shape(u) / tails.shape(a) - v;
            let mut hi = a;
            while g(hi) > 0.0 {
                hi *= 2.0;
            }
            quad::bisect(&g, a, hi, 1e-12 * hi)
        };
        let n = 100_000;
        let mut rng = path_stream(7, 0);
        let draws: Vec<f64> = (0..n).map(|_| sample_big_jump(&d, &mut rng).abs()).collect();
        let dkw = ((2.0f64 / 0.01).ln() / (2.0 * n as f64)).sqrt();
        for p in [0.1, 0.5, 0.9] {
            let q = quantile(1.0 - p);
            let ecdf = draws.iter().filter(|&&w| w <= q).count() as f64 / n as f64;
            assert!((ecdf - p).abs() < dkw, "p={p}: {ecdf}");
        }
        // table inversion agrees with the oracle to relative 1e-9
        let law = d.jump_law().unwrap();
        for v in [0.9, 0.5, 1e-3, 1e-9, 1e-15] {
            let q = law.magnitude_quantile(v);
            assert!((q / quantile(v) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn sign_split_matches_tail_ratio() {
        let m = LevyModel::stable(1.0, 0.4, 1.0).unwrap();
        let d = Decomposition::new(&m, 0.05, 0.7).unwrap();
        let p = tail_minus(&m, d.threshold()).unwrap() / d.beta;
        let n = 100_000;
        let mut rng = path_stream(8, 0);
        let neg = (0..n).filter(|_| sample_big_jump(&d, &mut rng) < 0.0).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((neg - p).abs() < 3.0 * se);
    }

    #[test]
    fn small_increment_moments() {
        let d = Decomposition::new(&stable1(), 0.05, 0.7).unwrap();
        let h = 1e-3;
        let n = 1_000_000;
        let mut rng = path_stream(9, 0);
        let xs: Vec<f64> = (0..n).map(|_| sample_small_increment(&d, h, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = (d.small_var * h).sqrt();
        assert!(mean.abs() < 4.0 * sd / (n as f64).sqrt());
        assert!((var / (d.small_var * h) - 1.0).abs() < 0.05);
    }

    #[test]
    fn stable_domain() {
        let mut rng = path_stream(1, 0);
        assert!(stable_increment(2.0, (1.0, 1.0), 0.1, 1.0, &mut rng).is_err());
        assert!(stable_increment(0.0, (1.0, 1.0), 0.1, 1.0, &mut rng).is_err());
        assert!(stable_increment(1.5, (1.0, 1.0), 0.1, 1.0, &mut rng).is_ok());
    }

    #[test]
    fn rv_ratio() {
        let c = TailSpec::new(1.3, 1.0, 1.0, SlowlyVarying::Constant).unwrap();
        let lam = [0.5, 0.8, 1.0, 1.5, 2.0];
        let dev = rv_ratio_check(&c, &lam, &[10.0, 1e3, 1e6]).unwrap();
        assert!(dev.iter().all(|&d| d < 1e-14));
        let lp = TailSpec::new(1.3, 1.0, 1.0, SlowlyVarying::LogPower(1.0)).unwrap();
        let dev = rv_ratio_check(&lp, &lam, &[1e3, 1e6]).unwrap();
        assert!(dev[1] < dev[0] && dev[0] > 0.0);
        let dev = rv_ratio_check(&lp, &[1.0], &[1e3]).unwrap();
        assert_eq!(dev[0], 0.0);
        assert!(rv_ratio_check(&lp, &[3.0], &[1e3]).is_err());
    }

    #[test]
    fn kappa_consistency() {
        let t = TailSpec::new(0.8, 2.0, 0.5, SlowlyVarying::LogPower(-1.0)).unwrap();
        for k in 1..=8 {
            let u = 10f64.powi(k);
            assert!((t.minus(u) / t.plus(u) - t.kappa()).abs() < 1e-12);
        }
    }
}
