//! Polynomial multi-well potentials, their critical-point landscape and the
//! deterministic gradient flow `x' = -U'(x)`.

use crate::error::{Error, Result};
use crate::quad;

/// Grid resolution of the sign-change scan for roots of `U'`.
pub const SCAN_POINTS: usize = 10_000;
/// Default bisection tolerance for extrema.
pub const ROOT_TOL: f64 = 1e-12;
/// Points closer than this to a saddle are classified as the saddle itself.
pub const SADDLE_TOL: f64 = 1e-9;
/// Default step of the fixed-step RK4 flow integrator.
pub const FLOW_STEP: f64 = 1e-3;
/// Default bound on `|x|` standing in for global well-posedness.
pub const OVERFLOW_BOUND: f64 = 1e6;

/// `|U'|` below this at a non-crossing local minimum of `|U'|` counts as a
/// degenerate (double) critical point.
const TOUCH_TOL: f64 = 1e-8;

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

fn differentiate(c: &[f64]) -> Vec<f64> {
    c.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect()
}

/// `U(x) = Σ c_k x^k` of even degree `≥ 4` with positive leading coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPotential {
    coefficients: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl PolynomialPotential {
    /// Coefficients are given constant term first.
    pub fn new(coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidPotential("non-finite coefficient".into()));
        }
        let mut coefficients = coefficients;
        while coefficients.len() > 1 && *coefficients.last().unwrap() == 0.0 {
            coefficients.pop();
        }
        let degree = coefficients.len().saturating_sub(1);
        if degree < 4 || degree % 2 != 0 {
            return Err(Error::InvalidPotential(format!("degree must be even and at least 4, got {degree}")));
        }
        if coefficients[degree] <= 0.0 {
            return Err(Error::InvalidPotential("leading coefficient must be positive".into()));
        }
        let first = differentiate(&coefficients);
        let second = differentiate(&first);
        Ok(Self { coefficients, first, second })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    pub fn leading(&self) -> f64 {
        self.coefficients[self.degree()]
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        horner(&self.coefficients, x)
    }

    /// `U'(x)`.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        horner(&self.first, x)
    }

    /// `U''(x)`.
    #[inline]
    pub fn curvature(&self, x: f64) -> f64 {
        horner(&self.second, x)
    }

    /// Drift of the gradient dynamics, `-U'(x)`.
    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        -horner(&self.first, x)
    }

    /// Cauchy bound: every real root of `U'` has modulus below this.
    pub fn critical_point_bound(&self) -> f64 {
        let lead = *self.first.last().unwrap();
        let rest = self.first[..self.first.len() - 1].iter().map(|a| (a / lead).abs()).fold(0.0, f64::max);
        1.0 + rest
    }
}

/// Which part of the line a point belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basin {
    /// Basin of attraction of minimum `i` (0-based).
    Well(usize),
    /// Within [`SADDLE_TOL`] of saddle `j` (0-based, between wells `j` and `j + 1`).
    Saddle(usize),
}

/// Interlaced minima and saddles of a potential together with their curvatures.
///
/// Wells are numbered `0..n` from left to right. Well `i` is bounded by
/// saddle `i - 1` on the left and saddle `i` on the right; the outer wells
/// extend to infinity.
#[derive(Debug, Clone, PartialEq)]
pub struct Landscape {
    pub minima: Vec<f64>,
    pub saddles: Vec<f64>,
    pub curvature_min: Vec<f64>,
    pub curvature_saddle: Vec<f64>,
}

impl Landscape {
    /// Builds a landscape from known extrema, checking interlacing and
    /// nondegeneracy.
    pub fn new(
        minima: Vec<f64>,
        saddles: Vec<f64>,
        curvature_min: Vec<f64>,
        curvature_saddle: Vec<f64>,
    ) -> Result<Self> {
        let n = minima.len();
        if n == 0 {
            return Err(Error::NoMinimum);
        }
        if saddles.len() + 1 != n || curvature_min.len() != n || curvature_saddle.len() + 1 != n {
            return Err(Error::NonInterlaced(format!("{} minima need {} saddles, got {}", n, n - 1, saddles.len())));
        }
        let mut points = Vec::with_capacity(2 * n - 1);
        for i in 0..n {
            points.push(minima[i]);
            if i + 1 < n {
                points.push(saddles[i]);
            }
        }
        if points.iter().any(|p| !p.is_finite()) || points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::NonInterlaced("extrema must satisfy m_1 < s_1 < ... < m_n".into()));
        }
        if let Some((i, &c)) = curvature_min.iter().enumerate().find(|(_, &c)| !(c > 0.0)) {
            return Err(Error::DegenerateExtremum { x: minima[i], curvature: c });
        }
        if let Some((j, &c)) = curvature_saddle.iter().enumerate().find(|(_, &c)| !(c < 0.0)) {
            return Err(Error::DegenerateExtremum { x: saddles[j], curvature: c });
        }
        Ok(Self { minima, saddles, curvature_min, curvature_saddle })
    }

    pub fn n_wells(&self) -> usize {
        self.minima.len()
    }

    /// `s_{i-1}` for well `i`, `None` for the left sentinel.
    pub fn left_saddle(&self, i: usize) -> Option<f64> {
        if i == 0 {
            None
        } else {
            Some(self.saddles[i - 1])
        }
    }

    /// `s_i` for well `i`, `None` for the right sentinel.
    pub fn right_saddle(&self, i: usize) -> Option<f64> {
        self.saddles.get(i).copied()
    }

    /// `Δ_0`: smallest distance from a minimum to a neighbouring saddle.
    /// Infinite for a single well.
    pub fn delta0(&self) -> f64 {
        (0..self.n_wells())
            .flat_map(|i| {
                let m = self.minima[i];
                [self.left_saddle(i).map(|s| m - s), self.right_saddle(i).map(|s| s - m)]
            })
            .flatten()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn basin_of(&self, x: f64) -> Basin {
        for (j, &s) in self.saddles.iter().enumerate() {
            if (x - s).abs() < SADDLE_TOL {
                return Basin::Saddle(j);
            }
        }
        Basin::Well(self.saddles.partition_point(|&s| s < x))
    }

    /// Well whose basin contains `x`, treating saddle points as belonging to
    /// no well.
    pub fn well_of(&self, x: f64) -> Option<usize> {
        match self.basin_of(x) {
            Basin::Well(i) => Some(i),
            Basin::Saddle(_) => None,
        }
    }
}

/// Locates and classifies all critical points of `U` in
/// `[-search_radius, search_radius]`.
pub fn analyze(potential: &PolynomialPotential, search_radius: f64, tol: f64) -> Result<Landscape> {
    if !(search_radius > 0.0) || !(tol > 0.0) {
        return Err(Error::Domain("search radius and tolerance must be positive".into()));
    }
    let du = |x: f64| potential.derivative(x);
    let step = 2.0 * search_radius / (SCAN_POINTS - 1) as f64;
    let grid: Vec<f64> = (0..SCAN_POINTS).map(|k| -search_radius + step * k as f64).collect();
    let values: Vec<f64> = grid.iter().map(|&x| du(x)).collect();

    // (position, is_minimum)
    let mut roots: Vec<(f64, bool)> = Vec::new();
    let mut k = 0;
    while k + 1 < SCAN_POINTS {
        let (a, b) = (values[k], values[k + 1]);
        if a == 0.0 {
            let before = if k == 0 { a } else { values[k - 1] };
            if before != 0.0 && (before < 0.0) != (b < 0.0) && b != 0.0 {
                roots.push((grid[k], before < 0.0));
            } else if k > 0 {
                return Err(Error::DegenerateExtremum { x: grid[k], curvature: potential.curvature(grid[k]) });
            }
        } else if b != 0.0 && (a < 0.0) != (b < 0.0) {
            let root = quad::bisect(&du, grid[k], grid[k + 1], tol);
            roots.push((root, a < 0.0));
        } else if k > 0 && b != 0.0 {
            // Grid-local minimum of |U'| without a sign change: a touching root?
            let prev = values[k - 1];
            if (prev < 0.0) == (a < 0.0) && a.abs() <= prev.abs() && a.abs() <= b.abs() {
                let x = golden_min(&|x: f64| du(x).abs(), grid[k - 1], grid[k + 1], tol);
                if du(x).abs() <= TOUCH_TOL {
                    return Err(Error::DegenerateExtremum { x, curvature: potential.curvature(x) });
                }
            }
        }
        k += 1;
    }

    if roots.is_empty() {
        return Err(Error::NoMinimum);
    }
    for &(x, _) in &roots {
        let c = potential.curvature(x);
        if c.abs() < tol {
            return Err(Error::DegenerateExtremum { x, curvature: c });
        }
    }
    let alternates = roots.windows(2).all(|w| w[0].1 != w[1].1);
    if !roots[0].1 || !roots[roots.len() - 1].1 || !alternates {
        return Err(Error::NonInterlaced(
            "critical points must alternate min/max starting and ending with a minimum".into(),
        ));
    }
    let minima: Vec<f64> = roots.iter().filter(|r| r.1).map(|r| r.0).collect();
    let saddles: Vec<f64> = roots.iter().filter(|r| !r.1).map(|r| r.0).collect();
    let curvature_min = minima.iter().map(|&x| potential.curvature(x)).collect();
    let curvature_saddle = saddles.iter().map(|&x| potential.curvature(x)).collect();
    Landscape::new(minima, saddles, curvature_min, curvature_saddle)
}

/// [`analyze`] with the search window taken from the Cauchy root bound.
pub fn analyze_auto(potential: &PolynomialPotential) -> Result<Landscape> {
    analyze(potential, potential.critical_point_bound() * 1.001, ROOT_TOL)
}

fn golden_min<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    while (b - a).abs() > tol {
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    0.5 * (a + b)
}

/// Drift `-U'(x)`.
#[inline]
pub fn drift(potential: &PolynomialPotential, x: f64) -> f64 {
    potential.drift(x)
}

/// One classical RK4 step of `x' = -U'(x)`.
#[inline]
pub fn rk4_step(potential: &PolynomialPotential, x: f64, h: f64) -> f64 {
    let k1 = potential.drift(x);
    let k2 = potential.drift(x + 0.5 * h * k1);
    let k3 = potential.drift(x + 0.5 * h * k2);
    let k4 = potential.drift(x + h * k3);
    x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
}

/// `X^0_t(x0)` by fixed-step RK4; the last step is shortened to land on `t`.
pub fn flow(potential: &PolynomialPotential, x0: f64, t: f64, h: f64, overflow: f64) -> Result<f64> {
    if !(h > 0.0) || !t.is_finite() || t < 0.0 {
        return Err(Error::Domain("flow needs h > 0 and finite t >= 0".into()));
    }
    let full = (t / h).floor();
    let rest = t - full * h;
    let mut x = x0;
    for _ in 0..full as u64 {
        x = rk4_step(potential, x, h);
        if !(x.abs() <= overflow) {
            return Err(Error::Overflow { value: x.abs(), bound: overflow });
        }
    }
    if rest > 0.0 {
        x = rk4_step(potential, x, rest);
    }
    if !(x.abs() <= overflow) {
        return Err(Error::Overflow { value: x.abs(), bound: overflow });
    }
    Ok(x)
}

/// `∫ dz / |U'(center + dir·z)|` over `z ∈ [z_lo, z_hi]`, integrated in
/// `ln z` so the `1/z` behaviour near the critical point `center` stays smooth.
fn log_distance_integral(p: &PolynomialPotential, center: f64, dir: f64, z_lo: f64, z_hi: f64) -> f64 {
    if !(z_hi > z_lo) {
        return 0.0;
    }
    let f = |u: f64| {
        let z = u.exp();
        z / p.derivative(center + dir * z).abs()
    };
    quad::simpson_panels(&f, z_lo.ln(), z_hi.ln(), 24, 1e-11)
}

/// Time for the deterministic flow to travel from `from` to `to`,
/// `∫ dy / |U'(y)|`. `from` may be `±∞` in an outer well. Returns `None` when
/// the flow started at `from` never reaches `to` (wrong side of the
/// attracting minimum, or `to` is the minimum itself).
pub fn passage_time(p: &PolynomialPotential, l: &Landscape, from: f64, to: f64) -> Option<f64> {
    const FAR: f64 = 1e4;
    let i = if from == f64::NEG_INFINITY {
        0
    } else if from == f64::INFINITY {
        l.n_wells() - 1
    } else {
        l.well_of(from)?
    };
    let m = l.minima[i];
    if from == m {
        return if to == m { Some(0.0) } else { None };
    }
    // Flow moves from `from` towards `m`; `dir` points from `m` back to `from`.
    let dir = if from < m { -1.0 } else { 1.0 };
    let z_from = (from - m) * dir;
    let z_to = (to - m) * dir;
    if !(z_to > 0.0) || z_to > z_from {
        return None;
    }
    let saddle = if dir < 0.0 { l.left_saddle(i) } else { l.right_saddle(i) };
    match saddle {
        Some(s) => {
            let span = (s - m).abs();
            let split = 0.5 * span;
            let near_min = log_distance_integral(p, m, dir, z_to, z_from.min(split));
            // Near the saddle, measure distance from `s` pointing back to `m`.
            let near_saddle = if z_from > split {
                log_distance_integral(p, s, -dir, span - z_from, span - z_to.max(split))
            } else {
                0.0
            };
            Some(near_min + near_saddle)
        }
        None => {
            let far = FAR * (1.0 + m.abs());
            let body = log_distance_integral(p, m, dir, z_to, z_from.min(far));
            let tail = if z_from > far {
                // |U'(y)| ~ d·a_d·|y|^{d-1} far out.
                let d = p.degree() as f64;
                let lead = d * p.leading();
                let tail_from = |z: f64| 1.0 / (lead * (d - 2.0) * z.powf(d - 2.0));
                tail_from(far) - if z_from.is_finite() { tail_from(z_from) } else { 0.0 }
            } else {
                0.0
            };
            Some(body + tail)
        }
    }
}

/// Constant `c` such that, for every `ε` up to the largest value at which
/// the level sets are well defined, the flow started anywhere in
/// `[s_{i-1}+ε^γ, s_i-ε^γ]` is within `ε^{2γ}/2` of `m_i` after `c|ln ε|`,
/// and a point at distance `ε^γ` from a saddle has moved a further
/// `2ε^{2γ}` away within `c ε^γ`.
pub fn relaxation_constant(p: &PolynomialPotential, l: &Landscape, gamma: f64) -> f64 {
    assert!(gamma > 0.0, "gamma must be positive");
    // Work in v = ε^γ; ln ε = ln v / γ.
    let mut v_max: f64 = 0.5f64.powf(gamma);
    for i in 0..l.n_wells() {
        for s in [l.left_saddle(i), l.right_saddle(i)].into_iter().flatten() {
            let d = 0.99 * (s - l.minima[i]).abs();
            v_max = v_max.min((-1.0 + (1.0 + 8.0 * d).sqrt()) / 4.0);
        }
    }
    // Below `v_min` the targets approach rounding level; the linearised
    // flow gives the v -> 0 limits of both ratios in closed form.
    let v_min = (v_max * 1e-3).max(1e-4).min(v_max);
    let points = 120;
    let mut c: f64 = 0.0;
    for i in 0..l.n_wells() {
        let k = l.curvature_min[i];
        for s in [l.left_saddle(i), l.right_saddle(i)].into_iter().flatten() {
            let j = l.saddles.iter().position(|&x| x == s).expect("saddle of well");
            c = c.max(gamma * (2.0 / k + 1.0 / l.curvature_saddle[j].abs()));
        }
        c = c.max(gamma * 2.0 / k);
    }
    for &ks in &l.curvature_saddle {
        c = c.max(2.0 / ks.abs());
    }
    for k in 0..points {
        let v = v_max * (v_min / v_max).powf(k as f64 / (points - 1) as f64);
        let log_eps = (v.ln() / gamma).abs();
        for i in 0..l.n_wells() {
            let m = l.minima[i];
            let target = 0.5 * v * v;
            let starts = [
                (l.left_saddle(i).map_or(f64::NEG_INFINITY, |s| s + v), m - target),
                (l.right_saddle(i).map_or(f64::INFINITY, |s| s - v), m + target),
            ];
            for (from, to) in starts {
                let already_inside = (from - m).abs() <= target;
                if !already_inside {
                    if let Some(t) = passage_time(p, l, from, to) {
                        c = c.max(t / log_eps);
                    }
                }
            }
        }
        for &s in &l.saddles {
            for dir in [-1.0, 1.0] {
                let t = log_distance_integral(p, s, dir, v, v + 2.0 * v * v);
                c = c.max(t / v);
            }
        }
    }
    c
}

/// `c·|ln ε|` with `c` from [`relaxation_constant`].
pub fn relaxation_time(p: &PolynomialPotential, l: &Landscape, eps: f64, gamma: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) || !(gamma > 0.0) {
        return Err(Error::Domain("relaxation time needs 0 < eps < 1 and gamma > 0".into()));
    }
    Ok(relaxation_constant(p, l, gamma) * eps.ln().abs())
}
