//! The metastable limit: exit rates `λ^i(ε)`, the generator `Q` of the
//! limiting Markov chain on the minima, its transition matrices, and the
//! Gaussian two-well comparison.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::LevyModel;
use crate::potential::{Landscape, PolynomialPotential};
use crate::rng::exponential;

/// Rate matrix of a continuous-time chain on `n` states, row major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    pub n: usize,
    pub q: Vec<f64>,
}

impl GeneratorMatrix {
    /// Builds from rows, checking shape, sign and zero row sums (to `1e-12`
    /// relative to the row scale).
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::Domain("generator must be a nonempty square matrix".into()));
        }
        for (i, r) in rows.iter().enumerate() {
            let scale = r.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if r.iter().enumerate().any(|(j, &v)| j != i && !(v >= 0.0)) {
                return Err(Error::Domain(format!("row {} has a negative off-diagonal rate", i + 1)));
            }
            if r.iter().sum::<f64>().abs() > 1e-12 * scale {
                return Err(Error::Domain(format!("row {} does not sum to zero", i + 1)));
            }
        }
        Ok(Self { n, q: rows.concat() })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i * self.n + j]
    }

    /// Total jump rate `q_i = -q_ii`.
    pub fn rate(&self, i: usize) -> f64 {
        -self.get(i, i)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.q.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { n: self.n, q: self.q.iter().map(|v| v * factor).collect() }
    }

    /// Jump probabilities `q_ij/q_i` out of `i`; `None` for an absorbing state.
    pub fn jump_distribution(&self, i: usize) -> Option<Vec<f64>> {
        let qi = self.rate(i);
        (qi > 0.0).then(|| (0..self.n).map(|j| if j == i { 0.0 } else { self.get(i, j) / qi }).collect())
    }
}

/// `|s - m|^{-r}`, with `None` standing for an infinite sentinel saddle.
fn inv_pow(s: Option<f64>, m: f64, r: f64) -> f64 {
    s.map_or(0.0, |s| (s - m).abs().powf(-r))
}

/// The generator of the limiting chain under the time scale `t/H(1/ε)`:
/// `q_ij = (κ1{j<i} + 1{j>i})/(1+κ) · | |s_{j-1}-m_i|^{-r} - |s_j-m_i|^{-r} |`.
pub fn compute_generator(landscape: &Landscape, r: f64, kappa: f64) -> Result<GeneratorMatrix> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("tail index must be positive, got {r}")));
    }
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(Error::Domain(format!("tail ratio must be >= 0, got {kappa}")));
    }
    let n = landscape.n_wells();
    let mut q = vec![0.0; n * n];
    for i in 0..n {
        let m = landscape.minima[i];
        let mut total = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let weight = if j < i { kappa } else { 1.0 } / (1.0 + kappa);
            let near = inv_pow(landscape.left_saddle(j), m, r);
            let far = inv_pow(landscape.right_saddle(j), m, r);
            let v = weight * (near - far).abs();
            q[i * n + j] = v;
            total += v;
        }
        q[i * n + i] = -total;
    }
    Ok(GeneratorMatrix { n, q })
}

/// `q_i = κ/(1+κ)|s_{i-1}-m_i|^{-r} + 1/(1+κ)|s_i-m_i|^{-r}`, the closed form
/// the off-diagonal entries of each row telescope to.
pub fn total_rate(landscape: &Landscape, r: f64, kappa: f64, i: usize) -> f64 {
    let m = landscape.minima[i];
    (kappa * inv_pow(landscape.left_saddle(i), m, r) + inv_pow(landscape.right_saddle(i), m, r)) / (1.0 + kappa)
}

/// `λ^i(ε) = H_-((s_{i-1}-m_i)/ε) + H_+((s_i-m_i)/ε)`, sentinel terms 0.
pub fn exit_rate(landscape: &Landscape, model: &LevyModel, well: usize, eps: f64) -> f64 {
    let m = landscape.minima[well];
    let left = landscape.left_saddle(well).map_or(0.0, |s| model.tails.minus((m - s) / eps));
    let right = landscape.right_saddle(well).map_or(0.0, |s| model.tails.plus((s - m) / eps));
    left + right
}

/// `1/H(1/ε)`: one unit of chain time in model time.
pub fn time_scale(model: &LevyModel, eps: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Domain(format!("eps must lie in (0, 1), got {eps}")));
    }
    Ok(1.0 / model.tails.total(1.0 / eps))
}

/// Factor `H(1/ε)·r/ε^r` converting the canonical generator to the time
/// normalisation `rt/ε^r` customary for stable noise (2 for the symmetric
/// stable measure `|y|^{-1-α} dy`).
pub fn stable_normalisation_factor(model: &LevyModel, eps: f64) -> Result<f64> {
    let r = model.tails.r;
    Ok(r * eps.powf(-r) / time_scale(model, eps)?)
}

/// `e^{tQ}` by uniformization. The interval is halved until `t·max q_i ≤ 1`,
/// the Poisson series is truncated once the neglected mass drops below
/// `1e-14`, and the result is squared back up.
pub fn chain_transition_matrix(q: &GeneratorMatrix, t: f64) -> Result<Vec<Vec<f64>>> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
    }
    let n = q.n;
    let lambda = (0..n).map(|i| q.rate(i)).fold(0.0, f64::max);
    let mut p = identity(n);
    if lambda == 0.0 || t == 0.0 {
        return Ok(p);
    }
    let mut squarings = 0;
    let mut tau = t;
    while lambda * tau > 1.0 {
        tau *= 0.5;
        squarings += 1;
    }
    // Uniformized kernel K = I + Q/Λ, entrywise nonnegative.
    let k: Vec<Vec<f64>> =
        (0..n).map(|i| (0..n).map(|j| q.get(i, j) / lambda + if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mean = lambda * tau;
    let mut weight = (-mean).exp();
    let mut mass = weight;
    let mut power = identity(n);
    p = scale(&power, weight);
    let mut m = 0;
    while 1.0 - mass > 1e-14 && m < 1000 {
        m += 1;
        power = matmul(&power, &k);
        weight *= mean / m as f64;
        mass += weight;
        add_scaled(&mut p, &power, weight);
    }
    for _ in 0..squarings {
        p = matmul(&p, &p);
    }
    Ok(p)
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect()
}

fn scale(a: &[Vec<f64>], s: f64) -> Vec<Vec<f64>> {
    a.iter().map(|r| r.iter().map(|v| v * s).collect()).collect()
}

fn add_scaled(a: &mut [Vec<f64>], b: &[Vec<f64>], s: f64) {
    for (ra, rb) in a.iter_mut().zip(b) {
        for (x, y) in ra.iter_mut().zip(rb) {
            *x += s * y;
        }
    }
}

fn matmul(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = b[0].len();
    a.iter().map(|row| (0..n).map(|j| row.iter().zip(b).map(|(x, rb)| x * rb[j]).sum()).collect()).collect()
}

/// Holding time in `i` and the state jumped to; `None` if `i` is absorbing.
pub fn first_jump<R: Rng + ?Sized>(q: &GeneratorMatrix, i: usize, rng: &mut R) -> Option<(f64, usize)> {
    let dist = q.jump_distribution(i)?;
    let hold = exponential(q.rate(i), rng);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut next = i;
    for (j, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            next = j;
            acc += p;
            if u < acc {
                break;
            }
        }
    }
    Some((hold, next))
}

/// Jump times and states of the chain started in `i0` up to `t_end`; the
/// first entry is `(0, i0)`.
pub fn chain_jumps<R: Rng + ?Sized>(q: &GeneratorMatrix, i0: usize, t_end: f64, rng: &mut R) -> Vec<(f64, usize)> {
    let mut path = vec![(0.0, i0)];
    let (mut t, mut i) = (0.0, i0);
    while let Some((hold, next)) = first_jump(q, i, rng) {
        t += hold;
        if t > t_end {
            break;
        }
        i = next;
        path.push((t, i));
    }
    path
}

/// States of the chain at each time of the increasing `t_grid`.
pub fn simulate_chain<R: Rng + ?Sized>(q: &GeneratorMatrix, i0: usize, t_grid: &[f64], rng: &mut R) -> Vec<usize> {
    let t_end = t_grid.iter().copied().fold(0.0, f64::max);
    let path = chain_jumps(q, i0, t_end, rng);
    t_grid
        .iter()
        .map(|&t| {
            let k = path.partition_point(|&(s, _)| s <= t);
            path[k.saturating_sub(1)].1
        })
        .collect()
}

/// Every state reaches every other along positive rates.
pub fn is_irreducible(q: &GeneratorMatrix) -> bool {
    let n = q.n;
    (0..n).all(|start| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(i) = stack.pop() {
            for (j, s) in seen.iter_mut().enumerate() {
                if !*s && q.get(i, j) > 0.0 {
                    *s = true;
                    stack.push(j);
                }
            }
        }
        seen.iter().all(|&s| s)
    })
}

/// Brownian two-well comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComparison {
    /// `[[0, 0], [1, -1]]`: the deep well absorbs.
    pub generator: GeneratorMatrix,
    /// `2(U(s) - U(m_shallow))`, the limit of `ε² ln(mean exit time)`.
    pub barrier: f64,
    /// 0-based index of the deeper well in the input landscape.
    pub deep_well: usize,
    pub shallow_well: usize,
    /// True when the input had its deeper well on the right, so that the
    /// canonical orientation is the mirror image.
    pub reflected: bool,
}

/// Depth difference below which two wells count as equally deep.
pub const EQUAL_DEPTH_TOL: f64 = 1e-9;

pub fn gaussian_comparison(potential: &PolynomialPotential, landscape: &Landscape) -> Result<GaussianComparison> {
    if landscape.n_wells() != 2 {
        return Err(Error::NotTwoWell(landscape.n_wells()));
    }
    let u0 = potential.value(landscape.minima[0]);
    let u1 = potential.value(landscape.minima[1]);
    if (u0 - u1).abs() < EQUAL_DEPTH_TOL {
        return Err(Error::EqualDepth((u0 - u1).abs()));
    }
    let (deep, shallow) = if u0 < u1 { (0, 1) } else { (1, 0) };
    let barrier = 2.0 * (potential.value(landscape.saddles[0]) - potential.value(landscape.minima[shallow]));
    Ok(GaussianComparison {
        generator: GeneratorMatrix { n: 2, q: vec![0.0, 0.0, 1.0, -1.0] },
        barrier,
        deep_well: deep,
        shallow_well: shallow,
        reflected: deep == 1,
    })
}
