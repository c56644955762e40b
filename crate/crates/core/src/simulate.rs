//! Path simulation of `dX = -U'(X) dt + ε dL`: Euler evolution under the
//! small-jump surrogate between big-jump arrivals, exact injection of the
//! big jumps, and the stopping-time machinery built on top of it.
//!
//! Time is discretised on the global grid `k·h`. Big-jump arrivals and
//! stopping deadlines are extra breakpoints: the substep that ends at an
//! arrival is completed first and the jump is added afterwards.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::{self, Decomposition, LevyModel, StableIncrement};
use crate::limitchain;
use crate::potential::{rk4_step, Landscape, PolynomialPotential, OVERFLOW_BOUND};
use crate::rng::{path_stream, PathRng};

/// How increments of `εL` are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Gaussian surrogate for jumps below `ε^{-ρ}` plus compound Poisson big jumps.
    Decomposed,
    /// Exact stable increments on every substep; no separate big-jump process.
    ExactStable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub eps: f64,
    pub rho: f64,
    pub gamma: f64,
    /// Stopping sets use the margin `ε^margin_exponent` around saddles.
    pub margin_exponent: f64,
    /// Euler step.
    pub h: f64,
    /// Largest simulated time.
    pub horizon: f64,
    /// Paths with `|x|` above this are stopped and flagged.
    pub overflow: f64,
    /// Radius of the balls `B_Δ(m_i)`.
    pub delta: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl SimConfig {
    /// Defaults: `ρ = 0.7`, `γ = 0.05`, margin `ε`, `h = 1e-3`, unbounded
    /// horizon, `Δ = Δ_0/4` is left to the caller (`delta` starts at 0).
    pub fn new(eps: f64) -> Self {
        Self {
            eps,
            rho: 0.7,
            gamma: 0.05,
            margin_exponent: 1.0,
            h: 1e-3,
            horizon: f64::INFINITY,
            overflow: OVERFLOW_BOUND,
            delta: 0.0,
            seed: 0,
            mode: Mode::Decomposed,
        }
    }

    /// `ε^margin_exponent`, the saddle margin of `σ`, `Ω_ε`, `T` and `S`.
    pub fn margin(&self) -> f64 {
        self.eps.powf(self.margin_exponent)
    }

    /// `ε^{2γ}/2`, the tube radius around the deterministic flow.
    pub fn tube_radius(&self) -> f64 {
        0.5 * self.eps.powf(2.0 * self.gamma)
    }

    fn check_numerics(&self, landscape: &Landscape) -> Vec<String> {
        let mut v = Vec::new();
        if !(self.eps > 0.0 && self.eps < 1.0) {
            v.push(format!("0<ε<1 (got {})", self.eps));
        }
        if !(self.h > 0.0 && self.h.is_finite()) {
            v.push(format!("h>0 (got {})", self.h));
        }
        if !(self.horizon > 0.0) {
            v.push(format!("horizon>0 (got {})", self.horizon));
        }
        if !(self.overflow > 0.0) {
            v.push(format!("overflow>0 (got {})", self.overflow));
        }
        if !(self.margin_exponent > 0.0) {
            v.push(format!("margin_exponent>0 (got {})", self.margin_exponent));
        }
        let d0 = landscape.delta0();
        if !(self.delta > 0.0 && self.delta < d0) {
            v.push(format!("0<Δ<Δ_0={d0} (got {})", self.delta));
        }
        if !(2.0 * self.margin() < d0) {
            v.push(format!("2ε^margin<Δ_0={d0} (got margin {})", self.margin()));
        }
        v
    }

    /// Every violated constraint for a run under `model` on `landscape`.
    pub fn violations(&self, landscape: &Landscape, model: &LevyModel) -> Vec<String> {
        let mut v = parameter_violations(self.rho, self.gamma, model.tails.r);
        v.extend(self.check_numerics(landscape));
        if self.mode == Mode::ExactStable && model.stable_weights().is_none() {
            v.push("exact stable mode needs a stable Lévy model".into());
        }
        v
    }

    pub fn validate(&self, landscape: &Landscape, model: &LevyModel) -> Result<()> {
        let v = self.violations(landscape, model);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v))
        }
    }
}

/// The inequalities tying `ρ`, `γ` and the tail index `r` together. Each
/// violated one is named.
pub fn parameter_violations(rho: f64, gamma: f64, r: f64) -> Vec<String> {
    let mut v = Vec::new();
    if !(rho > 0.5 && rho < 1.0) {
        v.push(format!("1/2<ρ<1 (ρ={rho})"));
    }
    if !(gamma > 0.0 && gamma < (1.0 - rho) / 4.0) {
        v.push(format!("0<γ<(1−ρ)/4 (γ={gamma}, ρ={rho})"));
    }
    if !(2.0 * gamma < rho && rho < 1.0 - 2.0 * gamma) {
        v.push(format!("2γ<ρ<1−2γ (γ={gamma}, ρ={rho})"));
    }
    if !(r * (2.0 * rho - 1.0) + gamma > 0.0) {
        v.push(format!("r(2ρ−1)+γ>0 (r={r}, ρ={rho}, γ={gamma})"));
    }
    v
}

/// `50/λ^i(ε)`, the default horizon for runs started in well `i`.
pub fn default_horizon(landscape: &Landscape, model: &LevyModel, eps: f64, well: usize) -> f64 {
    50.0 / limitchain::exit_rate(landscape, model, well, eps)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopKind {
    /// Left `[s_{i-1}+ε^γ, s_i-ε^γ]`.
    Sigma,
    /// Entered another well's `Ω_ε`.
    BigT,
    /// Entered another minimum's `Δ`-ball.
    Tau,
    /// Left the `2ε^γ`-ball around a saddle.
    SaddleS,
    /// Deterministic deadline.
    Time,
}

impl StopKind {
    pub fn label(&self) -> &'static str {
        match self {
            StopKind::Sigma => "sigma",
            StopKind::BigT => "big_t",
            StopKind::Tau => "tau",
            StopKind::SaddleS => "saddle",
            StopKind::Time => "time",
        }
    }
}

/// One simulated event. Well indices are 0-based; JSON output is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitRecord {
    pub start_well: Option<usize>,
    /// `None` when the horizon was reached or the path overflowed.
    pub stop_kind: Option<StopKind>,
    pub stop_time: f64,
    pub landing_well: Option<usize>,
    /// Big-jump arrivals strictly before `stop_time`.
    pub n_big_jumps: u64,
    pub overflowed: bool,
    /// Position at `stop_time`.
    pub x: f64,
}

impl ExitRecord {
    pub fn censored(&self) -> bool {
        self.stop_kind.is_none()
    }

    /// `{"well":i,"kind":"sigma","t":…,"landing":j,"jumps":k,"overflow":false}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "well": self.start_well.map(|i| i + 1),
            "kind": self.stop_kind.map(|k| k.label()),
            "t": self.stop_time,
            "landing": self.landing_well.map(|j| j + 1),
            "jumps": self.n_big_jumps,
            "overflow": self.overflowed,
        })
        .to_string()
    }
}

pub fn write_json_lines<W: Write>(records: &[ExitRecord], mut out: W) -> Result<()> {
    for r in records {
        writeln!(out, "{}", r.to_json_line())?;
    }
    Ok(())
}

/// A triggered stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stop {
    pub kind: StopKind,
    pub landing: Option<usize>,
}

/// Decides after each substep and each big jump whether the path stops.
pub trait StoppingRule {
    fn check(&mut self, t: f64, x: f64) -> Option<Stop>;

    /// Time at which the rule fires regardless of position.
    fn deadline(&self) -> f64 {
        f64::INFINITY
    }
}

/// Stops at a fixed time.
#[derive(Debug, Clone, Copy)]
pub struct AtTime(pub f64);

impl StoppingRule for AtTime {
    fn check(&mut self, t: f64, _x: f64) -> Option<Stop> {
        (t >= self.0).then_some(Stop { kind: StopKind::Time, landing: None })
    }

    fn deadline(&self) -> f64 {
        self.0
    }
}

/// Never stops; the horizon ends the run.
#[derive(Debug, Clone, Copy)]
pub struct Never;

impl StoppingRule for Never {
    fn check(&mut self, _t: f64, _x: f64) -> Option<Stop> {
        None
    }
}

/// Closed interval, possibly unbounded on one side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// The stopping sets of a landscape at a given margin and ball radius.
#[derive(Debug, Clone)]
pub struct StoppingSets {
    /// `[s_{i-1}+v, s_i-v]`.
    pub interior: Vec<Interval>,
    /// `Ω^i_ε = [s_{i-1}+2v, s_i-2v]`.
    pub omega: Vec<Interval>,
    /// `B_Δ(m_i)`.
    pub ball: Vec<Interval>,
    /// `B_{2v}(s_j)`.
    pub saddle_ball: Vec<Interval>,
}

impl StoppingSets {
    pub fn new(landscape: &Landscape, margin: f64, delta: f64) -> Self {
        let shrink = |i: usize, w: f64| Interval {
            lo: landscape.left_saddle(i).map_or(f64::NEG_INFINITY, |s| s + w),
            hi: landscape.right_saddle(i).map_or(f64::INFINITY, |s| s - w),
        };
        let n = landscape.n_wells();
        Self {
            interior: (0..n).map(|i| shrink(i, margin)).collect(),
            omega: (0..n).map(|i| shrink(i, 2.0 * margin)).collect(),
            ball: landscape.minima.iter().map(|&m| Interval { lo: m - delta, hi: m + delta }).collect(),
            saddle_ball: landscape
                .saddles
                .iter()
                .map(|&s| Interval { lo: s - 2.0 * margin, hi: s + 2.0 * margin })
                .collect(),
        }
    }

    /// Well `j` with `x ∈ Ω^j_ε`, if any.
    pub fn omega_of(&self, x: f64) -> Option<usize> {
        self.omega.iter().position(|o| o.contains(x))
    }

    /// Well `j` with `x ∈ B_Δ(m_j)`, if any.
    pub fn ball_of(&self, x: f64) -> Option<usize> {
        self.ball.iter().position(|b| b.contains(x))
    }
}

/// Exit from an interval; the landing well is read off the `Ω_ε` sets.
pub struct ExitInterval<'a> {
    pub interval: Interval,
    pub kind: StopKind,
    pub sets: &'a StoppingSets,
}

impl StoppingRule for ExitInterval<'_> {
    fn check(&mut self, _t: f64, x: f64) -> Option<Stop> {
        (!self.interval.contains(x)).then(|| Stop { kind: self.kind, landing: self.sets.omega_of(x) })
    }
}

/// Entry into any of `targets`, each tagged with its well.
pub struct EnterAny {
    pub targets: Vec<(usize, Interval)>,
    pub kind: StopKind,
}

impl StoppingRule for EnterAny {
    fn check(&mut self, _t: f64, x: f64) -> Option<Stop> {
        self.targets.iter().find(|(_, iv)| iv.contains(x)).map(|&(j, _)| Stop { kind: self.kind, landing: Some(j) })
    }
}

/// Observes a running path.
pub trait Observer {
    fn on_step(&mut self, _t: f64, _x: f64) {}
    fn on_jump(&mut self, _t: f64, _size: f64) {}
}

impl Observer for () {}

/// Records `(t, x)` every `stride` substeps.
pub struct Trace {
    pub stride: usize,
    pub points: Vec<(f64, f64)>,
    count: usize,
}

impl Trace {
    pub fn new(stride: usize) -> Self {
        Self { stride: stride.max(1), points: Vec::new(), count: 0 }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "t,x")?;
        for (t, x) in &self.points {
            writeln!(out, "{t},{x}")?;
        }
        Ok(())
    }
}

impl Observer for Trace {
    fn on_step(&mut self, t: f64, x: f64) {
        if self.count % self.stride == 0 {
            self.points.push((t, x));
        }
        self.count += 1;
    }
}

/// Time of the first big jump whose size exceeds `bound`.
pub struct FirstJumpOver {
    pub bound: f64,
    pub time: Option<f64>,
}

impl Observer for FirstJumpOver {
    fn on_jump(&mut self, t: f64, size: f64) {
        if self.time.is_none() && size.abs() > self.bound {
            self.time = Some(t);
        }
    }
}

/// Mutable state of one path: position, time, grid position, pending
/// big-jump arrival and its random stream.
#[derive(Debug, Clone)]
pub struct PathState {
    t: f64,
    x: f64,
    /// Index of the next grid point `k·h` strictly after `t`.
    k: u64,
    next_jump: f64,
    n_big_jumps: u64,
    start_well: Option<usize>,
    rng: PathRng,
}

impl PathState {
    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn n_big_jumps(&self) -> u64 {
        self.n_big_jumps
    }

    pub fn rng(&mut self) -> &mut PathRng {
        &mut self.rng
    }
}

enum Increment {
    Decomposed,
    Stable(StableIncrement),
}

/// Everything needed to simulate paths: potential, landscape, run
/// configuration and the noise decomposition.
pub struct Simulator {
    potential: PolynomialPotential,
    landscape: Landscape,
    cfg: SimConfig,
    decomposition: Decomposition,
    increment: Increment,
    sets: StoppingSets,
}

impl Simulator {
    pub fn new(
        potential: PolynomialPotential,
        landscape: Landscape,
        model: &LevyModel,
        cfg: SimConfig,
    ) -> Result<Self> {
        cfg.validate(&landscape, model)?;
        let decomposition = Decomposition::new(model, cfg.eps, cfg.rho)?;
        let increment = match cfg.mode {
            Mode::Decomposed => Increment::Decomposed,
            Mode::ExactStable => {
                let (c1, c2) = model.stable_weights().expect("validated");
                Increment::Stable(StableIncrement::new(model.tails.r, c1, c2)?)
            }
        };
        let sets = StoppingSets::new(&landscape, cfg.margin(), cfg.delta);
        Ok(Self { potential, landscape, cfg, decomposition, increment, sets })
    }

    /// Simulator driven by an explicit decomposition (for example a purely
    /// Brownian one). The `ρ`/`γ` constraints are not checked.
    pub fn with_decomposition(
        potential: PolynomialPotential,
        landscape: Landscape,
        decomposition: Decomposition,
        mut cfg: SimConfig,
    ) -> Result<Self> {
        let v = cfg.check_numerics(&landscape);
        if !v.is_empty() {
            return Err(Error::Config(v));
        }
        cfg.mode = Mode::Decomposed;
        let sets = StoppingSets::new(&landscape, cfg.margin(), cfg.delta);
        Ok(Self { potential, landscape, cfg, decomposition, increment: Increment::Decomposed, sets })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn landscape(&self) -> &Landscape {
        &self.landscape
    }

    pub fn potential(&self) -> &PolynomialPotential {
        &self.potential
    }

    pub fn decomposition(&self) -> &Decomposition {
        &self.decomposition
    }

    pub fn sets(&self) -> &StoppingSets {
        &self.sets
    }

    /// Fresh path at `x0` at time 0 on stream `path_index`. The first
    /// big-jump arrival is drawn here, before anything else.
    pub fn start(&self, x0: f64, path_index: u64) -> PathState {
        let mut rng = path_stream(self.cfg.seed, path_index);
        let next_jump = match self.increment {
            Increment::Decomposed => levy::sample_interjump_time(&self.decomposition, &mut rng),
            Increment::Stable(_) => f64::INFINITY,
        };
        PathState { t: 0.0, x: x0, k: 1, next_jump, n_big_jumps: 0, start_well: self.landscape.well_of(x0), rng }
    }

    #[inline]
    fn substep(&self, x: f64, dt: f64, rng: &mut PathRng) -> f64 {
        let f = self.potential.drift(x);
        // Tamed drift: equal to Euler up to O(dt²), bounded after huge jumps.
        let moved = x + dt * f / (1.0 + dt * f.abs());
        let noise = match &self.increment {
            Increment::Decomposed => levy::sample_small_increment(&self.decomposition, dt, rng),
            Increment::Stable(s) => s.sample(self.cfg.eps, dt, rng),
        };
        moved + noise
    }

    /// Evolves `x` for `duration` under the dynamics between big jumps, in
    /// substeps of `h` with the last one shortened.
    pub fn step_interval(&self, x: f64, duration: f64, rng: &mut PathRng) -> Result<f64> {
        if !(duration >= 0.0) {
            return Err(Error::Domain(format!("duration must be >= 0, got {duration}")));
        }
        let h = self.cfg.h;
        let full = (duration / h).floor() as u64;
        let rest = duration - full as f64 * h;
        let mut x = x;
        for _ in 0..full {
            x = self.substep(x, h, rng);
            self.check_overflow(x)?;
        }
        if rest > 0.0 {
            x = self.substep(x, rest, rng);
            self.check_overflow(x)?;
        }
        Ok(x)
    }

    fn check_overflow(&self, x: f64) -> Result<()> {
        if x.abs() <= self.cfg.overflow {
            Ok(())
        } else {
            Err(Error::Overflow { value: x.abs(), bound: self.cfg.overflow })
        }
    }

    fn record(&self, state: &PathState, stop: Option<Stop>, overflowed: bool) -> ExitRecord {
        ExitRecord {
            start_well: state.start_well,
            stop_kind: stop.map(|s| s.kind),
            stop_time: state.t,
            landing_well: stop.and_then(|s| s.landing),
            n_big_jumps: state.n_big_jumps,
            overflowed,
            x: state.x,
        }
    }

    /// Runs `state` until `rule` fires, the path overflows, or `cfg.horizon`
    /// is reached. Calling again with a later horizon continues the path.
    pub fn simulate_until(&self, state: &mut PathState, rule: &mut dyn StoppingRule) -> ExitRecord {
        self.simulate_observed(state, rule, self.cfg.horizon, &mut ())
    }

    /// [`Simulator::simulate_until`] with an explicit horizon and observer.
    pub fn simulate_observed(
        &self,
        state: &mut PathState,
        rule: &mut dyn StoppingRule,
        horizon: f64,
        observer: &mut dyn Observer,
    ) -> ExitRecord {
        let h = self.cfg.h;
        let end = horizon.min(rule.deadline());
        loop {
            if state.t >= end {
                let stop = rule.check(state.t, state.x);
                return self.record(state, stop, false);
            }
            let grid = state.k as f64 * h;
            let mut t_next = grid.min(end);
            let jump_now = state.next_jump <= t_next;
            if jump_now {
                t_next = state.next_jump;
            }
            let dt = t_next - state.t;
            if dt > 0.0 {
                state.x = self.substep(state.x, dt, &mut state.rng);
            }
            state.t = t_next;
            if t_next >= grid {
                state.k += 1;
            }
            if !(state.x.abs() <= self.cfg.overflow) {
                return self.record(state, None, true);
            }
            observer.on_step(state.t, state.x);
            if let Some(stop) = rule.check(state.t, state.x) {
                return self.record(state, Some(stop), false);
            }
            if jump_now {
                let size = self.cfg.eps * levy::sample_big_jump(&self.decomposition, &mut state.rng);
                state.x += size;
                state.n_big_jumps += 1;
                state.next_jump += levy::sample_interjump_time(&self.decomposition, &mut state.rng);
                observer.on_jump(state.t, size);
                if !(state.x.abs() <= self.cfg.overflow) {
                    return self.record(state, None, true);
                }
                if let Some(stop) = rule.check(state.t, state.x) {
                    // Only arrivals strictly before the stop are counted.
                    let mut rec = self.record(state, Some(stop), false);
                    rec.n_big_jumps -= 1;
                    return rec;
                }
            }
        }
    }

    fn check_well(&self, well: usize) -> Result<()> {
        if well < self.landscape.n_wells() {
            Ok(())
        } else {
            Err(Error::Precondition(format!("well index {well} out of range")))
        }
    }

    /// `σ^i`: first exit from `[s_{i-1}+ε^γ, s_i-ε^γ]` started at `x0 ∈ Ω^i_ε`
    /// (default `m_i`).
    pub fn first_exit_sigma(&self, well: usize, x0: Option<f64>, path_index: u64) -> Result<ExitRecord> {
        self.check_well(well)?;
        let x0 = x0.unwrap_or(self.landscape.minima[well]);
        if !self.sets.omega[well].contains(x0) {
            return Err(Error::Precondition(format!("start {x0} is outside Ω^{}_ε", well + 1)));
        }
        let mut rule = ExitInterval { interval: self.sets.interior[well], kind: StopKind::Sigma, sets: &self.sets };
        let mut state = self.start(x0, path_index);
        Ok(self.simulate_until(&mut state, &mut rule))
    }

    fn others(&self, well: usize, sets: &[Interval]) -> Vec<(usize, Interval)> {
        sets.iter().copied().enumerate().filter(|&(j, _)| j != well).collect()
    }

    /// `T^i`: first entry into `∪_{k≠i} Ω^k_ε`, started at `x0 ∈ Ω^i_ε`.
    pub fn transition_big_t(&self, well: usize, x0: Option<f64>, path_index: u64) -> Result<ExitRecord> {
        self.check_well(well)?;
        let x0 = x0.unwrap_or(self.landscape.minima[well]);
        if !self.sets.omega[well].contains(x0) {
            return Err(Error::Precondition(format!("start {x0} is outside Ω^{}_ε", well + 1)));
        }
        let mut rule = EnterAny { targets: self.others(well, &self.sets.omega), kind: StopKind::BigT };
        let mut state = self.start(x0, path_index);
        Ok(self.simulate_until(&mut state, &mut rule))
    }

    /// `τ^i`: first entry into `∪_{k≠i} B_Δ(m_k)`, started at `x0 ∈ B_Δ(m_i)`.
    pub fn transition_tau(&self, well: usize, x0: Option<f64>, path_index: u64) -> Result<ExitRecord> {
        self.check_well(well)?;
        let x0 = x0.unwrap_or(self.landscape.minima[well]);
        if !self.sets.ball[well].contains(x0) {
            return Err(Error::Precondition(format!("start {x0} is outside B_Δ(m_{})", well + 1)));
        }
        let mut rule = EnterAny { targets: self.others(well, &self.sets.ball), kind: StopKind::Tau };
        let mut state = self.start(x0, path_index);
        Ok(self.simulate_until(&mut state, &mut rule))
    }

    /// `σ^i`, `T^i` and `τ^i` measured on one trajectory started at `m_i`.
    pub fn ordering_probe(&self, well: usize, path_index: u64) -> Result<OrderingProbe> {
        self.check_well(well)?;
        let x0 = self.landscape.minima[well];
        if !self.sets.ball[well].contains(x0) || !self.sets.omega[well].contains(x0) {
            return Err(Error::Precondition("m_i must lie in Ω^i_ε and B_Δ(m_i)".into()));
        }
        let mut rule = ProbeRule {
            interior: self.sets.interior[well],
            omega: self.others(well, &self.sets.omega),
            ball: EnterAny { targets: self.others(well, &self.sets.ball), kind: StopKind::Tau },
            sigma: None,
            big_t: None,
        };
        let mut state = self.start(x0, path_index);
        let tau = self.simulate_until(&mut state, &mut rule);
        Ok(OrderingProbe { sigma: rule.sigma, big_t: rule.big_t, tau })
    }

    /// `S`: exit from `B_{2ε^γ}(s_j)` started at `x0` (default `s_j`).
    /// Also returns the time of the first big jump larger than `4ε^γ`.
    pub fn saddle_escape(&self, saddle: usize, x0: Option<f64>, path_index: u64) -> Result<(ExitRecord, Option<f64>)> {
        let ball = *self
            .sets
            .saddle_ball
            .get(saddle)
            .ok_or_else(|| Error::Precondition(format!("saddle index {saddle} out of range")))?;
        let x0 = x0.unwrap_or(self.landscape.saddles[saddle]);
        if !ball.contains(x0) {
            return Err(Error::Precondition(format!("start {x0} is outside B_2ε^γ(s_{})", saddle + 1)));
        }
        let mut rule = ExitInterval { interval: ball, kind: StopKind::SaddleS, sets: &self.sets };
        let mut jumps = FirstJumpOver { bound: 4.0 * self.cfg.margin(), time: None };
        let mut state = self.start(x0, path_index);
        let rec = self.simulate_observed(&mut state, &mut rule, self.cfg.horizon, &mut jumps);
        Ok((rec, jumps.time))
    }

    /// Positions at each of the increasing `times`, started at `x0`. Ends
    /// early (with fewer entries) if the path overflows.
    pub fn snapshots(&self, x0: f64, times: &[f64], path_index: u64) -> Vec<f64> {
        let mut state = self.start(x0, path_index);
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let rec = self.simulate_observed(&mut state, &mut AtTime(t), f64::INFINITY, &mut ());
            if rec.overflowed {
                break;
            }
            out.push(state.x);
        }
        out
    }

    /// Path trace of `(t, x)` every `stride` substeps up to `horizon`.
    pub fn trace(&self, x0: f64, horizon: f64, stride: usize, path_index: u64) -> Trace {
        let mut trace = Trace::new(stride);
        trace.points.push((0.0, x0));
        let mut state = self.start(x0, path_index);
        self.simulate_observed(&mut state, &mut Never, horizon, &mut trace);
        trace
    }

    /// Small-jump dynamics only, from `x0` up to `min(horizon, E)` with `E` a
    /// fresh `Exp(β_ε)` time, compared with RK4 on the same grid.
    pub fn tube_deviation(&self, x0: f64, horizon: f64, path_index: u64) -> Result<TubeDeviation> {
        let tube_sets = StoppingSets::new(&self.landscape, self.cfg.eps.powf(self.cfg.gamma), self.cfg.delta);
        if !tube_sets.interior.iter().any(|iv| iv.contains(x0)) {
            return Err(Error::Precondition(format!("start {x0} is not in any [s_(i-1)+ε^γ, s_i-ε^γ]")));
        }
        let mut rng = path_stream(self.cfg.seed, path_index);
        let first_jump = levy::sample_interjump_time(&self.decomposition, &mut rng);
        let end = horizon.min(first_jump);
        let h = self.cfg.h;
        let (mut t, mut x, mut y) = (0.0, x0, x0);
        let mut sup: f64 = 0.0;
        let mut k = 1u64;
        while t < end {
            let t_next = (k as f64 * h).min(end);
            let dt = t_next - t;
            x = self.substep(x, dt, &mut rng);
            y = rk4_step(&self.potential, y, dt);
            if !(x.abs() <= self.cfg.overflow) {
                return Ok(TubeDeviation { sup: f64::INFINITY, end, first_jump });
            }
            sup = sup.max((x - y).abs());
            t = t_next;
            k += 1;
        }
        Ok(TubeDeviation { sup, end, first_jump })
    }
}

/// Result of [`Simulator::tube_deviation`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeDeviation {
    /// `sup_t |x^ε_t - X^0_t(x0)|`.
    pub sup: f64,
    /// Time the comparison stopped.
    pub end: f64,
    /// The exponential time drawn for the first big jump.
    pub first_jump: f64,
}

/// Times of `σ^i` and `T^i` on the trajectory that produced `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderingProbe {
    pub sigma: Option<f64>,
    pub big_t: Option<f64>,
    pub tau: ExitRecord,
}

impl OrderingProbe {
    /// `σ ≤ T ≤ τ` for whichever of them triggered.
    pub fn ordered(&self) -> bool {
        let tau = if self.tau.stop_kind == Some(StopKind::Tau) { Some(self.tau.stop_time) } else { None };
        let le = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(a), Some(b)) => a <= b,
            (None, Some(_)) => false,
            _ => true,
        };
        le(self.sigma, self.big_t) && le(self.big_t, tau) && le(self.sigma, tau)
    }
}

struct ProbeRule {
    interior: Interval,
    omega: Vec<(usize, Interval)>,
    ball: EnterAny,
    sigma: Option<f64>,
    big_t: Option<f64>,
}

impl StoppingRule for ProbeRule {
    fn check(&mut self, t: f64, x: f64) -> Option<Stop> {
        if self.sigma.is_none() && !self.interior.contains(x) {
            self.sigma = Some(t);
        }
        if self.big_t.is_none() && self.omega.iter().any(|(_, iv)| iv.contains(x)) {
            self.big_t = Some(t);
        }
        self.ball.check(t, x)
    }
}

/// Runs `f(path_index)` for every index in `0..n` on `workers` threads and
/// returns the results in index order.
pub fn run_batch<T, F>(n: u64, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build().map_err(|e| Error::Io(e.to_string()))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

/// Worker count from `METASTAB_WORKERS`, else the number of available cores.
pub fn default_workers() -> usize {
    std::env::var("METASTAB_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n: &usize| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}
