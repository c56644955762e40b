//! Experiment runners behind the command line. Each run produces a
//! deterministic JSON report together with CSV tables and plot data.
//!
//! Output layout under the chosen directory:
//! `report.json`, `tables/*.csv`, `plotdata/*.dat`, and `records/*.jsonl`
//! (one exit record per line, written as soon as each `ε` finishes).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{Error, Result};
use crate::levy::{Decomposition, LevyModel};
use crate::limitchain::{
    chain_transition_matrix, compute_generator, exit_rate, gaussian_comparison, stable_normalisation_factor,
    time_scale, GeneratorMatrix,
};
use crate::potential::{relaxation_time, Landscape, PolynomialPotential};
use crate::simulate::{run_batch, write_json_lines, ExitRecord, Simulator};
use crate::stats::{
    decreasing_up_to, empirical_generator, exit_split_test, fdd_test, ks_exponential, linear_fit,
    short_time_localization, ExitSample, TestReport,
};

/// KS level for exponentiality.
pub const KS_LEVEL: f64 = 0.01;
/// Chi-square level for finite-dimensional distributions.
pub const FDD_LEVEL: f64 = 0.01;
/// Standard errors allowed for empirical generator entries and exit splits.
pub const Z_BOUND: f64 = 3.0;
/// Relative tolerance on the Kramers slope.
pub const KRAMERS_REL: f64 = 0.25;
/// Inversions allowed in the KS-statistic trend.
pub const KS_TREND_INVERSIONS: usize = 1;

/// Everything an experiment produced, ready to be written.
#[derive(Debug, Clone)]
pub struct Report {
    pub kind: ExperimentKind,
    pub pass: bool,
    pub tests: Vec<TestReport>,
    pub json: Value,
    /// `(file name, contents)` under `tables/`.
    pub tables: Vec<(String, String)>,
    /// `(file name, contents)` under `plotdata/`.
    pub plots: Vec<(String, String)>,
}

impl Report {
    /// Writes `report.json`, `tables/` and `plotdata/` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("tables"))?;
        fs::create_dir_all(dir.join("plotdata"))?;
        let text = serde_json::to_string_pretty(&self.json).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(dir.join("report.json"), text + "\n")?;
        for (name, body) in &self.tables {
            fs::write(dir.join("tables").join(name), body)?;
        }
        for (name, body) in &self.plots {
            fs::write(dir.join("plotdata").join(name), body)?;
        }
        Ok(())
    }
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    potential: PolynomialPotential,
    landscape: Landscape,
    model: LevyModel,
    q: GeneratorMatrix,
    workers: usize,
    records_dir: Option<PathBuf>,
    tests: Vec<TestReport>,
    tables: Vec<(String, String)>,
    plots: Vec<(String, String)>,
}

impl Context<'_> {
    fn simulator(&self, eps: f64, horizon: f64) -> Result<Simulator> {
        Simulator::new(
            self.potential.clone(),
            self.landscape.clone(),
            &self.model,
            self.cfg.sim_config(eps, &self.landscape, horizon),
        )
    }

    fn flush_records(&self, name: &str, records: &[ExitRecord]) -> Result<()> {
        if let Some(dir) = &self.records_dir {
            fs::create_dir_all(dir)?;
            let file = fs::File::create(dir.join(name))?;
            write_json_lines(records, std::io::BufWriter::new(file))?;
        }
        Ok(())
    }

    fn test(&mut self, test: String, statistic: f64, p_value: Option<f64>, n: usize, pass: bool) {
        self.tests.push(TestReport { test, statistic, p_value, n, pass });
    }

    fn failed(&mut self, test: String, err: &Error) -> Value {
        self.test(test, f64::NAN, None, 0, false);
        json!({ "error": err.to_string() })
    }
}

/// Runs the experiment described by `cfg` on `workers` threads. When
/// `records_dir` is given, exit records are written there as each `ε`
/// completes.
pub fn run(cfg: &ExperimentConfig, workers: usize, records_dir: Option<&Path>) -> Result<Report> {
    let violations = cfg.validate();
    if !violations.is_empty() {
        return Err(Error::Config(violations));
    }
    let (potential, landscape) = cfg.landscape()?;
    let model = cfg.model()?;
    let q = compute_generator(&landscape, model.tails.r, model.kappa())?;
    let mut ctx = Context {
        cfg,
        potential,
        landscape,
        model,
        q,
        workers,
        records_dir: records_dir.map(Path::to_path_buf),
        tests: Vec::new(),
        tables: Vec::new(),
        plots: Vec::new(),
    };
    ctx.tables.push(("generator.csv".into(), matrix_csv(&ctx.q.rows())));
    let results = match cfg.kind {
        ExperimentKind::Analyze => analyze(&mut ctx)?,
        ExperimentKind::ExitLaw => exit_law(&mut ctx)?,
        ExperimentKind::Transitions => transitions(&mut ctx)?,
        ExperimentKind::Meta => meta(&mut ctx)?,
        ExperimentKind::ShortTime => short_time(&mut ctx)?,
        ExperimentKind::Gauss => gauss(&mut ctx)?,
    };
    let pass = ctx.tests.iter().all(|t| t.pass);
    let mut config = serde_json::to_value(cfg).map_err(|e| Error::Io(e.to_string()))?;
    if let Some(obj) = config.as_object_mut() {
        // The output location does not affect results.
        obj.remove("output");
    }
    let l = &ctx.landscape;
    let json = json!({
        "kind": cfg.kind.name(),
        "config": config,
        "landscape": {
            "minima": l.minima,
            "saddles": l.saddles,
            "curvature_min": l.curvature_min,
            "curvature_saddle": l.curvature_saddle,
            "delta0": finite_or_null(l.delta0()),
            "delta": finite_or_null(cfg.delta_for(l)),
        },
        "kappa": ctx.model.kappa(),
        "generator": ctx.q.rows(),
        "results": results,
        "tests": ctx.tests,
        "pass": pass,
    });
    Ok(Report { kind: cfg.kind, pass, tests: ctx.tests, json, tables: ctx.tables, plots: ctx.plots })
}

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn matrix_csv(rows: &[Vec<f64>]) -> String {
    let mut s = String::new();
    let n = rows.len();
    let header: Vec<String> = (1..=n).map(|j| format!("to_{j}")).collect();
    let _ = writeln!(s, "from,{}", header.join(","));
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(s, "{},{}", i + 1, cells.join(","));
    }
    s
}

fn eps_tag(eps: f64) -> String {
    format!("eps{eps}")
}

fn analyze(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.cfg;
    let n = ctx.landscape.n_wells();
    let mut rates = String::from("eps,time_scale");
    for i in 1..=n {
        let _ = write!(rates, ",lambda_{i}");
    }
    rates.push('\n');
    let mut per_eps = Vec::new();
    for &eps in &cfg.eps {
        let scale = time_scale(&ctx.model, eps)?;
        let lambdas: Vec<f64> = (0..n).map(|i| exit_rate(&ctx.landscape, &ctx.model, i, eps)).collect();
        let d = Decomposition::new(&ctx.model, eps, cfg.rho)?;
        let _ =
            writeln!(rates, "{eps},{scale},{}", lambdas.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        per_eps.push(json!({
            "eps": eps,
            "time_scale": scale,
            "stable_factor": stable_normalisation_factor(&ctx.model, eps)?,
            "exit_rates": lambdas,
            "big_jump_rate": d.beta,
            "big_jump_threshold": d.threshold(),
            "small_var": d.small_var,
            "small_mean": d.small_mean,
            "relaxation_time": relaxation_time(&ctx.potential, &ctx.landscape, eps, cfg.gamma)?,
        }));
    }
    ctx.tables.push(("exit_rates.csv".into(), rates));
    let mut matrices = Vec::new();
    for &t in &cfg.times {
        let p = chain_transition_matrix(&ctx.q, t)?;
        ctx.tables.push((format!("transition_t{t}.csv"), matrix_csv(&p)));
        matrices.push(json!({ "t": t, "p": p }));
    }
    let mut out = json!({ "per_eps": per_eps, "transition_matrices": matrices });
    if let (Some(&eps), Some(_)) = (cfg.eps.first(), ctx.model.stable_weights()) {
        // Time normalisation `rt/ε^r` customary for stable noise.
        let factor = stable_normalisation_factor(&ctx.model, eps)?;
        let display = ctx.q.scaled(factor).rows();
        ctx.tables.push(("generator_stable.csv".into(), matrix_csv(&display)));
        out["stable_generator"] = json!(display);
    }
    Ok(out)
}

fn exit_law(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.cfg;
    let well = cfg.well - 1;
    let mut per_eps = Vec::new();
    let mut ks_stats = Vec::new();
    for &eps in &cfg.eps {
        let rate = exit_rate(&ctx.landscape, &ctx.model, well, eps);
        if rate == 0.0 {
            return Err(Error::Precondition(format!("well {} cannot be left: its exit rate is 0", cfg.well)));
        }
        let sim = ctx.simulator(eps, cfg.horizon_factor / rate)?;
        let records = run_batch(cfg.n_paths, ctx.workers, |k| sim.first_exit_sigma(well, None, k))?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        ctx.flush_records(&format!("sigma_{}.jsonl", eps_tag(eps)), &records)?;
        let sample = ExitSample::from_records(well, eps, rate, &records);
        let mut entry = json!({
            "eps": eps,
            "rate": rate,
            "n": sample.times.len(),
            "censored": sample.censored,
            "scaled_mean": rate * sample.mean_time(),
        });
        match ks_exponential(&sample) {
            Ok(r) => {
                ctx.test(format!("ks_exponential eps={eps}"), r.statistic, Some(r.p_value), r.n, r.p_value > KS_LEVEL);
                ks_stats.push(r.statistic);
                entry["ks"] = json!(r);
                ctx.plots.push((format!("survival_{}.dat", eps_tag(eps)), survival_dat(&sample)));
            }
            Err(e) => entry["ks"] = ctx.failed(format!("ks_exponential eps={eps}"), &e),
        }
        if ctx.landscape.n_wells() > 1 {
            match exit_split_test(&sample, &ctx.q) {
                Ok(s) => {
                    ctx.test(format!("exit_split eps={eps}"), s.max_abs_z, None, s.n, s.max_abs_z <= Z_BOUND);
                    entry["split"] = json!(s);
                }
                Err(e) => entry["split"] = ctx.failed(format!("exit_split eps={eps}"), &e),
            }
        }
        per_eps.push(entry);
    }
    if ks_stats.len() >= 2 && ks_stats.len() == cfg.eps.len() {
        let ok = decreasing_up_to(&ks_stats, KS_TREND_INVERSIONS);
        let inversions = ks_stats.windows(2).filter(|w| w[1] > w[0]).count();
        ctx.test("ks_trend".into(), inversions as f64, None, ks_stats.len(), ok);
    }
    Ok(json!({ "well": cfg.well, "per_eps": per_eps }))
}

/// `λt`, empirical survival and `e^{-λt}` at each sorted exit time.
fn survival_dat(sample: &ExitSample) -> String {
    let mut t: Vec<f64> = sample.times.iter().map(|x| x * sample.rate_used).collect();
    t.sort_by(f64::total_cmp);
    let n = t.len() as f64;
    let mut s = String::from("# scaled_time empirical_survival exponential\n");
    for (k, x) in t.iter().enumerate() {
        let _ = writeln!(s, "{x} {} {}", 1.0 - (k + 1) as f64 / n, (-x).exp());
    }
    s
}

fn transitions(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.cfg;
    let n = ctx.landscape.n_wells();
    let mut per_eps = Vec::new();
    for &eps in &cfg.eps {
        let mut samples = Vec::with_capacity(n);
        let mut wells = Vec::new();
        for i in 0..n {
            let rate = exit_rate(&ctx.landscape, &ctx.model, i, eps);
            if rate == 0.0 {
                samples.push(None);
                continue;
            }
            let sim = ctx.simulator(eps, cfg.horizon_factor / rate)?;
            let offset = i as u64 * cfg.n_paths;
            let records = run_batch(cfg.n_paths, ctx.workers, |k| sim.transition_tau(i, None, offset + k))?
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            ctx.flush_records(&format!("tau_well{}_{}.jsonl", i + 1, eps_tag(eps)), &records)?;
            let sample = ExitSample::from_records(i, eps, rate, &records);
            wells.push(json!({
                "well": i + 1,
                "rate": rate,
                "n": sample.times.len(),
                "censored": sample.censored,
                "scaled_mean": rate * sample.mean_time(),
            }));
            samples.push(Some(sample));
        }
        let mut entry = json!({ "eps": eps, "wells": wells });
        match empirical_generator(&samples, eps, &ctx.model) {
            Ok(g) => {
                let z = g.max_abs_z(&ctx.q);
                ctx.test(format!("empirical_generator eps={eps}"), z, None, cfg.n_paths as usize, z <= Z_BOUND);
                let rows: Vec<Vec<f64>> =
                    g.q.iter().enumerate().map(|(i, r)| r.clone().unwrap_or_else(|| ctx.q.rows()[i].clone())).collect();
                ctx.tables.push((format!("empirical_generator_{}.csv", eps_tag(eps)), matrix_csv(&rows)));
                entry["empirical"] = json!(g);
                entry["max_abs_z"] = json!(z);
            }
            Err(e) => entry["empirical"] = ctx.failed(format!("empirical_generator eps={eps}"), &e),
        }
        per_eps.push(entry);
    }
    Ok(json!({ "per_eps": per_eps }))
}

fn meta(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.cfg;
    let well = cfg.well - 1;
    let mut per_eps = Vec::new();
    for &eps in &cfg.eps {
        let scale = time_scale(&ctx.model, eps)?;
        let model_times: Vec<f64> = cfg.times.iter().map(|t| t * scale).collect();
        let sim = ctx.simulator(eps, f64::INFINITY)?;
        let x0 = ctx.landscape.minima[well];
        let sets = sim.sets().clone();
        let snaps = run_batch(cfg.n_paths, ctx.workers, |k| {
            let xs = sim.snapshots(x0, &model_times, k);
            (0..model_times.len()).map(|j| xs.get(j).and_then(|&x| sets.ball_of(x))).collect::<Vec<_>>()
        })?;
        let mut entry = json!({ "eps": eps });
        match fdd_test(&snaps, &cfg.times, &ctx.q, well) {
            Ok(points) => {
                let mut table = String::from("t,well,observed,expected\n");
                for p in &points {
                    ctx.test(
                        format!("fdd eps={eps} t={}", p.t),
                        p.statistic,
                        Some(p.p_value),
                        p.counts.iter().sum(),
                        p.p_value > FDD_LEVEL,
                    );
                    for (j, (o, e)) in p.counts.iter().zip(&p.expected).enumerate() {
                        let _ = writeln!(table, "{},{},{o},{e}", p.t, j + 1);
                    }
                }
                ctx.tables.push((format!("occupation_{}.csv", eps_tag(eps)), table));
                entry["points"] = json!(points);
            }
            Err(e) => entry["points"] = ctx.failed(format!("fdd eps={eps}"), &e),
        }
        per_eps.push(entry);
    }
    Ok(json!({ "well": cfg.well, "per_eps": per_eps }))
}

fn short_time(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.cfg;
    let well = cfg.well - 1;
    let x0 = ctx.landscape.minima[well];
    let delta = cfg.delta_for(&ctx.landscape);
    let mut order: Vec<f64> = cfg.eps.clone();
    order.sort_by(|a, b| b.total_cmp(a));
    let mut fractions = Vec::new();
    let mut table = String::from("eps,time,fraction_outside\n");
    for &eps in &order {
        let t = cfg.short_time * eps.powf(-cfg.time_exponent);
        let sim = ctx.simulator(eps, f64::INFINITY)?;
        let positions = run_batch(cfg.n_paths, ctx.workers, |k| {
            sim.snapshots(x0, &[t], k).first().copied().unwrap_or(f64::INFINITY)
        })?;
        let f = short_time_localization(&positions, x0, delta, cfg.time_exponent, ctx.model.tails.r)?;
        let _ = writeln!(table, "{eps},{t},{f}");
        fractions.push(json!({ "eps": eps, "time": t, "fraction_outside": f }));
    }
    let values: Vec<f64> = fractions.iter().map(|v| v["fraction_outside"].as_f64().unwrap_or(f64::NAN)).collect();
    let inversions = values.windows(2).filter(|w| w[1] > w[0]).count();
    ctx.test("localization_trend".into(), inversions as f64, None, values.len(), decreasing_up_to(&values, 0));
    ctx.tables.push(("short_time.csv".into(), table));
    Ok(json!({ "well": cfg.well, "per_eps": fractions }))
}

fn gauss(ctx: &mut Context) -> Result<Value> {
    let cfg = ctx.cfg;
    let g = gaussian_comparison(&ctx.potential, &ctx.landscape)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut per_eps = Vec::new();
    let mut table = String::from("inv_eps_sq,log_mean_tau\n");
    for &eps in &cfg.eps {
        let d = Decomposition::brownian(eps, ctx.model.d, ctx.model.mu)?;
        let sim_cfg = ctx.cfg.sim_config(eps, &ctx.landscape, f64::INFINITY);
        let sim = Simulator::with_decomposition(ctx.potential.clone(), ctx.landscape.clone(), d, sim_cfg)?;
        let records = run_batch(cfg.n_paths, ctx.workers, |k| sim.transition_tau(g.shallow_well, None, k))?
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        ctx.flush_records(&format!("tau_{}.jsonl", eps_tag(eps)), &records)?;
        let mean = records.iter().map(|r| r.stop_time).sum::<f64>() / records.len() as f64;
        x.push(1.0 / (eps * eps));
        y.push(mean.ln());
        let _ = writeln!(table, "{},{}", 1.0 / (eps * eps), mean.ln());
        per_eps.push(json!({ "eps": eps, "mean_tau": mean, "eps2_log_mean_tau": eps * eps * mean.ln() }));
    }
    ctx.plots.push(("kramers.dat".into(), table.replace(',', " ").replacen("inv_eps_sq", "# inv_eps_sq", 1)));
    ctx.tables.push(("kramers.csv".into(), table));
    let mut out = json!({ "comparison": g, "per_eps": per_eps });
    if x.len() >= 2 {
        let (slope, intercept) = linear_fit(&x, &y);
        let rel = (slope - g.barrier).abs() / g.barrier;
        ctx.test("kramers_slope".into(), slope, None, x.len(), rel <= KRAMERS_REL);
        out["slope"] = json!(slope);
        out["intercept"] = json!(intercept);
        out["relative_error"] = json!(rel);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: &str, extra: &str) -> ExperimentConfig {
        ExperimentConfig::from_toml(&format!(
            r#"
kind = "{kind}"
seed = 11
n_paths = 150
eps = [0.1]
{extra}

[potential]
coefficients = [0.0, 0.0, -0.5, 0.0, 0.25]

[levy]
r = 1.0
"#
        ))
        .unwrap()
    }

    #[test]
    fn analyze_report_contents() {
        let r = run(&config("analyze", "times = [1.0]"), 1, None).unwrap();
        assert!(r.pass);
        assert!((r.json["generator"][0][1].as_f64().unwrap() - 0.5).abs() < 1e-9);
        assert!(r.tables.iter().any(|(n, _)| n == "transition_t1.csv"));
        let stable = r.json["results"]["per_eps"][0]["stable_factor"].as_f64().unwrap();
        assert!((stable - 2.0).abs() < 1e-12);
        // Saddle at distance 1 from both minima: off-diagonal rates 1.
        let display = &r.json["results"]["stable_generator"];
        assert!((display[0][1].as_f64().unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn exit_law_reports_tests() {
        let r = run(&config("exitlaw", ""), 1, None).unwrap();
        let names: Vec<&str> = r.tests.iter().map(|t| t.test.as_str()).collect();
        assert_eq!(names, vec!["ks_exponential eps=0.1", "exit_split eps=0.1"]);
        assert!(r.plots.iter().any(|(n, _)| n == "survival_eps0.1.dat"));
    }

    #[test]
    fn invalid_config_is_an_error() {
        assert!(matches!(run(&config("exitlaw", "rho = 0.3"), 1, None), Err(Error::Config(_))));
    }

    #[test]
    fn records_are_flushed() {
        let dir = tempfile::tempdir().unwrap();
        run(&config("exitlaw", ""), 1, Some(dir.path())).unwrap();
        let text = fs::read_to_string(dir.path().join("sigma_eps0.1.jsonl")).unwrap();
        assert_eq!(text.lines().count(), 150);
        assert!(text.starts_with("{\""));
    }
}
