//! The four subcommands. Each returns the files it wants written and the
//! invariants it checked; nothing here touches the filesystem.

use anyhow::{bail, Context, Result};
use hts_core::diagnostics::{
    audit, expectation_identity, fit_bounds, recursion_inequality_check, BoundSpec, ProofTermRecord,
};
use hts_core::hts::{
    annealed_survival, dichotomy_experiment, ks_distance, quenched_run, theta_exact, theta_ratio, DichotomySpec,
    SurvivalSpec, Verdict,
};
use hts_core::rng::{self, derive_seed, Purpose};
use hts_core::transfer::{big_images, decay_profile, duality_check, WordTable};
use hts_core::{Error, MeasureModel, SampleMeasureModel, SurvivalCurve};
use serde::Serialize;
use serde_json::json;

use crate::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subcommand {
    Simulate,
    Dichotomy,
    Diagnostics,
    GibbsAudit,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Simulate => "simulate",
            Subcommand::Dichotomy => "dichotomy",
            Subcommand::Diagnostics => "diagnostics",
            Subcommand::GibbsAudit => "gibbs-audit",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    /// File name and contents, in emission order.
    pub files: Vec<(String, Vec<u8>)>,
    pub checks: Vec<Check>,
}

impl RunOutput {
    fn check(&mut self, name: impl Into<String>, ok: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), ok, detail: detail.into() });
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.ok)
    }
}

/// Stamps every emitted file with the configuration hash and seed.
struct Stamp<'a> {
    hash: &'a str,
    seed: u64,
    command: Subcommand,
}

impl Stamp<'_> {
    fn json(&self, data: impl Serialize) -> Result<Vec<u8>> {
        let v = json!({
            "config_hash": self.hash,
            "seed": self.seed,
            "subcommand": self.command.name(),
            "data": data,
        });
        let mut out = serde_json::to_vec_pretty(&v)?;
        out.push(b'\n');
        Ok(out)
    }

    fn csv(&self, header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
        let mut out = format!("# config_hash={} seed={} subcommand={}\n", self.hash, self.seed, self.command.name())
            .into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        Ok(out)
    }
}

/// Seeds of the environments `omega_0 .. omega_{R-1}`.
pub fn environment_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count as u64).map(|i| derive_seed(master, i)).collect()
}

const ANNEALED_LABEL: u64 = 0xa22e_a1ed;
const BOUNDS_LABEL: u64 = 0xb0b0;
const DUALITY_LABEL: u64 = 0xd0a1;

pub fn run(command: Subcommand, cfg: &ExperimentConfig, seed: u64) -> Result<RunOutput> {
    let stamp = Stamp { hash: &cfg.hash, seed, command };
    let mut out = RunOutput::default();
    match command {
        Subcommand::Simulate => simulate(cfg, seed, &stamp, &mut out)?,
        Subcommand::Dichotomy => dichotomy(cfg, seed, &stamp, &mut out)?,
        Subcommand::Diagnostics => diagnostics(cfg, seed, &stamp, &mut out)?,
        Subcommand::GibbsAudit => gibbs_audit(cfg, seed, &stamp, &mut out)?,
    }
    let checks = stamp.json(&out.checks)?;
    out.files.push(("checks.json".into(), checks));
    Ok(out)
}

fn fmt(x: f64) -> String {
    format!("{x:.12e}")
}

fn curve_is_survival(c: &SurvivalCurve) -> bool {
    c.survival.iter().all(|s| (0.0..=1.0).contains(s)) && c.survival.windows(2).all(|w| w[1] <= w[0])
}

#[derive(Serialize)]
struct CurveSummary {
    target: String,
    n: usize,
    run: String,
    seed: u64,
    theta: f64,
    theta_uncertainty: f64,
    ks: f64,
    max_stderr: f64,
    theta_fit: f64,
    theta_fit_se: f64,
    trials: usize,
    censored: usize,
    horizon: usize,
    normalization: f64,
}

fn simulate(cfg: &ExperimentConfig, seed: u64, stamp: &Stamp, out: &mut RunOutput) -> Result<()> {
    let seeds = environment_seeds(seed, cfg.environments);
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for target in &cfg.targets {
        for &n in &cfg.simulate.depths {
            let theta = theta_exact(&cfg.model, &target.point, n, cfg.marginal)
                .with_context(|| format!("Theta for {} at n = {n}", target.label))?
                .estimate;
            let mut runs: Vec<(String, u64, SurvivalCurve)> = Vec::new();
            for (i, &s) in seeds.iter().enumerate() {
                let spec = SurvivalSpec {
                    t_grid: cfg.t_grid.clone(),
                    trials: cfg.trials,
                    seed: s,
                    normalization: cfg.simulate.normalization,
                };
                let c = quenched_run(&cfg.model, &target.point, n, &spec)
                    .with_context(|| format!("quenched run {i} for {} at n = {n}", target.label))?;
                runs.push((format!("omega{i}"), s, c));
            }
            if cfg.simulate.annealed {
                let s = derive_seed(seed, ANNEALED_LABEL);
                let spec = SurvivalSpec {
                    t_grid: cfg.t_grid.clone(),
                    trials: cfg.trials,
                    seed: s,
                    normalization: hts_core::hts::Normalization::Marginal(cfg.marginal),
                };
                let c = annealed_survival(&cfg.model, &target.point, n, &spec)
                    .with_context(|| format!("annealed run for {} at n = {n}", target.label))?;
                runs.push(("annealed".into(), s, c));
            }
            for (label, s, c) in runs {
                let ks = ks_distance(&c, theta.value);
                let name = format!("{} n={n} {label}", target.label);
                out.check(format!("survival shape: {name}"), curve_is_survival(&c), "values in [0, 1], non-increasing");
                if let Some(tol) = cfg.simulate.ks_tolerance {
                    out.check(format!("KS vs Theta: {name}"), ks <= tol, format!("KS = {ks:.6} vs {tol}"));
                }
                for ((t, v), e) in c.t_grid.iter().zip(&c.survival).zip(&c.stderr) {
                    rows.push(vec![
                        target.label.clone(),
                        n.to_string(),
                        label.clone(),
                        fmt(*t),
                        fmt(*v),
                        fmt(*e),
                        fmt((-theta.value * t).exp()),
                    ]);
                }
                let fit = c.theta_fit();
                summary.push(CurveSummary {
                    target: target.label.clone(),
                    n,
                    run: label,
                    seed: s,
                    theta: theta.value,
                    theta_uncertainty: theta.uncertainty,
                    ks,
                    max_stderr: c.max_stderr(),
                    theta_fit: fit.value,
                    theta_fit_se: fit.uncertainty,
                    trials: c.trials,
                    censored: c.censored,
                    horizon: c.horizon,
                    normalization: c.normalization,
                });
            }
        }
    }
    let csv = stamp.csv(&["target", "n", "run", "t", "survival", "stderr", "exp_theta_t"], &rows)?;
    out.files.push(("survival.csv".into(), csv));
    out.files.push(("simulate.json".into(), stamp.json(&summary)?));
    Ok(())
}

fn verdict_name(v: Verdict) -> &'static str {
    match v {
        Verdict::Periodic => "periodic",
        Verdict::NonPeriodic => "non_periodic",
        Verdict::Inconclusive => "inconclusive",
    }
}

fn dichotomy(cfg: &ExperimentConfig, seed: u64, stamp: &Stamp, out: &mut RunOutput) -> Result<()> {
    let spec = DichotomySpec {
        depths: cfg.dichotomy.depths.clone(),
        t_grid: cfg.t_grid.clone(),
        trials: cfg.trials,
        seeds: environment_seeds(seed, cfg.environments),
        marginal: cfg.marginal,
        bias_budget: cfg.dichotomy.bias_budget,
    };
    let points: Vec<_> = cfg.targets.iter().map(|t| t.point.clone()).collect();
    let report = dichotomy_experiment(&cfg.model, &points, &spec)?;
    let mut rows = Vec::new();
    for (t, r) in cfg.targets.iter().zip(&report.targets) {
        let verdict = verdict_name(r.verdict);
        if let Some(e) = &t.expect {
            out.check(format!("verdict: {}", t.label), e == verdict, format!("expected {e}, got {verdict}"));
        }
        rows.push(vec![
            r.target.clone(),
            r.period.map_or_else(String::new, |p| p.to_string()),
            fmt(r.theta_reference.estimate.value),
            fmt(r.pooled_theta.value),
            fmt(r.pooled_theta.uncertainty),
            verdict.to_string(),
        ]);
    }
    let csv = stamp.csv(&["target", "period", "theta", "pooled_theta", "pooled_se", "verdict"], &rows)?;
    out.files.push(("verdicts.csv".into(), csv));
    out.files.push(("dichotomy.json".into(), stamp.json(&report)?));
    Ok(())
}

fn model_name(cfg: &ExperimentConfig) -> &'static str {
    match cfg.model {
        MeasureModel::Product(_) => "product",
        MeasureModel::Gibbs(_) => "gibbs",
    }
}

#[derive(Serialize)]
struct DiagnosticsReport {
    bounds: serde_json::Value,
    h1: f64,
    records: Vec<(String, usize, ProofTermRecord)>,
    expectation: Vec<serde_json::Value>,
    recursion: Vec<serde_json::Value>,
    trends: Vec<serde_json::Value>,
}

fn non_increasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0])
}

fn diagnostics(cfg: &ExperimentConfig, seed: u64, stamp: &Stamp, out: &mut RunOutput) -> Result<()> {
    let d = &cfg.diagnostics;
    let bspec = BoundSpec { seed: derive_seed(seed, BOUNDS_LABEL), marginal: cfg.marginal, ..BoundSpec::default() };
    let (bounds, fitted_h1) = match fit_bounds(&cfg.model, &d.bound_depths, &bspec) {
        Ok(fit) => {
            out.check("cylinder bounds dominate", fit.dominates, format!("h1 = {:.6}, h0 = {:.6}", fit.h1, fit.h0));
            out.check("decay exponent condition", fit.q_ok, format!("q_required = {:.4}, q_estimate = {:?}", fit.q_required, fit.q_estimate));
            (serde_json::to_value(&fit)?, Some(fit.h1))
        }
        Err(e @ Error::AssumptionViolation(_)) => {
            out.check("cylinder bounds", false, e.to_string());
            (json!({ "violation": e.to_string() }), None)
        }
        Err(e) => return Err(e).context("fitting cylinder bounds"),
    };
    let Some(h1) = d.h1.or(fitted_h1) else {
        bail!("no entropy h1: set diagnostics.h1 or make the bound fit succeed");
    };

    let seeds = environment_seeds(seed, cfg.environments);
    let name = model_name(cfg);
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut trends = Vec::new();
    for target in &cfg.targets {
        for (i, &s) in seeds.iter().enumerate() {
            let mut series = Vec::new();
            for &n in &d.depths {
                let rec = audit(&cfg.model, &target.point, n, &cfg.audit_spec(h1, s))
                    .with_context(|| format!("audit of {} at n = {n}, run {i}", target.label))?;
                let tag = format!("{} n={n} omega{i}", target.label);
                out.check(format!("pointwise decomposition: {tag}"), rec.pointwise_ok, "delta_i <= G_i + H_i + K_i");
                out.check(
                    format!("summed decomposition: {tag}"),
                    rec.decomposition_ok,
                    format!("excess {:.3e} +- {:.1e} vs G + K = {:.3e}", rec.excess.value, rec.excess.stderr, rec.g + rec.k_term),
                );
                rows.push(vec![
                    name.to_string(),
                    target.label.clone(),
                    n.to_string(),
                    fmt(rec.t),
                    format!("omega{i}"),
                    rec.gap.to_string(),
                    rec.k.to_string(),
                    fmt(rec.m),
                    fmt(rec.m_expected),
                    fmt(rec.g),
                    fmt(rec.h.value),
                    fmt(rec.h.stderr),
                    fmt(rec.k_term),
                    fmt(rec.delta_sum.value),
                    fmt(rec.delta_sum.stderr),
                    fmt(rec.bound_slack()),
                    fmt(rec.tail),
                ]);
                series.push((rec.g, rec.h.value, rec.k_term));
                records.push((target.label.clone(), i, rec));
            }
            let g: Vec<f64> = series.iter().map(|x| x.0).collect();
            let h: Vec<f64> = series.iter().map(|x| x.1).collect();
            let k: Vec<f64> = series.iter().map(|x| x.2).collect();
            trends.push(json!({
                "target": target.label,
                "run": i,
                "g_non_increasing": non_increasing(&g),
                "h_non_increasing": non_increasing(&h),
                "k_non_increasing": non_increasing(&k),
            }));
        }
    }

    let mut expectation = Vec::new();
    let mut recursion = Vec::new();
    for target in &cfg.targets {
        let n = d.expectation_depth;
        match expectation_identity(&cfg.model, &target.point, n, d.t, 1 << 22) {
            Ok(e) => {
                let diff = (e.mean - e.expected).abs();
                out.check(format!("E(M) = k mu(A'): {} n={n}", target.label), diff <= 1e-12, format!("|diff| = {diff:.3e}"));
                expectation.push(json!({ "target": target.label, "n": n, "check": e, "abs_diff": diff }));
            }
            Err(e @ (Error::DepthCap { .. } | Error::ExactModeUnavailable(_))) => {
                expectation.push(json!({ "target": target.label, "n": n, "skipped": e.to_string() }));
            }
            Err(e) => return Err(e).context("expectation identity"),
        }
        let (n, k) = (d.depths[0], d.recursion_k);
        let len = 2 * k + 3 * n + 64;
        let path = cfg.model.sample_path(len, &mut rng::stream(seeds[0], Purpose::Environment, 0))?;
        let r = recursion_inequality_check(&cfg.model, &path, &target.point, n, k)?;
        out.check(
            format!("recursion inequality: {} n={n} k={k}", target.label),
            r.slack >= -1e-12,
            format!("value {:.3e} <= bound {:.3e}", r.value, r.bound),
        );
        recursion.push(json!({ "target": target.label, "n": n, "k": k, "check": r }));
    }

    let header = [
        "model", "target", "n", "t", "run", "g", "k", "M", "M_expected", "G", "H", "H_se", "K", "delta", "delta_se",
        "bound_slack", "tail",
    ];
    out.files.push(("diagnostics.csv".into(), stamp.csv(&header, &rows)?));
    let report = DiagnosticsReport { bounds, h1, records, expectation, recursion, trends };
    out.files.push(("diagnostics.json".into(), stamp.json(&report)?));
    Ok(())
}

/// Deterministic table values in `[0, 1)` for the duality check.
fn test_table(alphabet: usize, depth: usize, seed: u64) -> WordTable {
    let mut i = 0u64;
    WordTable::from_fn(alphabet, depth, |_| {
        i += 1;
        (rng::mix64(seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15)) >> 11) as f64 / (1u64 << 53) as f64
    })
}

fn gibbs_audit(cfg: &ExperimentConfig, seed: u64, stamp: &Stamp, out: &mut RunOutput) -> Result<()> {
    let a = &cfg.audit;
    let model = &cfg.model;
    let gaps = &a.decay_gaps;
    let span = a.positions + 2 * a.duality_depth + gaps.iter().max().copied().unwrap_or(0) + 8;
    let path = model.sample_path(span, &mut rng::stream(derive_seed(seed, 0), Purpose::Environment, 0))?;
    let offsets: Vec<isize> = [0, a.positions / 3, a.positions / 2].iter().map(|&o| o as isize).collect();
    let mut report = serde_json::Map::new();
    let mut rows = Vec::new();

    let (fm, family) = match model {
        MeasureModel::Gibbs(g) => {
            let fm = g.realize(&path, 0..span as isize)?;
            let norm = fm.normalization_check(0..a.positions as isize)?;
            out.check("normalization residual", norm <= 1e-10, format!("{norm:.3e} <= 1e-10"));
            let eig = fm.eigen_residual();
            out.check("eigen residual", eig <= 1e-8, format!("{eig:.3e} <= 1e-8"));
            let depth = a.duality_depth.max(1);
            let psi = test_table(g.alphabet(), depth, derive_seed(seed, DUALITY_LABEL));
            let gamma = test_table(g.alphabet(), depth, derive_seed(seed, DUALITY_LABEL + 1));
            let dual = duality_check(&fm, 0, &psi, &gamma, depth)?;
            out.check("duality", dual <= 1e-10, format!("{dual:.3e} <= 1e-10"));
            report.insert("normalization_residual".into(), json!(norm));
            report.insert("eigen_residual".into(), json!(eig));
            report.insert("mass_spread".into(), json!(fm.mass_spread()));
            report.insert("duality".into(), json!(dual));
            rows.push(vec!["normalization_residual".into(), fmt(norm)]);
            rows.push(vec!["eigen_residual".into(), fmt(eig)]);
            rows.push(vec!["duality".into(), fmt(dual)]);
            (hts_core::AnyFibre::Gibbs(fm), g.potential.family().clone())
        }
        MeasureModel::Product(p) => {
            let fm = p.realize(&path, 0..span as isize)?;
            (hts_core::AnyFibre::Product(fm), hts_core::RandomMatrixFamily::full(p.base().alphabet_size(), p.alphabet()))
        }
    };

    let decay = decay_profile(&fm, &offsets, 2, 2, gaps)?;
    let psi: Vec<f64> = decay.iter().map(|p| p.psi).collect();
    // a product measure has no correlations at all; otherwise only the trend is asserted
    let is_product = matches!(model, MeasureModel::Product(_)) || product_potential(model);
    if is_product {
        let worst = psi.iter().copied().fold(0.0, f64::max);
        out.check("decay vanishes for a product measure", worst <= 1e-9, format!("max psi = {worst:.3e}"));
    } else {
        out.check("decay non-increasing", psi.windows(2).all(|w| w[1] <= w[0] + 1e-12), format!("{psi:?}"));
    }
    for p in &decay {
        rows.push(vec![format!("psi_g{}", p.g), fmt(p.psi)]);
    }
    report.insert("decay".into(), serde_json::to_value(&decay)?);

    let images = big_images(&fm, &family, &path, &offsets, 2)?;
    rows.push(vec!["big_images_constant".into(), fmt(images.constant)]);
    report.insert("big_images".into(), serde_json::to_value(images)?);

    let mut thetas = Vec::new();
    if model.is_deterministic() {
        for t in cfg.targets.iter().filter(|t| t.point.is_periodic()) {
            let exact = theta_exact(model, &t.point, a.theta_depth, cfg.marginal)?.estimate.value;
            let ratio = theta_ratio(model, &t.point, a.theta_depth, cfg.marginal)?.value;
            let diff = (exact - ratio).abs();
            out.check(format!("Theta consistency: {}", t.label), diff <= 1e-3, format!("|{exact:.9} - {ratio:.9}| = {diff:.3e}"));
            rows.push(vec![format!("theta_gap {}", t.label), fmt(diff)]);
            thetas.push(json!({ "target": t.label, "n": a.theta_depth, "closed_form": exact, "ratio": ratio, "abs_diff": diff }));
        }
    }
    report.insert("theta".into(), json!(thetas));

    out.files.push(("gibbs_audit.csv".into(), stamp.csv(&["quantity", "value"], &rows)?));
    out.files.push(("gibbs_audit.json".into(), stamp.json(&report)?));
    Ok(())
}

/// A Gibbs potential that depends on the current symbol only gives a product
/// measure.
fn product_potential(model: &MeasureModel) -> bool {
    match model {
        MeasureModel::Gibbs(g) => g.potential.depth() == 1 && g.potential.family().is_full(),
        MeasureModel::Product(_) => true,
    }
}
