//! Quenched and annealed hitting-time laws, extremal index estimates and the
//! periodic/non-periodic dichotomy.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentPath;
use crate::error::{Error, Result};
use crate::measures::{
    cylinder_mass, marginal_mass, Context, FibreMeasure, MarginalMode, SampleMeasureModel,
};
use crate::model::MeasureModel;
use crate::rng::{self, Purpose, TrialRng};
use crate::word::{HitOutcome, HitScanner, TargetPoint};

/// Refuse horizons that would not fit a materialized window.
pub const MAX_HORIZON: usize = 1 << 31;

const CHUNK: usize = 256;

/// Default grid `0, 0.05, ..., 5`.
pub fn default_grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.05).collect()
}

fn check_grid(t_grid: &[f64]) -> Result<f64> {
    if t_grid.is_empty() {
        return Err(Error::InvalidParameter("empty t grid".into()));
    }
    if t_grid.iter().any(|&t| !(t >= 0.0 && t.is_finite())) || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("t grid must be finite, non-negative and increasing".into()));
    }
    Ok(*t_grid.last().unwrap())
}

/// What the hitting times are scaled by.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// The marginal `mu(C_n(z))`.
    Marginal(MarginalMode),
    /// The sample measure `mu_omega(C_n(z))` of the run's own environment.
    SampleMeasure,
}

impl Default for Normalization {
    fn default() -> Self {
        Normalization::Marginal(MarginalMode::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSpec {
    pub t_grid: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub normalization: Normalization,
}

impl SurvivalSpec {
    pub fn new(trials: usize, seed: u64) -> Self {
        SurvivalSpec { t_grid: default_grid(), trials, seed, normalization: Normalization::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCurve {
    pub t_grid: Vec<f64>,
    /// Fraction of trials with `tau * normalization > t`.
    pub survival: Vec<f64>,
    /// Binomial standard errors.
    pub stderr: Vec<f64>,
    pub trials: usize,
    /// Trials with no hit up to the horizon.
    pub censored: usize,
    pub normalization: f64,
    pub horizon: usize,
    /// Hits with scaled time at most the last grid point.
    pub hits: usize,
    /// `sum min(tau * normalization, t_end)`.
    pub exposure: f64,
}

impl SurvivalCurve {
    pub fn from_outcomes(outcomes: &[HitOutcome], t_grid: &[f64], normalization: f64, horizon: usize) -> Result<Self> {
        let t_end = check_grid(t_grid)?;
        let n = outcomes.len();
        if n == 0 {
            return Err(Error::InvalidParameter("no trials".into()));
        }
        let mut scaled: Vec<f64> = outcomes
            .iter()
            .filter_map(|o| match o {
                HitOutcome::Hit(k) => Some(*k as f64 * normalization),
                HitOutcome::Censored => None,
            })
            .collect();
        let censored = n - scaled.len();
        scaled.sort_by(f64::total_cmp);
        let survival: Vec<f64> = t_grid
            .iter()
            .map(|&t| {
                let done = scaled.partition_point(|&s| s <= t);
                (n - done) as f64 / n as f64
            })
            .collect();
        let stderr = survival.iter().map(|&s| (s * (1.0 - s) / n as f64).sqrt()).collect();
        let hits = scaled.partition_point(|&s| s <= t_end);
        let exposure = scaled.iter().map(|&s| s.min(t_end)).sum::<f64>() + (n - hits) as f64 * t_end;
        Ok(SurvivalCurve {
            t_grid: t_grid.to_vec(),
            survival,
            stderr,
            trials: n,
            censored,
            normalization,
            horizon,
            hits,
            exposure,
        })
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().copied().fold(0.0, f64::max)
    }

    /// Censored exponential maximum likelihood for `Theta`.
    pub fn theta_fit(&self) -> ThetaEstimate {
        let value = if self.exposure > 0.0 { self.hits as f64 / self.exposure } else { 0.0 };
        let uncertainty = if self.hits > 0 { value / (self.hits as f64).sqrt() } else { f64::INFINITY };
        ThetaEstimate { value, method: ThetaMethod::CurveFit, uncertainty }
    }
}

/// `sup_t |S(t) - e^{-theta t}|` over the grid.
pub fn ks_distance(curve: &SurvivalCurve, theta: f64) -> f64 {
    curve
        .t_grid
        .iter()
        .zip(&curve.survival)
        .map(|(&t, &s)| (s - (-theta * t).exp()).abs())
        .fold(0.0, f64::max)
}

/// One trial: the first `k` in `1 ..= horizon` with `x_k .. x_{k+n-1}` equal to
/// the scanner's target, for `x ~ mu_{theta^s omega}`.
pub fn hitting_trial<F: FibreMeasure + ?Sized>(
    fm: &F,
    offset: isize,
    scanner: &mut HitScanner,
    horizon: usize,
    rng: &mut TrialRng,
) -> Result<HitOutcome> {
    scanner.reset();
    let need = scanner.required_len(horizon);
    let mut context = Context::new(fm.memory());
    let mut buf = [0u8; CHUNK];
    let mut k = 0;
    while k < need {
        let len = CHUNK.min(need - k);
        fm.fill(offset, k, &mut context, rng, &mut buf[..len])?;
        for &s in &buf[..len] {
            if let Some(hit) = scanner.push(s) {
                return Ok(HitOutcome::Hit(hit));
            }
        }
        k += len;
    }
    Ok(HitOutcome::Censored)
}

fn horizon_for(t_end: f64, mu: f64) -> Result<usize> {
    if !(mu > 0.0) {
        return Err(Error::ZeroMass);
    }
    let h = (t_end / mu).ceil().max(1.0);
    if h > MAX_HORIZON as f64 {
        return Err(Error::Budget(format!("horizon {h:.3e} exceeds {MAX_HORIZON}")));
    }
    Ok(h as usize)
}

/// `mu(C_n(z))` in the requested mode.
pub fn target_marginal<M: SampleMeasureModel>(model: &M, z: &TargetPoint, n: usize, mode: MarginalMode) -> Result<f64> {
    let w = z.block(n)?;
    let m = marginal_mass(model, w.as_slice(), mode)?;
    if m.value <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(m.value)
}

/// Hitting times under the fixed environment `path`, scaled per `spec`.
pub fn quenched_survival<M: SampleMeasureModel>(
    model: &M,
    path: &EnvironmentPath,
    z: &TargetPoint,
    n: usize,
    spec: &SurvivalSpec,
) -> Result<SurvivalCurve> {
    let t_end = check_grid(&spec.t_grid)?;
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let target = z.block(n)?;
    let mu = match spec.normalization {
        Normalization::Marginal(mode) => target_marginal(model, z, n, mode)?,
        Normalization::SampleMeasure => {
            let fm = model.realize(path, 0..n as isize)?;
            cylinder_mass(&fm, 0, target.as_slice())?
        }
    };
    let horizon = horizon_for(t_end, mu)?;
    let fm = model.realize(path, 0..(horizon + n) as isize)?;
    let scanner = HitScanner::new(target.as_slice())?;
    let outcomes: Vec<HitOutcome> = (0..spec.trials as u64)
        .into_par_iter()
        .map_init(
            || scanner.clone(),
            |sc, i| {
                let mut rng = rng::stream(spec.seed, Purpose::Trajectory, i);
                hitting_trial(&fm, 0, sc, horizon, &mut rng)
            },
        )
        .collect::<Result<_>>()?;
    SurvivalCurve::from_outcomes(&outcomes, &spec.t_grid, mu, horizon)
}

/// Environment path for a quenched run: `seed` selects `omega`.
pub fn quenched_path<M: SampleMeasureModel>(model: &M, z_len: usize, horizon: usize, seed: u64) -> Result<EnvironmentPath> {
    let mut rng = rng::stream(seed, Purpose::Environment, 0);
    model.sample_path(horizon + z_len, &mut rng)
}

/// Quenched run on a fresh path drawn from `spec.seed`, long enough for the
/// grid.
pub fn quenched_run(model: &MeasureModel, z: &TargetPoint, n: usize, spec: &SurvivalSpec) -> Result<SurvivalCurve> {
    let t_end = check_grid(&spec.t_grid)?;
    let mu = match spec.normalization {
        Normalization::Marginal(mode) => target_marginal(model, z, n, mode)?,
        // the sample mass is unknown before the path exists; size the window
        // for the marginal and let the run report a short window
        Normalization::SampleMeasure => target_marginal(model, z, n, MarginalMode::default())
            .or_else(|_| target_marginal(model, z, n, MarginalMode::MonteCarlo { samples: 1000, seed: spec.seed }))?,
    };
    let horizon = horizon_for(t_end, mu)?;
    let path = quenched_path(model, n, horizon, spec.seed)?;
    quenched_survival(model, &path, z, n, spec)
}

/// Each trial draws its own `omega` (stream `Annealed`) and then `x ~ mu_omega`;
/// times are scaled by the marginal.
pub fn annealed_survival(model: &MeasureModel, z: &TargetPoint, n: usize, spec: &SurvivalSpec) -> Result<SurvivalCurve> {
    let t_end = check_grid(&spec.t_grid)?;
    if spec.trials == 0 {
        return Err(Error::InvalidParameter("N must be positive".into()));
    }
    let mode = match spec.normalization {
        Normalization::Marginal(mode) => mode,
        Normalization::SampleMeasure => {
            return Err(Error::InvalidParameter("annealed runs are scaled by the marginal".into()))
        }
    };
    let target = z.block(n)?;
    let mu = target_marginal(model, z, n, mode)?;
    let horizon = horizon_for(t_end, mu)?;
    let scanner = HitScanner::new(target.as_slice())?;
    let need = scanner.required_len(horizon);
    let outcomes: Vec<HitOutcome> = match model {
        MeasureModel::Product(pm) => {
            // (omega_i, x_i) is itself a Markov chain: sample the base lazily
            let sampler = pm.realize(&EnvironmentPath::constant(0, 0..1), 0..1)?;
            let base = pm.base();
            (0..spec.trials as u64)
                .into_par_iter()
                .map_init(
                    || scanner.clone(),
                    |sc, i| {
                        let mut env = rng::stream(spec.seed, Purpose::Annealed, i);
                        let mut rng = rng::stream(spec.seed, Purpose::Trajectory, i);
                        sc.reset();
                        let mut sites = [0u8; CHUNK];
                        let mut buf = [0u8; CHUNK];
                        let mut prev = None;
                        let mut k = 0;
                        while k < need {
                            let len = CHUNK.min(need - k);
                            base.extend_orbit(prev, &mut env, &mut sites[..len]);
                            prev = Some(sites[len - 1]);
                            sampler.fill_sites(&sites[..len], &mut rng, &mut buf[..len]);
                            for &s in &buf[..len] {
                                if let Some(hit) = sc.push(s) {
                                    return Ok(HitOutcome::Hit(hit));
                                }
                            }
                            k += len;
                        }
                        Ok(HitOutcome::Censored)
                    },
                )
                .collect::<Result<_>>()?
        }
        MeasureModel::Gibbs(_) => (0..spec.trials as u64)
            .into_par_iter()
            .map_init(
                || scanner.clone(),
                |sc, i| {
                    let mut env = rng::stream(spec.seed, Purpose::Annealed, i);
                    let mut rng = rng::stream(spec.seed, Purpose::Trajectory, i);
                    let path = model.sample_path(need, &mut env)?;
                    let fm = model.realize(&path, 0..need as isize)?;
                    hitting_trial(&fm, 0, sc, horizon, &mut rng)
                },
            )
            .collect::<Result<_>>()?,
    };
    SurvivalCurve::from_outcomes(&outcomes, &spec.t_grid, mu, horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum ThetaMethod {
    /// Closed form `1 - e^{S_p varphi(z)}`.
    Exact,
    /// `1 - mu(C_{n+p}) / mu(C_n)`.
    Ratio { n: usize },
    CurveFit,
    /// Not computed: the target is not periodic.
    NonPeriodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub value: f64,
    #[serde(flatten)]
    pub method: ThetaMethod,
    pub uncertainty: f64,
}

impl ThetaEstimate {
    fn unit() -> Self {
        ThetaEstimate { value: 1.0, method: ThetaMethod::NonPeriodic, uncertainty: 0.0 }
    }
}

/// `Theta_n = 1 - mu(C_{n+p}(z)) / mu(C_n(z))`; exactly 1 with a marker for
/// non-periodic `z`.
pub fn theta_ratio<M: SampleMeasureModel>(model: &M, z: &TargetPoint, n: usize, mode: MarginalMode) -> Result<ThetaEstimate> {
    let Some(p) = z.period() else {
        return Ok(ThetaEstimate::unit());
    };
    let a = z.block(n)?;
    let b = z.block(n + p)?;
    match mode {
        MarginalMode::Exact { .. } => {
            let ma = marginal_mass(model, a.as_slice(), mode)?.value;
            let mb = marginal_mass(model, b.as_slice(), mode)?.value;
            if ma <= 0.0 {
                return Err(Error::ZeroMass);
            }
            Ok(ThetaEstimate { value: 1.0 - mb / ma, method: ThetaMethod::Ratio { n }, uncertainty: 0.0 })
        }
        MarginalMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidParameter("Monte Carlo ratio needs at least 2 samples".into()));
            }
            // ratio of means over shared paths, delta-method error
            let mut xs = Vec::with_capacity(samples);
            for i in 0..samples {
                let mut rng = rng::stream(seed, Purpose::MonteCarlo, i as u64);
                let path = model.sample_path(n + p, &mut rng)?;
                let fm = model.realize(&path, 0..(n + p) as isize)?;
                xs.push((cylinder_mass(&fm, 0, a.as_slice())?, cylinder_mass(&fm, 0, b.as_slice())?));
            }
            let k = samples as f64;
            let ma = xs.iter().map(|x| x.0).sum::<f64>() / k;
            let mb = xs.iter().map(|x| x.1).sum::<f64>() / k;
            if ma <= 0.0 {
                return Err(Error::ZeroMass);
            }
            let r = mb / ma;
            let var = xs.iter().map(|x| (x.1 - r * x.0).powi(2)).sum::<f64>() / (k - 1.0);
            Ok(ThetaEstimate { value: 1.0 - r, method: ThetaMethod::Ratio { n }, uncertainty: (var / k).sqrt() / ma })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaExact {
    pub estimate: ThetaEstimate,
    /// `|Theta_n - Theta_{n+1}|` for ratio-based values.
    pub gap: Option<f64>,
}

/// The extremal index: closed form for a single environment, otherwise the
/// marginal ratio at depth `n` together with its change at depth `n + 1`.
pub fn theta_exact(model: &MeasureModel, z: &TargetPoint, n: usize, mode: MarginalMode) -> Result<ThetaExact> {
    let Some(p) = z.period() else {
        return Ok(ThetaExact { estimate: ThetaEstimate::unit(), gap: None });
    };
    if model.is_deterministic() {
        let s = match model {
            MeasureModel::Product(m) => {
                let block = z.block(p)?;
                block.as_slice().iter().map(|&x| m.probs()[0][x as usize].ln()).sum::<f64>()
            }
            MeasureModel::Gibbs(g) => g.stationary()?.birkhoff_sum(0, z, p)?,
        };
        let value = 1.0 - s.exp();
        return Ok(ThetaExact { estimate: ThetaEstimate { value, method: ThetaMethod::Exact, uncertainty: 0.0 }, gap: None });
    }
    let a = theta_ratio(model, z, n, mode)?;
    let b = theta_ratio(model, z, n + 1, mode)?;
    Ok(ThetaExact { estimate: a, gap: Some((a.value - b.value).abs()) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomySpec {
    pub depths: Vec<usize>,
    pub t_grid: Vec<f64>,
    pub trials: usize,
    pub seeds: Vec<u64>,
    pub marginal: MarginalMode,
    /// Finite-depth allowance added to the noise level when testing
    /// `KS(curve, 1)` for non-periodic targets.
    pub bias_budget: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Run {
    pub seed: u64,
    pub ks_theta: f64,
    pub ks_unit: f64,
    pub theta_fit: ThetaEstimate,
    pub curve: SurvivalCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthRecord {
    pub n: usize,
    pub marginal: f64,
    pub theta: ThetaEstimate,
    pub runs: Vec<Run>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Periodic,
    NonPeriodic,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub target: String,
    pub period: Option<usize>,
    pub theta_reference: ThetaExact,
    pub depths: Vec<DepthRecord>,
    /// Pooled curve fit over the runs at the deepest depth.
    pub pooled_theta: ThetaEstimate,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DichotomyReport {
    pub targets: Vec<TargetRecord>,
}

/// Quenched curves for every target, depth and seed, with the verdict rule:
/// periodic when the period is certified and `KS(Theta) < KS(1)` on every run
/// at the deepest depth; non-periodic when the pooled fit satisfies
/// `Theta_hat >= 1 - 3 SE` and every run has `KS(1) <= 4 SE_max + bias_budget`;
/// inconclusive otherwise.
pub fn dichotomy_experiment(model: &MeasureModel, targets: &[TargetPoint], spec: &DichotomySpec) -> Result<DichotomyReport> {
    if spec.depths.len() < 2 {
        return Err(Error::InvalidParameter("the depth schedule needs at least two depths".into()));
    }
    if spec.seeds.is_empty() {
        return Err(Error::InvalidParameter("at least one seed is required".into()));
    }
    let deepest = *spec.depths.iter().max().unwrap();
    let mut records = Vec::with_capacity(targets.len());
    for z in targets {
        let theta_reference = theta_exact(model, z, deepest, spec.marginal)?;
        let mut depths = Vec::with_capacity(spec.depths.len());
        for &n in &spec.depths {
            let marginal = target_marginal(model, z, n, spec.marginal)?;
            let theta = theta_ratio(model, z, n, spec.marginal)?;
            let mut runs = Vec::with_capacity(spec.seeds.len());
            for &seed in &spec.seeds {
                let s = SurvivalSpec {
                    t_grid: spec.t_grid.clone(),
                    trials: spec.trials,
                    seed,
                    normalization: Normalization::Marginal(spec.marginal),
                };
                let curve = quenched_run(model, z, n, &s)?;
                runs.push(Run {
                    seed,
                    ks_theta: ks_distance(&curve, theta_reference.estimate.value),
                    ks_unit: ks_distance(&curve, 1.0),
                    theta_fit: curve.theta_fit(),
                    curve,
                });
            }
            depths.push(DepthRecord { n, marginal, theta, runs });
        }
        let last = depths.iter().find(|d| d.n == deepest).expect("deepest depth present");
        let hits: usize = last.runs.iter().map(|r| r.curve.hits).sum();
        let exposure: f64 = last.runs.iter().map(|r| r.curve.exposure).sum();
        let pooled = if exposure > 0.0 { hits as f64 / exposure } else { 0.0 };
        let pooled_theta = ThetaEstimate {
            value: pooled,
            method: ThetaMethod::CurveFit,
            uncertainty: if hits > 0 { pooled / (hits as f64).sqrt() } else { f64::INFINITY },
        };
        let verdict = if z.period().is_some() {
            if last.runs.iter().all(|r| r.ks_theta < r.ks_unit) {
                Verdict::Periodic
            } else {
                Verdict::Inconclusive
            }
        } else {
            let unit_fits = last
                .runs
                .iter()
                .all(|r| r.ks_unit <= 4.0 * r.curve.max_stderr() + spec.bias_budget);
            if pooled >= 1.0 - 3.0 * pooled_theta.uncertainty && unit_fits {
                Verdict::NonPeriodic
            } else {
                Verdict::Inconclusive
            }
        };
        records.push(TargetRecord {
            target: z.describe(model.alphabet()),
            period: z.period(),
            theta_reference,
            depths,
            pooled_theta,
            verdict,
        });
    }
    Ok(DichotomyReport { targets: records })
}
