//! Cylinder-mass bounds: the uniform upper rate `c1 e^{-h1 n}`, the
//! return-sum constant `c2`, the lower rate `c0^{-1} e^{-h0 n}` on the
//! marginal, and the rate condition `q > 2 h0 / h1`.

use serde::{Deserialize, Serialize};

use super::{k_of, MarginalExt, TargetSets};
use crate::environment::EnvironmentPath;
use crate::error::{Error, Result};
use crate::measures::{all_words, check_enumeration, cylinder_mass, FibreMeasure, MarginalMode, SampleMeasureModel};
use crate::rng::{self, Purpose};
use crate::transfer::decay_profile;
use crate::word::{first_return_lower_bound, TargetPoint};

/// `max_y mu_{theta^s omega}(C_n(y))` by a max-product pass over the fibre's
/// Markov contexts.
pub fn max_cylinder_mass<F: FibreMeasure + ?Sized>(fm: &F, offset: isize, n: usize) -> Result<f64> {
    let a = fm.alphabet();
    let m = fm.memory();
    check_enumeration(a, m)?;
    let pow = |c: usize| a.pow(c as u32);
    let mut best = vec![0.0f64];
    let mut probs = vec![0.0; a];
    let mut ctx_syms = vec![0u8; m];
    for k in 0..n {
        let c = k.min(m);
        let c_next = (k + 1).min(m);
        let mut next = vec![f64::NEG_INFINITY; pow(c_next)];
        for (ctx, &v) in best.iter().enumerate() {
            if v == f64::NEG_INFINITY {
                continue;
            }
            let mut rest = ctx;
            for slot in ctx_syms[..c].iter_mut().rev() {
                *slot = (rest % a) as u8;
                rest /= a;
            }
            fm.conditional(offset, k, &ctx_syms[..c], &mut probs)?;
            for (b, &p) in probs.iter().enumerate() {
                if p > 0.0 {
                    let nctx = if m == 0 { 0 } else { (ctx * a + b) % pow(c_next) };
                    next[nctx] = next[nctx].max(v + p.ln());
                }
            }
        }
        best = next;
    }
    Ok(best.into_iter().fold(f64::NEG_INFINITY, f64::max).exp())
}

/// `sum_{k=m}^{n} mu(C_n(y) ∩ sigma^{-k} C_n(y))` with `n = |y|`.
pub fn return_sum<F: FibreMeasure + ?Sized>(fm: &F, offset: isize, y: &[u8], m: usize) -> Result<f64> {
    Ok(return_sums(fm, offset, y)?.get(m.max(1)).copied().unwrap_or(0.0))
}

/// [`return_sum`] for every `m = 0 ..= n + 1` at once.
fn return_sums<F: FibreMeasure + ?Sized>(fm: &F, offset: isize, y: &[u8]) -> Result<Vec<f64>> {
    let n = y.len();
    let mut sums = vec![0.0; n + 2];
    let mut w = Vec::with_capacity(2 * n);
    for k in (1..=n).rev() {
        let mut term = 0.0;
        if y[k..] == y[..n - k] {
            w.clear();
            w.extend_from_slice(y);
            w.extend_from_slice(&y[n - k..]);
            term = cylinder_mass(fm, offset, &w)?;
        }
        sums[k] = sums[k + 1] + term;
    }
    sums[0] = sums[1];
    Ok(sums)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSpec {
    /// Environments per depth when they cannot be enumerated.
    pub samples: usize,
    pub seed: u64,
    /// Largest number of base words enumerated per depth.
    pub environment_cap: u64,
    /// Deepest `n` for the return-sum constant.
    pub return_depth: usize,
    /// A zero-mass cylinder violates the lower bound.
    pub full_support: bool,
    pub marginal: MarginalMode,
}

impl Default for BoundSpec {
    fn default() -> Self {
        BoundSpec {
            samples: 16,
            seed: 0,
            environment_cap: 1 << 14,
            return_depth: 8,
            full_support: true,
            marginal: MarginalMode::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundFit {
    pub depths: Vec<usize>,
    /// `log max_{omega, y} mu_omega(C_n(y))` per depth.
    pub log_max_mass: Vec<f64>,
    pub h1: f64,
    pub c1: f64,
    /// `log min_y mu(C_n(y))` over positive-mass cylinders.
    pub log_min_marginal: Vec<f64>,
    pub h0: f64,
    pub c0: f64,
    pub zero_mass_words: usize,
    pub c2: f64,
    pub c2_by_depth: Vec<(usize, f64)>,
    pub environments_enumerated: bool,
    /// `2 h0 / h1`.
    pub q_required: f64,
    /// Power-law exponent of the observed decay; `None` when every sampled
    /// correlation vanished.
    pub q_estimate: Option<f64>,
    pub q_ok: bool,
    /// `c1 e^{-h1 n}` and `c0^{-1} e^{-h0 n}` bracket every sample.
    pub dominates: bool,
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Environment windows of length `len`: every base word with positive
/// probability when that is affordable and the model needs no margins,
/// otherwise `samples` seeded draws.
fn environments<M: SampleMeasureModel>(model: &M, len: usize, spec: &BoundSpec) -> Result<(Vec<EnvironmentPath>, bool)> {
    let base = model.base();
    if base.is_trivial() {
        return Ok((vec![model.sample_path(len, &mut rng::stream(spec.seed, Purpose::Environment, 0))?], true));
    }
    let b = base.alphabet_size() as u64;
    if model.margin() == (0, 0) && b.checked_pow(len as u32).is_some_and(|c| c <= spec.environment_cap) {
        let paths = all_words(b as usize, len)
            .filter(|w| base.word_probability(w) > 0.0)
            .map(|w| EnvironmentPath::from_symbols(w, 0))
            .collect();
        return Ok((paths, true));
    }
    let paths = (0..spec.samples as u64)
        .map(|s| model.sample_path(len, &mut rng::stream(spec.seed, Purpose::Environment, s)))
        .collect::<Result<_>>()?;
    Ok((paths, false))
}

/// Fits the cylinder bounds over `depths` (at least four).
pub fn fit_bounds<M: SampleMeasureModel>(model: &M, depths: &[usize], spec: &BoundSpec) -> Result<BoundFit> {
    if depths.len() < 4 {
        return Err(Error::InvalidParameter("bound fits need at least four depths".into()));
    }
    if depths.iter().any(|&n| n == 0) || depths.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("depths must be positive and increasing".into()));
    }
    let a = model.alphabet();
    let xs: Vec<f64> = depths.iter().map(|&n| n as f64).collect();

    let mut log_max_mass = Vec::with_capacity(depths.len());
    let mut enumerated = true;
    for &n in depths {
        let (paths, all) = environments(model, n, spec)?;
        enumerated &= all;
        let mut best: f64 = 0.0;
        for path in &paths {
            let fm = model.realize(path, 0..n as isize)?;
            best = best.max(max_cylinder_mass(&fm, 0, n)?);
        }
        log_max_mass.push(best.ln());
    }
    let h1 = -slope(&xs, &log_max_mass);
    if !(h1 > 0.0) {
        return Err(Error::AssumptionViolation(format!("cylinder masses do not decay (h1 = {h1})")));
    }
    let c1 = xs.iter().zip(&log_max_mass).map(|(n, l)| (l + h1 * n).exp()).fold(0.0, f64::max);

    let mut log_min_marginal = Vec::with_capacity(depths.len());
    let mut zero_mass_words = 0;
    for &n in depths {
        check_enumeration(a, n)?;
        let mut min = f64::INFINITY;
        for y in all_words(a, n) {
            let m = model.exact_or(&y, spec.marginal)?;
            if m > 0.0 {
                min = min.min(m);
            } else {
                zero_mass_words += 1;
            }
        }
        log_min_marginal.push(min.ln());
    }
    if spec.full_support && zero_mass_words > 0 {
        return Err(Error::AssumptionViolation(format!(
            "{zero_mass_words} cylinders have zero marginal mass; the lower bound fails"
        )));
    }
    let h0 = -slope(&xs, &log_min_marginal);
    let c0 = xs.iter().zip(&log_min_marginal).map(|(n, l)| (-h0 * n - l).exp()).fold(0.0, f64::max);

    let mut c2_by_depth = Vec::new();
    for &n in depths.iter().filter(|&&n| n <= spec.return_depth) {
        check_enumeration(a, n)?;
        let (paths, _) = environments(model, 2 * n, spec)?;
        let mut c: f64 = 0.0;
        for path in &paths {
            let fm = model.realize(path, 0..(2 * n) as isize)?;
            for y in all_words(a, n) {
                let base = cylinder_mass(&fm, 0, &y)?;
                if base == 0.0 {
                    continue;
                }
                let sums = return_sums(&fm, 0, &y)?;
                for m in 1..=n {
                    c = c.max(sums[m] / ((-h1 * m as f64).exp() * base));
                }
            }
        }
        c2_by_depth.push((n, c));
    }
    let c2 = c2_by_depth.iter().map(|x| x.1).fold(0.0, f64::max);

    let gaps = [1usize, 2, 4, 8];
    let offsets: Vec<isize> = (0..4).map(|i| 8 * i).collect();
    let path = model.sample_path(48, &mut rng::stream(spec.seed, Purpose::Environment, u64::MAX))?;
    let fm = model.realize(&path, 0..48)?;
    let profile = decay_profile(&fm, &offsets, 2, 2, &gaps)?;
    let pts: Vec<(f64, f64)> = profile.iter().filter(|d| d.psi > 1e-14).map(|d| ((d.g as f64).ln(), d.psi.ln())).collect();
    let q_required = 2.0 * h0 / h1;
    let q_estimate = match pts.len() {
        0 => None,
        1 => Some(f64::MAX),
        _ => {
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            Some(-slope(&x, &y))
        }
    };
    let q_ok = q_estimate.map_or(true, |q| q > q_required);

    let rel = 1e-12;
    let dominates = xs.iter().zip(&log_max_mass).all(|(n, l)| l.exp() <= c1 * (-h1 * n).exp() * (1.0 + rel))
        && xs.iter().zip(&log_min_marginal).all(|(n, l)| (-h0 * n).exp() / c0 <= l.exp() * (1.0 + rel));

    Ok(BoundFit {
        depths: depths.to_vec(),
        log_max_mass,
        h1,
        c1,
        log_min_marginal,
        h0,
        c0,
        zero_mass_words,
        c2,
        c2_by_depth,
        environments_enumerated: enumerated,
        q_required,
        q_estimate,
        q_ok,
        dominates,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyReturnCheck {
    pub n: usize,
    pub k: usize,
    /// First-return lower bound of `C_n(z)`.
    pub p_n: usize,
    /// `sum_{i <= k_n} sum_{j <= n} mu_{theta^i omega}(A ∩ sigma^{-j} A)`.
    pub value: f64,
}

/// Early returns of a non-periodic target along `path`.
pub fn early_returns<M: SampleMeasureModel>(
    model: &M,
    path: &EnvironmentPath,
    z: &TargetPoint,
    n: usize,
    t: f64,
    mode: MarginalMode,
) -> Result<EarlyReturnCheck> {
    let sets = TargetSets::new(z, n, model.alphabet())?;
    let k = k_of(t, model.exact_or(&sets.word, mode)?)?;
    let p_n = first_return_lower_bound(&sets.word)?;
    let fm = model.realize(path, 0..(k + 2 * n + 2) as isize)?;
    let mut value = 0.0;
    for i in 1..=k {
        value += return_sum(&fm, i as isize, &sets.word, 1)?;
    }
    Ok(EarlyReturnCheck { n, k, p_n, value })
}
