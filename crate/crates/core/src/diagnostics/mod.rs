//! Numeric audit of the terms that control the quenched law: `M_n`, the
//! `G/H/K` decomposition of the error, `delta`, the recursion and the
//! exponential approximation, plus fitted cylinder bounds.
//!
//! All `tau`-events are evaluated exactly by running the target's pattern
//! automaton jointly with the fibre's Markov context (see
//! [`avoid_curve`](crate::measures::avoid_curve)); only the choice of which
//! indices enter the `H` and `delta` sums is random.

mod bounds;

pub use bounds::{early_returns, fit_bounds, max_cylinder_mass, return_sum, BoundFit, BoundSpec, EarlyReturnCheck};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentPath;
use crate::error::{Error, Result};
use crate::measures::{
    all_words, avoid_curve, cylinder_mass, occurrence_curves, FibreMeasure, KmpAutomaton, MarginalMode, OccurrenceCurves,
    SampleMeasureModel,
};
use crate::rng::{self, Purpose};
use crate::word::TargetPoint;

/// `A = C_n(z)`, the sub-cylinder `C_{n+p}(z)` removed to form `A'`, and the
/// automaton for occurrences of `A`.
///
/// For short periods `A'` is kept as its list of `(n+p)`-cylinders, so that
/// its events are sums of non-negative terms and vanish exactly when they
/// should.
#[derive(Debug, Clone)]
pub struct TargetSets {
    pub word: Vec<u8>,
    pub removed: Option<Vec<u8>>,
    pub period: usize,
    escaping: Option<Vec<Vec<u8>>>,
    automaton: KmpAutomaton,
    empty: [u8; 0],
}

/// Largest number of cylinders listed for `A'`.
const ESCAPING_LIST_CAP: usize = 64;

impl TargetSets {
    pub fn new(z: &TargetPoint, n: usize, alphabet: usize) -> Result<Self> {
        let word = z.block(n)?.into_vec();
        let (removed, period) = match z.period() {
            Some(p) => (Some(z.block(n + p)?.into_vec()), p),
            None => (None, 0),
        };
        let escaping = match &removed {
            None => Some(vec![word.clone()]),
            Some(long) => {
                let count = alphabet.checked_pow(period as u32).filter(|&c| c <= ESCAPING_LIST_CAP + 1);
                count.map(|_| {
                    all_words(alphabet, period)
                        .filter(|v| v.as_slice() != &long[n..])
                        .map(|v| [word.as_slice(), &v].concat())
                        .collect()
                })
            }
        };
        let automaton = KmpAutomaton::new(&word, alphabet)?;
        Ok(TargetSets { word, removed, period, escaping, automaton, empty: [] })
    }

    pub fn depth(&self) -> usize {
        self.word.len()
    }

    /// Coordinates fixed by `A'`.
    pub fn span(&self) -> usize {
        self.removed.as_ref().map_or(self.word.len(), Vec::len)
    }

    pub fn mass<F: FibreMeasure + ?Sized>(&self, fm: &F, offset: isize) -> Result<f64> {
        cylinder_mass(fm, offset, &self.word)
    }

    pub fn escaping_mass<F: FibreMeasure + ?Sized>(&self, fm: &F, offset: isize) -> Result<f64> {
        if let Some(list) = &self.escaping {
            return list.iter().map(|u| cylinder_mass(fm, offset, u)).sum();
        }
        let a = cylinder_mass(fm, offset, &self.word)?;
        let b = match &self.removed {
            Some(w) => cylinder_mass(fm, offset, w)?,
            None => 0.0,
        };
        Ok((a - b).max(0.0))
    }

    /// `j -> mu(tau_A > j)`, `j = 0 ..= horizon`.
    pub fn survival<F: FibreMeasure + ?Sized>(&self, fm: &F, offset: isize, horizon: usize) -> Result<Vec<f64>> {
        avoid_curve(fm, offset, &self.empty, &self.automaton, 1, horizon)
    }

    /// `j -> mu(A ∩ {no occurrence of A starting in lo .. lo + j - 1})`.
    pub fn avoid_in<F: FibreMeasure + ?Sized>(&self, fm: &F, offset: isize, lo: usize, horizon: usize) -> Result<Vec<f64>> {
        avoid_curve(fm, offset, &self.word, &self.automaton, lo, horizon)
    }

    /// [`occurrence_curves`] of `A'`.
    pub fn escaping_curves<F: FibreMeasure + ?Sized>(
        &self,
        fm: &F,
        offset: isize,
        lo: usize,
        horizon: usize,
    ) -> Result<OccurrenceCurves> {
        let curves = |u: &[u8]| occurrence_curves(fm, offset, u, &self.automaton, lo, horizon);
        let add = |mut acc: OccurrenceCurves, c: OccurrenceCurves, sign: f64| {
            for (x, y) in acc.avoid.iter_mut().zip(c.avoid) {
                *x += sign * y;
            }
            for (x, y) in acc.hit.iter_mut().zip(c.hit) {
                *x += sign * y;
            }
            acc
        };
        match (&self.escaping, &self.removed) {
            (Some(list), _) => {
                let mut acc = curves(&list[0])?;
                for u in &list[1..] {
                    acc = add(acc, curves(u)?, 1.0);
                }
                Ok(acc)
            }
            (None, Some(long)) => {
                let mut acc = add(curves(&self.word)?, curves(long)?, -1.0);
                acc.avoid.iter_mut().chain(acc.hit.iter_mut()).for_each(|x| *x = x.max(0.0));
                Ok(acc)
            }
            (None, None) => curves(&self.word),
        }
    }

    /// `j -> mu(A' ∩ {no occurrence of A starting in lo .. lo + j - 1})`.
    pub fn escaping_avoid_in<F: FibreMeasure + ?Sized>(
        &self,
        fm: &F,
        offset: isize,
        lo: usize,
        horizon: usize,
    ) -> Result<Vec<f64>> {
        Ok(self.escaping_curves(fm, offset, lo, horizon)?.avoid)
    }
}

/// `k_n = floor(t / mu(A))`.
pub fn k_of(t: f64, mass: f64) -> Result<usize> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidParameter(format!("t = {t} must be finite and non-negative")));
    }
    if !(mass > 0.0) {
        return Err(Error::ZeroMass);
    }
    let k = (t / mass).floor();
    if k > 1e12 {
        return Err(Error::Budget(format!("k_n = {k:.3e}")));
    }
    Ok(k as usize)
}

/// `g = floor(e^{h1 n / 2})`.
pub fn default_gap(h1: f64, n: usize) -> usize {
    (h1 * n as f64 / 2.0).exp().floor() as usize
}

/// `M = sum_{i=1}^{k} mu_{theta^i omega}(A')`.
pub fn compute_mn<F: FibreMeasure + ?Sized>(fm: &F, sets: &TargetSets, k: usize) -> Result<f64> {
    let terms: Vec<f64> = (1..=k)
        .into_par_iter()
        .map(|i| sets.escaping_mass(fm, i as isize))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MnRecord {
    pub k: usize,
    pub value: f64,
    /// `k mu(A')`, the mean of `M` over environments.
    pub expected: f64,
}

/// `M_n` along `path`, with `k_n` from the marginal of `A`.
pub fn mn_record<M: SampleMeasureModel>(
    model: &M,
    path: &EnvironmentPath,
    z: &TargetPoint,
    n: usize,
    t: f64,
    mode: MarginalMode,
) -> Result<MnRecord> {
    let sets = TargetSets::new(z, n, model.alphabet())?;
    let mu_a = model.exact_or(&sets.word, mode)?;
    let mu_ap = match &sets.removed {
        Some(w) => mu_a - model.exact_or(w, mode)?,
        None => mu_a,
    };
    let k = k_of(t, mu_a)?;
    if k == 0 {
        return Ok(MnRecord { k, value: 0.0, expected: 0.0 });
    }
    let fm = model.realize(path, 1..(k + 1 + sets.span()) as isize)?;
    Ok(MnRecord { k, value: compute_mn(&fm, &sets, k)?, expected: k as f64 * mu_ap })
}

trait MarginalExt {
    fn exact_or(&self, w: &[u8], mode: MarginalMode) -> Result<f64>;
}

impl<M: SampleMeasureModel> MarginalExt for M {
    fn exact_or(&self, w: &[u8], mode: MarginalMode) -> Result<f64> {
        Ok(crate::measures::marginal_mass(self, w, mode)?.value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpectationCheck {
    pub k: usize,
    /// `E(M)` by enumeration of every base word on the window.
    pub mean: f64,
    pub expected: f64,
    pub environments: usize,
}

/// Averages `M_n` over every base word of the window `0 .. k + n + p`,
/// weighted by its stationary probability.
pub fn expectation_identity<M: SampleMeasureModel>(
    model: &M,
    z: &TargetPoint,
    n: usize,
    t: f64,
    cap: u64,
) -> Result<ExpectationCheck> {
    let mode = MarginalMode::Exact { cap: crate::measures::DEFAULT_EXACT_CAP.max(n + z.period().unwrap_or(0)) };
    let sets = TargetSets::new(z, n, model.alphabet())?;
    let mu_a = model.exact_or(&sets.word, mode)?;
    let mu_ap = match &sets.removed {
        Some(w) => mu_a - model.exact_or(w, mode)?,
        None => mu_a,
    };
    let k = k_of(t, mu_a)?;
    let expected = k as f64 * mu_ap;
    if k == 0 {
        return Ok(ExpectationCheck { k, mean: 0.0, expected, environments: 0 });
    }
    let base = model.base();
    let (left, right) = model.margin();
    let len = k + 1 + sets.span();
    if (left, right) != (0, 0) && !base.is_trivial() {
        return Err(Error::ExactModeUnavailable("environment enumeration needs a product model or a trivial base".into()));
    }
    let b = base.alphabet_size() as u64;
    let count = b.checked_pow(len as u32).filter(|&c| c <= cap).ok_or(Error::DepthCap { depth: len, cap: cap as usize })?;
    let words: Vec<Vec<u8>> = crate::measures::all_words(b as usize, len).collect();
    let parts: Vec<(f64, f64)> = words
        .par_iter()
        .map(|w| {
            let weight = base.word_probability(w);
            if weight == 0.0 {
                return Ok((0.0, 0.0));
            }
            let mut symbols = vec![0u8; left];
            symbols.extend_from_slice(w);
            symbols.resize(left + len + right, 0);
            let path = EnvironmentPath::from_symbols(symbols, -(left as isize));
            let fm = model.realize(&path, 0..len as isize)?;
            Ok((weight, weight * compute_mn(&fm, &sets, k)?))
        })
        .collect::<Result<_>>()?;
    let total: f64 = parts.iter().map(|p| p.0).sum();
    let mean = parts.iter().map(|p| p.1).sum::<f64>() / total;
    Ok(ExpectationCheck { k, mean, expected, environments: count as usize })
}

/// Sup over `j` of a discrepancy curve, with the bound on `j > J` implied by
/// both compared terms being non-increasing and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Truncated {
    pub value: f64,
    pub argmax: usize,
    pub j_max: usize,
    pub tail: f64,
}

fn sup_diff(a: &[f64], b: &[f64], from: usize) -> Truncated {
    let j_max = a.len() - 1;
    let mut best = (0.0, from.min(j_max));
    for j in from..=j_max {
        let d = (a[j] - b[j]).abs();
        if d > best.0 {
            best = (d, j);
        }
    }
    Truncated { value: best.0, argmax: best.1, j_max, tail: a[j_max].max(b[j_max]) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRecord {
    pub delta: Truncated,
    /// `mu(A) = 0`: `delta` vanishes for a trivial reason.
    pub degenerate: bool,
}

/// `delta_{theta^s omega} = sup_{p <= j <= J} |mu(A') mu(tau > j) - mu(A ∩ {tau > j})|`.
pub fn delta_at<F: FibreMeasure + ?Sized>(fm: &F, sets: &TargetSets, offset: isize, j_max: usize) -> Result<DeltaRecord> {
    let j_max = j_max.max(sets.period);
    let mu_a = sets.mass(fm, offset)?;
    if mu_a == 0.0 {
        let delta = Truncated { value: 0.0, argmax: sets.period, j_max, tail: 0.0 };
        return Ok(DeltaRecord { delta, degenerate: true });
    }
    let mu_ap = sets.escaping_mass(fm, offset)?;
    let s: Vec<f64> = sets.survival(fm, offset, j_max)?.into_iter().map(|x| mu_ap * x).collect();
    let a = sets.avoid_in(fm, offset, 1, j_max)?;
    Ok(DeltaRecord { delta: sup_diff(&s, &a, sets.period), degenerate: false })
}

/// `delta_omega` on `path` with the sup truncated at `j_max`.
pub fn compute_delta<M: SampleMeasureModel>(
    model: &M,
    path: &EnvironmentPath,
    z: &TargetPoint,
    n: usize,
    j_max: usize,
) -> Result<DeltaRecord> {
    let sets = TargetSets::new(z, n, model.alphabet())?;
    let fm = model.realize(path, 0..(j_max + sets.span() + n + 1) as isize)?;
    delta_at(&fm, &sets, 0, j_max)
}

/// Per-index pieces of the decomposition at one `i`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexTerms {
    pub i: usize,
    pub escaping: f64,
    pub g: f64,
    pub k: f64,
    /// With the sup over `j >= p` as defined.
    pub h: Truncated,
    /// With the sup over every `j >= 0`; this is the quantity the
    /// decomposition bounds pointwise.
    pub h_all: f64,
    pub delta: Truncated,
}

fn gk_at<F: FibreMeasure + ?Sized>(fm: &F, sets: &TargetSets, i: usize, gap: usize) -> Result<(f64, f64, f64)> {
    let off = i as isize;
    let ap = sets.escaping_mass(fm, off)?;
    if ap == 0.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let g = sets.escaping_curves(fm, off, 1, gap)?.hit[gap];
    let s = sets.survival(fm, off, gap)?[gap];
    Ok((ap, g, ap * (1.0 - s)))
}

fn index_terms<F: FibreMeasure + ?Sized>(fm: &F, sets: &TargetSets, i: usize, gap: usize, j_max: usize) -> Result<IndexTerms> {
    let off = i as isize;
    let (ap, g, k) = gk_at(fm, sets, i, gap)?;
    let delta = delta_at(fm, sets, off, j_max)?.delta;
    let c = sets.escaping_avoid_in(fm, off, gap + 1, j_max)?;
    let d: Vec<f64> = sets.survival(fm, off + gap as isize, j_max)?.into_iter().map(|x| ap * x).collect();
    let h = sup_diff(&c, &d, sets.period);
    let h_all = sup_diff(&c, &d, 0).value;
    Ok(IndexTerms { i, escaping: ap, g, k, h, h_all, delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSpec {
    pub t: f64,
    /// Defaults to `floor(e^{h1 n / 2})`.
    pub gap: Option<usize>,
    /// Defaults to `4 k_n`.
    pub j_max: Option<usize>,
    /// Number of indices at which `H` and `delta` are evaluated.
    pub subsample: usize,
    pub seed: u64,
    pub h1: f64,
    pub marginal: MarginalMode,
    /// Exponent slack in `m_n = floor(e^{h1 n / (1 + eps)})`.
    pub epsilon: f64,
    /// Upper limit on automaton steps for one audit.
    pub budget: f64,
}

impl AuditSpec {
    pub fn new(t: f64, h1: f64, seed: u64) -> Self {
        AuditSpec {
            t,
            gap: None,
            j_max: None,
            subsample: 64,
            seed,
            h1,
            marginal: MarginalMode::default(),
            epsilon: 0.1,
            budget: 2e10,
        }
    }
}

/// A sum over `i = 1 ..= k` estimated from a uniform subsample of indices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampledSum {
    pub value: f64,
    pub stderr: f64,
}

fn sampled_sum(values: &[f64], k: usize) -> SampledSum {
    let s = values.len();
    if s == 0 {
        return SampledSum { value: 0.0, stderr: 0.0 };
    }
    let mean = values.iter().sum::<f64>() / s as f64;
    if s >= k {
        return SampledSum { value: values.iter().sum(), stderr: 0.0 };
    }
    let var = if s > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s - 1) as f64 } else { 0.0 };
    let fpc = 1.0 - s as f64 / k as f64;
    SampledSum { value: k as f64 * mean, stderr: k as f64 * (var * fpc / s as f64).sqrt() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofTermRecord {
    pub n: usize,
    pub t: f64,
    pub gap: usize,
    pub k: usize,
    pub seed: u64,
    pub m: f64,
    pub m_expected: f64,
    pub g: f64,
    pub k_term: f64,
    pub h: SampledSum,
    /// `sum_{i <= k - p} delta_i`.
    pub delta_sum: SampledSum,
    pub j_max: usize,
    /// Largest truncation bound seen on the sampled `H` and `delta` terms.
    pub tail: f64,
    pub indices: Vec<IndexTerms>,
    /// `delta_i <= G_i + H_i(all j) + K_i` at every sampled index.
    pub pointwise_ok: bool,
    /// Estimate and standard error of `sum delta - H`, compared to `G + K`.
    pub excess: SampledSum,
    /// `sum delta <= G + H + K` within four standard errors.
    pub decomposition_ok: bool,
    /// `m_n = floor(e^{h1 n / (1 + eps)})`.
    pub variance_window: usize,
    /// `2 c1 t m_n e^{-h1 n}` with `c1 = 1`; the near-diagonal part of the
    /// variance bound on `M_n`.
    pub near_diagonal: f64,
}

impl ProofTermRecord {
    /// Slack of the summed decomposition, in the direction that must stay
    /// non-negative.
    pub fn bound_slack(&self) -> f64 {
        self.g + self.h.value + self.k_term - self.delta_sum.value
    }
}

/// `M`, `G`, `H`, `K` and `delta` on one environment path.  `G` and `K` sum
/// over every index; `H` and `delta` over a seeded subsample.
pub fn proof_terms<F: FibreMeasure + ?Sized>(
    fm: &F,
    sets: &TargetSets,
    mu_a: f64,
    mu_ap: f64,
    spec: &AuditSpec,
) -> Result<ProofTermRecord> {
    let n = sets.depth();
    let p = sets.period;
    let k = k_of(spec.t, mu_a)?;
    let gap = spec.gap.unwrap_or_else(|| default_gap(spec.h1, n));
    if gap > k {
        return Err(Error::InvalidParameter(format!("gap {gap} exceeds k_n = {k}")));
    }
    let j_max = spec.j_max.unwrap_or(4 * k).max(p);
    let s = spec.subsample.min(k);
    let work = s as f64 * 5.0 * (j_max + gap + n) as f64 * (n + 1) as f64 * fm.alphabet().pow(fm.memory() as u32 + 1) as f64;
    if work > spec.budget {
        return Err(Error::Budget(format!("{work:.2e} automaton steps for H and delta")));
    }

    let per: Vec<(f64, f64, f64)> = (1..=k).into_par_iter().map(|i| gk_at(fm, sets, i, gap)).collect::<Result<_>>()?;
    let m: f64 = per.iter().map(|x| x.0).sum();
    let g: f64 = per.iter().map(|x| x.1).sum();
    let k_term: f64 = per.iter().map(|x| x.2).sum();

    let mut rng = rng::stream(spec.seed, Purpose::Subsample, n as u64);
    let mut picks: Vec<usize> = index::sample(&mut rng, k, s).into_iter().map(|i| i + 1).collect();
    picks.sort_unstable();
    let indices: Vec<IndexTerms> = picks
        .par_iter()
        .map(|&i| index_terms(fm, sets, i, gap, j_max))
        .collect::<Result<_>>()?;

    let h = sampled_sum(&indices.iter().map(|x| x.h.value).collect::<Vec<_>>(), k);
    let delta_of = |x: &IndexTerms| if x.i + p <= k { x.delta.value } else { 0.0 };
    let delta_sum = sampled_sum(&indices.iter().map(delta_of).collect::<Vec<_>>(), k);
    let excess = sampled_sum(&indices.iter().map(|x| delta_of(x) - x.h.value).collect::<Vec<_>>(), k);
    let tol = 1e-12;
    let pointwise_ok = indices.iter().all(|x| x.delta.value <= x.g + x.h_all + x.k + tol);
    let decomposition_ok = excess.value <= g + k_term + 4.0 * excess.stderr + tol;
    let tail = indices.iter().map(|x| x.h.tail.max(x.delta.tail)).fold(0.0, f64::max);
    let variance_window = (spec.h1 * n as f64 / (1.0 + spec.epsilon)).exp().floor() as usize;
    let near_diagonal = 2.0 * spec.t * variance_window as f64 * (-spec.h1 * n as f64).exp();
    Ok(ProofTermRecord {
        n,
        t: spec.t,
        gap,
        k,
        seed: spec.seed,
        m,
        m_expected: k as f64 * mu_ap,
        g,
        k_term,
        h,
        delta_sum,
        j_max,
        tail,
        indices,
        pointwise_ok,
        excess,
        decomposition_ok,
        variance_window,
        near_diagonal,
    })
}

/// Window of environment indices a proof-term audit reads.
pub fn audit_window(k: usize, gap: usize, j_max: usize, sets: &TargetSets) -> usize {
    k + gap + j_max + sets.span() + sets.depth() + 2
}

/// [`proof_terms`] on a path sampled from `spec.seed`.
pub fn audit<M: SampleMeasureModel>(model: &M, z: &TargetPoint, n: usize, spec: &AuditSpec) -> Result<ProofTermRecord> {
    let sets = TargetSets::new(z, n, model.alphabet())?;
    let mu_a = model.exact_or(&sets.word, spec.marginal)?;
    let mu_ap = match &sets.removed {
        Some(w) => mu_a - model.exact_or(w, spec.marginal)?,
        None => mu_a,
    };
    let k = k_of(spec.t, mu_a)?;
    let gap = spec.gap.unwrap_or_else(|| default_gap(spec.h1, n));
    let j_max = spec.j_max.unwrap_or(4 * k).max(sets.period);
    let len = audit_window(k, gap, j_max, &sets);
    let mut env = rng::stream(spec.seed, Purpose::Environment, 0);
    let path = model.sample_path(len, &mut env)?;
    let fm = model.realize(&path, 0..len as isize)?;
    proof_terms(&fm, &sets, mu_a, mu_ap, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecursionCheck {
    /// `|mu(tau > k) - prod_{i=1}^{k-p} (1 - mu_i(A')) mu_{k-p}(tau > p)|`.
    pub value: f64,
    /// `sum_{i=1}^{k-p} delta_i prod_{j<i} (1 - mu_j(A'))`.
    pub bound: f64,
    pub slack: f64,
}

/// The recursion inequality at horizon `k`, every term exact; `delta_i` takes
/// its sup over `p <= j <= k`, which is all the recursion uses.
pub fn recursion_check<F: FibreMeasure + ?Sized>(fm: &F, sets: &TargetSets, k: usize) -> Result<RecursionCheck> {
    let p = sets.period;
    if k <= p {
        return Ok(RecursionCheck { value: 0.0, bound: 0.0, slack: 0.0 });
    }
    let lhs = sets.survival(fm, 0, k)?[k];
    let mut prod = 1.0;
    let mut bound = 0.0;
    for i in 1..=k - p {
        bound += prod * delta_at(fm, sets, i as isize, k)?.delta.value;
        prod *= 1.0 - sets.escaping_mass(fm, i as isize)?;
    }
    let rhs = prod * sets.survival(fm, (k - p) as isize, p)?[p];
    let value = (lhs - rhs).abs();
    Ok(RecursionCheck { value, bound, slack: bound - value })
}

/// [`recursion_check`] on `path`.
pub fn recursion_inequality_check<M: SampleMeasureModel>(
    model: &M,
    path: &EnvironmentPath,
    z: &TargetPoint,
    n: usize,
    k: usize,
) -> Result<RecursionCheck> {
    let sets = TargetSets::new(z, n, model.alphabet())?;
    let fm = model.realize(path, 0..(2 * k + sets.span() + n + 2) as isize)?;
    recursion_check(&fm, &sets, k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpProductCheck {
    pub k: usize,
    pub product: f64,
    pub m: f64,
    /// `|product - e^{-M}|`.
    pub gap: f64,
    /// Largest `mu_i(A')` over the window.
    pub epsilon: f64,
    /// `e^{-(1+2 eps) S} <= prod (1 - x_i) <= e^{-(1-2 eps) S}`, checked
    /// when `eps <= 1/2`.
    pub sandwich_ok: bool,
}

/// Exponential approximation of a product of escape factors.  `masses` are
/// `mu_i(A')` for `i = 1 ..= k`; `tail` is `mu_{k-p}(tau > p)`.
pub fn exp_product_gap(masses: &[f64], p: usize, tail: f64) -> ExpProductCheck {
    let k = masses.len();
    let m: f64 = masses.iter().sum();
    let cut = k.saturating_sub(p);
    let product = masses[..cut].iter().map(|x| 1.0 - x).product::<f64>() * tail;
    let full: f64 = masses.iter().map(|x| 1.0 - x).product();
    let epsilon = masses.iter().copied().fold(0.0, f64::max);
    let tol = 1e-12;
    let sandwich_ok = epsilon > 0.5
        || ((-(1.0 + 2.0 * epsilon) * m).exp() <= full + tol && full <= (-(1.0 - 2.0 * epsilon) * m).exp() + tol);
    ExpProductCheck { k, product, m, gap: (product - (-m).exp()).abs(), epsilon, sandwich_ok }
}

/// [`exp_product_gap`] along `path` with `k = k_n(t)`.
pub fn exp_product_check<M: SampleMeasureModel>(
    model: &M,
    path: &EnvironmentPath,
    z: &TargetPoint,
    n: usize,
    t: f64,
    mode: MarginalMode,
) -> Result<ExpProductCheck> {
    let sets = TargetSets::new(z, n, model.alphabet())?;
    let k = k_of(t, model.exact_or(&sets.word, mode)?)?;
    if k == 0 {
        return Ok(exp_product_gap(&[], sets.period, 1.0));
    }
    let fm = model.realize(path, 0..(k + sets.span() + n + 2) as isize)?;
    let masses: Vec<f64> = (1..=k)
        .into_par_iter()
        .map(|i| sets.escaping_mass(&fm, i as isize))
        .collect::<Result<_>>()?;
    let p = sets.period.min(k);
    let tail = sets.survival(&fm, (k - p) as isize, p)?[p];
    Ok(exp_product_gap(&masses, sets.period, tail))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::RandomProductMeasure;
    use crate::word::Word;
    use approx::assert_abs_diff_eq;

    fn coin() -> RandomProductMeasure {
        RandomProductMeasure::bernoulli(vec![0.5, 0.5]).unwrap()
    }

    fn ab() -> RandomProductMeasure {
        RandomProductMeasure::alpha_beta(0.3, 0.6, 0).unwrap()
    }

    fn periodic(block: &[u8]) -> TargetPoint {
        TargetPoint::periodic(Word::from_raw(block.to_vec())).unwrap()
    }

    fn path_of(model: &RandomProductMeasure, len: usize, seed: u64) -> EnvironmentPath {
        model.sample_path(len, &mut rng::stream(seed, Purpose::Environment, 0)).unwrap()
    }

    /// First occurrence of `w` at a start in `1 ..` within `x`, by scanning.
    fn first_hit(x: &[u8], w: &[u8]) -> Option<usize> {
        (1..=x.len().saturating_sub(w.len())).find(|&s| &x[s..s + w.len()] == w)
    }

    #[test]
    fn mn_for_fair_coin_is_half() {
        let m = coin();
        let path = EnvironmentPath::constant(0, 0..5000);
        for n in [3, 6, 9] {
            let r = mn_record(&m, &path, &periodic(&[0]), n, 1.0, MarginalMode::default()).unwrap();
            assert_eq!(r.k, 1 << n);
            assert_abs_diff_eq!(r.value, 0.5, epsilon = 1e-12);
            assert_abs_diff_eq!(r.expected, 0.5, epsilon = 1e-12);
        }
        let r = mn_record(&m, &path, &periodic(&[0]), 5, 0.0, MarginalMode::default()).unwrap();
        assert_eq!((r.k, r.value), (0, 0.0));
    }

    #[test]
    fn expectation_identity_by_enumeration() {
        let e = expectation_identity(&ab(), &periodic(&[0]), 3, 1.0, 1 << 22).unwrap();
        // mu(C_3) = 0.45^3, so k = 10 and mu(A') = 0.45^3 * 0.55
        assert_eq!(e.k, 10);
        assert_abs_diff_eq!(e.expected, 10.0 * 0.45f64.powi(3) * 0.55, epsilon = 1e-15);
        assert_abs_diff_eq!(e.mean, e.expected, epsilon = 1e-12);
        assert_eq!(e.environments, 1 << 15);
    }

    #[test]
    fn escaping_and_full_set_agree_from_the_period_on() {
        let m = ab();
        let path = path_of(&m, 64, 7);
        let fm = m.realize(&path, 0..64).unwrap();
        for n in 1..=6 {
            let sets = TargetSets::new(&periodic(&[0]), n, 2).unwrap();
            let a = sets.avoid_in(&fm, 3, 1, 1).unwrap()[1];
            let ap = sets.escaping_avoid_in(&fm, 3, 1, 1).unwrap()[1];
            // brute force over words of length n + 1
            let w = &sets.word;
            let mut oracle = [0.0, 0.0];
            for x in all_words(2, n + 1) {
                if &x[..n] != w.as_slice() || first_hit(&x, w) == Some(1) {
                    continue;
                }
                let p = cylinder_mass(&fm, 3, &x).unwrap();
                oracle[0] += p;
                if x[n] != 0 {
                    oracle[1] += p;
                }
            }
            assert_abs_diff_eq!(a, ap, epsilon = 1e-15);
            assert_abs_diff_eq!(a, oracle[0], epsilon = 1e-15);
            assert_abs_diff_eq!(ap, oracle[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn delta_matches_enumeration() {
        let m = ab();
        let path = path_of(&m, 64, 3);
        let fm = m.realize(&path, 0..64).unwrap();
        for z in [periodic(&[0]), periodic(&[0, 1])] {
            let n = 3;
            let j_max = 6;
            let sets = TargetSets::new(&z, n, 2).unwrap();
            let d = delta_at(&fm, &sets, 2, j_max).unwrap();
            let w = &sets.word;
            let len = j_max + n;
            let mu_a = cylinder_mass(&fm, 2, w).unwrap();
            let mu_ap = sets.escaping_mass(&fm, 2).unwrap();
            let mut surv = vec![0.0; j_max + 1];
            let mut a_surv = vec![0.0; j_max + 1];
            for x in all_words(2, len) {
                let p = cylinder_mass(&fm, 2, &x).unwrap();
                let t = first_hit(&x, w).unwrap_or(usize::MAX);
                for j in 0..=j_max {
                    if t > j {
                        surv[j] += p;
                        if x.starts_with(w) {
                            a_surv[j] += p;
                        }
                    }
                }
            }
            let oracle = (sets.period..=j_max).map(|j| (mu_ap * surv[j] - a_surv[j]).abs()).fold(0.0, f64::max);
            assert!(mu_a > 0.0);
            assert_abs_diff_eq!(d.delta.value, oracle, epsilon = 1e-14);
            assert!(!d.degenerate);
        }
    }

    #[test]
    fn delta_degenerate_on_null_target() {
        let m = RandomProductMeasure::bernoulli(vec![1.0, 0.0]).unwrap();
        let path = EnvironmentPath::constant(0, 0..100);
        let d = compute_delta(&m, &path, &periodic(&[1]), 3, 10).unwrap();
        assert!(d.degenerate);
        assert_eq!(d.delta.value, 0.0);
    }

    #[test]
    fn product_terms_vanish_where_independence_is_exact() {
        let m = ab();
        let z = periodic(&[0]);
        let n = 4;
        // A' fixes n + p coordinates; beyond that gap the product model decouples
        let spec = AuditSpec { gap: Some(n), subsample: 24, ..AuditSpec::new(1.0, -(0.7f64).ln(), 5) };
        let r = audit(&m, &z, n, &spec).unwrap();
        assert_eq!(r.k, 24);
        assert!(r.h.value.abs() <= 1e-15, "{:?}", r.h);
        // a point of A' cannot return to A before time n + 1
        assert_eq!(r.g, 0.0);
        assert!(r.pointwise_ok && r.decomposition_ok);
        // K <= g c1 e^{-h1 n} M with c1 = 1
        assert!(r.k_term <= r.gap as f64 * 0.7f64.powi(n as i32) * r.m);
    }

    #[test]
    fn decomposition_holds_with_short_gaps() {
        for (z, n) in [(periodic(&[0]), 6), (periodic(&[0, 1]), 6), (periodic(&[0, 0, 1]), 5)] {
            for g in [1, 2, 3] {
                let spec = AuditSpec { gap: Some(g), subsample: 16, ..AuditSpec::new(1.0, -(0.7f64).ln(), 1) };
                let r = audit(&ab(), &z, n, &spec).unwrap();
                assert!(r.pointwise_ok, "{z:?} g={g}");
                assert!(r.decomposition_ok, "{z:?} g={g}");
                assert!(r.m >= 0.0 && r.g >= 0.0 && r.h.value >= 0.0 && r.k_term >= 0.0);
            }
        }
    }

    #[test]
    fn recursion_inequality_is_exact() {
        let m = ab();
        let path = path_of(&m, 200, 11);
        let r = recursion_inequality_check(&m, &path, &periodic(&[0]), 3, 12).unwrap();
        assert!(r.slack >= 0.0, "{r:?}");
        let r = recursion_inequality_check(&coin(), &EnvironmentPath::constant(0, 0..200), &periodic(&[0]), 4, 50).unwrap();
        assert!(r.slack >= 0.0, "{r:?}");
        let r = recursion_inequality_check(&m, &path, &periodic(&[0]), 3, 1).unwrap();
        assert!(r.slack >= 0.0);
    }

    #[test]
    fn survival_oracle_for_recursion() {
        // mu(tau > k) by enumeration
        let m = ab();
        let path = path_of(&m, 64, 2);
        let fm = m.realize(&path, 0..64).unwrap();
        let sets = TargetSets::new(&periodic(&[0, 1]), 3, 2).unwrap();
        let k = 8;
        let s = sets.survival(&fm, 0, k).unwrap();
        let mut oracle = 0.0;
        for x in all_words(2, k + 3) {
            if first_hit(&x, &sets.word).map_or(true, |t| t > k) {
                oracle += cylinder_mass(&fm, 0, &x).unwrap();
            }
        }
        assert_abs_diff_eq!(s[k], oracle, epsilon = 1e-14);
    }

    #[test]
    fn exp_product_closed_form() {
        for (x, k) in [(0.01, 100), (0.001, 700), (0.2, 5)] {
            let c = exp_product_gap(&vec![x; k], 0, 1.0);
            let kf = k as f64;
            assert_abs_diff_eq!(c.gap, ((-kf * x).exp() - (1.0 - x).powi(k as i32)).abs(), epsilon = 1e-15);
            assert!(c.gap <= kf * x * x * (-(kf - 1.0) * x).exp());
            assert!(c.sandwich_ok);
        }
        let c = exp_product_gap(&[], 1, 1.0);
        assert_eq!(c.gap, 0.0);
        let m = ab();
        let path = path_of(&m, 10, 1);
        let c = exp_product_check(&m, &path, &periodic(&[0]), 4, 0.0, MarginalMode::default()).unwrap();
        assert_eq!((c.k, c.gap), (0, 0.0));
    }

    #[test]
    fn default_gap_values() {
        let h1 = -(0.7f64).ln();
        assert_eq!([8, 11, 14].map(|n| default_gap(h1, n)), [4, 7, 12]);
    }

    #[test]
    fn sampled_sum_is_exact_on_full_sample() {
        let s = sampled_sum(&[1.0, 2.0, 3.0], 3);
        assert_eq!((s.value, s.stderr), (6.0, 0.0));
        let s = sampled_sum(&[1.0, 3.0], 10);
        assert_abs_diff_eq!(s.value, 20.0);
        assert!(s.stderr > 0.0);
    }
}
