//! Sample measures `mu_omega`, the marginal `mu`, and trajectory sampling.
//!
//! A [`FibreMeasure`] is the family `s -> mu_{theta^s omega}` realized along one
//! environment path. Every implementation is an exact, possibly
//! time-inhomogeneous, Markov law of finite order: the conditional law of `x_k`
//! given the past depends on at most `memory()` previous symbols.

mod occurrence;
mod product;

use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::environment::{BaseSystem, EnvironmentPath};
use crate::error::{Error, Result};
use crate::rng::{self, Purpose, TrialRng};

pub use occurrence::{avoid_curve, occurrence_curves, KmpAutomaton, OccurrenceCurves};
pub use product::{ProductFibre, RandomProductMeasure};

/// Exact-mode depth cap for marginal masses.
pub const DEFAULT_EXACT_CAP: usize = 20;

pub trait FibreMeasure: Send + Sync {
    fn alphabet(&self) -> usize;

    /// Markov order of the conditional law.
    fn memory(&self) -> usize;

    /// Fibre positions (relative to the path origin) that may be queried.
    /// A cylinder of length `L` at offset `s` needs `s..s + L` inside.
    fn positions(&self) -> Range<isize>;

    /// `log mu_{theta^s omega}([w])`; `-inf` for zero mass.
    fn log_cylinder_mass(&self, offset: isize, w: &[u8]) -> Result<f64>;

    /// Law of `x_k` under `mu_{theta^s omega}` given the last `min(k, memory)`
    /// symbols `context`. `out` has length `alphabet()`.
    fn conditional(&self, offset: isize, k: usize, context: &[u8], out: &mut [f64]) -> Result<()>;

    /// One draw from [`FibreMeasure::conditional`].
    fn draw(&self, offset: isize, k: usize, context: &[u8], rng: &mut TrialRng) -> Result<u8> {
        let mut probs = vec![0.0; self.alphabet()];
        self.conditional(offset, k, context, &mut probs)?;
        Ok(draw_from(&probs, rng))
    }

    /// Draws `x_k, x_{k+1}, ...` into `out`, continuing from `context`.
    fn fill(&self, offset: isize, k: usize, context: &mut Context, rng: &mut TrialRng, out: &mut [u8]) -> Result<()> {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.draw(offset, k + j, context.as_slice(), rng)?;
            context.push(*o);
        }
        Ok(())
    }

    fn check_span(&self, offset: isize, len: usize) -> Result<()> {
        let have = self.positions();
        let end = offset + len as isize;
        if offset < have.start || end > have.end {
            let index = if offset < have.start { offset } else { end - 1 };
            return Err(Error::OutOfWindow { index, lo: have.start, hi: have.end });
        }
        Ok(())
    }
}

pub(crate) fn draw_from(probs: &[f64], rng: &mut TrialRng) -> u8 {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (s, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return s as u8;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
}

/// A model of sample measures over a base system.
pub trait SampleMeasureModel: Send + Sync {
    type Fibre: FibreMeasure;

    fn alphabet(&self) -> usize;

    fn base(&self) -> &BaseSystem;

    /// Base coordinates needed left and right of the realized positions.
    fn margin(&self) -> (usize, usize) {
        (0, 0)
    }

    /// Realizes `mu_{theta^i omega}` for `i` in `positions`.
    fn realize(&self, path: &EnvironmentPath, positions: Range<isize>) -> Result<Self::Fibre>;

    /// The marginal `mu([w])` in exact mode, if this model supports it.
    fn exact_marginal(&self, w: &[u8], cap: usize) -> Result<f64>;

    /// Samples a path long enough to realize positions `0..len`.
    fn sample_path(&self, len: usize, rng: &mut TrialRng) -> Result<EnvironmentPath> {
        let (left, right) = self.margin();
        crate::environment::sample_range(
            self.base(),
            -(left as isize)..(len + right) as isize,
            rng,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalMode {
    Exact { cap: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for MarginalMode {
    fn default() -> Self {
        MarginalMode::Exact { cap: DEFAULT_EXACT_CAP }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalEstimate {
    pub value: f64,
    pub standard_error: f64,
    pub mode: MarginalMode,
}

/// `mu([w]) = E[mu_omega([w])]`.
pub fn marginal_mass<M: SampleMeasureModel>(model: &M, w: &[u8], mode: MarginalMode) -> Result<MarginalEstimate> {
    match mode {
        MarginalMode::Exact { cap } => {
            if w.len() > cap {
                return Err(Error::DepthCap { depth: w.len(), cap });
            }
            let value = model.exact_marginal(w, cap)?;
            Ok(MarginalEstimate { value, standard_error: 0.0, mode })
        }
        MarginalMode::MonteCarlo { samples, seed } => {
            if samples < 2 {
                return Err(Error::InvalidParameter("Monte Carlo marginal needs at least 2 samples".into()));
            }
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for i in 0..samples {
                let mut rng = rng::stream(seed, Purpose::MonteCarlo, i as u64);
                let path = model.sample_path(w.len(), &mut rng)?;
                let fibre = model.realize(&path, 0..w.len().max(1) as isize)?;
                let m = cylinder_mass(&fibre, 0, w)?;
                sum += m;
                sum_sq += m * m;
            }
            let n = samples as f64;
            let mean = sum / n;
            let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
            Ok(MarginalEstimate { value: mean, standard_error: (var / n).sqrt(), mode })
        }
    }
}

/// `mu_{theta^s omega}([w])`, exactly 0 for zero-mass cylinders.
pub fn cylinder_mass<F: FibreMeasure + ?Sized>(fm: &F, offset: isize, w: &[u8]) -> Result<f64> {
    let l = fm.log_cylinder_mass(offset, w)?;
    Ok(if l == f64::NEG_INFINITY { 0.0 } else { l.exp() })
}

/// `a -> mu([prefix a]) / mu([prefix])`.
pub fn next_symbol_distribution<F: FibreMeasure + ?Sized>(fm: &F, offset: isize, prefix: &[u8]) -> Result<Vec<f64>> {
    if fm.log_cylinder_mass(offset, prefix)? == f64::NEG_INFINITY {
        return Err(Error::ZeroMass);
    }
    fm.check_span(offset, prefix.len() + 1)?;
    let c = prefix.len().min(fm.memory());
    let mut out = vec![0.0; fm.alphabet()];
    fm.conditional(offset, prefix.len(), &prefix[prefix.len() - c..], &mut out)?;
    Ok(out)
}

/// The last `memory` symbols of a trajectory.
#[derive(Debug, Clone)]
pub struct Context {
    buf: Vec<u8>,
    memory: usize,
}

impl Context {
    pub fn new(memory: usize) -> Self {
        Context { buf: Vec::with_capacity(memory), memory }
    }

    #[inline]
    pub fn push(&mut self, s: u8) {
        if self.memory == 0 {
            return;
        }
        if self.buf.len() == self.memory {
            self.buf.remove(0);
        }
        self.buf.push(s);
    }

    #[inline]
    pub fn as_slice(&self) -> &[u8] {
        &self.buf
    }

    pub fn clear(&mut self) {
        self.buf.clear();
    }
}

/// Streams `x ~ mu_{theta^s omega}` one symbol at a time.
pub struct Trajectory<'a, F: FibreMeasure + ?Sized> {
    fm: &'a F,
    offset: isize,
    k: usize,
    context: Context,
    rng: &'a mut TrialRng,
}

impl<'a, F: FibreMeasure + ?Sized> Trajectory<'a, F> {
    pub fn new(fm: &'a F, offset: isize, rng: &'a mut TrialRng) -> Self {
        Trajectory { fm, offset, k: 0, context: Context::new(fm.memory()), rng }
    }

    #[inline]
    pub fn next_symbol(&mut self) -> Result<u8> {
        let pos = self.offset + self.k as isize;
        let have = self.fm.positions();
        if pos < have.start || pos >= have.end {
            return Err(Error::OutOfWindow { index: pos, lo: have.start, hi: have.end });
        }
        let s = self.fm.draw(self.offset, self.k, self.context.as_slice(), self.rng)?;
        self.context.push(s);
        self.k += 1;
        Ok(s)
    }
}

pub fn sample_trajectory<F: FibreMeasure + ?Sized>(
    fm: &F,
    offset: isize,
    length: usize,
    rng: &mut TrialRng,
) -> Result<Vec<u8>> {
    fm.check_span(offset, length)?;
    let mut t = Trajectory::new(fm, offset, rng);
    (0..length).map(|_| t.next_symbol()).collect()
}

/// All words of length `len` over `alphabet`, in lexicographic order.
pub fn all_words(alphabet: usize, len: usize) -> impl Iterator<Item = Vec<u8>> {
    let total = (alphabet as u64).checked_pow(len as u32).unwrap_or(u64::MAX);
    (0..total).map(move |mut idx| {
        let mut w = vec![0u8; len];
        for slot in w.iter_mut().rev() {
            *slot = (idx % alphabet as u64) as u8;
            idx /= alphabet as u64;
        }
        w
    })
}

/// Enumeration cap shared by the small-depth oracles.
pub const ENUMERATION_CAP: u64 = 1 << 22;

pub(crate) fn check_enumeration(alphabet: usize, len: usize) -> Result<()> {
    match (alphabet as u64).checked_pow(len as u32) {
        Some(c) if c <= ENUMERATION_CAP => Ok(()),
        _ => Err(Error::Budget(format!("enumerating {alphabet}^{len} words exceeds the cap"))),
    }
}

/// `|mu_omega(sigma^{-j}[w]) - mu_{theta^j omega}([w])|` by enumerating the
/// `j` leading symbols.
pub fn pushforward_check<F: FibreMeasure + ?Sized>(fm: &F, offset: isize, w: &[u8], j: usize) -> Result<f64> {
    check_enumeration(fm.alphabet(), j)?;
    let direct = cylinder_mass(fm, offset + j as isize, w)?;
    let mut total = 0.0;
    for mut v in all_words(fm.alphabet(), j) {
        v.extend_from_slice(w);
        total += cylinder_mass(fm, offset, &v)?;
    }
    Ok((total - direct).abs())
}

/// `mu_{theta^s omega}` of the set fixing each segment `(start, word)`.
/// Segments must be sorted and disjoint.
pub fn joint_mass<F: FibreMeasure + ?Sized>(fm: &F, offset: isize, segments: &[(usize, &[u8])]) -> Result<f64> {
    let mut end = 0;
    for &(start, w) in segments {
        if start < end {
            return Err(Error::InvalidParameter("segments overlap or are unsorted".into()));
        }
        end = start + w.len();
    }
    if fm.memory() == 0 {
        let mut p = 1.0;
        for &(start, w) in segments {
            p *= cylinder_mass(fm, offset + start as isize, w)?;
        }
        return Ok(p);
    }
    fm.check_span(offset, end)?;
    let a = fm.alphabet();
    let m = fm.memory();
    let mut fixed: Vec<Option<u8>> = vec![None; end];
    for &(start, w) in segments {
        for (i, &s) in w.iter().enumerate() {
            fixed[start + i] = Some(s);
        }
    }
    // forward pass over contexts of length min(pos, m)
    let mut states: Vec<(Vec<u8>, f64)> = vec![(Vec::new(), 1.0)];
    let mut probs = vec![0.0; a];
    for (pos, slot) in fixed.iter().enumerate() {
        let mut next: std::collections::BTreeMap<Vec<u8>, f64> = Default::default();
        for (ctx, mass) in &states {
            fm.conditional(offset, pos, ctx, &mut probs)?;
            for b in 0..a as u8 {
                if slot.is_some_and(|f| f != b) || probs[b as usize] == 0.0 {
                    continue;
                }
                let mut c = ctx.clone();
                c.push(b);
                if c.len() > m {
                    c.remove(0);
                }
                *next.entry(c).or_insert(0.0) += mass * probs[b as usize];
            }
        }
        states = next.into_iter().collect();
    }
    Ok(states.iter().map(|(_, m)| m).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_words_enumerates_in_order() {
        let w: Vec<_> = all_words(2, 2).collect();
        assert_eq!(w, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
        assert_eq!(all_words(3, 0).count(), 1);
    }

    #[test]
    fn context_keeps_last_symbols() {
        let mut c = Context::new(2);
        for s in [1, 2, 3] {
            c.push(s);
        }
        assert_eq!(c.as_slice(), &[2, 3]);
        let mut z = Context::new(0);
        z.push(1);
        assert!(z.as_slice().is_empty());
    }
}
