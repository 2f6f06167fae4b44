//! The invertible base system and the random transition-matrix family.
//!
//! The base is a finite-state Markov shift. Environments are materialized as
//! finite two-sided windows; every shift is checked against the window and
//! nothing is ever re-sampled behind the caller's back.

use std::ops::Range;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose, TrialRng};
use crate::word::TransitionMatrix;

const ROW_TOL: f64 = 1e-12;
const STATIONARY_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaseSystem {
    transition: Vec<Vec<f64>>,
    stationary: Vec<f64>,
    window_radius: usize,
}

impl BaseSystem {
    /// Validates `transition` and, when `stationary` is absent, computes it by
    /// lazy power iteration.
    pub fn new(transition: Vec<Vec<f64>>, stationary: Option<Vec<f64>>, window_radius: usize) -> Result<Self> {
        let k = transition.len();
        if k == 0 || k > u8::MAX as usize + 1 {
            return Err(Error::InvalidParameter(format!("base alphabet size {k} unsupported")));
        }
        for (row, r) in transition.iter().enumerate() {
            if r.len() != k {
                return Err(Error::InvalidParameter(format!("base row {row} has length {}", r.len())));
            }
            if r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidProbabilities { index: row, reason: "entry outside [0,1]".into() });
            }
            let sum: f64 = r.iter().sum();
            if (sum - 1.0).abs() > ROW_TOL {
                return Err(Error::NonStochastic { row, sum });
            }
        }
        let stationary = match stationary {
            Some(pi) => pi,
            None => stationary_vector(&transition)?,
        };
        if stationary.len() != k {
            return Err(Error::InvalidParameter("stationary vector has wrong length".into()));
        }
        if stationary.iter().any(|&p| p <= 0.0) {
            return Err(Error::InvalidParameter("stationary vector must be strictly positive".into()));
        }
        let sum: f64 = stationary.iter().sum();
        if (sum - 1.0).abs() > ROW_TOL {
            return Err(Error::InvalidParameter(format!("stationary vector sums to {sum}")));
        }
        let pushed = vec_mat(&stationary, &transition);
        let defect = pushed.iter().zip(&stationary).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if defect > ROW_TOL {
            return Err(Error::InvalidParameter(format!(
                "stationary vector is not invariant (defect {defect:e})"
            )));
        }
        Ok(BaseSystem { transition, stationary, window_radius })
    }

    /// i.i.d. base with the given one-site law.
    pub fn iid(probs: Vec<f64>, window_radius: usize) -> Result<Self> {
        let rows = vec![probs.clone(); probs.len()];
        Self::new(rows, Some(probs), window_radius)
    }

    /// A single base state: the random system is deterministic.
    pub fn trivial(window_radius: usize) -> Self {
        BaseSystem { transition: vec![vec![1.0]], stationary: vec![1.0], window_radius }
    }

    pub fn alphabet_size(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    pub fn window_radius(&self) -> usize {
        self.window_radius
    }

    pub fn with_window_radius(mut self, radius: usize) -> Self {
        self.window_radius = radius;
        self
    }

    pub fn is_trivial(&self) -> bool {
        self.transition.len() == 1
    }

    /// Stationary probability of a finite base word.
    pub fn word_probability(&self, word: &[u8]) -> f64 {
        let Some((&first, rest)) = word.split_first() else {
            return 1.0;
        };
        let mut p = self.stationary[first as usize];
        let mut prev = first;
        for &s in rest {
            p *= self.transition[prev as usize][s as usize];
            prev = s;
        }
        p
    }

    /// Continues a stationary base orbit after `prev` (or starts one).
    pub fn extend_orbit(&self, prev: Option<u8>, rng: &mut TrialRng, out: &mut [u8]) {
        if self.is_trivial() {
            out.fill(0);
            return;
        }
        let mut last = prev;
        for o in out.iter_mut() {
            let s = match last {
                None => self.draw(&self.stationary, rng),
                Some(p) => self.draw(&self.transition[p as usize], rng),
            };
            *o = s;
            last = Some(s);
        }
    }

    fn draw(&self, weights: &[f64], rng: &mut TrialRng) -> u8 {
        if weights.len() == 1 {
            return 0;
        }
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (s, &w) in weights.iter().enumerate() {
            acc += w;
            if u < acc {
                return s as u8;
            }
        }
        // rounding: fall back to the last symbol with positive weight
        weights.iter().rposition(|&w| w > 0.0).unwrap_or(0) as u8
    }
}

fn vec_mat(v: &[f64], m: &[Vec<f64>]) -> Vec<f64> {
    let k = v.len();
    (0..k).map(|j| (0..k).map(|i| v[i] * m[i][j]).sum()).collect()
}

fn stationary_vector(p: &[Vec<f64>]) -> Result<Vec<f64>> {
    let k = p.len();
    let mut v = vec![1.0 / k as f64; k];
    // the lazy chain (I + P)/2 has the same stationary law and is aperiodic
    for _ in 0..10_000_000 {
        let pushed = vec_mat(&v, p);
        let next: Vec<f64> = v.iter().zip(&pushed).map(|(a, b)| 0.5 * (a + b)).collect();
        let change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        v = next;
        if change < STATIONARY_TOL {
            let s: f64 = v.iter().sum();
            return Ok(v.into_iter().map(|x| x / s).collect());
        }
    }
    Err(Error::NonConvergence { residual: f64::NAN, tol: STATIONARY_TOL })
}

/// A materialized piece of a base orbit, viewed from a movable origin.
///
/// Index `k` of the view is `theta^k omega` read at coordinate 0, i.e. the
/// symbol `omega_{origin + k}` of the underlying window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvironmentPath {
    symbols: Arc<[u8]>,
    first: isize,
    origin: isize,
    seed: Option<u64>,
}

impl EnvironmentPath {
    /// A path whose `symbols[0]` sits at index `first_index`.
    pub fn from_symbols(symbols: Vec<u8>, first_index: isize) -> Self {
        EnvironmentPath { symbols: symbols.into(), first: first_index, origin: 0, seed: None }
    }

    pub fn constant(symbol: u8, indices: Range<isize>) -> Self {
        let len = (indices.end - indices.start).max(0) as usize;
        Self::from_symbols(vec![symbol; len], indices.start)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// Indices available relative to the current origin.
    pub fn indices(&self) -> Range<isize> {
        let lo = self.first - self.origin;
        lo..lo + self.symbols.len() as isize
    }

    pub fn covers(&self, range: Range<isize>) -> Result<()> {
        let have = self.indices();
        if range.start >= range.end {
            return Ok(());
        }
        if range.start < have.start {
            return Err(Error::OutOfWindow { index: range.start, lo: have.start, hi: have.end });
        }
        if range.end > have.end {
            return Err(Error::OutOfWindow { index: range.end - 1, lo: have.start, hi: have.end });
        }
        Ok(())
    }

    #[inline]
    pub fn get(&self, k: isize) -> Result<u8> {
        let idx = self.origin + k - self.first;
        if idx < 0 || idx as usize >= self.symbols.len() {
            let have = self.indices();
            return Err(Error::OutOfWindow { index: k, lo: have.start, hi: have.end });
        }
        Ok(self.symbols[idx as usize])
    }

    /// Symbols for a relative index range, checked against the window.
    pub fn slice(&self, range: Range<isize>) -> Result<&[u8]> {
        self.covers(range.clone())?;
        let a = (self.origin + range.start - self.first) as usize;
        let b = (self.origin + range.end - self.first) as usize;
        Ok(&self.symbols[a..b.max(a)])
    }

    /// The view of `theta^k omega`; negative `k` uses invertibility.
    pub fn shift(&self, k: isize) -> Result<Self> {
        let moved = EnvironmentPath { origin: self.origin + k, ..self.clone() };
        moved.get(0)?;
        Ok(moved)
    }
}

/// Samples indices `[-W, W + L]` of a stationary base orbit.
pub fn sample_environment(base: &BaseSystem, length: usize, seed: u64) -> Result<EnvironmentPath> {
    let mut rng = rng::stream(seed, Purpose::Environment, 0);
    let mut path = sample_environment_with(base, length, &mut rng)?;
    path.seed = Some(seed);
    Ok(path)
}

pub fn sample_environment_with(base: &BaseSystem, length: usize, rng: &mut TrialRng) -> Result<EnvironmentPath> {
    if length == 0 {
        return Err(Error::InvalidParameter("environment length must be at least 1".into()));
    }
    let w = base.window_radius;
    sample_range(base, -(w as isize)..(w + length + 1) as isize, rng)
}

/// Samples a stationary base orbit on an explicit index range.
pub fn sample_range(base: &BaseSystem, indices: Range<isize>, rng: &mut TrialRng) -> Result<EnvironmentPath> {
    let len = (indices.end - indices.start).max(0) as usize;
    let mut symbols = Vec::with_capacity(len);
    if base.is_trivial() {
        symbols.resize(len, 0);
    } else if len > 0 {
        let mut s = base.draw(&base.stationary, rng);
        symbols.push(s);
        for _ in 1..len {
            s = base.draw(&base.transition[s as usize], rng);
            symbols.push(s);
        }
    }
    Ok(EnvironmentPath::from_symbols(symbols, indices.start))
}

/// `omega -> A(omega)`, depending on `omega` through `omega_0`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomMatrixFamily {
    matrices: Vec<TransitionMatrix>,
}

impl RandomMatrixFamily {
    pub fn new(matrices: Vec<TransitionMatrix>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::InvalidMatrix("family needs at least one matrix".into()));
        };
        let size = first.size();
        if matrices.iter().any(|m| m.size() != size) {
            return Err(Error::InvalidMatrix("matrices act on different alphabets".into()));
        }
        Ok(RandomMatrixFamily { matrices })
    }

    pub fn full(base_alphabet: usize, fibre_alphabet: usize) -> Self {
        RandomMatrixFamily { matrices: vec![TransitionMatrix::full(fibre_alphabet); base_alphabet] }
    }

    pub fn fibre_alphabet(&self) -> usize {
        self.matrices[0].size()
    }

    pub fn base_alphabet(&self) -> usize {
        self.matrices.len()
    }

    #[inline]
    pub fn matrix(&self, base_symbol: u8) -> &TransitionMatrix {
        &self.matrices[base_symbol as usize]
    }

    pub fn is_full(&self) -> bool {
        self.matrices.iter().all(TransitionMatrix::is_full)
    }
}

/// `a_{x_i x_{i+1}}(theta^i omega) = 1` for every consecutive pair of `prefix`.
pub fn fibre_admissible(path: &EnvironmentPath, prefix: &[u8], family: &RandomMatrixFamily) -> Result<bool> {
    if prefix.len() < 2 {
        return Ok(true);
    }
    path.covers(0..prefix.len() as isize)?;
    for (i, pair) in prefix.windows(2).enumerate() {
        if !family.matrix(path.get(i as isize)?).allows(pair[0], pair[1]) {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::word::TransitionMatrix;

    #[test]
    fn sampling_is_reproducible() {
        let base = BaseSystem::iid(vec![0.5, 0.5], 2).unwrap();
        let a = sample_environment(&base, 5, 42).unwrap();
        let b = sample_environment(&base, 5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.indices(), -2..8);
        assert_eq!(a.seed(), Some(42));
    }

    #[test]
    fn degenerate_and_deterministic_bases() {
        let trivial = BaseSystem::trivial(3);
        let p = sample_environment(&trivial, 10, 1).unwrap();
        assert!(p.slice(p.indices()).unwrap().iter().all(|&s| s == 0));

        let flip = BaseSystem::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], None, 0).unwrap();
        assert!((flip.stationary()[0] - 0.5).abs() < 1e-12);
        let p = sample_environment(&flip, 20, 9).unwrap();
        let s = p.slice(p.indices()).unwrap();
        assert!(s.windows(2).all(|w| w[0] != w[1]));
    }

    #[test]
    fn rejects_non_stochastic() {
        let err = BaseSystem::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]], None, 0).unwrap_err();
        assert!(matches!(err, Error::NonStochastic { row: 0, .. }));
    }

    #[test]
    fn shifts_compose_and_invert() {
        let base = BaseSystem::iid(vec![0.3, 0.7], 4).unwrap();
        let p = sample_environment(&base, 10, 5).unwrap();
        assert_eq!(p.shift(0).unwrap(), p);
        assert_eq!(p.shift(3).unwrap().shift(-3).unwrap(), p);
        assert_eq!(p.shift(3).unwrap().get(1).unwrap(), p.get(4).unwrap());
        assert!(matches!(p.shift(100), Err(Error::OutOfWindow { .. })));
        assert!(p.shift(-5).is_err());
        assert!(p.shift(-4).is_ok());
    }

    #[test]
    fn admissibility() {
        let path = EnvironmentPath::from_symbols(vec![0, 0, 1, 0], 0);
        let full = RandomMatrixFamily::full(2, 2);
        assert!(fibre_admissible(&path, &[1, 1, 1, 1], &full).unwrap());
        let no11 = TransitionMatrix::new(vec![vec![true, true], vec![true, false]]).unwrap();
        let family = RandomMatrixFamily::new(vec![TransitionMatrix::full(2), no11]).unwrap();
        assert!(!fibre_admissible(&path, &[0, 0, 1, 1], &family).unwrap());
        assert!(fibre_admissible(&path, &[0, 1, 1, 0], &family).unwrap());
        assert!(fibre_admissible(&path, &[1], &family).unwrap());
        assert!(fibre_admissible(&path, &[], &family).unwrap());
        assert!(fibre_admissible(&path, &[0, 0, 0, 0, 0], &family).is_err());
    }
}
