use std::ops::Range;
use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{Context, FibreMeasure, SampleMeasureModel};
use crate::environment::{BaseSystem, EnvironmentPath};
use crate::error::{Error, Result};
use crate::rng::TrialRng;

const SUM_TOL: f64 = 1e-12;

/// `mu_omega[x_0 .. x_{n-1}] = p_{x_0}(omega) p_{x_1}(theta omega) ... `, with
/// `p(omega)` chosen by `omega_0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomProductMeasure {
    probs: Vec<Vec<f64>>,
    base: BaseSystem,
}

impl RandomProductMeasure {
    /// `probs[b]` is the fibre law used when the base symbol is `b`.
    pub fn new(probs: Vec<Vec<f64>>, base: BaseSystem) -> Result<Self> {
        if probs.len() != base.alphabet_size() {
            return Err(Error::InvalidParameter(format!(
                "{} probability vectors for {} base symbols",
                probs.len(),
                base.alphabet_size()
            )));
        }
        let a = probs[0].len();
        if a == 0 || a > u8::MAX as usize + 1 {
            return Err(Error::InvalidParameter(format!("fibre alphabet size {a} unsupported")));
        }
        for (index, p) in probs.iter().enumerate() {
            if p.len() != a {
                return Err(Error::InvalidProbabilities { index, reason: "length differs from the first vector".into() });
            }
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return Err(Error::InvalidProbabilities { index, reason: "entry outside [0,1]".into() });
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > SUM_TOL {
                return Err(Error::InvalidProbabilities { index, reason: format!("sums to {sum}") });
            }
        }
        Ok(RandomProductMeasure { probs, base })
    }

    /// The same law at every site.
    pub fn bernoulli(p: Vec<f64>) -> Result<Self> {
        Self::new(vec![p], BaseSystem::trivial(0))
    }

    /// Two fibre symbols, `p_0 = alpha` when `omega_0 = 0` and `beta` otherwise,
    /// over a fair-coin base.
    pub fn alpha_beta(alpha: f64, beta: f64, window_radius: usize) -> Result<Self> {
        Self::new(
            vec![vec![alpha, 1.0 - alpha], vec![beta, 1.0 - beta]],
            BaseSystem::iid(vec![0.5, 0.5], window_radius)?,
        )
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }

    /// `1 - max mu_omega(C_1)` over base states that occur; positive means the
    /// single-symbol masses stay away from 1.
    pub fn single_symbol_margin(&self) -> f64 {
        let max = self
            .probs
            .iter()
            .zip(self.base.stationary())
            .filter(|(_, &w)| w > 0.0)
            .flat_map(|(p, _)| p.iter().copied())
            .fold(0.0, f64::max);
        1.0 - max
    }
}

impl SampleMeasureModel for RandomProductMeasure {
    type Fibre = ProductFibre;

    fn alphabet(&self) -> usize {
        self.probs[0].len()
    }

    fn base(&self) -> &BaseSystem {
        &self.base
    }

    fn realize(&self, path: &EnvironmentPath, positions: Range<isize>) -> Result<ProductFibre> {
        path.covers(positions.clone())?;
        ProductFibre::new(self, path.clone(), positions)
    }

    /// Forward recursion over the base chain; no enumeration needed because
    /// the mass factorizes site by site.
    fn exact_marginal(&self, w: &[u8], _cap: usize) -> Result<f64> {
        let a = self.alphabet();
        if let Some(&s) = w.iter().find(|&&s| s as usize >= a) {
            return Err(Error::SymbolOutOfRange { symbol: s as usize, alphabet: a });
        }
        let Some((&first, rest)) = w.split_first() else {
            return Ok(1.0);
        };
        let k = self.base.alphabet_size();
        let pt = self.base.transition();
        let mut v: Vec<f64> = (0..k).map(|b| self.base.stationary()[b] * self.probs[b][first as usize]).collect();
        for &s in rest {
            v = (0..k)
                .map(|c| (0..k).map(|b| v[b] * pt[b][c]).sum::<f64>() * self.probs[c][s as usize])
                .collect();
        }
        Ok(v.iter().sum())
    }
}

/// A product measure along one path.
#[derive(Debug, Clone)]
pub struct ProductFibre {
    path: EnvironmentPath,
    positions: Range<isize>,
    probs: Arc<Vec<Vec<f64>>>,
    log_probs: Arc<Vec<Vec<f64>>>,
    /// cumulative thresholds scaled by 2^64; a draw is the first `s` with `u < t_s`
    thresholds: Arc<Vec<Vec<u128>>>,
    /// first threshold per base symbol when the fibre alphabet is binary
    binary_cut: Option<Vec<u128>>,
}

impl ProductFibre {
    fn new(model: &RandomProductMeasure, path: EnvironmentPath, positions: Range<isize>) -> Result<Self> {
        let log_probs = model
            .probs
            .iter()
            .map(|p| p.iter().map(|&x| if x > 0.0 { x.ln() } else { f64::NEG_INFINITY }).collect())
            .collect();
        let thresholds: Vec<Vec<u128>> = model
            .probs
            .iter()
            .map(|p| {
                let last = p.iter().rposition(|&x| x > 0.0).unwrap_or(0);
                let mut acc = 0.0;
                p.iter()
                    .enumerate()
                    .map(|(s, &x)| {
                        acc += x;
                        if s >= last {
                            1u128 << 64
                        } else {
                            ((acc.min(1.0)) * 18_446_744_073_709_551_616.0) as u128
                        }
                    })
                    .collect()
            })
            .collect();
        let binary_cut = (model.probs[0].len() == 2)
            .then(|| thresholds.iter().map(|t: &Vec<u128>| t[0]).collect());
        Ok(ProductFibre {
            binary_cut,
            path,
            positions,
            probs: Arc::new(model.probs.clone()),
            log_probs: Arc::new(log_probs),
            thresholds: Arc::new(thresholds),
        })
    }

    pub fn path(&self) -> &EnvironmentPath {
        &self.path
    }

    #[inline]
    fn base_at(&self, pos: isize) -> Result<usize> {
        if pos < self.positions.start || pos >= self.positions.end {
            return Err(Error::OutOfWindow { index: pos, lo: self.positions.start, hi: self.positions.end });
        }
        Ok(self.path.get(pos)? as usize)
    }

    /// Base symbols selecting the site laws at positions `range`.
    pub fn site_indices(&self, range: Range<isize>) -> Result<&[u8]> {
        self.check_span(range.start, (range.end - range.start).max(0) as usize)?;
        self.path.slice(range)
    }

    /// Fills `out` with i.i.d.-per-site draws for the given site indices.
    #[inline]
    pub fn fill_sites(&self, sites: &[u8], rng: &mut TrialRng, out: &mut [u8]) {
        let t = &self.thresholds;
        if let Some(cut) = &self.binary_cut {
            for (o, &b) in out.iter_mut().zip(sites) {
                let u = rng.next_u64() as u128;
                *o = (u >= cut[b as usize]) as u8;
            }
        } else {
            for (o, &b) in out.iter_mut().zip(sites) {
                let u = rng.next_u64() as u128;
                let tb = &t[b as usize];
                *o = tb.iter().position(|&x| u < x).unwrap_or(tb.len() - 1) as u8;
            }
        }
    }

    /// The site law at fibre position `pos`.
    pub fn site(&self, pos: isize) -> Result<&[f64]> {
        Ok(&self.probs[self.base_at(pos)?])
    }
}

impl FibreMeasure for ProductFibre {
    fn alphabet(&self) -> usize {
        self.probs[0].len()
    }

    fn memory(&self) -> usize {
        0
    }

    fn positions(&self) -> Range<isize> {
        self.positions.clone()
    }

    fn log_cylinder_mass(&self, offset: isize, w: &[u8]) -> Result<f64> {
        self.check_span(offset, w.len())?;
        let a = self.alphabet();
        let mut total = 0.0;
        for (i, &s) in w.iter().enumerate() {
            if s as usize >= a {
                return Err(Error::SymbolOutOfRange { symbol: s as usize, alphabet: a });
            }
            total += self.log_probs[self.base_at(offset + i as isize)?][s as usize];
        }
        Ok(total)
    }

    fn conditional(&self, offset: isize, k: usize, _context: &[u8], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(self.site(offset + k as isize)?);
        Ok(())
    }

    fn fill(&self, offset: isize, k: usize, _context: &mut Context, rng: &mut TrialRng, out: &mut [u8]) -> Result<()> {
        let start = offset + k as isize;
        let sites = self.site_indices(start..start + out.len() as isize)?;
        self.fill_sites(sites, rng, out);
        Ok(())
    }

    #[inline]
    fn draw(&self, offset: isize, k: usize, _context: &[u8], rng: &mut TrialRng) -> Result<u8> {
        let t = &self.thresholds[self.base_at(offset + k as isize)?];
        let u = rng.next_u64() as u128;
        Ok(t.iter().position(|&x| u < x).unwrap_or(t.len() - 1) as u8)
    }
}
