use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{PotentialModel, WordTable};
use crate::environment::EnvironmentPath;
use crate::error::{Error, Result};

/// Largest tolerated `|L_omega 1 - 1|` after normalization.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// `lambda_{theta^i omega}` and `rho_{theta^i omega}` along a stretch of the fibre.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenData {
    /// Position of `lambda[0]` and `rho[0]`.
    pub first: isize,
    pub lambda: Vec<f64>,
    /// One more entry than `lambda`: `rho[j + 1]` pairs with `lambda[j]`.
    pub rho: Vec<WordTable>,
    pub horizon: usize,
    /// `max_i |L_i rho'_i - lambda_i rho_{i+1}|` where `rho'` comes from a pass
    /// started one step later.
    pub residual: f64,
}

impl EigenData {
    pub fn positions(&self) -> Range<isize> {
        self.first..self.first + self.lambda.len() as isize
    }

    pub fn rho_min(&self) -> f64 {
        self.rho.iter().flat_map(|t| t.values().iter().copied()).fold(f64::INFINITY, f64::min)
    }
}

pub(crate) fn lifted_tables(model: &PotentialModel) -> Vec<WordTable> {
    (0..model.base().alphabet_size()).map(|b| model.lifted(b as u8)).collect()
}

/// `L_i rho` on memory-`m` tables, with the lifted potential `phi` of depth `m + 1`.
pub(crate) fn step(phi: &WordTable, rho: &WordTable) -> WordTable {
    let a = phi.alphabet();
    let m = rho.depth();
    let am = a.pow(m as u32);
    let am1 = am / a;
    let values = (0..am)
        .map(|x| {
            (0..a)
                .map(|s| {
                    let p = phi.values()[s * am + x];
                    if p == f64::NEG_INFINITY {
                        0.0
                    } else {
                        p.exp() * rho.values()[s * am1 + x / a]
                    }
                })
                .sum()
        })
        .collect();
    WordTable { alphabet: a, depth: m, values }
}

struct Pass {
    lambda: Vec<f64>,
    rho: Vec<WordTable>,
}

fn pullback(
    tables: &[WordTable],
    path: &EnvironmentPath,
    start: isize,
    keep: Range<isize>,
    memory: usize,
) -> Result<Pass> {
    let a = tables[0].alphabet();
    let mut rho = WordTable::constant(a, memory, 1.0);
    let mut out = Pass { lambda: Vec::new(), rho: Vec::new() };
    for i in start..keep.end {
        if i >= keep.start {
            out.rho.push(rho.clone());
        }
        let phi = &tables[path.get(i)? as usize];
        let mut next = step(phi, &rho);
        let lambda = next.values.iter().copied().fold(0.0, f64::max);
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::AssumptionViolation(format!("operator annihilates the eigenfunction at position {i}")));
        }
        next.values.iter_mut().for_each(|v| *v /= lambda);
        if i >= keep.start {
            out.lambda.push(lambda);
        }
        rho = next;
    }
    out.rho.push(rho);
    Ok(out)
}

/// Pullback iteration from `theta^{-K}` of each position, sup-normalized.
///
/// Returns `lambda_i` for `i` in `positions` and `rho_i` for
/// `positions.start ..= positions.end`.
pub fn eigendata(
    model: &PotentialModel,
    path: &EnvironmentPath,
    positions: Range<isize>,
    horizon: usize,
    tol: f64,
) -> Result<EigenData> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be at least 1".into()));
    }
    if positions.start >= positions.end {
        return Err(Error::InvalidParameter("empty position range".into()));
    }
    let k = horizon as isize;
    path.covers(positions.start - k..positions.end)?;
    let tables = lifted_tables(model);
    let memory = model.lifted_depth() - 1;
    let a_pass = pullback(&tables, path, positions.start - k, positions.clone(), memory)?;
    let b_pass = pullback(&tables, path, positions.start - k + 1, positions.clone(), memory)?;
    let mut residual: f64 = 0.0;
    for (j, i) in positions.clone().enumerate() {
        let phi = &tables[path.get(i)? as usize];
        let lb = step(phi, &b_pass.rho[j]);
        let target = &a_pass.rho[j + 1];
        let d = lb
            .values
            .iter()
            .zip(&target.values)
            .map(|(x, y)| (x - a_pass.lambda[j] * y).abs())
            .fold(0.0, f64::max);
        residual = residual.max(d);
    }
    if residual > tol {
        return Err(Error::NonConvergence { residual, tol });
    }
    Ok(EigenData { first: positions.start, lambda: a_pass.lambda, rho: a_pass.rho, horizon, residual })
}

/// `varphi_i = phi_i + log rho_i - log rho_{i+1} o sigma - log lambda_i`,
/// tabulated on words of the lifted depth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPotential {
    pub first: isize,
    pub tables: Vec<WordTable>,
    /// `max_i max_x |sum_a e^{varphi_i(a x)} - 1|`.
    pub normalization_residual: f64,
}

impl NormalizedPotential {
    pub fn memory(&self) -> usize {
        self.tables[0].depth() - 1
    }

    pub fn positions(&self) -> Range<isize> {
        self.first..self.first + self.tables.len() as isize
    }

    pub fn at(&self, pos: isize) -> Result<&WordTable> {
        let r = self.positions();
        if pos < r.start || pos >= r.end {
            return Err(Error::OutOfWindow { index: pos, lo: r.start, hi: r.end });
        }
        Ok(&self.tables[(pos - self.first) as usize])
    }
}

pub fn normalize(
    model: &PotentialModel,
    path: &EnvironmentPath,
    eig: &EigenData,
    tol: f64,
) -> Result<NormalizedPotential> {
    if eig.residual > tol {
        return Err(Error::NonConvergence { residual: eig.residual, tol });
    }
    let tables = lifted_tables(model);
    let a = model.alphabet();
    let m = model.lifted_depth() - 1;
    let am = a.pow(m as u32);
    let mut out = Vec::with_capacity(eig.lambda.len());
    let mut worst: f64 = 0.0;
    for (j, i) in eig.positions().enumerate() {
        let phi = &tables[path.get(i)? as usize];
        let (r0, r1) = (&eig.rho[j], &eig.rho[j + 1]);
        let log_lambda = eig.lambda[j].ln();
        let values: Vec<f64> = (0..am * a)
            .map(|y| {
                let p = phi.values()[y];
                if p == f64::NEG_INFINITY {
                    return p;
                }
                p + r0.values()[y / a].ln() - r1.values()[y % am].ln() - log_lambda
            })
            .collect();
        for x in 0..am {
            let s: f64 = (0..a).map(|s| values[s * am + x].exp()).sum();
            worst = worst.max((s - 1.0).abs());
        }
        out.push(WordTable { alphabet: a, depth: m + 1, values });
    }
    if worst > NORMALIZATION_TOL {
        return Err(Error::NonConvergence { residual: worst, tol: NORMALIZATION_TOL });
    }
    Ok(NormalizedPotential { first: eig.first, tables: out, normalization_residual: worst })
}
