use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::eigen::{eigendata, normalize, EigenData, NormalizedPotential};
use super::{PotentialModel, WordTable};
use crate::environment::{BaseSystem, EnvironmentPath};
use crate::error::{Error, Result};
use crate::measures::{all_words, check_enumeration, FibreMeasure, SampleMeasureModel};
use crate::word::TargetPoint;

pub const DEFAULT_HORIZON: usize = 60;
pub const DEFAULT_TAIL: usize = 40;
pub const DEFAULT_TOL: f64 = 1e-8;

/// Positions served by a realization over a single-state base.
const STATIONARY: Range<isize> = (isize::MIN / 4)..(isize::MAX / 4);

/// Sample measures of a finite-range potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GibbsModel {
    pub potential: PotentialModel,
    /// Pullback horizon `K` of the eigendata.
    pub horizon: usize,
    /// Extra operator steps `K'` used for cylinder masses.
    pub tail: usize,
    pub tol: f64,
}

impl GibbsModel {
    pub fn new(potential: PotentialModel) -> Self {
        GibbsModel { potential, horizon: DEFAULT_HORIZON, tail: DEFAULT_TAIL, tol: DEFAULT_TOL }
    }

    pub fn with_knobs(mut self, horizon: usize, tail: usize, tol: f64) -> Self {
        self.horizon = horizon;
        self.tail = tail;
        self.tol = tol;
        self
    }

    pub fn is_deterministic(&self) -> bool {
        self.potential.base().is_trivial()
    }

    /// The single sample measure of a model over a one-state base.
    pub fn stationary(&self) -> Result<GibbsFibre> {
        if !self.is_deterministic() {
            return Err(Error::ExactModeUnavailable("the base has more than one state".into()));
        }
        let k = self.horizon as isize;
        let path = EnvironmentPath::constant(0, -k - 2..self.tail as isize + 4);
        let eig = eigendata(&self.potential, &path, 0..1, self.horizon, self.tol)?;
        let phi = normalize(&self.potential, &path, &eig, self.tol)?;
        let (q, spread) = backward(&phi, 0, 0, self.tail, true)?;
        Ok(GibbsFibre {
            alphabet: self.potential.alphabet(),
            memory: phi.memory(),
            positions: STATIONARY,
            stationary: true,
            phi,
            q_first: 0,
            q,
            eigen: eig,
            mass_spread: spread,
        })
    }
}

impl SampleMeasureModel for GibbsModel {
    type Fibre = GibbsFibre;

    fn alphabet(&self) -> usize {
        self.potential.alphabet()
    }

    fn base(&self) -> &BaseSystem {
        self.potential.base()
    }

    fn margin(&self) -> (usize, usize) {
        (self.horizon + 1, self.tail + 1)
    }

    fn realize(&self, path: &EnvironmentPath, positions: Range<isize>) -> Result<GibbsFibre> {
        if self.is_deterministic() {
            return self.stationary();
        }
        if positions.start >= positions.end {
            return Err(Error::InvalidParameter("empty position range".into()));
        }
        let (lo, hi) = (positions.start, positions.end);
        let span = lo..hi + self.tail as isize;
        let eig = eigendata(&self.potential, path, span, self.horizon, self.tol)?;
        let phi = normalize(&self.potential, path, &eig, self.tol)?;
        let (q, spread) = backward(&phi, lo, hi, self.tail, false)?;
        Ok(GibbsFibre {
            alphabet: self.potential.alphabet(),
            memory: phi.memory(),
            positions,
            stationary: false,
            phi,
            q_first: lo,
            q,
            eigen: eig,
            mass_spread: spread,
        })
    }

    fn exact_marginal(&self, w: &[u8], _cap: usize) -> Result<f64> {
        if !self.is_deterministic() {
            return Err(Error::ExactModeUnavailable(
                "Gibbs sample measures depend on the whole environment; use Monte Carlo".into(),
            ));
        }
        crate::measures::cylinder_mass(&self.stationary()?, 0, w)
    }
}

/// Memory-`m` marginals `q_i(u) = mu_i([u])` from the dual recursion
/// `q_i(u) = sum_b e^{varphi_i(u b)} q_{i+1}(u_1 .. u_{m-1} b)`, started
/// uniform at `hi + tail` and kept for `lo ..= hi`. Also returns the largest
/// relative spread obtained when starting from point masses instead.
fn backward(
    phi: &NormalizedPotential,
    lo: isize,
    hi: isize,
    tail: usize,
    stationary: bool,
) -> Result<(Vec<WordTable>, f64)> {
    let a = phi.tables[0].alphabet();
    let m = phi.memory();
    let am = a.pow(m as u32);
    let table = |i: isize| -> Result<&WordTable> {
        if stationary {
            Ok(&phi.tables[0])
        } else {
            phi.at(i)
        }
    };
    let top = hi + tail as isize;
    let mut starts: Vec<Vec<f64>> = vec![vec![1.0 / am as f64; am]];
    for x in 0..am {
        let mut d = vec![0.0; am];
        d[x] = 1.0;
        starts.push(d);
    }
    let mut kept = Vec::new();
    let mut spread: f64 = 0.0;
    let mut i = top;
    while i > lo {
        i -= 1;
        let t = table(i)?;
        for q in starts.iter_mut() {
            let next: Vec<f64> = (0..am)
                .map(|u| {
                    (0..a)
                        .map(|b| {
                            let p = t.values()[u * a + b];
                            if p == f64::NEG_INFINITY {
                                0.0
                            } else {
                                p.exp() * q[(u * a + b) % am]
                            }
                        })
                        .sum()
                })
                .collect();
            let s: f64 = next.iter().sum();
            *q = next.into_iter().map(|v| v / s).collect();
        }
        if i <= hi {
            let main = &starts[0];
            for u in 0..am {
                let (mn, mx) = starts[1..]
                    .iter()
                    .map(|q| q[u])
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
                if main[u] > 0.0 {
                    spread = spread.max((mx - mn) / main[u]);
                }
            }
            kept.push(WordTable { alphabet: a, depth: m, values: main.clone() });
        }
    }
    if stationary {
        let only = kept.pop().ok_or_else(|| Error::InvalidParameter("empty realization".into()))?;
        return Ok((vec![only], spread));
    }
    kept.reverse();
    Ok((kept, spread))
}

/// A Gibbs sample measure family along one path, represented exactly as an
/// order-`m` Markov law.
#[derive(Debug, Clone)]
pub struct GibbsFibre {
    alphabet: usize,
    memory: usize,
    positions: Range<isize>,
    stationary: bool,
    phi: NormalizedPotential,
    q_first: isize,
    q: Vec<WordTable>,
    eigen: EigenData,
    mass_spread: f64,
}

impl GibbsFibre {
    pub fn eigen(&self) -> &EigenData {
        &self.eigen
    }

    pub fn normalization_residual(&self) -> f64 {
        self.phi.normalization_residual
    }

    pub fn eigen_residual(&self) -> f64 {
        self.eigen.residual
    }

    /// Relative error bar of the cylinder masses.
    pub fn mass_spread(&self) -> f64 {
        self.mass_spread
    }

    pub fn is_stationary(&self) -> bool {
        self.stationary
    }

    pub fn normalized(&self) -> &NormalizedPotential {
        &self.phi
    }

    /// `varphi_{theta^i omega}` on words of length `memory + 1`.
    pub fn phi_at(&self, pos: isize) -> Result<&WordTable> {
        if self.stationary {
            Ok(&self.phi.tables[0])
        } else {
            self.phi.at(pos)
        }
    }

    fn q_at(&self, pos: isize) -> Result<&WordTable> {
        if self.stationary {
            return Ok(&self.q[0]);
        }
        let j = pos - self.q_first;
        if j < 0 || j as usize >= self.q.len() {
            return Err(Error::OutOfWindow { index: pos, lo: self.q_first, hi: self.q_first + self.q.len() as isize });
        }
        Ok(&self.q[j as usize])
    }

    /// `max_x |sum_a e^{varphi(a x)} - 1|` over the given positions.
    pub fn normalization_check(&self, positions: Range<isize>) -> Result<f64> {
        let a = self.alphabet;
        let am = a.pow(self.memory as u32);
        let mut worst: f64 = 0.0;
        for i in positions {
            let t = self.phi_at(i)?;
            for x in 0..am {
                let s: f64 = (0..a).map(|s| t.values()[s * am + x].exp()).sum();
                worst = worst.max((s - 1.0).abs());
            }
        }
        Ok(worst)
    }

    /// `S_n varphi(z) = sum_{k<n} varphi_{theta^{s+k} omega}(sigma^k z)`.
    pub fn birkhoff_sum(&self, offset: isize, z: &TargetPoint, n: usize) -> Result<f64> {
        if n == 0 {
            return Ok(0.0);
        }
        let block = z.block(n + self.memory)?;
        let mut total = 0.0;
        for k in 0..n {
            total += self.phi_at(offset + k as isize)?.get(&block.as_slice()[k..]);
        }
        Ok(total)
    }

    /// Bounds `[min_x, max_x]` of `(L^{K'} L^{|w|} 1_{[w]})(x)` over points
    /// `x`; the cylinder mass lies in between.
    pub fn operator_mass_bracket(&self, offset: isize, w: &[u8], tail: usize) -> Result<(f64, f64)> {
        let a = self.alphabet;
        let m = self.memory;
        let am = a.pow(m as u32);
        self.check_span(offset, w.len())?;
        let mut h = vec![0.0; am];
        let ext = m.saturating_sub(w.len());
        for e in all_words(a, ext) {
            let mut word = w.to_vec();
            word.extend_from_slice(&e);
            let n = word.len();
            for (x, slot) in h.iter_mut().enumerate() {
                let mut full = word.clone();
                let mut rest = x;
                let mut tail_syms = vec![0u8; m];
                for s in tail_syms.iter_mut().rev() {
                    *s = (rest % a) as u8;
                    rest /= a;
                }
                full.extend_from_slice(&tail_syms);
                let mut l = 0.0;
                for k in 0..n {
                    l += self.phi_at(offset + k as isize)?.get(&full[k..]);
                }
                *slot += l.exp();
            }
        }
        let mut pos = offset + (w.len() + ext) as isize;
        for _ in 0..tail {
            let t = self.phi_at(pos)?;
            h = (0..am)
                .map(|x| {
                    (0..a)
                        .map(|s| {
                            let p = t.values()[s * am + x];
                            if p == f64::NEG_INFINITY {
                                0.0
                            } else {
                                p.exp() * h[(s * am + x) / a]
                            }
                        })
                        .sum()
                })
                .collect();
            pos += 1;
        }
        Ok(h.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, u), &v| (l.min(v), u.max(v))))
    }
}

impl FibreMeasure for GibbsFibre {
    fn alphabet(&self) -> usize {
        self.alphabet
    }

    fn memory(&self) -> usize {
        self.memory
    }

    fn positions(&self) -> Range<isize> {
        self.positions.clone()
    }

    fn log_cylinder_mass(&self, offset: isize, w: &[u8]) -> Result<f64> {
        self.check_span(offset, w.len())?;
        if let Some(&s) = w.iter().find(|&&s| s as usize >= self.alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: s as usize, alphabet: self.alphabet });
        }
        let n = w.len();
        let m = self.memory;
        if n == 0 {
            return Ok(0.0);
        }
        if n < m {
            let q = self.q_at(offset)?;
            let mut word = w.to_vec();
            let total: f64 = all_words(self.alphabet, m - n)
                .map(|e| {
                    word.truncate(n);
                    word.extend_from_slice(&e);
                    q.get(&word)
                })
                .sum();
            return Ok(total.ln());
        }
        let mut l = 0.0;
        for k in 0..n - m {
            l += self.phi_at(offset + k as isize)?.get(&w[k..]);
            if l == f64::NEG_INFINITY {
                return Ok(l);
            }
        }
        Ok(l + self.q_at(offset + (n - m) as isize)?.get(&w[n - m..]).ln())
    }

    fn conditional(&self, offset: isize, k: usize, context: &[u8], out: &mut [f64]) -> Result<()> {
        let a = self.alphabet;
        let m = self.memory;
        if k < m {
            // ratios of prefix marginals at the starting position
            let base = self.log_cylinder_mass(offset, context)?;
            if base == f64::NEG_INFINITY {
                return Err(Error::ZeroMass);
            }
            let mut word = context.to_vec();
            for (b, slot) in out.iter_mut().enumerate() {
                word.truncate(context.len());
                word.push(b as u8);
                *slot = (self.log_cylinder_mass(offset, &word)? - base).exp();
            }
        } else {
            let at = offset + (k - m) as isize;
            let phi = self.phi_at(at)?;
            let qt = self.q_at(at)?;
            let c = qt.index(context);
            let q0 = qt.values()[c];
            if q0 <= 0.0 {
                return Err(Error::ZeroMass);
            }
            let q1 = self.q_at(at + 1)?;
            let am = a.pow(m as u32);
            for (b, slot) in out.iter_mut().enumerate() {
                let y = c * a + b;
                let p = phi.values()[y];
                *slot = if p == f64::NEG_INFINITY { 0.0 } else { p.exp() * q1.values()[y % am] / q0 };
            }
        }
        let s: f64 = out.iter().sum();
        out.iter_mut().for_each(|v| *v /= s);
        Ok(())
    }
}

/// `|int (L^n psi) gamma dmu_{theta^n omega} - int psi . gamma o sigma^n dmu_omega|`
/// by cylinder enumeration, with `L^n = L_{theta^{n-1} omega} ... L_omega`.
pub fn duality_check(fm: &GibbsFibre, offset: isize, psi: &WordTable, gamma: &WordTable, n: usize) -> Result<f64> {
    let a = fm.alphabet;
    if psi.alphabet() != a || gamma.alphabet() != a {
        return Err(Error::InvalidParameter("table alphabet differs from the measure".into()));
    }
    let m = fm.memory;
    let right_len = psi.depth().max(n + gamma.depth());
    let x_len = gamma.depth().max(m).max(psi.depth().saturating_sub(n));
    check_enumeration(a, right_len.max(n + x_len))?;

    let mut right = 0.0;
    for y in all_words(a, right_len) {
        let mu = crate::measures::cylinder_mass(fm, offset, &y)?;
        right += mu * psi.get(&y) * gamma.get(&y[n..]);
    }

    let mut left = 0.0;
    for x in all_words(a, x_len) {
        let mut lpsi = 0.0;
        for v in all_words(a, n) {
            let mut y = v.clone();
            y.extend_from_slice(&x);
            let mut l = 0.0;
            for k in 0..n {
                l += fm.phi_at(offset + k as isize)?.get(&y[k..]);
            }
            if l > f64::NEG_INFINITY {
                lpsi += l.exp() * psi.get(&y);
            }
        }
        let mu = crate::measures::cylinder_mass(fm, offset + n as isize, &x)?;
        left += lpsi * gamma.get(&x) * mu;
    }
    Ok((left - right).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{sample_environment, RandomMatrixFamily};
    use crate::measures::{cylinder_mass, next_symbol_distribution, pushforward_check};
    use crate::transfer::{decay_profile, eigendata, normalize};
    use crate::word::{TransitionMatrix, Word};

    fn constant_potential(a: usize, value: f64) -> PotentialModel {
        PotentialModel::new(vec![WordTable::constant(a, 1, value)], RandomMatrixFamily::full(1, a), BaseSystem::trivial(0))
            .unwrap()
    }

    /// A depth-3 potential on the full 2-shift.
    fn depth3() -> PotentialModel {
        let t = WordTable::from_values(2, 3, vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.25, 0.0, 0.7]).unwrap();
        PotentialModel::new(vec![t], RandomMatrixFamily::full(1, 2), BaseSystem::trivial(0)).unwrap()
    }

    fn random_depth2(window: usize) -> PotentialModel {
        let t0 = WordTable::from_values(2, 2, vec![0.2, -0.3, 0.6, 0.0]).unwrap();
        let t1 = WordTable::from_values(2, 2, vec![-0.5, 0.4, 0.1, 0.3]).unwrap();
        let base = BaseSystem::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]], None, window).unwrap();
        PotentialModel::new(vec![t0, t1], RandomMatrixFamily::full(2, 2), base).unwrap()
    }

    /// Equilibrium state of a deterministic potential through the Perron
    /// vectors of its transfer matrix on memory words.
    fn parry_mass(model: &PotentialModel, w: &[u8]) -> f64 {
        let phi = model.lifted(0);
        let a = model.alphabet();
        let m = model.lifted_depth() - 1;
        let am = a.pow(m as u32);
        let mat = |u: usize, v: usize| -> f64 {
            if v / a != u % (am / a).max(1) && m > 1 {
                return 0.0;
            }
            let y = u * a + v % a;
            let p = phi.values()[y];
            if p == f64::NEG_INFINITY { 0.0 } else { p.exp() }
        };
        let mut r = vec![1.0; am];
        let mut l = vec![1.0; am];
        let mut lambda = 1.0;
        for _ in 0..5000 {
            let nr: Vec<f64> = (0..am).map(|u| (0..am).map(|v| mat(u, v) * r[v]).sum()).collect();
            let nl: Vec<f64> = (0..am).map(|v| (0..am).map(|u| l[u] * mat(u, v)).sum()).collect();
            lambda = nr.iter().cloned().fold(0.0, f64::max);
            let ml = nl.iter().cloned().fold(0.0, f64::max);
            r = nr.iter().map(|x| x / lambda).collect();
            l = nl.iter().map(|x| x / ml).collect();
        }
        let z: f64 = (0..am).map(|u| l[u] * r[u]).sum();
        let idx = |s: &[u8]| s.iter().fold(0, |acc, &x| acc * a + x as usize);
        let mut p = l[idx(&w[..m])] * r[idx(&w[..m])] / z;
        for k in 0..w.len() - m {
            let u = idx(&w[k..k + m]);
            let v = idx(&w[k + 1..k + m + 1]);
            p *= mat(u, v) * r[v] / (lambda * r[u]);
        }
        p
    }

    #[test]
    fn eigendata_examples() {
        for a in [2, 3] {
            let model = constant_potential(a, 0.0);
            let path = EnvironmentPath::constant(0, -70..10);
            let e = eigendata(&model, &path, 0..5, 60, 1e-8).unwrap();
            assert!(e.lambda.iter().all(|&l| (l - a as f64).abs() < 1e-12));
            assert!(e.rho.iter().all(|t| t.values().iter().all(|&v| (v - 1.0).abs() < 1e-12)));
        }
        let bern = PotentialModel::bernoulli(&[vec![0.3, 0.7]], BaseSystem::trivial(0)).unwrap();
        let path = EnvironmentPath::constant(0, -70..10);
        let e = eigendata(&bern, &path, 0..5, 60, 1e-8).unwrap();
        assert!(e.lambda.iter().all(|&l| (l - 1.0).abs() < 1e-14));

        let base = BaseSystem::iid(vec![0.5, 0.5], 64).unwrap();
        let ab = PotentialModel::bernoulli(&[vec![0.3, 0.7], vec![0.6, 0.4]], base.clone()).unwrap();
        let path = sample_environment(&base, 50, 11).unwrap();
        let e = eigendata(&ab, &path, 0..50, 60, 1e-8).unwrap();
        assert!(e.lambda.iter().all(|&l| (l - 1.0).abs() < 1e-14));
        assert!(e.rho.iter().all(|t| t.values().iter().all(|&v| (v - 1.0).abs() < 1e-14)));
        assert!(e.residual < 1e-14);
    }

    #[test]
    fn normalization_examples() {
        let model = constant_potential(2, 0.0);
        let path = EnvironmentPath::constant(0, -70..10);
        let e = eigendata(&model, &path, 0..3, 60, 1e-8).unwrap();
        let n = normalize(&model, &path, &e, 1e-8).unwrap();
        for t in &n.tables {
            assert!(t.values().iter().all(|&v| (v + 2f64.ln()).abs() < 1e-14));
        }

        let bern = PotentialModel::bernoulli(&[vec![0.3, 0.7]], BaseSystem::trivial(0)).unwrap();
        let e = eigendata(&bern, &path, 0..3, 60, 1e-8).unwrap();
        let n = normalize(&bern, &path, &e, 1e-8).unwrap();
        assert!((n.tables[0].get(&[0, 1]) - 0.3f64.ln()).abs() < 1e-14);
        assert!((n.tables[0].get(&[1, 0]) - 0.7f64.ln()).abs() < 1e-14);

        let model = random_depth2(64);
        let path = sample_environment(model.base(), 100, 5).unwrap();
        let e = eigendata(&model, &path, 0..100, 40, 1e-8).unwrap();
        let n = normalize(&model, &path, &e, 1e-8).unwrap();
        for t in &n.tables {
            for x in 0..2 {
                let s: f64 = (0..2).map(|a| t.values()[a * 2 + x].exp()).sum();
                assert!((s - 1.0).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn short_horizon_reports_nonconvergence() {
        let model = random_depth2(64);
        let path = sample_environment(model.base(), 10, 5).unwrap();
        match eigendata(&model, &path, 0..10, 1, 1e-14) {
            Err(Error::NonConvergence { residual, .. }) => assert!(residual > 1e-14),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn birkhoff_examples() {
        let g = GibbsModel::new(constant_potential(2, 0.0)).stationary().unwrap();
        let z = TargetPoint::periodic(Word::from_raw(vec![0, 1])).unwrap();
        assert!((g.birkhoff_sum(0, &z, 5).unwrap() + 5.0 * 2f64.ln()).abs() < 1e-13);
        assert_eq!(g.birkhoff_sum(0, &z, 0).unwrap(), 0.0);
        let bern = PotentialModel::bernoulli(&[vec![0.3, 0.7]], BaseSystem::trivial(0)).unwrap();
        let g = GibbsModel::new(bern).stationary().unwrap();
        let zero = TargetPoint::periodic(Word::from_raw(vec![0])).unwrap();
        assert!((g.birkhoff_sum(0, &zero, 2).unwrap() - 2.0 * 0.3f64.ln()).abs() < 1e-13);
        let short = TargetPoint::finite(Word::from_raw(vec![0, 1]));
        assert!(g.birkhoff_sum(0, &short, 2).is_err());
    }

    #[test]
    fn constant_potential_is_fair_coin() {
        let g = GibbsModel::new(constant_potential(2, 0.0)).stationary().unwrap();
        let p = next_symbol_distribution(&g, 0, &[1, 0, 1]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-14 && (p[1] - 0.5).abs() < 1e-14);
        assert!((cylinder_mass(&g, 0, &[0, 1, 1, 0]).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn markov_potential_gives_the_chain() {
        let p = vec![vec![0.9, 0.1], vec![0.4, 0.6]];
        let g = GibbsModel::new(PotentialModel::markov(&p).unwrap()).stationary().unwrap();
        let pi = [0.8, 0.2];
        let w = [0u8, 0, 1, 1, 0, 1];
        let mut want = pi[0];
        for k in 0..w.len() - 1 {
            want *= p[w[k] as usize][w[k + 1] as usize];
        }
        // the tail of K' steps contracts like 0.5^K'
        assert!((cylinder_mass(&g, 0, &w).unwrap() - want).abs() < 1e-10 * want);
        let one = cylinder_mass(&g, 3, &[1]).unwrap();
        assert!((one - 0.2).abs() <= 0.2 * g.mass_spread().max(1e-14), "{one}");
    }

    #[test]
    fn forbidden_words_have_zero_mass() {
        let no11 = TransitionMatrix::new(vec![vec![true, true], vec![true, false]]).unwrap();
        let model = PotentialModel::new(
            vec![WordTable::constant(2, 2, 0.0)],
            RandomMatrixFamily::new(vec![no11]).unwrap(),
            BaseSystem::trivial(0),
        )
        .unwrap();
        let g = GibbsModel::new(model).stationary().unwrap();
        assert_eq!(cylinder_mass(&g, 0, &[0, 1, 1, 0]).unwrap(), 0.0);
        // golden-mean shift: mu[1] = 1 / (1 + golden^2)
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((cylinder_mass(&g, 0, &[1]).unwrap() - 1.0 / (1.0 + golden * golden)).abs() < 1e-12);
        assert_eq!(next_symbol_distribution(&g, 0, &[0, 1]).unwrap(), vec![1.0, 0.0]);
        assert!(next_symbol_distribution(&g, 0, &[1, 1]).is_err());
    }

    #[test]
    fn masses_match_transfer_matrix_oracle() {
        let model = depth3();
        let g = GibbsModel::new(model.clone()).stationary().unwrap();
        for w in all_words(2, 6) {
            let got = cylinder_mass(&g, 0, &w).unwrap();
            let want = parry_mass(&model, &w);
            assert!((got - want).abs() < 1e-8, "{w:?}: {got} vs {want}");
            let (lo, hi) = g.operator_mass_bracket(0, &w, DEFAULT_TAIL).unwrap();
            assert!(lo <= got * (1.0 + 1e-12) && got <= hi * (1.0 + 1e-12));
            assert!(hi - lo < 1e-8);
        }
        assert!(g.mass_spread() < 1e-8);
    }

    #[test]
    fn random_gibbs_additivity_and_equivariance() {
        let model = GibbsModel::new(random_depth2(64));
        let path = sample_environment(model.base(), 40, 3).unwrap();
        let fm = model.realize(&path, 0..40).unwrap();
        assert!(fm.normalization_check(0..40).unwrap() <= 1e-10);
        assert!(fm.eigen_residual() <= 1e-8);
        for n in 0..=6 {
            for w in all_words(2, n) {
                let whole = cylinder_mass(&fm, 2, &w).unwrap();
                let split: f64 = (0..2u8)
                    .map(|a| {
                        let mut v = w.clone();
                        v.push(a);
                        cylinder_mass(&fm, 2, &v).unwrap()
                    })
                    .sum();
                assert!((whole - split).abs() < 1e-12);
            }
        }
        assert!(pushforward_check(&fm, 0, &[0, 1, 1, 0], 2).unwrap() < 1e-8);
        assert_eq!(pushforward_check(&fm, 0, &[0, 1], 0).unwrap(), 0.0);
    }

    #[test]
    fn duality_examples() {
        let bern = PotentialModel::bernoulli(&[vec![0.3, 0.7]], BaseSystem::trivial(0)).unwrap();
        let g = GibbsModel::new(bern).stationary().unwrap();
        let one = WordTable::constant(2, 1, 1.0);
        assert!(duality_check(&g, 0, &one, &one, 3).unwrap() < 1e-14);
        let ind0 = WordTable::from_values(2, 1, vec![1.0, 0.0]).unwrap();
        let ind1 = WordTable::from_values(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(duality_check(&g, 0, &ind0, &ind1, 2).unwrap() <= 1e-10);
        assert!(duality_check(&g, 0, &ind0, &ind1, 0).unwrap() <= 1e-15);

        let model = GibbsModel::new(random_depth2(64));
        let path = sample_environment(model.base(), 20, 8).unwrap();
        let fm = model.realize(&path, 0..20).unwrap();
        let psi = WordTable::from_values(2, 2, vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let gamma = WordTable::from_values(2, 2, vec![1.0, 0.0, -0.5, 3.0]).unwrap();
        for n in 0..=4 {
            assert!(duality_check(&fm, 1, &psi, &gamma, n).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn decay_examples() {
        let markov = GibbsModel::new(PotentialModel::markov(&[vec![0.9, 0.1], vec![0.4, 0.6]]).unwrap());
        let g = markov.stationary().unwrap();
        let d = decay_profile(&g, &[0], 2, 2, &[0]).unwrap();
        assert!(d[0].psi > 0.0);

        let g = GibbsModel::new(depth3()).stationary().unwrap();
        let d = decay_profile(&g, &[0], 2, 2, &[0, 2, 4, 6]).unwrap();
        for pair in d.windows(2) {
            assert!(pair[1].psi <= pair[0].psi + 1e-12, "{d:?}");
        }
    }
}
