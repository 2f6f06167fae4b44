//! The random Ruelle operator and Gibbs sample measures.
//!
//! Convention: `L_omega` takes functions on `X_omega` to functions on
//! `X_{theta omega}`,
//! `(L_omega f)(x) = sum_{a : a x admissible} e^{phi_omega(a x)} f(a x)`,
//! and eigendata satisfy `L_omega rho_omega = lambda_omega rho_{theta omega}`.
//! Potentials have finite range, so every object lives on finite word tables.

mod decay;
mod eigen;
mod gibbs;

use serde::{Deserialize, Serialize};

use crate::environment::{BaseSystem, EnvironmentPath, RandomMatrixFamily};
use crate::error::{Error, Result};

pub use decay::{big_images, decay_profile, BigImages, DecayPoint};
pub use eigen::{eigendata, normalize, EigenData, NormalizedPotential};
pub use gibbs::{duality_check, GibbsFibre, GibbsModel, DEFAULT_HORIZON, DEFAULT_TAIL, DEFAULT_TOL};

/// Values indexed by fibre words of a fixed length, `x_0` most significant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordTable {
    alphabet: usize,
    depth: usize,
    values: Vec<f64>,
}

impl WordTable {
    pub fn from_values(alphabet: usize, depth: usize, values: Vec<f64>) -> Result<Self> {
        let want = alphabet.checked_pow(depth as u32).ok_or_else(|| Error::Budget("word table too large".into()))?;
        if values.len() != want {
            return Err(Error::InvalidParameter(format!(
                "table of depth {depth} over {alphabet} symbols needs {want} values, got {}",
                values.len()
            )));
        }
        Ok(WordTable { alphabet, depth, values })
    }

    pub fn constant(alphabet: usize, depth: usize, value: f64) -> Self {
        WordTable { alphabet, depth, values: vec![value; alphabet.pow(depth as u32)] }
    }

    pub fn from_fn(alphabet: usize, depth: usize, mut f: impl FnMut(&[u8]) -> f64) -> Self {
        let values = crate::measures::all_words(alphabet, depth).map(|w| f(&w)).collect();
        WordTable { alphabet, depth, values }
    }

    pub fn alphabet(&self) -> usize {
        self.alphabet
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn index(&self, word: &[u8]) -> usize {
        word[..self.depth].iter().fold(0, |acc, &s| acc * self.alphabet + s as usize)
    }

    /// Value at the first `depth` symbols of `word`.
    pub fn get(&self, word: &[u8]) -> f64 {
        self.values[self.index(word)]
    }

    pub fn max_abs_diff(&self, other: &WordTable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// `phi_omega(x)`, a function of `omega_0` and `x_0 .. x_{d-1}`, on the random
/// subshift given by `family`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    tables: Vec<WordTable>,
    family: RandomMatrixFamily,
    base: BaseSystem,
}

impl PotentialModel {
    /// `tables[b]` is the potential when the base symbol is `b`; inadmissible
    /// words may hold any value, they are never read.
    pub fn new(tables: Vec<WordTable>, family: RandomMatrixFamily, base: BaseSystem) -> Result<Self> {
        let Some(first) = tables.first() else {
            return Err(Error::InvalidParameter("potential needs at least one table".into()));
        };
        if tables.len() != base.alphabet_size() || family.base_alphabet() != base.alphabet_size() {
            return Err(Error::InvalidParameter("potential tables, matrix family and base disagree on the base alphabet".into()));
        }
        let (a, d) = (first.alphabet, first.depth);
        if a != family.fibre_alphabet() {
            return Err(Error::InvalidParameter("potential and matrix family disagree on the fibre alphabet".into()));
        }
        if d == 0 || a == 0 {
            return Err(Error::InvalidParameter("potential depth and alphabet must be positive".into()));
        }
        for t in &tables {
            if t.alphabet != a || t.depth != d {
                return Err(Error::InvalidParameter("potential tables differ in shape".into()));
            }
            if t.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter("potential values must be finite".into()));
            }
        }
        Ok(PotentialModel { tables, family, base })
    }

    /// `phi = log p_{x_0}`, one law per base symbol, on the full shift.
    pub fn bernoulli(probs: &[Vec<f64>], base: BaseSystem) -> Result<Self> {
        let a = probs.first().map_or(0, Vec::len);
        let tables = probs
            .iter()
            .map(|p| WordTable::from_fn(a, 1, |w| p[w[0] as usize].ln()))
            .collect();
        Self::new(tables, RandomMatrixFamily::full(probs.len(), a), base)
    }

    /// `phi(a b) = log P[a][b]`, admissibility from the positive entries. The
    /// resulting sample measure is the stationary Markov chain `P`.
    pub fn markov(transition: &[Vec<f64>]) -> Result<Self> {
        let a = transition.len();
        for (row, r) in transition.iter().enumerate() {
            let sum: f64 = r.iter().sum();
            if r.len() != a || r.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return Err(Error::InvalidMatrix(format!("row {row} is not a probability vector of length {a}")));
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::NonStochastic { row, sum });
            }
        }
        let allowed: Vec<Vec<bool>> = transition.iter().map(|r| r.iter().map(|&p| p > 0.0).collect()).collect();
        let matrix = crate::word::TransitionMatrix::new(allowed)?;
        let table = WordTable::from_fn(a, 2, |w| {
            let p = transition[w[0] as usize][w[1] as usize];
            if p > 0.0 {
                p.ln()
            } else {
                0.0
            }
        });
        Self::new(vec![table], RandomMatrixFamily::new(vec![matrix])?, BaseSystem::trivial(0))
    }

    pub fn alphabet(&self) -> usize {
        self.tables[0].alphabet
    }

    pub fn depth(&self) -> usize {
        self.tables[0].depth
    }

    /// Depth of the lifted tables, at least 2 so that admissibility of the
    /// first pair can be folded into the potential.
    pub fn lifted_depth(&self) -> usize {
        self.depth().max(2)
    }

    pub fn base(&self) -> &BaseSystem {
        &self.base
    }

    pub fn family(&self) -> &RandomMatrixFamily {
        &self.family
    }

    pub fn table(&self, base_symbol: u8) -> &WordTable {
        &self.tables[base_symbol as usize]
    }

    /// `phi_omega` on words of length [`Self::lifted_depth`], with `-inf` where
    /// `(y_0, y_1)` is forbidden by `A(omega)`.
    pub fn lifted(&self, base_symbol: u8) -> WordTable {
        let t = self.table(base_symbol);
        let m = self.family.matrix(base_symbol);
        WordTable::from_fn(self.alphabet(), self.lifted_depth(), |y| {
            if m.allows(y[0], y[1]) {
                t.get(y)
            } else {
                f64::NEG_INFINITY
            }
        })
    }

    /// `V_n = sup { |phi(x) - phi(y)| : x_i = y_i, i < n }`; zero for `n >= d`.
    pub fn variation(&self, n: usize) -> f64 {
        let d = self.depth();
        if n >= d {
            return 0.0;
        }
        let a = self.alphabet();
        let block = a.pow((d - n) as u32);
        self.tables
            .iter()
            .flat_map(|t| t.values.chunks(block))
            .map(|c| {
                let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
                hi - lo
            })
            .fold(0.0, f64::max)
    }

    /// `(kappa, r)` with `V_n <= kappa r^n` for all `n`.
    pub fn holder_data(&self, r: f64) -> (f64, f64) {
        let kappa = (0..self.depth()).map(|n| self.variation(n) / r.powi(n as i32)).fold(0.0, f64::max);
        (kappa, r)
    }
}

/// `(L_omega f)(x)` for `f` tabulated on words of length `k >= d`; the result
/// is tabulated on words of length `k - 1`. Uses `omega = path` at index 0.
pub fn apply_operator(model: &PotentialModel, path: &EnvironmentPath, f: &WordTable) -> Result<WordTable> {
    let a = model.alphabet();
    let k = f.depth;
    if f.alphabet != a {
        return Err(Error::InvalidParameter("table alphabet differs from the potential".into()));
    }
    if k < model.depth() || k == 0 {
        return Err(Error::InvalidParameter(format!("table depth {k} below potential depth {}", model.depth())));
    }
    let b = path.get(0)?;
    let phi = model.table(b);
    let matrix = model.family.matrix(b);
    let out_len = a.pow((k - 1) as u32);
    let mut word = vec![0u8; k.max(model.depth())];
    let mut values = Vec::with_capacity(out_len);
    for x in 0..out_len {
        let mut terms = Vec::with_capacity(a);
        for s in 0..a {
            let y = s * out_len + x;
            let mut rest = y;
            for slot in word[..k].iter_mut().rev() {
                *slot = (rest % a) as u8;
                rest /= a;
            }
            if k >= 2 && !matrix.allows(word[0], word[1]) {
                continue;
            }
            let fv = f.values[y];
            if fv == 0.0 {
                continue;
            }
            if fv < 0.0 {
                // signed input: no log-space shortcut
                terms.push((phi.get(&word), fv));
            } else {
                terms.push((phi.get(&word) + fv.ln(), 1.0));
            }
        }
        values.push(signed_log_sum_exp(&terms));
    }
    Ok(WordTable { alphabet: a, depth: k - 1, values })
}

/// `sum_i sign_i e^{l_i}` evaluated with a max shift.
fn signed_log_sum_exp(terms: &[(f64, f64)]) -> f64 {
    let max = terms.iter().map(|t| t.0).fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return 0.0;
    }
    max.exp() * terms.iter().map(|&(l, s)| s * (l - max).exp()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full(a: usize, phi: f64) -> PotentialModel {
        PotentialModel::new(
            vec![WordTable::constant(a, 1, phi)],
            RandomMatrixFamily::full(1, a),
            BaseSystem::trivial(0),
        )
        .unwrap()
    }

    #[test]
    fn operator_examples() {
        let path = EnvironmentPath::constant(0, 0..1);
        let one2 = WordTable::constant(2, 2, 1.0);
        let l = apply_operator(&full(2, 0.0), &path, &one2).unwrap();
        assert_eq!(l.depth(), 1);
        assert!(l.values().iter().all(|&v| (v - 2.0).abs() < 1e-15));

        let l = apply_operator(&full(3, 0.0), &path, &WordTable::constant(3, 1, 1.0)).unwrap();
        assert!(l.values().iter().all(|&v| (v - 3.0).abs() < 1e-15));

        let bern = PotentialModel::bernoulli(&[vec![0.3, 0.7]], BaseSystem::trivial(0)).unwrap();
        let l = apply_operator(&bern, &path, &one2).unwrap();
        assert!(l.values().iter().all(|&v| (v - 1.0).abs() < 1e-15));

        assert!(apply_operator(&full(3, 0.0), &path, &one2).is_err());
    }

    #[test]
    fn operator_respects_admissibility() {
        let no11 = crate::word::TransitionMatrix::new(vec![vec![true, true], vec![true, false]]).unwrap();
        let model = PotentialModel::new(
            vec![WordTable::constant(2, 2, 0.0)],
            RandomMatrixFamily::new(vec![no11]).unwrap(),
            BaseSystem::trivial(0),
        )
        .unwrap();
        let path = EnvironmentPath::constant(0, 0..1);
        let l = apply_operator(&model, &path, &WordTable::constant(2, 2, 1.0)).unwrap();
        // x = 0 has preimages 0 and 1, x = 1 only 0
        assert_eq!(l.values(), &[2.0, 1.0]);
    }

    #[test]
    fn variation_vanishes_beyond_depth() {
        let t = WordTable::from_values(2, 2, vec![0.0, 0.5, -0.25, 0.0]).unwrap();
        let m = PotentialModel::new(vec![t], RandomMatrixFamily::full(1, 2), BaseSystem::trivial(0)).unwrap();
        assert_eq!(m.variation(2), 0.0);
        assert_eq!(m.variation(1), 0.5);
        assert_eq!(m.variation(0), 0.75);
        let (kappa, r) = m.holder_data(0.5);
        assert_eq!((kappa, r), (1.0, 0.5));
    }
}
