//! Exact laws of pattern occurrences under a [`FibreMeasure`].
//!
//! A pattern automaton is run jointly with the measure's Markov context, which
//! turns events such as `[u] ∩ {tau > j}` into a finite forward recursion.

use super::{cylinder_mass, FibreMeasure};
use crate::error::{Error, Result};

/// Knuth–Morris–Pratt automaton for one pattern; state `q` is the length of
/// the longest suffix read so far that is a prefix of the pattern.
#[derive(Debug, Clone)]
pub struct KmpAutomaton {
    n: usize,
    alphabet: usize,
    delta: Vec<u32>,
}

impl KmpAutomaton {
    pub fn new(pattern: &[u8], alphabet: usize) -> Result<Self> {
        let n = pattern.len();
        if n == 0 {
            return Err(Error::EmptyWord);
        }
        if let Some(&s) = pattern.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: s as usize, alphabet });
        }
        let mut border = vec![0usize; n];
        for i in 1..n {
            let mut k = border[i - 1];
            while k > 0 && pattern[i] != pattern[k] {
                k = border[k - 1];
            }
            if pattern[i] == pattern[k] {
                k += 1;
            }
            border[i] = k;
        }
        let mut delta = vec![0u32; (n + 1) * alphabet];
        for q in 0..=n {
            for b in 0..alphabet {
                delta[q * alphabet + b] = if q < n && pattern[q] as usize == b {
                    (q + 1) as u32
                } else if q == 0 {
                    0
                } else {
                    delta[border[q - 1] * alphabet + b]
                };
            }
        }
        Ok(KmpAutomaton { n, alphabet, delta })
    }

    pub fn pattern_len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn step(&self, q: usize, b: u8) -> usize {
        self.delta[q * self.alphabet + b as usize] as usize
    }
}

/// `f[j] = mu_{theta^s omega}([u] ∩ {no occurrence of the pattern starting in
/// lo .. lo + j - 1})` for `j = 0 ..= horizon`.
///
/// With `lo = 1` and `u` empty this is the survival function `j -> mu(tau > j)`.
pub fn avoid_curve<F: FibreMeasure + ?Sized>(
    fm: &F,
    offset: isize,
    constraint: &[u8],
    automaton: &KmpAutomaton,
    lo: usize,
    horizon: usize,
) -> Result<Vec<f64>> {
    Ok(occurrence_curves(fm, offset, constraint, automaton, lo, horizon)?.avoid)
}

/// Both halves of `[u]` split by the occurrence event.
#[derive(Debug, Clone, PartialEq)]
pub struct OccurrenceCurves {
    /// `[u] ∩ {no occurrence starting in lo .. lo + j - 1}`.
    pub avoid: Vec<f64>,
    /// `[u] ∩ {some occurrence starting in lo .. lo + j - 1}`, accumulated
    /// from the removed mass rather than as a difference.
    pub hit: Vec<f64>,
}

/// [`avoid_curve`] together with its complement in `[u]`.
pub fn occurrence_curves<F: FibreMeasure + ?Sized>(
    fm: &F,
    offset: isize,
    constraint: &[u8],
    automaton: &KmpAutomaton,
    lo: usize,
    horizon: usize,
) -> Result<OccurrenceCurves> {
    let n = automaton.n;
    let a = fm.alphabet();
    if automaton.alphabet != a {
        return Err(Error::InvalidParameter("automaton alphabet differs from the measure".into()));
    }
    let end = lo + horizon + n - 1;
    let ulen = constraint.len();
    fm.check_span(offset, end.max(ulen))?;
    let total = cylinder_mass(fm, offset, constraint)?;
    let mut curve = vec![total; horizon + 1];
    let mut hit = vec![0.0; horizon + 1];
    if total == 0.0 {
        return Ok(OccurrenceCurves { avoid: curve, hit });
    }

    let mut q = 0;
    for (e, &b) in constraint.iter().enumerate() {
        q = automaton.step(q, b);
        if q == n && e + 1 >= n {
            let start = e + 1 - n;
            if start >= lo && start < lo + horizon {
                for j in start - lo + 1..=horizon {
                    curve[j] = 0.0;
                    hit[j] = total;
                }
                return Ok(OccurrenceCurves { avoid: curve, hit });
            }
        }
    }

    let m = fm.memory();
    let pow = |c: usize| a.pow(c as u32);
    let mut c = ulen.min(m);
    let mut ctx0 = 0usize;
    for &s in &constraint[ulen - c..] {
        ctx0 = ctx0 * a + s as usize;
    }
    let mut mass = vec![0.0; (n + 1) * pow(c)];
    mass[ctx0 * (n + 1) + q] = total;
    let mut next = Vec::new();
    let mut probs = vec![0.0; a];
    let mut ctx_syms = vec![0u8; m];
    let mut removed = 0.0;

    for pos in ulen..end {
        let c_next = (c + 1).min(m);
        next.clear();
        next.resize((n + 1) * pow(c_next), 0.0);
        let forbid = pos + 1 >= n && pos + 1 - n >= lo;
        for ctx in 0..pow(c) {
            let row = &mass[ctx * (n + 1)..(ctx + 1) * (n + 1)];
            if row.iter().all(|&x| x == 0.0) {
                continue;
            }
            let mut rest = ctx;
            for slot in ctx_syms[..c].iter_mut().rev() {
                *slot = (rest % a) as u8;
                rest /= a;
            }
            fm.conditional(offset, pos, &ctx_syms[..c], &mut probs)?;
            for (b, &p) in probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let nctx = if m == 0 { 0 } else { (ctx * a + b) % pow(c_next) };
                let base = nctx * (n + 1);
                for (q, &x) in row.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let nq = automaton.step(q, b as u8);
                    if nq == n && forbid {
                        removed += x * p;
                        continue;
                    }
                    next[base + nq] += x * p;
                }
            }
        }
        std::mem::swap(&mut mass, &mut next);
        c = c_next;
        // all starts up to pos + 1 - n are decided now
        if pos + 2 >= lo + n {
            let j = pos + 2 - n - lo;
            if j <= horizon {
                let left: f64 = mass.iter().sum();
                curve[j] = left;
                hit[j] = removed;
                if left == 0.0 {
                    for v in &mut curve[j..] {
                        *v = 0.0;
                    }
                    for v in &mut hit[j..] {
                        *v = removed;
                    }
                    break;
                }
            }
        }
    }
    Ok(OccurrenceCurves { avoid: curve, hit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::EnvironmentPath;
    use crate::measures::{all_words, RandomProductMeasure, SampleMeasureModel};

    fn brute(fm: &impl FibreMeasure, u: &[u8], w: &[u8], lo: usize, horizon: usize) -> Vec<f64> {
        let n = w.len();
        let len = (lo + horizon + n - 1).max(u.len());
        let mut out = vec![0.0; horizon + 1];
        for x in all_words(fm.alphabet(), len) {
            if !x.starts_with(u) {
                continue;
            }
            let p = cylinder_mass(fm, 0, &x).unwrap();
            let first = (lo..lo + horizon).find(|&i| &x[i..i + n] == w);
            for (j, v) in out.iter_mut().enumerate() {
                if first.map_or(true, |f| f >= lo + j) {
                    *v += p;
                }
            }
        }
        out
    }

    #[test]
    fn automaton_counts_overlapping_matches() {
        let k = KmpAutomaton::new(&[0, 1, 0], 2).unwrap();
        let mut q = 0;
        let mut hits = 0;
        for &b in &[0, 1, 0, 1, 0, 0, 1, 0] {
            q = k.step(q, b);
            hits += (q == 3) as usize;
        }
        assert_eq!(hits, 3);
    }

    #[test]
    fn matches_brute_force() {
        let model = RandomProductMeasure::alpha_beta(0.3, 0.6, 0).unwrap();
        let path = EnvironmentPath::from_symbols(vec![0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 0, 0, 1, 0, 1, 0], 0);
        let fm = model.realize(&path, 0..16).unwrap();
        for w in [&[0u8, 0][..], &[0, 1, 0], &[1]] {
            let k = KmpAutomaton::new(w, 2).unwrap();
            for u in [&[][..], &[0u8][..], &[0, 0, 1], &[0, 1, 0]] {
                for lo in [0, 1, 3] {
                    let got = avoid_curve(&fm, 0, u, &k, lo, 6).unwrap();
                    let want = brute(&fm, u, w, lo, 6);
                    for (g, e) in got.iter().zip(&want) {
                        assert!((g - e).abs() < 1e-14, "{w:?} {u:?} {lo}: {got:?} vs {want:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn bernoulli_survival_of_single_symbol() {
        let model = RandomProductMeasure::bernoulli(vec![0.5, 0.5]).unwrap();
        let path = EnvironmentPath::constant(0, 0..40);
        let fm = model.realize(&path, 0..40).unwrap();
        let k = KmpAutomaton::new(&[0], 2).unwrap();
        let f = avoid_curve(&fm, 0, &[], &k, 1, 20).unwrap();
        for (j, v) in f.iter().enumerate() {
            assert!((v - 0.5f64.powi(j as i32)).abs() < 1e-15);
        }
    }
}
