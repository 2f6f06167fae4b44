//! Symbols, words, cylinders and the combinatorics of early returns.
//!
//! A [`Word`] names the cylinder of all sequences that begin with it. The
//! functions here answer the questions the hitting-time machinery keeps
//! asking about a target block: is it periodic, how soon can a point of the
//! cylinder come back, and which deeper cylinder does the returning mass
//! live in.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A single fibre (or base) symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Symbol(pub u8);

impl Symbol {
    pub fn new(id: usize, alphabet: usize) -> Result<Self> {
        if id >= alphabet || id > u8::MAX as usize {
            return Err(Error::SymbolOutOfRange { symbol: id, alphabet });
        }
        Ok(Symbol(id as u8))
    }

    pub fn id(self) -> usize {
        self.0 as usize
    }
}

/// A finite block of symbols, packed one byte per symbol.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Word(Vec<u8>);

impl Word {
    pub fn new(symbols: Vec<u8>, alphabet: usize) -> Result<Self> {
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= alphabet) {
            return Err(Error::SymbolOutOfRange { symbol: bad as usize, alphabet });
        }
        Ok(Word(symbols))
    }

    /// Builds a word without checking symbols against an alphabet.
    pub fn from_raw(symbols: Vec<u8>) -> Self {
        Word(symbols)
    }

    pub fn empty() -> Self {
        Word(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.0
    }

    pub fn symbol(&self, i: usize) -> Symbol {
        Symbol(self.0[i])
    }

    pub fn prefix(&self, n: usize) -> Word {
        Word(self.0[..n.min(self.0.len())].to_vec())
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn push(&mut self, s: u8) {
        self.0.push(s);
    }

    /// Parses either a digit string (`"0101"`) or a bracketed list (`"[3,11,0]"`).
    pub fn parse(text: &str, alphabet: usize) -> Result<Self> {
        let text = text.trim();
        let symbols = if let Some(inner) = text.strip_prefix('[') {
            let inner = inner
                .strip_suffix(']')
                .ok_or_else(|| Error::InvalidParameter(format!("unterminated word {text:?}")))?;
            if inner.trim().is_empty() {
                Vec::new()
            } else {
                inner
                    .split(',')
                    .map(|t| {
                        t.trim().parse::<u8>().map_err(|_| {
                            Error::InvalidParameter(format!("bad symbol {t:?} in word {text:?}"))
                        })
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        } else {
            text.chars()
                .map(|c| {
                    c.to_digit(10).map(|d| d as u8).ok_or_else(|| {
                        Error::InvalidParameter(format!("bad digit {c:?} in word {text:?}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?
        };
        Word::new(symbols, alphabet)
    }

    /// Digit string for alphabets of at most ten symbols, bracketed list otherwise.
    pub fn format(&self, alphabet: usize) -> String {
        if alphabet <= 10 {
            self.0.iter().map(|&s| char::from(b'0' + s)).collect()
        } else {
            let parts: Vec<String> = self.0.iter().map(|s| s.to_string()).collect();
            format!("[{}]", parts.join(","))
        }
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let alphabet = self.0.iter().map(|&s| s as usize + 1).max().unwrap_or(0);
        f.write_str(&self.format(alphabet))
    }
}

impl From<&[u8]> for Word {
    fn from(s: &[u8]) -> Self {
        Word(s.to_vec())
    }
}

/// Smallest `p <= n/2` such that the word repeats with period `p`.
///
/// Two full periods must fit inside the word before a period is certified.
pub fn minimal_period(w: &[u8]) -> Option<usize> {
    let n = w.len();
    (1..=n / 2).find(|&p| has_period(w, p))
}

fn has_period(w: &[u8], p: usize) -> bool {
    w[p..].iter().zip(w).all(|(a, b)| a == b)
}

/// True when the suffix of `w` starting at `j` equals the prefix of the same length.
fn overlaps_at(w: &[u8], j: usize) -> bool {
    w[j..] == w[..w.len() - j]
}

/// Earliest time a point of `[w]` can be back in `[w]`.
///
/// This is the smallest proper self-overlap shift, or `|w|` when the word has
/// none.
pub fn first_return_lower_bound(w: &[u8]) -> Result<usize> {
    if w.is_empty() {
        return Err(Error::EmptyWord);
    }
    let n = w.len();
    Ok((1..n).find(|&j| overlaps_at(w, j)).unwrap_or(n))
}

/// The unique `(n + j)`-cylinder inside `[w]` whose points are in `[w]` again at time `j`.
pub fn returning_subcylinder(w: &[u8], j: usize) -> Option<Word> {
    let n = w.len();
    if j == 0 || j > n || !overlaps_at(w, j) {
        return None;
    }
    let mut out = w.to_vec();
    out.extend_from_slice(&w[n - j..]);
    Some(Word(out))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeriodicTail {
    pub start: usize,
    pub period: Word,
}

/// A point of the shift known through finitely many coordinates, optionally
/// followed by a periodic tail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetPoint {
    prefix: Word,
    tail: Option<PeriodicTail>,
    period: Option<usize>,
}

impl TargetPoint {
    /// A point represented only through `prefix`; no coordinate beyond it exists.
    pub fn finite(prefix: Word) -> Self {
        TargetPoint { prefix, tail: None, period: None }
    }

    /// The periodic point `block block block ...`.
    pub fn periodic(block: Word) -> Result<Self> {
        Self::with_tail(Word::empty(), PeriodicTail { start: 0, period: block }, None)
    }

    /// `prefix` followed by a tail that repeats `tail.period` from index `tail.start`.
    ///
    /// The prefix must agree with the tail on every index they share. A
    /// `declared_period`, when given, must be the minimal period of the point.
    pub fn with_tail(prefix: Word, tail: PeriodicTail, declared_period: Option<usize>) -> Result<Self> {
        if tail.period.is_empty() {
            return Err(Error::EmptyWord);
        }
        if tail.start > prefix.len() {
            return Err(Error::InvalidParameter(format!(
                "tail starts at {} but prefix has only {} symbols",
                tail.start,
                prefix.len()
            )));
        }
        let q = tail.period.len();
        for i in tail.start..prefix.len() {
            if prefix.0[i] != tail.period.0[(i - tail.start) % q] {
                return Err(Error::InvalidParameter(format!(
                    "prefix disagrees with periodic tail at index {i}"
                )));
            }
        }
        let mut point = TargetPoint { prefix, tail: Some(tail), period: None };
        point.period = point.compute_period();
        if let Some(p) = declared_period {
            if point.period != Some(p) {
                return Err(Error::InvalidParameter(format!(
                    "declared period {p} is not the minimal period ({:?})",
                    point.period
                )));
            }
        }
        Ok(point)
    }

    fn compute_period(&self) -> Option<usize> {
        let tail = self.tail.as_ref()?;
        let block = tail.period.as_slice();
        let doubled: Vec<u8> = block.iter().chain(block).copied().collect();
        let q = minimal_period(&doubled).unwrap_or(block.len());
        // periodic from index 0, not merely eventually periodic
        (0..tail.start)
            .all(|i| self.coord_unchecked(i) == self.coord_unchecked(i + q))
            .then_some(q)
    }

    fn coord_unchecked(&self, i: usize) -> u8 {
        if i < self.prefix.len() {
            return self.prefix.0[i];
        }
        let tail = self.tail.as_ref().expect("coordinate beyond a finite point");
        tail.period.0[(i - tail.start) % tail.period.len()]
    }

    /// Number of representable coordinates, `None` when unbounded.
    pub fn representable(&self) -> Option<usize> {
        match self.tail {
            Some(_) => None,
            None => Some(self.prefix.len()),
        }
    }

    pub fn coordinate(&self, i: usize) -> Result<u8> {
        match self.representable() {
            Some(avail) if i >= avail => {
                Err(Error::DepthExceedsRepresentation { requested: i + 1, available: avail })
            }
            _ => Ok(self.coord_unchecked(i)),
        }
    }

    /// The first `n` coordinates, i.e. the word naming `C_n(z)`.
    pub fn block(&self, n: usize) -> Result<Word> {
        if let Some(avail) = self.representable() {
            if n > avail {
                return Err(Error::DepthExceedsRepresentation { requested: n, available: avail });
            }
        }
        Ok(Word((0..n).map(|i| self.coord_unchecked(i)).collect()))
    }

    /// Minimal period when the point is exactly periodic.
    pub fn period(&self) -> Option<usize> {
        self.period
    }

    pub fn is_periodic(&self) -> bool {
        self.period.is_some()
    }

    /// Short human-readable description, e.g. `(01)^inf` or `0100011011...`.
    pub fn describe(&self, alphabet: usize) -> String {
        match &self.tail {
            Some(t) => {
                let head = self.prefix.prefix(t.start).format(alphabet);
                format!("{head}({})^inf", t.period.format(alphabet))
            }
            None => format!("{}...", self.prefix.format(alphabet)),
        }
    }
}

/// The target cylinder `A = C_n(z)` and its escaping part `A'`.
///
/// For a `p`-periodic target `A' = C_n(z) \ C_{n+p}(z)`; otherwise `A' = A`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscapingSet {
    pub base: Word,
    pub removed: Option<Word>,
}

impl EscapingSet {
    pub fn depth(&self) -> usize {
        self.base.len()
    }

    /// Period used for `A'`, zero for non-periodic targets.
    pub fn period(&self) -> usize {
        self.removed.as_ref().map_or(0, |r| r.len() - self.base.len())
    }

    /// Coordinates needed to decide membership in `A'`.
    pub fn decision_depth(&self) -> usize {
        self.removed.as_ref().map_or(self.base.len(), Word::len)
    }

    pub fn in_base(&self, x: &[u8]) -> bool {
        x.starts_with(self.base.as_slice())
    }

    pub fn contains(&self, x: &[u8]) -> Result<bool> {
        if x.len() < self.decision_depth() {
            return Err(Error::StreamTooShort { needed: self.decision_depth(), got: x.len() });
        }
        let in_removed = self.removed.as_ref().is_some_and(|r| x.starts_with(r.as_slice()));
        Ok(self.in_base(x) && !in_removed)
    }
}

pub fn escaping_set(z: &TargetPoint, n: usize) -> Result<EscapingSet> {
    if n == 0 {
        return Err(Error::InvalidParameter("escaping set needs depth n >= 1".into()));
    }
    let base = z.block(n)?;
    let removed = match z.period() {
        Some(p) => Some(z.block(n + p)?),
        None => None,
    };
    Ok(EscapingSet { base, removed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HitOutcome {
    Hit(usize),
    Censored,
}

impl HitOutcome {
    pub fn time(self) -> Option<usize> {
        match self {
            HitOutcome::Hit(k) => Some(k),
            HitOutcome::Censored => None,
        }
    }
}

/// Rolling-window matcher for `inf { k >= 1 : x_k .. x_{k+n-1} = target }`.
///
/// Symbols are fed one at a time. Short targets are matched with a packed
/// shift register; long ones fall back to a ring-buffer comparison.
#[derive(Debug, Clone)]
pub struct HitScanner {
    target: Vec<u8>,
    bits: u32,
    mask: u64,
    code: u64,
    register: u64,
    ring: Vec<u8>,
    seen: usize,
}

impl HitScanner {
    pub fn new(target: &[u8]) -> Result<Self> {
        if target.is_empty() {
            return Err(Error::EmptyWord);
        }
        let max = target.iter().copied().max().unwrap_or(0) as u64;
        // symbols above the target's maximum can share a code: they never match
        let bits = (64 - max.leading_zeros()).max(1) + 1;
        let packed = bits as usize * target.len() <= 64;
        let (mask, code) = if packed {
            let total = bits as usize * target.len();
            let mask = if total == 64 { u64::MAX } else { (1u64 << total) - 1 };
            let code = target.iter().fold(0u64, |acc, &s| (acc << bits) | s as u64);
            (mask, code)
        } else {
            (0, 0)
        };
        Ok(HitScanner {
            target: target.to_vec(),
            bits: if packed { bits } else { 0 },
            mask,
            code,
            register: 0,
            ring: if packed { Vec::new() } else { vec![0; target.len()] },
            seen: 0,
        })
    }

    pub fn reset(&mut self) {
        self.register = 0;
        self.seen = 0;
    }

    /// Symbols needed to decide a horizon of `t_max`.
    pub fn required_len(&self, t_max: usize) -> usize {
        t_max + self.target.len()
    }

    /// Feeds `x_i` (i = number of symbols fed so far). Returns the hitting
    /// time if the block ending at `x_i` matches and starts at `k >= 1`.
    #[inline]
    pub fn push(&mut self, symbol: u8) -> Option<usize> {
        let n = self.target.len();
        let i = self.seen;
        self.seen += 1;
        if i < n {
            // the block ending here starts at 0 or is incomplete
            self.feed(symbol);
            return None;
        }
        self.feed(symbol);
        self.matches().then(|| i + 1 - n)
    }

    #[inline]
    fn feed(&mut self, symbol: u8) {
        if self.bits > 0 {
            let s = (symbol as u64).min(1u64 << (self.bits - 1));
            self.register = ((self.register << self.bits) | s) & self.mask;
        } else {
            let n = self.ring.len();
            self.ring[self.seen.wrapping_sub(1) % n] = symbol;
        }
    }

    #[inline]
    fn matches(&self) -> bool {
        if self.bits > 0 {
            return self.register == self.code;
        }
        let n = self.ring.len();
        let start = self.seen % n;
        (0..n).all(|k| self.ring[(start + k) % n] == self.target[k])
    }
}

/// First `k` in `[1, t_max]` with `x_k .. x_{k+n-1} = target`.
pub fn hitting_time<I>(trajectory: I, target: &[u8], t_max: usize) -> Result<HitOutcome>
where
    I: IntoIterator<Item = u8>,
{
    if t_max == 0 {
        return Err(Error::InvalidParameter("t_max must be positive".into()));
    }
    let mut scanner = HitScanner::new(target)?;
    let needed = scanner.required_len(t_max);
    let mut got = 0;
    for symbol in trajectory.into_iter().take(needed) {
        got += 1;
        if let Some(k) = scanner.push(symbol) {
            return Ok(HitOutcome::Hit(k));
        }
    }
    if got < needed {
        return Err(Error::StreamTooShort { needed, got });
    }
    Ok(HitOutcome::Censored)
}

/// A 0/1 matrix with no empty row and no empty column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    size: usize,
    entries: Vec<bool>,
}

impl TransitionMatrix {
    pub fn new(rows: Vec<Vec<bool>>) -> Result<Self> {
        let size = rows.len();
        if size == 0 {
            return Err(Error::InvalidMatrix("empty matrix".into()));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != size) {
            return Err(Error::InvalidMatrix(format!("row {r} has wrong length")));
        }
        if let Some(r) = rows.iter().position(|r| !r.iter().any(|&b| b)) {
            return Err(Error::InvalidMatrix(format!("row {r} has no nonzero entry")));
        }
        if let Some(c) = (0..size).find(|&c| !rows.iter().any(|r| r[c])) {
            return Err(Error::InvalidMatrix(format!("column {c} has no nonzero entry")));
        }
        Ok(TransitionMatrix { size, entries: rows.into_iter().flatten().collect() })
    }

    pub fn full(size: usize) -> Self {
        TransitionMatrix { size, entries: vec![true; size * size] }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn allows(&self, from: u8, to: u8) -> bool {
        self.entries[from as usize * self.size + to as usize]
    }

    pub fn is_full(&self) -> bool {
        self.entries.iter().all(|&b| b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(s: &str) -> Vec<u8> {
        Word::parse(s, 10).unwrap().into_vec()
    }

    #[test]
    fn minimal_period_examples() {
        assert_eq!(minimal_period(&w("010101")), Some(2));
        assert_eq!(minimal_period(&w("000000")), Some(1));
        assert_eq!(minimal_period(&w("010010")), Some(3));
        assert_eq!(minimal_period(&w("01001")), None);
    }

    #[test]
    fn first_return_examples() {
        assert_eq!(first_return_lower_bound(&w("01001")).unwrap(), 3);
        assert_eq!(first_return_lower_bound(&w("00000")).unwrap(), 1);
        assert_eq!(first_return_lower_bound(&w("01234")).unwrap(), 5);
        assert_eq!(first_return_lower_bound(&[]), Err(Error::EmptyWord));
    }

    #[test]
    fn returning_subcylinder_examples() {
        let y = returning_subcylinder(&w("01001"), 3).unwrap();
        assert_eq!(y.as_slice(), &w("01001001")[..]);
        // oracle: the word starts with w and its shift by j starts with w too
        assert_eq!(&y.as_slice()[3..], &w("01001")[..]);
        assert_eq!(returning_subcylinder(&w("000"), 1).unwrap().as_slice(), &w("0000")[..]);
        assert_eq!(returning_subcylinder(&w("012"), 1), None);
    }

    #[test]
    fn escaping_set_periodic_and_not() {
        let z = TargetPoint::periodic(Word::from_raw(vec![0])).unwrap();
        let a = escaping_set(&z, 3).unwrap();
        assert_eq!(a.base.as_slice(), &[0, 0, 0]);
        assert_eq!(a.removed.as_ref().unwrap().as_slice(), &[0, 0, 0, 0]);
        assert!(a.in_base(&[0, 0, 0, 1]));
        assert!(a.contains(&[0, 0, 0]).is_err());
        assert!(!a.contains(&[0, 0, 0, 0, 1]).unwrap());
        assert!(a.contains(&[0, 0, 0, 1, 0]).unwrap());

        let np = TargetPoint::finite(Word::parse("0100011011", 2).unwrap());
        let b = escaping_set(&np, 5).unwrap();
        assert_eq!(b.removed, None);
        assert_eq!(b.period(), 0);
        assert!(escaping_set(&np, 11).is_err());
    }

    #[test]
    fn target_periods() {
        let z = TargetPoint::periodic(Word::from_raw(vec![0, 1, 0, 1])).unwrap();
        assert_eq!(z.period(), Some(2));
        assert_eq!(z.block(5).unwrap().as_slice(), &[0, 1, 0, 1, 0]);
        // eventually but not exactly periodic
        let tail = PeriodicTail { start: 1, period: Word::from_raw(vec![0]) };
        let e = TargetPoint::with_tail(Word::from_raw(vec![1]), tail, None).unwrap();
        assert_eq!(e.period(), None);
        // eventually periodic that happens to be periodic from the start
        let tail = PeriodicTail { start: 2, period: Word::from_raw(vec![0, 1]) };
        let p = TargetPoint::with_tail(Word::from_raw(vec![0, 1]), tail, Some(2)).unwrap();
        assert_eq!(p.period(), Some(2));
        let tail = PeriodicTail { start: 0, period: Word::from_raw(vec![0, 1]) };
        assert!(TargetPoint::with_tail(Word::empty(), tail, Some(1)).is_err());
    }

    #[test]
    fn hitting_time_examples() {
        let x = [1u8, 0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1];
        assert_eq!(hitting_time(x, &[0], 10).unwrap(), HitOutcome::Hit(1));
        let alt = (0..40).map(|i| (i % 2) as u8);
        assert_eq!(hitting_time(alt, &[0, 0], 10).unwrap(), HitOutcome::Censored);
        let y = [1u8, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 0, 1, 1, 0];
        assert_eq!(hitting_time(y, &[1, 1, 0], 10).unwrap(), HitOutcome::Hit(3));
        assert!(matches!(hitting_time([0u8, 1], &[1, 1], 10), Err(Error::StreamTooShort { .. })));
        // k = 0 is never reported
        assert_eq!(hitting_time([0u8, 0, 1, 1, 1], &[0, 0], 3).unwrap(), HitOutcome::Censored);
        assert_eq!(hitting_time([0u8, 0, 0, 1, 1], &[0, 0], 3).unwrap(), HitOutcome::Hit(1));
        assert_eq!(hitting_time([0u8, 1, 1, 1, 1], &[0, 1], 3).unwrap(), HitOutcome::Censored);
    }

    #[test]
    fn long_targets_use_ring_buffer() {
        let target: Vec<u8> = (0..40).map(|i| (i % 3) as u8).collect();
        let mut x = vec![2u8; 7];
        x.extend_from_slice(&target);
        x.extend(std::iter::repeat(1).take(10));
        assert_eq!(hitting_time(x, &target, 10).unwrap(), HitOutcome::Hit(7));
    }

    #[test]
    fn word_formats() {
        let a = Word::parse("[3,11,0]", 12).unwrap();
        assert_eq!(a.format(12), "[3,11,0]");
        assert_eq!(Word::parse("0120", 3).unwrap().format(3), "0120");
        assert!(Word::parse("012", 2).is_err());
    }

    #[test]
    fn transition_matrix_validation() {
        assert!(TransitionMatrix::new(vec![vec![true, false], vec![false, false]]).is_err());
        assert!(TransitionMatrix::new(vec![vec![true, false], vec![true, false]]).is_err());
        let m = TransitionMatrix::new(vec![vec![true, true], vec![true, false]]).unwrap();
        assert!(!m.allows(1, 1));
        assert!(TransitionMatrix::full(3).is_full());
    }
}
