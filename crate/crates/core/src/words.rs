//! Words over block alphabets and the families of letters they are drawn
//! from.
//!
//! A [`Word`] is a nonempty sequence of letters, each a block of
//! `block_size` reals. Internally the letters are kept aggregated (flat),
//! which is also the order in which transfer matrices consume them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on `lcm(|x|, |y|)` letters for [`word_distance`].
pub const DEFAULT_LCM_CAP: usize = 1_000_000;

/// One block of `k` reals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Letter(pub Vec<f64>);

impl Letter {
    pub fn block_size(&self) -> usize {
        self.0.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct WordRepr {
    block_size: usize,
    letters: Vec<Vec<f64>>,
}

/// A finite word; serializes as `{block_size, letters: [[...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "WordRepr", into = "WordRepr")]
pub struct Word {
    block_size: usize,
    data: Vec<f64>,
}

impl TryFrom<WordRepr> for Word {
    type Error = Error;

    fn try_from(r: WordRepr) -> Result<Self> {
        Word::new(r.block_size, r.letters.into_iter().map(Letter).collect())
    }
}

impl From<Word> for WordRepr {
    fn from(w: Word) -> Self {
        WordRepr {
            block_size: w.block_size,
            letters: w.data.chunks(w.block_size).map(|c| c.to_vec()).collect(),
        }
    }
}

impl Word {
    pub fn new(block_size: usize, letters: Vec<Letter>) -> Result<Self> {
        if block_size == 0 {
            return Err(Error::InvalidArgument("block size must be >= 1".into()));
        }
        if letters.is_empty() {
            return Err(Error::InvalidArgument("word must have a letter".into()));
        }
        let mut data = Vec::with_capacity(block_size * letters.len());
        for l in letters {
            if l.block_size() != block_size {
                return Err(Error::BlockMismatch {
                    left: block_size,
                    right: l.block_size(),
                });
            }
            if l.0.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("letter values must be finite".into()));
            }
            data.extend_from_slice(&l.0);
        }
        Ok(Word { block_size, data })
    }

    /// Word of block size one.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        Self::from_aggregate(1, values.to_vec())
    }

    /// Builds a word from its aggregated potential.
    pub fn from_aggregate(block_size: usize, data: Vec<f64>) -> Result<Self> {
        if block_size == 0 || data.is_empty() || data.len() % block_size != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot split {} values into blocks of {}",
                data.len(),
                block_size
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("letter values must be finite".into()));
        }
        Ok(Word { block_size, data })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    /// Number of letters.
    pub fn len(&self) -> usize {
        self.data.len() / self.block_size
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Length of the aggregated potential, `letters · block_size`.
    pub fn aggregated_len(&self) -> usize {
        self.data.len()
    }

    pub fn letter(&self, i: usize) -> &[f64] {
        &self.data[i * self.block_size..(i + 1) * self.block_size]
    }

    pub fn letters(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.block_size)
    }

    /// Borrowed aggregated potential.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Flattened potential `x^♮`.
    pub fn aggregate(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// `x ♯ y`.
    pub fn concat(&self, other: &Word) -> Result<Word> {
        if self.block_size != other.block_size {
            return Err(Error::BlockMismatch {
                left: self.block_size,
                right: other.block_size,
            });
        }
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Word {
            block_size: self.block_size,
            data,
        })
    }

    /// `x^{♯m}`.
    pub fn sharp_power(&self, m: usize) -> Result<Word> {
        if m < 1 {
            return Err(Error::InvalidArgument("sharp power needs m >= 1".into()));
        }
        Ok(Word {
            block_size: self.block_size,
            data: self.data.repeat(m),
        })
    }

    /// Concatenation of a nonempty list of words.
    pub fn concat_all<'a>(parts: impl IntoIterator<Item = &'a Word>) -> Result<Word> {
        let mut it = parts.into_iter();
        let first = it
            .next()
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut data = first.data.clone();
        for w in it {
            if w.block_size != first.block_size {
                return Err(Error::BlockMismatch {
                    left: first.block_size,
                    right: w.block_size,
                });
            }
            data.extend_from_slice(&w.data);
        }
        Ok(Word {
            block_size: first.block_size,
            data,
        })
    }

    /// Value of the periodic extension `x^{♯Z}` at letter index `i`,
    /// coordinate `c`.
    pub fn periodic(&self, i: i64, c: usize) -> f64 {
        let n = self.len() as i64;
        let j = i.rem_euclid(n) as usize;
        self.data[j * self.block_size + c]
    }

    /// Adds `offset` to coordinate `c` of every letter, for each listed `c`.
    pub fn shifted(&self, coords: &[usize], offset: f64) -> Word {
        let mut data = self.data.clone();
        for chunk in data.chunks_mut(self.block_size) {
            for &c in coords {
                chunk[c] += offset;
            }
        }
        Word {
            block_size: self.block_size,
            data,
        }
    }
}

/// `V^{[k]}` on one period: letter `j` is `(v_j, 0, ..., 0)`.
pub fn sieve(v: &[f64], k: usize) -> Result<Word> {
    if k < 1 {
        return Err(Error::InvalidArgument("sieve needs k >= 1".into()));
    }
    insert_between(v, &vec![0.0; k - 1])
}

/// `V^{⊛k}` on one period: letter `j` is `(v_j, ..., v_j)`.
pub fn repeat_blocks(v: &[f64], k: usize) -> Result<Word> {
    if k < 1 {
        return Err(Error::InvalidArgument("repeat needs k >= 1".into()));
    }
    let data: Vec<f64> = v.iter().flat_map(|&x| std::iter::repeat(x).take(k)).collect();
    Word::from_aggregate(k, data)
}

/// `V^{[k,b]}` on one period: letter `j` is `(v_j, b_1, ..., b_{k-1})`.
pub fn insert_between(v: &[f64], b: &[f64]) -> Result<Word> {
    let k = 1 + b.len();
    let mut data = Vec::with_capacity(v.len() * k);
    for &x in v {
        data.push(x);
        data.extend_from_slice(b);
    }
    Word::from_aggregate(k, data)
}

/// Rotation `x_1 … x_q -> x_{j+1} … x_q x_1 … x_j`.
pub fn cyclic_shift(v: &[f64], j: usize) -> Vec<f64> {
    if v.is_empty() {
        return Vec::new();
    }
    let j = j % v.len();
    let mut out = Vec::with_capacity(v.len());
    out.extend_from_slice(&v[j..]);
    out.extend_from_slice(&v[..j]);
    out
}

pub fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// `lcm(a, b)`, `None` on overflow.
pub fn lcm(a: usize, b: usize) -> Option<usize> {
    (a / gcd(a, b)).checked_mul(b)
}

/// Uniform distance between the periodic extensions of two words, letters
/// compared in max-norm.
pub fn word_distance(x: &Word, y: &Word) -> Result<f64> {
    word_distance_capped(x, y, DEFAULT_LCM_CAP)
}

pub fn word_distance_capped(x: &Word, y: &Word, cap: usize) -> Result<f64> {
    if x.block_size != y.block_size {
        return Err(Error::BlockMismatch {
            left: x.block_size,
            right: y.block_size,
        });
    }
    let l = lcm(x.len(), y.len()).filter(|&l| l <= cap);
    let Some(l) = l else {
        return Err(Error::LcmOverflow { cap });
    };
    let k = x.block_size;
    let (xd, yd) = (&x.data, &y.data);
    let (nx, ny) = (xd.len(), yd.len());
    let mut best = 0.0f64;
    for i in 0..l * k {
        best = best.max((xd[i % nx] - yd[i % ny]).abs());
    }
    Ok(best)
}

/// Which letters a family admits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FamilyKind {
    /// Letters `x ♯ b` with `x ∈ R^n` free and `b` fixed.
    Sieve { n: usize, b: Vec<f64> },
    /// Letters `(v, ..., v)` of length `n`.
    Polymer { n: usize },
    /// Every block is admissible.
    FullLine,
}

/// A letter family together with its coupling constant `λ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    #[serde(flatten)]
    pub kind: FamilyKind,
    #[serde(default = "one")]
    pub coupling: f64,
}

fn one() -> f64 {
    1.0
}

impl FamilySpec {
    pub fn new(kind: FamilyKind, coupling: f64) -> Result<Self> {
        let f = FamilySpec { kind, coupling };
        f.validate()?;
        Ok(f)
    }

    pub fn full_line(coupling: f64) -> Self {
        FamilySpec {
            kind: FamilyKind::FullLine,
            coupling,
        }
    }

    /// The `k`-sieve family `R × {0}^{k-1}`.
    pub fn k_sieve(k: usize, coupling: f64) -> Self {
        FamilySpec {
            kind: FamilyKind::Sieve {
                n: 1,
                b: vec![0.0; k.saturating_sub(1)],
            },
            coupling,
        }
    }

    pub fn polymer(n: usize, coupling: f64) -> Self {
        FamilySpec {
            kind: FamilyKind::Polymer { n },
            coupling,
        }
    }

    pub fn with_coupling(&self, coupling: f64) -> Self {
        FamilySpec {
            kind: self.kind.clone(),
            coupling,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.coupling == 0.0 || !self.coupling.is_finite() {
            return Err(Error::InvalidArgument("coupling must be finite and nonzero".into()));
        }
        match &self.kind {
            FamilyKind::Sieve { n, b } => {
                if *n < 1 {
                    return Err(Error::InvalidArgument("sieve family needs n >= 1".into()));
                }
                if b.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("sieve tail must be finite".into()));
                }
            }
            FamilyKind::Polymer { n } if *n < 1 => {
                return Err(Error::InvalidArgument("polymer family needs n >= 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Required block size, if the family fixes one.
    pub fn block_size(&self) -> Option<usize> {
        match &self.kind {
            FamilyKind::Sieve { n, b } => Some(n + b.len()),
            FamilyKind::Polymer { n } => Some(*n),
            FamilyKind::FullLine => None,
        }
    }

    /// Coordinates of a letter that may be moved without leaving the family.
    pub fn free_coordinates(&self, block_size: usize) -> Vec<usize> {
        match &self.kind {
            FamilyKind::Sieve { n, .. } => (0..*n).collect(),
            FamilyKind::Polymer { .. } | FamilyKind::FullLine => (0..block_size).collect(),
        }
    }

    pub fn admits_letter(&self, letter: &[f64]) -> bool {
        match &self.kind {
            FamilyKind::Sieve { n, b } => {
                letter.len() == n + b.len() && letter[*n..].iter().zip(b).all(|(x, y)| x == y)
            }
            FamilyKind::Polymer { n } => {
                letter.len() == *n && letter.iter().all(|&v| v == letter[0])
            }
            FamilyKind::FullLine => !letter.is_empty(),
        }
    }

    /// Checks that every letter of `w` belongs to the family.
    pub fn check_word(&self, w: &Word) -> Result<()> {
        if let Some(k) = self.block_size() {
            if w.block_size() != k {
                return Err(Error::BlockMismatch {
                    left: k,
                    right: w.block_size(),
                });
            }
        }
        if w.letters().all(|l| self.admits_letter(l)) {
            Ok(())
        } else {
            Err(Error::InvalidArgument("word has letters outside the family".into()))
        }
    }

    /// The family letter whose free coordinates all equal `v`.
    pub fn letter_from_value(&self, v: f64) -> Letter {
        match &self.kind {
            FamilyKind::Sieve { n, b } => {
                let mut l = vec![0.0; *n];
                l[0] = v;
                l.extend_from_slice(b);
                Letter(l)
            }
            FamilyKind::Polymer { n } => Letter(vec![v; *n]),
            FamilyKind::FullLine => Letter(vec![v]),
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            FamilyKind::Sieve { n, b } => format!("sieve(n={n}, b={b:?})"),
            FamilyKind::Polymer { n } => format!("polymer(n={n})"),
            FamilyKind::FullLine => "full_line".into(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn w(v: &[f64]) -> Word {
        Word::from_values(v).unwrap()
    }

    #[test]
    fn concatenation_and_powers() {
        assert_eq!(w(&[1.0]).concat(&w(&[2.0])).unwrap(), w(&[1.0, 2.0]));
        assert_eq!(w(&[1.0, 2.0]).concat(&w(&[3.0])).unwrap(), w(&[1.0, 2.0, 3.0]));
        let x = w(&[1.5, -0.5]);
        assert_eq!(x.concat(&x).unwrap(), x.sharp_power(2).unwrap());
        assert_eq!(w(&[5.0]).sharp_power(3).unwrap(), w(&[5.0; 3]));
        assert_eq!(
            w(&[1.0, 2.0]).sharp_power(2).unwrap(),
            w(&[1.0, 2.0, 1.0, 2.0])
        );
        assert_eq!(x.sharp_power(1).unwrap(), x);
        assert!(x.sharp_power(0).is_err());
        let blocky = sieve(&[1.0], 2).unwrap();
        assert!(matches!(
            x.concat(&blocky),
            Err(Error::BlockMismatch { .. })
        ));
    }

    #[test]
    fn aggregation() {
        let one = Word::new(3, vec![Letter(vec![1.0, 2.0, 3.0])]).unwrap();
        assert_eq!(one.aggregate(), vec![1.0, 2.0, 3.0]);
        let two = Word::new(2, vec![Letter(vec![1.0, 2.0]), Letter(vec![3.0, 4.0])]).unwrap();
        assert_eq!(two.aggregate(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(sieve(&[5.0], 2).unwrap().aggregate(), vec![5.0, 0.0]);
    }

    #[test]
    fn sieve_repeat_insert() {
        let s = sieve(&[1.0, 2.0], 3).unwrap();
        assert_eq!(s.letter(0), &[1.0, 0.0, 0.0]);
        assert_eq!(s.letter(1), &[2.0, 0.0, 0.0]);
        assert_eq!(sieve(&[4.0, 7.0], 1).unwrap(), w(&[4.0, 7.0]));
        assert!(sieve(&[1.0], 0).is_err());

        assert_eq!(repeat_blocks(&[5.0], 3).unwrap().letter(0), &[5.0; 3]);
        let r = repeat_blocks(&[1.0, 2.0], 2).unwrap();
        assert_eq!(r.aggregate(), vec![1.0, 1.0, 2.0, 2.0]);
        assert_eq!(repeat_blocks(&[3.0, 1.0], 1).unwrap(), w(&[3.0, 1.0]));

        assert_eq!(insert_between(&[7.0], &[1.0, 2.0]).unwrap().letter(0), &[7.0, 1.0, 2.0]);
        assert_eq!(insert_between(&[7.0, 8.0], &[]).unwrap(), w(&[7.0, 8.0]));
        assert_eq!(insert_between(&[7.0], &[0.0]).unwrap(), sieve(&[7.0], 2).unwrap());
    }

    #[test]
    fn sieve_matches_pointwise_definition() {
        let v = [0.3, -1.1, 2.5];
        let k = 4;
        let q = v.len() as i64;
        let s = sieve(&v, k).unwrap();
        let agg = s.aggregate();
        let kk = k as i64;
        for n in -2 * q * kk..=2 * q * kk {
            let got = agg[n.rem_euclid(q * kk) as usize];
            let expected = if n % kk == 0 {
                v[(n / kk).rem_euclid(q) as usize]
            } else {
                0.0
            };
            assert_eq!(got, expected, "index {n}");
        }
    }

    #[test]
    fn shifts() {
        assert_eq!(cyclic_shift(&[1.0, 2.0, 3.0], 1), vec![2.0, 3.0, 1.0]);
        assert_eq!(cyclic_shift(&[1.0, 2.0, 3.0], 0), vec![1.0, 2.0, 3.0]);
        assert_eq!(cyclic_shift(&[1.0, 2.0, 3.0], 3), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn distances() {
        assert_eq!(word_distance(&w(&[1.0, 2.0]), &w(&[1.0, 2.0, 1.0, 2.0])).unwrap(), 0.0);
        assert_eq!(word_distance(&w(&[1.0, 2.0]), &w(&[1.0, 3.0])).unwrap(), 1.0);
        // over lcm 6: (1,2,1,2,1,2) vs (1,2,2,1,2,2) -> diffs (0,0,1,1,1,0)
        assert_eq!(word_distance(&w(&[1.0, 2.0]), &w(&[1.0, 2.0, 2.0])).unwrap(), 1.0);
        let a = w(&vec![0.0; 1009]);
        let b = w(&vec![0.0; 1013]);
        assert!(matches!(
            word_distance_capped(&a, &b, 1000),
            Err(Error::LcmOverflow { .. })
        ));
    }

    #[test]
    fn word_json_shape() {
        let s = sieve(&[5.0, 1.0], 2).unwrap();
        let js = serde_json::to_value(&s).unwrap();
        assert_eq!(
            js,
            serde_json::json!({"block_size": 2, "letters": [[5.0, 0.0], [1.0, 0.0]]})
        );
        let back: Word = serde_json::from_value(js).unwrap();
        assert_eq!(back, s);
        let bad = serde_json::json!({"block_size": 2, "letters": [[5.0]]});
        assert!(serde_json::from_value::<Word>(bad).is_err());
    }

    #[test]
    fn families() {
        let f = FamilySpec::k_sieve(3, 1.0);
        assert_eq!(f.block_size(), Some(3));
        assert!(f.admits_letter(&[2.0, 0.0, 0.0]));
        assert!(!f.admits_letter(&[2.0, 1.0, 0.0]));
        assert_eq!(f.letter_from_value(4.0), Letter(vec![4.0, 0.0, 0.0]));
        let p = FamilySpec::polymer(2, 0.5);
        assert!(p.admits_letter(&[1.0, 1.0]));
        assert!(!p.admits_letter(&[1.0, 2.0]));
        assert!(FamilySpec::new(FamilyKind::FullLine, 0.0).is_err());
        assert!(FamilySpec::new(FamilyKind::Polymer { n: 0 }, 1.0).is_err());
        let js = serde_json::to_value(&f).unwrap();
        assert_eq!(js["kind"], "sieve");
        let back: FamilySpec = serde_json::from_value(js).unwrap();
        assert_eq!(back, f);
    }
}
