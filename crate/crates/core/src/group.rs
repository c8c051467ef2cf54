//! Plain groups `F_d * G_1 * ... * G_m` and exact word arithmetic.
//!
//! The alphabet `S` lists the free letters first (`a1`, `a1'`, `a2`, ...) and
//! then the nonidentity elements of each finite factor (`G1.1`, `G1.2`, ...).
//! Elements are stored as reduced words, so the word length is the group
//! length with respect to `S`.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A letter of the alphabet `S`, stored as its index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Generator(pub u16);

impl Generator {
    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn from_index(i: usize) -> Self {
        Generator(i as u16)
    }
}

/// Which factor of the free product a letter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    /// Free generator pair `i` (zero based).
    Free(usize),
    /// Finite factor `j` (zero based).
    Finite(usize),
}

/// A finite group given by its multiplication table. Index 0 is the identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FiniteGroup {
    table: Vec<Vec<usize>>,
    inverse: Vec<usize>,
}

impl FiniteGroup {
    /// Validates a multiplication table: closure, identity at 0, inverses,
    /// and associativity checked on every triple.
    pub fn from_table(table: Vec<Vec<usize>>) -> Result<Self> {
        let n = table.len();
        if n < 2 {
            return Err(Error::InvalidGroup("finite factor needs order at least 2".into()));
        }
        for (i, row) in table.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidGroup(format!("row {i} has length {}, expected {n}", row.len())));
            }
            if let Some(&x) = row.iter().find(|&&x| x >= n) {
                return Err(Error::InvalidGroup(format!("entry {x} out of range in row {i}")));
            }
        }
        for i in 0..n {
            if table[0][i] != i || table[i][0] != i {
                return Err(Error::InvalidGroup("index 0 is not the identity".into()));
            }
        }
        let mut inverse = vec![usize::MAX; n];
        for i in 0..n {
            match (0..n).find(|&j| table[i][j] == 0 && table[j][i] == 0) {
                Some(j) => inverse[i] = j,
                None => return Err(Error::InvalidGroup(format!("element {i} has no inverse"))),
            }
        }
        for a in 0..n {
            for b in 0..n {
                for c in 0..n {
                    if table[table[a][b]][c] != table[a][table[b][c]] {
                        return Err(Error::InvalidGroup(format!(
                            "table is not associative at ({a},{b},{c})"
                        )));
                    }
                }
            }
        }
        Ok(FiniteGroup { table, inverse })
    }

    /// The cyclic group `Z/n`.
    pub fn cyclic(n: usize) -> Result<Self> {
        let table = (0..n).map(|i| (0..n).map(|j| (i + j) % n).collect()).collect();
        Self::from_table(table)
    }

    pub fn order(&self) -> usize {
        self.table.len()
    }

    pub fn mul(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inv(&self, a: usize) -> usize {
        self.inverse[a]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }
}

/// One factor of the free product, as listed when building a group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FactorSpec {
    FreePair,
    Finite(FiniteGroup),
}

#[derive(Clone, Debug)]
struct Letter {
    factor: Factor,
    /// 0 for `a_i`, 1 for `a_i^{-1}`; the element index for finite factors.
    element: usize,
    inverse: Generator,
    name: String,
}

/// A reduced word. The empty word is the identity.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<Generator>);

impl Word {
    pub fn identity() -> Self {
        Word(Vec::new())
    }

    pub fn letters(&self) -> &[Generator] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<Generator> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<Generator> {
        self.0.last().copied()
    }

    pub fn prefix(&self, k: usize) -> Word {
        Word(self.0[..k].to_vec())
    }

    pub fn into_letters(self) -> Vec<Generator> {
        self.0
    }
}

/// The group `F_d * G_1 * ... * G_m` with its alphabet.
#[derive(Clone, Debug)]
pub struct PlainGroup {
    free_rank: usize,
    finite: Vec<FiniteGroup>,
    letters: Vec<Letter>,
    /// First generator index of each finite factor.
    finite_base: Vec<usize>,
}

impl PlainGroup {
    pub fn new(free_rank: usize, finite: Vec<FiniteGroup>) -> Result<Self> {
        let mut letters = Vec::new();
        for i in 0..free_rank {
            let g = letters.len();
            letters.push(Letter {
                factor: Factor::Free(i),
                element: 0,
                inverse: Generator::from_index(g + 1),
                name: format!("a{}", i + 1),
            });
            letters.push(Letter {
                factor: Factor::Free(i),
                element: 1,
                inverse: Generator::from_index(g),
                name: format!("a{}'", i + 1),
            });
        }
        let mut finite_base = Vec::with_capacity(finite.len());
        for (j, fg) in finite.iter().enumerate() {
            let base = letters.len();
            finite_base.push(base);
            for k in 1..fg.order() {
                letters.push(Letter {
                    factor: Factor::Finite(j),
                    element: k,
                    inverse: Generator::from_index(base + fg.inv(k) - 1),
                    name: format!("G{}.{}", j + 1, k),
                });
            }
        }
        if letters.len() > u16::MAX as usize {
            return Err(Error::InvalidGroup("alphabet too large".into()));
        }
        Ok(PlainGroup { free_rank, finite, letters, finite_base })
    }

    /// Builds a group from an ordered list of factors; free pairs are
    /// collected first in the alphabet regardless of their position.
    pub fn from_factors(factors: Vec<FactorSpec>) -> Result<Self> {
        let mut d = 0;
        let mut finite = Vec::new();
        for f in factors {
            match f {
                FactorSpec::FreePair => d += 1,
                FactorSpec::Finite(g) => finite.push(g),
            }
        }
        Self::new(d, finite)
    }

    /// The free group of rank `d`.
    pub fn free(d: usize) -> Self {
        Self::new(d, Vec::new()).expect("free groups are always valid")
    }

    /// Free product of cyclic groups of the given orders.
    pub fn cyclic_product(orders: &[usize]) -> Result<Self> {
        let finite = orders.iter().map(|&n| FiniteGroup::cyclic(n)).collect::<Result<Vec<_>>>()?;
        Self::new(0, finite)
    }

    pub fn free_rank(&self) -> usize {
        self.free_rank
    }

    pub fn finite_factors(&self) -> &[FiniteGroup] {
        &self.finite
    }

    pub fn factors(&self) -> Vec<FactorSpec> {
        let mut v: Vec<FactorSpec> = (0..self.free_rank).map(|_| FactorSpec::FreePair).collect();
        v.extend(self.finite.iter().cloned().map(FactorSpec::Finite));
        v
    }

    /// `|S|`.
    pub fn alphabet_size(&self) -> usize {
        self.letters.len()
    }

    pub fn generators(&self) -> impl Iterator<Item = Generator> + '_ {
        (0..self.letters.len()).map(Generator::from_index)
    }

    pub fn inverse(&self, g: Generator) -> Generator {
        self.letters[g.index()].inverse
    }

    pub fn factor(&self, g: Generator) -> Factor {
        self.letters[g.index()].factor
    }

    pub fn name(&self, g: Generator) -> &str {
        &self.letters[g.index()].name
    }

    /// Generator for element `k` (nonzero) of finite factor `j`.
    pub fn finite_letter(&self, j: usize, k: usize) -> Option<Generator> {
        if j >= self.finite.len() || k == 0 || k >= self.finite[j].order() {
            return None;
        }
        Some(Generator::from_index(self.finite_base[j] + k - 1))
    }

    /// Generator `a_i` (or its inverse) of free pair `i`.
    pub fn free_letter(&self, i: usize, inverse: bool) -> Option<Generator> {
        (i < self.free_rank).then(|| Generator::from_index(2 * i + inverse as usize))
    }

    /// Whether `h` may follow `g` in a reduced word.
    pub fn in_next(&self, g: Generator, h: Generator) -> bool {
        match self.factor(g) {
            Factor::Free(_) => h != self.inverse(g),
            f @ Factor::Finite(_) => self.factor(h) != f,
        }
    }

    /// `Next(g)`: all letters allowed to follow `g`.
    pub fn next_set(&self, g: Generator) -> Vec<Generator> {
        self.generators().filter(|&h| self.in_next(g, h)).collect()
    }

    /// Product `gh` when both letters lie in the same finite factor and the
    /// product is not the identity.
    pub fn letter_product(&self, g: Generator, h: Generator) -> Option<Generator> {
        match (self.factor(g), self.factor(h)) {
            (Factor::Finite(j), Factor::Finite(k)) if j == k => {
                let e = self.finite[j].mul(self.letters[g.index()].element, self.letters[h.index()].element);
                self.finite_letter(j, e)
            }
            _ => None,
        }
    }

    /// Pairs `(h, h')` of letters with `h h' = g` (only possible inside a
    /// finite factor).
    pub fn factorizations(&self, g: Generator) -> Vec<(Generator, Generator)> {
        let mut out = Vec::new();
        if let Factor::Finite(_) = self.factor(g) {
            for h in self.generators() {
                for h2 in self.generators() {
                    if self.letter_product(h, h2) == Some(g) {
                        out.push((h, h2));
                    }
                }
            }
        }
        out
    }

    /// Right-multiplies a reduced letter sequence by one letter in place.
    pub fn push_letter(&self, w: &mut Vec<Generator>, g: Generator) {
        match w.last().copied() {
            None => w.push(g),
            Some(last) => {
                if self.in_next(last, g) {
                    w.push(g);
                } else if last == self.inverse(g) {
                    w.pop();
                } else {
                    let merged = self
                        .letter_product(last, g)
                        .expect("letters in one finite factor with nontrivial product");
                    *w.last_mut().unwrap() = merged;
                }
            }
        }
    }

    /// Reduces an arbitrary letter sequence to normal form.
    pub fn reduce(&self, letters: &[Generator]) -> Word {
        let mut w = Vec::with_capacity(letters.len());
        for &g in letters {
            self.push_letter(&mut w, g);
        }
        Word(w)
    }

    /// Wraps letters that are already reduced, checking the Next relation.
    pub fn word(&self, letters: Vec<Generator>) -> Result<Word> {
        if let Some(&g) = letters.iter().find(|g| g.index() >= self.alphabet_size()) {
            return Err(Error::InvalidGroup(format!("generator index {} out of range", g.0)));
        }
        for pair in letters.windows(2) {
            if !self.in_next(pair[0], pair[1]) {
                return Err(Error::InvalidGroup(format!(
                    "word is not reduced at {} {}",
                    self.name(pair[0]),
                    self.name(pair[1])
                )));
            }
        }
        Ok(Word(letters))
    }

    pub fn letter_word(&self, g: Generator) -> Word {
        Word(vec![g])
    }

    pub fn multiply(&self, w1: &Word, w2: &Word) -> Word {
        let mut w = w1.0.clone();
        for &g in &w2.0 {
            self.push_letter(&mut w, g);
        }
        Word(w)
    }

    pub fn inverse_word(&self, w: &Word) -> Word {
        Word(w.0.iter().rev().map(|&g| self.inverse(g)).collect())
    }

    /// Prefix of `g·ξ` for boundary points `ξ` starting with `prefix`.
    ///
    /// When `g` cancels the only letter of a length-one prefix the result is
    /// the empty word; the image is then the union of cylinders over
    /// `Next(prefix[0])`, which callers must handle themselves.
    pub fn boundary_prefix_action(&self, g: Generator, prefix: &Word) -> Word {
        let xi1 = prefix.first().expect("cylinder prefix must be nonempty");
        if self.in_next(g, xi1) {
            let mut v = Vec::with_capacity(prefix.len() + 1);
            v.push(g);
            v.extend_from_slice(&prefix.0);
            Word(v)
        } else if g == self.inverse(xi1) {
            Word(prefix.0[1..].to_vec())
        } else {
            let mut v = prefix.0.clone();
            v[0] = self.letter_product(g, xi1).expect("merge inside a finite factor");
            Word(v)
        }
    }

    /// All reduced words of length exactly `n`, in lexicographic order.
    pub fn words_of_length(&self, n: usize) -> Vec<Word> {
        let mut layer = vec![Vec::<Generator>::new()];
        for _ in 0..n {
            let mut next = Vec::new();
            for w in &layer {
                for g in self.generators() {
                    if w.last().map_or(true, |&l| self.in_next(l, g)) {
                        let mut v = w.clone();
                        v.push(g);
                        next.push(v);
                    }
                }
            }
            layer = next;
        }
        layer.into_iter().map(Word).collect()
    }

    /// The ball of radius `n` by breadth-first closure under right
    /// multiplication by letters.
    pub fn ball(&self, n: usize) -> Vec<Word> {
        let mut seen: HashSet<Word> = HashSet::new();
        let mut out = vec![Word::identity()];
        seen.insert(Word::identity());
        let mut frontier = vec![Word::identity()];
        for _ in 0..n {
            let mut next = Vec::new();
            for w in &frontier {
                for g in self.generators() {
                    let x = self.multiply(w, &self.letter_word(g));
                    if seen.insert(x.clone()) {
                        next.push(x.clone());
                        out.push(x);
                    }
                }
            }
            frontier = next;
        }
        out
    }

    /// False for the finite and the two amenable infinite cases
    /// (`Z` and `Z/2 * Z/2`), where boundary theory does not apply.
    pub fn is_nonamenable(&self) -> bool {
        let d = self.free_rank;
        let m = self.finite.len();
        match (d, m) {
            (0, 0) | (0, 1) | (1, 0) => false,
            (0, 2) => !(self.finite[0].order() == 2 && self.finite[1].order() == 2),
            _ => true,
        }
    }

    /// Free in the extended sense: every finite factor has order 2.
    pub fn is_free_extended(&self) -> bool {
        self.finite.iter().all(|f| f.order() == 2)
    }

    pub fn parse_generator(&self, s: &str) -> Result<Generator> {
        self.letters
            .iter()
            .position(|l| l.name == s)
            .map(Generator::from_index)
            .ok_or_else(|| Error::Parse(format!("unknown generator '{s}'")))
    }

    /// Parses space-separated generator names; `e` or the empty string is the
    /// identity. The result is reduced.
    pub fn parse_word(&self, s: &str) -> Result<Word> {
        let s = s.trim();
        if s.is_empty() || s == "e" {
            return Ok(Word::identity());
        }
        let letters = s.split_whitespace().map(|t| self.parse_generator(t)).collect::<Result<Vec<_>>>()?;
        Ok(self.reduce(&letters))
    }

    pub fn format_word(&self, w: &Word) -> String {
        if w.is_empty() {
            return "e".to_string();
        }
        w.0.iter().map(|&g| self.name(g)).collect::<Vec<_>>().join(" ")
    }

    pub fn display<'a>(&'a self, w: &'a Word) -> WordDisplay<'a> {
        WordDisplay { group: self, word: w }
    }
}

pub struct WordDisplay<'a> {
    group: &'a PlainGroup,
    word: &'a Word,
}

impl fmt::Display for WordDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.group.format_word(self.word))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> PlainGroup {
        PlainGroup::free(2)
    }

    fn w(g: &PlainGroup, s: &str) -> Word {
        g.parse_word(s).unwrap()
    }

    #[test]
    fn next_set_free_letter() {
        let g = f2();
        let a = g.parse_generator("a1").unwrap();
        let names: Vec<_> = g.next_set(a).into_iter().map(|x| g.name(x).to_string()).collect();
        assert_eq!(names, ["a1", "a2", "a2'"]);
        for x in g.generators() {
            assert_eq!(g.next_set(x).len(), g.alphabet_size() - 1);
        }
    }

    #[test]
    fn next_set_finite_letter() {
        let g = PlainGroup::cyclic_product(&[3, 3]).unwrap();
        let t = g.parse_generator("G1.1").unwrap();
        let names: Vec<_> = g.next_set(t).into_iter().map(|x| g.name(x).to_string()).collect();
        assert_eq!(names, ["G2.1", "G2.2"]);
    }

    #[test]
    fn multiply_examples() {
        let g = f2();
        assert!(g.multiply(&w(&g, "a1"), &w(&g, "a1'")).is_empty());
        let p = g.multiply(&w(&g, "a1 a2"), &w(&g, "a2' a1"));
        assert_eq!(g.format_word(&p), "a1 a1");
        let z = PlainGroup::cyclic_product(&[3, 3]).unwrap();
        let t2 = z.multiply(&w(&z, "G1.1"), &w(&z, "G1.1"));
        assert_eq!(z.format_word(&t2), "G1.2");
        assert!(z.multiply(&t2, &w(&z, "G1.1")).is_empty());
    }

    #[test]
    fn inverse_examples() {
        let g = f2();
        assert!(g.inverse_word(&Word::identity()).is_empty());
        assert_eq!(g.format_word(&g.inverse_word(&w(&g, "a1 a2"))), "a2' a1'");
    }

    #[test]
    fn boundary_action_cases() {
        let g = f2();
        let b = g.parse_generator("a2").unwrap();
        let a_inv = g.parse_generator("a1'").unwrap();
        let xi = w(&g, "a1 a2");
        assert_eq!(g.format_word(&g.boundary_prefix_action(b, &xi)), "a2 a1 a2");
        assert_eq!(g.format_word(&g.boundary_prefix_action(a_inv, &xi)), "a2");
        let z = PlainGroup::cyclic_product(&[3, 3]).unwrap();
        let t = z.parse_generator("G1.1").unwrap();
        assert_eq!(z.format_word(&z.boundary_prefix_action(t, &w(&z, "G1.1 G2.1"))), "G1.2 G2.1");
    }

    #[test]
    fn bad_tables_rejected() {
        assert!(FiniteGroup::from_table(vec![vec![0, 1], vec![1, 1]]).is_err());
        assert!(FiniteGroup::from_table(vec![vec![1, 0], vec![0, 1]]).is_err());
        // identity and inverses fine but not associative
        let t = vec![
            vec![0, 1, 2, 3, 4],
            vec![1, 0, 3, 4, 2],
            vec![2, 4, 0, 1, 3],
            vec![3, 2, 4, 0, 1],
            vec![4, 3, 1, 2, 0],
        ];
        assert!(FiniteGroup::from_table(t).is_err());
        assert!(FiniteGroup::cyclic(4).is_ok());
    }

    #[test]
    fn amenable_cases_flagged() {
        assert!(!PlainGroup::free(1).is_nonamenable());
        assert!(!PlainGroup::cyclic_product(&[2, 2]).unwrap().is_nonamenable());
        assert!(PlainGroup::cyclic_product(&[2, 3]).unwrap().is_nonamenable());
        assert!(PlainGroup::free(2).is_nonamenable());
        assert!(PlainGroup::cyclic_product(&[2, 2, 2]).unwrap().is_free_extended());
    }

    #[test]
    fn ball_sizes() {
        let g = f2();
        // 1 + 4 + 12 + 36
        assert_eq!(g.ball(3).len(), 53);
        assert_eq!(g.words_of_length(3).len(), 36);
    }
}
