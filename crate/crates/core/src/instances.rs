//! Standard and randomly generated walks used by the presets and the tests.

use rand::Rng;

use crate::error::{Error, Result};
use crate::group::{Generator, PlainGroup, Word};
use crate::kernel::{ColoredKernel, ScalarWalk};
use crate::linalg::{self, Mat};

/// Uniform measure on the alphabet.
pub fn uniform_nearest_neighbor(group: &PlainGroup) -> ScalarWalk {
    let p = 1.0 / group.alphabet_size() as f64;
    ScalarWalk::new(group.generators().map(|g| (group.letter_word(g), p)).collect()).expect("uniform measure is valid")
}

/// Random walk on the reduced words of length `1..=max_len`, with mass `pe`
/// at the identity. Every letter is in the support so the walk generates;
/// longer words are kept independently with probability `density`. With
/// `symmetric`, `p_g = p_{g^{-1}}`.
pub fn random_walk<R: Rng + ?Sized>(group: &PlainGroup, max_len: usize, pe: f64, density: f64, symmetric: bool, rng: &mut R) -> ScalarWalk {
    let mut chosen: Vec<(Word, f64)> = Vec::new();
    let push = |w: Word, weight: f64, chosen: &mut Vec<(Word, f64)>| {
        if symmetric {
            let inv = group.inverse_word(&w);
            if inv < w {
                return;
            }
            if inv != w {
                chosen.push((inv, weight));
            }
        }
        chosen.push((w, weight));
    };
    for len in 1..=max_len {
        for w in group.words_of_length(len) {
            if len == 1 || rng.gen::<f64>() < density {
                let weight = rng.gen_range(0.1..1.0);
                push(w, weight, &mut chosen);
            }
        }
    }
    let total: f64 = chosen.iter().map(|e| e.1).sum();
    let mut entries: Vec<(Word, f64)> = chosen.into_iter().map(|(w, x)| (w, (1.0 - pe) * x / total)).collect();
    if pe > 0.0 {
        entries.push((Word::identity(), pe));
    }
    renormalize(entries)
}

/// Rescales so the weights sum to one exactly up to rounding.
fn renormalize(mut entries: Vec<(Word, f64)>) -> ScalarWalk {
    let total: f64 = entries.iter().map(|e| e.1).sum();
    for e in entries.iter_mut() {
        e.1 /= total;
    }
    ScalarWalk::new(entries).expect("normalized weights")
}

/// Colored kernel with every `p_g` entrywise positive, so each `p_g` is
/// invertible with probability one. Rows of `P` are normalized to one.
pub fn random_dense_kernel<R: Rng + ?Sized>(group: &PlainGroup, r: usize, rng: &mut R) -> ColoredKernel {
    let mut steps: Vec<Mat> = group
        .generators()
        .map(|_| Mat::from_fn(r, r, |_, _| rng.gen_range(0.05..1.0)))
        .collect();
    let total = steps.iter().fold(linalg::zeros(r), |acc, m| acc + m);
    let sums = linalg::row_sums(&total);
    for m in steps.iter_mut() {
        for u in 0..r {
            m.row_mut(u).scale_mut(1.0 / sums[u]);
        }
    }
    ColoredKernel::new(group, r, linalg::zeros(r), steps).expect("positive kernel")
}

/// Parameters of the two-factor walk: mass `p_i(n)` on the words of length
/// `n` whose first letter lies in factor `i`, spread uniformly.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoFactorProfile {
    /// Number of nonidentity elements in each factor.
    pub k: [usize; 2],
    /// `p[i][n-1]` is the mass of length `n` words starting in factor `i`.
    pub p: [Vec<f64>; 2],
}

impl TwoFactorProfile {
    pub fn max_len(&self) -> usize {
        self.p[0].len().max(self.p[1].len())
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.iter().any(|&k| k < 1) || (self.k == [1, 1]) {
            return Err(Error::InvalidWalk("factors must be nontrivial and not both of order 2".into()));
        }
        let all = self.p.iter().flatten();
        if all.clone().any(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidWalk("profile masses must be nonnegative".into()));
        }
        let total: f64 = all.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWalk(format!("profile sums to {total}")));
        }
        if self.p.iter().any(|v| v.first().map_or(true, |&x| x <= 0.0)) {
            return Err(Error::InvalidWalk("both factors need mass on single letters".into()));
        }
        Ok(())
    }

    /// `E|X_1| = Σ_n n (p_1(n) + p_2(n))`.
    pub fn mean_length(&self) -> f64 {
        self.p.iter().map(|v| v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x).sum::<f64>()).sum()
    }

    /// A reference profile decreasing in `n`, asymmetric between factors.
    pub fn reference(max_len: usize, k1: usize, k2: usize) -> Self {
        let raw1: Vec<f64> = (1..=max_len).map(|n| 3.0 / (n as f64 + 1.0)).collect();
        let raw2: Vec<f64> = (1..=max_len).map(|n| 2.0 / (n as f64 * n as f64)).collect();
        let total: f64 = raw1.iter().chain(&raw2).sum();
        TwoFactorProfile {
            k: [k1, k2],
            p: [raw1.iter().map(|x| x / total).collect(), raw2.iter().map(|x| x / total).collect()],
        }
    }

    /// The group `Z/(k1+1) * Z/(k2+1)` and the walk on it.
    pub fn build(&self) -> Result<(PlainGroup, ScalarWalk)> {
        self.validate()?;
        let group = PlainGroup::cyclic_product(&[self.k[0] + 1, self.k[1] + 1])?;
        let mut entries = Vec::new();
        for len in 1..=self.max_len() {
            for w in group.words_of_length(len) {
                let first = factor_index(&group, w.first().unwrap());
                let mass = self.p[first].get(len - 1).copied().unwrap_or(0.0);
                if mass == 0.0 {
                    continue;
                }
                // alternating factors: k_{i1} k_{i2} ... choices
                let count: f64 = (0..len).map(|j| self.k[(first + j) % 2] as f64).product();
                entries.push((w, mass / count));
            }
        }
        Ok((group, ScalarWalk::new(entries)?))
    }
}

fn factor_index(group: &PlainGroup, g: Generator) -> usize {
    match group.factor(g) {
        crate::group::Factor::Finite(j) => j,
        crate::group::Factor::Free(i) => i,
    }
}

/// The walk behind the drift and entropy curves: twelve random words of
/// lengths 1 to 3 on `F_2`, containing every letter, with random weights.
pub fn curve_walk<R: Rng + ?Sized>(rng: &mut R) -> (PlainGroup, ScalarWalk) {
    let group = PlainGroup::free(2);
    let mut words: Vec<Word> = group.generators().map(|g| group.letter_word(g)).collect();
    let mut pool: Vec<Word> = group.words_of_length(2);
    pool.extend(group.words_of_length(3));
    while words.len() < 12 {
        let i = rng.gen_range(0..pool.len());
        let w = pool.swap_remove(i);
        words.push(w);
    }
    let entries = words.into_iter().map(|w| (w, rng.gen_range(0.1..1.0))).collect();
    (group.clone(), renormalize(entries))
}
