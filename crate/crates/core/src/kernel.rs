//! Scalar and colored walk kernels, their validation, and the color chain.
//!
//! A colored kernel assigns an `r x r` nonnegative matrix `p_g` to every
//! letter `g` (and optionally to the identity). From `(x, u)` the walk moves
//! to `(x g, v)` with probability `p_g(u, v)`.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::Rng;

use crate::error::{Error, Result};
use crate::group::{Generator, PlainGroup, Word};
use crate::linalg::{self, Mat, Vector};

/// Tolerance on row sums of the color chain.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// A finitely supported probability measure on the group.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarWalk {
    entries: Vec<(Word, f64)>,
}

impl ScalarWalk {
    /// Merges duplicate words, drops zero weights and checks the total mass.
    pub fn new(entries: Vec<(Word, f64)>) -> Result<Self> {
        let mut merged: BTreeMap<Word, f64> = BTreeMap::new();
        for (w, p) in entries {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidWalk(format!("bad probability {p}")));
            }
            *merged.entry(w).or_insert(0.0) += p;
        }
        let mut entries: Vec<(Word, f64)> = merged.into_iter().filter(|(_, p)| *p > 0.0).collect();
        entries.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
        if entries.is_empty() {
            return Err(Error::InvalidWalk("empty support".into()));
        }
        let total: f64 = entries.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidWalk(format!("probabilities sum to {total}")));
        }
        Ok(ScalarWalk { entries })
    }

    /// Entries sorted by length, then by letters.
    pub fn entries(&self) -> &[(Word, f64)] {
        &self.entries
    }

    pub fn prob(&self, w: &Word) -> f64 {
        self.entries.iter().find(|(x, _)| x == w).map_or(0.0, |e| e.1)
    }

    pub fn identity_mass(&self) -> f64 {
        self.prob(&Word::identity())
    }

    /// `ℓ_K`, the longest word in the support.
    pub fn max_len(&self) -> usize {
        self.entries.iter().map(|e| e.0.len()).max().unwrap_or(0)
    }

    pub fn support_size(&self) -> usize {
        self.entries.len()
    }

    pub fn is_nearest_neighbor(&self) -> bool {
        self.max_len() <= 1
    }

    /// `E|X_1| = Σ p_g |g|`.
    pub fn mean_length(&self) -> f64 {
        self.entries.iter().map(|(w, p)| p * w.len() as f64).sum()
    }

    pub fn is_symmetric(&self, group: &PlainGroup, tol: f64) -> bool {
        self.entries
            .iter()
            .all(|(w, p)| (self.prob(&group.inverse_word(w)) - p).abs() <= tol)
    }

    pub fn generates(&self, group: &PlainGroup) -> bool {
        let words: Vec<Word> = self.entries.iter().map(|e| e.0.clone()).collect();
        support_generates(group, &words)
    }

    /// The same walk as a colored kernel with one color. Only nearest-neighbor
    /// walks have such a form.
    pub fn to_kernel(&self, group: &PlainGroup) -> Result<ColoredKernel> {
        if !self.is_nearest_neighbor() {
            return Err(Error::Precondition("walk is not nearest-neighbor; linearize it first".into()));
        }
        let mut steps = vec![linalg::zeros(1); group.alphabet_size()];
        let mut identity = linalg::zeros(1);
        for (w, p) in &self.entries {
            match w.first() {
                None => identity[(0, 0)] += p,
                Some(g) => steps[g.index()][(0, 0)] += p,
            }
        }
        ColoredKernel::new(group, 1, identity, steps)
    }
}

/// Whether the subgroup generated by `words` contains every letter.
///
/// Products are closed under right multiplication by the generating words and
/// their inverses, keeping elements up to twice the longest word, for at most
/// `|S|` rounds. For letter supports the answer is exact.
pub fn support_generates(group: &PlainGroup, words: &[Word]) -> bool {
    let mut gens: Vec<Word> = Vec::new();
    for w in words.iter().filter(|w| !w.is_empty()) {
        gens.push(w.clone());
        gens.push(group.inverse_word(w));
    }
    if gens.is_empty() {
        return group.alphabet_size() == 0;
    }
    let cap = gens.iter().map(Word::len).max().unwrap_or(1).max(1) * 2;
    let mut reached: HashSet<Word> = gens.iter().cloned().collect();
    let mut frontier: Vec<Word> = reached.iter().cloned().collect();
    let all_letters = |reached: &HashSet<Word>| group.generators().all(|g| reached.contains(&group.letter_word(g)));
    for _ in 0..group.alphabet_size().max(1) {
        if all_letters(&reached) {
            return true;
        }
        let mut next = Vec::new();
        for x in &frontier {
            for y in &gens {
                let z = group.multiply(x, y);
                if z.len() <= cap && reached.insert(z.clone()) {
                    next.push(z);
                }
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    all_letters(&reached)
}

/// A nearest-neighbor colored kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct ColoredKernel {
    r: usize,
    identity: Mat,
    steps: Vec<Mat>,
}

impl ColoredKernel {
    /// `steps[g]` is `p_g`; entries must be finite and nonnegative.
    pub fn new(group: &PlainGroup, r: usize, identity: Mat, steps: Vec<Mat>) -> Result<Self> {
        if r == 0 {
            return Err(Error::InvalidWalk("color count must be positive".into()));
        }
        if steps.len() != group.alphabet_size() {
            return Err(Error::InvalidWalk(format!(
                "expected {} step matrices, got {}",
                group.alphabet_size(),
                steps.len()
            )));
        }
        for m in steps.iter().chain(std::iter::once(&identity)) {
            if m.nrows() != r || m.ncols() != r {
                return Err(Error::InvalidWalk(format!("matrix is not {r}x{r}")));
            }
            if m.iter().any(|x| !x.is_finite() || *x < 0.0) {
                return Err(Error::InvalidWalk("matrix entries must be finite and nonnegative".into()));
            }
        }
        Ok(ColoredKernel { r, identity, steps })
    }

    pub fn colors(&self) -> usize {
        self.r
    }

    pub fn p(&self, g: Generator) -> &Mat {
        &self.steps[g.index()]
    }

    pub fn identity(&self) -> &Mat {
        &self.identity
    }

    pub fn steps(&self) -> &[Mat] {
        &self.steps
    }

    pub fn has_identity_mass(&self) -> bool {
        !linalg::is_zero(&self.identity)
    }

    /// Letters with a nonzero matrix.
    pub fn support(&self) -> Vec<Generator> {
        (0..self.steps.len())
            .filter(|&i| !linalg::is_zero(&self.steps[i]))
            .map(Generator::from_index)
            .collect()
    }

    /// The color chain `P = p_e + Σ_g p_g`.
    pub fn color_matrix(&self) -> Mat {
        self.steps.iter().fold(self.identity.clone(), |acc, m| acc + m)
    }

    pub fn validate(&self, group: &PlainGroup) -> ValidationReport {
        let p = self.color_matrix();
        let residual = linalg::row_sums(&p).iter().fold(0.0f64, |a, s| a.max((s - 1.0).abs()));
        let letters: Vec<Word> = self.support().into_iter().map(|g| group.letter_word(g)).collect();
        ValidationReport {
            colors: self.r,
            stochastic_residual: residual,
            stochastic: residual <= STOCHASTIC_TOL,
            irreducible: is_irreducible(&p),
            generates: support_generates(group, &letters),
            identity_mass: self.identity.iter().sum::<f64>() / self.r as f64,
        }
    }

    pub fn summary(&self) -> Result<ColorChainSummary> {
        let p = self.color_matrix();
        let pi = stationary_pi(&p)?;
        Ok(ColorChainSummary { p, pi })
    }
}

/// Outcome of kernel validation; failures are flags, not errors.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct ValidationReport {
    pub colors: usize,
    pub stochastic_residual: f64,
    pub stochastic: bool,
    pub irreducible: bool,
    pub generates: bool,
    /// Average row mass at the identity element.
    pub identity_mass: f64,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.stochastic && self.irreducible && self.generates
    }
}

/// The color chain and its invariant law.
#[derive(Clone, Debug)]
pub struct ColorChainSummary {
    pub p: Mat,
    pub pi: Vector,
}

/// Strong connectivity of the graph `u -> v` when `P(u, v) > 0`.
pub fn is_irreducible(p: &Mat) -> bool {
    let r = p.nrows();
    let reach = |forward: bool| {
        let mut seen = vec![false; r];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(u) = queue.pop_front() {
            for v in 0..r {
                let w = if forward { p[(u, v)] } else { p[(v, u)] };
                if w > 0.0 && !seen[v] {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    r > 0 && reach(true) && reach(false)
}

/// Invariant probability of an irreducible stochastic matrix.
pub fn stationary_pi(p: &Mat) -> Result<Vector> {
    let r = p.nrows();
    if !is_irreducible(p) {
        return Err(Error::NotIrreducible);
    }
    let residual = |pi: &Vector| (pi.transpose() * p - pi.transpose()).amax();
    let mut a = p.transpose() - Mat::identity(r, r);
    for j in 0..r {
        a[(r - 1, j)] = 1.0;
    }
    let mut b = Mat::zeros(r, 1);
    b[(r - 1, 0)] = 1.0;
    if let Ok(x) = linalg::solve(&a, &b) {
        let pi = x.column(0).into_owned();
        if residual(&pi) <= 1e-12 && pi.iter().all(|&x| x > 0.0) {
            return Ok(pi);
        }
    }
    // power iteration on the lazy chain, which is aperiodic
    let lazy = (p + Mat::identity(r, r)) * 0.5;
    let mut pi = Vector::from_element(r, 1.0 / r as f64);
    for _ in 0..1_000_000 {
        let next = (pi.transpose() * &lazy).transpose();
        let delta = (&next - &pi).amax();
        pi = next;
        if delta < 1e-16 {
            break;
        }
    }
    pi /= pi.sum();
    if residual(&pi) > 1e-12 {
        return Err(Error::Numerical(format!("stationary law residual {:e}", residual(&pi))));
    }
    Ok(pi)
}

/// Largest violation of `π(u) p_g(u,v) = π(v) p_{g^{-1}}(v,u)`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
pub struct ReversibilityReport {
    pub max_violation: f64,
    pub reversible: bool,
}

pub fn check_reversible(group: &PlainGroup, kernel: &ColoredKernel) -> Result<ReversibilityReport> {
    let pi = kernel.summary()?.pi;
    let r = kernel.colors();
    let mut worst = 0.0f64;
    let mut check = |a: &Mat, b: &Mat| {
        for u in 0..r {
            for v in 0..r {
                worst = worst.max((pi[u] * a[(u, v)] - pi[v] * b[(v, u)]).abs());
            }
        }
    };
    check(kernel.identity(), kernel.identity());
    for g in group.generators() {
        check(kernel.p(g), kernel.p(group.inverse(g)));
    }
    Ok(ReversibilityReport { max_violation: worst, reversible: worst <= 1e-12 })
}

/// Precomputed cumulative tables for sampling colored steps.
#[derive(Clone, Debug)]
pub struct KernelSampler {
    rows: Vec<Vec<(Option<Generator>, usize)>>,
    cumulative: Vec<Vec<f64>>,
}

impl KernelSampler {
    pub fn new(kernel: &ColoredKernel) -> Self {
        let r = kernel.colors();
        let mut rows = vec![Vec::new(); r];
        let mut cumulative = vec![Vec::new(); r];
        for u in 0..r {
            let mut acc = 0.0;
            let mut push = |g: Option<Generator>, m: &Mat| {
                for v in 0..r {
                    if m[(u, v)] > 0.0 {
                        acc += m[(u, v)];
                        rows[u].push((g, v));
                        cumulative[u].push(acc);
                    }
                }
            };
            push(None, kernel.identity());
            for (i, m) in kernel.steps().iter().enumerate() {
                push(Some(Generator::from_index(i)), m);
            }
        }
        KernelSampler { rows, cumulative }
    }

    /// Draws `(g, v)` from row `u`; `None` stands for the identity.
    pub fn draw<R: Rng + ?Sized>(&self, u: usize, rng: &mut R) -> (Option<Generator>, usize) {
        let cum = &self.cumulative[u];
        let x = rng.gen::<f64>() * cum[cum.len() - 1];
        let i = cum.partition_point(|&c| c <= x).min(cum.len() - 1);
        self.rows[u][i]
    }

    /// One transition applied in place to a reduced position and a color.
    pub fn advance<R: Rng + ?Sized>(&self, group: &PlainGroup, pos: &mut Vec<Generator>, color: &mut usize, rng: &mut R) -> Option<Generator> {
        let (g, v) = self.draw(*color, rng);
        if let Some(g) = g {
            group.push_letter(pos, g);
        }
        *color = v;
        g
    }
}

/// One transition of the colored walk from `state`.
pub fn step<R: Rng + ?Sized>(group: &PlainGroup, sampler: &KernelSampler, state: (Word, usize), rng: &mut R) -> (Word, usize) {
    let (w, mut color) = state;
    let mut pos = w.into_letters();
    sampler.advance(group, &mut pos, &mut color, rng);
    (group.reduce(&pos), color)
}

/// Sampler for the steps of a scalar walk.
#[derive(Clone, Debug)]
pub struct ScalarSampler {
    words: Vec<Vec<Generator>>,
    cumulative: Vec<f64>,
}

impl ScalarSampler {
    pub fn new(walk: &ScalarWalk) -> Self {
        let mut acc = 0.0;
        let mut words = Vec::new();
        let mut cumulative = Vec::new();
        for (w, p) in walk.entries() {
            acc += p;
            words.push(w.letters().to_vec());
            cumulative.push(acc);
        }
        ScalarSampler { words, cumulative }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> &[Generator] {
        let x = rng.gen::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let i = self.cumulative.partition_point(|&c| c <= x).min(self.words.len() - 1);
        &self.words[i]
    }

    pub fn advance<R: Rng + ?Sized>(&self, group: &PlainGroup, pos: &mut Vec<Generator>, rng: &mut R) {
        for &g in self.draw(rng) {
            group.push_letter(pos, g);
        }
    }
}
