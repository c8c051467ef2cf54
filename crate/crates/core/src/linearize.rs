//! Turning a finite-range walk into a nearest-neighbor colored walk.
//!
//! Two constructions are provided. The prefix construction shares colors
//! between words with a common prefix; the original walk is recovered at the
//! successive returns to the neutral color. The reversible construction
//! replaces each word `g` by a path of `|g| - 1` colors walked like a
//! gambler's ruin, shared between `g` and `g^{-1}`, so that a symmetric walk
//! yields a reversible colored walk.
//!
//! [`verify_first_return`] computes the law of the walk at its first renewal
//! exactly, by solving the absorbing chain on the finite set of
//! (position, color) states visited before it.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{Generator, PlainGroup, Word};
use crate::kernel::{ColoredKernel, ScalarWalk};
use crate::linalg::{self, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Construction {
    General,
    Reversible,
}

/// What a color stands for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ColorLabel {
    Neutral,
    /// A strict prefix already walked (prefix construction).
    Prefix(Word),
    /// Interior point `index` (1 based) on the segment of `word`.
    Segment { word: Word, index: usize },
}

impl ColorLabel {
    pub fn describe(&self, group: &PlainGroup) -> String {
        match self {
            ColorLabel::Neutral => "neutral".into(),
            ColorLabel::Prefix(w) => format!("prefix {}", group.format_word(w)),
            ColorLabel::Segment { word, index } => format!("segment {} #{index}", group.format_word(word)),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PrefixNode {
    pub word: Word,
    /// `p_[w]`: mass of the words having `w` as a strict prefix.
    pub mass: f64,
    /// `p_[w] / p_[parent]`.
    pub ratio: f64,
}

/// Strict prefixes of the support, ordered by length then letters.
#[derive(Clone, Debug)]
pub struct PrefixTree {
    nodes: Vec<PrefixNode>,
    index: HashMap<Word, usize>,
}

impl PrefixTree {
    pub fn build(walk: &ScalarWalk) -> Self {
        let mut mass: HashMap<Word, f64> = HashMap::new();
        for (g, p) in walk.entries() {
            for k in 1..g.len() {
                *mass.entry(g.prefix(k)).or_insert(0.0) += p;
            }
        }
        let mut words: Vec<Word> = mass.keys().cloned().collect();
        words.sort_by(|a, b| (a.len(), a).cmp(&(b.len(), b)));
        let nodes: Vec<PrefixNode> = words
            .into_iter()
            .map(|w| {
                let m = mass[&w];
                let parent = if w.len() == 1 { 1.0 } else { mass[&w.prefix(w.len() - 1)] };
                PrefixNode { ratio: m / parent, mass: m, word: w }
            })
            .collect();
        let index = nodes.iter().enumerate().map(|(i, n)| (n.word.clone(), i)).collect();
        PrefixTree { nodes, index }
    }

    pub fn nodes(&self) -> &[PrefixNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `r_k` for `k = 1..=ℓ_K - 1`.
    pub fn counts_by_length(&self) -> Vec<usize> {
        let max = self.nodes.iter().map(|n| n.word.len()).max().unwrap_or(0);
        (1..=max).map(|k| self.nodes.iter().filter(|n| n.word.len() == k).count()).collect()
    }

    /// Mass of `w`, with the empty word having mass 1.
    fn mass(&self, w: &Word) -> f64 {
        if w.is_empty() {
            1.0
        } else {
            self.nodes[self.index[w]].mass
        }
    }

    fn color(&self, w: &Word) -> usize {
        if w.is_empty() {
            0
        } else {
            1 + self.index[w]
        }
    }
}

/// Alternative color counts for the prefix construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ColorCounts {
    /// Colors actually used.
    pub colors: usize,
    /// `1 + Σ_g (|g| - 1)`, one color per intermediate step of every word.
    pub initial: usize,
    /// `1 + |prefixes of K| - |K|`, counting nonempty prefixes including the
    /// words themselves. Equal to `colors` when no word of `K` is a strict
    /// prefix of another.
    pub prefix_closure: usize,
    /// The same count with suffixes in place of prefixes.
    pub suffix_closure: usize,
}

pub fn color_counts(walk: &ScalarWalk) -> ColorCounts {
    let words: Vec<&Word> = walk.entries().iter().map(|e| &e.0).filter(|w| !w.is_empty()).collect();
    let mut prefixes = BTreeSet::new();
    let mut suffixes = BTreeSet::new();
    for w in &words {
        for k in 1..=w.len() {
            prefixes.insert(w.letters()[..k].to_vec());
            suffixes.insert(w.letters()[w.len() - k..].to_vec());
        }
    }
    ColorCounts {
        colors: 1 + PrefixTree::build(walk).len(),
        initial: 1 + words.iter().map(|w| w.len() - 1).sum::<usize>(),
        prefix_closure: 1 + prefixes.len() - words.len(),
        suffix_closure: 1 + suffixes.len() - words.len(),
    }
}

#[derive(Clone, Debug)]
pub struct LinearizationResult {
    pub kernel: ColoredKernel,
    /// Color 0 is neutral.
    pub labels: Vec<ColorLabel>,
    pub expected_tau: f64,
    pub construction: Construction,
}

fn check_support(group: &PlainGroup, walk: &ScalarWalk) -> Result<()> {
    if !walk.generates(group) {
        return Err(Error::InvalidWalk("support does not generate the group".into()));
    }
    Ok(())
}

/// Prefix-sharing construction.
pub fn linearize_prefix(group: &PlainGroup, walk: &ScalarWalk) -> Result<LinearizationResult> {
    check_support(group, walk)?;
    let tree = PrefixTree::build(walk);
    let r = 1 + tree.len();
    let mut steps = vec![linalg::zeros(r); group.alphabet_size()];
    let mut identity = linalg::zeros(r);
    identity[(0, 0)] = walk.identity_mass();
    for node in tree.nodes() {
        let parent = node.word.prefix(node.word.len() - 1);
        let c = node.word.last().unwrap();
        steps[c.index()][(tree.color(&parent), tree.color(&node.word))] = node.ratio;
    }
    for (g, p) in walk.entries() {
        if let Some(c) = g.last() {
            let w = g.prefix(g.len() - 1);
            steps[c.index()][(tree.color(&w), 0)] += p / tree.mass(&w);
        }
    }
    let mut labels = vec![ColorLabel::Neutral];
    labels.extend(tree.nodes().iter().map(|n| ColorLabel::Prefix(n.word.clone())));
    let kernel = ColoredKernel::new(group, r, identity, steps)?;
    Ok(LinearizationResult {
        kernel,
        labels,
        expected_tau: expected_tau(Construction::General, walk),
        construction: Construction::General,
    })
}

/// Entry weights `α_g` of the reversible construction, with `α_e = p_e`.
pub fn reversible_weights(walk: &ScalarWalk) -> Vec<(Word, f64)> {
    let pe = walk.identity_mass();
    let m = walk.mean_length();
    walk.entries()
        .iter()
        .map(|(g, p)| {
            let a = if g.is_empty() { pe } else { (1.0 - pe) * g.len() as f64 * p / m };
            (g.clone(), a)
        })
        .collect()
}

/// Construction preserving reversibility; requires `p_g = p_{g^{-1}}`.
///
/// A self-inverse word has a single segment entered from both ends, so each
/// entry carries half its weight.
pub fn linearize_reversible(group: &PlainGroup, walk: &ScalarWalk) -> Result<LinearizationResult> {
    if !walk.is_symmetric(group, 1e-12) {
        return Err(Error::InvalidWalk("reversible construction needs a symmetric walk".into()));
    }
    check_support(group, walk)?;
    let weights = reversible_weights(walk);
    let mut labels = vec![ColorLabel::Neutral];
    // first color of each canonical segment
    let mut segment_start: HashMap<Word, usize> = HashMap::new();
    for (g, _) in &weights {
        if g.len() < 2 {
            continue;
        }
        let inv = group.inverse_word(g);
        let canon = if *g <= inv { g.clone() } else { inv };
        if !segment_start.contains_key(&canon) {
            segment_start.insert(canon.clone(), labels.len());
            for k in 1..canon.len() {
                labels.push(ColorLabel::Segment { word: canon.clone(), index: k });
            }
        }
    }
    let r = labels.len();
    let mut steps = vec![linalg::zeros(r); group.alphabet_size()];
    let mut identity = linalg::zeros(r);
    for (g, alpha) in &weights {
        match g.len() {
            0 => identity[(0, 0)] += alpha,
            1 => steps[g.first().unwrap().index()][(0, 0)] += alpha,
            _ => {
                let inv = group.inverse_word(g);
                let self_inverse = *g == inv;
                let letters = g.letters();
                let k = letters.len();
                // color of interior point j (1..k-1) along g
                let color = |j: usize| {
                    if *g <= inv {
                        segment_start[g] + j - 1
                    } else {
                        segment_start[&inv] + (k - j) - 1
                    }
                };
                if self_inverse {
                    steps[letters[0].index()][(0, color(1))] += alpha / 2.0;
                    steps[group.inverse(letters[k - 1]).index()][(0, color(k - 1))] += alpha / 2.0;
                } else {
                    steps[letters[0].index()][(0, color(1))] += alpha;
                }
                // interior moves are set once per segment, from the canonical word
                if *g <= inv {
                    for j in 1..k {
                        let forward = if j + 1 < k { color(j + 1) } else { 0 };
                        let backward = if j > 1 { color(j - 1) } else { 0 };
                        steps[letters[j].index()][(color(j), forward)] += 0.5;
                        steps[group.inverse(letters[j - 1]).index()][(color(j), backward)] += 0.5;
                    }
                }
            }
        }
    }
    let kernel = ColoredKernel::new(group, r, identity, steps)?;
    Ok(LinearizationResult {
        kernel,
        labels,
        expected_tau: expected_tau(Construction::Reversible, walk),
        construction: Construction::Reversible,
    })
}

/// Expected first renewal time.
///
/// General: `p_e + Σ p_g |g|`. Reversible: `Σ p_g |g|^2 + p_e m / (1 - p_e)`
/// with `m = Σ p_g |g|`, which is `Σ p_g |g|^2` when `p_e = 0`.
pub fn expected_tau(construction: Construction, walk: &ScalarWalk) -> f64 {
    let pe = walk.identity_mass();
    let m = walk.mean_length();
    match construction {
        Construction::General => pe + m,
        Construction::Reversible => {
            let m2: f64 = walk.entries().iter().map(|(g, p)| p * (g.len() * g.len()) as f64).sum();
            m2 + pe * m / (1.0 - pe)
        }
    }
}

/// Exact law of the walk at its first renewal.
#[derive(Clone, Debug)]
pub struct FirstReturn {
    pub law: Vec<(Word, f64)>,
    pub expected_tau: f64,
    /// `max_g |P[Y_τ = g] - p_g|`.
    pub law_error: f64,
    /// `|E[τ] - expected_tau|` against the closed form.
    pub tau_error: f64,
    pub transient_states: usize,
}

const MAX_TRANSIENT: usize = 200_000;

pub fn verify_first_return(group: &PlainGroup, result: &LinearizationResult, walk: &ScalarWalk) -> Result<FirstReturn> {
    let kernel = &result.kernel;
    let r = kernel.colors();
    let reversible = result.construction == Construction::Reversible;
    // transitions out of each color: (letter or identity, target color, probability)
    let mut moves: Vec<Vec<(Option<Generator>, usize, f64)>> = vec![Vec::new(); r];
    for (u, row) in moves.iter_mut().enumerate() {
        for v in 0..r {
            if kernel.identity()[(u, v)] > 0.0 {
                row.push((None, v, kernel.identity()[(u, v)]));
            }
        }
        for g in group.generators() {
            for v in 0..r {
                let p = kernel.p(g)[(u, v)];
                if p > 0.0 {
                    row.push((Some(g), v, p));
                }
            }
        }
    }
    // state 0 is the start; the others are transient (position, color) pairs
    let mut states: Vec<(Word, usize)> = vec![(Word::identity(), 0)];
    let mut index: HashMap<(Word, usize), usize> = HashMap::new();
    let mut absorbing: Vec<Word> = Vec::new();
    let mut absorbing_index: HashMap<Word, usize> = HashMap::new();
    let mut q_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut r_entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut i = 0;
    while i < states.len() {
        let (pos, u) = states[i].clone();
        for &(g, v, p) in &moves[u] {
            let next = match g {
                Some(g) => group.multiply(&pos, &group.letter_word(g)),
                None => pos.clone(),
            };
            let absorbed = v == 0 && (!reversible || !next.is_empty() || (i == 0 && g.is_none()));
            if absorbed {
                let len = absorbing.len();
                let j = *absorbing_index.entry(next.clone()).or_insert_with(|| {
                    absorbing.push(next.clone());
                    len
                });
                r_entries.push((i, j, p));
            } else {
                let len = states.len();
                let j = *index.entry((next.clone(), v)).or_insert_with(|| {
                    states.push((next.clone(), v));
                    len
                });
                q_entries.push((i, j, p));
                if states.len() > MAX_TRANSIENT {
                    return Err(Error::Numerical("first-return state space too large".into()));
                }
            }
        }
        i += 1;
    }
    let n = states.len();
    let mut a = Mat::identity(n, n);
    for (i, j, p) in q_entries {
        a[(i, j)] -= p;
    }
    let mut rhs = Mat::zeros(n, absorbing.len() + 1);
    for (i, j, p) in r_entries {
        rhs[(i, j)] += p;
    }
    for i in 0..n {
        rhs[(i, absorbing.len())] = 1.0;
    }
    let x = linalg::solve(&a, &rhs)?;
    let law: Vec<(Word, f64)> = absorbing.iter().enumerate().map(|(j, w)| (w.clone(), x[(0, j)])).collect();
    let tau = x[(0, absorbing.len())];
    let mut law_error = 0.0f64;
    for (w, p) in &law {
        law_error = law_error.max((p - walk.prob(w)).abs());
    }
    for (w, p) in walk.entries() {
        if !absorbing_index.contains_key(w) {
            law_error = law_error.max(*p);
        }
    }
    Ok(FirstReturn {
        law,
        expected_tau: tau,
        law_error,
        tau_error: (tau - result.expected_tau).abs(),
        transient_states: n,
    })
}

/// Renewal times of a trajectory started at `(e, neutral)`.
///
/// For the prefix construction these are the returns to the neutral color.
/// For the reversible construction a lazy step right after a renewal is
/// itself a renewal; otherwise the next renewal is the first visit to the
/// neutral color at a position different from the last renewal position.
pub fn extract_renewals(trajectory: &[(Word, usize)], construction: Construction) -> Vec<usize> {
    let mut out = Vec::new();
    match construction {
        Construction::General => {
            out.extend((1..trajectory.len()).filter(|&m| trajectory[m].1 == 0));
        }
        Construction::Reversible => {
            let mut tau = 0;
            loop {
                if tau + 1 >= trajectory.len() {
                    break;
                }
                let anchor = &trajectory[tau].0;
                let next = if trajectory[tau + 1].0 == *anchor && trajectory[tau + 1].1 == 0 {
                    Some(tau + 1)
                } else {
                    (tau + 1..trajectory.len()).find(|&m| trajectory[m].1 == 0 && trajectory[m].0 != *anchor)
                };
                match next {
                    Some(m) => {
                        out.push(m);
                        tau = m;
                    }
                    None => break,
                }
            }
        }
    }
    out
}

/// Convolution of two finitely supported laws on the group.
pub fn convolve(group: &PlainGroup, a: &[(Word, f64)], b: &[(Word, f64)]) -> Vec<(Word, f64)> {
    let mut out: HashMap<Word, f64> = HashMap::new();
    for (x, p) in a {
        for (y, q) in b {
            *out.entry(group.multiply(x, y)).or_insert(0.0) += p * q;
        }
    }
    let mut v: Vec<(Word, f64)> = out.into_iter().collect();
    v.sort_by(|a, b| (a.0.len(), &a.0).cmp(&(b.0.len(), &b.0)));
    v
}
