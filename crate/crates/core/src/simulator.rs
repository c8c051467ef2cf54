//! Monte Carlo trajectories, empirical drift and entropy.
//!
//! Every path `i` draws from its own stream `ChaCha8(seed, stream = i)`, so
//! results do not depend on the thread count. Per-time aggregates are
//! integer sums, which makes the parallel reduction exact.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{Generator, PlainGroup, Word};
use crate::kernel::{ColoredKernel, KernelSampler, ScalarSampler, ScalarWalk};

/// Paths per parallel work unit.
const BLOCK: usize = 256;

/// Default bound on the number of states kept by exact enumeration.
pub const DEFAULT_STATE_CAP: usize = 20_000_000;

type DetMap<K, V> = HashMap<K, V, BuildHasherDefault<DefaultHasher>>;

/// The RNG for path `index` under `seed`.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A walk to simulate: scalar, or colored from a starting color.
#[derive(Clone, Copy, Debug)]
pub enum WalkRef<'a> {
    Scalar(&'a ScalarWalk),
    Colored(&'a ColoredKernel, usize),
}

enum Stepper {
    Scalar(ScalarSampler),
    Colored(KernelSampler, usize),
}

impl Stepper {
    fn new(walk: WalkRef<'_>) -> Result<Self> {
        match walk {
            WalkRef::Scalar(w) => Ok(Stepper::Scalar(ScalarSampler::new(w))),
            WalkRef::Colored(k, u) => {
                if u >= k.colors() {
                    return Err(Error::Precondition(format!("start color {u} out of range")));
                }
                Ok(Stepper::Colored(KernelSampler::new(k), u))
            }
        }
    }

    fn start_color(&self) -> usize {
        match self {
            Stepper::Scalar(_) => 0,
            Stepper::Colored(_, u) => *u,
        }
    }

    fn advance<R: Rng + ?Sized>(&self, group: &PlainGroup, pos: &mut Vec<Generator>, color: &mut usize, rng: &mut R) {
        match self {
            Stepper::Scalar(s) => s.advance(group, pos, rng),
            Stepper::Colored(s, _) => {
                s.advance(group, pos, color, rng);
            }
        }
    }
}

/// Aggregates of `n_paths` trajectories of length `horizon`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryBatch {
    pub n_paths: usize,
    pub horizon: usize,
    pub seed: u64,
    /// `mean |X_t|` for `t = 0..=horizon`.
    pub mean_abs: Vec<f64>,
    sum_final_sq: u128,
    sum_incr: i128,
    sum_incr_sq: u128,
}

/// Runs `n_paths` trajectories and records the mean word length over time.
pub fn simulate_lengths(group: &PlainGroup, walk: WalkRef<'_>, n_paths: usize, horizon: usize, seed: u64) -> Result<TrajectoryBatch> {
    if n_paths == 0 {
        return Err(Error::Precondition("need at least one path".into()));
    }
    let stepper = Stepper::new(walk)?;
    let half = horizon / 2;
    let blocks: Vec<(Vec<u64>, u128, i128, u128)> = (0..n_paths.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut sums = vec![0u64; horizon + 1];
            let (mut sq, mut incr, mut incr_sq) = (0u128, 0i128, 0u128);
            let mut pos = Vec::new();
            for i in b * BLOCK..((b + 1) * BLOCK).min(n_paths) {
                let mut rng = path_rng(seed, i as u64);
                pos.clear();
                let mut color = stepper.start_color();
                let mut at_half = 0i128;
                for (t, s) in sums.iter_mut().enumerate().skip(1) {
                    stepper.advance(group, &mut pos, &mut color, &mut rng);
                    *s += pos.len() as u64;
                    if t == half {
                        at_half = pos.len() as i128;
                    }
                }
                let last = pos.len() as i128;
                sq += (last * last) as u128;
                let d = last - at_half;
                incr += d;
                incr_sq += (d * d) as u128;
            }
            (sums, sq, incr, incr_sq)
        })
        .collect();
    let mut total = vec![0u64; horizon + 1];
    let (mut sum_final_sq, mut sum_incr, mut sum_incr_sq) = (0u128, 0i128, 0u128);
    for (sums, sq, incr, incr_sq) in blocks {
        for (t, s) in total.iter_mut().zip(sums) {
            *t += s;
        }
        sum_final_sq += sq;
        sum_incr += incr;
        sum_incr_sq += incr_sq;
    }
    let mean_abs = total.iter().map(|&s| s as f64 / n_paths as f64).collect();
    Ok(TrajectoryBatch { n_paths, horizon, seed, mean_abs, sum_final_sq, sum_incr, sum_incr_sq })
}

/// Empirical drift with `1.96 sd / sqrt(n)` half-widths.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftEstimate {
    /// `mean |X_T| / T`.
    pub value: f64,
    pub ci_half_width: f64,
    /// `mean (|X_T| - |X_{T/2}|) / (T - T/2)`, free of the constant offset
    /// in `E|X_t|`.
    pub increment: f64,
    pub increment_ci_half_width: f64,
    pub n_paths: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl TrajectoryBatch {
    pub fn drift(&self) -> DriftEstimate {
        let n = self.n_paths as f64;
        let t = self.horizon as f64;
        let span = (self.horizon - self.horizon / 2) as f64;
        let ci = |mean: f64, sum_sq: f64| {
            if self.n_paths < 2 {
                return 0.0;
            }
            let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
            1.96 * (var / n).sqrt()
        };
        let mean_final = self.mean_abs[self.horizon];
        let mean_incr = self.sum_incr as f64 / n;
        DriftEstimate {
            value: mean_final / t,
            ci_half_width: ci(mean_final, self.sum_final_sq as f64) / t,
            increment: mean_incr / span,
            increment_ci_half_width: ci(mean_incr, self.sum_incr_sq as f64) / span,
            n_paths: self.n_paths,
            horizon: self.horizon,
            seed: self.seed,
        }
    }
}

pub fn empirical_drift(group: &PlainGroup, walk: WalkRef<'_>, n_paths: usize, horizon: usize, seed: u64) -> Result<DriftEstimate> {
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    Ok(simulate_lengths(group, walk, n_paths, horizon, seed)?.drift())
}

/// One trajectory `(X_t, u_t)` for `t = 0..=horizon`.
pub fn trajectory<R: Rng + ?Sized>(group: &PlainGroup, walk: WalkRef<'_>, horizon: usize, rng: &mut R) -> Result<Vec<(Word, usize)>> {
    let stepper = Stepper::new(walk)?;
    let mut pos = Vec::new();
    let mut color = stepper.start_color();
    let mut out = Vec::with_capacity(horizon + 1);
    out.push((Word::identity(), color));
    for _ in 0..horizon {
        stepper.advance(group, &mut pos, &mut color, rng);
        out.push((group.reduce(&pos), color));
    }
    Ok(out)
}

/// Reduced words and colors packed into one `u128`: the color in the top
/// byte, then letter codes `index + 1` from the least significant end.
#[derive(Clone, Copy, Debug)]
struct Packing {
    bits: u32,
    max_letters: usize,
}

impl Packing {
    fn new(group: &PlainGroup) -> Self {
        let bits = usize::BITS - group.alphabet_size().leading_zeros();
        Packing { bits, max_letters: (120 / bits) as usize }
    }

    fn pack(&self, letters: &[Generator], color: usize) -> u128 {
        let mut key = (color as u128) << 120;
        for (i, g) in letters.iter().enumerate() {
            key |= ((g.index() + 1) as u128) << (i as u32 * self.bits);
        }
        key
    }

    fn unpack(&self, key: u128, out: &mut Vec<Generator>) -> usize {
        out.clear();
        let mask = (1u128 << self.bits) - 1;
        let mut rest = key & ((1u128 << 120) - 1);
        while rest != 0 {
            out.push(Generator::from_index((rest & mask) as usize - 1));
            rest >>= self.bits;
        }
        (key >> 120) as usize
    }
}

/// Exact law of `(X_t, u_t)` by forward convolution.
#[derive(Clone, Debug)]
pub struct ExactLaw {
    pub t: usize,
    packing: Packing,
    law: DetMap<u128, f64>,
}

impl ExactLaw {
    pub fn prob(&self, w: &Word, color: usize) -> f64 {
        if w.len() > self.packing.max_letters {
            return 0.0;
        }
        self.law.get(&self.packing.pack(w.letters(), color)).copied().unwrap_or(0.0)
    }

    pub fn states(&self) -> usize {
        self.law.len()
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.law)
    }
}

fn entropy_of(law: &DetMap<u128, f64>) -> f64 {
    law.values().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

/// Exact law at `horizon` with the entropies and state counts of every
/// earlier time. Fails once more than `cap` states are needed.
pub fn exact_law(group: &PlainGroup, walk: WalkRef<'_>, horizon: usize, cap: usize) -> Result<(ExactLaw, Vec<f64>, Vec<usize>)> {
    let (start, colors) = match walk {
        WalkRef::Scalar(_) => (0, 1),
        WalkRef::Colored(k, u) => {
            if u >= k.colors() {
                return Err(Error::Precondition(format!("start color {u} out of range")));
            }
            (u, k.colors())
        }
    };
    if colors > 255 {
        return Err(Error::Precondition("exact enumeration supports at most 255 colors".into()));
    }
    let packing = Packing::new(group);
    // steps from each color: (letters, target color, probability)
    let moves: Vec<Vec<(Vec<Generator>, usize, f64)>> = match walk {
        WalkRef::Scalar(w) => vec![w.entries().iter().map(|(x, p)| (x.letters().to_vec(), 0, *p)).collect()],
        WalkRef::Colored(k, _) => (0..colors)
            .map(|u| {
                let mut row = Vec::new();
                for v in 0..colors {
                    if k.identity()[(u, v)] > 0.0 {
                        row.push((Vec::new(), v, k.identity()[(u, v)]));
                    }
                    for g in group.generators() {
                        if k.p(g)[(u, v)] > 0.0 {
                            row.push((vec![g], v, k.p(g)[(u, v)]));
                        }
                    }
                }
                row
            })
            .collect(),
    };
    let step_len = moves.iter().flatten().map(|m| m.0.len()).max().unwrap_or(0);
    if step_len * horizon > packing.max_letters {
        return Err(Error::Precondition(format!("words up to length {} do not fit the packed state", step_len * horizon)));
    }
    let mut law: DetMap<u128, f64> = DetMap::default();
    law.insert(packing.pack(&[], start), 1.0);
    let mut entropies = vec![0.0];
    let mut states = vec![1];
    let mut buf = Vec::new();
    for _ in 1..=horizon {
        let mut next: DetMap<u128, f64> = DetMap::default();
        for (&key, &p) in &law {
            let u = packing.unpack(key, &mut buf);
            for (letters, v, q) in &moves[u] {
                let mut pos = buf.clone();
                for &g in letters {
                    group.push_letter(&mut pos, g);
                }
                *next.entry(packing.pack(&pos, *v)).or_insert(0.0) += p * q;
            }
            if next.len() > cap {
                return Err(Error::BallOverflow { states: next.len() });
            }
        }
        law = next;
        entropies.push(entropy_of(&law));
        states.push(law.len());
    }
    Ok((ExactLaw { t: horizon, packing, law }, entropies, states))
}

/// Entropy of `X_t` by exact enumeration, with a Monte Carlo average of
/// `-log P^T(e, X_T)` over simulated endpoints.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EntropyLogpReport {
    pub horizon: usize,
    /// `H(X_t)` for `t = 0..=horizon`.
    pub entropies: Vec<f64>,
    pub states: Vec<usize>,
    /// `H(X_T) / T`.
    pub per_step: f64,
    /// `H(X_T) - H(X_{T-1})`.
    pub increment: f64,
    /// Mean of `-log P^T(e, X_T) / T` over simulated paths.
    pub mc_mean: f64,
    pub mc_ci_half_width: f64,
    pub n_paths: usize,
    pub seed: u64,
}

pub fn empirical_entropy_logp(group: &PlainGroup, walk: WalkRef<'_>, n_paths: usize, horizon: usize, seed: u64, cap: usize) -> Result<EntropyLogpReport> {
    if horizon == 0 {
        return Err(Error::Precondition("horizon must be positive".into()));
    }
    let (last, entropies, states) = exact_law(group, walk, horizon, cap)?;
    let last = &last;
    let stepper = Stepper::new(walk)?;
    let samples: Vec<f64> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = path_rng(seed, i as u64);
            let mut pos = Vec::new();
            let mut color = stepper.start_color();
            for _ in 0..horizon {
                stepper.advance(group, &mut pos, &mut color, &mut rng);
            }
            -last.prob(&group.reduce(&pos), color).ln() / horizon as f64
        })
        .collect();
    let n = n_paths as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = if n_paths > 1 { samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Ok(EntropyLogpReport {
        horizon,
        per_step: entropies[horizon] / horizon as f64,
        increment: entropies[horizon] - entropies[horizon - 1],
        states,
        entropies,
        mc_mean: mean,
        mc_ci_half_width: 1.96 * (var / n).sqrt(),
        n_paths,
        seed,
    })
}

/// Entropy of the walk pushed to `[n]` through one random action.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RandomActionSeries {
    pub n: usize,
    pub seed: u64,
    /// Entropy of the position on `[n]` for `t = 0..=horizon`.
    pub entropy: Vec<f64>,
    /// `h t > ln n`: the finite quotient can no longer follow the walk.
    pub saturated: Vec<bool>,
}

impl RandomActionSeries {
    /// Last time inside the validity window.
    pub fn valid_until(&self) -> usize {
        self.saturated.iter().position(|&s| s).map_or(self.entropy.len() - 1, |t| t.saturating_sub(1))
    }
}

/// Each free generator acts by an independent uniform permutation of `[n]`.
/// The law of the image of point `0` is propagated exactly.
pub fn random_action_entropy(group: &PlainGroup, walk: &ScalarWalk, n: usize, horizon: usize, h_ref: f64, seed: u64) -> Result<RandomActionSeries> {
    if !group.finite_factors().is_empty() {
        return Err(Error::Precondition("random actions are drawn for free groups only".into()));
    }
    if n == 0 {
        return Err(Error::Precondition("action needs a nonempty set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perms: Vec<Vec<u32>> = vec![Vec::new(); group.alphabet_size()];
    for i in 0..group.free_rank() {
        let g = group.free_letter(i, false).expect("free letter");
        let mut p: Vec<u32> = (0..n as u32).collect();
        for k in (1..n).rev() {
            let j = rng.gen_range(0..=k);
            p.swap(k, j);
        }
        let mut inv = vec![0u32; n];
        for (x, &y) in p.iter().enumerate() {
            inv[y as usize] = x as u32;
        }
        perms[g.index()] = p;
        perms[group.inverse(g).index()] = inv;
    }
    // x -> x.w, letters acting on the right in order
    let maps: Vec<(Vec<u32>, f64)> = walk
        .entries()
        .iter()
        .map(|(w, p)| {
            let mut m: Vec<u32> = (0..n as u32).collect();
            for g in w.letters() {
                let perm = &perms[g.index()];
                for x in m.iter_mut() {
                    *x = perm[*x as usize];
                }
            }
            (m, *p)
        })
        .collect();
    let mut law = vec![0.0f64; n];
    law[0] = 1.0;
    let mut entropy = vec![0.0];
    for _ in 0..horizon {
        let mut next = vec![0.0f64; n];
        for (m, p) in &maps {
            for (x, &mass) in law.iter().enumerate() {
                if mass > 0.0 {
                    next[m[x] as usize] += p * mass;
                }
            }
        }
        law = next;
        entropy.push(law.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum());
    }
    let ln_n = (n as f64).ln();
    let saturated = (0..=horizon).map(|t| h_ref * t as f64 > ln_n).collect();
    Ok(RandomActionSeries { n, seed, entropy, saturated })
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// One row of the drift and entropy curves.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub t: usize,
    pub mean_abs: f64,
    pub gamma_line: f64,
    /// Random-action entropy, present inside its validity window.
    pub entropy_est: Option<f64>,
    pub h_line: f64,
}

/// Settings of a curve run.
#[derive(Clone, Copy, Debug)]
pub struct CurveOptions {
    pub n_paths: usize,
    pub horizon: usize,
    pub action_size: usize,
    pub action_horizon: usize,
    /// The entropy fit stops once `H_t > ln n - margin`.
    pub saturation_margin: f64,
    pub seed: u64,
}

/// Curves plus the fitted slopes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Curves {
    #[serde(skip)]
    pub rows: Vec<CurveRow>,
    pub gamma: f64,
    pub h: f64,
    /// Slope of `mean |X_t|` over `t ∈ [T/2, T]`.
    pub drift_slope: f64,
    /// Slope of `H_t - (1/2) ln t` for the random-action entropy over
    /// `[fit_from, fit_to]`.
    pub entropy_slope: f64,
    /// Slope of `H_t` itself over the same times.
    pub entropy_slope_raw: f64,
    pub fit_from: usize,
    pub fit_to: usize,
}

/// Mean word length against `γ t` and random-action entropy against `h t`.
pub fn curves(group: &PlainGroup, walk: &ScalarWalk, gamma: f64, h: f64, opts: &CurveOptions) -> Result<Curves> {
    let batch = simulate_lengths(group, WalkRef::Scalar(walk), opts.n_paths, opts.horizon, opts.seed)?;
    let action = random_action_entropy(group, walk, opts.action_size, opts.action_horizon, h, opts.seed.wrapping_add(1))?;
    let valid = action.valid_until();
    let rows = (0..=opts.horizon)
        .map(|t| CurveRow {
            t,
            mean_abs: batch.mean_abs[t],
            gamma_line: gamma * t as f64,
            entropy_est: (t <= valid).then(|| action.entropy[t]),
            h_line: h * t as f64,
        })
        .collect();
    let from = opts.horizon / 2;
    let xs: Vec<f64> = (from..=opts.horizon).map(|t| t as f64).collect();
    let drift_slope = slope(&xs, &batch.mean_abs[from..=opts.horizon]);
    // H(X_t) = h t + (1/2) ln t + O(1) while the action is injective enough;
    // the fit ends before collisions on [n] flatten the curve
    let ln_n = (opts.action_size as f64).ln();
    let fit_to = (1..=valid).filter(|&t| action.entropy[t] <= ln_n - opts.saturation_margin).max().unwrap_or(0);
    let fit_from = (fit_to / 2).max(1);
    let (entropy_slope, entropy_slope_raw) = if fit_to > fit_from {
        let xs: Vec<f64> = (fit_from..=fit_to).map(|t| t as f64).collect();
        let corrected: Vec<f64> = (fit_from..=fit_to).map(|t| action.entropy[t] - 0.5 * (t as f64).ln()).collect();
        (slope(&xs, &corrected), slope(&xs, &action.entropy[fit_from..=fit_to]))
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(Curves { rows, gamma, h, drift_slope, entropy_slope, entropy_slope_raw, fit_from, fit_to })
}
