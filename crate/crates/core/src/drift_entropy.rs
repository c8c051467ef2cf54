//! Drift and asymptotic entropy of nearest-neighbor colored walks.
//!
//! The drift is an exact finite sum over `π`, `p` and `μ`. The entropy needs
//! the law of the limiting direction `V` of products `q_{ξ1} q_{ξ2} ...`
//! along the boundary chain; it is estimated by Monte Carlo, sampling
//! truncated products whose depth is doubled until the sampled directions
//! stop moving.
//!
//! Writing `ν_w^a` for the law of `V(σξ)` given that the boundary word starts
//! with letter `a` reached in color `w`, the entropy is
//!
//! ```text
//! h = -Σ_{g,u,v} π(u) p_g(u,v) Σ_{a,w} μ_a(v,w) E_{z~ν_w^a}[L(g,u,v,a,z)]
//! ```
//!
//! with `L` the logarithm of one of three ratios according to whether
//! `a = g^{-1}`, `a ∈ Next(g)` or `ga ∈ S`:
//!
//! ```text
//! log <1_u, z>          - log <q_a(v,.), z>
//! log <q_g(u,.), q_a z> - log <1_v, q_a z>
//! log <q_{ga}(u,.), z>  - log <q_a(v,.), z>
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::{HittingMatrices, TrafficSolution};
use crate::error::{Error, Result};
use crate::group::{Generator, PlainGroup};
use crate::instances::TwoFactorProfile;
use crate::kernel::{stationary_pi, ColoredKernel};
use crate::linalg::{self, Mat, Vector};
use crate::linearize::LinearizationResult;

/// Terms with weight below this are skipped.
pub const WEIGHT_FLOOR: f64 = 1e-15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    Mc,
    ClosedFormOracle,
}

/// A drift or entropy value with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub value: f64,
    pub method: Method,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ci_half_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    /// Largest change of a sampled direction when the depth was last doubled.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub depth_delta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Report {
    pub fn exact(value: f64) -> Self {
        Report { value, method: Method::Exact, ci_half_width: None, samples: None, depth: None, depth_delta: None, seed: None }
    }

    pub fn oracle(value: f64) -> Self {
        Report { method: Method::ClosedFormOracle, ..Self::exact(value) }
    }
}

/// `γ = Σ_g Σ_{u,v,w} π(u) p_g(u,v) (-μ_{g^{-1}}(v,w) + Σ_{h∈Next(g)} μ_h(v,w))`.
pub fn drift_exact(group: &PlainGroup, kernel: &ColoredKernel, traffic: &TrafficSolution) -> Report {
    let r = kernel.colors();
    let pi = &traffic.pi;
    let mut gamma = 0.0;
    for g in group.generators() {
        let pg = kernel.p(g);
        // row sums of the bracket: -y_{g^{-1}} + Δ_g
        let bracket: Vector = &traffic.delta[g.index()] - &traffic.y[group.inverse(g).index()];
        for u in 0..r {
            for v in 0..r {
                gamma += pi[u] * pg[(u, v)] * bracket[v];
            }
        }
    }
    Report::exact(gamma)
}

/// A point of the open simplex.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexPoint(Vector);

impl SimplexPoint {
    /// Normalizes a nonnegative vector with positive sum.
    pub fn from_vector(v: Vector) -> Result<Self> {
        let s = v.sum();
        if !(s > 0.0) || v.iter().any(|x| *x < 0.0 || !x.is_finite()) {
            return Err(Error::Numerical("cannot normalize to a probability vector".into()));
        }
        Ok(SimplexPoint(v / s))
    }

    pub fn uniform(r: usize) -> Self {
        SimplexPoint(Vector::from_element(r, 1.0 / r as f64))
    }

    pub fn as_vector(&self) -> &Vector {
        &self.0
    }

    pub fn is_interior(&self) -> bool {
        self.0.iter().all(|&x| x > 0.0) && (self.0.sum() - 1.0).abs() <= 1e-12
    }
}

/// Discrete law over `(letter, color)` pairs, sampled by inversion.
#[derive(Clone, Debug, Default)]
struct Table {
    outcomes: Vec<(Generator, usize)>,
    cumulative: Vec<f64>,
}

impl Table {
    fn push(&mut self, outcome: (Generator, usize), weight: f64) {
        if weight > 0.0 {
            let acc = self.cumulative.last().copied().unwrap_or(0.0) + weight;
            self.outcomes.push(outcome);
            self.cumulative.push(acc);
        }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (Generator, usize) {
        let total = self.cumulative[self.cumulative.len() - 1];
        let x = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= x).min(self.outcomes.len() - 1);
        self.outcomes[i]
    }

    fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

/// Samples directions of truncated products `q_{ξ1} ... q_{ξD} z0` along the
/// boundary chain.
#[derive(Clone, Debug)]
pub struct NuSampler {
    r: usize,
    q: Vec<Mat>,
    /// First letter and color from each starting color, weights `μ_b(u, w)`.
    start: Vec<Table>,
    /// Next letter and color from state `(a, w)`, weights `μ_b(w, w') / Δ_a(w)`
    /// over `b ∈ Next(a)`.
    after: Vec<Vec<Table>>,
    depth: usize,
    base: Vector,
}

/// Depth selection outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DepthCalibration {
    pub depth: usize,
    /// Largest sup-norm move of a pilot direction between `D/2` and `D`.
    pub delta: f64,
    pub converged: bool,
}

impl NuSampler {
    pub fn new(group: &PlainGroup, q: &HittingMatrices, traffic: &TrafficSolution, depth: usize) -> Self {
        let r = traffic.pi.len();
        let n = group.alphabet_size();
        let mut start = vec![Table::default(); r];
        for (u, table) in start.iter_mut().enumerate() {
            for b in group.generators() {
                for w in 0..r {
                    table.push((b, w), traffic.mu(b)[(u, w)]);
                }
            }
        }
        let mut after = vec![vec![Table::default(); r]; n];
        for a in group.generators() {
            for w in 0..r {
                let table = &mut after[a.index()][w];
                for b in group.next_set(a) {
                    for w2 in 0..r {
                        table.push((b, w2), traffic.mu(b)[(w, w2)]);
                    }
                }
            }
        }
        NuSampler { r, q: q.q.clone(), start, after, depth: depth.max(1), base: Vector::from_element(r, 1.0 / r as f64) }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn set_depth(&mut self, depth: usize) {
        self.depth = depth.max(1);
    }

    /// Letters of the boundary chain, either from color `u` or continuing
    /// from state `(a, w)`.
    fn letters<R: Rng + ?Sized>(&self, from: Start, len: usize, rng: &mut R) -> Result<Vec<Generator>> {
        let mut out = Vec::with_capacity(len);
        let (mut a, mut w) = match from {
            Start::Color(u) => {
                if self.start[u].is_empty() {
                    return Err(Error::Numerical(format!("no escape mass from color {u}")));
                }
                let first = self.start[u].draw(rng);
                out.push(first.0);
                first
            }
            Start::After(a, w) => (a, w),
        };
        while out.len() < len {
            let table = &self.after[a.index()][w];
            if table.is_empty() {
                return Err(Error::Numerical(format!("state ({}, {w}) is not reachable by the boundary chain", a.0)));
            }
            let (b, w2) = table.draw(rng);
            out.push(b);
            a = b;
            w = w2;
        }
        Ok(out)
    }

    /// Normalized `q_{ξ1} ... q_{ξn} z0`, applied from the right.
    pub fn direction(&self, letters: &[Generator]) -> Result<SimplexPoint> {
        let mut z = self.base.clone();
        for g in letters.iter().rev() {
            z = &self.q[g.index()] * z;
            let s = z.sum();
            if !(s > 0.0) {
                return Err(Error::Numerical("product of hitting matrices vanished".into()));
            }
            z /= s;
        }
        Ok(SimplexPoint(z))
    }

    /// A draw from `ν_u`: the direction of the boundary word started in `u`.
    pub fn sample_nu<R: Rng + ?Sized>(&self, u: usize, rng: &mut R) -> Result<SimplexPoint> {
        let letters = self.letters(Start::Color(u), self.depth, rng)?;
        self.direction(&letters)
    }

    /// A draw from `ν_w^a`: the direction of the tail after the first letter
    /// `a` reached in color `w`.
    pub fn sample_nu_after<R: Rng + ?Sized>(&self, a: Generator, w: usize, rng: &mut R) -> Result<SimplexPoint> {
        let letters = self.letters(Start::After(a, w), self.depth, rng)?;
        self.direction(&letters)
    }

    /// Doubles the depth from `initial` until pilot directions move by less
    /// than `tol` between depth `D` and `2D`, or `cap` is reached.
    pub fn calibrate_depth<R: Rng + ?Sized>(&mut self, initial: usize, tol: f64, cap: usize, pilots: usize, rng: &mut R) -> Result<DepthCalibration> {
        let mut depth = initial.max(1);
        loop {
            let mut delta = 0.0f64;
            for i in 0..pilots {
                let u = i % self.r;
                if self.start[u].is_empty() {
                    continue;
                }
                let letters = self.letters(Start::Color(u), 2 * depth, rng)?;
                let short = self.direction(&letters[..depth])?;
                let long = self.direction(&letters)?;
                delta = delta.max((short.0 - long.0).amax());
            }
            if delta < tol || 2 * depth > cap {
                let converged = delta < tol;
                let depth = if converged { depth } else { (2 * depth).min(cap) };
                self.depth = depth;
                return Ok(DepthCalibration { depth, delta, converged });
            }
            depth *= 2;
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Start {
    Color(usize),
    After(Generator, usize),
}

/// Which law the pushed-forward points are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Invariance {
    /// `ν_u = Σ μ_a(u,w) (q_a)_* ν_w^a`, with the tail law conditioned on
    /// the first letter.
    Conditional,
    /// `ν_u = Σ μ_a(u,w) (q_a)_* ν_w`.
    Unconditional,
}

/// Moment comparison between `ν_u` and its invariance mixture.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub color: usize,
    pub mode: Invariance,
    /// Coordinates `z_i` followed by products `z_i z_j`, `i <= j`.
    pub direct: Vec<f64>,
    pub mixture: Vec<f64>,
    /// Combined `1.96`-standard-error half-widths.
    pub ci_half_width: Vec<f64>,
    /// Largest `|direct - mixture| / se`.
    pub max_z: f64,
    pub samples: usize,
}

fn moments(z: &Vector) -> Vec<f64> {
    let r = z.len();
    let mut out: Vec<f64> = z.iter().copied().collect();
    for i in 0..r {
        for j in i..r {
            out.push(z[i] * z[j]);
        }
    }
    out
}

#[derive(Clone)]
struct Accum {
    n: usize,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl Accum {
    fn new(k: usize) -> Self {
        Accum { n: 0, s1: vec![0.0; k], s2: vec![0.0; k] }
    }

    fn add(&mut self, m: &[f64]) {
        self.n += 1;
        for (i, x) in m.iter().enumerate() {
            self.s1[i] += x;
            self.s2[i] += x * x;
        }
    }

    fn mean_var(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n as f64;
        let mean: Vec<f64> = self.s1.iter().map(|s| s / n).collect();
        let var = self.s2.iter().zip(&mean).map(|(s, m)| ((s / n - m * m) * n / (n - 1.0)).max(0.0) / n).collect();
        (mean, var)
    }
}

/// Compares the first and second moments of `ν_u` with those of the
/// mixture of pushforwards, both estimated from `samples` draws.
pub fn nu_invariance_check(group: &PlainGroup, sampler: &NuSampler, traffic: &TrafficSolution, u: usize, mode: Invariance, samples: usize, seed: u64) -> Result<InvarianceReport> {
    let r = sampler.r;
    let k = r + r * (r + 1) / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direct = Accum::new(k);
    for _ in 0..samples {
        direct.add(&moments(sampler.sample_nu(u, &mut rng)?.as_vector()));
    }
    let strata: Vec<(Generator, usize, f64)> = group
        .generators()
        .flat_map(|a| (0..r).map(move |w| (a, w)))
        .map(|(a, w)| (a, w, traffic.mu(a)[(u, w)]))
        .filter(|s| s.2 > WEIGHT_FLOOR)
        .collect();
    let total: f64 = strata.iter().map(|s| s.2).sum();
    let mut mixture = vec![0.0; k];
    let mut mixture_var = vec![0.0; k];
    for &(a, w, weight) in &strata {
        let n = ((samples as f64 * weight / total).round() as usize).max(64);
        let mut acc = Accum::new(k);
        for _ in 0..n {
            let z = match mode {
                Invariance::Conditional => sampler.sample_nu_after(a, w, &mut rng)?,
                Invariance::Unconditional => sampler.sample_nu(w, &mut rng)?,
            };
            let pushed = SimplexPoint::from_vector(&sampler.q[a.index()] * z.as_vector())?;
            acc.add(&moments(pushed.as_vector()));
        }
        let (m, v) = acc.mean_var();
        let p = weight / total;
        for i in 0..k {
            mixture[i] += p * m[i];
            mixture_var[i] += p * p * v[i];
        }
    }
    let (dm, dv) = direct.mean_var();
    let mut max_z = 0.0f64;
    let mut ci = Vec::with_capacity(k);
    for i in 0..k {
        let se = (dv[i] + mixture_var[i]).sqrt();
        let diff = (dm[i] - mixture[i]).abs();
        let z = if se > 0.0 { diff / se } else if diff <= 1e-12 { 0.0 } else { f64::INFINITY };
        max_z = max_z.max(z);
        ci.push(1.96 * se);
    }
    Ok(InvarianceReport { color: u, mode, direct: dm, mixture, ci_half_width: ci, max_z, samples })
}

/// Per-stratum log coefficients: the integrand is
/// `Σ_i cz_i log z_i + Σ_{c,i} cq[c]_i log (q_c z)_i + Σ_{g,i} cqq[g]_i log (q_g q_a z)_i`.
#[derive(Clone, Debug)]
struct Stratum {
    a: Generator,
    w: usize,
    weight: f64,
    cz: Vector,
    cq: Vec<(usize, Vector)>,
    cqq: Vec<(usize, Vector)>,
}

fn strata(group: &PlainGroup, kernel: &ColoredKernel, traffic: &TrafficSolution, swap: bool) -> Vec<Stratum> {
    let r = kernel.colors();
    let n = group.alphabet_size();
    let pi = &traffic.pi;
    let mut out = Vec::new();
    for a in group.generators() {
        for w in 0..r {
            let mut cz = Vector::zeros(r);
            let mut cq = vec![Vector::zeros(r); n];
            let mut cqq = vec![Vector::zeros(r); n];
            let mut weight = 0.0;
            for g in group.generators() {
                let pg = kernel.p(g);
                for u in 0..r {
                    for v in 0..r {
                        let c = pi[u] * pg[(u, v)] * traffic.mu(a)[(v, w)];
                        if c < WEIGHT_FLOOR {
                            continue;
                        }
                        weight += c;
                        let (u, v) = if swap { (v, u) } else { (u, v) };
                        if a == group.inverse(g) {
                            cz[u] += c;
                        } else if group.in_next(g, a) {
                            cqq[g.index()][u] += c;
                        } else {
                            let ga = group.letter_product(g, a).expect("remaining case is an in-factor product");
                            cq[ga.index()][u] += c;
                        }
                        cq[a.index()][v] -= c;
                    }
                }
            }
            if weight < WEIGHT_FLOOR {
                continue;
            }
            let keep = |v: Vec<Vector>| v.into_iter().enumerate().filter(|(_, x)| x.iter().any(|c| *c != 0.0)).collect();
            out.push(Stratum { a, w, weight, cz, cq: keep(cq), cqq: keep(cqq) });
        }
    }
    out
}

fn log_term(coef: &Vector, values: &Vector) -> Result<f64> {
    let mut s = 0.0;
    for (c, x) in coef.iter().zip(values.iter()) {
        if *c != 0.0 {
            if !(*x > 0.0) {
                return Err(Error::Numerical("logarithm of a nonpositive inner product".into()));
            }
            s += c * x.ln();
        }
    }
    Ok(s)
}

fn integrand(st: &Stratum, q: &[Mat], z: &Vector) -> Result<f64> {
    let mut f = log_term(&st.cz, z)?;
    for (c, coef) in &st.cq {
        f += log_term(coef, &(&q[*c] * z))?;
    }
    if !st.cqq.is_empty() {
        let qaz = &q[st.a.index()] * z;
        for (g, coef) in &st.cqq {
            f += log_term(coef, &(&q[*g] * &qaz))?;
        }
    }
    Ok(f)
}

/// Monte Carlo settings for the entropy estimate.
#[derive(Clone, Copy, Debug)]
pub struct EntropyOptions {
    /// Total number of `ν` draws, split across strata by weight.
    pub samples: usize,
    pub seed: u64,
    /// Fixed depth, or `None` to calibrate.
    pub depth: Option<usize>,
    pub depth_tol: f64,
    pub depth_cap: usize,
    pub block: usize,
}

impl Default for EntropyOptions {
    fn default() -> Self {
        EntropyOptions { samples: 100_000, seed: 1, depth: None, depth_tol: 1e-6, depth_cap: 200, block: 4096 }
    }
}

/// Entropy from the explicit formula with `ν` integrals estimated by Monte
/// Carlo. Strata `(a, w)` are sampled independently; the reported half-width
/// is `1.96` standard errors of the stratified estimate.
pub fn entropy_explicit_mc(group: &PlainGroup, kernel: &ColoredKernel, q: &HittingMatrices, traffic: &TrafficSolution, opts: &EntropyOptions) -> Result<Report> {
    entropy_mc_impl(group, kernel, q, traffic, opts, false)
}

fn entropy_mc_impl(group: &PlainGroup, kernel: &ColoredKernel, q: &HittingMatrices, traffic: &TrafficSolution, opts: &EntropyOptions, swap: bool) -> Result<Report> {
    if kernel.has_identity_mass() {
        return Err(Error::Precondition("entropy formula needs a kernel supported on the alphabet".into()));
    }
    let mut sampler = NuSampler::new(group, q, traffic, opts.depth.unwrap_or(8));
    let mut pilot_rng = ChaCha8Rng::seed_from_u64(opts.seed);
    pilot_rng.set_stream(u64::MAX);
    let calibration = match opts.depth {
        Some(d) => {
            sampler.set_depth(d);
            None
        }
        None => Some(sampler.calibrate_depth(8, opts.depth_tol, opts.depth_cap, 64, &mut pilot_rng)?),
    };
    let strata = strata(group, kernel, traffic, swap);
    let total_weight: f64 = strata.iter().map(|s| s.weight).sum();
    // blocks of (stratum, count, stream id), in a fixed order
    let mut jobs = Vec::new();
    let mut stream = 0u64;
    let mut used = 0;
    for (i, s) in strata.iter().enumerate() {
        let n = ((opts.samples as f64 * s.weight / total_weight).round() as usize).max(64);
        used += n;
        let mut left = n;
        while left > 0 {
            let m = left.min(opts.block);
            jobs.push((i, m, stream));
            stream += 1;
            left -= m;
        }
    }
    let sums: Vec<Result<(usize, f64, f64)>> = jobs
        .par_iter()
        .map(|&(i, m, stream)| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(stream);
            let st = &strata[i];
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..m {
                let z = sampler.sample_nu_after(st.a, st.w, &mut rng)?;
                let f = integrand(st, &sampler.q, z.as_vector())?;
                s1 += f;
                s2 += f * f;
            }
            Ok((i, s1, s2))
        })
        .collect();
    let mut acc = vec![(0usize, 0.0f64, 0.0f64); strata.len()];
    for (job, res) in jobs.iter().zip(sums) {
        let (i, s1, s2) = res?;
        acc[i].0 += job.1;
        acc[i].1 += s1;
        acc[i].2 += s2;
    }
    let mut h = 0.0;
    let mut var = 0.0;
    for &(n, s1, s2) in &acc {
        let n = n as f64;
        let mean = s1 / n;
        h -= mean;
        let v = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
        var += v / n;
    }
    Ok(Report {
        value: h,
        method: Method::Mc,
        ci_half_width: Some(1.96 * var.sqrt()),
        samples: Some(used),
        depth: Some(sampler.depth()),
        depth_delta: calibration.map(|c| c.delta),
        seed: Some(opts.seed),
    })
}

/// Scalar entropy formula for one-color walks:
/// `h = -Σ_g p_g (μ_{g^{-1}} log(1/q_{g^{-1}}) + Σ_{h∈Next(g)} μ_h log q_g + Σ_{gh∈S} μ_h log(q_{gh}/q_h))`.
pub fn entropy_colorless_closed(group: &PlainGroup, kernel: &ColoredKernel, q: &HittingMatrices, traffic: &TrafficSolution) -> Result<Report> {
    if kernel.colors() != 1 {
        return Err(Error::Precondition("closed form needs a single color".into()));
    }
    let s = |m: &Mat| m[(0, 0)];
    let mut h = 0.0;
    for g in group.generators() {
        let pg = s(kernel.p(g));
        if pg == 0.0 {
            continue;
        }
        let gi = group.inverse(g);
        let mut inner = s(traffic.mu(gi)) * (1.0 / s(q.get(gi))).ln();
        for x in group.next_set(g) {
            inner += s(traffic.mu(x)) * s(q.get(g)).ln();
        }
        for x in group.generators() {
            if let Some(gx) = group.letter_product(g, x) {
                inner += s(traffic.mu(x)) * (s(q.get(gx)) / s(q.get(x))).ln();
            }
        }
        h -= pg * inner;
    }
    Ok(Report::oracle(h))
}

/// How the first boundary letter `ξ1` relates to the translating letter `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RnCase {
    /// `ξ1 = g`.
    Cancel,
    /// `ξ1 ∈ Next(g^{-1})`.
    Prepend,
    /// `ξ1 = g h` with `h ∈ S`.
    Merge,
}

pub fn rn_case(group: &PlainGroup, g: Generator, xi1: Generator) -> RnCase {
    if xi1 == g {
        RnCase::Cancel
    } else if group.in_next(group.inverse(g), xi1) {
        RnCase::Prepend
    } else {
        RnCase::Merge
    }
}

/// `d(g p∞_v)/dp∞_u` at a boundary point with first letter `ξ1` and tail
/// direction `V(σξ)`.
#[allow(clippy::too_many_arguments)]
pub fn rn_derivative(group: &PlainGroup, q: &HittingMatrices, g: Generator, u: usize, v: usize, xi1: Generator, tail: &SimplexPoint, case: RnCase) -> Result<f64> {
    let found = rn_case(group, g, xi1);
    if found != case {
        return Err(Error::CaseMismatch { expected: format!("{case:?}"), found: format!("{found:?}") });
    }
    let z = tail.as_vector();
    let dot = |m: &Mat, row: usize, x: &Vector| m.row(row).iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>();
    let value = match case {
        RnCase::Cancel => z[v] / dot(q.get(g), u, z),
        RnCase::Prepend => {
            let vz = q.get(xi1) * z;
            dot(q.get(group.inverse(g)), v, &vz) / vz[u]
        }
        RnCase::Merge => {
            let h = group.letter_product(group.inverse(g), xi1).expect("merge case has an in-factor quotient");
            dot(q.get(h), v, z) / dot(q.get(xi1), u, z)
        }
    };
    Ok(value)
}

/// `(E[τ1] γ̃, E[τ1] h̃)`.
pub fn relate_renewal(lin: &LinearizationResult, tilde_gamma: f64, tilde_h: f64) -> (f64, f64) {
    (lin.expected_tau * tilde_gamma, lin.expected_tau * tilde_h)
}

/// Drift of the two-factor walk through its adapted linearization.
///
/// Colors are the empty word and the alternating factor sequences still to
/// be walked. The chain on (factor of the last letter, color) has transition
/// blocks built from `P_i = Σ_{g∈G_i} p̃_g`, and `Q̃` holds the length
/// increments; the drift is `E[τ1] Σ (π_Q Q̃)`.
pub fn application_drift_oracle(profile: &TwoFactorProfile) -> Result<f64> {
    profile.validate()?;
    let l = profile.max_len();
    // color 0 is empty; color for (start factor s, remaining length n) with n in 1..l
    let r = 1 + 2 * (l - 1);
    let color = |start: usize, n: usize| if n == 0 { 0 } else { 1 + 2 * (n - 1) + start };
    let mut big_p = [linalg::zeros(r), linalg::zeros(r)];
    let k = [profile.k[0] as f64, profile.k[1] as f64];
    for i0 in 0..2 {
        // from the empty color, a word starting in factor i0 of length n+1
        for n in 0..l {
            let mass = profile.p[i0].get(n).copied().unwrap_or(0.0);
            if mass > 0.0 {
                big_p[i0][(0, color(1 - i0, n))] += mass;
            }
        }
    }
    for n in 1..l {
        for s in 0..2 {
            // remaining factors s, 1-s, ...; the next letter is in factor s
            big_p[s][(color(s, n), color(1 - s, n - 1))] += 1.0;
        }
    }
    let mut q = Mat::zeros(2 * r, 2 * r);
    let mut qt = Mat::zeros(2 * r, 2 * r);
    let (p1, p2) = (&big_p[0], &big_p[1]);
    q.view_mut((0, 0), (r, r)).copy_from(&(p1 * (1.0 - 1.0 / k[0])));
    q.view_mut((0, r), (r, r)).copy_from(&(p1 / k[0] + p2));
    q.view_mut((r, 0), (r, r)).copy_from(&(p1 + p2 / k[1]));
    q.view_mut((r, r), (r, r)).copy_from(&(p2 * (1.0 - 1.0 / k[1])));
    qt.view_mut((0, r), (r, r)).copy_from(&(p2 - p1 / k[0]));
    qt.view_mut((r, 0), (r, r)).copy_from(&(p1 - p2 / k[1]));
    let pi = stationary_pi(&q)?;
    let gamma_tilde = (pi.transpose() * qt).sum();
    Ok(profile.mean_length() * gamma_tilde)
}
