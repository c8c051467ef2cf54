//! Hitting probabilities, traffic equations and the harmonic measure.
//!
//! For a nearest-neighbor colored walk, `q_g(u, v)` is the probability of
//! ever reaching `g` from `(e, u)`, arriving first with color `v`, and
//! `μ_g(u, v)` is the probability of doing so and then escaping to infinity
//! through `g`. The hitting matrices solve a quadratic system which is
//! iterated from zero; `μ` is then obtained either from a linear system in
//! `y_g = μ_g 1` or by iterating the traffic map directly, and the two are
//! cross-checked.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::{Generator, PlainGroup, Word};
use crate::kernel::ColoredKernel;
use crate::linalg::{self, Mat, Vector};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Letter structure used by every solver: Next sets and in-factor products.
struct Structure {
    next: Vec<Vec<Generator>>,
    factorizations: Vec<Vec<(Generator, Generator)>>,
    inverse: Vec<Generator>,
}

impl Structure {
    fn new(group: &PlainGroup) -> Self {
        Structure {
            next: group.generators().map(|g| group.next_set(g)).collect(),
            factorizations: group.generators().map(|g| group.factorizations(g)).collect(),
            inverse: group.generators().map(|g| group.inverse(g)).collect(),
        }
    }
}

fn check_preconditions(group: &PlainGroup, kernel: &ColoredKernel) -> Result<()> {
    if kernel.has_identity_mass() {
        return Err(Error::Precondition("kernel has mass at the identity; strip it or linearize with p_e = 0".into()));
    }
    if !group.is_nonamenable() {
        return Err(Error::Precondition("group must be a nonamenable plain group (not finite, Z or Z/2*Z/2)".into()));
    }
    let report = kernel.validate(group);
    if !report.is_valid() {
        return Err(Error::Precondition(format!("kernel is not valid: {report:?}")));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct HittingMatrices {
    pub q: Vec<Mat>,
    /// Sup norm of `F(q) - q` for the hitting map `F`.
    pub residual: f64,
    pub iterations: usize,
    /// Whether every iterate dominated the previous one entrywise.
    pub monotone: bool,
}

impl HittingMatrices {
    pub fn get(&self, g: Generator) -> &Mat {
        &self.q[g.index()]
    }

    /// `d_g`: probabilities of ever reaching `g`, per starting color.
    pub fn reach(&self, g: Generator) -> Vector {
        linalg::row_sums(&self.q[g.index()])
    }
}

fn hitting_map(st: &Structure, kernel: &ColoredKernel, x: &[Mat]) -> Vec<Mat> {
    let n = x.len();
    let r = kernel.colors();
    // B = Σ_h p_{h^{-1}} x_h, from which the excluded terms are removed
    let terms: Vec<Mat> = (0..n).map(|h| &kernel.steps()[st.inverse[h].index()] * &x[h]).collect();
    (0..n)
        .map(|g| {
            let mut acc = linalg::zeros(r);
            for h in &st.next[g] {
                acc += &terms[h.index()];
            }
            let mut out = kernel.steps()[g].clone() + acc * &x[g];
            for (h, h2) in &st.factorizations[g] {
                out += kernel.p(*h) * &x[h2.index()];
            }
            out
        })
        .collect()
}

/// Minimal nonnegative solution of the hitting equations, by monotone
/// iteration from zero.
pub fn solve_hitting(group: &PlainGroup, kernel: &ColoredKernel, tol: f64, max_iter: usize) -> Result<HittingMatrices> {
    check_preconditions(group, kernel)?;
    let st = Structure::new(group);
    let r = kernel.colors();
    let mut x = vec![linalg::zeros(r); group.alphabet_size()];
    let mut monotone = true;
    let mut delta = f64::INFINITY;
    for it in 1..=max_iter {
        let next = hitting_map(&st, kernel, &x);
        delta = 0.0;
        for (a, b) in next.iter().zip(&x) {
            for (u, v) in a.iter().zip(b.iter()) {
                if u < &(v - 1e-15) {
                    monotone = false;
                }
                delta = delta.max((u - v).abs());
            }
        }
        x = next;
        if delta < tol {
            let fx = hitting_map(&st, kernel, &x);
            let residual = fx.iter().zip(&x).map(|(a, b)| linalg::max_abs_diff(a, b)).fold(0.0, f64::max);
            return Ok(HittingMatrices { q: x, residual, iterations: it, monotone });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: delta })
}

/// Which route produced the returned traffic solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficPath {
    Linear,
    Iteration,
    FreeClosedForm,
}

#[derive(Clone, Debug)]
pub struct TrafficSolution {
    pub mu: Vec<Mat>,
    /// Diagonal of `Δ_g`.
    pub delta: Vec<Vector>,
    /// `y_g = μ_g 1`.
    pub y: Vec<Vector>,
    pub pi: Vector,
    /// Sup norm of the traffic map residual at `μ`.
    pub traffic_residual: f64,
    /// Largest deviation of `Σ_g μ_g` from row-stochastic.
    pub stochastic_residual: f64,
    /// Distance between the linear and iterated routes, when both ran.
    pub cross_check: Option<f64>,
    pub path: TrafficPath,
    pub iterations: usize,
}

impl TrafficSolution {
    pub fn mu(&self, g: Generator) -> &Mat {
        &self.mu[g.index()]
    }

    pub fn delta(&self, g: Generator) -> &Vector {
        &self.delta[g.index()]
    }

    fn from_mu(group: &PlainGroup, kernel: &ColoredKernel, mu: Vec<Mat>, path: TrafficPath, iterations: usize) -> Result<Self> {
        let st = Structure::new(group);
        let r = kernel.colors();
        let y: Vec<Vector> = mu.iter().map(linalg::row_sums).collect();
        let delta = delta_from_y(&st, &y, r);
        let total = mu.iter().fold(linalg::zeros(r), |acc, m| acc + m);
        let stochastic_residual = linalg::row_sums(&total).iter().fold(0.0f64, |a, s| a.max((s - 1.0).abs()));
        let fx = traffic_map(&st, kernel, &mu);
        let traffic_residual = fx.iter().zip(&mu).map(|(a, b)| linalg::max_abs_diff(a, b)).fold(0.0, f64::max);
        let pi = kernel.summary()?.pi;
        Ok(TrafficSolution { mu, delta, y, pi, traffic_residual, stochastic_residual, cross_check: None, path, iterations })
    }
}

fn delta_from_y(st: &Structure, y: &[Vector], r: usize) -> Vec<Vector> {
    (0..y.len())
        .map(|g| st.next[g].iter().fold(Vector::zeros(r), |acc, h| acc + &y[h.index()]))
        .collect()
}

/// Multiplies column `v` of `m` by `1/d[v]`, treating `0/0` as 0.
fn scale_columns_inv(m: &Mat, d: &Vector) -> Mat {
    let mut out = m.clone();
    for v in 0..d.len() {
        let s = if d[v] > 0.0 { 1.0 / d[v] } else { 0.0 };
        out.column_mut(v).scale_mut(s);
    }
    out
}

fn scale_columns(m: &Mat, d: &Vector) -> Mat {
    let mut out = m.clone();
    for v in 0..d.len() {
        out.column_mut(v).scale_mut(d[v]);
    }
    out
}

/// The traffic map: `p_g Δ_g + Σ_{hh'=g} p_h x_{h'} + Σ_{h∈Next(g)} p_{h^{-1}} x_h Δ_h^{-1} x_g`.
fn traffic_map(st: &Structure, kernel: &ColoredKernel, x: &[Mat]) -> Vec<Mat> {
    let r = kernel.colors();
    let y: Vec<Vector> = x.iter().map(linalg::row_sums).collect();
    let delta = delta_from_y(st, &y, r);
    let terms: Vec<Mat> = (0..x.len())
        .map(|h| &kernel.steps()[st.inverse[h].index()] * scale_columns_inv(&x[h], &delta[h]))
        .collect();
    (0..x.len())
        .map(|g| {
            let mut acc = linalg::zeros(r);
            for h in &st.next[g] {
                acc += &terms[h.index()];
            }
            let mut out = scale_columns(&kernel.steps()[g], &delta[g]) + acc * &x[g];
            for (h, h2) in &st.factorizations[g] {
                out += kernel.p(*h) * &x[h2.index()];
            }
            out
        })
        .collect()
}

/// Route through `q`: solve the linear system for `y`, then `μ_g = q_g Δ_g`.
fn traffic_linear(st: &Structure, kernel: &ColoredKernel, hit: &HittingMatrices) -> Result<Vec<Mat>> {
    let n = st.next.len();
    let r = kernel.colors();
    let dim = n * r;
    // rows: n*r equations T y = 0, then r normalization rows Σ_g y_g = 1
    let mut t = Mat::zeros(dim + r, dim);
    let mut rhs = Vector::zeros(dim + r);
    let terms: Vec<Mat> = (0..n).map(|h| &kernel.steps()[st.inverse[h].index()] * &hit.q[h]).collect();
    for g in 0..n {
        let mut diag = Mat::identity(r, r);
        for h in &st.next[g] {
            diag -= &terms[h.index()];
        }
        let mut block = t.view_mut((g * r, g * r), (r, r));
        block += &diag;
        let pg = &kernel.steps()[g];
        for h in &st.next[g] {
            let mut block = t.view_mut((g * r, h.index() * r), (r, r));
            block -= pg;
        }
        for (h, h2) in &st.factorizations[g] {
            let mut block = t.view_mut((g * r, h2.index() * r), (r, r));
            block -= kernel.p(*h);
        }
    }
    for g in 0..n {
        for u in 0..r {
            t[(dim + u, g * r + u)] = 1.0;
        }
    }
    for u in 0..r {
        rhs[dim + u] = 1.0;
    }
    let svd = t.clone().svd(true, true);
    let smallest = svd.singular_values.iter().cloned().fold(f64::INFINITY, f64::min);
    let largest = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smallest <= largest * 1e-13 {
        return Err(Error::Singular(format!("traffic system rank deficient (σ_min = {smallest:e})")));
    }
    let y = svd.solve(&rhs, 1e-15).map_err(|e| Error::Singular(e.to_string()))?;
    let fit = (&t * &y - &rhs).amax();
    if fit > 1e-9 {
        return Err(Error::Singular(format!("traffic system inconsistent (residual {fit:e})")));
    }
    let ys: Vec<Vector> = (0..n).map(|g| y.rows(g * r, r).into_owned().map(|v| v.max(0.0))).collect();
    let delta = delta_from_y(st, &ys, r);
    Ok((0..n).map(|g| scale_columns(&hit.q[g], &delta[g])).collect())
}

/// Direct iteration of the traffic map with scalar renormalization.
fn traffic_iterate(st: &Structure, kernel: &ColoredKernel, hit: &HittingMatrices, tol: f64, max_iter: usize) -> Result<(Vec<Mat>, usize)> {
    let n = st.next.len();
    let r = kernel.colors();
    let normalize = |x: &mut Vec<Mat>| {
        let total = x.iter().fold(linalg::zeros(r), |acc, m| acc + m);
        let s = linalg::row_sums(&total).mean();
        for m in x.iter_mut() {
            *m /= s;
        }
    };
    let mut x: Vec<Mat> = hit.q.iter().map(|q| q / n as f64).collect();
    normalize(&mut x);
    let mut delta = f64::INFINITY;
    for it in 1..=max_iter {
        let mut next = traffic_map(st, kernel, &x);
        normalize(&mut next);
        delta = next.iter().zip(&x).map(|(a, b)| linalg::max_abs_diff(a, b)).fold(0.0, f64::max);
        x = next;
        if delta < tol {
            return Ok((x, it));
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, residual: delta })
}

/// Solves the traffic equations by both routes and cross-checks them.
pub fn solve_traffic(group: &PlainGroup, kernel: &ColoredKernel, hit: &HittingMatrices, tol: f64) -> Result<TrafficSolution> {
    check_preconditions(group, kernel)?;
    let st = Structure::new(group);
    let linear = traffic_linear(&st, kernel, hit);
    let iterated = traffic_iterate(&st, kernel, hit, tol, DEFAULT_MAX_ITER);
    match (linear, iterated) {
        (Ok(mu), Ok((mu_it, iters))) => {
            let distance = mu.iter().zip(&mu_it).map(|(a, b)| linalg::max_abs_diff(a, b)).fold(0.0, f64::max);
            if distance > 1e-6 {
                return Err(Error::PathDisagreement(distance));
            }
            let mut sol = TrafficSolution::from_mu(group, kernel, mu, TrafficPath::Linear, iters)?;
            sol.cross_check = Some(distance);
            Ok(sol)
        }
        (Ok(mu), Err(_)) => TrafficSolution::from_mu(group, kernel, mu, TrafficPath::Linear, 0),
        (Err(_), Ok((mu, iters))) => TrafficSolution::from_mu(group, kernel, mu, TrafficPath::Iteration, iters),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Closed form for free groups (every finite factor of order 2):
/// `μ_g(u,v) = q_g(u,v) Σ_w [(I - q_{g^{-1}} q_g)^{-1} (I - d_{g^{-1}})](v,w)`.
pub fn free_group_mu(group: &PlainGroup, kernel: &ColoredKernel, hit: &HittingMatrices) -> Result<TrafficSolution> {
    if !group.is_free_extended() {
        return Err(Error::Precondition("closed form needs every finite factor of order 2".into()));
    }
    let r = kernel.colors();
    let mut mu = Vec::with_capacity(group.alphabet_size());
    for g in group.generators() {
        let gi = group.inverse(g);
        let a = Mat::identity(r, r) - hit.get(gi) * hit.get(g);
        let b = Mat::from_diagonal(&hit.reach(gi).map(|d| 1.0 - d));
        let m = linalg::solve(&a, &b).map_err(|_| Error::Singular("I - q_{g^-1} q_g is singular".into()))?;
        mu.push(scale_columns(hit.get(g), &linalg::row_sums(&m)));
    }
    TrafficSolution::from_mu(group, kernel, mu, TrafficPath::FreeClosedForm, 0)
}

/// A cylinder of the boundary seen from a starting color.
#[derive(Clone, Debug)]
pub struct CylinderQuery {
    pub color: usize,
    pub word: Word,
}

impl CylinderQuery {
    pub fn new(color: usize, word: Word) -> Result<Self> {
        if word.is_empty() {
            return Err(Error::Precondition("cylinder needs at least one letter".into()));
        }
        Ok(CylinderQuery { color, word })
    }
}

/// Row vector `1_u^T q_{ξ1} ... q_{ξ_{n-1}} μ_{ξn}`: the law of the first `n`
/// boundary letters jointly with the color at the `n`-th.
pub fn cylinder_colors(query: &CylinderQuery, q: &HittingMatrices, sol: &TrafficSolution) -> Vector {
    let letters = query.word.letters();
    let r = sol.pi.len();
    let mut row = nalgebra::RowDVector::<f64>::zeros(r);
    row[query.color] = 1.0;
    for &g in &letters[..letters.len() - 1] {
        row = row * q.get(g);
    }
    row = row * sol.mu(*letters.last().unwrap());
    row.transpose()
}

/// `p∞_u(ξ1 ... ξn)`.
pub fn harmonic_cylinder(query: &CylinderQuery, q: &HittingMatrices, sol: &TrafficSolution) -> f64 {
    cylinder_colors(query, q, sol).sum()
}

/// `ν_v(g·C)`: harmonic mass of the image of the cylinder `C` under `g`.
pub fn translated_cylinder(group: &PlainGroup, g: Generator, color: usize, word: &Word, q: &HittingMatrices, sol: &TrafficSolution) -> f64 {
    let image = group.boundary_prefix_action(g, word);
    if image.is_empty() {
        // g cancelled the only letter: the image is every cylinder over Next(ξ1)
        let xi1 = word.first().unwrap();
        return group
            .next_set(xi1)
            .into_iter()
            .map(|h| harmonic_cylinder(&CylinderQuery { color, word: group.letter_word(h) }, q, sol))
            .sum();
    }
    harmonic_cylinder(&CylinderQuery { color, word: image }, q, sol)
}

/// Largest violation of `ν_u(C) = Σ_{g,v} p_g(u,v) ν_v(g^{-1} C)` over
/// cylinders of length at most 3.
pub fn stationarity_residual(group: &PlainGroup, kernel: &ColoredKernel, q: &HittingMatrices, sol: &TrafficSolution) -> f64 {
    let r = kernel.colors();
    let mut worst = 0.0f64;
    for len in 1..=3 {
        for word in group.words_of_length(len) {
            for u in 0..r {
                let lhs = harmonic_cylinder(&CylinderQuery { color: u, word: word.clone() }, q, sol);
                let mut rhs = 0.0;
                for g in group.generators() {
                    let pg = kernel.p(g);
                    for v in 0..r {
                        if pg[(u, v)] > 0.0 {
                            rhs += pg[(u, v)] * translated_cylinder(group, group.inverse(g), v, &word, q, sol);
                        }
                    }
                }
                worst = worst.max((lhs - rhs).abs());
            }
        }
    }
    worst
}

#[derive(Clone, Debug, Serialize)]
pub struct ZReport {
    /// Set when the check could not run, with the reason.
    pub skipped: Option<String>,
    /// `max_g ||(Z_g + Q_g) Q_g - I||`.
    pub identity_residual: f64,
    /// Smallest real part among the eigenvalues of `z`.
    pub z_min_real: f64,
    /// Smallest real part among the eigenvalues of every `q_g p_g^{-1}`.
    pub qp_min_real: f64,
    pub ok: bool,
}

/// Checks `(Z_g + Q_g) Q_g = I` with `Z_g = P_g^{-1} Z` and the spectra of
/// `z = I - Σ_g p_{g^{-1}} q_g` and `q_g p_g^{-1}`.
pub fn z_consistency_check(group: &PlainGroup, kernel: &ColoredKernel, q: &HittingMatrices) -> ZReport {
    let skip = |why: &str| ZReport {
        skipped: Some(why.to_string()),
        identity_residual: f64::NAN,
        z_min_real: f64::NAN,
        qp_min_real: f64::NAN,
        ok: false,
    };
    if !group.is_free_extended() {
        return skip("group is not free");
    }
    let r = kernel.colors();
    let mut z = Mat::identity(r, r);
    for g in group.generators() {
        z -= kernel.p(group.inverse(g)) * q.get(g);
    }
    let mut zz = Mat::zeros(2 * r, 2 * r);
    zz.view_mut((0, 0), (r, r)).copy_from(&z);
    zz.view_mut((r, r), (r, r)).copy_from(&z);
    let mut identity_residual = 0.0f64;
    let mut qp_min_real = f64::INFINITY;
    for g in group.generators() {
        let gi = group.inverse(g);
        let Ok(pinv) = linalg::inverse(kernel.p(g)) else {
            return skip("some p_g is singular");
        };
        let block = |a: &Mat, b: &Mat| {
            let mut m = Mat::zeros(2 * r, 2 * r);
            m.view_mut((0, r), (r, r)).copy_from(a);
            m.view_mut((r, 0), (r, r)).copy_from(b);
            m
        };
        let pg = block(kernel.p(g), kernel.p(gi));
        let qg = block(q.get(g), q.get(gi));
        let Ok(pg_inv) = linalg::inverse(&pg) else {
            return skip("some P_g is singular");
        };
        let zg = pg_inv * &zz;
        let lhs = (zg + &qg) * &qg;
        identity_residual = identity_residual.max(linalg::max_abs_diff(&lhs, &Mat::identity(2 * r, 2 * r)));
        let qp = q.get(g) * pinv;
        for ev in qp.complex_eigenvalues().iter() {
            qp_min_real = qp_min_real.min(ev.re);
        }
    }
    let z_min_real = z.complex_eigenvalues().iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    ZReport {
        skipped: None,
        identity_residual,
        z_min_real,
        qp_min_real,
        ok: identity_residual <= 1e-8 && z_min_real > 0.0 && qp_min_real > 0.0,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LalleyReport {
    pub k: usize,
    pub m: usize,
    pub holds: bool,
    pub words_checked: usize,
    /// Up to ten offending words, formatted.
    pub violations: Vec<String>,
}

/// Checks that for reduced words `x_1 ... x_{n+k}` with `m <= n <= m + k`
/// the positivity pattern of `q_{x_1} ... q_{x_{n+k}}` has identical rows,
/// depending only on the last `k` letters.
pub fn lalley_condition_check(group: &PlainGroup, q: &HittingMatrices, k: usize, m: usize) -> LalleyReport {
    let r = q.q.first().map_or(0, |x| x.nrows());
    let pattern: Vec<Vec<bool>> = q.q.iter().map(|x| x.iter().map(|&v| v > 0.0).collect()).collect();
    // column-major boolean product, matching nalgebra storage
    let mul = |a: &[bool], b: &[bool]| {
        let mut out = vec![false; r * r];
        for i in 0..r {
            for j in 0..r {
                out[i + j * r] = (0..r).any(|l| a[i + l * r] && b[l + j * r]);
            }
        }
        out
    };
    let mut seen: std::collections::HashMap<Vec<Generator>, Vec<bool>> = std::collections::HashMap::new();
    let mut violations = Vec::new();
    let mut words_checked = 0;
    let min_len = m + k;
    let max_len = m + 2 * k;
    let identity: Vec<bool> = (0..r * r).map(|i| i % (r + 1) == 0).collect();
    let mut stack: Vec<(Vec<Generator>, Vec<bool>)> = vec![(Vec::new(), identity)];
    while let Some((word, prod)) = stack.pop() {
        if word.len() >= min_len.max(1) {
            words_checked += 1;
            let row0: Vec<bool> = (0..r).map(|j| prod[j * r]).collect();
            let rows_equal = (1..r).all(|i| (0..r).all(|j| prod[i + j * r] == row0[j]));
            let tail = word[word.len() - k.min(word.len())..].to_vec();
            let consistent = match seen.get(&tail) {
                Some(b) => *b == row0,
                None => {
                    seen.insert(tail, row0.clone());
                    true
                }
            };
            let nonempty = row0.iter().any(|&b| b);
            if !(rows_equal && consistent && nonempty) && violations.len() < 10 {
                let w = group.reduce(&word);
                violations.push(group.format_word(&w));
            }
            if !(rows_equal && consistent && nonempty) && violations.len() >= 10 {
                continue;
            }
        }
        if word.len() < max_len {
            for g in group.generators() {
                if word.last().map_or(true, |&l| group.in_next(l, g)) {
                    let mut w = word.clone();
                    w.push(g);
                    let p = mul(&prod, &pattern[g.index()]);
                    stack.push((w, p));
                }
            }
        }
    }
    LalleyReport { k, m, holds: violations.is_empty(), words_checked, violations }
}

/// Smallest `(k, m)` in lexicographic order of `k + m` for which the check holds.
pub fn find_lalley_parameters(group: &PlainGroup, q: &HittingMatrices, k_max: usize, m_max: usize) -> Option<LalleyReport> {
    for total in 1..=(k_max + m_max) {
        for k in 1..=k_max.min(total) {
            let m = total - k;
            if m > m_max {
                continue;
            }
            let rep = lalley_condition_check(group, q, k, m);
            if rep.holds {
                return Some(rep);
            }
        }
    }
    None
}

/// Whether the bracket `μ_g <= q_g <= 1` holds entrywise.
pub fn bracket_holds(q: &HittingMatrices, sol: &TrafficSolution, tol: f64) -> bool {
    q.q.iter().zip(&sol.mu).all(|(qg, mg)| {
        qg.iter().zip(mg.iter()).all(|(a, b)| *b <= a + tol && *a <= 1.0 + tol && *b >= -tol)
    })
}
