//! End-to-end analysis of a configured walk, and the invariant suite.
//!
//! Scalar walks are linearized and their colored drift and entropy are
//! rescaled by `E[τ1]`. Mass at the identity only slows a scalar walk down,
//! so it is removed first and the rates are multiplied by `1 - p_e`.

use serde::Serialize;

use crate::boundary::{self, HittingMatrices, TrafficPath, TrafficSolution, ZReport};
use crate::config::WalkSpec;
use crate::drift_entropy::{self, EntropyOptions, Report};
use crate::error::{Error, Result};
use crate::group::{PlainGroup, Word};
use crate::kernel::{check_reversible, ColoredKernel, ScalarWalk};
use crate::linearize::{self, Construction, LinearizationResult};

#[derive(Clone, Debug)]
pub struct PipelineOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub construction: Construction,
    /// Monte Carlo entropy settings; `None` skips the entropy.
    pub entropy: Option<EntropyOptions>,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions { tol: 1e-13, max_iter: 1_000_000, construction: Construction::General, entropy: Some(EntropyOptions::default()) }
    }
}

/// Everything computed for one walk.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub kernel: ColoredKernel,
    pub linearization: Option<LinearizationResult>,
    /// Walk after removing identity mass, for scalar input.
    pub stripped: Option<ScalarWalk>,
    /// `E[τ1] (1 - p_e)`: converts colored rates into rates of the input walk.
    pub scale: f64,
    pub hit: HittingMatrices,
    pub traffic: TrafficSolution,
    pub drift_colored: Report,
    pub entropy_colored: Option<Report>,
    pub entropy_closed: Option<Report>,
}

/// Serializable summary of an [`Analysis`].
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub colors: usize,
    pub construction: Option<Construction>,
    pub expected_tau: Option<f64>,
    pub scale: f64,
    pub hitting_iterations: usize,
    pub hitting_residual: f64,
    pub traffic_path: TrafficPath,
    pub traffic_residual: f64,
    pub traffic_cross_check: Option<f64>,
    pub drift: Report,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy: Option<Report>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub entropy_closed_form: Option<Report>,
}

fn scaled(r: &Report, s: f64) -> Report {
    Report { value: r.value * s, ci_half_width: r.ci_half_width.map(|c| c * s), ..r.clone() }
}

impl Analysis {
    pub fn drift(&self) -> f64 {
        self.drift_colored.value * self.scale
    }

    pub fn entropy(&self) -> Option<Report> {
        self.entropy_closed.as_ref().or(self.entropy_colored.as_ref()).map(|r| scaled(r, self.scale))
    }

    pub fn summary(&self) -> Summary {
        Summary {
            colors: self.kernel.colors(),
            construction: self.linearization.as_ref().map(|l| l.construction),
            expected_tau: self.linearization.as_ref().map(|l| l.expected_tau),
            scale: self.scale,
            hitting_iterations: self.hit.iterations,
            hitting_residual: self.hit.residual,
            traffic_path: self.traffic.path,
            traffic_residual: self.traffic.traffic_residual,
            traffic_cross_check: self.traffic.cross_check,
            drift: scaled(&self.drift_colored, self.scale),
            entropy: self.entropy_colored.as_ref().map(|r| scaled(r, self.scale)),
            entropy_closed_form: self.entropy_closed.as_ref().map(|r| scaled(r, self.scale)),
        }
    }
}

/// The walk without its identity mass, renormalized.
pub fn strip_identity(walk: &ScalarWalk) -> Result<ScalarWalk> {
    let pe = walk.identity_mass();
    if pe >= 1.0 {
        return Err(Error::InvalidWalk("walk never moves".into()));
    }
    let entries: Vec<(Word, f64)> = walk.entries().iter().filter(|(w, _)| !w.is_empty()).map(|(w, p)| (w.clone(), p / (1.0 - pe))).collect();
    ScalarWalk::new(entries)
}

pub fn linearize_with(group: &PlainGroup, walk: &ScalarWalk, construction: Construction) -> Result<LinearizationResult> {
    match construction {
        Construction::General => linearize::linearize_prefix(group, walk),
        Construction::Reversible => linearize::linearize_reversible(group, walk),
    }
}

pub fn analyze(group: &PlainGroup, walk: &WalkSpec, opts: &PipelineOptions) -> Result<Analysis> {
    let (kernel, linearization, stripped, scale) = match walk {
        WalkSpec::Scalar(w) => {
            let pe = w.identity_mass();
            let s = strip_identity(w)?;
            let lin = linearize_with(group, &s, opts.construction)?;
            let scale = lin.expected_tau * (1.0 - pe);
            (lin.kernel.clone(), Some(lin), Some(s), scale)
        }
        WalkSpec::Colored(k) => (k.clone(), None, None, 1.0),
    };
    let hit = boundary::solve_hitting(group, &kernel, opts.tol, opts.max_iter)?;
    let traffic = boundary::solve_traffic(group, &kernel, &hit, opts.tol)?;
    let drift_colored = drift_entropy::drift_exact(group, &kernel, &traffic);
    let entropy_closed = if kernel.colors() == 1 { Some(drift_entropy::entropy_colorless_closed(group, &kernel, &hit, &traffic)?) } else { None };
    let entropy_colored = match &opts.entropy {
        Some(e) => Some(drift_entropy::entropy_explicit_mc(group, &kernel, &hit, &traffic, e)?),
        None => None,
    };
    Ok(Analysis { kernel, linearization, stripped, scale, hit, traffic, drift_colored, entropy_colored, entropy_closed })
}

/// One invariant of the suite.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Check {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Check { name: name.into(), value, threshold, passed: value <= threshold, note: None }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Check { name: name.into(), value: if ok { 1.0 } else { 0.0 }, threshold: 1.0, passed: ok, note: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub skipped: Vec<String>,
    pub passed: bool,
}

/// Runs every applicable invariant on a walk and its analysis.
pub fn verify(group: &PlainGroup, walk: &WalkSpec, analysis: &Analysis, opts: &PipelineOptions) -> Result<VerifyReport> {
    let mut checks = Vec::new();
    let mut skipped = Vec::new();
    let k = &analysis.kernel;
    let validation = k.validate(group);
    checks.push(Check::at_most("kernel stochastic residual", validation.stochastic_residual, 1e-12));
    checks.push(Check::flag("kernel irreducible and generating", validation.irreducible && validation.generates));

    if let (Some(lin), Some(s)) = (&analysis.linearization, &analysis.stripped) {
        match linearize::verify_first_return(group, lin, s) {
            Ok(fr) => {
                checks.push(Check::at_most("first-return law error", fr.law_error, 1e-12));
                checks.push(Check::at_most("expected renewal time error", fr.tau_error, 1e-12));
            }
            Err(e) => skipped.push(format!("first-return law: {e}")),
        }
        if lin.construction == Construction::Reversible {
            let rev = check_reversible(group, k)?;
            checks.push(Check::at_most("detailed balance violation", rev.max_violation, 1e-12));
        }
        if s.is_symmetric(group, 1e-12) {
            let other = match lin.construction {
                Construction::General => Construction::Reversible,
                Construction::Reversible => Construction::General,
            };
            let opts2 = PipelineOptions { construction: other, entropy: None, ..opts.clone() };
            let a2 = analyze(group, &WalkSpec::Scalar(s.clone()), &opts2)?;
            checks.push(Check::at_most("drift agreement across constructions", (a2.drift() - analysis.drift_colored.value * lin.expected_tau).abs(), 1e-6));
        } else {
            skipped.push("construction independence: walk is not symmetric".into());
        }
    }

    checks.push(Check::at_most("hitting residual", analysis.hit.residual, (opts.tol * 100.0).max(1e-10)));
    checks.push(Check::flag("hitting iteration monotone", analysis.hit.monotone));
    checks.push(Check::at_most("traffic residual", analysis.traffic.traffic_residual, 1e-10));
    checks.push(Check::at_most("harmonic measure stochasticity", analysis.traffic.stochastic_residual, 1e-10));
    match analysis.traffic.cross_check {
        Some(d) => checks.push(Check::at_most("traffic dual-path agreement", d, 1e-8)),
        None => skipped.push("traffic dual path: one route failed".into()),
    }
    checks.push(Check::flag("escape matrices bounded by hitting matrices", boundary::bracket_holds(&analysis.hit, &analysis.traffic, 1e-12)));
    if group.is_free_extended() {
        let fm = boundary::free_group_mu(group, k, &analysis.hit)?;
        let d = fm.mu.iter().zip(&analysis.traffic.mu).map(|(a, b)| crate::linalg::max_abs_diff(a, b)).fold(0.0, f64::max);
        checks.push(Check::at_most("free-group closed form agreement", d, 1e-8));
    }
    let stat = boundary::stationarity_residual(group, k, &analysis.hit, &analysis.traffic);
    checks.push(Check::at_most("stationarity residual", stat, 1e-10));
    let z: ZReport = boundary::z_consistency_check(group, k, &analysis.hit);
    match &z.skipped {
        Some(why) => skipped.push(format!("z relation: {why}")),
        None => {
            checks.push(Check::at_most("z relation residual", z.identity_residual, 1e-8));
            checks.push(Check::flag("z relation spectra in right half-plane", z.z_min_real > 0.0 && z.qp_min_real > 0.0));
        }
    }
    match boundary::find_lalley_parameters(group, &analysis.hit, 4, 4) {
        Some(_) => checks.push(Check::flag("product convergence condition", true)),
        None => {
            let mut c = Check::flag("product convergence condition", false);
            c.note = Some("no (k, m) up to (4, 4) found".into());
            checks.push(c);
        }
    }
    if let Some(h) = analysis.entropy() {
        let gamma = analysis.drift();
        let support = match walk {
            WalkSpec::Scalar(w) => w.support_size() as f64,
            WalkSpec::Colored(_) => group.alphabet_size() as f64,
        };
        let slack = h.ci_half_width.unwrap_or(0.0);
        checks.push(Check::flag("entropy positive", h.value > 0.0));
        checks.push(Check::at_most("entropy over drift times log support", h.value - slack - gamma * support.ln(), 0.0));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, skipped, passed })
}
