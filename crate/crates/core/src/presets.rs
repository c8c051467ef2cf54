//! Named example configurations.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{GroupConfig, McConfig, OutputConfig, RunConfig, SolverConfig, WalkConfig};
use crate::error::{Error, Result};
use crate::group::PlainGroup;
use crate::instances::{self, TwoFactorProfile};
use crate::kernel::ScalarWalk;

pub const NAMES: &[&str] = &["srw-f2", "z3z3", "renewal-scaling", "entropy-renewal", "dense-colored", "application-sec6", "figure1"];

/// Parameters of the two-factor example, `L`, `k1`, `k2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ApplicationParams {
    pub max_len: usize,
    pub k1: usize,
    pub k2: usize,
}

impl Default for ApplicationParams {
    fn default() -> Self {
        ApplicationParams { max_len: 3, k1: 2, k2: 2 }
    }
}

impl ApplicationParams {
    /// Parses `L=3 k1=2 k2=2` style assignments.
    pub fn parse(args: &[String]) -> Result<Self> {
        let mut p = ApplicationParams::default();
        for a in args {
            let (key, value) = a.split_once('=').ok_or_else(|| Error::Parse(format!("expected key=value, got `{a}`")))?;
            let v: usize = value.parse().map_err(|_| Error::Parse(format!("`{value}` is not a count")))?;
            match key {
                "L" => p.max_len = v,
                "k1" => p.k1 = v,
                "k2" => p.k2 = v,
                _ => return Err(Error::Parse(format!("unknown parameter `{key}`"))),
            }
        }
        if p.max_len == 0 {
            return Err(Error::Parse("L must be at least 1".into()));
        }
        Ok(p)
    }

    pub fn profile(&self) -> TwoFactorProfile {
        TwoFactorProfile::reference(self.max_len, self.k1, self.k2)
    }
}

fn scalar(group: &PlainGroup, walk: &ScalarWalk, mc: McConfig) -> RunConfig {
    RunConfig {
        group: GroupConfig::from_group(group),
        walk: WalkConfig::from_scalar(group, walk),
        solver: SolverConfig::default(),
        mc,
        output: OutputConfig::default(),
    }
}

/// The symmetric length-two walk used for renewal scaling.
pub fn renewal_walk(group: &PlainGroup) -> ScalarWalk {
    instances::random_walk(group, 2, 0.0, 0.5, true, &mut ChaCha8Rng::seed_from_u64(0))
}

/// A sparse symmetric length-two walk whose exact law stays enumerable.
pub fn entropy_walk(group: &PlainGroup) -> ScalarWalk {
    instances::random_walk(group, 2, 0.0, 0.2, true, &mut ChaCha8Rng::seed_from_u64(0))
}

pub fn figure_walk() -> (PlainGroup, ScalarWalk) {
    instances::curve_walk(&mut ChaCha8Rng::seed_from_u64(5))
}

pub fn config(name: &str, args: &[String]) -> Result<RunConfig> {
    if name != "application-sec6" && !args.is_empty() {
        return Err(Error::Parse(format!("preset `{name}` takes no parameters")));
    }
    let f2 = PlainGroup::free(2);
    let quick = McConfig { n_paths: 2000, horizon: 500, ..McConfig::default() };
    let cfg = match name {
        "srw-f2" => scalar(&f2, &instances::uniform_nearest_neighbor(&f2), McConfig { entropy_horizon: 10, ..quick }),
        "z3z3" => {
            let g = PlainGroup::cyclic_product(&[3, 3])?;
            scalar(&g, &instances::uniform_nearest_neighbor(&g), quick)
        }
        "renewal-scaling" => scalar(&f2, &renewal_walk(&f2), McConfig::default()),
        "entropy-renewal" => scalar(&f2, &entropy_walk(&f2), McConfig { entropy_horizon: 11, ..quick }),
        "dense-colored" => {
            let k = instances::random_dense_kernel(&f2, 3, &mut ChaCha8Rng::seed_from_u64(4));
            RunConfig {
                group: GroupConfig::from_group(&f2),
                walk: WalkConfig::from_kernel(&f2, &k),
                solver: SolverConfig::default(),
                mc: McConfig { entropy_horizon: 6, ..quick },
                output: OutputConfig::default(),
            }
        }
        "application-sec6" => {
            let (g, w) = ApplicationParams::parse(args)?.profile().build()?;
            scalar(&g, &w, quick)
        }
        "figure1" => {
            let (g, w) = figure_walk();
            scalar(&g, &w, McConfig { action_size: 10_000_000, action_horizon: 12, ..McConfig::default() })
        }
        _ => return Err(Error::Parse(format!("unknown preset `{name}`; known: {}", NAMES.join(", ")))),
    };
    Ok(cfg)
}
