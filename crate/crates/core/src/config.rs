//! JSON run configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{FiniteGroup, PlainGroup, Word};
use crate::kernel::{ColoredKernel, ScalarWalk};
use crate::linalg::{self, Mat};
use crate::linearize::Construction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub group: GroupConfig,
    pub walk: WalkConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub mc: McConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupConfig {
    #[serde(default)]
    pub free_rank: usize,
    #[serde(default)]
    pub finite: Vec<FiniteConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum FiniteConfig {
    /// Cyclic group of the given order.
    Cyclic(usize),
    /// Full multiplication table with identity 0.
    Table(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub enum WalkConfig {
    /// Word and probability pairs; words are space-separated letter names,
    /// `e` for the identity.
    Scalar(Vec<ScalarEntry>),
    Colored(ColoredConfig),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarEntry {
    pub word: String,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColoredConfig {
    pub colors: usize,
    /// Mass kept at the identity, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub identity: Option<Vec<Vec<f64>>>,
    /// Matrices `p_g` by letter name; missing letters are zero.
    pub steps: Vec<StepEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepEntry {
    pub letter: String,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub construction: Construction,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-13, max_iter: 1_000_000, construction: Construction::General }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    pub seed: u64,
    pub n_paths: usize,
    pub horizon: usize,
    /// Fixed `ν` truncation depth; calibrated when absent.
    pub nu_depth: Option<usize>,
    pub nu_samples: usize,
    /// Horizon of the exact entropy enumeration; 0 skips it.
    pub entropy_horizon: usize,
    /// Size of the set acted on for the entropy curve.
    pub action_size: usize,
    /// Horizon of the random-action entropy curve; 0 skips the curves.
    pub action_horizon: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            seed: 1,
            n_paths: 20_000,
            horizon: 2000,
            nu_depth: None,
            nu_samples: 100_000,
            entropy_horizon: 0,
            action_size: 100_000,
            action_horizon: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<String>,
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: None, formats: vec!["json".into(), "csv".into()] }
    }
}

/// A built walk.
#[derive(Clone, Debug)]
pub enum WalkSpec {
    Scalar(ScalarWalk),
    Colored(ColoredKernel),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn check(&self) -> Result<()> {
        if !(self.solver.tol > 0.0) || self.solver.max_iter == 0 {
            return Err(Error::Parse("solver.tol and solver.max_iter must be positive".into()));
        }
        for f in &self.output.formats {
            if f != "json" && f != "csv" {
                return Err(Error::Parse(format!("unknown output format `{f}`")));
            }
        }
        Ok(())
    }

    pub fn build_group(&self) -> Result<PlainGroup> {
        let finite = self
            .group
            .finite
            .iter()
            .map(|f| match f {
                FiniteConfig::Cyclic(n) => FiniteGroup::cyclic(*n),
                FiniteConfig::Table(t) => FiniteGroup::from_table(t.clone()),
            })
            .collect::<Result<Vec<_>>>()?;
        PlainGroup::new(self.group.free_rank, finite)
    }

    pub fn build(&self) -> Result<(PlainGroup, WalkSpec)> {
        let group = self.build_group()?;
        let walk = self.walk.build(&group)?;
        Ok((group, walk))
    }
}

impl WalkConfig {
    pub fn build(&self, group: &PlainGroup) -> Result<WalkSpec> {
        match self {
            WalkConfig::Scalar(entries) => {
                let parsed = entries.iter().map(|e| Ok((group.parse_word(&e.word)?, e.p))).collect::<Result<Vec<(Word, f64)>>>()?;
                Ok(WalkSpec::Scalar(ScalarWalk::new(parsed)?))
            }
            WalkConfig::Colored(c) => {
                let r = c.colors;
                let matrix = |rows: &Vec<Vec<f64>>| -> Result<Mat> {
                    if rows.len() != r || rows.iter().any(|row| row.len() != r) {
                        return Err(Error::Parse(format!("matrices must be {r}x{r}")));
                    }
                    linalg::from_rows(rows)
                };
                let identity = match &c.identity {
                    Some(m) => matrix(m)?,
                    None => linalg::zeros(r),
                };
                let mut steps = vec![linalg::zeros(r); group.alphabet_size()];
                for s in &c.steps {
                    let g = group.parse_generator(&s.letter)?;
                    steps[g.index()] += matrix(&s.matrix)?;
                }
                Ok(WalkSpec::Colored(ColoredKernel::new(group, r, identity, steps)?))
            }
        }
    }

    pub fn from_scalar(group: &PlainGroup, walk: &ScalarWalk) -> Self {
        WalkConfig::Scalar(walk.entries().iter().map(|(w, p)| ScalarEntry { word: group.format_word(w), p: *p }).collect())
    }

    pub fn from_kernel(group: &PlainGroup, kernel: &ColoredKernel) -> Self {
        let identity = kernel.has_identity_mass().then(|| linalg::to_rows(kernel.identity()));
        let steps = group
            .generators()
            .filter(|&g| !linalg::is_zero(kernel.p(g)))
            .map(|g| StepEntry { letter: group.name(g).to_string(), matrix: linalg::to_rows(kernel.p(g)) })
            .collect();
        WalkConfig::Colored(ColoredConfig { colors: kernel.colors(), identity, steps })
    }
}

impl GroupConfig {
    pub fn from_group(group: &PlainGroup) -> Self {
        GroupConfig {
            free_rank: group.free_rank(),
            finite: group.finite_factors().iter().map(|f| FiniteConfig::Table(f.table().to_vec())).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"group": {"free_rank": 2, "extra": 1}, "walk": {"scalar": [{"word": "a1", "p": 1.0}]}}"#;
        assert!(matches!(RunConfig::from_json(text), Err(Error::Parse(_))));
    }

    #[test]
    fn colored_round_trip() {
        let g = PlainGroup::free(2);
        let k = crate::instances::uniform_nearest_neighbor(&g).to_kernel(&g).unwrap();
        let cfg = RunConfig {
            group: GroupConfig::from_group(&g),
            walk: WalkConfig::from_kernel(&g, &k),
            solver: Default::default(),
            mc: Default::default(),
            output: Default::default(),
        };
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        match back.build().unwrap().1 {
            WalkSpec::Colored(k2) => assert_eq!(k2, k),
            WalkSpec::Scalar(_) => panic!("expected colored"),
        }
    }

    #[test]
    fn scalar_config_builds() {
        let text = r#"{"group": {"finite": [{"cyclic": 3}, {"cyclic": 3}]},
            "walk": {"scalar": [{"word": "G1.1", "p": 0.25}, {"word": "G1.2", "p": 0.25},
                                {"word": "G2.1", "p": 0.25}, {"word": "G2.2", "p": 0.25}]}}"#;
        let (g, w) = RunConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(g.alphabet_size(), 4);
        assert!(matches!(w, WalkSpec::Scalar(_)));
    }
}
