//! Experiment configuration, read from TOML.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::parse_number;
use crate::inequality::CounterexampleOptions;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Whitney,
    Chains,
    Capacity,
    CheckSp,
    CheckWeak,
    CheckHardy,
    CheckMazya,
    CheckWhitneySum,
    Counterexample,
    Assouad,
    Exhaustion,
}

impl Task {
    pub const ALL: [Task; 11] = [
        Task::Whitney,
        Task::Chains,
        Task::Capacity,
        Task::CheckSp,
        Task::CheckWeak,
        Task::CheckHardy,
        Task::CheckMazya,
        Task::CheckWhitneySum,
        Task::Counterexample,
        Task::Assouad,
        Task::Exhaustion,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Whitney => "whitney",
            Task::Chains => "chains",
            Task::Capacity => "capacity",
            Task::CheckSp => "check-sp",
            Task::CheckWeak => "check-weak",
            Task::CheckHardy => "check-hardy",
            Task::CheckMazya => "check-mazya",
            Task::CheckWhitneySum => "check-whitney-sum",
            Task::Counterexample => "counterexample",
            Task::Assouad => "assouad",
            Task::Exhaustion => "exhaustion",
        }
    }

    /// Tasks that run once per fixture.
    pub fn uses_fixtures(&self) -> bool {
        matches!(self, Task::CheckSp | Task::CheckWeak | Task::CheckHardy)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown task `{s}`")))
    }
}

/// A length written as a number or a fraction string such as "1/64".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Length {
    Number(f64),
    Text(String),
}

impl Length {
    pub fn value(&self) -> Result<f64> {
        let v = match self {
            Length::Number(v) => *v,
            Length::Text(s) => parse_number(s).map_err(|e| Error::Config(e.to_string()))?,
        };
        if v.is_finite() && v > 0.0 {
            Ok(v)
        } else {
            Err(Error::Config(format!("length must be positive, got {v}")))
        }
    }
}

fn length<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Length::deserialize(d)?.value().map_err(serde::de::Error::custom)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParamGrid {
    pub delta: Vec<f64>,
    pub p: Vec<f64>,
    /// empty: the critical exponent for Sobolev checks, q = p for Hardy checks
    pub q: Vec<f64>,
    pub tau: Vec<f64>,
    pub kappa: Vec<f64>,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self { delta: vec![0.5], p: vec![2.0], q: Vec::new(), tau: vec![0.5], kappa: vec![1.0] }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixtureSpec {
    pub families: Vec<String>,
    /// seeds for random families; the run seed when empty
    pub seeds: Vec<u64>,
    /// functions per random family and seed
    pub count: usize,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { families: vec!["linear".into()], seeds: Vec::new(), count: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub csv: String,
    pub json: String,
    /// write Whitney, chain and covering dumps
    pub dumps: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { dir: PathBuf::from("fraclab-out"), csv: "results.csv".into(), json: "results.json".into(), dumps: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleSpec {
    pub m_max: u32,
    pub p: f64,
    pub cells: usize,
    pub window: f64,
    pub outer_radius: f64,
    pub control_delta: f64,
}

impl Default for CounterexampleSpec {
    fn default() -> Self {
        let o = CounterexampleOptions::default();
        Self {
            m_max: 6,
            p: 2.0,
            cells: o.cells,
            window: o.window,
            outer_radius: o.outer_radius,
            control_delta: o.control_delta,
        }
    }
}

impl CounterexampleSpec {
    pub fn options(&self) -> CounterexampleOptions {
        CounterexampleOptions {
            cells: self.cells,
            window: self.window,
            outer_radius: self.outer_radius,
            control_delta: self.control_delta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExhaustionSpec {
    pub sizes: Vec<f64>,
    /// radius of the cos^2 bump at the domain anchor
    #[serde(deserialize_with = "length")]
    pub bump_radius: f64,
}

impl Default for ExhaustionSpec {
    fn default() -> Self {
        Self { sizes: vec![2.0, 4.0, 8.0, 16.0, 32.0], bump_radius: 1.0 / 16.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub tasks: Vec<Task>,
    pub domains: Vec<String>,
    pub params: ParamGrid,
    pub fixtures: FixtureSpec,
    pub h: Vec<Length>,
    pub seed: u64,
    pub output: OutputSpec,
    /// iteration budget for capacity solves
    pub budget: usize,
    pub max_level: i32,
    /// compact sets are discs at the anchor with this fraction of its boundary distance
    #[serde(deserialize_with = "length")]
    pub set_radius: f64,
    pub samples: usize,
    pub counterexample: CounterexampleSpec,
    pub exhaustion: ExhaustionSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            tasks: Vec::new(),
            domains: vec!["unit_square".into()],
            params: ParamGrid::default(),
            fixtures: FixtureSpec::default(),
            h: vec![Length::Text("1/32".into())],
            seed: 0,
            output: OutputSpec::default(),
            budget: 2000,
            max_level: 6,
            set_radius: 0.25,
            samples: 10_000,
            counterexample: CounterexampleSpec::default(),
            exhaustion: ExhaustionSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn resolutions(&self) -> Result<Vec<f64>> {
        self.h.iter().map(Length::value).collect()
    }

    pub fn fixture_seeds(&self) -> Vec<u64> {
        if self.fixtures.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.fixtures.seeds.clone()
        }
    }

    /// Structural checks; parameter combinations are screened per task.
    pub fn validate(&self) -> Result<()> {
        self.resolutions()?;
        for name in &self.domains {
            crate::geometry::make_domain(name).map_err(|e| Error::Config(e.to_string()))?;
        }
        for f in &self.fixtures.families {
            f.parse::<crate::fixtures::Family>().map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.fixtures.count == 0 {
            return Err(Error::Config("fixtures.count must be at least 1".into()));
        }
        if !(self.set_radius > 0.0 && self.set_radius < 1.0) {
            return Err(Error::Config("set_radius must lie in (0, 1)".into()));
        }
        if self.budget == 0 {
            return Err(Error::Config("budget must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_defaults() {
        let cfg = ExperimentConfig::from_toml(
            r#"
            tasks = ["check-sp", "assouad"]
            h = ["1/64", 0.0078125]
            set_radius = "1/8"
            [params]
            delta = [0.5, 0.3]
            [exhaustion]
            bump_radius = 0.125
            "#,
        )
        .unwrap();
        assert_eq!(cfg.tasks, vec![Task::CheckSp, Task::Assouad]);
        assert_eq!(cfg.resolutions().unwrap(), vec![1.0 / 64.0, 1.0 / 128.0]);
        assert_eq!(cfg.params.p, vec![2.0]);
        assert_eq!(cfg.fixture_seeds(), vec![0]);
        assert_eq!((cfg.set_radius, cfg.exhaustion.bump_radius), (0.125, 0.125));
        let back = ExperimentConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_malformed() {
        assert!(matches!(ExperimentConfig::from_toml("tasks = [\"plot\"]"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("h = [\"1/0\"]"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("colour = 1"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::from_toml("domains = [\"torus\"]"), Err(Error::Config(_))));
    }
}
