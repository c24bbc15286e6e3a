use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::behavior::{BehaviorSpec, ReferenceWorld};
use crate::environment::EnvConfig;
use crate::error::{invalid_config, Result};
use crate::learners::{Method, TrainConfig, Variant};

pub const DEMAND_FACTORS: [f64; 5] = [0.5, 0.85, 1.0, 1.15, 1.5];
pub const COMPETITION_FACTORS: [f64; 5] = [0.7, 0.85, 1.0, 1.15, 1.3];
/// Quadratic price terms: none, mild, moderate, severe.
pub const QUADRATIC_LEVELS: [(&str, f64); 4] =
    [("none", 0.0), ("mild", -0.000_05), ("moderate", -0.000_1), ("severe", -0.000_2)];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    Mnl,
    Nested,
    Bimodal,
    Dynamic,
    Quadratic,
}

/// Ground truth of one world, built from the shipped reference parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldSpec {
    pub family: FamilyKind,
    pub nest_lambda: f64,
    pub beta2: f64,
    /// Mixing period for the dynamic family; the episode length if unset.
    pub period: Option<f64>,
    pub demand_scale: f64,
    pub competition_scale: f64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            family: FamilyKind::Mnl,
            nest_lambda: 0.4,
            beta2: 0.0,
            period: None,
            demand_scale: 1.0,
            competition_scale: 1.0,
        }
    }
}

impl WorldSpec {
    pub fn behavior(&self, world: &ReferenceWorld, episode_length: usize) -> BehaviorSpec {
        match self.family {
            FamilyKind::Mnl => world.mnl(),
            FamilyKind::Nested => world.nested(self.nest_lambda),
            FamilyKind::Bimodal => world.bimodal(),
            FamilyKind::Dynamic => world.dynamic(self.period.unwrap_or(episode_length as f64)),
            FamilyKind::Quadratic => world.quadratic(self.beta2),
        }
    }

    pub fn env_config(&self, base: &EnvConfig) -> EnvConfig {
        EnvConfig { demand_scale: self.demand_scale, competition_scale: self.competition_scale, ..base.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    /// World the agent (and its choice model) is trained in; the reference
    /// MNL world if unset.
    #[serde(default)]
    pub train: WorldSpec,
    /// World used for evaluation; the training world if unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<WorldSpec>,
}

impl Scenario {
    pub fn eval_world(&self) -> &WorldSpec {
        self.eval.as_ref().unwrap_or(&self.train)
    }
}

/// Where the agent's choice-model parameters come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Calibration {
    /// Primary segment of the training world, as an MNL.
    Exact,
    /// MNL maximum likelihood on simulated bookings from the training world.
    Fitted { n_bookings: usize, seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub name: String,
    pub methods: Vec<Method>,
    /// Method every other one is compared against.
    pub control: Method,
    pub variant: Variant,
    pub seeds: Vec<u64>,
    pub eval_episodes: usize,
    pub alpha: f64,
    /// Equivalence margin as a fraction of the control mean; no TOST when unset.
    pub tost_margin: Option<f64>,
    pub calibration: Calibration,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub scenarios: Vec<Scenario>,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            name: "stationary".into(),
            methods: vec![Method::Mb, Method::Ca],
            control: Method::Mb,
            variant: Variant::Tabular,
            seeds: (0..20).collect(),
            eval_episodes: 50,
            alpha: 0.05,
            tost_margin: None,
            calibration: Calibration::Fitted { n_bookings: 20_000, seed: 0 },
            env: EnvConfig::default(),
            train: TrainConfig { curve_eval_episodes: 0, ..TrainConfig::default() },
            scenarios: vec![Scenario { name: "baseline".into(), train: WorldSpec::default(), eval: None }],
        }
    }
}

impl Protocol {
    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.train.validate()?;
        if self.methods.is_empty() {
            return Err(invalid_config("methods", "at least one method"));
        }
        if self.methods.iter().collect::<HashSet<_>>().len() != self.methods.len() {
            return Err(invalid_config("methods", "methods must be distinct"));
        }
        if self.seeds.is_empty() || self.seeds.iter().collect::<HashSet<_>>().len() != self.seeds.len() {
            return Err(invalid_config("seeds", "a nonempty list of distinct seeds"));
        }
        if self.methods.len() > 1 {
            if !self.methods.contains(&self.control) {
                return Err(invalid_config("control", "must be one of the listed methods"));
            }
            if self.seeds.len() < 2 {
                return Err(invalid_config("seeds", "comparisons need at least two seeds"));
            }
        }
        if self.scenarios.is_empty() {
            return Err(invalid_config("scenarios", "at least one scenario"));
        }
        let names: HashSet<&str> = self.scenarios.iter().map(|s| s.name.as_str()).collect();
        if names.len() != self.scenarios.len() {
            return Err(invalid_config("scenarios", "scenario names must be unique"));
        }
        for s in &self.scenarios {
            for w in [&s.train, s.eval_world()] {
                if !(w.nest_lambda > 0.0 && w.nest_lambda <= 1.0) || w.beta2 > 0.0 {
                    return Err(invalid_config(
                        "scenarios",
                        format!("{}: need lambda in (0, 1] and beta2 <= 0", s.name),
                    ));
                }
                if w.demand_scale <= 0.0 || w.competition_scale <= 0.0 {
                    return Err(invalid_config("scenarios", format!("{}: scales must be positive", s.name)));
                }
            }
        }
        if !(0.0..1.0).contains(&self.alpha) || self.alpha == 0.0 {
            return Err(invalid_config("alpha", "must lie in (0, 1)"));
        }
        if self.tost_margin.is_some_and(|m| m <= 0.0) {
            return Err(invalid_config("tost_margin", "must be positive"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let p: Protocol = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("protocol serializes");
        hex::encode(Sha256::digest(json))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Stationary,
    Shift,
    Misspec,
    Oof,
}

impl std::str::FromStr for Preset {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stationary" => Ok(Preset::Stationary),
            "shift" => Ok(Preset::Shift),
            "misspec" => Ok(Preset::Misspec),
            "oof" => Ok(Preset::Oof),
            _ => Err(crate::error::Error::Parse(format!("unknown preset {s:?}"))),
        }
    }
}

fn scenario(name: impl Into<String>, train: WorldSpec, eval: Option<WorldSpec>) -> Scenario {
    Scenario { name: name.into(), train, eval }
}

/// Desk-scale versions of the four experiment families.
pub fn preset(which: Preset) -> Protocol {
    let base = Protocol::default();
    match which {
        Preset::Stationary => Protocol { tost_margin: Some(0.05), ..base },
        Preset::Shift => {
            let mut scenarios = Vec::new();
            for f in DEMAND_FACTORS {
                let eval = WorldSpec { demand_scale: f, ..WorldSpec::default() };
                scenarios.push(scenario(format!("demand_{f:.2}"), WorldSpec::default(), Some(eval)));
            }
            for f in COMPETITION_FACTORS {
                let eval = WorldSpec { competition_scale: f, ..WorldSpec::default() };
                scenarios.push(scenario(format!("competition_{f:.2}"), WorldSpec::default(), Some(eval)));
            }
            Protocol { name: "shift".into(), scenarios, ..base }
        }
        Preset::Misspec => {
            let scenarios = QUADRATIC_LEVELS
                .iter()
                .map(|(n, b)| {
                    scenario(
                        format!("quadratic_{n}"),
                        WorldSpec { family: FamilyKind::Quadratic, beta2: *b, ..WorldSpec::default() },
                        None,
                    )
                })
                .collect();
            Protocol { name: "misspec".into(), scenarios, ..base }
        }
        Preset::Oof => {
            let w = |family| WorldSpec { family, ..WorldSpec::default() };
            Protocol {
                name: "oof".into(),
                methods: vec![Method::Mb, Method::Ca, Method::CaDr],
                scenarios: vec![
                    scenario("nested", w(FamilyKind::Nested), None),
                    scenario("bimodal", w(FamilyKind::Bimodal), None),
                    scenario("dynamic", w(FamilyKind::Dynamic), None),
                ],
                ..base
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for p in [Preset::Stationary, Preset::Shift, Preset::Misspec, Preset::Oof] {
            let proto = preset(p);
            proto.validate().unwrap();
            let back = Protocol::from_toml(&proto.to_toml().unwrap()).unwrap();
            assert_eq!(back, proto);
            assert_eq!(back.hash(), proto.hash());
        }
    }

    #[test]
    fn shift_grid_is_exact() {
        let p = preset(Preset::Shift);
        assert_eq!(p.scenarios.len(), 10);
        let d: Vec<f64> = p.scenarios[..5].iter().map(|s| s.eval_world().demand_scale).collect();
        let c: Vec<f64> = p.scenarios[5..].iter().map(|s| s.eval_world().competition_scale).collect();
        assert_eq!(d, DEMAND_FACTORS);
        assert_eq!(c, COMPETITION_FACTORS);
        assert!(p.scenarios.iter().all(|s| s.train == WorldSpec::default()));
    }

    #[test]
    fn rejects_bad_protocols() {
        let mut p = Protocol::default();
        p.seeds = vec![1];
        assert!(p.validate().is_err());
        let mut p = Protocol::default();
        p.scenarios.push(p.scenarios[0].clone());
        assert!(p.validate().is_err());
        let mut p = Protocol::default();
        p.control = Method::Mpc;
        assert!(p.validate().is_err());
        assert!(Protocol::from_toml("methods = [\"XX\"]").is_err());
    }

    #[test]
    fn minimal_file_uses_defaults() {
        let p = Protocol::from_toml(
            "name = \"tiny\"\nseeds = [1, 2]\n[[scenarios]]\nname = \"a\"\n[scenarios.train]\nfamily = \"nested\"\n",
        )
        .unwrap();
        assert_eq!(p.scenarios[0].train.nest_lambda, 0.4);
        assert_eq!(p.methods, vec![Method::Mb, Method::Ca]);
        assert_ne!(p.hash(), Protocol::default().hash());
    }
}
