//! TOML configuration shared by the CLI and the experiment harness.
//!
//! Sections: `[noise]` (model constants), `[sim]` (band, step, horizon,
//! recording, `[sim.initial]` data), `[experiment]` (convergence ladder), and
//! `[output]` (destination directory and formats).  Every field has a default,
//! so an empty file is a valid configuration; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::ExperimentConfig;
use crate::noise::NoiseSpec;
use crate::solver::{InitialCondition, SimConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSection {
    pub n: u32,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    pub c1h: f64,
    pub c2h: f64,
    pub cv: f64,
    pub jmax: u32,
    pub eta: f64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection {
            n: 4,
            beta: 4.0,
            gamma: 4.0,
            rho: 0.7,
            c1h: 3.2,
            c2h: 1.0,
            cv: 1.0,
            jmax: 3,
            eta: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    /// Horizontal solution band; defaults to `2 n`.
    pub kmax: Option<u32>,
    pub dt: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub initial: InitialCondition,
}

impl Default for SimSection {
    fn default() -> Self {
        SimSection {
            kmax: None,
            dt: 1e-3,
            horizon: 0.25,
            record_every: 5,
            initial: InitialCondition::TwoDimPlusFluct {
                hband: 4,
                mband: 1,
                mean_amp: 1.0,
                fluct_amp: 1.0,
                ic_seed: 1,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub ns: Vec<u32>,
    pub realizations: u32,
    pub theta1: f64,
    pub theta2: f64,
    pub delta: f64,
    pub seed: u64,
    pub kmax_factor: u32,
    pub noise_off: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            ns: vec![4, 8, 16],
            realizations: 64,
            theta1: 1.0,
            theta2: 0.5,
            delta: 0.25,
            seed: 1,
            kmax_factor: 2,
            noise_off: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Subset of `json`, `csv`, `svg`.
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".into(), formats: vec!["json".into(), "csv".into(), "svg".into()] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub noise: NoiseSection,
    pub sim: SimSection,
    pub experiment: Option<ExperimentSection>,
    pub output: OutputSection,
}

impl std::str::FromStr for FileConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let cfg: FileConfig = toml::from_str(s)?;
        for f in &cfg.output.formats {
            if !matches!(f.as_str(), "json" | "csv" | "svg") {
                return Err(Error::config(format!("unknown output format {f:?}")));
            }
        }
        Ok(cfg)
    }
}

impl FileConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        let n = &self.noise;
        NoiseSpec {
            n: n.n,
            beta: n.beta,
            gamma: n.gamma,
            rho: n.rho,
            c1h: n.c1h,
            c2h: n.c2h,
            cv: n.cv,
            jmax: n.jmax,
            eta: n.eta,
        }
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            noise: self.noise_spec(),
            kmax: self.sim.kmax.unwrap_or(2 * self.noise.n),
            dt: self.sim.dt,
            horizon: self.sim.horizon,
            record_every: self.sim.record_every,
            initial: self.sim.initial.clone(),
        }
    }

    /// Build the convergence-experiment configuration; requires the
    /// `[experiment]` section.
    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let e = self
            .experiment
            .as_ref()
            .ok_or_else(|| Error::config("missing [experiment] section"))?;
        Ok(ExperimentConfig {
            ns: e.ns.clone(),
            realizations: e.realizations,
            theta1: e.theta1,
            theta2: e.theta2,
            delta: e.delta,
            seed: e.seed,
            kmax_factor: e.kmax_factor,
            template: self.sim_config(),
            noise_off: e.noise_off,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    #[test]
    fn empty_file_gives_documented_defaults() {
        let cfg = FileConfig::from_str("").unwrap();
        let sim = cfg.sim_config();
        assert_eq!(sim.noise.n, 4);
        assert_eq!(sim.kmax, 8, "kmax defaults to 2n");
        assert_eq!(sim.noise.jmax, 3);
        assert!((sim.noise.rho - 0.7).abs() < 1e-15);
        assert!((sim.noise.c1h - 3.2).abs() < 1e-15);
        assert_eq!(sim.record_every, 5);
        assert!(cfg.experiment.is_none());
        assert!(cfg.experiment_config().is_err());
    }

    #[test]
    fn full_file_round_trips() {
        let text = r#"
[noise]
n = 8
beta = 6.0
gamma = 4.0
rho = -0.5
c1h = 4.0
c2h = 2.0
cv = 1.5
jmax = 2
eta = 0.8

[sim]
kmax = 20
dt = 5e-4
horizon = 0.1
record_every = 10

[sim.initial]
kind = "single_mode"
k1 = 1
k2 = 2
m = 0
amp = 0.3

[experiment]
ns = [4, 8]
realizations = 16
theta1 = 0.9
theta2 = 0.4
delta = 0.2
seed = 99
kmax_factor = 3
noise_off = true

[output]
dir = "results"
formats = ["json", "svg"]
"#;
        let cfg = FileConfig::from_str(text).unwrap();
        let sim = cfg.sim_config();
        assert_eq!(sim.kmax, 20);
        assert_eq!(
            sim.initial,
            InitialCondition::SingleMode { k1: 1, k2: 2, m: 0, amp: 0.3 }
        );
        let exp = cfg.experiment_config().unwrap();
        assert_eq!(exp.ns, vec![4, 8]);
        assert_eq!(exp.kmax_factor, 3);
        assert!(exp.noise_off);
        assert_eq!(exp.template.noise.n, 8);
        // Serialize back and reparse.
        let emitted = toml::to_string_pretty(&cfg).unwrap();
        let reparsed = FileConfig::from_str(&emitted).unwrap();
        assert_eq!(reparsed, cfg);
    }

    #[test]
    fn unknown_keys_and_formats_are_rejected() {
        assert!(FileConfig::from_str("[noise]\nnn = 4\n").is_err());
        assert!(FileConfig::from_str("[output]\nformats = [\"pdf\"]\n").is_err());
        // Random-lowmode initial data parses.
        let cfg = FileConfig::from_str(
            "[sim.initial]\nkind = \"random_lowmode\"\nkband = 2\nmband = 1\namp = 0.5\nic_seed = 7\n",
        )
        .unwrap();
        assert_eq!(
            cfg.sim.initial,
            InitialCondition::RandomLowmode { kband: 2, mband: 1, amp: 0.5, ic_seed: 7 }
        );
    }
}
