//! Declarative experiment files: which clips to load, how to prepare them,
//! and how to train and evaluate.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bvh::{read_bvh, read_name_list, resample, select_joints, trim, Skeleton};
use crate::error::{Error, Result};
use crate::metrics::EvalOptions;
use crate::motion::encode_motion;
use crate::nn::ModulationKind;
use crate::train::{TrainConfig, TrainingMotion};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotionEntry {
    pub identity: String,
    pub path: PathBuf,
    /// Frame range `[start, end)` applied after resampling.
    #[serde(default)]
    pub trim: Option<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Conditioning {
    pub kind: ModulationKind,
    /// 1-based levels whose stages receive the id map.
    pub levels: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricSettings {
    pub samples: usize,
    pub window: usize,
    pub local_window: usize,
    pub transition_half_width: usize,
    pub probes: Vec<String>,
}

impl Default for MetricSettings {
    fn default() -> Self {
        let d = EvalOptions::default();
        MetricSettings {
            samples: d.samples,
            window: d.window,
            local_window: d.local_window,
            transition_half_width: d.transition_half_width,
            probes: d.probes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub motions: Vec<MotionEntry>,
    /// File with one joint name per line; all joints are kept when absent.
    #[serde(default)]
    pub keep_joints: Option<PathBuf>,
    pub fps: f64,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub conditioning: Option<Conditioning>,
    #[serde(default)]
    pub metrics: MetricSettings,
}

/// Set `dotted.key` in a TOML table, parsing `value` as a TOML value and
/// falling back to a plain string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut current = table;
    for part in parents {
        current = current
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not a table")))?;
    }
    current.insert(last.to_string(), value);
    Ok(())
}

impl ExperimentConfig {
    /// Parse TOML text, apply `key=value` overrides and resolve relative
    /// paths against `base`.
    pub fn from_toml(text: &str, overrides: &[String], base: &Path) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut config: ExperimentConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for m in &mut config.motions {
            resolve(&mut m.path);
        }
        if let Some(k) = &mut config.keep_joints {
            resolve(k);
        }
        resolve(&mut config.output_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        ExperimentConfig::from_toml(&text, overrides, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.motions.is_empty() {
            return Err(Error::Config("at least one motion is required".into()));
        }
        for (i, m) in self.motions.iter().enumerate() {
            if self.motions[..i].iter().any(|o| o.identity == m.identity) {
                return Err(Error::Config(format!("duplicate motion identity `{}`", m.identity)));
            }
        }
        if !(self.fps > 0.0) {
            return Err(Error::Config(format!("fps must be positive, got {}", self.fps)));
        }
        self.train_config().validate()
    }

    /// Missing inputs, checked before any work starts.
    pub fn check_paths(&self) -> Result<()> {
        let missing = self
            .motions
            .iter()
            .map(|m| &m.path)
            .chain(self.keep_joints.iter())
            .find(|p| !p.is_file());
        match missing {
            Some(p) => Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            )),
            None => Ok(()),
        }
    }

    /// Training settings with the experiment seed and conditioning applied.
    pub fn train_config(&self) -> TrainConfig {
        let mut train = self.train.clone();
        train.seed = self.seed;
        if let Some(c) = &self.conditioning {
            train.model.modulation = c.kind;
            train.model.conditioning_levels = c.levels.clone();
        }
        train
    }

    pub fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            samples: self.metrics.samples,
            window: self.metrics.window,
            local_window: self.metrics.local_window,
            seed: self.seed,
            transition_half_width: self.metrics.transition_half_width,
            probes: self.metrics.probes.clone(),
        }
    }

    /// Parse, select, resample, trim and encode every motion. All clips must
    /// share one skeleton after selection.
    pub fn load_motions(&self) -> Result<(Skeleton, Vec<TrainingMotion>)> {
        self.check_paths()?;
        let keep = self.keep_joints.as_deref().map(read_name_list).transpose()?;
        let mut skeleton: Option<Skeleton> = None;
        let mut motions = Vec::with_capacity(self.motions.len());
        for entry in &self.motions {
            let (mut sk, mut raw) = read_bvh(&entry.path)?;
            if let Some(keep) = &keep {
                (sk, raw) = select_joints(&sk, &raw, keep)?;
            }
            if (raw.fps() - self.fps).abs() > 1e-6 {
                raw = resample(&raw, self.fps)?;
            }
            if let Some([start, end]) = entry.trim {
                raw = trim(&raw, start, end)?;
            }
            match &skeleton {
                None => skeleton = Some(sk.clone()),
                Some(first) => {
                    let names = |s: &Skeleton| s.joints.iter().map(|j| j.name.clone()).collect::<Vec<_>>();
                    if names(first) != names(&sk) {
                        return Err(Error::Skeleton(format!(
                            "`{}` has a different joint hierarchy from the first motion",
                            entry.path.display()
                        )));
                    }
                }
            }
            let root = raw.root_position(&sk, 0);
            motions.push(TrainingMotion {
                name: entry.identity.clone(),
                tensor: encode_motion(&sk, &raw)?,
                initial_root_xz: [root[0], root[2]],
            });
        }
        Ok((skeleton.expect("at least one motion"), motions))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = r#"
fps = 30.0
output_dir = "runs/toy"
seed = 4

[[motions]]
identity = "walk"
path = "walk.bvh"

[[motions]]
identity = "dance"
path = "/data/dance.bvh"
trim = [0, 120]

[train]
iterations_per_level = 10

[train.model]
hidden_width = 24
"#;

    #[test]
    fn parses_and_resolves_paths() {
        let c = ExperimentConfig::from_toml(BASIC, &[], Path::new("/exp")).unwrap();
        assert_eq!(c.motions[0].path, Path::new("/exp/walk.bvh"));
        assert_eq!(c.motions[1].path, Path::new("/data/dance.bvh"));
        assert_eq!(c.motions[1].trim, Some([0, 120]));
        assert_eq!(c.output_dir, Path::new("/exp/runs/toy"));
        let t = c.train_config();
        assert_eq!((t.iterations_per_level, t.seed, t.model.hidden_width), (10, 4, 24));
        assert_eq!(c.metrics, MetricSettings::default());
    }

    #[test]
    fn overrides_take_precedence() {
        let overrides = [
            "train.iterations_per_level=3".to_string(),
            "seed=9".to_string(),
            "conditioning.kind=film".to_string(),
            "conditioning.levels=[1, 2]".to_string(),
            "metrics.samples=2".to_string(),
        ];
        let c = ExperimentConfig::from_toml(BASIC, &overrides, Path::new(".")).unwrap();
        let t = c.train_config();
        assert_eq!((t.iterations_per_level, t.seed), (3, 9));
        assert_eq!(t.model.modulation, ModulationKind::Film);
        assert_eq!(t.model.conditioning_levels, vec![1, 2]);
        assert_eq!(c.eval_options().samples, 2);
    }

    #[test]
    fn rejects_bad_configs() {
        let dup = BASIC.replace("identity = \"dance\"", "identity = \"walk\"");
        assert!(ExperimentConfig::from_toml(&dup, &[], Path::new(".")).is_err());
        assert!(ExperimentConfig::from_toml(BASIC, &["train.bogus=1".into()], Path::new(".")).is_err());
        assert!(ExperimentConfig::from_toml(BASIC, &["seed".into()], Path::new(".")).is_err());
        assert!(ExperimentConfig::from_toml(BASIC, &["fps=0".into()], Path::new(".")).is_err());
    }

    #[test]
    fn missing_motion_file_is_reported() {
        let c = ExperimentConfig::from_toml(BASIC, &[], Path::new("/nonexistent")).unwrap();
        match c.load_motions() {
            Err(Error::Io { path, .. }) => assert_eq!(path, Path::new("/nonexistent/walk.bvh")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(BASIC, &[], Path::new("/exp")).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap(), &[], Path::new("/elsewhere")).unwrap();
        assert_eq!(again, c);
    }
}
