//! Versioned TOML experiment configuration.
//!
//! Unknown keys anywhere in the file are rejected. Every section except
//! `version` and `data` may be omitted and falls back to the desk-scale
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};

use ega_core::data::MixtureSpec;
use ega_core::diffcore::SgdConfig;
use ega_core::models::{NetworkSpec, Role};
use ega_core::train::{PretrainConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, CliError, Result};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default = "default_label")]
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    /// Ablations and sweeps use seeds `train.seed .. train.seed + num_seeds`.
    #[serde(default = "default_num_seeds")]
    pub num_seeds: usize,
    pub data: DataSource,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub student: StudentSection,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_label() -> String {
    "experiment".into()
}

fn default_num_seeds() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    /// The mixture seed is added to the run seed.
    Mixture(MixtureSpec),
    Csv(CsvSource),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSource {
    pub train: PathBuf,
    pub test: PathBuf,
    #[serde(default = "default_label_column")]
    pub label_column: String,
    #[serde(default)]
    pub num_classes: Option<usize>,
    #[serde(default = "yes")]
    pub normalize: bool,
}

fn default_label_column() -> String {
    "label".into()
}

fn yes() -> bool {
    true
}

/// Epoch count, batch size and schedule for one pre-training stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub sgd: SgdConfig,
}

impl Default for StageConfig {
    fn default() -> Self {
        let p = PretrainConfig::default();
        Self {
            epochs: p.epochs,
            batch_size: p.batch_size,
            sgd: p.sgd,
        }
    }
}

impl StageConfig {
    pub fn with_seed(&self, seed: u64) -> PretrainConfig {
        PretrainConfig {
            epochs: self.epochs,
            sgd: self.sgd.clone(),
            batch_size: self.batch_size,
            seed,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        self.sgd
            .validate()
            .map_err(|e| CliError::Config(format!("{name}: {e}")))?;
        if self.epochs > self.sgd.total_epochs {
            return Err(CliError::Config(format!(
                "{name}.epochs ({}) exceeds {name}.sgd.total_epochs ({})",
                self.epochs, self.sgd.total_epochs
            )));
        }
        if self.batch_size < 2 {
            return Err(CliError::Config(format!("{name}.batch_size must be >= 2")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherSection {
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
    /// Rows per class drawn for backbone pre-training; 0 uses the train split.
    pub pool_per_class: usize,
    /// From-scratch training that stands in for a pre-trained backbone.
    pub backbone: StageConfig,
    /// Fitting the re-initialised head on the frozen backbone (sequential only).
    pub head: StageConfig,
}

impl Default for TeacherSection {
    fn default() -> Self {
        let desk = NetworkSpec::desk_teacher(1, 1);
        Self {
            hidden_dims: desk.hidden_dims,
            embed_dim: desk.embed_dim,
            pool_per_class: 0,
            backbone: StageConfig::default(),
            head: StageConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudentSection {
    pub hidden_dims: Vec<usize>,
    pub embed_dim: usize,
}

impl Default for StudentSection {
    fn default() -> Self {
        let desk = NetworkSpec::desk_student(1, 1);
        Self {
            hidden_dims: desk.hidden_dims,
            embed_dim: desk.embed_dim,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        // relative CSV paths are relative to the config file
        if let DataSource::Csv(csv) = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [&mut csv.train, &mut csv.test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!(
                "version: expected {CONFIG_VERSION}, got {}",
                self.version
            ));
        }
        if self.label.is_empty()
            || !self
                .label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return bad(format!(
                "label: must be non-empty and use only [A-Za-z0-9-_.], got {:?}",
                self.label
            ));
        }
        if self.num_seeds == 0 {
            return bad("num_seeds: must be >= 1".into());
        }
        match &self.data {
            DataSource::Mixture(m) => m
                .validate()
                .map_err(|e| CliError::Config(format!("data: {e}")))?,
            DataSource::Csv(_) => {
                if self.teacher.pool_per_class > 0 {
                    return bad("teacher.pool_per_class: only available for mixture data".into());
                }
            }
        }
        if self.teacher.embed_dim != self.student.embed_dim {
            return bad(format!(
                "teacher.embed_dim ({}) and student.embed_dim ({}) must match",
                self.teacher.embed_dim, self.student.embed_dim
            ));
        }
        for (name, dims, d) in [
            ("teacher", &self.teacher.hidden_dims, self.teacher.embed_dim),
            ("student", &self.student.hidden_dims, self.student.embed_dim),
        ] {
            if dims.contains(&0) {
                return bad(format!("{name}.hidden_dims: widths must be positive"));
            }
            if d < 3 {
                return bad(format!("{name}.embed_dim: must be >= 3, got {d}"));
            }
        }
        self.teacher.backbone.validate("teacher.backbone")?;
        self.teacher.head.validate("teacher.head")?;
        self.train
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        Ok(())
    }

    pub fn teacher_spec(&self, input_dim: usize, num_classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_dims: self.teacher.hidden_dims.clone(),
            num_classes,
            embed_dim: self.teacher.embed_dim,
            role: Role::Teacher,
        }
    }

    pub fn student_spec(&self, input_dim: usize, num_classes: usize) -> NetworkSpec {
        NetworkSpec {
            input_dim,
            hidden_dims: self.student.hidden_dims.clone(),
            num_classes,
            embed_dim: self.student.embed_dim,
            role: Role::Student,
        }
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.num_seeds as u64)
            .map(|k| self.train.seed.wrapping_add(k))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
[data]
kind = "mixture"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.train, TrainConfig::default());
        assert_eq!(cfg.teacher.hidden_dims, vec![64, 64]);
        assert_eq!(cfg.student.hidden_dims, vec![8]);
        assert_eq!(cfg.num_seeds, 5);
        assert_eq!(cfg.data, DataSource::Mixture(MixtureSpec::default()));
    }

    #[test]
    fn unknown_keys_are_errors() {
        for extra in [
            "\nlamda = 0.3\n",
            "\n[train]\nlamda = 0.3\n",
            "\n[teacher.backbone]\nepoch = 3\n",
        ] {
            let err = ExperimentConfig::from_toml(&format!("{MINIMAL}{extra}")).unwrap_err();
            let msg = err.to_string();
            assert!(msg.contains("unknown field"), "{msg}");
        }
        let err =
            ExperimentConfig::from_toml("version = 1\n[data]\nkind = \"mixture\"\nspread = 2\n")
                .unwrap_err();
        assert!(err.to_string().contains("spread"), "{err}");
    }

    #[test]
    fn version_and_fields_checked() {
        let err =
            ExperimentConfig::from_toml("version = 2\n[data]\nkind = \"mixture\"\n").unwrap_err();
        assert!(err.to_string().contains("version"));
        let err = ExperimentConfig::from_toml(&format!("{MINIMAL}[train]\nbatch_size = 1\n"))
            .unwrap_err();
        assert!(err.to_string().contains("batch_size"), "{err}");
        let err = ExperimentConfig::from_toml(&format!("{MINIMAL}[student]\nembed_dim = 8\n"))
            .unwrap_err();
        assert!(err.to_string().contains("embed_dim"), "{err}");
        let err = ExperimentConfig::from_toml(&format!("label = \"a/b\"\n{MINIMAL}")).unwrap_err();
        assert!(err.to_string().contains("label"), "{err}");
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.train.lambda = 0.5;
        cfg.teacher.pool_per_class = 100;
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn csv_source_parses() {
        let cfg = ExperimentConfig::from_toml(
            "version = 1\n[data]\nkind = \"csv\"\ntrain = \"a.csv\"\ntest = \"b.csv\"\n",
        )
        .unwrap();
        match cfg.data {
            DataSource::Csv(c) => {
                assert_eq!(c.label_column, "label");
                assert!(c.normalize);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn seeds_follow_base() {
        let mut cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        cfg.train.seed = 10;
        cfg.num_seeds = 3;
        assert_eq!(cfg.seeds(), vec![10, 11, 12]);
    }
}
