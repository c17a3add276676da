//! One distillation run end to end, plus the pieces shared by every command:
//! seed derivation, task loading and the teacher backbone cache.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use ega_core::data::{gen_mixture, gen_pretrain_pool, load_csv, Dataset, MixtureSpec, Split};
use ega_core::models::{Checkpoint, NetworkState};
use ega_core::train::{
    evaluate, pretrain_teacher, train_sequential, train_simultaneous, EpochMetrics, Strategy,
    TaskData,
};
use log::{debug, info};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DataSource, ExperimentConfig};
use crate::error::{io_err, CliError, Result};
use crate::metrics::MetricsWriter;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Seeds for every random draw of a run, all derived from one run seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub data: u64,
    pub teacher_init: u64,
    pub head_init: u64,
    pub student_init: u64,
    pub train: u64,
}

impl SeedPlan {
    pub fn new(cfg: &ExperimentConfig, seed: u64) -> Self {
        let data_base = match &cfg.data {
            DataSource::Mixture(m) => m.seed,
            DataSource::Csv(_) => 0,
        };
        Self {
            data: data_base.wrapping_add(seed),
            teacher_init: seed.wrapping_add(100),
            head_init: seed.wrapping_add(200),
            student_init: seed.wrapping_add(300),
            train: seed,
        }
    }
}

pub struct Task {
    pub data: TaskData,
    /// Rows used to pre-train the teacher backbone.
    pub pool: Option<Dataset>,
}

impl Task {
    pub fn backbone_data(&self) -> TaskData {
        match &self.pool {
            Some(pool) => TaskData {
                train: pool.clone(),
                test: self.data.test.clone(),
            },
            None => self.data.clone(),
        }
    }
}

pub fn load_task(cfg: &ExperimentConfig, plan: &SeedPlan) -> Result<Task> {
    match &cfg.data {
        DataSource::Mixture(m) => {
            let spec = MixtureSpec {
                seed: plan.data,
                ..m.clone()
            };
            let (train, test) = gen_mixture(&spec)?;
            let pool = match cfg.teacher.pool_per_class {
                0 => None,
                n => Some(gen_pretrain_pool(&spec, n)?),
            };
            Ok(Task {
                data: TaskData { train, test },
                pool,
            })
        }
        DataSource::Csv(c) => {
            let mut train = load_csv(&c.train, &c.label_column, c.num_classes, c.normalize)?;
            let mut test = load_csv(&c.test, &c.label_column, Some(train.num_classes), false)?;
            test.split = Split::Test;
            if test.input_dim() != train.input_dim() {
                return Err(CliError::Config(format!(
                    "data: train has {} feature columns, test has {}",
                    train.input_dim(),
                    test.input_dim()
                )));
            }
            if let Some(norm) = &train.normalization {
                test.apply_normalization(norm);
            }
            train.split = Split::Train;
            Ok(Task {
                data: TaskData { train, test },
                pool: None,
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneReport {
    pub cache_key: String,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Serialize, Deserialize)]
struct CachedTeacher {
    report: BackboneReport,
    checkpoint: Checkpoint,
}

/// Hex digest identifying a pre-trained backbone.
pub fn teacher_cache_key(cfg: &ExperimentConfig, plan: &SeedPlan) -> Result<String> {
    let mut h = Sha256::new();
    h.update(b"ega-teacher-backbone-v1\0");
    let data = match &cfg.data {
        DataSource::Mixture(m) => serde_json::to_vec(&MixtureSpec {
            seed: plan.data,
            ..m.clone()
        }),
        DataSource::Csv(c) => serde_json::to_vec(c),
    }
    .expect("config serialises");
    h.update(&data);
    if let DataSource::Csv(c) = &cfg.data {
        h.update(fs::read(&c.train).map_err(io_err(&c.train))?);
    }
    let teacher = serde_json::json!({
        "hidden_dims": cfg.teacher.hidden_dims,
        "embed_dim": cfg.teacher.embed_dim,
        "pool_per_class": cfg.teacher.pool_per_class,
        "backbone": cfg.teacher.backbone,
        "init_seed": plan.teacher_init,
        "pretrain_seed": plan.train,
    });
    h.update(teacher.to_string().as_bytes());
    Ok(hex::encode(h.finalize()))
}

/// Teacher with a trained backbone, loaded from `cache_dir` when present.
///
/// The whole network is trained from scratch on cross-entropy; callers
/// then discard the head and projection and freeze the backbone.
pub fn prepare_teacher(
    cfg: &ExperimentConfig,
    plan: &SeedPlan,
    task: &Task,
    cache_dir: Option<&Path>,
) -> Result<(NetworkState, BackboneReport)> {
    let key = teacher_cache_key(cfg, plan)?;
    let cache_path = cache_dir.map(|d| d.join(format!("teacher-{}.json", &key[..24])));
    if let Some(path) = &cache_path {
        if path.exists() {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            if let Ok(cached) = serde_json::from_str::<CachedTeacher>(&text) {
                if cached.report.cache_key == key {
                    debug!("teacher cache hit {}", path.display());
                    return Ok((
                        NetworkState::from_checkpoint(cached.checkpoint)?,
                        cached.report,
                    ));
                }
            }
        }
    }
    let data = &task.data;
    let spec = cfg.teacher_spec(data.train.input_dim(), data.train.num_classes);
    let mut teacher = NetworkState::init(spec, plan.teacher_init)?;
    let stage = cfg.teacher.backbone.with_seed(plan.train);
    let report = pretrain_teacher(&mut teacher, &task.backbone_data(), &stage)?;
    info!(
        "teacher backbone seed {}: train {:.4} test {:.4}",
        plan.train, report.train_accuracy, report.test_accuracy
    );
    let report = BackboneReport {
        cache_key: key,
        train_accuracy: report.train_accuracy,
        test_accuracy: report.test_accuracy,
    };
    if let Some(path) = &cache_path {
        let cached = CachedTeacher {
            report: report.clone(),
            checkpoint: teacher.to_checkpoint(),
        };
        write_atomic(
            path,
            &serde_json::to_vec(&cached).expect("checkpoint serialises"),
        )?;
    }
    Ok((teacher, report))
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let tmp = path.with_extension(format!(
        "tmp-{}-{:?}",
        std::process::id(),
        std::thread::current().id()
    ));
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherSummary {
    pub backbone: BackboneReport,
    /// Test accuracy after fitting the new head on the frozen backbone.
    pub head_test_accuracy: Option<f64>,
    /// Test accuracy at the end of distillation.
    pub final_test_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifacts {
    pub metrics: PathBuf,
    pub teacher_checkpoint: PathBuf,
    pub student_checkpoint: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub label: String,
    pub variant: Option<String>,
    pub seed: u64,
    pub seeds: SeedPlan,
    pub started_at: String,
    pub finished_at: String,
    pub config: ExperimentConfig,
    pub epochs_completed: usize,
    pub teacher: TeacherSummary,
    pub student_test_accuracy: f64,
    /// File names relative to the run directory.
    pub artifacts: Artifacts,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_FILE: &str = "metrics.ndjson";

pub fn read_manifest(run_dir: &Path) -> Result<RunManifest> {
    let path = run_dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// A run's identity within a command.
pub struct RunSpec<'a> {
    pub command: &'a str,
    pub variant: Option<String>,
    pub cfg: ExperimentConfig,
    pub seed: u64,
    pub dir: PathBuf,
}

/// Pre-trains or loads the teacher, distils the student, and writes
/// metrics, checkpoints and the manifest into `run.dir`.
pub fn execute_run(run: &RunSpec<'_>, cache_dir: Option<&Path>) -> Result<RunManifest> {
    let started_at = now();
    let cfg = &run.cfg;
    let plan = SeedPlan::new(cfg, run.seed);
    let task = load_task(cfg, &plan)?;
    let (backbone, backbone_report) = prepare_teacher(cfg, &plan, &task, cache_dir)?;
    fs::create_dir_all(&run.dir).map_err(io_err(&run.dir))?;

    let mut teacher = backbone;
    teacher.reinit_new_layers(plan.head_init);
    teacher.freeze_backbone();
    let data = &task.data;
    let mut student = NetworkState::init(
        cfg.student_spec(data.train.input_dim(), data.train.num_classes),
        plan.student_init,
    )?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = plan.train;

    let mut writer = MetricsWriter::create(&run.dir.join(METRICS_FILE))?;
    let mut write_err = None;
    let mut sink = |m: &EpochMetrics| -> ega_core::Result<()> {
        writer.write(m).map_err(|e| {
            let msg = e.to_string();
            write_err = Some(e);
            ega_core::Error::InvalidArgument(msg)
        })
    };

    let mut head_test_accuracy = None;
    let result = match train_cfg.strategy {
        Strategy::Sequential => {
            let stage = cfg.teacher.head.with_seed(plan.train);
            let r = pretrain_teacher(&mut teacher, data, &stage)?;
            head_test_accuracy = Some(r.test_accuracy);
            teacher.freeze_all();
            train_sequential(&teacher, &mut student, data, &train_cfg, &mut sink)
        }
        Strategy::Simultaneous => {
            train_simultaneous(&mut teacher, &mut student, data, &train_cfg, &mut sink)
        }
    };
    let history = match (result, write_err) {
        (_, Some(e)) => return Err(e),
        (r, None) => r?,
    };

    let teacher_ckpt = PathBuf::from("teacher.json");
    let student_ckpt = PathBuf::from("student.json");
    teacher.save(&run.dir.join(&teacher_ckpt))?;
    student.save(&run.dir.join(&student_ckpt))?;

    let student_test_accuracy = match history.last().and_then(|m| m.test_accuracy) {
        Some(a) => a,
        None => evaluate(&student, &data.test)?,
    };
    let manifest = RunManifest {
        toolkit_version: TOOLKIT_VERSION.into(),
        command: run.command.into(),
        label: cfg.label.clone(),
        variant: run.variant.clone(),
        seed: run.seed,
        seeds: plan,
        started_at,
        finished_at: now(),
        config: cfg.clone(),
        epochs_completed: history.len(),
        teacher: TeacherSummary {
            backbone: backbone_report,
            head_test_accuracy,
            final_test_accuracy: evaluate(&teacher, &data.test)?,
        },
        student_test_accuracy,
        artifacts: Artifacts {
            metrics: METRICS_FILE.into(),
            teacher_checkpoint: teacher_ckpt,
            student_checkpoint: student_ckpt,
        },
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialises");
    write_atomic(&run.dir.join(MANIFEST_FILE), &json)?;
    info!(
        "{} {} seed {}: student {:.4}",
        run.command,
        run.variant.as_deref().unwrap_or("-"),
        run.seed,
        student_test_accuracy
    );
    Ok(manifest)
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}
