//! `run`, `ablate`, `sweep` and `gradcheck`.
//!
//! Multi-run commands pre-train one teacher backbone per seed, then fan
//! the runs out over the rayon pool. Each run owns its directory; reports
//! are assembled after every run has finished.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ega_core::gradcheck::{run_suite, GradcheckConfig, OpReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{io_err, CliError, Result};
use crate::experiment::{
    execute_run, load_task, prepare_teacher, write_atomic, RunManifest, RunSpec, SeedPlan,
};

/// Where a command writes, and where teacher backbones are cached.
#[derive(Clone, Debug)]
pub struct OutputLayout {
    pub root: PathBuf,
    pub cache: Option<PathBuf>,
}

impl OutputLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            cache: Some(root.join("cache")),
            root,
        }
    }

    pub fn without_cache(mut self) -> Self {
        self.cache = None;
        self
    }

    fn command_dir(&self, cfg: &ExperimentConfig, command: &str) -> PathBuf {
        self.root.join(&cfg.label).join(command)
    }
}

fn seed_dir(seed: u64) -> String {
    format!("seed-{seed}")
}

pub fn cmd_run(cfg: &ExperimentConfig, out: &OutputLayout) -> Result<RunManifest> {
    cfg.validate()?;
    let seed = cfg.train.seed;
    let run = RunSpec {
        command: "run",
        variant: None,
        cfg: cfg.clone(),
        seed,
        dir: out.command_dir(cfg, "run").join(seed_dir(seed)),
    };
    execute_run(&run, out.cache.as_deref())
}

fn warm_teachers(cfg: &ExperimentConfig, seeds: &[u64], out: &OutputLayout) -> Result<()> {
    let Some(cache) = out.cache.as_deref() else {
        return Ok(());
    };
    seeds.par_iter().try_for_each(|&seed| {
        let plan = SeedPlan::new(cfg, seed);
        let task = load_task(cfg, &plan)?;
        prepare_teacher(cfg, &plan, &task, Some(cache)).map(|_| ())
    })
}

fn execute_all(runs: &[RunSpec<'_>], out: &OutputLayout) -> Result<Vec<RunManifest>> {
    runs.par_iter()
        .map(|r| execute_run(r, out.cache.as_deref()))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub seeds: Vec<u64>,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    fn new(name: String, seeds: Vec<u64>, accuracies: Vec<f64>) -> Self {
        let n = accuracies.len().max(1) as f64;
        Self {
            mean: accuracies.iter().sum::<f64>() / n,
            min: accuracies.iter().copied().fold(f64::INFINITY, f64::min),
            max: accuracies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            name,
            seeds,
            accuracies,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    WithoutNode,
    WithoutEdge,
    Full,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::WithoutNode,
        Variant::WithoutEdge,
        Variant::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::WithoutNode => "without_node",
            Variant::WithoutEdge => "without_edge",
            Variant::Full => "full",
        }
    }

    pub fn apply(self, cfg: &ExperimentConfig) -> ExperimentConfig {
        let mut c = cfg.clone();
        match self {
            Variant::Baseline => c.train.lambda_ega = 0.0,
            Variant::WithoutNode => c.train.node_weight = 0.0,
            Variant::WithoutEdge => c.train.lambda = 0.0,
            Variant::Full => {}
        }
        c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub label: String,
    pub rows: Vec<Summary>,
    pub manifests: Vec<PathBuf>,
}

impl AblationReport {
    pub fn row(&self, v: Variant) -> &Summary {
        self.rows
            .iter()
            .find(|r| r.name == v.name())
            .expect("every variant is reported")
    }
}

pub fn cmd_ablate(cfg: &ExperimentConfig, out: &OutputLayout) -> Result<AblationReport> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let dir = out.command_dir(cfg, "ablate");
    warm_teachers(cfg, &seeds, out)?;
    let runs: Vec<RunSpec<'_>> = Variant::ALL
        .iter()
        .flat_map(|&v| {
            let (seeds, dir) = (&seeds, &dir);
            seeds.iter().map(move |&seed| RunSpec {
                command: "ablate",
                variant: Some(v.name().into()),
                cfg: v.apply(cfg),
                seed,
                dir: dir.join(v.name()).join(seed_dir(seed)),
            })
        })
        .collect();
    let manifests = execute_all(&runs, out)?;
    let rows = Variant::ALL
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let accs = manifests[k * seeds.len()..(k + 1) * seeds.len()]
                .iter()
                .map(|m| m.student_test_accuracy)
                .collect();
            Summary::new(v.name().into(), seeds.clone(), accs)
        })
        .collect();
    let report = AblationReport {
        label: cfg.label.clone(),
        rows,
        manifests: runs
            .iter()
            .map(|r| r.dir.join(crate::experiment::MANIFEST_FILE))
            .collect(),
    };
    write_report(&dir, "ablation", &report, &report.rows, "variant")?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    GraphSize,
    NodeWeight,
    EdgeWeight,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "graph_size" | "graph-size" => Ok(SweepAxis::GraphSize),
            "node_weight" | "node-weight" => Ok(SweepAxis::NodeWeight),
            "edge_weight" | "edge-weight" => Ok(SweepAxis::EdgeWeight),
            other => Err(format!(
                "unknown axis '{other}' (expected graph_size, node_weight or edge_weight)"
            )),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::GraphSize => "graph_size",
            SweepAxis::NodeWeight => "node_weight",
            SweepAxis::EdgeWeight => "edge_weight",
        }
    }

    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::GraphSize => vec![16.0, 32.0, 64.0, 128.0, 256.0],
            SweepAxis::NodeWeight => vec![1.2, 1.4, 1.5, 1.6, 1.8, 2.0],
            SweepAxis::EdgeWeight => vec![0.2, 0.4, 0.5, 0.6, 0.8, 1.0],
        }
    }

    /// The config for one sweep point.
    ///
    /// Graph size is the batch size. The weight axes train with a single
    /// alignment term, `L_ce + w · L_node` or `L_ce + w · L_edge`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut c = cfg.clone();
        let bad = || CliError::Config(format!("{}: invalid value {value}", self.name()));
        match self {
            SweepAxis::GraphSize => {
                if value.fract() != 0.0 || value < 2.0 {
                    return Err(bad());
                }
                c.train.batch_size = value as usize;
            }
            SweepAxis::NodeWeight => {
                if value.is_nan() || value < 0.0 {
                    return Err(bad());
                }
                c.train.lambda_ega = 1.0;
                c.train.node_weight = value;
                c.train.lambda = 0.0;
            }
            SweepAxis::EdgeWeight => {
                if value.is_nan() || value < 0.0 {
                    return Err(bad());
                }
                c.train.lambda_ega = 1.0;
                c.train.node_weight = 0.0;
                c.train.lambda = value;
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub label: String,
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub rows: Vec<Summary>,
    pub manifests: Vec<PathBuf>,
}

pub fn cmd_sweep(
    cfg: &ExperimentConfig,
    axis: SweepAxis,
    values: Option<Vec<f64>>,
    out: &OutputLayout,
) -> Result<SweepReport> {
    cfg.validate()?;
    let values = values.unwrap_or_else(|| axis.default_values());
    if values.is_empty() {
        return Err(CliError::Config("sweep: no values given".into()));
    }
    let configs = values
        .iter()
        .map(|&v| axis.apply(cfg, v))
        .collect::<Result<Vec<_>>>()?;
    let seeds = cfg.seeds();
    let dir = out.command_dir(cfg, &format!("sweep-{}", axis.name()));
    warm_teachers(cfg, &seeds, out)?;
    let runs: Vec<RunSpec<'_>> = values
        .iter()
        .zip(&configs)
        .flat_map(|(v, c)| {
            let seeds = &seeds;
            let dir = &dir;
            seeds.iter().map(move |&seed| RunSpec {
                command: "sweep",
                variant: Some(format!("{}={v}", axis.name())),
                cfg: c.clone(),
                seed,
                dir: dir.join(format!("{v}")).join(seed_dir(seed)),
            })
        })
        .collect();
    let manifests = execute_all(&runs, out)?;
    let rows = values
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let accs = manifests[k * seeds.len()..(k + 1) * seeds.len()]
                .iter()
                .map(|m| m.student_test_accuracy)
                .collect();
            Summary::new(format!("{v}"), seeds.clone(), accs)
        })
        .collect();
    let report = SweepReport {
        label: cfg.label.clone(),
        axis,
        values,
        rows,
        manifests: runs
            .iter()
            .map(|r| r.dir.join(crate::experiment::MANIFEST_FILE))
            .collect(),
    };
    write_report(&dir, "sweep", &report, &report.rows, axis.name())?;
    Ok(report)
}

/// Writes `<name>.json` and a plot-ready `<name>.csv`.
fn write_report<T: Serialize>(
    dir: &Path,
    name: &str,
    report: &T,
    rows: &[Summary],
    key: &str,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let json = serde_json::to_vec_pretty(report).expect("report serialises");
    write_atomic(&dir.join(format!("{name}.json")), &json)?;
    write_atomic(
        &dir.join(format!("{name}.csv")),
        summary_csv(rows, key).as_bytes(),
    )
}

pub fn summary_csv(rows: &[Summary], key: &str) -> String {
    let mut s = format!("{key},mean,min,max,n\n");
    for r in rows {
        writeln!(
            s,
            "{},{},{},{},{}",
            r.name,
            r.mean,
            r.min,
            r.max,
            r.accuracies.len()
        )
        .unwrap();
    }
    s
}

/// Fixed-width table of mean accuracy and range across seeds.
pub fn format_table(key: &str, rows: &[Summary]) -> String {
    let mut s = format!("{key:<16} {:>8} {:>8} {:>8}\n", "mean", "min", "max");
    for r in rows {
        writeln!(
            s,
            "{:<16} {:>8.4} {:>8.4} {:>8.4}",
            r.name, r.mean, r.min, r.max
        )
        .unwrap();
    }
    s
}

/// Runs the finite-difference suite; a failing op is an error naming it.
pub fn cmd_gradcheck(cfg: &GradcheckConfig, out: Option<&Path>) -> Result<Vec<OpReport>> {
    let reports = run_suite(cfg)?;
    if let Some(dir) = out {
        let json = serde_json::to_vec_pretty(&reports).expect("reports serialise");
        write_atomic(&dir.join("gradcheck.json"), &json)?;
    }
    Ok(reports)
}

pub fn gradcheck_failures(reports: &[OpReport]) -> Option<CliError> {
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.op.as_str())
        .collect();
    (!failed.is_empty()).then(|| CliError::GradcheckFailed(failed.join(", ")))
}
