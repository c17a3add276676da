//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs with `cargo test --test acceptance`.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ega_cli::commands::{
    cmd_ablate, cmd_gradcheck, cmd_run, cmd_sweep, OutputLayout, SweepAxis, Variant,
};
use ega_cli::config::ExperimentConfig;
use ega_cli::experiment::{read_manifest, RunManifest, METRICS_FILE};
use ega_cli::metrics::read_metrics;
use ega_core::diffcore::{SgdConfig, Tape, Tensor};
use ega_core::ega::{edge_matrix, ega_loss, node_matrix, EmbeddingBatch, Origin, PEARSON_EPS};
use ega_core::gradcheck::{run_suite, GradcheckConfig};
use ega_core::train::Strategy;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GRAD_TOL: f64 = 1e-5;
const GRAD_INSTANCES: usize = 20;
const CORR_BATCHES: usize = 200;
const SYMMETRY_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-9;
const BOUND_TOL: f64 = 1e-9;
const AFFINE_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-12;
const CONSTRUCTION_TOL: f64 = 1e-6;
const TEACHER_MIN_ACC: f64 = 0.95;
const MIN_WINS: usize = 4;
const STRATEGY_GAP: f64 = 0.02;
const ACCOUNTING_TOL: f64 = 1e-9;
const RUNTIME_BUDGET_S: f64 = 15.0 * 60.0;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn randn(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::matrix(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| StandardNormal.sample(rng))
            .collect(),
    )
    .unwrap()
}

fn edges(x: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x.clone());
    let e = edge_matrix(&mut tape, v).unwrap();
    tape.value(e).clone()
}

fn nodes(t: &Tensor, s: &Tensor) -> Tensor {
    let mut tape = Tape::new();
    let (tv, sv) = (tape.constant(t.clone()), tape.constant(s.clone()));
    let n = node_matrix(&mut tape, tv, sv).unwrap();
    tape.value(n).clone()
}

fn pearson_oracle(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for k in 0..x.len() {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx).powi(2);
        syy += (y[k] - my).powi(2);
    }
    sxy / (sxx.sqrt() * syy.sqrt()).max(PEARSON_EPS)
}

fn gradient_oracle() -> Outcome {
    let cfg = GradcheckConfig {
        instances: GRAD_INSTANCES,
        tolerance: GRAD_TOL,
        batch_range: (3, 8),
        dim_range: (4, 16),
        ..GradcheckConfig::default()
    };
    let reports = run_suite(&cfg).unwrap();
    let worst = reports
        .iter()
        .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
        .unwrap();
    let failed: Vec<_> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.op.as_str())
        .collect();
    outcome(
        failed.is_empty() && worst.max_rel_error <= GRAD_TOL,
        format!(
            "{} ops x {} instances, worst {} at {:.2e} (tol {GRAD_TOL:e}){}",
            reports.len(),
            GRAD_INSTANCES,
            worst.op,
            worst.max_rel_error,
            if failed.is_empty() {
                String::new()
            } else {
                format!(", failed: {}", failed.join(","))
            }
        ),
    )
}

fn correlation_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut sym, mut diag, mut bound, mut affine) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..CORR_BATCHES {
        let b = rng.random_range(2..=16);
        let d = rng.random_range(3..=32);
        let x = randn(&mut rng, b, d);
        let flagged = EmbeddingBatch::new(x.clone(), Origin::Student)
            .unwrap()
            .degenerate_rows()
            .to_vec();
        let e = edges(&x);
        for i in 0..b {
            if !flagged[i] {
                diag = diag.max((e.get(i, i) - 1.0).abs());
            }
            for j in 0..b {
                sym = sym.max((e.get(i, j) - e.get(j, i)).abs());
                bound = bound.max(e.get(i, j).abs() - 1.0);
            }
        }
        let mut y = x.clone();
        for row in y.data_mut().chunks_mut(d) {
            let scale = rng.random_range(0.1..10.0);
            let shift = rng.random_range(-10.0..10.0);
            row.iter_mut().for_each(|v| *v = scale * *v + shift);
        }
        affine = affine.max(e.max_abs_diff(&edges(&y)));
    }
    outcome(
        sym <= SYMMETRY_TOL && diag <= DIAGONAL_TOL && bound <= BOUND_TOL && affine <= AFFINE_TOL,
        format!(
            "{CORR_BATCHES} batches: asymmetry {sym:.1e}, diagonal {diag:.1e}, excess over 1 {:.1e}, affine {affine:.1e}",
            bound.max(0.0)
        ),
    )
}

fn brute_force_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut count = 0;
    for b in 3..=8 {
        for d in 5..=16 {
            let (t, s) = (randn(&mut rng, b, d), randn(&mut rng, b, d));
            let (e, n) = (edges(&s), nodes(&t, &s));
            for i in 0..b {
                for j in 0..b {
                    worst = worst.max((e.get(i, j) - pearson_oracle(s.row(i), s.row(j))).abs());
                    worst = worst.max((n.get(i, j) - pearson_oracle(t.row(i), s.row(j))).abs());
                }
            }
            count += 1;
        }
    }
    outcome(
        worst <= ORACLE_TOL,
        format!(
            "{count} shapes from 3x5 to 8x16, max entry error {worst:.1e} (tol {ORACLE_TOL:e})"
        ),
    )
}

fn exact_constructions() -> Outcome {
    let x = Tensor::from_rows(&[vec![1.0, 0.0, -1.0], vec![1.0, -2.0, 1.0]]).unwrap();
    let id = Tensor::identity(2);
    let e_err = edges(&x).max_abs_diff(&id);
    let n_err = nodes(&x, &x).max_abs_diff(&id);
    let mut loss_err = 0.0f64;
    for lambda in [0.0, 0.3, 1.0, 10.0] {
        let mut tape = Tape::new();
        let (t, s) = (tape.constant(x.clone()), tape.constant(x.clone()));
        let l = ega_loss(&mut tape, t, s, lambda).unwrap();
        loss_err = loss_err.max(tape.value(l).item().abs());
    }
    outcome(
        e_err <= CONSTRUCTION_TOL && n_err <= CONSTRUCTION_TOL && loss_err <= CONSTRUCTION_TOL,
        format!("|E-I| {e_err:.1e}, |N-I| {n_err:.1e}, max |L_EGA| {loss_err:.1e} over 4 lambdas"),
    )
}

fn manifests(paths: &[PathBuf]) -> Vec<(PathBuf, RunManifest)> {
    paths
        .iter()
        .map(|p| {
            let dir = p.parent().unwrap().to_path_buf();
            let m = read_manifest(&dir).unwrap();
            (dir, m)
        })
        .collect()
}

struct Ablation {
    runs: Vec<(PathBuf, RunManifest)>,
    full_mean: f64,
}

fn distillation_gain(cfg: &ExperimentConfig, root: &Path) -> (Outcome, Ablation) {
    let report = cmd_ablate(cfg, &OutputLayout::new(root)).unwrap();
    let runs = manifests(&report.manifests);
    let teacher_min = runs
        .iter()
        .map(|(_, m)| {
            m.teacher
                .head_test_accuracy
                .unwrap_or(0.0)
                .min(m.teacher.final_test_accuracy)
        })
        .fold(1.0, f64::min);
    let (base, full) = (report.row(Variant::Baseline), report.row(Variant::Full));
    let (no_node, no_edge) = (
        report.row(Variant::WithoutNode),
        report.row(Variant::WithoutEdge),
    );
    let wins = full
        .accuracies
        .iter()
        .zip(&base.accuracies)
        .filter(|(f, b)| f > b)
        .count();
    let ordered = full.mean > no_node.mean
        && full.mean > no_edge.mean
        && no_node.mean > base.mean
        && no_edge.mean > base.mean;
    let o = outcome(
        teacher_min >= TEACHER_MIN_ACC && wins >= MIN_WINS && ordered,
        format!(
            "teacher min {teacher_min:.3}, full beats baseline on {wins}/{} seeds, means full {:.4} > w/o node {:.4}, w/o edge {:.4} > baseline {:.4}",
            full.accuracies.len(),
            full.mean,
            no_node.mean,
            no_edge.mean,
            base.mean
        ),
    );
    (
        o,
        Ablation {
            runs,
            full_mean: full.mean,
        },
    )
}

fn simultaneous_runs(
    cfg: &ExperimentConfig,
    root: &Path,
    cache: &Path,
) -> Vec<(PathBuf, RunManifest)> {
    let layout = OutputLayout {
        root: root.to_path_buf(),
        cache: Some(cache.to_path_buf()),
    };
    let mut cfg = cfg.clone();
    cfg.train.strategy = Strategy::Simultaneous;
    cfg.seeds()
        .into_iter()
        .map(|seed| {
            cfg.train.seed = seed;
            let m = cmd_run(&cfg, &layout).unwrap();
            (
                root.join(&cfg.label)
                    .join("run")
                    .join(format!("seed-{seed}")),
                m,
            )
        })
        .collect()
}

fn mean(runs: &[(PathBuf, RunManifest)]) -> f64 {
    runs.iter()
        .map(|(_, m)| m.student_test_accuracy)
        .sum::<f64>()
        / runs.len() as f64
}

fn schedule_and_accounting(runs: &[(PathBuf, RunManifest)]) -> Outcome {
    let sgd = SgdConfig::default();
    let expected = [(0, 0.05), (150, 0.005), (180, 0.0005), (210, 0.00005)];
    let sched_err = expected
        .iter()
        .map(|&(e, lr)| (sgd.lr_at_epoch(e).unwrap() - lr).abs() / lr)
        .fold(0.0, f64::max);
    let mut worst = 0.0f64;
    let mut records = 0;
    let mut kd_records = 0;
    for (dir, m) in runs {
        let t = &m.config.train;
        for r in read_metrics(&dir.join(METRICS_FILE)).unwrap() {
            let kd = if t.enable_kd {
                t.kd_weight * r.l_kd.unwrap_or(f64::NAN)
            } else {
                0.0
            };
            let total =
                r.l_ce + t.lambda_ega * (t.node_weight * r.l_node + t.lambda * r.l_edge) + kd;
            worst = worst.max((r.train_loss - total).abs());
            records += 1;
            kd_records += usize::from(r.l_kd.is_some());
        }
    }
    outcome(
        sched_err <= 1e-12 && worst <= ACCOUNTING_TOL && records > 0,
        format!(
            "lr {} at epochs 0/150/180/210; {records} epoch records ({kd_records} with KD), max loss residual {worst:.1e} (tol {ACCOUNTING_TOL:e})",
            expected
                .iter()
                .map(|&(e, _)| format!("{:.5}", sgd.lr_at_epoch(e).unwrap()))
                .collect::<Vec<_>>()
                .join(" / ")
        ),
    )
}

fn kd_run(root: &Path) -> (PathBuf, RunManifest) {
    let mut cfg = common::quick();
    cfg.label = "kd".into();
    cfg.train.strategy = Strategy::Sequential;
    cfg.train.enable_kd = true;
    cfg.train.kd_weight = 0.5;
    let m = cmd_run(&cfg, &OutputLayout::new(root)).unwrap();
    (root.join("kd/run/seed-0"), m)
}

fn metrics_files(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == METRICS_FILE) {
                out.insert(
                    path.strip_prefix(root).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                );
            }
        }
    }
    out
}

fn determinism(sequential: &ExperimentConfig, first_ablation: &Path, tmp: &Path) -> Outcome {
    // the rerun trains every teacher again instead of reading the cache
    let again = tmp.join("rerun-ablate");
    cmd_ablate(sequential, &OutputLayout::new(&again).without_cache()).unwrap();
    let (a, b) = (
        metrics_files(first_ablation),
        metrics_files(&again.join(&sequential.label).join("ablate")),
    );
    let ablate_same = !a.is_empty() && a == b;

    let quick = common::quick();
    let sweep = |name: &str| {
        let root = tmp.join(name);
        cmd_sweep(
            &quick,
            SweepAxis::NodeWeight,
            Some(vec![1.2, 2.0]),
            &OutputLayout::new(&root),
        )
        .unwrap();
        metrics_files(&root)
    };
    let (s1, s2) = (sweep("sweep-a"), sweep("sweep-b"));
    let sweep_same = !s1.is_empty() && s1 == s2;

    let grad = |dir: &str| {
        let d = tmp.join(dir);
        cmd_gradcheck(&GradcheckConfig::default(), Some(&d)).unwrap();
        fs::read(d.join("gradcheck.json")).unwrap()
    };
    let grad_same = grad("grad-a") == grad("grad-b");
    outcome(
        ablate_same && sweep_same && grad_same,
        format!(
            "ablate {} metrics files {}, sweep {} files {}, gradcheck report {}",
            a.len(),
            if ablate_same { "identical" } else { "differ" },
            s1.len(),
            if sweep_same { "identical" } else { "differ" },
            if grad_same { "identical" } else { "differs" },
        ),
    )
}

fn report(n: usize, name: &str, start: Instant, o: &Outcome, failures: &mut usize) {
    let status = if o.pass { "PASS" } else { "FAIL" };
    println!(
        "criterion {n} {name}: {status} ({}; {:.1}s)",
        o.detail,
        start.elapsed().as_secs_f64()
    );
    *failures += usize::from(!o.pass);
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().unwrap();
    let tmp = tmp.path();
    let mut failures = 0;

    let t = Instant::now();
    report(1, "gradient oracle", t, &gradient_oracle(), &mut failures);
    let t = Instant::now();
    report(
        2,
        "correlation invariants",
        t,
        &correlation_invariants(),
        &mut failures,
    );
    let t = Instant::now();
    report(
        3,
        "brute-force equivalence",
        t,
        &brute_force_equivalence(),
        &mut failures,
    );
    let t = Instant::now();
    report(
        4,
        "exact constructions",
        t,
        &exact_constructions(),
        &mut failures,
    );

    let mut sequential = common::reference();
    sequential.train.strategy = Strategy::Sequential;
    let seq_root = tmp.join("sequential");
    let t = Instant::now();
    let (mut o, ablation) = distillation_gain(&sequential, &seq_root);
    let secs = t.elapsed().as_secs_f64();
    o.pass &= secs <= RUNTIME_BUDGET_S;
    report(5, "desk-scale distillation gain", t, &o, &mut failures);

    let t = Instant::now();
    let sim = simultaneous_runs(
        &sequential,
        &tmp.join("simultaneous"),
        &seq_root.join("cache"),
    );
    let gap = (mean(&sim) - ablation.full_mean).abs();
    let secs = t.elapsed().as_secs_f64();
    let o = outcome(
        gap <= STRATEGY_GAP && secs <= RUNTIME_BUDGET_S,
        format!(
            "simultaneous {:.4} vs sequential {:.4} over {} seeds, gap {gap:.4} (tol {STRATEGY_GAP})",
            mean(&sim),
            ablation.full_mean,
            sim.len()
        ),
    );
    report(6, "strategy equivalence", t, &o, &mut failures);

    let t = Instant::now();
    let mut runs = ablation.runs;
    runs.extend(sim);
    runs.push(kd_run(&tmp.join("kd")));
    report(
        7,
        "schedule and accounting",
        t,
        &schedule_and_accounting(&runs),
        &mut failures,
    );

    let t = Instant::now();
    let o = determinism(
        &sequential,
        &seq_root.join(&sequential.label).join("ablate"),
        tmp,
    );
    report(8, "determinism", t, &o, &mut failures);

    println!("{} of 8 criteria passed", 8 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
