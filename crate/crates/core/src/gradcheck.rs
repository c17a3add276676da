//! Finite-difference verification of every differentiable loss path.
//!
//! Each check builds a scalar on a fresh tape from one input tensor, takes
//! the analytic gradient by reverse mode and compares it entry-wise with
//! central differences. Instances are drawn at random batch and embedding
//! sizes from a seeded stream.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::diffcore::{finite_diff_grad, max_relative_error, Tape, Tensor, Var, DEFAULT_STEP};
use crate::ega::{
    correlation, cross_entropy, edge_loss, edge_matrix, ega_loss, ega_terms, kd_loss, node_loss,
    node_matrix, LossNorm,
};
use crate::error::{Error, Result};
use crate::models::{NetworkSpec, NetworkState, Role};

/// Entries where both gradients are within this of each other count as exact.
pub const ABS_FLOOR: f64 = 1e-8;

pub const OPS: &[&str] = &[
    "pearson",
    "edge_matrix",
    "node_matrix",
    "edge_loss",
    "node_loss",
    "ega_loss",
    "ega_loss_mean_squared",
    "cross_entropy",
    "kd_loss",
    "student_objective",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckConfig {
    pub seed: u64,
    pub instances: usize,
    pub tolerance: f64,
    /// Inclusive range of batch sizes B drawn per instance.
    pub batch_range: (usize, usize),
    /// Inclusive range of embedding widths D drawn per instance.
    pub dim_range: (usize, usize),
    /// Perturb the analytic gradient of this op; used to prove the checker fails.
    pub corrupt: Option<String>,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            instances: 20,
            tolerance: 1e-5,
            batch_range: (3, 8),
            dim_range: (4, 16),
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpReport {
    pub op: String,
    pub instances: usize,
    pub max_rel_error: f64,
    pub passed: bool,
}

fn randn(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(shape, data).expect("shape matches data")
}

/// Largest relative error between reverse-mode and central-difference
/// gradients of `build` with respect to `x`.
pub fn check<F>(build: F, x: &Tensor, corrupt: bool) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = build(&mut tape, xv)?;
    let grads = tape.backward(out)?;
    let mut analytic = grads.get(xv).cloned().ok_or(Error::MissingGrad(0))?;
    if corrupt {
        let g = &mut analytic.data_mut()[0];
        *g += 1e-3 * (1.0 + g.abs());
    }
    let numeric = finite_diff_grad(
        |probe| {
            let mut tape = Tape::new();
            let v = tape.constant(probe.clone());
            let out = build(&mut tape, v)?;
            Ok(tape.value(out).item())
        },
        x,
        DEFAULT_STEP,
    )?;
    Ok(max_relative_error(&analytic, &numeric, ABS_FLOOR))
}

fn weighted_sum(tape: &mut Tape, m: Var, weights: &Tensor) -> Result<Var> {
    let w = tape.constant(weights.clone());
    let p = tape.mul(m, w)?;
    tape.sum(p)
}

fn check_op(op: &str, cfg: &GradcheckConfig, rng: &mut ChaCha8Rng, corrupt: bool) -> Result<f64> {
    let b = rng.random_range(cfg.batch_range.0..=cfg.batch_range.1);
    let d = rng.random_range(cfg.dim_range.0..=cfg.dim_range.1);
    match op {
        "pearson" => {
            let x = randn(rng, vec![1, d]);
            let y = randn(rng, vec![1, d]);
            check(
                |t, v| {
                    let y = t.constant(y.clone());
                    let c = correlation(t, v, y)?;
                    t.sum(c)
                },
                &x,
                corrupt,
            )
        }
        "edge_matrix" => {
            let x = randn(rng, vec![b, d]);
            let w = randn(rng, vec![b, b]);
            check(
                |t, v| {
                    let e = edge_matrix(t, v)?;
                    weighted_sum(t, e, &w)
                },
                &x,
                corrupt,
            )
        }
        "node_matrix" => {
            let teacher = randn(rng, vec![b, d]);
            let x = randn(rng, vec![b, d]);
            let w = randn(rng, vec![b, b]);
            check(
                |t, v| {
                    let tv = t.constant(teacher.clone());
                    let n = node_matrix(t, tv, v)?;
                    weighted_sum(t, n, &w)
                },
                &x,
                corrupt,
            )
        }
        "edge_loss" => {
            let teacher = randn(rng, vec![b, d]);
            let x = randn(rng, vec![b, d]);
            check(
                |t, v| {
                    let tv = t.constant(teacher.clone());
                    let et = edge_matrix(t, tv)?;
                    let es = edge_matrix(t, v)?;
                    edge_loss(t, et, es)
                },
                &x,
                corrupt,
            )
        }
        "node_loss" => {
            let teacher = randn(rng, vec![b, d]);
            let x = randn(rng, vec![b, d]);
            check(
                |t, v| {
                    let tv = t.constant(teacher.clone());
                    let n = node_matrix(t, tv, v)?;
                    node_loss(t, n)
                },
                &x,
                corrupt,
            )
        }
        "ega_loss" => {
            let teacher = randn(rng, vec![b, d]);
            let x = randn(rng, vec![b, d]);
            let lambda = rng.random_range(0.1..2.0);
            check(
                |t, v| {
                    let tv = t.constant(teacher.clone());
                    ega_loss(t, tv, v, lambda)
                },
                &x,
                corrupt,
            )
        }
        "ega_loss_mean_squared" => {
            let teacher = randn(rng, vec![b, d]);
            let x = randn(rng, vec![b, d]);
            check(
                |t, v| {
                    let tv = t.constant(teacher.clone());
                    let terms = ega_terms(t, tv, v, LossNorm::MeanSquared)?;
                    let e = t.scale_add(terms.edge, 0.3, 0.0)?;
                    t.add(terms.node, e)
                },
                &x,
                corrupt,
            )
        }
        "cross_entropy" => {
            let c = rng.random_range(2..=6);
            let x = randn(rng, vec![b, c]);
            let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
            check(|t, v| cross_entropy(t, v, &labels), &x, corrupt)
        }
        "kd_loss" => {
            let c = rng.random_range(2..=6);
            let x = randn(rng, vec![b, c]);
            let teacher = randn(rng, vec![b, c]);
            let temperature = [1.0, 2.0, 4.0][rng.random_range(0..3)];
            check(
                |t, v| {
                    let tv = t.constant(teacher.clone());
                    kd_loss(t, v, tv, temperature)
                },
                &x,
                corrupt,
            )
        }
        "student_objective" => student_objective(rng, b, d, corrupt),
        other => Err(Error::invalid(format!("unknown gradcheck op '{other}'"))),
    }
}

/// Full student loss, checked through the first backbone weight so the
/// gradient passes every layer, the projection and all three loss terms.
fn student_objective(rng: &mut ChaCha8Rng, b: usize, d: usize, corrupt: bool) -> Result<f64> {
    let input_dim = 5;
    let classes = 3;
    let seed = rng.random();
    let student = NetworkState::init(
        NetworkSpec {
            input_dim,
            hidden_dims: vec![6],
            num_classes: classes,
            embed_dim: d,
            role: Role::Student,
        },
        seed,
    )?;
    let batch = randn(rng, vec![b, input_dim]);
    let teacher_embed = randn(rng, vec![b, d]);
    let teacher_logits = randn(rng, vec![b, classes]);
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..classes)).collect();
    let w0 = student.backbone[0].weight.clone();
    check(
        |t, w| {
            let x = t.constant(batch.clone());
            let h = t.matmul(x, w)?;
            let b0 = t.constant(student.backbone[0].bias.clone());
            let h = t.add_bias(h, b0)?;
            let f = t.relu(h)?;
            let hw = t.constant(student.head.weight.clone());
            let hb = t.constant(student.head.bias.clone());
            let logits = t.matmul(f, hw)?;
            let logits = t.add_bias(logits, hb)?;
            let ew = t.constant(student.embed.weight.clone());
            let eb = t.constant(student.embed.bias.clone());
            let xs = crate::models::node_embed(t, f, (ew, eb))?;
            let xt = t.constant(teacher_embed.clone());
            let tl = t.constant(teacher_logits.clone());
            let ce = cross_entropy(t, logits, &labels)?;
            let ega = ega_loss(t, xt, xs, 0.3)?;
            let ega = t.scale_add(ega, 0.8, 0.0)?;
            let kd = kd_loss(t, logits, tl, 4.0)?;
            let l = t.add(ce, ega)?;
            t.add(l, kd)
        },
        &w0,
        corrupt,
    )
}

/// Runs every op in [`OPS`] over `cfg.instances` random instances.
pub fn run_suite(cfg: &GradcheckConfig) -> Result<Vec<OpReport>> {
    let (b, d) = (cfg.batch_range, cfg.dim_range);
    if b.0 < 3 || b.0 > b.1 || d.0 < 4 || d.0 > d.1 {
        return Err(Error::invalid(format!(
            "gradcheck needs 3 <= B_min <= B_max and 4 <= D_min <= D_max, got B {b:?}, D {d:?}"
        )));
    }
    if let Some(name) = &cfg.corrupt {
        if !OPS.contains(&name.as_str()) {
            return Err(Error::invalid(format!(
                "unknown op '{name}'; expected one of {}",
                OPS.join(", ")
            )));
        }
    }
    let mut reports = Vec::with_capacity(OPS.len());
    for (k, &op) in OPS.iter().enumerate() {
        let corrupt = cfg.corrupt.as_deref() == Some(op);
        let mut worst: f64 = 0.0;
        for i in 0..cfg.instances {
            let stream = (k as u64) << 32 | i as u64;
            let mut rng =
                ChaCha8Rng::seed_from_u64(cfg.seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            worst = worst.max(check_op(op, cfg, &mut rng, corrupt)?);
        }
        reports.push(OpReport {
            op: op.to_string(),
            instances: cfg.instances,
            max_rel_error: worst,
            passed: worst <= cfg.tolerance,
        });
    }
    Ok(reports)
}
