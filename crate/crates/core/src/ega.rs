//! Embedding graph alignment losses.
//!
//! A batch of `B` node embeddings forms a graph whose edges are the Pearson
//! correlations between every pair of rows. Two graphs are compared through
//!
//! * the edge matching loss `‖E_t − E_s‖_F`, where `E = corr(X, X)`, and
//! * the node matching loss `‖N_st − I‖_F`, where `N_st = corr(X_t, X_s)`.
//!
//! Teacher-side inputs are detached inside every loss here: the student is
//! pulled towards the teacher graph, never the other way round.

use serde::{Deserialize, Serialize};

use crate::diffcore::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Guard added to the correlation denominator.
pub const PEARSON_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Teacher,
    Student,
}

/// How a matrix difference is reduced to a scalar loss.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossNorm {
    /// `‖A‖_F`
    #[default]
    Frobenius,
    /// `‖A‖²_F / numel(A)`
    MeanSquared,
}

/// A validated `B×D` batch of node embeddings.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    values: Tensor,
    origin: Origin,
    degenerate: Vec<bool>,
}

impl EmbeddingBatch {
    pub fn new(values: Tensor, origin: Origin) -> Result<Self> {
        if values.shape().len() != 2 {
            return Err(Error::invalid("embedding batch must be a B×D matrix"));
        }
        if values.rows() < 2 {
            return Err(Error::invalid(format!(
                "embedding batch needs B >= 2, got {}",
                values.rows()
            )));
        }
        if values.cols() < 2 {
            return Err(Error::invalid(format!(
                "embedding batch needs D >= 2, got {}",
                values.cols()
            )));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite {
                op: "embedding_batch",
            });
        }
        let degenerate = (0..values.rows())
            .map(|i| {
                let r = values.row(i);
                let mean = r.iter().sum::<f64>() / r.len() as f64;
                let ss: f64 = r.iter().map(|v| (v - mean) * (v - mean)).sum();
                ss <= PEARSON_EPS
            })
            .collect();
        Ok(Self {
            values,
            origin,
            degenerate,
        })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    /// Rows whose centred squared norm is at most ε; the guard in the
    /// denominator engages there and self-correlation falls below 1.
    pub fn degenerate_rows(&self) -> &[bool] {
        &self.degenerate
    }
}

/// Pearson correlation between the rows of `x: m×D` and `y: n×D`.
///
/// Entry `(i, j)` is `Σ(x_i − x̄_i)(y_j − ȳ_j) / max(‖x_i − x̄_i‖·‖y_j − ȳ_j‖, ε)`,
/// so a constant row correlates 0 with everything, itself included.
pub fn correlation(tape: &mut Tape, x: Var, y: Var) -> Result<Var> {
    let (xs, ys) = (
        tape.value(x).shape().to_vec(),
        tape.value(y).shape().to_vec(),
    );
    if xs.len() != 2 || ys.len() != 2 || xs[1] != ys[1] {
        return Err(Error::ShapeMismatch {
            op: "correlation",
            left: xs,
            right: ys,
        });
    }
    if xs[1] < 2 {
        return Err(Error::invalid(format!(
            "pearson needs D >= 2, got {}",
            xs[1]
        )));
    }
    let xc = tape.row_center(x)?;
    let nx = row_norm(tape, xc)?;
    let (yc, ny) = if x == y {
        (xc, nx)
    } else {
        let yc = tape.row_center(y)?;
        (yc, row_norm(tape, yc)?)
    };
    let num = tape.matmul_t(xc, yc)?;
    let den = tape.outer(nx, ny)?;
    let den = tape.clamp_min(den, PEARSON_EPS)?;
    tape.div(num, den)
}

fn row_norm(tape: &mut Tape, centered: Var) -> Result<Var> {
    let sq = tape.mul(centered, centered)?;
    let ss = tape.row_sum(sq)?;
    tape.sqrt(ss)
}

/// Pearson correlation of two `D`-vectors.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::ShapeMismatch {
            op: "pearson",
            left: vec![x.len()],
            right: vec![y.len()],
        });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "pearson" });
    }
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::matrix(1, x.len(), x.to_vec())?);
    let yv = tape.constant(Tensor::matrix(1, y.len(), y.to_vec())?);
    let r = correlation(&mut tape, xv, yv)?;
    Ok(tape.value(r).item())
}

/// `E(X, X)`: correlations among the rows of one batch.
pub fn edge_matrix(tape: &mut Tape, x: Var) -> Result<Var> {
    check_batch(tape, x)?;
    correlation(tape, x, x)
}

/// `N_st = E(X_t, X_s)`: teacher rows against student rows.
///
/// Gradients flow through both arguments; [`ega_loss`] detaches the teacher.
pub fn node_matrix(tape: &mut Tape, teacher: Var, student: Var) -> Result<Var> {
    check_batch(tape, teacher)?;
    check_batch(tape, student)?;
    let (ts, ss) = (tape.value(teacher).shape(), tape.value(student).shape());
    if ts != ss {
        return Err(Error::ShapeMismatch {
            op: "node_matrix",
            left: ts.to_vec(),
            right: ss.to_vec(),
        });
    }
    correlation(tape, teacher, student)
}

fn check_batch(tape: &Tape, x: Var) -> Result<()> {
    let shape = tape.value(x).shape();
    if shape.len() != 2 || shape[0] < 2 {
        return Err(Error::invalid(format!(
            "embedding batch must be B×D with B >= 2, got {shape:?}"
        )));
    }
    Ok(())
}

fn reduce(tape: &mut Tape, diff: Var, norm: LossNorm) -> Result<Var> {
    match norm {
        LossNorm::Frobenius => tape.frobenius_norm(diff),
        LossNorm::MeanSquared => {
            let sq = tape.mul(diff, diff)?;
            tape.mean(sq)
        }
    }
}

/// `‖E_t − E_s‖`, with the teacher matrix held constant.
pub fn edge_loss(tape: &mut Tape, teacher_edges: Var, student_edges: Var) -> Result<Var> {
    edge_loss_with(tape, teacher_edges, student_edges, LossNorm::Frobenius)
}

pub fn edge_loss_with(
    tape: &mut Tape,
    teacher_edges: Var,
    student_edges: Var,
    norm: LossNorm,
) -> Result<Var> {
    let target = tape.detach(teacher_edges);
    let diff = tape.sub(target, student_edges)?;
    reduce(tape, diff, norm)
}

/// `‖N − I‖`.
pub fn node_loss(tape: &mut Tape, node: Var) -> Result<Var> {
    node_loss_with(tape, node, LossNorm::Frobenius)
}

pub fn node_loss_with(tape: &mut Tape, node: Var, norm: LossNorm) -> Result<Var> {
    let shape = tape.value(node).shape().to_vec();
    if shape.len() != 2 || shape[0] != shape[1] {
        return Err(Error::ShapeMismatch {
            op: "node_loss",
            left: shape,
            right: vec![0, 0],
        });
    }
    let eye = tape.constant(Tensor::identity(shape[0]));
    let diff = tape.sub(node, eye)?;
    reduce(tape, diff, norm)
}

/// The two alignment terms for one teacher/student batch pair.
#[derive(Clone, Copy, Debug)]
pub struct EgaTerms {
    pub node: Var,
    pub edge: Var,
}

/// Builds `E_t`, `E_s`, `N_st` and both matching losses.
pub fn ega_terms(tape: &mut Tape, teacher: Var, student: Var, norm: LossNorm) -> Result<EgaTerms> {
    let teacher = tape.detach(teacher);
    let e_t = edge_matrix(tape, teacher)?;
    let e_s = edge_matrix(tape, student)?;
    let n_st = node_matrix(tape, teacher, student)?;
    let edge = edge_loss_with(tape, e_t, e_s, norm)?;
    let node = node_loss_with(tape, n_st, norm)?;
    Ok(EgaTerms { node, edge })
}

/// `L_EGA = L_node + λ·L_edge`.
pub fn ega_loss(tape: &mut Tape, teacher: Var, student: Var, lambda: f64) -> Result<Var> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda must be >= 0, got {lambda}")));
    }
    let terms = ega_terms(tape, teacher, student, LossNorm::Frobenius)?;
    let edge = tape.scale_add(terms.edge, lambda, 0.0)?;
    tape.add(terms.node, edge)
}

/// Mean over the batch of `−log softmax(logits)[label]`.
pub fn cross_entropy(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let shape = tape.value(logits).shape().to_vec();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "cross_entropy",
            left: shape,
            right: vec![labels.len()],
        });
    }
    let (b, c) = (shape[0], shape[1]);
    let mut onehot = Tensor::zeros(vec![b, c]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= c {
            return Err(Error::invalid(format!(
                "cross_entropy: label {y} at row {i} outside [0, {c})"
            )));
        }
        onehot.data_mut()[i * c + y] = 1.0;
    }
    let logp = tape.log_softmax(logits)?;
    let mask = tape.constant(onehot);
    let picked = tape.mul(logp, mask)?;
    let total = tape.sum(picked)?;
    tape.scale_add(total, -1.0 / b as f64, 0.0)
}

fn softmax_rows(t: &Tensor, inv_temp: f64) -> Vec<f64> {
    let c = t.cols();
    let mut out = Vec::with_capacity(t.numel());
    for r in t.data().chunks(c) {
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max) * inv_temp;
        let exps: Vec<f64> = r.iter().map(|x| (x * inv_temp - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        out.extend(exps.into_iter().map(|e| e / z));
    }
    out
}

/// `T² · mean_b KL(softmax(t/T) ‖ softmax(s/T))`, teacher side constant.
pub fn kd_loss(
    tape: &mut Tape,
    student_logits: Var,
    teacher_logits: Var,
    temperature: f64,
) -> Result<Var> {
    if !(temperature > 0.0) {
        return Err(Error::invalid(format!(
            "kd temperature must be > 0, got {temperature}"
        )));
    }
    let (ss, ts) = (
        tape.value(student_logits).shape().to_vec(),
        tape.value(teacher_logits).shape().to_vec(),
    );
    if ss != ts || ss.len() != 2 {
        return Err(Error::ShapeMismatch {
            op: "kd_loss",
            left: ss,
            right: ts,
        });
    }
    let b = ss[0] as f64;
    let p_t = softmax_rows(tape.value(teacher_logits), 1.0 / temperature);
    // Σ p log p, with 0·log 0 = 0
    let neg_entropy: f64 = p_t
        .iter()
        .map(|&p| if p > 0.0 { p * p.ln() } else { 0.0 })
        .sum();
    let t2 = temperature * temperature;
    let scaled = tape.scale_add(student_logits, 1.0 / temperature, 0.0)?;
    let logq = tape.log_softmax(scaled)?;
    let target = tape.constant(Tensor::new(ss, p_t)?);
    let cross = tape.mul(target, logq)?;
    let cross = tape.sum(cross)?;
    tape.scale_add(cross, -t2 / b, t2 * neg_entropy / b)
}

/// `L = L_ce + λ_EGA·L_EGA (+ λ_KD·L_KD)`.
///
/// Zero-weighted terms are left out of the graph entirely.
pub fn total_loss(
    tape: &mut Tape,
    ce: Var,
    ega: Var,
    lambda_ega: f64,
    kd: Option<(Var, f64)>,
) -> Result<Var> {
    let mut total = ce;
    if lambda_ega != 0.0 {
        let w = tape.scale_add(ega, lambda_ega, 0.0)?;
        total = tape.add(total, w)?;
    }
    if let Some((kd, weight)) = kd {
        if weight != 0.0 {
            let w = tape.scale_add(kd, weight, 0.0)?;
            total = tape.add(total, w)?;
        }
    }
    Ok(total)
}
