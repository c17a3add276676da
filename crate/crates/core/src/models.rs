//! Teacher and student MLPs with their node-embedding projection heads.
//!
//! A network is a stack of ReLU hidden layers (the backbone), a linear
//! classifier head on the last hidden activation, and a linear projection
//! of that same activation into the shared `D`-dimensional embedding space.
//! Parameters are grouped so a teacher can keep its backbone frozen while
//! the head and projection stay trainable.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{sgd_step, Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Teacher,
    Student,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub embed_dim: usize,
    pub role: Role,
}

impl NetworkSpec {
    /// Desk-scale teacher: two hidden layers of 64.
    pub fn desk_teacher(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![64, 64],
            num_classes,
            embed_dim: 16,
            role: Role::Teacher,
        }
    }

    /// Desk-scale student: one hidden layer of 8.
    pub fn desk_student(input_dim: usize, num_classes: usize) -> Self {
        Self {
            input_dim,
            hidden_dims: vec![8],
            num_classes,
            embed_dim: 16,
            role: Role::Student,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.num_classes == 0 {
            return Err(Error::invalid(
                "network input_dim and num_classes must be positive",
            ));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::invalid("network hidden_dims must be positive"));
        }
        // Pearson over two coordinates is always ±1
        if self.embed_dim < 3 {
            return Err(Error::invalid(format!(
                "network embed_dim must be >= 3, got {}",
                self.embed_dim
            )));
        }
        Ok(())
    }

    /// Width of the feature vector fed to the head and the projection.
    pub fn feature_dim(&self) -> usize {
        self.hidden_dims.last().copied().unwrap_or(self.input_dim)
    }
}

/// Affine layer `y = x·W + b` with `W: in×out`, `b: 1×out`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    fn init(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let data = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            weight: Tensor::matrix(fan_in, fan_out, data).expect("sized"),
            bias: Tensor::zeros(vec![1, fan_out]),
        }
    }

    fn params_mut(&mut self) -> [&mut Tensor; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    Backbone,
    Head,
    Embed,
}

/// Which parameter groups are excluded from updates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrozenMask {
    pub backbone: bool,
    pub head: bool,
    pub embed: bool,
}

impl FrozenMask {
    pub fn is_frozen(&self, group: ParamGroup) -> bool {
        match group {
            ParamGroup::Backbone => self.backbone,
            ParamGroup::Head => self.head,
            ParamGroup::Embed => self.embed,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub spec: NetworkSpec,
    pub backbone: Vec<Linear>,
    pub head: Linear,
    pub embed: Linear,
    pub frozen: FrozenMask,
    /// Set once the head has been trained on the task objective.
    pub head_pretrained: bool,
}

/// Tape handles for one network's parameters.
#[derive(Clone, Debug)]
pub struct BoundNetwork {
    backbone: Vec<(Var, Var)>,
    head: (Var, Var),
    embed: (Var, Var),
}

fn bind_layer(tape: &mut Tape, layer: &Linear, trainable: bool) -> (Var, Var) {
    if trainable {
        (
            tape.param(layer.weight.clone()),
            tape.param(layer.bias.clone()),
        )
    } else {
        (
            tape.constant(layer.weight.clone()),
            tape.constant(layer.bias.clone()),
        )
    }
}

fn affine(tape: &mut Tape, x: Var, (w, b): (Var, Var)) -> Result<Var> {
    let xw = tape.matmul(x, w)?;
    tape.add_bias(xw, b)
}

impl BoundNetwork {
    /// Returns `(features, logits)`; features are the last hidden activation.
    pub fn forward(&self, tape: &mut Tape, batch: Var) -> Result<(Var, Var)> {
        let mut h = batch;
        for &layer in &self.backbone {
            let z = affine(tape, h, layer)?;
            h = tape.relu(z)?;
        }
        let logits = affine(tape, h, self.head)?;
        Ok((h, logits))
    }

    /// Projects features into the shared embedding space.
    pub fn embed(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        node_embed(tape, features, self.embed)
    }
}

/// `X = F·W + b`, one embedding row per instance.
pub fn node_embed(tape: &mut Tape, features: Var, (weight, bias): (Var, Var)) -> Result<Var> {
    affine(tape, features, (weight, bias))
}

impl NetworkState {
    /// Weights ~ U(−1/√fan_in, 1/√fan_in), biases zero, all groups trainable.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut backbone = Vec::with_capacity(spec.hidden_dims.len());
        let mut fan_in = spec.input_dim;
        for &h in &spec.hidden_dims {
            backbone.push(Linear::init(&mut rng, fan_in, h));
            fan_in = h;
        }
        let head = Linear::init(&mut rng, fan_in, spec.num_classes);
        let embed = Linear::init(&mut rng, fan_in, spec.embed_dim);
        Ok(Self {
            spec,
            backbone,
            head,
            embed,
            frozen: FrozenMask::default(),
            head_pretrained: false,
        })
    }

    /// Redraws the head and projection ("new added layers") from `seed`.
    pub fn reinit_new_layers(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = self.spec.feature_dim();
        self.head = Linear::init(&mut rng, f, self.spec.num_classes);
        self.embed = Linear::init(&mut rng, f, self.spec.embed_dim);
        self.head_pretrained = false;
    }

    pub fn freeze_backbone(&mut self) {
        self.frozen.backbone = true;
    }

    pub fn freeze_all(&mut self) {
        self.frozen = FrozenMask {
            backbone: true,
            head: true,
            embed: true,
        };
    }

    pub fn unfreeze_all(&mut self) {
        self.frozen = FrozenMask::default();
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundNetwork {
        let train = |g| !self.frozen.is_frozen(g);
        BoundNetwork {
            backbone: self
                .backbone
                .iter()
                .map(|l| bind_layer(tape, l, train(ParamGroup::Backbone)))
                .collect(),
            head: bind_layer(tape, &self.head, train(ParamGroup::Head)),
            embed: bind_layer(tape, &self.embed, train(ParamGroup::Embed)),
        }
    }

    /// Binds every parameter as a constant.
    pub fn bind_frozen(&self, tape: &mut Tape) -> BoundNetwork {
        BoundNetwork {
            backbone: self
                .backbone
                .iter()
                .map(|l| bind_layer(tape, l, false))
                .collect(),
            head: bind_layer(tape, &self.head, false),
            embed: bind_layer(tape, &self.embed, false),
        }
    }

    /// Groups that receive updates, in a fixed order.
    pub fn trainable_groups(&self) -> Vec<ParamGroup> {
        [ParamGroup::Backbone, ParamGroup::Head, ParamGroup::Embed]
            .into_iter()
            .filter(|&g| !self.frozen.is_frozen(g))
            .collect()
    }

    fn group_mut(&mut self, group: ParamGroup) -> Vec<&mut Tensor> {
        match group {
            ParamGroup::Backbone => self
                .backbone
                .iter_mut()
                .flat_map(|l| l.params_mut())
                .collect(),
            ParamGroup::Head => self.head.params_mut().into(),
            ParamGroup::Embed => self.embed.params_mut().into(),
        }
    }

    /// Mutable views of every trainable parameter tensor.
    pub fn trainable_params(&mut self) -> Vec<&mut Tensor> {
        let groups = self.trainable_groups();
        let mut out = Vec::new();
        if groups.contains(&ParamGroup::Backbone) {
            out.extend(self.backbone.iter_mut().flat_map(|l| l.params_mut()));
        }
        if groups.contains(&ParamGroup::Head) {
            out.extend(self.head.params_mut());
        }
        if groups.contains(&ParamGroup::Embed) {
            out.extend(self.embed.params_mut());
        }
        out
    }

    /// Copies tape gradients into the trainable parameters' grad buffers.
    pub fn accumulate_grads(&mut self, bound: &BoundNetwork, grads: &Gradients) -> Result<()> {
        for g in self.trainable_groups() {
            let vars: Vec<Var> = match g {
                ParamGroup::Backbone => bound.backbone.iter().flat_map(|&(w, b)| [w, b]).collect(),
                ParamGroup::Head => vec![bound.head.0, bound.head.1],
                ParamGroup::Embed => vec![bound.embed.0, bound.embed.1],
            };
            for (param, var) in self.group_mut(g).into_iter().zip(vars) {
                let grad = grads
                    .get(var)
                    .ok_or_else(|| Error::invalid("parameter was bound as a constant"))?;
                param.accumulate_grad(grad.data())?;
            }
        }
        Ok(())
    }

    /// One SGD update over the trainable groups.
    pub fn sgd_step(&mut self, lr: f64) -> Result<()> {
        sgd_step(&mut self.trainable_params(), lr)
    }

    /// Evaluates without recording gradients.
    pub fn forward(&self, batch: &Tensor) -> Result<(Tensor, Tensor)> {
        network_forward(self, batch)
    }

    /// Features, logits and embeddings without recording gradients.
    pub fn forward_with_embed(&self, batch: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
        let mut tape = Tape::new();
        let bound = self.bind_frozen(&mut tape);
        let x = tape.constant(batch.clone());
        let (f, logits) = bound.forward(&mut tape, x)?;
        let e = bound.embed(&mut tape, f)?;
        Ok((
            tape.value(f).clone(),
            tape.value(logits).clone(),
            tape.value(e).clone(),
        ))
    }

    /// Every parameter tensor keyed by `group.layer.kind`.
    pub fn named_params(&self) -> BTreeMap<String, &Tensor> {
        let mut out = BTreeMap::new();
        for (i, l) in self.backbone.iter().enumerate() {
            out.insert(format!("backbone.{i}.weight"), &l.weight);
            out.insert(format!("backbone.{i}.bias"), &l.bias);
        }
        out.insert("head.weight".into(), &self.head.weight);
        out.insert("head.bias".into(), &self.head.bias);
        out.insert("embed.weight".into(), &self.embed.weight);
        out.insert("embed.bias".into(), &self.embed.bias);
        out
    }

    pub fn params_finite(&self) -> bool {
        self.named_params().values().all(|t| t.is_finite())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            spec: self.spec.clone(),
            frozen: self.frozen,
            head_pretrained: self.head_pretrained,
            params: self
                .named_params()
                .into_iter()
                .map(|(k, t)| {
                    (
                        k,
                        ParamArray {
                            shape: t.shape().to_vec(),
                            data: t.data().to_vec(),
                        },
                    )
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        let mut state = Self::init(ckpt.spec, 0)?;
        state.frozen = ckpt.frozen;
        state.head_pretrained = ckpt.head_pretrained;
        let mut params = ckpt.params;
        let mut take = |name: String, slot: &mut Tensor| -> Result<()> {
            let arr = params
                .remove(&name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {name}")))?;
            if arr.shape != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?} does not match spec {:?}",
                    arr.shape,
                    slot.shape()
                )));
            }
            *slot = Tensor::new(arr.shape, arr.data)
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            Ok(())
        };
        for (i, l) in state.backbone.iter_mut().enumerate() {
            take(format!("backbone.{i}.weight"), &mut l.weight)?;
            take(format!("backbone.{i}.bias"), &mut l.bias)?;
        }
        take("head.weight".into(), &mut state.head.weight)?;
        take("head.bias".into(), &mut state.head.bias)?;
        take("embed.weight".into(), &mut state.embed.weight)?;
        take("embed.bias".into(), &mut state.embed.bias)?;
        if let Some(extra) = params.keys().next() {
            return Err(Error::Checkpoint(format!("unexpected parameter {extra}")));
        }
        if !state.params_finite() {
            return Err(Error::Checkpoint("non-finite parameter values".into()));
        }
        Ok(state)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let ckpt: Checkpoint =
            serde_json::from_str(&text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(ckpt)
    }
}

/// Features and logits for a batch, with no gradient tracking.
pub fn network_forward(state: &NetworkState, batch: &Tensor) -> Result<(Tensor, Tensor)> {
    if batch.shape().len() != 2 || batch.cols() != state.spec.input_dim {
        return Err(Error::ShapeMismatch {
            op: "network_forward",
            left: batch.shape().to_vec(),
            right: vec![batch.rows(), state.spec.input_dim],
        });
    }
    let mut tape = Tape::new();
    let bound = state.bind_frozen(&mut tape);
    let x = tape.constant(batch.clone());
    let (f, logits) = bound.forward(&mut tape, x)?;
    Ok((tape.value(f).clone(), tape.value(logits).clone()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamArray {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// On-disk form of a [`NetworkState`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub spec: NetworkSpec,
    pub frozen: FrozenMask,
    pub head_pretrained: bool,
    pub params: BTreeMap<String, ParamArray>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(hidden: Vec<usize>) -> NetworkSpec {
        NetworkSpec {
            input_dim: 5,
            hidden_dims: hidden,
            num_classes: 3,
            embed_dim: 4,
            role: Role::Student,
        }
    }

    fn batch(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-2.0..2.0))
            .collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    // independent affine/ReLU chain over nested Vecs
    fn oracle_forward(state: &NetworkState, x: &Tensor) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let lin = |rows: &Vec<Vec<f64>>, l: &Linear| -> Vec<Vec<f64>> {
            let (fin, fout) = (l.weight.rows(), l.weight.cols());
            rows.iter()
                .map(|r| {
                    (0..fout)
                        .map(|j| {
                            let mut acc = 0.0;
                            for i in 0..fin {
                                acc += r[i] * l.weight.get(i, j);
                            }
                            acc + l.bias.data()[j]
                        })
                        .collect()
                })
                .collect()
        };
        let mut h: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
        for l in &state.backbone {
            h = lin(&h, l)
                .into_iter()
                .map(|r| r.into_iter().map(|v| v.max(0.0)).collect())
                .collect();
        }
        let logits = lin(&h, &state.head);
        (h, logits)
    }

    #[test]
    fn init_is_deterministic() {
        let a = NetworkState::init(tiny(vec![6, 4]), 11).unwrap();
        let b = NetworkState::init(tiny(vec![6, 4]), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let s = NetworkState::init(tiny(vec![6]), 3).unwrap();
        let bound = 1.0 / 5f64.sqrt();
        assert!(s.backbone[0].weight.data().iter().all(|w| w.abs() <= bound));
        assert!(s.backbone[0].bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn seed_sweep_gives_distinct_params() {
        let states: Vec<_> = (0..5)
            .map(|s| NetworkState::init(tiny(vec![6]), s).unwrap())
            .collect();
        for i in 0..5 {
            for j in i + 1..5 {
                let d = states[i].backbone[0]
                    .weight
                    .max_abs_diff(&states[j].backbone[0].weight);
                assert!(d > 0.0);
            }
        }
    }

    #[test]
    fn embed_dim_below_three_rejected() {
        let mut spec = tiny(vec![]);
        spec.embed_dim = 2;
        assert!(NetworkState::init(spec, 0).is_err());
    }

    #[test]
    fn no_hidden_layers_is_affine() {
        let s = NetworkState::init(tiny(vec![]), 4).unwrap();
        let x = batch(3, 5, 9);
        let (f, logits) = s.forward(&x).unwrap();
        assert_eq!(f, x);
        let (_, oracle) = oracle_forward(&s, &x);
        for i in 0..3 {
            for j in 0..3 {
                assert!((logits.get(i, j) - oracle[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_weights_give_zero_logits() {
        let mut s = NetworkState::init(tiny(vec![4]), 1).unwrap();
        for p in s.trainable_params() {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let (_, logits) = s.forward(&batch(4, 5, 2)).unwrap();
        assert!(logits.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn forward_matches_oracle() {
        let s = NetworkState::init(tiny(vec![7, 6]), 21).unwrap();
        let x = batch(4, 5, 22);
        let (f, logits) = s.forward(&x).unwrap();
        let (of, ol) = oracle_forward(&s, &x);
        for i in 0..4 {
            for j in 0..6 {
                assert!((f.get(i, j) - of[i][j]).abs() < 1e-12);
            }
            for j in 0..3 {
                assert!((logits.get(i, j) - ol[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rows_are_independent() {
        let s = NetworkState::init(tiny(vec![6]), 5).unwrap();
        let x4 = batch(4, 5, 6);
        let x1 = x4.select_rows(&[0]);
        let (_, l4) = s.forward(&x4).unwrap();
        let (_, l1) = s.forward(&x1).unwrap();
        assert_eq!(l4.row(0), l1.row(0));
    }

    #[test]
    fn input_width_checked() {
        let s = NetworkState::init(tiny(vec![6]), 5).unwrap();
        assert!(matches!(
            s.forward(&batch(2, 4, 0)),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn identity_projection_reproduces_features() {
        let mut tape = Tape::new();
        let f = batch(3, 4, 8);
        let fv = tape.constant(f.clone());
        let w = tape.constant(Tensor::identity(4));
        let b = tape.constant(Tensor::zeros(vec![1, 4]));
        let x = node_embed(&mut tape, fv, (w, b)).unwrap();
        assert_eq!(tape.value(x), &f);
    }

    #[test]
    fn projection_bias_cancels_in_row_differences() {
        let f = batch(3, 8, 12);
        let w = batch(8, 4, 13);
        let run = |bias: Vec<f64>| {
            let mut tape = Tape::new();
            let fv = tape.constant(f.clone());
            let wv = tape.constant(w.clone());
            let bv = tape.constant(Tensor::matrix(1, 4, bias).unwrap());
            let x = node_embed(&mut tape, fv, (wv, bv)).unwrap();
            tape.value(x).clone()
        };
        let a = run(vec![0.0; 4]);
        let b = run(vec![3.0, -1.0, 0.5, 10.0]);
        for j in 0..4 {
            let da = a.get(0, j) - a.get(2, j);
            let db = b.get(0, j) - b.get(2, j);
            assert!((da - db).abs() < 1e-12);
        }
    }

    #[test]
    fn projection_matches_matrix_oracle() {
        let f = batch(5, 8, 30);
        let w = batch(8, 4, 31);
        let bias = batch(1, 4, 32);
        let mut tape = Tape::new();
        let (fv, wv, bv) = (
            tape.constant(f.clone()),
            tape.constant(w.clone()),
            tape.constant(bias.clone()),
        );
        let x = node_embed(&mut tape, fv, (wv, bv)).unwrap();
        for i in 0..5 {
            for j in 0..4 {
                let mut acc = 0.0;
                for k in 0..8 {
                    acc += f.get(i, k) * w.get(k, j);
                }
                acc += bias.data()[j];
                assert!((tape.value(x).get(i, j) - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn embedding_shape_is_shared_across_widths() {
        let mut t = NetworkSpec::desk_teacher(6, 3);
        t.embed_dim = 5;
        let mut s = NetworkSpec::desk_student(6, 3);
        s.embed_dim = 5;
        let teacher = NetworkState::init(t, 0).unwrap();
        let student = NetworkState::init(s, 0).unwrap();
        let x = batch(7, 6, 1);
        let (ft, _, et) = teacher.forward_with_embed(&x).unwrap();
        let (fs, _, es) = student.forward_with_embed(&x).unwrap();
        assert_ne!(ft.cols(), fs.cols());
        assert_eq!(et.shape(), &[7, 5]);
        assert_eq!(es.shape(), &[7, 5]);
    }

    #[test]
    fn trainable_groups_follow_mask() {
        let mut teacher = NetworkState::init(NetworkSpec::desk_teacher(4, 2), 0).unwrap();
        assert_eq!(teacher.trainable_params().len(), 2 * 2 + 2 + 2);
        teacher.freeze_backbone();
        assert_eq!(
            teacher.trainable_groups(),
            vec![ParamGroup::Head, ParamGroup::Embed]
        );
        assert_eq!(teacher.trainable_params().len(), 4);
        teacher.freeze_all();
        assert!(teacher.trainable_params().is_empty());
        let before = teacher.clone();
        teacher.sgd_step(1.0).unwrap();
        assert_eq!(teacher, before);
    }

    #[test]
    fn frozen_backbone_survives_training_steps() {
        let mut s = NetworkState::init(tiny(vec![6]), 2).unwrap();
        s.freeze_backbone();
        let before = s.backbone.clone();
        let x = batch(4, 5, 3);
        for _ in 0..5 {
            let mut tape = Tape::new();
            let bound = s.bind(&mut tape);
            let xv = tape.constant(x.clone());
            let (f, logits) = bound.forward(&mut tape, xv).unwrap();
            let e = bound.embed(&mut tape, f).unwrap();
            let sq = tape.mul(logits, logits).unwrap();
            let a = tape.sum(sq).unwrap();
            let b = tape.sum(e).unwrap();
            let loss = tape.add(a, b).unwrap();
            let g = tape.backward(loss).unwrap();
            s.accumulate_grads(&bound, &g).unwrap();
            s.sgd_step(0.1).unwrap();
        }
        assert_eq!(s.backbone, before);
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut s = NetworkState::init(tiny(vec![6, 3]), 7).unwrap();
        s.freeze_backbone();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        s.save(&path).unwrap();
        let back = NetworkState::load(&path).unwrap();
        assert_eq!(back, s);

        let mut ckpt = s.to_checkpoint();
        ckpt.version = 99;
        assert!(NetworkState::from_checkpoint(ckpt).is_err());
        let mut ckpt = s.to_checkpoint();
        ckpt.params.remove("head.bias");
        assert!(NetworkState::from_checkpoint(ckpt).is_err());
    }
}
