//! Bidirectional recurrent token classifier.
//!
//! Architecture: frozen word embeddings feed two independent tanh
//! recurrences (left-to-right and right-to-left, zero initial states); the
//! per-position hidden pairs are concatenated and mapped through an affine
//! layer to two-way softmax probabilities.

use crate::rng::SplitMix64;
use crate::tagger::{EmbeddingTable, TaggerError};
use crate::textprep::{Label, LabeledSequence};

/// Output class index for KEYWORD; index 0 is NONKEYWORD.
pub const CLASS_KEYWORD: usize = 1;

/// Parameters of one recurrence direction: input projection (`hidden x dim`),
/// recurrent matrix (`hidden x hidden`) and bias, all row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentBlock {
    pub w_in: Vec<f64>,
    pub w_rec: Vec<f64>,
    pub bias: Vec<f64>,
}

impl RecurrentBlock {
    fn zeros(hidden: usize, dim: usize) -> Self {
        RecurrentBlock {
            w_in: vec![0.0; hidden * dim],
            w_rec: vec![0.0; hidden * hidden],
            bias: vec![0.0; hidden],
        }
    }

    fn init(hidden: usize, dim: usize, rng: &mut SplitMix64) -> Self {
        let mut block = Self::zeros(hidden, dim);
        for v in block
            .w_in
            .iter_mut()
            .chain(block.w_rec.iter_mut())
            .chain(block.bias.iter_mut())
        {
            *v = rng.next_range(-0.1, 0.1);
        }
        block
    }
}

/// The tagger: frozen embedding table plus trainable recurrent and output
/// parameters. Two models built from the same seed and embedding are
/// bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct TaggerModel {
    pub(crate) embedding: EmbeddingTable,
    pub(crate) forward_block: RecurrentBlock,
    pub(crate) backward_block: RecurrentBlock,
    /// Output affine, `2 x 2*hidden` row-major.
    pub(crate) w_out: Vec<f64>,
    pub(crate) b_out: Vec<f64>,
    pub(crate) hidden_size: usize,
    pub(crate) seed: u64,
    pub(crate) version: u32,
}

/// Current model file/layout version.
pub const MODEL_VERSION: u32 = 1;

impl TaggerModel {
    /// Initializes all trainable parameters uniformly in `[-0.1, 0.1)` from
    /// a [`SplitMix64`] stream seeded with `seed`. Draw order: forward block
    /// (`w_in`, `w_rec`, `bias`), backward block, output weights, output
    /// bias.
    pub fn new(embedding: EmbeddingTable, hidden_size: usize, seed: u64) -> Result<Self, TaggerError> {
        if hidden_size == 0 {
            return Err(TaggerError::InvalidConfig("hidden_size must be >= 1".into()));
        }
        if embedding.dim() == 0 {
            return Err(TaggerError::InvalidConfig("embedding dim must be >= 1".into()));
        }
        let dim = embedding.dim();
        let mut rng = SplitMix64::new(seed);
        let forward_block = RecurrentBlock::init(hidden_size, dim, &mut rng);
        let backward_block = RecurrentBlock::init(hidden_size, dim, &mut rng);
        let mut w_out = vec![0.0; 2 * 2 * hidden_size];
        let mut b_out = vec![0.0; 2];
        for v in w_out.iter_mut().chain(b_out.iter_mut()) {
            *v = rng.next_range(-0.1, 0.1);
        }
        Ok(TaggerModel {
            embedding,
            forward_block,
            backward_block,
            w_out,
            b_out,
            hidden_size,
            seed,
            version: MODEL_VERSION,
        })
    }

    /// All-zero trainable parameters; probabilities come out uniform.
    pub fn zeroed(embedding: EmbeddingTable, hidden_size: usize) -> Result<Self, TaggerError> {
        let mut model = Self::new(embedding, hidden_size, 0)?;
        for block in model.param_blocks_mut() {
            block.iter_mut().for_each(|v| *v = 0.0);
        }
        Ok(model)
    }

    pub fn embedding(&self) -> &EmbeddingTable {
        &self.embedding
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    /// Trainable parameter blocks in the canonical order used by
    /// initialization, serialization, and gradient checking.
    pub(crate) fn param_blocks(&self) -> [&Vec<f64>; 8] {
        [
            &self.forward_block.w_in,
            &self.forward_block.w_rec,
            &self.forward_block.bias,
            &self.backward_block.w_in,
            &self.backward_block.w_rec,
            &self.backward_block.bias,
            &self.w_out,
            &self.b_out,
        ]
    }

    pub(crate) fn param_blocks_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.forward_block.w_in,
            &mut self.forward_block.w_rec,
            &mut self.forward_block.bias,
            &mut self.backward_block.w_in,
            &mut self.backward_block.w_rec,
            &mut self.backward_block.bias,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.param_blocks().iter().map(|b| b.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.param_blocks()
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Runs the network over a word sequence and returns per-token class
    /// probabilities plus the activations needed for backpropagation.
    pub fn forward<S: AsRef<str>>(&self, norms: &[S]) -> Result<ForwardPass, TaggerError> {
        let t_len = norms.len();
        if t_len == 0 {
            return Err(TaggerError::EmptySequence);
        }
        let h = self.hidden_size;
        let d = self.embedding.dim();

        let inputs: Vec<Vec<f64>> = norms
            .iter()
            .map(|w| self.embedding.lookup(w.as_ref()))
            .collect();

        let mut fwd = vec![vec![0.0; h]; t_len];
        for t in 0..t_len {
            let (done, rest) = fwd.split_at_mut(t);
            let state = &mut rest[0];
            state.copy_from_slice(&self.forward_block.bias);
            matvec_acc(&self.forward_block.w_in, h, d, &inputs[t], state);
            if t > 0 {
                matvec_acc(&self.forward_block.w_rec, h, h, &done[t - 1], state);
            }
            state.iter_mut().for_each(|v| *v = v.tanh());
        }

        let mut bwd = vec![vec![0.0; h]; t_len];
        for t in (0..t_len).rev() {
            let (head, tail) = bwd.split_at_mut(t + 1);
            let state = &mut head[t];
            state.copy_from_slice(&self.backward_block.bias);
            matvec_acc(&self.backward_block.w_in, h, d, &inputs[t], state);
            if t + 1 < t_len {
                matvec_acc(&self.backward_block.w_rec, h, h, &tail[0], state);
            }
            state.iter_mut().for_each(|v| *v = v.tanh());
        }

        let mut probs = Vec::with_capacity(t_len);
        let mut logits = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let mut z = [self.b_out[0], self.b_out[1]];
            for (k, zk) in z.iter_mut().enumerate() {
                let row = &self.w_out[k * 2 * h..(k + 1) * 2 * h];
                for j in 0..h {
                    *zk += row[j] * fwd[t][j] + row[h + j] * bwd[t][j];
                }
            }
            logits.push(z);
            probs.push(softmax2(z));
        }

        Ok(ForwardPass {
            probs,
            logits,
            inputs,
            fwd,
            bwd,
        })
    }

    /// Mean per-token cross-entropy of a labeled sequence.
    pub fn loss(&self, sequence: &LabeledSequence) -> Result<f64, TaggerError> {
        let norms = sequence.norms();
        let pass = self.forward(&norms)?;
        let mut total = 0.0;
        for (t, label) in sequence.labels.iter().enumerate() {
            total += cross_entropy(&pass.logits[t], class_index(*label));
        }
        Ok(total / sequence.labels.len() as f64)
    }

    /// Mean cross-entropy loss and gradients for all trainable parameters,
    /// by backpropagation through time. Embeddings are frozen and receive
    /// no gradient.
    #[allow(clippy::needless_range_loop)] // indices address several parallel arrays
    pub fn loss_and_grads(&self, sequence: &LabeledSequence) -> Result<(f64, Gradients), TaggerError> {
        let norms = sequence.norms();
        let pass = self.forward(&norms)?;
        let t_len = norms.len();
        let h = self.hidden_size;
        let d = self.embedding.dim();
        let inv_t = 1.0 / t_len as f64;

        let mut grads = Gradients::zeros(h, d);
        let mut d_fwd = vec![vec![0.0; h]; t_len];
        let mut d_bwd = vec![vec![0.0; h]; t_len];
        let mut loss = 0.0;

        for t in 0..t_len {
            let y = class_index(sequence.labels[t]);
            loss += cross_entropy(&pass.logits[t], y);
            let p = pass.probs[t];
            let delta = [
                (p[0] - if y == 0 { 1.0 } else { 0.0 }) * inv_t,
                (p[1] - if y == 1 { 1.0 } else { 0.0 }) * inv_t,
            ];
            for k in 0..2 {
                grads.b_out[k] += delta[k];
                let w_row = &self.w_out[k * 2 * h..(k + 1) * 2 * h];
                let g_row = &mut grads.w_out[k * 2 * h..(k + 1) * 2 * h];
                for j in 0..h {
                    g_row[j] += delta[k] * pass.fwd[t][j];
                    g_row[h + j] += delta[k] * pass.bwd[t][j];
                    d_fwd[t][j] += w_row[j] * delta[k];
                    d_bwd[t][j] += w_row[h + j] * delta[k];
                }
            }
        }

        // Forward recurrence: h_t feeds h_{t+1}, so walk right to left.
        let mut carry = vec![0.0; h];
        for t in (0..t_len).rev() {
            let mut pre = vec![0.0; h];
            for j in 0..h {
                let dh = d_fwd[t][j] + carry[j];
                pre[j] = dh * (1.0 - pass.fwd[t][j] * pass.fwd[t][j]);
                grads.forward_block.bias[j] += pre[j];
            }
            outer_acc(&mut grads.forward_block.w_in, &pre, &pass.inputs[t]);
            if t > 0 {
                outer_acc(&mut grads.forward_block.w_rec, &pre, &pass.fwd[t - 1]);
            }
            carry.iter_mut().for_each(|v| *v = 0.0);
            matvec_transpose_acc(&self.forward_block.w_rec, h, h, &pre, &mut carry);
        }

        // Backward recurrence: g_t feeds g_{t-1}, so walk left to right.
        let mut carry = vec![0.0; h];
        for t in 0..t_len {
            let mut pre = vec![0.0; h];
            for j in 0..h {
                let dg = d_bwd[t][j] + carry[j];
                pre[j] = dg * (1.0 - pass.bwd[t][j] * pass.bwd[t][j]);
                grads.backward_block.bias[j] += pre[j];
            }
            outer_acc(&mut grads.backward_block.w_in, &pre, &pass.inputs[t]);
            if t + 1 < t_len {
                outer_acc(&mut grads.backward_block.w_rec, &pre, &pass.bwd[t + 1]);
            }
            carry.iter_mut().for_each(|v| *v = 0.0);
            matvec_transpose_acc(&self.backward_block.w_rec, h, h, &pre, &mut carry);
        }

        Ok((loss * inv_t, grads))
    }

    /// Applies one plain gradient-descent step.
    pub(crate) fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (param, grad) in self.param_blocks_mut().into_iter().zip(grads.blocks()) {
            for (p, g) in param.iter_mut().zip(grad.iter()) {
                *p -= learning_rate * g;
            }
        }
    }
}

/// Cached activations from one forward run.
pub struct ForwardPass {
    /// Per-token class probabilities, each row summing to 1.
    pub probs: Vec<[f64; 2]>,
    logits: Vec<[f64; 2]>,
    inputs: Vec<Vec<f64>>,
    fwd: Vec<Vec<f64>>,
    bwd: Vec<Vec<f64>>,
}

/// Gradients for every trainable block, shaped like the model parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub forward_block: RecurrentBlock,
    pub backward_block: RecurrentBlock,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Names of the gradient/parameter blocks in canonical order.
pub const BLOCK_NAMES: [&str; 8] = [
    "forward.w_in",
    "forward.w_rec",
    "forward.bias",
    "backward.w_in",
    "backward.w_rec",
    "backward.bias",
    "w_out",
    "b_out",
];

impl Gradients {
    pub fn zeros(hidden: usize, dim: usize) -> Self {
        Gradients {
            forward_block: RecurrentBlock::zeros(hidden, dim),
            backward_block: RecurrentBlock::zeros(hidden, dim),
            w_out: vec![0.0; 2 * 2 * hidden],
            b_out: vec![0.0; 2],
        }
    }

    pub fn blocks(&self) -> [&Vec<f64>; 8] {
        [
            &self.forward_block.w_in,
            &self.forward_block.w_rec,
            &self.forward_block.bias,
            &self.backward_block.w_in,
            &self.backward_block.w_rec,
            &self.backward_block.bias,
            &self.w_out,
            &self.b_out,
        ]
    }

    pub fn blocks_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.forward_block.w_in,
            &mut self.forward_block.w_rec,
            &mut self.forward_block.bias,
            &mut self.backward_block.w_in,
            &mut self.backward_block.w_rec,
            &mut self.backward_block.bias,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn global_norm(&self) -> f64 {
        self.blocks()
            .iter()
            .flat_map(|b| b.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        for block in self.blocks_mut() {
            block.iter_mut().for_each(|v| *v *= factor);
        }
    }
}

pub(crate) fn class_index(label: Label) -> usize {
    match label {
        Label::NonKeyword => 0,
        Label::Keyword => CLASS_KEYWORD,
    }
}

/// Numerically stable two-class softmax.
fn softmax2(z: [f64; 2]) -> [f64; 2] {
    let m = z[0].max(z[1]);
    let e0 = (z[0] - m).exp();
    let e1 = (z[1] - m).exp();
    let sum = e0 + e1;
    [e0 / sum, e1 / sum]
}

/// `-log softmax(z)[y]` via log-sum-exp.
fn cross_entropy(z: &[f64; 2], y: usize) -> f64 {
    let m = z[0].max(z[1]);
    let lse = m + ((z[0] - m).exp() + (z[1] - m).exp()).ln();
    lse - z[y]
}

/// `out += mat * x` where `mat` is `rows x cols` row-major.
fn matvec_acc(mat: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &mat[r * cols..(r + 1) * cols];
        let mut acc = 0.0;
        for c in 0..cols {
            acc += row[c] * x[c];
        }
        out[r] += acc;
    }
}

/// `out += mat^T * x` where `mat` is `rows x cols` row-major and `x` has
/// length `rows`.
fn matvec_transpose_acc(mat: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        let row = &mat[r * cols..(r + 1) * cols];
        for c in 0..cols {
            out[c] += row[c] * x[r];
        }
    }
}

/// `out += a (x) b` accumulated into a `|a| x |b|` row-major matrix.
fn outer_acc(out: &mut [f64], a: &[f64], b: &[f64]) {
    for (i, &ai) in a.iter().enumerate() {
        let row = &mut out[i * b.len()..(i + 1) * b.len()];
        for (o, &bj) in row.iter_mut().zip(b.iter()) {
            *o += ai * bj;
        }
    }
}

/// Central finite-difference gradients: each parameter is perturbed by
/// `±step` and the loss difference divided by `2 * step`. Serves as the
/// independent check on [`TaggerModel::loss_and_grads`].
#[allow(clippy::needless_range_loop)] // block index addresses model and gradients in parallel
pub fn finite_difference_grads(
    model: &TaggerModel,
    sequence: &LabeledSequence,
    step: f64,
) -> Result<Gradients, TaggerError> {
    let mut probe = model.clone();
    let mut grads = Gradients::zeros(model.hidden_size, model.embedding.dim());
    for b in 0..8 {
        for i in 0..model.param_blocks()[b].len() {
            let original = probe.param_blocks()[b][i];
            probe.param_blocks_mut()[b][i] = original + step;
            let plus = probe.loss(sequence)?;
            probe.param_blocks_mut()[b][i] = original - step;
            let minus = probe.loss(sequence)?;
            probe.param_blocks_mut()[b][i] = original;
            grads.blocks_mut()[b][i] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(grads)
}

/// Result of a gradient check.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub passed: bool,
}

/// Compares analytic gradients against central finite differences with
/// relative error `|a - n| / max(1e-8, |a| + |n|)` and returns the maximum
/// over all parameters.
pub fn grad_check(
    model: &TaggerModel,
    sequence: &LabeledSequence,
    step: f64,
    tolerance: f64,
) -> Result<GradCheck, TaggerError> {
    let (_, analytic) = model.loss_and_grads(sequence)?;
    let numeric = finite_difference_grads(model, sequence, step)?;
    let max_relative_error = max_relative_error(&analytic, &numeric);
    Ok(GradCheck {
        max_relative_error,
        passed: max_relative_error <= tolerance,
    })
}

/// Maximum elementwise relative error between two gradient sets.
pub fn max_relative_error(a: &Gradients, b: &Gradients) -> f64 {
    a.blocks()
        .iter()
        .zip(b.blocks().iter())
        .flat_map(|(x, y)| x.iter().zip(y.iter()))
        .map(|(&x, &y)| (x - y).abs() / f64::max(1e-8, x.abs() + y.abs()))
        .fold(0.0, f64::max)
}
