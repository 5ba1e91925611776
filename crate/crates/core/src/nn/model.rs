//! Residual temporal-convolution classifier.
//!
//! Tokens are `[B, L, N, D]`: batch, time, variable, embedding dimension.
//! A block computes
//!
//! ```text
//! y = x + FFN2(FFN1(BN(DWConv(x))))
//! ```
//!
//! where DWConv is depthwise along time per (n, d) channel, FFN1 mixes the
//! `D` features inside each variable and FFN2 mixes the `N` variables inside
//! each feature. The head flattens each token to `N·D` and maps it to class
//! logits.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;

use super::graph::{Graph, Var};
use super::ops::{softmax_rows, BatchStats};
use super::optim::AdamW;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::{self, Rng};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;
pub const STANDARDIZE_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    Wvembs,
    Lembs,
}

impl EmbedMode {
    pub fn name(self) -> &'static str {
        match self {
            EmbedMode::Wvembs => "wvembs",
            EmbedMode::Lembs => "lembs",
        }
    }
}

impl fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EmbedMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "wvembs" => Ok(EmbedMode::Wvembs),
            "lembs" => Ok(EmbedMode::Lembs),
            other => Err(format!("unknown mode `{other}` (expected wvembs or lembs)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub blocks: usize,
    pub kernel: usize,
    pub ffn_mult: usize,
    pub dropout: f64,
    pub classes: usize,
    pub mode: EmbedMode,
    /// Embedding width of the LEmbs baseline.
    pub lembs_dim: usize,
    pub use_batch_norm: bool,
    pub use_ffn: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            blocks: 3,
            kernel: 13,
            ffn_mult: 2,
            dropout: 0.1,
            classes: 3,
            mode: EmbedMode::Wvembs,
            lembs_dim: 16,
            use_batch_norm: true,
            use_ffn: true,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::config("model.blocks", "must be positive"));
        }
        if self.kernel == 0 || self.kernel % 2 == 0 {
            return Err(Error::config("model.kernel", format!("must be odd and positive, got {}", self.kernel)));
        }
        if self.ffn_mult == 0 {
            return Err(Error::config("model.ffn_mult", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("model.dropout", format!("must lie in [0, 1), got {}", self.dropout)));
        }
        if self.classes < 2 {
            return Err(Error::config("model.classes", format!("need at least 2 classes, got {}", self.classes)));
        }
        if self.lembs_dim == 0 {
            return Err(Error::config("model.lembs_dim", "must be positive"));
        }
        Ok(())
    }
}

/// Index of a tensor in a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub usize);

/// Named trainable tensors in registration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    pub names: Vec<String>,
    pub tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn add(&mut self, name: String, tensor: Tensor) -> ParamId {
        self.names.push(name);
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    /// Uniform in `±1/√fan_in`.
    pub fn add_uniform(&mut self, name: String, shape: Vec<usize>, fan_in: usize, rng: &mut Rng) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let numel = shape.iter().product();
        let data = (0..numel).map(|_| rng.gen_range(-bound..bound)).collect();
        self.add(name, Tensor { shape, data, grad: None })
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Registers every tensor as a differentiable leaf.
    pub fn bind(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.leaf(t.clone())).collect()
    }

    /// Registers every tensor as a constant.
    pub fn bind_const(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.constant(t.clone())).collect()
    }
}

/// Two grouped pointwise layers with a GELU between.
#[derive(Debug, Clone, Copy)]
pub struct FfnIds {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl FfnIds {
    fn init(store: &mut ParamStore, prefix: &str, groups: usize, width: usize, mult: usize, rng: &mut Rng) -> Self {
        let hidden = width * mult;
        FfnIds {
            w1: store.add_uniform(format!("{prefix}.w1"), vec![groups, hidden, width], width, rng),
            b1: store.add(format!("{prefix}.b1"), Tensor::zeros(vec![groups, hidden])),
            w2: store.add_uniform(format!("{prefix}.w2"), vec![groups, width, hidden], hidden, rng),
            b2: store.add(format!("{prefix}.b2"), Tensor::zeros(vec![groups, width])),
        }
    }

    fn vars(&self, v: &[Var]) -> [Var; 4] {
        [v[self.w1.0], v[self.b1.0], v[self.w2.0], v[self.b2.0]]
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub dw_weight: ParamId,
    pub dw_bias: ParamId,
    pub bn_gamma: ParamId,
    pub bn_beta: ParamId,
    pub ffn1: FfnIds,
    pub ffn2: FfnIds,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl Block {
    pub fn init(store: &mut ParamStore, prefix: &str, vars: usize, dim: usize, config: &ModelConfig, rng: &mut Rng) -> Self {
        let ch = vars * dim;
        Block {
            dw_weight: store.add_uniform(format!("{prefix}.dw.weight"), vec![config.kernel, ch], config.kernel, rng),
            dw_bias: store.add(format!("{prefix}.dw.bias"), Tensor::zeros(vec![ch])),
            bn_gamma: store.add(format!("{prefix}.bn.gamma"), Tensor::filled(vec![ch], 1.0)),
            bn_beta: store.add(format!("{prefix}.bn.beta"), Tensor::zeros(vec![ch])),
            ffn1: FfnIds::init(store, &format!("{prefix}.ffn1"), vars, dim, config.ffn_mult, rng),
            ffn2: FfnIds::init(store, &format!("{prefix}.ffn2"), dim, vars, config.ffn_mult, rng),
            running_mean: vec![0.0; ch],
            running_var: vec![1.0; ch],
        }
    }

    pub fn vars(&self, v: &[Var]) -> BlockVars {
        BlockVars {
            dw_weight: v[self.dw_weight.0],
            dw_bias: v[self.dw_bias.0],
            bn_gamma: v[self.bn_gamma.0],
            bn_beta: v[self.bn_beta.0],
            ffn1: self.ffn1.vars(v),
            ffn2: self.ffn2.vars(v),
        }
    }

    /// Exponential moving average update; the variance is stored unbiased.
    pub fn update_running(&mut self, stats: &BatchStats) {
        let n = stats.count as f64;
        let correction = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        for c in 0..self.running_mean.len() {
            self.running_mean[c] = (1.0 - BN_MOMENTUM) * self.running_mean[c] + BN_MOMENTUM * stats.mean[c];
            self.running_var[c] = (1.0 - BN_MOMENTUM) * self.running_var[c] + BN_MOMENTUM * stats.var[c] * correction;
        }
    }
}

/// Graph handles of one block's parameters.
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub dw_weight: Var,
    pub dw_bias: Var,
    pub bn_gamma: Var,
    pub bn_beta: Var,
    /// `[w1, b1, w2, b2]`.
    pub ffn1: [Var; 4],
    pub ffn2: [Var; 4],
}

#[derive(Debug, Clone, Copy)]
pub enum BnMode<'a> {
    Train,
    Eval { mean: &'a [f64], var: &'a [f64] },
    Off,
}

#[derive(Debug, Clone, Copy)]
pub struct BlockOptions<'a> {
    pub bn: BnMode<'a>,
    pub use_ffn: bool,
}

fn ffn(g: &mut Graph, x: Var, p: &[Var; 4]) -> Result<Var> {
    let h = g.grouped_linear(x, p[0], p[1])?;
    let h = g.gelu(h);
    g.grouped_linear(h, p[2], p[3])
}

/// One residual block on `[B, L, N, D]`. Returns the batch statistics when
/// batch norm runs in training mode.
pub fn block_forward(g: &mut Graph, x: Var, p: &BlockVars, opts: BlockOptions) -> Result<(Var, Option<BatchStats>)> {
    if g.shape(x).len() != 4 {
        return Err(Error::shape("block", format!("expected [B, L, N, D], got {:?}", g.shape(x))));
    }
    let mut h = g.dwconv_time(x, p.dw_weight, p.dw_bias)?;
    let mut stats = None;
    match opts.bn {
        BnMode::Train => {
            let (y, s) = g.batch_norm_train(h, p.bn_gamma, p.bn_beta, BN_EPS)?;
            h = y;
            stats = Some(s);
        }
        BnMode::Eval { mean, var } => h = g.batch_norm_eval(h, p.bn_gamma, p.bn_beta, mean, var, BN_EPS)?,
        BnMode::Off => {}
    }
    if opts.use_ffn {
        h = ffn(g, h, &p.ffn1)?;
        h = g.swap_last2(h)?;
        h = ffn(g, h, &p.ffn2)?;
        h = g.swap_last2(h)?;
    }
    Ok((g.add(x, h)?, stats))
}

/// Flattens `[B, L, N, D]` tokens, applies inverted dropout when given a
/// rate and an rng, and returns `[B·L, C]` logits.
pub fn head_forward(g: &mut Graph, z: Var, weight: Var, bias: Var, dropout: Option<(f64, &mut Rng)>) -> Result<Var> {
    let shape = g.shape(z).to_vec();
    if shape.len() != 4 {
        return Err(Error::shape("head", format!("expected [B, L, N, D], got {shape:?}")));
    }
    let tokens = shape[0] * shape[1];
    let width = shape[2] * shape[3];
    let mut h = g.reshape(z, vec![tokens, 1, width])?;
    if let Some((rate, rng)) = dropout {
        if rate > 0.0 {
            let keep = 1.0 - rate;
            let mask = (0..tokens * width)
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect();
            h = g.mul_const(h, mask)?;
        }
    }
    let logits = g.grouped_linear(h, weight, bias)?;
    let classes = g.shape(logits)[2];
    g.reshape(logits, vec![tokens, classes])
}

/// Row-wise class probabilities of `[T, C]` logits.
pub fn probabilities(g: &Graph, logits: Var) -> Vec<f64> {
    let t = g.value(logits);
    softmax_rows(&t.data, t.shape[1])
}

/// Standardizes raw `[B, L, N]` windows over time and lifts every scalar to
/// `D` learned features per variable: weight `[N, D, 1]`, bias `[N, D]`.
pub fn lembs_forward(g: &mut Graph, x: Var, weight: Var, bias: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    if shape.len() != 3 {
        return Err(Error::shape("lembs", format!("expected [B, L, N], got {shape:?}")));
    }
    let z = g.standardize_time(x, STANDARDIZE_EPS)?;
    let z = g.reshape(z, vec![shape[0], shape[1], shape[2], 1])?;
    g.grouped_linear(z, weight, bias)
}

/// Mean token cross-entropy of `[T, C]` logits, through a fused log-softmax.
pub fn cross_entropy(g: &mut Graph, logits: Var, labels: &[u16]) -> Result<Var> {
    g.softmax_cross_entropy(logits, labels)
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vars: usize,
    /// Width `D` of the token tensor.
    pub dim: usize,
    pub params: ParamStore,
    pub blocks: Vec<Block>,
    pub lembs: Option<(ParamId, ParamId)>,
    pub head: (ParamId, ParamId),
}

pub struct Forward {
    pub logits: Var,
    pub params: Vec<Var>,
    pub stats: Vec<BatchStats>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    pub loss: f64,
    pub grad_norm: f64,
}

impl Model {
    /// `dim` is the token width: the embedding width in wvembs mode; in
    /// lembs mode it must equal `config.lembs_dim`.
    pub fn new(config: ModelConfig, vars: usize, dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if vars == 0 || dim == 0 {
            return Err(Error::config("model", "token tensor needs positive N and D"));
        }
        if config.mode == EmbedMode::Lembs && dim != config.lembs_dim {
            return Err(Error::config("model.lembs_dim", format!("is {}, model built with D = {dim}", config.lembs_dim)));
        }
        let mut rng = seed::rng(seed);
        let mut params = ParamStore::default();
        let lembs = (config.mode == EmbedMode::Lembs).then(|| {
            (
                params.add_uniform("lembs.weight".into(), vec![vars, dim, 1], 1, &mut rng),
                params.add("lembs.bias".into(), Tensor::zeros(vec![vars, dim])),
            )
        });
        let blocks = (0..config.blocks)
            .map(|i| Block::init(&mut params, &format!("block{i}"), vars, dim, &config, &mut rng))
            .collect();
        let width = vars * dim;
        let head = (
            params.add_uniform("head.weight".into(), vec![1, config.classes, width], width, &mut rng),
            params.add("head.bias".into(), Tensor::zeros(vec![1, config.classes])),
        );
        Ok(Model {
            config,
            vars,
            dim,
            params,
            blocks,
            lembs,
            head,
        })
    }

    /// Expected input shape after the batch and time axes.
    pub fn input_tail(&self) -> Vec<usize> {
        match self.config.mode {
            EmbedMode::Wvembs => vec![self.vars, self.dim],
            EmbedMode::Lembs => vec![self.vars],
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        if input.shape.len() < 2 || input.shape[2..] != self.input_tail()[..] {
            return Err(Error::shape(
                "model input",
                format!("got {:?}, expected [B, L, {:?}] for {} mode", input.shape, self.input_tail(), self.config.mode),
            ));
        }
        Ok(())
    }

    /// Builds the forward graph. `train` selects batch statistics and, with
    /// an rng, head dropout.
    pub fn forward(&self, g: &mut Graph, input: &Tensor, train: bool, rng: Option<&mut Rng>, grads: bool) -> Result<Forward> {
        self.check_input(input)?;
        let params = if grads { self.params.bind(g) } else { self.params.bind_const(g) };
        let x = g.constant(input.clone());
        let mut h = match self.lembs {
            Some((w, b)) => lembs_forward(g, x, params[w.0], params[b.0])?,
            None => x,
        };
        let mut stats = Vec::new();
        for block in &self.blocks {
            let bn = match (self.config.use_batch_norm, train) {
                (false, _) => BnMode::Off,
                (true, true) => BnMode::Train,
                (true, false) => BnMode::Eval {
                    mean: &block.running_mean,
                    var: &block.running_var,
                },
            };
            let opts = BlockOptions {
                bn,
                use_ffn: self.config.use_ffn,
            };
            let (y, s) = block_forward(g, h, &block.vars(&params), opts)?;
            h = y;
            stats.extend(s);
        }
        let dropout = if train { rng.map(|r| (self.config.dropout, r)) } else { None };
        let logits = head_forward(g, h, params[self.head.0 .0], params[self.head.1 .0], dropout)?;
        Ok(Forward { logits, params, stats })
    }

    /// One optimization step on a batch; returns the pre-update loss and the
    /// global gradient norm. Non-finite losses abort before any update.
    pub fn train_step(&mut self, input: &Tensor, labels: &[u16], opt: &mut AdamW, rng: &mut Rng) -> Result<StepStats> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, input, true, Some(rng), true)?;
        let loss = cross_entropy(&mut g, fwd.logits, labels)?;
        let loss_value = g.value(loss).item();
        if !loss_value.is_finite() {
            return Err(Error::NumericDomain(format!("non-finite loss {loss_value}")));
        }
        let mut grads = g.backward(loss)?;
        let grads: Vec<Vec<f64>> = fwd
            .params
            .iter()
            .zip(&self.params.tensors)
            .map(|(&v, t)| grads.take(v).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect();
        let grad_norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
        if !grad_norm.is_finite() {
            return Err(Error::NumericDomain(format!("non-finite gradient norm at loss {loss_value}")));
        }
        for (block, s) in self.blocks.iter_mut().zip(&fwd.stats) {
            block.update_running(s);
        }
        opt.step(&mut self.params, &grads)?;
        Ok(StepStats {
            loss: loss_value,
            grad_norm,
        })
    }

    /// `[B·L, C]` logits in inference mode: running batch-norm statistics,
    /// no dropout.
    pub fn logits(&self, input: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let fwd = self.forward(&mut g, input, false, None, false)?;
        Ok(g.value(fwd.logits).clone())
    }

    pub fn predict_proba(&self, input: &Tensor) -> Result<Vec<f64>> {
        let logits = self.logits(input)?;
        Ok(softmax_rows(&logits.data, self.config.classes))
    }

    /// Parameters followed by batch-norm running statistics, by name.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out: Vec<(String, Tensor)> = self
            .params
            .names
            .iter()
            .cloned()
            .zip(self.params.tensors.iter().cloned())
            .collect();
        for (i, b) in self.blocks.iter().enumerate() {
            let ch = b.running_mean.len();
            out.push((format!("block{i}.bn.running_mean"), Tensor { shape: vec![ch], data: b.running_mean.clone(), grad: None }));
            out.push((format!("block{i}.bn.running_var"), Tensor { shape: vec![ch], data: b.running_var.clone(), grad: None }));
        }
        out
    }

    /// Overwrites every tensor from named blocks; every name must be present
    /// with a matching shape.
    pub fn load_named(&mut self, blocks: &[(String, Tensor)]) -> Result<()> {
        let lookup = |name: &str| -> Result<&Tensor> {
            blocks
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, t)| t)
                .ok_or_else(|| Error::Missing {
                    what: "checkpoint tensor",
                    name: name.to_string(),
                })
        };
        for i in 0..self.params.len() {
            let src = lookup(&self.params.names[i])?;
            if src.shape != self.params.tensors[i].shape {
                return Err(Error::shape(
                    "checkpoint",
                    format!("{} has shape {:?}, model expects {:?}", self.params.names[i], src.shape, self.params.tensors[i].shape),
                ));
            }
            self.params.tensors[i].data.clone_from(&src.data);
        }
        for (i, b) in self.blocks.iter_mut().enumerate() {
            for (suffix, dst) in [("running_mean", &mut b.running_mean), ("running_var", &mut b.running_var)] {
                let name = format!("block{i}.bn.{suffix}");
                let src = lookup(&name)?;
                if src.data.len() != dst.len() {
                    return Err(Error::shape("checkpoint", format!("{name} has {} values, expected {}", src.data.len(), dst.len())));
                }
                dst.clone_from(&src.data);
            }
        }
        Ok(())
    }
}
