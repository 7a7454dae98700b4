use std::ops::Range;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{NetConfig, TanhPlacement};
use super::layers::{
    batch_cross_entropy, batch_norm_eval, batch_norm_train, global_avg_pool, global_avg_pool_backward,
    instance_norm, linear, linear_backward, norm_backward, relu, relu_backward, tanh_backward, NormCache,
    RunningStats,
};
use crate::error::{Error, Result};
use crate::mesh::VertexAdjacency;
use crate::polyfilter::{conv_backward, conv_forward, ConvLayerSpec, Patches};
use crate::polyshape::{poly_pool, poly_pool_backward, MultiResShape, PoolMap};
use crate::FeatureMatrix;

/// One network input: features on the finest level, the patch structure of
/// every level (finest first) and the pooling maps between them.
#[derive(Debug, Clone)]
pub struct NetInput {
    pub features: FeatureMatrix,
    pub patches: Vec<Patches>,
    /// `pools[k]` maps level `k` onto level `k + 1`.
    pub pools: Vec<PoolMap>,
}

impl NetInput {
    pub fn new(features: FeatureMatrix, patches: Vec<Patches>, pools: Vec<PoolMap>) -> Result<Self> {
        if patches.is_empty() || pools.len() + 1 != patches.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} levels with {} pooling maps",
                patches.len(),
                pools.len()
            )));
        }
        if features.nrows() != patches[0].len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows on a {}-vertex level",
                features.nrows(),
                patches[0].len()
            )));
        }
        for (k, pool) in pools.iter().enumerate() {
            if pool.fine_count() != patches[k].len() || pool.coarse_count() != patches[k + 1].len() {
                return Err(Error::ShapeMismatch(format!("pooling map {k} does not match its levels")));
            }
        }
        Ok(Self {
            features,
            patches,
            pools,
        })
    }

    /// Finest-level positions and normals over the whole pyramid.
    pub fn from_shape(shape: &MultiResShape) -> Self {
        Self {
            features: shape.input_features(),
            patches: shape.adjacency.iter().rev().map(Patches::from_adjacency).collect(),
            pools: shape.pool_maps.iter().rev().cloned().collect(),
        }
    }

    /// A single-level graph without pooling.
    pub fn from_graph(features: FeatureMatrix, adjacency: &VertexAdjacency) -> Result<Self> {
        Self::new(features, vec![Patches::from_adjacency(adjacency)], Vec::new())
    }

    pub fn level_count(&self) -> usize {
        self.patches.len()
    }
}

#[derive(Debug, Clone)]
struct ConvBlock {
    spec: ConvLayerSpec,
    conv: Range<usize>,
    gamma: Range<usize>,
    beta: Range<usize>,
}

#[derive(Debug, Clone)]
struct FcBlock {
    inputs: usize,
    outputs: usize,
    w: Range<usize>,
    b: Range<usize>,
    /// Batch-norm `(γ, β)` for hidden layers.
    bn: Option<(Range<usize>, Range<usize>)>,
}

#[derive(Debug, Clone)]
struct Layout {
    conv: Vec<ConvBlock>,
    fc: Vec<FcBlock>,
    trunk_len: usize,
    total: usize,
}

impl Layout {
    fn new(config: &NetConfig) -> Self {
        let mut next = 0;
        let mut take = |n: usize| {
            next += n;
            next - n..next
        };
        let mut conv = Vec::new();
        let mut c_in = config.in_channels;
        for &c_out in &config.conv_widths {
            let spec = ConvLayerSpec::new(config.variant, c_in, c_out, config.degree);
            conv.push(ConvBlock {
                spec,
                conv: take(spec.param_count()),
                gamma: take(c_out),
                beta: take(c_out),
            });
            c_in = c_out;
        }
        let trunk_len = conv.last().map_or(0, |b: &ConvBlock| b.beta.end);
        let mut fc = Vec::new();
        let widths: Vec<usize> = config.fc_widths.iter().copied().chain([config.classes]).collect();
        for (k, &out) in widths.iter().enumerate() {
            let hidden = k + 1 < widths.len();
            fc.push(FcBlock {
                inputs: c_in,
                outputs: out,
                w: take(c_in * out),
                b: take(out),
                bn: hidden.then(|| (take(out), take(out))),
            });
            c_in = out;
        }
        let total = fc.last().map_or(trunk_len, |b: &FcBlock| b.b.end);
        Self {
            conv,
            fc,
            trunk_len,
            total,
        }
    }
}

#[derive(Debug)]
struct BlockCache {
    input: FeatureMatrix,
    level: usize,
    norm: NormCache,
    /// Output of tanh.
    act: FeatureMatrix,
    /// Pool winners and the number of rows pooled from.
    pool: Option<(Array2<usize>, usize)>,
}

#[derive(Debug)]
struct TrunkCache {
    blocks: Vec<BlockCache>,
    rows: usize,
}

#[derive(Debug)]
struct HeadCache {
    inputs: Vec<FeatureMatrix>,
    norms: Vec<NormCache>,
    pre_relu: Vec<FeatureMatrix>,
}

#[derive(Debug)]
struct Tape {
    inputs: Vec<NetInput>,
    trunks: Vec<TrunkCache>,
    head: HeadCache,
}

/// PolyConv trunk applied per input, global average pooling, and a batched
/// FC head. Parameters and gradients live in flat vectors.
#[derive(Debug)]
pub struct Network {
    config: NetConfig,
    layout: Layout,
    params: Vec<f64>,
    grads: Vec<f64>,
    running: Vec<RunningStats>,
    training: bool,
    tape: Option<Tape>,
}

impl Network {
    pub fn new(config: NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; layout.total];
        for block in &layout.conv {
            params[block.conv.clone()].copy_from_slice(&block.spec.init_params(&mut rng));
            params[block.gamma.clone()].fill(1.0);
        }
        let mut running = Vec::new();
        for block in &layout.fc {
            let hidden = block.bn.is_some();
            let bound = if hidden {
                (6.0 / block.inputs as f64).sqrt()
            } else {
                (6.0 / (block.inputs + block.outputs) as f64).sqrt()
            };
            for p in &mut params[block.w.clone()] {
                *p = rng.gen_range(-bound..bound);
            }
            if let Some((gamma, _)) = &block.bn {
                params[gamma.clone()].fill(1.0);
                running.push(RunningStats::new(block.outputs));
            }
        }
        Ok(Self {
            grads: vec![0.0; layout.total],
            config,
            layout,
            params,
            running,
            training: true,
            tape: None,
        })
    }

    /// Rebuilds a network from stored parameters and batch-norm statistics.
    pub fn from_parts(config: NetConfig, params: Vec<f64>, running: Vec<RunningStats>) -> Result<Self> {
        let mut net = Self::new(config, 0)?;
        if params.len() != net.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "network has {} parameters, got {}",
                net.params.len(),
                params.len()
            )));
        }
        let widths_ok = running.len() == net.running.len()
            && running
                .iter()
                .zip(&net.running)
                .all(|(a, b)| a.mean.len() == b.mean.len() && a.var.len() == b.var.len());
        if !widths_ok {
            return Err(Error::ShapeMismatch("batch-norm statistics do not match the layers".into()));
        }
        net.params = params;
        net.running = running;
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    /// Parameters and gradients together, for optimizer updates.
    pub fn params_and_grads(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.params, &self.grads)
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Parameters of the PolyConv layers alone (filters, mixing weights and
    /// biases).
    pub fn conv_param_count(&self) -> usize {
        self.layout.conv.iter().map(|b| b.conv.len()).sum()
    }

    pub fn running_stats(&self) -> &[RunningStats] {
        &self.running
    }

    pub fn set_training(&mut self, training: bool) {
        self.training = training;
        if !training {
            self.tape = None;
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    fn check_input(&self, input: &NetInput) -> Result<()> {
        if input.features.ncols() != self.config.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "network expects {} input channels, got {}",
                self.config.in_channels,
                input.features.ncols()
            )));
        }
        let levels = input.level_count();
        if levels != 1 && levels != self.layout.conv.len() {
            return Err(Error::ShapeMismatch(format!(
                "input has {levels} levels but the network has {} conv blocks",
                self.layout.conv.len()
            )));
        }
        Ok(())
    }

    fn trunk_forward(&self, input: &NetInput) -> Result<(Array1<f64>, TrunkCache)> {
        self.check_input(input)?;
        let pooled = input.level_count() > 1;
        let last = self.layout.conv.len() - 1;
        let mut x = input.features.clone();
        let mut blocks = Vec::with_capacity(self.layout.conv.len());
        for (i, block) in self.layout.conv.iter().enumerate() {
            let level = if pooled { i } else { 0 };
            let y = conv_forward(&block.spec, &self.params[block.conv.clone()], &x, &input.patches[level])?;
            let (z, norm) = instance_norm(&y, &self.params[block.gamma.clone()], &self.params[block.beta.clone()]);
            let pool_map = (pooled && i < last).then(|| &input.pools[level]);
            let (act, next, pool) = match (self.config.tanh, pool_map) {
                (_, None) => {
                    let t = z.mapv(f64::tanh);
                    (t.clone(), t, None)
                }
                (TanhPlacement::BeforePool, Some(map)) => {
                    let t = z.mapv(f64::tanh);
                    let p = poly_pool(&t, map)?;
                    (t, p.features, Some((p.argmax, map.fine_count())))
                }
                (TanhPlacement::AfterPool, Some(map)) => {
                    let p = poly_pool(&z, map)?;
                    let t = p.features.mapv(f64::tanh);
                    (t.clone(), t, Some((p.argmax, map.fine_count())))
                }
            };
            blocks.push(BlockCache {
                input: std::mem::replace(&mut x, next),
                level,
                norm,
                act,
                pool,
            });
        }
        let rows = x.nrows();
        Ok((global_avg_pool(&x), TrunkCache { blocks, rows }))
    }

    fn trunk_backward(&self, input: &NetInput, cache: &TrunkCache, grad_pooled: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.layout.trunk_len];
        let mut g = global_avg_pool_backward(grad_pooled, cache.rows);
        for (block, bc) in self.layout.conv.iter().zip(&cache.blocks).rev() {
            let dz = match (self.config.tanh, &bc.pool) {
                (_, None) => tanh_backward(&g, &bc.act),
                (TanhPlacement::BeforePool, Some((argmax, fine))) => {
                    tanh_backward(&poly_pool_backward(&g, argmax, *fine), &bc.act)
                }
                (TanhPlacement::AfterPool, Some((argmax, fine))) => {
                    poly_pool_backward(&tanh_backward(&g, &bc.act), argmax, *fine)
                }
            };
            let (dy, d_gamma, d_beta) = norm_backward(&dz, &bc.norm, &self.params[block.gamma.clone()]);
            let cg = conv_backward(
                &block.spec,
                &self.params[block.conv.clone()],
                &bc.input,
                &input.patches[bc.level],
                &dy,
            )?;
            grads[block.conv.clone()].copy_from_slice(&cg.params);
            grads[block.gamma.clone()].copy_from_slice(&d_gamma);
            grads[block.beta.clone()].copy_from_slice(&d_beta);
            g = cg.features;
        }
        Ok(grads)
    }

    /// Globally pooled trunk features, one row per input.
    pub fn embed(&self, batch: &[&NetInput]) -> Result<FeatureMatrix> {
        let rows: Vec<Array1<f64>> = batch
            .par_iter()
            .map(|input| self.trunk_forward(input).map(|(g, _)| g))
            .collect::<Result<_>>()?;
        Ok(stack(&rows, self.trunk_width()))
    }

    fn trunk_width(&self) -> usize {
        *self.config.conv_widths.last().expect("validated")
    }

    /// Eval-mode head over pooled features.
    pub fn head_eval(&self, features: &FeatureMatrix) -> Result<FeatureMatrix> {
        if features.ncols() != self.trunk_width() {
            return Err(Error::ShapeMismatch(format!(
                "head expects {} features, got {}",
                self.trunk_width(),
                features.ncols()
            )));
        }
        let mut h = features.clone();
        for (k, block) in self.layout.fc.iter().enumerate() {
            let a = linear(&h, &self.params[block.w.clone()], &self.params[block.b.clone()]);
            h = match &block.bn {
                Some((gamma, beta)) => relu(&batch_norm_eval(
                    &a,
                    &self.params[gamma.clone()],
                    &self.params[beta.clone()],
                    &self.running[k],
                )),
                None => a,
            };
        }
        Ok(h)
    }

    /// Eval-mode logits; never records a tape.
    pub fn predict(&self, batch: &[&NetInput]) -> Result<FeatureMatrix> {
        self.head_eval(&self.embed(batch)?)
    }

    /// Logits for a batch. In training mode this uses batch statistics,
    /// updates the running statistics and records what
    /// [`backward`](Self::backward) needs.
    pub fn forward(&mut self, batch: &[&NetInput]) -> Result<FeatureMatrix> {
        self.tape = None;
        if !self.training {
            return self.predict(batch);
        }
        if batch.len() < 2 && !self.layout.fc.iter().all(|b| b.bn.is_none()) {
            return Err(Error::BatchTooSmall(batch.len()));
        }
        let (rows, trunks): (Vec<Array1<f64>>, Vec<TrunkCache>) = batch
            .par_iter()
            .map(|input| self.trunk_forward(input))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .unzip();
        let mut h = stack(&rows, self.trunk_width());
        let mut head = HeadCache {
            inputs: Vec::new(),
            norms: Vec::new(),
            pre_relu: Vec::new(),
        };
        for (k, block) in self.layout.fc.iter().enumerate() {
            let a = linear(&h, &self.params[block.w.clone()], &self.params[block.b.clone()]);
            head.inputs.push(std::mem::replace(&mut h, Array2::zeros((0, 0))));
            h = match &block.bn {
                Some((gamma, beta)) => {
                    let (n, cache) = batch_norm_train(
                        &a,
                        &self.params[gamma.clone()],
                        &self.params[beta.clone()],
                        &mut self.running[k],
                    )?;
                    head.norms.push(cache);
                    let r = relu(&n);
                    head.pre_relu.push(n);
                    r
                }
                None => a,
            };
        }
        self.tape = Some(Tape {
            inputs: batch.iter().map(|&i| i.clone()).collect(),
            trunks,
            head,
        });
        Ok(h)
    }

    /// Overwrites the gradient vector with `∂L/∂θ` given `∂L/∂logits`.
    /// Consumes the tape of the preceding training forward pass.
    pub fn backward(&mut self, grad_logits: &FeatureMatrix) -> Result<()> {
        let tape = self.tape.take().ok_or(Error::NoTape)?;
        if grad_logits.dim() != (tape.inputs.len(), self.config.classes) {
            return Err(Error::ShapeMismatch(format!(
                "logit gradient is {:?}, expected ({}, {})",
                grad_logits.dim(),
                tape.inputs.len(),
                self.config.classes
            )));
        }
        self.grads.fill(0.0);
        let mut g = grad_logits.clone();
        let mut hidden = tape.head.norms.len();
        for (k, block) in self.layout.fc.iter().enumerate().rev() {
            if let Some((gamma, beta)) = &block.bn {
                hidden -= 1;
                debug_assert_eq!(hidden, k);
                let dn = relu_backward(&g, &tape.head.pre_relu[hidden]);
                let (da, d_gamma, d_beta) = norm_backward(&dn, &tape.head.norms[hidden], &self.params[gamma.clone()]);
                self.grads[gamma.clone()].copy_from_slice(&d_gamma);
                self.grads[beta.clone()].copy_from_slice(&d_beta);
                g = da;
            }
            let (dx, dw, db) = linear_backward(&g, &tape.head.inputs[k], &self.params[block.w.clone()]);
            self.grads[block.w.clone()].copy_from_slice(&dw);
            self.grads[block.b.clone()].copy_from_slice(&db);
            g = dx;
        }
        let per_input: Vec<Vec<f64>> = (0..tape.inputs.len())
            .into_par_iter()
            .map(|i| {
                let row: Vec<f64> = g.row(i).to_vec();
                self.trunk_backward(&tape.inputs[i], &tape.trunks[i], &row)
            })
            .collect::<Result<_>>()?;
        for grads in per_input {
            for (acc, v) in self.grads[..self.layout.trunk_len].iter_mut().zip(grads) {
                *acc += v;
            }
        }
        Ok(())
    }

    /// Mean cross-entropy of a training forward pass, with gradients left in
    /// [`grads`](Self::grads). Returns the loss and the logits.
    pub fn loss_and_grad(&mut self, batch: &[&NetInput], labels: &[usize]) -> Result<(f64, FeatureMatrix)> {
        let logits = self.forward(batch)?;
        let (loss, grad) = batch_cross_entropy(&logits, labels)?;
        self.backward(&grad)?;
        Ok((loss, logits))
    }
}

fn stack(rows: &[Array1<f64>], width: usize) -> FeatureMatrix {
    let mut out = Array2::zeros((rows.len(), width));
    for (i, r) in rows.iter().enumerate() {
        out.row_mut(i).assign(r);
    }
    out
}
