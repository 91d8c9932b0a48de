//! Wasserstein GAN with gradient penalty over flattened ODE-Net parameter
//! vectors.
//!
//! The generator maps a Gaussian latent to a parameter vector; the critic
//! scores parameter vectors. Training alternates `n_critic` critic updates
//! (maximize `D(real) - D(fake) - lambda_gp * penalty`) with one generator
//! update (maximize `D(G(z))`). The penalty `(|grad D(xi')|_2 - 1)^2` is
//! evaluated on uniform interpolates between real and generated samples and
//! differentiated with respect to the critic weights through the emitted
//! backward nodes, so no hand-derived second-order terms are needed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffengine::{AdamState, Graph, NodeId};
use crate::poly::PolynomialExpr;
use crate::rng::named_stream;
use crate::symnet::{extract_system, SymNetShape};

#[derive(Debug, Error)]
pub enum GanError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("training set has {got} samples, batch size is {batch}")]
    DataTooSmall { got: usize, batch: usize },
    #[error("GAN training diverged at iteration {iteration}: loss = {loss}")]
    Diverged { iteration: usize, loss: f64 },
}

/// Per-dimension affine data normalization, stored so that external
/// interfaces always speak raw parameter space.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    fn fit(data: &[Vec<f64>]) -> Self {
        let dim = data[0].len();
        let n = data.len() as f64;
        let mut mean = vec![0.0; dim];
        for x in data {
            for i in 0..dim {
                mean[i] += x[i];
            }
        }
        for m in mean.iter_mut() {
            *m /= n;
        }
        let mut std = vec![0.0; dim];
        for x in data {
            for i in 0..dim {
                std[i] += (x[i] - mean[i]).powi(2);
            }
        }
        for s in std.iter_mut() {
            *s = (*s / n).sqrt().max(1e-8);
        }
        Self { mean, std }
    }

    fn transform(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    fn inverse(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

// ----- multilayer perceptron plumbing -----

fn mlp_param_count(layers: &[usize]) -> usize {
    layers
        .windows(2)
        .map(|w| w[1] * w[0] + w[1])
        .sum()
}

/// Plain value forward pass; hidden layers use the leaky rectifier, the last
/// layer is linear.
fn mlp_forward(layers: &[usize], params: &[f64], x: &[f64], slope: f64) -> Vec<f64> {
    debug_assert_eq!(params.len(), mlp_param_count(layers));
    let mut h = x.to_vec();
    let mut off = 0;
    for (l, w) in layers.windows(2).enumerate() {
        let (cols, rows) = (w[0], w[1]);
        let weights = &params[off..off + rows * cols];
        let biases = &params[off + rows * cols..off + rows * cols + rows];
        off += rows * cols + rows;
        let mut next = vec![0.0; rows];
        for r in 0..rows {
            let row = &weights[r * cols..(r + 1) * cols];
            let mut acc = 0.0;
            for c in 0..cols {
                acc += row[c] * h[c];
            }
            acc += biases[r];
            next[r] = if l + 2 < layers.len() && acc <= 0.0 {
                slope * acc
            } else {
                acc
            };
        }
        h = next;
    }
    h
}

/// Pre-sliced parameter nodes of one MLP inside a graph.
struct MlpNodes {
    layers: Vec<(NodeId, NodeId, usize, usize)>,
    slope: f64,
}

impl MlpNodes {
    fn build(g: &mut Graph, layers: &[usize], params: NodeId, slope: f64) -> Self {
        assert_eq!(g.len(params), mlp_param_count(layers), "MLP parameter node");
        let mut off = 0;
        let mut out = Vec::new();
        for w in layers.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let weights = g.slice(params, off, rows * cols);
            let biases = g.slice(params, off + rows * cols, rows);
            off += rows * cols + rows;
            out.push((weights, biases, rows, cols));
        }
        Self { layers: out, slope }
    }

    fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let n = self.layers.len();
        let mut h = x;
        for (l, &(w, b, rows, cols)) in self.layers.iter().enumerate() {
            h = g.affine(w, rows, cols, h, b);
            if l + 1 < n {
                h = g.leaky_relu(h, self.slope);
            }
        }
        h
    }
}

// ----- model -----

/// Generator and critic parameters plus the latent prior configuration.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GanModel {
    pub latent_dim: usize,
    /// Full generator layer sizes: `[latent_dim, hidden.., data_dim]`.
    pub g_layers: Vec<usize>,
    /// Full critic layer sizes: `[data_dim, hidden.., 1]`.
    pub d_layers: Vec<usize>,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub leaky_slope: f64,
    pub scaler: Option<Scaler>,
}

impl GanModel {
    /// Zero-initialized model; see [`GanModel::init_gaussian`] for the
    /// trainable starting point.
    pub fn new(latent_dim: usize, g_hidden: &[usize], d_hidden: &[usize], data_dim: usize) -> Self {
        let mut g_layers = vec![latent_dim];
        g_layers.extend_from_slice(g_hidden);
        g_layers.push(data_dim);
        let mut d_layers = vec![data_dim];
        d_layers.extend_from_slice(d_hidden);
        d_layers.push(1);
        let model = Self {
            latent_dim,
            theta: vec![0.0; mlp_param_count(&g_layers)],
            v: vec![0.0; mlp_param_count(&d_layers)],
            g_layers,
            d_layers,
            leaky_slope: 0.2,
            scaler: None,
        };
        assert_eq!(
            model.g_layers.last(),
            model.d_layers.first(),
            "generator output and critic input dimensions must agree"
        );
        model
    }

    pub fn data_dim(&self) -> usize {
        *self.d_layers.first().unwrap()
    }

    /// Gaussian weight init (std `sqrt(2 / fan_in)` per layer), zero biases.
    pub fn init_gaussian(&mut self, rng: &mut ChaCha8Rng) {
        fn init(layers: &[usize], params: &mut [f64], rng: &mut ChaCha8Rng) {
            let mut off = 0;
            for w in layers.windows(2) {
                let (cols, rows) = (w[0], w[1]);
                let std = (2.0 / cols as f64).sqrt();
                for p in params[off..off + rows * cols].iter_mut() {
                    *p = std * rng.sample::<f64, _>(StandardNormal);
                }
                for p in params[off + rows * cols..off + rows * cols + rows].iter_mut() {
                    *p = 0.0;
                }
                off += rows * cols + rows;
            }
        }
        init(&self.g_layers, &mut self.theta, rng);
        init(&self.d_layers, &mut self.v, rng);
    }

    /// Deterministic generator forward pass (raw parameter space).
    pub fn generate(&self, z: &[f64]) -> Result<Vec<f64>, GanError> {
        if z.len() != self.latent_dim {
            return Err(GanError::Shape(format!(
                "latent has dimension {}, expected {}",
                z.len(),
                self.latent_dim
            )));
        }
        let out = mlp_forward(&self.g_layers, &self.theta, z, self.leaky_slope);
        Ok(match &self.scaler {
            Some(s) => s.inverse(&out),
            None => out,
        })
    }

    /// Critic score of a raw parameter vector.
    pub fn discriminate(&self, xi: &[f64]) -> Result<f64, GanError> {
        if xi.len() != self.data_dim() {
            return Err(GanError::Shape(format!(
                "input has dimension {}, expected {}",
                xi.len(),
                self.data_dim()
            )));
        }
        let x = match &self.scaler {
            Some(s) => s.transform(xi),
            None => xi.to_vec(),
        };
        Ok(mlp_forward(&self.d_layers, &self.v, &x, self.leaky_slope)[0])
    }

    /// Build critic nodes on an existing graph. `input` must already be in
    /// the critic's working space; when a scaler is present use
    /// [`GanModel::standardize_nodes`] first.
    pub fn discriminator_nodes(&self, g: &mut Graph, v_leaf: NodeId, input: NodeId) -> NodeId {
        let mlp = MlpNodes::build(g, &self.d_layers, v_leaf, self.leaky_slope);
        mlp.forward(g, input)
    }

    /// Standardization nodes `(x - mean) / std` when a scaler is attached.
    pub fn standardize_nodes(&self, g: &mut Graph, input: NodeId) -> NodeId {
        match &self.scaler {
            None => input,
            Some(s) => {
                let mean = g.constant(s.mean.clone());
                let std = g.constant(s.std.clone());
                let centered = g.sub(input, mean);
                g.div(centered, std)
            }
        }
    }

    /// Gradient-penalty value at the interpolate `eps * real + (1 - eps) * fake`.
    pub fn gradient_penalty(
        &self,
        xi_real: &[f64],
        xi_fake: &[f64],
        eps: f64,
    ) -> Result<f64, GanError> {
        if xi_real.len() != self.data_dim() || xi_fake.len() != self.data_dim() {
            return Err(GanError::Shape("interpolation operand dimensions".into()));
        }
        if !(0.0..=1.0).contains(&eps) {
            return Err(GanError::Shape(format!("eps {eps} outside [0, 1]")));
        }
        let interp: Vec<f64> = xi_real
            .iter()
            .zip(xi_fake)
            .map(|(r, f)| eps * r + (1.0 - eps) * f)
            .collect();
        let interp = match &self.scaler {
            Some(s) => s.transform(&interp),
            None => interp,
        };
        let mut g = Graph::new();
        let v_leaf = g.leaf(self.v.clone());
        let x_leaf = g.leaf(interp);
        let score = self.discriminator_nodes(&mut g, v_leaf, x_leaf);
        let pen = penalty_nodes(&mut g, score, x_leaf);
        Ok(g.scalar_value(pen))
    }

    /// Draw `n` systems from the learned distribution and expand each into
    /// per-component polynomials.
    pub fn sample_odes(
        &self,
        n: usize,
        shape: SymNetShape,
        rng: &mut ChaCha8Rng,
    ) -> Result<Vec<GeneratedOde>, GanError> {
        if shape.param_count() != self.data_dim() {
            return Err(GanError::Shape(format!(
                "network shape needs {} parameters, generator emits {}",
                shape.param_count(),
                self.data_dim()
            )));
        }
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z: Vec<f64> = (0..self.latent_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let xi = self.generate(&z)?;
            let components = extract_system(&shape, &xi)
                .map_err(|e| GanError::Shape(e.to_string()))?;
            out.push(GeneratedOde { xi, components });
        }
        Ok(out)
    }
}

/// One sampled system: raw parameters and their symbolic expansion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeneratedOde {
    pub xi: Vec<f64>,
    pub components: Vec<PolynomialExpr>,
}

/// `(|grad_x D|_2 - 1)^2` as graph nodes, differentiable with respect to the
/// critic weights.
fn penalty_nodes(g: &mut Graph, score: NodeId, x_leaf: NodeId) -> NodeId {
    let grad_x = g
        .grad_as_graph(score, &[x_leaf])
        .expect("critic score is scalar")[0];
    let n = g.norm(grad_x);
    let one = g.constant_scalar(1.0);
    let diff = g.sub(n, one);
    let sq = g.square(diff);
    g.sum(sq)
}

/// Hyperparameters of one GAN fit.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GanTrainConfig {
    pub latent_dim: usize,
    pub g_hidden: Vec<usize>,
    pub d_hidden: Vec<usize>,
    pub leaky_slope: f64,
    pub lambda_gp: f64,
    /// Critic updates per generator update.
    pub n_critic: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub standardize: bool,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 32,
            g_hidden: vec![128, 128],
            d_hidden: vec![128, 128],
            leaky_slope: 0.2,
            lambda_gp: 10.0,
            n_critic: 5,
            batch_size: 32,
            learning_rate: 1e-4,
            iterations: 2000,
            standardize: false,
        }
    }
}

/// Per-iteration training diagnostics.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GanHistory {
    pub critic_loss: Vec<f64>,
    pub gen_loss: Vec<f64>,
    /// Critic's Wasserstein estimate `mean D(real) - mean D(fake)` at the
    /// last critic step of each iteration.
    pub wasserstein: Vec<f64>,
}

/// Reusable critic-update graph: batch of reals, fakes, and interpolates.
struct CriticGraph {
    graph: Graph,
    v_leaf: NodeId,
    real: Vec<NodeId>,
    fake: Vec<NodeId>,
    interp: Vec<NodeId>,
    loss: NodeId,
    wasserstein: NodeId,
    grad_v: NodeId,
}

impl CriticGraph {
    fn build(model: &GanModel, batch: usize, lambda_gp: f64) -> Self {
        let dim = model.data_dim();
        let mut g = Graph::new();
        let v_leaf = g.leaf(model.v.clone());
        let mlp = MlpNodes::build(&mut g, &model.d_layers, v_leaf, model.leaky_slope);
        let mut real = Vec::with_capacity(batch);
        let mut fake = Vec::with_capacity(batch);
        let mut interp = Vec::with_capacity(batch);
        let mut score_terms = Vec::with_capacity(batch);
        let mut pen_terms = Vec::with_capacity(batch);
        let mut real_scores = Vec::with_capacity(batch);
        let mut fake_scores = Vec::with_capacity(batch);
        for _ in 0..batch {
            let r = g.leaf(vec![0.0; dim]);
            let f = g.leaf(vec![0.0; dim]);
            let i = g.leaf(vec![0.0; dim]);
            let d_real = mlp.forward(&mut g, r);
            let d_fake = mlp.forward(&mut g, f);
            let d_interp = mlp.forward(&mut g, i);
            let pen = penalty_nodes(&mut g, d_interp, i);
            let diff = g.sub(d_fake, d_real);
            real.push(r);
            fake.push(f);
            interp.push(i);
            real_scores.push(d_real);
            fake_scores.push(d_fake);
            score_terms.push(diff);
            pen_terms.push(pen);
        }
        // Minimized loss: mean(D(fake) - D(real)) + lambda * mean(penalty).
        let scores = g.concat(&score_terms);
        let score_sum = g.sum(scores);
        let pens = g.concat(&pen_terms);
        let pen_sum = g.sum(pens);
        let score_mean = g.scale(1.0 / batch as f64, score_sum);
        let pen_mean = g.scale(lambda_gp / batch as f64, pen_sum);
        let loss = g.add(score_mean, pen_mean);
        let wasserstein = g.neg(score_mean);
        let grad_v = g.grad_as_graph(loss, &[v_leaf]).expect("scalar loss")[0];
        let _ = (real_scores, fake_scores);
        Self {
            graph: g,
            v_leaf,
            real,
            fake,
            interp,
            loss,
            wasserstein,
            grad_v,
        }
    }
}

/// Reusable generator-update graph; the critic weights are a leaf that is set
/// but never differentiated.
struct GenGraph {
    graph: Graph,
    theta_leaf: NodeId,
    v_leaf: NodeId,
    z: Vec<NodeId>,
    loss: NodeId,
    grad_theta: NodeId,
}

impl GenGraph {
    fn build(model: &GanModel, batch: usize) -> Self {
        let mut g = Graph::new();
        let theta_leaf = g.leaf(model.theta.clone());
        let v_leaf = g.leaf(model.v.clone());
        let gen = MlpNodes::build(&mut g, &model.g_layers, theta_leaf, model.leaky_slope);
        let critic = MlpNodes::build(&mut g, &model.d_layers, v_leaf, model.leaky_slope);
        let mut z = Vec::with_capacity(batch);
        let mut scores = Vec::with_capacity(batch);
        for _ in 0..batch {
            let zi = g.leaf(vec![0.0; model.latent_dim]);
            let sample = gen.forward(&mut g, zi);
            let score = critic.forward(&mut g, sample);
            z.push(zi);
            scores.push(score);
        }
        // Minimized loss: -mean D(G(z)).
        let cat = g.concat(&scores);
        let total = g.sum(cat);
        let loss = g.scale(-1.0 / batch as f64, total);
        let grad_theta = g.grad_as_graph(loss, &[theta_leaf]).expect("scalar loss")[0];
        Self {
            graph: g,
            theta_leaf,
            v_leaf,
            z,
            loss,
            grad_theta,
        }
    }
}

/// Mutable training state shared by the warm-up fit and the alternating
/// stage's GAN updates.
pub struct GanTrainer {
    pub model: GanModel,
    cfg: GanTrainConfig,
    critic: CriticGraph,
    gen: GenGraph,
    pub adam_v: AdamState,
    pub adam_theta: AdamState,
    grad_buf: Vec<f64>,
}

impl GanTrainer {
    pub fn new(model: GanModel, cfg: GanTrainConfig) -> Self {
        let critic = CriticGraph::build(&model, cfg.batch_size, cfg.lambda_gp);
        let gen = GenGraph::build(&model, cfg.batch_size);
        let adam_v = AdamState::with_betas(cfg.learning_rate, 0.0, 0.9, model.v.len());
        let adam_theta = AdamState::with_betas(cfg.learning_rate, 0.0, 0.9, model.theta.len());
        let max_dim = model.v.len().max(model.theta.len());
        Self {
            model,
            cfg,
            critic,
            gen,
            adam_v,
            adam_theta,
            grad_buf: vec![0.0; max_dim],
        }
    }

    /// Restore optimizer state from a checkpointed pair.
    pub fn with_adam_states(mut self, adam_v: AdamState, adam_theta: AdamState) -> Self {
        self.adam_v = adam_v;
        self.adam_theta = adam_theta;
        self
    }

    /// One critic update on a fresh batch. `data` must be in the critic's
    /// working space. Returns (critic loss, Wasserstein estimate).
    fn critic_step(
        &mut self,
        data: &[Vec<f64>],
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, f64), GanError> {
        let m = self.cfg.batch_size;
        for j in 0..m {
            let idx = rng.random_range(0..data.len());
            let z: Vec<f64> = (0..self.model.latent_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            let eps: f64 = rng.random_range(0.0..=1.0);
            let fake = mlp_forward(
                &self.model.g_layers,
                &self.model.theta,
                &z,
                self.model.leaky_slope,
            );
            let real = &data[idx];
            let interp: Vec<f64> = real
                .iter()
                .zip(&fake)
                .map(|(r, f)| eps * r + (1.0 - eps) * f)
                .collect();
            self.critic.graph.set_leaf(self.critic.real[j], real).unwrap();
            self.critic.graph.set_leaf(self.critic.fake[j], &fake).unwrap();
            self.critic.graph.set_leaf(self.critic.interp[j], &interp).unwrap();
        }
        self.critic
            .graph
            .set_leaf(self.critic.v_leaf, &self.model.v)
            .unwrap();
        self.critic.graph.recompute();
        let loss = self.critic.graph.scalar_value(self.critic.loss);
        let w = self.critic.graph.scalar_value(self.critic.wasserstein);
        let grad = self.critic.graph.value(self.critic.grad_v);
        self.grad_buf[..grad.len()].copy_from_slice(grad);
        let n = self.model.v.len();
        self.adam_v
            .step(&mut self.model.v, &self.grad_buf[..n])
            .expect("dimensions fixed");
        Ok((loss, w))
    }

    /// One generator update on a fresh latent batch; returns the loss.
    fn gen_step(&mut self, rng: &mut ChaCha8Rng) -> Result<f64, GanError> {
        for j in 0..self.cfg.batch_size {
            let z: Vec<f64> = (0..self.model.latent_dim)
                .map(|_| rng.sample(StandardNormal))
                .collect();
            self.gen.graph.set_leaf(self.gen.z[j], &z).unwrap();
        }
        self.gen
            .graph
            .set_leaf(self.gen.theta_leaf, &self.model.theta)
            .unwrap();
        self.gen
            .graph
            .set_leaf(self.gen.v_leaf, &self.model.v)
            .unwrap();
        self.gen.graph.recompute();
        let loss = self.gen.graph.scalar_value(self.gen.loss);
        let grad = self.gen.graph.value(self.gen.grad_theta);
        self.grad_buf[..grad.len()].copy_from_slice(grad);
        let n = self.model.theta.len();
        self.adam_theta
            .step(&mut self.model.theta, &self.grad_buf[..n])
            .expect("dimensions fixed");
        Ok(loss)
    }

    /// One full iteration: `n_critic` critic updates then one generator
    /// update, appended to `history`.
    pub fn iteration(
        &mut self,
        data: &[Vec<f64>],
        rng: &mut ChaCha8Rng,
        iteration: usize,
        history: &mut GanHistory,
    ) -> Result<(), GanError> {
        if data.len() < self.cfg.batch_size {
            return Err(GanError::DataTooSmall {
                got: data.len(),
                batch: self.cfg.batch_size,
            });
        }
        let mut last = (0.0, 0.0);
        for _ in 0..self.cfg.n_critic {
            last = self.critic_step(data, rng)?;
        }
        let gen_loss = self.gen_step(rng)?;
        if !last.0.is_finite() || !gen_loss.is_finite() {
            return Err(GanError::Diverged {
                iteration,
                loss: if last.0.is_finite() { gen_loss } else { last.0 },
            });
        }
        history.critic_loss.push(last.0);
        history.gen_loss.push(gen_loss);
        history.wasserstein.push(last.1);
        Ok(())
    }
}

/// Fit a fresh WGAN-GP to a set of parameter vectors.
///
/// With `cfg.standardize` the fit runs in per-dimension standardized space
/// and the returned model carries the scaler, so its public surface still
/// speaks raw parameter space.
pub fn train_warmup2(
    data: &[Vec<f64>],
    cfg: &GanTrainConfig,
    seed: u64,
) -> Result<(GanModel, GanHistory), GanError> {
    if data.is_empty() {
        return Err(GanError::DataTooSmall {
            got: 0,
            batch: cfg.batch_size,
        });
    }
    let dim = data[0].len();
    let mut model = GanModel::new(cfg.latent_dim, &cfg.g_hidden, &cfg.d_hidden, dim);
    model.leaky_slope = cfg.leaky_slope;
    let mut init_rng = named_stream(seed, "gan-init", 0);
    model.init_gaussian(&mut init_rng);

    let scaler = cfg.standardize.then(|| Scaler::fit(data));
    let working: Vec<Vec<f64>> = match &scaler {
        Some(s) => data.iter().map(|x| s.transform(x)).collect(),
        None => data.to_vec(),
    };

    let mut trainer = GanTrainer::new(model, cfg.clone());
    let mut history = GanHistory::default();
    let mut rng = named_stream(seed, "gan-train", 0);
    for it in 0..cfg.iterations {
        trainer.iteration(&working, &mut rng, it, &mut history)?;
    }
    let mut model = trainer.model;
    model.scaler = scaler;
    Ok((model, history))
}

/// On-disk form of a trained GAN.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GanCheckpoint {
    pub latent_dim: usize,
    pub g_layers: Vec<usize>,
    pub d_layers: Vec<usize>,
    pub theta: Vec<f64>,
    pub v: Vec<f64>,
    pub scaler: Option<Scaler>,
    pub seed: u64,
    #[serde(default)]
    pub leaky_slope: Option<f64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

impl GanCheckpoint {
    pub fn from_model(model: &GanModel, seed: u64, config_hash: Option<String>) -> Self {
        Self {
            latent_dim: model.latent_dim,
            g_layers: model.g_layers.clone(),
            d_layers: model.d_layers.clone(),
            theta: model.theta.clone(),
            v: model.v.clone(),
            scaler: model.scaler.clone(),
            seed,
            leaky_slope: Some(model.leaky_slope),
            config_hash,
        }
    }

    pub fn to_model(&self) -> GanModel {
        GanModel {
            latent_dim: self.latent_dim,
            g_layers: self.g_layers.clone(),
            d_layers: self.d_layers.clone(),
            theta: self.theta.clone(),
            v: self.v.clone(),
            leaky_slope: self.leaky_slope.unwrap_or(0.2),
            scaler: self.scaler.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{finite_diff_graph, rel_err};

    fn linear_critic(weights: Vec<f64>) -> GanModel {
        // No hidden layers: the critic is w . xi + b with b = 0.
        let dim = weights.len();
        let mut m = GanModel::new(4, &[], &[], dim);
        m.v[..dim].copy_from_slice(&weights);
        m
    }

    #[test]
    fn zero_generator_emits_final_bias() {
        let mut m = GanModel::new(3, &[5], &[4], 6);
        // Only the output bias is nonzero.
        let n = m.theta.len();
        for (i, b) in [0.5, -1.0, 0.25, 0.0, 2.0, -0.5].iter().enumerate() {
            m.theta[n - 6 + i] = *b;
        }
        let out = m.generate(&[0.3, -0.7, 1.1]).unwrap();
        assert_eq!(out, vec![0.5, -1.0, 0.25, 0.0, 2.0, -0.5]);
        // Deterministic.
        assert_eq!(out, m.generate(&[0.3, -0.7, 1.1]).unwrap());
    }

    #[test]
    fn generator_output_has_parameter_dimension() {
        let shape = SymNetShape::new(3, 2);
        let m = GanModel::new(32, &[128, 128], &[128, 128], shape.param_count());
        let out = m.generate(&vec![0.0; 32]).unwrap();
        assert_eq!(out.len(), 72);
        assert_eq!(m.data_dim(), 72);
    }

    #[test]
    fn zero_critic_scores_zero() {
        let m = GanModel::new(4, &[8], &[8], 5);
        assert_eq!(m.discriminate(&[1.0, -2.0, 3.0, 0.5, 0.1]).unwrap(), 0.0);
    }

    #[test]
    fn linear_critic_is_dot_product() {
        let m = linear_critic(vec![0.5, -1.5, 2.0]);
        let xi = [2.0, 1.0, -0.5];
        let expected = 0.5 * 2.0 - 1.5 - 2.0 * 0.5;
        assert!((m.discriminate(&xi).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn critic_input_gradient_matches_finite_differences() {
        let mut m = GanModel::new(4, &[6], &[6, 4], 5);
        let mut rng = named_stream(12, "test", 0);
        m.init_gaussian(&mut rng);
        let xi: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut g = Graph::new();
        let v_leaf = g.leaf(m.v.clone());
        let x_leaf = g.leaf(xi);
        let score = m.discriminator_nodes(&mut g, v_leaf, x_leaf);
        let analytic = g.grad(score, &[x_leaf]).unwrap().remove(0);
        let numeric = finite_diff_graph(&mut g, x_leaf, score, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-5, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn penalty_vanishes_for_unit_norm_linear_critic() {
        let m = linear_critic(vec![0.6, 0.8]);
        for eps in [0.0, 0.3, 1.0] {
            let p = m.gradient_penalty(&[1.0, 2.0], &[-3.0, 0.5], eps).unwrap();
            assert!(p.abs() < 1e-24, "penalty {p} at eps {eps}");
        }
    }

    #[test]
    fn penalty_of_scaled_linear_critic() {
        let m = linear_critic(vec![2.0, 0.0, 0.0, 0.0]);
        let p = m
            .gradient_penalty(&[1.0, 0.0, 2.0, 0.0], &[0.0, 1.0, 0.0, 2.0], 0.7)
            .unwrap();
        assert!((p - 1.0).abs() < 1e-12, "penalty {p}");
    }

    #[test]
    fn interpolation_endpoint_is_real_sample() {
        // eps = 1 must evaluate the penalty exactly at the real point; with a
        // critic whose gradient depends on position this is observable.
        let mut m = GanModel::new(2, &[4], &[4], 2);
        let mut rng = named_stream(21, "test", 0);
        m.init_gaussian(&mut rng);
        let real = [0.4, -0.2];
        let fake = [5.0, 3.0];
        let at_real = m.gradient_penalty(&real, &real, 0.5).unwrap();
        let endpoint = m.gradient_penalty(&real, &fake, 1.0).unwrap();
        assert!((at_real - endpoint).abs() < 1e-15);
    }

    #[test]
    fn penalty_gradient_wrt_weights_matches_finite_differences() {
        let mut m = GanModel::new(3, &[5], &[5, 4], 6);
        let mut rng = named_stream(13, "test", 0);
        m.init_gaussian(&mut rng);
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();

        let mut g = Graph::new();
        let v_leaf = g.leaf(m.v.clone());
        let x_leaf = g.leaf(x);
        let score = m.discriminator_nodes(&mut g, v_leaf, x_leaf);
        let pen = penalty_nodes(&mut g, score, x_leaf);
        let analytic = g.grad(pen, &[v_leaf]).unwrap().remove(0);
        let numeric = finite_diff_graph(&mut g, v_leaf, pen, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-4, "analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn sample_odes_shapes_and_degree_bound() {
        let shape = SymNetShape::new(3, 2);
        let mut m = GanModel::new(8, &[16], &[16], shape.param_count());
        let mut rng = named_stream(14, "test", 0);
        m.init_gaussian(&mut rng);
        assert!(m.sample_odes(0, shape, &mut rng).unwrap().is_empty());
        let odes = m.sample_odes(10, shape, &mut rng).unwrap();
        assert_eq!(odes.len(), 10);
        for ode in &odes {
            assert_eq!(ode.xi.len(), 72);
            assert_eq!(ode.components.len(), 3);
            for p in &ode.components {
                assert!(p.total_degree() <= 4);
            }
        }
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let mut rng = named_stream(15, "test", 0);
        let data: Vec<Vec<f64>> = (0..64)
            .map(|_| (0..3).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let cfg = GanTrainConfig {
            latent_dim: 4,
            g_hidden: vec![8],
            d_hidden: vec![8],
            batch_size: 8,
            iterations: 5,
            ..GanTrainConfig::default()
        };
        let (m1, h1) = train_warmup2(&data, &cfg, 7).unwrap();
        let (m2, h2) = train_warmup2(&data, &cfg, 7).unwrap();
        assert_eq!(m1.theta, m2.theta);
        assert_eq!(m1.v, m2.v);
        assert_eq!(h1.critic_loss, h2.critic_loss);
        assert_eq!(h1.wasserstein, h2.wasserstein);
    }

    #[test]
    fn learns_a_two_dimensional_gaussian() {
        // Target N(mu, Sigma) with correlated components.
        let mu = [1.0, -0.5];
        let chol = [[0.8, 0.0], [0.3, 0.6]]; // Sigma = chol chol^T
        let mut rng = named_stream(16, "test", 0);
        let data: Vec<Vec<f64>> = (0..512)
            .map(|_| {
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                vec![
                    mu[0] + chol[0][0] * z0,
                    mu[1] + chol[1][0] * z0 + chol[1][1] * z1,
                ]
            })
            .collect();
        let cfg = GanTrainConfig {
            latent_dim: 4,
            g_hidden: vec![32, 32],
            d_hidden: vec![32, 32],
            batch_size: 32,
            learning_rate: 2e-4,
            iterations: 900,
            ..GanTrainConfig::default()
        };
        let (model, history) = train_warmup2(&data, &cfg, 3).unwrap();

        let mut sample_rng = named_stream(16, "test", 1);
        let samples: Vec<Vec<f64>> = (0..2000)
            .map(|_| {
                let z: Vec<f64> = (0..cfg.latent_dim)
                    .map(|_| sample_rng.sample::<f64, _>(StandardNormal))
                    .collect();
                model.generate(&z).unwrap()
            })
            .collect();
        let n = samples.len() as f64;
        let mean: Vec<f64> = (0..2)
            .map(|j| samples.iter().map(|s| s[j]).sum::<f64>() / n)
            .collect();
        let mut cov = [[0.0f64; 2]; 2];
        for s in &samples {
            for i in 0..2 {
                for j in 0..2 {
                    cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / n;
                }
            }
        }
        let sigma = [[0.64, 0.24], [0.24, 0.45]];
        for j in 0..2 {
            assert!(
                (mean[j] - mu[j]).abs() < 0.2,
                "mean[{j}] = {} vs {}",
                mean[j],
                mu[j]
            );
        }
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (cov[i][j] - sigma[i][j]).abs() < 0.3,
                    "cov[{i}][{j}] = {} vs {}",
                    cov[i][j],
                    sigma[i][j]
                );
            }
        }

        // The critic's Wasserstein estimate should shrink as the generator
        // catches up.
        let early: f64 = history.wasserstein[..50]
            .iter()
            .map(|w| w.abs())
            .sum::<f64>()
            / 50.0;
        let late: f64 = history.wasserstein[history.wasserstein.len() - 50..]
            .iter()
            .map(|w| w.abs())
            .sum::<f64>()
            / 50.0;
        assert!(
            late < early,
            "Wasserstein estimate should trend down: early {early}, late {late}"
        );
    }

    #[test]
    fn batch_larger_than_dataset_is_rejected() {
        let data = vec![vec![0.0; 3]; 4];
        let cfg = GanTrainConfig {
            latent_dim: 2,
            g_hidden: vec![4],
            d_hidden: vec![4],
            batch_size: 8,
            iterations: 1,
            ..GanTrainConfig::default()
        };
        assert!(matches!(
            train_warmup2(&data, &cfg, 0),
            Err(GanError::DataTooSmall { got: 4, batch: 8 })
        ));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut m = GanModel::new(4, &[8], &[8], 6);
        let mut rng = named_stream(17, "test", 0);
        m.init_gaussian(&mut rng);
        m.scaler = Some(Scaler {
            mean: vec![0.5; 6],
            std: vec![2.0; 6],
        });
        let ck = GanCheckpoint::from_model(&m, 9, Some("abc".into()));
        let json = serde_json::to_string(&ck).unwrap();
        let back: GanCheckpoint = serde_json::from_str(&json).unwrap();
        let m2 = back.to_model();
        assert_eq!(m2.theta, m.theta);
        assert_eq!(m2.v, m.v);
        assert_eq!(m2.scaler, m.scaler);
        let z = vec![0.1, -0.2, 0.3, 0.4];
        assert_eq!(m.generate(&z).unwrap(), m2.generate(&z).unwrap());
    }

    #[test]
    fn standardized_training_round_trips_through_scaler() {
        let mut rng = named_stream(18, "test", 0);
        // Data with wildly different scales per dimension.
        let data: Vec<Vec<f64>> = (0..64)
            .map(|_| {
                vec![
                    100.0 + rng.sample::<f64, _>(StandardNormal),
                    0.001 * rng.sample::<f64, _>(StandardNormal),
                ]
            })
            .collect();
        let cfg = GanTrainConfig {
            latent_dim: 2,
            g_hidden: vec![8],
            d_hidden: vec![8],
            batch_size: 8,
            iterations: 3,
            standardize: true,
            ..GanTrainConfig::default()
        };
        let (model, _) = train_warmup2(&data, &cfg, 1).unwrap();
        assert!(model.scaler.is_some());
        // Generated samples live in raw space (near the data's scale).
        let z = vec![0.2, -0.4];
        let s = model.generate(&z).unwrap();
        assert!(s[0].abs() > 1.0, "raw-space first coordinate, got {}", s[0]);
        // discriminate accepts raw space without blowing up.
        let _ = model.discriminate(&data[0]).unwrap();
    }
}
