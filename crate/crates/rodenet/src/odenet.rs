//! One ODE-Net: unrolled forward-Euler prediction blocks over symbolic
//! networks, the weighted multi-step data loss, the Huber sparsity penalty,
//! and curriculum training.
//!
//! A prediction block advances the state by `x + dt * F(x)` where each
//! component of `F` is one symbolic network component. Training minimizes a
//! weighted sum of squared multi-step prediction errors (normalized by
//! `dt^2`) plus a Huber penalty on the parameters, gradually increasing the
//! unroll length from 1 to `s_max`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffengine::{AdamState, Graph, NodeId};
use crate::symnet::{symnet_forward, ComponentNodes, SymNetShape};

/// State magnitude above which a rollout is reported as blown up.
pub const BLOWUP_LIMIT: f64 = 1e6;

#[derive(Debug, Error)]
pub enum OdeNetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("rollout blew up at step {step} (|component| > {BLOWUP_LIMIT:e})")]
    BlowUp { step: usize },
    #[error("segment has {got} samples, need at least {needed}")]
    SegmentTooShort { needed: usize, got: usize },
    #[error("training diverged at unroll {s_tilde}, step {step}: loss = {loss}")]
    Diverged { s_tilde: usize, step: usize, loss: f64 },
}

/// A trained or in-training ODE model: full symbolic-network parameters for
/// all state components plus the block time step.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OdeNet {
    pub shape: SymNetShape,
    pub xi: Vec<f64>,
    pub dt: f64,
}

impl OdeNet {
    pub fn new(shape: SymNetShape, dt: f64) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        Self {
            shape,
            xi: vec![0.0; shape.param_count()],
            dt,
        }
    }

    pub fn with_params(shape: SymNetShape, dt: f64, xi: Vec<f64>) -> Self {
        assert!(dt > 0.0, "dt must be positive");
        assert_eq!(xi.len(), shape.param_count(), "parameter vector length");
        Self { shape, xi, dt }
    }

    fn component(&self, l: usize) -> &[f64] {
        let per = self.shape.component_param_count();
        &self.xi[l * per..(l + 1) * per]
    }

    /// One prediction block: `x + dt * F(x)` componentwise.
    pub fn delta_t_block(&self, x: &[f64]) -> Result<Vec<f64>, OdeNetError> {
        if x.len() != self.shape.d {
            return Err(OdeNetError::Shape(format!(
                "state has dimension {}, net expects {}",
                x.len(),
                self.shape.d
            )));
        }
        let mut out = Vec::with_capacity(self.shape.d);
        for l in 0..self.shape.d {
            let f = symnet_forward(&self.shape, self.component(l), x)
                .map_err(|e| OdeNetError::Shape(e.to_string()))?;
            out.push(x[l] + self.dt * f);
        }
        Ok(out)
    }

    /// Iterate prediction blocks; the result has `steps + 1` states starting
    /// at `x0`. Fails with the offending step index once any component leaves
    /// `[-BLOWUP_LIMIT, BLOWUP_LIMIT]` or turns non-finite.
    pub fn rollout(&self, x0: &[f64], steps: usize) -> Result<Vec<Vec<f64>>, OdeNetError> {
        let mut traj = Vec::with_capacity(steps + 1);
        traj.push(x0.to_vec());
        let mut x = x0.to_vec();
        for step in 0..steps {
            x = self.delta_t_block(&x)?;
            if x.iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_LIMIT) {
                return Err(OdeNetError::BlowUp { step });
            }
            traj.push(x.clone());
        }
        Ok(traj)
    }

    /// Weighted multi-step data loss against an observed segment:
    /// rollout from `segment[0]` and accumulate `w_k |x_hat(t_k) - x(t_k)|^2 / dt^2`.
    pub fn data_loss(&self, segment: &[Vec<f64>], s_tilde: usize) -> Result<f64, OdeNetError> {
        if segment.len() < s_tilde + 1 {
            return Err(OdeNetError::SegmentTooShort {
                needed: s_tilde + 1,
                got: segment.len(),
            });
        }
        let weights = step_weights(s_tilde);
        let traj = self.rollout(&segment[0], s_tilde)?;
        let inv_dt2 = 1.0 / (self.dt * self.dt);
        let mut loss = 0.0;
        for k in 1..=s_tilde {
            let mut sq = 0.0;
            for (p, o) in traj[k].iter().zip(&segment[k]) {
                let d = p - o;
                sq += d * d;
            }
            loss += weights[k - 1] * sq * inv_dt2;
        }
        Ok(loss)
    }
}

/// Exponential step weights `w_k = e^k / sum_{s=1..s_tilde} e^s`, strictly
/// increasing and summing to one.
pub fn step_weights(s_tilde: usize) -> Vec<f64> {
    assert!(s_tilde >= 1, "step_weights: need at least one step");
    let exps: Vec<f64> = (1..=s_tilde).map(|k| (k as f64).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Huber sparsity penalty over a parameter vector: `|p| - s/2` outside the
/// knee `s`, `p^2 / (2 s)` inside.
pub fn huber_loss(xi: &[f64], s: f64) -> f64 {
    assert!(s > 0.0, "huber knee must be positive");
    xi.iter()
        .map(|&p| {
            if p.abs() > s {
                p.abs() - s / 2.0
            } else {
                p * p / (2.0 * s)
            }
        })
        .sum()
}

/// Training hyperparameters for one ODE-Net.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: usize,
    pub s_max: usize,
    /// Adam steps per curriculum stage.
    pub epochs_per_stage: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda_huber: f64,
    pub huber_s: f64,
    /// Std of the Gaussian parameter initialization.
    pub init_std: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 2,
            s_max: 6,
            epochs_per_stage: 500,
            batch_size: 32,
            learning_rate: 0.01,
            lambda_huber: 1e-3,
            huber_s: 1e-3,
            init_std: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OdeNetError> {
        if self.lambda_huber < 0.0 || self.huber_s <= 0.0 || self.s_max < 1 {
            return Err(OdeNetError::Shape(
                "need lambda_huber >= 0, huber_s > 0, s_max >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// A sealed, reusable loss graph for one unroll length: multi-step data loss
/// averaged over a window batch plus the Huber penalty, with the gradient
/// with respect to the parameters emitted as nodes.
///
/// Built once per curriculum stage; each optimization step only overwrites
/// the parameter and window leaves and re-evaluates.
pub struct UnrolledLoss {
    graph: Graph,
    shape: SymNetShape,
    s_tilde: usize,
    xi_node: NodeId,
    window_nodes: Vec<NodeId>,
    base_objective: NodeId,
    objective: Option<NodeId>,
    grad_node: Option<NodeId>,
}

impl UnrolledLoss {
    pub fn new(
        shape: SymNetShape,
        dt: f64,
        s_tilde: usize,
        batch: usize,
        lambda_huber: f64,
        huber_s: f64,
    ) -> Self {
        assert!(s_tilde >= 1 && batch >= 1);
        let d = shape.d;
        let mut g = Graph::new();
        let xi_node = g.leaf(vec![0.0; shape.param_count()]);
        let comps: Vec<ComponentNodes> = (0..d)
            .map(|l| ComponentNodes::from_full(&mut g, shape, xi_node, l))
            .collect();

        let weights = step_weights(s_tilde);
        let inv_dt2 = 1.0 / (dt * dt);
        let mut window_nodes = Vec::with_capacity(batch);
        let mut data_sum: Option<NodeId> = None;
        for _ in 0..batch {
            let window = g.leaf(vec![0.0; (s_tilde + 1) * d]);
            window_nodes.push(window);
            let mut state = g.slice(window, 0, d);
            let mut window_loss: Option<NodeId> = None;
            for k in 1..=s_tilde {
                state = delta_block_nodes(&mut g, &comps, state, dt);
                let observed = g.slice(window, k * d, d);
                let diff = g.sub(state, observed);
                let sq = g.dot(diff, diff);
                let term = g.scale(weights[k - 1] * inv_dt2, sq);
                window_loss = Some(match window_loss {
                    None => term,
                    Some(acc) => g.add(acc, term),
                });
            }
            let wl = window_loss.expect("s_tilde >= 1");
            data_sum = Some(match data_sum {
                None => wl,
                Some(acc) => g.add(acc, wl),
            });
        }
        let data_mean = {
            let s = data_sum.expect("batch >= 1");
            g.scale(1.0 / batch as f64, s)
        };
        let base_objective = if lambda_huber > 0.0 {
            let h = g.huber(xi_node, huber_s);
            let hs = g.sum(h);
            let penalty = g.scale(lambda_huber, hs);
            g.add(data_mean, penalty)
        } else {
            data_mean
        };

        Self {
            graph: g,
            shape,
            s_tilde,
            xi_node,
            window_nodes,
            base_objective,
            objective: None,
            grad_node: None,
        }
    }

    pub fn shape(&self) -> SymNetShape {
        self.shape
    }

    pub fn s_tilde(&self) -> usize {
        self.s_tilde
    }

    pub fn batch(&self) -> usize {
        self.window_nodes.len()
    }

    pub fn xi_node(&self) -> NodeId {
        self.xi_node
    }

    /// Data-plus-Huber term; callers may extend it with extra nodes before
    /// sealing (a critic score, say).
    pub fn base_objective(&self) -> NodeId {
        self.base_objective
    }

    pub fn graph_mut(&mut self) -> &mut Graph {
        &mut self.graph
    }

    /// Freeze the objective and emit its parameter gradient.
    pub fn seal(&mut self, objective: NodeId) {
        assert!(self.objective.is_none(), "loss graph already sealed");
        let grad = self
            .graph
            .grad_as_graph(objective, &[self.xi_node])
            .expect("objective must be scalar")[0];
        self.objective = Some(objective);
        self.grad_node = Some(grad);
    }

    /// Seal with the plain data + Huber objective.
    pub fn seal_base(&mut self) {
        let base = self.base_objective;
        self.seal(base);
    }

    pub fn set_xi(&mut self, xi: &[f64]) {
        self.graph
            .set_leaf(self.xi_node, xi)
            .expect("parameter leaf length");
    }

    /// Copy one flattened window (time-major, `(s_tilde + 1) * d` values).
    pub fn set_window(&mut self, j: usize, flat: &[f64]) {
        self.graph
            .set_leaf(self.window_nodes[j], flat)
            .expect("window leaf length");
    }

    /// Re-evaluate and return the objective value and parameter gradient.
    pub fn evaluate(&mut self) -> (f64, &[f64]) {
        let obj = self.objective.expect("seal the loss graph first");
        let grad = self.grad_node.expect("seal the loss graph first");
        self.graph.recompute();
        (self.graph.scalar_value(obj), self.graph.value(grad))
    }
}

/// Append one prediction block to a graph: `x + dt * F(x)`.
pub fn delta_block_nodes(
    g: &mut Graph,
    comps: &[ComponentNodes],
    state: NodeId,
    dt: f64,
) -> NodeId {
    let f_parts: Vec<NodeId> = comps.iter().map(|c| c.forward(g, state)).collect();
    let f = g.concat(&f_parts);
    let scaled = g.scale(dt, f);
    g.add(state, scaled)
}

/// Draw one window batch: uniform over (trajectory, start) pairs.
/// Trajectories are flattened time-major, all with the same sample count.
fn sample_windows(
    flat_trajs: &[Vec<f64>],
    d: usize,
    s_tilde: usize,
    batch: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let samples = flat_trajs[0].len() / d;
    let max_start = samples - 1 - s_tilde;
    (0..batch)
        .map(|_| {
            let t = rng.random_range(0..flat_trajs.len());
            let s = rng.random_range(0..=max_start);
            (t, s)
        })
        .collect()
}

/// Run `steps` optimization steps on a sealed loss graph, sampling a fresh
/// window batch each step. Returns per-step losses.
pub fn run_training_steps(
    loss: &mut UnrolledLoss,
    flat_trajs: &[Vec<f64>],
    xi: &mut [f64],
    adam: &mut AdamState,
    steps: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>, OdeNetError> {
    let d = loss.shape().d;
    let s_tilde = loss.s_tilde();
    let batch = loss.batch();
    let samples = flat_trajs[0].len() / d;
    if samples < s_tilde + 1 {
        return Err(OdeNetError::SegmentTooShort {
            needed: s_tilde + 1,
            got: samples,
        });
    }
    let mut history = Vec::with_capacity(steps);
    let mut grad_buf = vec![0.0; xi.len()];
    for step in 0..steps {
        let picks = sample_windows(flat_trajs, d, s_tilde, batch, rng);
        for (j, (t, s)) in picks.into_iter().enumerate() {
            let flat = &flat_trajs[t][s * d..(s + s_tilde + 1) * d];
            loss.set_window(j, flat);
        }
        loss.set_xi(xi);
        let (value, grad) = loss.evaluate();
        if !value.is_finite() {
            return Err(OdeNetError::Diverged {
                s_tilde,
                step,
                loss: value,
            });
        }
        grad_buf.copy_from_slice(grad);
        adam.step(xi, &grad_buf).expect("dimensions fixed");
        history.push(value);
    }
    Ok(history)
}

/// Result of fitting one instance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainResult {
    pub xi: Vec<f64>,
    pub loss_history: Vec<f64>,
}

/// Fit one ODE-Net to one instance's trajectories (flattened time-major):
/// Gaussian init, then for each unroll length 1..=s_max run
/// `epochs_per_stage` Adam steps on freshly sampled window batches.
pub fn train_warmup1(
    flat_trajs: &[Vec<f64>],
    d: usize,
    dt: f64,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainResult, OdeNetError> {
    cfg.validate()?;
    assert!(!flat_trajs.is_empty(), "need at least one trajectory");
    let shape = SymNetShape::new(d, cfg.alpha);
    let mut xi: Vec<f64> = (0..shape.param_count())
        .map(|_| cfg.init_std * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut adam = AdamState::new(cfg.learning_rate, xi.len());
    let mut loss_history = Vec::new();
    for s_tilde in 1..=cfg.s_max {
        let mut loss = UnrolledLoss::new(
            shape,
            dt,
            s_tilde,
            cfg.batch_size,
            cfg.lambda_huber,
            cfg.huber_s,
        );
        loss.seal_base();
        let stage = run_training_steps(
            &mut loss,
            flat_trajs,
            &mut xi,
            &mut adam,
            cfg.epochs_per_stage,
            rng,
        )?;
        loss_history.extend(stage);
    }
    Ok(TrainResult { xi, loss_history })
}

/// On-disk form of one trained ODE-Net.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OdeNetCheckpoint {
    pub d: usize,
    pub alpha: usize,
    pub dt: f64,
    pub xi: Vec<f64>,
    pub loss_history: Vec<f64>,
    #[serde(default)]
    pub config_hash: Option<String>,
    #[serde(default)]
    pub seed: Option<u64>,
}

impl OdeNetCheckpoint {
    pub fn to_net(&self) -> OdeNet {
        OdeNet::with_params(SymNetShape::new(self.d, self.alpha), self.dt, self.xi.clone())
    }
}

/// Flatten a trajectory of fixed-dimension states, time-major.
pub fn flatten_trajectory(traj: &[[f64; 3]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len() * 3);
    for x in traj {
        out.extend_from_slice(x);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::PolynomialExpr;
    use crate::rng::named_stream;
    use crate::simulator::{integrate, lorenz_polynomials};
    use crate::symnet::{encode_polynomial, extract_system};
    use crate::testutil::rel_err;

    fn shape32() -> SymNetShape {
        SymNetShape::new(3, 2)
    }

    fn quadratic_net(eta: [f64; 3], dt: f64) -> OdeNet {
        let shape = shape32();
        let mut xi = Vec::new();
        for p in lorenz_polynomials(eta) {
            xi.extend(encode_polynomial(&p, &shape).unwrap());
        }
        OdeNet::with_params(shape, dt, xi)
    }

    #[test]
    fn zero_net_block_is_identity() {
        let net = OdeNet::new(shape32(), 0.05);
        let x = vec![1.0, -2.0, 3.0];
        assert_eq!(net.delta_t_block(&x).unwrap(), x);
        let twice = net.delta_t_block(&net.delta_t_block(&x).unwrap()).unwrap();
        assert_eq!(twice, x);
    }

    #[test]
    fn block_matches_hand_computed_step() {
        let net = quadratic_net([2.0, -1.0, 1.0], 0.05);
        let y = net.delta_t_block(&[1.0, 1.0, 1.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15);
        assert!((y[1] - 0.85).abs() < 1e-15);
        assert!((y[2] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn block_rejects_wrong_dimension() {
        let net = OdeNet::new(shape32(), 0.05);
        assert!(net.delta_t_block(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn rollout_zero_steps_and_constant_dynamics() {
        let net = OdeNet::new(shape32(), 0.05);
        let x0 = vec![0.3, -0.7, 1.1];
        assert_eq!(net.rollout(&x0, 0).unwrap(), vec![x0.clone()]);
        let traj = net.rollout(&x0, 6).unwrap();
        assert_eq!(traj.len(), 7);
        for s in &traj {
            assert_eq!(s, &x0);
        }
    }

    #[test]
    fn rollout_equals_repeated_blocks() {
        let net = quadratic_net([2.0, -1.0, 1.0], 0.05);
        let x0 = vec![1.0, 2.0, -1.5];
        let traj = net.rollout(&x0, 6).unwrap();
        let mut x = x0.clone();
        for state in traj.iter().skip(1) {
            x = net.delta_t_block(&x).unwrap();
            assert_eq!(state, &x);
        }
    }

    #[test]
    fn rollout_is_compositional() {
        let net = quadratic_net([2.0, -1.0, 1.0], 0.05);
        let x0 = vec![0.5, -1.0, 2.0];
        let whole = net.rollout(&x0, 9).unwrap();
        let first = net.rollout(&x0, 4).unwrap();
        let rest = net.rollout(first.last().unwrap(), 5).unwrap();
        let stitched: Vec<Vec<f64>> = first
            .iter()
            .cloned()
            .chain(rest.into_iter().skip(1))
            .collect();
        assert_eq!(whole, stitched);
    }

    #[test]
    fn rollout_blowup_reports_step() {
        // dx1/dt = x1^2 from a large start explodes quickly.
        let shape = shape32();
        let mut p = PolynomialExpr::zero(3);
        p.add_term(crate::poly::Monomial(vec![2, 0, 0]), 1.0);
        let mut xi = encode_polynomial(&p, &shape).unwrap();
        xi.extend(vec![0.0; 2 * shape.component_param_count()]);
        let net = OdeNet::with_params(shape, 1.0, xi);
        match net.rollout(&[100.0, 0.0, 0.0], 50) {
            Err(OdeNetError::BlowUp { step }) => assert!(step < 10),
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn step_weights_reference_values() {
        assert_eq!(step_weights(1), vec![1.0]);
        let w2 = step_weights(2);
        assert!((w2[0] - 0.268_941_421_369_995_1).abs() < 1e-12);
        assert!((w2[1] - 0.731_058_578_630_004_9).abs() < 1e-12);
        let w6 = step_weights(6);
        assert!((w6.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((w6[5] / w6[4] - std::f64::consts::E).abs() < 1e-12);
        for st in 1..=50 {
            let w = step_weights(st);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9, "s_tilde {st}");
            for k in 1..w.len() {
                assert!(w[k] > w[k - 1]);
            }
        }
    }

    #[test]
    fn data_loss_reference_cases() {
        let net = quadratic_net([2.0, -1.0, 1.0], 0.05);
        // A segment generated by the net itself has zero loss.
        let traj = net.rollout(&[1.0, 0.5, -0.5], 3).unwrap();
        assert_eq!(net.data_loss(&traj, 3).unwrap(), 0.0);

        // One step with error norm equal to dt gives exactly 1.
        let x0 = vec![1.0, 0.5, -0.5];
        let mut x1 = net.delta_t_block(&x0).unwrap();
        x1[0] += 0.05;
        let segment = vec![x0.clone(), x1.clone()];
        let loss = net.data_loss(&segment, 1).unwrap();
        assert!((loss - 1.0).abs() < 1e-12, "got {loss}");

        // Doubling all errors quadruples the loss.
        let mut x1d = net.delta_t_block(&x0).unwrap();
        x1d[0] += 0.10;
        let segment_d = vec![x0, x1d];
        let loss_d = net.data_loss(&segment_d, 1).unwrap();
        assert_eq!(loss_d, 4.0 * loss);
    }

    #[test]
    fn data_loss_segment_length_check() {
        let net = OdeNet::new(shape32(), 0.05);
        let seg = vec![vec![0.0; 3]; 3];
        assert!(matches!(
            net.data_loss(&seg, 5),
            Err(OdeNetError::SegmentTooShort { needed: 6, got: 3 })
        ));
    }

    #[test]
    fn huber_reference_values() {
        assert_eq!(huber_loss(&[], 0.001), 0.0);
        assert_eq!(huber_loss(&[0.0, 0.0], 0.001), 0.0);
        assert!((huber_loss(&[0.1], 0.001) - 0.0995).abs() < 1e-15);
        assert!((huber_loss(&[0.0005], 0.001) - 1.25e-4).abs() < 1e-18);
    }

    #[test]
    fn unrolled_objective_decomposes_into_data_plus_huber() {
        let shape = SymNetShape::new(3, 2);
        let dt = 0.05;
        let (lambda_h, s) = (1e-3, 1e-3);
        let mut rng = named_stream(2, "test", 0);
        let clean = integrate([2.0, -1.0, 1.0], [1.0, 2.0, 3.0], 6, dt).unwrap();
        let flat = flatten_trajectory(&clean);

        let mut loss = UnrolledLoss::new(shape, dt, 3, 2, lambda_h, s);
        loss.seal_base();
        let xi: Vec<f64> = (0..shape.param_count())
            .map(|_| 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        loss.set_xi(&xi);
        loss.set_window(0, &flat[..4 * 3]);
        loss.set_window(1, &flat[3..5 * 3]);
        let (value, _) = loss.evaluate();

        let net = OdeNet::with_params(shape, dt, xi.clone());
        let seg0: Vec<Vec<f64>> = clean[0..4].iter().map(|x| x.to_vec()).collect();
        let seg1: Vec<Vec<f64>> = clean[1..5].iter().map(|x| x.to_vec()).collect();
        let data = (net.data_loss(&seg0, 3).unwrap() + net.data_loss(&seg1, 3).unwrap()) / 2.0;
        let expected = data + lambda_h * huber_loss(&xi, s);
        assert!(
            (value - expected).abs() <= 1e-12 * expected.abs().max(1.0),
            "graph {value} vs direct {expected}"
        );
    }

    #[test]
    fn unrolled_gradient_matches_finite_differences() {
        // Tiny instance: d = 2, alpha = 1, s_tilde = 2.
        let shape = SymNetShape::new(2, 1);
        let dt = 0.1;
        let mut rng = named_stream(4, "test", 0);
        let mut loss = UnrolledLoss::new(shape, dt, 2, 2, 1e-3, 1e-3);
        loss.seal_base();

        let xi: Vec<f64> = (0..shape.param_count())
            .map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let windows: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..6).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        loss.set_xi(&xi);
        loss.set_window(0, &windows[0]);
        loss.set_window(1, &windows[1]);
        let (_, grad) = loss.evaluate();
        let analytic = grad.to_vec();

        let eps = 1e-5;
        for i in 0..xi.len() {
            let mut xp = xi.clone();
            xp[i] += eps;
            loss.set_xi(&xp);
            let (fp, _) = loss.evaluate();
            let mut xm = xi.clone();
            xm[i] -= eps;
            loss.set_xi(&xm);
            let (fm, _) = loss.evaluate();
            let numeric = (fp - fm) / (2.0 * eps);
            assert!(
                rel_err(analytic[i], numeric) < 1e-4,
                "coordinate {i}: analytic {} vs numeric {}",
                analytic[i],
                numeric
            );
        }
    }

    #[test]
    fn warmup1_learns_zero_dynamics_from_constant_data() {
        let cfg = TrainConfig {
            s_max: 3,
            epochs_per_stage: 150,
            batch_size: 8,
            ..TrainConfig::default()
        };
        // Constant trajectories are exactly the orbits of F = 0.
        let flat_trajs: Vec<Vec<f64>> = vec![
            flatten_trajectory(&vec![[1.0, -2.0, 0.5]; 21]),
            flatten_trajectory(&vec![[-3.0, 0.25, 2.0]; 21]),
            flatten_trajectory(&vec![[2.0, 1.5, -1.0]; 21]),
            flatten_trajectory(&vec![[-0.5, 3.0, 1.0]; 21]),
            flatten_trajectory(&vec![[0.8, -1.2, -2.5]; 21]),
        ];
        let mut rng = named_stream(0, "test-warmup1", 0);
        let result = train_warmup1(&flat_trajs, 3, 0.05, &cfg, &mut rng).unwrap();
        let polys = extract_system(&SymNetShape::new(3, cfg.alpha), &result.xi).unwrap();
        for p in polys {
            for (m, c) in p.terms() {
                assert!(
                    c.abs() < 0.05,
                    "coefficient {c} on {m} should be near zero"
                );
            }
        }
    }

    #[test]
    fn warmup1_is_deterministic_under_seed() {
        let cfg = TrainConfig {
            s_max: 2,
            epochs_per_stage: 30,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let clean = integrate([2.0, -1.0, 1.0], [2.0, 1.0, -1.0], 20, 0.05).unwrap();
        let flat = vec![flatten_trajectory(&clean)];
        let run = || {
            let mut rng = named_stream(9, "test-warmup1", 1);
            train_warmup1(&flat, 3, 0.05, &cfg, &mut rng).unwrap()
        };
        let (a, b) = (run(), run());
        assert_eq!(a.xi, b.xi);
        assert_eq!(a.loss_history, b.loss_history);
    }
}
