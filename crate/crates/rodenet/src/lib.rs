//! Identification of random ordinary differential equations from noisy
//! trajectory data.
//!
//! The crate fits one symbolic ODE-Net per observed system instance, reads
//! the fitted parameter vectors as samples of the underlying parameter
//! distribution, estimates that distribution with a WGAN-GP, and finally uses
//! the trained critic as a data-driven regularizer while refining all
//! ODE-Nets in an alternating loop.
//!
//! Modules:
//! - [`diffengine`]: reverse-mode autodiff with gradient-of-gradient support
//!   and the Adam optimizer.
//! - [`poly`]: sparse multivariate polynomials keyed by exponent multi-index.
//! - [`symnet`]: symbolic network whose expansion is an explicit polynomial.
//! - [`odenet`]: unrolled forward-Euler prediction blocks and their training.
//! - [`simulator`]: ground-truth data generation for quadratic random ODEs.
//! - [`gan`]: WGAN-GP over flattened ODE-Net parameter vectors.
//! - [`pipeline`]: the three-stage training orchestration.
//! - [`evaluator`]: prediction/expression error metrics and report tables.

pub mod diffengine;
pub mod evaluator;
pub mod gan;
pub mod odenet;
pub mod pipeline;
pub mod poly;
pub mod rng;
pub mod simulator;
pub mod symnet;

#[cfg(test)]
pub(crate) mod testutil {
    use crate::diffengine::{Graph, NodeId};

    /// Central finite differences of a graph output with respect to one leaf.
    /// Evaluates the forward pass only, so it is independent of the backward
    /// implementation it checks.
    pub fn finite_diff_graph(g: &mut Graph, leaf: NodeId, output: NodeId, eps: f64) -> Vec<f64> {
        let base = g.value(leaf).to_vec();
        let mut grad = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut xp = base.clone();
            xp[i] += eps;
            g.set_leaf(leaf, &xp).unwrap();
            g.recompute();
            let fp = g.scalar_value(output);
            let mut xm = base.clone();
            xm[i] -= eps;
            g.set_leaf(leaf, &xm).unwrap();
            g.recompute();
            let fm = g.scalar_value(output);
            grad[i] = (fp - fm) / (2.0 * eps);
        }
        g.set_leaf(leaf, &base).unwrap();
        g.recompute();
        grad
    }

    /// Relative error with a floor of 1 in the denominator so values near
    /// zero compare absolutely.
    pub fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }
}
