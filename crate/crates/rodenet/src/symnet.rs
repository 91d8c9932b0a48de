//! Symbolic network: a stack of product units whose exact expansion is a
//! multivariate polynomial.
//!
//! A network with input dimension `d` and `alpha` hidden layers starts from
//! the feature vector `f0 = x`. Hidden layer `i` forms two affine
//! combinations `u` and `v` of the current features and appends their product,
//! growing the feature vector by one. The output is one affine readout of the
//! final `d + alpha` features. Every output is therefore a polynomial of total
//! degree at most `2^alpha`, recoverable in closed form by
//! [`extract_polynomial`].
//!
//! Parameter layout (one output component): for each hidden layer in order,
//! `(weights-u, bias-u, weights-v, bias-v)` over the current feature length,
//! then `(weights, bias)` of the readout. A full network for a
//! `d`-dimensional system concatenates `d` such components.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffengine::{Graph, NodeId};
use crate::poly::{Monomial, PolynomialExpr};

#[derive(Debug, Error)]
pub enum SymNetError {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("polynomial not representable: {0}")]
    UnsupportedPolynomial(String),
}

/// Input dimension and hidden layer count of one symbolic network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymNetShape {
    pub d: usize,
    pub alpha: usize,
}

impl SymNetShape {
    pub fn new(d: usize, alpha: usize) -> Self {
        assert!(d >= 1 && alpha >= 1, "dimensions must be positive");
        Self { d, alpha }
    }

    /// Trainable parameters of a single output component:
    /// `alpha^2 + 2 d alpha + d + 2 alpha + 1`.
    pub fn component_param_count(&self) -> usize {
        let (d, a) = (self.d, self.alpha);
        a * a + 2 * d * a + d + 2 * a + 1
    }

    /// Trainable parameters of the full `d`-component network.
    pub fn param_count(&self) -> usize {
        self.d * self.component_param_count()
    }
}

/// Total parameter count `d (alpha^2 + 2 d alpha + d + 2 alpha + 1)`.
pub fn param_count(d: usize, alpha: usize) -> usize {
    SymNetShape::new(d, alpha).param_count()
}

fn check_component_len(shape: &SymNetShape, xi: &[f64]) -> Result<(), SymNetError> {
    if xi.len() != shape.component_param_count() {
        return Err(SymNetError::Shape(format!(
            "component parameter vector has length {}, expected {} for d={}, alpha={}",
            xi.len(),
            shape.component_param_count(),
            shape.d,
            shape.alpha
        )));
    }
    Ok(())
}

/// Evaluate one component on a state vector.
pub fn symnet_forward(shape: &SymNetShape, xi: &[f64], x: &[f64]) -> Result<f64, SymNetError> {
    check_component_len(shape, xi)?;
    if x.len() != shape.d {
        return Err(SymNetError::Shape(format!(
            "input has dimension {}, expected {}",
            x.len(),
            shape.d
        )));
    }
    let mut feats: Vec<f64> = Vec::with_capacity(shape.d + shape.alpha);
    feats.extend_from_slice(x);
    let mut off = 0;
    for layer in 0..shape.alpha {
        let flen = shape.d + layer;
        let mut u = 0.0;
        for k in 0..flen {
            u += xi[off + k] * feats[k];
        }
        let mut v = 0.0;
        for k in 0..flen {
            v += xi[off + flen + 1 + k] * feats[k];
        }
        let u = u + xi[off + flen];
        let v = v + xi[off + 2 * flen + 1];
        feats.push(u * v);
        off += 2 * flen + 2;
    }
    let flen = shape.d + shape.alpha;
    let mut out = 0.0;
    for k in 0..flen {
        out += xi[off + k] * feats[k];
    }
    Ok(out + xi[off + flen])
}

/// Graph nodes of one component's parameters, pre-sliced so repeated forward
/// passes share them.
#[derive(Clone, Debug)]
pub struct ComponentNodes {
    shape: SymNetShape,
    layers: Vec<(NodeId, NodeId, NodeId, NodeId)>,
    out_w: NodeId,
    out_b: NodeId,
}

impl ComponentNodes {
    /// Slice component `l` out of a full-network parameter node.
    pub fn from_full(g: &mut Graph, shape: SymNetShape, xi_all: NodeId, l: usize) -> Self {
        assert!(l < shape.d, "component index out of range");
        assert_eq!(g.len(xi_all), shape.param_count(), "parameter node length");
        let base = l * shape.component_param_count();
        Self::slice_at(g, shape, xi_all, base)
    }

    /// Slice a per-component parameter node.
    pub fn from_component(g: &mut Graph, shape: SymNetShape, xi_comp: NodeId) -> Self {
        assert_eq!(
            g.len(xi_comp),
            shape.component_param_count(),
            "parameter node length"
        );
        Self::slice_at(g, shape, xi_comp, 0)
    }

    fn slice_at(g: &mut Graph, shape: SymNetShape, src: NodeId, base: usize) -> Self {
        let mut off = base;
        let mut layers = Vec::with_capacity(shape.alpha);
        for layer in 0..shape.alpha {
            let flen = shape.d + layer;
            let wu = g.slice(src, off, flen);
            let bu = g.slice(src, off + flen, 1);
            let wv = g.slice(src, off + flen + 1, flen);
            let bv = g.slice(src, off + 2 * flen + 1, 1);
            layers.push((wu, bu, wv, bv));
            off += 2 * flen + 2;
        }
        let flen = shape.d + shape.alpha;
        let out_w = g.slice(src, off, flen);
        let out_b = g.slice(src, off + flen, 1);
        Self {
            shape,
            layers,
            out_w,
            out_b,
        }
    }

    /// Forward pass on a state node; returns a scalar node differentiable
    /// with respect to both the parameters and the state.
    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        assert_eq!(g.len(x), self.shape.d, "state node length");
        let mut feats = x;
        for &(wu, bu, wv, bv) in &self.layers {
            let du = g.dot(wu, feats);
            let u = g.add(du, bu);
            let dv = g.dot(wv, feats);
            let v = g.add(dv, bv);
            let uv = g.mul(u, v);
            feats = g.concat(&[feats, uv]);
        }
        let dw = g.dot(self.out_w, feats);
        g.add(dw, self.out_b)
    }
}

/// Build a graph forward pass for one component parameter node.
pub fn symnet_forward_graph(
    g: &mut Graph,
    shape: SymNetShape,
    xi_comp: NodeId,
    x: NodeId,
) -> NodeId {
    let nodes = ComponentNodes::from_component(g, shape, xi_comp);
    nodes.forward(g, x)
}

/// Exact symbolic expansion of one component into a polynomial: the symbolic
/// computation mapping fitted parameters to an explicit equation.
pub fn extract_polynomial(shape: &SymNetShape, xi: &[f64]) -> Result<PolynomialExpr, SymNetError> {
    check_component_len(shape, xi)?;
    let d = shape.d;
    let mut feats: Vec<PolynomialExpr> = (0..d).map(|i| PolynomialExpr::variable(d, i)).collect();
    let mut off = 0;
    for layer in 0..shape.alpha {
        let flen = d + layer;
        let mut u = PolynomialExpr::constant(d, xi[off + flen]);
        let mut v = PolynomialExpr::constant(d, xi[off + 2 * flen + 1]);
        for k in 0..flen {
            u = u.add(&feats[k].scale(xi[off + k]));
            v = v.add(&feats[k].scale(xi[off + flen + 1 + k]));
        }
        feats.push(u.mul(&v));
        off += 2 * flen + 2;
    }
    let flen = d + shape.alpha;
    let mut out = PolynomialExpr::constant(d, xi[off + flen]);
    for k in 0..flen {
        out = out.add(&feats[k].scale(xi[off + k]));
    }
    Ok(out)
}

/// Expand every component of a full-network parameter vector.
pub fn extract_system(
    shape: &SymNetShape,
    xi_all: &[f64],
) -> Result<Vec<PolynomialExpr>, SymNetError> {
    let per = shape.component_param_count();
    if xi_all.len() != shape.param_count() {
        return Err(SymNetError::Shape(format!(
            "network parameter vector has length {}, expected {}",
            xi_all.len(),
            shape.param_count()
        )));
    }
    (0..shape.d)
        .map(|l| extract_polynomial(shape, &xi_all[l * per..(l + 1) * per]))
        .collect()
}

/// Encode a polynomial as component parameters so that
/// [`extract_polynomial`] returns it exactly.
///
/// Supported inputs are degree <= 2 polynomials whose quadratic part factors
/// into at most `alpha` products `x_pivot * (linear form)`; one pivot
/// elimination per hidden layer. Anything else is reported unsupported.
pub fn encode_polynomial(
    p: &PolynomialExpr,
    shape: &SymNetShape,
) -> Result<Vec<f64>, SymNetError> {
    let d = shape.d;
    if p.num_vars() != d {
        return Err(SymNetError::Shape(format!(
            "polynomial has {} variables, network expects {}",
            p.num_vars(),
            d
        )));
    }
    if p.total_degree() > 2 {
        return Err(SymNetError::UnsupportedPolynomial(format!(
            "encoder handles total degree <= 2, got {}",
            p.total_degree()
        )));
    }

    let constant = p.coefficient(&Monomial::one(d));
    let linear: Vec<f64> = (0..d).map(|i| p.coefficient(&Monomial::var(d, i))).collect();

    // Remaining quadratic coefficients q[i][j] for i <= j.
    let mut quad = vec![vec![0.0; d]; d];
    for (m, c) in p.terms() {
        if m.total_degree() != 2 {
            continue;
        }
        let idx: Vec<usize> = m
            .0
            .iter()
            .enumerate()
            .flat_map(|(i, &e)| std::iter::repeat_n(i, e as usize))
            .collect();
        quad[idx[0]][idx[1]] = c;
    }

    // Pivot elimination: one product x_i * (sum_j q[i][j] x_j) clears every
    // quadratic term containing x_i.
    let mut products: Vec<(usize, Vec<f64>)> = Vec::new();
    for i in 0..d {
        if quad[i].iter().all(|&c| c == 0.0) {
            continue;
        }
        products.push((i, quad[i].clone()));
        for c in quad[i].iter_mut() {
            *c = 0.0;
        }
    }
    if products.len() > shape.alpha {
        return Err(SymNetError::UnsupportedPolynomial(format!(
            "quadratic part needs {} product layers, network has {}",
            products.len(),
            shape.alpha
        )));
    }

    let mut xi = vec![0.0; shape.component_param_count()];
    let mut off = 0;
    for layer in 0..shape.alpha {
        let flen = d + layer;
        if let Some((pivot, v_coeffs)) = products.get(layer) {
            xi[off + *pivot] = 1.0;
            for (j, &c) in v_coeffs.iter().enumerate() {
                xi[off + flen + 1 + j] = c;
            }
        }
        off += 2 * flen + 2;
    }
    xi[off..off + d].copy_from_slice(&linear);
    for k in 0..products.len() {
        xi[off + d + k] = 1.0;
    }
    xi[off + d + shape.alpha] = constant;
    Ok(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{finite_diff_graph, rel_err};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn shape32() -> SymNetShape {
        SymNetShape::new(3, 2)
    }

    /// x1 x2 - x3 in three variables.
    fn product_minus_x3() -> PolynomialExpr {
        let x1 = PolynomialExpr::variable(3, 0);
        let x2 = PolynomialExpr::variable(3, 1);
        let x3 = PolynomialExpr::variable(3, 2);
        x1.mul(&x2).sub(&x3)
    }

    #[test]
    fn param_count_matches_reference_dimensions() {
        assert_eq!(param_count(3, 2), 72);
        assert_eq!(param_count(1, 1), 7);
        assert_eq!(shape32().component_param_count(), 24);
        assert_eq!(3 * 24, param_count(3, 2));
    }

    #[test]
    fn param_count_matches_constructed_layout() {
        for d in 1..=5 {
            for alpha in 1..=3 {
                let shape = SymNetShape::new(d, alpha);
                let mut off = 0;
                for layer in 0..alpha {
                    off += 2 * (d + layer) + 2;
                }
                off += d + alpha + 1;
                assert_eq!(off, shape.component_param_count(), "d={d} alpha={alpha}");
            }
        }
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let shape = shape32();
        let xi = vec![0.0; shape.component_param_count()];
        let y = symnet_forward(&shape, &xi, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(y, 0.0);
        let p = extract_polynomial(&shape, &xi).unwrap();
        assert!(p.is_zero());
    }

    #[test]
    fn hand_encoded_product_evaluates() {
        let shape = shape32();
        let xi = encode_polynomial(&product_minus_x3(), &shape).unwrap();
        let y = symnet_forward(&shape, &xi, &[2.0, 3.0, 5.0]).unwrap();
        assert_eq!(y, 1.0);
    }

    #[test]
    fn wrong_lengths_are_rejected() {
        let shape = shape32();
        assert!(symnet_forward(&shape, &[0.0; 10], &[0.0; 3]).is_err());
        let xi = vec![0.0; 24];
        assert!(symnet_forward(&shape, &xi, &[0.0; 2]).is_err());
    }

    #[test]
    fn extraction_of_linear_combination() {
        // a (x2 - x1) with a = 2.
        let shape = shape32();
        let x1 = PolynomialExpr::variable(3, 0);
        let x2 = PolynomialExpr::variable(3, 1);
        let p = x2.sub(&x1).scale(2.0);
        let xi = encode_polynomial(&p, &shape).unwrap();
        let q = extract_polynomial(&shape, &xi).unwrap();
        assert_eq!(q.coefficient(&Monomial(vec![0, 1, 0])), 2.0);
        assert_eq!(q.coefficient(&Monomial(vec![1, 0, 0])), -2.0);
        assert_eq!(q.num_terms(), 2);
    }

    #[test]
    fn random_network_expansion_matches_forward() {
        let shape = shape32();
        let mut rng = StdRng::seed_from_u64(5);
        for _ in 0..5 {
            let xi: Vec<f64> = (0..shape.component_param_count())
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let p = extract_polynomial(&shape, &xi).unwrap();
            assert!(p.total_degree() <= 4);
            for _ in 0..20 {
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                let by_net = symnet_forward(&shape, &xi, &x).unwrap();
                let by_poly = p.eval(&x);
                assert!(
                    (by_net - by_poly).abs() < 1e-9,
                    "net {by_net} vs poly {by_poly}"
                );
            }
        }
    }

    #[test]
    fn encode_zero_polynomial() {
        let shape = shape32();
        let xi = encode_polynomial(&PolynomialExpr::zero(3), &shape).unwrap();
        assert_eq!(xi, vec![0.0; 24]);
    }

    #[test]
    fn encode_round_trips_quadratic_system_components() {
        let shape = shape32();
        let (a, b, c) = (2.0, -1.0, 1.0);
        for p in crate::simulator::lorenz_polynomials([a, b, c]) {
            let xi = encode_polynomial(&p, &shape).unwrap();
            let q = extract_polynomial(&shape, &xi).unwrap();
            assert_eq!(q, p);
        }
        let p = product_minus_x3();
        let xi = encode_polynomial(&p, &shape).unwrap();
        assert_eq!(extract_polynomial(&shape, &xi).unwrap(), p);
    }

    #[test]
    fn unrepresentable_polynomial_is_reported() {
        let shape = shape32();
        // x1^2 + x2^2 + x3^2 needs three pivots but alpha = 2.
        let mut p = PolynomialExpr::zero(3);
        p.add_term(Monomial(vec![2, 0, 0]), 1.0);
        p.add_term(Monomial(vec![0, 2, 0]), 1.0);
        p.add_term(Monomial(vec![0, 0, 2]), 1.0);
        assert!(matches!(
            encode_polynomial(&p, &shape),
            Err(SymNetError::UnsupportedPolynomial(_))
        ));
        // Degree 3 is out of the encoder's class even though the network
        // could represent some such polynomials.
        let x1 = PolynomialExpr::variable(3, 0);
        let cubic = x1.mul(&x1).mul(&x1);
        assert!(encode_polynomial(&cubic, &shape).is_err());
    }

    #[test]
    fn graph_forward_matches_value_forward_and_finite_differences() {
        let shape = shape32();
        let mut rng = StdRng::seed_from_u64(9);
        let xi: Vec<f64> = (0..shape.component_param_count())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let xv: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();

        let mut g = Graph::new();
        let xi_node = g.leaf(xi.clone());
        let x_node = g.leaf(xv.clone());
        let y = symnet_forward_graph(&mut g, shape, xi_node, x_node);
        let direct = symnet_forward(&shape, &xi, &xv).unwrap();
        assert_eq!(g.scalar_value(y), direct);

        let analytic = g.grad(y, &[xi_node]).unwrap().remove(0);
        let numeric = finite_diff_graph(&mut g, xi_node, y, 1e-5);
        for (a, n) in analytic.iter().zip(&numeric) {
            assert!(rel_err(*a, *n) < 1e-5, "analytic {a} vs numeric {n}");
        }
    }
}
