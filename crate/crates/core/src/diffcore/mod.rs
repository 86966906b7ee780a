//! Minimal reverse-mode differentiable computation.
//!
//! A [`Graph`] is an append-only arena of shape-checked nodes over named
//! tensor variables. Forward evaluation ([`Graph::eval`]) is referentially
//! transparent and rejects non-finite intermediates; [`Graph::gradients`]
//! walks the arena in reverse applying each primitive's adjoint rule.
//!
//! The primitive set is deliberately closed: elementwise add/sub/mul,
//! power-by-constant, natural log, sigmoid, rectifier, 1×1 and 3×3
//! convolution at stride 1 or 2 with zero padding, bilinear resize
//! (half-pixel centers), channel concatenation, global mean pooling,
//! full sum/mean reductions, clamping, and per-channel normalization.
//! Division is spelled `a * b^(-1)` on positive denominators.
//!
//! Everything is f64. Finite-difference verification lives in
//! [`crate::gradcheck`].

mod eval;
mod grad;
mod graph;
mod tensor;

pub use eval::{sigmoid, Bindings};
pub use graph::{Graph, NodeId, Op};
pub use tensor::{bilinear_resize, bilinear_resize_plane, Shape, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn bind(pairs: &[(&str, Tensor)]) -> Bindings {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn sigmoid_symmetry_point() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::scalar()).unwrap();
        let y = g.sigmoid(x);
        let out = g.eval(y, &bind(&[("x", Tensor::scalar(0.0))])).unwrap();
        assert_eq!(out.item(), 0.5);
    }

    #[test]
    fn clamp_saturates() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::scalar()).unwrap();
        let y = g.clamp(x, 1e-6, 1.0 - 1e-6);
        let out = g.eval(y, &bind(&[("x", Tensor::scalar(2.0))])).unwrap();
        assert_eq!(out.item(), 0.999999);
    }

    #[test]
    fn identity_kernel_conv_passthrough() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::new(&[1, 1, 5, 5])).unwrap();
        let mut kdata = vec![0.0; 9];
        kdata[4] = 1.0; // center tap
        let w = g.constant(Tensor::from_vec(Shape::new(&[1, 1, 3, 3]), kdata).unwrap());
        let b = g.constant(Tensor::zeros(Shape::new(&[1])));
        let y = g.conv2d(x, w, b, 1).unwrap();
        let input = Tensor::from_vec(
            Shape::new(&[1, 1, 5, 5]),
            (0..25).map(|i| i as f64 * 0.3 - 2.0).collect(),
        )
        .unwrap();
        let out = g.eval(y, &bind(&[("x", input.clone())])).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn polynomial_gradient() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::scalar()).unwrap();
        let y = g.pow_const(x, 2.0);
        let grads = g
            .gradients(y, &bind(&[("x", Tensor::scalar(3.0))]), &["x".into()])
            .unwrap();
        assert!((grads["x"].item() - 6.0).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_gradient_closed_form() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::scalar()).unwrap();
        let y = g.sigmoid(x);
        let grads = g
            .gradients(y, &bind(&[("x", Tensor::scalar(0.0))]), &["x".into()])
            .unwrap();
        assert!((grads["x"].item() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn eval_is_referentially_transparent() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::new(&[1, 2, 4, 4])).unwrap();
        let s = g.sigmoid(x);
        let p = g.global_mean_pool(s).unwrap();
        let y = g.sum_all(p);
        let input = Tensor::from_vec(
            Shape::new(&[1, 2, 4, 4]),
            (0..32).map(|i| (i as f64 * 0.77).sin()).collect(),
        )
        .unwrap();
        let b = bind(&[("x", input)]);
        let a = g.eval(y, &b).unwrap();
        let c = g.eval(y, &b).unwrap();
        assert_eq!(a.data(), c.data());
    }

    #[test]
    fn non_finite_reports_offending_node() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::scalar()).unwrap();
        let y = g.ln(x); // ln(0) = -inf
        let err = g.eval(y, &bind(&[("x", Tensor::scalar(0.0))])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("ln"), "got: {msg}");
    }

    #[test]
    fn unbound_variable_is_an_error() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::scalar()).unwrap();
        let _ = x;
        let err = g.eval(NodeId(0), &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, crate::error::Error::UnboundVariable(_)));
    }

    #[test]
    fn non_scalar_root_rejected() {
        let mut g = Graph::new();
        let x = g.var("x", Shape::new(&[2, 2])).unwrap();
        let err = g
            .gradients(
                x,
                &bind(&[("x", Tensor::zeros(Shape::new(&[2, 2])))]),
                &["x".into()],
            )
            .unwrap_err();
        assert!(matches!(err, crate::error::Error::NonScalarRoot { .. }));
    }

    #[test]
    fn gradient_linearity() {
        // gradient(a·f + b·g) = a·grad f + b·grad g on scalar graphs.
        let build = |a: f64, b: f64| {
            let mut g = Graph::new();
            let x = g.var("x", Shape::scalar()).unwrap();
            let f = g.pow_const(x, 3.0); // f = x^3
            let s = g.sigmoid(x); // g = sigmoid(x)
            let af = g.mul_const(f, a);
            let bg = g.mul_const(s, b);
            let y = g.add(af, bg).unwrap();
            let grads = g
                .gradients(y, &bind(&[("x", Tensor::scalar(0.7))]), &["x".into()])
                .unwrap();
            grads["x"].item()
        };
        let gf = build(1.0, 0.0);
        let gg = build(0.0, 1.0);
        let combined = build(2.5, -1.25);
        assert!((combined - (2.5 * gf - 1.25 * gg)).abs() < 1e-12);
    }

    #[test]
    fn concat_and_pool_shapes() {
        let mut g = Graph::new();
        let a = g.var("a", Shape::new(&[1, 2, 4, 4])).unwrap();
        let b = g.var("b", Shape::new(&[1, 3, 4, 4])).unwrap();
        let c = g.concat_channels(&[a, b]).unwrap();
        assert_eq!(g.shape(c).dims(), &[1, 5, 4, 4]);
        let p = g.global_mean_pool(c).unwrap();
        assert_eq!(g.shape(p).dims(), &[1, 5, 1, 1]);
    }
}
