//! Fixed Gaussian quadrature rules stored as plain node/weight vectors.

use std::num::NonZeroUsize;

use gauss_quad::{hermite::GaussHermite, legendre::GaussLegendre};

#[derive(Debug, Clone)]
pub struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl Rule {
    /// Gauss–Legendre rule on `[-1, 1]`.
    pub fn legendre(order: usize) -> Self {
        let order = NonZeroUsize::new(order).expect("quadrature order must be positive");
        let (nodes, weights) = GaussLegendre::new(order).into_iter().unzip();
        Self { nodes, weights }
    }

    /// Gauss–Hermite rule for the weight `exp(-x^2)` on the real line.
    pub fn hermite(order: usize) -> Self {
        let order = NonZeroUsize::new(order).expect("quadrature order must be positive");
        let (nodes, weights) = GaussHermite::new(order).into_iter().unzip();
        Self { nodes, weights }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped from `[-1, 1]` onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&t, &w)| (mid + half * t, half * w))
    }

    /// Integral over `[a, b]` split into `panels` equal panels.
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + i as f64 * h;
                self.mapped(lo, lo + h).map(|(x, w)| w * f(x)).sum::<f64>()
            })
            .sum()
    }
}
