//! Gauss–Hermite quadrature for integrals against a normal weight.

use crate::error::{Error, Result};
use std::f64::consts::PI;

/// Nodes and log-weights of the `n`-point rule for `∫ e^{−u²} g(u) du`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub ln_weights: Vec<f64>,
}

impl GaussHermite {
    /// Roots of the Hermite polynomial by Newton iteration on the
    /// orthonormal three-term recurrence, seeded with the usual asymptotic
    /// guesses.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter {
                name: "nodes",
                value: 0.0,
                reason: "quadrature needs at least one node",
            });
        }
        let mut nodes = vec![0.0; n];
        let mut ln_weights = vec![0.0; n];
        let nf = n as f64;
        let m = n.div_ceil(2);
        let pim4 = PI.powf(-0.25);
        let mut z = 0.0f64;
        for i in 0..m {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut derivative = 0.0;
            let mut converged = false;
            for _ in 0..100 {
                let mut p1 = pim4;
                let mut p2 = 0.0;
                for j in 1..=n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
                }
                derivative = (2.0 * nf).sqrt() * p2;
                let step = p1 / derivative;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NumericRange(format!(
                    "Gauss-Hermite root {i} of {n} did not converge"
                )));
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let lw = 2f64.ln() - 2.0 * derivative.abs().ln();
            ln_weights[i] = lw;
            ln_weights[n - 1 - i] = lw;
        }
        Ok(Self { nodes, ln_weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}
