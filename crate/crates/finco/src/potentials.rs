//! Analytic one-dimensional potentials evaluable at complex position.
//!
//! Each model supplies the potential and its first two derivatives in
//! closed form; the trajectory equations of motion never differentiate
//! numerically.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FincoError, Result};

/// Analytic 1-D potential model. All parameters in atomic units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PotentialModel {
    /// Morse well `D [e^{-2 beta x} - 2 e^{-beta x}]` with minimum `-D` at x = 0.
    Morse { d: f64, beta: f64 },
    /// Harmonic well `omega^2 x^2 / 2` (unit mass).
    Harmonic { omega: f64 },
    FreeParticle,
}

impl PotentialModel {
    /// Evaluate the potential and its first `n_max` derivatives at complex `q`.
    ///
    /// Returns `[V_0, ..., V_{n_max}]`. Only orders 0..=2 are supported.
    pub fn eval_derivs(&self, q: Complex64, n_max: usize) -> Result<Vec<Complex64>> {
        if !q.re.is_finite() || !q.im.is_finite() {
            return Err(FincoError::InvalidInput(format!("non-finite position {q}")));
        }
        if n_max > 2 {
            return Err(FincoError::InvalidInput(format!(
                "derivative order {n_max} > 2 not supported"
            )));
        }
        let mut out = Vec::with_capacity(n_max + 1);
        match *self {
            PotentialModel::Morse { d, beta } => {
                let e1 = (-beta * q).exp();
                let e2 = (-2.0 * beta * q).exp();
                for n in 0..=n_max {
                    // V_n = D [(-2 beta)^n e^{-2 beta q} - 2 (-beta)^n e^{-beta q}]
                    let c2 = (-2.0 * beta).powi(n as i32);
                    let c1 = (-beta).powi(n as i32);
                    out.push(d * (c2 * e2 - 2.0 * c1 * e1));
                }
            }
            PotentialModel::Harmonic { omega } => {
                let w2 = omega * omega;
                for n in 0..=n_max {
                    out.push(match n {
                        0 => 0.5 * w2 * q * q,
                        1 => w2 * q,
                        _ => Complex64::new(w2, 0.0),
                    });
                }
            }
            PotentialModel::FreeParticle => {
                out.resize(n_max + 1, Complex64::new(0.0, 0.0));
            }
        }
        Ok(out)
    }

    /// `[V_0, V_1, V_2]` without the order argument; the common case in stepping.
    pub fn v012(&self, q: Complex64) -> Result<[Complex64; 3]> {
        let v = self.eval_derivs(q, 2)?;
        Ok([v[0], v[1], v[2]])
    }
}
