//! Integration paths in the complex time plane.
//!
//! A contour starts at t = 0 and ends at a real final time. Trajectories
//! are stepped along the polyline with complex time increments; dipping
//! below the real axis routes them around dynamical singularities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FincoError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContourFamily {
    /// Straight segment along the real axis.
    Real,
    /// Rectangular excursion to Im t = -depth over a fraction of the run.
    RectangularDip,
}

/// Piecewise-linear path in the complex time plane from 0 to `t_final`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeContour {
    waypoints: Vec<Complex64>,
    t_final: f64,
}

impl TimeContour {
    pub fn make(
        family: ContourFamily,
        t_final: f64,
        dip_depth: f64,
        dip_fraction: (f64, f64),
    ) -> Result<TimeContour> {
        if !(t_final > 0.0) {
            return Err(FincoError::InvalidInput(format!(
                "t_final must be positive, got {t_final}"
            )));
        }
        let mut waypoints = vec![Complex64::new(0.0, 0.0)];
        match family {
            ContourFamily::Real => {}
            ContourFamily::RectangularDip => {
                let (fa, fb) = dip_fraction;
                if fa >= fb || fa < 0.0 || fb > 1.0 {
                    return Err(FincoError::InvalidInput(format!(
                        "dip_fraction must satisfy 0 <= start < end <= 1, got ({fa}, {fb})"
                    )));
                }
                if dip_depth != 0.0 {
                    let a = fa * t_final;
                    let b = fb * t_final;
                    waypoints.push(Complex64::new(a, 0.0));
                    waypoints.push(Complex64::new(a, -dip_depth));
                    waypoints.push(Complex64::new(b, -dip_depth));
                    waypoints.push(Complex64::new(b, 0.0));
                }
            }
        }
        waypoints.push(Complex64::new(t_final, 0.0));
        // collapse degenerate segments (e.g. dip starting at t = 0)
        waypoints.dedup_by(|a, b| (*a - *b).norm() < 1e-15 * t_final.max(1.0));
        Ok(TimeContour { waypoints, t_final })
    }

    pub fn from_waypoints(waypoints: Vec<Complex64>) -> Result<TimeContour> {
        if waypoints.len() < 2 {
            return Err(FincoError::InvalidInput("need at least two waypoints".into()));
        }
        if waypoints[0].norm() != 0.0 {
            return Err(FincoError::InvalidInput("contour must start at 0".into()));
        }
        let last = *waypoints.last().unwrap();
        if last.im != 0.0 || !(last.re > 0.0) {
            return Err(FincoError::InvalidInput(
                "contour must end at a positive real time".into(),
            ));
        }
        for w in waypoints.windows(2) {
            if (w[1] - w[0]).norm() == 0.0 {
                return Err(FincoError::InvalidInput("repeated waypoint".into()));
            }
            if w[1].re < w[0].re {
                return Err(FincoError::InvalidInput(
                    "Re(t) must be non-decreasing along the contour".into(),
                ));
            }
        }
        Ok(TimeContour { waypoints, t_final: last.re })
    }

    pub fn waypoints(&self) -> &[Complex64] {
        &self.waypoints
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    /// Split the polyline into complex steps with |step| <= dt_max.
    ///
    /// The steps telescope exactly: their sum is `t_final + 0i` because each
    /// segment is subdivided by exact endpoint differences.
    pub fn discretize(&self, dt_max: f64) -> Result<Vec<Complex64>> {
        if !(dt_max > 0.0) {
            return Err(FincoError::InvalidInput("dt_max must be positive".into()));
        }
        let mut steps = Vec::new();
        let mut pos = self.waypoints[0];
        for w in self.waypoints.windows(2) {
            let seg = w[1] - w[0];
            let n = (seg.norm() / dt_max).ceil().max(1.0) as usize;
            let step = seg / n as f64;
            for k in 0..n {
                // last substep lands exactly on the waypoint
                let next = if k == n - 1 { w[1] } else { pos + step };
                steps.push(next - pos);
                pos = next;
            }
        }
        Ok(steps)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_contour_waypoints() {
        let c = TimeContour::make(ContourFamily::Real, 12.88, 0.0, (0.0, 1.0)).unwrap();
        assert_eq!(c.waypoints(), &[Complex64::new(0.0, 0.0), Complex64::new(12.88, 0.0)]);
    }

    #[test]
    fn full_span_dip() {
        let c = TimeContour::make(ContourFamily::RectangularDip, 10.0, 0.5, (0.0, 1.0)).unwrap();
        assert_eq!(
            c.waypoints(),
            &[
                Complex64::new(0.0, 0.0),
                Complex64::new(0.0, -0.5),
                Complex64::new(10.0, -0.5),
                Complex64::new(10.0, 0.0),
            ]
        );
    }

    #[test]
    fn zero_depth_collapses_to_real() {
        let c = TimeContour::make(ContourFamily::RectangularDip, 10.0, 0.0, (0.0, 1.0)).unwrap();
        assert_eq!(c.waypoints(), &[Complex64::new(0.0, 0.0), Complex64::new(10.0, 0.0)]);
    }

    #[test]
    fn rejects_invalid() {
        assert!(TimeContour::make(ContourFamily::Real, -1.0, 0.0, (0.0, 1.0)).is_err());
        assert!(TimeContour::make(ContourFamily::RectangularDip, 1.0, 0.1, (0.8, 0.2)).is_err());
    }

    #[test]
    fn discretize_uniform() {
        let c = TimeContour::make(ContourFamily::Real, 1.0, 0.0, (0.0, 1.0)).unwrap();
        let steps = c.discretize(0.25).unwrap();
        assert_eq!(steps.len(), 4);
        for s in &steps {
            assert!((s - Complex64::new(0.25, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn discretize_counts() {
        let c = TimeContour::make(ContourFamily::Real, 12.88, 0.0, (0.0, 1.0)).unwrap();
        assert_eq!(c.discretize(0.01).unwrap().len(), 1288);
    }

    #[test]
    fn telescoping_sum_with_dip() {
        let c = TimeContour::make(ContourFamily::RectangularDip, 1.0, 0.5, (0.0, 1.0)).unwrap();
        let steps = c.discretize(0.5).unwrap();
        let total: Complex64 = steps.iter().sum();
        assert!((total - Complex64::new(1.0, 0.0)).norm() < 1e-14);
        for s in &steps {
            assert!(s.norm() <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn real_family_steps_are_real() {
        let c = TimeContour::make(ContourFamily::Real, 3.7, 0.0, (0.0, 1.0)).unwrap();
        for s in c.discretize(0.3).unwrap() {
            assert_eq!(s.im, 0.0);
        }
    }
}
