//! Initial-manifold quadrature grids over the complex q~(t0) plane.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{FincoError, Result};

/// Rectangle in the complex initial-position plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        (self.re_max - self.re_min) * (self.im_max - self.im_min)
    }

    pub fn contains(&self, q: Complex64) -> bool {
        q.re >= self.re_min && q.re <= self.re_max && q.im >= self.im_min && q.im <= self.im_max
    }
}

/// One quadrature cell: midpoint sample and its area weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub q: Complex64,
    pub weight: f64,
    pub level: u32,
}

/// Midpoint-rule sampling of a rectangle, optionally locally refined.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifoldGrid {
    pub rect: Rect,
    pub points: Vec<GridPoint>,
    /// Base resolution, kept for map exports.
    pub nx: usize,
    pub ny: usize,
}

impl ManifoldGrid {
    /// Uniform nx-by-ny midpoint grid; each point carries the cell area.
    pub fn uniform(rect: Rect, nx: usize, ny: usize) -> Result<ManifoldGrid> {
        if nx < 1 || ny < 1 {
            return Err(FincoError::InvalidInput("grid resolution must be >= 1".into()));
        }
        if !(rect.re_max > rect.re_min) || !(rect.im_max > rect.im_min) {
            return Err(FincoError::InvalidInput("degenerate sampling rectangle".into()));
        }
        let dx = (rect.re_max - rect.re_min) / nx as f64;
        let dy = (rect.im_max - rect.im_min) / ny as f64;
        let w = dx * dy;
        let mut points = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let im = rect.im_min + (j as f64 + 0.5) * dy;
            for i in 0..nx {
                let re = rect.re_min + (i as f64 + 0.5) * dx;
                points.push(GridPoint { q: Complex64::new(re, im), weight: w, level: 0 });
            }
        }
        Ok(ManifoldGrid { rect, points, nx, ny })
    }

    /// Split the `budget` highest-scoring cells 2x2, quartering their weights.
    ///
    /// Splitting preserves the total weight, so the grid still integrates
    /// constants exactly.
    pub fn refine(&self, scores: &[f64], budget: usize) -> Result<ManifoldGrid> {
        if scores.len() != self.points.len() {
            return Err(FincoError::InvalidInput(format!(
                "{} scores for {} points",
                scores.len(),
                self.points.len()
            )));
        }
        let mut order: Vec<usize> = (0..self.points.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
        let split: std::collections::HashSet<usize> = order.into_iter().take(budget).collect();

        let base_dx = (self.rect.re_max - self.rect.re_min) / self.nx as f64;
        let base_dy = (self.rect.im_max - self.rect.im_min) / self.ny as f64;
        let mut points = Vec::with_capacity(self.points.len() + 3 * split.len());
        for (idx, p) in self.points.iter().enumerate() {
            if split.contains(&idx) {
                let scale = 0.5f64.powi(p.level as i32);
                let (hx, hy) = (base_dx * scale / 4.0, base_dy * scale / 4.0);
                let w = p.weight / 4.0;
                for (sx, sy) in [(-1.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0)] {
                    points.push(GridPoint {
                        q: p.q + Complex64::new(sx * hx, sy * hy),
                        weight: w,
                        level: p.level + 1,
                    });
                }
            } else {
                points.push(*p);
            }
        }
        Ok(ManifoldGrid { rect: self.rect, points, nx: self.nx, ny: self.ny })
    }

    pub fn total_weight(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }
}
