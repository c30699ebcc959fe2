//! Phase-space structure maps over the initial manifold: branch maps of
//! |Im q~(t)|, reconstruction weight fields, and phase-discontinuity
//! (scar) detection.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::TrajectoryRecord;
use crate::error::{FincoError, Result};
use crate::finco::FincoSample;
use crate::sampling::ManifoldGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    ImFinalQ,
    WeightMagPhase,
    JacMag,
    ArgD,
}

/// Scalar field sampled on the points of a manifold grid.
///
/// Connectivity-based analyses (branch counting, scar chains) require the
/// grid to be uniform (level 0, row-major nx * ny).
#[derive(Debug, Clone)]
pub struct FieldMap {
    pub grid: ManifoldGrid,
    pub values: Vec<Complex64>,
    pub kind: FieldKind,
}

impl FieldMap {
    fn require_uniform(&self) -> Result<(usize, usize)> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        if self.grid.points.len() != nx * ny {
            return Err(FincoError::InvalidInput(
                "field analysis requires an unrefined uniform grid".into(),
            ));
        }
        Ok((nx, ny))
    }
}

/// Branch-count settings: sublevel threshold on |Im q~(t)| and the minimum
/// component size that counts as a branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOpts {
    pub threshold: f64,
    pub min_points: usize,
}

impl Default for BranchOpts {
    fn default() -> Self {
        BranchOpts { threshold: 0.05, min_points: 5 }
    }
}

/// |Im q~(t)| field plus the number of branches: connected components of
/// the sublevel set under 4-neighbor connectivity.
pub fn branch_map(
    records: &[TrajectoryRecord],
    grid: &ManifoldGrid,
    opts: &BranchOpts,
) -> Result<(FieldMap, usize)> {
    if records.len() != grid.points.len() {
        return Err(FincoError::InvalidInput("records not aligned with grid".into()));
    }
    let values: Vec<Complex64> = records
        .iter()
        .map(|r| {
            if r.is_valid() {
                Complex64::new(r.final_state.qt.im.abs(), 0.0)
            } else {
                Complex64::new(f64::INFINITY, 0.0)
            }
        })
        .collect();
    let map = FieldMap { grid: grid.clone(), values, kind: FieldKind::ImFinalQ };
    let (nx, ny) = map.require_uniform()?;

    let mask: Vec<bool> = map.values.iter().map(|v| v.re < opts.threshold).collect();
    let mut seen = vec![false; mask.len()];
    let mut count = 0;
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        // BFS flood fill
        let mut size = 0;
        let mut queue = std::collections::VecDeque::from([start]);
        seen[start] = true;
        while let Some(idx) = queue.pop_front() {
            size += 1;
            let (i, j) = (idx % nx, idx / nx);
            let mut push = |ni: usize, nj: usize| {
                let n = nj * nx + ni;
                if mask[n] && !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < nx {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < ny {
                push(i, j + 1);
            }
        }
        if size >= opts.min_points {
            count += 1;
        }
    }
    Ok((map, count))
}

/// Complex |J| * overlap field (pre-quadrature weight); zero when rejected.
pub fn weight_map(samples: &[FincoSample], grid: &ManifoldGrid) -> Result<FieldMap> {
    if samples.len() != grid.points.len() {
        return Err(FincoError::InvalidInput("samples not aligned with grid".into()));
    }
    let values = samples
        .iter()
        .map(|s| {
            if s.is_valid() && s.jac_overlap_mag.is_finite() {
                Complex64::from_polar(s.jac_overlap_mag, s.weight.arg())
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(FieldMap { grid: grid.clone(), values, kind: FieldKind::WeightMagPhase })
}

/// A chain of flagged grid edges, each edge given by the two point indices.
pub type ScarSegment = Vec<(usize, usize)>;

fn wrap_phase(d: f64) -> f64 {
    let mut d = d % (2.0 * std::f64::consts::PI);
    if d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    } else if d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    d
}

/// Find chains of grid edges where the phase of the field jumps by more
/// than pi/2 between neighbors (after wrapping, i.e. removing the smooth
/// unwrapped trend). Zero-magnitude points are skipped.
pub fn detect_scars(map: &FieldMap) -> Result<Vec<ScarSegment>> {
    let (nx, ny) = map.require_uniform()?;
    let phase: Vec<Option<f64>> = map
        .values
        .iter()
        .map(|v| (v.norm() > 0.0).then(|| v.arg()))
        .collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let idx = j * nx + i;
            let Some(p) = phase[idx] else { continue };
            for n in [
                (i + 1 < nx).then(|| idx + 1),
                (j + 1 < ny).then(|| idx + nx),
            ]
            .into_iter()
            .flatten()
            {
                if let Some(pn) = phase[n] {
                    if wrap_phase(pn - p).abs() > std::f64::consts::FRAC_PI_2 {
                        edges.push((idx, n));
                    }
                }
            }
        }
    }
    // chain edges whose endpoints touch or are grid-adjacent into segments
    let adjacent = |a: usize, b: usize| -> bool {
        if a == b {
            return true;
        }
        let (ai, aj) = (a % nx, a / nx);
        let (bi, bj) = (b % nx, b / nx);
        ai.abs_diff(bi) + aj.abs_diff(bj) <= 1
    };
    let mut segments: Vec<ScarSegment> = Vec::new();
    let mut assigned = vec![false; edges.len()];
    for start in 0..edges.len() {
        if assigned[start] {
            continue;
        }
        let mut segment = vec![edges[start]];
        assigned[start] = true;
        let mut grew = true;
        while grew {
            grew = false;
            for (k, e) in edges.iter().enumerate() {
                if assigned[k] {
                    continue;
                }
                let touches = segment.iter().any(|s| {
                    adjacent(s.0, e.0) || adjacent(s.0, e.1) || adjacent(s.1, e.0) || adjacent(s.1, e.1)
                });
                if touches {
                    assigned[k] = true;
                    segment.push(*e);
                    grew = true;
                }
            }
        }
        segments.push(segment);
    }
    Ok(segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::Rect;

    fn grid(nx: usize, ny: usize) -> ManifoldGrid {
        let rect = Rect { re_min: -1.0, re_max: 1.0, im_min: -1.0, im_max: 1.0 };
        ManifoldGrid::uniform(rect, nx, ny).unwrap()
    }

    fn field(grid: &ManifoldGrid, f: impl Fn(Complex64) -> Complex64) -> FieldMap {
        FieldMap {
            grid: grid.clone(),
            values: grid.points.iter().map(|p| f(p.q)).collect(),
            kind: FieldKind::WeightMagPhase,
        }
    }

    #[test]
    fn constant_phase_field_has_no_scars() {
        let g = grid(16, 16);
        let m = field(&g, |_| Complex64::new(1.0, 1.0));
        assert!(detect_scars(&m).unwrap().is_empty());
    }

    #[test]
    fn arg_branch_cut_gives_one_segment_ending_at_center() {
        // half-angle field: the square-root prefactor situation, with a
        // pi jump across the cut of arg ending at c
        let g = grid(41, 41);
        let c = Complex64::new(0.012, 0.017); // off lattice points
        let m = field(&g, |q| {
            let z = q - c;
            Complex64::from_polar(1.0, 0.5 * z.arg())
        });
        let segs = detect_scars(&m).unwrap();
        assert_eq!(segs.len(), 1, "{segs:?}");
        // the cut of arg runs along the negative real axis from c
        let seg = &segs[0];
        let leftmost = seg
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .map(|i| g.points[i].q.re)
            .fold(f64::INFINITY, f64::min);
        let rightmost = seg
            .iter()
            .flat_map(|&(a, b)| [a, b])
            .map(|i| g.points[i].q.re)
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(leftmost < -0.9);
        assert!((rightmost - c.re).abs() < 0.1, "segment should end near the center");
    }

    #[test]
    fn smooth_unwrapped_trend_is_not_a_scar() {
        // phase advancing slowly across the grid wraps through +-pi but
        // neighbor increments stay small
        let g = grid(64, 4);
        let m = field(&g, |q| Complex64::from_polar(1.0, 6.0 * q.re));
        assert!(detect_scars(&m).unwrap().is_empty());
    }
}
