//! Non-FINCO reconstruction baselines: Newton root search over the
//! initial manifold and direct Taylor continuation from final states.

use num_complex::Complex64;

use crate::contour::TimeContour;
use crate::dynamics::{init_from_gaussian, propagate, InitialGaussian, StepperOpts, TrajectoryRecord, TrajectoryState};
use crate::error::{FincoError, Result};
use crate::potentials::PotentialModel;

#[derive(Debug, Clone, Copy)]
pub struct NewtonOpts {
    pub max_iter: usize,
    /// Convergence criterion on |q~(t) - x|.
    pub tol: f64,
    /// Roots closer than this in the initial plane are duplicates.
    pub dedup_dist: f64,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts { max_iter: 30, tol: 1e-10, dedup_dist: 1e-6 }
    }
}

/// Full action including the quantum part (i/2) ln Z with unwrapped phase.
pub fn total_action(state: &TrajectoryState) -> Complex64 {
    state.s0_cl + Complex64::i() / 2.0 * Complex64::new(state.z.norm().ln(), state.arg_z)
}

/// Sum of exp(i S_0) over all initial points whose trajectory lands on `x`.
///
/// Newton iteration on F(q0~) = q~(t; q0~) - x with derivative
/// dq~(t)/dq0~ = M_qq + M_qp S_2(t0) = Z(t).
pub fn root_search_reconstruct(
    g: &InitialGaussian,
    model: &PotentialModel,
    contour: &TimeContour,
    x: f64,
    seeds: &[Complex64],
    stepper: &StepperOpts,
    opts: &NewtonOpts,
) -> Result<Complex64> {
    let shoot = |q_init: Complex64| -> Option<TrajectoryState> {
        let s0 = init_from_gaussian(g, q_init, stepper.gamma_f);
        let rec = propagate(&s0, contour, model, stepper, &[]);
        rec.is_valid().then_some(rec.final_state)
    };

    let mut roots: Vec<(Complex64, TrajectoryState)> = Vec::new();
    for &seed in seeds {
        let mut q = seed;
        let mut converged = None;
        for _ in 0..opts.max_iter {
            let Some(f) = shoot(q) else { break };
            let residual = f.qt - x;
            if residual.norm() < opts.tol {
                converged = Some((q, f));
                break;
            }
            if f.z.norm() < 1e-14 {
                break; // caustic: Newton derivative vanished
            }
            q -= residual / f.z;
        }
        if let Some((q, f)) = converged {
            if !roots.iter().any(|(r, _)| (r - q).norm() < opts.dedup_dist) {
                roots.push((q, f));
            }
        }
    }
    if roots.is_empty() {
        return Err(FincoError::NoRoots);
    }
    Ok(roots.iter().map(|(_, f)| (Complex64::i() * total_action(f)).exp()).sum())
}

/// Distinct converged roots for `x`; exposed for branch counting diagnostics.
pub fn find_roots(
    g: &InitialGaussian,
    model: &PotentialModel,
    contour: &TimeContour,
    x: f64,
    seeds: &[Complex64],
    stepper: &StepperOpts,
    opts: &NewtonOpts,
) -> Vec<Complex64> {
    let mut roots: Vec<Complex64> = Vec::new();
    for &seed in seeds {
        let mut q = seed;
        for _ in 0..opts.max_iter {
            let s0 = init_from_gaussian(g, q, stepper.gamma_f);
            let rec = propagate(&s0, contour, model, stepper, &[]);
            if !rec.is_valid() {
                break;
            }
            let f = rec.final_state;
            let residual = f.qt - x;
            if residual.norm() < opts.tol {
                if !roots.iter().any(|r| (r - q).norm() < opts.dedup_dist) {
                    roots.push(q);
                }
                break;
            }
            if f.z.norm() < 1e-14 {
                break;
            }
            q -= residual / f.z;
        }
    }
    roots
}

/// Second-order Taylor continuation of the action from q~(t) to real x.
pub fn taylor_continuation(record: &TrajectoryRecord, x: f64) -> Complex64 {
    let f = &record.final_state;
    let dx = x - f.qt;
    let s = total_action(f) + dx * f.pt + 0.5 * dx * dx * f.s2();
    (Complex64::i() * s).exp()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::ContourFamily;
    use crate::reference_qm::{propagate_exact, GridSpec};

    fn harmonic_setup() -> (InitialGaussian, PotentialModel, StepperOpts) {
        (
            InitialGaussian { gamma0: 0.5, q0: 2.0, p0: 0.0 },
            PotentialModel::Harmonic { omega: 1.0 },
            StepperOpts::default(),
        )
    }

    #[test]
    fn free_particle_single_root() {
        let g = InitialGaussian { gamma0: 0.5, q0: 0.0, p0: 1.0 };
        let model = PotentialModel::FreeParticle;
        let contour = TimeContour::make(ContourFamily::Real, 1.0, 0.0, (0.0, 1.0)).unwrap();
        let stepper = StepperOpts::default();
        let seeds = [Complex64::new(0.3, 0.2)];
        let roots = find_roots(&g, &model, &contour, 1.5, &seeds, &stepper, &NewtonOpts::default());
        assert_eq!(roots.len(), 1);
        // q(t) = q0 + t (2 i g0 (q0 - qc) + p0); solve for q(1) = 1.5
        let q0 = roots[0];
        let p0 = 2.0 * Complex64::i() * 0.5 * q0 + 1.0;
        assert!((q0 + p0 - 1.5).norm() < 1e-10);
    }

    #[test]
    fn harmonic_root_matches_exact_amplitude() {
        let (g, model, stepper) = harmonic_setup();
        let t = 1.1;
        let contour = TimeContour::make(ContourFamily::Real, t, 0.0, (0.0, 1.0)).unwrap();

        let spec = GridSpec { x_min: -20.0, x_max: 20.0, n: 2048, dt: 0.0002 };
        let reference = propagate_exact(&g, &model, &spec, t, &[t]).unwrap().remove(0);
        let dx = reference.dx();

        for x0 in [g.q0 * t.cos(), 1.0, 0.0] {
            // evaluate exactly on a reference grid point
            let idx = ((x0 - spec.x_min) / dx).round() as usize;
            let x = reference.x[idx];
            let amp = root_search_reconstruct(
                &g,
                &model,
                &contour,
                x,
                &[Complex64::new(x, 0.0), Complex64::new(g.q0, 0.0)],
                &stepper,
                &NewtonOpts::default(),
            )
            .unwrap();
            let exact = reference.psi[idx];
            assert!((amp - exact).norm() < 1e-5, "x = {x}: {amp} vs {exact}");
        }
    }

    #[test]
    fn converged_roots_land_on_the_real_axis() {
        let (g, model, stepper) = harmonic_setup();
        let t = 0.9;
        let contour = TimeContour::make(ContourFamily::Real, t, 0.0, (0.0, 1.0)).unwrap();
        let seeds = [Complex64::new(1.0, 0.5), Complex64::new(2.5, -0.5)];
        for root in find_roots(&g, &model, &contour, 1.2, &seeds, &stepper, &NewtonOpts::default()) {
            let s0 = init_from_gaussian(&g, root, stepper.gamma_f);
            let rec = propagate(&s0, &contour, &model, &stepper, &[]);
            assert!(rec.final_state.qt.im.abs() < 1e-9);
        }
    }

    #[test]
    fn no_roots_error() {
        let (g, model, stepper) = harmonic_setup();
        let contour = TimeContour::make(ContourFamily::Real, 1.0, 0.0, (0.0, 1.0)).unwrap();
        // empty seed list cannot converge
        assert!(matches!(
            root_search_reconstruct(&g, &model, &contour, 0.0, &[], &stepper, &NewtonOpts::default()),
            Err(FincoError::NoRoots)
        ));
    }

    #[test]
    fn taylor_zero_distance_limit() {
        let (g, model, stepper) = harmonic_setup();
        let t = 2.0 * std::f64::consts::PI;
        let contour = TimeContour::make(ContourFamily::Real, t, 0.0, (0.0, 1.0)).unwrap();
        let s0 = init_from_gaussian(&g, Complex64::new(g.q0, 0.0), stepper.gamma_f);
        let rec = propagate(&s0, &contour, &model, &stepper, &[]);
        let f = rec.final_state;
        assert!(f.qt.im.abs() < 1e-6);
        let amp = taylor_continuation(&rec, f.qt.re);
        let direct = (Complex64::i() * total_action(&f)).exp();
        assert!((amp - direct).norm() < 1e-8);
    }

    #[test]
    fn taylor_exact_for_harmonic_any_distance() {
        let (g, model, stepper) = harmonic_setup();
        let t = 1.3;
        let contour = TimeContour::make(ContourFamily::Real, t, 0.0, (0.0, 1.0)).unwrap();
        let s0 = init_from_gaussian(&g, Complex64::new(g.q0, 0.0), stepper.gamma_f);
        let rec = propagate(&s0, &contour, &model, &stepper, &[]);

        let spec = GridSpec { x_min: -20.0, x_max: 20.0, n: 2048, dt: 0.0002 };
        let reference = propagate_exact(&g, &model, &spec, t, &[t]).unwrap().remove(0);
        let dx = reference.dx();
        for x0 in [-1.0, 0.5, 2.0, 4.0] {
            let idx = ((x0 - spec.x_min) / dx).round() as usize;
            let x = reference.x[idx];
            let amp = taylor_continuation(&rec, x);
            let exact = reference.psi[idx];
            assert!((amp - exact).norm() < 1e-5, "x = {x}: {amp} vs {exact}");
        }
    }
}
