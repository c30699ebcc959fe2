//! Final-value coherent-state reconstruction.
//!
//! Each propagated trajectory ends at a complex phase-space point
//! (q~, p~). The Huber-Heller bra transformation assigns it the real
//! Gaussian center (q_f, p_f) with the same xi_f = 2 gamma_f q~ - i p~,
//! and the trajectory's overlap amplitude, weighted by the
//! final-to-initial Jacobian, becomes the coefficient of that Gaussian.
//! Summing the Gaussians over the initial manifold grid yields Psi(x, t).
//!
//! The square-root prefactor 1/sqrt(D) with D = 2 gamma_f Z - i P_z is
//! evaluated with the contour-unwrapped phase carried by the trajectory
//! state, not the principal branch; principal-branch evaluation produces
//! phase scars across the manifold.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{caustic_denominator, InitialGaussian, TrajectoryRecord, TrajectoryState};
use crate::error::{FincoError, Result};

/// Why a sample carries zero weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rejection {
    /// Propagation fault (overflow or step collapse).
    Invalid,
    /// Im S_kin below the sigma threshold.
    KineticAction,
    /// Re V dropped below the nu threshold along the contour.
    PotentialDivergence,
    /// |J| * |overlap| at or above the epsilon noise threshold.
    NoiseMagnitude,
}

/// Per-trajectory reconstruction payload.
#[derive(Debug, Clone, Copy)]
pub struct FincoSample {
    /// Initial manifold point this sample came from.
    pub q_init: Complex64,
    /// Real center position of the assigned Gaussian.
    pub qf: f64,
    /// Real center momentum of the assigned Gaussian.
    pub pf: f64,
    /// Full complex coefficient, including the quadrature weight dA.
    pub weight: Complex64,
    /// Jacobian magnitude |D|^2 / (2 gamma_f).
    pub jac_mag: f64,
    /// Exponent sigma = i S0_cl + gamma_f (qf^2 - q~^2) + i (S1 qf - pf q~).
    pub sigma_exp: Complex64,
    /// |J| * |overlap| before the quadrature weight; the epsilon-filter field.
    pub jac_overlap_mag: f64,
    pub rejection: Option<Rejection>,
}

impl FincoSample {
    pub fn is_valid(&self) -> bool {
        self.rejection.is_none()
    }
}

/// Divergence/noise filter thresholds (sigma, nu, epsilon).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterThresholds {
    /// Reject when Im S_kin(t) < sigma.
    pub sigma: f64,
    /// Reject when Re V(q~(t_final)) < nu.
    pub nu: f64,
    /// Reject when |J| * |overlap| >= epsilon.
    pub epsilon: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        FilterThresholds { sigma: -2.5, nu: -20.0, epsilon: 1e4 }
    }
}

impl FilterThresholds {
    /// Thresholds that accept every finite trajectory. The filters are
    /// regularizations for potentials with dynamical singularities; for
    /// globally analytic potentials (harmonic, free) they cut genuine
    /// contributions and must be turned off.
    pub fn disabled() -> Self {
        FilterThresholds { sigma: f64::NEG_INFINITY, nu: f64::NEG_INFINITY, epsilon: f64::INFINITY }
    }
}

/// Unique real Gaussian center with xi_f = 2 gamma_f q~ - i p~ = 2 gamma_f q_f - i p_f.
pub fn hh_transform(qt: Complex64, pt: Complex64, gamma_f: f64) -> (f64, f64) {
    let qf = qt.re + pt.im / (2.0 * gamma_f);
    let pf = pt.re - 2.0 * gamma_f * qt.im;
    (qf, pf)
}

/// |J| from the monodromy matrix and the initial manifold condition S_2(t0).
pub fn jacobian_magnitude(final_state: &TrajectoryState, s2_t0: Complex64, gamma_f: f64) -> f64 {
    let m = &final_state.m;
    let i = Complex64::i();
    let d = 2.0 * gamma_f * m[1][1] + 2.0 * gamma_f * m[1][0] * s2_t0
        - i * m[0][1]
        - i * m[0][0] * s2_t0;
    d.norm_sqr() / (2.0 * gamma_f)
}

/// Assemble the reconstruction coefficient of one final trajectory state.
///
/// The coefficient is
/// `dA / (2 pi) * |J| * (2 gamma_f / pi)^{1/4} * sqrt(2 pi) * |D|^{-1/2}
///  * exp(-i arg_d / 2) * exp(sigma)`
/// so the net |D| dependence is |D|^{3/2}: the weight vanishes at caustics.
pub fn sample_weight(
    record: &TrajectoryRecord,
    _g: &InitialGaussian,
    gamma_f: f64,
    da: f64,
) -> FincoSample {
    let f = &record.final_state;
    let (qf, pf) = hh_transform(f.qt, f.pt, gamma_f);
    let d = caustic_denominator(f, gamma_f);
    let d_mag = d.norm();
    let jac_mag = d.norm_sqr() / (2.0 * gamma_f);
    let i = Complex64::i();
    let sigma = i * f.s0_cl + gamma_f * (qf * qf - f.qt * f.qt) + i * (f.pt * qf - pf * f.qt);

    let mut sample = FincoSample {
        q_init: record.q_init,
        qf,
        pf,
        weight: Complex64::new(0.0, 0.0),
        jac_mag,
        sigma_exp: sigma,
        jac_overlap_mag: 0.0,
        rejection: None,
    };
    if f.fault.is_some() || !qf.is_finite() || !pf.is_finite() {
        sample.rejection = Some(Rejection::Invalid);
        return sample;
    }

    // magnitudes in log space: exp(sigma) alone may overflow for
    // trajectories the filters are about to discard
    let quarter_log = 0.25 * (2.0 * gamma_f / std::f64::consts::PI).ln();
    let log_ovl_mag = quarter_log + 0.5 * (2.0 * std::f64::consts::PI / d_mag).ln() + sigma.re;
    let log_jac_ovl = jac_mag.ln() + log_ovl_mag;
    sample.jac_overlap_mag = log_jac_ovl.exp();

    let log_w_mag = (da / (2.0 * std::f64::consts::PI)).ln() + log_jac_ovl;
    if log_w_mag > 600.0 {
        sample.rejection = Some(Rejection::Invalid);
        return sample;
    }
    let phase = -0.5 * f.arg_d + sigma.im;
    sample.weight = Complex64::from_polar(log_w_mag.exp(), phase);
    sample
}

/// Apply the sigma / nu / epsilon filters, zeroing the weight on rejection.
pub fn apply_filters(
    record: &TrajectoryRecord,
    sample: &FincoSample,
    thresholds: &FilterThresholds,
) -> FincoSample {
    let mut out = *sample;
    if out.rejection.is_some() {
        return out;
    }
    let reason = if record.final_state.s_kin.im < thresholds.sigma {
        Some(Rejection::KineticAction)
    } else if record.final_re_v < thresholds.nu {
        Some(Rejection::PotentialDivergence)
    } else if !(sample.jac_overlap_mag < thresholds.epsilon) {
        Some(Rejection::NoiseMagnitude)
    } else {
        None
    };
    if reason.is_some() {
        out.rejection = reason;
        out.weight = Complex64::new(0.0, 0.0);
    }
    out
}

/// Complex amplitudes on a uniform real-space grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WavefunctionGrid {
    pub x: Vec<f64>,
    pub psi: Vec<Complex64>,
    pub t_final: f64,
    pub norm: f64,
}

impl WavefunctionGrid {
    pub fn new(x: Vec<f64>, psi: Vec<Complex64>, t_final: f64) -> WavefunctionGrid {
        let mut grid = WavefunctionGrid { x, psi, t_final, norm: 0.0 };
        grid.norm = grid.compute_norm();
        grid
    }

    pub fn dx(&self) -> f64 {
        if self.x.len() > 1 {
            self.x[1] - self.x[0]
        } else {
            0.0
        }
    }

    fn compute_norm(&self) -> f64 {
        let dx = self.dx();
        self.psi.iter().map(|p| p.norm_sqr()).sum::<f64>() * dx
    }

    /// L2 norm of the difference of |psi|^2 against another grid (same x).
    pub fn l2_density_diff(&self, other: &WavefunctionGrid) -> f64 {
        let dx = self.dx();
        let sum: f64 = self
            .psi
            .iter()
            .zip(&other.psi)
            .map(|(a, b)| (a.norm_sqr() - b.norm_sqr()).powi(2))
            .sum();
        (sum * dx).sqrt()
    }

    /// L2 norm of the amplitude difference up to a global phase.
    pub fn l2_amplitude_diff(&self, other: &WavefunctionGrid) -> f64 {
        let dx = self.dx();
        // align global phase by the overlap argument
        let ovl: Complex64 = self.psi.iter().zip(&other.psi).map(|(a, b)| a.conj() * b).sum();
        let phase = if ovl.norm() > 0.0 { ovl / ovl.norm() } else { Complex64::new(1.0, 0.0) };
        let sum: f64 =
            self.psi.iter().zip(&other.psi).map(|(a, b)| (a * phase - b).norm_sqr()).sum();
        (sum * dx).sqrt()
    }
}

/// Sum the valid Gaussian contributions on `x_grid`.
///
/// Summation runs in sample-index order so identical configurations yield
/// bitwise-identical output.
pub fn reconstruct(
    samples: &[FincoSample],
    x_grid: &[f64],
    gamma_f: f64,
    t_final: f64,
) -> Result<WavefunctionGrid> {
    if !samples.iter().any(|s| s.is_valid()) {
        return Err(FincoError::EmptyReconstruction);
    }
    let prefactor = (2.0 * gamma_f / std::f64::consts::PI).powf(0.25);
    let mut psi = vec![Complex64::new(0.0, 0.0); x_grid.len()];
    for s in samples {
        if !s.is_valid() || s.weight == Complex64::new(0.0, 0.0) {
            continue;
        }
        let coeff = s.weight * prefactor;
        for (p, &x) in psi.iter_mut().zip(x_grid) {
            let dx = x - s.qf;
            let arg = Complex64::new(-gamma_f * dx * dx, s.pf * dx);
            *p += coeff * arg.exp();
        }
    }
    Ok(WavefunctionGrid::new(x_grid.to_vec(), psi, t_final))
}

/// Analytic initial Gaussian sampled on a grid; the t = 0 reference.
pub fn gaussian_on_grid(g: &InitialGaussian, x_grid: &[f64]) -> WavefunctionGrid {
    let pref = (2.0 * g.gamma0 / std::f64::consts::PI).powf(0.25);
    let psi = x_grid
        .iter()
        .map(|&x| {
            let dx = x - g.q0;
            pref * Complex64::new(-g.gamma0 * dx * dx, g.p0 * dx).exp()
        })
        .collect();
    WavefunctionGrid::new(x_grid.to_vec(), psi, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{ContourFamily, TimeContour};
    use crate::dynamics::{init_from_gaussian, propagate, StepperOpts};
    use crate::potentials::PotentialModel;
    use crate::sampling::{ManifoldGrid, Rect};
    use proptest::prelude::*;

    #[test]
    fn hh_examples() {
        assert_eq!(hh_transform(Complex64::new(2.0, 0.0), Complex64::new(3.0, 0.0), 0.5), (2.0, 3.0));
        assert_eq!(hh_transform(Complex64::new(1.0, 1.0), Complex64::new(0.0, 0.0), 0.5), (1.0, -1.0));
        assert_eq!(hh_transform(Complex64::new(0.0, 0.0), Complex64::new(0.0, 1.0), 0.5), (1.0, 0.0));
    }

    proptest! {
        #[test]
        fn hh_round_trip(qr in -10.0..10.0f64, qi in -5.0..5.0f64,
                         pr in -10.0..10.0f64, pi in -5.0..5.0f64,
                         gf in 0.1..3.0f64) {
            let qt = Complex64::new(qr, qi);
            let pt = Complex64::new(pr, pi);
            let (qf, pf) = hh_transform(qt, pt, gf);
            let xi_traj = 2.0 * gf * qt - Complex64::i() * pt;
            let xi_center = Complex64::new(2.0 * gf * qf, -pf);
            prop_assert!((xi_traj - xi_center).norm() < 1e-12 * xi_traj.norm().max(1.0));
        }
    }

    #[test]
    fn jacobian_identity_monodromy() {
        let g = InitialGaussian { gamma0: 0.5, q0: 0.0, p0: 0.0 };
        let s = init_from_gaussian(&g, Complex64::new(0.3, 0.1), 0.5);
        let j = jacobian_magnitude(&s, s.s2(), 0.5);
        assert!((j - 4.0).abs() < 1e-14);
        // and it agrees with |D|^2 / (2 gamma_f)
        let d = caustic_denominator(&s, 0.5);
        assert!((j - d.norm_sqr()).abs() < 1e-14);
    }

    #[test]
    fn zero_time_self_overlap_weight() {
        let g = InitialGaussian { gamma0: 0.5, q0: 9.342, p0: 0.0 };
        let s = init_from_gaussian(&g, Complex64::new(9.342, 0.0), 0.5);
        let contour = TimeContour::make(ContourFamily::Real, 1e-9, 0.0, (0.0, 1.0)).unwrap();
        let rec = propagate(&s, &contour, &PotentialModel::FreeParticle, &StepperOpts::default(), &[]);
        let da = 0.01;
        let sample = sample_weight(&rec, &g, 0.5, da);
        let expected = da * sample.jac_mag / (2.0 * std::f64::consts::PI);
        assert!((sample.weight.norm() - expected).abs() < 1e-9);
        assert!((sample.jac_mag - 4.0).abs() < 1e-6);
    }

    #[test]
    fn weight_vanishes_at_caustic_like_d_3_2() {
        // synthetic family: scale (Pz, Z) so D sweeps through zero
        let g = InitialGaussian { gamma0: 0.5, q0: 0.0, p0: 0.0 };
        let gamma_f = 0.5;
        let mut mags = Vec::new();
        for eps in [1e-1, 1e-2, 1e-3, 1e-4] {
            let mut s = init_from_gaussian(&g, Complex64::new(0.2, 0.1), gamma_f);
            // choose Pz so that D = 2 gf Z - i Pz = eps
            s.z = Complex64::new(1.0, 0.0);
            s.pz = (2.0 * gamma_f * s.z - Complex64::new(eps, 0.0)) / Complex64::i();
            let rec = TrajectoryRecord {
                q_init: s.qt,
                final_state: s,
                checkpoints: vec![],
                max_abs_im_q: 0.0,
                min_re_v: 0.0,
                final_re_v: 0.0,
                min_abs_d: eps,
                rejected_steps: 0,
            };
            mags.push(sample_weight(&rec, &g, gamma_f, 1.0).weight.norm());
        }
        for w in mags.windows(2) {
            // each decade in D cuts |weight| by ~10^{1.5}
            let ratio = w[0] / w[1];
            assert!(ratio > 20.0 && ratio < 50.0, "ratio {ratio}");
        }
        assert!(mags[3] < 1e-4);
    }

    fn dummy_record(s_kin_im: f64, min_re_v: f64) -> (TrajectoryRecord, FincoSample) {
        let g = InitialGaussian { gamma0: 0.5, q0: 0.0, p0: 0.0 };
        let mut s = init_from_gaussian(&g, Complex64::new(0.0, 0.0), 0.5);
        s.s_kin = Complex64::new(0.0, s_kin_im);
        let rec = TrajectoryRecord {
            q_init: s.qt,
            final_state: s,
            checkpoints: vec![],
            max_abs_im_q: 0.0,
            min_re_v,
            final_re_v: min_re_v,
            min_abs_d: 1.0,
            rejected_steps: 0,
        };
        let sample = sample_weight(&rec, &g, 0.5, 1.0);
        (rec, sample)
    }

    #[test]
    fn sigma_filter_rejects() {
        let (rec, sample) = dummy_record(-3.0, 0.0);
        let out = apply_filters(&rec, &sample, &FilterThresholds::default());
        assert_eq!(out.rejection, Some(Rejection::KineticAction));
        assert_eq!(out.weight, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn nu_filter_rejects() {
        let (rec, sample) = dummy_record(0.0, -25.0);
        let out = apply_filters(&rec, &sample, &FilterThresholds::default());
        assert_eq!(out.rejection, Some(Rejection::PotentialDivergence));
    }

    #[test]
    fn epsilon_filter_keeps_moderate_magnitudes() {
        let (rec, mut sample) = dummy_record(0.0, 0.0);
        sample.jac_overlap_mag = 1e3;
        let out = apply_filters(&rec, &sample, &FilterThresholds::default());
        assert!(out.is_valid());
        sample.jac_overlap_mag = 1e5;
        let out = apply_filters(&rec, &sample, &FilterThresholds::default());
        assert_eq!(out.rejection, Some(Rejection::NoiseMagnitude));
    }

    #[test]
    fn empty_reconstruction_is_an_error() {
        let (_, mut sample) = dummy_record(0.0, 0.0);
        sample.rejection = Some(Rejection::Invalid);
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(
            reconstruct(&[sample], &x, 0.5, 0.0),
            Err(FincoError::EmptyReconstruction)
        ));
    }

    /// t = 0 reconstruction over the manifold grid reproduces the initial state.
    #[test]
    fn zero_time_identity() {
        let g = InitialGaussian { gamma0: 0.5, q0: 9.342, p0: 0.0 };
        let gamma_f = 0.5;
        let rect = Rect { re_min: 9.342 - 4.0, re_max: 9.342 + 4.0, im_min: -4.0, im_max: 4.0 };
        let grid = ManifoldGrid::uniform(rect, 60, 60).unwrap();
        let samples: Vec<FincoSample> = grid
            .points
            .iter()
            .map(|p| {
                let s = init_from_gaussian(&g, p.q, gamma_f);
                let rec = TrajectoryRecord {
                    q_init: p.q,
                    final_state: s,
                    checkpoints: vec![],
                    max_abs_im_q: p.q.im.abs(),
                    min_re_v: 0.0,
                    final_re_v: 0.0,
                    min_abs_d: 1.0,
                    rejected_steps: 0,
                };
                sample_weight(&rec, &g, gamma_f, p.weight)
            })
            .collect();
        let x: Vec<f64> = (0..200).map(|i| 4.0 + i as f64 * 0.05).collect();
        let rec = reconstruct(&samples, &x, gamma_f, 0.0).unwrap();
        let exact = gaussian_on_grid(&g, &x);
        let linf = rec
            .psi
            .iter()
            .zip(&exact.psi)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        assert!(linf < 1e-4, "Linf = {linf}");
        assert!((rec.norm - 1.0).abs() < 1e-4, "norm = {}", rec.norm);
    }

    /// Reconstructions of the t = 0 state agree across gamma_f choices.
    #[test]
    fn gamma_f_independence_at_zero_time() {
        let g = InitialGaussian { gamma0: 0.5, q0: 0.0, p0: 0.0 };
        let rect = Rect { re_min: -4.5, re_max: 4.5, im_min: -4.5, im_max: 4.5 };
        let x: Vec<f64> = (0..200).map(|i| -5.0 + i as f64 * 0.05).collect();
        let mut results = Vec::new();
        for gamma_f in [0.25, 0.5, 1.0] {
            let grid = ManifoldGrid::uniform(rect, 80, 80).unwrap();
            let samples: Vec<FincoSample> = grid
                .points
                .iter()
                .map(|p| {
                    let s = init_from_gaussian(&g, p.q, gamma_f);
                    let rec = TrajectoryRecord {
                        q_init: p.q,
                        final_state: s,
                        checkpoints: vec![],
                        max_abs_im_q: p.q.im.abs(),
                        min_re_v: 0.0,
                        min_abs_d: 1.0,
                        rejected_steps: 0,
                    };
                    sample_weight(&rec, &g, gamma_f, p.weight)
                })
                .collect();
            results.push(reconstruct(&samples, &x, gamma_f, 0.0).unwrap());
        }
        for pair in results.windows(2) {
            let diff = pair[0].l2_amplitude_diff(&pair[1]);
            assert!(diff < 1e-3, "L2 diff {diff}");
        }
    }
}
