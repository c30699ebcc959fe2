//! Complexified classical trajectories with action, linearization and
//! monodromy, propagated along a complex time contour.
//!
//! The state follows the N = 2 truncation of the complex-action hierarchy:
//! classical motion for (q, p), classical action, kinetic action, the
//! (P_z, Z) linearization of the Riccati variable S_2 = P_z / Z, and the
//! 2x2 monodromy matrix. The phases of Z and of D = 2 gamma_f Z - i P_z are
//! unwrapped continuously along the contour by the stepper itself; a step
//! is halved whenever either phase would advance by pi/2 or more.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::TimeContour;
use crate::error::Result;
use crate::potentials::PotentialModel;

/// Normalized Gaussian initial state `(2 g0/pi)^{1/4} e^{-g0 (x-q0)^2 + i p0 (x-q0)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialGaussian {
    pub gamma0: f64,
    pub q0: f64,
    pub p0: f64,
}

/// Why a trajectory was dropped from reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Fault {
    /// State overflowed or produced a non-finite component.
    NonFinite,
    /// Adaptive step size underflowed near a dynamical singularity.
    StepCollapse,
}

const N_COMP: usize = 10;
type StateVec = [Complex64; N_COMP];

const IDX_Q: usize = 0;
const IDX_P: usize = 1;
const IDX_S0: usize = 2;
const IDX_SKIN: usize = 3;
const IDX_PZ: usize = 4;
const IDX_Z: usize = 5;
const IDX_MPP: usize = 6;
const IDX_MPQ: usize = 7;
const IDX_MQP: usize = 8;
const IDX_MQQ: usize = 9;

/// Full dynamical state of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    /// Complex position q~(t).
    pub qt: Complex64,
    /// Complex momentum p~(t) = S_1.
    pub pt: Complex64,
    /// Classical action (potential + kinetic parts).
    pub s0_cl: Complex64,
    /// Kinetic action integral of p~^2 / 2.
    pub s_kin: Complex64,
    pub pz: Complex64,
    pub z: Complex64,
    /// Monodromy matrix rows (M_pp, M_pq; M_qp, M_qq).
    pub m: [[Complex64; 2]; 2],
    /// Unwrapped phase of D(t) = 2 gamma_f Z - i P_z.
    pub arg_d: f64,
    /// Unwrapped phase of Z(t).
    pub arg_z: f64,
    pub fault: Option<Fault>,
}

impl TrajectoryState {
    /// S_2(t) = P_z / Z wherever Z != 0.
    pub fn s2(&self) -> Complex64 {
        self.pz / self.z
    }

    pub fn det_m(&self) -> Complex64 {
        self.m[0][0] * self.m[1][1] - self.m[0][1] * self.m[1][0]
    }

    fn to_vec(&self) -> StateVec {
        [
            self.qt, self.pt, self.s0_cl, self.s_kin, self.pz, self.z, self.m[0][0],
            self.m[0][1], self.m[1][0], self.m[1][1],
        ]
    }

    fn with_vec(&self, y: &StateVec) -> TrajectoryState {
        TrajectoryState {
            qt: y[IDX_Q],
            pt: y[IDX_P],
            s0_cl: y[IDX_S0],
            s_kin: y[IDX_SKIN],
            pz: y[IDX_PZ],
            z: y[IDX_Z],
            m: [[y[IDX_MPP], y[IDX_MPQ]], [y[IDX_MQP], y[IDX_MQQ]]],
            ..*self
        }
    }
}

/// Prefactor denominator D(t) = 2 gamma_f Z(t) - i P_z(t).
pub fn caustic_denominator(state: &TrajectoryState, gamma_f: f64) -> Complex64 {
    2.0 * gamma_f * state.z - Complex64::i() * state.pz
}

/// Initial conditions from S_n(t0) = -i d^n/dq^n ln Psi(q, t0).
pub fn init_from_gaussian(g: &InitialGaussian, q_init: Complex64, gamma_f: f64) -> TrajectoryState {
    let dq = q_init - g.q0;
    let i = Complex64::i();
    let s0 = i * g.gamma0 * dq * dq + g.p0 * dq
        - i / 4.0 * Complex64::new((2.0 * g.gamma0 / std::f64::consts::PI).ln(), 0.0);
    let s1 = 2.0 * i * g.gamma0 * dq + g.p0;
    let s2 = 2.0 * i * g.gamma0;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let state = TrajectoryState {
        qt: q_init,
        pt: s1,
        s0_cl: s0,
        s_kin: zero,
        pz: s2,
        z: one,
        m: [[one, zero], [zero, one]],
        arg_d: 0.0,
        arg_z: 0.0,
        fault: None,
    };
    debug_assert!(caustic_denominator(&state, gamma_f).re > 0.0);
    state
}

fn rhs(model: &PotentialModel, y: &StateVec, out: &mut StateVec) -> Result<()> {
    let [v0, v1, v2] = model.v012(y[IDX_Q])?;
    let p = y[IDX_P];
    let half_p2 = 0.5 * p * p;
    out[IDX_Q] = p;
    out[IDX_P] = -v1;
    out[IDX_S0] = -v0 + half_p2;
    out[IDX_SKIN] = half_p2;
    out[IDX_PZ] = -v2 * y[IDX_Z];
    out[IDX_Z] = y[IDX_PZ];
    out[IDX_MPP] = -v2 * y[IDX_MQP];
    out[IDX_MPQ] = -v2 * y[IDX_MQQ];
    out[IDX_MQP] = y[IDX_MPP];
    out[IDX_MQQ] = y[IDX_MPQ];
    Ok(())
}

/// Settings for the adaptive embedded Runge-Kutta 4/5 stepper.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepperOpts {
    pub dt_max: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Final-Gaussian width entering D(t); fixed per run.
    pub gamma_f: f64,
}

impl Default for StepperOpts {
    fn default() -> Self {
        StepperOpts { dt_max: 0.1, abs_tol: 1e-12, rel_tol: 1e-10, gamma_f: 0.5 }
    }
}

/// Per-trajectory summary produced by [`propagate`].
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    pub q_init: Complex64,
    pub final_state: TrajectoryState,
    /// States captured where the contour passes through requested real times.
    pub checkpoints: Vec<(Complex64, TrajectoryState)>,
    pub max_abs_im_q: f64,
    pub min_re_v: f64,
    /// Re V(q~(t_final)); the divergence filter tests the endpoint because
    /// excursions below the threshold recover at later times.
    pub final_re_v: f64,
    pub min_abs_d: f64,
    pub rejected_steps: usize,
}

impl TrajectoryRecord {
    pub fn is_valid(&self) -> bool {
        self.final_state.fault.is_none()
    }
}

// Dormand-Prince 5(4) tableau.
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] =
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const OVERFLOW_LIMIT: f64 = 1e120;
const MAX_STEPS: usize = 5_000_000;

fn finite(y: &StateVec) -> bool {
    y.iter().all(|c| c.re.is_finite() && c.im.is_finite() && c.norm_sqr() < OVERFLOW_LIMIT)
}

/// One embedded RK step with complex time increment `dt`.
/// Returns (y5, error_estimate_norm) or Err from the potential.
fn rk_step(
    model: &PotentialModel,
    y: &StateVec,
    k0: &StateVec,
    dt: Complex64,
    opts: &StepperOpts,
) -> Result<(StateVec, f64)> {
    let mut k = [[Complex64::default(); N_COMP]; 7];
    k[0] = *k0;
    for s in 0..6 {
        let mut ys = *y;
        for (j, kj) in k.iter().enumerate().take(s + 1) {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N_COMP {
                    ys[i] += dt * a * kj[i];
                }
            }
        }
        if !finite(&ys) {
            return Ok((ys, f64::INFINITY));
        }
        let mut ks = [Complex64::default(); N_COMP];
        rhs(model, &ys, &mut ks)?;
        if s < 5 {
            k[s + 1] = ks;
        } else {
            k[6] = ks;
        }
    }
    let mut y5 = *y;
    let mut y4 = *y;
    for (j, kj) in k.iter().enumerate() {
        for i in 0..N_COMP {
            if B5[j] != 0.0 {
                y5[i] += dt * B5[j] * kj[i];
            }
            if B4[j] != 0.0 {
                y4[i] += dt * B4[j] * kj[i];
            }
        }
    }
    let mut err: f64 = 0.0;
    for i in 0..N_COMP {
        let scale = opts.abs_tol + opts.rel_tol * y[i].norm().max(y5[i].norm());
        err = err.max((y5[i] - y4[i]).norm() / scale);
    }
    Ok((y5, err))
}

fn wrap_phase(d: f64) -> f64 {
    let mut d = d % (2.0 * std::f64::consts::PI);
    if d > std::f64::consts::PI {
        d -= 2.0 * std::f64::consts::PI;
    } else if d < -std::f64::consts::PI {
        d += 2.0 * std::f64::consts::PI;
    }
    d
}

/// Integrate a trajectory along the contour to its real final time.
///
/// `checkpoint_times` are real times at which the state is captured when the
/// contour passes through them on the real axis (always includes none by
/// default; the final state is reported separately). Faults mark the record
/// invalid instead of failing the run.
pub fn propagate(
    state0: &TrajectoryState,
    contour: &TimeContour,
    model: &PotentialModel,
    opts: &StepperOpts,
    checkpoint_times: &[f64],
) -> TrajectoryRecord {
    let mut record = TrajectoryRecord {
        q_init: state0.qt,
        final_state: *state0,
        checkpoints: Vec::new(),
        max_abs_im_q: state0.qt.im.abs(),
        min_re_v: f64::INFINITY,
        final_re_v: f64::INFINITY,
        min_abs_d: caustic_denominator(state0, opts.gamma_f).norm(),
        rejected_steps: 0,
    };
    if let Ok([v0, _, _]) = model.v012(state0.qt) {
        record.min_re_v = v0.re;
    }

    let mut y = state0.to_vec();
    let mut arg_d = state0.arg_d;
    let mut arg_z = state0.arg_z;
    let mut d_prev = caustic_denominator(state0, opts.gamma_f);
    let mut z_prev = state0.z;
    let mut n_steps = 0usize;

    // splice checkpoint times into real-axis segments
    let mut targets: Vec<Complex64> = Vec::new();
    {
        let wp = contour.waypoints();
        for w in wp.windows(2) {
            if w[0].im == 0.0 && w[1].im == 0.0 {
                let mut inner: Vec<f64> = checkpoint_times
                    .iter()
                    .copied()
                    .filter(|&t| t > w[0].re && t < w[1].re)
                    .collect();
                inner.sort_by(|a, b| a.partial_cmp(b).unwrap());
                for t in inner {
                    targets.push(Complex64::new(t, 0.0));
                }
            }
            targets.push(w[1]);
        }
    }

    let fault = 'outer: {
        let mut pos = Complex64::new(0.0, 0.0);
        for target in &targets {
            let seg = target - pos;
            let seg_len = seg.norm();
            if seg_len == 0.0 {
                continue;
            }
            let dir = seg / seg_len;
            let mut s = 0.0; // arc-length parameter within the segment
            let mut h = opts.dt_max.min(seg_len);
            while s < seg_len * (1.0 - 1e-13) {
                if n_steps > MAX_STEPS {
                    break 'outer Some(Fault::StepCollapse);
                }
                // land exactly on the waypoint when within reach
                let remaining = seg_len - s;
                let is_last = h >= remaining * (1.0 - 1e-13);
                if is_last {
                    h = remaining;
                } else if h < 1e-13 * seg_len.max(1.0) {
                    break 'outer Some(Fault::StepCollapse);
                }
                let mut k0 = [Complex64::default(); N_COMP];
                if rhs(model, &y, &mut k0).is_err() {
                    break 'outer Some(Fault::NonFinite);
                }
                let dt = dir * h;
                let (y_new, err) = match rk_step(model, &y, &k0, dt, opts) {
                    Ok(r) => r,
                    Err(_) => break 'outer Some(Fault::NonFinite),
                };
                n_steps += 1;
                let mut accept = err <= 1.0 && finite(&y_new);
                let mut d_inc = 0.0;
                let mut z_inc = 0.0;
                if accept {
                    let d_new = 2.0 * opts.gamma_f * y_new[IDX_Z] - Complex64::i() * y_new[IDX_PZ];
                    d_inc = wrap_phase(d_new.arg() - d_prev.arg());
                    z_inc = wrap_phase(y_new[IDX_Z].arg() - z_prev.arg());
                    // phase-continuity guard: halve the step near caustic winding
                    if d_inc.abs() >= std::f64::consts::FRAC_PI_2
                        || z_inc.abs() >= std::f64::consts::FRAC_PI_2
                    {
                        accept = false;
                    }
                }
                if accept {
                    s = if is_last { seg_len } else { s + h };
                    y = y_new;
                    arg_d += d_inc;
                    arg_z += z_inc;
                    d_prev = 2.0 * opts.gamma_f * y[IDX_Z] - Complex64::i() * y[IDX_PZ];
                    z_prev = y[IDX_Z];
                    record.max_abs_im_q = record.max_abs_im_q.max(y[IDX_Q].im.abs());
                    record.min_abs_d = record.min_abs_d.min(d_prev.norm());
                    if let Ok([v0, _, _]) = model.v012(y[IDX_Q]) {
                        record.min_re_v = record.min_re_v.min(v0.re);
                    }
                    let factor = if err > 0.0 {
                        (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                    } else {
                        5.0
                    };
                    h = (h * factor).min(opts.dt_max);
                } else {
                    record.rejected_steps += 1;
                    let factor = if err.is_finite() && err > 1.0 {
                        (0.9 * err.powf(-0.2)).clamp(0.1, 0.5)
                    } else {
                        0.5
                    };
                    h *= factor;
                }
            }
            if target.im == 0.0
                && checkpoint_times.iter().any(|&t| (t - target.re).abs() < 1e-12)
            {
                let mut st = state0.with_vec(&y);
                st.arg_d = arg_d;
                st.arg_z = arg_z;
                record.checkpoints.push((*target, st));
            }
            pos = *target;
        }
        None
    };

    let mut final_state = state0.with_vec(&y);
    final_state.arg_d = arg_d;
    final_state.arg_z = arg_z;
    final_state.fault = fault;
    record.final_state = final_state;
    if let Ok([v0, _, _]) = model.v012(final_state.qt) {
        record.final_re_v = v0.re;
    }
    record
}
