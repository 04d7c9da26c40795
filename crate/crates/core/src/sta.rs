//! Dressed-state shortcut construction for the three-level Lambda system
//! `|1>, |2>` coupled through `|3>`, and the concrete pulse families driving
//! the gate.
//!
//! Sign convention: the designed pulses use
//! `Omega_1 = (theta' cos(theta) cot(beta) - beta' sin(theta)) / N3` and
//! `Omega_3 = (theta' sin(theta) cot(beta) + beta' cos(theta)) / N3`.
//! The raw dressed-frame pulses `Omega_1m, Omega_2m` carry the opposite
//! global sign, which is the same as flipping `beta -> -beta`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Guard interval (fraction of the duration) for one-sided limits at zeros of `beta`.
pub const GUARD_FRACTION: f64 = 1e-8;
/// Default bound on `|theta' cot(beta)|` (in units of `1/T`) before a schedule is declared singular.
pub const DEFAULT_SINGULAR_BOUND: f64 = 1e6;
/// Number of Simpson intervals used for the accumulated phase.
pub const SIMPSON_INTERVALS: usize = 10_000;

/// Mixing angles `theta(t)`, `beta(t)` and their time derivatives.
pub trait AngleSchedule: fmt::Debug + Send + Sync {
    fn duration(&self) -> f64;
    fn theta(&self, t: f64) -> f64;
    fn theta_dot(&self, t: f64) -> f64;
    fn beta(&self, t: f64) -> f64;
    fn beta_dot(&self, t: f64) -> f64;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaForm {
    /// `beta = A sin^2(pi t / T)`.
    Repaired,
    /// `beta = A sin^2(2 pi t / T)`; vanishes at `T/2` where `theta'` does not.
    Printed,
}

/// `theta = -pi (2 + cos(pi t/T)) sin^4(pi t / 2T)` with the chosen `beta` form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PaperSchedule {
    pub amplitude: f64,
    pub duration: f64,
    pub beta_form: BetaForm,
}

pub fn paper_angle_schedule(amplitude: f64, duration: f64) -> Result<PaperSchedule> {
    PaperSchedule::new(amplitude, duration, BetaForm::Repaired)
}

impl PaperSchedule {
    pub fn new(amplitude: f64, duration: f64, beta_form: BetaForm) -> Result<Self> {
        if !(amplitude > 0.0 && amplitude < PI / 2.0) {
            return Err(Error::InvalidParameter(format!(
                "beta amplitude A = {amplitude} must lie in (0, pi/2)"
            )));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration {duration} must be positive")));
        }
        Ok(Self {
            amplitude,
            duration,
            beta_form,
        })
    }

    fn beta_freq(&self) -> f64 {
        match self.beta_form {
            BetaForm::Repaired => PI / self.duration,
            BetaForm::Printed => 2.0 * PI / self.duration,
        }
    }
}

impl AngleSchedule for PaperSchedule {
    fn duration(&self) -> f64 {
        self.duration
    }

    fn theta(&self, t: f64) -> f64 {
        let u = PI * t / self.duration;
        -PI * (2.0 + u.cos()) * (u / 2.0).sin().powi(4)
    }

    fn theta_dot(&self, t: f64) -> f64 {
        let u = PI * t / self.duration;
        -(3.0 * PI * PI / (4.0 * self.duration)) * u.sin().powi(3)
    }

    fn beta(&self, t: f64) -> f64 {
        self.amplitude * (self.beta_freq() * t).sin().powi(2)
    }

    fn beta_dot(&self, t: f64) -> f64 {
        let w = self.beta_freq();
        self.amplitude * w * (2.0 * w * t).sin()
    }
}

/// `theta = omega t`, constant `beta`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearSchedule {
    pub omega: f64,
    pub beta: f64,
    pub duration: f64,
}

impl AngleSchedule for LinearSchedule {
    fn duration(&self) -> f64 {
        self.duration
    }
    fn theta(&self, t: f64) -> f64 {
        self.omega * t
    }
    fn theta_dot(&self, _t: f64) -> f64 {
        self.omega
    }
    fn beta(&self, _t: f64) -> f64 {
        self.beta
    }
    fn beta_dot(&self, _t: f64) -> f64 {
        0.0
    }
}

/// The wrapped schedule with `beta -> -beta`.
#[derive(Clone, Copy, Debug)]
pub struct NegatedBeta<S>(pub S);

impl<S: AngleSchedule> AngleSchedule for NegatedBeta<S> {
    fn duration(&self) -> f64 {
        self.0.duration()
    }
    fn theta(&self, t: f64) -> f64 {
        self.0.theta(t)
    }
    fn theta_dot(&self, t: f64) -> f64 {
        self.0.theta_dot(t)
    }
    fn beta(&self, t: f64) -> f64 {
        -self.0.beta(t)
    }
    fn beta_dot(&self, t: f64) -> f64 {
        -self.0.beta_dot(t)
    }
}

/// The wrapped schedule with `theta` multiplied by a constant factor.
#[derive(Clone, Copy, Debug)]
pub struct ScaledTheta<S> {
    pub inner: S,
    pub factor: f64,
}

impl<S: AngleSchedule> AngleSchedule for ScaledTheta<S> {
    fn duration(&self) -> f64 {
        self.inner.duration()
    }
    fn theta(&self, t: f64) -> f64 {
        self.factor * self.inner.theta(t)
    }
    fn theta_dot(&self, t: f64) -> f64 {
        self.factor * self.inner.theta_dot(t)
    }
    fn beta(&self, t: f64) -> f64 {
        self.inner.beta(t)
    }
    fn beta_dot(&self, t: f64) -> f64 {
        self.inner.beta_dot(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Angles {
    theta: f64,
    beta: f64,
    beta_dot: f64,
    /// `theta' cot(beta)`, limit-patched at zeros of `beta`.
    tc: f64,
    /// `theta' / sin(beta)`, limit-patched likewise.
    ts: f64,
}

fn raw_ratio(s: &dyn AngleSchedule, t: f64) -> (f64, f64) {
    let (sb, cb) = s.beta(t).sin_cos();
    let td = s.theta_dot(t);
    (td * cb / sb, td / sb)
}

fn angles(s: &dyn AngleSchedule, t: f64) -> Angles {
    let sb = s.beta(t).sin();
    let (tc, ts) = if sb.abs() < 1e-12 {
        let g = GUARD_FRACTION * s.duration();
        let (lo, hi) = (t - g >= 0.0, t + g <= s.duration());
        let pair = |x: (f64, f64), y: (f64, f64), a: f64, b: f64| (a * x.0 + b * y.0, a * x.1 + b * y.1);
        match (lo, hi) {
            (true, true) => pair(raw_ratio(s, t - g), raw_ratio(s, t + g), 0.5, 0.5),
            (false, true) => pair(raw_ratio(s, t + g), raw_ratio(s, t + 2.0 * g), 2.0, -1.0),
            (true, false) => pair(raw_ratio(s, t - g), raw_ratio(s, t - 2.0 * g), 2.0, -1.0),
            (false, false) => (0.0, 0.0),
        }
    } else {
        raw_ratio(s, t)
    };
    Angles {
        theta: s.theta(t),
        beta: s.beta(t),
        beta_dot: s.beta_dot(t),
        tc,
        ts,
    }
}

fn check_bound(t: f64, a: &Angles, bound: f64) -> Result<()> {
    if !a.tc.is_finite() || a.tc.abs() > bound {
        return Err(Error::SingularSchedule {
            t,
            detail: format!(
                "|theta' cot(beta)| = {:.3e} exceeds bound {bound:.1e}",
                a.tc.abs()
            ),
        });
    }
    Ok(())
}

/// Dressed-frame pulses `(Omega_1m, Omega_2m)` coupling `|1>-|3>` and `|2>-|3>`.
pub fn dsbs_modified_pulses(s: &dyn AngleSchedule, t: f64) -> Result<(f64, f64)> {
    dsbs_modified_pulses_bounded(s, t, DEFAULT_SINGULAR_BOUND / s.duration())
}

pub fn dsbs_modified_pulses_bounded(s: &dyn AngleSchedule, t: f64, bound: f64) -> Result<(f64, f64)> {
    let a = angles(s, t);
    check_bound(t, &a, bound)?;
    Ok(modified_from(&a))
}

fn modified_from(a: &Angles) -> (f64, f64) {
    let (st, ct) = a.theta.sin_cos();
    (
        -a.tc * st - a.beta_dot * ct,
        -a.tc * ct + a.beta_dot * st,
    )
}

/// Scans a uniform 2001-point grid (endpoints and midpoint included) and
/// fails at the point of largest `|theta' cot(beta)|` if that exceeds `bound`.
pub fn validate_schedule(s: &dyn AngleSchedule, bound: f64) -> Result<()> {
    let n = 2000;
    let mut worst: Option<(f64, Angles)> = None;
    for k in 0..=n {
        let t = s.duration() * k as f64 / n as f64;
        let a = angles(s, t);
        let bad = !a.tc.is_finite();
        if bad || worst.is_none_or(|(_, w)| a.tc.abs() > w.tc.abs()) {
            worst = Some((t, a));
            if bad {
                break;
            }
        }
    }
    match worst {
        Some((t, a)) => check_bound(t, &a, bound),
        None => Ok(()),
    }
}

/// `varsigma(t) = -int_0^t theta'/sin(beta)`, composite Simpson with
/// [`SIMPSON_INTERVALS`] intervals on `[0, t]`.
pub fn varsigma(s: &dyn AngleSchedule, t: f64) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    let n = SIMPSON_INTERVALS;
    let h = t / n as f64;
    let f = |x: f64| angles(s, x).ts;
    let mut acc = f(0.0) + f(t);
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(k as f64 * h);
    }
    -acc * h / 3.0
}

/// `xi_0, xi_1, xi_2` over `(|1>, |2>, |3>)`.
pub fn evolution_states(s: &dyn AngleSchedule, t: f64) -> [Vector3<C64>; 3] {
    evolution_states_with_phase(s, t, varsigma(s, t))
}

/// Same as [`evolution_states`] with a precomputed phase.
pub fn evolution_states_with_phase(s: &dyn AngleSchedule, t: f64, phase: f64) -> [Vector3<C64>; 3] {
    let (st, ct) = s.theta(t).sin_cos();
    let (sb, cb) = s.beta(t).sin_cos();
    let r = |x: f64| C64::new(x, 0.0);
    let xi0 = Vector3::new(r(ct * cb), r(-st * cb), C64::new(0.0, sb));
    let k = std::f64::consts::FRAC_1_SQRT_2;
    let e_minus = C64::from_polar(k, -phase);
    let e_plus = C64::from_polar(k, phase);
    let xi1 = Vector3::new(C64::new(st, ct * sb), C64::new(ct, -st * sb), r(cb)) * e_minus;
    let xi2 = Vector3::new(C64::new(st, -ct * sb), C64::new(ct, st * sb), r(-cb)) * e_plus;
    [xi0, xi1, xi2]
}

/// `H_m = Omega_1m |1><3| + Omega_2m |2><3| + h.c.`
pub fn modified_hamiltonian(omega1m: f64, omega2m: f64) -> Matrix3<C64> {
    let r = |x: f64| C64::new(x, 0.0);
    let z = r(0.0);
    Matrix3::new(z, z, r(omega1m), z, z, r(omega2m), r(omega1m), r(omega2m), z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseFamily {
    Designed,
    Fitted,
    Adiabatic,
}

impl fmt::Display for PulseFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PulseFamily::Designed => "designed",
            PulseFamily::Fitted => "fitted",
            PulseFamily::Adiabatic => "adiabatic",
        })
    }
}

#[derive(Clone, Debug)]
enum PulseKind {
    Designed { schedule: Arc<dyn AngleSchedule>, n3: f64 },
    Fitted,
    /// Peak drive amplitude on the physical transitions.
    Adiabatic { amp: f64 },
}

/// Time-dependent drive amplitudes `Omega_1(t)` (atom 1) and `Omega_3(t)`
/// (atom 3) on `[0, duration]`.
#[derive(Clone, Debug)]
pub struct PulseSchedule {
    kind: PulseKind,
    duration: f64,
    scale: f64,
}

/// Shortcut pulses for a validated schedule and bright-state normalization `n3`.
pub fn designed_pulses(s: Arc<dyn AngleSchedule>, n3: f64) -> Result<PulseSchedule> {
    if !(n3 > 0.0 && n3.is_finite()) {
        return Err(Error::InvalidParameter(format!("N3 = {n3} must be positive")));
    }
    validate_schedule(s.as_ref(), DEFAULT_SINGULAR_BOUND / s.duration())?;
    Ok(PulseSchedule {
        duration: s.duration(),
        kind: PulseKind::Designed { schedule: s, n3 },
        scale: 1.0,
    })
}

/// `Omega_1 = 3/T sin(4 pi t/T) - 20/T sin(2 pi t/T)`,
/// `Omega_3 = 24.5/T exp(-((t - T/2) / 0.22T)^2)`.
pub fn fitted_pulses(duration: f64) -> Result<PulseSchedule> {
    check_duration(duration)?;
    Ok(PulseSchedule {
        kind: PulseKind::Fitted,
        duration,
        scale: 1.0,
    })
}

/// `Omega_3 = amp sin^2(pi t/T)`, `Omega_1 = amp sin(pi t/T) cos(pi t/T)` with
/// `amp` the physical drive amplitude.
pub fn adiabatic_pulses(duration: f64, amp: f64) -> Result<PulseSchedule> {
    check_duration(duration)?;
    if !(amp > 0.0 && amp.is_finite()) {
        return Err(Error::InvalidParameter(format!("adiabatic amplitude {amp} must be positive")));
    }
    Ok(PulseSchedule {
        kind: PulseKind::Adiabatic { amp },
        duration,
        scale: 1.0,
    })
}

fn check_duration(duration: f64) -> Result<()> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidParameter(format!("duration {duration} must be positive")));
    }
    Ok(())
}

impl PulseSchedule {
    pub fn family(&self) -> PulseFamily {
        match self.kind {
            PulseKind::Designed { .. } => PulseFamily::Designed,
            PulseKind::Fitted => PulseFamily::Fitted,
            PulseKind::Adiabatic { .. } => PulseFamily::Adiabatic,
        }
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn amplitude_scale(&self) -> f64 {
        self.scale
    }

    /// Same waveform with both amplitudes multiplied by `factor`.
    pub fn with_amplitude_scale(mut self, factor: f64) -> Self {
        self.scale = factor;
        self
    }

    /// `(Omega_1(t), Omega_3(t))`.
    pub fn omegas(&self, t: f64) -> (f64, f64) {
        let (o1, o3) = match &self.kind {
            PulseKind::Designed { schedule, n3 } => {
                let a = angles(schedule.as_ref(), t);
                let (st, ct) = a.theta.sin_cos();
                (
                    (a.tc * ct - a.beta_dot * st) / n3,
                    (a.tc * st + a.beta_dot * ct) / n3,
                )
            }
            PulseKind::Fitted => {
                let tt = self.duration;
                let o1 = 3.0 / tt * (4.0 * PI * t / tt).sin() - 20.0 / tt * (2.0 * PI * t / tt).sin();
                let x = (t - 0.5 * tt) / (0.22 * tt);
                (o1, 24.5 / tt * (-x * x).exp())
            }
            PulseKind::Adiabatic { amp } => {
                let (s, c) = (PI * t / self.duration).sin_cos();
                (amp * s * c, amp * s * s)
            }
        };
        (self.scale * o1, self.scale * o3)
    }

    pub fn omega1(&self, t: f64) -> f64 {
        self.omegas(t).0
    }

    pub fn omega3(&self, t: f64) -> f64 {
        self.omegas(t).1
    }

    /// `(theta, beta)` for the designed family.
    pub fn angles(&self, t: f64) -> Option<(f64, f64)> {
        match &self.kind {
            PulseKind::Designed { schedule, .. } => Some((schedule.theta(t), schedule.beta(t))),
            _ => None,
        }
    }

    /// Largest `max(|Omega_1|, |Omega_3|)` on an `n + 1` point grid.
    pub fn peak(&self, n: usize) -> f64 {
        (0..=n)
            .map(|k| {
                let (a, b) = self.omegas(self.duration * k as f64 / n as f64);
                a.abs().max(b.abs())
            })
            .fold(0.0, f64::max)
    }
}

/// Mixing angle `zeta = atan2(Omega_3, Omega_1)` of the adiabatic family,
/// continued through `T/2`; runs from 0 to pi.
pub fn adiabatic_zeta(duration: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    if t >= duration {
        return PI;
    }
    let (s, c) = (PI * t / duration).sin_cos();
    (s * s).atan2(s * c)
}

/// Zero-energy eigenvector `cos(zeta)|1> - sin(zeta)|2>` of the effective
/// Hamiltonian, over `(|1>, |3>, |2>)` ordering used by the effective model.
pub fn adiabatic_dark_state(duration: f64, t: f64) -> Vector3<C64> {
    let (s, c) = adiabatic_zeta(duration, t).sin_cos();
    Vector3::new(C64::new(c, 0.0), C64::new(0.0, 0.0), C64::new(-s, 0.0))
}

/// Frame generators over `(phi_0, phi_+, phi_-)`.
pub fn frame_generators() -> [Matrix3<C64>; 3] {
    let k = std::f64::consts::FRAC_1_SQRT_2;
    let r = |x: f64| C64::new(x, 0.0);
    let i = |x: f64| C64::new(0.0, x);
    let z = r(0.0);
    let mx = Matrix3::new(z, r(-k), r(k), r(-k), z, z, r(k), z, z);
    let my = Matrix3::new(z, i(-k), i(-k), i(k), z, z, i(k), z, z);
    let mz = Matrix3::new(z, z, z, z, r(1.0), z, z, z, r(-1.0));
    [mx, my, mz]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FrameReport {
    pub samples: usize,
    /// Largest off-diagonal modulus of the doubly transformed Hamiltonian.
    pub max_offdiag: f64,
    pub max_offdiag_t: f64,
    /// Largest `|i d(xi_0)/dt - H_m xi_0|` (finite difference).
    pub max_tdse_residual: f64,
    pub max_tdse_t: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameCheckConfig {
    pub samples: usize,
    pub offdiag_tol: f64,
    pub tdse_tol: f64,
    /// Multiplier on `g_x`; 1 for the genuine construction.
    pub gx_scale: f64,
    /// Reference amplitude `Omega` of the bare Hamiltonian; cancels in the result.
    pub omega: f64,
}

impl Default for FrameCheckConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            offdiag_tol: 1e-10,
            tdse_tol: 1e-8,
            gx_scale: 1.0,
            omega: 1.0,
        }
    }
}

/// Builds `H_V = V H_U V^dag + i V' V^dag` with `V = exp(i beta M_x)` and
/// `H_U = (g_z + Omega) M_z + theta' M_y + g_x M_x` at interior sample times,
/// and checks it is diagonal, then checks `xi_0` against the Schrodinger
/// equation under the dressed-frame pulses.
pub fn verify_dressed_frame(s: &dyn AngleSchedule, cfg: &FrameCheckConfig) -> Result<FrameReport> {
    let [mx, my, mz] = frame_generators();
    let mx2 = mx * mx;
    let id = Matrix3::<C64>::identity();
    let tt = s.duration();
    let mut rep = FrameReport {
        samples: cfg.samples,
        max_offdiag: 0.0,
        max_offdiag_t: 0.0,
        max_tdse_residual: 0.0,
        max_tdse_t: 0.0,
    };
    let h = 1e-4 * tt;
    for k in 0..cfg.samples {
        let t = tt * (k as f64 + 0.5) / cfg.samples as f64;
        let a = angles(s, t);
        let gx = cfg.gx_scale * a.beta_dot;
        let gz = -cfg.omega - a.tc;
        let hu = mz * C64::new(gz + cfg.omega, 0.0) + my * C64::new(s.theta_dot(t), 0.0) + mx * C64::new(gx, 0.0);
        let (sb, cb) = a.beta.sin_cos();
        let v = id + mx * C64::new(0.0, sb) + mx2 * C64::new(cb - 1.0, 0.0);
        let hv = v * hu * v.adjoint() - mx * C64::new(a.beta_dot, 0.0);
        for r in 0..3 {
            for c in 0..3 {
                if r != c && hv[(r, c)].norm() > rep.max_offdiag {
                    rep.max_offdiag = hv[(r, c)].norm();
                    rep.max_offdiag_t = t;
                }
            }
        }
        if t - 2.0 * h > 0.0 && t + 2.0 * h < tt {
            let (o1m, o2m) = modified_from(&a);
            let hm = modified_hamiltonian(o1m, o2m);
            let xi = |x: f64| evolution_states_with_phase(s, x, 0.0)[0];
            let d = (xi(t - 2.0 * h) - xi(t + 2.0 * h) + (xi(t + h) - xi(t - h)) * C64::new(8.0, 0.0))
                / C64::new(12.0 * h, 0.0);
            let res = (d * C64::new(0.0, 1.0) - hm * xi(t)).norm();
            if res > rep.max_tdse_residual {
                rep.max_tdse_residual = res;
                rep.max_tdse_t = t;
            }
        }
    }
    if rep.max_offdiag > cfg.offdiag_tol {
        return Err(Error::FrameVerification {
            check: "off-diagonal H_V",
            residual: rep.max_offdiag,
            t: rep.max_offdiag_t,
        });
    }
    if rep.max_tdse_residual > cfg.tdse_tol {
        return Err(Error::FrameVerification {
            check: "xi_0 Schrodinger residual",
            residual: rep.max_tdse_residual,
            t: rep.max_tdse_t,
        });
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> PaperSchedule {
        paper_angle_schedule(0.55, 1.0).unwrap()
    }

    fn sqrt5_designed() -> PulseSchedule {
        designed_pulses(Arc::new(paper()), 1.0 / 5f64.sqrt()).unwrap()
    }

    #[test]
    fn boundary_values() {
        let s = paper();
        assert!(s.theta(0.0).abs() < 1e-12);
        assert!((s.theta(1.0) + PI).abs() < 1e-12);
        assert!(s.beta(0.0).abs() < 1e-12 && s.beta(1.0).abs() < 1e-12);
        assert!((s.theta(0.5) + PI / 2.0).abs() < 1e-12);
        assert!((s.theta_dot(0.5) + 3.0 * PI * PI / 4.0).abs() < 1e-12);
        assert!((s.beta(0.5) - 0.55).abs() < 1e-12);
    }

    #[test]
    fn amplitude_range_is_enforced() {
        assert!(paper_angle_schedule(0.0, 1.0).is_err());
        assert!(paper_angle_schedule(PI / 2.0, 1.0).is_err());
        assert!(paper_angle_schedule(0.5, -1.0).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for form in [BetaForm::Repaired, BetaForm::Printed] {
            let s = PaperSchedule::new(0.55, 2.0, form).unwrap();
            let h = 1e-6 * s.duration;
            for k in 1..20 {
                let t = s.duration * k as f64 / 20.0;
                let td = (s.theta(t + h) - s.theta(t - h)) / (2.0 * h);
                let bd = (s.beta(t + h) - s.beta(t - h)) / (2.0 * h);
                assert!((td - s.theta_dot(t)).abs() <= 1e-6 * s.theta_dot(t).abs().max(1.0));
                assert!((bd - s.beta_dot(t)).abs() <= 1e-6 * s.beta_dot(t).abs().max(1.0));
            }
        }
    }

    #[test]
    fn stationary_angles_give_no_pulse() {
        let s = LinearSchedule {
            omega: 0.0,
            beta: 0.3,
            duration: 1.0,
        };
        assert_eq!(dsbs_modified_pulses(&s, 0.4).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn right_angle_beta_gives_no_pulse() {
        let s = LinearSchedule {
            omega: 2.0,
            beta: PI / 2.0,
            duration: 1.0,
        };
        for k in 0..10 {
            let (a, b) = dsbs_modified_pulses(&s, k as f64 / 10.0).unwrap();
            assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
        }
    }

    #[test]
    fn designed_is_dsbs_with_negated_beta() {
        let p = sqrt5_designed();
        let n3 = 1.0 / 5f64.sqrt();
        let neg = NegatedBeta(paper());
        for k in 0..=50 {
            let t = k as f64 / 50.0;
            let (o1, o3) = p.omegas(t);
            let (m1, m2) = dsbs_modified_pulses(&neg, t).unwrap();
            assert!((o3 - m1 / n3).abs() < 1e-12, "t = {t}");
            assert!((o1 - m2 / n3).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn designed_values_at_quarter_and_half() {
        let p = sqrt5_designed();
        assert!((p.omega1(0.25) + 19.7).abs() < 0.5);
        assert!((p.omega3(0.5) - 27.0).abs() < 0.1);
        let expect = 5f64.sqrt() * 3.0 * PI * PI / 4.0 / 0.55f64.tan();
        assert!((p.omega3(0.5) - expect).abs() < 1e-10);
        assert!((p.peak(2000) - 28.0).abs() < 0.05 * 28.0);
    }

    #[test]
    fn endpoints_vanish() {
        let pulses = [sqrt5_designed(), adiabatic_pulses(1.0, 30.0).unwrap()];
        for p in &pulses {
            for t in [0.0, 1.0] {
                let (a, b) = p.omegas(t);
                assert!(a.abs() < 1e-9 && b.abs() < 1e-9, "{} at {t}", p.family());
            }
        }
        let (a, b) = pulses[0].omegas(1e-6);
        assert!(a.abs() < 1e-4 && b.abs() < 1e-4);
    }

    #[test]
    fn fitted_endpoints_carry_the_gaussian_tail() {
        let p = fitted_pulses(1.0).unwrap();
        let tail = 24.5 * (-(0.5f64 / 0.22).powi(2)).exp();
        for t in [0.0, 1.0] {
            assert!(p.omega1(t).abs() < 1e-9);
            assert!((p.omega3(t) - tail).abs() < 1e-12);
        }
    }

    #[test]
    fn fitted_values() {
        let p = fitted_pulses(1.0).unwrap();
        assert!(p.omega1(0.5).abs() < 1e-12);
        assert!((p.omega3(0.5) - 24.5).abs() < 1e-12);
        assert!((p.omega1(0.25) + 20.0).abs() < 1e-12);
    }

    #[test]
    fn adiabatic_values() {
        let p = adiabatic_pulses(2.0, 30.0).unwrap();
        assert!(p.omega1(1.0).abs() < 1e-12);
        assert!((p.omega3(1.0) - 30.0).abs() < 1e-12);
        assert_eq!(adiabatic_zeta(2.0, 0.0), 0.0);
        assert!((adiabatic_zeta(2.0, 2.0) - PI).abs() < 1e-12);
        let mut prev = -1.0;
        for k in 0..=100 {
            let z = adiabatic_zeta(2.0, 2.0 * k as f64 / 100.0);
            assert!(z >= prev);
            prev = z;
        }
        let d = adiabatic_dark_state(2.0, 0.0);
        assert_eq!(d[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn printed_beta_is_singular_at_midpoint() {
        let s = PaperSchedule::new(0.55, 1.0, BetaForm::Printed).unwrap();
        match designed_pulses(Arc::new(s), 0.4) {
            Err(Error::SingularSchedule { t, .. }) => assert!((t - 0.5).abs() < 1e-12),
            other => panic!("expected singular schedule, got {other:?}"),
        }
    }

    #[test]
    fn phase_is_zero_for_constant_theta() {
        let s = LinearSchedule {
            omega: 0.0,
            beta: 0.4,
            duration: 1.0,
        };
        assert_eq!(varsigma(&s, 0.7), 0.0);
        assert_eq!(varsigma(&paper(), 0.0), 0.0);
    }

    #[test]
    fn phase_regression_value() {
        // Independent adaptive quadrature gives 8.804728631618698.
        assert!((varsigma(&paper(), 1.0) - 8.804728631618698).abs() < 1e-8);
    }

    #[test]
    fn evolution_state_boundaries_and_orthonormality() {
        let s = paper();
        let x0 = evolution_states(&s, 0.0)[0];
        assert!((x0 - Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0))).norm() < 1e-12);
        let x1 = evolution_states(&s, 1.0)[0];
        assert!((x1 + Vector3::new(C64::new(1.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0))).norm() < 1e-12);
        for k in 0..20 {
            let t = (k as f64 + 0.3) / 20.0;
            let xs = evolution_states(&s, t);
            for i in 0..3 {
                for j in 0..3 {
                    let ip = xs[i].dotc(&xs[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((ip - C64::new(want, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn all_evolution_states_solve_the_schrodinger_equation() {
        let s = paper();
        let h = 1e-4;
        let xs = |t: f64| evolution_states(&s, t);
        for k in 1..100 {
            let t = k as f64 / 100.0;
            let (m1, m2) = dsbs_modified_pulses(&s, t).unwrap();
            let hm = modified_hamiltonian(m1, m2);
            let (a, b, c, d) = (xs(t - 2.0 * h), xs(t - h), xs(t + h), xs(t + 2.0 * h));
            let x = xs(t);
            for i in 0..3 {
                let dx = (a[i] - d[i] + (c[i] - b[i]) * C64::new(8.0, 0.0)) / C64::new(12.0 * h, 0.0);
                let res = (dx * C64::new(0.0, 1.0) - hm * x[i]).norm();
                assert!(res < 1e-8, "xi_{i} residual {res:e} at t = {t}");
            }
        }
    }

    #[test]
    fn dressed_frame_passes_for_paper_schedule() {
        let rep = verify_dressed_frame(&paper(), &FrameCheckConfig::default()).unwrap();
        assert!(rep.max_offdiag < 1e-10);
        assert!(rep.max_tdse_residual < 1e-8);
    }

    #[test]
    fn dressed_frame_detects_corrupted_gx() {
        let cfg = FrameCheckConfig {
            gx_scale: 1.01,
            ..Default::default()
        };
        assert!(matches!(
            verify_dressed_frame(&paper(), &cfg),
            Err(Error::FrameVerification { .. })
        ));
    }

    #[test]
    fn dressed_frame_exact_for_right_angle_beta() {
        let s = LinearSchedule {
            omega: 1.5,
            beta: PI / 2.0,
            duration: 1.0,
        };
        let rep = verify_dressed_frame(&s, &FrameCheckConfig::default()).unwrap();
        assert!(rep.max_offdiag < 1e-15);
    }
}
