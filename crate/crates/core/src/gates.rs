//! Target gates, parameterized input families, fidelities and the
//! parallel-transport conditions of the holonomic gate.
//!
//! Two orderings of the computational space are used.
//! * `Z0`: `{lla, llf, rla, rlf, rra, rrf, lra, lrf}` where the first two
//!   letters are atoms 1 and 2 (`l = g_l`, `r = g_r`) and the last is atom 3.
//! * `Zpm`: the same pairs with atom 3 in `{-, +}`.

use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SMatrix, Vector3};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    computational_channel, propagate_state, propagate_unitary, ComputationalChannel, DrivenHamiltonian,
    IntegratorConfig, StateVector,
};
use crate::error::{Error, Result};
use crate::model::{build_basis, build_jump_operators, BasisMode, HamiltonianTerms, SystemParams};
use crate::sta::{designed_pulses, evolution_states, AngleSchedule, NegatedBeta};

pub type Mat8 = SMatrix<f64, 8, 8>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisOrder {
    Z0,
    Zpm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateMatrix {
    pub order: BasisOrder,
    pub matrix: Mat8,
}

/// Block-diagonal map from `Z0` to `Zpm` coordinates; each pair block is
/// `[[-sin, cos], [cos, sin]]`.
pub fn rotation(vartheta: f64) -> Mat8 {
    let (s, c) = vartheta.sin_cos();
    let mut r = Mat8::zeros();
    for k in 0..4 {
        let o = 2 * k;
        r[(o, o)] = -s;
        r[(o, o + 1)] = c;
        r[(o + 1, o)] = c;
        r[(o + 1, o + 1)] = s;
    }
    r
}

/// `Zpm`: `diag(1, ..., 1, -1)`. `Z0`: the same gate with the last pair block
/// `[[-cos 2vt, -sin 2vt], [-sin 2vt, cos 2vt]]`.
pub fn gate_matrix(vartheta: f64, order: BasisOrder) -> GateMatrix {
    let mut m = Mat8::identity();
    match order {
        BasisOrder::Zpm => m[(7, 7)] = -1.0,
        BasisOrder::Z0 => {
            let (s2, c2) = (2.0 * vartheta).sin_cos();
            m[(6, 6)] = -c2;
            m[(6, 7)] = -s2;
            m[(7, 6)] = -s2;
            m[(7, 7)] = c2;
        }
    }
    GateMatrix { order, matrix: m }
}

impl GateMatrix {
    pub fn orthogonality_defect(&self) -> f64 {
        (self.matrix.transpose() * self.matrix - Mat8::identity()).abs().max()
    }

    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    pub fn complex(&self) -> DMatrix<C64> {
        DMatrix::from_fn(8, 8, |r, c| C64::new(self.matrix[(r, c)], 0.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuPoint {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
}

impl MuPoint {
    pub fn new(mu1: f64, mu2: f64, mu3: f64) -> Self {
        Self { mu1, mu2, mu3 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Input family over `Zpm` for the gate with a `pi` phase on `|g_l,g_r,+>`.
    Psi0,
    PsiT,
    /// Input family over `Z0` for the Toffoli gate.
    Phi0,
    PhiT,
}

impl Family {
    pub fn order(self) -> BasisOrder {
        match self {
            Family::Psi0 | Family::PsiT => BasisOrder::Zpm,
            Family::Phi0 | Family::PhiT => BasisOrder::Z0,
        }
    }

    pub fn target(self) -> Family {
        match self {
            Family::Psi0 | Family::PsiT => Family::PsiT,
            Family::Phi0 | Family::PhiT => Family::PhiT,
        }
    }

    pub fn initial(self) -> Family {
        match self {
            Family::Psi0 | Family::PsiT => Family::Psi0,
            Family::Phi0 | Family::PhiT => Family::Phi0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Psi0 => "psi0",
            Family::PsiT => "psiT",
            Family::Phi0 => "phi0",
            Family::PhiT => "phiT",
        })
    }
}

/// Family member in the family's own ordering ([`Family::order`]).
///
/// Pair weights: `(g_l,g_l) cos(mu1) sin(mu2)`, `(g_r,g_l) cos(mu1) cos(mu2)`,
/// `(g_r,g_r) sin(mu1) cos(mu2)`, `(g_l,g_r) sin(mu1) sin(mu2)`. Within each
/// pair the first slot gets `cos(mu3)` and the second `sin(mu3)` for the psi
/// family (`-`, `+`), and `sin(mu3)`, `cos(mu3)` for the phi family (`a`, `f`).
/// The targets flip the sign of `|g_l,g_r,+>` and swap `a`/`f` on `(g_l,g_r)`.
pub fn mu_state(point: MuPoint, family: Family) -> DVector<C64> {
    let (s1, c1) = point.mu1.sin_cos();
    let (s2, c2) = point.mu2.sin_cos();
    let (s3, c3) = point.mu3.sin_cos();
    let pairs = [c1 * s2, c1 * c2, s1 * c2, s1 * s2];
    let (first, second) = match family {
        Family::Psi0 | Family::PsiT => (c3, s3),
        Family::Phi0 | Family::PhiT => (s3, c3),
    };
    let mut v = DVector::from_element(8, C64::new(0.0, 0.0));
    for (k, w) in pairs.iter().enumerate() {
        v[2 * k] = C64::new(w * first, 0.0);
        v[2 * k + 1] = C64::new(w * second, 0.0);
    }
    match family {
        Family::PsiT => v[7] = -v[7],
        Family::PhiT => v.swap_rows(6, 7),
        _ => {}
    }
    v
}

fn to_z0(v: DVector<C64>, order: BasisOrder, vartheta: f64) -> DVector<C64> {
    match order {
        BasisOrder::Z0 => v,
        BasisOrder::Zpm => {
            let rt = rotation(vartheta).transpose();
            DVector::from_fn(8, |r, _| (0..8).map(|c| v[c] * rt[(r, c)]).sum())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendTag {
    Exact,
    Effective,
    FullUnitary,
    Lindblad,
}

impl fmt::Display for BackendTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackendTag::Exact => "exact",
            BackendTag::Effective => "effective",
            BackendTag::FullUnitary => "full-unitary",
            BackendTag::Lindblad => "lindblad",
        })
    }
}

/// Evolution on the computational subspace, in `Z0` coordinates.
#[derive(Clone, Debug)]
pub enum GateBackend {
    /// Projected evolution operator.
    Unitary { tag: BackendTag, vartheta: f64, u: DMatrix<C64> },
    Channel { vartheta: f64, channel: Arc<ComputationalChannel> },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityForm {
    /// `<T| rho |T>`.
    #[default]
    Standard,
    /// `|<T| rho |in>|^2`.
    CrossElement,
}

impl GateBackend {
    pub fn exact(vartheta: f64) -> Self {
        GateBackend::Unitary {
            tag: BackendTag::Exact,
            vartheta,
            u: gate_matrix(vartheta, BasisOrder::Z0).complex(),
        }
    }

    pub fn tag(&self) -> BackendTag {
        match self {
            GateBackend::Unitary { tag, .. } => *tag,
            GateBackend::Channel { .. } => BackendTag::Lindblad,
        }
    }

    pub fn vartheta(&self) -> f64 {
        match self {
            GateBackend::Unitary { vartheta, .. } | GateBackend::Channel { vartheta, .. } => *vartheta,
        }
    }

    /// Effective three-level dynamics: the seven states other than
    /// `|g_l,g_r,+>` are inert.
    pub fn effective(p: &SystemParams, pulses: &crate::sta::PulseSchedule, cfg: &IntegratorConfig) -> Result<Self> {
        let h = DrivenHamiltonian::effective(pulses, p.n3());
        let tr = propagate_state(&h, &StateVector::basis(3, 0), cfg)?;
        Ok(Self::from_effective_amplitude(p.vartheta, tr.last().0[0]))
    }

    /// Effective-model backend whose only nontrivial entry is the return
    /// amplitude `a` of `|g_l,g_r,+>`.
    pub fn from_effective_amplitude(vartheta: f64, a: C64) -> Self {
        let mut upm = DMatrix::<C64>::identity(8, 8);
        upm[(7, 7)] = a;
        let r = rotation(vartheta);
        let rc = DMatrix::from_fn(8, 8, |i, j| C64::new(r[(i, j)], 0.0));
        GateBackend::Unitary {
            tag: BackendTag::Effective,
            vartheta,
            u: rc.transpose() * upm * rc,
        }
    }

    /// Full-model evolution of the eight computational states, projected.
    pub fn full_unitary(p: &SystemParams, pulses: &crate::sta::PulseSchedule, cfg: &IntegratorConfig) -> Result<Self> {
        let basis = build_basis(1, BasisMode::Full)?;
        let terms = HamiltonianTerms::new(&basis, p)?;
        let h = DrivenHamiltonian::full_model(&terms, p.vartheta, pulses);
        let comp = basis.computational_indices()?;
        let cols: Vec<StateVector> = comp.iter().map(|&i| StateVector::basis(basis.dim(), i)).collect();
        let fin = propagate_unitary(&h, &cols, cfg)?;
        let u = DMatrix::from_fn(8, 8, |r, c| fin[(comp[r], c)]);
        Ok(GateBackend::Unitary {
            tag: BackendTag::FullUnitary,
            vartheta: p.vartheta,
            u,
        })
    }

    /// Master-equation map on the computational subspace.
    pub fn lindblad(p: &SystemParams, pulses: &crate::sta::PulseSchedule, cfg: &IntegratorConfig) -> Result<Self> {
        let basis = build_basis(1, BasisMode::Full)?;
        let terms = HamiltonianTerms::new(&basis, p)?;
        let h = DrivenHamiltonian::full_model(&terms, p.vartheta, pulses);
        let jumps = build_jump_operators(&basis, p)?;
        let comp = basis.computational_indices()?;
        let channel = computational_channel(&h, &jumps, &comp, cfg)?;
        Ok(GateBackend::Channel {
            vartheta: p.vartheta,
            channel: Arc::new(channel),
        })
    }

    /// Output density matrix (computational block) for a `Z0` input.
    pub fn output(&self, input: &DVector<C64>) -> DMatrix<C64> {
        match self {
            GateBackend::Unitary { u, .. } => {
                let out = u * input;
                &out * out.adjoint()
            }
            GateBackend::Channel { channel, .. } => channel.apply(&(input * input.adjoint())),
        }
    }
}

pub fn fidelity(point: MuPoint, backend: &GateBackend, family: Family, form: FidelityForm) -> f64 {
    let vt = backend.vartheta();
    let order = family.order();
    let input = to_z0(mu_state(point, family.initial()), order, vt);
    let target = to_z0(mu_state(point, family.target()), order, vt);
    let rho = backend.output(&input);
    match form {
        FidelityForm::Standard => (target.adjoint() * &rho * &target)[(0, 0)].re,
        FidelityForm::CrossElement => (target.adjoint() * &rho * &input)[(0, 0)].norm_sqr(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FidelityPoint {
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub fidelity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FidelityReport {
    pub grid_n: usize,
    pub backend: BackendTag,
    pub family: Family,
    pub form: FidelityForm,
    pub average: f64,
    pub min: f64,
    pub max: f64,
    #[serde(skip)]
    pub points: Vec<FidelityPoint>,
}

impl FidelityReport {
    pub fn infidelity(&self) -> f64 {
        1.0 - self.average
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "mu1,mu2,mu3,fidelity")?;
        for p in &self.points {
            writeln!(w, "{},{},{},{:.15e}", p.mu1, p.mu2, p.mu3, p.fidelity)?;
        }
        Ok(())
    }
}

pub const DEFAULT_GRID_N: usize = 12;

/// Mean fidelity over the uniform `grid_n^3` grid on `[0, 2pi)^3`.
pub fn average_fidelity(grid_n: usize, backend: &GateBackend, family: Family, form: FidelityForm) -> Result<FidelityReport> {
    if grid_n < 4 {
        return Err(Error::InvalidParameter(format!("grid_n = {grid_n} must be at least 4")));
    }
    let mu = |k: usize| TAU * k as f64 / grid_n as f64;
    let points: Vec<FidelityPoint> = (0..grid_n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (0..grid_n).flat_map(move |j| {
                (0..grid_n).map(move |k| {
                    let pt = MuPoint::new(mu(i), mu(j), mu(k));
                    FidelityPoint {
                        mu1: pt.mu1,
                        mu2: pt.mu2,
                        mu3: pt.mu3,
                        fidelity: fidelity(pt, backend, family, form),
                    }
                })
            })
        })
        .collect();
    for p in &points {
        if !p.fidelity.is_finite() || p.fidelity > 1.0 + 1e-9 || p.fidelity < -1e-9 {
            return Err(Error::AtMuPoint {
                mu1: p.mu1,
                mu2: p.mu2,
                mu3: p.mu3,
                source: Box::new(Error::ModelInconsistency(format!("fidelity {} out of range", p.fidelity))),
            });
        }
    }
    let n = points.len() as f64;
    let average = points.iter().map(|p| p.fidelity).sum::<f64>() / n;
    let min = points.iter().map(|p| p.fidelity).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.fidelity).fold(f64::NEG_INFINITY, f64::max);
    Ok(FidelityReport {
        grid_n,
        backend: backend.tag(),
        family,
        form,
        average,
        min: min.min(average),
        max: max.max(average),
        points,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HolonomyReport {
    /// Frobenius norm of `P(T) - P(0)` for the span of the eight evolution states.
    pub projector_residual: f64,
    /// `max |<chi_l(t)| H_eff(t) |chi_l'(t)>|` over sampled times and pairs.
    pub max_dynamical: f64,
    pub samples: usize,
    pub passed: bool,
}

pub const PROJECTOR_TOL: f64 = 1e-6;
pub const DYNAMICAL_TOL: f64 = 1e-8;

/// Checks the cyclic (projector) and parallel-transport conditions for the
/// designed pulses built from `schedule` in the effective model. The evolving
/// state of `|g_l,g_r,+>` is propagated numerically; the other seven
/// computational states are annihilated by the effective Hamiltonian.
pub fn holonomy_check(
    schedule: Arc<dyn AngleSchedule>,
    p: &SystemParams,
    cfg: &IntegratorConfig,
    samples: usize,
) -> Result<HolonomyReport> {
    let pulses = designed_pulses(schedule.clone(), p.n3())?;
    let h = DrivenHamiltonian::effective(&pulses, p.n3());
    let stride = (cfg.steps / samples.max(1)).max(1);
    let run = IntegratorConfig {
        sample_stride: stride,
        duration: schedule.duration(),
        ..*cfg
    };
    let tr = propagate_state(&h, &StateVector::basis(3, 0), &run)?;
    // Ten-dimensional span: seven inert states, then (|1>, |psi_3>, |2>).
    let embed = |x: &[C64]| {
        let mut v = DVector::from_element(10, C64::new(0.0, 0.0));
        for (k, &a) in x.iter().enumerate() {
            v[7 + k] = a;
        }
        v
    };
    let projector = |last: &DVector<C64>| {
        let mut p = DMatrix::<C64>::zeros(10, 10);
        for k in 0..7 {
            p[(k, k)] = C64::new(1.0, 0.0);
        }
        p + last * last.adjoint()
    };
    let p0 = projector(&embed(&tr.states[0].0));
    let pt = projector(&embed(&tr.last().0));
    let projector_residual = (pt - p0).norm();
    let mut max_dynamical = 0.0f64;
    for (t, s) in tr.times.iter().zip(&tr.states) {
        let (o1, o3) = pulses.omegas(*t);
        let he = crate::effective::build_h_eff(p, o1, o3).matrix;
        let x = Vector3::new(s.0[0], s.0[1], s.0[2]);
        // Inert states are orthogonal to the three-level space and annihilated by H_eff.
        let v = x.adjoint() * he * x;
        max_dynamical = max_dynamical.max(v[(0, 0)].norm());
    }
    Ok(HolonomyReport {
        projector_residual,
        max_dynamical,
        samples: tr.times.len(),
        passed: projector_residual < PROJECTOR_TOL && max_dynamical < DYNAMICAL_TOL,
    })
}

/// Analytic evolution state of `|g_l,g_r,+>` under the designed pulses, over
/// the effective ordering `(|1>, |psi_3>, |2>)`.
pub fn designed_evolution_state(schedule: &dyn AngleSchedule, t: f64) -> Vector3<C64> {
    #[derive(Debug)]
    struct Borrowed<'a>(&'a dyn AngleSchedule);
    impl AngleSchedule for Borrowed<'_> {
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
            self.0.beta(t)
        }
        fn beta_dot(&self, t: f64) -> f64 {
            self.0.beta_dot(t)
        }
    }
    let x = evolution_states(&NegatedBeta(Borrowed(schedule)), t)[0];
    Vector3::new(x[0], x[2], x[1])
}

/// `pi` modulo `2 pi` distance helper for phase comparisons.
pub fn phase_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sta::{paper_angle_schedule, ScaledTheta};
    use std::f64::consts::PI;

    #[test]
    fn gate_algebra() {
        for vt in [-PI / 4.0, PI / 2.0, 0.0, 0.37, -1.1] {
            let z0 = gate_matrix(vt, BasisOrder::Z0);
            let zpm = gate_matrix(vt, BasisOrder::Zpm);
            let r = rotation(vt);
            assert!((r.transpose() * zpm.matrix * r - z0.matrix).abs().max() < 1e-12);
            assert!(z0.orthogonality_defect() < 1e-12);
            assert!((z0.determinant().abs() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn named_gates() {
        let t = gate_matrix(-PI / 4.0, BasisOrder::Z0).matrix;
        assert!((t[(6, 6)]).abs() < 1e-15 && (t[(6, 7)] - 1.0).abs() < 1e-15 && (t[(7, 6)] - 1.0).abs() < 1e-15);
        let cp = gate_matrix(PI / 2.0, BasisOrder::Z0).matrix;
        assert!((cp[(6, 6)] - 1.0).abs() < 1e-15 && (cp[(7, 7)] + 1.0).abs() < 1e-15 && cp[(6, 7)].abs() < 1e-15);
        let z = gate_matrix(0.0, BasisOrder::Z0).matrix;
        assert_eq!((z[(6, 6)], z[(7, 7)]), (-1.0, 1.0));
    }

    #[test]
    fn mu_family_leading_terms() {
        let p = MuPoint::new(PI / 2.0, PI / 2.0, PI / 2.0);
        let e = |k: usize, s: f64| {
            let mut v = DVector::from_element(8, C64::new(0.0, 0.0));
            v[k] = C64::new(s, 0.0);
            v
        };
        assert!((mu_state(p, Family::Psi0) - e(7, 1.0)).norm() < 1e-15);
        assert!((mu_state(p, Family::PsiT) - e(7, -1.0)).norm() < 1e-15);
        assert!((mu_state(p, Family::Phi0) - e(6, 1.0)).norm() < 1e-15);
        assert!((mu_state(p, Family::PhiT) - e(7, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn mu_family_is_normalized_and_spans_all_states() {
        let mut seen = [false; 8];
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    let p = MuPoint::new(0.3 + i as f64, 0.7 * j as f64, 1.1 * k as f64);
                    for f in [Family::Psi0, Family::PsiT, Family::Phi0, Family::PhiT] {
                        let v = mu_state(p, f);
                        assert!((v.norm() - 1.0).abs() < 1e-12);
                        for (s, x) in seen.iter_mut().zip(v.iter()) {
                            *s |= x.norm() > 1e-3;
                        }
                    }
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn targets_are_gate_images() {
        let toffoli = gate_matrix(-PI / 4.0, BasisOrder::Z0).complex();
        let phase = gate_matrix(0.3, BasisOrder::Zpm).complex();
        for k in 0..100 {
            let x = k as f64;
            let p = MuPoint::new(0.37 * x, 1.3 + 0.11 * x, 2.0 - 0.29 * x);
            assert!((&toffoli * mu_state(p, Family::Phi0) - mu_state(p, Family::PhiT)).norm() < 1e-12);
            assert!((&phase * mu_state(p, Family::Psi0) - mu_state(p, Family::PsiT)).norm() < 1e-12);
        }
    }

    #[test]
    fn exact_backend_has_unit_fidelity() {
        for vt in [-PI / 4.0, 0.5] {
            let b = GateBackend::exact(vt);
            for fam in [Family::Psi0, Family::Phi0] {
                if fam == Family::Phi0 && vt != -PI / 4.0 {
                    continue;
                }
                let r = average_fidelity(6, &b, fam, FidelityForm::Standard).unwrap();
                assert!((r.average - 1.0).abs() < 1e-12 && r.min > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn grid_too_small_is_rejected() {
        assert!(average_fidelity(3, &GateBackend::exact(0.0), Family::Psi0, FidelityForm::Standard).is_err());
    }

    #[test]
    fn average_is_grid_independent_beyond_eight() {
        let mut u = gate_matrix(-PI / 4.0, BasisOrder::Z0).complex();
        let (s, c) = 0.3f64.sin_cos();
        u[(6, 6)] = C64::new(s, 0.0);
        u[(6, 7)] = C64::new(c, 0.0);
        u[(7, 6)] = C64::new(c, 0.0);
        u[(7, 7)] = C64::new(-s, 0.0);
        u[(0, 0)] = C64::from_polar(1.0, 0.2);
        let b = GateBackend::Unitary {
            tag: BackendTag::FullUnitary,
            vartheta: -PI / 4.0,
            u,
        };
        let a = average_fidelity(8, &b, Family::Phi0, FidelityForm::Standard).unwrap().average;
        let c = average_fidelity(12, &b, Family::Phi0, FidelityForm::Standard).unwrap().average;
        assert!((a - c).abs() < 1e-6);
    }

    #[test]
    fn cross_element_form_differs_from_standard() {
        let b = GateBackend::exact(-PI / 4.0);
        let p = MuPoint::new(PI / 2.0, PI / 2.0, PI / 2.0);
        assert!((fidelity(p, &b, Family::Phi0, FidelityForm::Standard) - 1.0).abs() < 1e-15);
        assert!(fidelity(p, &b, Family::Phi0, FidelityForm::CrossElement).abs() < 1e-15);
    }

    #[test]
    fn analytic_state_reaches_minus_one() {
        let s = paper_angle_schedule(0.55, 1.0).unwrap();
        let x = designed_evolution_state(&s, 1.0);
        assert!((x[0] + C64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn holonomy_conditions_and_fault_injection() {
        let p = SystemParams::default();
        let cfg = IntegratorConfig::states(1.0).with_steps(4000);
        let s = Arc::new(paper_angle_schedule(0.55, 1.0).unwrap());
        let ok = holonomy_check(s.clone(), &p, &cfg, 50).unwrap();
        assert!(ok.passed, "{ok:?}");
        let bad = Arc::new(ScaledTheta {
            inner: *s,
            factor: 0.9,
        });
        let rep = holonomy_check(bad, &p, &cfg, 50).unwrap();
        assert!(rep.projector_residual > 1e-2);
        assert!(!rep.passed);
    }

    #[test]
    fn phase_distance_wraps() {
        assert!(phase_distance(PI, -PI) < 1e-15);
        assert!((phase_distance(0.1, TAU - 0.1) - 0.2).abs() < 1e-12);
    }
}
