//! Fixed-step RK4 propagation of state vectors, propagators and density
//! matrices under time-dependent sparse Hamiltonians, plus the reconstruction
//! of the dissipative map on the computational subspace.
//!
//! The master equation is integrated in the standard form
//! `d(rho)/dt = -i[H, rho] + sum_k r_k (L_k rho L_k^dag - {L_k^dag L_k, rho}/2)`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HamiltonianTerms, JumpChannel};
use crate::sparse::{reachable, SparseOperator};
use crate::sta::PulseSchedule;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// A Hamiltonian `H(t) = sum_k c_k(t) O_k` with static sparse `O_k`.
pub trait TimeDependentHamiltonian: Send + Sync {
    fn dim(&self) -> usize;

    /// Calls `f(O_k, c_k(t))` for each term.
    fn for_each_term(&self, t: f64, f: &mut dyn FnMut(&SparseOperator, f64));

    /// `y += scale * H(t) x`.
    fn apply_add(&self, t: f64, x: &[C64], scale: C64, y: &mut [C64]) {
        self.for_each_term(t, &mut |op, c| {
            if c != 0.0 {
                op.apply_add(x, scale * c, y)
            }
        });
    }

    /// `y += scale * x H(t)` for row vectors.
    fn apply_right_add(&self, t: f64, x: &[C64], scale: C64, y: &mut [C64]) {
        self.for_each_term(t, &mut |op, c| {
            if c != 0.0 {
                op.apply_right_add(x, scale * c, y)
            }
        });
    }

    fn at(&self, t: f64) -> SparseOperator {
        let mut acc = SparseOperator::zeros(self.dim());
        self.for_each_term(t, &mut |op, c| {
            acc = acc.plus(&op.scaled(C64::new(c, 0.0))).expect("terms share a dimension");
        });
        acc
    }
}

type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Static part plus drive operators weighted by scalar waveforms.
#[derive(Clone)]
pub struct DrivenHamiltonian {
    static_part: SparseOperator,
    drives: Vec<(SparseOperator, Coefficient)>,
}

impl std::fmt::Debug for DrivenHamiltonian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DrivenHamiltonian")
            .field("dim", &self.static_part.dim())
            .field("static_nnz", &self.static_part.nnz())
            .field("drives", &self.drives.len())
            .finish()
    }
}

impl DrivenHamiltonian {
    pub fn new(static_part: SparseOperator) -> Self {
        Self {
            static_part,
            drives: Vec::new(),
        }
    }

    pub fn with_drive<F>(mut self, op: SparseOperator, coeff: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if op.dim() != self.static_part.dim() {
            return Err(Error::Dimension {
                expected: self.static_part.dim(),
                got: op.dim(),
            });
        }
        self.drives.push((op, Arc::new(coeff)));
        Ok(self)
    }

    /// Full model: couplings plus `Omega_1(t)` on atom 1 and
    /// `Omega_3(t) (sin(vt) |e><f| + cos(vt) |e><a|)` on atom 3.
    pub fn full_model(terms: &HamiltonianTerms, vartheta: f64, pulses: &PulseSchedule) -> Self {
        let p1 = pulses.clone();
        let p3 = pulses.clone();
        Self::new(terms.coupling.clone())
            .with_drive(terms.drive1.clone(), move |t| p1.omega1(t))
            .and_then(|h| h.with_drive(terms.drive3(vartheta), move |t| p3.omega3(t)))
            .expect("terms share a dimension")
    }

    /// Three-level model over `(|g_l,g_r,+>, |psi_3>, |f,g_l,g_r>)` with
    /// couplings `n3 Omega_3` and `n3 Omega_1` to the middle state.
    pub fn effective(pulses: &PulseSchedule, n3: f64) -> Self {
        let r = |x: f64| C64::new(x, 0.0);
        let c13 = SparseOperator::from_triplets(3, [(0, 1, r(n3)), (1, 0, r(n3))]).unwrap();
        let c23 = SparseOperator::from_triplets(3, [(2, 1, r(n3)), (1, 2, r(n3))]).unwrap();
        let p1 = pulses.clone();
        let p3 = pulses.clone();
        Self::new(SparseOperator::zeros(3))
            .with_drive(c13, move |t| p3.omega3(t))
            .and_then(|h| h.with_drive(c23, move |t| p1.omega1(t)))
            .expect("3x3 operators")
    }

    /// Restriction of every term to the listed indices.
    pub fn restricted(&self, keep: &[usize]) -> Self {
        Self {
            static_part: self.static_part.restrict(keep),
            drives: self
                .drives
                .iter()
                .map(|(op, c)| (op.restrict(keep), c.clone()))
                .collect(),
        }
    }

    /// Every operator appearing in `H(t)`.
    pub fn operators(&self) -> Vec<&SparseOperator> {
        std::iter::once(&self.static_part)
            .chain(self.drives.iter().map(|(o, _)| o))
            .collect()
    }
}

impl TimeDependentHamiltonian for DrivenHamiltonian {
    fn dim(&self) -> usize {
        self.static_part.dim()
    }

    fn for_each_term(&self, t: f64, f: &mut dyn FnMut(&SparseOperator, f64)) {
        f(&self.static_part, 1.0);
        for (op, c) in &self.drives {
            f(op, c(t));
        }
    }
}

/// A constant Hamiltonian.
impl TimeDependentHamiltonian for SparseOperator {
    fn dim(&self) -> usize {
        SparseOperator::dim(self)
    }

    fn for_each_term(&self, _t: f64, f: &mut dyn FnMut(&SparseOperator, f64)) {
        f(self, 1.0);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Steps over `[0, duration]`.
    pub steps: usize,
    /// Store every `sample_stride`-th step (the last step is always stored).
    pub sample_stride: usize,
    pub duration: f64,
    /// Re-run with halved step and record the final-state difference.
    #[serde(default)]
    pub check_convergence: bool,
}

impl IntegratorConfig {
    pub const STATE_STEPS: usize = 20_000;
    pub const DENSITY_STEPS: usize = 8_000;

    pub fn states(duration: f64) -> Self {
        Self {
            method: Method::Rk4,
            steps: Self::STATE_STEPS,
            sample_stride: Self::STATE_STEPS,
            duration,
            check_convergence: false,
        }
    }

    pub fn density(duration: f64) -> Self {
        Self {
            steps: Self::DENSITY_STEPS,
            sample_stride: Self::DENSITY_STEPS,
            ..Self::states(duration)
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self.sample_stride = self.sample_stride.min(steps).max(1);
        self
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.sample_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 || self.sample_stride == 0 {
            return Err(Error::InvalidParameter("steps and sample stride must be positive".into()));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidParameter(format!("duration {} must be non-negative", self.duration)));
        }
        Ok(())
    }

    fn h(&self) -> f64 {
        self.duration / self.steps as f64
    }

    fn is_sample(&self, step: usize) -> bool {
        step % self.sample_stride == 0 || step == self.steps
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateVector(pub Vec<C64>);

impl StateVector {
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![ZERO; dim];
        v[i] = C64::new(1.0, 0.0);
        Self(v)
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &[C64]) -> C64 {
        self.0.iter().zip(other).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<StateVector>,
    /// Final-state difference against a run with half the step, if requested.
    pub convergence: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &StateVector {
        self.states.last().expect("trajectory has at least the initial sample")
    }
}

fn check_finite(step: usize, t: f64, x: &[C64]) -> Result<()> {
    let n2: f64 = x.iter().map(|z| z.norm_sqr()).sum();
    if !n2.is_finite() || n2 > 1e12 {
        return Err(Error::Integration {
            step,
            t,
            detail: format!("state norm^2 = {n2:e}"),
        });
    }
    Ok(())
}

/// In-place RK4 for `dx/dt = f(t, x)`, calling `sample(step, t, x)` at
/// sample steps (including step 0).
fn rk4<F, S>(cfg: &IntegratorConfig, x: &mut [C64], mut f: F, mut sample: S) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    S: FnMut(usize, f64, &mut [C64]),
{
    cfg.validate()?;
    let n = x.len();
    let h = cfg.h();
    let mut k = vec![ZERO; n];
    let mut acc = vec![ZERO; n];
    let mut tmp = vec![ZERO; n];
    sample(0, 0.0, x);
    for step in 0..cfg.steps {
        let t = step as f64 * h;
        f(t, x, &mut k);
        for j in 0..n {
            acc[j] = k[j];
            tmp[j] = x[j] + k[j] * (0.5 * h);
        }
        f(t + 0.5 * h, &tmp, &mut k);
        for j in 0..n {
            acc[j] += k[j] * 2.0;
            tmp[j] = x[j] + k[j] * (0.5 * h);
        }
        f(t + 0.5 * h, &tmp, &mut k);
        for j in 0..n {
            acc[j] += k[j] * 2.0;
            tmp[j] = x[j] + k[j] * h;
        }
        f(t + h, &tmp, &mut k);
        for j in 0..n {
            x[j] += (acc[j] + k[j]) * (h / 6.0);
        }
        let done = step + 1;
        if done % 256 == 0 || done == cfg.steps {
            check_finite(done, t + h, x)?;
        }
        if cfg.is_sample(done) {
            sample(done, done as f64 * h, x);
        }
    }
    Ok(())
}

fn schrodinger_rhs<'a, H: TimeDependentHamiltonian + ?Sized>(h: &'a H) -> impl FnMut(f64, &[C64], &mut [C64]) + 'a {
    move |t, x, out| {
        out.fill(ZERO);
        h.apply_add(t, x, -I, out);
    }
}

fn integrate_state<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if psi0.dim() != h.dim() {
        return Err(Error::Dimension {
            expected: h.dim(),
            got: psi0.dim(),
        });
    }
    let mut x = psi0.0.clone();
    let mut times = Vec::new();
    let mut states = Vec::new();
    rk4(cfg, &mut x, schrodinger_rhs(h), |_, t, x| {
        times.push(t);
        states.push(StateVector(x.to_vec()));
    })?;
    Ok(Trajectory {
        times,
        states,
        convergence: None,
    })
}

/// Integrates `i d(psi)/dt = H(t) psi` over `[0, cfg.duration]`.
pub fn propagate_state<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    psi0: &StateVector,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let mut traj = integrate_state(h, psi0, cfg)?;
    if cfg.check_convergence {
        let fine = IntegratorConfig {
            steps: 2 * cfg.steps,
            sample_stride: 2 * cfg.steps,
            check_convergence: false,
            ..*cfg
        };
        let other = integrate_state(h, psi0, &fine)?;
        let diff = traj
            .last()
            .0
            .iter()
            .zip(&other.last().0)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        traj.convergence = Some(diff);
    }
    Ok(traj)
}

/// Final states of every column, assembled as matrix columns.
pub fn propagate_unitary<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    columns: &[StateVector],
    cfg: &IntegratorConfig,
) -> Result<DMatrix<C64>> {
    let cfg = IntegratorConfig {
        sample_stride: cfg.steps.max(1),
        check_convergence: false,
        ..*cfg
    };
    let finals: Vec<Vec<C64>> = columns
        .par_iter()
        .map(|c| integrate_state(h, c, &cfg).map(|tr| tr.last().0.clone()))
        .collect::<Result<_>>()?;
    let dim = h.dim();
    Ok(DMatrix::from_fn(dim, finals.len(), |r, c| finals[c][r]))
}

/// Square complex matrix stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    dim: usize,
    data: Vec<C64>,
}

impl DensityMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![ZERO; dim * dim],
        }
    }

    pub fn pure(psi: &StateVector) -> Self {
        let n = psi.dim();
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m.data[i * n + j] = psi.0[i] * psi.0[j].conj();
            }
        }
        m
    }

    /// The matrix unit `|i><j|`.
    pub fn unit(dim: usize, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(dim);
        m.data[i * dim + j] = C64::new(1.0, 0.0);
        m
    }

    pub fn from_dense(m: &DMatrix<C64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension {
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let n = m.nrows();
        Ok(Self {
            dim: n,
            data: (0..n * n).map(|k| m[(k / n, k % n)]).collect(),
        })
    }

    pub fn to_dense(&self) -> DMatrix<C64> {
        DMatrix::from_row_slice(self.dim, self.dim, &self.data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.dim;
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.get(i, j) - self.get(j, i).conj()).norm());
            }
        }
        worst
    }

    fn symmetrize(data: &mut [C64], n: usize) {
        for i in 0..n {
            data[i * n + i].im = 0.0;
            for j in i + 1..n {
                let a = (data[i * n + j] + data[j * n + i].conj()) * 0.5;
                data[i * n + j] = a;
                data[j * n + i] = a.conj();
            }
        }
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = self.to_dense();
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// `<v| rho |w>`.
    pub fn sandwich(&self, v: &[C64], w: &[C64]) -> C64 {
        let n = self.dim;
        let mut acc = ZERO;
        for i in 0..n {
            if v[i] == ZERO {
                continue;
            }
            let mut row = ZERO;
            for j in 0..n {
                row += self.data[i * n + j] * w[j];
            }
            acc += v[i].conj() * row;
        }
        acc
    }
}

/// `out += c * A X` with `X` row-major.
fn left_mul_add(op: &SparseOperator, c: C64, x: &[C64], out: &mut [C64], n: usize) {
    for (r, k, v) in op.entries() {
        let a = c * v;
        let (src, dst) = (&x[k * n..(k + 1) * n], r * n);
        for j in 0..n {
            out[dst + j] += a * src[j];
        }
    }
}

/// `out += c * X A`.
fn right_mul_add(op: &SparseOperator, c: C64, x: &[C64], out: &mut [C64], n: usize) {
    for (k, j, v) in op.entries() {
        let a = c * v;
        for i in 0..n {
            out[i * n + j] += a * x[i * n + k];
        }
    }
}

/// `out += c * X A^dag`.
fn right_mul_adjoint_add(op: &SparseOperator, c: C64, x: &[C64], out: &mut [C64], n: usize) {
    for (j, k, v) in op.entries() {
        let a = c * v.conj();
        for i in 0..n {
            out[i * n + j] += a * x[i * n + k];
        }
    }
}

struct Dissipator {
    /// Rate-weighted `sum_k r_k L_k^dag L_k`.
    k: SparseOperator,
    jumps: Vec<(f64, SparseOperator)>,
}

impl Dissipator {
    fn new(dim: usize, jumps: &[JumpChannel]) -> Result<Self> {
        let mut k = SparseOperator::zeros(dim);
        let mut active = Vec::new();
        for j in jumps {
            if j.op.dim() != dim {
                return Err(Error::Dimension {
                    expected: dim,
                    got: j.op.dim(),
                });
            }
            if j.rate > 0.0 {
                let ll = j.op.adjoint().matmul(&j.op)?;
                k = k.plus(&ll.scaled(C64::new(j.rate, 0.0)))?;
                active.push((j.rate, j.op.clone()));
            }
        }
        Ok(Self { k, jumps: active })
    }
}

fn lindblad_rhs<'a, H: TimeDependentHamiltonian + ?Sized>(
    h: &'a H,
    d: &'a Dissipator,
    n: usize,
) -> impl FnMut(f64, &[C64], &mut [C64]) + 'a {
    let mut scratch = vec![ZERO; n * n];
    move |t, x, out| {
        out.fill(ZERO);
        h.for_each_term(t, &mut |op, c| {
            if c != 0.0 {
                left_mul_add(op, -I * c, x, out, n);
                right_mul_add(op, I * c, x, out, n);
            }
        });
        left_mul_add(&d.k, C64::new(-0.5, 0.0), x, out, n);
        right_mul_add(&d.k, C64::new(-0.5, 0.0), x, out, n);
        for (rate, l) in &d.jumps {
            scratch.fill(ZERO);
            left_mul_add(l, C64::new(1.0, 0.0), x, &mut scratch, n);
            right_mul_adjoint_add(l, C64::new(*rate, 0.0), &scratch, out, n);
        }
    }
}

#[derive(Clone, Debug)]
pub struct LindbladOutcome {
    pub rho: DensityMatrix,
    pub trace_drift: f64,
    pub min_eigenvalue: f64,
    pub warnings: Vec<String>,
}

/// Tolerance below which a negative eigenvalue is reported.
pub const POSITIVITY_TOL: f64 = 1e-9;

fn integrate_operator<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    d: &Dissipator,
    x0: &DensityMatrix,
    cfg: &IntegratorConfig,
    hermitian: bool,
) -> Result<DensityMatrix> {
    let n = h.dim();
    if x0.dim != n {
        return Err(Error::Dimension {
            expected: n,
            got: x0.dim,
        });
    }
    let mut x = x0.data.clone();
    rk4(cfg, &mut x, lindblad_rhs(h, d, n), |_, _, x| {
        if hermitian {
            DensityMatrix::symmetrize(x, n);
        }
    })?;
    Ok(DensityMatrix { dim: n, data: x })
}

/// Integrates the master equation from a density matrix.
pub fn propagate_lindblad<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    jumps: &[JumpChannel],
    rho0: &DensityMatrix,
    cfg: &IntegratorConfig,
) -> Result<LindbladOutcome> {
    let d = Dissipator::new(h.dim(), jumps)?;
    let tr0 = rho0.trace();
    let rho = integrate_operator(h, &d, rho0, cfg, true)?;
    let trace_drift = (rho.trace() - tr0).norm();
    let min_eigenvalue = rho.min_eigenvalue();
    let mut warnings = Vec::new();
    if min_eigenvalue < -POSITIVITY_TOL {
        warnings.push(format!("density matrix eigenvalue {min_eigenvalue:.3e} below zero"));
    }
    if trace_drift > 1e-7 {
        warnings.push(format!("trace drift {trace_drift:.3e}"));
    }
    Ok(LindbladOutcome {
        rho,
        trace_drift,
        min_eigenvalue,
        warnings,
    })
}

/// Linear map of the master equation restricted to an embedded subspace:
/// `images[i * k + j]` is the projection of the evolved `|c_i><c_j|` onto the
/// subspace.
#[derive(Clone, Debug)]
pub struct ComputationalChannel {
    k: usize,
    images: Vec<DMatrix<C64>>,
}

/// Propagates the matrix units `|c_i><c_j|` (`i <= j`; the rest follow by
/// adjoint) over the set of states reachable from `comp` under `H` and the
/// jumps, which is an exactly invariant subspace of the master equation.
pub fn computational_channel(
    h: &DrivenHamiltonian,
    jumps: &[JumpChannel],
    comp: &[usize],
    cfg: &IntegratorConfig,
) -> Result<ComputationalChannel> {
    let c = Closure::new(h, jumps, comp);
    let local: Vec<usize> = comp.iter().map(|&i| c.local(i).expect("seeds are reachable")).collect();
    channel_on(&c.hamiltonian, &c.jumps, &local, cfg)
}

/// The master equation restricted to the span of the basis states reachable
/// from a seed set under `H` and the jumps with positive rate.
#[derive(Clone, Debug)]
pub struct Closure {
    /// Sorted global indices of the kept states.
    pub keep: Vec<usize>,
    pub hamiltonian: DrivenHamiltonian,
    pub jumps: Vec<JumpChannel>,
}

impl Closure {
    pub fn new(h: &DrivenHamiltonian, jumps: &[JumpChannel], seeds: &[usize]) -> Self {
        let mut ops = h.operators();
        let active: Vec<&JumpChannel> = jumps.iter().filter(|j| j.rate > 0.0).collect();
        ops.extend(active.iter().map(|j| &j.op));
        let keep = reachable(seeds, &ops);
        Self {
            hamiltonian: h.restricted(&keep),
            jumps: active.iter().map(|j| j.restricted(&keep)).collect(),
            keep,
        }
    }

    pub fn dim(&self) -> usize {
        self.keep.len()
    }

    /// Local index of global state `i`.
    pub fn local(&self, i: usize) -> Option<usize> {
        self.keep.binary_search(&i).ok()
    }

    /// Restriction of a global vector.
    pub fn restrict(&self, v: &[C64]) -> StateVector {
        StateVector(self.keep.iter().map(|&i| v[i]).collect())
    }
}

/// As [`computational_channel`] without the reachability restriction.
pub fn channel_on<H: TimeDependentHamiltonian + ?Sized>(
    h: &H,
    jumps: &[JumpChannel],
    comp: &[usize],
    cfg: &IntegratorConfig,
) -> Result<ComputationalChannel> {
    let n = h.dim();
    let k = comp.len();
    let d = Dissipator::new(n, jumps)?;
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let evolved: Vec<DMatrix<C64>> = pairs
        .par_iter()
        .map(|&(i, j)| {
            let x0 = DensityMatrix::unit(n, comp[i], comp[j]);
            let x = integrate_operator(h, &d, &x0, cfg, i == j)?;
            Ok(DMatrix::from_fn(k, k, |a, b| x.get(comp[a], comp[b])))
        })
        .collect::<Result<_>>()?;
    let mut images = vec![DMatrix::zeros(k, k); k * k];
    for (&(i, j), m) in pairs.iter().zip(evolved) {
        images[j * k + i] = m.adjoint();
        images[i * k + j] = m;
    }
    Ok(ComputationalChannel { k, images })
}

impl ComputationalChannel {
    pub fn dim(&self) -> usize {
        self.k
    }

    /// Channel of the unitary `rho -> U rho U^dag`.
    pub fn from_unitary(u: &DMatrix<C64>) -> Self {
        let k = u.nrows();
        let mut images = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                images.push(u.column(i) * u.column(j).adjoint());
            }
        }
        Self { k, images }
    }

    pub fn image(&self, i: usize, j: usize) -> &DMatrix<C64> {
        &self.images[i * self.k + j]
    }

    pub fn apply(&self, rho: &DMatrix<C64>) -> DMatrix<C64> {
        let k = self.k;
        let mut out = DMatrix::zeros(k, k);
        for i in 0..k {
            for j in 0..k {
                let c = rho[(i, j)];
                if c != ZERO {
                    out += &self.images[i * k + j] * c;
                }
            }
        }
        out
    }

    /// `max |Tr L(|i><j|) - delta_ij|`.
    pub fn trace_defect(&self) -> f64 {
        let k = self.k;
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.image(i, j).trace() - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }

    /// `max_ij |L^dag(1)_ij - delta_ij|`; the dual fixes the identity iff the map is trace preserving.
    pub fn dual_identity_defect(&self) -> f64 {
        let k = self.k;
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                // (L^dag(1))_{ji} = Tr(L(|i><j|))
                let v = self.image(i, j).trace();
                let want = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((v - C64::new(want, 0.0)).norm());
            }
        }
        worst
    }

    /// Choi matrix `sum_ij |i><j| (x) L(|i><j|)`.
    pub fn choi(&self) -> DMatrix<C64> {
        let k = self.k;
        DMatrix::from_fn(k * k, k * k, |r, c| {
            let (i, a) = (r / k, r % k);
            let (j, b) = (c / k, c % k);
            self.image(i, j)[(a, b)]
        })
    }

    /// Smallest eigenvalue of the Hermitian part of the Choi matrix.
    pub fn choi_min_eigenvalue(&self) -> f64 {
        let c = self.choi();
        let h = (&c + c.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PopulationPhase {
    pub times: Vec<f64>,
    pub population: Vec<f64>,
    /// Unwrapped argument of the overlap; held where the population is below
    /// [`PHASE_HOLD_THRESHOLD`].
    pub phase: Vec<f64>,
}

pub const PHASE_HOLD_THRESHOLD: f64 = 1e-6;

/// Population `|<target|psi(t)>|^2` and unwrapped phase along a trajectory.
pub fn population_and_phase(traj: &Trajectory, target: &[C64]) -> Result<PopulationPhase> {
    let mut out = PopulationPhase {
        times: traj.times.clone(),
        population: Vec::with_capacity(traj.times.len()),
        phase: Vec::with_capacity(traj.times.len()),
    };
    let mut last: Option<f64> = None;
    for s in &traj.states {
        if s.dim() != target.len() {
            return Err(Error::Dimension {
                expected: target.len(),
                got: s.dim(),
            });
        }
        let amp: C64 = target.iter().zip(&s.0).map(|(a, b)| a.conj() * b).sum();
        let pop = amp.norm_sqr();
        let ph = match last {
            None => {
                if pop > PHASE_HOLD_THRESHOLD {
                    amp.arg()
                } else {
                    0.0
                }
            }
            Some(prev) if pop > PHASE_HOLD_THRESHOLD => {
                let mut d = amp.arg() - prev;
                d -= (d / std::f64::consts::TAU).round() * std::f64::consts::TAU;
                prev + d
            }
            Some(prev) => prev,
        };
        last = Some(ph);
        out.population.push(pop);
        out.phase.push(ph);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn sigma_x(omega: f64) -> SparseOperator {
        SparseOperator::from_triplets(2, [(0, 1, c(omega)), (1, 0, c(omega))]).unwrap()
    }

    #[test]
    fn zero_hamiltonian_is_identity() {
        let h = SparseOperator::zeros(3);
        let psi = StateVector(vec![c(0.6), C64::new(0.0, 0.8), c(0.0)]);
        let tr = propagate_state(&h, &psi, &IntegratorConfig::states(1.0).with_steps(100)).unwrap();
        assert_eq!(tr.last(), &psi);
    }

    #[test]
    fn rabi_pi_pulse_transfers_population() {
        let omega = std::f64::consts::PI / 2.0;
        let tr = propagate_state(&sigma_x(omega), &StateVector::basis(2, 0), &IntegratorConfig::states(1.0).with_steps(2000)).unwrap();
        assert!(close(tr.last().0[1].norm_sqr(), 1.0, 1e-10));
        assert!((tr.last().norm() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn convergence_flag_reports_difference() {
        let cfg = IntegratorConfig {
            check_convergence: true,
            ..IntegratorConfig::states(1.0).with_steps(400)
        };
        let tr = propagate_state(&sigma_x(3.0), &StateVector::basis(2, 0), &cfg).unwrap();
        assert!(tr.convergence.unwrap() < 1e-7);
    }

    #[test]
    fn rk4_error_ratio_is_fourth_order() {
        let h = DrivenHamiltonian::new(sigma_x(1.0))
            .with_drive(
                SparseOperator::from_triplets(2, [(0, 0, c(1.0)), (1, 1, c(-1.0))]).unwrap(),
                |t| 3.0 * (2.0 * t).cos(),
            )
            .unwrap();
        let psi = StateVector::basis(2, 0);
        let run = |n| propagate_state(&h, &psi, &IntegratorConfig::states(2.0).with_steps(n)).unwrap().last().clone();
        let reference = run(800);
        let err = |s: &StateVector| s.0.iter().zip(&reference.0).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
        let ratio = err(&run(100)) / err(&run(200));
        assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn nan_is_reported_as_integration_failure() {
        let h = DrivenHamiltonian::new(SparseOperator::zeros(2))
            .with_drive(sigma_x(1.0), |_| f64::NAN)
            .unwrap();
        let err = propagate_state(&h, &StateVector::basis(2, 0), &IntegratorConfig::states(1.0).with_steps(300)).unwrap_err();
        assert!(matches!(err, Error::Integration { .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn unitary_assembly_at_zero_duration_is_identity() {
        let cols: Vec<StateVector> = (0..3).map(|i| StateVector::basis(3, i)).collect();
        let u = propagate_unitary(&SparseOperator::identity(3), &cols, &IntegratorConfig::states(0.0).with_steps(10)).unwrap();
        assert!((u - DMatrix::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn single_mode_decay_is_exponential() {
        let l = SparseOperator::from_triplets(2, [(0, 1, c(1.0))]).unwrap();
        let jumps = [JumpChannel {
            kind: crate::model::ChannelKind::Cavity(crate::model::Mode::C1Left),
            rate: 0.7,
            op: l,
        }];
        let rho0 = DensityMatrix::unit(2, 1, 1);
        let out = propagate_lindblad(&SparseOperator::zeros(2), &jumps, &rho0, &IntegratorConfig::density(2.0).with_steps(2000)).unwrap();
        assert!(close(out.rho.get(1, 1).re, (-1.4f64).exp(), 1e-10));
        assert!(out.trace_drift < 1e-12);
        assert!(out.warnings.is_empty());
    }

    #[test]
    fn zero_rate_master_equation_matches_schrodinger() {
        let h = DrivenHamiltonian::new(sigma_x(1.3))
            .with_drive(SparseOperator::from_triplets(2, [(0, 0, c(1.0))]).unwrap(), |t| t.sin())
            .unwrap();
        let psi = StateVector(vec![c(0.8), C64::new(0.0, 0.6)]);
        let cfg = IntegratorConfig::density(1.5).with_steps(3000);
        let tr = propagate_state(&h, &psi, &cfg).unwrap();
        let out = propagate_lindblad(&h, &[], &DensityMatrix::pure(&psi), &cfg).unwrap();
        let want = DensityMatrix::pure(tr.last());
        assert!((out.rho.to_dense() - want.to_dense()).norm() < 1e-10);
    }

    #[test]
    fn channel_of_unitary_reconstructs_conjugation() {
        let u = DMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)]);
        let ch = ComputationalChannel::from_unitary(&u);
        let rho = DMatrix::from_row_slice(2, 2, &[c(0.7), C64::new(0.1, 0.2), C64::new(0.1, -0.2), c(0.3)]);
        assert!((ch.apply(&rho) - &u * &rho * u.adjoint()).norm() < 1e-15);
        assert!(ch.trace_defect() < 1e-15);
        assert!(ch.choi_min_eigenvalue() > -1e-12);
    }

    #[test]
    fn phase_tracks_sign_flip_and_holds_when_dark() {
        let st = |a: C64| StateVector(vec![a, c(0.0)]);
        let traj = Trajectory {
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            states: vec![
                st(c(1.0)),
                st(C64::from_polar(1.0, 1.5)),
                st(c(1e-5)),
                st(C64::from_polar(1.0, 3.0)),
                st(C64::from_polar(1.0, -3.1)),
            ],
            convergence: None,
        };
        let pp = population_and_phase(&traj, &[c(1.0), c(0.0)]).unwrap();
        assert!(close(pp.phase[2], 1.5, 1e-15));
        assert!(close(pp.phase[4], 2.0 * std::f64::consts::PI - 3.1, 1e-12));
    }
}
