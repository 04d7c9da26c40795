//! Block structure of the full Hamiltonian in the rotated atom-3 basis, the
//! zero-energy bright state and the three-level effective Hamiltonian.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Matrix3};
use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::dynamics::{propagate_state, DrivenHamiltonian, IntegratorConfig, StateVector};
use crate::error::{Error, Result};
use crate::model::{
    bright_normalization, build_basis, Basis, BasisMode, BasisState, HamiltonianTerms, Level, Mode,
    SystemParams, COMPUTATIONAL_PAIRS,
};
use crate::sparse::{reachable, SparseOperator};
use crate::sta::PulseSchedule;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BlockId {
    ZPlus1,
    ZPlus2,
    ZPlus3,
    ZPlus4,
    ZMinus,
}

impl BlockId {
    /// Seed `|x, y, +>` of a `Z+` block.
    pub fn seed(self) -> Option<(Level, Level)> {
        match self {
            BlockId::ZPlus1 => Some((Level::Gl, Level::Gr)),
            BlockId::ZPlus2 => Some((Level::Gr, Level::Gr)),
            BlockId::ZPlus3 => Some((Level::Gl, Level::Gl)),
            BlockId::ZPlus4 => Some((Level::Gr, Level::Gl)),
            BlockId::ZMinus => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSpec {
    pub id: BlockId,
    pub members: Vec<BasisState>,
}

fn g(a: Level, b: Level, c: Level) -> Result<BasisState> {
    BasisState::ground(a, b, c)
}

fn ph(a: Level, b: Level, c: Level, m: Mode) -> Result<BasisState> {
    BasisState::with_photon(a, b, c, m)
}

/// Ordered member lists of the four `Z+` blocks.
pub fn printed_blocks() -> Result<Vec<Vec<BasisState>>> {
    use Level::*;
    use Mode::*;
    let z1 = vec![
        g(Gl, Gr, Plus)?,
        g(Gl, Gr, E)?,
        ph(Gl, Gr, Gr, C3Right)?,
        ph(Gl, Gr, Gr, Fiber2)?,
        ph(Gl, Gr, Gr, C2Right)?,
        g(Gl, E, Gr)?,
        ph(Gl, Gl, Gr, C2Left)?,
        ph(Gl, Gl, Gr, Fiber1)?,
        ph(Gl, Gl, Gr, C1Left)?,
        g(E, Gl, Gr)?,
        g(F, Gl, Gr)?,
    ];
    let z2 = vec![
        g(Gr, Gr, Plus)?,
        g(Gr, Gr, E)?,
        ph(Gr, Gr, Gr, C3Right)?,
        ph(Gr, Gr, Gr, Fiber2)?,
        ph(Gr, Gr, Gr, C2Right)?,
        g(Gr, E, Gr)?,
        ph(Gr, Gl, Gr, C2Left)?,
        ph(Gr, Gl, Gr, Fiber1)?,
        ph(Gr, Gl, Gr, C1Left)?,
    ];
    let tail = |x: Level, y: Level| -> Result<Vec<BasisState>> {
        Ok(vec![
            g(x, y, Plus)?,
            g(x, y, E)?,
            ph(x, y, Gr, C3Right)?,
            ph(x, y, Gr, Fiber2)?,
            ph(x, y, Gr, C2Right)?,
        ])
    };
    Ok(vec![z1, z2, tail(Gl, Gl)?, tail(Gr, Gl)?])
}

/// The four `Z+` blocks followed by the dark block `Z-`.
pub fn paper_blocks() -> Result<Vec<BlockSpec>> {
    let ids = [BlockId::ZPlus1, BlockId::ZPlus2, BlockId::ZPlus3, BlockId::ZPlus4];
    let mut out: Vec<BlockSpec> = ids
        .into_iter()
        .zip(printed_blocks()?)
        .map(|(id, members)| BlockSpec { id, members })
        .collect();
    let mut minus = Vec::new();
    for &(x, y) in &COMPUTATIONAL_PAIRS {
        minus.push(g(x, y, Level::Minus)?);
    }
    out.push(BlockSpec {
        id: BlockId::ZMinus,
        members: minus,
    });
    Ok(out)
}

/// The full basis viewed with atom 3's `{a, f}` pair rotated to `{+, -}`,
/// `|+> = cos(vt)|a> + sin(vt)|f>`, `|-> = -sin(vt)|a> + cos(vt)|f>`.
///
/// Index `i` of an `a` state carries the `+` label and index `i` of an `f`
/// state carries the `-` label; other states are unchanged.
#[derive(Clone, Debug)]
pub struct RotatedBasis {
    pub labels: Vec<BasisState>,
    /// Orthogonal map from full-basis to rotated coordinates.
    pub rotation: SparseOperator,
}

impl RotatedBasis {
    pub fn new(basis: &Basis, vartheta: f64) -> Result<Self> {
        if basis.mode() != BasisMode::Full {
            return Err(Error::Unsupported("rotation requires a full-mode basis".into()));
        }
        let (s, c) = vartheta.sin_cos();
        let r = |x: f64| C64::new(x, 0.0);
        let mut labels = basis.states().to_vec();
        let mut trip = Vec::new();
        for (i, st) in basis.states().iter().enumerate() {
            match st.atoms.level(2) {
                Level::A => {
                    let partner = BasisState::new(st.atoms.with_level(2, Level::F)?, st.photons);
                    let j = basis.index_of(&partner).ok_or_else(|| {
                        Error::ModelInconsistency(format!("missing partner of {st}"))
                    })?;
                    labels[i] = BasisState::new(st.atoms.with_level(2, Level::Plus)?, st.photons);
                    labels[j] = BasisState::new(st.atoms.with_level(2, Level::Minus)?, st.photons);
                    trip.extend([(i, i, r(c)), (i, j, r(s)), (j, i, r(-s)), (j, j, r(c))]);
                }
                Level::F => {}
                _ => trip.push((i, i, r(1.0))),
            }
        }
        Ok(Self {
            labels,
            rotation: SparseOperator::from_triplets(basis.dim(), trip)?,
        })
    }

    pub fn index_of(&self, s: &BasisState) -> Option<usize> {
        self.labels.iter().position(|x| x == s)
    }

    /// `U O U^T`, dropping entries below `1e-13` in modulus.
    pub fn transform(&self, op: &SparseOperator) -> Result<SparseOperator> {
        let t = self.rotation.matmul(op)?.matmul(&self.rotation.adjoint())?;
        SparseOperator::from_triplets(t.dim(), t.entries().filter(|(_, _, v)| v.norm() > 1e-13))
    }
}

/// Recomputes the blocks by reachability under the full Hamiltonian with
/// unit drives, and checks them against the printed member lists.
pub fn block_decompose(basis: &Basis, p: &SystemParams) -> Result<Vec<BlockSpec>> {
    if basis.cap() != 1 {
        return Err(Error::Unsupported("block decomposition requires excitation cap 1".into()));
    }
    let rot = RotatedBasis::new(basis, p.vartheta)?;
    let terms = HamiltonianTerms::new(basis, p)?;
    let (s, c) = p.vartheta.sin_cos();
    let h = rot.transform(&terms.at(1.0, s, c))?;
    let mut out = Vec::new();
    for spec in paper_blocks()? {
        let seeds: Vec<usize> = match spec.id.seed() {
            Some((x, y)) => vec![rot.index_of(&g(x, y, Level::Plus)?).unwrap()],
            None => spec.members.iter().map(|m| rot.index_of(m).unwrap()).collect(),
        };
        let found: Vec<usize> = if spec.id == BlockId::ZMinus {
            let mut all = BTreeSet::new();
            for &sd in &seeds {
                let r = reachable(&[sd], &[&h]);
                if r != vec![sd] {
                    return Err(Error::ModelInconsistency(format!(
                        "dark state {} couples to {} states",
                        rot.labels[sd],
                        r.len() - 1
                    )));
                }
                all.insert(sd);
            }
            all.into_iter().collect()
        } else {
            reachable(&seeds, &[&h])
        };
        let got: BTreeSet<BasisState> = found.iter().map(|&i| rot.labels[i]).collect();
        let want: BTreeSet<BasisState> = spec.members.iter().copied().collect();
        if got != want {
            let extra: Vec<String> = got.difference(&want).map(|s| s.to_string()).collect();
            let missing: Vec<String> = want.difference(&got).map(|s| s.to_string()).collect();
            return Err(Error::ModelInconsistency(format!(
                "block {:?}: unexpected {:?}, missing {:?}",
                spec.id, extra, missing
            )));
        }
        out.push(spec);
    }
    Ok(out)
}

/// Undriven coupling `H_I0` restricted to a block, over its member order.
pub fn block_hamiltonian(block: &BlockSpec, lambda: f64, upsilon: f64) -> Result<DMatrix<f64>> {
    let basis = build_basis(1, BasisMode::Full)?;
    let p = SystemParams {
        lambda,
        upsilon,
        ..Default::default()
    };
    let rot = RotatedBasis::new(&basis, p.vartheta)?;
    let terms = HamiltonianTerms::new(&basis, &p)?;
    let h = rot.transform(&terms.coupling)?;
    let idx: Vec<usize> = block
        .members
        .iter()
        .map(|m| rot.index_of(m).ok_or_else(|| Error::UnknownLabel(m.to_string())))
        .collect::<Result<_>>()?;
    let n = idx.len();
    Ok(DMatrix::from_fn(n, n, |r, c| h.get(idx[r], idx[c]).re))
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenSummary {
    pub block: BlockId,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Column `k` is the eigenvector of `eigenvalues[k]` over the member order.
    #[serde(skip)]
    pub eigenvectors: DMatrix<f64>,
    pub zero_indices: Vec<usize>,
    pub n3: f64,
    pub b: f64,
}

/// Eigenvalues treated as zero below this (relative to the coupling scale).
pub const ZERO_TOL: f64 = 1e-12;
/// Eigenvalues between [`ZERO_TOL`] and this are ambiguous.
pub const ZERO_GAP: f64 = 1e-6;

pub fn eigens_h_i0(block: &BlockSpec, lambda: f64, upsilon: f64) -> Result<EigenSummary> {
    let h = block_hamiltonian(block, lambda, upsilon)?;
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let scale = lambda.max(upsilon);
    let mut zero = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let v = eig.eigenvalues[i].abs();
        if v < ZERO_TOL * scale * 10.0 {
            zero.push(k);
        } else if v < ZERO_GAP * scale {
            return Err(Error::DegenerateEigenvalue {
                value: v,
                tol: ZERO_TOL * scale,
                gap: ZERO_GAP * scale,
            });
        }
    }
    let n = order.len();
    Ok(EigenSummary {
        block: block.id,
        eigenvalues: order.iter().map(|&i| eig.eigenvalues[i]).collect(),
        eigenvectors: DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]),
        zero_indices: zero,
        n3: bright_normalization(lambda, upsilon),
        b: (lambda.powi(4) + 4.0 * upsilon.powi(4)).sqrt(),
    })
}

/// Closed-form spectrum of `H_I0` on the 11-state block, ascending.
pub fn z1_closed_form_eigenvalues(lambda: f64, upsilon: f64) -> [f64; 11] {
    let (l2, u2) = (lambda * lambda, upsilon * upsilon);
    let b = (l2 * l2 + 4.0 * u2 * u2).sqrt();
    let a = ((l2 + 2.0 * u2 - b) / 2.0).sqrt();
    let c = ((3.0 * l2 + 2.0 * u2 - b) / 2.0).sqrt();
    let d = ((l2 + 2.0 * u2 + b) / 2.0).sqrt();
    let e = ((3.0 * l2 + 2.0 * u2 + b) / 2.0).sqrt();
    let mut v = [0.0, 0.0, 0.0, -a, a, -c, c, -d, d, -e, e];
    v.sort_by(f64::total_cmp);
    v
}

/// Bright state over the 11 members of the first block:
/// `N3 (phi_2 - (l/u) phi_4 + phi_6 - (l/u) phi_8 + phi_10)`.
pub fn bright_state(lambda: f64, upsilon: f64) -> DVector<f64> {
    let n3 = bright_normalization(lambda, upsilon);
    let r = lambda / upsilon;
    let mut v = DVector::zeros(11);
    v[1] = n3;
    v[3] = -r * n3;
    v[5] = n3;
    v[7] = -r * n3;
    v[9] = n3;
    v
}

/// Full-basis vector of a linear combination over block members.
pub fn embed_block_vector(basis: &Basis, block: &BlockSpec, coeffs: &[C64], vartheta: f64) -> Result<Vec<C64>> {
    if coeffs.len() != block.members.len() {
        return Err(Error::Dimension {
            expected: block.members.len(),
            got: coeffs.len(),
        });
    }
    let mut v = vec![C64::new(0.0, 0.0); basis.dim()];
    for (m, &c) in block.members.iter().zip(coeffs) {
        if c == C64::new(0.0, 0.0) {
            continue;
        }
        for (x, y) in v.iter_mut().zip(basis.expand_label(m, vartheta)?) {
            *x += c * y;
        }
    }
    Ok(v)
}

/// Full-basis images of the effective basis `(|g_l,g_r,+>, |psi_3>, |f,g_l,g_r>)`.
pub fn effective_embedding(basis: &Basis, p: &SystemParams) -> Result<[Vec<C64>; 3]> {
    let z1 = &paper_blocks()?[0];
    let unit = |k: usize| {
        let mut c = vec![C64::new(0.0, 0.0); 11];
        c[k] = C64::new(1.0, 0.0);
        c
    };
    let bright: Vec<C64> = bright_state(p.lambda, p.upsilon).iter().map(|&x| C64::new(x, 0.0)).collect();
    Ok([
        embed_block_vector(basis, z1, &unit(0), p.vartheta)?,
        embed_block_vector(basis, z1, &bright, p.vartheta)?,
        embed_block_vector(basis, z1, &unit(10), p.vartheta)?,
    ])
}

#[derive(Clone, Debug, PartialEq)]
pub struct EffectiveHamiltonian {
    pub matrix: Matrix3<C64>,
    pub omega1_eff: f64,
    pub omega3_eff: f64,
}

pub fn build_h_eff(p: &SystemParams, omega1: f64, omega3: f64) -> EffectiveHamiltonian {
    let n3 = p.n3();
    let (o1, o3) = (n3 * omega1, n3 * omega3);
    let r = |x: f64| C64::new(x, 0.0);
    let z = r(0.0);
    EffectiveHamiltonian {
        matrix: Matrix3::new(z, r(o3), z, r(o3), z, r(o1), z, r(o1), z),
        omega1_eff: o1,
        omega3_eff: o3,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EffectiveValidation {
    pub lambda: f64,
    pub upsilon: f64,
    /// `1 - |<full(T)|embedded effective(T)>|^2`.
    pub deviation: f64,
}

/// Propagates `|g_l,g_r,+>` under the full and the effective model and
/// compares the final states.
pub fn validate_effective_vs_full(
    p: &SystemParams,
    pulses: &PulseSchedule,
    cfg: &IntegratorConfig,
) -> Result<EffectiveValidation> {
    let basis = build_basis(1, BasisMode::Full)?;
    let terms = HamiltonianTerms::new(&basis, p)?;
    let full = DrivenHamiltonian::full_model(&terms, p.vartheta, pulses);
    let emb = effective_embedding(&basis, p)?;
    let psi_full = propagate_state(&full, &StateVector(emb[0].clone()), cfg)?;
    let eff = DrivenHamiltonian::effective(pulses, p.n3());
    let psi_eff = propagate_state(&eff, &StateVector::basis(3, 0), cfg)?;
    let mut lifted = vec![C64::new(0.0, 0.0); basis.dim()];
    for (k, e) in emb.iter().enumerate() {
        let a = psi_eff.last().0[k];
        for (x, y) in lifted.iter_mut().zip(e) {
            *x += a * y;
        }
    }
    let ov = psi_full.last().inner(&lifted);
    Ok(EffectiveValidation {
        lambda: p.lambda,
        upsilon: p.upsilon,
        deviation: (1.0 - ov.norm_sqr()).max(0.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full() -> Basis {
        build_basis(1, BasisMode::Full).unwrap()
    }

    #[test]
    fn block_sizes() {
        let sizes: Vec<usize> = paper_blocks().unwrap().iter().map(|b| b.members.len()).collect();
        assert_eq!(sizes, vec![11, 9, 5, 5, 4]);
    }

    #[test]
    fn reachability_reproduces_printed_blocks() {
        for vt in [-std::f64::consts::FRAC_PI_4, 0.3, 1.2] {
            let p = SystemParams {
                vartheta: vt,
                ..Default::default()
            };
            let blocks = block_decompose(&full(), &p).unwrap();
            assert_eq!(blocks.len(), 5);
        }
    }

    #[test]
    fn unit_eigen_example() {
        let z1 = &paper_blocks().unwrap()[0];
        let e = eigens_h_i0(z1, 1.0, 1.0).unwrap();
        assert!((e.b - 5f64.sqrt()).abs() < 1e-15);
        let eta4 = -((3.0 - 5f64.sqrt()) / 2.0).sqrt();
        assert!((eta4 + 0.61803).abs() < 1e-5);
        assert!(e.eigenvalues.iter().any(|&x| (x - eta4).abs() < 1e-10));
        assert_eq!(e.zero_indices.len(), 3);
    }

    #[test]
    fn bright_state_at_equal_couplings() {
        let v = bright_state(2.0, 2.0);
        let k = 1.0 / 5f64.sqrt();
        let want = [0.0, k, 0.0, -k, 0.0, k, 0.0, -k, 0.0, k, 0.0];
        for (a, b) in v.iter().zip(want) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!((bright_normalization(3.0, 3.0) - 0.447213595499958).abs() < 1e-14);
    }

    #[test]
    fn effective_hamiltonian_structure() {
        let p = SystemParams::default();
        assert_eq!(build_h_eff(&p, 0.0, 0.0).matrix, Matrix3::zeros());
        let h = build_h_eff(&p, 0.0, 1.0);
        assert!((h.matrix[(0, 1)].re - 1.0 / 5f64.sqrt()).abs() < 1e-15);
        let h = build_h_eff(&p, 0.7, -1.3);
        let m = h.matrix.map(|z| z.re);
        let eig = m.symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        let w = (h.omega1_eff.powi(2) + h.omega3_eff.powi(2)).sqrt();
        assert!((ev[0] + w).abs() < 1e-12 && ev[1].abs() < 1e-12 && (ev[2] - w).abs() < 1e-12);
    }

    #[test]
    fn effective_couplings_from_full_drive() {
        let b = full();
        let p = SystemParams {
            lambda: 2.0,
            upsilon: 1.3,
            vartheta: 0.4,
            ..Default::default()
        };
        let terms = HamiltonianTerms::new(&b, &p).unwrap();
        let emb = effective_embedding(&b, &p).unwrap();
        let d3 = terms.drive3(p.vartheta).apply(&emb[1]);
        let d1 = terms.drive1.apply(&emb[1]);
        let ip = |a: &[C64], b: &[C64]| a.iter().zip(b).map(|(x, y)| x.conj() * y).sum::<C64>();
        assert!((ip(&emb[0], &d3) - C64::new(p.n3(), 0.0)).norm() < 1e-12);
        assert!((ip(&emb[2], &d1) - C64::new(p.n3(), 0.0)).norm() < 1e-12);
    }
}
