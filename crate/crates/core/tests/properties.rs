use std::f64::consts::{FRAC_PI_4, TAU};

use holo_gate::effective::{
    block_hamiltonian, bright_state, eigens_h_i0, paper_blocks, z1_closed_form_eigenvalues, BlockId, RotatedBasis,
};
use holo_gate::gates::{gate_matrix, mu_state, BasisOrder, Family, MuPoint};
use holo_gate::model::{
    build_basis, build_jump_operators, Basis, BasisMode, HamiltonianTerms, SystemParams, COMPUTATIONAL_PAIRS,
};
use holo_gate::C64;
use nalgebra::DVector;
use proptest::prelude::*;

fn full() -> Basis {
    build_basis(1, BasisMode::Full).unwrap()
}

fn params(lambda: f64, upsilon: f64, vartheta: f64) -> SystemParams {
    SystemParams {
        lambda,
        upsilon,
        vartheta,
        ..Default::default()
    }
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn to_complex(m: &nalgebra::SMatrix<f64, 8, 8>) -> nalgebra::DMatrix<C64> {
    nalgebra::DMatrix::from_fn(8, 8, |i, j| C64::new(m[(i, j)], 0.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_hermitian(o1 in -40.0..40.0f64, o3f in -40.0..40.0f64, o3a in -40.0..40.0f64,
                                l in 1.0..300.0f64, u in 1.0..300.0f64) {
        let b = full();
        let h = HamiltonianTerms::new(&b, &params(l, u, -FRAC_PI_4)).unwrap().at(o1, o3f, o3a);
        prop_assert_eq!(h.hermiticity_defect(), 0.0);
    }

    #[test]
    fn dark_states_are_annihilated(o1 in -40.0..40.0f64, o3 in -40.0..40.0f64, vt in -3.0..3.0f64,
                                   l in 1.0..300.0f64, u in 1.0..300.0f64) {
        let b = full();
        let p = params(l, u, vt);
        let h = HamiltonianTerms::new(&b, &p).unwrap().at(o1, o3 * vt.sin(), o3 * vt.cos());
        for (x, y) in COMPUTATIONAL_PAIRS {
            let chi = b.dressed_third_atom(x, y, false, vt).unwrap();
            prop_assert!(norm(&h.apply(&chi)) < 1e-12 * (l + u + o1.abs() + o3.abs()));
        }
    }

    #[test]
    fn driven_hamiltonian_respects_blocks(o1 in -40.0..40.0f64, o3 in -40.0..40.0f64, vt in -3.0..3.0f64) {
        let b = full();
        let p = params(150.0, 150.0, vt);
        let rot = RotatedBasis::new(&b, vt).unwrap();
        let h = rot
            .transform(&HamiltonianTerms::new(&b, &p).unwrap().at(o1, o3 * vt.sin(), o3 * vt.cos()))
            .unwrap();
        let blocks = paper_blocks().unwrap();
        let mut owner = vec![usize::MAX; b.dim()];
        for (k, blk) in blocks.iter().enumerate() {
            for m in &blk.members {
                owner[rot.index_of(m).unwrap()] = k;
            }
        }
        for (k, blk) in blocks.iter().enumerate() {
            for m in &blk.members {
                let col = rot.index_of(m).unwrap();
                for row in 0..b.dim() {
                    if h.get(row, col).norm() > 1e-10 {
                        prop_assert_eq!(owner[row], k, "{:?} couples out of its block", blk.id);
                    }
                }
            }
        }
    }

    #[test]
    fn mu_families_are_unit_and_consistent(m1 in 0.0..TAU, m2 in 0.0..TAU, m3 in 0.0..TAU) {
        let pt = MuPoint::new(m1, m2, m3);
        for fam in [Family::Psi0, Family::PsiT, Family::Phi0, Family::PhiT] {
            prop_assert!((mu_state(pt, fam).norm() - 1.0).abs() < 1e-12);
        }
        let toffoli = to_complex(&gate_matrix(-FRAC_PI_4, BasisOrder::Z0).matrix);
        let d = &toffoli * mu_state(pt, Family::Phi0) - mu_state(pt, Family::PhiT);
        prop_assert!(d.camax() < 1e-12);
        let ug = to_complex(&gate_matrix(-FRAC_PI_4, BasisOrder::Zpm).matrix);
        let d = &ug * mu_state(pt, Family::Psi0) - mu_state(pt, Family::PsiT);
        prop_assert!(d.camax() < 1e-12);
    }

    #[test]
    fn z0_gate_is_orthogonal(vt in -3.2..3.2f64) {
        let g = gate_matrix(vt, BasisOrder::Z0);
        prop_assert!(g.orthogonality_defect() < 1e-12);
        prop_assert!((g.determinant().abs() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn jump_operators_lower_excitation_by_one() {
    let b = full();
    let p = SystemParams {
        gamma: 1.0,
        kappa_c: 1.0,
        kappa_f: 1.0,
        ..Default::default()
    };
    for j in build_jump_operators(&b, &p).unwrap() {
        assert!(j.op.nnz() > 0, "{} is empty", j.kind);
        for (r, c, _) in j.op.entries() {
            assert_eq!(b.state(r).excitation() + 1, b.state(c).excitation(), "{}", j.kind);
        }
    }
}

#[test]
fn zero_gamma_keeps_atomic_channels() {
    let jumps = build_jump_operators(&full(), &SystemParams::default()).unwrap();
    assert_eq!(jumps.len(), 15);
    assert!(jumps.iter().all(|j| j.rate == 0.0));
}

#[test]
fn eigenstructure_on_parameter_grid() {
    let z1 = paper_blocks().unwrap().into_iter().find(|b| b.id == BlockId::ZPlus1).unwrap();
    let grid = [0.5, 1.0, 2.0, 7.5, 150.0];
    for &l in &grid {
        for &u in &grid {
            let e = eigens_h_i0(&z1, l, u).unwrap();
            let cf = z1_closed_form_eigenvalues(l, u);
            for (a, b) in e.eigenvalues.iter().zip(cf.iter()) {
                assert!((a - b).abs() <= 1e-10 * l.max(u), "lambda {l} upsilon {u}: {a} vs {b}");
            }
            assert_eq!(e.zero_indices.len(), 3);
            let h = block_hamiltonian(&z1, l, u).unwrap();
            let psi3: DVector<f64> = bright_state(l, u);
            assert!((&h * &psi3).norm() < 1e-12 * l.max(u));
            assert!((psi3.norm() - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn block_eigenvalues_are_paired() {
    for blk in paper_blocks().unwrap() {
        let e = eigens_h_i0(&blk, 150.0, 110.0).unwrap();
        let v = &e.eigenvalues;
        for k in 0..v.len() {
            assert!((v[k] + v[v.len() - 1 - k]).abs() < 1e-9, "{:?}", blk.id);
        }
    }
}
