mod common;

use std::sync::Arc;

use proptest::prelude::*;

use patchmg::forms::{Assembler, Forcing, FormDescriptor, FormKind};
use patchmg::krylov::{cg, gmres, identity_preconditioner, richardson, Nullspace};
use patchmg::linalg::{dot, norm2, seeded_vector, sub, CsrMatrix, DenseMatrix};
use patchmg::reference::{lagrange, nedelec_0, raviart_thomas_0};
use patchmg::space::{BoundarySelector, DirichletBC, FunctionSpace, MixedSpace};
use patchmg::topology::{build_structured, CellType};

fn spd(entries: &[f64], n: usize) -> CsrMatrix {
    let b = DenseMatrix::from_rows(&(0..n).map(|i| entries[i * n..(i + 1) * n].to_vec()).collect::<Vec<_>>());
    let mut a = b.matmul(&b.transpose());
    for i in 0..n {
        a[(i, i)] += n as f64;
    }
    CsrMatrix::from_dense(&a)
}

fn path_laplacian(n: usize) -> CsrMatrix {
    let mut t = Vec::new();
    for i in 0..n - 1 {
        t.extend([(i, i, 1.0), (i + 1, i + 1, 1.0), (i, i + 1, -1.0), (i + 1, i, -1.0)]);
    }
    CsrMatrix::from_triplets(n, n, &t)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cg_terminates_within_dimension(n in 2usize..=50, seed in any::<u64>()) {
        let a = spd(&seeded_vector(n * n, seed), n);
        let b = seeded_vector(n, seed ^ 1);
        let (x, rep) = cg(&a, identity_preconditioner, &b, &vec![0.0; n], 1e-8, n);
        prop_assert!(rep.converged);
        prop_assert!(rep.iterations <= n);
        prop_assert_eq!(rep.residual_history.len(), rep.iterations + 1);
        prop_assert!(norm2(&a.residual(&b, &x)) <= 1e-6 * norm2(&b));
    }

    #[test]
    fn gmres_history_is_monotone(n in 3usize..=40, seed in any::<u64>(), shift in -0.5f64..0.5) {
        let mut t: Vec<(usize, usize, f64)> = (0..n).map(|i| (i, i, 2.0)).collect();
        let r = seeded_vector(3 * n, seed);
        for i in 0..n - 1 {
            t.push((i, i + 1, -1.0 + shift + 0.1 * r[i]));
            t.push((i + 1, i, -1.0 - shift + 0.1 * r[n + i]));
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let b = seeded_vector(n, seed ^ 7);
        let (_, rep) = gmres(&a, identity_preconditioner, &b, &vec![0.0; n], 1e-10, 2 * n, 2 * n, None);
        for w in rep.residual_history.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-8));
        }
    }

    #[test]
    fn gmres_solution_orthogonal_to_nullspace(n in 3usize..=30, seed in any::<u64>()) {
        let a = path_laplacian(n);
        let mut b = seeded_vector(n, seed);
        let mean = b.iter().sum::<f64>() / n as f64;
        b.iter_mut().for_each(|v| *v -= mean);
        let ns = Nullspace::new(vec![vec![1.0; n]]).unwrap();
        let x0 = seeded_vector(n, seed ^ 3);
        let (x, rep) = gmres(&a, identity_preconditioner, &b, &x0, 1e-10, 10 * n, n, Some(&ns));
        prop_assert!(rep.converged);
        prop_assert!(x.iter().sum::<f64>().abs() <= 1e-10 * norm2(&x).max(1.0));
    }

    #[test]
    fn assembled_symmetric_forms_are_symmetric(nx in 1usize..4, ny in 1usize..4, which in 0usize..6, quad in any::<bool>()) {
        let ct = if quad && which != 2 && which != 3 { CellType::Quadrilateral } else { CellType::Triangle };
        let mesh = Arc::new(build_structured(nx, ny, ct, [1.0, 2.0]).unwrap());
        let p = |k| Arc::new(lagrange(ct, k).unwrap());
        let (space, kind): (MixedSpace, FormKind) = match which {
            0 => (FunctionSpace::new(mesh, p(2)).unwrap().into(), FormKind::Mass),
            1 => (FunctionSpace::new(mesh, p(1)).unwrap().into(), FormKind::Stiffness),
            2 => (FunctionSpace::new(mesh, Arc::new(raviart_thomas_0(ct).unwrap())).unwrap().into(), FormKind::HdivRiesz { alpha: 7.0 }),
            3 => (FunctionSpace::new(mesh, Arc::new(nedelec_0(ct).unwrap())).unwrap().into(), FormKind::HcurlRiesz { alpha: 7.0 }),
            4 => (FunctionSpace::blocked(mesh, p(2), 2).unwrap().into(), FormKind::Elasticity { mu: 1.0, gamma: 50.0 }),
            _ => (
                MixedSpace::new(vec![FunctionSpace::blocked(mesh.clone(), p(2), 2).unwrap(), FunctionSpace::new(mesh, p(1)).unwrap()]).unwrap(),
                FormKind::Stokes { nu: 3.0 },
            ),
        };
        let bcs = if which == 2 || which == 3 { vec![] } else { vec![DirichletBC::homogeneous(0, BoundarySelector::All)] };
        let form = FormDescriptor::new(kind, Forcing::Zero);
        let sys = Assembler::new(&form, &space).unwrap().system(&bcs).unwrap();
        let scale = sys.matrix.to_dense().max_abs();
        prop_assert!(sys.matrix.asymmetry() <= 1e-12 * scale);
    }
}

#[test]
fn richardson_contraction_matches_jacobi_smoothing_factor() {
    let n = 4;
    let mut t = Vec::new();
    for i in 0..n {
        t.push((i, i, 2.0));
        if i + 1 < n {
            t.extend([(i, i + 1, -1.0), (i + 1, i, -1.0)]);
        }
    }
    let a = CsrMatrix::from_triplets(n, n, &t);
    let xs = seeded_vector(n, 9);
    let b = a.spmv(&xs);
    let h = std::f64::consts::PI / (n + 1) as f64;
    for j in 1..=n {
        let v: Vec<f64> = (1..=n).map(|i| (i as f64 * j as f64 * h).sin()).collect();
        let lambda = 2.0 - 2.0 * (j as f64 * h).cos();
        let x0: Vec<f64> = xs.iter().zip(&v).map(|(a, b)| a + b).collect();
        let (x, _) = richardson(&a, |r| r.iter().map(|v| v / 2.0).collect(), &b, &x0, 2.0 / 3.0, 1e-300, 1);
        let factor = norm2(&sub(&x, &xs)) / norm2(&v);
        assert!((factor - (1.0 - lambda / 3.0).abs()).abs() <= 1e-10);
    }
}

#[test]
fn stokes_pressure_block_is_zero() {
    let mesh = Arc::new(build_structured(3, 3, CellType::Quadrilateral, [1.0, 1.0]).unwrap());
    let v = FunctionSpace::blocked(mesh.clone(), Arc::new(lagrange(CellType::Quadrilateral, 2).unwrap()), 2).unwrap();
    let p = FunctionSpace::new(mesh, Arc::new(lagrange(CellType::Quadrilateral, 1).unwrap())).unwrap();
    let space = MixedSpace::new(vec![v, p]).unwrap();
    let form = FormDescriptor::new(FormKind::Stokes { nu: 2.0 }, Forcing::Zero);
    let a = Assembler::new(&form, &space).unwrap().global(None).0;
    let pres: Vec<usize> = (space.block_offset(1)..space.num_dofs()).collect();
    assert_eq!(a.submatrix(&pres, &pres).max_abs(), 0.0);
    let ones: Vec<f64> = (0..space.num_dofs()).map(|d| if d >= space.block_offset(1) { 1.0 } else { 0.0 }).collect();
    // constant pressure is in the kernel of the gradient block once boundary velocities are removed
    let sys = Assembler::new(&form, &space).unwrap().system(&[DirichletBC::homogeneous(0, BoundarySelector::All)]).unwrap();
    assert!(norm2(&sys.matrix.spmv(&ones)) <= 1e-12);
}

#[test]
fn allen_cahn_jacobian_matches_finite_differences() {
    let (space, _, _) = common::poisson(4);
    let form = FormDescriptor::new(FormKind::AllenCahn { cubic: 1.0 }, Forcing::Scalar(Arc::new(|x| x[0] - x[1])));
    let asm = Assembler::new(&form, &space).unwrap();
    let n = space.num_dofs();
    for s in 0..5 {
        let u = seeded_vector(n, 100 + s);
        let w = seeded_vector(n, 200 + s);
        let eps = 1e-6;
        let up: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + eps * b).collect();
        let um: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a - eps * b).collect();
        let fd: Vec<f64> = sub(&asm.residual(&up, &[]), &asm.residual(&um, &[])).iter().map(|v| v / (2.0 * eps)).collect();
        let jw = asm.linearize(&u, &[]).0.spmv(&w);
        assert!(norm2(&sub(&fd, &jw)) <= 1e-5 * norm2(&jw));
    }
}

#[test]
fn residual_at_zero_is_minus_load() {
    let (space, _, _) = common::poisson(3);
    let form = FormDescriptor::new(FormKind::AllenCahn { cubic: 1.0 }, Forcing::Scalar(Arc::new(|x| 1.0 + x[0])));
    let asm = Assembler::new(&form, &space).unwrap();
    let zero = vec![0.0; space.num_dofs()];
    let f = asm.residual(&zero, &[]);
    let mass = FormDescriptor::new(FormKind::Mass, Forcing::Scalar(Arc::new(|x| 1.0 + x[0])));
    // linear form with zero state: F(0) = -(f, v)
    let minus_load = Assembler::new(&mass, &space).unwrap().global(None).1;
    assert!(norm2(&sub(&f, &minus_load)) <= 1e-13 * norm2(&minus_load));
    assert!(dot(&f, &f) > 0.0);
}
