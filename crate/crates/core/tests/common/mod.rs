#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeSet;
use std::sync::Arc;

use patchmg::forms::{Assembler, AssembledSystem, Forcing, FormDescriptor, FormKind};
use patchmg::linalg::CsrMatrix;
use patchmg::reference::lagrange;
use patchmg::space::{BoundarySelector, DirichletBC, FunctionSpace, MixedSpace};
use patchmg::topology::{build_structured, CellType, PlexTopology, Point};

/// Boolean reachability under `cone` (downward) or `support` (upward),
/// computed by Warshall's algorithm on the full incidence matrix.
pub struct Reachability {
    down: Vec<Vec<bool>>,
}

impl Reachability {
    pub fn new(topo: &PlexTopology) -> Self {
        let n = topo.num_points();
        let mut down = vec![vec![false; n]; n];
        for p in 0..n {
            down[p][p] = true;
            for &q in topo.cone(p).unwrap() {
                down[p][q] = true;
            }
        }
        for k in 0..n {
            for i in 0..n {
                if down[i][k] {
                    for j in 0..n {
                        if down[k][j] {
                            down[i][j] = true;
                        }
                    }
                }
            }
        }
        Self { down }
    }

    pub fn closure(&self, seeds: &BTreeSet<Point>) -> BTreeSet<Point> {
        let n = self.down.len();
        (0..n).filter(|&q| seeds.iter().any(|&s| self.down[s][q])).collect()
    }

    pub fn star(&self, seeds: &BTreeSet<Point>) -> BTreeSet<Point> {
        let n = self.down.len();
        (0..n).filter(|&q| seeds.iter().any(|&s| self.down[q][s])).collect()
    }
}

pub fn poisson(n: usize) -> (MixedSpace, Vec<DirichletBC>, FormDescriptor) {
    let mesh = Arc::new(build_structured(n, n, CellType::Triangle, [1.0, 1.0]).unwrap());
    let space: MixedSpace = FunctionSpace::new(mesh, Arc::new(lagrange(CellType::Triangle, 1).unwrap())).unwrap().into();
    let bcs = vec![DirichletBC::homogeneous(0, BoundarySelector::All)];
    let form = FormDescriptor::new(FormKind::Stiffness, Forcing::Scalar(Arc::new(|x| 1.0 + x[0] * x[1])));
    (space, bcs, form)
}

pub fn assemble(form: &FormDescriptor, space: &MixedSpace, bcs: &[DirichletBC]) -> AssembledSystem {
    Assembler::new(form, space).unwrap().system(bcs).unwrap()
}

/// One damped Jacobi sweep on the free dofs.
pub fn jacobi(a: &CsrMatrix, b: &[f64], x: &[f64], free: &[bool]) -> Vec<f64> {
    let mut out = x.to_vec();
    for i in 0..x.len() {
        if !free[i] {
            continue;
        }
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            s -= v * x[j];
            if j == i {
                diag = v;
            }
        }
        out[i] = x[i] + s / diag;
    }
    out
}

/// One lexicographic Gauss-Seidel sweep on the free dofs.
pub fn gauss_seidel(a: &CsrMatrix, b: &[f64], x: &[f64], free: &[bool]) -> Vec<f64> {
    let mut x = x.to_vec();
    for i in 0..x.len() {
        if !free[i] {
            continue;
        }
        let (cols, vals) = a.row(i);
        let mut s = b[i];
        let mut diag = 0.0;
        for (&j, &v) in cols.iter().zip(vals) {
            s -= v * x[j];
            if j == i {
                diag = v;
            }
        }
        x[i] += s / diag;
    }
    x
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn symmetric_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-26 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_abs_diff(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}
