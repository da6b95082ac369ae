//! Reference finite elements and quadrature.
//!
//! Every element is built the same way: a polynomial spanning set expressed
//! in monomials, a list of dof functionals, and the basis obtained by
//! inverting the functional-on-spanning-set (generalized Vandermonde) matrix.

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::topology::CellType;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Lagrange,
    RaviartThomas,
    NedelecFirstKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mapping {
    Identity,
    ContravariantPiola,
    CovariantPiola,
}

#[derive(Clone, Debug)]
pub struct ReferenceElement {
    cell: CellType,
    family: Family,
    degree: usize,
    value_size: usize,
    mapping: Mapping,
    /// `entity_dofs[dim][local entity]` lists local dof indices.
    entity_dofs: [Vec<Vec<usize>>; 3],
    monomials: Vec<(u32, u32)>,
    /// `coefficients[basis][component][monomial]`
    coefficients: Vec<Vec<Vec<f64>>>,
    /// Point-evaluation nodes (Lagrange only).
    nodes: Option<Vec<[f64; 2]>>,
}

/// Basis values and reference gradients at a set of points.
///
/// `values[(p * n_basis + i) * value_size + c]`,
/// `derivs[((p * n_basis + i) * value_size + c) * 2 + d]`.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub n_points: usize,
    pub n_basis: usize,
    pub value_size: usize,
    pub values: Vec<f64>,
    pub derivs: Option<Vec<f64>>,
}

impl Tabulation {
    pub fn value(&self, p: usize, i: usize, c: usize) -> f64 {
        self.values[(p * self.n_basis + i) * self.value_size + c]
    }

    pub fn deriv(&self, p: usize, i: usize, c: usize, d: usize) -> f64 {
        self.derivs.as_ref().expect("tabulated without derivatives")
            [((p * self.n_basis + i) * self.value_size + c) * 2 + d]
    }
}

/// A linear functional acting on a vector-valued polynomial, expressed as
/// a weighted sum of point evaluations of components.
struct Functional {
    terms: Vec<([f64; 2], [f64; 2])>, // (point, weights per component)
}

impl ReferenceElement {
    pub fn cell(&self) -> CellType {
        self.cell
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn value_size(&self) -> usize {
        self.value_size
    }

    pub fn mapping(&self) -> Mapping {
        self.mapping
    }

    pub fn n_basis(&self) -> usize {
        self.coefficients.len()
    }

    pub fn entity_dofs(&self, dim: usize, entity: usize) -> &[usize] {
        &self.entity_dofs[dim][entity]
    }

    pub fn nodes(&self) -> Option<&[[f64; 2]]> {
        self.nodes.as_deref()
    }

    /// Highest total polynomial degree of the basis (for quadrature choice).
    pub fn embedded_degree(&self) -> usize {
        match (self.family, self.cell) {
            (Family::Lagrange, _) => self.degree,
            _ => self.degree + 1,
        }
    }

    pub fn tabulate(&self, points: &[[f64; 2]], deriv: usize) -> Tabulation {
        let nb = self.n_basis();
        let vs = self.value_size;
        let mut values = vec![0.0; points.len() * nb * vs];
        let mut derivs = (deriv > 0).then(|| vec![0.0; points.len() * nb * vs * 2]);
        let mut mono = vec![0.0; self.monomials.len()];
        let mut dmono = vec![[0.0; 2]; self.monomials.len()];
        for (p, x) in points.iter().enumerate() {
            for (k, &(a, b)) in self.monomials.iter().enumerate() {
                mono[k] = x[0].powi(a as i32) * x[1].powi(b as i32);
                dmono[k] = [
                    if a > 0 { a as f64 * x[0].powi(a as i32 - 1) * x[1].powi(b as i32) } else { 0.0 },
                    if b > 0 { b as f64 * x[0].powi(a as i32) * x[1].powi(b as i32 - 1) } else { 0.0 },
                ];
            }
            for i in 0..nb {
                for c in 0..vs {
                    let coef = &self.coefficients[i][c];
                    let idx = (p * nb + i) * vs + c;
                    values[idx] = coef.iter().zip(&mono).map(|(a, m)| a * m).sum();
                    if let Some(dv) = derivs.as_mut() {
                        for d in 0..2 {
                            dv[idx * 2 + d] = coef.iter().zip(&dmono).map(|(a, m)| a * m[d]).sum();
                        }
                    }
                }
            }
        }
        Tabulation { n_points: points.len(), n_basis: nb, value_size: vs, values, derivs }
    }

    /// Applies the dof functionals to arbitrary functions given by their
    /// values; used to check the nodal property.
    pub fn dual_matrix_on_basis(&self) -> DenseMatrix {
        let functionals = self.functionals();
        let nb = self.n_basis();
        let mut m = DenseMatrix::zeros(nb, nb);
        for (i, f) in functionals.iter().enumerate() {
            let pts: Vec<[f64; 2]> = f.terms.iter().map(|t| t.0).collect();
            let tab = self.tabulate(&pts, 0);
            for j in 0..nb {
                let mut s = 0.0;
                for (q, (_, w)) in f.terms.iter().enumerate() {
                    for c in 0..self.value_size {
                        s += w[c] * tab.value(q, j, c);
                    }
                }
                m[(i, j)] = s;
            }
        }
        m
    }

    /// Dof functionals as weighted point evaluations `(point, weights per
    /// value component)` on the reference cell.
    pub fn functional_terms(&self) -> Vec<Vec<([f64; 2], [f64; 2])>> {
        self.functionals().into_iter().map(|f| f.terms).collect()
    }

    fn functionals(&self) -> Vec<Functional> {
        match self.family {
            Family::Lagrange => self
                .nodes
                .as_ref()
                .unwrap()
                .iter()
                .map(|&x| Functional { terms: vec![(x, [1.0, 0.0])] })
                .collect(),
            Family::RaviartThomas => edge_functionals(self.cell, true),
            Family::NedelecFirstKind => edge_functionals(self.cell, false),
        }
    }
}

/// Integral moments `int_0^1 u(va + s t) . w ds` along each reference edge,
/// with `w = (t_y, -t_x)` (normal flux) or `w = t` (tangential circulation).
fn edge_functionals(cell: CellType, normal: bool) -> Vec<Functional> {
    let verts = cell.reference_vertices();
    let (gp, gw) = gauss_legendre(2);
    cell.edge_vertices()
        .iter()
        .map(|&[a, b]| {
            let (va, vb) = (verts[a], verts[b]);
            let t = [vb[0] - va[0], vb[1] - va[1]];
            let w = if normal { [t[1], -t[0]] } else { t };
            let terms = gp
                .iter()
                .zip(&gw)
                .map(|(&s, &ws)| ([va[0] + s * t[0], va[1] + s * t[1]], [ws * w[0], ws * w[1]]))
                .collect();
            Functional { terms }
        })
        .collect()
}

fn complete_monomials(degree: usize) -> Vec<(u32, u32)> {
    let mut m = Vec::new();
    for total in 0..=degree as u32 {
        for b in 0..=total {
            m.push((total - b, b));
        }
    }
    m
}

fn tensor_monomials(degree: usize) -> Vec<(u32, u32)> {
    let mut m = Vec::new();
    for b in 0..=degree as u32 {
        for a in 0..=degree as u32 {
            m.push((a, b));
        }
    }
    m
}

/// Finishes a Ciarlet element: `span[j][c][k]` are spanning-set coefficients.
fn build(
    cell: CellType,
    family: Family,
    degree: usize,
    value_size: usize,
    mapping: Mapping,
    entity_dofs: [Vec<Vec<usize>>; 3],
    monomials: Vec<(u32, u32)>,
    span: Vec<Vec<Vec<f64>>>,
    nodes: Option<Vec<[f64; 2]>>,
) -> ReferenceElement {
    let mut elem = ReferenceElement {
        cell,
        family,
        degree,
        value_size,
        mapping,
        entity_dofs,
        monomials,
        coefficients: span.clone(),
        nodes,
    };
    // D[i][j] = l_i(p_j); basis = span * D^{-1}
    let d = elem.dual_matrix_on_basis();
    let inv = d.lu().expect("unisolvent element").inverse();
    let n = span.len();
    let nm = elem.monomials.len();
    let mut coefficients = vec![vec![vec![0.0; nm]; value_size]; n];
    for (k, basis) in coefficients.iter_mut().enumerate() {
        for (j, pj) in span.iter().enumerate() {
            let w = inv[(j, k)];
            if w == 0.0 {
                continue;
            }
            for c in 0..value_size {
                for m in 0..nm {
                    basis[c][m] += w * pj[c][m];
                }
            }
        }
    }
    elem.coefficients = coefficients;
    elem
}

/// Continuous Lagrange element with equispaced nodes: `P_k` (k in 1..=4) on
/// triangles, `Q_k` (k in 1..=2) on quadrilaterals.
pub fn lagrange(cell: CellType, k: usize) -> Result<ReferenceElement> {
    let max = match cell {
        CellType::Triangle => 4,
        CellType::Quadrilateral => 2,
    };
    if k == 0 || k > max {
        return Err(Error::UnsupportedDegree { family: "Lagrange", degree: k });
    }
    let kf = k as f64;
    let verts = cell.reference_vertices();
    let mut nodes: Vec<[f64; 2]> = verts.to_vec();
    let mut entity_dofs: [Vec<Vec<usize>>; 3] = [
        (0..verts.len()).map(|v| vec![v]).collect(),
        Vec::new(),
        Vec::new(),
    ];
    for &[a, b] in cell.edge_vertices() {
        let (va, vb) = (verts[a], verts[b]);
        let mut dofs = Vec::new();
        for m in 1..k {
            let s = m as f64 / kf;
            dofs.push(nodes.len());
            nodes.push([va[0] + s * (vb[0] - va[0]), va[1] + s * (vb[1] - va[1])]);
        }
        entity_dofs[1].push(dofs);
    }
    let mut interior = Vec::new();
    match cell {
        CellType::Triangle => {
            for j in 1..k {
                for i in 1..k {
                    if i + j < k {
                        interior.push(nodes.len());
                        nodes.push([i as f64 / kf, j as f64 / kf]);
                    }
                }
            }
        }
        CellType::Quadrilateral => {
            for j in 1..k {
                for i in 1..k {
                    interior.push(nodes.len());
                    nodes.push([i as f64 / kf, j as f64 / kf]);
                }
            }
        }
    }
    entity_dofs[2].push(interior);

    let monomials = match cell {
        CellType::Triangle => complete_monomials(k),
        CellType::Quadrilateral => tensor_monomials(k),
    };
    let nm = monomials.len();
    assert_eq!(nm, nodes.len());
    let span = (0..nm)
        .map(|j| {
            let mut c = vec![0.0; nm];
            c[j] = 1.0;
            vec![c]
        })
        .collect();
    Ok(build(cell, Family::Lagrange, k, 1, Mapping::Identity, entity_dofs, monomials, span, Some(nodes)))
}

fn lowest_order_edge_element(cell: CellType, family: Family) -> Result<ReferenceElement> {
    if cell != CellType::Triangle {
        return Err(Error::CellTypeMismatch);
    }
    // span {(1,0), (0,1), (x,y)} for RT0; rotated by 90 degrees for Ned0
    let monomials = complete_monomials(1); // 1, x, y
    let rt = vec![
        vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]],
        vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]],
        vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
    ];
    let (span, mapping) = match family {
        Family::RaviartThomas => (rt, Mapping::ContravariantPiola),
        _ => {
            let rotated = rt
                .into_iter()
                .map(|p| vec![p[1].iter().map(|v| -v).collect(), p[0].clone()])
                .collect();
            (rotated, Mapping::CovariantPiola)
        }
    };
    let entity_dofs = [vec![vec![], vec![], vec![]], vec![vec![0], vec![1], vec![2]], vec![vec![]]];
    Ok(build(cell, family, 0, 2, mapping, entity_dofs, monomials, span, None))
}

/// Lowest-order Raviart-Thomas on triangles: one normal-flux dof per edge.
pub fn raviart_thomas_0(cell: CellType) -> Result<ReferenceElement> {
    lowest_order_edge_element(cell, Family::RaviartThomas)
}

/// Lowest-order Nedelec (first kind) on triangles: one tangential dof per edge.
pub fn nedelec_0(cell: CellType) -> Result<ReferenceElement> {
    lowest_order_edge_element(cell, Family::NedelecFirstKind)
}

/// `(x, y) -> (-y, x)`
pub fn rotate90(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub exact_degree: usize,
}

/// Gauss-Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = Vec::with_capacity(n);
    let mut w = Vec::with_capacity(n);
    for i in 0..n {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pnm1) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x.push(0.5 * (1.0 - z));
        w.push(1.0 / ((1.0 - z * z) * dp * dp));
    }
    (x, w)
}

/// Quadrature exact for polynomials of total degree `degree` (triangles, via
/// the collapsed square) or of degree `degree` in each variable
/// (quadrilaterals, tensor Gauss).
pub fn quadrature(cell: CellType, degree: usize) -> Result<QuadratureRule> {
    if degree > 20 {
        return Err(Error::InvalidArgument(format!("quadrature degree {degree} > 20")));
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    match cell {
        CellType::Quadrilateral => {
            let (x, w) = gauss_legendre(degree / 2 + 1);
            for (yj, wj) in x.iter().zip(&w) {
                for (xi, wi) in x.iter().zip(&w) {
                    points.push([*xi, *yj]);
                    weights.push(wi * wj);
                }
            }
        }
        CellType::Triangle => {
            // (s, t) -> (s, t (1 - s)), Jacobian (1 - s)
            let (xs, ws) = gauss_legendre(degree.div_ceil(2) + 1);
            let (xt, wt) = gauss_legendre(degree / 2 + 1);
            for (s, wsi) in xs.iter().zip(&ws) {
                for (t, wti) in xt.iter().zip(&wt) {
                    points.push([*s, t * (1.0 - s)]);
                    weights.push(wsi * wti * (1.0 - s));
                }
            }
        }
    }
    Ok(QuadratureRule { points, weights, exact_degree: degree })
}
