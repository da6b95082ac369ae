//! Hand-coded cell-integral forms, global assembly with Dirichlet
//! elimination, and assembly restricted to a cell list (the patch callback).

use std::ops::Range;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, DenseMatrix};
use crate::reference::{quadrature, Family, Mapping, QuadratureRule, Tabulation};
use crate::space::{dirichlet_dofs, DirichletBC, LocalNumbering, MixedSpace};
use crate::topology::Point;

pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;
pub type VectorFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Right-hand side data of a form.
#[derive(Clone, Default)]
pub enum Forcing {
    #[default]
    Zero,
    Scalar(ScalarFn),
    Vector(VectorFn),
}

impl std::fmt::Debug for Forcing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Forcing::Zero => write!(f, "Zero"),
            Forcing::Scalar(_) => write!(f, "Scalar(fn)"),
            Forcing::Vector(_) => write!(f, "Vector(fn)"),
        }
    }
}

impl Forcing {
    fn eval(&self, x: [f64; 2]) -> [f64; 2] {
        match self {
            Forcing::Zero => [0.0, 0.0],
            Forcing::Scalar(f) => [f(x), 0.0],
            Forcing::Vector(f) => f(x),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FormKind {
    Mass,
    Stiffness,
    /// `(u, v) + alpha (div u, div v)`
    HdivRiesz { alpha: f64 },
    /// `(u, v) + alpha (curl u, curl v)`
    HcurlRiesz { alpha: f64 },
    /// `mu (E(u), E(v)) + gamma (div u, div v)`
    Elasticity { mu: f64, gamma: f64 },
    /// `2 nu (E(u), E(v)) - (p, div v) - (q, div u)`
    Stokes { nu: f64 },
    /// `(grad u, grad v) + (c u^3 - u - f, v)`
    AllenCahn { cubic: f64 },
}

#[derive(Clone, Debug)]
pub struct FormDescriptor {
    pub kind: FormKind,
    pub forcing: Forcing,
}

impl FormDescriptor {
    pub fn new(kind: FormKind, forcing: Forcing) -> Self {
        Self { kind, forcing }
    }

    pub fn is_symmetric(&self) -> bool {
        !matches!(self.kind, FormKind::Stokes { .. })
    }

    pub fn is_nonlinear(&self) -> bool {
        matches!(self.kind, FormKind::AllenCahn { cubic } if cubic != 0.0)
    }

    fn check_parameters(&self) -> Result<()> {
        let bad = |name: &str, v: f64| Error::InvalidArgument(format!("{name} must be positive, got {v}"));
        match self.kind {
            // alpha = 0 is allowed: the form reduces to the mass matrix
            FormKind::HdivRiesz { alpha } | FormKind::HcurlRiesz { alpha } if !(alpha >= 0.0) => {
                Err(bad("alpha", alpha))
            }
            FormKind::Elasticity { mu, .. } if !(mu > 0.0) => Err(bad("mu", mu)),
            FormKind::Elasticity { gamma, .. } if !(gamma > 0.0) => Err(bad("gamma", gamma)),
            FormKind::Stokes { nu } if !(nu > 0.0) => Err(bad("nu", nu)),
            FormKind::AllenCahn { cubic } if !cubic.is_finite() => Err(bad("cubic", cubic)),
            _ => Ok(()),
        }
    }

    fn check_space(&self, space: &MixedSpace) -> Result<()> {
        let mismatch = |m: &str| Err(Error::FormMismatch(m.to_string()));
        let single = space.num_subspaces() == 1;
        let s0 = space.subspace(0);
        let fam = s0.element().family();
        let scalar_lagrange = fam == Family::Lagrange && s0.components() == 1;
        match self.kind {
            FormKind::Mass if !single => mismatch("mass needs a single space"),
            FormKind::Stiffness | FormKind::AllenCahn { .. } if !(single && fam == Family::Lagrange) => {
                mismatch("needs a single Lagrange space")
            }
            FormKind::AllenCahn { .. } if !scalar_lagrange => mismatch("allen_cahn needs a scalar space"),
            FormKind::HdivRiesz { .. } if !(single && fam == Family::RaviartThomas) => {
                mismatch("hdiv_riesz needs a Raviart-Thomas space")
            }
            FormKind::HcurlRiesz { .. } if !(single && fam == Family::NedelecFirstKind) => {
                mismatch("hcurl_riesz needs a Nedelec space")
            }
            FormKind::Elasticity { .. } if !(single && fam == Family::Lagrange && s0.components() == 2) => {
                mismatch("elasticity needs a vector Lagrange space")
            }
            FormKind::Stokes { .. } => {
                let ok = space.num_subspaces() == 2
                    && fam == Family::Lagrange
                    && s0.components() == 2
                    && space.subspace(1).element().family() == Family::Lagrange
                    && space.subspace(1).components() == 1;
                if ok {
                    Ok(())
                } else {
                    mismatch("stokes needs vector Lagrange x scalar Lagrange")
                }
            }
            _ => Ok(()),
        }
    }
}

/// Global system after Dirichlet elimination.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub bcs: Vec<(usize, f64)>,
}

/// Tabulated form data over one mixed space; element kernels and scatter.
pub struct Assembler<'a> {
    form: &'a FormDescriptor,
    space: &'a MixedSpace,
    quad: QuadratureRule,
    tabs: Vec<Tabulation>,
    ranges: Vec<Range<usize>>,
}

#[derive(Clone, Copy, Default)]
struct Shape {
    val: [f64; 2],
    grad: [[f64; 2]; 2],
}

impl Shape {
    fn div(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }

    fn curl(&self) -> f64 {
        self.grad[1][0] - self.grad[0][1]
    }

    fn sym(&self) -> [[f64; 2]; 2] {
        let g = self.grad;
        let o = 0.5 * (g[0][1] + g[1][0]);
        [[g[0][0], o], [o, g[1][1]]]
    }
}

fn ddot(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

impl<'a> Assembler<'a> {
    pub fn new(form: &'a FormDescriptor, space: &'a MixedSpace) -> Result<Self> {
        form.check_parameters()?;
        form.check_space(space)?;
        let kmax = space.subspaces().iter().map(|s| s.element().embedded_degree()).max().unwrap_or(1);
        let degree = match form.kind {
            FormKind::AllenCahn { .. } => 4 * kmax,
            _ => 2 * kmax + 2,
        };
        let quad = quadrature(space.mesh().cell_type(), degree)?;
        let tabs = space.subspaces().iter().map(|s| s.element().tabulate(&quad.points, 1)).collect();
        let mut ranges = Vec::new();
        let mut start = 0;
        for s in space.subspaces() {
            ranges.push(start..start + s.dofs_per_cell());
            start += s.dofs_per_cell();
        }
        Ok(Self { form, space, quad, tabs, ranges })
    }

    pub fn space(&self) -> &MixedSpace {
        self.space
    }

    pub fn form(&self) -> &FormDescriptor {
        self.form
    }

    fn shapes(&self, q: usize, jac: &[[f64; 2]; 2], det: f64, out: &mut [Shape]) {
        let jinv = [[jac[1][1] / det, -jac[0][1] / det], [-jac[1][0] / det, jac[0][0] / det]];
        for (s, sub) in self.space.subspaces().iter().enumerate() {
            let tab = &self.tabs[s];
            let el = sub.element();
            let comps = sub.components();
            let base = self.ranges[s].start;
            for b in 0..el.n_basis() {
                // reference value and gradient (component x reference direction)
                let mut rv = [0.0; 2];
                let mut rg = [[0.0; 2]; 2];
                for c in 0..el.value_size() {
                    rv[c] = tab.value(q, b, c);
                    for e in 0..2 {
                        rg[c][e] = tab.deriv(q, b, c, e);
                    }
                }
                // push forward of the value map: M applied to reference vectors
                let m = match el.mapping() {
                    Mapping::Identity => [[1.0, 0.0], [0.0, 1.0]],
                    Mapping::ContravariantPiola => [[jac[0][0] / det, jac[0][1] / det], [jac[1][0] / det, jac[1][1] / det]],
                    Mapping::CovariantPiola => [[jinv[0][0], jinv[1][0]], [jinv[0][1], jinv[1][1]]],
                };
                let (pv, pg) = if el.mapping() == Mapping::Identity {
                    (rv, rg)
                } else {
                    let mut pv = [0.0; 2];
                    let mut pg = [[0.0; 2]; 2];
                    for c in 0..2 {
                        for e in 0..2 {
                            pv[c] += m[c][e] * rv[e];
                            pg[c][0] += m[c][e] * rg[e][0];
                            pg[c][1] += m[c][e] * rg[e][1];
                        }
                    }
                    (pv, pg)
                };
                // chain rule to physical derivatives
                let mut grad = [[0.0; 2]; 2];
                for c in 0..2 {
                    for d in 0..2 {
                        grad[c][d] = pg[c][0] * jinv[0][d] + pg[c][1] * jinv[1][d];
                    }
                }
                if comps == 1 {
                    out[base + b] = Shape { val: pv, grad };
                } else {
                    for comp in 0..comps {
                        let mut sh = Shape::default();
                        sh.val[comp] = pv[0];
                        sh.grad[comp] = grad[0];
                        out[base + b * comps + comp] = sh;
                    }
                }
            }
        }
    }

    /// Element Jacobian and residual on cell `c` at the cell-local (signed)
    /// state; a missing state means zero. For linear forms the residual is
    /// `K u - load`.
    pub fn element(&self, c: Point, state: Option<&[f64]>) -> (DenseMatrix, Vec<f64>) {
        let n = self.space.dofs_per_cell();
        let mesh = self.space.mesh();
        let mut k = DenseMatrix::zeros(n, n);
        let mut f = vec![0.0; n];
        let mut load = vec![0.0; n];
        let mut sh = vec![Shape::default(); n];
        let vel = self.ranges[0].clone();
        for (q, (&xi, &wq)) in self.quad.points.iter().zip(&self.quad.weights).enumerate() {
            let jac = mesh.jacobian(c, xi);
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            let w = wq * det.abs();
            self.shapes(q, &jac, det, &mut sh);
            let x = mesh.map_point(c, xi);
            let fx = self.form.forcing.eval(x);
            match self.form.kind {
                FormKind::AllenCahn { cubic } => {
                    let (mut u, mut gu) = (0.0, [0.0; 2]);
                    if let Some(s) = state {
                        for (l, shl) in sh.iter().enumerate() {
                            u += s[l] * shl.val[0];
                            gu[0] += s[l] * shl.grad[0][0];
                            gu[1] += s[l] * shl.grad[0][1];
                        }
                    }
                    let react = 3.0 * cubic * u * u - 1.0;
                    let src = cubic * u * u * u - u - fx[0];
                    for i in 0..n {
                        let (vi, gi) = (sh[i].val[0], sh[i].grad[0]);
                        f[i] += w * (gu[0] * gi[0] + gu[1] * gi[1] + src * vi);
                        for j in 0..n {
                            let (vj, gj) = (sh[j].val[0], sh[j].grad[0]);
                            k[(i, j)] += w * (gi[0] * gj[0] + gi[1] * gj[1] + react * vi * vj);
                        }
                    }
                }
                FormKind::Stokes { nu } => {
                    let pre = self.ranges[1].clone();
                    let eps: Vec<[[f64; 2]; 2]> = sh[vel.clone()].iter().map(Shape::sym).collect();
                    for i in vel.clone() {
                        load[i] += w * (fx[0] * sh[i].val[0] + fx[1] * sh[i].val[1]);
                        for j in vel.clone() {
                            k[(i, j)] += w * 2.0 * nu * ddot(&eps[i], &eps[j]);
                        }
                        let di = sh[i].div();
                        for j in pre.clone() {
                            let v = -w * sh[j].val[0] * di;
                            k[(i, j)] += v;
                            k[(j, i)] += v;
                        }
                    }
                }
                kind => {
                    let eps: Vec<[[f64; 2]; 2]> = match kind {
                        FormKind::Elasticity { .. } => sh.iter().map(Shape::sym).collect(),
                        _ => Vec::new(),
                    };
                    for i in 0..n {
                        let si = &sh[i];
                        load[i] += w * (fx[0] * si.val[0] + fx[1] * si.val[1]);
                        for j in 0..n {
                            let sj = &sh[j];
                            let mass = si.val[0] * sj.val[0] + si.val[1] * sj.val[1];
                            let v = match kind {
                                FormKind::Mass => mass,
                                FormKind::Stiffness => ddot(&si.grad, &sj.grad),
                                FormKind::HdivRiesz { alpha } => mass + alpha * si.div() * sj.div(),
                                FormKind::HcurlRiesz { alpha } => mass + alpha * si.curl() * sj.curl(),
                                FormKind::Elasticity { mu, gamma } => {
                                    mu * ddot(&eps[i], &eps[j]) + gamma * si.div() * sj.div()
                                }
                                _ => unreachable!(),
                            };
                            k[(i, j)] += w * v;
                        }
                    }
                }
            }
        }
        if !matches!(self.form.kind, FormKind::AllenCahn { .. }) {
            let ku = state.map(|s| k.matvec(s)).unwrap_or_else(|| vec![0.0; n]);
            for i in 0..n {
                f[i] = ku[i] - load[i];
            }
        }
        (k, f)
    }

    fn gather(&self, dofs: &[usize], signs: &[f64], state: &[f64]) -> Vec<f64> {
        dofs.iter().zip(signs).map(|(&d, &s)| s * state[d]).collect()
    }

    /// Unconstrained global Jacobian and residual at `state` (zero if absent).
    pub fn global(&self, state: Option<&[f64]>) -> (CsrMatrix, Vec<f64>) {
        let ndofs = self.space.num_dofs();
        let mut trip = Vec::new();
        let mut res = vec![0.0; ndofs];
        for c in self.space.mesh().topology.stratum(2) {
            let (dofs, signs) = self.space.cell_dofs(c);
            let local = state.map(|s| self.gather(&dofs, &signs, s));
            let (ke, fe) = self.element(c, local.as_deref());
            for i in 0..dofs.len() {
                res[dofs[i]] += signs[i] * fe[i];
                for j in 0..dofs.len() {
                    trip.push((dofs[i], dofs[j], signs[i] * signs[j] * ke[(i, j)]));
                }
            }
        }
        (CsrMatrix::from_triplets(ndofs, ndofs, &trip), res)
    }

    /// Linear system `A x = b` with `A = J(0)`, `b = -F(0)` and the
    /// conditions eliminated symmetrically.
    pub fn system(&self, bcs: &[DirichletBC]) -> Result<AssembledSystem> {
        let (a, f) = self.global(None);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let bc = dirichlet_dofs(self.space, bcs)?;
        let (matrix, rhs) = eliminate(a, rhs, &bc);
        Ok(AssembledSystem { matrix, rhs, bcs: bc })
    }

    /// Newton system at `state`: Jacobian with constrained rows and columns
    /// replaced by identity, right-hand side `-F(state)` zeroed there.
    pub fn linearize(&self, state: &[f64], constrained: &[usize]) -> (CsrMatrix, Vec<f64>) {
        let (j, f) = self.global(Some(state));
        let bc: Vec<(usize, f64)> = constrained.iter().map(|&d| (d, 0.0)).collect();
        let rhs = f.iter().map(|v| -v).collect();
        eliminate(j, rhs, &bc)
    }

    /// Global residual with constrained entries set to zero.
    pub fn residual(&self, state: &[f64], constrained: &[usize]) -> Vec<f64> {
        let mut res = vec![0.0; self.space.num_dofs()];
        for c in self.space.mesh().topology.stratum(2) {
            let (dofs, signs) = self.space.cell_dofs(c);
            let local = self.gather(&dofs, &signs, state);
            let (_, fe) = self.element(c, Some(&local));
            for i in 0..dofs.len() {
                res[dofs[i]] += signs[i] * fe[i];
            }
        }
        for &d in constrained {
            res[d] = 0.0;
        }
        res
    }

    /// Jacobian over `rows x cols` and residual over `rows`, summed over the
    /// given cells only. Dofs outside a numbering are dropped; the state is
    /// given on its own numbering with absent dofs read as zero.
    pub fn cells(
        &self,
        cells: &[Point],
        rows: &LocalNumbering,
        cols: &LocalNumbering,
        state: Option<(&LocalNumbering, &[f64])>,
    ) -> (DenseMatrix, Vec<f64>) {
        let mut m = DenseMatrix::zeros(rows.len(), cols.len());
        let mut r = vec![0.0; rows.len()];
        for &c in cells {
            let (dofs, signs) = self.space.cell_dofs(c);
            let local = state.map(|(num, vals)| {
                dofs.iter()
                    .zip(&signs)
                    .map(|(&d, &s)| num.local(d).map_or(0.0, |l| s * vals[l]))
                    .collect::<Vec<f64>>()
            });
            let (ke, fe) = self.element(c, local.as_deref());
            let ri: Vec<Option<usize>> = dofs.iter().map(|&d| rows.local(d)).collect();
            let ci: Vec<Option<usize>> = dofs.iter().map(|&d| cols.local(d)).collect();
            for i in 0..dofs.len() {
                let Some(li) = ri[i] else { continue };
                r[li] += signs[i] * fe[i];
                for j in 0..dofs.len() {
                    if let Some(lj) = ci[j] {
                        m[(li, lj)] += signs[i] * signs[j] * ke[(i, j)];
                    }
                }
            }
        }
        (m, r)
    }
}

/// Symmetric elimination: constrained rows and columns zeroed, unit
/// diagonal, right-hand side lifted.
pub fn eliminate(a: CsrMatrix, mut rhs: Vec<f64>, bc: &[(usize, f64)]) -> (CsrMatrix, Vec<f64>) {
    let n = a.nrows();
    let mut value = vec![None; n];
    for &(d, v) in bc {
        value[d] = Some(v);
    }
    let mut a = a;
    for i in 0..n {
        let (cols, vals) = a.row_mut(i);
        if let Some(g) = value[i] {
            for (c, v) in cols.iter().zip(vals.iter_mut()) {
                *v = if *c == i { 1.0 } else { 0.0 };
            }
            rhs[i] = g;
        } else {
            for (c, v) in cols.iter().zip(vals.iter_mut()) {
                if let Some(g) = value[*c] {
                    rhs[i] -= *v * g;
                    *v = 0.0;
                }
            }
        }
    }
    (a, rhs)
}

pub fn assemble_global(form: &FormDescriptor, space: &MixedSpace, bcs: &[DirichletBC]) -> Result<AssembledSystem> {
    Assembler::new(form, space)?.system(bcs)
}

pub fn assemble_cells(
    form: &FormDescriptor,
    space: &MixedSpace,
    cells: &[Point],
    rows: &LocalNumbering,
    cols: &LocalNumbering,
    state: Option<(&LocalNumbering, &[f64])>,
) -> Result<(DenseMatrix, Vec<f64>)> {
    Ok(Assembler::new(form, space)?.cells(cells, rows, cols, state))
}

pub fn residual(form: &FormDescriptor, space: &MixedSpace, state: &[f64], bcs: &[DirichletBC]) -> Result<Vec<f64>> {
    if state.len() != space.num_dofs() {
        return Err(Error::InvalidArgument("state length does not match the space".into()));
    }
    let constrained: Vec<usize> = dirichlet_dofs(space, bcs)?.into_iter().map(|(d, _)| d).collect();
    Ok(Assembler::new(form, space)?.residual(state, &constrained))
}
