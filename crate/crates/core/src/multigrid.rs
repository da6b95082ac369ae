//! Nested geometric hierarchies with rediscretized level operators,
//! interpolation transfers and patch-smoothed V- and F-cycles.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{Assembler, AssembledSystem, FormDescriptor};
use crate::linalg::{dot, lanczos_extremes_with, norm2, seeded_vector, CsrMatrix};
use crate::patchsmoother::{DenseSolver, LocalType, PatchSmoother, SmootherConfig};
use crate::reference::Mapping;
use crate::space::{dirichlet_dofs, DirichletBC, FunctionSpace, MixedSpace};
use crate::topology::{uniform_refine, Mesh, RefinementMap};

fn push_forward(mapping: Mapping, j: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    match mapping {
        Mapping::Identity => v,
        Mapping::ContravariantPiola => [(j[0][0] * v[0] + j[0][1] * v[1]) / det, (j[1][0] * v[0] + j[1][1] * v[1]) / det],
        Mapping::CovariantPiola => [(j[1][1] * v[0] - j[1][0] * v[1]) / det, (-j[0][1] * v[0] + j[0][0] * v[1]) / det],
    }
}

fn pull_back(mapping: Mapping, j: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    match mapping {
        Mapping::Identity => v,
        // det J^{-1} v
        Mapping::ContravariantPiola => [j[1][1] * v[0] - j[0][1] * v[1], -j[1][0] * v[0] + j[0][0] * v[1]],
        // J^T v
        Mapping::CovariantPiola => [j[0][0] * v[0] + j[1][0] * v[1], j[0][1] * v[0] + j[1][1] * v[1]],
    }
}

/// Canonical interpolation of the coarse space into the fine space: each
/// fine dof functional applied to every coarse basis function.
pub fn build_prolongation(coarse: &FunctionSpace, fine: &FunctionSpace, map: &RefinementMap) -> Result<CsrMatrix> {
    let (ce, fe) = (coarse.element(), fine.element());
    if ce.family() != fe.family() || ce.degree() != fe.degree() || coarse.components() != fine.components() {
        return Err(Error::InvalidArgument("prolongation needs matching elements".into()));
    }
    let (cmesh, fmesh) = (coarse.mesh(), fine.mesh());
    if map.parent.len() != fmesh.topology.num_points() || map.children.len() != cmesh.topology.num_points() {
        return Err(Error::NotNested("refinement map does not fit the meshes".into()));
    }
    let comps = fine.components();
    let mapping = fe.mapping();
    let terms = fe.functional_terms();
    let mut done = vec![false; fine.num_dofs()];
    let mut trip = Vec::new();
    let tol = 1e-10;
    for c in cmesh.topology.entities(2)? {
        let (cd, cs) = (coarse.cell_dofs(c), coarse.cell_signs(c));
        for &f in &map.children[c] {
            if fmesh.topology.dimension(f) != 2 {
                continue;
            }
            let (fd, fs) = (fine.cell_dofs(f), fine.cell_signs(f));
            for l in 0..fd.len() {
                if done[fd[l]] {
                    continue;
                }
                done[fd[l]] = true;
                let (b, comp) = (l / comps, l % comps);
                let mut row = vec![0.0; cd.len()];
                for &(xi, w) in &terms[b] {
                    let x = fmesh.map_point(f, xi);
                    let eta = cmesh.reference_coords(c, x);
                    let inside = match cmesh.cell_type() {
                        crate::topology::CellType::Triangle => {
                            eta[0] >= -tol && eta[1] >= -tol && eta[0] + eta[1] <= 1.0 + tol
                        }
                        crate::topology::CellType::Quadrilateral => eta.iter().all(|&t| (-tol..=1.0 + tol).contains(&t)),
                    };
                    if !inside {
                        return Err(Error::NotNested(format!("fine cell {f} leaves coarse cell {c}")));
                    }
                    let tab = ce.tabulate(&[eta], 0);
                    let jc = cmesh.jacobian(c, eta);
                    let jf = fmesh.jacobian(f, xi);
                    for bb in 0..ce.n_basis() {
                        if comps > 1 {
                            row[bb * comps + comp] += w[0] * tab.value(0, bb, 0);
                        } else {
                            let mut v = [0.0; 2];
                            for k in 0..ce.value_size() {
                                v[k] = tab.value(0, bb, k);
                            }
                            let ref_v = pull_back(mapping, &jf, push_forward(mapping, &jc, v));
                            row[bb] += w[0] * ref_v[0] + w[1] * ref_v[1];
                        }
                    }
                }
                for (j, v) in row.into_iter().enumerate() {
                    if v.abs() > 1e-13 {
                        trip.push((fd[l], cd[j], fs[l] * cs[j] * v));
                    }
                }
            }
        }
    }
    if done.iter().any(|d| !d) {
        return Err(Error::NotNested("some fine dofs are not covered by coarse cells".into()));
    }
    Ok(CsrMatrix::from_triplets(fine.num_dofs(), coarse.num_dofs(), &trip))
}

/// Block-diagonal prolongation of mixed spaces.
pub fn build_mixed_prolongation(coarse: &MixedSpace, fine: &MixedSpace, map: &RefinementMap) -> Result<CsrMatrix> {
    if coarse.num_subspaces() != fine.num_subspaces() {
        return Err(Error::InvalidArgument("mixed spaces differ in block count".into()));
    }
    let mut trip = Vec::new();
    for s in 0..coarse.num_subspaces() {
        let p = build_prolongation(coarse.subspace(s), fine.subspace(s), map)?;
        let (ro, co) = (fine.block_offset(s), coarse.block_offset(s));
        for i in 0..p.nrows() {
            let (cols, vals) = p.row(i);
            trip.extend(cols.iter().zip(vals).map(|(&j, &v)| (i + ro, j + co, v)));
        }
    }
    Ok(CsrMatrix::from_triplets(fine.num_dofs(), coarse.num_dofs(), &trip))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LevelAccel {
    /// `x <- x + scale D^{-1} r`; multiplicative smoothers sweep unscaled.
    Richardson { scale: f64 },
    /// Chebyshev iteration on `D^{-1} A`; bounds default to `(0.1, 1.1)`
    /// times an estimate of the largest eigenvalue.
    Chebyshev { order: usize, bounds: Option<(f64, f64)> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CycleType {
    V,
    F,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleConfig {
    pub pre_smooth: usize,
    pub post_smooth: usize,
    pub cycle: CycleType,
    pub accel: LevelAccel,
}

impl Default for CycleConfig {
    fn default() -> Self {
        Self { pre_smooth: 1, post_smooth: 1, cycle: CycleType::V, accel: LevelAccel::Richardson { scale: 1.0 } }
    }
}

/// `(lo, hi)` with `0 < lo <= hi`.
pub fn check_bounds(lo: f64, hi: f64) -> Result<()> {
    if lo > 0.0 && lo <= hi && hi.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidBounds { lo, hi })
    }
}

/// Chebyshev iteration of the given order for `op x = b` preconditioned by
/// `prec`, targeting the interval `bounds`.
pub fn chebyshev_smooth<A, P>(op: A, prec: P, b: &[f64], x: &[f64], order: usize, bounds: (f64, f64)) -> Result<Vec<f64>>
where
    A: Fn(&[f64]) -> Vec<f64>,
    P: Fn(&[f64]) -> Vec<f64>,
{
    let (lo, hi) = bounds;
    check_bounds(lo, hi)?;
    let theta = 0.5 * (hi + lo);
    let delta = 0.5 * (hi - lo);
    let mut x = x.to_vec();
    if order == 0 {
        return Ok(x);
    }
    let mut r: Vec<f64> = b.iter().zip(op(&x)).map(|(bi, ai)| bi - ai).collect();
    let mut d: Vec<f64> = prec(&r).into_iter().map(|z| z / theta).collect();
    let mut rho = delta / theta;
    for _ in 1..order {
        x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
        let ad = op(&d);
        r.iter_mut().zip(ad).for_each(|(ri, a)| *ri -= a);
        let den = 2.0 * theta - rho * delta;
        let rho_new = delta / den;
        let z = prec(&r);
        for (di, zi) in d.iter_mut().zip(z) {
            *di = rho_new * rho * *di + 2.0 / den * zi;
        }
        rho = rho_new;
    }
    x.iter_mut().zip(&d).for_each(|(xi, di)| *xi += di);
    Ok(x)
}

/// Builds the space on a level mesh.
pub type SpaceFactory<'a> = &'a dyn Fn(Arc<Mesh>) -> Result<MixedSpace>;
/// Kernel vector of the level operator, if any.
pub type KernelFactory<'a> = &'a dyn Fn(&MixedSpace) -> Vec<f64>;

pub struct Level {
    pub mesh: Arc<Mesh>,
    pub space: MixedSpace,
    pub system: AssembledSystem,
    pub mask: Vec<bool>,
    pub kernel: Option<Vec<f64>>,
    /// Prolongation from the next coarser level.
    pub prolongation: Option<CsrMatrix>,
    smoother: Option<PatchSmoother>,
    bounds: Option<(f64, f64)>,
    injection: Option<Vec<usize>>,
}

impl Level {
    pub fn smoother(&self) -> Option<&PatchSmoother> {
        self.smoother.as_ref()
    }

    pub fn chebyshev_bounds(&self) -> Option<(f64, f64)> {
        self.bounds
    }
}

pub struct MgHierarchy {
    levels: Vec<Level>,
    coarse: DenseSolver,
    config: CycleConfig,
    form: FormDescriptor,
}

impl MgHierarchy {
    /// Refines `base` `refinements` times and rediscretizes on every level.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        form: &FormDescriptor,
        bcs: &[DirichletBC],
        make_space: SpaceFactory,
        kernel: Option<KernelFactory>,
        base: Mesh,
        refinements: usize,
        smoother: &SmootherConfig,
        config: CycleConfig,
    ) -> Result<Self> {
        if let LevelAccel::Chebyshev { bounds: Some((lo, hi)), .. } = config.accel {
            check_bounds(lo, hi)?;
        }
        let mut meshes = vec![Arc::new(base)];
        let mut maps = Vec::new();
        for _ in 0..refinements {
            let (fine, map) = uniform_refine(meshes.last().unwrap());
            meshes.push(Arc::new(fine));
            maps.push(map);
        }
        let mut levels: Vec<Level> = Vec::new();
        for (l, mesh) in meshes.into_iter().enumerate() {
            let space = make_space(mesh.clone())?;
            let asm = Assembler::new(form, &space)?;
            let system = asm.system(bcs)?;
            let mut mask = vec![false; space.num_dofs()];
            for &(d, _) in &system.bcs {
                mask[d] = true;
            }
            let kernel = kernel.map(|k| k(&space));
            let (prolongation, injection, smoother) = if l == 0 {
                (None, None, None)
            } else {
                let p = build_mixed_prolongation(&levels[l - 1].space, &space, &maps[l - 1])?;
                let inj = injection_of(&p);
                let mut sm = PatchSmoother::build(&space, bcs, smoother.clone())?;
                sm.set_nullspace(kernel.clone());
                sm.assemble(&asm, None)?;
                (Some(p), inj, Some(sm))
            };
            levels.push(Level {
                mesh,
                space,
                system,
                mask,
                kernel,
                prolongation,
                smoother,
                bounds: None,
                injection,
            });
        }
        let coarse = DenseSolver::new(levels[0].system.matrix.to_dense(), levels[0].kernel.clone(), false)?;
        let mut h = Self { levels, coarse, config, form: form.clone() };
        h.update_bounds()?;
        Ok(h)
    }

    fn update_bounds(&mut self) -> Result<()> {
        let LevelAccel::Chebyshev { bounds, .. } = self.config.accel else {
            return Ok(());
        };
        let symmetric = self.form.is_symmetric();
        for l in 1..self.levels.len() {
            let b = match bounds {
                Some(b) => b,
                None => {
                    let lam = self.estimate_lambda_max(l, symmetric);
                    (0.1 * lam, 1.1 * lam)
                }
            };
            check_bounds(b.0, b.1)?;
            self.levels[l].bounds = Some(b);
        }
        Ok(())
    }

    /// Largest eigenvalue of `D^{-1} A` on level `l`: Lanczos in the `A`
    /// inner product for symmetric forms, power iteration otherwise.
    pub fn estimate_lambda_max(&self, l: usize, symmetric: bool) -> f64 {
        let lev = &self.levels[l];
        let sm = lev.smoother.as_ref().expect("smoothed level");
        let a = &lev.system.matrix;
        let mut start = seeded_vector(a.nrows(), 0x5eed + l as u64);
        for (s, &m) in start.iter_mut().zip(&lev.mask) {
            if m {
                *s = 0.0;
            }
        }
        if let Some(k) = &lev.kernel {
            let c = dot(k, &start) / dot(k, k);
            start.iter_mut().zip(k).for_each(|(s, kv)| *s -= c * kv);
        }
        if symmetric {
            let est = lanczos_extremes_with(|x| sm.apply_additive(&a.spmv(x)), |x, y| dot(&a.spmv(x), y), &start, 10);
            est.max
        } else {
            let mut x = start;
            let mut lam = 0.0;
            for _ in 0..20 {
                let nx = norm2(&x);
                x.iter_mut().for_each(|v| *v /= nx);
                let y = sm.apply_additive(&a.spmv(&x));
                lam = norm2(&y);
                x = y;
            }
            lam
        }
    }

    /// Rediscretizes every level operator at the state obtained by injecting
    /// `fine_state` (Lagrange spaces only).
    pub fn reassemble_at(&mut self, fine_state: &[f64]) -> Result<()> {
        let nl = self.levels.len();
        let mut state = fine_state.to_vec();
        for l in (0..nl).rev() {
            if l + 1 < nl {
                let inj = self.levels[l + 1]
                    .injection
                    .as_ref()
                    .ok_or_else(|| Error::InvalidArgument("state injection needs nodal spaces".into()))?;
                state = inj.iter().map(|&f| state[f]).collect();
            }
            let lev = &mut self.levels[l];
            let asm = Assembler::new(&self.form, &lev.space)?;
            let constrained: Vec<usize> = lev.system.bcs.iter().map(|&(d, _)| d).collect();
            let (j, _) = asm.linearize(&state, &constrained);
            lev.system.matrix = j;
            if let Some(sm) = lev.smoother.as_mut() {
                sm.assemble(&asm, Some(&state))?;
            }
        }
        self.coarse = DenseSolver::new(self.levels[0].system.matrix.to_dense(), self.levels[0].kernel.clone(), false)?;
        self.update_bounds()
    }

    /// Replaces the level acceleration, re-estimating Chebyshev bounds.
    pub fn set_accel(&mut self, accel: LevelAccel) -> Result<()> {
        self.config.accel = accel;
        self.update_bounds()
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn finest(&self) -> &Level {
        self.levels.last().unwrap()
    }

    pub fn config(&self) -> &CycleConfig {
        &self.config
    }

    /// One smoothing application; post-smoothing uses the adjoint additive
    /// operator so that the cycle stays symmetric under nonuniform weights.
    fn smooth(&self, l: usize, b: &[f64], x: Vec<f64>, post: bool) -> Vec<f64> {
        let lev = &self.levels[l];
        let sm = lev.smoother.as_ref().unwrap();
        let a = &lev.system.matrix;
        let prec = |r: &[f64]| if post { sm.apply_additive_adjoint(r) } else { sm.apply_additive(r) };
        match self.config.accel {
            LevelAccel::Richardson { scale } => {
                let r = a.residual(b, &x);
                if sm.config().local_type == LocalType::Multiplicative {
                    sm.smooth(&r, &x)
                } else {
                    let d = prec(&r);
                    x.iter().zip(d).map(|(xi, di)| xi + scale * di).collect()
                }
            }
            LevelAccel::Chebyshev { order, .. } => {
                let bounds = lev.bounds.expect("chebyshev bounds");
                chebyshev_smooth(|v| a.spmv(v), prec, b, &x, order, bounds)
                    .expect("bounds checked at setup")
            }
        }
    }

    fn cycle(&self, l: usize, b: &[f64], x: Vec<f64>, kind: CycleType) -> Vec<f64> {
        if l == 0 {
            return self.coarse.solve(b);
        }
        let lev = &self.levels[l];
        let mut x = x;
        for (xi, (&bi, &m)) in x.iter_mut().zip(b.iter().zip(&lev.mask)) {
            if m {
                *xi = bi;
            }
        }
        for _ in 0..self.config.pre_smooth {
            x = self.smooth(l, b, x, false);
        }
        let p = lev.prolongation.as_ref().unwrap();
        let coarse_mask = &self.levels[l - 1].mask;
        let passes = if kind == CycleType::F { 2 } else { 1 };
        for pass in 0..passes {
            let mut r = lev.system.matrix.residual(b, &x);
            for (ri, &m) in r.iter_mut().zip(&lev.mask) {
                if m {
                    *ri = 0.0;
                }
            }
            let mut rc = vec![0.0; p.ncols()];
            for i in 0..p.nrows() {
                let (cols, vals) = p.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    rc[j] += v * r[i];
                }
            }
            for (ri, &m) in rc.iter_mut().zip(coarse_mask) {
                if m {
                    *ri = 0.0;
                }
            }
            let inner = if pass == 0 { kind } else { CycleType::V };
            let ec = self.cycle(l - 1, &rc, vec![0.0; rc.len()], inner);
            let ef = p.spmv(&ec);
            for ((xi, e), &m) in x.iter_mut().zip(ef).zip(&lev.mask) {
                if !m {
                    *xi += e;
                }
            }
        }
        for _ in 0..self.config.post_smooth {
            x = self.smooth(l, b, x, true);
        }
        x
    }

    /// One cycle on the finest level from the iterate `x`.
    pub fn v_cycle(&self, b: &[f64], x: &[f64]) -> Vec<f64> {
        self.cycle(self.levels.len() - 1, b, x.to_vec(), self.config.cycle)
    }

    /// The cycle from a zero guess, as a preconditioner.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        self.cycle(self.levels.len() - 1, r, vec![0.0; r.len()], self.config.cycle)
    }
}

/// Coarse dof to coinciding fine dof, read off unit rows of the
/// prolongation.
fn injection_of(p: &CsrMatrix) -> Option<Vec<usize>> {
    let mut inj = vec![usize::MAX; p.ncols()];
    for i in 0..p.nrows() {
        let (cols, vals) = p.row(i);
        if cols.len() == 1 && (vals[0] - 1.0).abs() < 1e-12 {
            inj[cols[0]] = i;
        }
    }
    inj.iter().all(|&f| f != usize::MAX).then_some(inj)
}

/// Constrained dofs of a level, as used by the nonlinear solvers.
pub fn constrained_dofs(space: &MixedSpace, bcs: &[DirichletBC]) -> Result<Vec<usize>> {
    Ok(dirichlet_dofs(space, bcs)?.into_iter().map(|(d, _)| d).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{FormKind, Forcing};
    use crate::linalg::DenseMatrix;
    use crate::reference::{lagrange, raviart_thomas_0};
    use crate::space::BoundarySelector;
    use crate::topology::{build_structured, CellType};

    fn p1(mesh: Arc<Mesh>) -> Result<MixedSpace> {
        Ok(FunctionSpace::new(mesh, Arc::new(lagrange(CellType::Triangle, 1)?))?.into())
    }

    #[test]
    fn p1_midpoint_rows() {
        let coarse = Arc::new(build_structured(2, 2, CellType::Triangle, [1.0, 1.0]).unwrap());
        let (fine, map) = uniform_refine(&coarse);
        let fine = Arc::new(fine);
        let el = Arc::new(lagrange(CellType::Triangle, 1).unwrap());
        let cs = FunctionSpace::new(coarse.clone(), el.clone()).unwrap();
        let fs = FunctionSpace::new(fine.clone(), el).unwrap();
        let p = build_prolongation(&cs, &fs, &map).unwrap();
        let ones = p.spmv(&vec![1.0; cs.num_dofs()]);
        assert!(ones.iter().all(|v| (v - 1.0).abs() < 1e-14));
        for e in coarse.topology.entities(1).unwrap() {
            let mid = coarse.point_center(e);
            let fd = fs.dof_coordinates().unwrap().iter().position(|x| (x[0] - mid[0]).abs() + (x[1] - mid[1]).abs() < 1e-12).unwrap();
            let (cols, vals) = p.row(fd);
            assert_eq!(cols.len(), 2);
            assert!(vals.iter().all(|v| (v - 0.5).abs() < 1e-14));
            let ends = coarse.topology.cone(e).unwrap();
            let expect: Vec<usize> = ends.iter().flat_map(|&v| cs.dofs_on_points(&[v])).collect();
            let mut got = cols.to_vec();
            got.sort();
            let mut expect = expect;
            expect.sort();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn rt0_prolongation_is_nested() {
        let coarse = Arc::new(build_structured(2, 2, CellType::Triangle, [1.0, 1.0]).unwrap());
        let (fine, map) = uniform_refine(&coarse);
        let fine = Arc::new(fine);
        let el = Arc::new(raviart_thomas_0(CellType::Triangle).unwrap());
        let cs = FunctionSpace::new(coarse.clone(), el.clone()).unwrap();
        let fs = FunctionSpace::new(fine.clone(), el).unwrap();
        let p = build_prolongation(&cs, &fs, &map).unwrap();
        let c = seeded_vector(cs.num_dofs(), 7);
        let f = p.spmv(&c);
        for k in 0..20 {
            let x = [((k * 7) % 19) as f64 / 19.0 + 0.013, ((k * 11) % 17) as f64 / 17.0 + 0.007];
            let (cc, ceta) = coarse.locate(x).unwrap();
            let (fc, feta) = fine.locate(x).unwrap();
            let u = cs.evaluate(&c, cc, ceta);
            let v = fs.evaluate(&f, fc, feta);
            assert!((u[0] - v[0]).abs() + (u[1] - v[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_degenerate_is_richardson() {
        let a = CsrMatrix::from_dense(&DenseMatrix::from_rows(&[vec![2.0, 0.0], vec![0.0, 5.0]]));
        let b = [1.0, 1.0];
        let x = chebyshev_smooth(|v| a.spmv(v), |r| r.to_vec(), &b, &[0.0, 0.0], 1, (4.0, 4.0)).unwrap();
        assert_eq!(x, vec![0.25, 0.25]);
        assert!(matches!(
            chebyshev_smooth(|v| a.spmv(v), |r| r.to_vec(), &b, &[0.0; 2], 2, (0.0, 1.0)),
            Err(Error::InvalidBounds { .. })
        ));
        let y = chebyshev_smooth(|v| a.spmv(v), |r| r.to_vec(), &[2.0, 5.0], &[1.0, 1.0], 3, (2.0, 5.0)).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-15 && (y[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn one_level_is_exact() {
        let form = FormDescriptor::new(FormKind::Stiffness, Forcing::Scalar(Arc::new(|_| 1.0)));
        let bcs = [DirichletBC::homogeneous(0, BoundarySelector::All)];
        let base = build_structured(4, 4, CellType::Triangle, [1.0, 1.0]).unwrap();
        let h = MgHierarchy::build(&form, &bcs, &p1, None, base, 0, &SmootherConfig::star(0), CycleConfig::default()).unwrap();
        let sys = &h.finest().system;
        let x = h.v_cycle(&sys.rhs, &vec![0.0; sys.rhs.len()]);
        assert!(norm2(&sys.matrix.residual(&sys.rhs, &x)) < 1e-12);
        let z = h.apply(&vec![0.0; sys.rhs.len()]);
        assert!(z.iter().all(|&v| v == 0.0));
    }
}
