//! Topological patch construction, completion and numbering, with additive,
//! multiplicative and nonlinear subspace correction sweeps.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::Assembler;
use crate::linalg::{dot, norm2, DenseMatrix, LuFactors};
use crate::space::{dirichlet_dofs, DirichletBC, LocalNumbering, MixedSpace};
use crate::topology::{PlexTopology, Point};

/// Maps a seed entity to the set of entities whose dofs are solved for.
pub type PatchCallback = Arc<dyn Fn(&PlexTopology, Point) -> BTreeSet<Point> + Send + Sync>;

#[derive(Clone)]
pub enum ConstructType {
    Star,
    Vanka,
    Pardecomp,
    Custom(PatchCallback),
}

impl fmt::Debug for ConstructType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstructType::Star => write!(f, "Star"),
            ConstructType::Vanka => write!(f, "Vanka"),
            ConstructType::Pardecomp => write!(f, "Pardecomp"),
            ConstructType::Custom(_) => write!(f, "Custom"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalType {
    Additive,
    Multiplicative,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Weighting {
    None,
    Constant(f64),
    PartitionOfUnity,
}

#[derive(Clone, Debug)]
pub struct SmootherConfig {
    pub construct_type: ConstructType,
    pub construct_dim: usize,
    pub local_type: LocalType,
    pub weighting: Weighting,
    pub exclude_subspaces: Vec<usize>,
    pub dense_inverse: bool,
}

impl Default for SmootherConfig {
    fn default() -> Self {
        Self {
            construct_type: ConstructType::Star,
            construct_dim: 0,
            local_type: LocalType::Additive,
            weighting: Weighting::None,
            exclude_subspaces: Vec::new(),
            dense_inverse: true,
        }
    }
}

impl SmootherConfig {
    pub fn star(dim: usize) -> Self {
        Self { construct_dim: dim, ..Self::default() }
    }

    pub fn vanka(exclude: Vec<usize>) -> Self {
        Self { construct_type: ConstructType::Vanka, exclude_subspaces: exclude, ..Self::default() }
    }

    pub fn pardecomp() -> Self {
        Self { construct_type: ConstructType::Pardecomp, ..Self::default() }
    }

    pub fn multiplicative(mut self) -> Self {
        self.local_type = LocalType::Multiplicative;
        self
    }

    pub fn weighted(mut self, weighting: Weighting) -> Self {
        self.weighting = weighting;
        self
    }

    pub fn validate(&self, num_subspaces: usize) -> Result<()> {
        if let Weighting::Constant(s) = self.weighting {
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::InvalidArgument(format!("constant weight {s} outside (0, 1]")));
            }
        }
        if let Some(&s) = self.exclude_subspaces.iter().find(|&&s| s >= num_subspaces) {
            return Err(Error::InvalidArgument(format!("cannot exclude subspace {s}")));
        }
        if self.construct_dim > 2 {
            return Err(Error::InvalidArgument(format!("construct_dim {} > 2", self.construct_dim)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct PatchDefinition {
    pub seed: Point,
    pub update_entities: BTreeSet<Point>,
    pub completed_entities: BTreeSet<Point>,
    pub cells: Vec<Point>,
}

#[derive(Clone, Debug)]
pub struct PatchNumbering {
    /// Dofs solved for.
    pub interior: LocalNumbering,
    /// Dofs whose residual changes when the interior is updated.
    pub with_boundary: LocalNumbering,
    /// Every dof on the completed patch, constrained ones included.
    pub state: LocalNumbering,
}

#[derive(Clone, Debug)]
pub struct Patch {
    pub definition: PatchDefinition,
    pub numbering: PatchNumbering,
    /// Cells coupling to the interior; assembles the residual-update block.
    residual_cells: Vec<Point>,
}

/// Dense solver for a possibly singular block with a known one-dimensional
/// kernel: the row and column of the largest kernel entry are pinned and the
/// kernel is projected out of right-hand side and solution.
#[derive(Clone, Debug)]
pub(crate) struct DenseSolver {
    inverse: Option<DenseMatrix>,
    lu: Option<LuFactors>,
    kernel: Option<(usize, Vec<f64>)>,
}

impl DenseSolver {
    pub(crate) fn new(mut a: DenseMatrix, kernel: Option<Vec<f64>>, explicit_inverse: bool) -> Result<Self> {
        let kernel = kernel.map(|mut k| {
            let nk = norm2(&k);
            k.iter_mut().for_each(|v| *v /= nk);
            let pin = (0..k.len()).max_by(|&i, &j| k[i].abs().total_cmp(&k[j].abs())).unwrap_or(0);
            for j in 0..a.ncols() {
                a[(pin, j)] = 0.0;
                a[(j, pin)] = 0.0;
            }
            a[(pin, pin)] = 1.0;
            (pin, k)
        });
        let lu = a.lu()?;
        let (inverse, lu) = if explicit_inverse { (Some(lu.inverse()), None) } else { (None, Some(lu)) };
        Ok(Self { inverse, lu, kernel })
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut rhs = b.to_vec();
        if let Some((pin, k)) = &self.kernel {
            let c = dot(k, &rhs);
            rhs.iter_mut().zip(k).for_each(|(r, kv)| *r -= c * kv);
            rhs[*pin] = 0.0;
        }
        let mut x = match (&self.inverse, &self.lu) {
            (Some(inv), _) => inv.matvec(&rhs),
            (_, Some(lu)) => lu.solve(&rhs),
            _ => unreachable!(),
        };
        if let Some((_, k)) = &self.kernel {
            let c = dot(k, &x);
            x.iter_mut().zip(k).for_each(|(v, kv)| *v -= c * kv);
        }
        x
    }
}

#[derive(Clone, Debug)]
struct LocalOperator {
    solver: DenseSolver,
    extended: Option<DenseMatrix>,
}

/// Outcome of one nonlinear sweep.
#[derive(Clone, Debug, Default)]
pub struct NonlinearSweep {
    /// Seeds of patches whose local Newton iteration did not converge.
    pub failed_seeds: Vec<Point>,
    pub max_local_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct PatchSmoother {
    config: SmootherConfig,
    space: MixedSpace,
    patches: Vec<Patch>,
    constrained: Vec<bool>,
    weights: Vec<f64>,
    nullspace: Option<Vec<f64>>,
    ops: Vec<LocalOperator>,
    dropped: usize,
}

fn cells_of(topo: &PlexTopology, pts: &BTreeSet<Point>) -> Vec<Point> {
    pts.iter().copied().filter(|&p| topo.dimension(p) == 2).collect()
}

impl PatchSmoother {
    /// Builds patch structure and numberings; operators come from `assemble`.
    pub fn build(space: &MixedSpace, bcs: &[DirichletBC], config: SmootherConfig) -> Result<Self> {
        config.validate(space.num_subspaces())?;
        let topo = &space.mesh().topology;
        let mut constrained = vec![false; space.num_dofs()];
        for (d, _) in dirichlet_dofs(space, bcs)? {
            constrained[d] = true;
        }
        let free = |dofs: Vec<usize>| dofs.into_iter().filter(|&d| !constrained[d]).collect::<Vec<_>>();

        let seeds: Vec<Point> = match config.construct_type {
            ConstructType::Pardecomp => vec![0],
            _ => topo.entities(config.construct_dim)?.collect(),
        };
        let mut patches = Vec::new();
        let mut dropped = 0;
        for seed in seeds {
            let (update, cells) = match &config.construct_type {
                ConstructType::Star => {
                    let st = topo.star_of([seed]);
                    let cells = cells_of(topo, &st);
                    (st, cells)
                }
                ConstructType::Vanka => {
                    let update = topo.closure_of(topo.star_of([seed]));
                    let cells = cells_of(topo, &topo.star_of(update.iter().copied()));
                    (update, cells)
                }
                ConstructType::Pardecomp => {
                    let all: BTreeSet<Point> = (0..topo.num_points()).collect();
                    let cells = cells_of(topo, &all);
                    (all, cells)
                }
                ConstructType::Custom(cb) => {
                    let update = cb(topo, seed);
                    let cells = cells_of(topo, &topo.star_of(update.iter().copied()));
                    (update, cells)
                }
            };
            let completed = topo.closure_of(cells.iter().copied());
            let residual_cells = cells_of(topo, &topo.star_of(update.iter().copied()));
            let pardecomp = matches!(config.construct_type, ConstructType::Pardecomp);
            let mut interior = Vec::new();
            for s in 0..space.num_subspaces() {
                if !pardecomp && config.exclude_subspaces.contains(&s) {
                    interior.extend(space.dofs_on_points(s, &[seed]));
                } else {
                    interior.extend(space.dofs_on_points(s, &update));
                }
            }
            let interior = LocalNumbering::new(free(interior));
            if interior.is_empty() {
                dropped += 1;
                continue;
            }
            let reach = topo.closure_of(residual_cells.iter().copied());
            let with_boundary = LocalNumbering::new(free(space.all_dofs_on_points(&reach)));
            let state = LocalNumbering::new(space.all_dofs_on_points(&completed));
            patches.push(Patch {
                definition: PatchDefinition { seed, update_entities: update, completed_entities: completed, cells },
                numbering: PatchNumbering { interior, with_boundary, state },
                residual_cells,
            });
        }
        let weights = match config.weighting {
            Weighting::None => vec![1.0; space.num_dofs()],
            Weighting::Constant(s) => vec![s; space.num_dofs()],
            Weighting::PartitionOfUnity => {
                let mut count = vec![0usize; space.num_dofs()];
                for p in &patches {
                    for &d in p.numbering.interior.dofs() {
                        count[d] += 1;
                    }
                }
                count.iter().map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 }).collect()
            }
        };
        Ok(Self {
            config,
            space: space.clone(),
            patches,
            constrained,
            weights,
            nullspace: None,
            ops: Vec::new(),
            dropped,
        })
    }

    /// Global kernel vector of the operator (for example constant pressures).
    /// Patches whose interior holds the whole kernel are solved pinned.
    pub fn set_nullspace(&mut self, kernel: Option<Vec<f64>>) {
        self.nullspace = kernel;
        self.ops.clear();
    }

    pub fn config(&self) -> &SmootherConfig {
        &self.config
    }

    pub fn patches(&self) -> &[Patch] {
        &self.patches
    }

    pub fn num_dropped(&self) -> usize {
        self.dropped
    }

    pub fn is_assembled(&self) -> bool {
        !self.ops.is_empty() || self.patches.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    fn local_kernel(&self, interior: &LocalNumbering) -> Option<Vec<f64>> {
        let k = self.nullspace.as_ref()?;
        let inside: f64 = interior.dofs().iter().map(|&d| k[d] * k[d]).sum();
        let total = dot(k, k);
        (inside > 0.0 && total - inside <= 1e-24 * total).then(|| interior.dofs().iter().map(|&d| k[d]).collect())
    }

    /// Assembles and factors every patch operator, at `state` if given.
    pub fn assemble(&mut self, assembler: &Assembler, state: Option<&[f64]>) -> Result<()> {
        let mut ops = Vec::with_capacity(self.patches.len());
        for p in &self.patches {
            let num = &p.numbering;
            let local_state: Option<Vec<f64>> = state.map(|u| num.state.dofs().iter().map(|&d| u[d]).collect());
            let st = local_state.as_deref().map(|v| (&num.state, v));
            let (a, _) = assembler.cells(&p.definition.cells, &num.interior, &num.interior, st);
            let kernel = self.local_kernel(&num.interior);
            let solver = DenseSolver::new(a, kernel, self.config.dense_inverse).map_err(|e| match e {
                Error::SingularMatrix { .. } => Error::SingularPatch { seed: p.definition.seed },
                e => e,
            })?;
            let extended = (self.config.local_type == LocalType::Multiplicative).then(|| {
                let ext_state = state.map(|u| {
                    let all = LocalNumbering::new(
                        p.residual_cells.iter().flat_map(|&c| self.space.cell_dofs(c).0).collect(),
                    );
                    let vals: Vec<f64> = all.dofs().iter().map(|&d| u[d]).collect();
                    (all, vals)
                });
                let st = ext_state.as_ref().map(|(n, v)| (n, v.as_slice()));
                assembler.cells(&p.residual_cells, &num.with_boundary, &num.interior, st).0
            });
            ops.push(LocalOperator { solver, extended });
        }
        self.ops = ops;
        Ok(())
    }

    fn check_assembled(&self) {
        assert!(self.is_assembled(), "patch smoother used before assemble");
    }

    /// Parallel subspace correction: `sum_i w_i I_i A_i^{-1} I_i^* r`.
    pub fn apply_additive(&self, r: &[f64]) -> Vec<f64> {
        self.check_assembled();
        let mut out = vec![0.0; r.len()];
        for (p, op) in self.patches.iter().zip(&self.ops) {
            let dofs = p.numbering.interior.dofs();
            let rl: Vec<f64> = dofs.iter().map(|&d| r[d]).collect();
            let dl = op.solver.solve(&rl);
            for (&d, v) in dofs.iter().zip(dl) {
                out[d] += self.weights[d] * v;
            }
        }
        out
    }

    /// Adjoint of `apply_additive`: the weights act on the residual before
    /// the local solves. Equal to `apply_additive` for uniform weights.
    pub fn apply_additive_adjoint(&self, r: &[f64]) -> Vec<f64> {
        self.check_assembled();
        let mut out = vec![0.0; r.len()];
        for (p, op) in self.patches.iter().zip(&self.ops) {
            let dofs = p.numbering.interior.dofs();
            let rl: Vec<f64> = dofs.iter().map(|&d| self.weights[d] * r[d]).collect();
            let dl = op.solver.solve(&rl);
            for (&d, v) in dofs.iter().zip(dl) {
                out[d] += v;
            }
        }
        out
    }

    /// Sequential subspace correction in ascending seed order. `r` must equal
    /// `b - A x` on entry and is kept consistent through the extended blocks.
    pub fn apply_multiplicative(&self, r: &mut [f64], x: &mut [f64]) {
        self.check_assembled();
        for (p, op) in self.patches.iter().zip(&self.ops) {
            let num = &p.numbering;
            let rl: Vec<f64> = num.interior.dofs().iter().map(|&d| r[d]).collect();
            let mut dl = op.solver.solve(&rl);
            for (&d, v) in num.interior.dofs().iter().zip(dl.iter_mut()) {
                *v *= self.weights[d];
                x[d] += *v;
            }
            let ext = op.extended.as_ref().expect("multiplicative smoother needs extended blocks");
            let dr = ext.matvec(&dl);
            for (&d, v) in num.with_boundary.dofs().iter().zip(dr) {
                r[d] -= v;
            }
        }
    }

    /// One smoothing step on `A x = b` given the current residual; dispatches
    /// on the local type. Returns the updated iterate.
    pub fn smooth(&self, r: &[f64], x: &[f64]) -> Vec<f64> {
        match self.config.local_type {
            LocalType::Additive => {
                let d = self.apply_additive(r);
                x.iter().zip(d).map(|(a, b)| a + b).collect()
            }
            LocalType::Multiplicative => {
                let mut r = r.to_vec();
                let mut x = x.to_vec();
                self.apply_multiplicative(&mut r, &mut x);
                x
            }
        }
    }

    /// Nonlinear parallel subspace correction: local Newton on every patch
    /// from the same state, updates combined with the weights.
    pub fn apply_nonlinear(&self, u: &[f64], assembler: &Assembler) -> Result<(Vec<f64>, NonlinearSweep)> {
        const MAX_IT: usize = 20;
        let mut out = u.to_vec();
        let mut report = NonlinearSweep::default();
        for p in &self.patches {
            let num = &p.numbering;
            let mut ul: Vec<f64> = num.state.dofs().iter().map(|&d| u[d]).collect();
            let pos: Vec<usize> =
                num.interior.dofs().iter().map(|&d| num.state.local(d).expect("interior inside state")).collect();
            let mut converged = false;
            let mut f0 = None;
            let mut its = 0;
            for it in 0..=MAX_IT {
                let (j, f) = assembler.cells(&p.definition.cells, &num.interior, &num.interior, Some((&num.state, &ul)));
                let nf = norm2(&f);
                let first = *f0.get_or_insert(nf);
                if nf <= 1e-12 || nf <= 1e-10 * first {
                    converged = true;
                    break;
                }
                if it == MAX_IT {
                    break;
                }
                let lu = j.lu().map_err(|_| Error::SingularPatch { seed: p.definition.seed })?;
                let neg: Vec<f64> = f.iter().map(|v| -v).collect();
                let du = lu.solve(&neg);
                for (&k, v) in pos.iter().zip(du) {
                    ul[k] += v;
                }
                its = it + 1;
            }
            report.max_local_iterations = report.max_local_iterations.max(its);
            if !converged {
                report.failed_seeds.push(p.definition.seed);
                continue;
            }
            for (&d, &k) in num.interior.dofs().iter().zip(&pos) {
                out[d] += self.weights[d] * (ul[k] - u[d]);
            }
        }
        Ok((out, report))
    }

    /// Largest number of patches whose cells meet the cells of one patch,
    /// the patch itself included.
    pub fn overlap_bound(&self) -> usize {
        let ncells = self.space.mesh().topology.num_cells();
        let mut by_cell: Vec<Vec<usize>> = vec![Vec::new(); ncells];
        for (i, p) in self.patches.iter().enumerate() {
            for &c in &p.definition.cells {
                by_cell[c].push(i);
            }
        }
        self.patches
            .iter()
            .map(|p| {
                let mut near = BTreeSet::new();
                for &c in &p.definition.cells {
                    near.extend(by_cell[c].iter().copied());
                }
                near.len()
            })
            .max()
            .unwrap_or(0)
    }
}
