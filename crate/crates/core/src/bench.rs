//! Desk-scale experiment drivers: problem setup, parameter sweeps, result
//! tables and spectral diagnostics.

use std::f64::consts::PI;
use std::fmt::{self, Write as _};
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::forms::{Assembler, Forcing, FormDescriptor, FormKind};
use crate::krylov::{solve, KspConfig, KspType, Nullspace, SolveReport};
use crate::linalg::{dot, lanczos_extremes_with, norm2, seeded_vector};
use crate::multigrid::{CycleConfig, CycleType, KernelFactory, LevelAccel, MgHierarchy};
use crate::nonlinear::{newton, nonlinear_relaxation_solve, InnerSolver, NewtonConfig, RelaxationConfig};
use crate::patchsmoother::{ConstructType, PatchSmoother, SmootherConfig};
use crate::reference::{lagrange, nedelec_0, raviart_thomas_0};
use crate::space::{BoundarySelector, DirichletBC, FunctionSpace, MixedSpace};
use crate::topology::{build_structured, uniform_refine, CellType, Mesh};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Problem {
    RieszHdiv,
    RieszHcurl,
    Elasticity,
    Stokes,
    AllenCahn,
    Poisson,
}

impl Problem {
    pub const ALL: [Problem; 6] =
        [Problem::RieszHdiv, Problem::RieszHcurl, Problem::Elasticity, Problem::Stokes, Problem::AllenCahn, Problem::Poisson];

    pub fn name(self) -> &'static str {
        match self {
            Problem::RieszHdiv => "riesz_hdiv",
            Problem::RieszHcurl => "riesz_hcurl",
            Problem::Elasticity => "elasticity",
            Problem::Stokes => "stokes",
            Problem::AllenCahn => "allen_cahn",
            Problem::Poisson => "poisson",
        }
    }

    /// Name of the swept parameter.
    pub fn parameter(self) -> &'static str {
        match self {
            Problem::RieszHdiv | Problem::RieszHcurl => "alpha",
            Problem::Elasticity => "gamma",
            Problem::Stokes => "nu",
            Problem::AllenCahn => "method",
            Problem::Poisson => "scale",
        }
    }

    pub fn is_linear(self) -> bool {
        self != Problem::AllenCahn
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    /// Accepts `-` in place of `_`.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown problem {s:?}")))
    }
}

#[derive(Clone, Debug)]
pub struct BenchSpec {
    pub problem: Problem,
    pub base: (usize, usize),
    pub cell: CellType,
    pub refinements: Vec<usize>,
    pub params: Vec<f64>,
    pub degree: usize,
    pub smoother: SmootherConfig,
    pub cycle: CycleConfig,
    /// Richardson level damping; derived from the patch overlap when absent.
    pub damping: Option<f64>,
    pub ksp: KspConfig,
    /// Random initial guess; zero when absent.
    pub seed: Option<u64>,
}

impl BenchSpec {
    /// Default experiment for a problem.
    pub fn new(problem: Problem) -> Self {
        let three = vec![1.0, 1e2, 1e4];
        let base = Self {
            problem,
            base: (8, 8),
            cell: CellType::Triangle,
            refinements: vec![1, 2, 3],
            params: three.clone(),
            degree: 1,
            smoother: SmootherConfig::star(0),
            cycle: CycleConfig::default(),
            damping: None,
            ksp: KspConfig::default(),
            seed: None,
        };
        match problem {
            Problem::RieszHdiv | Problem::RieszHcurl => base,
            Problem::Elasticity => Self {
                base: (4, 4),
                refinements: vec![3],
                cycle: CycleConfig { accel: LevelAccel::Chebyshev { order: 2, bounds: None }, ..CycleConfig::default() },
                ..base
            },
            Problem::Stokes => Self {
                base: (4, 4),
                cell: CellType::Quadrilateral,
                degree: 2,
                smoother: SmootherConfig::vanka(vec![1]),
                cycle: CycleConfig { accel: LevelAccel::Chebyshev { order: 2, bounds: None }, ..CycleConfig::default() },
                ksp: KspConfig { ksp_type: KspType::Gmres, ..KspConfig::default() },
                ..base
            },
            Problem::AllenCahn => Self { refinements: vec![1], params: vec![], ..base },
            Problem::Poisson => Self { params: vec![1.0], ..base },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.0 == 0 || self.base.1 == 0 {
            return Err(Error::InvalidArgument("base mesh needs at least one cell per direction".into()));
        }
        if let Some(v) = self.params.iter().find(|&&v| !(v > 0.0)) {
            return Err(Error::InvalidArgument(format!("sweep values must be positive, got {v}")));
        }
        if let Some(s) = self.damping {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument(format!("damping must be positive, got {s}")));
            }
        }
        if !(self.ksp.rtol > 0.0) {
            return Err(Error::InvalidArgument("rtol must be positive".into()));
        }
        let nsub = if self.problem == Problem::Stokes { 2 } else { 1 };
        self.smoother.validate(nsub)
    }

    /// Columns of the result table.
    pub fn columns(&self) -> Vec<String> {
        match self.problem {
            Problem::AllenCahn => vec!["newton".into(), "patch_relaxation".into()],
            _ => self.params.iter().map(|v| format_param(*v)).collect(),
        }
    }
}

fn format_param(v: f64) -> String {
    if v >= 1e3 && (v.log10().fract()).abs() < 1e-12 {
        format!("1e{}", v.log10().round() as i64)
    } else {
        format!("{v}")
    }
}

/// Form, boundary conditions and space of one problem instance.
pub struct ProblemInstance {
    pub form: FormDescriptor,
    pub bcs: Vec<DirichletBC>,
    pub degree: usize,
    pub problem: Problem,
    pub cell: CellType,
}

/// Exact solution of the manufactured nonlinear problem.
pub fn allen_cahn_exact(x: [f64; 2]) -> f64 {
    (PI * x[0]).sin() * (PI * x[1]).sin()
}

impl ProblemInstance {
    pub fn new(problem: Problem, param: f64, degree: usize, cell: CellType) -> Self {
        let all_zero = || vec![DirichletBC::homogeneous(0, BoundarySelector::All)];
        let riesz_f: Forcing = Forcing::Vector(Arc::new(|x| [(PI * x[1]).sin(), (PI * x[0]).sin()]));
        let (kind, forcing, bcs) = match problem {
            Problem::RieszHdiv => (FormKind::HdivRiesz { alpha: param }, riesz_f, vec![]),
            Problem::RieszHcurl => (FormKind::HcurlRiesz { alpha: param }, riesz_f, vec![]),
            Problem::Elasticity => (
                FormKind::Elasticity { mu: 1.0, gamma: param },
                Forcing::Vector(Arc::new(|_| [1.0, 1.0])),
                all_zero(),
            ),
            Problem::Stokes => {
                let lid = DirichletBC::with_value(
                    0,
                    BoundarySelector::All,
                    Arc::new(|x| if (x[1] - 1.0).abs() < 1e-12 { [1.0 - x[0].powi(4), 0.0] } else { [0.0, 0.0] }),
                );
                (FormKind::Stokes { nu: param }, Forcing::Zero, vec![lid])
            }
            Problem::AllenCahn => {
                let f = |x: [f64; 2]| {
                    let u = allen_cahn_exact(x);
                    2.0 * PI * PI * u + u * u * u - u
                };
                (FormKind::AllenCahn { cubic: 1.0 }, Forcing::Scalar(Arc::new(f)), all_zero())
            }
            Problem::Poisson => (FormKind::Stiffness, Forcing::Scalar(Arc::new(move |_| param)), all_zero()),
        };
        Self { form: FormDescriptor::new(kind, forcing), bcs, degree, problem, cell }
    }

    pub fn space(&self, mesh: Arc<Mesh>) -> Result<MixedSpace> {
        let cell = mesh.cell_type();
        match self.problem {
            Problem::RieszHdiv => Ok(FunctionSpace::new(mesh, Arc::new(raviart_thomas_0(cell)?))?.into()),
            Problem::RieszHcurl => Ok(FunctionSpace::new(mesh, Arc::new(nedelec_0(cell)?))?.into()),
            Problem::Elasticity => Ok(FunctionSpace::blocked(mesh, Arc::new(lagrange(cell, self.degree)?), 2)?.into()),
            Problem::Stokes => {
                let vel = FunctionSpace::blocked(mesh.clone(), Arc::new(lagrange(cell, self.degree)?), 2)?;
                let pre = FunctionSpace::new(mesh, Arc::new(lagrange(cell, self.degree - 1)?))?;
                MixedSpace::new(vec![vel, pre])
            }
            Problem::AllenCahn | Problem::Poisson => Ok(FunctionSpace::new(mesh, Arc::new(lagrange(cell, self.degree)?))?.into()),
        }
    }

    /// Constant-pressure kernel for the enclosed flow.
    pub fn kernel(&self, space: &MixedSpace) -> Option<Vec<f64>> {
        (self.problem == Problem::Stokes).then(|| {
            let mut k = vec![0.0; space.num_dofs()];
            k[space.block_offset(1)..].iter_mut().for_each(|v| *v = 1.0);
            k
        })
    }

    pub fn base_mesh(&self, nx: usize, ny: usize) -> Result<Mesh> {
        if self.problem == Problem::Stokes {
            if self.degree < 2 {
                return Err(Error::InvalidArgument("Taylor-Hood needs velocity degree >= 2".into()));
            }
            let mut m = build_structured(nx, ny, self.cell, [2.0, 2.0])?;
            m.geometry.translate([-1.0, -1.0]);
            Ok(m)
        } else {
            build_structured(nx, ny, self.cell, [1.0, 1.0])
        }
    }
}

/// Outcome of one table cell.
#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// `||b - A x|| / ||b||` recomputed after the solve (global residual
    /// reduction for nonlinear solves).
    pub true_relative_residual: f64,
    pub maxit: usize,
    pub report: SolveReport,
}

impl CellOutcome {
    pub fn display(&self) -> String {
        if self.converged {
            self.iterations.to_string()
        } else {
            format!(">{}", self.maxit)
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResultTable {
    pub problem: Problem,
    pub parameter: String,
    pub columns: Vec<String>,
    pub rows: Vec<usize>,
    pub dofs: Vec<usize>,
    pub cells: Vec<Vec<CellOutcome>>,
}

impl ResultTable {
    pub fn iterations(&self, row: usize, col: usize) -> Option<usize> {
        let c = &self.cells[row][col];
        c.converged.then_some(c.iterations)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("refinement,dofs");
        for c in &self.columns {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (i, row) in self.cells.iter().enumerate() {
            let _ = write!(s, "{},{}", self.rows[i], self.dofs[i]);
            for c in row {
                let _ = write!(s, ",{}", c.display());
            }
            s.push('\n');
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut header = vec!["refinement".to_string(), "dofs".to_string()];
        header.extend(self.columns.iter().map(|c| format!("{} = {c}", self.parameter)));
        let mut body: Vec<Vec<String>> = Vec::new();
        for (i, row) in self.cells.iter().enumerate() {
            let mut r = vec![self.rows[i].to_string(), self.dofs[i].to_string()];
            r.extend(row.iter().map(CellOutcome::display));
            body.push(r);
        }
        let widths: Vec<usize> = (0..header.len())
            .map(|j| body.iter().map(|r| r[j].len()).chain([header[j].len()]).max().unwrap())
            .collect();
        let line = |cells: &[String]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!(" {c:>w$} ")).collect();
            format!("|{}|\n", parts.join("|"))
        };
        let mut s = line(&header);
        let rule: Vec<String> = widths.iter().map(|w| format!("{}:", "-".repeat(w + 1))).collect();
        let _ = writeln!(s, "|{}|", rule.join("|"));
        for r in &body {
            s.push_str(&line(r));
        }
        s
    }
}

fn initial_guess(n: usize, seed: Option<u64>) -> Vec<f64> {
    match seed {
        Some(s) => seeded_vector(n, s),
        None => vec![0.0; n],
    }
}

/// Damping `1 / max(2, largest number of patch interiors sharing one dof)`,
/// or 1 for a single patch.
pub fn overlap_damping(smoother: &PatchSmoother) -> f64 {
    if smoother.patches().len() == 1 {
        return 1.0;
    }
    let mut count = vec![0usize; smoother.constrained().len()];
    for p in smoother.patches() {
        for &d in p.numbering.interior.dofs() {
            count[d] += 1;
        }
    }
    1.0 / count.into_iter().max().unwrap_or(1).max(2) as f64
}

/// Builds the multigrid hierarchy of one linear table cell.
pub fn build_hierarchy(spec: &BenchSpec, inst: &ProblemInstance, refinement: usize) -> Result<MgHierarchy> {
    let base = inst.base_mesh(spec.base.0, spec.base.1)?;
    let make = |m: Arc<Mesh>| inst.space(m);
    let kernel = |s: &MixedSpace| inst.kernel(s).unwrap_or_default();
    let kernel_ref: Option<KernelFactory> =
        if inst.problem == Problem::Stokes { Some(&kernel) } else { None };
    let mut cycle = spec.cycle;
    if let (LevelAccel::Richardson { .. }, Some(s)) = (cycle.accel, spec.damping) {
        cycle.accel = LevelAccel::Richardson { scale: s };
    }
    let mut h = MgHierarchy::build(&inst.form, &inst.bcs, &make, kernel_ref, base, refinement, &spec.smoother, cycle)?;
    if let (LevelAccel::Richardson { .. }, None) = (cycle.accel, spec.damping) {
        if let Some(sm) = h.finest().smoother() {
            let s = overlap_damping(sm);
            h.set_accel(LevelAccel::Richardson { scale: s })?;
        }
    }
    Ok(h)
}

/// Solves one linear table cell and audits the true residual.
pub fn run_linear_cell(spec: &BenchSpec, refinement: usize, param: f64) -> Result<(usize, CellOutcome)> {
    let inst = ProblemInstance::new(spec.problem, param, spec.degree, spec.cell);
    let h = build_hierarchy(spec, &inst, refinement)?;
    let fin = h.finest();
    let sys = &fin.system;
    let ns = match &fin.kernel {
        Some(k) => Some(Nullspace::new(vec![k.clone()])?),
        None => None,
    };
    let mut x0 = initial_guess(sys.rhs.len(), spec.seed);
    for &(d, g) in &sys.bcs {
        x0[d] = g;
    }
    let (x, report) = solve(&spec.ksp, &sys.matrix, |r| h.apply(r), &sys.rhs, &x0, ns.as_ref());
    let nb = norm2(&sys.rhs);
    let true_rel = norm2(&sys.matrix.residual(&sys.rhs, &x)) / if nb > 0.0 { nb } else { 1.0 };
    let outcome = CellOutcome {
        iterations: report.iterations,
        converged: report.converged,
        true_relative_residual: true_rel,
        maxit: spec.ksp.maxit,
        report,
    };
    Ok((sys.rhs.len(), outcome))
}

/// Newton and nonlinear star relaxation on the manufactured problem.
pub fn run_allen_cahn(spec: &BenchSpec, refinement: usize) -> Result<(usize, [CellOutcome; 2])> {
    let inst = ProblemInstance::new(Problem::AllenCahn, 1.0, spec.degree, spec.cell);
    let mut mesh = inst.base_mesh(spec.base.0, spec.base.1)?;
    for _ in 0..refinement {
        mesh = uniform_refine(&mesh).0;
    }
    let space = inst.space(Arc::new(mesh))?;
    let n = space.num_dofs();
    let u0 = initial_guess(n, spec.seed);
    let ncfg = NewtonConfig { maxit: spec.ksp.maxit.min(50), ..NewtonConfig::default() };
    let (_, nrep) = newton(&inst.form, &space, &inst.bcs, &u0, &ncfg, InnerSolver::DenseLu)?;
    let smoother = PatchSmoother::build(&space, &inst.bcs, spec.smoother.clone())?;
    let rcfg = RelaxationConfig { max_sweeps: spec.ksp.maxit, ..RelaxationConfig::default() };
    let (_, rrep) = nonlinear_relaxation_solve(&inst.form, &space, &inst.bcs, &smoother, &u0, &rcfg)?;
    let cell = |rep: SolveReport, maxit: usize| CellOutcome {
        iterations: rep.iterations,
        converged: rep.converged,
        true_relative_residual: rep.final_relative_residual,
        maxit,
        report: rep,
    };
    Ok((n, [cell(nrep, ncfg.maxit), cell(rrep, rcfg.max_sweeps)]))
}

/// Runs the whole sweep; rows follow `refinements`, columns `params`.
pub fn run(spec: &BenchSpec) -> Result<ResultTable> {
    spec.validate()?;
    let columns = spec.columns();
    let mut table = ResultTable {
        problem: spec.problem,
        parameter: spec.problem.parameter().to_string(),
        columns: columns.clone(),
        rows: Vec::new(),
        dofs: Vec::new(),
        cells: Vec::new(),
    };
    if columns.is_empty() {
        return Ok(table);
    }
    for &r in &spec.refinements {
        let (dofs, row) = if spec.problem == Problem::AllenCahn {
            let (n, cells) = run_allen_cahn(spec, r)?;
            (n, cells.to_vec())
        } else {
            let mut row = Vec::new();
            let mut dofs = 0;
            for &p in &spec.params {
                let (n, c) = run_linear_cell(spec, r, p)?;
                dofs = n;
                row.push(c);
            }
            (dofs, row)
        };
        table.rows.push(r);
        table.dofs.push(dofs);
        table.cells.push(row);
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct Diagnosis {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub overlap: usize,
    pub bound_satisfied: bool,
    pub lanczos_iterations: usize,
    pub num_patches: usize,
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "patches         {}", self.num_patches)?;
        writeln!(f, "lambda_min_est  {:.6}", self.lambda_min)?;
        writeln!(f, "lambda_max_est  {:.6}", self.lambda_max)?;
        writeln!(f, "overlap N_O     {}", self.overlap)?;
        writeln!(f, "lanczos_its     {}", self.lanczos_iterations)?;
        write!(f, "bound_satisfied {}", self.bound_satisfied)
    }
}

/// Extreme eigenvalue estimates of the additive preconditioned operator on
/// the mesh refined `refinement` times, checked against the overlap bound.
pub fn diagnose(spec: &BenchSpec, refinement: usize, param: f64, iters: usize) -> Result<Diagnosis> {
    spec.validate()?;
    if spec.problem == Problem::Stokes || spec.problem == Problem::AllenCahn {
        return Err(Error::InvalidArgument("diagnostics need a symmetric positive definite problem".into()));
    }
    let inst = ProblemInstance::new(spec.problem, param, spec.degree, spec.cell);
    let mut mesh = inst.base_mesh(spec.base.0, spec.base.1)?;
    for _ in 0..refinement {
        mesh = uniform_refine(&mesh).0;
    }
    let space = inst.space(Arc::new(mesh))?;
    let asm = Assembler::new(&inst.form, &space)?;
    let sys = asm.system(&inst.bcs)?;
    let mut sm = PatchSmoother::build(&space, &inst.bcs, spec.smoother.clone())?;
    sm.assemble(&asm, None)?;
    let a = &sys.matrix;
    let mut start = seeded_vector(space.num_dofs(), 0xd1a9);
    for (s, &c) in start.iter_mut().zip(sm.constrained()) {
        if c {
            *s = 0.0;
        }
    }
    let est = lanczos_extremes_with(|x| sm.apply_additive(&a.spmv(x)), |x, y| dot(&a.spmv(x), y), &start, iters);
    let overlap = sm.overlap_bound();
    Ok(Diagnosis {
        lambda_min: est.min,
        lambda_max: est.max,
        overlap,
        bound_satisfied: est.max <= overlap as f64 + 0.05,
        lanczos_iterations: est.iterations,
        num_patches: sm.patches().len(),
    })
}

/// Short description of a smoother configuration, for logs.
pub fn describe(spec: &BenchSpec) -> String {
    let ct = match spec.smoother.construct_type {
        ConstructType::Star => "star",
        ConstructType::Vanka => "vanka",
        ConstructType::Pardecomp => "pardecomp",
        ConstructType::Custom(_) => "custom",
    };
    let cyc = match spec.cycle.cycle {
        CycleType::V => "V",
        CycleType::F => "F",
    };
    format!(
        "{} base {}x{} {:?} k={} {}(dim {}) {:?} {}({},{}) {:?}",
        spec.problem,
        spec.base.0,
        spec.base.1,
        spec.cell,
        spec.degree,
        ct,
        spec.smoother.construct_dim,
        spec.smoother.local_type,
        cyc,
        spec.cycle.pre_smooth,
        spec.cycle.post_smooth,
        spec.ksp.ksp_type
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn problem_names_round_trip() {
        for p in Problem::ALL {
            assert_eq!(p.name().parse::<Problem>().unwrap(), p);
        }
        assert!("heat".parse::<Problem>().is_err());
    }

    #[test]
    fn empty_sweep_gives_empty_table() {
        let spec = BenchSpec { params: vec![], ..BenchSpec::new(Problem::Poisson) };
        let t = run(&spec).unwrap();
        assert!(t.cells.is_empty());
        assert_eq!(t.to_csv(), "refinement,dofs\n");
    }

    #[test]
    fn nonpositive_sweep_rejected() {
        let spec = BenchSpec { params: vec![1.0, 0.0], ..BenchSpec::new(Problem::RieszHdiv) };
        assert!(run(&spec).is_err());
    }

    #[test]
    fn small_poisson_table() {
        let spec = BenchSpec { base: (4, 4), refinements: vec![1], ..BenchSpec::new(Problem::Poisson) };
        let t = run(&spec).unwrap();
        assert_eq!(t.dofs, vec![81]);
        let c = &t.cells[0][0];
        assert!(c.converged && c.true_relative_residual <= 1e-8);
        assert!(t.to_markdown().contains("scale = 1"));
    }
}
