//! Newton's method and nonlinear patch relaxation.

use crate::error::Result;
use crate::forms::{Assembler, FormDescriptor};
use crate::krylov::{cg, KspConfig, SolveFailure, SolveReport};
use crate::linalg::norm2;
use crate::multigrid::MgHierarchy;
use crate::patchsmoother::PatchSmoother;
use crate::space::{dirichlet_dofs, DirichletBC, MixedSpace};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NewtonConfig {
    pub rtol: f64,
    pub atol: f64,
    pub maxit: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12, maxit: 50 }
    }
}

/// Linear solver for the Newton correction.
pub enum InnerSolver<'a> {
    DenseLu,
    /// CG preconditioned by the hierarchy, rediscretized at the current state.
    CgMultigrid { hierarchy: &'a mut MgHierarchy, ksp: KspConfig },
}

/// Full-step Newton on an abstract residual. `step(u, r)` returns the
/// correction `du` solving `J(u) du = -r`. Flags divergence after three
/// consecutive residual increases.
pub fn newton_with<R, S>(mut u: Vec<f64>, residual: R, mut step: S, config: &NewtonConfig) -> Result<(Vec<f64>, SolveReport)>
where
    R: Fn(&[f64]) -> Vec<f64>,
    S: FnMut(&[f64], &[f64]) -> Result<Vec<f64>>,
{
    let mut r = residual(&u);
    let n0 = norm2(&r);
    let tol = (config.rtol * n0).max(config.atol);
    let mut history = vec![n0];
    let mut growth = 0;
    let mut failure = None;
    let mut its = 0;
    while history[its] > tol && its < config.maxit {
        let du = step(&u, &r)?;
        u.iter_mut().zip(&du).for_each(|(a, d)| *a += d);
        r = residual(&u);
        let nr = norm2(&r);
        growth = if nr > history[its] { growth + 1 } else { 0 };
        history.push(nr);
        its += 1;
        if growth >= 3 || !nr.is_finite() {
            failure = Some(SolveFailure::Divergence);
            break;
        }
    }
    let converged = history[its] <= tol;
    let failure = if converged { None } else { failure.or(Some(SolveFailure::MaxIterations)) };
    let final_relative_residual = if n0 > 0.0 { history[its] / n0 } else { 0.0 };
    Ok((u, SolveReport { iterations: its, converged, residual_history: history, final_relative_residual, failure }))
}

/// Newton's method for `F(u) = 0` of a form; constrained dofs take their
/// boundary values from the start.
pub fn newton(
    form: &FormDescriptor,
    space: &MixedSpace,
    bcs: &[DirichletBC],
    u0: &[f64],
    config: &NewtonConfig,
    inner: InnerSolver,
) -> Result<(Vec<f64>, SolveReport)> {
    let asm = Assembler::new(form, space)?;
    let bc = dirichlet_dofs(space, bcs)?;
    let constrained: Vec<usize> = bc.iter().map(|&(d, _)| d).collect();
    let mut u = u0.to_vec();
    for &(d, g) in &bc {
        u[d] = g;
    }
    let residual = |u: &[f64]| asm.residual(u, &constrained);
    match inner {
        InnerSolver::DenseLu => newton_with(
            u,
            residual,
            |u, _| {
                let (j, rhs) = asm.linearize(u, &constrained);
                Ok(j.to_dense().lu()?.solve(&rhs))
            },
            config,
        ),
        InnerSolver::CgMultigrid { hierarchy, ksp } => newton_with(
            u,
            residual,
            |u, _| {
                hierarchy.reassemble_at(u)?;
                let (j, rhs) = asm.linearize(u, &constrained);
                let h = &*hierarchy;
                let (du, _) = cg(&j, |r| h.apply(r), &rhs, &vec![0.0; rhs.len()], ksp.rtol, ksp.maxit);
                Ok(du)
            },
            config,
        ),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaxationConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_sweeps: usize,
}

impl Default for RelaxationConfig {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-12, max_sweeps: 200 }
    }
}

/// Repeated nonlinear patch sweeps until the global residual drops by
/// `rtol`. A stall is flagged after ten consecutive non-decreasing sweeps.
pub fn nonlinear_relaxation_solve(
    form: &FormDescriptor,
    space: &MixedSpace,
    bcs: &[DirichletBC],
    smoother: &PatchSmoother,
    u0: &[f64],
    config: &RelaxationConfig,
) -> Result<(Vec<f64>, SolveReport)> {
    let asm = Assembler::new(form, space)?;
    let bc = dirichlet_dofs(space, bcs)?;
    let constrained: Vec<usize> = bc.iter().map(|&(d, _)| d).collect();
    let mut u = u0.to_vec();
    for &(d, g) in &bc {
        u[d] = g;
    }
    let n0 = norm2(&asm.residual(&u, &constrained));
    let tol = (config.rtol * n0).max(config.atol);
    let mut history = vec![n0];
    let mut flat = 0;
    let mut failure = None;
    let mut sweeps = 0;
    while history[sweeps] > tol && sweeps < config.max_sweeps {
        let (next, _) = smoother.apply_nonlinear(&u, &asm)?;
        u = next;
        let nr = norm2(&asm.residual(&u, &constrained));
        flat = if nr >= history[sweeps] { flat + 1 } else { 0 };
        history.push(nr);
        sweeps += 1;
        if flat >= 10 {
            failure = Some(SolveFailure::Stall);
            break;
        }
    }
    let converged = history[sweeps] <= tol;
    let failure = if converged { None } else { failure.or(Some(SolveFailure::MaxIterations)) };
    let final_relative_residual = if n0 > 0.0 { history[sweeps] / n0 } else { 0.0 };
    Ok((u, SolveReport { iterations: sweeps, converged, residual_history: history, final_relative_residual, failure }))
}
