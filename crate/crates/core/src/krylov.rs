//! Outer Krylov solvers with preconditioner hooks and kernel projection.

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm2, CsrMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveFailure {
    MaxIterations,
    /// Nonpositive curvature met in CG.
    Indefinite,
    /// A full GMRES restart cycle made no progress.
    Stagnation,
    Divergence,
    Stall,
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub residual_history: Vec<f64>,
    pub final_relative_residual: f64,
    pub failure: Option<SolveFailure>,
}

impl SolveReport {
    fn start(r0: f64) -> Self {
        Self { residual_history: vec![r0], final_relative_residual: 1.0, ..Self::default() }
    }

    fn finish(mut self, iterations: usize, converged: bool, failure: Option<SolveFailure>) -> Self {
        let r0 = self.residual_history[0];
        let last = *self.residual_history.last().unwrap();
        self.iterations = iterations;
        self.converged = converged;
        self.failure = if converged { None } else { failure.or(Some(SolveFailure::MaxIterations)) };
        self.final_relative_residual = if r0 > 0.0 { last / r0 } else { 0.0 };
        self
    }
}

/// Orthonormal basis of an operator kernel.
#[derive(Clone, Debug)]
pub struct Nullspace {
    basis: Vec<Vec<f64>>,
}

impl Nullspace {
    /// Orthonormalizes the given vectors (modified Gram-Schmidt).
    pub fn new(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let mut basis: Vec<Vec<f64>> = Vec::new();
        for mut v in vectors {
            for q in &basis {
                let c = dot(q, &v);
                axpy(-c, q, &mut v);
            }
            let n = norm2(&v);
            if n < 1e-14 {
                return Err(Error::InvalidArgument("nullspace vectors are linearly dependent".into()));
            }
            v.iter_mut().for_each(|x| *x /= n);
            basis.push(v);
        }
        Ok(Self { basis })
    }

    pub fn basis(&self) -> &[Vec<f64>] {
        &self.basis
    }

    pub fn project(&self, x: &mut [f64]) {
        for q in &self.basis {
            let c = dot(q, x);
            axpy(-c, q, x);
        }
    }
}

pub fn identity_preconditioner(r: &[f64]) -> Vec<f64> {
    r.to_vec()
}

/// Preconditioned conjugate gradients; convergence is measured in the
/// preconditioned residual norm `||M r||`.
pub fn cg<P>(a: &CsrMatrix, prec: P, b: &[f64], x0: &[f64], rtol: f64, maxit: usize) -> (Vec<f64>, SolveReport)
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut r = a.residual(b, &x);
    let mut z = prec(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let norm0 = norm2(&z);
    let mut rep = SolveReport::start(norm0);
    if norm0 == 0.0 {
        return (x, rep.finish(0, true, None));
    }
    for k in 1..=maxit {
        let q = a.spmv(&p);
        let pq = dot(&p, &q);
        if !(pq > 0.0) || !(rz > 0.0) {
            return (x, rep.finish(k - 1, false, Some(SolveFailure::Indefinite)));
        }
        let alpha = rz / pq;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &q, &mut r);
        z = prec(&r);
        let nz = norm2(&z);
        rep.residual_history.push(nz);
        if nz <= rtol * norm0 {
            return (x, rep.finish(k, true, None));
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    (x, rep.finish(maxit, false, None))
}

/// Right-preconditioned restarted GMRES; convergence is measured on the
/// Euclidean norm of the true residual relative to the initial one.
#[allow(clippy::too_many_arguments)]
pub fn gmres<P>(
    a: &CsrMatrix,
    prec: P,
    b: &[f64],
    x0: &[f64],
    rtol: f64,
    maxit: usize,
    restart: usize,
    nullspace: Option<&Nullspace>,
) -> (Vec<f64>, SolveReport)
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let restart = restart.max(1);
    let mut b = b.to_vec();
    let mut x = x0.to_vec();
    if let Some(ns) = nullspace {
        ns.project(&mut b);
        ns.project(&mut x);
    }
    let mut r = a.residual(&b, &x);
    let mut beta = norm2(&r);
    let norm0 = beta;
    let mut rep = SolveReport::start(norm0);
    let tol = rtol * norm0;
    let mut its = 0;
    if beta == 0.0 {
        return (x, rep.finish(0, true, None));
    }
    loop {
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|ri| ri / beta).collect()];
        let mut zs: Vec<Vec<f64>> = Vec::new();
        let mut h = vec![vec![0.0; restart]; restart + 1];
        let (mut cs, mut sn) = (vec![0.0; restart], vec![0.0; restart]);
        let mut g = vec![0.0; restart + 1];
        g[0] = beta;
        let mut k = 0;
        while k < restart && its < maxit {
            let mut z = prec(&v[k]);
            if let Some(ns) = nullspace {
                ns.project(&mut z);
            }
            let mut w = a.spmv(&z);
            zs.push(z);
            for i in 0..=k {
                h[i][k] = dot(&w, &v[i]);
                axpy(-h[i][k], &v[i], &mut w);
            }
            h[k + 1][k] = norm2(&w);
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = h[k][k].hypot(h[k + 1][k]);
            let breakdown = h[k + 1][k] <= 1e-14 * den;
            if den > 0.0 {
                cs[k] = h[k][k] / den;
                sn[k] = h[k + 1][k] / den;
            } else {
                cs[k] = 1.0;
                sn[k] = 0.0;
            }
            let hk1 = h[k + 1][k];
            h[k][k] = cs[k] * h[k][k] + sn[k] * hk1;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            its += 1;
            k += 1;
            rep.residual_history.push(g[k].abs());
            if g[k].abs() <= tol || breakdown {
                break;
            }
            let vk: Vec<f64> = w.iter().map(|wi| wi / hk1).collect();
            v.push(vk);
        }
        // back substitution for the least-squares coefficients
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let mut s = g[i];
            for j in i + 1..k {
                s -= h[i][j] * y[j];
            }
            y[i] = if h[i][i] != 0.0 { s / h[i][i] } else { 0.0 };
        }
        for (yi, zi) in y.iter().zip(&zs) {
            axpy(*yi, zi, &mut x);
        }
        if let Some(ns) = nullspace {
            ns.project(&mut x);
        }
        r = a.residual(&b, &x);
        let beta_new = norm2(&r);
        *rep.residual_history.last_mut().unwrap() = beta_new;
        if beta_new <= tol {
            return (x, rep.finish(its, true, None));
        }
        if its >= maxit {
            return (x, rep.finish(its, false, None));
        }
        if beta_new >= beta * (1.0 - 1e-12) {
            return (x, rep.finish(its, false, Some(SolveFailure::Stagnation)));
        }
        beta = beta_new;
    }
}

/// Preconditioned Richardson `x <- x + scale M (b - A x)` with the true
/// residual norm as criterion.
pub fn richardson<P>(
    a: &CsrMatrix,
    prec: P,
    b: &[f64],
    x0: &[f64],
    scale: f64,
    rtol: f64,
    maxit: usize,
) -> (Vec<f64>, SolveReport)
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = x0.to_vec();
    let mut r = a.residual(b, &x);
    let norm0 = norm2(&r);
    let mut rep = SolveReport::start(norm0);
    if norm0 == 0.0 {
        return (x, rep.finish(0, true, None));
    }
    for k in 1..=maxit {
        let z = prec(&r);
        axpy(scale, &z, &mut x);
        r = a.residual(b, &x);
        let nr = norm2(&r);
        rep.residual_history.push(nr);
        if nr <= rtol * norm0 {
            return (x, rep.finish(k, true, None));
        }
        if !nr.is_finite() {
            return (x, rep.finish(k, false, Some(SolveFailure::Divergence)));
        }
    }
    (x, rep.finish(maxit, false, None))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KspType {
    Cg,
    Gmres,
    Richardson,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KspConfig {
    pub ksp_type: KspType,
    pub rtol: f64,
    pub maxit: usize,
    pub restart: usize,
    pub richardson_scale: f64,
}

impl Default for KspConfig {
    fn default() -> Self {
        Self { ksp_type: KspType::Cg, rtol: 1e-10, maxit: 200, restart: 100, richardson_scale: 1.0 }
    }
}

/// Dispatches to the configured solver.
pub fn solve<P>(
    config: &KspConfig,
    a: &CsrMatrix,
    prec: P,
    b: &[f64],
    x0: &[f64],
    nullspace: Option<&Nullspace>,
) -> (Vec<f64>, SolveReport)
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    match config.ksp_type {
        KspType::Cg => cg(a, prec, b, x0, config.rtol, config.maxit),
        KspType::Gmres => gmres(a, prec, b, x0, config.rtol, config.maxit, config.restart, nullspace),
        KspType::Richardson => richardson(a, prec, b, x0, config.richardson_scale, config.rtol, config.maxit),
    }
}
