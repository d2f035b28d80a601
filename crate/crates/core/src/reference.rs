//! Slow, independent solvers used as correctness oracles, plus the
//! least-absolute-deviation (LAD) baseline.
//!
//! The decomposition objective is a weighted sum of absolute values of affine
//! functions of the coefficients,
//!
//! ```text
//! sum_i w_i |(M a - b)_i|,   M = [I; -P; -DP],   b = [0; -f; -D f]
//! ```
//!
//! which [`proximal_reference`] minimizes without any of the ADMM splitting.
//! The default scheme is a primal-dual (Chambolle-Pock) iteration whose dual
//! iterate also yields a certified lower bound on the optimum, so the run can
//! stop on a duality gap. A plain normalized subgradient method with
//! `1/sqrt(k)` steps is available as a cross-check.

use nalgebra::{DMatrix, DVector};

use crate::admm::{AdmmWorkspace, DecompositionResult, Penalties, SolverConfig};
use crate::basis::BasisMatrix;
use crate::diff::DiffOperator;
use crate::error::{Error, Result};

/// Update rule used by the reference minimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    /// Primal-dual hybrid gradient with steps `0.99 / ||M||`.
    PrimalDual,
    /// Normalized subgradient steps `initial / sqrt(k + 1)`.
    Diminishing { initial: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceConfig {
    pub max_iters: usize,
    pub step_rule: StepRule,
    /// Relative duality-gap target for the primal-dual rule. The subgradient
    /// rule has no certificate and always runs `max_iters`.
    pub tol: f64,
}

impl Default for ReferenceConfig {
    fn default() -> Self {
        Self {
            max_iters: 200_000,
            step_rule: StepRule::PrimalDual,
            tol: 1e-9,
        }
    }
}

impl ReferenceConfig {
    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!("reference tol must be > 0, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("reference max_iters must be positive".into()));
        }
        if let StepRule::Diminishing { initial } = self.step_rule {
            if !(initial > 0.0 && initial.is_finite()) {
                return Err(Error::Config(format!("initial step must be > 0, got {initial}")));
            }
        }
        Ok(())
    }
}

/// Best iterate of a reference run together with a lower bound on the optimum.
#[derive(Debug, Clone)]
pub struct CertifiedSolution {
    pub result: DecompositionResult,
    /// Dual objective of a feasible dual point; `-inf` when no certificate
    /// was produced (subgradient rule).
    pub lower_bound: f64,
}

impl CertifiedSolution {
    pub fn objective(&self) -> f64 {
        self.result.final_objective().unwrap_or(f64::NAN)
    }

    pub fn gap(&self) -> f64 {
        self.objective() - self.lower_bound
    }
}

/// Weighted l1 regression `min_a sum_i w_i |(M a - b)_i|`, rows of zero
/// weight dropped.
struct L1Problem {
    m: DMatrix<f64>,
    b: DVector<f64>,
    w: DVector<f64>,
}

impl L1Problem {
    fn build(
        f: &[f64],
        basis: &BasisMatrix,
        diff: Option<&DiffOperator>,
        weights: [f64; 3],
    ) -> Result<Self> {
        let n = basis.block_size();
        if f.len() != n * n {
            return Err(Error::dim("vectorized block", n * n, f.len()));
        }
        if let Some(bad) = f.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("block contains non-finite value {bad}")));
        }
        let p = basis.matrix();
        let k = p.ncols();
        let mut blocks: Vec<(DMatrix<f64>, DVector<f64>, f64)> = Vec::new();
        if weights[0] > 0.0 {
            blocks.push((DMatrix::identity(k, k), DVector::zeros(k), weights[0]));
        }
        if weights[1] > 0.0 {
            blocks.push((-p, -DVector::from_column_slice(f), weights[1]));
        }
        if weights[2] > 0.0 {
            let d = diff.ok_or_else(|| Error::Internal("TV weight without operator".into()))?;
            if d.block_size() != n {
                return Err(Error::dim("difference operator block size", n, d.block_size()));
            }
            let dp = d.apply_dense(p)?;
            let df = DVector::from_vec(d.apply_matrix_free(f)?);
            blocks.push((-dp, -df, weights[2]));
        }
        let rows: usize = blocks.iter().map(|(m, _, _)| m.nrows()).sum();
        let mut m = DMatrix::zeros(rows, k);
        let mut b = DVector::zeros(rows);
        let mut w = DVector::zeros(rows);
        let mut at = 0;
        for (mb, bb, wb) in blocks {
            let r = mb.nrows();
            m.rows_mut(at, r).copy_from(&mb);
            b.rows_mut(at, r).copy_from(&bb);
            w.rows_mut(at, r).fill(wb);
            at += r;
        }
        Ok(Self { m, b, w })
    }

    fn value(&self, alpha: &DVector<f64>) -> f64 {
        (&self.m * alpha - &self.b)
            .iter()
            .zip(self.w.iter())
            .map(|(r, w)| w * r.abs())
            .sum()
    }

    /// Projects a box-feasible dual onto `{p : M^T p = 0}`, rescales it back
    /// into the box and returns the resulting dual objective `-b^T p`.
    fn dual_bound(&self, p: &DVector<f64>, gram: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> f64 {
        let correction = &self.m * gram.solve(&self.m.tr_mul(p));
        let q = p - correction;
        let mut scale = 1.0f64;
        for (qi, wi) in q.iter().zip(self.w.iter()) {
            if qi.abs() > *wi {
                scale = scale.min(wi / qi.abs());
            }
        }
        -(self.b.dot(&q)) * scale
    }

    fn minimize(&self, cfg: &ReferenceConfig) -> (DVector<f64>, Vec<f64>, f64) {
        match cfg.step_rule {
            StepRule::PrimalDual => self.primal_dual(cfg),
            StepRule::Diminishing { initial } => self.subgradient(cfg, initial),
        }
    }

    fn primal_dual(&self, cfg: &ReferenceConfig) -> (DVector<f64>, Vec<f64>, f64) {
        let k = self.m.ncols();
        let gram_mat = self.m.tr_mul(&self.m);
        let op_norm = gram_mat.clone().symmetric_eigenvalues().max().sqrt();
        let gram = nalgebra::Cholesky::new(gram_mat).expect("M contains an identity or P block");
        let step = 0.99 / op_norm;

        let mut alpha = DVector::zeros(k);
        let mut dual = DVector::zeros(self.m.nrows());
        let mut best = alpha.clone();
        let mut best_value = self.value(&alpha);
        let mut history = Vec::with_capacity(cfg.max_iters.min(1 << 16));
        let mut lower = f64::NEG_INFINITY;

        for it in 0..cfg.max_iters {
            let next = &alpha - self.m.tr_mul(&dual) * step;
            let extrapolated = &next * 2.0 - &alpha;
            alpha = next;
            dual += (&self.m * &extrapolated - &self.b) * step;
            for (d, w) in dual.iter_mut().zip(self.w.iter()) {
                *d = d.clamp(-*w, *w);
            }

            let value = self.value(&alpha);
            if value < best_value {
                best_value = value;
                best.copy_from(&alpha);
            }
            history.push(best_value);

            if it % 50 == 49 {
                lower = lower.max(self.dual_bound(&dual, &gram));
                if best_value - lower <= cfg.tol * best_value.abs().max(1.0) {
                    break;
                }
            }
        }
        (best, history, lower)
    }

    fn subgradient(&self, cfg: &ReferenceConfig, initial: f64) -> (DVector<f64>, Vec<f64>, f64) {
        let k = self.m.ncols();
        let mut alpha = DVector::zeros(k);
        let mut best = alpha.clone();
        let mut best_value = self.value(&alpha);
        let mut history = Vec::with_capacity(cfg.max_iters);
        for it in 0..cfg.max_iters {
            let r = &self.m * &alpha - &self.b;
            let signs = r.zip_map(&self.w, |ri, wi| wi * ri.signum() * f64::from(ri != 0.0));
            let g = self.m.tr_mul(&signs);
            let gn = g.norm();
            if gn == 0.0 {
                history.push(best_value);
                break;
            }
            alpha -= g * (initial / ((it + 1) as f64).sqrt() / gn);
            let value = self.value(&alpha);
            if value < best_value {
                best_value = value;
                best.copy_from(&alpha);
            }
            history.push(best_value);
        }
        (best, history, f64::NEG_INFINITY)
    }
}

fn certified(
    f: &[f64],
    basis: &BasisMatrix,
    diff: Option<&DiffOperator>,
    weights: [f64; 3],
    cfg: &ReferenceConfig,
) -> Result<CertifiedSolution> {
    cfg.validate()?;
    let problem = L1Problem::build(f, basis, diff, weights)?;
    let (alpha, history, lower_bound) = problem.minimize(cfg);
    let s = DVector::from_column_slice(f) - basis.matrix() * &alpha;
    Ok(CertifiedSolution {
        result: DecompositionResult {
            alpha: alpha.as_slice().to_vec(),
            s: s.as_slice().to_vec(),
            primal_residuals: Vec::new(),
            iterations_run: history.len(),
            objective_history: history,
        },
        lower_bound,
    })
}

/// High-precision minimizer of the decomposition objective with weights
/// `(1, lambda1, lambda2)` taken from `solver`.
///
/// Intended for small blocks (`N <= 16`); cost grows with `N^2 K` per
/// iteration. `objective_history` holds the best-so-far objective.
pub fn proximal_reference(
    f: &[f64],
    basis: &BasisMatrix,
    diff: &DiffOperator,
    solver: &SolverConfig,
    config: &ReferenceConfig,
) -> Result<DecompositionResult> {
    Ok(certified_reference(f, basis, diff, solver, config)?.result)
}

/// [`proximal_reference`] with the dual lower bound attached.
pub fn certified_reference(
    f: &[f64],
    basis: &BasisMatrix,
    diff: &DiffOperator,
    solver: &SolverConfig,
    config: &ReferenceConfig,
) -> Result<CertifiedSolution> {
    solver.validate()?;
    certified(
        f,
        basis,
        Some(diff),
        [1.0, solver.lambda1, solver.lambda2],
        config,
    )
}

/// Reference minimizer of `||f - P a||_1` (the LAD objective).
pub fn lad_reference(
    f: &[f64],
    basis: &BasisMatrix,
    config: &ReferenceConfig,
) -> Result<CertifiedSolution> {
    certified(f, basis, None, [0.0, 1.0, 0.0], config)
}

/// Least-absolute-deviation fit `min_a ||f - P a||_1` with the default
/// solver budget.
pub fn lad_fit(f: &[f64], basis: &BasisMatrix) -> Result<DecompositionResult> {
    lad_fit_with(f, basis, &SolverConfig::default())
}

/// LAD fit through the ADMM solver with the coefficient and TV branches
/// removed. Uses `rho2`, `max_iters` and `primal_tol` from `config`; the
/// lambdas are ignored.
pub fn lad_fit_with(
    f: &[f64],
    basis: &BasisMatrix,
    config: &SolverConfig,
) -> Result<DecompositionResult> {
    let penalties = Penalties {
        alpha: 0.0,
        fit: 1.0,
        tv: None,
    };
    AdmmWorkspace::with_penalties(basis, None, config, penalties)?.solve(f)
}

/// Builds a reusable LAD workspace for many blocks.
pub fn lad_workspace(basis: &BasisMatrix, config: &SolverConfig) -> Result<AdmmWorkspace> {
    let penalties = Penalties {
        alpha: 0.0,
        fit: 1.0,
        tv: None,
    };
    AdmmWorkspace::with_penalties(basis, None, config, penalties)
}
