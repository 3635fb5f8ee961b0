//! Whole-trajectory reference computations.
//!
//! The stacked trajectory `X = (x_0, ..., x_N)` satisfies the uncertainty
//! constraint iff `‖𝔽X - ν‖²_1 + ‖Y - ℍX‖²_2 ≤ 1`, where `𝔽` is block
//! bidiagonal (`F_k` on the diagonal, `-C_{k-1}` below it), `ℍ` is block
//! diagonal in `H_k`, and `ν` stacks the nominal prior and known inputs.
//! Everything here works on those dense block matrices directly and never
//! touches the `Q/r/α` recursion, so it serves as an independent check of
//! the observer.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::DescriptorSystem;
use crate::observer::{final_state, ObserverState, INFEASIBLE_BETA, RANGE_TOL};
use crate::psdlinalg::{pinv_psd, sqrt_psd, PinvResult, SymPsdMatrix};

/// Relative rank tolerance for the stacked matrices. Their spectra span
/// many more decades than `Q_k`, so the default cutoff would discard
/// genuine small eigenvalues; structural zeros still come out exactly zero.
pub const STACKED_TOL_REL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct BlockSystem {
    pub horizon: usize,
    pub n: usize,
    pub m: usize,
    pub p: usize,
    /// `((N+1) m) x ((N+1) n)`.
    pub ff: DMatrix<f64>,
    /// `((N+1) p) x ((N+1) n)`.
    pub hh: DMatrix<f64>,
    /// `diag(S, S_0, ..., S_{N-1})`.
    pub weight1: DMatrix<f64>,
    /// `diag(R_0, ..., R_N)`.
    pub weight2: DMatrix<f64>,
    /// `(prior, f̄_0, ..., f̄_{N-1})`.
    pub nominal: DVector<f64>,
}

pub fn build_block_system(sys: &DescriptorSystem, horizon: usize) -> Result<BlockSystem> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    let blocks = horizon + 1;
    let mut ff = DMatrix::zeros(blocks * m, blocks * n);
    let mut hh = DMatrix::zeros(blocks * p, blocks * n);
    let mut weight1 = DMatrix::zeros(blocks * m, blocks * m);
    let mut weight2 = DMatrix::zeros(blocks * p, blocks * p);
    let mut nominal = DVector::zeros(blocks * m);

    weight1.view_mut((0, 0), (m, m)).copy_from(sys.s().matrix());
    nominal.rows_mut(0, m).copy_from(&sys.prior());
    for k in 0..blocks {
        ff.view_mut((k * m, k * n), (m, n)).copy_from(&sys.f(k)?);
        hh.view_mut((k * p, k * n), (p, n)).copy_from(&sys.h(k)?);
        weight2.view_mut((k * p, k * p), (p, p)).copy_from(&sys.r(k)?);
        if k > 0 {
            ff.view_mut((k * m, (k - 1) * n), (m, n)).copy_from(&(-sys.c(k - 1)?));
            weight1.view_mut((k * m, k * m), (m, m)).copy_from(&sys.s_k(k - 1)?);
            nominal.rows_mut(k * m, m).copy_from(&sys.known_input(k - 1)?);
        }
    }
    Ok(BlockSystem {
        horizon,
        n,
        m,
        p,
        ff,
        hh,
        weight1,
        weight2,
        nominal,
    })
}

impl BlockSystem {
    pub fn stack_measurements(&self, y: &[DVector<f64>]) -> Result<DVector<f64>> {
        check_horizon(y, self.horizon)?;
        let mut out = DVector::zeros((self.horizon + 1) * self.p);
        for (k, yk) in y.iter().enumerate() {
            if yk.len() != self.p {
                return Err(Error::dim(format!("y_{k}"), self.p, yk.len()));
            }
            out.rows_mut(k * self.p, self.p).copy_from(yk);
        }
        Ok(out)
    }

    pub fn stack_states(&self, xs: &[DVector<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros((self.horizon + 1) * self.n);
        for (k, xk) in xs.iter().enumerate() {
            out.rows_mut(k * self.n, self.n).copy_from(xk);
        }
        out
    }

    pub fn split_states(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        (0..=self.horizon)
            .map(|k| x.rows(k * self.n, self.n).into_owned())
            .collect()
    }

    /// `𝔽' W_1 𝔽 + ℍ' W_2 ℍ`.
    pub fn normal_matrix(&self) -> DMatrix<f64> {
        self.ff.transpose() * &self.weight1 * &self.ff + self.hh.transpose() * &self.weight2 * &self.hh
    }

    /// `𝔽' W_1 ν + ℍ' W_2 Y`.
    pub fn normal_rhs(&self, y_stack: &DVector<f64>) -> DVector<f64> {
        self.ff.transpose() * (&self.weight1 * &self.nominal) + self.hh.transpose() * (&self.weight2 * y_stack)
    }

    /// The block quadratic form `‖𝔽X - ν‖²_1 + ‖Y - ℍX‖²_2`.
    pub fn cost(&self, x: &DVector<f64>, y_stack: &DVector<f64>) -> f64 {
        let e1 = &self.ff * x - &self.nominal;
        let e2 = y_stack - &self.hh * x;
        (&self.weight1 * &e1).dot(&e1) + (&self.weight2 * &e2).dot(&e2)
    }

    /// `[W_1^{1/2} 𝔽; W_2^{1/2} ℍ]`.
    pub fn weighted_operator(&self) -> Result<DMatrix<f64>> {
        let w1 = sqrt_psd(&SymPsdMatrix::new(self.weight1.clone())?);
        let w2 = sqrt_psd(&SymPsdMatrix::new(self.weight2.clone())?);
        let top = w1 * &self.ff;
        let bottom = w2 * &self.hh;
        let mut a = DMatrix::zeros(top.nrows() + bottom.nrows(), top.ncols());
        a.rows_mut(0, top.nrows()).copy_from(&top);
        a.rows_mut(top.nrows(), bottom.nrows()).copy_from(&bottom);
        Ok(a)
    }

    /// `𝓛 = (0, ..., 0, ℓ)`.
    pub fn terminal_functional(&self, l: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros((self.horizon + 1) * self.n);
        out.rows_mut(self.horizon * self.n, self.n).copy_from(l);
        out
    }
}

fn check_horizon(y: &[DVector<f64>], horizon: usize) -> Result<()> {
    if y.len() != horizon + 1 {
        return Err(Error::dim("measurement count", horizon + 1, y.len()));
    }
    Ok(())
}

/// Smoothed states `x̂_{0|N}..x̂_{N|N}` and the fitting cost they attain.
#[derive(Debug, Clone, PartialEq)]
pub struct SmootherResult {
    pub xhat: Vec<DVector<f64>>,
    pub cost: f64,
}

/// Weighted fitting cost of a candidate trajectory, evaluated step by step.
pub fn fitting_cost(sys: &DescriptorSystem, y: &[DVector<f64>], xs: &[DVector<f64>]) -> Result<f64> {
    if xs.len() != y.len() || xs.is_empty() {
        return Err(Error::dim("trajectory length", y.len(), xs.len()));
    }
    let e0 = sys.f(0)? * &xs[0] - sys.prior();
    let mut total = sys.s().quad_form(&e0);
    for (k, (xk, yk)) in xs.iter().zip(y).enumerate() {
        let ey = yk - sys.h(k)? * xk;
        total += (sys.r(k)? * &ey).dot(&ey);
        if k > 0 {
            let ef = sys.f(k)? * xk - sys.c(k - 1)? * &xs[k - 1] - sys.known_input(k - 1)?;
            total += (sys.s_k(k - 1)? * &ef).dot(&ef);
        }
    }
    Ok(total)
}

struct BatchSolution {
    blocks: BlockSystem,
    normal_pinv: PinvResult,
    y_stack: DVector<f64>,
    xhat: DVector<f64>,
    cost: f64,
}

fn solve_batch(sys: &DescriptorSystem, y: &[DVector<f64>], horizon: usize) -> Result<BatchSolution> {
    check_horizon(y, horizon)?;
    let blocks = build_block_system(sys, horizon)?;
    let y_stack = blocks.stack_measurements(y)?;
    let normal = SymPsdMatrix::new(blocks.normal_matrix())?;
    let normal_pinv = pinv_psd(&normal, STACKED_TOL_REL)?;
    let xhat = normal_pinv.apply(&blocks.normal_rhs(&y_stack));
    let cost = blocks.cost(&xhat, &y_stack);
    Ok(BatchSolution {
        blocks,
        normal_pinv,
        y_stack,
        xhat,
        cost,
    })
}

/// Minimum-norm minimizer of the fitting cost over the whole trajectory,
/// from the normal equations of the block system.
pub fn batch_estimate(sys: &DescriptorSystem, y: &[DVector<f64>], horizon: usize) -> Result<SmootherResult> {
    let sol = solve_batch(sys, y, horizon)?;
    Ok(SmootherResult {
        xhat: sol.blocks.split_states(&sol.xhat),
        cost: sol.cost,
    })
}

/// Forward `Q/r` recursion followed by the backward substitution
/// `x̂_k = W_k⁺ (C_k' S_k (F_{k+1} x̂_{k+1} - f̄_k) + r_k)`, `x̂_N = Q_N⁺ r_N`.
pub fn smooth_backward(sys: &DescriptorSystem, y: &[DVector<f64>], horizon: usize) -> Result<SmootherResult> {
    smooth_backward_tol(sys, y, horizon, 0.0)
}

/// [`smooth_backward`] with an explicit relative rank tolerance for every
/// `Q_k⁺` and `W_k⁺`.
pub fn smooth_backward_tol(
    sys: &DescriptorSystem,
    y: &[DVector<f64>],
    horizon: usize,
    tol_rel: f64,
) -> Result<SmootherResult> {
    check_horizon(y, horizon)?;
    let mut states: Vec<ObserverState<'_>> = Vec::with_capacity(horizon + 1);
    states.push(ObserverState::init(sys, &y[0], tol_rel)?);
    for yk in &y[1..] {
        let next = states[states.len() - 1].step(yk)?;
        states.push(next);
    }

    let mut xhat = vec![DVector::zeros(sys.n()); horizon + 1];
    xhat[horizon] = states[horizon].estimate();
    for k in (0..horizon).rev() {
        let w_pinv = pinv_psd(&states[k].innovation_matrix()?, tol_rel)?;
        let c = sys.c(k)?;
        let pull = sys.f(k + 1)? * &xhat[k + 1] - sys.known_input(k)?;
        let rhs = c.transpose() * (sys.s_k(k)? * pull) + states[k].r();
        xhat[k] = w_pinv.apply(&rhs);
    }
    let cost = fitting_cost(sys, y, &xhat)?;
    Ok(SmootherResult { xhat, cost })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeMembership {
    pub member: bool,
    /// `‖z‖²` for the minimum-norm `z` with `A' z = 𝓛`.
    pub norm_sq: f64,
    /// Relative residual `‖A' z - 𝓛‖ / ‖𝓛‖`.
    pub residual: f64,
}

/// The weighted stacked operator `A = [W_1^{1/2} 𝔽; W_2^{1/2} ℍ]` for one
/// horizon with `(A'A)⁺` precomputed, for repeated membership queries.
#[derive(Debug, Clone)]
pub struct StackedRange {
    blocks: BlockSystem,
    a: DMatrix<f64>,
    gram_pinv: PinvResult,
}

impl StackedRange {
    pub fn new(sys: &DescriptorSystem, horizon: usize) -> Result<Self> {
        let blocks = build_block_system(sys, horizon)?;
        let a = blocks.weighted_operator()?;
        let gram = SymPsdMatrix::new(a.transpose() * &a)?;
        let gram_pinv = pinv_psd(&gram, STACKED_TOL_REL)?;
        Ok(StackedRange { blocks, a, gram_pinv })
    }

    /// Tests whether `𝓛 = (0, ..., 0, ℓ)` is in the range of `A'`.
    pub fn membership(&self, l: &DVector<f64>) -> Result<RangeMembership> {
        if l.len() != self.blocks.n {
            return Err(Error::dim("direction", self.blocks.n, l.len()));
        }
        if l.norm() == 0.0 {
            return Err(Error::ZeroDirection);
        }
        let big_l = self.blocks.terminal_functional(l);
        // least-squares solution of A' z = 𝓛 with minimum norm
        let z = &self.a * self.gram_pinv.apply(&big_l);
        let residual = (self.a.transpose() * &z - &big_l).norm() / big_l.norm();
        Ok(RangeMembership {
            member: residual <= RANGE_TOL,
            norm_sq: z.norm_squared(),
            residual,
        })
    }
}

/// One-shot [`StackedRange::membership`].
pub fn range_membership(sys: &DescriptorSystem, horizon: usize, l: &DVector<f64>) -> Result<RangeMembership> {
    if l.len() != sys.n() {
        return Err(Error::dim("direction", sys.n(), l.len()));
    }
    if l.norm() == 0.0 {
        return Err(Error::ZeroDirection);
    }
    StackedRange::new(sys, horizon)?.membership(l)
}

/// `s(𝓛 | 𝒢ᴺ_y) = (ℓ, x̂_N) + sqrt(β_N) (Q_N⁺ℓ, ℓ)^{1/2}` from the forward
/// recursion, `+∞` outside the observable range.
pub fn support_function(sys: &DescriptorSystem, y: &[DVector<f64>], horizon: usize, l: &DVector<f64>) -> Result<f64> {
    support_function_tol(sys, y, horizon, l, 0.0)
}

/// [`support_function`] with an explicit relative rank tolerance.
pub fn support_function_tol(
    sys: &DescriptorSystem,
    y: &[DVector<f64>],
    horizon: usize,
    l: &DVector<f64>,
    tol_rel: f64,
) -> Result<f64> {
    check_horizon(y, horizon)?;
    let state = final_state(sys, y, tol_rel)?;
    let beta = state.beta();
    if beta < INFEASIBLE_BETA {
        return Err(Error::InfeasibleData { step: horizon, beta });
    }
    let d = state.directional_error(l)?;
    if !d.finite {
        return Ok(f64::INFINITY);
    }
    Ok(d.estimate_component + d.raw_expression)
}

/// Direct maximization of `(𝓛, X)` over the a-posteriori set.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportPoint {
    pub value: f64,
    /// The maximizing trajectory, absent when the value is infinite.
    pub maximizer: Option<Vec<DVector<f64>>>,
    /// Block quadratic form at the maximizer (should equal one).
    pub constraint_at_maximizer: f64,
    pub beta: f64,
}

/// Closed-form maximizer `X̂ + sqrt(β) M⁺𝓛 / sqrt((M⁺𝓛, 𝓛))` of the linear
/// functional over `{X : (M (X - X̂), X - X̂) ≤ β}`, with `M` the stacked
/// normal matrix and `β = 1 - J(X̂)`.
pub fn support_function_direct(
    sys: &DescriptorSystem,
    y: &[DVector<f64>],
    horizon: usize,
    l: &DVector<f64>,
) -> Result<SupportPoint> {
    if l.len() != sys.n() {
        return Err(Error::dim("direction", sys.n(), l.len()));
    }
    if l.norm() == 0.0 {
        return Err(Error::ZeroDirection);
    }
    let sol = solve_batch(sys, y, horizon)?;
    let beta = 1.0 - sol.cost;
    if beta < INFEASIBLE_BETA {
        return Err(Error::InfeasibleData { step: horizon, beta });
    }
    let big_l = sol.blocks.terminal_functional(l);
    let residual = (sol.normal_pinv.project(&big_l) - &big_l).norm() / big_l.norm();
    if residual > RANGE_TOL {
        return Ok(SupportPoint {
            value: f64::INFINITY,
            maximizer: None,
            constraint_at_maximizer: f64::NAN,
            beta,
        });
    }
    let d = sol.normal_pinv.apply(&big_l);
    let spread = d.dot(&big_l);
    let x_star = &sol.xhat + d * (beta.max(0.0).sqrt() / spread.sqrt());
    Ok(SupportPoint {
        value: big_l.dot(&x_star),
        constraint_at_maximizer: sol.blocks.cost(&x_star, &sol.y_stack),
        maximizer: Some(sol.blocks.split_states(&x_star)),
        beta,
    })
}

/// Projects a stacked trajectory onto `range(M)`, which identifies all
/// minimizers of the fitting cost with the minimum-norm one.
pub fn project_onto_determined(sys: &DescriptorSystem, horizon: usize, xs: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    let blocks = build_block_system(sys, horizon)?;
    let normal = SymPsdMatrix::new(blocks.normal_matrix())?;
    let p = pinv_psd(&normal, STACKED_TOL_REL)?;
    Ok(blocks.split_states(&p.project(&blocks.stack_states(xs))))
}
