//! The online minimax observer.
//!
//! The state `(k, Q_k, r_k, α_k)` is a sufficient statistic for the
//! measurements `y_0..y_k`: the worst-case fitting cost of any trajectory
//! ending in `x` is `(Q_k x, x) - 2 (r_k, x) + α_k`. Everything reported by the
//! observer (estimate, directional errors, causality index, global error and
//! the a-posteriori ellipsoid) is read off that quadratic.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::DescriptorSystem;
use crate::psdlinalg::{min_eigenvalue, pinv_psd, sqrt_psd, PinvResult, SymPsdMatrix};

/// Relative residual `‖Q⁺Qℓ - ℓ‖ / ‖ℓ‖` below which `ℓ` is taken to lie in
/// `range(Q)`.
pub const RANGE_TOL: f64 = 1e-6;

/// `β` below this value means the data cannot come from the uncertainty set.
pub const INFEASIBLE_BETA: f64 = -1e-6;

#[derive(Debug, Clone)]
pub struct ObserverState<'a> {
    k: usize,
    q: SymPsdMatrix,
    r: DVector<f64>,
    alpha: f64,
    sys: &'a DescriptorSystem,
    tol: f64,
    q_pinv: PinvResult,
}

/// Worst-case error of the estimate of `(ℓ, x_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectionalError {
    pub direction: DVector<f64>,
    pub finite: bool,
    /// `+∞` when the direction is not observable.
    pub sigma: f64,
    /// `(ℓ, x̂_k)`.
    pub estimate_component: f64,
    /// `sqrt(max(β, 0)) * sqrt((Q⁺ℓ, ℓ))` regardless of finiteness.
    pub raw_expression: f64,
}

/// The set of states consistent with the data:
/// `{x : (Q x, x) - 2 (Q x̂, x) + α ≤ 1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub q: SymPsdMatrix,
    pub center: DVector<f64>,
    pub alpha: f64,
}

impl Ellipsoid {
    /// Left-hand side of the membership inequality.
    pub fn level(&self, x: &DVector<f64>) -> f64 {
        let qx = self.q.matrix() * x;
        qx.dot(x) - 2.0 * (self.q.matrix() * &self.center).dot(x) + self.alpha
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.level(x) <= 1.0 + 1e-9
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxReport {
    pub k: usize,
    pub estimate: DVector<f64>,
    pub causality_index: usize,
    /// Global worst-case squared error, `+∞` when `causality_index < n`.
    pub rho: f64,
    pub beta: f64,
    pub directional: Vec<DirectionalError>,
}

impl<'a> ObserverState<'a> {
    /// Base case from the first measurement. `tol_rel == 0` selects the
    /// default rank tolerance.
    pub fn init(sys: &'a DescriptorSystem, y0: &DVector<f64>, tol_rel: f64) -> Result<Self> {
        check_measurement(sys, 0, y0)?;
        let f0 = sys.f(0)?;
        let h0 = sys.h(0)?;
        let r0 = sys.r(0)?;
        let s = sys.s().matrix();
        let prior = sys.prior();

        let q = f0.transpose() * s * &f0 + h0.transpose() * &r0 * &h0;
        let r = f0.transpose() * (s * &prior) + h0.transpose() * (&r0 * y0);
        let alpha = (s * &prior).dot(&prior) + (&r0 * y0).dot(y0);
        Self::assemble(sys, 0, q, r, alpha, tol_rel)
    }

    fn assemble(
        sys: &'a DescriptorSystem,
        k: usize,
        q: DMatrix<f64>,
        mut r: DVector<f64>,
        alpha: f64,
        tol: f64,
    ) -> Result<Self> {
        let mut q = SymPsdMatrix::new(q)?;
        let q_pinv = pinv_psd(&q, tol)?;
        if q_pinv.rank < q.dim() {
            // Drop the eigenvalues under the rank tolerance and the part of
            // r outside the kept range (r lies in range(Q) exactly). Left in
            // place, roundoff along structurally zero directions is amplified
            // by later steps until it passes the tolerance.
            let kept = DMatrix::from_fn(q.dim(), q_pinv.rank, |i, j| {
                q_pinv.range_basis()[(i, j)] * q_pinv.eigenvalues[j].sqrt()
            });
            q = SymPsdMatrix::new(&kept * kept.transpose())?;
            r = q_pinv.project(&r);
        }
        Ok(ObserverState {
            k,
            q,
            r,
            alpha,
            sys,
            tol,
            q_pinv,
        })
    }

    /// `W_k = Q_k + C_k' S_k C_k`.
    pub fn innovation_matrix(&self) -> Result<SymPsdMatrix> {
        let c = self.sys.c(self.k)?;
        let sk = self.sys.s_k(self.k)?;
        SymPsdMatrix::new(self.q.matrix() + c.transpose() * sk * &c)
    }

    /// Advances the recursion by one measurement.
    pub fn step(&self, y_next: &DVector<f64>) -> Result<ObserverState<'a>> {
        let k = self.k;
        let sys = self.sys;
        check_measurement(sys, k + 1, y_next)?;
        let c = sys.c(k)?;
        let sk = sys.s_k(k)?;
        let f = sys.f(k + 1)?;
        let h = sys.h(k + 1)?;
        let rw = sys.r(k + 1)?;
        let nominal = sys.known_input(k)?;

        let w = self.innovation_matrix()?;
        let w_pinv = pinv_psd(&w, self.tol)?;
        let wp = w_pinv.pinv.matrix();

        let sc = &sk * &c;
        let gain = &sc * wp;
        // S_k - S_k C_k W⁺ C_k' S_k, written as (I - G C') S (I - C G') + G Q G'
        // with G = S C W⁺ (equal since W⁺ W W⁺ = W⁺); the direct difference
        // loses positivity to cancellation when W is ill-conditioned. Both
        // terms and Q_{k+1} are formed as Gram products of square-root factors.
        let m = sys.m();
        let resid = DMatrix::<f64>::identity(m, m) - &gain * c.transpose();
        let b1 = resid * sqrt_psd(&SymPsdMatrix::new(sk.clone())?);
        let b2 = &gain * sqrt_psd(&self.q);
        let reduced = &b1 * b1.transpose() + &b2 * b2.transpose();
        let ft = f.transpose();

        let hr = h.transpose() * sqrt_psd(&SymPsdMatrix::new(rw.clone())?);
        let fb1 = &ft * &b1;
        let fb2 = &ft * &b2;
        let q = &hr * hr.transpose() + &fb1 * fb1.transpose() + &fb2 * fb2.transpose();
        let mut r = &ft * (&gain * &self.r) + h.transpose() * (&rw * y_next);
        let mut alpha = self.alpha + (&rw * y_next).dot(y_next);
        if sys.has_known_input() {
            r += &ft * (&reduced * &nominal);
            let shifted = &self.r - sc.transpose() * &nominal;
            alpha += (&sk * &nominal).dot(&nominal) - (wp * &shifted).dot(&shifted);
        } else {
            alpha -= (wp * &self.r).dot(&self.r);
        }
        Self::assemble(sys, k + 1, q, r, alpha, self.tol)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> &SymPsdMatrix {
        &self.q
    }

    pub fn r(&self) -> &DVector<f64> {
        &self.r
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn system(&self) -> &'a DescriptorSystem {
        self.sys
    }

    pub fn q_pinv(&self) -> &PinvResult {
        &self.q_pinv
    }

    /// `x̂_k = Q_k⁺ r_k`.
    pub fn estimate(&self) -> DVector<f64> {
        self.q_pinv.apply(&self.r)
    }

    /// `β_k = 1 - α_k + (Q_k⁺ r_k, r_k)`, unclamped.
    pub fn beta(&self) -> f64 {
        1.0 - self.alpha + self.q_pinv.apply(&self.r).dot(&self.r)
    }

    /// Whether `ℓ` lies in the numerical range of `Q_k`.
    pub fn in_range(&self, l: &DVector<f64>) -> bool {
        (self.q_pinv.project(l) - l).norm() <= RANGE_TOL * l.norm()
    }

    pub fn directional_error(&self, l: &DVector<f64>) -> Result<DirectionalError> {
        if l.len() != self.sys.n() {
            return Err(Error::dim("direction", self.sys.n(), l.len()));
        }
        if l.norm() == 0.0 {
            return Err(Error::ZeroDirection);
        }
        let finite = self.in_range(l);
        let spread = self.q_pinv.apply(l).dot(l).max(0.0);
        let raw_expression = self.beta().max(0.0).sqrt() * spread.sqrt();
        Ok(DirectionalError {
            direction: l.clone(),
            finite,
            sigma: if finite { raw_expression } else { f64::INFINITY },
            estimate_component: l.dot(&self.estimate()),
            raw_expression,
        })
    }

    /// `I_k = rank Q_k`.
    pub fn causality_index(&self) -> usize {
        self.q_pinv.rank
    }

    /// `β_k / λ_min(Q_k)`, or `+∞` when `Q_k` is rank deficient.
    pub fn global_error(&self) -> f64 {
        if self.causality_index() < self.sys.n() {
            return f64::INFINITY;
        }
        self.beta().max(0.0) / min_eigenvalue(&self.q)
    }

    pub fn aposteriori_ellipsoid(&self) -> Ellipsoid {
        Ellipsoid {
            q: self.q.clone(),
            center: self.estimate(),
            alpha: self.alpha,
        }
    }

    /// Collects everything the observer knows at this step.
    pub fn report(&self, directions: &[DVector<f64>]) -> Result<MinimaxReport> {
        let beta = self.beta();
        if beta < INFEASIBLE_BETA {
            return Err(Error::InfeasibleData { step: self.k, beta });
        }
        let directional = directions
            .iter()
            .map(|l| self.directional_error(l))
            .collect::<Result<Vec<_>>>()?;
        Ok(MinimaxReport {
            k: self.k,
            estimate: self.estimate(),
            causality_index: self.causality_index(),
            rho: self.global_error(),
            beta,
            directional,
        })
    }
}

fn check_measurement(sys: &DescriptorSystem, k: usize, y: &DVector<f64>) -> Result<()> {
    if y.len() != sys.p() {
        return Err(Error::dim(format!("y_{k}"), sys.p(), y.len()));
    }
    Ok(())
}

/// Runs the observer over `y`, one report per step. Report `k` depends on
/// `y_0..y_k` only.
pub fn run(
    sys: &DescriptorSystem,
    y: &[DVector<f64>],
    directions: &[DVector<f64>],
    tol_rel: f64,
) -> Result<Vec<MinimaxReport>> {
    let Some((y0, rest)) = y.split_first() else {
        return Err(Error::dim("measurements", "at least one", 0));
    };
    let mut state = ObserverState::init(sys, y0, tol_rel)?;
    let mut reports = Vec::with_capacity(y.len());
    reports.push(state.report(directions)?);
    for yk in rest {
        state = state.step(yk)?;
        reports.push(state.report(directions)?);
    }
    Ok(reports)
}

/// Folds the observer over `y` and returns the final state.
pub fn final_state<'a>(sys: &'a DescriptorSystem, y: &[DVector<f64>], tol_rel: f64) -> Result<ObserverState<'a>> {
    let Some((y0, rest)) = y.split_first() else {
        return Err(Error::dim("measurements", "at least one", 0));
    };
    rest.iter()
        .try_fold(ObserverState::init(sys, y0, tol_rel)?, |s, yk| s.step(yk))
}
