//! Deterministic-fit Kalman recursion for descriptor systems whose stacked
//! matrix `[F_k; H_k]` has full column rank, and its equivalence with the
//! minimax observer under unit weights.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::DescriptorSystem;
use crate::observer::ObserverState;
use crate::psdlinalg::{pinv_psd, SymPsdMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanState {
    pub k: usize,
    /// `P_{k|k}`.
    pub p: SymPsdMatrix,
    /// `x̂_{k|k}`.
    pub xhat: DVector<f64>,
}

/// Inverts a matrix that must be positive definite, reporting the rank when
/// it is not.
fn inverse_pd(m: DMatrix<f64>) -> std::result::Result<DMatrix<f64>, (usize, usize)> {
    let dim = m.nrows();
    let m = SymPsdMatrix::new(m).map_err(|_| (0, dim))?;
    let inv = pinv_psd(&m, 0.0).map_err(|_| (0, dim))?;
    if inv.rank < dim {
        return Err((inv.rank, dim));
    }
    Ok(inv.pinv.into_matrix())
}

/// `P_0 = (F_0'F_0 + H_0'H_0)⁻¹`, `x̂_0 = P_0 (F_0' q + H_0' y_0)`.
pub fn kalman_init(sys: &DescriptorSystem, q: &DVector<f64>, y0: &DVector<f64>) -> Result<KalmanState> {
    if q.len() != sys.m() {
        return Err(Error::dim("q", sys.m(), q.len()));
    }
    if y0.len() != sys.p() {
        return Err(Error::dim("y_0", sys.p(), y0.len()));
    }
    let f = sys.f(0)?;
    let h = sys.h(0)?;
    let p = inverse_pd(f.transpose() * &f + h.transpose() * &h)
        .map_err(|(rank, dim)| Error::RankDeficient { step: 0, rank, dim })?;
    let xhat = &p * (f.transpose() * q + h.transpose() * y0);
    Ok(KalmanState {
        k: 0,
        p: SymPsdMatrix::new(p)?,
        xhat,
    })
}

/// One step of the recursion. The measurement term uses the system's
/// `R_k`, while the covariance update is unweighted; the two agree only
/// for `R_k = I`, which [`equivalence_check`] requires.
pub fn kalman_step(state: &KalmanState, sys: &DescriptorSystem, y_next: &DVector<f64>) -> Result<KalmanState> {
    let k = state.k + 1;
    if y_next.len() != sys.p() {
        return Err(Error::dim(format!("y_{k}"), sys.p(), y_next.len()));
    }
    let c = sys.c(k - 1)?;
    let f = sys.f(k)?;
    let h = sys.h(k)?;
    let r = sys.r(k)?;

    let m = sys.m();
    let innovation = DMatrix::identity(m, m) + &c * state.p.matrix() * c.transpose();
    let inn_inv = inverse_pd(innovation).map_err(|_| Error::SingularInnovation { step: k })?;
    let ft_inn = f.transpose() * &inn_inv;
    let p = inverse_pd(&ft_inn * &f + h.transpose() * &h)
        .map_err(|(rank, dim)| Error::RankDeficient { step: k, rank, dim })?;
    let xhat = &p * (&ft_inn * (&c * &state.xhat)) + &p * (h.transpose() * (r * y_next));
    Ok(KalmanState {
        k,
        p: SymPsdMatrix::new(p)?,
        xhat,
    })
}

/// Per-step comparison of the Kalman recursion with the unit-weight
/// minimax observer.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    /// `‖Q_k⁺ r_k - x̂_{k|k}‖∞`.
    pub deviations: Vec<f64>,
    /// `‖P_{k|k} Q_k - I‖` in max-norm.
    pub inverse_residuals: Vec<f64>,
    pub causality_indices: Vec<usize>,
    pub kalman: Vec<KalmanState>,
    pub max_deviation: f64,
}

fn require_identity(what: &'static str, step: usize, w: &DMatrix<f64>) -> Result<()> {
    let dev = (w - DMatrix::identity(w.nrows(), w.ncols())).amax();
    if dev > 1e-12 {
        return Err(Error::NonUnitWeights { what, step });
    }
    Ok(())
}

/// Runs both recursions over `y_0..y_N` with the observer's prior set to `q`.
pub fn equivalence_check(
    sys: &DescriptorSystem,
    q: &DVector<f64>,
    y: &[DVector<f64>],
    horizon: usize,
) -> Result<EquivalenceReport> {
    if y.len() != horizon + 1 {
        return Err(Error::dim("measurement count", horizon + 1, y.len()));
    }
    require_identity("S", 0, sys.s().matrix())?;
    for k in 0..=horizon {
        require_identity("S_k", k, &sys.s_k(k)?)?;
        require_identity("R_k", k, &sys.r(k)?)?;
    }
    let unit = sys.clone().with_prior(q.clone())?;
    let n = unit.n();

    let mut kalman = kalman_init(&unit, q, &y[0])?;
    let mut observer = ObserverState::init(&unit, &y[0], 0.0)?;
    let mut report = EquivalenceReport {
        deviations: Vec::with_capacity(horizon + 1),
        inverse_residuals: Vec::with_capacity(horizon + 1),
        causality_indices: Vec::with_capacity(horizon + 1),
        kalman: Vec::with_capacity(horizon + 1),
        max_deviation: 0.0,
    };
    for k in 0..=horizon {
        if k > 0 {
            kalman = kalman_step(&kalman, &unit, &y[k])?;
            observer = observer.step(&y[k])?;
        }
        let index = observer.causality_index();
        if index < n {
            return Err(Error::RankDeficient { step: k, rank: index, dim: n });
        }
        let dev = (observer.estimate() - &kalman.xhat).amax();
        let inv = (kalman.p.matrix() * observer.q().matrix() - DMatrix::<f64>::identity(n, n)).amax();
        report.max_deviation = report.max_deviation.max(dev);
        report.deviations.push(dev);
        report.inverse_residuals.push(inv);
        report.causality_indices.push(index);
        report.kalman.push(kalman.clone());
    }
    Ok(report)
}
