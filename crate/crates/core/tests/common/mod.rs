//! Random instances shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use singulax::model::{random_system, DescriptorSystem, Family, RandomSystemSpec};
use singulax::psdlinalg::SymPsdMatrix;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

pub fn uniform_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0))
}

/// Orthogonal matrix from the QR factorization of a random square matrix.
pub fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    uniform_matrix(rng, n, n).qr().q()
}

/// PSD matrix `U diag(λ) U'` with exactly `rank` nonzero eigenvalues drawn
/// log-uniformly from `[1e-2, 1e2]`.
pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DMatrix<f64> {
    let u = random_orthogonal(rng, dim);
    let lambda = DVector::from_fn(dim, |i, _| {
        if i < rank {
            10f64.powf(rng.random_range(-2.0..2.0))
        } else {
            0.0
        }
    });
    let m = &u * DMatrix::from_diagonal(&lambda) * u.transpose();
    (&m + m.transpose()) * 0.5
}

pub fn psd(m: DMatrix<f64>) -> SymPsdMatrix {
    SymPsdMatrix::new(m).expect("constructed PSD")
}

/// A system together with data generated from a trajectory inside the
/// uncertainty set.
#[derive(Debug, Clone)]
pub struct Instance {
    pub sys: DescriptorSystem,
    pub x: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub horizon: usize,
    /// Value of the uncertainty quadratic form at the true trajectory.
    pub energy: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
}

impl Dims {
    /// Whether `rank [F_k; H_k] = n` can be enforced.
    pub fn can_be_regular(&self) -> bool {
        self.m + self.p >= self.n
    }
}

/// `n ≤ 4, m ≤ 4, p ≤ 3, N ≤ 15`.
pub fn random_dims(rng: &mut ChaCha8Rng) -> Dims {
    Dims {
        n: rng.random_range(1..=4),
        m: rng.random_range(1..=4),
        p: rng.random_range(1..=3),
        horizon: rng.random_range(0..=15),
    }
}

/// Any shape works, including `m > n`: the true states are drawn freely
/// and the known inputs and prior are set so that the residuals of the
/// descriptor equations are small random deviations. All deviations are
/// scaled so the uncertainty form equals `fill`.
pub fn feasible_instance(rng: &mut ChaCha8Rng, dims: Dims, unit_weights: bool, regular: bool, fill: f64) -> Instance {
    let Dims { n, m, p, horizon } = dims;
    let sys = random_system(
        RandomSystemSpec {
            n,
            m,
            p,
            horizon,
            unit_weights,
            regular,
            contraction: Some(0.95),
        },
        rng,
    );
    let x: Vec<DVector<f64>> = (0..=horizon).map(|_| uniform_vector(rng, n)).collect();
    let dq = uniform_vector(rng, m);
    let df: Vec<DVector<f64>> = (0..horizon).map(|_| uniform_vector(rng, m)).collect();
    let g: Vec<DVector<f64>> = (0..=horizon).map(|_| uniform_vector(rng, p)).collect();

    let mut energy = sys.s().quad_form(&dq);
    for (k, d) in df.iter().enumerate() {
        energy += (sys.s_k(k).unwrap() * d).dot(d);
    }
    for (k, gk) in g.iter().enumerate() {
        energy += (sys.r(k).unwrap() * gk).dot(gk);
    }
    let scale = (fill / energy).sqrt();

    let prior = sys.f(0).unwrap() * &x[0] - &dq * scale;
    let known: Vec<DVector<f64>> = (0..horizon)
        .map(|k| sys.f(k + 1).unwrap() * &x[k + 1] - sys.c(k).unwrap() * &x[k] - &df[k] * scale)
        .collect();
    let y: Vec<DVector<f64>> = (0..=horizon)
        .map(|k| sys.h(k).unwrap() * &x[k] + &g[k] * scale)
        .collect();

    let mut sys = sys.with_prior(prior).unwrap();
    if horizon > 0 {
        sys = sys.with_known_input(Family::sequence(known, true)).unwrap();
    }
    Instance {
        sys,
        x,
        y,
        horizon,
        energy: fill,
    }
}

/// Regular unit-weight system with data simulated from the plant itself
/// (no known input), as the Kalman comparison needs. Requires `m ≤ n`.
pub fn kalman_instance(rng: &mut ChaCha8Rng, n: usize, m: usize, p: usize, horizon: usize) -> (DescriptorSystem, DVector<f64>, Vec<DVector<f64>>) {
    let sys = random_system(
        RandomSystemSpec {
            n,
            m,
            p,
            horizon,
            unit_weights: true,
            regular: true,
            contraction: Some(0.95),
        },
        rng,
    );
    let x0 = uniform_vector(rng, n);
    let f: Vec<DVector<f64>> = (0..horizon).map(|_| uniform_vector(rng, m) * 0.1).collect();
    let g: Vec<DVector<f64>> = (0..=horizon).map(|_| uniform_vector(rng, p) * 0.1).collect();
    let z: Vec<DVector<f64>> = (0..horizon).map(|_| uniform_vector(rng, n)).collect();
    let free = |k: usize| z[k].clone();
    let traj = singulax::model::simulate(&sys, horizon, &x0, &|k| f[k].clone(), &|k| g[k].clone(), Some(&free))
        .expect("m <= n keeps every step consistent");
    (sys, traj.q, traj.y)
}
