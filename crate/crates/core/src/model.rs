//! Time-varying descriptor systems `F_{k+1} x_{k+1} - C_k x_k = f_k`,
//! `F_0 x_0 = q`, `y_k = H_k x_k + g_k`, with their ellipsoidal uncertainty
//! weights, trajectory simulation and the uncertainty-constraint value.

use std::fmt;
use std::sync::Arc;

use nalgebra::{dmatrix, DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::psdlinalg::{min_eigenvalue, pinv_general, tolerance, SymPsdMatrix};

/// A quantity indexed by the time step.
#[derive(Clone)]
pub enum Family<T> {
    Constant(T),
    /// Explicit per-step values; with `repeat_last` the final value is held.
    Sequence { items: Vec<T>, repeat_last: bool },
    Function(Arc<dyn Fn(usize) -> T + Send + Sync>),
}

impl<T: Clone> Family<T> {
    pub fn function(f: impl Fn(usize) -> T + Send + Sync + 'static) -> Self {
        Family::Function(Arc::new(f))
    }

    pub fn sequence(items: Vec<T>, repeat_last: bool) -> Self {
        Family::Sequence { items, repeat_last }
    }

    pub fn at(&self, k: usize, name: &'static str) -> Result<T> {
        match self {
            Family::Constant(v) => Ok(v.clone()),
            Family::Sequence { items, repeat_last } => match items.get(k) {
                Some(v) => Ok(v.clone()),
                None if *repeat_last && !items.is_empty() => Ok(items[items.len() - 1].clone()),
                None => Err(Error::StepOutOfRange { family: name, step: k }),
            },
            Family::Function(f) => Ok(f(k)),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Family<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Constant(v) => f.debug_tuple("Constant").field(v).finish(),
            Family::Sequence { items, repeat_last } => f
                .debug_struct("Sequence")
                .field("len", &items.len())
                .field("repeat_last", repeat_last)
                .finish(),
            Family::Function(_) => f.write_str("Function(..)"),
        }
    }
}

pub type MatrixFamily = Family<DMatrix<f64>>;
pub type VectorFamily = Family<DVector<f64>>;

/// Plant and measurement model with its uncertainty weights.
///
/// `known_input` is the nominal value of `f_k` and `prior` the nominal value
/// of `q`; both default to zero. The uncertainty set bounds the deviations
/// `q - prior`, `f_k - known_input(k)` and `g_k`.
#[derive(Debug, Clone)]
pub struct DescriptorSystem {
    n: usize,
    m: usize,
    p: usize,
    f: MatrixFamily,
    c: MatrixFamily,
    h: MatrixFamily,
    s: SymPsdMatrix,
    s_seq: MatrixFamily,
    r_seq: MatrixFamily,
    known_input: Option<VectorFamily>,
    prior: Option<DVector<f64>>,
}

impl DescriptorSystem {
    /// Builds a system and checks dimensions and weights at step 0.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        m: usize,
        p: usize,
        f: MatrixFamily,
        c: MatrixFamily,
        h: MatrixFamily,
        s: DMatrix<f64>,
        s_seq: MatrixFamily,
        r_seq: MatrixFamily,
    ) -> Result<Self> {
        if n == 0 || m == 0 || p == 0 {
            return Err(Error::dim("system dimensions (n, m, p)", "positive", format!("({n}, {m}, {p})")));
        }
        check_shape("S", &s, m, m)?;
        let s = SymPsdMatrix::new(s)?;
        require_pd("S", 0, &s)?;
        let sys = DescriptorSystem {
            n,
            m,
            p,
            f,
            c,
            h,
            s,
            s_seq,
            r_seq,
            known_input: None,
            prior: None,
        };
        sys.validate_step(0)?;
        Ok(sys)
    }

    pub fn with_known_input(mut self, input: VectorFamily) -> Result<Self> {
        let v = input.at(0, "known_input")?;
        if v.len() != self.m {
            return Err(Error::dim("known_input", self.m, v.len()));
        }
        self.known_input = Some(input);
        Ok(self)
    }

    pub fn with_prior(mut self, prior: DVector<f64>) -> Result<Self> {
        if prior.len() != self.m {
            return Err(Error::dim("prior", self.m, prior.len()));
        }
        self.prior = Some(prior);
        Ok(self)
    }

    /// Replaces the step weight families, keeping everything else.
    pub fn with_weights(mut self, s: DMatrix<f64>, s_seq: MatrixFamily, r_seq: MatrixFamily) -> Result<Self> {
        check_shape("S", &s, self.m, self.m)?;
        self.s = SymPsdMatrix::new(s)?;
        require_pd("S", 0, &self.s)?;
        self.s_seq = s_seq;
        self.r_seq = r_seq;
        self.validate_step(0)?;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn f(&self, k: usize) -> Result<DMatrix<f64>> {
        let v = self.f.at(k, "F")?;
        check_shape("F", &v, self.m, self.n)?;
        Ok(v)
    }

    pub fn c(&self, k: usize) -> Result<DMatrix<f64>> {
        let v = self.c.at(k, "C")?;
        check_shape("C", &v, self.m, self.n)?;
        Ok(v)
    }

    pub fn h(&self, k: usize) -> Result<DMatrix<f64>> {
        let v = self.h.at(k, "H")?;
        check_shape("H", &v, self.p, self.n)?;
        Ok(v)
    }

    /// Weight of the initial condition.
    pub fn s(&self) -> &SymPsdMatrix {
        &self.s
    }

    /// Weight of the disturbance `f_k`.
    pub fn s_k(&self, k: usize) -> Result<DMatrix<f64>> {
        let v = self.s_seq.at(k, "S_k")?;
        check_shape("S_k", &v, self.m, self.m)?;
        Ok(v)
    }

    /// Weight of the measurement noise `g_k`.
    pub fn r(&self, k: usize) -> Result<DMatrix<f64>> {
        let v = self.r_seq.at(k, "R_k")?;
        check_shape("R_k", &v, self.p, self.p)?;
        Ok(v)
    }

    pub fn known_input(&self, k: usize) -> Result<DVector<f64>> {
        match &self.known_input {
            None => Ok(DVector::zeros(self.m)),
            Some(fam) => {
                let v = fam.at(k, "known_input")?;
                if v.len() != self.m {
                    return Err(Error::dim("known_input", self.m, v.len()));
                }
                Ok(v)
            }
        }
    }

    pub fn has_known_input(&self) -> bool {
        self.known_input.is_some()
    }

    pub fn prior(&self) -> DVector<f64> {
        self.prior.clone().unwrap_or_else(|| DVector::zeros(self.m))
    }

    fn validate_step(&self, k: usize) -> Result<()> {
        self.f(k)?;
        self.c(k)?;
        self.h(k)?;
        self.known_input(k)?;
        require_pd("S_k", k, &SymPsdMatrix::new(self.s_k(k)?)?)?;
        require_pd("R_k", k, &SymPsdMatrix::new(self.r(k)?)?)?;
        Ok(())
    }

    /// Checks dimensions and positive definiteness of the weights for all
    /// steps `0..=horizon`.
    pub fn validate(&self, horizon: usize) -> Result<()> {
        (0..=horizon).try_for_each(|k| self.validate_step(k))
    }
}

fn check_shape(what: &'static str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::dim(
            what,
            format!("{rows}x{cols}"),
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

fn require_pd(what: &'static str, step: usize, w: &SymPsdMatrix) -> Result<()> {
    let lmin = min_eigenvalue(w);
    if lmin <= tolerance(0.0, w.dim(), w.lambda_max()) {
        return Err(Error::NotPositiveDefinite {
            what,
            step,
            min_eigenvalue: lmin,
        });
    }
    Ok(())
}

/// A simulated run of the plant and sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// States `x_0..x_N`.
    pub x: Vec<DVector<f64>>,
    /// Total inputs `f_0..f_{N-1}` (nominal plus disturbance).
    pub f: Vec<DVector<f64>>,
    /// Initial-condition value `q = F_0 x_0`.
    pub q: DVector<f64>,
    /// Measurement noises `g_0..g_N`.
    pub g: Vec<DVector<f64>>,
    pub y: Vec<DVector<f64>>,
    pub constraint_value: f64,
}

impl Trajectory {
    pub fn steps(&self) -> usize {
        self.x.len() - 1
    }
}

/// Generates `(x_k, f_k, g_k, y_k)` for `k = 0..=steps`.
///
/// `f_gen` supplies the disturbance, added to the system's nominal input.
/// Each step takes the minimum-norm solution of the descriptor equation plus
/// the kernel component `(I - F⁺F) free_gen(k)`.
pub fn simulate(
    sys: &DescriptorSystem,
    steps: usize,
    x0: &DVector<f64>,
    f_gen: &dyn Fn(usize) -> DVector<f64>,
    g_gen: &dyn Fn(usize) -> DVector<f64>,
    free_gen: Option<&dyn Fn(usize) -> DVector<f64>>,
) -> Result<Trajectory> {
    let (n, m, p) = (sys.n(), sys.m(), sys.p());
    if x0.len() != n {
        return Err(Error::dim("x0", n, x0.len()));
    }
    let q = sys.f(0)? * x0;
    let mut x = Vec::with_capacity(steps + 1);
    let mut f = Vec::with_capacity(steps);
    let mut g = Vec::with_capacity(steps + 1);
    let mut y = Vec::with_capacity(steps + 1);
    x.push(x0.clone());

    for k in 0..=steps {
        let gk = g_gen(k);
        if gk.len() != p {
            return Err(Error::dim(format!("g_{k}"), p, gk.len()));
        }
        y.push(sys.h(k)? * &x[k] + &gk);
        g.push(gk);
        if k == steps {
            break;
        }

        let dev = f_gen(k);
        if dev.len() != m {
            return Err(Error::dim(format!("f_{k}"), m, dev.len()));
        }
        let fk = sys.known_input(k)? + dev;
        let rhs = sys.c(k)? * &x[k] + &fk;
        let f_next = sys.f(k + 1)?;
        let f_pinv = pinv_general(&f_next)?;
        let mut x_next = &f_pinv * &rhs;
        if let Some(free) = free_gen {
            let z = free(k);
            if z.len() != n {
                return Err(Error::dim(format!("free_{k}"), n, z.len()));
            }
            let kernel = &z - &f_pinv * (&f_next * &z);
            x_next += kernel;
        }
        let residual = (&f_next * &x_next - &rhs).norm();
        if residual > 1e-9 * (1.0 + rhs.norm()) {
            return Err(Error::InconsistentStep { step: k, residual });
        }
        x.push(x_next);
        f.push(fk);
    }

    let constraint_value = constraint_value(sys, &q, &f, &g)?;
    Ok(Trajectory {
        x,
        f,
        q,
        g,
        y,
        constraint_value,
    })
}

/// `(S q̃, q̃) + Σ_{k<N} (S_k f̃_k, f̃_k) + Σ_{k≤N} (R_k g_k, g_k)`, where the
/// tildes denote deviations from the nominal prior and known input. The
/// triple belongs to the uncertainty set iff the value is at most one.
pub fn constraint_value(
    sys: &DescriptorSystem,
    q: &DVector<f64>,
    f: &[DVector<f64>],
    g: &[DVector<f64>],
) -> Result<f64> {
    if q.len() != sys.m() {
        return Err(Error::dim("q", sys.m(), q.len()));
    }
    if g.is_empty() || f.len() + 1 != g.len() {
        return Err(Error::dim(
            "disturbance/noise sequence lengths",
            "len(f) + 1 == len(g) >= 1",
            format!("len(f) = {}, len(g) = {}", f.len(), g.len()),
        ));
    }
    let dq = q - sys.prior();
    let mut total = sys.s().quad_form(&dq);
    for (k, fk) in f.iter().enumerate() {
        if fk.len() != sys.m() {
            return Err(Error::dim(format!("f_{k}"), sys.m(), fk.len()));
        }
        let d = fk - sys.known_input(k)?;
        total += (sys.s_k(k)? * &d).dot(&d);
    }
    for (k, gk) in g.iter().enumerate() {
        if gk.len() != sys.p() {
            return Err(Error::dim(format!("g_{k}"), sys.p(), gk.len()));
        }
        total += (sys.r(k)? * gk).dot(gk);
    }
    Ok(total)
}

fn parity(k: usize) -> f64 {
    if k % 2 == 1 {
        1.0
    } else {
        0.0
    }
}

/// The two-dimensional noncausal example: three states, two descriptor
/// equations, four sensors, with the third state observed only through the
/// odd-step sensor `150 k` entry.
pub fn paper_example_system() -> DescriptorSystem {
    let f = dmatrix![1.0, 0.0, 0.0; 0.0, 1.0, 0.0];
    let c = dmatrix![1.0 / 40.0, 0.5, 0.0; 0.1, 0.25, 0.3];
    let h0 = dmatrix![
        0.6, 0.96, 0.0;
        1000.0, 2.3, 0.0;
        1.0, 0.1, 0.0;
        0.0, 0.0, 0.0
    ];
    let h = Family::function(move |k| {
        if k == 0 {
            return h0.clone();
        }
        let kf = k as f64;
        dmatrix![
            0.6 * kf, kf, 0.0;
            100.0 * kf, kf / 100.0, 0.0;
            0.0, 0.005, 150.0 * kf * parity(k);
            0.05, 10.0 * kf, 0.0
        ]
    });
    let s_seq = Family::function(|k| {
        let d = (k + 1) as f64;
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / (35.0 * d), 1.0 / (70.0 * d)]))
    });
    let r_seq = Family::function(|k| {
        let d = (k + 1) as f64;
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            1.0 / (11.0 * d),
            1.0 / (22.0 * d),
            1.0 / (33.0 * d),
            1.0 / (44.0 * d),
        ]))
    });
    let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0 / 60.0, 1.0 / 120.0]));
    DescriptorSystem::new(3, 2, 4, Family::Constant(f), Family::Constant(c), h, s, s_seq, r_seq)
        .expect("example system is well formed")
}

/// Deterministic bounded disturbance/noise generators.
///
/// `f_k = a (sin(k+1), cos 2k, sin 3(k+1), cos 4k, ...)`,
/// `g_k = b (sin 3k, cos k, sin 5k, cos 7k, sin 9k, ...)` and the kernel
/// excitation `z_k = c (sin(1.3(k+1) + i))_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HarmonicNoise {
    pub amp_f: f64,
    pub amp_g: f64,
    pub amp_kernel: f64,
}

impl HarmonicNoise {
    pub fn zero() -> Self {
        HarmonicNoise {
            amp_f: 0.0,
            amp_g: 0.0,
            amp_kernel: 0.0,
        }
    }

    pub fn f(&self, k: usize, m: usize) -> DVector<f64> {
        DVector::from_fn(m, |i, _| self.amp_f * unit_f(k, i))
    }

    pub fn g(&self, k: usize, p: usize) -> DVector<f64> {
        DVector::from_fn(p, |i, _| self.amp_g * unit_g(k, i))
    }

    pub fn kernel(&self, k: usize, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |i, _| self.amp_kernel * (1.3 * (k + 1) as f64 + i as f64).sin())
    }

    /// Scales `f` and `g` by a common amplitude so that the constraint value
    /// of the resulting trajectory equals
    /// `(S q̃, q̃) + fill * (1 - (S q̃, q̃))`.
    pub fn fitted_to_budget(
        sys: &DescriptorSystem,
        steps: usize,
        x0: &DVector<f64>,
        fill: f64,
        amp_kernel: f64,
    ) -> Result<Self> {
        if x0.len() != sys.n() {
            return Err(Error::dim("x0", sys.n(), x0.len()));
        }
        let dq = sys.f(0)? * x0 - sys.prior();
        let base = sys.s().quad_form(&dq);
        if base >= 1.0 {
            return Err(Error::InfeasibleData { step: 0, beta: 1.0 - base });
        }
        let unit = HarmonicNoise {
            amp_f: 1.0,
            amp_g: 1.0,
            amp_kernel: 0.0,
        };
        let mut energy = 0.0;
        for k in 0..steps {
            let fk = unit.f(k, sys.m());
            energy += (sys.s_k(k)? * &fk).dot(&fk);
        }
        for k in 0..=steps {
            let gk = unit.g(k, sys.p());
            energy += (sys.r(k)? * &gk).dot(&gk);
        }
        let amp = if energy > 0.0 {
            (fill * (1.0 - base) / energy).sqrt()
        } else {
            0.0
        };
        Ok(HarmonicNoise {
            amp_f: amp,
            amp_g: amp,
            amp_kernel,
        })
    }

    pub fn simulate(&self, sys: &DescriptorSystem, steps: usize, x0: &DVector<f64>) -> Result<Trajectory> {
        let (m, p, n) = (sys.m(), sys.p(), sys.n());
        let free = |k: usize| self.kernel(k, n);
        simulate(
            sys,
            steps,
            x0,
            &|k| self.f(k, m),
            &|k| self.g(k, p),
            if self.amp_kernel != 0.0 { Some(&free) } else { None },
        )
    }
}

fn unit_f(k: usize, i: usize) -> f64 {
    let w = (i + 1) as f64;
    if i % 2 == 0 {
        (w * (k + 1) as f64).sin()
    } else {
        (w * k as f64).cos()
    }
}

fn unit_g(k: usize, i: usize) -> f64 {
    let w = match i {
        0 => 3.0,
        1 => 1.0,
        _ => (2 * i + 1) as f64,
    };
    let arg = w * k as f64;
    if i % 2 == 0 {
        arg.sin()
    } else {
        arg.cos()
    }
}

/// Shape and options for [`random_system`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomSystemSpec {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub horizon: usize,
    /// All weights equal to the identity.
    pub unit_weights: bool,
    /// Enforce `rank [F_k; H_k] = n` at every step.
    pub regular: bool,
    /// Rescale `C_k` so that `‖F_{k+1}⁺ C_k‖₂` is at most this value,
    /// which keeps long simulated trajectories bounded.
    pub contraction: Option<f64>,
}

/// Random time-varying system with entries in `[-1, 1]` and weights
/// `B'B + I/2`, tabulated for steps `0..=horizon` (last value repeated).
pub fn random_system<R: Rng + ?Sized>(spec: RandomSystemSpec, rng: &mut R) -> DescriptorSystem {
    let RandomSystemSpec { n, m, p, horizon, .. } = spec;
    assert!(
        !spec.regular || m + p >= n,
        "rank [F; H] = n needs m + p >= n (got n={n}, m={m}, p={p})"
    );
    let uniform = |r: usize, c: usize, rng: &mut R| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
    let mut fs = Vec::with_capacity(horizon + 1);
    let mut hs = Vec::with_capacity(horizon + 1);
    let mut cs = Vec::with_capacity(horizon + 1);
    for _ in 0..=horizon {
        loop {
            let fk = uniform(m, n, rng);
            let hk = uniform(p, n, rng);
            if spec.regular {
                let gram = SymPsdMatrix::new(fk.transpose() * &fk + hk.transpose() * &hk)
                    .expect("gram matrix is PSD");
                if min_eigenvalue(&gram) < 0.05 {
                    continue;
                }
            }
            fs.push(fk);
            hs.push(hk);
            break;
        }
        cs.push(uniform(m, n, rng));
    }
    if let Some(bound) = spec.contraction {
        for k in 0..horizon {
            let gain = pinv_general(&fs[k + 1]).expect("finite matrix") * &cs[k];
            let norm = SymPsdMatrix::new(gain.transpose() * &gain)
                .expect("gram matrix is PSD")
                .lambda_max()
                .sqrt();
            if norm > bound {
                cs[k] *= bound / norm;
            }
        }
    }
    let weight = |d: usize, rng: &mut R| {
        if spec.unit_weights {
            DMatrix::identity(d, d)
        } else {
            let b = uniform(d, d, rng);
            b.transpose() * &b + DMatrix::identity(d, d) * 0.5
        }
    };
    let s = weight(m, rng);
    let s_seq: Vec<_> = (0..=horizon).map(|_| weight(m, rng)).collect();
    let r_seq: Vec<_> = (0..=horizon).map(|_| weight(p, rng)).collect();
    DescriptorSystem::new(
        n,
        m,
        p,
        Family::sequence(fs, true),
        Family::sequence(cs, true),
        Family::sequence(hs, true),
        s,
        Family::sequence(s_seq, true),
        Family::sequence(r_seq, true),
    )
    .expect("random system is well formed")
}

/// Single-state system with every matrix and weight equal to one.
pub fn scalar_system() -> DescriptorSystem {
    let one = DMatrix::from_element(1, 1, 1.0);
    DescriptorSystem::new(
        1,
        1,
        1,
        Family::Constant(one.clone()),
        Family::Constant(one.clone()),
        Family::Constant(one.clone()),
        one.clone(),
        Family::Constant(one.clone()),
        Family::Constant(one),
    )
    .expect("scalar system is well formed")
}
