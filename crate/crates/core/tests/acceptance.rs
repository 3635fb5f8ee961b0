//! Acceptance suite. One line per criterion; exits nonzero if any fails.
//!
//! Run with `cargo test --test acceptance`.

mod common;

use std::cell::Cell;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use nalgebra::DVector;
use rand::Rng;

use common::{feasible_instance, kalman_instance, psd, random_dims, random_psd, rng, uniform_vector, Instance};
use singulax::cli::config::{parse_config, Overrides};
use singulax::kalman::equivalence_check;
use singulax::model::DescriptorSystem;
use singulax::observer::{run, ObserverState};
use singulax::oracle::{batch_estimate, range_membership, support_function_direct};
use singulax::psdlinalg::pinv_psd;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Worst PSD violation seen in any `Q_k`, as `-λ_min / max(λ_max, tiny)`
/// relative to the `1e-8` budget, plus the number of matrices inspected.
#[derive(Default)]
struct PsdLog {
    worst: Cell<f64>,
    violations: Cell<usize>,
    seen: Cell<usize>,
}

impl PsdLog {
    fn record(&self, s: &ObserverState<'_>) {
        let q = s.q();
        let lmin = *q.eigenvalues().last().unwrap_or(&0.0);
        let lmax = q.lambda_max();
        self.seen.set(self.seen.get() + 1);
        if lmin < -1e-8 * lmax {
            self.violations.set(self.violations.get() + 1);
        }
        if lmin < 0.0 {
            self.worst.set(self.worst.get().max(-lmin / lmax.max(f64::MIN_POSITIVE)));
        }
    }
}

fn fold<'a>(sys: &'a DescriptorSystem, y: &[DVector<f64>], log: &PsdLog) -> ObserverState<'a> {
    let mut s = ObserverState::init(sys, &y[0], 0.0).expect("init");
    log.record(&s);
    for yk in &y[1..] {
        s = s.step(yk).expect("step");
        log.record(&s);
    }
    s
}

fn example_run() -> (Vec<singulax::observer::MinimaxReport>, Vec<DVector<f64>>, Duration) {
    let r = parse_config(r#"{"system": "paper_example", "steps": 100}"#, Path::new("acceptance.json"))
        .unwrap()
        .resolve(&Overrides::default())
        .unwrap();
    let (traj, _) = r.simulate().unwrap();
    let e3 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    let start = Instant::now();
    let reports = run(&r.system, &traj.y, &[e3], 0.0).unwrap();
    (reports, traj.x, start.elapsed())
}

fn rank_parity() -> Outcome {
    let (reports, _, took) = example_run();
    let mut bad = Vec::new();
    for rep in &reports {
        let ok = if rep.k % 2 == 0 { rep.causality_index == 3 } else { rep.causality_index < 3 };
        if !ok {
            bad.push(rep.k);
        }
    }
    let pattern: Vec<String> = reports.iter().take(6).map(|r| r.causality_index.to_string()).collect();
    outcome(
        bad.is_empty() && took < Duration::from_secs(1),
        format!(
            "N=100, {} of 101 steps violate, I_0..I_5 = {}, {:.3} s",
            bad.len(),
            pattern.join(","),
            took.as_secs_f64()
        ),
    )
}

fn degenerate_direction() -> Outcome {
    let (reports, x, _) = example_run();
    let mut nonzero_estimate = 0;
    let mut nonzero_expr = 0;
    let mut hidden = false;
    for rep in reports.iter().filter(|r| r.k % 2 == 1) {
        if rep.estimate[2] != 0.0 {
            nonzero_estimate += 1;
        }
        if rep.directional[0].raw_expression != 0.0 {
            nonzero_expr += 1;
        }
        hidden |= (x[rep.k][2] - rep.estimate[2]).abs() > 0.0;
    }
    outcome(
        nonzero_estimate == 0 && nonzero_expr == 0 && hidden,
        format!(
            "odd steps: xhat_3 != 0 at {nonzero_estimate}/50, e3 expression != 0 at {nonzero_expr}/50, true error > 0 somewhere: {hidden}"
        ),
    )
}

fn random_instances(seed: u64, count: usize, fill: f64) -> Vec<Instance> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| {
            let dims = random_dims(&mut r);
            feasible_instance(&mut r, dims, false, dims.can_be_regular(), fill)
        })
        .collect()
}

fn oracle_equivalence(log: &PsdLog) -> Outcome {
    let start = Instant::now();
    let mut worst_est = 0.0f64;
    let mut worst_cost = 0.0f64;
    let mut failures = 0;
    let mut min_norm_differs = 0;
    for inst in random_instances(0xacce_0003, 200, 0.8) {
        let s = fold(&inst.sys, &inst.y, log);
        let b = batch_estimate(&inst.sys, &inst.y, inst.horizon).unwrap();
        let last = &b.xhat[inst.horizon];
        // Last blocks of all batch minimizers form last + ker Q_N; the
        // distance from the estimate to that set is measured on range(Q_N).
        let est = (s.estimate() - s.q_pinv().project(last)).amax() / (1.0 + last.amax());
        if (s.estimate() - last).amax() > 1e-8 * (1.0 + last.amax()) {
            min_norm_differs += 1;
        }
        let alpha_cost = s.alpha() - s.q_pinv().apply(s.r()).dot(s.r());
        let cost = (alpha_cost - b.cost).abs() / (1.0 + b.cost.abs());
        if est > 1e-8 || cost > 1e-8 {
            failures += 1;
        }
        worst_est = worst_est.max(est);
        worst_cost = worst_cost.max(cost);
    }
    let took = start.elapsed();
    outcome(
        failures == 0 && took < Duration::from_secs(30),
        format!(
            "200 systems, {failures} failing, max estimate gap {worst_est:.2e}, max cost gap {worst_cost:.2e}, \
             {min_norm_differs} with minimum-norm last block off range(Q_N), {:.2} s",
            took.as_secs_f64()
        ),
    )
}

fn range_identity(log: &PsdLog) -> Outcome {
    let mut r = rng(0xacce_0004);
    let mut disagree = 0;
    let mut norm_fail = 0;
    let mut members = 0;
    let mut worst = 0.0f64;
    for (i, inst) in random_instances(0xacce_0404, 200, 0.5).into_iter().enumerate() {
        let s = fold(&inst.sys, &inst.y, log);
        let n = inst.sys.n();
        let mut l = uniform_vector(&mut r, n);
        if i % 2 == 0 {
            // project into the observable range, when there is one
            let projected = s.q_pinv().project(&l);
            if projected.norm() > 1e-6 {
                l = projected;
            }
        }
        let m = range_membership(&inst.sys, inst.horizon, &l).unwrap();
        if m.member != s.in_range(&l) {
            disagree += 1;
            continue;
        }
        if m.member {
            members += 1;
            let spread = s.q_pinv().apply(&l).dot(&l);
            let rel = (m.norm_sq - spread).abs() / spread.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
            if rel > 1e-6 {
                norm_fail += 1;
            }
        }
    }
    outcome(
        disagree == 0 && norm_fail == 0,
        format!("200 pairs ({members} in range), {disagree} membership disagreements, {norm_fail} norm mismatches, max rel gap {worst:.2e}"),
    )
}

fn support_consistency(log: &PsdLog) -> Outcome {
    let mut r = rng(0xacce_0005);
    let mut worst = 0.0f64;
    let mut finite = 0;
    let mut failures = 0;
    for inst in random_instances(0xacce_0505, 200, 0.9) {
        let s = fold(&inst.sys, &inst.y, log);
        let l = uniform_vector(&mut r, inst.sys.n());
        let plus = support_function_direct(&inst.sys, &inst.y, inst.horizon, &l).unwrap().value;
        let minus = support_function_direct(&inst.sys, &inst.y, inst.horizon, &-&l).unwrap().value;
        let d = s.directional_error(&l).unwrap();
        if !d.finite {
            if plus.is_finite() || minus.is_finite() {
                failures += 1;
            }
            continue;
        }
        finite += 1;
        let scale = 1.0f64.max(plus.abs() + minus.abs());
        let gap = ((plus + minus - 2.0 * d.sigma).abs()).max((plus - minus - 2.0 * l.dot(&s.estimate())).abs()) / scale;
        worst = worst.max(gap);
        if gap > 1e-8 {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("200 instances ({finite} with finite support), {failures} failing, max gap {worst:.2e}"),
    )
}

fn kalman(log: &PsdLog) -> Outcome {
    let mut r = rng(0xacce_0006);
    let start = Instant::now();
    let mut worst_dev = 0.0f64;
    let mut worst_inv = 0.0f64;
    let mut errors = 0;
    for _ in 0..100 {
        let n = r.random_range(1..=4);
        let m = r.random_range(1..=n);
        let p = r.random_range((n - m).max(1)..=3);
        let horizon = r.random_range(0..=15);
        let (sys, q, y) = kalman_instance(&mut r, n, m, p, horizon);
        match equivalence_check(&sys, &q, &y, horizon) {
            Ok(rep) => {
                worst_dev = worst_dev.max(rep.max_deviation);
                worst_inv = rep.inverse_residuals.iter().fold(worst_inv, |a, &b| a.max(b));
            }
            Err(_) => errors += 1,
        }
        let with_prior = sys.clone().with_prior(q).unwrap();
        fold(&with_prior, &y, log);
    }
    let took = start.elapsed();
    outcome(
        errors == 0 && worst_dev <= 1e-8 && worst_inv <= 1e-8 && took < Duration::from_secs(10),
        format!(
            "100 systems, {errors} errors, max deviation {worst_dev:.2e}, max |PQ - I| {worst_inv:.2e}, {:.2} s",
            took.as_secs_f64()
        ),
    )
}

fn penrose() -> Outcome {
    let mut r = rng(0xacce_0007);
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..500 {
        let dim = r.random_range(1..=8);
        let k = r.random_range(0..=dim);
        let a = psd(random_psd(&mut r, dim, k));
        let p = pinv_psd(&a, 0.0).unwrap();
        let (m, p) = (a.matrix(), p.pinv.matrix());
        let budget = 1e-8 * a.lambda_max().max(1.0);
        let mp = m * p;
        let pm = p * m;
        let err = [
            (&mp * m - m).amax(),
            (&pm * p - p).amax(),
            (&mp - mp.transpose()).amax(),
            (&pm - pm.transpose()).amax(),
        ]
        .into_iter()
        .fold(0.0, f64::max);
        worst = worst.max(err / budget);
        if err > budget {
            failures += 1;
        }
    }
    outcome(
        failures == 0,
        format!("500 matrices, {failures} failing, worst error {worst:.2e} of budget"),
    )
}

fn main() -> ExitCode {
    let log = PsdLog::default();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("example rank parity", Box::new(rank_parity)),
        ("example degenerate direction", Box::new(degenerate_direction)),
        ("oracle equivalence", Box::new(|| oracle_equivalence(&log))),
        ("range/norm identity", Box::new(|| range_identity(&log))),
        ("support-function consistency", Box::new(|| support_consistency(&log))),
        ("kalman equivalence", Box::new(|| kalman(&log))),
        ("penrose axioms", Box::new(penrose)),
        (
            "psd invariance of Q_k",
            Box::new(|| {
                outcome(
                    log.violations.get() == 0 && log.seen.get() > 0,
                    format!(
                        "{} matrices, {} violations, worst -lambda_min/lambda_max {:.2e}",
                        log.seen.get(),
                        log.violations.get(),
                        log.worst.get()
                    ),
                )
            }),
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!("{} [{}] {}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, name, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
