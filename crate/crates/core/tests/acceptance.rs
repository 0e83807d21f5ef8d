//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion;
//! criterion 10 is a demonstration and only reported.

mod common;

use std::fmt::Write as _;
use std::io::Write as _;
use std::time::{Duration, Instant};

use asyncdual::agents::sync_iteration;
use asyncdual::constants::{choose_gammas, constants_for, step_size_bound, PhiDenominator};
use asyncdual::harness::experiment::{preset_schedule, sync_step};
use asyncdual::harness::generators::{ieee14_instance, random_instance, Instance, RandomSpec};
use asyncdual::oracle::{
    centralized_step, finite_diff_gradient, kkt_solve, reference_solve, solve_reference, ReferenceSolution,
    DEFAULT_MAX_ITERS, DEFAULT_TOLERANCE,
};
use asyncdual::problem::{aggregate_dual_term, dual_value_and_gradient};
use asyncdual::sim::{dry_run, measure_q, run_async, AsyncRun, RunOptions, Trace};
use asyncdual::{dual_value, local_argmin, DualPoint, Problem};
use common::{mixed_instance, random_dual, rng};

const HORIZON: u64 = 200_000;
const Q_CLASSES: [u64; 4] = [1, 25, 50, 100];
const SAFETY: f64 = 0.99;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

/// Writes straight to the process stderr so the lines survive output capture.
fn report(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

fn max_abs_diff(a: &[asyncdual::DVector<f64>], b: &[asyncdual::DVector<f64>]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).amax()).fold(0.0, f64::max)
}

fn criterion_oracles_agree() -> Outcome {
    let start = Instant::now();
    let mut worst_x = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut failures = Vec::new();
    for seed in 0..20 {
        let inst = random_instance(&RandomSpec::equality_only(5), 1000 + seed).unwrap();
        let p = &inst.problem;
        let kkt = kkt_solve(p).unwrap();
        let long = reference_solve(p, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERS, None).unwrap();
        let dx = max_abs_diff(&kkt.x_star, &long.x_star);
        let mut gap = 0.0f64;
        for r in [&kkt, &long] {
            let g = (dual_value(p, &r.y_star).unwrap() - r.f_star).abs() / (1.0 + r.f_star.abs());
            gap = gap.max(g);
        }
        worst_x = worst_x.max(dx);
        worst_gap = worst_gap.max(gap);
        if dx > 1e-6 || gap > 1e-6 {
            failures.push(seed);
        }
    }
    let elapsed = start.elapsed();
    Outcome::new(
        failures.is_empty() && elapsed < Duration::from_secs(10),
        format!("max |dx|_inf {worst_x:.2e}, max duality gap {worst_gap:.2e}, {elapsed:.2?}, failing seeds {failures:?}"),
    )
}

fn criterion_sync_matches_centralized() -> Outcome {
    let inst = mixed_instance(4, 6);
    let p = &inst.problem;
    let table = constants_for(p, PhiDenominator::Owner).unwrap();
    let gamma = sync_step(&table, SAFETY);
    let mut y_dist = DualPoint::zeros(p);
    let mut y_cent = DualPoint::zeros(p);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let (x_d, next_d) = sync_iteration(p, gamma, &y_dist).unwrap();
        let (x_c, next_c) = centralized_step(p, gamma, &y_cent).unwrap();
        let x_c = split_primal(p, &x_c);
        for i in 0..p.agent_count() {
            worst = worst.max((&next_d.blocks[i] - &next_c.blocks[i]).amax());
            worst = worst.max((&x_d[i] - &x_c[i]).amax());
        }
        y_dist = next_d;
        y_cent = next_c;
    }
    Outcome::new(worst <= 1e-12, format!("max blockwise difference over 1000 steps {worst:.2e}"))
}

fn split_primal(p: &Problem, x: &asyncdual::DVector<f64>) -> Vec<asyncdual::DVector<f64>> {
    let off = p.primal_offsets();
    (0..p.agent_count()).map(|i| x.rows(off[i], p.n(i)).into_owned()).collect()
}

fn criterion_gradient_identity(instances: &[Instance]) -> Outcome {
    let mut worst = 0.0f64;
    for (s, inst) in instances.iter().enumerate() {
        let p = &inst.problem;
        let mut r = rng(500 + s as u64);
        for _ in 0..100 {
            let y = random_dual(p, &mut r, 2.0);
            let (_, g) = dual_value_and_gradient(p, &y).unwrap();
            let fd = finite_diff_gradient(p, &y, 1e-5).unwrap();
            let rel = (&g - &fd).norm() / g.norm().max(f64::MIN_POSITIVE);
            worst = worst.max(rel);
        }
    }
    Outcome::new(worst <= 1e-4, format!("max relative error {worst:.2e} over {} instances", instances.len()))
}

/// One converged run of the convergence study.
struct StudyRun {
    instance: String,
    q_class: u64,
    realized_q: u64,
    run: AsyncRun,
}

struct Study {
    runs: Vec<StudyRun>,
    per_instance: Vec<(String, Duration)>,
}

fn run_study(instances: &[Instance], references: &[ReferenceSolution]) -> Study {
    let mut runs = Vec::new();
    let mut per_instance = Vec::new();
    for (inst, reference) in instances.iter().zip(references) {
        let start = Instant::now();
        let table = constants_for(&inst.problem, PhiDenominator::Owner).unwrap();
        for (c, &q_class) in Q_CLASSES.iter().enumerate() {
            let preset = preset_schedule(inst.problem.graph(), q_class, c as u64, HORIZON).unwrap();
            let gammas = choose_gammas(&table, preset.realized_q, SAFETY, 1.0).unwrap();
            let options = RunOptions {
                reference: Some(reference.x_star.clone()),
                record_every: 100,
                monitor_dual: true,
                seed: c as u64,
                ..RunOptions::default()
            };
            let run = run_async(&inst.problem, &gammas, &preset.timeline, &options).unwrap();
            runs.push(StudyRun { instance: inst.name.clone(), q_class, realized_q: preset.realized_q, run });
        }
        per_instance.push((inst.name.clone(), start.elapsed()));
    }
    Study { runs, per_instance }
}

fn criterion_convergence(study: &Study) -> Outcome {
    let mut failures = Vec::new();
    let mut summary = String::new();
    for r in &study.runs {
        let rec = &r.run.record;
        let target = 1e-4 * rec.initial.dist;
        let hit = rec.rows.iter().find(|row| row.dist <= target).map(|row| row.k);
        let d = &r.run.diagnostics;
        let ok = hit.is_some() && d.tail_residual_max <= 1e-6 && d.min_dual_change >= -1e-8;
        if !ok {
            failures.push(format!(
                "{} Q{} (realized {}): hit {hit:?}, tail |s| {:.2e}, min q change {:.2e}",
                r.instance, r.q_class, r.realized_q, d.tail_residual_max, d.min_dual_change
            ));
        }
    }
    let slow: Vec<_> = study.per_instance.iter().filter(|(_, t)| *t >= Duration::from_secs(120)).collect();
    let worst_time = study.per_instance.iter().map(|(_, t)| *t).max().unwrap_or_default();
    let _ = write!(
        summary,
        "{} runs, slowest instance {worst_time:.1?}; realized Q per class {:?}",
        study.runs.len(),
        Q_CLASSES
            .iter()
            .map(|&c| {
                let qs: Vec<u64> = study.runs.iter().filter(|r| r.q_class == c).map(|r| r.realized_q).collect();
                (c, *qs.iter().min().unwrap(), *qs.iter().max().unwrap())
            })
            .collect::<Vec<_>>()
    );
    if !failures.is_empty() {
        let _ = write!(summary, "; failures: {}", failures.join("; "));
    }
    if !slow.is_empty() {
        let _ = write!(summary, "; over 2 min: {slow:?}");
    }
    Outcome::new(failures.is_empty() && slow.is_empty(), summary)
}

/// Independent check of the bounded-asynchrony model on a trace.
fn trace_violations(trace: &Trace, q: u64) -> usize {
    let horizon = trace.horizon() as usize;
    let q = q as usize;
    let mut bad = 0;
    for set in trace.update_sets() {
        let mut updated = vec![false; horizon];
        for &k in &set {
            updated[k as usize] = true;
        }
        // next_update[s] = first update at or after s
        let mut next_update = vec![usize::MAX; horizon + 1];
        for s in (0..horizon).rev() {
            next_update[s] = if updated[s] { s } else { next_update[s + 1] };
        }
        for start in 0..horizon.saturating_sub(q - 1) {
            if next_update[start] >= start + q {
                bad += 1;
            }
        }
    }
    trace.for_each_stamp(|k, _, _, _, tau| {
        if tau > k || tau + (q as u64) < k {
            bad += 1;
        }
    });
    bad
}

fn criterion_bounded_asynchrony(study: &Study) -> Outcome {
    let mut worst = Vec::new();
    let mut checked = 0;
    for r in &study.runs {
        let measured = measure_q(&r.run.trace).unwrap();
        let violations = trace_violations(&r.run.trace, r.realized_q);
        checked += 1;
        if measured > r.realized_q || violations > 0 || r.run.record.meta.q != r.realized_q {
            worst.push(format!("{} Q{}: measured {measured}, violations {violations}", r.instance, r.q_class));
        }
    }
    Outcome::new(worst.is_empty(), format!("{checked} schedules checked; problems: {worst:?}"))
}

fn criterion_argmin_lipschitz(instances: &[Instance]) -> Outcome {
    let mut violations = 0;
    let mut worst_ratio = 0.0f64;
    let mut samples = 0;
    for (s, inst) in instances.iter().enumerate() {
        let p = &inst.problem;
        let table = constants_for(p, PhiDenominator::Owner).unwrap();
        let mut r = rng(900 + s as u64);
        for j in 0..p.agent_count() {
            let lipschitz = table.agents[j].theta / p.rho(j);
            for _ in 0..1000 {
                let y = random_dual(p, &mut r, 5.0);
                let z = random_dual(p, &mut r, 5.0);
                let xj = local_argmin(p, j, &aggregate_dual_term(p, j, |l| &y.blocks[l])).unwrap();
                let zj = local_argmin(p, j, &aggregate_dual_term(p, j, |l| &z.blocks[l])).unwrap();
                let dy = p
                    .graph()
                    .neighbors(j)
                    .iter()
                    .map(|&l| (&y.blocks[l] - &z.blocks[l]).norm_squared())
                    .sum::<f64>()
                    .sqrt();
                let lhs = (xj - zj).norm();
                if lhs > lipschitz * dy + 1e-10 {
                    violations += 1;
                }
                if dy > 0.0 && lipschitz > 0.0 {
                    worst_ratio = worst_ratio.max(lhs / (lipschitz * dy));
                }
                samples += 1;
            }
        }
    }
    Outcome::new(violations == 0, format!("{samples} pairs, {violations} violations, tightest ratio {worst_ratio:.3}"))
}

fn criterion_descent_inequality(study: &Study) -> Outcome {
    let worst = study.runs.iter().map(|r| r.run.diagnostics.descent_min_slack).fold(f64::INFINITY, f64::min);
    let steps: u64 = study.runs.iter().map(|r| r.run.diagnostics.active_steps).sum();
    Outcome::new(worst >= -1e-10, format!("{steps} active steps, min slack {worst:.2e}"))
}

fn criterion_bound_monotone(instances: &[Instance]) -> Outcome {
    let mut bad = 0;
    let mut checked = 0;
    for inst in instances {
        for denom in [PhiDenominator::Owner, PhiDenominator::Neighbor] {
            let table = constants_for(&inst.problem, denom).unwrap();
            for i in 0..table.agent_count() {
                let mut prev = step_size_bound(&table, i, 1).unwrap();
                for q in 2..=200 {
                    let next = step_size_bound(&table, i, q).unwrap();
                    checked += 1;
                    if !(next < prev) {
                        bad += 1;
                    }
                    prev = next;
                }
            }
        }
    }
    Outcome::new(bad == 0, format!("{checked} consecutive pairs, {bad} not strictly decreasing"))
}

fn criterion_determinism(ieee: &Instance, reference: &ReferenceSolution) -> Outcome {
    let once = || {
        let preset = preset_schedule(ieee.problem.graph(), 50, 7, 20_000).unwrap();
        let table = choose_gammas(&constants_for(&ieee.problem, PhiDenominator::Owner).unwrap(), preset.realized_q, SAFETY, 1.0)
            .unwrap();
        let options =
            RunOptions { reference: Some(reference.x_star.clone()), record_every: 10, seed: 7, ..RunOptions::default() };
        let run = run_async(&ieee.problem, &table, &preset.timeline, &options).unwrap();
        (dry_run(&preset.timeline).unwrap().to_csv_string(), run.trace.to_csv_string(), run.record.to_csv_string())
    };
    let (a, b) = (once(), once());
    let same = a == b && a.0 == a.1;
    Outcome::new(same, format!("trace CSV {} bytes, record CSV {} bytes", a.0.len(), a.2.len()))
}

/// Runs the oversized steps; passes when every run completes, whatever the
/// numeric outcome.
fn demo_large_steps(ieee: &Instance, reference: &ReferenceSolution) -> Outcome {
    let table = constants_for(&ieee.problem, PhiDenominator::Owner).unwrap();
    let mut parts = Vec::new();
    let mut completed = true;
    for (c, &q_class) in Q_CLASSES.iter().enumerate() {
        let preset = preset_schedule(ieee.problem.graph(), q_class, c as u64, HORIZON).unwrap();
        let gammas = choose_gammas(&table, preset.realized_q, SAFETY, 100.0).unwrap();
        let options =
            RunOptions { reference: Some(reference.x_star.clone()), record_every: 1000, ..RunOptions::default() };
        let outcome = match run_async(&ieee.problem, &gammas, &preset.timeline, &options) {
            Ok(run) => {
                let rel = run.record.last().dist / run.record.initial.dist;
                let verdict = if rel <= 1e-4 { "converged" } else if rel.is_finite() && rel < 1.0 { "slow" } else { "diverged" };
                format!("Q{q_class} (realized {}): {verdict}, final relative distance {rel:.2e}", preset.realized_q)
            }
            Err(e) => {
                completed = false;
                format!("Q{q_class}: run failed: {e}")
            }
        };
        parts.push(outcome);
    }
    Outcome::new(completed, parts.join("; "))
}

#[test]
fn acceptance() {
    let ieee = ieee14_instance().unwrap();
    let mut study_instances = vec![ieee.clone()];
    study_instances.extend((0..10).map(|s| mixed_instance(s, 5 + (s as usize % 4))));
    let references: Vec<ReferenceSolution> =
        study_instances.iter().map(|inst| solve_reference(&inst.problem).unwrap()).collect();

    let mut results: Vec<(u32, &str, Outcome)> = Vec::new();
    results.push((1, "oracle agreement", criterion_oracles_agree()));
    results.push((2, "sync distributed equals centralized", criterion_sync_matches_centralized()));
    results.push((3, "dual gradient identity", criterion_gradient_identity(&study_instances)));
    let study = run_study(&study_instances, &references);
    results.push((4, "async convergence", criterion_convergence(&study)));
    results.push((5, "bounded asynchrony compliance", criterion_bounded_asynchrony(&study)));
    results.push((6, "argmin Lipschitz sampling", criterion_argmin_lipschitz(&study_instances)));
    results.push((7, "descent inequality at active steps", criterion_descent_inequality(&study)));
    results.push((8, "step bound decreasing in Q", criterion_bound_monotone(&study_instances)));
    results.push((9, "determinism", criterion_determinism(&ieee, &references[0])));

    for (n, name, o) in &results {
        report(&format!("criterion {n} ({name}): {} : {}", if o.pass { "PASS" } else { "FAIL" }, o.detail));
    }
    let demo = demo_large_steps(&ieee, &references[0]);
    report(&format!(
        "criterion 10 (x100 step sizes, reported only): {} : {}",
        if demo.pass { "PASS" } else { "FAIL" },
        demo.detail
    ));

    let failed: Vec<u32> = results.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| *n).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
