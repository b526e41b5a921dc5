//! Acceptance suite: one test per criterion, each printing a pass/fail line.
//! Run with `cargo test --test acceptance -- --nocapture` to see the lines.

use std::time::Instant;

use locim::bench::{self, GoldenKind, PolicyId};
use locim::envs;
use locim::extraction::{ExtractionMethod, SmbeConfig};
use locim::model::Model;
use locim::rollout::{rollout, RolloutConfig, RolloutPolicy};
use locim::swarm::{self, SwarmConfig};
use locim::verify;

fn criterion(n: usize, name: &str, pass: bool, detail: &str) {
    println!(
        "criterion {n:2} [{}] {name}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

/// 1. Decomposition oracle equivalence on 100 seeded random instances.
#[test]
fn criterion_01_decomposition_oracle() {
    let t0 = Instant::now();
    let out = verify::suite_decomposition(100, 1000).unwrap();
    let elapsed = t0.elapsed();
    criterion(
        1,
        "decomposition oracle equivalence",
        out.pass && elapsed.as_secs() < 60,
        &format!(
            "{} instances, {} failures, worst slack {:.2e}, {:.1}s",
            out.checked,
            out.failures,
            out.worst_margin,
            elapsed.as_secs_f64()
        ),
    );
}

/// 2. Penalty jittering golden returns.
#[test]
fn criterion_02_penalty_jittering_goldens() {
    let t0 = Instant::now();
    let cells = bench::run_benchmark_suite(&["penalty_jittering".into()], 0.01).unwrap();
    let elapsed = t0.elapsed();
    let all_pass = cells.iter().all(|c| c.status == "pass");
    let detail: Vec<String> = cells
        .iter()
        .map(|c| format!("{}={:.2}", c.policy, c.ret))
        .collect();
    criterion(
        2,
        "penalty jittering goldens",
        all_pass && elapsed.as_secs() < 10,
        &format!("{} [{:.1}s]", detail.join(" "), elapsed.as_secs_f64()),
    );
}

/// 3. Long journey goldens, gamma independence, and sweep corner identities.
#[test]
fn criterion_03_long_journey() {
    let t0 = Instant::now();
    let mut ok = true;
    let mut notes = Vec::new();
    for gamma in [0.8, 0.9, 0.95] {
        let model = Model::compile(envs::long_journey(gamma)).unwrap();
        for (policy, expect) in [
            (PolicyId::JointOptimal, 200.0),
            (PolicyId::Smbe { v_comp: 16.0 }, 200.0),
            (PolicyId::TrivialAmalgam, 10.0),
            (PolicyId::TrivialCutoff, 140.0),
        ] {
            let eval = bench::evaluate_policy(&model, &policy, 200.0).unwrap();
            let hit = (eval.ret - expect).abs() < 1e-6;
            ok &= hit;
            if !hit {
                notes.push(format!("gamma={gamma} {policy}: {} != {expect}", eval.ret));
            }
        }
    }
    // sweep corners match the four named policies
    let model = envs::build_env("long_journey").unwrap();
    let scale = 200.0;
    let eta_inf = bench::tail_rule_eta(&model, scale);
    let xi_max = bench::amalgam_v_comp(&model) - model.consts().v_exec;
    let grid = bench::sweep("long_journey", false, &[0.0, xi_max], &[0, eta_inf]).unwrap();
    for cell in &grid {
        let corner = match (cell.xi == 0.0, cell.eta == 0) {
            (true, true) => PolicyId::TrivialFsfho,
            (true, false) => PolicyId::TrivialCutoff,
            (false, true) => PolicyId::TrivialFiniteAmalgam,
            (false, false) => PolicyId::TrivialAmalgam,
        };
        let reference = bench::evaluate_policy(&model, &corner, scale).unwrap();
        let hit = (cell.ret - reference.ret).abs() < 1e-6;
        ok &= hit;
        if !hit {
            notes.push(format!(
                "corner xi={} eta={}: sweep {} != {} ({})",
                cell.xi, cell.eta, cell.ret, reference.ret, corner
            ));
        }
    }
    let elapsed = t0.elapsed();
    criterion(
        3,
        "long journey goldens and corners",
        ok && elapsed.as_secs() < 60,
        &format!("{} [{:.1}s]", if notes.is_empty() { "all corners and gammas hit".into() } else { notes.join("; ") }, elapsed.as_secs_f64()),
    );
}

/// 4. Reconstructed-layout goldens for the remaining environments, with the
/// documented downgrade path.
#[test]
fn criterion_04_reconstructed_goldens() {
    let envs_list = [
        "aisle_walk",
        "bullseye",
        "modified_bullseye",
        "highway",
        "modified_highway",
        "stochastic_transitions",
        "unanticipated_oov",
        "oov_coordination",
    ];
    let filter: Vec<String> = envs_list.iter().map(|s| s.to_string()).collect();
    let cells = bench::run_benchmark_suite(&filter, 0.01).unwrap();
    let failures: Vec<String> = cells
        .iter()
        .filter(|c| c.status.starts_with("fail") || c.status.starts_with("error"))
        .map(|c| format!("{}/{}: {}", c.env, c.policy, c.status))
        .collect();
    let exact = cells.iter().filter(|c| c.status == "pass").count();
    let downgraded: Vec<String> = cells
        .iter()
        .filter(|c| c.status == "downgraded" || c.status == "ordering")
        .map(|c| format!("{}/{}", c.env, c.policy))
        .collect();
    criterion(
        4,
        "reconstructed-layout goldens",
        failures.is_empty(),
        &format!(
            "{exact} exact, downgraded: [{}]{}",
            downgraded.join(", "),
            if failures.is_empty() { String::new() } else { format!("; failures: {}", failures.join("; ")) }
        ),
    );
}

/// 5. Memory-based extraction converges to the joint optimum when all
/// agents start within view in a deterministic environment.
#[test]
fn criterion_05_joint_optimal_convergence() {
    let mut ok = true;
    let mut notes = Vec::new();
    for env in ["aisle_walk", "long_journey"] {
        let model = envs::build_env(env).unwrap();
        let sol = verify::solve_joint_optimal(&model, 1e-7).unwrap();
        let v_star = sol.value(&model.initial()).unwrap();
        let v_comp = model.consts().v_exec + model.diameter();
        let eval = bench::evaluate_policy(&model, &PolicyId::Smbe { v_comp }, v_star.abs())
            .unwrap();
        let hit = (eval.ret - v_star).abs() <= 0.01;
        ok &= hit;
        notes.push(format!("{env}: smbe {:.2} vs V* {:.2}", eval.ret, v_star));
    }
    criterion(5, "proposition: convergence to joint optimal", ok, &notes.join("; "));
}

/// 6. Optimality and consistency bounds: random instances plus benchmarks
/// with tractable joint optima, zero violations.
#[test]
fn criterion_06_theorem_bound_suite() {
    let out = verify::suite_theorem_bounds(100, 5000).unwrap();
    let mut ok = out.pass;
    let mut notes = vec![format!(
        "{} random checks, {} failures, worst slack {:.2e}",
        out.checked, out.failures, out.worst_margin
    )];
    for env in [
        "penalty_jittering",
        "aisle_walk",
        "long_journey",
        "stochastic_transitions",
        "highway",
        "bullseye",
    ] {
        let model = envs::build_env(env).unwrap();
        let eta = bench::tail_rule_eta(&model, 1000.0).min(60);
        for (xi, method) in [
            (0.0, ExtractionMethod::Trivial),
            (1.0, ExtractionMethod::SimpleMemory(SmbeConfig::default())),
        ] {
            let checks = verify::check_theorem_bounds(
                &model,
                model.consts().v_exec + xi,
                eta,
                method,
                env,
            )
            .unwrap();
            ok &= checks.optimality.pass && checks.consistency.pass;
            if !checks.optimality.pass || !checks.consistency.pass {
                notes.push(format!("{env} xi={xi} violated"));
            }
        }
    }
    criterion(6, "optimality/consistency bound suite", ok, &notes.join("; "));
}

/// 7. Dependence time lemma property suite with its negative control.
#[test]
fn criterion_07_dependence_time_suite() {
    let t0 = Instant::now();
    let out = verify::suite_dependence_time(1000, 9000).unwrap();
    let elapsed = t0.elapsed();
    criterion(
        7,
        "dependence time lemma suite",
        out.pass && elapsed.as_secs() < 30,
        &format!(
            "{} trajectories, {} failures, {}; {:.1}s",
            out.checked,
            out.failures,
            out.note,
            elapsed.as_secs_f64()
        ),
    );
}

/// 8. Consistent performance conditions on 25 instances plus the corrupted
/// negative control.
#[test]
fn criterion_08_consistent_performance_suite() {
    let out = verify::suite_cpp(25, 300).unwrap();
    criterion(
        8,
        "consistent performance policy suite",
        out.pass,
        &format!("{} instances, {} failures, {}", out.checked, out.failures, out.note),
    );
}

/// 9. Jitter cycles appear exactly where narrated and resolve under memory.
#[test]
fn criterion_09_jitter_detection() {
    let mut ok = true;
    let mut notes = Vec::new();
    let jitter_cases: [(&str, PolicyId); 6] = [
        ("modified_bullseye", PolicyId::TrivialAmalgam),
        ("modified_bullseye", PolicyId::TrivialCutoff),
        ("highway", PolicyId::TrivialCutoff),
        ("modified_highway", PolicyId::TrivialAmalgam),
        ("modified_highway", PolicyId::TrivialCutoff),
        ("penalty_jittering", PolicyId::TrivialAmalgam),
    ];
    for (env, policy) in jitter_cases {
        let model = envs::build_env(env).unwrap();
        let eval = bench::evaluate_policy(&model, &policy, 100.0).unwrap();
        let jitters = eval.cycle.map(|c| c.period >= 2).unwrap_or(false);
        ok &= jitters;
        notes.push(format!(
            "{env}/{policy}: {}",
            eval.cycle
                .map(|c| format!("period {}", c.period))
                .unwrap_or_else(|| "no cycle".into())
        ));
    }
    // with a cutoff-policy jitter also present on penalty jittering
    let model = envs::build_env("penalty_jittering").unwrap();
    let eval = bench::evaluate_policy(&model, &PolicyId::TrivialCutoff, 100.0).unwrap();
    ok &= eval.cycle.map(|c| c.period >= 2).unwrap_or(false);

    let memory_cases: [(&str, f64); 4] = [
        ("modified_bullseye", 30.0),
        ("highway", 9.0),
        ("modified_highway", 9.0),
        ("penalty_jittering", 4.0),
    ];
    for (env, v_comp) in memory_cases {
        let model = envs::build_env(env).unwrap();
        let eval = bench::evaluate_policy(&model, &PolicyId::Smbe { v_comp }, 100.0).unwrap();
        // a fixed point at the goal is fine; a period >= 2 loop is not
        let stuck = eval.cycle.map(|c| c.period >= 2).unwrap_or(false);
        ok &= !stuck;
        notes.push(format!(
            "{env}/smbe:{v_comp}: {}",
            eval.cycle
                .map(|c| format!("period {}", c.period))
                .unwrap_or_else(|| "none".into())
        ));
    }
    criterion(9, "jitter detection", ok, &notes.join("; "));
}

/// 10. The many-agent swarm: no collisions, heuristics nearly unused,
/// steady objective throughput.
#[test]
fn criterion_10_swarm() {
    let t0 = Instant::now();
    let config = SwarmConfig::default();
    let outcome = swarm::run_swarm(&config).unwrap();
    let elapsed = t0.elapsed();
    let last = outcome.stats.last().unwrap();
    let avg_ok = (last.avg_objectives - 77.05).abs() <= 0.15 * 77.05;
    let min_nondecreasing = outcome
        .stats
        .windows(2)
        .all(|w| w[1].min_objectives >= w[0].min_objectives);
    let pass = outcome.collisions == 0
        && outcome.heuristic_fraction <= 0.015
        && avg_ok
        && min_nondecreasing
        && elapsed.as_secs() < 600;
    criterion(
        10,
        "swarm rollout statistics",
        pass,
        &format!(
            "collisions={} heuristic={:.2}% avg={:.2} (target 77.05 +/- 15%) min-series={:?} [{:.0}s]",
            outcome.collisions,
            outcome.heuristic_fraction * 100.0,
            last.avg_objectives,
            outcome.stats.iter().map(|s| s.min_objectives).collect::<Vec<_>>(),
            elapsed.as_secs_f64()
        ),
    );
}

/// 11. Truncation soundness on every deterministic benchmark.
#[test]
fn criterion_11_truncation_soundness() {
    let mut ok = true;
    let mut notes = Vec::new();
    for env in [
        "aisle_walk",
        "bullseye",
        "modified_bullseye",
        "highway",
        "modified_highway",
        "penalty_jittering",
        "long_journey",
        "unanticipated_oov",
        "oov_coordination",
    ] {
        let model = envs::build_env(env).unwrap();
        let sol = verify::solve_joint_optimal(&model, 1e-7).unwrap();
        let t_short = bench::rollout_horizon(&model);
        let gamma = model.consts().gamma;
        let bound = gamma.powi(t_short as i32) * model.r_tilde() / (1.0 - gamma);
        let short = rollout(
            &model,
            &RolloutPolicy::Joint(&sol),
            &model.initial(),
            &RolloutConfig { record_trace: false, detect_cycles: false, ..RolloutConfig::deterministic(t_short) },
        )
        .unwrap();
        let long = rollout(
            &model,
            &RolloutPolicy::Joint(&sol),
            &model.initial(),
            &RolloutConfig { record_trace: false, detect_cycles: false, ..RolloutConfig::deterministic(t_short + 50) },
        )
        .unwrap();
        let gap = (short.ret - long.ret).abs();
        let hit = gap <= bound + 1e-9;
        ok &= hit;
        if !hit {
            notes.push(format!("{env}: gap {gap:.4} > bound {bound:.4}"));
        }
    }
    let detail = if notes.is_empty() {
        "all deterministic benchmarks within the tail bound".to_string()
    } else {
        notes.join("; ")
    };
    criterion(11, "truncation soundness", ok, &detail);
}

/// The downgrade path stays visible: the suite reports which goldens are
/// enforced as orderings rather than exact values.
#[test]
fn downgraded_goldens_are_documented() {
    let downgraded: Vec<String> = bench::goldens()
        .iter()
        .filter(|g| g.kind != GoldenKind::Exact)
        .map(|g| format!("{}/{}", g.env, g.policy))
        .collect();
    assert_eq!(
        downgraded,
        vec!["unanticipated_oov/trivial:cutoff".to_string(), "unanticipated_oov/smbe:4".to_string()],
        "downgrade list drifted; update the report"
    );
}
