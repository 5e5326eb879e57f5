//! One line per acceptance criterion. Runs as a plain binary so the
//! verdicts are printed even when every criterion passes.

use std::time::{Duration, Instant};

use cournot_core::analysis::{self, halton_probes, HessianMethod};
use cournot_core::cli::estimator_sweep;
use cournot_core::experiments::{result_dir, run_scenario, scenario, Overrides, PROBE_LO, SIGMA};
use cournot_core::game::solve_nash;
use cournot_core::learner::{convergence_metrics, exact_dynamics};
use cournot_core::stochastic::{stochastic_nash, NoiseSpec, DEFAULT_NODES};

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn within_budget(o: Outcome, took: Duration, budget: Duration) -> Outcome {
    if took <= budget {
        o
    } else {
        outcome(false, format!("{}; over the {:.0} s budget", o.detail, budget.as_secs_f64()))
    }
}

fn nash_fidelity() -> Outcome {
    let stated: [(&str, Vec<f64>); 4] = [
        ("G1", vec![0.25; 3]),
        ("G2", vec![0.3, 0.2, 0.1]),
        ("G3", vec![(1.0f64 / 8.0).sqrt(); 2]),
        ("G4", vec![0.368403; 2]),
    ];
    let clock = Instant::now();
    let mut bad = Vec::new();
    for (id, want) in &stated {
        let x = solve_nash(&scenario(id).unwrap().game, 1e-12).unwrap();
        let err = x.as_slice().iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > 1e-6 {
            bad.push(format!("{id} off by {err:.3e} (solved {:.6})", x.as_slice()[0]));
        }
    }
    let o = if bad.is_empty() {
        outcome(true, "G1-G4 within 1e-6")
    } else {
        outcome(false, bad.join(", "))
    };
    within_budget(o, clock.elapsed(), Duration::from_secs(1))
}

fn rosen_sweeps() -> Outcome {
    let clock = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for id in ["G1", "G2"] {
        let g = scenario(id).unwrap().game;
        let probes = halton_probes(100, 3, PROBE_LO, g.y_max(), 0);
        let r = analysis::rosen_sweep(&g, &[NoiseSpec::gaussian(SIGMA); 3], &probes, HessianMethod::default()).unwrap();
        ok &= r.all_passed();
        parts.push(format!("{id} {}/100", r.passed));
    }
    within_budget(outcome(ok, parts.join(", ")), clock.elapsed(), Duration::from_secs(120))
}

fn dominance_sweeps() -> Outcome {
    let clock = Instant::now();
    let mut parts = Vec::new();
    let mut ok = true;
    for id in ["G3", "G4"] {
        let g = scenario(id).unwrap().game;
        let probes = halton_probes(100, 2, PROBE_LO, g.y_max(), 0);
        let (d, gs) =
            analysis::dominance_sweep(&g, &[NoiseSpec::gaussian(SIGMA); 2], &probes, HessianMethod::default()).unwrap();
        ok &= d.all_passed() && gs.all_passed();
        parts.push(format!("{id} dominance {}/100 gershgorin {}/100", d.passed, gs.passed));
    }
    within_budget(outcome(ok, parts.join(", ")), clock.elapsed(), Duration::from_secs(60))
}

fn exponential_convergence() -> Outcome {
    let mut ok = true;
    let mut worst = (f64::MIN, f64::MAX, 0.0f64);
    for id in ["G1", "G2", "G3", "G4"] {
        let sc = scenario(id).unwrap();
        let n = sc.game.n_players();
        let sigmas = vec![SIGMA; n];
        let star = stochastic_nash(&sc.game, &sigmas, 1e-12).unwrap();
        for seed in SEEDS {
            let init = sc.initial_theta(seed).unwrap();
            let traj = exact_dynamics(&sc.game, &sigmas, &init, 0.1, 10_000).unwrap();
            let m = convergence_metrics(&traj, &star).unwrap();
            let (rate, r2) = (m.rate.unwrap_or(f64::NAN), m.r_squared.unwrap_or(f64::NAN));
            ok &= rate < 0.0 && r2 >= 0.95 && m.final_gap <= 1e-4;
            worst = (worst.0.max(rate), worst.1.min(r2), worst.2.max(m.final_gap));
        }
    }
    outcome(
        ok,
        format!("slowest rate {:.4}, lowest r2 {:.4}, largest gap {:.2e}", worst.0, worst.1, worst.2),
    )
}

fn no_certificates() -> Overrides {
    Overrides {
        skip_certificates: Some(true),
        ..Overrides::default()
    }
}

fn sampled_convergence() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ["G1", "G2", "G3", "G4"] {
        let clock = Instant::now();
        let gaps: Vec<f64> = SEEDS
            .iter()
            .map(|&s| run_scenario(id, &no_certificates(), s, None).unwrap().metrics.final_gap)
            .collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let max = gaps.iter().cloned().fold(0.0, f64::max);
        ok &= mean <= 0.03 && max <= 0.05 && clock.elapsed() <= Duration::from_secs(300);
        parts.push(format!("{id} mean {mean:.4} max {max:.4}"));
    }
    outcome(ok, parts.join(", "))
}

fn estimator_correctness() -> Outcome {
    let games: Vec<_> = ["G1", "G2", "G3", "G4"]
        .iter()
        .map(|id| {
            let g = scenario(id).unwrap().game;
            let n = g.n_players();
            (id.to_string(), g, vec![NoiseSpec::gaussian(SIGMA); n])
        })
        .collect();
    let (score, fd) = estimator_sweep(&games, 10, 200, 10_000, 0).unwrap();
    outcome(
        score.all_passed() && fd.all_passed(),
        format!("score {}/10 within 4 se, fd {}/10 within 1e-5", score.passed, fd.passed),
    )
}

fn upper_bound_sign() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for id in ["G1", "G2", "G3", "G4"] {
        let g = scenario(id).unwrap().game;
        let r = analysis::upper_bound_sweep(&g, NoiseSpec::gaussian(SIGMA), 50, &[0.0], 0, DEFAULT_NODES).unwrap();
        ok &= r.all_passed();
        parts.push(format!("{id} {}/{}", r.passed, r.passed + r.failed));
    }
    outcome(ok, parts.join(", "))
}

fn beyond_theory() -> Outcome {
    let mut ok = true;
    let mut max_std = 0.0f64;
    let mut max_g5 = 0.0f64;
    for id in ["G5", "G6"] {
        for seed in SEEDS {
            let r = run_scenario(id, &no_certificates(), seed, None).unwrap();
            for &i in &r.learners {
                max_std = max_std.max(r.last_decile_std[i]);
                if id == "G5" {
                    max_g5 = max_g5.max((r.final_theta[i] - 0.258199).abs());
                }
            }
        }
    }
    ok &= max_std <= 0.02 && max_g5 <= 0.05;
    outcome(ok, format!("largest last-decile std {max_std:.4}, G5 largest distance {max_g5:.4}"))
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let o = no_certificates();
    let mut same = true;
    for id in ["G1", "G6"] {
        run_scenario(id, &o, 9, Some(a.path())).unwrap();
        run_scenario(id, &o, 9, Some(b.path())).unwrap();
        rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| run_scenario(id, &o, 9, Some(c.path())).unwrap());
        let read = |root: &std::path::Path| std::fs::read(result_dir(root, id, 9).join("trajectory.tsv")).unwrap();
        same &= read(a.path()) == read(b.path()) && read(a.path()) == read(c.path());
    }
    outcome(same, "trajectory.tsv byte-identical across repeated and 4-thread runs")
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("Nash fidelity", nash_fidelity),
        ("Rosen sweep, linear price", rosen_sweeps),
        ("dominance and Gershgorin sweep, duopolies", dominance_sweeps),
        ("exponential convergence of exact dynamics", exponential_convergence),
        ("sampled policy-gradient convergence", sampled_convergence),
        ("estimator correctness", estimator_correctness),
        ("gradient sign at the upper bound", upper_bound_sign),
        ("stability beyond the theory", beyond_theory),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let clock = Instant::now();
        let o = run();
        let verdict = if o.passed { "PASS" } else { "FAIL" };
        if !o.passed {
            failed += 1;
        }
        println!(
            "criterion {}: {verdict} {name}: {} [{:.1} s]",
            k + 1,
            o.detail,
            clock.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
