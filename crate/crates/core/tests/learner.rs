use cournot_core::experiments::scenario;
use cournot_core::learner::{
    convergence_metrics, exact_dynamics, last_decile_std, pg_step, run_simulation, AgentSpec, LearnerConfig, StepRecord,
    Trajectory, TrajectoryKind, TrajectoryMeta,
};
use cournot_core::stochastic::{stochastic_nash, NoiseSpec};
use cournot_core::Error;

const SIGMA: f64 = 0.05;
const ETA: f64 = 0.1;

#[test]
fn pg_step_examples() {
    let plain = LearnerConfig::plain();
    let noise = NoiseSpec::gaussian(SIGMA);
    assert!((pg_step(&plain, &noise, 0.2, 0.5, 1).unwrap() - 0.25).abs() < 1e-15);
    assert_eq!(pg_step(&plain, &noise, 0.2, 0.0, 1).unwrap(), 0.2);
    let natural = LearnerConfig {
        eta: 0.1,
        ..LearnerConfig::default()
    };
    assert!((pg_step(&natural, &noise, 0.0, 1.0, 1).unwrap() - 0.00025).abs() < 1e-15);
    assert!(matches!(pg_step(&plain, &noise, 0.2, f64::NAN, 4), Err(Error::Divergence { step: 4, .. })));
}

#[test]
fn g1_learners_reach_equilibrium() {
    let sc = scenario("G1").unwrap();
    let traj = run_simulation(&sc.game, &sc.agents, &[0.6, 0.1, 0.4], sc.steps, 3).unwrap();
    assert_eq!(traj.len(), sc.steps);
    for v in &traj.meta.final_theta {
        assert!((v - 0.25).abs() <= 0.03, "{:?}", traj.meta.final_theta);
    }
}

#[test]
fn fixed_agents_are_constant() {
    let g = scenario("G1").unwrap().game;
    let agents = [AgentSpec::Fixed { theta: 0.2 }, AgentSpec::Fixed { theta: 0.3 }, AgentSpec::Fixed { theta: 0.1 }];
    let traj = run_simulation(&g, &agents, &[0.2, 0.3, 0.1], 20, 0).unwrap();
    let first = &traj.steps[0];
    for s in &traj.steps {
        assert_eq!(s.theta, first.theta);
        assert_eq!(s.payoffs, first.payoffs);
        assert_eq!(s.price, first.price);
    }
    assert!((first.price - 0.4).abs() < 1e-15);
}

#[test]
fn simulation_is_deterministic() {
    let sc = scenario("G2").unwrap();
    let a = run_simulation(&sc.game, &sc.agents, &[0.1, 0.1, 0.1], 200, 42).unwrap();
    let b = run_simulation(&sc.game, &sc.agents, &[0.1, 0.1, 0.1], 200, 42).unwrap();
    assert_eq!(a.to_tsv(), b.to_tsv());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let c = pool.install(|| run_simulation(&sc.game, &sc.agents, &[0.1, 0.1, 0.1], 200, 42).unwrap());
    assert_eq!(a.to_tsv(), c.to_tsv());
    let d = run_simulation(&sc.game, &sc.agents, &[0.1, 0.1, 0.1], 200, 43).unwrap();
    assert_ne!(a.to_tsv(), d.to_tsv());
}

#[test]
fn trajectory_round_trips() {
    let sc = scenario("G3").unwrap();
    let traj = run_simulation(&sc.game, &sc.agents, &[0.2, 0.5], 50, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    traj.save(dir.path(), "trajectory").unwrap();
    let back = Trajectory::load(dir.path(), "trajectory").unwrap();
    assert_eq!(back, traj);
    let header = traj.to_tsv().lines().next().unwrap().to_string();
    assert_eq!(header.split('\t').count(), traj.meta.columns.len());
    assert!(header.starts_with("t\ttheta_1\ttheta_2\taction_1\taction_2\tprice"));
}

#[test]
fn divergent_step_size_aborts() {
    let sc = scenario("G1").unwrap();
    let agents = vec![
        AgentSpec::PgLearner {
            config: LearnerConfig {
                eta: 1e6,
                ..LearnerConfig::default()
            },
            noise: NoiseSpec::gaussian(SIGMA),
        };
        3
    ];
    let err = run_simulation(&sc.game, &agents, &[0.6, 0.1, 0.4], 100, 0).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
    let err = exact_dynamics(&sc.game, &[SIGMA; 3], &[0.6, 0.1, 0.4], 1e3, 100).unwrap_err();
    assert!(matches!(err, Error::Divergence { .. }), "{err}");
}

#[test]
fn rejects_mismatched_inputs() {
    let sc = scenario("G1").unwrap();
    assert!(run_simulation(&sc.game, &sc.agents[..2], &[0.1; 3], 10, 0).is_err());
    assert!(run_simulation(&sc.game, &sc.agents, &[0.1; 3], 0, 0).is_err());
    assert!(exact_dynamics(&sc.game, &[SIGMA; 3], &[0.1; 3], 0.0, 10).is_err());
}

fn gaps(traj: &Trajectory, target: &[f64]) -> Vec<f64> {
    traj.steps
        .iter()
        .map(|s| s.theta.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
        .collect()
}

#[test]
fn exact_dynamics_contracts_g1() {
    let g = scenario("G1").unwrap().game;
    let star = stochastic_nash(&g, &[SIGMA; 3], 1e-12).unwrap();
    let traj = exact_dynamics(&g, &[SIGMA; 3], &[0.6, 0.1, 0.4], ETA, 400).unwrap();
    let d = gaps(&traj, &star);
    let start = 20;
    for w in d[start..].windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{} then {}", w[0], w[1]);
    }
    let m = convergence_metrics(&traj, &star).unwrap();
    assert!(m.rate.unwrap() < 0.0 && m.r_squared.unwrap() >= 0.95, "{m:?}");
}

#[test]
fn exact_dynamics_fixed_point() {
    let g = scenario("G1").unwrap().game;
    let star = stochastic_nash(&g, &[SIGMA; 3], 1e-12).unwrap();
    let traj = exact_dynamics(&g, &[SIGMA; 3], &star, ETA, 50).unwrap();
    for s in &traj.steps {
        for (a, b) in s.theta.iter().zip(&star) {
            assert!((a - b).abs() <= 1e-10);
        }
    }
}

#[test]
fn exact_dynamics_g4_slope() {
    let g = scenario("G4").unwrap().game;
    let star = stochastic_nash(&g, &[SIGMA; 2], 1e-12).unwrap();
    let traj = exact_dynamics(&g, &[SIGMA; 2], &[0.1, 0.8], ETA, 2000).unwrap();
    let m = convergence_metrics(&traj, &star).unwrap();
    assert!(m.rate.unwrap() < 0.0 && m.r_squared.unwrap() >= 0.95, "{m:?}");
    assert!(m.final_gap <= 1e-4);
}

fn synthetic(values: impl Iterator<Item = f64>) -> Trajectory {
    let steps: Vec<StepRecord> = values
        .enumerate()
        .map(|(k, v)| StepRecord {
            t: k + 1,
            theta: vec![v],
            actions: vec![v],
            price: 0.0,
            payoffs: vec![0.0],
            gradients: vec![0.0],
            std_errors: vec![0.0],
        })
        .collect();
    let meta = TrajectoryMeta {
        kind: TrajectoryKind::Exact,
        scenario: None,
        seed: 0,
        steps: steps.len(),
        game: scenario("G1").unwrap().game.to_spec(),
        agents: vec![AgentSpec::learner(SIGMA)],
        theta_init: vec![steps[0].theta[0]],
        final_theta: vec![steps.last().unwrap().theta[0]],
        columns: Vec::new(),
    };
    Trajectory { meta, steps }
}

#[test]
fn geometric_sequence_rate() {
    let traj = synthetic((1..=100).map(|t| 0.25 + 0.5 * 0.9f64.powi(t)));
    let m = convergence_metrics(&traj, &[0.25]).unwrap();
    assert!((m.rate.unwrap() - 0.9f64.ln()).abs() <= 1e-6, "{m:?}");
    assert!(m.r_squared.unwrap() > 0.999999);
}

#[test]
fn constant_trajectory_has_no_rate() {
    let traj = synthetic(std::iter::repeat_n(0.25, 50));
    let m = convergence_metrics(&traj, &[0.25]).unwrap();
    assert_eq!(m.final_gap, 0.0);
    assert!(m.rate.is_none() && m.r_squared.is_none());
}

#[test]
fn halving_step_size_at_most_halves_rate() {
    for id in ["G1", "G3"] {
        let g = scenario(id).unwrap().game;
        let n = g.n_players();
        let star = stochastic_nash(&g, &vec![SIGMA; n], 1e-12).unwrap();
        let init: Vec<f64> = star.iter().map(|v| v + 0.05).collect();
        let rate = |eta: f64| {
            let traj = exact_dynamics(&g, &vec![SIGMA; n], &init, eta, 6000).unwrap();
            convergence_metrics(&traj, &star).unwrap().rate.unwrap()
        };
        let full = rate(ETA / 2.0);
        let half = rate(ETA / 4.0);
        assert!(half.abs() >= 0.5 * full.abs() * 0.8, "{id}: {full} vs {half}");
        assert!(half.abs() <= full.abs());
    }
}

#[test]
fn random_rival_stays_in_range() {
    let sc = scenario("G6").unwrap();
    let traj = run_simulation(&sc.game, &sc.agents, &sc.initial_theta(0).unwrap(), 100, 0).unwrap();
    let rival = sc.agents.iter().position(|a| !a.is_learner()).unwrap();
    for s in &traj.steps {
        assert!(s.actions[rival] >= 0.0 && s.actions[rival] <= sc.game.y_max());
    }
    assert_eq!(last_decile_std(&traj)[rival], 0.0);
}
