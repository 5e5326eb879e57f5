//! Synchronous multi-agent learning: policy-gradient and natural
//! policy-gradient learners, non-learning agents, trajectory recording and
//! convergence metrics.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{CournotGame, GameSpec};
use crate::rng::{purpose, Substream};
use crate::stochastic::{self, NoiseFamily, NoiseSpec, Policy, PolicyProfile, ScoreOptions, DEFAULT_NODES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    Constant,
    /// `eta_t = max(eta * t0 / (t0 + t - 1), floor)`.
    InverseTime { t0: f64, floor: f64 },
}

impl Schedule {
    pub fn rate(&self, eta: f64, t: usize) -> f64 {
        match *self {
            Schedule::Constant => eta,
            Schedule::InverseTime { t0, floor } => (eta * t0 / (t0 + t.saturating_sub(1) as f64)).max(floor),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub eta: f64,
    pub batch: usize,
    /// Precondition by the inverse Fisher information of the mean, which
    /// for a fixed-sigma Gaussian is a `sigma^2` scaling.
    pub natural: bool,
    pub baseline: bool,
    pub schedule: Schedule,
}

/// Step size of the plain gradient learner.
pub const PLAIN_ETA: f64 = 0.1;
/// Step size of the natural gradient learner; the effective step is
/// `eta * sigma^2`.
pub const NATURAL_ETA: f64 = 40.0;
pub const DEFAULT_BATCH: usize = 100;

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            eta: NATURAL_ETA,
            batch: DEFAULT_BATCH,
            natural: true,
            baseline: true,
            schedule: Schedule::Constant,
        }
    }
}

impl LearnerConfig {
    pub fn plain() -> Self {
        LearnerConfig {
            eta: PLAIN_ETA,
            natural: false,
            ..LearnerConfig::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::config(format!("step size must be positive, got {}", self.eta)));
        }
        if self.batch == 0 {
            return Err(Error::config("batch must be at least 1"));
        }
        if let Schedule::InverseTime { t0, floor } = self.schedule {
            if !(t0 > 0.0) || !(floor > 0.0) {
                return Err(Error::config("decay schedule needs t0 > 0 and floor > 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AgentSpec {
    PgLearner { config: LearnerConfig, noise: NoiseSpec },
    RandomUniform { lo: f64, hi: f64 },
    Fixed { theta: f64 },
}

impl AgentSpec {
    pub fn learner(sigma: f64) -> Self {
        AgentSpec::PgLearner {
            config: LearnerConfig::default(),
            noise: NoiseSpec::gaussian(sigma),
        }
    }

    pub fn is_learner(&self) -> bool {
        matches!(self, AgentSpec::PgLearner { .. })
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            AgentSpec::PgLearner { config, noise } => {
                config.check()?;
                noise.require_smooth()?;
                if !noise.family.has_score() {
                    return Err(Error::config("policy-gradient learners need Gaussian noise"));
                }
                Ok(())
            }
            AgentSpec::RandomUniform { lo, hi } => {
                if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
                    return Err(Error::config(format!("random agent needs 0 <= lo <= hi, got [{lo}, {hi}]")));
                }
                Ok(())
            }
            AgentSpec::Fixed { theta } => {
                if !theta.is_finite() {
                    return Err(Error::config("fixed agent needs a finite theta"));
                }
                Ok(())
            }
        }
    }

    /// The agent's behaviour as a rectified policy: a uniform draw on
    /// `[lo, hi]` is a mean of `(lo + hi) / 2` with uniform noise.
    pub fn policy(&self, theta: f64) -> Policy {
        match *self {
            AgentSpec::PgLearner { noise, .. } => Policy::new(theta, noise),
            AgentSpec::RandomUniform { lo, hi } => Policy::new(0.5 * (lo + hi), NoiseSpec::uniform((hi - lo) / 12f64.sqrt())),
            AgentSpec::Fixed { theta } => Policy::gaussian(theta, 0.0),
        }
    }

    fn draw<R: rand::Rng + ?Sized>(&self, theta: f64, rng: &mut R) -> (f64, f64) {
        match *self {
            AgentSpec::PgLearner { noise, .. } => Policy::new(theta, noise).draw(rng),
            AgentSpec::RandomUniform { lo, hi } => {
                let a = if hi > lo { rng.random_range(lo..hi) } else { lo };
                (a, a)
            }
            AgentSpec::Fixed { theta } => (theta.max(0.0), theta),
        }
    }
}

/// `theta + eta_t g`, where `g` is the estimate scaled by `sigma^2` for
/// natural learners.
pub fn pg_step(config: &LearnerConfig, noise: &NoiseSpec, theta: f64, estimate: f64, t: usize) -> Result<f64> {
    if !estimate.is_finite() {
        return Err(Error::Divergence {
            step: t,
            reason: format!("non-finite gradient estimate {estimate}"),
        });
    }
    let g = if config.natural {
        estimate * noise.sigma * noise.sigma
    } else {
        estimate
    };
    Ok(theta + config.schedule.rate(config.eta, t) * g)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// Means in force during step `t`.
    pub theta: Vec<f64>,
    pub actions: Vec<f64>,
    pub price: f64,
    pub payoffs: Vec<f64>,
    /// Gradient estimates used for the update; NaN for non-learners.
    pub gradients: Vec<f64>,
    pub std_errors: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrajectoryKind {
    /// Sampled play: actions, price and payoffs of the first round of
    /// each step, score-function gradient estimates.
    Sampled,
    /// Noise-free gradient iteration: expected actions, the price at the
    /// expected total, expected payoffs and exact gradients.
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub kind: TrajectoryKind,
    pub scenario: Option<String>,
    pub seed: u64,
    pub steps: usize,
    pub game: GameSpec,
    pub agents: Vec<AgentSpec>,
    pub theta_init: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub steps: Vec<StepRecord>,
}

fn columns(n: usize) -> Vec<String> {
    let mut c = vec!["t".to_string()];
    for prefix in ["theta", "action"] {
        c.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    c.push("price".into());
    for prefix in ["payoff", "grad", "se"] {
        c.extend((1..=n).map(|i| format!("{prefix}_{i}")));
    }
    c
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn n_players(&self) -> usize {
        self.meta.theta_init.len()
    }

    /// Per-player series of means, one row per step.
    pub fn thetas(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.theta.clone()).collect()
    }

    /// Tab-separated table, one row per step, header line first. Numbers
    /// use the shortest representation that round-trips.
    pub fn to_tsv(&self) -> String {
        let mut out = self.meta.columns.join("\t");
        out.push('\n');
        for s in &self.steps {
            let _ = write!(out, "{}", s.t);
            for v in s.theta.iter().chain(&s.actions).chain(std::iter::once(&s.price)).chain(&s.payoffs).chain(&s.gradients).chain(&s.std_errors) {
                let _ = write!(out, "\t{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_tsv(text: &str, meta: TrajectoryMeta) -> Result<Self> {
        let n = meta.theta_init.len();
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::Serialization("empty trajectory file".into()))?;
        if header.split('\t').count() != 2 + 5 * n {
            return Err(Error::Serialization(format!("unexpected header `{header}` for {n} players")));
        }
        let mut steps = Vec::new();
        for (k, line) in lines.enumerate() {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 2 + 5 * n {
                return Err(Error::Serialization(format!("row {} has {} fields", k + 1, f.len())));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|e| Error::Serialization(format!("row {}: `{s}`: {e}", k + 1)))
            };
            let vals = f[1..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let t = f[0]
                .parse::<usize>()
                .map_err(|e| Error::Serialization(format!("row {}: {e}", k + 1)))?;
            steps.push(StepRecord {
                t,
                theta: vals[..n].to_vec(),
                actions: vals[n..2 * n].to_vec(),
                price: vals[2 * n],
                payoffs: vals[2 * n + 1..3 * n + 1].to_vec(),
                gradients: vals[3 * n + 1..4 * n + 1].to_vec(),
                std_errors: vals[4 * n + 1..].to_vec(),
            });
        }
        Ok(Trajectory { meta, steps })
    }

    /// Writes `<stem>.tsv` and the `<stem>.meta.json` sidecar.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.tsv")), self.to_tsv())?;
        std::fs::write(
            dir.join(format!("{stem}.meta.json")),
            serde_json::to_string_pretty(&self.meta)?,
        )?;
        Ok(())
    }

    pub fn load(dir: &Path, stem: &str) -> Result<Self> {
        let meta: TrajectoryMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(format!("{stem}.meta.json")))?)?;
        let text = std::fs::read_to_string(dir.join(format!("{stem}.tsv")))?;
        Trajectory::from_tsv(&text, meta)
    }
}

fn divergence_guard(theta: &[f64], y_max: f64, t: usize) -> Result<()> {
    let big = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(big <= 10.0 * y_max) {
        return Err(Error::Divergence {
            step: t,
            reason: format!("|theta|_inf = {big:.3e} exceeds 10 y_max = {:.3e}", 10.0 * y_max),
        });
    }
    Ok(())
}

/// Joint rounds of one step: `(actions, raw samples)` per round. Chunks of
/// rounds own their own substreams.
fn play_rounds(agents: &[AgentSpec], theta: &[f64], rounds: usize, stream: Substream) -> Vec<(Vec<f64>, Vec<f64>)> {
    const CHUNK: usize = 1024;
    let chunks = rounds.div_ceil(CHUNK);
    let parts: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).rng();
            let count = CHUNK.min(rounds - c * CHUNK);
            (0..count)
                .map(|_| {
                    let (a, raw): (Vec<f64>, Vec<f64>) =
                        agents.iter().zip(theta).map(|(ag, &t)| ag.draw(t, &mut rng)).unzip();
                    (a, raw)
                })
                .collect()
        })
        .collect();
    parts.concat()
}

/// Repeated simultaneous play. At every step all agents act in `batch`
/// joint rounds at frozen means (the largest learner batch; each learner
/// uses its first `batch` rounds). Each learner observes only its own
/// action and payoff, forms a score-function estimate and updates; all
/// updates take effect together at the end of the step.
pub fn run_simulation(
    game: &CournotGame,
    agents: &[AgentSpec],
    theta_init: &[f64],
    steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let n = game.n_players();
    if agents.len() != n || theta_init.len() != n {
        return Err(Error::config(format!(
            "{} agents and {} initial means for a {n}-player game",
            agents.len(),
            theta_init.len()
        )));
    }
    if steps == 0 {
        return Err(Error::EmptyHorizon);
    }
    for a in agents {
        a.check()?;
    }
    if theta_init.iter().any(|t| !t.is_finite()) {
        return Err(Error::config("initial means must be finite"));
    }
    let mut theta: Vec<f64> = agents
        .iter()
        .zip(theta_init)
        .map(|(a, &t)| match a {
            AgentSpec::PgLearner { .. } => t,
            _ => a.policy(t).theta,
        })
        .collect();
    let rounds = agents
        .iter()
        .filter_map(|a| match a {
            AgentSpec::PgLearner { config, .. } => Some(config.batch),
            _ => None,
        })
        .max()
        .unwrap_or(1);
    let root = Substream::new(seed).child(purpose::SIMULATION);
    let price = game.price();
    let mut baselines = vec![0.0; n];
    let mut records = Vec::with_capacity(steps);
    for t in 1..=steps {
        let played = play_rounds(agents, &theta, rounds, root.child(t as u64));
        let payoffs_of = |a: &[f64]| -> Vec<f64> {
            let p = price.value(a.iter().sum());
            a.iter().enumerate().map(|(i, &ai)| p * ai - game.cost(i).value(ai)).collect()
        };
        let round_payoffs: Vec<Vec<f64>> = played.iter().map(|(a, _)| payoffs_of(a)).collect();
        let mut gradients = vec![f64::NAN; n];
        let mut std_errors = vec![f64::NAN; n];
        let mut next = theta.clone();
        for (i, agent) in agents.iter().enumerate() {
            let AgentSpec::PgLearner { config, noise } = agent else {
                continue;
            };
            let own: Vec<(f64, f64)> = played[..config.batch]
                .iter()
                .zip(&round_payoffs)
                .map(|((_, raw), pi)| (pi[i], raw[i]))
                .collect();
            let opts = ScoreOptions {
                batch: config.batch,
                baseline: config.baseline,
                prior_baseline: baselines[i],
            };
            let est = stochastic::combine_score(&own, Policy::new(theta[i], *noise), &opts);
            baselines[i] = est.mean_payoff;
            gradients[i] = est.estimate;
            std_errors[i] = est.std_error.unwrap_or(f64::NAN);
            next[i] = pg_step(config, noise, theta[i], est.estimate, t)?;
        }
        let (a0, _) = &played[0];
        records.push(StepRecord {
            t,
            theta: theta.clone(),
            actions: a0.clone(),
            price: price.value(a0.iter().sum()),
            payoffs: round_payoffs[0].clone(),
            gradients,
            std_errors,
        });
        divergence_guard(&next, game.y_max(), t)?;
        theta = next;
    }
    Ok(Trajectory {
        meta: TrajectoryMeta {
            kind: TrajectoryKind::Sampled,
            scenario: None,
            seed,
            steps,
            game: game.to_spec(),
            agents: agents.to_vec(),
            theta_init: theta_init.to_vec(),
            final_theta: theta,
            columns: columns(n),
        },
        steps: records,
    })
}

/// Noise-free gradient iteration `theta <- theta + eta grad J(theta)` with
/// quadrature gradients under Gaussian noise.
pub fn exact_dynamics(game: &CournotGame, sigmas: &[f64], theta_init: &[f64], eta: f64, steps: usize) -> Result<Trajectory> {
    let n = game.n_players();
    if sigmas.len() != n || theta_init.len() != n {
        return Err(Error::config("sigma and initial mean lists must match the number of players"));
    }
    if steps == 0 {
        return Err(Error::EmptyHorizon);
    }
    if !(eta > 0.0) {
        return Err(Error::config(format!("step size must be positive, got {eta}")));
    }
    let noises: Vec<NoiseSpec> = sigmas.iter().map(|&s| NoiseSpec::gaussian(s)).collect();
    let mut profile = PolicyProfile::from_parts(theta_init, &noises)?;
    let mut records: Vec<StepRecord> = Vec::with_capacity(steps);
    let mut final_theta = None;
    for t in 1..=steps {
        // Once the iterate repeats with period 1 or 2 the rest of the
        // trajectory is determined.
        if t >= 3 && records[t - 3].theta == profile.thetas() {
            for s in t..=steps {
                let mut r = records[s - 3].clone();
                r.t = s;
                records.push(r);
            }
            final_theta = Some(records[steps - 2].theta.clone());
            break;
        }
        let rows = (0..n)
            .into_par_iter()
            .map(|i| stochastic::row(game, &profile, i, DEFAULT_NODES, false))
            .collect::<Result<Vec<_>>>()?;
        let theta = profile.thetas();
        let actions: Vec<f64> = theta
            .iter()
            .zip(&noises)
            .map(|(&th, nz)| {
                let z = th / nz.sigma;
                th * NoiseFamily::Gaussian.cdf(z) + nz.sigma * NoiseFamily::Gaussian.pdf(z)
            })
            .collect();
        let gradients: Vec<f64> = rows.iter().map(|r| r.gradient).collect();
        let next: Vec<f64> = theta.iter().zip(&gradients).map(|(th, g)| th + eta * g).collect();
        records.push(StepRecord {
            t,
            theta,
            price: game.price().value(actions.iter().sum()),
            actions,
            payoffs: rows.iter().map(|r| r.payoff).collect(),
            gradients,
            std_errors: vec![0.0; n],
        });
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                step: t,
                reason: "non-finite mean".into(),
            });
        }
        divergence_guard(&next, game.y_max(), t)?;
        profile = profile.with_thetas(&next);
    }
    let agents = noises
        .iter()
        .map(|&noise| AgentSpec::PgLearner {
            config: LearnerConfig {
                eta,
                batch: 1,
                natural: false,
                baseline: false,
                schedule: Schedule::Constant,
            },
            noise,
        })
        .collect();
    Ok(Trajectory {
        meta: TrajectoryMeta {
            kind: TrajectoryKind::Exact,
            scenario: None,
            seed: 0,
            steps,
            game: game.to_spec(),
            agents,
            theta_init: theta_init.to_vec(),
            final_theta: final_theta.unwrap_or_else(|| profile.thetas()),
            columns: columns(n),
        },
        steps: records,
    })
}

/// Gaps below `10 * GAP_FLOOR` are excluded from the rate fit.
pub const GAP_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceMetrics {
    /// `|theta_T - theta*|_inf` over the tracked players.
    pub final_gap: f64,
    /// Slope of `ln |theta_t - theta*|_2` against `t`.
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    /// First and last step of the fitted window.
    pub window: Option<(usize, usize)>,
}

/// Metrics over all players.
pub fn convergence_metrics(traj: &Trajectory, target: &[f64]) -> Result<ConvergenceMetrics> {
    let all: Vec<usize> = (0..traj.n_players()).collect();
    convergence_metrics_for(traj, target, &all)
}

/// Metrics restricted to the players in `players`; `target` is indexed
/// like the full profile.
pub fn convergence_metrics_for(traj: &Trajectory, target: &[f64], players: &[usize]) -> Result<ConvergenceMetrics> {
    if traj.is_empty() {
        return Err(Error::EmptyHorizon);
    }
    let gap2 = |th: &[f64]| players.iter().map(|&i| (th[i] - target[i]).powi(2)).sum::<f64>().sqrt();
    let last = traj.steps.last().unwrap();
    let final_theta = if traj.meta.final_theta.len() == traj.n_players() {
        &traj.meta.final_theta
    } else {
        &last.theta
    };
    let final_gap = players
        .iter()
        .map(|&i| (final_theta[i] - target[i]).abs())
        .fold(0.0, f64::max);
    let gaps: Vec<f64> = traj.steps.iter().map(|s| gap2(&s.theta)).collect();
    let g0 = gaps[0];
    let start = gaps.iter().position(|&g| g <= 0.5 * g0);
    let end = gaps.iter().rposition(|&g| g >= 10.0 * GAP_FLOOR);
    let (rate, r_squared, window) = match (start, end) {
        (Some(s), Some(e)) if g0 > 10.0 * GAP_FLOOR && e >= s + 2 => {
            let pts: Vec<(f64, f64)> = (s..=e)
                .filter(|&k| gaps[k] > 0.0)
                .map(|k| (traj.steps[k].t as f64, gaps[k].ln()))
                .collect();
            match fit_line(&pts) {
                Some((slope, r2)) => (Some(slope), Some(r2), Some((traj.steps[s].t, traj.steps[e].t))),
                None => (None, None, None),
            }
        }
        _ => (None, None, None),
    };
    Ok(ConvergenceMetrics {
        final_gap,
        rate,
        r_squared,
        window,
    })
}

/// Least-squares slope and coefficient of determination.
fn fit_line(pts: &[(f64, f64)]) -> Option<(f64, f64)> {
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, r2))
}

/// Standard deviation of each player's mean over the last tenth of the
/// trajectory.
pub fn last_decile_std(traj: &Trajectory) -> Vec<f64> {
    let n = traj.n_players();
    let k = (traj.len() / 10).max(1);
    let tail = &traj.steps[traj.len() - k..];
    (0..n)
        .map(|i| {
            let m = tail.iter().map(|s| s.theta[i]).sum::<f64>() / k as f64;
            (tail.iter().map(|s| (s.theta[i] - m).powi(2)).sum::<f64>() / k as f64).sqrt()
        })
        .collect()
}

/// Mean over the last tenth of the trajectory, per player.
pub fn last_decile_mean(traj: &Trajectory) -> Vec<f64> {
    let n = traj.n_players();
    let k = (traj.len() / 10).max(1);
    let tail = &traj.steps[traj.len() - k..];
    (0..n)
        .map(|i| tail.iter().map(|s| s.theta[i]).sum::<f64>() / k as f64)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pg_step_examples() {
        let plain = LearnerConfig {
            eta: 0.1,
            natural: false,
            ..LearnerConfig::default()
        };
        let noise = NoiseSpec::gaussian(0.05);
        assert!((pg_step(&plain, &noise, 0.2, 0.5, 1).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(pg_step(&plain, &noise, 0.2, 0.0, 1).unwrap(), 0.2);
        let natural = LearnerConfig {
            eta: 0.1,
            ..LearnerConfig::default()
        };
        assert!((pg_step(&natural, &noise, 0.0, 1.0, 1).unwrap() - 0.00025).abs() < 1e-15);
        assert!(pg_step(&plain, &noise, 0.2, f64::NAN, 4).is_err());
    }

    #[test]
    fn decay_schedule_respects_floor() {
        let s = Schedule::InverseTime { t0: 10.0, floor: 0.5 };
        assert_eq!(s.rate(40.0, 1), 40.0);
        assert!((s.rate(40.0, 11) - 20.0).abs() < 1e-12);
        assert_eq!(s.rate(40.0, 100_000), 0.5);
    }

    #[test]
    fn line_fit_of_exact_geometric_decay() {
        let pts: Vec<(f64, f64)> = (0..50).map(|t| (t as f64, (0.5 * 0.9f64.powi(t)).ln())).collect();
        let (slope, r2) = fit_line(&pts).unwrap();
        assert!((slope - 0.9f64.ln()).abs() < 1e-12);
        assert!(r2 > 0.999999);
    }
}
