//! Scenario registry for the six benchmark games, result persistence and
//! plot data.
//!
//! Output layout under a results root:
//!
//! ```text
//! <root>/<id>/<seed>/trajectory.tsv
//! <root>/<id>/<seed>/trajectory.meta.json
//! <root>/<id>/<seed>/record.json
//! <root>/<id>/<seed>/config.toml
//! <root>/<id>/<seed>/plot.tsv
//! <root>/<id>/<seed>/plot.svg
//! <root>/<id>/<seed>/certificates/*.json
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, HessianMethod, SweepReport};
use crate::error::{Error, Result};
use crate::game::{self, CostFunction, CournotGame, GameSpec, PriceFunction, PriceKind};
use crate::learner::{
    self, AgentSpec, ConvergenceMetrics, Schedule, Trajectory,
};
use crate::rng::{purpose, Substream};
use crate::stochastic::{self, NoiseSpec, PolicyProfile, StochasticNashOptions};

/// Standard deviation of every policy in the registry.
pub const SIGMA: f64 = 0.05;
/// Default horizon of a sampled run.
pub const DEFAULT_STEPS: usize = 3000;
/// Probe count of the certificate sweeps.
pub const DEFAULT_PROBES: usize = 100;
/// Lower corner of the probe box for the Hessian sweeps.
pub const PROBE_LO: f64 = -0.2;

/// Learner batch in G6, where the random rival inflates the payoff
/// variance.
pub const G6_BATCH: usize = 400;

pub const SCENARIOS: [&str; 6] = ["G1", "G2", "G3", "G4", "G5", "G6"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSource {
    /// Equilibrium quoted with the game definition.
    Stated,
    /// Equilibrium worked out by hand from the first-order conditions.
    Derived,
    /// Stationary point of the exact gradient map, computed at run time.
    Computed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThetaInit {
    Fixed { theta: Vec<f64> },
    /// Seeded uniform draw in `[lo, hi]^N`, redrawn until the total stays
    /// below `y_max`.
    Random { lo: f64, hi: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateSuite {
    Rosen,
    Dominance,
    None,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub game: CournotGame,
    pub agents: Vec<AgentSpec>,
    pub theta_init: ThetaInit,
    pub steps: usize,
    pub seed: u64,
    pub expected_ne: Option<Vec<f64>>,
    pub ne_source: Option<ReferenceSource>,
    pub certificates: CertificateSuite,
}

fn zero_cost_game(n: usize, kind: PriceKind, coefficients: Vec<f64>) -> Result<CournotGame> {
    CournotGame::new(PriceFunction::new(kind, coefficients)?, vec![CostFunction::zero(); n])
}

/// The registered configuration for `id` (`G1` ... `G6`).
pub fn scenario(id: &str) -> Result<Scenario> {
    let learners = |n: usize| vec![AgentSpec::learner(SIGMA); n];
    let base = |id: &str, game: CournotGame, ne: Option<Vec<f64>>, src, certs| {
        let n = game.n_players();
        let hi = game.y_max();
        Scenario {
            id: id.to_string(),
            agents: learners(n),
            theta_init: ThetaInit::Random { lo: 0.0, hi },
            game,
            steps: DEFAULT_STEPS,
            seed: 0,
            expected_ne: ne,
            ne_source: src,
            certificates: certs,
        }
    };
    use CertificateSuite::*;
    use ReferenceSource::*;
    let s = match id.to_ascii_uppercase().as_str() {
        "G1" => base(
            "G1",
            zero_cost_game(3, PriceKind::Linear, vec![1.0, -1.0])?,
            Some(vec![0.25; 3]),
            Some(Stated),
            Rosen,
        ),
        "G2" => base(
            "G2",
            CournotGame::new(
                PriceFunction::linear(1.0, 1.0)?,
                (1..=3).map(|i| CostFunction::linear(0.1 * i as f64)).collect(),
            )?,
            Some(vec![0.3, 0.2, 0.1]),
            Some(Stated),
            Rosen,
        ),
        "G3" => base(
            "G3",
            zero_cost_game(2, PriceKind::Quadratic, vec![1.0, 0.0, -1.0])?,
            Some(vec![(1.0f64 / 8.0).sqrt(); 2]),
            Some(Stated),
            Dominance,
        ),
        "G4" => base(
            "G4",
            zero_cost_game(2, PriceKind::Cubic, vec![1.0, 0.0, 0.0, -0.5])?,
            Some(vec![(1.0f64 / 20.0).cbrt(); 2]),
            Some(Stated),
            Dominance,
        ),
        "G5" => base(
            "G5",
            zero_cost_game(3, PriceKind::Quadratic, vec![1.0, 0.0, -1.0])?,
            Some(vec![(1.0f64 / 15.0).sqrt(); 3]),
            Some(Derived),
            None,
        ),
        "G6" => {
            let mut s = base(
                "G6",
                zero_cost_game(3, PriceKind::Linear, vec![1.0, -1.0])?,
                Option::None,
                Option::None,
                None,
            );
            s.agents[2] = AgentSpec::RandomUniform { lo: 0.0, hi: s.game.y_max() };
            for a in &mut s.agents {
                if let AgentSpec::PgLearner { config, .. } = a {
                    config.batch = G6_BATCH;
                }
            }
            s
        }
        _ => return Err(Error::UnknownScenario(id.to_string())),
    };
    Ok(s)
}

/// Run-time adjustments applied on top of a registered scenario. Every
/// field left `None` keeps the scenario's value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub steps: Option<usize>,
    pub eta: Option<f64>,
    pub batch: Option<usize>,
    pub sigma: Option<f64>,
    pub natural: Option<bool>,
    pub baseline: Option<bool>,
    pub schedule: Option<Schedule>,
    pub theta_init: Option<Vec<f64>>,
    pub probes: Option<usize>,
    /// Skip the certificate sweeps.
    pub skip_certificates: Option<bool>,
    /// Replace the registered game.
    pub game: Option<GameSpec>,
}

impl Overrides {
    /// Fields set in `other` win.
    pub fn merged(&self, other: &Overrides) -> Overrides {
        Overrides {
            steps: other.steps.or(self.steps),
            eta: other.eta.or(self.eta),
            batch: other.batch.or(self.batch),
            sigma: other.sigma.or(self.sigma),
            natural: other.natural.or(self.natural),
            baseline: other.baseline.or(self.baseline),
            schedule: other.schedule.or(self.schedule),
            theta_init: other.theta_init.clone().or_else(|| self.theta_init.clone()),
            probes: other.probes.or(self.probes),
            skip_certificates: other.skip_certificates.or(self.skip_certificates),
            game: other.game.clone().or_else(|| self.game.clone()),
        }
    }
}

impl Scenario {
    pub fn apply(mut self, o: &Overrides) -> Result<Scenario> {
        if let Some(spec) = &o.game {
            let game = CournotGame::from_spec(spec)?;
            let n = game.n_players();
            if n != self.game.n_players() {
                self.agents = vec![AgentSpec::learner(SIGMA); n];
            }
            self.expected_ne = None;
            self.ne_source = None;
            self.certificates = if game.price().polynomial().degree() <= 1 {
                CertificateSuite::Rosen
            } else if n == 2 {
                CertificateSuite::Dominance
            } else {
                CertificateSuite::None
            };
            if let ThetaInit::Random { lo, .. } = self.theta_init {
                self.theta_init = ThetaInit::Random { lo, hi: game.y_max() };
            }
            self.game = game;
        }
        if o.natural == Some(false) && o.eta.is_none() {
            for a in &mut self.agents {
                if let AgentSpec::PgLearner { config, .. } = a {
                    config.eta = learner::PLAIN_ETA;
                }
            }
        }
        for a in &mut self.agents {
            if let AgentSpec::PgLearner { config, noise } = a {
                if let Some(v) = o.eta {
                    config.eta = v;
                }
                if let Some(v) = o.batch {
                    config.batch = v;
                }
                if let Some(v) = o.natural {
                    config.natural = v;
                }
                if let Some(v) = o.baseline {
                    config.baseline = v;
                }
                if let Some(v) = o.schedule {
                    config.schedule = v;
                }
                if let Some(v) = o.sigma {
                    noise.sigma = v;
                }
            }
        }
        if let Some(t) = o.steps {
            self.steps = t;
        }
        if let Some(th) = &o.theta_init {
            if th.len() != self.game.n_players() {
                return Err(Error::config(format!(
                    "theta_init has {} entries for {} players",
                    th.len(),
                    self.game.n_players()
                )));
            }
            self.theta_init = ThetaInit::Fixed { theta: th.clone() };
        }
        if o.skip_certificates == Some(true) {
            self.certificates = CertificateSuite::None;
        }
        for a in &self.agents {
            a.check()?;
        }
        Ok(self)
    }

    pub fn learners(&self) -> Vec<usize> {
        (0..self.agents.len()).filter(|&i| self.agents[i].is_learner()).collect()
    }

    /// Initial means for `seed`.
    pub fn initial_theta(&self, seed: u64) -> Result<Vec<f64>> {
        let n = self.game.n_players();
        match &self.theta_init {
            ThetaInit::Fixed { theta } => Ok(theta.clone()),
            ThetaInit::Random { lo, hi } => {
                let mut rng = Substream::new(seed).child(purpose::INIT).rng();
                let y_max = self.game.y_max();
                for _ in 0..100_000 {
                    let t: Vec<f64> = (0..n).map(|_| rng.random_range(*lo..*hi)).collect();
                    let total: f64 = t
                        .iter()
                        .zip(&self.agents)
                        .map(|(&v, a)| if a.is_learner() { v } else { a.policy(v).theta })
                        .sum();
                    if total < y_max {
                        return Ok(t);
                    }
                }
                Err(Error::config("could not draw an initial profile inside the market"))
            }
        }
    }

    /// Noise of every agent, with non-learners expressed as rectified
    /// policies.
    pub fn profile(&self, theta: &[f64]) -> PolicyProfile {
        PolicyProfile::new(self.agents.iter().zip(theta).map(|(a, &t)| a.policy(t)).collect())
    }

    /// Target of the convergence metrics and where it came from. Without
    /// a registered equilibrium, the stationary point of the exact
    /// gradient map over the learners is used.
    pub fn reference(&self) -> Result<(Vec<f64>, ReferenceSource)> {
        if let (Some(ne), Some(src)) = (&self.expected_ne, self.ne_source) {
            return Ok((ne.clone(), src));
        }
        let n = self.game.n_players();
        let mut start = game::solve_nash(&self.game, 1e-10)?.into_vec();
        for (i, a) in self.agents.iter().enumerate() {
            if !a.is_learner() {
                start[i] = a.policy(0.0).theta;
            }
        }
        let profile = self.profile(&start);
        let free: Vec<bool> = (0..n).map(|i| self.agents[i].is_learner()).collect();
        let theta = stochastic::stochastic_nash_partial(&self.game, &profile, &free, &StochasticNashOptions::default())?;
        Ok((theta, ReferenceSource::Computed))
    }

    /// Effective configuration as TOML.
    pub fn to_toml(&self, seed: u64) -> Result<String> {
        #[derive(Serialize)]
        struct Echo<'a> {
            scenario: &'a str,
            seed: u64,
            steps: usize,
            theta_init: &'a ThetaInit,
            game: GameSpec,
            agents: &'a [AgentSpec],
        }
        Ok(toml::to_string(&Echo {
            scenario: &self.id,
            seed,
            steps: self.steps,
            theta_init: &self.theta_init,
            game: self.game.to_spec(),
            agents: &self.agents,
        })?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSummary {
    pub name: String,
    pub file: String,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub scenario: String,
    pub seed: u64,
    pub trajectory: String,
    pub theta_init: Vec<f64>,
    pub final_theta: Vec<f64>,
    pub reference: Vec<f64>,
    pub reference_source: ReferenceSource,
    pub learners: Vec<usize>,
    pub metrics: ConvergenceMetrics,
    pub last_decile_std: Vec<f64>,
    pub last_decile_mean: Vec<f64>,
    pub certificates: Vec<CertificateSummary>,
    pub wall_clock_s: f64,
}

impl ResultRecord {
    pub fn load(dir: &Path) -> Result<ResultRecord> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join("record.json"))?)?)
    }
}

pub fn result_dir(root: &Path, id: &str, seed: u64) -> PathBuf {
    root.join(id).join(seed.to_string())
}

/// Runs a scenario end to end. With `out = Some(root)` every artifact is
/// written under `<root>/<id>/<seed>/`.
pub fn run_scenario(id: &str, overrides: &Overrides, seed: u64, out: Option<&Path>) -> Result<ResultRecord> {
    let sc = scenario(id)?.apply(overrides)?;
    run_prepared(&sc, overrides.probes.unwrap_or(DEFAULT_PROBES), seed, out)
}

pub fn run_prepared(sc: &Scenario, probes: usize, seed: u64, out: Option<&Path>) -> Result<ResultRecord> {
    let clock = Instant::now();
    if sc.steps == 0 {
        return Err(Error::EmptyHorizon);
    }
    let theta_init = sc.initial_theta(seed)?;
    let mut traj = learner::run_simulation(&sc.game, &sc.agents, &theta_init, sc.steps, seed)?;
    traj.meta.scenario = Some(sc.id.clone());
    let (reference, reference_source) = sc.reference()?;
    let learners = sc.learners();
    let metrics = learner::convergence_metrics_for(&traj, &reference, &learners)?;

    let dir = out.map(|root| result_dir(root, &sc.id, seed));
    let mut certificates = Vec::new();
    if sc.certificates != CertificateSuite::None {
        for (name, report) in certificate_sweeps(sc, probes, seed)? {
            let file = format!("certificates/{name}.json");
            if let Some(d) = &dir {
                std::fs::create_dir_all(d.join("certificates"))?;
                std::fs::write(d.join(&file), serde_json::to_string_pretty(&report)?)?;
            }
            certificates.push(CertificateSummary {
                name: name.to_string(),
                file,
                passed: report.passed,
                failed: report.failed,
            });
        }
    }

    let record = ResultRecord {
        scenario: sc.id.clone(),
        seed,
        trajectory: "trajectory.tsv".into(),
        theta_init,
        final_theta: traj.meta.final_theta.clone(),
        reference,
        reference_source,
        learners,
        metrics,
        last_decile_std: learner::last_decile_std(&traj),
        last_decile_mean: learner::last_decile_mean(&traj),
        certificates,
        wall_clock_s: clock.elapsed().as_secs_f64(),
    };
    if let Some(d) = &dir {
        traj.save(d, "trajectory")?;
        std::fs::write(d.join("config.toml"), sc.to_toml(seed)?)?;
        std::fs::write(d.join("record.json"), serde_json::to_string_pretty(&record)?)?;
        emit_plot_data(d)?;
    }
    Ok(record)
}

/// The sweeps attached to a scenario: Rosen for the linear-price games,
/// dominance and Gershgorin for the duopolies, and the upper-bound sign
/// check for all of them.
pub fn certificate_sweeps(sc: &Scenario, probes: usize, seed: u64) -> Result<Vec<(&'static str, SweepReport)>> {
    let n = sc.game.n_players();
    let noises: Vec<NoiseSpec> = sc.agents.iter().map(|a| a.policy(0.0).noise).collect();
    let sigma = noises.iter().map(|z| z.sigma).fold(0.0, f64::max);
    let points = analysis::halton_probes(probes, n, PROBE_LO, sc.game.y_max(), seed);
    let method = HessianMethod::default();
    let mut out = Vec::new();
    match sc.certificates {
        CertificateSuite::Rosen => out.push(("rosen", analysis::rosen_sweep(&sc.game, &noises, &points, method)?)),
        CertificateSuite::Dominance => {
            let (d, g) = analysis::dominance_sweep(&sc.game, &noises, &points, method)?;
            out.push(("dominance", d));
            out.push(("gershgorin", g));
        }
        CertificateSuite::None => return Ok(out),
    }
    out.push((
        "theta-bound",
        analysis::upper_bound_sweep(&sc.game, NoiseSpec::gaussian(sigma), 50, &[0.0], seed, stochastic::DEFAULT_NODES)?,
    ));
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotSummary {
    pub curves: usize,
    pub references: Vec<f64>,
    pub rows: usize,
}

/// Writes `plot.tsv` (step and per-player means, then the reference
/// levels as constant columns) and `plot.svg` (one curve per player,
/// reference levels dashed) next to a persisted record.
pub fn emit_plot_data(dir: &Path) -> Result<PlotSummary> {
    let record = ResultRecord::load(dir)?;
    let meta_path = dir.join("trajectory.meta.json");
    if !dir.join(&record.trajectory).exists() || !meta_path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("missing trajectory in {}", dir.display()),
        )));
    }
    let traj = Trajectory::load(dir, "trajectory")?;
    let refs: Vec<f64> = record.learners.iter().map(|&i| record.reference[i]).collect();
    let summary = write_plot(&traj, &record.learners, &refs, dir)?;
    Ok(summary)
}

fn distinct_levels(refs: &[f64]) -> Vec<f64> {
    let mut levels: Vec<f64> = Vec::new();
    for &r in refs {
        if !levels.iter().any(|&l| (l - r).abs() < 1e-9) {
            levels.push(r);
        }
    }
    levels
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

pub fn write_plot(traj: &Trajectory, players: &[usize], refs: &[f64], dir: &Path) -> Result<PlotSummary> {
    if traj.is_empty() {
        return Err(Error::EmptyHorizon);
    }
    let levels = distinct_levels(refs);
    let mut tsv = String::from("t");
    for &i in players {
        let _ = write!(tsv, "\ttheta_{}", i + 1);
    }
    for k in 0..levels.len() {
        let _ = write!(tsv, "\tne_{}", k + 1);
    }
    tsv.push('\n');
    for s in &traj.steps {
        let _ = write!(tsv, "{}", s.t);
        for &i in players {
            let _ = write!(tsv, "\t{}", s.theta[i]);
        }
        for l in &levels {
            let _ = write!(tsv, "\t{l}");
        }
        tsv.push('\n');
    }
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("plot.tsv"), tsv)?;
    std::fs::write(dir.join("plot.svg"), render_svg(traj, players, &levels))?;
    Ok(PlotSummary {
        curves: players.len(),
        references: levels,
        rows: traj.len(),
    })
}

fn render_svg(traj: &Trajectory, players: &[usize], levels: &[f64]) -> String {
    let (w, h, m) = (720.0, 420.0, 50.0);
    let t_max = traj.steps.last().map_or(1, |s| s.t).max(1) as f64;
    let values = traj.steps.iter().flat_map(|s| players.iter().map(move |&i| s.theta[i]));
    let (mut lo, mut hi) = values.chain(levels.iter().copied()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !(hi > lo) {
        lo -= 0.5;
        hi += 0.5;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);
    let x = |t: f64| m + (w - 2.0 * m) * t / t_max;
    let y = |v: f64| h - m - (h - 2.0 * m) * (v - lo) / (hi - lo);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<g stroke="black" stroke-width="1"><line x1="{m}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{m}" y1="{m}" x2="{m}" y2="{b}"/></g>"#,
        b = h - m,
        r = w - m
    );
    let _ = writeln!(
        s,
        r#"<g font-family="sans-serif" font-size="12"><text x="{}" y="{}" text-anchor="middle">iteration</text><text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">theta</text><text x="{m}" y="{}" text-anchor="middle">0</text><text x="{}" y="{}" text-anchor="middle">{}</text><text x="{}" y="{}" text-anchor="end">{:.3}</text><text x="{}" y="{}" text-anchor="end">{:.3}</text></g>"#,
        w / 2.0,
        h - 12.0,
        h / 2.0,
        h / 2.0,
        h - m + 16.0,
        w - m,
        h - m + 16.0,
        t_max,
        m - 4.0,
        y(lo) + 4.0,
        lo,
        m - 4.0,
        y(hi) + 4.0,
        hi
    );
    for l in levels {
        let _ = writeln!(
            s,
            r#"<line class="reference" x1="{m}" y1="{yl:.2}" x2="{r}" y2="{yl:.2}" stroke="gray" stroke-width="1" stroke-dasharray="6 4"/>"#,
            yl = y(*l),
            r = w - m
        );
    }
    for (k, &i) in players.iter().enumerate() {
        let mut pts = String::new();
        for st in &traj.steps {
            let _ = write!(pts, "{:.2},{:.2} ", x(st.t as f64), y(st.theta[i]));
        }
        let _ = writeln!(
            s,
            r#"<polyline class="curve" fill="none" stroke="{}" stroke-width="1.2" points="{}"/>"#,
            COLORS[k % COLORS.len()],
            pts.trim_end()
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" fill="{}">player {}</text>"#,
            w - m + 4.0,
            m + 16.0 * k as f64,
            COLORS[k % COLORS.len()],
            i + 1
        );
    }
    s.push_str("</svg>\n");
    s
}

/// A trajectory file plus metadata without a record, for plotting ad-hoc
/// runs.
pub fn plot_trajectory(traj: &Trajectory, reference: &[f64], dir: &Path) -> Result<PlotSummary> {
    let players: Vec<usize> = (0..traj.n_players()).collect();
    write_plot(traj, &players, reference, dir)
}
