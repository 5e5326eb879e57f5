//! Command-line front end. [`main_with`] parses arguments, runs one verb
//! and returns the process exit code.
//!
//! Exit codes: 0 success, 1 failed certificate, 2 bad input, 3 divergence
//! or another runtime failure of an iterative method.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, Certificate, CertificateKind, HessianMethod, SweepReport, Verdict, Witness, FD_STEP};
use crate::error::{Error, Result};
use crate::experiments::{self, Overrides, Scenario, DEFAULT_PROBES, PROBE_LO, SIGMA};
use crate::game::{self, CournotGame, GameSpec};
use crate::learner::Schedule;
use crate::rng::{purpose, Substream};
use crate::stochastic::{self, ExpectationMethod, NoiseSpec, PolicyProfile, DEFAULT_NODES};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CERTIFICATE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Tsv,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    Quadrature,
    Fd,
    Interior,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    All,
    Rosen,
    Dominance,
    Bounds,
    Estimator,
}

#[derive(Debug, Parser)]
#[command(name = "cournot", version, about = "Policy-gradient learning in stochastic Cournot games")]
pub struct Cli {
    /// Root seed of every random stream.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// TOML file with defaults for any flag.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Natural gradient (default).
    #[arg(long, conflicts_with = "plain")]
    pub natural: bool,
    /// Vanilla gradient.
    #[arg(long)]
    pub plain: bool,
    #[arg(long)]
    pub no_baseline: bool,
    /// `eta_t = max(eta t0 / (t0 + t - 1), floor)`; needs `--decay-floor`.
    #[arg(long, requires = "decay_floor")]
    pub decay_t0: Option<f64>,
    #[arg(long, requires = "decay_t0")]
    pub decay_floor: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub theta_init: Option<Vec<f64>>,
    #[arg(long)]
    pub probes: Option<usize>,
    #[arg(long)]
    pub skip_certificates: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a scenario (`G1` ... `G6`) or a TOML configuration.
    Run {
        target: String,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Deterministic Nash equilibrium and first-order residuals.
    Nash {
        /// Scenario id or TOML file.
        target: Option<String>,
        #[arg(long)]
        game: Option<String>,
    },
    /// Game Hessian at one point by every method, with certificates.
    HessianCheck {
        #[arg(long)]
        game: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        theta: Option<Vec<f64>>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long, value_enum)]
        method: Option<MethodArg>,
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Range of useful means per player.
    Bounds {
        #[arg(long)]
        game: Option<String>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
    },
    /// Certificate sweeps and estimator tests.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: Suite,
        #[arg(long)]
        game: Option<String>,
        #[arg(long)]
        probes: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        nodes: Option<usize>,
        /// Score batches per estimator probe.
        #[arg(long)]
        batches: Option<usize>,
        /// Rounds per score batch.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        estimator_probes: Option<usize>,
    },
    /// Several scenarios over consecutive seeds.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<String>>,
        /// Number of seeds, starting at `--seed`.
        #[arg(long)]
        seeds: Option<u64>,
        #[command(flatten)]
        flags: RunFlags,
    },
}

/// Configuration file. Every flag has a key here; flags win.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub scenario: Option<String>,
    pub steps: Option<usize>,
    pub eta: Option<f64>,
    pub batch: Option<usize>,
    pub sigma: Option<f64>,
    pub natural: Option<bool>,
    pub baseline: Option<bool>,
    pub schedule: Option<Schedule>,
    pub theta_init: Option<Vec<f64>>,
    pub probes: Option<usize>,
    pub skip_certificates: Option<bool>,
    pub theta: Option<Vec<f64>>,
    pub method: Option<MethodArg>,
    pub nodes: Option<usize>,
    pub batches: Option<usize>,
    pub samples: Option<usize>,
    pub estimator_probes: Option<usize>,
    pub scenarios: Option<Vec<String>>,
    pub seeds: Option<u64>,
    pub game: Option<GameSpec>,
}

impl CliConfig {
    /// Reads a configuration file. A file holding only a game definition
    /// (`n_players`, `price`, `costs` at the top level) is accepted too.
    pub fn load(path: &Path) -> Result<CliConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text)?;
        if table.contains_key("n_players") && table.contains_key("price") {
            return Ok(CliConfig {
                game: Some(GameSpec::from_toml_str(&text)?),
                ..CliConfig::default()
            });
        }
        Ok(toml::from_str(&text)?)
    }

    fn overrides(&self) -> Overrides {
        Overrides {
            steps: self.steps,
            eta: self.eta,
            batch: self.batch,
            sigma: self.sigma,
            natural: self.natural,
            baseline: self.baseline,
            schedule: self.schedule,
            theta_init: self.theta_init.clone(),
            probes: self.probes,
            skip_certificates: self.skip_certificates,
            game: self.game.clone(),
        }
    }

    fn apply_run_flags(&mut self, f: &RunFlags) {
        set(&mut self.steps, f.steps);
        set(&mut self.eta, f.eta);
        set(&mut self.batch, f.batch);
        set(&mut self.sigma, f.sigma);
        if f.natural {
            self.natural = Some(true);
        }
        if f.plain {
            self.natural = Some(false);
        }
        if f.no_baseline {
            self.baseline = Some(false);
        }
        if let (Some(t0), Some(floor)) = (f.decay_t0, f.decay_floor) {
            self.schedule = Some(Schedule::InverseTime { t0, floor });
        }
        set(&mut self.theta_init, f.theta_init.clone());
        set(&mut self.probes, f.probes);
        if f.skip_certificates {
            self.skip_certificates = Some(true);
        }
    }

    /// Points the configuration at a scenario id or a configuration file.
    fn target(&mut self, target: &str) -> Result<()> {
        let path = Path::new(target);
        if path.extension().is_some_and(|e| e == "toml") || path.is_file() {
            let file = CliConfig::load(path)?;
            let keep = std::mem::take(self);
            *self = file;
            self.merge_from(keep);
        } else {
            self.scenario = Some(target.to_string());
            self.game = None;
        }
        Ok(())
    }

    /// Fields set in `other` win.
    fn merge_from(&mut self, other: CliConfig) {
        set(&mut self.seed, other.seed);
        set(&mut self.out, other.out);
        set(&mut self.format, other.format);
        set(&mut self.scenario, other.scenario);
        set(&mut self.steps, other.steps);
        set(&mut self.eta, other.eta);
        set(&mut self.batch, other.batch);
        set(&mut self.sigma, other.sigma);
        set(&mut self.natural, other.natural);
        set(&mut self.baseline, other.baseline);
        set(&mut self.schedule, other.schedule);
        set(&mut self.theta_init, other.theta_init);
        set(&mut self.probes, other.probes);
        set(&mut self.skip_certificates, other.skip_certificates);
        set(&mut self.theta, other.theta);
        set(&mut self.method, other.method);
        set(&mut self.nodes, other.nodes);
        set(&mut self.batches, other.batches);
        set(&mut self.samples, other.samples);
        set(&mut self.estimator_probes, other.estimator_probes);
        set(&mut self.scenarios, other.scenarios);
        set(&mut self.seeds, other.seeds);
        set(&mut self.game, other.game);
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn out(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("results"))
    }

    fn format(&self) -> Format {
        self.format.unwrap_or_default()
    }

    fn nodes(&self) -> usize {
        self.nodes.unwrap_or(DEFAULT_NODES)
    }

    /// The scenario named by the configuration: a registered id, or a
    /// custom game dressed as G1 with one learner per player.
    fn scenario(&self) -> Result<Scenario> {
        let mut o = self.overrides();
        let (base, custom) = match (&self.scenario, &self.game) {
            (Some(id), _) => (id.as_str(), false),
            (None, Some(_)) => ("G1", true),
            (None, None) => ("G1", false),
        };
        if !custom {
            o.game = None;
        }
        let mut sc = experiments::scenario(base)?.apply(&o)?;
        if custom {
            sc.id = "custom".into();
        }
        Ok(sc)
    }

    fn echo(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let effective = CliConfig {
            seed: Some(self.seed()),
            ..self.clone()
        };
        std::fs::write(dir.join("cli.toml"), toml::to_string(&effective)?)?;
        Ok(())
    }
}

fn set<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::NoConvergence { .. } | Error::Io(_) => EXIT_RUNTIME,
        _ => EXIT_INPUT,
    }
}

/// Parses `args` (program name first), runs the verb and returns the exit
/// code. Output goes to stdout, diagnostics to stderr.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut out = String::new();
    let code = match execute(cli, &mut out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    print!("{out}");
    code
}

/// Runs a parsed command, appending its report to `out`.
pub fn execute(cli: Cli, out: &mut String) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    cfg.merge_from(CliConfig {
        seed: cli.seed,
        out: cli.out.clone(),
        format: cli.format,
        ..CliConfig::default()
    });
    match cli.command {
        Command::Run { target, flags } => {
            cfg.target(&target)?;
            cfg.apply_run_flags(&flags);
            run(&cfg, out)
        }
        Command::Nash { target, game } => {
            if let Some(t) = target.or(game) {
                cfg.target(&t)?;
            }
            nash(&cfg, out)
        }
        Command::HessianCheck { game, theta, sigma, method, nodes } => {
            if let Some(g) = game {
                cfg.target(&g)?;
            }
            set(&mut cfg.theta, theta);
            set(&mut cfg.sigma, sigma);
            set(&mut cfg.method, method);
            set(&mut cfg.nodes, nodes);
            hessian_check(&cfg, out)
        }
        Command::Bounds { game, sigma, nodes } => {
            if let Some(g) = game {
                cfg.target(&g)?;
            }
            set(&mut cfg.sigma, sigma);
            set(&mut cfg.nodes, nodes);
            bounds(&cfg, out)
        }
        Command::Verify {
            suite,
            game,
            probes,
            sigma,
            nodes,
            batches,
            samples,
            estimator_probes,
        } => {
            let explicit = game.is_some() || cfg.scenario.is_some() || cfg.game.is_some();
            if let Some(g) = game {
                cfg.target(&g)?;
            }
            set(&mut cfg.probes, probes);
            set(&mut cfg.sigma, sigma);
            set(&mut cfg.nodes, nodes);
            set(&mut cfg.batches, batches);
            set(&mut cfg.samples, samples);
            set(&mut cfg.estimator_probes, estimator_probes);
            verify(&cfg, suite, explicit, out)
        }
        Command::Sweep { scenarios, seeds, flags } => {
            set(&mut cfg.scenarios, scenarios);
            set(&mut cfg.seeds, seeds);
            cfg.apply_run_flags(&flags);
            sweep(&cfg, out)
        }
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(" ")
}

fn json_line<T: Serialize>(out: &mut String, v: &T) -> Result<()> {
    out.push_str(&serde_json::to_string_pretty(v)?);
    out.push('\n');
    Ok(())
}

fn run(cfg: &CliConfig, out: &mut String) -> Result<i32> {
    let sc = cfg.scenario()?;
    let seed = cfg.seed();
    let root = cfg.out();
    let record = experiments::run_prepared(&sc, cfg.probes.unwrap_or(DEFAULT_PROBES), seed, Some(&root))?;
    let dir = experiments::result_dir(&root, &sc.id, seed);
    cfg.echo(&dir)?;
    match cfg.format() {
        Format::Json => json_line(out, &record)?,
        Format::Tsv => {
            let m = &record.metrics;
            let _ = writeln!(out, "scenario\t{}", record.scenario);
            let _ = writeln!(out, "seed\t{}", record.seed);
            let _ = writeln!(out, "final_theta\t{}", fmt_vec(&record.final_theta));
            let _ = writeln!(out, "reference\t{}", fmt_vec(&record.reference));
            let _ = writeln!(out, "final_gap\t{:.6e}", m.final_gap);
            let rate = m.rate.map_or("absent".to_string(), |r| format!("{r:.6e}"));
            let r2 = m.r_squared.map_or("absent".to_string(), |r| format!("{r:.6}"));
            let _ = writeln!(out, "rate\t{rate}");
            let _ = writeln!(out, "r_squared\t{r2}");
            let _ = writeln!(out, "last_decile_std\t{}", fmt_vec(&record.last_decile_std));
            for c in &record.certificates {
                let _ = writeln!(out, "certificate\t{}\t{} passed\t{} failed", c.name, c.passed, c.failed);
            }
            let _ = writeln!(out, "output\t{}", dir.display());
        }
    }
    Ok(EXIT_OK)
}

fn nash(cfg: &CliConfig, out: &mut String) -> Result<i32> {
    let sc = cfg.scenario()?;
    let report = sc.game.validate();
    if !report.is_valid() {
        let msg: Vec<String> = report.errors().map(|c| c.message.clone()).collect();
        return Err(Error::InvalidGame(msg.join("; ")));
    }
    let x = game::solve_nash(&sc.game, 1e-12)?;
    let res = game::foc_residuals(&sc.game, &x)?;
    let norm = res.iter().map(|r| r * r).sum::<f64>().sqrt();
    cfg.echo(&cfg.out().join("nash"))?;
    match cfg.format() {
        Format::Json => {
            #[derive(Serialize)]
            struct NashReport<'a> {
                game: &'a str,
                equilibrium: &'a [f64],
                foc_residuals: &'a [f64],
                foc_norm: f64,
            }
            json_line(
                out,
                &NashReport {
                    game: &sc.id,
                    equilibrium: x.as_slice(),
                    foc_residuals: &res,
                    foc_norm: norm,
                },
            )?;
        }
        Format::Tsv => {
            let _ = writeln!(out, "{}", fmt_vec(x.as_slice()));
            let r: Vec<String> = res.iter().map(|v| format!("{v:.3e}")).collect();
            let _ = writeln!(out, "foc_residuals\t{}", r.join(" "));
            let _ = writeln!(out, "foc_norm\t{norm:.3e}");
        }
    }
    Ok(EXIT_OK)
}

fn noises(sc: &Scenario) -> Vec<NoiseSpec> {
    sc.agents.iter().map(|a| a.policy(0.0).noise).collect()
}

#[derive(Serialize)]
struct HessianReport {
    game: String,
    theta: Vec<f64>,
    hessians: Vec<analysis::GameHessian>,
    quadrature_vs_fd: f64,
    certificates: Vec<Certificate>,
    passed: bool,
}

fn hessian_check(cfg: &CliConfig, out: &mut String) -> Result<i32> {
    let sc = cfg.scenario()?;
    let n = sc.game.n_players();
    let theta = match &cfg.theta {
        Some(t) if t.len() == n => t.clone(),
        Some(t) => return Err(Error::Config(format!("theta has {} entries for {n} players", t.len()))),
        None => game::solve_nash(&sc.game, 1e-10)?.into_vec(),
    };
    let profile = PolicyProfile::from_parts(&theta, &noises(&sc))?;
    let nodes = cfg.nodes();
    let primary = match cfg.method.unwrap_or(MethodArg::Quadrature) {
        MethodArg::Quadrature => HessianMethod::Quadrature { nodes },
        MethodArg::Fd => HessianMethod::FiniteDifference { step: FD_STEP, nodes },
        MethodArg::Interior => HessianMethod::Interior { nodes },
    };
    let h = analysis::game_hessian(&sc.game, &profile, primary)?;
    let q = analysis::game_hessian(&sc.game, &profile, HessianMethod::Quadrature { nodes })?;
    let fd = analysis::game_hessian(&sc.game, &profile, HessianMethod::FiniteDifference { step: FD_STEP, nodes })?;
    let diff = q
        .matrix
        .iter()
        .flatten()
        .zip(fd.matrix.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let mut certs = vec![analysis::rosen_check(&h)];
    if n == 2 {
        certs.push(analysis::diag_dominance_check(&h));
        certs.push(analysis::gershgorin_check(&h));
    }
    let passed = certs.iter().all(Certificate::passed) && diff <= 1e-4;
    let report = HessianReport {
        game: sc.id.clone(),
        theta,
        hessians: if primary == q.method { vec![q] } else { vec![h, q] },
        quadrature_vs_fd: diff,
        certificates: certs,
        passed,
    };
    let dir = cfg.out().join("hessian-check");
    cfg.echo(&dir)?;
    std::fs::write(dir.join(format!("{}.json", sc.id)), serde_json::to_string_pretty(&report)?)?;
    match cfg.format() {
        Format::Json => json_line(out, &report)?,
        Format::Tsv => {
            let _ = writeln!(out, "game\t{}", report.game);
            let _ = writeln!(out, "theta\t{}", fmt_vec(&report.theta));
            for row in &report.hessians[0].matrix {
                let cells: Vec<String> = row.iter().map(|v| format!("{v:.6e}")).collect();
                let _ = writeln!(out, "H\t{}", cells.join("\t"));
            }
            let _ = writeln!(out, "quadrature_vs_fd\t{diff:.3e}");
            for c in &report.certificates {
                let _ = writeln!(out, "{:?}\t{:?}\t{}", c.kind, c.verdict, c.message);
            }
        }
    }
    Ok(if passed { EXIT_OK } else { EXIT_CERTIFICATE })
}

#[derive(Serialize)]
struct BoundsRow {
    player: usize,
    lower: Option<f64>,
    upper: f64,
    gradient_below_lower: Option<f64>,
    note: Option<String>,
}

fn bounds(cfg: &CliConfig, out: &mut String) -> Result<i32> {
    let sc = cfg.scenario()?;
    let sigma = cfg.sigma.unwrap_or(SIGMA);
    let noise = NoiseSpec::gaussian(sigma);
    let n = sc.game.n_players();
    let y_max = sc.game.y_max();
    let nodes = cfg.nodes();
    let mut rows = Vec::new();
    for i in 0..n {
        match analysis::theta_bounds(&sc.game, i, noise, nodes) {
            Ok(b) => {
                let p = PolicyProfile::from_parts(&vec![y_max; n], &vec![noise; n])?.with_theta(i, b.lower - 0.01);
                rows.push(BoundsRow {
                    player: i + 1,
                    lower: Some(b.lower),
                    upper: b.upper,
                    gradient_below_lower: Some(stochastic::exact_gradient_with(&sc.game, &p, i, nodes)?),
                    note: None,
                });
            }
            Err(e @ Error::NoSignChange { .. }) => rows.push(BoundsRow {
                player: i + 1,
                lower: None,
                upper: y_max,
                gradient_below_lower: None,
                note: Some(e.to_string()),
            }),
            Err(e) => return Err(e),
        }
    }
    let dir = cfg.out().join("bounds");
    cfg.echo(&dir)?;
    std::fs::write(dir.join(format!("{}.json", sc.id)), serde_json::to_string_pretty(&rows)?)?;
    match cfg.format() {
        Format::Json => json_line(out, &rows)?,
        Format::Tsv => {
            let _ = writeln!(out, "player\tlower\tupper");
            for r in &rows {
                let lower = r.lower.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"));
                let _ = writeln!(out, "{}\t{lower}\t{:.6}", r.player, r.upper);
            }
        }
    }
    Ok(EXIT_OK)
}

/// Estimator tests: score estimates against the exact gradient, and the
/// exact gradient against central differences of the expected payoff.
pub fn estimator_sweep(
    games: &[(String, CournotGame, Vec<NoiseSpec>)],
    probes: usize,
    batches: usize,
    samples: usize,
    seed: u64,
) -> Result<(SweepReport, SweepReport)> {
    let root = Substream::new(seed).child(purpose::PROBES).child(7);
    let mut score = Vec::new();
    let mut fd = Vec::new();
    for k in 0..probes {
        let (_, g, noise) = &games[k % games.len()];
        let n = g.n_players();
        let mut rng = root.child(k as u64).rng();
        let theta: Vec<f64> = (0..n).map(|_| rand::Rng::random_range(&mut rng, 0.0..g.y_max() / n as f64 * 1.5)).collect();
        let i = k % n;
        let profile = PolicyProfile::from_parts(&theta, noise)?;
        score.push(analysis::estimator_check(g, &profile, i, batches, samples, 4.0, seed.wrapping_add(k as u64))?);
        let q = ExpectationMethod::Quadrature { nodes: DEFAULT_NODES };
        let h = 1e-5;
        let up = stochastic::expected_payoff(g, &profile.with_theta(i, theta[i] + h), i, q)?;
        let dn = stochastic::expected_payoff(g, &profile.with_theta(i, theta[i] - h), i, q)?;
        let num = (up - dn) / (2.0 * h);
        let exact = stochastic::exact_gradient(g, &profile, i)?;
        let err = (num - exact).abs();
        fd.push(Certificate {
            kind: CertificateKind::Estimator,
            verdict: if err <= 1e-5 { Verdict::Pass } else { Verdict::Fail },
            message: format!("player {}: |fd - exact| = {err:.3e}", i + 1),
            witness: Witness {
                point: theta,
                values: vec![exact, num],
            },
        });
    }
    Ok((
        SweepReport::new(CertificateKind::Estimator, score),
        SweepReport::new(CertificateKind::Estimator, fd),
    ))
}

fn verify(cfg: &CliConfig, suite: Suite, explicit: bool, out: &mut String) -> Result<i32> {
    let seed = cfg.seed();
    let probes = cfg.probes.unwrap_or(DEFAULT_PROBES);
    let nodes = cfg.nodes();
    let targets: Vec<Scenario> = if explicit {
        vec![cfg.scenario()?]
    } else {
        ["G1", "G2", "G3", "G4"]
            .iter()
            .map(|id| {
                let mut c = cfg.clone();
                c.scenario = Some((*id).into());
                c.scenario()
            })
            .collect::<Result<_>>()?
    };
    let wants = |s: Suite| suite == Suite::All || suite == s;
    let mut reports: Vec<(String, String, SweepReport)> = Vec::new();
    for sc in &targets {
        let n = sc.game.n_players();
        let z = noises(sc);
        let points = analysis::halton_probes(probes, n, PROBE_LO, sc.game.y_max(), seed);
        let method = HessianMethod::Quadrature { nodes };
        let linear = sc.game.price().polynomial().degree() <= 1;
        if wants(Suite::Rosen) && (explicit || linear) {
            reports.push((sc.id.clone(), "rosen".into(), analysis::rosen_sweep(&sc.game, &z, &points, method)?));
        }
        if wants(Suite::Dominance) && (explicit || n == 2) {
            let (d, g) = analysis::dominance_sweep(&sc.game, &z, &points, method)?;
            reports.push((sc.id.clone(), "dominance".into(), d));
            reports.push((sc.id.clone(), "gershgorin".into(), g));
        }
        if wants(Suite::Bounds) {
            let sigma = cfg.sigma.unwrap_or(SIGMA);
            let r = analysis::upper_bound_sweep(&sc.game, NoiseSpec::gaussian(sigma), 50, &[0.0, 0.1, 0.5], seed, nodes)?;
            reports.push((sc.id.clone(), "theta-bound".into(), r));
        }
    }
    if wants(Suite::Estimator) {
        let games: Vec<(String, CournotGame, Vec<NoiseSpec>)> =
            targets.iter().map(|sc| (sc.id.clone(), sc.game.clone(), noises(sc))).collect();
        let (s, f) = estimator_sweep(
            &games,
            cfg.estimator_probes.unwrap_or(10),
            cfg.batches.unwrap_or(200),
            cfg.samples.unwrap_or(10_000),
            seed,
        )?;
        let label = if explicit { targets[0].id.clone() } else { "mixed".into() };
        reports.push((label.clone(), "score-estimator".into(), s));
        reports.push((label, "fd-gradient".into(), f));
    }

    let root = cfg.out().join("verify");
    cfg.echo(&root)?;
    #[derive(Serialize)]
    struct Line<'a> {
        game: &'a str,
        suite: &'a str,
        passed: usize,
        failed: usize,
        first_failure: Option<&'a Certificate>,
    }
    let mut lines = Vec::new();
    for (game, name, r) in &reports {
        let dir = root.join(game);
        std::fs::create_dir_all(&dir)?;
        std::fs::write(dir.join(format!("{name}.json")), serde_json::to_string_pretty(r)?)?;
        lines.push(Line {
            game,
            suite: name,
            passed: r.passed,
            failed: r.failed,
            first_failure: r.first_failure(),
        });
    }
    std::fs::write(root.join("summary.json"), serde_json::to_string_pretty(&lines)?)?;
    match cfg.format() {
        Format::Json => json_line(out, &lines)?,
        Format::Tsv => {
            let _ = writeln!(out, "game\tsuite\tpassed\tfailed\tverdict");
            for l in &lines {
                let v = if l.failed == 0 { "PASS" } else { "FAIL" };
                let _ = writeln!(out, "{}\t{}\t{}\t{}\t{v}", l.game, l.suite, l.passed, l.failed);
                if let Some(c) = l.first_failure {
                    let _ = writeln!(out, "#\twitness\t{}\t{}", fmt_vec(&c.witness.point), c.message);
                }
            }
        }
    }
    let ok = reports.iter().all(|(_, _, r)| r.all_passed());
    Ok(if ok { EXIT_OK } else { EXIT_CERTIFICATE })
}

#[derive(Serialize)]
struct SweepRow {
    scenario: String,
    seed: u64,
    final_gap: f64,
    rate: Option<f64>,
    max_last_decile_std: f64,
}

fn sweep(cfg: &CliConfig, out: &mut String) -> Result<i32> {
    let ids = cfg
        .scenarios
        .clone()
        .unwrap_or_else(|| experiments::SCENARIOS.iter().map(|s| s.to_string()).collect());
    let base = cfg.seed();
    let count = cfg.seeds.unwrap_or(5);
    let root = cfg.out();
    let mut jobs = Vec::new();
    for id in &ids {
        let mut c = cfg.clone();
        c.scenario = Some(id.clone());
        c.game = None;
        let sc = c.scenario()?;
        for s in base..base + count {
            jobs.push((sc.clone(), s));
        }
    }
    let probes = cfg.probes.unwrap_or(DEFAULT_PROBES);
    let records = jobs
        .par_iter()
        .map(|(sc, s)| experiments::run_prepared(sc, probes, *s, Some(&root)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<SweepRow> = records
        .iter()
        .map(|r| SweepRow {
            scenario: r.scenario.clone(),
            seed: r.seed,
            final_gap: r.metrics.final_gap,
            rate: r.metrics.rate,
            max_last_decile_std: r
                .learners
                .iter()
                .map(|&i| r.last_decile_std[i])
                .fold(0.0, f64::max),
        })
        .collect();
    let mut tsv = String::from("scenario\tseed\tfinal_gap\trate\tmax_last_decile_std\n");
    for r in &rows {
        let rate = r.rate.map_or("absent".to_string(), |v| format!("{v:.6e}"));
        let _ = writeln!(tsv, "{}\t{}\t{:.6e}\t{rate}\t{:.6e}", r.scenario, r.seed, r.final_gap, r.max_last_decile_std);
    }
    for id in &ids {
        let gaps: Vec<f64> = rows.iter().filter(|r| r.scenario.eq_ignore_ascii_case(id)).map(|r| r.final_gap).collect();
        if gaps.is_empty() {
            continue;
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        let sd = (gaps.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / gaps.len() as f64).sqrt();
        let _ = writeln!(tsv, "# {id}\tmean_gap\t{mean:.6e}\tstd_gap\t{sd:.6e}");
    }
    std::fs::create_dir_all(&root)?;
    cfg.echo(&root.join("sweep"))?;
    std::fs::write(root.join("sweep").join("sweep.tsv"), &tsv)?;
    std::fs::write(root.join("sweep").join("sweep.json"), serde_json::to_string_pretty(&rows)?)?;
    match cfg.format() {
        Format::Json => json_line(out, &rows)?,
        Format::Tsv => out.push_str(&tsv),
    }
    Ok(EXIT_OK)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::EmptyHorizon), EXIT_INPUT);
        assert_eq!(
            exit_code(&Error::Divergence {
                step: 3,
                reason: "x".into()
            }),
            EXIT_RUNTIME
        );
        assert_eq!(main_with(["cournot", "run", "G9"]), EXIT_INPUT);
        assert_eq!(main_with(["cournot", "frobnicate"]), EXIT_INPUT);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "scenario = \"G2\"\nsteps = 10\neta = 5.0\n").unwrap();
        let mut cfg = CliConfig::load(&p).unwrap();
        cfg.apply_run_flags(&RunFlags {
            steps: Some(20),
            ..RunFlags::default()
        });
        assert_eq!(cfg.steps, Some(20));
        assert_eq!(cfg.eta, Some(5.0));
        let sc = cfg.scenario().unwrap();
        assert_eq!(sc.id, "G2");
        assert_eq!(sc.steps, 20);
    }

    #[test]
    fn bare_game_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.toml");
        let spec = experiments::scenario("G3").unwrap().game.to_spec();
        std::fs::write(&p, spec.to_toml_string().unwrap()).unwrap();
        let cfg = CliConfig::load(&p).unwrap();
        assert_eq!(cfg.game, Some(spec));
        assert_eq!(cfg.scenario().unwrap().id, "custom");
    }
}
