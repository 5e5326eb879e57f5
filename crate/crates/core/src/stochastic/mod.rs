//! Stochastic Cournot layer: rectified mean-parameterized policies, the
//! expected payoff `J_i(theta)`, its exact gradient, and the sampled
//! score-function estimator.

pub mod noise;
pub(crate) mod quadrature;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::CournotGame;
use crate::rng::{purpose, Substream};
pub use noise::{NoiseFamily, NoiseSpec};
pub(crate) use quadrature::RowIntegrals;

/// Largest game the tensor-product quadrature accepts.
pub const MAX_QUADRATURE_PLAYERS: usize = 4;
/// Default number of continuous nodes per rival dimension.
pub const DEFAULT_NODES: usize = 64;
const MC_CHUNK: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub theta: f64,
    pub noise: NoiseSpec,
}

impl Policy {
    pub fn new(theta: f64, noise: NoiseSpec) -> Self {
        Policy { theta, noise }
    }

    pub fn gaussian(theta: f64, sigma: f64) -> Self {
        Policy::new(theta, NoiseSpec::gaussian(sigma))
    }

    /// Draws `theta + X` and returns `(rectified action, raw sample)`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let raw = self.theta + self.noise.sample(rng);
        (raw.max(0.0), raw)
    }
}

/// `max(theta + X, 0)` for one draw of the policy noise.
pub fn sample_action<R: Rng + ?Sized>(policy: &Policy, rng: &mut R) -> f64 {
    policy.draw(rng).0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyProfile {
    policies: Vec<Policy>,
}

impl PolicyProfile {
    pub fn new(policies: Vec<Policy>) -> Self {
        PolicyProfile { policies }
    }

    /// Gaussian policies with a common `sigma`.
    pub fn gaussian(thetas: &[f64], sigma: f64) -> Self {
        PolicyProfile::new(thetas.iter().map(|&t| Policy::gaussian(t, sigma)).collect())
    }

    pub fn from_parts(thetas: &[f64], noises: &[NoiseSpec]) -> Result<Self> {
        if thetas.len() != noises.len() {
            return Err(Error::domain(format!(
                "{} means but {} noise specs",
                thetas.len(),
                noises.len()
            )));
        }
        Ok(PolicyProfile::new(
            thetas.iter().zip(noises).map(|(&t, &n)| Policy::new(t, n)).collect(),
        ))
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn thetas(&self) -> Vec<f64> {
        self.policies.iter().map(|p| p.theta).collect()
    }

    pub fn noises(&self) -> Vec<NoiseSpec> {
        self.policies.iter().map(|p| p.noise).collect()
    }

    pub fn set_theta(&mut self, i: usize, theta: f64) {
        self.policies[i].theta = theta;
    }

    pub fn with_theta(&self, i: usize, theta: f64) -> Self {
        let mut p = self.clone();
        p.set_theta(i, theta);
        p
    }

    pub fn with_thetas(&self, thetas: &[f64]) -> Self {
        let mut p = self.clone();
        for (q, &t) in p.policies.iter_mut().zip(thetas) {
            q.theta = t;
        }
        p
    }

    pub(crate) fn check(&self, game: &CournotGame) -> Result<()> {
        if self.len() != game.n_players() {
            return Err(Error::domain(format!(
                "profile has {} policies for a {}-player game",
                self.len(),
                game.n_players()
            )));
        }
        for (i, p) in self.policies.iter().enumerate() {
            if !p.theta.is_finite() {
                return Err(Error::domain(format!("theta_{i} is not finite")));
            }
            p.noise.check()?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExpectationMethod {
    Quadrature { nodes: usize },
    MonteCarlo { samples: usize, seed: u64 },
}

impl Default for ExpectationMethod {
    fn default() -> Self {
        ExpectationMethod::Quadrature { nodes: DEFAULT_NODES }
    }
}

/// A Monte Carlo mean with its standard error; `std_error` is `None`
/// when fewer than two samples were drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

fn check_player(game: &CournotGame, i: usize) -> Result<()> {
    if i >= game.n_players() {
        return Err(Error::domain(format!("player index {i} out of range")));
    }
    Ok(())
}

pub(crate) fn row(
    game: &CournotGame,
    profile: &PolicyProfile,
    i: usize,
    nodes: usize,
    with_hessian: bool,
) -> Result<RowIntegrals> {
    profile.check(game)?;
    check_player(game, i)?;
    let n = game.n_players();
    if n > MAX_QUADRATURE_PLAYERS {
        return Err(Error::TooManyPlayers {
            n,
            max: MAX_QUADRATURE_PLAYERS,
        });
    }
    if game.price().polynomial().coefficients().len() >= quadrature::MAX_COEFFS {
        return Err(Error::domain("price polynomial degree too high for the quadrature"));
    }
    if nodes == 0 {
        return Err(Error::config("quadrature needs at least one node"));
    }
    for p in profile.policies() {
        p.noise.require_smooth()?;
    }
    Ok(quadrature::row_integrals(
        game,
        &profile.thetas(),
        &profile.noises(),
        i,
        nodes,
        with_hessian,
    ))
}

/// Expected payoff `J_i = E[p(sum a) a_i - C_i(a_i)]` with
/// `a_j = (theta_j + X_j)^+`.
pub fn expected_payoff(game: &CournotGame, profile: &PolicyProfile, i: usize, method: ExpectationMethod) -> Result<f64> {
    match method {
        ExpectationMethod::Quadrature { nodes } => Ok(row(game, profile, i, nodes, false)?.payoff),
        ExpectationMethod::MonteCarlo { samples, seed } => {
            Ok(expected_payoff_mc(game, profile, i, samples, seed)?.value)
        }
    }
}

/// Monte Carlo estimate of `J_i` over `samples` joint draws.
pub fn expected_payoff_mc(game: &CournotGame, profile: &PolicyProfile, i: usize, samples: usize, seed: u64) -> Result<Estimate> {
    profile.check(game)?;
    check_player(game, i)?;
    let stream = Substream::new(seed).path(&[purpose::MONTE_CARLO, 0]);
    Ok(mc_mean(game, profile, samples, stream, |a, _| {
        let y: f64 = a.iter().sum();
        game.price().value(y) * a[i] - game.cost(i).value(a[i])
    }))
}

/// Exact `dJ_i / d theta_i` by quadrature with the default node count.
pub fn exact_gradient(game: &CournotGame, profile: &PolicyProfile, i: usize) -> Result<f64> {
    exact_gradient_with(game, profile, i, DEFAULT_NODES)
}

pub fn exact_gradient_with(game: &CournotGame, profile: &PolicyProfile, i: usize, nodes: usize) -> Result<f64> {
    Ok(row(game, profile, i, nodes, false)?.gradient)
}

/// Own-gradients of every player.
pub fn exact_gradients(game: &CournotGame, profile: &PolicyProfile, nodes: usize) -> Result<Vec<f64>> {
    (0..game.n_players())
        .map(|i| exact_gradient_with(game, profile, i, nodes))
        .collect()
}

/// Monte Carlo average of the pathwise gradient integrand
/// `1(theta_i + X_i > 0) (p'(y) a_i + p(y) - C_i'(a_i))`.
pub fn gradient_mc(game: &CournotGame, profile: &PolicyProfile, i: usize, samples: usize, seed: u64) -> Result<Estimate> {
    profile.check(game)?;
    check_player(game, i)?;
    let stream = Substream::new(seed).path(&[purpose::MONTE_CARLO, 1]);
    Ok(mc_mean(game, profile, samples, stream, |a, raw| {
        if raw[i] <= 0.0 {
            return 0.0;
        }
        let y: f64 = a.iter().sum();
        let p = game.price();
        p.derivative(y) * a[i] + p.value(y) - game.cost(i).derivative(a[i])
    }))
}

#[derive(Clone, Copy, Default)]
struct Welford {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Welford) -> Welford {
        if o.n == 0 {
            return self;
        }
        if self.n == 0 {
            return o;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        Welford {
            n,
            mean: self.mean + d * o.n as f64 / n as f64,
            m2: self.m2 + o.m2 + d * d * (self.n as f64 * o.n as f64) / n as f64,
        }
    }

    fn estimate(&self) -> Estimate {
        let std_error = (self.n > 1).then(|| (self.m2 / (self.n - 1) as f64 / self.n as f64).sqrt());
        Estimate {
            value: if self.n == 0 { f64::NAN } else { self.mean },
            std_error,
        }
    }
}

/// Parallel Monte Carlo mean of `f(actions, raw samples)`. Chunks own
/// independent substreams and are reduced in index order, so the result
/// is identical for any thread count.
fn mc_mean<F>(game: &CournotGame, profile: &PolicyProfile, samples: usize, stream: Substream, f: F) -> Estimate
where
    F: Fn(&[f64], &[f64]) -> f64 + Sync,
{
    let n = game.n_players();
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Welford> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).rng();
            let count = MC_CHUNK.min(samples - c * MC_CHUNK);
            let mut a = vec![0.0; n];
            let mut raw = vec![0.0; n];
            let mut w = Welford::default();
            for _ in 0..count {
                for (j, p) in profile.policies().iter().enumerate() {
                    (a[j], raw[j]) = p.draw(&mut rng);
                }
                w.push(f(&a, &raw));
            }
            w
        })
        .collect();
    parts.into_iter().fold(Welford::default(), Welford::merge).estimate()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub batch: usize,
    /// Subtract a running mean of the observed payoffs.
    pub baseline: bool,
    /// Baseline used for the first sample of the batch, typically the
    /// previous batch's mean payoff.
    pub prior_baseline: f64,
}

impl ScoreOptions {
    pub fn new(batch: usize) -> Self {
        ScoreOptions {
            batch,
            baseline: true,
            prior_baseline: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreEstimate {
    pub estimate: f64,
    pub std_error: Option<f64>,
    /// Mean observed payoff of the batch.
    pub mean_payoff: f64,
}

/// Score-function estimate of `dJ_i / d theta_i` from `batch` joint
/// rounds, with the running-mean baseline enabled.
pub fn score_gradient_estimate(
    game: &CournotGame,
    profile: &PolicyProfile,
    i: usize,
    batch: usize,
    stream: Substream,
) -> Result<ScoreEstimate> {
    score_gradient_estimate_with(game, profile, i, &ScoreOptions::new(batch), stream)
}

/// Each round draws every player's action, observes player `i`'s payoff
/// and weights it by the Gaussian score `(x - theta_i) / sigma_i^2` taken
/// at the unrectified sample `x`. The baseline for round `k` only uses
/// rounds before `k`, which keeps the estimator unbiased.
pub fn score_gradient_estimate_with(
    game: &CournotGame,
    profile: &PolicyProfile,
    i: usize,
    opts: &ScoreOptions,
    stream: Substream,
) -> Result<ScoreEstimate> {
    profile.check(game)?;
    check_player(game, i)?;
    let own = profile.policies()[i];
    if !own.noise.family.has_score() {
        return Err(Error::ScoreUndefined(format!("{:?} noise", own.noise.family).to_lowercase()));
    }
    own.noise.require_smooth()?;
    if opts.batch == 0 {
        return Err(Error::config("batch must be at least 1"));
    }
    let observations = observe_rounds(game, profile, i, opts.batch, stream);
    Ok(combine_score(&observations, own, opts))
}

/// `(payoff of i, raw sample of i)` for each round, in round order.
pub(crate) fn observe_rounds(
    game: &CournotGame,
    profile: &PolicyProfile,
    i: usize,
    batch: usize,
    stream: Substream,
) -> Vec<(f64, f64)> {
    let n = game.n_players();
    let chunks = batch.div_ceil(MC_CHUNK);
    let parts: Vec<Vec<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream.child(c as u64).rng();
            let count = MC_CHUNK.min(batch - c * MC_CHUNK);
            let mut a = vec![0.0; n];
            let mut raw = vec![0.0; n];
            (0..count)
                .map(|_| {
                    for (j, p) in profile.policies().iter().enumerate() {
                        (a[j], raw[j]) = p.draw(&mut rng);
                    }
                    let y: f64 = a.iter().sum();
                    let pi = game.price().value(y) * a[i] - game.cost(i).value(a[i]);
                    (pi, raw[i])
                })
                .collect()
        })
        .collect();
    parts.concat()
}

pub(crate) fn combine_score(observations: &[(f64, f64)], own: Policy, opts: &ScoreOptions) -> ScoreEstimate {
    let var = own.noise.sigma * own.noise.sigma;
    let mut terms = Welford::default();
    let mut payoffs = Welford::default();
    for &(pi, x) in observations {
        let b = match (opts.baseline, payoffs.n) {
            (false, _) => 0.0,
            (true, 0) => opts.prior_baseline,
            (true, _) => payoffs.mean,
        };
        terms.push((pi - b) * (x - own.theta) / var);
        payoffs.push(pi);
    }
    let e = terms.estimate();
    ScoreEstimate {
        estimate: e.value,
        std_error: e.std_error,
        mean_payoff: payoffs.mean,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StochasticNashOptions {
    pub tol: f64,
    pub nodes: usize,
    pub max_iters: usize,
    pub step: f64,
}

impl Default for StochasticNashOptions {
    fn default() -> Self {
        StochasticNashOptions {
            tol: 1e-10,
            nodes: DEFAULT_NODES,
            max_iters: 10_000,
            step: 0.5,
        }
    }
}

/// Mean profile `theta*` with `dJ_i / d theta_i = 0` for every player,
/// under Gaussian noise of the given standard deviations.
pub fn stochastic_nash(game: &CournotGame, sigmas: &[f64], tol: f64) -> Result<Vec<f64>> {
    let noises: Vec<NoiseSpec> = sigmas.iter().map(|&s| NoiseSpec::gaussian(s)).collect();
    let start = crate::game::solve_nash(game, 1e-10)?.into_vec();
    let profile = PolicyProfile::from_parts(&start, &noises)?;
    let free = vec![true; game.n_players()];
    stochastic_nash_partial(
        game,
        &profile,
        &free,
        &StochasticNashOptions {
            tol,
            ..StochasticNashOptions::default()
        },
    )
}

/// Damped simultaneous gradient ascent on the players marked `free`,
/// starting from `profile`; the other policies stay as given. The step is
/// halved whenever the residual `max |g_i|` grows and slowly restored
/// otherwise.
pub fn stochastic_nash_partial(
    game: &CournotGame,
    profile: &PolicyProfile,
    free: &[bool],
    opts: &StochasticNashOptions,
) -> Result<Vec<f64>> {
    let n = game.n_players();
    if free.len() != n {
        return Err(Error::domain("free mask length differs from the number of players"));
    }
    let grads = |theta: &[f64]| -> Result<Vec<f64>> {
        let p = profile.with_thetas(theta);
        (0..n)
            .map(|i| {
                if free[i] {
                    exact_gradient_with(game, &p, i, opts.nodes)
                } else {
                    Ok(0.0)
                }
            })
            .collect()
    };
    let residual = |g: &[f64]| g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut theta = profile.thetas();
    let mut g = grads(&theta)?;
    let mut r = residual(&g);
    let mut step = opts.step;
    for _ in 0..opts.max_iters {
        if r <= opts.tol {
            return Ok(theta);
        }
        let trial: Vec<f64> = theta.iter().zip(&g).map(|(t, gi)| t + step * gi).collect();
        let gt = grads(&trial)?;
        let rt = residual(&gt);
        if rt < r || step < 1e-6 {
            theta = trial;
            g = gt;
            r = rt;
            step = (step * 1.2).min(opts.step);
        } else {
            step *= 0.5;
        }
    }
    if r <= opts.tol {
        return Ok(theta);
    }
    Err(Error::NoConvergence {
        what: "stochastic Nash gradient ascent",
        iterations: opts.max_iters,
        residual: r,
        last: theta,
    })
}
