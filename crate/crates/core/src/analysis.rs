//! Game Hessians and numerical certificates for the convergence
//! conditions: Rosen's negative definiteness, strict diagonal dominance,
//! Gershgorin discs, the compact range of useful means, and the
//! definiteness of smoothed Hessians.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::CournotGame;
use crate::rng::{purpose, Substream};
use crate::stochastic::{self, NoiseSpec, PolicyProfile, DEFAULT_NODES};

/// Strictness margin for every definiteness verdict.
pub const EPS: f64 = 1e-10;
/// Default finite-difference step on the means.
pub const FD_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HessianMethod {
    /// Exact derivative of the gradient map: interior second derivatives
    /// plus the boundary terms from the rectification and the price kink.
    Quadrature { nodes: usize },
    /// Central differences of the quadrature gradients.
    FiniteDifference { step: f64, nodes: usize },
    /// Expectation of the pointwise second derivatives alone,
    /// `1(a_i > 0) 1(a_j > 0) (p'' a_i + p' (1 + [i = j]) - C_i'' [i = j])`
    /// on the priced region.
    Interior { nodes: usize },
}

impl Default for HessianMethod {
    fn default() -> Self {
        HessianMethod::Quadrature { nodes: DEFAULT_NODES }
    }
}

/// `matrix[i][j] = d^2 J_i / d theta_i d theta_j` at `at_theta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameHessian {
    pub matrix: Vec<Vec<f64>>,
    pub at_theta: Vec<f64>,
    pub method: HessianMethod,
}

impl GameHessian {
    pub fn from_rows(matrix: Vec<Vec<f64>>) -> Self {
        let n = matrix.len();
        GameHessian {
            matrix,
            at_theta: vec![f64::NAN; n],
            method: HessianMethod::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.matrix.len()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.matrix[i][i]).collect()
    }

    /// Eigenvalues of `H + H^T` in ascending order.
    pub fn symmetrized_eigenvalues(&self) -> Vec<f64> {
        let n = self.n();
        let m = DMatrix::from_fn(n, n, |i, j| self.matrix[i][j] + self.matrix[j][i]);
        sorted_eigenvalues(m)
    }
}

fn sorted_eigenvalues(m: DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn game_hessian(game: &CournotGame, profile: &PolicyProfile, method: HessianMethod) -> Result<GameHessian> {
    let n = game.n_players();
    let matrix = match method {
        HessianMethod::Quadrature { nodes } | HessianMethod::Interior { nodes } => (0..n)
            .into_par_iter()
            .map(|i| {
                let r = stochastic::row(game, profile, i, nodes, true)?;
                Ok(if matches!(method, HessianMethod::Interior { .. }) {
                    r.interior
                } else {
                    r.hessian
                })
            })
            .collect::<Result<Vec<_>>>()?,
        HessianMethod::FiniteDifference { step, nodes } => {
            if !(step > 0.0) {
                return Err(Error::config("finite-difference step must be positive"));
            }
            let theta = profile.thetas();
            let mut m = vec![vec![0.0; n]; n];
            for j in 0..n {
                let up = profile.with_theta(j, theta[j] + step);
                let down = profile.with_theta(j, theta[j] - step);
                for (i, row) in m.iter_mut().enumerate() {
                    let gu = stochastic::exact_gradient_with(game, &up, i, nodes)?;
                    let gd = stochastic::exact_gradient_with(game, &down, i, nodes)?;
                    row[j] = (gu - gd) / (2.0 * step);
                }
            }
            m
        }
    };
    Ok(GameHessian {
        matrix,
        at_theta: profile.thetas(),
        method,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateKind {
    Rosen,
    DiagDominance,
    Gershgorin,
    ThetaBound,
    Smoothing,
    Estimator,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Verdict {
    fn from_bool(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }
}

/// Evidence behind a verdict: the evaluation point and the quantities the
/// verdict was read from (eigenvalues, row margins, disc edges, ...).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub kind: CertificateKind,
    pub verdict: Verdict,
    pub witness: Witness,
    pub message: String,
}

impl Certificate {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Passes iff `lambda_max(H + H^T) < -EPS`.
pub fn rosen_check(h: &GameHessian) -> Certificate {
    let ev = h.symmetrized_eigenvalues();
    let top = ev.last().copied().unwrap_or(f64::NAN);
    Certificate {
        kind: CertificateKind::Rosen,
        verdict: Verdict::from_bool(top < -EPS),
        message: format!("lambda_max(H + H^T) = {top:.6e}"),
        witness: Witness {
            point: h.at_theta.clone(),
            values: ev,
        },
    }
}

/// Passes iff `|H_ii| - sum_{j != i} |H_ij| > EPS` for every row. The
/// witness values are these row margins.
pub fn diag_dominance_check(h: &GameHessian) -> Certificate {
    let margins: Vec<f64> = h
        .matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let off: f64 = row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum();
            row[i].abs() - off
        })
        .collect();
    let worst = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let ok = margins.iter().all(|&m| m > EPS);
    let mut message = format!("smallest row margin {worst:.6e}");
    if h.n() != 2 {
        message.push_str(" (informational for N != 2)");
    }
    Certificate {
        kind: CertificateKind::DiagDominance,
        verdict: Verdict::from_bool(ok),
        message,
        witness: Witness {
            point: h.at_theta.clone(),
            values: margins,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disc {
    pub center: f64,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GershgorinReport {
    pub discs: Vec<Disc>,
    /// Every disc lies in `Re z < -EPS`.
    pub all_left: bool,
}

pub fn gershgorin_bounds(h: &GameHessian) -> GershgorinReport {
    let discs: Vec<Disc> = h
        .matrix
        .iter()
        .enumerate()
        .map(|(i, row)| Disc {
            center: row[i],
            radius: row.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, v)| v.abs()).sum(),
        })
        .collect();
    let all_left = discs.iter().all(|d| d.center + d.radius < -EPS);
    GershgorinReport { discs, all_left }
}

/// Certificate form of [`gershgorin_bounds`]; witness values are the
/// right edges `center + radius`.
pub fn gershgorin_check(h: &GameHessian) -> Certificate {
    let r = gershgorin_bounds(h);
    let edges: Vec<f64> = r.discs.iter().map(|d| d.center + d.radius).collect();
    let right = edges.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Certificate {
        kind: CertificateKind::Gershgorin,
        verdict: Verdict::from_bool(r.all_left),
        message: format!("rightmost disc edge {right:.6e}"),
        witness: Witness {
            point: h.at_theta.clone(),
            values: edges,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaBounds {
    pub lower: f64,
    pub upper: f64,
}

/// Range of means worth considering for player `i`. The upper end is
/// `y_max`. The lower end is where the gradient of player `i`, with every
/// opponent's mean at `y_max`, first becomes non-negative when scanning
/// down from 0.
pub fn theta_bounds(game: &CournotGame, i: usize, noise: NoiseSpec, nodes: usize) -> Result<ThetaBounds> {
    let n = game.n_players();
    if i >= n {
        return Err(Error::domain(format!("player index {i} out of range")));
    }
    let y_max = game.y_max();
    let profile = PolicyProfile::from_parts(&vec![y_max; n], &vec![noise; n])?;
    let grad = |t: f64| stochastic::exact_gradient_with(game, &profile.with_theta(i, t), i, nodes);
    let floor = -10.0 * y_max;
    let step = y_max / 100.0;
    let mut hi = 0.0;
    if grad(hi)? >= 0.0 {
        return Ok(ThetaBounds { lower: 0.0, upper: y_max });
    }
    loop {
        let lo = (hi - step).max(floor);
        if grad(lo)? >= 0.0 {
            // grad(hi) < 0 <= grad(lo)
            let (mut a, mut b) = (lo, hi);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                if grad(m)? >= 0.0 {
                    a = m;
                } else {
                    b = m;
                }
            }
            return Ok(ThetaBounds { lower: a, upper: y_max });
        }
        if lo <= floor {
            return Err(Error::NoSignChange { lo: floor, hi: 0.0 });
        }
        hi = lo;
    }
}

const PRIMES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

fn radical_inverse(mut k: u64, base: u64) -> f64 {
    let (mut inv, mut f) = (0.0, 1.0 / base as f64);
    while k > 0 {
        inv += (k % base) as f64 * f;
        k /= base;
        f /= base as f64;
    }
    inv
}

/// `count` Halton points in the box `[lo, hi]^dim`, with a seeded
/// Cranley–Patterson rotation.
pub fn halton_probes(count: usize, dim: usize, lo: f64, hi: f64, seed: u64) -> Vec<Vec<f64>> {
    assert!(dim <= PRIMES.len(), "at most {} probe dimensions", PRIMES.len());
    let s = Substream::new(seed).child(purpose::PROBES);
    let shift: Vec<f64> = (0..dim).map(|d| s.child(d as u64).unit()).collect();
    (1..=count as u64)
        .map(|k| {
            (0..dim)
                .map(|d| {
                    let u = (radical_inverse(k, PRIMES[d]) + shift[d]).fract();
                    lo + (hi - lo) * u
                })
                .collect()
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: CertificateKind,
    pub certificates: Vec<Certificate>,
    pub passed: usize,
    pub failed: usize,
}

impl SweepReport {
    pub fn new(kind: CertificateKind, certificates: Vec<Certificate>) -> Self {
        let passed = certificates.iter().filter(|c| c.passed()).count();
        SweepReport {
            kind,
            failed: certificates.len() - passed,
            passed,
            certificates,
        }
    }

    pub fn all_passed(&self) -> bool {
        self.failed == 0
    }

    pub fn first_failure(&self) -> Option<&Certificate> {
        self.certificates.iter().find(|c| !c.passed())
    }
}

/// Hessians at every probe, evaluated in parallel and returned in probe
/// order.
pub fn hessians_at(
    game: &CournotGame,
    noises: &[NoiseSpec],
    probes: &[Vec<f64>],
    method: HessianMethod,
) -> Result<Vec<GameHessian>> {
    probes
        .par_iter()
        .map(|theta| game_hessian(game, &PolicyProfile::from_parts(theta, noises)?, method))
        .collect()
}

pub fn rosen_sweep(game: &CournotGame, noises: &[NoiseSpec], probes: &[Vec<f64>], method: HessianMethod) -> Result<SweepReport> {
    let hs = hessians_at(game, noises, probes, method)?;
    Ok(SweepReport::new(CertificateKind::Rosen, hs.iter().map(rosen_check).collect()))
}

/// Diagonal dominance and Gershgorin certificates at every probe.
pub fn dominance_sweep(
    game: &CournotGame,
    noises: &[NoiseSpec],
    probes: &[Vec<f64>],
    method: HessianMethod,
) -> Result<(SweepReport, SweepReport)> {
    let hs = hessians_at(game, noises, probes, method)?;
    Ok((
        SweepReport::new(CertificateKind::DiagDominance, hs.iter().map(diag_dominance_check).collect()),
        SweepReport::new(CertificateKind::Gershgorin, hs.iter().map(gershgorin_check).collect()),
    ))
}

/// Checks that every player's gradient is negative at `theta_i = y_max +
/// delta` for opponents' means drawn from `[0, y_max]^(N-1)`.
pub fn upper_bound_sweep(
    game: &CournotGame,
    noise: NoiseSpec,
    count: usize,
    deltas: &[f64],
    seed: u64,
    nodes: usize,
) -> Result<SweepReport> {
    let n = game.n_players();
    let y_max = game.y_max();
    let opponents = halton_probes(count, n.saturating_sub(1).max(1), 0.0, y_max, seed);
    let mut jobs = Vec::new();
    for i in 0..n {
        for &d in deltas {
            for o in &opponents {
                let mut theta: Vec<f64> = o[..n - 1].to_vec();
                theta.insert(i, y_max + d);
                jobs.push((i, theta));
            }
        }
    }
    let certs = jobs
        .par_iter()
        .map(|(i, theta)| {
            let p = PolicyProfile::from_parts(theta, &vec![noise; n])?;
            let g = stochastic::exact_gradient_with(game, &p, *i, nodes)?;
            Ok(Certificate {
                kind: CertificateKind::ThetaBound,
                verdict: Verdict::from_bool(g < 0.0),
                message: format!("player {} gradient {g:.6e}", i + 1),
                witness: Witness {
                    point: theta.clone(),
                    values: vec![*i as f64, g],
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::new(CertificateKind::ThetaBound, certs))
}

/// The deterministic Hessian of a linear-price game at an action point,
/// split as `G1 + G2 + G3` over the producing players: `G1 = p' 11^T`,
/// `G2 = p' I` and `G3 = -diag(C'')`, all zero outside the producing
/// block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianBlocks {
    pub g1: Vec<Vec<f64>>,
    pub g2: Vec<Vec<f64>>,
    pub g3: Vec<Vec<f64>>,
}

impl HessianBlocks {
    pub fn total(&self) -> Vec<Vec<f64>> {
        let n = self.g1.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.g1[i][j] + self.g2[i][j] + self.g3[i][j]).collect())
            .collect()
    }
}

fn require_linear(game: &CournotGame) -> Result<()> {
    if game.price().polynomial().degree() > 1 {
        return Err(Error::domain("the block decomposition needs a linear price"));
    }
    Ok(())
}

pub fn deterministic_blocks(game: &CournotGame, x: &[f64]) -> Result<HessianBlocks> {
    require_linear(game)?;
    let n = game.n_players();
    if x.len() != n {
        return Err(Error::domain("action point length differs from the number of players"));
    }
    let y: f64 = x.iter().sum();
    let slope = game.price().derivative(y);
    let on: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let mut g1 = vec![vec![0.0; n]; n];
    let mut g2 = vec![vec![0.0; n]; n];
    let mut g3 = vec![vec![0.0; n]; n];
    for i in (0..n).filter(|&i| on[i]) {
        for j in (0..n).filter(|&j| on[j]) {
            g1[i][j] = slope;
        }
        g2[i][i] = slope;
        g3[i][i] = -game.cost(i).second_derivative(x[i]);
    }
    Ok(HessianBlocks { g1, g2, g3 })
}

/// Ascending eigenvalues of `(M + M^T) / 2`.
pub fn symmetric_eigenvalues(m: &[Vec<f64>]) -> Vec<f64> {
    let n = m.len();
    sorted_eigenvalues(DMatrix::from_fn(n, n, |i, j| 0.5 * (m[i][j] + m[j][i])))
}

/// Checks, for a linear-price game, that (a) the blocks `G1`, `G2`, `G3`
/// are negative semidefinite at `n_probes` random action points in
/// `[0, y_max]^N`, and (b) the smoothed interior Hessian has `G + G^T`
/// negative definite at `n_probes` random means with
/// `sum theta <= y_max`.
pub fn smoothing_definiteness_test(game: &CournotGame, sigma: f64, n_probes: usize, seed: u64) -> Result<Certificate> {
    require_linear(game)?;
    let n = game.n_players();
    let y_max = game.y_max();
    let root = Substream::new(seed).child(purpose::PROBES);
    let mut rng = root.child(0).rng();
    use rand::Rng;
    let mut worst_block = f64::NEG_INFINITY;
    let mut witness_point = Vec::new();
    for _ in 0..n_probes {
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..y_max)).collect();
        let b = deterministic_blocks(game, &x)?;
        for m in [&b.g1, &b.g2, &b.g3] {
            let top = symmetric_eigenvalues(m).last().copied().unwrap_or(0.0);
            if top > worst_block {
                worst_block = top;
                witness_point = x.clone();
            }
        }
    }
    let block_ok = worst_block <= EPS;

    let mut thetas = Vec::with_capacity(n_probes);
    let mut rng = root.child(1).rng();
    while thetas.len() < n_probes {
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..y_max)).collect();
        if t.iter().sum::<f64>() <= y_max {
            thetas.push(t);
        }
    }
    let noises = vec![NoiseSpec::gaussian(sigma); n];
    let hs = hessians_at(game, &noises, &thetas, HessianMethod::Interior { nodes: DEFAULT_NODES })?;
    let mut worst_smooth = f64::NEG_INFINITY;
    let mut smooth_point = Vec::new();
    for h in &hs {
        let top = *h.symmetrized_eigenvalues().last().unwrap();
        if top > worst_smooth {
            worst_smooth = top;
            smooth_point = h.at_theta.clone();
        }
    }
    let smooth_ok = worst_smooth < -EPS;
    let ok = block_ok && smooth_ok;
    let point = if !block_ok { witness_point } else { smooth_point };
    Ok(Certificate {
        kind: CertificateKind::Smoothing,
        verdict: Verdict::from_bool(ok),
        message: format!(
            "max block eigenvalue {worst_block:.3e}; max smoothed eigenvalue {worst_smooth:.3e}"
        ),
        witness: Witness {
            point,
            values: vec![worst_block, worst_smooth],
        },
    })
}

/// Compares the mean of `batches` independent score estimates of `batch`
/// rounds each against the exact gradient; passes within `k` combined
/// standard errors.
pub fn estimator_check(
    game: &CournotGame,
    profile: &PolicyProfile,
    i: usize,
    batches: usize,
    batch: usize,
    k: f64,
    seed: u64,
) -> Result<Certificate> {
    let exact = stochastic::exact_gradient(game, profile, i)?;
    let root = Substream::new(seed).child(purpose::SCORE);
    let ests = (0..batches)
        .into_par_iter()
        .map(|b| stochastic::score_gradient_estimate(game, profile, i, batch, root.child(b as u64)))
        .collect::<Result<Vec<_>>>()?;
    let mean = ests.iter().map(|e| e.estimate).sum::<f64>() / batches as f64;
    let var: f64 = ests.iter().map(|e| e.std_error.unwrap_or(f64::NAN).powi(2)).sum();
    let se = var.sqrt() / batches as f64;
    let z = (mean - exact) / se;
    Ok(Certificate {
        kind: CertificateKind::Estimator,
        verdict: Verdict::from_bool(z.abs() <= k),
        message: format!("player {}: mean {mean:.6e}, exact {exact:.6e}, z = {z:.3}", i + 1),
        witness: Witness {
            point: profile.thetas(),
            values: vec![mean, exact, se],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::game::{CostFunction, PriceFunction};

    #[test]
    fn rosen_examples() {
        assert!(rosen_check(&GameHessian::from_rows(vec![vec![-2.0, -1.0], vec![-1.0, -2.0]])).passed());
        let c = rosen_check(&GameHessian::from_rows(vec![vec![0.0; 2]; 2]));
        assert!(!c.passed());
        assert_eq!(c.witness.values, vec![0.0, 0.0]);
        let ev = GameHessian::from_rows(vec![vec![-2.0, -1.0], vec![-1.0, -2.0]]).symmetrized_eigenvalues();
        assert!((ev[0] + 6.0).abs() < 1e-12 && (ev[1] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn dominance_and_discs() {
        assert!(diag_dominance_check(&GameHessian::from_rows(vec![vec![-2.0, -1.0], vec![-1.0, -2.0]])).passed());
        assert!(!diag_dominance_check(&GameHessian::from_rows(vec![vec![-1.0, -1.0], vec![-1.0, -1.0]])).passed());
        let r = gershgorin_bounds(&GameHessian::from_rows(vec![vec![-4.0, 1.0], vec![1.0, -2.0]]));
        assert_eq!(r.discs, vec![Disc { center: -4.0, radius: 1.0 }, Disc { center: -2.0, radius: 1.0 }]);
        assert!(r.all_left);
        assert!(!gershgorin_bounds(&GameHessian::from_rows(vec![vec![0.0; 2]; 2])).all_left);
    }

    #[test]
    fn duopoly_blocks() {
        let game = CournotGame::new(PriceFunction::linear(1.0, 1.0).unwrap(), vec![CostFunction::zero(); 2]).unwrap();
        let b = deterministic_blocks(&game, &[0.3, 0.3]).unwrap();
        let ev = symmetric_eigenvalues(&b.g1);
        assert!((ev[0] + 2.0).abs() < 1e-12 && ev[1].abs() < 1e-12);
        assert_eq!(b.total(), vec![vec![-2.0, -1.0], vec![-1.0, -2.0]]);
    }

    #[test]
    fn halton_points_stay_in_box() {
        let p = halton_probes(100, 3, -0.2, 1.0, 11);
        assert_eq!(p.len(), 100);
        assert!(p.iter().flatten().all(|&v| (-0.2..1.0).contains(&v)));
        assert_eq!(p, halton_probes(100, 3, -0.2, 1.0, 11));
    }
}
