//! Deterministic evaluation of the rectified expectations.
//!
//! Each action `a_j = (theta_j + sigma_j z_j)^+` has an atom at zero and a
//! continuous part. For the player `i` that owns a payoff row, the other
//! players are integrated by nested Gauss–Legendre rules; every level is
//! split at the point where total production reaches `y_max`, where the
//! clamped price has its kink. The owner's own coordinate is integrated in
//! closed form: given the rivals' total `S`, every integrand is a
//! polynomial in `a_i` on `(0, y_max - S)` and on `(y_max - S, inf)`, so it
//! reduces to truncated moments of the noise density.
//!
//! The Hessian row carries two parts. The interior part integrates the
//! pointwise second derivatives of the deterministic payoff. The boundary
//! part comes from the jumps of the first derivative: at `a_i = 0`, where
//! the rectification switches production on, and at total production
//! `y_max`, where `p'` drops to zero. Their sum is the exact derivative of
//! the gradient row.

use std::sync::OnceLock;

use super::noise::{NoiseFamily, NoiseSpec};
use crate::game::CournotGame;

const MAX_RULE: usize = 256;

pub(crate) struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    fn compute(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 0 { 1.0 } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
        }
        GaussLegendre { nodes, weights }
    }

    pub fn get(n: usize) -> &'static GaussLegendre {
        static CACHE: [OnceLock<GaussLegendre>; MAX_RULE + 1] = [const { OnceLock::new() }; MAX_RULE + 1];
        let n = n.clamp(1, MAX_RULE);
        CACHE[n].get_or_init(|| GaussLegendre::compute(n))
    }
}

/// One node of a rectified marginal: an action value, its weight, and
/// whether it comes from the continuous part (production switched on).
#[derive(Clone, Copy, Debug)]
pub(crate) struct Node {
    pub action: f64,
    pub weight: f64,
    pub active: bool,
}

/// Discretizes the law of `(theta + X)^+` with `budget` continuous nodes,
/// split at action `breakpoint`.
pub(crate) fn rectified_nodes(theta: f64, noise: NoiseSpec, breakpoint: f64, budget: usize, out: &mut Vec<Node>) {
    out.clear();
    let fam = noise.family;
    let sigma = noise.sigma;
    let z0 = -theta / sigma;
    let atom = fam.cdf(z0);
    if atom > 0.0 {
        out.push(Node {
            action: 0.0,
            weight: atom,
            active: false,
        });
    }
    let (wl, wh) = fam.window();
    let lo = z0.max(wl);
    if !(wh > lo) {
        return;
    }
    let zc = (breakpoint - theta) / sigma;
    let mut pieces = [(lo, wh), (0.0, 0.0)];
    let mut count = 1;
    if zc > lo && zc < wh {
        pieces = [(lo, zc), (zc, wh)];
        count = 2;
    }
    let total: f64 = pieces[..count].iter().map(|(a, b)| b - a).sum();
    let mut remaining = budget.max(count);
    for (k, &(a, b)) in pieces[..count].iter().enumerate() {
        let n = if k + 1 == count {
            remaining
        } else {
            let share = (budget as f64 * (b - a) / total).round() as usize;
            share.clamp((budget / 4).max(1), remaining - 1)
        };
        remaining -= n;
        let rule = GaussLegendre::get(n);
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        for (t, w) in rule.nodes.iter().zip(&rule.weights) {
            let z = mid + half * t;
            let weight = w * half * fam.pdf(z);
            if weight > 0.0 {
                out.push(Node {
                    action: theta + sigma * z,
                    weight,
                    active: true,
                });
            }
        }
    }
}

/// Expected payoff, gradient and Hessian row of one player.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct RowIntegrals {
    pub payoff: f64,
    pub gradient: f64,
    /// Exact row `d g_i / d theta_j` (interior plus boundary terms).
    pub hessian: Vec<f64>,
    /// Pointwise second derivatives of the deterministic payoff, averaged.
    pub interior: Vec<f64>,
}

/// Longest coefficient list handled by the owner integration: payoff
/// integrands have degree `deg p + 1`.
pub(crate) const MAX_COEFFS: usize = 16;

struct Owner {
    theta: f64,
    sigma: f64,
    family: NoiseFamily,
    y_max: f64,
    kink_jump: f64,
    price: Vec<f64>,
    /// `C, C', C''` coefficients, zero padded.
    cost: [[f64; 3]; 3],
}

/// `out[k] = E[a^k; region]` with `a = theta + sigma z`, from the
/// standardized moments `m`.
fn action_moments(theta: f64, sigma: f64, m: &[f64], out: &mut [f64]) {
    for k in 0..m.len() {
        // sum_j binom(k, j) theta^(k-j) sigma^j m_j
        let mut acc = 0.0;
        let mut binom = 1.0;
        for j in 0..=k {
            acc += binom * theta.powi((k - j) as i32) * sigma.powi(j as i32) * m[j];
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
        out[k] = acc;
    }
}

fn dot(c: &[f64], m: &[f64]) -> f64 {
    c.iter().zip(m).map(|(a, b)| a * b).sum()
}

struct Acc {
    payoff: f64,
    gradient: f64,
    hessian: Vec<f64>,
    interior: Vec<f64>,
}

pub(crate) fn row_integrals(
    game: &CournotGame,
    thetas: &[f64],
    noises: &[NoiseSpec],
    i: usize,
    budget: usize,
    with_hessian: bool,
) -> RowIntegrals {
    let n = game.n_players();
    let price = game.price();
    let cost = game.cost(i).polynomial();
    let mut c = [[0.0; 3]; 3];
    let mut q = cost.clone();
    for row in c.iter_mut() {
        for (k, v) in q.coefficients().iter().take(3).enumerate() {
            row[k] = *v;
        }
        q = q.derivative();
    }
    let owner = Owner {
        theta: thetas[i],
        sigma: noises[i].sigma,
        family: noises[i].family,
        y_max: price.y_max(),
        kink_jump: -price.slope_at_y_max(),
        price: price.polynomial().coefficients().to_vec(),
        cost: c,
    };

    let order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let mut acc = Acc {
        payoff: 0.0,
        gradient: 0.0,
        hessian: vec![0.0; n],
        interior: vec![0.0; n],
    };
    let mut active = vec![false; n];
    let mut scratch: Vec<Vec<Node>> = order.iter().map(|_| Vec::new()).collect();
    descend(
        &owner,
        i,
        &order,
        thetas,
        noises,
        budget,
        with_hessian,
        0,
        0.0,
        1.0,
        &mut active,
        &mut scratch,
        &mut acc,
    );
    RowIntegrals {
        payoff: acc.payoff,
        gradient: acc.gradient,
        hessian: acc.hessian,
        interior: acc.interior,
    }
}

#[allow(clippy::too_many_arguments)]
fn descend(
    owner: &Owner,
    i: usize,
    order: &[usize],
    thetas: &[f64],
    noises: &[NoiseSpec],
    budget: usize,
    with_hessian: bool,
    level: usize,
    rivals: f64,
    weight: f64,
    active: &mut [bool],
    scratch: &mut [Vec<Node>],
    acc: &mut Acc,
) {
    if level == order.len() {
        innermost(owner, i, rivals, weight, active, with_hessian, acc);
        return;
    }
    let j = order[level];
    let (head, tail) = scratch.split_at_mut(1);
    let nodes = &mut head[0];
    rectified_nodes(thetas[j], noises[j], owner.y_max - rivals, budget, nodes);
    for node in nodes.iter() {
        active[j] = node.active;
        descend(
            owner,
            i,
            order,
            thetas,
            noises,
            budget,
            with_hessian,
            level + 1,
            rivals + node.action,
            weight * node.weight,
            active,
            tail,
            acc,
        );
    }
    active[j] = false;
}

fn innermost(owner: &Owner, i: usize, rivals: f64, weight: f64, active: &[bool], with_hessian: bool, acc: &mut Acc) {
    let fam = owner.family;
    let (theta, sigma) = (owner.theta, owner.sigma);
    let z0 = -theta / sigma;
    let room = owner.y_max - rivals;

    let mut m = [0.0f64; MAX_COEFFS];
    let mut am = [0.0f64; MAX_COEFFS];
    let [cost, cost_d1, cost_d2] = &owner.cost;

    // Beyond y_max only the cost remains.
    let tail_lo = if room > 0.0 { ((room - theta) / sigma).max(z0) } else { z0 };
    fam.moments(tail_lo, f64::INFINITY, &mut m[..3]);
    action_moments(theta, sigma, &m[..3], &mut am[..3]);
    let mut payoff = -dot(cost, &am);
    let mut gradient = -dot(cost_d1, &am);
    let mut own_int = if with_hessian { -dot(cost_d2, &am) } else { 0.0 };
    let mut cross_int = 0.0;
    let mut price_at_rivals = 0.0;
    let mut kink = 0.0;

    if room > 0.0 {
        let zc = (room - theta) / sigma;
        // pa(a) = p(S + a), by synthetic division
        let len = owner.price.len();
        let mut pa = [0.0f64; MAX_COEFFS];
        pa[..len].copy_from_slice(&owner.price);
        for d in 0..len {
            for j in (d..len - 1).rev() {
                pa[j] += rivals * pa[j + 1];
            }
        }
        price_at_rivals = pa[0];
        // pj(a) = a pa(a) - C(a); gradient and curvature are pj' and pj''.
        let k = len + 1;
        let mut pj = [0.0f64; MAX_COEFFS];
        for d in 1..k {
            pj[d] = pa[d - 1];
        }
        for d in 0..3 {
            pj[d] -= cost[d];
        }
        let mut gj = [0.0f64; MAX_COEFFS];
        for d in 0..k - 1 {
            gj[d] = (d + 1) as f64 * pj[d + 1];
        }
        fam.moments(z0, zc, &mut m[..k]);
        action_moments(theta, sigma, &m[..k], &mut am[..k]);
        payoff += dot(&pj[..k], &am);
        gradient += dot(&gj[..k], &am);
        if with_hessian {
            let mut own = [0.0f64; MAX_COEFFS];
            let mut cross = [0.0f64; MAX_COEFFS];
            for d in 0..k.saturating_sub(2) {
                own[d] = (d + 1) as f64 * gj[d + 1];
            }
            // d/dS of p'(S + a) a + p(S + a) = p''(S + a) a + p'(S + a)
            for d in 0..len.saturating_sub(1) {
                cross[d] = ((d + 1) * (d + 1)) as f64 * pa[d + 1];
            }
            own_int += dot(&own[..k], &am);
            cross_int = dot(&cross[..k], &am);
            // The drop of p' at total y_max contributes |p'(y_max)| c f_i(c), c = y_max - S.
            kink = owner.kink_jump * room * fam.pdf(zc) / sigma;
        }
    }

    acc.payoff += weight * payoff;
    acc.gradient += weight * gradient;
    if !with_hessian {
        return;
    }
    // Production switching on at a_i = 0 contributes f_i(0) (p(S) - C_i'(0)).
    let switch_on = fam.pdf(z0) / sigma * (price_at_rivals - cost_d1[0]);
    acc.interior[i] += weight * own_int;
    acc.hessian[i] += weight * (own_int + switch_on + kink);
    for (j, &on) in active.iter().enumerate() {
        if on && j != i {
            acc.interior[j] += weight * cross_int;
            acc.hessian[j] += weight * (cross_int + kink);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let rule = GaussLegendre::get(8);
        let s: f64 = rule.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let x14: f64 = rule.nodes.iter().zip(&rule.weights).map(|(x, w)| w * x.powi(14)).sum();
        assert!((x14 - 2.0 / 15.0).abs() < 1e-14);
        let one = GaussLegendre::get(1);
        assert_eq!(one.nodes, vec![0.0]);
        assert!((one.weights[0] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn rectified_nodes_carry_unit_mass() {
        let mut out = Vec::new();
        for &(theta, c) in &[(0.25, 0.5), (0.0, 1.0), (-0.1, 0.02), (1.2, 1.0)] {
            rectified_nodes(theta, NoiseSpec::gaussian(0.05), c, 64, &mut out);
            let mass: f64 = out.iter().map(|n| n.weight).sum();
            assert!((mass - 1.0).abs() < 1e-13, "theta={theta}: {mass}");
            let mean: f64 = out.iter().map(|n| n.weight * n.action).sum();
            let z = theta / 0.05;
            let exact = theta * NoiseFamily::Gaussian.cdf(z) + 0.05 * NoiseFamily::Gaussian.pdf(z);
            assert!((mean - exact).abs() < 1e-13);
        }
    }
}
