//! The deterministic Cournot game: price and cost functions, payoffs,
//! assumption checks, best responses and the Nash equilibrium.
//!
//! Price functions are polynomials clamped to zero at and beyond their
//! first root `y_max`. Cost functions are `C(x) = c1 x + c2 x^2`, so that
//! `C(0) = 0` holds by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::Polynomial;

/// Bisection tolerance used when locating `y_max`.
pub const Y_MAX_TOL: f64 = 1e-12;
/// Largest `y` probed while searching for the first root of the price.
pub const Y_MAX_CAP: f64 = 1e6;
/// Number of probe points used by the A1 shape checks.
const SHAPE_PROBES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceKind {
    Linear,
    Quadratic,
    Cubic,
    CustomPolynomial,
}

impl PriceKind {
    fn max_coefficients(self) -> Option<usize> {
        match self {
            PriceKind::Linear => Some(2),
            PriceKind::Quadratic => Some(3),
            PriceKind::Cubic => Some(4),
            PriceKind::CustomPolynomial => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostKind {
    Zero,
    Linear,
    Quadratic,
}

/// Serializable description of a price function. Coefficients are in
/// ascending powers of total production: `p(y) = c0 + c1 y + c2 y^2 + ...`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceSpec {
    pub kind: PriceKind,
    pub coefficients: Vec<f64>,
}

/// Serializable description of a cost function. `zero` takes no
/// coefficients, `linear` takes `[c1]`, `quadratic` takes `[c1, c2]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub kind: CostKind,
    #[serde(default)]
    pub coefficients: Vec<f64>,
}

/// On-disk game definition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GameSpec {
    pub n_players: usize,
    pub price: PriceSpec,
    pub costs: Vec<CostSpec>,
}

impl GameSpec {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriceFunction {
    kind: PriceKind,
    poly: Polynomial,
    d1: Polynomial,
    d2: Polynomial,
    y_max: f64,
}

impl PriceFunction {
    pub fn new(kind: PriceKind, coefficients: Vec<f64>) -> Result<Self> {
        if let Some(max) = kind.max_coefficients() {
            if coefficients.len() > max {
                return Err(Error::InvalidGame(format!(
                    "{kind:?} price takes at most {max} coefficients, got {}",
                    coefficients.len()
                )));
            }
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidGame("non-finite price coefficient".into()));
        }
        let poly = Polynomial::new(coefficients);
        let y_max = compute_y_max(&poly)?;
        let d1 = poly.derivative();
        let d2 = d1.derivative();
        Ok(PriceFunction {
            kind,
            poly,
            d1,
            d2,
            y_max,
        })
    }

    /// `p(y) = a - b y`.
    pub fn linear(a: f64, b: f64) -> Result<Self> {
        Self::new(PriceKind::Linear, vec![a, -b])
    }

    pub fn kind(&self) -> PriceKind {
        self.kind
    }

    /// The unclamped polynomial.
    pub fn polynomial(&self) -> &Polynomial {
        &self.poly
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    /// Clamped price; callers must pass `y >= 0`.
    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        if y >= self.y_max {
            0.0
        } else {
            self.poly.eval(y).max(0.0)
        }
    }

    #[inline]
    pub fn derivative(&self, y: f64) -> f64 {
        if y >= self.y_max {
            0.0
        } else {
            self.d1.eval(y)
        }
    }

    #[inline]
    pub fn second_derivative(&self, y: f64) -> f64 {
        if y >= self.y_max {
            0.0
        } else {
            self.d2.eval(y)
        }
    }

    /// Left limit of `p'` at `y_max`; the clamped derivative jumps by
    /// `-slope_at_y_max()` there.
    pub fn slope_at_y_max(&self) -> f64 {
        self.d1.eval(self.y_max)
    }

    pub fn to_spec(&self) -> PriceSpec {
        PriceSpec {
            kind: self.kind,
            coefficients: self.poly.coefficients().to_vec(),
        }
    }
}

/// Price at total production `y`, clamped to zero beyond `y_max`.
pub fn price_at(price: &PriceFunction, y: f64) -> Result<f64> {
    if !(y >= 0.0) {
        return Err(Error::domain(format!("price evaluated at negative production {y}")));
    }
    Ok(price.value(y))
}

/// First zero of `poly` on `[0, Y_MAX_CAP]`.
pub fn compute_y_max(poly: &Polynomial) -> Result<f64> {
    let p0 = poly.eval(0.0);
    if !(p0 > 0.0) {
        return Err(Error::InvalidGame(format!("price must be positive at zero, p(0) = {p0}")));
    }
    let mut hi = 1.0;
    while poly.eval(hi) > 0.0 {
        hi *= 2.0;
        if hi > Y_MAX_CAP {
            return Err(Error::InvalidGame(format!(
                "price has no root in [0, {Y_MAX_CAP:e}]"
            )));
        }
    }
    // Locate the first sign change on a grid, so a polynomial that dips
    // below zero and comes back still reports its first root.
    const GRID: usize = 1024;
    let mut lo = 0.0;
    for k in 1..=GRID {
        let y = hi * k as f64 / GRID as f64;
        if poly.eval(y) <= 0.0 {
            hi = y;
            break;
        }
        lo = y;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if poly.eval(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= Y_MAX_TOL * 1e-3 * hi.max(1.0) {
            break;
        }
    }
    let y = if poly.eval(hi).abs() <= poly.eval(lo).abs() { hi } else { lo };
    Ok(y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CostFunction {
    kind: CostKind,
    linear: f64,
    quadratic: f64,
}

impl CostFunction {
    pub fn new(kind: CostKind, coefficients: &[f64]) -> Result<Self> {
        let (linear, quadratic) = match (kind, coefficients) {
            (CostKind::Zero, []) => (0.0, 0.0),
            (CostKind::Linear, [c1]) => (*c1, 0.0),
            (CostKind::Quadratic, [c1, c2]) => (*c1, *c2),
            _ => {
                return Err(Error::InvalidGame(format!(
                    "{kind:?} cost does not take {} coefficients",
                    coefficients.len()
                )))
            }
        };
        if !linear.is_finite() || !quadratic.is_finite() {
            return Err(Error::InvalidGame("non-finite cost coefficient".into()));
        }
        Ok(CostFunction {
            kind,
            linear,
            quadratic,
        })
    }

    pub fn zero() -> Self {
        CostFunction {
            kind: CostKind::Zero,
            linear: 0.0,
            quadratic: 0.0,
        }
    }

    pub fn linear(c1: f64) -> Self {
        CostFunction {
            kind: CostKind::Linear,
            linear: c1,
            quadratic: 0.0,
        }
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        x * (self.linear + self.quadratic * x)
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        self.linear + 2.0 * self.quadratic * x
    }

    #[inline]
    pub fn second_derivative(&self, _x: f64) -> f64 {
        2.0 * self.quadratic
    }

    pub fn polynomial(&self) -> Polynomial {
        Polynomial::new(vec![0.0, self.linear, self.quadratic])
    }

    pub fn to_spec(&self) -> CostSpec {
        let coefficients = match self.kind {
            CostKind::Zero => vec![],
            CostKind::Linear => vec![self.linear],
            CostKind::Quadratic => vec![self.linear, self.quadratic],
        };
        CostSpec {
            kind: self.kind,
            coefficients,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Warn,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub status: CheckStatus,
    pub message: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    fn push(&mut self, name: &str, status: CheckStatus, message: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            status,
            message: message.into(),
        });
    }

    pub fn is_valid(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn errors(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Fail)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status == CheckStatus::Warn)
    }
}

/// Checks a game definition against the price (A1), cost (A2) and
/// participation assumptions. Never fails; failures are recorded in the
/// report. Non-strictly increasing costs are warnings only.
pub fn validate(spec: &GameSpec) -> ValidationReport {
    use CheckStatus::*;
    let mut report = ValidationReport::default();

    if spec.n_players == 0 {
        report.push("players", Fail, "at least one player is required");
    } else if spec.costs.len() != spec.n_players {
        report.push(
            "players",
            Fail,
            format!("{} players but {} cost functions", spec.n_players, spec.costs.len()),
        );
    } else {
        report.push("players", Pass, format!("{} players", spec.n_players));
    }

    let kind_ok = spec
        .price
        .kind
        .max_coefficients()
        .map_or(true, |m| spec.price.coefficients.len() <= m);
    if !kind_ok {
        report.push(
            "price-kind",
            Fail,
            format!("too many coefficients for a {:?} price", spec.price.kind),
        );
    }
    let poly = Polynomial::new(spec.price.coefficients.clone());
    let d1 = poly.derivative();
    let d2 = d1.derivative();
    let p0 = poly.eval(0.0);
    if p0 > 0.0 {
        report.push("price-positive", Pass, format!("p(0) = {p0}"));
    } else {
        report.push("price-positive", Fail, format!("p(0) = {p0} is not positive"));
    }

    let y_max = compute_y_max(&poly).ok();
    match y_max {
        Some(y) => report.push("price-root", Pass, format!("y_max = {y}")),
        None => report.push("price-root", Fail, "price has no root (y_max undefined)"),
    }
    let probe_hi = y_max.unwrap_or(1.0);
    let probes = (0..SHAPE_PROBES).map(|k| probe_hi * k as f64 / SHAPE_PROBES as f64);

    // p'(0) = 0 is compatible with strict decrease (for example 1 - y^2).
    match probes.clone().find(|&y| if y == 0.0 { d1.eval(y) > 0.0 } else { !(d1.eval(y) < 0.0) }) {
        None => report.push("price-decreasing", Pass, "p' < 0 on (0, y_max)"),
        Some(y) => report.push(
            "price-decreasing",
            Fail,
            format!("price not decreasing: p'({y}) = {}", d1.eval(y)),
        ),
    }
    match probes.chain(std::iter::once(probe_hi)).find(|&y| d2.eval(y) > 0.0) {
        None => report.push("price-concave", Pass, "p'' <= 0 on [0, y_max]"),
        Some(y) => report.push(
            "price-concave",
            Fail,
            format!("price not concave: p''({y}) = {}", d2.eval(y)),
        ),
    }

    for (i, cs) in spec.costs.iter().enumerate() {
        let label = |s: &str| format!("cost-{}-{s}", i + 1);
        let cost = match CostFunction::new(cs.kind, &cs.coefficients) {
            Ok(c) => c,
            Err(e) => {
                report.push(&label("kind"), Fail, e.to_string());
                continue;
            }
        };
        if cost.quadratic >= 0.0 {
            report.push(&label("convex"), Pass, "C'' >= 0");
        } else {
            report.push(&label("convex"), Fail, format!("cost not convex: C'' = {}", 2.0 * cost.quadratic));
        }
        if cost.linear < 0.0 {
            report.push(&label("increasing"), Fail, format!("cost decreasing: C'(0) = {}", cost.linear));
        } else if cost.linear > 0.0 || cost.quadratic > 0.0 {
            report.push(&label("increasing"), Pass, "C strictly increasing");
        } else {
            report.push(&label("increasing"), Warn, "cost not strictly increasing");
        }
        let c0 = cost.derivative(0.0);
        if p0 > c0 {
            report.push(&label("participation"), Pass, format!("p(0) = {p0} > C'(0) = {c0}"));
        } else {
            report.push(
                &label("participation"),
                Fail,
                format!("participation: p(0)={p0} \u{2264} C'(0)={c0}"),
            );
        }
    }
    report
}

/// Production quantities, one per player.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionProfile(Vec<f64>);

impl ActionProfile {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if let Some(v) = x.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::domain(format!("production levels must be finite and >= 0, got {v}")));
        }
        Ok(ActionProfile(x))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

impl std::ops::Index<usize> for ActionProfile {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CournotGame {
    price: PriceFunction,
    costs: Vec<CostFunction>,
}

impl CournotGame {
    /// Builds a game, rejecting any definition whose validation report
    /// carries a failure.
    pub fn new(price: PriceFunction, costs: Vec<CostFunction>) -> Result<Self> {
        let game = CournotGame { price, costs };
        let report = validate(&game.to_spec());
        if let Some(e) = report.errors().next() {
            return Err(Error::InvalidGame(e.message.clone()));
        }
        Ok(game)
    }

    pub fn from_spec(spec: &GameSpec) -> Result<Self> {
        let report = validate(spec);
        if let Some(e) = report.errors().next() {
            return Err(Error::InvalidGame(e.message.clone()));
        }
        let price = PriceFunction::new(spec.price.kind, spec.price.coefficients.clone())?;
        let costs = spec
            .costs
            .iter()
            .map(|c| CostFunction::new(c.kind, &c.coefficients))
            .collect::<Result<Vec<_>>>()?;
        Ok(CournotGame { price, costs })
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Self::from_spec(&GameSpec::from_toml_str(text)?)
    }

    pub fn to_spec(&self) -> GameSpec {
        GameSpec {
            n_players: self.costs.len(),
            price: self.price.to_spec(),
            costs: self.costs.iter().map(CostFunction::to_spec).collect(),
        }
    }

    pub fn validate(&self) -> ValidationReport {
        validate(&self.to_spec())
    }

    pub fn n_players(&self) -> usize {
        self.costs.len()
    }

    pub fn price(&self) -> &PriceFunction {
        &self.price
    }

    pub fn cost(&self, i: usize) -> &CostFunction {
        &self.costs[i]
    }

    pub fn costs(&self) -> &[CostFunction] {
        &self.costs
    }

    pub fn y_max(&self) -> f64 {
        self.price.y_max
    }

    fn check_len(&self, x: &ActionProfile) -> Result<()> {
        if x.0.len() != self.n_players() {
            return Err(Error::domain(format!(
                "action profile has {} entries for a {}-player game",
                x.0.len(),
                self.n_players()
            )));
        }
        Ok(())
    }

    fn check_player(&self, i: usize) -> Result<()> {
        if i >= self.n_players() {
            return Err(Error::domain(format!("player index {i} out of range")));
        }
        Ok(())
    }
}

/// `pi_i(x) = p(sum x) x_i - C_i(x_i)` for every player.
pub fn payoff(game: &CournotGame, x: &ActionProfile) -> Result<Vec<f64>> {
    game.check_len(x)?;
    let p = game.price.value(x.total());
    Ok(x.0
        .iter()
        .zip(&game.costs)
        .map(|(&xi, c)| p * xi - c.value(xi))
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginalPayoff {
    pub value: f64,
    /// Total production is at or beyond `y_max`, where `p` and `p'`
    /// vanish and only the cost term remains.
    pub beyond_support: bool,
}

/// `d pi_i / d x_i = p'(y) x_i + p(y) - C_i'(x_i)`.
pub fn marginal_payoff(game: &CournotGame, x: &ActionProfile, i: usize) -> Result<MarginalPayoff> {
    game.check_len(x)?;
    game.check_player(i)?;
    let y = x.total();
    let xi = x.0[i];
    let value = game.price.derivative(y) * xi + game.price.value(y) - game.costs[i].derivative(xi);
    Ok(MarginalPayoff {
        value,
        beyond_support: y >= game.price.y_max,
    })
}

fn marginal_at(game: &CournotGame, i: usize, xi: f64, others: f64) -> f64 {
    let y = xi + others;
    game.price.derivative(y) * xi + game.price.value(y) - game.costs[i].derivative(xi)
}

/// Best response of player `i` to a total `others_sum` of rival
/// production. The marginal payoff is strictly decreasing in `x_i` while
/// the market clears, so the interior optimum is found by bisection.
pub fn best_response(game: &CournotGame, i: usize, others_sum: f64) -> Result<f64> {
    game.check_player(i)?;
    if !(others_sum >= 0.0) {
        return Err(Error::domain(format!("rival production must be >= 0, got {others_sum}")));
    }
    let room = game.price.y_max - others_sum;
    if room <= 0.0 || marginal_at(game, i, 0.0, others_sum) <= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, room);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if marginal_at(game, i, mid, others_sum) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct NashOptions {
    pub tol: f64,
    /// Weight on the best response in the damped update.
    pub damping: f64,
    pub max_iters: usize,
    pub init: Option<Vec<f64>>,
}

impl Default for NashOptions {
    fn default() -> Self {
        NashOptions {
            tol: 1e-9,
            damping: 0.5,
            max_iters: 100_000,
            init: None,
        }
    }
}

pub fn solve_nash(game: &CournotGame, tol: f64) -> Result<ActionProfile> {
    solve_nash_with(
        game,
        &NashOptions {
            tol,
            ..NashOptions::default()
        },
    )
}

/// Damped simultaneous best-response iteration
/// `x <- (1 - a) x + a BR(x)` until `|x - BR(x)|_inf <= tol`.
pub fn solve_nash_with(game: &CournotGame, opts: &NashOptions) -> Result<ActionProfile> {
    let n = game.n_players();
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::config(format!("damping must lie in (0, 1], got {}", opts.damping)));
    }
    let mut x = match &opts.init {
        Some(v) if v.len() == n => ActionProfile::new(v.clone())?.0,
        Some(v) => {
            return Err(Error::domain(format!("initial profile has {} entries for {n} players", v.len())))
        }
        None => vec![0.0; n],
    };
    let mut br = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for _ in 0..opts.max_iters {
        let total: f64 = x.iter().sum();
        for i in 0..n {
            br[i] = best_response(game, i, (total - x[i]).max(0.0))?;
        }
        residual = x
            .iter()
            .zip(&br)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        if residual <= opts.tol {
            for (xi, &bi) in x.iter_mut().zip(&br) {
                if bi == 0.0 {
                    *xi = 0.0;
                }
            }
            return ActionProfile::new(x);
        }
        for (xi, bi) in x.iter_mut().zip(&br) {
            *xi = (1.0 - opts.damping) * *xi + opts.damping * bi;
        }
    }
    Err(Error::NoConvergence {
        what: "best-response iteration",
        iterations: opts.max_iters,
        residual,
        last: x,
    })
}

/// First-order residuals `d pi_i / d x_i` at `x`; zero for interior
/// equilibrium components, non-positive for corner ones.
pub fn foc_residuals(game: &CournotGame, x: &ActionProfile) -> Result<Vec<f64>> {
    (0..game.n_players())
        .map(|i| marginal_payoff(game, x, i).map(|m| m.value))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_zero_cost(n: usize) -> CournotGame {
        CournotGame::new(PriceFunction::linear(1.0, 1.0).unwrap(), vec![CostFunction::zero(); n]).unwrap()
    }

    fn g2() -> CournotGame {
        CournotGame::new(
            PriceFunction::linear(1.0, 1.0).unwrap(),
            (1..=3).map(|i| CostFunction::linear(0.1 * i as f64)).collect(),
        )
        .unwrap()
    }

    fn spec(price: Vec<f64>, costs: Vec<CostSpec>) -> GameSpec {
        GameSpec {
            n_players: costs.len(),
            price: PriceSpec {
                kind: PriceKind::CustomPolynomial,
                coefficients: price,
            },
            costs,
        }
    }

    fn zero_cost() -> CostSpec {
        CostSpec {
            kind: CostKind::Zero,
            coefficients: vec![],
        }
    }

    #[test]
    fn validate_g1_passes_with_strictness_warning() {
        let r = validate(&spec(vec![1.0, -1.0], vec![zero_cost(); 3]));
        assert!(r.is_valid());
        assert_eq!(r.warnings().count(), 3);
        assert!(r.warnings().all(|w| w.message == "cost not strictly increasing"));
    }

    #[test]
    fn validate_rejects_increasing_price() {
        let r = validate(&spec(vec![1.0, 1.0], vec![zero_cost()]));
        assert!(!r.is_valid());
        assert!(r.errors().any(|e| e.message.starts_with("price not decreasing")));
    }

    #[test]
    fn validate_rejects_non_participating_player() {
        let costs = vec![
            CostSpec {
                kind: CostKind::Linear,
                coefficients: vec![2.0],
            },
            zero_cost(),
        ];
        let r = validate(&spec(vec![1.0, -1.0], costs));
        let e: Vec<_> = r.errors().collect();
        assert_eq!(e.len(), 1);
        assert_eq!(e[0].message, "participation: p(0)=1 \u{2264} C'(0)=2");
    }

    #[test]
    fn price_clamps_beyond_root() {
        let p = PriceFunction::linear(1.0, 1.0).unwrap();
        assert!((price_at(&p, 0.75).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(price_at(&p, 2.0).unwrap(), 0.0);
        assert!(price_at(&p, -0.1).is_err());
        let q = PriceFunction::new(PriceKind::Quadratic, vec![1.0, 0.0, -1.0]).unwrap();
        let y = 2.0 * (1.0f64 / 8.0).sqrt();
        assert!((price_at(&q, y).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn y_max_closed_forms() {
        let cases = [
            (vec![1.0, -1.0], 1.0),
            (vec![1.0, 0.0, -1.0], 1.0),
            (vec![1.0, 0.0, 0.0, -0.5], 2f64.powf(1.0 / 3.0)),
        ];
        for (c, expected) in cases {
            let poly = Polynomial::new(c);
            let y = compute_y_max(&poly).unwrap();
            assert!((y - expected).abs() < 1e-12, "{y} vs {expected}");
            assert!(poly.eval(y).abs() <= 1e-12);
        }
    }

    #[test]
    fn y_max_requires_a_root() {
        assert!(compute_y_max(&Polynomial::new(vec![1.0, 0.0, 1.0])).is_err());
    }

    #[test]
    fn payoff_examples() {
        let g1 = linear_zero_cost(3);
        let x = ActionProfile::new(vec![0.25; 3]).unwrap();
        for v in payoff(&g1, &x).unwrap() {
            assert!((v - 0.0625).abs() < 1e-15);
        }
        let pi = payoff(&g2(), &ActionProfile::new(vec![0.3, 0.2, 0.1]).unwrap()).unwrap();
        assert!((pi[0] - 0.09).abs() < 1e-15);
        let zero = payoff(&g2(), &ActionProfile::new(vec![0.0; 3]).unwrap()).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn marginal_payoff_examples() {
        let g1 = linear_zero_cost(3);
        let m = marginal_payoff(&g1, &ActionProfile::new(vec![0.25; 3]).unwrap(), 0).unwrap();
        assert!(m.value.abs() < 1e-15 && !m.beyond_support);

        let mono = linear_zero_cost(1);
        let m = marginal_payoff(&mono, &ActionProfile::new(vec![0.3]).unwrap(), 0).unwrap();
        assert!((m.value - 0.4).abs() < 1e-15);

        let g3 = CournotGame::new(
            PriceFunction::new(PriceKind::Quadratic, vec![1.0, 0.0, -1.0]).unwrap(),
            vec![CostFunction::zero(); 2],
        )
        .unwrap();
        let m = marginal_payoff(&g3, &ActionProfile::new(vec![0.35355339; 2]).unwrap(), 0).unwrap();
        assert!(m.value.abs() < 1e-7);

        let m = marginal_payoff(&g2(), &ActionProfile::new(vec![0.5, 0.4, 0.3]).unwrap(), 2).unwrap();
        assert!(m.beyond_support);
        assert!((m.value + 0.3).abs() < 1e-15);
    }

    #[test]
    fn best_response_examples() {
        let mono = linear_zero_cost(1);
        assert!((best_response(&mono, 0, 0.5).unwrap() - 0.25).abs() < 1e-12);
        assert!((best_response(&mono, 0, 0.0).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(best_response(&mono, 0, 1.0).unwrap(), 0.0);
        assert!(best_response(&mono, 0, -1.0).is_err());
    }

    #[test]
    fn nash_of_linear_games() {
        let x = solve_nash(&linear_zero_cost(3), 1e-9).unwrap();
        for &v in x.as_slice() {
            assert!((v - 0.25).abs() < 1e-8);
        }
        let x = solve_nash(&g2(), 1e-9).unwrap();
        for (v, e) in x.as_slice().iter().zip([0.3, 0.2, 0.1]) {
            assert!((v - e).abs() < 1e-8);
        }
    }

    #[test]
    fn nash_hits_corner_for_expensive_player() {
        // C_3' = 0.9 leaves player 3 out: (1 - y - 0.1 i) with y = 0.4 from the others.
        let game = CournotGame::new(
            PriceFunction::linear(1.0, 1.0).unwrap(),
            vec![CostFunction::linear(0.1), CostFunction::linear(0.2), CostFunction::linear(0.9)],
        )
        .unwrap();
        let x = solve_nash(&game, 1e-10).unwrap();
        assert_eq!(x[2], 0.0);
        let foc = foc_residuals(&game, &x).unwrap();
        assert!(foc[2] <= 0.0);
        assert!(foc[0].abs() < 1e-8 && foc[1].abs() < 1e-8);
    }

    #[test]
    fn cost_kind_arity_is_checked() {
        assert!(CostFunction::new(CostKind::Linear, &[]).is_err());
        assert!(CostFunction::new(CostKind::Zero, &[1.0]).is_err());
        assert!(PriceFunction::new(PriceKind::Linear, vec![1.0, -1.0, 0.5]).is_err());
    }
}
