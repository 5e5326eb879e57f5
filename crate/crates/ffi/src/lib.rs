//! C interface to `cournot-core`.
//!
//! Every fallible function returns a [`CournotStatus`]; on failure the
//! message is available from [`cournot_last_error`] on the same thread.
//! Games live behind an opaque [`CournotGame`] handle created by one of
//! the constructors and released with [`cournot_game_free`]. Output
//! arrays are caller-allocated and their lengths are passed explicitly.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cournot_core::analysis::{self, HessianMethod};
use cournot_core::game::{self, CostFunction, CostKind, PriceFunction, PriceKind};
use cournot_core::stochastic::{self, NoiseSpec, PolicyProfile, DEFAULT_NODES};
use cournot_core::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CournotStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidGame = 3,
    NoConvergence = 4,
    Divergence = 5,
    Unsupported = 6,
    Panic = 7,
}

/// Opaque game handle.
pub struct CournotGame {
    inner: game::CournotGame,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> CournotStatus {
    match e {
        Error::InvalidGame(_) => CournotStatus::InvalidGame,
        Error::NoConvergence { .. } | Error::NoSignChange { .. } => CournotStatus::NoConvergence,
        Error::Divergence { .. } => CournotStatus::Divergence,
        Error::TooManyPlayers { .. } | Error::ScoreUndefined(_) => CournotStatus::Unsupported,
        _ => CournotStatus::InvalidArgument,
    }
}

enum Fail {
    Null(&'static str),
    Arg(String),
    Core(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> CournotStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CournotStatus::Ok,
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CournotStatus::NullPointer
        }
        Ok(Err(Fail::Arg(msg))) => {
            set_error(msg);
            CournotStatus::InvalidArgument
        }
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            CournotStatus::Panic
        }
    }
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &'static str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(Fail::Null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a>(g: *const CournotGame) -> Result<&'a game::CournotGame, Fail> {
    g.as_ref().map(|g| &g.inner).ok_or(Fail::Null("game"))
}

unsafe fn text<'a>(s: *const c_char, what: &'static str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return Err(Fail::Null(what));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail::Arg(format!("{what} is not UTF-8")))
}

fn check_len(game: &game::CournotGame, len: usize) -> Result<(), Fail> {
    if len != game.n_players() {
        return Err(Fail::Arg(format!("length {len} for a {}-player game", game.n_players())));
    }
    Ok(())
}

unsafe fn emit(out: *mut *mut CournotGame, game: game::CournotGame) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail::Null("out"));
    }
    *out = Box::into_raw(Box::new(CournotGame { inner: game }));
    Ok(())
}

unsafe fn profile(theta: *const f64, sigma: *const f64, len: usize) -> Result<PolicyProfile, Fail> {
    let theta = slice(theta, len, "theta")?;
    let sigma = slice(sigma, len, "sigma")?;
    let noises: Vec<NoiseSpec> = sigma.iter().map(|&s| NoiseSpec::gaussian(s)).collect();
    Ok(PolicyProfile::from_parts(theta, &noises)?)
}

/// Message of the last failure on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn cournot_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cournot_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a game from price coefficients in ascending powers of total
/// production and per-player linear and quadratic cost coefficients.
/// `c2` may be NULL for linear costs.
///
/// # Safety
/// `price` must point to `n_price` doubles, `c1` (and `c2` unless NULL)
/// to `n_players` doubles, and `out` to writable storage for a handle.
#[no_mangle]
pub unsafe extern "C" fn cournot_game_new(
    price: *const f64,
    n_price: usize,
    c1: *const f64,
    c2: *const f64,
    n_players: usize,
    out: *mut *mut CournotGame,
) -> CournotStatus {
    guard(|| {
        let coeffs = slice(price, n_price, "price")?.to_vec();
        let lin = slice(c1, n_players, "c1")?;
        let quad = if c2.is_null() { None } else { Some(slice(c2, n_players, "c2")?) };
        let kind = match coeffs.len() {
            2 => PriceKind::Linear,
            3 => PriceKind::Quadratic,
            4 => PriceKind::Cubic,
            _ => PriceKind::CustomPolynomial,
        };
        let costs = (0..n_players)
            .map(|i| match quad {
                Some(q) => CostFunction::new(CostKind::Quadratic, &[lin[i], q[i]]),
                None => CostFunction::new(CostKind::Linear, &[lin[i]]),
            })
            .collect::<cournot_core::Result<Vec<_>>>()?;
        let g = game::CournotGame::new(PriceFunction::new(kind, coeffs)?, costs)?;
        emit(out, g)
    })
}

/// Parses a game definition in TOML.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cournot_game_from_toml(toml: *const c_char, out: *mut *mut CournotGame) -> CournotStatus {
    guard(|| emit(out, game::CournotGame::from_toml_str(text(toml, "toml")?)?))
}

/// The game of a registered scenario (`"G1"` ... `"G6"`).
///
/// # Safety
/// `id` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cournot_scenario_game(id: *const c_char, out: *mut *mut CournotGame) -> CournotStatus {
    guard(|| emit(out, cournot_core::experiments::scenario(text(id, "id")?)?.game))
}

/// Releases a handle. NULL is ignored.
///
/// # Safety
/// `game` must come from a constructor of this library and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn cournot_game_free(game: *mut CournotGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Number of players, or 0 for NULL.
///
/// # Safety
/// `game` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cournot_game_n_players(game: *const CournotGame) -> usize {
    game.as_ref().map_or(0, |g| g.inner.n_players())
}

/// First zero of the price function, or NaN for NULL.
///
/// # Safety
/// `game` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cournot_game_y_max(game: *const CournotGame) -> f64 {
    game.as_ref().map_or(f64::NAN, |g| g.inner.y_max())
}

/// Deterministic payoffs at an action profile.
///
/// # Safety
/// `x` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cournot_payoffs(game: *const CournotGame, x: *const f64, len: usize, out: *mut f64) -> CournotStatus {
    guard(|| {
        let g = handle(game)?;
        check_len(g, len)?;
        let x = game::ActionProfile::new(slice(x, len, "x")?.to_vec())?;
        slice_mut(out, len, "out")?.copy_from_slice(&game::payoff(g, &x)?);
        Ok(())
    })
}

/// Nash equilibrium of the deterministic game.
///
/// # Safety
/// `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cournot_solve_nash(game: *const CournotGame, tol: f64, out: *mut f64, len: usize) -> CournotStatus {
    guard(|| {
        let g = handle(game)?;
        check_len(g, len)?;
        let x = game::solve_nash(g, tol)?;
        slice_mut(out, len, "out")?.copy_from_slice(x.as_slice());
        Ok(())
    })
}

/// Expected payoff of `player` under Gaussian policies, by quadrature.
///
/// # Safety
/// `theta` and `sigma` must point to `len` doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn cournot_expected_payoff(
    game: *const CournotGame,
    theta: *const f64,
    sigma: *const f64,
    len: usize,
    player: usize,
    out: *mut f64,
) -> CournotStatus {
    guard(|| {
        let g = handle(game)?;
        check_len(g, len)?;
        let p = profile(theta, sigma, len)?;
        let v = stochastic::expected_payoff(g, &p, player, stochastic::ExpectationMethod::default())?;
        slice_mut(out, 1, "out")?[0] = v;
        Ok(())
    })
}

/// `d J_player / d theta_player` under Gaussian policies.
///
/// # Safety
/// `theta` and `sigma` must point to `len` doubles, `out` to one.
#[no_mangle]
pub unsafe extern "C" fn cournot_exact_gradient(
    game: *const CournotGame,
    theta: *const f64,
    sigma: *const f64,
    len: usize,
    player: usize,
    out: *mut f64,
) -> CournotStatus {
    guard(|| {
        let g = handle(game)?;
        check_len(g, len)?;
        let v = stochastic::exact_gradient(g, &profile(theta, sigma, len)?, player)?;
        slice_mut(out, 1, "out")?[0] = v;
        Ok(())
    })
}

/// Stationary point of the exact gradient map.
///
/// # Safety
/// `sigma` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn cournot_stochastic_nash(
    game: *const CournotGame,
    sigma: *const f64,
    len: usize,
    tol: f64,
    out: *mut f64,
) -> CournotStatus {
    guard(|| {
        let g = handle(game)?;
        check_len(g, len)?;
        let theta = stochastic::stochastic_nash(g, slice(sigma, len, "sigma")?, tol)?;
        slice_mut(out, len, "out")?.copy_from_slice(&theta);
        Ok(())
    })
}

/// Game Hessian, row-major into `out` (`len * len` doubles).
///
/// # Safety
/// `theta` and `sigma` must point to `len` doubles, `out` to `len * len`.
#[no_mangle]
pub unsafe extern "C" fn cournot_game_hessian(
    game: *const CournotGame,
    theta: *const f64,
    sigma: *const f64,
    len: usize,
    out: *mut f64,
) -> CournotStatus {
    guard(|| {
        let g = handle(game)?;
        check_len(g, len)?;
        let h = analysis::game_hessian(g, &profile(theta, sigma, len)?, HessianMethod::Quadrature { nodes: DEFAULT_NODES })?;
        let dst = slice_mut(out, len * len, "out")?;
        for (i, row) in h.matrix.iter().enumerate() {
            dst[i * len..(i + 1) * len].copy_from_slice(row);
        }
        Ok(())
    })
}

/// Rosen check of a row-major `n * n` matrix: `passed` is set to 1 when
/// the largest eigenvalue of `H + H^T` is below `-1e-10`.
///
/// # Safety
/// `h` must point to `n * n` doubles; `passed` and `lambda_max` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn cournot_rosen_check(h: *const f64, n: usize, passed: *mut c_int, lambda_max: *mut f64) -> CournotStatus {
    guard(|| {
        let m = slice(h, n * n, "h")?;
        if passed.is_null() || lambda_max.is_null() {
            return Err(Fail::Null("passed/lambda_max"));
        }
        let rows: Vec<Vec<f64>> = m.chunks(n.max(1)).map(<[f64]>::to_vec).collect();
        let c = analysis::rosen_check(&analysis::GameHessian::from_rows(rows));
        *passed = c.passed() as c_int;
        *lambda_max = c.witness.values.last().copied().unwrap_or(f64::NAN);
        Ok(())
    })
}
