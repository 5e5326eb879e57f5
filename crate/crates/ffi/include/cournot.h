#ifndef COURNOT_H
#define COURNOT_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CournotStatus {
  COURNOT_STATUS_OK = 0,
  COURNOT_STATUS_NULL_POINTER = 1,
  COURNOT_STATUS_INVALID_ARGUMENT = 2,
  COURNOT_STATUS_INVALID_GAME = 3,
  COURNOT_STATUS_NO_CONVERGENCE = 4,
  COURNOT_STATUS_DIVERGENCE = 5,
  COURNOT_STATUS_UNSUPPORTED = 6,
  COURNOT_STATUS_PANIC = 7,
} CournotStatus;

// Opaque game handle.
typedef struct CournotGame CournotGame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or NULL. The pointer stays
// valid until the next failing call on the same thread.
const char *cournot_last_error(void);

// Library version as a static NUL-terminated string.
const char *cournot_version(void);

// Builds a game from price coefficients in ascending powers of total
// production and per-player linear and quadratic cost coefficients.
// `c2` may be NULL for linear costs.
//
// # Safety
// `price` must point to `n_price` doubles, `c1` (and `c2` unless NULL)
// to `n_players` doubles, and `out` to writable storage for a handle.
enum CournotStatus cournot_game_new(const double *price,
                                    size_t n_price,
                                    const double *c1,
                                    const double *c2,
                                    size_t n_players,
                                    struct CournotGame **out);

// Parses a game definition in TOML.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` writable.
enum CournotStatus cournot_game_from_toml(const char *toml, struct CournotGame **out);

// The game of a registered scenario (`"G1"` ... `"G6"`).
//
// # Safety
// `id` must be a NUL-terminated string and `out` writable.
enum CournotStatus cournot_scenario_game(const char *id, struct CournotGame **out);

// Releases a handle. NULL is ignored.
//
// # Safety
// `game` must come from a constructor of this library and not be used
// afterwards.
void cournot_game_free(struct CournotGame *game);

// Number of players, or 0 for NULL.
//
// # Safety
// `game` must be NULL or a live handle.
size_t cournot_game_n_players(const struct CournotGame *game);

// First zero of the price function, or NaN for NULL.
//
// # Safety
// `game` must be NULL or a live handle.
double cournot_game_y_max(const struct CournotGame *game);

// Deterministic payoffs at an action profile.
//
// # Safety
// `x` and `out` must point to `len` doubles.
enum CournotStatus cournot_payoffs(const struct CournotGame *game,
                                   const double *x,
                                   size_t len,
                                   double *out);

// Nash equilibrium of the deterministic game.
//
// # Safety
// `out` must point to `len` doubles.
enum CournotStatus cournot_solve_nash(const struct CournotGame *game,
                                      double tol,
                                      double *out,
                                      size_t len);

// Expected payoff of `player` under Gaussian policies, by quadrature.
//
// # Safety
// `theta` and `sigma` must point to `len` doubles, `out` to one.
enum CournotStatus cournot_expected_payoff(const struct CournotGame *game,
                                           const double *theta,
                                           const double *sigma,
                                           size_t len,
                                           size_t player,
                                           double *out);

// `d J_player / d theta_player` under Gaussian policies.
//
// # Safety
// `theta` and `sigma` must point to `len` doubles, `out` to one.
enum CournotStatus cournot_exact_gradient(const struct CournotGame *game,
                                          const double *theta,
                                          const double *sigma,
                                          size_t len,
                                          size_t player,
                                          double *out);

// Stationary point of the exact gradient map.
//
// # Safety
// `sigma` and `out` must point to `len` doubles.
enum CournotStatus cournot_stochastic_nash(const struct CournotGame *game,
                                           const double *sigma,
                                           size_t len,
                                           double tol,
                                           double *out);

// Game Hessian, row-major into `out` (`len * len` doubles).
//
// # Safety
// `theta` and `sigma` must point to `len` doubles, `out` to `len * len`.
enum CournotStatus cournot_game_hessian(const struct CournotGame *game,
                                        const double *theta,
                                        const double *sigma,
                                        size_t len,
                                        double *out);

// Rosen check of a row-major `n * n` matrix: `passed` is set to 1 when
// the largest eigenvalue of `H + H^T` is below `-1e-10`.
//
// # Safety
// `h` must point to `n * n` doubles; `passed` and `lambda_max` must be
// writable.
enum CournotStatus cournot_rosen_check(const double *h, size_t n, int *passed, double *lambda_max);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COURNOT_H */
