use cournot_core::experiments::scenario;
use cournot_core::game::{
    self, best_response, compute_y_max, foc_residuals, marginal_payoff, payoff, price_at, solve_nash, solve_nash_with,
    validate, ActionProfile, CheckStatus, CostFunction, CostKind, CournotGame, NashOptions, PriceFunction, PriceKind,
};
use cournot_core::poly::Polynomial;

fn linear_game(n: usize) -> CournotGame {
    CournotGame::new(PriceFunction::linear(1.0, 1.0).unwrap(), vec![CostFunction::zero(); n]).unwrap()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn validation_report() {
    let g1 = scenario("G1").unwrap().game;
    let r = g1.validate();
    assert!(r.is_valid());
    assert!(r.warnings().any(|c| c.message.contains("not strictly increasing")));

    let mut spec = g1.to_spec();
    spec.price.coefficients = vec![1.0, 1.0];
    let r = validate(&spec);
    assert!(!r.is_valid());
    assert!(r.errors().any(|c| c.message.contains("price not decreasing")), "{r:?}");

    let mut spec = linear_game(1).to_spec();
    spec.costs[0] = CostFunction::linear(2.0).to_spec();
    let r = validate(&spec);
    let fail: Vec<_> = r.errors().collect();
    assert_eq!(fail.len(), 1, "{r:?}");
    assert!(fail[0].message.contains("participation"), "{}", fail[0].message);
    assert!(fail[0].message.contains("p(0)=1") && fail[0].message.contains("C'(0)=2"), "{}", fail[0].message);
    assert!(CournotGame::from_spec(&spec).is_err());
}

#[test]
fn validation_rejects_convex_price() {
    let spec = game::GameSpec {
        n_players: 1,
        price: game::PriceSpec {
            kind: PriceKind::Quadratic,
            coefficients: vec![1.0, -2.0, 1.0],
        },
        costs: vec![CostFunction::zero().to_spec()],
    };
    let r = validate(&spec);
    assert!(r.errors().any(|c| c.message.contains("not concave")), "{r:?}");
    assert!(r.checks.iter().any(|c| c.status == CheckStatus::Fail));
}

#[test]
fn price_evaluation_and_clamp() {
    let lin = PriceFunction::linear(1.0, 1.0).unwrap();
    assert!(close(price_at(&lin, 0.75).unwrap(), 0.25, 1e-15));
    assert_eq!(price_at(&lin, 2.0).unwrap(), 0.0);
    assert!(price_at(&lin, -0.1).is_err());
    let quad = PriceFunction::new(PriceKind::Quadratic, vec![1.0, 0.0, -1.0]).unwrap();
    assert!(close(price_at(&quad, 2.0 * (1.0f64 / 8.0).sqrt()).unwrap(), 0.5, 1e-12));
}

#[test]
fn y_max_values() {
    let cases: [(Vec<f64>, f64); 3] = [
        (vec![1.0, -1.0], 1.0),
        (vec![1.0, 0.0, -1.0], 1.0),
        (vec![1.0, 0.0, 0.0, -0.5], 2f64.powf(1.0 / 3.0)),
    ];
    for (c, want) in cases {
        let poly = Polynomial::new(c);
        let y = compute_y_max(&poly).unwrap();
        assert!(close(y, want, 1e-12), "{y} vs {want}");
        assert!(poly.eval(y).abs() <= 1e-12);
    }
    assert!(close(2f64.powf(1.0 / 3.0), 1.259921, 1e-6));
    assert!(compute_y_max(&Polynomial::new(vec![1.0])).is_err());
}

#[test]
fn payoff_examples() {
    let g1 = scenario("G1").unwrap().game;
    let x = ActionProfile::new(vec![0.25; 3]).unwrap();
    for v in payoff(&g1, &x).unwrap() {
        assert!(close(v, 0.0625, 1e-15));
    }
    let g2 = scenario("G2").unwrap().game;
    let pi = payoff(&g2, &ActionProfile::new(vec![0.3, 0.2, 0.1]).unwrap()).unwrap();
    assert!(close(pi[0], 0.09, 1e-12));
    for g in [&g1, &g2] {
        assert!(payoff(g, &ActionProfile::new(vec![0.0; 3]).unwrap()).unwrap().iter().all(|&v| v == 0.0));
    }
    assert!(ActionProfile::new(vec![-0.1, 0.2]).is_err());
}

#[test]
fn marginal_payoff_examples() {
    let g1 = scenario("G1").unwrap().game;
    let m = marginal_payoff(&g1, &ActionProfile::new(vec![0.25; 3]).unwrap(), 0).unwrap();
    assert!(close(m.value, 0.0, 1e-15));
    assert!(!m.beyond_support);

    let mono = linear_game(1);
    assert!(close(marginal_payoff(&mono, &ActionProfile::new(vec![0.3]).unwrap(), 0).unwrap().value, 0.4, 1e-15));

    let g3 = scenario("G3").unwrap().game;
    let s = (1.0f64 / 8.0).sqrt();
    assert!(marginal_payoff(&g3, &ActionProfile::new(vec![s, s]).unwrap(), 0).unwrap().value.abs() <= 1e-7);

    let g2 = scenario("G2").unwrap().game;
    let m = marginal_payoff(&g2, &ActionProfile::new(vec![0.6, 0.6, 0.0]).unwrap(), 1).unwrap();
    assert!(m.beyond_support);
    assert!(close(m.value, -0.2, 1e-15));
}

#[test]
fn best_response_examples() {
    let g = linear_game(2);
    assert!(close(best_response(&g, 0, 0.5).unwrap(), 0.25, 1e-12));
    assert!(close(best_response(&g, 0, 0.0).unwrap(), 0.5, 1e-12));
    assert_eq!(best_response(&g, 0, 1.0).unwrap(), 0.0);
    assert!(best_response(&g, 0, -1.0).is_err());
}

#[test]
fn nash_g1() {
    let x = solve_nash(&scenario("G1").unwrap().game, 1e-12).unwrap();
    for v in x.as_slice() {
        assert!(close(*v, 0.25, 1e-6));
    }
}

#[test]
fn nash_g2() {
    let x = solve_nash(&scenario("G2").unwrap().game, 1e-12).unwrap();
    for (a, b) in x.as_slice().iter().zip([0.3, 0.2, 0.1]) {
        assert!(close(*a, b, 1e-6));
    }
}

#[test]
fn nash_g3() {
    let x = solve_nash(&scenario("G3").unwrap().game, 1e-12).unwrap();
    for v in x.as_slice() {
        assert!(close(*v, 0.353553, 1e-6));
    }
}

#[test]
fn nash_g4_stated_value() {
    let x = solve_nash(&scenario("G4").unwrap().game, 1e-12).unwrap();
    let want = (1.0f64 / 20.0).cbrt();
    assert!(close(want, 0.368403, 1e-6));
    for v in x.as_slice() {
        assert!(close(*v, want, 1e-6), "G4 equilibrium {v} vs stated {want}");
    }
}

#[test]
fn nash_g4_first_order_conditions() {
    let g4 = scenario("G4").unwrap().game;
    let x = solve_nash(&g4, 1e-12).unwrap();
    for r in foc_residuals(&g4, &x).unwrap() {
        assert!(r.abs() <= 1e-9);
    }
    for v in x.as_slice() {
        assert!(close(*v, 0.1f64.cbrt(), 1e-9));
    }
}

#[test]
fn nash_g5() {
    let x = solve_nash(&scenario("G5").unwrap().game, 1e-12).unwrap();
    let want = (3.0f64 / 5.0).sqrt() / 3.0;
    for v in x.as_slice() {
        assert!(close(*v, want, 1e-6));
        assert!(close(*v, 0.258199, 1e-6));
    }
}

#[test]
fn nash_corner_equilibrium() {
    let price = PriceFunction::linear(1.0, 1.0).unwrap();
    let g = CournotGame::new(price, vec![CostFunction::zero(), CostFunction::new(CostKind::Linear, &[0.9]).unwrap()]).unwrap();
    let x = solve_nash(&g, 1e-10).unwrap();
    assert!(close(x.as_slice()[0], 0.5, 1e-9));
    assert_eq!(x.as_slice()[1], 0.0);
    let r = foc_residuals(&g, &x).unwrap();
    assert!(r[1] <= 0.0);
}

#[test]
fn nash_is_best_response_fixed_point() {
    for id in ["G1", "G2", "G3", "G4", "G5"] {
        let g = scenario(id).unwrap().game;
        let tol = 1e-10;
        let x = solve_nash(&g, tol).unwrap();
        let total = x.total();
        for i in 0..g.n_players() {
            let br = best_response(&g, i, total - x.as_slice()[i]).unwrap();
            assert!((br - x.as_slice()[i]).abs() <= tol, "{id} player {i}");
            let m = marginal_payoff(&g, &x, i).unwrap().value;
            assert!(m.abs() <= 10.0 * tol, "{id} player {i}: {m}");
        }
    }
}

#[test]
fn nash_rejects_bad_options() {
    let g = linear_game(2);
    assert!(solve_nash_with(
        &g,
        &NashOptions {
            damping: 0.0,
            ..NashOptions::default()
        }
    )
    .is_err());
    let err = solve_nash_with(
        &g,
        &NashOptions {
            max_iters: 1,
            tol: 1e-15,
            ..NashOptions::default()
        },
    )
    .unwrap_err();
    assert!(matches!(err, cournot_core::Error::NoConvergence { .. }));
}

#[test]
fn spec_round_trips_through_toml() {
    for id in ["G1", "G2", "G3", "G4", "G5"] {
        let g = scenario(id).unwrap().game;
        let text = g.to_spec().to_toml_string().unwrap();
        let back = CournotGame::from_toml_str(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_spec().to_toml_string().unwrap(), text);
    }
}
