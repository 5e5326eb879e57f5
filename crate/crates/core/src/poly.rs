//! Dense real polynomials in ascending-power form.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct Polynomial(Vec<f64>);

impl Polynomial {
    pub fn new(mut coefficients: Vec<f64>) -> Self {
        while coefficients.len() > 1 && coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        Polynomial(coefficients)
    }

    pub fn zero() -> Self {
        Polynomial(Vec::new())
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.0
    }

    /// Degree of the polynomial; the zero polynomial reports 0.
    pub fn degree(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn derivative(&self) -> Polynomial {
        if self.0.len() <= 1 {
            return Polynomial::zero();
        }
        Polynomial(
            self.0
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, &c)| k as f64 * c)
                .collect(),
        )
    }

    /// `q(t) = p(s + t)`, computed by repeated synthetic division.
    pub fn shift(&self, s: f64) -> Polynomial {
        let mut c = self.0.clone();
        let n = c.len();
        for i in 0..n {
            for j in (i..n - 1).rev() {
                c[j] += s * c[j + 1];
            }
        }
        Polynomial(c)
    }

    /// `q(t) = p(k t)`.
    pub fn scale(&self, k: f64) -> Polynomial {
        let mut f = 1.0;
        Polynomial(
            self.0
                .iter()
                .map(|&c| {
                    let v = c * f;
                    f *= k;
                    v
                })
                .collect(),
        )
    }

    /// `q(t) = t p(t)`.
    pub fn mul_x(&self) -> Polynomial {
        if self.0.is_empty() {
            return Polynomial::zero();
        }
        let mut c = Vec::with_capacity(self.0.len() + 1);
        c.push(0.0);
        c.extend_from_slice(&self.0);
        Polynomial(c)
    }

    pub fn add(&self, other: &Polynomial) -> Polynomial {
        let n = self.0.len().max(other.0.len());
        Polynomial(
            (0..n)
                .map(|k| self.0.get(k).copied().unwrap_or(0.0) + other.0.get(k).copied().unwrap_or(0.0))
                .collect(),
        )
    }

    pub fn sub(&self, other: &Polynomial) -> Polynomial {
        self.add(&other.mul_scalar(-1.0))
    }

    pub fn mul_scalar(&self, k: f64) -> Polynomial {
        Polynomial(self.0.iter().map(|&c| c * k).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shift_matches_direct_evaluation() {
        let p = Polynomial::new(vec![1.0, -2.0, 0.5, 3.0]);
        let q = p.shift(0.7);
        for &t in &[-1.0, 0.0, 0.3, 2.0] {
            assert!((q.eval(t) - p.eval(0.7 + t)).abs() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_cubic() {
        let p = Polynomial::new(vec![1.0, 0.0, 0.0, -0.5]);
        assert_eq!(p.derivative().coefficients(), &[0.0, 0.0, -1.5]);
        assert_eq!(p.derivative().derivative().coefficients(), &[0.0, -3.0]);
    }

    #[test]
    fn trailing_zeros_are_trimmed() {
        assert_eq!(Polynomial::new(vec![1.0, -1.0, 0.0, 0.0]).degree(), 1);
    }
}
