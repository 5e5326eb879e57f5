use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Half-width, in standard deviations, of the Gaussian core window used
/// by the quadrature. Mass outside is below 1e-18.
pub(crate) const GAUSSIAN_WINDOW: f64 = 9.0;
const MOMENT_CUTOFF: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseFamily {
    Gaussian,
    Uniform,
}

/// Zero-mean additive noise with standard deviation `sigma`. Both
/// families are unimodal at zero with bounded density.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub family: NoiseFamily,
    pub sigma: f64,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64) -> Self {
        NoiseSpec {
            family: NoiseFamily::Gaussian,
            sigma,
        }
    }

    pub fn uniform(sigma: f64) -> Self {
        NoiseSpec {
            family: NoiseFamily::Uniform,
            sigma,
        }
    }

    /// `sigma = 0` is accepted and means a deterministic policy; the
    /// expectation and score machinery require `sigma > 0`.
    pub fn check(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return Err(Error::domain(format!("noise sigma must be finite and >= 0, got {}", self.sigma)));
        }
        Ok(())
    }

    pub(crate) fn require_smooth(&self) -> Result<()> {
        self.check()?;
        if self.sigma == 0.0 {
            return Err(Error::domain("expectations require sigma > 0"));
        }
        Ok(())
    }

    /// Density of the noise at `x`.
    pub fn density(&self, x: f64) -> f64 {
        self.family.pdf(x / self.sigma) / self.sigma
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.sigma == 0.0 {
            return 0.0;
        }
        self.sigma * self.family.sample_standard(rng)
    }
}

impl NoiseFamily {
    pub(crate) fn sample_standard<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            NoiseFamily::Gaussian => rng.sample(StandardNormal),
            NoiseFamily::Uniform => rng.random_range(-SQRT3..SQRT3),
        }
    }

    /// Density of the standardized (unit-variance) variable.
    #[inline]
    pub(crate) fn pdf(self, z: f64) -> f64 {
        match self {
            NoiseFamily::Gaussian => INV_SQRT_2PI * (-0.5 * z * z).exp(),
            NoiseFamily::Uniform => {
                if z.abs() <= SQRT3 {
                    0.5 / SQRT3
                } else {
                    0.0
                }
            }
        }
    }

    #[inline]
    pub(crate) fn cdf(self, z: f64) -> f64 {
        match self {
            NoiseFamily::Gaussian => 0.5 * libm::erfc(-z / std::f64::consts::SQRT_2),
            NoiseFamily::Uniform => ((z + SQRT3) / (2.0 * SQRT3)).clamp(0.0, 1.0),
        }
    }

    #[inline]
    fn sf(self, z: f64) -> f64 {
        match self {
            NoiseFamily::Gaussian => 0.5 * libm::erfc(z / std::f64::consts::SQRT_2),
            NoiseFamily::Uniform => 1.0 - self.cdf(z),
        }
    }

    /// Standardized interval carrying all quadrature nodes.
    pub(crate) fn window(self) -> (f64, f64) {
        match self {
            NoiseFamily::Gaussian => (-GAUSSIAN_WINDOW, GAUSSIAN_WINDOW),
            NoiseFamily::Uniform => (-SQRT3, SQRT3),
        }
    }

    /// `out[k] = int_lo^hi z^k f(z) dz` for `k < out.len()`; `hi` may be
    /// `+inf`.
    pub(crate) fn moments(self, lo: f64, hi: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|m| *m = 0.0);
        if !(hi > lo) || out.is_empty() {
            return;
        }
        match self {
            NoiseFamily::Gaussian => {
                let lo = lo.max(-MOMENT_CUTOFF);
                let hi = if hi >= MOMENT_CUTOFF { f64::INFINITY } else { hi };
                if !(hi > lo) {
                    return;
                }
                out[0] = if lo >= 0.0 {
                    self.sf(lo) - self.sf(hi)
                } else {
                    self.cdf(hi) - self.cdf(lo)
                };
                let (pl, ph) = (self.pdf(lo), if hi.is_finite() { self.pdf(hi) } else { 0.0 });
                if out.len() > 1 {
                    out[1] = pl - ph;
                }
                // int z^k phi = (k-1) M_{k-2} + lo^{k-1} phi(lo) - hi^{k-1} phi(hi)
                let (mut lp, mut hp) = (lo, if hi.is_finite() { hi } else { 0.0 });
                for k in 2..out.len() {
                    out[k] = (k - 1) as f64 * out[k - 2] + lp * pl - hp * ph;
                    lp *= lo;
                    hp *= if hi.is_finite() { hi } else { 0.0 };
                }
            }
            NoiseFamily::Uniform => {
                let (a, b) = (lo.max(-SQRT3), hi.min(SQRT3));
                if !(b > a) {
                    return;
                }
                let (mut pa, mut pb) = (a, b);
                for (k, m) in out.iter_mut().enumerate() {
                    *m = (pb - pa) / ((k + 1) as f64 * 2.0 * SQRT3);
                    pa *= a;
                    pb *= b;
                }
            }
        }
    }

    /// Only the Gaussian has a differentiable log-density.
    pub(crate) fn has_score(self) -> bool {
        matches!(self, NoiseFamily::Gaussian)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + k as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn gaussian_moments_match_simpson() {
        let mut m = [0.0; 6];
        for &(lo, hi) in &[(-1.0, 0.5), (0.3, 4.0), (-6.0, -2.0), (2.0, 12.0)] {
            NoiseFamily::Gaussian.moments(lo, hi, &mut m);
            for (k, mk) in m.iter().enumerate() {
                let r = simpson(|z| z.powi(k as i32) * NoiseFamily::Gaussian.pdf(z), lo, hi, 20_000);
                assert!((mk - r).abs() < 1e-11, "k={k} [{lo},{hi}] {mk} vs {r}");
            }
        }
    }

    #[test]
    fn gaussian_moments_to_infinity() {
        let mut m = [0.0; 4];
        NoiseFamily::Gaussian.moments(f64::NEG_INFINITY.max(-40.0), f64::INFINITY, &mut m);
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!(m[1].abs() < 1e-15);
        assert!((m[2] - 1.0).abs() < 1e-14);
        assert!(m[3].abs() < 1e-14);
    }

    #[test]
    fn far_tail_mass_stays_positive() {
        let mut m = [0.0; 2];
        NoiseFamily::Gaussian.moments(20.0, 21.0, &mut m);
        assert!(m[0] > 0.0 && m[0] < 1e-80);
        assert!(m[1] > 20.0 * m[0]);
    }

    #[test]
    fn uniform_has_unit_variance() {
        let mut m = [0.0; 3];
        NoiseFamily::Uniform.moments(-10.0, 10.0, &mut m);
        assert!((m[0] - 1.0).abs() < 1e-15);
        assert!(m[1].abs() < 1e-15);
        assert!((m[2] - 1.0).abs() < 1e-14);
    }
}
