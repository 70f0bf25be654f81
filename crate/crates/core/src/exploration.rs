//! Ornstein-Uhlenbeck exploration noise.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OuParams {
    pub theta: f64,
    pub mu: f64,
    pub sigma: f64,
    pub dt: f64,
}

impl Default for OuParams {
    fn default() -> Self {
        OuParams {
            theta: 0.15,
            mu: 0.0,
            sigma: 0.2,
            dt: 1.0,
        }
    }
}

/// Discretized OU process, `x += theta (mu - x) dt + sigma sqrt(dt) xi`.
#[derive(Clone, Debug, PartialEq)]
pub struct OuProcess {
    pub theta: f64,
    pub mu: Vec<f64>,
    pub sigma: f64,
    pub dt: f64,
    x: Vec<f64>,
}

impl OuProcess {
    pub fn new(dim: usize, params: OuParams) -> Result<Self> {
        Self::with_mean(vec![params.mu; dim], params.theta, params.sigma, params.dt)
    }

    pub fn with_mean(mu: Vec<f64>, theta: f64, sigma: f64, dt: f64) -> Result<Self> {
        if !(theta >= 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!("OU theta must be >= 0, got {theta}")));
        }
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("OU sigma must be >= 0, got {sigma}")));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("OU dt must be > 0, got {dt}")));
        }
        if mu.is_empty() || !mu.iter().all(|m| m.is_finite()) {
            return Err(Error::InvalidParameter("OU mean must be a finite non-empty vector".into()));
        }
        let x = mu.clone();
        Ok(OuProcess {
            theta,
            mu,
            sigma,
            dt,
            x,
        })
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }

    pub fn set_state(&mut self, x: &[f64]) {
        self.x.copy_from_slice(x);
    }

    pub fn reset(&mut self) {
        self.x.copy_from_slice(&self.mu);
    }

    pub fn sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Vec<f64> {
        let diffusion = self.sigma * self.dt.sqrt();
        for (x, mu) in self.x.iter_mut().zip(&self.mu) {
            let xi: f64 = rng.sample(StandardNormal);
            *x += self.theta * (mu - *x) * self.dt + diffusion * xi;
        }
        self.x.clone()
    }

    /// Stationary variance of the discrete recurrence,
    /// `sigma^2 dt / (1 - (1 - theta dt)^2)`.
    pub fn stationary_variance(&self) -> f64 {
        let rho = 1.0 - self.theta * self.dt;
        self.sigma * self.sigma * self.dt / (1.0 - rho * rho)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn reset_returns_to_mean() {
        let mut p = OuProcess::new(2, OuParams::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        p.sample(&mut rng);
        p.reset();
        assert_eq!(p.state(), &[0.0, 0.0]);
        p.reset();
        assert_eq!(p.state(), &[0.0, 0.0]);
    }

    #[test]
    fn zero_volatility_is_fixed_point() {
        let mut p = OuProcess::with_mean(vec![0.5], 0.15, 0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(p.sample(&mut rng), vec![0.5]);
        }
    }

    #[test]
    fn deterministic_decay() {
        let mut p = OuProcess::with_mean(vec![0.0], 0.15, 0.0, 1.0).unwrap();
        p.set_state(&[1.0]);
        let x = p.sample(&mut ChaCha8Rng::seed_from_u64(0));
        assert!((x[0] - 0.85).abs() < 1e-15);
    }

    #[test]
    fn zero_reversion_is_random_walk() {
        let sigma = 0.3;
        let mut p = OuProcess::with_mean(vec![0.0], 0.0, sigma, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 200_000;
        let mut prev = 0.0;
        let (mut sum, mut sum_sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = p.sample(&mut rng)[0];
            let inc = x - prev;
            prev = x;
            sum += inc;
            sum_sq += inc * inc;
        }
        let mean = sum / n as f64;
        let var = sum_sq / n as f64 - mean * mean;
        assert!(mean.abs() < 5.0 * sigma / (n as f64).sqrt());
        assert!((var / (sigma * sigma) - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn same_seed_same_noise() {
        let mut a = OuProcess::new(3, OuParams::default()).unwrap();
        let mut b = a.clone();
        let mut ra = ChaCha8Rng::seed_from_u64(4);
        let mut rb = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..50 {
            assert_eq!(a.sample(&mut ra), b.sample(&mut rb));
        }
    }

    #[test]
    fn mean_reverts_geometrically() {
        // ensemble mean after t steps from x0 is x0 (1 - theta dt)^t
        let params = OuParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let runs = 4000;
        let steps = 10;
        let mut total = 0.0;
        for _ in 0..runs {
            let mut p = OuProcess::new(1, params).unwrap();
            p.set_state(&[1.0]);
            let mut x = 0.0;
            for _ in 0..steps {
                x = p.sample(&mut rng)[0];
            }
            total += x;
        }
        let mean = total / runs as f64;
        let expected = (1.0 - params.theta).powi(steps);
        // ensemble std at t=10 is about 0.45, so the mean's std is ~0.007
        assert!((mean - expected).abs() < 0.03, "mean {mean} expected {expected}");
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(OuProcess::with_mean(vec![0.0], -1.0, 0.2, 1.0).is_err());
        assert!(OuProcess::with_mean(vec![0.0], 0.15, -0.2, 1.0).is_err());
        assert!(OuProcess::with_mean(vec![0.0], 0.15, 0.2, 0.0).is_err());
        assert!(OuProcess::with_mean(vec![], 0.15, 0.2, 1.0).is_err());
    }
}
