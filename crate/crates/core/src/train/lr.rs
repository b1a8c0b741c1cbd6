use serde::{Deserialize, Serialize};

/// Cosine annealing with warm restarts.
///
/// `eta(k) = eta_min + (eta_max - eta_min) (1 + cos(pi t_cur / t_i)) / 2`,
/// where the first cycle lasts `first_period` epochs and each later cycle is
/// `period_mult` times longer than the previous one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineWarmRestarts {
    pub eta_max: f64,
    pub eta_min: f64,
    pub first_period: usize,
    pub period_mult: usize,
}

impl Default for CosineWarmRestarts {
    fn default() -> Self {
        CosineWarmRestarts {
            eta_max: 0.01,
            eta_min: 1e-4,
            first_period: 100,
            period_mult: 2,
        }
    }
}

impl CosineWarmRestarts {
    /// Learning rate used for the update at zero-based epoch `k`.
    pub fn at(&self, k: usize) -> f64 {
        let (t_cur, t_i) = self.cycle_position(k);
        let cos = (std::f64::consts::PI * t_cur as f64 / t_i as f64).cos();
        self.eta_min + 0.5 * (self.eta_max - self.eta_min) * (1.0 + cos)
    }

    fn cycle_position(&self, k: usize) -> (usize, usize) {
        let mut t_i = self.first_period.max(1);
        let mut t_cur = k;
        if self.period_mult <= 1 {
            return (t_cur % t_i, t_i);
        }
        while t_cur >= t_i {
            t_cur -= t_i;
            t_i = t_i.saturating_mul(self.period_mult);
        }
        (t_cur, t_i)
    }
}
