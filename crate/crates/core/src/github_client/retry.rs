use std::time::Duration;

use rand::Rng;

/// Exponential backoff for transient failures (5xx, timeouts, dropped
/// connections). Client errors other than rate limiting are never retried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetryPolicy {
    /// Total attempts, including the first one.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub factor: f64,
    /// Relative jitter; 0.2 means the delay is scaled by a factor in [0.8, 1.2].
    pub jitter: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 4,
            base_delay: Duration::from_secs(1),
            factor: 2.0,
            jitter: 0.2,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn delay<R: Rng + ?Sized>(&self, retry: u32, rng: &mut R) -> Duration {
        let exp = self.factor.powi(retry.saturating_sub(1) as i32);
        let scale = if self.jitter > 0.0 {
            rng.gen_range(1.0 - self.jitter..=1.0 + self.jitter)
        } else {
            1.0
        };
        self.base_delay.mul_f64(exp * scale)
    }
}

pub fn is_transient_status(status: u16) -> bool {
    (500..600).contains(&status)
}
