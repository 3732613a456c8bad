use std::time::Duration;

use crate::error::{Error, Result};

/// Exponential backoff for transport failures.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1` (1-based `attempt`): base, 2*base, 4*base, ...
    pub fn delay_after(&self, attempt: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(attempt.saturating_sub(1))
    }
}

/// Run `op` until it succeeds, fails with a non-transport error, or attempts run out.
///
/// `op` receives the 1-based attempt number. The final transport error is
/// re-tagged with the number of attempts made.
pub fn with_retries<T>(
    policy: &RetryPolicy,
    mut sleep: impl FnMut(Duration),
    mut op: impl FnMut(u32) -> Result<T>,
) -> Result<T> {
    let mut attempt = 1;
    loop {
        match op(attempt) {
            Err(Error::Transport { message, .. }) => {
                if attempt >= policy.max_attempts {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message,
                    });
                }
                log::warn!("transport error on attempt {attempt}: {message}; retrying");
                sleep(policy.delay_after(attempt));
                attempt += 1;
            }
            other => return other,
        }
    }
}
