//! Token-bucket rate limiter for outbound requests.

use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    /// `refill_per_sec` tokens are added every second up to `capacity`.
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        let capacity = f64::from(capacity.max(1));
        TokenBucket { capacity, refill_per_sec, state: Mutex::new((capacity, Instant::now())) }
    }

    /// Takes a token if one is available, otherwise returns the wait needed.
    pub fn try_acquire(&self) -> Result<(), Duration> {
        let mut guard = self.state.lock().expect("rate limiter poisoned");
        let (tokens, last) = &mut *guard;
        let now = Instant::now();
        *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.refill_per_sec).min(self.capacity);
        *last = now;
        if *tokens >= 1.0 {
            *tokens -= 1.0;
            Ok(())
        } else if self.refill_per_sec > 0.0 {
            Err(Duration::from_secs_f64((1.0 - *tokens) / self.refill_per_sec))
        } else {
            Err(Duration::from_secs(1))
        }
    }

    /// Blocks until a token is available.
    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire() {
            thread::sleep(wait);
        }
    }
}
