use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Client-side throttling for live backend calls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateLimit {
    /// Concurrent in-flight requests allowed per backend.
    pub max_in_flight: usize,
    /// Token refill rate; `None` disables the bucket.
    pub requests_per_second: Option<f64>,
    /// Bucket capacity.
    pub burst: u32,
}

impl Default for RateLimit {
    fn default() -> Self {
        Self { max_in_flight: 1, requests_per_second: None, burst: 1 }
    }
}

struct Bucket {
    tokens: f64,
    last: Instant,
}

pub(crate) struct Limiter {
    cfg: RateLimit,
    in_flight: Mutex<usize>,
    freed: Condvar,
    bucket: Mutex<Bucket>,
}

pub(crate) struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("limiter poisoned");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

impl Limiter {
    pub(crate) fn new(cfg: RateLimit) -> Self {
        let cfg = RateLimit { max_in_flight: cfg.max_in_flight.max(1), burst: cfg.burst.max(1), ..cfg };
        Self {
            cfg,
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
            bucket: Mutex::new(Bucket { tokens: f64::from(cfg.burst), last: Instant::now() }),
        }
    }

    /// Block until a token and an in-flight slot are available.
    pub(crate) fn acquire(&self) -> Permit<'_> {
        self.take_token();
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.cfg.max_in_flight {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        Permit(self)
    }

    fn take_token(&self) {
        let Some(rate) = self.cfg.requests_per_second.filter(|r| *r > 0.0) else {
            return;
        };
        loop {
            let wait = {
                let mut b = self.bucket.lock().expect("limiter poisoned");
                let now = Instant::now();
                let refill = now.duration_since(b.last).as_secs_f64() * rate;
                b.tokens = (b.tokens + refill).min(f64::from(self.cfg.burst));
                b.last = now;
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - b.tokens) / rate)
            };
            std::thread::sleep(wait);
        }
    }
}
