use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Token-bucket limiter shared by every caller of one backend instance.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<BucketState>,
}

#[derive(Debug)]
struct BucketState {
    tokens: f64,
    last: Instant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateLimit {
    pub capacity: u32,
    pub refill_per_sec: f64,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        Self::starting_at(capacity, refill_per_sec, Instant::now())
    }

    pub fn from_limit(limit: RateLimit) -> Self {
        Self::new(limit.capacity, limit.refill_per_sec)
    }

    fn starting_at(capacity: u32, refill_per_sec: f64, now: Instant) -> Self {
        let capacity = f64::from(capacity.max(1));
        Self {
            capacity,
            refill_per_sec: refill_per_sec.max(f64::MIN_POSITIVE),
            state: Mutex::new(BucketState {
                tokens: capacity,
                last: now,
            }),
        }
    }

    /// Takes a token at `now`, or returns how long to wait for one.
    pub fn try_acquire_at(&self, now: Instant) -> Result<(), Duration> {
        let mut st = self.state.lock().expect("rate limiter poisoned");
        let elapsed = now.saturating_duration_since(st.last).as_secs_f64();
        st.tokens = (st.tokens + elapsed * self.refill_per_sec).min(self.capacity);
        st.last = st.last.max(now);
        if st.tokens >= 1.0 {
            st.tokens -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - st.tokens) / self.refill_per_sec))
        }
    }

    pub fn acquire(&self) {
        while let Err(wait) = self.try_acquire_at(Instant::now()) {
            std::thread::sleep(wait);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn burst_then_refill() {
        let t0 = Instant::now();
        let bucket = TokenBucket::starting_at(2, 1.0, t0);
        assert!(bucket.try_acquire_at(t0).is_ok());
        assert!(bucket.try_acquire_at(t0).is_ok());
        let wait = bucket.try_acquire_at(t0).unwrap_err();
        assert!(wait <= Duration::from_secs(1));
        assert!(bucket.try_acquire_at(t0 + Duration::from_millis(1001)).is_ok());
    }

    #[test]
    fn never_exceeds_capacity() {
        let t0 = Instant::now();
        let bucket = TokenBucket::starting_at(3, 10.0, t0);
        let later = t0 + Duration::from_secs(60);
        for _ in 0..3 {
            assert!(bucket.try_acquire_at(later).is_ok());
        }
        assert!(bucket.try_acquire_at(later).is_err());
    }
}
