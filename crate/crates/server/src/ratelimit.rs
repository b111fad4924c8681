use std::collections::{HashMap, VecDeque};
use std::net::IpAddr;
use std::time::{Duration, Instant};

const WINDOW: Duration = Duration::from_secs(60);

/// Sliding one-minute window per source address.
#[derive(Debug)]
pub struct RateLimiter {
    per_minute: u32,
    hits: HashMap<IpAddr, VecDeque<Instant>>,
}

impl RateLimiter {
    /// `per_minute == 0` disables limiting.
    pub fn new(per_minute: u32) -> Self {
        RateLimiter {
            per_minute,
            hits: HashMap::new(),
        }
    }

    /// Records a hit if the address is under its limit.
    pub fn try_acquire(&mut self, addr: IpAddr, now: Instant) -> bool {
        if self.per_minute == 0 {
            return true;
        }
        let q = self.hits.entry(addr).or_default();
        while q.front().is_some_and(|t| now.duration_since(*t) >= WINDOW) {
            q.pop_front();
        }
        if q.len() >= self.per_minute as usize {
            return false;
        }
        q.push_back(now);
        if self.hits.len() > 10_000 {
            self.hits
                .retain(|_, q| q.back().is_some_and(|t| now.duration_since(*t) < WINDOW));
        }
        true
    }
}
