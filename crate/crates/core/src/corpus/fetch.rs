//! Paged, budgeted fetching through a source adapter.

use std::collections::{HashSet, VecDeque};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Post;

const HOUR: f64 = 3600.0;

/// One page returned by a source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePage {
    pub posts: Vec<Post>,
    pub next_cursor: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("source error: {0}")]
pub struct SourceError(pub String);

/// A paged post source: a cursor goes in, a page comes out. `None` requests
/// the first page.
pub trait SourceAdapter {
    fn fetch_page(&mut self, cursor: Option<&str>) -> Result<SourcePage, SourceError>;
}

pub trait Clock {
    /// Seconds since an arbitrary origin.
    fn now(&self) -> f64;
    fn sleep(&mut self, secs: f64);
}

/// Wall clock; `sleep` blocks the thread.
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self { origin: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.origin.elapsed().as_secs_f64()
    }

    fn sleep(&mut self, secs: f64) {
        if secs > 0.0 {
            std::thread::sleep(Duration::from_secs_f64(secs));
        }
    }
}

/// Clock that advances only when slept on.
#[derive(Debug, Default, Clone)]
pub struct SimulatedClock {
    pub t: f64,
}

impl Clock for SimulatedClock {
    fn now(&self) -> f64 {
        self.t
    }

    fn sleep(&mut self, secs: f64) {
        if secs > 0.0 {
            self.t += secs;
        }
    }
}

/// Request budget over a rolling one-hour window.
///
/// Each issued request holds one token for exactly one hour, so no
/// half-open hour interval ever contains more than `per_hour` requests.
#[derive(Debug, Clone)]
pub struct RequestBudget {
    per_hour: u32,
    issued: VecDeque<f64>,
}

impl RequestBudget {
    pub fn new(per_hour: u32) -> Self {
        assert!(per_hour > 0, "budget must be positive");
        Self {
            per_hour,
            issued: VecDeque::new(),
        }
    }

    /// Blocks on `clock` until a request may be issued, then records it.
    /// Returns the time waited.
    pub fn acquire(&mut self, clock: &mut dyn Clock) -> f64 {
        let mut waited = 0.0;
        loop {
            let now = clock.now();
            while self.issued.front().is_some_and(|&t| t + HOUR <= now) {
                self.issued.pop_front();
            }
            if self.issued.len() < self.per_hour as usize {
                self.issued.push_back(now);
                return waited;
            }
            let wait = self.issued[0] + HOUR - now;
            clock.sleep(wait);
            waited += wait;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FetchConfig {
    pub budget_per_hour: u32,
    /// Retries per page after the first failed attempt.
    pub max_retries: u32,
    pub initial_backoff_secs: f64,
    pub max_backoff_secs: f64,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            budget_per_hour: 5000,
            max_retries: 5,
            initial_backoff_secs: 1.0,
            max_backoff_secs: 300.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FetchStats {
    pub requests: u64,
    pub retries: u64,
    pub pages: u64,
    pub posts: u64,
    pub waited_secs: f64,
    /// Clock reading at each issued request.
    pub request_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FetchError {
    #[error("budget must be positive")]
    ZeroBudget,
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: SourceError },
    #[error("cursor {0:?} repeated in one chain")]
    RepeatedCursor(String),
}

/// Iterator over the posts of a cursor chain, in page order.
pub struct FetchStream<'a, A: SourceAdapter + ?Sized> {
    adapter: &'a mut A,
    clock: &'a mut dyn Clock,
    config: FetchConfig,
    budget: RequestBudget,
    buffer: VecDeque<Post>,
    cursor: Option<String>,
    seen: HashSet<String>,
    done: bool,
    stats: FetchStats,
}

/// Drains `adapter`'s cursor chain without exceeding the hourly budget.
///
/// Failed page requests are retried with exponential backoff (each attempt
/// spends budget); after `max_retries` the error is yielded and the stream ends.
pub fn fetch_all<'a, A: SourceAdapter + ?Sized>(
    adapter: &'a mut A,
    config: FetchConfig,
    clock: &'a mut dyn Clock,
) -> Result<FetchStream<'a, A>, FetchError> {
    if config.budget_per_hour == 0 {
        return Err(FetchError::ZeroBudget);
    }
    Ok(FetchStream {
        adapter,
        clock,
        budget: RequestBudget::new(config.budget_per_hour),
        config,
        buffer: VecDeque::new(),
        cursor: None,
        seen: HashSet::new(),
        done: false,
        stats: FetchStats::default(),
    })
}

impl<A: SourceAdapter + ?Sized> FetchStream<'_, A> {
    pub fn stats(&self) -> &FetchStats {
        &self.stats
    }

    fn next_page(&mut self) -> Result<(), FetchError> {
        let mut backoff = self.config.initial_backoff_secs;
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.stats.waited_secs += self.budget.acquire(self.clock);
            self.stats.requests += 1;
            self.stats.request_times.push(self.clock.now());
            match self.adapter.fetch_page(self.cursor.as_deref()) {
                Ok(page) => {
                    self.stats.pages += 1;
                    self.stats.posts += page.posts.len() as u64;
                    self.buffer.extend(page.posts);
                    match page.next_cursor {
                        Some(next) => {
                            if !self.seen.insert(next.clone()) {
                                return Err(FetchError::RepeatedCursor(next));
                            }
                            self.cursor = Some(next);
                        }
                        None => self.done = true,
                    }
                    return Ok(());
                }
                Err(e) if attempt <= self.config.max_retries => {
                    self.stats.retries += 1;
                    log::warn!("page request failed (attempt {attempt}), retrying in {backoff}s: {e}");
                    self.clock.sleep(backoff);
                    backoff = (backoff * 2.0).min(self.config.max_backoff_secs);
                }
                Err(e) => {
                    return Err(FetchError::Exhausted { attempts: attempt, last: e });
                }
            }
        }
    }
}

impl<A: SourceAdapter + ?Sized> Iterator for FetchStream<'_, A> {
    type Item = Result<Post, FetchError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(p) = self.buffer.pop_front() {
                return Some(Ok(p));
            }
            if self.done {
                return None;
            }
            if let Err(e) = self.next_page() {
                self.done = true;
                return Some(Err(e));
            }
        }
    }
}
