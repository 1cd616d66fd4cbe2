//! Trace-driven cache simulation: reactive FIFO/LRU/LFU baselines, the
//! hindsight-optimal proactive bound, and predictor-driven proactive caching.
//!
//! Reactive policies insert on miss, as classically defined. Proactive
//! policies replace the whole cache at every update-interval boundary and
//! never insert between updates. All policies report per-interval hit
//! statistics on the same schedule so the curves are comparable.

use std::collections::{HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{window_aggregate, WindowMatrix};
use crate::trace::{build_request_matrix, RequestLog};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReactivePolicy {
    Fifo,
    Lru,
    Lfu,
}

impl ReactivePolicy {
    pub fn name(&self) -> &'static str {
        match self {
            ReactivePolicy::Fifo => "fifo",
            ReactivePolicy::Lru => "lru",
            ReactivePolicy::Lfu => "lfu",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalStat {
    pub interval: usize,
    pub events: u64,
    pub hits: u64,
}

impl IntervalStat {
    pub fn hit_ratio(&self) -> f64 {
        if self.events == 0 {
            0.0
        } else {
            self.hits as f64 / self.events as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult {
    pub policy: String,
    pub capacity: usize,
    pub events: u64,
    pub hits: u64,
    pub misses: u64,
    pub hit_ratio: f64,
    pub per_interval: Vec<IntervalStat>,
}

impl PolicyResult {
    fn from_interval_hits(
        policy: String,
        capacity: usize,
        per_interval: Vec<IntervalStat>,
    ) -> Self {
        let events: u64 = per_interval.iter().map(|s| s.events).sum();
        let hits: u64 = per_interval.iter().map(|s| s.hits).sum();
        PolicyResult {
            policy,
            capacity,
            events,
            hits,
            misses: events - hits,
            hit_ratio: if events == 0 {
                0.0
            } else {
                hits as f64 / events as f64
            },
            per_interval,
        }
    }
}

/// Tracks hits per update interval; `window_len` only buckets statistics and
/// never changes policy behavior.
struct IntervalCounter {
    window_len: usize,
    stats: Vec<IntervalStat>,
}

impl IntervalCounter {
    fn new(window_len: usize, horizon: usize) -> Self {
        let n = horizon.div_ceil(window_len).max(1);
        IntervalCounter {
            window_len,
            stats: (0..n)
                .map(|interval| IntervalStat {
                    interval,
                    events: 0,
                    hits: 0,
                })
                .collect(),
        }
    }

    fn record(&mut self, slot: usize, hit: bool) {
        let s = &mut self.stats[slot / self.window_len];
        s.events += 1;
        s.hits += hit as u64;
    }
}

/// Resident set plus the per-policy metadata (FIFO queue, recency stamps,
/// cumulative frequency counters).
struct CacheState {
    capacity: usize,
    resident: HashSet<u32>,
    fifo_queue: VecDeque<u32>,
    last_access: HashMap<u32, u64>,
    freq: HashMap<u32, u64>,
    clock: u64,
}

impl CacheState {
    fn new(capacity: usize) -> Self {
        CacheState {
            capacity,
            resident: HashSet::new(),
            fifo_queue: VecDeque::new(),
            last_access: HashMap::new(),
            freq: HashMap::new(),
            clock: 0,
        }
    }

    /// Processes one request: returns whether it hit, inserting on miss and
    /// evicting per policy. Frequency counters cover every request from the
    /// start of the trace, resident or not.
    fn access(&mut self, content: u32, policy: ReactivePolicy) -> bool {
        self.clock += 1;
        *self.freq.entry(content).or_insert(0) += 1;

        if self.resident.contains(&content) {
            self.last_access.insert(content, self.clock);
            return true;
        }
        if self.resident.len() == self.capacity {
            let victim = match policy {
                ReactivePolicy::Fifo => self
                    .fifo_queue
                    .pop_front()
                    .expect("queue tracks residents"),
                ReactivePolicy::Lru => *self
                    .resident
                    .iter()
                    .min_by_key(|&&id| (self.last_access[&id], id))
                    .expect("non-empty cache"),
                ReactivePolicy::Lfu => *self
                    .resident
                    .iter()
                    .min_by_key(|&&id| (self.freq[&id], self.last_access[&id], id))
                    .expect("non-empty cache"),
            };
            self.resident.remove(&victim);
            self.last_access.remove(&victim);
            if policy != ReactivePolicy::Fifo {
                self.fifo_queue.retain(|&id| id != victim);
            }
        }
        self.resident.insert(content);
        self.fifo_queue.push_back(content);
        self.last_access.insert(content, self.clock);
        debug_assert!(self.resident.len() <= self.capacity);
        false
    }
}

/// Runs a classic reactive policy over the log: hit if resident, otherwise
/// insert the request and evict per policy. LFU counts every request of a
/// content from the start of the trace, whether or not it is resident, and
/// breaks ties by least recent access, then lower id.
pub fn simulate_reactive(
    log: &RequestLog,
    policy: ReactivePolicy,
    capacity: usize,
    window_len: usize,
) -> Result<PolicyResult> {
    if capacity == 0 {
        return Err(Error::InvalidArgument("capacity must be >= 1".into()));
    }
    if window_len == 0 {
        return Err(Error::InvalidArgument("window_len must be >= 1".into()));
    }
    let mut counter = IntervalCounter::new(window_len, log.horizon);
    let mut cache = CacheState::new(capacity);
    for event in &log.events {
        let hit = cache.access(event.content_id, policy);
        counter.record(log.slot_of(event), hit);
    }
    Ok(PolicyResult::from_interval_hits(
        policy.name().to_string(),
        capacity,
        counter.stats,
    ))
}

fn events_by_interval(log: &RequestLog, window_len: usize) -> Vec<Vec<(usize, u32)>> {
    let n = log.horizon.div_ceil(window_len).max(1);
    let mut buckets: Vec<Vec<(usize, u32)>> = vec![Vec::new(); n];
    for event in &log.events {
        let slot = log.slot_of(event);
        buckets[slot / window_len].push((slot, event.content_id));
    }
    buckets
}

/// Hindsight bound for proactive caching: each interval's cache holds that
/// interval's true K most-requested contents (ties to the lower id). With
/// capacity >= catalog size this is the serve-everything upper line.
pub fn simulate_optimal(
    log: &RequestLog,
    window_len: usize,
    capacity: usize,
) -> Result<PolicyResult> {
    if capacity == 0 {
        return Err(Error::InvalidArgument("capacity must be >= 1".into()));
    }
    if window_len == 0 {
        return Err(Error::InvalidArgument("window_len must be >= 1".into()));
    }
    let buckets = events_by_interval(log, window_len);
    let mut stats = Vec::with_capacity(buckets.len());
    for (interval, bucket) in buckets.iter().enumerate() {
        let mut counts: HashMap<u32, u64> = HashMap::new();
        for &(_, c) in bucket {
            *counts.entry(c).or_insert(0) += 1;
        }
        let mut ranked: Vec<(u32, u64)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let cache: HashSet<u32> = ranked.iter().take(capacity).map(|&(id, _)| id).collect();
        let hits = bucket.iter().filter(|&&(_, c)| cache.contains(&c)).count() as u64;
        stats.push(IntervalStat {
            interval,
            events: bucket.len() as u64,
            hits,
        });
    }
    Ok(PolicyResult::from_interval_hits(
        "hindsight_optimal".to_string(),
        capacity,
        stats,
    ))
}

/// Proactive predictor-driven simulation. At every interval boundary with at
/// least `history_len` full windows behind it, the cache is atomically
/// replaced by the predictor's Top-K for that interval; earlier intervals run
/// with an empty cache (warm-up) and nothing is inserted on miss.
///
/// The predictor receives the `history_len` x N_c window-count matrix of the
/// windows immediately before the update time, and the update-time index.
pub fn simulate_predictive(
    log: &RequestLog,
    mut predictor: impl FnMut(&WindowMatrix, usize) -> Result<Vec<u32>>,
    window_len: usize,
    history_len: usize,
    capacity: usize,
) -> Result<PolicyResult> {
    if capacity == 0 {
        return Err(Error::InvalidArgument("capacity must be >= 1".into()));
    }
    if history_len == 0 {
        return Err(Error::InvalidArgument("history_len must be >= 1".into()));
    }
    let matrix = build_request_matrix(log);
    let windows = window_aggregate(&matrix, window_len)?;
    let buckets = events_by_interval(log, window_len);

    let mut stats = Vec::with_capacity(buckets.len());
    for (interval, bucket) in buckets.iter().enumerate() {
        let cache: HashSet<u32> = if interval >= history_len {
            let history = windows.slice_rows(interval - history_len, interval);
            let predicted = predictor(&history, interval)?;
            if predicted.len() != capacity {
                return Err(Error::InvalidArgument(format!(
                    "predictor returned {} ids, expected {capacity}",
                    predicted.len()
                )));
            }
            let set: HashSet<u32> = predicted.iter().copied().collect();
            if set.len() != predicted.len() {
                return Err(Error::InvalidArgument(
                    "predictor returned duplicates".into(),
                ));
            }
            if predicted.iter().any(|&id| id == 0 || id > log.catalog_size) {
                return Err(Error::InvalidArgument(
                    "predictor returned out-of-catalog ids".into(),
                ));
            }
            set
        } else {
            HashSet::new()
        };
        let hits = bucket.iter().filter(|&&(_, c)| cache.contains(&c)).count() as u64;
        stats.push(IntervalStat {
            interval,
            events: bucket.len() as u64,
            hits,
        });
    }
    Ok(PolicyResult::from_interval_hits(
        "predictive".to_string(),
        capacity,
        stats,
    ))
}

/// Comparison table across policies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub results: Vec<PolicyResult>,
}

pub fn hit_ratio_report(results: &[PolicyResult]) -> Result<Report> {
    if results.is_empty() {
        return Err(Error::EmptyInput("no policy results".into()));
    }
    Ok(Report {
        results: results.to_vec(),
    })
}

impl Report {
    /// `policy,K,events,hits,misses,hit_ratio` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("policy,K,events,hits,misses,hit_ratio\n");
        for r in &self.results {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.policy, r.capacity, r.events, r.hits, r.misses, r.hit_ratio
            ));
        }
        out
    }

    /// `policy,interval,events,hits,hit_ratio` rows for plotting.
    pub fn per_interval_csv(&self) -> String {
        let mut out = String::from("policy,interval,events,hits,hit_ratio\n");
        for r in &self.results {
            for s in &r.per_interval {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.policy,
                    s.interval,
                    s.events,
                    s.hits,
                    s.hit_ratio()
                ));
            }
        }
        out
    }
}
