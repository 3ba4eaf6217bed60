//! Per-run measurements: hit samples, goodput, representation counts and
//! source load.

use crate::csm::CsmStats;
use crate::forwarder::{InterestOutcome, RouterCounters};
use crate::types::SimTime;

/// Time-stamped hit samples of one router. Aggregated Interests count as
/// hits.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HitLog {
    samples: Vec<(SimTime, bool)>,
    hits: u64,
}

impl HitLog {
    pub fn record(&mut self, outcome: InterestOutcome, t: SimTime) {
        let h = outcome.hit_sample();
        self.hits += h as u64;
        self.samples.push((t, h));
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[(SimTime, bool)] {
        &self.samples
    }

    /// Mean of the samples in `[t, t + span]`; `None` for an empty window.
    pub fn rate(&self, t: SimTime, span: SimTime) -> Option<f64> {
        let end = t + span;
        let lo = self.samples.partition_point(|(s, _)| *s < t);
        let hi = self.samples.partition_point(|(s, _)| *s <= end);
        let window = &self.samples[lo..hi];
        if window.is_empty() {
            return None;
        }
        let hits = window.iter().filter(|(_, h)| *h).count();
        Some(hits as f64 / window.len() as f64)
    }

    /// Whole-run mean.
    pub fn overall(&self) -> Option<f64> {
        (!self.samples.is_empty()).then(|| self.hits as f64 / self.samples.len() as f64)
    }
}

pub fn record_interest_outcome(log: &mut HitLog, outcome: InterestOutcome, t: SimTime) {
    log.record(outcome, t);
}

pub fn cache_hit_rate(log: &HitLog, t: SimTime, span: SimTime) -> Option<f64> {
    log.rate(t, span)
}

/// `1 - sent / received`; `None` when clients received nothing.
pub fn load_reduction(source_sent: u64, client_received: u64) -> Option<f64> {
    (client_received > 0).then(|| 1.0 - source_sent as f64 / client_received as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RouterMetrics {
    pub name: String,
    pub hits: HitLog,
    pub counters: RouterCounters,
    pub csm: CsmStats,
    pub occupancy: usize,
    pub inserted_tags: Vec<u64>,
    pub audit_ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientMetrics {
    pub name: String,
    pub video: usize,
    pub start_s: f64,
    pub goodput_bps: Option<f64>,
    pub segments_per_rep: Vec<u64>,
    pub segments_completed: usize,
    pub data_received: u64,
    pub interests_sent: u64,
    pub retransmissions: u64,
    pub stalls: u64,
    pub done: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LinkCounters {
    pub enqueued: u64,
    pub delivered: u64,
    pub in_flight: u64,
}

impl LinkCounters {
    /// Every packet put on a link was delivered or is still travelling.
    pub fn conserved(&self) -> bool {
        self.enqueued == self.delivered + self.in_flight
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsLog {
    pub routers: Vec<RouterMetrics>,
    pub clients: Vec<ClientMetrics>,
    pub representations: Vec<String>,
    pub source_sent: u64,
    pub client_received: u64,
    pub links: LinkCounters,
    pub events: u64,
    pub end_time: SimTime,
    pub all_done: bool,
    /// Segments decoded and checked byte for byte against the library.
    pub verified_segments: usize,
}

impl MetricsLog {
    pub fn load_reduction(&self) -> Option<f64> {
        load_reduction(self.source_sent, self.client_received)
    }

    /// Mean of the per-router whole-run rates, over routers that saw Interests.
    pub fn mean_hit_rate(&self) -> Option<f64> {
        mean(self.routers.iter().filter_map(|r| r.hits.overall()))
    }

    pub fn mean_goodput_bps(&self) -> Option<f64> {
        mean(self.clients.iter().filter_map(|c| c.goodput_bps))
    }

    /// Fraction of completed segments per representation; sums to 1 when
    /// any segment completed.
    pub fn representation_shares(&self) -> Vec<f64> {
        let n = self.representations.len();
        let mut counts = vec![0u64; n];
        for c in &self.clients {
            for (i, k) in c.segments_per_rep.iter().enumerate() {
                counts[i] += k;
            }
        }
        let total: u64 = counts.iter().sum();
        counts
            .iter()
            .map(|&k| if total == 0 { 0.0 } else { k as f64 / total as f64 })
            .collect()
    }

    pub fn segments_completed(&self) -> usize {
        self.clients.iter().map(|c| c.segments_completed).sum()
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}
