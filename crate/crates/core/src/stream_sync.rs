//! Alignment of multi-rate streams onto head-camera timestamps.
//!
//! Matching is causal: each head sample takes the latest sample of every
//! other stream at or before its own timestamp. Head samples lacking a match
//! within `max_gap` in any stream are dropped, never interpolated.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::frame::Timestamp;

#[derive(Debug, Clone, PartialEq)]
pub struct SampleStream<P> {
    pub name: String,
    pub rate_hz: f64,
    pub samples: Vec<(Timestamp, P)>,
}

impl<P> SampleStream<P> {
    pub fn new(name: impl Into<String>, rate_hz: f64, samples: Vec<(Timestamp, P)>) -> Self {
        Self { name: name.into(), rate_hz, samples }
    }

    fn check(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::EmptyStream(self.name.clone()));
        }
        for (index, w) in self.samples.windows(2).enumerate() {
            if !(w[1].0 .0 > w[0].0 .0) {
                return Err(Error::NonMonotoneTimestamps { stream: self.name.clone(), index: index + 1 });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Matched<P> {
    pub source_t: Timestamp,
    pub payload: P,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncedFrame<P> {
    pub t: Timestamp,
    pub head: P,
    pub matched: BTreeMap<String, Matched<P>>,
}

impl<P> SyncedFrame<P> {
    pub fn gap(&self, stream: &str) -> Option<f64> {
        self.matched.get(stream).map(|m| self.t.0 - m.source_t.0)
    }
}

/// Twice the period of the slowest stream, i.e. one dropped sample tolerated.
pub fn default_max_gap<P>(others: &[SampleStream<P>]) -> f64 {
    let slowest = others.iter().map(|s| s.rate_hz).fold(f64::INFINITY, f64::min);
    if slowest.is_finite() && slowest > 0.0 {
        2.0 / slowest
    } else {
        f64::INFINITY
    }
}

pub fn align_streams<P: Clone>(
    head: &SampleStream<P>,
    others: &[SampleStream<P>],
    max_gap: f64,
) -> Result<Vec<SyncedFrame<P>>> {
    if !(max_gap > 0.0) {
        return Err(Error::InvalidMaxGap(max_gap));
    }
    head.check()?;
    for s in others {
        s.check()?;
    }
    let mut out = Vec::with_capacity(head.samples.len());
    'frames: for (t, payload) in &head.samples {
        let mut matched = BTreeMap::new();
        for s in others {
            let idx = s.samples.partition_point(|(ts, _)| ts.0 <= t.0);
            if idx == 0 {
                continue 'frames;
            }
            let (ts, p) = &s.samples[idx - 1];
            if t.0 - ts.0 > max_gap {
                continue 'frames;
            }
            matched.insert(s.name.clone(), Matched { source_t: *ts, payload: p.clone() });
        }
        out.push(SyncedFrame { t: *t, head: payload.clone(), matched });
    }
    Ok(out)
}

/// Rebuilds head and per-stream sample lists from synced frames, keeping each
/// distinct source sample once.
pub fn frames_to_streams<P: Clone>(
    head_name: &str,
    head_rate: f64,
    frames: &[SyncedFrame<P>],
    rates: &BTreeMap<String, f64>,
) -> (SampleStream<P>, Vec<SampleStream<P>>) {
    let head = SampleStream::new(head_name, head_rate, frames.iter().map(|f| (f.t, f.head.clone())).collect());
    let mut per: BTreeMap<String, Vec<(Timestamp, P)>> = BTreeMap::new();
    for f in frames {
        for (name, m) in &f.matched {
            let v = per.entry(name.clone()).or_default();
            if v.last().is_none_or(|(ts, _)| ts.0 < m.source_t.0) {
                v.push((m.source_t, m.payload.clone()));
            }
        }
    }
    let others = per
        .into_iter()
        .map(|(name, samples)| {
            let rate = rates.get(&name).copied().unwrap_or(head_rate);
            SampleStream::new(name, rate, samples)
        })
        .collect();
    (head, others)
}
