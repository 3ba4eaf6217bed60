//! Traffic endpoints: the content source and adaptive-streaming clients.

use std::collections::{HashMap, VecDeque};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::{ContentLibrary, NamePrefix, Representation};
use crate::error::{Error, Result};
use crate::forwarder::Interest;
use crate::rlnc::{CodedPacket, CodingMatrix, Decoder};
use crate::types::{FaceId, SimTime};

/// Holds every generation of the library at full rank and answers each
/// Interest with a fresh random combination.
pub struct SourceServer {
    id: usize,
    library: Arc<ContentLibrary>,
    matrices: HashMap<NamePrefix, CodingMatrix>,
    sent: u64,
}

impl SourceServer {
    pub fn new(id: usize, library: Arc<ContentLibrary>) -> Self {
        SourceServer {
            id,
            library,
            matrices: HashMap::new(),
            sent: 0,
        }
    }

    pub fn library(&self) -> &Arc<ContentLibrary> {
        &self.library
    }

    /// Data packets sent so far.
    pub fn sent(&self) -> u64 {
        self.sent
    }

    pub fn on_interest<R: Rng + ?Sized>(&mut self, prefix: &NamePrefix, rng: &mut R) -> Result<CodedPacket> {
        if !self.matrices.contains_key(prefix) {
            let payloads = self.library.source_payloads(prefix)?;
            let m = CodingMatrix::from_source_payloads(prefix.clone(), payloads)?;
            self.matrices.insert(prefix.clone(), m);
        }
        let mut p = self.matrices[prefix].recode(rng)?;
        self.sent += 1;
        p.tag = ((self.id as u64 + 1) << 40) | self.sent;
        Ok(p)
    }
}

pub fn source_on_interest<R: Rng + ?Sized>(s: &mut SourceServer, prefix: &NamePrefix, rng: &mut R) -> Result<CodedPacket> {
    s.on_interest(prefix, rng)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    /// Interests in flight per face.
    pub window: usize,
    pub timeout_s: f64,
    pub safety_factor: f64,
    pub low_buffer_segments: f64,
    pub ewma_alpha: f64,
    /// Downloading pauses while this many segments are buffered.
    pub max_buffer_segments: f64,
    pub start_spread_s: f64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            window: 16,
            timeout_s: 2.0,
            safety_factor: 0.9,
            low_buffer_segments: 2.0,
            ewma_alpha: 0.5,
            max_buffer_segments: 6.0,
            start_spread_s: 5.0,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("client window must be at least 1"));
        }
        let positive = [
            ("timeout_s", self.timeout_s),
            ("safety_factor", self.safety_factor),
            ("max_buffer_segments", self.max_buffer_segments),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("client {name} must be positive")));
            }
        }
        if !(self.ewma_alpha > 0.0 && self.ewma_alpha <= 1.0) {
            return Err(Error::config("client ewma_alpha must be in (0, 1]"));
        }
        if !(self.low_buffer_segments >= 0.0 && self.start_spread_s >= 0.0) {
            return Err(Error::config("client buffer threshold and start spread must be non-negative"));
        }
        Ok(())
    }
}

/// Highest representation whose bitrate fits under `safety * goodput`, or
/// the lowest one when the buffer is low or nothing has been measured yet.
pub fn choose_representation<'a>(
    reps: &'a [Representation],
    goodput_bps: Option<f64>,
    buffered_segments: f64,
    cfg: &ClientConfig,
) -> &'a Representation {
    let lowest = &reps[0];
    let Some(goodput) = goodput_bps else {
        return lowest;
    };
    if buffered_segments < cfg.low_buffer_segments {
        return lowest;
    }
    let budget = cfg.safety_factor * goodput;
    reps.iter().rev().find(|r| r.bitrate_bps <= budget).unwrap_or(lowest)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSegment {
    pub segment: usize,
    pub representation: usize,
    pub requested: SimTime,
    pub completed: SimTime,
    pub bits: f64,
}

impl DecodedSegment {
    pub fn goodput_bps(&self) -> f64 {
        let dt = (self.completed - self.requested).as_secs_f64();
        self.bits / dt.max(1e-9)
    }
}

#[derive(Debug)]
struct Active {
    segment: usize,
    rep: usize,
    generation: usize,
    prefix: NamePrefix,
    decoder: Decoder,
    requested: SimTime,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClientStats {
    pub interests_sent: u64,
    pub retransmissions: u64,
    pub data_received: u64,
    pub innovative: u64,
    pub stale: u64,
    pub stalls: u64,
    pub segments_per_rep: Vec<u64>,
    pub bits: f64,
    pub download_time_s: f64,
}

pub struct StreamingClient {
    id: usize,
    video: usize,
    faces: Vec<FaceId>,
    cfg: ClientConfig,
    timeout: SimTime,
    library: Arc<ContentLibrary>,
    start: SimTime,
    next_segment: usize,
    active: Option<Active>,
    inflight: Vec<VecDeque<SimTime>>,
    rr: usize,
    nonce: u64,
    goodput: Option<f64>,
    play_end: Option<SimTime>,
    decoded: Vec<DecodedSegment>,
    stats: ClientStats,
}

impl StreamingClient {
    pub fn new(
        id: usize,
        video: usize,
        faces: Vec<FaceId>,
        start: SimTime,
        cfg: ClientConfig,
        library: Arc<ContentLibrary>,
    ) -> Self {
        let n = faces.len();
        let reps = library.representations().len();
        StreamingClient {
            id,
            video,
            faces,
            timeout: SimTime::from_secs_f64(cfg.timeout_s),
            cfg,
            library,
            start,
            next_segment: 0,
            active: None,
            inflight: vec![VecDeque::new(); n],
            rr: 0,
            nonce: 0,
            goodput: None,
            play_end: None,
            decoded: Vec::new(),
            stats: ClientStats {
                segments_per_rep: vec![0; reps],
                ..ClientStats::default()
            },
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn video(&self) -> usize {
        self.video
    }

    pub fn faces(&self) -> &[FaceId] {
        &self.faces
    }

    pub fn start_time(&self) -> SimTime {
        self.start
    }

    pub fn goodput_estimate(&self) -> Option<f64> {
        self.goodput
    }

    pub fn decoded(&self) -> &[DecodedSegment] {
        &self.decoded
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    pub fn is_done(&self) -> bool {
        self.next_segment >= self.library.segments() && self.active.is_none()
    }

    pub fn inflight(&self) -> usize {
        self.inflight.iter().map(VecDeque::len).sum()
    }

    pub fn current_prefix(&self) -> Option<&NamePrefix> {
        self.active.as_ref().map(|a| &a.prefix)
    }

    pub fn current_rank(&self) -> usize {
        self.active.as_ref().map_or(0, |a| a.decoder.rank())
    }

    /// Segments of playback left in the buffer at `t`.
    pub fn buffered_segments(&self, t: SimTime) -> f64 {
        match self.play_end {
            Some(end) => end.saturating_sub(t).as_secs_f64() / self.library.segment_duration_s(),
            None => 0.0,
        }
    }

    /// Earliest time the client wants to be woken: a timeout deadline or the
    /// moment buffer room frees up.
    pub fn next_wake(&self, t: SimTime) -> Option<SimTime> {
        if self.is_done() {
            return None;
        }
        if t < self.start {
            return Some(self.start);
        }
        if self.active.is_none() {
            let end = self.play_end?;
            let hold = SimTime::from_secs_f64(self.cfg.max_buffer_segments * self.library.segment_duration_s());
            return Some((end.saturating_sub(hold) + SimTime(1)).max(t));
        }
        self.inflight
            .iter()
            .filter_map(|q| q.front())
            .min()
            .map(|&s| s + self.timeout)
    }

    fn begin_next_segment(&mut self, t: SimTime) {
        if self.active.is_some() || self.next_segment >= self.library.segments() || t < self.start {
            return;
        }
        if self.buffered_segments(t) >= self.cfg.max_buffer_segments {
            return;
        }
        let reps = self.library.representations();
        let rep = choose_representation(reps, self.goodput, self.buffered_segments(t), &self.cfg).index;
        let segment = self.next_segment;
        self.next_segment += 1;
        self.active = Some(self.start_generation(segment, rep, 0, t));
    }

    fn start_generation(&self, segment: usize, rep: usize, generation: usize, requested: SimTime) -> Active {
        let prefix = self.library.prefix(self.video, segment, rep, generation);
        let size = self.library.representations()[rep].generation_sizes[generation];
        Active {
            segment,
            rep,
            generation,
            prefix,
            decoder: Decoder::new(size, self.library.carried_bytes()),
            requested,
        }
    }

    fn expire(&mut self, t: SimTime) -> usize {
        let mut n = 0;
        for q in &mut self.inflight {
            while q.front().is_some_and(|s| t.saturating_sub(*s) >= self.timeout) {
                q.pop_front();
                n += 1;
            }
        }
        n
    }

    /// Issues Interests for the current generation up to the per-face window
    /// and the remaining rank deficit, round-robin over faces.
    pub fn pump(&mut self, t: SimTime) -> Vec<(FaceId, Interest)> {
        let expired = self.expire(t);
        self.begin_next_segment(t);
        let Some(active) = self.active.as_ref() else {
            return Vec::new();
        };
        let need = active.decoder.generation_size() - active.decoder.rank();
        let prefix = active.prefix.clone();
        let mut inflight = self.inflight();
        let mut out = Vec::new();
        let n = self.faces.len();
        while inflight < need {
            let Some(k) = (0..n)
                .map(|i| (self.rr + i) % n)
                .find(|&k| self.inflight[k].len() < self.cfg.window)
            else {
                break;
            };
            self.rr = (k + 1) % n;
            self.inflight[k].push_back(t);
            self.nonce += 1;
            out.push((self.faces[k], Interest::new(prefix.clone(), ((self.id as u64) << 32) | self.nonce)));
            inflight += 1;
        }
        self.stats.interests_sent += out.len() as u64;
        self.stats.retransmissions += expired.min(out.len()) as u64;
        out
    }

    /// Takes a Data packet arriving on `face`. Returns the segment it
    /// completed, if any. A decode that disagrees with the library is an error.
    pub fn on_data(&mut self, face: FaceId, p: &CodedPacket, t: SimTime) -> Result<Option<DecodedSegment>> {
        self.stats.data_received += 1;
        let Some(active) = self.active.as_mut() else {
            self.stats.stale += 1;
            return Ok(None);
        };
        if p.prefix != active.prefix {
            self.stats.stale += 1;
            return Ok(None);
        }
        if let Some(k) = self.faces.iter().position(|&f| f == face) {
            self.inflight[k].pop_front();
        }
        if !active.decoder.push(p)? {
            return Ok(None);
        }
        self.stats.innovative += 1;
        if !active.decoder.is_complete() {
            return Ok(None);
        }

        let active = self.active.take().expect("active segment");
        let decoded = active.decoder.finish()?;
        let expected = self.library.source_payloads(&active.prefix)?;
        if decoded != expected {
            return Err(Error::DecodeMismatch(active.prefix.to_string()));
        }
        for q in &mut self.inflight {
            q.clear();
        }
        let rep = &self.library.representations()[active.rep];
        if active.generation + 1 < rep.generations() {
            self.active = Some(self.start_generation(active.segment, active.rep, active.generation + 1, active.requested));
            return Ok(None);
        }

        let seg = DecodedSegment {
            segment: active.segment,
            representation: active.rep,
            requested: active.requested,
            completed: t,
            bits: (rep.packets * self.library.payload_bytes() * 8) as f64,
        };
        let sample = seg.goodput_bps();
        self.goodput = Some(match self.goodput {
            None => sample,
            Some(g) => self.cfg.ewma_alpha * sample + (1.0 - self.cfg.ewma_alpha) * g,
        });
        let dur = SimTime::from_secs_f64(self.library.segment_duration_s());
        self.play_end = Some(match self.play_end {
            Some(end) if end >= t => end + dur,
            Some(_) => {
                self.stats.stalls += 1;
                t + dur
            }
            None => t + dur,
        });
        self.stats.segments_per_rep[seg.representation] += 1;
        self.stats.bits += seg.bits;
        self.stats.download_time_s += (seg.completed - seg.requested).as_secs_f64();
        self.decoded.push(seg.clone());
        Ok(Some(seg))
    }

    /// Delivered bits over time spent downloading, or `None` before the
    /// first segment.
    pub fn mean_goodput_bps(&self) -> Option<f64> {
        (self.stats.download_time_s > 0.0).then(|| self.stats.bits / self.stats.download_time_s)
    }
}

pub fn client_pump(c: &mut StreamingClient, t: SimTime) -> Vec<(FaceId, Interest)> {
    c.pump(t)
}

pub fn client_on_data(c: &mut StreamingClient, face: FaceId, p: &CodedPacket, t: SimTime) -> Result<Option<DecodedSegment>> {
    c.on_data(face, p, t)
}
