//! Deterministic discrete-event network simulator.
//!
//! Events fire in `(time, sequence)` order. Every link is a pair of FIFO
//! transmitters, one per direction: a packet starts serializing when the
//! transmitter is free and arrives one propagation delay after its last bit.
//! All randomness in a run comes from one seeded generator.

pub mod metrics;
pub mod topology;

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::catalog::ContentLibrary;
use crate::csm::PolicyKind;
use crate::endpoints::{ClientConfig, SourceServer, StreamingClient};
use crate::error::{Error, Result};
use crate::forwarder::{Emission, Fib, Packet, Router, RouterConfig};
use crate::types::{FaceId, SimTime};

pub use metrics::{ClientMetrics, HitLog, LinkCounters, MetricsLog, RouterMetrics};
pub use topology::{LinkDefaults, LinkSpec, NodeKind, NodeSpec, TieredSpec, Topology, TopologyConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub interest_bytes: usize,
    pub data_header_bytes: usize,
    pub max_duration_s: f64,
    pub popularity_window_s: f64,
    pub interest_lifetime_s: f64,
    pub client: ClientConfig,
    /// Keep the tag of every packet each router inserts.
    pub record_inserts: bool,
    /// Track per-face Interest and Data counts in every router.
    pub audit: bool,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            interest_bytes: 64,
            data_header_bytes: 32,
            max_duration_s: 300.0,
            popularity_window_s: 10.0,
            interest_lifetime_s: 2.0,
            client: ClientConfig::default(),
            record_inserts: false,
            audit: false,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("max_duration_s", self.max_duration_s),
            ("popularity_window_s", self.popularity_window_s),
            ("interest_lifetime_s", self.interest_lifetime_s),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        if self.interest_bytes == 0 {
            return Err(Error::config("interest_bytes must be positive"));
        }
        self.client.validate()
    }
}

#[derive(Debug)]
enum Action {
    Deliver { node: usize, face: FaceId, packet: Packet },
    Wake { node: usize },
}

#[derive(Debug)]
struct Event {
    time: SimTime,
    seq: u64,
    action: Action,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // BinaryHeap is a max-heap; invert for earliest-first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

enum Node {
    Source(SourceServer),
    Router(Box<Router>),
    Client(Box<StreamingClient>),
}

#[derive(Clone, Copy, Debug)]
struct FaceRef {
    link: usize,
    /// 0 when the node is the upstream end of the link.
    side: usize,
}

#[derive(Debug)]
struct Link {
    ends: [(usize, FaceId); 2],
    bandwidth_bps: f64,
    delay: SimTime,
    busy: [SimTime; 2],
}

struct Sim {
    nodes: Vec<Node>,
    names: Vec<String>,
    faces: Vec<Vec<FaceRef>>,
    links: Vec<Link>,
    heap: BinaryHeap<Event>,
    seq: u64,
    now: SimTime,
    rng: ChaCha8Rng,
    wake_at: Vec<Option<SimTime>>,
    hits: Vec<HitLog>,
    params: SimParams,
    payload_bytes: usize,
    link_counters: LinkCounters,
    client_received: u64,
    verified: usize,
    clients_left: usize,
}

impl Sim {
    fn schedule(&mut self, time: SimTime, action: Action) {
        self.seq += 1;
        self.heap.push(Event {
            time,
            seq: self.seq,
            action,
        });
    }

    fn wire_bits(&self, p: &Packet) -> f64 {
        let bytes = match p {
            Packet::Interest(_) => self.params.interest_bytes,
            Packet::Data(d) => self.params.data_header_bytes + self.payload_bytes + d.coeffs.len(),
        };
        (bytes * 8) as f64
    }

    fn transmit(&mut self, node: usize, face: FaceId, packet: Packet) {
        let fr = self.faces[node][face.0];
        let bits = self.wire_bits(&packet);
        let link = &mut self.links[fr.link];
        let start = self.now.max(link.busy[fr.side]);
        let done = start + SimTime::from_secs_f64(bits / link.bandwidth_bps);
        link.busy[fr.side] = done;
        let (dst, dst_face) = link.ends[1 - fr.side];
        let at = done + link.delay;
        self.link_counters.enqueued += 1;
        self.schedule(
            at,
            Action::Deliver {
                node: dst,
                face: dst_face,
                packet,
            },
        );
    }

    fn send_all(&mut self, node: usize, out: Vec<Emission>) {
        for e in out {
            self.transmit(node, e.face, e.packet);
        }
    }

    fn client_step(&mut self, node: usize) {
        let now = self.now;
        let Node::Client(c) = &mut self.nodes[node] else {
            return;
        };
        let was_done = c.is_done();
        let out = c.pump(now);
        let wake = c.next_wake(now);
        let done = c.is_done();
        for (face, interest) in out {
            self.transmit(node, face, Packet::Interest(interest));
        }
        if done && !was_done {
            self.clients_left -= 1;
        }
        if let Some(w) = wake {
            let w = w.max(now);
            if self.wake_at[node].is_none_or(|cur| w < cur || cur <= now) {
                self.wake_at[node] = Some(w);
                self.schedule(w, Action::Wake { node });
            }
        }
    }

    fn deliver(&mut self, node: usize, face: FaceId, packet: Packet) -> Result<()> {
        let now = self.now;
        match (&mut self.nodes[node], packet) {
            (Node::Router(r), Packet::Interest(i)) => {
                let (out, outcome) = r.on_interest(face, i, now, &mut self.rng);
                self.hits[node].record(outcome, now);
                self.send_all(node, out);
            }
            (Node::Router(r), Packet::Data(d)) => {
                let (out, _) = r.on_data(face, d, now, &mut self.rng)?;
                self.send_all(node, out);
            }
            (Node::Source(s), Packet::Interest(i)) => {
                let p = s.on_interest(&i.prefix, &mut self.rng)?;
                self.transmit(node, face, Packet::Data(p));
            }
            (Node::Client(c), Packet::Data(d)) => {
                self.client_received += 1;
                let was_done = c.is_done();
                if c.on_data(face, &d, now)?.is_some() {
                    self.verified += 1;
                }
                if c.is_done() && !was_done {
                    self.clients_left -= 1;
                }
                self.client_step(node);
            }
            // Nothing sends Data to a source or Interests to a client.
            (Node::Source(_), Packet::Data(_)) | (Node::Client(_), Packet::Interest(_)) => {}
        }
        Ok(())
    }
}

/// Nodes, each node's faces, and links.
type Network = (Vec<Node>, Vec<Vec<FaceRef>>, Vec<Link>);

fn build(
    topo: &Topology,
    library: &Arc<ContentLibrary>,
    policy: PolicyKind,
    capacity: usize,
    params: &SimParams,
    rng: &mut ChaCha8Rng,
) -> Result<Network> {
    let d = &topo.defaults;
    let client_bw = Normal::new(d.client_bandwidth_mean_mbps, d.client_bandwidth_sd_mbps)
        .map_err(|e| Error::config(format!("client bandwidth distribution: {e}")))?;
    let n = topo.nodes.len();
    let mut faces: Vec<Vec<FaceRef>> = vec![Vec::new(); n];
    let mut links = Vec::with_capacity(topo.links.len());
    for (i, (spec, rl)) in topo.links.iter().zip(topo.resolved_links()).enumerate() {
        let mbps = match spec.bandwidth_mbps {
            Some(b) => b,
            None if topo.nodes[rl.down].kind == NodeKind::Client => {
                client_bw.sample(rng).max(d.client_bandwidth_min_mbps)
            }
            None => d.core_bandwidth_mbps,
        };
        let up_face = FaceId(faces[rl.up].len());
        faces[rl.up].push(FaceRef { link: i, side: 0 });
        let down_face = FaceId(faces[rl.down].len());
        faces[rl.down].push(FaceRef { link: i, side: 1 });
        links.push(Link {
            ends: [(rl.up, up_face), (rl.down, down_face)],
            bandwidth_bps: mbps * 1e6,
            delay: SimTime::from_secs_f64(spec.delay_ms.unwrap_or(d.delay_ms) / 1e3),
            busy: [SimTime::ZERO; 2],
        });
    }

    let mut nodes = Vec::with_capacity(n);
    for (id, spec) in topo.nodes.iter().enumerate() {
        let upstream: Vec<FaceId> = (0..faces[id].len()).filter(|&f| faces[id][f].side == 1).map(FaceId).collect();
        let downstream: Vec<FaceId> = (0..faces[id].len()).filter(|&f| faces[id][f].side == 0).map(FaceId).collect();
        nodes.push(match spec.kind {
            NodeKind::Source => Node::Source(SourceServer::new(id, library.clone())),
            NodeKind::Router => {
                let mut fib = Fib::new();
                fib.add_route("", upstream.iter().map(|&f| (f, 1.0)).collect())?;
                let cfg = RouterConfig {
                    policy: spec.policy.unwrap_or(policy),
                    capacity: spec.capacity.unwrap_or(capacity),
                    window: SimTime::from_secs_f64(params.popularity_window_s),
                    interest_lifetime: SimTime::from_secs_f64(params.interest_lifetime_s),
                };
                let mut r = Router::new(id, &cfg, downstream, fib, library.clone());
                if params.record_inserts {
                    r.csm_mut().record_inserts();
                }
                if params.audit {
                    r.enable_audit();
                }
                Node::Router(Box::new(r))
            }
            NodeKind::Client => {
                let video = rng.gen_range(0..library.videos());
                let start = SimTime::from_secs_f64(rng.gen::<f64>() * params.client.start_spread_s);
                Node::Client(Box::new(StreamingClient::new(
                    id,
                    video,
                    upstream,
                    start,
                    params.client.clone(),
                    library.clone(),
                )))
            }
        });
    }
    Ok((nodes, faces, links))
}

/// Runs one simulation until every client has played its video or the
/// duration limit is reached. `policy` and `capacity` apply to every router
/// without its own override in the topology.
pub fn run(
    topo: &Topology,
    library: Arc<ContentLibrary>,
    policy: PolicyKind,
    capacity: usize,
    params: &SimParams,
    seed: u64,
) -> Result<MetricsLog> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (nodes, faces, links) = build(topo, &library, policy, capacity, params, &mut rng)?;
    let n = nodes.len();
    let clients = nodes.iter().filter(|x| matches!(x, Node::Client(_))).count();
    let mut sim = Sim {
        names: topo.nodes.iter().map(|x| x.name.clone()).collect(),
        nodes,
        faces,
        links,
        heap: BinaryHeap::new(),
        seq: 0,
        now: SimTime::ZERO,
        rng,
        wake_at: vec![None; n],
        hits: vec![HitLog::default(); n],
        params: params.clone(),
        payload_bytes: library.payload_bytes(),
        link_counters: LinkCounters::default(),
        client_received: 0,
        verified: 0,
        clients_left: clients,
    };
    for node in 0..n {
        if let Node::Client(c) = &sim.nodes[node] {
            let start = c.start_time();
            sim.wake_at[node] = Some(start);
            sim.schedule(start, Action::Wake { node });
        }
    }

    let limit = SimTime::from_secs_f64(params.max_duration_s);
    let mut events = 0u64;
    while sim.clients_left > 0 {
        let Some(ev) = sim.heap.pop() else {
            break;
        };
        if ev.time > limit {
            sim.heap.push(ev);
            break;
        }
        debug_assert!(ev.time >= sim.now, "event scheduled in the past");
        sim.now = ev.time;
        events += 1;
        match ev.action {
            Action::Deliver { node, face, packet } => {
                sim.link_counters.delivered += 1;
                sim.deliver(node, face, packet)?;
            }
            Action::Wake { node } => {
                if sim.wake_at[node] == Some(sim.now) {
                    sim.wake_at[node] = None;
                    sim.client_step(node);
                }
            }
        }
    }
    sim.link_counters.in_flight = sim.heap.iter().filter(|e| matches!(e.action, Action::Deliver { .. })).count() as u64;
    Ok(collect(sim, &library, events))
}

fn collect(sim: Sim, library: &ContentLibrary, events: u64) -> MetricsLog {
    let mut routers = Vec::new();
    let mut clients = Vec::new();
    let mut source_sent = 0;
    let mut hits = sim.hits;
    for (i, node) in sim.nodes.iter().enumerate() {
        let name = sim.names[i].clone();
        match node {
            Node::Source(s) => source_sent += s.sent(),
            Node::Router(r) => routers.push(RouterMetrics {
                name,
                hits: std::mem::take(&mut hits[i]),
                counters: r.counters().clone(),
                csm: r.csm().stats().clone(),
                occupancy: r.csm().store().occupancy(),
                inserted_tags: r.csm().insert_log().to_vec(),
                audit_ok: r.audit_ok(),
            }),
            Node::Client(c) => {
                let st = c.stats();
                clients.push(ClientMetrics {
                    name,
                    video: c.video(),
                    start_s: c.start_time().as_secs_f64(),
                    goodput_bps: c.mean_goodput_bps(),
                    segments_per_rep: st.segments_per_rep.clone(),
                    segments_completed: c.decoded().len(),
                    data_received: st.data_received,
                    interests_sent: st.interests_sent,
                    retransmissions: st.retransmissions,
                    stalls: st.stalls,
                    done: c.is_done(),
                })
            }
        }
    }
    MetricsLog {
        routers,
        all_done: clients.iter().all(|c| c.done),
        clients,
        representations: library.representations().iter().map(|r| r.name.clone()).collect(),
        source_sent,
        client_received: sim.client_received,
        links: sim.link_counters,
        events,
        end_time: sim.now,
        verified_segments: sim.verified,
    }
}
