//! AODV on-demand routing.
//!
//! A node keeps a route table keyed by destination, floods RREQs when it has
//! no usable route, answers with unicast RREPs, tears routes down with RERRs
//! and tracks neighbours through periodic hellos. [`AodvNode`] never touches
//! the medium itself: every entry point pushes [`AodvAction`]s that the caller
//! turns into frames and timers.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::engine::SimTime;
use crate::node::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AodvError {
    #[error("aodv: {0} cannot route to itself")]
    SelfRoute(NodeId),
    #[error("aodv.{field}: must be greater than zero")]
    Zero { field: &'static str },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AodvParams {
    pub hello_enabled: bool,
    pub hello_interval_ms: u64,
    pub allowed_hello_loss: u32,
    pub active_route_lifetime_ms: u64,
    /// Extra RREQ attempts after the first one.
    pub rreq_retries: u32,
    pub discovery_timeout_ms: u64,
    pub rreq_octets: u32,
    pub rrep_octets: u32,
    pub rerr_octets: u32,
    pub hello_octets: u32,
}

impl Default for AodvParams {
    fn default() -> Self {
        AodvParams {
            hello_enabled: true,
            hello_interval_ms: 1000,
            allowed_hello_loss: 2,
            active_route_lifetime_ms: 3000,
            rreq_retries: 2,
            discovery_timeout_ms: 1000,
            rreq_octets: 24,
            rrep_octets: 20,
            rerr_octets: 20,
            hello_octets: 20,
        }
    }
}

impl AodvParams {
    pub fn validate(&self) -> Result<(), AodvError> {
        let positive = [
            ("hello_interval_ms", self.hello_interval_ms),
            ("allowed_hello_loss", self.allowed_hello_loss as u64),
            ("active_route_lifetime_ms", self.active_route_lifetime_ms),
            ("discovery_timeout_ms", self.discovery_timeout_ms),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(AodvError::Zero { field });
            }
        }
        Ok(())
    }

    pub fn hello_interval(&self) -> SimTime {
        SimTime::from_millis(self.hello_interval_ms)
    }

    pub fn active_route_lifetime(&self) -> SimTime {
        SimTime::from_millis(self.active_route_lifetime_ms)
    }

    pub fn discovery_timeout(&self) -> SimTime {
        SimTime::from_millis(self.discovery_timeout_ms)
    }

    /// Silence after which a neighbour is declared lost.
    pub fn neighbor_timeout(&self) -> SimTime {
        self.hello_interval() * self.allowed_hello_loss as u64
    }

    pub fn octets(&self, msg: &Control) -> u32 {
        match msg {
            Control::Rreq(_) => self.rreq_octets,
            Control::Rrep(_) => self.rrep_octets,
            Control::Rerr(_) => self.rerr_octets,
            Control::Hello(_) => self.hello_octets,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rreq {
    pub originator: NodeId,
    pub originator_seq: u32,
    pub rreq_id: u32,
    pub dest: NodeId,
    /// Last sequence number the originator knew for `dest`.
    pub dest_seq: Option<u32>,
    pub hop_count: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rrep {
    pub dest: NodeId,
    pub dest_seq: u32,
    pub hop_count: u8,
    pub originator: NodeId,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rerr {
    pub unreachable: Vec<(NodeId, u32)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Control {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    /// RREP with hop count 0 advertising the sender itself.
    Hello(Rrep),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RouteState {
    Valid,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RouteEntry {
    pub dest: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u8,
    pub dest_seq: Option<u32>,
    pub expires: SimTime,
    pub state: RouteState,
}

impl RouteEntry {
    pub fn usable(&self, now: SimTime) -> bool {
        self.state == RouteState::Valid && now < self.expires
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AodvTimer {
    Discovery { dest: NodeId, attempt: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum AodvAction<P> {
    Broadcast(Control),
    Unicast { next_hop: NodeId, msg: Control },
    /// Data packet whose route is known; hand it to the MAC towards `next_hop`.
    Forward { next_hop: NodeId, packet: P },
    ArmTimer { at: SimTime, timer: AodvTimer },
    DiscoveryDone { dest: NodeId, elapsed: SimTime },
    DiscoveryFailed { dest: NodeId, dropped: Vec<P> },
}

/// What happened to an incoming RREQ.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RreqVerdict {
    DropDuplicate,
    Reply,
    Rebroadcast,
}

#[derive(Debug, Clone)]
struct Discovery<P> {
    started: SimTime,
    attempt: u32,
    buffered: Vec<P>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AodvStats {
    pub rreq_originated: u64,
    pub rreq_rebroadcast: u64,
    pub rrep_sent: u64,
    pub rrep_no_reverse_route: u64,
    pub rerr_sent: u64,
    pub discoveries_failed: u64,
}

#[derive(Debug, Clone)]
pub struct AodvNode<P> {
    id: NodeId,
    params: AodvParams,
    seq: u32,
    rreq_id: u32,
    routes: BTreeMap<NodeId, RouteEntry>,
    seen: BTreeMap<(NodeId, u32), SimTime>,
    pending: BTreeMap<NodeId, Discovery<P>>,
    neighbors: BTreeMap<NodeId, SimTime>,
    stats: AodvStats,
}

impl<P> AodvNode<P> {
    pub fn new(id: NodeId, params: AodvParams) -> Self {
        AodvNode {
            id,
            params,
            seq: 0,
            rreq_id: 0,
            routes: BTreeMap::new(),
            seen: BTreeMap::new(),
            pending: BTreeMap::new(),
            neighbors: BTreeMap::new(),
            stats: AodvStats::default(),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn params(&self) -> &AodvParams {
        &self.params
    }

    pub fn seq(&self) -> u32 {
        self.seq
    }

    pub fn stats(&self) -> AodvStats {
        self.stats
    }

    pub fn route(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.routes.get(&dest)
    }

    pub fn routes(&self) -> impl Iterator<Item = &RouteEntry> {
        self.routes.values()
    }

    pub fn is_discovering(&self, dest: NodeId) -> bool {
        self.pending.contains_key(&dest)
    }

    /// Packets waiting on discoveries.
    pub fn buffered(&self) -> usize {
        self.pending.values().map(|d| d.buffered.len()).sum()
    }

    /// Forgets all routing state except the node's own sequence number.
    pub fn reset(&mut self) {
        self.routes.clear();
        self.seen.clear();
        self.pending.clear();
        self.neighbors.clear();
    }

    /// Next hop for `dest` if a valid unexpired route exists. Using a route
    /// extends its lifetime and that of the route to its next hop.
    pub fn next_hop(&mut self, dest: NodeId, now: SimTime) -> Option<NodeId> {
        let life = now + self.params.active_route_lifetime();
        let entry = self.routes.get_mut(&dest).filter(|e| e.usable(now))?;
        entry.expires = entry.expires.max(life);
        let hop = entry.next_hop;
        if let Some(e) = self.routes.get_mut(&hop).filter(|e| e.usable(now)) {
            e.expires = e.expires.max(life);
        }
        Some(hop)
    }

    /// Data from `origin` arrived through `prev`; keeps the reverse path alive.
    pub fn note_data(&mut self, origin: NodeId, prev: NodeId, now: SimTime) {
        self.heard(prev, now);
        let life = now + self.params.active_route_lifetime();
        if let Some(e) = self.routes.get_mut(&origin).filter(|e| e.usable(now)) {
            e.expires = e.expires.max(life);
        }
    }

    /// Route lookup for a locally generated packet. Starts a discovery and
    /// buffers the packet when no usable route exists.
    pub fn resolve_route(&mut self, dest: NodeId, packet: P, now: SimTime, out: &mut Vec<AodvAction<P>>) -> Result<(), AodvError> {
        if dest == self.id {
            return Err(AodvError::SelfRoute(dest));
        }
        if let Some(next_hop) = self.next_hop(dest, now) {
            out.push(AodvAction::Forward { next_hop, packet });
            return Ok(());
        }
        if let Some(d) = self.pending.get_mut(&dest) {
            d.buffered.push(packet);
            return Ok(());
        }
        self.pending.insert(
            dest,
            Discovery {
                started: now,
                attempt: 0,
                buffered: alloc::vec![packet],
            },
        );
        self.emit_rreq(dest, 0, now, out);
        Ok(())
    }

    fn emit_rreq(&mut self, dest: NodeId, attempt: u32, now: SimTime, out: &mut Vec<AodvAction<P>>) {
        self.seq = self.seq.wrapping_add(1);
        self.rreq_id = self.rreq_id.wrapping_add(1);
        self.seen.insert((self.id, self.rreq_id), now + self.path_discovery_time());
        let rreq = Rreq {
            originator: self.id,
            originator_seq: self.seq,
            rreq_id: self.rreq_id,
            dest,
            dest_seq: self.routes.get(&dest).and_then(|e| e.dest_seq),
            hop_count: 0,
        };
        self.stats.rreq_originated += 1;
        out.push(AodvAction::Broadcast(Control::Rreq(rreq)));
        out.push(AodvAction::ArmTimer {
            at: now + self.params.discovery_timeout(),
            timer: AodvTimer::Discovery { dest, attempt },
        });
    }

    fn path_discovery_time(&self) -> SimTime {
        self.params.discovery_timeout() * (self.params.rreq_retries as u64 + 2)
    }

    pub fn on_timer(&mut self, timer: AodvTimer, now: SimTime, out: &mut Vec<AodvAction<P>>) {
        let AodvTimer::Discovery { dest, attempt } = timer;
        let Some(d) = self.pending.get_mut(&dest) else { return };
        if d.attempt != attempt {
            return;
        }
        if attempt < self.params.rreq_retries {
            d.attempt += 1;
            let next = d.attempt;
            self.emit_rreq(dest, next, now, out);
        } else if let Some(d) = self.pending.remove(&dest) {
            self.stats.discoveries_failed += 1;
            out.push(AodvAction::DiscoveryFailed {
                dest,
                dropped: d.buffered,
            });
        }
    }

    /// Route update rule: newer sequence number, or the same number with a
    /// shorter path, or replacing an unusable entry. Returns whether the
    /// table changed.
    fn offer(&mut self, cand: RouteEntry, now: SimTime) -> bool {
        let accept = match self.routes.get(&cand.dest) {
            None => true,
            Some(cur) if !cur.usable(now) => true,
            Some(cur) => match (cand.dest_seq, cur.dest_seq) {
                (Some(new), Some(old)) => seq_newer(new, old) || (new == old && cand.hop_count < cur.hop_count),
                (Some(_), None) => true,
                (None, _) => cand.hop_count < cur.hop_count,
            },
        };
        if accept {
            let expires = match self.routes.get(&cand.dest) {
                Some(cur) if cur.usable(now) && cur.next_hop == cand.next_hop => cur.expires.max(cand.expires),
                _ => cand.expires,
            };
            self.routes.insert(cand.dest, RouteEntry { expires, ..cand });
        } else if let Some(cur) = self.routes.get_mut(&cand.dest) {
            if cur.next_hop == cand.next_hop && cur.hop_count == cand.hop_count {
                cur.expires = cur.expires.max(cand.expires);
            }
        }
        accept
    }

    /// One-hop route to a neighbour that was just heard.
    fn heard(&mut self, from: NodeId, now: SimTime) {
        if self.params.hello_enabled {
            self.neighbors.insert(from, now);
        }
        let seq = self.routes.get(&from).and_then(|e| e.dest_seq);
        self.offer(
            RouteEntry {
                dest: from,
                next_hop: from,
                hop_count: 1,
                dest_seq: seq,
                expires: now + self.params.active_route_lifetime(),
                state: RouteState::Valid,
            },
            now,
        );
    }

    pub fn on_control(&mut self, msg: Control, from: NodeId, now: SimTime, out: &mut Vec<AodvAction<P>>) {
        match msg {
            Control::Rreq(r) => {
                self.process_rreq(r, from, now, out);
            }
            Control::Rrep(r) => self.process_rrep(r, from, now, out),
            Control::Rerr(r) => self.process_rerr(r, from, now, out),
            Control::Hello(h) => self.process_hello(h, from, now),
        }
    }

    pub fn process_rreq(&mut self, rreq: Rreq, from: NodeId, now: SimTime, out: &mut Vec<AodvAction<P>>) -> RreqVerdict {
        self.heard(from, now);
        self.seen.retain(|_, exp| *exp > now);
        let key = (rreq.originator, rreq.rreq_id);
        if rreq.originator == self.id || self.seen.contains_key(&key) {
            return RreqVerdict::DropDuplicate;
        }
        self.seen.insert(key, now + self.path_discovery_time());

        let hops = rreq.hop_count.saturating_add(1);
        self.offer(
            RouteEntry {
                dest: rreq.originator,
                next_hop: from,
                hop_count: hops,
                dest_seq: Some(rreq.originator_seq),
                expires: now + self.params.active_route_lifetime(),
                state: RouteState::Valid,
            },
            now,
        );

        if rreq.dest == self.id {
            if let Some(s) = rreq.dest_seq {
                if seq_newer(s, self.seq) {
                    self.seq = s;
                }
            }
            let rrep = Rrep {
                dest: self.id,
                dest_seq: self.seq,
                hop_count: 0,
                originator: rreq.originator,
            };
            self.stats.rrep_sent += 1;
            out.push(AodvAction::Unicast {
                next_hop: from,
                msg: Control::Rrep(rrep),
            });
            return RreqVerdict::Reply;
        }

        let fresh = self.routes.get(&rreq.dest).filter(|e| e.usable(now)).and_then(|e| {
            let stored = e.dest_seq?;
            let ok = match rreq.dest_seq {
                Some(asked) => !seq_newer(asked, stored),
                None => true,
            };
            ok.then_some((stored, e.hop_count))
        });
        if let Some((dest_seq, hop_count)) = fresh {
            let rrep = Rrep {
                dest: rreq.dest,
                dest_seq,
                hop_count,
                originator: rreq.originator,
            };
            self.stats.rrep_sent += 1;
            out.push(AodvAction::Unicast {
                next_hop: from,
                msg: Control::Rrep(rrep),
            });
            return RreqVerdict::Reply;
        }

        self.stats.rreq_rebroadcast += 1;
        out.push(AodvAction::Broadcast(Control::Rreq(Rreq { hop_count: hops, ..rreq })));
        RreqVerdict::Rebroadcast
    }

    pub fn process_rrep(&mut self, rrep: Rrep, from: NodeId, now: SimTime, out: &mut Vec<AodvAction<P>>) {
        self.heard(from, now);
        let hops = rrep.hop_count.saturating_add(1);
        let updated = if rrep.dest == self.id {
            false
        } else {
            self.offer(
                RouteEntry {
                    dest: rrep.dest,
                    next_hop: from,
                    hop_count: hops,
                    dest_seq: Some(rrep.dest_seq),
                    expires: now + self.params.active_route_lifetime(),
                    state: RouteState::Valid,
                },
                now,
            )
        };

        if rrep.originator == self.id {
            if let Some(d) = self.pending.remove(&rrep.dest) {
                out.push(AodvAction::DiscoveryDone {
                    dest: rrep.dest,
                    elapsed: now - d.started,
                });
                for packet in d.buffered {
                    out.push(AodvAction::Forward { next_hop: from, packet });
                }
            }
            return;
        }
        if !updated {
            return;
        }
        match self.next_hop(rrep.originator, now) {
            Some(next_hop) => {
                self.stats.rrep_sent += 1;
                out.push(AodvAction::Unicast {
                    next_hop,
                    msg: Control::Rrep(Rrep { hop_count: hops, ..rrep }),
                });
            }
            None => self.stats.rrep_no_reverse_route += 1,
        }
    }

    fn process_hello(&mut self, hello: Rrep, from: NodeId, now: SimTime) {
        if self.params.hello_enabled {
            self.neighbors.insert(from, now);
        }
        let life = now + self.params.neighbor_timeout().max(self.params.active_route_lifetime());
        self.offer(
            RouteEntry {
                dest: hello.dest,
                next_hop: from,
                hop_count: 1,
                dest_seq: Some(hello.dest_seq),
                expires: life,
                state: RouteState::Valid,
            },
            now,
        );
    }

    /// Invalidates every route through `next_hop` and reports them in a RERR.
    pub fn on_link_break(&mut self, next_hop: NodeId, now: SimTime, out: &mut Vec<AodvAction<P>>) {
        self.neighbors.remove(&next_hop);
        let mut lost = Vec::new();
        for e in self.routes.values_mut() {
            if e.state == RouteState::Valid && e.next_hop == next_hop {
                e.state = RouteState::Invalid;
                let seq = e.dest_seq.map_or(1, |s| s.wrapping_add(1));
                e.dest_seq = Some(seq);
                e.expires = now;
                lost.push((e.dest, seq));
            }
        }
        if !lost.is_empty() {
            self.stats.rerr_sent += 1;
            out.push(AodvAction::Broadcast(Control::Rerr(Rerr { unreachable: lost })));
        }
    }

    pub fn process_rerr(&mut self, rerr: Rerr, from: NodeId, now: SimTime, out: &mut Vec<AodvAction<P>>) {
        self.heard(from, now);
        let mut lost = Vec::new();
        for (dest, seq) in rerr.unreachable {
            if let Some(e) = self.routes.get_mut(&dest) {
                if e.state == RouteState::Valid && e.next_hop == from {
                    e.state = RouteState::Invalid;
                    e.dest_seq = Some(seq);
                    e.expires = now;
                    lost.push((dest, seq));
                }
            }
        }
        if !lost.is_empty() {
            self.stats.rerr_sent += 1;
            out.push(AodvAction::Broadcast(Control::Rerr(Rerr { unreachable: lost })));
        }
    }

    /// Periodic hello. Also declares neighbours silent for longer than
    /// `allowed_hello_loss` intervals lost.
    pub fn hello_tick(&mut self, now: SimTime, out: &mut Vec<AodvAction<P>>) {
        if !self.params.hello_enabled {
            return;
        }
        let limit = self.params.neighbor_timeout();
        let silent: Vec<NodeId> = self
            .neighbors
            .iter()
            .filter(|(_, &t)| now - t > limit)
            .map(|(&n, _)| n)
            .collect();
        for n in silent {
            self.on_link_break(n, now, out);
        }
        out.push(AodvAction::Broadcast(Control::Hello(Rrep {
            dest: self.id,
            dest_seq: self.seq,
            hop_count: 0,
            originator: self.id,
        })));
    }
}

/// Sequence-number comparison with wrap-around.
pub fn seq_newer(a: u32, b: u32) -> bool {
    (a.wrapping_sub(b) as i32) > 0
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    type Node = AodvNode<u32>;

    const A: NodeId = NodeId(0);
    const B: NodeId = NodeId(1);
    const C: NodeId = NodeId(2);

    fn node(id: NodeId) -> Node {
        AodvNode::new(id, AodvParams::default())
    }

    fn t(us: u64) -> SimTime {
        SimTime::from_micros(us)
    }

    fn rreq_of(actions: &[AodvAction<u32>]) -> Rreq {
        actions
            .iter()
            .find_map(|a| match a {
                AodvAction::Broadcast(Control::Rreq(r)) => Some(r.clone()),
                _ => None,
            })
            .unwrap()
    }

    fn unicast_rrep(actions: &[AodvAction<u32>]) -> (NodeId, Rrep) {
        actions
            .iter()
            .find_map(|a| match a {
                AodvAction::Unicast { next_hop, msg: Control::Rrep(r) } => Some((*next_hop, r.clone())),
                _ => None,
            })
            .unwrap()
    }

    #[test]
    fn no_route_emits_exactly_one_rreq() {
        let mut a = node(A);
        let mut out = Vec::new();
        a.resolve_route(C, 7, t(0), &mut out).unwrap();
        let n = out.iter().filter(|x| matches!(x, AodvAction::Broadcast(Control::Rreq(_)))).count();
        assert_eq!(n, 1);
        assert!(a.is_discovering(C));
        out.clear();
        a.resolve_route(C, 8, t(5), &mut out).unwrap();
        assert!(out.is_empty());
        assert_eq!(a.buffered(), 2);
    }

    #[test]
    fn valid_route_forwards_without_rreq() {
        let mut a = node(A);
        let mut out = Vec::new();
        a.process_hello(Rrep { dest: B, dest_seq: 1, hop_count: 0, originator: B }, B, t(0));
        a.resolve_route(B, 1, t(10), &mut out).unwrap();
        assert_eq!(out, vec![AodvAction::Forward { next_hop: B, packet: 1 }]);
    }

    #[test]
    fn self_route_is_rejected() {
        let mut a = node(A);
        assert_eq!(a.resolve_route(A, 0, t(0), &mut Vec::new()), Err(AodvError::SelfRoute(A)));
    }

    #[test]
    fn chain_discovery_by_hand() {
        // A(0) - B(500) - C(1000), range 600: A only hears B, B hears both.
        let (mut a, mut b, mut c) = (node(A), node(B), node(C));
        let mut out = Vec::new();
        a.resolve_route(C, 42, t(0), &mut out).unwrap();
        let rreq = rreq_of(&out);

        let mut at_b = Vec::new();
        assert_eq!(b.process_rreq(rreq, A, t(100), &mut at_b), RreqVerdict::Rebroadcast);
        let fwd = rreq_of(&at_b);
        assert_eq!(fwd.hop_count, 1);

        let mut at_c = Vec::new();
        assert_eq!(c.process_rreq(fwd.clone(), B, t(200), &mut at_c), RreqVerdict::Reply);
        let (to, rrep) = unicast_rrep(&at_c);
        assert_eq!((to, rrep.hop_count), (B, 0));
        // A hears B's rebroadcast of its own flood and ignores it.
        assert_eq!(a.process_rreq(fwd, B, t(200), &mut Vec::new()), RreqVerdict::DropDuplicate);

        let mut at_b = Vec::new();
        b.process_rrep(rrep, C, t(300), &mut at_b);
        let c_at_b = b.route(C).unwrap();
        assert_eq!((c_at_b.next_hop, c_at_b.hop_count), (C, 1));
        let (to, rrep) = unicast_rrep(&at_b);
        assert_eq!((to, rrep.hop_count), (A, 1));

        let mut at_a = Vec::new();
        a.process_rrep(rrep, B, t(400), &mut at_a);
        let r = a.route(C).unwrap();
        assert_eq!((r.dest, r.next_hop, r.hop_count), (C, B, 2));
        assert_eq!(at_a[0], AodvAction::DiscoveryDone { dest: C, elapsed: t(400) });
        assert_eq!(at_a[1], AodvAction::Forward { next_hop: B, packet: 42 });
    }

    #[test]
    fn stale_rrep_does_not_overwrite() {
        let mut a = node(A);
        let mut out = Vec::new();
        a.process_rrep(Rrep { dest: C, dest_seq: 5, hop_count: 1, originator: B }, B, t(0), &mut out);
        a.process_rrep(Rrep { dest: C, dest_seq: 4, hop_count: 0, originator: B }, B, t(10), &mut out);
        let r = a.route(C).unwrap();
        assert_eq!((r.hop_count, r.dest_seq), (2, Some(5)));
    }

    #[test]
    fn rrep_without_reverse_route_is_dropped() {
        let mut b = node(B);
        let mut out = Vec::new();
        b.process_rrep(Rrep { dest: C, dest_seq: 1, hop_count: 0, originator: A }, C, t(0), &mut out);
        assert!(out.is_empty());
        assert_eq!(b.stats().rrep_no_reverse_route, 1);
    }

    #[test]
    fn discovery_retries_then_fails() {
        let mut a = node(A);
        let mut out = Vec::new();
        a.resolve_route(C, 1, t(0), &mut out).unwrap();
        for attempt in 0..3 {
            let timer = out
                .iter()
                .find_map(|x| match x {
                    AodvAction::ArmTimer { timer, .. } => Some(*timer),
                    _ => None,
                })
                .unwrap();
            assert_eq!(timer, AodvTimer::Discovery { dest: C, attempt });
            out.clear();
            a.on_timer(timer, SimTime::from_secs(attempt as u64 + 1), &mut out);
        }
        assert_eq!(out, vec![AodvAction::DiscoveryFailed { dest: C, dropped: vec![1] }]);
        assert!(!a.is_discovering(C));
    }

    #[test]
    fn link_break_reports_only_affected_routes() {
        let mut a = node(A);
        let mut out = Vec::new();
        a.on_link_break(B, t(0), &mut out);
        assert!(out.is_empty());

        a.process_rrep(Rrep { dest: C, dest_seq: 3, hop_count: 1, originator: A }, B, t(0), &mut out);
        out.clear();
        a.on_link_break(B, t(10), &mut out);
        // Route to B itself (learned from hearing B) and to C through B.
        let AodvAction::Broadcast(Control::Rerr(rerr)) = &out[0] else { panic!() };
        assert!(rerr.unreachable.contains(&(C, 4)));
        assert!(a.next_hop(C, t(11)).is_none());
    }

    #[test]
    fn rerr_propagates_downstream() {
        let mut a = node(A);
        let mut out = Vec::new();
        a.process_rrep(Rrep { dest: C, dest_seq: 3, hop_count: 1, originator: A }, B, t(0), &mut out);
        out.clear();
        a.process_rerr(Rerr { unreachable: vec![(C, 4)] }, B, t(10), &mut out);
        assert_eq!(out, vec![AodvAction::Broadcast(Control::Rerr(Rerr { unreachable: vec![(C, 4)] }))]);
        assert_eq!(a.route(C).unwrap().state, RouteState::Invalid);
    }

    #[test]
    fn hellos_and_neighbor_loss() {
        let mut a = node(A);
        let mut out = Vec::new();
        let mut sent = 0;
        for s in 0..10 {
            a.hello_tick(SimTime::from_secs(s), &mut out);
        }
        sent += out.iter().filter(|x| matches!(x, AodvAction::Broadcast(Control::Hello(_)))).count();
        assert_eq!(sent, 10);

        out.clear();
        a.process_hello(Rrep { dest: B, dest_seq: 0, hop_count: 0, originator: B }, B, SimTime::from_secs(10));
        a.hello_tick(SimTime::from_secs(12), &mut out);
        assert!(!out.iter().any(|x| matches!(x, AodvAction::Broadcast(Control::Rerr(_)))));
        a.hello_tick(SimTime::from_micros(12_000_001), &mut out);
        assert!(out.iter().any(|x| matches!(x, AodvAction::Broadcast(Control::Rerr(_)))));
    }

    #[test]
    fn own_seq_never_decreases() {
        let mut a = node(A);
        let mut last = a.seq();
        let mut out = Vec::new();
        for i in 0..5u16 {
            a.resolve_route(NodeId(10 + i), 0, t(i as u64), &mut out).unwrap();
            assert!(a.seq() > last);
            last = a.seq();
        }
    }

    #[test]
    fn sequence_wraparound() {
        assert!(seq_newer(1, 0));
        assert!(seq_newer(0, u32::MAX));
        assert!(!seq_newer(5, 5));
    }
}
