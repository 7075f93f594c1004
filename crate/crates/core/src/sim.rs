//! The simulated highway: nodes, the shared medium and the glue between MAC,
//! routing, applications and metrics.
//!
//! Reception is decided when a frame's airtime ends, using positions at the
//! frame's start. Unicast data is acknowledged after SIFS without carrier
//! sense; everything else goes through DCF.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::aodv::{AodvAction, AodvNode, AodvTimer, Control};
use crate::apps::{AppMsg, CallState, CallStep, FtpSession, H323Msg, Outgoing, VoiceCall};
use crate::engine::{Engine, EngineError, Event, Handler, RngStream, RunSummary, SimTime};
use crate::mac::{
    AcceptVerdict, Bssid, Frame, FrameKind, JoinPolicy, MacAddr, MacOutput, MacTimer, Completion, Station, StationMode,
    TxOutcome, WbssAdvertisement,
};
use crate::metrics::{windowed_rate, windowed_sum, MetricsError, MetricsRecorder, PacketLedger, Series};
use crate::node::NodeId;
use crate::phy::{frame_airtime, in_range, reception_outcome, Medium, Reception, TxId};
use crate::scenario::{build_scenario, ConfigError, Role, Scenario, ScenarioConfig};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("sim: unknown node {0}")]
    UnknownNode(NodeId),
    #[error("sim: transmission {0:?} vanished from the medium")]
    LostTransmission(TxId),
}

/// Application payload travelling through routing and the MAC.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub id: u64,
    pub origin: NodeId,
    pub dest: NodeId,
    pub msg: AppMsg,
    pub octets: u32,
    pub created: SimTime,
    pub resubmitted: bool,
}

/// Frame body as carried on the simulated air.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Body {
    #[default]
    Empty,
    Routing(Control),
    Data(Packet),
    Beacon(WbssAdvertisement),
    /// Bare MAC test traffic with no upper layer.
    Probe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BodyKind {
    Empty,
    Routing,
    Data,
    Beacon,
    Probe,
}

impl Body {
    pub fn kind(&self) -> BodyKind {
        match self {
            Body::Empty => BodyKind::Empty,
            Body::Routing(_) => BodyKind::Routing,
            Body::Data(_) => BodyKind::Data,
            Body::Beacon(_) => BodyKind::Beacon,
            Body::Probe => BodyKind::Probe,
        }
    }
}

/// One frame that went on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct TxLogEntry {
    pub sender: NodeId,
    pub kind: FrameKind,
    pub body: BodyKind,
    pub broadcast: bool,
    pub payload_len: u32,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone)]
pub enum Ev {
    Mac(MacTimer),
    TxEnd(TxId),
    Respond(Box<Frame<Body>>),
    Aodv(AodvTimer),
    Hello,
    CallStart(u32),
    CallTimeout(u32),
    VoiceTick(u32),
    FtpStart(u32),
    FtpTimeout(u32),
    Advertise,
    Probe { to: Option<NodeId>, octets: u32 },
}

struct NodeRt {
    id: NodeId,
    profile: crate::mobility::MobilityProfile,
    mac: Station<Body>,
    aodv: AodvNode<Packet>,
    backoff: RngStream,
    tx: Option<(TxId, bool)>,
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub config: ScenarioConfig,
    pub metrics: MetricsRecorder,
    pub ledger: PacketLedger,
    pub counters: BTreeMap<String, u64>,
    pub summary: RunSummary,
    /// Series this scenario's traffic mix produces, in catalog order.
    pub series: Vec<Series>,
    pub tx_log: Vec<TxLogEntry>,
}

impl RunOutput {
    pub fn counter(&self, name: &str) -> u64 {
        self.counters.get(name).copied().unwrap_or(0)
    }
}

struct World {
    config: ScenarioConfig,
    scenario: Scenario,
    nodes: Vec<NodeRt>,
    index: BTreeMap<NodeId, usize>,
    medium: Medium<Frame<Body>>,
    calls: Vec<VoiceCall>,
    ftp: BTreeMap<u32, (usize, FtpSession)>,
    next_session: u32,
    next_packet: u64,
    metrics: MetricsRecorder,
    ledger: PacketLedger,
    counters: BTreeMap<&'static str, u64>,
    throughput: Vec<(SimTime, f64)>,
    tx_events: Vec<SimTime>,
    rx_events: Vec<SimTime>,
    aodv_sent: Vec<SimTime>,
    aodv_received: Vec<SimTime>,
    tx_log: Vec<TxLogEntry>,
}

fn wbss_bssid(id: NodeId) -> Bssid {
    let [hi, lo] = id.0.to_be_bytes();
    Bssid([0x02, 0xbb, 0, 0, hi, lo])
}

impl World {
    fn bump(&mut self, name: &'static str) {
        *self.counters.entry(name).or_insert(0) += 1;
    }

    fn idx(&self, id: NodeId) -> Result<usize, SimError> {
        self.index.get(&id).copied().ok_or(SimError::UnknownNode(id))
    }

    fn pos(&self, i: usize, t: SimTime) -> f64 {
        self.nodes[i].profile.position_clamped(t)
    }

    fn reaches(&self, sender: usize, rx: usize, at: SimTime) -> bool {
        sender == rx || in_range(self.pos(sender, at), self.pos(rx, at), &self.config.phy)
    }

    fn sender_idx(&self, id: NodeId) -> usize {
        self.index.get(&id).copied().unwrap_or(usize::MAX)
    }

    fn carrier(&self, i: usize, now: SimTime) -> bool {
        let ch = self.config.phy.channel;
        self.nodes[i].tx.is_some()
            || self
                .medium
                .records()
                .iter()
                .any(|r| r.channel == ch && r.spans(now) && self.reaches(self.sender_idx(r.sender), i, r.start))
    }

    fn refresh_busy(&mut self, engine: &mut Engine<Ev>) -> Result<(), SimError> {
        let now = engine.now();
        for i in 0..self.nodes.len() {
            let busy = self.carrier(i, now);
            let mut outs = Vec::new();
            self.nodes[i].mac.set_medium_busy(busy, now, &mut outs);
            self.apply_mac(engine, i, outs)?;
        }
        Ok(())
    }

    fn schedule(&self, engine: &mut Engine<Ev>, at: SimTime, i: usize, ev: Ev) -> Result<(), SimError> {
        engine.schedule(at, self.nodes[i].id, ev)?;
        Ok(())
    }

    fn apply_mac(&mut self, engine: &mut Engine<Ev>, i: usize, outs: Vec<MacOutput<Body>>) -> Result<(), SimError> {
        for o in outs {
            match o {
                MacOutput::ArmTimer { at, timer } => self.schedule(engine, at, i, Ev::Mac(timer))?,
                MacOutput::StartTx(frame) => self.start_tx(engine, i, frame, true)?,
                MacOutput::Done(c) => self.on_mac_done(engine, i, c)?,
            }
        }
        Ok(())
    }

    fn enqueue(&mut self, engine: &mut Engine<Ev>, i: usize, frame: Frame<Body>) -> Result<(), SimError> {
        self.ledger.generated += 1;
        let now = engine.now();
        let mut outs = Vec::new();
        let n = &mut self.nodes[i];
        n.mac.enqueue(frame, now, &mut n.backoff, &mut outs);
        self.apply_mac(engine, i, outs)
    }

    fn start_tx(&mut self, engine: &mut Engine<Ev>, i: usize, frame: Frame<Body>, dcf: bool) -> Result<(), SimError> {
        let now = engine.now();
        let airtime = frame_airtime(frame.airtime_octets(&self.config.mac), &self.config.phy);
        self.tx_log.push(TxLogEntry {
            sender: self.nodes[i].id,
            kind: frame.kind,
            body: frame.body.kind(),
            broadcast: frame.is_broadcast(),
            payload_len: frame.payload_len,
            start: now,
            end: now + airtime,
        });
        if frame.kind == FrameKind::Data {
            self.tx_events.push(now);
        }
        let ch = frame.channel;
        let id = self.medium.begin(self.nodes[i].id, ch, now, airtime, frame);
        self.nodes[i].tx = Some((id, dcf));
        self.schedule(engine, now + airtime, i, Ev::TxEnd(id))?;
        self.refresh_busy(engine)
    }

    fn tx_end(&mut self, engine: &mut Engine<Ev>, i: usize, id: TxId) -> Result<(), SimError> {
        let now = engine.now();
        let rec = self.medium.get(id).cloned().ok_or(SimError::LostTransmission(id))?;
        let dcf = self.nodes[i].tx.is_some_and(|(_, d)| d);
        self.nodes[i].tx = None;

        let mut deliveries = Vec::new();
        let (mut accepted, mut filtered) = (false, false);
        for r in 0..self.nodes.len() {
            if r == i {
                continue;
            }
            let outcome = reception_outcome(&rec, self.medium.records(), |o| {
                self.reaches(self.sender_idx(o.sender), r, o.start)
            });
            if outcome == Reception::Delivered {
                match self.nodes[r].mac.accept(&rec.frame) {
                    AcceptVerdict::Accept => accepted = true,
                    _ => filtered = true,
                }
                deliveries.push(r);
            }
        }
        let frame = rec.frame;
        if dcf && frame.is_broadcast() {
            if accepted {
                self.ledger.delivered += 1;
                if frame.kind == FrameKind::Data {
                    self.throughput.push((now, frame.payload_len as f64 * 8.0));
                }
            } else if filtered {
                self.ledger.filtered += 1;
            } else {
                self.ledger.collided += 1;
            }
        }

        self.refresh_busy(engine)?;
        if dcf {
            let mut outs = Vec::new();
            let n = &mut self.nodes[i];
            n.mac.on_tx_end(now, &mut n.backoff, &mut outs);
            self.apply_mac(engine, i, outs)?;
        }
        for r in deliveries {
            self.receive(engine, r, &frame)?;
        }
        self.medium.prune(now);
        Ok(())
    }

    fn receive(&mut self, engine: &mut Engine<Ev>, r: usize, frame: &Frame<Body>) -> Result<(), SimError> {
        let now = engine.now();
        let sifs = self.config.phy.sifs();
        let me = self.nodes[r].mac.addr();
        let mut outs = Vec::new();
        match frame.kind {
            FrameKind::Ack => {
                if frame.dst == me {
                    let n = &mut self.nodes[r];
                    n.mac.on_ack(frame.src, now, &mut n.backoff, &mut outs);
                }
            }
            FrameKind::Cts => {
                if frame.dst == me {
                    self.nodes[r].mac.on_cts(frame.src, now, &mut outs);
                } else {
                    self.nodes[r].mac.set_nav(now + frame.nav, now, &mut outs);
                }
            }
            FrameKind::Rts => {
                if frame.dst == me {
                    let cts = self.nodes[r].mac.make_cts(frame);
                    self.schedule(engine, now + sifs, r, Ev::Respond(Box::new(cts)))?;
                } else {
                    self.nodes[r].mac.set_nav(now + frame.nav, now, &mut outs);
                }
            }
            FrameKind::Data | FrameKind::WaveBeacon => match self.nodes[r].mac.accept(frame) {
                AcceptVerdict::DropInvalid => self.bump("rx_dropped_invalid"),
                AcceptVerdict::DropFilter => {
                    self.bump("rx_dropped_filter");
                    if !frame.is_broadcast() && frame.nav > SimTime::ZERO {
                        self.nodes[r].mac.set_nav(now + frame.nav, now, &mut outs);
                    }
                }
                AcceptVerdict::Accept => {
                    self.apply_mac(engine, r, core::mem::take(&mut outs))?;
                    return self.accepted(engine, r, frame);
                }
            },
        }
        self.apply_mac(engine, r, outs)
    }

    fn accepted(&mut self, engine: &mut Engine<Ev>, r: usize, frame: &Frame<Body>) -> Result<(), SimError> {
        let now = engine.now();
        if !frame.is_broadcast() {
            let ack = self.nodes[r].mac.make_ack(frame);
            self.schedule(engine, now + self.config.phy.sifs(), r, Ev::Respond(Box::new(ack)))?;
            if self.nodes[r].mac.is_duplicate(frame) {
                self.bump("rx_duplicate");
                return Ok(());
            }
        }
        if frame.kind == FrameKind::Data {
            self.rx_events.push(now);
        }
        let Some(from) = frame.src.node() else {
            return Ok(());
        };
        match &frame.body {
            Body::Routing(c) => {
                self.aodv_received.push(now);
                let mut acts = Vec::new();
                self.nodes[r].aodv.on_control(c.clone(), from, now, &mut acts);
                self.apply_aodv(engine, r, acts)
            }
            Body::Data(p) => self.deliver_data(engine, r, from, p.clone()),
            Body::Beacon(ad) => {
                let before = self.nodes[r].mac.mode();
                if self.nodes[r].mac.join_on_beacon(ad) != before {
                    self.bump("wbss_joined");
                }
                Ok(())
            }
            Body::Probe => {
                self.bump("probe_received");
                Ok(())
            }
            Body::Empty => Ok(()),
        }
    }

    fn on_mac_done(&mut self, engine: &mut Engine<Ev>, i: usize, c: Completion<Body>) -> Result<(), SimError> {
        let now = engine.now();
        let frame = c.frame;
        if frame.kind == FrameKind::Data {
            self.metrics.record(Series::WlanDelayS, now, c.delay.as_secs_f64())?;
        }
        match c.outcome {
            TxOutcome::SentNoAckExpected => Ok(()),
            TxOutcome::Acked => {
                self.ledger.delivered += 1;
                if frame.kind == FrameKind::Data {
                    self.throughput.push((now, frame.payload_len as f64 * 8.0));
                }
                if let Body::Data(p) = frame.body {
                    if let AppMsg::FtpSegment { session, .. } = p.msg {
                        if p.origin == self.nodes[i].id {
                            let next = self.ftp.get_mut(&session).and_then(|(_, s)| s.on_segment_acked());
                            if let Some(o) = next {
                                self.send_app(engine, o)?;
                            }
                        }
                    }
                }
                Ok(())
            }
            TxOutcome::GaveUp { .. } => {
                self.ledger.retry_exhausted += 1;
                self.bump("mac_gave_up");
                if let Some(next) = frame.dst.node() {
                    let mut acts = Vec::new();
                    self.nodes[i].aodv.on_link_break(next, now, &mut acts);
                    self.apply_aodv(engine, i, acts)?;
                }
                match frame.body {
                    Body::Data(mut p) => {
                        let segment = matches!(p.msg, AppMsg::FtpSegment { .. });
                        if !segment && p.origin == self.nodes[i].id && !p.resubmitted {
                            p.resubmitted = true;
                            self.bump("packets_resubmitted");
                            self.route_packet(engine, i, p)
                        } else {
                            self.packet_lost(engine, p)
                        }
                    }
                    Body::Routing(_) => {
                        self.bump("routing_unicast_lost");
                        Ok(())
                    }
                    _ => Ok(()),
                }
            }
        }
    }

    fn apply_aodv(&mut self, engine: &mut Engine<Ev>, i: usize, acts: Vec<AodvAction<Packet>>) -> Result<(), SimError> {
        let now = engine.now();
        let ch = self.config.phy.channel;
        let me = self.nodes[i].mac.addr();
        for a in acts {
            match a {
                AodvAction::Broadcast(msg) => {
                    self.aodv_sent.push(now);
                    let octets = self.config.aodv.octets(&msg);
                    let f = Frame::data(me, MacAddr::BROADCAST, Bssid::WILDCARD, octets, ch, Body::Routing(msg));
                    self.enqueue(engine, i, f)?;
                }
                AodvAction::Unicast { next_hop, msg } => {
                    self.aodv_sent.push(now);
                    let octets = self.config.aodv.octets(&msg);
                    let dst = MacAddr::for_node(next_hop);
                    let f = Frame::data(me, dst, Bssid::WILDCARD, octets, ch, Body::Routing(msg));
                    self.enqueue(engine, i, f)?;
                }
                AodvAction::Forward { next_hop, packet } => {
                    let bssid = self.nodes[i].mac.data_bssid();
                    let f = Frame::data(me, MacAddr::for_node(next_hop), bssid, packet.octets, ch, Body::Data(packet));
                    self.enqueue(engine, i, f)?;
                }
                AodvAction::ArmTimer { at, timer } => self.schedule(engine, at, i, Ev::Aodv(timer))?,
                AodvAction::DiscoveryDone { elapsed, .. } => {
                    self.bump("discoveries_completed");
                    self.metrics.record(Series::AodvDiscoveryTimeS, now, elapsed.as_secs_f64())?;
                }
                AodvAction::DiscoveryFailed { dropped, .. } => {
                    self.bump("discoveries_failed");
                    for p in dropped {
                        self.packet_lost(engine, p)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn route_packet(&mut self, engine: &mut Engine<Ev>, i: usize, p: Packet) -> Result<(), SimError> {
        let now = engine.now();
        let mut acts = Vec::new();
        let dest = p.dest;
        if self.nodes[i].aodv.resolve_route(dest, p, now, &mut acts).is_err() {
            return Err(SimError::UnknownNode(dest));
        }
        self.apply_aodv(engine, i, acts)
    }

    fn packet_lost(&mut self, engine: &mut Engine<Ev>, p: Packet) -> Result<(), SimError> {
        self.bump("app_packets_lost");
        match p.msg {
            AppMsg::H323 { call, .. } => {
                if self.calls.get_mut(call as usize).is_some_and(|c| c.abort()) {
                    self.bump("calls_aborted");
                }
                Ok(())
            }
            AppMsg::Voice { .. } => {
                self.bump("voice_frames_lost");
                Ok(())
            }
            AppMsg::FtpRequest { session } | AppMsg::FtpSegment { session, .. } => self.ftp_fail(engine, session),
        }
    }

    fn ftp_fail(&mut self, engine: &mut Engine<Ev>, session: u32) -> Result<(), SimError> {
        let Some((slot, s)) = self.ftp.get_mut(&session) else { return Ok(()) };
        if !s.fail() {
            return Ok(());
        }
        let (slot, client) = (*slot, s.client);
        self.bump("ftp_failed");
        let at = engine.now() + SimTime::from_millis(self.config.ftp.inter_request_ms);
        let ci = self.idx(client)?;
        self.schedule(engine, at, ci, Ev::FtpStart(slot as u32))
    }

    fn deliver_data(&mut self, engine: &mut Engine<Ev>, r: usize, from: NodeId, p: Packet) -> Result<(), SimError> {
        let now = engine.now();
        self.nodes[r].aodv.note_data(p.origin, from, now);
        if p.dest == self.nodes[r].id {
            return self.app_receive(engine, r, p);
        }
        match self.nodes[r].aodv.next_hop(p.dest, now) {
            Some(next_hop) => {
                self.bump("packets_forwarded");
                self.apply_aodv(engine, r, alloc::vec![AodvAction::Forward { next_hop, packet: p }])
            }
            None => {
                self.bump("forward_no_route");
                self.packet_lost(engine, p)
            }
        }
    }

    fn send_app(&mut self, engine: &mut Engine<Ev>, o: Outgoing) -> Result<(), SimError> {
        let i = self.idx(o.from)?;
        let p = Packet {
            id: self.next_packet,
            origin: o.from,
            dest: o.to,
            msg: o.msg,
            octets: o.octets,
            created: engine.now(),
            resubmitted: false,
        };
        self.next_packet += 1;
        self.route_packet(engine, i, p)
    }

    fn app_receive(&mut self, engine: &mut Engine<Ev>, r: usize, p: Packet) -> Result<(), SimError> {
        let now = engine.now();
        let me = self.nodes[r].id;
        match p.msg {
            AppMsg::H323 { call, msg } => {
                let Some(c) = self.calls.get_mut(call as usize) else { return Ok(()) };
                let interval = c.params().frame_interval();
                let bidirectional = c.params().bidirectional;
                match c.on_h323(me, msg, now) {
                    CallStep::Send(o) => {
                        if msg == H323Msg::Setup && bidirectional {
                            self.schedule(engine, now + interval, r, Ev::VoiceTick(call))?;
                        }
                        self.send_app(engine, o)
                    }
                    CallStep::Established { setup_time } => {
                        self.bump("calls_established");
                        self.metrics.record(Series::H323SetupTimeS, now, setup_time.as_secs_f64())?;
                        self.schedule(engine, now + interval, r, Ev::VoiceTick(call))
                    }
                    CallStep::Ignore => Ok(()),
                }
            }
            AppMsg::Voice { captured, .. } => {
                self.bump("voice_frames_received");
                self.metrics.record(Series::VoiceE2eDelayS, now, (now - captured).as_secs_f64())?;
                Ok(())
            }
            AppMsg::FtpRequest { session } => {
                let next = self.ftp.get_mut(&session).and_then(|(_, s)| s.on_request());
                match next {
                    Some(o) => self.send_app(engine, o),
                    None => Ok(()),
                }
            }
            AppMsg::FtpSegment { session, index } => {
                let Some((slot, s)) = self.ftp.get_mut(&session) else { return Ok(()) };
                let Some(rt) = s.on_segment(index, now) else { return Ok(()) };
                let slot = *slot as u32;
                self.bump("ftp_completed");
                self.metrics.record(Series::FtpResponseS, now, rt.as_secs_f64())?;
                let at = now + SimTime::from_millis(self.config.ftp.inter_request_ms);
                self.schedule(engine, at, r, Ev::FtpStart(slot))
            }
        }
    }

    fn on_event(&mut self, engine: &mut Engine<Ev>, ev: &Event<Ev>) -> Result<(), SimError> {
        let i = self.idx(ev.target)?;
        let now = engine.now();
        match &ev.kind {
            Ev::Mac(timer) => {
                let mut outs = Vec::new();
                let n = &mut self.nodes[i];
                n.mac.on_timer(*timer, now, &mut n.backoff, &mut outs);
                self.apply_mac(engine, i, outs)
            }
            Ev::TxEnd(id) => self.tx_end(engine, i, *id),
            Ev::Respond(frame) => {
                if self.nodes[i].tx.is_some() {
                    self.bump("responses_suppressed");
                    return Ok(());
                }
                self.start_tx(engine, i, (**frame).clone(), false)
            }
            Ev::Aodv(timer) => {
                let mut acts = Vec::new();
                self.nodes[i].aodv.on_timer(*timer, now, &mut acts);
                self.apply_aodv(engine, i, acts)
            }
            Ev::Hello => {
                let mut acts = Vec::new();
                self.nodes[i].aodv.hello_tick(now, &mut acts);
                self.apply_aodv(engine, i, acts)?;
                self.schedule(engine, now + self.config.aodv.hello_interval(), i, Ev::Hello)
            }
            Ev::CallStart(call) => {
                let Some(c) = self.calls.get_mut(*call as usize) else { return Ok(()) };
                let timeout = SimTime::from_millis(c.params().setup_timeout_ms);
                match c.start(now) {
                    Ok(o) => {
                        self.bump("calls_started");
                        self.schedule(engine, now + timeout, i, Ev::CallTimeout(*call))?;
                        self.send_app(engine, o)
                    }
                    Err(_) => Ok(()),
                }
            }
            Ev::CallTimeout(call) => {
                if self.calls.get_mut(*call as usize).is_some_and(|c| c.abort()) {
                    self.bump("calls_aborted");
                }
                Ok(())
            }
            Ev::VoiceTick(call) => {
                let Some(c) = self.calls.get_mut(*call as usize) else { return Ok(()) };
                if matches!(c.state(), CallState::Ended | CallState::Aborted) {
                    return Ok(());
                }
                let interval = c.params().frame_interval();
                let frame = c.voice_next_frame(ev.target, now);
                if let Some(o) = frame {
                    self.bump("voice_frames_sent");
                    self.send_app(engine, o)?;
                }
                self.schedule(engine, now + interval, i, Ev::VoiceTick(*call))
            }
            Ev::FtpStart(slot) => {
                let Some(plan) = self.scenario.ftp.get(*slot as usize).cloned() else { return Ok(()) };
                let id = self.next_session;
                self.next_session += 1;
                let mut s = FtpSession::new(id, plan.client, plan.server, self.config.ftp.clone())?;
                let o = s.request(now);
                self.ftp.insert(id, (*slot as usize, s));
                self.bump("ftp_started");
                let timeout = SimTime::from_millis(self.config.ftp.session_timeout_ms);
                self.schedule(engine, now + timeout, i, Ev::FtpTimeout(id))?;
                self.send_app(engine, o)
            }
            Ev::FtpTimeout(id) => self.ftp_fail(engine, *id),
            Ev::Advertise => {
                let ad = WbssAdvertisement {
                    bssid: wbss_bssid(self.nodes[i].id),
                    service: self.config.wbss.service.as_bytes().to_vec(),
                    channel: self.config.phy.channel,
                };
                let mut outs = Vec::new();
                self.ledger.generated += 1;
                let n = &mut self.nodes[i];
                n.mac
                    .advertise(&ad, Body::Beacon(ad.clone()), now, &mut n.backoff, &mut outs)
                    .map_err(ConfigError::from)?;
                self.bump("wbss_advertised");
                self.apply_mac(engine, i, outs)
            }
            Ev::Probe { to, octets } => {
                let me = self.nodes[i].mac.addr();
                let dst = to.map_or(MacAddr::BROADCAST, MacAddr::for_node);
                let f = Frame::data(me, dst, Bssid::WILDCARD, *octets, self.config.phy.channel, Body::Probe);
                self.enqueue(engine, i, f)
            }
        }
    }

    fn applicable(&self) -> Vec<Series> {
        Series::ALL
            .into_iter()
            .filter(|s| match s {
                Series::H323SetupTimeS | Series::VoiceE2eDelayS => !self.scenario.calls.is_empty(),
                Series::FtpResponseS => !self.scenario.ftp.is_empty(),
                _ => true,
            })
            .collect()
    }
}

impl From<crate::apps::AppError> for SimError {
    fn from(e: crate::apps::AppError) -> Self {
        SimError::Config(ConfigError::App(e))
    }
}

impl Handler<Ev> for World {
    type Error = SimError;

    fn handle(&mut self, engine: &mut Engine<Ev>, event: &Event<Ev>) -> Result<(), SimError> {
        self.on_event(engine, event)
    }
}

/// One configured run: build with [`Simulation::new`], then [`Simulation::run`].
pub struct Simulation {
    engine: Engine<Ev>,
    world: World,
    processed: u64,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let scenario = build_scenario(&config)?;
        let seed = config.seed;
        let first_server = scenario.nodes.iter().find(|n| n.role == Role::Server).map(|n| n.id);
        let wbss = config.wbss.enabled;
        let mut nodes = Vec::new();
        let mut index = BTreeMap::new();
        for (i, def) in scenario.nodes.iter().enumerate() {
            let mut mac = Station::new(def.id, config.mac.clone(), config.phy.clone());
            if wbss && Some(def.id) != first_server {
                mac = mac.with_join_policy(JoinPolicy {
                    service: Some(config.wbss.service.as_bytes().to_vec()),
                });
            }
            debug_assert_eq!(mac.mode(), StationMode::WaveMode);
            nodes.push(NodeRt {
                id: def.id,
                profile: def.profile.clone(),
                mac,
                aodv: AodvNode::new(def.id, config.aodv.clone()),
                backoff: RngStream::new(seed, &alloc::format!("backoff/node{}", def.id.0)),
                tx: None,
            });
            index.insert(def.id, i);
        }

        let mut calls = Vec::new();
        for (k, c) in scenario.calls.iter().enumerate() {
            calls.push(VoiceCall::new(k as u32, c.caller, c.callee, config.voice.clone())?);
        }

        let mut engine = Engine::new();
        if config.aodv.hello_enabled {
            let interval = config.aodv.hello_interval().as_micros() as i64;
            for n in &nodes {
                let mut rng = RngStream::new(seed, &alloc::format!("hello/node{}", n.id.0));
                let phase = rng.uniform(0, interval - 1)? as u64;
                engine.schedule(SimTime::from_micros(phase), n.id, Ev::Hello)?;
            }
        }
        if let (true, Some(s)) = (wbss, first_server) {
            engine.schedule(SimTime::ZERO, s, Ev::Advertise)?;
        }
        for (k, c) in scenario.calls.iter().enumerate() {
            engine.schedule(SimTime::from_millis(config.voice.start_ms), c.caller, Ev::CallStart(k as u32))?;
        }
        for (k, f) in scenario.ftp.iter().enumerate() {
            engine.schedule(SimTime::from_millis(config.ftp.start_ms), f.client, Ev::FtpStart(k as u32))?;
        }

        let world = World {
            config,
            scenario,
            nodes,
            index,
            medium: Medium::new(),
            calls,
            ftp: BTreeMap::new(),
            next_session: 0,
            next_packet: 0,
            metrics: MetricsRecorder::new(),
            ledger: PacketLedger::default(),
            counters: BTreeMap::new(),
            throughput: Vec::new(),
            tx_events: Vec::new(),
            rx_events: Vec::new(),
            aodv_sent: Vec::new(),
            aodv_received: Vec::new(),
            tx_log: Vec::new(),
        };
        Ok(Simulation {
            engine,
            world,
            processed: 0,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.world.config
    }

    pub fn scenario(&self) -> &Scenario {
        &self.world.scenario
    }

    pub fn now(&self) -> SimTime {
        self.engine.now()
    }

    /// Queues a bare MAC frame at `from` at time `at`; `to = None` broadcasts.
    pub fn probe(&mut self, at: SimTime, from: NodeId, to: Option<NodeId>, octets: u32) -> Result<(), SimError> {
        self.world.idx(from)?;
        if let Some(t) = to {
            self.world.idx(t)?;
        }
        self.engine.schedule(at, from, Ev::Probe { to, octets })?;
        Ok(())
    }

    pub fn run_until(&mut self, t: SimTime) -> Result<RunSummary, SimError> {
        let s = self.engine.run_until(t, &mut self.world)?;
        self.processed += s.events_processed;
        Ok(s)
    }

    pub fn station(&self, id: NodeId) -> Option<&Station<Body>> {
        self.world.index.get(&id).map(|&i| &self.world.nodes[i].mac)
    }

    pub fn aodv(&self, id: NodeId) -> Option<&AodvNode<Packet>> {
        self.world.index.get(&id).map(|&i| &self.world.nodes[i].aodv)
    }

    pub fn position(&self, id: NodeId, t: SimTime) -> Option<f64> {
        self.world.index.get(&id).map(|&i| self.world.pos(i, t))
    }

    pub fn calls(&self) -> &[VoiceCall] {
        &self.world.calls
    }

    pub fn ftp_sessions(&self) -> impl Iterator<Item = &FtpSession> {
        self.world.ftp.values().map(|(_, s)| s)
    }

    pub fn tx_log(&self) -> &[TxLogEntry] {
        &self.world.tx_log
    }

    pub fn metrics(&self) -> &MetricsRecorder {
        &self.world.metrics
    }

    /// Runs to the configured duration and collects the results.
    pub fn run(mut self) -> Result<RunOutput, SimError> {
        let end = self.world.config.duration();
        self.run_until(end)?;
        self.finish()
    }

    /// Closes the books at the current clock.
    pub fn finish(mut self) -> Result<RunOutput, SimError> {
        let w = &mut self.world;
        let end = self.engine.now();
        w.ledger.in_flight = w.nodes.iter().map(|n| n.mac.queue_len() as u64).sum();
        for c in &mut w.calls {
            c.end();
        }
        let window = SimTime::from_secs(1);
        let windowed = [
            (Series::WlanThroughputBps, windowed_sum(&w.throughput, window, end)),
            (Series::AodvSentPps, windowed_rate(&w.aodv_sent, window, end)),
            (Series::AodvReceivedPps, windowed_rate(&w.aodv_received, window, end)),
            (Series::PktsTxPps, windowed_rate(&w.tx_events, window, end)),
            (Series::PktsRxPps, windowed_rate(&w.rx_events, window, end)),
        ];
        for (series, samples) in windowed {
            for s in samples {
                w.metrics.record(series, s.t, s.value)?;
            }
        }
        let mut counters: BTreeMap<String, u64> = w.counters.iter().map(|(k, v)| ((*k).into(), *v)).collect();
        let l = w.ledger;
        for (k, v) in [
            ("mac_generated", l.generated),
            ("mac_delivered", l.delivered),
            ("mac_collided", l.collided),
            ("mac_filtered", l.filtered),
            ("mac_retry_exhausted", l.retry_exhausted),
            ("mac_in_flight", l.in_flight),
        ] {
            counters.insert(k.into(), v);
        }
        for (k, v) in [
            ("aodv_sent", w.aodv_sent.len() as u64),
            ("aodv_received", w.aodv_received.len() as u64),
            ("data_frames_tx", w.tx_events.len() as u64),
            ("data_frames_rx", w.rx_events.len() as u64),
        ] {
            counters.insert(k.into(), v);
        }
        let series = w.applicable();
        Ok(RunOutput {
            config: w.config.clone(),
            metrics: core::mem::take(&mut w.metrics),
            ledger: l,
            counters,
            summary: RunSummary {
                events_processed: self.processed,
                final_clock: end,
            },
            series,
            tx_log: core::mem::take(&mut w.tx_log),
        })
    }
}
