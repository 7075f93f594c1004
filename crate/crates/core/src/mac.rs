//! IEEE 802.11p MAC.
//!
//! Channel access is plain DCF: carrier sense, a DIFS wait, a binary
//! exponential backoff drawn from `[0, cw]`, optional RTS/CTS, and positive
//! acknowledgement with retries for unicast. Broadcast frames go out once and
//! never move the contention window.
//!
//! On top of DCF sit the WAVE additions: stations may exchange data frames
//! under the wildcard BSSID without any association, a WBSS is formed by a
//! single on-demand beacon and joined without further frames, and a wildcard
//! data frame is only valid with both DS bits cleared.
//!
//! [`Station`] is event driven. Callers feed it medium state changes, timer
//! expiries and received control frames; it answers with [`MacOutput`]s
//! (arm a timer, put a frame on the air, report a completion).

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec::Vec;
use core::fmt;

use crate::engine::{RngStream, SimTime};
use crate::node::NodeId;
use crate::phy::{frame_airtime, ChannelId, PhyParams};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MacError {
    #[error("mac: WBSS advertisement must not use the wildcard BSSID")]
    WildcardWbss,
    #[error("mac: wildcard-BSSID data frame with a DS bit set")]
    WildcardWithDsBits,
    #[error("mac: {0:?} frame must carry no payload")]
    ControlPayload(FrameKind),
    #[error("mac.{field}: {value} is not of the form 2^k - 1")]
    WindowNotPowerOfTwo { field: &'static str, value: u16 },
    #[error("mac.cw_min ({min}) exceeds mac.cw_max ({max})")]
    WindowOrder { min: u16, max: u16 },
}

/// 48-bit IEEE MAC address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MacAddr(pub [u8; 6]);

impl MacAddr {
    pub const BROADCAST: MacAddr = MacAddr([0xff; 6]);

    /// Locally administered address derived from the node id.
    pub fn for_node(id: NodeId) -> MacAddr {
        let [hi, lo] = id.0.to_be_bytes();
        MacAddr([0x02, 0, 0, 0, hi, lo])
    }

    pub fn node(self) -> Option<NodeId> {
        match self.0 {
            [0x02, 0, 0, 0, hi, lo] => Some(NodeId(u16::from_be_bytes([hi, lo]))),
            _ => None,
        }
    }

    pub fn is_broadcast(self) -> bool {
        self == MacAddr::BROADCAST
    }
}

impl fmt::Debug for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3], b[4], b[5])
    }
}

/// Basic service set identifier. All ones is the WAVE wildcard.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Bssid(pub [u8; 6]);

impl Bssid {
    pub const WILDCARD: Bssid = Bssid([0xff; 6]);

    pub fn is_wildcard(self) -> bool {
        self == Bssid::WILDCARD
    }
}

impl fmt::Debug for Bssid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_wildcard() {
            return f.write_str("wildcard");
        }
        fmt::Debug::fmt(&MacAddr(self.0), f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameKind {
    Data,
    Ack,
    Rts,
    Cts,
    WaveBeacon,
}

impl FrameKind {
    pub fn is_control(self) -> bool {
        matches!(self, FrameKind::Ack | FrameKind::Rts | FrameKind::Cts)
    }
}

/// MAC protocol data unit. `body` is whatever the upper layer attaches; only
/// `payload_len` counts towards airtime.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<B> {
    pub src: MacAddr,
    pub dst: MacAddr,
    pub bssid: Bssid,
    pub to_ds: bool,
    pub from_ds: bool,
    pub kind: FrameKind,
    pub payload_len: u32,
    pub channel: ChannelId,
    pub seq: u16,
    pub retry: bool,
    /// Duration field: how long after this frame ends the exchange continues.
    pub nav: SimTime,
    pub body: B,
}

impl<B> Frame<B> {
    pub fn data(src: MacAddr, dst: MacAddr, bssid: Bssid, payload_len: u32, channel: ChannelId, body: B) -> Self {
        Frame {
            src,
            dst,
            bssid,
            to_ds: false,
            from_ds: false,
            kind: FrameKind::Data,
            payload_len,
            channel,
            seq: 0,
            retry: false,
            nav: SimTime::ZERO,
            body,
        }
    }

    pub fn is_broadcast(&self) -> bool {
        self.dst.is_broadcast()
    }

    /// Octets that occupy the air: the payload for data and beacons, the
    /// fixed control-frame sizes otherwise.
    pub fn airtime_octets(&self, mac: &MacParams) -> u64 {
        match self.kind {
            FrameKind::Data | FrameKind::WaveBeacon => self.payload_len as u64,
            FrameKind::Ack => mac.ack_octets as u64,
            FrameKind::Rts => mac.rts_octets as u64,
            FrameKind::Cts => mac.cts_octets as u64,
        }
    }

    pub fn check(&self) -> Result<(), MacError> {
        if self.kind.is_control() && self.payload_len != 0 {
            return Err(MacError::ControlPayload(self.kind));
        }
        if self.bssid.is_wildcard() && (self.to_ds || self.from_ds) {
            return Err(MacError::WildcardWithDsBits);
        }
        Ok(())
    }

    fn map_body<C>(&self, body: C) -> Frame<C> {
        Frame {
            src: self.src,
            dst: self.dst,
            bssid: self.bssid,
            to_ds: self.to_ds,
            from_ds: self.from_ds,
            kind: self.kind,
            payload_len: self.payload_len,
            channel: self.channel,
            seq: self.seq,
            retry: self.retry,
            nav: self.nav,
            body,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StationMode {
    WaveMode,
    WbssMember(Bssid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptVerdict {
    Accept,
    DropFilter,
    DropInvalid,
}

/// Receive filter of a WAVE station. Pure in the mode and the frame header.
pub fn accept_frame<B>(mode: StationMode, me: MacAddr, frame: &Frame<B>) -> AcceptVerdict {
    if frame.bssid.is_wildcard() && (frame.to_ds || frame.from_ds) {
        return AcceptVerdict::DropInvalid;
    }
    let bss_ok = frame.bssid.is_wildcard() || mode == StationMode::WbssMember(frame.bssid);
    if !bss_ok {
        return AcceptVerdict::DropFilter;
    }
    if frame.dst != me && !frame.dst.is_broadcast() {
        return AcceptVerdict::DropFilter;
    }
    AcceptVerdict::Accept
}

/// Content of an on-demand WBSS beacon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WbssAdvertisement {
    pub bssid: Bssid,
    pub service: Vec<u8>,
    pub channel: ChannelId,
}

/// Which advertisements a station will join. Only the first matching one is
/// ever joined; later advertisements are ignored.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct JoinPolicy {
    pub service: Option<Vec<u8>>,
}

impl JoinPolicy {
    pub fn matches(&self, ad: &WbssAdvertisement) -> bool {
        self.service.as_deref() == Some(ad.service.as_slice())
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct MacParams {
    pub cw_min: u16,
    pub cw_max: u16,
    pub retry_limit: u8,
    /// Unicast payloads of at least this many octets use RTS/CTS. `None`
    /// disables the handshake.
    pub rts_threshold: Option<u32>,
    pub ack_octets: u32,
    pub rts_octets: u32,
    pub cts_octets: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            cw_min: 15,
            cw_max: 1023,
            retry_limit: 7,
            rts_threshold: None,
            ack_octets: 10,
            rts_octets: 16,
            cts_octets: 10,
        }
    }
}

fn is_window(v: u16) -> bool {
    (v as u32 + 1).is_power_of_two()
}

impl MacParams {
    pub fn validate(&self) -> Result<(), MacError> {
        for (field, value) in [("cw_min", self.cw_min), ("cw_max", self.cw_max)] {
            if !is_window(value) {
                return Err(MacError::WindowNotPowerOfTwo { field, value });
            }
        }
        if self.cw_min > self.cw_max {
            return Err(MacError::WindowOrder {
                min: self.cw_min,
                max: self.cw_max,
            });
        }
        Ok(())
    }

    pub fn ack_airtime(&self, phy: &PhyParams) -> SimTime {
        frame_airtime(self.ack_octets as u64, phy)
    }

    /// SIFS + ACK airtime + two slots.
    pub fn ack_timeout(&self, phy: &PhyParams) -> SimTime {
        phy.sifs() + self.ack_airtime(phy) + phy.slot() * 2
    }

    pub fn cts_timeout(&self, phy: &PhyParams) -> SimTime {
        phy.sifs() + frame_airtime(self.cts_octets as u64, phy) + phy.slot() * 2
    }
}

/// Window after one more failure: `2(cw + 1) - 1`, capped at `cw_max`.
pub fn grow_window(cw: u16, cw_max: u16) -> u16 {
    let next = 2 * (cw as u32 + 1) - 1;
    next.min(cw_max as u32) as u16
}

/// Backoff slots drawn uniformly from `[0, cw]`.
pub fn next_backoff(cw: u16, stream: &mut RngStream) -> u16 {
    // `0 <= cw` so the range is never empty.
    stream.uniform(0, cw as i64).map(|v| v as u16).unwrap_or(0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxOutcome {
    Acked,
    SentNoAckExpected,
    GaveUp { retries: u8 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion<B> {
    pub frame: Frame<B>,
    pub outcome: TxOutcome,
    /// Head-of-queue to ACK (or end of airtime for broadcast).
    pub delay: SimTime,
    pub attempts: u8,
}

/// Opaque timer identity; stale timers are recognised and ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct MacTimer(u64);

#[derive(Debug, Clone, PartialEq)]
pub enum MacOutput<B> {
    ArmTimer { at: SimTime, timer: MacTimer },
    /// Put this frame on the air now. The caller reports its end through
    /// [`Station::on_tx_end`].
    StartTx(Frame<B>),
    Done(Completion<B>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Idle,
    WaitMedium,
    Difs,
    Backoff { since: SimTime },
    OnAir { rts: bool },
    AwaitCts,
    SifsBeforeData,
    AwaitAck,
}

#[derive(Debug, Clone)]
struct Pending<B> {
    frame: Frame<B>,
    hol_since: SimTime,
    attempts: u8,
}

/// Per-radio MAC state.
#[derive(Debug, Clone)]
pub struct Station<B> {
    node: NodeId,
    addr: MacAddr,
    mode: StationMode,
    policy: JoinPolicy,
    params: MacParams,
    phy: PhyParams,
    cw: u16,
    retry_count: u8,
    backoff_remaining: u16,
    queue: VecDeque<Pending<B>>,
    phase: Phase,
    phys_busy: bool,
    nav_until: SimTime,
    next_timer: u64,
    phase_timer: Option<MacTimer>,
    nav_timer: Option<MacTimer>,
    next_seq: u16,
    last_seq: BTreeMap<MacAddr, u16>,
}

impl<B: Clone + Default> Station<B> {
    pub fn new(node: NodeId, params: MacParams, phy: PhyParams) -> Self {
        Station {
            node,
            addr: MacAddr::for_node(node),
            mode: StationMode::WaveMode,
            policy: JoinPolicy::default(),
            cw: params.cw_min,
            params,
            phy,
            retry_count: 0,
            backoff_remaining: 0,
            queue: VecDeque::new(),
            phase: Phase::Idle,
            phys_busy: false,
            nav_until: SimTime::ZERO,
            next_timer: 0,
            phase_timer: None,
            nav_timer: None,
            next_seq: 0,
            last_seq: BTreeMap::new(),
        }
    }

    pub fn with_join_policy(mut self, policy: JoinPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn addr(&self) -> MacAddr {
        self.addr
    }

    pub fn mode(&self) -> StationMode {
        self.mode
    }

    pub fn params(&self) -> &MacParams {
        &self.params
    }

    pub fn cw(&self) -> u16 {
        self.cw
    }

    pub fn retry_count(&self) -> u8 {
        self.retry_count
    }

    pub fn backoff_remaining(&self) -> u16 {
        self.backoff_remaining
    }

    /// Frames waiting, including the one in service.
    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_idle(&self) -> bool {
        self.phase == Phase::Idle
    }

    /// BSSID this station stamps on its unicast data frames.
    pub fn data_bssid(&self) -> Bssid {
        match self.mode {
            StationMode::WaveMode => Bssid::WILDCARD,
            StationMode::WbssMember(b) => b,
        }
    }

    pub fn accept(&self, frame: &Frame<B>) -> AcceptVerdict {
        accept_frame(self.mode, self.addr, frame)
    }

    /// Records the sequence number of a received unicast data frame and
    /// reports whether it is a retransmission of one already delivered.
    pub fn is_duplicate(&mut self, frame: &Frame<B>) -> bool {
        let prev = self.last_seq.insert(frame.src, frame.seq);
        frame.retry && prev == Some(frame.seq)
    }

    /// Builds an ACK for a received unicast frame.
    pub fn make_ack(&self, rx: &Frame<B>) -> Frame<B> {
        let mut f = rx.map_body(B::default());
        f.kind = FrameKind::Ack;
        f.src = self.addr;
        f.dst = rx.src;
        f.bssid = Bssid::WILDCARD;
        f.to_ds = false;
        f.from_ds = false;
        f.payload_len = 0;
        f.retry = false;
        f.nav = SimTime::ZERO;
        f
    }

    pub fn make_cts(&self, rts: &Frame<B>) -> Frame<B> {
        let mut f = self.make_ack(rts);
        f.kind = FrameKind::Cts;
        let cts = frame_airtime(self.params.cts_octets as u64, &self.phy);
        f.nav = rts.nav.saturating_sub(self.phy.sifs() + cts);
        f
    }

    fn busy(&self, now: SimTime) -> bool {
        self.phys_busy || now < self.nav_until
    }

    fn arm(&mut self, at: SimTime, out: &mut Vec<MacOutput<B>>) -> MacTimer {
        let t = MacTimer(self.next_timer);
        self.next_timer += 1;
        out.push(MacOutput::ArmTimer { at, timer: t });
        t
    }

    fn arm_phase(&mut self, at: SimTime, out: &mut Vec<MacOutput<B>>) {
        let t = self.arm(at, out);
        self.phase_timer = Some(t);
    }

    /// Hands a frame to DCF. Data and beacon frames get the next sequence number.
    pub fn enqueue(&mut self, mut frame: Frame<B>, now: SimTime, rng: &mut RngStream, out: &mut Vec<MacOutput<B>>) {
        frame.src = self.addr;
        frame.seq = self.next_seq;
        self.next_seq = self.next_seq.wrapping_add(1);
        self.queue.push_back(Pending {
            frame,
            hol_since: now,
            attempts: 0,
        });
        if self.phase == Phase::Idle {
            self.serve_head(now, rng, out);
        }
    }

    fn serve_head(&mut self, now: SimTime, rng: &mut RngStream, out: &mut Vec<MacOutput<B>>) {
        let Some(head) = self.queue.front_mut() else {
            self.phase = Phase::Idle;
            self.phase_timer = None;
            return;
        };
        head.hol_since = now;
        self.retry_count = 0;
        self.backoff_remaining = next_backoff(self.cw, rng);
        self.contend(now, out);
    }

    fn contend(&mut self, now: SimTime, out: &mut Vec<MacOutput<B>>) {
        if self.busy(now) {
            self.phase = Phase::WaitMedium;
            self.phase_timer = None;
        } else {
            self.phase = Phase::Difs;
            self.arm_phase(now + self.phy.difs(), out);
        }
    }

    fn on_busy(&mut self, now: SimTime) {
        match self.phase {
            Phase::Difs => {
                self.phase = Phase::WaitMedium;
                self.phase_timer = None;
            }
            Phase::Backoff { since } => {
                let elapsed = (now - since).as_micros() / self.phy.slot_time_us;
                let elapsed = elapsed.min(self.backoff_remaining as u64) as u16;
                self.backoff_remaining -= elapsed;
                self.phase = Phase::WaitMedium;
                self.phase_timer = None;
            }
            _ => {}
        }
    }

    fn on_idle(&mut self, now: SimTime, out: &mut Vec<MacOutput<B>>) {
        if self.phase == Phase::WaitMedium {
            self.phase = Phase::Difs;
            self.arm_phase(now + self.phy.difs(), out);
        }
    }

    /// Physical carrier sense changed. The station's own transmissions count
    /// as busy.
    pub fn set_medium_busy(&mut self, busy: bool, now: SimTime, out: &mut Vec<MacOutput<B>>) {
        let before = self.busy(now);
        self.phys_busy = busy;
        let after = self.busy(now);
        match (before, after) {
            (false, true) => self.on_busy(now),
            (true, false) => self.on_idle(now, out),
            _ => {}
        }
    }

    /// Virtual carrier sense from an overheard duration field.
    pub fn set_nav(&mut self, until: SimTime, now: SimTime, out: &mut Vec<MacOutput<B>>) {
        if until <= self.nav_until || until <= now {
            return;
        }
        let before = self.busy(now);
        self.nav_until = until;
        let t = self.arm(until, out);
        self.nav_timer = Some(t);
        if !before {
            self.on_busy(now);
        }
    }

    pub fn on_timer(&mut self, timer: MacTimer, now: SimTime, rng: &mut RngStream, out: &mut Vec<MacOutput<B>>) {
        if self.nav_timer == Some(timer) {
            self.nav_timer = None;
            if !self.busy(now) {
                self.on_idle(now, out);
            }
            return;
        }
        if self.phase_timer != Some(timer) {
            return;
        }
        self.phase_timer = None;
        match self.phase {
            Phase::Difs => {
                if self.backoff_remaining == 0 {
                    self.transmit_head(out);
                } else {
                    self.phase = Phase::Backoff { since: now };
                    let at = now + self.phy.slot() * self.backoff_remaining as u64;
                    self.arm_phase(at, out);
                }
            }
            Phase::Backoff { .. } => {
                self.backoff_remaining = 0;
                self.transmit_head(out);
            }
            Phase::AwaitAck | Phase::AwaitCts => self.failure(now, rng, out),
            Phase::SifsBeforeData => {
                let Some(head) = self.queue.front() else { return };
                let frame = head.frame.clone();
                self.phase = Phase::OnAir { rts: false };
                out.push(MacOutput::StartTx(frame));
            }
            _ => {}
        }
    }

    fn uses_rts(&self, frame: &Frame<B>) -> bool {
        !frame.is_broadcast()
            && frame.kind == FrameKind::Data
            && self.params.rts_threshold.is_some_and(|t| frame.payload_len >= t)
    }

    fn transmit_head(&mut self, out: &mut Vec<MacOutput<B>>) {
        let ack = self.params.ack_airtime(&self.phy);
        let sifs = self.phy.sifs();
        let Some(head) = self.queue.front_mut() else {
            self.phase = Phase::Idle;
            return;
        };
        head.frame.retry = head.attempts > 0;
        head.attempts = head.attempts.saturating_add(1);
        head.frame.nav = if head.frame.is_broadcast() { SimTime::ZERO } else { sifs + ack };
        let frame = head.frame.clone();
        if self.uses_rts(&frame) {
            let data = frame_airtime(frame.airtime_octets(&self.params), &self.phy);
            let cts = frame_airtime(self.params.cts_octets as u64, &self.phy);
            let mut rts = frame.map_body(B::default());
            rts.kind = FrameKind::Rts;
            rts.payload_len = 0;
            rts.nav = sifs * 3 + cts + data + ack;
            self.phase = Phase::OnAir { rts: true };
            out.push(MacOutput::StartTx(rts));
        } else {
            self.phase = Phase::OnAir { rts: false };
            out.push(MacOutput::StartTx(frame));
        }
    }

    /// End of airtime of a frame this station put on the air through DCF.
    pub fn on_tx_end(&mut self, now: SimTime, rng: &mut RngStream, out: &mut Vec<MacOutput<B>>) {
        match self.phase {
            Phase::OnAir { rts: true } => {
                self.phase = Phase::AwaitCts;
                self.arm_phase(now + self.params.cts_timeout(&self.phy), out);
            }
            Phase::OnAir { rts: false } => {
                let broadcast = self.queue.front().is_some_and(|h| h.frame.is_broadcast());
                if broadcast {
                    self.complete(TxOutcome::SentNoAckExpected, now, rng, out);
                } else {
                    self.phase = Phase::AwaitAck;
                    self.arm_phase(now + self.params.ack_timeout(&self.phy), out);
                }
            }
            _ => {}
        }
    }

    pub fn on_ack(&mut self, from: MacAddr, now: SimTime, rng: &mut RngStream, out: &mut Vec<MacOutput<B>>) {
        let expected = self.queue.front().map(|h| h.frame.dst);
        if self.phase == Phase::AwaitAck && expected == Some(from) {
            self.complete(TxOutcome::Acked, now, rng, out);
        }
    }

    pub fn on_cts(&mut self, from: MacAddr, now: SimTime, out: &mut Vec<MacOutput<B>>) {
        let expected = self.queue.front().map(|h| h.frame.dst);
        if self.phase == Phase::AwaitCts && expected == Some(from) {
            self.phase = Phase::SifsBeforeData;
            self.arm_phase(now + self.phy.sifs(), out);
        }
    }

    fn failure(&mut self, now: SimTime, rng: &mut RngStream, out: &mut Vec<MacOutput<B>>) {
        self.retry_count += 1;
        if self.retry_count > self.params.retry_limit {
            let retries = self.params.retry_limit;
            self.complete(TxOutcome::GaveUp { retries }, now, rng, out);
            return;
        }
        self.cw = grow_window(self.cw, self.params.cw_max);
        self.backoff_remaining = next_backoff(self.cw, rng);
        self.contend(now, out);
    }

    fn complete(&mut self, outcome: TxOutcome, now: SimTime, rng: &mut RngStream, out: &mut Vec<MacOutput<B>>) {
        let Some(head) = self.queue.pop_front() else {
            self.phase = Phase::Idle;
            return;
        };
        match outcome {
            TxOutcome::Acked | TxOutcome::GaveUp { .. } => self.cw = self.params.cw_min,
            TxOutcome::SentNoAckExpected => {}
        }
        self.retry_count = 0;
        out.push(MacOutput::Done(Completion {
            delay: now - head.hol_since,
            attempts: head.attempts,
            frame: head.frame,
            outcome,
        }));
        self.phase = Phase::Idle;
        self.phase_timer = None;
        self.serve_head(now, rng, out);
    }

    /// Forms a WBSS: the station becomes its first member and queues exactly
    /// one wildcard-addressed beacon. Nothing repeats it.
    pub fn advertise(
        &mut self,
        ad: &WbssAdvertisement,
        body: B,
        now: SimTime,
        rng: &mut RngStream,
        out: &mut Vec<MacOutput<B>>,
    ) -> Result<(), MacError> {
        if ad.bssid.is_wildcard() {
            return Err(MacError::WildcardWbss);
        }
        self.mode = StationMode::WbssMember(ad.bssid);
        let mut beacon = Frame::data(
            self.addr,
            MacAddr::BROADCAST,
            Bssid::WILDCARD,
            ad.service.len() as u32,
            ad.channel,
            body,
        );
        beacon.kind = FrameKind::WaveBeacon;
        self.enqueue(beacon, now, rng, out);
        Ok(())
    }

    /// Applies the join policy to a received advertisement. Joining takes
    /// effect immediately and sends nothing.
    pub fn join_on_beacon(&mut self, ad: &WbssAdvertisement) -> StationMode {
        if self.mode == StationMode::WaveMode && !ad.bssid.is_wildcard() && self.policy.matches(ad) {
            self.mode = StationMode::WbssMember(ad.bssid);
        }
        self.mode
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    const B1: Bssid = Bssid([0x02, 0xb1, 0, 0, 0, 1]);
    const B2: Bssid = Bssid([0x02, 0xb2, 0, 0, 0, 2]);

    fn me() -> MacAddr {
        MacAddr::for_node(NodeId(1))
    }

    fn frame(bssid: Bssid, to_ds: bool, from_ds: bool) -> Frame<()> {
        let mut f = Frame::data(MacAddr::for_node(NodeId(2)), me(), bssid, 10, ChannelId::CCH, ());
        f.to_ds = to_ds;
        f.from_ds = from_ds;
        f
    }

    #[test]
    fn wave_mode_accepts_wildcard() {
        assert_eq!(accept_frame(StationMode::WaveMode, me(), &frame(Bssid::WILDCARD, false, false)), AcceptVerdict::Accept);
    }

    #[test]
    fn wbss_member_filters_by_bssid() {
        let m = StationMode::WbssMember(B1);
        assert_eq!(accept_frame(m, me(), &frame(B1, false, false)), AcceptVerdict::Accept);
        assert_eq!(accept_frame(m, me(), &frame(B2, false, false)), AcceptVerdict::DropFilter);
        assert_eq!(accept_frame(m, me(), &frame(Bssid::WILDCARD, false, false)), AcceptVerdict::Accept);
    }

    #[test]
    fn wildcard_with_ds_bit_is_invalid() {
        let f = frame(Bssid::WILDCARD, true, false);
        assert_eq!(accept_frame(StationMode::WaveMode, me(), &f), AcceptVerdict::DropInvalid);
        assert_eq!(f.check(), Err(MacError::WildcardWithDsBits));
    }

    #[test]
    fn foreign_unicast_is_filtered() {
        let mut f = frame(Bssid::WILDCARD, false, false);
        f.dst = MacAddr::for_node(NodeId(9));
        assert_eq!(accept_frame(StationMode::WaveMode, me(), &f), AcceptVerdict::DropFilter);
        f.dst = MacAddr::BROADCAST;
        assert_eq!(accept_frame(StationMode::WaveMode, me(), &f), AcceptVerdict::Accept);
    }

    #[test]
    fn window_growth_law() {
        let mut cw = 15;
        let mut seen = vec![cw];
        for _ in 0..7 {
            cw = grow_window(cw, 1023);
            seen.push(cw);
        }
        assert_eq!(seen, [15, 31, 63, 127, 255, 511, 1023, 1023]);
    }

    #[test]
    fn zero_window_draws_zero() {
        let mut s = RngStream::new(3, "b");
        assert!((0..100).all(|_| next_backoff(0, &mut s) == 0));
    }

    #[test]
    fn backoff_is_reproducible() {
        let draw = || {
            let mut s = RngStream::new(11, "backoff/node0");
            (0..32).map(|_| next_backoff(15, &mut s)).collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn backoff_mean_at_cw15() {
        let mut s = RngStream::new(5, "backoff/node1");
        let n = 100_000;
        let sum: u64 = (0..n).map(|_| next_backoff(15, &mut s) as u64).sum();
        let mean = sum as f64 / n as f64;
        assert!((mean - 7.5).abs() < 0.1, "mean {mean}");
    }

    #[test]
    fn mac_params_validation() {
        MacParams::default().validate().unwrap();
        let p = MacParams { cw_min: 16, ..MacParams::default() };
        assert!(matches!(p.validate(), Err(MacError::WindowNotPowerOfTwo { .. })));
        let p = MacParams { cw_min: 63, cw_max: 31, ..MacParams::default() };
        assert!(matches!(p.validate(), Err(MacError::WindowOrder { .. })));
        assert_eq!(MacParams::default().ack_timeout(&PhyParams::default()), SimTime::from_micros(112));
    }

    #[test]
    fn control_frames_carry_no_payload() {
        let st: Station<()> = Station::new(NodeId(1), MacParams::default(), PhyParams::default());
        let rx = frame(Bssid::WILDCARD, false, false);
        let ack = st.make_ack(&rx);
        assert_eq!(ack.kind, FrameKind::Ack);
        assert_eq!(ack.payload_len, 0);
        ack.check().unwrap();
        let mut bad = ack.clone();
        bad.payload_len = 3;
        assert_eq!(bad.check(), Err(MacError::ControlPayload(FrameKind::Ack)));
    }

    #[test]
    fn duplicate_detection() {
        let mut st: Station<()> = Station::new(NodeId(1), MacParams::default(), PhyParams::default());
        let mut f = frame(Bssid::WILDCARD, false, false);
        f.seq = 4;
        assert!(!st.is_duplicate(&f));
        f.retry = true;
        assert!(st.is_duplicate(&f));
        f.seq = 5;
        assert!(!st.is_duplicate(&f));
    }

    fn ad(bssid: Bssid, service: &[u8]) -> WbssAdvertisement {
        WbssAdvertisement {
            bssid,
            service: service.to_vec(),
            channel: ChannelId::CCH,
        }
    }

    #[test]
    fn advertise_queues_one_beacon() {
        let mut st: Station<()> = Station::new(NodeId(1), MacParams::default(), PhyParams::default());
        let mut rng = RngStream::new(1, "b");
        let mut out = Vec::new();
        st.advertise(&ad(B1, b"toll"), (), SimTime::ZERO, &mut rng, &mut out).unwrap();
        assert_eq!(st.queue_len(), 1);
        assert_eq!(st.mode(), StationMode::WbssMember(B1));
        let err = st.advertise(&ad(Bssid::WILDCARD, b"x"), (), SimTime::ZERO, &mut rng, &mut out);
        assert_eq!(err, Err(MacError::WildcardWbss));
        assert_eq!(st.queue_len(), 1);
    }

    #[test]
    fn join_policy_first_match_only() {
        let policy = JoinPolicy { service: Some(b"toll".to_vec()) };
        let mut st: Station<()> = Station::new(NodeId(1), MacParams::default(), PhyParams::default()).with_join_policy(policy);
        assert_eq!(st.join_on_beacon(&ad(B1, b"other")), StationMode::WaveMode);
        assert_eq!(st.join_on_beacon(&ad(B1, b"toll")), StationMode::WbssMember(B1));
        assert_eq!(st.join_on_beacon(&ad(B2, b"toll")), StationMode::WbssMember(B1));
    }

    /// Drives one station against an idle medium with no receiver.
    fn drive_failures(st: &mut Station<()>, rng: &mut RngStream) -> (Vec<u16>, Option<Completion<()>>) {
        let mut now = SimTime::ZERO;
        let mut out = Vec::new();
        let f = Frame::data(st.addr(), MacAddr::for_node(NodeId(2)), Bssid::WILDCARD, 160, ChannelId::CCH, ());
        st.enqueue(f, now, rng, &mut out);
        let mut cws = Vec::new();
        let airtime = frame_airtime(160, &PhyParams::default());
        loop {
            let pending: Vec<_> = core::mem::take(&mut out);
            let mut progressed = false;
            for o in pending {
                match o {
                    MacOutput::ArmTimer { at, timer } => {
                        now = at;
                        st.on_timer(timer, now, rng, &mut out);
                        progressed = true;
                    }
                    MacOutput::StartTx(_) => {
                        cws.push(st.cw());
                        now += airtime;
                        st.on_tx_end(now, rng, &mut out);
                        progressed = true;
                    }
                    MacOutput::Done(c) => return (cws, Some(c)),
                }
            }
            if !progressed {
                return (cws, None);
            }
        }
    }

    #[test]
    fn unanswered_unicast_gives_up_after_retry_limit() {
        let mut st: Station<()> = Station::new(NodeId(1), MacParams::default(), PhyParams::default());
        let mut rng = RngStream::new(1, "backoff/node1");
        let (cws, done) = drive_failures(&mut st, &mut rng);
        assert_eq!(cws, [15, 31, 63, 127, 255, 511, 1023, 1023]);
        let done = done.unwrap();
        assert_eq!(done.outcome, TxOutcome::GaveUp { retries: 7 });
        assert_eq!(done.attempts, 8);
        assert_eq!(st.cw(), 15);
    }
}
