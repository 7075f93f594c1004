//! Application traffic: H.323-style call signalling followed by a constant
//! bit-rate voice stream, and stop-and-wait FTP downloads.
//!
//! Application messages map one to one onto MAC data frames. The state
//! machines here only decide what to send next; delivery is the caller's job.

use crate::engine::SimTime;
use crate::node::NodeId;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AppError {
    #[error("apps.voice: {rate} b/s over {interval_ms} ms is not a whole number of octets")]
    FractionalPayload { rate: u64, interval_ms: u64 },
    #[error("apps.voice: codec rate and frame interval must be positive")]
    ZeroVoice,
    #[error("apps.ftp: segment size must be positive")]
    ZeroSegment,
    #[error("apps.h323: message size must be positive")]
    ZeroMessage,
    #[error("apps: call {0:?} cannot start from state {1:?}")]
    BadCallState(NodeId, CallState),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct VoiceParams {
    pub codec_rate_bps: u64,
    pub frame_interval_ms: u64,
    /// Both parties talk; otherwise only the caller streams.
    pub bidirectional: bool,
    pub h323_message_octets: u32,
    pub setup_timeout_ms: u64,
    /// Delay after the run starts before the caller registers.
    pub start_ms: u64,
}

impl Default for VoiceParams {
    fn default() -> Self {
        VoiceParams {
            codec_rate_bps: 64_000,
            frame_interval_ms: 20,
            bidirectional: true,
            h323_message_octets: 64,
            setup_timeout_ms: 5_000,
            start_ms: 0,
        }
    }
}

impl VoiceParams {
    pub fn validate(&self) -> Result<(), AppError> {
        if self.codec_rate_bps == 0 || self.frame_interval_ms == 0 {
            return Err(AppError::ZeroVoice);
        }
        if self.h323_message_octets == 0 {
            return Err(AppError::ZeroMessage);
        }
        if !(self.codec_rate_bps * self.frame_interval_ms).is_multiple_of(8_000) {
            return Err(AppError::FractionalPayload {
                rate: self.codec_rate_bps,
                interval_ms: self.frame_interval_ms,
            });
        }
        Ok(())
    }

    /// `codec_rate * frame_interval / 8`.
    pub fn payload_octets(&self) -> u32 {
        (self.codec_rate_bps * self.frame_interval_ms / 8_000) as u32
    }

    pub fn frame_interval(&self) -> SimTime {
        SimTime::from_millis(self.frame_interval_ms)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct FtpParams {
    pub file_size_octets: u64,
    pub segment_octets: u32,
    pub request_octets: u32,
    /// Pause between the end of one session and the next request.
    pub inter_request_ms: u64,
    pub session_timeout_ms: u64,
    pub start_ms: u64,
}

impl Default for FtpParams {
    fn default() -> Self {
        FtpParams {
            file_size_octets: 50_000,
            segment_octets: 1460,
            request_octets: 64,
            inter_request_ms: 5_000,
            session_timeout_ms: 30_000,
            start_ms: 0,
        }
    }
}

impl FtpParams {
    pub fn validate(&self) -> Result<(), AppError> {
        if self.segment_octets == 0 {
            return Err(AppError::ZeroSegment);
        }
        if self.request_octets == 0 {
            return Err(AppError::ZeroMessage);
        }
        Ok(())
    }

    /// At least one segment, so an empty file still costs one response.
    pub fn segment_count(&self) -> u32 {
        let n = self.file_size_octets.div_ceil(self.segment_octets as u64);
        n.max(1) as u32
    }

    pub fn segment_len(&self, index: u32) -> u32 {
        let seg = self.segment_octets as u64;
        let before = index as u64 * seg;
        self.file_size_octets.saturating_sub(before).min(seg) as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum H323Msg {
    Rrq,
    Rcf,
    Arq,
    Acf,
    Setup,
    Connect,
}

impl H323Msg {
    /// Response the callee sends to a request.
    pub fn reply(self) -> Option<H323Msg> {
        match self {
            H323Msg::Rrq => Some(H323Msg::Rcf),
            H323Msg::Arq => Some(H323Msg::Acf),
            H323Msg::Setup => Some(H323Msg::Connect),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AppMsg {
    H323 { call: u32, msg: H323Msg },
    Voice { call: u32, seq: u64, captured: SimTime },
    FtpRequest { session: u32 },
    FtpSegment { session: u32, index: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallState {
    Idle,
    Registering,
    Admitting,
    SettingUp,
    Streaming,
    Ended,
    Aborted,
}

/// Message to put on the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub from: NodeId,
    pub to: NodeId,
    pub msg: AppMsg,
    pub octets: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CallStep {
    Send(Outgoing),
    /// Caller received Connect. The reply has already been sent.
    Established { setup_time: SimTime },
    Ignore,
}

/// One voice call. Holds both ends: the caller drives the handshake, the
/// callee (acting as its own gatekeeper) answers it.
#[derive(Debug, Clone)]
pub struct VoiceCall {
    pub id: u32,
    pub caller: NodeId,
    pub callee: NodeId,
    params: VoiceParams,
    state: CallState,
    setup_started: Option<SimTime>,
    setup_time: Option<SimTime>,
    caller_since: Option<SimTime>,
    callee_since: Option<SimTime>,
    next_seq: u64,
}

impl VoiceCall {
    pub fn new(id: u32, caller: NodeId, callee: NodeId, params: VoiceParams) -> Result<Self, AppError> {
        params.validate()?;
        Ok(VoiceCall {
            id,
            caller,
            callee,
            params,
            state: CallState::Idle,
            setup_started: None,
            setup_time: None,
            caller_since: None,
            callee_since: None,
            next_seq: 0,
        })
    }

    pub fn state(&self) -> CallState {
        self.state
    }

    pub fn params(&self) -> &VoiceParams {
        &self.params
    }

    pub fn setup_time(&self) -> Option<SimTime> {
        self.setup_time
    }

    fn h323(&self, from: NodeId, msg: H323Msg) -> Outgoing {
        Outgoing {
            from,
            to: if from == self.caller { self.callee } else { self.caller },
            msg: AppMsg::H323 { call: self.id, msg },
            octets: self.params.h323_message_octets,
        }
    }

    /// Caller sends RRQ; the setup clock starts here.
    pub fn start(&mut self, now: SimTime) -> Result<Outgoing, AppError> {
        if !matches!(self.state, CallState::Idle | CallState::Ended | CallState::Aborted) {
            return Err(AppError::BadCallState(self.caller, self.state));
        }
        self.state = CallState::Registering;
        self.setup_started = Some(now);
        self.setup_time = None;
        self.caller_since = None;
        self.callee_since = None;
        Ok(self.h323(self.caller, H323Msg::Rrq))
    }

    /// Handles a signalling message that arrived at `at`.
    pub fn on_h323(&mut self, at: NodeId, msg: H323Msg, now: SimTime) -> CallStep {
        if matches!(self.state, CallState::Ended | CallState::Aborted | CallState::Idle) {
            return CallStep::Ignore;
        }
        if at == self.callee {
            let Some(reply) = msg.reply() else { return CallStep::Ignore };
            if reply == H323Msg::Connect && self.params.bidirectional && self.callee_since.is_none() {
                self.callee_since = Some(now);
            }
            return CallStep::Send(self.h323(self.callee, reply));
        }
        if at != self.caller {
            return CallStep::Ignore;
        }
        match (self.state, msg) {
            (CallState::Registering, H323Msg::Rcf) => {
                self.state = CallState::Admitting;
                CallStep::Send(self.h323(self.caller, H323Msg::Arq))
            }
            (CallState::Admitting, H323Msg::Acf) => {
                self.state = CallState::SettingUp;
                CallStep::Send(self.h323(self.caller, H323Msg::Setup))
            }
            (CallState::SettingUp, H323Msg::Connect) => {
                self.state = CallState::Streaming;
                self.caller_since = Some(now);
                let setup_time = now - self.setup_started.unwrap_or(now);
                self.setup_time = Some(setup_time);
                CallStep::Established { setup_time }
            }
            _ => CallStep::Ignore,
        }
    }

    /// Gives up on a call that has not reached streaming.
    pub fn abort(&mut self) -> bool {
        if matches!(self.state, CallState::Registering | CallState::Admitting | CallState::SettingUp) {
            self.state = CallState::Aborted;
            true
        } else {
            false
        }
    }

    pub fn end(&mut self) {
        if self.state != CallState::Aborted {
            self.state = CallState::Ended;
        }
    }

    /// When `from` started streaming, if it has.
    pub fn streaming_since(&self, from: NodeId) -> Option<SimTime> {
        if self.state != CallState::Streaming {
            return None;
        }
        if from == self.caller {
            self.caller_since
        } else if from == self.callee {
            self.callee_since
        } else {
            None
        }
    }

    /// One voice frame from `from` at `now`. The payload was captured over
    /// the preceding frame interval.
    pub fn voice_next_frame(&mut self, from: NodeId, now: SimTime) -> Option<Outgoing> {
        self.streaming_since(from)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        Some(Outgoing {
            from,
            to: if from == self.caller { self.callee } else { self.caller },
            msg: AppMsg::Voice {
                call: self.id,
                seq,
                captured: now.saturating_sub(self.params.frame_interval()),
            },
            octets: self.params.payload_octets(),
        })
    }
}

/// Number of frames a stream emits over `duration` of streaming: the first
/// goes out one interval after streaming starts.
pub fn voice_frame_count(duration: SimTime, interval: SimTime) -> u64 {
    duration.as_micros() / interval.as_micros()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtpState {
    Requested,
    Transferring,
    Completed,
    Failed,
}

/// One FTP download: the client asks, the server streams segments back, one
/// at a time, each released by the MAC acknowledgement of the previous one.
#[derive(Debug, Clone)]
pub struct FtpSession {
    pub id: u32,
    pub client: NodeId,
    pub server: NodeId,
    params: FtpParams,
    state: FtpState,
    requested_at: SimTime,
    completed_at: Option<SimTime>,
    next_segment: u32,
    received: u32,
    delivered_octets: u64,
}

impl FtpSession {
    pub fn new(id: u32, client: NodeId, server: NodeId, params: FtpParams) -> Result<Self, AppError> {
        params.validate()?;
        Ok(FtpSession {
            id,
            client,
            server,
            params,
            state: FtpState::Requested,
            requested_at: SimTime::ZERO,
            completed_at: None,
            next_segment: 0,
            received: 0,
            delivered_octets: 0,
        })
    }

    pub fn state(&self) -> FtpState {
        self.state
    }

    pub fn params(&self) -> &FtpParams {
        &self.params
    }

    pub fn delivered_octets(&self) -> u64 {
        self.delivered_octets
    }

    pub fn requested_octets(&self) -> u64 {
        self.params.file_size_octets
    }

    pub fn lost_octets(&self) -> u64 {
        match self.state {
            FtpState::Failed => self.params.file_size_octets - self.delivered_octets,
            _ => 0,
        }
    }

    pub fn requested_at(&self) -> SimTime {
        self.requested_at
    }

    pub fn response_time(&self) -> Option<SimTime> {
        self.completed_at.map(|t| t - self.requested_at)
    }

    pub fn is_open(&self) -> bool {
        matches!(self.state, FtpState::Requested | FtpState::Transferring)
    }

    pub fn request(&mut self, now: SimTime) -> Outgoing {
        self.requested_at = now;
        Outgoing {
            from: self.client,
            to: self.server,
            msg: AppMsg::FtpRequest { session: self.id },
            octets: self.params.request_octets,
        }
    }

    fn segment(&mut self) -> Option<Outgoing> {
        if self.next_segment >= self.params.segment_count() {
            return None;
        }
        let index = self.next_segment;
        self.next_segment += 1;
        Some(Outgoing {
            from: self.server,
            to: self.client,
            msg: AppMsg::FtpSegment { session: self.id, index },
            octets: self.params.segment_len(index),
        })
    }

    /// Server side: the request arrived.
    pub fn on_request(&mut self) -> Option<Outgoing> {
        if self.state != FtpState::Requested {
            return None;
        }
        self.state = FtpState::Transferring;
        self.segment()
    }

    /// Server side: the MAC acknowledged the last segment sent.
    pub fn on_segment_acked(&mut self) -> Option<Outgoing> {
        if self.state != FtpState::Transferring {
            return None;
        }
        self.segment()
    }

    /// Client side: a segment arrived. Returns the response time when it
    /// was the last one.
    pub fn on_segment(&mut self, index: u32, now: SimTime) -> Option<SimTime> {
        if self.state != FtpState::Transferring || index != self.received {
            return None;
        }
        self.received += 1;
        self.delivered_octets += self.params.segment_len(index) as u64;
        if self.received == self.params.segment_count() {
            self.state = FtpState::Completed;
            self.completed_at = Some(now);
            return self.response_time();
        }
        None
    }

    pub fn fail(&mut self) -> bool {
        if self.is_open() {
            self.state = FtpState::Failed;
            true
        } else {
            false
        }
    }
}
