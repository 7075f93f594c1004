//! 10 MHz OFDM physical layer and shared medium.
//!
//! Timing follows the half-clocked 802.11a PHY used by 802.11p: every OFDM
//! timing parameter is twice its 20 MHz value. Propagation is a deterministic
//! unit disc on the highway axis with co-channel interference only and no
//! capture: any temporal overlap of two in-range frames on the same channel
//! destroys both at that receiver.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::engine::SimTime;
use crate::node::NodeId;

/// Regulatory EIRP ceiling of the highest device class (30 W).
pub const MAX_EIRP_DBM: f64 = 44.8;
/// Power reserved for safety messages from emergency vehicles.
pub const EMERGENCY_TX_POWER_DBM: f64 = 33.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhyError {
    #[error("phy.channel: {0} is not a DSRC channel (even numbers 172-184)")]
    IllegalChannel(u16),
    #[error("phy.difs_us: difs ({difs}) must equal sifs + 2*slot_time ({expected})")]
    DifsMismatch { difs: u64, expected: u64 },
    #[error("phy.tx_power_dbm: {0} dBm exceeds the {MAX_EIRP_DBM} dBm EIRP ceiling")]
    TxPowerTooHigh(f64),
    #[error("phy.data_rate_bps: must be positive")]
    ZeroDataRate,
    #[error("phy.comm_range_m: must be positive, got {0}")]
    NonPositiveRange(f64),
}

/// DSRC channel number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "u16", into = "u16"))]
pub struct ChannelId(u16);

impl ChannelId {
    /// The control channel.
    pub const CCH: ChannelId = ChannelId(178);

    pub fn new(number: u16) -> Result<Self, PhyError> {
        if (172..=184).contains(&number) && number.is_multiple_of(2) {
            Ok(ChannelId(number))
        } else {
            Err(PhyError::IllegalChannel(number))
        }
    }

    pub fn number(self) -> u16 {
        self.0
    }
}

impl TryFrom<u16> for ChannelId {
    type Error = PhyError;
    fn try_from(n: u16) -> Result<Self, PhyError> {
        ChannelId::new(n)
    }
}

impl From<ChannelId> for u16 {
    fn from(c: ChannelId) -> u16 {
        c.0
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct PhyParams {
    pub center_frequency_ghz: f64,
    pub channel_bandwidth_mhz: f64,
    /// Authoritative for airtime. `modulation` is a label only.
    pub data_rate_bps: u64,
    pub modulation: String,
    pub slot_time_us: u64,
    pub sifs_us: u64,
    pub difs_us: u64,
    /// Preamble plus SIGNAL field.
    pub phy_overhead_us: u64,
    pub tx_power_dbm: f64,
    pub comm_range_m: f64,
    pub channel: ChannelId,
}

impl Default for PhyParams {
    fn default() -> Self {
        PhyParams {
            center_frequency_ghz: 5.9,
            channel_bandwidth_mhz: 10.0,
            data_rate_bps: 6_000_000,
            modulation: "BPSK1/2".to_string(),
            slot_time_us: 13,
            sifs_us: 32,
            difs_us: 58,
            phy_overhead_us: 40,
            tx_power_dbm: 30.0,
            comm_range_m: 1000.0,
            channel: ChannelId::CCH,
        }
    }
}

impl PhyParams {
    pub fn validate(&self) -> Result<(), PhyError> {
        let expected = self.sifs_us + 2 * self.slot_time_us;
        if self.difs_us != expected {
            return Err(PhyError::DifsMismatch {
                difs: self.difs_us,
                expected,
            });
        }
        if !(self.tx_power_dbm <= MAX_EIRP_DBM) {
            return Err(PhyError::TxPowerTooHigh(self.tx_power_dbm));
        }
        if self.data_rate_bps == 0 {
            return Err(PhyError::ZeroDataRate);
        }
        if !(self.comm_range_m > 0.0) {
            return Err(PhyError::NonPositiveRange(self.comm_range_m));
        }
        Ok(())
    }

    /// Same radio at the emergency-vehicle power class.
    pub fn emergency(mut self) -> Self {
        self.tx_power_dbm = EMERGENCY_TX_POWER_DBM;
        self
    }

    pub fn slot(&self) -> SimTime {
        SimTime::from_micros(self.slot_time_us)
    }

    pub fn sifs(&self) -> SimTime {
        SimTime::from_micros(self.sifs_us)
    }

    pub fn difs(&self) -> SimTime {
        SimTime::from_micros(self.difs_us)
    }
}

/// Time on air for a PSDU of `payload_octets`, rounded up to the microsecond.
pub fn frame_airtime(payload_octets: u64, params: &PhyParams) -> SimTime {
    let bits = payload_octets as u128 * 8 * 1_000_000;
    let rate = params.data_rate_bps as u128;
    let body = bits.div_ceil(rate) as u64;
    SimTime::from_micros(params.phy_overhead_us + body)
}

/// Unit-disc reachability, boundary inclusive.
pub fn in_range(pos_a: f64, pos_b: f64, params: &PhyParams) -> bool {
    (pos_a - pos_b).abs() <= params.comm_range_m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub u64);

/// One frame on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmissionRecord<F> {
    pub id: TxId,
    pub sender: NodeId,
    pub channel: ChannelId,
    pub start: SimTime,
    pub end: SimTime,
    pub frame: F,
}

impl<F> TransmissionRecord<F> {
    /// Half-open interval overlap on the same channel.
    pub fn interferes_with<G>(&self, other: &TransmissionRecord<G>) -> bool {
        self.channel == other.channel && self.start < other.end && other.start < self.end
    }

    pub fn spans(&self, at: SimTime) -> bool {
        self.start <= at && at < self.end
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Reception {
    Delivered,
    Collided,
    OutOfRange,
}

/// Verdict at one receiver for `target`, given the other frames on the air.
///
/// `reaches` answers whether a record's sender is within range of the receiver.
pub fn reception_outcome<'a, F: 'a>(
    target: &TransmissionRecord<F>,
    others: impl IntoIterator<Item = &'a TransmissionRecord<F>>,
    reaches: impl Fn(&TransmissionRecord<F>) -> bool,
) -> Reception {
    if !reaches(target) {
        return Reception::OutOfRange;
    }
    let clash = others
        .into_iter()
        .any(|o| o.id != target.id && o.interferes_with(target) && reaches(o));
    if clash {
        Reception::Collided
    } else {
        Reception::Delivered
    }
}

/// Verdicts for every frame in `records` at one receiver.
pub fn reception_outcomes<F>(
    records: &[TransmissionRecord<F>],
    reaches: impl Fn(&TransmissionRecord<F>) -> bool,
) -> Vec<Reception> {
    records
        .iter()
        .map(|r| reception_outcome(r, records.iter(), &reaches))
        .collect()
}

/// Frames currently or recently on the air.
#[derive(Debug, Clone)]
pub struct Medium<F> {
    records: Vec<TransmissionRecord<F>>,
    next_id: u64,
}

impl<F> Default for Medium<F> {
    fn default() -> Self {
        Medium {
            records: Vec::new(),
            next_id: 0,
        }
    }
}

impl<F> Medium<F> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn begin(
        &mut self,
        sender: NodeId,
        channel: ChannelId,
        start: SimTime,
        airtime: SimTime,
        frame: F,
    ) -> TxId {
        let id = TxId(self.next_id);
        self.next_id += 1;
        self.records.push(TransmissionRecord {
            id,
            sender,
            channel,
            start,
            end: start + airtime,
            frame,
        });
        id
    }

    pub fn get(&self, id: TxId) -> Option<&TransmissionRecord<F>> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn records(&self) -> &[TransmissionRecord<F>] {
        &self.records
    }

    /// Frames on the same channel whose airtime intersects `id`'s.
    pub fn overlapping(&self, id: TxId) -> impl Iterator<Item = &TransmissionRecord<F>> + '_ {
        let target = self.get(id);
        self.records
            .iter()
            .filter(move |r| target.is_some_and(|t| r.id != t.id && r.interferes_with(t)))
    }

    /// Carrier sense: any in-range frame on `channel` spanning `at`.
    pub fn busy(
        &self,
        channel: ChannelId,
        at: SimTime,
        reaches: impl Fn(&TransmissionRecord<F>) -> bool,
    ) -> bool {
        self.records
            .iter()
            .any(|r| r.channel == channel && r.spans(at) && reaches(r))
    }

    /// Drops records that ended before `now` and can no longer overlap a
    /// frame that is still on the air.
    pub fn prune(&mut self, now: SimTime) {
        let earliest_live = self
            .records
            .iter()
            .filter(|r| r.end >= now)
            .map(|r| r.start)
            .min()
            .unwrap_or(now);
        self.records.retain(|r| r.end >= now || r.end > earliest_live);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rec(id: u64, sender: u16, ch: u16, start: u64, end: u64) -> TransmissionRecord<()> {
        TransmissionRecord {
            id: TxId(id),
            sender: NodeId(sender),
            channel: ChannelId::new(ch).unwrap(),
            start: SimTime::from_micros(start),
            end: SimTime::from_micros(end),
            frame: (),
        }
    }

    #[test]
    fn default_timing_constants() {
        let p = PhyParams::default();
        assert_eq!((p.slot_time_us, p.sifs_us, p.difs_us, p.phy_overhead_us), (13, 32, 58, 40));
        p.validate().unwrap();
    }

    #[test]
    fn airtime_examples() {
        let p = PhyParams::default();
        assert_eq!(frame_airtime(0, &p), SimTime::from_micros(40));
        assert_eq!(frame_airtime(160, &p), SimTime::from_micros(254));
        assert_eq!(frame_airtime(1500, &p), SimTime::from_micros(2040));
        assert_eq!(frame_airtime(10, &p), SimTime::from_micros(54));
    }

    #[test]
    fn validation_rejects_bad_params() {
        let mut p = PhyParams::default();
        p.difs_us = 50;
        assert!(matches!(p.validate(), Err(PhyError::DifsMismatch { .. })));
        let mut p = PhyParams::default();
        p.tx_power_dbm = 50.0;
        assert!(matches!(p.validate(), Err(PhyError::TxPowerTooHigh(_))));
        assert!(PhyParams::default().emergency().validate().is_ok());
        let mut p = PhyParams::default();
        p.tx_power_dbm = MAX_EIRP_DBM;
        assert!(p.validate().is_ok());
        let mut p = PhyParams::default();
        p.data_rate_bps = 0;
        assert_eq!(p.validate(), Err(PhyError::ZeroDataRate));
    }

    #[test]
    fn channel_plan() {
        for n in [172, 174, 176, 178, 180, 182, 184] {
            assert!(ChannelId::new(n).is_ok());
        }
        for n in [170, 173, 186, 0] {
            assert!(ChannelId::new(n).is_err());
        }
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let p = PhyParams::default();
        assert!(in_range(5.0, 5.0, &p));
        assert!(in_range(0.0, 1000.0, &p));
        assert!(!in_range(0.0, 1000.5, &p));
    }

    #[test]
    fn single_frame_is_delivered() {
        let r = vec![rec(0, 1, 178, 0, 100)];
        assert_eq!(reception_outcomes(&r, |_| true), [Reception::Delivered]);
    }

    #[test]
    fn one_microsecond_overlap_destroys_both() {
        let r = vec![rec(0, 1, 178, 0, 100), rec(1, 2, 178, 99, 200)];
        assert_eq!(reception_outcomes(&r, |_| true), [Reception::Collided, Reception::Collided]);
        // Back to back is not an overlap.
        let r = vec![rec(0, 1, 178, 0, 100), rec(1, 2, 178, 100, 200)];
        assert_eq!(reception_outcomes(&r, |_| true), [Reception::Delivered, Reception::Delivered]);
    }

    #[test]
    fn out_of_range_sender_does_not_interfere() {
        let r = vec![rec(0, 1, 178, 0, 100), rec(1, 2, 178, 50, 150)];
        let v = reception_outcomes(&r, |t| t.sender == NodeId(1));
        assert_eq!(v, [Reception::Delivered, Reception::OutOfRange]);
    }

    #[test]
    fn other_channel_does_not_interfere() {
        let r = vec![rec(0, 1, 178, 0, 100), rec(1, 2, 176, 50, 150)];
        assert_eq!(reception_outcomes(&r, |_| true), [Reception::Delivered, Reception::Delivered]);
    }

    #[test]
    fn carrier_sense() {
        let mut m: Medium<()> = Medium::new();
        let cch = ChannelId::CCH;
        assert!(!m.busy(cch, SimTime::ZERO, |_| true));
        m.begin(NodeId(1), cch, SimTime::from_micros(10), SimTime::from_micros(50), ());
        assert!(m.busy(cch, SimTime::from_micros(10), |_| true));
        assert!(!m.busy(cch, SimTime::from_micros(60), |_| true));
        assert!(!m.busy(cch, SimTime::from_micros(20), |_| false));
        assert!(!m.busy(ChannelId::new(176).unwrap(), SimTime::from_micros(20), |_| true));
    }

    #[test]
    fn prune_keeps_frames_that_can_still_collide() {
        let mut m: Medium<()> = Medium::new();
        let cch = ChannelId::CCH;
        let a = m.begin(NodeId(1), cch, SimTime::from_micros(0), SimTime::from_micros(100), ());
        let b = m.begin(NodeId(2), cch, SimTime::from_micros(50), SimTime::from_micros(100), ());
        m.prune(SimTime::from_micros(100));
        assert!(m.get(a).is_some(), "a overlaps live b");
        m.prune(SimTime::from_micros(151));
        assert!(m.get(a).is_none());
        assert!(m.get(b).is_none());
    }
}
