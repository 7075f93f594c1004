//! Metric series, windowed rates and the per-run packet ledger.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::engine::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("metrics: unknown series `{0}`")]
    UnknownSeries(String),
    #[error("metrics: series {series} is in {expected}, got a value in {got}")]
    UnitMismatch { series: Series, expected: Unit, got: Unit },
    #[error("metrics: sample for {series} at {at} precedes the last one at {last}")]
    OutOfOrder { series: Series, at: SimTime, last: SimTime },
    #[error("metrics: value for {series} at {at} is not finite")]
    NotFinite { series: Series, at: SimTime },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    Bps,
    Seconds,
    Pps,
}

impl Unit {
    pub fn as_str(self) -> &'static str {
        match self {
            Unit::Bps => "bps",
            Unit::Seconds => "s",
            Unit::Pps => "pps",
        }
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Series {
    WlanThroughputBps,
    WlanDelayS,
    AodvDiscoveryTimeS,
    H323SetupTimeS,
    AodvSentPps,
    AodvReceivedPps,
    VoiceE2eDelayS,
    PktsTxPps,
    PktsRxPps,
    FtpResponseS,
}

impl Series {
    pub const ALL: [Series; 10] = [
        Series::WlanThroughputBps,
        Series::WlanDelayS,
        Series::AodvDiscoveryTimeS,
        Series::H323SetupTimeS,
        Series::AodvSentPps,
        Series::AodvReceivedPps,
        Series::VoiceE2eDelayS,
        Series::PktsTxPps,
        Series::PktsRxPps,
        Series::FtpResponseS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Series::WlanThroughputBps => "wlan_throughput_bps",
            Series::WlanDelayS => "wlan_delay_s",
            Series::AodvDiscoveryTimeS => "aodv_discovery_time_s",
            Series::H323SetupTimeS => "h323_setup_time_s",
            Series::AodvSentPps => "aodv_sent_pps",
            Series::AodvReceivedPps => "aodv_received_pps",
            Series::VoiceE2eDelayS => "voice_e2e_delay_s",
            Series::PktsTxPps => "pkts_tx_pps",
            Series::PktsRxPps => "pkts_rx_pps",
            Series::FtpResponseS => "ftp_response_s",
        }
    }

    pub fn unit(self) -> Unit {
        match self {
            Series::WlanThroughputBps => Unit::Bps,
            Series::AodvSentPps | Series::AodvReceivedPps | Series::PktsTxPps | Series::PktsRxPps => Unit::Pps,
            _ => Unit::Seconds,
        }
    }

    pub fn from_name(name: &str) -> Option<Series> {
        Series::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSample {
    pub t: SimTime,
    pub value: f64,
}

/// Running count/sum/min/max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub count: u64,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
}

impl Default for Aggregate {
    fn default() -> Self {
        Aggregate {
            count: 0,
            sum: 0.0,
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl Aggregate {
    pub fn push(&mut self, v: f64) {
        self.count += 1;
        self.sum += v;
        self.min = self.min.min(v);
        self.max = self.max.max(v);
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.sum / self.count as f64)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Track {
    samples: Vec<MetricSample>,
    agg: Aggregate,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetricsRecorder {
    tracks: BTreeMap<Series, Track>,
}

impl MetricsRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, series: Series, t: SimTime, value: f64) -> Result<(), MetricsError> {
        if !value.is_finite() {
            return Err(MetricsError::NotFinite { series, at: t });
        }
        let track = self.tracks.entry(series).or_default();
        if let Some(last) = track.samples.last() {
            if t < last.t {
                return Err(MetricsError::OutOfOrder { series, at: t, last: last.t });
            }
        }
        track.samples.push(MetricSample { t, value });
        track.agg.push(value);
        Ok(())
    }

    /// Record by name, checking the declared unit.
    pub fn record_named(&mut self, name: &str, t: SimTime, value: f64, unit: Unit) -> Result<(), MetricsError> {
        let series = Series::from_name(name).ok_or_else(|| MetricsError::UnknownSeries(name.into()))?;
        if series.unit() != unit {
            return Err(MetricsError::UnitMismatch {
                series,
                expected: series.unit(),
                got: unit,
            });
        }
        self.record(series, t, value)
    }

    pub fn samples(&self, series: Series) -> &[MetricSample] {
        self.tracks.get(&series).map_or(&[], |t| &t.samples)
    }

    pub fn aggregate(&self, series: Series) -> Aggregate {
        self.tracks.get(&series).map_or_else(Aggregate::default, |t| t.agg)
    }

    pub fn mean(&self, series: Series) -> Option<f64> {
        self.aggregate(series).mean()
    }

    /// Mean over samples taken at or after `from`.
    pub fn mean_since(&self, series: Series, from: SimTime) -> Option<f64> {
        let mut agg = Aggregate::default();
        for s in self.samples(series).iter().filter(|s| s.t >= from) {
            agg.push(s.value);
        }
        agg.mean()
    }

    /// Series that received at least one sample.
    pub fn populated(&self) -> impl Iterator<Item = Series> + '_ {
        self.tracks.keys().copied()
    }
}

fn window_count(duration: SimTime, window: SimTime) -> usize {
    duration.as_micros().div_ceil(window.as_micros()) as usize
}

/// Weighted events per window divided by the window length in seconds. One
/// sample per window, stamped at the window start; events at or past
/// `duration` are ignored.
pub fn windowed_sum(events: &[(SimTime, f64)], window: SimTime, duration: SimTime) -> Vec<MetricSample> {
    assert!(window > SimTime::ZERO, "window must be positive");
    let n = window_count(duration, window);
    let mut sums = alloc::vec![0.0; n];
    for &(t, w) in events {
        if t < duration {
            sums[(t.as_micros() / window.as_micros()) as usize] += w;
        }
    }
    let secs = window.as_secs_f64();
    sums.into_iter()
        .enumerate()
        .map(|(i, s)| MetricSample {
            t: window * i as u64,
            value: s / secs,
        })
        .collect()
}

/// Events per second in consecutive windows.
pub fn windowed_rate(events: &[SimTime], window: SimTime, duration: SimTime) -> Vec<MetricSample> {
    let weighted: Vec<(SimTime, f64)> = events.iter().map(|&t| (t, 1.0)).collect();
    windowed_sum(&weighted, window, duration)
}

/// Fate of every MAC service data unit handed to a station in one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PacketLedger {
    pub generated: u64,
    pub delivered: u64,
    pub collided: u64,
    pub filtered: u64,
    pub retry_exhausted: u64,
    pub in_flight: u64,
}

impl PacketLedger {
    pub fn accounted(&self) -> u64 {
        self.delivered + self.collided + self.filtered + self.retry_exhausted + self.in_flight
    }

    pub fn balanced(&self) -> bool {
        self.generated == self.accounted()
    }
}
