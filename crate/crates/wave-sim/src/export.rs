//! CSV and JSON result files.
//!
//! Every file is a pure function of the run output, so two runs with the same
//! config and seed produce byte-identical directories.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use wave_sim_core::metrics::Series;
use wave_sim_core::RunOutput;

use crate::CliError;

pub const SERIES_HEADER: [&str; 3] = ["t_us", "value", "unit"];

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CliError + '_ {
    move |e| {
        let message = e.to_string();
        match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            _ => CliError::Encode {
                path: path.to_path_buf(),
                message,
            },
        }
    }
}

fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(row.into_iter().collect::<Vec<_>>()).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// What each series measures, as written to `metadata.json`.
pub fn series_definition(s: Series) -> &'static str {
    match s {
        Series::WlanThroughputBps => "payload bits of data frames received, per 1 s window",
        Series::WlanDelayS => "MAC head-of-queue until ACK received, or until airtime end for broadcast",
        Series::AodvDiscoveryTimeS => "first RREQ until a usable route, per discovery",
        Series::H323SetupTimeS => "first setup message sent until the last one received, per call",
        Series::AodvSentPps => "routing control frames put on the air, network-wide, per 1 s window",
        Series::AodvReceivedPps => "routing control frames accepted, network-wide, per 1 s window",
        Series::VoiceE2eDelayS => "voice frame capture until delivery to the peer application",
        Series::PktsTxPps => "data frames put on the air, per 1 s window",
        Series::PktsRxPps => "data frames accepted by a MAC, per 1 s window",
        Series::FtpResponseS => "file request until the last segment arrives, per session",
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[derive(Serialize)]
struct SeriesMeta<'a> {
    name: &'a str,
    unit: &'a str,
    samples: usize,
    definition: &'a str,
}

#[derive(Serialize)]
struct Metadata<'a> {
    generator: &'a str,
    version: &'a str,
    scenario: &'a str,
    seed: u64,
    duration_s: f64,
    events_processed: u64,
    final_clock_us: u64,
    ledger_balanced: bool,
    series: Vec<SeriesMeta<'a>>,
    config: &'a wave_sim_core::ScenarioConfig,
}

/// Writes the run into `dir`, creating it if needed. Returns the files written.
pub fn export_csv(run: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut written = Vec::new();

    for &s in &run.series {
        let path = dir.join(format!("{}.csv", s.name()));
        let unit = s.unit().as_str();
        let rows = run
            .metrics
            .samples(s)
            .iter()
            .map(|x| [x.t.as_micros().to_string(), x.value.to_string(), unit.to_string()]);
        write_csv(&path, &SERIES_HEADER, rows)?;
        written.push(path);
    }

    let path = dir.join("summary.csv");
    let rows = run.series.iter().map(|&s| {
        let agg = run.metrics.aggregate(s);
        let populated = agg.count > 0;
        [
            s.name().to_string(),
            s.unit().as_str().to_string(),
            agg.count.to_string(),
            fmt_opt(agg.mean()),
            fmt_opt(populated.then_some(agg.min)),
            fmt_opt(populated.then_some(agg.max)),
        ]
    });
    write_csv(&path, &["series", "unit", "count", "mean", "min", "max"], rows)?;
    written.push(path);

    let path = dir.join("counters.csv");
    let rows = run.counters.iter().map(|(k, v)| [k.clone(), v.to_string()]);
    write_csv(&path, &["name", "value"], rows)?;
    written.push(path);

    let path = dir.join("metadata.json");
    let meta = Metadata {
        generator: "wave-sim",
        version: env!("CARGO_PKG_VERSION"),
        scenario: run.config.scenario.as_str(),
        seed: run.config.seed,
        duration_s: run.config.duration_s,
        events_processed: run.summary.events_processed,
        final_clock_us: run.summary.final_clock.as_micros(),
        ledger_balanced: run.ledger.balanced(),
        series: run
            .series
            .iter()
            .map(|&s| SeriesMeta {
                name: s.name(),
                unit: s.unit().as_str(),
                samples: run.metrics.samples(s).len(),
                definition: series_definition(s),
            })
            .collect(),
        config: &run.config,
    };
    let mut text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::Encode {
        path: path.clone(),
        message: e.to_string(),
    })?;
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;
    written.push(path);

    Ok(written)
}
