use std::fmt::Write;

use wave_sim_core::RunOutput;

/// Per-series mean table printed after a run.
pub fn summary_table(run: &RunOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} speed={} km/h seed={} duration={} s events={}",
        run.config.scenario.as_str(),
        run.config.speed_kmh,
        run.config.seed,
        run.config.duration_s,
        run.summary.events_processed
    );
    let _ = writeln!(s, "{:<24} {:>8} {:>14} {:>5}", "series", "count", "mean", "unit");
    for &series in &run.series {
        let agg = run.metrics.aggregate(series);
        let mean = agg.mean().map_or_else(|| "-".to_string(), |m| format!("{m:.6}"));
        let _ = writeln!(s, "{:<24} {:>8} {:>14} {:>5}", series.name(), agg.count, mean, series.unit());
    }
    let l = run.ledger;
    let _ = writeln!(
        s,
        "frames: generated={} delivered={} collided={} filtered={} retry_exhausted={} in_flight={}",
        l.generated, l.delivered, l.collided, l.filtered, l.retry_exhausted, l.in_flight
    );
    s
}
