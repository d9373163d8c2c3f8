use std::io::Write;

use crate::sim::MetricsRecord;

use super::CliError;

pub const RUN_COLUMNS: [&str; 12] = [
    "seed",
    "protocol",
    "num_uavs",
    "v_max",
    "latency_mean_ms",
    "latency_p90_ms",
    "hit_rate",
    "disturbance_rate",
    "mapping_accuracy",
    "ad_range_p90_m",
    "vd_range_p90_m",
    "fused_range_p90_m",
];

/// Columns of [`RUN_COLUMNS`] that carry per-run metrics.
pub const METRIC_COLUMNS: [&str; 8] = [
    "latency_mean_ms",
    "latency_p90_ms",
    "hit_rate",
    "disturbance_rate",
    "mapping_accuracy",
    "ad_range_p90_m",
    "vd_range_p90_m",
    "fused_range_p90_m",
];

/// Normal-approximation quantile for a two-sided 90% interval.
const Z90: f64 = 1.6448536269514722;

pub fn metric_values(m: &MetricsRecord) -> [Option<f64>; 8] {
    [
        m.latency_mean_ms,
        m.latency_p90_ms,
        m.hit_rate,
        m.disturbance_rate,
        m.mapping_accuracy,
        m.ad_range_p90_m,
        m.vd_range_p90_m,
        m.fused_range_p90_m,
    ]
}

/// `%.6g`-style formatting: six significant digits, trailing zeros dropped.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(sig6).unwrap_or_default()
}

fn run_fields(m: &MetricsRecord) -> Vec<String> {
    let mut row = vec![
        m.seed.to_string(),
        m.protocol.to_string(),
        m.num_uavs.to_string(),
        sig6(m.v_max),
    ];
    row.extend(metric_values(m).into_iter().map(opt));
    row
}

/// Mean and 90% confidence half-width over the present values.
pub fn summarize(values: &[f64]) -> (Option<f64>, Option<f64>) {
    let n = values.len();
    if n == 0 {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (Some(mean), None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (Some(mean), Some(Z90 * (var / n as f64).sqrt()))
}

fn writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(out)
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("writing csv: {e}"))
}

/// Header plus one row per run.
pub fn write_runs<W: Write>(out: W, rows: &[MetricsRecord]) -> Result<(), CliError> {
    let mut w = writer(out);
    w.write_record(RUN_COLUMNS).map_err(csv_err)?;
    for m in rows {
        w.write_record(run_fields(m)).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

pub fn sweep_header() -> Vec<String> {
    let mut h = vec!["kind".to_string(), "cell".to_string()];
    h.extend(RUN_COLUMNS.iter().map(|c| c.to_string()));
    h.extend(METRIC_COLUMNS.iter().map(|c| format!("{c}_ci90")));
    h
}

/// Run rows grouped by cell, each group followed by its aggregate row.
/// `cells[i]` holds the runs of cell `i` in repetition order.
pub fn write_sweep<W: Write>(out: W, cells: &[Vec<MetricsRecord>]) -> Result<(), CliError> {
    let mut w = writer(out);
    w.write_record(sweep_header()).map_err(csv_err)?;
    let blanks = vec![String::new(); METRIC_COLUMNS.len()];
    for (index, runs) in cells.iter().enumerate() {
        for m in runs {
            let mut row = vec!["run".to_string(), index.to_string()];
            row.extend(run_fields(m));
            row.extend(blanks.iter().cloned());
            w.write_record(&row).map_err(csv_err)?;
        }
        let Some(first) = runs.first() else { continue };
        let mut row = vec![
            "aggregate".to_string(),
            index.to_string(),
            String::new(),
            first.protocol.to_string(),
            first.num_uavs.to_string(),
            sig6(first.v_max),
        ];
        let mut halves = Vec::with_capacity(METRIC_COLUMNS.len());
        for k in 0..METRIC_COLUMNS.len() {
            let present: Vec<f64> = runs.iter().filter_map(|m| metric_values(m)[k]).collect();
            let (mean, half) = summarize(&present);
            row.push(opt(mean));
            halves.push(opt(half));
        }
        row.extend(halves);
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(csv_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(20.0), "20");
        assert_eq!(sig6(1.23456789), "1.23457");
        assert_eq!(sig6(-0.000123456789), "-0.000123457");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(1234567.0), "1.23457e+06");
        assert_eq!(sig6(0.00000123), "1.23e-06");
        assert_eq!(sig6(0.999_999_9), "1");
        assert_eq!(sig6(99999.97), "100000");
    }

    #[test]
    fn summary_of_constant_values() {
        assert_eq!(summarize(&[]), (None, None));
        assert_eq!(summarize(&[2.0]), (Some(2.0), None));
        assert_eq!(summarize(&[2.0, 2.0, 2.0]), (Some(2.0), Some(0.0)));
        let (m, h) = summarize(&[1.0, 3.0]);
        assert_eq!(m, Some(2.0));
        assert!((h.unwrap() - Z90 * 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_metrics_print_empty() {
        let m = MetricsRecord {
            seed: 3,
            protocol: crate::sim::Protocol::Dpi,
            num_uavs: 0,
            v_max: 20.0,
            events: 0,
            counters: Default::default(),
            hit_rate: Some(0.5),
            disturbance_rate: None,
            latency_samples: 0,
            latency_mean_ms: None,
            latency_p50_ms: None,
            latency_p90_ms: None,
            mapping_checks: 0,
            mapping_correct: 0,
            mapping_accuracy: None,
            ad_range_p90_m: None,
            vd_range_p90_m: None,
            fused_range_p90_m: None,
        };
        let mut buf = Vec::new();
        write_runs(&mut buf, &[m]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.split("\r\n").collect();
        assert_eq!(lines[0], RUN_COLUMNS.join(","));
        assert_eq!(lines[1], "3,dpi,0,20,,,0.5,,,,,");
    }
}
