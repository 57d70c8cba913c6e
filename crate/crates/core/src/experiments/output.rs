use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

use super::ResultRow;

pub const CSV_HEADER: &str = "scenario,kind,method,seed,sweep_name,sweep_value,snr_db,lambda0,N,K,b,delta,avg_user_rate_bps,goodput_bps,ber_ub,ber_mc,ber_mc_stderr,objective,iterations,wall_time_s";

pub const SUMMARY_HEADER: &str = "scenario,kind,method,sweep_name,sweep_value,snr_db,lambda0,N,K,b,delta,iterations,n_seeds,avg_user_rate_bps_mean,avg_user_rate_bps_se,goodput_bps_mean,goodput_bps_se,ber_ub_mean,ber_ub_se,ber_mc_mean,ber_mc_se,objective_mean,objective_se";

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record(r: &ResultRow) -> Vec<String> {
    vec![
        r.scenario.clone(),
        r.kind.clone(),
        r.method.clone(),
        r.seed.to_string(),
        r.sweep_name.clone(),
        r.sweep_value.to_string(),
        r.snr_db.to_string(),
        r.lambda0.to_string(),
        r.n_elements.to_string(),
        r.n_patterns.to_string(),
        opt(r.bits),
        r.delta.to_string(),
        r.avg_user_rate_bps.to_string(),
        r.goodput_bps.to_string(),
        r.ber_ub.to_string(),
        opt(r.ber_mc),
        opt(r.ber_mc_stderr),
        r.objective.to_string(),
        opt(r.iterations),
        r.wall_time_s.to_string(),
    ]
}

fn write_table(path: &Path, header: &str, records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut file = File::create(path)?;
    writeln!(file, "{header}")?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    for rec in records {
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `rows` under [`CSV_HEADER`]. Floats use the shortest representation
/// that parses back to the same value.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    write_table(path, CSV_HEADER, rows.iter().map(record))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    let raw = rec.get(i).unwrap_or("");
    raw.parse()
        .map_err(|_| Error::InvalidScenario(format!("row {line}: bad value `{raw}` in column {}", i + 1)))
}

fn opt_field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<Option<T>> {
    if rec.get(i).unwrap_or("").is_empty() {
        Ok(None)
    } else {
        field(rec, i, line).map(Some)
    }
}

/// Reads a file written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = reader.headers()?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::InvalidScenario(format!("unexpected header `{header}`")));
    }
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        if rec.len() != 20 {
            return Err(Error::InvalidScenario(format!("row {line}: expected 20 fields, got {}", rec.len())));
        }
        rows.push(ResultRow {
            scenario: rec[0].to_string(),
            kind: rec[1].to_string(),
            method: rec[2].to_string(),
            seed: field(&rec, 3, line)?,
            sweep_name: rec[4].to_string(),
            sweep_value: field(&rec, 5, line)?,
            snr_db: field(&rec, 6, line)?,
            lambda0: field(&rec, 7, line)?,
            n_elements: field(&rec, 8, line)?,
            n_patterns: field(&rec, 9, line)?,
            bits: opt_field(&rec, 10, line)?,
            delta: field(&rec, 11, line)?,
            avg_user_rate_bps: field(&rec, 12, line)?,
            goodput_bps: field(&rec, 13, line)?,
            ber_ub: field(&rec, 14, line)?,
            ber_mc: opt_field(&rec, 15, line)?,
            ber_mc_stderr: opt_field(&rec, 16, line)?,
            objective: field(&rec, 17, line)?,
            iterations: opt_field(&rec, 18, line)?,
            wall_time_s: field(&rec, 19, line)?,
        });
    }
    Ok(rows)
}

/// Mean and standard error over seeds of one group of rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    /// A representative row of the group; seed-specific fields are meaningless.
    pub key: ResultRow,
    /// Trace position for convergence tables.
    pub iterations: Option<usize>,
    pub n_seeds: usize,
    pub avg_user_rate_bps: (f64, f64),
    pub goodput_bps: (f64, f64),
    pub ber_ub: (f64, f64),
    pub ber_mc: Option<(f64, f64)>,
    pub objective: (f64, f64),
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Groups rows that differ only in seed (and timing) and averages them.
/// Convergence rows are additionally grouped by iteration. Group order is the
/// order of first appearance.
pub fn summarize(rows: &[ResultRow]) -> Vec<SummaryRow> {
    let padded = pad_traces(rows);
    let mut order: Vec<String> = Vec::new();
    let mut groups: BTreeMap<String, Vec<&ResultRow>> = BTreeMap::new();
    for r in &padded {
        let iterations = if r.kind == "convergence" { r.iterations } else { None };
        let key = format!(
            "{}|{}|{}|{}|{}|{}|{}|{}|{}|{:?}|{}|{:?}",
            r.scenario, r.kind, r.method, r.sweep_name, r.sweep_value, r.snr_db, r.lambda0, r.n_elements, r.n_patterns, r.bits, r.delta, iterations
        );
        let entry = groups.entry(key.clone()).or_default();
        if entry.is_empty() {
            order.push(key);
        }
        entry.push(r);
    }
    order
        .iter()
        .map(|key| {
            let g = &groups[key];
            let col = |f: fn(&ResultRow) -> f64| mean_se(&g.iter().map(|r| f(r)).collect::<Vec<_>>());
            let mc: Vec<f64> = g.iter().filter_map(|r| r.ber_mc).collect();
            SummaryRow {
                key: g[0].clone(),
                iterations: if g[0].kind == "convergence" { g[0].iterations } else { None },
                n_seeds: g.len(),
                avg_user_rate_bps: col(|r| r.avg_user_rate_bps),
                goodput_bps: col(|r| r.goodput_bps),
                ber_ub: col(|r| r.ber_ub),
                ber_mc: (mc.len() == g.len()).then(|| mean_se(&mc)),
                objective: col(|r| r.objective),
            }
        })
        .collect()
}

/// Extends every convergence trace with its final row up to the longest trace
/// of the same configuration, so that averages over seeds stay balanced.
fn pad_traces(rows: &[ResultRow]) -> Vec<ResultRow> {
    let config_key = |r: &ResultRow| {
        format!(
            "{}|{}|{}|{}|{}|{}|{}|{:?}|{}",
            r.scenario, r.method, r.sweep_value, r.lambda0, r.n_elements, r.n_patterns, r.snr_db, r.bits, r.delta
        )
    };
    let mut longest: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.kind == "convergence") {
        let e = longest.entry(config_key(r)).or_default();
        *e = (*e).max(r.iterations.unwrap_or(0));
    }
    let mut out = Vec::with_capacity(rows.len());
    for (i, r) in rows.iter().enumerate() {
        out.push(r.clone());
        let last_of_trace = rows
            .get(i + 1)
            .is_none_or(|next| next.seed != r.seed || config_key(next) != config_key(r));
        if r.kind == "convergence" && last_of_trace {
            let end = longest[&config_key(r)];
            for it in r.iterations.unwrap_or(0) + 1..=end {
                out.push(ResultRow {
                    iterations: Some(it),
                    ..r.clone()
                });
            }
        }
    }
    out
}

/// `results.csv` -> `results.summary.csv`.
pub fn summary_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.summary.csv"))
}

/// Writes the per-group aggregates of `rows` under [`SUMMARY_HEADER`].
pub fn emit_summary(rows: &[ResultRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyRows);
    }
    let summary = summarize(rows);
    write_table(
        path,
        SUMMARY_HEADER,
        summary.iter().map(|s| {
            let k = &s.key;
            vec![
                k.scenario.clone(),
                k.kind.clone(),
                k.method.clone(),
                k.sweep_name.clone(),
                k.sweep_value.to_string(),
                k.snr_db.to_string(),
                k.lambda0.to_string(),
                k.n_elements.to_string(),
                k.n_patterns.to_string(),
                opt(k.bits),
                k.delta.to_string(),
                opt(s.iterations),
                s.n_seeds.to_string(),
                s.avg_user_rate_bps.0.to_string(),
                s.avg_user_rate_bps.1.to_string(),
                s.goodput_bps.0.to_string(),
                s.goodput_bps.1.to_string(),
                s.ber_ub.0.to_string(),
                s.ber_ub.1.to_string(),
                opt(s.ber_mc.map(|m| m.0)),
                opt(s.ber_mc.map(|m| m.1)),
                s.objective.0.to_string(),
                s.objective.1.to_string(),
            ]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(seed: u64, goodput: f64) -> ResultRow {
        ResultRow {
            scenario: "t".into(),
            kind: "snr_sweep".into(),
            method: "alternating".into(),
            seed,
            sweep_name: "snr_db".into(),
            sweep_value: -5.0,
            snr_db: -5.000000000000001,
            lambda0: 0.5,
            n_elements: 10,
            n_patterns: 4,
            bits: None,
            delta: 0.0,
            avg_user_rate_bps: 1.0 / 3.0,
            goodput_bps: goodput,
            ber_ub: 1e-17,
            ber_mc: Some(0.1),
            ber_mc_stderr: None,
            objective: 12345.678901234567,
            iterations: Some(4),
            wall_time_s: 0.25,
        }
    }

    #[test]
    fn header_is_exact() {
        assert_eq!(
            CSV_HEADER,
            "scenario,kind,method,seed,sweep_name,sweep_value,snr_db,lambda0,N,K,b,delta,avg_user_rate_bps,goodput_bps,ber_ub,ber_mc,ber_mc_stderr,objective,iterations,wall_time_s"
        );
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.csv");
        let rows = vec![row(1, 40000.0), row(u64::MAX, f64::MIN_POSITIVE)];
        emit_csv(&rows, &path).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next(), Some(CSV_HEADER));
        assert!(text.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn empty_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(emit_csv(&[], &dir.path().join("x.csv")), Err(Error::EmptyRows)));
    }

    #[test]
    fn summary_averages_over_seeds() {
        let rows = vec![row(1, 1.0), row(2, 3.0), ResultRow { method: "mpsk".into(), ..row(1, 7.0) }];
        let s = summarize(&rows);
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].n_seeds, 2);
        assert_eq!(s[0].goodput_bps, (2.0, 1.0));
        assert_eq!(s[1].key.method, "mpsk");
        assert_eq!(summary_path(Path::new("a/b/run.csv")), Path::new("a/b/run.summary.csv"));
    }

    #[test]
    fn short_traces_are_carried_forward() {
        let trace = |seed: u64, values: &[f64]| -> Vec<ResultRow> {
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| ResultRow {
                    kind: "convergence".into(),
                    iterations: Some(i),
                    objective: v,
                    ..row(seed, v)
                })
                .collect()
        };
        let mut rows = trace(1, &[1.0, 2.0]);
        rows.extend(trace(2, &[1.0, 3.0, 4.0, 6.0]));
        let s = summarize(&rows);
        assert_eq!(s.len(), 4);
        assert!(s.iter().all(|g| g.n_seeds == 2));
        assert_eq!(s[3].objective.0, 4.0);
    }
}
