//! CSV and JSON output of [`Aggregates`].
//!
//! Schema version 1. One file per table, header row always present, numbers
//! in shortest round-trip form with a dot decimal separator, RFC 4180
//! quoting. Optional fields are left empty.
//!
//! | file | columns |
//! |------|---------|
//! | `blocktimes.csv` | link_id, bin_lo_s, bin_hi_s, count_first, count_other |
//! | `rates_daily.csv` | link_id, day, rkr_proxy_bps, skr_bps, sifted_bytes, secret_bytes, active_s |
//! | `qber.csv` | link_id, time_s, seq, qber_x, qber_z, avg3d_x, avg3d_z |
//! | `hourly_box.csv` | link_id, metric, hour, count, outliers_removed, q25, median, q75 |
//! | `switch_trace.csv` | node_id, time_s, kind, link_id, from_link, cause, seq, first_after_switch |
//!
//! The JSON mirror writes each table as an array of row objects with the same
//! field names, in `<table>.json`.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::Aggregates;
use crate::error::ExportError;
use crate::kms::KeySource;
use crate::simcore::RunResult;

pub const CSV_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Blocktimes,
    RatesDaily,
    Qber,
    HourlyBox,
    SwitchTrace,
}

impl Table {
    pub const ALL: [Table; 5] = [
        Table::Blocktimes,
        Table::RatesDaily,
        Table::Qber,
        Table::HourlyBox,
        Table::SwitchTrace,
    ];

    pub fn stem(self) -> &'static str {
        match self {
            Table::Blocktimes => "blocktimes",
            Table::RatesDaily => "rates_daily",
            Table::Qber => "qber",
            Table::HourlyBox => "hourly_box",
            Table::SwitchTrace => "switch_trace",
        }
    }
}

fn csv_rows<T: Serialize, W: Write>(rows: &[T], header: &[&str], w: W) -> Result<(), csv::Error> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(header)?;
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

/// Writes one table as CSV to any writer.
pub fn write_table<W: Write>(agg: &Aggregates, table: Table, w: W) -> Result<(), csv::Error> {
    match table {
        Table::Blocktimes => csv_rows(
            &agg.blocktimes,
            &["link_id", "bin_lo_s", "bin_hi_s", "count_first", "count_other"],
            w,
        ),
        Table::RatesDaily => csv_rows(
            &agg.rates_daily,
            &["link_id", "day", "rkr_proxy_bps", "skr_bps", "sifted_bytes", "secret_bytes", "active_s"],
            w,
        ),
        Table::Qber => csv_rows(
            &agg.qber,
            &["link_id", "time_s", "seq", "qber_x", "qber_z", "avg3d_x", "avg3d_z"],
            w,
        ),
        Table::HourlyBox => csv_rows(
            &agg.hourly_box,
            &["link_id", "metric", "hour", "count", "outliers_removed", "q25", "median", "q75"],
            w,
        ),
        Table::SwitchTrace => csv_rows(
            &agg.switch_trace,
            &["node_id", "time_s", "kind", "link_id", "from_link", "cause", "seq", "first_after_switch"],
            w,
        ),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, ExportError> {
    File::create(path).map(BufWriter::new).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn ensure_dir(dir: &Path) -> Result<(), ExportError> {
    std::fs::create_dir_all(dir).map_err(|source| ExportError::Io {
        path: dir.to_path_buf(),
        source,
    })
}

/// Writes the five CSV files into `dir`, creating it if needed.
pub fn export_csv(agg: &Aggregates, dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    ensure_dir(dir)?;
    let mut paths = Vec::new();
    for t in Table::ALL {
        let path = dir.join(format!("{}.csv", t.stem()));
        write_table(agg, t, create(&path)?).map_err(|source| ExportError::Csv {
            what: path.display().to_string(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

fn json_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<(), ExportError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, rows).map_err(|source| ExportError::Json {
        what: path.display().to_string(),
        source,
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|source| ExportError::Io {
            path: path.to_path_buf(),
            source,
        })
}

/// Writes the JSON mirror of every table into `dir`.
pub fn export_json(agg: &Aggregates, dir: &Path) -> Result<Vec<PathBuf>, ExportError> {
    ensure_dir(dir)?;
    let mut paths = Vec::new();
    for t in Table::ALL {
        let path = dir.join(format!("{}.json", t.stem()));
        match t {
            Table::Blocktimes => json_rows(&agg.blocktimes, &path)?,
            Table::RatesDaily => json_rows(&agg.rates_daily, &path)?,
            Table::Qber => json_rows(&agg.qber, &path)?,
            Table::HourlyBox => json_rows(&agg.hourly_box, &path)?,
            Table::SwitchTrace => json_rows(&agg.switch_trace, &path)?,
        }
        paths.push(path);
    }
    Ok(paths)
}

fn open(path: &Path) -> Result<File, ExportError> {
    File::open(path).map_err(|source| ExportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_csv_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExportError> {
    let wrap = |source| ExportError::Csv {
        what: path.display().to_string(),
        source,
    };
    csv::Reader::from_reader(open(path)?)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(wrap)
}

fn read_json_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, ExportError> {
    let mut text = String::new();
    open(path)?
        .read_to_string(&mut text)
        .map_err(|source| ExportError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    serde_json::from_str(&text).map_err(|source| ExportError::Json {
        what: path.display().to_string(),
        source,
    })
}

/// Reads back a directory written by [`export_csv`].
pub fn import_csv(dir: &Path) -> Result<Aggregates, ExportError> {
    let p = |t: Table| dir.join(format!("{}.csv", t.stem()));
    Ok(Aggregates {
        blocktimes: read_csv_rows(&p(Table::Blocktimes))?,
        rates_daily: read_csv_rows(&p(Table::RatesDaily))?,
        qber: read_csv_rows(&p(Table::Qber))?,
        hourly_box: read_csv_rows(&p(Table::HourlyBox))?,
        switch_trace: read_csv_rows(&p(Table::SwitchTrace))?,
    })
}

/// Reads back a directory written by [`export_json`].
pub fn import_json(dir: &Path) -> Result<Aggregates, ExportError> {
    let p = |t: Table| dir.join(format!("{}.json", t.stem()));
    Ok(Aggregates {
        blocktimes: read_json_rows(&p(Table::Blocktimes))?,
        rates_daily: read_json_rows(&p(Table::RatesDaily))?,
        qber: read_json_rows(&p(Table::Qber))?,
        hourly_box: read_json_rows(&p(Table::HourlyBox))?,
        switch_trace: read_json_rows(&p(Table::SwitchTrace))?,
    })
}

#[derive(Serialize, Deserialize)]
struct KeyEventRow<'a> {
    time_s: f64,
    consumer_id: &'a str,
    link_id: &'a str,
    source: KeySource,
    key_id: Option<String>,
    key_hex: Option<&'a str>,
}

/// Rekey log: time_s, consumer_id, link_id, source, key_id, key_hex.
/// `key_hex` is empty unless key material was recorded during the run.
pub fn write_key_events<W: Write>(result: &RunResult, w: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(w);
    for e in &result.rekeys {
        out.serialize(KeyEventRow {
            time_s: e.time.as_secs_f64(),
            consumer_id: &e.consumer_id,
            link_id: e.link_id.as_str(),
            source: e.source,
            key_id: e.key_id.map(|k| k.to_string()),
            key_hex: e.key_hex.as_deref(),
        })?;
    }
    if result.rekeys.is_empty() {
        out.write_record(["time_s", "consumer_id", "link_id", "source", "key_id", "key_hex"])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{BlockTimeBin, Metric, SwitchTraceRow, TraceRowKind, HourlyStats};
    use crate::orchestration::SwitchCause;
    use crate::topology::{LinkId, NodeId};

    fn sample() -> Aggregates {
        Aggregates {
            blocktimes: vec![BlockTimeBin {
                link_id: LinkId::from("a,b"),
                bin_lo_s: 350.0,
                bin_hi_s: 360.0,
                count_first: 1,
                count_other: 7,
            }],
            hourly_box: vec![HourlyStats {
                link_id: LinkId::from("L"),
                metric: Metric::RkrProxy,
                hour: 23,
                count: 4,
                outliers_removed: 1,
                q25: 0.1 + 0.2,
                median: 1e-7,
                q75: 1389.000000001,
            }],
            switch_trace: vec![SwitchTraceRow {
                node_id: NodeId::from("S"),
                time_s: 12.5,
                kind: TraceRowKind::Switch,
                link_id: LinkId::from("L"),
                from_link: None,
                cause: Some(SwitchCause::MaintenanceSkip),
                seq: None,
                first_after_switch: None,
            }],
            ..Aggregates::default()
        }
    }

    #[test]
    fn empty_tables_have_headers_only() {
        let agg = Aggregates::default();
        for t in Table::ALL {
            let mut buf = Vec::new();
            write_table(&agg, t, &mut buf).unwrap();
            let text = String::from_utf8(buf).unwrap();
            assert_eq!(text.lines().count(), 1, "{}", t.stem());
        }
    }

    #[test]
    fn csv_quotes_and_formats_locale_free() {
        let mut buf = Vec::new();
        write_table(&sample(), Table::Blocktimes, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "link_id,bin_lo_s,bin_hi_s,count_first,count_other\n\"a,b\",350.0,360.0,1,7\n"
        );
        let mut buf = Vec::new();
        write_table(&sample(), Table::SwitchTrace, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().ends_with("S,12.5,switch,L,,maintenance-skip,,\n"));
    }

    #[test]
    fn csv_and_json_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let agg = sample();
        assert_eq!(export_csv(&agg, dir.path()).unwrap().len(), 5);
        assert_eq!(import_csv(dir.path()).unwrap(), agg);
        export_json(&agg, dir.path()).unwrap();
        assert_eq!(import_json(dir.path()).unwrap(), agg);
    }

    #[test]
    fn unwritable_target_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("plain");
        std::fs::write(&file, b"x").unwrap();
        let err = export_csv(&Aggregates::default(), &file).unwrap_err();
        assert!(err.to_string().contains("plain"), "{err}");
    }
}
