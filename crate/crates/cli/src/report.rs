//! CSV reports. Metadata goes first as `# key value` lines, then a header
//! and one row per measurement. Nothing time-dependent is written, so the
//! same config gives the same bytes.

use std::fmt::Write as _;
use std::path::Path;

use albm::{AlbmError, Result};
use serde::{Deserialize, Serialize};

pub const COLUMNS: [&str; 8] = ["run_id", "mode", "split", "class_set", "top1", "loss", "nec", "seed"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub run_id: String,
    pub mode: String,
    pub split: String,
    pub class_set: String,
    pub top1: f64,
    pub loss: f64,
    pub nec: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub meta: Vec<(String, String)>,
    pub rows: Vec<Row>,
}

impl Report {
    pub fn to_csv(&self) -> Result<String> {
        let mut out = String::new();
        for (k, v) in &self.meta {
            writeln!(out, "# {k} {v}").unwrap();
        }
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).map_err(csv_err)?;
        }
        if self.rows.is_empty() {
            w.write_record(COLUMNS).map_err(csv_err)?;
        }
        let body = w.into_inner().map_err(|e| AlbmError::Format(e.to_string()))?;
        out.push_str(std::str::from_utf8(&body).expect("csv output is utf-8"));
        Ok(out)
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = Vec::new();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix("# ") else { break };
            let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
            meta.push((k.to_string(), v.to_string()));
        }
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let header = r.headers().map_err(csv_err)?.clone();
        if header.iter().ne(COLUMNS) {
            return Err(AlbmError::Format(format!("unexpected CSV header {:?}", header.iter().collect::<Vec<_>>())));
        }
        let rows = r.deserialize().collect::<std::result::Result<Vec<Row>, _>>().map_err(csv_err)?;
        Ok(Report { meta, rows })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AlbmError::Config(vec![format!("cannot read {}: {e}", path.display())]))?;
        Self::from_csv(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        albm::io::write_atomic(path, self.to_csv()?.as_bytes())
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

fn csv_err(e: csv::Error) -> AlbmError {
    AlbmError::Format(format!("csv: {e}"))
}

fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Human-readable table of one or more reports. Base and novel rows of the
/// same run and mode also get their harmonic mean.
pub fn summarize(reports: &[Report]) -> String {
    let mut out = String::new();
    for report in reports {
        if let Some(id) = report.meta("run_id") {
            writeln!(out, "run {id} (config {})", report.meta("config_sha256").unwrap_or("?")).unwrap();
        }
        writeln!(out, "{:<16} {:<7} {:<9} {:>5} {:>8} {:>9}", "mode", "split", "classes", "nec", "top1 %", "loss")
            .unwrap();
        for row in &report.rows {
            let nec = row.nec.map(|n| n.to_string()).unwrap_or_else(|| "-".into());
            writeln!(
                out,
                "{:<16} {:<7} {:<9} {:>5} {:>8.2} {:>9.4}",
                row.mode,
                row.split,
                row.class_set,
                nec,
                100.0 * row.top1,
                row.loss
            )
            .unwrap();
        }
        for base in report.rows.iter().filter(|r| r.class_set == "base") {
            let novel = report
                .rows
                .iter()
                .find(|r| r.class_set == "novel" && r.mode == base.mode && r.run_id == base.run_id);
            if let Some(novel) = novel {
                writeln!(
                    out,
                    "{}: base {:.2}  novel {:.2}  HM {:.2}",
                    base.mode,
                    100.0 * base.top1,
                    100.0 * novel.top1,
                    100.0 * harmonic_mean(base.top1, novel.top1)
                )
                .unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(class_set: &str, top1: f64, nec: Option<usize>) -> Row {
        Row {
            run_id: "r".into(),
            mode: "base2novel".into(),
            split: "test".into(),
            class_set: class_set.into(),
            top1,
            loss: 0.5,
            nec,
            seed: 3,
        }
    }

    #[test]
    fn csv_round_trip_keeps_rows_and_meta() {
        let report = Report {
            meta: vec![("albm".into(), "0.1.0".into()), ("run_id".into(), "r".into())],
            rows: vec![row("base", 0.75, None), row("novel", 1.0 / 3.0, Some(4))],
        };
        let text = report.to_csv().unwrap();
        assert!(text.starts_with("# albm 0.1.0\n# run_id r\nrun_id,mode,split,class_set,top1,loss,nec,seed\n"));
        assert_eq!(Report::from_csv(&text).unwrap(), report);
    }

    #[test]
    fn empty_report_still_has_a_header() {
        let text = Report::default().to_csv().unwrap();
        assert_eq!(text, "run_id,mode,split,class_set,top1,loss,nec,seed\n");
    }

    #[test]
    fn wrong_header_is_a_format_error() {
        assert!(Report::from_csv("a,b\n1,2\n").is_err());
    }

    #[test]
    fn summary_adds_harmonic_mean() {
        let report = Report { meta: vec![], rows: vec![row("base", 0.8, None), row("novel", 0.4, None)] };
        let text = summarize(&[report]);
        // 2 * 0.8 * 0.4 / 1.2
        assert!(text.contains("HM 53.33"), "{text}");
    }

    proptest::proptest! {
        #[test]
        fn any_report_survives_a_round_trip(
            meta in proptest::collection::vec(("[a-z_]{1,8}", "[a-z0-9.]{1,8}"), 0..4),
            rows in proptest::collection::vec(
                ("[a-z0-9 ,\"-]{1,10}", "[a-z-]{1,10}", 0.0..=1.0f64, 0.0..50.0f64, proptest::option::of(1usize..64), proptest::num::u64::ANY),
                0..6,
            ),
        ) {
            let report = Report {
                meta,
                rows: rows
                    .into_iter()
                    .map(|(run_id, mode, top1, loss, nec, seed)| Row {
                        run_id,
                        mode,
                        split: "test".into(),
                        class_set: "all".into(),
                        top1,
                        loss,
                        nec,
                        seed,
                    })
                    .collect(),
            };
            let text = report.to_csv().unwrap();
            proptest::prop_assert_eq!(Report::from_csv(&text).unwrap(), report);
        }
    }
}
