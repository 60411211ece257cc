//! Tabular reports in the layout of the published tables, as CSV or JSON.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::percent_strings;
use super::{EvalError, EvaluationResult};
use crate::raster::RasterError;

pub const HEADER: [&str; 10] = [
    "label",
    "method",
    "total",
    "tp",
    "fp",
    "fn",
    "precision",
    "recall",
    "f1",
    "seconds",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub label: String,
    /// Window size, or a method name such as `candidates` or `obia`.
    pub method: String,
    /// Windows scanned or candidates classified.
    pub total: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: String,
    pub recall: String,
    pub f1: String,
    pub seconds: f64,
}

impl ReportRow {
    pub fn new(
        label: impl Into<String>,
        method: impl Into<String>,
        total: u64,
        tp: u64,
        fp: u64,
        fn_: u64,
        seconds: f64,
    ) -> Self {
        let [precision, recall, f1] = percent_strings(tp, fp, fn_);
        Self {
            label: label.into(),
            method: method.into(),
            total,
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
            seconds,
        }
    }

    pub fn from_result(
        label: impl Into<String>,
        method: impl Into<String>,
        total: u64,
        r: &EvaluationResult,
    ) -> Self {
        Self::new(label, method, total, r.tp, r.fp, r.fn_, r.total_seconds())
    }

    fn cells(&self) -> [String; 10] {
        [
            self.label.clone(),
            self.method.clone(),
            self.total.to_string(),
            self.tp.to_string(),
            self.fp.to_string(),
            self.fn_.to_string(),
            self.precision.clone(),
            self.recall.clone(),
            self.f1.clone(),
            format!("{:.3}", self.seconds),
        ]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            _ => Err(format!("unknown format {s:?} (expected csv or json)")),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Csv => "csv",
            Self::Json => "json",
        }
    }
}

impl ReportTable {
    pub fn new(rows: Vec<ReportRow>) -> Self {
        Self { rows }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r.cells()).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv output is utf-8")
    }

    /// `seconds` is emitted with millisecond precision so both formats agree.
    pub fn to_json(&self) -> String {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|r| {
                let mut v = serde_json::to_value(r).expect("row serializes");
                v["seconds"] = serde_json::json!((r.seconds * 1000.0).round() / 1000.0);
                v
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("rows serialize");
        s.push('\n');
        s
    }

    pub fn render(&self, f: ReportFormat) -> String {
        match f {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }

    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let bad = |m: String| EvalError::MalformedReport(m);
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let header = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
        if header.iter().ne(HEADER) {
            return Err(bad(format!(
                "unexpected header {:?}",
                header.iter().collect::<Vec<_>>()
            )));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| bad(e.to_string()))?;
            let num = |j: usize| -> Result<u64, EvalError> {
                rec[j].parse().map_err(|_| {
                    bad(format!(
                        "row {}: column {} is not a count",
                        i + 1,
                        HEADER[j]
                    ))
                })
            };
            let seconds = rec[9]
                .parse()
                .map_err(|_| bad(format!("row {}: bad seconds", i + 1)))?;
            rows.push(ReportRow::new(
                &rec[0],
                &rec[1],
                num(2)?,
                num(3)?,
                num(4)?,
                num(5)?,
                seconds,
            ));
        }
        Ok(Self { rows })
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        let t: ReportTable =
            serde_json::from_str(text).map_err(|e| EvalError::MalformedReport(e.to_string()))?;
        // recompute the percent columns from the counts
        Ok(Self::new(
            t.rows
                .into_iter()
                .map(|r| ReportRow::new(r.label, r.method, r.total, r.tp, r.fp, r.fn_, r.seconds))
                .collect(),
        ))
    }

    /// Reads either format, chosen by extension (`.json`, anything else is CSV).
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| RasterError::io(path, e))?;
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json(&text)
        } else {
            Self::from_csv(&text)
        }
    }

    pub fn save(&self, path: &Path, f: ReportFormat) -> Result<(), EvalError> {
        std::fs::write(path, self.render(f)).map_err(|e| RasterError::io(path, e).into())
    }
}
