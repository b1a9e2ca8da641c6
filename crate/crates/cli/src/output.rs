//! Output files. Every CSV row ends with `seed,config_hash,version` and
//! every report line carries the same three fields, so any file on its own
//! identifies the run that produced it. Floats use Rust's shortest
//! round-trip formatting, which keeps reruns byte-identical.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use levy_malliavin::stats::MCEstimate;
use serde::Serialize;
use serde_json::{Map, Value};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl RunMeta {
    pub fn new(config_hash: String, seed: u64) -> Self {
        Self {
            config_hash,
            seed,
            version: VERSION.to_string(),
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// One estimate in the common result layout.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub quantity: String,
    pub theta: f64,
    pub x: f64,
    pub y: Option<f64>,
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub n_dropped: usize,
    pub h: Option<f64>,
}

impl ResultRow {
    pub fn from_estimate(quantity: &str, theta: f64, x: f64, y: Option<f64>, t: f64, e: &MCEstimate) -> Self {
        Self {
            quantity: quantity.to_string(),
            theta,
            x,
            y,
            t,
            value: e.value,
            stderr: e.stderr,
            n: e.n_paths,
            n_dropped: e.n_dropped,
            h: None,
        }
    }

    pub fn with_bandwidth(mut self, h: f64) -> Self {
        self.h = Some(h);
        self
    }
}

pub const RESULT_HEADER: [&str; 10] = [
    "quantity",
    "theta",
    "x",
    "y",
    "t",
    "value",
    "stderr",
    "n",
    "n_dropped",
    "h",
];

/// Writes CSV files and the JSON-lines report of one run.
pub struct OutputDir {
    pub dir: PathBuf,
    pub meta: RunMeta,
    report: BufWriter<File>,
    pub written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(dir: &Path, meta: RunMeta) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let report_path = dir.join("report.jsonl");
        let report = BufWriter::new(File::create(&report_path)?);
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
            report,
            written: vec![report_path],
        })
    }

    /// A CSV with the given header; the provenance columns are appended.
    pub fn write_table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&path)?));
        let mut head: Vec<&str> = header.to_vec();
        head.extend(["seed", "config_hash", "version"]);
        w.write_record(&head)?;
        let seed = self.meta.seed.to_string();
        for row in rows {
            let mut rec: Vec<&str> = row.iter().map(String::as_str).collect();
            rec.extend([
                seed.as_str(),
                self.meta.config_hash.as_str(),
                self.meta.version.as_str(),
            ]);
            w.write_record(&rec)?;
        }
        w.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    pub fn write_results(&mut self, name: &str, rows: &[ResultRow]) -> std::io::Result<PathBuf> {
        let rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r.quantity.clone(),
                    fmt_f64(r.theta),
                    fmt_f64(r.x),
                    opt(r.y),
                    fmt_f64(r.t),
                    fmt_f64(r.value),
                    fmt_f64(r.stderr),
                    r.n.to_string(),
                    r.n_dropped.to_string(),
                    opt(r.h),
                ]
            })
            .collect();
        self.write_table(name, &RESULT_HEADER, &rows)
    }

    /// A pretty-printed JSON document with the provenance fields added.
    pub fn write_json<T: Serialize>(&mut self, name: &str, body: &T) -> std::io::Result<PathBuf> {
        let path = self.dir.join(name);
        let doc = serde_json::json!({
            "config_hash": self.meta.config_hash,
            "seed": self.meta.seed,
            "version": self.meta.version,
            "body": body,
        });
        let mut f = BufWriter::new(File::create(&path)?);
        serde_json::to_writer_pretty(&mut f, &doc)?;
        f.write_all(b"\n")?;
        f.flush()?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Appends one report line `{record, config_hash, seed, version, ...fields}`.
    pub fn record<T: Serialize>(&mut self, record: &str, fields: &T) -> std::io::Result<()> {
        let mut map = Map::new();
        match serde_json::to_value(fields)? {
            Value::Object(m) => map.extend(m),
            Value::Null => {}
            other => {
                map.insert("value".into(), other);
            }
        }
        map.insert("record".into(), Value::from(record));
        map.insert("config_hash".into(), Value::from(self.meta.config_hash.clone()));
        map.insert("seed".into(), Value::from(self.meta.seed));
        map.insert("version".into(), Value::from(self.meta.version.clone()));
        serde_json::to_writer(&mut self.report, &Value::Object(map))?;
        self.report.write_all(b"\n")
    }

    pub fn finish(mut self) -> std::io::Result<Vec<PathBuf>> {
        self.report.flush()?;
        Ok(self.written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_and_report_carry_provenance() {
        let dir = tempfile::tempdir().unwrap();
        let meta = RunMeta::new("abc".into(), 5);
        let mut out = OutputDir::create(dir.path(), meta).unwrap();
        let row = ResultRow {
            quantity: "density".into(),
            theta: 1.0,
            x: 1.0,
            y: Some(0.25),
            t: 1.0,
            value: 0.5,
            stderr: 1e-7,
            n: 10,
            n_dropped: 0,
            h: None,
        };
        out.write_results("r.csv", &[row]).unwrap();
        out.record("summary", &serde_json::json!({"k": 1})).unwrap();
        out.finish().unwrap();
        let csv = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "quantity,theta,x,y,t,value,stderr,n,n_dropped,h,seed,config_hash,version"
        );
        assert_eq!(
            lines.next().unwrap(),
            format!("density,1.0,1.0,0.25,1.0,0.5,1e-7,10,0,,5,abc,{VERSION}")
        );
        let report = std::fs::read_to_string(dir.path().join("report.jsonl")).unwrap();
        let v: Value = serde_json::from_str(report.lines().next().unwrap()).unwrap();
        assert_eq!(v["record"], "summary");
        assert_eq!(v["config_hash"], "abc");
        assert_eq!(v["k"], 1);
    }
}
