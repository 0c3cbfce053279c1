//! Artifact formatting: CSV with comment lines, JSON, provenance.

use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Config = 1,
    Certificate = 2,
    Solver = 3,
}

pub struct Artifact {
    pub body: String,
    pub exit: Exit,
}

impl Artifact {
    pub fn csv(body: String, exit: Exit) -> Self {
        Self { body, exit }
    }

    pub fn json(value: Value, exit: Exit) -> Self {
        let mut body = serde_json::to_string_pretty(&value).expect("JSON values serialize");
        body.push('\n');
        Self { body, exit }
    }
}

pub fn provenance(config_bytes: &[u8]) -> String {
    let hash: String = Sha256::digest(config_bytes).iter().map(|b| format!("{b:02x}")).collect();
    format!("toric-legendre {} config-sha256={hash}", env!("CARGO_PKG_VERSION"))
}

/// 17 significant digits, enough to round-trip every double.
pub fn number(x: f64) -> String {
    format!("{x:.16e}")
}

/// Comment lines, header, then numeric rows with an optional trailing text
/// column (empty `tail` means none).
pub fn csv_document(provenance: &str, comments: &[String], header: &[String], rows: &[Vec<f64>], tail: &[&str]) -> String {
    let mut out = format!("# {provenance}\n");
    for c in comments {
        out.push_str(&format!("# {c}\n"));
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for (k, row) in rows.iter().enumerate() {
        let mut rec: Vec<String> = row.iter().map(|&x| number(x)).collect();
        if let Some(t) = tail.get(k) {
            rec.push((*t).to_string());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ASCII output"));
    out
}
