//! CSV and JSON emission of inequality reports.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::Result;
use crate::inequality::{InequalityReport, Tier};

pub const CSV_HEADER: [&str; 14] =
    ["name", "domain", "delta", "p", "q", "tau", "h", "lhs", "rhs", "ratio", "fixture", "tier", "passed", "note"];

#[derive(Serialize)]
struct Row<'a> {
    name: &'a str,
    domain: &'a str,
    delta: f64,
    p: f64,
    q: f64,
    tau: f64,
    h: f64,
    lhs: f64,
    rhs: f64,
    ratio: f64,
    fixture: &'a str,
    tier: &'a str,
    passed: bool,
    note: &'a str,
}

impl<'a> From<&'a InequalityReport> for Row<'a> {
    fn from(r: &'a InequalityReport) -> Self {
        Row {
            name: &r.name,
            domain: &r.domain,
            delta: r.delta,
            p: r.p,
            q: r.q,
            tau: r.tau,
            h: r.h,
            lhs: r.lhs,
            rhs: r.rhs,
            ratio: r.ratio,
            fixture: &r.fixture,
            tier: match r.tier {
                Tier::Assertion => "assertion",
                Tier::Measured => "measured",
            },
            passed: r.passed,
            note: &r.note,
        }
    }
}

/// One row per report; the header is written even when there are none.
pub fn write_csv<W: Write>(reports: &[InequalityReport], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        w.serialize(Row::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_csv(reports: &[InequalityReport], path: &Path) -> Result<()> {
    write_csv(reports, std::io::BufWriter::new(std::fs::File::create(path)?))
}

pub fn save_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only_when_empty() {
        let mut buf = Vec::new();
        write_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn rows_follow_the_header() {
        let r = InequalityReport {
            name: "hardy".into(),
            domain: "ball".into(),
            ratio: 0.5,
            note: "a, b".into(),
            ..Default::default()
        }
        .assertion(false);
        let mut buf = Vec::new();
        write_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line, "hardy,ball,0.0,0.0,0.0,0.0,0.0,0.0,0.0,0.5,,assertion,false,\"a, b\"");
    }
}
