//! Run reports and their CSV form.
//!
//! The CSV has one row per op and repeat:
//!
//! ```text
//! op,result,kind,dtype,placement,decision,verdict,passed,repeat,setup,xfer,compute,total
//! ```
//!
//! `passed` is empty when the run was not checked. `total` is written for
//! convenience and ignored when reading.

use std::fmt::Write as _;
use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use npuflow::host::Placement;
use npuflow::sim::CostReport;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct OpRecord {
    pub op: usize,
    pub result: String,
    pub kind: String,
    pub dtype: String,
    pub placement: Placement,
    /// Placement with its reason, as in the placement summary.
    pub decision: String,
    /// Verdict text, or `None` without `--check`.
    pub verdict: Option<String>,
    pub passed: Option<bool>,
    /// Cost of each repeat in order.
    pub runs: Vec<CostReport>,
}

impl OpRecord {
    pub fn first(&self) -> Option<CostReport> {
        self.runs.first().copied()
    }

    /// Mean over repeats 2..N.
    pub fn subsequent(&self) -> Option<CostReport> {
        mean(self.runs.get(1..).unwrap_or(&[]))
    }
}

pub fn mean(runs: &[CostReport]) -> Option<CostReport> {
    if runs.is_empty() {
        return None;
    }
    let n = runs.len() as f64;
    Some(CostReport {
        setup: runs.iter().map(|c| c.setup).sum::<f64>() / n,
        xfer: runs.iter().map(|c| c.xfer).sum::<f64>() / n,
        compute: runs.iter().map(|c| c.compute).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunReport {
    pub ops: Vec<OpRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    op: usize,
    result: String,
    kind: String,
    dtype: String,
    placement: Placement,
    decision: String,
    verdict: String,
    passed: Option<bool>,
    repeat: usize,
    setup: f64,
    xfer: f64,
    compute: f64,
    total: f64,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.ops.iter().all(|o| o.passed != Some(false))
    }

    pub fn write_csv(&self, w: impl Write) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for o in &self.ops {
            for (k, c) in o.runs.iter().enumerate() {
                out.serialize(Row {
                    op: o.op,
                    result: o.result.clone(),
                    kind: o.kind.clone(),
                    dtype: o.dtype.clone(),
                    placement: o.placement,
                    decision: o.decision.clone(),
                    verdict: o.verdict.clone().unwrap_or_default(),
                    passed: o.passed,
                    repeat: k + 1,
                    setup: c.setup,
                    xfer: c.xfer,
                    compute: c.compute,
                    total: c.total(),
                })?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    pub fn read_csv(r: impl Read) -> Result<RunReport> {
        let mut report = RunReport::default();
        for (line, row) in csv::Reader::from_reader(r).deserialize::<Row>().enumerate() {
            let row = row.with_context(|| format!("csv record {}", line + 1))?;
            let same = report.ops.last().is_some_and(|o| o.op == row.op);
            if !same {
                report.ops.push(OpRecord {
                    op: row.op,
                    result: row.result,
                    kind: row.kind,
                    dtype: row.dtype,
                    placement: row.placement,
                    decision: row.decision,
                    verdict: (!row.verdict.is_empty()).then_some(row.verdict),
                    passed: row.passed,
                    runs: Vec::new(),
                });
            }
            let o = report.ops.last_mut().expect("pushed above");
            if row.repeat != o.runs.len() + 1 {
                bail!("op {} repeat {} is out of order", o.op, row.repeat);
            }
            o.runs.push(CostReport { setup: row.setup, xfer: row.xfer, compute: row.compute });
        }
        Ok(report)
    }

    /// Human-readable table.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for o in &self.ops {
            let _ = writeln!(s, "op{} %{}: {} {} -> {}", o.op, o.result, o.kind, o.dtype, o.decision);
            if let Some(v) = &o.verdict {
                let _ = writeln!(s, "  verdict: {v}");
            }
            let _ = writeln!(s, "  {:<8} {:>12} {:>12} {:>12} {:>12}", "run", "setup", "xfer", "compute", "total");
            for (k, c) in o.runs.iter().enumerate() {
                let _ = writeln!(s, "  {:<8} {}", k + 1, cost_cols(c));
            }
            if let Some(m) = o.subsequent() {
                let _ = writeln!(s, "  {:<8} {}", "mean 2..", cost_cols(&m));
            }
        }
        s
    }
}

fn cost_cols(c: &CostReport) -> String {
    format!("{:>12.3} {:>12.3} {:>12.3} {:>12.3}", c.setup, c.xfer, c.compute, c.total())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RunReport {
        RunReport {
            ops: vec![
                OpRecord {
                    op: 0,
                    result: "s".into(),
                    kind: "sum".into(),
                    dtype: "i32".into(),
                    placement: Placement::Npu,
                    decision: "NPU (int32 emulated)".into(),
                    verdict: Some("exact match".into()),
                    passed: Some(true),
                    runs: vec![
                        CostReport { setup: 3000.0, xfer: 2105.1, compute: 61.0 },
                        CostReport { setup: 0.0, xfer: 2105.1, compute: 61.0 },
                        CostReport { setup: 0.0, xfer: 0.1 + 0.2, compute: 1.0 / 3.0 },
                    ],
                },
                OpRecord {
                    op: 1,
                    result: "t".into(),
                    kind: "transpose".into(),
                    dtype: "f32".into(),
                    placement: Placement::Cpu,
                    decision: "CPU: exceeds memory tile, \"quoted\"".into(),
                    verdict: None,
                    passed: None,
                    runs: vec![CostReport::default()],
                },
            ],
        }
    }

    #[test]
    fn csv_round_trip() {
        let r = sample();
        let text = r.to_csv();
        assert!(text.starts_with("op,result,kind,dtype,placement,decision,verdict,passed,repeat,setup,xfer,compute,total\n"));
        assert_eq!(RunReport::read_csv(text.as_bytes()).unwrap(), r);
    }

    #[test]
    fn first_and_subsequent() {
        let r = sample();
        let o = &r.ops[0];
        assert_eq!(o.first().unwrap().setup, 3000.0);
        assert_eq!(o.subsequent().unwrap().setup, 0.0);
        assert!(r.ops[1].subsequent().is_none());
        assert!(r.all_passed());
        assert!(r.to_text().contains("mean 2.."));
    }
}
