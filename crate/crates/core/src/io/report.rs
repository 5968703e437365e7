//! CSV rows and a plain-text table for evaluation results.
//!
//! Ratios (MOTA, IDF1, MT, ML, AMOTA) are written as fractions, counts as
//! integers. A disabled AMOTA is an empty field.

use std::fmt::Write as _;

use crate::experiment::{AblationRow, EvalSummary};
use crate::metrics::TpCriterion;

pub const REPORT_COLUMNS: [&str; 9] = ["MOTA", "IDF1", "MT", "ML", "FP", "FN", "IDSW", "FRAG", "AMOTA"];

const RATE_COLUMNS: [&str; 5] = ["MOTP", "FP_RATE", "FN_RATE", "IDSW_RATE", "GT"];

fn fields(s: &EvalSummary) -> Vec<String> {
    let r = &s.report;
    vec![
        r.mota.to_string(),
        s.idf1.to_string(),
        r.mt.to_string(),
        r.ml.to_string(),
        r.fp.to_string(),
        r.fn_.to_string(),
        r.idsw.to_string(),
        r.frag.to_string(),
        s.amota.as_ref().map(|a| a.amota.to_string()).unwrap_or_default(),
    ]
}

/// Header plus one row.
pub fn report_csv(s: &EvalSummary) -> String {
    format!("{}\n{}\n", REPORT_COLUMNS.join(","), fields(s).join(","))
}

/// One row per grid cell: the axis values, the report columns, then MOTP
/// and the FP/FN/IDSW rates relative to the ground-truth count.
pub fn ablation_csv(axes: &[String], rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let header: Vec<&str> = axes
        .iter()
        .map(String::as_str)
        .chain(REPORT_COLUMNS)
        .chain(RATE_COLUMNS)
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let r = &row.summary.report;
        let mut f: Vec<String> = row.cell.iter().map(|(_, v)| v.clone()).collect();
        f.extend(fields(&row.summary));
        f.extend([
            r.motp.to_string(),
            r.fp_rate.to_string(),
            r.fn_rate.to_string(),
            r.idsw_rate.to_string(),
            r.gt_total.to_string(),
        ]);
        out.push_str(&f.join(","));
        out.push('\n');
    }
    out
}

pub fn report_table(s: &EvalSummary, crit: TpCriterion) -> String {
    let r = &s.report;
    let pct = |v: f64| format!("{:.1}", 100.0 * v);
    let motp = match crit {
        TpCriterion::Iou2d(_) => format!("{} (mean IoU)", pct(r.motp)),
        TpCriterion::CenterDist3d(_) => format!("{:.3} m", r.motp),
    };
    let mut out = String::new();
    let _ = writeln!(out, "criterion  {crit}");
    let _ = writeln!(out, "GT         {}", r.gt_total);
    let _ = writeln!(out, "MOTA       {}", pct(r.mota));
    let _ = writeln!(out, "IDF1       {}", pct(s.idf1));
    let _ = writeln!(out, "MOTP       {motp}");
    let _ = writeln!(out, "MT / ML    {} / {}", pct(r.mt), pct(r.ml));
    let _ = writeln!(out, "FP         {} ({}%)", r.fp, pct(r.fp_rate));
    let _ = writeln!(out, "FN         {} ({}%)", r.fn_, pct(r.fn_rate));
    let _ = writeln!(out, "IDSW       {} ({}%)", r.idsw, pct(r.idsw_rate));
    let _ = writeln!(out, "FRAG       {}", r.frag);
    if let Some(a) = &s.amota {
        let _ = writeln!(out, "AMOTA      {}", pct(a.amota));
        if let Some(p) = a.amotp {
            let _ = writeln!(out, "AMOTP      {p:.3}");
        }
    }
    out
}
