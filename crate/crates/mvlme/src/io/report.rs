//! Report CSV writers with fixed, documented column sets.

use std::fmt::Write as _;
use std::path::Path;

use crate::diagnostics::PosteriorSummary;
use crate::error::Result;
use crate::io::stratified::GroupReport;
use crate::simulation::{BiasTable, ReplicateRow};

pub const SUMMARY_HEADER: &str = "parameter,mean,sd,q025,q975,rhat,ess,bayes_p";
pub const GROUP_REPORT_HEADER: &str = "group,n_subjects,window_d,scale_factor,alpha_mean,alpha_sd,\
alpha_q025,alpha_q975,alpha_rhat,alpha_ess,alpha_bayes_p,alpha_scaled_mean,alpha_scaled_sd,\
alpha_scaled_q025,alpha_scaled_q975";
pub const BIAS_TABLE_HEADER: &str =
    "scenario,structure,parameter,truth,mean_posterior_mean,bias,mean_abs_error,coverage95,n_ok";
pub const REPLICATE_SUMMARIES_HEADER: &str =
    "scenario,structure,replicate,parameter,mean,sd,q025,q975,rhat,ess,bayes_p,truth";

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt).unwrap_or_default()
}

/// `summary.csv`: one row per parameter.
pub fn write_summary_csv(summary: &PosteriorSummary, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(SUMMARY_HEADER);
    out.push('\n');
    for p in &summary.params {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            p.name,
            fmt(p.mean),
            fmt(p.sd),
            fmt(p.q025),
            fmt(p.q975),
            fmt_opt(p.rhat),
            fmt_opt(p.ess),
            fmt(p.bayes_p)
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `group_report.csv`: one row per fitted group.
pub fn write_group_report_csv(reports: &[GroupReport], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(GROUP_REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let a = r.alpha.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.group,
            r.n_subjects,
            fmt_opt(r.window_d),
            fmt(r.scale_factor),
            fmt_opt(a.map(|a| a.mean)),
            fmt_opt(a.map(|a| a.sd)),
            fmt_opt(a.map(|a| a.q025)),
            fmt_opt(a.map(|a| a.q975)),
            fmt_opt(a.and_then(|a| a.rhat)),
            fmt_opt(a.and_then(|a| a.ess)),
            fmt_opt(a.map(|a| a.bayes_p)),
            fmt_opt(a.map(|a| a.scaled_mean)),
            fmt_opt(a.map(|a| a.scaled_sd)),
            fmt_opt(a.map(|a| a.scaled_q025)),
            fmt_opt(a.map(|a| a.scaled_q975)),
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `bias_table.csv`: aggregated sensitivity results.
pub fn write_bias_table_csv(table: &BiasTable, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(BIAS_TABLE_HEADER);
    out.push('\n');
    for c in &table.cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            c.scenario,
            c.structure,
            c.parameter,
            fmt(c.truth),
            fmt(c.mean_posterior_mean),
            fmt(c.bias),
            fmt(c.mean_abs_error),
            fmt(c.coverage95),
            c.n_ok
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// `replicate_summaries.csv`: raw per-replicate parameter summaries.
pub fn write_replicate_summaries_csv(rows: &[ReplicateRow], path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(REPLICATE_SUMMARIES_HEADER);
    out.push('\n');
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.scenario,
            r.structure,
            r.replicate,
            r.parameter,
            fmt(r.mean),
            fmt(r.sd),
            fmt(r.q025),
            fmt(r.q975),
            fmt_opt(r.rhat),
            fmt_opt(r.ess),
            fmt(r.bayes_p),
            fmt_opt(r.truth)
        )
        .expect("string write");
    }
    std::fs::write(path, out)?;
    Ok(())
}
