//! CSV artifacts and console tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, in the
//! tables as well as the CSV files, so parsing either gives the same bits.

use std::io::Write;

use pathfx_core::simulation::{Regime, RegimeReport, ReplicateResult};

use crate::config::stabilize_name;
use crate::run::EstimateRow;

pub const ESTIMATES_HEADER: [&str; 20] = [
    "estimator",
    "delta_estimator",
    "comparison",
    "baseline",
    "scale",
    "beta_hat",
    "delta_hat",
    "effect",
    "ci_lower",
    "ci_upper",
    "se",
    "ci_level",
    "bootstrap",
    "replicates",
    "failures",
    "n_used",
    "stabilize",
    "max_weight",
    "ess",
    "clipped",
];

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub fn estimate_record(r: &EstimateRow) -> Vec<String> {
    let res = &r.result;
    let iv = r.interval.as_ref();
    let d = &res.diagnostics;
    let max_weight = d.w_mratio.max.max(d.w_c1ratio.max).max(d.w_baseline.max).max(d.w_comparison.max);
    vec![
        res.kind.beta.name().into(),
        res.kind.delta.name().into(),
        res.pair.comparison.to_string(),
        res.pair.baseline.to_string(),
        res.scale.name().into(),
        res.beta_hat.to_string(),
        res.delta_hat.to_string(),
        res.effect.to_string(),
        opt(iv.map(|i| i.lower)),
        opt(iv.map(|i| i.upper)),
        opt(iv.map(|i| i.se)),
        opt(iv.map(|i| i.level)),
        r.bootstrap.clone(),
        iv.map_or(0, |i| i.replicate_values.len() + i.failures).to_string(),
        iv.map_or(0, |i| i.failures).to_string(),
        res.n_used.to_string(),
        stabilize_name(res.stabilize),
        max_weight.to_string(),
        d.w_mratio.ess.to_string(),
        d.total_clipped().to_string(),
    ]
}

pub fn write_estimates<W: Write>(w: W, rows: &[EstimateRow]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(ESTIMATES_HEADER)?;
    for r in rows {
        wtr.write_record(estimate_record(r))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Aligned table of the estimate rows.
pub fn estimates_table(rows: &[EstimateRow]) -> String {
    let cols = [0usize, 1, 5, 6, 7, 8, 9, 10, 14];
    let header: Vec<String> = cols.iter().map(|&c| ESTIMATES_HEADER[c].to_string()).collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let rec = estimate_record(r);
            cols.iter().map(|&c| rec[c].clone()).collect()
        })
        .collect();
    let width: Vec<usize> = (0..cols.len())
        .map(|k| body.iter().map(|r| r[k].len()).chain([header[k].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        cells.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect::<Vec<_>>().join("  ").trim_end().to_string()
    };
    let mut out = line(&header);
    for r in &body {
        out.push('\n');
        out.push_str(&line(r));
    }
    out
}

pub const SUMMARY_HEADER: [&str; 17] = [
    "regime", "n", "replications", "seed", "stabilize", "estimator", "mean", "bias", "sd", "mc_se", "t", "critical",
    "ci_lower", "ci_upper", "reject", "degenerate", "failures",
];

pub fn write_summary<W: Write>(w: W, report: &RegimeReport) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    let s = &report.spec;
    for e in &report.summaries {
        let t = &e.test;
        wtr.write_record([
            s.regime.name().to_string(),
            s.n.to_string(),
            s.replications.to_string(),
            s.seed.to_string(),
            stabilize_name(s.stabilize),
            e.kind.name().into(),
            t.mean.to_string(),
            (t.mean - report.hypothesized).to_string(),
            t.sd.to_string(),
            t.se.to_string(),
            t.t.to_string(),
            t.critical.to_string(),
            t.ci_lower.to_string(),
            t.ci_upper.to_string(),
            t.reject.to_string(),
            t.degenerate.to_string(),
            report.failures.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_replicates<W: Write>(w: W, regime: Regime, reps: &[ReplicateResult]) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let regime = regime.name();
    wtr.write_record(["regime", "rep", "estimator", "value", "error"])?;
    for r in reps {
        match &r.outcome {
            Ok(values) => {
                for (k, v) in values {
                    wtr.write_record([regime, &r.rep.to_string(), k.name(), &v.to_string(), ""])?;
                }
            }
            Err(e) => wtr.write_record([regime, &r.rep.to_string(), "", "", &e.to_string()])?,
        }
    }
    wtr.flush()?;
    Ok(())
}
