//! Report serialization: estimate rows as CSV matching the reference table
//! columns (Estimate, S.E., C.I., p-value, effective sample sizes) plus JSON
//! mirrors of the full objects.

use std::fmt::Write as _;

use crate::estimators::{EffectEstimate, InferenceRow, VarianceMode};
use crate::simulate::McReport;

/// CSV header for effect estimates. `se`/`ci`/`pvalue` columns refer to the
/// row's primary variance mode; further modes append `se_<mode>` columns.
pub fn estimates_csv(estimates: &[EffectEstimate]) -> String {
    let mut modes: Vec<VarianceMode> = Vec::new();
    for est in estimates {
        for &m in est.conventional.se.keys() {
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
    }
    modes.sort();
    let primary = *modes.first().unwrap_or(&VarianceMode::Network);

    let mut out = String::new();
    out.push_str("effect,estimator,estimate");
    for m in &modes {
        let _ = write!(out, ",se_{}", m.name());
    }
    out.push_str(",ci_low,ci_high,pvalue,n_plus,n_minus,s_bar,h,b,pct_unique\n");

    let mut push_row = |label: &str,
                        estimator: &str,
                        row: &InferenceRow,
                        est: &EffectEstimate| {
        let _ = write!(out, "{label},{estimator},{}", row.point);
        for m in &modes {
            match row.se.get(m) {
                Some(se) => {
                    let _ = write!(out, ",{se}");
                }
                None => out.push(','),
            }
        }
        let (lo, hi) = row.ci95.get(&primary).copied().unwrap_or((f64::NAN, f64::NAN));
        let p = row.pvalue.get(&primary).copied().unwrap_or(f64::NAN);
        let b = est.b_used.map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            ",{lo},{hi},{p},{},{},{},{},{b},{}",
            est.n_plus, est.n_minus, est.s_bar, est.h_used, est.pct_unique_distance
        );
    };

    for est in estimates {
        push_row(&est.label, "conventional", &est.conventional, est);
        if let Some(robust) = &est.robust {
            push_row(&est.label, "bias_corrected", robust, est);
        }
    }
    out
}

pub fn estimates_json(estimates: &[EffectEstimate]) -> String {
    serde_json::to_string_pretty(estimates).expect("estimates serialize")
}

/// Monte Carlo table in the reference layout: one row per estimand with
/// bias, SD, per-mode mean SE and coverage, mean effective sample sizes and
/// the share of unique distance values.
pub fn mc_csv(report: &McReport) -> String {
    let mut modes: Vec<VarianceMode> = Vec::new();
    for row in &report.rows {
        for &m in row.mean_se.keys() {
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
    }
    modes.sort();

    let mut out = String::new();
    out.push_str("scenario,n,reps,effect,estimator,truth,bias,sd");
    for m in &modes {
        let _ = write!(out, ",se_{}", m.name());
    }
    for m in &modes {
        let _ = write!(out, ",cr_{}", m.name());
    }
    out.push_str(",n_plus,n_minus,pct_unique,failures\n");
    for row in &report.rows {
        let estimator = if row.bias_corrected { "bias_corrected" } else { "conventional" };
        let truth = row.truth.map(|t| t.to_string()).unwrap_or_default();
        let bias = row.bias.map(|b| b.to_string()).unwrap_or_default();
        let _ = write!(
            out,
            "{},{},{},{},{estimator},{truth},{bias},{}",
            report.scenario, report.n, report.reps, row.label, row.sd
        );
        for m in &modes {
            match row.mean_se.get(m) {
                Some(se) => {
                    let _ = write!(out, ",{se}");
                }
                None => out.push(','),
            }
        }
        for m in &modes {
            match row.coverage.get(m).copied().flatten() {
                Some(cr) => {
                    let _ = write!(out, ",{cr}");
                }
                None => out.push(','),
            }
        }
        let _ = writeln!(
            out,
            ",{},{},{},{}",
            row.mean_n_plus, row.mean_n_minus, row.mean_pct_unique, row.failures
        );
    }
    out
}

pub fn mc_json(report: &McReport) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}
