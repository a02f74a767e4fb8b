//! Two-way additive ANOVA on probe-level data: value = probe + group + error.

use std::collections::HashSet;
use std::fmt::Write as _;

use indexmap::IndexMap;
use ndarray::Array2;

use super::special::f_upper_tail;
use crate::data::{is_missing_marker, StudyDesign, VariableSet};
use crate::error::{ExpcaError, Result};
use crate::format;

pub const DEFAULT_THRESHOLD: f64 = 0.005;

/// Relative size below which a sum of squares counts as exactly zero.
const ZERO_SS: f64 = 1e-12;

/// Probe-level values of one variable: probes × observations.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBlock {
    pub variable_id: String,
    pub probe_ids: Vec<String>,
    pub observation_ids: Vec<String>,
    pub values: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaRecord {
    pub variable_id: String,
    pub f_statistic: f64,
    pub df_group: u32,
    pub df_residual: u32,
    pub p_value: f64,
    pub positive: bool,
    /// Residual sum of squares was zero; F and p follow the 0/∞ conventions.
    pub degenerate_residual: bool,
}

/// Fits the additive probe + group model and tests the group effect.
/// `positive` is set against [`DEFAULT_THRESHOLD`].
pub fn two_way_anova(block: &ProbeBlock, design: &StudyDesign) -> Result<AnovaRecord> {
    let (p, n) = block.values.dim();
    if p < 2 {
        return Err(ExpcaError::InvalidArgument(format!(
            "`{}` needs at least two probes",
            block.variable_id
        )));
    }
    if n != block.observation_ids.len() {
        return Err(ExpcaError::Dimension("probe block columns and ids differ".into()));
    }
    if let Some(((i, j), _)) = block.values.indexed_iter().find(|(_, v)| !v.is_finite()) {
        return Err(ExpcaError::NonFinite { row: i, col: j });
    }

    let mut group_index: IndexMap<&str, Vec<usize>> = IndexMap::new();
    for (j, o) in block.observation_ids.iter().enumerate() {
        let g = design
            .group_of(o)
            .ok_or_else(|| ExpcaError::Design(format!("observation `{o}` has no group")))?;
        group_index.entry(g).or_default().push(j);
    }
    let g = group_index.len();
    if g < 2 {
        return Err(ExpcaError::Design(format!(
            "`{}` needs at least two groups, found {g}",
            block.variable_id
        )));
    }
    let df_res = (p * n) as i64 - p as i64 - g as i64 + 1;
    if df_res < 1 {
        return Err(ExpcaError::Degenerate(format!(
            "`{}`: model is saturated (residual df {df_res})",
            block.variable_id
        )));
    }

    let y = &block.values;
    let grand = y.mean().expect("non-empty");
    let probe_mean: Vec<f64> = y.rows().into_iter().map(|r| r.mean().expect("n ≥ 1")).collect();
    let mut col_group = vec![0usize; n];
    let mut group_mean = vec![0.0; g];
    for (gi, cols) in group_index.values().enumerate() {
        let sum: f64 = cols.iter().map(|&j| y.column(j).sum()).sum();
        group_mean[gi] = sum / (cols.len() * p) as f64;
        for &j in cols {
            col_group[j] = gi;
        }
    }

    // Every observation carries all probes, so probe and group effects are
    // orthogonal and the sequential decomposition has closed form.
    let ss_total: f64 = y.iter().map(|v| (v - grand).powi(2)).sum();
    let ss_group: f64 = group_index
        .values()
        .zip(&group_mean)
        .map(|(cols, m)| (p * cols.len()) as f64 * (m - grand).powi(2))
        .sum();
    let ss_res: f64 = y
        .indexed_iter()
        .map(|((i, j), v)| (v - probe_mean[i] - group_mean[col_group[j]] + grand).powi(2))
        .sum();

    let df_group = (g - 1) as u32;
    let df_residual = df_res as u32;
    let zero = |ss: f64| ss <= ZERO_SS * ss_total || ss_total == 0.0;
    let (f_statistic, p_value, degenerate) = if zero(ss_res) {
        if zero(ss_group) {
            (0.0, 1.0, true)
        } else {
            (f64::INFINITY, 0.0, true)
        }
    } else {
        let f = (ss_group / df_group as f64) / (ss_res / df_residual as f64);
        (f, f_upper_tail(f, df_group, df_residual), false)
    };
    Ok(AnovaRecord {
        variable_id: block.variable_id.clone(),
        f_statistic,
        df_group,
        df_residual,
        p_value,
        positive: p_value < DEFAULT_THRESHOLD,
        degenerate_residual: degenerate,
    })
}

/// Variables with p strictly below `threshold`.
pub fn filter_positive(records: &[AnovaRecord], threshold: f64) -> Result<VariableSet> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ExpcaError::InvalidArgument(format!(
            "threshold {threshold} outside (0, 1)"
        )));
    }
    Ok(records
        .iter()
        .filter(|r| r.p_value < threshold)
        .map(|r| r.variable_id.clone())
        .collect())
}

/// Reads `variable_id<TAB>probe_id<TAB>obs…` rows into one block per
/// variable, in order of first appearance.
pub fn parse_probe_table(text: &str) -> Result<Vec<ProbeBlock>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty());
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| ExpcaError::parse(1, 1, "empty probe table"))?;
    let observation_ids: Vec<String> = header.split('\t').skip(2).map(|s| s.trim().to_string()).collect();
    if observation_ids.is_empty() {
        return Err(ExpcaError::parse(header_line, 3, "no observation columns"));
    }
    let mut seen = HashSet::new();
    for (c, o) in observation_ids.iter().enumerate() {
        if !seen.insert(o.as_str()) {
            return Err(ExpcaError::parse(
                header_line,
                c + 3,
                format!("duplicate observation `{o}`"),
            ));
        }
    }
    let n = observation_ids.len();
    let mut blocks: IndexMap<String, (Vec<String>, Vec<f64>)> = IndexMap::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != n + 2 {
            return Err(ExpcaError::parse(
                line_no,
                fields.len().min(n + 2) + 1,
                format!("expected {} fields, found {}", n + 2, fields.len()),
            ));
        }
        let entry = blocks.entry(fields[0].trim().to_string()).or_default();
        let probe = fields[1].trim().to_string();
        if entry.0.contains(&probe) {
            return Err(ExpcaError::parse(line_no, 2, format!("duplicate probe `{probe}`")));
        }
        entry.0.push(probe);
        for (c, cell) in fields[2..].iter().enumerate() {
            if is_missing_marker(cell) {
                return Err(ExpcaError::parse(
                    line_no,
                    c + 3,
                    "missing probe values are not supported",
                ));
            }
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| ExpcaError::parse(line_no, c + 3, format!("bad value `{}`", cell.trim())))?;
            entry.1.push(v);
        }
    }
    Ok(blocks
        .into_iter()
        .map(|(variable_id, (probe_ids, values))| {
            let p = probe_ids.len();
            ProbeBlock {
                variable_id,
                probe_ids,
                observation_ids: observation_ids.clone(),
                values: Array2::from_shape_vec((p, n), values).expect("counted"),
            }
        })
        .collect())
}

/// `variable_id F df1 df2 p positive` table.
pub fn anova_tsv(records: &[AnovaRecord], threshold: f64, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    for r in records.iter().filter(|r| r.degenerate_residual) {
        let _ = writeln!(out, "# degenerate residual: {}", r.variable_id);
    }
    out.push_str("variable_id\tF\tdf1\tdf2\tp\tpositive\n");
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.variable_id,
            format::float(r.f_statistic),
            r.df_group,
            r.df_residual,
            format::float(r.p_value),
            r.p_value < threshold
        );
    }
    out
}
