//! Binomial keyword enrichment and top-k variable selection.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;

use indexmap::IndexMap;

use crate::data::VariableSet;
use crate::error::{ExpcaError, Result};
use crate::format;
use crate::scores::{ScoreKind, ScoreSet};

/// P(X ≥ k) for X ~ Binomial(n, p).
///
/// Terms are built as log-ratios to the mode and normalized by their total,
/// so the upper and lower tails sum to one to rounding and no factorial is
/// ever evaluated.
pub fn binomial_tail(trials: u64, success_prob: f64, successes: u64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&success_prob),
        "success probability {success_prob} outside [0, 1]"
    );
    if successes == 0 {
        return 1.0;
    }
    if successes > trials {
        return 0.0;
    }
    if success_prob == 0.0 {
        return 0.0;
    }
    if success_prob == 1.0 {
        return 1.0;
    }
    let log_terms = binomial_log_terms(trials, success_prob);
    let k = successes as usize;
    (log_sum_exp(&log_terms[k..]) - log_sum_exp(&log_terms)).exp().min(1.0)
}

/// P(X ≤ k) for X ~ Binomial(n, p); companion of [`binomial_tail`].
pub fn binomial_lower_tail(trials: u64, success_prob: f64, successes: u64) -> f64 {
    if successes >= trials {
        return 1.0;
    }
    if success_prob == 0.0 {
        return 1.0;
    }
    if success_prob == 1.0 {
        return 0.0;
    }
    let log_terms = binomial_log_terms(trials, success_prob);
    (log_sum_exp(&log_terms[..=successes as usize]) - log_sum_exp(&log_terms))
        .exp()
        .min(1.0)
}

/// ln(P(X = j) / P(X = mode)) for j = 0..=n, for 0 < p < 1.
fn binomial_log_terms(n: u64, p: f64) -> Vec<f64> {
    let log_odds = p.ln() - (-p).ln_1p();
    let nf = n as f64;
    let mode = (((nf + 1.0) * p).floor() as u64).min(n) as usize;
    let mut terms = vec![0.0; n as usize + 1];
    for j in (mode + 1)..=n as usize {
        // P(j) / P(j−1) = (n − j + 1) / j · p / (1 − p)
        let jf = j as f64;
        terms[j] = terms[j - 1] + ((nf - jf + 1.0) / jf).ln() + log_odds;
    }
    for j in (0..mode).rev() {
        let jf = j as f64;
        terms[j] = terms[j + 1] - ((nf - jf) / (jf + 1.0)).ln() - log_odds;
    }
    terms
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Keyword → annotated variables, restricted to a declared universe.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnnotationMap {
    keywords: IndexMap<String, BTreeSet<String>>,
}

impl AnnotationMap {
    /// Keeps only pairs whose variable belongs to `universe`. Keywords appear
    /// in order of first mention.
    pub fn from_pairs<'a, I>(pairs: I, universe: &[String]) -> Self
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let universe: HashSet<&str> = universe.iter().map(String::as_str).collect();
        let mut keywords: IndexMap<String, BTreeSet<String>> = IndexMap::new();
        for (variable, keyword) in pairs {
            if universe.contains(variable) {
                keywords
                    .entry(keyword.to_string())
                    .or_default()
                    .insert(variable.to_string());
            }
        }
        AnnotationMap { keywords }
    }

    pub fn insert(&mut self, keyword: &str, variables: impl IntoIterator<Item = String>) {
        self.keywords.entry(keyword.to_string()).or_default().extend(variables);
    }

    pub fn len(&self) -> usize {
        self.keywords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keywords.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.keywords.iter().map(|(k, v)| (k.as_str(), v))
    }
}

/// Parses `variable_id<TAB>keyword` lines.
pub fn parse_annotation_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (var, keyword) = line
            .split_once('\t')
            .ok_or_else(|| ExpcaError::parse(i + 1, 1, "expected `variable_id<TAB>keyword`"))?;
        let (var, keyword) = (var.trim(), keyword.trim());
        if var.is_empty() || keyword.is_empty() {
            return Err(ExpcaError::parse(i + 1, 1, "empty variable id or keyword"));
        }
        pairs.push((var.to_string(), keyword.to_string()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichmentRecord {
    pub keyword: String,
    pub chip_count: u64,
    pub selected_count: u64,
    pub p_value: f64,
}

/// One keyword's record from counts alone.
pub fn enrichment_record(
    keyword: &str,
    chip_count: u64,
    selected_count: u64,
    selection_size: u64,
    universe_size: u64,
) -> Result<EnrichmentRecord> {
    if universe_size == 0 {
        return Err(ExpcaError::InvalidArgument("empty universe".into()));
    }
    if chip_count > universe_size || selection_size > universe_size {
        return Err(ExpcaError::InvalidArgument(format!(
            "counts exceed the universe of {universe_size}"
        )));
    }
    if selected_count > chip_count.min(selection_size) {
        return Err(ExpcaError::InvalidArgument(format!(
            "`{keyword}`: {selected_count} selected exceeds chip {chip_count} or selection {selection_size}"
        )));
    }
    Ok(EnrichmentRecord {
        keyword: keyword.to_string(),
        chip_count,
        selected_count,
        p_value: binomial_tail(selection_size, chip_count as f64 / universe_size as f64, selected_count),
    })
}

/// Per-keyword upper binomial tail, sorted by p then keyword.
pub fn enrich(
    annotations: &AnnotationMap,
    universe_size: u64,
    selected: &VariableSet,
) -> Result<Vec<EnrichmentRecord>> {
    if universe_size == 0 {
        return Err(ExpcaError::InvalidArgument("empty universe".into()));
    }
    let selection = selected.len() as u64;
    let mut records = annotations
        .iter()
        .map(|(keyword, vars)| {
            let hits = vars.iter().filter(|v| selected.contains(v)).count() as u64;
            enrichment_record(keyword, vars.len() as u64, hits, selection, universe_size)
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.p_value.total_cmp(&b.p_value).then_with(|| a.keyword.cmp(&b.keyword)));
    Ok(records)
}

pub fn enrichment_tsv(records: &[EnrichmentRecord], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("keyword\tchip\tselected\tp-value\n");
    for r in records {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.keyword,
            r.chip_count,
            r.selected_count,
            format::float(r.p_value)
        );
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Largest,
    Smallest,
}

/// The `count` variables with the most extreme scores on `axis` (1-based).
/// Equal scores are ordered by variable id.
pub fn select_top(vars: &ScoreSet, axis: usize, direction: Direction, count: usize) -> Result<VariableSet> {
    Ok(ranked_top(vars, axis, direction, count)?.into_iter().collect())
}

/// Like [`select_top`], returning ids in rank order.
pub fn ranked_top(vars: &ScoreSet, axis: usize, direction: Direction, count: usize) -> Result<Vec<String>> {
    if vars.kind != ScoreKind::Variable {
        return Err(ExpcaError::InvalidArgument("selection needs variable scores".into()));
    }
    if axis < 1 || axis > vars.k() {
        return Err(ExpcaError::InvalidArgument(format!(
            "axis {axis} outside 1..={}",
            vars.k()
        )));
    }
    if count < 1 || count > vars.len() {
        return Err(ExpcaError::InvalidArgument(format!(
            "cannot select {count} of {} variables",
            vars.len()
        )));
    }
    let column = vars.scores.column(axis - 1);
    let mut order: Vec<usize> = (0..vars.len()).collect();
    order.sort_by(|&a, &b| {
        let by_score = match direction {
            Direction::Largest => column[b].total_cmp(&column[a]),
            Direction::Smallest => column[a].total_cmp(&column[b]),
        };
        by_score.then_with(|| vars.row_labels[a].cmp(&vars.row_labels[b]))
    });
    Ok(order
        .into_iter()
        .take(count)
        .map(|i| vars.row_labels[i].clone())
        .collect())
}
