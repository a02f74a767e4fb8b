//! Principal components for observations and variables, their scaling,
//! projection of new data, nearest-unit classification and the scaled biplot.

use std::fmt::Write as _;

use ndarray::{Array2, Axis};

use crate::axes::AxesModel;
use crate::data::{align_variables, center, CenteredMatrix, ExpressionMatrix, ReferenceVector, StudyDesign};
use crate::error::{ExpcaError, Result};
use crate::format;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreKind {
    Observation,
    Variable,
}

impl ScoreKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreKind::Observation => "observation",
            ScoreKind::Variable => "variable",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "observation" => Some(ScoreKind::Observation),
            "variable" => Some(ScoreKind::Variable),
            _ => None,
        }
    }
}

/// Component scores, one row per observation or per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub row_labels: Vec<String>,
    pub scores: Array2<f64>,
    pub kind: ScoreKind,
    pub scaled: bool,
    /// m_i per row; observation scores only.
    pub effective_counts: Option<Vec<usize>>,
    /// n_T of the model the scores came from.
    pub n_training: usize,
    /// Labels of observations scaled with m_i = 0.
    pub zero_count_rows: Vec<String>,
}

impl ScoreSet {
    pub fn k(&self) -> usize {
        self.scores.ncols()
    }

    pub fn len(&self) -> usize {
        self.row_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_labels.is_empty()
    }

    /// Tab-separated table: `label kind pc1 pc2 …`, preceded by `#` comment lines.
    pub fn to_tsv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        for label in &self.zero_count_rows {
            let _ = writeln!(out, "# warning: observation {label} has m_i = 0");
        }
        out.push_str(&header(self.k()));
        for (label, row) in self.row_labels.iter().zip(self.scores.rows()) {
            let _ = writeln!(
                out,
                "{label}\t{}\t{}",
                self.kind.as_str(),
                format::float_row(row.iter().copied())
            );
        }
        out
    }

    /// Reads a table written by [`ScoreSet::to_tsv`]; comment lines are skipped.
    /// All rows must share one kind. Counts and n_T are not stored in the table.
    pub fn from_tsv(text: &str, scaled: bool) -> Result<ScoreSet> {
        let mut rows = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (header_line, head) = rows
            .next()
            .ok_or_else(|| ExpcaError::parse(1, 1, "empty score table"))?;
        let cols: Vec<&str> = head.split('\t').collect();
        if cols.len() < 3 || cols[0] != "label" || cols[1] != "kind" {
            return Err(ExpcaError::parse(header_line, 1, "expected header `label kind pc1 …`"));
        }
        let k = cols.len() - 2;
        let mut labels = Vec::new();
        let mut values = Vec::new();
        let mut kind = None;
        for (line_no, line) in rows {
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != k + 2 {
                return Err(ExpcaError::parse(line_no, 1, format!("expected {} fields", k + 2)));
            }
            let row_kind = ScoreKind::parse(fields[1])
                .ok_or_else(|| ExpcaError::parse(line_no, 2, format!("unknown kind `{}`", fields[1])))?;
            if *kind.get_or_insert(row_kind) != row_kind {
                return Err(ExpcaError::parse(line_no, 2, "mixed row kinds"));
            }
            labels.push(fields[0].to_string());
            for (c, f) in fields[2..].iter().enumerate() {
                values.push(
                    f.trim()
                        .parse::<f64>()
                        .map_err(|_| ExpcaError::parse(line_no, c + 3, format!("non-numeric score `{f}`")))?,
                );
            }
        }
        let n = labels.len();
        Ok(ScoreSet {
            row_labels: labels,
            scores: Array2::from_shape_vec((n, k), values).expect("counted"),
            kind: kind.unwrap_or(ScoreKind::Observation),
            scaled,
            effective_counts: None,
            n_training: 0,
            zero_count_rows: Vec::new(),
        })
    }
}

fn header(k: usize) -> String {
    let mut h = String::from("label\tkind");
    for i in 1..=k {
        let _ = write!(h, "\tpc{i}");
    }
    h.push('\n');
    h
}

/// Centers `matrix` with `reference` over the variables the two share and
/// aligns the result to the model's variable order.
pub fn prepare_projection(
    matrix: &ExpressionMatrix,
    reference: &ReferenceVector,
    model: &AxesModel,
) -> Result<CenteredMatrix> {
    let ref_ids: std::collections::HashSet<&str> = reference.variable_ids().iter().map(String::as_str).collect();
    let shared: Vec<String> = matrix
        .variable_ids()
        .iter()
        .filter(|id| ref_ids.contains(id.as_str()))
        .cloned()
        .collect();
    if shared.is_empty() {
        return Err(ExpcaError::Dimension(
            "matrix shares no variables with the reference".into(),
        ));
    }
    let subset = matrix.select_variables(&shared)?;
    let centered = center(&subset, &reference.restrict(&shared)?)?;
    align_variables(&centered, model.variable_ids())
}

/// Y = X·V_T.
pub fn observation_scores(centered: &CenteredMatrix, model: &AxesModel) -> Result<ScoreSet> {
    if centered.variable_ids() != model.variable_ids() {
        return Err(ExpcaError::Dimension(
            "matrix variables are not in model order; align them first".into(),
        ));
    }
    Ok(ScoreSet {
        row_labels: centered.observation_ids().to_vec(),
        scores: centered.values().dot(model.right()),
        kind: ScoreKind::Observation,
        scaled: false,
        effective_counts: Some(centered.effective_counts().to_vec()),
        n_training: model.n_training(),
        zero_count_rows: Vec::new(),
    })
}

/// Z = m_i^(-1/2)·Y row by row. Rows with m_i = 0 become zeros and are listed
/// in `zero_count_rows`.
pub fn scale_observation_scores(raw: &ScoreSet) -> Result<ScoreSet> {
    if raw.kind != ScoreKind::Observation || raw.scaled {
        return Err(ExpcaError::InvalidArgument(
            "expected unscaled observation scores".into(),
        ));
    }
    let counts = raw
        .effective_counts
        .as_ref()
        .ok_or_else(|| ExpcaError::InvalidArgument("observation scores lack m_i".into()))?;
    let mut scaled = raw.clone();
    scaled.scaled = true;
    for ((mut row, &m_i), label) in scaled.scores.axis_iter_mut(Axis(0)).zip(counts).zip(&raw.row_labels) {
        if m_i == 0 {
            row.fill(0.0);
            scaled.zero_count_rows.push(label.clone());
        } else {
            let f = 1.0 / (m_i as f64).sqrt();
            row.mapv_inplace(|y| y * f);
        }
    }
    Ok(scaled)
}

/// Y_v = V_T·diag(D_T).
pub fn variable_scores(model: &AxesModel) -> ScoreSet {
    let mut scores = model.right().clone();
    for (mut col, &d) in scores.columns_mut().into_iter().zip(model.singulars()) {
        col *= d;
    }
    ScoreSet {
        row_labels: model.variable_ids().to_vec(),
        scores,
        kind: ScoreKind::Variable,
        scaled: false,
        effective_counts: None,
        n_training: model.n_training(),
        zero_count_rows: Vec::new(),
    }
}

/// Z_v = n_T^(-1/2)·Y_v.
pub fn scale_variable_scores(raw: &ScoreSet, n_training: usize) -> Result<ScoreSet> {
    if raw.kind != ScoreKind::Variable || raw.scaled {
        return Err(ExpcaError::InvalidArgument("expected unscaled variable scores".into()));
    }
    if n_training == 0 {
        return Err(ExpcaError::InvalidArgument("n_T must be at least 1".into()));
    }
    let f = 1.0 / (n_training as f64).sqrt();
    let mut scaled = raw.clone();
    scaled.scaled = true;
    scaled.n_training = n_training;
    scaled.scores.mapv_inplace(|y| y * f);
    Ok(scaled)
}

/// Scaled scores of the training units themselves: U_T·diag(D_T)·m^(-1/2).
pub fn unit_scores(model: &AxesModel) -> ScoreSet {
    let m = model.n_variables();
    let f = 1.0 / (m as f64).sqrt();
    let mut scores = model.left().clone();
    for (mut col, &d) in scores.columns_mut().into_iter().zip(model.singulars()) {
        col *= d * f;
    }
    ScoreSet {
        row_labels: model.unit_labels().to_vec(),
        scores,
        kind: ScoreKind::Observation,
        scaled: true,
        effective_counts: Some(vec![m; model.n_training()]),
        n_training: model.n_training(),
        zero_count_rows: Vec::new(),
    }
}

/// Projects an expression matrix onto the model and scales the scores.
pub fn project(matrix: &ExpressionMatrix, reference: &ReferenceVector, model: &AxesModel) -> Result<ScoreSet> {
    let aligned = prepare_projection(matrix, reference, model)?;
    scale_observation_scores(&observation_scores(&aligned, model)?)
}

/// How a group's spread in the (sPC1, sPC2) plane is summarized.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FluctuationMode {
    /// Two-dimensional scatter about the centroid: sqrt(Σ‖z − c‖² / (n − 1)).
    #[default]
    Scatter,
    /// Sample SD (n − 1) of the Euclidean distances to the centroid.
    DistanceSd,
}

/// Root mean square over groups (n ≥ 2) of the within-group SD of the first
/// two scaled axes. A missing second axis counts as zero.
pub fn fluctuation(scaled: &ScoreSet, design: &StudyDesign, mode: FluctuationMode) -> Result<f64> {
    if scaled.kind != ScoreKind::Observation {
        return Err(ExpcaError::InvalidArgument(
            "fluctuation needs observation scores".into(),
        ));
    }
    let point = |i: usize| {
        let row = scaled.scores.row(i);
        (row.get(0).copied().unwrap_or(0.0), row.get(1).copied().unwrap_or(0.0))
    };
    let mut sum_var = 0.0;
    let mut groups = 0usize;
    for g in design.groups() {
        let members: Vec<usize> = scaled
            .row_labels
            .iter()
            .enumerate()
            .filter(|(_, o)| design.group_of(o) == Some(g))
            .map(|(i, _)| i)
            .collect();
        let n = members.len();
        if n < 2 {
            continue;
        }
        let (sx, sy) = members
            .iter()
            .map(|&i| point(i))
            .fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (cx, cy) = (sx / n as f64, sy / n as f64);
        let variance = match mode {
            FluctuationMode::Scatter => {
                members
                    .iter()
                    .map(|&i| {
                        let (x, y) = point(i);
                        (x - cx).powi(2) + (y - cy).powi(2)
                    })
                    .sum::<f64>()
                    / (n - 1) as f64
            }
            FluctuationMode::DistanceSd => {
                let dist: Vec<f64> = members
                    .iter()
                    .map(|&i| {
                        let (x, y) = point(i);
                        (x - cx).hypot(y - cy)
                    })
                    .collect();
                let mean = dist.iter().sum::<f64>() / n as f64;
                dist.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64
            }
        };
        sum_var += variance;
        groups += 1;
    }
    if groups == 0 {
        return Err(ExpcaError::Design(
            "no group has two or more scored observations".into(),
        ));
    }
    Ok((sum_var / groups as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub observation_id: String,
    pub nearest_unit: String,
    /// Euclidean distance to every training unit, in training-row order.
    pub distances: Vec<(String, f64)>,
}

/// Assigns each observation to the nearest training unit over the first
/// `axes_used` scaled axes. Ties go to the earlier training row.
pub fn classify(scaled: &ScoreSet, model: &AxesModel, axes_used: usize) -> Result<Vec<ClassificationResult>> {
    if axes_used < 1 {
        return Err(ExpcaError::InvalidArgument("at least one axis is required".into()));
    }
    if axes_used > model.k() || axes_used > scaled.k() {
        return Err(ExpcaError::InvalidArgument(format!(
            "{axes_used} axes requested but the model has {}",
            model.k().min(scaled.k())
        )));
    }
    let units = unit_scores(model);
    Ok(scaled
        .row_labels
        .iter()
        .zip(scaled.scores.rows())
        .map(|(label, z)| {
            let distances: Vec<(String, f64)> = units
                .row_labels
                .iter()
                .zip(units.scores.rows())
                .map(|(unit, u)| {
                    let d2: f64 = (0..axes_used).map(|a| (z[a] - u[a]).powi(2)).sum();
                    (unit.clone(), d2.sqrt())
                })
                .collect();
            let mut best = 0;
            for (i, (_, d)) in distances.iter().enumerate() {
                if *d < distances[best].1 {
                    best = i;
                }
            }
            ClassificationResult {
                observation_id: label.clone(),
                nearest_unit: distances[best].0.clone(),
                distances,
            }
        })
        .collect())
}

/// Classification results as TSV: observation, nearest unit, then one distance column per unit.
pub fn classification_tsv(results: &[ClassificationResult], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    out.push_str("observation\tnearest");
    if let Some(first) = results.first() {
        for (unit, _) in &first.distances {
            let _ = write!(out, "\td:{unit}");
        }
    }
    out.push('\n');
    for r in results {
        let _ = writeln!(
            out,
            "{}\t{}\t{}",
            r.observation_id,
            r.nearest_unit,
            format::float_row(r.distances.iter().map(|(_, d)| *d))
        );
    }
    out
}

/// Observation and variable sPCs on shared axes.
#[derive(Debug, Clone, PartialEq)]
pub struct BiplotTable {
    pub multiplier: f64,
    pub rows: Vec<(String, ScoreKind, Vec<f64>)>,
}

impl BiplotTable {
    pub fn to_tsv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        let _ = writeln!(out, "# obs_multiplier: {}", format::float(self.multiplier));
        let k = self.rows.first().map_or(0, |r| r.2.len());
        out.push_str(&header(k));
        for (label, kind, coords) in &self.rows {
            let _ = writeln!(
                out,
                "{label}\t{}\t{}",
                kind.as_str(),
                format::float_row(coords.iter().copied())
            );
        }
        out
    }
}

/// Observation rows (times `obs_multiplier`) followed by variable rows.
pub fn biplot_table(obs: &ScoreSet, vars: &ScoreSet, obs_multiplier: f64) -> Result<BiplotTable> {
    if obs.kind != ScoreKind::Observation || vars.kind != ScoreKind::Variable {
        return Err(ExpcaError::InvalidArgument(
            "biplot needs observation and variable scores".into(),
        ));
    }
    if !obs.scaled || !vars.scaled {
        return Err(ExpcaError::InvalidArgument("biplot needs scaled scores".into()));
    }
    if obs.k() != vars.k() {
        return Err(ExpcaError::Dimension(format!(
            "observation scores have {} axes, variable scores {}",
            obs.k(),
            vars.k()
        )));
    }
    if !(obs_multiplier.is_finite() && obs_multiplier >= 1.0) {
        return Err(ExpcaError::InvalidArgument("obs_multiplier must be ≥ 1".into()));
    }
    let mut rows = Vec::with_capacity(obs.len() + vars.len());
    for (label, z) in obs.row_labels.iter().zip(obs.scores.rows()) {
        rows.push((
            label.clone(),
            ScoreKind::Observation,
            z.iter().map(|v| v * obs_multiplier).collect(),
        ));
    }
    for (label, z) in vars.row_labels.iter().zip(vars.scores.rows()) {
        rows.push((label.clone(), ScoreKind::Variable, z.to_vec()));
    }
    Ok(BiplotTable {
        multiplier: obs_multiplier,
        rows,
    })
}
