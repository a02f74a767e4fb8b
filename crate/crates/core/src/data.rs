//! Tabular inputs, study designs and design-driven centering.
//!
//! Matrices are stored observation-major (`n` observations × `m` variables)
//! even though the on-disk table is variable-major (one variable per line,
//! one observation per column).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::PathBuf;
use std::str::FromStr;

use indexmap::IndexMap;
use ndarray::Array2;

use crate::error::{ExpcaError, Result};

/// Returns true for the two accepted missing-value markers: empty and `NA`.
pub fn is_missing_marker(cell: &str) -> bool {
    let cell = cell.trim();
    cell.is_empty() || cell.eq_ignore_ascii_case("na")
}

fn check_unique(ids: &[String], kind: &'static str) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if !seen.insert(id.as_str()) {
            return Err(ExpcaError::DuplicateId { kind, id: id.clone() });
        }
    }
    Ok(())
}

/// Splits text into non-empty lines, keeping 1-based line numbers.
fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// A set of variable identifiers, e.g. ANOVA-positive variables or a top-k selection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VariableSet(BTreeSet<String>);

impl VariableSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>) -> bool {
        self.0.insert(id.into())
    }

    pub fn contains(&self, id: &str) -> bool {
        self.0.contains(id)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Identifiers in lexical order.
    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// One identifier per line; blank lines and `#` comments ignored.
    pub fn parse(text: &str) -> Self {
        numbered_lines(text)
            .map(|(_, l)| l.trim())
            .filter(|l| !l.starts_with('#'))
            .map(|l| l.split('\t').next().unwrap_or(l).to_string())
            .collect()
    }
}

impl<S: Into<String>> FromIterator<S> for VariableSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        VariableSet(iter.into_iter().map(Into::into).collect())
    }
}

/// Observations × variables of normalized expression levels.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpressionMatrix {
    observation_ids: Vec<String>,
    variable_ids: Vec<String>,
    values: Array2<f64>,
    missing: Array2<bool>,
}

impl ExpressionMatrix {
    /// Builds a matrix, checking identifier uniqueness, shape and finiteness.
    /// Values under the missing mask are ignored and stored as 0.
    pub fn new(
        observation_ids: Vec<String>,
        variable_ids: Vec<String>,
        mut values: Array2<f64>,
        missing: Array2<bool>,
    ) -> Result<Self> {
        let (n, m) = (observation_ids.len(), variable_ids.len());
        if n == 0 || m == 0 {
            return Err(ExpcaError::Dimension(format!(
                "matrix needs at least one observation and one variable, got {n}×{m}"
            )));
        }
        if values.dim() != (n, m) || missing.dim() != (n, m) {
            return Err(ExpcaError::Dimension(format!(
                "values {:?} and mask {:?} must both be {n}×{m}",
                values.dim(),
                missing.dim()
            )));
        }
        check_unique(&observation_ids, "observation")?;
        check_unique(&variable_ids, "variable")?;
        for ((i, j), v) in values.indexed_iter_mut() {
            if missing[(i, j)] {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(ExpcaError::NonFinite { row: i, col: j });
            }
        }
        Ok(Self {
            observation_ids,
            variable_ids,
            values,
            missing,
        })
    }

    /// Fully observed matrix.
    pub fn from_values(observation_ids: Vec<String>, variable_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        let missing = Array2::from_elem(values.dim(), false);
        Self::new(observation_ids, variable_ids, values, missing)
    }

    pub fn observation_ids(&self) -> &[String] {
        &self.observation_ids
    }

    pub fn variable_ids(&self) -> &[String] {
        &self.variable_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn missing(&self) -> &Array2<bool> {
        &self.missing
    }

    pub fn n_observations(&self) -> usize {
        self.observation_ids.len()
    }

    pub fn n_variables(&self) -> usize {
        self.variable_ids.len()
    }

    /// Keeps only the listed variables, in the given order. Unknown IDs are an error.
    pub fn select_variables(&self, ids: &[String]) -> Result<Self> {
        let index = index_of(&self.variable_ids);
        let cols = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| ExpcaError::Dimension(format!("variable `{id}` not in matrix")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = self.n_observations();
        let values = Array2::from_shape_fn((n, cols.len()), |(i, c)| self.values[(i, cols[c])]);
        let missing = Array2::from_shape_fn((n, cols.len()), |(i, c)| self.missing[(i, cols[c])]);
        Self::new(self.observation_ids.clone(), ids.to_vec(), values, missing)
    }
}

fn index_of(ids: &[String]) -> HashMap<&str, usize> {
    ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
}

/// Parses a tab-separated matrix: header of observation IDs, first column of
/// variable IDs, decimal cells, empty or `NA` for missing.
pub fn parse_matrix(text: &str) -> Result<ExpressionMatrix> {
    let mut lines = numbered_lines(text);
    let (header_line, header) = lines
        .next()
        .ok_or_else(|| ExpcaError::parse(1, 1, "empty matrix file"))?;
    let observation_ids: Vec<String> = header.split('\t').skip(1).map(|s| s.trim().to_string()).collect();
    if observation_ids.is_empty() {
        return Err(ExpcaError::parse(header_line, 2, "header has no observation columns"));
    }
    let mut seen = HashSet::new();
    for (c, id) in observation_ids.iter().enumerate() {
        if id.is_empty() {
            return Err(ExpcaError::parse(header_line, c + 2, "empty observation id"));
        }
        if !seen.insert(id.as_str()) {
            return Err(ExpcaError::parse(
                header_line,
                c + 2,
                format!("duplicate observation id `{id}`"),
            ));
        }
    }

    let n = observation_ids.len();
    let mut variable_ids = Vec::new();
    let mut seen_vars: HashMap<String, usize> = HashMap::new();
    // variable-major while reading, transposed at the end
    let mut cells: Vec<f64> = Vec::new();
    let mut absent: Vec<bool> = Vec::new();
    for (line_no, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != n + 1 {
            return Err(ExpcaError::parse(
                line_no,
                fields.len().min(n + 1) + 1,
                format!("expected {} fields, found {}", n + 1, fields.len()),
            ));
        }
        let id = fields[0].trim();
        if id.is_empty() {
            return Err(ExpcaError::parse(line_no, 1, "empty variable id"));
        }
        if let Some(first) = seen_vars.insert(id.to_string(), line_no) {
            return Err(ExpcaError::parse(
                line_no,
                1,
                format!("duplicate variable id `{id}` (first seen on line {first})"),
            ));
        }
        for (c, cell) in fields[1..].iter().enumerate() {
            if is_missing_marker(cell) {
                cells.push(0.0);
                absent.push(true);
                continue;
            }
            let v: f64 = cell
                .trim()
                .parse()
                .map_err(|_| ExpcaError::parse(line_no, c + 2, format!("non-numeric cell `{}`", cell.trim())))?;
            if !v.is_finite() {
                return Err(ExpcaError::parse(
                    line_no,
                    c + 2,
                    format!("non-finite cell `{}`", cell.trim()),
                ));
            }
            cells.push(v);
            absent.push(false);
        }
        variable_ids.push(id.to_string());
    }
    if variable_ids.is_empty() {
        return Err(ExpcaError::parse(header_line + 1, 1, "matrix has no variable rows"));
    }
    let m = variable_ids.len();
    let values = Array2::from_shape_vec((m, n), cells)
        .expect("row lengths checked")
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    let missing = Array2::from_shape_vec((m, n), absent)
        .expect("row lengths checked")
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    ExpressionMatrix::new(observation_ids, variable_ids, values, missing)
}

/// Per-variable center of rotation.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceVector {
    variable_ids: Vec<String>,
    values: Vec<f64>,
}

impl ReferenceVector {
    pub fn new(variable_ids: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if variable_ids.len() != values.len() {
            return Err(ExpcaError::Reference(format!(
                "{} ids but {} values",
                variable_ids.len(),
                values.len()
            )));
        }
        check_unique(&variable_ids, "variable")?;
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(ExpcaError::Reference(format!(
                "non-finite reference for `{}`",
                variable_ids[j]
            )));
        }
        Ok(Self { variable_ids, values })
    }

    /// All-zero reference; centering with it only zero-fills missing cells.
    pub fn zeros(variable_ids: Vec<String>) -> Self {
        let values = vec![0.0; variable_ids.len()];
        Self { variable_ids, values }
    }

    /// Two tab-separated columns: variable_id, value.
    pub fn parse(text: &str) -> Result<Self> {
        let mut ids = Vec::new();
        let mut values = Vec::new();
        for (line_no, line) in numbered_lines(text) {
            if line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 2 {
                return Err(ExpcaError::parse(line_no, 1, "expected `variable_id<TAB>value`"));
            }
            let v: f64 = fields[1]
                .trim()
                .parse()
                .map_err(|_| ExpcaError::parse(line_no, 2, format!("non-numeric value `{}`", fields[1].trim())))?;
            ids.push(fields[0].trim().to_string());
            values.push(v);
        }
        Self::new(ids, values)
    }

    pub fn variable_ids(&self) -> &[String] {
        &self.variable_ids
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Reorders/subsets to `ids`; every requested id must be present.
    pub fn restrict(&self, ids: &[String]) -> Result<Self> {
        let index = index_of(&self.variable_ids);
        let values = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&j| self.values[j])
                    .ok_or_else(|| ExpcaError::Reference(format!("no reference value for `{id}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variable_ids: ids.to_vec(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReferencePolicy {
    GlobalMean,
    ControlGroup(String),
    ExternalVector(ReferenceVector),
}

/// Command-line form of a reference policy, before any external file is read.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PolicySpec {
    GlobalMean,
    Control(String),
    External(PathBuf),
}

impl FromStr for PolicySpec {
    type Err = ExpcaError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "global-mean" {
            return Ok(PolicySpec::GlobalMean);
        }
        if let Some(group) = s.strip_prefix("control:") {
            if group.is_empty() {
                return Err(ExpcaError::InvalidArgument("empty control group".into()));
            }
            return Ok(PolicySpec::Control(group.to_string()));
        }
        if let Some(path) = s.strip_prefix("external:") {
            if path.is_empty() {
                return Err(ExpcaError::InvalidArgument("empty external reference path".into()));
            }
            return Ok(PolicySpec::External(PathBuf::from(path)));
        }
        Err(ExpcaError::InvalidArgument(format!(
            "unknown reference policy `{s}` (expected global-mean, control:<group> or external:<path>)"
        )))
    }
}

/// Observation → group assignments plus the reference policy.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyDesign {
    assignments: IndexMap<String, String>,
    policy: ReferencePolicy,
}

impl StudyDesign {
    pub fn new<I, A, B>(assignments: I, policy: ReferencePolicy) -> Result<Self>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut map = IndexMap::new();
        for (obs, group) in assignments {
            let (obs, group) = (obs.into(), group.into());
            if group.is_empty() {
                return Err(ExpcaError::Design(format!("empty group label for `{obs}`")));
            }
            if map.insert(obs.clone(), group).is_some() {
                return Err(ExpcaError::Design(format!("duplicate observation `{obs}`")));
            }
        }
        Ok(Self {
            assignments: map,
            policy,
        })
    }

    pub fn with_policy(mut self, policy: ReferencePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn policy(&self) -> &ReferencePolicy {
        &self.policy
    }

    pub fn group_of(&self, observation: &str) -> Option<&str> {
        self.assignments.get(observation).map(String::as_str)
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&str, &str)> {
        self.assignments.iter().map(|(o, g)| (o.as_str(), g.as_str()))
    }

    /// Group labels in order of first appearance.
    pub fn groups(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.assignments
            .values()
            .filter(|g| seen.insert(g.as_str()))
            .map(String::as_str)
            .collect()
    }

    /// Observations of `group`, in design order.
    pub fn members(&self, group: &str) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, g)| g.as_str() == group)
            .map(|(o, _)| o.as_str())
            .collect()
    }

    /// Checks that every observation of `observation_ids` is assigned and that a
    /// control group, if any, has at least one of them.
    pub fn validate(&self, observation_ids: &[String]) -> Result<()> {
        if let Some(o) = observation_ids
            .iter()
            .find(|o| !self.assignments.contains_key(o.as_str()))
        {
            return Err(ExpcaError::Design(format!("observation `{o}` has no group")));
        }
        if let ReferencePolicy::ControlGroup(g) = &self.policy {
            let present = observation_ids.iter().any(|o| self.group_of(o) == Some(g.as_str()));
            if !present {
                return Err(ExpcaError::Design(format!("control group `{g}` has no observations")));
            }
        }
        Ok(())
    }
}

/// Parses a design table of `observation_id<TAB>group` rows.
/// The policy starts as global mean; set it with [`StudyDesign::with_policy`].
pub fn parse_design(text: &str, has_header: bool) -> Result<StudyDesign> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut rows: HashMap<String, usize> = HashMap::new();
    for (k, (line_no, line)) in numbered_lines(text).enumerate() {
        if has_header && k == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(ExpcaError::parse(
                line_no,
                fields.len().min(2) + 1,
                "expected `observation_id<TAB>group`",
            ));
        }
        if fields[0].is_empty() {
            return Err(ExpcaError::parse(line_no, 1, "empty observation id"));
        }
        if fields[1].is_empty() {
            return Err(ExpcaError::parse(line_no, 2, "empty group label"));
        }
        if let Some(first) = rows.insert(fields[0].to_string(), line_no) {
            return Err(ExpcaError::parse(
                line_no,
                1,
                format!("duplicate observation `{}` (first on line {first})", fields[0]),
            ));
        }
        pairs.push((fields[0].to_string(), fields[1].to_string()));
    }
    StudyDesign::new(pairs, ReferencePolicy::GlobalMean)
}

/// Per-variable reference dictated by the design's policy. Missing cells are
/// excluded from the means.
pub fn compute_reference(matrix: &ExpressionMatrix, design: &StudyDesign) -> Result<ReferenceVector> {
    let rows: Vec<usize> = match design.policy() {
        ReferencePolicy::ExternalVector(r) => return r.restrict(matrix.variable_ids()),
        ReferencePolicy::GlobalMean => (0..matrix.n_observations()).collect(),
        ReferencePolicy::ControlGroup(g) => {
            let rows: Vec<usize> = matrix
                .observation_ids()
                .iter()
                .enumerate()
                .filter(|(_, o)| design.group_of(o) == Some(g.as_str()))
                .map(|(i, _)| i)
                .collect();
            if rows.is_empty() {
                return Err(ExpcaError::Design(format!("control group `{g}` has no observations")));
            }
            rows
        }
    };
    let values = matrix.values();
    let missing = matrix.missing();
    let means = (0..matrix.n_variables())
        .map(|j| {
            let (sum, count) = rows
                .iter()
                .filter(|&&i| !missing[(i, j)])
                .fold((0.0, 0usize), |(s, c), &i| (s + values[(i, j)], c + 1));
            if count == 0 {
                Err(ExpcaError::Reference(format!(
                    "variable `{}` has no observed value among reference observations",
                    matrix.variable_ids()[j]
                )))
            } else {
                Ok(sum / count as f64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    ReferenceVector::new(matrix.variable_ids().to_vec(), means)
}

/// Matrix with the reference subtracted and missing cells set to 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredMatrix {
    observation_ids: Vec<String>,
    variable_ids: Vec<String>,
    values: Array2<f64>,
    missing: Array2<bool>,
    effective_counts: Vec<usize>,
}

impl CenteredMatrix {
    pub fn observation_ids(&self) -> &[String] {
        &self.observation_ids
    }

    pub fn variable_ids(&self) -> &[String] {
        &self.variable_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    /// Cells that were missing in the source, or variables absent after alignment.
    pub fn missing(&self) -> &Array2<bool> {
        &self.missing
    }

    /// Number of present items per observation (m_i).
    pub fn effective_counts(&self) -> &[usize] {
        &self.effective_counts
    }

    pub fn n_observations(&self) -> usize {
        self.observation_ids.len()
    }

    pub fn n_variables(&self) -> usize {
        self.variable_ids.len()
    }

    /// Re-wraps the centered values as an expression matrix with the same mask.
    pub fn to_expression(&self) -> ExpressionMatrix {
        ExpressionMatrix {
            observation_ids: self.observation_ids.clone(),
            variable_ids: self.variable_ids.clone(),
            values: self.values.clone(),
            missing: self.missing.clone(),
        }
    }
}

fn count_present(missing: &Array2<bool>) -> Vec<usize> {
    missing
        .rows()
        .into_iter()
        .map(|row| row.iter().filter(|&&x| !x).count())
        .collect()
}

pub fn center(matrix: &ExpressionMatrix, reference: &ReferenceVector) -> Result<CenteredMatrix> {
    if reference.variable_ids() != matrix.variable_ids() {
        return Err(ExpcaError::Dimension(
            "reference variable ids do not match the matrix".into(),
        ));
    }
    let r = reference.values();
    let missing = matrix.missing().clone();
    let mut values = matrix.values().clone();
    for ((i, j), v) in values.indexed_iter_mut() {
        *v = if missing[(i, j)] { 0.0 } else { *v - r[j] };
    }
    Ok(CenteredMatrix {
        observation_ids: matrix.observation_ids().to_vec(),
        variable_ids: matrix.variable_ids().to_vec(),
        effective_counts: count_present(&missing),
        values,
        missing,
    })
}

/// Reorders/subsets columns to `target_ids`. Variables the matrix lacks become
/// zero columns that do not count toward m_i.
pub fn align_variables(matrix: &CenteredMatrix, target_ids: &[String]) -> Result<CenteredMatrix> {
    check_unique(target_ids, "variable")?;
    let index = index_of(&matrix.variable_ids);
    let source: Vec<Option<usize>> = target_ids.iter().map(|id| index.get(id.as_str()).copied()).collect();
    if source.iter().all(Option::is_none) {
        return Err(ExpcaError::Dimension(
            "no variables shared with the target ordering".into(),
        ));
    }
    let n = matrix.n_observations();
    let shape = (n, target_ids.len());
    let values = Array2::from_shape_fn(shape, |(i, c)| source[c].map_or(0.0, |j| matrix.values[(i, j)]));
    let missing = Array2::from_shape_fn(shape, |(i, c)| source[c].is_none_or(|j| matrix.missing[(i, j)]));
    Ok(CenteredMatrix {
        observation_ids: matrix.observation_ids.clone(),
        variable_ids: target_ids.to_vec(),
        effective_counts: count_present(&missing),
        values,
        missing,
    })
}
