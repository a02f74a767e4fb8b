//! Training matrix construction, axis fitting and the shareable `.axes` model file.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::data::{CenteredMatrix, ReferenceVector, StudyDesign, VariableSet};
use crate::decomposition::{self, canonical_signs, svd, SvdFactors};
use crate::error::{ExpcaError, Result};
use crate::format;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "expca-model";
const ORTHONORMALITY_TOLERANCE: f64 = 1e-8;

/// Which groups form the training matrix and how.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingSpec {
    /// Empty means every group of the design, in design order.
    pub included_groups: Vec<String>,
    /// Groups contributing one row per observation instead of their mean.
    pub raw_groups: Vec<String>,
    pub variable_filter: Option<VariableSet>,
}

impl TrainingSpec {
    /// All groups of `design` except `excluded`, in design order.
    pub fn excluding(design: &StudyDesign, excluded: &[String]) -> Self {
        let included_groups = design
            .groups()
            .into_iter()
            .filter(|g| !excluded.iter().any(|e| e == g))
            .map(str::to_string)
            .collect();
        TrainingSpec {
            included_groups,
            ..Default::default()
        }
    }

    pub fn with_raw_groups(mut self, raw: Vec<String>) -> Self {
        self.raw_groups = raw;
        self
    }

    pub fn with_filter(mut self, filter: Option<VariableSet>) -> Self {
        self.variable_filter = filter;
        self
    }
}

/// The designed matrix T on which the axes are fitted.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    unit_labels: Vec<String>,
    variable_ids: Vec<String>,
    values: Array2<f64>,
}

impl TrainingMatrix {
    pub fn new(unit_labels: Vec<String>, variable_ids: Vec<String>, values: Array2<f64>) -> Result<Self> {
        if unit_labels.is_empty() || variable_ids.is_empty() {
            return Err(ExpcaError::Degenerate("training matrix is empty".into()));
        }
        if values.dim() != (unit_labels.len(), variable_ids.len()) {
            return Err(ExpcaError::Dimension(format!(
                "training values {:?} for {} units × {} variables",
                values.dim(),
                unit_labels.len(),
                variable_ids.len()
            )));
        }
        if let Some(((i, j), _)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(ExpcaError::NonFinite { row: i, col: j });
        }
        Ok(Self {
            unit_labels,
            variable_ids,
            values,
        })
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.unit_labels
    }

    pub fn variable_ids(&self) -> &[String] {
        &self.variable_ids
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn n_units(&self) -> usize {
        self.unit_labels.len()
    }
}

/// One row per included group (the mean of its centered rows), or one row per
/// observation for raw groups. Rows follow `included_groups`; raw observations
/// follow matrix order.
pub fn build_training(centered: &CenteredMatrix, design: &StudyDesign, spec: &TrainingSpec) -> Result<TrainingMatrix> {
    let design_groups = design.groups();
    let included: Vec<String> = if spec.included_groups.is_empty() {
        design_groups.iter().map(|g| g.to_string()).collect()
    } else {
        spec.included_groups.clone()
    };
    if included.is_empty() {
        return Err(ExpcaError::Design("no groups to train on".into()));
    }
    let mut seen = HashSet::new();
    for g in &included {
        if !design_groups.contains(&g.as_str()) {
            return Err(ExpcaError::Design(format!("group `{g}` is not in the design")));
        }
        if !seen.insert(g.as_str()) {
            return Err(ExpcaError::Design(format!("group `{g}` listed twice")));
        }
    }
    if let Some(raw) = spec.raw_groups.iter().find(|r| !included.contains(r)) {
        return Err(ExpcaError::Design(format!(
            "raw group `{raw}` is not among the included groups"
        )));
    }

    let columns: Vec<usize> = match &spec.variable_filter {
        None => (0..centered.n_variables()).collect(),
        Some(filter) => centered
            .variable_ids()
            .iter()
            .enumerate()
            .filter(|(_, id)| filter.contains(id))
            .map(|(j, _)| j)
            .collect(),
    };
    if columns.is_empty() {
        return Err(ExpcaError::Degenerate("variable filter leaves no variables".into()));
    }
    let variable_ids: Vec<String> = columns.iter().map(|&j| centered.variable_ids()[j].clone()).collect();

    let x = centered.values();
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for g in &included {
        let members: Vec<usize> = centered
            .observation_ids()
            .iter()
            .enumerate()
            .filter(|(_, o)| design.group_of(o) == Some(g.as_str()))
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(ExpcaError::Design(format!(
                "group `{g}` has no observations in the matrix"
            )));
        }
        if spec.raw_groups.contains(g) {
            for &i in &members {
                labels.push(centered.observation_ids()[i].clone());
                rows.push(columns.iter().map(|&j| x[(i, j)]).collect());
            }
        } else {
            let count = members.len() as f64;
            let mean = columns
                .iter()
                .map(|&j| members.iter().map(|&i| x[(i, j)]).sum::<f64>() / count)
                .collect();
            labels.push(g.clone());
            rows.push(mean);
        }
    }
    let m = variable_ids.len();
    let values = Array2::from_shape_vec((rows.len(), m), rows.concat()).expect("rows have m entries");
    TrainingMatrix::new(labels, variable_ids, values)
}

/// Fitted axes: rotation, singular values, training-unit vectors and the
/// reference that defines the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct AxesModel {
    variable_ids: Vec<String>,
    reference: ReferenceVector,
    right: Array2<f64>,
    singulars: Vec<f64>,
    left: Array2<f64>,
    unit_labels: Vec<String>,
    format_version: u32,
}

pub fn fit(training: &TrainingMatrix, reference: &ReferenceVector) -> Result<AxesModel> {
    fit_with_rank(training, reference, None)
}

/// Like [`fit`], keeping at most `max_rank` components.
pub fn fit_with_rank(
    training: &TrainingMatrix,
    reference: &ReferenceVector,
    max_rank: Option<usize>,
) -> Result<AxesModel> {
    if training.values().iter().all(|&v| v == 0.0) {
        return Err(ExpcaError::Degenerate("training matrix is all zeros".into()));
    }
    let reference = reference.restrict(training.variable_ids())?;
    let factors = canonical_signs(svd(training.values().view(), max_rank)?);
    Ok(AxesModel {
        variable_ids: training.variable_ids().to_vec(),
        reference,
        right: factors.right,
        singulars: factors.singulars,
        left: factors.left,
        unit_labels: training.unit_labels().to_vec(),
        format_version: FORMAT_VERSION,
    })
}

impl AxesModel {
    pub fn variable_ids(&self) -> &[String] {
        &self.variable_ids
    }

    pub fn reference(&self) -> &ReferenceVector {
        &self.reference
    }

    /// V_T, m×k.
    pub fn right(&self) -> &Array2<f64> {
        &self.right
    }

    /// D_T.
    pub fn singulars(&self) -> &[f64] {
        &self.singulars
    }

    /// U_T, n_T×k.
    pub fn left(&self) -> &Array2<f64> {
        &self.left
    }

    pub fn unit_labels(&self) -> &[String] {
        &self.unit_labels
    }

    pub fn n_training(&self) -> usize {
        self.unit_labels.len()
    }

    pub fn n_variables(&self) -> usize {
        self.variable_ids.len()
    }

    pub fn k(&self) -> usize {
        self.singulars.len()
    }

    pub fn format_version(&self) -> u32 {
        self.format_version
    }

    pub fn factors(&self) -> SvdFactors {
        let (n, m) = (self.n_training(), self.n_variables());
        SvdFactors {
            left: self.left.clone(),
            singulars: self.singulars.clone(),
            right: self.right.clone(),
            rank_tolerance: 1e-12 * n.max(m) as f64 * self.singulars.first().copied().unwrap_or(0.0),
        }
    }

    /// Sign-unifies this model's components against another fit over the same variables.
    pub fn align_signs_to(&self, reference: &AxesModel) -> Result<AxesModel> {
        if self.variable_ids != reference.variable_ids {
            return Err(ExpcaError::Dimension(
                "models were fitted on different variables".into(),
            ));
        }
        let f = decomposition::align_signs(self.factors(), &reference.factors())?;
        Ok(AxesModel {
            right: f.right,
            left: f.left,
            ..self.clone()
        })
    }

    /// Renders the `.axes` text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{MAGIC} v{}\n", self.format_version));
        out.push_str(&format!(
            "n_T {}  k {}  m {}\n",
            self.n_training(),
            self.k(),
            self.n_variables()
        ));
        out.push_str("#reference\n");
        for (id, v) in self.variable_ids.iter().zip(self.reference.values()) {
            out.push_str(&format!("{id}\t{}\n", format::float(*v)));
        }
        out.push_str("#singulars\n");
        for &d in &self.singulars {
            out.push_str(&format::float(d));
            out.push('\n');
        }
        out.push_str("#right\n");
        for row in self.right.rows() {
            out.push_str(&format::float_row(row.iter().copied()));
            out.push('\n');
        }
        out.push_str("#left\n");
        for (label, row) in self.unit_labels.iter().zip(self.left.rows()) {
            out.push_str(label);
            if !row.is_empty() {
                out.push('\t');
                out.push_str(&format::float_row(row.iter().copied()));
            }
            out.push('\n');
        }
        out
    }

    /// Parses and validates the `.axes` text format.
    pub fn from_text(text: &str) -> Result<AxesModel> {
        let mut lines = text.lines().map(|l| l.trim_end_matches('\r'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| ExpcaError::ModelFormat(format!("truncated file, expected {what}")))
        };

        let magic = next("version line")?;
        let version = magic
            .strip_prefix(MAGIC)
            .and_then(|rest| rest.trim().strip_prefix('v'))
            .and_then(|v| v.parse::<u32>().ok())
            .ok_or_else(|| ExpcaError::ModelFormat(format!("bad version line `{magic}`")))?;
        if version != FORMAT_VERSION {
            return Err(ExpcaError::ModelVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }

        let dims = next("dimension line")?;
        let tokens: Vec<&str> = dims.split_whitespace().collect();
        let (n_t, k, m) = match tokens.as_slice() {
            ["n_T", n, "k", k, "m", m] => (parse_usize(n)?, parse_usize(k)?, parse_usize(m)?),
            _ => return Err(ExpcaError::ModelFormat(format!("bad dimension line `{dims}`"))),
        };
        if n_t == 0 || m == 0 || k == 0 || k > n_t.min(m) {
            return Err(ExpcaError::ModelFormat(format!(
                "inconsistent dimensions n_T={n_t} k={k} m={m}"
            )));
        }

        expect_section(next("#reference")?, "#reference")?;
        let mut variable_ids = Vec::with_capacity(m);
        let mut reference = Vec::with_capacity(m);
        for _ in 0..m {
            let line = next("reference row")?;
            let (id, value) = line
                .split_once('\t')
                .ok_or_else(|| ExpcaError::ModelFormat(format!("bad reference row `{line}`")))?;
            variable_ids.push(id.to_string());
            reference.push(parse_float(value)?);
        }
        let reference = ReferenceVector::new(variable_ids.clone(), reference)
            .map_err(|e| ExpcaError::CorruptModel(e.to_string()))?;

        expect_section(next("#singulars")?, "#singulars")?;
        let singulars = (0..k)
            .map(|_| next("singular value").and_then(parse_float))
            .collect::<Result<Vec<_>>>()?;

        expect_section(next("#right")?, "#right")?;
        let mut right = Vec::with_capacity(m * k);
        for _ in 0..m {
            right.extend(parse_floats(next("right row")?, k)?);
        }

        expect_section(next("#left")?, "#left")?;
        let mut unit_labels = Vec::with_capacity(n_t);
        let mut left = Vec::with_capacity(n_t * k);
        for _ in 0..n_t {
            let line = next("left row")?;
            let (label, rest) = line
                .split_once('\t')
                .ok_or_else(|| ExpcaError::ModelFormat(format!("bad left row `{line}`")))?;
            unit_labels.push(label.to_string());
            left.extend(parse_floats(rest, k)?);
        }
        if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
            return Err(ExpcaError::ModelFormat(format!("unexpected trailing line `{extra}`")));
        }

        let model = AxesModel {
            variable_ids,
            reference,
            right: Array2::from_shape_vec((m, k), right).expect("counted"),
            singulars,
            left: Array2::from_shape_vec((n_t, k), left).expect("counted"),
            unit_labels,
            format_version: version,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        if self.singulars.iter().any(|&d| d < 0.0) {
            return Err(ExpcaError::CorruptModel("negative singular value".into()));
        }
        if self.singulars.windows(2).any(|w| w[0] < w[1]) {
            return Err(ExpcaError::CorruptModel("singular values not sorted".into()));
        }
        for (name, a) in [("right", &self.right), ("left", &self.left)] {
            let err = orthonormality_error(a.view());
            if err > ORTHONORMALITY_TOLERANCE {
                return Err(ExpcaError::CorruptModel(format!(
                    "{name} vectors deviate from orthonormality by {err:e}"
                )));
            }
        }
        Ok(())
    }
}

fn orthonormality_error(a: ArrayView2<'_, f64>) -> f64 {
    let gram = a.t().dot(&a);
    gram.indexed_iter()
        .map(|((i, j), &g)| (g - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max)
}

fn expect_section(line: &str, name: &str) -> Result<()> {
    if line.trim() == name {
        Ok(())
    } else {
        Err(ExpcaError::ModelFormat(format!("expected `{name}`, found `{line}`")))
    }
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| ExpcaError::ModelFormat(format!("bad integer `{s}`")))
}

fn parse_float(s: &str) -> Result<f64> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| ExpcaError::ModelFormat(format!("bad number `{s}`")))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExpcaError::CorruptModel(format!("non-finite value `{s}`")))
    }
}

fn parse_floats(line: &str, expected: usize) -> Result<Vec<f64>> {
    let values = line.split('\t').map(parse_float).collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(ExpcaError::ModelFormat(format!(
            "expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Writes the model through a temporary file renamed into place.
/// Returns the number of bytes written.
pub fn save_model(model: &AxesModel, destination: &Path) -> Result<usize> {
    write_atomic(destination, model.to_text().as_bytes())
}

pub fn load_model(source: &Path) -> Result<AxesModel> {
    AxesModel::from_text(&fs::read_to_string(source)?)
}

/// Writes `bytes` to a sibling temporary file and renames it over `destination`.
pub fn write_atomic(destination: &Path, bytes: &[u8]) -> Result<usize> {
    let file_name = destination
        .file_name()
        .ok_or_else(|| ExpcaError::InvalidArgument(format!("`{}` is not a file path", destination.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(file_name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = destination.with_file_name(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, destination)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{center, ReferencePolicy};
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    fn centered(obs: &[&str], vars: &[&str], values: Array2<f64>) -> CenteredMatrix {
        let m = crate::data::ExpressionMatrix::from_values(ids(obs), ids(vars), values).unwrap();
        center(&m, &ReferenceVector::zeros(ids(vars))).unwrap()
    }

    fn design(pairs: &[(&str, &str)]) -> StudyDesign {
        StudyDesign::new(pairs.iter().copied(), ReferencePolicy::GlobalMean).unwrap()
    }

    #[test]
    fn group_mean_rows() {
        let c = centered(&["o1", "o2"], &["a", "b"], array![[1.0, 3.0], [3.0, 1.0]]);
        let d = design(&[("o1", "A"), ("o2", "A")]);
        let t = build_training(&c, &d, &TrainingSpec::default()).unwrap();
        assert_eq!(t.values(), &array![[2.0, 2.0]]);
        assert_eq!(t.unit_labels(), ids(&["A"]).as_slice());
    }

    #[test]
    fn raw_group_rows() {
        let c = centered(
            &["o1", "o2", "o3"],
            &["a", "b"],
            array![[1.0, 3.0], [3.0, 1.0], [5.0, 5.0]],
        );
        let d = design(&[("o1", "A"), ("o2", "A"), ("o3", "B")]);
        let spec = TrainingSpec::default().with_raw_groups(ids(&["A"]));
        let t = build_training(&c, &d, &spec).unwrap();
        assert_eq!(t.unit_labels(), ids(&["o1", "o2", "B"]).as_slice());
        assert_eq!(t.values(), &array![[1.0, 3.0], [3.0, 1.0], [5.0, 5.0]]);
    }

    #[test]
    fn excluded_group_and_filter() {
        let c = centered(
            &["o1", "o2"],
            &["a", "b", "c"],
            array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]],
        );
        let d = design(&[("o1", "A"), ("o2", "B")]);
        let spec = TrainingSpec::excluding(&d, &ids(&["B"])).with_filter(Some(["c", "a"].into_iter().collect()));
        let t = build_training(&c, &d, &spec).unwrap();
        assert_eq!(t.unit_labels(), ids(&["A"]).as_slice());
        assert_eq!(t.variable_ids(), ids(&["a", "c"]).as_slice());
        assert_eq!(t.values(), &array![[1.0, 3.0]]);
    }

    #[test]
    fn training_errors() {
        let c = centered(&["o1"], &["a"], array![[1.0]]);
        let d = design(&[("o1", "A"), ("o9", "Z")]);
        let missing_group = TrainingSpec {
            included_groups: ids(&["Q"]),
            ..Default::default()
        };
        assert!(build_training(&c, &d, &missing_group).is_err());
        let no_obs = TrainingSpec {
            included_groups: ids(&["Z"]),
            ..Default::default()
        };
        assert!(build_training(&c, &d, &no_obs).is_err());
        let bad_raw = TrainingSpec {
            included_groups: ids(&["A"]),
            raw_groups: ids(&["Z"]),
            ..Default::default()
        };
        assert!(build_training(&c, &d, &bad_raw).is_err());
        let empty_filter = TrainingSpec::default().with_filter(Some(VariableSet::new()));
        assert!(build_training(&c, &design(&[("o1", "A")]), &empty_filter).is_err());
    }

    fn rank_one_model() -> AxesModel {
        let t = TrainingMatrix::new(
            ids(&["g1", "g2"]),
            ids(&["a", "b", "c"]),
            array![[1.0, 0.0, 1.0], [-1.0, 0.0, -1.0]],
        )
        .unwrap();
        fit(&t, &ReferenceVector::zeros(ids(&["a", "b", "c"]))).unwrap()
    }

    #[test]
    fn fit_rank_one() {
        let model = rank_one_model();
        assert_abs_diff_eq!(model.singulars()[0], 2.0, epsilon = 1e-12);
        assert!(model.singulars()[1] < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for (j, want) in [h, 0.0, h].into_iter().enumerate() {
            assert_abs_diff_eq!(model.right()[(j, 0)], want, epsilon = 1e-12);
        }
        assert_eq!(model.n_training(), 2);
        assert_eq!(model.format_version(), 1);
    }

    #[test]
    fn fit_single_row() {
        let t = TrainingMatrix::new(ids(&["g"]), ids(&["a", "b"]), array![[-3.0, 4.0]]).unwrap();
        let model = fit(&t, &ReferenceVector::zeros(ids(&["a", "b"]))).unwrap();
        assert_eq!(model.k(), 1);
        assert_abs_diff_eq!(model.singulars()[0], 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(model.right()[(0, 0)], -0.6, epsilon = 1e-14);
        assert_abs_diff_eq!(model.right()[(1, 0)], 0.8, epsilon = 1e-14);
    }

    #[test]
    fn fit_rejects_zero_training() {
        let t = TrainingMatrix::new(ids(&["g"]), ids(&["a"]), array![[0.0]]).unwrap();
        assert!(matches!(
            fit(&t, &ReferenceVector::zeros(ids(&["a"]))),
            Err(ExpcaError::Degenerate(_))
        ));
    }

    #[test]
    fn text_round_trip_is_bit_exact() {
        let model = rank_one_model();
        let text = model.to_text();
        assert!(text.starts_with("expca-model v1\nn_T 2  k 2  m 3\n#reference\n"));
        let right_rows: Vec<&str> = text
            .split("#right\n")
            .nth(1)
            .unwrap()
            .split("#left")
            .next()
            .unwrap()
            .lines()
            .collect();
        assert_eq!(right_rows.len(), 3);
        assert!(right_rows.iter().all(|r| r.split('\t').count() == 2));

        let back = AxesModel::from_text(&text).unwrap();
        assert_eq!(back, model);
        for (a, b) in back.right().iter().zip(model.right()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn load_rejects_tampering() {
        let text = rank_one_model().to_text();
        let v99 = text.replacen("expca-model v1", "expca-model v99", 1);
        assert!(matches!(
            AxesModel::from_text(&v99),
            Err(ExpcaError::ModelVersion { found: 99, .. })
        ));

        let mut model = rank_one_model();
        model.right[(0, 0)] += 1e-3;
        assert!(matches!(
            AxesModel::from_text(&model.to_text()),
            Err(ExpcaError::CorruptModel(_))
        ));

        let truncated: String = text.lines().take(5).collect::<Vec<_>>().join("\n");
        assert!(matches!(
            AxesModel::from_text(&truncated),
            Err(ExpcaError::ModelFormat(_))
        ));
    }

    #[test]
    fn save_and_load_file() {
        let dir = std::env::temp_dir().join(format!("expca-axes-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.axes");
        let model = rank_one_model();
        let written = save_model(&model, &path).unwrap();
        assert_eq!(written, model.to_text().len());
        assert_eq!(load_model(&path).unwrap(), model);
        fs::remove_dir_all(&dir).unwrap();

        assert!(save_model(&model, Path::new("/nonexistent-dir/x/model.axes")).is_err());
    }
}
