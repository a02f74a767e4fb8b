//! File access, provenance headers and stage-tagged errors.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use expca_core::axes::write_atomic;
use expca_core::{
    compute_reference, parse_design, parse_matrix, AxesModel, ExpcaError, ExpressionMatrix, PolicySpec,
    ReferencePolicy, ReferenceVector, StudyDesign, VariableSet,
};
use sha2::{Digest, Sha256};

/// A failure tagged with the pipeline stage it came from.
#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub source: ExpcaError,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.source)
    }
}

pub type Outcome<T> = std::result::Result<T, StageError>;

pub trait Stage<T> {
    fn stage(self, stage: impl Into<String>) -> Outcome<T>;
}

impl<T> Stage<T> for expca_core::Result<T> {
    fn stage(self, stage: impl Into<String>) -> Outcome<T> {
        self.map_err(|source| StageError {
            stage: stage.into(),
            source,
        })
    }
}

pub fn read_text(path: &Path, what: &str) -> Outcome<String> {
    fs::read_to_string(path)
        .map_err(ExpcaError::from)
        .stage(format!("reading {what} `{}`", path.display()))
}

pub fn read_matrix(path: &Path) -> Outcome<ExpressionMatrix> {
    let text = read_text(path, "matrix")?;
    parse_matrix(&text).stage(format!("parsing matrix `{}`", path.display()))
}

pub fn read_variables(path: &Path) -> Outcome<VariableSet> {
    Ok(VariableSet::parse(&read_text(path, "variable list")?))
}

pub fn read_model(path: &Path) -> Outcome<(AxesModel, String)> {
    let bytes = fs::read(path)
        .map_err(ExpcaError::from)
        .stage(format!("reading model `{}`", path.display()))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| ExpcaError::ModelFormat("model file is not UTF-8".into()))
        .stage(format!("loading model `{}`", path.display()))?;
    let model = AxesModel::from_text(&text).stage(format!("loading model `{}`", path.display()))?;
    Ok((model, hex::encode(Sha256::digest(&bytes))))
}

/// Design file plus the reference policy, reading an external vector if named.
pub fn read_design(path: &Path, has_header: bool, policy: &PolicySpec) -> Outcome<StudyDesign> {
    let text = read_text(path, "design")?;
    let design = parse_design(&text, has_header).stage(format!("parsing design `{}`", path.display()))?;
    Ok(design.with_policy(resolve_policy(policy)?))
}

pub fn resolve_policy(policy: &PolicySpec) -> Outcome<ReferencePolicy> {
    Ok(match policy {
        PolicySpec::GlobalMean => ReferencePolicy::GlobalMean,
        PolicySpec::Control(g) => ReferencePolicy::ControlGroup(g.clone()),
        PolicySpec::External(p) => {
            let text = read_text(p, "reference")?;
            ReferencePolicy::ExternalVector(
                ReferenceVector::parse(&text).stage(format!("parsing reference `{}`", p.display()))?,
            )
        }
    })
}

pub fn reference_for(matrix: &ExpressionMatrix, design: &StudyDesign) -> Outcome<ReferenceVector> {
    design
        .validate(matrix.observation_ids())
        .stage("checking design against matrix")?;
    compute_reference(matrix, design).stage("computing reference")
}

/// The invocation as one line, for output headers.
pub fn command_line() -> String {
    let mut args = std::env::args();
    let program = args
        .next()
        .map(|p| {
            Path::new(&p)
                .file_name()
                .map_or(p.clone(), |f| f.to_string_lossy().into_owned())
        })
        .unwrap_or_else(|| "expca".into());
    std::iter::once(program).chain(args).collect::<Vec<_>>().join(" ")
}

pub fn provenance() -> Vec<String> {
    vec![format!("command: {}", command_line())]
}

/// Writes `body` to `out` atomically, or to stdout when no path is given.
pub fn emit(out: Option<&PathBuf>, body: &str) -> Outcome<()> {
    match out {
        Some(path) => write_atomic(path, body.as_bytes())
            .map(|_| ())
            .stage(format!("writing `{}`", path.display())),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(body.as_bytes())
                .map_err(ExpcaError::from)
                .stage("writing to stdout")
        }
    }
}
