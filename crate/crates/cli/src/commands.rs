//! One function per subcommand.

use std::fmt::Write as _;
use std::path::Path;

use expca_core::scores::{classification_tsv, prepare_projection};
use expca_core::stats::{
    anova_tsv, enrich as enrich_keywords, enrichment_tsv, filter_positive, parse_annotation_pairs, parse_probe_table,
    select_top, two_way_anova, ward_cluster, AnnotationMap, Direction,
};
use expca_core::{
    biplot_table, build_training, center, classify as nearest_units, fit_with_rank, fluctuation as spread,
    observation_scores, save_model, scale_observation_scores, scale_variable_scores, variable_scores, AxesModel,
    ExpcaError, ExpressionMatrix, FluctuationMode, PolicySpec, ReferenceVector, ScoreSet, StudyDesign, TrainingSpec,
    VariableSet,
};

use crate::io::{
    emit, provenance, read_design, read_matrix, read_model, read_text, read_variables, reference_for, Outcome, Stage,
};
use crate::{
    AnovaArgs, BiplotArgs, ClassifyArgs, ClusterArgs, DirectionArg, EnrichArgs, FitArgs, FluctuationArgs, ModeArg,
    PlotArgs, ProjectArgs, ProjectionArgs, VariableFilterArgs,
};

const TOP_LARGEST: u64 = 500;
const TOP_SMALLEST: u64 = 100;

fn design_only(path: &Path, has_header: bool) -> Outcome<StudyDesign> {
    read_design(path, has_header, &PolicySpec::GlobalMean)
}

fn variable_filter(args: &VariableFilterArgs, design: &StudyDesign) -> Outcome<Option<VariableSet>> {
    if let Some(path) = &args.variables {
        return read_variables(path).map(Some);
    }
    let Some(path) = &args.anova else {
        return Ok(None);
    };
    let blocks = parse_probe_table(&read_text(path, "probe table")?)
        .stage(format!("parsing probe table `{}`", path.display()))?;
    let records = blocks
        .iter()
        .map(|b| two_way_anova(b, design).stage(format!("ANOVA of `{}`", b.variable_id)))
        .collect::<Outcome<Vec<_>>>()?;
    let positive = filter_positive(&records, args.threshold).stage("ANOVA filter")?;
    if positive.is_empty() {
        return Err(ExpcaError::Degenerate(format!(
            "no variable has p < {} in `{}`",
            args.threshold,
            path.display()
        )))
        .stage("ANOVA filter");
    }
    Ok(Some(positive))
}

fn check_groups(design: &StudyDesign, groups: &[String], flag: &str) -> Outcome<()> {
    let known = design.groups();
    match groups.iter().find(|g| !known.contains(&g.as_str())) {
        Some(g) => {
            Err(ExpcaError::Design(format!("{flag} `{g}` is not in the design"))).stage("building training matrix")
        }
        None => Ok(()),
    }
}

pub fn fit(args: FitArgs) -> Outcome<()> {
    let matrix = read_matrix(&args.matrix)?;
    let design = read_design(&args.design.design, args.design.design_header, &args.design.reference)?;
    let reference = reference_for(&matrix, &design)?;
    let centered = center(&matrix, &reference).stage("centering")?;

    check_groups(&design, &args.include, "--include-group")?;
    check_groups(&design, &args.exclude, "--exclude-group")?;
    let spec = if args.include.is_empty() {
        TrainingSpec::excluding(&design, &args.exclude)
    } else {
        TrainingSpec {
            included_groups: args.include.clone(),
            ..Default::default()
        }
    };
    let spec = spec
        .with_raw_groups(args.raw.clone())
        .with_filter(variable_filter(&args.filter, &design)?);
    let training = build_training(&centered, &design, &spec).stage("building training matrix")?;
    let max_rank = args.max_rank.map(|r| r as usize);
    let model = fit_with_rank(&training, &reference, max_rank).stage("fitting axes")?;
    save_model(&model, &args.out).stage(format!("writing `{}`", args.out.display()))?;
    eprintln!(
        "expca: fitted {} axes on {} training rows × {} variables",
        model.k(),
        model.n_training(),
        model.n_variables()
    );
    Ok(())
}

struct Projection {
    model: AxesModel,
    model_hash: String,
    raw: ScoreSet,
}

impl Projection {
    fn scaled(&self) -> Outcome<ScoreSet> {
        scale_observation_scores(&self.raw).stage("scaling scores")
    }

    fn comments(&self, model_path: &Path) -> Vec<String> {
        let mut c = provenance();
        c.push(format!("model: {} sha256 {}", model_path.display(), self.model_hash));
        c
    }
}

fn run_projection(args: &ProjectionArgs) -> Outcome<Projection> {
    let (model, model_hash) = read_model(&args.model)?;
    let matrix = read_matrix(&args.matrix)?;
    let reference: ReferenceVector = match (&args.reference, &args.design) {
        (Some(policy), Some(design)) => {
            let design = read_design(design, args.design_header, policy)?;
            reference_for(&matrix, &design)?
        }
        _ => model.reference().clone(),
    };
    let raw = projected(&matrix, &reference, &model)?;
    Ok(Projection { model, model_hash, raw })
}

fn projected(matrix: &ExpressionMatrix, reference: &ReferenceVector, model: &AxesModel) -> Outcome<ScoreSet> {
    let aligned = prepare_projection(matrix, reference, model).stage("aligning matrix to model")?;
    observation_scores(&aligned, model).stage("projecting")
}

pub fn project(args: ProjectArgs) -> Outcome<()> {
    let p = run_projection(&args.input)?;
    let scores = if args.raw { p.raw.clone() } else { p.scaled()? };
    emit(args.out.as_ref(), &scores.to_tsv(&p.comments(&args.input.model)))
}

pub fn classify(args: ClassifyArgs) -> Outcome<()> {
    let p = run_projection(&args.input)?;
    let results = nearest_units(&p.scaled()?, &p.model, args.axes as usize).stage("classifying")?;
    let mut comments = p.comments(&args.input.model);
    comments.push(format!("axes used: {}", args.axes));
    emit(args.out.as_ref(), &classification_tsv(&results, &comments))
}

pub fn anova(args: AnovaArgs) -> Outcome<()> {
    let design = design_only(&args.design, args.design_header)?;
    let blocks = parse_probe_table(&read_text(&args.probes, "probe table")?)
        .stage(format!("parsing probe table `{}`", args.probes.display()))?;
    let records = blocks
        .iter()
        .map(|b| two_way_anova(b, &design).stage(format!("ANOVA of `{}`", b.variable_id)))
        .collect::<Outcome<Vec<_>>>()?;
    let mut comments = provenance();
    comments.push(format!("threshold: {}", args.threshold));
    emit(args.out.as_ref(), &anova_tsv(&records, args.threshold, &comments))
}

pub fn enrich(args: EnrichArgs) -> Outcome<()> {
    let pairs = parse_annotation_pairs(&read_text(&args.annotations, "annotations")?)
        .stage(format!("parsing annotations `{}`", args.annotations.display()))?;
    let model = args.model.as_ref().map(|m| read_model(m)).transpose()?;
    let universe: Vec<String> = match (&args.universe, &model) {
        (Some(path), _) => read_variables(path)?.iter().map(str::to_string).collect(),
        (None, Some((m, _))) => m.variable_ids().to_vec(),
        (None, None) => {
            return Err(ExpcaError::InvalidArgument(
                "--universe is required with --selection".into(),
            ))
            .stage("choosing the universe")
        }
    };
    let mut comments = provenance();
    let selection: VariableSet = match (&args.selection, &model) {
        (Some(path), _) => read_variables(path)?,
        (None, Some((m, _))) => {
            let (direction, default_top) = match args.direction {
                DirectionArg::Largest => (Direction::Largest, TOP_LARGEST),
                DirectionArg::Smallest => (Direction::Smallest, TOP_SMALLEST),
            };
            let top = args.top.unwrap_or(default_top) as usize;
            comments.push(format!("selection: {top} {:?} on axis {}", args.direction, args.axis).to_lowercase());
            select_top(&variable_scores(m), args.axis as usize, direction, top).stage("selecting variables")?
        }
        (None, None) => unreachable!("clap requires --model or --selection"),
    };
    let in_universe: std::collections::HashSet<&str> = universe.iter().map(String::as_str).collect();
    let selection: VariableSet = selection.iter().filter(|v| in_universe.contains(v)).collect();
    let annotations = AnnotationMap::from_pairs(pairs.iter().map(|(v, k)| (v.as_str(), k.as_str())), &universe);
    comments.push(format!("universe: {}", universe.len()));
    comments.push(format!("selected: {}", selection.len()));
    let records = enrich_keywords(&annotations, universe.len() as u64, &selection).stage("enrichment")?;
    emit(args.out.as_ref(), &enrichment_tsv(&records, &comments))
}

pub fn cluster(args: ClusterArgs) -> Outcome<()> {
    let matrix = read_matrix(&args.matrix)?;
    let design = read_design(&args.design.design, args.design.design_header, &args.design.reference)?;
    let reference = reference_for(&matrix, &design)?;
    let centered = center(&matrix, &reference).stage("centering")?;
    let filter = variable_filter(&args.filter, &design)?;
    let dendrogram = ward_cluster(&centered, filter.as_ref()).stage("clustering")?;
    emit(args.out.as_ref(), &dendrogram.to_tsv(&provenance()))
}

pub fn biplot(args: BiplotArgs) -> Outcome<()> {
    let p = run_projection(&args.input)?;
    let vars = scale_variable_scores(&variable_scores(&p.model), p.model.n_training()).stage("scaling scores")?;
    let table = biplot_table(&p.scaled()?, &vars, args.multiplier).stage("building biplot")?;
    emit(args.out.as_ref(), &table.to_tsv(&p.comments(&args.input.model)))
}

pub fn fluctuation(args: FluctuationArgs) -> Outcome<()> {
    let (model, hash) = read_model(&args.model)?;
    let matrix = read_matrix(&args.matrix)?;
    let design = design_only(&args.design, args.design_header)?;
    let z = scale_observation_scores(&projected(&matrix, model.reference(), &model)?).stage("scaling scores")?;
    let (mode, name) = match args.mode {
        ModeArg::Scatter => (FluctuationMode::Scatter, "scatter"),
        ModeArg::DistanceSd => (FluctuationMode::DistanceSd, "distance-sd"),
    };
    let value = spread(&z, &design, mode).stage("computing fluctuation")?;
    let mut out = String::new();
    for c in provenance() {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "# model: {} sha256 {hash}", args.model.display());
    out.push_str("mode\tfluctuation\n");
    let _ = writeln!(out, "{name}\t{}", expca_core::format::float(value));
    emit(args.out.as_ref(), &out)
}

pub fn plot(args: PlotArgs) -> Outcome<()> {
    let p = run_projection(&args.input)?;
    let (a, b) = args.axes;
    let k = p.model.k();
    if a > k || b > k {
        return Err(ExpcaError::InvalidArgument(format!(
            "axes ({a},{b}) requested but the model has {k}"
        )))
        .stage("selecting axes");
    }
    let z = p.scaled()?;
    let mut comments = p.comments(&args.input.model);
    comments.push(format!(
        "obs_multiplier: {}",
        expca_core::format::float(args.multiplier)
    ));
    let mut out = String::new();
    for c in &comments {
        let _ = writeln!(out, "# {c}");
    }
    let _ = writeln!(out, "label\tkind\tpc{a}\tpc{b}");
    let row = |out: &mut String, label: &str, kind: &str, x: f64, y: f64| {
        let _ = writeln!(
            out,
            "{label}\t{kind}\t{}\t{}",
            expca_core::format::float(x),
            expca_core::format::float(y)
        );
    };
    for (label, s) in z.row_labels.iter().zip(z.scores.rows()) {
        row(
            &mut out,
            label,
            "observation",
            s[a - 1] * args.multiplier,
            s[b - 1] * args.multiplier,
        );
    }
    if args.with_variables {
        let v = scale_variable_scores(&variable_scores(&p.model), p.model.n_training()).stage("scaling scores")?;
        for (label, s) in v.row_labels.iter().zip(v.scores.rows()) {
            row(&mut out, label, "variable", s[a - 1], s[b - 1]);
        }
    }
    emit(args.out.as_ref(), &out)
}
