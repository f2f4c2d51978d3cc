use std::fmt::Write as _;
use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ssvd::estimators::{
    auto_weights_from_svds, center_columns, per_table_svds, single_table, stack_svd_rank_r_with, stack_svd_with,
    svd_stack_from_svds, svd_stack_rank_r_from_svds, AutoWeightOptions,
};
use ssvd::model::{alignment, AlignmentReport};
use ssvd::simulate::DEFAULT_METHODS;
use ssvd::theory::{
    beta_squared, optimal_weights_stacksvd, optimal_weights_svdstack, predict_binary_stacksvd, predict_binary_svdstack,
    SubsetRule,
};
use ssvd::{Family, GroundTruth, MethodTag, ProblemSpec, SubspaceEstimate, SvdOptions, TableSet, WeightVector, Weighting};

use crate::config::de_list;
use crate::error::CliError;
use crate::io::{read_matrix, write_matrix, MatrixFormat};
use crate::output::{write_json, write_text};
use crate::spec::{build_spec, file_stem, parse_methods, spec_json};

/// Shared-subspace estimates from data tables.
#[derive(Debug, Clone, Default, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct EstimateArgs {
    /// Comma-separated table files (CSV or binary), all with the same column count.
    #[arg(long)]
    #[serde(default, deserialize_with = "de_list")]
    pub tables: Option<String>,
    /// Known strengths, one per table (`;` separates components); estimated when omitted.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "de_list")]
    pub theta: Option<String>,
    /// Comma-separated methods, or `all` [default: all].
    #[arg(long)]
    pub methods: Option<String>,
    /// Also report the top vector of this table alone.
    #[arg(long)]
    pub single_table: Option<usize>,
    /// True subspace (d x r matrix file) to align against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Center every column of every table first.
    #[arg(long)]
    #[serde(default)]
    pub center: bool,
    /// Directory for the output files.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Format of the written vector files [default: csv].
    #[arg(long, value_enum)]
    pub format: Option<MatrixFormat>,
    /// Relative residual accepted by the iterative SVD [default: 1e-10].
    #[arg(long)]
    pub svd_tol: Option<f64>,
    /// Dense SVD when min(n, d) is at most this [default: 512].
    #[arg(long)]
    pub dense_threshold: Option<usize>,
}

impl EstimateArgs {
    fn with_defaults(mut self) -> Self {
        let svd = SvdOptions::default();
        self.methods.get_or_insert_with(|| "all".into());
        self.format.get_or_insert(MatrixFormat::Csv);
        self.svd_tol.get_or_insert(svd.tol);
        self.dense_threshold.get_or_insert(svd.dense_threshold);
        self
    }

    pub fn svd_options(&self) -> SvdOptions {
        let d = SvdOptions::default();
        SvdOptions {
            tol: self.svd_tol.unwrap_or(d.tol),
            dense_threshold: self.dense_threshold.unwrap_or(d.dense_threshold),
            ..d
        }
    }
}

/// One table's strength as used by the estimators.
#[derive(Debug, Clone, Serialize)]
struct Strength {
    table: usize,
    component: usize,
    theta: f64,
    beta: f64,
    source: &'static str,
}

pub fn run(args: EstimateArgs) -> Result<(), CliError> {
    let args = args.with_defaults();
    let dir = args
        .output_dir
        .clone()
        .ok_or_else(|| CliError::config("--output-dir is required"))?;
    let paths: Vec<PathBuf> = args
        .tables
        .as_deref()
        .ok_or_else(|| CliError::config("--tables is required"))?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect();
    let tables = load_tables(&paths, args.center)?;
    let svd = args.svd_options();
    let format = args.format.unwrap_or_default();

    let c = tables.aspect_ratios();
    let per_table = per_table_svds(&tables, 1, &svd)?;
    let (spec, strengths, reference): (ProblemSpec, Vec<Strength>, Option<usize>) = match &args.theta {
        Some(theta) => {
            let spec = build_spec(theta, &c.iter().map(f64::to_string).collect::<Vec<_>>().join(","))?;
            let strengths: Vec<Strength> = (0..spec.m())
                .flat_map(|i| (0..spec.rank()).map(move |j| (i, j)))
                .map(|(i, j)| {
                    let t = spec.theta()[(i, j)];
                    Strength { table: i, component: j, theta: t, beta: beta_squared(t, c[i]).sqrt(), source: "given" }
                })
                .collect();
            (spec, strengths, None)
        }
        None => {
            let opts = AutoWeightOptions { svd: svd.clone(), ..AutoWeightOptions::default() };
            let auto = auto_weights_from_svds(&tables, &per_table, Family::StackSvd, &opts)?;
            let strengths: Vec<Strength> = auto
                .estimates
                .iter()
                .enumerate()
                .map(|(i, e)| Strength {
                    table: i,
                    component: 0,
                    theta: e.theta,
                    beta: e.beta,
                    source: match e.method {
                        ssvd::estimators::ThetaMethod::AboveThresholdQuadratic => "above-threshold",
                        ssvd::estimators::ThetaMethod::CrossTable => "cross-table",
                    },
                })
                .collect();
            let theta: Vec<f64> = auto.estimates.iter().map(|e| e.theta).collect();
            (ProblemSpec::rank_one(&theta, &c)?, strengths, Some(auto.reference))
        }
    };

    let defaults: Vec<MethodTag> = if spec.rank() == 1 {
        DEFAULT_METHODS.to_vec()
    } else {
        DEFAULT_METHODS.iter().copied().filter(|m| m.weighting == Weighting::Weighted).collect()
    };
    let methods = parse_methods(args.methods.as_deref().unwrap_or("all"), &defaults)?;
    if spec.rank() > 1 {
        if let Some(m) = methods.iter().find(|m| m.weighting != Weighting::Weighted) {
            return Err(CliError::config(format!("{m} is only available for rank one")));
        }
    }

    let mut estimates: Vec<(String, SubspaceEstimate)> = Vec::new();
    let mut skipped = Vec::new();
    for &method in &methods {
        match run_method(&tables, &spec, &per_table, method, &svd)? {
            Some(e) => estimates.push((file_stem(method), e)),
            None => skipped.push(method.to_string()),
        }
    }
    if let Some(index) = args.single_table {
        if index >= tables.m() {
            return Err(CliError::config(format!("--single-table {index} but only {} tables", tables.m())));
        }
        estimates.push((format!("single-table-{index}"), single_table(&tables, index, spec.rank())?));
    }

    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    for (stem, e) in &estimates {
        write_matrix(&dir.join(format!("{stem}.{}", format.extension())), &e.vectors, format)?;
    }
    write_text(Some(&dir.join("strengths.csv")), &strengths_csv(&spec, &strengths)?)?;

    let alignments = match &args.truth {
        Some(path) => {
            let truth = GroundTruth::new(read_matrix(path)?)?;
            let reports = estimates
                .iter()
                .map(|(stem, e)| alignment(e, &truth).map(|a| (stem.clone(), a)))
                .collect::<Result<Vec<_>, _>>()?;
            write_text(Some(&dir.join("alignment.csv")), &alignment_csv(&reports))?;
            Some(reports)
        }
        None => None,
    };

    let summary = json!({
        "config": args,
        "spec": spec_json(&spec),
        "reference_table": reference,
        "strengths": strengths,
        "estimates": estimates.iter().map(|(stem, e)| json!({
            "name": stem,
            "method": e.method.to_string(),
            "singular_values": e.singular_values.iter().copied().collect::<Vec<f64>>(),
            "file": format!("{stem}.{}", format.extension()),
        })).collect::<Vec<Value>>(),
        "skipped": skipped,
        "alignment": alignments.map(|r| r.into_iter().map(|(stem, a)| json!({"name": stem, "report": a})).collect::<Vec<_>>()),
    });
    write_json(Some(&dir.join("estimate.json")), &summary)
}

pub fn load_tables(paths: &[PathBuf], center: bool) -> Result<TableSet, CliError> {
    if paths.is_empty() {
        return Err(CliError::config("no table files given"));
    }
    let tables = paths
        .iter()
        .map(|p| read_matrix(p).map(|m| if center { center_columns(&m) } else { m }))
        .collect::<Result<Vec<DMatrix<f64>>, _>>()?;
    Ok(TableSet::from_tables(tables)?)
}

/// The estimate `method` produces; `None` when a binary rule keeps no table.
pub fn run_method(
    tables: &TableSet,
    spec: &ProblemSpec,
    per_table: &[ssvd::SvdTriplet<f64>],
    method: MethodTag,
    svd: &SvdOptions,
) -> Result<Option<SubspaceEstimate>, CliError> {
    if spec.rank() > 1 {
        let e = match method.family {
            Family::StackSvd => stack_svd_rank_r_with(tables, spec, svd)?,
            Family::SvdStack => {
                let svds = per_table_svds(tables, spec.rank(), svd)?;
                svd_stack_rank_r_from_svds(&svds, spec)?
            }
        };
        return Ok(Some(e));
    }
    let m = spec.m();
    let weights = match (method.family, method.weighting) {
        (_, Weighting::Unweighted) => WeightVector::ones(m),
        (family, Weighting::Binary) => {
            let report = match family {
                Family::StackSvd => predict_binary_stacksvd(spec, &SubsetRule::Auto)?,
                Family::SvdStack => predict_binary_svdstack(spec, &SubsetRule::Auto)?,
            };
            let subset = report.subset.unwrap_or_default();
            if subset.is_empty() {
                return Ok(None);
            }
            WeightVector::indicator(m, &subset)?
        }
        (Family::StackSvd, Weighting::Weighted) => optimal_weights_stacksvd(spec)?,
        (Family::SvdStack, Weighting::Weighted) => optimal_weights_svdstack(spec)?,
        (_, Weighting::Custom) => return Err(CliError::config(format!("{method} is not runnable"))),
    };
    let e = match method.family {
        Family::StackSvd => stack_svd_with(tables, &weights, 1, svd)?,
        Family::SvdStack => svd_stack_from_svds(per_table, &weights.to_vec(), 1)?,
    };
    Ok(Some(e.with_weighting(method.weighting)))
}

fn strengths_csv(spec: &ProblemSpec, strengths: &[Strength]) -> Result<String, CliError> {
    let stack = optimal_weights_stacksvd(spec).ok();
    let svd = optimal_weights_svdstack(spec).ok();
    let cell = |w: &Option<WeightVector>, i: usize, j: usize| {
        w.as_ref().map(|w| w.matrix()[(i, j)].to_string()).unwrap_or_default()
    };
    let mut out = String::from("table,component,rows_over_d,theta,beta,source,weight_stack_svd,weight_svd_stack\n");
    for s in strengths {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.table,
            s.component,
            spec.c()[s.table],
            s.theta,
            s.beta,
            s.source,
            cell(&stack, s.table, s.component),
            cell(&svd, s.table, s.component)
        );
    }
    Ok(out)
}

fn alignment_csv(reports: &[(String, AlignmentReport<f64>)]) -> String {
    let mut out = String::from("name,component,overlap,frobenius,projection_distance\n");
    for (stem, a) in reports {
        for (j, o) in a.overlaps.iter().enumerate() {
            let _ = writeln!(out, "{stem},{j},{o},{},{}", a.frobenius, a.projection_distance);
        }
    }
    out
}

