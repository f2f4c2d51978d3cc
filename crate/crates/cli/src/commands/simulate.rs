use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::json;
use ssvd::simulate::{run_experiment, ExperimentPlan, ExperimentResult, Grid, NoiseSpec, DEFAULT_METHODS};
use ssvd::model::ProblemSpec;
use ssvd::{Real, SvdOptions, Weighting};

use super::{NoiseArg, Precision, WeightsArg};
use crate::config::de_list;
use crate::error::CliError;
use crate::output::{write_json, write_text};
use crate::spec::{parse_methods, parse_usize_list, resolve_spec, spec_json};

/// Monte Carlo comparison of empirical overlaps with the predictions.
#[derive(Debug, Clone, Default, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct SimulateArgs {
    /// Strengths, one per table; `;` separates components.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "de_list")]
    pub theta: Option<String>,
    /// Aspect ratios n_i/d, one per table.
    #[arg(long, allow_hyphen_values = true)]
    #[serde(default, deserialize_with = "de_list")]
    pub c: Option<String>,
    /// TOML or JSON file with `theta` and `c`.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Column dimension [default: 2000].
    #[arg(long)]
    pub d: Option<usize>,
    /// Sweep over these dimensions instead of a single point.
    #[arg(long)]
    #[serde(default, deserialize_with = "de_list")]
    pub grid_d: Option<String>,
    /// Sweep over the first M tables for each listed M.
    #[arg(long)]
    #[serde(default, deserialize_with = "de_list")]
    pub grid_m: Option<String>,
    /// Replicates per grid point [default: 10].
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Master seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise distribution [default: gaussian].
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Comma-separated methods such as stack-svd/weighted, or `all` [default: all].
    #[arg(long)]
    pub methods: Option<String>,
    /// Weights from the true strengths or estimated per replicate [default: oracle].
    #[arg(long, value_enum)]
    pub weights: Option<WeightsArg>,
    /// Arithmetic precision [default: f64].
    #[arg(long, value_enum)]
    pub precision: Option<Precision>,
    /// Relative residual accepted by the iterative SVD [default: 1e-7].
    #[arg(long)]
    pub svd_tol: Option<f64>,
    /// Dense SVD when min(n, d) is at most this [default: 512].
    #[arg(long)]
    pub dense_threshold: Option<usize>,
    /// Result CSV; the plan is written next to it with a .json extension.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

impl SimulateArgs {
    fn with_defaults(mut self) -> Self {
        self.d.get_or_insert(2000);
        self.replicates.get_or_insert(10);
        self.seed.get_or_insert(0);
        self.noise.get_or_insert(NoiseArg::Gaussian);
        self.methods.get_or_insert_with(|| "all".into());
        self.weights.get_or_insert(WeightsArg::Oracle);
        self.precision.get_or_insert(Precision::F64);
        self.svd_tol.get_or_insert(1e-7);
        self.dense_threshold.get_or_insert(SvdOptions::default().dense_threshold);
        self
    }
}

pub fn run(args: SimulateArgs) -> Result<(), CliError> {
    let args = args.with_defaults();
    let output = args
        .output
        .clone()
        .ok_or_else(|| CliError::config("--output is required"))?;
    if output.extension().is_some_and(|e| e == "json") {
        return Err(CliError::config("--output names the CSV; the .json sidecar is derived from it"));
    }
    let spec = resolve_spec(args.theta.as_deref(), args.c.as_deref(), args.spec.as_deref())?;
    let grid = match (&args.grid_d, &args.grid_m) {
        (Some(_), Some(_)) => return Err(CliError::config("--grid-d and --grid-m are exclusive")),
        (Some(ds), None) => Grid::Dimension(parse_usize_list(ds, "grid-d")?),
        (None, Some(ms)) => Grid::TableCount(parse_usize_list(ms, "grid-m")?),
        (None, None) => Grid::Single,
    };
    let defaults: Vec<_> = if spec.rank() == 1 {
        DEFAULT_METHODS.to_vec()
    } else {
        DEFAULT_METHODS
            .iter()
            .copied()
            .filter(|m| m.weighting == Weighting::Weighted)
            .collect()
    };
    let methods = parse_methods(args.methods.as_deref().unwrap_or("all"), &defaults)?;
    let svd = SvdOptions {
        tol: args.svd_tol.unwrap_or(1e-7),
        dense_threshold: args.dense_threshold.unwrap_or(512),
        ..SvdOptions::default()
    };
    let plan = ExperimentPlan {
        grid,
        replicates: args.replicates.unwrap_or(10),
        seed: args.seed.unwrap_or(0),
        methods,
        noise: NoiseSpec::new(args.noise.unwrap_or_default().into()),
        weights: args.weights.unwrap_or_default().into(),
        svd,
        ..ExperimentPlan::new(spec.clone(), args.d.unwrap_or(2000))
    };
    let result = match args.precision.unwrap_or_default() {
        Precision::F64 => run_experiment(&plan)?,
        Precision::F32 => run_experiment(&cast_plan::<f32>(&plan)?)?,
    };
    write_text(Some(&output), &result_csv(&result))?;
    let sidecar = json!({
        "config": args,
        "plan": {
            "spec": spec_json(&spec),
            "d": plan.d,
            "grid": plan.grid,
            "replicates": plan.replicates,
            "seed": plan.seed,
            "methods": plan.methods.iter().map(|m| m.to_string()).collect::<Vec<_>>(),
            "noise": plan.noise,
            "weights": plan.weights,
            "svd": plan.svd,
            "precision": args.precision,
        },
    });
    write_json(Some(&output.with_extension("json")), &sidecar)
}

fn cast_plan<T: Real>(plan: &ExperimentPlan<f64>) -> Result<ExperimentPlan<T>, CliError> {
    let spec = ProblemSpec::<T>::new(plan.spec.theta().map(T::lit), plan.spec.c().map(T::lit))?;
    Ok(ExperimentPlan {
        spec,
        d: plan.d,
        grid: plan.grid.clone(),
        replicates: plan.replicates,
        seed: plan.seed,
        methods: plan.methods.clone(),
        noise: plan.noise,
        weights: plan.weights,
        svd: plan.svd.clone(),
    })
}

/// `grid_value,method,mean_overlap,std_err,theory,bias`, one row per grid
/// point and method.
pub fn result_csv(result: &ExperimentResult) -> String {
    let mut out = String::from("grid_value,method,mean_overlap,std_err,theory,bias\n");
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    for row in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            row.grid_value,
            row.method,
            row.mean_overlap,
            row.std_err,
            opt(row.theory),
            opt(row.bias)
        );
    }
    out
}
