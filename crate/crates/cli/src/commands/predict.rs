use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use ssvd::theory::{
    detection_thresholds, optimal_weights_stacksvd, optimal_weights_svdstack, predict_binary_stacksvd_with,
    predict_binary_svdstack_with, predict_rank_r_with, predict_unweighted_stacksvd, predict_unweighted_svdstack,
    predict_weighted_stacksvd_with, predict_weighted_svdstack, SubsetRule, TheoryOptions,
};
use ssvd::{PredictionReport, ProblemSpec};

use crate::config::de_list;
use crate::error::CliError;
use crate::output::{write_json, write_text};
use crate::spec::{resolve_spec, spec_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
    /// `<output>.json` and `<output>.csv`; needs `--output`.
    Both,
}

/// Asymptotic predictions, thresholds and optimal weights for a spec.
#[derive(Debug, Clone, Default, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct PredictArgs {
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
    /// Output format [default: json].
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Output path; standard output when omitted.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
    /// Bisection stops once the secular function is within this of zero [default: 1e-12].
    #[arg(long)]
    pub bisection_tol: Option<f64>,
    /// Largest table count for best-subset enumeration [default: 20].
    #[arg(long)]
    pub subset_cap: Option<usize>,
}

impl PredictArgs {
    fn options(&self) -> TheoryOptions {
        let defaults = TheoryOptions::default();
        TheoryOptions {
            root_tol: self.bisection_tol.unwrap_or(defaults.root_tol),
            subset_cap: self.subset_cap.unwrap_or(defaults.subset_cap),
        }
    }
}

pub fn run(args: &PredictArgs) -> Result<(), CliError> {
    let spec = resolve_spec(args.theta.as_deref(), args.c.as_deref(), args.spec.as_deref())?;
    let opts = args.options();
    opts.validate()?;
    let report = build_report(&spec, &opts)?;
    match args.format.unwrap_or(ReportFormat::Json) {
        ReportFormat::Json => write_json(args.output.as_deref(), &report),
        ReportFormat::Csv => write_text(args.output.as_deref(), &to_csv(&report)),
        ReportFormat::Both => {
            let base = args
                .output
                .as_deref()
                .ok_or_else(|| CliError::config("--format both needs --output"))?;
            write_json(Some(&base.with_extension("json")), &report)?;
            write_text(Some(&base.with_extension("csv")), &to_csv(&report))
        }
    }
}

pub fn build_report(spec: &ProblemSpec, opts: &TheoryOptions) -> Result<Value, CliError> {
    let predictions: Vec<PredictionReport> = if spec.rank() == 1 {
        vec![
            predict_unweighted_stacksvd(spec)?,
            predict_binary_stacksvd_with(spec, &SubsetRule::Auto, opts)?,
            predict_weighted_stacksvd_with(spec, opts)?,
            predict_unweighted_svdstack(spec)?,
            predict_binary_svdstack_with(spec, &SubsetRule::Auto, opts)?,
            predict_weighted_svdstack(spec)?,
        ]
    } else {
        let r = predict_rank_r_with(spec, opts);
        vec![r.stacksvd, r.svdstack]
    };
    let thresholds = (0..spec.rank())
        .map(|j| detection_thresholds(&spec.component(j)).map(|t| serde_json::to_value(t).expect("serializable")))
        .collect::<Result<Vec<_>, _>>()?;
    let weights = |w: ssvd::Result<ssvd::WeightVector>| match w {
        Ok(w) => json!((0..w.components())
            .map(|j| w.column(j).iter().copied().collect::<Vec<f64>>())
            .collect::<Vec<_>>()),
        Err(_) => Value::Null,
    };
    Ok(json!({
        "spec": spec_json(spec),
        "options": { "bisection_tol": opts.root_tol, "subset_cap": opts.subset_cap },
        "predictions": predictions.iter().map(prediction_json).collect::<Vec<_>>(),
        "thresholds": thresholds,
        "optimal_weights": {
            "stack-svd": weights(optimal_weights_stacksvd(spec)),
            "svd-stack": weights(optimal_weights_svdstack(spec)),
        },
    }))
}

fn prediction_json(p: &PredictionReport) -> Value {
    json!({
        "method": p.method.to_string(),
        "overlap": p.overlap,
        "components": p.components,
        "detectable": p.detectable,
        "degenerate": p.degenerate,
        "subset": p.subset,
        "weights": p.weights,
        "diagnostics": p.diagnostics,
    })
}

/// Long format: `kind,name,component,table,value,flag`.
pub fn to_csv(report: &Value) -> String {
    let mut out = String::from("kind,name,component,table,value,flag\n");
    let num = |v: &Value| v.as_f64().map(|x| x.to_string()).unwrap_or_default();
    for p in report["predictions"].as_array().into_iter().flatten() {
        let name = p["method"].as_str().unwrap_or_default();
        for (j, value) in p["components"].as_array().into_iter().flatten().enumerate() {
            let flag = value.as_f64().is_some_and(|x| x > 0.0);
            let _ = writeln!(out, "prediction,{name},{j},,{},{flag}", num(value));
        }
    }
    for (j, t) in report["thresholds"].as_array().into_iter().flatten().enumerate() {
        for (name, cond) in t.as_object().into_iter().flatten() {
            let _ = writeln!(
                out,
                "threshold,{name},{j},,{},{}",
                num(&cond["margin"]),
                cond["detectable"].as_bool().unwrap_or(false)
            );
        }
    }
    for (family, w) in report["optimal_weights"].as_object().into_iter().flatten() {
        for (j, column) in w.as_array().into_iter().flatten().enumerate() {
            for (i, value) in column.as_array().into_iter().flatten().enumerate() {
                let _ = writeln!(out, "weight,{family},{j},{i},{},", num(value));
            }
        }
    }
    out
}

