use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use ssvd::simulate::{count_pipeline, generate_tables_seeded, NoiseSpec};
use ssvd::TableSet;

use super::NoiseArg;
use crate::config::de_list;
use crate::error::CliError;
use crate::io::{read_counts, write_matrix, MatrixFormat};
use crate::output::write_json;
use crate::spec::{parse_list, resolve_spec, spec_json};

/// Synthetic tables from a spec, or split and transformed count data.
#[derive(Debug, Clone, Default, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct GenerateArgs {
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
    /// Column dimension of synthetic tables.
    #[arg(long)]
    pub d: Option<usize>,
    /// Seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Noise distribution of synthetic tables [default: gaussian].
    #[arg(long, value_enum)]
    pub noise: Option<NoiseArg>,
    /// Count matrix file (nonnegative integers); switches to the count pipeline.
    #[arg(long)]
    pub counts: Option<PathBuf>,
    /// Poisson rate added to each split, comma-separated [default: 0 for every split].
    #[arg(long)]
    #[serde(default, deserialize_with = "de_list")]
    pub ambient_rates: Option<String>,
    /// Number of row blocks [default: number of ambient rates, else 1].
    #[arg(long)]
    pub splits: Option<usize>,
    /// Center every column of the transformed tables.
    #[arg(long)]
    #[serde(default)]
    pub center: bool,
    /// Matrix file format [default: csv].
    #[arg(long, value_enum)]
    pub format: Option<MatrixFormat>,
    /// Directory for the tables and manifest.json.
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl GenerateArgs {
    fn with_defaults(mut self) -> Self {
        self.seed.get_or_insert(0);
        self.format.get_or_insert(MatrixFormat::Csv);
        if self.counts.is_some() {
            let rates = self.ambient_rates.as_deref().map(|r| r.split(',').count());
            let splits = *self.splits.get_or_insert(rates.unwrap_or(1));
            self.ambient_rates.get_or_insert_with(|| vec!["0"; splits].join(","));
        } else {
            self.noise.get_or_insert(NoiseArg::Gaussian);
        }
        self
    }
}

pub fn run(args: GenerateArgs) -> Result<(), CliError> {
    let args = args.with_defaults();
    let dir = args
        .output_dir
        .clone()
        .ok_or_else(|| CliError::config("--output-dir is required"))?;
    let format = args.format.unwrap_or_default();
    let seed = args.seed.unwrap_or(0);
    let ext = format.extension();

    let (tables, truth, spec) = match &args.counts {
        Some(path) => {
            if args.theta.is_some() || args.c.is_some() || args.spec.is_some() || args.d.is_some() {
                return Err(CliError::config("--counts excludes --theta, --c, --spec and --d"));
            }
            if args.noise.is_some() {
                return Err(CliError::config("--noise applies to synthetic tables only"));
            }
            let counts = read_counts(path)?;
            let rates = parse_list(args.ambient_rates.as_deref().unwrap_or("0"), "ambient-rates")?;
            let splits = args.splits.unwrap_or(rates.len());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let tables: TableSet = count_pipeline(&counts, &rates, splits, args.center, &mut rng)?;
            (tables, None, None)
        }
        None => {
            if args.ambient_rates.is_some() || args.splits.is_some() || args.center {
                return Err(CliError::config("--ambient-rates, --splits and --center need --counts"));
            }
            let spec = resolve_spec(args.theta.as_deref(), args.c.as_deref(), args.spec.as_deref())?;
            let d = args.d.ok_or_else(|| CliError::config("--d is required for synthetic tables"))?;
            let noise = NoiseSpec::new(args.noise.unwrap_or_default().into());
            let (tables, truth) = generate_tables_seeded(&spec, d, &noise, seed)?;
            (tables, Some(truth), Some(spec))
        }
    };

    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut files = Vec::with_capacity(tables.m());
    for (i, t) in tables.tables().iter().enumerate() {
        let name = format!("table-{i}.{ext}");
        write_matrix(&dir.join(&name), t, format)?;
        files.push(name);
    }
    let truth_file = match &truth {
        Some(t) => {
            let name = format!("truth.{ext}");
            write_matrix(&dir.join(&name), &t.v, format)?;
            Some(name)
        }
        None => None,
    };
    let manifest = json!({
        "mode": if args.counts.is_some() { "counts" } else { "synthetic" },
        "config": args,
        "spec": spec.as_ref().map(spec_json),
        "seed": seed,
        "noise": args.noise.map(|n| NoiseSpec::new(n.into())),
        "d": tables.d(),
        "rows": tables.tables().iter().map(|t| t.nrows()).collect::<Vec<_>>(),
        "tables": files,
        "truth": truth_file,
    });
    write_json(Some(&dir.join("manifest.json")), &manifest)
}
