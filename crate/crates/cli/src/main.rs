use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use copula_vi::family::{read_checkpoint, FamilyLabel};
use copula_vi::harness::{
    analyze, export_analysis, export_grid, export_results, run_experiment, run_grid, Base,
    ExperimentSpec, TargetSource,
};
use copula_vi::optimizer::Estimator;
use copula_vi::transforms::TransformKind;
use copula_vi::verification::run_checks;

#[derive(Parser)]
#[command(
    name = "copula-vi",
    version,
    about = "Copula variational inference experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one family and write its results.
    Fit {
        #[command(flatten)]
        spec: SpecArgs,
    },
    /// Fit several families on one target and compare them.
    Grid {
        #[command(flatten)]
        spec: SpecArgs,
        /// Comma-separated family labels.
        #[arg(long, value_delimiter = ',', default_value = "A3,A4,A5,A6,A7,A8")]
        families: Vec<FamilyLabel>,
        /// Concurrent runs (0 = one per core).
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
    /// Run the derivative and density checks and print a JSON report.
    Verify {
        #[arg(long, default_value_t = 100)]
        instances: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        /// Only checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute moments and marginal curves from a saved λ checkpoint.
    Export {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        spec: SpecArgs,
    },
}

/// Every key of the config file, as a flag. Flags override the file.
#[derive(Args)]
struct SpecArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    /// csv | gaussian-toy | logistic-synthetic | polypharmacy-like
    #[arg(long)]
    target: Option<TargetSource>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    intercept: Option<bool>,
    #[arg(long)]
    standardize: Option<bool>,
    #[arg(long)]
    prior_var: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    toy_rho: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    toy_log_c: Option<f64>,
    #[arg(long)]
    synthetic_n: Option<usize>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    synthetic_beta: Option<Vec<f64>>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// A1 ... A8; overrides base, transform and mean-field.
    #[arg(long)]
    family: Option<FamilyLabel>,
    /// gaussian | skew-normal
    #[arg(long)]
    base: Option<Base>,
    /// identity | yj | igh
    #[arg(long, value_parser = parse_transform)]
    transform: Option<TransformKind>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    mean_field: Option<bool>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// reparam | reparam-total | score
    #[arg(long, value_parser = parse_estimator)]
    estimator: Option<Estimator>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
    #[arg(long)]
    baseline_decay: Option<f64>,
    #[arg(long)]
    moment_draws: Option<usize>,
    #[arg(long)]
    importance_draws: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    marginal_coords: Option<Vec<usize>>,
    #[arg(long)]
    marginal_points: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn parse_transform(s: &str) -> Result<TransformKind, copula_vi::Error> {
    TransformKind::parse(s)
}

fn parse_estimator(s: &str) -> Result<Estimator, copula_vi::Error> {
    Estimator::parse(s)
}

macro_rules! override_fields {
    ($args:expr, $spec:expr, $($field:ident),* $(,)?) => {
        $( if let Some(v) = $args.$field.clone() { $spec.$field = v; } )*
    };
}

impl SpecArgs {
    fn resolve(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentSpec::from_toml_path(path)
                .with_context(|| format!("reading {}", path.display()))?,
            None => ExperimentSpec::default(),
        }
        .normalized();
        override_fields!(
            self,
            spec,
            name,
            target,
            intercept,
            standardize,
            prior_var,
            toy_rho,
            toy_log_c,
            synthetic_n,
            synthetic_beta,
            data_seed,
            base,
            transform,
            k,
            mean_field,
            steps,
            samples,
            seed,
            estimator,
            window,
            rho,
            eps,
            checkpoint_every,
            baseline_decay,
            moment_draws,
            importance_draws,
            marginal_points,
        );
        if self.data.is_some() {
            spec.data = self.data.clone();
        }
        if let Some(label) = self.family {
            spec = spec.with_family(label);
        }
        if self.marginal_coords.is_some() {
            spec.marginal_coords = self.marginal_coords.clone();
        }
        if self.out_dir.is_some() {
            spec.out_dir = self.out_dir.clone();
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn out_dir(spec: &ExperimentSpec, prefix: &str) -> PathBuf {
    spec.out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs").join(format!("{prefix}{}", spec.hash())))
}

fn fit(args: &SpecArgs) -> Result<ExitCode> {
    let spec = args.resolve()?;
    let bundle = run_experiment(&spec)?;
    let dir = out_dir(&spec, "");
    export_results(&bundle, &dir)?;
    let label = bundle
        .family
        .label()
        .map(|l| format!(" ({l})"))
        .unwrap_or_default();
    println!(
        "target {}  family {}{label}  |λ| = {}",
        bundle.target,
        copula_vi::harness::family_name(&bundle.family),
        bundle.n_params()
    );
    println!(
        "window-average ELBO {:.4}  {:.1} ms/1000 steps  flagged {}{}",
        bundle.window_average(),
        bundle.trace.ms_per_1000_steps(),
        bundle.trace.flagged_steps,
        if bundle.trace.healthy {
            ""
        } else {
            "  UNHEALTHY"
        }
    );
    if let Some(gap) = bundle.ceiling_gap() {
        println!(
            "log evidence {:.4}  gap {gap:.4}",
            bundle.log_evidence.unwrap_or(f64::NAN)
        );
    }
    println!("wrote {} (spec hash {})", dir.display(), bundle.spec_hash);
    Ok(ExitCode::SUCCESS)
}

fn grid(args: &SpecArgs, families: &[FamilyLabel], workers: usize) -> Result<ExitCode> {
    if families.is_empty() {
        bail!("no families given");
    }
    let base = args.resolve()?;
    let specs: Vec<ExperimentSpec> = families.iter().map(|&l| base.with_family(l)).collect();
    let result = run_grid(&specs, workers)?;
    let dir = out_dir(&base, "grid-");
    export_grid(&result, &dir)?;
    println!(
        "{:<5} {:<5} {:<28} {:>7} {:>14} {:>12}",
        "rank", "label", "family", "|λ|", "ELBO", "min/1000"
    );
    for (i, r) in result.rows.iter().enumerate() {
        println!(
            "{:<5} {:<5} {:<28} {:>7} {:>14.4} {:>12.4}{}",
            i + 1,
            r.label.map(|l| l.to_string()).unwrap_or_default(),
            r.family,
            r.n_params,
            r.window_average,
            r.minutes_per_1000_steps,
            if r.healthy { "" } else { "  UNHEALTHY" }
        );
    }
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn verify(
    instances: usize,
    seed: u64,
    filter: Option<&str>,
    out: Option<&PathBuf>,
) -> Result<ExitCode> {
    let report = run_checks(filter, instances, seed)?;
    let json = serde_json::to_string_pretty(&report)?;
    match out {
        Some(path) => {
            std::fs::write(path, json).with_context(|| format!("writing {}", path.display()))?
        }
        None => println!("{json}"),
    }
    for c in &report.checks {
        eprintln!(
            "{} {:<28} max error {:.3e} (tol {:.0e})",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.max_error,
            c.tolerance
        );
    }
    Ok(if report.all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn export(checkpoint: &PathBuf, args: &SpecArgs) -> Result<ExitCode> {
    let bytes =
        std::fs::read(checkpoint).with_context(|| format!("reading {}", checkpoint.display()))?;
    let ckpt = read_checkpoint(bytes.as_slice())?;
    let spec = args.resolve()?;
    let target = spec.build_target()?;
    if target.model().dim() != ckpt.spec.m {
        bail!(
            "checkpoint has dimension {} but the target has {}",
            ckpt.spec.m,
            target.model().dim()
        );
    }
    let analysis = analyze(&spec, &target, ckpt.spec, &ckpt.lambda)?;
    let hash = if ckpt.tag.is_empty() {
        spec.hash()
    } else {
        ckpt.tag.clone()
    };
    let dir = out_dir(&spec, "export-");
    export_analysis(&analysis, &hash, &dir)?;
    println!("wrote {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit { spec } => fit(spec),
        Command::Grid {
            spec,
            families,
            workers,
        } => grid(spec, families, *workers),
        Command::Verify {
            instances,
            seed,
            filter,
            out,
        } => verify(*instances, *seed, filter.as_deref(), out.as_ref()),
        Command::Export { checkpoint, spec } => export(checkpoint, spec),
    }
}
