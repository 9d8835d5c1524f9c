use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mice_core::bench::{self, ExperimentConfig, FieldScenario};
use mice_core::criteria::DEFAULT_TAU_S;
use mice_core::seq_design::DEFAULT_NUGGET;
use mice_core::testbed::ObjectiveName;
use mice_core::{Criterion, Error, Result};

/// Sequential design benchmarks for Gaussian-process emulators.
#[derive(Parser, Debug)]
#[command(name = "mice", version)]
struct Args {
    /// grf2d, branin, oscillatory4d, oscillatory8d or piston
    #[arg(long)]
    objective: Option<String>,
    /// Comma-separated arms, e.g. mice-150,alc-150,alm-1000,lhd-maximin
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Final design size
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    tau_s: Option<f64>,
    #[arg(long)]
    nugget: Option<f64>,
    /// Likelihood evaluations per hyperparameter search
    #[arg(long)]
    mle_budget: Option<usize>,
    /// Re-estimate hyperparameters every this many steps
    #[arg(long)]
    mle_every: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dump a 2-D score field: grid7, grid7-cluster, lhd100-a or lhd100-b
    #[arg(long)]
    score_field: Option<String>,
    /// Criterion for --score-field
    #[arg(long, default_value = "mi")]
    criterion: String,
    #[arg(long)]
    validate_size: Option<usize>,
    /// Comma-separated checkpoint design sizes
    #[arg(long)]
    checkpoints: Option<String>,
    /// key = value file; flags override its entries
    #[arg(long)]
    config: Option<PathBuf>,
}

fn merged(args: &Args) -> Result<BTreeMap<String, String>> {
    let mut kv = match &args.config {
        Some(path) => bench::parse_key_values(&fs::read_to_string(path)?)?,
        None => BTreeMap::new(),
    };
    let flags: [(&str, Option<String>); 13] = [
        ("objective", args.objective.clone()),
        ("methods", args.methods.clone()),
        ("replicates", args.replicates.map(|v| v.to_string())),
        ("budget", args.budget.map(|v| v.to_string())),
        ("tau-s", args.tau_s.map(|v| v.to_string())),
        ("nugget", args.nugget.map(|v| v.to_string())),
        ("mle-budget", args.mle_budget.map(|v| v.to_string())),
        ("mle-every", args.mle_every.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("out", args.out.as_ref().map(|p| p.display().to_string())),
        ("score-field", args.score_field.clone()),
        ("validate-size", args.validate_size.map(|v| v.to_string())),
        ("checkpoints", args.checkpoints.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            kv.insert(k.to_string(), v);
        }
    }
    Ok(kv)
}

fn get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<Option<T>> {
    kv.get(key).map(|v| v.parse::<T>().map_err(|_| Error::Config(format!("invalid value '{v}' for {key}")))).transpose()
}

const KNOWN_KEYS: [&str; 14] = [
    "objective",
    "methods",
    "replicates",
    "budget",
    "tau-s",
    "nugget",
    "mle-budget",
    "mle-every",
    "seed",
    "out",
    "score-field",
    "validate-size",
    "checkpoints",
    "criterion",
];

fn build_config(kv: &BTreeMap<String, String>) -> Result<ExperimentConfig> {
    if let Some(k) = kv.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
        return Err(Error::Config(format!("unknown key '{k}'")));
    }
    let objective: ObjectiveName = kv
        .get("objective")
        .ok_or_else(|| Error::Config("--objective is required".into()))?
        .parse()
        .map_err(|e: Error| Error::Config(e.to_string()))?;
    let methods = bench::parse_methods(kv.get("methods").map(String::as_str).unwrap_or("mice-150"))?;
    let mut config = ExperimentConfig::new(objective, methods);
    if let Some(b) = get(kv, "budget")? {
        config = config.with_budget(b);
    }
    if let Some(v) = get(kv, "replicates")? {
        config.replicates = v;
    }
    if let Some(v) = get(kv, "tau-s")? {
        config.tau_s = v;
    }
    if let Some(v) = get(kv, "nugget")? {
        config.nugget = v;
    }
    if let Some(v) = get(kv, "mle-budget")? {
        config.mle_budget = v;
    }
    if let Some(v) = get(kv, "mle-every")? {
        config.mle_every = v;
    }
    if let Some(v) = get(kv, "seed")? {
        config.seed = v;
    }
    if let Some(v) = get(kv, "validate-size")? {
        config.validation_size = v;
    }
    if let Some(list) = kv.get("checkpoints") {
        config.checkpoints = list
            .split(',')
            .map(|c| c.trim().parse().map_err(|_| Error::Config(format!("bad checkpoint '{c}'"))))
            .collect::<Result<_>>()?;
    }
    config.validate()?;
    Ok(config)
}

fn run(args: Args) -> Result<()> {
    let kv = merged(&args)?;
    let out = PathBuf::from(kv.get("out").map(String::as_str).unwrap_or("mice-out"));
    if let Some(scenario) = kv.get("score-field") {
        let scenario: FieldScenario = scenario.parse()?;
        let criterion: Criterion =
            kv.get("criterion").unwrap_or(&args.criterion).parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let nugget = get(&kv, "nugget")?.unwrap_or(DEFAULT_NUGGET);
        let tau_s = get(&kv, "tau-s")?.unwrap_or(DEFAULT_TAU_S);
        let sheet = bench::score_field_dump(scenario, criterion, nugget, tau_s)?;
        fs::create_dir_all(&out)?;
        let path = out.join(format!("score_field_{}_{criterion}.csv", kv["score-field"]));
        sheet.write_csv(fs::File::create(&path)?)?;
        println!("chosen {:?} -> {}", sheet.chosen(), path.display());
        return Ok(());
    }
    let config = build_config(&kv)?;
    log::info!("{config:?}");
    let result = bench::run_experiment(&config)?;
    bench::write_outputs(&result, mice_core::testbed::Objective::by_name(config.objective, 0)?.dim(), &out)?;
    for m in &config.methods {
        let last = config.checkpoints.last().copied().unwrap_or(config.budget);
        if let Some(mean) = result.mean_rmspe(&m.label, last) {
            println!("{:<24} n={last:<4} mean normalized RMSPE {mean:.6}", m.label);
        }
    }
    for f in &result.failures {
        eprintln!("failed: {} replicate {}: {}", f.method, f.replicate, f.error);
    }
    println!("wrote {}", out.display());
    match result.failures.iter().find(|f| f.numerical) {
        Some(f) => Err(Error::NumericalBreakdown(format!("{} replicate {}: {}", f.method, f.replicate, f.error))),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
