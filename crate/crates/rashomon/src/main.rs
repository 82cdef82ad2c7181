use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rashomon::analysis::{
    cate, conditional_mean_effects, effect_binning, effect_sd, rps_summary, BinOptions, WeightedValues, Bin,
    DEFAULT_RATIO_BINS,
};
use rashomon::enumerate::{enumerate_rps, reference};
use rashomon::hasse::FeatureCombination;
use rashomon::io::{artifact_bytes, ingest_csv, read_artifact, write_atomic, Artifact, RunConfig};
use rashomon::sim::{self, run_linear_experiment, run_recovery_experiment, SimulationSpec};
use rashomon::verify::{run_data_suites, run_default_suites, VerifyOptions, VerifyReport};
use rashomon::{Error, Result};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

/// Exact Rashomon partition set enumeration.
#[derive(Parser)]
#[command(name = "rps", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Enumerate the Rashomon set of a dataset and write an artifact.
    Enumerate(EnumerateArgs),
    /// Query an artifact.
    Analyze {
        artifact: PathBuf,
        #[command(subcommand)]
        query: Query,
        #[arg(long, global = true)]
        out: Option<PathBuf>,
    },
    /// Check the enumerator against exhaustive oracles.
    Verify(VerifyArgs),
    /// Run a preset simulation study.
    Simulate {
        #[command(subcommand)]
        preset: Preset,
    },
}

#[derive(Args)]
struct EnumerateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// fullsplit, greedy, map or file:PATH
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    no_cross_profile: bool,
    #[arg(long)]
    single_profile: bool,
    #[arg(long)]
    h_max: Option<usize>,
    #[arg(long)]
    max_rps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Query {
    /// Posterior mean effect of every combination.
    Effects,
    /// Per-entry treatment effect at one combination.
    Cate {
        /// Labels of the non-treatment features, comma separated.
        #[arg(long)]
        x: String,
        #[arg(long)]
        treatment: String,
        /// Report the weighted sign distribution instead of per-entry values.
        #[arg(long)]
        signs: bool,
    },
    /// Five-bin treatment effect summary for every combination.
    Bins {
        #[arg(long)]
        treatment: String,
        #[arg(long, default_value_t = 0.0)]
        tolerance: f64,
        #[arg(long)]
        weighted_sd: bool,
        /// Fixed scale separating small from large effects.
        #[arg(long)]
        sd: Option<f64>,
    },
    /// Histogram of pool counts and posterior ratios.
    Summary {
        #[arg(long)]
        splits: bool,
        #[arg(long)]
        curve: bool,
        #[arg(long, default_value_t = DEFAULT_RATIO_BINS)]
        ratio_bins: usize,
    },
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, requires = "data")]
    config: Option<PathBuf>,
    #[arg(long, requires = "config")]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    datasets: usize,
    #[arg(long, hide = true, default_value_t = 0.0, allow_hyphen_values = true)]
    inject_threshold_skew: f64,
}

#[derive(Args)]
struct SimArgs {
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Data-generating process overriding the preset, as TOML.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Preset {
    /// Two drugs with four dosages each.
    Dosage {
        #[command(flatten)]
        common: SimArgs,
        #[arg(long, default_value_t = 10)]
        samples: usize,
    },
    /// Four interventions with three intensities; coverage per ε.
    Intensity {
        #[command(flatten)]
        common: SimArgs,
        #[arg(long, default_value_t = 0.05)]
        lambda: f64,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.01, 0.02, 0.03, 0.038, 0.05])]
        epsilons: Vec<f64>,
    },
    /// Per-pool linear outcomes; prints fitted coefficients of every entry.
    Linear {
        #[command(flatten)]
        common: SimArgs,
        #[arg(long, default_value_t = 1.0)]
        noise_sd: f64,
        #[arg(long, default_value_t = sim::linear_dosage::EPSILON)]
        epsilon: f64,
    },
}

enum Failure {
    Error(Error),
    Verify(VerifyReport),
    Partial,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn emit(out: Option<&Path>, text: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_atomic(p, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn resolve_relative(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.parent().unwrap_or(Path::new("")).join(p)
    }
}

fn cmd_enumerate(a: EnumerateArgs) -> std::result::Result<(), Failure> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(v) = a.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = a.epsilon {
        cfg.epsilon = v;
    }
    if let Some(v) = a.reference {
        cfg.reference = v;
    }
    if a.no_cross_profile {
        cfg.cross_profile = false;
    }
    if a.single_profile {
        cfg.single_profile = true;
    }
    if a.h_max.is_some() {
        cfg.h_max = a.h_max;
    }
    if a.max_rps.is_some() {
        cfg.max_rps = a.max_rps;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    let data_path = match a.data {
        Some(p) => p,
        None => match &cfg.data {
            Some(p) => resolve_relative(&a.config, p),
            None => return Err(Error::InvalidParameter("no data file given".into()).into()),
        },
    };
    let out = a.out.or_else(|| cfg.out.as_ref().map(|p| resolve_relative(&a.config, p)));
    cfg.validate()?;

    let data = ingest_csv(&data_path, &cfg)?;
    let loss = cfg.loss_config();
    let opts = cfg.enumeration_options();
    let mode = cfg.reference_spec()?.resolve(data.space())?;
    let (q0, _) = reference(&data, &loss, &mode, &opts)?;
    let (rps, partial) = match enumerate_rps(&data, &loss, q0, cfg.epsilon, &opts) {
        Ok(rps) => (rps, false),
        Err(Error::CapExceeded { cap, partial }) => {
            eprintln!("rps: cardinality cap {cap} reached; writing partial result");
            (*partial, true)
        }
        Err(e) => return Err(e.into()),
    };
    let artifact = Artifact { config: cfg, data, rps, partial };
    emit(out.as_deref(), &artifact_bytes(&artifact)?)?;
    if partial {
        return Err(Failure::Partial);
    }
    Ok(())
}

fn feature_index(cfg: &RunConfig, name: &str) -> Result<usize> {
    cfg.features
        .iter()
        .position(|f| f.name == name)
        .ok_or_else(|| Error::InvalidParameter(format!("unknown feature {name:?}")))
}

fn tsv_float(v: f64) -> String {
    if v.is_nan() {
        "NA".into()
    } else {
        v.to_string()
    }
}

/// Every level vector over the features other than `treatment`, in dense order.
fn contexts(a: &Artifact, treatment: usize) -> Vec<FeatureCombination> {
    let space = a.data.space();
    let mut seen = Vec::new();
    for i in 0..space.size() {
        let mut v = space.combination(i).0;
        v.remove(treatment);
        let k = FeatureCombination::new(v);
        if !seen.contains(&k) {
            seen.push(k);
        }
    }
    seen
}

fn in_universe(a: &Artifact, x: &FeatureCombination, treatment: usize) -> bool {
    let Some(first) = a.rps.entries.first() else { return false };
    let space = a.data.space();
    [0, 1].iter().all(|&level| {
        let mut v = x.levels().to_vec();
        v.insert(treatment, level);
        space.index_of(&FeatureCombination::new(v)).is_ok_and(|c| first.partition.pool_of(c).is_some())
    })
}

fn x_labels(cfg: &RunConfig, x: &FeatureCombination, treatment: usize) -> Vec<String> {
    let others: Vec<usize> = (0..cfg.features.len()).filter(|&m| m != treatment).collect();
    x.levels()
        .iter()
        .zip(&others)
        .map(|(&l, &m)| cfg.label_of(m, l).map_or_else(|| l.to_string(), str::to_string))
        .collect()
}

fn cmd_analyze(path: &Path, query: Query) -> Result<String> {
    let a = read_artifact(path)?;
    let cfg = &a.config;
    let loss = cfg.loss_config();
    let space = a.data.space();
    let names: Vec<&str> = cfg.features.iter().map(|f| f.name.as_str()).collect();
    let mut out = String::new();
    match query {
        Query::Effects => {
            let eff = conditional_mean_effects(&a.rps, &a.data, &loss)?;
            out.push_str(&format!("index\t{}\tcount\teffect\n", names.join("\t")));
            for (i, &v) in eff.values.iter().enumerate() {
                if v.is_nan() {
                    continue;
                }
                let labels = cfg.combination_labels(&space.combination(i));
                out.push_str(&format!("{i}\t{}\t{}\t{v}\n", labels.join("\t"), a.data.cell(i).count));
            }
        }
        Query::Cate { x, treatment, signs } => {
            let t = feature_index(cfg, &treatment)?;
            let others: Vec<usize> = (0..names.len()).filter(|&m| m != t).collect();
            let items: Vec<&str> = if x.trim().is_empty() { Vec::new() } else { x.split(',').collect() };
            let levels = cfg.parse_levels(&others, &items)?;
            let values = cate(&a.rps, &a.data, &loss, &FeatureCombination::new(levels), t)?;
            if signs {
                let mut mass = [0.0; 3];
                for &(v, w) in &values {
                    mass[if v < 0.0 { 0 } else if v == 0.0 { 1 } else { 2 }] += w;
                }
                out.push_str("sign\tmass\n");
                for (label, m) in ["negative", "zero", "positive"].iter().zip(mass) {
                    out.push_str(&format!("{label}\t{m}\n"));
                }
            } else {
                out.push_str("rank\tq\tweight\tcate\n");
                for (rank, (e, (v, w))) in a.rps.entries.iter().zip(&values).enumerate() {
                    out.push_str(&format!("{rank}\t{}\t{w}\t{v}\n", e.q));
                }
            }
        }
        Query::Bins { treatment, tolerance, weighted_sd, sd } => {
            let t = feature_index(cfg, &treatment)?;
            let mut rows: Vec<(FeatureCombination, WeightedValues)> = Vec::new();
            for x in contexts(&a, t) {
                if in_universe(&a, &x, t) {
                    let v = cate(&a.rps, &a.data, &loss, &x, t)?;
                    rows.push((x, v));
                }
            }
            if rows.is_empty() {
                return Err(Error::Data("no combination has both treatment levels in the Rashomon set".into()));
            }
            let scale = match sd {
                Some(s) => s,
                None => {
                    let all: WeightedValues = rows.iter().flat_map(|r| r.1.iter().copied()).collect();
                    let s = effect_sd(&all, weighted_sd);
                    if s > 0.0 { s } else { f64::MIN_POSITIVE }
                }
            };
            let labels: Vec<&str> = Bin::ALL.iter().map(|b| b.label()).collect();
            let other_names: Vec<&str> = names.iter().enumerate().filter(|&(m, _)| m != t).map(|(_, n)| *n).collect();
            out.push_str(&format!("{}\tsd\t{}\n", other_names.join("\t"), labels.join("\t")));
            for (x, values) in &rows {
                let b = effect_binning(
                    values,
                    BinOptions { sd_scale: Some(scale), weighted_sd, zero_tolerance: tolerance },
                )?;
                let masses: Vec<String> = b.masses.iter().map(|m| m.to_string()).collect();
                let xl = x_labels(cfg, x, t);
                let sep = if xl.is_empty() { "" } else { "\t" };
                out.push_str(&format!("{}{sep}{}\t{}\n", xl.join("\t"), b.sd_scale, masses.join("\t")));
            }
        }
        Query::Summary { splits, curve, ratio_bins } => {
            let s = rps_summary(&a.rps, ratio_bins)?;
            if splits {
                out.push_str("profile\tfeature\tlevel\tfrequency\n");
                for f in &s.split_frequencies {
                    out.push_str(&format!("{}\t{}\t{}\t{}\n", f.profile.to_bits_string(), names[f.feature], f.level, f.frequency));
                }
            } else if curve {
                out.push_str("q\tnum_pools\n");
                for (q, h) in &s.curve {
                    out.push_str(&format!("{q}\t{h}\n"));
                }
            } else {
                out.push_str("num_pools\tratio_low\tratio_high\tcount\tweight\n");
                for c in &s.histogram {
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\n",
                        c.num_pools,
                        tsv_float(c.ratio_low),
                        tsv_float(c.ratio_high),
                        c.count,
                        c.weight
                    ));
                }
            }
        }
    }
    Ok(out)
}

fn cmd_verify(a: VerifyArgs) -> std::result::Result<(), Failure> {
    let opts = VerifyOptions { seed: a.seed, datasets: a.datasets, threshold_skew: a.inject_threshold_skew };
    let report = match (a.config, a.data) {
        (Some(c), Some(d)) => {
            let cfg = RunConfig::load(&c)?;
            let data = ingest_csv(&d, &cfg)?;
            run_data_suites(&data, &cfg.loss_config(), &opts)?
        }
        _ => run_default_suites(&opts)?,
    };
    print!("{}", report.to_tsv());
    if report.ok() {
        Ok(())
    } else {
        Err(Failure::Verify(report))
    }
}

fn load_spec(path: &Path) -> Result<SimulationSpec> {
    let spec: SimulationSpec =
        toml::from_str(&fs::read_to_string(path)?).map_err(|e| Error::InvalidParameter(format!("simulation spec: {e}")))?;
    spec.validate()?;
    Ok(spec)
}

fn cmd_simulate(preset: Preset) -> Result<()> {
    let (common, text) = match preset {
        Preset::Dosage { common, samples } => {
            let spec = match &common.spec {
                Some(p) => load_spec(p)?,
                None => sim::dosage::spec(samples, common.seed),
            };
            let reps = common.replications.unwrap_or(100);
            let table = run_recovery_experiment(&spec, &sim::dosage::protocol(), reps)?;
            (common, table.to_tsv())
        }
        Preset::Intensity { common, lambda, epsilons } => {
            let spec = match &common.spec {
                Some(p) => load_spec(p)?,
                None => sim::intensity::spec(common.seed),
            };
            let reps = common.replications.unwrap_or(100);
            let protocol = sim::intensity::protocol(lambda, epsilons);
            let table = run_recovery_experiment(&spec, &protocol, reps)?;
            (common, table.to_tsv())
        }
        Preset::Linear { common, noise_sd, epsilon } => {
            let spec = match &common.spec {
                Some(p) => load_spec(p)?,
                None => sim::linear_dosage::spec(noise_sd, common.seed),
            };
            let opts = rashomon::enumerate::EnumerationOptions::new();
            let exp = run_linear_experiment(
                &spec,
                &sim::linear_dosage::cfg(),
                &rashomon::enumerate::ReferenceMode::Map,
                epsilon,
                &opts,
            )?;
            match exp.truth_rank {
                Some(r) => eprintln!("rps: ground truth at rank {r} of {}", exp.rps.len()),
                None => eprintln!("rps: ground truth not in the Rashomon set of {}", exp.rps.len()),
            }
            let mut out = String::from("entry\tq\tweight\tpool\tcells\tcoefficients\n");
            for f in &exp.fits {
                let e = &exp.rps.entries[f.entry];
                let cells: Vec<String> = f.cells.iter().map(|c| c.to_string()).collect();
                let coef: Vec<String> = f.coefficients.iter().map(|c| c.to_string()).collect();
                out.push_str(&format!(
                    "{}\t{}\t{}\t{}\t{}\t{}\n",
                    f.entry,
                    e.q,
                    e.weight,
                    f.pool,
                    cells.join(","),
                    coef.join(",")
                ));
            }
            (common, out)
        }
    };
    emit(common.out.as_deref(), text.as_bytes())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidParameter(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Analyze { artifact, query, out } => {
            cmd_analyze(&artifact, query).and_then(|t| emit(out.as_deref(), t.as_bytes())).map_err(Failure::from)
        }
        Command::Verify(a) => cmd_verify(a),
        Command::Simulate { preset } => cmd_simulate(preset).map_err(Failure::from),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Partial) => ExitCode::from(EXIT_PARTIAL),
        Err(Failure::Verify(report)) => {
            for s in &report.suites {
                for f in &s.failures {
                    eprintln!("rps: {} failed: {f}", s.name);
                }
            }
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Error(e)) => {
            eprintln!("rps: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
