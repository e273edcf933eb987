use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use vacdh::bench::{self, ExperimentFile, ExperimentSpec, SweepParameter, WorkloadSource};
use vacdh::model::latency_preset;
use vacdh::workload::{ArrivalProcess, ColumnMap, DecreasingTime};
use vacdh::{CacheConfig, Error, LatencyModel, PolicyConfig, PolicyKind};

#[derive(Parser)]
#[command(
    name = "vacdh",
    version,
    about = "Delayed-hit cache simulator and experiment driver"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare policies against LRU across capacities and seeds.
    Compare(CompareArgs),
    /// Per-fetch table of real aggregate delay versus each estimator.
    Estimators(EstimatorArgs),
    /// Check the aggregate-delay distribution numerically.
    ValidateDist(ValidateArgs),
    /// Sweep omega or the learning-window size.
    Sweep(SweepArgs),
    /// Write a synthetic trace as CSV.
    GenTrace(GenTraceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Arrival {
    Poisson,
    Pareto,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// JSON experiment file; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed (repeatable); defaults to five seeds 0..=4.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Cache capacity in bytes (repeatable).
    #[arg(long = "capacity")]
    capacities: Vec<u64>,
    /// Policy to run (repeatable): LRU, LRU_MAD, LAC, CALA, VA_CDH.
    #[arg(long = "policy")]
    policies: Vec<PolicyKind>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    window_size: Option<usize>,
    #[arg(long)]
    latency_base_ms: Option<f64>,
    #[arg(long)]
    latency_coeff: Option<f64>,
    /// base10ms | base10ms-0.1ms-per-mb | base10ms-1ms-per-mb
    #[arg(long, conflicts_with_all = ["latency_base_ms", "latency_coeff"])]
    latency_preset: Option<String>,
    #[command(flatten)]
    workload: WorkloadArgs,
}

#[derive(Args, Clone)]
struct WorkloadArgs {
    /// Read requests from a CSV trace instead of generating them.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, default_value = "time_ms")]
    time_column: String,
    #[arg(long, default_value = "object_id")]
    id_column: String,
    #[arg(long, default_value = "size_bytes")]
    size_column: String,
    /// Clamp decreasing timestamps instead of rejecting the trace.
    #[arg(long)]
    clamp_time: bool,
    #[arg(long, value_enum)]
    arrival: Option<Arrival>,
    /// Aggregate request rate per ms.
    #[arg(long)]
    rate: Option<f64>,
    #[arg(long)]
    requests: Option<usize>,
    #[arg(long)]
    objects: Option<usize>,
    #[arg(long)]
    zipf: Option<f64>,
    #[arg(long)]
    min_size: Option<u64>,
    #[arg(long)]
    max_size: Option<u64>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct EstimatorArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Object to tabulate; defaults to the most requested one.
    #[arg(long)]
    object: Option<u64>,
}

#[derive(Args)]
struct ValidateArgs {
    /// `lambda,z` pair (repeatable).
    #[arg(long = "pair", value_parser = parse_pair, required = true)]
    pairs: Vec<(f64, f64)>,
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    #[arg(long, default_value_t = bench::DEFAULT_KS_SAMPLES)]
    ks_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// omega | window_size
    #[arg(long)]
    param: SweepParameter,
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<f64>,
}

#[derive(Args)]
struct GenTraceArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Output path; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lambda,z")?;
    let a = a.trim().parse().map_err(|e| format!("lambda: {e}"))?;
    let b = b.trim().parse().map_err(|e| format!("z: {e}"))?;
    Ok((a, b))
}

impl CommonArgs {
    fn spec(&self) -> vacdh::Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => ExperimentFile::load(path)?.into_spec()?,
            None => ExperimentSpec::default(),
        };
        if !self.seeds.is_empty() {
            spec.seeds = self.seeds.clone();
        }
        if let Some(d) = &self.out_dir {
            spec.out_dir = d.clone();
        }
        if !self.capacities.is_empty() {
            spec.capacities = self.capacities.clone();
        }
        if !self.policies.is_empty() {
            let base = spec.policies.first().copied().unwrap_or_default();
            spec.policies = self
                .policies
                .iter()
                .map(|&kind| PolicyConfig { kind, ..base })
                .collect();
        }
        for p in &mut spec.policies {
            if let Some(v) = self.omega {
                p.omega = v;
            }
            if let Some(v) = self.gamma {
                p.gamma = v;
            }
            if let Some(v) = self.window_size {
                p.window_size = v;
            }
        }
        if let Some(name) = &self.latency_preset {
            spec.latency = latency_preset(name)?;
        }
        if self.latency_base_ms.is_some() || self.latency_coeff.is_some() {
            spec.latency = LatencyModel::new(
                self.latency_base_ms.unwrap_or(spec.latency.base_ms),
                self.latency_coeff.unwrap_or(spec.latency.coeff_ms_per_byte),
            )?;
        }
        self.workload.apply(&mut spec.workload);
        spec.validate()?;
        Ok(spec)
    }
}

impl WorkloadArgs {
    fn apply(&self, source: &mut WorkloadSource) {
        if let Some(path) = &self.trace {
            *source = WorkloadSource::Csv {
                path: path.clone(),
                columns: ColumnMap {
                    time: self.time_column.clone(),
                    object_id: self.id_column.clone(),
                    size: self.size_column.clone(),
                },
                on_decrease: if self.clamp_time {
                    DecreasingTime::Clamp
                } else {
                    DecreasingTime::Fail
                },
            };
            return;
        }
        let WorkloadSource::Synthetic(s) = source else {
            return;
        };
        let rate = self.rate.unwrap_or(1.0 / s.arrival.mean_interarrival());
        match self.arrival {
            Some(Arrival::Poisson) => s.arrival = ArrivalProcess::Poisson { rate },
            Some(Arrival::Pareto) => s.arrival = ArrivalProcess::pareto_matching_rate(rate),
            None if self.rate.is_some() => {
                s.arrival = match s.arrival {
                    ArrivalProcess::Poisson { .. } => ArrivalProcess::Poisson { rate },
                    ArrivalProcess::Pareto { .. } => ArrivalProcess::pareto_matching_rate(rate),
                }
            }
            None => {}
        }
        if let Some(n) = self.requests {
            s.num_requests = n;
        }
        if let Some(n) = self.objects {
            s.num_objects = n;
        }
        if let Some(a) = self.zipf {
            s.zipf_exponent = a;
        }
        if let Some(lo) = self.min_size {
            s.size_range[0] = lo;
        }
        if let Some(hi) = self.max_size {
            s.size_range[1] = hi;
        }
    }
}

fn run(cli: Cli) -> vacdh::Result<ExitCode> {
    match cli.command {
        Command::Compare(args) => {
            let spec = args.common.spec()?;
            let out = bench::cmd_compare(&spec)?;
            bench::write_compare(&out, &spec.out_dir)?;
            for s in &out.summary {
                println!(
                    "capacity={} policy={} improvement mean={:.6} min={:.6} max={:.6}",
                    s.capacity_bytes,
                    s.label,
                    s.improvement_mean,
                    s.improvement_min,
                    s.improvement_max
                );
            }
        }
        Command::Estimators(args) => {
            let spec = args.common.spec()?;
            let seed = spec.seeds[0];
            let trace = spec.workload.load(seed)?;
            let policy = if args.common.policies.is_empty() {
                PolicyConfig {
                    kind: PolicyKind::Lru,
                    ..spec.policies[0]
                }
            } else {
                spec.policies[0]
            };
            let config = CacheConfig {
                capacity: spec.capacities[0],
                policy,
                seed,
            };
            let out = bench::cmd_estimators(&trace, args.object, &config, &spec.latency)?;
            let path = spec.out_dir.join("estimators.csv");
            bench::write_csv_rows(&out.rows, &path)?;
            if out.rows.is_empty() {
                // The header is still useful downstream.
                fs::write(
                    &path,
                    "fetch_index,real_aggdelay,mad_est,lac_est,cala_est,vacdh_mean,vacdh_mean_plus_sigma\n",
                )?;
            }
            println!(
                "object={} fetches={} -> {}",
                out.object,
                out.rows.len(),
                path.display()
            );
        }
        Command::ValidateDist(args) => {
            let report = bench::cmd_validate_distribution(
                &args.pairs,
                args.samples,
                args.ks_samples,
                args.seed,
            )?;
            let json = serde_json::to_string_pretty(&report)?;
            match &args.out {
                Some(p) => fs::write(p, json)?,
                None => println!("{json}"),
            }
            for e in &report.entries {
                eprintln!(
                    "lambda={} z={} {} (norm {:.2e}, mc mean {:.3e}, mc var {:.3e}, ks {:.4}/{:.4})",
                    e.lambda,
                    e.z,
                    if e.passed { "PASS" } else { "FAIL" },
                    e.normalization_error,
                    e.mc_mean_rel_err,
                    e.mc_var_rel_err,
                    e.ks,
                    e.ks_threshold
                );
            }
            if !report.all_passed {
                return Ok(ExitCode::from(1));
            }
        }
        Command::Sweep(args) => {
            let spec = args.common.spec()?;
            let rows = bench::cmd_sweep(args.param, &args.values, &spec)?;
            let path = spec.out_dir.join("sweep.csv");
            bench::write_csv_rows(&rows, &path)?;
            for r in &rows {
                println!(
                    "{:?}={} capacity={} policy={} improvement mean={:.6}",
                    r.parameter, r.value, r.capacity_bytes, r.policy, r.improvement_mean
                );
            }
        }
        Command::GenTrace(args) => {
            let spec = args.common.spec()?;
            let WorkloadSource::Synthetic(mut s) = spec.workload else {
                return Err(Error::InvalidArgument(
                    "gen-trace needs a synthetic workload".into(),
                ));
            };
            s.seed = spec.seeds[0];
            let n = match &args.output {
                Some(p) => bench::cmd_gen_trace(&s, BufWriter::new(File::create(p)?))?,
                None => bench::cmd_gen_trace(&s, io::stdout().lock())?,
            };
            log::info!("wrote {n} requests");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Validation(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
