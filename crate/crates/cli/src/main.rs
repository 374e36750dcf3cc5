use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twolocus::accuracy::AccuracyOptions;
use twolocus::coalescent::{AncState, McModel};
use twolocus::error::{Error, Result};
use twolocus::gaussian::SamplerMode;
use twolocus::model::ModelParams;
use twolocus::moran::MoranParams;
use twolocus::oracle::SolveOptions;
use twolocus_cli::*;

/// Default mutation rate of the accuracy experiment.
const TABLE1_THETA: f64 = 0.01;

#[derive(Parser)]
#[command(
    name = "twolocus",
    version,
    about = "Two-locus sampling distributions and simulators"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sampling probabilities: asymptotic terms, partial sums, Pade values and exact values.
    Q(QArgs),
    /// Relative-error distribution over all dimorphic samples of size n.
    Table1(Table1Args),
    /// Simulators.
    #[command(subcommand)]
    Sim(SimCommand),
}

#[derive(Args)]
struct QArgs {
    /// Model parameters (JSON).
    #[arg(long)]
    params: PathBuf,
    /// Sample configuration or array of configurations (JSON).
    #[arg(
        long,
        conflicts_with = "enumerate",
        required_unless_present = "enumerate"
    )]
    config: Option<PathBuf>,
    /// Use every fully observed configuration of this size.
    #[arg(long)]
    enumerate: Option<u32>,
    /// Recombination rates (defaults to the one in the parameter file).
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// Truncation orders of the Gaussian-model series.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<usize>,
    /// Also solve for the exact probability.
    #[arg(long)]
    exact: bool,
    /// Directory for cached exact values.
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Cap on the number of states held by the exact solver.
    #[arg(long)]
    state_cap: Option<usize>,
    /// Report unordered probabilities (ordered ones times the multinomial coefficient).
    #[arg(long)]
    unordered: bool,
    /// Do not clamp approximants to [0, 1].
    #[arg(long)]
    no_clamp: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Table1Args {
    /// Sample size.
    #[arg(long, default_value_t = 8)]
    enumerate: u32,
    /// Biallelic model parameters (JSON); defaults to symmetric PIM with theta 0.01.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [25.0, 50.0, 100.0, 200.0])]
    rho: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0, 1, 2, 4, 6])]
    lambda: Vec<usize>,
    #[arg(long)]
    cache: Option<PathBuf>,
    #[arg(long)]
    state_cap: Option<usize>,
    /// Full report with per-configuration errors (JSON).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Replicates {
    #[arg(long, default_value_t = 1000)]
    reps: u64,
    /// Random seed; one is generated and reported when omitted.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Pattern {
    /// Lineages ancestral to locus A only.
    #[arg(long, default_value_t = 0)]
    a: u32,
    /// Lineages ancestral to locus B only.
    #[arg(long, default_value_t = 0)]
    b: u32,
    /// Lineages ancestral to both loci.
    #[arg(long, default_value_t = 2)]
    c: u32,
}

#[derive(Subcommand)]
enum SimCommand {
    /// Two-locus Moran model trajectories (CSV).
    Moran {
        /// Moran parameters (JSON).
        #[arg(long)]
        params: PathBuf,
        /// Initial haplotype counts, a K x L matrix (JSON).
        #[arg(long)]
        init: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        horizon: f64,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        /// Diagnostics summary (JSON); printed to standard output when omitted.
        #[arg(long)]
        summary: Option<PathBuf>,
        #[command(flatten)]
        rep: Replicates,
    },
    /// Draws from the stationary Gaussian diffusion (CSV).
    Gaussian {
        #[arg(long)]
        params: PathBuf,
        /// Redraw until haplotype frequencies lie in [0, 1], at most this many times.
        #[arg(long)]
        reject: Option<usize>,
        #[command(flatten)]
        rep: Replicates,
    },
    /// Event logs of the ancestral process with recombination rate rho ("c")
    /// or of the artificial-recombination process ("d").
    Coalescent {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "c")]
        process: String,
        #[command(flatten)]
        pattern: Pattern,
        #[command(flatten)]
        rep: Replicates,
    },
    /// Failure frequencies of the coupled processes.
    Coupling {
        #[arg(long)]
        rho: f64,
        #[command(flatten)]
        pattern: Pattern,
        #[command(flatten)]
        rep: Replicates,
    },
    /// Monte Carlo estimates of sampling probabilities.
    Estimate {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// arg, loose or independent.
        #[arg(long, default_value = "arg")]
        model: String,
        #[command(flatten)]
        rep: Replicates,
    },
}

fn seed_or_generate(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s: u64 = rand::random();
        eprintln!("{}", serde_json::json!({ "generated_seed": s }));
        s
    })
}

fn solve_options(state_cap: Option<usize>) -> SolveOptions {
    let mut opts = SolveOptions::default();
    if let Some(cap) = state_cap {
        opts.state_cap = cap;
    }
    opts
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut stdout = stdout.lock();
    match cli.command {
        Command::Q(args) => {
            let params = load_params(&args.params)?;
            let configs = match (&args.config, args.enumerate) {
                (Some(path), _) => load_configs(path)?,
                (None, Some(n)) => enumerate_full(params.k, params.l, n)?,
                (None, None) => {
                    return Err(Error::InvalidArgument(
                        "give --config or --enumerate".into(),
                    ))
                }
            };
            let rhos = if args.rho.is_empty() {
                vec![params.rho]
            } else {
                args.rho
            };
            let spec = QSpec {
                params,
                configs,
                rhos,
                lambdas: args.lambda,
                exact: args.exact,
                cache: args.cache,
                unordered: args.unordered,
                clamp: !args.no_clamp,
                solve: solve_options(args.state_cap),
            };
            let mut out = sink(args.out.as_deref(), &mut stdout)?;
            cmd_q(&spec, &mut out)?;
            out.flush()?;
        }
        Command::Table1(args) => {
            let mut opts = AccuracyOptions::new(args.enumerate, TABLE1_THETA);
            if let Some(path) = &args.params {
                opts.base = load_params(path)?;
            }
            opts.rhos = args.rho;
            opts.lambdas = args.lambda;
            opts.solve = solve_options(args.state_cap);
            let report = cmd_table1(&opts, args.cache.as_deref(), &mut stdout)?;
            if let Some(path) = &args.out {
                let mut f = io::BufWriter::new(std::fs::File::create(path)?);
                serde_json::to_writer(&mut f, &report)?;
                f.write_all(b"\n")?;
                f.flush()?;
            }
        }
        Command::Sim(sim) => run_sim(sim, &mut stdout)?,
    }
    Ok(())
}

fn run_sim(sim: SimCommand, stdout: &mut dyn Write) -> Result<()> {
    match sim {
        SimCommand::Moran {
            params,
            init,
            horizon,
            dt,
            summary,
            rep,
        } => {
            let spec = MoranSpec {
                params: read_json::<MoranParams>(&params)?,
                init: read_json(&init)?,
                horizon,
                dt,
                reps: rep.reps as usize,
                seed: seed_or_generate(rep.seed),
            };
            let mut sink_out = Vec::new();
            let mut out = sink(rep.out.as_deref(), &mut sink_out)?;
            let mut summary_buf = Vec::new();
            cmd_sim_moran(&spec, &mut out, &mut summary_buf)?;
            out.flush()?;
            drop(out);
            match summary {
                Some(path) => std::fs::write(path, &summary_buf)?,
                None => stdout.write_all(&summary_buf)?,
            }
            stdout.write_all(&sink_out)?;
        }
        SimCommand::Gaussian {
            params,
            reject,
            rep,
        } => {
            let p: ModelParams = load_params(&params)?;
            let mode = reject.map_or(SamplerMode::Raw, |cap| SamplerMode::Reject { cap });
            let seed = seed_or_generate(rep.seed);
            let mut out = sink(rep.out.as_deref(), stdout)?;
            cmd_sim_gaussian(&p, mode, rep.reps, seed, &mut out)?;
            out.flush()?;
        }
        SimCommand::Coalescent {
            params,
            process,
            pattern,
            rep,
        } => {
            let p = load_params(&params)?;
            let seed = seed_or_generate(rep.seed);
            let mut out = sink(rep.out.as_deref(), stdout)?;
            cmd_sim_process(
                &p,
                &process,
                AncState::sample(pattern.a, pattern.b, pattern.c),
                rep.reps,
                seed,
                &mut out,
            )?;
            out.flush()?;
        }
        SimCommand::Coupling { rho, pattern, rep } => {
            let seed = seed_or_generate(rep.seed);
            let mut out = sink(rep.out.as_deref(), stdout)?;
            cmd_sim_coupling(
                AncState::sample(pattern.a, pattern.b, pattern.c),
                rho,
                rep.reps,
                seed,
                &mut out,
            )?;
            out.flush()?;
        }
        SimCommand::Estimate {
            params,
            config,
            model,
            rep,
        } => {
            let p = load_params(&params)?;
            let configs = load_configs(&config)?;
            let model: McModel = model.parse()?;
            let seed = seed_or_generate(rep.seed);
            let mut out = sink(rep.out.as_deref(), stdout)?;
            cmd_sim_estimate(&p, &configs, model, rep.reps, seed, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let message = e.to_string();
            let first = message
                .lines()
                .next()
                .unwrap_or_default()
                .trim_start_matches("error: ");
            eprintln!(
                "{}",
                serde_json::json!({ "error": "Usage", "family": "usage", "message": first })
            );
            return ExitCode::from(2);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!(
                "{}",
                serde_json::json!({ "error": "Threads", "family": "validation", "message": e.to_string() })
            );
            return ExitCode::from(3);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{}", error_json(&err));
            ExitCode::from(exit_code(err.family()) as u8)
        }
    }
}
