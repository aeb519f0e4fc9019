use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use fracbethe::diagnostics::spectral;
use fracbethe::error::{Error, Result};
use fracbethe::exact::exact_marginals;
use fracbethe::free_energy::{ray_scan, Moments};
use fracbethe::harness::{
    cmd_compare, cmd_diagnose, cmd_fig1, cmd_fig2, parse_grid, run_mp, ComparisonRow, ExperimentConfig,
    ExperimentId, GeneratorSpec, ModelSource, PartitionScheme, Table,
};
use fracbethe::message_passing::{InitScheme, MpOptions, MpStatus, Schedule};
use fracbethe::minimizer::{newton_minimize, MinimizeStatus, NewtonOptions, TraceEntry};
use fracbethe::model::{normalize, validate, AlphaAssignment, GaussianModel};

#[derive(Parser)]
#[command(name = "fracbethe", version, about = "Fractional Bethe free energies of Gaussian Markov random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check symmetry, positive definiteness and edge consistency
    Validate(ModelArgs),
    /// Spectrum of |R|, boundedness verdict and critical parameters
    Diagnose {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
    },
    /// Minimize the constrained free energy by Newton's method
    Minimize {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Initial sigma: `unit`, `exact` or a ray scale `t` along u_max
        #[arg(long, default_value = "unit")]
        init: String,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        #[arg(long)]
        trace: bool,
    },
    /// Run fractional message passing
    Mp {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[command(flatten)]
        mp: MpArgs,
        #[arg(long)]
        trace: bool,
    },
    /// Constrained free energy along t·u_max
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value = "log:0.1:1000:200")]
        t_grid: String,
        /// Write scan.csv here instead of printing
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Free energy curves of a K-regular model along the all-ones direction
    Fig1 {
        #[arg(long = "gen", default_value = "kregular:n=8,k=4,r=0.27")]
        generator: String,
        #[arg(long, default_value = "log:0.01:100:25")]
        alpha_grid: String,
        #[arg(long, default_value = "log:0.1:1000:200")]
        t_grid: String,
        /// Coupling grid of the r panel; derived from K when omitted
        #[arg(long)]
        r_grid: Option<String>,
        /// α of the r panel
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value = "out/fig1")]
        out: PathBuf,
    },
    /// Curves, Newton runs and σ errors of a random model
    Fig2 {
        #[arg(long = "gen", default_value = "random:n=8,lambda=0.9,seed=0")]
        generator: String,
        #[arg(long, default_value = "log:0.01:100:25")]
        alpha_grid: String,
        #[arg(long, default_value = "log:0.1:1000:200")]
        t_grid: String,
        #[arg(long, default_value = "log:0.1:1000:20")]
        init_t: String,
        #[command(flatten)]
        mp: MpArgs,
        #[arg(long, default_value = "out/fig2")]
        out: PathBuf,
    },
    /// Newton against message passing over an α grid
    Compare {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value = "log:0.01:100:25")]
        alpha_grid: String,
        #[command(flatten)]
        mp: MpArgs,
        /// Also write compare.csv and config.json here
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelArgs {
    /// Model JSON file
    #[arg(long)]
    model: Option<PathBuf>,
    /// Generator, e.g. `kregular:n=8,k=4,r=0.27` or `random:n=8,lambda=0.9,seed=1`
    #[arg(long = "gen")]
    generator: Option<String>,
}

impl ModelArgs {
    fn source(&self) -> Result<ModelSource> {
        match (&self.model, &self.generator) {
            (Some(path), _) => Ok(ModelSource::File(path.clone())),
            (None, Some(g)) => Ok(ModelSource::Generator(g.parse()?)),
            (None, None) => Err(Error::InvalidOptions("pass --model or --gen".into())),
        }
    }

    fn load(&self) -> Result<GaussianModel> {
        self.source()?.load()
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Synchronous,
    RoundRobin,
}

#[derive(Clone, Copy, ValueEnum)]
enum PartitionArg {
    Auto,
    Normalizable,
    Symmetric,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    Unit,
    SymmetricNormalizing,
}

#[derive(Args)]
struct MpArgs {
    #[arg(long, value_enum, default_value = "synchronous")]
    schedule: ScheduleArg,
    #[arg(long, default_value_t = 0.0)]
    damping: f64,
    /// Largest message change accepted as converged
    #[arg(long = "tol", default_value_t = 1e-10)]
    mp_tol: f64,
    /// Sweep budget
    #[arg(long = "max-iter", default_value_t = 10_000)]
    max_sweeps: usize,
    #[arg(long, value_enum, default_value = "auto")]
    partition: PartitionArg,
    #[arg(long = "msg-init", value_enum)]
    msg_init: Option<InitArg>,
}

impl MpArgs {
    fn options(&self) -> MpOptions {
        MpOptions {
            schedule: match self.schedule {
                ScheduleArg::Synchronous => Schedule::Synchronous,
                ScheduleArg::RoundRobin => Schedule::RoundRobin,
            },
            damping: self.damping,
            tolerance: self.mp_tol,
            max_sweeps: self.max_sweeps,
        }
    }

    fn partition(&self) -> PartitionScheme {
        match self.partition {
            PartitionArg::Auto => PartitionScheme::Auto,
            PartitionArg::Normalizable => PartitionScheme::Normalizable,
            PartitionArg::Symmetric => PartitionScheme::Symmetric,
        }
    }

    fn init(&self) -> Option<InitScheme> {
        self.msg_init.map(|i| match i {
            InitArg::Unit => InitScheme::Unit,
            InitArg::SymmetricNormalizing => InitScheme::SymmetricNormalizing,
        })
    }
}

fn newton_options(tol: Option<f64>, max_iter: Option<usize>, trace: bool) -> NewtonOptions {
    let d = NewtonOptions::default();
    NewtonOptions {
        tolerance: tol.unwrap_or(d.tolerance),
        max_iterations: max_iter.unwrap_or(d.max_iterations),
        trace,
        ..d
    }
}

#[derive(Serialize)]
struct MomentsOut {
    m: Vec<f64>,
    sigma: Vec<f64>,
    sigma_pair: Vec<f64>,
}

impl From<&Moments> for MomentsOut {
    fn from(m: &Moments) -> Self {
        Self { m: m.m.iter().copied().collect(), sigma: m.sigma.iter().copied().collect(), sigma_pair: m.sigma_pair.clone() }
    }
}

#[derive(Serialize)]
struct MinimizeOut {
    status: MinimizeStatus,
    /// Free energy of the normalized model.
    value: f64,
    iterations: usize,
    grad_norm: f64,
    /// Moments in the coordinates of the input model.
    moments: MomentsOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    trace: Option<Vec<TraceEntry>>,
}

#[derive(Serialize)]
struct MpOut {
    status: MpStatus,
    iterations: usize,
    residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    moments: Option<MomentsOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual_history: Option<Vec<f64>>,
}

/// Command ran, but a method required to converge did not.
struct NumericFailure;

/// Writes to stdout, treating a closed pipe as success.
fn emit(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|_| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    emit(&(serde_json::to_string_pretty(value)? + "\n"))
}

fn run(cli: Cli) -> Result<std::result::Result<(), NumericFailure>> {
    match cli.command {
        Command::Validate(args) => {
            let report = validate(&args.load()?);
            print_json(&report)?;
            report.into_result()?;
        }
        Command::Diagnose { model, alpha } => {
            print_json(&cmd_diagnose(&model.load()?, alpha)?)?;
        }
        Command::Minimize { model, alpha, init, tol, max_iter, trace } => {
            let model = normalize(&model.load()?)?;
            let alphas = AlphaAssignment::for_model(&model, alpha)?;
            let sigma = match init.as_str() {
                "unit" => DVector::from_element(model.n(), 1.0),
                "exact" => exact_marginals(model.model())?.sigma,
                t => {
                    let t: f64 = t.parse().map_err(|_| Error::InvalidOptions(format!("bad --init `{t}`")))?;
                    spectral(&model)?.positive_direction() * t
                }
            };
            let res = newton_minimize(&model, &alphas, &sigma, &newton_options(tol, max_iter, trace))?;
            let out = MinimizeOut {
                status: res.status,
                value: res.value.value,
                iterations: res.iterations,
                grad_norm: res.grad_norm,
                moments: (&model.denormalize_moments(&res.moments)).into(),
                trace: res.trace,
            };
            print_json(&out)?;
            if res.status != MinimizeStatus::Converged {
                return Ok(Err(NumericFailure));
            }
        }
        Command::Mp { model, alpha, mp, trace } => {
            let model = normalize(&model.load()?)?;
            let alphas = AlphaAssignment::for_model(&model, alpha)?;
            let spectrum = spectral(&model)?;
            let res = run_mp(&model, &alphas, &spectrum, mp.partition(), mp.init(), &mp.options())?;
            let out = MpOut {
                status: res.status,
                iterations: res.iterations,
                residual: res.residual,
                moments: res.beliefs.as_ref().map(|b| (&model.denormalize_moments(b)).into()),
                residual_history: trace.then_some(res.residual_history),
            };
            print_json(&out)?;
            if res.status != MpStatus::Converged {
                return Ok(Err(NumericFailure));
            }
        }
        Command::Scan { model, alpha, t_grid, out } => {
            let model = normalize(&model.load()?)?;
            let alphas = AlphaAssignment::for_model(&model, alpha)?;
            let u = spectral(&model)?.positive_direction();
            let mut table = Table::new(vec!["t", "value"]);
            for (t, v) in ray_scan(&model, &alphas, &u, &parse_grid(&t_grid)?)? {
                table.push(vec![format!("{t}"), format!("{v}")]);
            }
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    table.write(dir.join("scan.csv"))?;
                }
                None => emit(&table.to_csv())?,
            }
        }
        Command::Fig1 { generator, alpha_grid, t_grid, r_grid, alpha, out } => {
            let spec: GeneratorSpec = generator.parse()?;
            let mut cfg = ExperimentConfig::new(ExperimentId::Fig1, ModelSource::Generator(spec), out);
            cfg.alpha_grid = parse_grid(&alpha_grid)?;
            cfg.t_grid = parse_grid(&t_grid)?;
            if let Some(r) = r_grid {
                cfg.r_grid = parse_grid(&r)?;
            }
            cfg.fixed_alpha = alpha;
            print_json(&cmd_fig1(&cfg)?)?;
        }
        Command::Fig2 { generator, alpha_grid, t_grid, init_t, mp, out } => {
            let spec: GeneratorSpec = generator.parse()?;
            let bounded = match spec {
                GeneratorSpec::Random { lambda, .. } => lambda < 1.0,
                GeneratorSpec::KRegular { k, r, .. } => (k as f64) * r < 1.0,
            };
            let id = if bounded { ExperimentId::Fig2Bounded } else { ExperimentId::Fig2Unbounded };
            let mut cfg = ExperimentConfig::new(id, ModelSource::Generator(spec), out);
            cfg.alpha_grid = parse_grid(&alpha_grid)?;
            cfg.t_grid = parse_grid(&t_grid)?;
            cfg.init_t = parse_grid(&init_t)?;
            cfg.mp = mp.options();
            cfg.partition = mp.partition();
            cfg.init = mp.init();
            print_json(&cmd_fig2(&cfg)?)?;
        }
        Command::Compare { model, alpha_grid, mp, out } => {
            let source = model.source()?;
            let loaded = source.load()?;
            let alphas = parse_grid(&alpha_grid)?;
            let newton = NewtonOptions::default();
            let rows = cmd_compare(&loaded, &alphas, &newton, &mp.options(), mp.partition(), mp.init())?;
            let table = ComparisonRow::table(&rows);
            if let Some(dir) = out {
                let mut cfg = ExperimentConfig::new(ExperimentId::Sweep, source, dir);
                cfg.alpha_grid = alphas;
                cfg.newton = newton;
                cfg.mp = mp.options();
                cfg.partition = mp.partition();
                cfg.init = mp.init();
                cfg.prepare_output()?;
                table.write(cfg.output_dir.join("compare.csv"))?;
            }
            emit(&table.to_csv())?;
            for row in rows.iter().filter(|r| r.disagreement) {
                eprintln!("alpha {}: only one method converged", row.alpha);
            }
        }
    }
    Ok(Ok(()))
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidOptions(_) => 1,
        Error::InvalidModel(_)
        | Error::Parse(_)
        | Error::Json(_)
        | Error::Io(_)
        | Error::Infeasible(_)
        | Error::RetriesExhausted { .. }
        | Error::LengthMismatch { .. } => 2,
        Error::Domain(_)
        | Error::Convergence { .. }
        | Error::NotPairwiseNormalizable { .. }
        | Error::SchemeMismatch(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(NumericFailure)) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
