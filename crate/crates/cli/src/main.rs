use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rxalign::feasibility;
use rxalign::sweep::{self, Method, SweepResult, SweepSpec};
use rxalign::{draw_channels, solve_alternating, verify_alignment, Error, NetworkDims, SolverOpts};

#[derive(Parser, Debug)]
#[command(name = "rxalign", version, about = "Interference alignment with receive diversity: feasibility, solver and rate sweeps")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Properness of a symmetric configuration, or its DMT table when d and d' are omitted.
    Feasibility {
        k: usize,
        nt: usize,
        nr: usize,
        d: Option<usize>,
        dprime: Option<usize>,
        /// Also write the result as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Align one channel draw and report leakage and the rank check.
    Solve {
        k: usize,
        nt: usize,
        nr: usize,
        d: usize,
        dprime: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Per-link threshold on `||U_i^H H_ij V_j|| / ||H_ij||` for the alignment check.
        #[arg(long, default_value_t = 1e-3)]
        tol_align: f64,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Closed-form rates (projection receiver and the interference-aware bound).
    Analytic(SweepArgs),
    /// Monte-Carlo rates of one method.
    Montecarlo {
        #[arg(long, value_parser = parse_method)]
        method: Method,
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Full SNR sweep over several methods.
    Sweep(SweepArgs),
    /// Per-SNR deltas and curve orderings between two sweep CSV files.
    Compare { a: PathBuf, b: PathBuf },
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    tol_rank: Option<f64>,
}

impl SolverArgs {
    fn apply(&self, opts: &mut SolverOpts) {
        if let Some(v) = self.tol {
            opts.tol = v;
        }
        if let Some(v) = self.max_iters {
            opts.max_iters = v;
        }
        if let Some(v) = self.restarts {
            opts.restarts = v;
        }
        if let Some(v) = self.tol_rank {
            opts.tol_rank = v;
        }
    }
}

#[derive(Args, Debug, Clone)]
struct SweepArgs {
    /// Symmetric configuration `K N_T N_R d d'` (not needed with --preset or --config).
    #[arg(num_args = 0..=5)]
    dims: Vec<usize>,
    #[arg(long, value_parser = ["fig1", "fig2", "fig3"], conflicts_with = "config")]
    preset: Option<String>,
    /// TOML sweep configuration; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated methods.
    #[arg(long, value_delimiter = ',', value_parser = parse_method)]
    methods: Option<Vec<Method>>,
    /// SNR grid in dB, `start:step:stop` or a comma-separated list.
    #[arg(long)]
    snr: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; multi-run presets write one file per run with a suffix.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run IA methods on improper configurations.
    #[arg(long)]
    force: bool,
    /// Omit the generation-time metadata line.
    #[arg(long)]
    no_timestamp: bool,
    /// Write the resolved configuration to this path and exit.
    #[arg(long)]
    save_config: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    game_max_iters: Option<usize>,
    #[arg(long)]
    game_tol: Option<f64>,
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|e| e.to_string())
}

/// Failure with its process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Numerical(_) | Error::Precision(_) | Error::NonConvergence { .. } => 2,
            Error::Io(_) => 3,
            Error::Dimension(_) | Error::Domain(_) | Error::Format(_) => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure {
        code: 1,
        message: message.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Feasibility {
            k,
            nt,
            nr,
            d,
            dprime,
            out,
        } => cmd_feasibility(k, nt, nr, d, dprime, out.as_deref()),
        Command::Solve {
            k,
            nt,
            nr,
            d,
            dprime,
            seed,
            tol_align,
            solver,
        } => cmd_solve([k, nt, nr, d, dprime], seed, tol_align, &solver),
        Command::Analytic(args) => {
            let methods = vec![Method::IaProjectionAnalytic, Method::IaBoundThm2];
            if args.methods.as_ref().is_some_and(|m| m.iter().any(|x| !x.is_analytic())) {
                return Err(usage("analytic accepts only ia_projection_analytic and ia_bound_thm2"));
            }
            cmd_sweep(&args, Some(methods))
        }
        Command::Montecarlo { method, sweep } => {
            if method.is_analytic() {
                return Err(usage(format!("{method} is analytic; use the analytic subcommand")));
            }
            cmd_sweep(&sweep, Some(vec![method]))
        }
        Command::Sweep(args) => cmd_sweep(&args, None),
        Command::Compare { a, b } => {
            let ra = sweep::read_csv_file(&a)?;
            let rb = sweep::read_csv_file(&b)?;
            print!("{}", sweep::compare(&ra, &rb));
            Ok(())
        }
    }
}

fn cmd_feasibility(
    k: usize,
    nt: usize,
    nr: usize,
    d: Option<usize>,
    dprime: Option<usize>,
    out: Option<&Path>,
) -> CliResult<()> {
    let mut csv = String::new();
    match (d, dprime) {
        (Some(d), Some(dp)) => {
            let report = feasibility::is_proper_symmetric(k, nt, nr, d, dp)?;
            let verdict = if report.proper { "proper" } else { "improper" };
            println!("{verdict}, margin {}", report.margin);
            if let Some(w) = &report.witness {
                println!("witness: {w:?}");
            }
            for w in &report.warnings {
                println!("warning: {w}");
            }
            csv.push_str("k,nt,nr,d,dprime,proper,margin\n");
            csv.push_str(&format!("{k},{nt},{nr},{d},{dp},{},{}\n", report.proper, report.margin));
        }
        (None, None) => {
            let points = feasibility::enumerate_dmt_points(k, nt, nr);
            println!("{} proper (d, d') points for K={k}, {nt}x{nr}", points.len());
            println!("{:>3} {:>3} {:>9} {:>6}", "d", "d'", "diversity", "margin");
            csv.push_str("d,dprime,diversity,margin\n");
            for p in &points {
                println!("{:>3} {:>3} {:>9} {:>6}", p.d, p.dprime, p.diversity(), p.margin);
                csv.push_str(&format!("{},{},{},{}\n", p.d, p.dprime, p.diversity(), p.margin));
            }
        }
        _ => return Err(usage("give both d and d', or neither")),
    }
    if let Some(path) = out {
        std::fs::write(path, csv)?;
    }
    Ok(())
}

fn cmd_solve(shape: [usize; 5], seed: u64, tol_align: f64, args: &SolverArgs) -> CliResult<()> {
    let [k, nt, nr, d, dprime] = shape;
    let dims = NetworkDims::symmetric(k, nt, nr, d, dprime)?;
    let report = feasibility::check_dims(&dims)?;
    if !report.proper {
        eprintln!("warning: configuration is not proper (margin {})", report.margin);
    }
    let channels = draw_channels(&dims, seed)?;
    let mut opts = SolverOpts {
        init_seed: seed,
        ..SolverOpts::default()
    };
    args.apply(&mut opts);
    let sol = solve_alternating(&channels, &dims, &opts)?;
    let check = verify_alignment(&channels, &sol, tol_align, opts.tol_rank)?;
    println!("converged: {}", sol.converged);
    println!("iterations: {}", sol.iterations);
    println!("leakage: {:e}", sol.residual_leakage);
    println!("aligned: {}", check.aligned);
    println!("ranks_ok: {}", check.ranks_ok);
    let sv: Vec<String> = check.min_singular.iter().map(|s| format!("{s:.4e}")).collect();
    println!("min_singular: {}", sv.join(" "));
    Ok(())
}

/// Builds the list of labelled specs from a preset, a config file or positional dims.
fn resolve_specs(args: &SweepArgs, forced_methods: Option<Vec<Method>>) -> CliResult<Vec<(String, SweepSpec)>> {
    let mut specs = if let Some(name) = &args.preset {
        if !args.dims.is_empty() {
            return Err(usage("positional dimensions cannot be combined with --preset"));
        }
        sweep::preset(name)?
    } else if let Some(path) = &args.config {
        if !args.dims.is_empty() {
            return Err(usage("positional dimensions cannot be combined with --config"));
        }
        vec![(String::new(), SweepSpec::load(path)?)]
    } else {
        let [k, nt, nr, d, dp] = args.dims[..] else {
            return Err(usage("expected K N_T N_R d d', --preset or --config"));
        };
        let methods = vec![Method::IaOptimum, Method::IaProjection, Method::IaBoundThm2, Method::IaProjectionAnalytic];
        vec![(String::new(), SweepSpec::symmetric(k, nt, nr, d, dp, methods)?)]
    };
    let snr = args.snr.as_deref().map(sweep::parse_snr_grid).transpose()?;
    for (_, spec) in specs.iter_mut() {
        if let Some(m) = &forced_methods {
            // keep the preset's choice when it is a subset of what the subcommand allows
            let allowed: Vec<Method> = spec.methods.iter().copied().filter(|x| m.contains(x)).collect();
            spec.methods = if allowed.is_empty() || m.len() == 1 { m.clone() } else { allowed };
        }
        if let Some(m) = &args.methods {
            spec.methods = m.clone();
        }
        if let Some(s) = &snr {
            spec.snr_db = s.clone();
        }
        if let Some(t) = args.trials {
            spec.trials = t;
        }
        if let Some(s) = args.seed {
            spec.seed = s;
        }
        args.solver.apply(&mut spec.solver);
        if let Some(v) = args.game_max_iters {
            spec.game.max_iters = v;
        }
        if let Some(v) = args.game_tol {
            spec.game.tol = v;
        }
        spec.validate()?;
    }
    Ok(specs)
}

fn suffixed(path: &Path, label: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sweep");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{label}.{ext}"),
        None => format!("{stem}_{label}"),
    };
    path.with_file_name(name)
}

fn cmd_sweep(args: &SweepArgs, forced_methods: Option<Vec<Method>>) -> CliResult<()> {
    let specs = resolve_specs(args, forced_methods)?;
    let multi = specs.len() > 1;
    if let Some(path) = &args.save_config {
        for (label, spec) in &specs {
            let target = if multi { suffixed(path, label) } else { path.clone() };
            spec.save(&target)?;
            eprintln!("wrote {}", target.display());
        }
        return Ok(());
    }
    for (label, spec) in &specs {
        if !label.is_empty() {
            log::info!("run {label}");
        }
        let result: SweepResult = sweep::run_sweep(spec, args.force)?;
        match &args.out {
            Some(path) => {
                let target = if multi { suffixed(path, label) } else { path.clone() };
                let file = File::create(&target)?;
                let mut w = BufWriter::new(file);
                result.write_csv(&mut w, !args.no_timestamp)?;
                w.flush()?;
                eprintln!("wrote {}", target.display());
            }
            None => {
                let stdout = io::stdout();
                let mut lock = stdout.lock();
                if multi {
                    writeln!(lock, "# run={label}")?;
                }
                result.write_csv(&mut lock, !args.no_timestamp)?;
            }
        }
    }
    Ok(())
}
