use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use noir_core::dynamics::{spectrum_check, LtiTraffic, SpectrumReport};
use noir_core::export::{write_diagnostics, write_trajectory, write_zeta_table};
use noir_core::scenario::{load_scenario, parse_graph_only, Scenario, ScenarioError, ScenarioFile};
use noir_core::sweep::{run_sweep, sweep_zeta, SweepError, SweepOptions};

mod plots;

/// Optimal inlet metering for road networks.
///
/// Exit codes: 0 success, 1 a check failed, 2 usage error, 3 scenario parse
/// error, 4 scenario validation error, 5 solver error, 6 I/O error.
#[derive(Debug, Parser)]
#[command(name = "noir", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check graph structure, path conditions, outflow bound and spectrum.
    Validate { scenario: PathBuf },
    /// Run the forward-backward sweep and write trajectory and diagnostics CSVs.
    Optimize {
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Also write SVG plots of inflows, net outflow and densities.
        #[arg(long)]
        plots: bool,
        /// Add co-state columns to the trajectory CSV.
        #[arg(long)]
        lambda: bool,
    },
    /// Run one sweep per ζ with R = ζI and tabulate max |λ0|.
    ZetaSweep {
        scenario: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated ζ values; overrides the scenario's [zeta] table.
        #[arg(long, value_delimiter = ',')]
        zeta: Option<Vec<f64>>,
    },
    /// Write a complete scenario with random routing around a [graph] table.
    Generate {
        /// TOML file holding a [graph] table; other tables are ignored.
        graph: PathBuf,
        #[arg(long)]
        seed: u64,
        /// Output file; stdout when omitted.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the eigenvalues of the state matrix and the stability verdicts.
    Spectrum { scenario: PathBuf },
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Output directory, created if missing.
    #[arg(short, long, default_value = "out")]
    output: PathBuf,
    /// Stop once the control changes by less than 1e-10 between iterations.
    #[arg(long)]
    early_exit: bool,
    /// Worker threads for per-grid-point work; 1 runs sequentially, 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Run even if the path conditions fail.
    #[arg(long)]
    allow_disconnected: bool,
}

#[derive(Debug)]
enum Failure {
    Check,
    Scenario(ScenarioError),
    Solver(SweepError),
    Io(String, io::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Check => 1,
            Failure::Scenario(ScenarioError::Parse(_)) => 3,
            Failure::Scenario(ScenarioError::Validation { .. }) => 4,
            Failure::Scenario(ScenarioError::Io { .. }) => 6,
            Failure::Solver(SweepError::ConnectivityRefused(_)) => 4,
            Failure::Solver(_) => 5,
            Failure::Io(..) => 6,
        }
    }
}

impl From<ScenarioError> for Failure {
    fn from(e: ScenarioError) -> Self {
        Failure::Scenario(e)
    }
}

impl From<SweepError> for Failure {
    fn from(e: SweepError) -> Self {
        Failure::Solver(e)
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| Failure::Io(path.display().to_string(), e)
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> Failure + '_ {
    move |e| Failure::Io(path.display().to_string(), e.into())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { scenario } => validate(&scenario),
        Command::Optimize { scenario, run, plots, lambda } => optimize(&scenario, &run, plots, lambda),
        Command::ZetaSweep { scenario, run, zeta } => zeta_sweep(&scenario, &run, zeta),
        Command::Generate { graph, seed, output } => generate(&graph, seed, output.as_deref()),
        Command::Spectrum { scenario } => spectrum(&scenario),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            match &failure {
                Failure::Check => {}
                Failure::Scenario(e) => eprintln!("error: {e}"),
                Failure::Solver(e) => eprintln!("error: {e}"),
                Failure::Io(path, e) => eprintln!("error: {path}: {e}"),
            }
            ExitCode::from(failure.code())
        }
    }
}

fn print_spectrum(report: &SpectrumReport) {
    println!(
        "spectrum: max Re μ = {:.6e} ({}), max |μ + 1| = {:.9} ({})",
        report.max_real_part,
        if report.hurwitz { "Hurwitz" } else { "NOT Hurwitz" },
        report.max_disk_radius,
        if report.in_unit_disk_at_minus_one { "inside unit disk at -1" } else { "OUTSIDE unit disk at -1" },
    );
}

fn validate(path: &Path) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    println!(
        "graph: ok ({} roads: {} inlets, {} outlets, {} interior)",
        s.graph.len(),
        s.graph.n_inlets(),
        s.graph.n_outlets(),
        s.graph.n_interior()
    );
    let report = s.graph.check_connectivity(s.options.connectivity);
    println!("{report}");

    let bound = s.diagram.feasible_outflow_bound();
    let violations = s.diagram.outflow_violations(&s.graph, &s.routing);
    if violations.is_empty() {
        println!("outflow bound: ok (every p ≤ {bound})");
    } else {
        for (road, p) in &violations {
            println!("outflow bound: FAIL road {road} has p = {p} > {bound}");
        }
    }

    let spec = spectrum_check(&LtiTraffic::assemble(&s.graph, &s.routing).a)
        .map_err(|e| Failure::Solver(SweepError::InvalidInput(e.to_string())))?;
    print_spectrum(&spec);

    if report.is_satisfied() && violations.is_empty() && spec.hurwitz && spec.in_unit_disk_at_minus_one {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}

fn configure(s: &Scenario, run: &RunArgs) -> Result<SweepOptions, Failure> {
    if run.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(run.threads)
            .build_global()
            .map_err(|e| Failure::Solver(SweepError::InvalidInput(e.to_string())))?;
    }
    fs::create_dir_all(&run.output).map_err(io_err(&run.output))?;
    Ok(SweepOptions {
        early_exit: run.early_exit || s.options.early_exit,
        parallel: run.threads != 1,
        allow_disconnected: run.allow_disconnected || s.options.allow_disconnected,
        ..s.options
    })
}

fn optimize(path: &Path, run: &RunArgs, plots: bool, lambda: bool) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    let opts = configure(&s, run)?;
    let state = run_sweep(&s.graph, &s.routing, &s.cost, &s.x0, &opts)?;

    let trajectory = run.output.join("trajectory.csv");
    let file = File::create(&trajectory).map_err(io_err(&trajectory))?;
    write_trajectory(BufWriter::new(file), &s.graph, &s.routing, &state, lambda).map_err(csv_err(&trajectory))?;
    let diagnostics = run.output.join("diagnostics.csv");
    let file = File::create(&diagnostics).map_err(io_err(&diagnostics))?;
    write_diagnostics(BufWriter::new(file), &state.iterations).map_err(csv_err(&diagnostics))?;

    let last = state.iterations.last().expect("at least one iteration");
    let z = state.net_outlet_outflow(&s.routing);
    println!("iterations: {}", state.iterate());
    println!("cost: {}", last.cost);
    println!("terminal co-state residual: {:.3e}", last.terminal_residual);
    println!("net outlet outflow at t_f: {}", z.last().unwrap());
    println!("inflow at t_f: {:?}", state.u.last().unwrap().as_slice());
    if last.boundary_active > 0 {
        println!("note: {} control entries sit at zero (one inlet may carry the whole budget)", last.boundary_active);
    }
    let rising = state.iterations.windows(2).skip(1).filter(|w| w[1].cost > w[0].cost).count();
    if rising > 0 {
        println!("note: cost rose in {rising} of the later iterations");
    }
    let dense = s.diagram.check_density_constraint(&s.graph, &state.x);
    match dense.iter().max_by(|a, b| a.value.total_cmp(&b.value)) {
        None => println!("density cap: ok (all x ≤ {})", s.diagram.rho_max()),
        Some(worst) => println!(
            "density cap: {} violations, worst road {} at t = {} with {}",
            dense.len(),
            worst.node,
            state.grid.time(worst.step),
            worst.value
        ),
    }

    if plots {
        plots::write_all(&run.output, &s, &state, &z).map_err(|e| Failure::Io(run.output.display().to_string(), e))?;
    }
    println!("wrote {}", run.output.display());
    Ok(())
}

fn zeta_sweep(path: &Path, run: &RunArgs, zeta: Option<Vec<f64>>) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    let opts = configure(&s, run)?;
    let zetas = zeta.unwrap_or_else(|| s.zetas.clone());
    if zetas.is_empty() {
        return Err(Failure::Solver(SweepError::InvalidInput("no ζ values: pass --zeta or add a [zeta] table".into())));
    }
    let rows = sweep_zeta(&s.graph, &s.routing, &s.cost, &s.x0, &opts, &zetas)?;
    let table = run.output.join("zeta.csv");
    let file = File::create(&table).map_err(io_err(&table))?;
    write_zeta_table(BufWriter::new(file), &rows).map_err(csv_err(&table))?;
    for r in &rows {
        println!("ζ = {}: max |λ0| = {}", r.zeta, r.max_abs_lambda0);
    }
    println!("wrote {}", table.display());
    Ok(())
}

fn generate(path: &Path, seed: u64, output: Option<&Path>) -> Result<(), Failure> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let g = parse_graph_only(&text)?;
    let file = ScenarioFile::generated(&g, seed)
        .map_err(|e| Failure::Scenario(ScenarioError::Validation { section: "routing", source: e.into() }))?;
    let body = file.to_toml();
    match output {
        Some(out) => fs::write(out, body).map_err(io_err(out)),
        None => io::stdout().write_all(body.as_bytes()).map_err(io_err(Path::new("<stdout>"))),
    }
}

fn spectrum(path: &Path) -> Result<(), Failure> {
    let s = load_scenario(path)?;
    let report = spectrum_check(&LtiTraffic::assemble(&s.graph, &s.routing).a)
        .map_err(|e| Failure::Solver(SweepError::InvalidInput(e.to_string())))?;
    for mu in &report.eigenvalues {
        println!("{:.12} {:+.12}i", mu.re, mu.im);
    }
    print_spectrum(&report);
    if report.hurwitz && report.in_unit_disk_at_minus_one {
        Ok(())
    } else {
        Err(Failure::Check)
    }
}
