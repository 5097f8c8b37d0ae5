use bh_cli::error::CliError;
use bh_cli::plot::plot_dir;
use bh_cli::run::run_scenario;
use bh_cli::scenario::{builtin, Scenario};
use bh_core::lindblad::{analytic_current, steady_covariance, DrivenChainSpec};
use bh_core::thermal::ThermalPoint;
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};

/// Pseudoclassical Bose-Hubbard simulator.
#[derive(Parser)]
#[command(name = "bhsim", version)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        scenario: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Bose-Einstein moments or occupations; CSV on stdout.
    ThermalState(ThermalArgs),
    /// Single thermal ring: SPDM relaxation, energies, Lyapunov exponents.
    Relax(Builtin),
    /// Two rings at different temperatures joined at one site.
    Equilibrate(Builtin),
    /// Two rings joined by a chain: particle transport and relaxation rate.
    Transport(Builtin),
    /// Lyapunov exponent sweeps over temperature, interaction and size.
    Lyapunov(Builtin),
    /// Strong interaction at high temperature: energy histograms and refit.
    AppendixB(Builtin),
    /// Steady state of the reservoir-driven free chain.
    Lindblad(LindbladArgs),
    /// Draw figure.svg from a run directory.
    Plot { dir: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_traj: Option<usize>,
}

#[derive(Args)]
struct Builtin {
    /// Replace the built-in scenario with this file.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Print the scenario as TOML and exit.
    #[arg(long)]
    print_scenario: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ThermalArgs {
    #[arg(long)]
    m: usize,
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    #[arg(long, value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    mu: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    n_bar: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    e_bar: Vec<f64>,
    /// Print one row per Bloch mode.
    #[arg(long)]
    occupations: bool,
    /// Shift occupations by half the Brillouin zone.
    #[arg(long)]
    shifted: bool,
}

#[derive(Args)]
struct LindbladArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 5])]
    l: Vec<usize>,
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    #[arg(long)]
    gamma: f64,
    /// Right reservoir rate; defaults to `--gamma`.
    #[arg(long)]
    gamma_right: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    n_left: f64,
    #[arg(long, default_value_t = 0.0)]
    n_right: f64,
    /// Directory for the steady-state covariance matrices.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => fail(&CliError::Usage(e.render().to_string().trim_end().to_string())),
    };
    let result = match cli.workers {
        Some(0) => Err(CliError::Usage("--workers must be at least 1".into())),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(CliError::Usage(format!("cannot start {n} workers: {e}"))),
        },
        None => dispatch(cli.command),
    };
    if let Err(e) = result {
        fail(&e);
    }
}

fn fail(e: &CliError) -> ! {
    let json = serde_json::to_string(&e.record()).expect("error record serializes");
    eprintln!("{json}");
    std::process::exit(e.exit_code());
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run { scenario, common } => execute(Scenario::from_path(&scenario)?, common),
        Command::ThermalState(a) => thermal_state(&a),
        Command::Relax(b) => builtin_run("relax", b),
        Command::Equilibrate(b) => builtin_run("equilibrate", b),
        Command::Transport(b) => builtin_run("transport", b),
        Command::Lyapunov(b) => builtin_run("lyapunov_sweep", b),
        Command::AppendixB(b) => builtin_run("appendix_b", b),
        Command::Lindblad(a) => lindblad(&a),
        Command::Plot { dir } => {
            let path = plot_dir(&dir)?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn builtin_run(name: &str, b: Builtin) -> Result<(), CliError> {
    let scenario = match &b.scenario {
        Some(p) => Scenario::from_path(p)?,
        None => Scenario::from_toml(builtin(name).expect("built-in scenario exists"))?,
    };
    if b.print_scenario {
        print!("{}", scenario.to_toml());
        return Ok(());
    }
    execute(scenario, b.common)
}

fn execute(mut scenario: Scenario, common: Common) -> Result<(), CliError> {
    if let Some(s) = common.seed {
        scenario.run.seed = s;
    }
    if let Some(n) = common.n_traj {
        scenario.run.n_traj = n;
    }
    let out = common.out.unwrap_or_else(|| Path::new("out").join(&scenario.name));
    let manifest = run_scenario(&scenario, &out)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    println!("{}", out.join("manifest.json").display());
    Ok(())
}

fn thermal_state(a: &ThermalArgs) -> Result<(), CliError> {
    let list = |v: &[f64]| if v.is_empty() { vec![None] } else { v.iter().map(|x| Some(*x)).collect() };
    let mut points = Vec::new();
    for beta in list(&a.beta) {
        for mu in list(&a.mu) {
            for n in list(&a.n_bar) {
                for e in list(&a.e_bar) {
                    let p = match (beta, mu, n, e) {
                        (Some(b), Some(mu), None, None) => ThermalPoint::from_beta_mu(b, mu, a.m, a.j)?,
                        (Some(b), None, Some(n), None) => ThermalPoint::from_beta_density(b, n, a.m, a.j)?,
                        (None, None, Some(n), Some(e)) => ThermalPoint::from_density_energy(n, e, a.m, a.j)?,
                        _ => {
                            return Err(CliError::Usage(
                                "give one of --beta/--mu, --beta/--n-bar or --n-bar/--e-bar".into(),
                            ))
                        }
                    };
                    points.push(p);
                }
            }
        }
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let io = |e| CliError::io(Path::new("<stdout>"), e);
    if a.occupations {
        writeln!(w, "m,beta,mu,k,E_k,n_k").map_err(io)?;
        for p in &points {
            for (k, (e, n)) in p.energies().iter().zip(p.occupations(a.shifted)).enumerate() {
                writeln!(w, "{},{},{},{k},{e},{n}", p.m, p.beta, p.mu).map_err(io)?;
            }
        }
    } else {
        writeln!(w, "m,beta,mu,n_bar,e_bar").map_err(io)?;
        for p in &points {
            writeln!(w, "{},{},{},{},{}", p.m, p.beta, p.mu, p.n_bar, p.e_bar).map_err(io)?;
        }
    }
    Ok(())
}

fn lindblad(a: &LindbladArgs) -> Result<(), CliError> {
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let io = |e| CliError::io(Path::new("<stdout>"), e);
    writeln!(w, "L,gamma_left,gamma_right,current,analytic").map_err(io)?;
    for &l in &a.l {
        let spec = DrivenChainSpec {
            l,
            hop: a.j,
            gamma_left: a.gamma,
            gamma_right: a.gamma_right.unwrap_or(a.gamma),
            n_left: a.n_left,
            n_right: a.n_right,
        };
        let st = steady_covariance(&spec)?;
        let analytic = analytic_current(&spec).map(|c| c.to_string()).unwrap_or_default();
        writeln!(w, "{l},{},{},{},{analytic}", spec.gamma_left, spec.gamma_right, st.current).map_err(io)?;
        if let Some(dir) = &a.out {
            let path = dir.join(format!("sigma_L{l}.csv"));
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            st.write_csv(std::io::BufWriter::new(file)).map_err(|e| CliError::io(&path, e))?;
        }
    }
    Ok(())
}
