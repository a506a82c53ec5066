//! Command-line front end.
//!
//! Every run prints one JSON line with the effective configuration to
//! stdout before doing any work. Failures print one JSON line
//! `{"error": <code>, "message": <text>}` to stderr and exit with 1 for
//! invalid input or 2 for numerical failures.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::dynamics::{assemble_total, initial_state, ProbeInit, Propagator};
use crate::error::{Error, Result};
use crate::io::{
    comb_csv, difference_csv, load_network, matrix_csv, read_matrix_csv, save_json, save_network,
    scan_csv, spectrum_csv, time_series_csv, write_atomic,
};
use crate::network::{generate, to_adjacency, Topology, TopologyRecipe};
use crate::oracle::{NoisyOracle, SimulatedOracle};
use crate::probing::{
    detect_eigenfrequencies, scan_density, NetworkOracle, PeakConfig, ProbeSchedule,
};
use crate::reconstruction::{compare_adjacency, reconstruct, ReconstructionConfig};
use crate::spectral::{
    diagonalize, linspace, probe_couplings, recurrence_time, spectral_density_comb,
    spectral_density_smooth,
};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "netprobe",
    version,
    about = "Probe and reconstruct networks of coupled quantum oscillators"
)]
pub struct Cli {
    /// Worker threads (default: NETPROBE_THREADS, else all cores).
    #[arg(long, global = true, env = "NETPROBE_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum Command {
    /// Sample a network from a topology recipe.
    Generate(GenerateArgs),
    /// Spectral density of a network seen from a node set.
    Spectrum(SpectrumArgs),
    /// Exact probe occupation over time.
    Dynamics(DynamicsArgs),
    /// Estimate the spectral density from occupation decay.
    Scan(ScanArgs),
    /// Detect eigenfrequencies in the discrete regime.
    Eigenfreqs(EigenfreqsArgs),
    /// Reconstruct a hidden network from measurements only.
    Reconstruct(ReconstructArgs),
    /// Compare an estimated adjacency matrix with the truth.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum RecipeKind {
    Chain,
    PeriodicChain,
    ShortcutChain,
    SmallWorld,
    ErdosRenyi,
}

#[derive(Debug, Args, Serialize)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    recipe: RecipeKind,
    #[arg(long)]
    n: usize,
    /// Chain (or uniform) coupling.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    h_chain: Option<f64>,
    #[arg(long)]
    h_strong: Option<f64>,
    #[arg(long)]
    h_weak: Option<f64>,
    #[arg(long)]
    period: Option<usize>,
    /// Shortcut endpoints as `a,b`.
    #[arg(long, value_parser = parse_pair)]
    shortcut: Option<(usize, usize)>,
    #[arg(long)]
    h_shortcut: Option<f64>,
    #[arg(long)]
    n_shortcuts: Option<usize>,
    #[arg(long)]
    p_edge: Option<f64>,
    #[arg(long)]
    omega0: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    require_connected: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ProbeArgs {
    /// Probed node or pair, e.g. `0` or `0,5`.
    #[arg(long, value_parser = parse_nodes, default_value = "0")]
    nodes: ::std::vec::Vec<usize>,
    #[arg(long)]
    k: f64,
    /// Network temperature.
    #[arg(long = "T", default_value_t = 0.0)]
    temperature: f64,
    /// `vacuum`, `squeezed:r,phi` or `thermal:T`.
    #[arg(long, default_value = "vacuum")]
    probe: ProbeInit,
}

#[derive(Debug, Args, Serialize)]
struct GridArgs {
    #[arg(long)]
    omega_min: f64,
    #[arg(long)]
    omega_max: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
}

impl GridArgs {
    fn grid(&self) -> Result<Vec<f64>> {
        if !(self.omega_min > 0.0 && self.omega_max > self.omega_min && self.steps >= 2) {
            return Err(Error::InvalidParameter(
                "need 0 < omega-min < omega-max and at least 2 steps".into(),
            ));
        }
        Ok(linspace(self.omega_min, self.omega_max, self.steps))
    }
}

#[derive(Debug, Args, Serialize)]
struct SpectrumArgs {
    #[arg(long)]
    network: PathBuf,
    #[arg(long, value_parser = parse_nodes, default_value = "0")]
    nodes: ::std::vec::Vec<usize>,
    #[arg(long)]
    k: f64,
    #[arg(long)]
    t_max: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write the discrete comb (Omega_i, weight, J_binned).
    #[arg(long)]
    comb_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct DynamicsArgs {
    #[arg(long)]
    network: PathBuf,
    #[command(flatten)]
    probe: ProbeArgs,
    #[arg(long)]
    omega_s: f64,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct NoiseArgs {
    /// Standard deviation of additive Gaussian noise on each reading.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct ScanArgs {
    #[arg(long)]
    network: PathBuf,
    #[command(flatten)]
    probe: ProbeArgs,
    #[arg(long)]
    t: f64,
    #[command(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EigenfreqsArgs {
    #[arg(long)]
    network: PathBuf,
    #[command(flatten)]
    probe: ProbeArgs,
    #[arg(long)]
    t: f64,
    #[command(flatten)]
    grid: GridArgs,
    /// Number of lines to look for (default: network size).
    #[arg(long)]
    expected: Option<usize>,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReconstructArgs {
    /// Hidden network; only the measurement oracle reads it.
    #[arg(long)]
    hidden: PathBuf,
    /// Network size, assumed known.
    #[arg(long = "N")]
    n: usize,
    #[arg(long, default_value_t = 2e-4)]
    k: f64,
    #[arg(long = "T", default_value_t = 0.0)]
    temperature: f64,
    #[arg(long, default_value = "squeezed:1,1.5707963267948966")]
    probe: ProbeInit,
    #[arg(long, default_value_t = 0)]
    reference: usize,
    /// Window of the pilot scan used to locate the band.
    #[arg(long, default_value_t = 0.05)]
    omega_min: f64,
    #[arg(long, default_value_t = 2.0)]
    omega_max: f64,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long)]
    out: PathBuf,
    /// Also write the estimated adjacency matrix as CSV.
    #[arg(long)]
    a_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CompareArgs {
    /// Reconstruction report (JSON) or dense matrix (CSV).
    #[arg(long)]
    estimate: PathBuf,
    /// True network (JSON).
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    out: PathBuf,
    /// Long-format (i, j, estimate, truth, difference) CSV.
    #[arg(long)]
    diff_out: Option<PathBuf>,
}

fn parse_nodes(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| format!("bad node index '{x}'"))
        })
        .collect()
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    match parse_nodes(s)?.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(format!("expected two indices 'a,b', got '{s}'")),
    }
}

fn need<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("--{name} is required for this recipe")))
}

fn oracle_for(path: &Path, temperature: f64, noise: &NoiseArgs) -> Result<Box<dyn NetworkOracle>> {
    let sim = SimulatedOracle::new(&load_network(path)?, temperature)?;
    if noise.noise > 0.0 {
        Ok(Box::new(NoisyOracle::new(sim, noise.noise, noise.seed)?))
    } else {
        Ok(Box::new(sim))
    }
}

fn run_generate(a: &GenerateArgs) -> Result<()> {
    let topology = match a.recipe {
        RecipeKind::Chain => Topology::Chain {
            n: a.n,
            h: need(a.h, "h")?,
        },
        RecipeKind::PeriodicChain => Topology::PeriodicChain {
            n: a.n,
            h_strong: need(a.h_strong, "h-strong")?,
            h_weak: need(a.h_weak, "h-weak")?,
            period: need(a.period, "period")?,
        },
        RecipeKind::ShortcutChain => Topology::ShortcutChain {
            n: a.n,
            h: need(a.h, "h")?,
            shortcut: need(a.shortcut, "shortcut")?,
            h_shortcut: need(a.h_shortcut, "h-shortcut")?,
        },
        RecipeKind::SmallWorld => Topology::SmallWorld {
            n: a.n,
            h_chain: need(a.h_chain.or(a.h), "h-chain")?,
            h_shortcut: need(a.h_shortcut, "h-shortcut")?,
            n_shortcuts: need(a.n_shortcuts, "n-shortcuts")?,
        },
        RecipeKind::ErdosRenyi => Topology::ErdosRenyi {
            n: a.n,
            h: need(a.h, "h")?,
            p_edge: need(a.p_edge, "p-edge")?,
        },
    };
    let recipe = TopologyRecipe::new(topology, a.seed).require_connected(a.require_connected);
    save_network(&generate(&recipe, a.omega0)?, &a.out)
}

fn run_spectrum(a: &SpectrumArgs) -> Result<()> {
    let eig = diagonalize(&to_adjacency(&load_network(&a.network)?))?;
    let g = probe_couplings(&eig, &a.nodes)?;
    let s = spectral_density_smooth(&eig, &g, a.k, &a.grid.grid()?, a.t_max)?;
    if s.discrete_regime {
        eprintln!(
            "{}",
            serde_json::json!({
                "warning": "discrete_regime",
                "t_max": a.t_max,
                "recurrence_time": recurrence_time(&eig),
            })
        );
    }
    write_atomic(&a.out, &spectrum_csv(&s)?)?;
    if let Some(p) = &a.comb_out {
        write_atomic(p, &comb_csv(&spectral_density_comb(&eig, &g, a.k))?)?;
    }
    Ok(())
}

fn run_dynamics(a: &DynamicsArgs) -> Result<()> {
    if !(a.t_end > 0.0 && a.steps >= 2) {
        return Err(Error::InvalidParameter(
            "need t-end > 0 and at least 2 steps".into(),
        ));
    }
    let adj = to_adjacency(&load_network(&a.network)?);
    let eig = diagonalize(&adj)?;
    let sys = assemble_total(&adj, a.omega_s, a.probe.k, &a.probe.nodes)?;
    let state = initial_state(&a.probe.probe, a.omega_s, &eig, a.probe.temperature)?;
    let prop = Propagator::new(&sys)?;
    let times = linspace(0.0, a.t_end, a.steps);
    let n: Vec<f64> = times
        .iter()
        .map(|&t| prop.probe_occupation(&state, a.omega_s, t))
        .collect();
    write_atomic(&a.out, &time_series_csv(&times, &n)?)
}

fn schedule(p: &ProbeArgs, grid: &GridArgs, t: f64) -> Result<ProbeSchedule> {
    ProbeSchedule::new(
        grid.grid()?,
        t,
        p.k,
        p.probe,
        p.temperature,
        p.nodes.clone(),
    )
}

fn run_scan(a: &ScanArgs) -> Result<()> {
    let oracle = oracle_for(&a.network, a.probe.temperature, &a.noise)?;
    let scan = scan_density(oracle.as_ref(), &schedule(&a.probe, &a.grid, a.t)?)?;
    write_atomic(&a.out, &scan_csv(&scan)?)
}

fn run_eigenfreqs(a: &EigenfreqsArgs) -> Result<()> {
    let n = load_network(&a.network)?.n();
    let oracle = oracle_for(&a.network, a.probe.temperature, &a.noise)?;
    let expected = a.expected.unwrap_or(n);
    let d = detect_eigenfrequencies(
        oracle.as_ref(),
        &schedule(&a.probe, &a.grid, a.t)?,
        expected,
        &PeakConfig::default(),
    )?;
    save_json(&d, &a.out)
}

fn run_reconstruct(a: &ReconstructArgs) -> Result<()> {
    let oracle = oracle_for(&a.hidden, a.temperature, &a.noise)?;
    let cfg = ReconstructionConfig {
        k: a.k,
        init: a.probe,
        temperature: a.temperature,
        reference_node: a.reference,
        pilot_range: (a.omega_min, a.omega_max),
        ..Default::default()
    };
    let report = reconstruct(oracle.as_ref(), a.n, &cfg)?;
    save_json(&report, &a.out)?;
    if let Some(p) = &a.a_out {
        write_atomic(p, &matrix_csv(&report.a_est)?)?;
    }
    Ok(())
}

fn run_compare(a: &CompareArgs) -> Result<()> {
    let truth = to_adjacency(&load_network(&a.truth)?).into_matrix();
    let est = if a.estimate.extension().is_some_and(|e| e == "csv") {
        read_matrix_csv(&a.estimate)?
    } else {
        let text = std::fs::read_to_string(&a.estimate)
            .map_err(|e| Error::Io(format!("{}: {e}", a.estimate.display())))?;
        let v: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
        let rows: Vec<Vec<f64>> = serde_json::from_value(v["a_est"].clone())
            .map_err(|e| Error::Schema(format!("a_est: {e}")))?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Schema("a_est is not a square matrix".into()));
        }
        nalgebra::DMatrix::from_fn(n, n, |i, j| rows[i][j])
    };
    let c = compare_adjacency(&est, &truth, a.threshold)?;
    save_json(&c, &a.out)?;
    if let Some(p) = &a.diff_out {
        write_atomic(p, &difference_csv(&est, &truth)?)?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => run_generate(a),
        Command::Spectrum(a) => run_spectrum(a),
        Command::Dynamics(a) => run_dynamics(a),
        Command::Scan(a) => run_scan(a),
        Command::Eigenfreqs(a) => run_eigenfreqs(a),
        Command::Reconstruct(a) => run_reconstruct(a),
        Command::Compare(a) => run_compare(a),
    }
}

fn report_error(code: &str, message: &str) {
    eprintln!(
        "{}",
        serde_json::json!({ "error": code, "message": message })
    );
}

/// Parses `argv` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let msg = e.to_string();
            let first = msg
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            report_error("usage", first);
            return 1;
        }
    };
    if let Some(threads) = cli.threads {
        if threads == 0 {
            report_error("invalid_parameter", "--threads must be positive");
            return 1;
        }
        // a second initialization in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    println!(
        "{}",
        serde_json::to_string(&cli).expect("config serializes")
    );
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            report_error(e.code(), &e.to_string());
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}
