//! Command-line front end: sifting tables, gain sweeps, security bounds,
//! Monte Carlo sessions, and the self-check battery. Exit code 0 on
//! success, 1 when a computation or check fails, 2 on bad usage.

mod emit;
mod grid;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use cvqkd::keygain::{
    best_per_eta, gain_sweep, gain_with_convention, GainPoint, PostselectionThreshold,
    TauConvention,
};
use cvqkd::protocol::{sift_table, ProtocolId, ProtocolSpec};
use cvqkd::security::protocol_overlap_bound;
use cvqkd::session::{
    bits_to_hex, run_session, write_transcript_files, RecordOptions, SessionConfig, TransportKind,
};

use emit::{deliver, opt_cell, sig12, to_csv, write_json, write_text, RunManifest};
use grid::parse_grid;

#[derive(Parser)]
#[command(
    name = "cvqkd",
    version,
    about = "Coherent-state postselection protocols: tables, bounds, gain and sessions"
)]
struct Cli {
    /// Root seed for every randomized computation.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// Output format for tabular results.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Write the result here instead of stdout; a manifest lands next to it.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TransportArg {
    Memory,
    Socket,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    /// Subtract the deleted fraction once per announced bit.
    Literal,
    /// Subtract it only over the kept fraction.
    PerKeptBit,
}

impl From<ConventionArg> for TauConvention {
    fn from(arg: ConventionArg) -> Self {
        match arg {
            ConventionArg::Literal => TauConvention::Literal,
            ConventionArg::PerKeptBit => TauConvention::PerKeptBit,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the sifting table of a tabulated protocol.
    Tables {
        /// One of o4, s3, e4, s6, s8.
        #[arg(long)]
        protocol: String,
    },
    /// Sweep the secure gain over amplitude, transmission and threshold grids.
    GainCurve {
        #[arg(long)]
        protocol: String,
        /// Signal amplitude grid (number or start:stop:count).
        #[arg(long, default_value = "0.5")]
        alpha: String,
        /// Channel transmission grid.
        #[arg(long, default_value = "1:0.1:10")]
        eta: String,
        /// Postselection threshold grid.
        #[arg(long, default_value = "0")]
        x0: String,
        #[arg(long, value_enum, default_value_t = ConventionArg::Literal)]
        convention: ConventionArg,
        /// Also report, per transmission, the grid cell with the best gain.
        #[arg(long)]
        best_per_eta: bool,
    },
    /// Tabulate the eavesdropping bound across protocols and channels.
    SecurityTable {
        /// A protocol name, or "all" for the standard nine.
        #[arg(long, default_value = "all")]
        protocol: String,
        #[arg(long, default_value = "0.25:1:4")]
        alpha: String,
        #[arg(long, default_value = "0.1:0.9:5")]
        eta: String,
    },
    /// Run one sender-receiver session and write its artifacts.
    Simulate {
        #[arg(long)]
        protocol: String,
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 10_000)]
        rounds: u64,
        #[arg(long, value_enum, default_value_t = TransportArg::Memory)]
        transport: TransportArg,
        /// Record the tapped amplitudes in stats.json.
        #[arg(long)]
        eve_tap: bool,
    },
    /// Re-derive the cross-checked constants and invariants.
    Verify {
        /// Smaller sample sizes for a fast pass.
        #[arg(long)]
        quick: bool,
        /// Report this vacuum variance instead of the true one; any value
        /// other than 0.25 must fail a check.
        #[arg(long, hide = true)]
        perturb_variance: Option<f64>,
    },
}

enum CliError {
    Usage(String),
    Failure(String),
}

type CliResult<T> = Result<T, CliError>;

fn usage(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

impl From<cvqkd::Error> for CliError {
    fn from(e: cvqkd::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(message)) => {
            eprintln!("usage error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Failure(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let started = Instant::now();
    match cli.command {
        Command::Tables { ref protocol } => cmd_tables(&cli, protocol, started),
        Command::GainCurve {
            ref protocol,
            ref alpha,
            ref eta,
            ref x0,
            convention,
            best_per_eta,
        } => cmd_gain_curve(
            &cli,
            protocol,
            alpha,
            eta,
            x0,
            convention.into(),
            best_per_eta,
            started,
        ),
        Command::SecurityTable {
            ref protocol,
            ref alpha,
            ref eta,
        } => cmd_security_table(&cli, protocol, alpha, eta, started),
        Command::Simulate {
            ref protocol,
            alpha,
            eta,
            x0,
            rounds,
            transport,
            eve_tap,
        } => cmd_simulate(&cli, protocol, alpha, eta, x0, rounds, transport, eve_tap, started),
        Command::Verify {
            quick,
            perturb_variance,
        } => cmd_verify(&cli, quick, perturb_variance, started),
    }
}

fn parse_protocol(text: &str) -> CliResult<ProtocolId> {
    text.parse::<ProtocolId>().map_err(|_| {
        usage(format!(
            "unknown protocol {text:?}; use o4, s3, e4, mb4, s6, mb6, s8, mb8 or genN"
        ))
    })
}

fn parse_grid_arg(name: &str, text: &str) -> CliResult<Vec<f64>> {
    parse_grid(text).map_err(|e| usage(format!("--{name}: {e}")))
}

fn check_alphas(alphas: &[f64]) -> CliResult<()> {
    for &a in alphas {
        if !(a.is_finite() && a > 0.0) {
            return Err(usage(format!("--alpha values must be positive, got {a}")));
        }
    }
    Ok(())
}

fn check_etas(etas: &[f64]) -> CliResult<()> {
    for &eta in etas {
        if !(eta.is_finite() && eta > 0.0 && eta <= 1.0) {
            return Err(usage(format!("--eta values must lie in (0, 1], got {eta}")));
        }
    }
    Ok(())
}

fn thresholds(x0s: &[f64]) -> CliResult<Vec<PostselectionThreshold>> {
    x0s.iter()
        .map(|&x| {
            PostselectionThreshold::new(x)
                .map_err(|_| usage(format!("--x0 values must be nonnegative, got {x}")))
        })
        .collect()
}

fn the_nine() -> Vec<ProtocolId> {
    let mut ids = ProtocolId::STANDARD.to_vec();
    ids.push(ProtocolId::Gen(2));
    ids
}

fn cmd_tables(cli: &Cli, protocol: &str, started: Instant) -> CliResult<()> {
    let id = parse_protocol(protocol)?;
    let tabulated = [
        ProtocolId::O4,
        ProtocolId::S3,
        ProtocolId::E4,
        ProtocolId::S6,
        ProtocolId::S8,
    ];
    if !tabulated.contains(&id) {
        return Err(usage(format!(
            "no reference table for {id}; tables exist for o4, s3, e4, s6 and s8"
        )));
    }
    let spec = ProtocolSpec::new(id, 1.0)?;
    let rows = sift_table(&spec);

    let body = match cli.format {
        Format::Json => json_lines(&rows)?,
        Format::Csv => {
            let header = [
                "protocol",
                "state",
                "state_re_over_alpha",
                "state_im_over_alpha",
                "phase",
                "phase_radians",
                "mean_over_alpha",
                "bit",
                "pair_set",
            ];
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        id.to_string(),
                        r.state.to_string(),
                        sig12(r.state_re_over_alpha),
                        sig12(r.state_im_over_alpha),
                        r.phase.to_string(),
                        sig12(r.phase_radians),
                        sig12(r.mean_over_alpha),
                        opt_cell(r.bit),
                        opt_cell(r.pair_set),
                    ]
                })
                .collect();
            to_csv(&header, &cells)
        }
    };
    let manifest = RunManifest::new("tables", json!({ "protocol": id.to_string() }), cli.seed);
    deliver(cli.out.as_deref(), &body, manifest, started).map_err(CliError::Failure)
}

#[allow(clippy::too_many_arguments)]
fn cmd_gain_curve(
    cli: &Cli,
    protocol: &str,
    alpha: &str,
    eta: &str,
    x0: &str,
    convention: TauConvention,
    report_best: bool,
    started: Instant,
) -> CliResult<()> {
    let id = parse_protocol(protocol)?;
    let alphas = parse_grid_arg("alpha", alpha)?;
    let etas = parse_grid_arg("eta", eta)?;
    let x0s_raw = parse_grid_arg("x0", x0)?;
    check_alphas(&alphas)?;
    check_etas(&etas)?;
    let x0s = thresholds(&x0s_raw)?;

    let points = gain_sweep(id, &alphas, &etas, &x0s, convention)?;
    report_zero_crossings(&points, &alphas, &etas, &x0s, convention)?;
    if report_best {
        for best in best_per_eta(&points) {
            eprintln!(
                "best gain at eta={}: alpha={} x0={} gain={}",
                sig12(best.eta),
                sig12(best.alpha),
                sig12(best.x0),
                sig12(best.gain)
            );
        }
    }

    let body = match cli.format {
        Format::Json => json_lines(&points)?,
        Format::Csv => {
            let header = ["protocol", "alpha", "eta", "x0", "I", "tau_u", "Pe", "gain"];
            let cells: Vec<Vec<String>> = points
                .iter()
                .map(|p| {
                    vec![
                        p.protocol.to_string(),
                        sig12(p.alpha),
                        sig12(p.eta),
                        sig12(p.x0),
                        sig12(p.mutual_info_integral),
                        sig12(p.tau_u),
                        sig12(p.pe),
                        sig12(p.gain),
                    ]
                })
                .collect();
            to_csv(&header, &cells)
        }
    };
    let manifest = RunManifest::new(
        "gain-curve",
        json!({
            "protocol": id.to_string(),
            "alpha": alpha,
            "eta": eta,
            "x0": x0,
            "convention": match convention {
                TauConvention::Literal => "literal",
                TauConvention::PerKeptBit => "per_kept_bit",
            },
        }),
        cli.seed,
    );
    deliver(cli.out.as_deref(), &body, manifest, started).map_err(CliError::Failure)
}

/// Scans each (alpha, x0) slice of the sweep for sign changes along the
/// eta grid and reports each crossing, refined by bisection, on stderr.
fn report_zero_crossings(
    points: &[GainPoint],
    alphas: &[f64],
    etas: &[f64],
    x0s: &[PostselectionThreshold],
    convention: TauConvention,
) -> CliResult<()> {
    let at = |i: usize, j: usize, k: usize| &points[(i * etas.len() + j) * x0s.len() + k];
    for (i, &alpha) in alphas.iter().enumerate() {
        for (k, &x0) in x0s.iter().enumerate() {
            let spec = ProtocolSpec::new(points[0].protocol, alpha)?;
            for j in 1..etas.len() {
                let (prev, here) = (at(i, j - 1, k), at(i, j, k));
                let crossing = if prev.gain == 0.0 {
                    Some(prev.eta)
                } else if here.gain != 0.0 && (prev.gain > 0.0) != (here.gain > 0.0) {
                    Some(refine_crossing(
                        &spec, x0, convention, prev.eta, prev.gain, here.eta, here.gain,
                    ))
                } else {
                    None
                };
                if let Some(eta_star) = crossing {
                    eprintln!(
                        "eta* = {} (gain crosses zero): protocol={} alpha={} x0={}",
                        sig12(eta_star),
                        here.protocol,
                        sig12(alpha),
                        sig12(x0.value())
                    );
                }
            }
        }
    }
    Ok(())
}

fn refine_crossing(
    spec: &ProtocolSpec,
    x0: PostselectionThreshold,
    convention: TauConvention,
    mut lo: f64,
    mut g_lo: f64,
    mut hi: f64,
    mut g_hi: f64,
) -> f64 {
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let g_mid = match gain_with_convention(spec, mid, x0, convention) {
            Ok(point) => point.gain,
            Err(_) => break,
        };
        if g_mid == 0.0 {
            return mid;
        }
        if (g_mid > 0.0) == (g_lo > 0.0) {
            (lo, g_lo) = (mid, g_mid);
        } else {
            (hi, g_hi) = (mid, g_mid);
        }
        if (hi - lo).abs() < 1e-12 {
            break;
        }
    }
    lo + (hi - lo) * (0.0 - g_lo) / (g_hi - g_lo)
}

#[derive(Serialize)]
struct SecurityRow {
    protocol: String,
    eta: f64,
    alpha: f64,
    overlap: f64,
    fidelity_numeric: f64,
    tau_u: f64,
    max_deviation: f64,
}

fn cmd_security_table(
    cli: &Cli,
    protocol: &str,
    alpha: &str,
    eta: &str,
    started: Instant,
) -> CliResult<()> {
    let ids = if protocol.eq_ignore_ascii_case("all") {
        the_nine()
    } else {
        vec![parse_protocol(protocol)?]
    };
    let alphas = parse_grid_arg("alpha", alpha)?;
    let etas = parse_grid_arg("eta", eta)?;
    check_alphas(&alphas)?;
    check_etas(&etas)?;

    let mut rows = Vec::new();
    for &id in &ids {
        for &eta in &etas {
            for &alpha in &alphas {
                let spec = ProtocolSpec::new(id, alpha)?;
                let bound = protocol_overlap_bound(&spec, eta)?;
                rows.push(SecurityRow {
                    protocol: id.to_string(),
                    eta,
                    alpha,
                    overlap: bound.overlap,
                    fidelity_numeric: bound.fidelity,
                    tau_u: bound.tau_u,
                    max_deviation: bound.max_deviation,
                });
            }
        }
    }

    let body = match cli.format {
        Format::Json => json_lines(&rows)?,
        Format::Csv => {
            let header = [
                "protocol",
                "eta",
                "alpha",
                "overlap",
                "fidelity_numeric",
                "tau_u",
                "max_deviation",
            ];
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        r.protocol.clone(),
                        sig12(r.eta),
                        sig12(r.alpha),
                        sig12(r.overlap),
                        sig12(r.fidelity_numeric),
                        sig12(r.tau_u),
                        sig12(r.max_deviation),
                    ]
                })
                .collect();
            to_csv(&header, &cells)
        }
    };
    let manifest = RunManifest::new(
        "security-table",
        json!({ "protocol": protocol, "alpha": alpha, "eta": eta }),
        cli.seed,
    );
    deliver(cli.out.as_deref(), &body, manifest, started).map_err(CliError::Failure)
}

#[allow(clippy::too_many_arguments)]
fn cmd_simulate(
    cli: &Cli,
    protocol: &str,
    alpha: f64,
    eta: f64,
    x0: f64,
    rounds: u64,
    transport: TransportArg,
    eve_tap: bool,
    started: Instant,
) -> CliResult<()> {
    let id = parse_protocol(protocol)?;
    check_alphas(&[alpha])?;
    check_etas(&[eta])?;
    if rounds == 0 {
        return Err(usage("--rounds must be at least 1"));
    }
    let x0 = thresholds(&[x0])?[0];
    let config = SessionConfig {
        protocol: id,
        alpha,
        eta,
        x0,
        rounds,
        seed: cli.seed,
        transport: match transport {
            TransportArg::Memory => TransportKind::InMemory,
            TransportArg::Socket => TransportKind::Socket,
        },
        record: RecordOptions {
            wire: true,
            rounds: true,
            eve_tap,
        },
    };

    let output = run_session(&config).map_err(|abort| {
        if let Ok(partial) = serde_json::to_string_pretty(&abort.partial) {
            eprintln!("{partial}");
        }
        CliError::Failure(abort.to_string())
    })?;

    let stats = &output.stats;
    println!(
        "protocol={id} rounds={} correct_basis={} kept={} mismatches={} efficiency={} ber={}",
        stats.total,
        stats.correct_basis,
        stats.kept,
        stats.mismatches,
        sig12(stats.empirical_efficiency),
        sig12(stats.empirical_ber_kept),
    );

    match &cli.out {
        None => {
            let body = serde_json::to_string_pretty(stats)
                .map_err(|e| CliError::Failure(e.to_string()))?;
            println!("{body}");
        }
        Some(dir) => {
            let mut outputs = Vec::new();
            let stats_path = dir.join("stats.json");
            write_json(&stats_path, stats).map_err(CliError::Failure)?;
            outputs.push(stats_path);
            for (name, key) in [("alice_key.hex", &output.alice_key), ("bob_key.hex", &output.bob_key)]
            {
                let path = dir.join(name);
                write_text(&path, &(bits_to_hex(key) + "\n")).map_err(CliError::Failure)?;
                outputs.push(path);
            }
            outputs.extend(write_transcript_files(&output, dir)?);

            let mut manifest =
                RunManifest::new("simulate", serde_json::to_value(&config).unwrap_or_default(), cli.seed);
            manifest.outputs = outputs.iter().map(|p| p.display().to_string()).collect();
            manifest.outputs.push(dir.join("manifest.json").display().to_string());
            manifest.duration_ms = started.elapsed().as_millis() as u64;
            write_json(&dir.join("manifest.json"), &manifest).map_err(CliError::Failure)?;
            println!("artifacts: {}", dir.display());
        }
    }
    Ok(())
}

fn cmd_verify(
    cli: &Cli,
    quick: bool,
    perturb_variance: Option<f64>,
    started: Instant,
) -> CliResult<()> {
    let report = verify::run_checks(quick, cli.seed, perturb_variance);
    let total = report.checks.len();
    eprintln!("verify: {}/{} checks passed", report.passed, total);

    let mut body =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Failure(e.to_string()))?;
    body.push('\n');
    let manifest = RunManifest::new(
        "verify",
        json!({ "quick": quick, "perturb_variance": perturb_variance }),
        cli.seed,
    );
    deliver(cli.out.as_deref(), &body, manifest, started).map_err(CliError::Failure)?;

    if report.failed > 0 {
        return Err(CliError::Failure(format!(
            "{} of {total} checks failed",
            report.failed
        )));
    }
    Ok(())
}

fn json_lines<T: Serialize>(rows: &[T]) -> CliResult<String> {
    let mut body =
        serde_json::to_string_pretty(rows).map_err(|e| CliError::Failure(e.to_string()))?;
    body.push('\n');
    Ok(body)
}
