//! vessel-lab: build explicit Boussinesq solutions from vessel realization
//! files and verify the identities of the construction.
//!
//! Subcommands: validate, sample, residual, soliton, scattering, atlas.
//! Exit codes: 0 success, 1 numeric/invariant failure, 2 input/schema failure.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use vessel_core::errata::{errata_report, render};
use vessel_core::params::{canonical_parameters, GammaTSign, VesselParameters};
use vessel_core::pde_verify::{
    calibrate_beta, residual_fd_with_order, residual_ladder, sample_with_tol, singular_scan,
    write_atlas_csv, write_csv, FieldName, GridSpec, PdeError,
};
use vessel_core::realization::{load, save, validate, Realization};
use vessel_core::scattering::{
    backlund_residual, phi_star_factorization, transfer_at, transfer_ode_residual,
};
use vessel_core::solitons::{soliton_classic, soliton_exp};

const EXIT_NUMERIC: u8 = 1;
const EXIT_INPUT: u8 = 2;

#[derive(Parser)]
#[command(
    name = "vessel-lab",
    version,
    about = "Boussinesq solutions from vessel realizations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Convention {
    Paper,
    Compatible,
}

impl Convention {
    fn params(self) -> VesselParameters {
        match self {
            Convention::Paper => canonical_parameters(GammaTSign::Paper),
            Convention::Compatible => canonical_parameters(GammaTSign::Compatible),
        }
    }
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, default_value_t = -2.0, allow_hyphen_values = true)]
    x0: f64,
    #[arg(long, default_value_t = 2.0, allow_hyphen_values = true)]
    x1: f64,
    #[arg(long, default_value_t = 41)]
    nx: usize,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    t0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    t1: f64,
    #[arg(long, default_value_t = 21)]
    nt: usize,
}

impl GridArgs {
    fn spec(&self) -> Result<GridSpec, String> {
        if self.nx < 2 || self.nt < 2 {
            return Err("grid needs --nx and --nt of at least 2".to_string());
        }
        if ![self.x0, self.x1, self.t0, self.t1]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err("grid extents must be finite".to_string());
        }
        Ok(GridSpec::new(
            self.x0, self.x1, self.nx, self.t0, self.t1, self.nt,
        ))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a realization file against the vessel invariants.
    Validate {
        /// Realization file (JSON).
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = Convention::Compatible)]
        convention: Convention,
    },
    /// Sample fields on a grid and export CSV.
    Sample {
        input: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Comma-separated field names: q, p, tau, pi11..pi33.
        #[arg(long, default_value = "q,tau")]
        fields: String,
        /// Relative singularity tolerance for the mask.
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Convention::Compatible)]
        convention: Convention,
        /// Output file (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Boussinesq residuals (exact ladder + finite differences).
    Residual {
        input: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        /// Normalization constant, or `auto` to calibrate by least squares.
        #[arg(long, default_value = "auto", allow_hyphen_values = true)]
        beta: String,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Convention::Compatible)]
        convention: Convention,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit one of the built-in soliton realization files.
    Soliton {
        /// Which dataset: classic or exp.
        #[arg(long)]
        which: String,
        /// Complex parameter, e.g. 1, 0.5, 1+0.3i.
        #[arg(long, default_value = "1", allow_hyphen_values = true)]
        mu: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print S(lambda, x) and the transfer/Backlund residuals.
    Scattering {
        input: PathBuf,
        /// Spectral parameter, e.g. 5+2i.
        #[arg(long, allow_hyphen_values = true)]
        lambda: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        x: f64,
        /// Central-difference step for the ODE residual.
        #[arg(long, default_value_t = 1e-4)]
        h: f64,
        #[arg(long, value_enum, default_value_t = Convention::Compatible)]
        convention: Convention,
    },
    /// Singular-set scan: per-cell min_sv and mask CSV.
    Atlas {
        input: PathBuf,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
        #[arg(long, value_enum, default_value_t = Convention::Compatible)]
        convention: Convention,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parse `a`, `bi`, `a+bi`, `a-bi` (also `i`, `-i`, `+i`).
fn parse_complex(s: &str) -> Result<Complex64, String> {
    let t = s.trim();
    if t.is_empty() {
        return Err("empty complex literal".to_string());
    }
    let bad = |_| format!("invalid complex literal `{s}`");
    if let Some(body) = t.strip_suffix(['i', 'I']) {
        // Split between real and imaginary parts: the last +/- that is not
        // leading and not an exponent sign.
        let bytes = body.as_bytes();
        let mut split = None;
        for k in (1..bytes.len()).rev() {
            let ch = bytes[k] as char;
            if (ch == '+' || ch == '-') && !matches!(bytes[k - 1] as char, 'e' | 'E') {
                split = Some(k);
                break;
            }
        }
        let (re_str, im_str) = match split {
            Some(k) => (&body[..k], &body[k..]),
            None => ("", body),
        };
        let im = match im_str {
            "" | "+" => 1.0,
            "-" => -1.0,
            other => other.parse::<f64>().map_err(bad)?,
        };
        let re = if re_str.is_empty() {
            0.0
        } else {
            re_str.parse::<f64>().map_err(bad)?
        };
        Ok(Complex64::new(re, im))
    } else {
        Ok(Complex64::new(t.parse::<f64>().map_err(bad)?, 0.0))
    }
}

fn threads() -> usize {
    if let Ok(v) = std::env::var("VESSEL_LAB_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            return n.max(1);
        }
        eprintln!("warning: ignoring unparsable VESSEL_LAB_THREADS={v}");
    }
    std::thread::available_parallelism()
        .map(|n| n.get().min(8))
        .unwrap_or(1)
}

fn load_input(path: &std::path::Path) -> Result<Realization, ExitCode> {
    match load(path) {
        Ok(r) => Ok(r),
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(EXIT_INPUT))
        }
    }
}

fn write_out(out: &Option<PathBuf>, bytes: &[u8]) -> Result<(), ExitCode> {
    let result = match out {
        Some(path) => std::fs::write(path, bytes),
        None => std::io::stdout().write_all(bytes),
    };
    result.map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_INPUT)
    })
}

fn cmd_validate(input: PathBuf, convention: Convention) -> ExitCode {
    let r = match load_input(&input) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let p = convention.params();
    let report = match validate(&r, &p) {
        Ok(rep) => rep,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    println!("dim: {}", r.dim);
    println!("basepoint: ({}, {})", r.basepoint.0, r.basepoint.1);
    println!("lyapunov_residual: {:.6e}", report.lyapunov_residual);
    println!("x0_min_sv: {:.6e}", report.x0_min_sv);
    println!("symmetric: {}", report.symmetric);
    println!("normalized: {}", report.normalized);
    for note in &report.notes {
        println!("note: {note}");
    }
    if report.invariants_hold(r.x0.norm_max(), r.lyapunov_scale(&p)) {
        println!("status: ok");
        ExitCode::SUCCESS
    } else {
        println!("status: invariant violation");
        ExitCode::from(EXIT_NUMERIC)
    }
}

fn parse_fields(s: &str) -> Result<Vec<FieldName>, String> {
    s.split(',')
        .map(|f| FieldName::parse(f.trim()).ok_or_else(|| format!("unknown field `{}`", f.trim())))
        .collect()
}

fn cmd_sample(
    input: PathBuf,
    grid: GridArgs,
    fields: String,
    tol: f64,
    convention: Convention,
    out: Option<PathBuf>,
) -> ExitCode {
    let r = match load_input(&input) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let spec = match grid.spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let names = match parse_fields(&fields) {
        Ok(n) => n,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let p = convention.params();
    let g = sample_with_tol(&r, &p, &spec, &names, tol, threads());
    if g.masked_count() == spec.cells() {
        eprintln!("error: entire grid is masked as singular");
        return ExitCode::from(EXIT_NUMERIC);
    }
    let mut buf = Vec::new();
    write_csv(&g, &mut buf).expect("in-memory write");
    match write_out(&out, &buf) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}

fn cmd_residual(
    input: PathBuf,
    grid: GridArgs,
    beta_arg: String,
    tol: f64,
    convention: Convention,
    out: Option<PathBuf>,
) -> ExitCode {
    let r = match load_input(&input) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let spec = match grid.spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let p = convention.params();

    // Residual evaluation points: unmasked cells, thinned deterministically.
    let probe = sample_with_tol(&r, &p, &spec, &[], tol, threads());
    let unmasked: Vec<(f64, f64)> = (0..spec.nx)
        .flat_map(|i| (0..spec.nt).map(move |j| (i, j)))
        .filter(|&(i, j)| !probe.mask[i * spec.nt + j])
        .map(|(i, j)| (spec.x_at(i), spec.t_at(j)))
        .collect();
    if unmasked.is_empty() {
        eprintln!("error: entire grid is masked as singular");
        return ExitCode::from(EXIT_NUMERIC);
    }
    let stride = (unmasked.len() / 200).max(1);
    let points: Vec<(f64, f64)> = unmasked.iter().step_by(stride).copied().collect();

    let mut report = String::new();
    let auto = beta_arg.trim() == "auto";
    let beta = if auto {
        match calibrate_beta(&r, &p, &points) {
            Ok(fit) => {
                report.push_str(&format!("calibrated_beta: {:.17e}\n", fit.beta));
                report.push_str(&format!(
                    "calibration_fit_residual: {:.6e}\n",
                    fit.fit_residual
                ));
                fit.beta
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_NUMERIC);
            }
        }
    } else {
        match beta_arg.trim().parse::<f64>() {
            Ok(b) => b,
            Err(_) => {
                eprintln!("error: --beta must be a number or `auto`");
                return ExitCode::from(EXIT_INPUT);
            }
        }
    };

    let ladder = match residual_ladder(&r, &p, &points, beta) {
        Ok(rep) => rep,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    };
    report.push_str(&ladder.to_text());
    match residual_fd_with_order(&r, &p, &spec, beta, threads()) {
        Ok(fd) => report.push_str(&fd.to_text()),
        Err(PdeError::TooFewPoints) => {
            report.push_str("finite_difference: skipped (too few unmasked interior points)\n")
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    }
    if auto {
        report.push_str("\n# errata\n");
        report.push_str(&render(&errata_report()));
    }
    if let Err(code) = write_out(&out, report.as_bytes()) {
        return code;
    }
    if ladder.max_residual <= 1e-6 {
        ExitCode::SUCCESS
    } else {
        eprintln!(
            "ladder residual {:.3e} exceeds 1e-6 at beta = {beta}",
            ladder.max_residual
        );
        ExitCode::from(EXIT_NUMERIC)
    }
}

fn cmd_soliton(which: String, mu: String, out: PathBuf) -> ExitCode {
    let mu = match parse_complex(&mu) {
        Ok(m) if m.norm() > 0.0 => m,
        Ok(_) => {
            eprintln!("error: --mu must be nonzero");
            return ExitCode::from(EXIT_INPUT);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let (r, _) = match which.as_str() {
        "classic" => soliton_classic(mu),
        "exp" => soliton_exp(mu),
        other => {
            eprintln!("error: --which must be `classic` or `exp`, got `{other}`");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    match save(&r, &out) {
        Ok(()) => {
            println!("wrote {which} soliton (mu = {mu}) to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn cmd_scattering(
    input: PathBuf,
    lambda: String,
    x: f64,
    h: f64,
    convention: Convention,
) -> ExitCode {
    let r = match load_input(&input) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let lam = match parse_complex(&lambda) {
        Ok(l) => l,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let p = convention.params();
    let t0 = r.basepoint.1;
    let s = match transfer_at(&r, &p, lam, x, t0) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_NUMERIC);
        }
    };
    println!("S(lambda = {lam}, x = {x}):");
    for i in 0..3 {
        let row: Vec<String> = (0..3)
            .map(|j| {
                let z = s.matrix[(i, j)];
                format!("{:+.10e}{:+.10e}i", z.re, z.im)
            })
            .collect();
        println!("  {}", row.join("  "));
    }
    let run = || -> Result<(f64, f64, f64, f64), vessel_core::scattering::ScatteringError> {
        let ode = transfer_ode_residual(&r, &p, lam, x, h)?;
        let xs: Vec<f64> = (-2..=2).map(|k| x + 0.25 * k as f64).collect();
        let backlund = backlund_residual(&r, &p, lam, &xs)?;
        let fact = phi_star_factorization(&r, &p, lam, x)?;
        Ok((ode, backlund.output_lde, backlund.third_order, fact))
    };
    match run() {
        Ok((ode, out_lde, third, fact)) => {
            println!("transfer_ode_residual: {ode:.6e}");
            println!("backlund_output_lde_residual: {out_lde:.6e}");
            println!("backlund_third_order_residual: {third:.6e}");
            println!("phi_star_factorization_residual: {fact:.6e}");
            if ode <= 1e-6 && out_lde <= 1e-5 && third <= 1e-5 {
                ExitCode::SUCCESS
            } else {
                eprintln!("residuals exceed the documented bounds");
                ExitCode::from(EXIT_NUMERIC)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_NUMERIC)
        }
    }
}

fn cmd_atlas(
    input: PathBuf,
    grid: GridArgs,
    tol: f64,
    convention: Convention,
    out: Option<PathBuf>,
) -> ExitCode {
    let r = match load_input(&input) {
        Ok(r) => r,
        Err(code) => return code,
    };
    let spec = match grid.spec() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    };
    let p = convention.params();
    let atlas = singular_scan(&r, &p, &spec, tol, threads());
    let mut buf = Vec::new();
    write_atlas_csv(&atlas.grid, &mut buf).expect("in-memory write");
    if let Err(code) = write_out(&out, &buf) {
        return code;
    }
    eprintln!(
        "flagged cells: {}, connected components: {}",
        atlas.grid.masked_count(),
        atlas.components
    );
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { input, convention } => cmd_validate(input, convention),
        Command::Sample {
            input,
            grid,
            fields,
            tol,
            convention,
            out,
        } => cmd_sample(input, grid, fields, tol, convention, out),
        Command::Residual {
            input,
            grid,
            beta,
            tol,
            convention,
            out,
        } => cmd_residual(input, grid, beta, tol, convention, out),
        Command::Soliton { which, mu, out } => cmd_soliton(which, mu, out),
        Command::Scattering {
            input,
            lambda,
            x,
            h,
            convention,
        } => cmd_scattering(input, lambda, x, h, convention),
        Command::Atlas {
            input,
            grid,
            tol,
            convention,
            out,
        } => cmd_atlas(input, grid, tol, convention, out),
    }
}
