//! `thinmag` — command-line front end: simulation runs, exact 2D solvers,
//! convergence ladders, corrector verification, and noise-law reports.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical/IO failure,
//! 4 verification-threshold failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use thinmag_core::corrector::verify_corrector;
use thinmag_core::experiment::{emit_report, plot_svg, report_csv, report_json, run_convergence};
use thinmag_core::field::SpectralField;
use thinmag_core::limit::{intermediate_params, limit_params, solve_a3, solve_b3};
use thinmag_core::noise::{covariance_pieces, eta_coefficients, helicity};
use thinmag_core::solver::{flat_means, initial_field, simulate, SimOptions, Stepper};
use thinmag_core::{CorrectorOperators, Error, FileConfig, NoiseTables, Result};

#[derive(Parser)]
#[command(
    name = "thinmag",
    version,
    about = "Spectral simulator for a passive magnetic field under transport-stretching noise on a thin 3D torus"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file (defaults apply when omitted).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides [output].dir).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one stochastic simulation and write diagnostics.
    Simulate {
        /// RNG seed.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Realization index (stream within the seed).
        #[arg(long, default_value_t = 0)]
        realization: u32,
        /// Drop the stochastic term.
        #[arg(long)]
        noise_off: bool,
    },
    /// Solve the 2D mean-field systems exactly from the configured initial data.
    LimitSolve {
        /// Evaluation time (defaults to the configured horizon).
        #[arg(long)]
        t: Option<f64>,
        /// Use the finite-layer intermediate coefficients instead of the limit ones.
        #[arg(long)]
        intermediate: bool,
    },
    /// Run the Monte-Carlo convergence ladder and emit reports.
    Converge,
    /// Brute-force the corrector identity; nonzero exit if the residual
    /// exceeds the threshold.
    VerifyCorrector {
        #[arg(long, default_value_t = 8)]
        trials: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1e-9)]
        threshold: f64,
    },
    /// Print the noise covariance pieces at a displacement and the
    /// eddy-diffusivity summary.
    Covariance {
        /// Displacement "x1,x2,x3".
        #[arg(long, default_value = "0,0,0")]
        x: String,
        /// Emit machine-readable JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Print the mean helicity and the alpha matrix.
    Helicity {
        /// Emit machine-readable JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Write a field snapshot as CSV (mode indices and coefficients).
    DumpField {
        /// Which snapshot: the initial data or the final simulated state.
        #[arg(long, default_value = "initial", value_parser = ["initial", "final"])]
        what: String,
        /// RNG seed (used when dumping the final state).
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Realization index (stream within the seed).
        #[arg(long, default_value_t = 0)]
        realization: u32,
    },
    /// Time the per-step noise application across layer counts.
    Bench {
        /// Layer counts to time.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2u32, 4, 8])]
        ns: Vec<u32>,
        /// Steps per measurement.
        #[arg(long, default_value_t = 20)]
        steps: u32,
    },
}

fn main() -> ExitCode {
    // Die quietly when the reader of a pipe closes early (`... | head`)
    // instead of panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(common: &Common) -> Result<FileConfig> {
    let mut cfg = match &common.config {
        Some(path) => FileConfig::from_path(path)?,
        None => FileConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output.dir = out.to_string_lossy().into_owned();
    }
    Ok(cfg)
}

fn out_dir(cfg: &FileConfig) -> Result<PathBuf> {
    let dir = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    println!("wrote {}", path.display());
    Ok(())
}

/// CSV snapshot of a spectral field: one row per stored mode and component,
/// with the physical vertical wavenumber `k3 = m * n`.
fn field_csv(f: &SpectralField) -> String {
    let n = f.domain.layer_n() as i64;
    let mut out = String::from("k1,k2,k3,comp,re,im\n");
    for mode in f.domain.modes() {
        for c in 0..f.ncomp() {
            let v = f.get(c, mode);
            if v.norm_sqr() == 0.0 {
                continue;
            }
            out.push_str(&format!(
                "{},{},{},{},{:.17e},{:.17e}\n",
                mode.0,
                mode.1,
                mode.2 * n,
                c,
                v.re,
                v.im
            ));
        }
    }
    out
}

fn mat_lines(name: &str, m: &[[f64; 3]; 3]) -> String {
    let mut s = format!("{name} =\n");
    for row in m {
        s.push_str(&format!("  [{:>13.6e} {:>13.6e} {:>13.6e}]\n", row[0], row[1], row[2]));
    }
    s
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::Simulate { seed, realization, noise_off } => {
            let sim = cfg.sim_config();
            let opts = SimOptions { record_full: false, noise_off: *noise_off };
            let run = simulate(&sim, *seed, *realization, &opts)?;
            for w in &run.warnings {
                eprintln!("warning: {w}");
            }
            let mut csv = String::from(
                "t,energy,norm_mean,norm_fluct,poincare_ratio,div_residual_pre,\
                 reality_residual,norm_b3bar,norm_a3bar\n",
            );
            for d in &run.diagnostics {
                csv.push_str(&format!(
                    "{:.9e},{:.12e},{:.12e},{:.12e},{:.6e},{:.6e},{:.6e},{:.12e},{:.12e}\n",
                    d.t,
                    d.energy,
                    d.norm_mean,
                    d.norm_fluct,
                    d.poincare_ratio,
                    d.div_residual_pre,
                    d.reality_residual,
                    d.norm_b3bar,
                    d.norm_a3bar
                ));
            }
            let dir = out_dir(&cfg)?;
            write_file(&dir.join("diagnostics.csv"), &csv)?;
            let last = run.diagnostics.last().expect("at least one record");
            println!(
                "t = {:.4}: energy {:.6e}, mean {:.6e}, fluctuation {:.6e}",
                last.t, last.energy, last.norm_mean, last.norm_fluct
            );
            Ok(())
        }
        Command::LimitSolve { t, intermediate } => {
            let sim = cfg.sim_config();
            let t = t.unwrap_or(sim.horizon);
            let (a0, b0) = flat_means(&initial_field(&sim)?)?;
            let params = if *intermediate {
                let tables = NoiseTables::new(sim.noise)?;
                intermediate_params(&sim.noise, &CorrectorOperators::new(&tables))
            } else {
                limit_params(&sim.noise)
            };
            let a = solve_a3(&params, &a0, t)?;
            let b = solve_b3(&params, &a0, &b0, t)?;
            let dir = out_dir(&cfg)?;
            write_file(&dir.join("limit_a3.csv"), &field_csv(&a))?;
            write_file(&dir.join("limit_b3.csv"), &field_csv(&b))?;
            println!(
                "kappa = {:.12}, t = {t}: |A3| = {:.6e}, |B3| = {:.6e}",
                params.kappa,
                a.norm_l2(),
                b.norm_l2()
            );
            Ok(())
        }
        Command::Converge => {
            let exp = cfg.experiment_config()?;
            let report = run_convergence(&exp)?;
            for r in &report.records {
                println!(
                    "n = {:>3}: err_b = {:.6e} (se {:.1e}), err_a = {:.6e} (se {:.1e}), failures {}",
                    r.n, r.err_b, r.err_b_se, r.err_a, r.err_a_se, r.failures
                );
            }
            if let Some(f) = &report.slope_b {
                println!("slope err_b: {:.3} (r2 {:.3})", f.slope, f.r2);
            }
            if let Some(f) = &report.slope_a {
                println!("slope err_a: {:.3} (r2 {:.3})", f.slope, f.r2);
            }
            let dir = out_dir(&cfg)?;
            let mut written = Vec::new();
            for fmt in &cfg.output.formats {
                let (name, content) = match fmt.as_str() {
                    "json" => ("report.json", report_json(&report)?),
                    "csv" => ("report.csv", report_csv(&report)),
                    "svg" => ("convergence.svg", plot_svg(&report)),
                    other => return Err(Error::config(format!("unknown format {other}"))),
                };
                let path = dir.join(name);
                write_file(&path, &content)?;
                written.push(path);
            }
            if written.is_empty() {
                emit_report(&report, &dir)?;
            }
            Ok(())
        }
        Command::VerifyCorrector { trials, seed, threshold } => {
            let tables = NoiseTables::new(cfg.noise_spec())?;
            let report = verify_corrector(&tables, *trials, *seed)?;
            println!(
                "corrector residual over {} fields: max {:.3e} (threshold {:.1e})",
                trials, report.residual_max, threshold
            );
            if report.residual_max >= *threshold {
                return Err(Error::threshold(format!(
                    "corrector residual {:.3e} exceeds {:.1e}",
                    report.residual_max, threshold
                )));
            }
            Ok(())
        }
        Command::Covariance { x, json } => {
            let parts: Vec<&str> = x.split(',').collect();
            if parts.len() != 3 {
                return Err(Error::config("displacement must be \"x1,x2,x3\""));
            }
            let mut xv = [0.0f64; 3];
            for (i, p) in parts.iter().enumerate() {
                xv[i] = p
                    .trim()
                    .parse()
                    .map_err(|_| Error::config(format!("bad displacement component {p:?}")))?;
            }
            let tables = NoiseTables::new(cfg.noise_spec())?;
            let pieces = covariance_pieces(&tables, xv);
            let etas = eta_coefficients(&tables);
            if *json {
                let payload = serde_json::json!({
                    "x": xv,
                    "q_t": pieces.q_t,
                    "q_r": pieces.q_r,
                    "q_prime": pieces.q_prime,
                    "q_rho": pieces.q_rho,
                    "total": pieces.total(),
                    "eta": etas,
                });
                println!("{}", serde_json::to_string_pretty(&payload).map_err(Error::from)?);
            } else {
                print!("{}", mat_lines("Q_T (horizontal transport)", &pieces.q_t));
                print!("{}", mat_lines("Q_R (horizontal stretching)", &pieces.q_r));
                print!("{}", mat_lines("Q' (vertical)", &pieces.q_prime));
                print!("{}", mat_lines("Q_rho (cross)", &pieces.q_rho));
                println!(
                    "eta_VT = {:.12}\neta_VR = {:.12}\neta_HR = {:.12}\n\
                     eta_T  = {:.12} (limit {:.12})\neta_R  = {:.12}",
                    etas.eta_vt, etas.eta_vr, etas.eta_hr, etas.eta_t_eps, etas.eta_t_limit,
                    etas.eta_r_eps
                );
            }
            Ok(())
        }
        Command::Helicity { json } => {
            let tables = NoiseTables::new(cfg.noise_spec())?;
            let h = helicity(&tables);
            let ops = CorrectorOperators::new(&tables);
            if *json {
                let payload = serde_json::json!({
                    "h_eps": h.h_eps,
                    "h_limit": h.h_limit,
                    "t_gamma": h.t_gamma,
                    "r_matrix": ops.r_matrix,
                });
                println!("{}", serde_json::to_string_pretty(&payload).map_err(Error::from)?);
            } else {
                println!("helicity   = {:.12}", h.h_eps);
                println!("limit      = {:.12}", h.h_limit);
                println!(
                    "alpha R    = [[{:.12}, {:.12}], [{:.12}, {:.12}]]",
                    ops.r_matrix[0][0], ops.r_matrix[0][1], ops.r_matrix[1][0], ops.r_matrix[1][1]
                );
            }
            Ok(())
        }
        Command::DumpField { what, seed, realization } => {
            let sim = cfg.sim_config();
            let field = match what.as_str() {
                "initial" => initial_field(&sim)?,
                _ => {
                    let opts = SimOptions { record_full: true, noise_off: false };
                    let run = simulate(&sim, *seed, *realization, &opts)?;
                    run.full_states.expect("record_full").pop().expect("states")
                }
            };
            let dir = out_dir(&cfg)?;
            write_file(&dir.join(format!("field_{what}.csv")), &field_csv(&field))?;
            println!("|B| = {:.6e}, divergence residual {:.3e}", field.norm_l2(), field.div_residual());
            Ok(())
        }
        Command::Bench { ns, steps } => {
            for &n in ns {
                let mut sim = cfg.sim_config();
                sim.noise.n = n;
                sim.kmax = 2 * n;
                let mut stepper = Stepper::new(&sim)?;
                let mut b = initial_field(&sim)?;
                // Warm the FFT plans outside the timed loop.
                let incr = stepper.increments(1, 0, 0);
                let (nz, _) = stepper.noise_term(&b, &incr);
                stepper.advance(&mut b, Some(&nz), 0)?;
                let start = std::time::Instant::now();
                for step in 1..=*steps {
                    let incr = stepper.increments(1, 0, step);
                    let (nz, _) = stepper.noise_term(&b, &incr);
                    stepper.advance(&mut b, Some(&nz), step as usize)?;
                }
                let per = start.elapsed().as_secs_f64() / *steps as f64;
                println!("n = {:>3}: {:>9.3} ms/step ({} modes)", n, per * 1e3, stepper.tables.len());
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cli_parses_all_subcommands() {
        for args in [
            vec!["thinmag", "simulate", "--seed", "7"],
            vec!["thinmag", "limit-solve", "--t", "0.5", "--intermediate"],
            vec!["thinmag", "converge", "-c", "cfg.toml"],
            vec!["thinmag", "verify-corrector", "--trials", "4", "--threshold", "1e-8"],
            vec!["thinmag", "covariance", "--x", "0.1,0,2"],
            vec!["thinmag", "helicity", "--json"],
            vec!["thinmag", "dump-field", "--what", "final"],
            vec!["thinmag", "bench", "--ns", "2,4"],
        ] {
            Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
        assert!(Cli::try_parse_from(["thinmag", "dump-field", "--what", "nope"]).is_err());
        assert!(Cli::try_parse_from(["thinmag"]).is_err());
    }
}
