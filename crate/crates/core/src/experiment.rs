//! Monte-Carlo convergence experiments: vertical means of 3D runs against the
//! exact 2D solvers across a ladder of layer counts, with rate fits and
//! machine-readable reports.
//!
//! For each `n` in the ladder the experiment runs `realizations` independent
//! paths, records `sup_t ||B3bar(t) - B3(t)||^2_{H^{-theta1}}` and
//! `sup_t ||A3bar(t) - A3(t)||^2_{H^{-theta2}}` per path (sup over the recorded
//! time grid — a lower bound on the true sup), against both the limit system
//! and the finite-`n` intermediate system, and averages with Monte-Carlo
//! standard errors.  Realizations fan out to a worker pool; the reduction is
//! performed in realization order, so reports are reproducible for a fixed
//! `(config, seed)` regardless of thread count.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrector::CorrectorOperators;
use crate::error::{Error, Result};
use crate::field::{sobolev_norm, SpectralField};
use crate::limit::{intermediate_params, limit_params, solve_a3, solve_b3};
use crate::noise::NoiseTables;
use crate::solver::{flat_means, initial_field, simulate, SimConfig, SimOptions};

/// Configuration of a convergence ladder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Layer counts, strictly increasing.
    pub ns: Vec<u32>,
    pub realizations: u32,
    /// Negative Sobolev index for the third component (`H^{-theta1}`).
    pub theta1: f64,
    /// Negative Sobolev index for the potential (`H^{-theta2}`).
    pub theta2: f64,
    /// Expected rate margin; must satisfy `0 < delta < theta2 < theta1 <= 1`.
    pub delta: f64,
    pub seed: u64,
    /// Horizontal band per layer count: `kmax = kmax_factor * n` (>= 2).
    #[serde(default = "default_kmax_factor")]
    pub kmax_factor: u32,
    /// Base configuration; `noise.n` and `kmax` are overridden per ladder
    /// point, everything else (noise constants, dt, horizon, recording,
    /// initial data) is shared so the limit data match across the ladder.
    pub template: SimConfig,
    /// Drop the stochastic term (deterministic ladder; the errors then reduce
    /// to the gap between the intermediate and limit heat flows).
    #[serde(default)]
    pub noise_off: bool,
}

fn default_kmax_factor() -> u32 {
    2
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.delta && self.delta < self.theta2 && self.theta2 < self.theta1
            && self.theta1 <= 1.0)
        {
            return Err(Error::config(
                "require 0 < delta < theta2 < theta1 <= 1",
            ));
        }
        if self.ns.is_empty() || self.ns.windows(2).any(|w| w[0] >= w[1]) || self.ns[0] == 0 {
            return Err(Error::config("ns must be nonempty, positive, strictly increasing"));
        }
        if self.realizations == 0 {
            return Err(Error::config("realizations must be >= 1"));
        }
        if self.kmax_factor < 2 {
            return Err(Error::config("kmax_factor must be >= 2 to cover the noise annulus"));
        }
        Ok(())
    }

    /// Simulation configuration at one ladder point.
    pub fn sim_config_for(&self, n: u32) -> SimConfig {
        let mut cfg = self.template.clone();
        cfg.noise.n = n;
        cfg.kmax = self.kmax_factor * n;
        cfg
    }
}

/// Per-ladder-point record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NRecord {
    pub n: u32,
    pub realizations_used: u32,
    pub failures: u32,
    /// Mean over realizations of `sup_t ||B3bar - B3_limit||^2_{H^{-theta1}}`.
    pub err_b: f64,
    pub err_b_se: f64,
    /// Same for the potential in `H^{-theta2}`.
    pub err_a: f64,
    pub err_a_se: f64,
    /// Errors against the finite-`n` intermediate system.
    pub err_b_hat: f64,
    pub err_b_hat_se: f64,
    pub err_a_hat: f64,
    pub err_a_hat_se: f64,
}

/// Log-log least-squares fit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub config: ExperimentConfig,
    pub build: String,
    /// Wall-clock seconds; excluded from reproducibility comparisons.
    pub wall_seconds: f64,
    pub records: Vec<NRecord>,
    pub slope_b: Option<RateFit>,
    pub slope_a: Option<RateFit>,
    pub slope_b_hat: Option<RateFit>,
    pub slope_a_hat: Option<RateFit>,
}

/// Least squares on `(log n, log err)`.
///
/// With zero variance in the ordinates the fit is exact and `r2 = 1` by
/// convention.
pub fn fit_rate(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 2 {
        return Err(Error::config("fit_rate needs at least 2 points"));
    }
    if points.iter().any(|(n, e)| *n <= 0.0 || *e <= 0.0) {
        return Err(Error::config("fit_rate requires positive abscissae and errors"));
    }
    let xs: Vec<f64> = points.iter().map(|(n, _)| n.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|(_, e)| e.ln()).collect();
    let m = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / m;
    let ybar = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - xbar).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::config("fit_rate requires distinct abscissae"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xbar) * (y - ybar)).sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let ss_tot: f64 = ys.iter().map(|y| (y - ybar).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - (intercept + slope * x)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { slope, intercept, r2 })
}

pub(crate) fn mean_se(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

/// The four per-realization sup errors: `[b, a, b_hat, a_hat]`.
fn realization_sups(
    cfg: &SimConfig,
    seed: u64,
    realization: u32,
    noise_off: bool,
    theta1: f64,
    theta2: f64,
    refs: &[(f64, SpectralField, SpectralField, SpectralField, SpectralField)],
) -> Result<[f64; 4]> {
    let run = simulate(cfg, seed, realization, &SimOptions { record_full: false, noise_off })?;
    if run.times.len() != refs.len() {
        return Err(Error::numerical("recorded grid mismatch"));
    }
    let mut sups = [0.0f64; 4];
    for (i, (_, bl, al, bi, ai)) in refs.iter().enumerate() {
        let eb = sobolev_norm(&run.b3bar[i].sub(bl), -theta1)?.powi(2);
        let ea = sobolev_norm(&run.a3bar[i].sub(al), -theta2)?.powi(2);
        let ebh = sobolev_norm(&run.b3bar[i].sub(bi), -theta1)?.powi(2);
        let eah = sobolev_norm(&run.a3bar[i].sub(ai), -theta2)?.powi(2);
        sups[0] = sups[0].max(eb);
        sups[1] = sups[1].max(ea);
        sups[2] = sups[2].max(ebh);
        sups[3] = sups[3].max(eah);
    }
    Ok(sups)
}

/// Run the full ladder.
pub fn run_convergence(cfg: &ExperimentConfig) -> Result<ConvergenceReport> {
    cfg.validate()?;
    let start = Instant::now();
    let lim = limit_params(&cfg.template.noise);
    let mut records = Vec::new();
    for &n in &cfg.ns {
        let sim = cfg.sim_config_for(n);
        let tables = NoiseTables::new(sim.noise)?;
        sim.validate(&tables)?;
        let ops = CorrectorOperators::new(&tables);
        let inter = intermediate_params(&sim.noise, &ops);
        let (a0, b0) = flat_means(&initial_field(&sim)?)?;
        // Reference solutions are path-independent: precompute per record time.
        let nsteps = sim.nsteps();
        let mut refs = Vec::new();
        for step in 0..=nsteps {
            if step % sim.record_every == 0 || step == nsteps {
                let t = step as f64 * sim.dt;
                refs.push((
                    t,
                    solve_b3(&lim, &a0, &b0, t)?,
                    solve_a3(&lim, &a0, t)?,
                    solve_b3(&inter, &a0, &b0, t)?,
                    solve_a3(&inter, &a0, t)?,
                ));
            }
        }
        let results: Vec<Result<[f64; 4]>> = (0..cfg.realizations)
            .into_par_iter()
            .map(|r| {
                realization_sups(&sim, cfg.seed, r, cfg.noise_off, cfg.theta1, cfg.theta2, &refs)
            })
            .collect();
        let mut per_real: Vec<[f64; 4]> = Vec::new();
        let mut failures = 0u32;
        for res in results {
            match res {
                Ok(v) => per_real.push(v),
                Err(_) => failures += 1,
            }
        }
        let col = |j: usize| per_real.iter().map(|v| v[j]).collect::<Vec<_>>();
        let (err_b, err_b_se) = mean_se(&col(0));
        let (err_a, err_a_se) = mean_se(&col(1));
        let (err_b_hat, err_b_hat_se) = mean_se(&col(2));
        let (err_a_hat, err_a_hat_se) = mean_se(&col(3));
        records.push(NRecord {
            n,
            realizations_used: per_real.len() as u32,
            failures,
            err_b,
            err_b_se,
            err_a,
            err_a_se,
            err_b_hat,
            err_b_hat_se,
            err_a_hat,
            err_a_hat_se,
        });
    }
    let fit_of = |f: &dyn Fn(&NRecord) -> f64| {
        let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.n as f64, f(r))).collect();
        fit_rate(&pts).ok()
    };
    Ok(ConvergenceReport {
        config: cfg.clone(),
        build: format!("thinmag-core {}", env!("CARGO_PKG_VERSION")),
        wall_seconds: start.elapsed().as_secs_f64(),
        records: records.clone(),
        slope_b: fit_of(&|r| r.err_b),
        slope_a: fit_of(&|r| r.err_a),
        slope_b_hat: fit_of(&|r| r.err_b_hat),
        slope_a_hat: fit_of(&|r| r.err_a_hat),
    })
}

/// JSON serialization of a report.
pub fn report_json(report: &ConvergenceReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// CSV plot data: one row per ladder point with 95% confidence bounds.
pub fn report_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from(
        "n,err_b,err_b_lo,err_b_hi,err_a,err_a_lo,err_a_hi,\
         err_b_hat,err_b_hat_lo,err_b_hat_hi,err_a_hat,err_a_hat_lo,err_a_hat_hi,failures\n",
    );
    for r in &report.records {
        let ci = |m: f64, se: f64| (m - 1.96 * se, m + 1.96 * se);
        let (bl, bh) = ci(r.err_b, r.err_b_se);
        let (al, ah) = ci(r.err_a, r.err_a_se);
        let (bhl, bhh) = ci(r.err_b_hat, r.err_b_hat_se);
        let (ahl, ahh) = ci(r.err_a_hat, r.err_a_hat_se);
        out.push_str(&format!(
            "{},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{}\n",
            r.n, r.err_b, bl, bh, r.err_a, al, ah, r.err_b_hat, bhl, bhh, r.err_a_hat, ahl, ahh,
            r.failures
        ));
    }
    out
}

/// One chart series: label, stroke colour, `(n, error)` points.
type Series<'a> = (&'a str, &'a str, Vec<(f64, f64)>);

/// Minimal log-log SVG chart of the error ladders.
pub fn plot_svg(report: &ConvergenceReport) -> String {
    let (w, h) = (640.0, 480.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let series: [Series; 4] = [
        ("err_b", "#c0392b", report.records.iter().map(|r| (r.n as f64, r.err_b)).collect()),
        ("err_a", "#2980b9", report.records.iter().map(|r| (r.n as f64, r.err_a)).collect()),
        ("err_b_hat", "#e67e22", report.records.iter().map(|r| (r.n as f64, r.err_b_hat)).collect()),
        ("err_a_hat", "#16a085", report.records.iter().map(|r| (r.n as f64, r.err_a_hat)).collect()),
    ];
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (_, _, s) in &series {
        pts.extend(s.iter().filter(|(_, e)| *e > 0.0).copied());
    }
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    );
    if pts.is_empty() {
        svg.push_str("<text x=\"320\" y=\"240\" text-anchor=\"middle\">no data</text>\n</svg>\n");
        return svg;
    }
    let fx = |v: f64| v.log10();
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for (n, e) in &pts {
        x0 = x0.min(fx(*n));
        x1 = x1.max(fx(*n));
        y0 = y0.min(fx(*e));
        y1 = y1.max(fx(*e));
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| ml + (fx(x) - x0) / (x1 - x0) * (w - ml - mr);
    let py = |y: f64| h - mb - (fx(y) - y0) / (y1 - y0) * (h - mt - mb);
    svg.push_str(&format!(
        "<line x1=\"{ml}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <text x=\"{2}\" y=\"{3}\" text-anchor=\"middle\">n (log)</text>\n\
         <text x=\"15\" y=\"{4}\" transform=\"rotate(-90 15 {4})\" text-anchor=\"middle\">sup-t squared error (log)</text>\n",
        h - mb,
        w - mr,
        (ml + w - mr) / 2.0,
        h - 12.0,
        (mt + h - mb) / 2.0
    ));
    for (li, (name, color, s)) in series.iter().enumerate() {
        let path: Vec<String> = s
            .iter()
            .filter(|(_, e)| *e > 0.0)
            .map(|(n, e)| format!("{:.2},{:.2}", px(*n), py(*e)))
            .collect();
        if path.len() >= 2 {
            svg.push_str(&format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"/>\n",
                path.join(" ")
            ));
        }
        for p in &path {
            let xy: Vec<&str> = p.split(',').collect();
            svg.push_str(&format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                xy[0], xy[1]
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" fill=\"{color}\">{name}</text>\n",
            w - mr - 120.0,
            mt + 18.0 * (li as f64 + 1.0)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write `report.json`, `report.csv`, and `convergence.svg` under `dir`.
pub fn emit_report(report: &ConvergenceReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for (name, content) in [
        ("report.json", report_json(report)?),
        ("report.csv", report_csv(report)),
        ("convergence.svg", plot_svg(report)),
    ] {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path)?;
        f.write_all(content.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}
