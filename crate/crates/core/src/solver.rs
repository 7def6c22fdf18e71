//! Exponential Euler–Maruyama integration of the Itô induction system
//!
//! ```text
//! dB = (eta*Delta + Lambda + Lambda_rho) B dt + sum_{k,j} L_{sigma_{k,j}} B dW^{k,j}
//! ```
//!
//! on the divergence-free solution band `|kH| <= kmax`, `|m| <= jmax`.  The
//! drift is exact per mode: `B <- exp(dt*D(k)) (B + noise)` with
//! `D(k) = -(eta|k|^2 + diff_h|kH|^2 + diff_v k3^2) I + M(k)` and `M(k)` the
//! first-order corrector matrix.  The noise increment is synthesised as one
//! field `V = sum sigma dW` and applied through a single dealiased Lie
//! derivative `L_V B = -curl(V x B)`, then re-projected (Leray) and the
//! reality pairing re-symmetrised.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::corrector::CorrectorOperators;
use crate::error::{Error, Result};
use crate::fft::FftEngine;
use crate::field::{
    dealiased_combine, curl, embed_flat, flat_a3_potential, fluct_n, leray_project, mean_m,
    partial, random_divfree_field, to_flat, Domain, Flags, Mode3, SpectralField,
};
use crate::lattice::{frame, WaveVector};
use crate::noise::{sample_increments, synthesize, NoiseSpec, NoiseTables, PathIncrements};
use crate::C64;

/// Initial data for a simulation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialCondition {
    /// A 2D (vertical-mean) field drawn from fixed-seed flat potentials on
    /// `1 <= |kH| <= hband`, plus a vertical fluctuation built from a fixed
    /// coefficient tensor on `|kH| <= hband`, `1 <= |m| <= mband` and Leray
    /// projected.  The mean part does not depend on the layer count, so runs
    /// at different `n` share their limit data.
    TwoDimPlusFluct {
        hband: u32,
        mband: u32,
        mean_amp: f64,
        fluct_amp: f64,
        ic_seed: u64,
    },
    /// A single conjugate mode pair with a divergence-free polarisation.
    SingleMode { k1: i64, k2: i64, m: i64, amp: f64 },
    /// Random divergence-free field on a low-mode band.
    RandomLowmode { kband: u32, mband: u32, amp: f64, ic_seed: u64 },
}

/// Full simulation configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub noise: NoiseSpec,
    /// Horizontal solution band (Euclidean); must cover the noise annulus,
    /// `kmax >= 2n`.
    pub kmax: u32,
    pub dt: f64,
    pub horizon: f64,
    /// Record diagnostics every this many steps (the final step is always
    /// recorded).
    pub record_every: usize,
    pub initial: InitialCondition,
}

impl SimConfig {
    /// Solution band.
    pub fn domain(&self) -> Domain {
        Domain::Thin3D { n: self.noise.n, kmax: self.kmax, mmax: self.noise.jmax }
    }

    pub fn nsteps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Validate the configuration (including the standing decay hypotheses,
    /// graded at 1%) and return accumulated warnings.
    pub fn validate(&self, tables: &NoiseTables) -> Result<Vec<String>> {
        let mut warnings = self.noise.validate()?;
        warnings.extend(self.noise.check_hypotheses()?);
        if self.kmax < 2 * self.noise.n {
            return Err(Error::config(format!(
                "solution band kmax = {} must cover the noise annulus (2n = {})",
                self.kmax,
                2 * self.noise.n
            )));
        }
        if !(self.dt > 0.0) || !(self.horizon > 0.0) {
            return Err(Error::config("dt and horizon must be positive"));
        }
        let nsteps = self.horizon / self.dt;
        if (nsteps - nsteps.round()).abs() > 1e-9 * nsteps.max(1.0) || nsteps.round() < 1.0 {
            return Err(Error::config(
                "horizon must be a positive integer multiple of dt",
            ));
        }
        if self.record_every == 0 {
            return Err(Error::config("record_every must be >= 1"));
        }
        match &self.initial {
            InitialCondition::TwoDimPlusFluct { hband, mband, .. } => {
                if *hband > self.kmax || *mband > self.noise.jmax {
                    return Err(Error::config("initial data band exceeds the solution band"));
                }
                if *hband == 0 {
                    return Err(Error::config("initial hband must be >= 1"));
                }
            }
            InitialCondition::SingleMode { k1, k2, m, .. } => {
                if !self.domain().in_band((*k1, *k2, *m)) {
                    return Err(Error::config("initial mode outside the solution band"));
                }
                if *k1 == 0 && *k2 == 0 && *m == 0 {
                    return Err(Error::config("initial mode must be nonzero"));
                }
            }
            InitialCondition::RandomLowmode { kband, mband, .. } => {
                if *kband > self.kmax || *mband > self.noise.jmax {
                    return Err(Error::config("initial data band exceeds the solution band"));
                }
            }
        }
        // Heuristic guard against overly large noise increments per step: the
        // exponential integrator absorbs the stiff drift exactly, but the
        // explicit noise term still carries O(dt * intensity * |k|^2) energy
        // transfer.  This is deliberately a warning, not an error.
        let mut intensity = 0.0;
        for th in &tables.theta {
            intensity += 2.0 * (th[0].norm_sqr() + th[1].norm_sqr());
        }
        let kmax2 = (self.kmax as f64).powi(2);
        let k3max2 = ((self.noise.n * self.noise.jmax) as f64).powi(2);
        let stiff = self.dt * intensity * (kmax2 + k3max2);
        if stiff > 0.1 {
            warnings.push(format!(
                "noise increments are large for this band: dt * intensity * kmax^2 = {stiff:.2} > 0.1; \
                 statistical accuracy may require a smaller dt"
            ));
        }
        Ok(warnings)
    }
}

/// Runtime options orthogonal to the model configuration.
#[derive(Clone, Copy, Debug, Default)]
pub struct SimOptions {
    /// Keep every intermediate state (needed by the mild-form reconstruction).
    pub record_full: bool,
    /// Skip the stochastic term (deterministic drift flow).
    pub noise_off: bool,
}

/// Scalar diagnostics recorded along a run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Diagnostics {
    pub t: f64,
    /// Squared L2 norm of the full field.
    pub energy: f64,
    pub norm_mean: f64,
    pub norm_fluct: f64,
    /// `|N B| / (eps |d3 N B|)`; bounded by 1, equal to 1 only when all
    /// fluctuation energy sits at `|m| = 1`.  Zero when there is no
    /// fluctuation.
    pub poincare_ratio: f64,
    /// Relative divergence residual of the last noise increment before
    /// re-projection.
    pub div_residual_pre: f64,
    pub reality_residual: f64,
    /// Flat L2 norm of the vertical-mean third component.
    pub norm_b3bar: f64,
    /// Flat L2 norm of its scalar potential.
    pub norm_a3bar: f64,
}

/// State of a run at one time.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    pub step: usize,
    pub b: SpectralField,
}

/// Output of a simulation.
pub struct SimRun {
    pub times: Vec<f64>,
    pub diagnostics: Vec<Diagnostics>,
    /// Vertical-mean third component at record times (flat scalar).
    pub b3bar: Vec<SpectralField>,
    /// Its scalar potential at record times (flat scalar).
    pub a3bar: Vec<SpectralField>,
    /// Every intermediate state (only with `SimOptions::record_full`).
    pub full_states: Option<Vec<SpectralField>>,
    pub warnings: Vec<String>,
}

/// Build the initial field of a configuration.
pub fn initial_field(cfg: &SimConfig) -> Result<SpectralField> {
    let domain = cfg.domain();
    let n = cfg.noise.n;
    match &cfg.initial {
        InitialCondition::TwoDimPlusFluct { hband, mband, mean_amp, fluct_amp, ic_seed } => {
            use rand::{Rng, SeedableRng};
            // Mean part: fixed-seed flat potentials a3, b3 on 1 <= |k| <= hband.
            // The draw order runs over flat modes only, so the result is
            // independent of the layer count.
            let flat = Domain::Flat2D { kmax: *hband };
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*ic_seed);
            let mut a3 = SpectralField::zeros(flat, 1);
            let mut b3 = SpectralField::zeros(flat, 1);
            let hb = *hband as i64;
            for k1 in -hb..=hb {
                for k2 in -hb..=hb {
                    let q = k1 * k1 + k2 * k2;
                    if q == 0 || q > hb * hb {
                        continue;
                    }
                    if crate::lattice::gamma_sign(WaveVector::new(k1, k2, 0, 1)) < 0 {
                        continue;
                    }
                    let mut draw = |f: &mut SpectralField| {
                        let v = Complex::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5);
                        f.set(0, (k1, k2, 0), *mean_amp * v);
                        f.set(0, (-k1, -k2, 0), *mean_amp * v.conj());
                    };
                    draw(&mut a3);
                    draw(&mut b3);
                }
            }
            a3.flags = Flags { real: true, div_free: false };
            b3.flags = Flags { real: true, div_free: false };
            let bh = crate::field::flat_bh_from_a3(&a3)?;
            let mut mean_flat = bh;
            for mode in b3.domain.modes() {
                mean_flat.set(2, mode, b3.get(0, mode));
            }
            let mean = embed_flat(&mean_flat, domain)?;

            // Fluctuation part: a fixed coefficient tensor on the vertical
            // band, Leray projected at this layer count.
            let mut rng2 = rand_chacha::ChaCha8Rng::seed_from_u64(ic_seed.wrapping_add(1));
            let mut fluct = SpectralField::zeros(domain, 3);
            for k1 in -hb..=hb {
                for k2 in -hb..=hb {
                    if k1 * k1 + k2 * k2 > hb * hb {
                        continue;
                    }
                    for m in 1..=(*mband as i64) {
                        let mut v = [Complex::new(0.0, 0.0); 3];
                        for c in &mut v {
                            *c = Complex::new(rng2.gen::<f64>() - 0.5, rng2.gen::<f64>() - 0.5);
                        }
                        for c in 0..3 {
                            fluct.set(c, (k1, k2, m), v[c]);
                            fluct.set(c, (-k1, -k2, -m), v[c].conj());
                        }
                    }
                }
            }
            fluct.flags = Flags { real: true, div_free: false };
            let fluct = leray_project(&fluct);
            let mut b0 = mean;
            b0.axpy_mut(*fluct_amp, &fluct);
            b0.symmetrize_reality();
            Ok(b0)
        }
        InitialCondition::SingleMode { k1, k2, m, amp } => {
            let mode = (*k1, *k2, *m);
            if !domain.in_band(mode) {
                return Err(Error::config("initial mode outside the solution band"));
            }
            let f = frame(WaveVector::new(*k1, *k2, *m, n));
            let mut b0 = SpectralField::zeros(domain, 3);
            for c in 0..3 {
                let v = Complex::new(f.a1[c], f.a2[c]) * *amp;
                b0.set(c, mode, v);
                b0.set(c, (-mode.0, -mode.1, -mode.2), v.conj());
            }
            b0.flags = Flags { real: true, div_free: true };
            Ok(b0)
        }
        InitialCondition::RandomLowmode { kband, mband, amp, ic_seed } => {
            Ok(random_divfree_field(domain, *kband, *mband, *ic_seed).scaled(*amp))
        }
    }
}

/// Vertical-mean scalars of a thin field: `(a3bar, b3bar)` on the flat torus,
/// where `b3bar` is the third component of the vertical mean and `a3bar` its
/// scalar potential.
pub fn flat_means(b: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    let bm = to_flat(&mean_m(b));
    let a3 = flat_a3_potential(&bm)?;
    let b3 = bm.component(2);
    Ok((a3, b3))
}

// ---- 3x3 complex matrix helpers ----

pub type Mat3 = [[C64; 3]; 3];

pub(crate) fn mat_id() -> Mat3 {
    let mut m = [[Complex::new(0.0, 0.0); 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex::new(1.0, 0.0);
    }
    m
}

pub(crate) fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut c = [[Complex::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let mut acc = Complex::new(0.0, 0.0);
            for l in 0..3 {
                acc += a[i][l] * b[l][j];
            }
            c[i][j] = acc;
        }
    }
    c
}

pub(crate) fn mat_vec(a: &Mat3, v: [C64; 3]) -> [C64; 3] {
    let mut out = [Complex::new(0.0, 0.0); 3];
    for (i, row) in a.iter().enumerate() {
        out[i] = row[0] * v[0] + row[1] * v[1] + row[2] * v[2];
    }
    out
}

fn mat_norm1(a: &Mat3) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..3 {
        let s: f64 = (0..3).map(|i| a[i][j].norm()).sum();
        worst = worst.max(s);
    }
    worst
}

/// Matrix exponential by scaling-and-squaring with a Taylor core
/// (8 terms at scaled norm <= 1/8; relative error ~1e-14 before squaring).
pub fn matexp3(m: &Mat3) -> Mat3 {
    let norm = mat_norm1(m);
    let s = if norm > 0.125 {
        (norm / 0.125).log2().ceil() as u32
    } else {
        0
    };
    let scale = 0.5f64.powi(s as i32);
    let mut t = *m;
    for row in &mut t {
        for v in row {
            *v *= scale;
        }
    }
    let mut acc = mat_id();
    let mut term = mat_id();
    for i in 1..=8 {
        term = mat_mul(&term, &t);
        let inv = 1.0 / i as f64;
        for row in &mut term {
            for v in row {
                *v *= inv;
            }
        }
        for r in 0..3 {
            for c in 0..3 {
                acc[r][c] += term[r][c];
            }
        }
    }
    for _ in 0..s {
        acc = mat_mul(&acc, &acc);
    }
    acc
}

/// Precomputed stepping context: noise tables, corrector operators, and the
/// cached per-mode drift propagators `exp(dt*D(k))`.
pub struct Stepper {
    pub cfg: SimConfig,
    pub tables: NoiseTables,
    pub ops: CorrectorOperators,
    pub warnings: Vec<String>,
    drift: Vec<(Mode3, Mat3)>,
    engine: FftEngine,
}

impl Stepper {
    pub fn new(cfg: &SimConfig) -> Result<Self> {
        let tables = NoiseTables::new(cfg.noise)?;
        let warnings = cfg.validate(&tables)?;
        let ops = CorrectorOperators::new(&tables);
        let domain = cfg.domain();
        let rho = cfg.noise.rho;
        let mut drift = Vec::new();
        for mode in domain.modes() {
            let kc = domain.cartesian(mode);
            let lam = cfg.noise.eta * (kc[0] * kc[0] + kc[1] * kc[1] + kc[2] * kc[2])
                + ops.diff_h * (kc[0] * kc[0] + kc[1] * kc[1])
                + ops.diff_v * kc[2] * kc[2];
            let decay = Complex::new((-lam * cfg.dt).exp(), 0.0);
            let e = if rho != 0.0 {
                let mut m = ops.mode_matrix(kc);
                for row in &mut m {
                    for v in row {
                        *v *= cfg.dt;
                    }
                }
                let mut e = matexp3(&m);
                for row in &mut e {
                    for v in row {
                        *v *= decay;
                    }
                }
                e
            } else {
                let mut e = mat_id();
                for (i, row) in e.iter_mut().enumerate() {
                    row[i] = decay;
                }
                e
            };
            drift.push((mode, e));
        }
        Ok(Stepper { cfg: cfg.clone(), tables, ops, warnings, drift, engine: FftEngine::new() })
    }

    /// The stochastic increment `Leray(L_V B)` for one step, together with the
    /// relative divergence residual of the raw Lie term before re-projection.
    pub fn noise_term(&mut self, b: &SpectralField, incr: &PathIncrements) -> (SpectralField, f64) {
        let v = synthesize(&self.tables, incr);
        let raw = lie_solenoidal(&mut self.engine, &v, b);
        let pre = raw.div_residual();
        (leray_project(&raw), pre)
    }

    /// Draw the increments of a step under the reproducibility contract.
    pub fn increments(&self, seed: u64, realization: u32, step: u32) -> PathIncrements {
        sample_increments(&self.tables, self.cfg.dt, seed, realization, step)
    }

    /// One exponential Euler–Maruyama update: `B <- exp(dt D)(B + noise)`,
    /// followed by reality re-symmetrisation.  Fails on non-finite values.
    pub fn advance(&self, b: &mut SpectralField, noise: Option<&SpectralField>, step: usize) -> Result<()> {
        for (mode, e) in &self.drift {
            let mut v = b.vec3(*mode);
            if let Some(nz) = noise {
                let w = nz.vec3(*mode);
                for c in 0..3 {
                    v[c] += w[c];
                }
            }
            let w = mat_vec(e, v);
            for c in 0..3 {
                b.set(c, *mode, w[c]);
            }
        }
        b.symmetrize_reality();
        let energy: f64 = b.data().iter().map(|v| v.norm_sqr()).sum();
        if !energy.is_finite() {
            return Err(Error::numerical(format!(
                "solution blew up (non-finite energy) at step {step}"
            )));
        }
        Ok(())
    }
}

/// Lie derivative of solenoidal fields through the curl form (used on the hot
/// path where both arguments are divergence-free by construction).
fn lie_solenoidal(engine: &mut FftEngine, x: &SpectralField, y: &SpectralField) -> SpectralField {
    let cross = dealiased_combine(engine, &[x, y], y.domain, 3, |v, out| {
        out[0] = v[1] * v[5] - v[2] * v[4];
        out[1] = v[2] * v[3] - v[0] * v[5];
        out[2] = v[0] * v[4] - v[1] * v[3];
    });
    let mut out = curl(&cross);
    out.scale_mut(Complex::new(-1.0, 0.0));
    out.flags = Flags { real: x.flags.real && y.flags.real, div_free: true };
    out
}

fn diagnostics_of(b: &SpectralField, t: f64, eps: f64, div_pre: f64) -> Result<Diagnostics> {
    let mean = mean_m(b);
    let fl = fluct_n(b);
    let nf = fl.norm_l2();
    let d3 = partial(&fl, 2).norm_l2();
    let poincare = if nf > 0.0 && d3 > 0.0 { nf / (eps * d3) } else { 0.0 };
    let (a3, b3) = flat_means(b)?;
    Ok(Diagnostics {
        t,
        energy: b.norm_l2().powi(2),
        norm_mean: mean.norm_l2(),
        norm_fluct: nf,
        poincare_ratio: poincare,
        div_residual_pre: div_pre,
        reality_residual: b.reality_residual(),
        norm_b3bar: b3.norm_l2(),
        norm_a3bar: a3.norm_l2(),
    })
}

/// Run a full simulation.
///
/// Reproducibility: the whole path is a pure function of
/// `(cfg, seed, realization)`; increments are regenerable per `(step, mode)`.
pub fn simulate(
    cfg: &SimConfig,
    seed: u64,
    realization: u32,
    opts: &SimOptions,
) -> Result<SimRun> {
    let mut stepper = Stepper::new(cfg)?;
    let mut b = initial_field(cfg)?;
    let eps = 1.0 / cfg.noise.n as f64;
    let nsteps = cfg.nsteps();
    let mut run = SimRun {
        times: Vec::new(),
        diagnostics: Vec::new(),
        b3bar: Vec::new(),
        a3bar: Vec::new(),
        full_states: if opts.record_full { Some(Vec::new()) } else { None },
        warnings: stepper.warnings.clone(),
    };
    let mut div_pre = 0.0;
    for step in 0..=nsteps {
        let t = step as f64 * cfg.dt;
        if let Some(states) = run.full_states.as_mut() {
            states.push(b.clone());
        }
        if step % cfg.record_every == 0 || step == nsteps {
            run.times.push(t);
            run.diagnostics.push(diagnostics_of(&b, t, eps, div_pre)?);
            let (a3, b3) = flat_means(&b)?;
            run.a3bar.push(a3);
            run.b3bar.push(b3);
        }
        if step == nsteps {
            break;
        }
        let noise = if opts.noise_off {
            None
        } else {
            let incr = stepper.increments(seed, realization, step as u32);
            let (nz, pre) = stepper.noise_term(&b, &incr);
            div_pre = pre;
            Some(nz)
        };
        stepper.advance(&mut b, noise.as_ref(), step)?;
    }
    Ok(run)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn small_cfg() -> SimConfig {
        SimConfig {
            noise: NoiseSpec {
                n: 2,
                beta: 4.0,
                gamma: 4.0,
                rho: 0.7,
                c1h: 3.2,
                c2h: 1.0,
                cv: 1.0,
                jmax: 2,
                eta: 1.0,
            },
            kmax: 4,
            dt: 1e-3,
            horizon: 2e-2,
            record_every: 5,
            initial: InitialCondition::TwoDimPlusFluct {
                hband: 2,
                mband: 1,
                mean_amp: 1.0,
                fluct_amp: 0.5,
                ic_seed: 7,
            },
        }
    }

    #[test]
    fn matexp_against_closed_forms() {
        // Diagonal.
        let mut d = [[Complex::new(0.0, 0.0); 3]; 3];
        d[0][0] = Complex::new(-1.0, 0.5);
        d[1][1] = Complex::new(0.3, -2.0);
        d[2][2] = Complex::new(2.0, 0.0);
        let e = matexp3(&d);
        for i in 0..3 {
            assert!((e[i][i] - d[i][i].exp()).norm() < 1e-13 * d[i][i].exp().norm());
        }
        // Nilpotent: exp(M) = I + M exactly.
        let mut nlp = [[Complex::new(0.0, 0.0); 3]; 3];
        nlp[2][0] = Complex::new(0.0, 3.0);
        nlp[2][1] = Complex::new(0.0, -1.5);
        let e = matexp3(&nlp);
        for r in 0..3 {
            for c in 0..3 {
                let expect = if r == c {
                    Complex::new(1.0, 0.0)
                } else {
                    nlp[r][c]
                };
                assert!((e[r][c] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn matexp_matches_ode_integration() {
        // exp(A) v against high-resolution RK4 for a full drift matrix.
        let cfg = small_cfg();
        let stepper = Stepper::new(&cfg).unwrap();
        let kc = [2.0, -1.0, 2.0]; // vertical mode: non-nilpotent M
        let lam = cfg.noise.eta * 9.0
            + stepper.ops.diff_h * 5.0
            + stepper.ops.diff_v * 4.0;
        let mut a = stepper.ops.mode_matrix(kc);
        for (i, row) in a.iter_mut().enumerate() {
            row[i] -= Complex::new(lam, 0.0);
        }
        let dt = 0.05;
        let mut adt = a;
        for row in &mut adt {
            for v in row {
                *v *= dt;
            }
        }
        let e = matexp3(&adt);
        let v0 = [
            Complex::new(1.0, -0.3),
            Complex::new(0.2, 0.8),
            Complex::new(-0.5, 0.1),
        ];
        let got = mat_vec(&e, v0);
        // RK4 with 4000 substeps.
        let nsub = 4000;
        let h = dt / nsub as f64;
        let mut v = v0;
        let f = |x: [C64; 3]| mat_vec(&a, x);
        for _ in 0..nsub {
            let k1 = f(v);
            let k2 = f(std::array::from_fn(|i| v[i] + 0.5 * h * k1[i]));
            let k3 = f(std::array::from_fn(|i| v[i] + 0.5 * h * k2[i]));
            let k4 = f(std::array::from_fn(|i| v[i] + h * k3[i]));
            for i in 0..3 {
                v[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        for i in 0..3 {
            assert!(
                (got[i] - v[i]).norm() < 1e-12,
                "component {i}: {:?} vs {:?}",
                got[i],
                v[i]
            );
        }
    }

    #[test]
    fn noise_off_single_mode_is_exact_exponential_decay() {
        // With the noise off the scheme is exact: a single horizontal mode
        // decays by exp(-lam t) (I + t M) per mode.
        let mut cfg = small_cfg();
        cfg.initial = InitialCondition::SingleMode { k1: 1, k2: 1, m: 0, amp: 1.0 };
        cfg.horizon = 1e-2;
        cfg.record_every = 100;
        let stepper = Stepper::new(&cfg).unwrap();
        let run = simulate(&cfg, 0, 0, &SimOptions { noise_off: true, record_full: true }).unwrap();
        let states = run.full_states.as_ref().unwrap();
        let b0 = &states[0];
        let bt = states.last().unwrap();
        let t = cfg.horizon;
        let mode = (1i64, 1i64, 0i64);
        let kc = [1.0, 1.0, 0.0];
        let lam = cfg.noise.eta * 2.0 + stepper.ops.diff_h * 2.0;
        let m = stepper.ops.mode_matrix(kc);
        // e^{tD} = e^{-lam t}(I + tM) on nilpotent horizontal modes.
        let v0 = b0.vec3(mode);
        let mut expect = v0;
        let mv = mat_vec(&m, v0);
        for c in 0..3 {
            expect[c] = (expect[c] + t * mv[c]) * (-lam * t).exp();
        }
        let got = bt.vec3(mode);
        for c in 0..3 {
            assert!(
                (got[c] - expect[c]).norm() < 1e-13 * (1.0 + expect[c].norm()),
                "component {c}"
            );
        }
    }

    #[test]
    fn one_noisy_step_matches_sparse_reference() {
        // Cross-validate the FFT noise path against the exact sparse Lie
        // derivative for a single step with the same increments.
        let cfg = small_cfg();
        let mut stepper = Stepper::new(&cfg).unwrap();
        let b0 = initial_field(&cfg).unwrap();
        let incr = stepper.increments(3, 1, 0);
        let (noise, _) = stepper.noise_term(&b0, &incr);
        let v = synthesize(&stepper.tables, &incr);
        let reference = leray_project(
            &crate::field::lie_sparse(&v, &b0).restrict_to(b0.domain).unwrap(),
        );
        assert!(
            noise.sub(&reference).norm_l2() < 1e-11 * (1.0 + reference.norm_l2()),
            "dealiased noise term disagrees with sparse reference"
        );
    }

    #[test]
    fn runs_are_deterministic_and_structure_preserving() {
        let cfg = small_cfg();
        let opts = SimOptions::default();
        let run1 = simulate(&cfg, 11, 4, &opts).unwrap();
        let run2 = simulate(&cfg, 11, 4, &opts).unwrap();
        let d1 = run1.diagnostics.last().unwrap();
        let d2 = run2.diagnostics.last().unwrap();
        assert_eq!(d1.energy, d2.energy, "same seed must reproduce bitwise");
        for d in &run1.diagnostics {
            assert!(d.reality_residual < 1e-12);
            assert!(d.poincare_ratio <= 1.0 + 1e-12);
        }
        // Different realizations decouple.
        let run3 = simulate(&cfg, 11, 5, &opts).unwrap();
        assert!(run3.diagnostics.last().unwrap().energy != d1.energy);
        // Final step always recorded.
        assert_relative_eq!(
            *run1.times.last().unwrap(),
            cfg.horizon,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mean_initial_data_is_layer_independent() {
        let cfg4 = small_cfg();
        let mut cfg8 = small_cfg();
        cfg8.noise.n = 4;
        cfg8.kmax = 8;
        let b4 = initial_field(&cfg4).unwrap();
        let b8 = initial_field(&cfg8).unwrap();
        let (a4, b34) = flat_means(&b4).unwrap();
        let (a8, b38) = flat_means(&b8).unwrap();
        // Compare on the common flat band.
        for mode in a4.domain.modes() {
            assert!((a4.get(0, mode) - a8.get(0, mode)).norm() < 1e-14);
            assert!((b34.get(0, mode) - b38.get(0, mode)).norm() < 1e-14);
        }
        assert!(b4.div_residual() < 1e-13);
        assert!(b8.div_residual() < 1e-13);
    }

    #[test]
    fn validation_rejects_bad_bands() {
        let mut cfg = small_cfg();
        cfg.kmax = 3; // below 2n = 4
        let tables = NoiseTables::new(cfg.noise).unwrap();
        assert!(cfg.validate(&tables).is_err());
        let mut cfg2 = small_cfg();
        cfg2.horizon = 0.0015; // not a multiple of dt
        assert!(cfg2.validate(&tables).is_err());
    }
}
