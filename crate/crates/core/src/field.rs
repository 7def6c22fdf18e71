//! Truncated Fourier fields on the thin 3-torus and the flat 2-torus, and the
//! spectral calculus used by the solver and the verification harnesses.
//!
//! A field is a dense box of coefficients over the band
//! `{|kH| <= kmax (Euclidean), |m| <= mmax}`; vertical wavenumbers are `m*n` on
//! the thin torus with layer count `n`.  Flat fields are the `mmax = 0` special
//! case with no vertical direction (all code paths are shared).
//!
//! Conventions: plain exponential basis `f(x) = sum_k c_k e^(i k.x)`; a real
//! field satisfies `c_{-k} = conj(c_k)`; the squared L2 norm of a single mode is
//! `measure * |c_k|^2` with `measure = (2*pi)^3/n` on the thin torus and
//! `(2*pi)^2` on the flat torus.

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{good_size, wrap, FftEngine};
use crate::lattice::{gamma_sign, WaveVector};
use crate::C64;

/// Integer mode label `(k1, k2, m)`.
pub type Mode3 = (i64, i64, i64);

/// Lattice on which a spectral field lives.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Domain {
    /// Thin 3-torus with layer count `n` (vertical period `2*pi/n`); band
    /// `|kH| <= kmax`, `|m| <= mmax`, vertical wavenumber `m*n`.
    Thin3D { n: u32, kmax: u32, mmax: u32 },
    /// Flat 2-torus; band `|k| <= kmax`.
    Flat2D { kmax: u32 },
}

impl Domain {
    pub fn kmax(&self) -> u32 {
        match *self {
            Domain::Thin3D { kmax, .. } => kmax,
            Domain::Flat2D { kmax } => kmax,
        }
    }

    pub fn mmax(&self) -> u32 {
        match *self {
            Domain::Thin3D { mmax, .. } => mmax,
            Domain::Flat2D { .. } => 0,
        }
    }

    /// Layer count; 0 for the flat torus (its modes have no vertical component).
    pub fn layer_n(&self) -> u32 {
        match *self {
            Domain::Thin3D { n, .. } => n,
            Domain::Flat2D { .. } => 0,
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, Domain::Flat2D { .. })
    }

    /// Volume of the underlying torus.
    pub fn measure(&self) -> f64 {
        let tau = 2.0 * std::f64::consts::PI;
        match *self {
            Domain::Thin3D { n, .. } => tau * tau * tau / n as f64,
            Domain::Flat2D { .. } => tau * tau,
        }
    }

    /// Dense box dimensions `(2*kmax+1, 2*kmax+1, 2*mmax+1)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        let k = self.kmax() as usize;
        let m = self.mmax() as usize;
        (2 * k + 1, 2 * k + 1, 2 * m + 1)
    }

    pub fn in_band(&self, mode: Mode3) -> bool {
        let (k1, k2, m) = mode;
        let kmax = self.kmax() as i64;
        k1 * k1 + k2 * k2 <= kmax * kmax && m.unsigned_abs() <= self.mmax() as u64
    }

    /// Cartesian wavenumber of a mode label.
    pub fn cartesian(&self, mode: Mode3) -> [f64; 3] {
        let (k1, k2, m) = mode;
        [k1 as f64, k2 as f64, (m * self.layer_n() as i64) as f64]
    }

    /// All in-band mode labels, in storage order (k1 outer, then k2, then m).
    pub fn modes(&self) -> Vec<Mode3> {
        let kmax = self.kmax() as i64;
        let mmax = self.mmax() as i64;
        let mut out = Vec::new();
        for k1 in -kmax..=kmax {
            for k2 in -kmax..=kmax {
                if k1 * k1 + k2 * k2 > kmax * kmax {
                    continue;
                }
                for m in -mmax..=mmax {
                    out.push((k1, k2, m));
                }
            }
        }
        out
    }

    /// True when `other` describes the same torus (bands may differ).
    pub fn same_torus(&self, other: &Domain) -> bool {
        match (self, other) {
            (Domain::Thin3D { n: a, .. }, Domain::Thin3D { n: b, .. }) => a == b,
            (Domain::Flat2D { .. }, Domain::Flat2D { .. }) => true,
            _ => false,
        }
    }
}

/// Advisory metadata tracked through constructors and structure-preserving ops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Flags {
    /// Coefficients satisfy the reality pairing `c_{-k} = conj(c_k)`.
    pub real: bool,
    /// Field is divergence-free.
    pub div_free: bool,
}

/// Dense banded spectral field with `ncomp` components.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralField {
    pub domain: Domain,
    pub flags: Flags,
    ncomp: usize,
    data: Vec<C64>,
}

impl SpectralField {
    pub fn zeros(domain: Domain, ncomp: usize) -> Self {
        let (d0, d1, d2) = domain.dims();
        SpectralField {
            domain,
            flags: Flags { real: true, div_free: true },
            ncomp,
            data: vec![Complex::new(0.0, 0.0); ncomp * d0 * d1 * d2],
        }
    }

    pub fn ncomp(&self) -> usize {
        self.ncomp
    }

    #[inline]
    pub(crate) fn idx(&self, c: usize, mode: Mode3) -> usize {
        let (d0, d1, d2) = self.domain.dims();
        let kmax = self.domain.kmax() as i64;
        let mmax = self.domain.mmax() as i64;
        let i0 = (mode.0 + kmax) as usize;
        let i1 = (mode.1 + kmax) as usize;
        let i2 = (mode.2 + mmax) as usize;
        ((c * d0 + i0) * d1 + i1) * d2 + i2
    }

    /// Coefficient at a mode; zero outside the band.
    #[inline]
    pub fn get(&self, c: usize, mode: Mode3) -> C64 {
        if self.domain.in_band(mode) {
            self.data[self.idx(c, mode)]
        } else {
            Complex::new(0.0, 0.0)
        }
    }

    /// Set a coefficient. Panics outside the band.
    #[inline]
    pub fn set(&mut self, c: usize, mode: Mode3, v: C64) {
        assert!(self.domain.in_band(mode), "mode {mode:?} outside band");
        let i = self.idx(c, mode);
        self.data[i] = v;
    }

    /// Accumulate into a coefficient if the mode is in band; returns whether the
    /// mode was kept.  Sparse operators use this to truncate to the target band.
    #[inline]
    pub fn add_to(&mut self, c: usize, mode: Mode3, v: C64) -> bool {
        if self.domain.in_band(mode) {
            let i = self.idx(c, mode);
            self.data[i] += v;
            true
        } else {
            false
        }
    }

    /// Vector value (3 components) at a mode.
    #[inline]
    pub fn vec3(&self, mode: Mode3) -> [C64; 3] {
        [self.get(0, mode), self.get(1, mode), self.get(2, mode)]
    }

    pub(crate) fn data(&self) -> &[C64] {
        &self.data
    }

    /// In-band mode labels, in storage order.
    pub fn modes(&self) -> Vec<Mode3> {
        self.domain.modes()
    }

    // ---- arithmetic ----

    pub fn scale_mut(&mut self, s: C64) {
        for v in &mut self.data {
            *v *= s;
        }
        if s.im != 0.0 {
            self.flags.real = false;
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.scale_mut(Complex::new(s, 0.0));
        out
    }

    /// `self += alpha * other` (same domain and component count required).
    pub fn axpy_mut(&mut self, alpha: f64, other: &SpectralField) {
        assert_eq!(self.domain, other.domain, "axpy domain mismatch");
        assert_eq!(self.ncomp, other.ncomp, "axpy component mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        self.flags.real &= other.flags.real;
        self.flags.div_free &= other.flags.div_free;
    }

    pub fn sub(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy_mut(-1.0, other);
        out
    }

    pub fn add(&self, other: &SpectralField) -> Self {
        let mut out = self.clone();
        out.axpy_mut(1.0, other);
        out
    }

    /// Copy coefficients into a (possibly different) band on the same torus;
    /// modes outside the intersection are zero.
    pub fn restrict_to(&self, domain: Domain) -> Result<Self> {
        if !self.domain.same_torus(&domain) {
            return Err(Error::config("restrict_to requires the same underlying torus"));
        }
        let mut out = SpectralField::zeros(domain, self.ncomp);
        out.flags = self.flags;
        for mode in out.domain.modes() {
            for c in 0..self.ncomp {
                let v = self.get(c, mode);
                if v != Complex::new(0.0, 0.0) {
                    out.set(c, mode, v);
                }
            }
        }
        Ok(out)
    }

    /// Single component as a scalar field.
    pub fn component(&self, c: usize) -> Self {
        assert!(c < self.ncomp);
        let mut out = SpectralField::zeros(self.domain, 1);
        out.flags = Flags { real: self.flags.real, div_free: false };
        for mode in self.domain.modes() {
            out.set(0, mode, self.get(c, mode));
        }
        out
    }

    /// Stack scalar/vector fields into one multi-component field.
    pub fn assemble(parts: &[&SpectralField]) -> Self {
        assert!(!parts.is_empty());
        let domain = parts[0].domain;
        let ncomp: usize = parts.iter().map(|p| p.ncomp).sum();
        let mut out = SpectralField::zeros(domain, ncomp);
        out.flags = Flags { real: parts.iter().all(|p| p.flags.real), div_free: false };
        let mut at = 0;
        for p in parts {
            assert_eq!(p.domain, domain, "assemble domain mismatch");
            for mode in domain.modes() {
                for c in 0..p.ncomp {
                    out.set(at + c, mode, p.get(c, mode));
                }
            }
            at += p.ncomp;
        }
        out
    }

    // ---- reality / mean ----

    /// Project onto the real subspace: `c_k <- (c_k + conj(c_{-k}))/2`.
    pub fn symmetrize_reality(&mut self) {
        for mode in self.domain.modes() {
            let neg = (-mode.0, -mode.1, -mode.2);
            if mode > neg {
                continue;
            }
            for c in 0..self.ncomp {
                let a = self.get(c, mode);
                let b = self.get(c, neg);
                let half = 0.5 * (a + b.conj());
                self.set(c, mode, half);
                if neg != mode {
                    self.set(c, neg, half.conj());
                } else {
                    self.set(c, mode, Complex::new(half.re, 0.0));
                }
            }
        }
        self.flags.real = true;
    }

    /// Largest violation of the reality pairing, `max_k |c_k - conj(c_{-k})|`.
    pub fn reality_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for mode in self.domain.modes() {
            let neg = (-mode.0, -mode.1, -mode.2);
            for c in 0..self.ncomp {
                let d = (self.get(c, mode) - self.get(c, neg).conj()).norm();
                worst = worst.max(d);
            }
        }
        worst
    }

    /// Mean (zero-mode) coefficient of a component.
    pub fn mean_coeff(&self, c: usize) -> C64 {
        self.get(c, (0, 0, 0))
    }

    pub fn remove_mean(&mut self) {
        for c in 0..self.ncomp {
            self.set(c, (0, 0, 0), Complex::new(0.0, 0.0));
        }
    }

    // ---- norms ----

    /// L2 norm over the underlying torus.
    pub fn norm_l2(&self) -> f64 {
        let sum: f64 = self.data.iter().map(|v| v.norm_sqr()).sum();
        (self.domain.measure() * sum).sqrt()
    }

    /// L2 inner product `<self, other>` (conjugate-linear in `other`).
    pub fn inner(&self, other: &SpectralField) -> C64 {
        assert_eq!(self.domain, other.domain);
        assert_eq!(self.ncomp, other.ncomp);
        let mut acc = Complex::new(0.0, 0.0);
        for (a, b) in self.data.iter().zip(&other.data) {
            acc += a * b.conj();
        }
        self.domain.measure() * acc
    }

    /// Relative divergence residual of a 3-component field (0 for exactly
    /// solenoidal data, of order 1 for generic data).
    pub fn div_residual(&self) -> f64 {
        assert_eq!(self.ncomp, 3, "div_residual needs a vector field");
        let mut num = 0.0;
        let mut den = 0.0;
        for mode in self.domain.modes() {
            let kc = self.domain.cartesian(mode);
            let v = self.vec3(mode);
            let kdotv = kc[0] * v[0] + kc[1] * v[1] + kc[2] * v[2];
            let k2 = kc[0] * kc[0] + kc[1] * kc[1] + kc[2] * kc[2];
            num += kdotv.norm_sqr();
            den += k2 * (v[0].norm_sqr() + v[1].norm_sqr() + v[2].norm_sqr());
        }
        if den == 0.0 {
            0.0
        } else {
            (num / den).sqrt()
        }
    }
}

/// Sobolev `H^s` norm on the flat 2-torus (all components summed).
///
/// Uses the inhomogeneous convention: the zero mode carries weight 1.  For
/// `s < 0` the input must have zero mean (the negative-order dual norm used for
/// convergence errors is only applied to mean-free differences); nonzero mean is
/// rejected.
pub fn sobolev_norm(f: &SpectralField, s: f64) -> Result<f64> {
    if !f.domain.is_flat() {
        return Err(Error::config("sobolev_norm is defined for flat 2D fields"));
    }
    let mut sum = 0.0;
    let mut mean_sq = 0.0;
    for mode in f.domain.modes() {
        let k2 = (mode.0 * mode.0 + mode.1 * mode.1) as f64;
        for c in 0..f.ncomp() {
            let a = f.get(c, mode).norm_sqr();
            if k2 == 0.0 {
                mean_sq += a;
            } else {
                sum += k2.powf(s) * a;
            }
        }
    }
    let measure = f.domain.measure();
    if s < 0.0 {
        let scale = (measure * (sum + mean_sq)).sqrt();
        if mean_sq.sqrt() > 1e-12 * (1.0 + scale) {
            return Err(Error::config(
                "sobolev_norm with s < 0 requires a zero-mean field",
            ));
        }
        Ok((measure * sum).sqrt())
    } else {
        Ok((measure * (sum + mean_sq)).sqrt())
    }
}

/// Vertical-mean projection: keep only `m = 0` modes (identity on flat fields).
pub fn mean_m(f: &SpectralField) -> SpectralField {
    let mut out = SpectralField::zeros(f.domain, f.ncomp());
    out.flags = f.flags;
    for mode in f.domain.modes() {
        if mode.2 == 0 {
            for c in 0..f.ncomp() {
                out.set(c, mode, f.get(c, mode));
            }
        }
    }
    out
}

/// Fluctuation projection: remove the vertical mean (zero on flat fields).
pub fn fluct_n(f: &SpectralField) -> SpectralField {
    let mut out = f.clone();
    for mode in f.domain.modes() {
        if mode.2 == 0 {
            for c in 0..f.ncomp() {
                out.set(c, mode, Complex::new(0.0, 0.0));
            }
        }
    }
    out
}

/// Restrict the `m = 0` plane of a thin field to the flat 2-torus (coefficients
/// are unchanged; only the underlying measure changes).
pub fn to_flat(f: &SpectralField) -> SpectralField {
    let kmax = f.domain.kmax();
    let mut out = SpectralField::zeros(Domain::Flat2D { kmax }, f.ncomp());
    out.flags = f.flags;
    for mode in out.domain.modes() {
        for c in 0..f.ncomp() {
            out.set(c, mode, f.get(c, mode));
        }
    }
    out
}

/// Embed a flat field into the `m = 0` plane of a thin domain.
pub fn embed_flat(f: &SpectralField, domain: Domain) -> Result<SpectralField> {
    if f.domain.is_flat() == domain.is_flat() {
        return Err(Error::config("embed_flat maps a flat field into a thin domain"));
    }
    if domain.kmax() < f.domain.kmax() {
        return Err(Error::config("embed_flat target band too small"));
    }
    let mut out = SpectralField::zeros(domain, f.ncomp());
    out.flags = f.flags;
    for mode in f.domain.modes() {
        for c in 0..f.ncomp() {
            out.set(c, (mode.0, mode.1, 0), f.get(c, mode));
        }
    }
    Ok(out)
}

// ---- differential operators ----

/// Partial derivative along axis `l` (multiplier `i*k_l`).
pub fn partial(f: &SpectralField, l: usize) -> SpectralField {
    assert!(l < 3);
    let mut out = SpectralField::zeros(f.domain, f.ncomp());
    out.flags = Flags { real: f.flags.real, div_free: false };
    for mode in f.domain.modes() {
        let kc = f.domain.cartesian(mode);
        let mul = Complex::new(0.0, kc[l]);
        for c in 0..f.ncomp() {
            out.set(c, mode, mul * f.get(c, mode));
        }
    }
    out
}

/// Gradient of a scalar field (3 components; the vertical one vanishes on flat
/// fields).
pub fn grad(f: &SpectralField) -> SpectralField {
    assert_eq!(f.ncomp(), 1, "grad expects a scalar field");
    let mut out = SpectralField::zeros(f.domain, 3);
    out.flags = Flags { real: f.flags.real, div_free: false };
    for mode in f.domain.modes() {
        let kc = f.domain.cartesian(mode);
        let v = f.get(0, mode);
        for l in 0..3 {
            out.set(l, mode, Complex::new(0.0, kc[l]) * v);
        }
    }
    out
}

/// Divergence of a vector field.
pub fn divergence(f: &SpectralField) -> SpectralField {
    assert_eq!(f.ncomp(), 3, "divergence expects a vector field");
    let mut out = SpectralField::zeros(f.domain, 1);
    out.flags = Flags { real: f.flags.real, div_free: false };
    for mode in f.domain.modes() {
        let kc = f.domain.cartesian(mode);
        let v = f.vec3(mode);
        out.set(0, mode, Complex::new(0.0, 1.0) * (kc[0] * v[0] + kc[1] * v[1] + kc[2] * v[2]));
    }
    out
}

/// Curl of a vector field, `i k x v`.
pub fn curl(f: &SpectralField) -> SpectralField {
    assert_eq!(f.ncomp(), 3, "curl expects a vector field");
    let mut out = SpectralField::zeros(f.domain, 3);
    out.flags = Flags { real: f.flags.real, div_free: true };
    let i = Complex::new(0.0, 1.0);
    for mode in f.domain.modes() {
        let kc = f.domain.cartesian(mode);
        let v = f.vec3(mode);
        out.set(0, mode, i * (kc[1] * v[2] - kc[2] * v[1]));
        out.set(1, mode, i * (kc[2] * v[0] - kc[0] * v[2]));
        out.set(2, mode, i * (kc[0] * v[1] - kc[1] * v[0]));
    }
    out
}

/// Fractional Laplacian `(-Delta)^alpha` (multiplier `|k|^(2*alpha)`).
///
/// For `alpha <= 0` the zero mode must vanish; it is rejected otherwise.
pub fn laplacian_power(f: &SpectralField, alpha: f64) -> Result<SpectralField> {
    let mut out = SpectralField::zeros(f.domain, f.ncomp());
    out.flags = f.flags;
    for mode in f.domain.modes() {
        let kc = f.domain.cartesian(mode);
        let k2 = kc[0] * kc[0] + kc[1] * kc[1] + kc[2] * kc[2];
        for c in 0..f.ncomp() {
            let v = f.get(c, mode);
            if k2 == 0.0 {
                if alpha <= 0.0 && v.norm() > 1e-14 * (1.0 + f.norm_l2()) {
                    return Err(Error::config(
                        "laplacian_power with alpha <= 0 requires zero mean",
                    ));
                }
                if alpha > 0.0 {
                    out.set(c, mode, Complex::new(0.0, 0.0));
                }
                continue;
            }
            out.set(c, mode, k2.powf(alpha) * v);
        }
    }
    Ok(out)
}

/// Leray projection onto divergence-free fields, `v - k (k.v)/|k|^2` modewise.
pub fn leray_project(f: &SpectralField) -> SpectralField {
    assert_eq!(f.ncomp(), 3, "leray_project expects a vector field");
    let mut out = SpectralField::zeros(f.domain, 3);
    out.flags = Flags { real: f.flags.real, div_free: true };
    for mode in f.domain.modes() {
        let kc = f.domain.cartesian(mode);
        let k2 = kc[0] * kc[0] + kc[1] * kc[1] + kc[2] * kc[2];
        let v = f.vec3(mode);
        if k2 == 0.0 {
            for c in 0..3 {
                out.set(c, mode, v[c]);
            }
            continue;
        }
        let kdotv = (kc[0] * v[0] + kc[1] * v[1] + kc[2] * v[2]) / k2;
        for c in 0..3 {
            out.set(c, mode, v[c] - kc[c] * kdotv);
        }
    }
    out
}

/// Biot–Savart: the divergence-free potential `A = (-Delta)^(-1) curl v` with
/// `curl A = v` for zero-mean solenoidal `v`.  Rejects fields that are not
/// solenoidal (relative residual above 1e-8) or have a nonzero mean.
pub fn biot_savart(f: &SpectralField) -> Result<SpectralField> {
    if f.ncomp() != 3 {
        return Err(Error::config("biot_savart expects a vector field"));
    }
    let res = f.div_residual();
    if res > 1e-8 {
        return Err(Error::config(format!(
            "biot_savart requires a solenoidal field (relative residual {res:.2e})"
        )));
    }
    let scale = 1.0 + f.norm_l2();
    for c in 0..3 {
        if f.mean_coeff(c).norm() > 1e-12 * scale {
            return Err(Error::config("biot_savart requires a zero-mean field"));
        }
    }
    let mut out = SpectralField::zeros(f.domain, 3);
    out.flags = Flags { real: f.flags.real, div_free: true };
    let i = Complex::new(0.0, 1.0);
    for mode in f.domain.modes() {
        let kc = f.domain.cartesian(mode);
        let k2 = kc[0] * kc[0] + kc[1] * kc[1] + kc[2] * kc[2];
        if k2 == 0.0 {
            continue;
        }
        let v = f.vec3(mode);
        out.set(0, mode, i * (kc[1] * v[2] - kc[2] * v[1]) / k2);
        out.set(1, mode, i * (kc[2] * v[0] - kc[0] * v[2]) / k2);
        out.set(2, mode, i * (kc[0] * v[1] - kc[1] * v[0]) / k2);
    }
    Ok(out)
}

/// Third Biot–Savart component on the flat torus from the horizontal components
/// of a 2D field: `A3 = (-Delta)^(-1) (d1 v2 - d2 v1)`, zero at the zero mode.
pub fn flat_a3_potential(f: &SpectralField) -> Result<SpectralField> {
    if !f.domain.is_flat() || f.ncomp() < 2 {
        return Err(Error::config("flat_a3_potential expects a flat vector field"));
    }
    let mut out = SpectralField::zeros(f.domain, 1);
    out.flags = Flags { real: f.flags.real, div_free: false };
    let i = Complex::new(0.0, 1.0);
    for mode in f.domain.modes() {
        let k2 = (mode.0 * mode.0 + mode.1 * mode.1) as f64;
        if k2 == 0.0 {
            continue;
        }
        let v1 = f.get(0, mode);
        let v2 = f.get(1, mode);
        out.set(0, mode, i * (mode.0 as f64 * v2 - mode.1 as f64 * v1) / k2);
    }
    Ok(out)
}

/// Horizontal field `-perp_grad(a) = (d2 a, -d1 a, 0)` generated by a flat
/// scalar potential, packaged as a 3-component (divergence-free) field.
pub fn flat_bh_from_a3(a: &SpectralField) -> Result<SpectralField> {
    if !a.domain.is_flat() || a.ncomp() != 1 {
        return Err(Error::config("flat_bh_from_a3 expects a flat scalar field"));
    }
    let mut out = SpectralField::zeros(a.domain, 3);
    out.flags = Flags { real: a.flags.real, div_free: true };
    let i = Complex::new(0.0, 1.0);
    for mode in a.domain.modes() {
        let v = a.get(0, mode);
        out.set(0, mode, i * mode.1 as f64 * v);
        out.set(1, mode, -i * mode.0 as f64 * v);
    }
    Ok(out)
}

/// Perp gradient of a flat scalar: `(-d2 a, d1 a, 0)`.
pub fn perp_grad(a: &SpectralField) -> Result<SpectralField> {
    let f = flat_bh_from_a3(a)?;
    Ok(f.scaled(-1.0))
}

// ---- dealiased products ----

/// Pointwise combination of several fields through a dealiased physical grid.
///
/// All inputs must live on the same torus.  The grid is sized so that every
/// output-band coefficient of the pointwise product is alias-free:
/// `g >= out_extent + sum(input extents) + 1` per axis (and large enough for
/// each input band), rounded up to a 5-smooth size.  `op` receives the values
/// of all input components (concatenated in argument order) at one grid point
/// and writes the output components.
pub fn dealiased_combine<F>(
    engine: &mut FftEngine,
    inputs: &[&SpectralField],
    out_domain: Domain,
    out_ncomp: usize,
    mut op: F,
) -> SpectralField
where
    F: FnMut(&[C64], &mut [C64]),
{
    assert!(!inputs.is_empty());
    for f in inputs {
        assert!(
            f.domain.same_torus(&out_domain),
            "dealiased_combine inputs must share the output torus"
        );
    }

    let sum_k: usize = inputs.iter().map(|f| f.domain.kmax() as usize).sum();
    let sum_m: usize = inputs.iter().map(|f| f.domain.mmax() as usize).sum();
    let max_k = inputs.iter().map(|f| f.domain.kmax() as usize).max().unwrap();
    let max_m = inputs.iter().map(|f| f.domain.mmax() as usize).max().unwrap();
    let gh = good_size((out_domain.kmax() as usize + sum_k + 1).max(2 * max_k + 1));
    let gv = good_size((out_domain.mmax() as usize + sum_m + 1).max(2 * max_m + 1));
    let dims = (gh, gh, gv);
    let npts = gh * gh * gv;

    // Scatter every input component onto its own grid and synthesise.
    let total: usize = inputs.iter().map(|f| f.ncomp()).sum();
    let mut grids: Vec<Vec<C64>> = Vec::with_capacity(total);
    for f in inputs {
        for c in 0..f.ncomp() {
            let mut g = vec![Complex::new(0.0, 0.0); npts];
            for mode in f.domain.modes() {
                let v = f.get(c, mode);
                if v != Complex::new(0.0, 0.0) {
                    g[(wrap(mode.0, gh) * gh + wrap(mode.1, gh)) * gv + wrap(mode.2, gv)] = v;
                }
            }
            engine.fft3(&mut g, dims, false);
            grids.push(g);
        }
    }

    // Pointwise op.
    let mut outs: Vec<Vec<C64>> = (0..out_ncomp)
        .map(|_| vec![Complex::new(0.0, 0.0); npts])
        .collect();
    let mut vals = vec![Complex::new(0.0, 0.0); total];
    let mut res = vec![Complex::new(0.0, 0.0); out_ncomp];
    for p in 0..npts {
        for (j, g) in grids.iter().enumerate() {
            vals[j] = g[p];
        }
        res.iter_mut().for_each(|r| *r = Complex::new(0.0, 0.0));
        op(&vals, &mut res);
        for (c, r) in res.iter().enumerate() {
            outs[c][p] = *r;
        }
    }

    // Analyse and gather the output band.
    let mut out = SpectralField::zeros(out_domain, out_ncomp);
    out.flags = Flags { real: inputs.iter().all(|f| f.flags.real), div_free: false };
    for (c, g) in outs.iter_mut().enumerate() {
        engine.fft3(g, dims, true);
        for mode in out_domain.modes() {
            let v = g[(wrap(mode.0, gh) * gh + wrap(mode.1, gh)) * gv + wrap(mode.2, gv)];
            out.set(c, mode, v);
        }
    }
    out
}

/// Lie derivative (vector-field commutator) `L_X Y = (X.grad)Y - (Y.grad)X`,
/// truncated to the band of `Y`.
///
/// When both arguments are solenoidal this uses the curl form
/// `L_X Y = -curl(X x Y)` (6 synthesis + 3 analysis transforms); otherwise it
/// falls back to the general form with explicit gradients.
pub fn lie_derivative(
    engine: &mut FftEngine,
    x: &SpectralField,
    y: &SpectralField,
) -> Result<SpectralField> {
    if x.ncomp() != 3 || y.ncomp() != 3 {
        return Err(Error::config("lie_derivative expects vector fields"));
    }
    if !x.domain.same_torus(&y.domain) {
        return Err(Error::config("lie_derivative arguments live on different tori"));
    }
    let solenoidal = x.div_residual() < 1e-8 && y.div_residual() < 1e-8;
    if solenoidal {
        let cross = dealiased_combine(engine, &[x, y], y.domain, 3, |v, out| {
            out[0] = v[1] * v[5] - v[2] * v[4];
            out[1] = v[2] * v[3] - v[0] * v[5];
            out[2] = v[0] * v[4] - v[1] * v[3];
        });
        let mut out = curl(&cross);
        out.scale_mut(Complex::new(-1.0, 0.0));
        out.flags.div_free = true;
        out.flags.real = x.flags.real && y.flags.real;
        Ok(out)
    } else {
        let dx: Vec<SpectralField> = (0..3).map(|l| partial(x, l)).collect();
        let dy: Vec<SpectralField> = (0..3).map(|l| partial(y, l)).collect();
        let ins: Vec<&SpectralField> =
            [x, y].into_iter().chain(dy.iter()).chain(dx.iter()).collect();
        let out = dealiased_combine(engine, &ins, y.domain, 3, |v, out| {
            // v = [X(3), Y(3), dY/dx1(3), dY/dx2(3), dY/dx3(3), dX/dx1.., dX/dx3]
            for c in 0..3 {
                let mut acc = Complex::new(0.0, 0.0);
                for l in 0..3 {
                    acc += v[l] * v[6 + 3 * l + c] - v[3 + l] * v[15 + 3 * l + c];
                }
                out[c] = acc;
            }
        });
        Ok(out)
    }
}

// ---- sparse (exact-band) bilinear operators for verification ----

/// Sparse spectral vector field: list of `(mode, coefficients)`.
pub type SparseVec = Vec<(Mode3, [C64; 3])>;

/// Extract the nonzero coefficients of a vector field.
pub fn to_sparse(f: &SpectralField) -> SparseVec {
    assert_eq!(f.ncomp(), 3);
    let mut out = Vec::new();
    for mode in f.domain.modes() {
        let v = f.vec3(mode);
        if v.iter().any(|c| c.norm_sqr() > 0.0) {
            out.push((mode, v));
        }
    }
    out
}

fn pair_band(x: &SpectralField, y: &SpectralField) -> Domain {
    assert!(x.domain.same_torus(&y.domain));
    let kmax = x.domain.kmax() + y.domain.kmax();
    let mmax = x.domain.mmax() + y.domain.mmax();
    match x.domain {
        Domain::Thin3D { n, .. } => Domain::Thin3D { n, kmax, mmax },
        Domain::Flat2D { .. } => Domain::Flat2D { kmax },
    }
}

/// Exact-band Lie derivative by direct convolution (no truncation, no FFT);
/// intended for small verification fields.
pub fn lie_sparse(x: &SpectralField, y: &SpectralField) -> SpectralField {
    let out_domain = pair_band(x, y);
    let n = out_domain.layer_n() as i64;
    let mut out = SpectralField::zeros(out_domain, 3);
    out.flags = Flags { real: x.flags.real && y.flags.real, div_free: false };
    let i = Complex::new(0.0, 1.0);
    for (p, xv) in to_sparse(x) {
        let pc = [p.0 as f64, p.1 as f64, (p.2 * n) as f64];
        for (q, yv) in to_sparse(y) {
            let qc = [q.0 as f64, q.1 as f64, (q.2 * n) as f64];
            let t = (p.0 + q.0, p.1 + q.1, p.2 + q.2);
            let xdotq = xv[0] * qc[0] + xv[1] * qc[1] + xv[2] * qc[2];
            let ydotp = yv[0] * pc[0] + yv[1] * pc[1] + yv[2] * pc[2];
            for c in 0..3 {
                out.add_to(c, t, i * (xdotq * yv[c] - ydotp * xv[c]));
            }
        }
    }
    out
}

/// Exact-band advection `(X.grad)Y` by direct convolution.
pub fn advect_sparse(x: &SpectralField, y: &SpectralField) -> SpectralField {
    let out_domain = pair_band(x, y);
    let n = out_domain.layer_n() as i64;
    let mut out = SpectralField::zeros(out_domain, 3);
    out.flags = Flags { real: x.flags.real && y.flags.real, div_free: false };
    let i = Complex::new(0.0, 1.0);
    for (p, xv) in to_sparse(x) {
        for (q, yv) in to_sparse(y) {
            let qc = [q.0 as f64, q.1 as f64, (q.2 * n) as f64];
            let t = (p.0 + q.0, p.1 + q.1, p.2 + q.2);
            let xdotq = i * (xv[0] * qc[0] + xv[1] * qc[1] + xv[2] * qc[2]);
            for c in 0..3 {
                out.add_to(c, t, xdotq * yv[c]);
            }
        }
    }
    out
}

// ---- random test fields ----

/// Deterministic random real field with independent complex-Gaussian modes on
/// the sub-band `|kH| <= kband`, `|m| <= mband` (zero-mean).  Used by the
/// verification harnesses.
pub fn random_real_field(domain: Domain, ncomp: usize, kband: u32, mband: u32, seed: u64) -> SpectralField {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = SpectralField::zeros(domain, ncomp);
    let kb = kband.min(domain.kmax()) as i64;
    let mb = mband.min(domain.mmax()) as i64;
    for k1 in -kb..=kb {
        for k2 in -kb..=kb {
            if k1 * k1 + k2 * k2 > kb * kb {
                continue;
            }
            for m in -mb..=mb {
                if k1 == 0 && k2 == 0 && m == 0 {
                    continue;
                }
                // Draw on the positive half, mirror by conjugation.
                if gamma_sign(WaveVector::new(k1, k2, m, 1)) < 0 {
                    continue;
                }
                for c in 0..ncomp {
                    let re = rng.gen::<f64>() - 0.5;
                    let im = rng.gen::<f64>() - 0.5;
                    let v = Complex::new(re, im);
                    out.set(c, (k1, k2, m), v);
                    out.set(c, (-k1, -k2, -m), v.conj());
                }
            }
        }
    }
    out.flags = Flags { real: true, div_free: false };
    out
}

/// Deterministic random zero-mean divergence-free real vector field.
pub fn random_divfree_field(domain: Domain, kband: u32, mband: u32, seed: u64) -> SpectralField {
    let raw = random_real_field(domain, 3, kband, mband, seed);
    let mut out = leray_project(&raw);
    out.flags = Flags { real: true, div_free: true };
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const THIN: Domain = Domain::Thin3D { n: 2, kmax: 5, mmax: 2 };
    const FLAT: Domain = Domain::Flat2D { kmax: 6 };

    #[test]
    fn mode_norm_matches_measure() {
        let mut f = SpectralField::zeros(THIN, 1);
        f.set(0, (1, 2, -1), Complex::new(0.6, -0.8));
        let tau = 2.0 * std::f64::consts::PI;
        assert_relative_eq!(f.norm_l2(), (tau * tau * tau / 2.0).sqrt(), max_relative = 1e-14);
    }

    #[test]
    fn leray_is_idempotent_projection() {
        let f = random_real_field(THIN, 3, 3, 2, 7);
        let p = leray_project(&f);
        assert!(p.div_residual() < 1e-14);
        let pp = leray_project(&p);
        assert!(pp.sub(&p).norm_l2() < 1e-13 * (1.0 + p.norm_l2()));
        // Self-adjoint: <Pf, g> == <f, Pg>.
        let g = random_real_field(THIN, 3, 3, 2, 8);
        let lhs = p.inner(&g);
        let rhs = f.inner(&leray_project(&g));
        assert!((lhs - rhs).norm() < 1e-11 * (1.0 + lhs.norm()));
    }

    #[test]
    fn curl_of_biot_savart_recovers_field() {
        let v = random_divfree_field(THIN, 3, 2, 11);
        let a = biot_savart(&v).unwrap();
        assert!(a.div_residual() < 1e-13);
        let back = curl(&a);
        assert!(back.sub(&v).norm_l2() < 1e-12 * (1.0 + v.norm_l2()));
    }

    #[test]
    fn biot_savart_rejects_non_solenoidal() {
        let f = random_real_field(THIN, 3, 3, 1, 3);
        assert!(biot_savart(&f).is_err());
    }

    #[test]
    fn flat_split_matches_biot_savart() {
        // For a zero-mean solenoidal flat field, the 2D split reproduces the
        // third potential component, and bh_from_a3 inverts it.
        let a3 = random_real_field(FLAT, 1, 4, 0, 21);
        let mut a3 = a3;
        a3.remove_mean();
        let bh = flat_bh_from_a3(&a3).unwrap();
        let rec = flat_a3_potential(&bh).unwrap();
        assert!(rec.sub(&a3).norm_l2() < 1e-12 * (1.0 + a3.norm_l2()));
    }

    #[test]
    fn mean_fluct_split_is_orthogonal() {
        let f = random_real_field(THIN, 3, 4, 2, 5);
        let m = mean_m(&f);
        let n = fluct_n(&f);
        assert!(m.add(&n).sub(&f).norm_l2() < 1e-13 * (1.0 + f.norm_l2()));
        let ip = m.inner(&n);
        assert!(ip.norm() < 1e-12 * (1.0 + f.norm_l2()));
        // Parseval: |f|^2 = |m|^2 + |n|^2.
        let lhs = f.norm_l2().powi(2);
        let rhs = m.norm_l2().powi(2) + n.norm_l2().powi(2);
        assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
    }

    #[test]
    fn poincare_inequality_for_fluctuations() {
        // |N_eps v| <= eps * |d3 N_eps v| with eps = 1/n.
        let f = random_real_field(THIN, 1, 3, 2, 9);
        let n = fluct_n(&f);
        let d3 = partial(&n, 2);
        let eps = 1.0 / THIN.layer_n() as f64;
        assert!(n.norm_l2() <= eps * d3.norm_l2() * (1.0 + 1e-12));
    }

    #[test]
    fn sobolev_norm_matches_l2_at_zero_order() {
        let mut f = random_real_field(FLAT, 1, 4, 0, 13);
        f.remove_mean();
        assert_relative_eq!(
            sobolev_norm(&f, 0.0).unwrap(),
            f.norm_l2(),
            max_relative = 1e-13
        );
        // Negative order requires zero mean.
        let mut g = f.clone();
        g.set(0, (0, 0, 0), Complex::new(1.0, 0.0));
        assert!(sobolev_norm(&g, -0.5).is_err());
        // Norms are ordered: s' <= s implies |f|_{s'} <= |f|_s for zero-mean f
        // supported on |k| >= 1.
        let lo = sobolev_norm(&f, -0.5).unwrap();
        let hi = sobolev_norm(&f, 0.25).unwrap();
        assert!(lo <= hi * (1.0 + 1e-12));
    }

    #[test]
    fn dealiased_product_matches_direct_convolution() {
        // Scalar product of two small random fields, compared against the
        // exact convolution.
        let f = random_real_field(THIN, 1, 2, 1, 31);
        let g = random_real_field(THIN, 1, 2, 1, 32);
        let out_domain = Domain::Thin3D { n: 2, kmax: 4, mmax: 2 };
        let mut engine = FftEngine::new();
        let prod = dealiased_combine(&mut engine, &[&f, &g], out_domain, 1, |v, out| {
            out[0] = v[0] * v[1];
        });
        for mode in out_domain.modes() {
            let mut acc = Complex::new(0.0, 0.0);
            for p in f.modes() {
                let q = (mode.0 - p.0, mode.1 - p.1, mode.2 - p.2);
                acc += f.get(0, p) * g.get(0, q);
            }
            assert!(
                (prod.get(0, mode) - acc).norm() < 1e-12,
                "aliasing error at {mode:?}"
            );
        }
    }

    #[test]
    fn lie_fft_matches_lie_sparse() {
        let x = random_divfree_field(Domain::Thin3D { n: 2, kmax: 3, mmax: 1 }, 2, 1, 41);
        let y = random_divfree_field(Domain::Thin3D { n: 2, kmax: 3, mmax: 1 }, 2, 1, 42);
        let mut engine = FftEngine::new();
        let dense = lie_derivative(&mut engine, &x, &y).unwrap();
        let sparse = lie_sparse(&x, &y).restrict_to(y.domain).unwrap();
        assert!(dense.sub(&sparse).norm_l2() < 1e-11 * (1.0 + sparse.norm_l2()));
        // The commutator of solenoidal fields is solenoidal.
        assert!(dense.div_residual() < 1e-10);
    }

    #[test]
    fn lie_general_path_matches_sparse_on_non_solenoidal_fields() {
        let x = random_real_field(Domain::Thin3D { n: 2, kmax: 3, mmax: 1 }, 3, 2, 1, 51);
        let y = random_real_field(Domain::Thin3D { n: 2, kmax: 3, mmax: 1 }, 3, 2, 1, 52);
        let mut engine = FftEngine::new();
        let dense = lie_derivative(&mut engine, &x, &y).unwrap();
        let sparse = lie_sparse(&x, &y).restrict_to(y.domain).unwrap();
        assert!(dense.sub(&sparse).norm_l2() < 1e-11 * (1.0 + sparse.norm_l2()));
    }

    #[test]
    fn advect_sparse_plus_transpose_is_lie() {
        let x = random_real_field(THIN, 3, 2, 1, 61);
        let y = random_real_field(THIN, 3, 2, 1, 62);
        let lie = lie_sparse(&x, &y);
        let a = advect_sparse(&x, &y);
        let b = advect_sparse(&y, &x);
        assert!(a.sub(&b).sub(&lie).norm_l2() < 1e-12 * (1.0 + lie.norm_l2()));
    }

    #[test]
    fn restrict_and_embed_roundtrip() {
        let f = random_real_field(THIN, 3, 3, 0, 71);
        let flat = to_flat(&mean_m(&f));
        let back = embed_flat(&flat, THIN).unwrap();
        assert!(back.sub(&mean_m(&f)).norm_l2() < 1e-14 * (1.0 + f.norm_l2()));
    }

    #[test]
    fn reality_symmetrization() {
        let mut f = SpectralField::zeros(FLAT, 1);
        f.set(0, (1, 2, 0), Complex::new(1.0, 2.0));
        f.set(0, (-1, -2, 0), Complex::new(0.0, 0.0));
        assert!(f.reality_residual() > 1.0);
        f.symmetrize_reality();
        assert!(f.reality_residual() < 1e-15);
        assert_relative_eq!(f.get(0, (1, 2, 0)).re, 0.5, max_relative = 1e-15);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]

        #[test]
        fn vector_calculus_identities_hold(
            n in 1u32..=3, kmax in 2u32..=5, mmax in 1u32..=2, seed in 0u64..1 << 40
        ) {
            let domain = Domain::Thin3D { n, kmax, mmax };
            // curl grad = 0 and div curl = 0, modewise exact.
            let s = random_real_field(domain, 1, kmax, mmax, seed);
            let cg = curl(&grad(&s)).norm_l2();
            proptest::prop_assert!(cg < 1e-12 * (1.0 + s.norm_l2()), "curl grad = {cg}");
            let v = random_real_field(domain, 3, kmax, mmax, seed ^ 0x9e37);
            let dc = divergence(&curl(&v)).norm_l2();
            proptest::prop_assert!(dc < 1e-12 * (1.0 + v.norm_l2()), "div curl = {dc}");
            // Leray projection is an orthogonal idempotent onto solenoidal fields.
            let p = leray_project(&v);
            proptest::prop_assert!(p.div_residual() < 1e-13);
            proptest::prop_assert!(leray_project(&p).sub(&p).norm_l2() < 1e-12 * (1.0 + p.norm_l2()));
            let residual = v.sub(&p);
            proptest::prop_assert!(p.inner(&residual).norm() < 1e-11 * (1.0 + v.norm_l2().powi(2)));
            // Random real-symmetric data stays real under all of the above.
            proptest::prop_assert!(p.reality_residual() < 1e-13);
        }

        #[test]
        fn parseval_under_assembly_roundtrip(
            kmax in 2u32..=5, seed in 0u64..1 << 40
        ) {
            // Physical-space energy agrees with the mode-sum norm (Parseval for
            // the unnormalised synthesis convention divided by the grid count).
            let domain = Domain::Flat2D { kmax };
            let f = random_real_field(domain, 1, kmax, 0, seed);
            let mut engine = FftEngine::new();
            let prod = dealiased_combine(&mut engine, &[&f, &f], domain, 1, |v, out| {
                out[0] = v[0] * v[1];
            });
            let measure = domain.measure();
            let energy = (prod.mean_coeff(0) * measure).re;
            proptest::prop_assert!(
                (energy - f.norm_l2().powi(2)).abs() < 1e-10 * (1.0 + f.norm_l2().powi(2))
            );
        }
    }
}
