//! Wavenumber lattice of the thin torus, mode frames, and zeta sums.
//!
//! For a layer count `n` (the torus has vertical period `2*pi/n`) the admissible
//! wavenumbers are `k = (k1, k2, m*n)` with integer `k1, k2, m`.  The noise lives
//! on the closed Euclidean annulus `n <= |kH| <= 2n` in the horizontal plane,
//! tensorised with the vertical modes `|m| <= jmax`; the vertical truncation is a
//! simulation knob whose tail is controlled by the vertical spectral decay.
//!
//! `gamma_sign` splits the nonzero lattice into antisymmetric halves so that each
//! conjugate pair `{k, -k}` has a canonical representative; frames and complex
//! Brownian drivers are defined on the positive half and mirrored.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A lattice wavenumber `(k1, k2, m*n)` on the thin torus with layer count `n`.
///
/// The vertical component is stored as the integer index `m`; the physical
/// vertical wavenumber is `m*n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct WaveVector {
    pub k1: i64,
    pub k2: i64,
    /// Vertical index; physical vertical wavenumber is `m * n`.
    pub m: i64,
    /// Layer count of the ambient thin torus.
    pub n: u32,
}

impl WaveVector {
    pub fn new(k1: i64, k2: i64, m: i64, n: u32) -> Self {
        WaveVector { k1, k2, m, n }
    }

    /// Physical vertical wavenumber `k3 = m*n`.
    pub fn k3(&self) -> f64 {
        (self.m * self.n as i64) as f64
    }

    /// Squared horizontal norm `k1^2 + k2^2` (exact integer).
    pub fn kh2(&self) -> i64 {
        self.k1 * self.k1 + self.k2 * self.k2
    }

    /// Horizontal norm `|kH|`.
    pub fn kh_norm(&self) -> f64 {
        (self.kh2() as f64).sqrt()
    }

    /// Squared Euclidean norm `|k|^2 = |kH|^2 + (m*n)^2`.
    pub fn norm2(&self) -> f64 {
        let k3 = self.m * self.n as i64;
        (self.kh2() + k3 * k3) as f64
    }

    /// Euclidean norm `|k|`.
    pub fn norm(&self) -> f64 {
        self.norm2().sqrt()
    }

    /// Cartesian components `(k1, k2, m*n)` as floats.
    pub fn cartesian(&self) -> [f64; 3] {
        [self.k1 as f64, self.k2 as f64, self.k3()]
    }

    pub fn is_zero(&self) -> bool {
        self.k1 == 0 && self.k2 == 0 && self.m == 0
    }

    /// True when the mode is purely horizontal (`k3 = 0`).
    pub fn is_horizontal(&self) -> bool {
        self.m == 0
    }
}

impl std::ops::Neg for WaveVector {
    type Output = WaveVector;
    fn neg(self) -> WaveVector {
        WaveVector { k1: -self.k1, k2: -self.k2, m: -self.m, n: self.n }
    }
}

/// Sign partition of the nonzero lattice: `+1` on the positive half, `-1` on its
/// mirror image, so that `gamma_sign(-k) = -gamma_sign(k)`.
///
/// The positive half is `{m > 0} ∪ {m = 0, k2 > 0} ∪ {m = 0, k2 = 0, k1 > 0}`.
///
/// # Panics
/// Panics on the zero mode, which belongs to neither half.
pub fn gamma_sign(k: WaveVector) -> i32 {
    assert!(!k.is_zero(), "gamma_sign is undefined at the zero mode");
    if k.m != 0 {
        return if k.m > 0 { 1 } else { -1 };
    }
    if k.k2 != 0 {
        return if k.k2 > 0 { 1 } else { -1 };
    }
    if k.k1 > 0 {
        1
    } else {
        -1
    }
}

/// Orthonormal frame `{a1, a2}` of the plane orthogonal to a wavenumber.
///
/// Together with `k/|k|` the two vectors form an orthonormal basis of `R^3`.
/// The frame is even under `k -> -k` (`a_{-k,j} = a_{k,j}`), so coefficients
/// attached to it conjugate cleanly across the pairing.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Frame {
    pub a1: [f64; 3],
    pub a2: [f64; 3],
}

/// Frame attached to a nonzero wavenumber; computed on the positive half and
/// mirrored, so `frame(-k) == frame(k)` holds exactly.
///
/// For horizontal modes (`k3 = 0`) on the positive half the frame is the pair
/// `{kH_perp/|kH|, e3}` with `kH_perp = (-k2, k1)`; this is the only part of the
/// choice that downstream formulas rely on.  For `k3 != 0` the frame is
/// `{(kH_perp, 0)/|kH|, k/|k| x a1}` (any smooth completion works; corrector and
/// covariance sums only use `a1 ⊗ a1 + a2 ⊗ a2 = I - k k^T/|k|^2`).  A vertical
/// mode with `kH = 0` falls back to `a1 = e1`; such modes lie outside the noise
/// support and only occur in generic field utilities.
pub fn frame(k: WaveVector) -> Frame {
    assert!(!k.is_zero(), "frame is undefined at the zero mode");
    let q = if gamma_sign(k) > 0 { k } else { -k };
    let kh = q.kh_norm();
    if q.m == 0 {
        // Horizontal mode: a1 = kH_perp/|kH|, a2 = e3.
        let a1 = [-q.k2 as f64 / kh, q.k1 as f64 / kh, 0.0];
        Frame { a1, a2: [0.0, 0.0, 1.0] }
    } else {
        let a1 = if q.k1 == 0 && q.k2 == 0 {
            [1.0, 0.0, 0.0]
        } else {
            [-q.k2 as f64 / kh, q.k1 as f64 / kh, 0.0]
        };
        let kn = q.norm();
        let khat = [q.k1 as f64 / kn, q.k2 as f64 / kn, q.k3() / kn];
        let a2 = cross(khat, a1);
        Frame { a1, a2 }
    }
}

pub(crate) fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[cfg(test)]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// All noise-support modes for layer count `n` and vertical truncation `jmax`:
/// the closed horizontal annulus `n <= |kH| <= 2n` tensorised with `|m| <= jmax`.
///
/// Modes are listed in the canonical lexicographic order by `(m, k2, k1)`; the
/// list is closed under `k -> -k`.
pub fn enumerate_modes(n: u32, jmax: u32) -> Vec<WaveVector> {
    let mut out = Vec::new();
    let lo = (n as i64) * (n as i64);
    let hi = 4 * lo;
    let r = 2 * n as i64;
    let j = jmax as i64;
    for m in -j..=j {
        for k2 in -r..=r {
            for k1 in -r..=r {
                let kh2 = k1 * k1 + k2 * k2;
                if kh2 >= lo && kh2 <= hi {
                    out.push(WaveVector { k1, k2, m, n });
                }
            }
        }
    }
    out
}

/// The positive-half sublist of [`enumerate_modes`], in the same canonical order.
/// `mode_index` positions in this list key the per-mode random-number streams.
pub fn gamma_plus_modes(n: u32, jmax: u32) -> Vec<WaveVector> {
    enumerate_modes(n, jmax)
        .into_iter()
        .filter(|k| gamma_sign(*k) > 0)
        .collect()
}

/// The three zeta sums used by covariance and diffusivity formulas.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ZetaTable {
    /// Annulus Riemann sum `zeta_hn(j, n) = n^(j-2) * sum_{n<=|kH|<=2n} |kH|^(-j)`.
    pub zeta_hn: f64,
    /// Continuum limit `zeta_h(j) = ∫_{1<=|x|<=2} |x|^(-j) dx` over the plane.
    pub zeta_h: f64,
    /// One-dimensional sum `zeta_l(l) = (1/2) * sum_{k != 0} |k|^(-l)`, i.e. the
    /// Riemann zeta function at `l`.
    pub zeta_l: f64,
}

/// Annulus sum `n^(j-2) * sum_{n <= |kH| <= 2n} |kH|^(-j)` over the closed
/// horizontal annulus (both boundary circles included).
pub fn zeta_hn(j: f64, n: u32) -> f64 {
    let lo = (n as i64) * (n as i64);
    let hi = 4 * lo;
    let r = 2 * n as i64;
    let mut sum = 0.0;
    for k2 in -r..=r {
        for k1 in -r..=r {
            let kh2 = k1 * k1 + k2 * k2;
            if kh2 >= lo && kh2 <= hi {
                sum += (kh2 as f64).powf(-j / 2.0);
            }
        }
    }
    (n as f64).powf(j - 2.0) * sum
}

/// Planar annulus integral `∫_{1<=|x|<=2} |x|^(-j) dx = 2*pi * (2^(2-j)-1)/(2-j)`,
/// with the logarithmic value `2*pi*log 2` at `j = 2`.
pub fn zeta_h(j: f64) -> f64 {
    let tau = 2.0 * std::f64::consts::PI;
    if (j - 2.0).abs() < 1e-12 {
        tau * std::f64::consts::LN_2
    } else {
        tau * ((2.0f64).powf(2.0 - j) - 1.0) / (2.0 - j)
    }
}

/// One-dimensional lattice sum `(1/2) * sum_{k in Z\{0}} |k|^(-l)` — the Riemann
/// zeta function at `l` — via direct summation with an Euler–Maclaurin tail.
///
/// The cut-off grows until the first neglected Euler–Maclaurin correction is
/// below `1e-12` in relative terms, so the returned value carries that accuracy.
/// Exponents `l <= 1` are rejected (the sum diverges).
pub fn zeta_l(l: f64) -> Result<f64> {
    if l <= 1.0 {
        return Err(Error::config(format!(
            "zeta_l({l}) diverges: exponent must be > 1"
        )));
    }
    let mut cut: u64 = 64;
    loop {
        let mut sum = 0.0;
        for k in 1..cut {
            sum += (k as f64).powf(-l);
        }
        let x = cut as f64;
        // Euler–Maclaurin tail starting at `cut`:
        //   sum_{k>=cut} k^-l = x^(1-l)/(l-1) + x^-l/2 + l*x^(-l-1)/12 - ...
        let tail = x.powf(1.0 - l) / (l - 1.0) + 0.5 * x.powf(-l) + l / 12.0 * x.powf(-l - 1.0);
        let next_term = l * (l + 1.0) * (l + 2.0) / 720.0 * x.powf(-l - 3.0);
        let value = sum + tail;
        if next_term < 1e-12 * value.max(1.0) {
            return Ok(value);
        }
        cut *= 2;
        if cut > 1 << 26 {
            return Err(Error::numerical(format!(
                "zeta_l({l}) failed to reach tolerance"
            )));
        }
    }
}

/// Bundle of the three zeta sums at the orders a caller needs: the annulus sum
/// and its continuum limit at exponent `j`, and the one-dimensional sum at `l`.
pub fn zeta_values(j: f64, n: u32, l: f64) -> Result<ZetaTable> {
    Ok(ZetaTable { zeta_hn: zeta_hn(j, n), zeta_h: zeta_h(j), zeta_l: zeta_l(l)? })
}
