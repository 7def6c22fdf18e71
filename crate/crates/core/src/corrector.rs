//! The Itô–Stratonovich corrector generated by the noise, and brute-force
//! verification of the corrector identity.
//!
//! For the transport-stretching noise the full Lie-composition sum
//!
//! ```text
//! C F = sum_{k,j} L_{sigma_{k,j}} L_{sigma_{-k,j}} F
//!       + rho * sum_{k3=0} (L_{sigma_{k,1}} L_{sigma_{-k,2}} + L_{sigma_{k,2}} L_{sigma_{-k,1}}) F
//! ```
//!
//! collapses exactly (mode by mode) to a constant-coefficient operator
//! `Lambda + Lambda_rho`: a diagonal second-order part
//! `Lambda = diff_h * Delta_H + diff_v * d33` plus a first-order part driven by
//! the antisymmetric alpha-matrix `R`.  Per composition, for a single mode pair,
//! `L_{sigma_k} L_{sigma_{-k}} F = |theta|^2 (a.grad)^2 F` — the first-order
//! terms cancel — so the diagonal sum contributes `S : grad^2` with
//! `S = sum |theta|^2 a ⊗ a` (half the covariance at zero).  In particular the
//! horizontal transport modes contribute `zeta_hn(2,n)/(2*c1h^2)` to `diff_h`:
//! half the corresponding covariance entry, because each unordered pair is
//! counted once in `S` but twice in `Q(0)`.
//!
//! The verification below does not use any of these formulas: it composes the
//! Lie derivatives mode by mode (sparse, exact bands) and compares against the
//! closed-form operator.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{random_divfree_field, Domain, Mode3, SpectralField};
use crate::noise::{covariance_grad0, NoiseTables};
use crate::C64;
use num_complex::Complex;

/// Closed-form corrector operators.
#[derive(Clone, Debug, Serialize)]
pub struct CorrectorOperators {
    /// Horizontal eddy diffusivity of the generator (multiplies `Delta_H`).
    /// Equals `eta_vt + zeta_hn(2,n)/(2*c1h^2)`.
    pub diff_h: f64,
    /// Vertical eddy diffusivity of the generator (multiplies `d33`).
    /// Equals `eta_vr + eta_hr`.
    pub diff_v: f64,
    /// Full tensor `S = sum_{k,j} |theta_{k,j}|^2 a ⊗ a` the diagonal part is
    /// read from (kept for diagnostics; off-diagonal entries vanish by lattice
    /// symmetry).
    pub s_tensor: [[f64; 3]; 3],
    /// First derivatives of the cross covariance at zero.
    pub grad_q_rho: [[[f64; 3]; 3]; 3],
    /// Antisymmetric alpha-matrix `R[m][n] = d_n q_rho^{3,m}(0)`.
    pub r_matrix: [[f64; 2]; 2],
}

impl CorrectorOperators {
    pub fn new(tables: &NoiseTables) -> Self {
        // S = sum over the full lattice and both components of |theta|^2 a ⊗ a.
        let mut s = [[0.0; 3]; 3];
        for i in 0..tables.len() {
            for j in [1usize, 2] {
                let w = 2.0 * tables.theta[i][j - 1].norm_sqr(); // both signs
                let a = tables.frame_vec(i, j);
                for m in 0..3 {
                    for n in 0..3 {
                        s[m][n] += w * a[m] * a[n];
                    }
                }
            }
        }
        let g = covariance_grad0(tables);
        CorrectorOperators {
            diff_h: 0.5 * (s[0][0] + s[1][1]),
            diff_v: s[2][2],
            s_tensor: s,
            grad_q_rho: g.grad,
            r_matrix: g.r_matrix,
        }
    }

    /// First-order mode matrix `M(q)` of `Lambda_rho`: for `m, l in {1,2}`
    /// `M[m][l] = i q3 R[m][l]`, and `M[3][l] = i (R qH)_l`; the third column
    /// vanishes.  Nilpotent (`M^2 = 0`) on horizontal modes.
    pub fn mode_matrix(&self, qc: [f64; 3]) -> [[C64; 3]; 3] {
        let i = Complex::new(0.0, 1.0);
        let r = &self.r_matrix;
        let mut m = [[Complex::new(0.0, 0.0); 3]; 3];
        for row in 0..2 {
            for col in 0..2 {
                m[row][col] = i * qc[2] * r[row][col];
            }
        }
        m[2][0] = i * (r[0][0] * qc[0] + r[0][1] * qc[1]);
        m[2][1] = i * (r[1][0] * qc[0] + r[1][1] * qc[1]);
        m
    }
}

/// Second-order part: `Lambda F` with multiplier
/// `-(diff_h |qH|^2 + diff_v q3^2)` per mode.
pub fn lambda_op(ops: &CorrectorOperators, f: &SpectralField) -> SpectralField {
    let mut out = SpectralField::zeros(f.domain, f.ncomp());
    out.flags = f.flags;
    for mode in f.domain.modes() {
        let qc = f.domain.cartesian(mode);
        let mul = -(ops.diff_h * (qc[0] * qc[0] + qc[1] * qc[1]) + ops.diff_v * qc[2] * qc[2]);
        for c in 0..f.ncomp() {
            out.set(c, mode, mul * f.get(c, mode));
        }
    }
    out
}

/// First-order part: `Lambda_rho F` with the mode matrix `M(q)`.
pub fn lambda_rho_op(ops: &CorrectorOperators, f: &SpectralField) -> SpectralField {
    assert_eq!(f.ncomp(), 3, "lambda_rho_op expects a vector field");
    let mut out = SpectralField::zeros(f.domain, 3);
    out.flags = crate::field::Flags { real: f.flags.real, div_free: false };
    for mode in f.domain.modes() {
        let qc = f.domain.cartesian(mode);
        let m = ops.mode_matrix(qc);
        let v = f.vec3(mode);
        for row in 0..3 {
            out.set(row, mode, m[row][0] * v[0] + m[row][1] * v[1] + m[row][2] * v[2]);
        }
    }
    out
}

/// Sparse spectral representation used by the mode-by-mode compositions.
type Sparse = Vec<(Mode3, [C64; 3])>;

fn field_to_sparse(f: &SpectralField) -> Sparse {
    crate::field::to_sparse(f)
}

/// Brute-force Lie-composition sum `C F` over the full noise lattice,
/// truncated to the band of `F` (where it is exactly supported).
pub fn lie_composition_sum(tables: &NoiseTables, f: &SpectralField) -> SpectralField {
    let n = tables.spec.n as i64;
    let rho = tables.spec.rho;
    let i = Complex::new(0.0, 1.0);
    let sparse_f = field_to_sparse(f);

    // Apply L_{sigma} for sigma = theta a e^(i k.x) to a sparse field:
    // (L_sigma G)^(q+k) = i theta [(a.q) G^(q) - (G^(q).k) a].
    let apply = |theta: C64, a: [f64; 3], kint: Mode3, g: &Sparse| -> Sparse {
        let kc = [kint.0 as f64, kint.1 as f64, (kint.2 * n) as f64];
        let mut out = Vec::with_capacity(g.len());
        for (q, v) in g {
            let qc = [q.0 as f64, q.1 as f64, (q.2 * n) as f64];
            let adotq = a[0] * qc[0] + a[1] * qc[1] + a[2] * qc[2];
            let vdotk = v[0] * kc[0] + v[1] * kc[1] + v[2] * kc[2];
            let t = (q.0 + kint.0, q.1 + kint.1, q.2 + kint.2);
            let mut w = [Complex::new(0.0, 0.0); 3];
            for c in 0..3 {
                w[c] = i * theta * (adotq * v[c] - vdotk * a[c]);
            }
            out.push((t, w));
        }
        out
    };

    let mut acc = SpectralField::zeros(f.domain, 3);
    acc.flags = crate::field::Flags { real: f.flags.real, div_free: false };
    let add_sparse = |s: &Sparse, weight: f64, acc: &mut SpectralField| {
        for (t, v) in s {
            for c in 0..3 {
                acc.add_to(c, *t, weight * v[c]);
            }
        }
    };

    for idx in 0..tables.len() {
        let k = tables.gamma_plus[idx];
        let horizontal = k.m == 0;
        for sign in [1i32, -1] {
            let kint = if sign > 0 {
                (k.k1, k.k2, k.m)
            } else {
                (-k.k1, -k.k2, -k.m)
            };
            let nint = (-kint.0, -kint.1, -kint.2);
            // Diagonal terms: L_{sigma_{k,j}} L_{sigma_{-k,j}}.
            for j in [1usize, 2] {
                let a = tables.frame_vec(idx, j);
                let th_out = tables.theta_pm(idx, sign, j);
                let th_in = tables.theta_pm(idx, -sign, j);
                let inner = apply(th_in, a, nint, &sparse_f);
                let outer = apply(th_out, a, kint, &inner);
                add_sparse(&outer, 1.0, &mut acc);
            }
            // Cross terms on horizontal modes.
            if horizontal && rho != 0.0 {
                let a1 = tables.frame_vec(idx, 1);
                let a2 = tables.frame_vec(idx, 2);
                // L_{sigma_{k,1}} L_{sigma_{-k,2}}.
                let inner = apply(tables.theta_pm(idx, -sign, 2), a2, nint, &sparse_f);
                let outer = apply(tables.theta_pm(idx, sign, 1), a1, kint, &inner);
                add_sparse(&outer, rho, &mut acc);
                // L_{sigma_{k,2}} L_{sigma_{-k,1}}.
                let inner = apply(tables.theta_pm(idx, -sign, 1), a1, nint, &sparse_f);
                let outer = apply(tables.theta_pm(idx, sign, 2), a2, kint, &inner);
                add_sparse(&outer, rho, &mut acc);
            }
        }
    }
    acc
}

/// Result of a brute-force corrector verification.
#[derive(Clone, Debug, Serialize)]
pub struct CorrectorReport {
    /// Relative residuals per trial field.
    pub residuals: Vec<f64>,
    pub residual_max: f64,
}

/// Verify the corrector identity `C F = (Lambda + Lambda_rho) F` on random
/// divergence-free fields.  The left side is the brute-force Lie-composition
/// sum; the right side is the closed-form operator.
pub fn verify_corrector(tables: &NoiseTables, trials: usize, seed: u64) -> Result<CorrectorReport> {
    if trials == 0 {
        return Err(Error::config("verify_corrector needs at least one trial"));
    }
    let ops = CorrectorOperators::new(tables);
    let domain = Domain::Thin3D { n: tables.spec.n, kmax: 2, mmax: 1 };
    let mut residuals = Vec::with_capacity(trials);
    for t in 0..trials {
        let f = random_divfree_field(domain, 2, 1, seed.wrapping_add(t as u64));
        let lhs = lie_composition_sum(tables, &f);
        let mut rhs = lambda_op(&ops, &f);
        rhs.axpy_mut(1.0, &lambda_rho_op(&ops, &f));
        let denom = rhs.norm_l2().max(1e-300);
        residuals.push(lhs.sub(&rhs).norm_l2() / denom);
    }
    let residual_max = residuals.iter().cloned().fold(0.0, f64::max);
    Ok(CorrectorReport { residuals, residual_max })
}

/// Remainder: `d_l Q_0(0) = 2 sum_{k,j} |theta|^2 (i k_l) a ⊗ a` vanishes by
/// pairwise cancellation.  Returns the largest entry of the honestly-summed
/// tensor.
pub fn grad_q0_residual(tables: &NoiseTables) -> f64 {
    let mut worst = 0.0f64;
    for l in 0..3 {
        let mut acc = [[Complex::new(0.0, 0.0); 3]; 3];
        for idx in 0..tables.len() {
            for sign in [1i32, -1] {
                let kc = tables.kcart_pm(idx, sign);
                for j in [1usize, 2] {
                    let th = tables.theta_pm(idx, sign, j);
                    let a = tables.frame_vec(idx, j);
                    let w = 2.0 * th.norm_sqr() * Complex::new(0.0, kc[l]);
                    for m in 0..3 {
                        for nn in 0..3 {
                            acc[m][nn] += w * a[m] * a[nn];
                        }
                    }
                }
            }
        }
        for row in acc {
            for v in row {
                worst = worst.max(v.norm());
            }
        }
    }
    worst
}

/// Remainder: `sum_{k,j} sigma_{k,j}.grad d_m sigma_{-k,j}` vanishes mode by
/// mode because `a.k = 0`.  Returns the largest coefficient norm of the
/// honestly-computed sum, maximised over `m`.
pub fn advect_grad_sigma_residual(tables: &NoiseTables) -> f64 {
    let i = Complex::new(0.0, 1.0);
    let mut worst = 0.0f64;
    for m in 0..3 {
        // The sum is supported at mode 0 (phases cancel within each term).
        let mut acc = [Complex::new(0.0, 0.0); 3];
        for idx in 0..tables.len() {
            for sign in [1i32, -1] {
                let kc = tables.kcart_pm(idx, sign);
                for j in [1usize, 2] {
                    let a = tables.frame_vec(idx, j);
                    let th_p = tables.theta_pm(idx, sign, j);
                    let th_m = tables.theta_pm(idx, -sign, j);
                    // sigma_{k}.grad applied to d_m sigma_{-k}:
                    // coefficient i*th_p*(a.(-k)) times (-i k_m th_m a).
                    let adotmk = -(a[0] * kc[0] + a[1] * kc[1] + a[2] * kc[2]);
                    let w = i * th_p * adotmk * (-i) * kc[m] * th_m;
                    for c in 0..3 {
                        acc[c] += w * a[c];
                    }
                }
            }
        }
        for v in acc {
            worst = worst.max(v.norm());
        }
    }
    worst
}

/// Remainder: the stretching-remainder symmetry
/// `(sigma_{-k,1}.grad F).grad sigma_{k,2} = (sigma_{k,1}.grad F).grad sigma_{-k,2}`
/// on horizontal modes.  Returns the largest coefficient gap over the annulus
/// for the given test field.
pub fn r_tilde_gap(tables: &NoiseTables, f: &SpectralField) -> f64 {
    let n = tables.spec.n as i64;
    let sparse_f = field_to_sparse(f);
    let mut worst = 0.0f64;
    for idx in 0..tables.len() {
        if tables.gamma_plus[idx].m != 0 {
            continue;
        }
        for sign in [1i32, -1] {
            let k = tables.gamma_plus[idx];
            let kint = if sign > 0 {
                (k.k1, k.k2, k.m)
            } else {
                (-k.k1, -k.k2, -k.m)
            };
            let a1 = tables.frame_vec(idx, 1);
            let a2 = tables.frame_vec(idx, 2);
            let lhs = stretch_after_advect(
                tables.theta_pm(idx, -sign, 1),
                a1,
                (-kint.0, -kint.1, -kint.2),
                tables.theta_pm(idx, sign, 2),
                a2,
                kint,
                n,
                &sparse_f,
            );
            let rhs = stretch_after_advect(
                tables.theta_pm(idx, sign, 1),
                a1,
                kint,
                tables.theta_pm(idx, -sign, 2),
                a2,
                (-kint.0, -kint.1, -kint.2),
                n,
                &sparse_f,
            );
            for ((_, l), (_, r)) in lhs.iter().zip(&rhs) {
                for c in 0..3 {
                    worst = worst.max((l[c] - r[c]).norm());
                }
            }
        }
    }
    worst
}

/// `(sigma_a.grad F).grad sigma_b` as a sparse field: entry at `q + ka + kb`
/// equals `i th_b ((i th_a (a_a.q) F(q)).k_b) a_b`.
#[allow(clippy::too_many_arguments)]
fn stretch_after_advect(
    th_a: C64,
    a_a: [f64; 3],
    ka: Mode3,
    th_b: C64,
    a_b: [f64; 3],
    kb: Mode3,
    n: i64,
    f: &Sparse,
) -> Sparse {
    let i = Complex::new(0.0, 1.0);
    let kbc = [kb.0 as f64, kb.1 as f64, (kb.2 * n) as f64];
    let mut out = Vec::with_capacity(f.len());
    for (q, v) in f {
        let qc = [q.0 as f64, q.1 as f64, (q.2 * n) as f64];
        let adotq = a_a[0] * qc[0] + a_a[1] * qc[1] + a_a[2] * qc[2];
        let inner: [C64; 3] = [
            i * th_a * adotq * v[0],
            i * th_a * adotq * v[1],
            i * th_a * adotq * v[2],
        ];
        let vdotkb = inner[0] * kbc[0] + inner[1] * kbc[1] + inner[2] * kbc[2];
        let t = (q.0 + ka.0 + kb.0, q.1 + ka.1 + kb.1, q.2 + ka.2 + kb.2);
        let mut w = [Complex::new(0.0, 0.0); 3];
        for c in 0..3 {
            w[c] = i * th_b * vdotkb * a_b[c];
        }
        out.push((t, w));
    }
    out
}

/// Remainder: `R1 = sum_{k,j} [(sigma_{k,j}.grad F).grad sigma_{-k,j} +
/// (sigma_{-k,j}.grad F).grad sigma_{k,j}]` vanishes pairwise.  Returns the
/// largest coefficient norm of the honestly-computed sum.
pub fn r1_residual(tables: &NoiseTables, f: &SpectralField) -> f64 {
    let n = tables.spec.n as i64;
    let sparse_f = field_to_sparse(f);
    // All terms land at the modes of F (the ±k phases cancel), so accumulate
    // in a map keyed by mode.
    let mut acc: std::collections::HashMap<Mode3, [C64; 3]> = std::collections::HashMap::new();
    for idx in 0..tables.len() {
        let k = tables.gamma_plus[idx];
        for j in [1usize, 2] {
            let a = tables.frame_vec(idx, j);
            for sign in [1i32, -1] {
                let kint = if sign > 0 {
                    (k.k1, k.k2, k.m)
                } else {
                    (-k.k1, -k.k2, -k.m)
                };
                let terms = stretch_after_advect(
                    tables.theta_pm(idx, sign, j),
                    a,
                    kint,
                    tables.theta_pm(idx, -sign, j),
                    a,
                    (-kint.0, -kint.1, -kint.2),
                    n,
                    &sparse_f,
                );
                for (t, v) in terms {
                    let e = acc.entry(t).or_insert([Complex::new(0.0, 0.0); 3]);
                    for c in 0..3 {
                        e[c] += v[c];
                    }
                }
            }
        }
    }
    let mut worst = 0.0f64;
    for v in acc.values() {
        for c in v {
            worst = worst.max(c.norm());
        }
    }
    worst
}
