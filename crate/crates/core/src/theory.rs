//! Asymptotic theory of the exponentiated KDE under a known truth.
//!
//! The expected Fisher divergence `E J(f || f_{w,h})` expands, for `w` near 1,
//! as
//!
//! ```text
//! C_B2L h^{2L} + (w-1)² C_B1 + (w-1) C_BL h^L + C_V / (n h³)
//! ```
//!
//! with constants that are expectations under `f` of derivative ratios
//! `r_k = f^{(k)} / f`. This module evaluates those constants by quadrature
//! for Gaussian mixture truths, derives the optimal `(w*, h*)`, and computes
//! the exact Fisher divergence of a fitted model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_kde::ExpKdeModel;
use crate::kernel::{KernelFamily, KernelSpec};
use crate::mixture::GaussianMixture;
use crate::quad::{adaptive_simpson_panels, uniform_panels, QuadConfig};

/// Relative tolerance of the constant quadratures.
pub const CONSTANT_REL_TOL: f64 = 1e-8;

/// `4 C_B1 C_B2L - C_BL²` at or below this fraction of `4 C_B1 C_B2L` is
/// treated as the Cauchy–Schwarz equality case.
pub const DEGENERACY_REL_TOL: f64 = 1e-6;

/// Kernel constants the theory constants were computed with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSnapshot {
    pub family: KernelFamily,
    pub order: usize,
    /// `κ_L = μ_L / L!`
    pub kappa_l: f64,
    /// `R(K)`
    pub roughness: f64,
    /// `R(K')`
    pub roughness_deriv: f64,
}

/// The expansion constants for one truth and kernel.
///
/// With `A = r_1` and `B = r_{L+1} - r_1 r_L`:
/// `C_B1 = E[A²]`, `C_BL = 2κ_L E[AB]`, `C_B2L = κ_L² E[B²]`,
/// `C_V = R(K') E[1/f]` (truncated to `[-T, T]`, so `E[1/f] = 2T`),
/// `C'_l = 2κ_l E[r_1 r_{l+1} - r_1² r_l]` for `l = L+1..2L` and
/// `C'_2L = κ_L² E[r_1² r_L² - r_1 r_L r_{L+1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryConstants {
    pub order: usize,
    pub c_b1: f64,
    pub c_bl: f64,
    pub c_b2l: f64,
    pub c_v: f64,
    pub c_prime_bl: BTreeMap<usize, f64>,
    pub c_prime_b2l: f64,
    /// `C_BL` through the integration-by-parts form `-2κ_L ∫ (f'')² / f`,
    /// available for `L = 2`.
    pub c_bl_by_parts: Option<f64>,
    pub truncation: f64,
    pub kernel: KernelSnapshot,
}

/// Which expansion of the expected Fisher divergence to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionMode {
    /// `w - 1` of the same order as `h^L`.
    LocalW,
    /// `w` held fixed; adds the `C'` cross terms.
    FixedW,
}

/// Leading-order Hessian of the expansion in `(w, h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hessian {
    pub matrix: [[f64; 2]; 2],
    pub positive_definite: bool,
}

impl Hessian {
    pub fn determinant(&self) -> f64 {
        let m = &self.matrix;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }
}

/// Default truncation `T = max|μ_j| + 8 max σ_j`.
pub fn default_truncation(mix: &GaussianMixture) -> f64 {
    mix.default_truncation()
}

/// Evaluates all expansion constants for `mix` on `[-T, T]`.
pub fn constants(mix: &GaussianMixture, kernel: &KernelSpec, truncation: f64) -> Result<TheoryConstants> {
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(Error::Parameter(format!(
            "truncation T must be positive, got {truncation}"
        )));
    }
    let l = kernel.order();
    let kappa_l = kernel.moment(l)?;
    let snapshot = KernelSnapshot {
        family: kernel.family,
        order: l,
        kappa_l,
        roughness: kernel.roughness(0)?,
        roughness_deriv: kernel.roughness(1)?,
    };
    let min_sd = mix.components().iter().map(|c| c.sd).fold(f64::INFINITY, f64::min);
    let panels = uniform_panels(-truncation, truncation, 0.5 * min_sd);
    let cfg = QuadConfig::with_rel_tol(CONSTANT_REL_TOL);
    let top = 2 * l + 1;
    let expect = |g: &dyn Fn(&[f64]) -> f64| -> Result<f64> {
        let q = adaptive_simpson_panels(
            |x| {
                let f = mix.pdf(x);
                if f == 0.0 {
                    return 0.0;
                }
                match mix.deriv_ratios(x, top) {
                    Ok(r) => g(&r) * f,
                    Err(_) => f64::NAN,
                }
            },
            &panels,
            &cfg,
        )?;
        Ok(q.value)
    };

    let c_b1 = expect(&|r| r[1] * r[1])?;
    let c_bl = 2.0 * kappa_l * expect(&|r| r[1] * (r[l + 1] - r[1] * r[l]))?;
    let c_b2l = kappa_l * kappa_l * expect(&|r| (r[l + 1] - r[1] * r[l]).powi(2))?;
    let mut c_prime_bl = BTreeMap::new();
    for m in l + 1..=2 * l {
        let kappa_m = kernel.moment(m)?;
        let v = if kappa_m == 0.0 {
            0.0
        } else {
            2.0 * kappa_m * expect(&|r| r[1] * r[m + 1] - r[1] * r[1] * r[m])?
        };
        c_prime_bl.insert(m, v);
    }
    let c_prime_b2l = kappa_l * kappa_l * expect(&|r| r[1] * r[1] * r[l] * r[l] - r[1] * r[l] * r[l + 1])?;
    let c_bl_by_parts = if l == 2 {
        Some(-2.0 * kappa_l * expect(&|r| r[2] * r[2])?)
    } else {
        None
    };
    let c_v = snapshot.roughness_deriv * 2.0 * truncation;

    Ok(TheoryConstants {
        order: l,
        c_b1,
        c_bl,
        c_b2l,
        c_v,
        c_prime_bl,
        c_prime_b2l,
        c_bl_by_parts,
        truncation,
        kernel: snapshot,
    })
}

impl TheoryConstants {
    /// `4 C_B1 C_B2L - C_BL²`, nonnegative by Cauchy–Schwarz.
    pub fn cauchy_schwarz_gap(&self) -> f64 {
        4.0 * self.c_b1 * self.c_b2l - self.c_bl * self.c_bl
    }

    /// `w* = 1 - C_BL / (2 C_B1) h^L`.
    pub fn optimal_w(&self, h_star: f64) -> f64 {
        1.0 - self.c_bl / (2.0 * self.c_b1) * h_star.powi(self.order as i32)
    }

    /// Bandwidth minimizing the local-`w` expansion after profiling out `w`:
    /// `h* = ((6/L) C_B1 C_V / (4 C_B1 C_B2L - C_BL²))^{1/(2L+3)} n^{-1/(2L+3)}`.
    pub fn optimal_h(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::Parameter("sample size must be positive".into()));
        }
        let gap = self.cauchy_schwarz_gap();
        if !(gap > DEGENERACY_REL_TOL * 4.0 * self.c_b1 * self.c_b2l) {
            return Err(Error::DegenerateDensity { denominator: gap });
        }
        let l = self.order as f64;
        let p = 1.0 / (2.0 * l + 3.0);
        Ok((6.0 / l * self.c_b1 * self.c_v / gap).powf(p) * (n as f64).powf(-p))
    }

    /// `w* - 1` at `h*(n)`; decays like `n^{-L/(2L+3)}`.
    pub fn optimal_w_sequence(&self, n: usize) -> Result<f64> {
        Ok(self.optimal_w(self.optimal_h(n)?) - 1.0)
    }

    /// Leading terms of `E J(f || f_{w,h})`.
    pub fn fisher_expansion(&self, w: f64, h: f64, n: usize, mode: ExpansionMode) -> f64 {
        let l = self.order as i32;
        let n = n as f64;
        let hl = h.powi(l);
        let h2l = hl * hl;
        let dw = w - 1.0;
        let variance = self.c_v / (n * h.powi(3));
        match mode {
            ExpansionMode::LocalW => self.c_b2l * h2l + dw * dw * self.c_b1 + dw * self.c_bl * hl + variance,
            ExpansionMode::FixedW => {
                let cross: f64 = self.c_prime_bl.iter().map(|(&m, &c)| c * h.powi(m as i32)).sum();
                w * w * self.c_b2l * h2l
                    + dw * dw * self.c_b1
                    + dw * self.c_bl * hl
                    + w * w * variance
                    + 2.0 * w * dw * cross
                    + 2.0 * w * dw * self.c_prime_b2l * h2l
            }
        }
    }

    /// Second derivatives of the local-`w` expansion in `(w, h)`.
    pub fn hessian_leading(&self, w: f64, h: f64, n: usize) -> Hessian {
        let l = self.order as i32;
        let lf = l as f64;
        let n = n as f64;
        let a = 2.0 * self.c_b1;
        let b = lf * self.c_bl * h.powi(l - 1);
        let c = 2.0 * lf * (2.0 * lf - 1.0) * self.c_b2l * h.powi(2 * l - 2)
            + lf * (lf - 1.0) * (w - 1.0) * self.c_bl * h.powi(l - 2)
            + 12.0 * self.c_v / (n * h.powi(5));
        let positive_definite = a > 0.0 && a * c - b * b > 0.0;
        Hessian {
            matrix: [[a, b], [b, c]],
            positive_definite,
        }
    }
}

/// `J = ½ ∫_{-T}^{T} (s(x) - f'(x)/f(x))² f(x) dx` for an arbitrary score `s`.
///
/// `resolution` bounds the quadrature panel width and should not exceed the
/// smallest length scale of `s`.
pub fn fisher_divergence_with<S: Fn(f64) -> f64>(
    mix: &GaussianMixture,
    score: S,
    truncation: f64,
    resolution: f64,
) -> Result<f64> {
    if !(truncation > 0.0 && truncation.is_finite()) {
        return Err(Error::Parameter(format!(
            "truncation T must be positive, got {truncation}"
        )));
    }
    let min_sd = mix.components().iter().map(|c| c.sd).fold(f64::INFINITY, f64::min);
    let width = 0.5 * min_sd.min(resolution);
    let panels = uniform_panels(-truncation, truncation, width);
    let q = adaptive_simpson_panels(
        |x| {
            let f = mix.pdf(x);
            if f == 0.0 {
                return 0.0;
            }
            0.5 * (score(x) - mix.score(x)).powi(2) * f
        },
        &panels,
        &QuadConfig::with_rel_tol(CONSTANT_REL_TOL),
    )?;
    Ok(q.value.max(0.0))
}

/// Exact Fisher divergence between the truth and a fitted model.
pub fn exact_fisher_divergence(mix: &GaussianMixture, model: &ExpKdeModel, truncation: f64) -> Result<f64> {
    fisher_divergence_with(
        mix,
        |x| model.dlog_density(x).map(|d| d.0).unwrap_or(f64::NAN),
        truncation,
        model.bandwidth(),
    )
}
