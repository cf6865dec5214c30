//! Classical bandwidth selectors for the plain KDE: unbiased (least-squares)
//! cross-validation and the AMISE plug-in rule with a kernel estimate of
//! the density-derivative functional `I_L = ∫ (f^{(L)})²`.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_kde::{check_bandwidth, kde_eval, SampleSet};
use crate::hermite::hermite_he;
use crate::hscore::BoundPolicy;
use crate::kernel::{gauss, KernelSpec, FRAC_1_SQRT_2PI, UNDERFLOW_U2};
use crate::optim::golden_section;
use crate::quad::{adaptive_simpson_panels, uniform_panels, QuadConfig};

/// `CV(h) = ∫ f_h² - (2/n) Σ_i f_{h,-i}(X_i)`.
///
/// The first term uses the Gaussian convolution identity
/// `∫ f_h² = n⁻² Σ_{i,j} φ_{√2 h}(X_i - X_j)`; the second uses the
/// leave-one-out estimate `f_{h,-i}(x) = ((n-1)h)⁻¹ Σ_{j≠i} K((x - X_j)/h)`.
pub fn ucv_objective(sample: &SampleSet, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let x = sample.as_slice();
    let n = x.len() as f64;
    let h2 = std::f64::consts::SQRT_2 * h;
    let (mut conv, mut loo) = (0.0, 0.0);
    for i in 0..x.len() {
        for &xj in &x[i + 1..] {
            let d = xj - x[i];
            let u2 = (d / h2).powi(2);
            if u2 > UNDERFLOW_U2 {
                break;
            }
            conv += (-0.5 * u2).exp();
            loo += (-0.5 * (d / h).powi(2)).exp();
        }
    }
    let square = FRAC_1_SQRT_2PI * (n + 2.0 * conv) / (n * n * h2);
    let cross = 2.0 * FRAC_1_SQRT_2PI * 2.0 * loo / (n * (n - 1.0) * h);
    Ok(square - cross)
}

/// `∫ f_h²` by the convolution identity (the first term of `CV(h)`).
pub fn kde_squared_integral(sample: &SampleSet, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    let x = sample.as_slice();
    let n = x.len() as f64;
    let h2 = std::f64::consts::SQRT_2 * h;
    let mut conv = 0.0;
    for i in 0..x.len() {
        for &xj in &x[i + 1..] {
            conv += gauss((xj - x[i]) / h2);
        }
    }
    Ok((n * FRAC_1_SQRT_2PI + 2.0 * conv) / (n * n * h2))
}

/// A selected bandwidth and the selector's objective at it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthSelection {
    pub h: f64,
    pub objective: f64,
    pub boundary_hit: bool,
    pub evaluations: usize,
}

const UCV_GRID: usize = 32;

/// Minimizes `CV(h)` over `h_bounds`: a log-spaced grid, then golden-section
/// refinement around the best grid point.
pub fn ucv_select(sample: &SampleSet, h_bounds: (f64, f64), policy: BoundPolicy) -> Result<BandwidthSelection> {
    let (lo, hi) = h_bounds;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(Error::Config(format!("invalid h bounds ({lo}, {hi})")));
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let h_of = |u: f64| {
        if u <= 0.0 {
            lo
        } else if u >= 1.0 {
            hi
        } else {
            (llo + u * (lhi - llo)).exp()
        }
    };
    let step = 1.0 / (UCV_GRID - 1) as f64;
    let values: Vec<f64> = (0..UCV_GRID)
        .into_par_iter()
        .map(|k| ucv_objective(sample, h_of(k as f64 * step)).unwrap_or(f64::NAN))
        .collect();
    let best_k = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .ok_or_else(|| Error::Tuning("CV objective is not finite on the grid".into()))?;
    let u0 = best_k as f64 * step;
    let m = golden_section(
        |u| ucv_objective(sample, h_of(u)).unwrap_or(f64::NAN),
        (u0 - step).max(0.0),
        (u0 + step).min(1.0),
        1e-6,
        200,
    );
    let (u, objective) = if values[best_k] < m.value {
        (u0, values[best_k])
    } else {
        (m.x[0], m.value)
    };
    let boundary_hit = u <= 1e-4 || u >= 1.0 - 1e-4;
    let h = h_of(u);
    if boundary_hit {
        let msg = format!("CV bandwidth {h:.4e} lies on the search edge [{lo:.4e}, {hi:.4e}]");
        match policy {
            BoundPolicy::ErrorOnBoundary => return Err(Error::Boundary(msg)),
            BoundPolicy::WarnOnBoundary => warn!("{msg}"),
        }
    }
    Ok(BandwidthSelection {
        h,
        objective,
        boundary_hit,
        evaluations: UCV_GRID + m.evaluations,
    })
}

/// How the pilot bandwidth `b` of the derivative-functional estimate is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PilotRule {
    /// Normal-reference rule that balances the smoothing bias of
    /// `∫ (f_b^{(L)})²` against its positive diagonal term:
    /// `b = σ (R(H^{(L)}) / (n I_{L+1}(φ)))^{1/(2L+3)}`.
    #[default]
    NormalReference,
    /// `b = 1.06 σ n^{-1/(2L+5)}`.
    Silverman,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PluginConfig {
    /// Pilot kernel `H`.
    pub pilot_kernel: KernelSpec,
    pub pilot_rule: PilotRule,
    /// Kernel order `L`.
    pub order: usize,
}

impl Default for PluginConfig {
    fn default() -> Self {
        Self {
            pilot_kernel: KernelSpec::GAUSSIAN,
            pilot_rule: PilotRule::NormalReference,
            order: 2,
        }
    }
}

impl PluginConfig {
    fn validate(&self) -> Result<()> {
        if self.order != self.pilot_kernel.order() {
            return Err(Error::Config(format!(
                "derivative order L = {} does not match the kernel order {}",
                self.order,
                self.pilot_kernel.order()
            )));
        }
        Ok(())
    }
}

/// Resolves the pilot bandwidth `b` for `sample`.
pub fn pilot_bandwidth(sample: &SampleSet, cfg: &PluginConfig) -> Result<f64> {
    cfg.validate()?;
    let l = cfg.order;
    let n = sample.len() as f64;
    let b = match cfg.pilot_rule {
        PilotRule::Fixed(b) => b,
        PilotRule::Silverman => 1.06 * sample.robust_scale() * n.powf(-1.0 / (2 * l + 5) as f64),
        PilotRule::NormalReference => {
            let k = cfg.pilot_kernel;
            // ∫(φ^{(m)})² is also the functional I_m of the standard normal
            let ratio = k.roughness(l)? / (n * k.roughness(l + 1)?);
            sample.robust_scale() * ratio.powf(1.0 / (2 * l + 3) as f64)
        }
    };
    if !(b > 0.0 && b.is_finite()) {
        return Err(Error::Config(format!("pilot bandwidth must resolve to a positive value, got {b}")));
    }
    Ok(b)
}

/// `Î_L = ∫ (f_b^{(L)})²` with `f_b^{(L)}(x) = (n b^{L+1})⁻¹ Σ H^{(L)}((x - X_i)/b)`,
/// evaluated by the exact pairwise identity
/// `Î_L = (n² b^{2L+1})⁻¹ Σ_{i,j} (-1)^L (H*H)^{(2L)}((X_i - X_j)/b)`.
pub fn hall_derivative_functional(sample: &SampleSet, cfg: &PluginConfig) -> Result<f64> {
    let b = pilot_bandwidth(sample, cfg)?;
    hall_functional_with_pilot(sample, b, cfg.order)
}

/// [`hall_derivative_functional`] with an explicit pilot bandwidth.
pub fn hall_functional_with_pilot(sample: &SampleSet, b: f64, order: usize) -> Result<f64> {
    check_bandwidth(b)?;
    let x = sample.as_slice();
    let n = x.len() as f64;
    let two_l = 2 * order;
    // (H*H)(d) = φ(d/√2)/√2 for Gaussian H, so its 2L-th derivative is
    // 2^{-(2L+1)/2} He_{2L}(z) φ(z), z = d/√2.
    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
    let pair = |d: f64| {
        let z = d / (std::f64::consts::SQRT_2 * b);
        hermite_he(two_l, z) * gauss(z)
    };
    let mut total = n * pair(0.0);
    for i in 0..x.len() {
        for &xj in &x[i + 1..] {
            let z = (xj - x[i]) / (std::f64::consts::SQRT_2 * b);
            if z * z > UNDERFLOW_U2 {
                break;
            }
            total += 2.0 * pair(xj - x[i]);
        }
    }
    let scale = std::f64::consts::SQRT_2.powi(-(two_l as i32 + 1));
    Ok(sign * scale * total / (n * n * b.powi(two_l as i32 + 1)))
}

/// `Î_L` by quadrature of the squared pilot derivative estimate; a check on
/// the pairwise identity.
pub fn hall_functional_by_quadrature(sample: &SampleSet, b: f64, order: usize) -> Result<f64> {
    check_bandwidth(b)?;
    let x = sample.as_slice();
    let n = x.len() as f64;
    let k = KernelSpec::GAUSSIAN;
    let deriv = |t: f64| {
        x.iter().map(|&xi| k.deriv(order, (t - xi) / b).unwrap_or(0.0)).sum::<f64>()
            / (n * b.powi(order as i32 + 1))
    };
    let panels = uniform_panels(sample.min() - 12.0 * b, sample.max() + 12.0 * b, 0.5 * b);
    Ok(adaptive_simpson_panels(|t| deriv(t).powi(2), &panels, &QuadConfig::with_rel_tol(1e-10))?.value)
}

/// `h = (R(K) / (2L C_L² I_L))^{1/(2L+1)} n^{-1/(2L+1)}` with `C_L = κ_L`.
pub fn plugin_bandwidth_from_functional(kernel: &KernelSpec, n: usize, i_l: f64) -> Result<f64> {
    if !(i_l > 0.0 && i_l.is_finite()) {
        return Err(Error::Estimation(format!(
            "derivative functional estimate must be positive, got {i_l}"
        )));
    }
    let l = kernel.order();
    let c_l = kernel.moment(l)?;
    let r_k = kernel.roughness(0)?;
    let p = 1.0 / (2 * l + 1) as f64;
    Ok((r_k / (2.0 * l as f64 * c_l * c_l * i_l)).powf(p) * (n as f64).powf(-p))
}

/// AMISE plug-in bandwidth with `Î_L` from [`hall_derivative_functional`].
pub fn plugin_bandwidth(sample: &SampleSet, cfg: &PluginConfig) -> Result<f64> {
    let i_l = hall_derivative_functional(sample, cfg)?;
    plugin_bandwidth_from_functional(&cfg.pilot_kernel, sample.len(), i_l)
}

/// `∫ f_h²` by quadrature of the KDE itself; test oracle for the identity.
pub fn kde_squared_integral_by_quadrature(sample: &SampleSet, h: f64) -> Result<f64> {
    let panels = uniform_panels(sample.min() - 12.0 * h, sample.max() + 12.0 * h, 0.5 * h);
    let q = adaptive_simpson_panels(
        |t| kde_eval(sample, h, t).map(|v| v * v).unwrap_or(f64::NAN),
        &panels,
        &QuadConfig::with_rel_tol(1e-12),
    )?;
    Ok(q.value)
}
