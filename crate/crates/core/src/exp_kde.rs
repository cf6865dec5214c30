//! Kernel density estimates and the normalized exponentiated estimator.
//!
//! All kernel sums are taken with the argument `(x - X_i) / h` and are
//! accumulated relative to the nearest observation, so `log f_h(x)` stays
//! finite for tiny bandwidths and for `x` far outside the data.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{FRAC_1_SQRT_2PI, UNDERFLOW_U2};
use crate::quad::{adaptive_simpson_panels, push_uniform_panels, QuadConfig, Quadrature};

/// Immutable, sorted sample of finite observations (`n >= 2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SampleSet {
    obs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for SampleSet {
    type Error = Error;
    fn try_from(values: Vec<f64>) -> Result<Self> {
        SampleSet::new(values)
    }
}

impl From<SampleSet> for Vec<f64> {
    fn from(s: SampleSet) -> Self {
        s.obs
    }
}

impl SampleSet {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Sample(format!(
                "need at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Sample(format!(
                "observation {i} is not finite ({})",
                values[i]
            )));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { obs: values })
    }

    pub fn len(&self) -> usize {
        self.obs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.obs
    }

    pub fn min(&self) -> f64 {
        self.obs[0]
    }

    pub fn max(&self) -> f64 {
        self.obs[self.obs.len() - 1]
    }

    pub fn mean(&self) -> f64 {
        self.obs.iter().sum::<f64>() / self.len() as f64
    }

    /// Sample standard deviation (divisor `n - 1`).
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        let ss: f64 = self.obs.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (self.len() - 1) as f64).sqrt()
    }

    /// Type-7 (linear interpolation) sample quantile.
    pub fn quantile(&self, p: f64) -> f64 {
        quantile_sorted(&self.obs, p)
    }

    pub fn iqr(&self) -> f64 {
        self.quantile(0.75) - self.quantile(0.25)
    }

    /// `min(sd, IQR / 1.349)`, falling back to whichever is positive.
    pub fn robust_scale(&self) -> f64 {
        let sd = self.std_dev();
        let iqr = self.iqr() / 1.349;
        match (sd > 0.0, iqr > 0.0) {
            (true, true) => sd.min(iqr),
            (true, false) => sd,
            (false, true) => iqr,
            (false, false) => 0.0,
        }
    }

    pub fn shifted(&self, c: f64) -> Self {
        Self {
            obs: self.obs.iter().map(|v| v + c).collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Parameter(format!("scale factor must be positive, got {s}")));
        }
        Ok(Self {
            obs: self.obs.iter().map(|v| v * s).collect(),
        })
    }
}

/// Type-7 quantile of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty slice");
    let p = p.clamp(0.0, 1.0);
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

pub(crate) fn check_bandwidth(h: f64) -> Result<()> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("bandwidth must be positive and finite, got {h}")))
    }
}

pub(crate) fn check_exponent(w: f64) -> Result<()> {
    if w > 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("exponent w must be positive and finite, got {w}")))
    }
}

fn check_point(x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("evaluation point must be finite, got {x}")))
    }
}

/// Gaussian kernel sums at `x`, in ratio form:
/// `S0 = Σ K(u_i)`, `r1 = Σ K'(u_i) / S0`, `r2 = Σ K''(u_i) / S0`,
/// with `u_i = (x - X_i) / h`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelSums {
    pub log_s0: f64,
    pub r1: f64,
    pub r2: f64,
}

pub(crate) fn kernel_sums(obs: &[f64], h: f64, x: f64) -> KernelSums {
    let p = obs.partition_point(|&v| v < x);
    let d_left = if p > 0 { x - obs[p - 1] } else { f64::INFINITY };
    let d_right = if p < obs.len() { obs[p] - x } else { f64::INFINITY };
    let u_min = d_left.min(d_right) / h;
    let shift = 0.5 * u_min * u_min;
    let limit = u_min * u_min + UNDERFLOW_U2;

    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let mut add = |u: f64| {
        let e = (shift - 0.5 * u * u).exp();
        s0 += e;
        s1 -= u * e;
        s2 += (u * u - 1.0) * e;
    };
    for &v in obs[..p].iter().rev() {
        let u = (x - v) / h;
        if u * u > limit {
            break;
        }
        add(u);
    }
    for &v in &obs[p..] {
        let u = (x - v) / h;
        if u * u > limit {
            break;
        }
        add(u);
    }
    KernelSums {
        log_s0: s0.ln() - shift + FRAC_1_SQRT_2PI.ln(),
        r1: s1 / s0,
        r2: s2 / s0,
    }
}

/// `f_h(x) = (1/nh) Σ K((x - X_i)/h)`.
pub fn kde_eval(sample: &SampleSet, h: f64, x: f64) -> Result<f64> {
    Ok(log_kde(sample, h, x)?.exp())
}

/// `log f_h(x)`, computed without forming `f_h` first.
pub fn log_kde(sample: &SampleSet, h: f64, x: f64) -> Result<f64> {
    check_bandwidth(h)?;
    check_point(x)?;
    let s = kernel_sums(sample.as_slice(), h, x);
    Ok(s.log_s0 - (sample.len() as f64 * h).ln())
}

/// `w · log f_h(x)`.
pub fn log_unnormalized(sample: &SampleSet, h: f64, w: f64, x: f64) -> Result<f64> {
    check_exponent(w)?;
    Ok(w * log_kde(sample, h, x)?)
}

/// First and second derivatives of `w · log f_h` at `x`:
/// `d1 = (w/h) S1/S0`, `d2 = (w/h²) (S2/S0 - (S1/S0)²)`.
pub fn dlog_density(sample: &SampleSet, h: f64, w: f64, x: f64) -> Result<(f64, f64)> {
    check_bandwidth(h)?;
    check_exponent(w)?;
    check_point(x)?;
    let s = kernel_sums(sample.as_slice(), h, x);
    let d1 = w / h * s.r1;
    let d2 = w / (h * h) * (s.r2 - s.r1 * s.r1);
    if !(d1.is_finite() && d2.is_finite()) {
        return Err(Error::Evaluation(format!("log-density derivatives degenerate at x = {x}")));
    }
    Ok((d1, d2))
}

/// `(f_h, f_h', f_h'')` at `x`.
pub fn kde_derivs(sample: &SampleSet, h: f64, x: f64) -> Result<(f64, f64, f64)> {
    check_bandwidth(h)?;
    check_point(x)?;
    let s = kernel_sums(sample.as_slice(), h, x);
    let g = (s.log_s0 - (sample.len() as f64 * h).ln()).exp();
    Ok((g, g * s.r1 / h, g * s.r2 / (h * h)))
}

/// Panels covering `∪ [X_i - pad, X_i + pad]`, `pad = max(8h, 8h/√w)`, with
/// widths no larger than the local length scale `h / max(1, √w)`.
fn normalizer_panels(obs: &[f64], h: f64, w: f64) -> Vec<(f64, f64)> {
    let pad = (8.0 * h).max(8.0 * h / w.sqrt());
    let width = h / w.sqrt().max(1.0);
    let mut panels = Vec::new();
    let mut lo = obs[0] - pad;
    let mut hi = obs[0] + pad;
    for &v in &obs[1..] {
        if v - pad > hi {
            push_uniform_panels(&mut panels, lo, hi, width);
            lo = v - pad;
        }
        hi = v + pad;
    }
    push_uniform_panels(&mut panels, lo, hi, width);
    panels
}

/// Log of the upper bound `K(0)/h` on `f_h`, used to scale the integrand.
fn log_peak_bound(h: f64) -> f64 {
    (FRAC_1_SQRT_2PI / h).ln()
}

/// `∫ f_h(t)^w dt` by adaptive Simpson, as a raw quadrature on the scaled
/// integrand `(f_h(t) h / K(0))^w`.
fn scaled_normalizer(sample: &SampleSet, h: f64, w: f64, cfg: &QuadConfig) -> Result<Quadrature> {
    check_bandwidth(h)?;
    check_exponent(w)?;
    let obs = sample.as_slice();
    let log_nh = (sample.len() as f64 * h).ln();
    let peak = log_peak_bound(h);
    let panels = normalizer_panels(obs, h, w);
    let integrand = |t: f64| {
        let s = kernel_sums(obs, h, t);
        (w * (s.log_s0 - log_nh - peak)).exp()
    };
    adaptive_simpson_panels(integrand, &panels, cfg).map_err(|e| match e {
        Error::Quadrature {
            estimate,
            error_bound,
        } => {
            let scale = (w * peak).exp();
            Error::Quadrature {
                estimate: estimate * scale,
                error_bound: error_bound * scale,
            }
        }
        other => other,
    })
}

/// `log Z` with `Z = ∫ f_h(t)^w dt`.
pub fn log_normalizer(sample: &SampleSet, h: f64, w: f64, cfg: &QuadConfig) -> Result<f64> {
    let q = scaled_normalizer(sample, h, w, cfg)?;
    if !(q.value > 0.0) {
        return Err(Error::Evaluation(format!(
            "normalizing constant is not positive (h = {h}, w = {w})"
        )));
    }
    Ok(q.value.ln() + w * log_peak_bound(h))
}

/// `Z = ∫ f_h(t)^w dt`.
pub fn normalizer(sample: &SampleSet, h: f64, w: f64, cfg: &QuadConfig) -> Result<f64> {
    Ok(log_normalizer(sample, h, w, cfg)?.exp())
}

/// Density and its first two derivatives at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityDerivs {
    pub f: f64,
    pub f1: f64,
    pub f2: f64,
}

/// The normalized exponentiated KDE `f_h(x)^w / Z`.
#[derive(Debug, Clone)]
pub struct ExpKdeModel {
    sample: Arc<SampleSet>,
    h: f64,
    w: f64,
    log_z: f64,
    quad_cfg: QuadConfig,
}

impl ExpKdeModel {
    /// Builds the model and computes its normalizing constant.
    pub fn fit(sample: impl Into<Arc<SampleSet>>, h: f64, w: f64, quad_cfg: QuadConfig) -> Result<Self> {
        let sample = sample.into();
        let log_z = log_normalizer(&sample, h, w, &quad_cfg)?;
        Ok(Self {
            sample,
            h,
            w,
            log_z,
            quad_cfg,
        })
    }

    /// The plain KDE (`w = 1`); `Z` is still integrated numerically.
    pub fn kde(sample: impl Into<Arc<SampleSet>>, h: f64) -> Result<Self> {
        Self::fit(sample, h, 1.0, QuadConfig::default())
    }

    pub fn sample(&self) -> &SampleSet {
        &self.sample
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn exponent(&self) -> f64 {
        self.w
    }

    pub fn normalizer(&self) -> f64 {
        self.log_z.exp()
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_z
    }

    pub fn quad_config(&self) -> &QuadConfig {
        &self.quad_cfg
    }

    /// `log f_{w,h}(x)`; NaN for non-finite `x`.
    pub fn log_density(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NAN;
        }
        let s = kernel_sums(self.sample.as_slice(), self.h, x);
        self.w * (s.log_s0 - (self.sample.len() as f64 * self.h).ln()) - self.log_z
    }

    pub fn density(&self, x: f64) -> f64 {
        self.log_density(x).exp()
    }

    /// `(f, f', f'')` of the normalized density by the chain rule on
    /// `g^w / Z`.
    pub fn density_derivs(&self, x: f64) -> DensityDerivs {
        if !x.is_finite() {
            return DensityDerivs {
                f: f64::NAN,
                f1: f64::NAN,
                f2: f64::NAN,
            };
        }
        let (h, w) = (self.h, self.w);
        let s = kernel_sums(self.sample.as_slice(), h, x);
        let f = (w * (s.log_s0 - (self.sample.len() as f64 * h).ln()) - self.log_z).exp();
        // g'/g = r1/h and g''/g = r2/h²
        let f1 = f * w * s.r1 / h;
        let f2 = f * (w * (w - 1.0) * s.r1 * s.r1 + w * s.r2) / (h * h);
        DensityDerivs { f, f1, f2 }
    }

    /// Derivatives of `log f_{w,h}`; the normalizer drops out.
    pub fn dlog_density(&self, x: f64) -> Result<(f64, f64)> {
        dlog_density(&self.sample, self.h, self.w, x)
    }
}
