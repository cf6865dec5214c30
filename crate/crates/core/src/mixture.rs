//! Gaussian mixture ground truths with analytic derivatives, samplers and
//! the five benchmark scenarios.
//!
//! Every component is parameterized by its standard deviation `sd`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_kde::SampleSet;
use crate::hermite::hermite_he_into;
use crate::kernel::FRAC_1_SQRT_2PI;

/// Highest derivative order served by [`GaussianMixture::pdf_deriv`].
pub const MAX_DERIV_ORDER: usize = 6;

/// Highest order served by [`GaussianMixture::deriv_ratios`].
pub const MAX_RATIO_ORDER: usize = 8;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: f64,
    pub sd: f64,
}

/// Finite Gaussian mixture `Σ_j m_j N(μ_j, σ_j²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MixtureSpec", into = "MixtureSpec")]
pub struct GaussianMixture {
    components: Vec<Component>,
}

/// Serialized form: `{"components": [{"weight", "mean", "sd"}, ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub components: Vec<Component>,
}

impl TryFrom<MixtureSpec> for GaussianMixture {
    type Error = Error;
    fn try_from(spec: MixtureSpec) -> Result<Self> {
        GaussianMixture::new(spec.components)
    }
}

impl From<GaussianMixture> for MixtureSpec {
    fn from(m: GaussianMixture) -> Self {
        MixtureSpec {
            components: m.components,
        }
    }
}

impl GaussianMixture {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Parameter("mixture needs at least one component".into()));
        }
        for (j, c) in components.iter().enumerate() {
            if !(c.weight > 0.0 && c.weight.is_finite()) {
                return Err(Error::Parameter(format!("component {j}: weight must be positive, got {}", c.weight)));
            }
            if !c.mean.is_finite() {
                return Err(Error::Parameter(format!("component {j}: mean must be finite, got {}", c.mean)));
            }
            if !(c.sd > 0.0 && c.sd.is_finite()) {
                return Err(Error::Parameter(format!("component {j}: sd must be positive, got {}", c.sd)));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Parameter(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { components })
    }

    /// `N(mean, sd²)` as a one-component mixture.
    pub fn normal(mean: f64, sd: f64) -> Result<Self> {
        Self::new(vec![Component { weight: 1.0, mean, sd }])
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid mixture JSON: {e}")))
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|c| {
                let z = (x - c.mean) / c.sd;
                c.weight * FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / c.sd
            })
            .sum()
    }

    /// `log f(x)`, finite far into the tails.
    pub fn log_pdf(&self, x: f64) -> f64 {
        let logs: Vec<f64> = self.components.iter().map(|c| component_log_pdf(c, x)).collect();
        log_sum_exp(&logs)
    }

    /// `f^{(order)}(x)`, using `d^k/dx^k φ_σ(x - μ) = (-1)^k σ^{-k} He_k(z) φ(z) / σ`.
    pub fn pdf_deriv(&self, x: f64, order: usize) -> Result<f64> {
        if order > MAX_DERIV_ORDER {
            return Err(Error::Parameter(format!(
                "derivative order {order} exceeds {MAX_DERIV_ORDER}"
            )));
        }
        let mut he = [0.0; MAX_DERIV_ORDER + 1];
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        Ok(self
            .components
            .iter()
            .map(|c| {
                let z = (x - c.mean) / c.sd;
                hermite_he_into(z, &mut he[..=order]);
                c.weight * sign * he[order] * FRAC_1_SQRT_2PI * (-0.5 * z * z).exp() / c.sd.powi(order as i32 + 1)
            })
            .sum())
    }

    /// Ratios `r_k = f^{(k)}(x) / f(x)` for `k = 0..=max_order` (so `r_0 = 1`),
    /// computed with normalized log weights so they stay accurate where `f`
    /// itself underflows.
    pub fn deriv_ratios(&self, x: f64, max_order: usize) -> Result<Vec<f64>> {
        if max_order > MAX_RATIO_ORDER {
            return Err(Error::Parameter(format!(
                "ratio order {max_order} exceeds {MAX_RATIO_ORDER}"
            )));
        }
        let logs: Vec<f64> = self.components.iter().map(|c| component_log_pdf(c, x)).collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut out = vec![0.0; max_order + 1];
        let mut he = [0.0; MAX_RATIO_ORDER + 1];
        for (c, wt) in self.components.iter().zip(&weights) {
            let z = (x - c.mean) / c.sd;
            hermite_he_into(z, &mut he[..=max_order]);
            let mut scale = 1.0;
            for (k, r) in out.iter_mut().enumerate() {
                *r += wt * scale * he[k];
                scale *= -1.0 / c.sd;
            }
        }
        for r in &mut out {
            *r /= total;
        }
        Ok(out)
    }

    /// Score `f'(x) / f(x)`.
    pub fn score(&self, x: f64) -> f64 {
        self.deriv_ratios(x, 1).map(|r| r[1]).unwrap_or(f64::NAN)
    }

    pub fn mean(&self) -> f64 {
        self.components.iter().map(|c| c.weight * c.mean).sum()
    }

    pub fn std_dev(&self) -> f64 {
        let mu = self.mean();
        self.components
            .iter()
            .map(|c| c.weight * (c.sd * c.sd + (c.mean - mu).powi(2)))
            .sum::<f64>()
            .sqrt()
    }

    /// `[min_j(μ_j - k σ_j), max_j(μ_j + k σ_j)]`.
    pub fn support_range(&self, k: f64) -> (f64, f64) {
        let lo = self.components.iter().map(|c| c.mean - k * c.sd).fold(f64::INFINITY, f64::min);
        let hi = self.components.iter().map(|c| c.mean + k * c.sd).fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }

    /// `max_j |μ_j| + 8 max_j σ_j`.
    pub fn default_truncation(&self) -> f64 {
        let m = self.components.iter().map(|c| c.mean.abs()).fold(0.0, f64::max);
        let s = self.components.iter().map(|c| c.sd).fold(0.0, f64::max);
        m + 8.0 * s
    }

    /// Draws `n` values: a categorical component choice, then a normal draw.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let mut cum = Vec::with_capacity(self.components.len());
        let mut acc = 0.0;
        for c in &self.components {
            acc += c.weight;
            cum.push(acc);
        }
        (0..n)
            .map(|_| {
                let u: f64 = rng.random::<f64>() * acc;
                let j = cum.partition_point(|&c| c <= u).min(self.components.len() - 1);
                let c = &self.components[j];
                let z: f64 = rng.sample(StandardNormal);
                c.mean + c.sd * z
            })
            .collect()
    }

    /// Seeded sample of size `n >= 2`.
    pub fn sample(&self, seed: u64, n: usize) -> Result<SampleSet> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        SampleSet::new(self.draw(&mut rng, n))
    }
}

fn component_log_pdf(c: &Component, x: f64) -> f64 {
    let z = (x - c.mean) / c.sd;
    c.weight.ln() + FRAC_1_SQRT_2PI.ln() - c.sd.ln() - 0.5 * z * z
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let top = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return top;
    }
    top + v.iter().map(|l| (l - top).exp()).sum::<f64>().ln()
}

/// The five benchmark densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Bimodal,
    Trimodal,
    Claw,
    Skewed,
    Outlier,
}

impl Scenario {
    pub const ALL: [Scenario; 5] = [
        Scenario::Bimodal,
        Scenario::Trimodal,
        Scenario::Claw,
        Scenario::Skewed,
        Scenario::Outlier,
    ];

    pub fn all() -> &'static [Scenario] {
        &Self::ALL
    }

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Bimodal => "bimodal",
            Scenario::Trimodal => "trimodal",
            Scenario::Claw => "claw",
            Scenario::Skewed => "skewed",
            Scenario::Outlier => "outlier",
        }
    }

    pub fn numeral(self) -> &'static str {
        match self {
            Scenario::Bimodal => "i",
            Scenario::Trimodal => "ii",
            Scenario::Claw => "iii",
            Scenario::Skewed => "iv",
            Scenario::Outlier => "v",
        }
    }

    /// Row label such as `(i) Bimodal`.
    pub fn label(self) -> String {
        let name = self.name();
        format!("({}) {}{}", self.numeral(), name[..1].to_uppercase(), &name[1..])
    }

    pub fn preset(self) -> GaussianMixture {
        let c = |weight: f64, mean: f64, sd: f64| Component { weight, mean, sd };
        let components = match self {
            Scenario::Bimodal => vec![c(0.5, -1.5, 0.5), c(0.5, 1.5, 0.5)],
            Scenario::Trimodal => vec![c(0.45, -1.2, 0.6), c(0.1, 0.0, 0.25), c(0.45, 1.2, 0.6)],
            Scenario::Claw => {
                let mut v = vec![c(0.5, 0.0, 1.0)];
                v.extend((0..5).map(|l| c(0.1, l as f64 / 2.0 - 1.0, 0.1)));
                v
            }
            Scenario::Skewed => (0..8)
                .map(|j| {
                    let sd = (2.0f64 / 3.0).powi(j);
                    c(1.0 / 8.0, 3.0 * (sd - 1.0), sd)
                })
                .collect(),
            Scenario::Outlier => vec![c(0.1, 0.0, 1.0), c(0.9, 0.0, 0.1)],
        };
        GaussianMixture::new(components).expect("preset parameters are valid")
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scenario {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        Scenario::ALL
            .iter()
            .copied()
            .find(|sc| sc.name() == key || sc.numeral() == key)
            .ok_or_else(|| {
                let names: Vec<&str> = Scenario::ALL.iter().map(|s| s.name()).collect();
                Error::Config(format!("unknown scenario '{s}'; valid names: {}", names.join(", ")))
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{adaptive_simpson_panels, uniform_panels, QuadConfig};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn standard_normal_and_bimodal_values() {
        let n = GaussianMixture::normal(0.0, 1.0).unwrap();
        assert!((n.pdf(0.0) - 0.3989423).abs() < 1e-7);
        let b = Scenario::Bimodal.preset();
        assert!((b.pdf(0.0) - 0.0088637).abs() < 1e-7);
        assert!((b.log_pdf(0.0) - b.pdf(0.0).ln()).abs() < 1e-12);
        assert!(n.log_pdf(60.0).is_finite());
    }

    #[test]
    fn validation() {
        let c = |weight, mean, sd| Component { weight, mean, sd };
        assert!(GaussianMixture::new(vec![]).is_err());
        assert!(GaussianMixture::new(vec![c(0.5, 0.0, 1.0)]).is_err());
        assert!(GaussianMixture::new(vec![c(1.0, 0.0, 0.0)]).is_err());
        assert!(GaussianMixture::new(vec![c(1.0, f64::NAN, 1.0)]).is_err());
        assert!(GaussianMixture::new(vec![c(-0.5, 0.0, 1.0), c(1.5, 0.0, 1.0)]).is_err());
        assert!(GaussianMixture::normal(0.0, 1.0).unwrap().pdf_deriv(0.0, 7).is_err());
    }

    #[test]
    fn presets_match_definitions() {
        for sc in Scenario::all() {
            let m = sc.preset();
            let total: f64 = m.components().iter().map(|c| c.weight).sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
        let claw = Scenario::Claw.preset();
        assert_eq!(claw.components().len(), 6);
        assert_eq!(claw.components()[0].weight, 0.5);
        assert!(claw.components()[1..].iter().all(|c| c.weight == 0.1 && c.sd == 0.1));
        let out = Scenario::Outlier.preset();
        assert_eq!(out.components()[1], Component { weight: 0.9, mean: 0.0, sd: 0.1 });
        let sk = Scenario::Skewed.preset();
        assert_eq!(sk.components().len(), 8);
        assert!((sk.components()[7].sd - (2.0f64 / 3.0).powi(7)).abs() < 1e-15);
        assert_eq!(Scenario::Trimodal.preset().components().len(), 3);
    }

    #[test]
    fn presets_integrate_to_one() {
        for sc in Scenario::all() {
            let m = sc.preset();
            let (lo, hi) = m.support_range(12.0);
            let min_sd = m.components().iter().map(|c| c.sd).fold(f64::INFINITY, f64::min);
            let panels = uniform_panels(lo, hi, min_sd);
            let q = adaptive_simpson_panels(|x| m.pdf(x), &panels, &QuadConfig::with_rel_tol(1e-12)).unwrap();
            assert!((q.value - 1.0).abs() < 1e-8, "{sc}: {}", q.value);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for sc in Scenario::all() {
            let m = sc.preset();
            let (lo, hi) = m.support_range(3.0);
            let min_sd = m.components().iter().map(|c| c.sd).fold(f64::INFINITY, f64::min);
            let eps = 1e-3 * min_sd;
            for _ in 0..25 {
                let x = rng.random_range(lo..hi);
                for k in 1..=MAX_DERIV_ORDER {
                    // fourth-order central stencil on the (k-1)-th derivative
                    let g = |t: f64| m.pdf_deriv(t, k - 1).unwrap();
                    let fd = (g(x - 2.0 * eps) - 8.0 * g(x - eps) + 8.0 * g(x + eps) - g(x + 2.0 * eps)) / (12.0 * eps);
                    let an = m.pdf_deriv(x, k).unwrap();
                    assert!((fd - an).abs() <= 1e-6 * an.abs() + 1e-9, "{sc} k={k} x={x}: {fd} vs {an}");
                }
            }
        }
        let n = GaussianMixture::normal(0.3, 1.0).unwrap();
        let fd = (n.pdf(1.0 + 1e-5) - n.pdf(1.0 - 1e-5)) / 2e-5;
        assert!((fd - n.pdf_deriv(1.0, 1).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn ratios_agree_with_direct_derivatives() {
        for sc in Scenario::all() {
            let m = sc.preset();
            for &x in &[-2.0, -0.3, 0.0, 0.7, 1.9] {
                let r = m.deriv_ratios(x, 6).unwrap();
                let f = m.pdf(x);
                assert_eq!(r[0], 1.0);
                for k in 1..=6 {
                    let d = m.pdf_deriv(x, k).unwrap();
                    assert!((r[k] * f - d).abs() <= 1e-10 * d.abs().max(f), "{sc} k={k}");
                }
            }
        }
        // far tail: the ratio stays finite although f underflows
        let n = GaussianMixture::normal(0.0, 1.0).unwrap();
        let r = n.deriv_ratios(50.0, 2).unwrap();
        assert!((r[1] + 50.0).abs() < 1e-9 && (r[2] - 2499.0).abs() < 1e-6);
        assert!((n.score(2.0) + 2.0).abs() < 1e-14);
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let b = Scenario::Bimodal.preset();
        let s1 = b.sample(42, 1000).unwrap();
        assert_eq!(s1, b.sample(42, 1000).unwrap());
        assert_ne!(s1, b.sample(43, 1000).unwrap());
        let s = b.sample(7, 100_000).unwrap();
        let se = b.std_dev() / (1e5f64).sqrt();
        assert!(s.mean().abs() < 3.0 * se);
        let one = GaussianMixture::normal(2.0, 0.5).unwrap();
        let s = one.sample(8, 100_000).unwrap();
        // SE of the sample SD for normal data is σ/√(2(n-1))
        let se_sd = 0.5 / (2.0 * (1e5 - 1.0f64)).sqrt();
        assert!((s.std_dev() - 0.5).abs() < 3.0 * se_sd);
        assert!((s.mean() - 2.0).abs() < 3.0 * 0.5 / (1e5f64).sqrt());
        assert!(one.sample(1, 1).is_err());
    }

    #[test]
    fn outlier_component_proportions() {
        let m = Scenario::Outlier.preset();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = m.draw(&mut rng, 20_000);
        let wide = x.iter().filter(|v| v.abs() > 0.6).count() as f64 / 20_000.0;
        // P(|Z| > 0.6) = 0.5485 for the wide component, ~0 for the narrow one
        assert!((wide - 0.1 * 0.5485).abs() < 0.006, "{wide}");
    }

    #[test]
    fn scenario_names_and_json() {
        assert_eq!("Bimodal".parse::<Scenario>().unwrap(), Scenario::Bimodal);
        assert_eq!("iv".parse::<Scenario>().unwrap(), Scenario::Skewed);
        let err = "nope".parse::<Scenario>().unwrap_err();
        assert!(err.to_string().contains("bimodal, trimodal, claw, skewed, outlier"));
        assert_eq!(Scenario::Outlier.label(), "(v) Outlier");
        let m = Scenario::Trimodal.preset();
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.starts_with("{\"components\":[{\"weight\":0.45,\"mean\":-1.2,\"sd\":0.6}"));
        assert_eq!(GaussianMixture::from_json(&text).unwrap(), m);
        assert!(GaussianMixture::from_json(r#"{"components":[{"weight":0.4,"mean":0,"sd":1}]}"#).is_err());
    }
}
