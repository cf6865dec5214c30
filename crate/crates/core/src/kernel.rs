//! Smoothing kernels.
//!
//! Moments use the normalization `κ_l = (1/l!) ∫ u^l K(u) du`, the same
//! scaling as the constant `C_L` of the AMISE plug-in rule. Every asymptotic
//! constant in [`crate::theory`] is expressed through this `κ_l`; with it the
//! standard normal truth gives `(C(B,1), C(B,L), C(B,2L)) = (1, -2, 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{double_factorial_odd, factorial, hermite_he};
use crate::quad::{adaptive_simpson_panels, uniform_panels, QuadConfig};

/// `1 / sqrt(2π)`.
pub const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Squared kernel arguments beyond this make `exp(-u²/2)` underflow to zero.
pub(crate) const UNDERFLOW_U2: f64 = 1490.0;

/// Standard normal density.
#[inline]
pub(crate) fn gauss(u: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * u * u).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    #[default]
    Gaussian,
}

/// A symmetric kernel of order `L`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub struct KernelSpec {
    pub family: KernelFamily,
}

fn check_finite(u: f64) -> Result<()> {
    if u.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("kernel argument must be finite, got {u}")))
    }
}

impl KernelSpec {
    pub const GAUSSIAN: KernelSpec = KernelSpec {
        family: KernelFamily::Gaussian,
    };

    /// Order `L`: the first nonvanishing moment beyond the zeroth.
    pub fn order(&self) -> usize {
        match self.family {
            KernelFamily::Gaussian => 2,
        }
    }

    pub fn eval(&self, u: f64) -> Result<f64> {
        check_finite(u)?;
        Ok(match self.family {
            KernelFamily::Gaussian => gauss(u),
        })
    }

    pub fn deriv1(&self, u: f64) -> Result<f64> {
        check_finite(u)?;
        Ok(match self.family {
            KernelFamily::Gaussian => -u * gauss(u),
        })
    }

    pub fn deriv2(&self, u: f64) -> Result<f64> {
        check_finite(u)?;
        Ok(match self.family {
            KernelFamily::Gaussian => (u * u - 1.0) * gauss(u),
        })
    }

    /// k-th derivative of the kernel at `u`.
    pub fn deriv(&self, k: usize, u: f64) -> Result<f64> {
        check_finite(u)?;
        Ok(match self.family {
            KernelFamily::Gaussian => {
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                sign * hermite_he(k, u) * gauss(u)
            }
        })
    }

    /// `K(0)`, the self-term in leave-one-in kernel sums.
    pub fn value_at_zero(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => FRAC_1_SQRT_2PI,
        }
    }

    /// `κ_l = (1/l!) ∫ u^l K(u) du` for `l <= 2L + 2`.
    pub fn moment(&self, l: usize) -> Result<f64> {
        self.check_moment_order(l)?;
        Ok(self.raw_moment(l) / factorial(l))
    }

    /// `∫ u^l K(u) du`, without the factorial.
    pub fn raw_moment(&self, l: usize) -> f64 {
        match self.family {
            KernelFamily::Gaussian => {
                if l % 2 == 1 {
                    0.0
                } else {
                    double_factorial_odd(l / 2)
                }
            }
        }
    }

    /// `κ_l` by adaptive Simpson on `[-12, 12]`, relative tolerance 1e-10.
    pub fn moment_by_quadrature(&self, l: usize) -> Result<f64> {
        self.check_moment_order(l)?;
        let raw = self.integrate(|u| u.powi(l as i32) * self.eval(u).unwrap_or(0.0))?;
        Ok(raw / factorial(l))
    }

    /// Roughness `R(K^{(k)}) = ∫ (K^{(k)})²`. `k = 0` gives `R(K)`, `k = 1`
    /// gives `R(K')`.
    pub fn roughness(&self, derivative_order: usize) -> Result<f64> {
        if derivative_order > 8 {
            return Err(Error::Parameter(format!(
                "roughness is provided for derivative orders up to 8, got {derivative_order}"
            )));
        }
        Ok(match self.family {
            // ∫(φ^{(k)})² = (2k)! / (2^{2k+1} k! √π)
            KernelFamily::Gaussian => {
                let k = derivative_order;
                factorial(2 * k) / (2f64.powi(2 * k as i32 + 1) * factorial(k) * std::f64::consts::PI.sqrt())
            }
        })
    }

    pub fn roughness_by_quadrature(&self, derivative_order: usize) -> Result<f64> {
        self.integrate(|u| self.deriv(derivative_order, u).map(|v| v * v).unwrap_or(0.0))
    }

    fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let panels = uniform_panels(-12.0, 12.0, 1.0);
        Ok(adaptive_simpson_panels(f, &panels, &QuadConfig::with_rel_tol(1e-10))?.value)
    }

    fn check_moment_order(&self, l: usize) -> Result<()> {
        let max = 2 * self.order() + 2;
        if l > max {
            return Err(Error::Parameter(format!(
                "kernel moments are defined up to order {max}, got {l}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: KernelSpec = KernelSpec::GAUSSIAN;

    #[test]
    fn values_at_reference_points() {
        assert!((K.eval(0.0).unwrap() - 0.3989423).abs() < 1e-7);
        assert_eq!(K.deriv1(0.0).unwrap(), 0.0);
        assert!(K.deriv2(-1.0).unwrap().abs() < 1e-16);
        assert_eq!(K.value_at_zero(), K.eval(0.0).unwrap());
    }

    #[test]
    fn rejects_non_finite_arguments() {
        assert!(matches!(K.eval(f64::NAN), Err(Error::Domain(_))));
        assert!(matches!(K.deriv1(f64::INFINITY), Err(Error::Domain(_))));
        assert!(matches!(K.deriv2(f64::NEG_INFINITY), Err(Error::Domain(_))));
    }

    #[test]
    fn moments_match_quadrature() {
        assert_eq!(K.moment(0).unwrap(), 1.0);
        assert_eq!(K.moment(1).unwrap(), 0.0);
        assert!((K.moment(2).unwrap() - 0.5).abs() < 1e-15);
        for l in 0..=6 {
            let closed = K.moment(l).unwrap();
            let quad = K.moment_by_quadrature(l).unwrap();
            assert!((closed - quad).abs() < 1e-10 * closed.abs().max(1.0), "l={l}");
        }
        assert!(K.moment(7).is_err());
    }

    #[test]
    fn order_definition_holds() {
        let l = K.order();
        for j in 1..l {
            assert_eq!(K.moment(j).unwrap(), 0.0);
        }
        assert!(K.moment(l).unwrap() != 0.0);
    }

    #[test]
    fn roughness_values() {
        let r0 = K.roughness(0).unwrap();
        let r1 = K.roughness(1).unwrap();
        assert!((r0 - 0.2820948).abs() < 1e-7);
        assert!((r1 - 0.1410474).abs() < 1e-7);
        for k in 0..=4 {
            let q = K.roughness_by_quadrature(k).unwrap();
            assert!((K.roughness(k).unwrap() - q).abs() < 1e-10, "k={k}");
        }
    }

    #[test]
    fn unit_mass_by_quadrature() {
        let panels = uniform_panels(-10.0, 10.0, 1.0);
        let q = adaptive_simpson_panels(|u| K.eval(u).unwrap(), &panels, &QuadConfig::default()).unwrap();
        assert!((q.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn evenness_and_finite_differences() {
        let eps = 1e-5;
        for i in 0..=200 {
            let u = -5.0 + 0.05 * i as f64;
            assert_eq!(K.eval(u).unwrap(), K.eval(-u).unwrap());
            assert_eq!(K.deriv1(u).unwrap(), -K.deriv1(-u).unwrap());
            let fd1 = (K.eval(u + eps).unwrap() - K.eval(u - eps).unwrap()) / (2.0 * eps);
            assert!((K.deriv1(u).unwrap() - fd1).abs() < 1e-6);
            let fd2 = (K.deriv1(u + eps).unwrap() - K.deriv1(u - eps).unwrap()) / (2.0 * eps);
            assert!((K.deriv2(u).unwrap() - fd2).abs() < 1e-6);
            let fd2_values =
                (K.eval(u + eps).unwrap() - 2.0 * K.eval(u).unwrap() + K.eval(u - eps).unwrap()) / (eps * eps);
            assert!((K.deriv2(u).unwrap() - fd2_values).abs() < 1e-5);
        }
    }
}
