//! One-dimensional quadrature: adaptive Simpson over a panel partition and
//! the trapezoid rule on fixed grids.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances for adaptive Simpson integration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadConfig {
    /// Relative tolerance against the magnitude of the whole integral.
    pub rel_tol: f64,
    /// Absolute floor on the tolerance.
    pub abs_tol: f64,
    /// Maximum number of bisections of any initial panel.
    pub max_depth: u32,
}

impl Default for QuadConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_depth: 40,
        }
    }
}

impl QuadConfig {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol.is_finite()) || !(self.abs_tol >= 0.0) {
            return Err(Error::Config(format!(
                "quadrature tolerances must be positive (rel_tol={}, abs_tol={})",
                self.rel_tol, self.abs_tol
            )));
        }
        Ok(())
    }
}

/// Outcome of a converged quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    /// Sum of the Richardson error estimates of the accepted subintervals.
    pub error_bound: f64,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
}

const MIN_DEPTH: u32 = 2;

/// Adaptive Simpson on `[a, b]`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, cfg: &QuadConfig) -> Result<Quadrature> {
    adaptive_simpson_panels(f, &[(a, b)], cfg)
}

/// Adaptive Simpson over a set of disjoint panels `[a_k, b_k]`.
///
/// The tolerance budget `max(abs_tol, rel_tol * |I|)` is estimated from a
/// coarse Simpson pass and shared between panels in proportion to their
/// length. Each panel is bisected until the Richardson difference meets its
/// share or falls to rounding level. Exhausting `max_depth` on any panel is
/// reported as [`Error::Quadrature`] with the estimate reached so far.
pub fn adaptive_simpson_panels<F: Fn(f64) -> f64>(
    f: F,
    panels: &[(f64, f64)],
    cfg: &QuadConfig,
) -> Result<Quadrature> {
    cfg.validate()?;
    if panels
        .iter()
        .any(|&(a, b)| !a.is_finite() || !b.is_finite() || b < a)
    {
        return Err(Error::Parameter("panels must be finite with a <= b".into()));
    }
    let total_len: f64 = panels.iter().map(|&(a, b)| b - a).sum();
    if total_len == 0.0 {
        return Ok(Quadrature {
            value: 0.0,
            error_bound: 0.0,
            evaluations: 0,
        });
    }

    let mut evaluations = 0usize;
    let mut eval = |x: f64| {
        evaluations += 1;
        f(x)
    };

    let mut segments = Vec::with_capacity(panels.len());
    let mut coarse = 0.0;
    for &(a, b) in panels {
        if b == a {
            continue;
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (eval(a), eval(m), eval(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        coarse += whole.abs();
        segments.push(Segment {
            a,
            b,
            fa,
            fm,
            fb,
            whole,
            tol: 0.0,
            depth: 0,
        });
    }
    if !coarse.is_finite() {
        return Err(Error::Evaluation("integrand is not finite on the panel nodes".into()));
    }
    let budget = cfg.abs_tol.max(cfg.rel_tol * coarse);
    for s in &mut segments {
        s.tol = budget * (s.b - s.a) / total_len;
    }

    let mut value = 0.0;
    let mut error_bound = 0.0;
    let mut exhausted = false;
    let mut stack = segments;
    while let Some(s) = stack.pop() {
        let m = 0.5 * (s.a + s.b);
        let lm = 0.5 * (s.a + m);
        let rm = 0.5 * (m + s.b);
        let flm = eval(lm);
        let frm = eval(rm);
        let left = (m - s.a) / 6.0 * (s.fa + 4.0 * flm + s.fm);
        let right = (s.b - m) / 6.0 * (s.fm + 4.0 * frm + s.fb);
        let delta = left + right - s.whole;
        if !delta.is_finite() {
            return Err(Error::Evaluation(format!(
                "integrand is not finite near x = {m}"
            )));
        }
        let roundoff = 64.0 * f64::EPSILON * (left.abs() + right.abs());
        let accept = s.depth >= MIN_DEPTH && (delta.abs() <= 15.0 * s.tol || delta.abs() <= roundoff);
        if accept || s.depth >= cfg.max_depth {
            if !accept {
                exhausted = true;
            }
            value += left + right + delta / 15.0;
            error_bound += delta.abs() / 15.0;
            continue;
        }
        let tol = 0.5 * s.tol;
        let depth = s.depth + 1;
        stack.push(Segment {
            a: s.a,
            b: m,
            fa: s.fa,
            fm: flm,
            fb: s.fm,
            whole: left,
            tol,
            depth,
        });
        stack.push(Segment {
            a: m,
            b: s.b,
            fa: s.fm,
            fm: frm,
            fb: s.fb,
            whole: right,
            tol,
            depth,
        });
    }

    if exhausted {
        return Err(Error::Quadrature {
            estimate: value,
            error_bound,
        });
    }
    Ok(Quadrature {
        value,
        error_bound,
        evaluations,
    })
}

/// Splits `[a, b]` into equal panels of width at most `max_width`.
pub fn uniform_panels(a: f64, b: f64, max_width: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    push_uniform_panels(&mut out, a, b, max_width);
    out
}

pub(crate) fn push_uniform_panels(out: &mut Vec<(f64, f64)>, a: f64, b: f64, max_width: f64) {
    let count = (((b - a) / max_width).ceil() as usize).max(1);
    let step = (b - a) / count as f64;
    let node = |k: usize| if k == count { b } else { a + step * k as f64 };
    out.extend((0..count).map(|k| (node(k), node(k + 1))));
}

/// Trapezoid rule on an arbitrary increasing grid.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}
