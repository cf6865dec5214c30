//! Empirical Hyvärinen score of the exponentiated KDE and the `(w, h)` tuner.
//!
//! For observation `X_i` the score uses leave-one-in kernel sums, with the
//! self-term `K(0)` kept in the denominator:
//!
//! ```text
//! H_i = 2w (h⁻² Σ_{j≠i} K''_ij) / (K(0) + Σ_{j≠i} K_ij)
//!     + (w² - 2w) (h⁻¹ Σ_{j≠i} K'_ij)² / (K(0) + Σ_{j≠i} K_ij)²
//! ```
//!
//! with `K_ij = K((X_i - X_j)/h)`. For a fixed `h` the mean score is a
//! quadratic in `w`, so one `O(n²)` pass per bandwidth serves every `w`.

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exp_kde::{check_bandwidth, check_exponent, SampleSet};
use crate::kernel::{gauss, FRAC_1_SQRT_2PI, UNDERFLOW_U2};
use crate::optim::{golden_section, nelder_mead, NelderMeadOptions};

/// Mean curvature and squared-slope terms of the score at one bandwidth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreProfile {
    pub h: f64,
    /// `(1/n) Σ_i h⁻² S2_i / S0_i`
    pub curvature: f64,
    /// `(1/n) Σ_i (h⁻¹ S1_i / S0_i)²`
    pub slope_sq: f64,
}

impl ScoreProfile {
    /// Mean H-score at exponent `w`.
    pub fn objective(&self, w: f64) -> f64 {
        2.0 * w * self.curvature + (w * w - 2.0 * w) * self.slope_sq
    }

    /// Unconstrained minimizer in `w`, `1 - curvature / slope_sq`, when the
    /// quadratic is convex.
    pub fn best_exponent(&self) -> Option<f64> {
        (self.slope_sq > 0.0).then(|| 1.0 - self.curvature / self.slope_sq)
    }
}

/// One `O(n²)` pass over all pairs at bandwidth `h`.
pub fn score_profile(sample: &SampleSet, h: f64) -> Result<ScoreProfile> {
    check_bandwidth(h)?;
    let x = sample.as_slice();
    let n = x.len();
    // sums are kept in units of 1/sqrt(2π); ratios are unaffected
    let mut s0 = vec![1.0; n];
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![0.0; n];
    for i in 0..n {
        for j in i + 1..n {
            let u = (x[i] - x[j]) / h;
            let u2 = u * u;
            if u2 > UNDERFLOW_U2 {
                break;
            }
            let k = (-0.5 * u2).exp();
            // K'(u) = -u K(u) is odd, K''(u) = (u² - 1) K(u) is even
            let k1 = -u * k;
            let k2 = (u2 - 1.0) * k;
            s0[i] += k;
            s0[j] += k;
            s1[i] += k1;
            s1[j] -= k1;
            s2[i] += k2;
            s2[j] += k2;
        }
    }
    let (mut curvature, mut slope_sq) = (0.0, 0.0);
    for i in 0..n {
        curvature += s2[i] / s0[i];
        let r = s1[i] / s0[i];
        slope_sq += r * r;
    }
    let nf = n as f64;
    Ok(ScoreProfile {
        h,
        curvature: curvature / (nf * h * h),
        slope_sq: slope_sq / (nf * h * h),
    })
}

/// `H(X_i; f_{w,h})` for a single observation.
pub fn hscore_point(sample: &SampleSet, i: usize, w: f64, h: f64) -> Result<f64> {
    check_bandwidth(h)?;
    check_exponent(w)?;
    let x = sample.as_slice();
    if i >= x.len() {
        return Err(Error::Parameter(format!(
            "index {i} out of range for a sample of size {}",
            x.len()
        )));
    }
    let (mut s0, mut s1, mut s2) = (FRAC_1_SQRT_2PI, 0.0, 0.0);
    for (j, &xj) in x.iter().enumerate() {
        if j == i {
            continue;
        }
        let u = (x[i] - xj) / h;
        let k = gauss(u);
        s0 += k;
        s1 += -u * k;
        s2 += (u * u - 1.0) * k;
    }
    let curv = s2 / (h * h * s0);
    let slope = s1 / (h * s0);
    Ok(2.0 * w * curv + (w * w - 2.0 * w) * slope * slope)
}

/// `(1/n) Σ_i H(X_i; f_{w,h})`.
pub fn hscore_objective(sample: &SampleSet, w: f64, h: f64) -> Result<f64> {
    check_exponent(w)?;
    Ok(score_profile(sample, h)?.objective(w))
}

/// What to do when the optimum lands on the edge of the search box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BoundPolicy {
    ErrorOnBoundary,
    #[default]
    WarnOnBoundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    /// Grid points per axis of the multistart grid (log h × w).
    pub grid_size: usize,
    /// Nelder–Mead stops when the simplex diameter, in coordinates scaled to
    /// the unit box, drops below this.
    pub simplex_tol: f64,
    pub max_iter: usize,
    /// Number of grid local minima refined.
    pub refine_starts: usize,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            grid_size: 16,
            simplex_tol: 1e-6,
            max_iter: 500,
            refine_starts: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub h_bounds: (f64, f64),
    pub w_bounds: (f64, f64),
    /// When set, only `h` is tuned and `w` is held at this value.
    pub fixed_w: Option<f64>,
    pub optimizer: OptimizerSettings,
    pub bound_policy: BoundPolicy,
    pub record_trace: bool,
}

/// Normal-reference bandwidth `1.06 σ n^{-1/5}`, `σ = min(sd, IQR/1.349)`.
pub fn silverman_bandwidth(sample: &SampleSet) -> f64 {
    1.06 * sample.robust_scale() * (sample.len() as f64).powf(-0.2)
}

/// Bandwidth range `[C n^{-1/3 + ε}, C n^{-ε}]` over which the score is
/// uniformly consistent.
pub fn bandwidth_rate_envelope(n: usize, c: f64, eps_h: f64) -> (f64, f64) {
    let n = n as f64;
    (c * n.powf(-1.0 / 3.0 + eps_h), c * n.powf(-eps_h))
}

/// Exponent range `(0, 1 + C n^{-ε}]`; the returned lower end is 0.
pub fn exponent_rate_envelope(n: usize, c: f64, eps_w: f64) -> (f64, f64) {
    (0.0, 1.0 + c * (n as f64).powf(-eps_w))
}

pub const DEFAULT_W_BOUNDS: (f64, f64) = (0.05, 4.0);
/// Default `h` bounds are the normal-reference bandwidth times these factors,
/// intersected with the lower rate envelope.
pub const DEFAULT_H_FACTORS: (f64, f64) = (1.0 / 20.0, 20.0);
/// `ε_h` of the rate envelope.
pub const DEFAULT_EPS_H: f64 = 0.05;
/// Envelope constant `C` in units of the robust scale `σ`.
pub const DEFAULT_ENVELOPE_SCALE: f64 = 0.5;

impl TuneConfig {
    /// Data-driven defaults: `h` within
    /// `[max(h_S/20, C n^{-1/3+ε_h}), 20 h_S]` with `C = σ/2` and `h_S` the
    /// normal-reference bandwidth; `w` within `[0.05, 4]`.
    ///
    /// Below the envelope the empirical score is dominated by observations
    /// with no neighbour inside the kernel window and develops spurious deep
    /// minima at bandwidths near the nearest-neighbour spacing.
    pub fn default_for(sample: &SampleSet) -> Result<Self> {
        let hs = silverman_bandwidth(sample);
        if !(hs > 0.0 && hs.is_finite()) {
            return Err(Error::Config(
                "sample has zero spread; cannot derive default bandwidth bounds".into(),
            ));
        }
        let c = DEFAULT_ENVELOPE_SCALE * sample.robust_scale();
        let (env_lo, _) = bandwidth_rate_envelope(sample.len(), c, DEFAULT_EPS_H);
        let hi = hs * DEFAULT_H_FACTORS.1;
        let lo = (hs * DEFAULT_H_FACTORS.0).max(env_lo).min(0.5 * hi);
        Ok(Self {
            h_bounds: (lo, hi),
            w_bounds: DEFAULT_W_BOUNDS,
            fixed_w: None,
            optimizer: OptimizerSettings::default(),
            bound_policy: BoundPolicy::default(),
            record_trace: false,
        })
    }

    pub fn with_fixed_w(mut self, w: f64) -> Self {
        self.fixed_w = Some(w);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (hl, hh) = self.h_bounds;
        if !(hl > 0.0 && hl < hh && hh.is_finite()) {
            return Err(Error::Config(format!("invalid h bounds ({hl}, {hh})")));
        }
        let (wl, wh) = self.w_bounds;
        if !(wl > 0.0 && wl < wh && wh.is_finite()) {
            return Err(Error::Config(format!("invalid w bounds ({wl}, {wh})")));
        }
        if let Some(w) = self.fixed_w {
            check_exponent(w).map_err(|e| Error::Config(e.to_string()))?;
        }
        let o = &self.optimizer;
        if o.grid_size < 3 || o.refine_starts == 0 || !(o.simplex_tol > 0.0) {
            return Err(Error::Config(format!("invalid optimizer settings {o:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub w: f64,
    pub h: f64,
    pub objective: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub w_hat: f64,
    pub h_hat: f64,
    /// Mean H-score at the optimum.
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub boundary_hit: bool,
    pub trace: Option<Vec<TracePoint>>,
}

/// Maps the unit square onto `(log h, w)`.
#[derive(Clone, Copy)]
struct Box2 {
    log_h: (f64, f64),
    w: (f64, f64),
}

impl Box2 {
    fn h(&self, u: f64) -> f64 {
        if u <= 0.0 {
            return self.log_h.0.exp();
        }
        if u >= 1.0 {
            return self.log_h.1.exp();
        }
        (self.log_h.0 + u * (self.log_h.1 - self.log_h.0)).exp()
    }
    fn w(&self, v: f64) -> f64 {
        if v >= 1.0 {
            return self.w.1;
        }
        self.w.0 + v * (self.w.1 - self.w.0)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    u: f64,
    v: f64,
    h: f64,
    w: f64,
    value: f64,
}

/// Lowest value wins; near-ties go to the smaller `h`, then to `w` closer to 1.
fn better(a: &Candidate, b: &Candidate) -> bool {
    let scale = a.value.abs().max(b.value.abs()).max(f64::MIN_POSITIVE);
    if (a.value - b.value).abs() > 1e-12 * scale {
        return a.value < b.value;
    }
    if a.h != b.h {
        return a.h < b.h;
    }
    (a.w - 1.0).abs() < (b.w - 1.0).abs()
}

const BOUNDARY_TOL: f64 = 1e-4;

/// Minimizes the mean H-score over `(w, h)`, or over `h` alone when
/// `cfg.fixed_w` is set.
///
/// A coarse grid in `(log h, w)` seeds Nelder–Mead (golden-section search for
/// fixed `w`) from the best grid local minima; the best refined point wins.
/// The result is deterministic for a given sample and configuration.
pub fn tune(sample: &SampleSet, cfg: &TuneConfig) -> Result<TuneResult> {
    cfg.validate()?;
    if sample.len() < 10 {
        return Err(Error::Tuning(format!(
            "need at least 10 observations to tune, got {}",
            sample.len()
        )));
    }
    let bx = Box2 {
        log_h: (cfg.h_bounds.0.ln(), cfg.h_bounds.1.ln()),
        w: match cfg.fixed_w {
            Some(w) => (w, w),
            None => cfg.w_bounds,
        },
    };
    let g = cfg.optimizer.grid_size;
    let step = 1.0 / (g - 1) as f64;
    let grid_u: Vec<f64> = (0..g).map(|k| k as f64 * step).collect();
    let profiles: Vec<Option<ScoreProfile>> = grid_u
        .par_iter()
        .map(|&u| score_profile(sample, bx.h(u)).ok())
        .collect();

    let w_nodes: Vec<f64> = match cfg.fixed_w {
        Some(_) => vec![0.0],
        None => grid_u.clone(),
    };
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut grid = vec![vec![f64::INFINITY; w_nodes.len()]; g];
    for (k, p) in profiles.iter().enumerate() {
        if let Some(p) = p {
            for (l, &v) in w_nodes.iter().enumerate() {
                let w = bx.w(v);
                let val = p.objective(w);
                if val.is_finite() {
                    grid[k][l] = val;
                }
                if let Some(t) = trace.as_mut() {
                    t.push(TracePoint { w, h: p.h, objective: val });
                }
            }
        }
    }
    if grid.iter().flatten().all(|v| !v.is_finite()) {
        return Err(Error::Tuning("objective is not finite anywhere on the search grid".into()));
    }

    // grid local minima, best first
    let mut starts: Vec<Candidate> = Vec::new();
    for k in 0..g {
        for l in 0..w_nodes.len() {
            let val = grid[k][l];
            if !val.is_finite() {
                continue;
            }
            let mut is_min = true;
            for dk in -1i64..=1 {
                for dl in -1i64..=1 {
                    let (kk, ll) = (k as i64 + dk, l as i64 + dl);
                    if (dk, dl) == (0, 0) || kk < 0 || ll < 0 || kk >= g as i64 || ll >= w_nodes.len() as i64 {
                        continue;
                    }
                    if grid[kk as usize][ll as usize] < val {
                        is_min = false;
                    }
                }
            }
            if is_min {
                starts.push(Candidate {
                    u: grid_u[k],
                    v: w_nodes[l],
                    h: bx.h(grid_u[k]),
                    w: bx.w(w_nodes[l]),
                    value: val,
                });
            }
        }
    }
    starts.sort_by(|a, b| {
        if better(a, b) {
            std::cmp::Ordering::Less
        } else if better(b, a) {
            std::cmp::Ordering::Greater
        } else {
            std::cmp::Ordering::Equal
        }
    });
    starts.truncate(cfg.optimizer.refine_starts);

    let mut best: Option<(Candidate, bool)> = None;
    let mut iterations = 0;
    let mut evaluations = g;
    for start in &starts {
        let (cand, converged) = match cfg.fixed_w {
            Some(w) => {
                let lo = (start.u - step).max(0.0);
                let hi = (start.u + step).min(1.0);
                let m = golden_section(
                    |u| {
                        let val = score_profile(sample, bx.h(u)).map(|p| p.objective(w)).unwrap_or(f64::NAN);
                        if let Some(t) = trace.as_mut() {
                            t.push(TracePoint { w, h: bx.h(u), objective: val });
                        }
                        val
                    },
                    lo,
                    hi,
                    cfg.optimizer.simplex_tol,
                    cfg.optimizer.max_iter,
                );
                iterations += m.iterations;
                evaluations += m.evaluations;
                // the grid point itself may beat the bracket interior at an edge
                let refined = Candidate {
                    u: m.x[0],
                    v: 0.0,
                    h: bx.h(m.x[0]),
                    w,
                    value: m.value,
                };
                if better(start, &refined) {
                    (*start, m.converged)
                } else {
                    (refined, m.converged)
                }
            }
            None => {
                let opts = NelderMeadOptions {
                    simplex_tol: cfg.optimizer.simplex_tol,
                    max_iter: cfg.optimizer.max_iter,
                    initial_step: step,
                };
                let m = nelder_mead(
                    |p| {
                        let (h, w) = (bx.h(p[0]), bx.w(p[1]));
                        let val = score_profile(sample, h).map(|s| s.objective(w)).unwrap_or(f64::NAN);
                        if let Some(t) = trace.as_mut() {
                            t.push(TracePoint { w, h, objective: val });
                        }
                        val
                    },
                    &[start.u, start.v],
                    &[0.0, 0.0],
                    &[1.0, 1.0],
                    &opts,
                );
                iterations += m.iterations;
                evaluations += m.evaluations;
                let refined = Candidate {
                    u: m.x[0],
                    v: m.x[1],
                    h: bx.h(m.x[0]),
                    w: bx.w(m.x[1]),
                    value: m.value,
                };
                if better(start, &refined) {
                    (*start, m.converged)
                } else {
                    (refined, m.converged)
                }
            }
        };
        match &best {
            Some((b, _)) if !better(&cand, b) => {}
            _ => best = Some((cand, converged)),
        }
    }
    let (best, converged) = best.ok_or_else(|| Error::Tuning("no finite starting point".into()))?;
    if !best.value.is_finite() {
        return Err(Error::Tuning("refined objective is not finite".into()));
    }

    let on_edge = |t: f64| t <= BOUNDARY_TOL || t >= 1.0 - BOUNDARY_TOL;
    let boundary_hit = on_edge(best.u) || (cfg.fixed_w.is_none() && on_edge(best.v));
    if boundary_hit {
        let msg = format!(
            "H-score optimum (h = {:.4e}, w = {:.4}) lies on the search box edge (h in [{:.4e}, {:.4e}], w in [{}, {}])",
            best.h, best.w, cfg.h_bounds.0, cfg.h_bounds.1, bx.w.0, bx.w.1
        );
        match cfg.bound_policy {
            BoundPolicy::ErrorOnBoundary => return Err(Error::Boundary(msg)),
            BoundPolicy::WarnOnBoundary => warn!("{msg}"),
        }
    }

    Ok(TuneResult {
        w_hat: cfg.fixed_w.unwrap_or(best.w),
        h_hat: best.h,
        objective: best.value,
        iterations,
        evaluations,
        converged,
        boundary_hit,
        trace,
    })
}
