//! Energy functionals and the gradient-descent fitting loop.
//!
//! Fitting minimizes, over all discriminant weights and biases,
//!
//! ```text
//! E = sum_x (f(x) - I(x))^2 dA  +-  eta * sum_{i<r} sum_x g_i(x) g_r(x) dA
//! ```
//!
//! where `I` is the binary shape image and `dA` the pixel area in
//! normalized units. The pairwise term is *subtracted* under
//! [`OverlapSign::Maximize`] (the first fitting stage rewards overlapping
//! polytopes so redundant ones are easy to spot) and *added* under
//! [`OverlapSign::Penalize`] (the final stage gives each part a unique
//! polytope). Each unordered polytope pair is counted once.
//!
//! Gradients are analytic. With `P_i = prod_{r != i} (1 - g_r)` and
//! `S = sum_r g_r`, the derivative with respect to a parameter of
//! half-space `(i, j)` is
//!
//! ```text
//! dE/dtheta_ij = sum_x [2 (f - I) P_i +- eta (S - g_i)] g_i (1 - sigma_ij) xt dA
//! ```
//!
//! where `xt` is the corresponding coordinate, or 1 for the bias. The
//! leave-one-out products are formed from prefix/suffix products rather
//! than division, which stays stable when some `g_r` saturates at 1.
//! Correctness is checked against central finite differences of the energy.

use crate::error::{Error, Result};
use crate::model::{DnsmModel, FlatModel};
use crate::raster::ShapeRaster;

/// Whether the pairwise overlap integral is rewarded or penalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OverlapSign {
    /// Stage-1 fitting: overlap lowers the energy.
    Maximize,
    /// Stage-3 fitting: overlap raises the energy.
    Penalize,
}

impl OverlapSign {
    #[inline]
    fn coefficient(self) -> f64 {
        match self {
            OverlapSign::Maximize => -1.0,
            OverlapSign::Penalize => 1.0,
        }
    }
}

/// Gradient-descent settings for one fitting stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    /// Weight of the pairwise overlap term.
    pub eta: f64,
    /// Base step size; halved up to 20 times per iteration until the step
    /// does not increase the energy.
    pub step_size: f64,
    pub max_iters: usize,
    /// Stop when the relative energy change over a 10-iteration window
    /// falls below this.
    pub rel_tol: f64,
    pub overlap_sign: OverlapSign,
}

impl FitParams {
    /// Kept small: the overlap reward compounds with the local cover
    /// multiplicity, and once enough polytopes stack up the data term
    /// cannot hold the shape boundary any more.
    pub const DEFAULT_ETA_MAXIMIZE: f64 = 0.02;
    pub const DEFAULT_ETA_PENALIZE: f64 = 1.0;
    /// Wall biases move by slope-sized amounts while pixel-area-normalized
    /// gradients are tiny, so the base step is large; the halving guard
    /// shrinks it wherever it overshoots.
    pub const DEFAULT_STEP_SIZE: f64 = 200.0;
    pub const DEFAULT_MAX_ITERS: usize = 500;
    pub const DEFAULT_REL_TOL: f64 = 1e-6;

    /// Stage-1 defaults (overlap rewarded).
    pub fn maximize() -> Self {
        FitParams {
            eta: Self::DEFAULT_ETA_MAXIMIZE,
            step_size: Self::DEFAULT_STEP_SIZE,
            max_iters: Self::DEFAULT_MAX_ITERS,
            rel_tol: Self::DEFAULT_REL_TOL,
            overlap_sign: OverlapSign::Maximize,
        }
    }

    /// Stage-3 defaults (overlap penalized).
    pub fn penalize() -> Self {
        FitParams {
            eta: Self::DEFAULT_ETA_PENALIZE,
            ..Self::maximize()
        }
        .with_sign(OverlapSign::Penalize)
    }

    fn with_sign(mut self, sign: OverlapSign) -> Self {
        self.overlap_sign = sign;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidConfig("step_size must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::InvalidConfig("rel_tol must be nonnegative".into()));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidConfig("eta must be a nonnegative number".into()));
        }
        Ok(())
    }
}

/// Energy split into its data and overlap parts.
///
/// `total = data_term + sign * eta * overlap_term`, with sign -1 for
/// [`OverlapSign::Maximize`] and +1 for [`OverlapSign::Penalize`].
/// `overlap_term` itself is always the raw nonnegative integral.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub data_term: f64,
    pub overlap_term: f64,
}

/// Per-iteration energy record of an accepted descent step.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TraceRecord {
    pub total: f64,
    pub data_term: f64,
    pub overlap_term: f64,
}

/// History of a fitting run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FitTrace {
    pub records: Vec<TraceRecord>,
    pub iterations_run: usize,
    pub converged: bool,
}

/// Shared scratch space for the per-pixel evaluation passes.
///
/// Pixel sums run row-major in a fixed order, so results are deterministic
/// for identical inputs.
struct Passes<'a> {
    shape: &'a ShapeRaster,
    xs: Vec<f64>,
    ys: Vec<f64>,
    pixel_area: f64,
    g: Vec<f64>,
    sigmas: Vec<f64>,
    prefix: Vec<f64>,
    suffix: Vec<f64>,
}

impl<'a> Passes<'a> {
    fn new(shape: &'a ShapeRaster, flat: &FlatModel) -> Self {
        let frame = shape.frame();
        let xs = (0..shape.width()).map(|c| frame.point_of(0, c)[0]).collect();
        let ys = (0..shape.height()).map(|r| frame.point_of(r, 0)[1]).collect();
        Passes {
            shape,
            xs,
            ys,
            pixel_area: frame.pixel_area(),
            g: vec![0.0; flat.n],
            sigmas: vec![0.0; flat.n * flat.m],
            prefix: vec![0.0; flat.n + 1],
            suffix: vec![0.0; flat.n + 1],
        }
    }

    /// Data and overlap sums for the current parameters.
    fn energy(&mut self, flat: &FlatModel) -> (f64, f64) {
        let n = flat.n;
        let mut data = 0.0;
        let mut overlap = 0.0;
        let bits = self.shape.bits();
        let width = self.shape.width() as usize;
        for (row, &y) in self.ys.iter().enumerate() {
            let row_bits = &bits[row * width..(row + 1) * width];
            for (col, &x) in self.xs.iter().enumerate() {
                flat.memberships([x, y], &mut self.g, None);
                let mut not_any = 1.0;
                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for &gi in &self.g[..n] {
                    not_any *= 1.0 - gi;
                    sum += gi;
                    sum_sq += gi * gi;
                }
                let f = 1.0 - not_any;
                let res = f - if row_bits[col] { 1.0 } else { 0.0 };
                data += res * res;
                overlap += 0.5 * (sum * sum - sum_sq);
            }
        }
        (data * self.pixel_area, overlap * self.pixel_area)
    }

    /// Energy sums plus the full analytic gradient.
    fn energy_and_gradient(
        &mut self,
        flat: &FlatModel,
        eta: f64,
        sign: f64,
        grad: &mut [f64],
    ) -> (f64, f64) {
        let n = flat.n;
        let m = flat.m;
        let stride = flat.d + 1;
        grad.fill(0.0);
        let mut data = 0.0;
        let mut overlap = 0.0;
        let bits = self.shape.bits();
        let width = self.shape.width() as usize;
        for (row, y) in self.ys.iter().copied().enumerate() {
            let row_bits = &bits[row * width..(row + 1) * width];
            for (col, x) in self.xs.iter().copied().enumerate() {
                flat.memberships([x, y], &mut self.g, Some(&mut self.sigmas));

                // Leave-one-out products of (1 - g_r) without division.
                self.prefix[0] = 1.0;
                for i in 0..n {
                    self.prefix[i + 1] = self.prefix[i] * (1.0 - self.g[i]);
                }
                self.suffix[n] = 1.0;
                for i in (0..n).rev() {
                    self.suffix[i] = self.suffix[i + 1] * (1.0 - self.g[i]);
                }

                let f = 1.0 - self.prefix[n];
                let res = f - if row_bits[col] { 1.0 } else { 0.0 };
                data += res * res;

                let mut sum = 0.0;
                let mut sum_sq = 0.0;
                for &gi in &self.g[..n] {
                    sum += gi;
                    sum_sq += gi * gi;
                }
                overlap += 0.5 * (sum * sum - sum_sq);

                for i in 0..n {
                    let gi = self.g[i];
                    if gi == 0.0 {
                        continue;
                    }
                    let loo = self.prefix[i] * self.suffix[i + 1];
                    let coef = (2.0 * res * loo + sign * eta * (sum - gi)) * gi;
                    if coef == 0.0 {
                        continue;
                    }
                    let gbase = i * m * stride;
                    for j in 0..m {
                        let s = self.sigmas[i * m + j];
                        if s == 1.0 {
                            continue;
                        }
                        let t = coef * (1.0 - s);
                        let gj = &mut grad[gbase + j * stride..gbase + (j + 1) * stride];
                        gj[0] += t * x;
                        gj[1] += t * y;
                        gj[2] += t;
                    }
                }
            }
        }
        for v in grad.iter_mut() {
            *v *= self.pixel_area;
        }
        (data * self.pixel_area, overlap * self.pixel_area)
    }
}

fn breakdown(data: f64, overlap: f64, p: &FitParams) -> EnergyBreakdown {
    EnergyBreakdown {
        total: data + p.overlap_sign.coefficient() * p.eta * overlap,
        data_term: data,
        overlap_term: overlap,
    }
}

/// Evaluates the fitting energy of a model against a shape.
///
/// Integrals are discretized as sums over all pixels times the pixel area,
/// so values are comparable across raster resolutions.
pub fn energy(m: &DnsmModel, shape: &ShapeRaster, p: &FitParams) -> EnergyBreakdown {
    let flat = FlatModel::from_model(m);
    let mut passes = Passes::new(shape, &flat);
    let (data, overlap) = passes.energy(&flat);
    breakdown(data, overlap, p)
}

/// Analytic energy gradient, flattened in [`DnsmModel::params`] order.
pub fn gradient(m: &DnsmModel, shape: &ShapeRaster, p: &FitParams) -> Vec<f64> {
    let flat = FlatModel::from_model(m);
    let mut passes = Passes::new(shape, &flat);
    let mut grad = vec![0.0; flat.params.len()];
    passes.energy_and_gradient(&flat, p.eta, p.overlap_sign.coefficient(), &mut grad);
    grad
}

/// Gradient descent on the fitting energy.
///
/// Runs plain descent with a step-halving guard: each iteration retries
/// with half the step (up to 20 times) until the energy does not increase
/// by more than `1e-12`; the accepted step size carries over and may grow
/// back toward `step_size`. Stops early when the relative energy change
/// over a 10-iteration window drops below `rel_tol`, or when no descent
/// step can be accepted at all. The input model is left untouched.
pub fn fit(m: &DnsmModel, shape: &ShapeRaster, p: &FitParams) -> Result<(DnsmModel, FitTrace)> {
    p.validate()?;
    let mut flat = FlatModel::from_model(m);
    let mut passes = Passes::new(shape, &flat);
    let sign = p.overlap_sign.coefficient();

    let (data0, overlap0) = passes.energy(&flat);
    let mut current = breakdown(data0, overlap0, p);
    if !current.total.is_finite() {
        return Err(Error::NonFiniteEnergy { iteration: 0 });
    }
    let initial_total = current.total;

    let mut grad = vec![0.0; flat.params.len()];
    let mut trial = flat.params.clone();
    let mut records: Vec<TraceRecord> = Vec::new();
    let mut gamma = p.step_size;
    let mut converged = false;

    for iter in 0..p.max_iters {
        passes.energy_and_gradient(&flat, p.eta, sign, &mut grad);

        gamma = (gamma * 2.0).min(p.step_size);
        let mut accepted = None;
        let mut last_total = f64::NAN;
        for _ in 0..=20 {
            for ((t, &c), &g) in trial.iter_mut().zip(&flat.params).zip(&grad) {
                *t = c - gamma * g;
            }
            let trial_flat = FlatModel {
                params: std::mem::take(&mut trial),
                ..flat.clone()
            };
            let (data, overlap) = passes.energy(&trial_flat);
            trial = trial_flat.params;
            let cand = breakdown(data, overlap, p);
            last_total = cand.total;
            if cand.total.is_finite() && cand.total <= current.total + 1e-12 {
                accepted = Some(cand);
                break;
            }
            gamma *= 0.5;
        }

        let cand = match accepted {
            Some(c) => c,
            None if !last_total.is_finite() => {
                return Err(Error::NonFiniteEnergy { iteration: iter });
            }
            None => {
                // No step of any size descends; the iterate is stationary
                // to machine precision.
                converged = true;
                break;
            }
        };

        std::mem::swap(&mut flat.params, &mut trial);
        current = cand;
        records.push(TraceRecord {
            total: current.total,
            data_term: current.data_term,
            overlap_term: current.overlap_term,
        });

        let k = records.len();
        if k >= 10 {
            let reference = if k == 10 {
                initial_total
            } else {
                records[k - 11].total
            };
            let rel = (current.total - reference).abs() / reference.abs().max(1e-300);
            if rel < p.rel_tol {
                converged = true;
                break;
            }
        }
    }

    let trace = FitTrace {
        iterations_run: records.len(),
        records,
        converged,
    };
    Ok((m.with_params(&flat.params), trace))
}
