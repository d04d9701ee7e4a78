//! The disjunctive normal shape model (DNSM).
//!
//! A shape is represented as the union of `N` convex polytopes, each the
//! intersection of `M` half-spaces. Hard indicators are smoothed with
//! logistic sigmoids, giving a differentiable membership function
//!
//! ```text
//! f(x) = 1 - prod_i (1 - g_i(x)),   g_i(x) = prod_j sigma(w_ij . x + b_ij)
//! ```
//!
//! with `sigma(z) = 1 / (1 + exp(-z))`, so a point is inside half-space
//! `(i, j)` exactly when `w_ij . x + b_ij >= 0`. The `f(x) = 0.5` level set
//! is the shape boundary: foreground is `f >= 0.5`.
//!
//! Each `g_i` is a product of log-concave factors, hence log-concave: its
//! super-level sets are convex for every threshold. Polytopes stay convex
//! no matter how the weights move, which is what makes this model suitable
//! for convex decomposition.

use crate::error::{Error, Result};
use crate::raster::ShapeRaster;

/// Numerically stable logistic sigmoid, `1 / (1 + exp(-z))`.
///
/// For `z >= 37.5` the exact f64 result is `1.0`, so the exponential is
/// skipped; for `z <= -745` it underflows to `0.0`. Both branches return
/// the same value the direct formula would after rounding.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 37.5 {
        1.0
    } else if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else if z <= -745.0 {
        0.0
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Shape of a model: polytope count, half-spaces per polytope, dimension,
/// and the sigmoid sharpness used when new polytopes are minted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Number of polytopes `N`.
    pub n_polytopes: usize,
    /// Half-spaces per polytope `M`. At least 3: fewer cannot bound a 2D region.
    pub m_halfspaces: usize,
    /// Spatial dimension `D`. This crate implements `D = 2`.
    pub dimension: usize,
    /// Initialization slope: weight magnitude per unit normal, controlling
    /// the sigmoid transition width (roughly `4 / slope` in normalized units).
    pub slope: f64,
}

impl ModelConfig {
    pub const DEFAULT_SLOPE: f64 = 60.0;

    pub fn new(n_polytopes: usize, m_halfspaces: usize, slope: f64) -> Result<Self> {
        let cfg = ModelConfig {
            n_polytopes,
            m_halfspaces,
            dimension: 2,
            slope,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_polytopes < 1 {
            return Err(Error::InvalidConfig("need at least one polytope".into()));
        }
        if self.m_halfspaces < 3 {
            return Err(Error::InvalidConfig(
                "need at least 3 half-spaces to bound a 2D region".into(),
            ));
        }
        if self.dimension != 2 {
            return Err(Error::InvalidConfig("only dimension 2 is supported".into()));
        }
        if !(self.slope > 0.0) || !self.slope.is_finite() {
            return Err(Error::InvalidConfig("slope must be positive".into()));
        }
        Ok(())
    }
}

/// One linear half-space discriminant: `z(x) = w . x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminant {
    /// One weight per coordinate (length `D`).
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Discriminant {
    pub fn new(weights: Vec<f64>, bias: f64) -> Self {
        Discriminant { weights, bias }
    }

    /// The linear argument `w . x + b`.
    #[inline]
    pub fn argument(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.weights.len(), x.len());
        self.weights.iter().zip(x).map(|(w, xk)| w * xk).sum::<f64>() + self.bias
    }
}

/// A convex polytope: the conjunction of `M` half-spaces.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    pub discriminants: Vec<Discriminant>,
}

/// The full model: `N` polytopes plus their shared configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DnsmModel {
    config: ModelConfig,
    polytopes: Vec<Polytope>,
}

/// Sigmoid membership of one half-space, in `(0, 1)`.
///
/// Returns `sigma(w . x + b)`; at least `0.5` exactly when the hard
/// indicator would fire (`w . x + b >= 0`).
pub fn eval_halfspace(d: &Discriminant, x: &[f64]) -> f64 {
    sigmoid(d.argument(x))
}

/// Soft membership of one polytope: the product of its half-space sigmoids.
pub fn eval_polytope(p: &Polytope, x: &[f64]) -> f64 {
    p.discriminants
        .iter()
        .map(|d| eval_halfspace(d, x))
        .product()
}

/// Model membership `f(x) = 1 - prod_i (1 - g_i(x))`; foreground is `f >= 0.5`.
pub fn eval_model(m: &DnsmModel, x: &[f64]) -> f64 {
    1.0 - m
        .polytopes
        .iter()
        .map(|p| 1.0 - eval_polytope(p, x))
        .product::<f64>()
}

impl DnsmModel {
    /// Assembles a model, checking counts against the configuration.
    pub fn new(config: ModelConfig, polytopes: Vec<Polytope>) -> Result<Self> {
        config.validate()?;
        if polytopes.len() != config.n_polytopes {
            return Err(Error::InvalidConfig(format!(
                "expected {} polytopes, got {}",
                config.n_polytopes,
                polytopes.len()
            )));
        }
        for p in &polytopes {
            if p.discriminants.len() != config.m_halfspaces {
                return Err(Error::InvalidConfig(format!(
                    "expected {} half-spaces per polytope, got {}",
                    config.m_halfspaces,
                    p.discriminants.len()
                )));
            }
            for d in &p.discriminants {
                if d.weights.len() != config.dimension {
                    return Err(Error::InvalidConfig(format!(
                        "expected {} weights per discriminant, got {}",
                        config.dimension,
                        d.weights.len()
                    )));
                }
                if !d.bias.is_finite() || d.weights.iter().any(|w| !w.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "discriminant parameters must be finite".into(),
                    ));
                }
            }
        }
        Ok(DnsmModel { config, polytopes })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn polytopes(&self) -> &[Polytope] {
        &self.polytopes
    }

    pub fn n_polytopes(&self) -> usize {
        self.polytopes.len()
    }

    /// Number of free parameters, `N * M * (D + 1)`.
    pub fn param_count(&self) -> usize {
        self.config.n_polytopes * self.config.m_halfspaces * (self.config.dimension + 1)
    }

    /// Flattens all parameters in `(polytope, half-space, [weights.., bias])`
    /// order. The gradient uses the same layout.
    pub fn params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for p in &self.polytopes {
            for d in &p.discriminants {
                out.extend_from_slice(&d.weights);
                out.push(d.bias);
            }
        }
        out
    }

    /// Rebuilds a model with the same shape but new parameter values.
    pub fn with_params(&self, params: &[f64]) -> Self {
        assert_eq!(params.len(), self.param_count(), "parameter count mismatch");
        let d = self.config.dimension;
        let mut it = params.chunks_exact(d + 1);
        let polytopes = self
            .polytopes
            .iter()
            .map(|p| Polytope {
                discriminants: p
                    .discriminants
                    .iter()
                    .map(|_| {
                        let chunk = it.next().expect("chunk count matches param count");
                        Discriminant::new(chunk[..d].to_vec(), chunk[d])
                    })
                    .collect(),
            })
            .collect();
        DnsmModel {
            config: self.config,
            polytopes,
        }
    }

    /// Model restricted to a subset of polytopes, preserving order.
    pub fn select(&self, keep: &[usize]) -> Result<Self> {
        let polytopes: Vec<Polytope> = keep.iter().map(|&i| self.polytopes[i].clone()).collect();
        let config = ModelConfig {
            n_polytopes: polytopes.len(),
            ..self.config
        };
        DnsmModel::new(config, polytopes)
    }
}

/// A regular `M`-gon approximation of a disc: half-space `j` has inward unit
/// normal at angle `2 pi j / M` and its boundary line at distance `radius`
/// from the center, so the polygon has apothem `radius`.
pub fn disc_polytope(center: [f64; 2], radius: f64, m_halfspaces: usize, slope: f64) -> Polytope {
    let discriminants = (0..m_halfspaces)
        .map(|j| {
            let angle = 2.0 * std::f64::consts::PI * j as f64 / m_halfspaces as f64;
            let normal = [angle.cos(), angle.sin()];
            // Inside when normal . (x - center) + radius >= 0.
            let weights = vec![slope * normal[0], slope * normal[1]];
            let bias = slope * (radius - normal[0] * center[0] - normal[1] * center[1]);
            Discriminant::new(weights, bias)
        })
        .collect();
    Polytope { discriminants }
}

/// Seeds a model with disc-shaped polytopes on a regular grid inside the shape.
///
/// The grid is centered on the foreground bounding box: along each axis,
/// `max(1, floor(extent / spacing))` points are laid out symmetrically, and
/// only centers whose pixel is foreground are kept. The resulting polytope
/// count overrides `cfg.n_polytopes`.
///
/// Errors with [`Error::NoInteriorCenters`] when no grid point lands on
/// foreground, which usually means the spacing is too coarse for the shape.
pub fn init_polytopes(
    shape: &ShapeRaster,
    radius: f64,
    spacing: f64,
    cfg: &ModelConfig,
) -> Result<DnsmModel> {
    if !(radius > 0.0) || !(spacing > 0.0) {
        return Err(Error::InvalidConfig(
            "radius and spacing must be positive".into(),
        ));
    }
    cfg.validate()?;

    let (min_row, min_col, max_row, max_col) = shape.bounding_box();
    let scale = shape.frame().scale();
    // Bounding box in normalized units, spanning full pixel extents.
    let x_min = f64::from(min_col) / scale;
    let x_max = f64::from(max_col + 1) / scale;
    let y_min = f64::from(min_row) / scale;
    let y_max = f64::from(max_row + 1) / scale;

    let axis_points = |lo: f64, hi: f64| -> Vec<f64> {
        let extent = hi - lo;
        let n = ((extent / spacing + 1e-9).floor() as usize).max(1);
        let margin = (extent - (n - 1) as f64 * spacing) / 2.0;
        (0..n).map(|k| lo + margin + k as f64 * spacing).collect()
    };

    let xs = axis_points(x_min, x_max);
    let ys = axis_points(y_min, y_max);

    let mut polytopes = Vec::new();
    for &y in &ys {
        for &x in &xs {
            let inside = shape
                .frame()
                .pixel_of([x, y])
                .map(|(r, c)| shape.is_foreground(r, c))
                .unwrap_or(false);
            if inside {
                polytopes.push(disc_polytope([x, y], radius, cfg.m_halfspaces, cfg.slope));
            }
        }
    }

    if polytopes.is_empty() {
        return Err(Error::NoInteriorCenters);
    }

    let config = ModelConfig {
        n_polytopes: polytopes.len(),
        ..*cfg
    };
    DnsmModel::new(config, polytopes)
}

/// Flat, cache-friendly view of the parameters used by the fitting loops.
///
/// Layout matches [`DnsmModel::params`]: index `((i * m) + j) * (d + 1) + k`
/// holds weight `k` of half-space `j` of polytope `i`, with `k = d` the bias.
#[derive(Debug, Clone)]
pub(crate) struct FlatModel {
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub params: Vec<f64>,
}

impl FlatModel {
    pub fn from_model(model: &DnsmModel) -> Self {
        FlatModel {
            n: model.config.n_polytopes,
            m: model.config.m_halfspaces,
            d: model.config.dimension,
            params: model.params(),
        }
    }

    /// Writes `g_i(x)` for every polytope into `out` and additionally
    /// records each half-space sigmoid in `sigmas` when provided.
    #[inline]
    pub fn memberships(&self, x: [f64; 2], out: &mut [f64], mut sigmas: Option<&mut [f64]>) {
        debug_assert_eq!(self.d, 2);
        let stride = self.d + 1;
        for i in 0..self.n {
            let mut g = 1.0;
            let base = i * self.m * stride;
            for j in 0..self.m {
                let p = &self.params[base + j * stride..base + (j + 1) * stride];
                let z = p[0] * x[0] + p[1] * x[1] + p[2];
                let s = sigmoid(z);
                if let Some(buf) = sigmas.as_deref_mut() {
                    buf[i * self.m + j] = s;
                }
                g *= s;
            }
            out[i] = g;
        }
    }
}
