//! CDF evaluation for the limiting tail-sum law by quadrature of the
//! Gil-Pelaez integral.
//!
//! The integrand is analytic in a strip around the positive real axis, so
//! after truncating to [0, L] and substituting ξ = ½L(1 + tanh u) the
//! trapezoid rule converges exponentially in 1/h. The stopping rule is
//! agreement of two successive mesh halvings rather than an a-priori mesh
//! formula; the truncation length comes from a geometric doubling probe of
//! the integrand envelope |φ(ξ)|/ξ.
//!
//! [`CdfEvaluator`] caches the transformed nodes and the characteristic
//! function values at them, which are independent of the evaluation point
//! t. A quantile search against one law therefore pays the
//! special-function cost once and each additional CDF evaluation is a
//! trigonometric sweep over the cached nodes.

use crate::cf::{cf, TailLawParams};
use crate::gamma::SpecialFnError;
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CdfError {
    #[error("invalid quadrature configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("truncation probe exceeded {probes} doublings")]
    TruncationCap { probes: u32 },
    #[error("trapezoid refinement did not converge: last two estimates {previous} and {last}")]
    NonConvergence { last: f64, previous: f64 },
    #[error(transparent)]
    Special(#[from] SpecialFnError),
}

pub type Result<T> = std::result::Result<T, CdfError>;

/// Controls for the tanh-trapezoid rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    /// Absolute tolerance ε_q on the returned CDF value.
    pub tolerance: f64,
    /// Starting mesh width h₀ in the transformed variable.
    pub initial_mesh: f64,
    /// Mesh halvings allowed before reporting non-convergence.
    pub max_halvings: u32,
    /// Geometric growth factor of the truncation probe.
    pub growth: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            initial_mesh: 0.5,
            max_halvings: 20,
            growth: 2.0,
        }
    }
}

impl QuadratureConfig {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tolerance > 1e-14 && self.tolerance < 0.1) {
            return Err(CdfError::InvalidConfig("tolerance must lie in (1e-14, 0.1)"));
        }
        if self.max_halvings < 4 {
            return Err(CdfError::InvalidConfig("need at least 4 halvings"));
        }
        if !(self.initial_mesh > 0.0 && self.growth > 1.0) {
            return Err(CdfError::InvalidConfig("mesh and growth must be positive"));
        }
        Ok(())
    }
}

const TRUNCATION_CAP: u32 = 60;
/// Refinements required before the agreement rule may fire; guards
/// against spurious agreement of two aliased coarse meshes.
const MIN_LEVEL: u32 = 3;

/// Truncation length for the Gil-Pelaez integral: the smallest
/// geometrically grown L with envelope |φ(L)|/L and |φ(2L)|/(2L) both
/// below ε_q/(10 L). The envelope does not depend on t, so neither does
/// the result; the parameter is kept for contract symmetry (larger |t|
/// never shrinks the truncation).
pub fn choose_truncation(_t: f64, law: &TailLawParams, eps: f64) -> Result<f64> {
    let envelope = |xi: f64| -> Result<f64> { Ok(cf(xi, law)?.norm() / xi) };
    let mut l = (1.0 / law.trunc).max(1.0);
    for _ in 0..TRUNCATION_CAP {
        let thresh = eps / (10.0 * l);
        if envelope(l)? < thresh && envelope(2.0 * l)? < thresh {
            return Ok(l);
        }
        l *= 2.0;
    }
    Err(CdfError::TruncationCap {
        probes: TRUNCATION_CAP,
    })
}

/// ξ and quadrature weight at transformed abscissa u, computed without
/// cancellation: ξ = L/(1+e^{−2u}), w = (L/2)·sech²(u).
#[inline]
fn node_at(l_cut: f64, u: f64) -> (f64, f64) {
    let q = (-2.0 * u.abs()).exp();
    let denom = 1.0 + q;
    let xi = if u >= 0.0 {
        l_cut / denom
    } else {
        l_cut * q / denom
    };
    let w = 0.5 * l_cut * 4.0 * q / (denom * denom);
    (xi, w)
}

fn u_range(l_cut: f64, eps: f64) -> f64 {
    (4.0 * l_cut / eps).ln() + 10.0
}

/// Integrate `f` over (0, L) by the tanh-substituted trapezoid rule,
/// halving the mesh until two successive estimates agree within ε_q/2.
pub fn tanh_trapezoid<F: Fn(f64) -> f64>(f: F, l_cut: f64, q: &QuadratureConfig) -> Result<f64> {
    let trace = tanh_trapezoid_trace(f, l_cut, q)?;
    Ok(*trace.last().expect("trace is nonempty"))
}

/// As [`tanh_trapezoid`], returning the whole refinement history (one
/// estimate per mesh level). Used by the convergence-rate checks.
pub fn tanh_trapezoid_trace<F: Fn(f64) -> f64>(
    f: F,
    l_cut: f64,
    q: &QuadratureConfig,
) -> Result<Vec<f64>> {
    q.validate()?;
    let u_max = u_range(l_cut, q.tolerance);
    let h0 = q.initial_mesh;
    let n0 = (2.0 * u_max / h0).ceil() as usize;

    let g = |u: f64| -> f64 {
        let (xi, w) = node_at(l_cut, u);
        if xi <= 0.0 {
            return 0.0;
        }
        w * f(xi)
    };

    // Level 0 trapezoid on [−U, −U + n0·h0].
    let mut sum = 0.5 * (g(-u_max) + g(-u_max + n0 as f64 * h0));
    for i in 1..n0 {
        sum += g(-u_max + i as f64 * h0);
    }
    let mut h = h0;
    let mut estimates = vec![h * sum];
    for level in 1..=q.max_halvings {
        // New midpoints of the previous mesh.
        let prev_points = n0 << (level - 1);
        let mut new_sum = 0.0;
        for i in 0..prev_points {
            new_sum += g(-u_max + (i as f64 + 0.5) * h);
        }
        h *= 0.5;
        sum += new_sum;
        let estimate = h * sum;
        let previous = *estimates.last().unwrap();
        estimates.push(estimate);
        if level >= MIN_LEVEL && (estimate - previous).abs() < 0.5 * q.tolerance {
            return Ok(estimates);
        }
    }
    let n = estimates.len();
    Err(CdfError::NonConvergence {
        last: estimates[n - 1],
        previous: estimates[n - 2],
    })
}

#[derive(Clone, Copy)]
struct Node {
    xi: f64,
    /// weight / ξ, the t-independent factor of the integrand.
    w_over_xi: f64,
    phi: Complex64,
}

/// Reusable CDF evaluator for one law: truncation, transformed nodes and
/// φ at the nodes are computed once and shared across evaluation points.
pub struct CdfEvaluator {
    law: TailLawParams,
    config: QuadratureConfig,
    l_cut: f64,
    u_max: f64,
    n0: usize,
    /// levels[0] holds the coarse grid, levels[j] the midpoints added by
    /// halving level j−1; endpoint weights are folded into level 0.
    levels: Vec<Vec<Node>>,
}

impl CdfEvaluator {
    pub fn new(law: TailLawParams, config: QuadratureConfig) -> Result<Self> {
        config.validate()?;
        let l_cut = choose_truncation(0.0, &law, config.tolerance)?;
        let u_max = u_range(l_cut, config.tolerance);
        let n0 = (2.0 * u_max / config.initial_mesh).ceil() as usize;
        Ok(Self {
            law,
            config,
            l_cut,
            u_max,
            n0,
            levels: Vec::new(),
        })
    }

    pub fn truncation(&self) -> f64 {
        self.l_cut
    }

    pub fn config_tolerance(&self) -> f64 {
        self.config.tolerance
    }

    fn make_node(&self, u: f64, end_weight: f64) -> Result<Node> {
        let (xi, w) = node_at(self.l_cut, u);
        if xi <= 0.0 {
            return Ok(Node {
                xi: 1.0,
                w_over_xi: 0.0,
                phi: Complex64::new(0.0, 0.0),
            });
        }
        Ok(Node {
            xi,
            w_over_xi: end_weight * w / xi,
            phi: cf(xi, &self.law)?,
        })
    }

    fn ensure_level(&mut self, level: usize) -> Result<()> {
        while self.levels.len() <= level {
            let built = self.levels.len();
            if built == 0 {
                let mut nodes = Vec::with_capacity(self.n0 + 1);
                for i in 0..=self.n0 {
                    let u = -self.u_max + i as f64 * self.config.initial_mesh;
                    let end = if i == 0 || i == self.n0 { 0.5 } else { 1.0 };
                    nodes.push(self.make_node(u, end)?);
                }
                self.levels.push(nodes);
            } else {
                let h = self.config.initial_mesh / (1u64 << (built - 1)) as f64;
                let count = self.n0 << (built - 1);
                let mut nodes = Vec::with_capacity(count);
                for i in 0..count {
                    let u = -self.u_max + (i as f64 + 0.5) * h;
                    nodes.push(self.make_node(u, 1.0)?);
                }
                self.levels.push(nodes);
            }
        }
        Ok(())
    }

    fn level_sum(&self, level: usize, t: f64) -> f64 {
        let mut sum = 0.0;
        for node in &self.levels[level] {
            let (sin_t, cos_t) = (t * node.xi).sin_cos();
            sum += (node.phi.im * cos_t - node.phi.re * sin_t) * node.w_over_xi;
        }
        sum
    }

    /// F(t) to within the configured tolerance, clamped to [0, 1].
    pub fn cdf(&mut self, t: f64) -> Result<f64> {
        self.ensure_level(0)?;
        let mut running = self.level_sum(0, t);
        let mut h = self.config.initial_mesh;
        let mut previous = h * running;
        for level in 1..=self.config.max_halvings {
            self.ensure_level(level as usize)?;
            running += self.level_sum(level as usize, t);
            h *= 0.5;
            let estimate = h * running;
            if level >= MIN_LEVEL && (estimate - previous).abs() < 0.5 * self.config.tolerance {
                let f = 0.5 - estimate / std::f64::consts::PI;
                return Ok(f.clamp(0.0, 1.0));
            }
            previous = estimate;
        }
        Err(CdfError::NonConvergence {
            last: previous,
            previous: f64::NAN,
        })
    }
}

/// One-shot evaluation of F(t); builds a fresh evaluator. Quantile
/// searches should hold a [`CdfEvaluator`] instead.
pub fn evaluate_cdf(t: f64, law: &TailLawParams, q: &QuadratureConfig) -> Result<f64> {
    CdfEvaluator::new(*law, *q)?.cdf(t)
}
