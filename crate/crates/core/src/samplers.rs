//! Per-coordinate simulation of the limiting scaling process: the head
//! (top τ normalized inverse-exponential scalings) and the aggregate tail
//! (normalized sum of squares of everything below the head), replacing
//! explicit polynomial-factor duplication.
//!
//! The head uses the arrival-time representation of the Poisson point
//! process with tail intensity y^{−p}: cumulative sums Γ_j of standard
//! exponentials give the decreasing points v_j = Γ_j^{−1/p} directly, with
//! no retry loop. A Poisson-count construction of the same process is kept
//! as a cross-check only.
//!
//! The tail aggregate is drawn from the limiting law by inverse-transform
//! sampling: a uniform y and a binary search for F(x) = y against the
//! quadrature CDF oracle. For hot paths a per-p quantile table built from
//! the same oracle (see [`TailQuantileTable`]) answers interpolated
//! queries in constant time, with the exact search as fallback.

use crate::cdf::{CdfError, CdfEvaluator, QuadratureConfig};
use crate::cf::TailLawParams;
use crate::tape::{label, TapeKey};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TailSampleError {
    #[error("bracket doubling exceeded {doublings} steps")]
    BracketCap { doublings: u32 },
    #[error(transparent)]
    Cdf(#[from] CdfError),
}

pub type Result<T> = std::result::Result<T, TailSampleError>;

/// Top τ normalized scalings of one coordinate, decreasing, plus the
/// derived truncation parameter R = v_τ².
#[derive(Debug, Clone, PartialEq)]
pub struct HeadStatistics {
    values: Vec<f64>,
    arrivals: Vec<f64>,
    trunc: f64,
}

impl HeadStatistics {
    /// v_1 > v_2 > … > v_τ.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cumulative exponential sums Γ_1 < … < Γ_τ.
    pub fn arrivals(&self) -> &[f64] {
        &self.arrivals
    }

    /// R = v_τ², exactly the square of the last head value.
    pub fn truncation(&self) -> f64 {
        self.trunc
    }

    pub fn tau(&self) -> usize {
        self.values.len()
    }

    /// Assemble from explicit values; test and bench constructor.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(!values.is_empty());
        assert!(values.windows(2).all(|w| w[0] > w[1]), "head must decrease");
        let trunc = values.last().unwrap() * values.last().unwrap();
        let arrivals = Vec::new();
        Self {
            values,
            arrivals,
            trunc,
        }
    }
}

/// Aggregate tail: normalized sum of squares σ̃² of the scalings below
/// the head, drawn from the limiting law at R = v_τ².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailAggregate {
    pub sigma_sq: f64,
}

/// Deterministic head construction from explicit exponentials.
pub fn head_from_exponentials(exps: &[f64], p: f64) -> HeadStatistics {
    assert!(exps.len() >= 2, "need tau >= 2");
    let mut arrivals = Vec::with_capacity(exps.len());
    let mut acc = 0.0;
    for &e in exps {
        assert!(e > 0.0);
        acc += e;
        arrivals.push(acc);
    }
    let values: Vec<f64> = arrivals.iter().map(|&g| g.powf(-1.0 / p)).collect();
    let last = *values.last().unwrap();
    HeadStatistics {
        values,
        arrivals,
        trunc: last * last,
    }
}

/// Sample the head of `coordinate` from the tape scope (instance-level
/// key): Γ_j are partial sums of standard exponentials keyed by
/// (coordinate, head, j).
pub fn sample_head(scope: TapeKey, coordinate: u64, tau: usize, p: f64) -> HeadStatistics {
    assert!(tau >= 2 && p > 0.0 && p < 2.0);
    let coord = scope.at(label::COORD, coordinate);
    let exps: Vec<f64> = (0..tau)
        .map(|j| coord.at(label::HEAD_EXP, j as u64).exponential())
        .collect();
    head_from_exponentials(&exps, p)
}

/// Poisson-count construction of the same process restricted to
/// [y₀, ∞): N ~ Poi(y₀^{−p}) points, i.i.d. locations y₀·U^{−1/p},
/// sorted decreasing. Cross-check implementation only.
pub fn sample_head_ppp_region(scope: TapeKey, y0: f64, p: f64) -> Vec<f64> {
    assert!(y0 > 0.0 && p > 0.0 && p < 2.0);
    let lambda = y0.powf(-p);
    let key = scope.at(label::PPP, 0);
    // Knuth product-of-uniforms Poisson sampler.
    let threshold = (-lambda).exp();
    let mut n = 0u64;
    let mut product = 1.0f64;
    loop {
        product *= key.at(label::PPP, n + 1).uniform();
        if product <= threshold {
            break;
        }
        n += 1;
    }
    let mut points: Vec<f64> = (0..n)
        .map(|i| {
            let u = key.at(label::SLOT, i).uniform();
            y0 * u.powf(-1.0 / p)
        })
        .collect();
    points.sort_by(|a, b| b.partial_cmp(a).unwrap());
    points
}

/// Round to `bits` significant bits (round-to-nearest, ties to even in
/// the significand).
pub fn round_to_sig_bits(x: f64, bits: u32) -> f64 {
    if x == 0.0 || !x.is_finite() || bits >= 53 {
        return x;
    }
    let raw = x.to_bits();
    let drop = 53 - bits; // mantissa bits to clear
    let mask = (1u64 << drop) - 1;
    let frac = raw & mask;
    let half = 1u64 << (drop - 1);
    let base = raw & !mask;
    let rounded = if frac > half || (frac == half && (base >> drop) & 1 == 1) {
        base + (1u64 << drop) // carry may ripple into the exponent; that is correct rounding
    } else {
        base
    };
    f64::from_bits(rounded)
}

const BRACKET_CAP: u32 = 60;
const UNIFORM_CLAMP: f64 = 1.0 / (1u64 << 40) as f64; // 2^{-40}

/// Invert `eval`'s CDF at probability `y`, returning the quantile rounded
/// to `l_bits` significant bits.
pub fn invert_cdf(eval: &mut CdfEvaluator, law: &TailLawParams, y: f64, l_bits: u32) -> Result<f64> {
    let eps = eval_tolerance(eval);
    // Bracket by doubling from the law mean.
    let mut hi = law.mean();
    let mut f_hi = eval.cdf(hi)?;
    let mut doublings = 0;
    while f_hi < y {
        hi *= 2.0;
        f_hi = eval.cdf(hi)?;
        doublings += 1;
        if doublings > BRACKET_CAP {
            return Err(TailSampleError::BracketCap {
                doublings: BRACKET_CAP,
            });
        }
    }
    let mut lo = 0.0f64;
    let mut f_lo = 0.0f64;
    let width_target = |x: f64| 2.0f64.powi(-(l_bits as i32)) * x.abs().max(1.0);
    let gap_target = eps.max(2.0f64.powi(-(l_bits as i32)));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // float resolution exhausted
        }
        let fm = eval.cdf(mid)?;
        if fm < y {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
            f_hi = fm;
        }
        if hi - lo <= width_target(mid) && f_hi - f_lo <= gap_target {
            break;
        }
    }
    let _ = f_lo;
    Ok(round_to_sig_bits(0.5 * (lo + hi), l_bits))
}

fn eval_tolerance(eval: &CdfEvaluator) -> f64 {
    // The evaluator owns its config; tolerance drives the stopping gap.
    eval.config_tolerance()
}

/// Draw the tail aggregate for the law by inverse transform: uniform y
/// from the tape (clamped to [2^{−40}, 1−2^{−40}]), bracket by doubling
/// from the law mean, binary-search to `l_bits` precision.
pub fn sample_tail_sum(
    scope: TapeKey,
    law: &TailLawParams,
    l_bits: u32,
    q: &QuadratureConfig,
) -> Result<TailAggregate> {
    assert!((8..=48).contains(&l_bits), "l_bits must lie in [8, 48]");
    let y = scope.at(label::TAIL_U, 0).uniform();
    let y = y.clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
    let mut eval = CdfEvaluator::new(*law, *q)?;
    let x = invert_cdf(&mut eval, law, y, l_bits)?;
    Ok(TailAggregate { sigma_sq: x })
}

// ---------------------------------------------------------------------
// Quantile table for hot-path tail sampling.
// ---------------------------------------------------------------------

/// Precomputed quantiles of the normalized tail law.
///
/// The law is a scale family: with c = R^{−p/2}, the normalized draw
/// W/R depends on R only through c, and in the sampler c = Γ_τ exactly.
/// One table per p over (c, y) therefore serves every coordinate. Rows
/// are monotone-cubic in y; lookups blend rows linearly in ln c. Queries
/// outside the covered rectangle return `None` and the caller falls back
/// to the exact search.
pub struct TailQuantileTable {
    p: f64,
    ln_c_lo: f64,
    ln_c_step: f64,
    c_count: usize,
    y_lo: f64,
    y_step: f64,
    y_count: usize,
    /// Per c-node: quantile values x̃ = Q(y)/R and PCHIP slopes.
    rows: Vec<(Vec<f64>, Vec<f64>)>,
}

pub const TABLE_C_LO: f64 = 0.5;
pub const TABLE_C_HI: f64 = 160.0;
const TABLE_C_COUNT: usize = 56;
const TABLE_Y_COUNT: usize = 384;
pub const TABLE_Y_LO: f64 = 1.0 / 256.0;
pub const TABLE_Y_HI: f64 = 1.0 - 1.0 / 256.0;

impl TailQuantileTable {
    /// Build the table for exponent `p` with the given quadrature
    /// tolerance. Deterministic; uses only the CDF oracle.
    pub fn build(p: f64, q: &QuadratureConfig) -> Result<Self> {
        let s = 0.5 * p;
        let ln_c_lo = TABLE_C_LO.ln();
        let ln_c_step = (TABLE_C_HI / TABLE_C_LO).ln() / (TABLE_C_COUNT - 1) as f64;
        let y_step = (TABLE_Y_HI - TABLE_Y_LO) / (TABLE_Y_COUNT - 1) as f64;
        let mut rows = Vec::with_capacity(TABLE_C_COUNT);
        for ci in 0..TABLE_C_COUNT {
            let c = (ln_c_lo + ci as f64 * ln_c_step).exp();
            let r_trunc = c.powf(-1.0 / s);
            let law = TailLawParams::new(p, r_trunc).map_err(CdfError::from)?;
            let mut eval = CdfEvaluator::new(law, *q)?;
            let mut values = Vec::with_capacity(TABLE_Y_COUNT);
            for yi in 0..TABLE_Y_COUNT {
                let y = TABLE_Y_LO + yi as f64 * y_step;
                // Full-precision quantile (48 significant bits).
                let x = invert_cdf(&mut eval, &law, y, 48)?;
                values.push(x / r_trunc);
            }
            let slopes = pchip_slopes(y_step, &values);
            rows.push((values, slopes));
        }
        Ok(Self {
            p,
            ln_c_lo,
            ln_c_step,
            c_count: TABLE_C_COUNT,
            y_lo: TABLE_Y_LO,
            y_step,
            y_count: TABLE_Y_COUNT,
            rows,
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Interpolated σ̃² for truncation R and uniform y, or `None` when
    /// (c, y) falls outside the table.
    pub fn sample(&self, r_trunc: f64, y: f64) -> Option<f64> {
        let s = 0.5 * self.p;
        let c = r_trunc.powf(-s);
        let lc = c.ln();
        let fc = (lc - self.ln_c_lo) / self.ln_c_step;
        if !(0.0..=(self.c_count - 1) as f64).contains(&fc) {
            return None;
        }
        if !(self.y_lo..=self.y_lo + (self.y_count - 1) as f64 * self.y_step).contains(&y) {
            return None;
        }
        let ci = (fc as usize).min(self.c_count - 2);
        let w = fc - ci as f64;
        let a = self.row_value(ci, y);
        let b = self.row_value(ci + 1, y);
        Some(r_trunc * (a * (1.0 - w) + b * w))
    }

    fn row_value(&self, ci: usize, y: f64) -> f64 {
        let (values, slopes) = &self.rows[ci];
        let fy = (y - self.y_lo) / self.y_step;
        let yi = (fy as usize).min(self.y_count - 2);
        let t = fy - yi as f64;
        let h = self.y_step;
        let (v0, v1) = (values[yi], values[yi + 1]);
        let (m0, m1) = (slopes[yi], slopes[yi + 1]);
        // Cubic Hermite on [y_i, y_{i+1}].
        let t2 = t * t;
        let t3 = t2 * t;
        v0 * (2.0 * t3 - 3.0 * t2 + 1.0)
            + m0 * h * (t3 - 2.0 * t2 + t)
            + v1 * (-2.0 * t3 + 3.0 * t2)
            + m1 * h * (t3 - t2)
    }
}

/// Fritsch–Carlson monotone slopes on a uniform grid.
fn pchip_slopes(h: f64, values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let deltas: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    let mut m = vec![0.0f64; n];
    m[0] = deltas[0];
    m[n - 1] = deltas[n - 2];
    for i in 1..n - 1 {
        let (d0, d1) = (deltas[i - 1], deltas[i]);
        m[i] = if d0 * d1 <= 0.0 {
            0.0
        } else {
            2.0 * d0 * d1 / (d0 + d1) // harmonic mean keeps monotonicity
        };
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tape::RandomTape;

    #[test]
    fn worked_head_example() {
        // E = (0.5, 1.0), p = 1: Γ = (0.5, 1.5), v = (2, 2/3), R = 4/9.
        let head = head_from_exponentials(&[0.5, 1.0], 1.0);
        assert!((head.values()[0] - 2.0).abs() < 1e-15);
        assert!((head.values()[1] - 0.666_666_666_666_666_6).abs() < 1e-12);
        assert!((head.truncation() - 0.444_444_444_444_444_4).abs() < 1e-12);
    }

    #[test]
    fn head_structure_and_determinism() {
        let tape = RandomTape::new(11);
        let scope = tape.key().at(label::INSTANCE, 0);
        for coord in 0..50u64 {
            let h1 = sample_head(scope, coord, 8, 1.3);
            let h2 = sample_head(scope, coord, 8, 1.3);
            assert_eq!(h1, h2);
            assert!(h1.values().windows(2).all(|w| w[0] > w[1]));
            let last = *h1.values().last().unwrap();
            assert_eq!(h1.truncation(), last * last);
            // v_j = Γ_j^{−1/p} exactly.
            for (v, g) in h1.values().iter().zip(h1.arrivals()) {
                assert_eq!(*v, g.powf(-1.0 / 1.3));
            }
        }
    }

    #[test]
    fn head_maximum_is_inverse_exponential() {
        // v₁^{−p} = Γ₁ is standard exponential; KS over 10⁶ trials.
        let tape = RandomTape::new(404);
        let scope = tape.key().at(label::INSTANCE, 0);
        let p = 1.5;
        let mut xs: Vec<f64> = (0..1_000_000u64)
            .map(|c| sample_head(scope, c, 2, p).values()[0].powf(-p))
            .collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = crate::harness::ks_statistic(&xs, |x| 1.0 - (-x).exp());
        assert!(d <= 0.002, "KS {d}");
    }

    #[test]
    fn ppp_region_empty_at_extreme_cut() {
        let tape = RandomTape::new(5);
        let scope = tape.key().at(label::INSTANCE, 1);
        let mut nonempty = 0;
        for c in 0..100_000u64 {
            if !sample_head_ppp_region(scope.at(label::COORD, c), 1e6, 1.0).is_empty() {
                nonempty += 1;
            }
        }
        // λ = 10⁻⁶ per trial; P(N=0) ≥ 1 − 2e−6 empirically means no
        // more than 0 hits in 10⁵ trials at this seed.
        assert_eq!(nonempty, 0);
    }

    #[test]
    fn ppp_region_count_mean() {
        let tape = RandomTape::new(6);
        let scope = tape.key().at(label::INSTANCE, 1);
        let y0 = 0.5f64;
        let p = 1.0;
        let lambda = y0.powf(-p);
        let trials = 1_000_000u64;
        let mut total = 0usize;
        for c in 0..trials {
            total += sample_head_ppp_region(scope.at(label::COORD, c), y0, p).len();
        }
        let mean = total as f64 / trials as f64;
        assert!(
            (mean - lambda).abs() <= 0.01 * lambda,
            "mean {mean} vs λ {lambda}"
        );
    }

    #[test]
    fn ppp_region_matches_arrival_construction_above_cut() {
        // Maxima above a fixed cut agree between the two constructions.
        let tape = RandomTape::new(7);
        let p = 1.0;
        let y0 = 1.0;
        let trials = 100_000u64;
        let mut via_region: Vec<f64> = Vec::new();
        let mut via_arrivals: Vec<f64> = Vec::new();
        for c in 0..trials {
            let pts = sample_head_ppp_region(
                tape.key().at(label::INSTANCE, 2).at(label::COORD, c),
                y0,
                p,
            );
            if let Some(&m) = pts.first() {
                via_region.push(m);
            }
            let head = sample_head(tape.key().at(label::INSTANCE, 3), c, 2, p);
            if head.values()[0] > y0 {
                via_arrivals.push(head.values()[0]);
            }
        }
        via_region.sort_by(|a, b| a.partial_cmp(b).unwrap());
        via_arrivals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let d = crate::harness::ks_two_sample(&via_region, &via_arrivals);
        assert!(d <= 0.01, "KS {d}");
    }

    #[test]
    fn rounding_to_significant_bits() {
        // 1 + 2^{-20} at 10 significant bits collapses to 1.
        assert_eq!(round_to_sig_bits(1.0 + 2.0f64.powi(-20), 10), 1.0);
        // Exactly representable values survive.
        assert_eq!(round_to_sig_bits(1.5, 10), 1.5);
        // Ties to even: 1 + 2^{-10} at 10 bits sits halfway between 1 and
        // 1 + 2^{-9}; the even mantissa is 1.
        assert_eq!(round_to_sig_bits(1.0 + 2.0f64.powi(-10), 10), 1.0);
        // Carry propagation: just below 2 rounds up to 2.
        assert_eq!(round_to_sig_bits(1.9999999999, 8), 2.0);
        assert_eq!(round_to_sig_bits(0.0, 10), 0.0);
        // Round-trip stability.
        let x = 0.123456789;
        let r = round_to_sig_bits(x, 30);
        assert_eq!(round_to_sig_bits(r, 30), r);
        assert!((r - x).abs() <= x * 2.0f64.powi(-30));
    }

    #[test]
    fn tail_sample_clamps_low_uniforms() {
        // Forcing y to the clamp floor: F(returned) ≤ 2^{-39}.
        let law = TailLawParams::new(1.0, 1.0).unwrap();
        let q = QuadratureConfig::with_tolerance(1e-10);
        let mut eval = CdfEvaluator::new(law, q).unwrap();
        let x = invert_cdf(&mut eval, &law, UNIFORM_CLAMP, 30).unwrap();
        let f = eval.cdf(x).unwrap();
        assert!(f <= 2.0f64.powi(-39), "F = {f}");
    }

    #[test]
    fn tail_sample_postcondition_and_determinism() {
        let law = TailLawParams::new(1.0, 1.0).unwrap();
        let q = QuadratureConfig::with_tolerance(1e-8);
        let tape = RandomTape::new(21);
        let l_bits = 30;
        for coord in 0..100u64 {
            let scope = tape.key().at(label::INSTANCE, 0).at(label::COORD, coord);
            let t1 = sample_tail_sum(scope, &law, l_bits, &q).unwrap();
            let t2 = sample_tail_sum(scope, &law, l_bits, &q).unwrap();
            assert_eq!(t1, t2);
            assert!(t1.sigma_sq > 0.0);
            // Re-evaluated CDF at the output is within 4ε_q + 2^{−L+2}
            // of the driving uniform.
            let y = scope
                .at(label::TAIL_U, 0)
                .uniform()
                .clamp(UNIFORM_CLAMP, 1.0 - UNIFORM_CLAMP);
            let f = evaluate_once(&law, &q, t1.sigma_sq);
            let bound = 4.0 * q.tolerance + 2.0f64.powi(-(l_bits as i32) + 2);
            assert!((f - y).abs() <= bound, "coord {coord}: |{f} - {y}| > {bound}");
        }
    }

    fn evaluate_once(law: &TailLawParams, q: &QuadratureConfig, x: f64) -> f64 {
        crate::cdf::evaluate_cdf(x, law, q).unwrap()
    }

    #[test]
    fn quantile_table_matches_exact_inversion() {
        let p = 1.0;
        let q = QuadratureConfig::with_tolerance(1e-6);
        let table = TailQuantileTable::build(p, &q).unwrap();
        let mut state = 99u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..40 {
            let c = 1.0 + 80.0 * next();
            let y = 0.02 + 0.96 * next();
            let r_trunc = c.powf(-2.0 / p);
            let law = TailLawParams::new(p, r_trunc).unwrap();
            let interp = table.sample(r_trunc, y).expect("inside table");
            let mut eval = CdfEvaluator::new(law, q).unwrap();
            let exact = invert_cdf(&mut eval, &law, y, 48).unwrap();
            let rel = ((interp - exact) / exact).abs();
            assert!(rel < 2e-3, "c={c} y={y}: interp {interp} exact {exact}");
        }
    }

    #[test]
    fn quantile_table_rejects_out_of_range() {
        let q = QuadratureConfig::with_tolerance(1e-5);
        let table = TailQuantileTable::build(1.5, &q).unwrap();
        let r_inside = 4.0f64.powf(-2.0 / 1.5);
        assert!(table.sample(r_inside, 0.5).is_some());
        assert!(table.sample(r_inside, 1e-9).is_none());
        let r_outside = 0.1f64.powf(-2.0 / 1.5); // c = 0.1 below range
        assert!(table.sample(r_outside, 0.5).is_none());
    }
}
