//! Full perfect L_p sampler: per-instance turnstile ingest, finalize with
//! top-2 head-slot estimation, the statistical test, and multi-instance
//! amplification to failure probability δ.
//!
//! Per stream update each instance regenerates the coordinate's head and
//! tail from the tape (memoized after first touch — the tail sample in
//! particular must stay fixed across updates for the sketch to remain
//! linear) and pushes the update into its dense sketch. At finalize every
//! head slot of every coordinate is estimated; the two largest magnitudes
//! and the norm estimate feed the test
//!
//!   FAIL  iff  ẑ₁ − ẑ₂ < 100·μ·ε·Z   or   ẑ₂ < 50·μ·ε·Z,
//!
//! with μ uniform in [0.99, 1.01] drawn once per instance. The reported
//! index is the coordinate owning the winning slot of the first passing
//! instance, or ⊥ when all instances fail.

use crate::cdf::{CdfEvaluator, QuadratureConfig};
use crate::cf::TailLawParams;
use crate::samplers::{
    invert_cdf, round_to_sig_bits, sample_head, HeadStatistics, TailAggregate, TailQuantileTable,
    TailSampleError,
};
use crate::sketch::{SketchConfig, SketchState, Slot, VirtualIndex};
use crate::tape::{label, RandomTape, TapeKey};
use std::cell::Cell;
use std::collections::HashMap;
use std::collections::VecDeque;
use std::sync::{Arc, Mutex, OnceLock};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SamplerError {
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("coordinate {index} outside [0, {n})")]
    OutOfRange { index: u64, n: u64 },
    #[error("update magnitude {delta} exceeds bound {bound}")]
    Magnitude { delta: i64, bound: i64 },
    #[error(transparent)]
    Tail(#[from] TailSampleError),
}

pub type Result<T> = std::result::Result<T, SamplerError>;

/// All sampler tunables. `defaults_for` fills every derived field from
/// (n, p, δ, seed).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n: u64,
    pub p: f64,
    pub delta: f64,
    /// Head size τ.
    pub tau: usize,
    /// Sketch rows k.
    pub sketch_rows: usize,
    /// Sketch repetitions r.
    pub sketch_reps: usize,
    /// Statistical-test scale ε.
    pub eps_test: f64,
    /// Tail-sample precision in significant bits.
    pub l_bits: u32,
    /// Amplification instances m.
    pub instances: usize,
    pub seed: u64,
    pub quad: QuadratureConfig,
    /// Magnitude bound M on a single update.
    pub update_magnitude: i64,
    /// Per-instance memo capacity (coordinates); eviction re-derives.
    pub memo_budget: usize,
    /// Force the bracket+bisect tail path instead of the quantile table.
    pub exact_tail_sampling: bool,
    /// Escape hatch for the ẑ₂ < 50μεZ condition.
    pub disable_second_condition: bool,
}

fn log2_size(n: u64) -> f64 {
    (n.max(4) as f64).log2()
}

impl SamplerConfig {
    /// Spec-shaped defaults: τ = 3⌈log₂ n⌉, r = 2⌈log₂ n⌉+1,
    /// k = ⌈16/ε_nom²⌉ with ε_nom = 1/(4√log₂ n), m = ⌈4 ln(1/δ)⌉.
    /// The test scale ε defaults to 1/(320√log₂ n), calibrated so a
    /// single instance passes on at least half of the runs at desk scale
    /// (the nominal 1/(4√log₂ n) would put the gap threshold above ‖z‖₂
    /// and never pass).
    pub fn defaults_for(n: u64, p: f64, delta: f64, seed: u64) -> Result<Self> {
        let l2 = log2_size(n);
        let ceil_l2 = l2.ceil() as usize;
        let eps_nom = 1.0 / (4.0 * l2.sqrt());
        let cfg = Self {
            n,
            p,
            delta,
            tau: 3 * ceil_l2,
            sketch_rows: (16.0 / (eps_nom * eps_nom)).ceil() as usize,
            sketch_reps: 2 * ceil_l2 + 1,
            eps_test: 1.0 / (320.0 * l2.sqrt()),
            l_bits: 30,
            instances: (4.0 * (1.0 / delta).ln()).ceil().max(1.0) as usize,
            seed,
            quad: QuadratureConfig::with_tolerance(1e-6),
            update_magnitude: 1_000_000_000,
            memo_budget: n.max(1024).min(1 << 22) as usize,
            exact_tail_sampling: false,
            disable_second_condition: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(SamplerError::Config("n must be at least 1"));
        }
        if !(self.p > 0.0 && self.p < 2.0) {
            return Err(SamplerError::Config("p must lie in (0, 2)"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(SamplerError::Config("delta must lie in (0, 1)"));
        }
        if self.tau < 2 {
            return Err(SamplerError::Config("tau must be at least 2"));
        }
        if !(self.eps_test > 0.0 && self.eps_test <= 0.02) {
            return Err(SamplerError::Config("eps_test must lie in (0, 0.02]"));
        }
        if !(8..=48).contains(&self.l_bits) {
            return Err(SamplerError::Config("l_bits must lie in [8, 48]"));
        }
        if self.instances < 1 || self.sketch_rows < 1 || self.sketch_reps < 1 {
            return Err(SamplerError::Config("instances, rows, reps must be positive"));
        }
        if self.memo_budget < 1 {
            return Err(SamplerError::Config("memo budget must be positive"));
        }
        Ok(())
    }
}

/// Result of one finalized run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleOutcome {
    /// Sampled coordinate, or `None` for ⊥.
    pub result: Option<u64>,
    /// Instance that fired (first passing), if any.
    pub instance: Option<usize>,
    pub diagnostics: Diagnostics,
}

/// Test inputs and margins of the reporting instance (the firing one, or
/// instance 0 on ⊥).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Diagnostics {
    pub z1: f64,
    pub z2: f64,
    pub norm: f64,
    pub mu: f64,
    /// ẑ₁ − ẑ₂ − 100μεZ (≥ 0 required to pass).
    pub gap_margin: f64,
    /// ẑ₂ − 50μεZ (≥ 0 required unless disabled).
    pub second_margin: f64,
}

/// The gate deciding output vs ⊥. `z1 ≥ z2 ≥ 0` is the caller's job
/// (sort by magnitude). Fails iff the gap or the second estimate falls
/// under its jittered threshold; all-zero inputs fail by convention.
pub fn statistical_test(z1: f64, z2: f64, norm: f64, eps_test: f64, mu: f64) -> bool {
    statistical_test_with(z1, z2, norm, eps_test, mu, false)
}

pub fn statistical_test_with(
    z1: f64,
    z2: f64,
    norm: f64,
    eps_test: f64,
    mu: f64,
    disable_second: bool,
) -> bool {
    assert!(z1 >= z2 && z2 >= 0.0, "caller must order magnitudes");
    assert!((0.99..=1.01).contains(&mu));
    if norm == 0.0 && z1 == 0.0 {
        return false;
    }
    if z1 - z2 < 100.0 * mu * eps_test * norm {
        return false;
    }
    if !disable_second && z2 < 50.0 * mu * eps_test * norm {
        return false;
    }
    true
}

struct CoordState {
    head: HeadStatistics,
    tail: TailAggregate,
}

struct Instance {
    scope: TapeKey,
    sketch: SketchState,
    memo: HashMap<u64, Arc<CoordState>>,
    order: VecDeque<u64>,
}

/// Perfect L_p sampler over a turnstile stream.
pub struct PerfectLpSampler {
    config: SamplerConfig,
    instances: Vec<Instance>,
    tail_table: Option<Arc<TailQuantileTable>>,
    /// Derivations outside the sketch: head exponentials and tail
    /// uniforms (first touch per (instance, coordinate)) plus μ draws.
    side_derivations: Cell<u64>,
    /// Tail draws that fell outside the table and used the exact search.
    exact_tail_fallbacks: Cell<u64>,
}

fn table_cache(p: f64, q: &QuadratureConfig) -> Result<Arc<TailQuantileTable>> {
    static TABLES: OnceLock<Mutex<HashMap<(u64, u64), Arc<TailQuantileTable>>>> = OnceLock::new();
    let cache = TABLES.get_or_init(|| Mutex::new(HashMap::new()));
    let key = (p.to_bits(), q.tolerance.to_bits());
    let mut guard = cache.lock().expect("table cache poisoned");
    if let Some(t) = guard.get(&key) {
        return Ok(t.clone());
    }
    let table = Arc::new(TailQuantileTable::build(p, q).map_err(SamplerError::Tail)?);
    guard.insert(key, table.clone());
    Ok(table)
}

impl PerfectLpSampler {
    pub fn new(config: SamplerConfig) -> Result<Self> {
        config.validate()?;
        let tape = RandomTape::new(config.seed);
        let sketch_cfg = SketchConfig {
            rows: config.sketch_rows,
            reps: config.sketch_reps,
        };
        let instances = (0..config.instances)
            .map(|m| {
                let scope = tape.key().at(label::INSTANCE, m as u64);
                Instance {
                    scope,
                    sketch: SketchState::new(sketch_cfg, scope),
                    memo: HashMap::new(),
                    order: VecDeque::new(),
                }
            })
            .collect();
        let tail_table = if config.exact_tail_sampling {
            None
        } else {
            Some(table_cache(config.p, &config.quad)?)
        };
        Ok(Self {
            config,
            instances,
            tail_table,
            side_derivations: Cell::new(0),
            exact_tail_fallbacks: Cell::new(0),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    /// Ingest one turnstile update (0-based coordinate).
    pub fn process_update(&mut self, index: u64, delta: i64) -> Result<()> {
        if index >= self.config.n {
            return Err(SamplerError::OutOfRange {
                index,
                n: self.config.n,
            });
        }
        if delta.abs() > self.config.update_magnitude {
            return Err(SamplerError::Magnitude {
                delta,
                bound: self.config.update_magnitude,
            });
        }
        let cfg = self.config;
        let table = self.tail_table.clone();
        for m in 0..self.instances.len() {
            let state = self.coord_state(m, index, &cfg, table.as_deref())?;
            self.instances[m]
                .sketch
                .update(index, delta, &state.head, &state.tail);
        }
        Ok(())
    }

    fn coord_state(
        &mut self,
        instance: usize,
        index: u64,
        cfg: &SamplerConfig,
        table: Option<&TailQuantileTable>,
    ) -> Result<Arc<CoordState>> {
        if let Some(state) = self.instances[instance].memo.get(&index) {
            return Ok(state.clone());
        }
        let scope = self.instances[instance].scope;
        let head = sample_head(scope, index, cfg.tau, cfg.p);
        let law = TailLawParams::new(cfg.p, head.truncation())
            .expect("head truncation is positive and finite");
        let y_raw = scope
            .at(label::COORD, index)
            .at(label::TAIL_U, 0)
            .uniform();
        // τ head exponentials and one tail uniform per first touch.
        self.side_derivations
            .set(self.side_derivations.get() + cfg.tau as u64 + 1);
        let clamp = 1.0 / (1u64 << 40) as f64;
        let y = y_raw.clamp(clamp, 1.0 - clamp);
        let sigma_sq = match table.and_then(|t| t.sample(law.trunc, y)) {
            Some(v) => round_to_sig_bits(v, cfg.l_bits),
            None => {
                self.exact_tail_fallbacks
                    .set(self.exact_tail_fallbacks.get() + 1);
                let mut eval =
                    CdfEvaluator::new(law, cfg.quad).map_err(TailSampleError::Cdf)?;
                invert_cdf(&mut eval, &law, y, cfg.l_bits)?
            }
        };
        let state = Arc::new(CoordState {
            head,
            tail: TailAggregate { sigma_sq },
        });
        let inst = &mut self.instances[instance];
        if inst.memo.len() >= cfg.memo_budget {
            if let Some(evicted) = inst.order.pop_front() {
                inst.memo.remove(&evicted);
            }
        }
        inst.memo.insert(index, state.clone());
        inst.order.push_back(index);
        Ok(state)
    }

    /// Finish the stream: run the statistical test per instance and
    /// report the first passing instance's argmax coordinate, or ⊥.
    pub fn finalize(&mut self) -> Result<SampleOutcome> {
        let cfg = self.config;
        let mut fallback_diag: Option<Diagnostics> = None;
        for m in 0..self.instances.len() {
            let (z1, z2, winner) = self.top_two_estimates(m);
            let norm = self.instances[m].sketch.estimate_norm();
            let mu = 0.99
                + 0.02
                    * self.instances[m]
                        .scope
                        .at(label::MU, 0)
                        .uniform();
            self.side_derivations.set(self.side_derivations.get() + 1);
            let pass = statistical_test_with(
                z1,
                z2,
                norm,
                cfg.eps_test,
                mu,
                cfg.disable_second_condition,
            );
            let diagnostics = Diagnostics {
                z1,
                z2,
                norm,
                mu,
                gap_margin: z1 - z2 - 100.0 * mu * cfg.eps_test * norm,
                second_margin: z2 - 50.0 * mu * cfg.eps_test * norm,
            };
            if pass {
                return Ok(SampleOutcome {
                    result: Some(winner),
                    instance: Some(m),
                    diagnostics,
                });
            }
            fallback_diag.get_or_insert(diagnostics);
        }
        Ok(SampleOutcome {
            result: None,
            instance: None,
            diagnostics: fallback_diag.expect("at least one instance"),
        })
    }

    /// Largest two |estimates| over all head slots, plus the coordinate
    /// owning the largest. Ties break toward the lower virtual index by
    /// iteration order and strict comparison.
    fn top_two_estimates(&self, m: usize) -> (f64, f64, u64) {
        let cfg = self.config;
        let sketch = &self.instances[m].sketch;
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        let mut winner = 0u64;
        for coord in 0..cfg.n {
            for j in 0..cfg.tau {
                let e = sketch
                    .estimate_entry(VirtualIndex {
                        coordinate: coord,
                        slot: Slot::Head(j as u32),
                    })
                    .expect("head slot")
                    .abs();
                if e > best {
                    second = best;
                    best = e;
                    winner = coord;
                } else if e > second {
                    second = e;
                }
            }
        }
        if best == f64::NEG_INFINITY {
            (0.0, 0.0, 0)
        } else if second == f64::NEG_INFINITY {
            (best, 0.0, winner)
        } else {
            (best, second, winner)
        }
    }

    /// Total tape derivations so far (sketch + head/tail/μ).
    pub fn derivation_count(&self) -> u64 {
        let sketch: u64 = self
            .instances
            .iter()
            .map(|i| i.sketch.derivation_count())
            .sum();
        sketch + self.side_derivations.get()
    }

    /// Steady-state per-update derivation model m·r·k·(τ+1).
    pub fn update_derivation_model(&self) -> u64 {
        (self.config.instances * self.config.sketch_reps * self.config.sketch_rows
            * (self.config.tau + 1)) as u64
    }

    pub fn exact_tail_fallbacks(&self) -> u64 {
        self.exact_tail_fallbacks.get()
    }
}

/// Convenience: run one full stream through a fresh sampler.
pub fn run_stream(config: SamplerConfig, updates: &[(u64, i64)]) -> Result<SampleOutcome> {
    let mut sampler = PerfectLpSampler::new(config)?;
    for &(i, d) in updates {
        sampler.process_update(i, d)?;
    }
    sampler.finalize()
}
