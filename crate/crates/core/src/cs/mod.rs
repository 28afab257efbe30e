//! Two-extreme-point coordinate search with weight bundling.
//!
//! Every variable carries a box constraint `[lower, upper]` and a current
//! value. One iteration shuffles the variables into bundles, and for each
//! bundle evaluates two candidates: all bundle variables at their lower
//! bounds, and all at their upper bounds (variables outside the bundle stay
//! at their current values). The losing side of each bundled interval is cut
//! by the shrinkage factor and the current value moves to the new midpoint,
//! so the search space contracts exponentially toward the better half.
//! Bundles are processed sequentially; later bundles in the same iteration
//! see the updated values of earlier ones.
//!
//! The optimizer is written against a black-box [`FitnessFunction`]; it knows
//! nothing about networks or datasets. Data-fold rotation is driven through a
//! hook invoked after every bundle, and both candidates of a bundle are
//! always evaluated against the same fold so their comparison is meaningful.

pub mod checkpoint;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use thiserror::Error;

use crate::record::{EvalMetrics, RunRecord};

/// Boxed error type fitness implementations may fail with.
pub type FitnessError = Box<dyn std::error::Error + Send + Sync + 'static>;

#[derive(Debug, Error)]
pub enum CsError {
    #[error("invalid coordinate-search config: {0}")]
    InvalidConfig(String),
    #[error("fitness evaluation failed at bundle {bundle} (nfc {nfc}): {source}")]
    FitnessEval {
        bundle: usize,
        nfc: u64,
        #[source]
        source: FitnessError,
    },
    #[error("non-finite loss {value} at bundle {bundle} (nfc {nfc})")]
    NonFiniteLoss { bundle: usize, nfc: u64, value: f64 },
}

/// Black-box objective: maps a parameter vector to a scalar loss.
///
/// Implementations must be deterministic for a fixed parameter vector and a
/// fixed data-fold position, and must not advance any fold state themselves;
/// the optimizer owns fold rotation.
pub trait FitnessFunction {
    fn evaluate(&self, params: &[f64]) -> Result<f64, FitnessError>;
}

/// Plain closures work as fitness functions in tests and synthetic
/// benchmarks.
impl<F> FitnessFunction for F
where
    F: Fn(&[f64]) -> f64,
{
    fn evaluate(&self, params: &[f64]) -> Result<f64, FitnessError> {
        Ok(self(params))
    }
}

/// Which extreme of a box constraint a candidate uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

/// Outcome of comparing the two candidates of one bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Winner {
    Lower,
    Upper,
    Tie,
}

/// Per-variable box constraint and current value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxInterval {
    pub lower: f64,
    pub upper: f64,
    pub current: f64,
}

impl BoxInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        (self.lower + self.upper) / 2.0
    }

    /// Cuts `width * bsf` off the losing side and re-centers the current
    /// value; a tie leaves the interval untouched.
    pub fn shrink(&self, winner: Winner, bsf: f64) -> BoxInterval {
        let cut = self.width() * bsf;
        match winner {
            Winner::Lower => {
                let upper = self.upper - cut;
                BoxInterval {
                    lower: self.lower,
                    upper,
                    current: (self.lower + upper) / 2.0,
                }
            }
            Winner::Upper => {
                let lower = self.lower + cut;
                BoxInterval {
                    lower,
                    upper: self.upper,
                    current: (lower + self.upper) / 2.0,
                }
            }
            Winner::Tie => *self,
        }
    }
}

/// How the current values are seeded before the first iteration.
///
/// Initialization only matters for the earliest fitness evaluations: the
/// first non-tie shrink of a variable overwrites its current value with the
/// interval midpoint. Random draws are clamped into the box bounds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitScheme {
    /// Every current value starts at the interval midpoint.
    Center,
    /// Independent draws from `[lo, hi]`.
    Uniform { lo: f64, hi: f64 },
    /// Independent draws from `Normal(mu, sigma)`.
    CenterNormal { mu: f64, sigma: f64 },
}

/// A run phase: `iterations` iterations at `bundle_size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ScheduleEntry {
    pub iterations: usize,
    pub bundle_size: usize,
}

/// Full configuration of a coordinate-search run.
#[derive(Clone, Debug)]
pub struct CsConfig {
    /// Problem dimension `D`.
    pub dimension: usize,
    /// Box-constraint shrinkage factor, in `(0, 0.5)`.
    pub bsf: f64,
    /// Total iteration count; must equal the schedule sum.
    pub iterations: usize,
    /// Bundle sizes per run phase, e.g. 5 iterations at 25 then 20 at 100.
    pub bundle_schedule: Vec<ScheduleEntry>,
    pub init_scheme: InitScheme,
    pub initial_lower: f64,
    pub initial_upper: f64,
    pub seed: u64,
}

impl CsConfig {
    /// Uniform schedule helper: `iterations` iterations at one bundle size.
    pub fn flat_schedule(iterations: usize, bundle_size: usize) -> Vec<ScheduleEntry> {
        vec![ScheduleEntry {
            iterations,
            bundle_size,
        }]
    }

    pub fn validate(&self) -> Result<(), CsError> {
        let fail = |msg: String| Err(CsError::InvalidConfig(msg));
        if self.dimension == 0 {
            return fail("dimension must be positive".into());
        }
        if !self.initial_lower.is_finite() || !self.initial_upper.is_finite() {
            return fail("bounds must be finite".into());
        }
        if self.initial_lower >= self.initial_upper {
            return fail(format!(
                "initial bounds [{}, {}] must satisfy lower < upper",
                self.initial_lower, self.initial_upper
            ));
        }
        if !(self.bsf > 0.0 && self.bsf < 0.5) {
            return fail(format!("bsf {} must lie in (0, 0.5)", self.bsf));
        }
        if self.iterations == 0 {
            return fail("iteration count must be positive".into());
        }
        let schedule_sum: usize = self.bundle_schedule.iter().map(|e| e.iterations).sum();
        if schedule_sum != self.iterations {
            return fail(format!(
                "bundle schedule covers {schedule_sum} iterations, config says {}",
                self.iterations
            ));
        }
        for entry in &self.bundle_schedule {
            if entry.bundle_size == 0 || entry.bundle_size > self.dimension {
                return fail(format!(
                    "bundle size {} must lie in 1..={}",
                    entry.bundle_size, self.dimension
                ));
            }
            if entry.iterations == 0 {
                return fail("schedule entries need at least one iteration".into());
            }
        }
        match self.init_scheme {
            InitScheme::Center => {}
            InitScheme::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return fail(format!("uniform init range [{lo}, {hi}] needs lo < hi"));
                }
            }
            InitScheme::CenterNormal { mu, sigma } => {
                if !(sigma > 0.0) {
                    return fail(format!("normal init sigma {sigma} must be positive"));
                }
                if !mu.is_finite() {
                    return fail("normal init mean must be finite".into());
                }
            }
        }
        Ok(())
    }
}

/// Mutable state of a run: all intervals, the best evaluated candidate so
/// far, the fitness-call counter, and the deterministic generator.
#[derive(Clone, Debug)]
pub struct SearchState {
    pub intervals: Vec<BoxInterval>,
    pub best_value: f64,
    pub best_params: Vec<f64>,
    pub nfc: u64,
    pub iteration: u64,
    rng: ChaCha8Rng,
}

impl SearchState {
    pub fn dimension(&self) -> usize {
        self.intervals.len()
    }

    /// The current-point vector (every variable at its current value).
    pub fn current_params(&self) -> Vec<f64> {
        self.intervals.iter().map(|iv| iv.current).collect()
    }

    pub(crate) fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub(crate) fn restore(
        intervals: Vec<BoxInterval>,
        best_value: f64,
        best_params: Vec<f64>,
        nfc: u64,
        iteration: u64,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            intervals,
            best_value,
            best_params,
            nfc,
            iteration,
            rng,
        }
    }
}

/// Builds the initial state: every interval spans the configured bounds and
/// current values are seeded by the init scheme (random draws clamped into
/// the bounds). `best_value` starts at infinity so the first evaluation
/// always takes over.
pub fn init_state(config: &CsConfig) -> Result<SearchState, CsError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = (config.initial_lower, config.initial_upper);
    let currents: Vec<f64> = match config.init_scheme {
        InitScheme::Center => vec![(lo + hi) / 2.0; config.dimension],
        InitScheme::Uniform { lo: a, hi: b } => {
            let dist = Uniform::new_inclusive(a, b)
                .map_err(|e| CsError::InvalidConfig(format!("uniform init: {e}")))?;
            (0..config.dimension)
                .map(|_| dist.sample(&mut rng).clamp(lo, hi))
                .collect()
        }
        InitScheme::CenterNormal { mu, sigma } => {
            let dist = Normal::new(mu, sigma)
                .map_err(|e| CsError::InvalidConfig(format!("normal init: {e}")))?;
            (0..config.dimension)
                .map(|_| dist.sample(&mut rng).clamp(lo, hi))
                .collect()
        }
    };
    let intervals = currents
        .iter()
        .map(|&c| BoxInterval {
            lower: lo,
            upper: hi,
            current: c,
        })
        .collect();
    Ok(SearchState {
        intervals,
        best_value: f64::INFINITY,
        best_params: currents,
        nfc: 0,
        iteration: 0,
        rng,
    })
}

/// Shuffles all variable indices with the state's generator and splits them
/// into `ceil(D / bundle_size)` bundles; only the last may be smaller.
pub fn make_bundles(state: &mut SearchState, bundle_size: usize) -> Vec<Vec<usize>> {
    debug_assert!(bundle_size >= 1 && bundle_size <= state.dimension());
    let mut indices: Vec<usize> = (0..state.dimension()).collect();
    indices.shuffle(&mut state.rng);
    indices
        .chunks(bundle_size)
        .map(|chunk| chunk.to_vec())
        .collect()
}

/// The candidate vector for one bundle: current values everywhere, with
/// every bundled variable replaced by its lower or upper bound.
pub fn candidate_params(state: &SearchState, bundle: &[usize], side: Side) -> Vec<f64> {
    let mut params = state.current_params();
    for &i in bundle {
        params[i] = match side {
            Side::Lower => state.intervals[i].lower,
            Side::Upper => state.intervals[i].upper,
        };
    }
    params
}

fn evaluate<F: FitnessFunction>(
    fitness: &F,
    params: &[f64],
    bundle: usize,
    nfc: u64,
) -> Result<f64, CsError> {
    let value = fitness
        .evaluate(params)
        .map_err(|source| CsError::FitnessEval { bundle, nfc, source })?;
    if !value.is_finite() {
        return Err(CsError::NonFiniteLoss {
            bundle,
            nfc,
            value,
        });
    }
    Ok(value)
}

/// Runs one full iteration: shuffle-bundle once, then per bundle evaluate
/// the two extreme candidates on the same data fold, shrink toward the
/// winner, track the best evaluated candidate, and advance the fold via
/// `fold_hook`. Later bundles see earlier bundles' updated current values.
pub fn run_iteration<F: FitnessFunction>(
    state: &mut SearchState,
    fitness: &F,
    bundle_size: usize,
    bsf: f64,
    fold_hook: &mut dyn FnMut(),
) -> Result<(), CsError> {
    let bundles = make_bundles(state, bundle_size);
    for (b, bundle) in bundles.iter().enumerate() {
        let lower_candidate = candidate_params(state, bundle, Side::Lower);
        let upper_candidate = candidate_params(state, bundle, Side::Upper);
        let f_lower = evaluate(fitness, &lower_candidate, b, state.nfc)?;
        let f_upper = evaluate(fitness, &upper_candidate, b, state.nfc)?;
        state.nfc += 2;

        let winner = if f_lower < f_upper {
            Winner::Lower
        } else if f_lower > f_upper {
            Winner::Upper
        } else {
            Winner::Tie
        };
        for &i in bundle {
            state.intervals[i] = state.intervals[i].shrink(winner, bsf);
        }
        if f_lower < state.best_value {
            state.best_value = f_lower;
            state.best_params = lower_candidate;
        }
        if f_upper < state.best_value {
            state.best_value = f_upper;
            state.best_params = upper_candidate;
        }
        fold_hook();
    }
    state.iteration += 1;
    Ok(())
}

/// Result of a full coordinate-search run.
#[derive(Clone, Debug)]
pub struct CsRun {
    /// Current-point vector after the final iteration (the midpoints).
    pub final_params: Vec<f64>,
    /// Best candidate ever evaluated, and its loss.
    pub best_params: Vec<f64>,
    pub best_value: f64,
    /// One record per iteration.
    pub records: Vec<RunRecord>,
    /// Final optimizer state (for checkpointing).
    pub state: SearchState,
}

/// Runs the configured schedule from a fresh state.
///
/// `on_iteration` is called after every iteration with the updated state and
/// supplies the metric columns of that iteration's [`RunRecord`];
/// `fold_hook` is forwarded to [`run_iteration`] and fires after every
/// bundle. Identical configs (with a stationary fitness and fold sequence)
/// produce identical runs, except for the wall-clock column.
pub fn optimize<F: FitnessFunction>(
    fitness: &F,
    config: &CsConfig,
    mut on_iteration: impl FnMut(&SearchState) -> EvalMetrics,
    mut fold_hook: impl FnMut(),
) -> Result<CsRun, CsError> {
    let start = std::time::Instant::now();
    let mut state = init_state(config)?;
    let mut records = Vec::with_capacity(config.iterations);
    for entry in &config.bundle_schedule {
        for _ in 0..entry.iterations {
            run_iteration(&mut state, fitness, entry.bundle_size, config.bsf, &mut fold_hook)?;
            let eval = on_iteration(&state);
            records.push(RunRecord::new(
                state.iteration,
                state.nfc,
                eval,
                start.elapsed().as_secs_f64(),
            ));
        }
    }
    Ok(CsRun {
        final_params: state.current_params(),
        best_params: state.best_params.clone(),
        best_value: state.best_value,
        records,
        state,
    })
}
