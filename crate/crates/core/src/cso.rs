//! Cat swarm optimisation over box-bounded real vectors.
//!
//! Every iteration the swarm is re-split into seeking cats, which sample a
//! small memory pool of mutated copies of their position and pick one by
//! fitness-weighted roulette, and tracing cats, which accelerate towards the
//! global best. All randomness is derived from the configured seed with one
//! stream per (iteration, cat), so serial and parallel evaluation produce the
//! same history.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::io::Write;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Minimize,
    Maximize,
}

impl Objective {
    /// True when `a` is strictly better than `b`.
    pub fn better<F: SwarmFitness>(self, a: &F, b: &F) -> bool {
        match self {
            Objective::Minimize => a.compare(b) == Ordering::Less,
            Objective::Maximize => a.compare(b) == Ordering::Greater,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CatMode {
    Seeking,
    Tracing,
}

/// How a seeking cat picks among its candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Roulette,
    /// Always the best candidate, ties to the lowest slot. Test hook.
    Greedy,
}

/// A fitness value the swarm can rank.
pub trait SwarmFitness: Clone + Debug + Send + Sync {
    /// Natural order: `Greater` means numerically larger / preferred when
    /// maximising.
    fn compare(&self, other: &Self) -> Ordering;
    /// Scalar view used for roulette weights and mean-fitness reporting.
    fn scalar(&self) -> f64;
}

impl SwarmFitness for f64 {
    fn compare(&self, other: &Self) -> Ordering {
        self.total_cmp(other)
    }
    fn scalar(&self) -> f64 {
        *self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cat<F> {
    pub position: Vec<f64>,
    pub velocity: Vec<f64>,
    pub mode: CatMode,
    pub fitness: Option<F>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwarmConfig {
    pub n_cats: usize,
    /// Fraction of the swarm in tracing mode.
    pub mixture_ratio: f64,
    /// Seeking memory pool size.
    pub smp: usize,
    /// Seeking mutation step as a fraction of each dimension's span.
    pub srd: f64,
    /// Fraction of dimensions mutated per seeking candidate.
    pub cdc: f64,
    /// Whether the current position occupies one seeking slot.
    pub spc: bool,
    pub c1: f64,
    /// Weight of the previous velocity in a tracing step. 1.0 carries the
    /// full velocity over; 0.0 makes every tracing step a fresh pull towards
    /// the global best.
    pub inertia: f64,
    /// Velocity limit as a fraction of each dimension's span.
    pub vmax_fraction: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub objective: Objective,
    pub selection: Selection,
    /// Evaluate fitness on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl Default for SwarmConfig {
    fn default() -> Self {
        SwarmConfig {
            n_cats: 30,
            mixture_ratio: 0.3,
            smp: 5,
            srd: 0.2,
            cdc: 0.8,
            spc: true,
            c1: 2.0,
            inertia: 0.0,
            vmax_fraction: 0.5,
            max_iters: 100,
            seed: 0,
            objective: Objective::Minimize,
            selection: Selection::Roulette,
            parallel: false,
        }
    }
}

impl SwarmConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_cats == 0 {
            return fail("n_cats must be >= 1".into());
        }
        if !(self.mixture_ratio > 0.0 && self.mixture_ratio < 1.0) {
            return fail(format!("mixture ratio {} not in (0,1)", self.mixture_ratio));
        }
        if self.smp == 0 || (self.spc && self.smp < 2) {
            return fail(format!("smp {} too small (spc={})", self.smp, self.spc));
        }
        if !(self.srd > 0.0 && self.srd <= 1.0) {
            return fail(format!("srd {} not in (0,1]", self.srd));
        }
        if !(self.cdc > 0.0 && self.cdc <= 1.0) {
            return fail(format!("cdc {} not in (0,1]", self.cdc));
        }
        if !(self.c1 > 0.0 && self.c1.is_finite()) {
            return fail(format!("c1 {} must be positive", self.c1));
        }
        if !(0.0..=1.0).contains(&self.inertia) {
            return fail(format!("inertia {} not in [0,1]", self.inertia));
        }
        if !(self.vmax_fraction > 0.0 && self.vmax_fraction.is_finite()) {
            return fail(format!("vmax fraction {} must be positive", self.vmax_fraction));
        }
        Ok(())
    }

    /// Number of tracing cats after each mode assignment.
    pub fn tracing_count(&self) -> usize {
        ((self.mixture_ratio * self.n_cats as f64).round() as usize).min(self.n_cats)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bounds {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Bounds {
    pub fn new(ranges: &[(f64, f64)]) -> Result<Self> {
        if ranges.is_empty() {
            return Err(Error::Config("at least one dimension is required".into()));
        }
        for (dim, &(lo, hi)) in ranges.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Bounds { dim, lo, hi });
            }
        }
        Ok(Bounds {
            lo: ranges.iter().map(|r| r.0).collect(),
            hi: ranges.iter().map(|r| r.1).collect(),
        })
    }

    pub fn uniform(dims: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(&vec![(lo, hi); dims])
    }

    pub fn dims(&self) -> usize {
        self.lo.len()
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn span(&self, d: usize) -> f64 {
        self.hi[d] - self.lo[d]
    }

    pub fn clamp(&self, d: usize, v: f64) -> f64 {
        v.clamp(self.lo[d], self.hi[d])
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims() && x.iter().enumerate().all(|(d, &v)| v >= self.lo[d] && v <= self.hi[d])
    }
}

/// Identifies one fitness evaluation. Iteration 0 is the initial swarm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalContext {
    pub iteration: usize,
    pub cat: usize,
    pub candidate: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord<F> {
    pub iteration: usize,
    pub best_fitness: F,
    pub mean_fitness: f64,
    pub best_position: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwarmHistory<F> {
    /// The evaluated initial population, recorded as iteration 0.
    pub initial: IterationRecord<F>,
    /// One record per move iteration.
    pub records: Vec<IterationRecord<F>>,
}

impl<F: SwarmFitness> SwarmHistory<F> {
    pub fn best_scalars(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_fitness.scalar()).collect()
    }

    /// Columns `iter,best_fitness,mean_fitness`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iter", "best_fitness", "mean_fitness"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.best_fitness.scalar().to_string(),
                r.mean_fitness.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<history csv>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwarmResult<F> {
    pub best_position: Vec<f64>,
    pub best_fitness: F,
    /// The evaluation that produced the best fitness.
    pub best_context: EvalContext,
    pub history: SwarmHistory<F>,
    pub evaluations: usize,
}

fn mode_rng(seed: u64, iteration: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1, iteration as u64]))
}

fn cat_rng(seed: u64, iteration: usize, cat: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2, iteration as u64, cat as u64]))
}

/// Flags exactly `config.tracing_count()` randomly chosen cats as tracing.
pub fn assign_modes<F, R: Rng>(cats: &mut [Cat<F>], config: &SwarmConfig, rng: &mut R) {
    let tracing = config.tracing_count().min(cats.len());
    for c in cats.iter_mut() {
        c.mode = CatMode::Seeking;
    }
    for i in sample(rng, cats.len(), tracing) {
        cats[i].mode = CatMode::Tracing;
    }
}

pub fn init_swarm<F>(config: &SwarmConfig, bounds: &Bounds) -> Result<Vec<Cat<F>>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &[0]));
    let mut cats: Vec<Cat<F>> = (0..config.n_cats)
        .map(|_| Cat {
            position: (0..bounds.dims())
                .map(|d| rng.random_range(bounds.lo[d]..=bounds.hi[d]))
                .collect(),
            velocity: vec![0.0; bounds.dims()],
            mode: CatMode::Seeking,
            fitness: None,
        })
        .collect();
    assign_modes(&mut cats, config, &mut rng);
    Ok(cats)
}

fn mutated_dims(config: &SwarmConfig, dims: usize) -> usize {
    ((config.cdc * dims as f64 - 1e-9).ceil() as usize).clamp(1, dims)
}

/// Candidate positions for a seeking cat. With `spc` the current position is
/// slot 0.
pub fn seeking_candidates<F, R: Rng>(
    cat: &Cat<F>,
    config: &SwarmConfig,
    bounds: &Bounds,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let dims = bounds.dims();
    let k = mutated_dims(config, dims);
    let mut out = Vec::with_capacity(config.smp);
    if config.spc {
        out.push(cat.position.clone());
    }
    while out.len() < config.smp {
        let mut c = cat.position.clone();
        for d in sample(rng, dims, k) {
            let step = config.srd * bounds.span(d);
            let signed = if rng.random_bool(0.5) { step } else { -step };
            c[d] = bounds.clamp(d, c[d] + signed);
        }
        out.push(c);
    }
    out
}

/// Index of the candidate a seeking cat moves to.
pub fn select_candidate<F: SwarmFitness, R: Rng>(fitness: &[F], config: &SwarmConfig, rng: &mut R) -> usize {
    match config.selection {
        Selection::Greedy => {
            let mut best = 0;
            for j in 1..fitness.len() {
                if config.objective.better(&fitness[j], &fitness[best]) {
                    best = j;
                }
            }
            best
        }
        Selection::Roulette => {
            let s: Vec<f64> = fitness.iter().map(|f| f.scalar()).collect();
            let worst = match config.objective {
                Objective::Minimize => s.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Objective::Maximize => s.iter().copied().fold(f64::INFINITY, f64::min),
            };
            let weights: Vec<f64> = s.iter().map(|v| (v - worst).abs()).collect();
            let total: f64 = weights.iter().sum();
            if !(total > 0.0 && total.is_finite()) {
                return rng.random_range(0..fitness.len());
            }
            let mut r = rng.random::<f64>() * total;
            for (j, w) in weights.iter().enumerate() {
                if r < *w {
                    return j;
                }
                r -= w;
            }
            // rounding fell off the end; take the last positive weight
            weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
        }
    }
}

/// Seeking mode: evaluate the memory pool and move by roulette selection.
pub fn seeking_move<F, Fun, R>(
    cat: &Cat<F>,
    fitness_fn: &Fun,
    context: EvalContext,
    config: &SwarmConfig,
    bounds: &Bounds,
    rng: &mut R,
) -> Result<Cat<F>>
where
    F: SwarmFitness,
    Fun: Fn(&[f64], EvalContext) -> Result<F>,
    R: Rng,
{
    let candidates = seeking_candidates(cat, config, bounds, rng);
    let mut fitness = Vec::with_capacity(candidates.len());
    for (j, c) in candidates.iter().enumerate() {
        let cached = if config.spc && j == 0 { cat.fitness.clone() } else { None };
        let f = match cached {
            Some(f) => f,
            None => evaluate(fitness_fn, c, EvalContext { candidate: j, ..context })?,
        };
        fitness.push(f);
    }
    let pick = select_candidate(&fitness, config, rng);
    Ok(Cat {
        position: candidates[pick].clone(),
        velocity: cat.velocity.clone(),
        mode: CatMode::Seeking,
        fitness: Some(fitness.swap_remove(pick)),
    })
}

/// Tracing mode with an explicit source of uniform draws in [0, 1), one per
/// dimension.
pub fn tracing_move_with<F, D: FnMut() -> f64>(
    cat: &Cat<F>,
    global_best: &[f64],
    config: &SwarmConfig,
    bounds: &Bounds,
    mut draw: D,
) -> Cat<F> {
    let mut position = cat.position.clone();
    let mut velocity = cat.velocity.clone();
    for d in 0..bounds.dims() {
        let vmax = config.vmax_fraction * bounds.span(d);
        let r = draw();
        let v = config.inertia * velocity[d] + r * config.c1 * (global_best[d] - position[d]);
        velocity[d] = v.clamp(-vmax, vmax);
        position[d] = bounds.clamp(d, position[d] + velocity[d]);
    }
    Cat {
        position,
        velocity,
        mode: CatMode::Tracing,
        fitness: None,
    }
}

/// Tracing mode: v = inertia * v + r * c1 * (best - x), clamped to vmax;
/// x += v, clamped to the bounds.
pub fn tracing_move<F, R: Rng>(
    cat: &Cat<F>,
    global_best: &[f64],
    config: &SwarmConfig,
    bounds: &Bounds,
    rng: &mut R,
) -> Cat<F> {
    tracing_move_with(cat, global_best, config, bounds, || rng.random::<f64>())
}

fn evaluate<F, Fun>(fitness_fn: &Fun, x: &[f64], ctx: EvalContext) -> Result<F>
where
    Fun: Fn(&[f64], EvalContext) -> Result<F>,
{
    fitness_fn(x, ctx).map_err(|e| Error::Fitness {
        position: x.to_vec(),
        source: Box::new(e),
    })
}

struct Job {
    cat: usize,
    slot: usize,
    position: Vec<f64>,
    ctx: EvalContext,
}

fn evaluate_jobs<F, Fun>(fitness_fn: &Fun, jobs: &[Job], parallel: bool) -> Result<Vec<F>>
where
    F: SwarmFitness,
    Fun: Fn(&[f64], EvalContext) -> Result<F> + Sync,
{
    let results: Vec<Result<F>> = if parallel {
        jobs.par_iter()
            .map(|j| evaluate(fitness_fn, &j.position, j.ctx))
            .collect()
    } else {
        jobs.iter()
            .map(|j| evaluate(fitness_fn, &j.position, j.ctx))
            .collect()
    };
    results.into_iter().collect()
}

enum Plan<F> {
    Seek { candidates: Vec<Vec<f64>>, fitness: Vec<Option<F>> },
    Trace { moved: Cat<F> },
}

/// Runs the swarm for `config.max_iters` iterations and returns the best
/// position found together with the per-iteration history. With
/// `max_iters == 0` only the initial population is evaluated.
pub fn optimize<F, Fun>(fitness_fn: Fun, bounds: &Bounds, config: &SwarmConfig) -> Result<SwarmResult<F>>
where
    F: SwarmFitness,
    Fun: Fn(&[f64], EvalContext) -> Result<F> + Sync,
{
    let mut cats: Vec<Cat<F>> = init_swarm(config, bounds)?;
    let objective = config.objective;

    let jobs: Vec<Job> = cats
        .iter()
        .enumerate()
        .map(|(i, c)| Job {
            cat: i,
            slot: 0,
            position: c.position.clone(),
            ctx: EvalContext { iteration: 0, cat: i, candidate: 0 },
        })
        .collect();
    let mut evaluations = jobs.len();
    for (job, f) in jobs.iter().zip(evaluate_jobs(&fitness_fn, &jobs, config.parallel)?) {
        cats[job.cat].fitness = Some(f);
    }
    let mut best_idx = 0;
    for i in 1..cats.len() {
        if objective.better(cats[i].fitness.as_ref().unwrap(), cats[best_idx].fitness.as_ref().unwrap()) {
            best_idx = i;
        }
    }
    let mut best_position = cats[best_idx].position.clone();
    let mut best_fitness = cats[best_idx].fitness.clone().unwrap();
    let mut best_context = EvalContext { iteration: 0, cat: best_idx, candidate: 0 };

    let initial = IterationRecord {
        iteration: 0,
        best_fitness: best_fitness.clone(),
        mean_fitness: cats.iter().map(|c| c.fitness.as_ref().unwrap().scalar()).sum::<f64>() / cats.len() as f64,
        best_position: best_position.clone(),
    };
    let mut records = Vec::with_capacity(config.max_iters);
    for iteration in 1..=config.max_iters {
        assign_modes(&mut cats, config, &mut mode_rng(config.seed, iteration));

        let mut rngs: Vec<ChaCha8Rng> = (0..cats.len()).map(|i| cat_rng(config.seed, iteration, i)).collect();
        let mut plans = Vec::with_capacity(cats.len());
        let mut jobs = Vec::new();
        for (i, cat) in cats.iter().enumerate() {
            let plan = match cat.mode {
                CatMode::Seeking => {
                    let candidates = seeking_candidates(cat, config, bounds, &mut rngs[i]);
                    let mut fitness = vec![None; candidates.len()];
                    for (j, c) in candidates.iter().enumerate() {
                        if config.spc && j == 0 && cat.fitness.is_some() {
                            fitness[0] = cat.fitness.clone();
                            continue;
                        }
                        jobs.push(Job {
                            cat: i,
                            slot: j,
                            position: c.clone(),
                            ctx: EvalContext { iteration, cat: i, candidate: j },
                        });
                    }
                    Plan::Seek { candidates, fitness }
                }
                CatMode::Tracing => {
                    let moved = tracing_move(cat, &best_position, config, bounds, &mut rngs[i]);
                    jobs.push(Job {
                        cat: i,
                        slot: 0,
                        position: moved.position.clone(),
                        ctx: EvalContext { iteration, cat: i, candidate: 0 },
                    });
                    Plan::Trace { moved }
                }
            };
            plans.push(plan);
        }

        evaluations += jobs.len();
        let results = evaluate_jobs(&fitness_fn, &jobs, config.parallel)?;
        let mut chosen_slot = vec![0usize; cats.len()];
        for (job, f) in jobs.iter().zip(results) {
            match &mut plans[job.cat] {
                Plan::Seek { fitness, .. } => fitness[job.slot] = Some(f),
                Plan::Trace { moved } => moved.fitness = Some(f),
            }
        }

        // resolve in cat order so the reduction is schedule independent
        for (i, plan) in plans.into_iter().enumerate() {
            match plan {
                Plan::Seek { candidates, fitness } => {
                    let fitness: Vec<F> = fitness.into_iter().map(|f| f.expect("evaluated")).collect();
                    let pick = select_candidate(&fitness, config, &mut rngs[i]);
                    cats[i].position = candidates[pick].clone();
                    cats[i].fitness = Some(fitness[pick].clone());
                    chosen_slot[i] = pick;
                }
                Plan::Trace { moved } => {
                    cats[i] = moved;
                }
            }
        }

        for (i, cat) in cats.iter().enumerate() {
            let f = cat.fitness.as_ref().expect("evaluated");
            if objective.better(f, &best_fitness) {
                best_fitness = f.clone();
                best_position = cat.position.clone();
                // a cached fitness was already compared last iteration, so a
                // new best always comes from an evaluation made now
                best_context = EvalContext { iteration, cat: i, candidate: chosen_slot[i] };
            }
        }

        let mean = cats.iter().map(|c| c.fitness.as_ref().unwrap().scalar()).sum::<f64>() / cats.len() as f64;
        log::debug!("cso iteration {iteration}: best {:?}", best_fitness);
        records.push(IterationRecord {
            iteration,
            best_fitness: best_fitness.clone(),
            mean_fitness: mean,
            best_position: best_position.clone(),
        });
    }

    Ok(SwarmResult {
        best_position,
        best_fitness,
        best_context,
        history: SwarmHistory { initial, records },
        evaluations,
    })
}

pub mod benchmarks {
    //! Standard test functions.

    pub fn sphere(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    pub fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    pub fn rastrigin(x: &[f64]) -> f64 {
        10.0 * x.len() as f64
            + x.iter()
                .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                .sum::<f64>()
    }
}
