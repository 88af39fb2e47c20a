//! Generational GA over genome weights: elitism, size-3 tournaments, uniform
//! crossover and Gaussian mutation, with per-generation statistics.

use std::time::Instant;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advisor::{Advisor, AdvisorRequest, ADVISOR_SCHEMA_VERSION};
use crate::genome::{EncodingSpec, Genome, GenomeError, MATERIAL_COUNT};
use crate::morphology::{build_mass_spring, decode, largest_component, Material, MaterialTable, VoxelGrid};
use crate::physics::{simulate, SimConfig};

/// Number of trailing reports shown to the advisor.
pub const ADVISOR_WINDOW: usize = 3;
pub const TOURNAMENT_SIZE: usize = 3;

pub const MUTATION_RATE_RANGE: (f64, f64) = (0.001, 1.0);
pub const MUTATION_SCALE_RANGE: (f64, f64) = (0.001, 1.0);
pub const CROSSOVER_RATE_RANGE: (f64, f64) = (0.0, 1.0);
pub const ELITE_FRACTION_RANGE: (f64, f64) = (0.05, 0.9);
pub const MULTIPLIER_RANGE: (f64, f64) = (0.1, 10.0);

fn clamp_to((lo, hi): (f64, f64), x: f64) -> f64 {
    if x.is_nan() {
        lo
    } else {
        x.clamp(lo, hi)
    }
}

/// Stiffness multipliers the advisor may propose for each non-empty material.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialMultipliers {
    pub muscle_expand: f64,
    pub muscle_contract: f64,
    pub soft_tissue: f64,
    pub hard_bone: f64,
}

impl Default for MaterialMultipliers {
    fn default() -> Self {
        Self {
            muscle_expand: 1.0,
            muscle_contract: 1.0,
            soft_tissue: 1.0,
            hard_bone: 1.0,
        }
    }
}

impl MaterialMultipliers {
    pub fn clamped(self) -> Self {
        Self {
            muscle_expand: clamp_to(MULTIPLIER_RANGE, self.muscle_expand),
            muscle_contract: clamp_to(MULTIPLIER_RANGE, self.muscle_contract),
            soft_tissue: clamp_to(MULTIPLIER_RANGE, self.soft_tissue),
            hard_bone: clamp_to(MULTIPLIER_RANGE, self.hard_bone),
        }
    }

    pub fn as_scale(&self) -> [f64; MATERIAL_COUNT] {
        let mut s = [1.0; MATERIAL_COUNT];
        s[Material::MuscleExpand.index()] = self.muscle_expand;
        s[Material::MuscleContract.index()] = self.muscle_contract;
        s[Material::SoftTissue.index()] = self.soft_tissue;
        s[Material::HardBone.index()] = self.hard_bone;
        s
    }
}

/// GA hyperparameters. Every write goes through [`HyperParams::clamped`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub mutation_rate: f64,
    pub mutation_scale: f64,
    pub crossover_rate: f64,
    pub elite_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material_multipliers: Option<MaterialMultipliers>,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            mutation_rate: 0.1,
            mutation_scale: 0.1,
            crossover_rate: 0.4,
            elite_fraction: 0.3,
            material_multipliers: None,
        }
    }
}

impl HyperParams {
    pub fn clamped(self) -> Self {
        Self {
            mutation_rate: clamp_to(MUTATION_RATE_RANGE, self.mutation_rate),
            mutation_scale: clamp_to(MUTATION_SCALE_RANGE, self.mutation_scale),
            crossover_rate: clamp_to(CROSSOVER_RATE_RANGE, self.crossover_rate),
            elite_fraction: clamp_to(ELITE_FRACTION_RANGE, self.elite_fraction),
            material_multipliers: self.material_multipliers.map(MaterialMultipliers::clamped),
        }
    }

    pub fn is_in_range(&self) -> bool {
        *self == self.clamped()
    }

    /// `⌈elite_fraction · n⌉`, at least one and at most `n`.
    pub fn elite_count(&self, n: usize) -> usize {
        // The epsilon keeps 0.3 · 30 at 9 despite binary rounding.
        let raw = (self.elite_fraction * n as f64 - 1e-9).ceil() as usize;
        raw.clamp(1, n.max(1))
    }
}

/// Statistics of one evaluated generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub generation: u64,
    pub params: HyperParams,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub std_fitness: f64,
    pub diversity: f64,
    /// Simulations actually run (cached elites excluded).
    pub evaluations: u64,
    /// Seconds spent evaluating and breeding.
    pub wall_time: f64,
}

/// Fixed problem description shared by every generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionContext {
    pub dims: [usize; 3],
    pub table: MaterialTable,
    pub sim: SimConfig,
    /// Whether advisor-proposed material multipliers reach the material table.
    pub allow_material_updates: bool,
}

impl EvolutionContext {
    pub fn table_for(&self, params: &HyperParams) -> MaterialTable {
        match (self.allow_material_updates, params.material_multipliers) {
            (true, Some(m)) => {
                let mut t = self.table.clone();
                let scale = m.as_scale();
                for (s, m) in t.stiffness_scale.iter_mut().zip(scale) {
                    *s *= m;
                }
                t
            }
            _ => self.table.clone(),
        }
    }
}

/// Serializable snapshot of a ChaCha8 stream position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, String> {
        let bytes = hex::decode(&self.seed).map_err(|e| e.to_string())?;
        let seed: [u8; 32] = bytes.try_into().map_err(|_| "rng seed must be 32 bytes".to_string())?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|e: std::num::ParseIntError| e.to_string())?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BestIndividual {
    pub genome: Genome,
    pub fitness: f64,
    pub generation: u64,
}

/// Population, cached fitnesses and GA bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionState {
    /// Index of the next generation to evaluate.
    pub generation: u64,
    pub population: Vec<Genome>,
    /// `Some` for elites carried over with their fitness.
    pub fitnesses: Vec<Option<f64>>,
    pub params: HyperParams,
    pub history: Vec<GenerationReport>,
    pub best: Option<BestIndividual>,
    pub rng: ChaCha8Rng,
}

impl EvolutionState {
    /// Fresh population of `size` genomes, all seeded from one stream.
    pub fn new(
        seed: u64,
        size: usize,
        spec: EncodingSpec,
        hidden: &[usize],
        params: HyperParams,
    ) -> Result<Self, GenomeError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let population = (0..size)
            .map(|_| Genome::sample(spec, hidden, rng.next_u64()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            generation: 0,
            fitnesses: vec![None; population.len()],
            population,
            params: params.clamped(),
            history: Vec::new(),
            best: None,
            rng,
        })
    }
}

/// Builds the phenotype (largest connected body) for a genome.
pub fn phenotype(genome: &Genome, dims: [usize; 3]) -> VoxelGrid {
    match decode(genome, dims) {
        Ok(grid) => largest_component(&grid),
        Err(_) => VoxelGrid {
            dims,
            cells: Vec::new(),
        },
    }
}

/// Fitness of an already-decoded body: horizontal centre-of-mass travel, or
/// zero for empty bodies, bodies without muscle, and diverged runs.
pub fn evaluate_grid(grid: &VoxelGrid, table: &MaterialTable, sim: &SimConfig) -> f64 {
    if grid.occupied() == 0 || !grid.has_muscle() {
        return 0.0;
    }
    let Ok(system) = build_mass_spring(grid, table) else {
        return 0.0;
    };
    match simulate(&system, sim) {
        Ok(s) if !s.diverged && s.horizontal_displacement.is_finite() => s.horizontal_displacement,
        _ => 0.0,
    }
}

pub fn evaluate(genome: &Genome, dims: [usize; 3], table: &MaterialTable, sim: &SimConfig) -> f64 {
    evaluate_grid(&phenotype(genome, dims), table, sim)
}

/// Perturbs each MLP parameter with probability `rate` by `N(0, scale²)`.
pub fn mutate<R: Rng + ?Sized>(genome: &Genome, rate: f64, scale: f64, rng: &mut R) -> Genome {
    let mut child = genome.clone();
    let normal = Normal::new(0.0, scale.max(0.0)).unwrap_or_else(|_| Normal::new(0.0, 0.0).unwrap());
    for p in child.parameters_mut() {
        if rng.random::<f64>() < rate {
            *p += normal.sample(rng);
        }
    }
    child
}

/// Uniform crossover of MLP parameters; the child keeps `a`'s basis.
pub fn crossover<R: Rng + ?Sized>(a: &Genome, b: &Genome, rng: &mut R) -> Result<Genome, GenomeError> {
    if !a.same_architecture(b) {
        return Err(GenomeError::ShapeMismatch);
    }
    let mut child = a.clone();
    for (c, &pb) in child.parameters_mut().zip(b.parameters()) {
        if rng.random::<bool>() {
            *c = pb;
        }
    }
    Ok(child)
}

/// Mean pairwise fraction of voxels whose material differs.
pub fn diversity(grids: &[VoxelGrid]) -> f64 {
    let n = grids.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut pairs = 0u64;
    for a in 0..n {
        for b in a + 1..n {
            let (ga, gb) = (&grids[a], &grids[b]);
            let differing = ga
                .cells
                .iter()
                .zip(&gb.cells)
                .filter(|(x, y)| x.material != y.material)
                .count();
            total += differing as f64 / ga.cells.len().max(1) as f64;
            pairs += 1;
        }
    }
    (total / pairs as f64).clamp(0.0, 1.0)
}

fn tournament<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    (0..TOURNAMENT_SIZE).map(|_| rng.random_range(0..n)).min().unwrap_or(0)
}

/// Consults the advisor (when one is given and history exists), evaluates the
/// current population, records a report, and breeds the next population.
pub fn evolve_generation(
    state: &mut EvolutionState,
    advisor: Option<&mut dyn Advisor>,
    ctx: &EvolutionContext,
) -> GenerationReport {
    let started = Instant::now();

    if let Some(advisor) = advisor {
        let from = state.history.len().saturating_sub(ADVISOR_WINDOW);
        let window = &state.history[from..];
        if !window.is_empty() {
            let request = AdvisorRequest {
                window: window.to_vec(),
                current_params: state.params,
                schema_version: ADVISOR_SCHEMA_VERSION.to_string(),
            };
            let mut params = advisor.advise(&request).params.clamped();
            if !ctx.allow_material_updates {
                params.material_multipliers = None;
            }
            state.params = params;
        }
    }
    let params = state.params;
    let table = ctx.table_for(&params);

    let scored: Vec<(VoxelGrid, f64, bool)> = state
        .population
        .par_iter()
        .zip(state.fitnesses.par_iter())
        .map(|(g, cached)| {
            let grid = phenotype(g, ctx.dims);
            match cached {
                Some(f) => (grid, *f, false),
                None => {
                    let f = evaluate_grid(&grid, &table, &ctx.sim);
                    (grid, f, true)
                }
            }
        })
        .collect();

    let n = scored.len();
    let fitness: Vec<f64> = scored.iter().map(|s| s.1).collect();
    let evaluations = scored.iter().filter(|s| s.2).count() as u64;
    let grids: Vec<VoxelGrid> = scored.into_iter().map(|s| s.0).collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]).then(a.cmp(&b)));

    let mean = fitness.iter().sum::<f64>() / n.max(1) as f64;
    let var = fitness.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / n.max(1) as f64;
    let best_fitness = order.first().map_or(0.0, |&i| fitness[i]);

    if let Some(&top) = order.first() {
        if state.best.as_ref().is_none_or(|b| best_fitness > b.fitness) {
            state.best = Some(BestIndividual {
                genome: state.population[top].clone(),
                fitness: best_fitness,
                generation: state.generation,
            });
        }
    }

    let elites = params.elite_count(n);
    let mut next = Vec::with_capacity(n);
    let mut next_fitness = Vec::with_capacity(n);
    for &i in order.iter().take(elites) {
        next.push(state.population[i].clone());
        next_fitness.push(Some(fitness[i]));
    }
    let rng = &mut state.rng;
    while next.len() < n {
        let p1 = &state.population[order[tournament(n, rng)]];
        let child = if rng.random::<f64>() < params.crossover_rate {
            let p2 = &state.population[order[tournament(n, rng)]];
            let mixed = crossover(p1, p2, rng).unwrap_or_else(|_| p1.clone());
            mutate(&mixed, params.mutation_rate, params.mutation_scale, rng)
        } else {
            mutate(p1, params.mutation_rate, params.mutation_scale, rng)
        };
        next.push(child);
        next_fitness.push(None);
    }

    let report = GenerationReport {
        generation: state.generation,
        params,
        best_fitness,
        mean_fitness: mean,
        std_fitness: var.sqrt(),
        diversity: diversity(&grids),
        evaluations,
        wall_time: started.elapsed().as_secs_f64(),
    };
    state.population = next;
    state.fitnesses = next_fitness;
    state.history.push(report.clone());
    state.generation += 1;
    report
}
