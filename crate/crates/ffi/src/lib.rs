//! C ABI over `voxevo`.
//!
//! Every function returns a [`VoxStatus`]; results come back through out
//! pointers. Objects are opaque handles created by `*_new`/`*_sample`-style
//! calls and released with the matching `*_free`. After a non-OK status,
//! [`vox_last_error`] returns a message for the calling thread. Panics never
//! cross the boundary; they surface as `VOX_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use voxevo::evolution;
use voxevo::genome::{EncodingSpec, Genome, GenomeError, MATERIAL_COUNT};
use voxevo::morphology::{self, MassSpringSystem, Material, MaterialTable, MorphologyError, VoxelGrid};
use voxevo::physics::{self, PhysicsError, SimConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoxStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ShapeMismatch = 3,
    EmptyRobot = 4,
    ZeroLengthSpring = 5,
    ParseError = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque genome handle.
pub struct VoxGenome(Genome);
/// Opaque voxel grid handle.
pub struct VoxGrid(VoxelGrid);
/// Opaque mass-spring robot handle.
pub struct VoxRobot(MassSpringSystem);

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxQuery {
    /// Probabilities for empty, muscle_expand, muscle_contract, soft_tissue, hard_bone.
    pub probs: [f64; 5],
    pub weight: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxSimParams {
    pub gravity: f64,
    pub dt: f64,
    pub duration: f64,
    pub actuation_frequency: f64,
    /// Nonzero enables ground contact.
    pub contact: i32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxTrajectory {
    pub com_start: [f64; 3],
    pub com_end: [f64; 3],
    pub horizontal_displacement: f64,
    pub max_speed: f64,
    /// Nonzero if the run blew up.
    pub diverged: i32,
    pub steps: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxHyperParams {
    pub mutation_rate: f64,
    pub mutation_scale: f64,
    pub crossover_rate: f64,
    pub elite_fraction: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: VoxStatus, msg: impl Into<String>) -> VoxStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> VoxStatus) -> VoxStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(VoxStatus::Panic, "internal panic"),
    }
}

fn genome_status(e: GenomeError) -> VoxStatus {
    let s = match e {
        GenomeError::ShapeMismatch => VoxStatus::ShapeMismatch,
        _ => VoxStatus::InvalidArgument,
    };
    fail(s, e.to_string())
}

fn morph_status(e: MorphologyError) -> VoxStatus {
    let s = match e {
        MorphologyError::EmptyRobot => VoxStatus::EmptyRobot,
        MorphologyError::InvalidDims => VoxStatus::InvalidArgument,
    };
    fail(s, e.to_string())
}

fn physics_status(e: PhysicsError) -> VoxStatus {
    let s = match e {
        PhysicsError::ZeroLengthSpring(_) => VoxStatus::ZeroLengthSpring,
        _ => VoxStatus::InvalidArgument,
    };
    fail(s, e.to_string())
}

fn sim_config(p: *const VoxSimParams) -> SimConfig {
    // SAFETY: callers check p for null or pass it straight from C.
    match unsafe { p.as_ref() } {
        None => SimConfig::default(),
        Some(p) => SimConfig {
            gravity: p.gravity,
            dt: p.dt,
            duration: p.duration,
            actuation_frequency: p.actuation_frequency,
            contact: p.contact != 0,
            ..SimConfig::default()
        },
    }
}

fn dims(w: usize, h: usize, d: usize) -> Result<[usize; 3], VoxStatus> {
    if w == 0 || h == 0 || d == 0 {
        Err(fail(VoxStatus::InvalidArgument, "grid dimensions must be positive"))
    } else {
        Ok([w, h, d])
    }
}

fn boxed<T>(out: *mut *mut T, value: T) -> VoxStatus {
    // SAFETY: out was checked non-null by the caller.
    unsafe { *out = Box::into_raw(Box::new(value)) };
    VoxStatus::Ok
}

macro_rules! non_null {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(VoxStatus::NullPointer, concat!("`", stringify!($p), "` is null"));
        })+
    };
}

/// Message for the last failed call on this thread; valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn vox_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vox_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Samples a genome. `hidden` may be null only when `n_hidden` is 0.
///
/// # Safety
/// `hidden` must point to `n_hidden` widths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vox_genome_sample(
    frequencies: usize,
    sigma: f64,
    hidden: *const usize,
    n_hidden: usize,
    seed: u64,
    out: *mut *mut VoxGenome,
) -> VoxStatus {
    guard(|| {
        non_null!(out);
        if n_hidden > 0 {
            non_null!(hidden);
        }
        let widths = if n_hidden == 0 {
            &[][..]
        } else {
            unsafe { std::slice::from_raw_parts(hidden, n_hidden) }
        };
        match Genome::sample(EncodingSpec { frequencies, sigma }, widths, seed) {
            Ok(g) => boxed(out, VoxGenome(g)),
            Err(e) => genome_status(e),
        }
    })
}

/// # Safety
/// `genome` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn vox_genome_free(genome: *mut VoxGenome) {
    if !genome.is_null() {
        drop(unsafe { Box::from_raw(genome) });
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_genome_parameter_count(genome: *const VoxGenome, out: *mut usize) -> VoxStatus {
    guard(|| {
        non_null!(genome, out);
        unsafe { *out = (*genome).0.parameter_count() };
        VoxStatus::Ok
    })
}

/// Writes the `2m` encoding of `(x, y, z)` into `buf`. `written` receives
/// the required length even when the buffer is too small.
///
/// # Safety
/// `buf` must hold `len` doubles; other pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_genome_encode(
    genome: *const VoxGenome,
    x: f64,
    y: f64,
    z: f64,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> VoxStatus {
    guard(|| {
        non_null!(genome, buf, written);
        let enc = unsafe { &(*genome).0 }.encode([x, y, z]);
        unsafe { *written = enc.len() };
        if len < enc.len() {
            return fail(VoxStatus::BufferTooSmall, format!("need {} doubles", enc.len()));
        }
        unsafe { ptr::copy_nonoverlapping(enc.as_ptr(), buf, enc.len()) };
        VoxStatus::Ok
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_genome_forward(
    genome: *const VoxGenome,
    x: f64,
    y: f64,
    z: f64,
    out: *mut VoxQuery,
) -> VoxStatus {
    guard(|| {
        non_null!(genome, out);
        let q = unsafe { &(*genome).0 }.forward([x, y, z]);
        let mut probs = [0.0; 5];
        probs[..MATERIAL_COUNT].copy_from_slice(&q.probs);
        unsafe {
            *out = VoxQuery {
                probs,
                weight: q.weight,
            }
        };
        VoxStatus::Ok
    })
}

/// New genome with Gaussian noise added to each parameter with probability
/// `rate`.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_genome_mutate(
    genome: *const VoxGenome,
    rate: f64,
    scale: f64,
    seed: u64,
    out: *mut *mut VoxGenome,
) -> VoxStatus {
    guard(|| {
        non_null!(genome, out);
        if !(0.0..=1.0).contains(&rate) || scale.is_nan() || scale < 0.0 {
            return fail(VoxStatus::InvalidArgument, "rate must be in [0, 1] and scale >= 0");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let child = evolution::mutate(unsafe { &(*genome).0 }, rate, scale, &mut rng);
        boxed(out, VoxGenome(child))
    })
}

/// Uniform crossover; the child keeps `a`'s Fourier basis.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_genome_crossover(
    a: *const VoxGenome,
    b: *const VoxGenome,
    seed: u64,
    out: *mut *mut VoxGenome,
) -> VoxStatus {
    guard(|| {
        non_null!(a, b, out);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match evolution::crossover(unsafe { &(*a).0 }, unsafe { &(*b).0 }, &mut rng) {
            Ok(c) => boxed(out, VoxGenome(c)),
            Err(e) => genome_status(e),
        }
    })
}

/// Queries the genome at every voxel centre of a `w × h × d` grid.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_decode(
    genome: *const VoxGenome,
    w: usize,
    h: usize,
    d: usize,
    out: *mut *mut VoxGrid,
) -> VoxStatus {
    guard(|| {
        non_null!(genome, out);
        let dims = match dims(w, h, d) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match morphology::decode(unsafe { &(*genome).0 }, dims) {
            Ok(g) => boxed(out, VoxGrid(g)),
            Err(e) => morph_status(e),
        }
    })
}

/// Empty grid of the given size.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vox_grid_new(w: usize, h: usize, d: usize, out: *mut *mut VoxGrid) -> VoxStatus {
    guard(|| {
        non_null!(out);
        let dims = match dims(w, h, d) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match VoxelGrid::new(dims) {
            Ok(g) => boxed(out, VoxGrid(g)),
            Err(e) => morph_status(e),
        }
    })
}

/// # Safety
/// `grid` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn vox_grid_free(grid: *mut VoxGrid) {
    if !grid.is_null() {
        drop(unsafe { Box::from_raw(grid) });
    }
}

fn in_bounds(g: &VoxelGrid, x: usize, y: usize, z: usize) -> bool {
    x < g.dims[0] && y < g.dims[1] && z < g.dims[2]
}

/// Sets one voxel; `material` is the category index 0..=4.
///
/// # Safety
/// `grid` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_grid_set(
    grid: *mut VoxGrid,
    x: usize,
    y: usize,
    z: usize,
    material: u32,
    weight: f64,
) -> VoxStatus {
    guard(|| {
        non_null!(grid);
        let g = unsafe { &mut (*grid).0 };
        let Some(m) = Material::from_index(material as usize) else {
            return fail(VoxStatus::InvalidArgument, format!("unknown material {material}"));
        };
        if !in_bounds(g, x, y, z) {
            return fail(VoxStatus::InvalidArgument, "voxel outside the grid");
        }
        g.set(x, y, z, m, weight);
        VoxStatus::Ok
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_grid_get(
    grid: *const VoxGrid,
    x: usize,
    y: usize,
    z: usize,
    material: *mut u32,
    weight: *mut f64,
) -> VoxStatus {
    guard(|| {
        non_null!(grid, material, weight);
        let g = unsafe { &(*grid).0 };
        if !in_bounds(g, x, y, z) {
            return fail(VoxStatus::InvalidArgument, "voxel outside the grid");
        }
        let v = g.get(x, y, z);
        unsafe {
            *material = v.material.index() as u32;
            *weight = v.weight;
        }
        VoxStatus::Ok
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_grid_occupied(grid: *const VoxGrid, out: *mut usize) -> VoxStatus {
    guard(|| {
        non_null!(grid, out);
        unsafe { *out = (*grid).0.occupied() };
        VoxStatus::Ok
    })
}

/// Copy of `grid` keeping only its largest face-connected body.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_grid_largest_component(grid: *const VoxGrid, out: *mut *mut VoxGrid) -> VoxStatus {
    guard(|| {
        non_null!(grid, out);
        boxed(out, VoxGrid(morphology::largest_component(unsafe { &(*grid).0 })))
    })
}

/// Mean pairwise material-mismatch fraction over `n` same-sized grids.
///
/// # Safety
/// `grids` must point to `n` valid handles.
#[no_mangle]
pub unsafe extern "C" fn vox_diversity(grids: *const *const VoxGrid, n: usize, out: *mut f64) -> VoxStatus {
    guard(|| {
        non_null!(out);
        if n > 0 {
            non_null!(grids);
        }
        let handles = if n == 0 {
            &[][..]
        } else {
            unsafe { std::slice::from_raw_parts(grids, n) }
        };
        let mut owned = Vec::with_capacity(n);
        for &h in handles {
            non_null!(h);
            owned.push(unsafe { &(*h).0 }.clone());
        }
        if owned.windows(2).any(|w| w[0].dims != w[1].dims) {
            return fail(VoxStatus::ShapeMismatch, "grids differ in size");
        }
        unsafe { *out = evolution::diversity(&owned) };
        VoxStatus::Ok
    })
}

/// Mass-spring network for a grid using the default material table.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_robot_build(grid: *const VoxGrid, out: *mut *mut VoxRobot) -> VoxStatus {
    guard(|| {
        non_null!(grid, out);
        match morphology::build_mass_spring(unsafe { &(*grid).0 }, &MaterialTable::default()) {
            Ok(s) => boxed(out, VoxRobot(s)),
            Err(e) => morph_status(e),
        }
    })
}

/// # Safety
/// `robot` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn vox_robot_free(robot: *mut VoxRobot) {
    if !robot.is_null() {
        drop(unsafe { Box::from_raw(robot) });
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn vox_robot_counts(
    robot: *const VoxRobot,
    masses: *mut usize,
    springs: *mut usize,
) -> VoxStatus {
    guard(|| {
        non_null!(robot, masses, springs);
        let r = unsafe { &(*robot).0 };
        unsafe {
            *masses = r.masses.len();
            *springs = r.springs.len();
        }
        VoxStatus::Ok
    })
}

/// Simulates a copy of the robot. `params` may be null for defaults.
///
/// # Safety
/// `robot` and `out` must be valid; `params` valid or null.
#[no_mangle]
pub unsafe extern "C" fn vox_robot_simulate(
    robot: *const VoxRobot,
    params: *const VoxSimParams,
    out: *mut VoxTrajectory,
) -> VoxStatus {
    guard(|| {
        non_null!(robot, out);
        let cfg = sim_config(params);
        match physics::simulate(unsafe { &(*robot).0 }, &cfg) {
            Ok(t) => {
                unsafe {
                    *out = VoxTrajectory {
                        com_start: t.com_start,
                        com_end: t.com_end,
                        horizontal_displacement: t.horizontal_displacement,
                        max_speed: t.max_speed,
                        diverged: t.diverged as i32,
                        steps: t.steps,
                    }
                };
                VoxStatus::Ok
            }
            Err(e) => physics_status(e),
        }
    })
}

/// Fitness of a genome on a `w × h × d` grid. `params` may be null.
///
/// # Safety
/// `genome` and `out` must be valid; `params` valid or null.
#[no_mangle]
pub unsafe extern "C" fn vox_evaluate(
    genome: *const VoxGenome,
    w: usize,
    h: usize,
    d: usize,
    params: *const VoxSimParams,
    out: *mut f64,
) -> VoxStatus {
    guard(|| {
        non_null!(genome, out);
        let dims = match dims(w, h, d) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let cfg = sim_config(params);
        if let Err(e) = cfg.validate() {
            return physics_status(e);
        }
        unsafe { *out = evolution::evaluate(&(*genome).0, dims, &MaterialTable::default(), &cfg) };
        VoxStatus::Ok
    })
}

/// Extracts and clamps hyperparameters from advisor reply text.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vox_parse_reply(text: *const c_char, out: *mut VoxHyperParams) -> VoxStatus {
    guard(|| {
        non_null!(text, out);
        let Ok(s) = unsafe { CStr::from_ptr(text) }.to_str() else {
            return fail(VoxStatus::ParseError, "reply is not UTF-8");
        };
        match voxevo::advisor::parse_reply(s, false) {
            Ok(p) => {
                unsafe {
                    *out = VoxHyperParams {
                        mutation_rate: p.mutation_rate,
                        mutation_scale: p.mutation_scale,
                        crossover_rate: p.crossover_rate,
                        elite_fraction: p.elite_fraction,
                    }
                };
                VoxStatus::Ok
            }
            Err(e) => fail(VoxStatus::ParseError, e.to_string()),
        }
    })
}
