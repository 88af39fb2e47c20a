//! Mass-spring dynamics with muscle actuation and penalty ground contact.
//!
//! Each step has two phases. Phase one evaluates every spring independently
//! and stores the force on its first endpoint in a per-spring slot. Phase two
//! visits every mass, gathers its incident spring forces in ascending spring
//! index order, adds gravity and ground contact, then applies a semi-implicit
//! Euler update (`v += a·dt`, then `x += v·dt`). Neither phase has shared
//! writes, and the gather order is fixed, so the result is bitwise identical
//! whether the phases run sequentially or on a thread pool.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::morphology::{MassSpringSystem, PlaneParams, PointMass, Spring};

/// Coordinates beyond this magnitude count as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e6;
/// Springs shorter than this cannot define a direction.
pub const MIN_SPRING_LENGTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("spring {0} collapsed to zero length")]
    ZeroLengthSpring(usize),
    #[error("simulation diverged at step {0}")]
    Diverged(u64),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// m/s², acting along −z.
    pub gravity: f64,
    /// s
    pub dt: f64,
    /// s
    pub duration: f64,
    /// Hz
    pub actuation_frequency: f64,
    /// Ground plane enabled.
    pub contact: bool,
    /// Tangential speed below which static friction may hold, m/s.
    pub stick_velocity: f64,
    /// Run both step phases on the current rayon pool.
    pub parallel_step: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gravity: 9.81,
            dt: 1e-5,
            duration: 2.0,
            actuation_frequency: 2.0,
            contact: true,
            stick_velocity: 1e-4,
            parallel_step: false,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let bad = |m: &str| Err(PhysicsError::InvalidConfig(m.to_string()));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad("dt must be > 0");
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad("duration must be >= 0");
        }
        if !(self.actuation_frequency.is_finite() && self.actuation_frequency > 0.0) {
            return bad("actuation_frequency must be > 0");
        }
        if !(self.gravity.is_finite() && self.gravity >= 0.0) {
            return bad("gravity must be >= 0");
        }
        if !(self.stick_velocity.is_finite() && self.stick_velocity >= 0.0) {
            return bad("stick_velocity must be >= 0");
        }
        Ok(())
    }

    /// Number of integration steps covering `duration`.
    pub fn step_count(&self) -> u64 {
        (self.duration / self.dt).round() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub com_start: [f64; 3],
    pub com_end: [f64; 3],
    pub horizontal_displacement: f64,
    /// Largest centre-of-mass speed seen at any step.
    pub max_speed: f64,
    pub diverged: bool,
    pub steps: u64,
}

/// `rest0 · (1 + sign · amplitude · sin(2π f t + phase))`; passive springs
/// return `rest0`.
pub fn actuated_rest_length(spring: &Spring, t: f64, frequency: f64) -> f64 {
    match spring.actuation {
        None => spring.rest_length,
        Some(a) => spring.rest_length * (1.0 + a.sign * a.amplitude * (2.0 * PI * frequency * t + a.phase).sin()),
    }
}

/// Force on the first endpoint of a spring; the second endpoint receives the
/// exact negation.
///
/// Elastic part `k(|d| − L)` along `n = d/|d|`, plus damping
/// `c((v_j − v_i)·n)n` with `c = ζ·2√(k·μ)` and reduced mass `μ`.
#[allow(clippy::too_many_arguments)]
pub fn spring_force(
    spring: &Spring,
    xi: [f64; 3],
    xj: [f64; 3],
    vi: [f64; 3],
    vj: [f64; 3],
    mi: f64,
    mj: f64,
    t: f64,
    frequency: f64,
) -> Result<([f64; 3], [f64; 3]), PhysicsError> {
    let f = spring_force_on_i(spring, xi, xj, vi, vj, mi, mj, t, frequency).ok_or(PhysicsError::ZeroLengthSpring(0))?;
    Ok((f, [-f[0], -f[1], -f[2]]))
}

#[allow(clippy::too_many_arguments)]
#[inline]
fn spring_force_on_i(
    spring: &Spring,
    xi: [f64; 3],
    xj: [f64; 3],
    vi: [f64; 3],
    vj: [f64; 3],
    mi: f64,
    mj: f64,
    t: f64,
    frequency: f64,
) -> Option<[f64; 3]> {
    let d = [xj[0] - xi[0], xj[1] - xi[1], xj[2] - xi[2]];
    let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if len.is_nan() || len < MIN_SPRING_LENGTH {
        return None;
    }
    let n = [d[0] / len, d[1] / len, d[2] / len];
    let rest = actuated_rest_length(spring, t, frequency);
    let mut magnitude = spring.stiffness * (len - rest);
    if spring.damping_ratio != 0.0 {
        let reduced = mi * mj / (mi + mj);
        let c = spring.damping_ratio * 2.0 * (spring.stiffness * reduced).sqrt();
        let closing = (vj[0] - vi[0]) * n[0] + (vj[1] - vi[1]) * n[1] + (vj[2] - vi[2]) * n[2];
        magnitude += c * closing;
    }
    Some([magnitude * n[0], magnitude * n[1], magnitude * n[2]])
}

/// Penalty contact with the plane `z = 0`.
///
/// `other_force` is everything else acting on the mass this step; its
/// tangential part is cancelled while the contact sticks. When sliding (or
/// when the static limit is exceeded) kinetic friction opposes the tangential
/// velocity, falling back to the applied force direction if the mass has no
/// tangential velocity at all.
pub fn ground_contact(
    position: [f64; 3],
    velocity: [f64; 3],
    mass: f64,
    plane: &PlaneParams,
    other_force: [f64; 3],
    stick_velocity: f64,
) -> [f64; 3] {
    if position[2] >= 0.0 {
        return [0.0; 3];
    }
    let penetration = -position[2];
    let c = plane.damping_ratio * 2.0 * (plane.stiffness * mass).sqrt();
    let normal = (plane.stiffness * penetration - c * velocity[2]).max(0.0);

    let ft = [other_force[0], other_force[1]];
    let vt = [velocity[0], velocity[1]];
    let ft_norm = ft[0].hypot(ft[1]);
    let vt_norm = vt[0].hypot(vt[1]);

    let friction = if vt_norm < stick_velocity && ft_norm <= plane.mu_static * normal {
        [-ft[0], -ft[1]]
    } else {
        let limit = plane.mu_kinetic * normal;
        if vt_norm > 0.0 {
            [-limit * vt[0] / vt_norm, -limit * vt[1] / vt_norm]
        } else if ft_norm > 0.0 {
            [-limit * ft[0] / ft_norm, -limit * ft[1] / ft_norm]
        } else {
            [0.0, 0.0]
        }
    };
    [friction[0], friction[1], normal]
}

/// Stepper that owns a system plus its per-spring scratch buffers.
#[derive(Debug, Clone)]
pub struct Simulator {
    system: MassSpringSystem,
    config: SimConfig,
    steps: u64,
    spring_forces: Vec<[f64; 3]>,
    /// Per mass: `(spring index, +1 if first endpoint else −1)`, sorted by spring.
    incidence: Vec<Vec<(usize, f64)>>,
    spring_updates: u64,
}

impl Simulator {
    pub fn new(system: MassSpringSystem, config: SimConfig) -> Result<Self, PhysicsError> {
        config.validate()?;
        let mut incidence = vec![Vec::new(); system.masses.len()];
        for (s, spring) in system.springs.iter().enumerate() {
            incidence[spring.i].push((s, 1.0));
            incidence[spring.j].push((s, -1.0));
        }
        Ok(Self {
            spring_forces: vec![[0.0; 3]; system.springs.len()],
            system,
            config,
            steps: 0,
            incidence,
            spring_updates: 0,
        })
    }

    /// Starts the clock at `t` instead of zero; `t` is rounded to whole steps.
    pub fn at_time(mut self, t: f64) -> Self {
        self.steps = (t / self.config.dt).round() as u64;
        self
    }

    pub fn system(&self) -> &MassSpringSystem {
        &self.system
    }

    pub fn into_system(self) -> MassSpringSystem {
        self.system
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Total spring force evaluations performed so far.
    pub fn spring_updates(&self) -> u64 {
        self.spring_updates
    }

    pub fn step(&mut self) -> Result<(), PhysicsError> {
        let t = self.time();
        let f = self.config.actuation_frequency;
        let masses = &self.system.masses;

        let eval = |(s, (slot, spring)): (usize, (&mut [f64; 3], &Spring))| {
            let (a, b) = (&masses[spring.i], &masses[spring.j]);
            match spring_force_on_i(
                spring, a.position, b.position, a.velocity, b.velocity, a.mass, b.mass, t, f,
            ) {
                Some(force) => {
                    *slot = force;
                    Ok(())
                }
                None => Err(PhysicsError::ZeroLengthSpring(s)),
            }
        };
        if self.config.parallel_step {
            self.spring_forces
                .par_iter_mut()
                .zip(self.system.springs.par_iter())
                .enumerate()
                .try_for_each(eval)?;
        } else {
            self.spring_forces
                .iter_mut()
                .zip(self.system.springs.iter())
                .enumerate()
                .try_for_each(eval)?;
        }
        self.spring_updates += self.system.springs.len() as u64;

        let forces = &self.spring_forces;
        let incidence = &self.incidence;
        let config = &self.config;
        let plane = self.system.plane;
        let dt = config.dt;
        let integrate = |(mass, incident): (&mut PointMass, &Vec<(usize, f64)>)| {
            let mut total = [0.0; 3];
            for &(s, sign) in incident {
                let fs = forces[s];
                total[0] += sign * fs[0];
                total[1] += sign * fs[1];
                total[2] += sign * fs[2];
            }
            total[2] -= mass.mass * config.gravity;
            if config.contact {
                let c = ground_contact(
                    mass.position,
                    mass.velocity,
                    mass.mass,
                    &plane,
                    total,
                    config.stick_velocity,
                );
                total[0] += c[0];
                total[1] += c[1];
                total[2] += c[2];
            }
            let inv = 1.0 / mass.mass;
            let mut ok = true;
            for (k, fk) in total.into_iter().enumerate() {
                mass.velocity[k] += fk * inv * dt;
                mass.position[k] += mass.velocity[k] * dt;
                ok &= mass.position[k].abs() <= DIVERGENCE_LIMIT && mass.velocity[k].is_finite();
            }
            ok
        };
        let ok = if self.config.parallel_step {
            self.system
                .masses
                .par_iter_mut()
                .zip(incidence.par_iter())
                .map(integrate)
                .reduce(|| true, |a, b| a && b)
        } else {
            self.system
                .masses
                .iter_mut()
                .zip(incidence.iter())
                .map(integrate)
                // Not `all`: every mass must be integrated.
                .fold(true, |a, b| a & b)
        };
        self.steps += 1;
        if ok {
            Ok(())
        } else {
            Err(PhysicsError::Diverged(self.steps))
        }
    }
}

/// Pure single step: returns `system` advanced by one `dt` from time `t`.
pub fn step(system: &MassSpringSystem, t: f64, config: &SimConfig) -> Result<MassSpringSystem, PhysicsError> {
    let mut sim = Simulator::new(system.clone(), *config)?.at_time(t);
    sim.step()?;
    Ok(sim.into_system())
}

/// Runs `duration / dt` steps from `t = 0`.
pub fn simulate(system: &MassSpringSystem, config: &SimConfig) -> Result<TrajectorySummary, PhysicsError> {
    simulate_observed(system, config, 0, |_, _| {})
}

/// As [`simulate`], calling `observe(t, com)` every `stride` steps (and at
/// `t = 0`). A stride of zero disables observation.
pub fn simulate_observed(
    system: &MassSpringSystem,
    config: &SimConfig,
    stride: u64,
    mut observe: impl FnMut(f64, [f64; 3]),
) -> Result<TrajectorySummary, PhysicsError> {
    let mut sim = Simulator::new(system.clone(), *config)?;
    let com_start = system.center_of_mass();
    let total_mass = system.total_mass();
    let mut last_com = com_start;
    let mut max_speed = com_speed(system, total_mass);
    let mut diverged = false;
    if stride > 0 {
        observe(0.0, com_start);
    }
    for _ in 0..config.step_count() {
        match sim.step() {
            Ok(()) => {
                let sys = sim.system();
                last_com = sys.center_of_mass();
                max_speed = max_speed.max(com_speed(sys, total_mass));
                if stride > 0 && sim.steps() % stride == 0 {
                    observe(sim.time(), last_com);
                }
            }
            Err(_) => {
                diverged = true;
                break;
            }
        }
    }
    let dx = last_com[0] - com_start[0];
    let dy = last_com[1] - com_start[1];
    Ok(TrajectorySummary {
        com_start,
        com_end: last_com,
        horizontal_displacement: dx.hypot(dy),
        max_speed,
        diverged,
        steps: sim.steps(),
    })
}

fn com_speed(system: &MassSpringSystem, total_mass: f64) -> f64 {
    let p = system.momentum();
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt() / total_mass
}

/// Kinetic + spring + gravitational + contact potential energy at time `t`.
pub fn mechanical_energy(system: &MassSpringSystem, t: f64, config: &SimConfig) -> f64 {
    let mut e = 0.0;
    for m in &system.masses {
        let v2 = m.velocity.iter().map(|v| v * v).sum::<f64>();
        e += 0.5 * m.mass * v2 + m.mass * config.gravity * m.position[2];
        if config.contact && m.position[2] < 0.0 {
            e += 0.5 * system.plane.stiffness * m.position[2] * m.position[2];
        }
    }
    for s in &system.springs {
        let len = crate::morphology::distance(system.masses[s.i].position, system.masses[s.j].position);
        let stretch = len - actuated_rest_length(s, t, config.actuation_frequency);
        e += 0.5 * s.stiffness * stretch * stretch;
    }
    e
}
