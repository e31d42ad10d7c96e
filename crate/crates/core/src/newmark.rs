//! Newmark-beta integration of `M a + C v + K d = f(t)`.
//!
//! Each step follows the predictor / solve / corrector sequence:
//!
//! ```text
//! d~ = d + dt v + (1/2 - beta) dt^2 a
//! v~ = v + (1 - gamma) dt a
//! [M + gamma dt C + beta dt^2 K] a' = f(t + dt) - K d~ - C v~
//! d' = d~ + beta dt^2 a'
//! v' = v~ + gamma dt a'
//! ```
//!
//! The effective operator is time-invariant and built once.

use std::f64::consts::PI;
use std::time::Instant;

use log::debug;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::{absorbing_augment, assemble_global, penalty_contributions, AbsorbingSpec, DirichletSpec};
use crate::error::{Error, Result};
use crate::grid::{Grid, NodalVectorField};
use crate::material::MaterialField;
use crate::sparse::{CgOutcome, CgSettings, PcgSolver, SparseSymMatrix};
use crate::vessel::Vessel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewmarkParams {
    pub beta: f64,
    pub gamma: f64,
    /// s
    pub dt: f64,
}

impl NewmarkParams {
    /// Constant average acceleration (`beta = 1/4`, `gamma = 1/2`).
    pub fn average_acceleration(dt: f64) -> Self {
        Self { beta: 0.25, gamma: 0.5, dt }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta <= 0.5) {
            return Err(Error::InvalidTimeStep(format!("beta must lie in (0, 1/2], got {}", self.beta)));
        }
        if !(self.gamma >= 0.5 && self.gamma <= 1.0) {
            return Err(Error::InvalidTimeStep(format!("gamma must lie in [1/2, 1], got {}", self.gamma)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidTimeStep(format!("dt must be > 0, got {}", self.dt)));
        }
        Ok(())
    }
}

/// Drive-locked time stepping: `dt = 1 / (f * steps_per_period)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveSchedule {
    pub steps_per_period: usize,
    pub periods: usize,
    /// Trailing periods stored in the history.
    pub record_periods: usize,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for DriveSchedule {
    fn default() -> Self {
        Self { steps_per_period: 32, periods: 6, record_periods: 1, beta: 0.25, gamma: 0.5 }
    }
}

impl DriveSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.steps_per_period < 4 {
            return Err(Error::InvalidTimeStep(format!(
                "need at least 4 steps per period, got {}",
                self.steps_per_period
            )));
        }
        if self.record_periods == 0 || self.record_periods > self.periods {
            return Err(Error::InvalidTimeStep(format!(
                "record_periods must lie in 1..={}, got {}",
                self.periods, self.record_periods
            )));
        }
        Ok(())
    }

    pub fn params(&self, frequency: f64) -> NewmarkParams {
        NewmarkParams { beta: self.beta, gamma: self.gamma, dt: 1.0 / (frequency * self.steps_per_period as f64) }
    }

    pub fn total_steps(&self) -> usize {
        self.steps_per_period * self.periods
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub d: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
    pub t: f64,
}

impl State {
    pub fn at_rest(dim: usize) -> Self {
        Self { d: vec![0.0; dim], v: vec![0.0; dim], a: vec![0.0; dim], t: 0.0 }
    }
}

/// `M + gamma dt C + beta dt^2 K`, ready to solve.
#[derive(Clone, Debug)]
pub struct EffectiveOperator {
    solver: PcgSolver,
}

impl EffectiveOperator {
    pub fn matrix(&self) -> &SparseSymMatrix {
        self.solver.matrix()
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) -> Result<CgOutcome> {
        self.solver.solve_into(b, x)
    }
}

pub fn effective_operator(
    mass: &SparseSymMatrix,
    damping: &SparseSymMatrix,
    stiffness: &SparseSymMatrix,
    params: &NewmarkParams,
    settings: CgSettings,
) -> Result<EffectiveOperator> {
    params.validate()?;
    let a = SparseSymMatrix::combine(&[
        (1.0, mass),
        (params.gamma * params.dt, damping),
        (params.beta * params.dt * params.dt, stiffness),
    ])?;
    Ok(EffectiveOperator { solver: PcgSolver::new(a, settings)? })
}

/// Holds the system matrices and the factored operator for repeated steps.
#[derive(Clone, Debug)]
pub struct NewmarkIntegrator {
    mass: SparseSymMatrix,
    damping: SparseSymMatrix,
    stiffness: SparseSymMatrix,
    operator: EffectiveOperator,
    params: NewmarkParams,
    settings: CgSettings,
}

impl NewmarkIntegrator {
    pub fn new(
        mass: SparseSymMatrix,
        damping: SparseSymMatrix,
        stiffness: SparseSymMatrix,
        params: NewmarkParams,
        settings: CgSettings,
    ) -> Result<Self> {
        if !(mass.same_pattern(&damping) && mass.same_pattern(&stiffness)) {
            return Err(Error::DimensionMismatch("M, C and K must share a sparsity pattern".into()));
        }
        let operator = effective_operator(&mass, &damping, &stiffness, &params, settings)?;
        Ok(Self { mass, damping, stiffness, operator, params, settings })
    }

    pub fn params(&self) -> &NewmarkParams {
        &self.params
    }

    pub fn operator(&self) -> &EffectiveOperator {
        &self.operator
    }

    pub fn mass(&self) -> &SparseSymMatrix {
        &self.mass
    }

    pub fn damping(&self) -> &SparseSymMatrix {
        &self.damping
    }

    pub fn stiffness(&self) -> &SparseSymMatrix {
        &self.stiffness
    }

    /// Rest state with the acceleration consistent with `f(0)`.
    pub fn initial_state(&self, f0: &[f64]) -> Result<State> {
        let mut s = State::at_rest(self.mass.dim());
        if f0.iter().any(|&v| v != 0.0) {
            let solver = PcgSolver::new(self.mass.clone(), self.settings)?;
            solver.solve_into(f0, &mut s.a)?;
        }
        Ok(s)
    }

    /// Advances one step given the load at `t + dt`.
    pub fn step(&self, state: &State, f_next: &[f64]) -> Result<(State, CgOutcome)> {
        let NewmarkParams { beta, gamma, dt } = self.params;
        let n = state.d.len();
        let mut d_pred = Vec::with_capacity(n);
        let mut v_pred = Vec::with_capacity(n);
        for i in 0..n {
            d_pred.push(state.d[i] + dt * state.v[i] + (0.5 - beta) * dt * dt * state.a[i]);
            v_pred.push(state.v[i] + (1.0 - gamma) * dt * state.a[i]);
        }
        let mut rhs = vec![0.0; n];
        SparseSymMatrix::fused_mul_add(&self.stiffness, &d_pred, &self.damping, &v_pred, &mut rhs);
        for (r, f) in rhs.iter_mut().zip(f_next) {
            *r = f - *r;
        }
        let mut a = state.a.clone();
        let outcome = self.operator.solve_into(&rhs, &mut a)?;
        for i in 0..n {
            d_pred[i] += beta * dt * dt * a[i];
            v_pred[i] += gamma * dt * a[i];
        }
        Ok((State { d: d_pred, v: v_pred, a, t: state.t + dt }, outcome))
    }

    /// Right-hand side of `[M + gamma dt C + beta dt^2 K] a' = f_eff` written
    /// in terms of the previous state directly.
    pub fn effective_load(&self, state: &State, f_next: &[f64]) -> Vec<f64> {
        let NewmarkParams { beta, gamma, dt } = self.params;
        let n = state.d.len();
        let c_arg: Vec<f64> = (0..n).map(|i| state.v[i] + (1.0 - gamma) * dt * state.a[i]).collect();
        let k_arg: Vec<f64> =
            (0..n).map(|i| state.d[i] + dt * state.v[i] + 0.5 * dt * dt * (1.0 - 2.0 * beta) * state.a[i]).collect();
        let cv = self.damping.mul_vec(&c_arg);
        let kd = self.stiffness.mul_vec(&k_arg);
        (0..n).map(|i| f_next[i] - cv[i] - kd[i]).collect()
    }

    /// Residual `||M a + C v + K d - f|| / ||f||` of the equation of motion.
    pub fn equilibrium_residual(&self, state: &State, f: &[f64]) -> f64 {
        let ma = self.mass.mul_vec(&state.a);
        let cv = self.damping.mul_vec(&state.v);
        let kd = self.stiffness.mul_vec(&state.d);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..f.len() {
            num += (ma[i] + cv[i] + kd[i] - f[i]).powi(2);
            den += f[i] * f[i];
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }
}

/// Displacement snapshots over the recorded window.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementHistory {
    pub grid: Grid,
    /// Sample times, s, uniformly spaced.
    pub times: Vec<f64>,
    pub snapshots: Vec<NodalVectorField>,
    /// Drive frequency, Hz.
    pub drive_frequency: f64,
    pub steps_per_period: usize,
}

impl DisplacementHistory {
    pub fn sample_count(&self) -> usize {
        self.times.len()
    }

    pub fn dt(&self) -> f64 {
        1.0 / (self.drive_frequency * self.steps_per_period as f64)
    }

    /// Scales all samples in place.
    pub fn scale(&mut self, s: f64) {
        for f in &mut self.snapshots {
            f.values_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Everything a forward run needs.
#[derive(Clone, Copy, Debug)]
pub struct ForwardModel<'a> {
    pub grid: &'a Grid,
    pub material: &'a MaterialField,
    pub dirichlet: &'a DirichletSpec,
    pub absorbing: Option<&'a AbsorbingSpec>,
    pub vessels: &'a [Vessel],
    pub schedule: DriveSchedule,
    pub cg: CgSettings,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SimulationDiagnostics {
    pub steps: usize,
    pub cg_iterations: usize,
    pub max_cg_iterations: usize,
    /// Relative L2 change of the drive harmonic between the last two periods.
    pub steady_state_change: Option<f64>,
    pub max_displacement: f64,
    pub assembly_seconds: f64,
    pub time_loop_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct SimulationOutput {
    pub history: DisplacementHistory,
    pub diagnostics: SimulationDiagnostics,
}

/// Builds `M`, `C` (with absorbing layer) and `K + K_pen`.
pub fn build_system(model: &ForwardModel) -> Result<(SparseSymMatrix, SparseSymMatrix, SparseSymMatrix, crate::assembly::PenaltyTerms)> {
    let glob = assemble_global(model.grid, model.material)?;
    let damping = match model.absorbing {
        Some(spec) => absorbing_augment(glob.damping, model.grid, model.material, spec)?,
        None => glob.damping,
    };
    let penalty = penalty_contributions(model.grid, model.dirichlet)?;
    let mut stiffness = glob.stiffness;
    stiffness.add_scaled(1.0, &penalty.stiffness)?;
    Ok((glob.mass, damping, stiffness, penalty))
}

/// Runs the drive for `schedule.periods` periods from rest and records the
/// trailing `record_periods` at every step.
pub fn simulate(model: &ForwardModel) -> Result<SimulationOutput> {
    model.schedule.validate()?;
    model.dirichlet.validate()?;
    if let Some(abs) = model.absorbing {
        abs.validate(model.grid)?;
    }
    if model.material.grid() != model.grid {
        return Err(Error::DimensionMismatch("material field belongs to a different grid".into()));
    }
    let t0 = Instant::now();
    let grid = *model.grid;
    let frequency = model.dirichlet.omega / (2.0 * PI);
    let params = model.schedule.params(frequency);
    let (mass, damping, stiffness, penalty) = build_system(model)?;
    let integrator = NewmarkIntegrator::new(mass, damping, stiffness, params, model.cg)?;
    let assembly_seconds = t0.elapsed().as_secs_f64();

    let dim = grid.dof_count();
    let load = |t: f64| {
        let mut f = vec![0.0; dim];
        penalty.add_force_into(t, &mut f);
        for v in model.vessels {
            v.add_load_into(t, &mut f);
        }
        f
    };

    let amp = model.dirichlet.amplitude.iter().map(|a| a * a).sum::<f64>().sqrt();
    let vessel_scale = model
        .vessels
        .iter()
        .map(|v| (v.spec.p_mean + v.spec.p_amp) * v.spec.radius / model.material.zones().iter().map(|z| z.material.mu).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max);
    let blowup = 1e6 * amp.max(vessel_scale);

    let sched = model.schedule;
    let total = sched.total_steps();
    let rec_start = (sched.periods - sched.record_periods) * sched.steps_per_period;
    let n_rec = sched.record_periods * sched.steps_per_period;
    let omega = model.dirichlet.omega;

    // running drive-harmonic sums of the last two periods
    let prev_start = (sched.periods >= 2).then(|| (sched.periods - 2) * sched.steps_per_period);
    let last_start = (sched.periods - 1) * sched.steps_per_period;
    let mut harm_prev = prev_start.map(|_| vec![Complex64::new(0.0, 0.0); dim]);
    let mut harm_last = vec![Complex64::new(0.0, 0.0); dim];

    let t1 = Instant::now();
    let mut state = integrator.initial_state(&load(0.0))?;
    let mut diag = SimulationDiagnostics { assembly_seconds, ..Default::default() };
    let mut times = Vec::with_capacity(n_rec);
    let mut snapshots = Vec::with_capacity(n_rec);

    let accumulate = |step: usize, d: &[f64], harm_prev: &mut Option<Vec<Complex64>>, harm_last: &mut Vec<Complex64>| {
        let t = step as f64 * params.dt;
        let e = Complex64::from_polar(1.0, -omega * t);
        if let (Some(ps), Some(h)) = (prev_start, harm_prev.as_mut()) {
            if step >= ps && step < ps + sched.steps_per_period {
                h.iter_mut().zip(d).for_each(|(c, &u)| *c += e * u);
            }
        }
        if step >= last_start && step < last_start + sched.steps_per_period {
            harm_last.iter_mut().zip(d).for_each(|(c, &u)| *c += e * u);
        }
    };

    for step in 0..total {
        if step >= rec_start && step < rec_start + n_rec {
            times.push(step as f64 * params.dt);
            snapshots.push(NodalVectorField::from_values(grid, state.d.clone())?);
        }
        accumulate(step, &state.d, &mut harm_prev, &mut harm_last);
        let t_next = (step + 1) as f64 * params.dt;
        let (next, outcome) = integrator.step(&state, &load(t_next))?;
        diag.cg_iterations += outcome.iterations;
        diag.max_cg_iterations = diag.max_cg_iterations.max(outcome.iterations);
        let max_d = next.d.iter().fold(0.0f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
        if !max_d.is_finite() || (blowup > 0.0 && max_d > blowup) {
            return Err(Error::Unstable { time: t_next, max_displacement: max_d });
        }
        diag.max_displacement = diag.max_displacement.max(max_d);
        state = next;
        if step % 32 == 31 {
            debug!("step {}/{}: {} CG iterations", step + 1, total, outcome.iterations);
        }
    }
    diag.steps = total;
    diag.time_loop_seconds = t1.elapsed().as_secs_f64();
    diag.steady_state_change = harm_prev.map(|prev| {
        let num: f64 = prev.iter().zip(&harm_last).map(|(p, l)| (p - l).norm_sqr()).sum();
        let den: f64 = harm_last.iter().map(|l| l.norm_sqr()).sum();
        if den > 0.0 {
            (num / den).sqrt()
        } else {
            0.0
        }
    });

    Ok(SimulationOutput {
        history: DisplacementHistory {
            grid,
            times,
            snapshots,
            drive_frequency: frequency,
            steps_per_period: sched.steps_per_period,
        },
        diagnostics: diag,
    })
}
