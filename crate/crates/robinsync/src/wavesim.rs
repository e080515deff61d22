//! Semi-discrete 1-D realization of the coupled wave system on (0, 1):
//! Dirichlet at x = 0, Robin coupling `B` with control injection `D H` at
//! x = 1.
//!
//! Space: second-order central differences with a ghost-node closure of the
//! Robin condition. Time: velocity-Verlet (leapfrog) stepping, explicit and
//! matrix-free per step. The closure is centered so the interior O(h^2)
//! order survives at the boundary and the discrete adjoint of the step
//! operator discretizes the continuous adjoint system up to O(h^2).

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::syncalg::SyncProblem;

/// Uniform grid on [0, 1] with nodes `x_j = j h`, `h = 1/J`.
#[derive(Debug, Clone, Copy)]
pub struct Grid1D {
    intervals: usize,
}

impl Grid1D {
    pub fn new(intervals: usize) -> Result<Self> {
        if intervals < 8 {
            return Err(Error::Input(format!(
                "grid needs J >= 8 intervals, got {intervals}"
            )));
        }
        Ok(Grid1D { intervals })
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Node count `J + 1`.
    pub fn nodes(&self) -> usize {
        self.intervals + 1
    }

    pub fn h(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    /// Trapezoid quadrature weights over the nodes.
    pub fn weights(&self) -> DVector<f64> {
        let h = self.h();
        let mut w = DVector::from_element(self.nodes(), h);
        w[0] = 0.5 * h;
        w[self.intervals] = 0.5 * h;
        w
    }
}

/// CFL safety factor for the unit-speed wave with coupling margin.
pub const CFL_MAX: f64 = 0.9;

/// Time-stepping configuration.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    pub t_final: f64,
    pub dt: f64,
    /// Extra simulated time past `t_final` with the control clamped to zero.
    pub post_time: f64,
}

impl SimConfig {
    pub fn new(t_final: f64, dt: f64, grid: &Grid1D) -> Result<Self> {
        if !(t_final > 0.0) || !(dt > 0.0) {
            return Err(Error::Input("T and dt must be positive".into()));
        }
        if dt > CFL_MAX * grid.h() + 1e-14 {
            return Err(Error::Input(format!(
                "dt = {dt} violates the CFL bound {} for h = {}",
                CFL_MAX * grid.h(),
                grid.h()
            )));
        }
        let steps = t_final / dt;
        if (steps - steps.round()).abs() > 1e-8 * steps.max(1.0) {
            return Err(Error::Input(format!(
                "T / dt = {steps} is not integral within rounding"
            )));
        }
        Ok(SimConfig {
            t_final,
            dt,
            post_time: 0.0,
        })
    }

    pub fn with_post_time(mut self, post_time: f64) -> Self {
        self.post_time = post_time;
        self
    }

    /// Steps in the control window [0, T].
    pub fn main_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    /// Steps in the post window (T, T + post_time].
    pub fn post_steps(&self) -> usize {
        (self.post_time / self.dt).round() as usize
    }

    pub fn total_steps(&self) -> usize {
        self.main_steps() + self.post_steps()
    }
}

/// Semi-discrete state `(U, U')`: `N x (J+1)` displacement and velocity
/// samples, with the Dirichlet column at x = 0 pinned to zero.
#[derive(Debug, Clone)]
pub struct WaveState {
    pub u: Mat,
    pub v: Mat,
}

impl WaveState {
    pub fn zero(n: usize, grid: &Grid1D) -> Self {
        WaveState {
            u: Mat::zeros(n, grid.nodes()),
            v: Mat::zeros(n, grid.nodes()),
        }
    }

    pub fn validate(&self, n: usize, grid: &Grid1D) -> Result<()> {
        if self.u.shape() != (n, grid.nodes()) || self.v.shape() != (n, grid.nodes()) {
            return Err(Error::Input(format!(
                "state shape {:?}/{:?} does not match {} x {}",
                self.u.shape(),
                self.v.shape(),
                n,
                grid.nodes()
            )));
        }
        if self.u.iter().chain(self.v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Input("state has non-finite entries".into()));
        }
        let tol = 1e-12;
        for k in 0..n {
            if self.u[(k, 0)].abs() > tol || self.v[(k, 0)].abs() > tol {
                return Err(Error::Input("Dirichlet column at x = 0 must vanish".into()));
            }
        }
        Ok(())
    }

    /// Plain squared discrete L2 size, `sum_j w_j (|U_j|^2 + |V_j|^2)`.
    pub fn norm_sq(&self, grid: &Grid1D) -> f64 {
        let w = grid.weights();
        let mut acc = 0.0;
        for j in 0..grid.nodes() {
            acc += w[j] * (self.u.column(j).norm_squared() + self.v.column(j).norm_squared());
        }
        acc
    }
}

/// Time-sampled boundary control `H(t)` at x = 1, one `M`-vector per step
/// node. Identically zero outside [0, T] by construction: the stepper never
/// reads samples past the main window.
#[derive(Debug, Clone)]
pub struct ControlSchedule {
    /// `M x (main_steps + 1)` samples.
    pub samples: Mat,
}

impl ControlSchedule {
    pub fn zero(m: usize, cfg: &SimConfig) -> Self {
        ControlSchedule {
            samples: Mat::zeros(m, cfg.main_steps() + 1),
        }
    }

    pub fn validate(&self, m: usize, cfg: &SimConfig) -> Result<()> {
        if self.samples.nrows() != m || self.samples.ncols() != cfg.main_steps() + 1 {
            return Err(Error::Input(format!(
                "schedule shape {:?} does not match {} x {}",
                self.samples.shape(),
                m,
                cfg.main_steps() + 1
            )));
        }
        if self.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Input("schedule has non-finite entries".into()));
        }
        Ok(())
    }

    /// Sample at step `n`, zero past the control window.
    pub fn at(&self, n: usize) -> DVector<f64> {
        if n < self.samples.ncols() {
            self.samples.column(n).into_owned()
        } else {
            DVector::zeros(self.samples.nrows())
        }
    }
}

/// Trajectory sampled at every step.
#[derive(Debug, Clone)]
pub struct WaveTrajectory {
    pub dt: f64,
    pub states: Vec<WaveState>,
    /// Boundary trace at x = 1: `N x (steps + 1)`, rows are components.
    pub trace: Mat,
}

impl WaveTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    pub fn terminal(&self) -> &WaveState {
        self.states.last().unwrap()
    }

    /// State index at time `t` (must be a step multiple within rounding).
    pub fn index_at(&self, t: f64) -> usize {
        (t / self.dt).round() as usize
    }
}

/// Which generator to step: the forward system `(A, B)` with control, or the
/// adjoint `(A^T, B^T)` without.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Forward,
    Adjoint,
}

/// The semi-discrete acceleration `L U + (2/h) D H` (columns = grid nodes):
/// interior central differences, Dirichlet row zeroed, ghost-node Robin
/// closure at x = 1.
pub fn acceleration(
    problem: &SyncProblem,
    grid: &Grid1D,
    gen: Generator,
    u: &Mat,
    h_t: Option<&DVector<f64>>,
) -> Mat {
    let (a, b) = match gen {
        Generator::Forward => (problem.a.clone(), problem.b.clone()),
        Generator::Adjoint => (problem.a.transpose(), problem.b.transpose()),
    };
    let n = u.nrows();
    let jn = grid.intervals();
    let h = grid.h();
    let inv_h2 = 1.0 / (h * h);
    let mut acc = -(&a * u);
    for j in 1..jn {
        for k in 0..n {
            acc[(k, j)] += inv_h2 * (u[(k, j + 1)] - 2.0 * u[(k, j)] + u[(k, j - 1)]);
        }
    }
    // ghost closure: (U_{J+1} - U_{J-1})/(2h) + B U_J = D H
    let bu = &b * u.column(jn);
    for k in 0..n {
        acc[(k, jn)] += inv_h2 * (2.0 * u[(k, jn - 1)] - 2.0 * u[(k, jn)]) - (2.0 / h) * bu[k];
    }
    if let Some(h_vec) = h_t {
        if gen == Generator::Forward {
            let dh = &problem.d * h_vec;
            for k in 0..n {
                acc[(k, jn)] += (2.0 / h) * dh[k];
            }
        }
    }
    acc.column_mut(0).fill(0.0);
    acc
}

/// One velocity-Verlet step. `h_now`/`h_next` are the control samples at
/// `t_n` and `t_{n+1}`; pass `None` for the homogeneous problem.
pub fn step_forward(
    problem: &SyncProblem,
    grid: &Grid1D,
    cfg: &SimConfig,
    state: &WaveState,
    h_now: Option<&DVector<f64>>,
    h_next: Option<&DVector<f64>>,
) -> WaveState {
    step_inner(problem, grid, cfg.dt, Generator::Forward, state, h_now, h_next)
}

fn step_inner(
    problem: &SyncProblem,
    grid: &Grid1D,
    dt: f64,
    gen: Generator,
    state: &WaveState,
    h_now: Option<&DVector<f64>>,
    h_next: Option<&DVector<f64>>,
) -> WaveState {
    let a_now = acceleration(problem, grid, gen, &state.u, h_now);
    let u_next = &state.u + &state.v * dt + &a_now * (0.5 * dt * dt);
    let a_next = acceleration(problem, grid, gen, &u_next, h_next);
    let v_next = &state.v + (a_now + a_next) * (0.5 * dt);
    WaveState {
        u: u_next,
        v: v_next,
    }
}

fn integrate(
    problem: &SyncProblem,
    grid: &Grid1D,
    cfg: &SimConfig,
    gen: Generator,
    init: &WaveState,
    ctrl: Option<&ControlSchedule>,
) -> Result<WaveTrajectory> {
    let n = problem.n();
    init.validate(n, grid)?;
    if let Some(c) = ctrl {
        c.validate(problem.m(), cfg)?;
    }
    let steps = cfg.total_steps();
    let mut states = Vec::with_capacity(steps + 1);
    let mut trace = Mat::zeros(n, steps + 1);
    trace.set_column(0, &init.u.column(grid.intervals()));
    let mut prev_size = init.norm_sq(grid);
    states.push(init.clone());
    for step in 0..steps {
        let h_now = ctrl.map(|c| c.at(step));
        let h_next = ctrl.map(|c| c.at(step + 1));
        let next = step_inner(
            problem,
            grid,
            cfg.dt,
            gen,
            states.last().unwrap(),
            h_now.as_ref(),
            h_next.as_ref(),
        );
        let size = next.norm_sq(grid);
        if !size.is_finite() || (prev_size > 1e-12 && size > 10.0 * prev_size) {
            return Err(Error::Instability {
                step,
                factor: size / prev_size.max(1e-300),
            });
        }
        prev_size = prev_size.max(size);
        trace.set_column(step + 1, &next.u.column(grid.intervals()));
        states.push(next);
    }
    Ok(WaveTrajectory {
        dt: cfg.dt,
        states,
        trace,
    })
}

/// Forward evolution of the controlled system over [0, T + post_time]; the
/// control is clamped to zero past T.
pub fn simulate(
    problem: &SyncProblem,
    grid: &Grid1D,
    cfg: &SimConfig,
    init: &WaveState,
    ctrl: &ControlSchedule,
) -> Result<WaveTrajectory> {
    integrate(problem, grid, cfg, Generator::Forward, init, Some(ctrl))
}

/// Homogeneous evolution of the adjoint system (`A^T`, `B^T`, no control).
pub fn simulate_adjoint(
    problem: &SyncProblem,
    grid: &Grid1D,
    cfg: &SimConfig,
    init: &WaveState,
) -> Result<WaveTrajectory> {
    integrate(problem, grid, cfg, Generator::Adjoint, init, None)
}

/// Discrete energy of the adjoint bilinear form:
/// `1/2 [ ||V||^2 + ||U_x||^2 + (B U(1), U(1)) + (A U, U) ]`.
/// Conserved (up to O(h^2) drift) when `A` and `B` are symmetric.
pub fn discrete_energy(problem: &SyncProblem, grid: &Grid1D, state: &WaveState, gen: Generator) -> f64 {
    let (a, b) = match gen {
        Generator::Forward => (problem.a.clone(), problem.b.clone()),
        Generator::Adjoint => (problem.a.transpose(), problem.b.transpose()),
    };
    let h = grid.h();
    let jn = grid.intervals();
    let w = grid.weights();
    let mut kinetic = 0.0;
    let mut potential_a = 0.0;
    for j in 0..=jn {
        kinetic += w[j] * state.v.column(j).norm_squared();
        potential_a += w[j] * state.u.column(j).dot(&(&a * state.u.column(j)));
    }
    let mut gradient = 0.0;
    for j in 0..jn {
        let diff = (state.u.column(j + 1) - state.u.column(j)) / h;
        gradient += h * diff.norm_squared();
    }
    let ub = state.u.column(jn);
    let boundary = ub.dot(&(&b * ub));
    0.5 * (kinetic + gradient + boundary + potential_a)
}

/// Discrete cross-pairing defect of the weak-solution identity:
/// `| <(U'(T), -U(T)), (Phi(T), Phi'(T))> - <(U_1, -U_0), (Phi_0, Phi_1)>`
/// `- int_0^Ttot (D H, Phi)|_{x=1} dt |`.
pub fn duality_defect(
    problem: &SyncProblem,
    grid: &Grid1D,
    cfg: &SimConfig,
    init_fwd: &WaveState,
    ctrl: &ControlSchedule,
    init_adj: &WaveState,
) -> Result<f64> {
    let fwd = simulate(problem, grid, cfg, init_fwd, ctrl)?;
    let adj = simulate_adjoint(problem, grid, cfg, init_adj)?;
    let w = grid.weights();
    let pair = |s: &WaveState, phi: &WaveState| -> f64 {
        let mut acc = 0.0;
        for j in 0..grid.nodes() {
            acc += w[j]
                * (s.v.column(j).dot(&phi.u.column(j)) - s.u.column(j).dot(&phi.v.column(j)));
        }
        acc
    };
    let lhs = pair(fwd.terminal(), adj.terminal());
    let initial = pair(init_fwd, init_adj);
    // time-trapezoid of (D H(t), Phi(t, 1))
    let steps = cfg.total_steps();
    let mut work = 0.0;
    for nstep in 0..=steps {
        let wt = if nstep == 0 || nstep == steps {
            0.5 * cfg.dt
        } else {
            cfg.dt
        };
        let dh = &problem.d * ctrl.at(nstep);
        work += wt * dh.dot(&adj.trace.column(nstep).into_owned());
    }
    Ok((lhs - initial - work).abs())
}

/// Half-sine initial profile compatible with the mixed boundary conditions:
/// component `k` is `amp_k sin(pi x / 2)`, zero velocity.
pub fn half_sine_state(amplitudes: &[f64], grid: &Grid1D) -> WaveState {
    let n = amplitudes.len();
    let mut state = WaveState::zero(n, grid);
    for j in 0..grid.nodes() {
        let x = j as f64 * grid.h();
        let profile = (std::f64::consts::FRAC_PI_2 * x).sin();
        for k in 0..n {
            state.u[(k, j)] = amplitudes[k] * profile;
        }
    }
    state
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syncalg::GroupPartition;

    fn scalar_problem(a: f64, b: f64) -> SyncProblem {
        SyncProblem::new_unchecked(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, 1.0),
            GroupPartition::single_group(1),
        )
        .unwrap()
    }

    fn grid_cfg(j: usize, t: f64) -> (Grid1D, SimConfig) {
        let grid = Grid1D::new(j).unwrap();
        let dt = 0.5 * grid.h();
        let cfg = SimConfig::new(t, dt, &grid).unwrap();
        (grid, cfg)
    }

    #[test]
    fn zero_state_stays_zero() {
        let problem = scalar_problem(0.0, 0.0);
        let (grid, cfg) = grid_cfg(16, 1.0);
        let ctrl = ControlSchedule::zero(1, &cfg);
        let traj = simulate(&problem, &grid, &cfg, &WaveState::zero(1, &grid), &ctrl).unwrap();
        assert_eq!(traj.terminal().u.norm(), 0.0);
        assert_eq!(traj.terminal().v.norm(), 0.0);
    }

    #[test]
    fn standing_mode_period_four() {
        // u(x, t) = sin(pi x / 2) cos(pi t / 2) solves the scalar mixed
        // problem; after one period the profile must return to O(h^2)
        let problem = scalar_problem(0.0, 0.0);
        let (grid, cfg) = grid_cfg(100, 4.0);
        let init = half_sine_state(&[1.0], &grid);
        let ctrl = ControlSchedule::zero(1, &cfg);
        let traj = simulate(&problem, &grid, &cfg, &init, &ctrl).unwrap();
        let err = (&traj.terminal().u - &init.u).amax();
        assert!(err < 5e-3, "period error {err}");
    }

    /// Max-norm error against the exact standing mode
    /// `u = sin(pi x / 2) cos(pi t / 2)` at time `t` (a step multiple).
    fn standing_mode_error(j: usize, t_final: f64) -> f64 {
        let problem = scalar_problem(0.0, 0.0);
        let (grid, cfg) = grid_cfg(j, t_final);
        let init = half_sine_state(&[1.0], &grid);
        let ctrl = ControlSchedule::zero(1, &cfg);
        let traj = simulate(&problem, &grid, &cfg, &init, &ctrl).unwrap();
        let omega = std::f64::consts::FRAC_PI_2;
        let cos_t = (omega * t_final).cos();
        let sin_t = (omega * t_final).sin();
        let mut err: f64 = 0.0;
        for jn in 0..grid.nodes() {
            let profile = (omega * jn as f64 * grid.h()).sin();
            err = err.max((traj.terminal().u[(0, jn)] - profile * cos_t).abs());
            err = err.max((traj.terminal().v[(0, jn)] + omega * profile * sin_t).abs());
        }
        err
    }

    #[test]
    fn standing_mode_second_order() {
        // T = 1 (a quarter period) so the accumulated phase error enters
        // the profile linearly; at a full period it only enters
        // quadratically and the apparent order doubles
        let errors: Vec<f64> = [50usize, 100, 200]
            .iter()
            .map(|&j| standing_mode_error(j, 1.0))
            .collect();
        let order1 = (errors[0] / errors[1]).log2();
        let order2 = (errors[1] / errors[2]).log2();
        assert!((order1 - 2.0).abs() < 0.3, "order {order1}, errors {errors:?}");
        assert!((order2 - 2.0).abs() < 0.3, "order {order2}, errors {errors:?}");
    }

    #[test]
    fn robin_energy_nearly_conserved() {
        let problem = scalar_problem(0.0, 0.7);
        let (grid, cfg) = grid_cfg(200, 4.0);
        let init = half_sine_state(&[1.0], &grid);
        let ctrl = ControlSchedule::zero(1, &cfg);
        let e0 = discrete_energy(&problem, &grid, &init, Generator::Forward);
        let traj = simulate(&problem, &grid, &cfg, &init, &ctrl).unwrap();
        let et = discrete_energy(&problem, &grid, traj.terminal(), Generator::Forward);
        assert!((et - e0).abs() / e0 < 1e-4, "drift {}", (et - e0).abs() / e0);
    }

    #[test]
    fn superposition() {
        let problem = scalar_problem(0.0, 0.0);
        let (grid, cfg) = grid_cfg(32, 1.0);
        let init = half_sine_state(&[1.0], &grid);
        let mut c1 = ControlSchedule::zero(1, &cfg);
        let mut c2 = ControlSchedule::zero(1, &cfg);
        for n in 0..c1.samples.ncols() {
            c1.samples[(0, n)] = (0.3 * n as f64).sin();
            c2.samples[(0, n)] = (0.1 * n as f64).cos();
        }
        let mut c12 = ControlSchedule::zero(1, &cfg);
        c12.samples = &c1.samples + &c2.samples;
        let t_init_c12 = simulate(&problem, &grid, &cfg, &init, &c12).unwrap();
        let t_init_c1 = simulate(&problem, &grid, &cfg, &init, &c1).unwrap();
        let t_zero_c2 =
            simulate(&problem, &grid, &cfg, &WaveState::zero(1, &grid), &c2).unwrap();
        let diff = (&t_init_c12.terminal().u
            - (&t_init_c1.terminal().u + &t_zero_c2.terminal().u))
            .amax();
        assert!(diff < 1e-11, "superposition defect {diff}");
    }

    #[test]
    fn adjoint_matches_forward_when_symmetric_scalar() {
        let problem = scalar_problem(0.3, 0.5);
        let (grid, cfg) = grid_cfg(32, 1.0);
        let init = half_sine_state(&[1.0], &grid);
        let ctrl = ControlSchedule::zero(1, &cfg);
        let f = simulate(&problem, &grid, &cfg, &init, &ctrl).unwrap();
        let a = simulate_adjoint(&problem, &grid, &cfg, &init).unwrap();
        assert!((&f.terminal().u - &a.terminal().u).amax() < 1e-12);
    }

    #[test]
    fn adjoint_zero_init_stays_zero() {
        let problem = scalar_problem(0.3, 0.5);
        let (grid, cfg) = grid_cfg(16, 1.0);
        let a = simulate_adjoint(&problem, &grid, &cfg, &WaveState::zero(1, &grid)).unwrap();
        assert_eq!(a.terminal().u.norm(), 0.0);
    }

    #[test]
    fn cfl_violation_rejected_or_unstable() {
        let grid = Grid1D::new(16).unwrap();
        assert!(SimConfig::new(1.0, 2.0 * grid.h(), &grid).is_err());
    }

    #[test]
    fn duality_defect_zero_adjoint() {
        let problem = scalar_problem(0.2, 0.4);
        let (grid, cfg) = grid_cfg(32, 1.0);
        let init = half_sine_state(&[1.0], &grid);
        let ctrl = ControlSchedule::zero(1, &cfg);
        let d = duality_defect(
            &problem,
            &grid,
            &cfg,
            &init,
            &ctrl,
            &WaveState::zero(1, &grid),
        )
        .unwrap();
        assert!(d < 1e-14);
    }

    #[test]
    fn duality_defect_small_symmetric() {
        let problem = scalar_problem(0.2, 0.4);
        let (grid, cfg) = grid_cfg(200, 2.0);
        let init = half_sine_state(&[1.0], &grid);
        let ctrl = ControlSchedule::zero(1, &cfg);
        let mut adj_init = half_sine_state(&[0.5], &grid);
        for j in 0..grid.nodes() {
            let x = j as f64 * grid.h();
            adj_init.v[(0, j)] = 0.3 * (std::f64::consts::FRAC_PI_2 * x).sin();
        }
        let d = duality_defect(&problem, &grid, &cfg, &init, &ctrl, &adj_init).unwrap();
        assert!(d < 1e-6, "defect {d}");
    }

    #[test]
    fn duality_defect_vanishes_to_round_off() {
        // the trapezoid pairing is an exact invariant of the paired
        // velocity-Verlet recursions, so the defect sits at round-off for
        // every resolution, controlled or not
        let problem = scalar_problem(0.2, 0.4);
        for j in [50usize, 100, 200] {
            let (grid, cfg) = grid_cfg(j, 1.0);
            let init = half_sine_state(&[0.8], &grid);
            let mut ctrl = ControlSchedule::zero(1, &cfg);
            for n in 0..ctrl.samples.ncols() {
                let t = n as f64 * cfg.dt;
                ctrl.samples[(0, n)] = (t * 2.2).sin();
            }
            let adj_init = half_sine_state(&[0.5], &grid);
            let defect =
                duality_defect(&problem, &grid, &cfg, &init, &ctrl, &adj_init).unwrap();
            assert!(defect < 1e-12, "defect {defect} at J = {j}");
        }
    }
}
