//! Backward Euler time stepping of the four-field system.
//!
//! The monolithic unknown ordering is `[u, xi, p, T]`. With
//! `c~ = c0 + alpha^2/lambda`, `a~ = a0 + beta^2/lambda` and
//! `e = alpha beta / lambda - b0` the coupled step solves
//!
//! ```text
//! [  A      -B          0              0         ] [u ]   [ F                                  ]
//! [ -B^T  -M/lambda  (alpha/lambda)M  (beta/lambda)M ] [xi] = [ 0                                  ]
//! [  0  -(alpha/lambda)M  c~M + dt K     eM          ] [p ]   [ c~Mp' + eMT' - (alpha/lambda)Mxi' + dt G ]
//! [  0  -(beta/lambda)M   eM          a~M + dt Theta ] [T ]   [ a~MT' + eMp' - (beta/lambda)Mxi' + dt H  ]
//! ```
//!
//! where primes denote the previous time level. The decoupled step alternates
//! the `(p, T)` block with `xi` lagged and the `(u, xi)` block with `(p, T)`
//! fixed.

use std::cell::OnceCell;
use std::time::{Duration, Instant};

use crate::assembly::{assemble_forms, assemble_loads, eliminate, FormSet, LoadSet};
use crate::mesh::{build_dof_maps, DofMap, Field, Mesh};
use crate::model::{MaterialParams, ProblemData};
use crate::sparse::{block_compose, LuSolver, SparseMatrix, DEFAULT_SOLVE_TOL};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Coupled,
    Decoupled,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Algorithm::Coupled => "coupled",
            Algorithm::Decoupled => "decoupled",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepperConfig {
    pub dt: f64,
    pub algorithm: Algorithm,
    /// Iteration cap per step of the decoupled algorithm.
    pub max_iters: usize,
    /// Stop the decoupled iteration once the L2 norm of the `xi` increment is
    /// at most this; 0 runs exactly `max_iters` iterations.
    pub iter_tol: f64,
    /// Relative residual required of every linear solve.
    pub solver_tol: f64,
    /// Keep every `xi^{n,i}` in the trace.
    pub record_iterates: bool,
    /// Keep the state at every time level.
    pub record_states: bool,
}

impl Default for StepperConfig {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            algorithm: Algorithm::Coupled,
            max_iters: 10,
            iter_tol: 0.0,
            solver_tol: DEFAULT_SOLVE_TOL,
            record_iterates: false,
            record_states: false,
        }
    }
}

impl StepperConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("time step must be positive, got {}", self.dt)));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.iter_tol >= 0.0) || !(self.solver_tol > 0.0) {
            return Err(Error::Config("tolerances must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Coefficient vectors at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub t: f64,
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    pub p: Vec<f64>,
    pub temp: Vec<f64>,
}

impl FieldState {
    pub fn zeros(dofs: &DofMap, t: f64) -> Self {
        Self {
            t,
            u: vec![0.0; dofs.num_u()],
            xi: vec![0.0; dofs.num_p1()],
            p: vec![0.0; dofs.num_p1()],
            temp: vec![0.0; dofs.num_p1()],
        }
    }

    fn is_finite(&self) -> bool {
        [&self.u, &self.xi, &self.p, &self.temp].iter().all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// All coefficients stacked as `[u, xi, p, T]`.
    pub fn stacked(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.u.len() + 3 * self.xi.len());
        for v in [&self.u, &self.xi, &self.p, &self.temp] {
            out.extend_from_slice(v);
        }
        out
    }
}

/// Nodal interpolant of the data at `t = 0`; `xi` interpolates its closed form.
pub fn initial_state(mesh: &Mesh, dofs: &DofMap, data: &dyn ProblemData) -> FieldState {
    let mut s = FieldState::zeros(dofs, 0.0);
    for (node, [x, y]) in dofs.p2_node_coords(mesh).into_iter().enumerate() {
        let u = data.displacement(x, y, 0.0);
        s.u[DofMap::vector_dof(node, 0)] = u[0];
        s.u[DofMap::vector_dof(node, 1)] = u[1];
    }
    for (v, &[x, y]) in mesh.vertices.iter().enumerate() {
        s.xi[v] = data.pseudo_pressure(x, y, 0.0);
        s.p[v] = data.pressure(x, y, 0.0);
        s.temp[v] = data.temperature(x, y, 0.0);
    }
    zero_constrained(&mut s.u, &dofs.u_constrained);
    zero_constrained(&mut s.p, &dofs.pt_constrained);
    zero_constrained(&mut s.temp, &dofs.pt_constrained);
    s
}

fn zero_constrained(v: &mut [f64], constrained: &[bool]) {
    v.iter_mut().zip(constrained).filter(|(_, &c)| c).for_each(|(x, _)| *x = 0.0);
}

/// Decoupled-iteration record for one time step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepTrace {
    pub step: usize,
    pub iterations: usize,
    /// `||xi^{n,i} - xi^{n,i-1}||_{L2}` for `i = 1..=iterations`.
    pub increments: Vec<f64>,
    /// `xi^{n,i}` for `i = 0..=iterations` when recording is enabled.
    pub iterates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    pub steps: Vec<StepTrace>,
}

impl IterationTrace {
    pub fn total_iterations(&self) -> usize {
        self.steps.iter().map(|s| s.iterations).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Timings {
    /// Assembly and factorization.
    pub setup: Duration,
    /// The time loop alone.
    pub time_loop: Duration,
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    pub final_state: FieldState,
    pub trace: IterationTrace,
    pub timings: Timings,
    pub steps: usize,
    /// States `0..=steps` when `record_states` is set.
    pub states: Vec<FieldState>,
}

/// Number of steps to reach `tau`; `tau / dt` must be an integer up to rounding.
pub fn step_count(tau: f64, dt: f64) -> Result<usize> {
    if !(tau > 0.0) || !(dt > 0.0) {
        return Err(Error::Config(format!("need tau > 0 and dt > 0, got tau={tau}, dt={dt}")));
    }
    let ratio = tau / dt;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > 1e-12 * ratio.max(1.0) {
        return Err(Error::Config(format!("tau / dt = {ratio} is not a positive integer")));
    }
    Ok(n as usize)
}

/// Assembled operators and cached factorizations for one mesh and time step.
pub struct Simulation<'a> {
    pub mesh: Mesh,
    pub dofs: DofMap,
    pub params: MaterialParams,
    pub data: &'a dyn ProblemData,
    pub cfg: StepperConfig,
    pub forms: FormSet,
    coupled_lu: OnceCell<LuSolver>,
    pt_lu: OnceCell<LuSolver>,
    stokes_lu: OnceCell<LuSolver>,
}

impl<'a> Simulation<'a> {
    pub fn new(mesh: Mesh, params: MaterialParams, data: &'a dyn ProblemData, cfg: StepperConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let dofs = build_dof_maps(&mesh);
        let forms = assemble_forms(&mesh, &dofs, &params)?;
        Ok(Self {
            mesh,
            dofs,
            params,
            data,
            cfg,
            forms,
            coupled_lu: OnceCell::new(),
            pt_lu: OnceCell::new(),
            stokes_lu: OnceCell::new(),
        })
    }

    pub fn initial_state(&self) -> FieldState {
        initial_state(&self.mesh, &self.dofs, self.data)
    }

    pub fn loads(&self, t: f64) -> Result<LoadSet> {
        assemble_loads(&self.mesh, &self.dofs, self.data, t)
    }

    fn constrained_coupled(&self) -> Vec<bool> {
        let mut c = self.dofs.constrained(Field::U);
        c.extend(self.dofs.constrained(Field::Xi));
        c.extend(self.dofs.constrained(Field::P));
        c.extend(self.dofs.constrained(Field::T));
        c
    }

    /// The four-field matrix before elimination.
    pub fn coupled_matrix_raw(&self) -> Result<SparseMatrix> {
        let (m, f) = (&self.params, &self.forms);
        let dt = self.cfg.dt;
        let (l, a, b) = (m.lambda, m.alpha, m.beta);
        let bt = f.div_coupling.transpose();
        let pp = f.mass.linear_combination(m.pressure_storage(), &f.diffusion_p, dt)?;
        let tt = f.mass.linear_combination(m.thermal_storage(), &f.diffusion_t, dt)?;
        let e = m.cross_storage();
        block_compose(&[
            vec![Some((&f.elasticity, 1.0)), Some((&f.div_coupling, -1.0)), None, None],
            vec![Some((&bt, -1.0)), Some((&f.mass, -1.0 / l)), Some((&f.mass, a / l)), Some((&f.mass, b / l))],
            vec![None, Some((&f.mass, -a / l)), Some((&pp, 1.0)), Some((&f.mass, e))],
            vec![None, Some((&f.mass, -b / l)), Some((&f.mass, e)), Some((&tt, 1.0))],
        ])
    }

    /// The four-field matrix with Dirichlet rows and columns eliminated.
    pub fn coupled_matrix(&self) -> Result<SparseMatrix> {
        eliminate(&self.coupled_matrix_raw()?, &self.constrained_coupled())
    }

    /// Right-hand side of the coupled step, Dirichlet entries zeroed.
    pub fn coupled_rhs(&self, prev: &FieldState, loads: &LoadSet) -> Vec<f64> {
        let (m, f) = (&self.params, &self.forms);
        let dt = self.cfg.dt;
        let (l, a, b) = (m.lambda, m.alpha, m.beta);
        let mp = f.mass.matvec(&prev.p);
        let mt = f.mass.matvec(&prev.temp);
        let mx = f.mass.matvec(&prev.xi);
        let (cp, ct, e) = (m.pressure_storage(), m.thermal_storage(), m.cross_storage());
        let np = self.dofs.num_p1();
        let mut rhs = loads.f_u.clone();
        rhs.extend(std::iter::repeat(0.0).take(np));
        rhs.extend((0..np).map(|i| cp * mp[i] + e * mt[i] - a / l * mx[i] + dt * loads.g_p[i]));
        rhs.extend((0..np).map(|i| ct * mt[i] + e * mp[i] - b / l * mx[i] + dt * loads.h_t[i]));
        zero_constrained(&mut rhs, &self.constrained_coupled());
        rhs
    }

    fn coupled_solver(&self) -> Result<&LuSolver> {
        if self.coupled_lu.get().is_none() {
            let lu = LuSolver::new(&self.coupled_matrix()?, self.cfg.solver_tol)?;
            let _ = self.coupled_lu.set(lu);
        }
        Ok(self.coupled_lu.get().expect("initialized above"))
    }

    fn pt_matrix(&self) -> Result<SparseMatrix> {
        let (m, f) = (&self.params, &self.forms);
        let dt = self.cfg.dt;
        let pp = f.mass.linear_combination(m.pressure_storage(), &f.diffusion_p, dt)?;
        let tt = f.mass.linear_combination(m.thermal_storage(), &f.diffusion_t, dt)?;
        let e = m.cross_storage();
        let raw = block_compose(&[
            vec![Some((&pp, 1.0)), Some((&f.mass, e))],
            vec![Some((&f.mass, e)), Some((&tt, 1.0))],
        ])?;
        let mut c = self.dofs.constrained(Field::P);
        c.extend(self.dofs.constrained(Field::T));
        eliminate(&raw, &c)
    }

    fn stokes_matrix(&self) -> Result<SparseMatrix> {
        let f = &self.forms;
        let bt = f.div_coupling.transpose();
        let raw = block_compose(&[
            vec![Some((&f.elasticity, 1.0)), Some((&f.div_coupling, -1.0))],
            vec![Some((&bt, -1.0)), Some((&f.mass, -1.0 / self.params.lambda))],
        ])?;
        let mut c = self.dofs.constrained(Field::U);
        c.extend(self.dofs.constrained(Field::Xi));
        eliminate(&raw, &c)
    }

    fn decoupled_solvers(&self) -> Result<(&LuSolver, &LuSolver)> {
        if self.pt_lu.get().is_none() {
            let _ = self.pt_lu.set(LuSolver::new(&self.pt_matrix()?, self.cfg.solver_tol)?);
        }
        if self.stokes_lu.get().is_none() {
            let _ = self.stokes_lu.set(LuSolver::new(&self.stokes_matrix()?, self.cfg.solver_tol)?);
        }
        Ok((self.pt_lu.get().expect("set"), self.stokes_lu.get().expect("set")))
    }

    /// Factorizes whatever the configured algorithm needs.
    pub fn prepare(&self) -> Result<()> {
        match self.cfg.algorithm {
            Algorithm::Coupled => self.coupled_solver().map(|_| ()),
            Algorithm::Decoupled => self.decoupled_solvers().map(|_| ()),
        }
    }

    fn split(&self, x: &[f64], t: f64) -> FieldState {
        let nu = self.dofs.num_u();
        let np = self.dofs.num_p1();
        FieldState {
            t,
            u: x[..nu].to_vec(),
            xi: x[nu..nu + np].to_vec(),
            p: x[nu + np..nu + 2 * np].to_vec(),
            temp: x[nu + 2 * np..].to_vec(),
        }
    }

    /// One monolithic backward Euler step with loads at the new time level.
    pub fn coupled_step(&self, prev: &FieldState, loads: &LoadSet) -> Result<FieldState> {
        let rhs = self.coupled_rhs(prev, loads);
        let (x, _) = self.coupled_solver()?.solve(&rhs)?;
        let next = self.split(&x, loads.t);
        if !next.is_finite() {
            return Err(Error::SolverFailure { reason: "non-finite coupled solution".into(), residual: f64::NAN });
        }
        Ok(next)
    }

    /// `||v||_{L2}` of a P1 coefficient vector.
    pub fn l2_norm_p1(&self, v: &[f64]) -> f64 {
        self.forms.mass.quadratic_form(v).max(0.0).sqrt()
    }

    /// One pass of the decoupled iteration: solve for `(p, T)` with `xi`
    /// lagged at `xi_lag`, then for `(u, xi)` with the new `(p, T)`.
    pub fn decoupled_iteration(&self, prev: &FieldState, loads: &LoadSet, xi_lag: &[f64]) -> Result<FieldState> {
        let (pt_lu, stokes_lu) = self.decoupled_solvers()?;
        let (m, f) = (&self.params, &self.forms);
        let dt = self.cfg.dt;
        let (l, a, b) = (m.lambda, m.alpha, m.beta);
        let (cp, ct, e) = (m.pressure_storage(), m.thermal_storage(), m.cross_storage());
        let np = self.dofs.num_p1();
        let nu = self.dofs.num_u();
        let mp = f.mass.matvec(&prev.p);
        let mt = f.mass.matvec(&prev.temp);
        let diff: Vec<f64> = xi_lag.iter().zip(&prev.xi).map(|(x, y)| x - y).collect();
        let md = f.mass.matvec(&diff);

        let mut rhs1: Vec<f64> = (0..np).map(|k| cp * mp[k] + e * mt[k] + dt * loads.g_p[k] + a / l * md[k]).collect();
        rhs1.extend((0..np).map(|k| ct * mt[k] + e * mp[k] + dt * loads.h_t[k] + b / l * md[k]));
        let mut pt_constrained = self.dofs.constrained(Field::P);
        pt_constrained.extend(self.dofs.constrained(Field::T));
        zero_constrained(&mut rhs1, &pt_constrained);
        let (pt, _) = pt_lu.solve(&rhs1)?;
        let (p, temp) = pt.split_at(np);
        let mpn = f.mass.matvec(p);
        let mtn = f.mass.matvec(temp);

        let mut rhs2 = loads.f_u.clone();
        rhs2.extend((0..np).map(|k| -a / l * mpn[k] - b / l * mtn[k]));
        zero_constrained(&mut rhs2, &self.dofs.u_constrained);
        let (ux, _) = stokes_lu.solve(&rhs2)?;
        let (u, xi) = ux.split_at(nu);
        Ok(FieldState { t: loads.t, u: u.to_vec(), xi: xi.to_vec(), p: p.to_vec(), temp: temp.to_vec() })
    }

    /// One step of the iteratively decoupled algorithm, starting from
    /// `xi^{n,0} = xi^{n-1}`.
    pub fn decoupled_step(&self, prev: &FieldState, loads: &LoadSet, step: usize) -> Result<(FieldState, StepTrace)> {
        let mut trace = StepTrace { step, ..Default::default() };
        if self.cfg.record_iterates {
            trace.iterates.push(prev.xi.clone());
        }
        let mut state = prev.clone();
        for i in 1..=self.cfg.max_iters {
            let next = self.decoupled_iteration(prev, loads, &state.xi)?;
            let inc: Vec<f64> = next.xi.iter().zip(&state.xi).map(|(x, y)| x - y).collect();
            let inc_norm = self.l2_norm_p1(&inc);
            if !next.is_finite() || !inc_norm.is_finite() {
                return Err(Error::Divergence { step, iteration: i });
            }
            state = next;
            trace.iterations = i;
            trace.increments.push(inc_norm);
            if self.cfg.record_iterates {
                trace.iterates.push(state.xi.clone());
            }
            if self.cfg.iter_tol > 0.0 && inc_norm <= self.cfg.iter_tol {
                break;
            }
        }
        Ok((state, trace))
    }

    /// Advances from the initial state to `tau`.
    pub fn run(&self, tau: f64) -> Result<SimulationResult> {
        let steps = step_count(tau, self.cfg.dt)?;
        let setup_start = Instant::now();
        self.prepare()?;
        let setup = setup_start.elapsed();

        let mut state = self.initial_state();
        let mut states = Vec::new();
        if self.cfg.record_states {
            states.push(state.clone());
        }
        let mut trace = IterationTrace::default();
        let loop_start = Instant::now();
        for n in 1..=steps {
            let loads = self.loads(n as f64 * self.cfg.dt)?;
            let wrap = |e: Error| Error::StepFailure { step: n, source: Box::new(e) };
            state = match self.cfg.algorithm {
                Algorithm::Coupled => self.coupled_step(&state, &loads).map_err(wrap)?,
                Algorithm::Decoupled => {
                    let (s, st) = self.decoupled_step(&state, &loads, n).map_err(wrap)?;
                    trace.steps.push(st);
                    s
                }
            };
            if self.cfg.record_states {
                states.push(state.clone());
            }
        }
        let time_loop = loop_start.elapsed();
        Ok(SimulationResult { final_state: state, trace, timings: Timings { setup, time_loop }, steps, states })
    }

}

/// Builds the mesh, assembles, and runs to `tau`.
pub fn run_simulation(
    cfg: &StepperConfig,
    mesh: Mesh,
    params: &MaterialParams,
    data: &dyn ProblemData,
    tau: f64,
) -> Result<SimulationResult> {
    Simulation::new(mesh, *params, data, cfg.clone())?.run(tau)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_uniform_mesh;
    use crate::model::{ManufacturedSolution, MaterialParamsBuilder, ZeroProblem};

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn step_counts() {
        assert_eq!(step_count(0.01, 1e-3).unwrap(), 10);
        assert_eq!(step_count(0.01, 5e-3).unwrap(), 2);
        assert_eq!(step_count(0.01, 1e-2).unwrap(), 1);
        assert_eq!(step_count(1.0, 1e-2).unwrap(), 100);
        assert!(matches!(step_count(0.01, 3e-3), Err(Error::Config(_))));
    }

    #[test]
    fn config_validation() {
        let cfg = StepperConfig { dt: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = StepperConfig { max_iters: 0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn initial_state_values() {
        let params = MaterialParams::default();
        let sol = ManufacturedSolution::new(params);
        let mesh = build_uniform_mesh(4).unwrap();
        let dofs = build_dof_maps(&mesh);
        let s = initial_state(&mesh, &dofs, &sol);
        let centre = mesh.vertices.iter().position(|v| *v == [0.5, 0.5]).unwrap();
        assert!((s.p[centre] - 1.0).abs() < 1e-15);
        for (i, &c) in dofs.u_constrained.iter().enumerate() {
            if c {
                assert_eq!(s.u[i], 0.0);
            }
        }
    }

    #[test]
    fn initial_xi_without_coupling() {
        let params = MaterialParamsBuilder { alpha: 1e-300, beta: 1e-300, ..Default::default() }.build().unwrap();
        let sol = ManufacturedSolution::new(params);
        let mesh = build_uniform_mesh(3).unwrap();
        let dofs = build_dof_maps(&mesh);
        let s = initial_state(&mesh, &dofs, &sol);
        for (v, &[x, y]) in mesh.vertices.iter().enumerate() {
            assert!((s.xi[v] + params.lambda * sol.divergence(x, y, 0.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let mesh = build_uniform_mesh(2).unwrap();
        for algorithm in [Algorithm::Coupled, Algorithm::Decoupled] {
            let cfg = StepperConfig { algorithm, max_iters: 1, ..Default::default() };
            let r = run_simulation(&cfg, mesh.clone(), &MaterialParams::default(), &ZeroProblem, 0.003).unwrap();
            assert!(r.final_state.stacked().iter().all(|&v| v == 0.0));
            assert_eq!(r.steps, 3);
        }
    }

    #[test]
    fn coupled_step_matches_dense_solve() {
        let params = MaterialParams::default();
        let sol = ManufacturedSolution::new(params);
        let sim = Simulation::new(build_uniform_mesh(2).unwrap(), params, &sol, StepperConfig::default()).unwrap();
        let s0 = sim.initial_state();
        let loads = sim.loads(1e-3).unwrap();
        let s1 = sim.coupled_step(&s0, &loads).unwrap();
        let a = sim.coupled_matrix().unwrap();
        let n = a.nrows();
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let rhs = nalgebra::DVector::from_vec(sim.coupled_rhs(&s0, &loads));
        let x = dense.lu().solve(&rhs).unwrap();
        assert!(max_diff(&s1.stacked(), x.as_slice()) < 1e-10);
    }

    #[test]
    fn decoupled_converges_to_coupled() {
        let params = MaterialParams::default();
        let sol = ManufacturedSolution::new(params);
        let cfg = StepperConfig { algorithm: Algorithm::Decoupled, max_iters: 50, ..Default::default() };
        let sim = Simulation::new(build_uniform_mesh(2).unwrap(), params, &sol, cfg).unwrap();
        let s0 = sim.initial_state();
        let loads = sim.loads(1e-3).unwrap();
        let c = sim.coupled_step(&s0, &loads).unwrap();
        let (d, tr) = sim.decoupled_step(&s0, &loads, 1).unwrap();
        assert_eq!(tr.iterations, 50);
        for (x, y) in [(&c.xi, &d.xi), (&c.p, &d.p), (&c.temp, &d.temp)] {
            let diff: Vec<f64> = x.iter().zip(y.iter()).map(|(a, b)| a - b).collect();
            assert!(sim.l2_norm_p1(&diff) < 1e-8);
        }
        assert!(max_diff(&c.u, &d.u) < 1e-8);
    }

    #[test]
    fn coupled_solution_is_fixed_point() {
        let params = MaterialParams::default();
        let sol = ManufacturedSolution::new(params);
        let cfg = StepperConfig { algorithm: Algorithm::Decoupled, max_iters: 1, ..Default::default() };
        let sim = Simulation::new(build_uniform_mesh(4).unwrap(), params, &sol, cfg).unwrap();
        let s0 = sim.initial_state();
        let loads = sim.loads(1e-3).unwrap();
        let c = sim.coupled_step(&s0, &loads).unwrap();
        let d = sim.decoupled_iteration(&s0, &loads, &c.xi).unwrap();
        assert!(max_diff(&c.stacked(), &d.stacked()) < 1e-9);
    }

    #[test]
    fn degenerate_storage_converges() {
        let params = MaterialParamsBuilder { a0: 0.0, b0: 0.0, c0: 0.0, ..Default::default() }.build().unwrap();
        let sol = ManufacturedSolution::new(params);
        let cfg = StepperConfig { algorithm: Algorithm::Decoupled, max_iters: 200, iter_tol: 1e-12, ..Default::default() };
        let sim = Simulation::new(build_uniform_mesh(4).unwrap(), params, &sol, cfg).unwrap();
        let s0 = sim.initial_state();
        let loads = sim.loads(1e-3).unwrap();
        let c = sim.coupled_step(&s0, &loads).unwrap();
        let (d, tr) = sim.decoupled_step(&s0, &loads, 1).unwrap();
        assert!(tr.iterations < 200);
        let diff: Vec<f64> = c.xi.iter().zip(&d.xi).map(|(a, b)| a - b).collect();
        assert!(sim.l2_norm_p1(&diff) < 1e-8);
    }

    #[test]
    fn large_step_is_stable() {
        let params = MaterialParams::default();
        let sol = ManufacturedSolution::new(params);
        let mesh = build_uniform_mesh(8).unwrap();
        let dt = 10.0 * mesh.h();
        for algorithm in [Algorithm::Coupled, Algorithm::Decoupled] {
            let cfg = StepperConfig { dt, algorithm, max_iters: 5, ..Default::default() };
            let sim = Simulation::new(mesh.clone(), params, &sol, cfg).unwrap();
            let s0 = sim.initial_state();
            let r = sim.run(5.0 * dt).unwrap();
            let n0 = crate::sparse::norm2(&s0.stacked());
            let n1 = crate::sparse::norm2(&r.final_state.stacked());
            assert!(n1.is_finite() && n1 <= 10.0 * n0, "{algorithm}: {n1} vs {n0}");
        }
    }
}
