//! Error norms, convergence orders, the discrete energy balance of the
//! coupled scheme, and contraction of the decoupled iteration.

use crate::assembly::LoadSet;
use crate::basis::{element_map, quadrature_rule, shape_p1, shape_p2, Point};
use crate::mesh::{DofMap, Mesh};
use crate::model::{Mat2, ProblemData};
use crate::sparse::SparseMatrix;
use crate::steppers::{FieldState, IterationTrace, Simulation};
use crate::{Error, Result};

/// Quadrature degree used for all error integrals.
pub const ERROR_QUADRATURE_DEGREE: usize = 6;

/// Point values of all four fields and the gradients entering the H1 norms.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointValues {
    pub u: [f64; 2],
    pub grad_u: Mat2,
    pub xi: f64,
    pub p: f64,
    pub grad_p: [f64; 2],
    pub temp: f64,
    pub grad_temp: [f64; 2],
}

/// Something that can be evaluated inside triangle `tri` at reference point
/// `xref` (physical point `x`).
pub trait FieldEvaluator {
    fn eval(&self, tri: usize, xref: Point, x: Point) -> Result<PointValues>;
}

/// A finite element state.
pub struct DiscreteFields<'a> {
    pub mesh: &'a Mesh,
    pub dofs: &'a DofMap,
    pub state: &'a FieldState,
}

impl FieldEvaluator for DiscreteFields<'_> {
    fn eval(&self, tri: usize, xref: Point, _x: Point) -> Result<PointValues> {
        let map = element_map(self.mesh.triangle_coords(tri))?;
        let (phi, dphi) = shape_p2(xref);
        let (psi, dpsi) = shape_p1(xref);
        let mut v = PointValues::default();
        for (a, &node) in self.dofs.p2_cells[tri].iter().enumerate() {
            let g = map.grad(dphi[a]);
            for c in 0..2 {
                let coef = self.state.u[DofMap::vector_dof(node, c)];
                v.u[c] += coef * phi[a];
                v.grad_u[c][0] += coef * g[0];
                v.grad_u[c][1] += coef * g[1];
            }
        }
        for (j, &node) in self.dofs.p1_cells[tri].iter().enumerate() {
            let g = map.grad(dpsi[j]);
            v.xi += self.state.xi[node] * psi[j];
            v.p += self.state.p[node] * psi[j];
            v.temp += self.state.temp[node] * psi[j];
            for d in 0..2 {
                v.grad_p[d] += self.state.p[node] * g[d];
                v.grad_temp[d] += self.state.temp[node] * g[d];
            }
        }
        Ok(v)
    }
}

/// Exact fields at a fixed time, usable in place of a discrete state.
pub struct ExactFields<'a> {
    pub data: &'a dyn ProblemData,
    pub t: f64,
}

impl FieldEvaluator for ExactFields<'_> {
    fn eval(&self, _tri: usize, _xref: Point, [x, y]: Point) -> Result<PointValues> {
        let (d, t) = (self.data, self.t);
        Ok(PointValues {
            u: d.displacement(x, y, t),
            grad_u: d.displacement_gradient(x, y, t),
            xi: d.pseudo_pressure(x, y, t),
            p: d.pressure(x, y, t),
            grad_p: d.pressure_gradient(x, y, t),
            temp: d.temperature(x, y, t),
            grad_temp: d.temperature_gradient(x, y, t),
        })
    }
}

/// `(||u||_{H1}, ||xi||_{L2}, ||p||_{H1}, ||T||_{H1})` of the error.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorNorms {
    pub u_h1: f64,
    pub xi_l2: f64,
    pub p_h1: f64,
    pub t_h1: f64,
}

impl ErrorNorms {
    pub fn as_array(&self) -> [f64; 4] {
        [self.u_h1, self.xi_l2, self.p_h1, self.t_h1]
    }
}

/// Full-norm errors of `fields` against the exact solution at time `t`.
pub fn error_norms_of(fields: &dyn FieldEvaluator, data: &dyn ProblemData, t: f64, mesh: &Mesh) -> Result<ErrorNorms> {
    let rule = quadrature_rule(ERROR_QUADRATURE_DEGREE)?;
    let exact = ExactFields { data, t };
    let mut acc = [0.0f64; 4];
    for tri in 0..mesh.num_triangles() {
        let map = element_map(mesh.triangle_coords(tri))?;
        for (q, w) in rule.iter() {
            let x = map.to_physical(q);
            let a = fields.eval(tri, q, x)?;
            let b = exact.eval(tri, q, x)?;
            let wq = w * map.det;
            let sq = |v: f64| v * v;
            let mut eu = 0.0;
            for c in 0..2 {
                eu += sq(a.u[c] - b.u[c]);
                for d in 0..2 {
                    eu += sq(a.grad_u[c][d] - b.grad_u[c][d]);
                }
            }
            acc[0] += wq * eu;
            acc[1] += wq * sq(a.xi - b.xi);
            acc[2] += wq * (sq(a.p - b.p) + sq(a.grad_p[0] - b.grad_p[0]) + sq(a.grad_p[1] - b.grad_p[1]));
            acc[3] += wq
                * (sq(a.temp - b.temp) + sq(a.grad_temp[0] - b.grad_temp[0]) + sq(a.grad_temp[1] - b.grad_temp[1]));
        }
    }
    Ok(ErrorNorms { u_h1: acc[0].sqrt(), xi_l2: acc[1].sqrt(), p_h1: acc[2].sqrt(), t_h1: acc[3].sqrt() })
}

pub fn error_norms(state: &FieldState, data: &dyn ProblemData, mesh: &Mesh, dofs: &DofMap) -> Result<ErrorNorms> {
    error_norms_of(&DiscreteFields { mesh, dofs, state }, data, state.t, mesh)
}

/// L2 norms `(u, xi, p, T)` of a discrete state.
pub fn field_l2_norms(state: &FieldState, mesh: &Mesh, dofs: &DofMap) -> Result<[f64; 4]> {
    let rule = quadrature_rule(ERROR_QUADRATURE_DEGREE)?;
    let fields = DiscreteFields { mesh, dofs, state };
    let mut acc = [0.0f64; 4];
    for tri in 0..mesh.num_triangles() {
        let map = element_map(mesh.triangle_coords(tri))?;
        for (q, w) in rule.iter() {
            let v = fields.eval(tri, q, map.to_physical(q))?;
            let wq = w * map.det;
            acc[0] += wq * (v.u[0] * v.u[0] + v.u[1] * v.u[1]);
            acc[1] += wq * v.xi * v.xi;
            acc[2] += wq * v.p * v.p;
            acc[3] += wq * v.temp * v.temp;
        }
    }
    Ok(acc.map(f64::sqrt))
}

/// Field-wise difference `a - b` of two states on the same dofs.
pub fn state_difference(a: &FieldState, b: &FieldState) -> FieldState {
    FieldState { t: a.t, u: sub(&a.u, &b.u), xi: sub(&a.xi, &b.xi), p: sub(&a.p, &b.p), temp: sub(&a.temp, &b.temp) }
}

/// One row of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRecord {
    /// Subdivisions per side; `h = 1/n`.
    pub n: usize,
    pub errors: ErrorNorms,
    /// Orders against the previous row, in the column order of [`ErrorNorms::as_array`].
    pub orders: [f64; 4],
    pub cpu_seconds: f64,
}

impl ErrorRecord {
    pub fn new(n: usize, errors: ErrorNorms, cpu_seconds: f64) -> Self {
        Self { n, errors, orders: [0.0; 4], cpu_seconds }
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }
}

/// Fills `orders` as `log(e_prev / e) / log(h_prev / h)`; the first row gets 0.
pub fn convergence_orders(records: &mut [ErrorRecord]) -> Result<()> {
    for k in 0..records.len() {
        let cur = records[k].errors.as_array();
        if cur.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::OrderUndefined(format!("row h=1/{} has a zero or invalid error", records[k].n)));
        }
        if k == 0 {
            records[k].orders = [0.0; 4];
            continue;
        }
        let prev = records[k - 1].errors.as_array();
        let ratio = records[k - 1].h() / records[k].h();
        if !(ratio > 1.0) {
            return Err(Error::OrderUndefined("mesh sizes must decrease".into()));
        }
        for i in 0..4 {
            records[k].orders[i] = (prev[i] / cur[i]).ln() / ratio.ln();
        }
    }
    Ok(())
}

/// Contributions to the accumulated dissipation at one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyIncrement {
    /// `1/2 |du|_A^2 + 1/2 |dw|_Q^2`, the backward Euler numerical dissipation.
    pub increments: f64,
    /// `dt ((K grad p, grad p) + (Theta grad T, grad T))`.
    pub diffusion: f64,
    /// `-dt ((g, p) + (Hs, T))`.
    pub source_work: f64,
    /// `(F^n - F^{n-1}) . u^{n-1}`, present because the loads change in time.
    pub load_variation: f64,
}

impl EnergyIncrement {
    pub fn total(&self) -> f64 {
        self.increments + self.diffusion + self.source_work + self.load_variation
    }
}

/// Energy balance `J^l + S^l = J^0` along a coupled trajectory.
///
/// The stored energy is `mu |eps(u)|^2 + |alpha p + beta T - xi|^2 / (2 lambda)
/// + (c0 - b0)/2 |p|^2 + (a0 - b0)/2 |T|^2 + b0/2 |p - T|^2`, and
/// `J = stored - (F, u)` where `F` includes the traction load.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    /// `J^l` for `l = 0..=steps`.
    pub j: Vec<f64>,
    /// `S^l` for `l = 0..=steps`, with `S^0 = 0`.
    pub s: Vec<f64>,
    pub increments: Vec<EnergyIncrement>,
    /// `(xi^1, r0)` where `r0` is the defect of the second equation in the
    /// initial data; zero when `xi^0` is consistent with `(u^0, p^0, T^0)`.
    pub initial_defect_work: f64,
    /// `J^l + S^l - J^0`.
    pub residual: Vec<f64>,
}

impl EnergyLedger {
    pub fn max_relative_residual(&self) -> f64 {
        let scale = self.j.first().map_or(1.0, |j| j.abs().max(1.0));
        self.residual.iter().map(|r| r.abs() / scale).fold(0.0, f64::max)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// `w^T Q w` with `w = (xi, p, T)`.
fn storage_form(sim: &Simulation, m: &SparseMatrix, xi: &[f64], p: &[f64], t: &[f64]) -> f64 {
    let pr = &sim.params;
    let (l, a, b) = (pr.lambda, pr.alpha, pr.beta);
    let (cp, ct, e) = (pr.pressure_storage(), pr.thermal_storage(), pr.cross_storage());
    let (mx, mp, mt) = (m.matvec(xi), m.matvec(p), m.matvec(t));
    dot(xi, &mx) / l + cp * dot(p, &mp) + ct * dot(t, &mt) - 2.0 * a / l * dot(p, &mx) - 2.0 * b / l * dot(t, &mx)
        + 2.0 * e * dot(p, &mt)
}

fn stored_energy(sim: &Simulation, s: &FieldState) -> f64 {
    0.5 * sim.forms.elasticity.quadratic_form(&s.u) + 0.5 * storage_form(sim, &sim.forms.mass, &s.xi, &s.p, &s.temp)
}

/// Evaluates the energy balance on a coupled trajectory `states[0..=l]`
/// produced by `sim` with loads `loads[n]` at `t_n`.
pub fn energy_ledger_with_loads(sim: &Simulation, states: &[FieldState], loads: &[LoadSet]) -> Result<EnergyLedger> {
    if states.len() < 2 {
        return Err(Error::InvalidArgument("energy ledger needs at least two states".into()));
    }
    if loads.len() != states.len() {
        return Err(Error::DimensionMismatch(format!("{} states but {} load sets", states.len(), loads.len())));
    }
    let f = &sim.forms;
    let pr = &sim.params;
    let dt = sim.cfg.dt;
    let (l, a, b) = (pr.lambda, pr.alpha, pr.beta);

    let j: Vec<f64> =
        states.iter().zip(loads).map(|(s, ld)| stored_energy(sim, s) - dot(&ld.f_u, &s.u)).collect();

    let s0 = &states[0];
    let r0: Vec<f64> = {
        let btu = f.div_coupling.transpose().matvec(&s0.u);
        let (mx, mp, mt) = (f.mass.matvec(&s0.xi), f.mass.matvec(&s0.p), f.mass.matvec(&s0.temp));
        (0..btu.len()).map(|i| -btu[i] - mx[i] / l + a / l * mp[i] + b / l * mt[i]).collect()
    };
    let initial_defect_work = dot(&states[1].xi, &r0);

    let mut increments = Vec::with_capacity(states.len() - 1);
    let mut s = vec![0.0];
    let mut acc = -initial_defect_work;
    for n in 1..states.len() {
        let (cur, prev) = (&states[n], &states[n - 1]);
        let du = sub(&cur.u, &prev.u);
        let (dx, dp, dtt) = (sub(&cur.xi, &prev.xi), sub(&cur.p, &prev.p), sub(&cur.temp, &prev.temp));
        let inc = EnergyIncrement {
            increments: 0.5 * f.elasticity.quadratic_form(&du) + 0.5 * storage_form(sim, &f.mass, &dx, &dp, &dtt),
            diffusion: dt * (f.diffusion_p.quadratic_form(&cur.p) + f.diffusion_t.quadratic_form(&cur.temp)),
            source_work: -dt * (dot(&loads[n].g_p, &cur.p) + dot(&loads[n].h_t, &cur.temp)),
            load_variation: dot(&sub(&loads[n].f_u, &loads[n - 1].f_u), &prev.u),
        };
        acc += inc.total();
        increments.push(inc);
        s.push(acc);
    }
    let residual = (0..states.len()).map(|k| if k == 0 { 0.0 } else { j[k] + s[k] - j[0] }).collect();
    Ok(EnergyLedger { j, s, increments, initial_defect_work, residual })
}

/// [`energy_ledger_with_loads`] with loads assembled at each state's time.
pub fn energy_ledger(sim: &Simulation, states: &[FieldState]) -> Result<EnergyLedger> {
    if states.len() < 2 {
        return Err(Error::InvalidArgument("energy ledger needs at least two states".into()));
    }
    let loads = states.iter().map(|s| sim.loads(s.t)).collect::<Result<Vec<_>>>()?;
    energy_ledger_with_loads(sim, states, &loads)
}

/// Distances of the decoupled iterates to a reference coupled solution.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepContraction {
    pub step: usize,
    /// `d_i = ||xi^{n,i} - xi^n_ref||_{L2}` for `i = 0..=iterations`.
    pub distances: Vec<f64>,
    /// `d_i / d_{i-1}` for `i = 1..=iterations`.
    pub ratios: Vec<f64>,
    /// Iterations `i` whose ratio exceeds `1 + 1e-10` while `d_{i-1}` is above the floor.
    pub violations: Vec<usize>,
    /// Largest ratio among iterations with `d_{i-1}` above the floor.
    pub max_checked_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractionReport {
    pub steps: Vec<StepContraction>,
    /// Distances at or below this are treated as converged and not checked.
    pub floor: f64,
}

impl ContractionReport {
    pub fn is_monotone(&self) -> bool {
        self.steps.iter().all(|s| s.violations.is_empty())
    }

    /// Largest ratio among the checked iterations of all steps.
    pub fn max_ratio(&self) -> f64 {
        self.steps.iter().map(|s| s.max_checked_ratio).fold(0.0, f64::max)
    }
}

pub const CONTRACTION_SLACK: f64 = 1e-10;

/// Compares recorded iterates (`record_iterates`) against one coupled
/// reference per step. Ratios are only checked while `d_{i-1}` exceeds
/// `floor_rel * ||xi_ref||`, below which solver round-off dominates.
pub fn contraction_report(
    trace: &IterationTrace,
    references: &[FieldState],
    mass: &SparseMatrix,
    floor_rel: f64,
) -> Result<ContractionReport> {
    if trace.steps.len() != references.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} traced steps but {} references",
            trace.steps.len(),
            references.len()
        )));
    }
    let norm = |v: &[f64]| mass.quadratic_form(v).max(0.0).sqrt();
    let mut report = ContractionReport { steps: Vec::new(), floor: 0.0 };
    for (st, reference) in trace.steps.iter().zip(references) {
        if st.iterates.len() != st.iterations + 1 {
            return Err(Error::InvalidArgument("trace was recorded without iterates".into()));
        }
        let floor = floor_rel * norm(&reference.xi);
        report.floor = report.floor.max(floor);
        let distances: Vec<f64> = st.iterates.iter().map(|x| norm(&sub(x, &reference.xi))).collect();
        let ratios: Vec<f64> = distances.windows(2).map(|w| w[1] / w[0]).collect();
        let checked: Vec<usize> = (1..distances.len()).filter(|&i| distances[i - 1] > floor).collect();
        let violations =
            checked.iter().copied().filter(|&i| distances[i] > (1.0 + CONTRACTION_SLACK) * distances[i - 1]).collect();
        let max_checked_ratio = checked.iter().map(|&i| ratios[i - 1]).fold(0.0, f64::max);
        report.steps.push(StepContraction { step: st.step, distances, ratios, violations, max_checked_ratio });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_dof_maps, build_uniform_mesh};
    use crate::model::{ManufacturedSolution, MaterialParams, ZeroProblem};
    use crate::steppers::{initial_state, Algorithm, StepperConfig};

    fn record(n: usize, e: [f64; 4]) -> ErrorRecord {
        ErrorRecord::new(n, ErrorNorms { u_h1: e[0], xi_l2: e[1], p_h1: e[2], t_h1: e[3] }, 0.0)
    }

    #[test]
    fn orders_from_known_errors() {
        let mut r = vec![record(16, [0.4, 0.2, 1.00607e-01, 1.0]), record(32, [0.1, 0.1, 2.53649e-02, 1.0])];
        convergence_orders(&mut r).unwrap();
        assert_eq!(r[0].orders, [0.0; 4]);
        assert!((r[1].orders[0] - 2.0).abs() < 1e-14);
        assert!((r[1].orders[1] - 1.0).abs() < 1e-14);
        assert_eq!(format!("{:.2}", r[1].orders[2]), "1.99");
        assert!(r[1].orders[3].abs() < 1e-15);
        let mut z = vec![record(16, [0.0, 1.0, 1.0, 1.0])];
        assert!(matches!(convergence_orders(&mut z), Err(Error::OrderUndefined(_))));
    }

    #[test]
    fn exact_fields_have_zero_error() {
        let sol = ManufacturedSolution::new(MaterialParams::default());
        let mesh = build_uniform_mesh(4).unwrap();
        let e = error_norms_of(&ExactFields { data: &sol, t: 0.3 }, &sol, 0.3, &mesh).unwrap();
        assert!(e.as_array().iter().all(|&v| v <= 1e-12));
    }

    #[test]
    fn interpolation_error_is_second_order_for_u() {
        let sol = ManufacturedSolution::new(MaterialParams::default());
        let mut errs = Vec::new();
        for n in [8, 16] {
            let mesh = build_uniform_mesh(n).unwrap();
            let dofs = build_dof_maps(&mesh);
            let s = initial_state(&mesh, &dofs, &sol);
            let e = error_norms(&s, &sol, &mesh, &dofs).unwrap();
            assert!(e.as_array().iter().all(|&v| v > 0.0));
            errs.push(e);
        }
        let order = (errs[0].u_h1 / errs[1].u_h1).log2();
        assert!((order - 2.0).abs() < 0.15, "{order}");
        let order_p = (errs[0].p_h1 / errs[1].p_h1).log2();
        assert!((order_p - 1.0).abs() < 0.15, "{order_p}");
    }

    #[test]
    fn energy_ledger_needs_two_states() {
        let params = MaterialParams::default();
        let sim = Simulation::new(build_uniform_mesh(2).unwrap(), params, &ZeroProblem, StepperConfig::default()).unwrap();
        assert!(energy_ledger(&sim, &[sim.initial_state()]).is_err());
    }

    #[test]
    fn energy_ledger_zero_data() {
        let params = MaterialParams::default();
        let cfg = StepperConfig { record_states: true, ..Default::default() };
        let sim = Simulation::new(build_uniform_mesh(2).unwrap(), params, &ZeroProblem, cfg).unwrap();
        let r = sim.run(0.003).unwrap();
        let led = energy_ledger(&sim, &r.states).unwrap();
        assert!(led.j.iter().chain(&led.s).chain(&led.residual).all(|&v| v == 0.0));
    }

    #[test]
    fn energy_identity_holds() {
        let params = MaterialParams::default();
        let sol = ManufacturedSolution::new(params);
        let cfg = StepperConfig { record_states: true, ..Default::default() };
        let sim = Simulation::new(build_uniform_mesh(4).unwrap(), params, &sol, cfg).unwrap();
        let r = sim.run(0.005).unwrap();
        let led = energy_ledger(&sim, &r.states).unwrap();
        assert!(led.max_relative_residual() <= 1e-8, "{:?}", led.residual);
        assert!(led.increments.iter().all(|i| i.increments >= 0.0 && i.diffusion >= 0.0));
    }

    #[test]
    fn contraction_on_small_mesh() {
        let params = MaterialParams::default();
        let sol = ManufacturedSolution::new(params);
        let cfg = StepperConfig { algorithm: Algorithm::Decoupled, max_iters: 15, record_iterates: true, ..Default::default() };
        let sim = Simulation::new(build_uniform_mesh(4).unwrap(), params, &sol, cfg).unwrap();
        let mut state = sim.initial_state();
        let mut trace = IterationTrace::default();
        let mut refs = Vec::new();
        for n in 1..=3 {
            let loads = sim.loads(n as f64 * sim.cfg.dt).unwrap();
            refs.push(sim.coupled_step(&state, &loads).unwrap());
            let (s, st) = sim.decoupled_step(&state, &loads, n).unwrap();
            trace.steps.push(st);
            state = s;
        }
        let rep = contraction_report(&trace, &refs, &sim.forms.mass, 1e-12).unwrap();
        assert!(rep.is_monotone(), "{:?}", rep.steps);
        assert!(rep.max_ratio() <= 1.0 + CONTRACTION_SLACK);
        assert!(rep.steps.iter().all(|s| s.distances.last().unwrap() < &(1e-3 * s.distances[0])));
    }
}
