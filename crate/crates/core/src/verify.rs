//! Self-checks on small meshes: dense oracles, the coupled/decoupled fixed
//! point, contraction of the iteration, and the discrete energy balance.

use nalgebra::{DMatrix, DVector};

use crate::basis::{element_map, quadrature_rule, shape_p1, shape_p2};
use crate::diagnostics::{
    contraction_report, energy_ledger, field_l2_norms, state_difference, ContractionReport, EnergyLedger,
};
use crate::mesh::{build_dof_maps, build_uniform_mesh, DofMap};
use crate::model::{ManufacturedSolution, MaterialParams, MaterialParamsBuilder};
use crate::sparse::SparseMatrix;
use crate::steppers::{Algorithm, FieldState, IterationTrace, Simulation, StepperConfig};
use crate::{Error, Result};

/// Contraction ratios are not checked once `d_{i-1}` drops below this
/// multiple of `||xi_ref||`.
pub const CONTRACTION_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn dense(m: &SparseMatrix) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.triplets() {
        d[(i, j)] += v;
    }
    d
}

/// Max-norm gap between one sparse coupled step and a dense LU solve of the
/// same assembled system.
pub fn coupled_step_dense_gap(n: usize) -> Result<f64> {
    let params = MaterialParams::default();
    let sol = ManufacturedSolution::new(params);
    let sim = Simulation::new(build_uniform_mesh(n)?, params, &sol, StepperConfig::default())?;
    let s0 = sim.initial_state();
    let loads = sim.loads(sim.cfg.dt)?;
    let s1 = sim.coupled_step(&s0, &loads)?;
    let a = dense(&sim.coupled_matrix()?);
    let b = DVector::from_vec(sim.coupled_rhs(&s0, &loads));
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SolverFailure { reason: "dense oracle singular".into(), residual: f64::NAN })?;
    Ok(max_abs_diff(&s1.stacked(), x.as_slice()))
}

/// Dense reassembly of every form by an independent element computation
/// (strain-displacement matrices and a degree-4 rule). Returns the largest
/// entrywise gap.
pub fn assembly_dense_gap(n: usize, params: &MaterialParams) -> Result<f64> {
    let mesh = build_uniform_mesh(n)?;
    let dofs = build_dof_maps(&mesh);
    let forms = crate::assembly::assemble_forms(&mesh, &dofs, params)?;
    let (nu, np) = (dofs.num_u(), dofs.num_p1());
    let mut a = DMatrix::zeros(nu, nu);
    let mut b = DMatrix::zeros(nu, np);
    let mut m = DMatrix::zeros(np, np);
    let mut kp = DMatrix::zeros(np, np);
    let mut kt = DMatrix::zeros(np, np);
    let rule = quadrature_rule(4)?;
    let mu = params.mu;
    for tri in 0..mesh.num_triangles() {
        let map = element_map(mesh.triangle_coords(tri))?;
        let cell = &dofs.p2_cells[tri];
        let pcell = &dofs.p1_cells[tri];
        for (q, w) in rule.iter() {
            let wq = w * map.det;
            let (_, dphi) = shape_p2(q);
            let (psi, dpsi) = shape_p1(q);
            // engineering strain rows (e11, e22, gamma12) per vector dof
            let mut bm = DMatrix::<f64>::zeros(3, 12);
            for k in 0..6 {
                let g = map.grad(dphi[k]);
                bm[(0, 2 * k)] = g[0];
                bm[(1, 2 * k + 1)] = g[1];
                bm[(2, 2 * k)] = g[1];
                bm[(2, 2 * k + 1)] = g[0];
            }
            let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0 * mu, 2.0 * mu, mu]));
            let ke = bm.transpose() * d * &bm * wq;
            let ids: Vec<usize> = (0..12).map(|i| DofMap::vector_dof(cell[i / 2], i % 2)).collect();
            for i in 0..12 {
                for j in 0..12 {
                    a[(ids[i], ids[j])] += ke[(i, j)];
                }
                let div = bm[(0, i)] + bm[(1, i)];
                for j in 0..3 {
                    b[(ids[i], pcell[j])] += wq * div * psi[j];
                }
            }
            for i in 0..3 {
                let gi = map.grad(dpsi[i]);
                for j in 0..3 {
                    let gj = map.grad(dpsi[j]);
                    m[(pcell[i], pcell[j])] += wq * psi[i] * psi[j];
                    let flux = |k: &[[f64; 2]; 2]| {
                        gi[0] * (k[0][0] * gj[0] + k[0][1] * gj[1]) + gi[1] * (k[1][0] * gj[0] + k[1][1] * gj[1])
                    };
                    kp[(pcell[i], pcell[j])] += wq * flux(&params.conductivity);
                    kt[(pcell[i], pcell[j])] += wq * flux(&params.thermal_conductivity);
                }
            }
        }
    }
    let gap = |s: &SparseMatrix, d: &DMatrix<f64>| (dense(s) - d).abs().max();
    Ok([
        gap(&forms.elasticity, &a),
        gap(&forms.div_coupling, &b),
        gap(&forms.mass, &m),
        gap(&forms.diffusion_p, &kp),
        gap(&forms.diffusion_t, &kt),
    ]
    .into_iter()
    .fold(0.0, f64::max))
}

/// Per-field L2 gaps `(u, xi, p, T)` between one decoupled step iterated to
/// `iter_tol` and the coupled step from the same state.
pub fn fixed_point_gap(params: &MaterialParams, n: usize, dt: f64, iter_tol: f64, max_iters: usize) -> Result<([f64; 4], usize)> {
    let sol = ManufacturedSolution::new(*params);
    let cfg = StepperConfig { dt, algorithm: Algorithm::Decoupled, iter_tol, max_iters, ..Default::default() };
    let sim = Simulation::new(build_uniform_mesh(n)?, *params, &sol, cfg)?;
    let s0 = sim.initial_state();
    let loads = sim.loads(dt)?;
    let c = sim.coupled_step(&s0, &loads)?;
    let (d, trace) = sim.decoupled_step(&s0, &loads, 1)?;
    Ok((field_l2_norms(&state_difference(&d, &c), &sim.mesh, &sim.dofs)?, trace.iterations))
}

/// Distances of decoupled iterates to a coupled solve from the same previous
/// state, over `steps` decoupled steps.
pub fn contraction_run(params: &MaterialParams, n: usize, dt: f64, steps: usize, max_iters: usize) -> Result<ContractionReport> {
    let sol = ManufacturedSolution::new(*params);
    let cfg = StepperConfig { dt, algorithm: Algorithm::Decoupled, max_iters, record_iterates: true, ..Default::default() };
    let sim = Simulation::new(build_uniform_mesh(n)?, *params, &sol, cfg)?;
    let mut state = sim.initial_state();
    let mut trace = IterationTrace::default();
    let mut refs: Vec<FieldState> = Vec::new();
    for k in 1..=steps {
        let loads = sim.loads(k as f64 * dt)?;
        refs.push(sim.coupled_step(&state, &loads)?);
        let (next, st) = sim.decoupled_step(&state, &loads, k)?;
        trace.steps.push(st);
        state = next;
    }
    contraction_report(&trace, &refs, &sim.forms.mass, CONTRACTION_FLOOR_REL)
}

/// Energy balance of a coupled trajectory with `steps` steps.
pub fn energy_run(params: &MaterialParams, n: usize, dt: f64, steps: usize, solver_tol: f64) -> Result<EnergyLedger> {
    let sol = ManufacturedSolution::new(*params);
    let cfg = StepperConfig { dt, record_states: true, solver_tol, ..Default::default() };
    let sim = Simulation::new(build_uniform_mesh(n)?, *params, &sol, cfg)?;
    let r = sim.run(steps as f64 * dt)?;
    energy_ledger(&sim, &r.states)
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check { name: name.into(), passed, detail }
}

/// All checks with their pass/fail state.
pub fn run_all() -> Result<Vec<Check>> {
    let defaults = MaterialParams::default();
    let degenerate = MaterialParamsBuilder { a0: 0.0, b0: 0.0, c0: 0.0, ..Default::default() }.build()?;
    let incompressible = MaterialParamsBuilder { poisson: 0.49999, ..Default::default() }.build()?;
    let mut out = Vec::new();

    let g = coupled_step_dense_gap(2)?;
    out.push(check("coupled step vs dense LU (n=2)", g <= 1e-10, format!("max gap {g:.3e}")));
    for n in [1, 2] {
        let g = assembly_dense_gap(n, &defaults)?;
        out.push(check(&format!("assembly vs dense reassembly (n={n})"), g <= 1e-13, format!("max gap {g:.3e}")));
    }
    for (label, p) in [("defaults", &defaults), ("a0=b0=c0=0", &degenerate)] {
        let (gaps, iters) = fixed_point_gap(p, 4, 1e-3, 1e-12, 200)?;
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        out.push(check(
            &format!("decoupled -> coupled, {label}"),
            worst <= 1e-8,
            format!("max L2 gap {worst:.3e} after {iters} iterations"),
        ));
    }
    for (label, p) in [("nu=0.3", &defaults), ("nu=0.49999", &incompressible)] {
        let rep = contraction_run(p, 4, 1e-3, 10, 30)?;
        out.push(check(
            &format!("contraction monotone, {label}"),
            rep.is_monotone(),
            format!("max ratio {:.6}", rep.max_ratio()),
        ));
    }
    let led = energy_run(&defaults, 4, 1e-3, 10, 1e-10)?;
    let r = led.max_relative_residual();
    out.push(check("energy identity (n=4, 10 steps)", r <= 1e-8, format!("relative residual {r:.3e}")));
    Ok(out)
}
