//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use thermoporo::diagnostics::ErrorRecord;
use thermoporo::harness::{reference_rows, run_preset, ConvergenceReport};
use thermoporo::model::{ManufacturedSolution, MaterialParams, MaterialParamsBuilder, ProblemData};
use thermoporo::verify::{assembly_dense_gap, contraction_run, coupled_step_dense_gap, energy_run, fixed_point_gap};
use thermoporo::Result;

const COLUMNS: [&str; 4] = ["u", "xi", "p", "T"];
const U_XI_WINDOW: (f64, f64) = (1.90, 2.10);
const P_T_WINDOW: (f64, f64) = (0.95, 1.10);
const REL_TOL: f64 = 0.10;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(failures: Vec<String>, ok_detail: String) -> Outcome {
    if failures.is_empty() {
        Outcome { passed: true, detail: ok_detail }
    } else {
        Outcome { passed: false, detail: failures.join("; ") }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn finest(report: &ConvergenceReport) -> &ErrorRecord {
    report.records.last().expect("report has rows")
}

fn at(report: &ConvergenceReport, n: usize) -> &ErrorRecord {
    report.records.iter().find(|r| r.n == n).expect("mesh present in report")
}

/// Order windows at the finest pair of `report`.
fn check_windows(report: &ConvergenceReport, failures: &mut Vec<String>) {
    let o = finest(report).orders;
    for (k, &ord) in o.iter().enumerate() {
        let (lo, hi) = if k < 2 { U_XI_WINDOW } else { P_T_WINDOW };
        if !(lo..=hi).contains(&ord) {
            failures.push(format!("{} order_{} = {ord:.3} outside [{lo}, {hi}]", report.preset, COLUMNS[k]));
        }
    }
}

/// Every error column on every mesh within `REL_TOL` of the reference rows.
fn check_reference(report: &ConvergenceReport, failures: &mut Vec<String>) -> f64 {
    let rows = reference_rows(&report.preset).expect("reference rows for preset");
    let mut worst: f64 = 0.0;
    for rec in &report.records {
        let Some(row) = rows.iter().find(|r| r.n == rec.n) else {
            failures.push(format!("{} has no reference row for n={}", report.preset, rec.n));
            continue;
        };
        for (k, (&got, &want)) in rec.errors.as_array().iter().zip(&row.errors).enumerate() {
            let r = rel(got, want);
            worst = worst.max(r);
            if r > REL_TOL {
                failures.push(format!(
                    "{} n={} err_{} {got:.5e} vs {want:.5e} ({:.1}%)",
                    report.preset,
                    rec.n,
                    COLUMNS[k],
                    100.0 * r
                ));
            }
        }
    }
    worst
}

fn orders_text(report: &ConvergenceReport) -> String {
    let o = finest(report).orders;
    format!("{} orders {:.2}/{:.2}/{:.2}/{:.2}", report.preset, o[0], o[1], o[2], o[3])
}

/// Reference values and order windows on the default meshes.
fn table_blocks(names: &[&str]) -> Result<Outcome> {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for name in names {
        let rep = run_preset(name, false, false)?;
        let worst = check_reference(&rep, &mut failures);
        check_windows(&rep, &mut failures);
        notes.push(format!("{} (max rel dev {:.1}%)", orders_text(&rep), 100.0 * worst));
    }
    Ok(outcome(failures, notes.join(", ")))
}

/// Order windows at the finest available pair (with the 1/128 mesh), plus one
/// pinned value at h = 1/16.
fn robustness(names: &[&str], pinned: (&str, usize, f64)) -> Result<Outcome> {
    let (pin_name, pin_col, pin_value) = pinned;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for name in names {
        let rep = run_preset(name, true, false)?;
        check_windows(&rep, &mut failures);
        notes.push(orders_text(&rep));
        if *name == pin_name {
            let got = at(&rep, 16).errors.as_array()[pin_col];
            let r = rel(got, pin_value);
            notes.push(format!("{name} err_{} at 1/16 {got:.5e} ({:.1}%)", COLUMNS[pin_col], 100.0 * r));
            if r > REL_TOL {
                failures.push(format!("{name} err_{} at 1/16 {got:.5e} vs {pin_value:.5e}", COLUMNS[pin_col]));
            }
        }
    }
    Ok(outcome(failures, notes.join(", ")))
}

fn degenerate_storage() -> Result<Outcome> {
    let five = run_preset("table7-alg2-5", true, false)?;
    let ten = run_preset("table7-alg2-10", true, false)?;
    let (o5, o10) = (finest(&five).orders, finest(&ten).orders);
    let mut failures = Vec::new();
    if !(1.90..=2.10).contains(&o10[0]) {
        failures.push(format!("iters=10 order_u {:.3}", o10[0]));
    }
    if !(1.90..=2.20).contains(&o10[1]) {
        failures.push(format!("iters=10 order_xi {:.3}", o10[1]));
    }
    // "measurably lower": a gap well above the digits printed in the tables
    if o10[1] - o5[1] < 0.05 {
        failures.push(format!("order_xi iters=5 {:.3} not below iters=10 {:.3}", o5[1], o10[1]));
    }
    Ok(outcome(
        failures,
        format!(
            "n={} order_u {:.2}, order_xi iters=10 {:.2} vs iters=5 {:.2}",
            finest(&ten).n,
            o10[0],
            o10[1],
            o5[1]
        ),
    ))
}

fn degenerate_params() -> Result<MaterialParams> {
    MaterialParamsBuilder { a0: 0.0, b0: 0.0, c0: 0.0, ..Default::default() }.build()
}

fn fixed_point() -> Result<Outcome> {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (label, p) in [("defaults", MaterialParams::default()), ("a0=b0=c0=0", degenerate_params()?)] {
        let (gaps, iters) = fixed_point_gap(&p, 4, 1e-3, 1e-12, 200)?;
        let worst = gaps.iter().copied().fold(0.0, f64::max);
        notes.push(format!("{label}: {worst:.2e} after {iters} iterations"));
        if worst > 1e-8 {
            failures.push(format!("{label}: L2 gap {worst:.3e}"));
        }
    }
    Ok(outcome(failures, notes.join(", ")))
}

fn contraction() -> Result<Outcome> {
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    let incompressible = MaterialParamsBuilder { poisson: 0.49999, ..Default::default() }.build()?;
    for (label, p) in [("nu=0.3", MaterialParams::default()), ("nu=0.49999", incompressible)] {
        let rep = contraction_run(&p, 4, 1e-3, 10, 30)?;
        notes.push(format!("{label}: max ratio {:.4}", rep.max_ratio()));
        if !rep.is_monotone() || rep.steps.len() != 10 {
            failures.push(format!("{label}: max ratio {:.6}", rep.max_ratio()));
        }
    }
    Ok(outcome(failures, notes.join(", ")))
}

fn energy() -> Result<Outcome> {
    let led = energy_run(&MaterialParams::default(), 4, 1e-3, 10, 1e-10)?;
    let r = led.max_relative_residual();
    Ok(outcome(
        if r <= 1e-8 { vec![] } else { vec![format!("relative residual {r:.3e}")] },
        format!("relative residual {r:.2e}"),
    ))
}

fn dense_oracles() -> Result<Outcome> {
    let mut failures = Vec::new();
    let step = coupled_step_dense_gap(2)?;
    if step > 1e-10 {
        failures.push(format!("coupled step gap {step:.3e}"));
    }
    let mut asm: f64 = 0.0;
    for n in [1, 2] {
        asm = asm.max(assembly_dense_gap(n, &MaterialParams::default())?);
    }
    if asm > 1e-13 {
        failures.push(format!("assembly gap {asm:.3e}"));
    }
    Ok(outcome(failures, format!("coupled step gap {step:.2e}, assembly gap {asm:.2e}")))
}

const FD_STEP: f64 = 1e-4;

fn d1(f: impl Fn(f64) -> f64, s: f64) -> f64 {
    let h = FD_STEP;
    (-f(s + 2.0 * h) + 8.0 * f(s + h) - 8.0 * f(s - h) + f(s - 2.0 * h)) / (12.0 * h)
}

fn d2(f: impl Fn(f64) -> f64, s: f64) -> f64 {
    let h = FD_STEP;
    (-f(s + 2.0 * h) + 16.0 * f(s + h) - 30.0 * f(s) + 16.0 * f(s - h) - f(s - 2.0 * h)) / (12.0 * h * h)
}

/// Second derivatives `[[d_xx, d_xy], [d_xy, d_yy]]` of a scalar field.
fn hessian(f: &impl Fn(f64, f64) -> f64, x: f64, y: f64) -> [[f64; 2]; 2] {
    let xx = d2(|s| f(s, y), x);
    let yy = d2(|s| f(x, s), y);
    let xy = d1(|s| d1(|r| f(s, r), y), x);
    [[xx, xy], [xy, yy]]
}

/// Max absolute residual of the sources against finite differences of the
/// exact fields at one point.
fn pde_residual(sol: &ManufacturedSolution, x: f64, y: f64, t: f64) -> f64 {
    let p = &sol.params;
    let u = |i: usize| move |x: f64, y: f64| sol.displacement(x, y, t)[i];
    // hu[i][j][k] = d_j d_k u_i
    let hu = [hessian(&u(0), x, y), hessian(&u(1), x, y)];
    let grad = |f: &dyn Fn(f64, f64) -> f64| [d1(|s| f(s, y), x), d1(|s| f(x, s), y)];
    let gp = grad(&|x, y| sol.pressure(x, y, t));
    let gt = grad(&|x, y| sol.temperature(x, y, t));
    let mut f_fd = [0.0; 2];
    for i in 0..2 {
        let lap = hu[i][0][0] + hu[i][1][1];
        let grad_div = hu[0][i][0] + hu[1][i][1];
        f_fd[i] = -p.mu * lap - (p.mu + p.lambda) * grad_div + p.alpha * gp[i] + p.beta * gt[i];
    }
    let div = |x: f64, y: f64, t: f64| {
        d1(|s| sol.displacement(s, y, t)[0], x) + d1(|s| sol.displacement(x, s, t)[1], y)
    };
    let dt_div = d1(|s| div(x, y, s), t);
    let dt_p = d1(|s| sol.pressure(x, y, s), t);
    let dt_t = d1(|s| sol.temperature(x, y, s), t);
    let contract = |k: &[[f64; 2]; 2], h: &[[f64; 2]; 2]| {
        k[0][0] * h[0][0] + k[0][1] * h[0][1] + k[1][0] * h[1][0] + k[1][1] * h[1][1]
    };
    let hp = hessian(&|x, y| sol.pressure(x, y, t), x, y);
    let ht = hessian(&|x, y| sol.temperature(x, y, t), x, y);
    let g_fd = p.c0 * dt_p - p.b0 * dt_t + p.alpha * dt_div - contract(&p.conductivity, &hp);
    let h_fd = p.a0 * dt_t - p.b0 * dt_p + p.beta * dt_div - contract(&p.thermal_conductivity, &ht);
    let (f, g, hs) = sol.sources(x, y, t);
    [f[0] - f_fd[0], f[1] - f_fd[1], g - g_fd, hs - h_fd].iter().map(|r| r.abs()).fold(0.0, f64::max)
}

fn source_consistency() -> Result<Outcome> {
    let anisotropic = MaterialParamsBuilder {
        conductivity: [[0.3, 0.1], [0.1, 0.2]],
        thermal_conductivity: [[0.15, -0.05], [-0.05, 0.25]],
        ..Default::default()
    }
    .build()?;
    let mut failures = Vec::new();
    let mut notes = Vec::new();
    for (label, params) in [("defaults", MaterialParams::default()), ("anisotropic K, Theta", anisotropic)] {
        let sol = ManufacturedSolution::new(params);
        let mut rng = StdRng::seed_from_u64(20);
        let worst = (0..1000)
            .map(|_| {
                let (x, y, t) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
                pde_residual(&sol, x, y, t)
            })
            .fold(0.0, f64::max);
        notes.push(format!("{label}: max residual {worst:.2e}"));
        if worst > 1e-6 {
            failures.push(format!("{label}: residual {worst:.3e}"));
        }
    }
    Ok(outcome(failures, notes.join(", ")))
}

fn large_tau() -> Result<Outcome> {
    let a = run_preset("table6-alg1-dt1e-2", false, false)?;
    let b = run_preset("table6-alg2-10-dt1e-2", false, false)?;
    let mut failures = Vec::new();
    let mut worst: f64 = 0.0;
    for (ra, rb) in a.records.iter().zip(&b.records) {
        for (k, (x, y)) in ra.errors.as_array().iter().zip(rb.errors.as_array()).enumerate() {
            let r = rel(*x, y);
            worst = worst.max(r);
            if r > 5e-4 {
                failures.push(format!("n={} err_{}: {x:.5e} vs {y:.5e}", ra.n, COLUMNS[k]));
            }
        }
    }
    if a.records.len() != 4 || a.records.len() != b.records.len() {
        failures.push(format!("expected meshes 8..64, got {} and {} rows", a.records.len(), b.records.len()));
    }
    Ok(outcome(failures, format!("max relative difference {worst:.2e} over meshes 1/8..1/64")))
}

fn main() -> ExitCode {
    let criteria: Vec<(&str, Box<dyn Fn() -> Result<Outcome>>)> = vec![
        ("coupled reference values, nu=0.3", Box::new(|| table_blocks(&["table1-alg1"]))),
        ("decoupled reference values", Box::new(|| table_blocks(&["table1-alg2-5", "table1-alg2-10"]))),
        (
            "locking robustness, nu=0.49999",
            Box::new(|| robustness(&["table2-alg1", "table2-alg2-5", "table2-alg2-10"], ("table2-alg1", 0, 9.99038e-02))),
        ),
        (
            "small conductivity robustness",
            Box::new(|| {
                let names = [
                    "table3-alg1",
                    "table3-alg2-5",
                    "table3-alg2-10",
                    "table4-alg1",
                    "table4-alg2-5",
                    "table4-alg2-10",
                    "table5-alg1",
                    "table5-alg2-5",
                    "table5-alg2-10",
                ];
                robustness(&names, ("table3-alg1", 2, 2.48018e-01))
            }),
        ),
        ("degenerate storage", Box::new(degenerate_storage)),
        ("decoupled -> coupled fixed point", Box::new(fixed_point)),
        ("contraction monotone", Box::new(contraction)),
        ("discrete energy identity", Box::new(energy)),
        ("dense oracle equivalence", Box::new(dense_oracles)),
        ("manufactured source consistency", Box::new(source_consistency)),
        ("large final time, coupled vs decoupled", Box::new(large_tau)),
    ];
    let mut all_passed = true;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = run().unwrap_or_else(|e| Outcome { passed: false, detail: format!("error: {e}") });
        all_passed &= out.passed;
        println!(
            "{} {:>2} {name}: {} [{:.1} s]",
            if out.passed { "PASS" } else { "FAIL" },
            i + 1,
            out.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if all_passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
