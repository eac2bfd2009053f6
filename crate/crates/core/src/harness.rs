//! Run configuration, the table presets, convergence studies and report output.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::diagnostics::{convergence_orders, error_norms, ErrorNorms, ErrorRecord};
use crate::mesh::build_uniform_mesh;
use crate::model::{scaled_identity, ManufacturedSolution, Mat2, MaterialParams, MaterialParamsBuilder};
use crate::steppers::{Algorithm, Simulation, StepperConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "markdown" | "md" => Ok(OutputFormat::Markdown),
            other => Err(Error::Config(format!("unknown output format '{other}' (csv or markdown)"))),
        }
    }
}

/// Everything needed to run one convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub young: f64,
    pub poisson: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub conductivity: Mat2,
    pub thermal_conductivity: Mat2,
    pub tau: f64,
    pub dt: f64,
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub iter_tol: f64,
    pub mesh_sizes: Vec<usize>,
    pub format: OutputFormat,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let b = MaterialParamsBuilder::default();
        Self {
            young: b.young,
            poisson: b.poisson,
            alpha: b.alpha,
            beta: b.beta,
            a0: b.a0,
            b0: b.b0,
            c0: b.c0,
            conductivity: b.conductivity,
            thermal_conductivity: b.thermal_conductivity,
            tau: 0.01,
            dt: 1e-3,
            algorithm: Algorithm::Coupled,
            max_iters: 10,
            iter_tol: 0.0,
            mesh_sizes: vec![16, 32, 64],
            format: OutputFormat::Csv,
            out: None,
        }
    }
}

pub const CONFIG_KEYS: &[&str] = &[
    "E", "nu", "alpha", "beta", "a0", "b0", "c0", "K", "Theta", "tau", "dt", "algorithm", "max_iters", "iter_tol",
    "meshes", "format", "out",
];

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.trim().parse::<f64>().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}' as a number")))
}

/// A scalar `s` means `s I`; four comma-separated values are `k11, k12, k21, k22`.
fn parse_tensor(key: &str, v: &str) -> Result<Mat2> {
    let parts: Vec<f64> = v.split(',').map(|s| parse_f64(key, s)).collect::<Result<_>>()?;
    match parts.as_slice() {
        [s] => Ok(scaled_identity(*s)),
        [a, b, c, d] => Ok([[*a, *b], [*c, *d]]),
        _ => Err(Error::Config(format!("{key}: expected 1 or 4 values, got {}", parts.len()))),
    }
}

fn format_tensor(m: &Mat2) -> String {
    if m[0][1] == 0.0 && m[1][0] == 0.0 && m[0][0] == m[1][1] {
        format!("{}", m[0][0])
    } else {
        format!("{},{},{},{}", m[0][0], m[0][1], m[1][0], m[1][1])
    }
}

impl RunConfig {
    /// Sets one `key = value` pair.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "E" => self.young = parse_f64(key, v)?,
            "nu" => self.poisson = parse_f64(key, v)?,
            "alpha" => self.alpha = parse_f64(key, v)?,
            "beta" => self.beta = parse_f64(key, v)?,
            "a0" => self.a0 = parse_f64(key, v)?,
            "b0" => self.b0 = parse_f64(key, v)?,
            "c0" => self.c0 = parse_f64(key, v)?,
            "K" => self.conductivity = parse_tensor(key, v)?,
            "Theta" => self.thermal_conductivity = parse_tensor(key, v)?,
            "tau" => self.tau = parse_f64(key, v)?,
            "dt" => self.dt = parse_f64(key, v)?,
            "algorithm" => {
                self.algorithm = match v {
                    "coupled" | "alg1" => Algorithm::Coupled,
                    "decoupled" | "alg2" => Algorithm::Decoupled,
                    _ => return Err(Error::Config(format!("algorithm: expected coupled or decoupled, got '{v}'"))),
                }
            }
            "max_iters" => {
                self.max_iters = v.parse().map_err(|_| Error::Config(format!("max_iters: bad integer '{v}'")))?
            }
            "iter_tol" => self.iter_tol = parse_f64(key, v)?,
            "meshes" => {
                self.mesh_sizes = v
                    .split(',')
                    .map(|s| s.trim().parse::<usize>().map_err(|_| Error::Config(format!("meshes: bad entry '{s}'"))))
                    .collect::<Result<_>>()?
            }
            "format" => self.format = v.parse()?,
            "out" => self.out = Some(PathBuf::from(v)),
            other => {
                return Err(Error::Config(format!("unknown key '{other}'; known keys: {}", CONFIG_KEYS.join(", "))))
            }
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got '{line}'", lineno + 1)))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Result<MaterialParams> {
        MaterialParamsBuilder {
            young: self.young,
            poisson: self.poisson,
            alpha: self.alpha,
            beta: self.beta,
            a0: self.a0,
            b0: self.b0,
            c0: self.c0,
            conductivity: self.conductivity,
            thermal_conductivity: self.thermal_conductivity,
        }
        .build()
    }

    pub fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            algorithm: self.algorithm,
            max_iters: self.max_iters,
            iter_tol: self.iter_tol,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params()?;
        self.stepper().validate()?;
        crate::steppers::step_count(self.tau, self.dt)?;
        let first = *self.mesh_sizes.first().ok_or_else(|| Error::Config("meshes must not be empty".into()))?;
        if first == 0 {
            return Err(Error::Config("mesh sizes must be positive".into()));
        }
        for w in self.mesh_sizes.windows(2) {
            if w[1] <= w[0] || w[1] % first != 0 || !(w[1] / first).is_power_of_two() {
                return Err(Error::Config(format!(
                    "mesh sizes must increase by powers of two from {first}, got {:?}",
                    self.mesh_sizes
                )));
            }
        }
        Ok(())
    }

    /// The configuration as parseable `key = value` lines.
    pub fn echo(&self) -> String {
        let meshes: Vec<String> = self.mesh_sizes.iter().map(|n| n.to_string()).collect();
        let mut s = String::new();
        for (k, v) in [
            ("E", self.young.to_string()),
            ("nu", self.poisson.to_string()),
            ("alpha", self.alpha.to_string()),
            ("beta", self.beta.to_string()),
            ("a0", self.a0.to_string()),
            ("b0", self.b0.to_string()),
            ("c0", self.c0.to_string()),
            ("K", format_tensor(&self.conductivity)),
            ("Theta", format_tensor(&self.thermal_conductivity)),
            ("tau", self.tau.to_string()),
            ("dt", self.dt.to_string()),
            ("algorithm", self.algorithm.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("iter_tol", self.iter_tol.to_string()),
            ("meshes", meshes.join(",")),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Parses configuration text over the defaults and validates the result.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    cfg.apply_text(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// A named experiment from one block of the reference tables.
#[derive(Debug, Clone, PartialEq)]
pub struct Preset {
    pub name: String,
    pub caption: String,
    pub config: RunConfig,
    /// Extra mesh run only with `--full`.
    pub full_mesh: Option<usize>,
}

fn table_variants() -> Vec<(&'static str, &'static str, Vec<(&'static str, &'static str)>)> {
    vec![
        ("table1", "nu = 0.3", vec![]),
        ("table2", "nu = 0.49999", vec![("nu", "0.49999")]),
        ("table3", "K = 1e-6 I", vec![("K", "1e-6")]),
        ("table4", "Theta = 1e-6 I", vec![("Theta", "1e-6")]),
        ("table5", "K = 1e-6 I, Theta = 1e-6 I", vec![("K", "1e-6"), ("Theta", "1e-6")]),
        ("table7", "a0 = b0 = c0 = 0", vec![("a0", "0"), ("b0", "0"), ("c0", "0")]),
    ]
}

const ALGORITHM_BLOCKS: [(&str, &str, &str, usize); 3] =
    [("alg1", "coupled", "1e-3", 10), ("alg2-5", "decoupled", "5e-3", 5), ("alg2-10", "decoupled", "1e-2", 10)];

/// All presets, in table order.
pub fn presets() -> Vec<Preset> {
    let mut out = Vec::new();
    for (table, caption, overrides) in table_variants() {
        for (suffix, alg, dt, iters) in ALGORITHM_BLOCKS {
            let mut config = RunConfig::default();
            for (k, v) in &overrides {
                config.set(k, v).expect("preset keys are valid");
            }
            config.set("algorithm", alg).expect("valid");
            config.set("dt", dt).expect("valid");
            config.max_iters = iters;
            let iters_note = if alg == "coupled" { String::new() } else { format!(", iters = {iters}") };
            out.push(Preset {
                name: format!("{table}-{suffix}"),
                caption: format!("{caption}; {alg}, dt = {dt}{iters_note}; tau = 0.01"),
                config,
                full_mesh: Some(128),
            });
        }
    }
    for dt in ["1e-2", "5e-3", "1e-3"] {
        for (suffix, alg, _, iters) in ALGORITHM_BLOCKS {
            let mut config = RunConfig::default();
            config.set("tau", "1").expect("valid");
            config.set("dt", dt).expect("valid");
            config.set("algorithm", alg).expect("valid");
            config.set("meshes", "8,16,32,64").expect("valid");
            config.max_iters = iters;
            let iters_note = if alg == "coupled" { String::new() } else { format!(", iters = {iters}") };
            out.push(Preset {
                name: format!("table6-{suffix}-dt{dt}"),
                caption: format!("nu = 0.3; {alg}, dt = {dt}{iters_note}; tau = 1"),
                config,
                full_mesh: None,
            });
        }
    }
    out
}

pub fn preset_names() -> Vec<String> {
    presets().into_iter().map(|p| p.name).collect()
}

pub fn find_preset(name: &str) -> Result<Preset> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| Error::UnknownPreset { name: name.to_string(), available: preset_names().join(", ") })
}

/// One published row: `n` and the four error columns.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub n: usize,
    pub errors: [f64; 4],
    pub cpu_seconds: Option<f64>,
}

const REFERENCE_TABLES: &str = include_str!("reference_tables.txt");

/// Published errors for a preset, if any.
pub fn reference_rows(preset: &str) -> Option<Vec<ReferenceRow>> {
    let mut rows = Vec::new();
    let mut inside = false;
    for line in REFERENCE_TABLES.lines() {
        let line = line.trim();
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            if inside {
                break;
            }
            inside = name == preset;
            continue;
        }
        if inside {
            let cols: Vec<&str> = line.split_whitespace().collect();
            let num = |i: usize| cols[i].parse::<f64>().expect("reference table is well formed");
            rows.push(ReferenceRow {
                n: cols[0].parse().expect("reference table is well formed"),
                errors: [num(1), num(2), num(3), num(4)],
                cpu_seconds: cols.get(5).map(|_| num(5)),
            });
        }
    }
    inside.then_some(rows)
}

/// Result of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub preset: String,
    pub records: Vec<ErrorRecord>,
    pub config: RunConfig,
    pub wall_seconds: f64,
}

/// Runs the manufactured-solution problem on one mesh and returns its errors
/// at `tau` and the wall time of the time loop.
pub fn run_single(config: &RunConfig, n: usize) -> Result<ErrorRecord> {
    let params = config.params()?;
    let sol = ManufacturedSolution::new(params);
    let sim = Simulation::new(build_uniform_mesh(n)?, params, &sol, config.stepper())?;
    let result = sim.run(config.tau)?;
    let errors: ErrorNorms = error_norms(&result.final_state, &sol, &sim.mesh, &sim.dofs)?;
    Ok(ErrorRecord::new(n, errors, result.timings.time_loop.as_secs_f64()))
}

/// Runs every mesh of `config`; meshes run concurrently unless `serial`.
pub fn run_config(name: &str, config: &RunConfig, serial: bool) -> Result<ConvergenceReport> {
    config.validate()?;
    let start = Instant::now();
    let mut records: Vec<ErrorRecord> = if serial {
        config.mesh_sizes.iter().map(|&n| run_single(config, n)).collect::<Result<_>>()?
    } else {
        config.mesh_sizes.par_iter().map(|&n| run_single(config, n)).collect::<Result<_>>()?
    };
    convergence_orders(&mut records)?;
    Ok(ConvergenceReport {
        preset: name.to_string(),
        records,
        config: config.clone(),
        wall_seconds: start.elapsed().as_secs_f64(),
    })
}

pub fn run_preset(name: &str, full: bool, serial: bool) -> Result<ConvergenceReport> {
    let preset = find_preset(name)?;
    let mut config = preset.config.clone();
    if full {
        config.mesh_sizes.extend(preset.full_mesh);
    }
    run_config(&preset.name, &config, serial)
}

pub const CSV_HEADER: &str =
    "h, err_u_H1, order_u, err_xi_L2, order_xi, err_p_H1, order_p, err_T_H1, order_T, cpu_seconds";

/// `1.00607e-01`: five significant digits, signed two-digit exponent.
pub fn format_sci(v: f64) -> String {
    let s = format!("{v:.5e}");
    match s.split_once('e') {
        Some((mantissa, exp)) => {
            let e: i32 = exp.parse().expect("rust exponent is an integer");
            let sign = if e < 0 { '-' } else { '+' };
            format!("{mantissa}e{sign}{:02}", e.abs())
        }
        None => s,
    }
}

fn row_cells(r: &ErrorRecord) -> Vec<String> {
    let e = r.errors.as_array();
    let mut cells = vec![format!("1/{}", r.n)];
    for i in 0..4 {
        cells.push(format_sci(e[i]));
        cells.push(format!("{:.2}", r.orders[i]));
    }
    cells.push(format!("{:.2}", r.cpu_seconds));
    cells
}

pub fn emit_report(report: &ConvergenceReport, format: OutputFormat) -> String {
    let mut s = String::new();
    match format {
        OutputFormat::Csv => {
            s.push_str(CSV_HEADER);
            s.push('\n');
            for r in &report.records {
                s.push_str(&row_cells(r).join(", "));
                s.push('\n');
            }
        }
        OutputFormat::Markdown => {
            let header: Vec<&str> = CSV_HEADER.split(", ").collect();
            let _ = writeln!(s, "| {} |", header.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(header.len()));
            for r in &report.records {
                let _ = writeln!(s, "| {} |", row_cells(r).join(" | "));
            }
        }
    }
    s
}

/// Reads the numeric cells back from either output format.
pub fn parse_report_table(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.trim().trim_matches('|').trim())
        .filter(|l| l.starts_with("1/"))
        .map(|l| l.split([',', '|']).map(|c| c.trim().to_string()).collect())
        .collect()
}

pub fn write_report(text: &str, path: &Path) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}
