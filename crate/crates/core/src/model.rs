//! Material parameters and problem data.
//!
//! [`ManufacturedSolution`] is the smooth benchmark solution on the unit
//! square used by the convergence studies; its sources, tractions and initial
//! data are evaluated in closed form from analytic derivatives.

use std::f64::consts::PI;

use crate::{Error, Result};

pub type Mat2 = [[f64; 2]; 2];

pub fn scaled_identity(s: f64) -> Mat2 {
    [[s, 0.0], [0.0, s]]
}

/// Lamé parameters from Young's modulus and Poisson's ratio.
pub fn lame_from_young_poisson(e: f64, nu: f64) -> Result<(f64, f64)> {
    if !(e > 0.0) || !e.is_finite() {
        return Err(Error::InvalidArgument(format!("Young's modulus must be positive, got {e}")));
    }
    if !(nu > 0.0 && nu < 0.5) {
        return Err(Error::InvalidArgument(format!("Poisson ratio must lie in (0, 0.5), got {nu}")));
    }
    let lambda = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = e / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

/// Constant, dimensionless material coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParams {
    pub young: f64,
    pub poisson: f64,
    pub lambda: f64,
    pub mu: f64,
    /// Biot-Willis constant.
    pub alpha: f64,
    /// Thermal stress coefficient.
    pub beta: f64,
    /// Effective thermal capacity.
    pub a0: f64,
    /// Thermal dilation coefficient.
    pub b0: f64,
    /// Specific storage coefficient.
    pub c0: f64,
    /// Hydraulic conductivity.
    pub conductivity: Mat2,
    /// Thermal conductivity.
    pub thermal_conductivity: Mat2,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParamsBuilder::default().build().expect("default parameters are valid")
    }
}

/// Builder starting from the benchmark defaults:
/// `E = 1, nu = 0.3, alpha = beta = 0.1, a0 = c0 = 0.2, b0 = 0.1, K = Theta = 0.1 I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialParamsBuilder {
    pub young: f64,
    pub poisson: f64,
    pub alpha: f64,
    pub beta: f64,
    pub a0: f64,
    pub b0: f64,
    pub c0: f64,
    pub conductivity: Mat2,
    pub thermal_conductivity: Mat2,
}

impl Default for MaterialParamsBuilder {
    fn default() -> Self {
        Self {
            young: 1.0,
            poisson: 0.3,
            alpha: 0.1,
            beta: 0.1,
            a0: 0.2,
            b0: 0.1,
            c0: 0.2,
            conductivity: scaled_identity(0.1),
            thermal_conductivity: scaled_identity(0.1),
        }
    }
}

impl MaterialParamsBuilder {
    pub fn build(&self) -> Result<MaterialParams> {
        let (lambda, mu) = lame_from_young_poisson(self.young, self.poisson)?;
        let p = MaterialParams {
            young: self.young,
            poisson: self.poisson,
            lambda,
            mu,
            alpha: self.alpha,
            beta: self.beta,
            a0: self.a0,
            b0: self.b0,
            c0: self.c0,
            conductivity: self.conductivity,
            thermal_conductivity: self.thermal_conductivity,
        };
        p.validate()?;
        Ok(p)
    }
}

/// Symmetric positive definiteness via leading principal minors.
pub fn check_spd(m: &Mat2) -> bool {
    let symmetric = (m[0][1] - m[1][0]).abs() <= 1e-14 * (m[0][1].abs() + m[1][0].abs() + f64::MIN_POSITIVE);
    symmetric && m[0][0] > 0.0 && m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0
}

impl MaterialParams {
    pub fn builder() -> MaterialParamsBuilder {
        MaterialParamsBuilder::default()
    }

    /// Checks (A1) SPD conductivities, (A2) positive `lambda, mu, alpha, beta`
    /// and (A3) `a0, c0 >= b0 >= 0`.
    pub fn validate(&self) -> Result<()> {
        for (name, m) in [("K", &self.conductivity), ("Theta", &self.thermal_conductivity)] {
            if !check_spd(m) {
                return Err(Error::Assumption {
                    assumption: "A1",
                    detail: format!("{name} = {m:?} is not symmetric positive definite"),
                });
            }
        }
        for (name, v) in [("lambda", self.lambda), ("mu", self.mu), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Assumption {
                    assumption: "A2",
                    detail: format!("{name} = {v} must be strictly positive"),
                });
            }
        }
        if !(self.b0 >= 0.0 && self.a0 >= self.b0 && self.c0 >= self.b0) {
            return Err(Error::Assumption {
                assumption: "A3",
                detail: format!("need a0, c0 >= b0 >= 0, got a0={}, b0={}, c0={}", self.a0, self.b0, self.c0),
            });
        }
        Ok(())
    }

    /// `c0 + alpha^2 / lambda`, the pressure storage coefficient of the four-field system.
    pub fn pressure_storage(&self) -> f64 {
        self.c0 + self.alpha * self.alpha / self.lambda
    }

    /// `a0 + beta^2 / lambda`.
    pub fn thermal_storage(&self) -> f64 {
        self.a0 + self.beta * self.beta / self.lambda
    }

    /// `alpha beta / lambda - b0`.
    pub fn cross_storage(&self) -> f64 {
        self.alpha * self.beta / self.lambda - self.b0
    }
}

/// Value, gradient and Hessian of a scalar function at a point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: [f64; 2],
    pub hess: Mat2,
}

impl Jet {
    fn scale(self, s: f64) -> Jet {
        Jet {
            value: s * self.value,
            grad: [s * self.grad[0], s * self.grad[1]],
            hess: [[s * self.hess[0][0], s * self.hess[0][1]], [s * self.hess[1][0], s * self.hess[1][1]]],
        }
    }

    fn add(self, o: Jet) -> Jet {
        Jet {
            value: self.value + o.value,
            grad: [self.grad[0] + o.grad[0], self.grad[1] + o.grad[1]],
            hess: [
                [self.hess[0][0] + o.hess[0][0], self.hess[0][1] + o.hess[0][1]],
                [self.hess[1][0] + o.hess[1][0], self.hess[1][1] + o.hess[1][1]],
            ],
        }
    }

    /// Product of two univariate factors `f(x) g(y)` given value, first and
    /// second derivatives of each.
    fn separable(fx: [f64; 3], gy: [f64; 3]) -> Jet {
        Jet {
            value: fx[0] * gy[0],
            grad: [fx[1] * gy[0], fx[0] * gy[1]],
            hess: [[fx[2] * gy[0], fx[1] * gy[1]], [fx[1] * gy[1], fx[0] * gy[2]]],
        }
    }

    fn laplacian(&self) -> f64 {
        self.hess[0][0] + self.hess[1][1]
    }
}

fn contract(k: &Mat2, h: &Mat2) -> f64 {
    k[0][0] * h[0][0] + k[0][1] * h[0][1] + k[1][0] * h[1][0] + k[1][1] * h[1][1]
}

/// Exact fields, sources and tractions of a problem posed on the unit square.
///
/// Dirichlet data is homogeneous: `u = 0` on `x in {0,1}` and `p = T = 0` on
/// the whole boundary.
pub trait ProblemData: Sync {
    fn displacement(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    /// `grad[i][j] = d u_i / d x_j`.
    fn displacement_gradient(&self, x: f64, y: f64, t: f64) -> Mat2;
    fn pressure(&self, x: f64, y: f64, t: f64) -> f64;
    fn pressure_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    fn temperature(&self, x: f64, y: f64, t: f64) -> f64;
    fn temperature_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2];
    /// `xi = -lambda div u + alpha p + beta T`.
    fn pseudo_pressure(&self, x: f64, y: f64, t: f64) -> f64;
    /// `(f, g, Hs)`.
    fn sources(&self, x: f64, y: f64, t: f64) -> ([f64; 2], f64, f64);
    /// Traction datum on the Neumann sides `y in {0,1}`.
    fn traction(&self, x: f64, y: f64, t: f64, normal: [f64; 2]) -> Result<[f64; 2]>;
}

/// The smooth benchmark solution
///
/// ```text
/// u = e^-t ( sin(2 pi y)(cos(2 pi x) - 1) + s(x,y) / (mu + lambda),
///            sin(2 pi x)(1 - cos(2 pi y)) + s(x,y) / (mu + lambda) )
/// p = T = e^-t s(x,y),   s(x,y) = sin(pi x) sin(pi y)
/// ```
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub params: MaterialParams,
}

fn sin_jet(freq: f64, x: f64) -> [f64; 3] {
    let (s, c) = (freq * x).sin_cos();
    [s, freq * c, -freq * freq * s]
}

fn cos_jet(freq: f64, x: f64) -> [f64; 3] {
    let (s, c) = (freq * x).sin_cos();
    [c, -freq * s, -freq * freq * c]
}

fn shifted(j: [f64; 3], a: f64, b: f64) -> [f64; 3] {
    // a + b * j
    [a + b * j[0], b * j[1], b * j[2]]
}

impl ManufacturedSolution {
    pub fn new(params: MaterialParams) -> Self {
        Self { params }
    }

    /// Spatial parts (without the `e^-t` factor) of `u_1, u_2, p`; `T = p`.
    pub fn spatial_jets(&self, x: f64, y: f64) -> ([Jet; 2], Jet) {
        let c = 1.0 / (self.params.mu + self.params.lambda);
        let s = Jet::separable(sin_jet(PI, x), sin_jet(PI, y));
        let u1 = Jet::separable(shifted(cos_jet(2.0 * PI, x), -1.0, 1.0), sin_jet(2.0 * PI, y)).add(s.scale(c));
        let u2 = Jet::separable(sin_jet(2.0 * PI, x), shifted(cos_jet(2.0 * PI, y), 1.0, -1.0)).add(s.scale(c));
        ([u1, u2], s)
    }

    fn divergence_jet(u: &[Jet; 2]) -> (f64, [f64; 2]) {
        let div = u[0].grad[0] + u[1].grad[1];
        let grad_div = [u[0].hess[0][0] + u[1].hess[1][0], u[0].hess[0][1] + u[1].hess[1][1]];
        (div, grad_div)
    }

    pub fn divergence(&self, x: f64, y: f64, t: f64) -> f64 {
        let (u, _) = self.spatial_jets(x, y);
        (-t).exp() * Self::divergence_jet(&u).0
    }

    /// Traction in the three-field form `(2 mu eps(u) + lambda div u I - alpha p I - beta T I) n`.
    pub fn traction_three_field(&self, x: f64, y: f64, t: f64, n: [f64; 2]) -> [f64; 2] {
        let m = &self.params;
        let g = self.displacement_gradient(x, y, t);
        let div = g[0][0] + g[1][1];
        let iso = m.lambda * div - m.alpha * self.pressure(x, y, t) - m.beta * self.temperature(x, y, t);
        stress_times_normal(m.mu, &g, iso, n)
    }
}

fn stress_times_normal(mu: f64, g: &Mat2, iso: f64, n: [f64; 2]) -> [f64; 2] {
    let eps01 = 0.5 * (g[0][1] + g[1][0]);
    let s = [[2.0 * mu * g[0][0] + iso, 2.0 * mu * eps01], [2.0 * mu * eps01, 2.0 * mu * g[1][1] + iso]];
    [s[0][0] * n[0] + s[0][1] * n[1], s[1][0] * n[0] + s[1][1] * n[1]]
}

const BOUNDARY_EPS: f64 = 1e-12;

pub(crate) fn check_on_neumann(x: f64, y: f64) -> Result<()> {
    if (y.abs() <= BOUNDARY_EPS || (y - 1.0).abs() <= BOUNDARY_EPS) && (-BOUNDARY_EPS..=1.0 + BOUNDARY_EPS).contains(&x) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("({x}, {y}) is not on the Neumann boundary y = 0 or y = 1")))
    }
}

impl ProblemData for ManufacturedSolution {
    fn displacement(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (u, _) = self.spatial_jets(x, y);
        let e = (-t).exp();
        [e * u[0].value, e * u[1].value]
    }

    fn displacement_gradient(&self, x: f64, y: f64, t: f64) -> Mat2 {
        let (u, _) = self.spatial_jets(x, y);
        let e = (-t).exp();
        [[e * u[0].grad[0], e * u[0].grad[1]], [e * u[1].grad[0], e * u[1].grad[1]]]
    }

    fn pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        (-t).exp() * (PI * x).sin() * (PI * y).sin()
    }

    fn pressure_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        let (_, s) = self.spatial_jets(x, y);
        let e = (-t).exp();
        [e * s.grad[0], e * s.grad[1]]
    }

    fn temperature(&self, x: f64, y: f64, t: f64) -> f64 {
        self.pressure(x, y, t)
    }

    fn temperature_gradient(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        self.pressure_gradient(x, y, t)
    }

    fn pseudo_pressure(&self, x: f64, y: f64, t: f64) -> f64 {
        let m = &self.params;
        -m.lambda * self.divergence(x, y, t) + m.alpha * self.pressure(x, y, t) + m.beta * self.temperature(x, y, t)
    }

    fn sources(&self, x: f64, y: f64, t: f64) -> ([f64; 2], f64, f64) {
        let m = &self.params;
        let (u, s) = self.spatial_jets(x, y);
        let (div, grad_div) = Self::divergence_jet(&u);
        let e = (-t).exp();
        let mut f = [0.0; 2];
        for i in 0..2 {
            f[i] = e
                * (-m.mu * u[i].laplacian() - (m.mu + m.lambda) * grad_div[i] + (m.alpha + m.beta) * s.grad[i]);
        }
        // every field carries e^-t, so d/dt multiplies by -1
        let g = e * (-(m.c0 * s.value - m.b0 * s.value + m.alpha * div) - contract(&m.conductivity, &s.hess));
        let hs = e * (-(m.a0 * s.value - m.b0 * s.value + m.beta * div) - contract(&m.thermal_conductivity, &s.hess));
        (f, g, hs)
    }

    fn traction(&self, x: f64, y: f64, t: f64, normal: [f64; 2]) -> Result<[f64; 2]> {
        check_on_neumann(x, y)?;
        let g = self.displacement_gradient(x, y, t);
        Ok(stress_times_normal(self.params.mu, &g, -self.pseudo_pressure(x, y, t), normal))
    }
}

/// Identically zero data.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ZeroProblem;

impl ProblemData for ZeroProblem {
    fn displacement(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
        [0.0; 2]
    }
    fn displacement_gradient(&self, _: f64, _: f64, _: f64) -> Mat2 {
        [[0.0; 2]; 2]
    }
    fn pressure(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
    fn pressure_gradient(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
        [0.0; 2]
    }
    fn temperature(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
    fn temperature_gradient(&self, _: f64, _: f64, _: f64) -> [f64; 2] {
        [0.0; 2]
    }
    fn pseudo_pressure(&self, _: f64, _: f64, _: f64) -> f64 {
        0.0
    }
    fn sources(&self, _: f64, _: f64, _: f64) -> ([f64; 2], f64, f64) {
        ([0.0; 2], 0.0, 0.0)
    }
    fn traction(&self, x: f64, y: f64, _: f64, _: [f64; 2]) -> Result<[f64; 2]> {
        check_on_neumann(x, y)?;
        Ok([0.0; 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lame_reference_values() {
        let (l, m) = lame_from_young_poisson(1.0, 0.3).unwrap();
        assert!((l - 15.0 / 26.0).abs() < 1e-15);
        assert!((m - 5.0 / 13.0).abs() < 1e-15);
        let (l2, m2) = lame_from_young_poisson(2.0, 0.3).unwrap();
        assert!((l2 - 2.0 * l).abs() < 1e-15 && (m2 - 2.0 * m).abs() < 1e-15);
    }

    #[test]
    fn lame_near_incompressible() {
        let (l, m) = lame_from_young_poisson(1.0, 0.49999).unwrap();
        // long-hand: 0.49999 / (1.49999 * 0.00002)
        let expected = 0.49999 / (1.49999 * 2.0e-5);
        assert!((l - expected).abs() / expected < 1e-10);
        assert!((l - 16666.0).abs() < 1.0);
        assert!((m - 0.333336).abs() < 1e-6);
    }

    #[test]
    fn lame_rejects_bad_poisson() {
        for nu in [0.5, 0.6, 0.0, -0.1] {
            assert!(lame_from_young_poisson(1.0, nu).is_err());
        }
    }

    #[test]
    fn assumption_checks() {
        let mut b = MaterialParams::builder();
        b.conductivity = [[0.1, 0.0], [0.0, -0.1]];
        assert!(matches!(b.build(), Err(Error::Assumption { assumption: "A1", .. })));
        let mut b = MaterialParams::builder();
        b.alpha = 0.0;
        assert!(matches!(b.build(), Err(Error::Assumption { assumption: "A2", .. })));
        let mut b = MaterialParams::builder();
        b.b0 = 0.3;
        assert!(matches!(b.build(), Err(Error::Assumption { assumption: "A3", .. })));
        let mut b = MaterialParams::builder();
        b.a0 = 0.0;
        b.b0 = 0.0;
        b.c0 = 0.0;
        assert!(b.build().is_ok());
    }

    #[test]
    fn exact_field_values() {
        let sol = ManufacturedSolution::new(MaterialParams::default());
        assert!((sol.pressure(0.5, 0.5, 0.0) - 1.0).abs() < 1e-15);
        for y in [0.0, 0.3, 0.77, 1.0] {
            for t in [0.0, 0.01, 1.0] {
                for x in [0.0, 1.0] {
                    let u = sol.displacement(x, y, t);
                    assert!(u[0].abs() < 1e-15 && u[1].abs() < 1e-15);
                }
            }
        }
        for s in [0.0, 0.4, 1.0] {
            for (x, y) in [(s, 0.0), (s, 1.0), (0.0, s), (1.0, s)] {
                assert!(sol.pressure(x, y, 0.3).abs() < 1e-15);
                assert!(sol.temperature(x, y, 0.3).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn xi_definition_identity() {
        let m = MaterialParams::default();
        let sol = ManufacturedSolution::new(m);
        let mut seed = 7u64;
        let mut rnd = || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (seed >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let (x, y, t) = (rnd(), rnd(), rnd());
            let g = sol.displacement_gradient(x, y, t);
            let r = sol.pseudo_pressure(x, y, t) + m.lambda * (g[0][0] + g[1][1])
                - m.alpha * sol.pressure(x, y, t)
                - m.beta * sol.temperature(x, y, t);
            assert!(r.abs() < 1e-14);
        }
    }

    #[test]
    fn traction_bottom_side_shear() {
        let m = MaterialParams::default();
        let sol = ManufacturedSolution::new(m);
        for (x, t) in [(0.2, 0.0), (0.71, 0.005)] {
            let g = sol.traction(x, 0.0, t, [0.0, -1.0]).unwrap();
            let expected = -m.mu
                * (2.0 * PI * ((2.0 * PI * x).cos() - 1.0) + PI / (m.mu + m.lambda) * (PI * x).sin())
                * (-t).exp();
            assert!((g[0] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn traction_forms_agree_and_off_boundary_errors() {
        let sol = ManufacturedSolution::new(MaterialParams::default());
        for k in 0..100 {
            let x = k as f64 / 99.0;
            let (y, n) = if k % 2 == 0 { (0.0, [0.0, -1.0]) } else { (1.0, [0.0, 1.0]) };
            let a = sol.traction(x, y, 0.01, n).unwrap();
            let b = sol.traction_three_field(x, y, 0.01, n);
            assert!((a[0] - b[0]).abs() < 1e-13 && (a[1] - b[1]).abs() < 1e-13);
        }
        assert!(sol.traction(0.5, 0.5, 0.0, [0.0, 1.0]).is_err());
        assert_eq!(ZeroProblem.traction(0.3, 1.0, 0.0, [0.0, 1.0]).unwrap(), [0.0; 2]);
    }

    #[test]
    fn sources_separable_in_time() {
        let sol = ManufacturedSolution::new(MaterialParams::default());
        let (f0, g0, h0) = sol.sources(0.3, 0.6, 0.0);
        let (f1, g1, h1) = sol.sources(0.3, 0.6, 0.25);
        let e = (-0.25f64).exp();
        assert!((f1[0] - e * f0[0]).abs() < 1e-13);
        assert!((f1[1] - e * f0[1]).abs() < 1e-13);
        assert!((g1 - e * g0).abs() < 1e-14);
        assert!((h1 - e * h0).abs() < 1e-14);
    }
}
