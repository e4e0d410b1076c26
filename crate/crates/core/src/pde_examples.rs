//! Two second-order PDEs with a double characteristic root, solved both through
//! the generic operator machinery and through their explicit formulas.
//!
//! * `u_tt + a₁ u_tx + a₂ u_xx = f` on a periodic interval, where the generator
//!   is `z₁ d/dx` and its group translates profiles by `z₁ t`.
//! * `u_tt + b₁ Δu_t + b₂ Δ²u = f` on `(0, π)` with Dirichlet conditions, in the
//!   sine basis `w_k = √(2/π) sin(kx)`, `Δ w_k = −k² w_k`.
//!
//! The spatial setting of the translation case is a periodic grid on which
//! band-limited shifts are exact; it stands in for the whole line.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::equation::{FactoredEquation, Forcing};
use crate::error::{Error, Result};
use crate::operators::{Boundary, Grid1d, Operator};
use crate::solver::{richardson, solve_full, FullSolution, SolutionTrace, QUADRATURE_TOLERANCE};
use crate::statespace::{DenseMatrix, QuadratureRule, StateVector};

/// Relative discriminant threshold below which the two roots are treated as one.
pub const DOUBLE_ROOT_TOLERANCE: f64 = 1e-12;

/// Roots of `z² + c₁ z + c₂`, larger real part first, and whether they coincide.
pub fn characteristic_roots(c1: f64, c2: f64) -> (Complex64, Complex64, bool) {
    let disc = c1 * c1 - 4.0 * c2;
    if disc.abs() <= DOUBLE_ROOT_TOLERANCE * (c1 * c1).max(1.0) {
        let z = Complex64::new(-0.5 * c1, 0.0);
        return (z, z, true);
    }
    if disc > 0.0 {
        let s = disc.sqrt();
        // avoid cancellation in the root of smaller magnitude
        let (z1, z2) = if c1 <= 0.0 {
            let z1 = 0.5 * (-c1 + s);
            (z1, c2 / z1)
        } else {
            let z2 = 0.5 * (-c1 - s);
            (c2 / z2, z2)
        };
        (Complex64::new(z1, 0.0), Complex64::new(z2, 0.0), false)
    } else {
        let re = -0.5 * c1;
        let im = 0.5 * (-disc).sqrt();
        (Complex64::new(re, im), Complex64::new(re, -im), false)
    }
}

fn double_root(c1: f64, c2: f64) -> Result<f64> {
    let (z1, z2, double) = characteristic_roots(c1, c2);
    if double {
        Ok(z1.re)
    } else {
        Err(Error::NotDoubleRoot {
            z1: z1.to_string(),
            z2: z2.to_string(),
        })
    }
}

fn one() -> f64 {
    1.0
}

/// Named initial profile `φ(x)` with its derivative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Profile {
    Zero,
    /// `amplitude · sin(wavenumber · x + phase)`
    Sin {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amplitude · exp(−(x − center)² / (2 width²))`
    Gaussian {
        #[serde(default = "one")]
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `Σ cₖ xᵏ`
    Polynomial { coefficients: Vec<f64> },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Sin {
                amplitude,
                wavenumber,
                phase,
            } => amplitude * (wavenumber * x + phase).sin(),
            Profile::Gaussian {
                amplitude,
                center,
                width,
            } => amplitude * (-(x - center).powi(2) / (2.0 * width * width)).exp(),
            Profile::Polynomial { coefficients } => coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::Sin {
                amplitude,
                wavenumber,
                phase,
            } => amplitude * wavenumber * (wavenumber * x + phase).cos(),
            Profile::Gaussian { center, width, .. } => -(x - center) / (width * width) * self.eval(x),
            Profile::Polynomial { coefficients } => coefficients
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c),
        }
    }

    pub fn sample(&self, grid: &Grid1d) -> StateVector {
        StateVector::from_fn(grid.points, |i| self.eval(grid.x(i)))
    }

    pub fn validate(&self) -> Result<()> {
        if let Profile::Gaussian { width, .. } = self {
            if !(*width > 0.0) {
                return Err(Error::InvalidInput("gaussian width must be positive".into()));
            }
        }
        Ok(())
    }
}

/// `f(t, x)` sampled pointwise.
pub type SpaceTimeForcing = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// `u_tt + a₁ u_tx + a₂ u_xx = f`, `u(0) = φ₁`, `u_t(0) = φ₂` on a periodic grid.
#[derive(Clone)]
pub struct Example1Problem {
    pub a1: f64,
    pub a2: f64,
    pub grid: Grid1d,
    pub phi1: Profile,
    pub phi2: Profile,
    pub forcing: Option<SpaceTimeForcing>,
}

impl fmt::Debug for Example1Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Example1Problem")
            .field("a1", &self.a1)
            .field("a2", &self.a2)
            .field("grid", &self.grid)
            .field("phi1", &self.phi1)
            .field("phi2", &self.phi2)
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

impl Example1Problem {
    pub fn new(a1: f64, a2: f64, grid: Grid1d, phi1: Profile, phi2: Profile) -> Self {
        Self {
            a1,
            a2,
            grid,
            phi1,
            phi2,
            forcing: None,
        }
    }

    pub fn with_forcing(mut self, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    pub fn roots(&self) -> (Complex64, Complex64, bool) {
        characteristic_roots(self.a1, self.a2)
    }

    /// The double root `z₁`, or `NotDoubleRoot` for distinct roots (those are
    /// handled by building a two-factor equation directly).
    pub fn double_root(&self) -> Result<f64> {
        double_root(self.a1, self.a2)
    }

    /// `z₁ d/dx` as a periodic translation generator.
    pub fn generator(&self) -> Result<Operator> {
        Operator::translation("z1A", self.double_root()?, self.grid, Boundary::Periodic)
    }

    pub fn equation(&self) -> Result<FactoredEquation> {
        self.phi1.validate()?;
        self.phi2.validate()?;
        let a = self.generator()?;
        let eq = FactoredEquation::new(
            vec![a.clone(), a],
            vec![self.phi1.sample(&self.grid), self.phi2.sample(&self.grid)],
        )?;
        Ok(match &self.forcing {
            Some(f) => {
                let f = Arc::clone(f);
                let grid = self.grid;
                eq.with_forcing(Forcing::new(move |t| StateVector::from_fn(grid.points, |i| f(t, grid.x(i)))))
            }
            None => eq,
        })
    }

    fn wrap(&self, x: f64) -> f64 {
        self.grid.x0 + (x - self.grid.x0).rem_euclid(self.grid.length())
    }

    /// `φ₁(ξ) + tφ₂(ξ) − z₁tφ₁′(ξ) + ∫₀ᵗ (t−s) f(s, z₁(t−s)+x) ds`, `ξ = x + z₁t`,
    /// with positions wrapped into the periodic cell.
    pub fn closed_form(&self, t: f64, rule: QuadratureRule) -> Result<StateVector> {
        let z1 = self.double_root()?;
        let xs = self.grid.coordinates();
        let mut u = StateVector::from_fn(xs.len(), |i| {
            let xi = self.wrap(xs[i] + z1 * t);
            self.phi1.eval(xi) + t * self.phi2.eval(xi) - z1 * t * self.phi1.derivative(xi)
        });
        if let (Some(f), true) = (&self.forcing, t > 0.0) {
            let forced = richardson(t, QUADRATURE_TOLERANCE, &rule, |r| {
                let mut acc = StateVector::zeros(xs.len());
                for (s, w) in r.nodes(0.0, t) {
                    let tau = t - s;
                    for (i, &x) in xs.iter().enumerate() {
                        acc[i] += w * tau * f(s, self.wrap(x + z1 * tau));
                    }
                }
                Ok(acc)
            })?;
            u.axpy(1.0, &forced);
        }
        Ok(u)
    }
}

#[derive(Debug, Clone)]
pub struct Example1Solution {
    /// The operator solution on the translation backend.
    pub generic: SolutionTrace,
    /// The explicit formula sampled on the same grid.
    pub closed_form: SolutionTrace,
    /// Largest pointwise difference over all samples, relative to `max(1, ‖u‖∞)`.
    pub max_deviation: f64,
}

fn max_deviation(a: &SolutionTrace, b: &SolutionTrace) -> Result<f64> {
    let scale = a.max_norm().max(b.max_norm()).max(1.0);
    Ok(a.absolute_deviation(b)?.into_iter().fold(0.0, f64::max) / scale)
}

pub fn solve_example1(p: &Example1Problem, t_grid: &[f64], rule: QuadratureRule) -> Result<Example1Solution> {
    let generic = solve_full(&p.equation()?, t_grid, rule)?;
    let values = t_grid
        .iter()
        .map(|&t| p.closed_form(t, rule))
        .collect::<Result<Vec<_>>>()?;
    let closed_form = SolutionTrace::new(t_grid.to_vec(), values)?;
    let max_deviation = max_deviation(&generic, &closed_form)?;
    Ok(Example1Solution {
        generic,
        closed_form,
        max_deviation,
    })
}

/// `‖u_tt + a₁u_tx + a₂u_xx − f‖∞ / max(1, ‖u‖∞)` at time `t ≥ h` for the
/// generic solution, with central differences of step `h` in time and spectral
/// derivatives in space.
pub fn example1_pde_residual(p: &Example1Problem, t: f64, h: f64, rule: QuadratureRule) -> Result<f64> {
    if !(h > 0.0) || t < h {
        return Err(Error::InvalidInput("residual needs 0 < h <= t".into()));
    }
    let sol = FullSolution::new(&p.equation()?, rule)?;
    let dx = Operator::translation("d/dx", 1.0, p.grid, Boundary::Periodic)?;
    let (um, u0, up) = (sol.eval(t - h)?, sol.eval(t)?, sol.eval(t + h)?);
    let u_tt = (&(&up - &u0.scaled(2.0)) + &um).scaled(1.0 / (h * h));
    let u_t = (&up - &um).scaled(0.5 / h);
    let u_tx = dx.apply(&u_t)?;
    let u_xx = dx.apply_power(2, &u0)?;
    let mut res = u_tt;
    res.axpy(p.a1, &u_tx);
    res.axpy(p.a2, &u_xx);
    if let Some(f) = &p.forcing {
        for i in 0..p.grid.points {
            res[i] -= f(t, p.grid.x(i));
        }
    }
    Ok(res.norm_inf() / u0.norm_inf().max(1.0))
}

/// `λ_k = −k²`, `k ≥ 1`, for the Dirichlet Laplacian on `(0, π)`.
pub fn eigenvalue(k: usize) -> f64 {
    -((k * k) as f64)
}

/// `w_k(x) = √(2/π) sin(kx)`.
pub fn eigenfunction(k: usize, x: f64) -> f64 {
    (2.0 / PI).sqrt() * (k as f64 * x).sin()
}

/// `Σ_k c_k w_{k+1}(x)`.
pub fn synthesize(coefficients: &[f64], x: f64) -> f64 {
    coefficients
        .iter()
        .enumerate()
        .map(|(k, c)| c * eigenfunction(k + 1, x))
        .sum()
}

/// `β_k = ∫₀^π g w_k dx` for `k = 1..=modes`.
pub fn project(g: impl Fn(f64) -> f64, modes: usize, rule: QuadratureRule) -> Vec<f64> {
    let nodes = rule.nodes(0.0, PI);
    (1..=modes)
        .map(|k| nodes.iter().map(|&(x, w)| w * g(x) * eigenfunction(k, x)).sum())
        .collect()
}

/// Gram matrix of `w_1..w_modes` under the trapezoid rule on `intervals` equal
/// subintervals of `[0, π]`; this is the identity when `modes < intervals`.
pub fn discrete_gram(modes: usize, intervals: usize) -> DenseMatrix {
    let h = PI / intervals as f64;
    let mut g = DenseMatrix::zeros(modes, modes);
    for j in 0..modes {
        for k in 0..modes {
            // endpoint terms vanish, so the trapezoid rule is a plain sum
            g[(j, k)] = (1..intervals)
                .map(|i| {
                    let x = i as f64 * h;
                    h * eigenfunction(j + 1, x) * eigenfunction(k + 1, x)
                })
                .sum();
        }
    }
    g
}

/// Mode coefficients `β_{k, f(t,·)}` of the forcing.
pub type ModalForcing = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// `u_tt + b₁Δu_t + b₂Δ²u = f` on `(0, π)`, `u = 0` on the boundary, in mode
/// coordinates: `psi1`, `psi2` and the forcing hold sine coefficients.
#[derive(Clone)]
pub struct Example2Problem {
    pub b1: f64,
    pub b2: f64,
    pub psi1: Vec<f64>,
    pub psi2: Vec<f64>,
    pub forcing: Option<ModalForcing>,
}

impl fmt::Debug for Example2Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Example2Problem")
            .field("b1", &self.b1)
            .field("b2", &self.b2)
            .field("psi1", &self.psi1)
            .field("psi2", &self.psi2)
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

impl Example2Problem {
    pub fn new(b1: f64, b2: f64, psi1: Vec<f64>, psi2: Vec<f64>) -> Result<Self> {
        if psi1.is_empty() || psi1.len() != psi2.len() {
            return Err(Error::InvalidInput(
                "psi1 and psi2 need the same positive number of modes".into(),
            ));
        }
        Ok(Self {
            b1,
            b2,
            psi1,
            psi2,
            forcing: None,
        })
    }

    pub fn with_forcing(mut self, f: impl Fn(f64) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.forcing = Some(Arc::new(f));
        self
    }

    pub fn modes(&self) -> usize {
        self.psi1.len()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (1..=self.modes()).map(eigenvalue).collect()
    }

    pub fn double_root(&self) -> Result<f64> {
        double_root(self.b1, self.b2)
    }

    /// `α̃₁ Δ` in the sine basis.
    pub fn generator(&self) -> Result<Operator> {
        Operator::spectral("alpha1*Delta", self.eigenvalues(), self.double_root()?)
    }

    pub fn equation(&self) -> Result<FactoredEquation> {
        let s = self.generator()?;
        let eq = FactoredEquation::new(
            vec![s.clone(), s],
            vec![StateVector::from(self.psi1.clone()), StateVector::from(self.psi2.clone())],
        )?;
        Ok(match &self.forcing {
            Some(f) => {
                let f = Arc::clone(f);
                eq.with_forcing(Forcing::new(move |t| StateVector::from(f(t))))
            }
            None => eq,
        })
    }

    fn forcing_at(&self, t: f64) -> Result<Option<StateVector>> {
        self.forcing
            .as_ref()
            .map(|f| {
                let v = StateVector::from(f(t));
                v.expect_dim(self.modes()).map(|_| v)
            })
            .transpose()
    }

    /// Integrals `∫₀ᵗ p(t−s) e^{r_k(t−s)} f_k(s) ds` for the three weights
    /// `p ∈ {τ, 1 + r_kτ, 2r_k + r_k²τ}` stacked mode-major.
    fn forced_integrals(&self, t: f64, rule: QuadratureRule, derivatives: bool) -> Result<[StateVector; 3]> {
        let k = self.modes();
        let width = if derivatives { 3 } else { 1 };
        let rates: Vec<f64> = self.generator()?.modal_rates().expect("spectral generator");
        let stacked = richardson(t, QUADRATURE_TOLERANCE, &rule, |r| {
            let mut acc = StateVector::zeros(width * k);
            for (s, w) in r.nodes(0.0, t) {
                let f = self.forcing_at(s)?.expect("forcing present");
                let tau = t - s;
                for m in 0..k {
                    let e = (rates[m] * tau).exp() * f[m] * w;
                    acc[m] += tau * e;
                    if derivatives {
                        acc[k + m] += (1.0 + rates[m] * tau) * e;
                        acc[2 * k + m] += (2.0 * rates[m] + rates[m] * rates[m] * tau) * e;
                    }
                }
            }
            Ok(acc)
        })?;
        let part = |j: usize| {
            if j < width {
                StateVector::from(&stacked.as_slice()[j * k..(j + 1) * k])
            } else {
                StateVector::zeros(k)
            }
        };
        Ok([part(0), part(1), part(2)])
    }

    /// Mode coefficients from the explicit formula
    /// `[β_{Ψ₁} + t β_{Ψ₂ − α̃₁ΔΨ₁}] e^{λα̃₁t} + ∫₀ᵗ (t−s) β_{f(s)} e^{λα̃₁(t−s)} ds`.
    pub fn modal_closed_form(&self, t: f64, rule: QuadratureRule) -> Result<StateVector> {
        let rates = self.generator()?.modal_rates().expect("spectral generator");
        let mut c = StateVector::from_fn(self.modes(), |m| {
            let b = self.psi2[m] - rates[m] * self.psi1[m];
            (self.psi1[m] + t * b) * (rates[m] * t).exp()
        });
        if self.forcing.is_some() && t > 0.0 {
            c.axpy(1.0, &self.forced_integrals(t, rule, false)?[0]);
        }
        Ok(c)
    }

    /// Largest modal residual of `c'' + b₁λc' + b₂λ²c − f` at `t`, relative to
    /// the size of the terms, using exact derivatives of the explicit formula.
    pub fn modal_residual(&self, t: f64, rule: QuadratureRule) -> Result<f64> {
        let rates = self.generator()?.modal_rates().expect("spectral generator");
        let lambda = self.eigenvalues();
        let k = self.modes();
        let mut c = vec![[0.0; 3]; k];
        for m in 0..k {
            let r = rates[m];
            let a = self.psi1[m];
            let b = self.psi2[m] - r * a;
            let e = (r * t).exp();
            c[m] = [
                (a + b * t) * e,
                (b + r * (a + b * t)) * e,
                (2.0 * r * b + r * r * (a + b * t)) * e,
            ];
        }
        if let Some(f_t) = self.forcing_at(t)? {
            let [w0, w1, w2] = if t > 0.0 {
                self.forced_integrals(t, rule, true)?
            } else {
                [StateVector::zeros(k), StateVector::zeros(k), StateVector::zeros(k)]
            };
            for m in 0..k {
                c[m][0] += w0[m];
                c[m][1] += w1[m];
                c[m][2] += w2[m] + f_t[m];
            }
        }
        let f_t = self.forcing_at(t)?;
        let mut worst = 0.0f64;
        for m in 0..k {
            let terms = [c[m][2], self.b1 * lambda[m] * c[m][1], self.b2 * lambda[m] * lambda[m] * c[m][0]];
            let forcing = f_t.as_ref().map_or(0.0, |f| f[m]);
            let residual = terms.iter().sum::<f64>() - forcing;
            let scale = terms.iter().map(|x| x.abs()).sum::<f64>().max(forcing.abs()).max(1.0);
            worst = worst.max(residual.abs() / scale);
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone)]
pub struct Example2Solution {
    /// Mode coefficients from the explicit formula.
    pub modal: SolutionTrace,
    /// Mode coefficients from the generic spectral path.
    pub generic: SolutionTrace,
    /// Largest coefficient difference relative to `max(1, ‖c‖∞)`.
    pub max_deviation: f64,
}

pub fn solve_example2(p: &Example2Problem, t_grid: &[f64], rule: QuadratureRule) -> Result<Example2Solution> {
    let generic = solve_full(&p.equation()?, t_grid, rule)?;
    let values = t_grid
        .iter()
        .map(|&t| p.modal_closed_form(t, rule))
        .collect::<Result<Vec<_>>>()?;
    let modal = SolutionTrace::new(t_grid.to_vec(), values)?;
    let max_deviation = max_deviation(&generic, &modal)?;
    Ok(Example2Solution {
        modal,
        generic,
        max_deviation,
    })
}

/// Evaluates a modal trace at the spatial points `xs`.
pub fn spatial_trace(modal: &SolutionTrace, xs: &[f64]) -> Result<SolutionTrace> {
    let values = modal
        .values
        .iter()
        .map(|c| StateVector::from_fn(xs.len(), |i| synthesize(c.as_slice(), xs[i])))
        .collect();
    SolutionTrace::new(modal.times.clone(), values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn root_examples() {
        let (z1, z2, d) = characteristic_roots(-2.0, 1.0);
        assert!(d && z1 == Complex64::new(1.0, 0.0) && z2 == z1);
        let (z1, z2, d) = characteristic_roots(0.0, -1.0);
        assert!(!d && z1 == Complex64::new(1.0, 0.0) && z2 == Complex64::new(-1.0, 0.0));
        let (z1, z2, d) = characteristic_roots(0.0, 1.0);
        assert!(!d && z1 == Complex64::new(0.0, 1.0) && z2 == Complex64::new(0.0, -1.0));
        let (z1, z2, d) = characteristic_roots(3.0, 2.0);
        assert!(!d && z1 == Complex64::new(-1.0, 0.0) && z2 == Complex64::new(-2.0, 0.0));
    }

    #[test]
    fn small_root_has_full_precision() {
        let (z1, z2, _) = characteristic_roots(-1e8, 1.0);
        assert!((z2.re - 1e-8).abs() < 1e-22);
        assert!((z1.re - 1e8).abs() < 1e-6);
    }

    #[test]
    fn profiles_and_derivatives() {
        let profiles = [
            Profile::Sin { amplitude: 2.0, wavenumber: 3.0, phase: 0.1 },
            Profile::Gaussian { amplitude: 1.5, center: 0.3, width: 0.7 },
            Profile::Polynomial { coefficients: vec![1.0, -2.0, 0.5, 0.25] },
            Profile::Zero,
        ];
        for p in &profiles {
            for &x in &[-0.8, 0.0, 0.4, 1.7] {
                let h = 1e-5;
                let fd = (p.eval(x + h) - p.eval(x - h)) / (2.0 * h);
                assert!((fd - p.derivative(x)).abs() < 1e-8, "{p:?} at {x}");
            }
        }
        assert_eq!(profiles[2].eval(2.0), 1.0 - 4.0 + 2.0 + 2.0);
        assert!(Profile::Gaussian { amplitude: 1.0, center: 0.0, width: 0.0 }.validate().is_err());
    }

    #[test]
    fn profile_config_shape() {
        let p: Profile = toml::from_str("kind = \"sin\"").unwrap();
        assert_eq!(p, Profile::Sin { amplitude: 1.0, wavenumber: 1.0, phase: 0.0 });
        assert!(toml::from_str::<Profile>("kind = \"square\"").is_err());
    }

    #[test]
    fn distinct_roots_are_rejected() {
        let p = Example1Problem::new(0.0, -1.0, Grid1d::periodic(0.0, 2.0 * PI, 16), Profile::Zero, Profile::Zero);
        assert!(matches!(p.generator(), Err(Error::NotDoubleRoot { .. })));
        let q = Example2Problem::new(0.0, 1.0, vec![1.0], vec![0.0]).unwrap();
        assert!(matches!(q.equation(), Err(Error::NotDoubleRoot { .. })));
    }

    #[test]
    fn example1_initial_time_is_phi1() {
        let grid = Grid1d::periodic(0.0, 2.0 * PI, 64);
        let p = Example1Problem::new(-2.0, 1.0, grid, Profile::Sin { amplitude: 1.0, wavenumber: 1.0, phase: 0.0 }, Profile::Zero);
        let s = solve_example1(&p, &[0.0], QuadratureRule::default()).unwrap();
        let phi = p.phi1.sample(&grid);
        assert_eq!(s.generic.values[0], phi);
        assert_eq!(s.closed_form.values[0], phi);
    }

    #[test]
    fn example1_constant_forcing() {
        let grid = Grid1d::periodic(0.0, 2.0 * PI, 32);
        let p = Example1Problem::new(-2.0, 1.0, grid, Profile::Zero, Profile::Zero).with_forcing(|_, _| 1.0);
        let s = solve_example1(&p, &[0.5, 1.0], QuadratureRule::default()).unwrap();
        for (t, (g, c)) in s.generic.times.iter().zip(s.generic.values.iter().zip(&s.closed_form.values)) {
            for i in 0..grid.points {
                assert!((g[i] - t * t / 2.0).abs() < 1e-12);
                assert!((c[i] - t * t / 2.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gram_is_identity() {
        let g = discrete_gram(6, 64);
        let err = g.sub(&DenseMatrix::identity(6)).unwrap().norm_inf();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn projection_recovers_modes() {
        let beta = project(|x| synthesize(&[0.0, 2.0, -1.0], x), 4, QuadratureRule::default());
        let expected = [0.0, 2.0, -1.0, 0.0];
        for (b, e) in beta.iter().zip(expected) {
            assert!((b - e).abs() < 1e-12);
        }
    }

    #[test]
    fn example2_zero_data_is_zero() {
        let p = Example2Problem::new(2.0, 1.0, vec![0.0; 3], vec![0.0; 3]).unwrap();
        let s = solve_example2(&p, &[0.0, 0.5], QuadratureRule::default()).unwrap();
        assert!(s.modal.values.iter().chain(&s.generic.values).all(StateVector::is_zero));
    }

    #[test]
    fn example2_forced_residual() {
        let p = Example2Problem::new(2.0, 1.0, vec![0.3, 0.0], vec![0.0, 0.1])
            .unwrap()
            .with_forcing(|t| vec![t.cos(), 1.0 + t]);
        for t in [0.0, 0.3, 0.9] {
            assert!(p.modal_residual(t, QuadratureRule::default()).unwrap() < 1e-9);
        }
        let s = solve_example2(&p, &[0.0, 0.4, 0.8], QuadratureRule::default()).unwrap();
        assert!(s.max_deviation < 1e-9, "{}", s.max_deviation);
    }
}
