//! Generator backends and their semigroups.
//!
//! Three families are supported: dense matrices (`e^{tA}` by [`expm_apply`] or an
//! orthogonal eigen-decomposition), spectral-diagonal generators acting on modal
//! coefficients, and the translation group `(T(t)f)(x) = f(x + z t)` on a uniform
//! 1-D grid. An equation may only combine operators of one family.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{expm_apply, DenseMatrix, StateVector, SymmetricDecomposition, PIVOT_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Family {
    Dense,
    Spectral,
    Translation,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Dense => "dense",
            Family::Spectral => "spectral",
            Family::Translation => "translation",
        })
    }
}

#[derive(Debug, Clone)]
pub struct DenseMatrixOp {
    matrix: DenseMatrix,
    symmetric: Option<SymmetricDecomposition>,
}

impl DenseMatrixOp {
    pub fn new(matrix: DenseMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::DimensionMismatch {
                expected: matrix.rows(),
                found: matrix.cols(),
            });
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite("generator matrix".into()));
        }
        let symmetric = (matrix.is_symmetric(0.0) && !matrix.is_diagonal())
            .then(|| SymmetricDecomposition::new(&matrix));
        Ok(Self { matrix, symmetric })
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.matrix
    }
}

/// Diagonal generator in a modal basis: mode `k` evolves with rate `scale · λ_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralDiagonalOp {
    eigenvalues: Vec<f64>,
    scale: f64,
}

impl SpectralDiagonalOp {
    pub fn new(eigenvalues: Vec<f64>, scale: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::InvalidInput("spectral operator needs at least one mode".into()));
        }
        if !scale.is_finite() || eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(Error::NonFinite("spectral eigenvalues".into()));
        }
        Ok(Self { eigenvalues, scale })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `scale · λ_k` for every mode.
    pub fn rates(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|l| self.scale * l).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1d {
    pub x0: f64,
    pub dx: f64,
    pub points: usize,
}

impl Grid1d {
    /// `points` nodes covering `[x0, x0 + length)`.
    pub fn periodic(x0: f64, length: f64, points: usize) -> Self {
        Self {
            x0,
            dx: length / points as f64,
            points,
        }
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn coordinates(&self) -> Vec<f64> {
        (0..self.points).map(|i| self.x(i)).collect()
    }

    pub fn length(&self) -> f64 {
        self.dx * self.points as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Band-limited shifts and spectral derivatives.
    Periodic,
    /// Cubic interpolation with zero data outside the grid; accurate only inside
    /// the region the boundary has not yet influenced.
    ZeroExtension,
}

#[derive(Clone)]
struct FftPair {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

/// `z · d/dx` on a uniform grid, generating `(T(t)f)(x) = f(x + z t)`.
#[derive(Clone)]
pub struct TranslationOp {
    speed: f64,
    grid: Grid1d,
    boundary: Boundary,
    fft: Option<FftPair>,
}

impl fmt::Debug for TranslationOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TranslationOp")
            .field("speed", &self.speed)
            .field("grid", &self.grid)
            .field("boundary", &self.boundary)
            .finish()
    }
}

impl TranslationOp {
    pub fn new(speed: f64, grid: Grid1d, boundary: Boundary) -> Result<Self> {
        if grid.points < 4 {
            return Err(Error::InvalidInput("translation grid needs at least 4 points".into()));
        }
        if !(grid.dx > 0.0) || !speed.is_finite() || !grid.x0.is_finite() {
            return Err(Error::InvalidInput("translation grid spacing must be positive".into()));
        }
        let fft = (boundary == Boundary::Periodic).then(|| {
            let mut planner = FftPlanner::new();
            FftPair {
                forward: planner.plan_fft_forward(grid.points),
                inverse: planner.plan_fft_inverse(grid.points),
            }
        });
        Ok(Self {
            speed,
            grid,
            boundary,
            fft,
        })
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn grid(&self) -> &Grid1d {
        &self.grid
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Angular wavenumber of FFT bin `k`; the Nyquist bin is assigned zero so that
    /// derivative and shift remain real and mutually consistent.
    fn wavenumber(&self, k: usize) -> f64 {
        let n = self.grid.points;
        let signed = if 2 * k < n {
            k as f64
        } else if 2 * k == n {
            0.0
        } else {
            k as f64 - n as f64
        };
        2.0 * PI * signed / self.grid.length()
    }

    fn fourier_multiply(&self, v: &StateVector, mult: impl Fn(f64) -> Complex64) -> StateVector {
        let fft = self.fft.as_ref().expect("periodic translation has FFT plans");
        let n = self.grid.points;
        let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        fft.forward.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            *c *= mult(self.wavenumber(k));
        }
        fft.inverse.process(&mut buf);
        StateVector::from_fn(n, |i| buf[i].re / n as f64)
    }

    fn apply(&self, v: &StateVector) -> StateVector {
        let z = self.speed;
        match self.boundary {
            Boundary::Periodic => self.fourier_multiply(v, |kappa| Complex64::new(0.0, kappa * z)),
            Boundary::ZeroExtension => {
                let n = self.grid.points;
                let at = |i: isize| if (0..n as isize).contains(&i) { v[i as usize] } else { 0.0 };
                StateVector::from_fn(n, |i| {
                    let i = i as isize;
                    z * (at(i + 1) - at(i - 1)) / (2.0 * self.grid.dx)
                })
            }
        }
    }

    fn shift(&self, t: f64, v: &StateVector) -> StateVector {
        let s = self.speed * t;
        match self.boundary {
            Boundary::Periodic => self.fourier_multiply(v, |kappa| Complex64::from_polar(1.0, kappa * s)),
            Boundary::ZeroExtension => {
                let n = self.grid.points;
                let at = |i: isize| if (0..n as isize).contains(&i) { v[i as usize] } else { 0.0 };
                let offset = s / self.grid.dx;
                StateVector::from_fn(n, |i| {
                    let pos = i as f64 + offset;
                    let base = pos.floor();
                    let u = pos - base;
                    let j = base as isize;
                    // cubic Lagrange through nodes j-1, j, j+1, j+2
                    let w = [
                        -u * (u - 1.0) * (u - 2.0) / 6.0,
                        (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0,
                        -(u + 1.0) * u * (u - 2.0) / 2.0,
                        (u + 1.0) * u * (u - 1.0) / 6.0,
                    ];
                    (0..4).map(|m| w[m] * at(j - 1 + m as isize)).sum()
                })
            }
        }
    }
}

#[derive(Debug, Clone)]
pub enum Backend {
    Dense(DenseMatrixOp),
    Spectral(SpectralDiagonalOp),
    Translation(TranslationOp),
}

/// A labelled generator. Operators sharing a label must be the same operator.
#[derive(Debug, Clone)]
pub struct Operator {
    label: String,
    backend: Backend,
}

impl Operator {
    pub fn new(label: impl Into<String>, backend: Backend) -> Self {
        Self {
            label: label.into(),
            backend,
        }
    }

    pub fn dense(label: impl Into<String>, matrix: DenseMatrix) -> Result<Self> {
        Ok(Self::new(label, Backend::Dense(DenseMatrixOp::new(matrix)?)))
    }

    pub fn spectral(label: impl Into<String>, eigenvalues: Vec<f64>, scale: f64) -> Result<Self> {
        Ok(Self::new(
            label,
            Backend::Spectral(SpectralDiagonalOp::new(eigenvalues, scale)?),
        ))
    }

    /// Diagonal generator with the given rates (unit scale).
    pub fn diagonal(label: impl Into<String>, rates: Vec<f64>) -> Result<Self> {
        Self::spectral(label, rates, 1.0)
    }

    pub fn translation(
        label: impl Into<String>,
        speed: f64,
        grid: Grid1d,
        boundary: Boundary,
    ) -> Result<Self> {
        Ok(Self::new(
            label,
            Backend::Translation(TranslationOp::new(speed, grid, boundary)?),
        ))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn backend(&self) -> &Backend {
        &self.backend
    }

    pub fn family(&self) -> Family {
        match self.backend {
            Backend::Dense(_) => Family::Dense,
            Backend::Spectral(_) => Family::Spectral,
            Backend::Translation(_) => Family::Translation,
        }
    }

    pub fn dim(&self) -> usize {
        match &self.backend {
            Backend::Dense(op) => op.matrix.rows(),
            Backend::Spectral(op) => op.eigenvalues.len(),
            Backend::Translation(op) => op.grid.points,
        }
    }

    /// Rates of the modal representation, for backends that are diagonal in the
    /// state coordinates.
    pub fn modal_rates(&self) -> Option<Vec<f64>> {
        match &self.backend {
            Backend::Spectral(op) => Some(op.rates()),
            Backend::Dense(op) if op.matrix.is_diagonal() => {
                Some((0..op.matrix.rows()).map(|i| op.matrix[(i, i)]).collect())
            }
            _ => None,
        }
    }

    /// Whether two operators have identical parameters.
    pub fn same_action(&self, other: &Operator) -> bool {
        match (&self.backend, &other.backend) {
            (Backend::Dense(a), Backend::Dense(b)) => a.matrix == b.matrix,
            (Backend::Spectral(a), Backend::Spectral(b)) => a == b,
            (Backend::Translation(a), Backend::Translation(b)) => {
                a.speed == b.speed && a.grid == b.grid && a.boundary == b.boundary
            }
            _ => false,
        }
    }

    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        v.expect_dim(self.dim())?;
        Ok(match &self.backend {
            Backend::Dense(op) => op.matrix.mul_vec(v)?,
            Backend::Spectral(op) => {
                StateVector::from_fn(v.dim(), |k| op.scale * op.eigenvalues[k] * v[k])
            }
            Backend::Translation(op) => op.apply(v),
        })
    }

    /// `A^power v`.
    pub fn apply_power(&self, power: u32, v: &StateVector) -> Result<StateVector> {
        let mut out = v.clone();
        for _ in 0..power {
            out = self.apply(&out)?;
        }
        Ok(out)
    }

    /// `T(t) v`. Negative `t` is accepted only for the translation group.
    pub fn semigroup(&self, t: f64, v: &StateVector) -> Result<StateVector> {
        v.expect_dim(self.dim())?;
        if t == 0.0 {
            return Ok(v.clone());
        }
        if t < 0.0 && self.family() != Family::Translation {
            return Err(Error::NegativeTime(t));
        }
        let out = match &self.backend {
            Backend::Dense(op) => match &op.symmetric {
                Some(eig) => eig.exp_apply(t, v),
                None => expm_apply(&op.matrix, t, v)?,
            },
            Backend::Spectral(op) => {
                StateVector::from_fn(v.dim(), |k| (op.scale * op.eigenvalues[k] * t).exp() * v[k])
            }
            Backend::Translation(op) => op.shift(t, v),
        };
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::Overflow(format!(
                "semigroup of `{}` at t = {t}",
                self.label
            )))
        }
    }

    /// Matrix of the generator in state coordinates.
    pub fn to_matrix(&self) -> Result<DenseMatrix> {
        match &self.backend {
            Backend::Dense(op) => Ok(op.matrix.clone()),
            Backend::Spectral(op) => Ok(DenseMatrix::from_diagonal(&op.rates())),
            Backend::Translation(_) => DenseMatrix::from_columns_of(self.dim(), |e| self.apply(e)),
        }
    }
}

fn check_family(a: &Operator, b: &Operator) -> Result<()> {
    if a.family() == b.family() {
        Ok(())
    } else {
        Err(Error::MixedBackend {
            first: a.label.clone(),
            first_family: a.family().to_string(),
            other: b.label.clone(),
            other_family: b.family().to_string(),
        })
    }
}

/// Solves `(A − B) w = rhs`.
pub fn resolvent_solve(a: &Operator, b: &Operator, rhs: &StateVector) -> Result<StateVector> {
    check_family(a, b)?;
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    rhs.expect_dim(a.dim())?;
    let not_invertible = |detail: String| Error::NotInvertible {
        a: a.label.clone(),
        b: b.label.clone(),
        detail,
    };
    match (&a.backend, &b.backend) {
        (Backend::Spectral(x), Backend::Spectral(y)) => {
            let diff: Vec<f64> = x.rates().iter().zip(y.rates()).map(|(p, q)| p - q).collect();
            let threshold = PIVOT_TOLERANCE * diff.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            if let Some(k) = diff.iter().position(|d| d.abs() <= threshold) {
                return Err(not_invertible(format!("modal rates coincide at mode {k}")));
            }
            Ok(StateVector::from_fn(rhs.dim(), |k| rhs[k] / diff[k]))
        }
        (Backend::Translation(x), Backend::Translation(y)) => {
            if x.speed == y.speed {
                return Err(Error::Unsupported(format!(
                    "resolvent of translation operators `{}` and `{}` with equal speeds",
                    a.label, b.label
                )));
            }
            if x.boundary == Boundary::Periodic {
                return Err(not_invertible(
                    "the periodic derivative annihilates constants".into(),
                ));
            }
            let m = a.to_matrix()?.sub(&b.to_matrix()?)?;
            m.lu()
                .map_err(|e| not_invertible(e.to_string()))?
                .solve(rhs)
        }
        _ => {
            let m = a.to_matrix()?.sub(&b.to_matrix()?)?;
            m.lu()
                .map_err(|e| not_invertible(e.to_string()))?
                .solve(rhs)
        }
    }
}

/// `max_v ‖ABv − BAv‖∞ / (‖v‖∞ + 1e-30)` over the probes.
pub fn commutation_defect(a: &Operator, b: &Operator, probes: &[StateVector]) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    match (&a.backend, &b.backend) {
        (Backend::Spectral(_), Backend::Spectral(_)) => return Ok(0.0),
        (Backend::Translation(x), Backend::Translation(y))
            if x.grid == y.grid && x.boundary == y.boundary =>
        {
            return Ok(0.0)
        }
        _ => {}
    }
    if a.same_action(b) {
        return Ok(0.0);
    }
    let mut worst = 0.0f64;
    for v in probes {
        let ab = a.apply(&b.apply(v)?)?;
        let ba = b.apply(&a.apply(v)?)?;
        worst = worst.max((&ab - &ba).norm_inf() / (v.norm_inf() + 1e-30));
    }
    Ok(worst)
}
