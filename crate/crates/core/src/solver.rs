//! Closed-form assembly of solutions: semigroup sums for initial data,
//! Duhamel-type quadrature for forcing, and their superposition.

use serde::{Deserialize, Serialize};

use crate::confluent::{build_confluent_matrix, ConfluentSolver, CoefficientVector, ZVector};
use crate::equation::{FactorGroup, FactoredEquation, Forcing};
use crate::error::{Error, Result};
use crate::operators::{resolvent_solve, Operator};
use crate::statespace::{QuadratureRule, StateVector};

/// Relative Richardson tolerance used by the forcing quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;

/// Relative Richardson tolerance used by [`lemma2_lhs`].
pub const LEMMA2_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Per-sample deviation from the companion oracle.
    pub oracle_dev: Option<Vec<f64>>,
    /// Relative residuals `‖M y − x‖ / (1 + ‖x‖)` of the coefficient solves.
    pub residuals: Vec<f64>,
    pub quadrature: Option<QuadratureRule>,
}

/// Sampled solution `u(tᵢ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionTrace {
    pub times: Vec<f64>,
    pub values: Vec<StateVector>,
    pub diagnostics: Diagnostics,
}

impl SolutionTrace {
    /// Sample times must be finite, nonnegative and strictly increasing.
    pub fn check_grid(times: &[f64]) -> Result<()> {
        if times.is_empty() {
            return Err(Error::InvalidInput("time grid is empty".into()));
        }
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("time sample {i}")));
            }
            if t < 0.0 {
                return Err(Error::NegativeTime(t));
            }
            if i > 0 && t <= times[i - 1] {
                return Err(Error::InvalidInput(format!(
                    "time samples must increase strictly (index {i})"
                )));
            }
        }
        Ok(())
    }

    pub fn new(times: Vec<f64>, values: Vec<StateVector>) -> Result<Self> {
        Self::check_grid(&times)?;
        if values.len() != times.len() {
            return Err(Error::DimensionMismatch {
                expected: times.len(),
                found: values.len(),
            });
        }
        let d = values[0].dim();
        for v in &values {
            v.expect_dim(d)?;
        }
        Ok(Self {
            times,
            values,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].dim()
    }

    /// Largest `‖u(tᵢ)‖∞` over the trace.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().map(StateVector::norm_inf).fold(0.0, f64::max)
    }

    fn check_same_grid(&self, other: &SolutionTrace) -> Result<()> {
        if self.times != other.times {
            return Err(Error::InvalidInput("traces are sampled on different grids".into()));
        }
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }

    /// Per-sample `‖u(tᵢ) − v(tᵢ)‖∞`, divided by the larger trace-wide max norm
    /// when that is nonzero.
    pub fn relative_deviation(&self, reference: &SolutionTrace) -> Result<Vec<f64>> {
        self.check_same_grid(reference)?;
        let scale = self.max_norm().max(reference.max_norm());
        let scale = if scale > 0.0 { scale } else { 1.0 };
        Ok(self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| (a - b).norm_inf() / scale)
            .collect())
    }

    /// Per-sample `‖u(tᵢ) − v(tᵢ)‖∞`.
    pub fn absolute_deviation(&self, other: &SolutionTrace) -> Result<Vec<f64>> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm_inf())
            .collect())
    }

    /// Attaches the oracle deviation column.
    pub fn with_oracle_dev(mut self, dev: Vec<f64>) -> Result<Self> {
        if dev.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: dev.len(),
            });
        }
        self.diagnostics.oracle_dev = Some(dev);
        Ok(self)
    }

    /// Samplewise sum; diagnostics are merged.
    pub fn sum(&self, other: &SolutionTrace) -> Result<SolutionTrace> {
        self.check_same_grid(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        let mut residuals = self.diagnostics.residuals.clone();
        residuals.extend_from_slice(&other.diagnostics.residuals);
        Ok(SolutionTrace {
            times: self.times.clone(),
            values,
            diagnostics: Diagnostics {
                oracle_dev: None,
                residuals,
                quadrature: self.diagnostics.quadrature.or(other.diagnostics.quadrature),
            },
        })
    }
}

fn offsets(groups: &[FactorGroup]) -> Vec<usize> {
    groups
        .iter()
        .scan(0, |acc, g| {
            let start = *acc;
            *acc += g.multiplicity;
            Some(start)
        })
        .collect()
}

/// `Σₖ sᵏ/k! · vₖ` for the coefficients of one group.
fn polynomial_weighted(s: f64, coeffs: &[StateVector]) -> StateVector {
    let mut out = StateVector::zeros(coeffs[0].dim());
    let mut weight = 1.0;
    for (k, v) in coeffs.iter().enumerate() {
        if k > 0 {
            weight *= s / k as f64;
        }
        out.axpy(weight, v);
    }
    out
}

fn relative_residual(lhs: &[StateVector], rhs: &[StateVector]) -> f64 {
    let scale = 1.0 + rhs.iter().map(StateVector::norm_inf).fold(0.0, f64::max);
    lhs.iter()
        .zip(rhs)
        .map(|(a, b)| (a - b).norm_inf())
        .fold(0.0, f64::max)
        / scale
}

/// `u(t) = Σⱼ T_{Bⱼ}(t) Σₖ tᵏ/k! y_{offⱼ+k}` with precomputed coefficients.
#[derive(Debug, Clone)]
pub struct HomogeneousSolution {
    groups: Vec<FactorGroup>,
    coefficients: CoefficientVector,
    residual: f64,
}

impl HomogeneousSolution {
    pub fn new(eq: &FactoredEquation) -> Result<Self> {
        let matrix = build_confluent_matrix(eq.groups())?;
        let coefficients = ConfluentSolver::new(matrix.clone())?.solve(eq.initial_data())?;
        let residual = relative_residual(&matrix.apply(&coefficients.entries)?, eq.initial_data());
        Ok(Self {
            groups: eq.groups().to_vec(),
            coefficients,
            residual,
        })
    }

    pub fn coefficients(&self) -> &CoefficientVector {
        &self.coefficients
    }

    /// Relative residual of the coefficient solve.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn eval(&self, t: f64) -> Result<StateVector> {
        let mut u = StateVector::zeros(self.coefficients.entries[0].dim());
        for (g, off) in self.groups.iter().zip(offsets(&self.groups)) {
            let slice = &self.coefficients.entries[off..off + g.multiplicity];
            u.axpy(1.0, &g.operator.semigroup(t, &polynomial_weighted(t, slice))?);
        }
        Ok(u)
    }
}

/// `u(t) = Σⱼ ∫₀ᵗ T_{Bⱼ}(t−s) Σₖ (t−s)ᵏ/k! Z_{offⱼ+k} f(s) ds`.
#[derive(Debug, Clone)]
pub struct ForcedSolution {
    groups: Vec<FactorGroup>,
    z: ZVector,
    forcing: Forcing,
    rule: QuadratureRule,
}

impl ForcedSolution {
    pub fn new(eq: &FactoredEquation, rule: QuadratureRule) -> Result<Self> {
        rule.validate()?;
        let forcing = eq
            .forcing()
            .cloned()
            .ok_or_else(|| Error::InvalidInput("the equation has no forcing".into()))?;
        let z = ConfluentSolver::new(build_confluent_matrix(eq.groups())?)?.z_vector()?;
        Ok(Self {
            groups: eq.groups().to_vec(),
            z,
            forcing,
            rule,
        })
    }

    pub fn z_vector(&self) -> &ZVector {
        &self.z
    }

    fn integrate(&self, t: f64, rule: &QuadratureRule, dim: usize) -> Result<StateVector> {
        let offs = offsets(&self.groups);
        let mut acc = StateVector::zeros(dim);
        for (s, w) in rule.nodes(0.0, t) {
            let f = self.forcing.eval(s);
            f.expect_dim(dim)?;
            let g: Vec<StateVector> = self
                .z
                .entries
                .iter()
                .map(|z| z.apply(&f))
                .collect::<Result<_>>()?;
            let tau = t - s;
            for (grp, &off) in self.groups.iter().zip(&offs) {
                let weighted = polynomial_weighted(tau, &g[off..off + grp.multiplicity]);
                acc.axpy(w, &grp.operator.semigroup(tau, &weighted)?);
            }
        }
        Ok(acc)
    }

    /// Quadrature value at `t` with `rule`, without the refinement check.
    pub fn integrate_with(&self, t: f64, rule: &QuadratureRule) -> Result<StateVector> {
        rule.validate()?;
        self.integrate(t, rule, self.groups[0].operator.dim())
    }

    /// Quadrature value at `t`, checked against the rule with doubled panels.
    pub fn eval(&self, t: f64) -> Result<StateVector> {
        let dim = self.groups[0].operator.dim();
        if t == 0.0 {
            return Ok(StateVector::zeros(dim));
        }
        richardson(t, QUADRATURE_TOLERANCE, &self.rule, |r| self.integrate(t, r, dim))
    }
}

/// Pointwise evaluator of the superposed solution.
#[derive(Debug, Clone)]
pub struct FullSolution {
    homogeneous: Option<HomogeneousSolution>,
    forced: Option<ForcedSolution>,
    dim: usize,
}

impl FullSolution {
    pub fn new(eq: &FactoredEquation, rule: QuadratureRule) -> Result<Self> {
        let homogeneous = (!eq.has_zero_initial_data() || eq.forcing().is_none())
            .then(|| HomogeneousSolution::new(eq))
            .transpose()?;
        let forced = eq
            .forcing()
            .is_some()
            .then(|| ForcedSolution::new(eq, rule))
            .transpose()?;
        Ok(Self {
            homogeneous,
            forced,
            dim: eq.dim(),
        })
    }

    pub fn eval(&self, t: f64) -> Result<StateVector> {
        let mut u = StateVector::zeros(self.dim);
        if let Some(h) = &self.homogeneous {
            u.axpy(1.0, &h.eval(t)?);
        }
        if let Some(f) = &self.forced {
            u.axpy(1.0, &f.eval(t)?);
        }
        Ok(u)
    }
}

/// Evaluates with `rule` and `rule.refined()` and returns the refined value when
/// the two agree to `tolerance` relative.
pub(crate) fn richardson(
    t: f64,
    tolerance: f64,
    rule: &QuadratureRule,
    mut integrate: impl FnMut(&QuadratureRule) -> Result<StateVector>,
) -> Result<StateVector> {
    let coarse = integrate(rule)?;
    let fine = integrate(&rule.refined())?;
    if !fine.is_finite() {
        return Err(Error::NonFinite(format!("quadrature at t = {t}")));
    }
    let diff = (&fine - &coarse).norm_inf();
    let norm = fine.norm_inf() + 1e-12;
    if diff > tolerance * norm {
        return Err(Error::QuadratureUnderResolved {
            t,
            observed: diff / norm,
            tolerance,
        });
    }
    Ok(fine)
}

fn sample(t_grid: &[f64], mut f: impl FnMut(f64) -> Result<StateVector>) -> Result<SolutionTrace> {
    SolutionTrace::check_grid(t_grid)?;
    let values = t_grid.iter().map(|&t| f(t)).collect::<Result<Vec<_>>>()?;
    SolutionTrace::new(t_grid.to_vec(), values)
}

/// Solution of the unforced problem.
pub fn solve_homogeneous(eq: &FactoredEquation, t_grid: &[f64]) -> Result<SolutionTrace> {
    if eq.forcing().is_some() {
        return Err(Error::InvalidInput(
            "solve_homogeneous needs an unforced equation; use solve_full".into(),
        ));
    }
    let sol = HomogeneousSolution::new(eq)?;
    let mut trace = sample(t_grid, |t| sol.eval(t))?;
    trace.diagnostics.residuals.push(sol.residual());
    Ok(trace)
}

/// Solution of the forced problem with zero initial data.
pub fn solve_inhomogeneous_zero_ic(
    eq: &FactoredEquation,
    t_grid: &[f64],
    rule: QuadratureRule,
) -> Result<SolutionTrace> {
    if !eq.has_zero_initial_data() {
        return Err(Error::InvalidInput(
            "solve_inhomogeneous_zero_ic needs zero initial data; use solve_full".into(),
        ));
    }
    let sol = ForcedSolution::new(eq, rule)?;
    let mut trace = sample(t_grid, |t| sol.eval(t))?;
    trace.diagnostics.quadrature = Some(rule);
    Ok(trace)
}

/// Initial-data part plus forcing part; a part that is identically zero is skipped.
pub fn solve_full(eq: &FactoredEquation, t_grid: &[f64], rule: QuadratureRule) -> Result<SolutionTrace> {
    let homogeneous = (!eq.has_zero_initial_data() || eq.forcing().is_none())
        .then(|| solve_homogeneous(&eq.without_forcing(), t_grid))
        .transpose()?;
    let forced = eq
        .forcing()
        .is_some()
        .then(|| solve_inhomogeneous_zero_ic(&eq.with_zero_initial_data(), t_grid, rule))
        .transpose()?;
    match (homogeneous, forced) {
        (Some(h), Some(f)) => h.sum(&f),
        (Some(h), None) => Ok(h),
        (None, Some(f)) => Ok(f),
        (None, None) => unreachable!("one of the parts is always evaluated"),
    }
}

/// `∫₀ᵗ T_i(t−s) sᵏ/k! T_j(s) x ds` by Richardson-checked quadrature.
pub fn lemma2_lhs(
    i: &Operator,
    j: &Operator,
    k: u32,
    t: f64,
    x: &StateVector,
    rule: QuadratureRule,
) -> Result<StateVector> {
    rule.validate()?;
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    if t == 0.0 {
        return Ok(StateVector::zeros(x.dim()));
    }
    let factorial: f64 = (1..=k).map(f64::from).product();
    richardson(t, LEMMA2_TOLERANCE, &rule, |r| {
        let mut acc = StateVector::zeros(x.dim());
        for (s, w) in r.nodes(0.0, t) {
            let inner = j.semigroup(s, x)?.scaled(s.powi(k as i32) / factorial);
            acc.axpy(w, &i.semigroup(t - s, &inner)?);
        }
        Ok(acc)
    })
}

/// Closed-form value of [`lemma2_lhs`] through resolvents of `A_j − A_i`:
/// `I₀ = (A_j − A_i)⁻¹ (T_j(t) − T_i(t)) x` and
/// `I_k = (A_j − A_i)⁻¹ (tᵏ/k! T_j(t) x − I_{k−1})`.
pub fn lemma2_rhs(i: &Operator, j: &Operator, k: u32, t: f64, x: &StateVector) -> Result<StateVector> {
    if t < 0.0 {
        return Err(Error::NegativeTime(t));
    }
    let tj = j.semigroup(t, x)?;
    let ti = i.semigroup(t, x)?;
    let mut acc = resolvent_solve(j, i, &(&tj - &ti))?;
    let mut weight = 1.0;
    for m in 1..=k {
        weight *= t / f64::from(m);
        acc = resolvent_solve(j, i, &(&tj.scaled(weight) - &acc))?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equation::oracle_solve;
    use crate::statespace::DenseMatrix;
    use std::f64::consts::E;

    fn scalar(label: &str, a: f64) -> Operator {
        Operator::diagonal(label, vec![a]).unwrap()
    }

    fn sv(x: &[f64]) -> StateVector {
        StateVector::from(x)
    }

    fn constant_forcing(value: f64) -> Forcing {
        Forcing::new(move |_| sv(&[value]))
    }

    #[test]
    fn grid_validation() {
        assert!(SolutionTrace::check_grid(&[]).is_err());
        assert_eq!(SolutionTrace::check_grid(&[-1.0]).unwrap_err(), Error::NegativeTime(-1.0));
        assert!(SolutionTrace::check_grid(&[0.0, 0.0]).is_err());
        assert!(SolutionTrace::check_grid(&[0.0, f64::NAN]).is_err());
        assert!(SolutionTrace::new(vec![0.0, 1.0], vec![sv(&[1.0])]).is_err());
        assert!(SolutionTrace::new(vec![0.0, 1.0], vec![sv(&[1.0]), sv(&[1.0, 2.0])]).is_err());
        let tr = SolutionTrace::new(vec![0.0], vec![sv(&[1.0])]).unwrap();
        assert!(tr.clone().with_oracle_dev(vec![0.0, 1.0]).is_err());
        assert!(tr.with_oracle_dev(vec![0.0]).is_ok());
    }

    #[test]
    fn single_factor_is_semigroup() {
        let eq = FactoredEquation::new(vec![scalar("A", -0.5)], vec![sv(&[2.0])]).unwrap();
        let tr = solve_homogeneous(&eq, &[0.0, 1.0, 2.0]).unwrap();
        for (t, u) in tr.times.iter().zip(&tr.values) {
            assert!((u[0] - 2.0 * (-0.5 * t).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn double_root_at_zero_is_linear() {
        let a = scalar("A", 0.0);
        let eq = FactoredEquation::new(vec![a.clone(), a], vec![sv(&[0.0]), sv(&[1.0])]).unwrap();
        let tr = solve_homogeneous(&eq, &[0.0, 0.5, 3.0]).unwrap();
        for (t, u) in tr.times.iter().zip(&tr.values) {
            assert_eq!(u[0], *t);
        }
    }

    #[test]
    fn homogeneous_rejects_forcing() {
        let eq = FactoredEquation::new(vec![scalar("A", 0.0)], vec![sv(&[0.0])])
            .unwrap()
            .with_forcing(constant_forcing(1.0));
        assert!(solve_homogeneous(&eq, &[0.0]).is_err());
        let eq = FactoredEquation::new(vec![scalar("A", 0.0)], vec![sv(&[1.0])])
            .unwrap()
            .with_forcing(constant_forcing(1.0));
        assert!(solve_inhomogeneous_zero_ic(&eq, &[0.0], QuadratureRule::default()).is_err());
    }

    #[test]
    fn constant_forcing_first_order() {
        let eq = FactoredEquation::new(vec![scalar("A", 0.0)], vec![sv(&[0.0])])
            .unwrap()
            .with_forcing(constant_forcing(1.0));
        let tr = solve_inhomogeneous_zero_ic(&eq, &[0.0, 0.3, 1.0, 2.5], QuadratureRule::default()).unwrap();
        assert_eq!(tr.values[0][0], 0.0);
        for (t, u) in tr.times.iter().zip(&tr.values) {
            assert!((u[0] - t).abs() <= 1e-12);
        }
    }

    #[test]
    fn constant_forcing_double_root() {
        let a = scalar("A", 0.0);
        let eq = FactoredEquation::new(vec![a.clone(), a], vec![sv(&[0.0]), sv(&[0.0])])
            .unwrap()
            .with_forcing(constant_forcing(1.0));
        let tr = solve_inhomogeneous_zero_ic(&eq, &[0.5, 1.0, 2.0], QuadratureRule::default()).unwrap();
        for (t, u) in tr.times.iter().zip(&tr.values) {
            assert!((u[0] - t * t / 2.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn third_order_with_cosine_matches_oracle() {
        let (a, b) = (scalar("a", -1.0), scalar("b", 1.0));
        let eq = FactoredEquation::new(vec![a.clone(), a, b], vec![sv(&[0.0]); 3])
            .unwrap()
            .with_forcing(Forcing::new(|t| sv(&[t.cos()])));
        let grid = [0.25, 1.0];
        let tr = solve_inhomogeneous_zero_ic(&eq, &grid, QuadratureRule::default()).unwrap();
        let oracle = oracle_solve(&eq, &grid, 2000).unwrap();
        for (u, v) in tr.values.iter().zip(&oracle.values) {
            assert!((u[0] - v[0]).abs() <= 1e-6 * v[0].abs().max(1e-3));
        }
    }

    #[test]
    fn quadrature_under_resolution_is_reported() {
        let eq = FactoredEquation::new(vec![scalar("A", 0.0)], vec![sv(&[0.0])])
            .unwrap()
            .with_forcing(Forcing::new(|t| sv(&[(40.0 * t).sin()])));
        let rule = QuadratureRule::gauss_legendre(1, 2).unwrap();
        assert!(matches!(
            solve_inhomogeneous_zero_ic(&eq, &[3.0], rule),
            Err(Error::QuadratureUnderResolved { .. })
        ));
    }

    #[test]
    fn full_superposition_cosh() {
        // u'' − u = 1, u(0) = 1, u'(0) = 0  →  u = 2 cosh t − 1
        let (a, b) = (scalar("a", 1.0), scalar("b", -1.0));
        let eq = FactoredEquation::new(vec![a, b], vec![sv(&[1.0]), sv(&[0.0])])
            .unwrap()
            .with_forcing(constant_forcing(1.0));
        let tr = solve_full(&eq, &[0.0, 1.0], QuadratureRule::default()).unwrap();
        let exact = 2.0 * 1f64.cosh() - 1.0;
        assert!((tr.values[1][0] - exact).abs() <= 1e-12 * exact);
        assert!((tr.values[0][0] - 1.0).abs() <= 1e-15);
        let oracle = oracle_solve(&eq, &[0.0, 1.0], 2000).unwrap();
        assert!((oracle.values[1][0] - exact).abs() <= 1e-7 * exact);
    }

    #[test]
    fn full_without_forcing_equals_homogeneous() {
        let eq = FactoredEquation::new(vec![scalar("a", 0.3), scalar("b", -0.2)], vec![sv(&[1.0]), sv(&[0.5])]).unwrap();
        let grid = [0.0, 0.7, 1.4];
        assert_eq!(
            solve_full(&eq, &grid, QuadratureRule::default()).unwrap(),
            solve_homogeneous(&eq, &grid).unwrap()
        );
    }

    #[test]
    fn full_with_zero_data_equals_forced() {
        let eq = FactoredEquation::new(vec![scalar("a", 0.3), scalar("b", -0.2)], vec![sv(&[0.0]), sv(&[0.0])])
            .unwrap()
            .with_forcing(Forcing::new(|t| sv(&[1.0 + t])));
        let grid = [0.0, 0.7, 1.4];
        let rule = QuadratureRule::default();
        assert_eq!(
            solve_full(&eq, &grid, rule).unwrap(),
            solve_inhomogeneous_zero_ic(&eq, &grid, rule).unwrap()
        );
    }

    #[test]
    fn lemma2_scalar_examples() {
        let rule = QuadratureRule::default();
        let zero = scalar("z", 0.0);
        let x = sv(&[1.5]);
        let lhs = lemma2_lhs(&zero, &zero, 0, 2.0, &x, rule).unwrap();
        assert!((lhs[0] - 3.0).abs() < 1e-13);
        let lhs = lemma2_lhs(&zero, &zero, 1, 1.0, &sv(&[1.0]), rule).unwrap();
        assert!((lhs[0] - 0.5).abs() < 1e-14);
        let (a, b) = (scalar("a", 1.0), scalar("b", 2.0));
        let expected = E * E - E;
        let lhs = lemma2_lhs(&a, &b, 0, 1.0, &sv(&[1.0]), rule).unwrap();
        let rhs = lemma2_rhs(&a, &b, 0, 1.0, &sv(&[1.0])).unwrap();
        assert!((lhs[0] - expected).abs() < 1e-12);
        assert!((rhs[0] - expected).abs() < 1e-12);
        assert!(matches!(
            lemma2_rhs(&a, &a, 0, 1.0, &sv(&[1.0])),
            Err(Error::NotInvertible { .. })
        ));
    }

    #[test]
    fn lemma2_dense_pair() {
        let q = DenseMatrix::from_rows(&[vec![0.6, -0.8], vec![0.8, 0.6]]).unwrap();
        let conj = |d: [f64; 2]| q.transpose().matmul(&DenseMatrix::from_diagonal(&d)).unwrap().matmul(&q).unwrap();
        let i = Operator::dense("I", conj([0.4, -1.2])).unwrap();
        let j = Operator::dense("J", conj([-0.3, 0.9])).unwrap();
        let x = sv(&[0.7, -0.4]);
        for k in 0..4 {
            let lhs = lemma2_lhs(&i, &j, k, 0.8, &x, QuadratureRule::default()).unwrap();
            let rhs = lemma2_rhs(&i, &j, k, 0.8, &x).unwrap();
            assert!((&lhs - &rhs).norm_inf() <= 1e-7 * lhs.norm_inf().max(1e-3), "k = {k}");
        }
    }

    #[test]
    fn relative_deviation_normalisation() {
        let a = SolutionTrace::new(vec![0.0, 1.0], vec![sv(&[2.0]), sv(&[4.0])]).unwrap();
        let b = SolutionTrace::new(vec![0.0, 1.0], vec![sv(&[2.0]), sv(&[3.0])]).unwrap();
        assert_eq!(a.relative_deviation(&b).unwrap(), vec![0.0, 0.25]);
        let z = SolutionTrace::new(vec![0.0], vec![sv(&[0.0])]).unwrap();
        assert_eq!(z.relative_deviation(&z).unwrap(), vec![0.0]);
    }
}
