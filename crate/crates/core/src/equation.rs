//! Factored equations, grouping of repeated factors, and the equivalent
//! first-order companion system used as a brute-force reference.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{commutation_defect, Family, Operator};
use crate::solver::SolutionTrace;
use crate::statespace::{rk4_integrate_from, DenseMatrix, StateVector};

/// Largest supported equation order.
pub const MAX_ORDER: usize = 30;

/// Commutation gate: `commutation_defect ≤ COMMUTATION_TOLERANCE · max(1, ‖A‖∞‖B‖∞)`.
pub const COMMUTATION_TOLERANCE: f64 = 1e-9;

const COMMUTATION_PROBES: usize = 10;
const PROBE_SEED: u64 = 0x5eed_0a0c;

/// Default RK4 resolution for [`oracle_solve`].
pub const DEFAULT_STEPS_PER_UNIT: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Smoothness {
    C1,
    PiecewiseC1,
}

pub type ForcingFn = dyn Fn(f64) -> StateVector + Send + Sync;

/// Right-hand side `f(t)`.
#[derive(Clone)]
pub struct Forcing {
    evaluator: Arc<ForcingFn>,
    smoothness: Smoothness,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing")
            .field("smoothness", &self.smoothness)
            .finish_non_exhaustive()
    }
}

impl Forcing {
    pub fn new(f: impl Fn(f64) -> StateVector + Send + Sync + 'static) -> Self {
        Self {
            evaluator: Arc::new(f),
            smoothness: Smoothness::C1,
        }
    }

    pub fn with_smoothness(mut self, smoothness: Smoothness) -> Self {
        self.smoothness = smoothness;
        self
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn eval(&self, t: f64) -> StateVector {
        (self.evaluator)(t)
    }
}

/// A distinct generator `Bⱼ` and its multiplicity `Sⱼ`.
#[derive(Debug, Clone)]
pub struct FactorGroup {
    pub operator: Operator,
    pub multiplicity: usize,
}

/// Groups equal labels, ordered by first occurrence.
pub fn group_factors(factors: &[Operator]) -> Result<Vec<FactorGroup>> {
    let first = factors
        .first()
        .ok_or_else(|| Error::InvalidInput("an equation needs at least one factor".into()))?;
    let mut groups: Vec<FactorGroup> = Vec::new();
    for op in factors {
        if op.family() != first.family() {
            return Err(Error::MixedBackend {
                first: first.label().to_string(),
                first_family: first.family().to_string(),
                other: op.label().to_string(),
                other_family: op.family().to_string(),
            });
        }
        match groups.iter_mut().find(|g| g.operator.label() == op.label()) {
            Some(g) => {
                if !g.operator.same_action(op) {
                    return Err(Error::LabelConflict(op.label().to_string()));
                }
                g.multiplicity += 1;
            }
            None => groups.push(FactorGroup {
                operator: op.clone(),
                multiplicity: 1,
            }),
        }
    }
    Ok(groups)
}

/// `∏ⱼ (d/dt − Aⱼ) u = f` with `u⁽ᵏ⁾(0) = x_k`.
#[derive(Debug, Clone)]
pub struct FactoredEquation {
    factors: Vec<Operator>,
    groups: Vec<FactorGroup>,
    initial_data: Vec<StateVector>,
    forcing: Option<Forcing>,
}

impl FactoredEquation {
    /// Validates family, dimensions, label consistency and mutual commutation.
    pub fn new(factors: Vec<Operator>, initial_data: Vec<StateVector>) -> Result<Self> {
        let groups = group_factors(&factors)?;
        let n = factors.len();
        if n > MAX_ORDER {
            return Err(Error::TooManyFactors(n));
        }
        let dim = factors[0].dim();
        for op in &factors {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
        }
        if initial_data.len() != n {
            return Err(Error::InvalidInput(format!(
                "{n} factors need {n} initial vectors, got {}",
                initial_data.len()
            )));
        }
        for x in &initial_data {
            x.expect_dim(dim)?;
            if !x.is_finite() {
                return Err(Error::NonFinite("initial data".into()));
            }
        }
        check_commuting(&groups)?;
        Ok(Self {
            factors,
            groups,
            initial_data,
            forcing: None,
        })
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn without_forcing(&self) -> Self {
        Self {
            forcing: None,
            ..self.clone()
        }
    }

    pub fn with_zero_initial_data(&self) -> Self {
        Self {
            initial_data: vec![StateVector::zeros(self.dim()); self.order()],
            ..self.clone()
        }
    }

    /// The same equation with its factors listed as `factors[perm[0]], factors[perm[1]], …`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let mut seen = vec![false; self.order()];
        if perm.len() != self.order() || perm.iter().any(|&p| p >= self.order() || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::InvalidInput("not a permutation of the factor list".into()));
        }
        let factors: Vec<Operator> = perm.iter().map(|&p| self.factors[p].clone()).collect();
        Ok(Self {
            groups: group_factors(&factors)?,
            factors,
            ..self.clone()
        })
    }

    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn dim(&self) -> usize {
        self.factors[0].dim()
    }

    pub fn family(&self) -> Family {
        self.factors[0].family()
    }

    pub fn factors(&self) -> &[Operator] {
        &self.factors
    }

    pub fn groups(&self) -> &[FactorGroup] {
        &self.groups
    }

    pub fn initial_data(&self) -> &[StateVector] {
        &self.initial_data
    }

    pub fn forcing(&self) -> Option<&Forcing> {
        self.forcing.as_ref()
    }

    pub fn has_zero_initial_data(&self) -> bool {
        self.initial_data.iter().all(StateVector::is_zero)
    }
}

fn check_commuting(groups: &[FactorGroup]) -> Result<()> {
    if groups.len() < 2 {
        return Ok(());
    }
    let dim = groups[0].operator.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let probes: Vec<StateVector> = (0..COMMUTATION_PROBES)
        .map(|_| StateVector::from_fn(dim, |_| rng.gen_range(-1.0..1.0)))
        .collect();
    for (i, gi) in groups.iter().enumerate() {
        for gj in &groups[i + 1..] {
            let (a, b) = (&gi.operator, &gj.operator);
            let defect = commutation_defect(a, b, &probes)?;
            if defect == 0.0 {
                continue;
            }
            let scale = match (a.family(), b.family()) {
                (Family::Dense, Family::Dense) => {
                    (a.to_matrix()?.norm_inf() * b.to_matrix()?.norm_inf()).max(1.0)
                }
                _ => 1.0,
            };
            let tolerance = COMMUTATION_TOLERANCE * scale;
            if defect > tolerance {
                return Err(Error::NonCommuting {
                    a: a.label().to_string(),
                    b: b.label().to_string(),
                    defect,
                    tolerance,
                });
            }
        }
    }
    Ok(())
}

/// Initial state of the companion system: `u_m* = ∏_{k<m}(d/dt − A_k) u |_{t=0}`,
/// expanded as `Σ_k (−1)^k e_k(A_1..A_{m−1}) x_{m−1−k}` with `e_k` the elementary
/// symmetric polynomials of the factor multiset.
pub fn initial_data_transform(eq: &FactoredEquation) -> Result<Vec<StateVector>> {
    let n = eq.order();
    let x = eq.initial_data();
    // table[k][j] = e_k(A_1..A_p) x_j, kept for k + j ≤ n − 1
    let mut table: Vec<Vec<StateVector>> = (0..n)
        .map(|k| {
            (0..n - k)
                .map(|j| if k == 0 { x[j].clone() } else { StateVector::zeros(eq.dim()) })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(n);
    out.push(x[0].clone());
    for p in 1..n {
        let op = &eq.factors()[p - 1];
        for k in (1..=p).rev() {
            for j in 0..n - k {
                let lifted = op.apply(&table[k - 1][j])?;
                table[k][j].axpy(1.0, &lifted);
            }
        }
        let mut u = StateVector::zeros(eq.dim());
        for k in 0..=p {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            u.axpy(sign, &table[k][p - k]);
        }
        out.push(u);
    }
    Ok(out)
}

/// `d/dt (u_1..u_n) = bidiag(A_1..A_n; I) (u_1..u_n) + (0, …, 0, f)`.
#[derive(Debug, Clone)]
pub struct CompanionSystem {
    diagonal: Vec<Operator>,
    initial: Vec<StateVector>,
    forcing: Option<Forcing>,
}

impl CompanionSystem {
    pub fn blocks(&self) -> usize {
        self.diagonal.len()
    }

    pub fn block_dim(&self) -> usize {
        self.diagonal[0].dim()
    }

    pub fn dim(&self) -> usize {
        self.blocks() * self.block_dim()
    }

    pub fn diagonal(&self) -> &[Operator] {
        &self.diagonal
    }

    pub fn diagonal_labels(&self) -> Vec<&str> {
        self.diagonal.iter().map(Operator::label).collect()
    }

    pub fn initial(&self) -> &[StateVector] {
        &self.initial
    }

    pub fn forcing(&self) -> Option<&Forcing> {
        self.forcing.as_ref()
    }

    pub fn initial_state(&self) -> StateVector {
        StateVector::new(self.initial.iter().flat_map(|v| v.iter().copied()).collect())
    }

    /// Right-hand side of the stacked system.
    pub fn rhs(&self, t: f64, state: &StateVector) -> Result<StateVector> {
        let d = self.block_dim();
        let n = self.blocks();
        state.expect_dim(n * d)?;
        let block = |j: usize| StateVector::from(&state.as_slice()[j * d..(j + 1) * d]);
        let mut out = Vec::with_capacity(n * d);
        for j in 0..n {
            let mut row = self.diagonal[j].apply(&block(j))?;
            if j + 1 < n {
                row.axpy(1.0, &block(j + 1));
            } else if let Some(f) = &self.forcing {
                let ft = f.eval(t);
                ft.expect_dim(d)?;
                row.axpy(1.0, &ft);
            }
            out.extend(row.into_vec());
        }
        Ok(StateVector::new(out))
    }

    /// The block generator as one `(n·d)×(n·d)` matrix.
    pub fn to_dense(&self) -> Result<DenseMatrix> {
        let d = self.block_dim();
        let n = self.blocks();
        let mut m = DenseMatrix::zeros(n * d, n * d);
        for (j, op) in self.diagonal.iter().enumerate() {
            let a = op.to_matrix()?;
            for r in 0..d {
                for c in 0..d {
                    m[(j * d + r, j * d + c)] = a[(r, c)];
                }
                if j + 1 < n {
                    m[(j * d + r, (j + 1) * d + r)] = 1.0;
                }
            }
        }
        Ok(m)
    }
}

/// Companion reduction with the factors in the order they are listed.
pub fn build_companion(eq: &FactoredEquation) -> Result<CompanionSystem> {
    Ok(CompanionSystem {
        diagonal: eq.factors().to_vec(),
        initial: initial_data_transform(eq)?,
        forcing: eq.forcing().cloned(),
    })
}

/// Reference solution by fixed-step RK4 on the companion system; `u` is the first block.
pub fn oracle_solve(
    eq: &FactoredEquation,
    t_grid: &[f64],
    steps_per_unit: usize,
) -> Result<SolutionTrace> {
    if eq.family() == Family::Translation {
        return Err(Error::Unsupported(
            "the RK4 oracle runs on dense or spectral backends only".into(),
        ));
    }
    if steps_per_unit == 0 {
        return Err(Error::InvalidInput("steps_per_unit must be positive".into()));
    }
    SolutionTrace::check_grid(t_grid)?;
    let system = build_companion(eq)?;
    let d = eq.dim();
    let mut state = system.initial_state();
    let mut t = 0.0;
    let mut values = Vec::with_capacity(t_grid.len());
    for &target in t_grid {
        if target > t {
            let steps = ((target - t) * steps_per_unit as f64).ceil().max(1.0) as usize;
            state = rk4_integrate_from(|s, u| system.rhs(s, u), &state, t, target, steps)?;
            t = target;
        }
        values.push(StateVector::from(&state.as_slice()[..d]));
    }
    SolutionTrace::new(t_grid.to_vec(), values)
}

/// Seeded random instance with mutually commuting generators.
///
/// Spectral instances use diagonal rates; dense instances conjugate the same
/// diagonals by one random orthogonal matrix, so every pair commutes and the
/// matrices are symmetric. Rates of different groups differ by at least
/// `min_gap` in every mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomInstance {
    pub family: Family,
    pub dim: usize,
    pub multiplicities: Vec<usize>,
    pub seed: u64,
    #[serde(default = "RandomInstance::default_rate_range")]
    pub rate_range: (f64, f64),
    #[serde(default = "RandomInstance::default_min_gap")]
    pub min_gap: f64,
}

impl RandomInstance {
    fn default_rate_range() -> (f64, f64) {
        (-1.5, 1.0)
    }

    fn default_min_gap() -> f64 {
        0.2
    }

    pub fn new(family: Family, dim: usize, multiplicities: Vec<usize>, seed: u64) -> Self {
        Self {
            family,
            dim,
            multiplicities,
            seed,
            rate_range: Self::default_rate_range(),
            min_gap: Self::default_min_gap(),
        }
    }

    pub fn order(&self) -> usize {
        self.multiplicities.iter().sum()
    }

    /// Group rates, `rates[j][m]`.
    fn sample_rates(&self, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
        let groups = self.multiplicities.len();
        let (lo, hi) = self.rate_range;
        if !(hi - lo > self.min_gap * groups.saturating_sub(1) as f64) {
            return Err(Error::InvalidInput(format!(
                "rate range {lo}..{hi} cannot hold {groups} rates {} apart",
                self.min_gap
            )));
        }
        let mut rates = vec![vec![0.0; self.dim]; groups];
        for m in 0..self.dim {
            let mut chosen: Vec<f64> = Vec::with_capacity(groups);
            while chosen.len() < groups {
                let r: f64 = rng.gen_range(lo..hi);
                if chosen.iter().all(|c| (c - r).abs() >= self.min_gap) {
                    chosen.push(r);
                }
            }
            for (j, r) in chosen.into_iter().enumerate() {
                rates[j][m] = r;
            }
        }
        Ok(rates)
    }

    pub fn build(&self) -> Result<FactoredEquation> {
        if self.dim == 0 || self.multiplicities.is_empty() || self.multiplicities.contains(&0) {
            return Err(Error::InvalidInput("random instance needs dim > 0 and positive multiplicities".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let rates = self.sample_rates(&mut rng)?;
        let q = match self.family {
            Family::Dense => Some(random_orthogonal(self.dim, &mut rng)),
            Family::Spectral => None,
            Family::Translation => {
                return Err(Error::Unsupported("random translation instances".into()));
            }
        };
        let mut factors = Vec::with_capacity(self.order());
        for (j, (r, &mult)) in rates.iter().zip(&self.multiplicities).enumerate() {
            let label = format!("A{j}");
            let op = match &q {
                Some(q) => {
                    let m = q.matmul(&DenseMatrix::from_diagonal(r))?.matmul(&q.transpose())?;
                    Operator::dense(label, symmetrize(&m))?
                }
                None => Operator::diagonal(label, r.clone())?,
            };
            factors.extend(std::iter::repeat_n(op, mult));
        }
        let initial = (0..self.order())
            .map(|_| StateVector::from_fn(self.dim, |_| rng.gen_range(-1.0..1.0)))
            .collect();
        FactoredEquation::new(factors, initial)
    }
}

fn symmetrize(m: &DenseMatrix) -> DenseMatrix {
    m.add(&m.transpose()).expect("square").scaled(0.5)
}

/// Orthogonal matrix from modified Gram-Schmidt on uniform random columns.
fn random_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    loop {
        let mut cols: Vec<StateVector> = Vec::with_capacity(dim);
        let mut ok = true;
        for _ in 0..dim {
            let mut v = StateVector::from_fn(dim, |_| rng.gen_range(-1.0..1.0));
            for c in &cols {
                let p = v.dot(c);
                v.axpy(-p, c);
            }
            let norm = v.norm2();
            if norm < 1e-3 {
                ok = false;
                break;
            }
            cols.push(v.scaled(1.0 / norm));
        }
        if ok {
            let mut q = DenseMatrix::zeros(dim, dim);
            for (j, c) in cols.iter().enumerate() {
                for i in 0..dim {
                    q[(i, j)] = c[i];
                }
            }
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(label: &str, a: f64) -> Operator {
        Operator::diagonal(label, vec![a]).unwrap()
    }

    fn sv(x: &[f64]) -> StateVector {
        StateVector::from(x)
    }

    #[test]
    fn grouping_examples() {
        let (a, b, c) = (scalar("A", 1.0), scalar("B", 2.0), scalar("C", 3.0));
        let summary = |ops: &[Operator]| -> Vec<(String, usize)> {
            group_factors(ops)
                .unwrap()
                .iter()
                .map(|g| (g.operator.label().to_string(), g.multiplicity))
                .collect()
        };
        assert_eq!(
            summary(&[a.clone(), a.clone(), b.clone(), b.clone(), c.clone()]),
            vec![("A".into(), 2), ("B".into(), 2), ("C".into(), 1)]
        );
        assert_eq!(summary(&[a.clone()]), vec![("A".into(), 1)]);
        assert_eq!(
            summary(&[b.clone(), a.clone(), b.clone()]),
            vec![("B".into(), 2), ("A".into(), 1)]
        );
    }

    #[test]
    fn grouping_errors() {
        assert!(group_factors(&[]).is_err());
        let d = Operator::dense("D", DenseMatrix::identity(1)).unwrap();
        assert!(matches!(
            group_factors(&[scalar("A", 1.0), d]),
            Err(Error::MixedBackend { .. })
        ));
        assert_eq!(
            group_factors(&[scalar("A", 1.0), scalar("A", 2.0)]).unwrap_err(),
            Error::LabelConflict("A".into())
        );
    }

    #[test]
    fn equation_validation() {
        let a = scalar("A", 1.0);
        assert!(FactoredEquation::new(vec![a.clone()], vec![]).is_err());
        assert!(FactoredEquation::new(vec![a.clone()], vec![sv(&[1.0, 2.0])]).is_err());
        let many = vec![a.clone(); 31];
        assert_eq!(
            FactoredEquation::new(many, vec![sv(&[0.0]); 31]).unwrap_err(),
            Error::TooManyFactors(31)
        );
    }

    #[test]
    fn non_commuting_pair_rejected() {
        let a = Operator::dense("A", DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap()).unwrap();
        let b = Operator::dense("B", DenseMatrix::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap()).unwrap();
        let err = FactoredEquation::new(vec![a, b], vec![StateVector::zeros(2); 2]).unwrap_err();
        match err {
            Error::NonCommuting { a, b, defect, .. } => {
                assert_eq!((a.as_str(), b.as_str()), ("A", "B"));
                assert!(defect > 0.1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn transform_first_entry_is_x0() {
        let eq = FactoredEquation::new(vec![scalar("A", 3.0)], vec![sv(&[1.5])]).unwrap();
        assert_eq!(initial_data_transform(&eq).unwrap(), vec![sv(&[1.5])]);
    }

    #[test]
    fn transform_repeated_operator_is_binomial() {
        // all factors equal a: u_m* = Σ_k (−1)^k C(m−1,k) a^k x_{m−1−k}
        let a = 0.7;
        let x = [1.0, -0.5, 2.0, 0.25, -1.0];
        let eq = FactoredEquation::new(vec![scalar("A", a); 5], x.iter().map(|&v| sv(&[v])).collect()).unwrap();
        let u = initial_data_transform(&eq).unwrap();
        let binom = |n: usize, k: usize| (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64);
        for m in 1..=5 {
            let expected: f64 = (0..m)
                .map(|k| (-1f64).powi(k as i32) * binom(m - 1, k) * a.powi(k as i32) * x[m - 1 - k])
                .sum();
            assert!((u[m - 1][0] - expected).abs() < 1e-13);
        }
    }

    #[test]
    fn transform_matches_derivative_shift_route() {
        // Independent route: applying (d/dt − A) maps the derivative sequence
        // (w_0, w_1, …) at t = 0 to (w_1 − A w_0, w_2 − A w_1, …).
        let ops = [
            Operator::diagonal("A", vec![0.5, -1.0, 2.0]).unwrap(),
            Operator::diagonal("B", vec![1.5, 0.3, -0.7]).unwrap(),
            Operator::diagonal("A", vec![0.5, -1.0, 2.0]).unwrap(),
            Operator::diagonal("C", vec![-2.0, 0.1, 0.9]).unwrap(),
        ];
        let x: Vec<StateVector> = (0..4)
            .map(|k| StateVector::from_fn(3, |i| ((k * 3 + i) as f64 * 0.37).cos()))
            .collect();
        let eq = FactoredEquation::new(ops.to_vec(), x.clone()).unwrap();
        let u = initial_data_transform(&eq).unwrap();
        let mut seq = x;
        for m in 0..4 {
            assert!(u[m].rel_diff(&seq[0], 1.0) < 1e-14, "m = {m}");
            seq = (0..seq.len() - 1)
                .map(|j| &seq[j + 1] - &ops[m].apply(&seq[j]).unwrap())
                .collect();
            if seq.is_empty() {
                break;
            }
        }
    }

    #[test]
    fn companion_single_factor() {
        let eq = FactoredEquation::new(vec![scalar("A", -2.0)], vec![sv(&[4.0])]).unwrap();
        let c = build_companion(&eq).unwrap();
        assert_eq!(c.to_dense().unwrap(), DenseMatrix::from_rows(&[vec![-2.0]]).unwrap());
        assert_eq!(c.initial(), &[sv(&[4.0])]);
    }

    #[test]
    fn companion_two_scalar_factors() {
        let eq = FactoredEquation::new(
            vec![scalar("a", 1.0), scalar("b", 2.0)],
            vec![sv(&[0.3]), sv(&[1.1])],
        )
        .unwrap();
        let c = build_companion(&eq).unwrap();
        assert_eq!(
            c.to_dense().unwrap(),
            DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 2.0]]).unwrap()
        );
        assert!((c.initial()[1][0] - (1.1 - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn companion_order_follows_factor_list() {
        let (a, b, c) = (scalar("A", 1.0), scalar("B", 2.0), scalar("C", 3.0));
        let eq = FactoredEquation::new(
            vec![c.clone(), b.clone(), b.clone(), a.clone(), a.clone()],
            vec![sv(&[0.0]); 5],
        )
        .unwrap();
        let sys = build_companion(&eq).unwrap();
        assert_eq!(sys.diagonal_labels(), vec!["C", "B", "B", "A", "A"]);
        let mut forced = sys.clone();
        forced.forcing = Some(Forcing::new(|_| sv(&[1.0])));
        let r = forced.rhs(0.0, &StateVector::zeros(5)).unwrap();
        assert_eq!(r.as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn oracle_double_root_at_zero() {
        let z = scalar("Z", 0.0);
        let eq = FactoredEquation::new(vec![z.clone(), z], vec![sv(&[0.0]), sv(&[1.0])]).unwrap();
        let grid = [0.0, 0.3, 1.0, 1.7];
        let trace = oracle_solve(&eq, &grid, 100).unwrap();
        for (t, u) in trace.times.iter().zip(&trace.values) {
            assert!((u[0] - t).abs() < 1e-10);
        }
    }

    #[test]
    fn oracle_cosh() {
        let eq = FactoredEquation::new(
            vec![scalar("P", 1.0), scalar("M", -1.0)],
            vec![sv(&[1.0]), sv(&[0.0])],
        )
        .unwrap();
        let trace = oracle_solve(&eq, &[1.0], DEFAULT_STEPS_PER_UNIT).unwrap();
        assert!((trace.values[0][0] - 1f64.cosh()).abs() < 1e-8);
    }

    #[test]
    fn oracle_forced_integration() {
        let eq = FactoredEquation::new(vec![scalar("Z", 0.0)], vec![sv(&[0.0])])
            .unwrap()
            .with_forcing(Forcing::new(|_| sv(&[1.0])));
        let trace = oracle_solve(&eq, &[0.5, 2.0], 10).unwrap();
        assert!((trace.values[0][0] - 0.5).abs() < 1e-12);
        assert!((trace.values[1][0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn oracle_rejects_translation() {
        use crate::operators::{Boundary, Grid1d};
        let op = Operator::translation("T", 1.0, Grid1d::periodic(0.0, 1.0, 8), Boundary::Periodic).unwrap();
        let eq = FactoredEquation::new(vec![op], vec![StateVector::zeros(8)]).unwrap();
        assert!(matches!(oracle_solve(&eq, &[1.0], 10), Err(Error::Unsupported(_))));
    }

    #[test]
    fn permutation_rejects_invalid() {
        let a = scalar("A", 1.0);
        let eq = FactoredEquation::new(vec![a.clone(), a], vec![sv(&[0.0]); 2]).unwrap();
        assert!(eq.permuted(&[0, 0]).is_err());
        assert!(eq.permuted(&[1, 0]).is_ok());
    }

    #[test]
    fn random_instances_are_reproducible() {
        for family in [Family::Spectral, Family::Dense] {
            let spec = RandomInstance::new(family, 4, vec![2, 1, 2], 11);
            let a = spec.build().unwrap();
            let b = spec.build().unwrap();
            assert_eq!(a.order(), 5);
            assert_eq!(a.groups().len(), 3);
            assert_eq!(a.initial_data(), b.initial_data());
            assert_eq!(a.factors()[4].to_matrix().unwrap(), b.factors()[4].to_matrix().unwrap());
            let c = RandomInstance { seed: 12, ..spec }.build().unwrap();
            assert_ne!(a.initial_data(), c.initial_data());
        }
    }

    #[test]
    fn random_dense_instance_rates() {
        let eq = RandomInstance::new(Family::Dense, 3, vec![1, 1], 5).build().unwrap();
        let m = eq.factors()[0].to_matrix().unwrap();
        assert!(m.is_symmetric(1e-14));
        let eig = crate::statespace::SymmetricDecomposition::new(&m);
        assert!(eig.eigenvalues().iter().all(|l| (-1.5..1.0).contains(l)));
        let bad = RandomInstance { rate_range: (0.0, 0.1), ..RandomInstance::new(Family::Spectral, 2, vec![1, 1], 0) };
        assert!(bad.build().is_err());
    }
}
