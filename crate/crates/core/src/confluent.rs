//! The confluent operator-Vandermonde matrix `M_n` and the coefficient solves
//! `M_n y = x` (initial data) and `M_n z = (0, …, 0, I)ᵀ` (forcing weights).
//!
//! Column `k` of the block owned by `Bⱼ` holds `C(r, k) Bⱼ^{r−k}` in row `r`
//! (zero above the diagonal): the `r`-th derivative at `t = 0` of
//! `tᵏ/k! · T_{Bⱼ}(t)`.
//!
//! A single group gives a block unit lower-triangular `M_n`, solved by forward
//! substitution through operator actions. Otherwise, backends that are diagonal
//! in state coordinates are solved mode by mode with an `n×n` scalar confluent
//! Vandermonde matrix, and everything else assembles the `(n·d)×(n·d)` scalar
//! matrix and factors it once.

use std::fmt;

use crate::equation::{group_factors, FactorGroup, MAX_ORDER};
use crate::error::{Error, Result};
use crate::operators::{resolvent_solve, Operator};
use crate::statespace::{DenseMatrix, LuFactors, StateVector};

/// `C(n, k)` in exact integer arithmetic, for `n ≤ MAX_ORDER`.
pub fn binomial(n: usize, k: usize) -> u64 {
    assert!(n <= MAX_ORDER, "binomial({n}, {k}) exceeds the supported order");
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// `coefficient · label^power`; power zero is the identity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Term {
    pub coefficient: u64,
    pub power: u32,
    pub label: String,
}

/// Sum of [`Term`]s; the empty sum is the zero operator.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OperatorPolynomial {
    pub terms: Vec<Term>,
}

impl OperatorPolynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(coefficient: u64, power: u32, label: &str) -> Self {
        Self {
            terms: vec![Term {
                coefficient,
                power,
                label: label.to_string(),
            }],
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| t.coefficient == 0)
    }

    /// Applies the polynomial with `op` substituted for every label.
    fn apply_with(&self, op: &Operator, v: &StateVector) -> Result<StateVector> {
        let mut out = StateVector::zeros(v.dim());
        for term in &self.terms {
            out.axpy(term.coefficient as f64, &op.apply_power(term.power, v)?);
        }
        Ok(out)
    }

    fn eval_scalar(&self, rate: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coefficient as f64 * rate.powi(t.power as i32))
            .sum()
    }
}

impl fmt::Display for OperatorPolynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let terms: Vec<&Term> = self.terms.iter().filter(|t| t.coefficient != 0).collect();
        if terms.is_empty() {
            return f.write_str("0");
        }
        for (i, t) in terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            match (t.coefficient, t.power) {
                (1, 0) => f.write_str("I")?,
                (c, 0) => write!(f, "{c}I")?,
                (1, 1) => f.write_str(&t.label)?,
                (c, 1) => write!(f, "{c}{}", t.label)?,
                (1, p) => write!(f, "{}^{p}", t.label)?,
                (c, p) => write!(f, "{c}{}^{p}", t.label)?,
            }
        }
        Ok(())
    }
}

/// `M_n = [(B₁)_{S₁} (B₂)_{S₂} ⋯]` with symbolic entries.
#[derive(Debug, Clone)]
pub struct BlockOperatorMatrix {
    groups: Vec<FactorGroup>,
    entries: Vec<Vec<OperatorPolynomial>>,
}

/// Builds `M_n` from the grouped factors.
pub fn build_confluent_matrix(groups: &[FactorGroup]) -> Result<BlockOperatorMatrix> {
    let n: usize = groups.iter().map(|g| g.multiplicity).sum();
    if n == 0 || groups.iter().any(|g| g.multiplicity == 0) {
        return Err(Error::InvalidInput("every group needs a positive multiplicity".into()));
    }
    if n > MAX_ORDER {
        return Err(Error::TooManyFactors(n));
    }
    let mut entries = vec![vec![OperatorPolynomial::zero(); n]; n];
    let mut col = 0;
    for g in groups {
        for k in 0..g.multiplicity {
            for (r, row) in entries.iter_mut().enumerate().skip(k) {
                row[col] = OperatorPolynomial::monomial(
                    binomial(r, k),
                    (r - k) as u32,
                    g.operator.label(),
                );
            }
            col += 1;
        }
    }
    Ok(BlockOperatorMatrix {
        groups: groups.to_vec(),
        entries,
    })
}

/// Groups the factor list and builds `M_n`.
pub fn confluent_matrix_for(factors: &[Operator]) -> Result<BlockOperatorMatrix> {
    build_confluent_matrix(&group_factors(factors)?)
}

impl BlockOperatorMatrix {
    pub fn order(&self) -> usize {
        self.entries.len()
    }

    pub fn dim(&self) -> usize {
        self.groups[0].operator.dim()
    }

    pub fn groups(&self) -> &[FactorGroup] {
        &self.groups
    }

    pub fn entry(&self, row: usize, col: usize) -> &OperatorPolynomial {
        &self.entries[row][col]
    }

    /// Index of the first coefficient belonging to each group.
    pub fn offsets(&self) -> Vec<usize> {
        self.groups
            .iter()
            .scan(0, |acc, g| {
                let start = *acc;
                *acc += g.multiplicity;
                Some(start)
            })
            .collect()
    }

    /// Group index owning each column.
    fn column_groups(&self) -> Vec<usize> {
        self.groups
            .iter()
            .enumerate()
            .flat_map(|(j, g)| std::iter::repeat_n(j, g.multiplicity))
            .collect()
    }

    /// Entry strings such as `I`, `0`, `3B^2`.
    pub fn render(&self) -> Vec<Vec<String>> {
        self.entries
            .iter()
            .map(|row| row.iter().map(ToString::to_string).collect())
            .collect()
    }

    /// `M · coeffs` evaluated through operator actions.
    pub fn apply(&self, coeffs: &[StateVector]) -> Result<Vec<StateVector>> {
        let n = self.order();
        if coeffs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: coeffs.len(),
            });
        }
        let owners = self.column_groups();
        (0..n)
            .map(|r| {
                let mut acc = StateVector::zeros(self.dim());
                for c in 0..n {
                    let e = &self.entries[r][c];
                    if !e.is_zero() {
                        acc.axpy(1.0, &e.apply_with(&self.groups[owners[c]].operator, &coeffs[c])?);
                    }
                }
                Ok(acc)
            })
            .collect()
    }

    /// The scalar confluent Vandermonde matrix at one mode.
    pub fn scalar_matrix(&self, rates: &[f64]) -> DenseMatrix {
        let n = self.order();
        let owners = self.column_groups();
        let mut m = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                m[(r, c)] = self.entries[r][c].eval_scalar(rates[owners[c]]);
            }
        }
        m
    }

    /// The `(n·d)×(n·d)` scalar matrix.
    pub fn assemble_dense(&self) -> Result<DenseMatrix> {
        let n = self.order();
        let d = self.dim();
        let owners = self.column_groups();
        // powers[j][p] = B_j^p
        let mut powers = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let b = g.operator.to_matrix()?;
            let mut list = vec![DenseMatrix::identity(d)];
            for p in 1..n {
                let next = list[p - 1].matmul(&b)?;
                list.push(next);
            }
            powers.push(list);
        }
        let mut m = DenseMatrix::zeros(n * d, n * d);
        for r in 0..n {
            for c in 0..n {
                for term in &self.entries[r][c].terms {
                    let p = &powers[owners[c]][term.power as usize];
                    let coeff = term.coefficient as f64;
                    for i in 0..d {
                        for j in 0..d {
                            m[(r * d + i, c * d + j)] += coeff * p[(i, j)];
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    fn modal_rates(&self) -> Option<Vec<Vec<f64>>> {
        self.groups.iter().map(|g| g.operator.modal_rates()).collect()
    }
}

/// `y⃗ = (y(n,0), …, y(n,n−1))`, laid out group by group.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientVector {
    pub entries: Vec<StateVector>,
}

impl CoefficientVector {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One `Z(n,k)`: a linear map applied to forcing samples.
#[derive(Debug, Clone, PartialEq)]
pub enum ZOperator {
    /// A multiple of the identity.
    Scalar(f64),
    /// Per-mode multipliers.
    Modal(Vec<f64>),
    Dense(DenseMatrix),
}

impl ZOperator {
    pub fn apply(&self, v: &StateVector) -> Result<StateVector> {
        match self {
            ZOperator::Scalar(c) => Ok(v.scaled(*c)),
            ZOperator::Modal(w) => {
                v.expect_dim(w.len())?;
                Ok(StateVector::from_fn(w.len(), |k| w[k] * v[k]))
            }
            ZOperator::Dense(m) => m.mul_vec(v),
        }
    }

    pub fn to_matrix(&self, dim: usize) -> DenseMatrix {
        match self {
            ZOperator::Scalar(c) => DenseMatrix::identity(dim).scaled(*c),
            ZOperator::Modal(w) => DenseMatrix::from_diagonal(w),
            ZOperator::Dense(m) => m.clone(),
        }
    }
}

/// `z⃗ = (Z(n,0), …, Z(n,n−1))`.
#[derive(Debug, Clone, PartialEq)]
pub struct ZVector {
    pub entries: Vec<ZOperator>,
}

#[derive(Debug, Clone)]
enum Factorization {
    /// One group: `M` is block unit lower triangular.
    Triangular,
    Modal(Vec<LuFactors>),
    Dense(LuFactors),
}

/// `M_n` together with its numeric factorization.
#[derive(Debug, Clone)]
pub struct ConfluentSolver {
    matrix: BlockOperatorMatrix,
    factorization: Factorization,
}

impl ConfluentSolver {
    pub fn new(matrix: BlockOperatorMatrix) -> Result<Self> {
        let factorization = match matrix.modal_rates() {
            _ if matrix.groups.len() == 1 => Factorization::Triangular,
            Some(rates) => {
                let modes = matrix.dim();
                let mut per_mode = Vec::with_capacity(modes);
                for m in 0..modes {
                    let at_mode: Vec<f64> = rates.iter().map(|r| r[m]).collect();
                    let lu = matrix
                        .scalar_matrix(&at_mode)
                        .lu()
                        .map_err(|_| singular_modal(&matrix, &at_mode, m))?;
                    per_mode.push(lu);
                }
                Factorization::Modal(per_mode)
            }
            None => {
                let lu = matrix
                    .assemble_dense()?
                    .lu()
                    .map_err(|e| singular_dense(&matrix, e))?;
                Factorization::Dense(lu)
            }
        };
        Ok(Self {
            matrix,
            factorization,
        })
    }

    pub fn matrix(&self) -> &BlockOperatorMatrix {
        &self.matrix
    }

    pub fn is_modal(&self) -> bool {
        matches!(self.factorization, Factorization::Modal(_))
    }

    /// Solves `M y = rhs` for block right-hand sides.
    pub fn solve(&self, rhs: &[StateVector]) -> Result<CoefficientVector> {
        let n = self.matrix.order();
        let d = self.matrix.dim();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        for v in rhs {
            v.expect_dim(d)?;
        }
        let entries = match &self.factorization {
            Factorization::Triangular => {
                // y_r = x_r − Σ_{k<r} C(r,k) B^{r−k} y_k
                let b = &self.matrix.groups[0].operator;
                let mut out: Vec<StateVector> = Vec::with_capacity(n);
                for (r, x) in rhs.iter().enumerate() {
                    let mut y = x.clone();
                    for (k, yk) in out.iter().enumerate() {
                        y.axpy(-(binomial(r, k) as f64), &b.apply_power((r - k) as u32, yk)?);
                    }
                    out.push(y);
                }
                out
            }
            Factorization::Modal(per_mode) => {
                let mut out = vec![StateVector::zeros(d); n];
                for (m, lu) in per_mode.iter().enumerate() {
                    let y = lu.solve(&StateVector::from_fn(n, |r| rhs[r][m]))?;
                    for (k, slot) in out.iter_mut().enumerate() {
                        slot[m] = y[k];
                    }
                }
                out
            }
            Factorization::Dense(lu) => {
                let stacked = StateVector::new(rhs.iter().flat_map(|v| v.iter().copied()).collect());
                let y = lu.solve(&stacked)?;
                (0..n)
                    .map(|k| StateVector::from(&y.as_slice()[k * d..(k + 1) * d]))
                    .collect()
            }
        };
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("confluent coefficients".into()));
        }
        Ok(CoefficientVector { entries })
    }

    /// Solves `M z = (0, …, 0, I)ᵀ`.
    pub fn z_vector(&self) -> Result<ZVector> {
        let n = self.matrix.order();
        let d = self.matrix.dim();
        let entries = match &self.factorization {
            Factorization::Triangular => (0..n)
                .map(|k| ZOperator::Scalar(if k == n - 1 { 1.0 } else { 0.0 }))
                .collect(),
            Factorization::Modal(per_mode) => {
                let mut weights = vec![vec![0.0; d]; n];
                for (m, lu) in per_mode.iter().enumerate() {
                    let z = lu.solve(&StateVector::basis(n, n - 1))?;
                    for k in 0..n {
                        weights[k][m] = z[k];
                    }
                }
                weights.into_iter().map(ZOperator::Modal).collect()
            }
            Factorization::Dense(lu) => {
                let mut mats = vec![DenseMatrix::zeros(d, d); n];
                for col in 0..d {
                    let z = lu.solve(&StateVector::basis(n * d, (n - 1) * d + col))?;
                    for (k, mat) in mats.iter_mut().enumerate() {
                        for r in 0..d {
                            mat[(r, col)] = z[k * d + r];
                        }
                    }
                }
                mats.into_iter().map(ZOperator::Dense).collect()
            }
        };
        Ok(ZVector { entries })
    }
}

fn singular_modal(matrix: &BlockOperatorMatrix, rates: &[f64], mode: usize) -> Error {
    let groups = matrix.groups();
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let scale = rates[i].abs().max(rates[j].abs()).max(1.0);
            if (rates[i] - rates[j]).abs() <= 1e-12 * scale {
                pairs.push(format!(
                    "`{}` and `{}`",
                    groups[i].operator.label(),
                    groups[j].operator.label()
                ));
            }
        }
    }
    let detail = if pairs.is_empty() {
        format!("per-mode matrix at mode {mode} is numerically singular")
    } else {
        format!(
            "operators {} coincide at mode {mode}; distinct labels must have an injective difference",
            pairs.join(", ")
        )
    };
    Error::SingularSystem { detail }
}

fn singular_dense(matrix: &BlockOperatorMatrix, cause: Error) -> Error {
    let groups = matrix.groups();
    let mut pairs = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let diff = groups[i]
                .operator
                .to_matrix()
                .and_then(|a| a.sub(&groups[j].operator.to_matrix()?));
            if let Ok(diff) = diff {
                if diff.lu().is_err() {
                    pairs.push(format!(
                        "`{}` - `{}`",
                        groups[i].operator.label(),
                        groups[j].operator.label()
                    ));
                }
            }
        }
    }
    let detail = if pairs.is_empty() {
        format!("assembled matrix is singular ({cause})")
    } else {
        format!("{} not injective ({cause})", pairs.join(", "))
    };
    Error::SingularSystem { detail }
}

/// Solves `M y = x`.
pub fn solve_coefficients(matrix: &BlockOperatorMatrix, x: &[StateVector]) -> Result<CoefficientVector> {
    ConfluentSolver::new(matrix.clone())?.solve(x)
}

/// Solves `M z = (0, …, 0, I)ᵀ`.
pub fn solve_z_vector(matrix: &BlockOperatorMatrix) -> Result<ZVector> {
    ConfluentSolver::new(matrix.clone())?.z_vector()
}

/// Coefficients for `(d/dt − B)(d/dt − A)^{n−1} u = 0` from those of the inner
/// `(d/dt − A)^{n−1}` problem, using iterated resolvents of `A − B`.
///
/// `prev` holds `y(n−1, 0..n−2)` of the inner solution; `u1_star` is `u(0)`.
/// The result is laid out as the grouping `[(B, 1), (A, n−1)]`: entry 0 is
/// the `T_B` coefficient, entry `m ≥ 1` the `t^{m−1}/(m−1)! T_A` coefficient.
pub fn two_operator_closed_form(
    a: &Operator,
    b: &Operator,
    n: usize,
    u1_star: &StateVector,
    prev: &CoefficientVector,
) -> Result<CoefficientVector> {
    if n < 2 || prev.len() != n - 1 {
        return Err(Error::InvalidInput(format!(
            "order {n} needs {} inner coefficients, got {}",
            n.saturating_sub(1),
            prev.len()
        )));
    }
    // y(n,m) = (A−B)^{-1} (prev[m−1] − y(n,m+1)), y(n,n) = 0
    let mut tail = vec![StateVector::zeros(u1_star.dim()); n];
    let mut next = StateVector::zeros(u1_star.dim());
    for m in (1..n).rev() {
        let y = resolvent_solve(a, b, &(&prev.entries[m - 1] - &next))?;
        tail[m] = y.clone();
        next = y;
    }
    tail[0] = u1_star - &tail[1];
    Ok(CoefficientVector { entries: tail })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(label: &str, a: f64) -> Operator {
        Operator::diagonal(label, vec![a]).unwrap()
    }

    fn group(op: &Operator, m: usize) -> FactorGroup {
        FactorGroup {
            operator: op.clone(),
            multiplicity: m,
        }
    }

    fn sv(x: &[f64]) -> StateVector {
        StateVector::from(x)
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(0, 0), 1);
        assert_eq!(binomial(4, 2), 6);
        assert_eq!(binomial(29, 14), 77558760);
        assert_eq!(binomial(30, 15), 155117520);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn single_operator_matrix() {
        let a = scalar("A", 2.0);
        let m = build_confluent_matrix(&[group(&a, 1)]).unwrap();
        assert_eq!(m.render(), vec![vec!["I".to_string()]]);
        let m = build_confluent_matrix(&[group(&a, 4)]).unwrap();
        assert_eq!(
            m.render(),
            vec![
                vec!["I", "0", "0", "0"],
                vec!["A", "I", "0", "0"],
                vec!["A^2", "2A", "I", "0"],
                vec!["A^3", "3A^2", "3A", "I"],
            ]
        );
    }

    #[test]
    fn rejects_large_orders() {
        let a = scalar("A", 2.0);
        assert_eq!(
            build_confluent_matrix(&[group(&a, 31)]).unwrap_err(),
            Error::TooManyFactors(31)
        );
    }

    #[test]
    fn all_equal_two_by_two() {
        let a = scalar("A", 1.5);
        let m = build_confluent_matrix(&[group(&a, 2)]).unwrap();
        let y = solve_coefficients(&m, &[sv(&[2.0]), sv(&[1.0])]).unwrap();
        assert_eq!(y.entries[0][0], 2.0);
        assert!((y.entries[1][0] - (1.0 - 1.5 * 2.0)).abs() < 1e-15);
    }

    #[test]
    fn distinct_pair_gives_cosh_coefficients() {
        let m = build_confluent_matrix(&[group(&scalar("a", 1.0), 1), group(&scalar("b", -1.0), 1)]).unwrap();
        let y = solve_coefficients(&m, &[sv(&[1.0]), sv(&[0.0])]).unwrap();
        assert!((y.entries[0][0] - 0.5).abs() < 1e-15);
        assert!((y.entries[1][0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn z_vector_small_cases() {
        let a = scalar("A", 0.4);
        let z = solve_z_vector(&build_confluent_matrix(&[group(&a, 1)]).unwrap()).unwrap();
        assert_eq!(z.entries, vec![ZOperator::Scalar(1.0)]);
        let z = solve_z_vector(&build_confluent_matrix(&[group(&a, 2)]).unwrap()).unwrap();
        assert_eq!(z.entries, vec![ZOperator::Scalar(0.0), ZOperator::Scalar(1.0)]);
        let m = build_confluent_matrix(&[group(&scalar("a", 0.0), 1), group(&scalar("b", 1.0), 1)]).unwrap();
        let z = solve_z_vector(&m).unwrap();
        assert_eq!(z.entries, vec![ZOperator::Modal(vec![-1.0]), ZOperator::Modal(vec![1.0])]);
    }

    #[test]
    fn single_group_substitution_matches_assembled_lu() {
        let m = DenseMatrix::from_rows(&[vec![0.5, 1.0], vec![-0.3, 0.2]]).unwrap();
        let b = Operator::dense("B", m).unwrap();
        let cm = build_confluent_matrix(&[group(&b, 4)]).unwrap();
        let x: Vec<StateVector> = (0..4).map(|k| sv(&[1.0 + k as f64, -0.5 * k as f64])).collect();
        let y = solve_coefficients(&cm, &x).unwrap();
        let direct = cm
            .assemble_dense()
            .unwrap()
            .lu()
            .unwrap()
            .solve(&StateVector::new(x.iter().flat_map(|v| v.iter().copied()).collect()))
            .unwrap();
        for k in 0..4 {
            let dk = StateVector::from(&direct.as_slice()[2 * k..2 * k + 2]);
            assert!((&y.entries[k] - &dk).norm_inf() < 1e-12);
        }
        assert_eq!(y.entries[0], x[0]);
    }

    #[test]
    fn coincident_distinct_labels_are_singular() {
        let m = build_confluent_matrix(&[group(&scalar("A", 1.0), 1), group(&scalar("B", 1.0), 1)]).unwrap();
        match solve_coefficients(&m, &[sv(&[1.0]), sv(&[0.0])]).unwrap_err() {
            Error::SingularSystem { detail } => assert!(detail.contains("`A` and `B`"), "{detail}"),
            other => panic!("unexpected {other:?}"),
        }
        let d1 = Operator::dense("P", DenseMatrix::from_rows(&[vec![1.0, 1.0], vec![0.0, 1.0]]).unwrap()).unwrap();
        let d2 = Operator::new("Q", d1.backend().clone());
        let m = build_confluent_matrix(&[group(&d1, 1), group(&d2, 1)]).unwrap();
        match solve_z_vector(&m).unwrap_err() {
            Error::SingularSystem { detail } => assert!(detail.contains("`P` - `Q`"), "{detail}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn dense_and_modal_paths_agree() {
        let rates = [[0.5, -1.0, 2.0], [1.5, 0.25, -0.5], [-1.0, 1.0, 0.75]];
        let spectral: Vec<Operator> = rates
            .iter()
            .enumerate()
            .map(|(i, r)| Operator::diagonal(format!("S{i}"), r.to_vec()).unwrap())
            .collect();
        // a rotation keeps the dense operators off the modal path
        let (c, s) = (0.6f64, 0.8f64);
        let q = DenseMatrix::from_rows(&[vec![c, -s, 0.0], vec![s, c, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        let dense: Vec<Operator> = rates
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let m = q.transpose().matmul(&DenseMatrix::from_diagonal(r)).unwrap().matmul(&q).unwrap();
                Operator::dense(format!("D{i}"), m).unwrap()
            })
            .collect();
        let mult = [2, 1, 2];
        let x: Vec<StateVector> = (0..5).map(|k| StateVector::from_fn(3, |i| 1.0 / (1 + k + i) as f64)).collect();
        let ms = build_confluent_matrix(&spectral.iter().zip(mult).map(|(o, m)| group(o, m)).collect::<Vec<_>>()).unwrap();
        let md = build_confluent_matrix(&dense.iter().zip(mult).map(|(o, m)| group(o, m)).collect::<Vec<_>>()).unwrap();
        assert!(ConfluentSolver::new(ms.clone()).unwrap().is_modal());
        assert!(!ConfluentSolver::new(md.clone()).unwrap().is_modal());
        let ys = solve_coefficients(&ms, &x).unwrap();
        let xq: Vec<StateVector> = x.iter().map(|v| q.transpose().mul_vec(v).unwrap()).collect();
        let yd = solve_coefficients(&md, &xq).unwrap();
        for (a, b) in ys.entries.iter().zip(&yd.entries) {
            let b_back = q.mul_vec(b).unwrap();
            assert!(a.rel_diff(&b_back, 1.0) < 1e-10);
        }
        for (m, y, rhs) in [(&ms, &ys, &x), (&md, &yd, &xq)] {
            let back = m.apply(&y.entries).unwrap();
            for (r, b) in back.iter().zip(rhs.iter()) {
                assert!((r - b).norm_inf() <= 1e-9 * (1.0 + b.norm_inf()));
            }
        }
    }

    /// `|det|` of the scalar confluent Vandermonde matrix with `1/k!`-scaled
    /// derivative columns is `∏_{j<k} |λ_j − λ_k|^{S_j S_k}`.
    #[test]
    fn scalar_determinant_formula() {
        let cases: [(&[f64], &[usize]); 4] = [
            (&[0.5, -1.0], &[2, 3]),
            (&[1.0, 2.0, 3.0], &[1, 2, 2]),
            (&[0.3], &[5]),
            (&[-0.7, 0.2, 1.1, 2.5, -2.0], &[1, 1, 1, 1, 1]),
        ];
        for (nodes, mult) in cases {
            let groups: Vec<FactorGroup> = nodes
                .iter()
                .zip(mult)
                .enumerate()
                .map(|(i, (&l, &m))| group(&scalar(&format!("L{i}"), l), m))
                .collect();
            let m = build_confluent_matrix(&groups).unwrap();
            let det = m.scalar_matrix(nodes).determinant().unwrap().abs();
            let mut expected = 1.0;
            for j in 0..nodes.len() {
                for k in j + 1..nodes.len() {
                    expected *= (nodes[j] - nodes[k]).abs().powi((mult[j] * mult[k]) as i32);
                }
            }
            assert!((det - expected).abs() <= 1e-10 * expected, "{det} vs {expected}");
        }
    }

    #[test]
    fn two_operator_n2_matches_hand_formula() {
        let (a, b) = (scalar("A", 3.0), scalar("B", 1.0));
        let (x0, u2) = (sv(&[0.7]), sv(&[1.6]));
        let y = two_operator_closed_form(&a, &b, 2, &x0, &CoefficientVector { entries: vec![u2.clone()] }).unwrap();
        let r = 1.6 / (3.0 - 1.0);
        assert!((y.entries[0][0] - (0.7 - r)).abs() < 1e-15);
        assert!((y.entries[1][0] - r).abs() < 1e-15);
    }

    #[test]
    fn two_operator_zero_propagation() {
        let a = Operator::diagonal("A", vec![3.0, 4.0]).unwrap();
        let b = Operator::diagonal("B", vec![1.0, 2.0]).unwrap();
        let u1 = sv(&[0.5, -0.25]);
        let prev = CoefficientVector { entries: vec![StateVector::zeros(2); 3] };
        let y = two_operator_closed_form(&a, &b, 4, &u1, &prev).unwrap();
        assert_eq!(y.entries[0], u1);
        assert!(y.entries[1..].iter().all(StateVector::is_zero));
    }

    #[test]
    fn two_operator_propagates_resolvent_errors() {
        let a = scalar("A", 1.0);
        let prev = CoefficientVector { entries: vec![sv(&[1.0])] };
        assert!(matches!(
            two_operator_closed_form(&a, &a, 2, &sv(&[0.0]), &prev),
            Err(Error::NotInvertible { .. })
        ));
        assert!(two_operator_closed_form(&a, &a, 3, &sv(&[0.0]), &prev).is_err());
    }
}
