use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    CompositeSimpson,
    GaussLegendre,
}

/// Composite rule on equal panels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub panels: usize,
    pub nodes_per_panel: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self {
            kind: QuadratureKind::GaussLegendre,
            panels: 16,
            nodes_per_panel: 8,
        }
    }
}

impl QuadratureRule {
    pub fn gauss_legendre(panels: usize, nodes_per_panel: usize) -> Result<Self> {
        let rule = Self {
            kind: QuadratureKind::GaussLegendre,
            panels,
            nodes_per_panel,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn simpson(panels: usize) -> Result<Self> {
        let rule = Self {
            kind: QuadratureKind::CompositeSimpson,
            panels,
            nodes_per_panel: 3,
        };
        rule.validate()?;
        Ok(rule)
    }

    pub fn validate(&self) -> Result<()> {
        if self.panels == 0 {
            return Err(Error::InvalidInput("quadrature needs at least one panel".into()));
        }
        match self.kind {
            QuadratureKind::CompositeSimpson if self.nodes_per_panel != 3 => Err(Error::InvalidInput(
                "composite Simpson uses exactly 3 nodes per panel".into(),
            )),
            QuadratureKind::GaussLegendre if !(1..=64).contains(&self.nodes_per_panel) => Err(
                Error::InvalidInput("Gauss-Legendre supports 1..=64 nodes per panel".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        match self.kind {
            QuadratureKind::CompositeSimpson => 3,
            QuadratureKind::GaussLegendre => 2 * self.nodes_per_panel - 1,
        }
    }

    /// Asymptotic convergence order in the panel width.
    pub fn order(&self) -> usize {
        self.exact_degree() + 1
    }

    /// The same rule with twice as many panels.
    pub fn refined(&self) -> Self {
        Self {
            panels: self.panels * 2,
            ..*self
        }
    }

    /// Nodes and weights on `[a, b]`.
    pub fn nodes(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let h = (b - a) / self.panels as f64;
        let reference: Vec<(f64, f64)> = match self.kind {
            QuadratureKind::CompositeSimpson => {
                vec![(-1.0, 1.0 / 3.0), (0.0, 4.0 / 3.0), (1.0, 1.0 / 3.0)]
            }
            QuadratureKind::GaussLegendre => gauss_legendre_reference(self.nodes_per_panel),
        };
        let mut out = Vec::with_capacity(self.panels * reference.len());
        for p in 0..self.panels {
            let left = a + p as f64 * h;
            let mid = left + 0.5 * h;
            for &(x, w) in &reference {
                out.push((mid + 0.5 * h * x, 0.5 * h * w));
            }
        }
        out
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.nodes(a, b).into_iter().map(|(x, w)| w * f(x)).sum()
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration on `P_m`.
pub fn gauss_legendre_reference(m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre(m, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(m, x);
        if d != 0.0 {
            dp = d;
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.reverse();
    out
}

/// `(P_m(x), P_m'(x))` from the three-term recurrence.
fn legendre(m: usize, x: f64) -> (f64, f64) {
    if m == 0 {
        return (1.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=m {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let m = m as f64;
    (p1, m * (x * p1 - p0) / (x * x - 1.0))
}
