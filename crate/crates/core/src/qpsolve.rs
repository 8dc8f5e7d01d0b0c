//! Exact solver for strictly convex two-variable QPs with a handful of rows.
//!
//! Problems have the form
//!
//! ```text
//!     minimize    ½ zᵀ H z + fᵀ z
//!     subject to  A z ≤ b
//! ```
//!
//! with `z ∈ ℝ²`, `H ≻ 0` and at most [`MAX_ROWS`] inequality rows. In two
//! dimensions the optimum is pinned by at most two linearly independent
//! active rows, so the solver walks candidate active sets in order of size
//! (none, one row, two rows), solves the equality-constrained KKT system of
//! each and accepts the first candidate that is primal and dual feasible.
//! If none qualifies the feasible set is empty.

use thiserror::Error;

pub const MAX_ROWS: usize = 16;

/// Primal feasibility tolerance, relative to the row scale.
const FEAS_TOL: f64 = 1e-9;
/// Smallest multiplier accepted as nonnegative.
const DUAL_TOL: f64 = -1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("QP is infeasible")]
    Infeasible,
    #[error("numerical breakdown: {0}")]
    Breakdown(String),
}

/// `min ½zᵀHz + fᵀz  s.t.  A z ≤ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub h: [[f64; 2]; 2],
    pub f: [f64; 2],
    pub a: Vec<[f64; 2]>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: [f64; 2],
    /// One multiplier per row of `A`; zero for inactive rows.
    pub lambda: Vec<f64>,
    pub cost: f64,
}

/// KKT residuals of a candidate solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// `‖Hz + f + Aᵀλ‖∞`.
    pub stationarity: f64,
    /// `max(0, max_i (Az − b)_i)`.
    pub primal: f64,
    /// `max(0, −min_i λ_i)`.
    pub dual: f64,
    /// `max_i |λ_i (Az − b)_i|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity
            .max(self.primal)
            .max(self.dual)
            .max(self.complementarity)
    }
}

impl DenseQp {
    pub fn new(h: [[f64; 2]; 2], f: [f64; 2]) -> Self {
        Self {
            h,
            f,
            a: Vec::new(),
            b: Vec::new(),
        }
    }

    /// Appends the row `a·z ≤ b`.
    pub fn push_row(&mut self, a: [f64; 2], b: f64) {
        self.a.push(a);
        self.b.push(b);
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn cost(&self, z: [f64; 2]) -> f64 {
        let hz = mat_vec(&self.h, z);
        0.5 * dot(z, hz) + dot(self.f, z)
    }

    /// Largest violation `max_i (a_i·z − b_i)`, or `-inf` without rows.
    pub fn max_violation(&self, z: [f64; 2]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(a, b)| dot(*a, z) - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn kkt_residuals(&self, sol: &QpSolution) -> KktResiduals {
        let z = sol.z;
        let hz = mat_vec(&self.h, z);
        let mut grad = [hz[0] + self.f[0], hz[1] + self.f[1]];
        let mut primal = 0.0f64;
        let mut dual = 0.0f64;
        let mut comp = 0.0f64;
        for ((a, b), lam) in self.a.iter().zip(&self.b).zip(&sol.lambda) {
            grad[0] += lam * a[0];
            grad[1] += lam * a[1];
            let slack = dot(*a, z) - b;
            primal = primal.max(slack);
            dual = dual.max(-lam);
            comp = comp.max((lam * slack).abs());
        }
        KktResiduals {
            stationarity: grad[0].abs().max(grad[1].abs()),
            primal,
            dual,
            complementarity: comp,
        }
    }

    fn check(&self) -> Result<(), QpError> {
        if self.a.len() != self.b.len() {
            return Err(QpError::Breakdown("row count mismatch".into()));
        }
        if self.a.len() > MAX_ROWS {
            return Err(QpError::Breakdown(format!(
                "{} rows exceed the limit of {MAX_ROWS}",
                self.a.len()
            )));
        }
        let finite = self.h.iter().flatten().all(|v| v.is_finite())
            && self.f.iter().all(|v| v.is_finite())
            && self.a.iter().flatten().all(|v| v.is_finite())
            && self.b.iter().all(|v| v.is_finite());
        if !finite {
            return Err(QpError::Breakdown("non-finite problem data".into()));
        }
        let [[h00, h01], [h10, h11]] = self.h;
        if (h01 - h10).abs() > 1e-12 * (1.0 + h01.abs()) {
            return Err(QpError::Breakdown("H is not symmetric".into()));
        }
        if !(h00 > 0.0 && h00 * h11 - h01 * h10 > 0.0) {
            return Err(QpError::Breakdown("H is not positive definite".into()));
        }
        Ok(())
    }

    fn row_feasible(&self, z: [f64; 2]) -> bool {
        self.a.iter().zip(&self.b).all(|(a, b)| {
            let scale = 1.0 + a[0].abs().max(a[1].abs()) * z[0].abs().max(z[1].abs()) + b.abs();
            dot(*a, z) - b <= FEAS_TOL * scale
        })
    }
}

/// Solves `qp` exactly.
pub fn solve_qp(qp: &DenseQp) -> Result<QpSolution, QpError> {
    qp.check()?;
    let m = qp.rows();
    let mut lambda = vec![0.0; m];

    // Unconstrained minimizer.
    let z = solve2(&qp.h, [-qp.f[0], -qp.f[1]])
        .ok_or_else(|| QpError::Breakdown("singular H".into()))?;
    if qp.row_feasible(z) {
        return Ok(finish(qp, z, lambda));
    }

    // One active row: minimize on the line a·z = b.
    for i in 0..m {
        if let Some((z, lam)) = single_active(qp, i) {
            if lam >= DUAL_TOL && qp.row_feasible(z) {
                lambda[i] = lam.max(0.0);
                return Ok(finish(qp, z, lambda));
            }
        }
    }

    // Two active rows: the vertex where both hold with equality.
    for i in 0..m {
        for j in (i + 1)..m {
            if let Some((z, li, lj)) = pair_active(qp, i, j) {
                if li >= DUAL_TOL && lj >= DUAL_TOL && qp.row_feasible(z) {
                    lambda[i] = li.max(0.0);
                    lambda[j] = lj.max(0.0);
                    return Ok(finish(qp, z, lambda));
                }
            }
        }
    }

    Err(QpError::Infeasible)
}

fn finish(qp: &DenseQp, z: [f64; 2], lambda: Vec<f64>) -> QpSolution {
    QpSolution {
        z,
        cost: qp.cost(z),
        lambda,
    }
}

/// KKT system `[H aᵀ; a 0][z; λ] = [−f; b]` for a single row.
fn single_active(qp: &DenseQp, i: usize) -> Option<([f64; 2], f64)> {
    let a = qp.a[i];
    let b = qp.b[i];
    if a[0] == 0.0 && a[1] == 0.0 {
        return None;
    }
    // z = H⁻¹(−f − λ aᵀ); substitute into a·z = b.
    let z_free = solve2(&qp.h, [-qp.f[0], -qp.f[1]])?;
    let w = solve2(&qp.h, a)?;
    let denom = dot(a, w);
    if denom.abs() < 1e-300 {
        return None;
    }
    let lam = (dot(a, z_free) - b) / denom;
    let z = [z_free[0] - lam * w[0], z_free[1] - lam * w[1]];
    Some((z, lam))
}

/// Vertex of rows `i`, `j` and the multipliers that make it stationary.
fn pair_active(qp: &DenseQp, i: usize, j: usize) -> Option<([f64; 2], f64, f64)> {
    let ai = qp.a[i];
    let aj = qp.a[j];
    let ni = ai[0].abs().max(ai[1].abs());
    let nj = aj[0].abs().max(aj[1].abs());
    let det = ai[0] * aj[1] - ai[1] * aj[0];
    if det.abs() <= 1e-12 * ni * nj || ni == 0.0 || nj == 0.0 {
        return None;
    }
    let z = solve2(&[ai, aj], [qp.b[i], qp.b[j]])?;
    // Hz + f + λi aiᵀ + λj ajᵀ = 0  ⇒  [ai aj]ᵀ-columns system.
    let hz = mat_vec(&qp.h, z);
    let g = [-(hz[0] + qp.f[0]), -(hz[1] + qp.f[1])];
    let cols = [[ai[0], aj[0]], [ai[1], aj[1]]];
    let lam = solve2(&cols, g)?;
    Some((z, lam[0], lam[1]))
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn mat_vec(m: &[[f64; 2]; 2], v: [f64; 2]) -> [f64; 2] {
    [
        m[0][0] * v[0] + m[0][1] * v[1],
        m[1][0] * v[0] + m[1][1] * v[1],
    ]
}

/// Solves the 2×2 system `m x = r` by Cramer's rule.
fn solve2(m: &[[f64; 2]; 2], r: [f64; 2]) -> Option<[f64; 2]> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det == 0.0 || !det.is_finite() {
        return None;
    }
    let x = [
        (r[0] * m[1][1] - m[0][1] * r[1]) / det,
        (m[0][0] * r[1] - r[0] * m[1][0]) / det,
    ];
    x.iter().all(|v| v.is_finite()).then_some(x)
}
