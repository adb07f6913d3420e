//! Sparse-PCA solvers: the truncated power method and a support-restricted
//! Rayleigh-quotient iteration with deflation-blended support re-selection,
//! plus the plain power method used by the baseline initializers.
//!
//! All solvers work against [`SymmetricOperator`], so they run unchanged on
//! the spectral operator (dense or matrix-free) and on plain dense matrices.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::linalg::{norm2, solve_lu, top_k_by_magnitude};

/// A symmetric linear operator on `R^n`.
pub trait SymmetricOperator {
    fn dim(&self) -> usize;

    /// `V w`; callers guarantee `w.len() == dim()`.
    fn apply(&self, w: ArrayView1<f64>) -> Array1<f64>;

    fn diagonal(&self) -> Array1<f64>;

    fn column(&self, j: usize) -> Array1<f64> {
        let mut e = Array1::<f64>::zeros(self.dim());
        e[j] = 1.0;
        self.apply(e.view())
    }

    fn principal_submatrix(&self, idx: &[usize]) -> Array2<f64> {
        let k = idx.len();
        let mut sub = Array2::<f64>::zeros((k, k));
        for (c, &j) in idx.iter().enumerate() {
            let col = self.column(j);
            for (r, &i) in idx.iter().enumerate() {
                sub[(r, c)] = col[i];
            }
        }
        sub
    }

    /// Whether the operator is positive semidefinite by construction; enables
    /// the monotone-objective debug check in the truncated power method.
    fn assume_psd(&self) -> bool {
        false
    }

    fn quadratic_form(&self, w: ArrayView1<f64>) -> f64 {
        w.dot(&self.apply(w))
    }
}

/// Dense symmetric matrix as an operator; used by tests, oracles, and the
/// restricted blocks of the baseline initializers.
#[derive(Debug, Clone)]
pub struct DenseSymOperator {
    matrix: Array2<f64>,
    psd: bool,
}

impl DenseSymOperator {
    pub fn new(matrix: Array2<f64>, psd: bool) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::invalid_argument("operator matrix must be square"));
        }
        Ok(DenseSymOperator { matrix, psd })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }
}

impl SymmetricOperator for DenseSymOperator {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn apply(&self, w: ArrayView1<f64>) -> Array1<f64> {
        self.matrix.dot(&w)
    }

    fn diagonal(&self) -> Array1<f64> {
        self.matrix.diag().to_owned()
    }

    fn column(&self, j: usize) -> Array1<f64> {
        self.matrix.column(j).to_owned()
    }

    fn principal_submatrix(&self, idx: &[usize]) -> Array2<f64> {
        let k = idx.len();
        let mut sub = Array2::<f64>::zeros((k, k));
        for (r, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                sub[(r, c)] = self.matrix[(i, j)];
            }
        }
        sub
    }

    fn assume_psd(&self) -> bool {
        self.psd
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpcaSolver {
    TPower,
    Grqi,
}

impl std::str::FromStr for SpcaSolver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tpower" => Ok(SpcaSolver::TPower),
            "grqi" => Ok(SpcaSolver::Grqi),
            other => Err(Error::Parse(format!(
                "unknown solver '{other}' (expected tpower|grqi)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpcaConfig {
    /// Sparsity budget.
    pub s: usize,
    pub max_iters: usize,
    /// Blending weight for support re-selection in the Rayleigh iteration.
    pub deflation: f64,
    pub solver: SpcaSolver,
    /// Early exit once the iterate changes (up to sign) by less than this.
    pub convergence_tol: f64,
}

impl SpcaConfig {
    pub fn new(s: usize) -> Self {
        SpcaConfig {
            s,
            max_iters: 100,
            deflation: 0.2,
            solver: SpcaSolver::Grqi,
            convergence_tol: 1e-8,
        }
    }

    pub fn with_solver(mut self, solver: SpcaSolver) -> Self {
        self.solver = solver;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 {
            return Err(Error::InvalidConfiguration(
                "sparsity budget must be >= 1".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfiguration("max_iters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.deflation) {
            return Err(Error::InvalidConfiguration(format!(
                "deflation must lie in [0, 1), got {}",
                self.deflation
            )));
        }
        if self.convergence_tol.is_nan() || self.convergence_tol <= 0.0 {
            return Err(Error::InvalidConfiguration(
                "convergence tolerance must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Output of a sparse-PCA solve: a unit direction with at most `s` nonzeros.
#[derive(Debug, Clone)]
pub struct SpcaResult {
    pub direction: Array1<f64>,
    /// `<direction, V direction>` at the returned direction.
    pub objective: f64,
    pub iters_used: usize,
    pub converged: bool,
    pub degenerate: bool,
    /// Objective value after each iteration, for diagnostics and the
    /// monotonicity self-check.
    pub objective_trace: Vec<f64>,
}

impl SpcaResult {
    fn checked(self, s: usize) -> Self {
        let nrm = norm2(&self.direction.view());
        assert!(
            (nrm - 1.0).abs() <= 1e-10,
            "sparse-PCA direction norm {nrm} is not 1"
        );
        let nnz = self.direction.iter().filter(|v| **v != 0.0).count();
        assert!(
            nnz <= s,
            "sparse-PCA direction has {nnz} nonzeros, budget {s}"
        );
        self
    }
}

/// Column of the largest diagonal entry, normalized; ties go to the lowest
/// index. For the zero operator the first basis vector is returned together
/// with a degeneracy flag.
pub fn start_vector(op: &dyn SymmetricOperator) -> (Array1<f64>, bool) {
    let diag = op.diagonal();
    let mut j = 0;
    for (i, &d) in diag.iter().enumerate() {
        if d > diag[j] {
            j = i;
        }
    }
    let col = op.column(j);
    let nrm = norm2(&col.view());
    if nrm == 0.0 {
        let mut e = Array1::<f64>::zeros(op.dim());
        e[0] = 1.0;
        return (e, true);
    }
    (col / nrm, false)
}

fn truncate_to_top_k(v: &ArrayView1<f64>, k: usize) -> Array1<f64> {
    let keep = top_k_by_magnitude(v, k);
    let mut out = Array1::<f64>::zeros(v.len());
    for &j in &keep {
        out[j] = v[j];
    }
    out
}

fn sign_distance(a: &ArrayView1<f64>, b: &ArrayView1<f64>) -> f64 {
    let d_minus = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let d_plus = a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x + y) * (x + y))
        .sum::<f64>()
        .sqrt();
    d_minus.min(d_plus)
}

/// Truncated power method: `w <- normalize(truncate_s(V w))`, keeping the
/// `s` largest-magnitude entries each step (ties to the lowest index).
pub fn tpower(
    op: &dyn SymmetricOperator,
    cfg: &SpcaConfig,
    start: ArrayView1<f64>,
) -> Result<SpcaResult> {
    cfg.validate()?;
    if start.len() != op.dim() {
        return Err(Error::dimension_mismatch(format!(
            "start vector has {} entries, operator dimension is {}",
            start.len(),
            op.dim()
        )));
    }
    let s = cfg.s.min(op.dim());
    let mut w = start.to_owned();
    let mut vw = op.apply(w.view());
    let mut obj = w.dot(&vw);
    let mut trace = Vec::new();
    let mut iters_used = 0;
    let mut converged = false;
    let mut degenerate = false;
    // The monotone-objective property only binds once the iterate is itself
    // feasible (the supplied start usually is not s-sparse).
    let mut prev_feasible = false;
    for t in 1..=cfg.max_iters {
        iters_used = t;
        if norm2(&vw.view()) == 0.0 {
            degenerate = true;
            break;
        }
        let mut next = truncate_to_top_k(&vw.view(), s);
        let next_norm = norm2(&next.view());
        if next_norm == 0.0 {
            degenerate = true;
            break;
        }
        next /= next_norm;
        let vnext = op.apply(next.view());
        let obj_next = next.dot(&vnext);
        if op.assume_psd() && prev_feasible {
            debug_assert!(
                obj_next >= obj - 1e-10 * obj.abs().max(1.0),
                "truncated power objective decreased: {obj} -> {obj_next}"
            );
        }
        let step = sign_distance(&next.view(), &w.view());
        w = next;
        vw = vnext;
        obj = obj_next;
        trace.push(obj);
        prev_feasible = true;
        if step < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    let direction = if prev_feasible {
        w
    } else {
        // Degenerate before the first truncation: fall back to a feasible
        // projection of the start vector.
        let t = truncate_to_top_k(&start, s);
        let nrm = norm2(&t.view());
        if nrm == 0.0 {
            let mut e = Array1::<f64>::zeros(op.dim());
            e[0] = 1.0;
            e
        } else {
            t / nrm
        }
    };
    let objective = op.quadratic_form(direction.view());
    Ok(SpcaResult {
        direction,
        objective,
        iters_used,
        converged,
        degenerate,
        objective_trace: trace,
    }
    .checked(s))
}

/// Support-restricted Rayleigh-quotient iteration with deflation.
///
/// Each iteration solves `(V_SS - theta I) h = w_S` on the current support,
/// renormalizes, then re-selects the support from the blended vector
/// `(1 - deflation) w + deflation (V w)/||V w||`. A singular shifted system
/// falls back to one power step on the restricted block.
pub fn grqi(
    op: &dyn SymmetricOperator,
    cfg: &SpcaConfig,
    start: ArrayView1<f64>,
) -> Result<SpcaResult> {
    cfg.validate()?;
    if start.len() != op.dim() {
        return Err(Error::dimension_mismatch(format!(
            "start vector has {} entries, operator dimension is {}",
            start.len(),
            op.dim()
        )));
    }
    let n = op.dim();
    let s = cfg.s.min(n);
    // Seed the working support with one power step of the start; committing
    // to the raw start column's top entries locks in its basin too early.
    let seeded = op.apply(start);
    let (mut support, mut w) = if norm2(&seeded.view()) > 0.0 {
        (
            top_k_by_magnitude(&seeded.view(), s),
            truncate_to_top_k(&seeded.view(), s),
        )
    } else {
        (top_k_by_magnitude(&start, s), truncate_to_top_k(&start, s))
    };
    let start_norm = norm2(&w.view());
    if start_norm == 0.0 {
        let mut e = Array1::<f64>::zeros(n);
        e[0] = 1.0;
        let objective = op.quadratic_form(e.view());
        return Ok(SpcaResult {
            direction: e,
            objective,
            iters_used: 0,
            converged: false,
            degenerate: true,
            objective_trace: Vec::new(),
        }
        .checked(s));
    }
    w /= start_norm;
    let mut trace = Vec::new();
    let mut iters_used = 0;
    let mut converged = false;
    let mut degenerate = false;
    for t in 1..=cfg.max_iters {
        iters_used = t;
        let sub = op.principal_submatrix(&support);
        let ws = Array1::from_iter(support.iter().map(|&j| w[j]));
        let theta = ws.dot(&sub.dot(&ws));
        let k = support.len();
        let mut shifted = sub.clone();
        for i in 0..k {
            shifted[(i, i)] -= theta;
        }
        // Shifted inverse iteration targets the eigenvalue nearest theta,
        // which is not always the top of the block; keep the step only when
        // it does not lower the restricted Rayleigh quotient, otherwise take
        // a plain power step (monotone for PSD blocks).
        let h = match solve_lu(&shifted.view(), &ws.view()) {
            Some(h) => {
                let hnorm = norm2(&h.view());
                if hnorm == 0.0 {
                    sub.dot(&ws)
                } else {
                    let hn = &h / hnorm;
                    let theta_new = hn.dot(&sub.dot(&hn));
                    if theta_new >= theta - 1e-12 * theta.abs().max(1.0) {
                        hn
                    } else {
                        log::debug!("grqi: shifted solve lowered the Rayleigh quotient at iteration {t}, using restricted power step");
                        sub.dot(&ws)
                    }
                }
            }
            None => {
                // Shift landed on an eigenvalue; a plain power step on the
                // restricted block keeps the iteration moving.
                log::debug!(
                    "grqi: singular shifted system at iteration {t}, using restricted power step"
                );
                sub.dot(&ws)
            }
        };
        let hnorm = norm2(&h.view());
        if hnorm == 0.0 {
            degenerate = true;
            break;
        }
        let mut wfull = Array1::<f64>::zeros(n);
        for (idx, &j) in support.iter().enumerate() {
            wfull[j] = h[idx] / hnorm;
        }
        let vw = op.apply(wfull.view());
        let vnorm = norm2(&vw.view());
        if vnorm == 0.0 {
            degenerate = true;
            w = wfull;
            break;
        }
        let blend = (1.0 - cfg.deflation) * &wfull + cfg.deflation * &(vw / vnorm);
        let mut next = truncate_to_top_k(&blend.view(), s);
        let next_norm = norm2(&next.view());
        if next_norm == 0.0 {
            degenerate = true;
            w = wfull;
            break;
        }
        next /= next_norm;
        let step = sign_distance(&next.view(), &w.view());
        support = next
            .iter()
            .enumerate()
            .filter_map(|(j, &v)| (v != 0.0).then_some(j))
            .collect();
        w = next;
        trace.push(op.quadratic_form(w.view()));
        if step < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    let objective = op.quadratic_form(w.view());
    Ok(SpcaResult {
        direction: w,
        objective,
        iters_used,
        converged,
        degenerate,
        objective_trace: trace,
    }
    .checked(s))
}

/// Runs the configured solver from the given start vector.
pub fn solve_spca(
    op: &dyn SymmetricOperator,
    cfg: &SpcaConfig,
    start: ArrayView1<f64>,
) -> Result<SpcaResult> {
    match cfg.solver {
        SpcaSolver::TPower => tpower(op, cfg, start),
        SpcaSolver::Grqi => grqi(op, cfg, start),
    }
}

/// Plain power iteration: `iters` normalized steps, no sparsification.
/// Returns the final unit vector and a degeneracy flag raised if the image
/// ever vanished.
pub fn power_method(
    op: &dyn SymmetricOperator,
    iters: usize,
    start: ArrayView1<f64>,
) -> (Array1<f64>, bool) {
    let mut w = start.to_owned();
    for _ in 0..iters {
        let v = op.apply(w.view());
        let nrm = norm2(&v.view());
        if nrm == 0.0 {
            return (w, true);
        }
        w = v / nrm;
    }
    (w, false)
}
