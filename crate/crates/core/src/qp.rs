//! Dense convex QP solver.
//!
//! Solves
//!
//! ```text
//! minimize    1/2 x'Qx + q'x
//! subject to  A x  = b
//!             G x <= g
//! ```
//!
//! with an over-relaxed operator-splitting (ADMM) iteration on the stacked
//! constraint set `l <= C x <= u`, after Ruiz equilibration. Once the
//! iterates settle, an active-set polish solves the equality-constrained
//! KKT system on the guessed active set and corrects it until the KKT
//! residuals meet the configured tolerances.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("objective matrix is not symmetric (asymmetry {0:.3e})")]
    NotSymmetric(f64),
    #[error("objective matrix is not positive semidefinite")]
    NotPsd,
    #[error("non-finite problem data")]
    NonFinite,
}

#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub q_mat: DMatrix<f64>,
    pub q_vec: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub g_ineq: DMatrix<f64>,
    pub g_vec: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(q_mat: DMatrix<f64>, q_vec: DVector<f64>) -> Self {
        let n = q_vec.len();
        Self {
            q_mat,
            q_vec,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            g_ineq: DMatrix::zeros(0, n),
            g_vec: DVector::zeros(0),
        }
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, g: DMatrix<f64>, h: DVector<f64>) -> Self {
        self.g_ineq = g;
        self.g_vec = h;
        self
    }

    /// Appends rows `row' x <= rhs`.
    pub fn push_inequalities(&mut self, rows: &[(DVector<f64>, f64)]) {
        if rows.is_empty() {
            return;
        }
        let n = self.dim();
        let old = self.g_ineq.nrows();
        let mut g = DMatrix::zeros(old + rows.len(), n);
        g.rows_mut(0, old).copy_from(&self.g_ineq);
        let mut h = DVector::zeros(old + rows.len());
        h.rows_mut(0, old).copy_from(&self.g_vec);
        for (k, (row, rhs)) in rows.iter().enumerate() {
            g.row_mut(old + k).copy_from(&row.transpose());
            h[old + k] = *rhs;
        }
        self.g_ineq = g;
        self.g_vec = h;
    }

    pub fn dim(&self) -> usize {
        self.q_vec.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.q_mat * x)) + self.q_vec.dot(x)
    }

    fn validate(&self) -> Result<(), QpError> {
        let n = self.dim();
        if self.q_mat.shape() != (n, n) {
            return Err(QpError::Dimension(format!("Q is {:?}, expected ({n}, {n})", self.q_mat.shape())));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(QpError::Dimension("equality system".into()));
        }
        if self.g_ineq.ncols() != n || self.g_ineq.nrows() != self.g_vec.len() {
            return Err(QpError::Dimension("inequality system".into()));
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !(finite(self.q_mat.as_slice())
            && finite(self.q_vec.as_slice())
            && finite(self.a_eq.as_slice())
            && finite(self.b_eq.as_slice())
            && finite(self.g_ineq.as_slice())
            && finite(self.g_vec.as_slice()))
        {
            return Err(QpError::NonFinite);
        }
        let scale = self.q_mat.amax().max(1.0);
        let asym = (&self.q_mat - self.q_mat.transpose()).amax();
        if asym > 1e-12 * scale {
            return Err(QpError::NotSymmetric(asym));
        }
        if n > 0 {
            let shift = 1e-10 * scale;
            let shifted = &self.q_mat + DMatrix::identity(n, n) * shift;
            if shifted.cholesky().is_none() {
                return Err(QpError::NotPsd);
            }
        }
        Ok(())
    }
}

/// Tolerances, all relative to `max(1, scale of the terms involved)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualTolerances {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl Default for ResidualTolerances {
    fn default() -> Self {
        Self { stationarity: 1e-8, primal: 1e-8, dual: 1e-8, complementarity: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: ResidualTolerances,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub max_iter: usize,
    /// ADMM stopping tolerance before a polish attempt.
    pub admm_eps: f64,
    pub infeasibility_eps: f64,
    pub check_every: usize,
    pub scaling_iters: usize,
    pub polish_passes: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: ResidualTolerances::default(),
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            max_iter: 20_000,
            admm_eps: 1e-4,
            infeasibility_eps: 1e-7,
            check_every: 10,
            scaling_iters: 10,
            polish_passes: 60,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn within(&self, tol: &ResidualTolerances) -> bool {
        self.stationarity <= tol.stationarity
            && self.primal <= tol.primal
            && self.dual <= tol.dual
            && self.complementarity <= tol.complementarity
    }

    fn worst(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// Multipliers for the equality rows.
    pub y_eq: DVector<f64>,
    /// Non-negative multipliers for the inequality rows.
    pub y_ineq: DVector<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub residuals: KktResiduals,
    pub iterations: usize,
    /// Primal infeasibility certificate `y` (if infeasible): `C'y ~ 0` and
    /// `u'y+ + l'y- < 0`, rows ordered equalities first.
    pub certificate: Option<DVector<f64>>,
}

impl QpSolution {
    pub fn is_optimal(&self) -> bool {
        self.status == QpStatus::Optimal
    }
}

/// Warm-start data from an earlier solve.
#[derive(Debug, Clone, Default)]
pub struct WarmStart {
    pub x: Option<DVector<f64>>,
    pub y_eq: Option<DVector<f64>>,
    pub y_ineq: Option<DVector<f64>>,
}

impl WarmStart {
    pub fn from_solution(sol: &QpSolution) -> Self {
        Self { x: Some(sol.x.clone()), y_eq: Some(sol.y_eq.clone()), y_ineq: Some(sol.y_ineq.clone()) }
    }
}

pub fn solve(qp: &QuadraticProgram, settings: &SolverSettings) -> Result<QpSolution, QpError> {
    solve_warm(qp, settings, &WarmStart::default())
}

pub fn solve_warm(
    qp: &QuadraticProgram,
    settings: &SolverSettings,
    warm: &WarmStart,
) -> Result<QpSolution, QpError> {
    qp.validate()?;
    Ok(Admm::new(qp, settings, warm).run())
}

/// KKT residuals of `(x, y_eq, y_ineq)` against the original data.
pub fn kkt_residuals(
    qp: &QuadraticProgram,
    x: &DVector<f64>,
    y_eq: &DVector<f64>,
    y_ineq: &DVector<f64>,
) -> KktResiduals {
    let px = &qp.q_mat * x;
    let aty = qp.a_eq.tr_mul(y_eq);
    let gty = qp.g_ineq.tr_mul(y_ineq);
    let grad = &px + &qp.q_vec + &aty + &gty;
    let st_scale = 1f64.max(px.amax()).max(qp.q_vec.amax()).max(aty.amax()).max(gty.amax());
    let ax = &qp.a_eq * x;
    let gx = &qp.g_ineq * x;
    let eq_res = (&ax - &qp.b_eq).amax();
    let ineq_res = (&gx - &qp.g_vec).iter().fold(0.0f64, |m, v| m.max(*v));
    let pr_scale = 1f64.max(ax.amax()).max(gx.amax()).max(qp.b_eq.amax()).max(qp.g_vec.amax());
    let y_scale = 1f64.max(y_eq.amax()).max(y_ineq.amax());
    let dual = y_ineq.iter().fold(0.0f64, |m, v| m.max(-*v));
    let comp = y_ineq
        .iter()
        .zip(gx.iter().zip(qp.g_vec.iter()))
        .map(|(y, (gx, g))| (y * (g - gx)).abs())
        .fold(0.0f64, f64::max);
    KktResiduals {
        stationarity: grad.amax() / st_scale,
        primal: eq_res.max(ineq_res) / pr_scale,
        dual: dual / y_scale,
        complementarity: comp / (y_scale * pr_scale),
    }
}

struct Admm<'a> {
    qp: &'a QuadraticProgram,
    s: SolverSettings,
    n: usize,
    m_eq: usize,
    // scaled data
    p: DMatrix<f64>,
    q: DVector<f64>,
    c: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    d_scale: DVector<f64>,
    e_scale: DVector<f64>,
    cost_scale: f64,
    rho: DVector<f64>,
    rho_base: f64,
    // iterates (scaled)
    x: DVector<f64>,
    z: DVector<f64>,
    y: DVector<f64>,
}

impl<'a> Admm<'a> {
    fn new(qp: &'a QuadraticProgram, s: &SolverSettings, warm: &WarmStart) -> Self {
        let n = qp.dim();
        let m_eq = qp.a_eq.nrows();
        let m = m_eq + qp.g_ineq.nrows();
        let mut c = DMatrix::zeros(m, n);
        c.rows_mut(0, m_eq).copy_from(&qp.a_eq);
        c.rows_mut(m_eq, m - m_eq).copy_from(&qp.g_ineq);
        let mut l = DVector::from_element(m, f64::NEG_INFINITY);
        let mut u = DVector::zeros(m);
        l.rows_mut(0, m_eq).copy_from(&qp.b_eq);
        u.rows_mut(0, m_eq).copy_from(&qp.b_eq);
        u.rows_mut(m_eq, m - m_eq).copy_from(&qp.g_vec);

        // Ruiz equilibration of [P C'; C 0]
        let mut p = qp.q_mat.clone();
        let mut q = qp.q_vec.clone();
        let mut d_scale = DVector::from_element(n, 1.0);
        let mut e_scale = DVector::from_element(m, 1.0);
        let mut cost_scale = 1.0;
        let clamp = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
        for _ in 0..s.scaling_iters {
            let dk = DVector::from_fn(n, |j, _| {
                let col = p.column(j).amax().max(c.column(j).amax());
                1.0 / clamp(col).sqrt()
            });
            let ek = DVector::from_fn(m, |i, _| 1.0 / clamp(c.row(i).amax()).sqrt());
            for j in 0..n {
                p.column_mut(j).scale_mut(dk[j]);
                c.column_mut(j).scale_mut(dk[j]);
            }
            for i in 0..n {
                p.row_mut(i).scale_mut(dk[i]);
            }
            for i in 0..m {
                c.row_mut(i).scale_mut(ek[i]);
            }
            q.component_mul_assign(&dk);
            d_scale.component_mul_assign(&dk);
            e_scale.component_mul_assign(&ek);
            // cost scaling
            let mean_col = if n > 0 { (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64 } else { 1.0 };
            let gamma = 1.0 / clamp(mean_col.max(q.amax()));
            p *= gamma;
            q *= gamma;
            cost_scale *= gamma;
        }
        l.component_mul_assign(&e_scale);
        u.component_mul_assign(&e_scale);

        let rho_base = s.rho;
        let rho = Self::rho_vector(&l, &u, rho_base);

        let x = match &warm.x {
            Some(x0) if x0.len() == n => x0.component_div(&d_scale),
            _ => DVector::zeros(n),
        };
        let z = &c * &x;
        let z = Self::project(&z, &l, &u);
        let mut y = DVector::zeros(m);
        if let Some(ye) = warm.y_eq.as_ref().filter(|v| v.len() == m_eq) {
            for i in 0..m_eq {
                y[i] = ye[i] / e_scale[i] * cost_scale;
            }
        }
        if let Some(yi) = warm.y_ineq.as_ref().filter(|v| v.len() == m - m_eq) {
            for i in 0..m - m_eq {
                y[m_eq + i] = yi[i] / e_scale[m_eq + i] * cost_scale;
            }
        }
        Self { qp, s: *s, n, m_eq, p, q, c, l, u, d_scale, e_scale, cost_scale, rho, rho_base, x, z, y }
    }

    fn rho_vector(l: &DVector<f64>, u: &DVector<f64>, rho: f64) -> DVector<f64> {
        DVector::from_fn(l.len(), |i, _| if l[i] == u[i] { 1e3 * rho } else { rho })
    }

    fn project(v: &DVector<f64>, l: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(v.len(), |i, _| v[i].max(l[i]).min(u[i]))
    }

    fn factor(&self) -> nalgebra::Cholesky<f64, nalgebra::Dyn> {
        let mut k = self.p.clone();
        for i in 0..self.n {
            k[(i, i)] += self.s.sigma;
        }
        let mut ct_rho = self.c.transpose();
        for i in 0..self.rho.len() {
            ct_rho.column_mut(i).scale_mut(self.rho[i]);
        }
        k += &ct_rho * &self.c;
        // P + sigma I + C' R C is positive definite by construction
        k.cholesky().expect("ADMM system matrix must be positive definite")
    }

    /// Unscaled primal/dual estimates.
    fn unscaled(&self, x: &DVector<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let xu = x.component_mul(&self.d_scale);
        let yu = y.component_mul(&self.e_scale) / self.cost_scale;
        let y_eq = yu.rows(0, self.m_eq).into_owned();
        let y_in = yu.rows(self.m_eq, yu.len() - self.m_eq).map(|v| v.max(0.0));
        (xu, y_eq, y_in)
    }

    fn run(mut self) -> QpSolution {
        let n = self.n;
        let m = self.c.nrows();
        if m == 0 && n > 0 {
            return self.unconstrained();
        }
        let mut chol = self.factor();
        let mut eps = self.s.admm_eps;
        let mut best: Option<QpSolution> = None;
        let mut iter = 0;
        while iter < self.s.max_iter {
            iter += 1;
            let y_prev = self.y.clone();
            let rhs = &self.x * self.s.sigma - &self.q
                + self.c.tr_mul(&(self.rho.component_mul(&self.z) - &self.y));
            let x_tilde = chol.solve(&rhs);
            let z_tilde = &self.c * &x_tilde;
            let a = self.s.alpha;
            self.x = &x_tilde * a + &self.x * (1.0 - a);
            let z_relaxed = &z_tilde * a + &self.z * (1.0 - a);
            let z_new = Self::project(
                &(&z_relaxed + self.y.component_div(&self.rho)),
                &self.l,
                &self.u,
            );
            self.y += self.rho.component_mul(&(&z_relaxed - &z_new));
            self.z = z_new;

            if iter % self.s.check_every != 0 {
                continue;
            }
            if let Some(cert) = self.infeasibility_certificate(&(&self.y - &y_prev)) {
                let (x, y_eq, y_in) = self.unscaled(&self.x, &self.y);
                let residuals = kkt_residuals(self.qp, &x, &y_eq, &y_in);
                return QpSolution {
                    objective: self.qp.objective(&x),
                    x,
                    y_eq,
                    y_ineq: y_in,
                    status: QpStatus::Infeasible,
                    residuals,
                    iterations: iter,
                    certificate: Some(cert),
                };
            }
            let (prim, dual, prim_scale, dual_scale) = self.admm_residuals();
            if prim <= eps * (1.0 + prim_scale) && dual <= eps * (1.0 + dual_scale) {
                if let Some(sol) = self.polish(iter) {
                    return sol;
                }
                let cand = self.current(iter);
                if best.as_ref().is_none_or(|b| cand.residuals.worst() < b.residuals.worst()) {
                    best = Some(cand);
                }
                eps = (eps * 0.1).max(1e-12);
            }
            // adaptive rho
            if iter % (5 * self.s.check_every) == 0 {
                let ratio = ((prim / prim_scale.max(1e-30)) / (dual / dual_scale.max(1e-30)).max(1e-30)).sqrt();
                let new_rho = (self.rho_base * ratio).clamp(1e-6, 1e6);
                if ratio.is_finite() && (new_rho > 5.0 * self.rho_base || new_rho < 0.2 * self.rho_base) {
                    let factor = new_rho / self.rho_base;
                    self.rho_base = new_rho;
                    self.rho *= factor;
                    chol = self.factor();
                }
            }
        }
        let cand = self.current(iter);
        let mut out = match best {
            Some(b) if b.residuals.worst() < cand.residuals.worst() => b,
            _ => cand,
        };
        out.status = QpStatus::MaxIterations;
        out.iterations = iter;
        out
    }

    fn unconstrained(&self) -> QpSolution {
        let n = self.n;
        let qp = self.qp;
        let mut k = qp.q_mat.clone();
        let reg = 1e-12 * qp.q_mat.amax().max(1.0);
        for i in 0..n {
            k[(i, i)] += reg;
        }
        let lu = k.clone().lu();
        let mut x = lu.solve(&(-&qp.q_vec)).unwrap_or_else(|| DVector::zeros(n));
        for _ in 0..5 {
            let r = -&qp.q_vec - &qp.q_mat * &x;
            if let Some(dx) = lu.solve(&r) {
                x += dx;
            }
        }
        let y0 = DVector::zeros(0);
        let residuals = kkt_residuals(qp, &x, &y0, &y0);
        let status = if residuals.within(&self.s.tol) { QpStatus::Optimal } else { QpStatus::MaxIterations };
        QpSolution {
            objective: qp.objective(&x),
            x,
            y_eq: y0.clone(),
            y_ineq: y0,
            status,
            residuals,
            iterations: 0,
            certificate: None,
        }
    }

    fn current(&self, iter: usize) -> QpSolution {
        let (x, y_eq, y_in) = self.unscaled(&self.x, &self.y);
        let residuals = kkt_residuals(self.qp, &x, &y_eq, &y_in);
        let status = if residuals.within(&self.s.tol) { QpStatus::Optimal } else { QpStatus::MaxIterations };
        QpSolution {
            objective: self.qp.objective(&x),
            x,
            y_eq,
            y_ineq: y_in,
            status,
            residuals,
            iterations: iter,
            certificate: None,
        }
    }

    /// Returns (primal, dual, primal scale, dual scale) in the unscaled
    /// space.
    fn admm_residuals(&self) -> (f64, f64, f64, f64) {
        let einv = self.e_scale.map(|v| 1.0 / v);
        let cx = &self.c * &self.x;
        let prim = (&cx - &self.z).component_mul(&einv).amax();
        let prim_scale = cx.component_mul(&einv).amax().max(self.z.component_mul(&einv).amax());
        let dinv = self.d_scale.map(|v| 1.0 / v);
        let px = &self.p * &self.x;
        let cty = self.c.tr_mul(&self.y);
        let dual = (&px + &self.q + &cty).component_mul(&dinv).amax() / self.cost_scale;
        let dual_scale = px
            .component_mul(&dinv)
            .amax()
            .max(cty.component_mul(&dinv).amax())
            .max(self.q.component_mul(&dinv).amax())
            / self.cost_scale;
        (prim, dual, prim_scale, dual_scale)
    }

    fn infeasibility_certificate(&self, dy: &DVector<f64>) -> Option<DVector<f64>> {
        let dy_u = dy.component_mul(&self.e_scale);
        let norm = dy_u.amax();
        if norm <= 1e-30 {
            return None;
        }
        let eps = self.s.infeasibility_eps;
        let ct_dy = self.c.tr_mul(dy).component_div(&self.d_scale);
        if ct_dy.amax() > eps * norm {
            return None;
        }
        let mut support = 0.0;
        for i in 0..dy.len() {
            let v = dy_u[i];
            if v > 0.0 {
                if self.u[i].is_infinite() {
                    return None;
                }
                support += self.u[i] / self.e_scale[i] * v;
            } else if v < 0.0 {
                if self.l[i].is_infinite() {
                    if v < -eps * norm {
                        return None;
                    }
                    continue;
                }
                support += self.l[i] / self.e_scale[i] * v;
            }
        }
        if support < -eps * norm {
            Some(dy_u / norm)
        } else {
            None
        }
    }

    /// Active-set polish starting from the ADMM guess. Returns an optimal
    /// solution when the corrected active set meets every tolerance.
    fn polish(&self, iter: usize) -> Option<QpSolution> {
        let qp = self.qp;
        let m_in = qp.g_ineq.nrows();
        // active guess from the scaled iterates: upper bound hit with positive multiplier
        let mut active: Vec<bool> = (0..m_in)
            .map(|i| {
                let r = self.m_eq + i;
                self.u[r] - self.z[r] < self.y[r]
            })
            .collect();
        let tol = &self.s.tol;
        let mut best: Option<QpSolution> = None;
        for _pass in 0..self.s.polish_passes {
            let (x, y_eq, y_in) = self.solve_active(&active)?;
            let residuals = kkt_residuals(qp, &x, &y_eq, &y_in);
            let sol = QpSolution {
                objective: qp.objective(&x),
                x: x.clone(),
                y_eq: y_eq.clone(),
                y_ineq: y_in.map(|v| v.max(0.0)),
                status: QpStatus::Optimal,
                residuals: KktResiduals::default(),
                iterations: iter,
                certificate: None,
            };
            let res_clamped = kkt_residuals(qp, &sol.x, &sol.y_eq, &sol.y_ineq);
            if residuals.within(tol) && res_clamped.within(tol) {
                return Some(QpSolution { residuals: res_clamped, ..sol });
            }
            if best.as_ref().is_none_or(|b| res_clamped.worst() < b.residuals.worst()) {
                best = Some(QpSolution { residuals: res_clamped, ..sol });
            }
            // correct the active set: drop the most negative multiplier, or
            // add the most violated inactive row
            let gx = &qp.g_ineq * &x;
            let pr_scale = 1f64.max(gx.amax()).max(qp.g_vec.amax());
            let y_scale = 1f64.max(y_in.amax()).max(y_eq.amax());
            let mut worst_add: Option<(usize, f64)> = None;
            for i in 0..m_in {
                if !active[i] {
                    let v = (gx[i] - qp.g_vec[i]) / pr_scale;
                    if v > tol.primal && worst_add.is_none_or(|(_, w)| v > w) {
                        worst_add = Some((i, v));
                    }
                }
            }
            let mut worst_drop: Option<(usize, f64)> = None;
            for i in 0..m_in {
                if active[i] {
                    let v = -y_in[i] / y_scale;
                    if v > tol.dual && worst_drop.is_none_or(|(_, w)| v > w) {
                        worst_drop = Some((i, v));
                    }
                }
            }
            match (worst_add, worst_drop) {
                (Some((i, _)), _) => active[i] = true,
                (None, Some((i, _))) => active[i] = false,
                (None, None) => break,
            }
        }
        best.filter(|b| b.residuals.within(tol))
    }

    /// Solves the equality-constrained KKT system with the given active
    /// inequalities, regularized and refined.
    fn solve_active(&self, active: &[bool]) -> Option<(DVector<f64>, DVector<f64>, DVector<f64>)> {
        let qp = self.qp;
        let n = self.n;
        let idx: Vec<usize> = (0..active.len()).filter(|&i| active[i]).collect();
        let k = self.m_eq + idx.len();
        let mut a = DMatrix::zeros(k, n);
        let mut b = DVector::zeros(k);
        a.rows_mut(0, self.m_eq).copy_from(&qp.a_eq);
        b.rows_mut(0, self.m_eq).copy_from(&qp.b_eq);
        for (r, &i) in idx.iter().enumerate() {
            a.row_mut(self.m_eq + r).copy_from(&qp.g_ineq.row(i));
            b[self.m_eq + r] = qp.g_vec[i];
        }
        let dim = n + k;
        let scale = qp.q_mat.amax().max(a.amax()).max(1.0);
        let delta = 1e-11 * scale;
        let mut kkt = DMatrix::zeros(dim, dim);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.q_mat);
        kkt.view_mut((n, 0), (k, n)).copy_from(&a);
        kkt.view_mut((0, n), (n, k)).copy_from(&a.transpose());
        let exact = kkt.clone();
        for i in 0..n {
            kkt[(i, i)] += delta;
        }
        for i in n..dim {
            kkt[(i, i)] -= delta;
        }
        let lu = kkt.lu();
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(-&qp.q_vec));
        rhs.rows_mut(n, k).copy_from(&b);
        let mut sol = lu.solve(&rhs)?;
        for _ in 0..8 {
            let r = &rhs - &exact * &sol;
            if r.amax() <= 1e-15 * (1.0 + rhs.amax()) {
                break;
            }
            sol += lu.solve(&r)?;
        }
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        let x = sol.rows(0, n).into_owned();
        let y_eq = sol.rows(n, self.m_eq).into_owned();
        let mut y_in = DVector::zeros(active.len());
        for (r, &i) in idx.iter().enumerate() {
            y_in[i] = sol[n + self.m_eq + r];
        }
        Some((x, y_eq, y_in))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings() -> SolverSettings {
        SolverSettings::default()
    }

    #[test]
    fn active_lower_bound() {
        // min x^2 s.t. x >= 1  ->  -x <= -1
        let qp = QuadraticProgram::new(DMatrix::from_element(1, 1, 2.0), DVector::zeros(1))
            .with_inequalities(DMatrix::from_element(1, 1, -1.0), DVector::from_element(1, -1.0));
        let sol = solve(&qp, &settings()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!(sol.residuals.within(&ResidualTolerances::default()));
    }

    #[test]
    fn equality_constrained_closed_form() {
        // min 1/2 x'x s.t. 1'x = n  ->  x = 1 (KKT: x + 1 nu = 0, 1'x = n)
        let n = 7;
        let qp = QuadraticProgram::new(DMatrix::identity(n, n), DVector::zeros(n))
            .with_equalities(DMatrix::from_element(1, n, 1.0), DVector::from_element(1, n as f64));
        let sol = solve(&qp, &settings()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        for v in sol.x.iter() {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert!((sol.y_eq[0] + 1.0).abs() < 1e-8);
    }

    #[test]
    fn contradictory_bounds_are_infeasible() {
        // x <= 0 and x >= 1
        let g = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let h = DVector::from_row_slice(&[0.0, -1.0]);
        let qp = QuadraticProgram::new(DMatrix::from_element(1, 1, 1.0), DVector::zeros(1))
            .with_inequalities(g.clone(), h.clone());
        let sol = solve(&qp, &settings()).unwrap();
        assert_eq!(sol.status, QpStatus::Infeasible);
        let cert = sol.certificate.unwrap();
        // certificate: G'y ~ 0 with h'y < 0, y >= 0
        let y = cert.rows(0, 2);
        assert!(y.iter().all(|v| *v >= -1e-9));
        assert!((g.tr_mul(&y.into_owned())).amax() < 1e-6);
        assert!(h.dot(&y.into_owned()) < 0.0);
    }

    #[test]
    fn rejects_indefinite() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let qp = QuadraticProgram::new(q, DVector::zeros(2));
        assert_eq!(solve(&qp, &settings()).unwrap_err(), QpError::NotPsd);
    }

    #[test]
    fn rejects_asymmetric() {
        let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        let qp = QuadraticProgram::new(q, DVector::zeros(2));
        assert!(matches!(solve(&qp, &settings()), Err(QpError::NotSymmetric(_))));
    }

    #[test]
    fn linear_program() {
        // max x + y s.t. x + 2y <= 4, 3x + y <= 6, x, y >= 0 -> (1.6, 1.2)
        let g = DMatrix::from_row_slice(4, 2, &[1.0, 2.0, 3.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let h = DVector::from_row_slice(&[4.0, 6.0, 0.0, 0.0]);
        let qp = QuadraticProgram::new(DMatrix::zeros(2, 2), DVector::from_row_slice(&[-1.0, -1.0]))
            .with_inequalities(g, h);
        let sol = solve(&qp, &settings()).unwrap();
        assert_eq!(sol.status, QpStatus::Optimal);
        assert!((sol.x[0] - 1.6).abs() < 1e-8 && (sol.x[1] - 1.2).abs() < 1e-8);
    }

    #[test]
    fn deterministic() {
        let g = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, -1.0, 2.0, 0.5, -1.0]);
        let h = DVector::from_row_slice(&[1.0, 2.0, 0.3]);
        let qp = QuadraticProgram::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]), DVector::from_row_slice(&[-3.0, 1.0]))
            .with_inequalities(g, h);
        let a = solve(&qp, &settings()).unwrap();
        let b = solve(&qp, &settings()).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.iterations, b.iterations);
    }
}
