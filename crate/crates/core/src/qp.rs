//! Dense convex quadratic programming.
//!
//! ```text
//! minimize    ½ xᵀ Q x + cᵀ x
//! subject to  A_eq x  = b_eq      (duals y, free)
//!             A_in x ≤ b_in       (duals z ≥ 0)
//! ```
//!
//! Solved by a primal-dual interior-point method with Mehrotra
//! predictor-corrector steps, followed by an active-set polish that
//! recovers vertex-exact primal and dual values when the active set is
//! well conditioned. Failed solves are classified as infeasible (with a
//! Farkas certificate), unbounded (with a recession ray) or max-iterations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm_inf, Lu, Matrix};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

/// Solver tolerances. Defaults are the documented contract for `f64`;
/// for lower precision scalars every tolerance is floored at `100·ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<S> {
    /// Stationarity, relative to `1 + ‖c‖∞`.
    pub stationarity: S,
    pub feasibility: S,
    pub complementarity: S,
    /// Allowed negativity of inequality duals.
    pub dual_sign: S,
    /// Static diagonal regularization of the KKT matrix.
    pub regularization: S,
    /// Slack below which a constraint counts as binding.
    pub binding: S,
    /// Relative size of the objective perturbation in the LP uniqueness test.
    pub uniqueness_perturbation: S,
    /// Movement of the optimum that marks an LP as non-unique.
    pub uniqueness_shift: S,
    pub max_iterations: usize,
}

impl<S: Scalar> Default for Tolerances<S> {
    fn default() -> Self {
        let floor = S::epsilon() * S::of(100.0);
        let f = |v: f64| S::of(v).max(floor);
        Self {
            stationarity: f(1e-7),
            feasibility: f(1e-7),
            complementarity: f(1e-7),
            dual_sign: f(1e-8),
            regularization: S::of(1e-10),
            binding: f(1e-6),
            uniqueness_perturbation: f(1e-7),
            uniqueness_shift: f(1e-5).max(S::epsilon().sqrt()),
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Residuals<S> {
    /// `‖Qx + c + A_eqᵀy + A_inᵀz‖∞`
    pub stationarity: S,
    /// Worst equality violation or positive inequality violation.
    pub primal: S,
    /// `max_i |z_i (b_in − A_in x)_i|`
    pub complementarity: S,
    /// `max_i (−z_i)₊`
    pub dual_sign: S,
}

/// `Aᵀy + Gᵀz ≈ 0`, `z ≥ 0`, `bᵀy + hᵀz < 0` proves the constraints empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FarkasCertificate<S> {
    pub y: Vec<S>,
    pub z: Vec<S>,
    /// `bᵀy + hᵀz`, negative for a valid certificate.
    pub gap: S,
    /// `‖Aᵀy + Gᵀz‖∞`
    pub residual: S,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QpSolution<S> {
    pub status: Status,
    pub x: Vec<S>,
    pub y: Vec<S>,
    pub z: Vec<S>,
    pub objective: S,
    pub residuals: Residuals<S>,
    pub iterations: usize,
    pub polished: bool,
    pub certificate: Option<FarkasCertificate<S>>,
    /// Direction `d` with `Qd = 0, A_eq d = 0, A_in d ≤ 0, cᵀd < 0`.
    pub ray: Option<Vec<S>>,
    /// LP only: whether the optimal point survived objective perturbation.
    pub unique: Option<bool>,
}

impl<S: Scalar> QpSolution<S> {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticProgram<S> {
    pub q: Matrix<S>,
    pub c: Vec<S>,
    pub a_eq: Matrix<S>,
    pub b_eq: Vec<S>,
    pub a_in: Matrix<S>,
    pub b_in: Vec<S>,
}

impl<S: Scalar> QuadraticProgram<S> {
    /// Checks dimensions, symmetry and positive semidefiniteness.
    pub fn new(
        q: Matrix<S>,
        c: Vec<S>,
        a_eq: Matrix<S>,
        b_eq: Vec<S>,
        a_in: Matrix<S>,
        b_in: Vec<S>,
    ) -> Result<Self> {
        let qp = Self {
            q,
            c,
            a_eq,
            b_eq,
            a_in,
            b_in,
        };
        qp.validate()?;
        Ok(qp)
    }

    /// LP with `Q = 0`.
    pub fn linear(c: Vec<S>, a_eq: Matrix<S>, b_eq: Vec<S>, a_in: Matrix<S>, b_in: Vec<S>) -> Result<Self> {
        let n = c.len();
        Self::new(Matrix::zeros(n, n), c, a_eq, b_eq, a_in, b_in)
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.q.rows() != n || self.q.cols() != n {
            return Err(Error::Dimension(format!(
                "Q is {}x{}, expected {n}x{n}",
                self.q.rows(),
                self.q.cols()
            )));
        }
        if self.a_eq.cols() != n || self.a_eq.rows() != self.b_eq.len() {
            return Err(Error::Dimension(format!(
                "A_eq is {}x{} with {} right-hand sides, expected {n} columns",
                self.a_eq.rows(),
                self.a_eq.cols(),
                self.b_eq.len()
            )));
        }
        if self.a_in.cols() != n || self.a_in.rows() != self.b_in.len() {
            return Err(Error::Dimension(format!(
                "A_in is {}x{} with {} right-hand sides, expected {n} columns",
                self.a_in.rows(),
                self.a_in.cols(),
                self.b_in.len()
            )));
        }
        let finite = |v: &[S]| v.iter().all(|x| x.is_finite());
        if !finite(&self.c) || !finite(&self.b_eq) || !finite(&self.b_in) {
            return Err(Error::Invalid("non-finite problem data".into()));
        }
        let asym = self.q.asymmetry().unwrap_or_else(S::zero);
        if asym > S::of(1e-10).max(S::epsilon() * S::of(10.0)) * S::one().max(self.q.max_abs()) {
            return Err(Error::Invalid(format!("Q is not symmetric (max asymmetry {asym})")));
        }
        if !self.q.is_zero() {
            let min_ev = self
                .q
                .symmetric_eigenvalues()
                .into_iter()
                .fold(S::infinity(), S::min);
            if min_ev < -S::of(1e-9).max(S::epsilon() * S::of(100.0)) * S::one().max(self.q.max_abs()) {
                return Err(Error::Invalid(format!(
                    "Q is not positive semidefinite (min eigenvalue {min_ev})"
                )));
            }
        }
        Ok(())
    }

    pub fn objective(&self, x: &[S]) -> S {
        let qx = self.q.mul_vec(x);
        S::of(0.5) * dot(x, &qx) + dot(&self.c, x)
    }

    /// Lagrangian dual value `−½xᵀQx − b_eqᵀy − b_inᵀz`, valid at a stationary point.
    pub fn dual_objective(&self, x: &[S], y: &[S], z: &[S]) -> S {
        let qx = self.q.mul_vec(x);
        -S::of(0.5) * dot(x, &qx) - dot(&self.b_eq, y) - dot(&self.b_in, z)
    }

    pub fn residuals(&self, x: &[S], y: &[S], z: &[S]) -> Residuals<S> {
        let mut r = self.q.mul_vec(x);
        for (ri, ci) in r.iter_mut().zip(&self.c) {
            *ri += *ci;
        }
        let aty = self.a_eq.tr_mul_vec(y);
        let gtz = self.a_in.tr_mul_vec(z);
        for i in 0..r.len() {
            r[i] += aty[i] + gtz[i];
        }
        let mut primal = S::zero();
        for (ax, b) in self.a_eq.mul_vec(x).iter().zip(&self.b_eq) {
            primal = primal.max((*ax - *b).abs());
        }
        let mut comp = S::zero();
        let mut sign = S::zero();
        for ((gx, h), zi) in self.a_in.mul_vec(x).iter().zip(&self.b_in).zip(z) {
            primal = primal.max(*gx - *h);
            comp = comp.max((*zi * (*h - *gx)).abs());
            sign = sign.max(-*zi);
        }
        Residuals {
            stationarity: norm_inf(&r),
            primal,
            complementarity: comp,
            dual_sign: sign,
        }
    }

    fn passes(&self, r: &Residuals<S>, tol: &Tolerances<S>) -> bool {
        let cscale = S::one() + norm_inf(&self.c);
        r.stationarity <= tol.stationarity * cscale
            && r.primal <= tol.feasibility
            && r.complementarity <= tol.complementarity
            && r.dual_sign <= tol.dual_sign
    }

    /// Rank test on the Jacobian of equalities plus binding inequalities.
    pub fn licq_holds(&self, x: &[S], binding_tol: S) -> bool {
        let gx = self.a_in.mul_vec(x);
        let mut rows: Vec<Vec<S>> = self.a_eq.to_rows();
        for (i, (g, h)) in gx.iter().zip(&self.b_in).enumerate() {
            if *h - *g <= binding_tol {
                rows.push(self.a_in.row(i).to_vec());
            }
        }
        if rows.is_empty() {
            return true;
        }
        if rows.len() > self.num_vars() {
            return false;
        }
        let m = Matrix::from_rows(&rows);
        m.rank(S::of(1e-9).max(S::epsilon() * S::of(100.0))) == rows.len()
    }
}

struct Iterate<S> {
    x: Vec<S>,
    y: Vec<S>,
    z: Vec<S>,
    s: Vec<S>,
    iterations: usize,
}

/// Solves a convex QP. Dimension and convexity errors are returned before
/// any iteration; numerical failure is reported through [`Status`].
pub fn solve_qp<S: Scalar>(qp: &QuadraticProgram<S>, tol: &Tolerances<S>) -> Result<QpSolution<S>> {
    qp.validate()?;
    Ok(solve_validated(qp, tol, true))
}

/// Solves an LP (`Q = 0`) and tests whether the optimum is unique by
/// re-solving under small deterministic objective perturbations.
pub fn solve_lp<S: Scalar>(lp: &QuadraticProgram<S>, tol: &Tolerances<S>) -> Result<QpSolution<S>> {
    if !lp.q.is_zero() {
        return Err(Error::Invalid("solve_lp requires Q = 0".into()));
    }
    lp.validate()?;
    let mut sol = solve_validated(lp, tol, true);
    if sol.status == Status::Optimal {
        let n = lp.num_vars();
        let eps = tol.uniqueness_perturbation * (S::one() + norm_inf(&lp.c));
        let mut unique = true;
        for dir in [S::one(), -S::one()] {
            let mut p = lp.clone();
            for i in 0..n {
                p.c[i] += dir * eps * perturbation(i);
            }
            let alt = solve_validated(&p, tol, false);
            if alt.status != Status::Optimal {
                continue;
            }
            let moved = sol
                .x
                .iter()
                .zip(&alt.x)
                .fold(S::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            if moved > tol.uniqueness_shift {
                unique = false;
                break;
            }
        }
        sol.unique = Some(unique);
    }
    Ok(sol)
}

/// Fixed pseudo-random direction in `[0.5, 1.5]` with alternating sign.
fn perturbation<S: Scalar>(i: usize) -> S {
    let v = ((i as f64 + 1.0) * 0.618_033_988_749_895).fract() + 0.5;
    let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
    S::of(sign * v)
}

fn solve_validated<S: Scalar>(qp: &QuadraticProgram<S>, tol: &Tolerances<S>, diagnose: bool) -> QpSolution<S> {
    let it = interior_point(qp, tol);
    let mut x = it.x;
    let mut y = it.y;
    let mut z = it.z;
    let mut polished = false;
    if let Some((px, py, pz)) = polish(qp, &x, &z, &it.s, tol) {
        let old = qp.residuals(&x, &y, &z);
        let new = qp.residuals(&px, &py, &pz);
        if qp.passes(&new, tol) || !qp.passes(&old, tol) && worst(&new) < worst(&old) {
            x = px;
            y = py;
            z = pz;
            polished = true;
        }
    }
    let residuals = qp.residuals(&x, &y, &z);
    let objective = qp.objective(&x);
    let mut sol = QpSolution {
        status: Status::MaxIterations,
        x,
        y,
        z,
        objective,
        residuals,
        iterations: it.iterations,
        polished,
        certificate: None,
        ray: None,
        unique: None,
    };
    if qp.passes(&residuals, tol) {
        sol.status = Status::Optimal;
        return sol;
    }
    if !diagnose {
        return sol;
    }
    if let Some(cert) = farkas(qp, tol) {
        log::debug!("QP infeasible: certificate gap {}", cert.gap);
        sol.status = Status::Infeasible;
        sol.certificate = Some(cert);
    } else if let Some(ray) = recession_ray(qp, tol) {
        sol.status = Status::Unbounded;
        sol.ray = Some(ray);
    } else {
        log::warn!(
            "QP solve stopped after {} iterations with residuals {:?}",
            sol.iterations,
            sol.residuals
        );
    }
    sol
}

fn worst<S: Scalar>(r: &Residuals<S>) -> S {
    r.stationarity.max(r.primal).max(r.complementarity).max(r.dual_sign)
}

fn interior_point<S: Scalar>(qp: &QuadraticProgram<S>, tol: &Tolerances<S>) -> Iterate<S> {
    let n = qp.num_vars();
    let p = qp.b_eq.len();
    let m = qp.b_in.len();
    let g = &qp.a_in;
    let a = &qp.a_eq;
    let zero = S::zero();
    let one = S::one();
    let delta = tol.regularization;
    let cscale = one + norm_inf(&qp.c);
    let hundredth = S::of(0.01);
    let big = S::of(1e12) * (one + norm_inf(&qp.b_in) + norm_inf(&qp.b_eq) + norm_inf(&qp.c));

    // Starting point: least-squares x for the equality-constrained problem
    // with unit barrier weights, then slacks shifted into the interior.
    let mut x = vec![zero; n];
    let mut y = vec![zero; p];
    {
        let w = vec![one; m];
        let mut rhs: Vec<S> = qp.c.iter().map(|v| -*v).collect();
        let gth = g.tr_mul_vec(&qp.b_in);
        for i in 0..n {
            rhs[i] += gth[i];
        }
        rhs.extend(qp.b_eq.iter().copied());
        if let Some(sol) = kkt_solve(qp, &w, delta, &rhs) {
            x.copy_from_slice(&sol[..n]);
            y.copy_from_slice(&sol[n..]);
        }
    }
    let gx = g.mul_vec(&x);
    let mut s: Vec<S> = qp.b_in.iter().zip(&gx).map(|(h, v)| *h - *v).collect();
    let min_s = s.iter().copied().fold(S::infinity(), S::min);
    let shift = if m == 0 || min_s > S::of(1e-2) { zero } else { one - min_s };
    for si in &mut s {
        *si += shift;
    }
    let mut z = vec![one; m];

    let mut iterations = 0;
    let mut best = (S::infinity(), x.clone(), y.clone(), z.clone(), s.clone());
    while iterations < tol.max_iterations {
        iterations += 1;
        // residuals
        let mut rd = qp.q.mul_vec(&x);
        let aty = a.tr_mul_vec(&y);
        let gtz = g.tr_mul_vec(&z);
        for i in 0..n {
            rd[i] += qp.c[i] + aty[i] + gtz[i];
        }
        let rp: Vec<S> = a.mul_vec(&x).iter().zip(&qp.b_eq).map(|(v, b)| *v - *b).collect();
        let gx = g.mul_vec(&x);
        let ri: Vec<S> = (0..m).map(|i| gx[i] + s[i] - qp.b_in[i]).collect();
        let mu = if m > 0 { dot(&s, &z) / S::of(m as f64) } else { zero };

        let r_stat = norm_inf(&rd) / cscale;
        let r_feas = norm_inf(&rp).max(norm_inf(&ri));
        let score = r_stat.max(r_feas).max(mu);
        if score < best.0 {
            best = (score, x.clone(), y.clone(), z.clone(), s.clone());
        }
        if r_stat <= tol.stationarity * hundredth
            && r_feas <= tol.feasibility * hundredth
            && mu <= tol.complementarity * hundredth * hundredth
        {
            break;
        }
        if norm_inf(&x) > big || norm_inf(&z) > big || norm_inf(&y) > big {
            break;
        }

        let w: Vec<S> = (0..m).map(|i| z[i] / s[i]).collect();
        let Some(lu) = kkt_factor(qp, &w, delta) else {
            break;
        };

        // predictor
        let rc_aff: Vec<S> = (0..m).map(|i| s[i] * z[i]).collect();
        let (dx_a, _dy_a, dz_a, ds_a) = newton(qp, &lu, &w, &s, &z, &rd, &rp, &ri, &rc_aff);
        let alpha_aff = step_to_boundary(&s, &ds_a, one).min(step_to_boundary(&z, &dz_a, one));
        let sigma = if m > 0 {
            let mut mu_aff = zero;
            for i in 0..m {
                mu_aff += (s[i] + alpha_aff * ds_a[i]) * (z[i] + alpha_aff * dz_a[i]);
            }
            mu_aff /= S::of(m as f64);
            let r = (mu_aff / mu).max(zero).min(one);
            r * r * r
        } else {
            zero
        };
        let _ = dx_a;

        // corrector
        let rc: Vec<S> = (0..m)
            .map(|i| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu)
            .collect();
        let (dx, dy, dz, ds) = newton(qp, &lu, &w, &s, &z, &rd, &rp, &ri, &rc);
        let eta = S::of(0.995);
        let alpha = step_to_boundary(&s, &ds, eta).min(step_to_boundary(&z, &dz, eta));
        if alpha < S::of(1e-14) {
            break;
        }
        for i in 0..n {
            x[i] += alpha * dx[i];
        }
        for i in 0..p {
            y[i] += alpha * dy[i];
        }
        for i in 0..m {
            z[i] = (z[i] + alpha * dz[i]).max(S::min_positive_value());
            s[i] = (s[i] + alpha * ds[i]).max(S::min_positive_value());
        }
    }
    // return the best iterate seen (the last one unless progress stalled)
    let mut rd = qp.q.mul_vec(&x);
    let aty = a.tr_mul_vec(&y);
    let gtz = g.tr_mul_vec(&z);
    for i in 0..n {
        rd[i] += qp.c[i] + aty[i] + gtz[i];
    }
    let rp = a.mul_vec(&x).iter().zip(&qp.b_eq).fold(zero, |acc, (v, b)| acc.max((*v - *b).abs()));
    let gx = g.mul_vec(&x);
    let ri = (0..m).fold(zero, |acc, i| acc.max((gx[i] + s[i] - qp.b_in[i]).abs()));
    let mu = if m > 0 { dot(&s, &z) / S::of(m as f64) } else { zero };
    let score = (norm_inf(&rd) / cscale).max(rp).max(ri).max(mu);
    if score > best.0 {
        let (_, bx, by, bz, bs) = best;
        x = bx;
        y = by;
        z = bz;
        s = bs;
    }
    Iterate { x, y, z, s, iterations }
}

fn step_to_boundary<S: Scalar>(v: &[S], dv: &[S], eta: S) -> S {
    let mut alpha = S::one();
    for (vi, di) in v.iter().zip(dv) {
        if *di < S::zero() {
            alpha = alpha.min(-eta * *vi / *di);
        }
    }
    alpha
}

/// Reduced KKT matrix `[Q + GᵀWG + δI, Aᵀ; A, −δI]`.
fn kkt_matrix<S: Scalar>(qp: &QuadraticProgram<S>, w: &[S], delta: S) -> Matrix<S> {
    let n = qp.num_vars();
    let p = qp.b_eq.len();
    let mut k = Matrix::zeros(n + p, n + p);
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = qp.q[(i, j)];
        }
        k[(i, i)] += delta;
    }
    for (r, wr) in w.iter().enumerate() {
        let row = qp.a_in.row(r);
        for i in 0..n {
            if row[i] == S::zero() {
                continue;
            }
            let f = *wr * row[i];
            for j in 0..n {
                k[(i, j)] += f * row[j];
            }
        }
    }
    for r in 0..p {
        let row = qp.a_eq.row(r);
        for j in 0..n {
            k[(n + r, j)] = row[j];
            k[(j, n + r)] = row[j];
        }
        k[(n + r, n + r)] = -delta;
    }
    k
}

struct Factored<S> {
    lu: Lu<S>,
    k: Matrix<S>,
    delta: S,
    n: usize,
}

fn kkt_factor<S: Scalar>(qp: &QuadraticProgram<S>, w: &[S], delta: S) -> Option<Factored<S>> {
    let k = kkt_matrix(qp, w, delta);
    let lu = Lu::factor(&k, S::epsilon() * S::of(0.01))?;
    Some(Factored {
        lu,
        k,
        delta,
        n: qp.num_vars(),
    })
}

impl<S: Scalar> Factored<S> {
    /// Solves the unregularized system by refinement on the regularized factor.
    fn solve(&self, rhs: &[S]) -> Vec<S> {
        let mut sol = self.lu.solve(rhs);
        for _ in 0..3 {
            let mut kx = self.k.mul_vec(&sol);
            for (i, v) in kx.iter_mut().enumerate() {
                // undo the regularization to measure against the true system
                if i < self.n {
                    *v -= self.delta * sol[i];
                } else {
                    *v += self.delta * sol[i];
                }
            }
            let r: Vec<S> = rhs.iter().zip(&kx).map(|(b, v)| *b - *v).collect();
            if norm_inf(&r) <= S::epsilon() * (S::one() + norm_inf(rhs)) {
                break;
            }
            let corr = self.lu.solve(&r);
            for (s, c) in sol.iter_mut().zip(&corr) {
                *s += *c;
            }
        }
        sol
    }
}

fn kkt_solve<S: Scalar>(qp: &QuadraticProgram<S>, w: &[S], delta: S, rhs: &[S]) -> Option<Vec<S>> {
    kkt_factor(qp, w, delta).map(|f| f.solve(rhs))
}

#[allow(clippy::too_many_arguments)]
fn newton<S: Scalar>(
    qp: &QuadraticProgram<S>,
    f: &Factored<S>,
    w: &[S],
    s: &[S],
    z: &[S],
    rd: &[S],
    rp: &[S],
    ri: &[S],
    rc: &[S],
) -> (Vec<S>, Vec<S>, Vec<S>, Vec<S>) {
    let n = qp.num_vars();
    let m = s.len();
    // t = S⁻¹(Z r_i − r_c)
    let t: Vec<S> = (0..m).map(|i| (z[i] * ri[i] - rc[i]) / s[i]).collect();
    let gtt = qp.a_in.tr_mul_vec(&t);
    let mut rhs: Vec<S> = (0..n).map(|i| -rd[i] - gtt[i]).collect();
    rhs.extend(rp.iter().map(|v| -*v));
    let sol = f.solve(&rhs);
    let dx = sol[..n].to_vec();
    let dy = sol[n..].to_vec();
    let gdx = qp.a_in.mul_vec(&dx);
    let dz: Vec<S> = (0..m).map(|i| w[i] * gdx[i] + t[i]).collect();
    let ds: Vec<S> = (0..m).map(|i| -ri[i] - gdx[i]).collect();
    (dx, dy, dz, ds)
}

/// Solves the equality-constrained KKT system on the active set `{z > s}`.
fn polish<S: Scalar>(
    qp: &QuadraticProgram<S>,
    x: &[S],
    z: &[S],
    s: &[S],
    tol: &Tolerances<S>,
) -> Option<(Vec<S>, Vec<S>, Vec<S>)> {
    let n = qp.num_vars();
    let p = qp.b_eq.len();
    let _ = x;
    let active: Vec<usize> = (0..z.len()).filter(|&i| z[i] > s[i]).collect();
    let na = active.len();
    let dim = n + p + na;
    let mut k = Matrix::zeros(dim, dim);
    let mut rhs = vec![S::zero(); dim];
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = qp.q[(i, j)];
        }
        rhs[i] = -qp.c[i];
    }
    for r in 0..p {
        for j in 0..n {
            let v = qp.a_eq[(r, j)];
            k[(n + r, j)] = v;
            k[(j, n + r)] = v;
        }
        rhs[n + r] = qp.b_eq[r];
    }
    for (r, &ai) in active.iter().enumerate() {
        for j in 0..n {
            let v = qp.a_in[(ai, j)];
            k[(n + p + r, j)] = v;
            k[(j, n + p + r)] = v;
        }
        rhs[n + p + r] = qp.b_in[ai];
    }
    let lu = Lu::factor(&k, S::epsilon() * S::of(1e3))?;
    let mut sol = lu.solve(&rhs);
    // one refinement step
    let ks = k.mul_vec(&sol);
    let r: Vec<S> = rhs.iter().zip(&ks).map(|(a, b)| *a - *b).collect();
    let corr = lu.solve(&r);
    for (a, b) in sol.iter_mut().zip(&corr) {
        *a += *b;
    }
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let px = sol[..n].to_vec();
    let py = sol[n..n + p].to_vec();
    let mut pz = vec![S::zero(); z.len()];
    for (r, &ai) in active.iter().enumerate() {
        let v = sol[n + p + r];
        if v < -tol.dual_sign {
            return None;
        }
        pz[ai] = v.max(S::zero());
    }
    let gx = qp.a_in.mul_vec(&px);
    if gx.iter().zip(&qp.b_in).any(|(g, h)| *g - *h > tol.feasibility) {
        return None;
    }
    Some((px, py, pz))
}

/// Phase-1 elastic program; returns a certificate when the constraints
/// admit no point.
fn farkas<S: Scalar>(qp: &QuadraticProgram<S>, tol: &Tolerances<S>) -> Option<FarkasCertificate<S>> {
    let n = qp.num_vars();
    let p = qp.b_eq.len();
    let m = qp.b_in.len();
    let nv = n + 2 * p + m;
    let rho = S::of(1e-9);
    let mut q = Matrix::zeros(nv, nv);
    for i in 0..n {
        q[(i, i)] = rho;
    }
    let mut c = vec![S::zero(); nv];
    for v in c.iter_mut().skip(n) {
        *v = S::one();
    }
    let mut a_eq = Matrix::zeros(p, nv);
    for r in 0..p {
        a_eq.row_mut(r)[..n].copy_from_slice(qp.a_eq.row(r));
        a_eq[(r, n + r)] = S::one();
        a_eq[(r, n + p + r)] = -S::one();
    }
    let mi = m + 2 * p + m;
    let mut a_in = Matrix::zeros(mi, nv);
    let mut b_in = vec![S::zero(); mi];
    for r in 0..m {
        a_in.row_mut(r)[..n].copy_from_slice(qp.a_in.row(r));
        a_in[(r, n + 2 * p + r)] = -S::one();
        b_in[r] = qp.b_in[r];
    }
    for j in 0..(2 * p + m) {
        a_in[(m + j, n + j)] = -S::one();
    }
    let phase1 = QuadraticProgram {
        q,
        c,
        a_eq,
        b_eq: qp.b_eq.clone(),
        a_in,
        b_in,
    };
    let sol = solve_validated(&phase1, tol, false);
    let violation = dot(&phase1.c, &sol.x);
    let scale = S::one() + norm_inf(&qp.b_eq).max(norm_inf(&qp.b_in));
    if violation <= S::of(1e3) * tol.feasibility * scale {
        return None;
    }
    let y = sol.y.clone();
    let z: Vec<S> = sol.z[..m].iter().map(|v| v.max(S::zero())).collect();
    let aty = qp.a_eq.tr_mul_vec(&y);
    let gtz = qp.a_in.tr_mul_vec(&z);
    let res: Vec<S> = aty.iter().zip(&gtz).map(|(a, b)| *a + *b).collect();
    let gap = dot(&qp.b_eq, &y) + dot(&qp.b_in, &z);
    if gap >= S::zero() {
        return None;
    }
    Some(FarkasCertificate {
        y,
        z,
        gap,
        residual: norm_inf(&res),
    })
}

/// Searches the box `‖d‖∞ ≤ 1` for a descent direction of the recession cone.
fn recession_ray<S: Scalar>(qp: &QuadraticProgram<S>, tol: &Tolerances<S>) -> Option<Vec<S>> {
    let n = qp.num_vars();
    let mut eq_rows = qp.a_eq.to_rows();
    for i in 0..n {
        let row = qp.q.row(i);
        if norm_inf(row) > S::zero() {
            eq_rows.push(row.to_vec());
        }
    }
    let a_eq = if eq_rows.is_empty() {
        Matrix::zeros(0, n)
    } else {
        Matrix::from_rows(&eq_rows)
    };
    let b_eq = vec![S::zero(); a_eq.rows()];
    let m = qp.b_in.len();
    let mut a_in = Matrix::zeros(m + 2 * n, n);
    let mut b_in = vec![S::zero(); m + 2 * n];
    for r in 0..m {
        a_in.row_mut(r).copy_from_slice(qp.a_in.row(r));
    }
    for j in 0..n {
        a_in[(m + j, j)] = S::one();
        a_in[(m + n + j, j)] = -S::one();
        b_in[m + j] = S::one();
        b_in[m + n + j] = S::one();
    }
    let lp = QuadraticProgram {
        q: Matrix::zeros(n, n),
        c: qp.c.clone(),
        a_eq,
        b_eq,
        a_in,
        b_in,
    };
    let sol = solve_validated(&lp, tol, false);
    if sol.status != Status::Optimal {
        return None;
    }
    let slope = dot(&qp.c, &sol.x);
    if slope >= -S::of(1e3) * tol.stationarity * (S::one() + norm_inf(&qp.c)) {
        return None;
    }
    let scale = norm_inf(&sol.x);
    Some(sol.x.iter().map(|v| *v / scale).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tol() -> Tolerances<f64> {
        Tolerances::default()
    }

    #[test]
    fn bound_constrained_scalar() {
        let qp = QuadraticProgram::new(
            Matrix::from_rows(&[vec![2.0]]),
            vec![0.0],
            Matrix::zeros(0, 1),
            vec![],
            Matrix::from_rows(&[vec![-1.0]]),
            vec![-1.0],
        )
        .unwrap();
        let sol = solve_qp(&qp, &tol()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
        assert!((sol.z[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn equality_constrained_pair() {
        let qp = QuadraticProgram::new(
            Matrix::from_diag(&[2.0, 2.0]),
            vec![0.0, 0.0],
            Matrix::from_rows(&[vec![1.0, 1.0]]),
            vec![1.0],
            Matrix::zeros(0, 2),
            vec![],
        )
        .unwrap();
        let sol = solve_qp(&qp, &tol()).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-9 && (sol.x[1] - 0.5).abs() < 1e-9);
        // stationarity 2x + y = 0 with the sign convention above
        assert!((sol.y[0] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = QuadraticProgram::new(
            Matrix::from_diag(&[1.0, 1.0]),
            vec![0.0],
            Matrix::zeros(0, 1),
            vec![],
            Matrix::zeros(0, 1),
            vec![],
        );
        assert!(matches!(err, Err(Error::Dimension(_))));
    }

    #[test]
    fn indefinite_rejected() {
        let err = QuadraticProgram::new(
            Matrix::from_diag(&[1.0, -1.0]),
            vec![0.0, 0.0],
            Matrix::zeros(0, 2),
            vec![],
            Matrix::zeros(0, 2),
            vec![],
        );
        assert!(matches!(err, Err(Error::Invalid(_))));
    }

    #[test]
    fn infeasible_has_certificate() {
        // x ≤ 0 and −x ≤ −1
        let lp = QuadraticProgram::linear(
            vec![1.0],
            Matrix::zeros(0, 1),
            vec![],
            Matrix::from_rows(&[vec![1.0], vec![-1.0]]),
            vec![0.0, -1.0],
        )
        .unwrap();
        let sol = solve_qp(&lp, &tol()).unwrap();
        assert_eq!(sol.status, Status::Infeasible);
        let cert = sol.certificate.unwrap();
        assert!(cert.gap < 0.0);
        assert!(cert.residual < 1e-6);
        assert!(cert.z.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn unbounded_has_ray() {
        // min −x s.t. −x ≤ 0
        let lp = QuadraticProgram::linear(
            vec![-1.0],
            Matrix::zeros(0, 1),
            vec![],
            Matrix::from_rows(&[vec![-1.0]]),
            vec![0.0],
        )
        .unwrap();
        let sol = solve_qp(&lp, &tol()).unwrap();
        assert_eq!(sol.status, Status::Unbounded);
        assert!(sol.ray.unwrap()[0] > 0.0);
    }

    #[test]
    fn lp_uniqueness_flags() {
        // charge at price 1, discharge at price 3; SoC u1 and u1+u2 in [0, 1]
        let g = Matrix::from_rows(&[
            vec![-1.0, 0.0],
            vec![1.0, 0.0],
            vec![-1.0, -1.0],
            vec![1.0, 1.0],
        ]);
        let h = vec![0.0, 1.0, 0.0, 1.0];
        let strict =
            QuadraticProgram::linear(vec![1.0, 3.0], Matrix::zeros(0, 2), vec![], g.clone(), h.clone()).unwrap();
        let sol = solve_lp(&strict, &tol()).unwrap();
        assert_eq!(sol.unique, Some(true));
        assert!((sol.x[0] - 1.0).abs() < 1e-8 && (sol.x[1] + 1.0).abs() < 1e-8);

        let tied = QuadraticProgram::linear(vec![2.0, 2.0], Matrix::zeros(0, 2), vec![], g, h).unwrap();
        let sol = solve_lp(&tied, &tol()).unwrap();
        assert_eq!(sol.unique, Some(false));
    }

    #[test]
    fn single_precision_solve() {
        let qp = QuadraticProgram::<f32>::new(
            Matrix::from_rows(&[vec![2.0]]),
            vec![0.0],
            Matrix::zeros(0, 1),
            vec![],
            Matrix::from_rows(&[vec![-1.0]]),
            vec![-1.0],
        )
        .unwrap();
        let sol = solve_qp(&qp, &Tolerances::default()).unwrap();
        assert_eq!(sol.status, Status::Optimal);
        assert!((sol.x[0] - 1.0).abs() < 1e-4);
    }
}
