//! Entropy-regularized optimal transport between two uniform marginals.
//!
//! Both problem forms share one solver. The cost form minimizes
//! `<P, C> - λ H(P)` and the score form maximizes `<P, S> + ε H(P)`; each
//! reduces to a Sinkhorn projection of the Gibbs kernel `exp(L)` with
//! `L = -C / λ` or `L = S / ε` onto
//! `{P ≥ 0 : P 1 = 1/R, Pᵀ 1 = 1/C}`.
//!
//! With `log_domain` set the iterations run on an absorbed kernel: scalings
//! are folded into log potentials whenever they drift far from one, so the
//! kernel never underflows even for tiny regularization weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Matrix};

/// Scalings beyond `exp(±ABSORB_LOG)` are folded into the potentials.
const ABSORB_LOG: f64 = 20.0;
/// Kernel sums below this are treated as underflow.
const KERNEL_FLOOR: f64 = 1e-200;
/// Sinkhorn hands over to Newton when the marginal error fails to halve
/// over this many iterations.
const STALL_WINDOW: usize = 25;

/// Largest change of any row potential in one Newton step, in log units.
const MAX_NEWTON_STEP: f64 = 4.0;

/// Nonnegative, finite transport costs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    pub fn new(matrix: Matrix) -> Result<Self> {
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(Error::invalid("cost matrix must have at least one row and column"));
        }
        if !matrix.is_finite() {
            return Err(Error::invalid("cost matrix contains NaN or infinite entries"));
        }
        if matrix.min() < 0.0 {
            return Err(Error::invalid("cost matrix contains negative entries"));
        }
        Ok(Self(matrix))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn rows(&self) -> usize {
        self.0.rows()
    }

    pub fn cols(&self) -> usize {
        self.0.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0.get(i, j)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SinkhornConfig {
    /// λ for the cost form, ε for the score form.
    pub entropy_weight: f64,
    pub max_iterations: usize,
    /// Stop once the L1 row-marginal violation falls below this.
    pub marginal_tolerance: f64,
    pub log_domain: bool,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { entropy_weight: 0.05, max_iterations: 1000, marginal_tolerance: 1e-8, log_domain: true }
    }
}

impl SinkhornConfig {
    pub fn with_entropy_weight(entropy_weight: f64) -> Self {
        Self { entropy_weight, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.entropy_weight > 0.0 && self.entropy_weight.is_finite()) {
            return Err(Error::invalid("entropy_weight must be positive and finite"));
        }
        if !(self.marginal_tolerance > 0.0) {
            return Err(Error::invalid("marginal_tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

/// Coupling with uniform marginals plus the solver's convergence record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    plan: Matrix,
    pub converged: bool,
    pub iterations: usize,
    /// L1 violation of the less exact marginal at exit.
    pub marginal_error: f64,
}

impl TransportPlan {
    pub fn matrix(&self) -> &Matrix {
        &self.plan
    }

    pub fn into_matrix(self) -> Matrix {
        self.plan
    }

    pub fn rows(&self) -> usize {
        self.plan.rows()
    }

    pub fn cols(&self) -> usize {
        self.plan.cols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.plan.get(i, j)
    }

    /// Largest absolute deviation of any row sum from `1/R` or column sum from `1/C`.
    pub fn max_marginal_violation(&self) -> f64 {
        let a = 1.0 / self.rows() as f64;
        let b = 1.0 / self.cols() as f64;
        let rows = self.plan.row_sums().into_iter().map(|s| (s - a).abs());
        let cols = self.plan.col_sums().into_iter().map(|s| (s - b).abs());
        rows.chain(cols).fold(0.0, f64::max)
    }

    /// `Σ P_ij C_ij`, without the entropy term.
    pub fn transport_cost(&self, cost: &CostMatrix) -> f64 {
        self.plan.frobenius_dot(cost.matrix())
    }

    pub fn entropy(&self) -> f64 {
        plan_entropy(&self.plan)
    }
}

/// `H(P) = -Σ P log P` with `0 log 0 = 0`.
pub fn plan_entropy(plan: &Matrix) -> f64 {
    -plan.as_slice().iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Minimizes `<P, C> - λ H(P)` over couplings of the uniform marginals.
pub fn sinkhorn_min(cost: &CostMatrix, config: &SinkhornConfig) -> Result<TransportPlan> {
    config.validate()?;
    let lambda = config.entropy_weight;
    let logk = cost.matrix().map(|c| -c / lambda);
    solve(&logk, config, None)
}

/// Maximizes `<P, S> + ε H(P)` over couplings of the uniform marginals.
pub fn sinkhorn_max(score: &Matrix, config: &SinkhornConfig) -> Result<TransportPlan> {
    config.validate()?;
    if score.rows() == 0 || score.cols() == 0 {
        return Err(Error::invalid("score matrix must have at least one row and column"));
    }
    if !score.is_finite() {
        return Err(Error::invalid("score matrix contains NaN or infinite entries"));
    }
    let eps = config.entropy_weight;
    let logk = score.map(|s| s / eps);
    solve(&logk, config, None)
}

/// Like [`sinkhorn_min`], additionally returning the dual objective (divided
/// by λ) after every completed iteration. Sinkhorn is block coordinate
/// ascent on this dual, so the trace is non-decreasing.
pub fn sinkhorn_min_traced(
    cost: &CostMatrix,
    config: &SinkhornConfig,
) -> Result<(TransportPlan, Vec<f64>)> {
    config.validate()?;
    let lambda = config.entropy_weight;
    let logk = cost.matrix().map(|c| -c / lambda);
    let mut trace = Vec::new();
    let plan = solve(&logk, config, Some(&mut trace))?;
    Ok((plan, trace))
}

struct Potentials<'a> {
    logk: &'a Matrix,
    f: Vec<f64>,
    g: Vec<f64>,
    log_a: f64,
    log_b: f64,
}

impl Potentials<'_> {
    fn exact_row_update(&mut self) {
        for i in 0..self.logk.rows() {
            let row = self.logk.row(i);
            let lse = log_sum_exp(row.iter().zip(&self.g).map(|(l, g)| l + g));
            self.f[i] = self.log_a - lse;
        }
    }

    fn exact_col_update(&mut self) {
        let (rows, cols) = (self.logk.rows(), self.logk.cols());
        for j in 0..cols {
            let lse = log_sum_exp((0..rows).map(|i| self.logk.get(i, j) + self.f[i]));
            self.g[j] = self.log_b - lse;
        }
    }

    fn kernel(&self) -> Matrix {
        Matrix::from_fn(self.logk.rows(), self.logk.cols(), |i, j| {
            (self.logk.get(i, j) + self.f[i] + self.g[j]).exp()
        })
    }

    /// Dual value after a column update, when the plan's total mass is one.
    fn dual(&self, log_u: impl Iterator<Item = f64>, log_v: impl Iterator<Item = f64>) -> f64 {
        let a = self.log_a.exp();
        let b = self.log_b.exp();
        let fs: f64 = self.f.iter().zip(log_u).map(|(f, lu)| a * (f + lu)).sum();
        let gs: f64 = self.g.iter().zip(log_v).map(|(g, lv)| b * (g + lv)).sum();
        fs + gs - 1.0
    }
}

fn solve(logk: &Matrix, config: &SinkhornConfig, trace: Option<&mut Vec<f64>>) -> Result<TransportPlan> {
    if config.log_domain {
        // Newton works on the row potentials, so keep the short side on rows.
        if logk.rows() > logk.cols() {
            let mut plan = solve_stabilized(&logk.transpose(), config, trace);
            plan.plan = plan.plan.transpose();
            plan.marginal_error = plan.plan.col_sums().iter().map(|s| (s - 1.0 / logk.cols() as f64).abs()).sum();
            return Ok(plan);
        }
        Ok(solve_stabilized(logk, config, trace))
    } else {
        solve_naive(logk, config, trace)
    }
}

fn row_error(u: &[f64], kv: &[f64], a: f64) -> f64 {
    u.iter().zip(kv).map(|(ui, s)| (ui * s - a).abs()).sum()
}

fn mat_vec(k: &Matrix, v: &[f64], out: &mut [f64]) {
    for (i, o) in out.iter_mut().enumerate() {
        *o = k.row(i).iter().zip(v).map(|(x, y)| x * y).sum();
    }
}

fn mat_t_vec(k: &Matrix, u: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for (i, ui) in u.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(k.row(i)) {
            *o += x * ui;
        }
    }
}

fn solve_stabilized(logk: &Matrix, config: &SinkhornConfig, mut trace: Option<&mut Vec<f64>>) -> TransportPlan {
    let (rows, cols) = (logk.rows(), logk.cols());
    let a = 1.0 / rows as f64;
    let b = 1.0 / cols as f64;
    let mut pot = Potentials { logk, f: vec![0.0; rows], g: vec![0.0; cols], log_a: a.ln(), log_b: b.ln() };

    // One exact iteration so the first kernel already carries column mass.
    pot.exact_row_update();
    pot.exact_col_update();
    let mut iterations = 1;
    if let Some(t) = trace.as_deref_mut() {
        t.push(pot.dual(std::iter::repeat(0.0), std::iter::repeat(0.0)));
    }

    let mut u = vec![1.0; rows];
    let mut v = vec![1.0; cols];
    let mut kv = vec![0.0; rows];
    let mut ktu = vec![0.0; cols];
    let mut converged = false;
    let mut error;
    let mut checkpoint_error = f64::INFINITY;
    let mut stalled = false;

    'outer: loop {
        let kernel = pot.kernel();
        u.iter_mut().for_each(|x| *x = 1.0);
        v.iter_mut().for_each(|x| *x = 1.0);
        loop {
            mat_vec(&kernel, &v, &mut kv);
            error = row_error(&u, &kv, a);
            if error < config.marginal_tolerance {
                converged = true;
                break 'outer;
            }
            if iterations >= config.max_iterations {
                break 'outer;
            }
            if iterations % STALL_WINDOW == 0 {
                if error > 0.5 * checkpoint_error {
                    stalled = true;
                    break 'outer;
                }
                checkpoint_error = error;
            }
            if kv.iter().any(|&s| !(s > KERNEL_FLOOR)) {
                absorb(&mut pot, &u, &v);
                pot.exact_row_update();
                pot.exact_col_update();
                iterations += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(pot.dual(std::iter::repeat(0.0), std::iter::repeat(0.0)));
                }
                continue 'outer;
            }
            for (ui, s) in u.iter_mut().zip(&kv) {
                *ui = a / s;
            }
            mat_t_vec(&kernel, &u, &mut ktu);
            if ktu.iter().any(|&s| !(s > KERNEL_FLOOR)) {
                absorb(&mut pot, &u, &v);
                pot.exact_col_update();
                iterations += 1;
                if let Some(t) = trace.as_deref_mut() {
                    t.push(pot.dual(std::iter::repeat(0.0), std::iter::repeat(0.0)));
                }
                continue 'outer;
            }
            for (vj, s) in v.iter_mut().zip(&ktu) {
                *vj = b / s;
            }
            iterations += 1;
            if let Some(t) = trace.as_deref_mut() {
                t.push(pot.dual(u.iter().map(|x| x.ln()), v.iter().map(|x| x.ln())));
            }
            let drift = u.iter().chain(&v).map(|x| x.ln().abs()).fold(0.0, f64::max);
            if drift > ABSORB_LOG {
                absorb(&mut pot, &u, &v);
                continue 'outer;
            }
        }
    }
    absorb(&mut pot, &u, &v);
    if stalled {
        pot.exact_col_update();
        let (done, err) = pot.newton(config, &mut iterations, trace);
        converged = done;
        error = err;
    }
    TransportPlan { plan: pot.kernel(), converged, iterations, marginal_error: error }
}

impl Potentials<'_> {
    /// Semi-dual value `Σ a f + Σ b g(f) - 1`, with `g` exact for the current `f`.
    fn semi_dual(&self) -> f64 {
        self.dual(std::iter::repeat(0.0), std::iter::repeat(0.0))
    }

    /// Row sums of the plan implied by the current potentials.
    fn row_mass(&self) -> Vec<f64> {
        (0..self.logk.rows())
            .map(|i| {
                let fi = self.f[i];
                self.logk.row(i).iter().zip(&self.g).map(|(l, g)| (l + fi + g).exp()).sum()
            })
            .collect()
    }

    /// Damped Newton ascent on the semi-dual over the row potentials.
    ///
    /// Sinkhorn converges sublinearly once the plan is close to a vertex of
    /// the transport polytope; Newton steps restore fast local convergence.
    /// Column potentials are recomputed exactly after every step, so the
    /// returned plan always has exact column marginals.
    fn newton(&mut self, config: &SinkhornConfig, iterations: &mut usize, mut trace: Option<&mut Vec<f64>>) -> (bool, f64) {
        let rows = self.logk.rows();
        let a = self.log_a.exp();
        let b = self.log_b.exp();
        let residual = |mass: &[f64]| mass.iter().map(|r| (r - a).abs()).sum::<f64>();
        let mut mass = self.row_mass();
        let mut error = residual(&mass);
        while error >= config.marginal_tolerance && *iterations < config.max_iterations && rows > 1 {
            let plan = self.kernel();
            // S = diag(r) - P diag(1/b) Pᵀ, grounded at row 0
            let n = rows - 1;
            let mut hess = vec![0.0; n * n];
            for p in 0..n {
                for q in p..n {
                    let dot: f64 = plan.row(p + 1).iter().zip(plan.row(q + 1)).map(|(x, y)| x * y).sum();
                    let mut h = -dot / b;
                    if p == q {
                        h += mass[p + 1];
                    }
                    hess[p * n + q] = h;
                    hess[q * n + p] = h;
                }
            }
            let grad: Vec<f64> = mass[1..].iter().map(|r| a - r).collect();
            let Some(mut step) = solve_spd(&mut hess, &grad, n) else { break };
            // near-singular Hessians far from the optimum give huge steps
            let longest = step.iter().fold(0.0f64, |m, d| m.max(d.abs()));
            if longest > MAX_NEWTON_STEP {
                step.iter_mut().for_each(|d| *d *= MAX_NEWTON_STEP / longest);
            }
            let base_f = self.f.clone();
            let base_g = self.g.clone();
            let base_value = self.semi_dual();
            let slope: f64 = grad.iter().zip(&step).map(|(g, d)| g * d).sum();
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                for (k, d) in step.iter().enumerate() {
                    self.f[k + 1] = base_f[k + 1] + t * d;
                }
                self.exact_col_update();
                let value = self.semi_dual();
                let trial_mass = self.row_mass();
                let trial_error = residual(&trial_mass);
                let sufficient = value >= base_value + 1e-4 * t * slope;
                let flat = value >= base_value - 1e-13 * base_value.abs().max(1.0) && trial_error < error;
                if value.is_finite() && (sufficient || flat) {
                    mass = trial_mass;
                    error = trial_error;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            *iterations += 1;
            if !accepted {
                self.f = base_f;
                self.g = base_g;
                break;
            }
            if let Some(tr) = trace.as_deref_mut() {
                tr.push(self.semi_dual());
            }
        }
        (error < config.marginal_tolerance, error)
    }
}

/// Solves `H x = rhs` for symmetric positive (semi)definite `H` by Cholesky,
/// adding a small ridge when the factorization breaks down.
fn solve_spd(hess: &mut [f64], rhs: &[f64], n: usize) -> Option<Vec<f64>> {
    let trace: f64 = (0..n).map(|i| hess[i * n + i]).sum();
    let original = hess.to_vec();
    let mut ridge = 0.0;
    for _ in 0..8 {
        hess.copy_from_slice(&original);
        for i in 0..n {
            hess[i * n + i] += ridge;
        }
        if cholesky_in_place(hess, n) {
            let mut y = rhs.to_vec();
            for i in 0..n {
                let s: f64 = (0..i).map(|k| hess[i * n + k] * y[k]).sum();
                y[i] = (y[i] - s) / hess[i * n + i];
            }
            for i in (0..n).rev() {
                let s: f64 = (i + 1..n).map(|k| hess[k * n + i] * y[k]).sum();
                y[i] = (y[i] - s) / hess[i * n + i];
            }
            if y.iter().all(|v| v.is_finite()) {
                return Some(y);
            }
        }
        ridge = if ridge == 0.0 { 1e-14 * trace.max(f64::MIN_POSITIVE) } else { ridge * 100.0 };
    }
    None
}

/// Lower-triangular Cholesky factor written into the lower half of `m`.
fn cholesky_in_place(m: &mut [f64], n: usize) -> bool {
    for j in 0..n {
        let s: f64 = (0..j).map(|k| m[j * n + k] * m[j * n + k]).sum();
        let d = m[j * n + j] - s;
        if !(d > 0.0) {
            return false;
        }
        let d = d.sqrt();
        m[j * n + j] = d;
        for i in j + 1..n {
            let s: f64 = (0..j).map(|k| m[i * n + k] * m[j * n + k]).sum();
            m[i * n + j] = (m[i * n + j] - s) / d;
        }
    }
    true
}

fn absorb(pot: &mut Potentials<'_>, u: &[f64], v: &[f64]) {
    for (f, x) in pot.f.iter_mut().zip(u) {
        *f += x.ln();
    }
    for (g, x) in pot.g.iter_mut().zip(v) {
        *g += x.ln();
    }
}

fn solve_naive(logk: &Matrix, config: &SinkhornConfig, mut trace: Option<&mut Vec<f64>>) -> Result<TransportPlan> {
    let (rows, cols) = (logk.rows(), logk.cols());
    let a = 1.0 / rows as f64;
    let b = 1.0 / cols as f64;
    let kernel = logk.map(f64::exp);
    let mut u = vec![1.0; rows];
    let mut v = vec![1.0; cols];
    let mut kv = vec![0.0; rows];
    let mut ktu = vec![0.0; cols];
    let mut converged = false;
    let mut error = f64::INFINITY;
    let mut iterations = 0;
    loop {
        mat_vec(&kernel, &v, &mut kv);
        if iterations > 0 {
            error = row_error(&u, &kv, a);
            if error < config.marginal_tolerance {
                converged = true;
                break;
            }
        }
        if iterations >= config.max_iterations {
            break;
        }
        for (ui, s) in u.iter_mut().zip(&kv) {
            *ui = a / s;
        }
        mat_t_vec(&kernel, &u, &mut ktu);
        for (vj, s) in v.iter_mut().zip(&ktu) {
            *vj = b / s;
        }
        if u.iter().chain(&v).any(|x| !x.is_finite() || *x == 0.0) {
            return Err(Error::invalid(
                "kernel underflow in naive Sinkhorn; enable log_domain for small entropy weights",
            ));
        }
        iterations += 1;
        if let Some(t) = trace.as_deref_mut() {
            let fs: f64 = u.iter().map(|x| a * x.ln()).sum();
            let gs: f64 = v.iter().map(|x| b * x.ln()).sum();
            t.push(fs + gs - 1.0);
        }
    }
    let plan = Matrix::from_fn(rows, cols, |i, j| u[i] * kernel.get(i, j) * v[j]);
    Ok(TransportPlan { plan, converged, iterations, marginal_error: error })
}

/// Exhaustive solution of the unregularized problem on a small square
/// instance: the best permutation plan scaled by `1/n`. Ties resolve to the
/// lexicographically smallest permutation.
pub fn exact_ot_oracle(cost: &CostMatrix) -> Result<(TransportPlan, f64)> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::UnsupportedSize(format!("oracle needs a square matrix, got {}x{}", n, cost.cols())));
    }
    if n > 8 {
        return Err(Error::UnsupportedSize(format!("oracle supports n <= 8, got {n}")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum();
        if c < best_cost {
            best_cost = c;
            best.clone_from(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    let scale = 1.0 / n as f64;
    let mut plan = Matrix::zeros(n, n);
    for (i, &j) in best.iter().enumerate() {
        plan.set(i, j, scale);
    }
    let objective = best_cost * scale;
    Ok((TransportPlan { plan, converged: true, iterations: 0, marginal_error: 0.0 }, objective))
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cost(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CostMatrix {
        CostMatrix::new(Matrix::from_fn(r, c, |_, _| rng.random::<f64>())).unwrap()
    }

    #[test]
    fn zero_cost_gives_uniform_plan() {
        for lambda in [0.01, 0.5, 3.0] {
            let plan = sinkhorn_min(
                &CostMatrix::new(Matrix::zeros(2, 2)).unwrap(),
                &SinkhornConfig::with_entropy_weight(lambda),
            )
            .unwrap();
            for &p in plan.matrix().as_slice() {
                assert!((p - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn anti_diagonal_cost_matches_closed_form() {
        // Symmetric 2x2: P = [[p, q], [q, p]] with q/p = exp(-1/λ), p + q = 1/2.
        let lambda = 0.01;
        let cost = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let plan = sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(lambda)).unwrap();
        let p = 0.5 / (1.0 + (-1.0 / lambda).exp());
        let q = 0.5 - p;
        assert!(plan.converged);
        assert!((plan.get(0, 0) - p).abs() < 1e-4 && (plan.get(1, 1) - p).abs() < 1e-4);
        assert!((plan.get(0, 1) - q).abs() < 1e-4 && (plan.get(1, 0) - q).abs() < 1e-4);
    }

    #[test]
    fn random_3x3_near_best_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cost = random_cost(&mut rng, 3, 3);
        let plan = sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(1e-3)).unwrap();
        // brute force over all 6 permutations
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        let best = perms
            .iter()
            .map(|p| p.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum::<f64>() / 3.0)
            .fold(f64::INFINITY, f64::min);
        assert!((plan.transport_cost(&cost) - best).abs() <= 0.01 * best);
    }

    #[test]
    fn score_form_zero_gives_uniform() {
        let plan = sinkhorn_max(&Matrix::zeros(3, 3), &SinkhornConfig::default()).unwrap();
        for &p in plan.matrix().as_slice() {
            assert!((p - 1.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn score_form_concentrates_on_diagonal() {
        let score = Matrix::from_rows(&[vec![10.0, 0.0], vec![0.0, 10.0]]).unwrap();
        let plan = sinkhorn_max(&score, &SinkhornConfig::with_entropy_weight(0.05)).unwrap();
        let p = 0.5 / (1.0 + (-10.0f64 / 0.05).exp());
        assert!(plan.get(0, 0) > 0.49 && plan.get(1, 1) > 0.49);
        assert!((plan.get(0, 0) - p).abs() < 1e-9);
    }

    #[test]
    fn score_form_equals_shifted_cost_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let (r, c) = (rng.random_range(1..7), rng.random_range(1..9));
            let score = Matrix::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0));
            let cfg = SinkhornConfig::with_entropy_weight(0.1);
            let max = score.max();
            let cost = CostMatrix::new(score.map(|s| max - s)).unwrap();
            let a = sinkhorn_max(&score, &cfg).unwrap();
            let b = sinkhorn_min(&cost, &cfg).unwrap();
            for (x, y) in a.matrix().as_slice().iter().zip(b.matrix().as_slice()) {
                assert!((x - y).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(CostMatrix::new(Matrix::from_rows(&[vec![f64::NAN]]).unwrap()).is_err());
        assert!(CostMatrix::new(Matrix::from_rows(&[vec![-1.0]]).unwrap()).is_err());
        assert!(CostMatrix::new(Matrix::zeros(0, 3)).is_err());
        let cost = CostMatrix::new(Matrix::zeros(2, 2)).unwrap();
        assert!(sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(0.0)).is_err());
        assert!(sinkhorn_max(&Matrix::from_rows(&[vec![f64::INFINITY]]).unwrap(), &SinkhornConfig::default()).is_err());
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cost = random_cost(&mut rng, 20, 30);
        let cfg = SinkhornConfig { max_iterations: 2, ..SinkhornConfig::with_entropy_weight(0.01) };
        let plan = sinkhorn_min(&cost, &cfg).unwrap();
        assert!(!plan.converged);
        assert_eq!(plan.iterations, 2);
    }

    #[test]
    fn naive_and_stabilized_agree_at_moderate_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cost = random_cost(&mut rng, 5, 8);
        let stab = sinkhorn_min(&cost, &SinkhornConfig::with_entropy_weight(0.2)).unwrap();
        let naive = sinkhorn_min(
            &cost,
            &SinkhornConfig { log_domain: false, ..SinkhornConfig::with_entropy_weight(0.2) },
        )
        .unwrap();
        assert!(stab.converged && naive.converged);
        for (x, y) in stab.matrix().as_slice().iter().zip(naive.matrix().as_slice()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn naive_underflow_is_reported() {
        let cost = CostMatrix::from_rows(&[vec![20.0, 20.0], vec![20.0, 20.0]]).unwrap();
        let cfg = SinkhornConfig { log_domain: false, ..SinkhornConfig::with_entropy_weight(0.01) };
        assert!(sinkhorn_min(&cost, &cfg).is_err());
        let cfg = SinkhornConfig { log_domain: true, ..cfg };
        let p = sinkhorn_min(&cost, &cfg).unwrap();
        assert!(p.converged, "{p:?}");
    }

    #[test]
    fn dual_trace_is_non_decreasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for lambda in [0.01, 0.1, 1.0] {
            let cost = random_cost(&mut rng, 7, 12);
            let (plan, trace) = sinkhorn_min_traced(&cost, &SinkhornConfig::with_entropy_weight(lambda)).unwrap();
            assert!(plan.converged);
            for w in trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} then {}", w[0], w[1]);
            }
            // at convergence the dual value (trace + 1) meets the regularized primal
            let primal = plan.transport_cost(&cost) / lambda - plan.entropy();
            let dual = trace.last().unwrap() + 1.0;
            assert!((primal - dual).abs() < 1e-6 * primal.abs().max(1.0), "{primal} vs {dual}");
        }
    }

    #[test]
    fn oracle_small_cases() {
        let cost = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let (plan, obj) = exact_ot_oracle(&cost).unwrap();
        assert_eq!(obj, 0.0);
        assert_eq!(plan.matrix().as_slice(), &[0.5, 0.0, 0.0, 0.5]);

        let cost = CostMatrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        let (plan, obj) = exact_ot_oracle(&cost).unwrap();
        assert_eq!(obj, 1.0);
        assert_eq!(plan.matrix().as_slice(), &[0.5, 0.0, 0.0, 0.5]);

        assert!(matches!(
            exact_ot_oracle(&CostMatrix::new(Matrix::zeros(2, 3)).unwrap()),
            Err(Error::UnsupportedSize(_))
        ));
        assert!(matches!(
            exact_ot_oracle(&CostMatrix::new(Matrix::zeros(9, 9)).unwrap()),
            Err(Error::UnsupportedSize(_))
        ));
    }

    #[test]
    fn entropy_values() {
        let uniform = Matrix::filled(2, 2, 0.25);
        assert!((plan_entropy(&uniform) - 4f64.ln()).abs() < 1e-12);
        let perm = Matrix::from_rows(&[vec![0.5, 0.0], vec![0.0, 0.5]]).unwrap();
        assert!((plan_entropy(&perm) - 2f64.ln()).abs() < 1e-12);
    }
}
