//! Dense primal-dual interior-point core for small conic programs in real
//! standard form
//!
//! ```text
//!     minimize    <c, x>
//!     subject to  <A_i, x> = b_i,   i = 1..m,
//!                 x in K = S+^{n_1} x ... x S+^{n_B} x R+^{n_s},
//! ```
//!
//! solved as a homogeneous self-dual embedding with Nesterov-Todd scaling
//! and a Mehrotra predictor-corrector step. The Schur complement is formed
//! densely; constraint matrices are lists of "atoms": direct entries, or
//! entries of an inner matrix `S` for coefficients of the congruence form
//! `Uᵀ S U` with a per-block basis `U`. The quadratic Schur terms then
//! reduce to lookups into `W`, `U W` and `U W Uᵀ`, which is what keeps the
//! robust-constraint blocks cheap.

use nalgebra::Cholesky;

use crate::linalg::{sym_eigh, RMat, RVec};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_TOL_INFEAS: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 200;
/// Fraction of the distance to the cone boundary taken per step.
pub const STEP_FRACTION: f64 = 0.98;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConicStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalTrouble,
    IterationLimit,
}

/// Coefficient of one constraint on one PSD block.
///
/// Both lists enumerate the full symmetric pattern: off-diagonal positions
/// appear as both `(i, j, v)` and `(j, i, v)`. `entries` are positions in
/// block coordinates; `inner` are positions of the sparse middle factor
/// `S` of `Uᵀ S U`, valid only when the block carries a basis `U`.
#[derive(Debug, Clone, Default)]
pub struct Elems {
    pub entries: Vec<(usize, usize, f64)>,
    pub inner: Vec<(usize, usize, f64)>,
}

impl Elems {
    pub fn from_dense(m: &RMat) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != 0.0 {
                    entries.push((i, j, v));
                }
            }
        }
        Self {
            entries,
            inner: Vec::new(),
        }
    }

    /// Dense realization, given the block's basis when inner atoms exist.
    pub fn to_dense(&self, dim: usize, basis: Option<&RMat>) -> RMat {
        let mut out = RMat::zeros(dim, dim);
        for &(i, j, v) in &self.entries {
            out[(i, j)] += v;
        }
        if !self.inner.is_empty() {
            let u = basis.expect("inner atoms need a basis");
            let k = u.nrows();
            let mut s = RMat::zeros(k, k);
            for &(g, h, v) in &self.inner {
                s[(g, h)] += v;
            }
            out += u.transpose() * s * u;
        }
        out
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.inner.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ConicBlock {
    pub dim: usize,
    /// Basis `U` (size `k x dim`) for congruence-form coefficients.
    pub basis: Option<RMat>,
}

#[derive(Debug, Clone, Default)]
pub struct ConicRow {
    /// Sparse over blocks, ascending block index.
    pub blocks: Vec<(usize, Elems)>,
    /// Sparse over scalar slots, ascending slot index.
    pub scalars: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Debug, Clone)]
pub struct ConicProblem {
    pub blocks: Vec<ConicBlock>,
    pub num_scalars: usize,
    pub cost_blocks: Vec<RMat>,
    pub cost_scalars: Vec<f64>,
    pub rows: Vec<ConicRow>,
}

#[derive(Debug, Clone, Copy)]
pub struct ConicSettings {
    pub tol: f64,
    pub tol_infeas: f64,
    pub max_iter: usize,
}

impl Default for ConicSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            tol_infeas: DEFAULT_TOL_INFEAS,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: ConicStatus,
    pub x_blocks: Vec<RMat>,
    pub x_scalars: Vec<f64>,
    pub y: RVec,
    pub z_blocks: Vec<RMat>,
    pub z_scalars: Vec<f64>,
    pub pobj: f64,
    pub dobj: f64,
    pub pres: f64,
    pub dres: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
    pub iterations: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum ConicError {
    #[error("malformed problem: {0}")]
    Malformed(String),
}

struct BlockScaling {
    /// `R` with `W = R Rᵀ`, `Rᵀ Z R = R⁻¹ X R⁻ᵀ = diag(lambda)`.
    r: RMat,
    rinv: RMat,
    lambda: RVec,
    w2: RMat,
    /// `U W` and `U W Uᵀ` when the block has a basis.
    p: Option<RMat>,
    k: Option<RMat>,
}

/// Square factor `F` with `F Fᵀ = X`; Cholesky when possible, otherwise a
/// clamped eigenvalue factor.
fn psd_factor(x: &RMat) -> RMat {
    if let Some(ch) = Cholesky::new(x.clone()) {
        return ch.l();
    }
    let (vals, vecs) = sym_eigh(x);
    let scale = vals.iter().fold(0.0f64, |a, &v| a.max(v.abs())).max(1e-300);
    let mut f = vecs;
    for (j, &v) in vals.iter().enumerate() {
        let s = v.max(1e-14 * scale).sqrt();
        let mut col = f.column_mut(j);
        col *= s;
    }
    f
}

fn compute_scaling(x: &RMat, z: &RMat, basis: Option<&RMat>) -> Option<BlockScaling> {
    let lx = psd_factor(x);
    let lz = psd_factor(z);
    let prod = lz.transpose() * &lx;
    let svd = prod.svd(true, true);
    let u = svd.u.as_ref()?;
    let vt = svd.v_t.as_ref()?;
    let n = x.nrows();
    let mut lambda = RVec::zeros(n);
    for i in 0..n {
        let s = svd.singular_values[i];
        if !(s > 1e-150) {
            return None;
        }
        lambda[i] = s;
    }
    // r = lx * V * diag(lambda^{-1/2}); rinv = diag(lambda^{-1/2}) * Uᵀ * lzᵀ
    let mut v = vt.transpose();
    for j in 0..n {
        let s = lambda[j].sqrt().recip();
        let mut col = v.column_mut(j);
        col *= s;
    }
    let r = &lx * v;
    let mut ut = u.transpose();
    for i in 0..n {
        let s = lambda[i].sqrt().recip();
        let mut row = ut.row_mut(i);
        row *= s;
    }
    let rinv = ut * lz.transpose();
    let w2 = &r * r.transpose();
    let (p, k) = match basis {
        Some(ub) => {
            let p = ub * &w2;
            let k = &p * ub.transpose();
            (Some(p), Some(k))
        }
        None => (None, None),
    };
    Some(BlockScaling {
        r,
        rinv,
        lambda,
        w2,
        p,
        k,
    })
}

/// Quadratic Schur term `Tr(F_a W F_b W)` from atom lists.
fn quad_term(a: &Elems, b: &Elems, sc: &BlockScaling) -> f64 {
    let w = &sc.w2;
    let mut t = 0.0;
    for &(i, j, v1) in &a.entries {
        for &(g, h, v2) in &b.entries {
            t += v1 * v2 * w[(j, g)] * w[(h, i)];
        }
    }
    if !a.inner.is_empty() || !b.inner.is_empty() {
        let p = sc.p.as_ref().expect("inner atoms need a basis");
        for &(i, j, v1) in &a.entries {
            for &(g, h, v2) in &b.inner {
                t += v1 * v2 * p[(g, j)] * p[(h, i)];
            }
        }
        for &(g, h, v1) in &a.inner {
            for &(i, j, v2) in &b.entries {
                t += v1 * v2 * p[(h, i)] * p[(g, j)];
            }
        }
        if !a.inner.is_empty() && !b.inner.is_empty() {
            let k = sc.k.as_ref().unwrap();
            for &(g, h, v1) in &a.inner {
                for &(g2, h2, v2) in &b.inner {
                    t += v1 * v2 * k[(h, g2)] * k[(h2, g)];
                }
            }
        }
    }
    t
}

/// `<F, X>` for a dense block matrix `X`; `uxu` must be `U X Uᵀ` when the
/// row has inner atoms on this block.
fn elems_dot(e: &Elems, x: &RMat, uxu: Option<&RMat>) -> f64 {
    let mut t = 0.0;
    for &(i, j, v) in &e.entries {
        t += v * x[(i, j)];
    }
    if !e.inner.is_empty() {
        let k = uxu.expect("inner atoms need U X Uᵀ");
        for &(g, h, v) in &e.inner {
            t += v * k[(g, h)];
        }
    }
    t
}

struct Workspace {
    m: usize,
    nu: f64,
    /// Per-block `U X Uᵀ` caches for A(x)-style products.
    uxu: Vec<Option<RMat>>,
}

struct Iterate {
    x_blocks: Vec<RMat>,
    x_scalars: Vec<f64>,
    y: RVec,
    z_blocks: Vec<RMat>,
    z_scalars: Vec<f64>,
    tau: f64,
    kappa: f64,
}

struct Direction {
    dx_blocks: Vec<RMat>,
    dx_scalars: Vec<f64>,
    dy: RVec,
    dz_blocks: Vec<RMat>,
    dz_scalars: Vec<f64>,
    dtau: f64,
    dkappa: f64,
    /// Scaled directions, kept for the corrector products.
    dxt_blocks: Vec<RMat>,
    dxt_scalars: Vec<f64>,
    dzt_blocks: Vec<RMat>,
    dzt_scalars: Vec<f64>,
}

pub struct Engine<'a> {
    prob: &'a ConicProblem,
    settings: ConicSettings,
}

impl<'a> Engine<'a> {
    pub fn new(prob: &'a ConicProblem, settings: ConicSettings) -> Result<Self, ConicError> {
        validate(prob)?;
        Ok(Self { prob, settings })
    }

    pub fn solve(&self) -> ConicSolution {
        let prob = self.prob;
        let m = prob.rows.len();
        let nu: f64 = prob.blocks.iter().map(|b| b.dim as f64).sum::<f64>()
            + prob.num_scalars as f64;
        let mut ws = Workspace {
            m,
            nu,
            uxu: vec![None; prob.blocks.len()],
        };

        let mut it = Iterate {
            x_blocks: prob.blocks.iter().map(|b| RMat::identity(b.dim, b.dim)).collect(),
            x_scalars: vec![1.0; prob.num_scalars],
            y: RVec::zeros(m),
            z_blocks: prob.blocks.iter().map(|b| RMat::identity(b.dim, b.dim)).collect(),
            z_scalars: vec![1.0; prob.num_scalars],
            tau: 1.0,
            kappa: 1.0,
        };

        let bnorm = prob.rows.iter().map(|r| r.rhs * r.rhs).sum::<f64>().sqrt();
        let cnorm = {
            let mut s = 0.0;
            for cb in &prob.cost_blocks {
                s += cb.iter().map(|v| v * v).sum::<f64>();
            }
            s += prob.cost_scalars.iter().map(|v| v * v).sum::<f64>();
            s.sqrt()
        };

        let mut best: Option<ConicSolution> = None;
        let mut stalls = 0usize;

        for iter in 0..self.settings.max_iter {
            // Residuals of the homogeneous embedding.
            let ax = self.a_of(&mut ws, &it.x_blocks, &it.x_scalars);
            let (aty_b, aty_s) = self.at_of(&it.y);
            let mut rp = ax.clone();
            for i in 0..m {
                rp[i] -= prob.rows[i].rhs * it.tau;
            }
            let mut rd_b: Vec<RMat> = Vec::with_capacity(prob.blocks.len());
            for (bi, atyb) in aty_b.iter().enumerate() {
                rd_b.push(atyb + &it.z_blocks[bi] - prob.cost_blocks[bi].scale(it.tau));
            }
            let rd_s: Vec<f64> = (0..prob.num_scalars)
                .map(|s| aty_s[s] + it.z_scalars[s] - prob.cost_scalars[s] * it.tau)
                .collect();
            let cx = self.c_dot(&it.x_blocks, &it.x_scalars);
            let by = self.b_dot(&it.y);
            let rg = cx - by + it.kappa;

            let barrier_nu = ws.nu;
            let gap_xz = inner_all(&it.x_blocks, &it.x_scalars, &it.z_blocks, &it.z_scalars);
            let mu = (gap_xz + it.tau * it.kappa) / (barrier_nu + 1.0);

            // Convergence bookkeeping on the de-homogenized point.
            let inv_tau = 1.0 / it.tau;
            let pobj = cx * inv_tau;
            let dobj = by * inv_tau;
            let pres = rp.norm() * inv_tau / (1.0 + bnorm);
            let dres = norm_all(&rd_b, &rd_s) * inv_tau / (1.0 + cnorm);
            let gap_abs = (pobj - dobj).abs();
            let gap_rel = gap_abs / (1.0 + pobj.abs().max(dobj.abs()));

            let make_solution = |status: ConicStatus| -> ConicSolution {
                ConicSolution {
                    status,
                    x_blocks: it.x_blocks.iter().map(|b| b.scale(inv_tau)).collect(),
                    x_scalars: it.x_scalars.iter().map(|v| v * inv_tau).collect(),
                    y: it.y.scale(inv_tau),
                    z_blocks: it.z_blocks.iter().map(|b| b.scale(inv_tau)).collect(),
                    z_scalars: it.z_scalars.iter().map(|v| v * inv_tau).collect(),
                    pobj,
                    dobj,
                    pres,
                    dres,
                    gap_abs,
                    gap_rel,
                    iterations: iter,
                }
            };

            if pres <= self.settings.tol && dres <= self.settings.tol && gap_rel <= self.settings.tol {
                return make_solution(ConicStatus::Optimal);
            }

            // Infeasibility certificates. The iterate (y, z) certifies primal
            // infeasibility when Aᵀy + z ~ 0 with bᵀy > 0; x certifies dual
            // infeasibility when A x ~ 0 with <c, x> < 0.
            let hard = it.tau < 1e-10 * it.kappa.max(1.0);
            let cert_tol = if hard { 1e-6 } else { self.settings.tol_infeas };
            if by > 0.0 {
                let mut cert_b: Vec<RMat> = Vec::with_capacity(prob.blocks.len());
                for (bi, atyb) in aty_b.iter().enumerate() {
                    cert_b.push(atyb + &it.z_blocks[bi]);
                }
                let cert_s: Vec<f64> = (0..prob.num_scalars)
                    .map(|s| aty_s[s] + it.z_scalars[s])
                    .collect();
                let res = norm_all(&cert_b, &cert_s) / by * (1.0 + cnorm);
                if res <= cert_tol {
                    let scale = 1.0 / by;
                    let mut sol = make_solution(ConicStatus::PrimalInfeasible);
                    sol.y = it.y.scale(scale);
                    sol.z_blocks = it.z_blocks.iter().map(|b| b.scale(scale)).collect();
                    sol.z_scalars = it.z_scalars.iter().map(|v| v * scale).collect();
                    return sol;
                }
            }
            if cx < 0.0 {
                let res = ax.norm() / (-cx) * (1.0 + bnorm);
                if res <= cert_tol {
                    let scale = -1.0 / cx;
                    let mut sol = make_solution(ConicStatus::DualInfeasible);
                    sol.x_blocks = it.x_blocks.iter().map(|b| b.scale(scale)).collect();
                    sol.x_scalars = it.x_scalars.iter().map(|v| v * scale).collect();
                    return sol;
                }
            }

            best = Some(make_solution(ConicStatus::IterationLimit));

            // Nesterov-Todd scalings.
            let mut scalings = Vec::with_capacity(prob.blocks.len());
            let mut scaling_failed = false;
            for (bi, blk) in prob.blocks.iter().enumerate() {
                match compute_scaling(&it.x_blocks[bi], &it.z_blocks[bi], blk.basis.as_ref()) {
                    Some(s) => scalings.push(s),
                    None => {
                        scaling_failed = true;
                        break;
                    }
                }
            }
            if scaling_failed {
                let mut sol = best.unwrap();
                sol.status = ConicStatus::NumericalTrouble;
                return sol;
            }
            let d_scalars: Vec<f64> = (0..prob.num_scalars)
                .map(|s| (it.x_scalars[s] / it.z_scalars[s]).sqrt())
                .collect();
            let lam_scalars: Vec<f64> = (0..prob.num_scalars)
                .map(|s| (it.x_scalars[s] * it.z_scalars[s]).sqrt())
                .collect();

            // Schur complement and its factorization.
            let mut schur = self.assemble_schur(&scalings, &d_scalars);
            let chol = match robust_cholesky(&mut schur) {
                Some(c) => c,
                None => {
                    let mut sol = best.unwrap();
                    sol.status = ConicStatus::NumericalTrouble;
                    return sol;
                }
            };

            // W(c) and related once per iteration.
            let wc_blocks: Vec<RMat> = prob
                .blocks
                .iter()
                .enumerate()
                .map(|(bi, _)| congr(&scalings[bi].w2, &prob.cost_blocks[bi]))
                .collect();
            let wc_scalars: Vec<f64> = (0..prob.num_scalars)
                .map(|s| d_scalars[s] * d_scalars[s] * prob.cost_scalars[s])
                .collect();
            let awc = self.a_of(&mut ws, &wc_blocks, &wc_scalars);
            let cwc = self.c_dot(&wc_blocks, &wc_scalars);
            let mut u_vec = awc.clone();
            for i in 0..m {
                u_vec[i] += prob.rows[i].rhs;
            }
            let g1 = chol.solve(&u_vec);
            let mut w_vec = -awc.clone();
            for i in 0..m {
                w_vec[i] += prob.rows[i].rhs;
            }
            // Stable form of <c, W c> + <b - A(Wc), g1>: the first part is a
            // projection residual (nonnegative), the second a squared norm;
            // the naive sum cancels catastrophically near convergence.
            let denom_core = {
                let lower = chol.l_dirty();
                let mut v1 = awc.clone();
                let _ = lower.solve_lower_triangular_mut(&mut v1);
                let mut v2 = RVec::zeros(m);
                for i in 0..m {
                    v2[i] = prob.rows[i].rhs;
                }
                let _ = lower.solve_lower_triangular_mut(&mut v2);
                (cwc - v1.norm_squared()).max(0.0) + v2.norm_squared()
            };

            // W(rd) per block once (shared by both directions).
            let wrd_blocks: Vec<RMat> = (0..prob.blocks.len())
                .map(|bi| congr(&scalings[bi].w2, &rd_b[bi]))
                .collect();
            let wrd_scalars: Vec<f64> = (0..prob.num_scalars)
                .map(|s| d_scalars[s] * d_scalars[s] * rd_s[s])
                .collect();

            let mut direction = |gamma: f64,
                                 corr: Option<&Direction>,
                                 dtau_dkappa_aff: Option<(f64, f64)>|
             -> Option<Direction> {
                let eta = 1.0 - gamma;
                // d4 = lambda o^{-1} (gamma mu e - lambda o lambda - corr)
                let mut rd4_blocks: Vec<RMat> = Vec::with_capacity(prob.blocks.len());
                for (bi, sc) in scalings.iter().enumerate() {
                    let n = sc.lambda.len();
                    let mut rhs = RMat::zeros(n, n);
                    for i in 0..n {
                        rhs[(i, i)] = gamma * mu - sc.lambda[i] * sc.lambda[i];
                    }
                    if let Some(d) = corr {
                        let prod = &d.dxt_blocks[bi] * &d.dzt_blocks[bi];
                        let sym = (&prod + prod.transpose()).scale(0.5);
                        rhs -= sym;
                    }
                    // solve lambda o u = rhs
                    let mut u = rhs;
                    for i in 0..n {
                        for j in 0..n {
                            u[(i, j)] *= 2.0 / (sc.lambda[i] + sc.lambda[j]);
                        }
                    }
                    rd4_blocks.push(u);
                }
                let mut rd4_scalars: Vec<f64> = Vec::with_capacity(prob.num_scalars);
                for s in 0..prob.num_scalars {
                    let mut rhs = gamma * mu - lam_scalars[s] * lam_scalars[s];
                    if let Some(d) = corr {
                        rhs -= d.dxt_scalars[s] * d.dzt_scalars[s];
                    }
                    rd4_scalars.push(rhs / lam_scalars[s]);
                }
                let rhs5 = {
                    let mut v = gamma * mu - it.tau * it.kappa;
                    if let Some((dta, dka)) = dtau_dkappa_aff {
                        v -= dta * dka;
                    }
                    v
                };

                // Rd4Rᵀ per block, and the combined A(.) argument.
                let mut arg_blocks: Vec<RMat> = Vec::with_capacity(prob.blocks.len());
                for (bi, sc) in scalings.iter().enumerate() {
                    let rd4r = &sc.r * &rd4_blocks[bi] * sc.r.transpose();
                    arg_blocks.push(rd4r + wrd_blocks[bi].scale(eta));
                }
                let arg_scalars: Vec<f64> = (0..prob.num_scalars)
                    .map(|s| d_scalars[s] * rd4_scalars[s] + eta * wrd_scalars[s])
                    .collect();
                let a_arg = self.a_of(&mut ws, &arg_blocks, &arg_scalars);
                let mut h = -a_arg;
                for i in 0..m {
                    h[i] -= eta * rp[i];
                }
                let g2 = chol.solve(&h);
                let s0 = self.c_dot(&arg_blocks, &arg_scalars);
                let wg2 = w_vec.dot(&g2);
                let denom = it.kappa + it.tau * denom_core;
                if !(denom > 0.0) || !denom.is_finite() {
                    return None;
                }
                let dtau = (rhs5 + it.tau * (eta * rg + s0 - wg2)) / denom;
                let dy = &g2 + g1.scale(dtau);
                // dz = -eta rd - Aᵀ dy + c dtau
                let (atdy_b, atdy_s) = self.at_of(&dy);
                let mut dz_blocks: Vec<RMat> = Vec::with_capacity(prob.blocks.len());
                for bi in 0..prob.blocks.len() {
                    dz_blocks.push(
                        prob.cost_blocks[bi].scale(dtau) - &atdy_b[bi] - rd_b[bi].scale(eta),
                    );
                }
                let dz_scalars: Vec<f64> = (0..prob.num_scalars)
                    .map(|s| prob.cost_scalars[s] * dtau - atdy_s[s] - eta * rd_s[s])
                    .collect();
                // dx = R d4 Rᵀ - W(dz)
                let mut dx_blocks: Vec<RMat> = Vec::with_capacity(prob.blocks.len());
                for (bi, sc) in scalings.iter().enumerate() {
                    let rd4r = &sc.r * &rd4_blocks[bi] * sc.r.transpose();
                    dx_blocks.push(rd4r - congr(&sc.w2, &dz_blocks[bi]));
                }
                let dx_scalars: Vec<f64> = (0..prob.num_scalars)
                    .map(|s| {
                        d_scalars[s] * rd4_scalars[s]
                            - d_scalars[s] * d_scalars[s] * dz_scalars[s]
                    })
                    .collect();
                let dkappa = -eta * rg - self.c_dot(&dx_blocks, &dx_scalars) + self.b_dot(&dy);

                // Scaled directions for step computation and corrector.
                let mut dxt_blocks = Vec::with_capacity(prob.blocks.len());
                let mut dzt_blocks = Vec::with_capacity(prob.blocks.len());
                for (bi, sc) in scalings.iter().enumerate() {
                    dxt_blocks.push(&sc.rinv * &dx_blocks[bi] * sc.rinv.transpose());
                    dzt_blocks.push(sc.r.transpose() * &dz_blocks[bi] * &sc.r);
                }
                let dxt_scalars: Vec<f64> = (0..prob.num_scalars)
                    .map(|s| dx_scalars[s] / d_scalars[s])
                    .collect();
                let dzt_scalars: Vec<f64> = (0..prob.num_scalars)
                    .map(|s| dz_scalars[s] * d_scalars[s])
                    .collect();

                Some(Direction {
                    dx_blocks,
                    dx_scalars,
                    dy,
                    dz_blocks,
                    dz_scalars,
                    dtau,
                    dkappa,
                    dxt_blocks,
                    dxt_scalars,
                    dzt_blocks,
                    dzt_scalars,
                })
            };

            // Predictor.
            let aff = match direction(0.0, None, None) {
                Some(d) => d,
                None => {
                    let mut sol = best.unwrap();
                    sol.status = ConicStatus::NumericalTrouble;
                    return sol;
                }
            };
            let alpha_aff = max_step(&scalings, &lam_scalars, &it, &aff).min(1.0);

            // Mehrotra centering weight from the affine trial point.
            let gap_aff = {
                let mut g = 0.0;
                for bi in 0..prob.blocks.len() {
                    let xa = &it.x_blocks[bi] + aff.dx_blocks[bi].scale(alpha_aff);
                    let za = &it.z_blocks[bi] + aff.dz_blocks[bi].scale(alpha_aff);
                    g += frob_inner(&xa, &za);
                }
                for s in 0..prob.num_scalars {
                    g += (it.x_scalars[s] + alpha_aff * aff.dx_scalars[s])
                        * (it.z_scalars[s] + alpha_aff * aff.dz_scalars[s]);
                }
                g += (it.tau + alpha_aff * aff.dtau) * (it.kappa + alpha_aff * aff.dkappa);
                g
            };
            let mu_aff = gap_aff / (barrier_nu + 1.0);
            let sigma = ((mu_aff / mu).max(0.0).min(1.0)).powi(3);

            let comb = match direction(sigma, Some(&aff), Some((aff.dtau, aff.dkappa))) {
                Some(d) => d,
                None => {
                    let mut sol = best.unwrap();
                    sol.status = ConicStatus::NumericalTrouble;
                    return sol;
                }
            };
            let alpha = (STEP_FRACTION * max_step(&scalings, &lam_scalars, &it, &comb)).min(1.0);

            if alpha < 1e-9 {
                stalls += 1;
                if stalls >= 3 {
                    let mut sol = best.unwrap();
                    sol.status = ConicStatus::NumericalTrouble;
                    return sol;
                }
            } else {
                stalls = 0;
            }

            for bi in 0..prob.blocks.len() {
                it.x_blocks[bi] += comb.dx_blocks[bi].scale(alpha);
                it.z_blocks[bi] += comb.dz_blocks[bi].scale(alpha);
                // keep exact symmetry against drift
                it.x_blocks[bi] = (&it.x_blocks[bi] + it.x_blocks[bi].transpose()).scale(0.5);
                it.z_blocks[bi] = (&it.z_blocks[bi] + it.z_blocks[bi].transpose()).scale(0.5);
            }
            for s in 0..prob.num_scalars {
                it.x_scalars[s] += alpha * comb.dx_scalars[s];
                it.z_scalars[s] += alpha * comb.dz_scalars[s];
            }
            it.y += comb.dy.scale(alpha);
            it.tau += alpha * comb.dtau;
            it.kappa += alpha * comb.dkappa;
        }

        best.unwrap_or_else(|| ConicSolution {
            status: ConicStatus::IterationLimit,
            x_blocks: vec![],
            x_scalars: vec![],
            y: RVec::zeros(m),
            z_blocks: vec![],
            z_scalars: vec![],
            pobj: f64::NAN,
            dobj: f64::NAN,
            pres: f64::NAN,
            dres: f64::NAN,
            gap_abs: f64::NAN,
            gap_rel: f64::NAN,
            iterations: self.settings.max_iter,
        })
    }

    fn assemble_schur(&self, scalings: &[BlockScaling], d_scalars: &[f64]) -> RMat {
        let m = self.prob.rows.len();
        let mut schur = RMat::zeros(m, m);
        for i in 0..m {
            let ri = &self.prob.rows[i];
            for l in 0..=i {
                let rl = &self.prob.rows[l];
                let mut t = 0.0;
                // two-pointer intersection over ascending block lists
                let (mut a, mut bb) = (0usize, 0usize);
                while a < ri.blocks.len() && bb < rl.blocks.len() {
                    let (ba, ea) = (&ri.blocks[a].0, &ri.blocks[a].1);
                    let (bl, el) = (&rl.blocks[bb].0, &rl.blocks[bb].1);
                    match ba.cmp(bl) {
                        std::cmp::Ordering::Less => a += 1,
                        std::cmp::Ordering::Greater => bb += 1,
                        std::cmp::Ordering::Equal => {
                            t += quad_term(ea, el, &scalings[*ba]);
                            a += 1;
                            bb += 1;
                        }
                    }
                }
                let (mut a, mut bb) = (0usize, 0usize);
                while a < ri.scalars.len() && bb < rl.scalars.len() {
                    let (sa, va) = ri.scalars[a];
                    let (sl, vl) = rl.scalars[bb];
                    match sa.cmp(&sl) {
                        std::cmp::Ordering::Less => a += 1,
                        std::cmp::Ordering::Greater => bb += 1,
                        std::cmp::Ordering::Equal => {
                            let d = d_scalars[sa];
                            t += va * vl * d * d;
                            a += 1;
                            bb += 1;
                        }
                    }
                }
                schur[(i, l)] = t;
                schur[(l, i)] = t;
            }
        }
        schur
    }

    /// `A(x)` with per-call `U X Uᵀ` caches.
    fn a_of(&self, ws: &mut Workspace, x_blocks: &[RMat], x_scalars: &[f64]) -> RVec {
        for (bi, blk) in self.prob.blocks.iter().enumerate() {
            ws.uxu[bi] = blk
                .basis
                .as_ref()
                .map(|u| u * &x_blocks[bi] * u.transpose());
        }
        let mut out = RVec::zeros(ws.m);
        for (i, row) in self.prob.rows.iter().enumerate() {
            let mut t = 0.0;
            for (bi, e) in &row.blocks {
                t += elems_dot(e, &x_blocks[*bi], ws.uxu[*bi].as_ref());
            }
            for &(s, v) in &row.scalars {
                t += v * x_scalars[s];
            }
            out[i] = t;
        }
        out
    }

    /// `Aᵀ(y)` densified per block.
    fn at_of(&self, y: &RVec) -> (Vec<RMat>, Vec<f64>) {
        let prob = self.prob;
        let mut out_b: Vec<RMat> = prob.blocks.iter().map(|b| RMat::zeros(b.dim, b.dim)).collect();
        let mut inner_acc: Vec<Option<RMat>> = prob
            .blocks
            .iter()
            .map(|b| b.basis.as_ref().map(|u| RMat::zeros(u.nrows(), u.nrows())))
            .collect();
        let mut out_s = vec![0.0; prob.num_scalars];
        for (i, row) in prob.rows.iter().enumerate() {
            let yi = y[i];
            if yi == 0.0 {
                continue;
            }
            for (bi, e) in &row.blocks {
                let tgt = &mut out_b[*bi];
                for &(r, c, v) in &e.entries {
                    tgt[(r, c)] += yi * v;
                }
                if !e.inner.is_empty() {
                    let acc = inner_acc[*bi].as_mut().expect("basis required");
                    for &(g, h, v) in &e.inner {
                        acc[(g, h)] += yi * v;
                    }
                }
            }
            for &(s, v) in &row.scalars {
                out_s[s] += yi * v;
            }
        }
        for (bi, blk) in prob.blocks.iter().enumerate() {
            if let (Some(acc), Some(u)) = (&inner_acc[bi], &blk.basis) {
                out_b[bi] += u.transpose() * acc * u;
            }
        }
        (out_b, out_s)
    }

    fn c_dot(&self, x_blocks: &[RMat], x_scalars: &[f64]) -> f64 {
        let mut t = 0.0;
        for (bi, cb) in self.prob.cost_blocks.iter().enumerate() {
            t += frob_inner(cb, &x_blocks[bi]);
        }
        for (s, cs) in self.prob.cost_scalars.iter().enumerate() {
            t += cs * x_scalars[s];
        }
        t
    }

    fn b_dot(&self, y: &RVec) -> f64 {
        self.prob
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| r.rhs * y[i])
            .sum()
    }
}

fn validate(prob: &ConicProblem) -> Result<(), ConicError> {
    if prob.blocks.is_empty() && prob.num_scalars == 0 {
        return Err(ConicError::Malformed("no variables".into()));
    }
    if prob.rows.is_empty() {
        return Err(ConicError::Malformed("no constraints".into()));
    }
    if prob.cost_blocks.len() != prob.blocks.len() {
        return Err(ConicError::Malformed("cost/block count mismatch".into()));
    }
    if prob.cost_scalars.len() != prob.num_scalars {
        return Err(ConicError::Malformed("cost/scalar count mismatch".into()));
    }
    for (bi, blk) in prob.blocks.iter().enumerate() {
        if blk.dim == 0 {
            return Err(ConicError::Malformed(format!("block {bi} has dim 0")));
        }
        if prob.cost_blocks[bi].nrows() != blk.dim || prob.cost_blocks[bi].ncols() != blk.dim {
            return Err(ConicError::Malformed(format!("cost dim mismatch at {bi}")));
        }
        if let Some(u) = &blk.basis {
            if u.ncols() != blk.dim {
                return Err(ConicError::Malformed(format!("basis dim mismatch at {bi}")));
            }
        }
    }
    for (i, row) in prob.rows.iter().enumerate() {
        for (bi, e) in &row.blocks {
            if *bi >= prob.blocks.len() {
                return Err(ConicError::Malformed(format!("row {i}: bad block index")));
            }
            let dim = prob.blocks[*bi].dim;
            let k = prob.blocks[*bi].basis.as_ref().map(|u| u.nrows()).unwrap_or(0);
            for &(r, c, v) in &e.entries {
                if r >= dim || c >= dim || !v.is_finite() {
                    return Err(ConicError::Malformed(format!("row {i}: bad entry atom")));
                }
            }
            for &(g, h, v) in &e.inner {
                if g >= k || h >= k || !v.is_finite() {
                    return Err(ConicError::Malformed(format!("row {i}: bad inner atom")));
                }
            }
        }
        for &(s, v) in &row.scalars {
            if s >= prob.num_scalars || !v.is_finite() {
                return Err(ConicError::Malformed(format!("row {i}: bad scalar coeff")));
            }
        }
        if !row.rhs.is_finite() {
            return Err(ConicError::Malformed(format!("row {i}: non-finite rhs")));
        }
    }
    Ok(())
}

/// Row/cost scalings applied before a solve; callers map solutions back
/// through [`Scaling::unscale`].
#[derive(Debug, Clone)]
pub struct Scaling {
    pub row: Vec<f64>,
    pub b_scale: f64,
    pub c_scale: f64,
}

/// In-place equilibration: each row is divided by its largest absolute
/// coefficient, then `b` and the cost are normalized to unit infinity norm.
pub fn equilibrate(prob: &mut ConicProblem) -> Scaling {
    let mut row = Vec::with_capacity(prob.rows.len());
    for r in prob.rows.iter_mut() {
        let mut mx = 0.0f64;
        for (_, e) in &r.blocks {
            for &(_, _, v) in &e.entries {
                mx = mx.max(v.abs());
            }
            for &(_, _, v) in &e.inner {
                mx = mx.max(v.abs());
            }
        }
        for &(_, v) in &r.scalars {
            mx = mx.max(v.abs());
        }
        let s = if mx > 0.0 { 1.0 / mx } else { 1.0 };
        for (_, e) in r.blocks.iter_mut() {
            for t in e.entries.iter_mut() {
                t.2 *= s;
            }
            for t in e.inner.iter_mut() {
                t.2 *= s;
            }
        }
        for t in r.scalars.iter_mut() {
            t.1 *= s;
        }
        r.rhs *= s;
        row.push(s);
    }
    let b_scale = prob
        .rows
        .iter()
        .map(|r| r.rhs.abs())
        .fold(0.0f64, f64::max)
        .max(1.0);
    for r in prob.rows.iter_mut() {
        r.rhs /= b_scale;
    }
    let mut c_max = prob.cost_scalars.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for cb in &prob.cost_blocks {
        c_max = cb.iter().fold(c_max, |a, v| a.max(v.abs()));
    }
    let c_scale = c_max.max(1.0);
    for cb in prob.cost_blocks.iter_mut() {
        *cb /= c_scale;
    }
    for v in prob.cost_scalars.iter_mut() {
        *v /= c_scale;
    }
    Scaling {
        row,
        b_scale,
        c_scale,
    }
}

impl Scaling {
    /// Maps a solution of the scaled problem back to the original data.
    pub fn unscale(&self, sol: &mut ConicSolution) {
        let gb = self.b_scale;
        let gc = self.c_scale;
        for b in sol.x_blocks.iter_mut() {
            *b *= gb;
        }
        for v in sol.x_scalars.iter_mut() {
            *v *= gb;
        }
        for (i, s) in self.row.iter().enumerate() {
            sol.y[i] *= gc * s;
        }
        for b in sol.z_blocks.iter_mut() {
            *b *= gc;
        }
        for v in sol.z_scalars.iter_mut() {
            *v *= gc;
        }
        sol.pobj *= gb * gc;
        sol.dobj *= gb * gc;
        sol.gap_abs *= gb * gc;
    }
}

fn congr(w2: &RMat, m: &RMat) -> RMat {
    w2 * m * w2
}

fn frob_inner(a: &RMat, b: &RMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

fn inner_all(xb: &[RMat], xs: &[f64], zb: &[RMat], zs: &[f64]) -> f64 {
    let mut t = 0.0;
    for (a, b) in xb.iter().zip(zb.iter()) {
        t += frob_inner(a, b);
    }
    for (a, b) in xs.iter().zip(zs.iter()) {
        t += a * b;
    }
    t
}

fn norm_all(blocks: &[RMat], scalars: &[f64]) -> f64 {
    let mut t = 0.0;
    for b in blocks {
        t += b.iter().map(|v| v * v).sum::<f64>();
    }
    t += scalars.iter().map(|v| v * v).sum::<f64>();
    t.sqrt()
}

/// Largest `alpha` keeping `lambda + alpha * dtilde` in the cone for both the
/// scaled primal and dual directions, plus the tau/kappa positivity limits.
fn max_step(
    scalings: &[BlockScaling],
    lam_scalars: &[f64],
    it: &Iterate,
    d: &Direction,
) -> f64 {
    let mut alpha = f64::INFINITY;
    for (bi, sc) in scalings.iter().enumerate() {
        alpha = alpha.min(psd_step(&sc.lambda, &d.dxt_blocks[bi]));
        alpha = alpha.min(psd_step(&sc.lambda, &d.dzt_blocks[bi]));
    }
    for (s, &lam) in lam_scalars.iter().enumerate() {
        if d.dxt_scalars[s] < 0.0 {
            alpha = alpha.min(-lam / d.dxt_scalars[s]);
        }
        if d.dzt_scalars[s] < 0.0 {
            alpha = alpha.min(-lam / d.dzt_scalars[s]);
        }
    }
    if d.dtau < 0.0 {
        alpha = alpha.min(-it.tau / d.dtau);
    }
    if d.dkappa < 0.0 {
        alpha = alpha.min(-it.kappa / d.dkappa);
    }
    alpha
}

fn psd_step(lambda: &RVec, dtilde: &RMat) -> f64 {
    let n = lambda.len();
    let mut t = dtilde.clone();
    for i in 0..n {
        for j in 0..n {
            t[(i, j)] /= (lambda[i] * lambda[j]).sqrt();
        }
    }
    let (vals, _) = sym_eigh(&t);
    let min = vals[0];
    if min >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / min
    }
}

fn robust_cholesky(schur: &mut RMat) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let n = schur.nrows();
    let base: f64 = (0..n).map(|i| schur[(i, i)].abs()).fold(0.0, f64::max);
    let mut jitter = 0.0;
    for attempt in 0..8 {
        if attempt > 0 {
            jitter = if jitter == 0.0 {
                1e-14 * base.max(1e-30)
            } else {
                jitter * 100.0
            };
            for i in 0..n {
                schur[(i, i)] += jitter;
            }
        }
        if let Some(c) = Cholesky::new(schur.clone()) {
            return Some(c);
        }
    }
    None
}


#[cfg(test)]
mod quad_term_tests {
    use super::*;

    #[test]
    fn quad_term_factored_matches_dense_formula() {
        let mut u = RMat::zeros(2, 3);
        u[(0, 0)] = 1.0;
        u[(1, 1)] = 1.0;
        u[(0, 2)] = 0.7;
        u[(1, 2)] = -0.3;
        let s_in = RMat::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.5]);
        let f_fact = Elems {
            entries: vec![(0, 0, 0.4)],
            inner: vec![(0, 0, 1.0), (0, 1, 0.2), (1, 0, 0.2), (1, 1, 0.5)],
        };
        let mut f_dense_m = u.transpose() * &s_in * &u;
        f_dense_m[(0, 0)] += 0.4;
        let f_dense = Elems::from_dense(&f_dense_m);

        // arbitrary SPD "W"
        let a = RMat::from_row_slice(3, 3, &[1.0, 0.3, -0.2, 0.0, 0.9, 0.4, 0.2, -0.1, 1.1]);
        let w2 = &a * a.transpose() + RMat::identity(3, 3);
        let p = &u * &w2;
        let k = &p * u.transpose();
        let sc = BlockScaling {
            r: RMat::identity(3, 3),
            rinv: RMat::identity(3, 3),
            lambda: RVec::from_element(3, 1.0),
            w2: w2.clone(),
            p: Some(p),
            k: Some(k),
        };
        let exact = (&f_dense_m * &w2 * &f_dense_m * &w2).trace();
        let got_fact = quad_term(&f_fact, &f_fact, &sc);
        let got_dense = quad_term(&f_dense, &f_dense, &sc);
        assert!((got_dense - exact).abs() < 1e-10 * exact.abs(), "dense {got_dense} vs {exact}");
        assert!((got_fact - exact).abs() < 1e-10 * exact.abs(), "fact {got_fact} vs {exact}");

        // mixed pair
        let g_dense = Elems::from_dense(&RMat::identity(3, 3));
        let exact_mix = (&f_dense_m * &w2 * RMat::identity(3, 3) * &w2).trace();
        let got_mix1 = quad_term(&f_fact, &g_dense, &sc);
        let got_mix2 = quad_term(&g_dense, &f_fact, &sc);
        assert!((got_mix1 - exact_mix).abs() < 1e-10 * exact_mix.abs(), "mix1 {got_mix1} vs {exact_mix}");
        assert!((got_mix2 - exact_mix).abs() < 1e-10 * exact_mix.abs(), "mix2 {got_mix2} vs {exact_mix}");
    }
}
