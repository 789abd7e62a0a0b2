//! Problems in linear-matrix-inequality form: scalar decision variables
//! `y`, Hermitian blocks `G0 + sum_k y_k G_k >= 0`, scalar inequality rows
//! and optional sign constraints on variables.
//!
//! Solved by dualization: the LMI problem is the conic dual of a
//! standard-form program whose cone variable collects one PSD block per
//! LMI and one nonnegative slot per scalar row / sign constraint. The LMI
//! variables come back as the equality multipliers `y`, and the conic
//! primal blocks are the LMI's own dual multipliers (used by the KKT
//! checks of the rank-one recovery program).

use num_complex::Complex64;

use crate::linalg::{embed_rect, unembed_sym, CMat, HermitianMatrix, RMat};

use super::engine::{
    equilibrate, ConicBlock, ConicProblem, ConicRow, ConicSettings, ConicStatus, Elems, Engine,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarSign {
    Free,
    Nonneg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmiStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalTrouble,
    IterationLimit,
}

#[derive(Debug, thiserror::Error)]
pub enum LmiError {
    #[error("malformed LMI problem: {0}")]
    Malformed(String),
}

/// Sparse Hermitian coefficient: direct `entries` in block coordinates and
/// `inner` entries of the middle factor `S` of `Uᴴ S U` against the
/// block's basis `U`. Off-diagonal positions must appear with both
/// orientations (`push` takes care of that).
#[derive(Debug, Clone, Default)]
pub struct CElems {
    pub entries: Vec<(usize, usize, Complex64)>,
    pub inner: Vec<(usize, usize, Complex64)>,
}

impl CElems {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a Hermitian entry pair `H[i,j] = v`, `H[j,i] = conj(v)`.
    pub fn push(&mut self, i: usize, j: usize, v: Complex64) {
        if i == j {
            debug_assert!(v.im.abs() <= 1e-14 * (1.0 + v.re.abs()));
            self.entries.push((i, i, Complex64::new(v.re, 0.0)));
        } else {
            self.entries.push((i, j, v));
            self.entries.push((j, i, v.conj()));
        }
    }

    /// Same as [`push`](Self::push) for the inner factor `S`.
    pub fn push_inner(&mut self, i: usize, j: usize, v: Complex64) {
        if i == j {
            debug_assert!(v.im.abs() <= 1e-14 * (1.0 + v.re.abs()));
            self.inner.push((i, i, Complex64::new(v.re, 0.0)));
        } else {
            self.inner.push((i, j, v));
            self.inner.push((j, i, v.conj()));
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut e = Self::new();
        for i in 0..n {
            e.push(i, i, Complex64::new(1.0, 0.0));
        }
        e
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty() && self.inner.is_empty()
    }

    /// Adds `scale` times this coefficient to a dense complex matrix.
    pub fn add_to_dense(&self, target: &mut CMat, basis: Option<&CMat>, scale: f64) {
        for &(i, j, v) in &self.entries {
            target[(i, j)] += v * scale;
        }
        if !self.inner.is_empty() {
            let u = basis.expect("inner atoms need a basis");
            let k = u.nrows();
            let mut s = CMat::zeros(k, k);
            for &(g, h, v) in &self.inner {
                s[(g, h)] += v * scale;
            }
            *target += u.adjoint() * s * u;
        }
    }

}

/// Real atoms of `(2*half) * embed(.)` restricted to a complex space of
/// dimension `n`; the half in the value compensates the doubled inner
/// products of the embedding.
fn embed_atoms_dim(
    list: &[(usize, usize, Complex64)],
    n: usize,
    half: f64,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::with_capacity(list.len() * 2);
    for &(i, j, v) in list {
        if v.re != 0.0 {
            out.push((i, j, half * v.re));
            out.push((i + n, j + n, half * v.re));
        }
        if v.im != 0.0 {
            out.push((i, j + n, -half * v.im));
            out.push((i + n, j, half * v.im));
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub dim: usize,
    pub basis: Option<CMat>,
    pub g0: CElems,
    pub coeffs: Vec<(usize, CElems)>,
}

impl LmiBlock {
    /// Dense value `G0 + sum_k y_k G_k`.
    pub fn eval(&self, y: &[f64]) -> HermitianMatrix {
        let mut m = CMat::zeros(self.dim, self.dim);
        self.g0.add_to_dense(&mut m, self.basis.as_ref(), 1.0);
        for (k, g) in &self.coeffs {
            if y[*k] != 0.0 {
                g.add_to_dense(&mut m, self.basis.as_ref(), y[*k]);
            }
        }
        HermitianMatrix::from_nearly(m).expect("finite")
    }
}

/// `g0 + sum_k y_k coeff_k >= 0`.
#[derive(Debug, Clone, Default)]
pub struct LmiScalarRow {
    pub g0: f64,
    pub coeffs: Vec<(usize, f64)>,
}

#[derive(Debug, Clone)]
pub struct LmiProblem {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub var_signs: Vec<VarSign>,
    pub blocks: Vec<LmiBlock>,
    pub scalar_rows: Vec<LmiScalarRow>,
    pub maximize: bool,
    pub offset: f64,
}

#[derive(Debug, Clone)]
pub struct LmiSolution {
    pub status: LmiStatus,
    pub y: Vec<f64>,
    /// Objective in the user's sense, offset included.
    pub value: f64,
    /// Conic-primal multipliers, one Hermitian matrix per LMI block.
    pub multiplier_blocks: Vec<HermitianMatrix>,
    /// Multipliers of the scalar rows.
    pub multiplier_scalars: Vec<f64>,
    pub iterations: usize,
    pub pres: f64,
    pub dres: f64,
    pub gap_rel: f64,
}

impl LmiProblem {
    pub fn validate(&self) -> Result<(), LmiError> {
        if self.num_vars == 0 {
            return Err(LmiError::Malformed("no variables".into()));
        }
        if self.objective.len() != self.num_vars || self.var_signs.len() != self.num_vars {
            return Err(LmiError::Malformed("objective/sign length mismatch".into()));
        }
        let mut used = vec![false; self.num_vars];
        for b in &self.blocks {
            if b.dim == 0 {
                return Err(LmiError::Malformed("zero-dimensional block".into()));
            }
            if let Some(u) = &b.basis {
                if u.ncols() != b.dim {
                    return Err(LmiError::Malformed("basis dimension mismatch".into()));
                }
            }
            for (k, g) in &b.coeffs {
                if *k >= self.num_vars {
                    return Err(LmiError::Malformed("bad variable index".into()));
                }
                if !g.is_empty() {
                    used[*k] = true;
                }
            }
        }
        for r in &self.scalar_rows {
            for &(k, v) in &r.coeffs {
                if k >= self.num_vars {
                    return Err(LmiError::Malformed("bad variable index".into()));
                }
                if v != 0.0 {
                    used[k] = true;
                }
            }
        }
        for (k, sign) in self.var_signs.iter().enumerate() {
            if *sign == VarSign::Nonneg {
                used[k] = true;
            }
        }
        if let Some(k) = used.iter().position(|u| !u) {
            return Err(LmiError::Malformed(format!(
                "variable {k} appears in no block, row, or sign constraint"
            )));
        }
        Ok(())
    }

    /// Recomputes the objective at a given point.
    pub fn objective_at(&self, y: &[f64]) -> f64 {
        self.offset
            + self
                .objective
                .iter()
                .zip(y.iter())
                .map(|(c, v)| c * v)
                .sum::<f64>()
    }

    pub fn solve(&self, tol: f64) -> Result<LmiSolution, LmiError> {
        self.validate()?;
        let num_sign_slots = self
            .var_signs
            .iter()
            .filter(|s| **s == VarSign::Nonneg)
            .count();
        let num_scalars = self.scalar_rows.len() + num_sign_slots;

        let blocks: Vec<ConicBlock> = self
            .blocks
            .iter()
            .map(|b| ConicBlock {
                dim: 2 * b.dim,
                basis: b.basis.as_ref().map(embed_rect),
            })
            .collect();

        let cost_blocks: Vec<RMat> = self
            .blocks
            .iter()
            .map(|b| {
                let mut g0 = CMat::zeros(b.dim, b.dim);
                b.g0.add_to_dense(&mut g0, b.basis.as_ref(), 1.0);
                HermitianMatrix::from_nearly(g0).expect("finite").embed().scale(0.5)
            })
            .collect();
        let mut cost_scalars: Vec<f64> = self.scalar_rows.iter().map(|r| r.g0).collect();
        cost_scalars.resize(num_scalars, 0.0);

        // One equality row per LMI variable.
        let obj_sign = if self.maximize { 1.0 } else { -1.0 };
        let mut rows: Vec<ConicRow> = (0..self.num_vars)
            .map(|k| ConicRow {
                blocks: Vec::new(),
                scalars: Vec::new(),
                rhs: obj_sign * self.objective[k],
            })
            .collect();
        for (bi, b) in self.blocks.iter().enumerate() {
            for (k, g) in &b.coeffs {
                let elems = {
                    let half = -0.5;
                    Elems {
                        entries: embed_atoms_dim(&g.entries, b.dim, half),
                        inner: embed_atoms_dim(
                            &g.inner,
                            b.basis.as_ref().map(|u| u.nrows()).unwrap_or(0),
                            half,
                        ),
                    }
                };
                if let Some((_, existing)) = rows[*k].blocks.iter_mut().find(|(i, _)| *i == bi) {
                    existing.entries.extend(elems.entries);
                    existing.inner.extend(elems.inner);
                } else {
                    rows[*k].blocks.push((bi, elems));
                }
            }
        }
        for (ri, r) in self.scalar_rows.iter().enumerate() {
            for &(k, v) in &r.coeffs {
                rows[k].scalars.push((ri, -v));
            }
        }
        let mut slot = self.scalar_rows.len();
        for (k, sign) in self.var_signs.iter().enumerate() {
            if *sign == VarSign::Nonneg {
                rows[k].scalars.push((slot, -1.0));
                slot += 1;
            }
        }
        for r in rows.iter_mut() {
            r.blocks.sort_by_key(|(bi, _)| *bi);
            r.scalars.sort_by_key(|(s, _)| *s);
        }

        let mut conic = ConicProblem {
            blocks,
            num_scalars,
            cost_blocks,
            cost_scalars,
            rows,
        };
        let scaling = equilibrate(&mut conic);
        let settings = ConicSettings {
            tol,
            ..ConicSettings::default()
        };
        let engine = Engine::new(&conic, settings).map_err(|e| LmiError::Malformed(e.to_string()))?;
        let mut raw = engine.solve();
        scaling.unscale(&mut raw);

        let status = match raw.status {
            ConicStatus::Optimal => LmiStatus::Optimal,
            ConicStatus::DualInfeasible => LmiStatus::Infeasible,
            ConicStatus::PrimalInfeasible => LmiStatus::Unbounded,
            ConicStatus::NumericalTrouble => LmiStatus::NumericalTrouble,
            ConicStatus::IterationLimit => LmiStatus::IterationLimit,
        };
        let mut y: Vec<f64> = (0..self.num_vars).map(|k| raw.y[k]).collect();
        if !self.maximize {
            for v in y.iter_mut() {
                *v = -*v;
            }
        }
        let value = self.objective_at(&y);
        let multiplier_blocks: Vec<HermitianMatrix> = raw
            .x_blocks
            .iter()
            .map(|x| HermitianMatrix::from_nearly(unembed_sym(x)).expect("finite"))
            .collect();
        let multiplier_scalars = raw.x_scalars[..self.scalar_rows.len()].to_vec();

        Ok(LmiSolution {
            status,
            y,
            value,
            multiplier_blocks,
            multiplier_scalars,
            iterations: raw.iterations,
            pres: raw.pres,
            dres: raw.dres,
            gap_rel: raw.gap_rel,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// minimize x s.t. [[x, 1], [1, x]] >= 0 in native LMI form: x* = 1.
    #[test]
    fn min_x_arrow_lmi() {
        let mut g0 = CElems::new();
        g0.push(0, 1, c(1.0, 0.0));
        let mut gx = CElems::new();
        gx.push(0, 0, c(1.0, 0.0));
        gx.push(1, 1, c(1.0, 0.0));
        let p = LmiProblem {
            num_vars: 1,
            objective: vec![1.0],
            var_signs: vec![VarSign::Free],
            blocks: vec![LmiBlock {
                dim: 2,
                basis: None,
                g0,
                coeffs: vec![(0, gx)],
            }],
            scalar_rows: vec![],
            maximize: false,
            offset: 0.0,
        };
        let sol = p.solve(1e-9).unwrap();
        assert_eq!(sol.status, LmiStatus::Optimal);
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-6);
        assert_relative_eq!(sol.value, 1.0, epsilon = 1e-6);
    }

    /// max y s.t. y <= 3 (scalar row) and y I - C >= 0 with
    /// lambda_max(C) = sqrt(5) > 3: the scalar row binds.
    #[test]
    fn scalar_rows_and_blocks_mix() {
        let mut g0 = CElems::new();
        g0.push(0, 0, c(-1.0, 0.0));
        g0.push(0, 1, c(-2.0, 0.0));
        g0.push(1, 1, c(1.0, 0.0));
        let p = LmiProblem {
            num_vars: 1,
            objective: vec![1.0],
            var_signs: vec![VarSign::Free],
            blocks: vec![LmiBlock {
                dim: 2,
                basis: None,
                g0,
                coeffs: vec![(0, CElems::identity(2))],
            }],
            scalar_rows: vec![LmiScalarRow {
                g0: 3.0,
                coeffs: vec![(0, -1.0)],
            }],
            maximize: true,
            offset: 0.0,
        };
        let sol = p.solve(1e-9).unwrap();
        assert_eq!(sol.status, LmiStatus::Optimal);
        assert_relative_eq!(sol.y[0], 3.0, epsilon = 1e-6);
    }

    /// min y s.t. y I - C >= 0 gives lambda_max(C), complex data.
    #[test]
    fn complex_lambda_max_lmi() {
        let mut g0 = CElems::new();
        g0.push(0, 1, c(0.0, -1.0)); // -C with C = [[0, i], [-i, 0]]
        let p = LmiProblem {
            num_vars: 1,
            objective: vec![1.0],
            var_signs: vec![VarSign::Free],
            blocks: vec![LmiBlock {
                dim: 2,
                basis: None,
                g0,
                coeffs: vec![(0, CElems::identity(2))],
            }],
            scalar_rows: vec![],
            maximize: false,
            offset: 0.0,
        };
        let sol = p.solve(1e-9).unwrap();
        assert_eq!(sol.status, LmiStatus::Optimal);
        assert_relative_eq!(sol.y[0], 1.0, epsilon = 1e-6);
        let z = p.blocks[0].eval(&sol.y);
        assert!(z.is_psd(1e-7));
    }

    /// Infeasible LMI: y >= 0 with scalar row -1 - y >= 0.
    #[test]
    fn infeasible_lmi() {
        let p = LmiProblem {
            num_vars: 1,
            objective: vec![1.0],
            var_signs: vec![VarSign::Nonneg],
            blocks: vec![],
            scalar_rows: vec![LmiScalarRow {
                g0: -1.0,
                coeffs: vec![(0, -1.0)],
            }],
            maximize: true,
            offset: 0.0,
        };
        let sol = p.solve(1e-8).unwrap();
        assert_eq!(sol.status, LmiStatus::Infeasible);
    }

    /// Factored (congruence) coefficients agree with the dense pose:
    /// block U^H diag(y) U + I with U = [I u].
    #[test]
    fn factored_congruence_matches_dense() {
        let u_col = c(0.6, -0.8);
        let mut basis = CMat::zeros(1, 2);
        basis[(0, 0)] = c(1.0, 0.0);
        basis[(0, 1)] = u_col;

        // maximize y s.t. I + y * U^H [1] U >= 0... with the rank-one
        // bordered form the top-left entry gives 1 + y >= 0-ish bound.
        let mut coeff_fact = CElems::new();
        coeff_fact.push_inner(0, 0, c(1.0, 0.0));
        let p_fact = LmiProblem {
            num_vars: 1,
            objective: vec![1.0],
            var_signs: vec![VarSign::Free],
            blocks: vec![LmiBlock {
                dim: 2,
                basis: Some(basis.clone()),
                g0: CElems::identity(2),
                coeffs: vec![(0, coeff_fact)],
            }],
            scalar_rows: vec![],
            maximize: false,
            offset: 0.0,
        };

        // dense equivalent: U^H U = [[1, u],[u*, |u|^2]]
        let uu = basis.adjoint() * &basis;
        let mut coeff_dense = CElems::new();
        coeff_dense.push(0, 0, uu[(0, 0)]);
        coeff_dense.push(0, 1, uu[(0, 1)]);
        coeff_dense.push(1, 1, uu[(1, 1)]);
        let p_dense = LmiProblem {
            num_vars: 1,
            objective: vec![1.0],
            var_signs: vec![VarSign::Free],
            blocks: vec![LmiBlock {
                dim: 2,
                basis: None,
                g0: CElems::identity(2),
                coeffs: vec![(0, coeff_dense)],
            }],
            scalar_rows: vec![],
            maximize: false,
            offset: 0.0,
        };

        let s1 = p_fact.solve(1e-9).unwrap();
        let s2 = p_dense.solve(1e-9).unwrap();
        assert_eq!(s1.status, LmiStatus::Optimal);
        assert_eq!(s2.status, LmiStatus::Optimal);
        assert_relative_eq!(s1.value, s2.value, epsilon = 1e-6);
    }
}
