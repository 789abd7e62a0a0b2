//! Independent KKT residual evaluation for standard-form problems: nothing
//! here reuses solver internals, so these numbers can falsify the engine.

use super::problem::{Relation, SdpProblem, SdpSolution, Sense};

#[derive(Debug, Clone)]
pub struct KktResiduals {
    pub primal_abs: f64,
    pub primal_rel: f64,
    pub dual_abs: f64,
    pub dual_rel: f64,
    /// Complementarity `<X, Z>` plus slack terms of inequality rows.
    pub comp_abs: f64,
    pub comp_rel: f64,
}

impl KktResiduals {
    pub fn max_rel(&self) -> f64 {
        self.primal_rel.max(self.dual_rel).max(self.comp_rel)
    }
}

/// Recomputes (primal residual, dual residual, complementarity) of a
/// primal-dual pair against the original problem data.
pub fn kkt_residuals(p: &SdpProblem, s: &SdpSolution) -> KktResiduals {
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Primal feasibility.
    let mut primal_sq = 0.0;
    let mut b_sq = 0.0;
    let mut comp = 0.0;
    for (i, row) in p.constraints.iter().enumerate() {
        let mut lhs = 0.0;
        for (bi, a) in &row.blocks {
            lhs += a.inner(&s.primal_blocks[*bi]);
        }
        for &(sc, v) in &row.scalars {
            lhs += v * s.primal_scalars[sc];
        }
        let viol = match row.relation {
            Relation::Eq => lhs - row.rhs,
            Relation::Le => (lhs - row.rhs).max(0.0),
        };
        primal_sq += viol * viol;
        b_sq += row.rhs * row.rhs;
        if row.relation == Relation::Le {
            // slack * multiplier, with the sign that makes it nonnegative
            // for a correct-sign dual.
            let slack = (row.rhs - lhs).max(0.0);
            comp += slack * (-sign * s.dual_multipliers[i]);
        }
    }
    let primal_abs = primal_sq.sqrt();
    let primal_rel = primal_abs / (1.0 + b_sq.sqrt());

    // Dual equation: Z = C - sum y A (minimize) or sum y A - C (maximize).
    let mut dual_sq = 0.0;
    let mut c_sq = 0.0;
    for (bi, &dim) in p.block_dims.iter().enumerate() {
        let mut acc = p.cost.blocks[bi].scale(sign);
        for (i, row) in p.constraints.iter().enumerate() {
            for (rbi, a) in &row.blocks {
                if *rbi == bi {
                    acc = acc.sub(&a.scale(sign * s.dual_multipliers[i]));
                }
            }
        }
        let resid = acc.sub(&s.dual_blocks[bi]);
        dual_sq += resid.inner(&resid);
        c_sq += p.cost.blocks[bi].inner(&p.cost.blocks[bi]);
        debug_assert_eq!(s.dual_blocks[bi].dim(), dim);
    }
    for sc in 0..p.num_scalars {
        let mut acc = sign * p.cost.scalars[sc];
        for (i, row) in p.constraints.iter().enumerate() {
            for &(rsc, v) in &row.scalars {
                if rsc == sc {
                    acc -= sign * s.dual_multipliers[i] * v;
                }
            }
        }
        let resid = acc - s.dual_scalars[sc];
        dual_sq += resid * resid;
        c_sq += p.cost.scalars[sc] * p.cost.scalars[sc];
    }
    let dual_abs = dual_sq.sqrt();
    let dual_rel = dual_abs / (1.0 + c_sq.sqrt());

    for (bi, _) in p.block_dims.iter().enumerate() {
        comp += s.primal_blocks[bi].inner(&s.dual_blocks[bi]);
    }
    for sc in 0..p.num_scalars {
        comp += s.primal_scalars[sc] * s.dual_scalars[sc];
    }
    let comp_abs = comp.abs();
    let comp_rel = comp_abs / (1.0 + s.objective.abs());

    KktResiduals {
        primal_abs,
        primal_rel,
        dual_abs,
        dual_rel,
        comp_abs,
        comp_rel,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CMat, HermitianMatrix};
    use crate::sdp::problem::{solve_sdp, Residuals, SdpConstraint, SdpCost, SdpStatus};
    use num_complex::Complex64;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lambda_max_problem() -> SdpProblem {
        let cm = HermitianMatrix::new(CMat::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(2.0, 0.0), c(2.0, 0.0), c(-1.0, 0.0)],
        ))
        .unwrap();
        SdpProblem {
            block_dims: vec![2],
            num_scalars: 0,
            cost: SdpCost {
                blocks: vec![cm],
                scalars: vec![],
            },
            constraints: vec![SdpConstraint {
                blocks: vec![(0, HermitianMatrix::identity(2))],
                scalars: vec![],
                rhs: 1.0,
                relation: Relation::Eq,
            }],
            sense: Sense::Maximize,
        }
    }

    /// Hand-built optimal pair: X = v v^T with v the top eigenvector,
    /// y = lambda_max, Z = y I - C.
    fn analytic_solution(p: &SdpProblem) -> SdpSolution {
        let lam = 5.0f64.sqrt();
        let (vals, vecs) = p.cost.blocks[0].eigh();
        assert!((vals[1] - lam).abs() < 1e-12);
        let v = vecs.column(1).into_owned();
        let x = HermitianMatrix::outer(&v);
        let z = HermitianMatrix::identity(2).scale(lam).sub(&p.cost.blocks[0]);
        SdpSolution {
            status: SdpStatus::Optimal,
            primal_blocks: vec![x],
            primal_scalars: vec![],
            dual_multipliers: vec![lam],
            dual_blocks: vec![z],
            dual_scalars: vec![],
            objective: lam,
            residuals: Residuals {
                primal: 0.0,
                dual: 0.0,
                gap_abs: 0.0,
                gap_rel: 0.0,
            },
            iterations: 0,
        }
    }

    #[test]
    fn analytic_pair_has_tiny_residuals() {
        let p = lambda_max_problem();
        let s = analytic_solution(&p);
        let r = kkt_residuals(&p, &s);
        assert!(r.primal_abs <= 1e-10, "primal {}", r.primal_abs);
        assert!(r.dual_abs <= 1e-10, "dual {}", r.dual_abs);
        assert!(r.comp_abs <= 1e-10, "comp {}", r.comp_abs);
    }

    #[test]
    fn perturbation_raises_primal_residual() {
        let p = lambda_max_problem();
        let mut s = analytic_solution(&p);
        let mut m = s.primal_blocks[0].matrix().clone();
        m[(0, 0)] += 1e-3;
        s.primal_blocks[0] = HermitianMatrix::from_nearly(m).unwrap();
        let r = kkt_residuals(&p, &s);
        assert!(r.primal_abs >= 1e-4, "primal {}", r.primal_abs);
    }

    #[test]
    fn solver_output_has_small_relative_residuals() {
        let p = lambda_max_problem();
        let s = solve_sdp(&p, 1e-9).unwrap();
        assert_eq!(s.status, SdpStatus::Optimal);
        let r = kkt_residuals(&p, &s);
        assert!(r.max_rel() <= 1e-7, "residuals {:?}", r);
    }
}
