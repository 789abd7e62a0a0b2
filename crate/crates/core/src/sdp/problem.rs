//! Standard-form conic problems over Hermitian PSD blocks and nonnegative
//! scalars, with scalar equality/inequality rows.
//!
//! Complex Hermitian data is handled by the real symmetric embedding: each
//! Hermitian block of dimension `n` becomes a real block of dimension `2n`
//! and every inner product is scaled by one half, so objective and
//! constraint values are preserved exactly. Rank decisions are never made
//! on embedded matrices (the embedding doubles ranks); recovered complex
//! blocks are used instead.

use num_complex::Complex64;
use serde_json::json;

use crate::linalg::{unembed_sym, HermitianMatrix, RMat};

use super::engine::{
    equilibrate, ConicBlock, ConicProblem, ConicRow, ConicSettings, ConicStatus, Elems, Engine,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible,
    NumericalTrouble,
    IterationLimit,
}

#[derive(Debug, thiserror::Error)]
pub enum SdpError {
    #[error("malformed problem: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone)]
pub struct SdpCost {
    pub blocks: Vec<HermitianMatrix>,
    pub scalars: Vec<f64>,
}

/// One scalar row `sum_b <A_b, X_b> + sum_s a_s x_s  (= | <=)  rhs`.
#[derive(Debug, Clone)]
pub struct SdpConstraint {
    pub blocks: Vec<(usize, HermitianMatrix)>,
    pub scalars: Vec<(usize, f64)>,
    pub rhs: f64,
    pub relation: Relation,
}

#[derive(Debug, Clone)]
pub struct SdpProblem {
    pub block_dims: Vec<usize>,
    pub num_scalars: usize,
    pub cost: SdpCost,
    pub constraints: Vec<SdpConstraint>,
    pub sense: Sense,
}

#[derive(Debug, Clone)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap_abs: f64,
    pub gap_rel: f64,
}

/// Primal-dual certificate. Dual multipliers follow the Lagrangian
/// convention that makes the dual slack PSD: `Z = C - sum y_i A_i` for
/// minimization and `Z = sum y_i A_i - C` for maximization; multipliers of
/// `<=` rows then come out nonpositive (minimize) or nonnegative
/// (maximize) automatically.
#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub status: SdpStatus,
    pub primal_blocks: Vec<HermitianMatrix>,
    pub primal_scalars: Vec<f64>,
    pub dual_multipliers: Vec<f64>,
    pub dual_blocks: Vec<HermitianMatrix>,
    pub dual_scalars: Vec<f64>,
    /// Objective in the user's sense.
    pub objective: f64,
    pub residuals: Residuals,
    pub iterations: usize,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<(), SdpError> {
        if self.block_dims.is_empty() && self.num_scalars == 0 {
            return Err(SdpError::Malformed("no variables".into()));
        }
        if self.cost.blocks.len() != self.block_dims.len() {
            return Err(SdpError::Malformed("cost/block count mismatch".into()));
        }
        if self.cost.scalars.len() != self.num_scalars {
            return Err(SdpError::Malformed("cost/scalar count mismatch".into()));
        }
        for (bi, h) in self.cost.blocks.iter().enumerate() {
            if h.dim() != self.block_dims[bi] {
                return Err(SdpError::Malformed(format!("cost dim mismatch at block {bi}")));
            }
        }
        if self.constraints.is_empty() {
            return Err(SdpError::Malformed("no constraints".into()));
        }
        for (i, row) in self.constraints.iter().enumerate() {
            for (bi, h) in &row.blocks {
                if *bi >= self.block_dims.len() || h.dim() != self.block_dims[*bi] {
                    return Err(SdpError::Malformed(format!("row {i}: bad block coefficient")));
                }
            }
            for &(s, v) in &row.scalars {
                if s >= self.num_scalars || !v.is_finite() {
                    return Err(SdpError::Malformed(format!("row {i}: bad scalar coefficient")));
                }
            }
            if !row.rhs.is_finite() {
                return Err(SdpError::Malformed(format!("row {i}: non-finite rhs")));
            }
        }
        Ok(())
    }

    /// Debug dump (cone description plus dense matrices) for offline
    /// reproduction of an instance.
    pub fn dump_json(&self) -> serde_json::Value {
        let herm = |h: &HermitianMatrix| {
            let n = h.dim();
            let re: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| h.matrix()[(i, j)].re).collect())
                .collect();
            let im: Vec<Vec<f64>> = (0..n)
                .map(|i| (0..n).map(|j| h.matrix()[(i, j)].im).collect())
                .collect();
            json!({"dim": n, "re": re, "im": im})
        };
        json!({
            "block_dims": self.block_dims,
            "num_scalars": self.num_scalars,
            "sense": match self.sense { Sense::Minimize => "min", Sense::Maximize => "max" },
            "cost": {
                "blocks": self.cost.blocks.iter().map(herm).collect::<Vec<_>>(),
                "scalars": self.cost.scalars,
            },
            "constraints": self.constraints.iter().map(|c| json!({
                "blocks": c.blocks.iter().map(|(bi, h)| json!({"block": bi, "matrix": herm(h)})).collect::<Vec<_>>(),
                "scalars": c.scalars,
                "rhs": c.rhs,
                "relation": match c.relation { Relation::Eq => "eq", Relation::Le => "le" },
            })).collect::<Vec<_>>(),
        })
    }
}

/// Real atoms of `(scale/2) * embed(H)` for one Hermitian coefficient.
pub(crate) fn herm_to_real_elems(h: &HermitianMatrix, scale: f64) -> Elems {
    let n = h.dim();
    let mut entries = Vec::new();
    let half = 0.5 * scale;
    for j in 0..n {
        for i in 0..n {
            let z = h.matrix()[(i, j)];
            if z.re != 0.0 {
                entries.push((i, j, half * z.re));
                entries.push((i + n, j + n, half * z.re));
            }
            if z.im != 0.0 {
                entries.push((i, j + n, -half * z.im));
                entries.push((i + n, j, half * z.im));
            }
        }
    }
    Elems {
        entries,
        inner: Vec::new(),
    }
}

/// Dense `(scale/2) * embed(H)`.
pub(crate) fn herm_to_real_dense(h: &HermitianMatrix, scale: f64) -> RMat {
    h.embed().scale(0.5 * scale)
}

/// Solves a standard-form problem to the given relative tolerance.
pub fn solve_sdp(p: &SdpProblem, tol: f64) -> Result<SdpSolution, SdpError> {
    p.validate()?;
    let sign = match p.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };
    let n_ineq = p
        .constraints
        .iter()
        .filter(|c| c.relation == Relation::Le)
        .count();
    let num_scalars = p.num_scalars + n_ineq;

    let blocks: Vec<ConicBlock> = p
        .block_dims
        .iter()
        .map(|&d| ConicBlock {
            dim: 2 * d,
            basis: None,
        })
        .collect();
    let cost_blocks: Vec<RMat> = p
        .cost
        .blocks
        .iter()
        .map(|h| herm_to_real_dense(h, sign))
        .collect();
    let mut cost_scalars: Vec<f64> = p.cost.scalars.iter().map(|v| v * sign).collect();
    cost_scalars.resize(num_scalars, 0.0);

    let mut rows = Vec::with_capacity(p.constraints.len());
    let mut slack = p.num_scalars;
    for c in &p.constraints {
        let mut blocks_e: Vec<(usize, Elems)> = c
            .blocks
            .iter()
            .map(|(bi, h)| (*bi, herm_to_real_elems(h, 1.0)))
            .collect();
        blocks_e.sort_by_key(|(bi, _)| *bi);
        let mut scalars = c.scalars.clone();
        if c.relation == Relation::Le {
            scalars.push((slack, 1.0));
            slack += 1;
        }
        scalars.sort_by_key(|(s, _)| *s);
        rows.push(ConicRow {
            blocks: blocks_e,
            scalars,
            rhs: c.rhs,
        });
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
    let engine = Engine::new(&conic, settings).map_err(|e| SdpError::Malformed(e.to_string()))?;
    let mut raw = engine.solve();
    scaling.unscale(&mut raw);

    let primal_blocks: Vec<HermitianMatrix> = raw
        .x_blocks
        .iter()
        .map(|x| HermitianMatrix::from_nearly(unembed_sym(x)).expect("finite"))
        .collect();
    // Dual slack of the embedded problem recovers to Z/2 because the data
    // carries the half scaling; undo it (and the minimization sign).
    let dual_blocks: Vec<HermitianMatrix> = raw
        .z_blocks
        .iter()
        .map(|z| {
            HermitianMatrix::from_nearly(unembed_sym(z).map(|v| v * 2.0 * sign)).expect("finite")
        })
        .collect();
    let dual_multipliers: Vec<f64> = (0..p.constraints.len()).map(|i| sign * raw.y[i]).collect();
    let dual_scalars: Vec<f64> = raw.z_scalars[..p.num_scalars]
        .iter()
        .map(|v| v * sign)
        .collect();

    let status = match raw.status {
        ConicStatus::Optimal => SdpStatus::Optimal,
        ConicStatus::PrimalInfeasible => SdpStatus::PrimalInfeasible,
        ConicStatus::DualInfeasible => SdpStatus::DualInfeasible,
        ConicStatus::NumericalTrouble => SdpStatus::NumericalTrouble,
        ConicStatus::IterationLimit => SdpStatus::IterationLimit,
    };

    Ok(SdpSolution {
        status,
        primal_blocks,
        primal_scalars: raw.x_scalars[..p.num_scalars].to_vec(),
        dual_multipliers,
        dual_blocks,
        dual_scalars,
        objective: sign * raw.pobj,
        residuals: Residuals {
            primal: raw.pres,
            dual: raw.dres,
            gap_abs: raw.gap_abs,
            gap_rel: raw.gap_rel,
        },
        iterations: raw.iterations,
    })
}

/// Real embedding of a whole problem: every Hermitian block of dimension
/// `n` becomes a real symmetric block (zero imaginary part) of dimension
/// `2n`; all matrix inner products are scaled by one half so objective and
/// constraint values are preserved exactly.
pub fn embed_problem(p: &SdpProblem) -> SdpProblem {
    let embed_h = |h: &HermitianMatrix| {
        HermitianMatrix::new(h.embed().scale(0.5).map(|v| Complex64::new(v, 0.0)))
            .expect("embedding is symmetric")
    };
    SdpProblem {
        block_dims: p.block_dims.iter().map(|&d| 2 * d).collect(),
        num_scalars: p.num_scalars,
        cost: SdpCost {
            blocks: p.cost.blocks.iter().map(embed_h).collect(),
            scalars: p.cost.scalars.clone(),
        },
        constraints: p
            .constraints
            .iter()
            .map(|c| SdpConstraint {
                blocks: c
                    .blocks
                    .iter()
                    .map(|(bi, h)| (*bi, embed_h(h)))
                    .collect(),
                scalars: c.scalars.clone(),
                rhs: c.rhs,
                relation: c.relation,
            })
            .collect(),
        sense: p.sense,
    }
}

/// Maps a primal block of the embedded problem back to the complex block
/// of the original: averages the two real copies and antisymmetrizes the
/// off-diagonal couplings.
pub fn recover_embedded_primal(block: &HermitianMatrix) -> HermitianMatrix {
    let real: RMat = block.matrix().map(|z| z.re);
    HermitianMatrix::from_nearly(unembed_sym(&real)).expect("finite")
}
