//! Finite-element assembly and linear solves for both tissue models.

pub mod bidomain;
pub mod emi;
pub mod mtx;
pub mod p1;
pub mod rt0;
pub mod sparse;

use std::ops::Range;

use thiserror::Error;

pub use bidomain::{assemble_bidomain, assemble_bidomain_operator, BidomainDiscretization, BidomainParams};
pub use emi::{assemble_emi, EmiDiscretization, EmiDofs, EmiParams, GapForm};
pub use sparse::{CsrMatrix, FactorKind, Factorization, SolveError, SolveReport};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FemError {
    #[error("invalid parameter {name} = {value}: {reason}")]
    InvalidParameter { name: &'static str, value: f64, reason: &'static str },
    #[error("time step must be positive, got {0}")]
    NonPositiveStep(f64),
    #[error("system is singular beyond the pinned constant mode: unknown {row} ({field}) has an empty row")]
    Singular { row: usize, field: &'static str },
    #[error("facet {facet} has inconsistent orientation: {reason}")]
    Orientation { facet: usize, reason: String },
    #[error("mesh has no intracellular subdomain")]
    NoCells,
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveError),
}

/// Named contiguous blocks of unknowns in a global vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    pub blocks: Vec<(&'static str, Range<usize>)>,
    /// Unknown fixed to zero to remove the constant-potential null space.
    pub pinned: usize,
}

impl DofMap {
    pub fn len(&self) -> usize {
        self.blocks.last().map_or(0, |b| b.1.end)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block(&self, name: &str) -> Range<usize> {
        self.blocks.iter().find(|b| b.0 == name).map(|b| b.1.clone()).unwrap_or(0..0)
    }

    pub fn field_of(&self, dof: usize) -> &'static str {
        self.blocks.iter().find(|b| b.1.contains(&dof)).map_or("?", |b| b.0)
    }
}

/// Assembled and factorized implicit system, reused for every step with the
/// same mesh, parameters and time step.
#[derive(Debug)]
pub struct LinearSystem {
    pub dofs: DofMap,
    factor: Factorization,
}

impl LinearSystem {
    pub fn new(matrix: CsrMatrix, dofs: DofMap, signs: Option<&[i8]>) -> Result<Self, FemError> {
        let factor = Factorization::new(matrix, signs).map_err(|e| match e {
            SolveError::ZeroRow { row } => FemError::Singular { row, field: dofs.field_of(row) },
            other => FemError::Solve(other),
        })?;
        Ok(Self { dofs, factor })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        self.factor.matrix()
    }

    pub fn factor_kind(&self) -> FactorKind {
        self.factor.kind
    }

    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>, FemError> {
        let mut b = rhs.to_vec();
        if let Some(v) = b.get_mut(self.dofs.pinned) {
            *v = 0.0;
        }
        Ok(self.factor.solve(&b)?)
    }

    pub fn solve_with_report(&self, rhs: &[f64]) -> Result<(Vec<f64>, SolveReport), FemError> {
        let mut b = rhs.to_vec();
        if let Some(v) = b.get_mut(self.dofs.pinned) {
            *v = 0.0;
        }
        Ok(self.factor.solve_with_report(&b)?)
    }
}

/// Drops every off-diagonal entry touching a constrained unknown and replaces
/// its diagonal by `diag`.
pub(crate) fn constrain(entries: &mut Vec<(usize, usize, f64)>, fixed: &[bool], diag: &dyn Fn(usize) -> f64) {
    entries.retain(|&(i, j, _)| !(fixed[i] || fixed[j]));
    for (i, &f) in fixed.iter().enumerate() {
        if f {
            entries.push((i, i, diag(i)));
        }
    }
}
