//! Compressed sparse row storage and a reusable direct factorization.
//!
//! Factorization works on a symmetrically equilibrated copy `D A D`. The
//! first attempt is a supernodal Cholesky. Symmetric indefinite systems go
//! through an `LDLᵀ` with sign-guided dynamic pivot regularization, and a
//! sparse LU with partial pivoting is the last resort. Every solve is
//! followed by iterative refinement against the unscaled matrix.

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::cholesky::llt::factor::LltRegularization;
use faer::linalg::solvers::SolveCore;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, LdltRef, LltRef, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, SymbolicSparseColMat};
use faer::{Conj, MatMut, Par, Side};
use log::{debug, warn};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("right-hand side has length {got}, system has {expected} unknowns")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("row {row} of the system matrix is identically zero")]
    ZeroRow { row: usize },
    #[error("factorization broke down: {0}")]
    Breakdown(String),
    #[error("solve did not converge: relative residual {residual:e} after {iterations} refinement steps")]
    NoConvergence { residual: f64, iterations: usize },
    #[error("non-finite value in right-hand side or solution")]
    NonFinite,
}

/// Square sparse matrix in CSR form with sorted, duplicate-free rows.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Sums duplicate entries; explicit zeros are kept so the pattern is
    /// independent of the values.
    pub fn from_triplets(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|a| (a.0, a.1));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut values: Vec<f64> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in entries {
            assert!(i < n && j < n, "entry ({i}, {j}) outside {n}x{n}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[r.clone()].binary_search(&j) {
            Ok(k) => self.values[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(j, v)| v * x[j]).sum()).collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// `max |A - Aᵀ| / max |A|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        let scale = self.max_abs();
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// Replaces row and column `dof` by `diag` on the diagonal, decoupling
    /// that unknown from the rest of the system.
    pub fn pin(&mut self, dof: usize, diag: f64) {
        for i in 0..self.n {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            for k in r {
                let j = self.col_idx[k];
                if i == dof || j == dof {
                    self.values[k] = if i == j { diag } else { 0.0 };
                }
            }
        }
        if self.get(dof, dof) != diag {
            // diagonal slot absent from the pattern
            let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(self.nnz() + 1);
            for i in 0..self.n {
                entries.extend(self.row(i).map(|(j, v)| (i, j, v)));
            }
            entries.push((dof, dof, diag));
            *self = Self::from_triplets(self.n, entries);
        }
    }

    pub fn zero_row(&self) -> Option<usize> {
        (0..self.n).find(|&i| self.row(i).all(|(_, v)| v == 0.0))
    }

    fn to_faer_scaled(&self, scale: &[f64]) -> SparseColMat<usize, f64> {
        // Symmetric pattern assumed: the CSR arrays of A are the CSC arrays of Aᵀ = A.
        let symbolic = SymbolicSparseColMat::new_checked(
            self.n,
            self.n,
            self.row_ptr.clone(),
            None,
            self.col_idx.clone(),
        );
        let mut values = Vec::with_capacity(self.nnz());
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                values.push(scale[i] * v * scale[j]);
            }
        }
        SparseColMat::new(symbolic, values)
    }

    fn has_symmetric_pattern(&self) -> bool {
        (0..self.n).all(|i| {
            let r = self.row_ptr[i]..self.row_ptr[i + 1];
            self.col_idx[r].iter().all(|&j| {
                let rj = self.row_ptr[j]..self.row_ptr[j + 1];
                self.col_idx[rj].binary_search(&i).is_ok()
            })
        })
    }
}

/// Which factorization ended up being used.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FactorKind {
    Cholesky,
    RegularizedLdlt,
    Lu,
}

enum Inner {
    Llt { symbolic: SymbolicCholesky<usize>, values: Vec<f64> },
    Ldlt { symbolic: SymbolicCholesky<usize>, values: Vec<f64> },
    Lu(Lu<usize, f64>),
}

/// Factorized system ready for repeated solves.
pub struct Factorization {
    matrix: CsrMatrix,
    scale: Vec<f64>,
    inner: Inner,
    pub kind: FactorKind,
}

impl std::fmt::Debug for Factorization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Factorization")
            .field("n", &self.matrix.n)
            .field("nnz", &self.matrix.nnz())
            .field("kind", &self.kind)
            .finish()
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    /// `‖b - A x‖ / ‖b‖`.
    pub residual: f64,
    /// The same ratio for the equilibrated system.
    pub scaled_residual: f64,
    pub refinements: usize,
}

const TARGET_RESIDUAL: f64 = 1e-11;
const ACCEPT_RESIDUAL: f64 = 1e-10;
const MAX_REFINEMENTS: usize = 30;

impl Factorization {
    /// Factorizes `matrix`. `signs` gives the expected inertia (+1/-1 per
    /// unknown) for symmetric indefinite systems; without it only Cholesky
    /// and LU are tried.
    pub fn new(matrix: CsrMatrix, signs: Option<&[i8]>) -> Result<Self, SolveError> {
        if let Some(row) = matrix.zero_row() {
            return Err(SolveError::ZeroRow { row });
        }
        if !matrix.has_symmetric_pattern() {
            return Err(SolveError::Breakdown("matrix pattern is not symmetric".into()));
        }
        let scale = equilibrate(&matrix);
        let scaled = matrix.to_faer_scaled(&scale);
        let n = matrix.n;
        let symbolic = factorize_symbolic_cholesky(
            scaled.symbolic(),
            Side::Lower,
            SymmetricOrdering::Amd,
            Default::default(),
        )
        .map_err(|e| SolveError::Breakdown(format!("symbolic analysis: {e:?}")))?;
        let mut mem = MemBuffer::new(StackReq::any_of(&[
            symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()),
            symbolic.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()),
        ]));

        let mut values = vec![0.0; symbolic.len_val()];
        let llt = symbolic
            .factorize_numeric_llt(
                &mut values,
                scaled.as_ref(),
                Side::Lower,
                LltRegularization::default(),
                Par::Seq,
                MemStack::new(&mut mem),
                Default::default(),
            )
            .map(|_| ());
        let mut candidate = match (llt, signs) {
            (Ok(()), _) => Some((Inner::Llt { symbolic, values }, FactorKind::Cholesky)),
            (Err(err), Some(signs)) => {
                debug!("Cholesky failed ({err:?}); trying sign-regularized LDLT");
                assert_eq!(signs.len(), n);
                let reg = LdltRegularization {
                    dynamic_regularization_signs: Some(signs),
                    dynamic_regularization_delta: 1e-11,
                    dynamic_regularization_epsilon: 1e-13,
                };
                values.iter_mut().for_each(|v| *v = 0.0);
                let ldlt = symbolic
                    .factorize_numeric_ldlt(
                        &mut values,
                        scaled.as_ref(),
                        Side::Lower,
                        reg,
                        Par::Seq,
                        MemStack::new(&mut mem),
                        Default::default(),
                    )
                    .map(|_| ());
                match ldlt {
                    Ok(()) => Some((Inner::Ldlt { symbolic, values }, FactorKind::RegularizedLdlt)),
                    Err(e) => {
                        debug!("LDLT failed: {e:?}");
                        None
                    }
                }
            }
            (Err(err), None) => {
                debug!("Cholesky failed ({err:?})");
                None
            }
        };
        drop(mem);

        if let Some((inner, kind)) = candidate.take() {
            let f = Self { matrix: matrix.clone(), scale: scale.clone(), inner, kind };
            if f.probe() {
                return Ok(f);
            }
            debug!("{kind:?} factorization failed the residual probe");
        }
        warn!("falling back to sparse LU for a {n}-unknown system");
        let lu = scaled.sp_lu().map_err(|e| SolveError::Breakdown(format!("LU: {e:?}")))?;
        let f = Self { matrix, scale, inner: Inner::Lu(lu), kind: FactorKind::Lu };
        if f.probe() {
            Ok(f)
        } else {
            Err(SolveError::Breakdown("no factorization reached the residual target".into()))
        }
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.matrix.n
    }

    fn probe(&self) -> bool {
        let b: Vec<f64> = (0..self.n()).map(|i| ((i * 7919) % 104_729) as f64 / 104_729.0 - 0.5).collect();
        matches!(self.solve_with_report(&b), Ok((_, r)) if r.scaled_residual <= ACCEPT_RESIDUAL)
    }

    /// Applies the raw (unrefined) inverse of the scaled factor.
    fn apply_inverse(&self, r: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = r.iter().zip(&self.scale).map(|(a, d)| a * d).collect();
        {
            let rhs = MatMut::from_column_major_slice_mut(&mut y, n, 1);
            match &self.inner {
                Inner::Llt { symbolic, values } => {
                    let mut mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
                    LltRef::new(symbolic, values).solve_in_place_with_conj(
                        Conj::No,
                        rhs,
                        Par::Seq,
                        MemStack::new(&mut mem),
                    );
                }
                Inner::Ldlt { symbolic, values } => {
                    let mut mem = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
                    LdltRef::new(symbolic, values).solve_in_place_with_conj(
                        Conj::No,
                        rhs,
                        Par::Seq,
                        MemStack::new(&mut mem),
                    );
                }
                Inner::Lu(lu) => lu.solve_in_place_with_conj(Conj::No, rhs),
            }
        }
        y.iter_mut().zip(&self.scale).for_each(|(a, d)| *a *= d);
        y
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolveError> {
        let (x, report) = self.solve_with_report(b)?;
        if report.scaled_residual > ACCEPT_RESIDUAL {
            return Err(SolveError::NoConvergence {
                residual: report.scaled_residual,
                iterations: report.refinements,
            });
        }
        Ok(x)
    }

    /// Solves with iterative refinement. Refinement stops once the relative
    /// residual of the equilibrated system `D A D` reaches the target or
    /// stagnates; both that and the plain relative residual are reported.
    pub fn solve_with_report(&self, b: &[f64]) -> Result<(Vec<f64>, SolveReport), SolveError> {
        let n = self.n();
        if b.len() != n {
            return Err(SolveError::DimensionMismatch { expected: n, got: b.len() });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(SolveError::NonFinite);
        }
        let b_norm = norm2(b);
        if b_norm == 0.0 {
            return Ok((vec![0.0; n], SolveReport { residual: 0.0, scaled_residual: 0.0, refinements: 0 }));
        }
        let db_norm = norm2(&b.iter().zip(&self.scale).map(|(x, d)| x * d).collect::<Vec<_>>());
        let mut x = self.apply_inverse(b);
        let mut best: Option<(Vec<f64>, SolveReport)> = None;
        let mut refinements = 0;
        loop {
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
            let residual = norm2(&r) / b_norm;
            let scaled_residual =
                norm2(&r.iter().zip(&self.scale).map(|(x, d)| x * d).collect::<Vec<_>>()) / db_norm;
            if !scaled_residual.is_finite() {
                return Err(SolveError::NonFinite);
            }
            let previous = best.as_ref().map_or(f64::INFINITY, |b| b.1.scaled_residual);
            if scaled_residual < previous {
                best = Some((x.clone(), SolveReport { residual, scaled_residual, refinements }));
            }
            if scaled_residual <= TARGET_RESIDUAL
                || refinements >= MAX_REFINEMENTS
                || scaled_residual > 0.5 * previous
            {
                break;
            }
            let dx = self.apply_inverse(&r);
            x.iter_mut().zip(&dx).for_each(|(a, d)| *a += d);
            refinements += 1;
        }
        Ok(best.expect("at least one residual evaluated"))
    }
}

/// Ruiz-style symmetric scaling: `d_i` such that every row of `D A D` has
/// max-norm close to one.
fn equilibrate(a: &CsrMatrix) -> Vec<f64> {
    let mut d = vec![1.0; a.n];
    for _ in 0..8 {
        let mut worst = 0.0f64;
        let row_max: Vec<f64> = (0..a.n)
            .map(|i| a.row(i).fold(0.0f64, |m, (j, v)| m.max((d[i] * v * d[j]).abs())))
            .collect();
        for i in 0..a.n {
            if row_max[i] > 0.0 {
                d[i] /= row_max[i].sqrt();
                worst = worst.max((1.0 - row_max[i]).abs());
            }
        }
        if worst < 1e-2 {
            break;
        }
    }
    d
}

pub fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 4.0), (0, 1, 4.0)]);
        assert_eq!(m.get(0, 0), 3.0);
        assert_eq!(m.nnz(), 3);
        assert_eq!(m.asymmetry(), 0.0);
    }

    #[test]
    fn spd_uses_cholesky() {
        let f = Factorization::new(laplacian_1d(50), None).unwrap();
        assert_eq!(f.kind, FactorKind::Cholesky);
        let x = f.solve(&vec![1.0; 50]).unwrap();
        let r: Vec<f64> = f.matrix().mul_vec(&x).iter().map(|v| v - 1.0).collect();
        assert!(norm2(&r) < 1e-10);
    }

    #[test]
    fn saddle_point_uses_ldlt() {
        // [[2, 1], [1, 0]] with a decoupled third unknown
        let m = CsrMatrix::from_triplets(
            3,
            vec![(0, 0, 2.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0), (2, 2, 1.0), (2, 0, 0.5), (0, 2, 0.5)],
        );
        let f = Factorization::new(m.clone(), Some(&[1, -1, 1])).unwrap();
        assert_eq!(f.kind, FactorKind::RegularizedLdlt);
        let x = f.solve(&[1.0, 2.0, 3.0]).unwrap();
        let ax = m.mul_vec(&x);
        for (a, b) in ax.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_without_signs_falls_back_to_lu() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 0.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 0.0)]);
        let f = Factorization::new(m, None).unwrap();
        assert_eq!(f.kind, FactorKind::Lu);
        let x = f.solve(&[3.0, 5.0]).unwrap();
        assert!((x[0] - 5.0).abs() < 1e-12 && (x[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let f = Factorization::new(laplacian_1d(5), None).unwrap();
        assert_eq!(f.solve(&[0.0; 5]).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn zero_row_is_rejected() {
        let m = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 1, 0.0)]);
        assert_eq!(Factorization::new(m, None).unwrap_err(), SolveError::ZeroRow { row: 1 });
    }

    #[test]
    fn pin_decouples_unknown() {
        let mut m = laplacian_1d(4);
        m.pin(2, 1.0);
        assert_eq!(m.get(2, 1), 0.0);
        assert_eq!(m.get(1, 2), 0.0);
        assert_eq!(m.get(2, 2), 1.0);
        assert_eq!(m.asymmetry(), 0.0);
    }

    proptest! {
        #[test]
        fn round_trip_recovers_solution(xs in proptest::collection::vec(-10.0f64..10.0, 30)) {
            let m = laplacian_1d(30);
            let b = m.mul_vec(&xs);
            let f = Factorization::new(m, None).unwrap();
            let x = f.solve(&b).unwrap();
            let err = norm2(&x.iter().zip(&xs).map(|(a, b)| a - b).collect::<Vec<_>>());
            prop_assert!(err <= 1e-10 * norm2(&xs).max(1e-300) || norm2(&b) == 0.0);
        }
    }
}
