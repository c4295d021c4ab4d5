//! The linear map `X ↦ (tr(G_i X))_i`, its adjoint, and bases of its kernel.
//!
//! Everything is expressed in the orthonormal coordinate basis of
//! [`HermitianMatrix::coords`], so the singular values of the coordinate
//! matrix are those of the map itself.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::MeasurementEnsemble;
use crate::hermitian::{antidiag_include_imag, antidiag_include_real, gamma, hs_inner, HermitianMatrix};
use crate::linalg;
use crate::nonsingular::{self, DEFAULT_MAX_RETRIES};

/// Singular values below this multiple of `sigma_max` span the kernel.
pub const KERNEL_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct MeasurementOperator {
    ensemble: MeasurementEnsemble,
    coord: DMatrix<f64>,
    pinv: DMatrix<f64>,
    singular_values: Vec<f64>,
}

impl MeasurementOperator {
    pub fn new(ensemble: MeasurementEnsemble) -> Result<Self> {
        if ensemble.is_empty() {
            return Err(Error::InvalidParameter("ensemble has no operators".into()));
        }
        let rows = ensemble.coordinate_rows();
        let n2 = ensemble.n() * ensemble.n();
        let coord = linalg::matrix_from_rows(&rows, n2);
        let svd = coord.clone().svd(true, true);
        let mut singular_values: Vec<f64> = svd.singular_values.iter().copied().collect();
        singular_values.sort_by(|a, b| b.total_cmp(a));
        let smax = singular_values[0];
        let pinv = svd
            .pseudo_inverse(1e-13 * smax.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        Ok(Self {
            ensemble,
            coord,
            pinv,
            singular_values,
        })
    }

    pub fn ensemble(&self) -> &MeasurementEnsemble {
        &self.ensemble
    }

    pub fn n(&self) -> usize {
        self.ensemble.n()
    }

    pub fn m(&self) -> usize {
        self.ensemble.len()
    }

    /// The real `m × n²` coordinate matrix.
    pub fn coord(&self) -> &DMatrix<f64> {
        &self.coord
    }

    /// Moore-Penrose pseudoinverse of [`Self::coord`].
    pub fn pinv(&self) -> &DMatrix<f64> {
        &self.pinv
    }

    /// Singular values, non-increasing.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values[0]
    }

    /// Smallest of the `min(m, n²)` singular values.
    pub fn sigma_min(&self) -> f64 {
        *self.singular_values.last().expect("nonempty")
    }

    fn check_dim(&self, x: &HermitianMatrix) -> Result<()> {
        if x.n() != self.n() {
            return Err(Error::DimensionMismatch {
                expected: self.n(),
                got: x.n(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &HermitianMatrix) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.apply_coords(&x.coords()))
    }

    /// `tr(G_i X)` evaluated entrywise, bypassing the coordinate matrix.
    pub fn apply_direct(&self, x: &HermitianMatrix) -> Result<Vec<f64>> {
        self.ensemble.matrices().iter().map(|g| hs_inner(g, x)).collect()
    }

    pub fn adjoint(&self, y: &[f64]) -> Result<HermitianMatrix> {
        if y.len() != self.m() {
            return Err(Error::LengthMismatch {
                expected: self.m(),
                got: y.len(),
            });
        }
        HermitianMatrix::from_coords(self.n(), &self.adjoint_coords(y))
    }

    pub fn apply_coords(&self, c: &[f64]) -> Vec<f64> {
        (&self.coord * DVector::from_column_slice(c)).iter().copied().collect()
    }

    pub fn adjoint_coords(&self, y: &[f64]) -> Vec<f64> {
        (self.coord.tr_mul(&DVector::from_column_slice(y))).iter().copied().collect()
    }

    pub fn pinv_coords(&self, y: &[f64]) -> Vec<f64> {
        (&self.pinv * DVector::from_column_slice(y)).iter().copied().collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Structural,
    Numeric,
}

/// Hermitian matrices spanning the kernel of a measurement map.
#[derive(Clone, Debug)]
pub struct KernelBasis {
    pub elements: Vec<HermitianMatrix>,
    pub provenance: Provenance,
}

impl KernelBasis {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Orthonormal basis (in coordinates) of the span of the elements.
    pub fn orthonormal_coords(&self) -> Vec<Vec<f64>> {
        let Some(first) = self.elements.first() else {
            return Vec::new();
        };
        let n2 = first.n() * first.n();
        let rows: Vec<Vec<f64>> = self.elements.iter().map(HermitianMatrix::coords).collect();
        linalg::orthonormal_span(&rows, n2, 1e-12)
    }

    /// Largest `|tr(G_i Z)| / ||Z||` over operators `G_i` and elements `Z`.
    pub fn max_defect(&self, m: &MeasurementOperator) -> Result<f64> {
        let mut worst = 0.0f64;
        for z in &self.elements {
            let y = m.apply_direct(z)?;
            let s = z.frobenius_norm().max(f64::MIN_POSITIVE);
            worst = worst.max(y.iter().fold(0.0f64, |a, v| a.max(v.abs())) / s);
        }
        Ok(worst)
    }
}

/// Kernel read off the coefficient blocks: on every antidiagonal with
/// `γ(n,k) > r`, the columns of totally non-singular complements `B_k ⊥ A_k`
/// and `B'_k ⊥ A'_k` placed as `ι_k(b)` and `ι_k(i b')`.
///
/// Works for every structured recipe; the rank-one frame is handled through
/// its equivalent cos/sin coefficient columns. Complements are drawn with
/// seeds derived from `seed` and the antidiagonal.
pub fn kernel_basis_structural(ensemble: &MeasurementEnsemble, seed: u64) -> Result<KernelBasis> {
    let blocks = ensemble
        .structural_blocks()
        .ok_or_else(|| Error::InvalidParameter("custom ensembles have no structural kernel".into()))?;
    let (n, r) = (ensemble.n(), ensemble.r());
    let mut elements = Vec::new();
    for b in &blocks {
        let g = gamma(n, b.k)?;
        if g <= r {
            continue;
        }
        let kseed = seed.wrapping_add(2 * b.k as u64);
        let bk = nonsingular::tns_complement(&b.real_matrix(), kseed, DEFAULT_MAX_RETRIES)?;
        let bkp = nonsingular::tns_complement(&b.imag_matrix(), kseed + 1, DEFAULT_MAX_RETRIES)?;
        for c in 0..bk.ncols() {
            let col: Vec<f64> = bk.column(c).iter().copied().collect();
            elements.push(antidiag_include_real(n, b.k, &col)?);
        }
        for c in 0..bkp.ncols() {
            let col: Vec<f64> = bkp.column(c).iter().copied().collect();
            elements.push(antidiag_include_imag(n, b.k, &col)?);
        }
    }
    Ok(KernelBasis {
        elements,
        provenance: Provenance::Structural,
    })
}

/// Orthonormal SVD null-space basis of the coordinate matrix.
pub fn kernel_basis_numeric(m: &MeasurementOperator, tol: f64) -> Result<KernelBasis> {
    let n = m.n();
    let rows: Vec<Vec<f64>> = (0..m.m())
        .map(|i| m.coord().row(i).iter().copied().collect())
        .collect();
    let ns = linalg::null_space(&rows, n * n, tol);
    let elements = ns
        .iter()
        .map(|c| HermitianMatrix::from_coords(n, c))
        .collect::<Result<Vec<_>>>()?;
    Ok(KernelBasis {
        elements,
        provenance: Provenance::Numeric,
    })
}

/// Writes `index,value` rows with a header.
pub fn write_outcomes_csv<W: Write>(w: W, values: &[f64]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["index", "value"])?;
    for (i, v) in values.iter().enumerate() {
        wr.write_record([i.to_string(), format!("{v:e}")])?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads `index,value` rows; indices must be `0..m` in order.
pub fn read_outcomes_csv<R: Read>(r: R) -> Result<Vec<f64>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for rec in rd.deserialize::<(usize, f64)>() {
        let (i, v) = rec?;
        if i != out.len() {
            return Err(Error::InvalidParameter(format!(
                "outcome index {i} out of order, expected {}",
                out.len()
            )));
        }
        out.push(v);
    }
    Ok(out)
}

pub fn outcomes_to_json(values: &[f64]) -> Result<String> {
    Ok(serde_json::to_string(values)?)
}

pub fn outcomes_from_json(s: &str) -> Result<Vec<f64>> {
    Ok(serde_json::from_str(s)?)
}

/// Writes the coordinate matrix as headerless CSV, one operator per row.
pub fn write_coord_csv<W: Write>(w: W, m: &MeasurementOperator) -> Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.m() {
        wr.write_record(m.coord().row(i).iter().map(|v| format!("{v:e}")))?;
    }
    wr.flush()?;
    Ok(())
}
