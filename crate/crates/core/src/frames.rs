//! Explicit measurement ensembles: the rank-one phase frame, the
//! `R_k`/`I_k` Vandermonde families, the general antidiagonal recipe with
//! totally non-singular coefficient blocks, and the worked `n = 4` example.
//!
//! Operator order inside an ensemble is fixed: diagonal (or `C_r^n`) basis
//! first, then antidiagonals in ascending order.

use std::f64::consts::{PI, SQRT_2};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{
    antidiag_include_imag, antidiag_include_real, antidiag_positions, gamma,
    HermitianMatrix, C64,
};
use crate::nonsingular::{self, RealMatrix, DEFAULT_MINOR_TOL};

/// Hermitian defect tolerated when reading matrices back from JSON.
const READ_TOL: f64 = 1e-9;

/// Strictly increasing list of nonzero real nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeList(Vec<f64>);

impl NodeList {
    pub fn new(xs: Vec<f64>) -> Result<Self> {
        if xs.iter().any(|x| !x.is_finite() || *x == 0.0) {
            return Err(Error::InvalidParameter("nodes must be finite and nonzero".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter("nodes must be strictly increasing".into()));
        }
        Ok(Self(xs))
    }

    /// `k/(count+1)` for `k = 1..=count`.
    pub fn evenly_spaced(count: usize) -> Self {
        Self((1..=count).map(|k| k as f64 / (count + 1) as f64).collect())
    }

    /// Default nodes for the rank-one phase frame of dimension `n`: the
    /// tangents `tan(jπ/(2n−1))`, `j = 1..=2n−2`, without `j = n−1`.
    ///
    /// Evenly spaced nodes in `(0, 1)` make the frame numerically singular
    /// already around `n = 8`; these keep the smallest singular value orders
    /// of magnitude larger.
    pub fn tangent(n: usize) -> Self {
        let d = (2 * n - 1) as f64;
        let mut xs: Vec<f64> = (1..=2 * n - 2)
            .filter(|&j| j != n - 1)
            .map(|j| (j as f64 * PI / d).tan())
            .collect();
        xs.sort_by(f64::total_cmp);
        Self(xs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Coefficient pair for one antidiagonal: the columns of `real` are placed
/// as `ι_k(a)`, the columns of `imag` as `ι_k(i a')`. Stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBlock {
    pub k: usize,
    pub real: Vec<Vec<f64>>,
    pub imag: Vec<Vec<f64>>,
}

impl CoefficientBlock {
    pub fn from_matrices(k: usize, real: &RealMatrix, imag: &RealMatrix) -> Self {
        let rows = |m: &RealMatrix| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        Self {
            k,
            real: rows(real),
            imag: rows(imag),
        }
    }

    pub fn real_matrix(&self) -> RealMatrix {
        rows_to_matrix(&self.real)
    }

    pub fn imag_matrix(&self) -> RealMatrix {
        rows_to_matrix(&self.imag)
    }
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> RealMatrix {
    let ncols = rows.first().map_or(0, Vec::len);
    RealMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j])
}

/// How an ensemble was built, with the parameters needed to rebuild it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", content = "params", rename_all = "snake_case")]
pub enum Recipe {
    Thm1 { nodes: Vec<f64>, phase: f64 },
    Thm2 { nodes: Vec<f64> },
    Thm3 { blocks: Vec<CoefficientBlock> },
    #[serde(rename = "example_n4")]
    ExampleN4 {},
    Custom {},
}

impl Recipe {
    pub fn name(&self) -> &'static str {
        match self {
            Recipe::Thm1 { .. } => "thm1",
            Recipe::Thm2 { .. } => "thm2",
            Recipe::Thm3 { .. } => "thm3",
            Recipe::ExampleN4 {} => "example_n4",
            Recipe::Custom {} => "custom",
        }
    }
}

/// An ordered tuple of Hermitian operators on `C^n` plus its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementEnsemble {
    n: usize,
    r: usize,
    recipe: Recipe,
    matrices: Vec<HermitianMatrix>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleFile {
    n: usize,
    r: usize,
    #[serde(flatten)]
    recipe: Recipe,
    matrices: Vec<Vec<[f64; 2]>>,
}

impl MeasurementEnsemble {
    /// An ensemble with no construction guarantees attached.
    pub fn custom(n: usize, r: usize, matrices: Vec<HermitianMatrix>) -> Result<Self> {
        Self::with_recipe(n, r, Recipe::Custom {}, matrices)
    }

    fn with_recipe(n: usize, r: usize, recipe: Recipe, matrices: Vec<HermitianMatrix>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be positive".into()));
        }
        if let Some(bad) = matrices.iter().find(|m| m.n() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.n(),
            });
        }
        Ok(Self {
            n,
            r,
            recipe,
            matrices,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn recipe(&self) -> &Recipe {
        &self.recipe
    }

    pub fn matrices(&self) -> &[HermitianMatrix] {
        &self.matrices
    }

    pub fn len(&self) -> usize {
        self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrices.is_empty()
    }

    /// Same recipe tag with operator `index` dropped. Certification of the
    /// result is expected to fail.
    pub fn without_operator(&self, index: usize) -> Result<Self> {
        if index >= self.len() {
            return Err(Error::IndexOutOfRange {
                index,
                lo: 0,
                hi: self.len().saturating_sub(1),
            });
        }
        let mut out = self.clone();
        out.matrices.remove(index);
        Ok(out)
    }

    /// Rows of the `m × n²` coordinate matrix in the orthonormal basis of
    /// [`HermitianMatrix::coords`].
    pub fn coordinate_rows(&self) -> Vec<Vec<f64>> {
        self.matrices.iter().map(HermitianMatrix::coords).collect()
    }

    /// Coefficient blocks of the equivalent general antidiagonal recipe,
    /// when the ensemble comes from a structured construction.
    ///
    /// The rank-one frame has the same span as the diagonal units plus
    /// `ι_k(u_k)`, `ι_k(i w_k)` with `u_k = √2 cos((l−j)φ)` and
    /// `w_k = −√2 sin((l−j)φ)` over the upper positions `(j, l)`.
    pub fn structural_blocks(&self) -> Option<Vec<CoefficientBlock>> {
        let n = self.n;
        match &self.recipe {
            Recipe::Thm1 { phase, .. } => Some(
                (1..=2 * n - 3)
                    .map(|k| {
                        let (c, s) = cos_sin_columns(n, k, *phase);
                        CoefficientBlock {
                            k,
                            real: c.into_iter().map(|v| vec![v]).collect(),
                            imag: s.into_iter().map(|v| vec![v]).collect(),
                        }
                    })
                    .collect(),
            ),
            Recipe::Thm2 { nodes } => Some(
                (2 * self.r - 1..=2 * (n - self.r) - 1)
                    .map(|k| {
                        let g = gamma(n, k).unwrap_or(0);
                        let a = nonsingular::vandermonde_columns(nodes, g) * SQRT_2;
                        CoefficientBlock::from_matrices(k, &a, &a)
                    })
                    .collect(),
            ),
            Recipe::Thm3 { blocks } => Some(blocks.clone()),
            Recipe::ExampleN4 {} => Some(ones_blocks(4, SQRT_2)),
            Recipe::Custom {} => None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let file = EnsembleFile {
            n: self.n,
            r: self.r,
            recipe: self.recipe.clone(),
            matrices: self
                .matrices
                .iter()
                .map(|m| m.entries().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let file: EnsembleFile = serde_json::from_str(s)?;
        let mut matrices = Vec::with_capacity(file.matrices.len());
        for entries in file.matrices {
            let data = entries.into_iter().map(|[re, im]| C64::new(re, im)).collect();
            matrices.push(HermitianMatrix::from_entries(file.n, data, READ_TOL)?);
        }
        Self::with_recipe(file.n, file.r, file.recipe, matrices)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn check_phase(n: usize, phase: f64) -> Result<()> {
    // cos and sin of every offset (l−j)φ, 0 < l−j < n, must be nonzero
    for d in 1..n {
        if (2.0 * d as f64 * phase).sin().abs() < 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "phase {phase} makes {d}·phase a multiple of π/2"
            )));
        }
    }
    Ok(())
}

/// The phase `π/2n` used by default.
pub fn default_phase(n: usize) -> f64 {
    PI / (2 * n) as f64
}

/// `(x^j e^{i j π/2n})_{j<n}`.
pub fn phase_vector(n: usize, x: f64) -> Result<Vec<C64>> {
    phase_vector_with(n, x, default_phase(n))
}

/// `(x^j e^{i j φ})_{j<n}`; `jφ` must avoid multiples of `π/2` for `0 < j < n`.
pub fn phase_vector_with(n: usize, x: f64, phase: f64) -> Result<Vec<C64>> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::InvalidParameter("node must be finite and nonzero".into()));
    }
    check_phase(n, phase)?;
    Ok((0..n)
        .map(|j| C64::from_polar(1.0, j as f64 * phase) * x.powi(j as i32))
        .collect())
}

fn normalized_outer(v: &[C64]) -> HermitianMatrix {
    let m = HermitianMatrix::outer(v);
    let f = m.frobenius_norm();
    m.scale(1.0 / f)
}

/// The `5n−6` rank-one frame with default phase.
pub fn thm1_ensemble(n: usize, nodes: &NodeList) -> Result<MeasurementEnsemble> {
    thm1_ensemble_with_phase(n, nodes, default_phase(n))
}

/// Diagonal projectors followed by `v_k v_k*` and `v̄_k v̄_k*`, Frobenius
/// normalized, for each node.
pub fn thm1_ensemble_with_phase(n: usize, nodes: &NodeList, phase: f64) -> Result<MeasurementEnsemble> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("need n >= 3, got {n}")));
    }
    if nodes.len() != 2 * n - 3 {
        return Err(Error::LengthMismatch {
            expected: 2 * n - 3,
            got: nodes.len(),
        });
    }
    check_phase(n, phase)?;
    let mut ms: Vec<HermitianMatrix> = (0..n).map(|i| HermitianMatrix::unit_diag(n, i)).collect();
    for &x in nodes.as_slice() {
        let v = phase_vector_with(n, x, phase)?;
        let vb: Vec<C64> = v.iter().map(|z| z.conj()).collect();
        ms.push(normalized_outer(&v));
        ms.push(normalized_outer(&vb));
    }
    MeasurementEnsemble::with_recipe(
        n,
        1,
        Recipe::Thm1 {
            nodes: nodes.as_slice().to_vec(),
            phase,
        },
        ms,
    )
}

fn check_rank(n: usize, r: usize) -> Result<()> {
    let hi = n.div_ceil(2).saturating_sub(1);
    if n < 3 || r < 1 || r > hi {
        return Err(Error::IndexOutOfRange { index: r, lo: 1, hi });
    }
    Ok(())
}

/// Antidiagonals carrying measured coefficient blocks for rank `r`.
pub fn measured_antidiagonals(n: usize, r: usize) -> std::ops::RangeInclusive<usize> {
    (2 * r - 1)..=(2 * (n - r) - 1)
}

/// Orthonormal basis of `C_r^n`: the diagonal units, then `ι_k(e_p)`,
/// `ι_k(i e_p)` on every antidiagonal outside the measured band.
pub fn c_basis(n: usize, r: usize) -> Result<Vec<HermitianMatrix>> {
    check_rank(n, r)?;
    let band = measured_antidiagonals(n, r);
    let mut out: Vec<HermitianMatrix> = (0..n).map(|i| HermitianMatrix::unit_diag(n, i)).collect();
    for k in 1..=2 * n - 3 {
        if band.contains(&k) {
            continue;
        }
        let g = gamma(n, k)?;
        for p in 0..g {
            let mut e = vec![0.0; g];
            e[p] = 1.0;
            out.push(antidiag_include_real(n, k, &e)?);
            out.push(antidiag_include_imag(n, k, &e)?);
        }
    }
    Ok(out)
}

/// `(R_k(x), I_k(x))`: `x^p` resp. `i x^p` at upper position `p` of
/// antidiagonal `k`, mirrored.
pub fn rk_ik(n: usize, k: usize, x: f64) -> Result<(HermitianMatrix, HermitianMatrix)> {
    if x == 0.0 || !x.is_finite() {
        return Err(Error::InvalidParameter("node must be finite and nonzero".into()));
    }
    let g = gamma(n, k)?;
    let v: Vec<f64> = (0..g).map(|p| SQRT_2 * x.powi(p as i32)).collect();
    Ok((antidiag_include_real(n, k, &v)?, antidiag_include_imag(n, k, &v)?))
}

/// `C_r^n` basis followed by `(I_k(x_1), R_k(x_1), …, I_k(x_r), R_k(x_r))`
/// for each measured antidiagonal. Nodes must be positive.
pub fn thm2_ensemble(n: usize, r: usize, nodes: &NodeList) -> Result<MeasurementEnsemble> {
    check_rank(n, r)?;
    if nodes.len() != r {
        return Err(Error::LengthMismatch {
            expected: r,
            got: nodes.len(),
        });
    }
    if nodes.as_slice().iter().any(|&x| x <= 0.0) {
        return Err(Error::InvalidParameter("nodes must be strictly positive".into()));
    }
    let mut ms = c_basis(n, r)?;
    for k in measured_antidiagonals(n, r) {
        for &x in nodes.as_slice() {
            let (re, im) = rk_ik(n, k, x)?;
            ms.push(im);
            ms.push(re);
        }
    }
    MeasurementEnsemble::with_recipe(
        n,
        r,
        Recipe::Thm2 {
            nodes: nodes.as_slice().to_vec(),
        },
        ms,
    )
}

/// General recipe: `C_r^n` basis, then for each measured antidiagonal
/// `(ι_k(A_k[0]), ι_k(i A'_k[0]), …)`. Every block must be `γ(n,k) × r` and
/// totally non-singular.
pub fn thm3_ensemble(n: usize, r: usize, blocks: &[CoefficientBlock]) -> Result<MeasurementEnsemble> {
    check_rank(n, r)?;
    let band: Vec<usize> = measured_antidiagonals(n, r).collect();
    if blocks.len() != band.len() {
        return Err(Error::LengthMismatch {
            expected: band.len(),
            got: blocks.len(),
        });
    }
    let mut ms = c_basis(n, r)?;
    for (b, &k) in blocks.iter().zip(&band) {
        if b.k != k {
            return Err(Error::InvalidParameter(format!("expected block for antidiagonal {k}, got {}", b.k)));
        }
        let g = gamma(n, k)?;
        let (a, ap) = (b.real_matrix(), b.imag_matrix());
        for (name, m) in [("real", &a), ("imag", &ap)] {
            if m.shape() != (g, r) {
                return Err(Error::InvalidParameter(format!(
                    "antidiagonal {k} {name} block is {}x{}, expected {g}x{r}",
                    m.nrows(),
                    m.ncols()
                )));
            }
            let rep = nonsingular::all_minors_nonzero(m, DEFAULT_MINOR_TOL)?;
            if !rep.is_tns {
                return Err(Error::NotTotallyNonSingular(format!(
                    "antidiagonal {k} {name} block, minor {:?}",
                    rep.witness
                )));
            }
        }
        for c in 0..r {
            let col: Vec<f64> = a.column(c).iter().copied().collect();
            let colp: Vec<f64> = ap.column(c).iter().copied().collect();
            ms.push(antidiag_include_real(n, k, &col)?);
            ms.push(antidiag_include_imag(n, k, &colp)?);
        }
    }
    MeasurementEnsemble::with_recipe(
        n,
        r,
        Recipe::Thm3 {
            blocks: blocks.to_vec(),
        },
        ms,
    )
}

fn ones_blocks(n: usize, scale: f64) -> Vec<CoefficientBlock> {
    (1..=2 * n - 3)
        .map(|k| {
            let g = gamma(n, k).unwrap_or(0);
            let col: Vec<Vec<f64>> = vec![vec![scale]; g];
            CoefficientBlock {
                k,
                real: col.clone(),
                imag: col,
            }
        })
        .collect()
}

/// Orthonormal `5n−6` ensemble: diagonal units plus `ι_k(e/√γ)` and
/// `ι_k(i e/√γ)` on every antidiagonal, i.e. the normalized `R_k(1)`,
/// `I_k(1)`. All singular values of its measurement map equal one.
pub fn balanced_ensemble(n: usize) -> Result<MeasurementEnsemble> {
    if n < 3 {
        return Err(Error::InvalidParameter(format!("need n >= 3, got {n}")));
    }
    let blocks: Vec<CoefficientBlock> = (1..=2 * n - 3)
        .map(|k| {
            let g = gamma(n, k).unwrap_or(1);
            let col = vec![vec![1.0 / (g as f64).sqrt()]; g];
            CoefficientBlock {
                k,
                real: col.clone(),
                imag: col,
            }
        })
        .collect();
    thm3_ensemble(n, 1, &blocks)
}

/// Upper-position columns `(√2 cos((l−j)φ), −√2 sin((l−j)φ))` of
/// antidiagonal `k`.
fn cos_sin_columns(n: usize, k: usize, phase: f64) -> (Vec<f64>, Vec<f64>) {
    antidiag_positions(n, k)
        .into_iter()
        .map(|(j, l)| {
            let t = (l - j) as f64 * phase;
            (SQRT_2 * t.cos(), -SQRT_2 * t.sin())
        })
        .unzip()
}

/// `X_k` with `cos((j−l)π/2n)` and `Y_k` with `i sin((j−l)π/2n)` on the whole
/// antidiagonal `k`, centre included.
pub fn cos_sin_matrices(n: usize, k: usize) -> Result<(HermitianMatrix, HermitianMatrix)> {
    gamma(n, k)?;
    let phase = default_phase(n);
    let x = HermitianMatrix::from_upper_fn(n, |j, l| {
        if j + l == k {
            C64::new(((j as f64 - l as f64) * phase).cos(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let y = HermitianMatrix::from_upper_fn(n, |j, l| {
        if j + l == k {
            C64::new(0.0, ((j as f64 - l as f64) * phase).sin())
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok((x, y))
}

/// The fourteen `4×4` operators of the worked example: diagonal units, then
/// `ι_k(√2 e)`, `ι_k(i√2 e)` for `k = 1..5`, i.e. ones (resp. `±i`) on the
/// antidiagonal. Entries are written directly so they are exact.
pub fn example_n4() -> MeasurementEnsemble {
    let n = 4;
    let mut ms: Vec<HermitianMatrix> = (0..n).map(|i| HermitianMatrix::unit_diag(n, i)).collect();
    for k in 1..=2 * n - 3 {
        for unit in [C64::new(1.0, 0.0), C64::new(0.0, 1.0)] {
            ms.push(HermitianMatrix::from_upper_fn(n, |j, l| {
                if j + l == k && j < l {
                    unit
                } else {
                    C64::new(0.0, 0.0)
                }
            }));
        }
    }
    MeasurementEnsemble {
        n,
        r: 1,
        recipe: Recipe::ExampleN4 {},
        matrices: ms,
    }
}

/// Builds an ensemble from a recipe description.
pub fn build(n: usize, r: usize, recipe: &Recipe) -> Result<MeasurementEnsemble> {
    match recipe {
        Recipe::Thm1 { nodes, phase } => thm1_ensemble_with_phase(n, &NodeList::new(nodes.clone())?, *phase),
        Recipe::Thm2 { nodes } => thm2_ensemble(n, r, &NodeList::new(nodes.clone())?),
        Recipe::Thm3 { blocks } => thm3_ensemble(n, r, blocks),
        Recipe::ExampleN4 {} => Ok(example_n4()),
        Recipe::Custom {} => Err(Error::InvalidParameter("custom ensembles carry no recipe".into())),
    }
}
