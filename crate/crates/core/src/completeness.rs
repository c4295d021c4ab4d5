//! Certificates of `r`-completeness at three strengths: structural (all
//! hypotheses of the antidiagonal construction verified exactly), sampled
//! (random kernel elements have enough eigenvalues of both signs) and oracle
//! (random low-rank pairs are told apart by the measurements).

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::{c_basis, measured_antidiagonals, thm3_ensemble, MeasurementEnsemble};
use crate::hermitian::{count_signs, eig_ordered, gamma, HermitianMatrix};
use crate::linalg;
use crate::measurement::{KernelBasis, MeasurementOperator};
use crate::nonsingular::{self, Minor, DEFAULT_MINOR_TOL};
use crate::sampling;

/// Pairs closer than this in Frobenius norm are not compared.
pub const DISCRIMINATION_TOL: f64 = 1e-6;
/// Relative singular-value cut-off for rank decisions during certification.
const RANK_TOL: f64 = 1e-10;
/// Allowed relative residual when testing span containment.
const SPAN_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Structural,
    Sampled,
    Oracle,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckRecord {
    pub check: String,
    pub passed: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub antidiagonal: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub minor: Option<Minor>,
}

impl CheckRecord {
    fn new(check: &str, passed: bool, detail: String) -> Self {
        Self {
            check: check.into(),
            passed,
            detail,
            antidiagonal: None,
            minor: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CompletenessCertificate {
    pub level: Level,
    pub r: usize,
    pub checks: Vec<CheckRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    /// Fewest positive / negative eigenvalues seen over sampled kernel elements.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_counts: Option<(usize, usize)>,
    pub note: String,
}

impl CompletenessCertificate {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check.
    pub fn summary(&self) -> String {
        let mut s = format!("{:?} certificate, r = {}\n", self.level, self.r);
        for c in &self.checks {
            s.push_str(&format!(
                "  [{}] {}: {}\n",
                if c.passed { "ok" } else { "FAIL" },
                c.check,
                c.detail
            ));
        }
        if !self.note.is_empty() {
            s.push_str(&format!("  note: {}\n", self.note));
        }
        s
    }
}

/// Runs every structural check and records the outcome of each, without
/// stopping at the first failure.
pub fn structural_checks(ensemble: &MeasurementEnsemble) -> CompletenessCertificate {
    let (n, r) = (ensemble.n(), ensemble.r());
    let mut checks = Vec::new();
    let note = "r-completeness follows from the verified hypotheses".to_string();
    let cert = |checks: Vec<CheckRecord>| CompletenessCertificate {
        level: Level::Structural,
        r,
        checks,
        trials: None,
        tol: None,
        min_counts: None,
        note: note.clone(),
    };

    let Some(blocks) = ensemble.structural_blocks() else {
        checks.push(CheckRecord::new(
            "recipe",
            false,
            "custom ensembles carry no coefficient blocks".into(),
        ));
        return cert(checks);
    };
    let basis = match c_basis(n, r) {
        Ok(b) => b,
        Err(e) => {
            checks.push(CheckRecord::new("rank range", false, e.to_string()));
            return cert(checks);
        }
    };

    let expected = 4 * r * (n - r) + n - 2 * r;
    checks.push(CheckRecord::new(
        "operator count",
        ensemble.len() == expected,
        format!("{} operators, expected {expected}", ensemble.len()),
    ));

    let n2 = n * n;
    let g0: Vec<Vec<f64>> = ensemble.matrices()[..basis.len().min(ensemble.len())]
        .iter()
        .map(HermitianMatrix::coords)
        .collect();
    let target: Vec<Vec<f64>> = basis.iter().map(HermitianMatrix::coords).collect();
    let g0_span = linalg::orthonormal_span(&g0, n2, RANK_TOL);
    let angle = linalg::max_principal_angle(&g0_span, &target);
    checks.push(CheckRecord::new(
        "leading operators span the fixed subspace",
        g0_span.len() == target.len() && angle < SPAN_TOL,
        format!("rank {} of {}, max principal angle {angle:.2e}", g0_span.len(), target.len()),
    ));

    let band: Vec<usize> = measured_antidiagonals(n, r).collect();
    let ks: Vec<usize> = blocks.iter().map(|b| b.k).collect();
    checks.push(CheckRecord::new(
        "antidiagonal coverage",
        ks == band,
        format!("blocks on {ks:?}"),
    ));
    for b in &blocks {
        let g = gamma(n, b.k).unwrap_or(0);
        for (name, m) in [("real", b.real_matrix()), ("imag", b.imag_matrix())] {
            let label = format!("block {name}");
            let mut rec = if m.shape() != (g, r) {
                CheckRecord::new(&label, false, format!("shape {:?}, expected ({g}, {r})", m.shape()))
            } else {
                match nonsingular::all_minors_nonzero(&m, DEFAULT_MINOR_TOL) {
                    Ok(rep) => {
                        let mut rec = CheckRecord::new(
                            &label,
                            rep.is_tns,
                            format!(
                                "{} minors, smallest scaled {:.2e}",
                                rep.minors_checked, rep.min_scaled_minor
                            ),
                        );
                        rec.minor = rep.witness;
                        rec
                    }
                    Err(e) => CheckRecord::new(&label, false, e.to_string()),
                }
            };
            rec.antidiagonal = Some(b.k);
            checks.push(rec);
        }
    }

    let rows = ensemble.coordinate_rows();
    let rank = linalg::numerical_rank(&rows, n2, RANK_TOL);
    checks.push(CheckRecord::new(
        "linear independence",
        rank == ensemble.len(),
        format!("numerical rank {rank} of {}", ensemble.len()),
    ));

    // The ensemble must span what the coefficient blocks describe.
    match thm3_ensemble(n, r, &blocks) {
        Ok(reference) => {
            let refspan = linalg::orthonormal_span(&reference.coordinate_rows(), n2, RANK_TOL);
            let scale = rows.iter().map(|v| linalg::norm(v)).fold(0.0, f64::max).max(1.0);
            let resid = linalg::residual_outside(&rows, &refspan) / scale;
            checks.push(CheckRecord::new(
                "span matches coefficient blocks",
                resid < SPAN_TOL && refspan.len() == rank,
                format!("relative residual {resid:.2e}"),
            ));
        }
        Err(e) => checks.push(CheckRecord::new("span matches coefficient blocks", false, e.to_string())),
    }
    cert(checks)
}

/// Structural certification; fails naming the first violated hypothesis.
pub fn certify_structural(ensemble: &MeasurementEnsemble) -> Result<CompletenessCertificate> {
    let cert = structural_checks(ensemble);
    if let Some(bad) = cert.checks.iter().find(|c| !c.passed) {
        let at = bad.antidiagonal.map(|k| format!(" on antidiagonal {k}")).unwrap_or_default();
        let minor = bad.minor.as_ref().map(|m| format!(", minor rows {:?} cols {:?}", m.rows, m.cols)).unwrap_or_default();
        return Err(Error::CertificationFailed(format!("{}{at}: {}{minor}", bad.check, bad.detail)));
    }
    Ok(cert)
}

/// Samples unit-norm random combinations of kernel elements and requires at
/// least `r+1` eigenvalues above `tol` and `r+1` below `−tol` for each.
pub fn kernel_spectral_check(
    k: &KernelBasis,
    r: usize,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<CompletenessCertificate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tol must be positive, got {tol}")));
    }
    let mut cert = CompletenessCertificate {
        level: Level::Sampled,
        r,
        checks: Vec::new(),
        trials: Some(trials),
        tol: Some(tol),
        min_counts: None,
        note: "sampling corroborates but cannot prove the eigenvalue condition".into(),
    };
    let Some(first) = k.elements.first() else {
        cert.checks.push(CheckRecord::new("kernel sign counts", true, "empty kernel, vacuous".into()));
        return Ok(cert);
    };
    let n = first.n();
    let counts: Vec<(usize, usize, usize)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = sampling::trial_rng(seed, n, t);
            let mut z = HermitianMatrix::zeros(n);
            for e in &k.elements {
                z.axpy(sampling::gaussian(&mut rng), e);
            }
            let s = z.frobenius_norm();
            let z = if s > 0.0 { z.scale(1.0 / s) } else { z };
            let spec = eig_ordered(&z)?;
            let (p, q) = count_signs(&spec.values, tol);
            Ok((t, p, q))
        })
        .collect::<Result<Vec<_>>>()?;
    let min_p = counts.iter().map(|c| c.1).min().unwrap_or(0);
    let min_q = counts.iter().map(|c| c.2).min().unwrap_or(0);
    cert.min_counts = Some((min_p, min_q));
    if let Some(&(t, p, q)) = counts.iter().find(|c| c.1 < r + 1 || c.2 < r + 1) {
        return Err(Error::CertificationFailed(format!(
            "kernel sample {t} has {p} positive and {q} negative eigenvalues, need {} of each",
            r + 1
        )));
    }
    cert.checks.push(CheckRecord::new(
        "kernel sign counts",
        true,
        format!("{trials} samples, at least ({min_p}, {min_q}) positive/negative eigenvalues"),
    ));
    Ok(cert)
}

/// `Some(true)` if the measurements separate `x` and `x2`, `Some(false)` on
/// a violation, `None` if the pair is too close to count.
pub fn discriminates(m: &MeasurementOperator, x: &HermitianMatrix, x2: &HermitianMatrix, tol: f64) -> Result<Option<bool>> {
    if (x - x2).frobenius_norm() <= tol {
        return Ok(None);
    }
    let d = linalg::norm(&m.apply(&(x - x2))?);
    Ok(Some(d > tol))
}

/// Random pairs `X` of rank at most `r` and `X'` of random rank, both PSD
/// with unit trace, must have measurably different outcomes.
pub fn discrimination_oracle(
    m: &MeasurementOperator,
    r: usize,
    trials: usize,
    seed: u64,
    tol: f64,
) -> Result<CompletenessCertificate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be at least 1".into()));
    }
    let n = m.n();
    let results: Vec<(usize, Option<bool>)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = sampling::trial_rng(seed, n, t);
            let x = sampling::random_psd(n, r, true, &mut rng);
            let rank2 = rng.random_range(1..=n);
            let x2 = sampling::random_psd(n, rank2, true, &mut rng);
            Ok((t, discriminates(m, &x, &x2, tol)?))
        })
        .collect::<Result<Vec<_>>>()?;
    if let Some((t, _)) = results.iter().find(|(_, v)| *v == Some(false)) {
        return Err(Error::CertificationFailed(format!("pair {t} is not separated at tol {tol:e}")));
    }
    let compared = results.iter().filter(|(_, v)| v.is_some()).count();
    Ok(CompletenessCertificate {
        level: Level::Oracle,
        r,
        checks: vec![CheckRecord::new(
            "pair discrimination",
            true,
            format!("{compared} of {trials} pairs compared, none confused"),
        )],
        trials: Some(trials),
        tol: Some(tol),
        min_counts: None,
        note: "random pairs only; not a proof".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{example_n4, thm1_ensemble, thm2_ensemble, NodeList};
    use crate::measurement::{kernel_basis_numeric, kernel_basis_structural, KERNEL_REL_TOL};

    #[test]
    fn structural_examples() {
        let c = certify_structural(&example_n4()).unwrap();
        assert_eq!(c.level, Level::Structural);
        assert_eq!(c.r, 1);
        let e = thm2_ensemble(6, 2, &NodeList::new(vec![0.5, 1.0]).unwrap()).unwrap();
        assert_eq!(certify_structural(&e).unwrap().r, 2);
        let cut = example_n4().without_operator(7).unwrap();
        let err = certify_structural(&cut).unwrap_err().to_string();
        assert!(err.contains("operator count"), "{err}");
        for n in 3..=7 {
            certify_structural(&thm1_ensemble(n, &NodeList::tangent(n)).unwrap()).unwrap();
        }
    }

    #[test]
    fn custom_ensemble_is_not_structural() {
        let e = MeasurementEnsemble::custom(2, 1, vec![HermitianMatrix::unit_diag(2, 0)]).unwrap();
        assert!(certify_structural(&e).is_err());
        assert!(!structural_checks(&e).passed());
    }

    #[test]
    fn spectral_examples() {
        let e = example_n4();
        let k = kernel_basis_structural(&e, 0).unwrap();
        let c = kernel_spectral_check(&k, 1, 1000, 3, 1e-8).unwrap();
        let (p, q) = c.min_counts.unwrap();
        assert!(p >= 2 && q >= 2);
        let e3 = thm1_ensemble(3, &NodeList::tangent(3)).unwrap();
        let k3 = kernel_basis_structural(&e3, 0).unwrap();
        assert!(kernel_spectral_check(&k3, 1, 10, 0, 1e-8).is_ok());
        let bad = MeasurementEnsemble::custom(2, 1, vec![HermitianMatrix::unit_diag(2, 0)]).unwrap();
        let kb = kernel_basis_numeric(&MeasurementOperator::new(bad).unwrap(), KERNEL_REL_TOL).unwrap();
        assert_eq!(kb.len(), 3);
        assert!(kernel_spectral_check(&kb, 1, 50, 0, 1e-8).is_err());
    }

    #[test]
    fn oracle_examples() {
        let m = MeasurementOperator::new(example_n4()).unwrap();
        let c = discrimination_oracle(&m, 1, 500, 9, DISCRIMINATION_TOL).unwrap();
        assert_eq!(c.level, Level::Oracle);
        let x = HermitianMatrix::unit_diag(4, 1);
        assert_eq!(discriminates(&m, &x, &x, DISCRIMINATION_TOL).unwrap(), None);
    }
}
