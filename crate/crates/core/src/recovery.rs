//! Recovery of PSD matrices from measurements.
//!
//! Exact data: alternating projections between the affine solution set
//! `{Y : M(Y) = b}` and the PSD cone. Noisy data: least squares
//! `min ½||M(Y) − b||²` over the PSD cone by accelerated projected gradient
//! with adaptive restart. Both work on coordinate vectors of H(n).

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{self, eig_ordered, EigSpectrum, HermitianMatrix, C64};
use crate::linalg;
use crate::measurement::{KernelBasis, MeasurementOperator};
use crate::sampling;

/// Ascent steps used when refining the worst kernel sample.
const KAPPA_ASCENT_STEPS: usize = 200;
/// Alternating-projection rounds run before the accelerated gradient phase.
const WARM_START_ITERS: usize = 300;
/// Relative eigen-gap below which the top eigenvector is flagged as non-unique.
const DEGENERACY_REL_GAP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl SolverOptions {
    pub fn noiseless() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 200_000,
        }
    }

    pub fn noisy() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 10_000,
        }
    }
}

/// Leading eigenpair of a recovered matrix.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Signal {
    pub x_hat: Vec<[f64; 2]>,
    pub lambda1: f64,
    /// Set when the top eigenvalue is (numerically) repeated.
    pub degenerate: bool,
}

impl Signal {
    pub fn vector(&self) -> Vec<C64> {
        self.x_hat.iter().map(|&[re, im]| C64::new(re, im)).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryResult {
    #[serde(serialize_with = "ser_matrix", deserialize_with = "de_matrix")]
    pub y: HermitianMatrix,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub lambda_min: f64,
    /// Final stopping quantity: feasibility gap (exact) or gradient-mapping
    /// norm (noisy).
    pub stationarity: f64,
    pub signal: Option<Signal>,
    /// Distance between consecutive affine and PSD iterates, per iteration.
    #[serde(skip)]
    pub gap_history: Vec<f64>,
}

fn ser_matrix<S: serde::Serializer>(m: &HermitianMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..m.n())
        .map(|j| (0..m.n()).map(|l| [m.get(j, l).re, m.get(j, l).im]).collect())
        .collect();
    rows.serialize(s)
}

fn de_matrix<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<HermitianMatrix, D::Error> {
    let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
    let n = rows.len();
    let data = rows.into_iter().flatten().map(|[re, im]| C64::new(re, im)).collect();
    HermitianMatrix::from_entries(n, data, 1e-9).map_err(serde::de::Error::custom)
}

/// PSD projection on coordinates, warm-starting each eigensolve from the
/// previous eigenbasis.
struct ConeProjector {
    n: usize,
    last: Option<EigSpectrum>,
}

impl ConeProjector {
    fn new(n: usize) -> Self {
        Self { n, last: None }
    }

    /// Returns the projection and the smallest eigenvalue of the input.
    fn project(&mut self, c: &[f64]) -> Result<(Vec<f64>, f64)> {
        let a = HermitianMatrix::from_coords(self.n, c)?;
        let spec = match &self.last {
            Some(g) => hermitian::eig_ordered_warm(&a, g)?,
            None => eig_ordered(&a)?,
        };
        let lmin = spec.min();
        let p = hermitian::clamp_spectrum(&spec).coords();
        self.last = Some(spec);
        Ok((p, lmin))
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn check_b(m: &MeasurementOperator, b: &[f64]) -> Result<()> {
    if b.len() != m.m() {
        return Err(Error::LengthMismatch {
            expected: m.m(),
            got: b.len(),
        });
    }
    Ok(())
}

/// Alternating projections state: affine point `y`, its PSD projection `z`.
struct Alternating<'a> {
    m: &'a MeasurementOperator,
    b: &'a [f64],
    cone: ConeProjector,
    y: Vec<f64>,
}

impl<'a> Alternating<'a> {
    fn new(m: &'a MeasurementOperator, b: &'a [f64]) -> Self {
        Self {
            m,
            b,
            cone: ConeProjector::new(m.n()),
            y: m.pinv_coords(b),
        }
    }

    /// One round; returns `(z, λ_min(y), ||y − z||)` and advances `y`.
    fn step(&mut self) -> Result<(Vec<f64>, f64, f64)> {
        let (z, lmin) = self.cone.project(&self.y)?;
        let gap = linalg::norm(&sub(&self.y, &z));
        let r = sub(&self.m.apply_coords(&z), self.b);
        let corr = self.m.pinv_coords(&r);
        self.y = sub(&z, &corr);
        Ok((z, lmin, gap))
    }
}

fn finish(
    m: &MeasurementOperator,
    b: &[f64],
    z: &[f64],
    iterations: usize,
    converged: bool,
    stationarity: f64,
    gap_history: Vec<f64>,
) -> Result<RecoveryResult> {
    let y = HermitianMatrix::from_coords(m.n(), z)?;
    let residual = linalg::norm(&sub(&m.apply_coords(z), b));
    let spec = eig_ordered(&y)?;
    let signal = signal_from_spectrum(&spec);
    Ok(RecoveryResult {
        y,
        residual,
        iterations,
        converged,
        lambda_min: spec.min(),
        stationarity,
        signal: Some(signal),
        gap_history,
    })
}

/// Feasibility recovery for exact data `b = M(X)`.
///
/// Stops once both the PSD iterate's residual and the negative part of the
/// affine iterate's spectrum are below `tol·(1 + ||b||)`. Running out of
/// iterations is an error carrying the last residual.
pub fn recover_noiseless(m: &MeasurementOperator, b: &[f64], opts: &SolverOptions) -> Result<RecoveryResult> {
    let res = recover_noiseless_unchecked(m, b, opts)?;
    if !res.converged {
        return Err(Error::NoConvergence {
            iterations: res.iterations,
            residual: res.residual,
        });
    }
    Ok(res)
}

/// As [`recover_noiseless`], but returns the last iterate with
/// `converged = false` instead of failing.
pub fn recover_noiseless_unchecked(m: &MeasurementOperator, b: &[f64], opts: &SolverOptions) -> Result<RecoveryResult> {
    check_b(m, b)?;
    let thresh = opts.tol * (1.0 + linalg::norm(b));
    let mut ap = Alternating::new(m, b);
    let mut history = Vec::new();
    let mut last_z = vec![0.0; m.n() * m.n()];
    let mut stat = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let (z, lmin, gap) = ap.step()?;
        history.push(gap);
        let resid = linalg::norm(&sub(&m.apply_coords(&z), b));
        stat = resid.max((-lmin).max(0.0));
        last_z = z;
        if stat <= thresh {
            return finish(m, b, &last_z, it, true, stat, history);
        }
    }
    finish(m, b, &last_z, opts.max_iters, false, stat, history)
}

/// Least-squares recovery over the PSD cone for noisy data.
///
/// Warm-starts from a short run of alternating projections, then runs
/// accelerated projected gradient with step `1/σ_max²` and gradient-based
/// restart. Converged means the gradient-mapping norm fell below
/// `tol·(1 + ||b||)`.
pub fn recover_noisy(m: &MeasurementOperator, b: &[f64], opts: &SolverOptions) -> Result<RecoveryResult> {
    check_b(m, b)?;
    let thresh = opts.tol * (1.0 + linalg::norm(b));
    let warm = (opts.max_iters / 5).min(WARM_START_ITERS);
    let mut ap = Alternating::new(m, b);
    let mut z = vec![0.0; m.n() * m.n()];
    let mut prev_y = ap.y.clone();
    for _ in 0..warm {
        let (zz, _, _) = ap.step()?;
        z = zz;
        let moved = linalg::norm(&sub(&ap.y, &prev_y));
        prev_y.clone_from(&ap.y);
        if moved <= 1e-3 * thresh {
            break;
        }
    }
    if warm == 0 {
        z = ConeProjector::new(m.n()).project(&ap.y)?.0;
    }
    let lip = m.sigma_max() * m.sigma_max();
    let mut cone = ConeProjector::new(m.n());
    let mut w = z.clone();
    let mut t = 1.0f64;
    let mut gm = f64::INFINITY;
    for it in 1..=opts.max_iters {
        let r = sub(&m.apply_coords(&w), b);
        let g = m.adjoint_coords(&r);
        let trial: Vec<f64> = w.iter().zip(&g).map(|(wi, gi)| wi - gi / lip).collect();
        let (zn, _) = cone.project(&trial)?;
        let step = sub(&zn, &w);
        gm = lip * linalg::norm(&step);
        if gm <= thresh {
            return finish(m, b, &zn, it, true, gm, Vec::new());
        }
        let dz = sub(&zn, &z);
        if -linalg::dot(&step, &dz) > 0.0 {
            t = 1.0;
            w.clone_from(&z);
            continue;
        }
        let tn = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / tn;
        w = zn.iter().zip(&dz).map(|(a, d)| a + beta * d).collect();
        z = zn;
        t = tn;
    }
    finish(m, b, &z, opts.max_iters, false, gm, Vec::new())
}

fn signal_from_spectrum(spec: &EigSpectrum) -> Signal {
    let l1 = spec.values[0];
    let degenerate = spec.values.len() > 1
        && spec.values[0] - spec.values[1] <= DEGENERACY_REL_GAP * l1.abs().max(1.0);
    let mut v = spec.vectors[0].clone();
    // canonical phase: largest-modulus component real and positive
    if let Some(big) = v.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())) {
        if big.norm() > 0.0 {
            let rot = big.conj() / big.norm();
            v.iter_mut().for_each(|z| *z *= rot);
        }
    }
    let s = l1.max(0.0).sqrt();
    Signal {
        x_hat: v.iter().map(|z| [z.re * s, z.im * s]).collect(),
        lambda1: l1,
        degenerate,
    }
}

/// `√λ₁ · u₁` for the top eigenpair of `y`.
pub fn extract_signal(y: &HermitianMatrix) -> Result<Signal> {
    Ok(signal_from_spectrum(&eig_ordered(y)?))
}

/// Phase `φ ∈ [0, 2π)` making `⟨x, e^{iφ} x̂⟩` real non-negative, and the
/// remaining error `||x − e^{iφ} x̂||`.
pub fn align_phase(x: &[C64], x_hat: &[C64]) -> Result<(f64, f64)> {
    if x.len() != x_hat.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: x_hat.len(),
        });
    }
    let ip: C64 = x.iter().zip(x_hat).map(|(a, b)| a.conj() * b).sum();
    let phi = if ip.norm() == 0.0 { 0.0 } else { (-ip.arg()).rem_euclid(TAU) };
    let rot = C64::from_polar(1.0, phi);
    let err = x
        .iter()
        .zip(x_hat)
        .map(|(a, b)| (a - rot * b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok((phi, err))
}

/// Heuristic stability constant of a measurement.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub sigma_min: f64,
    /// `−max λ_{n−r}(Z)` over the sampled and refined unit kernel elements;
    /// `None` for an empty kernel. Sampling can only under-shoot the max, so
    /// this over-estimates the true value.
    pub kappa_hat: Option<f64>,
    /// `(2/σ_min)(1 + 1/κ̂)`, or `2/σ_min` for an empty kernel.
    pub c_m_bound: f64,
    pub samples: usize,
}

fn lambda_at(q: &[Vec<f64>], c: &[f64], n: usize, idx: usize) -> Result<(f64, Vec<C64>)> {
    let mut coords = vec![0.0; n * n];
    for (ci, qi) in c.iter().zip(q) {
        for (a, v) in coords.iter_mut().zip(qi) {
            *a += ci * v;
        }
    }
    let spec = eig_ordered(&HermitianMatrix::from_coords(n, &coords)?)?;
    Ok((spec.values[idx], spec.vectors[idx].clone()))
}

fn normalize(v: &mut [f64]) {
    let s = linalg::norm(v);
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    }
}

/// Estimates `κ` by random unit kernel samples followed by projected
/// gradient ascent of `λ_{n−r}` on the kernel's unit sphere, and reports the
/// resulting bound on the stability constant.
///
/// Fails if some kernel element has `λ_{n−r} ≥ 0`, which means the
/// measurement is not `r`-complete.
pub fn estimate_stability(
    m: &MeasurementOperator,
    k: &KernelBasis,
    r: usize,
    samples: usize,
    seed: u64,
) -> Result<StabilityEstimate> {
    let n = m.n();
    let sigma_min = m.sigma_min();
    if k.is_empty() {
        return Ok(StabilityEstimate {
            sigma_min,
            kappa_hat: None,
            c_m_bound: 2.0 / sigma_min,
            samples: 0,
        });
    }
    if r == 0 || r >= n {
        return Err(Error::IndexOutOfRange { index: r, lo: 1, hi: n - 1 });
    }
    let idx = n - r - 1;
    let q = k.orthonormal_coords();
    let d = q.len();
    let draws: Vec<(f64, Vec<f64>)> = (0..samples.max(1))
        .into_par_iter()
        .map(|s| {
            let mut rng = sampling::trial_rng(seed, n, s);
            let mut c: Vec<f64> = (0..d).map(|_| sampling::gaussian(&mut rng)).collect();
            normalize(&mut c);
            let (lam, _) = lambda_at(&q, &c, n, idx)?;
            Ok((lam, c))
        })
        .collect::<Result<Vec<_>>>()?;
    let (mut best, mut c) = draws
        .into_iter()
        .reduce(|a, b| if b.0 > a.0 { b } else { a })
        .expect("at least one sample");
    let mut eta = 0.5;
    for _ in 0..KAPPA_ASCENT_STEPS {
        let (_, v) = lambda_at(&q, &c, n, idx)?;
        let vv = HermitianMatrix::outer(&v).coords();
        let mut g: Vec<f64> = q.iter().map(|qi| linalg::dot(qi, &vv)).collect();
        let radial = linalg::dot(&g, &c);
        g.iter_mut().zip(&c).for_each(|(gi, ci)| *gi -= radial * ci);
        if linalg::norm(&g) < 1e-12 {
            break;
        }
        let mut improved = false;
        while eta > 1e-10 {
            let mut cand: Vec<f64> = c.iter().zip(&g).map(|(ci, gi)| ci + eta * gi).collect();
            normalize(&mut cand);
            let (lam, _) = lambda_at(&q, &cand, n, idx)?;
            if lam > best {
                best = lam;
                c = cand;
                improved = true;
                eta *= 1.5;
                break;
            }
            eta *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let kappa = -best;
    if kappa <= 0.0 {
        return Err(Error::CertificationFailed(format!(
            "unit kernel element with λ_{{n−r}} = {best:e} ≥ 0"
        )));
    }
    Ok(StabilityEstimate {
        sigma_min,
        kappa_hat: Some(kappa),
        c_m_bound: 2.0 / sigma_min * (1.0 + 1.0 / kappa),
        samples: samples.max(1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::{example_n4, thm2_ensemble, NodeList};
    use crate::measurement::{kernel_basis_numeric, KERNEL_REL_TOL};

    fn op() -> MeasurementOperator {
        MeasurementOperator::new(example_n4()).unwrap()
    }

    #[test]
    fn zero_data_gives_zero() {
        let m = op();
        let res = recover_noiseless(&m, &vec![0.0; m.m()], &SolverOptions::noiseless()).unwrap();
        assert!(res.y.frobenius_norm() < 1e-12);
    }

    #[test]
    fn example_roundtrip() {
        let m = op();
        for t in 0..20 {
            let mut rng = sampling::trial_rng(5, 4, t);
            let x = sampling::haar_unit_vector(4, &mut rng);
            let xx = HermitianMatrix::outer(&x);
            let b = m.apply(&xx).unwrap();
            let res = recover_noiseless(&m, &b, &SolverOptions::noiseless()).unwrap();
            assert!((&res.y - &xx).frobenius_norm() <= 1e-6, "trial {t}");
            assert!(res.gap_history.windows(2).all(|w| w[1] <= w[0] + 1e-12));
            let noisy = recover_noisy(&m, &b, &SolverOptions::noisy()).unwrap();
            assert!(noisy.converged);
            assert!((&noisy.y - &res.y).frobenius_norm() <= 1e-5);
        }
    }

    #[test]
    fn rank_two_roundtrip() {
        let m = MeasurementOperator::new(thm2_ensemble(6, 2, &NodeList::new(vec![0.5, 1.0]).unwrap()).unwrap()).unwrap();
        let mut rng = sampling::trial_rng(8, 6, 0);
        let x = sampling::random_psd(6, 2, true, &mut rng);
        let b = m.apply(&x).unwrap();
        let res = recover_noiseless(&m, &b, &SolverOptions::noiseless()).unwrap();
        assert!((&res.y - &x).frobenius_norm() <= 1e-6);
    }

    #[test]
    fn infeasible_data_stays_psd() {
        let m = op();
        let b = vec![-1.0; m.m()];
        let res = recover_noisy(&m, &b, &SolverOptions::noisy()).unwrap();
        assert!(res.converged);
        assert!(res.residual > 0.1);
        assert!(res.lambda_min >= -1e-8 * res.y.frobenius_norm().max(1.0));
    }

    #[test]
    fn signal_examples() {
        let x = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let s = extract_signal(&HermitianMatrix::outer(&x)).unwrap();
        let (_, err) = align_phase(&x, &s.vector()).unwrap();
        assert!(err < 1e-12);
        let s = extract_signal(&HermitianMatrix::zeros(3)).unwrap();
        assert!(s.vector().iter().all(|z| z.norm() == 0.0));
        let s = extract_signal(&HermitianMatrix::from_diag(&[2.0, 1.0])).unwrap();
        assert!((s.vector()[0] - C64::new(2f64.sqrt(), 0.0)).norm() < 1e-14);
        assert!(s.vector()[1].norm() < 1e-14);
    }

    #[test]
    fn align_examples() {
        let x = vec![C64::new(1.0, 0.5), C64::new(-0.3, 0.2)];
        let rot = C64::from_polar(1.0, -std::f64::consts::FRAC_PI_3);
        let xh: Vec<C64> = x.iter().map(|z| z * rot).collect();
        let (phi, err) = align_phase(&x, &xh).unwrap();
        assert!((phi - std::f64::consts::FRAC_PI_3).abs() < 1e-14 && err < 1e-14);
        let a = vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)];
        let b = vec![C64::new(0.0, 0.0), C64::new(0.0, 2.0)];
        let (phi, err) = align_phase(&a, &b).unwrap();
        assert_eq!(phi, 0.0);
        assert!((err - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn stability_of_example() {
        let m = op();
        let k = kernel_basis_numeric(&m, KERNEL_REL_TOL).unwrap();
        let est = estimate_stability(&m, &k, 1, 500, 1).unwrap();
        let kap = est.kappa_hat.unwrap();
        assert!(kap > 0.0 && kap <= 1.0);
        assert!(est.c_m_bound.is_finite() && est.c_m_bound > 2.0 / est.sigma_min);
    }
}
