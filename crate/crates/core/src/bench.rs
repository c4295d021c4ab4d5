//! Stability experiments: recover random unit signals from noisy
//! measurements and record `||Y − xx*|| / ε` per trial.
//!
//! Trial `t` at dimension `n` always draws from stream `(seed, n, t)`, so
//! reports do not depend on thread scheduling and adding trials only
//! extends the record set.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frames::{balanced_ensemble, thm1_ensemble, MeasurementEnsemble, NodeList};
use crate::hermitian::HermitianMatrix;
use crate::measurement::{kernel_basis_numeric, MeasurementOperator, KERNEL_REL_TOL};
use crate::recovery::{estimate_stability, recover_noisy, SolverOptions};
use crate::sampling;

/// Which `5n−6` ensemble the experiment measures with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleChoice {
    /// Diagonal units plus normalized `R_k(1)`, `I_k(1)`; orthonormal.
    Fig1,
    /// Rank-one phase frame on tangent nodes.
    Thm1,
}

impl EnsembleChoice {
    pub fn build(self, n: usize) -> Result<MeasurementEnsemble> {
        match self {
            EnsembleChoice::Fig1 => balanced_ensemble(n),
            EnsembleChoice::Thm1 => thm1_ensemble(n, &NodeList::tangent(n)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_values: Vec<usize>,
    pub trials: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub ensemble: EnsembleChoice,
    pub solver: SolverOptions,
    /// Kernel samples for the stability-constant estimate; 0 skips it.
    #[serde(default)]
    pub stability_samples: usize,
    /// Measure without noise; ratios then show pure solver error.
    #[serde(default)]
    pub zero_noise: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<std::path::PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n_values: (3..=30).step_by(3).collect(),
            trials: 100,
            epsilon: 1e-3,
            seed: 0,
            ensemble: EnsembleChoice::Fig1,
            solver: SolverOptions::noisy(),
            stability_samples: 0,
            zero_noise: false,
            output: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be at least 1".into()));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if self.n_values.is_empty() {
            return Err(Error::InvalidParameter("no dimensions given".into()));
        }
        if let Some(&n) = self.n_values.iter().find(|&&n| n < 3) {
            return Err(Error::InvalidParameter(format!("dimension {n} < 3")));
        }
        Ok(())
    }

    /// SHA-256 of the JSON form, hex encoded.
    pub fn hash(&self) -> Result<String> {
        let digest = Sha256::digest(serde_json::to_vec(self)?);
        Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    pub ratio: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRow {
    pub n: usize,
    pub trials: usize,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub sigma_min: f64,
    pub kappa_hat: Option<f64>,
    pub c_m_bound: Option<f64>,
    pub nonconverged: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReportMeta {
    pub seed: u64,
    pub config_hash: String,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub records: Vec<TrialRecord>,
    pub meta: ReportMeta,
}

/// Direction of consecutive changes of `max_ratio` along increasing `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trend {
    pub increases: usize,
    pub decreases: usize,
    pub monotone: bool,
}

impl StabilityReport {
    pub fn trend(&self) -> Trend {
        let mut rows: Vec<&StabilityRow> = self.rows.iter().collect();
        rows.sort_by_key(|r| r.n);
        let increases = rows.windows(2).filter(|w| w[1].max_ratio > w[0].max_ratio).count();
        let decreases = rows.windows(2).filter(|w| w[1].max_ratio < w[0].max_ratio).count();
        Trend {
            increases,
            decreases,
            monotone: increases == 0 || decreases == 0,
        }
    }

    /// `n,trials,max_ratio,mean_ratio,sigma_min,kappa_hat,c_m_bound,nonconverged`.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// `n,trial,ratio,residual,iterations,converged`.
    pub fn write_trials_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.records {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Two whitespace-separated columns `n max_ratio`.
    pub fn write_plot_data<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# n max_ratio")?;
        for r in &self.rows {
            writeln!(w, "{} {}", r.n, r.max_ratio)?;
        }
        Ok(())
    }
}

fn run_trial(m: &MeasurementOperator, cfg: &ExperimentConfig, n: usize, t: usize, eps: f64) -> Result<TrialRecord> {
    let mut rng = sampling::trial_rng(cfg.seed, n, t);
    let x = sampling::haar_unit_vector(n, &mut rng);
    let f = sampling::unit_ball_point(m.m(), &mut rng);
    let xx = HermitianMatrix::outer(&x);
    let clean = m.apply(&xx)?;
    let b: Vec<f64> = if cfg.zero_noise {
        clean
    } else {
        clean.iter().zip(&f).map(|(a, e)| a + eps * e).collect()
    };
    let res = recover_noisy(m, &b, &cfg.solver)?;
    Ok(TrialRecord {
        n,
        trial: t,
        ratio: (&res.y - &xx).frobenius_norm() / eps,
        residual: res.residual,
        iterations: res.iterations,
        converged: res.converged,
    })
}

fn aggregate(records: &[TrialRecord]) -> (f64, f64, usize) {
    let max = records.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let mean = records.iter().map(|r| r.ratio).sum::<f64>() / records.len() as f64;
    let bad = records.iter().filter(|r| !r.converged).count();
    (max, mean, bad)
}

/// For each dimension: build the ensemble, draw `trials` unit signals and
/// noise uniform in the `ε`-ball, solve, and aggregate the error ratios.
pub fn run_stability_experiment(cfg: &ExperimentConfig) -> Result<StabilityReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for &n in &cfg.n_values {
        let m = MeasurementOperator::new(cfg.ensemble.build(n)?)?;
        let (kappa_hat, c_m_bound) = if cfg.stability_samples > 0 {
            let k = kernel_basis_numeric(&m, KERNEL_REL_TOL)?;
            let est = estimate_stability(&m, &k, 1, cfg.stability_samples, cfg.seed)?;
            (est.kappa_hat, Some(est.c_m_bound))
        } else {
            (None, None)
        };
        let recs: Vec<TrialRecord> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| run_trial(&m, cfg, n, t, cfg.epsilon))
            .collect::<Result<_>>()?;
        let (max_ratio, mean_ratio, nonconverged) = aggregate(&recs);
        rows.push(StabilityRow {
            n,
            trials: cfg.trials,
            max_ratio,
            mean_ratio,
            sigma_min: m.sigma_min(),
            kappa_hat,
            c_m_bound,
            nonconverged,
        });
        records.extend(recs);
    }
    Ok(StabilityReport {
        rows,
        records,
        meta: ReportMeta {
            seed: cfg.seed,
            config_hash: cfg.hash()?,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearityRow {
    pub n: usize,
    pub epsilon: f64,
    pub max_ratio: f64,
    pub mean_ratio: f64,
    pub nonconverged: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LinearityReport {
    pub rows: Vec<LinearityRow>,
    /// Per dimension, largest over smallest `max_ratio` across `ε`.
    pub spread: Vec<(usize, f64)>,
    /// Every spread is at most 2.
    pub within_factor_two: bool,
    pub meta: ReportMeta,
}

impl LinearityReport {
    /// `n,epsilon,max_ratio,mean_ratio,nonconverged`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        for r in &self.rows {
            wr.serialize(r)?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Two columns `epsilon max_ratio`, one block per dimension.
    pub fn write_plot_data<W: Write>(&self, mut w: W) -> Result<()> {
        let mut last = None;
        for r in &self.rows {
            if last != Some(r.n) {
                if last.is_some() {
                    writeln!(w, "\n")?;
                }
                writeln!(w, "# n = {}: epsilon max_ratio", r.n)?;
                last = Some(r.n);
            }
            writeln!(w, "{} {}", r.epsilon, r.max_ratio)?;
        }
        Ok(())
    }
}

/// Re-solves one fixed instance set (signals and unit noise directions) at
/// each noise level `ε` and compares the worst error ratios.
pub fn run_linearity_sweep(cfg: &ExperimentConfig, epsilons: &[f64]) -> Result<LinearityReport> {
    cfg.validate()?;
    if epsilons.len() < 2 {
        return Err(Error::InvalidParameter("need at least two noise levels".into()));
    }
    if let Some(e) = epsilons.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter(format!("noise level must be positive, got {e}")));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut spread = Vec::new();
    for &n in &cfg.n_values {
        let m = MeasurementOperator::new(cfg.ensemble.build(n)?)?;
        let mut maxes = Vec::new();
        for &eps in epsilons {
            let recs: Vec<TrialRecord> = (0..cfg.trials)
                .into_par_iter()
                .map(|t| run_trial(&m, cfg, n, t, eps))
                .collect::<Result<_>>()?;
            let (max_ratio, mean_ratio, nonconverged) = aggregate(&recs);
            maxes.push(max_ratio);
            rows.push(LinearityRow {
                n,
                epsilon: eps,
                max_ratio,
                mean_ratio,
                nonconverged,
            });
        }
        let hi = maxes.iter().copied().fold(f64::MIN, f64::max);
        let lo = maxes.iter().copied().fold(f64::MAX, f64::min);
        spread.push((n, hi / lo));
    }
    let within_factor_two = spread.iter().all(|&(_, s)| s <= 2.0);
    Ok(LinearityReport {
        rows,
        spread,
        within_factor_two,
        meta: ReportMeta {
            seed: cfg.seed,
            config_hash: cfg.hash()?,
            wall_time_s: start.elapsed().as_secs_f64(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            n_values: vec![3, 4],
            trials: 4,
            ..Default::default()
        }
    }

    #[test]
    fn validation() {
        assert!(small().validate().is_ok());
        let mut c = small();
        c.epsilon = 0.0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = small();
        c.n_values = vec![2];
        assert!(c.validate().is_err());
        assert!(run_linearity_sweep(&small(), &[1e-3]).is_err());
        assert!(run_linearity_sweep(&small(), &[1e-3, 0.0]).is_err());
    }

    #[test]
    fn reports_are_reproducible() {
        let a = run_stability_experiment(&small()).unwrap();
        let b = run_stability_experiment(&small()).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_trials_csv(&mut ca).unwrap();
        b.write_trials_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a.records.len(), 8);
        let head = String::from_utf8(ca).unwrap();
        assert!(head.starts_with("n,trial,ratio,residual,iterations,converged\n"));
        for r in &a.rows {
            assert!(r.max_ratio >= r.mean_ratio && r.mean_ratio >= 0.0);
        }
    }

    #[test]
    fn zero_noise_ratio_is_solver_error() {
        let cfg = ExperimentConfig {
            n_values: vec![4],
            trials: 1,
            zero_noise: true,
            ..Default::default()
        };
        let rep = run_stability_experiment(&cfg).unwrap();
        assert!(rep.rows[0].max_ratio * cfg.epsilon <= 1e-6);
    }
}
