//! Acceptance criteria, one pass/fail line each. Runs as a plain binary so
//! the lines are always printed; exits nonzero if any criterion fails.

use std::f64::consts::SQRT_2;
use std::time::{Duration, Instant};

use phaselift_frames::bench::{run_linearity_sweep, run_stability_experiment, EnsembleChoice, ExperimentConfig};
use phaselift_frames::completeness::{certify_structural, kernel_spectral_check};
use phaselift_frames::frames::{
    cos_sin_matrices, example_n4, thm1_ensemble, thm2_ensemble, MeasurementEnsemble, NodeList,
};
use phaselift_frames::hermitian::{HermitianMatrix, C64};
use phaselift_frames::linalg;
use phaselift_frames::measurement::{
    kernel_basis_numeric, kernel_basis_structural, MeasurementOperator, KERNEL_REL_TOL,
};
use phaselift_frames::nonsingular::{all_minors_nonzero, tns_complement, vandermonde_columns, DEFAULT_MAX_RETRIES, DEFAULT_MINOR_TOL};
use phaselift_frames::recovery::{align_phase, recover_noiseless_unchecked, SolverOptions};
use phaselift_frames::sampling;
use rand::Rng;

type Outcome = Result<String, String>;

fn thm1(n: usize) -> MeasurementEnsemble {
    thm1_ensemble(n, &NodeList::tangent(n)).expect("valid thm1 parameters")
}

fn span_rows(rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
    linalg::orthonormal_span(rows, dim, 1e-10)
}

fn c1_counting() -> Outcome {
    for n in 3..=16 {
        let got = thm1(n).len();
        if got != 5 * n - 6 {
            return Err(format!("thm1 n={n}: {got} operators"));
        }
    }
    let mut cases = 0;
    for n in 3..=12usize {
        for r in 1..n.div_ceil(2) {
            let e = thm2_ensemble(n, r, &NodeList::evenly_spaced(r)).map_err(|e| e.to_string())?;
            let want = 4 * r * (n - r) + n - 2 * r;
            if e.len() != want {
                return Err(format!("thm2 n={n} r={r}: {} operators, want {want}", e.len()));
            }
            cases += 1;
        }
    }
    Ok(format!("thm1 n=3..16 and {cases} thm2 (n,r) pairs exact"))
}

/// The fourteen n = 4 operators, written out entry by entry.
fn displayed_n4() -> Vec<[[C64; 4]; 4]> {
    let o = C64::new(0.0, 0.0);
    let l = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let m = C64::new(0.0, -1.0);
    vec![
        [[l, o, o, o], [o, o, o, o], [o, o, o, o], [o, o, o, o]],
        [[o, o, o, o], [o, l, o, o], [o, o, o, o], [o, o, o, o]],
        [[o, o, o, o], [o, o, o, o], [o, o, l, o], [o, o, o, o]],
        [[o, o, o, o], [o, o, o, o], [o, o, o, o], [o, o, o, l]],
        [[o, l, o, o], [l, o, o, o], [o, o, o, o], [o, o, o, o]],
        [[o, i, o, o], [m, o, o, o], [o, o, o, o], [o, o, o, o]],
        [[o, o, l, o], [o, o, o, o], [l, o, o, o], [o, o, o, o]],
        [[o, o, i, o], [o, o, o, o], [m, o, o, o], [o, o, o, o]],
        [[o, o, o, l], [o, o, l, o], [o, l, o, o], [l, o, o, o]],
        [[o, o, o, i], [o, o, i, o], [o, m, o, o], [m, o, o, o]],
        [[o, o, o, o], [o, o, o, l], [o, o, o, o], [o, l, o, o]],
        [[o, o, o, o], [o, o, o, i], [o, o, o, o], [o, m, o, o]],
        [[o, o, o, o], [o, o, o, o], [o, o, o, l], [o, o, l, o]],
        [[o, o, o, o], [o, o, o, o], [o, o, o, i], [o, o, m, o]],
    ]
}

fn c2_golden() -> Outcome {
    let e = example_n4();
    let want = displayed_n4();
    if e.len() != want.len() {
        return Err(format!("{} operators", e.len()));
    }
    for (idx, (g, w)) in e.matrices().iter().zip(&want).enumerate() {
        for j in 0..4 {
            for l in 0..4 {
                if g.get(j, l) != w[j][l] {
                    return Err(format!("operator {} entry ({j},{l}) = {}", idx + 1, g.get(j, l)));
                }
            }
        }
    }
    Ok("14 operators match entry for entry".into())
}

fn c3_kernel() -> Outcome {
    let mut worst_angle = 0.0f64;
    let mut worst_orth = 0.0f64;
    let mut worst_nodes = 0.0f64;
    for n in 3..=10 {
        let e = thm1(n);
        let m = MeasurementOperator::new(e.clone()).map_err(|e| e.to_string())?;
        let st = kernel_basis_structural(&e, n as u64).map_err(|e| e.to_string())?;
        let nu = kernel_basis_numeric(&m, KERNEL_REL_TOL).map_err(|e| e.to_string())?;
        let dim = (n - 2) * (n - 3);
        if st.len() != dim || nu.len() != dim {
            return Err(format!("n={n}: structural {} numeric {} expected {dim}", st.len(), nu.len()));
        }
        worst_angle = worst_angle.max(linalg::max_principal_angle(&st.orthonormal_coords(), &nu.orthonormal_coords()));
        worst_orth = worst_orth
            .max(st.max_defect(&m).map_err(|e| e.to_string())?)
            .max(nu.max_defect(&m).map_err(|e| e.to_string())?);
        let other: Vec<f64> = NodeList::tangent(n).as_slice().iter().map(|x| 0.7 * x).collect();
        let e2 = thm1_ensemble(n, &NodeList::new(other).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let m2 = MeasurementOperator::new(e2).map_err(|e| e.to_string())?;
        let nu2 = kernel_basis_numeric(&m2, KERNEL_REL_TOL).map_err(|e| e.to_string())?;
        worst_nodes = worst_nodes.max(linalg::max_principal_angle(&nu.orthonormal_coords(), &nu2.orthonormal_coords()));
    }
    let detail = format!("angle {worst_angle:.1e}, orthogonality {worst_orth:.1e}, node change {worst_nodes:.1e}");
    if worst_angle < 1e-8 && worst_orth <= 1e-10 && worst_nodes < 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c4_sampling() -> Outcome {
    let mut ensembles: Vec<MeasurementEnsemble> = vec![example_n4()];
    for n in 3..=8usize {
        ensembles.push(thm1(n));
        for r in 1..=2usize.min(n.div_ceil(2) - 1) {
            ensembles.push(thm2_ensemble(n, r, &NodeList::evenly_spaced(r)).map_err(|e| e.to_string())?);
        }
    }
    let mut tally = 0;
    for (i, e) in ensembles.iter().enumerate() {
        certify_structural(e).map_err(|err| format!("n={} r={}: {err}", e.n(), e.r()))?;
        let k = kernel_basis_structural(e, 17).map_err(|e| e.to_string())?;
        kernel_spectral_check(&k, e.r(), 10_000, 1000 + i as u64, 1e-8)
            .map_err(|err| format!("n={} r={} {}: {err}", e.n(), e.r(), e.recipe().name()))?;
        tally += 1;
    }
    Ok(format!("{tally} certified ensembles x 10^4 samples, zero violations"))
}

fn c5_exact() -> Outcome {
    let opts = SolverOptions::noiseless();
    let mut worst = 0.0f64;
    for n in 3..=12 {
        let m = MeasurementOperator::new(thm1(n)).map_err(|e| e.to_string())?;
        for t in 0..100 {
            let mut rng = sampling::trial_rng(2024, n, t);
            let x = sampling::haar_unit_vector(n, &mut rng);
            let xx = HermitianMatrix::outer(&x);
            let b = m.apply(&xx).map_err(|e| e.to_string())?;
            let res = recover_noiseless_unchecked(&m, &b, &opts).map_err(|e| e.to_string())?;
            let err = (&res.y - &xx).frobenius_norm();
            worst = worst.max(err);
            if err > 1e-6 {
                return Err(format!("thm1 n={n} trial {t}: error {err:.2e}, {} iterations", res.iterations));
            }
        }
    }
    let mut worst_r = 0.0f64;
    for (n, r) in [(5, 2), (6, 2), (7, 2), (7, 3)] {
        let e = thm2_ensemble(n, r, &NodeList::evenly_spaced(r)).map_err(|e| e.to_string())?;
        let m = MeasurementOperator::new(e).map_err(|e| e.to_string())?;
        for t in 0..50 {
            let mut rng = sampling::trial_rng(77, n * 10 + r, t);
            let x = sampling::random_psd(n, r, true, &mut rng);
            let b = m.apply(&x).map_err(|e| e.to_string())?;
            let res = recover_noiseless_unchecked(&m, &b, &opts).map_err(|e| e.to_string())?;
            let err = (&res.y - &x).frobenius_norm();
            worst_r = worst_r.max(err);
            if err > 1e-6 {
                return Err(format!("thm2 n={n} r={r} trial {t}: error {err:.2e}, {} iterations", res.iterations));
            }
        }
    }
    Ok(format!("worst error rank one {worst:.1e}, rank r {worst_r:.1e}"))
}

fn c6_linearity() -> Outcome {
    let cfg = ExperimentConfig {
        n_values: vec![6],
        trials: 100,
        seed: 6,
        ensemble: EnsembleChoice::Thm1,
        ..Default::default()
    };
    let rep = run_linearity_sweep(&cfg, &[1e-2, 1e-3, 1e-4]).map_err(|e| e.to_string())?;
    let ratios: Vec<String> = rep.rows.iter().map(|r| format!("{:.2}", r.max_ratio)).collect();
    let bad: usize = rep.rows.iter().map(|r| r.nonconverged).sum();
    let detail = format!(
        "max ratios {} (spread {:.3}), {bad} unconverged",
        ratios.join("/"),
        rep.spread[0].1
    );
    if rep.within_factor_two {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn c7_figure() -> Outcome {
    let cfg = ExperimentConfig {
        n_values: (3..=30).step_by(3).collect(),
        trials: 100,
        epsilon: 1e-3,
        seed: 1,
        ensemble: EnsembleChoice::Fig1,
        stability_samples: 200,
        ..Default::default()
    };
    let rep = run_stability_experiment(&cfg).map_err(|e| e.to_string())?;
    if let Some(r) = rep.rows.iter().find(|r| !r.max_ratio.is_finite()) {
        return Err(format!("n={} max ratio not finite", r.n));
    }
    // rerun the smallest dimensions and compare record bytes
    let sub = ExperimentConfig {
        n_values: vec![3, 6, 9],
        ..cfg.clone()
    };
    let again = run_stability_experiment(&sub).map_err(|e| e.to_string())?;
    let first: Vec<_> = rep.records.iter().filter(|r| r.n <= 9).cloned().collect();
    let bytes = |recs: &[phaselift_frames::bench::TrialRecord]| format!("{recs:?}");
    if bytes(&first) != bytes(&again.records) {
        return Err("rerun with the same seed differs".into());
    }
    let trend = rep.trend();
    let curve: Vec<String> = rep.rows.iter().map(|r| format!("{}:{:.2}", r.n, r.max_ratio)).collect();
    let bad: usize = rep.rows.iter().map(|r| r.nonconverged).sum();
    Ok(format!(
        "max ratio {} ; {} up / {} down steps, monotone={}, {bad} unconverged, rerun identical",
        curve.join(" "),
        trend.increases,
        trend.decreases,
        trend.monotone
    ))
}

fn c8_phase() -> Outcome {
    let mut worst = f64::INFINITY;
    for t in 0..1000 {
        let mut rng = sampling::trial_rng(8, 0, t);
        let n = rng.random_range(1..=8);
        let x: Vec<C64> = (0..n).map(|_| sampling::complex_gaussian(&mut rng)).collect();
        let x_hat: Vec<C64> = if t % 2 == 0 {
            (0..n).map(|_| sampling::complex_gaussian(&mut rng)).collect()
        } else {
            let rot = C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
            let d = 10f64.powf(rng.random_range(-8.0..0.0));
            x.iter().map(|z| z * rot + sampling::complex_gaussian(&mut rng) * d).collect()
        };
        let (_, err) = align_phase(&x, &x_hat).map_err(|e| e.to_string())?;
        let diff = &HermitianMatrix::outer(&x) - &HermitianMatrix::outer(&x_hat);
        let slack = SQRT_2 * diff.frobenius_norm() - err * sampling::vector_norm(&x);
        worst = worst.min(slack);
    }
    if worst >= -1e-10 {
        Ok(format!("1000 pairs, smallest slack {worst:.2e}"))
    } else {
        Err(format!("slack {worst:.2e}"))
    }
}

fn c9_span() -> Outcome {
    let mut worst = 0.0f64;
    for n in 3..=8 {
        let dim = n * n;
        let a = thm1(n).coordinate_rows();
        let mut b: Vec<Vec<f64>> = (0..n).map(|i| HermitianMatrix::unit_diag(n, i).coords()).collect();
        for k in 1..=2 * n - 3 {
            let (x, y) = cos_sin_matrices(n, k).map_err(|e| e.to_string())?;
            b.push(x.coords());
            b.push(y.coords());
        }
        let sa = span_rows(&a, dim);
        let sb = span_rows(&b, dim);
        if sa.len() != sb.len() {
            return Err(format!("n={n}: ranks {} vs {}", sa.len(), sb.len()));
        }
        let unit = |rows: &[Vec<f64>]| -> Vec<Vec<f64>> {
            rows.iter().map(|r| r.iter().map(|v| v / linalg::norm(r)).collect()).collect()
        };
        worst = worst
            .max(linalg::residual_outside(&unit(&a), &sb))
            .max(linalg::residual_outside(&unit(&b), &sa));
    }
    if worst <= 1e-9 {
        Ok(format!("n=3..8 equal ranks, containment residual {worst:.1e}"))
    } else {
        Err(format!("containment residual {worst:.1e}"))
    }
}

fn c10_complement() -> Outcome {
    let mut rng = sampling::trial_rng(10, 0, 0);
    for run in 0..100 {
        let p = rng.random_range(2..=8);
        let q = rng.random_range(1..p);
        let start = rng.random_range(0.2..0.3);
        let ratio: f64 = rng.random_range(1.5..1.6);
        let nodes: Vec<f64> = (0..q).map(|l| start * ratio.powi(l as i32)).collect();
        let a = vandermonde_columns(&nodes, p);
        let b = tns_complement(&a, run, DEFAULT_MAX_RETRIES).map_err(|e| format!("run {run} ({p}x{q}): {e}"))?;
        let orth = (a.transpose() * &b).amax();
        let rep = all_minors_nonzero(&b, DEFAULT_MINOR_TOL).map_err(|e| e.to_string())?;
        if orth > 1e-10 || !rep.is_tns || b.shape() != (p, p - q) {
            return Err(format!("run {run}: |AᵗB| {orth:.1e}, tns {}", rep.is_tns));
        }
    }
    Ok("100 randomized complements verified".into())
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("1 counting", Duration::from_secs(1), c1_counting),
        ("2 golden example", Duration::from_secs(1), c2_golden),
        ("3 kernel structure", Duration::from_secs(10), c3_kernel),
        ("4 kernel sign sampling", Duration::from_secs(60), c4_sampling),
        ("5 exact recovery", Duration::from_secs(300), c5_exact),
        ("6 stability linearity", Duration::from_secs(300), c6_linearity),
        ("7 stability experiment", Duration::from_secs(900), c7_figure),
        ("8 phase inequality", Duration::from_secs(5), c8_phase),
        ("9 span equivalence", Duration::from_secs(5), c9_span),
        ("10 complement contract", Duration::from_secs(60), c10_complement),
    ];
    let mut failed = 0;
    for (name, budget, f) in criteria {
        let t0 = Instant::now();
        let out = f();
        let dt = t0.elapsed();
        let (ok, detail) = match out {
            Ok(d) if dt <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {budget:?}")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {name}: {} ({:.2}s) {detail}",
            if ok { "PASS" } else { "FAIL" },
            dt.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}
