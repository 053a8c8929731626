use std::f64::consts::PI;

use homodyne::estimator::{Estimator, EstimatorConfig};
use homodyne::measurement::{noisy_density, simulate, NoiseConfig};
use homodyne::patterns::{GridSpec, PatternTable};
use homodyne::states::StateModel;
use num_complex::Complex64;

#[test]
fn noisy_kernel_integrates_to_coefficients() {
    let noise = NoiseConfig::new(0.9).unwrap();
    let table = PatternTable::build(5, &noise, &GridSpec::default()).unwrap();
    let root = noise.eta().sqrt();
    let (lo, hi, ny) = (-14.0, 14.0, 2801usize);
    let dy = (hi - lo) / (ny - 1) as f64;
    let ys: Vec<f64> = (0..ny).map(|i| lo + i as f64 * dy).collect();
    let f: Vec<Vec<f64>> = table
        .pairs()
        .iter()
        .map(|&(j, k)| ys.iter().map(|&y| table.eval(j, k, y / root).unwrap()).collect())
        .collect();
    let nphi = 48;
    for st in [StateModel::Vacuum, StateModel::Coherent { q0: 1.0 }] {
        let mut acc = vec![Complex64::new(0.0, 0.0); f.len()];
        for m in 0..nphi {
            let phi = (m as f64 + 0.5) * PI / nphi as f64;
            let p: Vec<f64> = ys.iter().map(|&y| noisy_density(&st, y, phi, &noise).unwrap()).collect();
            for (a, (&(j, k), fv)) in table.pairs().iter().zip(&f).enumerate() {
                let s: f64 = p.iter().zip(fv).map(|(p, f)| p * f).sum::<f64>() * dy;
                acc[a] += Complex64::from_polar(s, -((j - k) as f64) * phi) / nphi as f64;
            }
        }
        for (a, &(j, k)) in table.pairs().iter().enumerate() {
            let err = (acc[a] - st.coefficient(j, k)).norm();
            assert!(err < 1e-3, "{st} ({j},{k}): {err:e}");
        }
    }
}

fn ks_statistic(mut u: Vec<f64>) -> f64 {
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = u.len() as f64;
    u.iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max)
}

/// Probability integral transform of each record through the conditional
/// CDF of `noisy_density` should be uniform.
#[test]
fn samples_follow_noisy_density() {
    let noise = NoiseConfig::new(0.9).unwrap();
    let n = 1500;
    for st in [
        StateModel::SinglePhoton,
        StateModel::SchroedingerCat { q0: 2.0 },
        StateModel::Thermal { beta: 0.5 },
    ] {
        let records = simulate(&st, &noise, n, 21).unwrap();
        let u: Vec<f64> = records
            .iter()
            .map(|r| {
                let lo = -14.0;
                let steps = 700;
                let h = (r.y - lo) / steps as f64;
                let mut s = 0.0;
                for i in 0..=steps {
                    let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                    s += w * noisy_density(&st, lo + i as f64 * h, r.phi, &noise).unwrap();
                }
                (s * h).clamp(0.0, 1.0)
            })
            .collect();
        let d = ks_statistic(u);
        // alpha = 0.001
        assert!(d < 1.95 / (n as f64).sqrt(), "{st}: KS statistic {d}");
    }
}

#[test]
fn estimate_is_independent_of_thread_count() {
    let cfg = EstimatorConfig {
        n_override: Some(12),
        ..EstimatorConfig::default()
    };
    let records = simulate(&StateModel::SchroedingerCat { q0: 2.0 }, &NoiseConfig::new(0.9).unwrap(), 50_000, 5).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| Estimator::new(cfg).unwrap().estimate(&records).unwrap())
    };
    let (a, b) = (run(1), run(4));
    assert_eq!(a.raw.entries(), b.raw.entries());
    assert_eq!(a.thresholded.entries(), b.thresholded.entries());
}

#[test]
fn thresholded_matrix_is_hermitian_with_shrunk_moduli() {
    let cfg = EstimatorConfig {
        epsilon: 0.5,
        ..EstimatorConfig::default()
    };
    let records = simulate(&StateModel::Coherent { q0: 1.5 }, &NoiseConfig::new(0.9).unwrap(), 30_000, 8).unwrap();
    let res = Estimator::new(cfg).unwrap().estimate(&records).unwrap();
    let n = res.n_used;
    assert_eq!(res.thresholded.hermitian_defect(), 0.0);
    for j in 0..n {
        for k in 0..n {
            let (r, t) = (res.raw.get(j, k), res.thresholded.get(j, k));
            if j + k >= n {
                assert_eq!(r, Complex64::new(0.0, 0.0));
                assert_eq!(t, Complex64::new(0.0, 0.0));
                continue;
            }
            let expected = (r.norm() - res.thresholds.get(j, k)).max(0.0);
            assert!((t.norm() - expected).abs() < 1e-14);
            if t.norm() > 0.0 {
                assert!((t.arg() - r.arg()).abs() < 1e-12);
            }
        }
    }
}
