use omc_core::metrics::{
    chi_square_uniform, histogram, kolmogorov_survival, nrmse, peak_error, pearson,
    qq_against_normal, residuals,
};
use omc_core::{Error, ReceiverParams, VoltageTrace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn bump(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| 2.6 + 2.0 * (-((k as f64 - 300.0) / 60.0).powi(2)).exp())
        .collect()
}

#[test]
fn nrmse_of_an_offset_is_offset_over_range() {
    let r = bump(1000);
    let range =
        r.iter().copied().fold(f64::MIN, f64::max) - r.iter().copied().fold(f64::MAX, f64::min);
    let m: Vec<f64> = r.iter().map(|x| x + 0.07).collect();
    assert!((nrmse(&m, &r).unwrap() - 0.07 / range).abs() < 1e-12);
    assert_eq!(nrmse(&r, &r).unwrap(), 0.0);
    assert!(matches!(nrmse(&r, &vec![1.0; 1000]), Err(Error::Domain(_))));
}

#[test]
fn noisy_versus_clean_nrmse_follows_kappa() {
    let clean = VoltageTrace::new(0.0, 0.01, bump(20_000)).unwrap();
    let rx = ReceiverParams::table1_bounded();
    let noisy = rx.add_noise(&clean, 5).trace;
    let rms = (clean.samples.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64).sqrt();
    let expected = rx.noise_kappa * rms / (clean.max() - clean.min());
    let got = nrmse(&noisy.samples, &clean.samples).unwrap();
    assert!(
        (got - expected).abs() < 0.1 * expected,
        "{got} vs {expected}"
    );
}

#[test]
fn peak_error_ignores_timing() {
    let r = bump(1000);
    let scaled: Vec<f64> = r.iter().map(|x| 1.1 * x).collect();
    assert!((peak_error(&scaled, &r).unwrap() - 0.1).abs() < 1e-12);
    let mut shifted = r.clone();
    shifted.rotate_right(50);
    assert_eq!(peak_error(&shifted, &r).unwrap(), 0.0);
    assert!(matches!(
        peak_error(&r, &[-1.0, 0.0]),
        Err(Error::Domain(_))
    ));
}

#[test]
fn pearson_is_invariant_to_affine_maps() {
    let r = bump(500);
    let m: Vec<f64> = r.iter().map(|x| 3.0 * x - 1.0).collect();
    assert!((pearson(&m, &r).unwrap() - 1.0).abs() < 1e-12);
    assert!(pearson(&r, &vec![2.0; 500]).is_err());
}

#[test]
fn kolmogorov_tail_matches_tabulated_values() {
    for (lambda, q) in [
        (0.5, 0.96394),
        (1.0, 0.26999967),
        (1.18, 0.12345),
        (1.36, 0.04946),
        (1.63, 0.00999),
    ] {
        assert!(
            (kolmogorov_survival(lambda) - q).abs() < 2e-4,
            "λ = {lambda}"
        );
    }
    // both branches agree where they meet
    let below = kolmogorov_survival(1.18 - 1e-12);
    let above = kolmogorov_survival(1.18);
    assert!((below - above).abs() < 1e-10);
}

#[test]
fn gaussian_residuals_pass_and_uniform_residuals_fail() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let g: Vec<f64> = (0..100_000)
        .map(|_| 0.02 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let qq = qq_against_normal(&g).unwrap();
    assert!(qq.ks_p > 0.01, "{}", qq.ks_p);
    assert!((qq.slope - 1.0).abs() < 0.05);
    assert!((qq.std - 0.02).abs() < 0.02 * 0.02);
    let u: Vec<f64> = (0..100_000).map(|_| rng.gen::<f64>()).collect();
    assert!(qq_against_normal(&u).unwrap().ks_p < 1e-6);
}

#[test]
fn degenerate_residuals_are_reported() {
    let e = qq_against_normal(&[0.0; 100]).unwrap_err();
    assert!(e.to_string().contains("zero variance"));
    assert!(qq_against_normal(&[1.0, 2.0]).is_err());
}

#[test]
fn histogram_conserves_counts_and_uniform_draws_pass_chi_square() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let u: Vec<f64> = (0..50_000).map(|_| rng.gen::<f64>()).collect();
    let h = histogram(&u, 25).unwrap();
    assert_eq!(h.total(), u.len());
    assert_eq!(h.edges.len(), 26);
    let (_, p) = chi_square_uniform(&h.counts).unwrap();
    assert!(p > 0.001);
    let (_, p) = chi_square_uniform(&[100, 10, 100, 10]).unwrap();
    assert!(p < 1e-10);
}

#[test]
fn residuals_require_matching_grids() {
    let a = VoltageTrace::new(0.0, 0.01, vec![1.0, 2.0, 3.0]).unwrap();
    let b = VoltageTrace::new(0.0, 0.02, vec![1.0, 2.0, 3.0]).unwrap();
    assert!(matches!(residuals(&a, &b), Err(Error::Alignment(_))));
    assert_eq!(residuals(&a, &a).unwrap(), vec![0.0; 3]);
}
