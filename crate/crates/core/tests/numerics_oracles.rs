//! Oracle checks for the numerical kernels: spectral radius against
//! constructed spectra, ridge against the explicit normal-equation inverse,
//! PCA against the singular value decomposition, and the random streams
//! against distribution moments.

use nalgebra::{DMatrix, DVector};
use reservoir_cast_core::numerics::{
    quantile, ridge_solve, spectral_radius, PcaBasis, RngStream,
};

/// Block-diagonal matrix of 2×2 rotation-scale blocks (eigenvalues
/// `r·e^{±iθ}`) plus a trailing 1×1 block when the size is odd; its
/// spectral radius is the largest block radius by construction.
fn known_spectrum(rng: &mut reservoir_cast_core::numerics::StreamRng, n: usize) -> (DMatrix<f64>, f64) {
    let mut m = DMatrix::zeros(n, n);
    let mut radius: f64 = 0.0;
    let mut i = 0;
    while i + 1 < n {
        let r = rng.uniform_in(0.05, 2.0);
        let theta = rng.uniform_in(0.0, core::f64::consts::TAU);
        let (s, c) = theta.sin_cos();
        m[(i, i)] = r * c;
        m[(i, i + 1)] = -r * s;
        m[(i + 1, i)] = r * s;
        m[(i + 1, i + 1)] = r * c;
        radius = radius.max(r);
        i += 2;
    }
    if i < n {
        let r = rng.uniform_in(-2.0, 2.0);
        m[(i, i)] = r;
        radius = radius.max(r.abs());
    }
    (m, radius)
}

#[test]
fn spectral_radius_matches_constructed_spectra() {
    let mut rng = RngStream::new(0xEC0, 0).stream();
    for trial in 0..100 {
        let n = 2 + (trial % 13);
        let (d, truth) = known_spectrum(&mut rng, n);

        // Similarity transforms preserve eigenvalues exactly; use a
        // diagonally dominant random P so the conditioning stays mild.
        let mut p = DMatrix::from_fn(n, n, |_, _| rng.uniform_in(-1.0, 1.0));
        for i in 0..n {
            p[(i, i)] += 3.0;
        }
        let p_inv = p.clone().try_inverse().expect("diagonally dominant");
        let a = &p * &d * &p_inv;

        let got = spectral_radius(&a).unwrap();
        assert!(
            (got - truth).abs() <= 1e-6 * truth.max(1.0),
            "trial {trial}: got {got}, constructed {truth}"
        );
    }
}

#[test]
fn spectral_radius_is_linear_in_matrix_scale() {
    let mut rng = RngStream::new(0xEC1, 0).stream();
    for _ in 0..20 {
        let m = DMatrix::from_fn(15, 15, |_, _| {
            if rng.uniform() < 0.2 {
                rng.uniform_in(-0.5, 0.5)
            } else {
                0.0
            }
        });
        let rho = spectral_radius(&m).unwrap();
        if rho < 1e-12 {
            continue;
        }
        for scale in [0.01, 0.65, 3.0] {
            let scaled = &m * scale;
            let got = spectral_radius(&scaled).unwrap();
            assert!(
                (got - scale * rho).abs() <= 1e-9 * (scale * rho),
                "got {got}, want {}",
                scale * rho
            );
        }
    }
}

#[test]
fn ridge_matches_explicit_normal_equation_inverse() {
    let mut rng = RngStream::new(0xEC2, 0).stream();
    for &penalty in &[0.0, 0.3, 10.0] {
        let features = DMatrix::from_fn(20, 6, |_, _| rng.normal());
        let targets = DMatrix::from_fn(20, 3, |_, _| rng.normal());
        let gram = features.transpose() * &features + DMatrix::identity(6, 6) * penalty;
        let expected = gram.try_inverse().unwrap() * features.transpose() * &targets;
        let got = ridge_solve(&features, &targets, penalty).unwrap();
        assert!(
            (&got - &expected).amax() < 1e-8,
            "penalty {penalty}: max gap {}",
            (&got - &expected).amax()
        );
    }
}

#[test]
fn pca_reconstruction_error_equals_trailing_spectrum_energy() {
    let mut rng = RngStream::new(0xEC3, 0).stream();
    // Correlated columns so the spectrum actually decays.
    let latent = DMatrix::from_fn(40, 3, |_, _| rng.normal());
    let mixing = DMatrix::from_fn(3, 9, |_, _| rng.normal());
    let data = &latent * &mixing + DMatrix::from_fn(40, 9, |_, _| 0.3 * rng.normal());

    let means = DVector::from_fn(9, |j, _| data.column(j).sum() / 40.0);
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= means.transpose();
    }
    let mut sigma: Vec<f64> = centered
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    sigma.sort_by(|a, b| b.total_cmp(a));

    for k in [1, 3, 6] {
        let basis = PcaBasis::fit(&data, k).unwrap();
        let recon = basis.reconstruct(&basis.project(&data).unwrap()).unwrap();
        let err = (&data - &recon).iter().map(|v| v * v).sum::<f64>();
        let trailing: f64 = sigma[k..].iter().map(|s| s * s).sum();
        assert!(
            (err - trailing).abs() <= 1e-8 * trailing.max(1.0),
            "k={k}: residual energy {err} vs trailing spectrum {trailing}"
        );

        let gram = basis.components().transpose() * basis.components();
        assert!(
            (&gram - DMatrix::identity(k, k)).amax() < 1e-10,
            "components must be orthonormal"
        );
    }
}

#[test]
fn pca_matches_truncated_svd_reconstruction() {
    let mut rng = RngStream::new(0xEC4, 0).stream();
    let data = DMatrix::from_fn(25, 7, |_, _| rng.normal() + 2.0);
    let k = 4;

    let means = DVector::from_fn(7, |j, _| data.column(j).sum() / 25.0);
    let mut centered = data.clone();
    for mut row in centered.row_iter_mut() {
        row -= means.transpose();
    }
    let svd = centered.clone().svd(true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let sigma = svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));

    let mut truncated = DMatrix::zeros(25, 7);
    for &idx in order.iter().take(k) {
        let ui = u.column(idx);
        let vi = v_t.row(idx);
        truncated += (ui * vi) * sigma[idx];
    }
    for mut row in truncated.row_iter_mut() {
        row += means.transpose();
    }

    let basis = PcaBasis::fit(&data, k).unwrap();
    let recon = basis.reconstruct(&basis.project(&data).unwrap()).unwrap();
    assert!(
        (&recon - &truncated).amax() < 1e-8,
        "max gap {}",
        (&recon - &truncated).amax()
    );
}

#[test]
fn uniforms_pass_moment_and_correlation_checks() {
    let n = 200_000;
    let mut rng = RngStream::new(0xEC5, 0).stream();
    let draws: Vec<f64> = (0..n).map(|_| rng.uniform()).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    assert!((var - 1.0 / 12.0).abs() < 0.002, "var {var}");

    let lag1: f64 = draws
        .windows(2)
        .map(|w| (w[0] - 0.5) * (w[1] - 0.5))
        .sum::<f64>()
        / (n - 1) as f64
        / (1.0 / 12.0);
    assert!(lag1.abs() < 0.01, "lag-1 autocorrelation {lag1}");

    let mut other = RngStream::new(0xEC5, 1).stream();
    let cross: f64 = (0..n)
        .map(|i| (draws[i] - 0.5) * (other.uniform() - 0.5))
        .sum::<f64>()
        / n as f64
        / (1.0 / 12.0);
    assert!(cross.abs() < 0.01, "cross-stream correlation {cross}");
}

#[test]
fn normals_match_moments_and_tail_mass() {
    let n = 200_000;
    let mut rng = RngStream::new(0xEC6, 0).stream();
    let draws: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    let tail = draws.iter().filter(|x| x.abs() > 1.959964).count() as f64 / n as f64;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.02, "var {var}");
    assert!((tail - 0.05).abs() < 0.005, "two-sided 5% tail mass {tail}");
}

#[test]
fn gamma_and_inverse_gamma_match_their_moments() {
    let n = 200_000;
    let mut rng = RngStream::new(0xEC7, 0).stream();
    let (shape, scale) = (2.5, 2.0);
    let draws: Vec<f64> = (0..n).map(|_| rng.gamma(shape, scale)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    assert!((mean - shape * scale).abs() < 0.03, "gamma mean {mean}");
    assert!(
        (var - shape * scale * scale).abs() < 0.15,
        "gamma var {var}"
    );

    // Inverse-gamma(6, 5): mean 1, variance 1/4.
    let draws: Vec<f64> = (0..n).map(|_| rng.inverse_gamma(6.0, 5.0)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.01, "inverse-gamma mean {mean}");
    assert!((var - 0.25).abs() < 0.02, "inverse-gamma var {var}");
    assert!(draws.iter().all(|x| *x > 0.0));
}

#[test]
fn bernoulli_frequency_matches_probability() {
    let n = 100_000;
    for (stream, p) in [(0u64, 0.1), (1, 0.5), (2, 0.9)] {
        let mut rng = RngStream::new(0xEC8, stream).stream();
        let hits = (0..n).filter(|_| rng.bernoulli(p)).count() as f64 / n as f64;
        assert!((hits - p).abs() < 0.005, "p={p}: frequency {hits}");
    }
}

#[test]
fn quantile_matches_independent_interpolation_on_random_data() {
    let mut rng = RngStream::new(0xEC9, 0).stream();
    for trial in 0..30 {
        let len = 1 + (trial % 17);
        let values: Vec<f64> = (0..len).map(|_| rng.normal() * 5.0).collect();
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        for p in [0.0, 0.025, 0.25, 0.5, 0.733, 0.975, 1.0] {
            let h = (len - 1) as f64 * p;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            let expected = sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]);
            let got = quantile(&values, p).unwrap();
            assert!(
                (got - expected).abs() < 1e-12,
                "len {len}, p {p}: got {got}, want {expected}"
            );
        }
    }
}
