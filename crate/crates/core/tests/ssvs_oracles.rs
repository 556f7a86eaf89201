//! Exact-enumeration checks for the spike-and-slab sampler.
//!
//! With three candidate features the indicator space has eight points, so the
//! posterior over indicators can be computed by brute force: for each subset,
//! integrate the Gaussian marginal likelihood over the noise variance on a
//! log-scale quadrature grid, weight by the subset prior, and normalise. The
//! sampler's inclusion frequencies and posterior noise mean must agree with
//! that enumeration to within Monte Carlo error.

use nalgebra::{DMatrix, DVector};
use reservoir_cast_core::numerics::RngStream;
use reservoir_cast_core::ssvs::{gibbs_run, posterior_summaries, GibbsSettings, SsvsPrior};

const SLAB: f64 = 1.0;
const SPIKE: f64 = 0.005;
const PI_INCLUDE: f64 = 0.3;
const ALPHA_ETA: f64 = 2.0;
const BETA_ETA: f64 = 1.0;

fn logsumexp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// log N(y; 0, F diag(v) F' + s I) via a Cholesky factor of the covariance.
fn log_marginal_at_sigma2(
    y: &DVector<f64>,
    features: &DMatrix<f64>,
    slab_or_spike: &[f64],
    sigma2: f64,
) -> f64 {
    let n = y.len();
    let scaled = DMatrix::from_fn(n, slab_or_spike.len(), |i, j| {
        features[(i, j)] * slab_or_spike[j]
    });
    let mut cov = scaled * features.transpose();
    for i in 0..n {
        cov[(i, i)] += sigma2;
    }
    let chol = cov.cholesky().expect("covariance is positive definite");
    let log_det = 2.0 * (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
    let solved = chol.solve(y);
    let quad = y.dot(&solved);
    -0.5 * (n as f64 * (2.0 * core::f64::consts::PI).ln() + log_det + quad)
}

/// Exact posterior over all indicator subsets for a one-response problem.
///
/// Returns per-feature inclusion probabilities and the posterior mean of the
/// noise variance. The inverse-gamma integral runs over `t = ln(sigma2)` with
/// Simpson weights; normalising constants shared by every subset cancel.
fn enumerate_posterior(y: &DVector<f64>, features: &DMatrix<f64>) -> (Vec<f64>, f64) {
    let q = features.ncols();
    let n_intervals = 2000usize;
    let (t_lo, t_hi) = (-12.0f64, 12.0f64);
    let h = (t_hi - t_lo) / n_intervals as f64;

    let mut log_weights = Vec::with_capacity(1 << q);
    let mut sigma2_means = Vec::with_capacity(1 << q);
    for subset in 0u32..(1 << q) {
        let variances: Vec<f64> = (0..q)
            .map(|b| {
                if subset >> b & 1 == 1 {
                    SLAB
                } else {
                    SPIKE
                }
            })
            .collect();
        let mut log_terms = Vec::with_capacity(n_intervals + 1);
        let mut log_terms_sigma2 = Vec::with_capacity(n_intervals + 1);
        for i in 0..=n_intervals {
            let t = t_lo + h * i as f64;
            let simpson: f64 = if i == 0 || i == n_intervals {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let log_density = log_marginal_at_sigma2(y, features, &variances, t.exp())
                - (ALPHA_ETA + 1.0) * t
                - BETA_ETA * (-t).exp()
                + t;
            log_terms.push(log_density + simpson.ln());
            log_terms_sigma2.push(log_density + t + simpson.ln());
        }
        let log_evidence = logsumexp(&log_terms);
        let included = (0..q).filter(|b| subset >> b & 1 == 1).count() as f64;
        let log_prior =
            included * PI_INCLUDE.ln() + (q as f64 - included) * (1.0 - PI_INCLUDE).ln();
        log_weights.push(log_prior + log_evidence);
        sigma2_means.push((logsumexp(&log_terms_sigma2) - log_evidence).exp());
    }

    let total = logsumexp(&log_weights);
    let weights: Vec<f64> = log_weights.iter().map(|lw| (lw - total).exp()).collect();
    let inclusion = (0..q)
        .map(|b| {
            weights
                .iter()
                .enumerate()
                .filter(|(subset, _)| *subset >> b & 1 == 1)
                .map(|(_, w)| w)
                .sum()
        })
        .collect();
    let sigma2 = weights
        .iter()
        .zip(&sigma2_means)
        .map(|(w, m)| w * m)
        .sum();
    (inclusion, sigma2)
}

#[test]
fn inclusion_probabilities_match_subset_enumeration() {
    let n = 40;
    let q = 3;
    let mut rng = RngStream::new(0x55_51, 0).stream();
    let features = DMatrix::from_fn(n, q, |_, _| rng.normal());
    let truth = DVector::from_vec(vec![0.35, -0.25, 0.0]);
    let y = DVector::from_fn(n, |i, _| {
        features.row(i).transpose().dot(&truth) + 0.6 * rng.normal()
    });

    let (exact_inclusion, exact_sigma2) = enumerate_posterior(&y, &features);
    assert!(exact_inclusion.iter().any(|p| *p > 0.5));
    assert!(exact_inclusion.iter().any(|p| *p < 0.5));

    let prior = SsvsPrior::uniform(1, SLAB, SPIKE, PI_INCLUDE, ALPHA_ETA, BETA_ETA);
    let settings = GibbsSettings {
        iterations: 50_000,
        burn_in: 5_000,
        thin: 1,
    };
    let responses = DMatrix::from_column_slice(n, 1, y.as_slice());
    let chain = gibbs_run(
        &features,
        &responses,
        &prior,
        &[0, 0, 0],
        &settings,
        RngStream::new(0x55_52, 0),
    )
    .unwrap();
    let summary = posterior_summaries(&chain).unwrap();

    for b in 0..q {
        let sampled = summary.inclusion_prob[(b, 0)];
        assert!(
            (sampled - exact_inclusion[b]).abs() < 0.02,
            "feature {b}: sampled inclusion {sampled:.4} vs exact {:.4}",
            exact_inclusion[b]
        );
    }
    assert!(
        (summary.sigma2_eta_mean - exact_sigma2).abs() < 0.04 * exact_sigma2,
        "sampled noise mean {:.4} vs exact {exact_sigma2:.4}",
        summary.sigma2_eta_mean
    );
}

#[test]
fn strong_signals_are_kept_and_noise_columns_dropped() {
    let n = 150;
    let q = 8;
    let active = [0usize, 3];
    for seed in [11u64, 12, 13] {
        let mut rng = RngStream::new(seed, 0).stream();
        let features = DMatrix::from_fn(n, q, |_, _| rng.normal());
        let y = DVector::from_fn(n, |i, _| {
            2.0 * features[(i, 0)] + 1.5 * features[(i, 3)] + 0.5 * rng.normal()
        });
        let responses = DMatrix::from_column_slice(n, 1, y.as_slice());

        let prior = SsvsPrior::uniform(1, 1.0, 0.001, 0.2, ALPHA_ETA, BETA_ETA);
        let settings = GibbsSettings {
            iterations: 6000,
            burn_in: 1000,
            thin: 1,
        };
        let chain = gibbs_run(
            &features,
            &responses,
            &prior,
            &vec![0; q],
            &settings,
            RngStream::new(seed, 1),
        )
        .unwrap();
        let summary = posterior_summaries(&chain).unwrap();

        for b in 0..q {
            let inclusion = summary.inclusion_prob[(b, 0)];
            if active.contains(&b) {
                assert!(
                    inclusion > 0.9,
                    "seed {seed}: active feature {b} kept with probability {inclusion:.3}"
                );
            } else {
                assert!(
                    inclusion < 0.3,
                    "seed {seed}: idle feature {b} kept with probability {inclusion:.3}"
                );
            }
        }
        let coef = summary.coef_mean[(0, 0)];
        assert!((coef - 2.0).abs() < 0.2, "seed {seed}: coef {coef:.3}");
    }
}
