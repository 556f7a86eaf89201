//! Statistical behavior of the shallow ensemble on simulated fields:
//! ensemble averaging beats a single member out of sample, member spread
//! plus residual noise yields calibrated intervals, and the ensemble beats
//! the no-skill baselines it is supposed to beat.

use nalgebra::DMatrix;
use reservoir_cast_core::baselines::{
    climatology_forecast, persistence_forecast, simulate_linear_dstm, simulate_two_scale,
    GqnParams, TwoScaleParams,
};
use reservoir_cast_core::field::{unit_grid_locations, FieldSeries};
use reservoir_cast_core::numerics::{quantile, RngStream};
use reservoir_cast_core::qeesn::{QeesnEnsemble, QeesnHyper};
use reservoir_cast_core::reservoir::ReservoirParams;

fn two_scale_field(t_len: usize, n_y: usize, seed: u64) -> FieldSeries {
    let params = TwoScaleParams {
        n_y,
        fast_dim: 3,
        slow_dim: 2,
        ..TwoScaleParams::default()
    };
    let run = simulate_two_scale(&params, t_len, 100, RngStream::new(seed, 0)).unwrap();
    FieldSeries::new(
        run.fields,
        (0..t_len as i64).collect(),
        unit_grid_locations(n_y),
    )
    .unwrap()
}

fn linear_dstm_field(t_len: usize, n_y: usize, seed: u64) -> FieldSeries {
    let shape = GqnParams::default_stable(4, n_y, RngStream::new(seed, 0)).unwrap();
    let innovation = DMatrix::identity(4, 4) * 0.09;
    let run = simulate_linear_dstm(
        &shape.theta_linear,
        &innovation,
        &shape.phi_out,
        t_len,
        100,
        RngStream::new(seed, 1),
    )
    .unwrap();
    FieldSeries::new(
        run.fields,
        (0..t_len as i64).collect(),
        unit_grid_locations(n_y),
    )
    .unwrap()
}

fn holdout_mse(model: &QeesnEnsemble, z: &FieldSeries, eval_from: usize) -> f64 {
    let pred = model.predict_series(z.values(), false).unwrap();
    let start_row = eval_from - pred.valid_start;
    let rows = z.t_len() - eval_from;
    let mut sq = 0.0;
    for r in 0..rows {
        for c in 0..z.n_loc() {
            let diff = pred.mean[(start_row + r, c)] - z.values()[(eval_from + r, c)];
            sq += diff * diff;
        }
    }
    sq / (rows * z.n_loc()) as f64
}

fn small_hyper() -> QeesnHyper {
    QeesnHyper {
        reservoir: ReservoirParams {
            n_h: 30,
            ..ReservoirParams::default()
        },
        burn_in: 20,
        ..QeesnHyper::default()
    }
}

#[test]
fn ensemble_mean_beats_a_single_member_out_of_sample() {
    let hyper = small_hyper();
    let mut wins = 0;
    for seed in 0..10u64 {
        let z = two_scale_field(260, 8, 100 + seed);
        let train = z.window(0, 200).unwrap();
        let single = QeesnEnsemble::fit(&train, None, &hyper, 1, seed).unwrap();
        let ensemble = QeesnEnsemble::fit(&train, None, &hyper, 12, seed).unwrap();
        let mse_single = holdout_mse(&single, &z, 200);
        let mse_ensemble = holdout_mse(&ensemble, &z, 200);
        if mse_ensemble <= mse_single {
            wins += 1;
        }
    }
    assert!(
        wins >= 9,
        "ensemble averaging should not lose to a lone member; won {wins}/10"
    );
}

#[test]
fn member_spread_plus_noise_covers_held_out_truth() {
    let z = linear_dstm_field(600, 8, 5);
    let train = z.window(0, 500).unwrap();
    let hyper = small_hyper();
    let model = QeesnEnsemble::fit(&train, None, &hyper, 40, 17).unwrap();

    let pred = model.predict_series(z.values(), true).unwrap();
    let eval_from = 500;
    let start_row = eval_from - pred.valid_start;
    let rows = z.t_len() - eval_from;
    let mut hits = 0usize;
    let mut cells = 0usize;
    let mut band = Vec::with_capacity(pred.members.len());
    for r in 0..rows {
        for c in 0..z.n_loc() {
            band.clear();
            band.extend(pred.members.iter().map(|m| m[(start_row + r, c)]));
            let lo = quantile(&band, 0.025).unwrap();
            let hi = quantile(&band, 0.975).unwrap();
            let truth = z.values()[(eval_from + r, c)];
            if lo <= truth && truth <= hi {
                hits += 1;
            }
            cells += 1;
        }
    }
    let coverage = hits as f64 / cells as f64;
    assert!(
        (0.85..=0.995).contains(&coverage),
        "95% band coverage {coverage} out of calibration"
    );
}

#[test]
fn ensemble_beats_persistence_and_climatology_on_autocorrelated_fields() {
    let z = linear_dstm_field(460, 6, 9);
    let train = z.window(0, 400).unwrap();
    let model = QeesnEnsemble::fit(&train, None, &small_hyper(), 10, 3).unwrap();
    let model_mse = holdout_mse(&model, &z, 400);

    // One-step-style baselines applied per held-out time: persistence
    // carries the previous observed field, climatology the training mean.
    let clim = climatology_forecast(&train.values().rows(0, 400).into_owned(), 1).unwrap();
    let mut persist_sq = 0.0;
    let mut clim_sq = 0.0;
    for t in 400..460 {
        let prev = persistence_forecast(&z.values().rows(0, t).into_owned(), 1).unwrap();
        for c in 0..6 {
            let truth = z.values()[(t, c)];
            let dp = prev[(0, c)] - truth;
            persist_sq += dp * dp;
            let dc = clim[(0, c)] - truth;
            clim_sq += dc * dc;
        }
    }
    let persist_mse = persist_sq / (60 * 6) as f64;
    let clim_mse = clim_sq / (60 * 6) as f64;
    assert!(
        model_mse < persist_mse,
        "model {model_mse} vs persistence {persist_mse}"
    );
    assert!(
        model_mse < clim_mse,
        "model {model_mse} vs climatology {clim_mse}"
    );
}
