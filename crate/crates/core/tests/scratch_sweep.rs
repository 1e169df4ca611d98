//! Temporary calibration sweep (not part of the suite).

use dpgd_core::analysis::{evaluate_test_metrics, EvalConfig, TiePolicy};
use dpgd_core::{run_training, Activation, Algo, Dataset, Mode, NoiseSpec, SignalSpec, TrainConfig};

#[test]
#[ignore]
fn sweep_defaults() {
    let d = 400;
    let m = 20;
    let n = 200;
    let steps = 4000u64;
    let signal = SignalSpec::uniform_direction(d, 1.0).unwrap();
    let noise = NoiseSpec::new(0.5).unwrap();
    let eval = EvalConfig { n_test: 4000, seed: 900, tie_policy: TiePolicy::Error };
    let data = Dataset::sample(n, &signal, &noise, 7001).unwrap();

    for kappa in [0.08, 0.1, 0.15, 0.2] {
        for sigma0 in [0.01, 0.02, 0.04] {
            let a = Activation::new(kappa, 3).unwrap();
            let mut out = String::new();
            for algo in [Algo::Gd, Algo::Dpgd] {
                let cfg = TrainConfig {
                    m,
                    eta: 0.1,
                    steps,
                    sigma0,
                    sigma_b: if algo == Algo::Dpgd { 0.01 } else { 0.0 },
                    algo,
                    mode: Mode::Direct,
                    seed: 7101,
                    eval_every: steps,
                    checkpoint_every: None,
                    track_decomposition: true,
                    log_noise_projections: false,
                };
                let rec = run_training(&data, &a, &cfg).unwrap();
                let loss = rec.metrics.last().unwrap().train_loss;
                let w = rec.final_weights.as_ref().unwrap();
                let mets = evaluate_test_metrics(w, &signal, &noise, &a, &eval).unwrap();
                let dec = &rec.decomposition.as_ref().unwrap().final_state;
                out.push_str(&format!(
                    " | {:?} loss {:.3} acc {:.3} gmean {:.3} gmax {:.3} rmax {:.3}",
                    algo,
                    loss,
                    mets.test_acc,
                    dec.gamma_mean(),
                    dec.gamma_max(),
                    dec.rho_pos_max()
                ));
            }
            eprintln!("kappa {kappa} sigma0 {sigma0}{out}");
        }
    }
}
