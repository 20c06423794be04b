use clipped_ofdm::bfpa::{BfpaModel, LinearPa};
use clipped_ofdm::clipping::clip_sample;
use clipped_ofdm::imp_count::count_third_order;
use clipped_ofdm::link_analysis::{snr_breakdown, SystemConfig};
use clipped_ofdm::optimize::optimal_eu_closed;
use clipped_ofdm::simulator::ofdm::OfdmModem;
use clipped_ofdm::simulator::*;
use clipped_ofdm::specfun::{erfc, gamma_fn};
use proptest::prelude::*;

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

// QPSK over λ-branch Rayleigh MRC at per-branch SNR ρ, integrated in u = √t
fn rayleigh_qpsk(rho: f64, lambda: usize) -> f64 {
    let l = lambda as f64;
    let q = |x: f64| 0.5 * erfc(x / 2f64.sqrt());
    let awgn = |t: f64| {
        let p = q(t.sqrt());
        2.0 * p - p * p
    };
    let norm = gamma_fn(l).unwrap() * rho.powf(l);
    let pdf = |t: f64| t.powf(l - 1.0) * (-t / rho).exp() / norm;
    simpson(|u| 2.0 * u * awgn(u * u) * pdf(u * u), 0.0, (80.0 * rho).sqrt(), 200_000)
}

fn linear() -> LinearPa {
    LinearPa::new(1.0, 1.0).unwrap()
}

#[test]
fn result_is_independent_of_worker_count() {
    let sys = SystemConfig { eta: 1.5, e_u: 2.0, sigma_ch_sq: 0.05, ..SystemConfig::default() };
    let sim = SimConfig { parallel_streams: 5, ..SimConfig::new(sys, 300, 11) };
    let pa = BfpaModel::reference().model;
    let runs: Vec<SimResult> = [1, 2, 3]
        .iter()
        .map(|&n| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
            pool.install(|| run_ser(&sim, &pa).unwrap())
        })
        .collect();
    assert_eq!(runs[0], runs[1]);
    assert_eq!(runs[0], runs[2]);
    assert!(runs[0].errors > 0 && runs[0].errors <= runs[0].symbols);
    assert_eq!(runs[0].symbols, 300 * 64);
    let other_seed = run_ser(&SimConfig { seed: 12, ..sim.clone() }, &pa).unwrap();
    assert_ne!(other_seed.errors, runs[0].errors);
}

#[test]
fn energy_bookkeeping() {
    let modem = OfdmModem::new(64, 4, 4).unwrap();
    let mut work = modem.workspace();
    let mut rng = stream_rng(3, 0);
    let (e_u, eta): (f64, f64) = (2.5, 1.0);
    let threshold = eta * e_u.sqrt();
    let (mut raw, mut clipped, mut n) = (0.0, 0.0, 0usize);
    for _ in 0..10_000 {
        modem.random_symbols(&mut rng, &mut work);
        modem.modulate(&mut work, e_u);
        for &x in &work.time {
            raw += x.norm_sqr();
            clipped += clip_sample(x, threshold).norm_sqr();
        }
        n += work.time.len();
    }
    let (raw, clipped) = (raw / n as f64, clipped / n as f64);
    assert!((raw / e_u - 1.0).abs() < 0.005, "pre-clip power {raw}");
    let want = (1.0 - (-eta * eta).exp()) * e_u;
    assert!((clipped / want - 1.0).abs() < 0.01, "clipped power {clipped} vs {want}");
}

#[test]
fn channel_statistics() {
    let mut rng = stream_rng(9, 1);
    let draws = 100_000;
    let (n_r, n_t) = (2, 2);
    let mean = (0..draws).map(|_| ChannelRealization::draw(n_r, n_t, &mut rng).frobenius_sq).sum::<f64>() / draws as f64;
    // ‖H‖² ~ Gamma(λ, 1): variance λ
    let lambda = 4.0;
    assert!((mean - lambda).abs() <= 3.0 * (lambda / draws as f64).sqrt(), "mean {mean}");
    let h = ChannelRealization::draw(3, 2, &mut rng);
    assert_eq!((h.entries.nrows(), h.entries.ncols()), (3, 2));
}

#[test]
fn noiseless_linear_chain_is_error_free() {
    let sys = SystemConfig { eta: 100.0, sigma_ch_sq: 1e-14, ..SystemConfig::default() };
    let r = run_ser(&SimConfig::new(sys, 1563, 2), &linear()).unwrap();
    assert!(r.symbols >= 100_000);
    assert_eq!(r.errors, 0);
    assert_eq!(r.ser_estimate, 0.0);
}

#[test]
fn linear_chain_matches_rayleigh_qpsk() {
    let sys = SystemConfig { n_t: 1, n_r: 1, eta: 100.0, sigma_ch_sq: 0.1, ..SystemConfig::default() };
    let r = run_ser(&SimConfig::new(sys, 3000, 4), &linear()).unwrap();
    let want = rayleigh_qpsk(10.0, 1);
    assert!((r.ser_estimate - want).abs() <= 3.0 * r.ser_ci95, "{} ± {} vs {want}", r.ser_estimate, r.ser_ci95);
}

#[test]
fn papr_ccdf_shape() {
    let sys = SystemConfig { n_s: 64, ..SystemConfig::default() };
    let sim = SimConfig::new(sys.clone(), 4000, 1);
    let t: Vec<f64> = (0..=12).map(f64::from).collect();
    let mut with_floor = vec![-30.0];
    with_floor.extend(&t);
    let c = papr_ccdf(&sim, &with_floor).unwrap();
    assert_eq!(c[0].ccdf, 1.0);
    assert!(c.windows(2).all(|w| w[1].ccdf <= w[0].ccdf));
    let wide = papr_ccdf(&SimConfig::new(SystemConfig { n_s: 256, ..sys }, 4000, 1), &[9.0]).unwrap();
    let at9 = c.iter().find(|p| p.threshold_db == 9.0).unwrap();
    assert!(wide[0].ccdf > at9.ccdf);
    assert!(papr_ccdf(&sim, &[3.0, 1.0]).is_err());
}

#[test]
fn empirical_snr_ablation() {
    let prof = count_third_order(64).unwrap();
    let clean = SystemConfig { eta: 100.0, ..SystemConfig::default() };
    let e = empirical_snr(&SimConfig::new(clean.clone(), 500, 5), &linear()).unwrap();
    assert!(e.clipping_noise <= 0.01 * e.channel_noise);
    assert!(e.nonlinear_noise <= 0.01 * e.channel_noise);
    assert!((e.channel_noise / clean.sigma_ch_sq - 1.0).abs() < 0.02);
    let a = snr_breakdown(&clean, &linear(), &prof, 4.0).unwrap();
    assert!((e.signal_power / a.signal_power - 1.0).abs() < 1e-9);

    let clipped = SystemConfig { eta: 1.0, ..SystemConfig::default() };
    let e = empirical_snr(&SimConfig::new(clipped.clone(), 2000, 5), &linear()).unwrap();
    let a = snr_breakdown(&clipped, &linear(), &prof, 4.0).unwrap();
    assert!((e.signal_power / a.signal_power - 1.0).abs() < 0.01);
    assert!(e.clipping_noise > 0.0);

    let pa = BfpaModel::reference().model;
    let base = SystemConfig::default();
    let opt = optimal_eu_closed(&base, &pa, &prof).unwrap();
    let hot = base.with_e_u(opt.e_u_opt * 10f64.powf(0.6));
    let e = empirical_snr(&SimConfig::new(hot, 500, 5), &pa).unwrap();
    assert!(e.nonlinear_noise > e.channel_noise);
}

#[test]
fn linear_amplifier_has_no_degradation() {
    let sys = SystemConfig { n_s: 16, eta: f64::INFINITY, ..SystemConfig::default() };
    let sim = SimConfig::new(sys, 200, 3);
    let grid = [0.0, 3.0, 6.0];
    let points = td_vs_obo(&sim, &linear(), 1e-2, &grid).unwrap();
    for p in &points {
        assert!((p.td_db.unwrap() - p.obo_db).abs() < 0.05, "{p:?}");
    }
    assert_eq!(truncation_obo(&points), None);
    assert!(td_vs_obo(&sim, &linear(), 0.5, &grid).is_err());
}

#[test]
fn output_power_drive_inverse() {
    let pa = BfpaModel::reference().model;
    let target = 0.3 * clipped_ofdm::bfpa::AmplifierResponse::saturation_power(&pa);
    let e_u = drive_for_output(&pa, 2.0, target).unwrap();
    assert!((mean_output_power(&pa, 2.0, e_u) / target - 1.0).abs() < 1e-9);
    assert_eq!(drive_for_output(&linear(), 2.0, 1e12), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn split_is_a_partition(trials in 0usize..10_000, streams in 1usize..64) {
        let parts = split_trials(trials, streams);
        prop_assert_eq!(parts.len(), streams);
        prop_assert_eq!(parts.iter().sum::<usize>(), trials);
        prop_assert!(parts.iter().max().unwrap() - parts.iter().min().unwrap() <= 1);
    }

    #[test]
    fn wilson_contains_estimate(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let errors = (frac * n as f64).round() as u64;
        let (lo, hi) = wilson_interval(errors, n);
        let p = errors as f64 / n as f64;
        prop_assert!(lo <= p + 1e-15 && p <= hi + 1e-15);
        prop_assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi));
    }
}
