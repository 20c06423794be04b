use clipped_ofdm::bfpa::{BfpaModel, LinearPa};
use clipped_ofdm::imp_count::{count_third_order, ImpProfile};
use clipped_ofdm::link_analysis::*;
use clipped_ofdm::optimize::*;
use clipped_ofdm::Error;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn setup() -> (SystemConfig, BfpaModel, ImpProfile) {
    let cfg = SystemConfig::default();
    let profile = count_third_order(cfg.n_s).unwrap();
    (cfg, BfpaModel::reference().model, profile)
}

fn gamma_at(cfg: &SystemConfig, pa: &BfpaModel, profile: &ImpProfile, e_u: f64, eta: f64) -> f64 {
    let point = SystemConfig { e_u, eta, ..cfg.clone() };
    snr_breakdown(&point, pa, profile, cfg.lambda() as f64).unwrap().gamma
}

fn consistent(r: &OptResult, cfg: &SystemConfig, pa: &BfpaModel, profile: &ImpProfile) {
    let point = SystemConfig { e_u: r.e_u_opt, eta: r.eta_opt, ..cfg.clone() };
    let (b, ser) = analytic_point(&point, pa, profile).unwrap();
    assert!(rel(ser, r.ser_opt) < 1e-9);
    assert!(rel(b.gamma, r.gamma_opt) < 1e-9);
}

#[test]
fn eu_optimum_scales_with_noise() {
    let (cfg, pa, profile) = setup();
    let base = optimal_eu_closed(&cfg, &pa, &profile).unwrap();
    let noisy = SystemConfig { sigma_ch_sq: 4.0 * cfg.sigma_ch_sq, ..cfg.clone() };
    let scaled = optimal_eu_closed(&noisy, &pa, &profile).unwrap();
    assert!(rel(scaled.e_u_opt / base.e_u_opt, 4f64.cbrt()) < 1e-12);
    assert_eq!(base.method, Method::ClosedForm);
    consistent(&base, &cfg, &pa, &profile);
}

#[test]
fn eu_optimum_matches_grid_search() {
    let (cfg, pa, profile) = setup();
    let cfg = cfg.with_eta(6.0);
    let r = optimal_eu_closed(&cfg, &pa, &profile).unwrap();
    let step_db = 80.0 / 1999.0;
    let grid: Vec<f64> = (0..2000).map(|i| -40.0 + step_db * i as f64).collect();
    let best = grid
        .iter()
        .copied()
        .min_by(|&a, &b| {
            let s = |u: f64| ser_analytic(&cfg.with_e_u(10f64.powf(u / 10.0)), &pa, &profile).unwrap();
            s(a).total_cmp(&s(b))
        })
        .unwrap();
    assert!((10.0 * r.e_u_opt.log10() - best).abs() <= step_db);
}

#[test]
fn gamma_rises_then_falls_around_eu_optimum() {
    let (cfg, pa, profile) = setup();
    let e = optimal_eu_closed(&cfg, &pa, &profile).unwrap().e_u_opt;
    let slope = |x: f64| {
        let h = 1e-6 * x;
        gamma_at(&cfg, &pa, &profile, x + h, cfg.eta) - gamma_at(&cfg, &pa, &profile, x - h, cfg.eta)
    };
    for f in [0.5, 0.9, 0.99] {
        assert!(slope(e * f) > 0.0);
        assert!(slope(e / f) < 0.0);
    }
    assert!(slope(e).abs() < 1e-6 * gamma_at(&cfg, &pa, &profile, e, cfg.eta));
}

#[test]
fn eta_optimum_is_stationary() {
    let (cfg, pa, profile) = setup();
    let cfg = cfg.with_e_u(4.0);
    let r = optimal_eta_closed(&cfg, &pa, &profile).unwrap();
    assert!(!r.boundary && r.eta_opt.is_finite(), "{r:?}");
    consistent(&r, &cfg, &pa, &profile);
    assert!(stationarity_residual(&cfg, &pa, &profile, r.eta_opt).unwrap().abs() < 1e-6);
    // ∂γ/∂β² > 0 below the optimum and < 0 above
    assert!(stationarity_residual(&cfg, &pa, &profile, 0.9 * r.eta_opt).unwrap() > 0.0);
    assert!(stationarity_residual(&cfg, &pa, &profile, 1.1 * r.eta_opt).unwrap() < 0.0);
}

#[test]
fn weak_drive_leaves_clipper_off() {
    let (cfg, pa, profile) = setup();
    let r = optimal_eta_closed(&cfg.with_e_u(1e-3), &pa, &profile).unwrap();
    assert!(r.boundary);
    assert_eq!(r.eta_opt, f64::INFINITY);
}

#[test]
fn linear_amplifier_has_no_optimum() {
    let (cfg, _, profile) = setup();
    let pa = LinearPa::new(1.0, 1.0).unwrap();
    assert!(matches!(optimal_eu_closed(&cfg, &pa, &profile), Err(Error::Unbounded(_))));
    assert!(matches!(optimal_eta_closed(&cfg, &pa, &profile), Err(Error::Unbounded(_))));
    assert!(matches!(joint_optimum(&cfg, &pa, &profile), Err(Error::Unbounded(_))));
}

#[test]
fn joint_optimum_properties() {
    let (cfg, pa, profile) = setup();
    let j = joint_optimum(&cfg, &pa, &profile).unwrap();
    assert_eq!(j.method, Method::Numerical);
    consistent(&j, &cfg, &pa, &profile);

    // both partials of γ vanish
    let g0 = j.gamma_opt;
    let d = 1e-4;
    let du = gamma_at(&cfg, &pa, &profile, j.e_u_opt * (1.0 + d), j.eta_opt)
        - gamma_at(&cfg, &pa, &profile, j.e_u_opt * (1.0 - d), j.eta_opt);
    assert!((du / (2.0 * d * g0)).abs() < 1e-5);
    if !j.boundary {
        let de = gamma_at(&cfg, &pa, &profile, j.e_u_opt, j.eta_opt * (1.0 + d))
            - gamma_at(&cfg, &pa, &profile, j.e_u_opt, j.eta_opt * (1.0 - d));
        assert!((de / (2.0 * d * g0)).abs() < 1e-5);
    }

    let pinned = optimal_eu_closed(&cfg.with_eta(j.eta_opt), &pa, &profile).unwrap();
    assert!(rel(pinned.e_u_opt, j.e_u_opt) < 1e-4);

    // global optimum beats every conditional one
    for i in 0..20 {
        let eta = 0.5 + 0.25 * i as f64;
        let r = optimal_eu_closed(&cfg.with_eta(eta), &pa, &profile).unwrap();
        assert!(j.ser_opt <= r.ser_opt + 1e-12, "eta {eta}");
    }
    for i in 0..20 {
        let e_u = 10f64.powf((-10.0 + i as f64) / 10.0);
        let r = optimal_eta_closed(&cfg.with_e_u(e_u), &pa, &profile).unwrap();
        assert!(j.ser_opt <= r.ser_opt + 1e-12, "e_u {e_u}");
    }
}

#[test]
fn joint_closed_forms_are_reported() {
    let (cfg, pa, profile) = setup();
    let c = joint_closed_forms(&cfg, &pa, &profile).unwrap();
    assert_eq!(c.reference_ser, 8.57e-6);
    assert!(c.e_u_g.is_finite() && c.gamma_g.is_finite());
}

#[test]
fn derivative_of_ser_in_gamma() {
    let cfg = SystemConfig::default();
    let (m, l, h) = (cfg.m, cfg.lambda(), cfg.lambda() as f64);
    for i in 0..50 {
        let g = 10f64.powf(-0.5 + 4.0 * i as f64 / 49.0);
        let d = ser_vs_gamma_derivative(g, &cfg).unwrap();
        assert!(d < 0.0);
        let step = 1e-5 * g;
        let fd = (ser_closed_form(g + step, m, l, h).unwrap() - ser_closed_form(g - step, m, l, h).unwrap()) / (2.0 * step);
        assert!(rel(d, fd) < 1e-6, "gamma {g}: {d} vs {fd}");
    }
    let far = ser_vs_gamma_derivative(1e12, &cfg).unwrap();
    assert!(far <= 0.0 && far > -1e-30);
    assert_eq!(ser_vs_gamma_derivative(f64::INFINITY, &cfg).unwrap(), 0.0);
}

#[test]
fn golden_section_basics() {
    let x = golden_section(|x| (x - 1.3).powi(2), 0.0, 4.0, 1e-10);
    assert!((x - 1.3).abs() < 1e-8);
    assert_eq!(golden_section(|x| x, 2.0, 5.0, 1e-10), 2.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eu_optimum_is_gamma_maximum(eta in 0.5f64..6.0, log_sigma in -5.0f64..-1.0) {
        let (cfg, pa, profile) = setup();
        let cfg = SystemConfig { eta, sigma_ch_sq: 10f64.powf(log_sigma), ..cfg };
        let r = optimal_eu_closed(&cfg, &pa, &profile).unwrap();
        for f in [0.8, 0.95, 1.05, 1.25] {
            prop_assert!(gamma_at(&cfg, &pa, &profile, r.e_u_opt * f, eta) < r.gamma_opt);
        }
    }
}
