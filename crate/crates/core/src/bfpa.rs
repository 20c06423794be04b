//! Bessel-Fourier power amplifier (BFPA) model.
//!
//! The AM-AM curve is `g(r) = Σ_p b_p J₁(2pπ r / P_mod)`, with AM-PM taken
//! as identity. Small-signal power coefficients `a₁`, `a₃` and the per-tone
//! intermodulation powers `Ω(δ, x)` follow from the same coefficients.

use crate::error::{domain, Error, Result};
use crate::specfun::bessel_j_unchecked;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub const MAX_ORDER: usize = 20;

pub const REFERENCE_ORDER: usize = 8;
pub const REFERENCE_P_MOD: f64 = 4.0;
pub const REFERENCE_SAMPLES: usize = 512;
pub const REFERENCE_SMOOTHNESS: f64 = 2.0;
pub const REFERENCE_SATURATION: f64 = 1.0;

/// Memoryless amplitude response shared by the analytic chain and the
/// simulator.
pub trait AmplifierResponse: Sync {
    /// Output amplitude for input amplitude `r >= 0`.
    fn output_amplitude(&self, r: f64) -> f64;

    /// Signed small-signal slope `g'(0)`.
    fn small_signal_gain(&self) -> f64;

    /// Cubic power coefficient (zero for a linear amplifier).
    fn cubic_coeff(&self) -> f64;

    /// Saturation output power used to define output back-off.
    fn saturation_power(&self) -> f64;

    fn linear_coeff(&self) -> f64 {
        let g = self.small_signal_gain();
        g * g
    }
}

/// Ideal linear amplifier with a nominal saturation power.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearPa {
    pub gain: f64,
    pub saturation_power: f64,
}

impl LinearPa {
    pub fn new(gain: f64, saturation_power: f64) -> Result<Self> {
        if !gain.is_finite() || gain == 0.0 {
            return domain(format!("linear amplifier needs a finite non-zero gain, got {gain}"));
        }
        if !(saturation_power > 0.0 && saturation_power.is_finite()) {
            return domain("linear amplifier needs a positive saturation power");
        }
        Ok(Self { gain, saturation_power })
    }
}

impl AmplifierResponse for LinearPa {
    fn output_amplitude(&self, r: f64) -> f64 {
        self.gain * r
    }
    fn small_signal_gain(&self) -> f64 {
        self.gain
    }
    fn cubic_coeff(&self) -> f64 {
        0.0
    }
    fn saturation_power(&self) -> f64 {
        self.saturation_power
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmAmSample {
    pub input_amplitude: f64,
    pub output_amplitude: f64,
}

impl AmAmSample {
    pub fn new(input_amplitude: f64, output_amplitude: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(input_amplitude) || !ok(output_amplitude) {
            return domain(format!(
                "AM-AM sample must be finite and non-negative, got ({input_amplitude}, {output_amplitude})"
            ));
        }
        Ok(Self { input_amplitude, output_amplitude })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BfpaModel {
    coeffs: Vec<f64>,
    p_mod: f64,
}

impl BfpaModel {
    pub fn new(coeffs: Vec<f64>, p_mod: f64) -> Result<Self> {
        if coeffs.is_empty() {
            return domain("BFPA model needs at least one coefficient");
        }
        if coeffs.len() > MAX_ORDER {
            return domain(format!("BFPA order {} exceeds {MAX_ORDER}", coeffs.len()));
        }
        if !(p_mod > 0.0 && p_mod.is_finite()) {
            return domain(format!("dynamic range must be positive and finite, got {p_mod}"));
        }
        if coeffs.iter().any(|b| !b.is_finite()) {
            return domain("BFPA coefficients must be finite");
        }
        let model = Self { coeffs, p_mod };
        if model.linear_coeff() <= 0.0 {
            return domain("BFPA model has no linear gain (a1 = 0)");
        }
        Ok(model)
    }

    /// The shipped reference amplifier: a P = 8 fit to a Rapp curve
    /// (smoothness 2, saturation 1) sampled at 512 points on [0, P_mod/2].
    pub fn reference() -> FitReport {
        let half = REFERENCE_P_MOD / 2.0;
        let samples: Vec<AmAmSample> = (0..REFERENCE_SAMPLES)
            .map(|i| {
                let r = half * i as f64 / (REFERENCE_SAMPLES - 1) as f64;
                AmAmSample {
                    input_amplitude: r,
                    output_amplitude: rapp(r, REFERENCE_SMOOTHNESS, REFERENCE_SATURATION),
                }
            })
            .collect();
        fit(&samples, REFERENCE_ORDER, REFERENCE_P_MOD).expect("reference fit is well posed")
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn p_mod(&self) -> f64 {
        self.p_mod
    }

    /// Output amplitude `g(r)`.
    pub fn am_am(&self, r: f64) -> Result<f64> {
        if !r.is_finite() || r < 0.0 {
            return domain(format!("am_am needs a finite r >= 0, got {r}"));
        }
        Ok(self.eval(r))
    }

    fn eval(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 0.0;
        }
        let k = 2.0 * PI * r / self.p_mod;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, b)| b * bessel_j_unchecked(1, k * (i + 1) as f64))
            .sum()
    }

    fn weighted_sum(&self, power: i32) -> f64 {
        self.coeffs
            .iter()
            .enumerate()
            .map(|(i, b)| b * ((i + 1) as f64 * PI / self.p_mod).powi(power))
            .sum()
    }

    /// `a₁ = |Σ b_p pπ/P_mod|²`.
    pub fn linear_coeff(&self) -> f64 {
        self.weighted_sum(1).powi(2)
    }

    /// `a₃ = |Σ b_p (pπ/P_mod)³|²`.
    pub fn cubic_coeff(&self) -> f64 {
        self.weighted_sum(3).powi(2)
    }

    /// `α = √(a₁ / (N_T N_S))`.
    pub fn linear_gain(&self, n_t: usize, n_s: usize) -> f64 {
        (self.linear_coeff() / (n_t * n_s) as f64).sqrt()
    }

    /// Power `Ω(δ, x)` of one δ-order intermodulation product at total
    /// drive power `x` spread over `N_T N_S` tones.
    ///
    /// Each tone has amplitude `√(x/(N_T N_S))`, which makes `Ω(1, x)` and
    /// `Ω(3, x)` tend to `a₁x/(N_T N_S)` and `a₃x³/(N_T N_S)³`.
    pub fn imp_power(&self, delta: usize, drive_power: f64, n_s: usize, n_t: usize) -> Result<f64> {
        self.check_imp_args(delta, drive_power, n_s)?;
        if n_t == 0 {
            return domain("imp_power needs N_T >= 1");
        }
        if drive_power == 0.0 {
            return Ok(0.0);
        }
        let amplitude = (drive_power / (n_t * n_s) as f64).sqrt();
        Ok(self.omega(delta, n_s, |p| 2.0 * p * PI * amplitude / self.p_mod))
    }

    /// `Ω(δ, x)` with the Bessel argument placed exactly as
    /// `V_p = 2pπ / (P_mod √(x/(N_T N_R)))`; kept for inspection only.
    pub fn imp_power_as_printed(
        &self,
        delta: usize,
        drive_power: f64,
        n_s: usize,
        n_t: usize,
        n_r: usize,
    ) -> Result<f64> {
        self.check_imp_args(delta, drive_power, n_s)?;
        if n_t == 0 || n_r == 0 {
            return domain("imp_power_as_printed needs N_T, N_R >= 1");
        }
        if drive_power == 0.0 {
            return Ok(0.0);
        }
        let root = (drive_power / (n_t * n_r) as f64).sqrt();
        Ok(self.omega(delta, n_s, |p| 2.0 * p * PI / (self.p_mod * root)))
    }

    fn check_imp_args(&self, delta: usize, drive_power: f64, n_s: usize) -> Result<()> {
        if delta.is_multiple_of(2) {
            return domain(format!("intermodulation order must be odd, got {delta}"));
        }
        if delta > n_s {
            return domain(format!("intermodulation order {delta} exceeds N_S = {n_s}"));
        }
        if !drive_power.is_finite() || drive_power < 0.0 {
            return domain(format!("drive power must be finite and >= 0, got {drive_power}"));
        }
        Ok(())
    }

    fn omega(&self, delta: usize, n_s: usize, arg: impl Fn(f64) -> f64) -> f64 {
        let sum: f64 = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let v = arg((i + 1) as f64);
                let j0 = bessel_j_unchecked(0, v);
                let j1 = bessel_j_unchecked(1, v);
                b * j0.powi((n_s - delta) as i32) * j1.powi(delta as i32)
            })
            .sum();
        sum * sum
    }

    /// Largest `g(r)²` over the validity range `[0, P_mod/2]`.
    pub fn saturation_power(&self) -> f64 {
        let half = self.p_mod / 2.0;
        let n = 4096;
        let step = half / n as f64;
        let (mut best_r, mut best) = (0.0, 0.0);
        for i in 0..=n {
            let r = i as f64 * step;
            let g = self.eval(r).powi(2);
            if g > best {
                best = g;
                best_r = r;
            }
        }
        // golden-section polish inside the winning cell pair
        let (mut a, mut b) = ((best_r - step).max(0.0), (best_r + step).min(half));
        let inv_phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..60 {
            let c = b - inv_phi * (b - a);
            let d = a + inv_phi * (b - a);
            if self.eval(c).powi(2) >= self.eval(d).powi(2) {
                b = d;
            } else {
                a = c;
            }
        }
        best.max(self.eval(0.5 * (a + b)).powi(2))
    }

    pub fn model_card(&self, fit_residual_rms: f64, source: impl Into<String>) -> ModelCard {
        ModelCard {
            order: self.order(),
            p_mod: self.p_mod,
            coeffs: self.coeffs.clone(),
            fit_residual_rms,
            source: source.into(),
        }
    }

    pub fn from_card(card: &ModelCard) -> Result<Self> {
        if card.order != card.coeffs.len() {
            return domain(format!(
                "model card order {} does not match {} coefficients",
                card.order,
                card.coeffs.len()
            ));
        }
        Self::new(card.coeffs.clone(), card.p_mod)
    }
}

impl AmplifierResponse for BfpaModel {
    fn output_amplitude(&self, r: f64) -> f64 {
        self.eval(r)
    }
    fn small_signal_gain(&self) -> f64 {
        self.weighted_sum(1)
    }
    fn cubic_coeff(&self) -> f64 {
        BfpaModel::cubic_coeff(self)
    }
    fn saturation_power(&self) -> f64 {
        BfpaModel::saturation_power(self)
    }
}

/// Linearly interpolated copy of a response on `[0, r_max]`; inputs beyond
/// the table fall back to the source.
pub struct Tabulated<'a, P: AmplifierResponse + ?Sized> {
    source: &'a P,
    table: Vec<f64>,
    inv_step: f64,
    r_max: f64,
    gain: f64,
    cubic: f64,
    saturation: f64,
}

impl<'a, P: AmplifierResponse + ?Sized> Tabulated<'a, P> {
    pub fn new(source: &'a P, r_max: f64, points: usize) -> Self {
        let points = points.max(2);
        let step = r_max / (points - 1) as f64;
        let table = (0..points).map(|i| source.output_amplitude(i as f64 * step)).collect();
        Self {
            source,
            table,
            inv_step: 1.0 / step,
            r_max,
            gain: source.small_signal_gain(),
            cubic: source.cubic_coeff(),
            saturation: source.saturation_power(),
        }
    }
}

impl<P: AmplifierResponse + ?Sized> AmplifierResponse for Tabulated<'_, P> {
    fn output_amplitude(&self, r: f64) -> f64 {
        if r >= self.r_max {
            return self.source.output_amplitude(r);
        }
        let x = r * self.inv_step;
        // r just below r_max can still round onto the last node
        let i = (x as usize).min(self.table.len() - 2);
        let t = x - i as f64;
        self.table[i] + t * (self.table[i + 1] - self.table[i])
    }
    fn small_signal_gain(&self) -> f64 {
        self.gain
    }
    fn cubic_coeff(&self) -> f64 {
        self.cubic
    }
    fn saturation_power(&self) -> f64 {
        self.saturation
    }
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub model: BfpaModel,
    pub residual_rms: f64,
}

/// Least-squares fit of `b_1..b_P` to AM-AM samples over the J₁ basis.
pub fn fit(samples: &[AmAmSample], order: usize, p_mod: f64) -> Result<FitReport> {
    if order == 0 || order > MAX_ORDER {
        return domain(format!("fit order must be in 1..={MAX_ORDER}, got {order}"));
    }
    if !(p_mod > 0.0 && p_mod.is_finite()) {
        return domain(format!("dynamic range must be positive and finite, got {p_mod}"));
    }
    if samples.len() < order {
        return Err(Error::Fit(format!(
            "{} samples cannot determine {order} coefficients",
            samples.len()
        )));
    }
    if let Some(s) = samples.iter().find(|s| s.input_amplitude > p_mod) {
        return domain(format!(
            "sample input {} lies outside the dynamic range [0, {p_mod}]",
            s.input_amplitude
        ));
    }
    let n = samples.len();
    let design = DMatrix::from_fn(n, order, |i, p| {
        let v = 2.0 * (p + 1) as f64 * PI * samples[i].input_amplitude / p_mod;
        bessel_j_unchecked(1, v)
    });
    let target = DVector::from_iterator(n, samples.iter().map(|s| s.output_amplitude));
    let svd = design.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    if !(s_max > 0.0) || s_min <= 1e-12 * s_max {
        return Err(Error::Fit(format!(
            "basis is rank deficient (singular values {s_min:.3e} / {s_max:.3e})"
        )));
    }
    let coeffs = svd
        .solve(&target, 0.0)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let residual = &design * &coeffs - &target;
    let residual_rms = (residual.norm_squared() / n as f64).sqrt();
    let model = BfpaModel::new(coeffs.iter().copied().collect(), p_mod)
        .map_err(|e| Error::Fit(e.to_string()))?;
    Ok(FitReport { model, residual_rms })
}

/// Rapp AM-AM curve `r / (1 + (r/sat)^{2S})^{1/(2S)}`.
pub fn rapp(r: f64, smoothness: f64, saturation: f64) -> f64 {
    let e = 2.0 * smoothness;
    r / (1.0 + (r / saturation).powf(e)).powf(1.0 / e)
}

/// Parse a two-column AM-AM text file (`#` starts a comment).
pub fn parse_am_am(text: &str) -> Result<Vec<AmAmSample>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line,
                msg: format!("expected 2 columns, found {}", fields.len()),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse { line, msg: format!("not a number: {s:?}") })
        };
        let (x, y) = (parse(fields[0])?, parse(fields[1])?);
        let sample = AmAmSample::new(x, y).map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        out.push(sample);
    }
    Ok(out)
}

/// JSON form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub order: usize,
    pub p_mod: f64,
    pub coeffs: Vec<f64>,
    pub fit_residual_rms: f64,
    pub source: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tabulated_top_edge() {
        let pa = LinearPa::new(1.0, 1.0).unwrap();
        let r_max = 0.3;
        let tab = Tabulated::new(&pa, r_max, 7);
        let below = f64::from_bits(r_max.to_bits() - 1);
        assert!((tab.output_amplitude(below) - below).abs() < 1e-15);
        assert!((tab.output_amplitude(0.123) - 0.123).abs() < 1e-15);
    }

    #[test]
    fn am_am_origin_and_domain() {
        let m = BfpaModel::new(vec![1.0, -0.2], 3.0).unwrap();
        assert_eq!(m.am_am(0.0).unwrap(), 0.0);
        assert!(m.am_am(-1.0).is_err());
        assert!(m.am_am(f64::NAN).is_err());
    }

    #[test]
    fn single_term_reduces_to_j1() {
        let m = BfpaModel::new(vec![1.0], 2.0 * PI).unwrap();
        let j1 = crate::specfun::bessel_j(1, 1.0).unwrap();
        assert_eq!(m.am_am(1.0).unwrap(), j1);
    }

    #[test]
    fn coefficient_arithmetic() {
        let m = BfpaModel::new(vec![1.0, 1.0], PI).unwrap();
        assert!((m.linear_coeff() - 9.0).abs() < 1e-12);
        assert!((m.cubic_coeff() - 81.0).abs() < 1e-10);
        let unit = BfpaModel::new(vec![4.0 / PI], 4.0).unwrap();
        assert!((unit.linear_coeff() - 1.0).abs() < 1e-14);
        let cubic = BfpaModel::new(vec![(4.0 / PI).powi(3)], 4.0).unwrap();
        assert!((cubic.cubic_coeff() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn linear_gain_cases() {
        let one = BfpaModel::new(vec![1.0 / PI], 1.0).unwrap();
        assert!((one.linear_gain(1, 1) - 1.0).abs() < 1e-14);
        let four = BfpaModel::new(vec![2.0 / PI], 1.0).unwrap();
        assert!((four.linear_gain(2, 2) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn construction_rejects_bad_models() {
        assert!(BfpaModel::new(vec![], 1.0).is_err());
        assert!(BfpaModel::new(vec![1.0], 0.0).is_err());
        assert!(BfpaModel::new(vec![f64::NAN], 1.0).is_err());
        // b = (2, -1) cancels the linear sum
        assert!(BfpaModel::new(vec![2.0, -1.0], 1.0).is_err());
    }

    #[test]
    fn imp_power_zero_drive_and_even_order() {
        let m = BfpaModel::reference().model;
        assert_eq!(m.imp_power(1, 0.0, 64, 2).unwrap(), 0.0);
        assert_eq!(m.imp_power(3, 0.0, 64, 2).unwrap(), 0.0);
        assert_eq!(m.imp_power_as_printed(3, 0.0, 64, 2, 2).unwrap(), 0.0);
        assert!(m.imp_power(2, 1.0, 64, 2).is_err());
    }

    #[test]
    fn tabulated_tracks_source() {
        let m = BfpaModel::reference().model;
        let t = Tabulated::new(&m, m.p_mod(), 1 << 14);
        for i in 0..100 {
            let r = 0.043 * i as f64;
            assert!((t.output_amplitude(r) - m.output_amplitude(r)).abs() < 1e-6);
        }
    }

    #[test]
    fn parse_reports_line() {
        let text = "# header\n0.0 0.0\n0.5 0.49 # trailing\n\n1.0 oops\n";
        match parse_am_am(text) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("unexpected {other:?}"),
        }
        let ok = parse_am_am("0 0\n1 0.9\n").unwrap();
        assert_eq!(ok.len(), 2);
    }

    #[test]
    fn fit_underdetermined_and_degenerate() {
        let one = [AmAmSample::new(0.5, 0.4).unwrap()];
        assert!(matches!(fit(&one, 2, 4.0), Err(Error::Fit(_))));
        let same = vec![AmAmSample::new(0.5, 0.4).unwrap(); 10];
        assert!(matches!(fit(&same, 3, 4.0), Err(Error::Fit(_))));
        let outside = [AmAmSample::new(5.0, 0.4).unwrap(), AmAmSample::new(1.0, 0.4).unwrap()];
        assert!(matches!(fit(&outside, 1, 4.0), Err(Error::Domain(_))));
    }
}
