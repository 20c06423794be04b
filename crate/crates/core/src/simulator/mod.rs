//! Monte Carlo baseband chain: QAM → oversampled IFFT → clipper → PA →
//! Rayleigh MIMO branches with AWGN → FFT → MRC → minimum-distance decision.
//!
//! Every trial is one OFDM symbol. Trials are split statically over
//! `parallel_streams` ChaCha8 streams keyed by `(seed, stream)`, so results
//! do not depend on how many worker threads run them.

pub mod ofdm;

use crate::bfpa::{AmplifierResponse, LinearPa, Tabulated};
use crate::clipping::{beta_of_eta, clip_sample};
use crate::error::{domain, Result};
use crate::link_analysis::{adaptive_simpson, SnrBreakdown, SystemConfig};
use nalgebra::DMatrix;
use num_complex::Complex64;
use ofdm::{OfdmModem, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

pub const DEFAULT_STREAMS: usize = 16;
pub const TABLE_POINTS: usize = 1 << 16;
const WILSON_Z: f64 = 1.96;
// Rayleigh envelopes above this many RMS values have probability e^-42
const ENVELOPE_SPAN: f64 = 6.5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimConfig {
    pub system: SystemConfig,
    pub trials: usize,
    pub seed: u64,
    pub parallel_streams: usize,
}

impl SimConfig {
    pub fn new(system: SystemConfig, trials: usize, seed: u64) -> Self {
        Self { system, trials, seed, parallel_streams: DEFAULT_STREAMS }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.trials == 0 {
            return domain("trials must be >= 1");
        }
        if self.parallel_streams == 0 {
            return domain("parallel_streams must be >= 1");
        }
        Ok(())
    }

    /// Whether `trials·N_S ≥ 10 / target_ser`.
    pub fn adequate_for(&self, target_ser: f64) -> bool {
        (self.trials * self.system.n_s) as f64 >= 10.0 / target_ser
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimResult {
    pub ser_estimate: f64,
    /// Half-width of the 95% Wilson interval.
    pub ser_ci95: f64,
    pub symbols: u64,
    pub errors: u64,
    pub papr_samples: Option<Vec<f64>>,
    pub empirical_gamma: f64,
    pub breakdown: Option<SnrBreakdown>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    /// N_R × N_T i.i.d. CN(0, 1).
    pub entries: DMatrix<Complex64>,
    pub frobenius_sq: f64,
}

impl ChannelRealization {
    pub fn draw<R: Rng + ?Sized>(n_r: usize, n_t: usize, rng: &mut R) -> Self {
        let entries = DMatrix::from_fn(n_r, n_t, |_, _| complex_normal(rng));
        let frobenius_sq = entries.iter().map(|h| h.norm_sqr()).sum();
        Self { entries, frobenius_sq }
    }
}

/// CN(0, 1) sample.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Static partition of `trials` over `streams`; the first `trials % streams`
/// streams take one extra trial.
pub fn split_trials(trials: usize, streams: usize) -> Vec<usize> {
    let streams = streams.max(1);
    let base = trials / streams;
    let extra = trials % streams;
    (0..streams).map(|i| base + usize::from(i < extra)).collect()
}

/// Generator for one stream: ChaCha8 keyed by the seed, on its own stream id.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// 95% Wilson score interval `(lower, upper)` for `errors` out of `n`.
pub fn wilson_interval(errors: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = errors as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn wilson_half_width(errors: u64, n: u64) -> f64 {
    let (lo, hi) = wilson_interval(errors, n);
    0.5 * (hi - lo)
}

/// One configured transmit chain, shared read-only by all streams.
struct Chain<'a, P: AmplifierResponse + ?Sized> {
    modem: OfdmModem,
    pa: Tabulated<'a, P>,
    threshold: f64,
    e_u: f64,
    /// Composite gain the equalizer divides out: g'(0)·β·√E_U.
    gain: f64,
    sigma: f64,
    n_t: usize,
    n_r: usize,
}

impl<'a, P: AmplifierResponse + ?Sized> Chain<'a, P> {
    fn new(system: &SystemConfig, pa: &'a P) -> Result<Self> {
        system.validate()?;
        let modem = OfdmModem::new(system.n_s, system.j, system.m)?;
        let rms = system.e_u.sqrt();
        let threshold = system.eta * rms;
        let span = system.eta.min(ENVELOPE_SPAN) * rms;
        let beta = beta_of_eta(system.eta)?;
        Ok(Self {
            modem,
            pa: Tabulated::new(pa, span, TABLE_POINTS),
            threshold,
            e_u: system.e_u,
            gain: pa.small_signal_gain() * beta * rms,
            sigma: system.sigma_ch_sq.sqrt(),
            n_t: system.n_t,
            n_r: system.n_r,
        })
    }

    /// Fills `work.received` with the noiseless subcarrier outputs.
    fn transmit<R: Rng + ?Sized>(&self, rng: &mut R, work: &mut Workspace, clip: bool) {
        self.modem.random_symbols(rng, work);
        self.modem.modulate(work, self.e_u);
        for x in work.time.iter_mut() {
            if clip {
                *x = clip_sample(*x, self.threshold);
            }
            let r = x.norm();
            if r > 0.0 {
                *x *= self.pa.output_amplitude(r) / r;
            }
        }
        self.modem.demodulate(work);
    }
}

#[derive(Default)]
struct Tally {
    errors: u64,
    symbols: u64,
    distortion: f64,
}

/// Empirical SER of the full chain for any amplifier response.
pub fn run_ser_with<P: AmplifierResponse + ?Sized>(sim: &SimConfig, pa: &P) -> Result<SimResult> {
    sim.validate()?;
    let chain = Chain::new(&sim.system, pa)?;
    let lambda = (chain.n_t * chain.n_r) as f64;
    let tallies: Vec<Tally> = split_trials(sim.trials, sim.parallel_streams)
        .par_iter()
        .enumerate()
        .map(|(stream, &count)| {
            let mut rng = stream_rng(sim.seed, stream as u64);
            let mut work = chain.modem.workspace();
            let mut branch_noise = vec![Complex64::new(0.0, 0.0); chain.n_t * chain.n_r];
            let mut tally = Tally::default();
            for _ in 0..count {
                chain.transmit(&mut rng, &mut work, true);
                let h = ChannelRealization::draw(chain.n_r, chain.n_t, &mut rng);
                let norm = 1.0 / (h.frobenius_sq * chain.gain);
                for s in 0..work.received.len() {
                    let y = work.received[s];
                    let x = work.symbols[s];
                    tally.distortion += (y - x * chain.gain).norm_sqr();
                    for n in branch_noise.iter_mut() {
                        *n = complex_normal(&mut rng) * chain.sigma;
                    }
                    let combined: Complex64 = h
                        .entries
                        .iter()
                        .zip(branch_noise.iter())
                        .map(|(hb, nb)| hb.conj() * (hb * y + nb))
                        .sum();
                    if chain.modem.decide(combined * norm) != work.labels[s] {
                        tally.errors += 1;
                    }
                }
                tally.symbols += work.received.len() as u64;
            }
            tally
        })
        .collect();
    let errors: u64 = tallies.iter().map(|t| t.errors).sum();
    let symbols: u64 = tallies.iter().map(|t| t.symbols).sum();
    let distortion = tallies.iter().map(|t| t.distortion).sum::<f64>() / symbols as f64;
    let noise = sim.system.sigma_ch_sq;
    Ok(SimResult {
        ser_estimate: errors as f64 / symbols as f64,
        ser_ci95: wilson_half_width(errors, symbols),
        symbols,
        errors,
        papr_samples: None,
        empirical_gamma: lambda * chain.gain * chain.gain / (lambda * distortion + noise),
        breakdown: None,
    })
}

/// Empirical SER of the full chain with a BFPA (or any) amplifier.
pub fn run_ser<P: AmplifierResponse + ?Sized>(sim: &SimConfig, model: &P) -> Result<SimResult> {
    run_ser_with(sim, model)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CcdfPoint {
    pub threshold_db: f64,
    pub ccdf: f64,
    pub ci95: f64,
}

/// Per-symbol PAPR samples (dB) of the unclipped Nyquist-rate signal.
pub fn papr_samples(sim: &SimConfig) -> Result<Vec<f64>> {
    sim.validate()?;
    let modem = OfdmModem::new(sim.system.n_s, 1, sim.system.m)?;
    let parts: Vec<Vec<f64>> = split_trials(sim.trials, sim.parallel_streams)
        .par_iter()
        .enumerate()
        .map(|(stream, &count)| {
            let mut rng = stream_rng(sim.seed, stream as u64);
            let mut work = modem.workspace();
            (0..count)
                .map(|_| {
                    modem.random_symbols(&mut rng, &mut work);
                    modem.modulate(&mut work, 1.0);
                    10.0 * ofdm::papr(&work.time).log10()
                })
                .collect()
        })
        .collect();
    Ok(parts.concat())
}

/// Empirical CCDF of the per-symbol PAPR at each threshold (dB, ascending).
pub fn papr_ccdf(sim: &SimConfig, thresholds_db: &[f64]) -> Result<Vec<CcdfPoint>> {
    if thresholds_db.windows(2).any(|w| !(w[0] <= w[1])) {
        return domain("PAPR thresholds must be ascending");
    }
    let samples = papr_samples(sim)?;
    let n = samples.len() as u64;
    Ok(thresholds_db
        .iter()
        .map(|&t| {
            let above = samples.iter().filter(|&&p| p > t).count() as u64;
            CcdfPoint { threshold_db: t, ccdf: above as f64 / n as f64, ci95: wilson_half_width(above, n) }
        })
        .collect())
}

/// Coherent gain Ĝ = E[Y X*]/E|X|² and residual power E|Y − ĜX|² per
/// subcarrier, before the channel.
fn measure_distortion<P: AmplifierResponse + ?Sized>(
    sim: &SimConfig,
    system: &SystemConfig,
    pa: &P,
    clip: bool,
) -> Result<(Complex64, f64)> {
    let chain = Chain::new(system, pa)?;
    let parts: Vec<(Complex64, f64, f64, u64)> = split_trials(sim.trials, sim.parallel_streams)
        .par_iter()
        .enumerate()
        .map(|(stream, &count)| {
            let mut rng = stream_rng(sim.seed, stream as u64);
            let mut work = chain.modem.workspace();
            let (mut cross, mut y2, mut x2, mut n) = (Complex64::new(0.0, 0.0), 0.0, 0.0, 0u64);
            for _ in 0..count {
                chain.transmit(&mut rng, &mut work, clip);
                for (y, x) in work.received.iter().zip(work.symbols.iter()) {
                    cross += y * x.conj();
                    y2 += y.norm_sqr();
                    x2 += x.norm_sqr();
                }
                n += work.received.len() as u64;
            }
            (cross, y2, x2, n)
        })
        .collect();
    let cross: Complex64 = parts.iter().map(|p| p.0).sum();
    let y2: f64 = parts.iter().map(|p| p.1).sum();
    let x2: f64 = parts.iter().map(|p| p.2).sum();
    let n: u64 = parts.iter().map(|p| p.3).sum();
    let gain = cross / x2;
    let residual = ((y2 - cross.norm_sqr() / x2) / n as f64).max(0.0);
    Ok((gain, residual))
}

/// Impairment powers isolated by ablation, referred to the combiner output
/// at ‖H‖²_F = λ.
///
/// `clipping_noise` comes from the clipper followed by a linear amplifier
/// with the PA's small-signal gain, `nonlinear_noise` from the PA driven
/// unclipped, and `channel_noise` from the generated AWGN. Transmitter
/// distortion fades together with the signal, so after MRC each distortion
/// power is weighted by ‖H‖²_F = λ like the signal.
pub fn empirical_snr<P: AmplifierResponse + ?Sized>(sim: &SimConfig, pa: &P) -> Result<SnrBreakdown> {
    sim.validate()?;
    let system = &sim.system;
    let lambda = system.lambda() as f64;
    let (gain, _) = measure_distortion(sim, system, pa, true)?;
    let linear = LinearPa::new(pa.small_signal_gain(), pa.saturation_power())?;
    let (_, clip_residual) = measure_distortion(sim, system, &linear, true)?;
    let (_, pa_residual) = measure_distortion(sim, system, pa, false)?;

    let sigma = system.sigma_ch_sq.sqrt();
    let draws = (sim.trials * system.n_s).min(1 << 20);
    let mut rng = stream_rng(sim.seed, u64::MAX);
    let channel_noise = (0..draws).map(|_| (complex_normal(&mut rng) * sigma).norm_sqr()).sum::<f64>() / draws as f64;

    let signal_power = lambda * gain.norm_sqr();
    let clipping_noise = lambda * clip_residual;
    let nonlinear_noise = lambda * pa_residual;
    Ok(SnrBreakdown {
        signal_power,
        channel_noise,
        clipping_noise,
        nonlinear_noise,
        gamma: signal_power / (channel_noise + clipping_noise + nonlinear_noise),
    })
}

/// Mean PA output power E[g(min(r, η√E_U))²] for Rayleigh r with E[r²] = E_U.
pub fn mean_output_power<P: AmplifierResponse + ?Sized>(pa: &P, eta: f64, e_u: f64) -> f64 {
    let cap = eta * eta;
    let upper = cap.min(60.0);
    let integrand = |t: f64| pa.output_amplitude((e_u * t).sqrt()).powi(2) * (-t).exp();
    let scale = pa.linear_coeff() * e_u;
    let mut total = adaptive_simpson(&integrand, 0.0, upper, 1e-13 * scale.max(1e-300));
    if cap < 60.0 {
        total += pa.output_amplitude(eta * e_u.sqrt()).powi(2) * (-cap).exp();
    }
    total
}

/// Smallest E_U whose mean output power reaches `target`; None if the
/// amplifier never gets there.
pub fn drive_for_output<P: AmplifierResponse + ?Sized>(pa: &P, eta: f64, target: f64) -> Option<f64> {
    let grid: Vec<f64> = (0..=240).map(|i| 10f64.powf(-8.0 + i as f64 * 0.05)).collect();
    let mut prev: f64 = 0.0;
    for &e in &grid {
        if mean_output_power(pa, eta, e) >= target {
            let (mut lo, mut hi) = (prev.max(1e-300).ln(), e.ln());
            if prev == 0.0 {
                lo = hi - 0.05 * std::f64::consts::LN_10;
            }
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if mean_output_power(pa, eta, mid.exp()) >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Some(hi.exp());
        }
        prev = e;
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TdPoint {
    pub obo_db: f64,
    /// None marks a truncated point (target SER unreachable).
    pub td_db: Option<f64>,
    pub e_u: Option<f64>,
    pub required_snr_db: Option<f64>,
}

const SNR_FLOOR_DB: f64 = 120.0;
const SNR_SEARCH_LO_DB: f64 = -10.0;
const SNR_SEARCH_STEPS: usize = 16;

fn ser_at_snr<P: AmplifierResponse + ?Sized>(
    sim: &SimConfig,
    pa: &P,
    e_u: f64,
    output_power: f64,
    snr_db: f64,
) -> Result<f64> {
    let sigma_ch_sq = output_power / 10f64.powf(snr_db / 10.0);
    let system = SystemConfig { e_u, sigma_ch_sq, ..sim.system.clone() };
    Ok(run_ser_with(&SimConfig { system, ..sim.clone() }, pa)?.ser_estimate)
}

/// SNR (P_out/σ², dB) at which the chain first reaches `target`, or None if
/// its noiseless floor is above the target.
fn required_snr<P: AmplifierResponse + ?Sized>(
    sim: &SimConfig,
    pa: &P,
    e_u: f64,
    output_power: f64,
    target: f64,
) -> Result<Option<f64>> {
    if ser_at_snr(sim, pa, e_u, output_power, SNR_FLOOR_DB)? > target {
        return Ok(None);
    }
    let (mut lo, mut hi) = (SNR_SEARCH_LO_DB, SNR_FLOOR_DB);
    for _ in 0..SNR_SEARCH_STEPS + 4 {
        let mid = 0.5 * (lo + hi);
        if ser_at_snr(sim, pa, e_u, output_power, mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(hi))
}

/// Total degradation against an unclipped ideal linear amplifier, with the
/// same random numbers in both chains.
pub fn td_vs_obo<P: AmplifierResponse + ?Sized>(
    sim: &SimConfig,
    pa: &P,
    target_ser: f64,
    obo_grid_db: &[f64],
) -> Result<Vec<TdPoint>> {
    sim.validate()?;
    if !(target_ser > 1e-6 && target_ser < 0.3) {
        return domain(format!("target SER must lie in (1e-6, 0.3), got {target_ser}"));
    }
    let ideal = LinearPa::new(1.0, 1.0)?;
    let ideal_sim = SimConfig { system: SystemConfig { eta: f64::INFINITY, ..sim.system.clone() }, ..sim.clone() };
    let reference = required_snr(&ideal_sim, &ideal, 1.0, 1.0, target_ser)?
        .ok_or_else(|| crate::Error::Convergence("ideal linear chain cannot reach the target SER".into()))?;
    let p_sat = pa.saturation_power();
    obo_grid_db
        .iter()
        .map(|&obo_db| {
            let output_power = p_sat / 10f64.powf(obo_db / 10.0);
            let truncated = TdPoint { obo_db, td_db: None, e_u: None, required_snr_db: None };
            let Some(e_u) = drive_for_output(pa, sim.system.eta, output_power) else {
                return Ok(truncated);
            };
            Ok(match required_snr(sim, pa, e_u, output_power, target_ser)? {
                Some(snr) => TdPoint {
                    obo_db,
                    td_db: Some(snr - reference + obo_db),
                    e_u: Some(e_u),
                    required_snr_db: Some(snr),
                },
                None => TdPoint { e_u: Some(e_u), ..truncated },
            })
        })
        .collect()
}

/// Lowest OBO on the grid that still reaches the target, if any point
/// above it is truncated.
pub fn truncation_obo(points: &[TdPoint]) -> Option<f64> {
    let mut sorted: Vec<&TdPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.obo_db.total_cmp(&b.obo_db));
    let first_ok = sorted.iter().position(|p| p.td_db.is_some())?;
    if first_ok == 0 {
        return None;
    }
    Some(sorted[first_ok].obo_db)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_exact_and_static() {
        assert_eq!(split_trials(10, 4), vec![3, 3, 2, 2]);
        assert_eq!(split_trials(3, 5), vec![1, 1, 1, 0, 0]);
        assert_eq!(split_trials(0, 2), vec![0, 0]);
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(7, 0).random();
        let b: u64 = stream_rng(7, 1).random();
        let c: u64 = stream_rng(7, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn wilson_bounds() {
        let (lo, hi) = wilson_interval(0, 100);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.05);
        let (lo, hi) = wilson_interval(50, 100);
        assert!(lo < 0.5 && hi > 0.5);
    }

    #[test]
    fn truncation_edge() {
        let p = |obo_db, ok: bool| TdPoint { obo_db, td_db: ok.then_some(obo_db), e_u: None, required_snr_db: None };
        assert_eq!(truncation_obo(&[p(0.0, false), p(1.0, false), p(2.0, true), p(3.0, true)]), Some(2.0));
        assert_eq!(truncation_obo(&[p(0.0, true), p(1.0, true)]), None);
        assert_eq!(truncation_obo(&[p(0.0, false)]), None);
    }

    #[test]
    fn linear_output_power() {
        let pa = LinearPa::new(2.0, 1.0).unwrap();
        let p = mean_output_power(&pa, f64::INFINITY, 0.5);
        assert!((p - 2.0).abs() < 1e-9);
        let e = drive_for_output(&pa, f64::INFINITY, 0.4).unwrap();
        assert!((e - 0.1).abs() < 1e-9);
    }
}
