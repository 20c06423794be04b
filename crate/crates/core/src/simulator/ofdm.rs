//! Square Gray-coded M-QAM and the J-times oversampled OFDM modem.
//!
//! Both transforms are unitary per subcarrier: a unit-energy symbol at
//! operating point E_U gives mean time-domain sample power E_U, and the
//! receiver returns `√E_U · X_s` for an undistorted signal.

use crate::error::{domain, Result};
use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub struct OfdmModem {
    n_s: usize,
    j: usize,
    m: usize,
    side: usize,
    spacing: f64,
    bins: Vec<usize>,
    points: Vec<Complex64>,
    inverse: Arc<dyn Fft<f64>>,
    forward: Arc<dyn Fft<f64>>,
}

/// Per-thread buffers.
pub struct Workspace {
    pub labels: Vec<usize>,
    pub symbols: Vec<Complex64>,
    pub time: Vec<Complex64>,
    pub received: Vec<Complex64>,
    pub scratch: Vec<Complex64>,
}

fn gray(i: usize) -> usize {
    i ^ (i >> 1)
}

impl OfdmModem {
    pub fn new(n_s: usize, j: usize, m: usize) -> Result<Self> {
        if n_s == 0 || j == 0 {
            return domain(format!("OFDM needs N_S >= 1 and J >= 1, got {n_s} and {j}"));
        }
        let side = (m as f64).sqrt().round() as usize;
        if side < 2 || side * side != m || !side.is_power_of_two() {
            return domain(format!("M must be a square power of two >= 4, got {m}"));
        }
        let len = n_s * j;
        // subcarrier s sits at frequency s − N_S/2, wrapped onto the JN-point grid
        let bins = (0..n_s)
            .map(|s| (s as i64 - (n_s / 2) as i64).rem_euclid(len as i64) as usize)
            .collect();
        let spacing = (3.0 / (2.0 * (m as f64 - 1.0))).sqrt();
        let mut points = vec![ZERO; m];
        for i in 0..side {
            for q in 0..side {
                points[gray(i) * side + gray(q)] = Complex64::new(level(i, side, spacing), level(q, side, spacing));
            }
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            n_s,
            j,
            m,
            side,
            spacing,
            bins,
            points,
            inverse: planner.plan_fft_inverse(len),
            forward: planner.plan_fft_forward(len),
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn oversampled_len(&self) -> usize {
        self.n_s * self.j
    }

    /// Constellation indexed by Gray label; unit average energy.
    pub fn constellation(&self) -> &[Complex64] {
        &self.points
    }

    pub fn workspace(&self) -> Workspace {
        let scratch_len = self
            .inverse
            .get_inplace_scratch_len()
            .max(self.forward.get_inplace_scratch_len());
        Workspace {
            labels: vec![0; self.n_s],
            symbols: vec![ZERO; self.n_s],
            time: vec![ZERO; self.oversampled_len()],
            received: vec![ZERO; self.n_s],
            scratch: vec![ZERO; scratch_len],
        }
    }

    pub fn random_symbols<R: Rng + ?Sized>(&self, rng: &mut R, work: &mut Workspace) {
        for (label, sym) in work.labels.iter_mut().zip(work.symbols.iter_mut()) {
            *label = rng.random_range(0..self.m);
            *sym = self.points[*label];
        }
    }

    /// Zero-padded IFFT of `work.symbols` scaled to operating point `e_u`,
    /// written to `work.time`.
    pub fn modulate(&self, work: &mut Workspace, e_u: f64) {
        work.time.fill(ZERO);
        let scale = (e_u / self.n_s as f64).sqrt();
        for (&k, &x) in self.bins.iter().zip(work.symbols.iter()) {
            work.time[k] = x * scale;
        }
        self.inverse.process_with_scratch(&mut work.time, &mut work.scratch);
    }

    /// FFT of `work.time` (destroyed) and extraction of the N_S in-band
    /// bins into `work.received`.
    pub fn demodulate(&self, work: &mut Workspace) {
        self.forward.process_with_scratch(&mut work.time, &mut work.scratch);
        let scale = 1.0 / (self.j as f64 * (self.n_s as f64).sqrt());
        for (y, &k) in work.received.iter_mut().zip(self.bins.iter()) {
            *y = work.time[k] * scale;
        }
    }

    /// Mean per-subcarrier power of `buf` over the in-band bins, on the
    /// receiver's scale. `buf` is overwritten by its spectrum.
    pub fn in_band_power(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) -> f64 {
        self.forward.process_with_scratch(buf, scratch);
        let scale = 1.0 / (self.j as f64 * self.j as f64 * self.n_s as f64);
        self.bins.iter().map(|&k| buf[k].norm_sqr()).sum::<f64>() * scale / self.n_s as f64
    }

    /// Gray label of the nearest constellation point.
    pub fn decide(&self, y: Complex64) -> usize {
        gray(self.slice(y.re)) * self.side + gray(self.slice(y.im))
    }

    fn slice(&self, v: f64) -> usize {
        let idx = (v / (2.0 * self.spacing) + (self.side as f64 - 1.0) / 2.0).round();
        idx.clamp(0.0, (self.side - 1) as f64) as usize
    }
}

fn level(i: usize, side: usize, spacing: f64) -> f64 {
    (2.0 * i as f64 - (side as f64 - 1.0)) * spacing
}

/// Peak-to-average power ratio of one block, against its own mean power.
pub fn papr(samples: &[Complex64]) -> f64 {
    let mut peak = 0.0f64;
    let mut total = 0.0;
    for s in samples {
        let p = s.norm_sqr();
        peak = peak.max(p);
        total += p;
    }
    if total == 0.0 {
        return 0.0;
    }
    peak * samples.len() as f64 / total
}
