use crate::config::{to_db, Amplifier, ConfigError, RunConfig};
use crate::output::{Cell, Document, Table};
use clipped_ofdm::bfpa;
use clipped_ofdm::imp_count::{cached_third_order, count_third_order};
use clipped_ofdm::link_analysis::{analytic_point, ChannelStat, SystemConfig};
use clipped_ofdm::optimize::{
    eta_closed_forms, eu_closed_forms, joint_closed_forms, joint_optimum, optimal_eta_closed, optimal_eu_closed,
};
use clipped_ofdm::simulator::{papr_ccdf, run_ser, td_vs_obo, truncation_obo, SimConfig};
use clipped_ofdm::Error;
use serde_json::json;
use std::path::Path;

pub const SWEEP_COLUMNS: &[&str] = &["x", "ser_sim", "ser_ci95", "ser_ana", "gamma_ana"];
pub const CCDF_COLUMNS: &[&str] = &["threshold_db", "ccdf", "ci95"];
pub const TD_COLUMNS: &[&str] = &["obo_db", "td_db", "e_u", "required_snr_db"];
pub const PROFILE_COLUMNS: &[&str] = &["s", "phi3"];

#[derive(Debug)]
pub enum RunError {
    /// Bad input; exit code 1.
    Config(String),
    /// Failure while computing; exit code 2.
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 1,
            RunError::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) | RunError::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e.to_string())
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::Parse { .. } => RunError::Config(e.to_string()),
            _ => RunError::Runtime(e.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    /// Operating point E_U in dB.
    #[value(name = "e_u_db")]
    EUDb,
    /// Clipping ratio η.
    Eta,
    /// Channel noise power σ² in dB.
    #[value(name = "sigma_ch_db")]
    SigmaChDb,
    /// N_T = N_R = x.
    #[value(name = "n_antennas")]
    NAntennas,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OptimizeMode {
    OperatingPoint,
    ClippingLevel,
    Joint,
}

fn sim_config(cfg: &RunConfig, system: SystemConfig) -> SimConfig {
    SimConfig { parallel_streams: cfg.parallel_streams, ..SimConfig::new(system, cfg.trials, cfg.seed) }
}

pub fn analyze(cfg: &RunConfig, pa: &Amplifier) -> Result<Document, RunError> {
    let profile = cached_third_order(cfg.system.n_s)?;
    let (breakdown, ser) = analytic_point(&cfg.system, pa.response.as_ref(), &profile)?;
    Ok(Document::Json(json!({
        "system": cfg.system,
        "h_frob_sq": ChannelStat::expected(&cfg.system).h_frob_sq,
        "phi": profile.phi,
        "a1": pa.response.linear_coeff(),
        "a3": pa.response.cubic_coeff(),
        "breakdown": breakdown,
        "ser": ser,
    })))
}

pub fn simulate(cfg: &RunConfig, pa: &Amplifier) -> Result<Document, RunError> {
    let result = run_ser(&sim_config(cfg, cfg.system.clone()), pa.response.as_ref())?;
    Ok(Document::Json(serde_json::to_value(result).expect("SimResult serializes")))
}

pub fn optimize(cfg: &RunConfig, pa: &Amplifier, mode: OptimizeMode) -> Result<Document, RunError> {
    let profile = cached_third_order(cfg.system.n_s)?;
    let response = pa.response.as_ref();
    let doc = match mode {
        OptimizeMode::OperatingPoint => json!({
            "closed_form": optimal_eu_closed(&cfg.system, response, &profile)?,
            "printed": eu_closed_forms(&cfg.system, response, &profile)?,
        }),
        OptimizeMode::ClippingLevel => json!({
            "closed_form": optimal_eta_closed(&cfg.system, response, &profile)?,
            "printed": eta_closed_forms(&cfg.system, response, &profile)?,
        }),
        OptimizeMode::Joint => {
            let printed = match &pa.bfpa {
                Some(model) => Some(joint_closed_forms(&cfg.system, model, &profile)?),
                None => None,
            };
            json!({
                "numerical": joint_optimum(&cfg.system, response, &profile)?,
                "closed_form": printed,
            })
        }
    };
    Ok(Document::Json(doc))
}

pub fn grid(from: f64, to: f64, points: usize) -> Result<Vec<f64>, RunError> {
    if points == 0 || !from.is_finite() || !to.is_finite() {
        return Err(RunError::Config("grid needs finite bounds and at least one point".into()));
    }
    if points == 1 {
        return Ok(vec![from]);
    }
    let step = (to - from) / (points - 1) as f64;
    Ok((0..points).map(|i| if i + 1 == points { to } else { from + step * i as f64 }).collect())
}

fn at_axis(base: &SystemConfig, axis: Axis, x: f64) -> Result<SystemConfig, RunError> {
    let mut s = base.clone();
    match axis {
        Axis::EUDb => s.e_u = crate::config::from_db(x),
        Axis::Eta => s.eta = x,
        Axis::SigmaChDb => s.sigma_ch_sq = crate::config::from_db(x),
        Axis::NAntennas => {
            if x.fract() != 0.0 || x < 1.0 {
                return Err(RunError::Config(format!("antenna count must be a positive integer, got {x}")));
            }
            s.n_t = x as usize;
            s.n_r = x as usize;
        }
    }
    s.validate()?;
    Ok(s)
}

pub fn sweep(
    cfg: &RunConfig,
    pa: &Amplifier,
    axis: Axis,
    xs: &[f64],
    simulate: bool,
) -> Result<Document, RunError> {
    let profile = cached_third_order(cfg.system.n_s)?;
    let response = pa.response.as_ref();
    let mut table = Table::new(SWEEP_COLUMNS);
    for &x in xs {
        let system = at_axis(&cfg.system, axis, x)?;
        let (breakdown, ser_ana) = analytic_point(&system, response, &profile)?;
        let (ser_sim, ci) = if simulate {
            let r = run_ser(&sim_config(cfg, system), response)?;
            (Cell::Real(r.ser_estimate), Cell::Real(r.ser_ci95))
        } else {
            (Cell::Empty, Cell::Empty)
        };
        table.push(vec![x.into(), ser_sim, ci, ser_ana.into(), breakdown.gamma.into()]);
    }
    Ok(Document::Table(table))
}

pub fn ccdf(cfg: &RunConfig, thresholds_db: &[f64]) -> Result<Document, RunError> {
    let points = papr_ccdf(&sim_config(cfg, cfg.system.clone()), thresholds_db)?;
    let mut table = Table::new(CCDF_COLUMNS);
    for p in points {
        table.push(vec![p.threshold_db.into(), p.ccdf.into(), p.ci95.into()]);
    }
    Ok(Document::Table(table))
}

/// Total-degradation table and the truncation OBO, if any.
pub fn td(cfg: &RunConfig, pa: &Amplifier, target_ser: f64, obo_db: &[f64]) -> Result<(Document, Option<f64>), RunError> {
    let points = td_vs_obo(&sim_config(cfg, cfg.system.clone()), pa.response.as_ref(), target_ser, obo_db)?;
    let mut table = Table::new(TD_COLUMNS);
    for p in &points {
        table.push(vec![p.obo_db.into(), p.td_db.into(), p.e_u.map(to_db).into(), p.required_snr_db.into()]);
    }
    Ok((Document::Table(table), truncation_obo(&points)))
}

pub fn fit_pa(input: &Path, order: usize, p_mod: f64) -> Result<Document, RunError> {
    let text = std::fs::read_to_string(input)
        .map_err(|e| RunError::Config(format!("cannot read {}: {e}", input.display())))?;
    let samples = bfpa::parse_am_am(&text)?;
    let report = bfpa::fit(&samples, order, p_mod)?;
    let source = input.file_name().map_or_else(|| input.display().to_string(), |n| n.to_string_lossy().into_owned());
    let card = report.model.model_card(report.residual_rms, source);
    Ok(Document::Json(serde_json::to_value(card).expect("model cards serialize")))
}

pub fn imp_profile(n_s: usize) -> Result<Document, RunError> {
    let profile = count_third_order(n_s)?;
    let mut table = Table::new(PROFILE_COLUMNS);
    for (i, &phi3) in profile.phi3.iter().enumerate() {
        table.push(vec![Cell::Int(i as u64 + 1), Cell::Int(phi3)]);
    }
    Ok(Document::Table(table))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn grid_hits_both_ends() {
        let g = grid(-10.0, 10.0, 41).unwrap();
        assert_eq!(g.len(), 41);
        assert_eq!((g[0], g[20], g[40]), (-10.0, 0.0, 10.0));
        assert_eq!(grid(3.0, 9.0, 1).unwrap(), vec![3.0]);
        assert!(grid(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn antenna_axis_needs_integers() {
        let base = SystemConfig::default();
        assert_eq!(at_axis(&base, Axis::NAntennas, 3.0).unwrap().n_r, 3);
        assert!(at_axis(&base, Axis::NAntennas, 1.5).is_err());
        assert!(matches!(at_axis(&base, Axis::Eta, -1.0), Err(RunError::Config(_))));
    }

    #[test]
    fn analytic_sweep_is_u_shaped() {
        let cfg = parse_config(None, &[]).unwrap();
        let pa = cfg.pa.load().unwrap();
        let xs = grid(-10.0, 10.0, 41).unwrap();
        let Document::Table(t) = sweep(&cfg, &pa, Axis::EUDb, &xs, false).unwrap() else { panic!() };
        let ser: Vec<f64> = t.rows.iter().map(|r| match r[3] { Cell::Real(v) => v, _ => panic!() }).collect();
        let k = ser.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert!(k > 0 && k < 40);
        assert!(ser[..=k].windows(2).all(|w| w[1] <= w[0]));
        assert!(ser[k..].windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn profile_rows() {
        let Document::Table(t) = imp_profile(4).unwrap() else { panic!() };
        assert_eq!(t.rows.len(), 4);
        assert_eq!(t.rows[0][0], Cell::Int(1));
    }
}
