//! Run-configuration schema, parsing, and validation.
//!
//! Configurations are TOML. Validation collects every violation before
//! reporting, so a broken file surfaces all its problems at once.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use dbe_core::model::TriangleModel;

#[derive(Debug)]
pub enum ConfigError {
    Io(String),
    Parse(String),
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Report {
    Dbe,
    Rates,
    Evolve,
    Thermo,
    Check,
}

impl Report {
    fn parse(name: &str) -> Option<Self> {
        match name {
            "dbe" => Some(Self::Dbe),
            "rates" => Some(Self::Rates),
            "evolve" => Some(Self::Evolve),
            "thermo" => Some(Self::Thermo),
            "check" => Some(Self::Check),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Dbe => "dbe",
            Self::Rates => "rates",
            Self::Evolve => "evolve",
            Self::Thermo => "thermo",
            Self::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutFormat {
    Csv,
    Json,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    model: RawModel,
    bath: Option<RawBath>,
    quadrature: Option<RawQuadrature>,
    reports: Option<Vec<String>>,
    evolve: Option<RawEvolve>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    energies: Option<Vec<f64>>,
    tau: Option<f64>,
    phi: Option<f64>,
    site_strengths: Option<Vec<f64>>,
    mass: Option<f64>,
    hbar: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBath {
    nu: Option<f64>,
    rate_prefactor: Option<f64>,
    beta: Option<Vec<f64>>,
    delta_e: Option<f64>,
    sweep: Option<RawSweep>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    min: f64,
    max: f64,
    points: usize,
    spacing: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    rel_tol: Option<f64>,
    max_panels: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvolve {
    p0: Option<Vec<f64>>,
    t_relaxation: Option<f64>,
    steps: Option<usize>,
    beta_delta_e: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    format: Option<String>,
}

/// Fully validated run configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: TriangleModel,
    pub mass: f64,
    pub hbar: f64,
    pub nu: f64,
    pub rate_prefactor: f64,
    /// Raw inverse temperatures, ascending sweep order.
    pub betas: Vec<f64>,
    /// Normalization gap used for the `beta * delta_e` axis.
    pub delta_e: f64,
    pub quad_rel_tol: f64,
    pub quad_max_panels: usize,
    pub reports: BTreeSet<Report>,
    pub evolve_p0: Vec<f64>,
    pub evolve_t_relaxation: f64,
    pub evolve_steps: usize,
    /// Inverse temperature used by the trajectory report.
    pub evolve_beta: f64,
    pub out_dir: Option<PathBuf>,
    pub out_format: Option<OutFormat>,
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::Io(format!("cannot read {}: {e}", path.display())))?;
    let raw: RawConfig = toml::from_str(&text)
        .map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
    validate(raw)
}

fn validate(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let mut problems: Vec<String> = Vec::new();

    // --- model ---------------------------------------------------------
    let strengths: Option<[f64; 3]> = match &raw.model.site_strengths {
        None => {
            problems.push("model.site_strengths is required".into());
            None
        }
        Some(v) if v.len() != 3 => {
            problems.push(format!(
                "model.site_strengths must have 3 entries, got {}",
                v.len()
            ));
            None
        }
        Some(v) if !v.iter().all(|x| x.is_finite()) => {
            problems.push("model.site_strengths must be finite".into());
            None
        }
        Some(v) => Some([v[0], v[1], v[2]]),
    };

    let model = match (&raw.model.energies, raw.model.tau, raw.model.phi, strengths) {
        (Some(_), Some(_), _, _) | (Some(_), _, Some(_), _) => {
            problems.push("model: give either energies or tau/phi, not both".into());
            None
        }
        (Some(e), None, None, Some(s)) => {
            if e.len() != 3 {
                problems.push(format!(
                    "model.energies must have 3 entries, got {}",
                    e.len()
                ));
                None
            } else {
                match TriangleModel::from_energies([e[0], e[1], e[2]], s) {
                    Ok(m) => Some(m),
                    Err(err) => {
                        problems.push(format!("model.energies: {err}"));
                        None
                    }
                }
            }
        }
        (None, Some(tau), Some(phi), Some(s)) => match TriangleModel::from_flux(tau, phi, s) {
            Ok(m) => Some(m),
            Err(err) => {
                problems.push(format!("model tau/phi: {err}"));
                None
            }
        },
        (None, None, None, _) | (None, Some(_), None, _) | (None, None, Some(_), _) => {
            problems.push(
                "model: specify energies = [e_minus, e_0, e_plus] or both tau and phi".into(),
            );
            None
        }
        _ => None,
    };

    let mass = raw.model.mass.unwrap_or(1.0);
    let hbar = raw.model.hbar.unwrap_or(1.0);
    if !(mass > 0.0 && mass.is_finite()) {
        problems.push(format!("model.mass must be > 0, got {mass}"));
    }
    if !(hbar > 0.0 && hbar.is_finite()) {
        problems.push(format!("model.hbar must be > 0, got {hbar}"));
    }

    // --- bath ------------------------------------------------------------
    let bath = raw.bath.as_ref();
    let nu = bath.and_then(|b| b.nu).unwrap_or(1.0);
    let rate_prefactor = bath.and_then(|b| b.rate_prefactor).unwrap_or(1.0);
    if !(nu > 0.0 && nu.is_finite()) {
        problems.push(format!("bath.nu must be > 0, got {nu}"));
    }
    if !(rate_prefactor > 0.0 && rate_prefactor.is_finite()) {
        problems.push(format!(
            "bath.rate_prefactor must be > 0, got {rate_prefactor}"
        ));
    }

    let delta_e = match (bath.and_then(|b| b.delta_e), &model) {
        (Some(d), _) => {
            if !(d > 0.0 && d.is_finite()) {
                problems.push(format!("bath.delta_e must be > 0, got {d}"));
            }
            d
        }
        (None, Some(m)) => {
            let mut e = m.energies();
            e.sort_by(f64::total_cmp);
            e[1] - e[0]
        }
        (None, None) => 1.0, // placeholder; model problems already recorded
    };

    let betas: Vec<f64> = match (
        bath.and_then(|b| b.beta.clone()),
        bath.and_then(|b| b.sweep.as_ref()),
    ) {
        (Some(_), Some(_)) => {
            problems.push("bath: give either beta = [...] or a sweep block, not both".into());
            Vec::new()
        }
        (Some(list), None) => {
            if list.is_empty() {
                problems.push("bath.beta must not be empty".into());
            }
            for b in &list {
                if !(*b > 0.0 && b.is_finite()) {
                    problems.push(format!("bath.beta entries must be > 0 and finite, got {b}"));
                }
            }
            list
        }
        (None, Some(sweep)) => {
            let mut out = Vec::new();
            if !(sweep.min > 0.0 && sweep.min.is_finite()) {
                problems.push(format!("bath.sweep.min must be > 0, got {}", sweep.min));
            } else if !(sweep.max > sweep.min && sweep.max.is_finite()) {
                problems.push(format!(
                    "bath.sweep.max must exceed min, got {} <= {}",
                    sweep.max, sweep.min
                ));
            } else if sweep.points < 2 {
                problems.push("bath.sweep.points must be at least 2".into());
            } else {
                let log = match sweep.spacing.as_deref() {
                    None | Some("log") => true,
                    Some("linear") => false,
                    Some(other) => {
                        problems.push(format!(
                            "bath.sweep.spacing must be 'log' or 'linear', got '{other}'"
                        ));
                        true
                    }
                };
                let n = sweep.points;
                for i in 0..n {
                    let f = i as f64 / (n - 1) as f64;
                    let bde = if log {
                        sweep.min * (sweep.max / sweep.min).powf(f)
                    } else {
                        sweep.min + (sweep.max - sweep.min) * f
                    };
                    out.push(bde / delta_e);
                }
            }
            out
        }
        (None, None) => {
            problems.push("bath: specify beta = [...] or a [bath.sweep] block".into());
            Vec::new()
        }
    };

    // --- quadrature ------------------------------------------------------
    let quad_rel_tol = raw
        .quadrature
        .as_ref()
        .and_then(|q| q.rel_tol)
        .unwrap_or(1e-9);
    if !(quad_rel_tol > 0.0 && quad_rel_tol < 1.0) {
        problems.push(format!(
            "quadrature.rel_tol must be in (0, 1), got {quad_rel_tol}"
        ));
    }
    let quad_max_panels = raw
        .quadrature
        .as_ref()
        .and_then(|q| q.max_panels)
        .unwrap_or(4000);
    if quad_max_panels < 4 {
        problems.push("quadrature.max_panels must be at least 4".into());
    }

    // --- reports -----------------------------------------------------------
    let reports: BTreeSet<Report> = match &raw.reports {
        None => [
            Report::Dbe,
            Report::Rates,
            Report::Evolve,
            Report::Thermo,
            Report::Check,
        ]
        .into_iter()
        .collect(),
        Some(names) => {
            let mut set = BTreeSet::new();
            for name in names {
                match Report::parse(name) {
                    Some(r) => {
                        set.insert(r);
                    }
                    None => problems.push(format!(
                        "reports: unknown report '{name}' (expected dbe|rates|evolve|thermo|check)"
                    )),
                }
            }
            if names.is_empty() {
                problems.push("reports must request at least one report".into());
            }
            set
        }
    };

    // --- evolve -----------------------------------------------------------
    let ev = raw.evolve.as_ref();
    let evolve_p0 = ev
        .and_then(|e| e.p0.clone())
        .unwrap_or_else(|| vec![1.0, 0.0, 0.0]);
    if evolve_p0.len() != 3 {
        problems.push(format!(
            "evolve.p0 must have 3 entries, got {}",
            evolve_p0.len()
        ));
    } else {
        if evolve_p0.iter().any(|x| !x.is_finite() || *x < 0.0) {
            problems.push("evolve.p0 entries must be finite and nonnegative".into());
        }
        let total: f64 = evolve_p0.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            problems.push(format!("evolve.p0 must sum to 1, got {total}"));
        }
    }
    let evolve_t_relaxation = ev.and_then(|e| e.t_relaxation).unwrap_or(50.0);
    if !(evolve_t_relaxation > 0.0 && evolve_t_relaxation.is_finite()) {
        problems.push(format!(
            "evolve.t_relaxation must be > 0, got {evolve_t_relaxation}"
        ));
    }
    let evolve_steps = ev.and_then(|e| e.steps).unwrap_or(200);
    if evolve_steps == 0 {
        problems.push("evolve.steps must be at least 1".into());
    }
    let evolve_beta = match ev.and_then(|e| e.beta_delta_e) {
        Some(bde) => {
            if !(bde > 0.0 && bde.is_finite()) {
                problems.push(format!("evolve.beta_delta_e must be > 0, got {bde}"));
            }
            bde / delta_e
        }
        None => betas.first().copied().unwrap_or(1.0),
    };

    // --- output ------------------------------------------------------------
    let out_dir = raw.output.as_ref().and_then(|o| o.dir.clone());
    let out_format = match raw.output.as_ref().and_then(|o| o.format.as_deref()) {
        None => None,
        Some("csv") => Some(OutFormat::Csv),
        Some("json") => Some(OutFormat::Json),
        Some(other) => {
            problems.push(format!(
                "output.format must be 'csv' or 'json', got '{other}'"
            ));
            None
        }
    };

    if !problems.is_empty() {
        return Err(ConfigError::Validation(problems));
    }

    Ok(RunConfig {
        model: model.expect("validated"),
        mass,
        hbar,
        nu,
        rate_prefactor,
        betas,
        delta_e,
        quad_rel_tol,
        quad_max_panels,
        reports,
        evolve_p0,
        evolve_t_relaxation,
        evolve_steps,
        evolve_beta,
        out_dir,
        out_format,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        validate(raw)
    }

    const MINIMAL: &str = r#"
        [model]
        energies = [-0.5, 0.0, 0.5]
        site_strengths = [1.0, 0.7, 1.5]

        [bath]
        beta = [1.0, 2.0]
    "#;

    #[test]
    fn minimal_config_valid_with_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.betas, vec![1.0, 2.0]);
        assert_eq!(cfg.delta_e, 0.5);
        assert_eq!(cfg.mass, 1.0);
        assert_eq!(cfg.nu, 1.0);
        assert_eq!(cfg.quad_rel_tol, 1e-9);
        assert_eq!(cfg.reports.len(), 5);
        assert_eq!(cfg.evolve_p0, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn missing_site_strengths_named() {
        let err = parse(
            r#"
            [model]
            energies = [-0.5, 0.0, 0.5]
            [bath]
            beta = [1.0]
        "#,
        )
        .unwrap_err();
        match err {
            ConfigError::Validation(problems) => {
                assert!(problems.iter().any(|p| p.contains("site_strengths")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn negative_beta_rejected() {
        let err = parse(
            r#"
            [model]
            energies = [-0.5, 0.0, 0.5]
            site_strengths = [1.0, 0.7, 1.5]
            [bath]
            beta = [-2.0]
        "#,
        )
        .unwrap_err();
        match err {
            ConfigError::Validation(problems) => {
                assert!(problems.iter().any(|p| p.contains("beta")));
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn all_violations_collected() {
        let err = parse(
            r#"
            [model]
            energies = [-0.5, 0.0, 0.5]
            mass = -1.0
            [bath]
            beta = [-2.0]
            [quadrature]
            rel_tol = 2.0
        "#,
        )
        .unwrap_err();
        match err {
            ConfigError::Validation(problems) => {
                assert!(problems.len() >= 4, "problems: {problems:?}");
            }
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn sweep_grid_log_spacing() {
        let cfg = parse(
            r#"
            [model]
            energies = [-0.5, 0.0, 0.5]
            site_strengths = [1.0, 0.7, 1.5]
            [bath.sweep]
            min = 0.1
            max = 10.0
            points = 5
        "#,
        )
        .unwrap();
        assert_eq!(cfg.betas.len(), 5);
        // beta = beta_delta_e / delta_e with delta_e = 0.5
        assert!((cfg.betas[0] - 0.2).abs() < 1e-15);
        assert!((cfg.betas[4] - 20.0).abs() < 1e-12);
        // log-spaced: constant ratio
        let r0 = cfg.betas[1] / cfg.betas[0];
        let r1 = cfg.betas[3] / cfg.betas[2];
        assert!((r0 - r1).abs() < 1e-12);
    }

    #[test]
    fn beta_and_sweep_exclusive() {
        let err = parse(
            r#"
            [model]
            energies = [-0.5, 0.0, 0.5]
            site_strengths = [1.0, 0.7, 1.5]
            [bath]
            beta = [1.0]
            [bath.sweep]
            min = 0.1
            max = 10.0
            points = 5
        "#,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::Validation(_)));
    }

    #[test]
    fn flux_model_accepted() {
        let cfg = parse(
            r#"
            [model]
            tau = 0.2886751345948129
            phi = 0.75
            site_strengths = [1.0, 0.7, 1.5]
            [bath]
            beta = [2.0]
        "#,
        )
        .unwrap();
        let e = cfg.model.energies();
        assert!((e[0] + 0.5).abs() < 1e-12);
        assert!(e[1].abs() < 1e-12);
        assert!((e[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unknown_keys_rejected_at_parse() {
        let err = parse(
            r#"
            [model]
            energies = [-0.5, 0.0, 0.5]
            site_strengths = [1.0, 0.7, 1.5]
            typo_field = 1
            [bath]
            beta = [1.0]
        "#,
        );
        assert!(matches!(err, Err(ConfigError::Parse(_))));
    }
}
