//! Subcommand drivers: sweep, check, evolve, rates.

use std::path::PathBuf;

use serde::Serialize;

use dbe_core::channels::{ChannelSet, CouplingMatrix};
use dbe_core::error::Error;
use dbe_core::pauli::{
    build_generator, evolve as evolve_populations, gibbs_state, PopulationState,
};
use dbe_core::quad::QuadSpec;
use dbe_core::rates::{dbe_identity_check, rate_matrix, RateTable, ThermalBath};
use dbe_core::scattering::{hermiticity_defect, symmetry_defect, time_reversal_defect};
use dbe_core::thermo::{
    entropy_decomposition, entropy_production, heat_currents, heat_currents_closed_form_3ch,
    probability_currents, thermalization_residuals,
};

use crate::config::{Report, RunConfig};
use crate::output::{g17, opt_g17, write_csv, write_json};
use crate::Format;

pub enum RunStatus {
    Clean,
    /// Configuration problem discovered after load (e.g. report not enabled).
    ConfigProblem(String),
    NumericalFailures(usize),
    Fatal(String),
}

pub struct Context {
    pub cfg: RunConfig,
    pub out_dir: PathBuf,
    pub format: Format,
    pub jobs: usize,
    pub quad: QuadSpec,
}

impl Context {
    pub fn new(
        cfg: RunConfig,
        out_dir: PathBuf,
        format: Format,
        jobs: usize,
        quad_tol: Option<f64>,
    ) -> Result<Self, crate::config::ConfigError> {
        if let Some(tol) = quad_tol {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(crate::config::ConfigError::Validation(vec![format!(
                    "--quad-tol must be in (0, 1), got {tol}"
                )]));
            }
        }
        // flags override config-provided output settings; built-in defaults last
        let out_dir = if out_dir.as_os_str() == "out" {
            cfg.out_dir.clone().unwrap_or(out_dir)
        } else {
            out_dir
        };
        let format = if format == Format::Csv {
            match cfg.out_format {
                Some(crate::config::OutFormat::Json) => Format::Json,
                _ => Format::Csv,
            }
        } else {
            format
        };
        let quad = QuadSpec {
            rel_tol: quad_tol.unwrap_or(cfg.quad_rel_tol),
            max_panels: cfg.quad_max_panels,
            ..QuadSpec::default()
        };
        Ok(Self {
            cfg,
            out_dir,
            format,
            jobs,
            quad,
        })
    }

    fn channels(&self) -> ChannelSet {
        self.cfg
            .model
            .channel_set_with_units(self.cfg.mass, self.cfg.hbar)
            .expect("validated at config load")
    }

    fn coupling(&self) -> CouplingMatrix {
        self.cfg.model.coupling()
    }

    fn bath(&self, beta: f64) -> ThermalBath {
        ThermalBath {
            beta,
            nu: self.cfg.nu,
            rate_prefactor: self.cfg.rate_prefactor,
        }
    }

    fn require_report(&self, report: Report) -> Result<(), RunStatus> {
        if self.cfg.reports.contains(&report) {
            Ok(())
        } else {
            Err(RunStatus::ConfigProblem(format!(
                "report '{}' is not enabled in the configuration",
                report.name()
            )))
        }
    }

    /// Run `f` over the beta grid, optionally in parallel, preserving order.
    fn over_betas<T, F>(&self, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize, f64) -> T + Sync,
    {
        let betas = &self.cfg.betas;
        if self.jobs == 1 || betas.len() <= 1 {
            betas.iter().enumerate().map(|(i, &b)| f(i, b)).collect()
        } else {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(self.jobs)
                .build()
                .expect("thread pool");
            pool.install(|| {
                use rayon::prelude::*;
                betas
                    .par_iter()
                    .enumerate()
                    .map(|(i, &b)| f(i, b))
                    .collect()
            })
        }
    }
}

/// Error text for a status cell; commas would break the CSV column layout.
fn status_text(err: &Error) -> String {
    err.to_string().replace(',', ";")
}

/// Sorted channel indices: lowest, middle, highest level.
fn level_order(channels: &ChannelSet) -> (usize, usize, usize) {
    let sorted = channels.sorted_indices();
    (sorted[0], sorted[1], sorted[2])
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    beta_delta_e: f64,
    i_0m: Option<f64>,
    i_pm: Option<f64>,
    i_0p: Option<f64>,
    lhs_30a: Option<f64>,
    rhs_30a: Option<f64>,
    lhs_30b: Option<f64>,
    rhs_30b: Option<f64>,
    stat_residual: Option<f64>,
    quad_err_max: Option<f64>,
    status: String,
}

impl SweepRow {
    fn failed(beta_delta_e: f64, err: &Error) -> Self {
        Self {
            beta_delta_e,
            i_0m: None,
            i_pm: None,
            i_0p: None,
            lhs_30a: None,
            rhs_30a: None,
            lhs_30b: None,
            rhs_30b: None,
            stat_residual: None,
            quad_err_max: None,
            status: status_text(err),
        }
    }
}

fn sweep_row(ctx: &Context, beta: f64) -> SweepRow {
    let channels = ctx.channels();
    let coupling = ctx.coupling();
    let beta_delta_e = beta * ctx.cfg.delta_e;
    let table = match rate_matrix(&ctx.bath(beta), &channels, &coupling, &ctx.quad) {
        Ok(t) => t,
        Err(e) => return SweepRow::failed(beta_delta_e, &e),
    };
    let (lo, mid, hi) = level_order(&channels);
    let check = match thermalization_residuals(&table, &channels) {
        Ok(c) => c,
        Err(e) => return SweepRow::failed(beta_delta_e, &e),
    };
    let stat_residual = match build_generator(&table).and_then(|gen| {
        let p_eq = gibbs_state(beta, &channels)?;
        let scale = gen.max_abs();
        let res = gen.apply(p_eq.probabilities()).amax();
        Ok(if scale > 0.0 { res / scale } else { 0.0 })
    }) {
        Ok(r) => r,
        Err(e) => return SweepRow::failed(beta_delta_e, &e),
    };
    SweepRow {
        beta_delta_e,
        i_0m: table.i_ratio(mid, lo),
        i_pm: table.i_ratio(hi, lo),
        i_0p: table.i_ratio(mid, hi),
        lhs_30a: Some(check.lhs_low),
        rhs_30a: Some(check.rhs_low),
        lhs_30b: Some(check.lhs_high),
        rhs_30b: Some(check.rhs_high),
        stat_residual: Some(stat_residual),
        quad_err_max: Some(table.max_rel_error()),
        status: "ok".into(),
    }
}

pub fn sweep(ctx: &Context) -> RunStatus {
    if let Err(status) = ctx.require_report(Report::Dbe) {
        return status;
    }
    let rows = ctx.over_betas(|_, beta| sweep_row(ctx, beta));
    let failures = rows.iter().filter(|r| r.status != "ok").count();

    let header = [
        "beta_deltaE",
        "I_0m",
        "I_pm",
        "I_0p",
        "lhs_30a",
        "rhs_30a",
        "lhs_30b",
        "rhs_30b",
        "stat_residual",
        "quad_err_max",
        "status",
    ];
    let result = match ctx.format {
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        g17(r.beta_delta_e),
                        opt_g17(r.i_0m),
                        opt_g17(r.i_pm),
                        opt_g17(r.i_0p),
                        opt_g17(r.lhs_30a),
                        opt_g17(r.rhs_30a),
                        opt_g17(r.lhs_30b),
                        opt_g17(r.rhs_30b),
                        opt_g17(r.stat_residual),
                        opt_g17(r.quad_err_max),
                        r.status.clone(),
                    ]
                })
                .collect();
            write_csv(&ctx.out_dir.join("sweep.csv"), &header, &table)
        }
        Format::Json => write_json(&ctx.out_dir.join("sweep.json"), &rows),
    };
    if let Err(e) = result {
        return RunStatus::Fatal(format!("cannot write sweep output: {e}"));
    }
    println!(
        "sweep: {} rows ({} failed) -> {}",
        rows.len(),
        failures,
        ctx.out_dir.display()
    );
    if failures > 0 {
        RunStatus::NumericalFailures(failures)
    } else {
        RunStatus::Clean
    }
}

// ---------------------------------------------------------------------------
// rates
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct RateRow {
    beta_delta_e: f64,
    to: String,
    from: String,
    a_integral: Option<f64>,
    b_integral: Option<f64>,
    rate: Option<f64>,
    i_ratio: Option<f64>,
    rel_err_max: Option<f64>,
    status: String,
}

pub fn rates(ctx: &Context) -> RunStatus {
    if let Err(status) = ctx.require_report(Report::Rates) {
        return status;
    }
    let channels = ctx.channels();
    let rows: Vec<RateRow> = ctx
        .over_betas(|_, beta| {
            let beta_delta_e = beta * ctx.cfg.delta_e;
            match rate_matrix(&ctx.bath(beta), &channels, &ctx.coupling(), &ctx.quad) {
                Ok(table) => pair_rows(&channels, &table, beta_delta_e),
                Err(e) => vec![RateRow {
                    beta_delta_e,
                    to: "*".into(),
                    from: "*".into(),
                    a_integral: None,
                    b_integral: None,
                    rate: None,
                    i_ratio: None,
                    rel_err_max: None,
                    status: status_text(&e),
                }],
            }
        })
        .into_iter()
        .flatten()
        .collect();

    let failures = rows.iter().filter(|r| r.status != "ok").count();
    let header = [
        "beta_deltaE",
        "to",
        "from",
        "a_integral",
        "b_integral",
        "rate",
        "i_ratio",
        "rel_err_max",
        "status",
    ];
    let result = match ctx.format {
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    vec![
                        g17(r.beta_delta_e),
                        r.to.clone(),
                        r.from.clone(),
                        opt_g17(r.a_integral),
                        opt_g17(r.b_integral),
                        opt_g17(r.rate),
                        opt_g17(r.i_ratio),
                        opt_g17(r.rel_err_max),
                        r.status.clone(),
                    ]
                })
                .collect();
            write_csv(&ctx.out_dir.join("rates.csv"), &header, &table)
        }
        Format::Json => write_json(&ctx.out_dir.join("rates.json"), &rows),
    };
    if let Err(e) = result {
        return RunStatus::Fatal(format!("cannot write rates output: {e}"));
    }
    println!(
        "rates: {} rows ({} failed) -> {}",
        rows.len(),
        failures,
        ctx.out_dir.display()
    );
    if failures > 0 {
        RunStatus::NumericalFailures(failures)
    } else {
        RunStatus::Clean
    }
}

fn pair_rows(channels: &ChannelSet, table: &RateTable, beta_delta_e: f64) -> Vec<RateRow> {
    let n = channels.len();
    let mut rows = Vec::new();
    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            let report = table.report(k, l);
            rows.push(RateRow {
                beta_delta_e,
                to: channels.label(k).to_string(),
                from: channels.label(l).to_string(),
                a_integral: Some(table.a_integral(k, l)),
                b_integral: Some(table.b_integral(k, l)),
                rate: Some(table.rate(k, l)),
                i_ratio: table.i_ratio(k, l),
                rel_err_max: report.map(|r| r.rel_error + r.truncation_rel),
                status: "ok".into(),
            });
        }
    }
    rows
}

// ---------------------------------------------------------------------------
// evolve
// ---------------------------------------------------------------------------

pub fn evolve(ctx: &Context) -> RunStatus {
    if let Err(status) = ctx.require_report(Report::Evolve) {
        return status;
    }
    let channels = ctx.channels();
    let beta = ctx.cfg.evolve_beta;
    let table = match rate_matrix(&ctx.bath(beta), &channels, &ctx.coupling(), &ctx.quad) {
        Ok(t) => t,
        Err(e) => return RunStatus::Fatal(format!("rate table: {e}")),
    };
    let gen = match build_generator(&table) {
        Ok(g) => g,
        Err(e) => return RunStatus::Fatal(format!("generator: {e}")),
    };
    let p_eq = match gibbs_state(beta, &channels) {
        Ok(p) => p,
        Err(e) => return RunStatus::Fatal(format!("thermal state: {e}")),
    };
    let p0 = match PopulationState::new(ctx.cfg.evolve_p0.clone(), 0.0) {
        Ok(p) => p,
        Err(e) => return RunStatus::Fatal(format!("initial state: {e}")),
    };
    let scale = gen.max_abs();
    let t_final = if scale > 0.0 {
        ctx.cfg.evolve_t_relaxation / scale
    } else {
        ctx.cfg.evolve_t_relaxation
    };
    let trajectory = match evolve_populations(&p0, &gen, t_final, ctx.cfg.evolve_steps) {
        Ok(t) => t,
        Err(e) => return RunStatus::Fatal(format!("evolution: {e}")),
    };

    #[derive(Serialize)]
    struct TrajRow {
        time: f64,
        p: Vec<f64>,
        sigma: Option<f64>,
        sigma_nonneg: bool,
        status: String,
    }

    let mut rows = Vec::new();
    let mut failures = 0usize;
    for (time, state) in trajectory.iter() {
        let (sigma, status) = match PopulationState::from_vector(state.clone(), time) {
            Ok(p_t) => match entropy_production(&p_t, &gen, &p_eq) {
                Ok(s) => (Some(s), "ok".to_string()),
                Err(Error::DomainError(_)) => {
                    // zero population with nonzero flow: entropy rate not finite
                    (None, "sigma undefined (zero population)".to_string())
                }
                Err(e) => {
                    failures += 1;
                    (None, status_text(&e))
                }
            },
            Err(e) => {
                failures += 1;
                (None, status_text(&e))
            }
        };
        rows.push(TrajRow {
            time,
            p: state.iter().copied().collect(),
            sigma,
            sigma_nonneg: sigma.map(|s| s >= -1e-10).unwrap_or(false),
            status,
        });
    }

    let labels: Vec<String> = (0..channels.len())
        .map(|j| format!("p_{}", channels.label(j)))
        .collect();
    let mut header: Vec<&str> = vec!["time"];
    header.extend(labels.iter().map(|s| s.as_str()));
    header.extend(["sigma", "sigma_nonneg", "status"]);

    let result = match ctx.format {
        Format::Csv => {
            let table: Vec<Vec<String>> = rows
                .iter()
                .map(|r| {
                    let mut row = vec![g17(r.time)];
                    row.extend(r.p.iter().map(|&x| g17(x)));
                    row.push(opt_g17(r.sigma));
                    row.push(if r.sigma_nonneg { "1" } else { "0" }.into());
                    row.push(r.status.clone());
                    row
                })
                .collect();
            write_csv(&ctx.out_dir.join("trajectory.csv"), &header, &table)
        }
        Format::Json => write_json(&ctx.out_dir.join("trajectory.json"), &rows),
    };
    if let Err(e) = result {
        return RunStatus::Fatal(format!("cannot write trajectory: {e}"));
    }
    println!(
        "evolve: {} checkpoints ({} clamped entries) -> {}",
        rows.len(),
        trajectory.clamped_count(),
        ctx.out_dir.display()
    );
    if failures > 0 {
        RunStatus::NumericalFailures(failures)
    } else {
        RunStatus::Clean
    }
}

// ---------------------------------------------------------------------------
// check
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
struct DefectSummary {
    pair: String,
    max_hermiticity: f64,
    max_symmetry: f64,
    max_time_reversal: f64,
    grid_points: usize,
}

#[derive(Debug, Clone, Serialize)]
struct CheckBetaRow {
    beta_delta_e: f64,
    max_identity_residual: Option<f64>,
    max_reciprocal_residual: Option<f64>,
    max_boltzmann_residual: Option<f64>,
    thermalization_residual: Option<f64>,
    stat_residual: Option<f64>,
    entropy_closure: Option<f64>,
    deviation_term: Option<f64>,
    loop_current_spread: Option<f64>,
    heat_cycle_sum: Option<f64>,
    heat_closed_form_dev: Option<f64>,
    status: String,
}

#[derive(Debug, Clone, Serialize)]
struct CheckReport {
    defects: Vec<DefectSummary>,
    rows: Vec<CheckBetaRow>,
}

pub fn check(ctx: &Context) -> RunStatus {
    if let Err(status) = ctx.require_report(Report::Check) {
        return status;
    }
    let channels = ctx.channels();
    let coupling = ctx.coupling();
    let with_thermo = ctx.cfg.reports.contains(&Report::Thermo);

    // defect scan on a fixed energy grid above the highest threshold
    let (lo, mid, hi) = level_order(&channels);
    let e_hi = channels.energy(hi);
    let scale = channels.energy_scale();
    let grid_n = 24usize;
    let mut defects = Vec::new();
    for (a, b) in [(hi, mid), (hi, lo), (mid, lo)] {
        let mut max_h = 0.0f64;
        let mut max_s = 0.0f64;
        let mut max_t = 0.0f64;
        for i in 0..grid_n {
            let f = i as f64 / (grid_n - 1) as f64;
            let energy = e_hi + 0.05 * scale + 3.0 * scale * f;
            if let Ok(d) = hermiticity_defect(energy, a, b, &coupling, &channels) {
                max_h = max_h.max(d.norm());
            }
            if let Ok(d) = symmetry_defect(energy, a, b, &coupling, &channels) {
                max_s = max_s.max(d.norm());
            }
            if let Ok(d) = time_reversal_defect(energy, a, b, &coupling, &channels) {
                max_t = max_t.max(d.abs());
            }
        }
        defects.push(DefectSummary {
            pair: format!("{}<->{}", channels.label(a), channels.label(b)),
            max_hermiticity: max_h,
            max_symmetry: max_s,
            max_time_reversal: max_t,
            grid_points: grid_n,
        });
    }

    let rows: Vec<CheckBetaRow> =
        ctx.over_betas(|_, beta| check_beta_row(ctx, &channels, &coupling, beta, with_thermo));
    let failures = rows.iter().filter(|r| r.status != "ok").count();

    let report = CheckReport { defects, rows };
    let result = match ctx.format {
        Format::Csv => {
            let header = [
                "beta_deltaE",
                "max_identity_residual",
                "max_reciprocal_residual",
                "max_boltzmann_residual",
                "thermalization_residual",
                "stat_residual",
                "entropy_closure",
                "deviation_term",
                "loop_current_spread",
                "heat_cycle_sum",
                "heat_closed_form_dev",
                "status",
            ];
            let table: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        g17(r.beta_delta_e),
                        opt_g17(r.max_identity_residual),
                        opt_g17(r.max_reciprocal_residual),
                        opt_g17(r.max_boltzmann_residual),
                        opt_g17(r.thermalization_residual),
                        opt_g17(r.stat_residual),
                        opt_g17(r.entropy_closure),
                        opt_g17(r.deviation_term),
                        opt_g17(r.loop_current_spread),
                        opt_g17(r.heat_cycle_sum),
                        opt_g17(r.heat_closed_form_dev),
                        r.status.clone(),
                    ]
                })
                .collect();
            let defect_header = [
                "pair",
                "max_hermiticity",
                "max_symmetry",
                "max_time_reversal",
                "grid_points",
            ];
            let defect_table: Vec<Vec<String>> = report
                .defects
                .iter()
                .map(|d| {
                    vec![
                        d.pair.clone(),
                        g17(d.max_hermiticity),
                        g17(d.max_symmetry),
                        g17(d.max_time_reversal),
                        d.grid_points.to_string(),
                    ]
                })
                .collect();
            write_csv(
                &ctx.out_dir.join("check_defects.csv"),
                &defect_header,
                &defect_table,
            )
            .and_then(|_| write_csv(&ctx.out_dir.join("check.csv"), &header, &table))
        }
        Format::Json => write_json(&ctx.out_dir.join("check.json"), &report),
    };
    if let Err(e) = result {
        return RunStatus::Fatal(format!("cannot write check output: {e}"));
    }

    for d in &report.defects {
        println!(
            "defects {}: hermiticity {:.3e}, symmetry {:.3e}, time-reversal {:.3e}",
            d.pair, d.max_hermiticity, d.max_symmetry, d.max_time_reversal
        );
    }
    for r in &report.rows {
        println!(
            "beta*dE {:.4}: identity {:.3e}, stationarity {:.3e}, status {}",
            r.beta_delta_e,
            r.max_identity_residual.unwrap_or(f64::NAN),
            r.stat_residual.unwrap_or(f64::NAN),
            r.status
        );
    }
    if failures > 0 {
        RunStatus::NumericalFailures(failures)
    } else {
        RunStatus::Clean
    }
}

fn check_beta_row(
    ctx: &Context,
    channels: &ChannelSet,
    coupling: &CouplingMatrix,
    beta: f64,
    with_thermo: bool,
) -> CheckBetaRow {
    let beta_delta_e = beta * ctx.cfg.delta_e;
    let fail = |e: &Error| CheckBetaRow {
        beta_delta_e,
        max_identity_residual: None,
        max_reciprocal_residual: None,
        max_boltzmann_residual: None,
        thermalization_residual: None,
        stat_residual: None,
        entropy_closure: None,
        deviation_term: None,
        loop_current_spread: None,
        heat_cycle_sum: None,
        heat_closed_form_dev: None,
        status: status_text(e),
    };

    let table = match rate_matrix(&ctx.bath(beta), channels, coupling, &ctx.quad) {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let n = table.dim();

    let identity = dbe_identity_check(&table, channels);

    let mut max_reciprocal: Option<f64> = None;
    let mut max_boltzmann: Option<f64> = None;
    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            if let (Some(i_kl), Some(i_lk)) = (table.i_ratio(k, l), table.i_ratio(l, k)) {
                let r = (i_kl * i_lk - 1.0).abs();
                max_reciprocal = Some(max_reciprocal.map_or(r, |m| m.max(r)));
            }
            let a_rev = table.a_integral(l, k);
            if a_rev > 0.0 {
                let expected = (-beta * (channels.energy(k) - channels.energy(l))).exp() * a_rev;
                let r = (table.b_integral(k, l) - expected).abs() / expected;
                max_boltzmann = Some(max_boltzmann.map_or(r, |m| m.max(r)));
            }
        }
    }

    let thermalization = match thermalization_residuals(&table, channels) {
        Ok(c) => Some(c.max_residual()),
        Err(e) => return fail(&e),
    };

    let gen = match build_generator(&table) {
        Ok(g) => g,
        Err(e) => return fail(&e),
    };
    let p_eq = match gibbs_state(beta, channels) {
        Ok(p) => p,
        Err(e) => return fail(&e),
    };
    let scale = gen.max_abs();
    let stat_residual = if scale > 0.0 {
        gen.apply(p_eq.probabilities()).amax() / scale
    } else {
        0.0
    };

    // entropy closure at a fixed interior probe state
    let probe = PopulationState::new(vec![0.5, 0.3, 0.2], 0.0).expect("valid probe");
    let (entropy_closure, deviation_term) = if scale > 0.0 {
        match (
            entropy_production(&probe, &gen, &p_eq),
            entropy_decomposition(&probe, &table),
            entropy_decomposition(&p_eq, &table),
        ) {
            (Ok(direct), Ok(split), Ok(at_eq)) => {
                let denom = direct.abs().max(1e-30);
                (
                    Some((direct - split.sigma).abs() / denom),
                    Some(at_eq.deviation_term),
                )
            }
            _ => (None, None),
        }
    } else {
        (Some(0.0), Some(0.0))
    };

    let (loop_spread, heat_sum, heat_dev) = if with_thermo && scale > 0.0 {
        let k_mat = probability_currents(&p_eq, &table);
        let loop_vals = [k_mat.get(2, 1), k_mat.get(1, 0), k_mat.get(0, 2)];
        let k_scale = loop_vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let spread = if k_scale > 0.0 {
            (loop_vals.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v))
                - loop_vals.iter().fold(f64::INFINITY, |m, &v| m.min(v)))
                / k_scale
        } else {
            0.0
        };
        match (
            heat_currents(&table, channels, beta),
            heat_currents_closed_form_3ch(&table, channels, beta),
        ) {
            (Ok(j_gen), Ok(j_closed)) => {
                let dev = j_gen
                    .stored()
                    .map(|(r, c, v)| (v - j_closed.get(r, c)).abs())
                    .fold(0.0f64, f64::max)
                    / j_gen.max_abs().max(1e-30);
                (Some(spread), Some(j_gen.stored_sum()), Some(dev))
            }
            _ => (Some(spread), None, None),
        }
    } else if with_thermo {
        (Some(0.0), Some(0.0), Some(0.0))
    } else {
        (None, None, None)
    };

    CheckBetaRow {
        beta_delta_e,
        max_identity_residual: identity.max_residual().or(Some(0.0)),
        max_reciprocal_residual: max_reciprocal.or(Some(0.0)),
        max_boltzmann_residual: max_boltzmann.or(Some(0.0)),
        thermalization_residual: thermalization,
        stat_residual: Some(stat_residual),
        entropy_closure,
        deviation_term,
        loop_current_spread: loop_spread,
        heat_cycle_sum: heat_sum,
        heat_closed_form_dev: heat_dev,
        status: "ok".into(),
    }
}
