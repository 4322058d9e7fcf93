//! Thermal transition-rate integrals over scattering energies and the
//! detailed-balance diagnostics built from them.
//!
//! For an ordered channel pair `(j_out, j_in)` the forward integral is
//!
//! ```text
//! A(j_out, j_in) = 2m Int_{E_low}^inf dE  e^{-beta (E - eps_in)}
//!                  |T_{out,in}(E)|^2 / sqrt((E - eps_in)(E - eps_out)),
//! E_low = max(eps_in, eps_out),
//! ```
//!
//! and `B` is the same weight with the reversed matrix element. The
//! substitution `E = E_low + u^2` absorbs the integrable endpoint
//! singularity; the exponential tail is truncated where the Boltzmann weight
//! has decayed by 1e-16 relative to its value at `E_low`. Interior channel
//! thresholds are segment boundaries so that quadrature nodes never land on
//! the square-root cusps there.
//!
//! The ratio `I(j_out, j_in) = A/B` equals 1 exactly when detailed balance
//! holds for that pair. Two identities follow from the definitions alone and
//! serve as cross-checks of the quadrature:
//! `I(k,l) I(l,k) = 1` and `B(k,l) = e^{-beta (eps_k - eps_l)} A(l,k)`.

use nalgebra::DMatrix;

use crate::channels::{ChannelSet, CouplingMatrix};
use crate::error::{Error, Result};
use crate::quad::{integrate_segmented, QuadSpec};
use crate::scattering::{solve_channel_amplitudes, t_element};

/// Boltzmann-weight decay (relative to the lower limit) at which the
/// integration domain is truncated.
const TAIL_DECAY: f64 = 1e-16;

/// Underflow floor below which an integral no longer defines a ratio.
const RATIO_FLOOR: f64 = 1e-300;

/// Bath parameters entering the rates.
///
/// `rate_prefactor` is the global constant multiplying every off-diagonal
/// rate, `a_{kl} = nu * rate_prefactor * A(k,l)`. All ratio-type outputs
/// (the I matrix, stationarity residuals, thermalization conditions) are
/// independent of it; set it to `pi / sqrt(2 pi m / beta)` to recover the
/// literal low-density golden-rule normalization in one dimension.
#[derive(Debug, Clone, Copy)]
pub struct ThermalBath {
    pub beta: f64,
    pub nu: f64,
    pub rate_prefactor: f64,
}

impl ThermalBath {
    pub fn new(beta: f64) -> Result<Self> {
        Self::with_density(beta, 1.0, 1.0)
    }

    pub fn with_density(beta: f64, nu: f64, rate_prefactor: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
        }
        if !(nu > 0.0 && nu.is_finite()) {
            return Err(Error::InvalidInput(format!("nu must be > 0, got {nu}")));
        }
        if !(rate_prefactor > 0.0 && rate_prefactor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rate prefactor must be > 0, got {rate_prefactor}"
            )));
        }
        Ok(Self {
            beta,
            nu,
            rate_prefactor,
        })
    }
}

/// Quadrature accounting for one thermal integral.
#[derive(Debug, Clone, Copy)]
pub struct PairReport {
    pub panels: usize,
    pub evals: usize,
    pub abs_error: f64,
    pub rel_error: f64,
    /// Estimated relative size of the truncated exponential tail.
    pub truncation_rel: f64,
}

/// Off-diagonal thermal integrals, rates, and the detailed-balance ratio
/// matrix at one inverse temperature. Diagonal entries are not computed:
/// elastic rates cancel from the population dynamics and their threshold
/// integrand diverges logarithmically.
#[derive(Debug, Clone)]
pub struct RateTable {
    n: usize,
    beta: f64,
    a_int: DMatrix<f64>,
    b_int: DMatrix<f64>,
    rates: DMatrix<f64>,
    i_ratio: Vec<Option<f64>>,
    reports: Vec<Option<PairReport>>,
}

impl RateTable {
    /// Assemble a table from precomputed integrals, e.g. synthetic rates or
    /// externally measured values. No quadrature reports are attached.
    pub fn from_integrals(
        beta: f64,
        a_int: DMatrix<f64>,
        b_int: DMatrix<f64>,
        nu: f64,
        rate_prefactor: f64,
    ) -> Result<Self> {
        let n = a_int.nrows();
        if n < 2 || a_int.ncols() != n || b_int.nrows() != n || b_int.ncols() != n {
            return Err(Error::InvalidInput(
                "integral matrices must be square and of matching size".into(),
            ));
        }
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
        }
        for k in 0..n {
            for l in 0..n {
                let (a, b) = (a_int[(k, l)], b_int[(k, l)]);
                if k == l {
                    if a != 0.0 || b != 0.0 {
                        return Err(Error::InvalidInput(
                            "diagonal integrals must be zero".into(),
                        ));
                    }
                } else if !(a.is_finite() && b.is_finite() && a >= 0.0 && b >= 0.0) {
                    return Err(Error::InvalidInput(format!(
                        "integral entry ({k},{l}) invalid: A={a}, B={b}"
                    )));
                }
            }
        }
        let rates = a_int.map(|a| nu * rate_prefactor * a);
        let mut ratios = vec![None; n * n];
        for k in 0..n {
            for l in 0..n {
                if k != l && a_int[(k, l)] > RATIO_FLOOR && b_int[(k, l)] > RATIO_FLOOR {
                    ratios[k * n + l] = Some(a_int[(k, l)] / b_int[(k, l)]);
                }
            }
        }
        Ok(Self {
            n,
            beta,
            a_int,
            b_int,
            rates,
            i_ratio: ratios,
            reports: vec![None; n * n],
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Forward thermal integral `A(k, l)`.
    pub fn a_integral(&self, k: usize, l: usize) -> f64 {
        self.a_int[(k, l)]
    }

    /// Reversed-element thermal integral `B(k, l)`.
    pub fn b_integral(&self, k: usize, l: usize) -> f64 {
        self.b_int[(k, l)]
    }

    /// Transition rate `a_{kl}` (from level `l` to level `k`); diagonal is 0.
    pub fn rate(&self, k: usize, l: usize) -> f64 {
        self.rates[(k, l)]
    }

    pub fn rate_matrix(&self) -> &DMatrix<f64> {
        &self.rates
    }

    /// Detailed-balance ratio `I(k, l) = A(k,l)/B(k,l)`, `None` when either
    /// integral underflowed (reported as missing, never as 0 or infinity).
    pub fn i_ratio(&self, k: usize, l: usize) -> Option<f64> {
        self.i_ratio[k * self.n + l]
    }

    /// `I(k, l)` or an explicit error for a pair needed downstream.
    pub fn i_ratio_required(&self, k: usize, l: usize) -> Result<f64> {
        self.i_ratio(k, l)
            .ok_or(Error::UndefinedRatio { j_out: k, j_in: l })
    }

    /// Combined quadrature report for the ordered pair `(k, l)`.
    pub fn report(&self, k: usize, l: usize) -> Option<PairReport> {
        self.reports[k * self.n + l]
    }

    /// Largest relative quadrature error over all computed integrals.
    pub fn max_rel_error(&self) -> f64 {
        self.reports
            .iter()
            .flatten()
            .map(|r| r.rel_error + r.truncation_rel)
            .fold(0.0, f64::max)
    }
}

enum Direction {
    Forward,
    Reversed,
}

fn thermal_integral(
    j_out: usize,
    j_in: usize,
    direction: Direction,
    bath: &ThermalBath,
    channels: &ChannelSet,
    coupling: &CouplingMatrix,
    spec: &QuadSpec,
) -> Result<(f64, PairReport)> {
    let n = channels.len();
    if j_out >= n || j_in >= n || j_out == j_in {
        return Err(Error::InvalidInput(format!(
            "thermal integral needs a distinct ordered pair, got ({j_out},{j_in})"
        )));
    }
    let eps_in = channels.energy(j_in);
    let eps_out = channels.energy(j_out);
    let e_low = eps_in.max(eps_out);
    let e_min = eps_in.min(eps_out);
    let gap = e_low - e_min;
    let mass = channels.mass();
    let beta = bath.beta;

    // truncate once the weight has decayed by TAIL_DECAY relative to E_low
    let span = -TAIL_DECAY.ln() / beta;
    let u_max = span.sqrt();

    // transformed integrand; the 2u Jacobian cancels the sqrt(E - e_low)
    // factor, leaving 4m e^{-beta(E - eps_in)} |T|^2 / sqrt(u^2 + gap)
    let mut integrand = |u: f64| -> Result<f64> {
        let energy = crate::scattering::snap_off_threshold(e_low + u * u, channels);
        let t = match direction {
            Direction::Forward => t_element(
                &solve_channel_amplitudes(energy, j_in, coupling, channels)?,
                j_out,
            ),
            Direction::Reversed => t_element(
                &solve_channel_amplitudes(energy, j_out, coupling, channels)?,
                j_in,
            ),
        };
        let weight = (-beta * (energy - eps_in)).exp();
        Ok(4.0 * mass * weight * t.norm_sqr() / (u * u + gap).sqrt())
    };

    // segment boundaries at interior channel thresholds
    let mut bounds = vec![0.0];
    let mut cusps: Vec<f64> = (0..n)
        .map(|j| channels.energy(j))
        .filter(|&e| e > e_low && e < e_low + span)
        .map(|e| (e - e_low).sqrt())
        .collect();
    cusps.sort_by(f64::total_cmp);
    bounds.extend(cusps);
    bounds.push(u_max);

    let outcome = integrate_segmented(&mut integrand, &bounds, spec)?;

    // one-sided tail bound: integrand decays at least as fast as the
    // Gaussian weight beyond u_max
    let edge = integrand(u_max)?;
    let tail = edge / (2.0 * beta * u_max);
    let scale = outcome.value.abs().max(RATIO_FLOOR);
    let report = PairReport {
        panels: outcome.panels,
        evals: outcome.evals,
        abs_error: outcome.abs_error,
        rel_error: outcome.abs_error / scale,
        truncation_rel: tail / scale,
    };
    Ok((outcome.value, report))
}

/// Forward thermal integral `A(j_out, j_in)` with its quadrature report.
pub fn thermal_integral_a(
    j_out: usize,
    j_in: usize,
    bath: &ThermalBath,
    channels: &ChannelSet,
    coupling: &CouplingMatrix,
    spec: &QuadSpec,
) -> Result<(f64, PairReport)> {
    thermal_integral(
        j_out,
        j_in,
        Direction::Forward,
        bath,
        channels,
        coupling,
        spec,
    )
}

/// Reversed-element thermal integral `B(j_out, j_in)`.
pub fn thermal_integral_b(
    j_out: usize,
    j_in: usize,
    bath: &ThermalBath,
    channels: &ChannelSet,
    coupling: &CouplingMatrix,
    spec: &QuadSpec,
) -> Result<(f64, PairReport)> {
    thermal_integral(
        j_out,
        j_in,
        Direction::Reversed,
        bath,
        channels,
        coupling,
        spec,
    )
}

/// Detailed-balance ratio for one ordered pair.
pub fn i_ratio(
    j_out: usize,
    j_in: usize,
    bath: &ThermalBath,
    channels: &ChannelSet,
    coupling: &CouplingMatrix,
    spec: &QuadSpec,
) -> Result<f64> {
    let (a, _) = thermal_integral_a(j_out, j_in, bath, channels, coupling, spec)?;
    let (b, _) = thermal_integral_b(j_out, j_in, bath, channels, coupling, spec)?;
    if a <= RATIO_FLOOR || b <= RATIO_FLOOR {
        return Err(Error::UndefinedRatio { j_out, j_in });
    }
    Ok(a / b)
}

/// Assemble the full off-diagonal rate table at one inverse temperature.
pub fn rate_matrix(
    bath: &ThermalBath,
    channels: &ChannelSet,
    coupling: &CouplingMatrix,
    spec: &QuadSpec,
) -> Result<RateTable> {
    let n = channels.len();
    let mut a_int = DMatrix::zeros(n, n);
    let mut b_int = DMatrix::zeros(n, n);
    let mut rates = DMatrix::zeros(n, n);
    let mut ratios = vec![None; n * n];
    let mut reports = vec![None; n * n];

    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            let (a, rep_a) = thermal_integral_a(k, l, bath, channels, coupling, spec)?;
            let (b, rep_b) = thermal_integral_b(k, l, bath, channels, coupling, spec)?;
            a_int[(k, l)] = a;
            b_int[(k, l)] = b;
            rates[(k, l)] = bath.nu * bath.rate_prefactor * a;
            ratios[k * n + l] = if a > RATIO_FLOOR && b > RATIO_FLOOR {
                Some(a / b)
            } else {
                None
            };
            reports[k * n + l] = Some(PairReport {
                panels: rep_a.panels + rep_b.panels,
                evals: rep_a.evals + rep_b.evals,
                abs_error: rep_a.abs_error + rep_b.abs_error,
                rel_error: rep_a.rel_error.max(rep_b.rel_error),
                truncation_rel: rep_a.truncation_rel.max(rep_b.truncation_rel),
            });
        }
    }

    Ok(RateTable {
        n,
        beta: bath.beta,
        a_int,
        b_int,
        rates,
        i_ratio: ratios,
        reports,
    })
}

/// Residual of the rate identity `a_{kl} e^{-beta eps_l} =
/// a_{lk} e^{-beta eps_k} I(k,l)` for one ordered pair; `None` when the pair
/// carries no flux (both rates zero) or `I` is undefined.
#[derive(Debug, Clone, Copy)]
pub struct PairResidual {
    pub k: usize,
    pub l: usize,
    pub residual: Option<f64>,
}

/// Per-pair residual report for the rate identity.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    pub pairs: Vec<PairResidual>,
    /// `true` when every pair carried zero flux (e.g. no interaction).
    pub vacuous: bool,
}

impl IdentityReport {
    pub fn max_residual(&self) -> Option<f64> {
        self.pairs
            .iter()
            .filter_map(|p| p.residual)
            .fold(None, |acc, r| Some(acc.map_or(r, |m: f64| m.max(r))))
    }
}

/// Check the Boltzmann-weighted rate identity on every ordered pair.
///
/// The identity holds exactly through the definitions of `A`, `B`, and `I`;
/// the residual measures quadrature consistency. Energies enter only through
/// differences, so the check is shifted to avoid overflow at large beta.
pub fn dbe_identity_check(table: &RateTable, channels: &ChannelSet) -> IdentityReport {
    let n = table.dim();
    let beta = table.beta();
    let e_ref = (0..n)
        .map(|j| channels.energy(j))
        .fold(f64::INFINITY, f64::min);
    let mut pairs = Vec::new();
    let mut vacuous = true;
    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            let forward = table.rate(k, l) * (-beta * (channels.energy(l) - e_ref)).exp();
            let reverse = table.rate(l, k) * (-beta * (channels.energy(k) - e_ref)).exp();
            let residual = match table.i_ratio(k, l) {
                Some(i_kl) if forward > 0.0 || reverse > 0.0 => {
                    vacuous = false;
                    let rhs = reverse * i_kl;
                    Some((forward - rhs).abs() / forward.abs().max(rhs.abs()))
                }
                _ => None,
            };
            pairs.push(PairResidual { k, l, residual });
        }
    }
    IdentityReport { pairs, vacuous }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::CouplingMatrix as CM;
    use crate::model::coupling_from_sites;
    use approx::assert_relative_eq;

    fn reference_system() -> (ChannelSet, crate::channels::CouplingMatrix) {
        (
            ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap(),
            coupling_from_sites(&[1.0, 0.7, 1.5]),
        )
    }

    #[test]
    fn bath_validation() {
        assert!(ThermalBath::new(0.0).is_err());
        assert!(ThermalBath::new(-1.0).is_err());
        assert!(ThermalBath::with_density(1.0, 0.0, 1.0).is_err());
        assert!(ThermalBath::with_density(1.0, 1.0, -2.0).is_err());
    }

    #[test]
    fn zero_coupling_gives_zero_integrals() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let v = CM::zero(3);
        let bath = ThermalBath::new(2.0).unwrap();
        let spec = QuadSpec::default();
        let (a, _) = thermal_integral_a(1, 0, &bath, &ch, &v, &spec).unwrap();
        assert_eq!(a, 0.0);
        assert!(matches!(
            i_ratio(1, 0, &bath, &ch, &v, &spec),
            Err(Error::UndefinedRatio { .. })
        ));
    }

    #[test]
    fn frozen_integrals_at_unit_beta_delta_e() {
        // beta = 2 so that beta * (eps_0 - eps_-) = 1; frozen from an
        // independent adaptive integration of the same integrand
        let (ch, v) = reference_system();
        let bath = ThermalBath::new(2.0).unwrap();
        let spec = QuadSpec::default();
        let cases = [
            (1usize, 0usize, 1.834513469380e-4, 1.600161790034e-4),
            (2, 0, 4.671936972714e-5, 7.015453766172e-5),
            (2, 1, 2.039542798233e-4, 1.402508886799e-4),
            (0, 1, 4.349690716445e-4, 4.986724627879e-4),
            (0, 2, 5.183758143770e-4, 3.452120438205e-4),
            (1, 2, 3.812414421237e-4, 5.544052126802e-4),
        ];
        for (k, l, a_expect, b_expect) in cases {
            let (a, _) = thermal_integral_a(k, l, &bath, &ch, &v, &spec).unwrap();
            let (b, _) = thermal_integral_b(k, l, &bath, &ch, &v, &spec).unwrap();
            assert_relative_eq!(a, a_expect, max_relative = 1e-8);
            assert_relative_eq!(b, b_expect, max_relative = 1e-8);
        }
    }

    #[test]
    fn activation_suppression_at_large_beta() {
        let (ch, v) = reference_system();
        let spec = QuadSpec::default();
        let bath = ThermalBath::new(20.0).unwrap();
        // uphill (+ <- 0) vs downhill (0 <- +): the uphill integral carries
        // the activation factor exp(-beta (eps_+ - eps_0))
        let (up, _) = thermal_integral_a(2, 1, &bath, &ch, &v, &spec).unwrap();
        let (down, _) = thermal_integral_a(1, 2, &bath, &ch, &v, &spec).unwrap();
        let activation = (-20.0 * 0.5f64).exp();
        assert!(up < down * activation * 10.0);
        assert!(up > down * activation / 10.0);
    }

    #[test]
    fn reciprocal_and_boltzmann_identities() {
        let (ch, v) = reference_system();
        let bath = ThermalBath::new(2.0).unwrap();
        let table = rate_matrix(&bath, &ch, &v, &QuadSpec::default()).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                if k == l {
                    continue;
                }
                let i_kl = table.i_ratio(k, l).unwrap();
                let i_lk = table.i_ratio(l, k).unwrap();
                assert_relative_eq!(i_kl * i_lk, 1.0, max_relative = 1e-8);
                let lhs = table.b_integral(k, l);
                let rhs = (-2.0 * (ch.energy(k) - ch.energy(l))).exp() * table.a_integral(l, k);
                assert_relative_eq!(lhs, rhs, max_relative = 1e-8);
                assert!(table.a_integral(k, l) >= 0.0);
                assert!(table.b_integral(k, l) >= 0.0);
                assert!(i_kl > 0.0);
            }
        }
    }

    #[test]
    fn identity_check_residuals_small() {
        let (ch, v) = reference_system();
        let bath = ThermalBath::new(2.0).unwrap();
        let table = rate_matrix(&bath, &ch, &v, &QuadSpec::default()).unwrap();
        let report = dbe_identity_check(&table, &ch);
        assert!(!report.vacuous);
        assert!(report.max_residual().unwrap() <= 1e-8);
    }

    #[test]
    fn identity_check_vacuous_for_equal_strengths_offdiagonal() {
        // equal strengths: off-diagonal couplings vanish, all rates zero
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let v = coupling_from_sites(&[1.0, 1.0, 1.0]);
        let bath = ThermalBath::new(2.0).unwrap();
        let table = rate_matrix(&bath, &ch, &v, &QuadSpec::default()).unwrap();
        let report = dbe_identity_check(&table, &ch);
        assert!(report.vacuous);
        assert!(report.max_residual().is_none());
    }

    #[test]
    fn two_equal_strengths_restore_balance() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let v = coupling_from_sites(&[1.0, 0.7, 0.7]);
        let bath = ThermalBath::new(2.0).unwrap();
        let table = rate_matrix(&bath, &ch, &v, &QuadSpec::default()).unwrap();
        for k in 0..3 {
            for l in 0..3 {
                if k != l {
                    assert_relative_eq!(
                        table.b_integral(k, l),
                        table.a_integral(k, l),
                        max_relative = 1e-8
                    );
                    assert!((table.i_ratio(k, l).unwrap() - 1.0).abs() < 1e-7);
                }
            }
        }
    }

    #[test]
    fn rate_ratio_follows_identity_at_small_beta() {
        let (ch, v) = reference_system();
        let bath = ThermalBath::new(0.01).unwrap();
        let table = rate_matrix(&bath, &ch, &v, &QuadSpec::default()).unwrap();
        for (k, l) in [(1usize, 0usize), (2, 0), (2, 1)] {
            let lhs = table.rate(k, l) / table.rate(l, k);
            let rhs = table.i_ratio(k, l).unwrap() * (-0.01 * (ch.energy(k) - ch.energy(l))).exp();
            assert_relative_eq!(lhs, rhs, max_relative = 1e-7);
        }
    }

    #[test]
    fn prefactor_scales_rates_but_not_ratios() {
        let (ch, v) = reference_system();
        let plain = rate_matrix(
            &ThermalBath::new(2.0).unwrap(),
            &ch,
            &v,
            &QuadSpec::default(),
        )
        .unwrap();
        let scaled = rate_matrix(
            &ThermalBath::with_density(2.0, 2.0, 3.0).unwrap(),
            &ch,
            &v,
            &QuadSpec::default(),
        )
        .unwrap();
        assert_relative_eq!(
            scaled.rate(1, 0),
            6.0 * plain.rate(1, 0),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            scaled.i_ratio(1, 0).unwrap(),
            plain.i_ratio(1, 0).unwrap(),
            max_relative = 1e-14
        );
    }
}
