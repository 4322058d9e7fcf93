//! Entropy production, its balance-violation decomposition, and the
//! persistent probability and heat currents at equilibrium.

use nalgebra::DVector;

use crate::channels::ChannelSet;
use crate::error::{Error, Result};
use crate::pauli::{gibbs_state, PauliGenerator, PopulationState};
use crate::rates::RateTable;

/// Floor for relative-residual denominators.
const RESIDUAL_FLOOR: f64 = 1e-30;

/// Strictly antisymmetric pair data: only the `row > col` triangle is
/// stored, and reading the transposed entry negates it by construction.
#[derive(Debug, Clone)]
pub struct AntisymmetricMatrix {
    n: usize,
    upper: Vec<f64>,
}

impl AntisymmetricMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            upper: vec![0.0; n * (n - 1) / 2],
        }
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(row > col && row < self.n);
        row * (row - 1) / 2 + col
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        if row > col {
            let s = self.slot(row, col);
            self.upper[s] = value;
        } else if col > row {
            let s = self.slot(col, row);
            self.upper[s] = -value;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if row == col {
            0.0
        } else if row > col {
            self.upper[self.slot(row, col)]
        } else {
            -self.upper[self.slot(col, row)]
        }
    }

    /// Stored triangle as `(row, col, value)` with `row > col`.
    pub fn stored(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (1..self.n).flat_map(move |row| (0..row).map(move |col| (row, col, self.get(row, col))))
    }

    /// Sum of the stored triangle; for pairwise heat currents this is the
    /// total exchanged with the bath.
    pub fn stored_sum(&self) -> f64 {
        self.stored().map(|(_, _, v)| v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.upper.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Probability and heat currents evaluated at thermal equilibrium.
#[derive(Debug, Clone)]
pub struct CurrentSet {
    pub probability: AntisymmetricMatrix,
    pub heat: AntisymmetricMatrix,
}

/// Probability currents `K_{jk} = a_{jk} p_k - a_{kj} p_j` at an arbitrary
/// population; exactly antisymmetric by construction.
pub fn probability_currents(p: &PopulationState, table: &RateTable) -> AntisymmetricMatrix {
    let n = table.dim();
    let mut k_mat = AntisymmetricMatrix::zeros(n);
    for j in 1..n {
        for k in 0..j {
            let value = table.rate(j, k) * p.probability(k) - table.rate(k, j) * p.probability(j);
            k_mat.set(j, k, value);
        }
    }
    k_mat
}

/// Equilibrium closed form of the probability current,
/// `K_{jk} = a_{kj} p^eq_j [I(j,k) - 1]`.
pub fn equilibrium_current_closed_form(
    table: &RateTable,
    p_eq: &PopulationState,
    j: usize,
    k: usize,
) -> Result<f64> {
    if table.rate(k, j) == 0.0 {
        return Ok(0.0);
    }
    let i_jk = table.i_ratio_required(j, k)?;
    Ok(table.rate(k, j) * p_eq.probability(j) * (i_jk - 1.0))
}

/// Pairwise equilibrium heat currents
/// `J_{ml} = -beta^{-1} a_{lm} p^eq_m [I(m,l) - 1] ln(p^eq_m / p^eq_l)`,
/// evaluated on the descending-energy orientation of each pair and stored
/// antisymmetrically. The stored-triangle sum is the total heat exchanged
/// with the bath and telescopes to zero.
pub fn heat_currents(
    table: &RateTable,
    channels: &ChannelSet,
    beta: f64,
) -> Result<AntisymmetricMatrix> {
    if (beta - table.beta()).abs() > 1e-12 * beta.abs().max(1.0) {
        return Err(Error::InvalidInput(format!(
            "beta {beta} does not match the rate table ({})",
            table.beta()
        )));
    }
    let n = table.dim();
    let p_eq = gibbs_state(beta, channels)?;
    let mut j_mat = AntisymmetricMatrix::zeros(n);
    for row in 1..n {
        for col in 0..row {
            // orient from the lower-energy level of the pair upward
            let (m, l) = if channels.energy(row) >= channels.energy(col) {
                (row, col)
            } else {
                (col, row)
            };
            if table.rate(l, m) == 0.0 {
                continue;
            }
            let i_ml = table.i_ratio_required(m, l)?;
            let log_ratio = -beta * (channels.energy(m) - channels.energy(l));
            let value = -table.rate(l, m) * p_eq.probability(m) * (i_ml - 1.0) * log_ratio / beta;
            j_mat.set(m, l, value);
        }
    }
    Ok(j_mat)
}

/// Three-level closed form of the equilibrium heat currents: the single
/// loop current times the level spacings,
/// `J = kappa (eps_m - eps_l)` on the two adjacent pairs and
/// `-kappa (eps_hi - eps_lo)` on the wrap pair carrying the return flow,
/// with `kappa = -a_{-+} p^eq_+ [I(+,-) - 1]`.
pub fn heat_currents_closed_form_3ch(
    table: &RateTable,
    channels: &ChannelSet,
    beta: f64,
) -> Result<AntisymmetricMatrix> {
    if table.dim() != 3 || channels.len() != 3 {
        return Err(Error::InvalidInput(
            "closed-form heat currents require exactly 3 channels".into(),
        ));
    }
    let sorted = channels.sorted_indices();
    let (lo, mid, hi) = (sorted[0], sorted[1], sorted[2]);
    let p_eq = gibbs_state(beta, channels)?;
    let kappa = if table.rate(lo, hi) == 0.0 {
        0.0
    } else {
        -table.rate(lo, hi) * p_eq.probability(hi) * (table.i_ratio_required(hi, lo)? - 1.0)
    };
    let mut j_mat = AntisymmetricMatrix::zeros(3);
    let gap = |a: usize, b: usize| channels.energy(a) - channels.energy(b);
    j_mat.set(mid, lo, kappa * gap(mid, lo));
    j_mat.set(hi, mid, kappa * gap(hi, mid));
    j_mat.set(hi, lo, -kappa * gap(hi, lo));
    Ok(j_mat)
}

/// Probability and heat currents at equilibrium in one shot.
pub fn equilibrium_currents(
    table: &RateTable,
    channels: &ChannelSet,
    beta: f64,
) -> Result<CurrentSet> {
    let p_eq = gibbs_state(beta, channels)?;
    Ok(CurrentSet {
        probability: probability_currents(&p_eq, table),
        heat: heat_currents(table, channels, beta)?,
    })
}

/// Entropy production `sigma = sum_k (dp/dt)_k [ln p^eq_k - ln p_k]`.
///
/// Levels with zero population contribute nothing when their flow also
/// vanishes; a zero population with nonzero flow is a genuine domain error.
pub fn entropy_production(
    p: &PopulationState,
    gen: &PauliGenerator,
    p_eq: &PopulationState,
) -> Result<f64> {
    let n = p.dim();
    if gen.dim() != n || p_eq.dim() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let flow: DVector<f64> = gen.apply(p.probabilities());
    let flow_scale = gen.max_abs();
    let mut sigma = 0.0;
    for k in 0..n {
        let pk = p.probability(k);
        let peq = p_eq.probability(k);
        if peq <= 0.0 {
            return Err(Error::DomainError(format!(
                "equilibrium population {k} is zero"
            )));
        }
        if pk <= 0.0 {
            if flow[k].abs() <= 1e-14 * flow_scale.max(1.0) {
                continue; // x ln x -> 0 continuation
            }
            return Err(Error::DomainError(format!(
                "population {k} is zero with nonzero flow {}",
                flow[k]
            )));
        }
        sigma += flow[k] * (peq.ln() - pk.ln());
    }
    Ok(sigma)
}

/// Entropy production split into the network (Schnakenberg) term and the
/// balance-violation term.
#[derive(Debug, Clone, Copy)]
pub struct EntropyReport {
    pub sigma: f64,
    pub schnakenberg_term: f64,
    pub deviation_term: f64,
}

/// Decompose the entropy production over level pairs:
///
/// ```text
/// sigma = sum_{k>j} K_{jk} ln(p_k a_{jk} / (p_j a_{kj}))
///       + sum_{k>j} K_{jk} ln I(k,j)
/// ```
///
/// The first sum is the Schnakenberg network form; the second collects the
/// deviation due to broken balance and vanishes when every `I = 1`.
pub fn entropy_decomposition(p: &PopulationState, table: &RateTable) -> Result<EntropyReport> {
    let n = table.dim();
    if p.dim() != n {
        return Err(Error::InvalidInput("dimension mismatch".into()));
    }
    let mut schnakenberg = 0.0;
    let mut deviation = 0.0;
    for k in 1..n {
        for j in 0..k {
            let down = table.rate(j, k) * p.probability(k);
            let up = table.rate(k, j) * p.probability(j);
            if down == 0.0 && up == 0.0 {
                continue;
            }
            if down == 0.0 || up == 0.0 {
                return Err(Error::DomainError(format!(
                    "one-sided flux on pair ({j},{k}): {down} vs {up}"
                )));
            }
            let current = down - up;
            schnakenberg += current * (down / up).ln();
            deviation += current * table.i_ratio_required(k, j)?.ln();
        }
    }
    Ok(EntropyReport {
        sigma: schnakenberg + deviation,
        schnakenberg_term: schnakenberg,
        deviation_term: deviation,
    })
}

/// Equilibrium value of the deviation term,
/// `sum_{k>j} a_{jk} p^eq_k [1 - I(k,j)] ln I(k,j)`, which is nonpositive
/// term by term.
pub fn equilibrium_deviation_term(table: &RateTable, p_eq: &PopulationState) -> Result<f64> {
    let n = table.dim();
    let mut total = 0.0;
    for k in 1..n {
        for j in 0..k {
            if table.rate(j, k) == 0.0 {
                continue;
            }
            let i_kj = table.i_ratio_required(k, j)?;
            total += table.rate(j, k) * p_eq.probability(k) * (1.0 - i_kj) * i_kj.ln();
        }
    }
    Ok(total)
}

/// Left/right sides of the two cross-frequency constraints that enforce
/// Gibbs stationarity on three levels when pairwise balance is broken.
#[derive(Debug, Clone, Copy)]
pub struct ThermalizationCheck {
    pub lhs_low: f64,
    pub rhs_low: f64,
    pub residual_low: f64,
    pub lhs_high: f64,
    pub rhs_high: f64,
    pub residual_high: f64,
}

impl ThermalizationCheck {
    pub fn max_residual(&self) -> f64 {
        self.residual_low.max(self.residual_high)
    }
}

/// Evaluate the stationarity constraints
///
/// ```text
/// a_{+0} [1 - I(0,+)] = a_{-0} [I(0,-) - 1]        (flow through level 0)
/// a_{0+} [1 - 1/I(0,+)] = a_{-+} [I(+,-) - 1]      (flow through level +)
/// ```
///
/// with levels identified by energy order (`-` lowest, `+` highest).
/// Residuals are relative with a small floor against vacuous pairs.
pub fn thermalization_residuals(
    table: &RateTable,
    channels: &ChannelSet,
) -> Result<ThermalizationCheck> {
    if table.dim() != 3 || channels.len() != 3 {
        return Err(Error::InvalidInput(
            "thermalization conditions are defined for exactly 3 channels".into(),
        ));
    }
    let sorted = channels.sorted_indices();
    let (lo, mid, hi) = (sorted[0], sorted[1], sorted[2]);

    let vacuous = (0..3).all(|k| (0..3).all(|l| k == l || table.rate(k, l) == 0.0));
    if vacuous {
        return Ok(ThermalizationCheck {
            lhs_low: 0.0,
            rhs_low: 0.0,
            residual_low: 0.0,
            lhs_high: 0.0,
            rhs_high: 0.0,
            residual_high: 0.0,
        });
    }

    let i_mid_hi = table.i_ratio_required(mid, hi)?;
    let i_mid_lo = table.i_ratio_required(mid, lo)?;
    let i_hi_lo = table.i_ratio_required(hi, lo)?;

    let lhs_low = table.rate(hi, mid) * (1.0 - i_mid_hi);
    let rhs_low = table.rate(lo, mid) * (i_mid_lo - 1.0);
    let lhs_high = table.rate(mid, hi) * (1.0 - 1.0 / i_mid_hi);
    let rhs_high = table.rate(lo, hi) * (i_hi_lo - 1.0);

    let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(RESIDUAL_FLOOR);
    Ok(ThermalizationCheck {
        lhs_low,
        rhs_low,
        residual_low: rel(lhs_low, rhs_low),
        lhs_high,
        rhs_high,
        residual_high: rel(lhs_high, rhs_high),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::coupling_from_sites;
    use crate::pauli::build_generator;
    use crate::quad::QuadSpec;
    use crate::rates::{rate_matrix, ThermalBath};
    use approx::assert_relative_eq;

    fn reference_table(beta: f64) -> (ChannelSet, RateTable) {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let v = coupling_from_sites(&[1.0, 0.7, 1.5]);
        let table = rate_matrix(
            &ThermalBath::new(beta).unwrap(),
            &ch,
            &v,
            &QuadSpec::default(),
        )
        .unwrap();
        (ch, table)
    }

    fn balanced_table(beta: f64) -> (ChannelSet, RateTable) {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let v = coupling_from_sites(&[1.0, 0.7, 0.7]);
        let table = rate_matrix(
            &ThermalBath::new(beta).unwrap(),
            &ch,
            &v,
            &QuadSpec::default(),
        )
        .unwrap();
        (ch, table)
    }

    #[test]
    fn antisymmetric_storage() {
        let mut m = AntisymmetricMatrix::zeros(3);
        m.set(2, 0, 1.5);
        m.set(0, 1, 2.0); // written through the sign flip
        assert_eq!(m.get(2, 0), 1.5);
        assert_eq!(m.get(0, 2), -1.5);
        assert_eq!(m.get(1, 0), -2.0);
        assert_eq!(m.get(0, 1), 2.0);
        assert_eq!(m.get(1, 1), 0.0);
    }

    #[test]
    fn equilibrium_currents_vanish_under_balance() {
        let (ch, table) = balanced_table(2.0);
        let p_eq = gibbs_state(2.0, &ch).unwrap();
        let k = probability_currents(&p_eq, &table);
        assert!(k.max_abs() < 1e-10, "max |K| = {}", k.max_abs());
        let j = heat_currents(&table, &ch, 2.0).unwrap();
        assert!(j.max_abs() < 1e-10);
    }

    #[test]
    fn reference_equilibrium_loop_current() {
        let (ch, table) = reference_table(2.0);
        let p_eq = gibbs_state(2.0, &ch).unwrap();
        let k = probability_currents(&p_eq, &table);
        // single loop: K_{+0} = K_{0-} = K_{-+}
        let loop_vals = [k.get(2, 1), k.get(1, 0), k.get(0, 2)];
        assert!(loop_vals[0].abs() > 1e-7, "currents should persist");
        for w in loop_vals.windows(2) {
            assert_relative_eq!(w[0], w[1], max_relative = 1e-8);
        }
    }

    #[test]
    fn reference_equilibrium_current_matches_closed_form() {
        let (ch, table) = reference_table(2.0);
        let p_eq = gibbs_state(2.0, &ch).unwrap();
        let k = probability_currents(&p_eq, &table);
        for j in 0..3 {
            for l in 0..3 {
                if j == l {
                    continue;
                }
                let closed = equilibrium_current_closed_form(&table, &p_eq, j, l).unwrap();
                assert_relative_eq!(k.get(j, l), closed, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn heat_general_matches_closed_form() {
        let (ch, table) = reference_table(2.0);
        let general = heat_currents(&table, &ch, 2.0).unwrap();
        let closed = heat_currents_closed_form_3ch(&table, &ch, 2.0).unwrap();
        for (row, col, value) in general.stored() {
            assert!(value.abs() > 1e-9, "heat currents should persist");
            assert_relative_eq!(value, closed.get(row, col), max_relative = 1e-6);
        }
    }

    #[test]
    fn heat_cyclic_sum_closes() {
        let (ch, table) = reference_table(2.0);
        let general = heat_currents(&table, &ch, 2.0).unwrap();
        assert!(general.stored_sum().abs() < 1e-10);
        let closed = heat_currents_closed_form_3ch(&table, &ch, 2.0).unwrap();
        assert!(closed.stored_sum().abs() < 1e-14);
    }

    #[test]
    fn entropy_zero_at_equilibrium_and_for_frozen_dynamics() {
        let (ch, table) = reference_table(2.0);
        let gen = build_generator(&table).unwrap();
        let p_eq = gibbs_state(2.0, &ch).unwrap();
        let sigma = entropy_production(&p_eq, &gen, &p_eq).unwrap();
        assert!(sigma.abs() < 1e-12, "sigma(p_eq) = {sigma}");

        let zero_gen = build_generator(
            &rate_matrix(
                &ThermalBath::new(2.0).unwrap(),
                &ch,
                &crate::channels::CouplingMatrix::zero(3),
                &QuadSpec::default(),
            )
            .unwrap(),
        )
        .unwrap();
        let p = PopulationState::new(vec![0.5, 0.3, 0.2], 0.0).unwrap();
        assert_eq!(entropy_production(&p, &zero_gen, &p_eq).unwrap(), 0.0);
    }

    #[test]
    fn decomposition_matches_direct_entropy() {
        let (ch, table) = reference_table(2.0);
        let gen = build_generator(&table).unwrap();
        let p_eq = gibbs_state(2.0, &ch).unwrap();
        for raw in [[0.98, 0.01, 0.01], [0.5, 0.3, 0.2], [0.2, 0.5, 0.3]] {
            let p = PopulationState::new(raw.to_vec(), 0.0).unwrap();
            let direct = entropy_production(&p, &gen, &p_eq).unwrap();
            let report = entropy_decomposition(&p, &table).unwrap();
            assert!(direct > 0.0);
            assert_relative_eq!(report.sigma, direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn equilibrium_decomposition_balances() {
        let (ch, table) = reference_table(2.0);
        let p_eq = gibbs_state(2.0, &ch).unwrap();
        let report = entropy_decomposition(&p_eq, &table).unwrap();
        assert!(report.deviation_term < 0.0);
        assert!(report.schnakenberg_term > 0.0);
        assert!(
            (report.schnakenberg_term + report.deviation_term).abs() < 1e-9,
            "sigma at equilibrium = {}",
            report.sigma
        );
        let closed = equilibrium_deviation_term(&table, &p_eq).unwrap();
        assert_relative_eq!(report.deviation_term, closed, max_relative = 1e-8);
    }

    #[test]
    fn balanced_table_has_no_deviation_term() {
        let (ch, table) = balanced_table(2.0);
        let p = PopulationState::new(vec![0.6, 0.25, 0.15], 0.0).unwrap();
        let report = entropy_decomposition(&p, &table).unwrap();
        assert!(report.deviation_term.abs() < 1e-7 * report.schnakenberg_term.abs());
        let _ = ch;
    }

    #[test]
    fn thermalization_conditions_hold_at_reference() {
        let (ch, table) = reference_table(2.0);
        let check = thermalization_residuals(&table, &ch).unwrap();
        assert!(check.lhs_low.abs() > 1e-9);
        assert!(check.max_residual() <= 1e-6, "residuals {check:?}");
    }

    #[test]
    fn thermalization_conditions_sensitive_to_rate_perturbation() {
        let (ch, table) = reference_table(2.0);
        let mut a = table.rate_matrix().clone();
        let mut b = nalgebra::DMatrix::zeros(3, 3);
        for k in 0..3 {
            for l in 0..3 {
                if k != l {
                    b[(k, l)] = table.b_integral(k, l);
                }
            }
        }
        a[(2, 1)] *= 1.01; // 1% perturbation of one rate
        let perturbed = RateTable::from_integrals(table.beta(), a, b, 1.0, 1.0).unwrap();
        let check = thermalization_residuals(&perturbed, &ch).unwrap();
        assert!(check.max_residual() >= 1e-3, "residuals {check:?}");
    }

    #[test]
    fn entropy_zero_population_handling() {
        let (ch, table) = reference_table(2.0);
        let gen = build_generator(&table).unwrap();
        let p_eq = gibbs_state(2.0, &ch).unwrap();
        // zero population with nonzero inflow: the log diverges
        let p = PopulationState::new(vec![0.7, 0.3, 0.0], 0.0).unwrap();
        assert!(matches!(
            entropy_production(&p, &gen, &p_eq),
            Err(Error::DomainError(_))
        ));
        // zero population with zero flow contributes nothing
        let frozen = build_generator(
            &RateTable::from_integrals(
                2.0,
                nalgebra::DMatrix::zeros(3, 3),
                nalgebra::DMatrix::zeros(3, 3),
                1.0,
                1.0,
            )
            .unwrap(),
        )
        .unwrap();
        assert_eq!(entropy_production(&p, &frozen, &p_eq).unwrap(), 0.0);
        // one-sided flux on a pair is a domain error for the decomposition
        assert!(matches!(
            entropy_decomposition(&p, &table),
            Err(Error::DomainError(_))
        ));
    }

    #[test]
    fn thermalization_vacuous_when_rates_vanish() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let v = crate::channels::CouplingMatrix::zero(3);
        let table = rate_matrix(
            &ThermalBath::new(2.0).unwrap(),
            &ch,
            &v,
            &QuadSpec::default(),
        )
        .unwrap();
        let check = thermalization_residuals(&table, &ch).unwrap();
        assert_eq!(check.max_residual(), 0.0);
        assert_eq!(check.lhs_low, 0.0);
    }
}
