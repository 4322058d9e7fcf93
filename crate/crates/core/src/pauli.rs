//! Population rate equation: generator assembly, stationary states, and
//! trajectories.

use nalgebra::{DMatrix, DVector};

use crate::channels::ChannelSet;
use crate::error::{Error, Result};
use crate::rates::RateTable;

/// Absolute tolerance on probability conservation along trajectories.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Most negative population admitted before clamping to zero.
pub const NEGATIVITY_TOL: f64 = -1e-14;

/// Generator of the population rate equation `dp/dt = W p`, with
/// `W[k][l] = a_{kl}` off the diagonal and column sums exactly zero.
#[derive(Debug, Clone)]
pub struct PauliGenerator {
    w: DMatrix<f64>,
}

impl PauliGenerator {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    /// Largest entry magnitude; sets the relaxation time scale.
    pub fn max_abs(&self) -> f64 {
        self.w.iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }

    /// Apply the generator to a population vector.
    pub fn apply(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.w * p
    }
}

/// Assemble the generator from a complete off-diagonal rate table.
pub fn build_generator(table: &RateTable) -> Result<PauliGenerator> {
    let n = table.dim();
    let mut w = DMatrix::zeros(n, n);
    for k in 0..n {
        for l in 0..n {
            if k == l {
                continue;
            }
            let rate = table.rate(k, l);
            if !rate.is_finite() || rate < 0.0 {
                return Err(Error::IncompleteTable { k, l });
            }
            w[(k, l)] = rate;
        }
    }
    // diagonal balances each column exactly, summed in fixed order
    for l in 0..n {
        let mut out_flow = 0.0;
        for k in 0..n {
            if k != l {
                out_flow += w[(k, l)];
            }
        }
        w[(l, l)] = -out_flow;
    }
    Ok(PauliGenerator { w })
}

/// Probability vector over the system levels at a given time.
#[derive(Debug, Clone)]
pub struct PopulationState {
    p: DVector<f64>,
    time: f64,
}

impl PopulationState {
    pub fn new(p: Vec<f64>, time: f64) -> Result<Self> {
        let v = DVector::from_vec(p);
        Self::from_vector(v, time)
    }

    pub fn from_vector(p: DVector<f64>, time: f64) -> Result<Self> {
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidInput(
                "populations must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::InvalidInput(format!(
                "populations sum to {total}, expected 1"
            )));
        }
        Ok(Self { p, time })
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            p: DVector::from_element(n, 1.0 / n as f64),
            time: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }

    pub fn probabilities(&self) -> &DVector<f64> {
        &self.p
    }

    pub fn probability(&self, k: usize) -> f64 {
        self.p[k]
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Total-variation distance `max_k |p_k - q_k| summed / 2`.
    pub fn trace_distance(&self, other: &Self) -> f64 {
        0.5 * self
            .p
            .iter()
            .zip(other.p.iter())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

/// Thermal populations `p_k = e^{-beta eps_k} / Z`, computed with the level
/// minimum shifted out so large `beta` cannot overflow.
pub fn gibbs_state(beta: f64, channels: &ChannelSet) -> Result<PopulationState> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be > 0, got {beta}")));
    }
    let e_min = channels
        .energies()
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e));
    let weights: Vec<f64> = channels
        .energies()
        .iter()
        .map(|&e| (-beta * (e - e_min)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    PopulationState::from_vector(
        DVector::from_iterator(weights.len(), weights.iter().map(|w| w / z)),
        0.0,
    )
}

/// Stationary population of an ergodic generator, via the singular vector of
/// the smallest singular value. Degenerate stationary structure is an error
/// carrying the invariant subspaces, not a silent arbitrary pick.
pub fn stationary_state(gen: &PauliGenerator) -> Result<PopulationState> {
    let n = gen.dim();
    let components = connectivity_components(gen);
    if components.len() > 1 {
        return Err(Error::NonErgodic { components });
    }

    let svd = gen.matrix().clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested right singular vectors");
    let sigma = &svd.singular_values;
    let s_max = sigma[0].max(f64::MIN_POSITIVE);
    if n >= 2 && sigma[n - 2] <= 1e-10 * s_max {
        // numerically degenerate nullspace not visible in the rate graph
        return Err(Error::NonErgodic {
            components: vec![(0..n).collect()],
        });
    }

    let mut p: Vec<f64> = v_t.row(n - 1).iter().copied().collect();
    let total: f64 = p.iter().sum();
    if total == 0.0 {
        return Err(Error::NonErgodic {
            components: vec![(0..n).collect()],
        });
    }
    for x in &mut p {
        *x /= total;
        // Perron vector is nonnegative; forgive rounding at the edge
        if *x < 0.0 {
            if *x < NEGATIVITY_TOL {
                return Err(Error::NonErgodic {
                    components: vec![(0..n).collect()],
                });
            }
            *x = 0.0;
        }
    }
    let state = PopulationState::new(p, 0.0)?;
    let residual = gen.apply(state.probabilities()).amax();
    let scale = gen.max_abs();
    if scale > 0.0 && residual > 1e-12 * scale {
        return Err(Error::NonErgodic {
            components: vec![(0..n).collect()],
        });
    }
    Ok(state)
}

fn connectivity_components(gen: &PauliGenerator) -> Vec<Vec<usize>> {
    let n = gen.dim();
    let w = gen.matrix();
    let mut seen = vec![false; n];
    let mut components = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        let mut stack = vec![start];
        let mut comp = Vec::new();
        seen[start] = true;
        while let Some(i) = stack.pop() {
            comp.push(i);
            for j in 0..n {
                if i != j && !seen[j] && (w[(i, j)] > 0.0 || w[(j, i)] > 0.0) {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
        comp.sort_unstable();
        components.push(comp);
    }
    components
}

/// Checkpointed trajectory of the population dynamics.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    clamped: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.times[i]
    }

    pub fn state(&self, i: usize) -> &DVector<f64> {
        &self.states[i]
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states
            .last()
            .expect("trajectory has the initial state")
    }

    /// Number of entries clamped from tiny negative values to zero.
    pub fn clamped_count(&self) -> usize {
        self.clamped
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &DVector<f64>)> {
        self.times.iter().copied().zip(self.states.iter())
    }
}

/// Propagate `p0` to time `t_final` through `steps` equal checkpoints using
/// the scaling-and-squaring matrix exponential of one step. Probability is
/// checked at every checkpoint and tiny negative populations are clamped.
pub fn evolve(
    p0: &PopulationState,
    gen: &PauliGenerator,
    t_final: f64,
    steps: usize,
) -> Result<Trajectory> {
    if p0.dim() != gen.dim() {
        return Err(Error::InvalidInput(format!(
            "state dimension {} vs generator {}",
            p0.dim(),
            gen.dim()
        )));
    }
    if !t_final.is_finite() || t_final < 0.0 {
        return Err(Error::InvalidInput(format!(
            "final time must be finite and >= 0, got {t_final}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidInput("need at least one step".into()));
    }

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(p0.time());
    states.push(p0.probabilities().clone());
    let mut clamped = 0usize;

    if t_final == 0.0 {
        return Ok(Trajectory {
            times,
            states,
            clamped,
        });
    }

    let dt = t_final / steps as f64;
    let propagator = (gen.matrix() * dt).exp();
    let mut current = p0.probabilities().clone();
    for i in 1..=steps {
        current = &propagator * current;
        let total: f64 = current.iter().sum();
        if (total - 1.0).abs() > PROBABILITY_TOL {
            return Err(Error::DomainError(format!(
                "probability drifted to {total} at checkpoint {i}"
            )));
        }
        for x in current.iter_mut() {
            if *x < 0.0 {
                if *x < NEGATIVITY_TOL {
                    return Err(Error::DomainError(format!(
                        "population {x} below clamping tolerance at checkpoint {i}"
                    )));
                }
                *x = 0.0;
                clamped += 1;
            }
        }
        times.push(p0.time() + dt * i as f64);
        states.push(current.clone());
    }

    Ok(Trajectory {
        times,
        states,
        clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_level_generator() -> PauliGenerator {
        // rates a_{12} = 1 (2 -> 1), a_{21} = 2 (1 -> 2)
        PauliGenerator {
            w: DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 2.0, -1.0]),
        }
    }

    #[test]
    fn generator_from_zero_rates_is_zero() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let v = crate::channels::CouplingMatrix::zero(3);
        let bath = crate::rates::ThermalBath::new(2.0).unwrap();
        let table =
            crate::rates::rate_matrix(&bath, &ch, &v, &crate::quad::QuadSpec::default()).unwrap();
        let gen = build_generator(&table).unwrap();
        assert_eq!(gen.max_abs(), 0.0);
    }

    #[test]
    fn two_level_generator_definition() {
        let gen = two_level_generator();
        let col0: f64 = gen.matrix().column(0).iter().sum();
        let col1: f64 = gen.matrix().column(1).iter().sum();
        assert_eq!(col0, 0.0);
        assert_eq!(col1, 0.0);
    }

    #[test]
    fn two_level_stationary_balance() {
        let gen = two_level_generator();
        let p = stationary_state(&gen).unwrap();
        assert_relative_eq!(p.probability(0), 1.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(p.probability(1), 2.0 / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn all_zero_rates_not_ergodic() {
        let gen = PauliGenerator {
            w: DMatrix::zeros(3, 3),
        };
        match stationary_state(&gen) {
            Err(Error::NonErgodic { components }) => assert_eq!(components.len(), 3),
            other => panic!("expected NonErgodic, got {other:?}"),
        }
    }

    #[test]
    fn block_structure_reported() {
        // levels {0,1} coupled, level 2 isolated
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 1)] = 1.0;
        w[(1, 0)] = 2.0;
        w[(0, 0)] = -2.0;
        w[(1, 1)] = -1.0;
        let gen = PauliGenerator { w };
        match stationary_state(&gen) {
            Err(Error::NonErgodic { components }) => {
                assert_eq!(components, vec![vec![0, 1], vec![2]]);
            }
            other => panic!("expected NonErgodic, got {other:?}"),
        }
    }

    #[test]
    fn gibbs_uniform_limit() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let p = gibbs_state(1e-12, &ch).unwrap();
        for k in 0..3 {
            assert_relative_eq!(p.probability(k), 1.0 / 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn gibbs_explicit_weights() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let p = gibbs_state(1.0, &ch).unwrap();
        let z = 0.5f64.exp() + 1.0 + (-0.5f64).exp();
        assert_relative_eq!(p.probability(0), 0.5f64.exp() / z, max_relative = 1e-14);
        assert_relative_eq!(p.probability(1), 1.0 / z, max_relative = 1e-14);
        assert_relative_eq!(p.probability(2), (-0.5f64).exp() / z, max_relative = 1e-14);
    }

    #[test]
    fn gibbs_ground_state_dominates_at_large_beta() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let p = gibbs_state(20.0, &ch).unwrap();
        assert!(p.probability(0) > 0.9999);
    }

    #[test]
    fn gibbs_no_overflow_at_huge_beta() {
        let ch = ChannelSet::natural(vec![-0.5, 0.0, 0.5]).unwrap();
        let p = gibbs_state(1e6, &ch).unwrap();
        assert!(p.probability(0) > 1.0 - 1e-12);
    }

    #[test]
    fn evolve_time_zero_is_identity() {
        let gen = two_level_generator();
        let p0 = PopulationState::new(vec![0.9, 0.1], 0.0).unwrap();
        let traj = evolve(&p0, &gen, 0.0, 10).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(traj.state(0), p0.probabilities());
    }

    #[test]
    fn evolve_zero_generator_is_constant() {
        let gen = PauliGenerator {
            w: DMatrix::zeros(2, 2),
        };
        let p0 = PopulationState::new(vec![0.25, 0.75], 0.0).unwrap();
        let traj = evolve(&p0, &gen, 5.0, 7).unwrap();
        for (_, state) in traj.iter() {
            assert_eq!(state, p0.probabilities());
        }
    }

    #[test]
    fn evolve_conserves_probability_and_relaxes() {
        let gen = two_level_generator();
        let p0 = PopulationState::new(vec![1.0, 0.0], 0.0).unwrap();
        let t_final = 50.0 / gen.max_abs();
        let traj = evolve(&p0, &gen, t_final, 100).unwrap();
        for (_, state) in traj.iter() {
            let total: f64 = state.iter().sum();
            assert!((total - 1.0).abs() <= PROBABILITY_TOL);
            assert!(state.iter().all(|&x| x >= 0.0));
        }
        let stationary = stationary_state(&gen).unwrap();
        let last = PopulationState::from_vector(traj.last().clone(), 0.0).unwrap();
        assert!(last.trace_distance(&stationary) < 1e-12);
    }
}
