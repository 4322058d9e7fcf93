//! Exact multichannel scattering off a point contact in one dimension.
//!
//! With every scatterer site at the origin, the Lippmann–Schwinger equation
//! collapses to an N×N complex linear system for the contact amplitudes
//! `psi_j'`:
//!
//! ```text
//! (I + i diag(b) v) psi = e_jin / sqrt(2 pi hbar),
//! b_j = (1/2hbar) sqrt(2m / (E - eps_j)),
//! ```
//!
//! taken on the principal branch approached from the upper half-plane, so
//! open channels get a real positive `b_j` and closed channels get a purely
//! imaginary `b_j` with negative imaginary part. On-shell T elements follow
//! directly from the amplitudes and depend only on the total energy and the
//! channel pair, not on momentum signs.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::channels::{ChannelSet, CouplingMatrix};
use crate::error::{Error, Result};

/// Condition-number cap for the amplitude solve; beyond this the energy is
/// flagged as a resonance pole candidate rather than silently solved.
pub const CONDITION_CAP: f64 = 1e12;

/// Relative residual accepted for the linear solve.
pub const RESIDUAL_TOL: f64 = 1e-12;

/// Guard band around a channel threshold, relative to the energy scale.
pub fn threshold_guard(total_energy: f64, channel_energy: f64) -> f64 {
    1e-9 * 1.0f64.max(total_energy.abs()).max(channel_energy.abs())
}

/// Move an energy sitting inside a threshold guard band to just outside it,
/// preserving which side of the threshold it is on (exact hits resolve to
/// the open side). Quadrature nodes are transformed through this before
/// evaluation so that refinement toward a threshold cusp stays finite.
pub fn snap_off_threshold(total_energy: f64, channels: &ChannelSet) -> f64 {
    let mut energy = total_energy;
    for j in 0..channels.len() {
        let eps = channels.energy(j);
        let guard = threshold_guard(energy, eps);
        let gap = energy - eps;
        if gap.abs() <= guard {
            energy = if gap >= 0.0 {
                eps + 2.0 * guard
            } else {
                eps - 2.0 * guard
            };
        }
    }
    energy
}

/// Momentum factor `b_j = (1/2hbar) sqrt(2m/(E - eps_j + i0))`.
///
/// Real positive for open channels, `-i|b|` for closed ones. Fails inside the
/// threshold guard band, where the caller must drop or transform the node.
pub fn b_factor(total_energy: f64, channel_energy: f64, mass: f64, hbar: f64) -> Result<Complex64> {
    let guard = threshold_guard(total_energy, channel_energy);
    let gap = total_energy - channel_energy;
    if gap.abs() <= guard {
        return Err(Error::ThresholdProximity {
            energy: total_energy,
            channel_energy,
            guard,
        });
    }
    let magnitude = 0.5 / hbar * (2.0 * mass / gap.abs()).sqrt();
    if gap > 0.0 {
        Ok(Complex64::new(magnitude, 0.0))
    } else {
        Ok(Complex64::new(0.0, -magnitude))
    }
}

/// Per-channel momentum factors at a fixed total energy.
#[derive(Debug, Clone)]
pub struct BFactors {
    energy: f64,
    values: Vec<Complex64>,
    open: Vec<bool>,
}

impl BFactors {
    pub fn at_energy(total_energy: f64, channels: &ChannelSet) -> Result<Self> {
        let mut values = Vec::with_capacity(channels.len());
        let mut open = Vec::with_capacity(channels.len());
        for j in 0..channels.len() {
            let eps = channels.energy(j);
            values.push(b_factor(
                total_energy,
                eps,
                channels.mass(),
                channels.hbar(),
            )?);
            open.push(total_energy > eps);
        }
        Ok(Self {
            energy: total_energy,
            values,
            open,
        })
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn value(&self, j: usize) -> Complex64 {
        self.values[j]
    }

    pub fn is_open(&self, j: usize) -> bool {
        self.open[j]
    }
}

/// Contact amplitudes and the on-shell T row for one incoming channel.
#[derive(Debug, Clone)]
pub struct ScatteringSolution {
    energy: f64,
    j_in: usize,
    psi: Vec<Complex64>,
    t_row: Vec<Complex64>,
    open: Vec<bool>,
    condition: f64,
}

impl ScatteringSolution {
    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn incoming(&self) -> usize {
        self.j_in
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.psi
    }

    pub fn amplitude(&self, j: usize) -> Complex64 {
        self.psi[j]
    }

    /// `true` when the outgoing channel is open at this energy; closed-channel
    /// T elements are available but off-shell and must not enter rate
    /// integrals.
    pub fn is_open(&self, j: usize) -> bool {
        self.open[j]
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }
}

/// Solve the contact linear system for incoming channel `j_in` at total
/// energy `E` and assemble the full T row.
pub fn solve_channel_amplitudes(
    total_energy: f64,
    j_in: usize,
    coupling: &CouplingMatrix,
    channels: &ChannelSet,
) -> Result<ScatteringSolution> {
    let n = channels.len();
    if coupling.dim() != n {
        return Err(Error::InvalidInput(format!(
            "coupling is {}x{} for {} channels",
            coupling.dim(),
            coupling.dim(),
            n
        )));
    }
    if j_in >= n {
        return Err(Error::InvalidInput(format!(
            "incoming channel {j_in} out of range (n = {n})"
        )));
    }
    if total_energy <= channels.energy(j_in) {
        return Err(Error::InvalidInput(format!(
            "incoming channel {j_in} closed at E = {total_energy}"
        )));
    }

    let b = BFactors::at_energy(total_energy, channels)?;
    let hbar = channels.hbar();
    let source_norm = 1.0 / (2.0 * std::f64::consts::PI * hbar).sqrt();

    let mut system = DMatrix::<Complex64>::identity(n, n);
    for row in 0..n {
        let ib = Complex64::i() * b.value(row);
        for col in 0..n {
            system[(row, col)] += ib * coupling.get(row, col);
        }
    }

    let mut rhs = DVector::<Complex64>::zeros(n);
    rhs[j_in] = Complex64::new(source_norm, 0.0);

    let lu = system.clone().lu();
    let inverse = lu.try_inverse().ok_or(Error::SingularSystem {
        energy: total_energy,
        condition: f64::INFINITY,
    })?;
    let condition = norm_1(&system) * norm_1(&inverse);
    if !condition.is_finite() || condition > CONDITION_CAP {
        return Err(Error::SingularSystem {
            energy: total_energy,
            condition,
        });
    }

    let psi_vec = lu.solve(&rhs).ok_or(Error::SingularSystem {
        energy: total_energy,
        condition,
    })?;
    let residual = (&system * &psi_vec - &rhs).norm() / rhs.norm();
    if residual > RESIDUAL_TOL * condition.max(1.0) {
        return Err(Error::SingularSystem {
            energy: total_energy,
            condition,
        });
    }

    let psi: Vec<Complex64> = psi_vec.iter().copied().collect();
    let mass = channels.mass();
    let sq2pih = (2.0 * std::f64::consts::PI * hbar).sqrt();
    let mut t_row = Vec::with_capacity(n);
    let mut open = Vec::with_capacity(n);
    for j_out in 0..n {
        // sqrt((E - eps)/2m) on the same upper-half-plane branch as b
        let gap = total_energy - channels.energy(j_out);
        let root = if gap >= 0.0 {
            Complex64::new((gap / (2.0 * mass)).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-gap / (2.0 * mass)).sqrt())
        };
        let delta = if j_out == j_in {
            Complex64::new(1.0, 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
        let element = Complex64::i() / std::f64::consts::PI * root * (sq2pih * psi[j_out] - delta);
        if !(element.re.is_finite() && element.im.is_finite()) {
            return Err(Error::SingularSystem {
                energy: total_energy,
                condition,
            });
        }
        t_row.push(element);
        open.push(b.is_open(j_out));
    }

    Ok(ScatteringSolution {
        energy: total_energy,
        j_in,
        psi,
        t_row,
        open,
        condition,
    })
}

/// On-shell T element `<p' j_out | T | p j_in>` read off a solved system.
pub fn t_element(solution: &ScatteringSolution, j_out: usize) -> Complex64 {
    solution.t_row[j_out]
}

/// Closed-form contact amplitudes for three channels with the cyclic
/// coupling structure produced by equal-site models (all diagonal entries
/// equal, `v[(s+1)%3][s]` independent of `s`).
///
/// This is an independent algebraic route kept alongside the linear solve:
/// production code solves the system, tests cross-check against this form.
pub fn closed_form_amplitudes_3ch(
    total_energy: f64,
    j_in: usize,
    coupling: &CouplingMatrix,
    channels: &ChannelSet,
) -> Result<[Complex64; 3]> {
    if channels.len() != 3 || coupling.dim() != 3 {
        return Err(Error::InvalidInput(
            "closed-form amplitudes require exactly 3 channels".into(),
        ));
    }
    if j_in >= 3 {
        return Err(Error::InvalidInput(format!(
            "incoming channel {j_in} out of range"
        )));
    }
    if total_energy <= channels.energy(j_in) {
        return Err(Error::InvalidInput(format!(
            "incoming channel {j_in} closed at E = {total_energy}"
        )));
    }
    check_cyclic(coupling)?;

    let b = BFactors::at_energy(total_energy, channels)?;
    let s = j_in;
    let p = (s + 1) % 3;
    let m = (s + 2) % 3;
    let (b_s, b_p, b_m) = (b.value(s), b.value(p), b.value(m));
    let vd = coupling.get(s, s);
    let v_p = coupling.get(p, s);
    let v_m = coupling.get(m, s);
    let i = Complex64::i();

    let head = -i * (-i + b_m * vd) * (-i + b_p * vd) + i * b_m * b_p * v_m * v_p;
    let inv_norm = head
        + b_s
            * (-i * (b_m + b_p) * vd * vd
                + b_m * b_p * vd * vd * vd
                + b_m * b_p * v_m * v_m * v_m
                + i * (b_m + b_p) * v_m * v_p
                + b_m * b_p * v_p * v_p * v_p
                - vd * (Complex64::new(1.0, 0.0) + 3.0 * b_m * b_p * v_m * v_p));
    if inv_norm.norm() <= 1e-12 {
        return Err(Error::ResonancePole {
            energy: total_energy,
            inv_norm_magnitude: inv_norm.norm(),
        });
    }
    let norm = inv_norm.inv();
    let source_norm = 1.0 / (2.0 * std::f64::consts::PI * channels.hbar()).sqrt();

    let mut out = [Complex64::new(0.0, 0.0); 3];
    out[s] = norm * head * source_norm;
    out[p] = norm * (b_p * (v_p - i * b_m * (v_m * v_m - vd * v_p))) * source_norm;
    out[m] = norm * (b_m * (v_m - i * b_p * (v_p * v_p - vd * v_m))) * source_norm;
    Ok(out)
}

fn check_cyclic(coupling: &CouplingMatrix) -> Result<()> {
    let scale = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .fold(1.0f64, |acc, (i, j)| acc.max(coupling.get(i, j).norm()));
    let tol = 1e-12 * scale;
    let d = coupling.get(0, 0);
    let w = coupling.get(1, 0);
    let cyclic = (coupling.get(1, 1) - d).norm() <= tol
        && (coupling.get(2, 2) - d).norm() <= tol
        && (coupling.get(2, 1) - w).norm() <= tol
        && (coupling.get(0, 2) - w).norm() <= tol;
    if cyclic {
        Ok(())
    } else {
        Err(Error::InvalidInput(
            "coupling lacks the cyclic structure assumed by the closed form".into(),
        ))
    }
}

/// `<p' j_out|T|p j_in> - conj(<p j_in|T|p' j_out>)`; nonzero beyond first
/// order in the coupling for generic contact strengths.
pub fn hermiticity_defect(
    total_energy: f64,
    j_out: usize,
    j_in: usize,
    coupling: &CouplingMatrix,
    channels: &ChannelSet,
) -> Result<Complex64> {
    let (forward, reverse) = t_pair(total_energy, j_out, j_in, coupling, channels)?;
    Ok(forward - reverse.conj())
}

/// `<p' j_out|T|p j_in> - <p j_in|T|p' j_out>`; probes reciprocity.
pub fn symmetry_defect(
    total_energy: f64,
    j_out: usize,
    j_in: usize,
    coupling: &CouplingMatrix,
    channels: &ChannelSet,
) -> Result<Complex64> {
    let (forward, reverse) = t_pair(total_energy, j_out, j_in, coupling, channels)?;
    Ok(forward - reverse)
}

/// `|<p' j_out|T|p j_in>|^2 - |<p j_in|T|p' j_out>|^2`; the on-shell
/// time-reversal (with parity) diagnostic that feeds detailed balance.
pub fn time_reversal_defect(
    total_energy: f64,
    j_out: usize,
    j_in: usize,
    coupling: &CouplingMatrix,
    channels: &ChannelSet,
) -> Result<f64> {
    let (forward, reverse) = t_pair(total_energy, j_out, j_in, coupling, channels)?;
    Ok(forward.norm_sqr() - reverse.norm_sqr())
}

fn t_pair(
    total_energy: f64,
    j_out: usize,
    j_in: usize,
    coupling: &CouplingMatrix,
    channels: &ChannelSet,
) -> Result<(Complex64, Complex64)> {
    if j_out == j_in {
        return Err(Error::InvalidInput(
            "defects are defined for distinct channel pairs".into(),
        ));
    }
    for j in [j_out, j_in] {
        if total_energy <= channels.energy(j) {
            return Err(Error::InvalidInput(format!(
                "channel {j} closed at E = {total_energy}; defects need both channels open"
            )));
        }
    }
    let forward = t_element(
        &solve_channel_amplitudes(total_energy, j_in, coupling, channels)?,
        j_out,
    );
    let reverse = t_element(
        &solve_channel_amplitudes(total_energy, j_out, coupling, channels)?,
        j_in,
    );
    Ok((forward, reverse))
}

fn norm_1(m: &DMatrix<Complex64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}
