//! Channel bookkeeping: system eigenlevels and the channel-coupling matrix.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative tolerance used for Hermiticity validation of couplings.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// System eigenlevels viewed as scattering channels: the gas particle with
/// total energy `E` scatters freely in channel `j` whenever `E > eps_j`.
///
/// Energies are stored in label order; the label at position `j` names the
/// eigenstate, not its energy rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    energies: Vec<f64>,
    labels: Vec<String>,
    mass: f64,
    hbar: f64,
}

impl ChannelSet {
    pub fn new(energies: Vec<f64>, labels: Vec<String>, mass: f64, hbar: f64) -> Result<Self> {
        if energies.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 channels, got {}",
                energies.len()
            )));
        }
        if labels.len() != energies.len() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} channels",
                labels.len(),
                energies.len()
            )));
        }
        if !energies.iter().all(|e| e.is_finite()) {
            return Err(Error::InvalidInput("non-finite channel energy".into()));
        }
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::InvalidInput(format!("mass must be > 0, got {mass}")));
        }
        if !(hbar > 0.0 && hbar.is_finite()) {
            return Err(Error::InvalidInput(format!("hbar must be > 0, got {hbar}")));
        }
        let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        for i in 0..energies.len() {
            for j in (i + 1)..energies.len() {
                if (energies[i] - energies[j]).abs() <= 1e-12 * scale {
                    return Err(Error::InvalidInput(format!(
                        "degenerate channels {i} and {j}: {} vs {}",
                        energies[i], energies[j]
                    )));
                }
            }
        }
        Ok(Self {
            energies,
            labels,
            mass,
            hbar,
        })
    }

    /// Natural units (m = hbar = 1) with default labels: `-`, `0`, `+` for
    /// three channels, index strings otherwise.
    pub fn natural(energies: Vec<f64>) -> Result<Self> {
        let labels = default_labels(energies.len());
        Self::new(energies, labels, 1.0, 1.0)
    }

    pub fn with_units(energies: Vec<f64>, mass: f64, hbar: f64) -> Result<Self> {
        let labels = default_labels(energies.len());
        Self::new(energies, labels, mass, hbar)
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn energy(&self, j: usize) -> f64 {
        self.energies[j]
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn label(&self, j: usize) -> &str {
        &self.labels[j]
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Scale used for threshold guards and degeneracy checks; never below 1.
    pub fn energy_scale(&self) -> f64 {
        self.energies.iter().fold(1.0f64, |m, e| m.max(e.abs()))
    }

    /// Channel indices sorted by increasing energy.
    pub fn sorted_indices(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.energies.len()).collect();
        idx.sort_by(|&a, &b| self.energies[a].total_cmp(&self.energies[b]));
        idx
    }

    pub fn min_gap(&self) -> f64 {
        let sorted = self.sorted_indices();
        sorted
            .windows(2)
            .map(|w| self.energies[w[1]] - self.energies[w[0]])
            .fold(f64::INFINITY, f64::min)
    }
}

fn default_labels(n: usize) -> Vec<String> {
    if n == 3 {
        vec!["-".into(), "0".into(), "+".into()]
    } else {
        (0..n).map(|i| i.to_string()).collect()
    }
}

/// Hermitian channel-coupling matrix `v_{j'j}` in energy units.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingMatrix {
    v: DMatrix<Complex64>,
}

impl CouplingMatrix {
    /// Validates squareness and Hermiticity (relative tolerance 1e-12).
    pub fn new(v: DMatrix<Complex64>) -> Result<Self> {
        if v.nrows() != v.ncols() || v.nrows() == 0 {
            return Err(Error::InvalidInput(format!(
                "coupling matrix must be square, got {}x{}",
                v.nrows(),
                v.ncols()
            )));
        }
        let scale = v.iter().fold(1.0f64, |m, z| m.max(z.norm()));
        let mut max_dev = 0.0f64;
        for i in 0..v.nrows() {
            for j in 0..v.ncols() {
                max_dev = max_dev.max((v[(i, j)] - v[(j, i)].conj()).norm());
            }
        }
        if max_dev > HERMITICITY_TOL * scale {
            return Err(Error::InvalidInput(format!(
                "coupling matrix not Hermitian: max deviation {max_dev:.3e} (scale {scale:.3e})"
            )));
        }
        Ok(Self { v })
    }

    pub fn zero(n: usize) -> Self {
        Self {
            v: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.v[(row, col)]
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.v
    }

    /// All couplings multiplied by `lambda`; used for weak-coupling scans.
    pub fn scaled(&self, lambda: f64) -> Self {
        Self {
            v: self.v.map(|z| z * lambda),
        }
    }
}
