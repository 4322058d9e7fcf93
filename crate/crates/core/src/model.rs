//! Triangular three-dot model: flux-dependent Hamiltonian, eigenenergies,
//! and the channel-coupling matrix generated by per-site contact strengths.

use std::f64::consts::PI;

use nalgebra::{DMatrix, Matrix3};
use num_complex::Complex64;

use crate::channels::{ChannelSet, CouplingMatrix};
use crate::error::{Error, Result};

/// Single-particle hopping Hamiltonian on a flux-threaded triangle, in the
/// localized site basis. `phi = 0` gives a real symmetric hopping matrix.
pub fn hamiltonian_3qd(tau: f64, phi: f64) -> Matrix3<Complex64> {
    let phase = Complex64::from_polar(1.0, -2.0 * PI * phi / 3.0);
    let t = Complex64::new(tau, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let fwd = t * phase;
    let bwd = t * phase.conj();
    Matrix3::new(zero, fwd, bwd, bwd, zero, fwd, fwd, bwd, zero)
}

/// Level energies `-2|tau| cos(2 pi (phi + j)/3)` for `j = -1, 0, +1`,
/// returned sorted ascending. This diagonal form matches the spectrum of
/// [`hamiltonian_3qd`] under the attractive-hopping sign convention
/// (`tau <= 0` in the matrix); it depends on `|tau|` only.
pub fn eigenenergies(tau: f64, phi: f64) -> Result<[f64; 3]> {
    if tau == 0.0 {
        return Err(Error::InvalidInput(
            "tunneling amplitude must be nonzero".into(),
        ));
    }
    let mut energies = eigenenergies_by_label(tau, phi);
    energies.sort_by(f64::total_cmp);
    let min_gap = (energies[1] - energies[0]).min(energies[2] - energies[1]);
    if min_gap < 1e-9 * tau.abs() {
        return Err(Error::DegenerateSpectrum {
            energies: energies.to_vec(),
            min_gap,
        });
    }
    Ok(energies)
}

/// Same energies in label order `(-, 0, +)`, i.e. `j = (-1, 0, +1)`.
pub fn eigenenergies_by_label(tau: f64, phi: f64) -> [f64; 3] {
    let level = |j: f64| -2.0 * tau.abs() * (2.0 * PI * (phi + j) / 3.0).cos();
    [level(-1.0), level(0.0), level(1.0)]
}

/// Channel-coupling matrix for contact strengths `(V1, V2, V3)` in the
/// eigenbasis, ordered `(-, 0, +)`:
///
/// ```text
/// v_jj  = (V1 + V2 + V3)/3                         (all diagonals)
/// v_0+ = v_+- = v_-0 = (V1 + V2 w + V3 w*)/3,  w = exp(i 2 pi / 3)
/// ```
///
/// with the remaining entries fixed by Hermiticity. Equal strengths produce
/// a purely diagonal coupling, which decouples the channels.
pub fn coupling_from_sites(strengths: &[f64; 3]) -> CouplingMatrix {
    let [v1, v2, v3] = *strengths;
    let d = Complex64::new((v1 + v2 + v3) / 3.0, 0.0);
    // real/imaginary split of (V1 + V2 w + V3 w*)/3; exact zeros for equal
    // strengths instead of rounding residue from the complex phases
    let off = Complex64::new(
        (v1 - 0.5 * (v2 + v3)) / 3.0,
        3.0f64.sqrt() * 0.5 * (v2 - v3) / 3.0,
    );
    let oc = off.conj();
    let m = DMatrix::from_row_slice(3, 3, &[d, off, oc, oc, d, off, off, oc, d]);
    CouplingMatrix::new(m).expect("circulant construction is Hermitian")
}

/// Coupling matrix from explicit eigenbasis overlaps
/// `overlaps[(j, site)] = <j|chi_site>`:
///
/// ```text
/// v_{j j'} = sum_site <j|chi_site> V_site <chi_site|j'>
/// ```
///
/// The overlap matrix must be unitary within 1e-12.
pub fn general_site_coupling(
    strengths: &[f64],
    overlaps: &DMatrix<Complex64>,
) -> Result<CouplingMatrix> {
    let n = strengths.len();
    if overlaps.nrows() != n || overlaps.ncols() != n {
        return Err(Error::InvalidInput(format!(
            "overlap matrix is {}x{} for {} sites",
            overlaps.nrows(),
            overlaps.ncols(),
            n
        )));
    }
    let gram = overlaps * overlaps.adjoint();
    let mut deviation = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let expected = if i == j {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            };
            deviation = deviation.max((gram[(i, j)] - expected).norm());
        }
    }
    if deviation > 1e-12 {
        return Err(Error::NonUnitaryBasis { deviation });
    }
    let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        n,
        strengths.iter().map(|&s| Complex64::new(s, 0.0)),
    ));
    CouplingMatrix::new(overlaps * diag * overlaps.adjoint())
}

/// Fourier overlaps `<j|chi_site>` of the triangle eigenbasis, rows in label
/// order `(-, 0, +)`; this is the basis change that turns per-site strengths
/// into [`coupling_from_sites`].
pub fn triangle_overlaps() -> DMatrix<Complex64> {
    let norm = 1.0 / 3.0f64.sqrt();
    let mut m = DMatrix::zeros(3, 3);
    for (row, j) in [-1.0f64, 0.0, 1.0].iter().enumerate() {
        for site in 0..3 {
            m[(row, site)] = Complex64::from_polar(norm, -2.0 * PI * j * site as f64 / 3.0);
        }
    }
    m
}

/// Triangle model specified either by explicit level energies or by
/// tunneling and flux. Energies are kept in label order `(-, 0, +)`.
#[derive(Debug, Clone)]
pub struct TriangleModel {
    energies: [f64; 3],
    site_strengths: [f64; 3],
}

impl TriangleModel {
    /// Explicit eigenenergies in label order `(-, 0, +)`. The triple must be
    /// traceless (the hopping Hamiltonian has zero trace) and nondegenerate.
    pub fn from_energies(energies: [f64; 3], site_strengths: [f64; 3]) -> Result<Self> {
        let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
        let trace: f64 = energies.iter().sum();
        if trace.abs() > 1e-12 * scale {
            return Err(Error::InvalidInput(format!(
                "triangle level energies must sum to 0, got {trace:.3e}"
            )));
        }
        let mut sorted = energies;
        sorted.sort_by(f64::total_cmp);
        let min_gap = (sorted[1] - sorted[0]).min(sorted[2] - sorted[1]);
        if min_gap <= 1e-9 * scale {
            return Err(Error::DegenerateSpectrum {
                energies: energies.to_vec(),
                min_gap,
            });
        }
        if !site_strengths.iter().all(|s| s.is_finite()) {
            return Err(Error::InvalidInput("non-finite site strength".into()));
        }
        Ok(Self {
            energies,
            site_strengths,
        })
    }

    /// Levels derived from `(tau, phi)` via the diagonal form.
    pub fn from_flux(tau: f64, phi: f64, site_strengths: [f64; 3]) -> Result<Self> {
        eigenenergies(tau, phi)?; // degeneracy guard
        Self::from_energies(eigenenergies_by_label(tau, phi), site_strengths)
    }

    pub fn energies(&self) -> [f64; 3] {
        self.energies
    }

    pub fn site_strengths(&self) -> [f64; 3] {
        self.site_strengths
    }

    pub fn channel_set(&self) -> ChannelSet {
        ChannelSet::natural(self.energies.to_vec()).expect("validated at construction")
    }

    pub fn channel_set_with_units(&self, mass: f64, hbar: f64) -> Result<ChannelSet> {
        ChannelSet::with_units(self.energies.to_vec(), mass, hbar)
    }

    pub fn coupling(&self) -> CouplingMatrix {
        coupling_from_sites(&self.site_strengths)
    }
}
