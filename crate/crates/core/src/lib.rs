//! Non-perturbative scattering rates and balance diagnostics for a discrete
//! quantum system coupled to a dilute one-dimensional gas through point
//! contacts.
//!
//! The pipeline, bottom to top:
//!
//! - [`scattering`]: exact multichannel contact scattering; on-shell
//!   T elements and symmetry-defect diagnostics.
//! - [`rates`]: thermally weighted transition integrals, the rate matrix,
//!   and the pairwise balance ratio `I(k,l)`.
//! - [`pauli`]: the population rate equation built from the table;
//!   stationary states and trajectories.
//! - [`thermo`]: entropy production with its balance-violation
//!   decomposition, plus the persistent probability and heat currents that
//!   survive at equilibrium when `I != 1`.
//! - [`model`]: the flux-threaded triangle model generating the channel
//!   structure and couplings used throughout the tests.
//!
//! Everything is a pure function of its inputs and safe to call from
//! multiple threads; results do not depend on evaluation order.
//!
//! ```
//! use dbe_core::{build_generator, gibbs_state, rate_matrix, QuadSpec, ThermalBath};
//! use dbe_core::model::TriangleModel;
//!
//! let model = TriangleModel::from_energies([-0.5, 0.0, 0.5], [1.0, 0.7, 1.5])?;
//! let channels = model.channel_set();
//! let bath = ThermalBath::new(2.0)?; // beta * delta_e = 1
//! let spec = QuadSpec::with_rel_tol(1e-6);
//! let table = rate_matrix(&bath, &channels, &model.coupling(), &spec)?;
//!
//! // pairwise balance is broken...
//! let i_ground = table.i_ratio(1, 0).unwrap();
//! assert!((i_ground - 1.0).abs() > 0.1);
//!
//! // ...yet the thermal state is stationary
//! let generator = build_generator(&table)?;
//! let thermal = gibbs_state(bath.beta, &channels)?;
//! let residual = generator.apply(thermal.probabilities()).amax() / generator.max_abs();
//! assert!(residual < 1e-6);
//! # Ok::<(), dbe_core::Error>(())
//! ```

// channel-indexed loops read better than zipped iterators here
#![allow(clippy::needless_range_loop)]

pub mod channels;
pub mod error;
pub mod model;
pub mod pauli;
pub mod quad;
pub mod rates;
pub mod scattering;
pub mod thermo;

pub use channels::{ChannelSet, CouplingMatrix};
pub use error::{Error, Result};
pub use model::TriangleModel;
pub use pauli::{
    build_generator, evolve, gibbs_state, stationary_state, PauliGenerator, PopulationState,
    Trajectory,
};
pub use quad::QuadSpec;
pub use rates::{dbe_identity_check, rate_matrix, RateTable, ThermalBath};
pub use scattering::{b_factor, solve_channel_amplitudes, t_element, BFactors, ScatteringSolution};
pub use thermo::{
    entropy_decomposition, entropy_production, equilibrium_currents, heat_currents,
    probability_currents, thermalization_residuals, CurrentSet, EntropyReport,
};
