//! Finite-memory transfer operators on a quantized increment alphabet.

mod alphabet;
mod matrix;
mod potential;
mod rpf;
mod spectral;
mod symmetry;

pub use alphabet::{quantize_alphabet, quantize_alphabet_with, QuantizedAlphabet, DEFAULT_MAX_TRUNCATED_MASS};
pub use matrix::{build_transfer, TransferMatrix};
pub use potential::{
    contraction_constants, memory_truncation_error, project_potential, ContractionConstants, MemoryPotential,
    PotentialConfig,
};
pub use rpf::{rpf_convergence_probe, rpf_solve, rpf_solve_from, RpfData, RpfSummary};
pub use spectral::{
    ak_project, contraction_check, displacement_sigma_squared, inner, mixing_decay, sigma_squared,
    verify_kernel_bounds, AkOperator, ContractionCheck, KernelBounds, MixingDecay, SeriesConfig, SigmaSquared,
};
pub use symmetry::{canonicalize, orbit_size, pack, SignedPerm, StateSpace, Symmetry, WordKey};
