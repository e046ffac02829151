//! Electrostatic simulation of rf ion traps with integrated dielectric cavity mirrors.
//!
//! The crate is organized as a pipeline: parametric trap geometries ([`assembly`])
//! are voxelized onto a uniform grid ([`material`]), the generalized Poisson
//! equation is solved by a finite-volume iterative solver ([`solver`]), and the
//! resulting fields are reduced to trap observables — pseudopotential maps,
//! rf-null positions, trap depths, secular frequencies and anharmonicity
//! coefficients ([`analysis`]). The [`runner`] module wires everything into
//! configurable studies with CSV/JSON output.

pub mod analysis;
pub mod assembly;
pub mod consts;
pub mod csg;
pub mod domain;
pub mod dump;
pub mod grid;
pub mod hashing;
pub mod material;
pub mod polyfit;
pub mod runner;
pub mod scalar;
pub mod solver;
pub mod vec3;

pub use analysis::{IonSpecies, PseudoMap, TrapReport};
pub use assembly::{
    build_blade_trap, build_endcap_trap, build_stylus_trap, build_surface_trap, build_wafer_trap,
    scale_assembly, DielectricBody, Electrode, ElectrodeRole, MirrorPairSpec, TrapAssembly,
};
pub use csg::CsgShape;
pub use grid::Grid3D;
pub use material::{rasterize, DirichletMask, MaterialMap};
pub use solver::{assemble, solve, FieldSolution, SolveMode, SolveSpec};
