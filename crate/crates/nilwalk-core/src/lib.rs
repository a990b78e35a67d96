//! Exact arithmetic and simulation tools for affine random walks on compact
//! nilmanifolds: group schemas in second-kind coordinates, automorphisms and
//! affine maps, walk ensembles, equidistribution observables, and the
//! Cauchy–Schwarz reduction pipeline used to hunt obstruction characters.

pub mod affine;
pub mod appendix;
pub mod element;
pub mod estimators;
pub mod matrix;
pub mod observables;
pub mod reduction;
pub mod rng;
pub mod schema;
pub mod walk;
