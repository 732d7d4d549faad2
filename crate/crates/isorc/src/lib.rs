pub mod harness;
pub mod homotopy;
pub mod io;
pub mod lattice;
pub mod loops;
pub mod rcm;
pub mod rng;
pub mod sixvertex;
pub mod transform;
