pub mod boundary_spectra;
pub mod clifford;
pub mod eigsolve;
pub mod fem2d;
pub mod geometry;
pub mod harness;
pub mod model1d;
pub mod quadrature;
pub mod radial_exact;
pub mod specfun;
