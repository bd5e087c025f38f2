pub mod approx_audit;
pub mod optimize;
pub mod variance;
pub mod zeta;
