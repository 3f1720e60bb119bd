pub mod diagnose;
pub mod predict;
pub mod simulate;
