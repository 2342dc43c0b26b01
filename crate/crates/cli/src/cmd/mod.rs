pub mod fit;
pub mod predict;
pub mod simulate;
pub mod ssvs;
pub mod study;
