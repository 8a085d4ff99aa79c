pub mod ablate;
pub mod eval;
pub mod generate;
pub mod plot;
pub mod track;
pub mod train;
