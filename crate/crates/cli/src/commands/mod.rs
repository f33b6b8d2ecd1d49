pub mod cam;
pub mod estimate;
pub mod eval;
pub mod gen_data;
pub mod predict;
pub mod sweep;
pub mod train;
