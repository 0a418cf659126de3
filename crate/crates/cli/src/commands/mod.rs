pub mod constant;
pub mod coverage;
pub mod gen_data;
pub mod interval;
pub mod lengths;
