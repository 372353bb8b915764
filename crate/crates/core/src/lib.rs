pub mod data;
pub mod io_util;
pub mod metrics;
pub mod ngc;
pub mod tensor;
pub mod trainer;
