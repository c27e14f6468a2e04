pub mod linalg;
pub mod data;
pub mod encoder;
pub mod analysis;
