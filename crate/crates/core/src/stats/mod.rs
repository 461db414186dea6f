pub mod dist;
pub mod linalg;
