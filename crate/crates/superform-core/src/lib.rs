pub mod algebras;
pub mod prolong;
pub mod grassmann;
pub mod linalg;
pub mod supervector;
