pub mod cli;
pub mod cone;
pub mod dynamics;
pub mod folding;
pub mod maps;
pub mod newton;
pub mod polynomial;
pub mod positivity;
pub mod sampler;
pub mod scalar;
pub mod simplex;
