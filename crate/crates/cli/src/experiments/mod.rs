pub mod attack;
pub mod fairfight;
pub mod lambda_sweep;
pub mod mnist;
pub mod ordinal;
pub mod scaling;
pub mod stats;
pub mod train;
