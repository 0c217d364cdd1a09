//! Sharp martingale inequalities on finite grids.

pub mod envelope;
pub mod ext_real;
pub mod operator;
pub mod oracle;
pub mod output;
pub mod presets;
pub mod problem;
pub mod tchakaloff;

pub use ext_real::ExtReal;
