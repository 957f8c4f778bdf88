//! One module per subcommand.

pub mod eval;
pub mod fidelity;
pub mod oracle;
pub mod train;
