//! One module per subcommand.

pub mod evaluate;
pub mod forecast;
pub mod simulate;
pub mod train;
pub mod tune;
