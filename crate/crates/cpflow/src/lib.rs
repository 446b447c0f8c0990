pub mod compare;
pub mod diagram;
pub mod error;
pub mod exec;
pub mod oracle;
pub mod pareto;
pub mod series;
pub mod sim;
pub mod theory;
pub mod wick;

pub use diagram::{Scenario, Setting};
pub use error::{Error, Result};
pub use exec::Execution;
