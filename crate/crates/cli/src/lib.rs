//! Library side of the `gsd` command-line tool.

pub mod app;
pub mod fetch;

pub use app::run;
