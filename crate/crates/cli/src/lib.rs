//! Command-line front end for `obtree`: argument definitions, command
//! implementations and the JSON report types they write.

pub mod args;
pub mod commands;
pub mod report;
