//! Files, HTTP clients, the query service and its JSON API on top of
//! [`ragkit_core`].

pub mod api;
pub mod backends;
pub mod error;
pub mod io;
pub mod service;
pub mod store;

pub use error::{Error, Result};
pub use ragkit_core as core;
