//! File formats, remote providers, the persistent review store and the HTTP
//! service around `regrel-core`.

pub mod bpmn;
pub mod io;
pub mod judging;
pub mod remote;
pub mod runs;
pub mod service;
pub mod store;
pub mod synth;
