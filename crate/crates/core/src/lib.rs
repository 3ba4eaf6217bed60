//! Popularity-based caching for network-coding-enabled Named Data Networking.
//!
//! The crate is layered bottom-up: field arithmetic ([`gf256`]), coding
//! ([`rlnc`]), the content library ([`catalog`]), the coded content store
//! ([`content_store`]), popularity bookkeeping ([`popularity`]), the content
//! store manager with its caching policies ([`csm`]), the router
//! ([`forwarder`]), traffic endpoints ([`endpoints`]), the discrete-event
//! simulator ([`simnet`]) and the experiment runner ([`experiment`]).

pub mod catalog;
pub mod content_store;
pub mod csm;
pub mod endpoints;
pub mod error;
pub mod experiment;
pub mod forwarder;
pub mod gf256;
pub mod popularity;
pub mod rlnc;
pub mod simnet;
pub mod types;

pub use error::{Error, Result};
pub use types::{FaceId, SimTime};
