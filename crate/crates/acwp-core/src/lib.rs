//! Message-oriented middleware for federated controller working positions.
//!
//! The crate is organized around a small plain-text wire protocol
//! ([`protocol`]), a deterministic broker engine ([`broker`]), a federation
//! layer that relays topics between a central broker and per-position local
//! brokers ([`federation`]), a client session core and SDK ([`client`],
//! [`net`]), and a discrete-event simulation harness with a tower demo on
//! top ([`sim`]). The `acwp` binary in this crate exposes the operator
//! surface ([`cli`]).

pub mod broker;
pub mod cli;
pub mod client;
pub mod federation;
pub mod net;
pub mod protocol;
pub mod sim;
