//! Blocking TCP transport for the wire protocol.
//!
//! Three pieces, mirroring the sans-io cores they wrap:
//!
//! * [`serve`] runs a [`crate::broker::Broker`] behind a listener, one
//!   engine thread per server.
//! * [`LiveClient`] drives a [`crate::client::SessionState`] over a socket
//!   with a background reader and per-subscription handlers.
//! * [`run_bridge`] keeps a [`crate::federation::BridgeCore`] connected to
//!   two brokers as a relay, buffering while the far side is unreachable.

mod bridge;
mod client;
mod server;

pub use bridge::{run_bridge, BridgeError, BridgeHandle};
pub use client::{ClientConfig, LiveClient, NetError};
pub use server::{serve, ServerHandle};

/// Milliseconds since the Unix epoch; the live processes' message clock.
pub(crate) fn wall_ms() -> i64 {
    use std::time::{SystemTime, UNIX_EPOCH};
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

#[cfg(test)]
pub(crate) mod testutil {
    use std::sync::OnceLock;

    use crate::sim::components::ATS_SCHEMA;

    /// Schema file shared by the net tests' brokers; brokers validate
    /// non-relay publishes, so every test server needs real schemas.
    pub(crate) fn schema_file() -> &'static str {
        static PATH: OnceLock<String> = OnceLock::new();
        PATH.get_or_init(|| {
            let path = std::env::temp_dir().join("acwp-net-tests.schema");
            std::fs::write(&path, ATS_SCHEMA).expect("write test schema");
            path.display().to_string()
        })
    }
}
