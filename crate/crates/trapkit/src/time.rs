//! Process-wide monotonic clock anchor so the attack emulator and the
//! monitor share one time domain for delay computations.

use std::sync::OnceLock;
use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Seconds on the process-local monotonic clock.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct MonotonicSeconds(pub f64);

fn anchor() -> Instant {
    static ANCHOR: OnceLock<Instant> = OnceLock::new();
    *ANCHOR.get_or_init(Instant::now)
}

pub fn monotonic_now_s() -> MonotonicSeconds {
    MonotonicSeconds(anchor().elapsed().as_secs_f64())
}
