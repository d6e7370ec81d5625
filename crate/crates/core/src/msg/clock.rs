use std::sync::OnceLock;
use std::time::Instant;

static EPOCH: OnceLock<Instant> = OnceLock::new();

/// Monotonic seconds since the first call in this process.
pub fn wall_time() -> f64 {
    EPOCH.get_or_init(Instant::now).elapsed().as_secs_f64()
}
