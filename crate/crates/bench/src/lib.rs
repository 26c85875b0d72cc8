//! Fixtures shared by the benchmarks.

use balloc_core::processes::{run, ProbeConfig};
use balloc_core::{LoadState, ProcessKind, ProcessSpec};

/// Loads after `m` two-choice balls on `n` bins, a typical mid-run state.
pub fn settled_state(n: usize, m: u64) -> LoadState {
    run(&ProcessSpec::new(ProcessKind::two_choice()), n, m, 1, &ProbeConfig::final_only())
        .expect("valid run")
        .0
}
