//! Acceptance checks for the pipeline. Prints one PASS or FAIL line per
//! criterion and exits non-zero when any fails.
//!
//! `cargo test -p minuteman-replay --test acceptance -- <substring>` runs the
//! matching checks only.

mod e2e;
mod extraction;
mod freeze;
mod oracle;
mod ordering;
mod resummarize;
mod trigger;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

type Check = fn() -> Result<String, String>;

fn main() {
    let checks: &[(&str, Check)] = &[
        (
            "segment extraction equals the scan oracle",
            extraction::check,
        ),
        ("vad segmentation equals the oracle partition", vad::check),
        (
            "auto trigger ranges partition the transcript",
            trigger::check,
        ),
        (
            "frozen points change only through user edits",
            freeze::check,
        ),
        (
            "re-summarization follows debounce windows",
            resummarize::check,
        ),
        ("concurrent operations converge", convergence::check),
        (
            "fast replay is deterministic and matches golden files",
            e2e::check,
        ),
        (
            "transcript order follows end time then track id",
            ordering::check,
        ),
    ];
    let filter = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    std::panic::set_hook(Box::new(|_| {}));

    let mut failed = 0;
    for (name, check) in checks {
        if filter.as_deref().is_some_and(|f| !name.contains(f)) {
            continue;
        }
        let started = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
