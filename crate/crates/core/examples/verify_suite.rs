//! Run part of the built-in verification suite from library code.
//!
//! ```text
//! cargo run --release --example verify_suite -- map. setup.
//! ```

use abduction::cli::verify::{run_suite, VerifyOptions};

fn main() {
    let mut only: Vec<String> = std::env::args().skip(1).collect();
    if only.is_empty() {
        only = vec!["map.".into(), "setup.".into(), "invariant.".into()];
    }
    let report = run_suite(&VerifyOptions { only, fault: None }, |c| {
        println!("{} {:<36} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.detail);
    });
    std::process::exit(if report.passed() { 0 } else { 1 });
}
