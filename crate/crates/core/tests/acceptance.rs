//! Runs without the libtest harness so the per-criterion lines always reach the output.

use std::process::ExitCode;

use layerscat::checks;

fn main() -> ExitCode {
    let threads = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(8);
    let reports = checks::full_suite(threads);
    for r in &reports {
        println!("{r}");
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    println!("acceptance: {} passed, {failed} failed", reports.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
