//! The problem-file parser must never panic on arbitrary bytes: it either
//! produces a validated problem or returns an error.

#![no_main]

use libfuzzer_sys::fuzz_target;
use robinsync::problem::ProblemFile;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(file) = ProblemFile::from_json(text) else {
        return;
    };
    // exercise the full validation pipeline on anything that parses
    let _ = file.to_problem(false);
    let _ = file.to_problem(true);
    if let Ok(grid) = file.grid(None) {
        let _ = file.initial_state(&grid);
        let _ = file.sim_config(&grid, None, None);
    }
    let _ = file.to_json();
});
