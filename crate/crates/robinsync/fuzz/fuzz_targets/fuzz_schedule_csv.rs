//! The schedule CSV reader must never panic on arbitrary bytes.

#![no_main]

use libfuzzer_sys::fuzz_target;
use robinsync::problem::read_schedule_csv;
use robinsync::wavesim::{Grid1D, SimConfig};

fuzz_target!(|data: &[u8]| {
    let grid = Grid1D::new(16).expect("fixed grid");
    let cfg = SimConfig::new(1.0, 0.03125, &grid).expect("fixed config");
    let _ = read_schedule_csv(data, 1, &cfg);
    let _ = read_schedule_csv(data, 3, &cfg);
});
