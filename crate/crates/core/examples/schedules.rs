//! Log-linear learning-rate decay and the increasing deflation shift.
//!
//!     cargo run --release --example schedules

use nndeflate::deflation::{shift_at, ShiftSchedule};
use nndeflate::optimizer::LrSchedule;

fn main() {
    let total = 10_000;
    let lr = LrSchedule::from_range(1e-4, 1e-2);
    let shift = ShiftSchedule::range(1e-2, 1e2);
    println!("{:>6} {:>12} {:>12}", "n", "lr", "alpha");
    for n in [0, 1, 2500, 5000, 7500, 9999, total] {
        println!("{n:>6} {:>12.4e} {:>12.4e}", lr.lr_at(n, total), shift_at(&shift, n, total));
    }
}
