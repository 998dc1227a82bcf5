//! Prints the seeded pixel permutation, one index per line.

use roa_core::mnist::{Permutation, SHIPPED_PERMUTATION_SEED};

fn main() {
    let seed = std::env::args()
        .nth(1)
        .map(|s| s.parse().expect("seed must be an integer"))
        .unwrap_or(SHIPPED_PERMUTATION_SEED);
    print!("{}", Permutation::seeded(seed).to_text());
}
