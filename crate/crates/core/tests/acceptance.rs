//! Runs every acceptance criterion and prints one pass/fail line each.
//! Tolerances are pinned in `infinifree::verify`.

use infinifree::verify::{run, Budget};

#[test]
fn acceptance() {
    let budget = Budget::default();
    let mut failed = vec![];
    for id in 1..=11 {
        let c = run(id, budget);
        println!("{c}");
        if !c.pass {
            failed.push(id);
        }
    }
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
