//! Runs the acceptance criteria and prints one PASS/FAIL line per criterion.

use semcl::acceptance;

#[test]
fn acceptance_criteria() {
    let results = acceptance::run_all();
    for r in &results {
        println!("{r}");
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
