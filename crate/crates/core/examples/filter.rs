//! Filters the bundled raw dataset and shows the drop log.

use std::path::Path;

use reasonlab::lang::DEFAULT_STEP_BUDGET;
use reasonlab::pipeline::{dataset_origins, filter_benchmark, read_dataset};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/raw.jsonl");
    let raw = read_dataset(&path).expect("dataset");
    let origins = dataset_origins(&raw);
    let (kept, drops) = filter_benchmark(&raw, &origins, DEFAULT_STEP_BUDGET);
    println!("origins: {}", origins.join(", "));
    println!("retained {}/{}", kept.len(), raw.len());
    for d in drops {
        println!("  drop {} ({}) {:?}: {}", d.instance, d.origin.unwrap_or_default(), d.reason, d.detail);
    }
    let (again, more) = filter_benchmark(&kept, &origins, DEFAULT_STEP_BUDGET);
    println!("second pass retains {}/{} with {} drops", again.len(), kept.len(), more.len());
}
