//! Builds a reasoner-by-origin accuracy grid with two mock reasoners, each
//! faulted only on the other's code.

use std::path::Path;
use std::sync::Arc;

use reasonlab::backend::MockBackend;
use reasonlab::pipeline::{cross_matrix, fault_plan, read_dataset, NamedBackend, Strategy, StrategyKind};

fn main() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/sample.jsonl");
    let instances = read_dataset(&path).expect("dataset");
    let origins = vec!["model_a".to_string(), "model_b".to_string()];
    let backends: Vec<NamedBackend> = origins
        .iter()
        .enumerate()
        .map(|(i, me)| {
            let others: Vec<String> = origins.iter().filter(|o| *o != me).cloned().collect();
            let faults = fault_plan(&instances, &others, 0.5, i as u64);
            NamedBackend::new(me.clone(), Arc::new(MockBackend::new(faults)))
        })
        .collect();
    let strategies = [Strategy::with_defaults(StrategyKind::Cot), Strategy::with_defaults(StrategyKind::Remind)];
    let grid = cross_matrix(&instances, &origins, &strategies, &backends, 4);
    print!("{}", grid.report.matrix_csv());
    println!();
    print!("{}", grid.report.std_csv());
    println!();
    print!("{}", grid.report.heatmap_csv());
}
