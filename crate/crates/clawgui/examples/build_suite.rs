//! Recompute difficulty and reference solutions for a task list.
//!
//! cargo run -p clawgui --example build_suite -- data/tasks.json data/suite.json

use std::sync::Arc;

use clawgui::suite::{annotate, Suite};
use clawgui_core::simdevice::TaskSpec;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let (input, output) = match args.as_slice() {
        [_, i, o] => (i, o),
        _ => {
            eprintln!("usage: build_suite <tasks.json> <suite.json>");
            std::process::exit(1);
        }
    };
    let tasks: Vec<TaskSpec> = serde_json::from_str(&std::fs::read_to_string(input).unwrap()).unwrap();
    let registry: Arc<_> = Suite::builtin_registry();
    let annotated = annotate(&registry, &tasks).unwrap_or_else(|e| {
        eprintln!("{e}");
        std::process::exit(2);
    });
    for t in &annotated {
        println!("{:<28} d={}", t.task_id, t.difficulty.unwrap());
    }
    let mut text = serde_json::to_string_pretty(&annotated).unwrap();
    text.push('\n');
    std::fs::write(output, text).unwrap();
}
