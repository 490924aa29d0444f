// Licensed under the Apache-2.0 license.

//! Independent scenarios run side by side on worker threads.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::scenario::Scenario;
use super::{run, RunOutput, SimError};

/// Runs every scenario and returns the results in input order.
pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<RunOutput, SimError>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(scenarios.len()).max(1);
    run_batch_with(scenarios, workers)
}

pub fn run_batch_with(scenarios: &[Scenario], workers: usize) -> Vec<Result<RunOutput, SimError>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<RunOutput, SimError>>>> = scenarios.iter().map(|_| Mutex::new(None)).collect();
    thread::scope(|s| {
        for _ in 0..workers.max(1) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(sc) = scenarios.get(i) else { break };
                let result = run(sc);
                *slots[i].lock().expect("worker panicked") = Some(result);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("worker panicked").expect("every scenario runs"))
        .collect()
}
