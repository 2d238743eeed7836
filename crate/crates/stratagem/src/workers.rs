//! Bounded fan-out for per-example model calls.
//!
//! Results are reassembled by input index, so output order never depends on
//! thread scheduling. With a scripted backend this keeps whole runs
//! byte-stable for any worker count. When several items fail, the error for
//! the lowest index wins, making failures reproducible too.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use crate::error::{Error, Result};

/// Applies `f` to every item with at most `workers` threads, returning
/// outputs in input order.
pub fn par_map<T, U, F>(items: &[T], workers: usize, f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(usize, &T) -> Result<U> + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, item)| f(i, item)).collect();
    }

    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<U>>>> =
        items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let out = f(i, &items[i]);
                *slots[i].lock().expect("slot lock") = Some(out);
            });
        }
    });

    let mut results = Vec::with_capacity(items.len());
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(value)) => results.push(value),
            Some(Err(e)) => return Err(e),
            None => return Err(Error::WorkerPanic),
        }
    }
    Ok(results)
}
