//! Runs a layer's units on OS threads. Units share no mutable state, so the
//! output is bit-identical to [`Sequential`](aeqsim_core::scheduler::Sequential).

use aeqsim_core::aeq::AeqError;
use aeqsim_core::conv::NoTrace;
use aeqsim_core::scheduler::{UnitExecutor, UnitJob, UnitOutput};

#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    threads: usize,
}

impl Threaded {
    pub fn new(threads: usize) -> Threaded {
        Threaded { threads: threads.max(1) }
    }

    pub fn available() -> Threaded {
        Threaded::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn threads(&self) -> usize {
        self.threads
    }
}

impl UnitExecutor for Threaded {
    fn execute(&self, jobs: &[UnitJob<'_>]) -> Vec<Result<UnitOutput, AeqError>> {
        if self.threads == 1 || jobs.len() < 2 {
            return jobs.iter().map(|j| j.run(&mut NoTrace)).collect();
        }
        let chunk = jobs.len().div_ceil(self.threads);
        std::thread::scope(|scope| {
            let handles: Vec<_> =
                jobs.chunks(chunk).map(|part| scope.spawn(move || part.iter().map(|j| j.run(&mut NoTrace)).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().expect("unit thread panicked")).collect()
        })
    }
}
