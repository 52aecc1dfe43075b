use std::io::Write;

use aeqsim_core::conv::{ConvTrace, TraceRow};
use aeqsim_core::scheduler::{Activation, RunTracer};

/// Streams trace rows as text. The first write error is kept and later
/// writes are skipped.
pub struct WriteTracer<W: Write> {
    out: W,
    error: Option<std::io::Error>,
}

impl<W: Write> WriteTracer<W> {
    pub fn new(out: W) -> WriteTracer<W> {
        WriteTracer { out, error: None }
    }

    pub fn line(&mut self, s: &str) {
        if self.error.is_none() {
            if let Err(e) = writeln!(self.out, "{s}") {
                self.error = Some(e);
            }
        }
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

impl<W: Write> ConvTrace for WriteTracer<W> {
    fn row(&mut self, row: &TraceRow) {
        self.line(&row.to_string());
    }
}

impl<W: Write> RunTracer for WriteTracer<W> {
    fn begin(&mut self, activation: &Activation) {
        self.line(&activation.to_string());
    }
}
