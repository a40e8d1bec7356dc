//! JSON-lines run log and the data-access audit trail.

use std::io::Write;
use std::path::Path;

use crate::error::Result;

/// What a data read was for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Training,
    Evaluation,
}

/// One recorded access to a task's data.
#[derive(Debug, Clone, Copy)]
pub struct AccessEvent {
    pub phase: Phase,
    /// Task currently being trained (0 before any task starts).
    pub current_task: usize,
    pub accessed_task: usize,
    pub split: &'static str,
}

/// Streaming JSONL event sink plus in-memory audit counters.
pub struct RunLog {
    sink: Option<std::io::BufWriter<std::fs::File>>,
    pub access_events: Vec<AccessEvent>,
    pub truncations: usize,
    /// Emit a line per optimization step, not just per epoch.
    pub verbose: bool,
}

impl RunLog {
    pub fn in_memory() -> RunLog {
        RunLog {
            sink: None,
            access_events: Vec::new(),
            truncations: 0,
            verbose: false,
        }
    }

    pub fn to_file(path: &Path) -> Result<RunLog> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        Ok(RunLog {
            sink: Some(std::io::BufWriter::new(std::fs::File::create(path)?)),
            access_events: Vec::new(),
            truncations: 0,
            verbose: false,
        })
    }

    /// Append one JSON event line.
    pub fn event(&mut self, value: serde_json::Value) {
        if let Some(sink) = &mut self.sink {
            let _ = writeln!(sink, "{value}");
        }
    }

    pub fn record_access(&mut self, event: AccessEvent) {
        self.access_events.push(event);
    }

    /// Training-phase reads that touched a task other than the one being
    /// trained. Empty for a rehearsal-free run.
    pub fn foreign_training_reads(&self) -> Vec<AccessEvent> {
        self.access_events
            .iter()
            .filter(|e| e.phase == Phase::Training && e.accessed_task != e.current_task)
            .copied()
            .collect()
    }

    pub fn flush(&mut self) {
        if let Some(sink) = &mut self.sink {
            let _ = sink.flush();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn audit_flags_foreign_training_reads() {
        let mut log = RunLog::in_memory();
        log.record_access(AccessEvent {
            phase: Phase::Training,
            current_task: 2,
            accessed_task: 2,
            split: "train",
        });
        log.record_access(AccessEvent {
            phase: Phase::Evaluation,
            current_task: 2,
            accessed_task: 1,
            split: "test",
        });
        assert!(log.foreign_training_reads().is_empty());

        log.record_access(AccessEvent {
            phase: Phase::Training,
            current_task: 2,
            accessed_task: 1,
            split: "train",
        });
        assert_eq!(log.foreign_training_reads().len(), 1);
    }
}
