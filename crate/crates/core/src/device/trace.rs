use alloc::string::String;

use super::CoreCoord;

/// The three cooperating kernels on every core.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskKind {
    Reader = 0,
    Compute = 1,
    Writer = 2,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::Reader, TaskKind::Compute, TaskKind::Writer];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Reader => "reader",
            TaskKind::Compute => "compute",
            TaskKind::Writer => "writer",
        }
    }
}

/// A timed interval on one task of one core.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceZone {
    pub core: CoreCoord,
    pub task: TaskKind,
    pub label: String,
    pub start_cycle: u64,
    pub end_cycle: u64,
}
