//! Token counting used for chunk sizes and prompt budgets.

/// Pluggable token counter; the default heuristic is `ceil(utf8_bytes / 4)`.
pub trait TokenCounter: Send + Sync {
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct HeuristicCounter;

impl TokenCounter for HeuristicCounter {
    fn count(&self, text: &str) -> usize {
        count_tokens(text)
    }
}

pub fn count_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}
