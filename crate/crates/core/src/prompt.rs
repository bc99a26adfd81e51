//! Prompt assembly: task, retrieved service documentation, and I/O schemas
//! merged into a budgeted prompt.

use serde::{Deserialize, Serialize};

use crate::chunking::Chunk;
use crate::tokens::{HeuristicCounter, TokenCounter};

pub const DEFAULT_BUDGET: usize = 100_000;
pub const DEFAULT_TEMPLATE: &str = "cp-v1";

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("mandatory prompt sections need {needed} tokens but the budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("unknown prompt template: {0}")]
    UnknownTemplate(String),
    #[error("task text is empty")]
    EmptyTask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionTask {
    pub task_text: String,
    pub input_schema: String,
    pub output_schema: String,
    pub target_runtime_label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_text: String,
    pub user_text: String,
    pub included_chunk_ids: Vec<String>,
    pub dropped_chunk_ids: Vec<String>,
    pub token_estimate: usize,
    pub budget: usize,
}

const SYSTEM_TEXT_CP_V1: &str = "You are an expert integration engineer. You write service \
compositions: programs that call documented HTTP service endpoints to accomplish a task. \
Use only the endpoints listed in the service documentation. Read input from the input \
document and produce output matching the output schema exactly.";

struct RenderedSections {
    system: String,
    user_prefix: String,
    user_suffix: String,
    chunk_header: String,
}

fn render_sections(task: &CompositionTask, template_id: &str) -> Result<RenderedSections, PromptError> {
    if template_id != DEFAULT_TEMPLATE {
        return Err(PromptError::UnknownTemplate(template_id.to_string()));
    }
    if task.task_text.trim().is_empty() {
        return Err(PromptError::EmptyTask);
    }
    let user_prefix = format!("# Task\n{}\n\n", task.task_text);
    let chunk_header = "# Service documentation\n".to_string();
    let user_suffix = format!(
        "\n# Input schema\n{}\n\n# Output schema\n{}\n\n# Output format\nRespond with a \
         single fenced code block in {}.\n",
        task.input_schema, task.output_schema, task.target_runtime_label
    );
    Ok(RenderedSections {
        system: SYSTEM_TEXT_CP_V1.to_string(),
        user_prefix,
        user_suffix,
        chunk_header,
    })
}

pub fn assemble_prompt(
    task: &CompositionTask,
    ranked_chunks: &[Chunk],
    budget: usize,
    template_id: &str,
) -> Result<PromptBundle, PromptError> {
    assemble_prompt_with_counter(task, ranked_chunks, budget, template_id, &HeuristicCounter)
}

/// Greedy skip-don't-stop packing: chunks are considered in rank order and a
/// chunk that would push the prompt over budget is dropped, later smaller
/// chunks may still fit.
pub fn assemble_prompt_with_counter(
    task: &CompositionTask,
    ranked_chunks: &[Chunk],
    budget: usize,
    template_id: &str,
    counter: &dyn TokenCounter,
) -> Result<PromptBundle, PromptError> {
    let sections = render_sections(task, template_id)?;

    let estimate = |docs: &str| {
        counter.count(&sections.system)
            + counter.count(&format!(
                "{}{}{}{}",
                sections.user_prefix, sections.chunk_header, docs, sections.user_suffix
            ))
    };

    let mandatory = estimate("");
    if mandatory > budget {
        return Err(PromptError::BudgetExceeded {
            needed: mandatory,
            budget,
        });
    }

    let mut docs = String::new();
    let mut included = Vec::new();
    let mut dropped = Vec::new();
    for chunk in ranked_chunks {
        let candidate = format!("{docs}---\n{}\n", chunk.text);
        if estimate(&candidate) <= budget {
            docs = candidate;
            included.push(chunk.chunk_id.clone());
        } else {
            dropped.push(chunk.chunk_id.clone());
        }
    }

    let user_text = format!(
        "{}{}{}{}",
        sections.user_prefix, sections.chunk_header, docs, sections.user_suffix
    );
    let token_estimate = counter.count(&sections.system) + counter.count(&user_text);
    Ok(PromptBundle {
        system_text: sections.system,
        user_text,
        included_chunk_ids: included,
        dropped_chunk_ids: dropped,
        token_estimate,
        budget,
    })
}
