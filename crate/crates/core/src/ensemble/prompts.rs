//! Versioned prompt templates.
//!
//! Templates are plain text files compiled into the binary. Each file has
//! two sections separated by a line containing only `---`: the system
//! message, then the user message. `{name}` placeholders (lowercase ASCII
//! and underscores) are substituted by [`fill`]; braces that do not form
//! such a placeholder — JSON examples, mostly — pass through untouched.
//!
//! The version string participates in task input hashing, so editing any
//! template under a new version directory invalidates caches for exactly
//! the tasks whose prompts changed meaning.

use std::collections::BTreeMap;

/// Version tag of the template set below.
pub const PROMPT_VERSION: &str = "v1";

pub const SEGMENT_WORKER: &str = include_str!("../../prompts/v1/segment_worker.txt");
pub const SEGMENT_INTEGRATOR: &str = include_str!("../../prompts/v1/segment_integrator.txt");
pub const SUMMARIZE_WORKER: &str = include_str!("../../prompts/v1/summarize_worker.txt");
pub const SUMMARIZE_INTEGRATOR: &str = include_str!("../../prompts/v1/summarize_integrator.txt");
pub const EXTRACT_WORKER_STAGE1: &str = include_str!("../../prompts/v1/extract_worker_stage1.txt");
pub const EXTRACT_WORKER_STAGE2: &str = include_str!("../../prompts/v1/extract_worker_stage2.txt");
pub const EXTRACT_INTEGRATOR: &str = include_str!("../../prompts/v1/extract_integrator.txt");
pub const CLASSIFY_WORKER: &str = include_str!("../../prompts/v1/classify_worker.txt");
pub const CLASSIFY_INTEGRATOR: &str = include_str!("../../prompts/v1/classify_integrator.txt");
pub const DISAGREE_WORKER: &str = include_str!("../../prompts/v1/disagree_worker.txt");
pub const DISAGREE_INTEGRATOR: &str = include_str!("../../prompts/v1/disagree_integrator.txt");
pub const AGGREGATE_WORKER: &str = include_str!("../../prompts/v1/aggregate_worker.txt");
pub const AGGREGATE_INTEGRATOR: &str = include_str!("../../prompts/v1/aggregate_integrator.txt");
pub const REPAIR: &str = include_str!("../../prompts/v1/repair.txt");

/// Every template in the active set, in a fixed order.
pub const ALL_TEMPLATES: &[&str] = &[
    SEGMENT_WORKER,
    SEGMENT_INTEGRATOR,
    SUMMARIZE_WORKER,
    SUMMARIZE_INTEGRATOR,
    EXTRACT_WORKER_STAGE1,
    EXTRACT_WORKER_STAGE2,
    EXTRACT_INTEGRATOR,
    CLASSIFY_WORKER,
    CLASSIFY_INTEGRATOR,
    DISAGREE_WORKER,
    DISAGREE_INTEGRATOR,
    AGGREGATE_WORKER,
    AGGREGATE_INTEGRATOR,
    REPAIR,
];

/// Digest of the active template set, version tag included. Editing any
/// template text changes this, which run identity folds in so that a run
/// can never silently mix artifacts produced under different wordings.
pub fn prompts_digest() -> String {
    let mut joined = String::from(PROMPT_VERSION);
    for template in ALL_TEMPLATES {
        joined.push('\u{0}');
        joined.push_str(template);
    }
    crate::store::sha256_hex(joined.as_bytes())
}

/// A rendered system/user message pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

fn is_placeholder_name(name: &str) -> bool {
    !name.is_empty()
        && name
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b == b'_')
}

/// Substitute `{name}` placeholders in one pass. Substituted values are
/// never rescanned, so values containing braces (transcripts, JSON) cannot
/// trigger further substitution. Unknown placeholders and non-placeholder
/// braces are copied verbatim.
pub fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let map: BTreeMap<&str, &str> = vars.iter().copied().collect();
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let name = &after[..close];
            if is_placeholder_name(name) {
                if let Some(value) = map.get(name) {
                    out.push_str(value);
                    rest = &after[close + 1..];
                    continue;
                }
            }
        }
        out.push('{');
        rest = after;
    }
    out.push_str(rest);
    out
}

fn split_template(filled: &str) -> (String, String) {
    let mut system = String::new();
    let mut user = String::new();
    let mut in_user = false;
    for line in filled.lines() {
        if !in_user && line.trim() == "---" {
            in_user = true;
            continue;
        }
        let section = if in_user { &mut user } else { &mut system };
        section.push_str(line);
        section.push('\n');
    }
    if !in_user {
        // no separator: the whole template is the user message
        return (String::new(), system.trim().to_string());
    }
    (system.trim().to_string(), user.trim().to_string())
}

/// Render a template into its system/user pair.
pub fn prompt(template: &str, vars: &[(&str, &str)]) -> Prompt {
    let filled = fill(template, vars);
    let (system, user) = split_template(&filled);
    Prompt { system, user }
}

/// A fresh single-turn request that asks a backend to correct its previous
/// response: the validation problem, the response, and the full original
/// request are embedded.
pub fn repair_prompt(original: &Prompt, previous_response: &str, error: &str) -> Prompt {
    let request = format!("{}\n\n{}", original.system, original.user);
    prompt(
        REPAIR,
        &[
            ("error", error),
            ("previous", previous_response),
            ("request", request.trim()),
        ],
    )
}
