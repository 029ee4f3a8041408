//! Prompt templates for the two compile stages and their repair re-asks.

pub const TASK_DECOMPOSITION: &str = include_str!("../../templates/task_decomposition.txt");
pub const RULE_GENERATION: &str = include_str!("../../templates/rule_generation.txt");
pub const REVISION: &str = include_str!("../../templates/revision.txt");

/// Replaces `{key}` for each pair. Placeholders not listed are left as-is,
/// which keeps the literal `{i}`-style slots of the block templates intact.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    'outer: while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        for (key, value) in values {
            let slot = format!("{{{key}}}");
            if tail.starts_with(&slot) {
                out.push_str(value);
                rest = &tail[slot.len()..];
                continue 'outer;
            }
        }
        out.push('{');
        rest = &tail[1..];
    }
    out.push_str(rest);
    out
}

pub fn task_decomposition(domain_doc: &str, user_prompt: &str) -> String {
    render(
        TASK_DECOMPOSITION,
        &[("domain_doc", domain_doc), ("_user_prompt", user_prompt)],
    )
}

pub fn rule_generation(domain_knowledge: &str, domain_question: &str, chain_of_thought: &str) -> String {
    render(
        RULE_GENERATION,
        &[
            ("domain_knowledge", domain_knowledge),
            ("domain_question", domain_question),
            ("chain_of_thought", chain_of_thought),
        ],
    )
}

pub fn revision(explanation: &str, suggestion: &str, program: &str) -> String {
    render(
        REVISION,
        &[
            ("explanation", explanation),
            ("suggestion", suggestion),
            ("program", program),
        ],
    )
}

/// Follow-up sent after a reply failed validation: the original prompt, the
/// reply, and the problems to fix.
pub fn repair(original: &str, reply: &str, problems: &[String]) -> String {
    let mut out = String::from(original);
    out.push_str("\n\n# Previous Reply\n");
    out.push_str(reply.trim_end());
    out.push_str("\n\n# Problems Found\n");
    for p in problems {
        out.push_str("- ");
        out.push_str(p);
        out.push('\n');
    }
    out.push_str("Reply again in the required format with every problem above fixed.\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_leaves_unknown_slots() {
        assert_eq!(render("a {x} {i} {x}", &[("x", "1")]), "a 1 {i} 1");
        assert_eq!(render("{", &[]), "{");
    }

    #[test]
    fn values_are_not_rescanned() {
        assert_eq!(render("{a}{b}", &[("a", "{b}"), ("b", "2")]), "{b}2");
    }
}
