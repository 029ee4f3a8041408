use std::path::PathBuf;

use scidc_core::compiler::{
    self, apply_expert_feedback, compile, decompose_task, explain_program, generate_rule_program,
    prompts, CompilerError, CotFramework, FixtureGllm, FrameworkError, KnowledgeDoc, RecordingGllm,
    ScriptedGllm, StepRole, Turn, VerificationTranscript,
};
use scidc_core::ir::{lint_program, parse_program, serialize_program, Options, RuleProgram, StepKind};

const TASK: &str = "stage thyroid cancer records";
const INSERT_SUGGESTION: &str = "offer metastasis-presence options before choosing M stage";
const DELETE_SUGGESTION: &str = "the M category is not needed, remove it";

fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/compiler")
}

fn read(rel: &str) -> String {
    std::fs::read_to_string(fixture_dir().join(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

fn doc() -> KnowledgeDoc {
    KnowledgeDoc::new(include_str!("../data/tnm_thyroid.md"), "tnm_thyroid.md").unwrap()
}

fn replay() -> FixtureGllm {
    FixtureGllm::new(fixture_dir())
}

fn select_options(program: &RuleProgram, name: &str) -> Vec<String> {
    match &program.find(name).expect("step exists").kind {
        StepKind::Select(Options::Static(o)) => o.clone(),
        StepKind::Select(Options::Dynamic(d)) => d.all_lists().flatten().cloned().collect(),
        k => panic!("{name} is a {} step", k.keyword()),
    }
}

fn suggest(program: &RuleProgram, text: &str) -> VerificationTranscript {
    let mut t = VerificationTranscript::start(program);
    t.push(Turn::ExpertSuggestion(text.into())).unwrap();
    t
}

/// Regenerates the fixture files and golden outputs from the hand-written
/// replies in `fixtures/compiler/replies/`. Run with `--ignored` after
/// changing a prompt template.
#[test]
#[ignore]
fn record_fixtures() {
    let dir = fixture_dir();
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            std::fs::remove_file(path).unwrap();
        }
    }
    let golden = dir.join("golden");
    let write = |name: &str, text: &str| std::fs::write(golden.join(name), text).unwrap();

    let scripted = ScriptedGllm::new([read("replies/tnm_framework.md"), read("replies/tnm_program.md")]);
    let mut rec = RecordingGllm::new(scripted, &dir, "tnm pipeline");
    let compiled = compile(&doc(), TASK, &mut rec).unwrap();
    let prompts_sent = rec.into_inner().prompts;
    write("task_decomposition_prompt.txt", &prompts_sent[0]);
    write("rule_generation_prompt.txt", &prompts_sent[1]);
    write("tnm_framework.md", &compiled.framework.render());
    write("tnm_program.ir", &serialize_program(&compiled.program));
    write("tnm_explanation.txt", &explain_program(&compiled.program));

    let program = compiled.program;
    let mut rec = RecordingGllm::new(
        ScriptedGllm::new([read("replies/tnm_revision_insert.md")]),
        &dir,
        "tnm revision: insert metastasis options",
    );
    let revised = apply_expert_feedback(&program, &suggest(&program, INSERT_SUGGESTION), &mut rec).unwrap();
    write("tnm_revised.ir", &serialize_program(&revised));

    let mut rec = RecordingGllm::new(
        ScriptedGllm::new([read("replies/tnm_revision_delete.md")]),
        &dir,
        "tnm revision: delete M category",
    );
    assert!(apply_expert_feedback(&program, &suggest(&program, DELETE_SUGGESTION), &mut rec).is_err());
}

#[test]
fn fixtures_reproduce_both_stages() {
    let compiled = compile(&doc(), TASK, &mut replay()).unwrap();
    assert_eq!(compiled.framework.render(), read("golden/tnm_framework.md"));
    assert_eq!(serialize_program(&compiled.program), read("golden/tnm_program.ir"));

    let fw = &compiled.framework;
    let role_of = |v: &str| fw.steps.iter().find(|s| s.variable == v).map(|s| s.role);
    assert_eq!(role_of("VAR_TumorSize"), Some(StepRole::Extract));
    assert_eq!(role_of("MID_Tcategory"), Some(StepRole::Judge));
    assert_eq!(role_of("ANS_TNM"), Some(StepRole::Conclude));
    assert!(fw.validate().is_empty());
}

#[test]
fn compiled_program_is_lint_clean_with_tnm_domains() {
    let program = compile(&doc(), TASK, &mut replay()).unwrap().program;
    let errors: Vec<_> = lint_program(&program).into_iter().filter(|f| f.is_error()).collect();
    assert!(errors.is_empty(), "{errors:?}");
    let t = select_options(&program, "t_stage");
    for c in ["T1a", "T1b", "T2", "T3a", "T3b", "T4a", "T4b"] {
        assert!(t.iter().any(|o| o == c), "{c}");
    }
    assert_eq!(select_options(&program, "n_stage").len(), 3);
    assert_eq!(select_options(&program, "m_stage").len(), 2);
    assert_eq!(program.meta("source"), Some("tnm_thyroid.md"));
    assert_eq!(program.meta("compiled_by"), Some(compiler::COMPILED_BY));
}

#[test]
fn offline_pipeline_is_byte_deterministic() {
    let a = compile(&doc(), TASK, &mut replay()).unwrap();
    let b = compile(&doc(), TASK, &mut replay()).unwrap();
    assert_eq!(a.framework.render(), b.framework.render());
    assert_eq!(serialize_program(&a.program), serialize_program(&b.program));
}

#[test]
fn rendered_prompts_match_golden_files() {
    let p1 = prompts::task_decomposition(&doc().text, TASK);
    assert_eq!(p1, read("golden/task_decomposition_prompt.txt"));
    for skeleton in [
        "# Role Definition",
        "You are an expert in reasoning framework design.",
        "Type 1 · Information Extraction Step (Extract)",
        "Type 2 · Intermediate Judgment Step (Judge)",
        "Type 3 · Final Conclusion Step (Conclude)",
        "## Reasoning Framework",
    ] {
        assert!(p1.contains(skeleton), "{skeleton}");
    }
    let fw = CotFramework::parse(&read("golden/tnm_framework.md")).unwrap();
    let p2 = prompts::rule_generation(&doc().text, TASK, &fw.render());
    assert_eq!(p2, read("golden/rule_generation_prompt.txt"));
    for skeleton in [
        "# Role Definition",
        "Block Type 1 · Reasoning Step (Step Block)",
        "Block Type 2 · Dynamic Dependency Block",
        "Block Type 3 · Cyclic Validation Block",
        "MAX_RETRIES = 5",
        "scidc-ir v1",
    ] {
        assert!(p2.contains(skeleton), "{skeleton}");
    }
}

const GOOD_FRAMEWORK: &str = "## Problem Class Understanding\nx\n## Reasoning Framework\n\
Step 1: [Extract] Variable: VAR_A\nMeaning: a\n\
Step 2: [Conclude] Final Answer: ANS_B\nSynthesis Logic: from VAR_A\nDepends On: VAR_A\n";

#[test]
fn missing_conclude_is_repaired_once() {
    let broken = GOOD_FRAMEWORK.split("Step 2").next().unwrap().to_string();
    let mut g = ScriptedGllm::new([broken.clone(), GOOD_FRAMEWORK.to_string()]);
    let fw = decompose_task(&doc(), TASK, &mut g).unwrap();
    assert_eq!(fw.conclusion().unwrap().variable, "ANS_B");
    assert_eq!(g.prompts.len(), 2);
    assert!(g.prompts[1].contains("framework has no Conclude step"));

    let mut g = ScriptedGllm::new([broken.clone(), broken]);
    assert_eq!(
        decompose_task(&doc(), TASK, &mut g),
        Err(CompilerError::MalformedFrameworkReply(FrameworkError::MissingConclude))
    );
}

#[test]
fn empty_inputs_fail_before_any_call() {
    let mut g = ScriptedGllm::new(Vec::<String>::new());
    let empty = KnowledgeDoc {
        text: String::new(),
        provenance: "x".into(),
    };
    assert_eq!(decompose_task(&empty, TASK, &mut g), Err(CompilerError::EmptyDocument));
    assert_eq!(decompose_task(&doc(), " ", &mut g), Err(CompilerError::EmptyTask));
    assert!(g.prompts.is_empty());
}

#[test]
fn validate_without_budget_triggers_repair() {
    let fw = CotFramework::parse(GOOD_FRAMEWORK).unwrap();
    let body = "scidc-ir v1\nprogram p\nstep a: gen regex=r\"\\d\" max_tokens=1\n\
                step v: validate pred=a < 5 anchor=a fallback { a = 1; }\n";
    let fixed = body.replace("anchor=a", "max_retries=5 anchor=a");
    let mut g = ScriptedGllm::new([body.to_string(), fixed]);
    let program = generate_rule_program(&doc(), TASK, &fw, &mut g).unwrap();
    assert!(g.prompts[1].contains("validate requires max_retries"));
    match &program.find("v").unwrap().kind {
        StepKind::Validate(v) => assert_eq!(v.max_retries, Some(5)),
        _ => unreachable!(),
    }
}

#[test]
fn lookahead_surfaces_unsupported_feature() {
    let fw = CotFramework::parse(GOOD_FRAMEWORK).unwrap();
    let body = "scidc-ir v1\nprogram p\nstep a: gen regex=r\"(?=x)x\" max_tokens=1\n";
    let mut g = ScriptedGllm::new([body, body]);
    match generate_rule_program(&doc(), TASK, &fw, &mut g) {
        Err(CompilerError::LintErrors(f)) => {
            assert!(f.iter().any(|f| f.message.contains("unsupported regex feature")), "{f:?}")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unparseable_program_after_repair() {
    let fw = CotFramework::parse(GOOD_FRAMEWORK).unwrap();
    let mut g = ScriptedGllm::new(["not a program", "still not"]);
    assert!(matches!(
        generate_rule_program(&doc(), TASK, &fw, &mut g),
        Err(CompilerError::UnparseableProgram(_))
    ));
}

#[test]
fn explanation_matches_golden_and_reads_as_sentences() {
    let program = parse_program(&read("golden/tnm_program.ir")).unwrap();
    let text = explain_program(&program);
    assert_eq!(text, read("golden/tnm_explanation.txt"));
    assert_eq!(text.lines().count(), program.walk().len());
    assert!(text.contains("size is at most 1 → \"T1a\""));
    assert!(text.contains("The program then writes the fixed text"));

    let formulation = parse_program(include_str!("../data/formulation.ir")).unwrap();
    let text = explain_program(&formulation);
    let line = text.lines().find(|l| l.starts_with("Step `mass_check`")).unwrap();
    assert!(line.contains("adjusted_ratio is at most 2.5"), "{line}");
    assert!(line.contains("at most 5 attempts"), "{line}");
    assert!(line.contains("falls back to adjusted_ratio = \"2.5\""), "{line}");
}

#[test]
fn expert_revision_inserts_metastasis_options() {
    let program = parse_program(&read("golden/tnm_program.ir")).unwrap();
    let revised = apply_expert_feedback(&program, &suggest(&program, INSERT_SUGGESTION), &mut replay()).unwrap();
    assert_eq!(serialize_program(&revised), read("golden/tnm_revised.ir"));
    assert_eq!(
        select_options(&revised, "distant"),
        ["no distant transfer", "distant transfer exists"]
    );
    let order: Vec<&str> = revised.steps.iter().map(|s| s.name.as_str()).collect();
    let pos = |n: &str| order.iter().position(|s| *s == n).unwrap();
    assert!(pos("distant") < pos("m_stage"));
}

#[test]
fn revision_dropping_conclusion_is_rejected() {
    let program = parse_program(&read("golden/tnm_program.ir")).unwrap();
    match apply_expert_feedback(&program, &suggest(&program, DELETE_SUGGESTION), &mut replay()) {
        Err(CompilerError::RevisionRejected(msgs)) => {
            assert!(msgs.iter().any(|m| m.contains("m_stage")), "{msgs:?}")
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_suggestion_is_identity() {
    let program = parse_program(&read("golden/tnm_program.ir")).unwrap();
    let mut g = ScriptedGllm::new(Vec::<String>::new());
    let out = apply_expert_feedback(&program, &suggest(&program, "  "), &mut g).unwrap();
    assert_eq!(out, program);
    assert!(g.prompts.is_empty());
}

#[test]
fn transcript_needs_pending_suggestion() {
    let program = parse_program(&read("golden/tnm_program.ir")).unwrap();
    let t = VerificationTranscript::start(&program);
    let mut g = ScriptedGllm::new(Vec::<String>::new());
    assert!(matches!(
        apply_expert_feedback(&program, &t, &mut g),
        Err(CompilerError::Transcript(_))
    ));
}
