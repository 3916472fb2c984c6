mod common;

use std::sync::Arc;

use filmvalues::gateway::LLM_KEY_ENV;
use filmvalues::pipeline::{
    cmd_agents, cmd_analyze, cmd_parse, cmd_pipeline, cmd_reflect, cmd_report, cmd_sample,
    cmd_survey, exit, make_gateway, PipelineError, ProviderKind, RunReport,
};
use filmvalues::{Decade, Gender, ItemId, Source};

use common::*;

fn outputs(config: &filmvalues::RunConfig) -> Vec<String> {
    PIPELINE_OUTPUTS
        .iter()
        .map(|f| std::fs::read_to_string(config.run_file(f)).unwrap())
        .collect()
}

fn goldens_text() -> Vec<String> {
    PIPELINE_OUTPUTS
        .iter()
        .map(|f| std::fs::read_to_string(goldens().join("pipeline").join(f)).unwrap())
        .collect()
}

#[test]
fn fixture_corpus_parses_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let summary = cmd_parse(&fixtures().join("corpus"), &dir.path().join("parsed")).unwrap();
    assert_eq!(
        summary.documents,
        vec!["script_01", "script_02", "script_03"]
    );
    assert!(summary.warnings.is_empty());
    assert_eq!(summary.exit_code(), exit::SUCCESS);
}

#[test]
fn http_without_key_fails_before_any_work() {
    std::env::remove_var(LLM_KEY_ENV);
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path(), 7);
    config.provider = ProviderKind::Http;
    let err = cmd_pipeline(&config, None).unwrap_err();
    assert!(
        matches!(err, PipelineError::Config(ref m) if m.contains(LLM_KEY_ENV)),
        "{err}"
    );
    assert!(!config.run_dir().exists());
}

#[test]
fn stages_run_separately_match_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path(), 7);
    cmd_parse(&config.corpus_dir, &config.parsed_dir()).unwrap();
    cmd_sample(&config).unwrap();
    cmd_agents(&config).unwrap();
    let gateway = make_gateway(&config, mock(&config)).unwrap();
    assert!(cmd_reflect(&config, &gateway).unwrap().failed.is_empty());
    assert!(cmd_survey(&config, &gateway).unwrap().failed.is_empty());
    cmd_analyze(&config).unwrap();
    cmd_report(&config).unwrap();
    assert_eq!(outputs(&config), goldens_text());
}

#[test]
fn stage_out_of_order_names_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixture_config(dir.path(), 7);
    match cmd_agents(&config) {
        Err(PipelineError::MissingStage { stage, .. }) => assert_eq!(stage, "sample"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rerun_reuses_everything() {
    let dir = tempfile::tempdir().unwrap();
    let (config, _, first) = run_fixture(dir.path(), 7);
    assert!(first.calls() > 0);
    let before = outputs(&config);
    let provider = mock(&config);
    let outcome = cmd_pipeline(&config, Some(provider.clone())).unwrap();
    assert_eq!(provider.calls(), 0);
    assert_eq!(outcome.reflect.cached, outcome.report.corpus.agents);
    assert_eq!(outcome.survey.resumed, outcome.report.corpus.agents);
    assert_eq!(outputs(&config), before);
}

#[test]
fn force_regenerates_with_same_result() {
    let dir = tempfile::tempdir().unwrap();
    let (mut config, _, _) = run_fixture(dir.path(), 7);
    let before = outputs(&config);
    config.force = true;
    let provider = mock(&config);
    let outcome = cmd_pipeline(&config, Some(provider.clone())).unwrap();
    // three personas plus one survey call per agent
    assert_eq!(provider.calls(), outcome.report.corpus.agents * 4);
    assert_eq!(outputs(&config), before);
}

#[test]
fn different_seed_changes_answers() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (ca, _, _) = run_fixture(a.path(), 7);
    let (cb, _, _) = run_fixture(b.path(), 8);
    let read =
        |c: &filmvalues::RunConfig| std::fs::read_to_string(c.run_file("responses.csv")).unwrap();
    assert_ne!(read(&ca), read(&cb));
}

#[test]
fn missing_reference_cell_is_absent_and_reported() {
    let dir = tempfile::tempdir().unwrap();
    let (config, outcome, _) = run_fixture(dir.path(), 7);
    let plot = std::fs::read_to_string(config.run_file("plot.csv")).unwrap();
    assert!(!plot.contains("university_education,real,F,2010s"));
    assert!(plot.contains("university_education,real,M,2010s"));
    let item = outcome
        .report
        .items
        .iter()
        .find(|i| i.item_id == ItemId::UniversityEducation)
        .unwrap();
    let gap = item.cell_gap.as_ref().unwrap();
    assert_eq!(
        gap.unmatched,
        vec![(Decade::Tens, Gender::F, Source::Simulated)]
    );
    assert!(item.notes.iter().any(|n| n.contains("2010s/F")));
    let text = std::fs::read_to_string(config.run_file("report.txt")).unwrap();
    assert!(text.contains("2010s/F has simulated data only"));
}

#[test]
fn report_is_recomputable_and_has_caveats() {
    let dir = tempfile::tempdir().unwrap();
    let (config, outcome, _) = run_fixture(dir.path(), 7);
    let on_disk: RunReport =
        serde_json::from_str(&std::fs::read_to_string(config.run_file("report.json")).unwrap())
            .unwrap();
    assert_eq!(on_disk, outcome.report);
    assert_eq!(cmd_report(&config).unwrap(), outcome.report);
    let text = std::fs::read_to_string(config.run_file("report.txt")).unwrap();
    assert!(text.contains("Interpretation caveats"));
    assert!(config.run_file("metadata.json").exists());
    assert!(config.run_file("llm_log.jsonl").exists());
    assert!(config.run_file("plot_README.md").exists());
    let saved: filmvalues::RunConfig =
        serde_json::from_str(&std::fs::read_to_string(config.run_file("config.json")).unwrap())
            .unwrap();
    assert_eq!(saved, config);
}

#[test]
fn per_item_prompts_answer_every_item() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path(), 7);
    config.per_item_prompts = true;
    let provider = mock(&config);
    let outcome = cmd_pipeline(&config, Some(provider.clone())).unwrap();
    let agents = outcome.report.corpus.agents;
    assert_eq!(outcome.survey.responses, agents * 3);
    assert_eq!(provider.calls(), agents * 3 + agents * 3);
}

#[test]
fn item_subset_limits_survey() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = fixture_config(dir.path(), 7);
    config.items = vec![ItemId::PoliticalLeaders];
    let outcome = cmd_pipeline(
        &config,
        Some(Arc::new(filmvalues::MockProvider::new(1, Vec::new()))),
    )
    .unwrap();
    assert_eq!(outcome.report.items.len(), 1);
    assert_eq!(outcome.survey.responses, outcome.report.corpus.agents);
}
