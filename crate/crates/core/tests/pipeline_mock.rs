use std::path::PathBuf;
use std::sync::Arc;

use prism_core::config::Config;
use prism_core::llm::{Client, MockTransport};
use prism_core::pipeline::{load_tasks, Aggregator, FinalAnswer, LivePipeline, Phase, PipelineResult, RunConfig};

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/mock")
}

fn run_all(transcript: MockTransport, config: RunConfig) -> Vec<PipelineResult> {
    let cfg = Config::load(&fixtures().join("config.toml")).unwrap();
    let client = Arc::new(Client::new(cfg.endpoint().unwrap(), Arc::new(transcript)));
    let pipeline = LivePipeline::new(client, config);
    load_tasks(&fixtures().join("tasks"))
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, t)| pipeline.run(t, i as u64).unwrap())
        .collect()
}

fn transcript() -> MockTransport {
    let cfg = Config::load(&fixtures().join("config.toml")).unwrap();
    MockTransport::from_file(&cfg.transcript_path().unwrap()).unwrap()
}

fn base_config() -> RunConfig {
    Config::load(&fixtures().join("config.toml")).unwrap().run_config()
}

#[test]
fn mock_end_to_end_matches_golden() {
    let results = run_all(transcript(), base_config());
    let actual = serde_json::to_string_pretty(&results).unwrap() + "\n";
    let path = fixtures().join("golden.json");
    if std::env::var_os("PRISM_BLESS").is_some() {
        std::fs::write(&path, &actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap();
    assert_eq!(actual, expected, "rerun with PRISM_BLESS=1 after reviewing the diff");
}

#[test]
fn mock_end_to_end_semantics() {
    let results = run_all(transcript(), base_config());
    let ids: Vec<&str> = results.iter().map(|r| r.task_id.as_str()).collect();
    assert_eq!(ids, ["add", "count", "max"]);
    for r in &results {
        assert_eq!(r.quality, Some(true), "{}", r.task_id);
        assert!(r.validated);
        assert!(r.trace_is_ordered());
        assert!(r.synthesize_records() <= 3);
        assert_eq!(r.synthesize_records() as u32, r.iterations);
        assert!(r.ledger.is_balanced());
        let phases: Vec<Phase> = r.trace.iter().map(|p| p.phase).collect();
        assert_eq!(&phases[..3], &[Phase::Propose, Phase::Execute, Phase::Review]);
    }
    // Every proposal for `max` fails, so the first synthesis repeats a bad
    // candidate and the error trace drives one refinement.
    let max = &results[2];
    assert_eq!(max.iterations, 2);
    match &max.final_answer {
        FinalAnswer::Text(code) => assert!(code.contains("sort -n | tail -n 1")),
        other => panic!("{other:?}"),
    }
    // Explorer's `add` candidate fails execution and is never selected.
    assert_ne!(results[0].selected_role, "Explorer");
}

#[test]
fn mock_run_is_repeatable() {
    let a = serde_json::to_string(&run_all(transcript(), base_config())).unwrap();
    let b = serde_json::to_string(&run_all(transcript(), base_config())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn self_consistency_baseline_runs_offline() {
    let config = RunConfig {
        aggregator: Aggregator::MajorityVote,
        ..base_config()
    };
    let results = run_all(transcript(), config);
    assert!(results.iter().all(|r| r.aggregator == Aggregator::MajorityVote));
    assert_eq!(results.iter().filter(|r| r.quality == Some(true)).count(), 3);
    assert!(results.iter().all(|r| r.trace.iter().all(|p| p.phase != Phase::Review)));
}

#[test]
fn missing_transcript_entry_is_an_error() {
    let cfg = Config::load(&fixtures().join("config.toml")).unwrap();
    let client = Arc::new(Client::new(
        cfg.endpoint().unwrap(),
        Arc::new(MockTransport::new(Vec::new())),
    ));
    let pipeline = LivePipeline::new(client, base_config());
    let task = &load_tasks(&fixtures().join("tasks")).unwrap()[0];
    assert!(pipeline.run(task, 0).is_err());
}
