use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use vme_core::ingest::{read_lbs, SymbolIndex};
use vme_core::llm::MockLlmClient;
use vme_core::similarity::HashedBagOfTokens;
use vme_core::synth::{synthetic_trace, TraceConfig};
use vme_core::tasks::{read_batches, read_task_state};
use vme_core::{Engine, EngineConfig};

fn engine(dir: &Path) -> Engine {
    Engine::open(
        dir,
        EngineConfig::default(),
        SymbolIndex::new(),
        Arc::new(HashedBagOfTokens::new()),
        Arc::new(MockLlmClient::new()),
    )
    .unwrap()
}

#[test]
fn every_behavior_gets_exactly_one_final_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = engine(dir.path());
    e.ingest(synthetic_trace(TraceConfig::default()).into_iter().map(Ok))
        .unwrap();
    let summary = e.summary();
    assert_eq!(summary.events_read, 1000);

    let lbs = read_lbs(dir.path()).unwrap();
    assert_eq!(lbs.len() as u64, summary.lbs_created);
    let all = read_batches(dir.path()).unwrap();
    assert!(all.len() > 1);
    assert!(all.iter().all(|b| b.reconciles()));

    let mut final_ids = BTreeSet::new();
    for b in &all {
        for id in b
            .tbs
            .iter()
            .flat_map(|tb| tb.lbs.iter().copied())
            .chain(b.noise.iter().copied())
            .chain(b.pruned.iter().map(|p| p.lb_id))
        {
            assert!(final_ids.insert(id), "lb {id} finalized twice");
        }
    }
    let carried: BTreeSet<u64> = all.last().unwrap().carry_over.iter().map(|c| c.0).collect();
    let expected: BTreeSet<u64> = lbs.iter().map(|lb| lb.lb_id).collect();
    assert_eq!(&final_ids | &carried, expected);
    let state = read_task_state(dir.path()).unwrap();
    assert!(!state.tbs.is_empty());
    assert!(state
        .tbs
        .values()
        .all(|tb| !tb.task.is_empty() && !tb.needs_retry));
}

#[test]
fn restarting_between_streams_continues_ids() {
    let dir = tempfile::tempdir().unwrap();
    let trace = synthetic_trace(TraceConfig {
        events: 600,
        ..TraceConfig::default()
    });
    let (a, b) = trace.split_at(300);
    engine(dir.path())
        .ingest(a.iter().cloned().map(Ok))
        .unwrap();
    engine(dir.path())
        .ingest(b.iter().cloned().map(Ok))
        .unwrap();
    let lbs = read_lbs(dir.path()).unwrap();
    assert!(lbs.windows(2).all(|w| w[1].lb_id == w[0].lb_id + 1));
    assert!(read_batches(dir.path())
        .unwrap()
        .iter()
        .all(|b| b.reconciles()));
}

#[test]
fn crashed_stream_is_recovered_from_the_event_log() {
    let trace = synthetic_trace(TraceConfig {
        events: 400,
        ..TraceConfig::default()
    });
    let clean = tempfile::tempdir().unwrap();
    engine(clean.path())
        .ingest(trace.iter().cloned().map(Ok))
        .unwrap();

    let crashed = tempfile::tempdir().unwrap();
    {
        let mut e = engine(crashed.path());
        for ev in &trace {
            e.push_event(ev.clone()).unwrap();
        }
        // Dropped without end_stream: held edits and commands are lost.
    }
    engine(crashed.path()).end_stream().unwrap();
    assert_eq!(
        read_lbs(crashed.path()).unwrap(),
        read_lbs(clean.path()).unwrap()
    );
}

#[test]
fn non_increasing_event_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = engine(dir.path());
    let trace = synthetic_trace(TraceConfig {
        events: 3,
        ..TraceConfig::default()
    });
    e.push_event(trace[1].clone()).unwrap();
    assert!(e.push_event(trace[0].clone()).is_err());
}
