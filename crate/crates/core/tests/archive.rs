mod common;

use common::ingest;
use std::fs;
use std::path::Path;
use vme_core::archive::{export, import, Archive, TimeRange};
use vme_core::Error;

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn full_export_import_reproduces_the_stores() {
    let src = tempfile::tempdir().unwrap();
    ingest(src.path(), "synthetic_1000.events");
    let archive = export(src.path(), TimeRange::all()).unwrap();
    let bytes = archive.to_bytes().unwrap();

    let dst = tempfile::tempdir().unwrap();
    let parsed = Archive::read(&bytes[..]).unwrap();
    assert_eq!(parsed, archive);
    let summary = import(dst.path(), &parsed).unwrap();
    assert_eq!(summary.events, 1000);

    for log in ["events.log", "lbs.log"] {
        assert_eq!(read(src.path(), log), read(dst.path(), log), "{log}");
    }
    let again = export(dst.path(), TimeRange::all()).unwrap();
    assert_eq!(again.to_bytes().unwrap(), bytes);
}

#[test]
fn partial_ranges_round_trip() {
    let src = tempfile::tempdir().unwrap();
    ingest(src.path(), "synthetic_1000.events");
    let all = export(src.path(), TimeRange::all()).unwrap();
    let mid = all.lbs[all.lbs.len() / 2].timestamp;
    let range = TimeRange::new(Some(mid), None).unwrap();
    let tail = export(src.path(), range).unwrap();
    assert!(!tail.lbs.is_empty() && tail.lbs.len() < all.lbs.len());
    assert!(tail.tbs.iter().all(|tb| tb.start_ts >= mid));

    let dst = tempfile::tempdir().unwrap();
    import(dst.path(), &tail).unwrap();
    assert_eq!(
        export(dst.path(), TimeRange::all())
            .unwrap()
            .to_bytes()
            .unwrap(),
        tail.to_bytes().unwrap()
    );
}

#[test]
fn empty_range_gives_a_valid_empty_archive() {
    let src = tempfile::tempdir().unwrap();
    ingest(src.path(), "fixture_20.events");
    let empty = export(src.path(), TimeRange::new(Some(0), Some(1)).unwrap()).unwrap();
    assert_eq!(empty, Archive::default());
    let bytes = empty.to_bytes().unwrap();
    assert_eq!(Archive::read(&bytes[..]).unwrap(), empty);
    let dst = tempfile::tempdir().unwrap();
    assert_eq!(import(dst.path(), &empty).unwrap().lbs, 0);
}

#[test]
fn overlapping_reimport_is_rejected_without_writing() {
    let dir = tempfile::tempdir().unwrap();
    ingest(dir.path(), "fixture_20.events");
    let archive = export(dir.path(), TimeRange::all()).unwrap();
    let before: Vec<Vec<u8>> = ["events.log", "lbs.log", "tbs.log"]
        .iter()
        .map(|f| read(dir.path(), f))
        .collect();
    assert!(matches!(
        import(dir.path(), &archive),
        Err(Error::Conflict { got: 1, .. })
    ));
    let after: Vec<Vec<u8>> = ["events.log", "lbs.log", "tbs.log"]
        .iter()
        .map(|f| read(dir.path(), f))
        .collect();
    assert_eq!(before, after);
}

#[test]
fn archives_need_their_header() {
    assert!(matches!(
        Archive::read(&b"#vme-events v1\n"[..]),
        Err(Error::Version { .. })
    ));
}
