use std::io::{Read, Seek, SeekFrom, Write};

use abn_scenegen::*;

fn examples(n: u64) -> Vec<Example> {
    let g = GridConfig::default();
    (0..n)
        .map(|i| {
            let kind = ScenarioKind::ALL[i as usize % 7];
            build_example(&generate_scenario(kind, i).unwrap(), &g).unwrap()
        })
        .collect()
}

#[test]
fn round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.abds");
    let ex = examples(10);
    write_dataset(&ex, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.len(), 10);
    for (a, b) in ex.iter().zip(&back) {
        assert_eq!(a.kind, b.kind);
        assert_eq!(a.seed, b.seed);
        for (x, y) in a.raster.channels.iter().flatten().zip(b.raster.channels.iter().flatten()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert_eq!(a, b);
    }
    let h = read_header(&path).unwrap();
    assert_eq!(h.count, 10);
    assert_eq!(h.channels.len(), 17);
}

#[test]
fn corrupt_byte_names_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.abds");
    write_dataset(&examples(3), &path).unwrap();
    let len = std::fs::metadata(&path).unwrap().len();
    let mut f = std::fs::OpenOptions::new().read(true).write(true).open(&path).unwrap();
    // a byte inside the last record's channel payload
    let pos = len - 20_000;
    f.seek(SeekFrom::Start(pos)).unwrap();
    let mut b = [0u8; 1];
    f.read_exact(&mut b).unwrap();
    f.seek(SeekFrom::Start(pos)).unwrap();
    f.write_all(&[b[0] ^ 0x5a]).unwrap();
    drop(f);
    match read_dataset(&path) {
        Err(SceneError::Checksum { record }) => assert_eq!(record, 2),
        other => panic!("expected checksum error, got {other:?}"),
    }
}

#[test]
fn empty_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.abds");
    write_dataset(&[], &path).unwrap();
    assert!(read_dataset(&path).unwrap().is_empty());
}

#[test]
fn truncation_and_version_are_distinct_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.abds");
    write_dataset(&examples(2), &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();

    let cut = dir.path().join("cut.abds");
    std::fs::write(&cut, &bytes[..bytes.len() - 100]).unwrap();
    assert!(matches!(read_dataset(&cut), Err(SceneError::Truncated(_))));

    let mut v2 = bytes.clone();
    v2[4..8].copy_from_slice(&2u32.to_le_bytes());
    let vp = dir.path().join("v2.abds");
    std::fs::write(&vp, v2).unwrap();
    assert!(matches!(
        read_dataset(&vp),
        Err(SceneError::VersionMismatch { found: 2, expected: 1 })
    ));

    let mut bad = bytes;
    bad[0] = b'X';
    let bp = dir.path().join("bad.abds");
    std::fs::write(&bp, bad).unwrap();
    assert!(matches!(read_dataset(&bp), Err(SceneError::BadMagic)));
}
