use std::io::Write;

use macroplace::env::Backbone;
use macroplace_rl::checkpoint::{load, load_compatible, save, CheckpointError};
use macroplace_rl::policy::PolicyParams;
use macroplace_rl::PolicyConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn params(grid: usize) -> PolicyParams {
    PolicyParams::new(PolicyConfig { grid_size: grid, ..Default::default() }, &mut ChaCha8Rng::seed_from_u64(3))
}

#[test]
fn round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    let p = params(8);
    save(&path, &p).unwrap();
    assert_eq!(load(&path).unwrap(), p);
    assert_eq!(load_compatible(&path, &p.config).unwrap(), p);
    let entries: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(entries.len(), 1, "temporary file left behind");
}

#[test]
fn header_layout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    let p = params(4);
    save(&path, &p).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..4], b"MPCK");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    // every parameter is stored as 8 bytes
    assert!(bytes.len() > p.num_scalars() * 8);
}

#[test]
fn incompatible_shapes_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.ckpt");
    save(&path, &params(8)).unwrap();
    let want = PolicyConfig { grid_size: 16, ..Default::default() };
    match load_compatible(&path, &want) {
        Err(CheckpointError::ShapeMismatch { name, stored, expected }) => {
            assert_eq!(name, "policy.w");
            assert_eq!((stored.1, expected.1), (64, 256));
        }
        other => panic!("{other:?}"),
    }
    let gcn = PolicyConfig { backbone: Backbone::Gcn, grid_size: 8, ..Default::default() };
    assert!(load_compatible(&path, &gcn).is_err());
}

#[test]
fn corrupt_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.ckpt");
    std::fs::File::create(&bad).unwrap().write_all(b"NOPE\x01\x00\x00\x00").unwrap();
    assert!(matches!(load(&bad), Err(CheckpointError::BadMagic)));

    let path = dir.path().join("p.ckpt");
    save(&path, &params(4)).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[4] = 9;
    std::fs::write(&bad, &bytes).unwrap();
    assert!(matches!(load(&bad), Err(CheckpointError::Version(9))));

    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(load(&bad), Err(CheckpointError::Io(_))));
}
