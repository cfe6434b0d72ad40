use epls::config::Config;
use epls::experiment::{collect_random, CollectSpec};
use epls::format::{
    decode_checkpoint, decode_rollout, encode_checkpoint, encode_rollout, load_checkpoint,
    load_rollouts, rollout_file_name, save_checkpoint, save_rollouts, FormatError, MANIFEST,
};
use epls::model::WorldModel;
use epls_core::autodiff::{ParamSet, Tensor};
use epls_core::pipeline::{PolicyTag, Rollout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> Config {
    Config::parse(
        "latent_dim = 4\nvae_hidden1 = 16\nvae_hidden2 = 8\nrnn_hidden = 8\nmixtures = 2\n",
    )
    .unwrap()
}

fn sample_rollouts(n: usize) -> Vec<Rollout> {
    let spec = CollectSpec {
        episodes: n,
        steps: 20,
        seed: 3,
    };
    collect_random(&small_config(), spec).unwrap()
}

fn sample_params() -> ParamSet {
    WorldModel::init(&small_config()).to_params()
}

fn reseal(bytes: &mut [u8]) {
    let n = bytes.len() - 4;
    let crc = crc32fast::hash(&bytes[..n]);
    bytes[n..].copy_from_slice(&crc.to_le_bytes());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let params = sample_params();
    let bytes = encode_checkpoint(&params).unwrap();
    let back = decode_checkpoint(&bytes).unwrap();
    assert_eq!(back, params);
    for (a, b) in params.tensors().iter().zip(back.tensors()) {
        let same = a
            .data()
            .iter()
            .zip(b.data())
            .all(|(x, y)| x.to_bits() == y.to_bits());
        assert!(same);
    }
    assert_eq!(encode_checkpoint(&back).unwrap(), bytes);
}

#[test]
fn checkpoint_keeps_special_values_and_empty_sets() {
    let mut params = ParamSet::new();
    params.insert(
        "a",
        Tensor::new(vec![2, 2], vec![0.0, -0.0, f32::MIN_POSITIVE, f32::MAX]).unwrap(),
    );
    params.insert("b", Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
    let back = decode_checkpoint(&encode_checkpoint(&params).unwrap()).unwrap();
    assert_eq!(back.names(), params.names());
    assert_eq!(
        back.get("a").unwrap().data()[1].to_bits(),
        (-0.0f32).to_bits()
    );
    let empty = ParamSet::new();
    assert_eq!(
        decode_checkpoint(&encode_checkpoint(&empty).unwrap()).unwrap(),
        empty
    );
}

#[test]
fn world_model_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let model = WorldModel::init(&small_config());
    model.save(&path).unwrap();
    let back = WorldModel::load(&path).unwrap();
    assert_eq!(back.to_params(), model.to_params());
}

#[test]
fn rollout_round_trip_is_exact() {
    for r in sample_rollouts(3) {
        let back = decode_rollout(&encode_rollout(&r), r.tag).unwrap();
        assert_eq!(back, r);
    }
}

#[test]
fn rollout_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rollouts = sample_rollouts(3);
    rollouts[1].tag = PolicyTag::Oracle;
    save_rollouts(dir.path(), &rollouts).unwrap();
    let manifest = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    assert_eq!(manifest.lines().count(), 3);
    assert!(manifest.contains(&format!("{} oracle", rollout_file_name(1))));
    assert_eq!(load_rollouts(dir.path()).unwrap(), rollouts);
}

#[test]
fn crc_rejects_single_bit_flips() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let ckpt = encode_checkpoint(&sample_params()).unwrap();
    let roll = encode_rollout(&sample_rollouts(1)[0]);
    for (i, bytes) in [ckpt, roll].iter().enumerate() {
        for _ in 0..100 {
            let mut bad = bytes.clone();
            let bit = rng.random_range(0..bad.len() * 8);
            bad[bit / 8] ^= 1 << (bit % 8);
            let res = if i == 0 {
                decode_checkpoint(&bad).map(|_| ())
            } else {
                decode_rollout(&bad, PolicyTag::Random).map(|_| ())
            };
            assert!(
                matches!(res, Err(FormatError::Crc { .. })),
                "bit {bit}: {res:?}"
            );
        }
    }
}

#[test]
fn truncation_is_rejected() {
    let bytes = encode_checkpoint(&sample_params()).unwrap();
    for len in [0, 3, 15, 16, bytes.len() / 2, bytes.len() - 1] {
        assert!(decode_checkpoint(&bytes[..len]).is_err(), "len {len}");
    }
    assert!(matches!(
        decode_checkpoint(&bytes[..10]),
        Err(FormatError::Truncated)
    ));
}

#[test]
fn bad_magic_and_version_are_reported() {
    let bytes = encode_checkpoint(&sample_params()).unwrap();
    let mut bad = bytes.clone();
    bad[0] = b'X';
    reseal(&mut bad);
    assert!(matches!(
        decode_checkpoint(&bad),
        Err(FormatError::BadMagic)
    ));

    let mut bad = bytes.clone();
    bad[8..12].copy_from_slice(&99u32.to_le_bytes());
    reseal(&mut bad);
    assert!(matches!(
        decode_checkpoint(&bad),
        Err(FormatError::Version(99))
    ));

    let roll = encode_rollout(&sample_rollouts(1)[0]);
    assert!(matches!(
        decode_checkpoint(&roll),
        Err(FormatError::BadMagic)
    ));
    assert!(matches!(
        decode_rollout(&bytes, PolicyTag::Random),
        Err(FormatError::BadMagic)
    ));
}

#[test]
fn file_errors_name_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.ckpt");
    save_checkpoint(&path, &sample_params()).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[20] ^= 4;
    std::fs::write(&path, &bytes).unwrap();
    let err = load_checkpoint(&path).unwrap_err();
    assert!(err.to_string().contains("broken.ckpt"), "{err}");

    let missing = load_checkpoint(&dir.path().join("nope.ckpt")).unwrap_err();
    assert!(missing.to_string().contains("nope.ckpt"));
}

#[test]
fn corrupt_rollout_in_directory_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    save_rollouts(dir.path(), &sample_rollouts(2)).unwrap();
    let victim = dir.path().join(rollout_file_name(1));
    let bytes = std::fs::read(&victim).unwrap();
    std::fs::write(&victim, &bytes[..bytes.len() - 7]).unwrap();
    let err = load_rollouts(dir.path()).unwrap_err();
    assert!(err.to_string().contains(&rollout_file_name(1)), "{err}");
}

#[test]
fn manifest_with_unknown_tag_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    save_rollouts(dir.path(), &sample_rollouts(1)).unwrap();
    std::fs::write(
        dir.path().join(MANIFEST),
        format!("{} expert\n", rollout_file_name(0)),
    )
    .unwrap();
    let err = load_rollouts(dir.path()).unwrap_err();
    assert!(err.to_string().contains(MANIFEST));
}
