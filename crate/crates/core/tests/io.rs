use lawbound::ensemble::{Ensemble, LawCurve};
use lawbound::fields::{self, Grid, GridField};
use lawbound::io::*;
use lawbound::report::{config_hash, Check, Report};
use proptest::prelude::*;

fn field(d: usize, n: usize, m: usize, seed: u64) -> GridField {
    let g = Grid::new(d, n).unwrap();
    GridField::from_fn(g, m, |x, c| (x[0] * (seed as f64 + 1.0)).sin() + c as f64 * x[1].cos())
}

#[test]
fn lbf1_header_layout() {
    let f = field(2, 8, 2, 1);
    let b = encode_field(&f);
    assert_eq!(&b[0..4], b"LBF1");
    assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
    assert_eq!((b[8], b[9]), (2, 2));
    assert_eq!(&b[10..12], &[0, 0]);
    assert_eq!(u32::from_le_bytes(b[12..16].try_into().unwrap()), 8);
    assert_eq!(u32::from_le_bytes(b[16..20].try_into().unwrap()), 8);
    assert_eq!(b.len(), 20 + 8 * 2 * 64);
    assert_eq!(f64::from_le_bytes(b[20..28].try_into().unwrap()), f.values()[0]);
}

#[test]
fn lbf1_rejects_bad_input() {
    let good = encode_field(&field(1, 16, 1, 0));
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(decode_field(&magic).is_err());
    let mut version = good.clone();
    version[4] = 2;
    assert!(decode_field(&version).is_err());
    let mut reserved = good.clone();
    reserved[10] = 1;
    assert!(decode_field(&reserved).is_err());
    assert!(decode_field(&good[..good.len() - 1]).is_err());
    let mut long = good.clone();
    long.push(0);
    assert!(decode_field(&long).is_err());
}

#[test]
fn manifests_round_trip_and_reject_future_versions() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid::new(2, 16).unwrap();
    let e =
        |s: u64| Ensemble::new((0..3).map(|i| fields::random_divfree(g, 2.0, 4, s + i).unwrap()).collect()).unwrap();
    let curve = LawCurve::new(vec![0.0, 0.5], vec![e(0), e(10)]).unwrap();
    let path = dir.path().join("curve.json");
    write_law_curve(&path, &curve).unwrap();
    let back = read_law_curve(&path).unwrap();
    assert_eq!(back.times(), curve.times());
    for (a, b) in back.ensembles().iter().zip(curve.ensembles()) {
        assert_eq!(a.members(), b.members());
    }
    let ens_path = dir.path().join("curve.t0001.json");
    let (one, t) = read_ensemble(&ens_path).unwrap();
    assert_eq!(t, 0.5);
    assert_eq!(one.len(), 3);
    let text = std::fs::read_to_string(&ens_path).unwrap().replace("\"version\": 1", "\"version\": 2");
    std::fs::write(&ens_path, text).unwrap();
    assert!(read_ensemble(&ens_path).is_err());
    let text = std::fs::read_to_string(&path).unwrap().replace("\"version\": 1", "\"version\": 9");
    std::fs::write(&path, text).unwrap();
    assert!(read_law_curve(&path).is_err());
}

#[test]
fn config_hash_ignores_key_order() {
    let a: serde_json::Value = serde_json::from_str(r#"{"grid":{"d":2,"n":64},"seed":3,"eps":[0.0,0.01]}"#).unwrap();
    let b: serde_json::Value = serde_json::from_str(r#"{"eps":[0.0,0.01],"seed":3,"grid":{"n":64,"d":2}}"#).unwrap();
    assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    let c: serde_json::Value = serde_json::from_str(r#"{"eps":[0.0,0.01],"seed":4,"grid":{"n":64,"d":2}}"#).unwrap();
    assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
    assert_eq!(config_hash(&a).unwrap().len(), 64);
}

#[test]
fn report_rejects_unknown_versions_and_fields() {
    let r = Report::new("gen", &serde_json::json!({"seed": 1}), vec![Check::at_most("x", 0.5, 1.0, 0.0)]).unwrap();
    let text = r.to_json().unwrap();
    assert!(!text.contains("wall_time"));
    assert!(Report::from_json(&text.replace("\"version\": 1", "\"version\": 2")).is_err());
    assert!(Report::from_json(&text.replace("\"command\"", "\"extra\": 1, \"command\"")).is_err());
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("r.json");
    r.write(&p).unwrap();
    assert_eq!(Report::read(&p).unwrap(), r);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn lbf1_round_trip(d in 1usize..=2, log_n in 3u32..6, m in 1usize..4, seed in 0u64..1000) {
        let f = field(d, 1 << log_n, m, seed);
        prop_assert_eq!(decode_field(&encode_field(&f)).unwrap(), f);
    }

    #[test]
    fn report_round_trip(values in proptest::collection::vec((-1e6f64..1e6, -1e6f64..1e6, 0.0f64..1.0), 0..12), wall in proptest::option::of(0.0f64..100.0)) {
        let checks = values.iter().enumerate().map(|(i, (v, b, t))| Check::at_most(format!("c{i}"), *v, *b, *t)).collect();
        let mut r = Report::new("metrics", &serde_json::json!({"values": values.len()}), checks).unwrap()
            .with_payload(&serde_json::json!({"note": "x", "n": 3})).unwrap();
        r.wall_time = wall;
        prop_assert_eq!(Report::from_json(&r.to_json().unwrap()).unwrap(), r);
    }
}
