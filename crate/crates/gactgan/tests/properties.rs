//! Property tests for the contract invariants: reversible encoding, one-hot
//! exactness, metric symmetries and ranges, dominance soundness, and
//! generator output constraints.

use gactgan::data::{
    infer_schema_from_raw, ColumnSchema, DataTransformer, Dataset, RawTable, SpanKind,
};
use gactgan::eval::{pareto_front, roc, selection_score, tcap_risk, EvalTable};
use gactgan::nn::layers::BnUpdate;
use gactgan::nn::nets::{GenMode, GeneratorArch, GeneratorNet};
use gactgan::nn::tape::Tape;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng as _, SeedableRng as _};
use rand_chacha::ChaCha20Rng;
use std::collections::BTreeMap;

fn label_strategy() -> impl Strategy<Value = String> {
    prop::sample::select(vec![
        "a".to_string(),
        "b".to_string(),
        "c".to_string(),
        "dd".to_string(),
        "e e".to_string(),
        "f,g".to_string(),
    ])
}

fn cat_table(name: &str, labels: &[String]) -> EvalTable {
    let raw = RawTable {
        headers: vec![name.to_string()],
        rows: labels.iter().map(|l| vec![l.clone()]).collect(),
    };
    EvalTable::from_raw(&raw, &[ColumnSchema::categorical(name, vec!["_".into()])]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn roc_is_symmetric_and_self_is_one(
        a in prop::collection::vec(label_strategy(), 1..80),
        b in prop::collection::vec(label_strategy(), 1..80),
    ) {
        let ta = cat_table("c", &a);
        let tb = cat_table("c", &b);
        let cols = ["c".to_string()];
        let ab = roc(&ta, &tb, &cols).unwrap();
        let ba = roc(&tb, &ta, &cols).unwrap();
        prop_assert!((ab - ba).abs() < 1e-15);
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((roc(&ta, &ta, &cols).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn tcap_risk_stays_in_unit_interval(
        orig in prop::collection::vec((label_strategy(), label_strategy()), 1..60),
        syn in prop::collection::vec((label_strategy(), label_strategy()), 1..60),
    ) {
        let to_table = |rows: &[(String, String)]| {
            let raw = RawTable {
                headers: vec!["k".into(), "t".into()],
                rows: rows.iter().map(|(k, t)| vec![k.clone(), t.clone()]).collect(),
            };
            EvalTable::from_raw(&raw, &[
                ColumnSchema::categorical("k", vec!["_".into()]),
                ColumnSchema::categorical("t", vec!["_".into()]),
            ]).unwrap()
        };
        let r = tcap_risk(&to_table(&orig), &to_table(&syn), &["k".to_string()], "t").unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn selection_score_monotone_in_utility_and_risk(
        u1 in 0.0f64..1.0, u2 in 0.0f64..1.0,
        r1 in 0.0f64..1.0, r2 in 0.0f64..1.0,
        phi in 0.0f64..1.0,
    ) {
        let (ulo, uhi) = if u1 <= u2 { (u1, u2) } else { (u2, u1) };
        let (rlo, rhi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        prop_assert!(selection_score(ulo, r1, phi).unwrap() <= selection_score(uhi, r1, phi).unwrap() + 1e-12);
        prop_assert!(selection_score(u1, rhi, phi).unwrap() <= selection_score(u1, rlo, phi).unwrap() + 1e-12);
    }

    #[test]
    fn pareto_front_is_sound_and_complete(
        pts in prop::collection::vec((0u8..12, 0u8..12), 0..40)
    ) {
        let pts: Vec<(f64, f64)> = pts.iter().map(|&(u, r)| (u as f64 / 12.0, r as f64 / 12.0)).collect();
        let flags = pareto_front(&pts);
        // no front member is dominated; every excluded point is dominated
        for (i, &(u, r)) in pts.iter().enumerate() {
            let dominated = pts.iter().enumerate().any(|(j, &(u2, r2))| {
                j != i && u2 >= u && r2 <= r && (u2 > u || r2 < r)
            });
            prop_assert_eq!(flags[i], !dominated);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn encode_decode_categorical_identity_and_one_hot(
        labels in prop::collection::vec(label_strategy(), 2..64),
        seed in 0u64..1000,
    ) {
        let raw = RawTable {
            headers: vec!["c".into()],
            rows: labels.iter().map(|l| vec![l.clone()]).collect(),
        };
        let schema = infer_schema_from_raw(&raw, &BTreeMap::new()).unwrap();
        let ds = Dataset::from_raw(&raw, &schema).unwrap();
        let t = DataTransformer::fit(&ds, 10).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let enc = t.encode_dataset(&ds, &mut rng).unwrap();
        for (i, row) in enc.rows().into_iter().enumerate() {
            let ones = row.iter().filter(|&&v| v == 1.0).count();
            prop_assert_eq!(ones, 1);
            let dec = t.decode_row(row.as_slice().unwrap()).unwrap();
            prop_assert_eq!(&dec[0], &labels[i]);
        }
    }

    #[test]
    fn continuous_roundtrip_when_unclamped(
        base in -100.0f64..100.0,
        spread in 0.1f64..10.0,
        seed in 0u64..1000,
    ) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rows: Vec<Vec<String>> = (0..200)
            .map(|_| vec![format!("{}", base + spread * rng.sample::<f64, _>(rand_distr::StandardNormal))])
            .collect();
        let raw = RawTable { headers: vec!["x".into()], rows };
        let schema = infer_schema_from_raw(&raw, &BTreeMap::new()).unwrap();
        let ds = Dataset::from_raw(&raw, &schema).unwrap();
        let t = DataTransformer::fit(&ds, 10).unwrap();
        let enc = t.encode_dataset(&ds, &mut rng).unwrap();
        let scalar_slot = match t.layout.blocks[0] {
            gactgan::data::ColumnBlock::Continuous { scalar, .. } => scalar,
            _ => unreachable!("single continuous column"),
        };
        let dec = t.decode_matrix(&enc).unwrap();
        for ((orig, got), enc_row) in raw.rows.iter().zip(&dec.rows).zip(enc.rows()) {
            if enc_row[scalar_slot].abs() >= 1.0 {
                continue; // clamped cells do not roundtrip by design
            }
            let x: f64 = orig[0].parse().unwrap();
            let x_hat: f64 = got[0].parse().unwrap();
            prop_assert!(
                (x - x_hat).abs() <= 1e-6 * (1.0 + x.abs()),
                "roundtrip {} vs {}", x, x_hat
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generator_output_respects_span_constraints(
        noise_dim in 1usize..6,
        cond_dim in 0usize..4,
        hidden in 2usize..12,
        batch in 1usize..10,
        seed in 0u64..500,
    ) {
        let spans = vec![
            gactgan::data::Span { start: 0, len: 1, kind: SpanKind::Scalar },
            gactgan::data::Span { start: 1, len: 4, kind: SpanKind::OneHot },
            gactgan::data::Span { start: 5, len: 2, kind: SpanKind::OneHot },
        ];
        let arch = GeneratorArch {
            noise_dim,
            cond_dim,
            data_width: 7,
            hidden: vec![hidden],
            tau: 0.2,
            spans,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let mut gen = GeneratorNet::init(arch, &mut rng);
        let t = Tape::new();
        let input = t.constant(Array2::from_shape_fn(
            (batch, noise_dim + cond_dim),
            |_| rng.gen_range(-2.0..2.0),
        ));
        let out = gen.forward(&t, input, GenMode::Train(BnUpdate::None), &mut rng, false);
        let v = t.value_clone(out.activated);
        for i in 0..batch {
            prop_assert!(v[(i, 0)].abs() <= 1.0);
            let s1: f64 = (1..5).map(|j| v[(i, j)]).sum();
            let s2: f64 = (5..7).map(|j| v[(i, j)]).sum();
            prop_assert!((s1 - 1.0).abs() < 1e-6);
            prop_assert!((s2 - 1.0).abs() < 1e-6);
        }
    }
}
