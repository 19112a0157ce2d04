//! Scratch: margin scan for the mode-recovery seeds (mirrors the acceptance
//! construction exactly).
use gactgan::data::{infer_schema_from_raw, DataTransformer, Dataset, RawTable};
use gactgan::eval::{roc, EvalTable};
use gactgan::gan::{train, LossKind, TrainConfig};
use gactgan::swag::{synthesize, PosteriorArtifact, SwagState, SynthesisOptions};
use rand::prelude::*;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;

fn sample_weighted(rng: &mut ChaCha20Rng, w: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &p) in w.iter().enumerate() {
        acc += p;
        if u < acc { return i; }
    }
    w.len() - 1
}

fn toy_bimodal_table(n: usize, seed: u64) -> RawTable {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let rows: Vec<Vec<String>> = (0..n).map(|_| {
        let z: f64 = rng.sample(StandardNormal);
        let x = if rng.gen_bool(0.5) { z - 5.0 } else { z + 5.0 };
        let u = ["a", "b", "c"][sample_weighted(&mut rng, &[0.5, 0.3, 0.2])];
        let v_weights = match u {
            "a" => [0.6, 0.2, 0.2],
            "b" => [0.2, 0.6, 0.2],
            _ => [0.2, 0.2, 0.6],
        };
        let v = ["p", "q", "r"][sample_weighted(&mut rng, &v_weights)];
        vec![format!("{x:.5}"), u.to_string(), v.to_string()]
    }).collect();
    RawTable { headers: vec!["x".into(), "u".into(), "v".into()], rows }
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let combos: Vec<(u64, u64, u64)> = if args.len() > 1 {
        vec![(args[1].parse().unwrap(), args[2].parse().unwrap(), args[3].parse().unwrap())]
    } else {
        vec![(707, 7, 9), (101, 13, 5), (42, 21, 3), (707, 17, 9)]
    };
    for (data_seed, train_seed, synth_seed) in combos {
        let raw = toy_bimodal_table(5000, data_seed);
        let schema = infer_schema_from_raw(&raw, &BTreeMap::new()).unwrap();
        let ds = Dataset::from_raw(&raw, &schema).unwrap();
        let tr = DataTransformer::fit(&ds, 10).unwrap();
        let mut cfg = TrainConfig::new(LossKind::Wasserstein, train_seed);
        cfg.epochs = 100;
        cfg.t_collect = 50;
        let mut swag: Option<SwagState> = None;
        let model = train(&ds, &tr, &cfg, |_, t| {
            swag.get_or_insert_with(|| SwagState::new(t.len(), 30)).collect(t).unwrap();
        }).unwrap();
        let artifact = PosteriorArtifact::new(swag.unwrap().finalize(0.5).unwrap(), &model);
        let mut opts = SynthesisOptions::new(5000, 500, 1);
        opts.alpha = Some(0.5);
        opts.rank = Some(30);
        let mut rng = ChaCha20Rng::seed_from_u64(synth_seed);
        let (table, _) = synthesize(&artifact, &opts, &mut rng).unwrap();
        let syn = EvalTable::from_raw(&table, &schema).unwrap();
        let orig = EvalTable::from_raw(&raw, &schema).unwrap();
        let two = roc(&orig, &syn, &["u".to_string(), "v".to_string()]).unwrap();
        let one_u = roc(&orig, &syn, &["u".to_string()]).unwrap();
        let one_v = roc(&orig, &syn, &["v".to_string()]).unwrap();
        println!("seeds ({data_seed},{train_seed},{synth_seed}): two-way {two:.3}, u {one_u:.3}, v {one_v:.3}");
    }
}
