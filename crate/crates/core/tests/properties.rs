//! Cross-module invariants on generated populations.

use std::collections::BTreeMap;

use proptest::prelude::*;

use gyral_embed::autoencoder::{selective_loss, Autoencoder, ModelConfig};
use gyral_embed::correspond::{match_population, roi_hit_rate, HemisphereSplit};
use gyral_embed::features::encode_population;
use gyral_embed::synth::{generate_population, PopulationSpec};

fn spec(seed: u64, n_nodes: usize, n_rois: usize, n_subjects: usize) -> PopulationSpec {
    PopulationSpec {
        n_nodes,
        n_rois,
        n_subjects,
        seed,
        ..PopulationSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn features_respect_hop_structure(seed in any::<u64>(), n in 20usize..80, r in 2usize..10, hops in 1usize..4) {
        let pop = generate_population(&spec(seed, n, r.min(n), 2)).unwrap();
        let data = encode_population(&pop.subjects, hops).unwrap();
        for g in &pop.subjects {
            for u in 0..g.n() {
                let chi = data.get(g.subject_id(), u).unwrap();
                let rings = g.rings(u, hops).unwrap();
                for (k, ring) in rings.iter().enumerate() {
                    let mut counts = vec![0usize; g.n_rois()];
                    for &v in ring {
                        counts[g.roi(v).unwrap()] += 1;
                    }
                    for (rr, &c) in counts.iter().enumerate() {
                        let x = chi.get(k, rr);
                        prop_assert!(x >= 0.0 && x <= c as f64 + 1e-12);
                        prop_assert_eq!(x > 0.0, c > 0);
                    }
                }
            }
        }
    }

    #[test]
    fn ground_truth_preserves_rois(seed in any::<u64>(), drop in 0.0f64..0.3, rewire in 0.0f64..0.3) {
        let s = PopulationSpec { node_drop_frac: drop, edge_rewire_frac: rewire, ..spec(seed, 60, 8, 3) };
        let pop = generate_population(&s).unwrap();
        for g in &pop.subjects {
            let map = &pop.truth.0[g.subject_id()];
            prop_assert_eq!(map.len(), g.n());
            prop_assert_eq!(map.len(), 60 - (drop * 60.0).round() as usize);
            for (&t, &v) in map {
                prop_assert_eq!(pop.template.roi(t).unwrap(), g.roi(v).unwrap());
                prop_assert_eq!(pop.template.node(t).unwrap().pos, g.node(v).unwrap().pos);
            }
        }
    }

    #[test]
    fn selective_loss_nonnegative_and_zero_only_when_exact(
        vals in prop::collection::vec((0.0f64..3.0, -3.0f64..3.0), 1..30),
        lambda in 0.0f64..5.0,
    ) {
        let (target, pred): (Vec<f64>, Vec<f64>) = vals.into_iter().unzip();
        let l = selective_loss(&pred, &target, &[], &[], lambda).unwrap();
        prop_assert!(l >= 0.0);
        prop_assert_eq!(selective_loss(&target, &target, &[], &[], lambda).unwrap(), 0.0);
        if pred != target {
            prop_assert!(l > 0.0 || pred.iter().zip(&target).all(|(p, t)| (p - t).abs() < 1e-150));
        }
    }
}

#[test]
fn untrained_model_self_match_hits_every_roi() {
    let pop = generate_population(&spec(5, 80, 10, 2)).unwrap();
    let data = encode_population(&pop.subjects, 2).unwrap();
    let cfg = ModelConfig { theta_width: 8, latent_width: 12, ..ModelConfig::new(2, 10) };
    let ae = Autoencoder::new(cfg, 1).unwrap();
    let anchor: Vec<_> = data
        .samples()
        .iter()
        .filter(|s| s.subject_id == "subj000")
        .map(|s| ae.encode(s).unwrap())
        .collect();
    let targets = BTreeMap::from([("subj000".to_owned(), anchor.clone())]);
    let corr = match_population(&anchor, &targets, 0.9, 0.02).unwrap();
    let graphs = pop.subjects.iter().map(|g| (g.subject_id().to_owned(), g.clone())).collect();
    assert_eq!(corr.matches.len(), anchor.len());
    assert_eq!(roi_hit_rate(&corr, &graphs, HemisphereSplit::Total).unwrap(), 100.0);
}
