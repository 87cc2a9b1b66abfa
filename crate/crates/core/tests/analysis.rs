use proptest::prelude::*;

use vecprobe::analysis::{aggregate, cohens_kappa, entity_ratios, histogram, PromptAccuracy};
use vecprobe::scoring::Prediction;

fn pred(head: &str, prompt_id: usize, correct: bool) -> Prediction {
    Prediction {
        instance_id: 0,
        prompt_id,
        head: head.into(),
        attribute_word: None,
        chosen: usize::from(!correct),
        gold: 0,
        correct,
        scores: [0.0, 0.0],
        tie: false,
    }
}

#[test]
fn entity_ratio_fixtures() {
    let preds = vec![
        pred("coin", 0, true),
        pred("coin", 1, true),
        pred("rock", 0, true),
        pred("rock", 1, false),
        pred("rock", 2, true),
        pred("rock", 3, false),
    ];
    let (ratios, bins) = entity_ratios(&preds);
    assert_eq!(ratios.len(), 2);
    assert_eq!(
        (ratios[0].entity.as_str(), ratios[0].ratio, ratios[0].count),
        ("coin", 1.0, 2)
    );
    assert_eq!(
        (ratios[1].entity.as_str(), ratios[1].ratio, ratios[1].count),
        ("rock", 0.5, 4)
    );
    assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 2);
    assert_eq!(bins[9].count, 1);
    assert_eq!(bins[5].count, 1);
}

#[test]
fn histogram_boundaries() {
    let bins = histogram(&[0.0, 0.0999, 0.1, 0.5, 0.95, 1.0]);
    let counts: Vec<usize> = bins.iter().map(|b| b.count).collect();
    assert_eq!(counts, vec![2, 1, 0, 0, 0, 1, 0, 0, 0, 2]);
    assert_eq!(bins[0].low, 0.0);
    assert_eq!(bins[9].high, 1.0);
}

proptest! {
    #[test]
    fn aggregate_matches_brute_force(accs in prop::collection::vec(0.0f64..=1.0, 1..20)) {
        let per: Vec<PromptAccuracy> = accs
            .iter()
            .enumerate()
            .map(|(i, &a)| PromptAccuracy { prompt_id: i, accuracy: a, count: 1 })
            .collect();
        let s = aggregate(&per).unwrap();
        let mut total = 0.0;
        for a in &accs {
            total += a;
        }
        let mean = total / accs.len() as f64;
        prop_assert!((s.mean - mean).abs() < 1e-12);
        if accs.len() > 1 {
            let mut ss = 0.0;
            for a in &accs {
                ss += (a - mean) * (a - mean);
            }
            prop_assert!((s.std - (ss / (accs.len() - 1) as f64).sqrt()).abs() < 1e-12);
        } else {
            prop_assert_eq!(s.std, 0.0);
        }
    }

    #[test]
    fn kappa_symmetric_and_relabel_invariant(
        pairs in prop::collection::vec((0u8..3, 0u8..3), 1..60),
        perm in Just([0u8, 1, 2]).prop_shuffle(),
    ) {
        let a: Vec<u8> = pairs.iter().map(|p| p.0).collect();
        let b: Vec<u8> = pairs.iter().map(|p| p.1).collect();
        let k = cohens_kappa(&a, &b).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k));
        prop_assert!((k - cohens_kappa(&b, &a).unwrap()).abs() < 1e-12);
        let ra: Vec<u8> = a.iter().map(|&x| perm[x as usize]).collect();
        let rb: Vec<u8> = b.iter().map(|&x| perm[x as usize]).collect();
        prop_assert!((k - cohens_kappa(&ra, &rb).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn entity_ratios_ignore_order(
        raw in prop::collection::vec((0usize..5, 0usize..4, any::<bool>()), 1..40),
        seed in any::<u64>(),
    ) {
        let preds: Vec<Prediction> = raw.iter().map(|&(h, p, c)| pred(&format!("e{h}"), p, c)).collect();
        let mut shuffled = preds.clone();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(shuffled.as_mut_slice(), &mut rng);
        let (r1, b1) = entity_ratios(&preds);
        let (r2, b2) = entity_ratios(&shuffled);
        prop_assert_eq!(&r1, &r2);
        prop_assert_eq!(b1.iter().map(|b| b.count).sum::<usize>(), r1.len());
        prop_assert_eq!(b1, b2);
    }
}
