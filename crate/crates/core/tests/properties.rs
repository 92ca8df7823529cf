mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use todflow::condition::{condition_candidate, rank_and_select, Candidate, RankingStrategy};
use todflow::eval::{f1_turn, graph_recovery_score};
use todflow::graph::{self, DotOptions};
use todflow::ingest::split_by_hash;
use todflow::synth::{synthesize, SynthConfig};
use todflow::{ActionSet, Clause, CompletionVector, DnfCondition};

fn set(mask: u16) -> ActionSet {
    (0..16).filter(|i| mask >> i & 1 == 1).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn f1_is_symmetric(a in any::<u16>(), b in any::<u16>()) {
        let ab = f1_turn(&set(a), &set(b));
        let ba = f1_turn(&set(b), &set(a));
        prop_assert_eq!(ab.precision, ba.recall);
        prop_assert_eq!(ab.recall, ba.precision);
        prop_assert!((ab.f1 - ba.f1).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab.f1));
    }

    #[test]
    fn a_graph_fully_recovers_itself(seed in any::<u64>(), n in 2usize..9) {
        let g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let r = graph_recovery_score(&g, &g, None, None).unwrap();
        prop_assert_eq!(r.can_shdnt_rate, 1.0);
        prop_assert_eq!(r.can_shdnt_rate_full, 1.0);
        prop_assert_eq!(r.shd_rate_full, 1.0);
    }

    #[test]
    fn json_round_trip_is_identity(seed in any::<u64>(), n in 1usize..10) {
        let g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let text = graph::serialize(&g);
        let back = graph::deserialize(&text).unwrap();
        prop_assert_eq!(&back, &g);
        prop_assert_eq!(graph::serialize(&back), text);
    }

    #[test]
    fn dot_round_trip_keeps_truth_tables(seed in any::<u64>(), n in 1usize..8) {
        let g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let back = graph::from_dot(&graph::to_dot(&g, &DotOptions::default())).unwrap();
        prop_assert!(common::same_truth_tables(&g, &back));
    }

    #[test]
    fn normalization_keeps_the_truth_table(seed in any::<u64>(), n in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let clauses: Vec<Clause> = (0..4).map(|_| common::random_clause(&mut rng, n)).collect();
        let dnf = DnfCondition::from_clauses(clauses.clone());
        for m in 0..1u64 << n {
            let c = CompletionVector::from_mask(n, m);
            prop_assert_eq!(dnf.holds(&c), clauses.iter().any(|k| k.holds(&c)));
        }
    }

    #[test]
    fn conditioning_keeps_allowed_should_acts_and_drops_the_rest(
        seed in any::<u64>(), n in 1usize..10, mask in any::<u64>(), cand in any::<u16>(),
    ) {
        let g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let c = CompletionVector::from_mask(n, mask & ((1 << n) - 1));
        let acts: ActionSet = set(cand).iter().filter(|&i| i < n).collect();
        let out = condition_candidate(&g, &c, &Candidate::new(acts.clone(), 0)).unwrap();
        let allowed = g.allowed_acts(&c).unwrap();
        let should = g.should_acts(&c).unwrap();
        prop_assert!(out.final_acts.is_subset(&allowed));
        prop_assert!(should.intersection(&allowed).is_subset(&out.final_acts));
        prop_assert_eq!(out.final_acts.len(), out.compliance_size);
        prop_assert!(out.added.intersection(&acts).is_empty());
        prop_assert!(out.removed.intersection(&allowed).is_empty());
    }

    #[test]
    fn greedy_is_the_top_ranked_candidate(seed in any::<u64>(), n in 1usize..10, masks in prop::collection::vec(any::<u16>(), 1..6)) {
        let g = common::random_graph(&mut ChaCha8Rng::seed_from_u64(seed), n);
        let cands: Vec<Candidate> = masks
            .iter()
            .enumerate()
            .map(|(r, &m)| Candidate::new(set(m).iter().filter(|&i| i < n).collect(), masks.len() - 1 - r))
            .collect();
        let c = CompletionVector::zeros(n);
        let (acts, audit) = rank_and_select(&g, &c, &cands, RankingStrategy::Greedy).unwrap();
        prop_assert_eq!(audit.chosen_rank, 0);
        prop_assert_eq!(&acts, &cands.last().unwrap().acts);
    }
}

#[test]
fn hash_split_partitions_and_ignores_order() {
    let dom = synthesize(&SynthConfig { n_trajectories: 200, ..SynthConfig::default() }).unwrap();
    let trajs = dom.trajectories();
    let (train, test) = split_by_hash(&trajs, 0.8, 11).unwrap();
    assert_eq!(train.len() + test.len(), trajs.len());
    assert!(train.iter().all(|t| !test.iter().any(|u| u.id == t.id)));
    assert!((120..=200).contains(&train.len()), "{}", train.len());

    let mut reversed = trajs.clone();
    reversed.reverse();
    let (train2, _) = split_by_hash(&reversed, 0.8, 11).unwrap();
    let ids = |v: &[todflow::Trajectory]| {
        let mut ids: Vec<String> = v.iter().map(|t| t.id.clone()).collect();
        ids.sort();
        ids
    };
    assert_eq!(ids(&train), ids(&train2));
}
