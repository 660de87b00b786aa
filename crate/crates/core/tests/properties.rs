mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use atgforge::corpus::random_proof;
use atgforge::expr::{parse_expr, BinOp, Expr};
use atgforge::extract::{build_proof_tree, extract_p3s, replays_to_tip};
use atgforge::prover::MockProver;
use atgforge::record::{decode_record, encode_record, normalize_text, tactics, DatasetStats, Premise, TheoremRecord};
use atgforge::search::{backpropagate, puct_score, ChildEdge, GuidanceModel, FEATURE_DIM};
use atgforge::record::TacticStep;
use atgforge::validate::{dedup, dedup_key, ucb1, ucb1_select, RepairNodeStats};

fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u64..20).prop_map(Expr::Num),
        prop::sample::select(vec!["x", "y", "z", "n"]).prop_map(|v| Expr::Var(v.to_string())),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (prop::sample::select(vec![BinOp::Add, BinOp::Sub, BinOp::Mul]), inner.clone(), inner.clone())
                .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
            inner.prop_map(|a| Expr::App("f".into(), vec![a])),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn normalization_is_idempotent(s in "\\PC{0,40}") {
        let once = normalize_text(&s);
        prop_assert_eq!(normalize_text(&once), once);
    }

    #[test]
    fn records_round_trip(
        name in "[a-z][a-z0-9_]{0,10}",
        goal in prop::sample::select(vec!["x = x", "x + 0 = x", "∑ k in range n, f k = 0", "x * y ≤ y * x"]),
        proof in prop::collection::vec(prop::sample::select(vec!["rfl", "simp", "rw [add_comm]", "rw [← mul_one] at h"]), 0..5),
    ) {
        let rec = TheoremRecord::seed(&name, vec![Premise::new("x", "ℕ")], goal, tactics(&proof));
        let line = encode_record(&rec).unwrap();
        prop_assert_eq!(decode_record(&line).unwrap(), rec);
    }

    #[test]
    fn exprs_print_and_parse_back(e in expr()) {
        let printed = e.to_string();
        prop_assert_eq!(parse_expr(&printed).unwrap(), e);
    }

    #[test]
    fn puct_matches_formula(q in -1.0f64..=1.0, n in 0u32..100, p in 0.0f64..=1.0, extra in 0u32..500, c in 0.0f64..4.0) {
        let mut edge = ChildEdge::new(TacticStep::parse("rfl"), p, 0, 1);
        edge.n = n;
        edge.q = q;
        let sum = n + extra;
        let expected = if n == 0 { 0.0 } else { q } + c * p * f64::from(sum).sqrt() / (f64::from(n) + 1.0);
        prop_assert!((puct_score(&edge, sum, c) - expected).abs() <= 1e-12);
    }

    #[test]
    fn backprop_updates_mean(values in prop::collection::vec(-1.0f64..=1.0, 1..20)) {
        let mut edge = ChildEdge::new(TacticStep::parse("rfl"), 0.5, 0, 1);
        for v in &values {
            backpropagate([&mut edge], *v);
        }
        let sum: f64 = values.iter().sum();
        prop_assert_eq!(edge.n as usize, values.len());
        prop_assert!((edge.w - sum).abs() < 1e-9);
        prop_assert!((edge.q - sum / values.len() as f64).abs() < 1e-9);
    }

    #[test]
    fn ucb1_tries_unvisited_children_first(
        stats in prop::collection::vec((0.0f64..10.0, 0u32..20), 1..10),
        c in 0.1f64..3.0,
    ) {
        let n_p = stats.iter().map(|s| s.1).sum::<u32>().max(1);
        let children: Vec<RepairNodeStats> = stats.iter().map(|&(w, n)| RepairNodeStats { w: w.min(f64::from(n)), n, n_p, c }).collect();
        let pick = ucb1_select(&children).unwrap();
        match children.iter().position(|s| s.n == 0) {
            Some(first) => prop_assert_eq!(pick, first),
            None => {
                let best = children.iter().map(ucb1).fold(f64::NEG_INFINITY, f64::max);
                prop_assert_eq!(ucb1(&children[pick]), best);
            }
        }
    }

    #[test]
    fn dedup_is_idempotent(seed in any::<u64>(), n in 0usize..200) {
        let recs = common::random_records(n, seed);
        let (once, dropped) = dedup(recs.clone());
        prop_assert_eq!(once.len() + dropped, n);
        let (twice, again) = dedup(once.clone());
        prop_assert_eq!(again, 0);
        prop_assert_eq!(&twice, &once);
        let keys: std::collections::HashSet<_> = once.iter().map(dedup_key).collect();
        prop_assert_eq!(keys.len(), once.len());
    }

    #[test]
    fn critic_stays_in_range(seed in any::<u64>(), xs in prop::collection::vec(-1e3f64..1e3, FEATURE_DIM)) {
        let m = GuidanceModel::new(&mut ChaCha8Rng::seed_from_u64(seed));
        let x: [f64; FEATURE_DIM] = xs.try_into().unwrap();
        let v = m.critic_value(&x);
        prop_assert!((-1.0..=1.0).contains(&v));
    }

    #[test]
    fn stats_subtotal_identity(
        dedup_steps in prop::collection::vec(0usize..6, 0..30),
        correct in prop::collection::vec(0usize..6, 0..10),
        corrected in prop::collection::vec(0usize..6, 0..10),
        extra in 0u64..100,
    ) {
        let n_candidate = (dedup_steps.len() as u64) + extra;
        let s = DatasetStats::from_steps(n_candidate, &dedup_steps, &correct, &corrected);
        prop_assert!(s.check().is_ok());
        prop_assert_eq!(s.n_new(), s.n_correct() + s.n_corrected());
        let m = s.merged(&s);
        prop_assert!(m.check().is_ok());
        prop_assert_eq!(m.n_new(), 2 * s.n_new());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn p3s_are_strict_distinct_replayable_prefixes(seed in any::<u64>(), len in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = random_proof(&mut rng, len, "p");
        let mut prover = MockProver::default();
        let tree = build_proof_tree(&t, &mut prover).unwrap();
        let p3s = extract_p3s(&tree);
        prop_assert_eq!(p3s.len(), len - 1);
        for (i, p) in p3s.iter().enumerate() {
            prop_assert!(!p.prefix.is_empty() && p.prefix.len() < t.proof.len());
            prop_assert_eq!(&p.prefix[..], &t.proof[..p.prefix.len()]);
            prop_assert!(p3s[..i].iter().all(|q| q.prefix != p.prefix));
            prop_assert!(replays_to_tip(p, &mut prover).unwrap());
        }
    }
}
