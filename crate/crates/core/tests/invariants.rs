use proptest::prelude::*;

use welllog_ssl::dataset::{
    normalize, oversample_balance, stratified_kfold, ClassLabel, Dataset, LabelSet, Sample,
};
use welllog_ssl::eval::{agreement_count, balance_factor, class_counts, routing_table};
use welllog_ssl::mlp::{MlpConfig, MlpModel, Posterior};
use welllog_ssl::selftrain::{bucketize, select, BucketScheme, SelectionPolicy};

fn labelled(rows: &[(Vec<f64>, usize)], classes: usize) -> Dataset {
    let samples = rows
        .iter()
        .map(|(x, c)| Sample::labeled(x.clone(), ClassLabel(*c)))
        .collect();
    Dataset::new(
        rows[0].0.len(),
        LabelSet::numbered(classes).unwrap(),
        samples,
        "prop",
    )
    .unwrap()
}

/// Rows with at least `min_per_class` members of every class.
fn rows(classes: usize, min_per_class: usize) -> impl Strategy<Value = Vec<(Vec<f64>, usize)>> {
    (min_per_class..min_per_class + 12).prop_flat_map(move |per| {
        let extra = proptest::collection::vec(0..classes, 0..20);
        (extra, Just(per)).prop_flat_map(move |(extra, per)| {
            let labels: Vec<usize> = (0..classes)
                .flat_map(|c| std::iter::repeat_n(c, per))
                .chain(extra)
                .collect();
            let n = labels.len();
            (
                proptest::collection::vec(proptest::collection::vec(-50.0..50.0f64, 3), n),
                Just(labels),
            )
                .prop_map(|(xs, ls)| xs.into_iter().zip(ls).collect())
        })
    })
}

fn posterior(c: usize) -> impl Strategy<Value = Posterior> {
    proptest::collection::vec(-30.0..30.0f64, c).prop_map(|l| Posterior::softmax(&l))
}

proptest! {
    #[test]
    fn every_probability_lands_in_one_bucket(p in 0.0..=1.0f64) {
        let scheme = BucketScheme::standard();
        let hits = scheme.buckets().iter().filter(|b| b.contains(p)).count();
        prop_assert_eq!(hits, 1);
        prop_assert!(scheme.buckets()[scheme.locate(p)].contains(p));
    }

    #[test]
    fn bucket_table_counts_every_posterior(ps in proptest::collection::vec(posterior(4), 0..60)) {
        let table = bucketize(&ps, 4, &BucketScheme::standard());
        prop_assert_eq!(table.total(), ps.len());
        let by_class: Vec<usize> = table.class_totals();
        let argmax: Vec<ClassLabel> = ps.iter().map(Posterior::argmax).collect();
        prop_assert_eq!(by_class, class_counts(&argmax, 4));
    }

    #[test]
    fn softmax_is_a_distribution(logits in proptest::collection::vec(-1e4..1e4f64, 1..8)) {
        let p = Posterior::softmax(&logits);
        prop_assert!(p.probs().iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let top = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(logits[p.argmax().0], top);
    }

    #[test]
    fn softmax_ignores_a_common_shift(logits in proptest::collection::vec(-20.0..20.0f64, 2..6), shift in -100.0..100.0f64) {
        let a = Posterior::softmax(&logits);
        let moved: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let b = Posterior::softmax(&moved);
        for (x, y) in a.probs().iter().zip(b.probs()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn network_output_is_a_distribution(seed in any::<u64>(), x in proptest::collection::vec(-5.0..5.0f64, 6)) {
        let m = MlpModel::init(MlpConfig::new(6, 3).with_hidden(7).with_seed(seed)).unwrap();
        let p = m.predict_proba(&x).unwrap();
        prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        let back = MlpModel::from_json(&m.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.predict_proba(&x).unwrap(), p);
    }

    #[test]
    fn oversampling_balances_and_keeps_originals(data in rows(3, 1), seed in any::<u64>()) {
        let d = labelled(&data, 3);
        let out = oversample_balance(&d, seed).unwrap();
        let before = d.class_counts();
        let after = out.class_counts();
        let top = *before.iter().max().unwrap();
        prop_assert!(after.iter().all(|&c| c == top));
        prop_assert_eq!(&out.samples()[..d.len()], d.samples());
        for s in &out.samples()[d.len()..] {
            prop_assert!(d.samples().contains(s));
        }
    }

    #[test]
    fn folds_partition_and_stratify(data in rows(3, 5), k in 2usize..6, seed in any::<u64>()) {
        let d = labelled(&data, 3);
        let folds = stratified_kfold(&d, k, seed).unwrap();
        prop_assert_eq!(folds.len(), k);
        let mut seen = vec![0usize; d.len()];
        for f in &folds {
            prop_assert_eq!(f.train.len() + f.test.len(), d.len());
            for &i in &f.test {
                seen[i] += 1;
                prop_assert!(!f.train.contains(&i));
            }
        }
        prop_assert!(seen.iter().all(|&s| s == 1));
        let sizes: Vec<usize> = folds.iter().map(|f| f.test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for c in 0..3 {
            let per: Vec<usize> = folds
                .iter()
                .map(|f| f.test.iter().filter(|&&i| d.sample(i).label == Some(ClassLabel(c))).count())
                .collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn normalized_features_stay_in_unit_range(data in rows(2, 1)) {
        let d = labelled(&data, 2);
        let (n, params) = normalize(&d).unwrap();
        prop_assert!(n.samples().iter().flat_map(|s| &s.features).all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(params.apply(&d).unwrap(), n);
    }

    #[test]
    fn balance_factor_is_scale_invariant(counts in proptest::collection::vec(1usize..10_000, 1..6), k in 1usize..1000) {
        let scaled: Vec<usize> = counts.iter().map(|c| c * k).collect();
        let b = balance_factor(&counts).unwrap();
        prop_assert_eq!(b, balance_factor(&scaled).unwrap());
        prop_assert!(b > 0.0 && b <= 1.0);
    }

    #[test]
    fn agreement_is_symmetric(pairs in proptest::collection::vec((0usize..4, 0usize..4), 0..80)) {
        let a: Vec<ClassLabel> = pairs.iter().map(|p| ClassLabel(p.0)).collect();
        let b: Vec<ClassLabel> = pairs.iter().map(|p| ClassLabel(p.1)).collect();
        let n = agreement_count(&a, &b).unwrap();
        prop_assert_eq!(n, agreement_count(&b, &a).unwrap());
        prop_assert_eq!(agreement_count(&a, &a).unwrap(), a.len());
        prop_assert!(n <= a.len());
    }

    #[test]
    fn routing_table_accounts_for_every_sample(pairs in proptest::collection::vec((0usize..4, 0usize..4), 0..80)) {
        let truth: Vec<ClassLabel> = pairs.iter().map(|p| ClassLabel(p.0)).collect();
        let preds: Vec<ClassLabel> = pairs.iter().map(|p| ClassLabel(p.1)).collect();
        let t = routing_table(&truth, &preds, 4).unwrap();
        prop_assert_eq!(t.total(), pairs.len());
        let wrong: usize = (0..4).map(|c| t.misclassified(c)).sum();
        prop_assert_eq!(t.correct() + wrong, pairs.len());
        prop_assert_eq!(t.correct(), agreement_count(&truth, &preds).unwrap());
        for c in 0..4 {
            prop_assert_eq!(t.matrix[c].iter().sum::<usize>(), class_counts(&truth, 4)[c]);
        }
    }

    #[test]
    fn selection_respects_thresholds(
        ps in proptest::collection::vec(posterior(3), 0..50),
        thresholds in proptest::collection::vec(0.3..1.0f64, 3),
    ) {
        let candidates: Vec<(usize, Posterior)> = ps.into_iter().enumerate().collect();
        let policy = SelectionPolicy { thresholds: thresholds.clone(), caps: vec![None; 3] };
        let chosen = select(&candidates, &policy, 2);
        for s in &chosen {
            prop_assert!(s.max_prob > thresholds[s.label.0]);
            prop_assert_eq!(s.step, 2);
        }
        let expected = candidates
            .iter()
            .filter(|(_, p)| p.max_prob() > thresholds[p.argmax().0])
            .count();
        prop_assert_eq!(chosen.len(), expected);
        prop_assert!(chosen.windows(2).all(|w| w[0].pool_index < w[1].pool_index));
    }
}
