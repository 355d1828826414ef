use proptest::prelude::*;

use qhybrid::data::synthetic::{teacher_dataset, TeacherSpec};
use qhybrid::data::{
    prepare, prepare_with_split, random_holdout, stratified_kfold, stratify, PrepareConfig,
};
use qhybrid::metrics::auc;

/// Pair counting over every (responder, non-responder) pair.
fn brute_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                den += 1.0;
                num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    num / den
}

fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<bool>)> {
    (2usize..=200).prop_flat_map(|n| {
        (
            // Coarse values so ties are common.
            prop::collection::vec((-20i32..20).prop_map(|v| f64::from(v) / 4.0), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_filter("both classes present", |(_, l)| l.iter().any(|&b| b) && l.iter().any(|&b| !b))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn auc_matches_pair_counting((s, l) in scored()) {
        let a = auc(&s, &l).unwrap();
        prop_assert!((a - brute_auc(&s, &l)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn auc_is_invariant_to_monotone_transforms((s, l) in scored()) {
        let t: Vec<f64> = s.iter().map(|v| (v * 0.7).exp() * 3.0 - 1.0).collect();
        prop_assert!((auc(&s, &l).unwrap() - auc(&t, &l).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn auc_complement_symmetry((s, l) in scored()) {
        let neg: Vec<f64> = s.iter().map(|v| -v).collect();
        let flipped: Vec<bool> = l.iter().map(|b| !b).collect();
        let a = auc(&s, &l).unwrap();
        prop_assert!((auc(&neg, &l).unwrap() - (1.0 - a)).abs() < 1e-12);
        prop_assert!((auc(&s, &flipped).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn kfold_is_a_balanced_partition(
        strata in prop::collection::vec(0usize..4, 10..300),
        k in 2usize..=10,
        seed in any::<u64>(),
    ) {
        prop_assume!(k <= strata.len());
        let folds = stratified_kfold(&strata, k, seed).unwrap();
        prop_assert_eq!(folds.len(), strata.len());
        prop_assert!(folds.iter().all(|&f| f < k));
        let sizes: Vec<usize> = (0..k).map(|f| folds.iter().filter(|&&x| x == f).count()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1, "{:?}", sizes);
        for s in 0..4 {
            let per: Vec<usize> = (0..k)
                .map(|f| (0..strata.len()).filter(|&i| strata[i] == s && folds[i] == f).count())
                .collect();
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1, "stratum {}: {:?}", s, per);
        }
        prop_assert_eq!(stratified_kfold(&strata, k, seed).unwrap(), folds);
    }

    #[test]
    fn holdout_partitions(n in 10usize..2000, seed in any::<u64>()) {
        let (train, test) = random_holdout(n, 0.1, seed).unwrap();
        prop_assert_eq!(test.len(), (n as f64 * 0.1).round() as usize);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn strata_are_equal_width(labels in prop::collection::vec(-1.0f64..1.0, 2..100)) {
        let s = stratify(&labels, 4);
        let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (v, b) in labels.iter().zip(&s) {
            prop_assert!(*b < 4);
            if hi > lo {
                let expected = (((v - lo) / (hi - lo) * 4.0).floor() as usize).min(3);
                // Equal-width edges computed two ways may differ by one ulp.
                prop_assert!(b.abs_diff(expected) <= 1);
            }
        }
        if let (Some(imax), Some(imin)) = (
            labels.iter().position(|&v| v == hi),
            labels.iter().position(|&v| v == lo),
        ) {
            if hi > lo {
                prop_assert_eq!(s[imax], 3);
                prop_assert_eq!(s[imin], 0);
            }
        }
    }
}

fn small_config(seed: u64) -> PrepareConfig {
    PrepareConfig {
        repeats: 3,
        seed,
        ..PrepareConfig::default()
    }
}

#[test]
fn test_rows_never_influence_preprocessing() {
    let spec = TeacherSpec {
        samples: 200,
        genes: 30,
        seed: 5,
        ..TeacherSpec::default()
    };
    let ds = teacher_dataset("LEAK", &spec);
    let cfg = small_config(9);
    let base = prepare(&ds, &cfg).unwrap();

    let mut poisoned = ds.clone();
    for &i in &base.split.test {
        poisoned.responses.records[i].log_ic50 = 1e3;
        poisoned.responses.records[i].responder = !poisoned.responses.records[i].responder;
        poisoned.expression.values.row_mut(i).fill(-50.0);
    }
    let again = prepare(&poisoned, &cfg).unwrap();
    assert_eq!(again.split, base.split);
    assert_eq!(again.genes, base.genes);
    assert_eq!(again.labels, base.labels);
    assert_eq!(again.pool().x, base.pool().x);
    assert_eq!(again.pool().targets, base.pool().targets);
}

#[test]
fn splits_cover_the_pool_without_overlap() {
    let ds = teacher_dataset("COVER", &TeacherSpec { samples: 150, ..TeacherSpec::default() });
    let p = prepare(&ds, &small_config(2)).unwrap();
    let m = p.split.train.len();
    let mut inner: Vec<usize> = p.split.inner_train.iter().chain(&p.split.inner_val).copied().collect();
    inner.sort_unstable();
    assert_eq!(inner, (0..m).collect::<Vec<_>>());
    assert!((m / 5..=m / 5 + 1).contains(&p.split.inner_val.len()));
    for r in 0..3 {
        let mut seen = 0;
        for f in 0..5 {
            let (train, val) = p.cv_fold(r, f);
            assert_eq!(train.len() + val.len(), m);
            seen += val.len();
        }
        assert_eq!(seen, m);
    }
}

#[test]
fn exported_split_reproduces_preparation() {
    let ds = teacher_dataset("SPLIT", &TeacherSpec { samples: 120, ..TeacherSpec::default() });
    let cfg = small_config(4);
    let p = prepare(&ds, &cfg).unwrap();
    let json = serde_json::to_string(&p.split).unwrap();
    let q = prepare_with_split(&ds, &cfg, serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(q.genes, p.genes);
    assert_eq!(q.samples.x, p.samples.x);
    assert_eq!(q.split, p.split);

    let mut broken = p.split.clone();
    broken.test.push(broken.train[0]);
    assert!(prepare_with_split(&ds, &cfg, broken).is_err());
}
