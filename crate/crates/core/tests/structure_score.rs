use ionmorph::scoring::{aggregate_score, softmax, ClassProbabilities, ScoreError};
use ionmorph::{StructuralClass, TargetSet};
use proptest::prelude::*;

fn logits() -> impl Strategy<Value = [f64; 6]> {
    proptest::array::uniform6(-30.0f64..30.0)
}

#[test]
fn reference_value() {
    // e^3 / (e^3 + 5), evaluated at 50 digits
    let p = softmax(&[3.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((p.get(StructuralClass::Structured) - 0.800_681_962_068_020_176_1).abs() < 1e-15);
}

#[test]
fn default_targets_sum_three_classes() {
    let p = ClassProbabilities::new([0.1, 0.2, 0.3, 0.15, 0.05, 0.2]).unwrap();
    let s = aggregate_score(&p, TargetSet::default_informative());
    assert!((s.value - (0.1 + 0.3 + 0.2)).abs() < 1e-15);
    assert_eq!(s.target_set, "structured,negative,localized".parse::<TargetSet>().unwrap());
}

#[test]
fn rejects_bad_inputs() {
    assert!(matches!(
        softmax(&[0.0, f64::NAN, 0.0, 0.0, 0.0, 0.0]),
        Err(ScoreError::NonFiniteLogit { index: 1, .. })
    ));
    assert!(ClassProbabilities::new([0.5, 0.5, 0.5, 0.0, 0.0, 0.0]).is_err());
    assert!(ClassProbabilities::new([1.5, -0.5, 0.0, 0.0, 0.0, 0.0]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn sums_to_one_and_shift_invariant(l in logits(), c in -500.0f64..500.0) {
        let p = softmax(&l).unwrap();
        prop_assert!((p.values().iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        let shifted = softmax(&l.map(|v| v + c)).unwrap();
        for (a, b) in p.values().iter().zip(shifted.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn subset_aggregation(l in logits(), a in 0u8..64, b in 0u8..64) {
        let p = softmax(&l).unwrap();
        let (a, b) = (TargetSet::from_bits(a), TargetSet::from_bits(b));
        let union = TargetSet::from_bits(a.bits() | b.bits());
        let sa = aggregate_score(&p, a).value;
        prop_assert!((0.0..=1.0 + 1e-12).contains(&sa));
        prop_assert!(sa <= aggregate_score(&p, union).value + 1e-15);
        if a.bits() & b.bits() == 0 {
            let sum = sa + aggregate_score(&p, b).value;
            prop_assert!((sum - aggregate_score(&p, union).value).abs() <= 1e-12);
        }
        prop_assert_eq!(aggregate_score(&p, TargetSet::EMPTY).value, 0.0);
        prop_assert!((aggregate_score(&p, TargetSet::ALL).value - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn argmax_has_largest_probability(l in logits()) {
        let p = softmax(&l).unwrap();
        let best = p.argmax();
        prop_assert!(p.values().iter().all(|&v| v <= p.get(best)));
    }
}
