use lengen::theorems::{run_absolute, run_relative, verify_absolute, verify_relative, verify_shift_invariance};
use proptest::prelude::*;

#[test]
fn absolute_head_writes_inverse_position() {
    let run = run_absolute(3, 8, 2, 11).unwrap();
    assert_eq!(run.third_dim[0], 1.0);
    assert_eq!(run.third_dim[3], 0.25);
    assert!(run.others_zero);
    assert!(run.keys_identical);

    let cert = verify_absolute(512, 16, 4, &[0, 1, 2], 1e-9).unwrap();
    assert!(cert.pass, "{cert:?}");
    let json = serde_json::to_value(&cert).unwrap();
    for key in ["theorem", "T", "d", "h", "max_error", "pass"] {
        assert!(json.get(key).is_some(), "{key}");
    }
}

#[test]
fn relative_logits_decompose() {
    // Without content rows the logit is exactly i - t.
    assert_eq!(run_relative(40, 8, 2, 1).unwrap(), 0.0);
    assert!(run_relative(128, 16, 4, 2).unwrap() < 1e-9);
    let cert = verify_relative(128, 16, 16, &[5], 1e-9).unwrap();
    assert!(cert.pass, "{cert:?}");
}

#[test]
fn shift_invariance_with_constant_content() {
    assert_eq!(verify_shift_invariance(30, 0, 16, 4, 3).unwrap(), 0.0);
    assert!(verify_shift_invariance(30, 1, 16, 4, 3).unwrap() < 1e-10);
    assert!(verify_shift_invariance(64, 17, 16, 8, 4).unwrap() < 1e-10);
    assert!(verify_shift_invariance(30, 31, 16, 4, 3).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn absolute_holds_for_any_seed(t in 0usize..=512, seed in any::<u64>(), hd in 0usize..3) {
        let (d, h) = [(3, 1), (12, 3), (32, 8)][hd];
        let run = run_absolute(t, d, h, seed).unwrap();
        prop_assert!(run.max_error < 1e-9);
        prop_assert!(run.others_zero && run.keys_identical);
    }

    #[test]
    fn relative_holds_up_to_h16(t in 1usize..=128, seed in any::<u64>(), h in prop::sample::select(vec![2usize, 4, 8, 16])) {
        prop_assert!(run_relative(t, 16, h, seed).unwrap() < 1e-9);
    }
}
