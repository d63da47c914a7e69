use rmtlab_symbolic::commutators::check_commutators;
use rmtlab_symbolic::corollary::{check_corollary_m1, check_corollary_m2};
use rmtlab_symbolic::jet::jet_order;
use rmtlab_symbolic::series::series_cancellation;
use rmtlab_symbolic::theorem::expand_airy_theorem;
use rmtlab_symbolic::AiryForm;

#[test]
fn two_time_fixture_matches_exactly() {
    let r = check_corollary_m1().unwrap();
    assert_eq!(r.status, "exact-match");
    assert!(r.comparisons[0].exact());
}

#[test]
fn three_time_fixture_matches_modulo_flagged_sites() {
    let r = check_corollary_m2().unwrap();
    assert_eq!(r.status, "match-modulo-flagged-typos");
    assert!(!r.comparisons[0].exact());
    // With both flagged sites read as their candidates every term agrees.
    assert!(r.comparisons[1].exact());
    assert_eq!(r.comparisons[1].factor.as_deref(), Some("2"));
    assert_eq!(r.typos.len(), 2);
    for t in &r.typos {
        assert!(t.mismatches_when_printed > 0);
        assert!(t.candidate_resolves);
    }
    // The theorem form differs from the written equation by the extra term.
    assert!(!r.other_form.unwrap().exact());
}

#[test]
fn third_order_claim_holds() {
    for m in 1..=3 {
        for form in [AiryForm::Theorem, AiryForm::Limit] {
            let (_, e) = expand_airy_theorem(m, form).unwrap();
            assert!(e.max_jet_order() <= 3);
            assert!(e.degree() <= 2);
            for (mono, _) in e.terms() {
                assert!(mono.iter().all(|(j, _)| jet_order(j) >= 1));
            }
        }
    }
}

#[test]
fn series_cancels_for_up_to_four_times() {
    for m in 1..=3 {
        let r = series_cancellation(m, 4).unwrap();
        assert!(r.leading_orders_vanish, "m={m}: {r:?}");
        assert!(r.matches_limit_form, "m={m}: {r:?}");
        assert_eq!(r.limit_factor.as_deref(), Some("-2"));
        // Only two times reduce the limit form to the theorem form.
        assert_eq!(r.matches_theorem_form, m == 1);
    }
}

#[test]
fn dropping_the_constant_keeps_the_leading_orders_but_breaks_the_limit() {
    for m in 1..=3 {
        let r = series_cancellation(m, 4).unwrap();
        assert!(r.control_leading_orders_vanish);
        assert_eq!(r.control_first_nonzero_nbar_power, Some(1));
        assert!(!r.control_matches_limit_form);
    }
}

#[test]
fn higher_truncation_gives_the_same_answer() {
    let a = series_cancellation(2, 4).unwrap();
    let b = series_cancellation(2, 6).unwrap();
    assert_eq!(a.limit_factor, b.limit_factor);
    assert!(b.leading_orders_vanish);
}

#[test]
fn commutator_formulas() {
    for m in 1..=3 {
        let r = check_commutators(m, 4).unwrap();
        let c = &r.checks;
        assert!(c[0].holds_as_written);
        assert!(c[1].holds_with_opposite_sign && !c[1].holds_as_written);
        assert!(c[2].holds_as_written);
        assert!(c[3].holds_as_written);
        assert!(!c[4].holds_as_written);
        assert_eq!(c[4].amended_holds, Some(true));
    }
}
