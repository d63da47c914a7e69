use proptest::prelude::*;
use rmtlab_symbolic::jk::{jk_matrices, locus_from_decay};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn closed_form_rows_hold_on_random_grids(
        incs in prop::collection::vec(0.05f64..2.0, 1..=6)
    ) {
        let mut times = vec![0.0];
        for s in &incs {
            times.push(times.last().unwrap() + s);
        }
        let r = jk_matrices(&times).unwrap();
        prop_assert!(r.j_row_error <= 1e-12, "J {}", r.j_row_error);
        prop_assert!(r.k_row_error <= 1e-12, "K {}", r.k_row_error);
    }
}

#[test]
fn two_slices_by_hand() {
    let c = 0.5f64;
    let r = jk_matrices(&[0.0, 2f64.ln()]).unwrap();
    let expect = [[-0.5, -c / 2.0], [-c / 2.0, -0.5]];
    for (row, want) in r.j.iter().zip(&expect) {
        for (a, b) in row.iter().zip(want) {
            assert!((a - b).abs() < 1e-14);
        }
    }
    let (t2, c11) = locus_from_decay(&[c]);
    assert!((t2[0] + 4.0 / 3.0).abs() < 1e-15 && (t2[1] + 4.0 / 3.0).abs() < 1e-15);
    assert!((c11[0] - 4.0 / 3.0).abs() < 1e-15);
}

#[test]
fn corner_of_k() {
    let times = [0.0, 0.3, 1.1, 2.0];
    let r = jk_matrices(&times).unwrap();
    assert!((r.k[0][3] + 0.5 * (-2.0f64 * 2.0).exp()).abs() < 1e-13);
}
