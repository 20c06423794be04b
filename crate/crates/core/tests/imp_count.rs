use clipped_ofdm::imp_count::*;
use proptest::prelude::*;

// ordered triples (i, j, k) with i + j − k = s and k ∉ {i, j}
fn enumerate(n: usize) -> Vec<u64> {
    let mut out = vec![0u64; n];
    for i in 1..=n {
        for j in 1..=n {
            for k in 1..=n {
                if k == i || k == j {
                    continue;
                }
                let s = (i + j) as i64 - k as i64;
                if (1..=n as i64).contains(&s) {
                    out[s as usize - 1] += 1;
                }
            }
        }
    }
    out
}

#[test]
fn single_subcarrier_has_no_products() {
    let p = count_third_order(1).unwrap();
    assert_eq!(p.phi3, vec![0]);
    assert_eq!(p.phi, 0);
    assert_eq!(count_odd_order_bruteforce(1, 3).unwrap(), vec![0]);
}

#[test]
fn matches_enumeration() {
    assert_eq!(count_third_order(4).unwrap().phi3, enumerate(4));
    assert_eq!(count_third_order(4).unwrap().phi3, vec![3, 5, 5, 3]);
    let p = count_third_order(64).unwrap();
    let oracle = enumerate(64);
    assert_eq!(p.phi3, oracle);
    assert_eq!(p.phi, oracle.iter().sum::<u64>());
    assert_eq!(p.phi, 166_656);
    assert!(p.phi3[31] > p.phi3[0]);
}

#[test]
fn bruteforce_agrees_up_to_32() {
    for n in 1..=MAX_BRUTEFORCE_SUBCARRIERS {
        assert_eq!(count_third_order(n).unwrap().phi3, count_odd_order_bruteforce(n, 3).unwrap(), "N_S = {n}");
    }
}

#[test]
fn fifth_order_counts() {
    let c = count_odd_order_bruteforce(8, 5).unwrap();
    assert!(c[3] > 0 && c[4] > 0);
    assert!(count_odd_order_bruteforce(8, 4).is_err());
    assert!(count_odd_order_bruteforce(MAX_BRUTEFORCE_SUBCARRIERS + 1, 3).is_err());
}

#[test]
fn cubic_growth() {
    for n in [16, 32, 64] {
        let r = count_third_order(2 * n).unwrap().phi as f64 / count_third_order(n).unwrap().phi as f64;
        assert!((7.0..=9.0).contains(&r), "Phi({})/Phi({n}) = {r}", 2 * n);
    }
}

#[test]
fn range_checks() {
    assert!(count_third_order(0).is_err());
    assert!(count_third_order(MAX_SUBCARRIERS + 1).is_err());
}

#[test]
fn cache_is_shared_across_threads() {
    let handles: Vec<_> = (0..4).map(|_| std::thread::spawn(|| cached_third_order(48).unwrap())).collect();
    let profiles: Vec<_> = handles.into_iter().map(|h| h.join().unwrap()).collect();
    for p in &profiles {
        assert_eq!(**p, count_third_order(48).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn reversal_symmetry_and_total(n in 1usize..=256) {
        let p = count_third_order(n).unwrap();
        prop_assert_eq!(p.phi3.len(), n);
        prop_assert_eq!(p.phi, p.phi3.iter().sum::<u64>());
        for s in 0..n {
            prop_assert_eq!(p.phi3[s], p.phi3[n - 1 - s]);
        }
    }
}
