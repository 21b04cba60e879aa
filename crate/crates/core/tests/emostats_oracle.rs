use emovoice::emostats::{compute_transform_params, ConditionEmotionTable, StatsReport, TransformParams};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type V = [f64; 6];
type Obs = Vec<(String, String, V)>;

/// Full table: every speaker has 1..=3 utterances in every condition.
fn random_observations(rng: &mut ChaCha8Rng, n_t: usize, n_c: usize) -> Obs {
    let mut out = Vec::new();
    for t in 0..n_t {
        for c in 0..n_c {
            for _ in 0..rng.random_range(1..=3) {
                let v: V = std::array::from_fn(|_| rng.random_range(1.0..7.0));
                out.push((format!("t{t}"), format!("c{c}"), v));
            }
        }
    }
    out
}

fn table(obs: &Obs) -> ConditionEmotionTable {
    ConditionEmotionTable::from_observations(obs).unwrap()
}

struct Oracle {
    e_c: Vec<V>,
    lambda: f64,
    transformed: Vec<V>,
    v_t: V,
}

/// Straight recomputation from the raw observations.
fn oracle(obs: &Obs, n_t: usize, n_c: usize, a: &V, alpha: f64) -> Oracle {
    let mut cell = vec![vec![[0.0; 6]; n_c]; n_t];
    for (t, row) in cell.iter_mut().enumerate() {
        for (c, slot) in row.iter_mut().enumerate() {
            let (st, sc) = (format!("t{t}"), format!("c{c}"));
            let hits: Vec<&V> = obs.iter().filter(|o| o.0 == st && o.1 == sc).map(|o| &o.2).collect();
            for d in 0..6 {
                slot[d] = hits.iter().map(|v| v[d]).sum::<f64>() / hits.len() as f64;
            }
        }
    }
    let mut e_c = vec![[0.0; 6]; n_c];
    for c in 0..n_c {
        for d in 0..6 {
            e_c[c][d] = (0..n_t).map(|t| cell[t][c][d]).sum::<f64>() / n_t as f64;
        }
    }
    let mut e = [0.0; 6];
    let mut v_t = [0.0; 6];
    let mut v_e = [0.0; 6];
    for d in 0..6 {
        e[d] = e_c.iter().map(|v| v[d]).sum::<f64>() / n_c as f64;
        v_e[d] = e_c.iter().map(|v| (v[d] - e[d]).powi(2)).sum::<f64>() / n_c as f64;
        let mut acc = 0.0;
        for row in &cell {
            let m = row.iter().map(|v| v[d]).sum::<f64>() / n_c as f64;
            acc += row.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / n_c as f64;
        }
        v_t[d] = acc / n_t as f64;
    }
    let lambda = (v_t.iter().sum::<f64>() / v_e.iter().sum::<f64>()).sqrt();
    let transformed = e_c
        .iter()
        .map(|ec| std::array::from_fn(|d| alpha * lambda * (ec[d] - e[d]) + a[d]))
        .collect();
    Oracle { e_c, lambda, transformed, v_t }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn full_chain_matches_recomputation_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for case in 0..100 {
        let n_t = rng.random_range(2..=6);
        let n_c = rng.random_range(2..=6);
        let obs = random_observations(&mut rng, n_t, n_c);
        let a: V = std::array::from_fn(|_| rng.random_range(3.0..5.0));
        let alpha = [0.0, 0.5, 1.0, 1.1][case % 4];
        let want = oracle(&obs, n_t, n_c, &a, alpha);

        let tab = table(&obs);
        let p = compute_transform_params(&tab, &a, alpha).unwrap();
        assert!(close(p.lambda, want.lambda, 1e-12), "case {case}: lambda {} vs {}", p.lambda, want.lambda);
        for c in 0..n_c {
            for d in 0..6 {
                assert!(close(tab.means()[c][d], want.e_c[c][d], 1e-12));
                assert!(close(p.apply(&tab.means()[c]).unwrap()[d], want.transformed[c][d], 1e-12));
            }
        }
        for d in 0..6 {
            assert!(close(p.v_t[d], want.v_t[d], 1e-12));
        }
    }
}

#[test]
fn worked_two_by_two_example() {
    let dim0 = |x: f64| -> V { [x, 4.0, 4.0, 4.0, 4.0, 4.0] };
    let obs: Obs = [("A", "c1", 2.0), ("A", "c2", 4.0), ("B", "c1", 3.0), ("B", "c2", 7.0)]
        .iter()
        .map(|(t, c, x)| (t.to_string(), c.to_string(), dim0(*x)))
        .collect();
    let p = compute_transform_params(&table(&obs), &[4.0; 6], 1.1).unwrap();
    // speaker variances 1 and 4; condition means 2.5 and 5.5
    assert!((p.lambda - (2.5f64 / 2.25).sqrt()).abs() < 1e-12);
    let t = table(&obs);
    let out = p.apply(&t.means()[0]).unwrap();
    assert!((out[0] - 2.26075).abs() < 1e-5);
}

fn table_strategy() -> impl Strategy<Value = (Obs, usize, usize, V)> {
    (2usize..=6, 2usize..=6, any::<u64>()).prop_map(|(n_t, n_c, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obs = random_observations(&mut rng, n_t, n_c);
        let a: V = std::array::from_fn(|_| rng.random_range(2.0..6.0));
        (obs, n_t, n_c, a)
    })
}

fn transformed_all(p: &TransformParams, tab: &ConditionEmotionTable) -> Vec<V> {
    tab.means().iter().map(|m| p.apply(m).unwrap()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mean_of_transformed_is_corpus_mean((obs, _, n_c, a) in table_strategy()) {
        let tab = table(&obs);
        for alpha in [0.0, 0.5, 1.0, 1.1] {
            let p = compute_transform_params(&tab, &a, alpha).unwrap();
            let out = transformed_all(&p, &tab);
            for d in 0..6 {
                let m = out.iter().map(|v| v[d]).sum::<f64>() / n_c as f64;
                prop_assert!((m - a[d]).abs() < 1e-12, "alpha {alpha} dim {d}: {m} vs {}", a[d]);
            }
        }
    }

    #[test]
    fn alpha_zero_is_exactly_corpus_mean((obs, _, _, a) in table_strategy()) {
        let tab = table(&obs);
        let p = compute_transform_params(&tab, &a, 0.0).unwrap();
        for v in transformed_all(&p, &tab) {
            prop_assert_eq!(v, a);
        }
    }

    #[test]
    fn unit_alpha_imposes_speaker_variance((obs, _, n_c, a) in table_strategy()) {
        let tab = table(&obs);
        let p = compute_transform_params(&tab, &a, 1.0).unwrap();
        let out = transformed_all(&p, &tab);
        let mut total = 0.0;
        for d in 0..6 {
            let m = out.iter().map(|v| v[d]).sum::<f64>() / n_c as f64;
            total += out.iter().map(|v| (v[d] - m).powi(2)).sum::<f64>() / n_c as f64;
        }
        let want: f64 = p.v_t.iter().sum();
        prop_assert!((total - want).abs() < 1e-9 * (1.0 + want), "{total} vs {want}");
    }

    #[test]
    fn transform_is_affine_in_condition_mean(
        (obs, _, _, a) in table_strategy(),
        s in 0.0f64..1.0,
        x in prop::array::uniform6(1.0f64..7.0),
        y in prop::array::uniform6(1.0f64..7.0),
    ) {
        let p = compute_transform_params(&table(&obs), &a, 1.1).unwrap();
        let mix: V = std::array::from_fn(|d| s * x[d] + (1.0 - s) * y[d]);
        let (fx, fy, fm) = (p.apply(&x).unwrap(), p.apply(&y).unwrap(), p.apply(&mix).unwrap());
        for d in 0..6 {
            prop_assert!((fm[d] - (s * fx[d] + (1.0 - s) * fy[d])).abs() < 1e-9);
        }
    }

    #[test]
    fn lambda_ignores_translation_and_scale(
        (obs, _, _, a) in table_strategy(),
        shift in -1.0f64..1.0,
        scale in 0.2f64..3.0,
    ) {
        let base = compute_transform_params(&table(&obs), &a, 1.0).unwrap();
        let moved: Obs = obs.iter().map(|(t, c, v)| (t.clone(), c.clone(), v.map(|x| scale * x + shift))).collect();
        let p = compute_transform_params(&table(&moved), &a, 1.0).unwrap();
        prop_assert!((p.lambda - base.lambda).abs() < 1e-9 * base.lambda);
        for d in 0..6 {
            prop_assert!((p.e[d] - (scale * base.e[d] + shift)).abs() < 1e-9);
        }
    }
}

#[test]
fn report_round_trips_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let obs = random_observations(&mut rng, 3, 4);
    let tab = table(&obs);
    let p = compute_transform_params(&tab, &[4.0; 6], 1.1).unwrap();
    let report = StatsReport::build(&tab, &p, false, "0123456789abcdef").unwrap();
    let back = StatsReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
    let zero = back.with_alpha(0.0).unwrap();
    for c in &zero.conditions {
        assert_eq!(c.transformed, [4.0; 6]);
    }
}
