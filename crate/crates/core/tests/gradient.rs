use proptest::prelude::*;

use federank::model::{triple_gradient, triple_objective, ClientState, Regularization, ServerModel, Triple};

fn instance() -> impl Strategy<Value = (usize, Vec<f64>, [f64; 3])> {
    (1usize..=8).prop_flat_map(|f| {
        (
            Just(f),
            proptest::collection::vec(-1.0f64..1.0, 3 * f + 2),
            [0.0f64..0.1, 0.0f64..0.1, 0.0f64..0.01],
        )
    })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

proptest! {
    #[test]
    fn analytic_matches_finite_differences((f, v, l) in instance()) {
        let h = 1e-6;
        let p = v[..f].to_vec();
        let model = ServerModel::from_parts(f, v[f..3 * f].to_vec(), v[3 * f..].to_vec()).unwrap();
        let reg = Regularization { user: l[0], positive: l[1], negative: l[2] };
        let client = ClientState::new(0, p.clone(), vec![0]);
        let t = Triple { user: 0, pos: 0, neg: 1 };
        let g = triple_gradient(&model, &client, &t, &reg);
        for k in 0..f {
            let (mut a, mut b) = (p.clone(), p.clone());
            a[k] += h;
            b[k] -= h;
            let n = (triple_objective(&model, &a, &t, &reg) - triple_objective(&model, &b, &t, &reg)) / (2.0 * h);
            prop_assert!(rel(g.user[k], n) < 1e-4);
        }
        for item in [0, 1] {
            for k in 0..=f {
                let (mut a, mut b) = (model.clone(), model.clone());
                if k < f {
                    a.item_mut(item)[k] += h;
                    b.item_mut(item)[k] -= h;
                } else {
                    *a.bias_mut(item) += h;
                    *b.bias_mut(item) -= h;
                }
                let n = (triple_objective(&a, &p, &t, &reg) - triple_objective(&b, &p, &t, &reg)) / (2.0 * h);
                let row = &g.items[&item];
                let analytic = if k < f { row.embedding[k] } else { row.bias };
                prop_assert!(rel(analytic, n) < 1e-4, "item {item} k {k}: {analytic} vs {n}");
            }
        }
    }
}
