use proptest::prelude::*;
use tev_numerics::rng::uniform;
use tev_numerics::{
    seeded, softmax_in_place, Adam, AdamConfig, ConvGeometry, Graph, Linear, LrSchedule, Mode, Padding, ParamSet,
    Tensor,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn softmax_rows_sum_to_one(row in prop::collection::vec(-1000.0f32..1000.0, 1..16)) {
        let mut p = row.clone();
        softmax_in_place(&mut p);
        let total: f64 = p.iter().map(|&v| v as f64).sum();
        prop_assert!((total - 1.0).abs() <= 1e-6, "sum {total}");
        prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}

proptest! {
    #[test]
    fn same_padding_preserves_size(
        k in prop::sample::select(vec![1usize, 3, 5, 7]),
        h in 7usize..40,
        w in 7usize..40,
        c in 1usize..4,
    ) {
        let geom = ConvGeometry::new(c, h, w, k, 1, Padding::Same).unwrap();
        prop_assert_eq!((geom.out_height, geom.out_width), (h, w));

        let mut g = Graph::new();
        let x = g.constant(Tensor::full([c, h, w], 0.5));
        let kern = g.constant(Tensor::full([2, c, k, k], 0.1));
        let y = g.conv2d(x, kern, 1, Padding::Same).unwrap();
        prop_assert_eq!(g.shape(y), &[2, h, w]);
    }

    #[test]
    fn reshape_keeps_element_count(a in 1usize..6, b in 1usize..6, c in 1usize..6) {
        let t = Tensor::zeros([a, b, c]);
        prop_assert!(t.reshape([a * b, c]).is_ok());
        prop_assert!(t.reshape([a * b * c + 1]).is_err());
    }
}

fn train_steps(seed: u64, steps: usize) -> ParamSet {
    let fc1 = Linear::new("fc1", 8, 6);
    let fc2 = Linear::new("fc2", 6, 3);
    let mut rng = seeded(seed);
    let mut params = ParamSet::new();
    fc1.init(&mut params, &mut rng);
    fc2.init(&mut params, &mut rng);
    let mut adam = Adam::new(AdamConfig::new(LrSchedule::constant(1e-2), 0.05));
    for step in 0..steps {
        let x = uniform([4, 8], -1.0, 1.0, &mut rng);
        let labels = [step % 3, (step + 1) % 3, 0, 2];
        let mut g = Graph::new();
        let p = params.bind(&mut g);
        let xv = g.constant(x);
        let h = fc1.forward(&mut g, &p, xv).unwrap();
        let h = g.relu(h).unwrap();
        let h = g.dropout(h, 0.5, Mode::Train, &mut rng).unwrap();
        let logits = fc2.forward(&mut g, &p, h).unwrap();
        let loss = g.softmax_cross_entropy(logits, &labels).unwrap();
        g.backward(loss).unwrap();
        adam.step(&mut params, &p.gradients(&g)).unwrap();
    }
    params
}

#[test]
fn identical_seed_gives_bit_identical_parameters() {
    let a = train_steps(42, 25);
    let b = train_steps(42, 25);
    for ((na, ta), (nb, tb)) in a.iter().zip(b.iter()) {
        assert_eq!(na, nb);
        let bits_a: Vec<u32> = ta.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = tb.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b, "{na}");
    }
    let c = train_steps(43, 25);
    assert_ne!(a, c);
}
