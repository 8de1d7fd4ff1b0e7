use tev_numerics::gradcheck::check_gradients;
use tev_numerics::rng::uniform;
use tev_numerics::{
    seeded, Bindings, CellState, ConvLstmCell, Graph, Linear, LstmCell, Padding, ParamSet, Tensor, Var,
};

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
const TOLERANCE: f64 = 1e-3;

fn random(shape: &[usize], seed: u64) -> Tensor {
    uniform(shape.to_vec(), -1.0, 1.0, &mut seeded(seed))
}

fn assert_close(label: &str, seed: u64, err: f64) {
    assert!(err < TOLERANCE, "{label} seed {seed}: max rel err {err:e}");
}

#[test]
fn matmul_4x3_by_3x2() {
    for seed in SEEDS {
        let a = random(&[4, 3], seed);
        let b = random(&[3, 2], seed + 100);
        let r = check_gradients(&[a, b], |g, v| g.matmul(v[0], v[1]), seed).unwrap();
        assert_close("matmul", seed, r.max_rel_error());
    }
}

#[test]
fn conv2d_same_and_strided() {
    for seed in SEEDS {
        for (stride, padding) in [(1, Padding::Same), (2, Padding::Same), (1, Padding::Valid)] {
            let x = random(&[2, 8, 8], seed);
            let w = random(&[4, 2, 3, 3], seed + 100);
            let r = check_gradients(&[x, w], |g, v| g.conv2d(v[0], v[1], stride, padding), seed).unwrap();
            assert_close("conv2d", seed, r.max_rel_error());
        }
    }
}

#[test]
fn conv2d_batched_with_bias() {
    for seed in SEEDS {
        let x = random(&[2, 2, 5, 5], seed);
        let w = random(&[3, 2, 3, 3], seed + 1);
        let b = random(&[3], seed + 2);
        let r = check_gradients(
            &[x, w, b],
            |g, v| {
                let y = g.conv2d(v[0], v[1], 1, Padding::Same)?;
                g.add_channel_bias(y, v[2])
            },
            seed,
        )
        .unwrap();
        assert_close("conv2d batched", seed, r.max_rel_error());
    }
}

fn lstm_inputs(cell: &LstmCell, batch: usize, seed: u64) -> (Vec<Tensor>, Vec<String>) {
    let mut params = ParamSet::new();
    cell.init(&mut params, &mut seeded(seed));
    let mut inputs = vec![
        random(&[batch, cell.input], seed + 10),
        random(&[batch, cell.hidden], seed + 11),
        random(&[batch, cell.hidden], seed + 12),
    ];
    let mut names = Vec::new();
    for (name, t) in params.iter() {
        names.push(name.to_string());
        inputs.push(t.clone());
    }
    (inputs, names)
}

fn bindings(names: &[String], vars: &[Var]) -> Bindings {
    Bindings::from_vars(names.iter().cloned().zip(vars.iter().copied()))
}

#[test]
fn lstm_cell_all_parameters() {
    let cell = LstmCell::new("lstm", 5, 4);
    for seed in SEEDS {
        let (inputs, names) = lstm_inputs(&cell, 2, seed);
        let r = check_gradients(
            &inputs,
            |g, v| {
                let p = bindings(&names, &v[3..]);
                let s = cell.step(g, &p, v[0], CellState { h: v[1], c: v[2] })?;
                let both = g.add(s.h, s.c)?;
                g.add(both, s.h)
            },
            seed,
        )
        .unwrap();
        assert_close("lstm_cell", seed, r.max_rel_error());
    }
}

#[test]
fn lstm_unrolled_three_steps() {
    let cell = LstmCell::new("lstm", 3, 3);
    for seed in SEEDS {
        let (inputs, names) = lstm_inputs(&cell, 1, seed);
        let r = check_gradients(
            &inputs,
            |g, v| {
                let p = bindings(&names, &v[3..]);
                let mut s = CellState { h: v[1], c: v[2] };
                for _ in 0..3 {
                    s = cell.step(g, &p, v[0], s)?;
                }
                Ok(s.h)
            },
            seed,
        )
        .unwrap();
        assert_close("lstm unrolled", seed, r.max_rel_error());
    }
}

#[test]
fn convlstm_cell_2x6x6() {
    let cell = ConvLstmCell::new("cl", 2, 3, 3);
    for seed in SEEDS {
        let mut params = ParamSet::new();
        cell.init(&mut params, &mut seeded(seed));
        let mut inputs = vec![
            random(&[1, 2, 6, 6], seed + 10),
            random(&[1, 3, 6, 6], seed + 11),
            random(&[1, 3, 6, 6], seed + 12),
        ];
        let names: Vec<String> = params.names().map(str::to_string).collect();
        inputs.extend(params.iter().map(|(_, t)| t.clone()));
        let r = check_gradients(
            &inputs,
            |g, v| {
                let p = bindings(&names, &v[3..]);
                let s = cell.step(g, &p, v[0], CellState { h: v[1], c: v[2] })?;
                g.add(s.h, s.c)
            },
            seed,
        )
        .unwrap();
        assert_close("convlstm_cell", seed, r.max_rel_error());
    }
}

#[test]
fn fully_connected_with_relu() {
    let fc = Linear::new("fc", 6, 4);
    for seed in SEEDS {
        let mut params = ParamSet::new();
        fc.init(&mut params, &mut seeded(seed));
        params.insert("fc.b", random(&[4], seed + 7));
        let names: Vec<String> = params.names().map(str::to_string).collect();
        let mut inputs = vec![random(&[3, 6], seed + 10)];
        inputs.extend(params.iter().map(|(_, t)| t.clone()));
        let r = check_gradients(
            &inputs,
            |g, v| {
                let p = bindings(&names, &v[1..]);
                let y = fc.forward(g, &p, v[0])?;
                g.relu(y)
            },
            seed,
        )
        .unwrap();
        assert_close("fc", seed, r.max_rel_error());
    }
}

#[test]
fn softmax_then_cross_entropy() {
    for seed in SEEDS {
        let logits = random(&[3, 7], seed).map(|v| 2.0 * v);
        let mut onehot = Tensor::zeros([3, 7]);
        for (row, class) in [(0, 1), (1, 6), (2, (seed % 7) as usize)] {
            onehot.data_mut()[row * 7 + class] = 1.0;
        }
        let r = check_gradients(
            std::slice::from_ref(&logits),
            |g, v| {
                let p = g.softmax(v[0])?;
                g.cross_entropy(p, onehot.clone())
            },
            seed,
        )
        .unwrap();
        assert_close("softmax+ce", seed, r.max_rel_error());

        let labels = [1, 6, (seed % 7) as usize];
        let r = check_gradients(&[logits], |g, v| g.softmax_cross_entropy(v[0], &labels), seed).unwrap();
        assert_close("fused softmax+ce", seed, r.max_rel_error());
    }
}

#[test]
fn elementwise_and_shape_ops() {
    for seed in SEEDS {
        let a = random(&[2, 3, 4, 4], seed);
        let b = random(&[2, 3, 4, 4], seed + 1);
        let mask = random(&[2, 3, 4, 4], seed + 2).map(|v| if v > 0.0 { 2.0 } else { 0.0 });
        let r = check_gradients(
            &[a, b],
            |g, v| {
                let s = g.sigmoid(v[0])?;
                let t = g.tanh(v[1])?;
                let m = g.mul(s, t)?;
                let d = g.sub(m, v[1])?;
                let d = g.mul_const(d, mask.clone())?;
                let n = g.narrow(d, 1, 1, 2)?;
                let u = g.upsample_nearest(n, 2)?;
                let u = g.scale(u, 0.5)?;
                let flat = g.reshape(u, vec![2, 2 * 8 * 8])?;
                let e = g.mse(flat, flat)?;
                let total = g.mean(flat)?;
                g.add(total, e)
            },
            seed,
        )
        .unwrap();
        assert_close("elementwise", seed, r.max_rel_error());
    }
}

#[test]
fn mse_against_constant() {
    for seed in SEEDS {
        let a = random(&[4, 5], seed);
        let target = random(&[4, 5], seed + 9);
        let r = check_gradients(
            &[a],
            |g, v| {
                let t = g.constant(target.clone());
                g.mse(v[0], t)
            },
            seed,
        )
        .unwrap();
        assert_close("mse", seed, r.max_rel_error());
    }
}

#[test]
fn fan_out_is_summed() {
    let mut g = Graph::new();
    let x = g.variable(Tensor::vector(&[1.5, -2.0]));
    let y = g.add(x, x).unwrap();
    let l = g.sum(y).unwrap();
    g.backward(l).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[2.0, 2.0]);
}
