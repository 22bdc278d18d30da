use hetsl_tensor::{init_rng, mse, Adam, AdamConfig, Conv2d, Layer, Linear, Activation, Mode, Sequential, Tensor};
use proptest::prelude::*;

fn tensor_strategy(shape: Vec<usize>) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-2.0f64..2.0, n).prop_map(move |v| Tensor::new(shape.clone(), v).unwrap())
}

proptest! {
    #[test]
    fn conv_is_linear_without_bias(
        seed in 0u64..1000,
        x in tensor_strategy(vec![2, 3, 5, 6]),
        y in tensor_strategy(vec![2, 3, 5, 6]),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
    ) {
        let conv = Conv2d::new(3, 4, 3, &mut init_rng(seed));
        let mut combo = x.clone();
        combo.data_mut().iter_mut().for_each(|v| *v *= a);
        combo.add_scaled(&y, b).unwrap();
        let lhs = conv.infer(&combo).unwrap();
        let mut rhs = conv.infer(&x).unwrap();
        rhs.data_mut().iter_mut().for_each(|v| *v *= a);
        rhs.add_scaled(&conv.infer(&y).unwrap(), b).unwrap();
        prop_assert!(lhs.max_abs_diff(&rhs) < 1e-10);
    }
}

fn train(seed: u64, steps: usize) -> Vec<f64> {
    let mut rng = init_rng(seed);
    let mut model = Sequential::new()
        .with("conv", Layer::Conv2d(Conv2d::new(1, 2, 3, &mut rng)))
        .with("fc", Layer::Linear(Linear::new(2 * 4 * 4, 1, Activation::Identity, &mut rng)));
    let mut adam = Adam::new(AdamConfig::default(), model.params().into_iter().map(|(_, p)| p));
    let x = Tensor::new(vec![1, 1, 4, 4], (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
    let target = Tensor::new(vec![1, 1], vec![0.5]).unwrap();
    for _ in 0..steps {
        model.zero_grad();
        let y = model.forward(&x, Mode::Train).unwrap();
        let (_, g) = mse(&y, &target).unwrap();
        model.backward(&g).unwrap();
        let mut params: Vec<_> = model.params_mut().into_iter().map(|(_, p)| p).collect();
        adam.step(&mut params).unwrap();
    }
    model.params().into_iter().flat_map(|(_, p)| p.value.data().to_vec()).collect()
}

#[test]
fn identical_seeds_give_bitwise_identical_weights() {
    let a = train(42, 25);
    let b = train(42, 25);
    assert_eq!(a.len(), b.len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    assert_ne!(train(43, 25), a);
}
