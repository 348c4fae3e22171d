use hsi_core::classifier::{gradient_check, init_network, predict, train};
use hsi_core::datacube::{synth_scene, SceneSpec};
use hsi_core::{MlpTopology, SgdHyper};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_problem() -> (hsi_core::MlpNetwork, DMatrix<f64>, Vec<u16>) {
    // 10*16+16 + 16*8+8 + 8*3+3 = 339 parameters
    let net = init_network(&MlpTopology::new(10, vec![16, 8], 3), 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let batch = DMatrix::from_fn(10, 12, |_, _| rng.random::<f64>());
    let labels = (0..12).map(|j| (j % 3) as u16 + 1).collect();
    (net, batch, labels)
}

#[test]
fn analytic_gradient_matches_own_finite_differences() {
    let (net, batch, labels) = small_problem();
    let (_, grads) = net.loss_and_gradients(&batch, &labels).unwrap();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for l in 0..net.layers().len() {
        let (rows, cols) = net.layers()[l].weights.shape();
        for r in 0..rows {
            for c in 0..cols {
                let mut plus = net.clone();
                plus.layers_mut()[l].weights[(r, c)] += h;
                let mut minus = net.clone();
                minus.layers_mut()[l].weights[(r, c)] -= h;
                let fd = (plus.loss_and_gradients(&batch, &labels).unwrap().0
                    - minus.loss_and_gradients(&batch, &labels).unwrap().0)
                    / (2.0 * h);
                let a = grads[l].weights[(r, c)];
                worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-8));
            }
            let mut plus = net.clone();
            plus.layers_mut()[l].bias[r] += h;
            let mut minus = net.clone();
            minus.layers_mut()[l].bias[r] -= h;
            let fd = (plus.loss_and_gradients(&batch, &labels).unwrap().0
                - minus.loss_and_gradients(&batch, &labels).unwrap().0)
                / (2.0 * h);
            let a = grads[l].bias[r];
            worst = worst.max((a - fd).abs() / (a.abs() + fd.abs()).max(1e-8));
        }
    }
    assert!(worst < 1e-4, "max relative error {worst}");
    assert!(gradient_check(&net, &batch, &labels, usize::MAX, 0).unwrap() < 1e-4);
}

#[test]
fn separable_two_class_scene_is_learned() {
    let (cube, labels) = synth_scene(&SceneSpec::tiled(32, 16, 2, 4), 3).unwrap();
    let pixels: Vec<usize> = (0..cube.n_pixels()).collect();
    let x = cube.spectra(&pixels).unwrap();
    let y: Vec<u16> = pixels.iter().map(|&p| labels.get(p)).collect();
    let mut net = init_network(&MlpTopology::new(16, MlpTopology::default_hidden(), 2), 5).unwrap();
    let trace = train(&mut net, &x, &y, &SgdHyper::default(), None).unwrap();
    assert_eq!(trace.len(), 20);
    let pred = predict(&net, &x).unwrap();
    let acc = pred.iter().zip(&y).filter(|(a, b)| a == b).count() as f64 / y.len() as f64;
    assert!(acc >= 0.99, "training accuracy {acc}");
}

#[test]
fn training_is_reproducible() {
    let (_, batch, labels) = small_problem();
    let hyper = SgdHyper {
        batch_size: 5,
        epochs: 3,
        seed: 4,
        ..SgdHyper::default()
    };
    let run = || {
        let mut net = init_network(&MlpTopology::new(10, vec![16, 8], 3), 1).unwrap();
        let trace = train(&mut net, &batch, &labels, &hyper, None).unwrap();
        (net, trace)
    };
    let (a, ta) = run();
    let (b, tb) = run();
    assert_eq!(ta, tb);
    let bytes = |n: &hsi_core::MlpNetwork| {
        let mut v = Vec::new();
        n.write_to(&mut v).unwrap();
        v
    };
    assert_eq!(bytes(&a), bytes(&b));
}
