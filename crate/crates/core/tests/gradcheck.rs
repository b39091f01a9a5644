//! Central finite-difference checks of the analytic U-Net and Dice gradients,
//! run in f64.

use c2f_core::nn::{backward, dice_loss, dice_loss_grad, forward, ModelWeights, Tensor, UNetSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 4], lo: f64, hi: f64) -> Tensor<f64> {
    let n = dims.iter().product();
    Tensor::new(dims, (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn loss(spec: &UNetSpec, w: &ModelWeights<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    let out = forward(spec, w, x).unwrap();
    dice_loss(out.output(), y).unwrap()
}

#[test]
fn unet_parameters_match_finite_differences() {
    let spec = UNetSpec::new(2, 1);
    let mut worst = 0.0f64;
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut w = ModelWeights::<f64>::init(&spec, seed);
        for p in w.params.iter_mut().filter(|p| p.shape.len() == 1) {
            p.data
                .iter_mut()
                .for_each(|v| *v = rng.random_range(-0.2..0.2));
        }
        let x = random_tensor(&mut rng, [1, 1, 8, 8], -1.0, 1.0);
        let y = Tensor::new(
            [1, 1, 8, 8],
            (0..64)
                .map(|_| f64::from(rng.random_bool(0.4) as u8))
                .collect(),
        )
        .unwrap();
        let cache = forward(&spec, &w, &x).unwrap();
        let g = dice_loss_grad(cache.output(), &y).unwrap();
        let grads = backward(&spec, &w, &cache, &g).unwrap();
        let h = 1e-6;
        for (pi, p) in w.params.iter().enumerate() {
            let num: Vec<f64> = (0..p.data.len())
                .map(|k| {
                    let mut wp = w.clone();
                    wp.params[pi].data[k] += h;
                    let mut wm = w.clone();
                    wm.params[pi].data[k] -= h;
                    (loss(&spec, &wp, &x, &y) - loss(&spec, &wm, &x, &y)) / (2.0 * h)
                })
                .collect();
            let ana = &grads.params[pi].data;
            let diff: f64 = ana
                .iter()
                .zip(&num)
                .map(|(a, n)| (a - n).powi(2))
                .sum::<f64>()
                .sqrt();
            let norm = ana
                .iter()
                .map(|a| a * a)
                .sum::<f64>()
                .sqrt()
                .max(num.iter().map(|a| a * a).sum::<f64>().sqrt());
            let rel = if norm == 0.0 { 0.0 } else { diff / norm };
            worst = worst.max(rel);
            println!("seed {seed} {} rel {rel:.3e} norm {norm:.3e}", p.name);
        }
    }
    assert!(worst < 1e-5, "worst {worst}");
}
