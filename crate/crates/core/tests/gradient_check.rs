//! Analytic gradients of the display-space MSE loss against central finite
//! differences, on a tiny configuration in double precision.

use seqderain::model::{display_mse_loss, ArchConfig, DerainNet};
use seqderain::nn::Tensor;

fn tiny() -> ArchConfig {
    ArchConfig {
        resolution: 16,
        base_channels: 4,
        channel_cap: 512,
        latent_channels: 8,
        in_channels: 3,
        out_channels: 3,
    }
}

fn batch(seed: f64) -> Tensor<f64> {
    let data = (0..3 * 3 * 16 * 16)
        .map(|i| 0.5 + 0.45 * ((i as f64 * 0.613 + seed).sin() * (i as f64 * 0.071).cos()))
        .collect();
    Tensor::from_vec([3, 3, 16, 16], data)
}

fn loss(net: &mut DerainNet<f64>, x: &Tensor<f64>, y: &Tensor<f64>) -> f64 {
    // Training-mode forward: batch statistics, exactly what backward differentiates.
    let out = net.forward(x, true).unwrap();
    display_mse_loss(&out, y).0
}

#[test]
fn analytic_gradients_match_finite_differences() {
    let mut net = DerainNet::<f32>::new(tiny(), 11).unwrap().cast::<f64>();
    // Larger weights than the 0.02 init keep every layer's gradient well above noise.
    for p in net.params_mut() {
        if p.len() > 16 {
            p.value.iter_mut().for_each(|v| *v *= 10.0);
        }
    }
    let x = batch(0.0);
    let y = batch(1.3);

    net.zero_grad();
    let out = net.forward(&x, true).unwrap();
    let (_, grad) = display_mse_loss(&out, &y);
    net.backward(&grad);
    let analytic: Vec<Vec<f64>> = net.params_mut().iter().map(|p| p.grad.clone()).collect();

    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for (pi, grads) in analytic.iter().enumerate() {
        for (j, &a) in grads.iter().enumerate() {
            let orig = net.params_mut()[pi].value[j];
            net.params_mut()[pi].value[j] = orig + h;
            let fp = loss(&mut net, &x, &y);
            net.params_mut()[pi].value[j] = orig - h;
            let fm = loss(&mut net, &x, &y);
            net.params_mut()[pi].value[j] = orig;
            let numeric = (fp - fm) / (2.0 * h);
            let denom = a.abs().max(numeric.abs()).max(1e-7);
            let rel = (a - numeric).abs() / denom;
            worst = worst.max(rel);
            checked += 1;
            assert!(
                rel < 1e-3,
                "param {pi}[{j}]: analytic {a:e}, numeric {numeric:e}, rel {rel:e}"
            );
        }
    }
    println!("checked {checked} parameters, max relative error {worst:e}");
}
