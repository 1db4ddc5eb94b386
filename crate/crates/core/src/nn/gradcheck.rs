use super::network::{Gradients, Mode, Sequential};
use super::{mse_loss, Rng, Tensor};
use crate::error::Result;

#[derive(Clone, Debug)]
pub struct GradcheckReport {
    /// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-12)` over
    /// every trainable parameter.
    pub max_rel_error: f64,
    /// Where the maximum occurred, e.g. `conv2.weight[17]`.
    pub worst: String,
    pub checked: usize,
    /// Same measure over the input elements, kept apart: input gradients
    /// include entries many orders below the largest, where round-off in the
    /// central difference dominates.
    pub input_rel_error: f64,
    pub input_worst: String,
}

fn loss_at(net: &Sequential, x: &Tensor, y: &Tensor, seed: u64) -> Result<f64> {
    // Same seed on every evaluation keeps dropout masks fixed.
    let mut rng = Rng::new(seed);
    let (pred, _) = net.forward(x, Mode::Train, &mut rng)?;
    Ok(mse_loss(&pred, y)?.0)
}

/// Analytic gradients of the training-mode MSE loss by backpropagation.
pub fn backprop_gradients(net: &Sequential, x: &Tensor, y: &Tensor, seed: u64) -> Result<(Gradients, Tensor)> {
    let mut rng = Rng::new(seed);
    let (pred, cache) = net.forward(x, Mode::Train, &mut rng)?;
    let (_, dpred) = mse_loss(&pred, y)?;
    net.backward(&cache, &dpred)
}

/// Compares backpropagated gradients of the training-mode MSE loss against
/// central differences with step `eps`, over every trainable parameter and
/// every input element.
pub fn gradcheck(net: &Sequential, x: &Tensor, y: &Tensor, eps: f64) -> Result<GradcheckReport> {
    gradcheck_with(net, x, y, eps, backprop_gradients)
}

/// [`gradcheck`] with a caller-supplied analytic gradient routine, so a
/// deliberately broken backward pass can be checked for detection.
pub fn gradcheck_with<F>(net: &Sequential, x: &Tensor, y: &Tensor, eps: f64, analytic: F) -> Result<GradcheckReport>
where
    F: Fn(&Sequential, &Tensor, &Tensor, u64) -> Result<(Gradients, Tensor)>,
{
    const SEED: u64 = 0x5eed;
    let (grads, dx) = analytic(net, x, y, SEED)?;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-12);
    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
        input_rel_error: 0.0,
        input_worst: String::new(),
    };

    let mut probe = net.clone();
    for (li, slot) in grads.per_layer.iter().enumerate() {
        let Some(g) = slot else { continue };
        let name = net.layers[li].name().unwrap_or("?").to_string();
        for (which, analytic) in [("weight", &g.weight), ("bias", &g.bias)] {
            for k in 0..analytic.len() {
                let orig = {
                    let p = probe.layers[li].params().expect("param layer");
                    if which == "weight" { p.weight.data()[k] } else { p.bias.data()[k] }
                };
                let set = |net: &mut Sequential, v: f64| {
                    let p = net.layers[li].params_mut().expect("param layer");
                    let t = if which == "weight" { &mut p.weight } else { &mut p.bias };
                    t.data_mut()[k] = v;
                };
                set(&mut probe, orig + eps);
                let up = loss_at(&probe, x, y, SEED)?;
                set(&mut probe, orig - eps);
                let dn = loss_at(&probe, x, y, SEED)?;
                set(&mut probe, orig);
                let err = rel(analytic.data()[k], (up - dn) / (2.0 * eps));
                report.checked += 1;
                if err > report.max_rel_error || report.worst.is_empty() {
                    report.max_rel_error = err.max(report.max_rel_error);
                    report.worst = format!("{name}.{which}[{k}]");
                }
            }
        }
    }
    let mut xp = x.clone();
    for k in 0..x.len() {
        let orig = xp.data()[k];
        xp.data_mut()[k] = orig + eps;
        let up = loss_at(net, &xp, y, SEED)?;
        xp.data_mut()[k] = orig - eps;
        let dn = loss_at(net, &xp, y, SEED)?;
        xp.data_mut()[k] = orig;
        let err = rel(dx.data()[k], (up - dn) / (2.0 * eps));
        if err > report.input_rel_error || report.input_worst.is_empty() {
            report.input_rel_error = err.max(report.input_rel_error);
            report.input_worst = format!("input[{k}]");
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, LayerKind, LayerParams};

    fn small_net(rng: &mut Rng) -> Sequential {
        Sequential::new(vec![
            Layer::Param { name: "conv".into(), params: LayerParams::conv2d(3, 2, rng) },
            Layer::Relu,
            Layer::Param { name: "bn".into(), params: LayerParams::batchnorm(3) },
            Layer::MaxPool { h: 2, w: 1 },
            Layer::Flatten,
            Layer::Param { name: "dense".into(), params: LayerParams::dense(LayerKind::Dense, 5, 18, rng) },
            Layer::Relu,
            Layer::Dropout { p: 0.5 },
            Layer::Param { name: "out".into(), params: LayerParams::dense(LayerKind::LinearOutput, 4, 5, rng) },
        ])
    }

    #[test]
    fn small_network_passes() {
        let mut rng = Rng::new(21);
        let net = small_net(&mut rng);
        let x = Tensor::new(vec![3, 2, 4, 3], (0..72).map(|_| rng.normal()).collect()).unwrap();
        let y = Tensor::new(vec![3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let r = gradcheck(&net, &x, &y, 1e-6).unwrap();
        assert!(r.max_rel_error <= 1e-5, "{r:?}");
        assert!(r.input_rel_error <= 1e-5, "{r:?}");
    }

    #[test]
    fn constant_output_network_has_zero_error() {
        let mut rng = Rng::new(3);
        let mut out = LayerParams::dense(LayerKind::LinearOutput, 2, 3, &mut rng);
        out.weight.fill(0.0);
        let net = Sequential::new(vec![Layer::Param { name: "out".into(), params: out }]);
        // Output is identically zero and matches the target, so every first
        // order effect vanishes and the central differences are exactly 0.
        let x = Tensor::zeros(&[2, 3]);
        let y = Tensor::zeros(&[2, 2]);
        let r = gradcheck(&net, &x, &y, 1e-6).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.input_rel_error, 0.0);
    }

    #[test]
    fn sign_flipped_backward_is_detected() {
        let mut rng = Rng::new(21);
        let net = small_net(&mut rng);
        let x = Tensor::new(vec![3, 2, 4, 3], (0..72).map(|_| rng.normal()).collect()).unwrap();
        let y = Tensor::new(vec![3, 4], (0..12).map(|_| rng.normal()).collect()).unwrap();
        let r = gradcheck_with(&net, &x, &y, 1e-6, |n, x, y, s| {
            let (mut g, dx) = backprop_gradients(n, x, y, s)?;
            g.scale(-1.0);
            Ok((g, dx))
        })
        .unwrap();
        assert!(r.max_rel_error >= 0.1, "{r:?}");
    }
}
