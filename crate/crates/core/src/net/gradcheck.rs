use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{NetConfig, TanhPlacement};
use super::layers::batch_cross_entropy;
use super::network::{NetInput, Network};
use crate::error::Result;
use crate::mesh::primitives;
use crate::polyfilter::gradcheck::{central_differences, GradCheckReport, DEFAULT_STEP};
use crate::polyfilter::{ConvVariant, Degree};
use crate::polyshape::{build_polyshape, Scheme};

/// Compares [`Network::backward`] of the mean cross-entropy against central
/// differences over every parameter.
pub fn check_network(net: &mut Network, batch: &[&NetInput], labels: &[usize]) -> Result<GradCheckReport> {
    net.set_training(true);
    net.loss_and_grad(batch, labels)?;
    let analytic = net.grads().to_vec();
    let start = net.params().to_vec();
    let numeric = central_differences(
        |p| {
            net.params_mut().copy_from_slice(p);
            let logits = net.forward(batch).expect("forward succeeded once");
            batch_cross_entropy(&logits, labels).expect("labels checked").0
        },
        &start,
        DEFAULT_STEP,
    );
    net.params_mut().copy_from_slice(&start);
    Ok(GradCheckReport::compare(&analytic, &numeric))
}

/// Two-level pyramids of two primitives, 8-channel trunk, random features in
/// (-0.9, 0.9).
pub fn toy_network_check(variant: ConvVariant, degree: Degree, seed: u64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scheme = if rng.gen_bool(0.5) { Scheme::Sqrt3 } else { Scheme::Ptq };
    let inputs: Vec<NetInput> = [primitives::icosahedron(), primitives::cube()]
        .iter()
        .map(|mesh| {
            let shape = build_polyshape(mesh, scheme, 1, 12)?;
            let mut input = NetInput::from_shape(&shape);
            input.features.mapv_inplace(|_| rng.gen_range(-0.9..0.9));
            Ok(input)
        })
        .collect::<Result<_>>()?;
    let config = NetConfig {
        in_channels: 6,
        conv_widths: vec![8, 8],
        fc_widths: vec![8],
        classes: 3,
        variant,
        degree,
        tanh: TanhPlacement::BeforePool,
    };
    let mut net = Network::new(config, seed)?;
    let labels = [rng.gen_range(0..3), rng.gen_range(0..3)];
    check_network(&mut net, &[&inputs[0], &inputs[1]], &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polyfilter::gradcheck::DEFAULT_TOLERANCE;

    #[test]
    fn toy_networks_pass() {
        for variant in [ConvVariant::Squeezed, ConvVariant::Unsqueezed] {
            let r = toy_network_check(variant, Degree::TWO, 1).unwrap();
            assert!(r.passes(DEFAULT_TOLERANCE), "{variant:?}: {r:?}");
        }
        let r = toy_network_check(ConvVariant::Squeezed, Degree::FOUR, 2).unwrap();
        assert!(r.passes(DEFAULT_TOLERANCE), "{r:?}");
    }
}
