//! Correction directions and kernel displacements against central finite
//! differences of the discrepancy energy, evaluated by the naive oracle.

use convngc::ngc::{
    ancestral_init, compute_updates, correction_directions, predict_all, ClampMode, ConvNgcModel, InferenceState,
    ModelSpec,
};
use convngc::tensor::{Activation, Tensor};
use convngc_oracles::{central_gradient, relative_error, Net};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-5;

struct Instance {
    model: ConvNgcModel<f64>,
    net: Net,
    /// Per-sample flat states, `z[n][l]`.
    z: Vec<Vec<Vec<f64>>>,
}

fn instance(seed: u64, phi: Activation, batch: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = [
        rng.random_range(1..=3),
        rng.random_range(1..=3),
        rng.random_range(1..=3),
    ];
    let stride = rng.random_range(1..=2);
    let bottom = 2 * stride * stride;
    let mut spec = ModelSpec::from_top_down(&channels, bottom, bottom, 3, stride)
        .unwrap()
        .with_activations(phi, Activation::Identity);
    spec.hyper.gamma = 0.0;
    let model = ConvNgcModel::init(spec, &mut rng).unwrap();
    let net = Net {
        layers: model
            .spec()
            .layers
            .iter()
            .map(|l| (l.channels, l.height, l.width))
            .collect(),
        stride,
        kernel: 3,
        kernels: (1..=2).map(|l| model.weights(l).data().to_vec()).collect(),
        leaky_slope: match phi {
            Activation::LeakyRelu { slope } => Some(slope),
            Activation::Identity => None,
        },
    };
    let z = (0..batch)
        .map(|_| {
            net.layers
                .iter()
                .map(|&(c, h, w)| (0..c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect()
        })
        .collect();
    Instance { model, net, z }
}

fn state_for(inst: &Instance) -> InferenceState<f64> {
    let batch = inst.z.len();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut st = ancestral_init(&inst.model, batch, &mut rng).unwrap();
    for (l, t) in st.z.iter_mut().enumerate() {
        let flat: Vec<f64> = inst.z.iter().flat_map(|s| s[l].clone()).collect();
        *t = Tensor::from_vec(t.shape(), flat).unwrap();
    }
    st.clamp = ClampMode::InitOnly;
    predict_all(&inst.model, &mut st);
    st
}

#[test]
fn correction_direction_is_negative_energy_gradient() {
    for seed in 0..25 {
        let inst = instance(seed, Activation::Identity, 1);
        let st = state_for(&inst);
        let dirs = correction_directions(&inst.model, &st);
        for l in 0..3 {
            let mut z = inst.z[0].clone();
            let mut x = z[l].clone();
            let grad = central_gradient(&mut x, 1e-6, |v| {
                z[l].copy_from_slice(v);
                inst.net.energy(&z)
            });
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let err = relative_error(dirs[l].data(), &neg, 1e-12);
            assert!(err <= TOL, "seed {seed} layer {l}: relative error {err:e}");
        }
    }
}

#[test]
fn kernel_update_is_negative_energy_gradient() {
    for seed in 100..125 {
        let inst = instance(seed, Activation::leaky(), 2);
        let st = state_for(&inst);
        let up = compute_updates(&inst.model, &st);
        for l in 1..=2 {
            let mut net = inst.net.clone();
            let mut w = net.kernels[l - 1].clone();
            let grad = central_gradient(&mut w, 1e-6, |v| {
                net.kernels[l - 1].copy_from_slice(v);
                inst.z.iter().map(|s| net.energy(s)).sum::<f64>() / inst.z.len() as f64
            });
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let err = relative_error(up.weights[l - 1].data(), &neg, 1e-12);
            assert!(err <= TOL, "seed {seed} layer {l}: relative error {err:e}");
        }
    }
}

#[test]
fn default_layer_kernel_update_matches_finite_differences() {
    // full-size bottom connection: 25 -> 3 channels, 16x16 -> 32x32
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    let spec = ModelSpec::from_top_down(&[25, 3], 32, 32, 3, 2).unwrap();
    let model: ConvNgcModel<f64> = ConvNgcModel::init(spec, &mut rng).unwrap();
    let mut st = ancestral_init(&model, 1, &mut rng).unwrap();
    st.z[0] = Tensor::from_fn(&[1, 3, 32, 32], |_| rng.random_range(0.0..1.0));
    st.z[1] = Tensor::from_fn(&[1, 25, 16, 16], |_| rng.random_range(-1.0..1.0));
    predict_all(&model, &mut st);
    let up = compute_updates(&model, &st);
    let net = Net {
        layers: vec![(3, 32, 32), (25, 16, 16)],
        stride: 2,
        kernel: 3,
        kernels: vec![model.weights(1).data().to_vec()],
        leaky_slope: Some(0.01),
    };
    let z = vec![st.z[0].data().to_vec(), st.z[1].data().to_vec()];
    // spot-check a spread of kernel entries; a full sweep needs 1350 energy pairs
    for idx in (0..675).step_by(37) {
        let mut n = net.clone();
        let h = 1e-6;
        n.kernels[0][idx] += h;
        let up_e = n.energy(&z);
        n.kernels[0][idx] -= 2.0 * h;
        let down_e = n.energy(&z);
        let fd = -(up_e - down_e) / (2.0 * h);
        let got = up.weights[0].data()[idx];
        assert!(
            (got - fd).abs() <= TOL * fd.abs().max(1.0),
            "entry {idx}: {got} vs {fd}"
        );
    }
}
