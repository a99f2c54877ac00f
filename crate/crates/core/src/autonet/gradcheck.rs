//! Central finite-difference checks of taped gradients, in `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Architecture, HeadInit, NetConfig, Network, Tape, Tensor, Var};
use crate::error::Result;
use crate::heatmap::SupervisionLadder;

/// Perturbation for primitive checks.
pub const STEP: f64 = 1e-3;
/// Perturbation for whole-network checks. A network has hundreds of ReLUs per
/// channel, so a 1e-3 bias shift routinely crosses a kink; 1e-6 in `f64` does not.
pub const NETWORK_STEP: f64 = 1e-6;
/// Coordinates sampled per checked tensor.
pub const SAMPLES: usize = 64;

fn relative(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor {
        shape,
        data: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    }
}

fn random_target(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Worst relative error between the taped gradient of the scalar built by `f`
/// and central differences, over `samples` random coordinates of each input.
pub fn finite_difference<F>(inputs: &[Tensor<f64>], f: F, samples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |ins: &[Tensor<f64>]| -> Result<(Tape<f64>, Vec<Var>, Var)> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ins.iter().map(|t| tape.input(t.clone())).collect();
        let loss = f(&mut tape, &vars)?;
        Ok((tape, vars, loss))
    };
    let (mut tape, vars, loss) = eval(inputs)?;
    tape.backward(loss);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (i, input) in inputs.iter().enumerate() {
        let analytic = tape
            .grad(vars[i])
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; input.len()]);
        for _ in 0..samples.min(input.len()) {
            let c = rng.gen_range(0..input.len());
            let mut shifted = inputs.to_vec();
            shifted[i].data[c] = input.data[c] + STEP;
            let (t, _, l) = eval(&shifted)?;
            let plus = t.scalar(l);
            shifted[i].data[c] = input.data[c] - STEP;
            let (t, _, l) = eval(&shifted)?;
            let minus = t.scalar(l);
            worst = worst.max(relative((plus - minus) / (2.0 * STEP), analytic[c]));
        }
    }
    Ok(worst)
}

/// Worst relative error per primitive group.
pub fn primitive_errors() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut out = Vec::new();

    let ins = [
        random_tensor(&mut rng, vec![2, 3, 6, 5]),
        random_tensor(&mut rng, vec![4, 3, 3, 3]),
        random_tensor(&mut rng, vec![4]),
    ];
    let e = finite_difference(
        &ins,
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            let n = t.value(y).len();
            t.sse(y, random_target(n, 1), 0.5)
        },
        SAMPLES,
        10,
    );
    out.push(("conv2d 3x3", e.unwrap_or(f64::INFINITY)));

    let ins = [
        random_tensor(&mut rng, vec![2, 3, 4, 4]),
        random_tensor(&mut rng, vec![5, 3, 1, 1]),
        random_tensor(&mut rng, vec![5]),
    ];
    let e = finite_difference(
        &ins,
        |t, v| {
            let y = t.conv2d(v[0], v[1], v[2])?;
            let n = t.value(y).len();
            t.sse(y, random_target(n, 2), 1.0)
        },
        SAMPLES,
        11,
    );
    out.push(("conv2d 1x1", e.unwrap_or(f64::INFINITY)));

    let ins = [
        random_tensor(&mut rng, vec![2, 2, 4, 6]),
        random_tensor(&mut rng, vec![2, 2, 4, 6]),
    ];
    let e = finite_difference(
        &ins,
        |t, v| {
            let r = t.relu(v[0]);
            let p = t.max_pool2(r)?;
            let u = t.upsample2(p)?;
            let s = t.add(u, v[1])?;
            let n = t.value(s).len();
            t.sse(s, random_target(n, 3), 1.0)
        },
        SAMPLES,
        12,
    );
    out.push(("relu/max_pool/upsample/add", e.unwrap_or(f64::INFINITY)));

    let ins = [
        random_tensor(&mut rng, vec![3, 4, 2, 2]),
        random_tensor(&mut rng, vec![6, 4]),
        random_tensor(&mut rng, vec![6]),
    ];
    let e = finite_difference(
        &ins,
        |t, v| {
            let g = t.global_avg_pool(v[0])?;
            let y = t.linear(g, v[1], v[2])?;
            let r = t.reshape(y, vec![3, 2, 3])?;
            let s = t.scale(r, 0.7);
            let l1 = t.sse(s, random_target(18, 4), 1.0)?;
            let flat = t.reshape(v[0], vec![3, 16])?;
            let l2 = t.sse(flat, random_target(48, 5), 0.25)?;
            Ok(t.sum_scalars(&[l1, l2]))
        },
        SAMPLES,
        13,
    );
    out.push((
        "global_pool/linear/reshape/scale/sum",
        e.unwrap_or(f64::INFINITY),
    ));
    out
}

/// The micro configuration used for end-to-end checks: 8x8 maps, 2 joints, width 4.
pub fn micro_config(architecture: Architecture) -> NetConfig {
    NetConfig {
        n_joints: 2,
        input_size: 8,
        output_size: 8,
        width: 4,
        stem_channels: 3,
        hourglass_depth: 2,
        architecture,
        head_init: HeadInit::Glorot,
    }
}

/// Worst relative error of the summed multi-stage loss gradient with respect
/// to `samples` randomly chosen parameters of a micro network.
pub fn network_error(architecture: Architecture, seed: u64, samples: usize) -> Result<f64> {
    let net: Network<f64> = Network::new(micro_config(architecture), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let input = Tensor {
        shape: vec![2, 1, 8, 8],
        data: (0..128).map(|_| rng.gen_range(0.0..1.0)).collect(),
    };
    let loss_of = |net: &Network<f64>| -> Result<(Tape<f64>, Var)> {
        let mut tape = Tape::new();
        let out = net.forward(&mut tape, input.clone())?;
        let targets = out
            .stages
            .iter()
            .enumerate()
            .map(|(s, &v)| random_target(tape.value(v).len(), 100 + s as u64))
            .collect();
        let loss = net.loss(&mut tape, &out, targets)?;
        Ok((tape, loss))
    };
    let (mut tape, loss) = loss_of(&net)?;
    tape.backward(loss);
    let grads = tape.param_grads(&net.params);

    let ids: Vec<_> = net.params.ids().collect();
    let mut worst: f64 = 0.0;
    let mut probe = net.clone();
    for _ in 0..samples {
        let id = ids[rng.gen_range(0..ids.len())];
        let c = rng.gen_range(0..net.params.get(id).len());
        let base = net.params.get(id).data[c];
        probe.params.get_mut(id).data[c] = base + NETWORK_STEP;
        let (t, l) = loss_of(&probe)?;
        let plus = t.scalar(l);
        probe.params.get_mut(id).data[c] = base - NETWORK_STEP;
        let (t, l) = loss_of(&probe)?;
        let minus = t.scalar(l);
        probe.params.get_mut(id).data[c] = base;
        worst = worst.max(relative(
            (plus - minus) / (2.0 * NETWORK_STEP),
            grads[id.index()][c],
        ));
    }
    Ok(worst)
}

/// Architectures covered by the end-to-end check.
pub fn micro_architectures() -> Vec<Architecture> {
    let ladder = |s: &str| s.parse::<SupervisionLadder>().expect("static ladder");
    vec![
        Architecture::CoordRegression,
        Architecture::volumetric(ladder("4"), true),
        Architecture::volumetric(ladder("1,4"), true),
        Architecture::volumetric(ladder("4,4"), true),
        Architecture::volumetric(ladder("1,4"), false),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn micro_networks_pass_finite_differences() {
        for arch in micro_architectures() {
            let e = network_error(arch.clone(), 3, SAMPLES).unwrap();
            assert!(e < 1e-3, "{}: {e}", arch.label());
        }
    }
}
