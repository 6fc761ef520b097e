//! Central finite-difference oracle for the autodiff ops.
//!
//! Each case builds a one-op graph whose inputs are parameters, reduces the
//! op output against a random target with a squared-error head, and compares
//! the analytic gradient of every sampled coordinate against
//! `(f(w + h) - f(w - h)) / 2h`.

use gcdtc::nn::{Graph, ParamId, ParamStore, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub const STEP: f64 = 1e-5;
/// Denominator floor for the relative error so coordinates whose gradient is
/// at round-off level do not divide by ~0.
pub const REL_FLOOR: f64 = 1e-3;
const COORDS_PER_PARAM: usize = 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    Conv2d,
    Conv2dStride2,
    Conv3dStride122,
    Conv3dStride222,
    ConvTranspose2d,
    ConvTranspose3d,
    Dense,
    Silu,
    Add,
    AddChannel,
    Concat,
    Upsample,
    GroupNorm,
    Slices,
    Mse,
}

pub const ALL_OPS: [OpKind; 15] = [
    OpKind::Conv2d,
    OpKind::Conv2dStride2,
    OpKind::Conv3dStride122,
    OpKind::Conv3dStride222,
    OpKind::ConvTranspose2d,
    OpKind::ConvTranspose3d,
    OpKind::Dense,
    OpKind::Silu,
    OpKind::Add,
    OpKind::AddChannel,
    OpKind::Concat,
    OpKind::Upsample,
    OpKind::GroupNorm,
    OpKind::Slices,
    OpKind::Mse,
];

fn randn(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

struct Case {
    store: ParamStore,
    ids: Vec<ParamId>,
    target_shape: Vec<usize>,
}

fn case(kind: OpKind, rng: &mut ChaCha8Rng) -> Case {
    let mut store = ParamStore::new();
    let add = |store: &mut ParamStore, name: &str, shape: &[usize], rng: &mut ChaCha8Rng| store.add(name, randn(rng, shape));
    let n = rng.random_range(1..=2);
    let c = rng.random_range(1..=3);
    let co = rng.random_range(1..=3);
    let h = rng.random_range(2..=5);
    let w = rng.random_range(2..=5);
    let d = rng.random_range(2..=4);
    let ids;
    match kind {
        OpKind::Conv2d | OpKind::Conv2dStride2 => {
            let k = if rng.random::<bool>() { 3 } else { 1 };
            ids = vec![
                add(&mut store, "x", &[n, c, h + 1, w + 1], rng),
                add(&mut store, "w", &[co, c, k, k], rng),
                add(&mut store, "b", &[co], rng),
            ];
        }
        OpKind::Conv3dStride122 | OpKind::Conv3dStride222 => {
            ids = vec![
                add(&mut store, "x", &[n, c, 2 * d, 2 * h, 2 * w], rng),
                add(&mut store, "w", &[co, c, 3, 3, 3], rng),
                add(&mut store, "b", &[co], rng),
            ];
        }
        OpKind::ConvTranspose2d => {
            ids = vec![
                add(&mut store, "x", &[n, c, h, w], rng),
                add(&mut store, "w", &[c, co, 2, 2], rng),
                add(&mut store, "b", &[co], rng),
            ];
        }
        OpKind::ConvTranspose3d => {
            let kd = if rng.random::<bool>() { 2 } else { 4 };
            ids = vec![
                add(&mut store, "x", &[n, c, d, h, w], rng),
                add(&mut store, "w", &[c, co, kd, 2, 2], rng),
                add(&mut store, "b", &[co], rng),
            ];
        }
        OpKind::Dense => {
            ids = vec![
                add(&mut store, "x", &[n + 1, h], rng),
                add(&mut store, "w", &[w, h], rng),
                add(&mut store, "b", &[w], rng),
            ];
        }
        OpKind::Silu | OpKind::Upsample | OpKind::Slices => {
            ids = vec![add(&mut store, "x", &[n, c, d, h, w], rng)];
        }
        OpKind::Add | OpKind::Mse => {
            ids = vec![add(&mut store, "a", &[n, c, h, w], rng), add(&mut store, "b", &[n, c, h, w], rng)];
        }
        OpKind::AddChannel => {
            ids = vec![add(&mut store, "x", &[n, c, h, w], rng), add(&mut store, "v", &[n, c], rng)];
        }
        OpKind::Concat => {
            ids = vec![add(&mut store, "a", &[n, c, h, w], rng), add(&mut store, "b", &[n, co, h, w], rng)];
        }
        OpKind::GroupNorm => {
            let groups = rng.random_range(1..=2);
            let ch = groups * c;
            ids = vec![
                add(&mut store, "x", &[n, ch, h, w], rng),
                add(&mut store, "gamma", &[ch], rng),
                add(&mut store, "beta", &[ch], rng),
                // Group count travels as a parameter length.
                store.add("groups", Tensor::zeros(&[groups])),
            ];
            store.get_mut(ids[3]).trainable = false;
        }
    }
    let mut g = Graph::new();
    let out = build(kind, &mut g, &store, &ids);
    let target_shape = g.shape(out).to_vec();
    Case { store, ids, target_shape }
}

fn build(kind: OpKind, g: &mut Graph, store: &ParamStore, ids: &[ParamId]) -> Var {
    let v: Vec<Var> = ids.iter().map(|&id| g.param(store, id)).collect();
    match kind {
        OpKind::Conv2d => {
            let k = g.shape(v[1])[2];
            g.conv2d(v[0], v[1], Some(v[2]), 1, k / 2).unwrap()
        }
        OpKind::Conv2dStride2 => g.conv2d(v[0], v[1], Some(v[2]), 2, g.shape(v[1])[2] / 2).unwrap(),
        OpKind::Conv3dStride122 => g.conv3d(v[0], v[1], Some(v[2]), [1, 2, 2], [1, 1, 1]).unwrap(),
        OpKind::Conv3dStride222 => g.conv3d(v[0], v[1], Some(v[2]), [2, 2, 2], [1, 1, 1]).unwrap(),
        OpKind::ConvTranspose2d => g.conv_transpose2d(v[0], v[1], Some(v[2]), 2, 0).unwrap(),
        OpKind::ConvTranspose3d => {
            let kd = g.shape(v[1])[2];
            g.conv_transpose3d(v[0], v[1], Some(v[2]), [kd, 2, 2], [0, 0, 0]).unwrap()
        }
        OpKind::Dense => g.dense(v[0], v[1], Some(v[2])).unwrap(),
        OpKind::Silu => g.silu(v[0]),
        OpKind::Add => g.add(v[0], v[1]).unwrap(),
        OpKind::AddChannel => g.add_channel(v[0], v[1]).unwrap(),
        OpKind::Concat => g.concat_channels(v[0], v[1]).unwrap(),
        OpKind::Upsample => {
            let s = g.shape(v[0]).to_vec();
            let x = g.reshape(v[0], &[s[0] * s[1], s[2], s[3], s[4]]).unwrap();
            g.upsample_nearest(x, 2).unwrap()
        }
        OpKind::GroupNorm => {
            let groups = g.shape(v[3])[0];
            g.group_norm(v[0], v[1], v[2], groups).unwrap()
        }
        OpKind::Slices => {
            let d = g.shape(v[0])[2];
            let s = g.to_slices(v[0]).unwrap();
            let s = g.silu(s);
            g.from_slices(s, d).unwrap()
        }
        OpKind::Mse => g.mse(v[0], v[1]).unwrap(),
    }
}

fn loss(kind: OpKind, store: &ParamStore, ids: &[ParamId], target: &Tensor) -> (Graph, Var) {
    let mut g = Graph::new();
    let out = build(kind, &mut g, store, ids);
    let t = g.input(target.clone());
    let l = g.mse(out, t).unwrap();
    (g, l)
}

/// Largest relative gradient error over sampled coordinates of one random case.
pub fn max_relative_error(kind: OpKind, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Case { mut store, ids, target_shape } = case(kind, &mut rng);
    let target = randn(&mut rng, &target_shape);

    let (g, l) = loss(kind, &store, &ids, &target);
    store.zero_grad();
    g.backward(l, &mut store).unwrap();
    let analytic: Vec<Vec<f64>> = ids.iter().map(|&id| store.get(id).grad.clone()).collect();

    let mut worst: f64 = 0.0;
    for (pi, &id) in ids.iter().enumerate() {
        if !store.get(id).trainable {
            continue;
        }
        let len = store.get(id).value.len();
        let coords: Vec<usize> = if len <= COORDS_PER_PARAM {
            (0..len).collect()
        } else {
            (0..COORDS_PER_PARAM).map(|_| rng.random_range(0..len)).collect()
        };
        for i in coords {
            let orig = store.get(id).value.data[i];
            store.get_mut(id).value.data[i] = orig + STEP;
            let (g, l) = loss(kind, &store, &ids, &target);
            let up = g.value(l).data[0];
            store.get_mut(id).value.data[i] = orig - STEP;
            let (g, l) = loss(kind, &store, &ids, &target);
            let down = g.value(l).data[0];
            store.get_mut(id).value.data[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[pi][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            worst = worst.max(rel);
        }
    }
    worst
}
