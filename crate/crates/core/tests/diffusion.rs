use gcdtc::diffusion::{AeModel, Codec, CodecConfig, CodecKind, GcdModel, NoiseSchedule, train_codec, TrainOptions};
use gcdtc::nn::AdamState;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_schedule() -> NoiseSchedule {
    NoiseSchedule::linear(12, 1e-3, 0.2).unwrap()
}

fn block(seed: u64, cfg: &CodecConfig) -> Vec<f64> {
    let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    (0..cfg.block_len())
        .map(|_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
        .collect()
}

fn zero_param(params: &mut gcdtc::nn::ParamStore, name: &str) {
    let id = params.find(name).unwrap();
    params.get_mut(id).value.data.iter_mut().for_each(|v| *v = 0.0);
}

#[test]
fn full_size_latent_and_embedding_shapes() {
    let cfg = CodecConfig::paper();
    let model = GcdModel::new(cfg, NoiseSchedule::linear(1000, 1e-5, 5e-3).unwrap(), 0).unwrap();
    let z = model.encode_block(&block(1, &cfg)).unwrap();
    assert_eq!(z.len(), 8 * 4 * 8 * 8);
    let ze = model.embed(&z).unwrap();
    assert_eq!(ze.shape, vec![16, 32, 16, 16]);
}

#[test]
fn encoder_is_pure() {
    let cfg = CodecConfig::desk();
    let model = GcdModel::new(cfg, small_schedule(), 3).unwrap();
    let b = block(5, &cfg);
    assert_eq!(model.encode_block(&b).unwrap(), model.encode_block(&b.clone()).unwrap());
}

#[test]
fn decode_is_bit_identical_across_calls() {
    let cfg = CodecConfig::desk();
    let model = GcdModel::new(cfg, small_schedule(), 1).unwrap();
    let z = model.encode_block(&block(2, &cfg)).unwrap();
    let a = model.decode_block(&z).unwrap();
    let b = model.decode_block(&z).unwrap();
    assert_eq!(a.len(), cfg.block_len());
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn zero_noise_predictor_decodes_to_zero() {
    let cfg = CodecConfig::desk();
    let mut model = GcdModel::new(cfg, small_schedule(), 1).unwrap();
    zero_param(&mut model.params, "unet.conv_out.weight");
    zero_param(&mut model.params, "unet.conv_out.bias");
    let z = model.encode_block(&block(4, &cfg)).unwrap();
    assert!(model.decode_block(&z).unwrap().iter().all(|&v| v == 0.0));
}

#[test]
fn zero_noise_predictor_loss_is_unit_noise_power() {
    let cfg = CodecConfig::desk();
    let mut model = GcdModel::new(cfg, small_schedule(), 1).unwrap();
    zero_param(&mut model.params, "unet.conv_out.weight");
    zero_param(&mut model.params, "unet.conv_out.bias");
    let blocks: Vec<Vec<f64>> = (0..4).map(|s| block(s, &cfg)).collect();
    let refs: Vec<&[f64]> = blocks.iter().map(Vec::as_slice).collect();
    let loss = model.loss_and_grad(&refs, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    // mean of 8192 squared unit normals: sd sqrt(2/8192) ~ 0.016
    assert!((loss - 1.0).abs() < 0.08, "loss {loss}");
}

#[test]
fn zero_learning_rate_repeats_losses() {
    let cfg = CodecConfig::desk();
    let mut model = GcdModel::new(cfg, small_schedule(), 1).unwrap();
    let mut adam = AdamState::new(&model.params, 0.0);
    let blocks: Vec<Vec<f64>> = (0..2).map(|s| block(s, &cfg)).collect();
    let refs: Vec<&[f64]> = blocks.iter().map(Vec::as_slice).collect();
    let rng = ChaCha8Rng::seed_from_u64(4);
    let a = model.train_step(&mut adam, &refs, &mut rng.clone()).unwrap();
    let b = model.train_step(&mut adam, &refs, &mut rng.clone()).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn one_step_reaches_every_parameter() {
    let cfg = CodecConfig::desk();
    let mut model = GcdModel::new(cfg, small_schedule(), 2).unwrap();
    let blocks: Vec<Vec<f64>> = (0..2).map(|s| block(s + 10, &cfg)).collect();
    let refs: Vec<&[f64]> = blocks.iter().map(Vec::as_slice).collect();
    model.loss_and_grad(&refs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    for prefix in ["encoder.", "embedder.", "unet."] {
        assert!(model.params.iter().any(|p| p.name.starts_with(prefix)), "{prefix}");
    }
    for p in model.params.iter() {
        assert!(p.grad.iter().any(|&g| g != 0.0), "no gradient reaches {}", p.name);
    }
}

#[test]
fn autoencoder_latent_matches_diffusion_latent() {
    let cfg = CodecConfig::desk();
    let ae = AeModel::new(cfg, 0).unwrap();
    let gcd = GcdModel::new(cfg, small_schedule(), 0).unwrap();
    let b = block(7, &cfg);
    let z = ae.encode_block(&b).unwrap();
    assert_eq!(z.len(), gcd.encode_block(&b).unwrap().len());
    assert_eq!(ae.decode_block(&z).unwrap(), ae.decode_block(&z).unwrap());
    assert_eq!(ae.reconstruct(&b).unwrap().len(), cfg.block_len());
}

#[test]
fn autoencoder_learns_constant_blocks() {
    let cfg = CodecConfig::desk();
    let mut codec = Codec::new(CodecKind::Gcae, cfg, small_schedule(), 0).unwrap();
    let blocks: Vec<Vec<f64>> = [-0.6, -0.1, 0.3, 0.8].iter().map(|&c| vec![c; cfg.block_len()]).collect();
    let losses = train_codec(&mut codec, &blocks, &TrainOptions { steps: 500, lr: 3e-3, ..TrainOptions::default() }).unwrap();
    let last = losses[losses.len() - 20..].iter().sum::<f64>() / 20.0;
    assert!(last < 1e-3, "final loss {last}");
    for b in &blocks {
        let r = codec.decode_block(&codec.encode_block(b).unwrap()).unwrap();
        let mse = r.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / b.len() as f64;
        assert!(mse < 1e-3, "block {} mse {mse}", b[0]);
    }
}

#[test]
fn codec_rejects_wrong_shapes() {
    let cfg = CodecConfig::desk();
    let model = GcdModel::new(cfg, small_schedule(), 0).unwrap();
    assert!(model.encode_block(&[0.0; 10]).is_err());
    assert!(model.decode_block(&[0.0; 3]).is_err());
}
