mod support;

use std::sync::OnceLock;

use gcdtc::data_io::{read_raw, write_raw, Dtype};
use gcdtc::guarantee::block_errors;
use gcdtc::pipeline::{
    compress, compress_with, decompress, decompress_with, evaluate, nrmse_many, rd_csv, sweep, train, Archive, CompressOptions, PipelineConfig,
    TrainedModels, RD_CSV_HEADER,
};
use gcdtc::tensor::TensorField;
use gcdtc::Error;
use support::{range, synth};

fn light_config() -> PipelineConfig {
    let mut cfg = PipelineConfig::desk();
    for (k, v) in [("diffusion_steps", "50"), ("beta_max", "0.1"), ("beta_min", "2e-4"), ("train_steps", "30"), ("tc_epochs", "5")] {
        cfg.set(k, v).unwrap();
    }
    cfg.validate().unwrap();
    cfg
}

fn models() -> &'static TrainedModels {
    static M: OnceLock<TrainedModels> = OnceLock::new();
    M.get_or_init(|| train(&[synth(0, [8, 16, 32]), synth(1, [8, 16, 32])], &light_config()).unwrap())
}

fn data() -> Vec<TensorField> {
    let mut a = synth(5, [9, 17, 20]);
    let mut b = synth(6, [9, 17, 20]);
    a.member_id = 3;
    b.member_id = 11;
    vec![a, b]
}

fn tau_for(fields: &[TensorField], rel: f64) -> f64 {
    rel * range(fields) * 8.0
}

fn assert_bits_eq(a: &[TensorField], b: &[TensorField]) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert_eq!((x.member_id, x.shape), (y.member_id, y.shape));
        assert!(x.values.iter().zip(&y.values).all(|(p, q)| p.to_bits() == q.to_bits()), "member {} differs", x.member_id);
    }
}

#[test]
fn round_trip_is_exact_and_bounded() {
    let fields = data();
    let tau = tau_for(&fields, 1e-2);
    let packed = compress(&fields, models(), tau).unwrap();
    assert_eq!(packed.breakdown.archive(), packed.bytes.len());
    let out = decompress(&packed.bytes, models()).unwrap();
    assert_bits_eq(&out, &packed.reconstruction);
    let g = models().config.guarantee_block;
    for (o, r) in fields.iter().zip(&out) {
        let errs = block_errors(o, r, g).unwrap();
        assert!(errs.iter().all(|&e| e <= tau), "max {} > {tau}", errs.iter().cloned().fold(0.0, f64::max));
    }
}

#[test]
fn files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let fields = data();
    write_raw(&fields, Dtype::F32, dir.path().join("in.gsd")).unwrap();
    let (header, read) = read_raw(dir.path().join("in.gsd")).unwrap();
    assert_eq!(header.dtype, Dtype::F32);

    models().save(dir.path().join("model")).unwrap();
    let loaded = TrainedModels::load(dir.path().join("model")).unwrap();
    assert_eq!(loaded.fingerprints(), models().fingerprints());

    let tau = tau_for(&read, 1e-2);
    let packed = compress_with(&read, models(), &CompressOptions { output: Dtype::F32, ..CompressOptions::new(tau) }).unwrap();
    std::fs::write(dir.path().join("a.gcdt"), &packed.bytes).unwrap();
    let out = decompress(&std::fs::read(dir.path().join("a.gcdt")).unwrap(), &loaded).unwrap();
    write_raw(&out, Dtype::F32, dir.path().join("out.gsd")).unwrap();
    let (_, back) = read_raw(dir.path().join("out.gsd")).unwrap();
    assert_bits_eq(&back, &out);
    for (o, r) in read.iter().zip(&back) {
        assert!(block_errors(o, r, [4, 4, 4]).unwrap().iter().all(|&e| e <= tau));
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let fields = data();
    let tau = tau_for(&fields, 3e-2);
    let one = compress(&fields, models(), tau).unwrap();
    let three = compress_with(&fields, models(), &CompressOptions { threads: 3, ..CompressOptions::new(tau) }).unwrap();
    assert_eq!(one.bytes, three.bytes);
    assert_bits_eq(&decompress_with(&one.bytes, models(), 2).unwrap(), &one.reconstruction);
}

#[test]
fn damaged_archives_are_rejected() {
    let fields = vec![synth(8, [8, 16, 16])];
    let packed = compress(&fields, models(), tau_for(&fields, 1e-2)).unwrap();
    for at in [0, 9, packed.bytes.len() / 2, packed.bytes.len() - 1] {
        let mut bad = packed.bytes.clone();
        bad[at] ^= 0x10;
        assert!(decompress(&bad, models()).is_err(), "flip at {at} accepted");
    }
    let err = decompress(&packed.bytes[..packed.bytes.len() - 7], models()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(decompress(&[], models()).is_err());
}

#[test]
fn other_models_are_refused() {
    let fields = vec![synth(8, [8, 16, 16])];
    let packed = compress(&fields, models(), tau_for(&fields, 1e-2)).unwrap();
    let m = models();
    let mut codec = m.codec.clone();
    let p = codec.params_mut();
    let id = p.iter().next().map(|q| p.find(&q.name).unwrap()).unwrap();
    p.get_mut(id).value.data[0] += 1e-9;
    let other = TrainedModels::new(m.config.clone(), codec, m.tc.clone()).unwrap();
    assert!(matches!(decompress(&packed.bytes, &other), Err(Error::ModelMismatch(_))));
}

#[test]
fn tiny_bound_is_infeasible() {
    let fields = vec![synth(8, [8, 16, 16])];
    let err = compress(&fields, models(), 1e-6).unwrap_err();
    assert!(matches!(err, Error::InfeasibleBound { .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn bad_member_lists_are_rejected() {
    assert!(compress(&[], models(), 1.0).is_err());
    let f = synth(8, [8, 16, 16]);
    assert!(compress(&[f.clone(), f], models(), 1.0).is_err());
    let flat = TensorField::new(0, [8, 16, 16], vec![2.5; 8 * 16 * 16]).unwrap();
    assert_eq!(compress(&[flat], models(), 1.0).unwrap_err().exit_code(), 2);
}

#[test]
fn sweep_matches_single_compress() {
    let fields = data();
    let tau = tau_for(&fields, 1e-2);
    let points = sweep(&fields, models(), &[tau], Dtype::F64, 1).unwrap();
    assert_eq!(points.len(), 1);
    let packed = compress(&fields, models(), tau).unwrap();
    let b = packed.breakdown;
    assert_eq!(points[0].breakdown, b);
    let nrmse = nrmse_many(&fields, &packed.reconstruction).unwrap();
    assert_eq!(points[0].nrmse, nrmse);
    let csv = rd_csv(&points);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines, [RD_CSV_HEADER, lines[1]]);
    assert_eq!(lines[1].split(',').count(), RD_CSV_HEADER.split(',').count());

    let (report, _) = evaluate(&fields, &packed.bytes, models(), 1).unwrap();
    assert_eq!(report.violations, 0);
    assert_eq!(report.blocks, 2 * 3 * 5 * 5);
    assert_eq!(report.nrmse, nrmse);
    assert_eq!(report.original_bytes, 2 * 9 * 17 * 20 * 8);
    assert!((report.cr - report.original_bytes as f64 / b.total() as f64).abs() < 1e-12);
    assert!(sweep(&fields, models(), &[], Dtype::F64, 1).is_err());
}

#[test]
fn archive_header_records_settings() {
    let fields = vec![synth(8, [8, 16, 16])];
    let tau = tau_for(&fields, 1e-2);
    let packed = compress(&fields, models(), tau).unwrap();
    let a = Archive::from_bytes(&packed.bytes).unwrap();
    let cfg = &models().config;
    assert_eq!((a.tau, a.diffusion_steps, a.n_t, a.guarantee_block), (tau, cfg.diffusion_steps, cfg.n_t, cfg.guarantee_block));
    assert_eq!(a.model, cfg.model);
    assert_eq!(a.members.len(), 1);
    assert_eq!(a.to_bytes().unwrap(), packed.bytes);
}
