//! Acceptance suite. Prints one line per criterion and exits nonzero if any
//! criterion fails.

mod support;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use gcdtc::correction::{extract_traces, tc_apply, tc_train};
use gcdtc::data_io::Dtype;
use gcdtc::diffusion::{forward_sample, CodecKind, NoiseSchedule};
use gcdtc::entropy::{
    decode_stream, dequantize_log, dequantize_uniform, encode_stream, quantize_log, quantize_uniform, HuffmanTable, QuantConfig,
};
use gcdtc::guarantee::{fit_basis, GuaranteeConfig};
use gcdtc::pipeline::{decompress, finish, prepare, rd_csv, sweep, train, PipelineConfig, TrainedModels, RD_CSV_HEADER};
use gcdtc::tensor::{normalize, partition, NormStats, TensorField};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use support::gradcheck::{max_relative_error, ALL_OPS};
use support::{range, synth, tiny_set};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// l2 error of every 4x4x4 block, edge blocks clipped to the field.
fn block_l2(a: &TensorField, b: &TensorField) -> Vec<f64> {
    let [nt, ny, nx] = a.shape;
    let mut out = Vec::new();
    for t0 in (0..nt).step_by(4) {
        for y0 in (0..ny).step_by(4) {
            for x0 in (0..nx).step_by(4) {
                let mut s = 0.0;
                for t in t0..(t0 + 4).min(nt) {
                    for y in y0..(y0 + 4).min(ny) {
                        for x in x0..(x0 + 4).min(nx) {
                            let d = a.get(t, y, x) - b.get(t, y, x);
                            s += d * d;
                        }
                    }
                }
                out.push(s.sqrt());
            }
        }
    }
    out
}

fn rel_tau(fields: &[TensorField], r: f64) -> f64 {
    r * range(fields) * 8.0
}

fn desk() -> PipelineConfig {
    PipelineConfig::desk()
}

fn c1_error_bound(models: &TrainedModels) -> Outcome {
    let (mut blocks, mut violations, mut worst) = (0, 0, 0.0f64);
    for seed in 0..20 {
        let field = synth(seed, [8, 16, 32]);
        let fields = [field];
        let prepared = prepare(&fields, models, 1).map_err(|e| e.to_string())?;
        for r in [1e-2, 1e-3] {
            let tau = rel_tau(&fields, r);
            let packed = finish(&fields, &prepared, models, tau, Dtype::F64).map_err(|e| e.to_string())?;
            let out = decompress(&packed.bytes, models).map_err(|e| e.to_string())?;
            for e in block_l2(&fields[0], &out[0]) {
                blocks += 1;
                worst = worst.max(e / tau);
                violations += usize::from(e > tau);
            }
        }
    }
    check(violations == 0, format!("{violations} of {blocks} blocks over tau, worst error/tau {worst:.4}"))
}

fn c2_schedule() -> Outcome {
    let s = NoiseSchedule::linear(1000, 1e-5, 5e-3).unwrap();
    let mut prod = 1.0;
    for i in 0..1000 {
        prod *= 1.0 - (1e-5 + (5e-3 - 1e-5) * i as f64 / 999.0);
    }
    let diff = (s.alpha_bar(1000) - prod).abs();
    let ends = s.beta(1) == 1e-5 && s.beta(1000) == 5e-3;
    check(diff <= 1e-12 && ends, format!("alpha_bar[1000] = {:.12e}, oracle diff {diff:.1e}, endpoints exact: {ends}", s.alpha_bar(1000)))
}

fn c3_forward_stats() -> Outcome {
    let s = NoiseSchedule::linear(1000, 1e-5, 5e-3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 10_000;
    let x0 = vec![0.7; n];
    let mut worst = (0.0f64, 0.0f64);
    for t in [1, 500, 1000] {
        let eps: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let xt = forward_sample(&x0, t, &eps, &s).unwrap();
        let mean = xt.iter().sum::<f64>() / n as f64;
        let var = xt.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let ab = s.alpha_bar(t);
        let sigma = (1.0 - ab).sqrt();
        worst.0 = worst.0.max((mean - ab.sqrt() * 0.7).abs() / (3.0 * sigma / 100.0));
        worst.1 = worst.1.max((var / (1.0 - ab) - 1.0).abs() / 0.05);
    }
    check(worst.0 <= 1.0 && worst.1 <= 1.0, format!("worst mean error {:.3} and variance error {:.3} of tolerance", worst.0, worst.1))
}

fn c4_gradients() -> Outcome {
    let mut worst = (0.0, ALL_OPS[0]);
    for kind in ALL_OPS {
        for seed in 0..50 {
            let e = max_relative_error(kind, seed);
            if e > worst.0 {
                worst = (e, kind);
            }
        }
    }
    check(worst.0 <= 1e-4, format!("{} ops x 50 shapes, worst relative error {:.2e} ({:?})", ALL_OPS.len(), worst.0, worst.1))
}

fn c5_quantizers() -> Outcome {
    let cfg = QuantConfig::default();
    let half = cfg.half_step();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut uniform_bad = 0;
    for i in 0..1_000_000 {
        let x: f64 = match i % 3 {
            0 => rng.random_range(-1.0..1.0),
            1 => rng.random_range(-1e4..1e4),
            _ => rng.random_range(-1.0f64..1.0) * 10f64.powi(rng.random_range(-8..8)),
        };
        let q = quantize_uniform(x, &cfg).unwrap();
        uniform_bad += usize::from((x - dequantize_uniform(q, &cfg)).abs() > half);
    }
    let bound = half.exp_m1();
    let (mut rel_bad, mut worst_rel, mut shifted_bad) = (0, 0.0f64, 0);
    let mut mags: Vec<f64> = (0..1_000_000).map(|_| 10f64.powf(rng.random_range(0.0..6.0))).collect();
    mags.sort_by(f64::total_cmp);
    let mut monotone = true;
    let mut prev = f64::NEG_INFINITY;
    for &c in &mags {
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let c = sign * c;
        let hat = dequantize_log(quantize_log(c, &cfg).unwrap(), &cfg);
        monotone &= hat.abs() >= prev;
        prev = hat.abs();
        let rel = (c - hat).abs() / c.abs();
        worst_rel = worst_rel.max(rel);
        rel_bad += usize::from(rel > bound);
        shifted_bad += usize::from((c - hat).abs() / (1.0 + c.abs()) > bound);
    }
    let detail = format!(
        "uniform {uniform_bad} violations in 1e6; log monotone {monotone}; |c - c^|/|c| <= {bound:.5} violated {rel_bad} times in 1e6 \
         (worst {worst_rel:.5}); |c - c^|/(1 + |c|) <= {bound:.5} violated {shifted_bad} times"
    );
    check(uniform_bad == 0 && monotone && rel_bad == 0, detail)
}

/// Cheapest total code length over all prefix codes for these counts.
fn brute_force_cost(counts: &[u64]) -> u64 {
    let k = counts.len();
    if k == 1 {
        return counts[0];
    }
    let max_len = k as u32 - 1;
    let mut lens = vec![1u32; k];
    let mut best = u64::MAX;
    loop {
        // Kraft: sum 2^(max_len - l) <= 2^max_len
        let kraft: u64 = lens.iter().map(|&l| 1u64 << (max_len - l)).sum();
        if kraft <= 1u64 << max_len {
            best = best.min(counts.iter().zip(&lens).map(|(&c, &l)| c * u64::from(l)).sum());
        }
        let mut i = 0;
        while i < k && lens[i] == max_len {
            lens[i] = 1;
            i += 1;
        }
        if i == k {
            return best;
        }
        lens[i] += 1;
    }
}

fn multisets(size: usize, lo: u64, out: &mut Vec<u64>, f: &mut dyn FnMut(&[u64])) {
    if out.len() == size {
        f(out);
        return;
    }
    for c in lo..=8 {
        out.push(c);
        multisets(size, c, out, f);
        out.pop();
    }
}

fn c6_huffman() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut mismatched = 0;
    for _ in 0..10_000 {
        let len = rng.random_range(1..200);
        let spread = rng.random_range(1..1000i64);
        let symbols: Vec<i64> = (0..len).map(|_| rng.random_range(-spread..=spread) * rng.random_range(1..4)).collect();
        let s = encode_stream(&symbols).map_err(|e| e.to_string())?;
        mismatched += usize::from(decode_stream(&s.bytes).map_err(|e| e.to_string())? != symbols);
    }
    let (mut alphabets, mut suboptimal) = (0, 0);
    for size in 1..=6 {
        multisets(size, 1, &mut Vec::new(), &mut |counts| {
            alphabets += 1;
            let mut pool: Vec<i64> = (-20..20).collect();
            let map: BTreeMap<i64, u64> = counts.iter().map(|&c| (pool.swap_remove(rng.random_range(0..pool.len())), c)).collect();
            let table = HuffmanTable::from_counts(&map).unwrap();
            suboptimal += usize::from(table.encoded_bits(&map) != Some(brute_force_cost(counts)));
        });
    }
    check(
        mismatched == 0 && suboptimal == 0,
        format!("{mismatched} of 1e4 streams failed to round-trip; {suboptimal} of {alphabets} count multisets not optimal"),
    )
}

fn c7_pca() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let shape = [2 * rng.random_range(2..5), 2 * rng.random_range(2..5), 2 * rng.random_range(2..5)];
        let n: usize = shape.iter().product();
        let scales: Vec<f64> = (0..8).map(|_| 10f64.powf(rng.random_range(-2.0..1.0))).collect();
        let orig: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let recon: Vec<f64> = orig
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let [t, y, x] = [i / (shape[1] * shape[2]), i / shape[2] % shape[1], i % shape[2]];
                v - scales[(t % 2) * 4 + (y % 2) * 2 + x % 2] * rng.sample::<f64, _>(StandardNormal)
            })
            .collect();
        let (a, b) = (TensorField::new(0, shape, orig).unwrap(), TensorField::new(0, shape, recon).unwrap());
        let cfg = GuaranteeConfig { block_shape: [2, 2, 2], ..GuaranteeConfig::new(1.0).unwrap() };
        let basis = fit_basis(&[(&a, &b)], &cfg).map_err(|e| e.to_string())?;

        let mut rows = Vec::new();
        for t0 in (0..shape[0]).step_by(2) {
            for y0 in (0..shape[1]).step_by(2) {
                for x0 in (0..shape[2]).step_by(2) {
                    let mut r = Vec::with_capacity(8);
                    for t in t0..t0 + 2 {
                        for y in y0..y0 + 2 {
                            for x in x0..x0 + 2 {
                                r.push(a.get(t, y, x) - b.get(t, y, x));
                            }
                        }
                    }
                    rows.push(r);
                }
            }
        }
        let m = rows.len();
        let mean: Vec<f64> = (0..8).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m as f64).collect();
        let cov = DMatrix::from_fn(8, 8, |i, j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (m - 1) as f64);
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..8).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        for (k, &i) in order.iter().enumerate() {
            worst.0 = worst.0.max((basis.eigenvalues()[k] - eig.eigenvalues[i]).abs());
            let v = eig.eigenvectors.column(i);
            let col = basis.column(k);
            let dot: f64 = col.iter().zip(v.iter()).map(|(p, q)| p * q).sum();
            let s = dot.signum();
            worst.1 = worst.1.max(col.iter().zip(v.iter()).map(|(p, q)| (p - s * q).abs()).fold(0.0, f64::max));
        }
    }
    check(worst.0 <= 1e-8 && worst.1 <= 1e-8, format!("100 residual sets, worst eigenvalue diff {:.1e}, worst vector diff {:.1e}", worst.0, worst.1))
}

struct Run {
    models: TrainedModels,
    archive: Vec<u8>,
    recon: Vec<TensorField>,
}

fn end_to_end(models: TrainedModels) -> gcdtc::Result<Run> {
    let fields = tiny_set();
    let prepared = prepare(&fields, &models, 1)?;
    let packed = finish(&fields, &prepared, &models, rel_tau(&fields, 1e-2), Dtype::F64)?;
    let recon = decompress(&packed.bytes, &models)?;
    Ok(Run { models, archive: packed.bytes, recon })
}

fn c8_determinism(first: &Run) -> Outcome {
    let second = end_to_end(train(&tiny_set(), &desk()).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let models_same = first.models.file_bytes().unwrap() == second.models.file_bytes().unwrap();
    let archive_same = first.archive == second.archive;
    let recon_same = first.recon.len() == second.recon.len()
        && first.recon.iter().zip(&second.recon).all(|(a, b)| a.values.iter().zip(&b.values).all(|(p, q)| p.to_bits() == q.to_bits()));
    check(
        models_same && archive_same && recon_same,
        format!("model files identical {models_same}, archives identical {archive_same} ({} bytes), reconstructions identical {recon_same}", first.archive.len()),
    )
}

fn c9_learning(models: &TrainedModels) -> Outcome {
    let l = &models.codec_losses;
    if l.len() < 100 {
        return Err(format!("only {} loss values", l.len()));
    }
    let first = l[..50].iter().sum::<f64>() / 50.0;
    let best = l.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).fold(f64::INFINITY, f64::min);
    let last = l[l.len() - 50..].iter().sum::<f64>() / 50.0;
    let drop = 1.0 - best / first;

    let cfg = &models.config;
    let (mut wins, mut total) = (0, 0);
    for f in tiny_set() {
        let x = normalize(&f, &NormStats::of(&f).unwrap()).unwrap();
        let (blocks, _) = partition(&x, cfg.model.block_shape).unwrap();
        for b in blocks {
            let z: Vec<f64> = models
                .codec
                .encode_block(&b.values)
                .unwrap()
                .iter()
                .map(|&v| dequantize_uniform(quantize_uniform(v, &cfg.latent_quant).unwrap(), &cfg.latent_quant))
                .collect();
            let mse = |z: &[f64]| {
                let y = models.codec.decode_block(z).unwrap();
                y.iter().zip(&b.values).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / y.len() as f64
            };
            let zeros = vec![0.0; z.len()];
            wins += usize::from(mse(&z) < mse(&zeros));
            total += 1;
        }
    }
    let share = wins as f64 / total as f64;
    check(
        drop >= 0.3 && share >= 0.9,
        format!("loss first-50 mean {first:.4}, best 50-step mean {best:.4} ({:.0}% lower), last-50 {last:.4}; true z beats zero z on {wins} of {total} blocks", drop * 100.0),
    )
}

fn c10_monotone(models: &TrainedModels) -> Outcome {
    let fields = tiny_set();
    let taus: Vec<f64> = [3e-3, 1e-2, 3e-2].iter().map(|&r| rel_tau(&fields, r)).collect();
    let pts = sweep(&fields, models, &taus, Dtype::F64, 1).map_err(|e| e.to_string())?;
    let ok = pts.windows(2).all(|w| w[1].nrmse >= w[0].nrmse && w[1].cr >= w[0].cr);
    let desc: Vec<String> = pts.iter().map(|p| format!("(nrmse {:.3e}, cr {:.5})", p.nrmse, p.cr)).collect();
    check(ok, format!("sweep {}", desc.join(" ")))
}

fn c11_tc() -> Outcome {
    let f = synth(11, [32, 16, 16]);
    let x = normalize(&f, &NormStats::of(&f).unwrap()).unwrap();
    let corrupted = x.with_values(x.values.iter().map(|v| v + 0.1).collect()).unwrap();
    let n_t = desk().n_t;
    let traces = extract_traces(&x, &corrupted, n_t).map_err(|e| e.to_string())?;
    let net = tc_train(&traces, 200, 0).map_err(|e| e.to_string())?;
    let fixed = tc_apply(&net, &corrupted).map_err(|e| e.to_string())?;
    let mse = |a: &TensorField| a.values.iter().zip(&x.values).map(|(p, q)| (p - q).powi(2)).sum::<f64>() / a.len() as f64;
    let (before, after) = (mse(&corrupted), mse(&fixed));
    check(after < before, format!("MSE {before:.3e} before, {after:.3e} after correction"))
}

fn c12_baseline() -> Outcome {
    let mut cfg = desk();
    cfg.codec = CodecKind::Gcae;
    let fields = tiny_set();
    let models = train(&fields, &cfg).map_err(|e| e.to_string())?;
    let taus: Vec<f64> = [3e-3, 1e-2, 3e-2].iter().map(|&r| rel_tau(&fields, r)).collect();
    let csv = rd_csv(&sweep(&fields, &models, &taus, Dtype::F64, 1).map_err(|e| e.to_string())?);
    let lines: Vec<&str> = csv.lines().collect();
    let cols = RD_CSV_HEADER.split(',').count();
    let ok = lines.len() == 4 && lines[0] == RD_CSV_HEADER && lines[1..].iter().all(|l| l.split(',').count() == cols);
    check(ok, format!("gcae sweep wrote {} rows under header {:?}", lines.len() - 1, lines[0]))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut failed = 0;
    let mut report = |n: usize, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {n}: PASS  {d}  [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("criterion {n}: FAIL  {d}  [{secs:.1}s]");
            }
        }
    };

    report(2, &mut c2_schedule);
    report(3, &mut c3_forward_stats);
    report(4, &mut c4_gradients);
    report(5, &mut c5_quantizers);
    report(6, &mut c6_huffman);
    report(7, &mut c7_pca);
    report(11, &mut c11_tc);

    let shared = catch_unwind(|| end_to_end(train(&tiny_set(), &desk())?)).ok().and_then(Result::ok);
    match &shared {
        Some(run) => {
            report(1, &mut || c1_error_bound(&run.models));
            report(8, &mut || c8_determinism(run));
            report(9, &mut || c9_learning(&run.models));
            report(10, &mut || c10_monotone(&run.models));
        }
        None => {
            for n in [1, 8, 9, 10] {
                report(n, &mut || Err("shared desk training run failed".into()));
            }
        }
    }
    report(12, &mut c12_baseline);

    println!("acceptance: {} of 12 criteria failed  [{:.0}s]", failed, started.elapsed().as_secs_f64());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
