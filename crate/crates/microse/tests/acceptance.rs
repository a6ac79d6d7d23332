//! Acceptance suite: one PASS/FAIL line per criterion.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use microse_core::analysis::{
    estimate_footprint, estimate_speedup, psa_loss, si_sdr, validate_constraints, HwProfile, Metrics, Precision,
    SpeedupModel, KIB, MIB,
};
use microse_core::compression::{layer_cap, layer_groups, plan_masks, prune_model, search, GroupCoord, SparsityPlan, LEVELS};
use microse_core::dsp::{istft, stft, DspConfig};
use microse_core::engine::{enhance, Enhancer, LayerId, ModelDims, SeModel};
use microse_core::quant::rescale;
use microse_core::sparse::{DenseMatrix, LayerMatrix};
use microse_core::toy::{random_model, TOY_DIMS};
use microse_core::{Accumulator, PruneMask, QuantFormat, QuantTensor, SparseMatrix, SparsityStructure, Q16, Q8};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn structures() -> [SparsityStructure; 3] {
    [SparsityStructure::Weight, SparsityStructure::block(), SparsityStructure::Unit]
}

fn toy_dsp() -> DspConfig {
    DspConfig { mel_bins: TOY_DIMS.mel_bins, ..DspConfig::default() }
}

fn random_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, s: SparsityStructure) -> PruneMask {
    let p: f64 = rng.gen_range(0.0..1.0);
    let bits = match s {
        SparsityStructure::Weight => (0..rows * cols).map(|_| rng.gen_bool(p)).collect(),
        SparsityStructure::Block { width } => {
            let blocks = cols.div_ceil(width);
            let keep: Vec<bool> = (0..rows * blocks).map(|_| rng.gen_bool(p)).collect();
            (0..rows * cols).map(|i| keep[(i / cols) * blocks + (i % cols) / width]).collect()
        }
        SparsityStructure::Unit => {
            let kr: Vec<bool> = (0..rows).map(|_| rng.gen_bool(p)).collect();
            let kc: Vec<bool> = (0..cols).map(|_| rng.gen_bool(0.5 + p / 2.0)).collect();
            (0..rows * cols).map(|i| kr[i / cols] && kc[i % cols]).collect()
        }
    };
    PruneMask::from_bits(rows, cols, bits).expect("mask shape")
}

fn sparse_kernel_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut macs = 0usize;
    for s in structures() {
        for case in 0..1000 {
            let rows = rng.gen_range(1..48);
            let cols = rng.gen_range(1..48);
            let wf: QuantFormat = if rng.gen_bool(0.5) { Q8 } else { Q16 };
            let zero_p = rng.gen_range(0.0..0.3);
            let w: Vec<i16> = (0..rows * cols)
                .map(|_| if rng.gen_bool(zero_p) { 0 } else { rng.gen_range(wf.min_code()..=wf.max_code()) as i16 })
                .collect();
            let x: Vec<i16> = (0..cols).map(|_| rng.gen_range(Q8.min_code()..=Q8.max_code()) as i16).collect();
            let mask = random_mask(&mut rng, rows, cols, s);
            let dense = QuantTensor::new(w.clone(), vec![rows, cols], wf).unwrap();
            let sm = SparseMatrix::encode(&dense, &mask, s).map_err(|e| format!("{} case {case}: encode: {e}", s.name()))?;

            let masked: Vec<i16> = w.iter().zip(mask.bits()).map(|(&v, &k)| if k { v } else { 0 }).collect();
            let oracle: Vec<i64> = (0..rows)
                .map(|r| (0..cols).map(|c| masked[r * cols + c] as i64 * x[c] as i64).sum())
                .collect();

            ensure(sm.decode() == masked, || format!("{} case {case}: decode differs from masked dense", s.name()))?;
            let mut acc = vec![Accumulator::ZERO; rows];
            macs += sm.accumulate(&x, &mut acc);
            ensure(acc.iter().zip(&oracle).all(|(a, &o)| a.0 as i64 == o), || {
                format!("{} case {case}: accumulators differ from dense matvec", s.name())
            })?;
            let mut dacc = vec![Accumulator::ZERO; rows];
            LayerMatrix::Dense(DenseMatrix::new(rows, cols, wf, masked).unwrap()).accumulate(&x, &mut dacc);
            ensure(dacc == acc, || format!("{} case {case}: dense kernel differs", s.name()))?;
            let y = sm.spmv(&QuantTensor::vector(x, Q8).unwrap(), Q8).unwrap();
            let frac = wf.frac_bits() + Q8.frac_bits();
            ensure(
                y.data().iter().zip(&oracle).all(|(&v, &o)| v as i32 == rescale(o, frac, Q8)),
                || format!("{} case {case}: spmv output differs", s.name()),
            )?;
        }
    }
    Ok(format!("3 x 1000 cases bit-identical ({macs} MAC groups)"))
}

fn streaming_equivalence() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xa11);
    let chunks = [1usize, 160, 256, 4096];
    for model_i in 0..50 {
        let m = random_model(&mut rng, TOY_DIMS, toy_dsp()).unwrap();
        let n = rng.gen_range(3000..9000);
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        let one_shot = enhance(&m, &x, 16_000).map_err(|e| e.to_string())?;
        for &chunk in &chunks {
            let mut e = Enhancer::new(&m).unwrap();
            let mut out = Vec::new();
            for c in x.chunks(chunk) {
                e.process(c, &mut out);
            }
            e.finish(&mut out);
            let d = e.latency();
            let streamed = &out[d..d + n];
            ensure(
                streamed.iter().zip(&one_shot).all(|(a, b)| a.to_bits() == b.to_bits()),
                || format!("model {model_i}, chunk {chunk}: streamed output differs"),
            )?;
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(60), || format!("took {t:.1?}, over 1 min"))?;
    Ok(format!("50 models x {chunks:?} bit-identical in {t:.1?}"))
}

fn stft_round_trip() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x57f7);
    let c = DspConfig::default();
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let x: Vec<f64> = (0..c.sample_rate as usize).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = istft(&stft(&x, &c).map_err(|e| e.to_string())?, &c).map_err(|e| e.to_string())?;
        let frames = 1 + (x.len() - c.frame_size) / c.hop_size;
        let interior = c.hop_size..frames * c.hop_size;
        let err: f64 = interior.clone().map(|i| (y[i] - x[i]).powi(2)).sum();
        let energy: f64 = interior.map(|i| x[i].powi(2)).sum();
        worst = worst.max((err / energy).sqrt());
    }
    ensure(worst < 1e-6, || format!("relative error {worst:e}"))?;
    Ok(format!("20 x 1 s signals, worst interior relative error {worst:.2e}"))
}

fn full_model(seed: u64) -> SeModel {
    random_model(&mut ChaCha8Rng::seed_from_u64(seed), ModelDims::FULL, DspConfig::default()).unwrap()
}

fn pruned_907(base: &SeModel) -> Result<SeModel, String> {
    let (m, plan) = prune_model(base, &SparsityPlan::new(SparsityStructure::Weight, vec![907; 4])).map_err(|e| e.to_string())?;
    ensure((plan.overall - 0.907).abs() < 0.01, || format!("measured sparsity {}", plan.overall))?;
    Ok(m)
}

fn footprint_reproduction() -> Outcome {
    let base = full_model(1);
    let fp32 = estimate_footprint(&base, Precision::Float32).total() as f64 / MIB;
    let int8 = estimate_footprint(&base, Precision::Stored).total() as f64 / MIB;
    ensure((fp32 / 3.7 - 1.0).abs() <= 0.1, || format!("FP32 {fp32:.3} MB"))?;
    ensure((int8 / 1.04 - 1.0).abs() <= 0.1, || format!("INT8 {int8:.3} MB"))?;
    let pruned = pruned_907(&base)?;
    let fp = estimate_footprint(&pruned, Precision::Stored);
    let kb = fp.without_indices() as f64 / KIB;
    ensure(kb <= 100.0, || format!("90.7% model {kb:.1} kB"))?;
    let ratio = estimate_footprint(&base, Precision::Float32).total() as f64 / fp.without_indices() as f64;
    Ok(format!(
        "FP32 {fp32:.2} MB, INT8 {int8:.2} MB, 90.7% weight-sparse {kb:.1} kB ({ratio:.0}x smaller; {:.1} kB with indices)",
        fp.total() as f64 / KIB
    ))
}

fn speedup_anchors() -> Outcome {
    let table = [
        (SparsityStructure::Weight, 0.485, 0.6),
        (SparsityStructure::Weight, 0.701, 0.6),
        (SparsityStructure::Weight, 0.907, 1.84),
        (SparsityStructure::block(), 0.402, 1.7),
        (SparsityStructure::block(), 0.742, 2.7),
        (SparsityStructure::block(), 0.907, 6.7),
        (SparsityStructure::Unit, 0.371, 2.2),
        (SparsityStructure::Unit, 0.660, 3.3),
        (SparsityStructure::Weight, 0.0, 1.0),
    ];
    for (s, sp, want) in table {
        let got = estimate_speedup(s, sp);
        ensure(got == want, || format!("{} @ {sp}: {got} != {want}", s.name()))?;
    }
    Ok(format!("{} anchors exact", table.len()))
}

fn synthetic_q(plan: &SparsityPlan, _: &SeModel) -> Result<Metrics, microse_core::Error> {
    let f = plan.fractions();
    let centre = [0.8, 0.3, 0.6, 0.5];
    let weight = [1.0, 1.4, 0.6, 1.2];
    let d: f64 = (0..4).map(|i| weight[i] * (f[i] - centre[i]).powi(2)).sum();
    Ok(Metrics { stoi: Some(0.95 - d), pesq: Some(3.2 - 1.5 * d), si_sdr: 14.0 - 9.0 * d - 0.5 * f[1] * f[2] })
}

/// Every grid plan under the cap, pruned and measured directly.
fn brute_force(m: &SeModel, s: SparsityStructure, target: f64) -> Option<(Vec<u16>, f64)> {
    let t = (target * 1000.0).round() as u64;
    let cap = layer_cap(t as u16);
    let grid: Vec<u16> = LEVELS.iter().copied().filter(|&l| l <= cap).collect();
    let mut best: Option<(f64, usize, Vec<u16>)> = None;
    for &a in &grid {
        for &b in &grid {
            for &c in &grid {
                for &d in &grid {
                    if s == SparsityStructure::Unit && d != 0 {
                        continue;
                    }
                    let levels = vec![a, b, c, d];
                    let (pm, plan) = prune_model(m, &SparsityPlan::new(s, levels.clone())).unwrap();
                    let pruned: u64 = LayerId::ALL.iter().map(|&l| pm.layer_pruned_count(l) as u64).sum();
                    let total = pm.param_count() as u64;
                    if !(pruned * 1000 >= t * total && pruned * 1000 < (t + 100) * total) {
                        continue;
                    }
                    let q = synthetic_q(&plan, &pm).unwrap().q();
                    let fp = estimate_footprint(&pm, Precision::Stored).total();
                    let better = match &best {
                        None => true,
                        Some((bq, bf, bl)) => q > *bq || (q == *bq && (fp, &levels) < (*bf, bl)),
                    };
                    if better {
                        best = Some((q, fp, levels));
                    }
                }
            }
        }
    }
    best.map(|(q, _, l)| (l, q))
}

fn search_correctness() -> Outcome {
    let start = Instant::now();
    let m = random_model(&mut ChaCha8Rng::seed_from_u64(0x5ea), TOY_DIMS, toy_dsp()).unwrap();
    let mut lines = Vec::new();
    for target in [0.3, 0.5, 0.8] {
        for s in structures() {
            let got = search(&m, target, s, &SpeedupModel::default(), &synthetic_q);
            let want = brute_force(&m, s, target);
            match (got, want) {
                (Ok(r), Some((levels, q))) => {
                    ensure(r.best().plan.levels == levels && r.best().q == q, || {
                        format!("{} @ {target}: search {:?}, brute force {levels:?}", s.name(), r.best().plan.levels)
                    })?;
                    lines.push(format!("{}@{target}={levels:?}", s.name()));
                }
                (Err(microse_core::Error::Infeasible), None) => lines.push(format!("{}@{target}=infeasible", s.name())),
                (got, want) => return Err(format!("{} @ {target}: search {got:?}, brute force {want:?}", s.name())),
            }
        }
    }
    let t = start.elapsed();
    ensure(t < Duration::from_secs(300), || format!("took {t:.1?}, over 5 min"))?;
    Ok(format!("{} in {t:.1?}", lines.join(" ")))
}

fn pruning_invariants() -> Outcome {
    let m = random_model(&mut ChaCha8Rng::seed_from_u64(0x9a7), TOY_DIMS, toy_dsp()).unwrap();
    let noisy: Vec<f64> = {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        (0..4000).map(|_| rng.gen_range(-0.3..0.3)).collect()
    };
    let mut plans = 0;
    let mut infeasible = Vec::new();
    for s in structures() {
        for t in (0..10).map(|i| i as f64 / 10.0).chain([0.95]) {
            let space = microse_core::compression::PlanSpace::for_model(&m, s).unwrap();
            let candidates = microse_core::compression::enumerate_plans(&space, t).unwrap();
            if candidates.is_empty() {
                infeasible.push(format!("{}@{t}", s.name()));
                continue;
            }
            for plan in candidates.iter().step_by(candidates.len().div_ceil(25)) {
                plans += 1;
                let (pm, applied) = prune_model(&m, plan).map_err(|e| e.to_string())?;
                let measured = pm.sparsity();
                ensure(measured >= t - 1e-12 && measured < t + 0.1 - 1e-12, || {
                    format!("{} @ {t}: plan {:?} measured {measured}", s.name(), plan.levels)
                })?;
                ensure(applied.overall == measured, || "reported overall differs from measured".into())?;
                let masks = plan_masks(&m, plan).unwrap();
                for (i, layer) in LayerId::ALL.into_iter().enumerate() {
                    let groups = layer_groups(&m, layer, s);
                    let kept = |g: &GroupCoord| match *g {
                        GroupCoord::Weight { matrix, row, col } => masks[i].matrices[matrix as usize].get(row as usize, col as usize),
                        GroupCoord::Block { matrix, row, block } => {
                            masks[i].matrices[matrix as usize].get(row as usize, block as usize * 8)
                        }
                        GroupCoord::Unit { unit } => masks[i].units.as_ref().is_none_or(|u| u[unit as usize]),
                    };
                    let min_kept = groups.iter().filter(|g| kept(&g.coord)).map(|g| g.l1).fold(f64::INFINITY, f64::min);
                    let max_pruned = groups.iter().filter(|g| !kept(&g.coord)).map(|g| g.l1).fold(f64::NEG_INFINITY, f64::max);
                    ensure(max_pruned <= min_kept, || {
                        format!("{} {:?} {}: pruned L1 {max_pruned} > kept L1 {min_kept}", s.name(), plan.levels, layer.name())
                    })?;
                }
                if s == SparsityStructure::Unit {
                    pm.validate().map_err(|e| format!("unit plan {:?}: {e}", plan.levels))?;
                    let y = enhance(&pm, &noisy, 16_000).map_err(|e| format!("unit plan {:?}: {e}", plan.levels))?;
                    ensure(y.len() == noisy.len() && y.iter().all(|v| v.is_finite()), || "bad enhance output".into())?;
                    ensure(pm.dense[1].bias == m.dense[1].bias && match &pm.dense[1].weights {
                        LayerMatrix::Sparse(w) => w.kept_rows().is_none_or(|k| k.len() == w.rows()),
                        LayerMatrix::Dense(_) => true,
                    }, || {
                        format!("unit plan {:?} removed final-layer units", plan.levels)
                    })?;
                }
            }
        }
    }
    Ok(format!("{plans} plans checked; infeasible targets: {}", if infeasible.is_empty() { "none".into() } else { infeasible.join(" ") }))
}

fn constraint_validator() -> Outcome {
    let dsp = DspConfig::default();
    ensure(dsp.hop_seconds() == 0.016, || format!("deadline {}", dsp.hop_seconds()))?;
    let base = full_model(2);
    let hw = HwProfile::REFERENCE;
    let rb = validate_constraints(&base, &hw).map_err(|e| e.to_string())?;
    ensure(rb.deadline_s == 0.016, || format!("report deadline {}", rb.deadline_s))?;
    ensure(!rb.pass() && !rb.footprint_pass, || format!("baseline passes with {} B", rb.footprint_bytes))?;
    let pruned = pruned_907(&base)?;
    let rp = validate_constraints(&pruned, &hw).map_err(|e| e.to_string())?;
    ensure(rp.pass(), || format!("pruned model fails: {rp:?}"))?;
    Ok(format!(
        "deadline 16 ms; baseline {} B fails {} B SRAM; 90.7% model {} B passes ({:.2} ms compute)",
        rb.footprint_bytes,
        hw.sram_bytes,
        rp.footprint_bytes,
        rp.compute_latency_s * 1e3
    ))
}

fn metric_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3e7);
    let s: Vec<f64> = (0..16_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let e: Vec<f64> = s.iter().map(|v| v + rng.gen_range(-0.2..0.2)).collect();
    let base = si_sdr(&s, &e).unwrap();
    for k in [0.01, 0.5, 3.0, 1000.0] {
        let scaled: Vec<f64> = e.iter().map(|v| v * k).collect();
        let v = si_sdr(&s, &scaled).unwrap();
        ensure((v - base).abs() < 1e-9, || format!("scale {k}: {v} vs {base}"))?;
    }
    let n: Vec<f64> = (0..16_000).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let proj = s.iter().zip(&n).map(|(a, b)| a * b).sum::<f64>() / s.iter().map(|a| a * a).sum::<f64>();
    let n: Vec<f64> = n.iter().zip(&s).map(|(b, a)| b - proj * a).collect();
    let ps: f64 = s.iter().map(|a| a * a).sum();
    let pn: f64 = n.iter().map(|a| a * a).sum();
    let g = (ps / (pn * 10.0)).sqrt();
    let est: Vec<f64> = s.iter().zip(&n).map(|(a, b)| a + g * b).collect();
    let ten = si_sdr(&s, &est).unwrap();
    ensure((ten - 10.0).abs() < 1e-6, || format!("orthogonal construction gives {ten} dB"))?;
    let spec = stft(&e, &DspConfig::default()).unwrap();
    let psa = psa_loss(&spec, &spec).unwrap();
    ensure(psa == 0.0, || format!("psa_loss at identity {psa}"))?;
    Ok(format!("scale invariance < 1e-9, 10 dB construction {ten:.9} dB, psa identity 0"))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 9] = [
        ("sparse-kernel oracle", sparse_kernel_oracle),
        ("streaming equivalence", streaming_equivalence),
        ("stft round trip", stft_round_trip),
        ("footprint reproduction", footprint_reproduction),
        ("speedup anchors", speedup_anchors),
        ("search correctness", search_correctness),
        ("pruning invariants", pruning_invariants),
        ("constraint validator", constraint_validator),
        ("metric checks", metric_checks),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        match std::panic::catch_unwind(check) {
            Ok(Ok(detail)) => println!("PASS {name}: {detail}"),
            Ok(Err(reason)) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
            Err(_) => {
                failed += 1;
                println!("FAIL {name}: panicked");
            }
        }
    }
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
