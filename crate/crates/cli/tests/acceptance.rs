//! Acceptance gate: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so criteria execute one at a time and the
//! timing bounds are not polluted by concurrently running tests.

use std::collections::HashSet;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use cutseg::graphcut::build_graph;
use cutseg::metrics::VoxelCounts;
use cutseg::{
    argmax_labels, corrupt_probabilities, dice_loss_3class, dilate6, edge_map, evaluate,
    generate_phantom, labeling_energy, segment, volumetric_dice, Dims, LabelVolume, MetricParams,
    PhantomSpec, ProbabilityVolume, SegmentParams, Spacing, CAP_MAX,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    check(elapsed.as_secs_f64() < limit_s, || {
        format!("took {:.2} s, limit {limit_s} s", elapsed.as_secs_f64())
    })
}

// Capacity formula restated from its definition, independent of the library.
fn q(x: f64, scale: u64) -> u64 {
    let v = (x * scale as f64).round();
    if v <= 0.0 {
        0
    } else if v >= CAP_MAX as f64 {
        CAP_MAX
    } else {
        v as u64
    }
}

fn neg_log(p: f32, eps: f64) -> f64 {
    -f64::from(p).clamp(eps, 1.0).ln()
}

fn oracle_energy(v: &ProbabilityVolume, p: &SegmentParams, object: impl Fn(usize) -> bool) -> u64 {
    let d = v.dims();
    let mut e = 0u64;
    for i in 0..d.len() {
        let (p0, p1, _) = v.at(i);
        e += if object(i) {
            q(neg_log(p1, p.epsilon), p.capacity_scale)
        } else {
            q(neg_log(p0, p.epsilon), p.capacity_scale)
        };
    }
    for z in 0..d.nz {
        for y in 0..d.ny {
            for x in 0..d.nx {
                let a = d.index(x, y, z);
                for (nx, ny, nz) in [(x + 1, y, z), (x, y + 1, z), (x, y, z + 1)] {
                    if nx >= d.nx || ny >= d.ny || nz >= d.nz {
                        continue;
                    }
                    let b = d.index(nx, ny, nz);
                    if object(a) != object(b) {
                        let pe = v.edge()[a].max(v.edge()[b]);
                        e += q(p.lambda * neg_log(pe, p.epsilon), p.capacity_scale);
                    }
                }
            }
        }
    }
    e
}

fn random_probabilities(rng: &mut ChaCha8Rng, d: Dims) -> ProbabilityVolume {
    let extreme = |rng: &mut ChaCha8Rng| -> f32 {
        match rng.random_range(0..10) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.random::<f32>(),
        }
    };
    let p1: Vec<f32> = (0..d.len()).map(|_| extreme(rng)).collect();
    let pe: Vec<f32> = (0..d.len()).map(|_| extreme(rng)).collect();
    ProbabilityVolume::from_object_edge(d, Spacing::default(), p1, pe).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let d = Dims::new(2, 2, 3).unwrap();
    let lambdas = [1.0, 0.5, 2.0, 4.0];
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let cases = 100;
    for case in 0..cases {
        let v = random_probabilities(&mut rng, d);
        let params = SegmentParams::with_lambda(lambdas[case % lambdas.len()]);
        let cut = segment(&v, &params).map_err(|e| e.to_string())?;
        let g = build_graph(&v, &params).map_err(|e| e.to_string())?;
        let mut best = u64::MAX;
        let mut best_lib = u64::MAX;
        for mask in 0u32..1 << 12 {
            best = best.min(oracle_energy(&v, &params, |i| mask >> i & 1 == 1));
            let bits = (0..d.len()).map(|i| (mask >> i & 1) as u8).collect();
            let l = LabelVolume::new(d, Spacing::default(), bits).unwrap();
            best_lib = best_lib.min(labeling_energy(&g, &l).map_err(|e| e.to_string())?);
        }
        check(best == best_lib, || {
            format!("case {case}: library energy minimum {best_lib} != restated minimum {best}")
        })?;
        check(cut.energy == best && cut.max_flow == best, || {
            format!(
                "case {case}: cut energy {} / flow {} vs exhaustive minimum {best}",
                cut.energy, cut.max_flow
            )
        })?;
        check(
            oracle_energy(&v, &params, |i| cut.labels.is_object(i)) == best,
            || format!("case {case}: returned labels do not attain the minimum"),
        )?;
    }
    let t = start.elapsed();
    within(t, 10.0)?;
    Ok(format!(
        "{cases} volumes, 4096 labelings each, {:.2} s",
        t.as_secs_f64()
    ))
}

fn criterion_2() -> Outcome {
    let case = generate_phantom(&PhantomSpec::default()).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let params = SegmentParams::default();
    let cut = segment(&case.probs, &params).map_err(|e| e.to_string())?;
    let g = build_graph(&case.probs, &params).map_err(|e| e.to_string())?;
    let energy = |l: &LabelVolume| labeling_energy(&g, l).map_err(|e| e.to_string());
    let e_cut = energy(&cut.labels)?;
    check(e_cut == cut.energy, || {
        format!("recomputed {e_cut} != reported {}", cut.energy)
    })?;
    let e_arg = energy(&argmax_labels(&case.probs))?;
    check(e_cut <= e_arg, || format!("cut {e_cut} > argmax {e_arg}"))?;

    let samples = 1000;
    let base = cut.labels.as_slice();
    let (lo, hi) = (1e-5f64.ln(), 0.5f64.ln());
    let mut min_random = u64::MAX;
    for k in 0..samples {
        let rate = (lo + (hi - lo) * k as f64 / (samples - 1) as f64).exp();
        let mut rng = ChaCha8Rng::seed_from_u64(k as u64);
        let data: Vec<u8> = base
            .iter()
            .map(|&b| if rng.random_bool(rate) { 1 - b } else { b })
            .collect();
        let l = LabelVolume::new(cut.labels.dims(), cut.labels.spacing(), data).unwrap();
        let e = energy(&l)?;
        check(e_cut <= e, || {
            format!("sample {k} (flip rate {rate:.2e}) has energy {e} < cut {e_cut}")
        })?;
        min_random = min_random.min(e);
    }
    let t = start.elapsed();
    within(t, 60.0)?;
    Ok(format!(
        "cut {e_cut} <= argmax {e_arg}, <= min of {samples} samples {min_random}, {:.2} s",
        t.as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let mut worst = (1.0f64, 0.0f64, f64::INFINITY);
    for seed in 1..=10u64 {
        let clean =
            generate_phantom(&PhantomSpec::default().with_seed(seed)).map_err(|e| e.to_string())?;
        let case = corrupt_probabilities(&clean, 0.95).map_err(|e| e.to_string())?;
        let dm = &case.distractor_mask;
        let n = dm.count_object() as f64;
        let arg = argmax_labels(&case.probs);
        let cut =
            segment(&case.probs, &SegmentParams::with_lambda(1.0)).map_err(|e| e.to_string())?;
        let frac = |l: &LabelVolume| l.intersect(dm).unwrap().count_object() as f64 / n;
        let (fa, fc) = (frac(&arg), frac(&cut.labels));
        let (_, vdc_arg) = volumetric_dice(&arg, &case.gt).map_err(|e| e.to_string())?;
        let (_, vdc_cut) = volumetric_dice(&cut.labels, &case.gt).map_err(|e| e.to_string())?;
        check(fa >= 0.90, || {
            format!("seed {seed}: argmax keeps {:.1}% of distractor", 100.0 * fa)
        })?;
        check(fc <= 0.05, || {
            format!("seed {seed}: cut keeps {:.1}% of distractor", 100.0 * fc)
        })?;
        check(vdc_cut > vdc_arg, || {
            format!("seed {seed}: cut VDC {vdc_cut} <= argmax VDC {vdc_arg}")
        })?;
        worst = (
            worst.0.min(fa),
            worst.1.max(fc),
            worst.2.min(vdc_cut - vdc_arg),
        );
    }
    Ok(format!(
        "seeds 1..10: argmax keeps >= {:.1}%, cut keeps <= {:.1}%, min VDC gain {:.4}",
        100.0 * worst.0,
        100.0 * worst.1,
        worst.2
    ))
}

struct Face {
    center: [f64; 3],
    area: f64,
}

fn faces(l: &LabelVolume) -> Vec<Face> {
    let d = l.dims();
    let s = l.spacing().as_array();
    let n = [d.nx as i64, d.ny as i64, d.nz as i64];
    let inside = |c: [i64; 3]| {
        (0..3).all(|k| c[k] >= 0 && c[k] < n[k])
            && l.get(c[0] as usize, c[1] as usize, c[2] as usize)
    };
    let mut out = Vec::new();
    for z in 0..n[2] {
        for y in 0..n[1] {
            for x in 0..n[0] {
                let c = [x, y, z];
                if !inside(c) {
                    continue;
                }
                for axis in 0..3 {
                    for step in [-1i64, 1] {
                        let mut nb = c;
                        nb[axis] += step;
                        if inside(nb) {
                            continue;
                        }
                        let mut center = [0.0; 3];
                        for k in 0..3 {
                            center[k] = (c[k] as f64 + 0.5) * s[k];
                        }
                        center[axis] += step as f64 * s[axis] / 2.0;
                        let area = (0..3).filter(|&k| k != axis).map(|k| s[k]).product();
                        out.push(Face { center, area });
                    }
                }
            }
        }
    }
    out
}

fn nearest(from: &[Face], to: &[Face]) -> Vec<f64> {
    from.iter()
        .map(|a| {
            to.iter()
                .map(|b| {
                    (0..3)
                        .map(|k| (a.center[k] - b.center[k]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn brute_metrics(pred: &LabelVolume, gt: &LabelVolume, t: f64) -> (f64, f64, f64) {
    let (both, np, ng) = pred.as_slice().iter().zip(gt.as_slice()).fold(
        (0usize, 0usize, 0usize),
        |(b, p, g), (&x, &y)| {
            (
                b + usize::from(x & y),
                p + usize::from(x),
                g + usize::from(y),
            )
        },
    );
    let vdc = 2.0 * both as f64 / (np + ng) as f64;
    let (fp, fg) = (faces(pred), faces(gt));
    let (dp, dg) = (nearest(&fp, &fg), nearest(&fg, &fp));
    let area = |f: &[Face]| f.iter().map(|x| x.area).sum::<f64>();
    let weighted = |f: &[Face], d: &[f64]| f.iter().zip(d).map(|(x, d)| x.area * d).sum::<f64>();
    let close = |f: &[Face], d: &[f64]| {
        f.iter()
            .zip(d)
            .filter(|(_, &d)| d <= t)
            .map(|(x, _)| x.area)
            .sum::<f64>()
    };
    let sdc = (close(&fp, &dp) + close(&fg, &dg)) / (area(&fp) + area(&fg));
    let msd = 0.5 * (weighted(&fp, &dp) / area(&fp) + weighted(&fg, &dg) / area(&fg));
    (vdc, sdc, msd)
}

fn criterion_4() -> Outcome {
    let gt = generate_phantom(&PhantomSpec::default())
        .map_err(|e| e.to_string())?
        .gt;
    let r =
        evaluate(&gt, &gt, &MetricParams::voxel_size(gt.spacing())).map_err(|e| e.to_string())?;
    check((r.vdc, r.sdc, r.msd_mm) == (1.0, 1.0, Some(0.0)), || {
        format!("evaluate(gt, gt) = ({}, {}, {:?})", r.vdc, r.sdc, r.msd_mm)
    })?;

    let line = Dims::new(4, 1, 1).unwrap();
    let g = LabelVolume::new(line, Spacing::default(), vec![1, 1, 0, 1]).unwrap();
    let p = LabelVolume::new(line, Spacing::default(), vec![1, 1, 1, 0]).unwrap();
    let (counts, vdc) = volumetric_dice(&p, &g).map_err(|e| e.to_string())?;
    check(
        counts
            == VoxelCounts {
                tp: 2,
                fp: 1,
                fn_: 1,
            },
        || format!("counts {counts:?}"),
    )?;
    check((vdc - 0.666667).abs() <= 1e-6, || {
        format!("TP=2 FP=1 FN=1 gives {vdc}")
    })?;

    let spacing = Spacing::new([1.0, 0.8, 1.5]).unwrap();
    let d = Dims::cube(10).unwrap();
    let cube = |o: [usize; 3]| {
        LabelVolume::from_fn(d, spacing, move |x, y, z| {
            (o[0]..o[0] + 4).contains(&x)
                && (o[1]..o[1] + 4).contains(&y)
                && (o[2]..o[2] + 4).contains(&z)
        })
    };
    let mut max_err = 0.0f64;
    let gt = cube([3, 3, 3]);
    for shifted in [cube([4, 3, 3]), cube([3, 4, 3]), cube([3, 3, 4])] {
        for t in [spacing.max_component(), 0.5, 2.0] {
            let r = evaluate(&shifted, &gt, &MetricParams::new(t).unwrap())
                .map_err(|e| e.to_string())?;
            let (vdc, sdc, msd) = brute_metrics(&shifted, &gt, t);
            let msd_lib = r.msd_mm.ok_or("msd undefined")?;
            for (name, a, b) in [
                ("vdc", r.vdc, vdc),
                ("sdc", r.sdc, sdc),
                ("msd", msd_lib, msd),
            ] {
                check((a - b).abs() <= 1e-9, || {
                    format!("{name}: {a} vs brute force {b} (t = {t})")
                })?;
                max_err = max_err.max((a - b).abs());
            }
        }
    }
    Ok(format!(
        "identity exact, Dice spot value {vdc:.6}, shifted cubes max |err| {max_err:.1e}"
    ))
}

fn one_hot(gt: &LabelVolume) -> (Vec<f32>, Vec<f32>) {
    let g1 = gt.as_slice().iter().map(|&v| f32::from(v)).collect();
    let ge = edge_map(gt)
        .as_labels()
        .as_slice()
        .iter()
        .map(|&v| f32::from(v))
        .collect();
    (g1, ge)
}

fn criterion_5() -> Outcome {
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let d = Dims::new(9, 7, 5).unwrap();
    let gt = LabelVolume::from_fn(d, Spacing::default(), |x, y, z| {
        (2..7).contains(&x) && (1..5).contains(&y) && (1..4).contains(&z)
    });
    let mut masks = vec![gt];
    masks.push(
        LabelVolume::new(
            d,
            Spacing::default(),
            (0..d.len())
                .map(|_| u8::from(rng.random_bool(0.3)))
                .collect(),
        )
        .unwrap(),
    );
    for gt in &masks {
        let (g1, ge) = one_hot(gt);
        let perfect =
            ProbabilityVolume::from_object_edge(d, gt.spacing(), g1.clone(), ge.clone()).unwrap();
        let l = dice_loss_3class(&perfect, gt).map_err(|e| e.to_string())?;
        check(l.abs() <= 1e-7, || format!("perfect prediction loss {l}"))?;
        let inv = |v: &[f32]| v.iter().map(|x| 1.0 - x).collect::<Vec<f32>>();
        let worst_case =
            ProbabilityVolume::from_object_edge(d, gt.spacing(), inv(&g1), inv(&ge)).unwrap();
        let l1 = dice_loss_3class(&worst_case, gt).map_err(|e| e.to_string())?;
        check((l1 - 1.0).abs() <= 1e-7, || {
            format!("zero-overlap loss {l1}")
        })?;
        worst = worst.max(l.abs()).max((l1 - 1.0).abs());
    }
    // 27 voxels, centre object, 6 edge voxels, all channels 0.5:
    // overlap = 0.5 * (26 + 1 + 6) = 16.5, mass = 1.5 * 27 + 26 + 1 + 6 = 73.5,
    // loss = 1 - 33 / 73.5 = 27 / 49.
    let c = Dims::cube(3).unwrap();
    let centre = LabelVolume::from_fn(c, Spacing::default(), |x, y, z| (x, y, z) == (1, 1, 1));
    let half = ProbabilityVolume::uniform(c, Spacing::default(), 0.5, 0.5, 0.5);
    let l = dice_loss_3class(&half, &centre).map_err(|e| e.to_string())?;
    check((l - 27.0 / 49.0).abs() <= 1e-7, || {
        format!("3x3x3 uniform case {l}, expected {}", 27.0 / 49.0)
    })?;
    Ok(format!(
        "extremes within {worst:.1e}, 3x3x3 uniform case {l:.7} = 27/49"
    ))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut total_edges = 0;
    for case in 0..50 {
        let d = Dims::new(
            rng.random_range(1..=16),
            rng.random_range(1..=16),
            rng.random_range(1..=16),
        )
        .unwrap();
        let density = rng.random_range(0.0..0.6);
        let data: Vec<u8> = (0..d.len())
            .map(|_| u8::from(rng.random_bool(density)))
            .collect();
        let l = LabelVolume::new(d, Spacing::default(), data).unwrap();

        let object: HashSet<[usize; 3]> = (0..d.len())
            .filter(|&i| l.is_object(i))
            .map(|i| {
                let (x, y, z) = d.coords(i);
                [x, y, z]
            })
            .collect();
        let dims = d.as_array();
        let mut dilated = object.clone();
        for c in &object {
            for axis in 0..3 {
                if c[axis] > 0 {
                    let mut nb = *c;
                    nb[axis] -= 1;
                    dilated.insert(nb);
                }
                if c[axis] + 1 < dims[axis] {
                    let mut nb = *c;
                    nb[axis] += 1;
                    dilated.insert(nb);
                }
            }
        }
        let expected: HashSet<[usize; 3]> = dilated.difference(&object).copied().collect();

        let e = edge_map(&l);
        let got: HashSet<[usize; 3]> = (0..d.len())
            .filter(|&i| e.as_labels().is_object(i))
            .map(|i| {
                let (x, y, z) = d.coords(i);
                [x, y, z]
            })
            .collect();
        check(got == expected, || {
            format!("case {case} ({dims:?}): edge map differs from set difference")
        })?;
        check(got.iter().all(|c| !l.get(c[0], c[1], c[2])), || {
            format!("case {case}: edge voxel inside object")
        })?;
        let via_dilation = dilate6(&l)
            .as_slice()
            .iter()
            .zip(l.as_slice())
            .filter(|(&a, &b)| a == 1 && b == 0)
            .count();
        check(via_dilation == got.len(), || {
            format!("case {case}: dilate6 disagrees with the oracle")
        })?;
        total_edges += got.len();
    }
    Ok(format!("50 volumes, {total_edges} edge voxels checked"))
}

fn peak_rss_bytes() -> Option<u64> {
    let status = fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

fn criterion_7() -> Outcome {
    let case = generate_phantom(&PhantomSpec::scaled(128)).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let cut = segment(&case.probs, &SegmentParams::default()).map_err(|e| e.to_string())?;
    let t = start.elapsed();
    within(t, 60.0)?;
    let peak = peak_rss_bytes().ok_or("VmHWM unavailable")?;
    check(peak < 4 << 30, || {
        format!("peak resident memory {peak} bytes")
    })?;
    let (_, vdc) = volumetric_dice(&cut.labels, &case.gt).map_err(|e| e.to_string())?;
    Ok(format!(
        "128^3 in {:.2} s, peak RSS {:.0} MiB, VDC vs gt {vdc:.4}",
        t.as_secs_f64(),
        peak as f64 / (1 << 20) as f64
    ))
}

fn run_all(dir: &Path, threads: usize) -> Result<Vec<(String, Vec<u8>)>, String> {
    let exe = env!("CARGO_BIN_EXE_cutseg");
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let threads = threads.to_string();
    let ph = p("ph");
    let steps: Vec<Vec<String>> = [
        vec![
            "phantom",
            &ph,
            "--size",
            "40",
            "--seed",
            "8",
            "--artifact-bias",
            "0.95",
        ],
        vec!["segment", &format!("{ph}/probs.mhd"), &p("cut.mhd")],
        vec!["argmax", &format!("{ph}/probs.mhd"), &p("arg.mhd")],
        vec!["edges", &p("cut.mhd"), &p("edges.mhd")],
        vec![
            "eval",
            &p("cut.mhd"),
            &format!("{ph}/gt.mhd"),
            &p("report.json"),
        ],
        vec!["loss", &format!("{ph}/probs.mhd"), &format!("{ph}/gt.mhd")],
        vec![
            "resample",
            &format!("{ph}/probs.mhd"),
            &p("probs_r.mhd"),
            "--spacing",
            "0.7,1.3,2",
        ],
        vec![
            "resample",
            &p("cut.mhd"),
            &p("cut_r.mhd"),
            "--spacing",
            "1.5",
        ],
    ]
    .iter()
    .map(|v| v.iter().map(|s| s.to_string()).collect())
    .collect();
    let mut outputs = Vec::new();
    for args in steps {
        let out = Command::new(exe)
            .args(&args)
            .args(["--threads", &threads])
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "{args:?}: {}",
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        outputs.push((format!("stdout of {}", args[0]), out.stdout));
    }
    let mut files = Vec::new();
    for sub in [dir.to_path_buf(), dir.join("ph")] {
        for e in fs::read_dir(&sub).map_err(|e| e.to_string())? {
            let path = e.map_err(|e| e.to_string())?.path();
            if path.is_file() {
                files.push(path);
            }
        }
    }
    files.sort();
    for f in files {
        let name = f.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
        outputs.push((name, fs::read(&f).map_err(|e| e.to_string())?));
    }
    Ok(outputs)
}

fn criterion_8() -> Outcome {
    let n = std::thread::available_parallelism().map_or(4, |n| n.get().max(4));
    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = Vec::new();
    for (i, threads) in [1, 1, n].into_iter().enumerate() {
        let dir = root.path().join(format!("run{i}"));
        fs::create_dir(&dir).map_err(|e| e.to_string())?;
        runs.push(run_all(&dir, threads)?);
    }
    let reference = &runs[0];
    for (i, run) in runs.iter().enumerate().skip(1) {
        check(run.len() == reference.len(), || {
            format!(
                "run {i} produced {} artifacts, expected {}",
                run.len(),
                reference.len()
            )
        })?;
        for ((na, a), (nb, b)) in reference.iter().zip(run) {
            check(na == nb && a == b, || {
                format!("run {i}: {na} differs from {nb}")
            })?;
        }
    }
    Ok(format!(
        "{} artifacts identical over 2 runs at 1 thread and 1 run at {n} threads",
        reference.len()
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("min-cut exactness", criterion_1),
        ("optimality sampling", criterion_2),
        ("artifact recovery", criterion_3),
        ("metric oracles", criterion_4),
        ("dice loss", criterion_5),
        ("edge map contract", criterion_6),
        ("performance bound", criterion_7),
        ("determinism", criterion_8),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
