//! End-to-end acceptance checks, run sequentially with one pass/fail line
//! each. `HGN_ACCEPTANCE=1,4,9` restricts the run to the listed criteria.

use std::time::Instant;

use hgn::eval::{evaluate, mean_gap, quality_report, Model};
use hgn::geometry::{project_landmarks, reconstruct_gaze, EyeballState, GazeAngles};
use hgn::losses::{total_loss, uncertainty_gaze_loss, LossParts, LossWeights};
use hgn::netcore::gradcheck::deviation;
use hgn::netcore::{Checkpoint, Network, NetworkConfig, Tape, Tensor, Var};
use hgn::synthgen::io::{decode_dataset, encode_dataset};
use hgn::synthgen::{generate_dataset, read_dataset, write_dataset, AugmentPolicy, Dataset, SynthConfig};
use hgn::trainer::{batch_gradient, gradcheck_objective, lr_at_epoch, train, Mode, TrainConfig};
use hgn::netcore::GradCheckConfig;
use hgn::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Result<Verdict> {
    Ok(Verdict { pass, detail })
}

// ---------------------------------------------------------------- 1

fn geometry_round_trip() -> Result<Verdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let lim = 80f64.to_radians();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let g = GazeAngles { theta: rng.gen_range(-lim..lim), phi: rng.gen_range(-lim..lim) };
        let eye = EyeballState::new(
            rng.gen_range(-100.0..100.0),
            rng.gen_range(-100.0..100.0),
            rng.gen_range(1.0..60.0),
            rng.gen_range(0.05..0.8),
        )?;
        let lm = project_landmarks(&eye, g);
        let back = reconstruct_gaze(lm.iris_center(), lm.eyeball_center(), eye.radius)?.angles;
        worst = worst.max((back.theta - g.theta).abs()).max((back.phi - g.phi).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(worst < 1e-9 && secs < 1.0, format!("max_abs_err_rad={worst:.3e} runtime_s={secs:.3}"))
}

// ---------------------------------------------------------------- 2

const INSTANCES: usize = 100;
const PROBES: usize = 6;
const STEP: f64 = 1e-6;
const REL_TOL: f64 = 1e-4;
const ABS_FLOOR: f64 = 1e-7;

type Build = dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var>;

fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor { shape: shape.to_vec(), data: (0..n).map(|_| rng.gen_range(lo..hi)).collect() }
}

/// `c . op(inputs)` for fixed random `c`, so vector-valued primitives are
/// checked through a scalar.
fn projected(op: &Build, inputs: &[Tensor<f64>], c: &[f64]) -> Result<(f64, Tape<f64>, Vec<Var>, Var)> {
    let mut tape = Tape::new();
    let vars = inputs.iter().map(|t| tape.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    let y = op(&mut tape, &vars)?;
    let v = tape.value(y)?.data.iter().zip(c).map(|(a, b)| a * b).sum();
    Ok((v, tape, vars, y))
}

/// Worst deviation over `INSTANCES` random instances of one primitive.
fn check_primitive(
    seed: u64,
    gen: &dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>,
    op: &Build,
) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut raw = 0.0f64;
    for _ in 0..INSTANCES {
        let inputs = gen(&mut rng);
        let out_len = {
            let mut t = Tape::new();
            let v = inputs.iter().map(|x| t.leaf(x.clone())).collect::<Result<Vec<_>>>()?;
            let y = op(&mut t, &v)?;
            t.value(y)?.len()
        };
        let c: Vec<f64> = (0..out_len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (_, tape, vars, y) = projected(op, &inputs, &c)?;
        let grads = tape.backward_with(y, &c)?;
        for (k, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[k]).map(|g| g.to_vec()).unwrap_or_else(|| vec![0.0; input.len()]);
            for _ in 0..PROBES.min(input.len()) {
                let i = rng.gen_range(0..input.len());
                let mut shifted = inputs.clone();
                shifted[k].data[i] = input.data[i] + STEP;
                let plus = projected(op, &shifted, &c)?.0;
                shifted[k].data[i] = input.data[i] - STEP;
                let minus = projected(op, &shifted, &c)?.0;
                let numeric = (plus - minus) / (2.0 * STEP);
                worst = worst.max(deviation(analytic[i], numeric, ABS_FLOOR));
                raw = raw.max((analytic[i] - numeric).abs());
            }
        }
    }
    Ok((worst, raw))
}

fn positive_map(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let mut t = random_tensor(rng, shape, 0.05, 1.0);
    let cells = shape[1] * shape[2];
    for ch in t.data.chunks_mut(cells) {
        let s: f64 = ch.iter().sum();
        ch.iter_mut().for_each(|v| *v /= s);
    }
    t
}

fn gradient_suite() -> Result<Verdict> {
    let start = Instant::now();
    #[allow(clippy::type_complexity)]
    let cases: Vec<(&str, Box<dyn Fn(&mut ChaCha8Rng) -> Vec<Tensor<f64>>>, Box<Build>)> = vec![
        (
            "conv3x3_s1",
            Box::new(|r| vec![random_tensor(r, &[2, 5, 6], -1.0, 1.0), random_tensor(r, &[3, 2, 3, 3], -1.0, 1.0), random_tensor(r, &[3], -1.0, 1.0)]),
            Box::new(|t, v| t.conv2d(v[0], v[1], v[2], 1, 1)),
        ),
        (
            "conv3x3_s2",
            Box::new(|r| vec![random_tensor(r, &[2, 7, 6], -1.0, 1.0), random_tensor(r, &[3, 2, 3, 3], -1.0, 1.0), random_tensor(r, &[3], -1.0, 1.0)]),
            Box::new(|t, v| t.conv2d(v[0], v[1], v[2], 2, 1)),
        ),
        (
            "conv1x1",
            Box::new(|r| vec![random_tensor(r, &[3, 4, 5], -1.0, 1.0), random_tensor(r, &[2, 3, 1, 1], -1.0, 1.0), random_tensor(r, &[2], -1.0, 1.0)]),
            Box::new(|t, v| t.conv2d(v[0], v[1], v[2], 1, 0)),
        ),
        ("relu", Box::new(|r| vec![random_tensor(r, &[2, 3, 4], -1.0, 1.0)]), Box::new(|t, v| t.relu(v[0]))),
        ("upsample2", Box::new(|r| vec![random_tensor(r, &[2, 3, 4], -1.0, 1.0)]), Box::new(|t, v| t.upsample2(v[0], 5, 8))),
        (
            "concat",
            Box::new(|r| vec![random_tensor(r, &[2, 3, 4], -1.0, 1.0), random_tensor(r, &[1, 3, 4], -1.0, 1.0)]),
            Box::new(|t, v| t.concat(v[0], v[1])),
        ),
        ("global_avg_pool", Box::new(|r| vec![random_tensor(r, &[3, 4, 5], -1.0, 1.0)]), Box::new(|t, v| t.global_avg_pool(v[0]))),
        (
            "linear",
            Box::new(|r| vec![random_tensor(r, &[7], -1.0, 1.0), random_tensor(r, &[3, 7], -1.0, 1.0), random_tensor(r, &[3], -1.0, 1.0)]),
            Box::new(|t, v| t.linear(v[0], v[1], v[2])),
        ),
        ("softplus", Box::new(|r| vec![random_tensor(r, &[6], -4.0, 4.0)]), Box::new(|t, v| t.softplus(v[0]))),
        ("add_scalar", Box::new(|r| vec![random_tensor(r, &[4], -1.0, 1.0)]), Box::new(|t, v| t.add_scalar(v[0], 1.0))),
        ("scale", Box::new(|r| vec![random_tensor(r, &[4], -1.0, 1.0)]), Box::new(|t, v| t.scale(v[0], -2.5))),
        ("sum", Box::new(|r| vec![random_tensor(r, &[2, 3], -1.0, 1.0)]), Box::new(|t, v| t.sum(v[0]))),
        ("spatial_softmax", Box::new(|r| vec![random_tensor(r, &[10, 4, 5], -3.0, 3.0)]), Box::new(|t, v| t.spatial_softmax(v[0]))),
        ("soft_argmax", Box::new(|r| vec![positive_map(r, &[10, 4, 5])]), Box::new(|t, v| t.soft_argmax(v[0], 2.0))),
        (
            "softmax_soft_argmax",
            Box::new(|r| vec![random_tensor(r, &[10, 4, 6], -3.0, 3.0)]),
            Box::new(|t, v| {
                let p = t.spatial_softmax(v[0])?;
                t.soft_argmax(p, 2.0)
            }),
        ),
        (
            "reconstruct_gaze",
            Box::new(|r| {
                let radius: f64 = r.gen_range(5.0..20.0);
                let mut pts = random_tensor(r, &[10, 2], 10.0, 30.0);
                // iris within 0.8 R of the eyeball center keeps arcsin unclamped
                pts.data[0] = pts.data[2] + r.gen_range(-0.6..0.6) * radius;
                pts.data[1] = pts.data[3] + r.gen_range(-0.6..0.6) * radius;
                vec![pts, Tensor { shape: vec![1], data: vec![radius] }]
            }),
            Box::new(|t, v| t.reconstruct(v[0], v[1])),
        ),
        (
            "heatmap_l1",
            Box::new(|r| vec![random_tensor(r, &[10, 4, 5], -3.0, 3.0)]),
            Box::new(|t, v| {
                let p = t.spatial_softmax(v[0])?;
                let target = vec![0.05; 200];
                t.l1(p, &target)
            }),
        ),
        ("abs_diff", Box::new(|r| vec![random_tensor(r, &[5], -1.0, 1.0)]), Box::new(|t, v| t.abs_diff(v[0], &[0.5, -0.5, 0.25, 2.0, -2.0]))),
        (
            "uncertainty_loss",
            Box::new(|r| vec![random_tensor(r, &[2], 0.0, 4.0), random_tensor(r, &[2], -3.0, 3.0)]),
            Box::new(|t, v| t.uncertainty_loss(v[0], v[1])),
        ),
        (
            "weighted_sum",
            Box::new(|r| vec![random_tensor(r, &[1], -1.0, 1.0), random_tensor(r, &[1], -1.0, 1.0), random_tensor(r, &[1], -1.0, 1.0)]),
            Box::new(|t, v| t.weighted_sum(&[(v[0], 5.0), (v[1], 1.0), (v[2], 1.0)])),
        ),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    let mut overall = 0.0f64;
    let mut overall_raw = 0.0f64;
    for (i, (name, gen, op)) in cases.iter().enumerate() {
        let (worst, raw) = check_primitive(100 + i as u64, gen.as_ref(), op.as_ref())?;
        overall = overall.max(worst);
        overall_raw = overall_raw.max(raw);
        if worst > REL_TOL {
            pass = false;
            parts.push(format!("{name}:FAIL({worst:.2e})"));
        }
    }

    // full network objective on an 8x12 toy, every mode
    let data = generate_dataset(&SynthConfig {
        height: 8,
        width: 12,
        radius_range: [2.5, 3.5],
        center_jitter: 0.5,
        count: 3,
        reallike_fraction: 0.34,
        seed: 2,
        ..Default::default()
    })?;
    let net_cfg = NetworkConfig { input_height: 8, input_width: 12, widths: vec![3, 4], head_hidden: 5, radius_init: 3.0, ..Default::default() };
    let mut net_worst = 0.0f64;
    let mut hgn_um_checked = 0;
    for mode in Mode::ALL {
        let cfg = TrainConfig { mode, seed: 5, augment: AugmentPolicy::disabled(), ..Default::default() };
        let r = gradcheck_objective(&net_cfg, &cfg, &data.samples, &GradCheckConfig::default())?;
        net_worst = net_worst.max(r.max_deviation);
        if mode == Mode::HgnUm {
            hgn_um_checked = r.checked;
        }
        if !r.passed {
            pass = false;
            parts.push(format!("network[{mode}]:FAIL({:.2e})", r.max_deviation));
        }
    }
    pass &= hgn_um_checked >= 200;
    let secs = start.elapsed().as_secs_f64();
    pass &= secs < 120.0;
    let detail = format!(
        "primitives={} instances_each={INSTANCES} max_primitive_dev={overall:.2e} max_primitive_abs_diff={overall_raw:.2e} network_max_dev={net_worst:.2e} network_checked={hgn_um_checked} runtime_s={secs:.1} {}",
        cases.len(),
        parts.join(" ")
    );
    verdict(pass, detail.trim_end().to_string())
}

// ---------------------------------------------------------------- 3

fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    while hi - lo > 1e-13 {
        let c = hi - r * (hi - lo);
        let d = lo + r * (hi - lo);
        if f(c) < f(d) {
            hi = d;
        } else {
            lo = c;
        }
    }
    0.5 * (lo + hi)
}

fn uncertainty_minimizer() -> Result<Verdict> {
    let mut worst = 0.0f64;
    let mut found = Vec::new();
    for l in [0.6, 1.0, 1.5, 3.0] {
        let alpha = golden_min(|a| uncertainty_gaze_loss([l, l], [a, a]).value, -10.0, 10.0);
        let expected = (2.0 * l - 1.0f64).ln();
        worst = worst.max((alpha - expected).abs());
        found.push(format!("l={l}:{alpha:.9}"));
    }
    verdict(worst < 1e-6, format!("max_abs_err={worst:.2e} {}", found.join(" ")))
}

// ---------------------------------------------------------------- 4

fn loss_composition() -> Result<Verdict> {
    let w = LossWeights { beta1: 5.0, beta2: 1.0, beta3: 1.0 };
    let unit = LossParts { heatmap: Some(1.0f64), radius: Some(1.0), gaze: Some(1.0) };
    let plain = total_loss(unit, &w, false).total;
    let with_um = total_loss(unit, &w, true).total;

    let data = generate_dataset(&SynthConfig {
        height: 16,
        width: 24,
        radius_range: [5.0, 7.0],
        center_jitter: 1.0,
        count: 4,
        reallike_fraction: 1.0,
        seed: 3,
        ..Default::default()
    })?;
    let net_cfg = NetworkConfig { input_height: 16, input_width: 24, widths: vec![4, 6], radius_init: 6.0, ..Default::default() };
    let mut masked = true;
    let mut terms = Vec::new();
    for mode in [Mode::Hgn, Mode::HgnUm, Mode::Mtl] {
        let net = Network::<f64>::new(mode.network_config(&net_cfg))?;
        let params = net.init_params(1);
        let batch: Vec<_> = data.samples.iter().map(|s| (net.config().prepare_input::<f64>(&s.image), s)).collect();
        let cfg = TrainConfig { mode, augment: AugmentPolicy::disabled(), ..Default::default() };
        let b = batch_gradient(&net, &cfg, &params, &batch)?.breakdown;
        masked &= b.heatmap_term == 0.0 && b.radius_term == 0.0 && b.gaze_term > 0.0;
        terms.push(format!("{mode}:L_h={} L_r={}", b.heatmap_term, b.radius_term));
    }
    verdict(plain == 7.0 && with_um == 7.0 && masked, format!("unit_total={plain} unit_total_um={with_um} reallike_batch[{}]", terms.join(" ")))
}

// ---------------------------------------------------------------- 5

fn clean_profile(count: usize, seed: u64) -> SynthConfig {
    SynthConfig { count, seed, ..Default::default() }
}

fn fast_schedule(mode: Mode, epochs: usize, decay_at: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        epochs,
        lr: 1e-3,
        decay_epochs: vec![decay_at],
        batch_size: 32,
        pretrain_epochs: 0,
        seed,
        augment: AugmentPolicy::disabled(),
        ..Default::default()
    }
}

fn train_eval(mode: Mode, cfg: &TrainConfig, train_set: &Dataset, test_set: &Dataset) -> Result<f64> {
    let net = Network::<f32>::new(mode.network_config(&NetworkConfig::default()))?;
    let out = train(&net, cfg, train_set, None, |_| Ok(()))?;
    let model = Model::new(net, mode, out.params)?;
    Ok(evaluate(&model, test_set, "held-out")?.mean_deg)
}

fn toy_training() -> Result<Verdict> {
    let start = Instant::now();
    let train_set = generate_dataset(&clean_profile(2000, 1))?;
    let test_set = generate_dataset(&clean_profile(500, 1001))?;
    let cfg = fast_schedule(Mode::Hgn, 30, 20, 0);
    let err = train_eval(Mode::Hgn, &cfg, &train_set, &test_set)?;
    let secs = start.elapsed().as_secs_f64();
    verdict(err < 5.0 && secs < 1800.0, format!("held_out_mean_deg={err:.3} samples=2000 epochs=30 runtime_s={secs:.0}"))
}

// ---------------------------------------------------------------- 6

fn ablation_direction() -> Result<Verdict> {
    let train_set = generate_dataset(&clean_profile(500, 11))?;
    let test_set = generate_dataset(&clean_profile(300, 12))?;
    let seeds = [0u64, 1, 2];
    let mut means = Vec::new();
    for mode in [Mode::B, Mode::Mtl, Mode::Hgn] {
        let mut errs = Vec::new();
        for &s in &seeds {
            errs.push(train_eval(mode, &fast_schedule(mode, 8, 5, s), &train_set, &test_set)?);
        }
        means.push((mode, errs.iter().sum::<f64>() / errs.len() as f64, errs));
    }
    let (b, mtl, hgn) = (means[0].1, means[1].1, means[2].1);
    let detail = means
        .iter()
        .map(|(m, mean, e)| format!("{m}={mean:.3}[{}]", e.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(",")))
        .collect::<Vec<_>>()
        .join(" ");
    verdict(hgn <= b && mtl >= hgn, format!("{detail} seeds=3 samples=500 epochs=8"))
}

// ---------------------------------------------------------------- 7

fn uncertainty_separation() -> Result<Verdict> {
    let mixed = |count, seed| SynthConfig { count, seed, reallike_fraction: 0.3, ..Default::default() };
    let train_set = generate_dataset(&mixed(2000, 21))?;
    let test_set = generate_dataset(&mixed(1000, 22))?;
    let mode = Mode::HgnUm;
    let cfg = TrainConfig { mix_ratio: 0.7, ..fast_schedule(mode, 8, 6, 0) };
    let net = Network::<f32>::new(mode.network_config(&NetworkConfig::default()))?;
    let out = train(&net, &cfg, &train_set, None, |_| Ok(()))?;
    let model = Model::new(net, mode, out.params)?;
    let h = quality_report(&model, &test_set, &[0.0, 0.5, 1.0], 20)?;
    let (clean, degraded) = match (h.clean, h.degraded) {
        (Some(c), Some(d)) => (c, d),
        _ => return verdict(false, "missing clean or degraded samples".into()),
    };
    let (gap, se) = mean_gap(&clean, &degraded);
    verdict(
        gap > 3.0 * se,
        format!(
            "clean_mean={:.5} (n={}) degraded_mean={:.5} (n={}) gap={gap:.5} pooled_se={se:.5} gap_in_se={:.2} sigma_inj_rad={}",
            clean.mean,
            clean.count,
            degraded.mean,
            degraded.count,
            gap / se,
            test_set_sigma(&test_set)
        ),
    )
}

fn test_set_sigma(d: &Dataset) -> f64 {
    d.samples.iter().map(|s| s.degradation.sigma_inj).fold(0.0, f64::max)
}

// ---------------------------------------------------------------- 8

fn determinism() -> Result<Verdict> {
    let cfg = SynthConfig { count: 40, reallike_fraction: 0.3, seed: 5, height: 32, width: 48, radius_range: [7.0, 13.0], center_jitter: 3.0, ..Default::default() };
    let a = encode_dataset(&generate_dataset(&cfg)?)?;
    let b = encode_dataset(&generate_dataset(&cfg)?)?;
    let datasets_equal = a == b;

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("d.hgnds");
    std::fs::write(&path, &a)?;
    let read = read_dataset(&path)?;
    let path2 = dir.path().join("d2.hgnds");
    write_dataset(&read, &path2)?;
    let round_trip = std::fs::read(&path2)? == a && encode_dataset(&decode_dataset(&a)?)? == a;

    let data = decode_dataset(&a)?;
    let net_cfg = NetworkConfig { input_height: 32, input_width: 48, widths: vec![8, 12, 16], radius_init: 10.0, ..Default::default() };
    let run = || -> Result<(String, String)> {
        let mode = Mode::HgnUm;
        let net = Network::<f32>::new(mode.network_config(&net_cfg))?;
        let tc = TrainConfig { mode, epochs: 2, pretrain_epochs: 1, batch_size: 8, seed: 9, ..Default::default() };
        let mut log = String::new();
        let out = train(&net, &tc, &data, Some(&data), |e| {
            log.push_str(&format!("{}\n", e.metrics));
            Ok(())
        })?;
        let ckpt = Checkpoint::new(mode.tag(), net.config().clone(), String::new(), out.params).to_json()?;
        Ok((log, ckpt))
    };
    let (log1, ck1) = run()?;
    let (log2, ck2) = run()?;
    let training_equal = log1 == log2 && ck1 == ck2;
    verdict(
        datasets_equal && round_trip && training_equal,
        format!("datasets_identical={datasets_equal} read_write_bit_exact={round_trip} metrics_and_checkpoint_identical={training_equal} threads={}", rayon::current_num_threads()),
    )
}

// ---------------------------------------------------------------- 9

fn schedule() -> Result<Verdict> {
    let c = TrainConfig::default();
    let probes = [(0, 1e-4), (19, 1e-4), (20, 1e-5), (59, 1e-5), (60, 1e-6), (99, 1e-6)];
    let mut ok = true;
    let mut got = Vec::new();
    for (e, want) in probes {
        let lr = lr_at_epoch(&c, e)?;
        ok &= lr == want;
        got.push(format!("{e}:{lr:e}"));
    }
    verdict(ok, got.join(" "))
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let only: Option<Vec<u32>> = std::env::var("HGN_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let threads = std::env::var("HGN_THREADS").ok().and_then(|v| v.parse().ok()).unwrap_or(1);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().expect("thread pool");

    #[allow(clippy::type_complexity)]
    let criteria: [(u32, &str, fn() -> Result<Verdict>); 9] = [
        (1, "geometry round trip", geometry_round_trip),
        (2, "gradient suite", gradient_suite),
        (3, "uncertainty minimizer", uncertainty_minimizer),
        (4, "loss composition and masking", loss_composition),
        (5, "toy end-to-end training", toy_training),
        (6, "ablation direction", ablation_direction),
        (7, "uncertainty separation", uncertainty_separation),
        (8, "determinism and serialization", determinism),
        (9, "schedule conformance", schedule),
    ];
    let mut failed = 0;
    for (id, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let v = pool.install(f).unwrap_or_else(|e| Verdict { pass: false, detail: format!("error: {e}") });
        println!("criterion {id} [{name}]: {} {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
