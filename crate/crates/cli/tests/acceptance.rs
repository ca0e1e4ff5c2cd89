//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! `GANLAB_ACCEPTANCE=1,5` restricts the run to the listed criteria.
//! Training runs land in the target tmp dir and are reused while their
//! config is unchanged; `GANLAB_ACCEPTANCE_FRESH=1` retrains everything.

use ganlab::autodiff::check::check_regime;
use ganlab::autodiff::{grad_wrt_input, grad_wrt_params, Tape};
use ganlab::gan::{self, Minibatch, PenaltyConfig};
use ganlab::metrics::{line_integral, read_metrics_csv, MetricsRecord};
use ganlab::nets::{init_params_with, Activation, LayerSpec, MlpNet, NetSpec};
use ganlab::rng::{self, Rng};
use ganlab::synth::{disjointness_check, SampleSet};
use ganlab::theory::{
    annealed_alt_gd_probe, construct_epsilon_optimal, dirac_gan_run, fixed_alt_gd_probe, verify_epsilon_optimal,
    DiracConfig, EpsilonOptimalSpec, ProbeConfig,
};
use ganlab::Matrix;
use ganlab_cli::compare::summarize;
use ganlab_cli::manifest::{sha256_hex, RunManifest, RunStatus};
use ganlab_cli::plot::plot_run;
use ganlab_cli::{preset, ExperimentConfig};
use ganlab_cli::run::{run_experiment, METRICS};
use rand::Rng as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn runs_root() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

/// A complete earlier run of exactly this config, built by this version.
fn cached(cfg: &ExperimentConfig, dir: &Path) -> bool {
    if std::env::var_os("GANLAB_ACCEPTANCE_FRESH").is_some() {
        return false;
    }
    let Ok(m) = RunManifest::read(dir) else { return false };
    let sha = sha256_hex(&serde_json::to_vec_pretty(cfg).unwrap());
    m.status == RunStatus::Complete
        && m.config_sha256 == sha
        && m.version == env!("CARGO_PKG_VERSION")
        && m.files.iter().any(|f| f.path.ends_with(".svg"))
}

/// Runs a preset into the acceptance directory and returns its metrics rows.
/// A finished run with the same config is reused.
fn run_preset(name: &str, seed: u64) -> Vec<MetricsRecord> {
    let cfg = preset(name, seed).unwrap();
    let dir = runs_root().join(format!("{name}-seed{seed}"));
    if !cached(&cfg, &dir) {
        let _ = std::fs::remove_dir_all(&dir);
        run_experiment(&cfg, &dir).unwrap_or_else(|e| panic!("{name} seed {seed}: {e}"));
        plot_run(&dir).unwrap();
    }
    read_metrics_csv(dir.join(METRICS)).unwrap()
}

const SEEDS: u64 = 5;

// ---------------------------------------------------------------- 1

fn random_net(r: &mut Rng) -> MlpNet {
    let depth = r.random_range(2..=3);
    let acts = [Activation::Relu, Activation::Tanh, Activation::Sigmoid];
    let mut layers: Vec<LayerSpec> = (0..depth)
        .map(|_| LayerSpec {
            // log-uniform over 8..=512
            width: (8.0 * 64f64.powf(r.random::<f64>())).round() as usize,
            activation: acts[r.random_range(0..acts.len())],
            bias: true,
        })
        .collect();
    layers.push(LayerSpec {
        width: 1,
        activation: Activation::Sigmoid,
        bias: true,
    });
    let spec = NetSpec {
        input_dim: r.random_range(2..=4),
        layers,
    };
    init_params_with(&spec, r).unwrap()
}

/// `(tensor, index)` pairs to probe.
fn probe_coords(net: &MlpNet, r: &mut Rng, count: usize) -> Vec<(usize, usize)> {
    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    (0..count.min(total))
        .map(|_| {
            let mut flat = r.random_range(0..total);
            let mut k = 0;
            while flat >= sizes[k] {
                flat -= sizes[k];
                k += 1;
            }
            (k, flat)
        })
        .collect()
}

fn with_param(net: &MlpNet, (k, i): (usize, usize), v: f64) -> MlpNet {
    let mut n = net.clone();
    n.params_mut()[k].as_mut_slice()[i] = v;
    n
}

/// Checks a parameter gradient coordinate by coordinate: each probed
/// coordinate becomes a one-dimensional finite-difference problem.
fn check_params(
    net: &MlpNet,
    coords: &[(usize, usize)],
    analytic: &[Matrix],
    step: f64,
    regime_points: &Matrix,
    f: impl Fn(&MlpNet) -> f64,
) -> (f64, usize, usize) {
    let (mut worst_abs, mut scale, mut probes, mut kinks) = (0.0f64, 0.0f64, 0, 0);
    for &(k, i) in coords {
        let base = net.params()[k].as_slice()[i];
        let a = analytic[k].as_slice()[i];
        let rep = check_regime(
            |x| {
                let n = with_param(net, (k, i), x[0]);
                (f(&n), n.relu_pattern(regime_points).unwrap())
            },
            &[base],
            &[a],
            &[0],
            step,
        )
        .unwrap();
        assert_eq!(rep.non_finite, 0);
        kinks += rep.non_smooth;
        probes += rep.probes;
        worst_abs = worst_abs.max(rep.max_abs);
        scale = scale.max(rep.analytic.iter().chain(&rep.numeric).fold(0.0f64, |m, v| m.max(v.abs())));
    }
    let rel = if scale > 0.0 { worst_abs / scale } else { 0.0 };
    (rel, probes, kinks)
}

fn gradient_correctness() -> Verdict {
    let mut r = rng::seeded(2024);
    let (mut worst_in, mut worst_par, mut worst_pen) = (0.0f64, 0.0f64, 0.0f64);
    let (mut probes, mut kinks) = (0, 0);
    let h = 1e-5;
    for _ in 0..200 {
        let net = random_net(&mut r);
        let dx = net.input_dim();

        // input gradient of D at one point
        let x0 = rng::normal_matrix(&mut r, 1, dx);
        let mut tape = Tape::new();
        let bd = net.bind(&mut tape);
        let xv = tape.leaf(x0.clone());
        let out = bd.forward(&mut tape, xv).unwrap();
        let f = tape.sum(out).unwrap();
        let g = grad_wrt_input(&mut tape, f, xv).unwrap();
        let analytic = tape.value(g).unwrap().as_slice().to_vec();
        let coords: Vec<usize> = (0..dx).collect();
        let rep = check_regime(
            |v| {
                let m = Matrix::row(v);
                (net.predict(&m).unwrap().item(), net.relu_pattern(&m).unwrap())
            },
            x0.as_slice(),
            &analytic,
            &coords,
            h,
        )
        .unwrap();
        worst_in = worst_in.max(rep.max_rel);
        probes += rep.probes;
        kinks += rep.non_smooth;

        // parameter gradient of the discriminator loss
        let batch = Minibatch::new(
            rng::normal_matrix(&mut r, 4, dx),
            rng::normal_matrix(&mut r, 4, dx),
            None,
        )
        .unwrap();
        let loss = |n: &MlpNet| {
            let mut t = Tape::new();
            let b = n.bind(&mut t);
            let l = gan::discriminator_loss(&mut t, &b, &batch).unwrap();
            t.scalar(l.value).unwrap()
        };
        let mut tape = Tape::new();
        let bd = net.bind(&mut tape);
        let l = gan::discriminator_loss(&mut tape, &bd, &batch).unwrap();
        let grads = grad_wrt_params(&mut tape, l.value, &bd.params()).unwrap();
        let both = Matrix::from_vec(8, dx, [batch.reals.as_slice(), batch.fakes.as_slice()].concat());
        let coords = probe_coords(&net, &mut r, 12);
        let (rel, p, k) = check_params(&net, &coords, &grads, h, &both, loss);
        worst_par = worst_par.max(rel);
        probes += p;
        kinks += k;

        // second order: parameter gradient of the zero-centered penalty
        let points = rng::normal_matrix(&mut r, 4, dx);
        let cfg = PenaltyConfig::zero_gp(1.0);
        let pen = |n: &MlpNet| {
            let mut t = Tape::new();
            let b = n.bind(&mut t);
            let p = gan::penalty_at(&mut t, &b, &points, &cfg).unwrap();
            t.scalar(p).unwrap()
        };
        let mut tape = Tape::new();
        let bd = net.bind(&mut tape);
        let p = gan::penalty_at(&mut tape, &bd, &points, &cfg).unwrap();
        let grads = grad_wrt_params(&mut tape, p, &bd.params()).unwrap();
        let (rel, p, k) = check_params(&net, &coords, &grads, h, &points, pen);
        worst_pen = worst_pen.max(rel);
        probes += p;
        kinks += k;
    }
    verdict(
        worst_in <= 1e-5 && worst_par <= 1e-5 && worst_pen <= 1e-4 && probes > 5000,
        format!(
            "max rel err: input {worst_in:.1e}, params {worst_par:.1e}, penalty params {worst_pen:.1e}; {probes} coords compared, {kinks} skipped at kinks"
        ),
    )
}

// ---------------------------------------------------------------- 2

fn line_integral_identity() -> Verdict {
    let mut r = rng::seeded(7);
    let mut worst_sig = 0.0f64;
    for _ in 0..50 {
        let width = r.random_range(8..=128);
        let spec = NetSpec {
            input_dim: 2,
            layers: vec![
                LayerSpec { width, activation: Activation::Sigmoid, bias: true },
                LayerSpec { width, activation: Activation::Sigmoid, bias: true },
                LayerSpec { width: 1, activation: Activation::Sigmoid, bias: true },
            ],
        };
        let d = init_params_with(&spec, &mut r).unwrap();
        let x: Vec<f64> = (0..2).map(|_| rng::uniform(&mut r, -3.0, 3.0)).collect();
        let y: Vec<f64> = (0..2).map(|_| rng::uniform(&mut r, -3.0, 3.0)).collect();
        worst_sig = worst_sig.max(line_integral(&d, &x, &y, 1000).unwrap().residual);
    }
    let mut worst_lin = 0.0f64;
    for _ in 0..50 {
        let spec = NetSpec {
            input_dim: 3,
            layers: vec![LayerSpec { width: 1, activation: Activation::Identity, bias: true }],
        };
        let d = init_params_with(&spec, &mut r).unwrap();
        let x: Vec<f64> = (0..3).map(|_| rng::uniform(&mut r, -3.0, 3.0)).collect();
        let y: Vec<f64> = (0..3).map(|_| rng::uniform(&mut r, -3.0, 3.0)).collect();
        worst_lin = worst_lin.max(line_integral(&d, &x, &y, 1000).unwrap().residual);
    }
    verdict(
        worst_sig <= 1e-3 && worst_lin <= 1e-12,
        format!("max residual: sigmoid nets {worst_sig:.1e}, linear {worst_lin:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn epsilon_optimal_construction() -> Verdict {
    let (mut passed, mut min_margin, mut counts_ok) = (0, f64::INFINITY, true);
    for seed in 0..100 {
        let mut r = rng::stream(seed, 3);
        let x = rng::normal_matrix(&mut r, 50, 10);
        let y = rng::normal_matrix(&mut r, 50, 10);
        let overlap =
            disjointness_check(&SampleSet::new(x.clone()), &SampleSet::new(y.clone())).unwrap();
        assert_eq!(overlap, 0);
        let d = construct_epsilon_optimal(&x, &y, &EpsilonOptimalSpec::new(0.2, 0.05)).unwrap();
        counts_ok &= d.net.param_count() == 10 * (50 + 50) + (50 + 50);
        let rep = verify_epsilon_optimal(&d, &x, &y, 0.2).unwrap();
        passed += rep.optimal as usize;
        min_margin = min_margin.min(rep.real_margin.min(rep.fake_margin));
    }
    verdict(
        passed == 100 && counts_ok,
        format!("{passed}/100 pairs ε-optimal, min margin {min_margin:.3}, parameter count 1100: {counts_ok}"),
    )
}

// ---------------------------------------------------------------- 4

fn fixed_alt_gd() -> Verdict {
    let free = fixed_alt_gd_probe(&ProbeConfig::new(0.1, 0.01, 1)).unwrap();
    let annealed = annealed_alt_gd_probe(0.1, 0.01, 1.0, 20).unwrap();
    let ratios: Vec<f64> = annealed.points.iter().map(|p| p.grad_ratio).collect();
    let ratio_mono = ratios.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let pass = free.steps_non_decreasing()
        && !free.points.is_empty()
        && annealed.steps_non_decreasing()
        && annealed.points.len() == 20
        && ratio_mono;
    verdict(
        pass,
        format!(
            "free run: {} G updates, steps non-decreasing {}; annealed: steps {:.3e} → {:.3e}, ratio {:.3e} → {:.3e}",
            free.points.len(),
            free.steps_non_decreasing(),
            annealed.points[0].d_steps_needed,
            annealed.points[19].d_steps_needed,
            ratios[0],
            ratios[19]
        ),
    )
}

// ---------------------------------------------------------------- 5

fn dirac() -> Verdict {
    let mut settled = [0; 2];
    for (i, lambda) in [1.0, 10.0].into_iter().enumerate() {
        for seed in 0..10 {
            let t = dirac_gan_run(&DiracConfig::seeded(PenaltyConfig::zero_gp(lambda), 0.1, 5000, seed)).unwrap();
            settled[i] += t.settled_within(1e-2).is_some() as usize;
        }
    }
    let oscillating = (0..10)
        .filter(|&seed| {
            let t = dirac_gan_run(&DiracConfig::seeded(PenaltyConfig::none(), 0.1, 5000, seed)).unwrap();
            t.oscillation().oscillating
        })
        .count();
    verdict(
        settled.iter().all(|&s| s >= 9) && oscillating >= 9,
        format!(
            "0-GP settled λ=1: {}/10, λ=10: {}/10; no-GP oscillating {oscillating}/10",
            settled[0], settled[1]
        ),
    )
}

// ---------------------------------------------------------------- 6 and 8

struct Ring8 {
    zero: Vec<Vec<MetricsRecord>>,
    none: Vec<Vec<MetricsRecord>>,
    one: Vec<Vec<MetricsRecord>>,
}

fn ring8_runs() -> Ring8 {
    let all = |name: &str| (0..SEEDS).map(|s| run_preset(name, s)).collect();
    Ring8 {
        zero: all("fig2-ring8-0gp"),
        none: all("fig2-ring8-nogp"),
        one: all("fig2-ring8-1gp"),
    }
}

fn ring8_coverage(runs: &Ring8) -> Verdict {
    let last = |rows: &Vec<MetricsRecord>| rows.last().unwrap().clone();
    let zero: Vec<(usize, f64)> = runs
        .zero
        .iter()
        .map(|r| (last(r).modes_covered.unwrap(), last(r).hq_fraction.unwrap()))
        .collect();
    let none: Vec<(usize, f64)> = runs
        .none
        .iter()
        .map(|r| (last(r).modes_covered.unwrap(), last(r).hq_fraction.unwrap()))
        .collect();
    let zero_ok = zero.iter().filter(|(c, hq)| *c == 8 && *hq >= 0.7).count();
    let none_ok = none.iter().filter(|(c, _)| *c <= 6).count();
    verdict(
        zero_ok >= 4 && none_ok >= 3,
        format!("0-GP (modes, hq) {zero:.2?}: {zero_ok}/5 full; no-GP {none:.2?}: {none_ok}/5 at ≤ 6 modes"),
    )
}

fn capacity_balance(runs: &Ring8) -> Verdict {
    let cv = |rows: &Vec<MetricsRecord>| rows.last().unwrap().grad_norm_cv;
    let per_seed: Vec<(f64, f64, f64)> = (0..SEEDS as usize)
        .map(|s| (cv(&runs.zero[s]), cv(&runs.none[s]), cv(&runs.one[s])))
        .collect();
    let lower = per_seed.iter().all(|(z, n, o)| z < n && z < o);
    let rows = runs.zero.iter().chain(&runs.none).chain(&runs.one).flatten();
    let (total, jensen) = rows.fold((0, 0), |(t, j), r| (t + 1, j + r.jensen_ok as usize));
    verdict(
        lower && jensen == total,
        format!("CV (0-GP, no-GP, 1-GP) per seed {per_seed:.3?}; η² ≤ γ/λ on {jensen}/{total} rows"),
    )
}

// ---------------------------------------------------------------- 7

fn generalization() -> Verdict {
    let mut gaps = [0.0f64; 2];
    let mut corr = Vec::new();
    for seed in 0..SEEDS {
        let mut c = [0.0; 2];
        for (i, name) in ["fig1-0gp", "fig1-nogp"].into_iter().enumerate() {
            let rows = run_preset(name, seed);
            gaps[i] += rows.last().unwrap().gen_gap / SEEDS as f64;
            c[i] = summarize(&runs_root().join(format!("{name}-seed{seed}"))).oracle_corr.unwrap();
        }
        corr.push((c[0], c[1]));
    }
    let corr_ok = corr.iter().all(|(z, n)| z > n);
    verdict(
        gaps[0] < gaps[1] && corr_ok,
        format!(
            "mean gap 0-GP {:.4} vs no-GP {:.4}; oracle correlation (0-GP, no-GP) {corr:.3?}",
            gaps[0], gaps[1]
        ),
    )
}

// ---------------------------------------------------------------- 9

fn reproducibility() -> Verdict {
    let mut identical = Vec::new();
    for (name, seed) in [("fig1-0gp", 11), ("fig1-1gp", 12), ("dirac-nogp", 13), ("dirac-0gp", 14)] {
        let cfg = preset(name, seed).unwrap();
        let bytes: Vec<Vec<u8>> = (0..2)
            .map(|k| {
                let dir = runs_root().join(format!("repro-{name}-{k}"));
                run_experiment(&cfg, &dir).unwrap();
                std::fs::read(dir.join(METRICS)).unwrap()
            })
            .collect();
        identical.push((name, bytes[0] == bytes[1]));
    }
    verdict(identical.iter().all(|(_, same)| *same), format!("{identical:?}"))
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("GANLAB_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect());
    let wanted = |k: u32| only.as_ref().is_none_or(|o| o.contains(&k));
    std::fs::create_dir_all(runs_root()).unwrap();

    let mut results: Vec<(u32, &str, Verdict, f64)> = Vec::new();
    let mut timed = |k: u32, name: &'static str, f: &mut dyn FnMut() -> Verdict| {
        if wanted(k) {
            let t0 = Instant::now();
            let v = f();
            let secs = t0.elapsed().as_secs_f64();
            println!("[{}] {k}. {name}: {} ({secs:.1}s)", if v.pass { "PASS" } else { "FAIL" }, v.detail);
            results.push((k, name, v, secs));
        }
    };
    timed(1, "gradient correctness", &mut gradient_correctness);
    timed(2, "line-integral identity", &mut line_integral_identity);
    timed(3, "ε-optimal construction", &mut epsilon_optimal_construction);
    timed(4, "Fixed-Alt-GD probe", &mut fixed_alt_gd);
    timed(5, "Dirac GAN", &mut dirac);
    if wanted(6) || wanted(8) {
        let t0 = Instant::now();
        let runs = ring8_runs();
        println!("ring8 runs finished in {:.0}s", t0.elapsed().as_secs_f64());
        timed(6, "ring8 mode coverage", &mut || ring8_coverage(&runs));
        timed(8, "capacity balance", &mut || capacity_balance(&runs));
    }
    timed(7, "generalization gap", &mut generalization);
    timed(9, "reproducibility", &mut reproducibility);

    results.sort_by_key(|r| r.0);
    println!("\nacceptance summary");
    for (k, name, v, secs) in &results {
        println!("[{}] {k}. {name} ({secs:.1}s)", if v.pass { "PASS" } else { "FAIL" });
    }
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
