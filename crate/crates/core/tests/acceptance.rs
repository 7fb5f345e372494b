//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::fs;
use std::path::Path;
use std::process::Command as Process;
use std::time::{Duration, Instant};

use common::{central_diff, literal_alpha, literal_cosine, literal_infonce, literal_sigmas, literal_x, random, rel};
use dimcollapse::analysis;
use dimcollapse::config::{self, Command, ExperimentConfig};
use dimcollapse::directclr::{self, ProjectorSpec, ProjectorVariant, SubvectorSpec};
use dimcollapse::dynamics::{self, FlowConfig};
use dimcollapse::experiments;
use dimcollapse::infonce::{self, EmbeddingBatch};
use dimcollapse::models::{self, InitSpec, LinearStack, Nonlinearity, ResidualEncoder};
use dimcollapse::numerics::{self, diag};
use dimcollapse::rng;
use dimcollapse::synthdata::{self, AugmentationSpec, Batch, DataSpec};
use dimcollapse::Matrix;

type Check = Result<(bool, String), String>;

fn defaults(command: Command) -> ExperimentConfig {
    config::parse_for(command, "").expect("defaults parse")
}

fn gaussian_batch(d: usize, n: usize, noise: f64, seed: u64) -> Batch {
    let x = random(d, n, seed);
    let xp = &x + random(d, n, seed + 1000) * noise;
    Batch::new(x, xp, seed).unwrap()
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn gradient_oracle() -> Check {
    let mut worst: f64 = 0.0;
    let mut batches = 0;
    for &d in &[4usize, 16] {
        for &n in &[3usize, 8, 32] {
            for b in 0..20u64 {
                let seed = 1_000 * d as u64 + 10 * n as u64 + b;
                let z = random(d, n, seed);
                let zp = &z + random(d, n, seed + 500) * 0.5;
                let g = infonce::embedding_grads(&EmbeddingBatch::new(z.clone(), zp.clone()).unwrap()).map_err(|e| e.to_string())?;
                let fd_z = central_diff(&z, 1e-5, |m| literal_infonce(m, &zp));
                let fd_zp = central_diff(&zp, 1e-5, |m| literal_infonce(&z, m));
                worst = worst.max(rel(&g.g_z, &fd_z)).max(rel(&g.g_zp, &fd_zp));
                batches += 1;
            }
        }
    }
    Ok((worst < 1e-6, format!("{batches} batches, max rel err {worst:.2e} (< 1e-6)")))
}

fn decomposition() -> Check {
    let mut worst: f64 = 0.0;
    let mut min_eig = f64::INFINITY;
    for b in 0..20u64 {
        let (d, n) = if b % 2 == 0 { (8, 16) } else { (16, 32) };
        let batch = gaussian_batch(d, n, 0.3, 40 + b);
        let w = random(d, d, 90 + b) / (d as f64).sqrt();
        let z = &w * &batch.x;
        let zp = &w * &batch.xp;
        let weights = infonce::softmax_weights(&EmbeddingBatch::new(z.clone(), zp.clone()).unwrap()).map_err(|e| e.to_string())?;
        let alpha = literal_alpha(&z, &zp);
        let direct = literal_x(&batch.x, &batch.xp, &alpha);
        let lib = infonce::build_x(&batch, &weights).map_err(|e| e.to_string())?;
        let (s0, s1) = literal_sigmas(&batch.x, &batch.xp, &alpha);
        worst = worst
            .max(rel(&direct, &(&lib.sigma0 - &lib.sigma1)))
            .max(rel(&lib.x, &(&s0 - &s1)))
            .max(rel(&direct, &lib.x));
        for m in [&lib.sigma0, &lib.sigma1] {
            min_eig = min_eig.min(numerics::symmetric_eigen(m).map_err(|e| e.to_string())?.min_value());
        }
    }
    Ok((
        worst < 1e-10 && min_eig >= -1e-10,
        format!("max rel mismatch {worst:.2e} (< 1e-10), min eig {min_eig:.2e} (>= -1e-10)"),
    ))
}

fn weight_gradient_identities() -> Check {
    let mut worst: f64 = 0.0;
    for b in 0..10u64 {
        let d = 6 + b as usize % 3 * 5;
        let batch = gaussian_batch(d, 12, 0.4, 300 + b);
        let w1 = random(d, d, 400 + b) / (d as f64).sqrt();
        let w2 = random(d, d, 500 + b) / (d as f64).sqrt();
        for layers in [vec![w1.clone()], vec![w1.clone(), w2.clone()]] {
            let stack = LinearStack::new(layers.clone(), Nonlinearity::None).unwrap();
            let prod = stack.product();
            let z = &prod * &batch.x;
            let zp = &prod * &batch.xp;
            let emb = EmbeddingBatch::new(z.clone(), zp.clone()).unwrap();
            let g = infonce::assemble_g(&infonce::embedding_grads(&emb).unwrap(), &batch).unwrap();
            let x = literal_x(&batch.x, &batch.xp, &literal_alpha(&z, &zp));
            worst = worst.max(rel(&g, &(-&prod * &x)));
        }
    }
    Ok((worst < 1e-10, format!("max rel err {worst:.2e} over L=1 and L=2 (< 1e-10)")))
}

fn closed_form_flow() -> Check {
    let d = 6;
    let eigs = [-0.5, -0.3, -0.1, 0.05, 0.15, 0.3];
    let (x, q) = common::symmetric_with_eigenvalues(&eigs, 7);
    let w0 = rng::random_orthogonal(d, &mut rng::stream(8, 79));
    let oracle = &w0 * common::taylor_exp(&(&x * 10.0));
    let closed = dynamics::closed_form_flow(&w0, &x, 10.0).map_err(|e| e.to_string())?;
    let euler = dynamics::frozen_flow_euler(&w0, &x, 1e-4, 100_000).map_err(|e| e.to_string())?;
    let err_euler = rel(&euler, &oracle);
    let err_closed = rel(&closed, &oracle);
    // W0 is orthogonal, so the singular value along the most negative
    // eigendirection is |W(t) q_min|.
    let q_min = q.column(0);
    let decay_euler = (&w0 * q_min).norm() / (&euler * q_min).norm();
    let decay_closed = (&w0 * q_min).norm() / (&closed * q_min).norm();
    let smallest = numerics::svd(&euler).map_err(|e| e.to_string())?.s[d - 1];
    let within = (decay_euler / decay_closed - 1.0).abs() < 0.2 && (smallest * 5f64.exp() - 1.0).abs() < 0.2;
    Ok((
        err_euler < 1e-3 && err_closed < 1e-10 && decay_euler >= 4f64.exp() && within,
        format!(
            "euler rel err {err_euler:.2e} (< 1e-3), closed form vs taylor {err_closed:.1e}, decay {decay_euler:.2} (>= e^4 = {:.2}, closed form {decay_closed:.2})",
            4f64.exp()
        ),
    ))
}

fn collapse_single_layer() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = defaults(Command::SimSingle);
    cfg.output_dir = dir.path().to_path_buf();
    experiments::run(&cfg).map_err(|e| e.to_string())?;
    let rows = csv_rows(&dir.path().join("summary.csv"));
    let amp = |r: &Vec<String>| r[1].parse::<f64>().unwrap();
    let largest = rows.iter().max_by(|a, b| amp(a).total_cmp(&amp(b))).unwrap();
    let zero = rows.iter().find(|r| amp(r) == 0.0).ok_or("sweep has no k = 0")?;
    let below: usize = largest[4].parse().unwrap();
    let min_ratio: f64 = zero[5].parse().unwrap();
    Ok((
        below >= 6 && min_ratio >= 0.5,
        format!(
            "k = {}: {below}/16 below 1e-2 sigma_max (>= 6); k = 0: min final/initial {min_ratio:.3} (>= 0.5)",
            amp(largest)
        ),
    ))
}

/// Moderate init and small data scale: the loss still falls by three orders
/// of magnitude, without the explosive growth of the alignment setting.
fn conservation_run(flow: FlowConfig) -> dimcollapse::Result<dynamics::Trajectory> {
    let cfg = defaults(Command::SimTwoLayer);
    let data = DataSpec::new(cfg.data.dim, 0.1)?;
    let init = InitSpec {
        sv_min: 1.0,
        sv_max: 2.0,
        ..cfg.init
    };
    let stack = models::init_stack(cfg.data.dim, 2, &init, Nonlinearity::None)?;
    dynamics::train(&stack, &data, &cfg.aug, &flow)
}

fn conservation() -> Check {
    let base = FlowConfig {
        learning_rate: 1e-3,
        steps: 10_000,
        batch_size: 16,
        resample: true,
        record_every: 100,
        seed: 0,
        normalize: false,
    };
    let full = analysis::conserved_gap(&conservation_run(base).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let half = FlowConfig {
        learning_rate: 5e-4,
        steps: 20_000,
        record_every: 200,
        ..base
    };
    let halved = analysis::conserved_gap(&conservation_run(half).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let drift = full.max_relative_drift();
    let ratio = full.max_drift() / halved.max_drift();
    Ok((
        drift < 1e-3 && (ratio / 2.0 - 1.0).abs() <= 0.3,
        format!("max rel drift {drift:.2e} (< 1e-3), drift ratio lr/(lr/2) over the same horizon {ratio:.3} (2 +- 30%)"),
    ))
}

fn alignment(final_stack: &mut Option<LinearStack>) -> Check {
    let cfg = defaults(Command::SimTwoLayer);
    let stack = models::init_stack(cfg.data.dim, 2, &cfg.init, Nonlinearity::None).map_err(|e| e.to_string())?;
    let traj = dynamics::train(&stack, &cfg.data, &cfg.aug, &cfg.flow).map_err(|e| e.to_string())?;
    let last = traj.last();
    let report = analysis::alignment_matrix(&last.layers[0], &last.layers[1]).map_err(|e| e.to_string())?;
    *final_stack = Some(traj.final_stack.clone());
    Ok((
        report.abs_diag_min > 0.99 && report.offdiag_max < 0.05,
        format!(
            "min |diag| {:.4} (> 0.99), max |offdiag| {:.4} (< 0.05)",
            report.abs_diag_min, report.offdiag_max
        ),
    ))
}

/// `W1 = U1 S1 V1ᵀ`, `W2 = U2 S2 U1ᵀ` so that `V2 = U1` exactly.
fn aligned_pair(s1: &[f64], s2: &[f64], seed: u64) -> (Matrix, Matrix, Matrix) {
    let d = s1.len();
    let mut r = rng::stream(seed, 80);
    let u1 = rng::random_orthogonal(d, &mut r);
    let v1 = rng::random_orthogonal(d, &mut r);
    let u2 = rng::random_orthogonal(d, &mut r);
    (&u1 * diag(s1) * v1.transpose(), &u2 * diag(s2) * u1.transpose(), v1)
}

fn rate_checks() -> Check {
    let eta = 1e-7;
    let data = DataSpec::new(8, 0.5).unwrap();
    let aug = AugmentationSpec::trailing_block(8, 4, 0.2).unwrap();

    // Direct rates on a generic single layer and on both layers of a generic pair.
    let mut eq13: f64 = 0.0;
    for seed in 0..5u64 {
        let batch = synthdata::sample_batch(&data, &aug, 16, seed).unwrap();
        let layers = [random(8, 8, 600 + seed) / 8f64.sqrt(), random(8, 8, 700 + seed) / 8f64.sqrt()];
        for depth in [1, 2] {
            let stack = LinearStack::new(layers[..depth].to_vec(), Nonlinearity::None).unwrap();
            let vel = dynamics::velocity(&stack, &batch, false).map_err(|e| e.to_string())?;
            let mut stepped = stack.clone();
            dynamics::euler_step(&mut stepped, &batch, eta, false).map_err(|e| e.to_string())?;
            for l in 0..depth {
                let analytic = dynamics::singular_value_rates(&stack.layers[l], &vel.w_dot[l]).map_err(|e| e.to_string())?;
                let before = numerics::svd(&stack.layers[l]).unwrap().s;
                let after = numerics::svd(&stepped.layers[l]).unwrap().s;
                let fd: Vec<f64> = after.iter().zip(&before).map(|(a, b)| (a - b) / eta).collect();
                eq13 = eq13.max(rel_vec(&analytic, &fd));
            }
        }
    }

    // Aligned rates on an exactly aligned pair.
    let mut aligned: f64 = 0.0;
    for seed in 0..5u64 {
        let s1 = [1.4, 1.2, 1.0, 0.9, 0.7, 0.6, 0.4, 0.3];
        let s2 = [1.3, 1.1, 1.0, 0.8, 0.6, 0.5, 0.35, 0.2];
        let (w1, w2, v1) = aligned_pair(&s1, &s2, seed);
        let batch = synthdata::sample_batch(&data, &aug, 16, 50 + seed).unwrap();
        let stack = LinearStack::new(vec![w1.clone(), w2.clone()], Nonlinearity::None).unwrap();
        let prod = stack.product();
        let emb = EmbeddingBatch::new(&prod * &batch.x, &prod * &batch.xp).unwrap();
        let weights = infonce::softmax_weights(&emb).unwrap();
        let x = infonce::build_x(&batch, &weights).unwrap().x;
        let rates = dynamics::paired_rates_aligned(&s1, &s2, &v1, &x).map_err(|e| e.to_string())?;
        let mut stepped = stack.clone();
        dynamics::euler_step(&mut stepped, &batch, eta, false).map_err(|e| e.to_string())?;
        for (l, analytic) in [(0, &rates.sigma1), (1, &rates.sigma2)] {
            let before = numerics::svd(&stack.layers[l]).unwrap().s;
            let after = numerics::svd(&stepped.layers[l]).unwrap().s;
            let fd: Vec<f64> = after.iter().zip(&before).map(|(a, b)| (a - b) / eta).collect();
            aligned = aligned.max(rel_vec(analytic, &fd));
        }
    }

    // Paired rates against a composition of per-vector projections.
    let mut paired: f64 = 0.0;
    for seed in 0..5u64 {
        let w1 = random(8, 8, 800 + seed) / 8f64.sqrt();
        let w2 = random(8, 8, 900 + seed) / 8f64.sqrt();
        let g = random(8, 8, 1000 + seed);
        let rates = dynamics::paired_rates_full(&w1, &w2, &g).map_err(|e| e.to_string())?;
        let f1 = numerics::svd(&w1).unwrap();
        let f2 = numerics::svd(&w2).unwrap();
        let w1_dot = -(w2.transpose() * &g);
        let w2_dot = -(&g * w1.transpose());
        let comp1: Vec<f64> = (0..8).map(|k| f1.u.column(k).dot(&(&w1_dot * f1.v.column(k)))).collect();
        let comp2: Vec<f64> = (0..8).map(|k| f2.u.column(k).dot(&(&w2_dot * f2.v.column(k)))).collect();
        paired = paired.max(rel_vec(&rates.sigma1, &comp1)).max(rel_vec(&rates.sigma2, &comp2));
    }

    Ok((
        eq13 < 1e-3 && aligned < 1e-2 && paired < 1e-10,
        format!("generic rates {eq13:.2e} (< 1e-3), aligned rates {aligned:.2e} (< 1e-2), paired vs composition {paired:.2e} (< 1e-10)"),
    ))
}

fn rel_vec(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den
}

fn pairing_invariant(aligned: Option<&LinearStack>) -> Check {
    let stack = aligned.ok_or("no aligned state from the alignment run")?;
    let cfg = defaults(Command::SimTwoLayer);
    // The top modes have exploded by now; Euler drift in the gap grows as
    // lr² at a fixed step count, so the continuation uses a finer step.
    let flow = FlowConfig {
        learning_rate: 1e-5,
        steps: 10_000,
        seed: cfg.flow.seed + 1,
        ..cfg.flow
    };
    let traj = dynamics::train(stack, &cfg.data, &cfg.aug, &flow).map_err(|e| e.to_string())?;
    let gaps = |s: &dynamics::Snapshot| {
        let s1 = numerics::svd(&s.layers[0]).unwrap().s;
        let s2 = numerics::svd(&s.layers[1]).unwrap().s;
        analysis::pairing_gap(&s1, &s2).unwrap()
    };
    let start = gaps(traj.first());
    let mut worst: f64 = 0.0;
    for snap in &traj.snapshots {
        for (a, b) in gaps(snap).iter().zip(&start) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok((worst < 1e-3, format!("max |gap change| {worst:.2e} over 1e4 steps at lr 1e-5 (< 1e-3)")))
}

fn depth_sweep() -> Check {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = defaults(Command::DepthSweep);
    cfg.output_dir = dir.path().to_path_buf();
    experiments::run(&cfg).map_err(|e| e.to_string())?;
    let rows = csv_rows(&dir.path().join("summary.csv"));
    let mut ok = true;
    let mut parts = Vec::new();
    for nl in ["none", "relu"] {
        let counts: Vec<usize> = rows
            .iter()
            .filter(|r| r[1] == nl)
            .map(|r| r[0].parse::<usize>().unwrap())
            .zip(rows.iter().filter(|r| r[1] == nl).map(|r| r[4].parse::<usize>().unwrap()))
            .map(|(_, c)| c)
            .collect();
        ok &= counts.windows(2).all(|w| w[0] <= w[1]);
        if nl == "none" {
            ok &= counts.first() == Some(&0);
        }
        parts.push(format!("{nl} collapsed by depth {counts:?}"));
    }
    Ok((ok, format!("{} (non-decreasing; linear L=1 is 0)", parts.join(", "))))
}

fn directclr_structure() -> Check {
    let mut max_beyond: f64 = 0.0;
    let mut lowrank: f64 = 0.0;
    let mut invariance: f64 = 0.0;
    for seed in 0..20u64 {
        let d = 12;
        let d0 = 1 + seed as usize % d;
        let r = random(d, 10, 1100 + seed);
        let rp = &r + random(d, 10, 1200 + seed) * 0.5;
        let spec = SubvectorSpec { d0 };
        let out = directclr::directclr_loss(&r, &rp, &spec).map_err(|e| e.to_string())?;
        if d0 < d {
            max_beyond = max_beyond
                .max(out.grad_r.rows(d0, d - d0).amax())
                .max(out.grad_rp.rows(d0, d - d0).amax());
        }
        let proj = ProjectorSpec::new(ProjectorVariant::FixedLowrankDiagonal, d0, seed);
        let pr = directclr::apply_projector(&proj, &r).map_err(|e| e.to_string())?;
        let prp = directclr::apply_projector(&proj, &rp).map_err(|e| e.to_string())?;
        lowrank = lowrank.max((out.loss - literal_cosine(&pr, &prp)).abs() / out.loss.abs());

        let q = rng::random_orthogonal(d, &mut rng::stream(seed, 81));
        let (base, _) = directclr::cosine_infonce_raw(&r, &rp).map_err(|e| e.to_string())?;
        let (rotated, _) = directclr::cosine_infonce_raw(&(&q * &r), &(&q * &rp)).map_err(|e| e.to_string())?;
        invariance = invariance.max((base - rotated).abs() / base.abs());
    }
    Ok((
        max_beyond == 0.0 && lowrank < 1e-12 && invariance < 1e-12,
        format!(
            "max |grad_r| beyond d0 {max_beyond:e} (== 0), lowrank-diagonal rel diff {lowrank:.1e} (< 1e-12), rotation rel diff {invariance:.1e} (< 1e-12)"
        ),
    ))
}

fn residual_r(enc: &ResidualEncoder, h: &Matrix) -> Matrix {
    let pre = &enc.block_in * h;
    h + &enc.block_out * pre.map(|v| v.max(0.0))
}

fn gradient_probe() -> Check {
    let cfg = defaults(Command::DirectclrProbe);
    let enc = ResidualEncoder::random(cfg.data.dim, cfg.encoder.rep_dim, cfg.encoder.hidden, cfg.seed).unwrap();
    let batch = synthdata::sample_batch(&cfg.data, &cfg.aug, 16, cfg.seed).unwrap();
    let report = directclr::gradient_rank_probe(&enc, &batch, &cfg.subvector).map_err(|e| e.to_string())?;

    let d0 = cfg.subvector.d0;
    let h = models::residual_forward(&enc, &batch.x).unwrap().h;
    let hp = models::residual_forward(&enc, &batch.xp).unwrap().h;
    let head = |m: &Matrix| m.rows(0, d0).into_owned();
    let rp_head = head(&residual_r(&enc, &hp));
    let r_head = head(&residual_r(&enc, &h));
    let fd = central_diff(&h, 1e-6, |m| literal_cosine(&head(&residual_r(&enc, m)), &rp_head));
    let fdp = central_diff(&hp, 1e-6, |m| literal_cosine(&r_head, &head(&residual_r(&enc, m))));
    let err = rel(&report.grad_h, &fd).max(rel(&report.grad_hp, &fdp));
    Ok((
        report.grad_h_nonzero_fraction == 1.0 && report.grad_r_beyond_d0 == 0.0 && err < 1e-5,
        format!(
            "nonzero grad-h coordinates {:.0}% (entries {:.1}%), max |grad_r| beyond d0 {:e}, grad-h FD rel err {err:.2e} (< 1e-5)",
            100.0 * report.grad_h_nonzero_fraction,
            100.0 * report.grad_h_nonzero_entries,
            report.grad_r_beyond_d0
        ),
    ))
}

fn csv_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.extension().is_some_and(|e| e == "csv") {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Check {
    let tmp = tempfile::tempdir().unwrap();
    let dump = tmp.path().join("dump.csv");
    let rows = random(6, 200, 5);
    let text: String = rows
        .column_iter()
        .map(|c| c.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(",") + "\n")
        .collect();
    fs::write(&dump, text).unwrap();

    let runs: [(&str, &[&str]); 5] = [
        ("sim-single", &["flow.steps=300"]),
        ("sim-two-layer", &["flow.steps=300"]),
        ("depth-sweep", &["flow.steps=300"]),
        ("directclr-probe", &["projector.steps=20"]),
        ("spectrum", &[]),
    ];
    let mut compared = 0;
    for (cmd, overrides) in runs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out_dir = tmp.path().join(format!("{cmd}-{rep}"));
            let mut p = Process::new(env!("CARGO_BIN_EXE_dimcollapse"));
            p.arg(cmd);
            if cmd == "spectrum" {
                p.arg(&dump);
            }
            p.arg("--set").arg(format!("output_dir={}", out_dir.display()));
            for o in overrides {
                p.arg("--set").arg(o);
            }
            let status = p.output().map_err(|e| e.to_string())?;
            if !status.status.success() {
                return Ok((false, format!("{cmd} exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr))));
            }
            outputs.push(csv_bytes(&out_dir));
        }
        if outputs[0].is_empty() || outputs[0] != outputs[1] {
            return Ok((false, format!("{cmd}: CSV outputs differ between runs")));
        }
        compared += outputs[0].len();
    }
    Ok((true, format!("5 commands, {compared} CSV files byte-identical across two runs")))
}

fn main() {
    let mut aligned = None;
    let mut failures = 0;
    let mut report = |id: usize, name: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Check| {
        let start = Instant::now();
        let outcome = f();
        let elapsed = start.elapsed();
        let (mut pass, mut detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if let Some(limit) = limit {
            if elapsed > limit {
                pass = false;
                detail.push_str(&format!("; over the {}s budget", limit.as_secs()));
            }
        }
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] {id:>2} {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64()
        );
    };
    let secs = |s| Some(Duration::from_secs(s));
    report(1, "gradient oracle", secs(10), &mut gradient_oracle);
    report(2, "contrast decomposition", secs(5), &mut decomposition);
    report(3, "weight gradient identities", None, &mut weight_gradient_identities);
    report(4, "frozen-X closed form", secs(60), &mut closed_form_flow);
    report(5, "single-layer collapse sweep", secs(120), &mut collapse_single_layer);
    report(6, "two-layer conservation", None, &mut conservation);
    report(7, "two-layer alignment", secs(120), &mut || alignment(&mut aligned));
    report(8, "singular value rates", None, &mut rate_checks);
    report(9, "pairing invariant", None, &mut || pairing_invariant(aligned.as_ref()));
    report(10, "depth and nonlinearity sweep", None, &mut depth_sweep);
    report(11, "sub-vector loss structure", None, &mut directclr_structure);
    report(12, "residual encoder gradient probe", None, &mut gradient_probe);
    report(13, "CLI determinism", None, &mut determinism);
    println!("{} of 13 criteria passed", 13 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
