//! Reproducible experiment commands that write CSV traces plus a manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::analysis::{self, CollapseReport};
use crate::config::{Command, ExperimentConfig};
use crate::csvfmt::{self, real};
use crate::directclr::{self, ProjectorSpec, ProjectorTraining};
use crate::dynamics::{self, Trajectory};
use crate::error::{Error, Result};
use crate::models::{self, InitSpec, Nonlinearity, ResidualEncoder};
use crate::numerics::{self, SpectrumReport};
use crate::synthdata::{self, AugmentationSpec};

pub const MANIFEST_FILE: &str = "manifest.txt";
/// Held-out samples used to measure embedding spectra.
pub const PROBE_SAMPLES: usize = 2048;
/// Seed offset of the held-out batch, kept away from trajectory seeds.
const HELD_OUT_SEED_OFFSET: u64 = 1 << 32;

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub command: Command,
    pub config: String,
    pub version: &'static str,
    pub wall_clock_secs: f64,
    pub output_dir: PathBuf,
    pub files: Vec<ManifestEntry>,
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut out = format!(
            "command = {}\nversion = {}\nwall_clock_secs = {:.3}\n\n[config]\n{}\n[files]\n",
            self.command,
            self.version,
            self.wall_clock_secs,
            self.config
        );
        for f in &self.files {
            out.push_str(&format!("{}  {}  {}\n", f.sha256, f.bytes, f.path.display()));
        }
        out
    }

    pub fn file(&self, name: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|f| f.path == Path::new(name))
    }
}

/// Collects emitted files so the manifest lists every one of them.
struct Outputs {
    root: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, rel: impl AsRef<Path>) -> Result<PathBuf> {
        let rel = rel.as_ref().to_path_buf();
        let full = self.root.join(&rel);
        if let Some(parent) = full.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.files.push(rel);
        Ok(full)
    }

    fn table<I: IntoIterator<Item = String>>(&mut self, rel: impl AsRef<Path>, header: &str, rows: I) -> Result<()> {
        let path = self.path(rel)?;
        csvfmt::write_table(&path, header, rows)
    }
}

/// Runs the configured command and writes `manifest.txt` last.
pub fn run(cfg: &ExperimentConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    let mut out = Outputs::new(&cfg.output_dir)?;
    match cfg.command {
        Command::SimSingle => sim_single(cfg, &mut out)?,
        Command::SimTwoLayer => sim_two_layer(cfg, &mut out)?,
        Command::DepthSweep => depth_sweep(cfg, &mut out)?,
        Command::DirectclrProbe => directclr_probe(cfg, &mut out)?,
        Command::Spectrum => spectrum(cfg, &mut out)?,
    }
    let mut files = Vec::with_capacity(out.files.len());
    for rel in &out.files {
        let full = out.root.join(rel);
        let bytes = fs::read(&full).map_err(|e| Error::io(&full, e))?;
        files.push(ManifestEntry {
            path: rel.clone(),
            bytes: bytes.len() as u64,
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let manifest = RunManifest {
        command: cfg.command,
        config: cfg.serialize(),
        version: env!("CARGO_PKG_VERSION"),
        wall_clock_secs: started.elapsed().as_secs_f64(),
        output_dir: cfg.output_dir.clone(),
        files,
    };
    let path = out.root.join(MANIFEST_FILE);
    fs::write(&path, manifest.render()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// One member of a sweep.
#[derive(Debug, Clone)]
struct Member {
    index: usize,
    seed: u64,
    depth: usize,
    nonlinearity: Nonlinearity,
    aug: AugmentationSpec,
}

struct MemberResult {
    member: Member,
    trajectory: Trajectory,
    embedding: SpectrumReport,
}

fn run_member(cfg: &ExperimentConfig, m: &Member) -> Result<MemberResult> {
    let init = InitSpec { seed: m.seed, ..cfg.init };
    let stack = models::init_stack(cfg.data.dim, m.depth, &init, m.nonlinearity)?;
    let flow = dynamics::FlowConfig { seed: m.seed, ..cfg.flow };
    let trajectory = dynamics::train(&stack, &cfg.data, &m.aug, &flow)?;
    let held_out = synthdata::sample_batch(&cfg.data, &m.aug, PROBE_SAMPLES, m.seed + HELD_OUT_SEED_OFFSET)?;
    let embedding = analysis::embedding_spectrum(&trajectory.final_stack, &held_out.x)?;
    Ok(MemberResult {
        member: m.clone(),
        trajectory,
        embedding,
    })
}

/// Trajectories run on scoped threads; results come back in member order.
fn run_members(cfg: &ExperimentConfig, members: &[Member]) -> Result<Vec<MemberResult>> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(members.len()).max(1);
    let mut results: Vec<Option<Result<MemberResult>>> = (0..members.len()).map(|_| None).collect();
    thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || {
                    members
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i % workers == w)
                        .map(|(i, m)| (i, run_member(cfg, m)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("trajectory worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    results.into_iter().map(|r| r.expect("every member ran")).collect()
}

fn write_member(out: &mut Outputs, dir: &str, r: &MemberResult) -> Result<()> {
    analysis::write_spectrum_trace(
        &out.path(format!("{dir}/spectrum_trace.csv"))?,
        &analysis::spectrum_trace(&r.trajectory)?,
    )?;
    write_losses(out, &format!("{dir}/loss_trace.csv"), &r.trajectory.losses)?;
    write_spectrum(out, &format!("{dir}/embedding_spectrum.csv"), &r.embedding)
}

fn write_losses(out: &mut Outputs, rel: &str, losses: &[f64]) -> Result<()> {
    out.table(
        rel,
        "step,loss",
        losses.iter().enumerate().map(|(s, l)| format!("{s},{}", real(*l))),
    )
}

fn write_spectrum(out: &mut Outputs, rel: &str, spec: &SpectrumReport) -> Result<()> {
    out.table(
        rel,
        "index,sigma,log10_sigma",
        spec.singular_values
            .iter()
            .zip(&spec.log10_values)
            .enumerate()
            .map(|(i, (s, l))| format!("{i},{},{}", real(*s), real(*l))),
    )
}

/// Weight singular values of layer `layer` at the first and last snapshot.
fn endpoints(traj: &Trajectory, layer: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    Ok((
        numerics::svd(&traj.first().layers[layer])?.s,
        numerics::svd(&traj.last().layers[layer])?.s,
    ))
}

fn sim_single(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let members: Vec<Member> = cfg
        .amplitudes
        .iter()
        .enumerate()
        .map(|(index, &k)| Member {
            index,
            seed: cfg.seed + index as u64,
            depth: cfg.depth,
            nonlinearity: cfg.nonlinearity,
            aug: AugmentationSpec { amplitude: k, ..cfg.aug },
        })
        .collect();
    let results = run_members(cfg, &members)?;
    let mut summary = Vec::new();
    for r in &results {
        let m = &r.member;
        write_member(out, &format!("k{:02}", m.index), r)?;
        let (first, last) = endpoints(&r.trajectory, 0)?;
        let weights = analysis::effective_rank(&SpectrumReport::from_values(last.clone()), cfg.epsilon)?;
        let min_ratio = first
            .iter()
            .zip(&last)
            .map(|(a, b)| b / a)
            .fold(f64::INFINITY, f64::min);
        let sigma_max = last[0];
        let below_1e2 = last.iter().filter(|s| **s < 1e-2 * sigma_max).count();
        let emb = analysis::effective_rank(&r.embedding, cfg.epsilon)?;
        summary.push(format!(
            "{},{},{},{},{},{},{}",
            m.index,
            real(m.aug.amplitude),
            m.seed,
            weights.effective_rank,
            below_1e2,
            real(min_ratio),
            emb.effective_rank
        ));
    }
    out.table(
        "summary.csv",
        "trajectory,amplitude,seed,weight_rank,weights_below_1e-2_max,min_final_over_initial,embedding_rank",
        summary,
    )
}

fn sim_two_layer(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let member = Member {
        index: 0,
        seed: cfg.seed,
        depth: cfg.depth,
        nonlinearity: cfg.nonlinearity,
        aug: cfg.aug,
    };
    let r = run_member(cfg, &member)?;
    write_member(out, ".", &r)?;
    let traj = &r.trajectory;
    if cfg.depth >= 2 {
        let trace = analysis::alignment_trace(traj)?;
        analysis::write_alignment_trace(&out.path("alignment_trace.csv")?, &trace)?;
        let (_, last) = trace.last().expect("trajectory has snapshots");
        out.table(
            "alignment_summary.csv",
            "abs_diag_min,offdiag_max,block_offdiag_max,blocks",
            [format!(
                "{},{},{},{}",
                real(last.abs_diag_min),
                real(last.offdiag_max),
                real(last.block_offdiag_max),
                last.blocks.len()
            )],
        )?;
    }
    if cfg.depth == 2 && cfg.nonlinearity == Nonlinearity::None {
        analysis::write_conservation_trace(&out.path("conservation_trace.csv")?, &analysis::conserved_gap(traj)?)?;
        let mut rows = Vec::new();
        for snap in &traj.snapshots {
            let s1 = numerics::svd(&snap.layers[0])?.s;
            let s2 = numerics::svd(&snap.layers[1])?.s;
            for (k, gap) in analysis::pairing_gap(&s1, &s2)?.into_iter().enumerate() {
                rows.push(format!("{},{k},{}", snap.step, real(gap)));
            }
        }
        out.table("pairing_trace.csv", "step,index,gap", rows)?;
    }
    Ok(())
}

fn depth_sweep(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let mut members = Vec::new();
    for &nonlinearity in &cfg.nonlinearities {
        for &depth in &cfg.depths {
            let index = members.len();
            members.push(Member {
                index,
                seed: cfg.seed + index as u64,
                depth,
                nonlinearity,
                aug: cfg.aug,
            });
        }
    }
    let results = run_members(cfg, &members)?;
    let mut summary = Vec::new();
    for r in &results {
        let m = &r.member;
        write_member(out, &format!("{}_L{}", m.nonlinearity, m.depth), r)?;
        let report: CollapseReport = analysis::effective_rank(&r.embedding, cfg.epsilon)?;
        summary.push(format!(
            "{},{},{},{},{}",
            m.depth,
            m.nonlinearity,
            m.seed,
            report.effective_rank,
            report.collapsed()
        ));
    }
    out.table("summary.csv", "depth,nonlinearity,seed,embedding_rank,collapsed", summary)
}

fn directclr_probe(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let rep_dim = cfg.encoder.rep_dim;
    let encoder = ResidualEncoder::random(cfg.data.dim, rep_dim, cfg.encoder.hidden, cfg.seed)?;
    let batch = synthdata::sample_batch(&cfg.data, &cfg.aug, cfg.probe.batch_size, cfg.seed)?;
    let probe = directclr::gradient_rank_probe(&encoder, &batch, &cfg.subvector)?;
    let norms = |m: &numerics::Matrix, j: usize| m.row(j).norm();
    out.table(
        "gradient_mask.csv",
        "coordinate,grad_r_norm,grad_h_norm",
        (0..rep_dim).map(|j| {
            let gr = (norms(&probe.grad_r, j).powi(2) + norms(&probe.grad_rp, j).powi(2)).sqrt();
            let gh = (norms(&probe.grad_h, j).powi(2) + norms(&probe.grad_hp, j).powi(2)).sqrt();
            format!("{j},{},{}", real(gr), real(gh))
        }),
    )?;
    out.table(
        "probe_summary.csv",
        "d0,rep_dim,loss,grad_r_beyond_d0,grad_h_nonzero_fraction,grad_h_nonzero_entries",
        [format!(
            "{},{rep_dim},{},{},{},{}",
            cfg.subvector.d0,
            real(probe.loss),
            real(probe.grad_r_beyond_d0),
            real(probe.grad_h_nonzero_fraction),
            real(probe.grad_h_nonzero_entries)
        )],
    )?;

    let training = ProjectorTraining {
        rep_dim,
        learning_rate: cfg.probe.learning_rate,
        steps: cfg.probe.steps,
        batch_size: cfg.probe.batch_size,
        seed: cfg.seed,
    };
    let held_out = synthdata::sample_batch(&cfg.data, &cfg.aug, PROBE_SAMPLES, cfg.seed + HELD_OUT_SEED_OFFSET)?;
    let mut losses = Vec::new();
    let mut spectra = Vec::new();
    for &variant in &cfg.probe.variants {
        let spec = ProjectorSpec::new(variant, cfg.subvector.d0, cfg.seed);
        let run = directclr::train_with_projector(&spec, &cfg.data, &cfg.aug, &training)?;
        losses.extend(
            run.losses
                .iter()
                .enumerate()
                .map(|(s, l)| format!("{s},{variant},{}", real(*l))),
        );
        let (_, rep) = numerics::covariance_spectrum(&(&run.backbone * &held_out.x))?;
        spectra.extend(
            rep.singular_values
                .iter()
                .enumerate()
                .map(|(i, s)| format!("{variant},{i},{}", real(*s))),
        );
    }
    out.table("loss_trace.csv", "step,variant,loss", losses)?;
    out.table("representation_spectrum.csv", "variant,index,sigma", spectra)
}

/// Reads a headerless CSV with one vector per row.
pub fn read_embedding_dump(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            line.split(',')
                .map(|t| {
                    t.trim().parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("{} line {}: cannot parse `{}`", path.display(), i + 1, t.trim()))
                    })
                })
                .collect()
        })
        .collect()
}

fn spectrum(cfg: &ExperimentConfig, out: &mut Outputs) -> Result<()> {
    let input = cfg.spectrum_input.as_ref().expect("validated: spectrum.input is set");
    let rows = read_embedding_dump(input)?;
    let (_, spec) = numerics::covariance_spectrum_rows(&rows)?;
    let report = analysis::effective_rank(&spec, cfg.epsilon)?;
    write_spectrum(out, "spectrum.csv", &spec)?;
    out.table(
        "spectrum_summary.csv",
        "vectors,dim,epsilon,effective_rank",
        [format!("{},{},{},{}", rows.len(), spec.source_dim, real(cfg.epsilon), report.effective_rank)],
    )
}
