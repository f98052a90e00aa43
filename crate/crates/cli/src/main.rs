use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gstream_core::codec::{read_container, read_snapshot, write_container, write_snapshot};
use gstream_core::gaussian::SceneState;
use gstream_core::pipeline::dataset::write_png;
use gstream_core::pipeline::*;
use gstream_core::render::render_view;
use gstream_core::stream::server::{serve, Prepared, ServeConfig};

#[derive(Parser)]
#[command(name = "gstream", version, about = "Encode, decode and serve compact Gaussian streams")]
struct Cli {
    /// Encoder settings (TOML); unspecified keys keep their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory of the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the frame-0 scene and write it as a snapshot file.
    Init {
        /// Dataset directory; written first when --synth is given.
        #[arg(long)]
        dataset: PathBuf,
        /// Initial points in the snapshot layout.
        #[arg(long, conflicts_with = "synth", required_unless_present = "synth")]
        points: Option<PathBuf>,
        /// Generate a synthetic sequence, e.g. `rigid-50-of-500`.
        #[arg(long)]
        synth: Option<String>,
        #[arg(long, default_value_t = 11, requires = "synth")]
        frames: usize,
        /// Cameras on the synthetic ring; view 0 is held out.
        #[arg(long, default_value_t = 8, requires = "synth")]
        views: usize,
        /// Synthetic image width and height in pixels.
        #[arg(long, default_value_t = 64, requires = "synth")]
        size: usize,
        /// Position noise (std. dev.) added to the synthetic frame-0 scene
        /// before fitting.
        #[arg(long, default_value_t = 0.0, requires = "synth")]
        noise: f32,
    },
    /// Encode a dataset into a `.cgs` stream.
    Encode {
        #[arg(long)]
        dataset: PathBuf,
        /// Frame-0 scene from `init`.
        #[arg(long)]
        scene: PathBuf,
        /// Also write the per-frame CSV here.
        #[arg(long)]
        stats: Option<PathBuf>,
    },
    /// Decode a stream into one snapshot file per frame.
    Decode {
        #[arg(long)]
        stream: PathBuf,
    },
    /// Render one frame of a stream, or a snapshot file, to PNG.
    Render {
        #[arg(long, conflicts_with = "scene", required_unless_present = "scene")]
        stream: Option<PathBuf>,
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        frame: usize,
        /// Camera rig source.
        #[arg(long)]
        dataset: PathBuf,
        /// Camera index; defaults to the held-out view.
        #[arg(long)]
        view: Option<usize>,
    },
    /// Per-frame bytes and held-out-view PSNR as CSV.
    Stats {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Serve a stream over TCP.
    Serve {
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        #[arg(long, default_value_t = 30.0)]
        fps: f64,
        /// Outgoing messages buffered per client before it is dropped.
        #[arg(long, default_value_t = 64)]
        queue: usize,
    },
}

fn load_config(cli: &Cli) -> Result<EncodeConfig> {
    let mut cfg = match &cli.config {
        Some(p) => EncodeConfig::from_toml(&std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)?,
        None => EncodeConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn out_path(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn read_scene(path: &Path) -> Result<SceneState<f32>> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_snapshot(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn read_stream(path: &Path) -> Result<gstream_core::codec::Container> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    read_container(&bytes).with_context(|| format!("parsing {}", path.display()))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Init { dataset, points, synth, frames, views, size, noise } => {
            let (data, init) = match (points, synth) {
                (Some(p), _) => (MultiViewDataset::load(dataset)?, read_scene(p)?),
                (None, Some(name)) => {
                    let spec = SynthSpec { views: *views, size: *size, ..SynthSpec::named(name, *frames, cfg.seed)? };
                    let s = synth_scene(&spec)?;
                    s.dataset.save(dataset)?;
                    log::info!("wrote {} frames x {} views to {}", s.dataset.frame_count(), s.dataset.view_count(), dataset.display());
                    let init = if *noise > 0.0 { perturb_positions(&s.scenes[0], *noise, cfg.seed) } else { s.scenes[0].clone() };
                    // refit against what was written, i.e. the 8-bit images
                    (MultiViewDataset::load(dataset)?, init)
                }
                (None, None) => unreachable!("clap requires one of --points, --synth"),
            };
            let fit = fit_first_frame(&data, &init, &cfg)?;
            let psnr = test_view_psnr(&fit.scene, &data, 0, &cfg.render())?;
            log::info!("first frame: loss {:.6} -> {:.6}, held-out PSNR {psnr:.2} dB", fit.initial_loss, fit.final_loss);
            let out = out_path(&cli, "scene0.gsnap");
            write(&out, &write_snapshot(&fit.scene))?;
            println!("{}", out.display());
        }
        Command::Encode { dataset, scene, stats } => {
            let data = MultiViewDataset::load(dataset)?;
            let first = read_scene(scene)?;
            let e = encode_sequence(&data, &first, &cfg)?;
            let out = out_path(&cli, "stream.cgs");
            write(&out, &write_container(&e.container))?;
            if let Some(p) = stats {
                write(p, stats_csv(&e.stats).as_bytes())?;
            }
            let post: usize = e.stats.iter().skip(1).map(|s| s.bytes).sum();
            log::info!("{} frames, {} bytes after INIT, mean PSNR {:.2} dB", e.stats.len(), post, mean_psnr(&e.stats, 99.0));
            println!("{}", out.display());
        }
        Command::Decode { stream } => {
            let scenes = decode_sequence(&read_stream(stream)?)?;
            let dir = out_path(&cli, "decoded");
            std::fs::create_dir_all(&dir)?;
            for (t, s) in scenes.iter().enumerate() {
                write(&dir.join(format!("{t:04}.gsnap")), &write_snapshot(s))?;
            }
            println!("{} frames in {}", scenes.len(), dir.display());
        }
        Command::Render { stream, scene, frame, dataset, view } => {
            let scene = match (stream, scene) {
                (Some(p), _) => {
                    let mut all = decode_sequence(&read_stream(p)?)?;
                    if *frame >= all.len() {
                        bail!("frame {frame} of a {}-frame stream", all.len());
                    }
                    all.swap_remove(*frame)
                }
                (None, Some(p)) => read_scene(p)?,
                (None, None) => unreachable!("clap requires one of --stream, --scene"),
            };
            let rig = Rig::load(dataset)?;
            let v = view.unwrap_or(rig.test_view);
            let cam = rig.cameras.get(v).with_context(|| format!("view {v} of {} cameras", rig.cameras.len()))?.camera()?;
            let img = render_view(&scene, &cam, &cfg.render())?.image;
            let out = out_path(&cli, "render.png");
            write_png(&img, &out)?;
            println!("{}", out.display());
        }
        Command::Stats { stream, dataset } => {
            let csv = stats_csv(&stream_stats(&read_stream(stream)?, &MultiViewDataset::load(dataset)?, &cfg.render())?);
            match &cli.out {
                Some(p) => write(p, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
        Command::Serve { stream, addr, fps, queue } => {
            if !(fps.is_finite() && *fps > 0.0) || *queue == 0 {
                bail!("--fps and --queue must be positive");
            }
            let prepared = Arc::new(Prepared::new(&read_stream(stream)?)?);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
                log::info!("serving {} frames on {} at {fps} fps", prepared.frame_count(), listener.local_addr()?);
                let scfg = ServeConfig { fps: *fps, queue: *queue, ..ServeConfig::default() };
                serve(listener, prepared, scfg).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

