use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use splatmark::attacks::{attacks_from_config, run_attack_matrix, AttackReport};
use splatmark::camera::{load_cameras, save_cameras};
use splatmark::codec::{aggregate_logits, bit_accuracy, Decoder, Message};
use splatmark::config::Config;
use splatmark::experts::{run_experts, write_evidence_csv};
use splatmark::pipeline::{embed, message_for, render_views, score_images, select};
use splatmark::ply::{load_model, save_ply};
use splatmark::prune::prune_by_contribution;
use splatmark::synth::make_synthetic_scene;
use splatmark::{Error, Result};

#[derive(Parser)]
#[command(name = "splatmark", version, about = "Embed, attack and verify bit-string watermarks in Gaussian splatting models")]
struct Cli {
    /// TOML configuration; every key is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `train.seed`, which also seeds synthesis and attacks.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Scene {
    /// Model PLY; a `<stem>.roles.txt` sidecar is read when present.
    #[arg(long)]
    model: PathBuf,
    /// Cameras JSON (transforms-style).
    #[arg(long)]
    cameras: PathBuf,
}

#[derive(Args)]
struct Verify {
    #[arg(long)]
    decoder: PathBuf,
    /// Expected message as hex.
    #[arg(long)]
    message: Option<String>,
    /// Exit with code 4 when bit accuracy is below this value.
    #[arg(long)]
    min_bitacc: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic scene: model, cameras and reference renders.
    Synth,
    /// Drop Gaussians whose rendering contribution is below `prune.tau`.
    Prune(Scene),
    /// Write per-Gaussian expert features and evidence as CSV.
    Features {
        #[arg(long)]
        model: PathBuf,
    },
    /// Select carriers, split, and write the split model, plan and masks.
    Select(Scene),
    /// Select carriers and finetune the watermark in.
    Embed {
        #[command(flatten)]
        scene: Scene,
        /// Message as hex; defaults to `message` in the config or a seeded random one.
        #[arg(long)]
        message: Option<String>,
    },
    /// Render every camera to PNG.
    Render(Scene),
    /// Run the attack matrix and write a CSV report.
    Attack {
        #[command(flatten)]
        scene: Scene,
        /// Pre-watermark model for quality metrics; the clean watermarked render is used otherwise.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[command(flatten)]
        verify: Verify,
    },
    /// Decode the message from the rendered views.
    Decode {
        #[command(flatten)]
        scene: Scene,
        #[command(flatten)]
        verify: Verify,
    },
    /// Bit accuracy, PSNR and SSIM against a pre-watermark model.
    Eval {
        #[command(flatten)]
        scene: Scene,
        #[arg(long)]
        reference: PathBuf,
        #[command(flatten)]
        verify: Verify,
    },
    /// Print the summary of attack report CSVs.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn out(dir: &Path, name: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    Ok(dir.join(name))
}

fn expected(verify: &Verify, decoder: &Decoder) -> Result<Option<Message>> {
    let m = verify.message.as_deref().map(Message::from_hex).transpose()?;
    if let Some(m) = &m {
        if m.len() != decoder.bits {
            return Err(Error::Config(format!("message has {} bits but the decoder reads {}", m.len(), decoder.bits)));
        }
    }
    if verify.min_bitacc.is_some_and(|v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Config("--min-bitacc must be in [0, 1]".into()));
    }
    if verify.min_bitacc.is_some() && m.is_none() {
        return Err(Error::Config("--min-bitacc needs --message".into()));
    }
    Ok(m)
}

fn gate(verify: &Verify, bit_acc: f64) -> Result<()> {
    match verify.min_bitacc {
        Some(min) if bit_acc < min => Err(Error::Verification { bit_acc, min }),
        _ => Ok(()),
    }
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let dir = &cli.out_dir;
    match &cli.cmd {
        Cmd::Synth => {
            let scene = make_synthetic_scene(cfg.train.seed, &cfg.synth)?;
            save_ply(&scene.model, out(dir, "scene.ply")?)?;
            save_cameras(&scene.cameras, out(dir, "cameras.json")?)?;
            save_cameras(&scene.train_cameras(), out(dir, "train_cameras.json")?)?;
            save_cameras(&scene.eval_cameras(), out(dir, "eval_cameras.json")?)?;
            for (i, img) in scene.references.iter().enumerate() {
                img.save_png(out(dir, &format!("view_{i:03}.png"))?)?;
            }
            println!("scene {} ({} gaussians, {} views) hash {}", dir.display(), scene.model.len(), scene.cameras.len(), scene.hash());
        }
        Cmd::Prune(s) => {
            let model = load_model(&s.model)?;
            let pruned = prune_by_contribution(&model, &load_cameras(&s.cameras)?, cfg.prune.tau)?;
            save_ply(&pruned, out(dir, "pruned.ply")?)?;
            println!("pruned {} -> {}", model.len(), pruned.len());
        }
        Cmd::Features { model } => {
            let model = load_model(model)?;
            let (_, f, e) = run_experts(&model, &cfg.experts)?;
            write_evidence_csv(&f, &e, std::fs::File::create(out(dir, "evidence.csv")?)?)?;
            println!("features for {} gaussians", model.len());
        }
        Cmd::Select(s) => {
            let model = load_model(&s.model)?;
            let sel = select(&model, &load_cameras(&s.cameras)?, cfg.decoder.bits, &cfg.experts, &cfg.sbag, &cfg.mask)?;
            save_ply(&sel.model, out(dir, "split.ply")?)?;
            sel.plan.save(out(dir, "plan.json")?)?;
            std::fs::write(out(dir, "mask.json")?, serde_json::to_string_pretty(&sel.mask)?)?;
            println!("budget {} carriers {} model {} -> {}", sel.plan.budget_b, sel.plan.wm_children.len(), model.len(), sel.model.len());
        }
        Cmd::Embed { scene, message } => {
            let model = load_model(&scene.model)?;
            let cameras = load_cameras(&scene.cameras)?;
            let msg = match message {
                Some(hex) => Message::from_hex(hex)?,
                None => message_for(&cfg, cfg.train.seed)?,
            };
            let e = embed(&model, &cameras, &cfg, &msg, &cfg.train)?;
            save_ply(&e.model, out(dir, "watermarked.ply")?)?;
            e.decoder.save(out(dir, "decoder.json")?)?;
            e.plan.save(out(dir, "plan.json")?)?;
            e.manifest.save(out(dir, "manifest.json")?)?;
            std::fs::write(out(dir, "message.txt")?, format!("{}\n", msg.to_hex()))?;
            if let Some(reason) = &e.manifest.aborted {
                log::warn!("training stopped early: {reason}");
            }
            println!("embedded {} into {} carriers; wrote {}", msg.to_hex(), e.plan.wm_children.len(), dir.display());
        }
        Cmd::Render(s) => {
            let model = load_model(&s.model)?;
            for (i, img) in render_views(&model, &load_cameras(&s.cameras)?).iter().enumerate() {
                img.save_png(out(dir, &format!("render_{i:03}.png"))?)?;
            }
        }
        Cmd::Attack { scene, reference, verify } => {
            let model = load_model(&scene.model)?;
            let cameras = load_cameras(&scene.cameras)?;
            let decoder = Decoder::load(&verify.decoder)?;
            let msg = expected(verify, &decoder)?.ok_or_else(|| Error::Config("attack needs --message".into()))?;
            let refs = match reference {
                Some(p) => render_views(&load_model(p)?, &cameras),
                None => render_views(&model, &cameras),
            };
            let report = run_attack_matrix(&model, &cameras, &refs, &decoder, &msg, &attacks_from_config(&cfg.attack), cfg.train.seed)?;
            report.save_csv(out(dir, "attack_report.csv")?)?;
            print!("{}", report.summary());
            gate(verify, report.rows[0].bit_acc)?;
        }
        Cmd::Decode { scene, verify } => {
            let model = load_model(&scene.model)?;
            let decoder = Decoder::load(&verify.decoder)?;
            let want = expected(verify, &decoder)?;
            let views = render_views(&model, &load_cameras(&scene.cameras)?);
            let logits: Vec<Vec<f64>> = views.iter().map(|v| decoder.decode(v)).collect::<Result<_>>()?;
            let z = aggregate_logits(&logits)?;
            println!("decoded {}", Message::from_logits(&z)?.to_hex());
            if let Some(m) = want {
                let acc = bit_accuracy(&z, &m);
                println!("bit_acc {acc:.4}");
                gate(verify, acc)?;
            }
        }
        Cmd::Eval { scene, reference, verify } => {
            let model = load_model(&scene.model)?;
            let cameras = load_cameras(&scene.cameras)?;
            let decoder = Decoder::load(&verify.decoder)?;
            let msg = expected(verify, &decoder)?.ok_or_else(|| Error::Config("eval needs --message".into()))?;
            let refs = render_views(&load_model(reference)?, &cameras);
            let s = score_images(&render_views(&model, &cameras), &refs, &decoder, &msg)?;
            std::fs::write(out(dir, "eval.json")?, serde_json::to_string_pretty(&s)?)?;
            println!("bit_acc {:.4} psnr {:.2} ssim {:.4}", s.bit_acc, s.psnr, s.ssim);
            gate(verify, s.bit_acc)?;
        }
        Cmd::Report { reports } => {
            for p in reports {
                println!("== {}", p.display());
                print!("{}", AttackReport::load_csv(p)?.summary());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
