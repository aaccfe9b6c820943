use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[synth]
n_gaussians = 300
n_views = 4
resolution = 32

[decoder]
resolution = 32
levels = 2
host_jitter_views = 2

[train]
epochs = 2
wm_jitter_views = 1
log_every = 100
"#;

fn splatmark(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatmark"))
        .arg("--config")
        .arg(dir.join("small.toml"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn flip(hex: &str) -> String {
    hex.chars().map(|c| format!("{:x}", 15 - c.to_digit(16).unwrap())).collect()
}

#[test]
fn synth_embed_decode_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();

    let o = splatmark(dir, &["synth"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["scene.ply", "cameras.json", "train_cameras.json", "eval_cameras.json", "view_000.png"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }

    let o = splatmark(dir, &["embed", "--model", &p("scene.ply"), "--cameras", &p("train_cameras.json")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["watermarked.ply", "watermarked.roles.txt", "decoder.json", "plan.json", "manifest.json", "message.txt"] {
        assert!(dir.join(f).exists(), "missing {f}");
    }
    let msg = std::fs::read_to_string(dir.join("message.txt")).unwrap().trim().to_string();

    let scene = ["--model", &p("watermarked.ply"), "--cameras", &p("train_cameras.json"), "--decoder", &p("decoder.json")];
    let o = splatmark(dir, &[&["decode"], &scene[..], &["--message", &msg, "--min-bitacc", "0"]].concat());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("decoded ") && stdout.contains("bit_acc "), "{stdout}");

    // the complement message can only reach 1.0 if every bit decodes wrong
    let o = splatmark(dir, &[&["decode"], &scene[..], &["--message", &flip(&msg), "--min-bitacc", "1"]].concat());
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stdout));

    let o = splatmark(dir, &[&["decode"], &scene[..], &["--min-bitacc", "0.5"]].concat());
    assert_eq!(code(&o), 2);
    let o = splatmark(dir, &[&["decode"], &scene[..], &["--message", &msg, "--min-bitacc", "1.5"]].concat());
    assert_eq!(code(&o), 2);

    let o = splatmark(dir, &["decode", "--model", &p("absent.ply"), "--cameras", &p("train_cameras.json"), "--decoder", &p("decoder.json")]);
    assert_eq!(code(&o), 3);

    let o = splatmark(dir, &["attack", "--model", &p("watermarked.ply"), "--cameras", &p("eval_cameras.json"), "--reference", &p("scene.ply"), "--decoder", &p("decoder.json"), "--message", &msg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.join("attack_report.csv")).unwrap();
    assert!(csv.starts_with("attack,param,bit_acc,psnr,ssim"));
    assert_eq!(csv.lines().count(), 1 + 1 + 6 + 1 + 3, "{csv}");

    let o = splatmark(dir, &["report", &p("attack_report.csv")]);
    assert_eq!(code(&o), 0);
}

#[test]
fn bad_config_is_exit_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("small.toml"), "[train]\nepochs = \"many\"\n").unwrap();
    assert_eq!(code(&splatmark(tmp.path(), &["synth"])), 2);
    std::fs::write(tmp.path().join("small.toml"), "[sbag]\nq = 1.5\n").unwrap();
    assert_eq!(code(&splatmark(tmp.path(), &["synth"])), 2);
    std::fs::write(tmp.path().join("small.toml"), "").unwrap();
    assert_eq!(code(&splatmark(tmp.path(), &["--seed", "minus-one", "synth"])), 2);
}
