use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str], extra: &[&Path]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shelltrack")).args(args).args(extra).output().unwrap()
}

fn ok(o: &Output) {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn synth_track_eval_render() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let scene = d.join("scene");
    ok(&run(&["synth", "lift", "H=0.1", "--frames", "3", "--resolution", "32", "--gaussians", "300", "--grid", "6", "--out"], &[&scene]));
    let track = d.join("track");
    ok(&run(&["track", "--iters", "3", "--ablate", "physics_off", "--out"], &[&track, &scene.join("scene.json")]));
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(track.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["lambda_p_effective"], 0.0);
    let csv = std::fs::read_to_string(track.join("loss.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("iteration,L_total,L_d,L_p,L_temporal"));

    let metrics = d.join("metrics.json");
    let mut args: Vec<std::path::PathBuf> = vec!["--pred".into()];
    args.extend((1..=3).map(|t| track.join(format!("pred_{t:03}.ply"))));
    args.push("--gt".into());
    args.extend((1..=3).map(|t| scene.join(format!("gt_{t:03}.ply"))));
    args.push("--out".into());
    args.push(metrics.clone());
    let o = Command::new(env!("CARGO_BIN_EXE_shelltrack")).arg("eval").args(&args).output().unwrap();
    ok(&o);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(&metrics).unwrap()).unwrap();
    assert_eq!(m["chamfer_x1e4"].as_array().unwrap().len(), 3);
    assert!(m["chamfer_x1e4"][0].as_f64().unwrap() < 1e-12);

    let cam = scene.join("camera.txt");
    let img = d.join("r.png");
    let alpha = d.join("a.pgm");
    ok(&run(&["render", "--frame", "2", "--out"], &[&img, Path::new("--alpha"), &alpha, &track, &cam]));
    assert!(img.exists() && alpha.exists());
    let bad = run(&["render", "--frame", "0"], &[&track, &cam]);
    assert_eq!(bad.status.code(), Some(2));
    let bad = run(&["render", "--frame", "4"], &[&track, &cam]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run(&["track"], &[&missing]).status.code(), Some(2));
    assert_eq!(run(&["track", "--bogus"], &[&missing]).status.code(), Some(2));
    assert_eq!(run(&["synth", "twist"], &[]).status.code(), Some(2));
    assert_ne!(run(&["eval", "--pred"], &[&missing, Path::new("--gt"), &missing]).status.code(), Some(0));
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("mat.txt"), "E = 5000\nnu = 0.25\nh = 1.2e-3\n").unwrap();
    std::fs::write(d.join("force.txt"), "body = 0 0 -1e-9\npin = left\npin = right\n").unwrap();
    let out = d.join("sim");
    ok(&run(&["simulate", "--iters", "20", "--grid", "5", "--out"], &[&out, &d.join("mat.txt"), Path::new("flat"), &d.join("force.txt")]));
    let ply = shelltrack::eval::read_ply(&out.join("equilibrium.ply")).unwrap();
    assert_eq!(ply.positions.len(), 25);
    assert!(std::fs::read_to_string(out.join("energy.csv")).unwrap().starts_with("iteration,energy"));
}
