use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use shelltrack::error::{Error, Result};
use shelltrack::eval::{align_sequence, normal_consistency, psnr, read_ply, write_ply, PlyData, PlyFormat};
use shelltrack::fields::io::{load_deformation, load_reference, save_deformation, save_reference};
use shelltrack::fields::{fit_nrf, NrfFitOptions, ReferenceField, SirenConfig, TemplateSource};
use shelltrack::geometry::{AnalyticChart, Rect, Surface};
use shelltrack::scene_io::{
    export_mesh, load_scene, load_template, read_image, synth_scene, write_gray, write_image, SynthFamily, SynthOptions,
};
use shelltrack::shell::{quasistatic_simulate, ForceField, MaterialModel, SimulationConfig};
use shelltrack::splat::{bind_gaussians, render_with_cache, Camera, RenderOptions, SurfaceBinding};
use shelltrack::track::{run_pipeline, Ablation};

#[derive(Parser)]
#[command(name = "shelltrack", version, about = "Monocular thin-shell surface tracking")]
struct Cli {
    /// Caps worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fits the reference field to a scene's template.
    FitNrf {
        scene: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value = "nrf_out")]
        out: PathBuf,
    },
    /// Runs the full tracking pipeline on a scene.
    Track {
        scene: PathBuf,
        /// Comma-separated ablation flags, e.g. `physics_off,mask_off`.
        #[arg(long)]
        ablate: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value = "track_out")]
        out: PathBuf,
    },
    /// Forward quasistatic simulation of a loaded sheet.
    Simulate {
        /// `key = value` material file.
        material: PathBuf,
        /// `flat`, `cylinder:r`, `expr:x;y;z` or an OBJ template.
        chart: String,
        /// `key = value` force file.
        force: PathBuf,
        #[arg(long)]
        iters: Option<usize>,
        /// Chart rectangle `u0,v0,u1,v1` for analytic charts.
        #[arg(long, default_value = "0,0,1,1")]
        bounds: String,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "sim_out")]
        out: PathBuf,
    },
    /// Renders a tracked frame from a `track` output directory.
    Render {
        weights: PathBuf,
        camera: PathBuf,
        #[arg(long)]
        frame: usize,
        #[arg(long, default_value = "render.png")]
        out: PathBuf,
        #[arg(long, default_value = "alpha.pgm")]
        alpha: PathBuf,
    },
    /// Writes a synthetic scene directory.
    Synth {
        /// `sine-wrinkle`, `fold` or `lift`.
        family: String,
        /// e.g. `A=0.15,k=1`, `angle=1.2,width=0.2`, `H=0.1`.
        #[arg(default_value = "")]
        params: String,
        #[arg(long, default_value_t = 8)]
        frames: usize,
        #[arg(long, default_value_t = 128)]
        resolution: usize,
        #[arg(long, default_value_t = 6000)]
        gaussians: usize,
        #[arg(long, default_value_t = 32)]
        grid: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "synth_out")]
        out: PathBuf,
    },
    /// Compares predicted and ground-truth clouds frame by frame.
    Eval {
        #[arg(long, num_args = 1.., required = true)]
        pred: Vec<PathBuf>,
        #[arg(long, num_args = 1.., required = true)]
        gt: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        pred_images: Vec<PathBuf>,
        #[arg(long, num_args = 1..)]
        gt_images: Vec<PathBuf>,
        #[arg(long, default_value_t = 30)]
        icp_iters: usize,
        #[arg(long, default_value = "metrics.json")]
        out: PathBuf,
    },
}

fn usage(e: &Error) -> bool {
    matches!(e, Error::Io { .. } | Error::Parse { .. } | Error::Domain(_) | Error::Invalid(_) | Error::Image(_))
}

fn write_text(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn parse_bounds(s: &str) -> Result<Rect> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::parse("--bounds", format!("bad number `{x}`"))))
        .collect::<Result<_>>()?;
    if v.len() != 4 || !(v[2] > v[0] && v[3] > v[1]) {
        return Err(Error::Invalid(format!("bounds `{s}` must be u0,v0,u1,v1 with u1 > u0 and v1 > v0")));
    }
    Ok(Rect { lo: [v[0], v[1]], hi: [v[2], v[3]] })
}

fn create(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn cmd_fit_nrf(scene: &Path, iters: Option<usize>, out: &Path) -> Result<()> {
    let loaded = load_scene(scene)?;
    let cfg = &loaded.tracker;
    let opts = NrfFitOptions { seed: cfg.seed, iterations: iters.unwrap_or(cfg.nrf.iterations), ..cfg.nrf.clone() };
    let net = SirenConfig { seed: cfg.seed, ..cfg.reference.clone() };
    let (field, report) = fit_nrf(&loaded.scene.template, &net, &opts)?;
    create(out)?;
    save_reference(&out.join("reference.bin"), &field)?;
    write_text(&out.join("nrf_report.json"), &serde_json::to_string_pretty(&report)?)?;
    info!("held-out error {:.3e} (threshold {:.3e})", report.holdout_error, report.threshold);
    Ok(())
}

fn cmd_track(scene: &Path, ablate: Option<&str>, seed: Option<u64>, iters: Option<usize>, out: &Path) -> Result<()> {
    let loaded = load_scene(scene)?;
    let mut cfg = loaded.tracker.clone();
    if let Some(a) = ablate {
        cfg.ablation = Ablation::parse_list(a)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(n) = iters {
        cfg.iterations = n;
    }
    let (reference, field, binding, report) = run_pipeline(&loaded.scene, &cfg)?;
    create(out)?;
    report.write(out, Some(&loaded.text))?;
    save_reference(&out.join("reference.bin"), &reference)?;
    save_deformation(&out.join("deformation.bin"), &field)?;
    write_text(&out.join("gaussians.json"), &serde_json::to_string(&binding)?)?;
    for t in 1..=loaded.scene.frames.len() {
        let mesh = export_mesh(&reference, &field, t, loaded.config.grid)?;
        write_ply(&out.join(format!("pred_{t:03}.ply")), &mesh, PlyFormat::BinaryLittleEndian)?;
    }
    Ok(())
}

fn cmd_simulate(
    material: &Path,
    chart: &str,
    force: &Path,
    iters: Option<usize>,
    bounds: &str,
    grid: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let material = MaterialModel::load(material)?;
    let force = ForceField::load(force)?;
    let template = if chart.ends_with(".obj") {
        TemplateSource::Mesh(load_template(Path::new(chart))?)
    } else {
        TemplateSource::Analytic(AnalyticChart::from_spec(chart, parse_bounds(bounds)?)?)
    };
    let (reference, _) =
        fit_nrf(&template, &SirenConfig::nrf(seed), &NrfFitOptions { seed, ..NrfFitOptions::default() })?;
    let defaults = SimulationConfig::default();
    let cfg = SimulationConfig { seed, iterations: iters.unwrap_or(defaults.iterations), ..defaults };
    let (pinned, report) = quasistatic_simulate(&reference, &material, &force, &SirenConfig::ndf(seed), &cfg)?;
    let xis = shelltrack::scene_io::grid_points(&reference.domain().bounds(), grid.max(2));
    let positions = pinned.positions(&reference, &xis)?;
    let n = grid.max(2);
    let mut faces = Vec::new();
    for j in 0..n - 1 {
        for i in 0..n - 1 {
            let a = (j * n + i) as u32;
            faces.push([a, a + 1, a + 1 + n as u32]);
            faces.push([a, a + 1 + n as u32, a + n as u32]);
        }
    }
    create(out)?;
    write_ply(&out.join("equilibrium.ply"), &PlyData { positions, faces, ..PlyData::default() }, PlyFormat::BinaryLittleEndian)?;
    let mut csv = String::from("iteration,energy\n");
    for (k, e) in &report.energies {
        csv += &format!("{k},{e:e}\n");
    }
    write_text(&out.join("energy.csv"), &csv)?;
    write_text(&out.join("simulation.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(())
}

fn cmd_render(weights: &Path, camera: &Path, frame: usize, out: &Path, alpha: &Path) -> Result<()> {
    let reference: ReferenceField = load_reference(&weights.join("reference.bin"))?;
    let field = load_deformation(&weights.join("deformation.bin"))?;
    field.check_frame(frame)?;
    let camera = Camera::load(camera)?;
    let gp = weights.join("gaussians.json");
    let text = std::fs::read_to_string(&gp).map_err(|e| Error::io(&gp, e))?;
    let binding: SurfaceBinding = serde_json::from_str(&text).map_err(|e| Error::parse(gp.display().to_string(), e.to_string()))?;
    let cloud = bind_gaussians(&binding, &reference, &field, frame)?;
    let (img, _) = render_with_cache(&cloud, &camera, RenderOptions::new([0.0; 3]))?;
    write_image(out, &img.image)?;
    write_gray(alpha, camera.width, camera.height, &img.alpha)?;
    Ok(())
}

fn cmd_eval(pred: &[PathBuf], gt: &[PathBuf], pred_images: &[PathBuf], gt_images: &[PathBuf], icp: usize, out: &Path) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::Invalid(format!("{} predicted clouds for {} ground-truth clouds", pred.len(), gt.len())));
    }
    if pred_images.len() != gt_images.len() {
        return Err(Error::Invalid("--pred-images and --gt-images must pair up".into()));
    }
    let p: Vec<PlyData> = pred.iter().map(|f| read_ply(f)).collect::<Result<_>>()?;
    let g: Vec<PlyData> = gt.iter().map(|f| read_ply(f)).collect::<Result<_>>()?;
    let pp: Vec<Vec<[f64; 3]>> = p.iter().map(|d| d.positions.clone()).collect();
    let gp: Vec<Vec<[f64; 3]>> = g.iter().map(|d| d.positions.clone()).collect();
    let aligned = align_sequence(&pp, &gp, icp)?;
    let chamfer: Vec<f64> = aligned.iter().map(|a| a.1).collect();
    let mut normal = Vec::new();
    for ((a, b), (tr, _)) in p.iter().zip(&g).zip(&aligned) {
        if let (Some(na), Some(nb)) = (&a.normals, &b.normals) {
            if na.len() == nb.len() {
                let rotated: Vec<[f64; 3]> = na.iter().map(|&n| tr.rotate(n)).collect();
                normal.push(normal_consistency(&rotated, nb, &vec![true; na.len()])?.0);
            }
        }
    }
    let mut psnrs = Vec::new();
    for (a, b) in pred_images.iter().zip(gt_images) {
        psnrs.push(psnr(&read_image(a)?, &read_image(b)?)?);
    }
    let mean = |v: &[f64]| if v.is_empty() { None } else { Some(v.iter().sum::<f64>() / v.len() as f64) };
    let m = serde_json::json!({
        "chamfer_x1e4": chamfer,
        "chamfer_x1e4_mean": mean(&chamfer),
        "normal_cos_err": normal,
        "normal_cos_err_mean": mean(&normal),
        "psnr_db": psnrs,
        "psnr_db_mean": mean(&psnrs),
        "transforms": aligned.iter().map(|a| &a.0).collect::<Vec<_>>(),
    });
    write_text(out, &serde_json::to_string_pretty(&m)?)?;
    println!("chamfer x1e4 mean {:.4}", mean(&chamfer).unwrap_or(f64::NAN));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::FitNrf { scene, iters, out } => cmd_fit_nrf(&scene, iters, &out),
        Cmd::Track { scene, ablate, seed, iters, out } => cmd_track(&scene, ablate.as_deref(), seed, iters, &out),
        Cmd::Simulate { material, chart, force, iters, bounds, grid, seed, out } => {
            cmd_simulate(&material, &chart, &force, iters, &bounds, grid, seed, &out)
        }
        Cmd::Render { weights, camera, frame, out, alpha } => cmd_render(&weights, &camera, frame, &out, &alpha),
        Cmd::Synth { family, params, frames, resolution, gaussians, grid, seed, out } => {
            let fam = SynthFamily::parse(&family, &params)?;
            let opts = SynthOptions { frames, resolution, gaussians, grid, seed, ..SynthOptions::default() };
            let s = synth_scene(fam, &opts, None)?;
            let p = s.save(&out)?;
            println!("{}", p.display());
            Ok(())
        }
        Cmd::Eval { pred, gt, pred_images, gt_images, icp_iters, out } => {
            cmd_eval(&pred, &gt, &pred_images, &gt_images, icp_iters, &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if usage(&e) { 2 } else { 1 })
        }
    }
}
