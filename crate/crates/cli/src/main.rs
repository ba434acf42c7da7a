//! `synfocus` command-line tool: fuse multi-focus images, score them,
//! compare fusion methods, project focal stacks, and run the synthetic
//! defocus workflow.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use synfocus_core::baselines::{baseline_fuse, BaselineMethod, BaselineSpec};
use synfocus_core::compare::compare_methods;
use synfocus_core::error::{Error, Result};
use synfocus_core::io::{load_image, save_image, save_rgb_png, BitDepth};
use synfocus_core::metrics::metric_report;
use synfocus_core::mwgf::{mwgf_fuse, FusionConfig, FusionDomain, UNKNOWN};
use synfocus_core::raster::ImageF;
use synfocus_core::stack::{depth_code, load_volume, map_projection};
use synfocus_core::synth::{
    defocus_render, dof_curve, export_scene, in_focus_support, load_scene, make_scene,
    AcquisitionSpec, DofFuse, SceneKind,
};

#[derive(Parser)]
#[command(name = "synfocus", version, about = "Multi-focus image fusion toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fuse two or more registered images into one all-in-focus image
    Fuse(FuseArgs),
    /// Compute quality metrics for a single image
    Metrics(MetricsArgs),
    /// Fuse with every method and report Table-style metric rows
    Compare(CompareArgs),
    /// Max-amplitude projection of a focal-stack volume
    Project(ProjectArgs),
    /// Generate a synthetic scene and one defocused acquisition
    Synth(SynthArgs),
    /// Measure the depth-of-field sharpness curve with and without fusion
    EvaluateDof(EvaluateDofArgs),
}

#[derive(Args)]
struct FuseArgs {
    /// mwgf, average, lap, dwt, pca, gra or fsd
    #[arg(long)]
    method: String,
    /// JSON file with fusion configuration overrides
    #[arg(long)]
    config: Option<PathBuf>,
    /// pixel or gradient (mwgf only)
    #[arg(long)]
    domain: Option<String>,
    /// Directory for intermediate rasters (saliency, trimap, weights)
    #[arg(long)]
    debug_dir: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Input images, two or more
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    json: Option<PathBuf>,
    /// Reference image for MSE
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    image: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    gt: PathBuf,
    #[arg(long)]
    json: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(required = true, num_args = 2..=2)]
    inputs: Vec<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    map: PathBuf,
    /// Raw little-endian u16 z-index block, x fastest then y
    #[arg(long)]
    depthmap: PathBuf,
    /// Depth-coded RGB rendering
    #[arg(long)]
    color: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// two_plane, vessels, clocks or ladder
    #[arg(long)]
    scene: String,
    /// WxH, at least 64x64
    #[arg(long)]
    size: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Focus depth in micrometers for the rendered acquisition
    #[arg(long, default_value_t = 0.0)]
    focus: f64,
    /// System depth of field in micrometers
    #[arg(long, default_value_t = 120.0)]
    dof: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateDofArgs {
    #[arg(long)]
    scene_dir: PathBuf,
    /// Comma-separated focus depths in micrometers, e.g. 0,100
    #[arg(long)]
    foci: String,
    #[arg(long)]
    json: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Fuse(args) => cmd_fuse(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Compare(args) => cmd_compare(args),
        Command::Project(args) => cmd_project(args),
        Command::Synth(args) => cmd_synth(args),
        Command::EvaluateDof(args) => cmd_evaluate_dof(args),
    }
}

/// Staged output writer: everything goes to temp files next to the final
/// paths and is renamed only after the whole invocation has succeeded.
#[derive(Default)]
struct Outputs {
    staged: Vec<(PathBuf, PathBuf)>,
}

impl Outputs {
    fn stage(&mut self, final_path: &Path) -> PathBuf {
        let name = final_path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into());
        let tmp = final_path.with_file_name(format!(".{}.tmp-{}", name, std::process::id()));
        self.staged.push((tmp.clone(), final_path.to_path_buf()));
        tmp
    }

    fn commit(mut self) -> Result<()> {
        for (tmp, fin) in std::mem::take(&mut self.staged) {
            fs::rename(&tmp, &fin).map_err(|e| Error::io(&fin, e))?;
        }
        Ok(())
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        for (tmp, _) in &self.staged {
            let _ = fs::remove_file(tmp);
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<FusionConfig> {
    let config = match path {
        None => FusionConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text)?
        }
    };
    config.validate()?;
    Ok(config)
}

fn parse_domain(s: &str) -> Result<FusionDomain> {
    match s {
        "pixel" => Ok(FusionDomain::Pixel),
        "gradient" => Ok(FusionDomain::Gradient),
        other => Err(Error::invalid(format!("unknown fusion domain '{other}'"))),
    }
}

/// Rounds every number in a JSON tree to 6 significant digits so reports
/// are byte-stable across runs.
fn round_json(value: &mut serde_json::Value) {
    match value {
        serde_json::Value::Number(n) => {
            if !n.is_f64() {
                return; // integers stay integers
            }
            if let Some(f) = n.as_f64() {
                if f != 0.0 && f.is_finite() {
                    let exp = f.abs().log10().floor();
                    let scale = 10f64.powf(5.0 - exp);
                    let rounded = (f * scale).round() / scale;
                    if let Some(num) = serde_json::Number::from_f64(rounded) {
                        *n = num;
                    }
                }
            }
        }
        serde_json::Value::Array(items) => items.iter_mut().for_each(round_json),
        serde_json::Value::Object(map) => map.values_mut().for_each(round_json),
        _ => {}
    }
}

fn write_json(outputs: &mut Outputs, path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    round_json(&mut v);
    let text = serde_json::to_string_pretty(&v)?;
    let tmp = outputs.stage(path);
    fs::write(&tmp, text + "\n").map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn normalize_for_dump(img: &ImageF) -> ImageF {
    let hi = img.data().iter().cloned().fold(0.0f64, f64::max);
    if hi > 0.0 {
        img.map(|v| v / hi)
    } else {
        img.clone()
    }
}

fn cmd_fuse(args: FuseArgs) -> Result<()> {
    let images: Vec<ImageF> = args
        .inputs
        .iter()
        .map(load_image)
        .collect::<Result<_>>()?;
    let mut outputs = Outputs::default();

    let fused = if args.method == "mwgf" {
        let mut config = load_config(args.config.as_deref())?;
        if let Some(d) = &args.domain {
            config.domain = parse_domain(d)?;
        }
        let result = mwgf_fuse(&images, &config)?;
        if let Some(dir) = &args.debug_dir {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            for (n, s) in result.saliency_large.iter().enumerate() {
                save_image(&normalize_for_dump(s), dir.join(format!("saliency_large_{n}.png")), BitDepth::Eight)?;
            }
            for (n, s) in result.saliency_small.iter().enumerate() {
                save_image(&normalize_for_dump(s), dir.join(format!("saliency_small_{n}.png")), BitDepth::Eight)?;
            }
            for (n, w) in result.weights.maps().iter().enumerate() {
                save_image(w, dir.join(format!("weight_{n}.png")), BitDepth::Eight)?;
            }
            let n_sources = result.trimap.n_sources() as f64;
            let trimap_img = ImageF::new(
                result.trimap.width(),
                result.trimap.height(),
                result
                    .trimap
                    .labels()
                    .iter()
                    .map(|&l| {
                        if l == UNKNOWN {
                            1.0
                        } else {
                            l as f64 / (2.0 * n_sources)
                        }
                    })
                    .collect(),
            )?;
            save_image(&trimap_img, dir.join("trimap.png"), BitDepth::Eight)?;
        }
        result.fused
    } else {
        let method: BaselineMethod = args.method.parse()?;
        if images.len() != 2 {
            return Err(Error::invalid(format!(
                "method '{}' fuses exactly two images",
                args.method
            )));
        }
        baseline_fuse(&images[0], &images[1], &BaselineSpec::new(method))?
    };

    let tmp = outputs.stage(&args.out);
    // temp file must keep the extension for format detection
    let tmp = tmp.with_extension(
        args.out
            .extension()
            .map(|e| format!("tmp.{}", e.to_string_lossy()))
            .unwrap_or_else(|| "tmp".into()),
    );
    outputs.staged.last_mut().unwrap().0 = tmp.clone();
    save_image(&fused, &tmp, BitDepth::Eight)?;
    outputs.commit()
}

fn cmd_metrics(args: MetricsArgs) -> Result<()> {
    let img = load_image(&args.image)?;
    let reference = args.reference.as_ref().map(load_image).transpose()?;
    let report = metric_report(&img, reference.as_ref())?;
    println!("entropy           {:.4}", report.entropy);
    println!("average_gradient  {:.4}", report.average_gradient);
    println!("std_dev           {:.4}", report.std_dev);
    println!("edge_strength     {:.4}", report.edge_strength);
    if let Some(mse) = report.mse {
        println!("mse               {:.4}", mse);
    }
    if let Some(json_path) = &args.json {
        let mut outputs = Outputs::default();
        write_json(&mut outputs, json_path, &report)?;
        outputs.commit()?;
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let a = load_image(&args.inputs[0])?;
    let b = load_image(&args.inputs[1])?;
    let gt = load_image(&args.gt)?;
    let config = load_config(args.config.as_deref())?;
    let report = compare_methods(&a, &b, &gt, &config)?;

    println!(
        "{:<10} {:>9} {:>9} {:>9} {:>9} {:>11}",
        "method", "entropy", "avg_grad", "std_dev", "edge_str", "mse"
    );
    for (i, m) in report.inputs.iter().enumerate() {
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>11.4}",
            format!("input_{i}"),
            m.entropy,
            m.average_gradient,
            m.std_dev,
            m.edge_strength,
            m.mse.unwrap_or(f64::NAN)
        );
    }
    for m in &report.methods {
        println!(
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>11.4}",
            m.method,
            m.metrics.entropy,
            m.metrics.average_gradient,
            m.metrics.std_dev,
            m.metrics.edge_strength,
            m.metrics.mse.unwrap_or(f64::NAN)
        );
    }

    let mut outputs = Outputs::default();
    write_json(&mut outputs, &args.json, &report)?;
    outputs.commit()
}

fn cmd_project(args: ProjectArgs) -> Result<()> {
    let (volume, _manifest) = load_volume(&args.manifest)?;
    let (map, depth) = map_projection(&volume);
    let mut outputs = Outputs::default();

    let map_tmp = stage_with_ext(&mut outputs, &args.map);
    save_image(&map, &map_tmp, BitDepth::Eight)?;

    let depth_tmp = outputs.stage(&args.depthmap);
    let mut bytes = Vec::with_capacity(depth.indices().len() * 2);
    for &z in depth.indices() {
        bytes.extend_from_slice(&z.to_le_bytes());
    }
    fs::write(&depth_tmp, bytes).map_err(|e| Error::io(&args.depthmap, e))?;

    if let Some(color_path) = &args.color {
        let rgb = depth_code(&map, &depth, volume.nz())?;
        let color_tmp = stage_with_ext(&mut outputs, color_path);
        save_rgb_png(map.width(), map.height(), &rgb, &color_tmp)?;
    }
    outputs.commit()
}

fn stage_with_ext(outputs: &mut Outputs, final_path: &Path) -> PathBuf {
    let tmp = outputs.stage(final_path);
    let tmp = tmp.with_extension(
        final_path
            .extension()
            .map(|e| format!("tmp.{}", e.to_string_lossy()))
            .unwrap_or_else(|| "tmp".into()),
    );
    outputs.staged.last_mut().unwrap().0 = tmp.clone();
    tmp
}

fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::invalid(format!("size '{s}' is not WxH")))?;
    let w = w.parse().map_err(|_| Error::invalid("bad width"))?;
    let h = h.parse().map_err(|_| Error::invalid("bad height"))?;
    Ok((w, h))
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let kind: SceneKind = args.scene.parse()?;
    let (w, h) = parse_size(&args.size)?;
    let scene = make_scene(kind, w, h, args.seed)?;
    let acquisition = defocus_render(&scene, args.focus, args.dof)?;

    if args.out.exists() && fs::read_dir(&args.out).map(|mut d| d.next().is_some()).unwrap_or(true) {
        return Err(Error::invalid(format!(
            "output directory {} exists and is not empty",
            args.out.display()
        )));
    }
    let tmp_dir = args.out.with_file_name(format!(
        ".{}.tmp-{}",
        args.out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into()),
        std::process::id()
    ));
    let result = (|| -> Result<()> {
        export_scene(&scene, &tmp_dir, args.dof, kind, args.seed)?;
        save_image(
            &acquisition,
            tmp_dir.join(format!("acq_f{:.0}.png", args.focus)),
            BitDepth::Sixteen,
        )?;
        if args.out.exists() {
            fs::remove_dir(&args.out).map_err(|e| Error::io(&args.out, e))?;
        }
        fs::rename(&tmp_dir, &args.out).map_err(|e| Error::io(&args.out, e))
    })();
    if result.is_err() {
        let _ = fs::remove_dir_all(&tmp_dir);
    }
    result
}

#[derive(serde::Serialize)]
struct DofReport {
    foci_um: Vec<f64>,
    dof_um: f64,
    probe_depths_um: Vec<f64>,
    single_sharpness: Vec<f64>,
    fused_sharpness: Vec<f64>,
    single_support: usize,
    fused_support: usize,
    support_ratio: f64,
}

fn cmd_evaluate_dof(args: EvaluateDofArgs) -> Result<()> {
    let (scene, manifest) = load_scene(&args.scene_dir)?;
    let foci: Vec<f64> = args
        .foci
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad focus '{s}'"))))
        .collect::<Result<_>>()?;
    if foci.len() < 2 {
        return Err(Error::invalid("need at least two foci, e.g. --foci 0,100"));
    }
    let probes = scene.distinct_depths();
    let specs: Vec<AcquisitionSpec> = foci
        .iter()
        .map(|&f| AcquisitionSpec {
            focus_z_um: f,
            dof_um: manifest.dof_um,
        })
        .collect();
    let config = FusionConfig::default();
    let single = dof_curve(&scene, &specs[..1], DofFuse::None, &probes, &config)?;
    let fused = dof_curve(&scene, &specs, DofFuse::Mwgf, &probes, &config)?;
    let single_support = in_focus_support(&single);
    let fused_support = in_focus_support(&fused);
    let report = DofReport {
        foci_um: foci,
        dof_um: manifest.dof_um,
        probe_depths_um: probes,
        single_sharpness: single.iter().map(|&(_, s)| s).collect(),
        fused_sharpness: fused.iter().map(|&(_, s)| s).collect(),
        single_support,
        fused_support,
        support_ratio: fused_support as f64 / single_support.max(1) as f64,
    };
    println!(
        "in-focus support: single {} fused {} ratio {:.2}",
        report.single_support, report.fused_support, report.support_ratio
    );
    let mut outputs = Outputs::default();
    write_json(&mut outputs, &args.json, &report)?;
    outputs.commit()
}
