use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use meshrecon::config::{PipelineConfig, Stage};
use meshrecon::grid::{load_mask_png, load_rgb_png, save_mask_png, save_rgb_png};
use meshrecon::harness::{median, run_harness, HARNESS_CASES, HARNESS_SEED};
use meshrecon::metrics::{evaluate_stage, visible_vertex_filter, EvalTarget, MetricsReport};
use meshrecon::pipeline::{run_pipeline, PipelineInputs};
use meshrecon::synth::{harness_cases, load_camera, make_synthetic_case, rotate_mesh, SynthConfig, View};
use meshrecon::template::body_template;
use meshrecon::texture::{complete_texture_detailed, render_texture, save_flow, UVSymmetry};
use meshrecon::{load_mesh, rasterize, Error, Result, TriMesh, Vec3, WeakPerspectiveCamera};

const OUT_ENV: &str = "MESHRECON_OUT";

#[derive(Parser)]
#[command(name = "meshrecon", version, about = "Body mesh recovery from a single image")]
struct Cli {
    /// Log progress to stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Key-value config file.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set anchor.iterations=3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; relative paths resolve against $MESHRECON_OUT.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage named in the config.
    Recover(ConfigArgs),
    /// Run a single stage on the config's mesh.
    Stage {
        stage: String,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Complete a partial UV texture.
    Texture {
        #[arg(long)]
        texture: PathBuf,
        /// White where the texture is observed.
        #[arg(long)]
        mask: PathBuf,
        /// Prefer mirrored texels on the body template atlas.
        #[arg(long)]
        symmetry: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Score a mesh against the config's targets, or run the synthetic harness.
    Eval {
        /// Mesh to score (default: the config's mesh).
        #[arg(long)]
        mesh: Option<PathBuf>,
        /// Run the seeded synthetic harness instead.
        #[arg(long)]
        harness: bool,
        #[arg(long, default_value_t = HARNESS_CASES)]
        cases: usize,
        #[arg(long, default_value_t = HARNESS_SEED)]
        seed: u64,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Write synthetic cases, each with a ready-to-run config.txt.
    Synth {
        #[arg(long, default_value_t = HARNESS_SEED)]
        seed: u64,
        #[arg(long, default_value_t = HARNESS_CASES)]
        cases: usize,
        /// Single case from this view instead of random grid views.
        #[arg(long, value_name = "AZIMUTH,ELEVATION", value_parser = parse_view)]
        view: Option<View>,
        #[arg(long, default_value_t = 224)]
        size: usize,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Re-render a textured mesh from another viewpoint.
    Render {
        #[arg(long)]
        mesh: PathBuf,
        #[arg(long)]
        texture: PathBuf,
        /// Camera to use; the view is refitted when rotating.
        #[arg(long)]
        camera: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        azimuth: f64,
        #[arg(long, default_value_t = 0.0)]
        elevation: f64,
        #[arg(long, default_value_t = 512)]
        size: usize,
        /// Output PNG; relative paths resolve against $MESHRECON_OUT.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn parse_view(s: &str) -> std::result::Result<View, String> {
    let (a, e) = s.split_once(',').ok_or("expected AZIMUTH,ELEVATION")?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok(View {
        azimuth: num(a)?,
        elevation: num(e)?,
    })
}

fn config_error(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Resolves an output path: explicit (relative to $MESHRECON_OUT when set),
/// else `$MESHRECON_OUT/<fallback>`.
fn output_path(explicit: Option<&Path>, fallback: &str) -> Result<PathBuf> {
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from);
    match (explicit, root) {
        (Some(p), Some(r)) if p.is_relative() => Ok(r.join(p)),
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(r)) => Ok(r.join(fallback)),
        (None, None) => Err(config_error(format!("no output given; pass --out or set {OUT_ENV}"))),
    }
}

fn existing(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(config_error(format!("{what} file {} does not exist", path.display())))
    }
}

fn load_config(args: &ConfigArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let cwd = Path::new(".");
    for kv in &args.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| config_error(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v, cwd)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pipeline_output(args: &ConfigArgs, cfg: &PipelineConfig, fallback: &str) -> Result<PathBuf> {
    output_path(args.out.as_deref().or(cfg.output.as_deref()), fallback)
}

fn recover(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    let outcome = run_pipeline(cfg, Some(out))?;
    for r in &outcome.records {
        match &r.metrics {
            Some(m) => println!("{:<10} IoU {:.4}  joint {:.2} px", r.stage, m.sil_iou, m.joint_err_px),
            None => println!("{:<10} done", r.stage),
        }
    }
    println!("outputs in {}", out.display());
    Ok(())
}

fn texture(tex: &Path, mask: &Path, symmetry: bool, cfg: &PipelineConfig, out: &Path) -> Result<()> {
    existing(tex, "texture")?;
    existing(mask, "mask")?;
    let image = load_rgb_png(tex)?;
    let visible = load_mask_png(mask)?;
    let sym = if symmetry {
        let t = body_template();
        Some(UVSymmetry::from_mesh(&t.mesh, &t.symmetry, image.width, image.height)?)
    } else {
        None
    };
    let mut completion = cfg.completion;
    completion.flow.symmetry_preference = symmetry;
    let done = complete_texture_detailed(&image, &visible, sym.as_ref(), &completion)?;
    std::fs::create_dir_all(out).map_err(|e| config_error(format!("cannot create {}: {e}", out.display())))?;
    save_rgb_png(&done.texture, out.join("texture.png"))?;
    save_mask_png(&done.composed_mask, out.join("composed_mask.png"))?;
    save_flow(&done.flow, out.join("flow.bin"))?;
    println!("completed texture in {}", out.display());
    Ok(())
}

fn eval_mesh(mesh: Option<&Path>, mut cfg: PipelineConfig, out: Option<PathBuf>) -> Result<()> {
    cfg.stages.clear();
    let inputs = PipelineInputs::load(&cfg)?;
    // handles index the config's mesh; subdivision keeps those indices
    let scored = match mesh {
        Some(m) => {
            existing(m, "mesh")?;
            let scored = load_mesh(m)?;
            inputs.handles.validate(scored.vertex_count())?;
            scored
        }
        None => inputs.mesh.clone(),
    };
    let (Some(silhouette), Some(joints)) = (&inputs.silhouette, &inputs.joints) else {
        return Err(config_error("evaluation needs `silhouette` and `joints`"));
    };
    let visible = inputs.gt_mesh.as_ref().map(|g| visible_vertex_filter(g, &inputs.camera));
    let target = EvalTarget {
        camera: &inputs.camera,
        handles: &inputs.handles,
        silhouette,
        joints,
        gt_mesh: inputs.gt_mesh.as_ref().zip(visible.as_deref()),
    };
    let report = MetricsReport::from_stages(vec![evaluate_stage("eval", &scored, &target)?])?;
    println!("{}", serde_json::to_string_pretty(&report).expect("metrics serialise"));
    if let Some(o) = out {
        std::fs::create_dir_all(&o).map_err(|e| config_error(format!("cannot create {}: {e}", o.display())))?;
        report.save(o.join("metrics.json"))?;
    }
    Ok(())
}

fn eval_harness(cases: usize, seed: u64, cfg: &PipelineConfig, out: Option<&Path>) -> Result<()> {
    let report = run_harness(cases, seed, &SynthConfig::default(), cfg, out)?;
    println!("median over {} cases", report.cases.len());
    println!("{:<10} {:>8} {:>10} {:>12}", "stage", "IoU", "joint px", "chamfer mm");
    for (k, s) in report.stages.iter().enumerate() {
        let chamfer: Vec<f64> = report.cases.iter().filter_map(|c| c.chamfer_full_mm[k]).collect();
        let chamfer = if chamfer.is_empty() { "-".to_string() } else { format!("{:.2}", median(&chamfer)) };
        println!("{s:<10} {:>8.4} {:>10.2} {chamfer:>12}", report.median_sil_iou[k], report.median_joint_err_px[k]);
    }
    Ok(())
}

fn synth(seed: u64, cases: usize, view: Option<View>, size: usize, out: &Path) -> Result<()> {
    let template = body_template();
    let config = SynthConfig {
        image_size: size,
        ..SynthConfig::default()
    };
    match view {
        Some(v) => {
            make_synthetic_case(&template, v, &config, seed)?.save(out)?;
            println!("case in {}", out.display());
        }
        None => {
            for (i, case) in harness_cases(&template, cases, seed, &config)?.iter().enumerate() {
                case.save(out.join(format!("case_{i:02}")))?;
            }
            println!("{cases} cases in {}", out.display());
        }
    }
    Ok(())
}

fn with_template_uvs(mut mesh: TriMesh) -> Result<TriMesh> {
    if mesh.uvs.is_none() {
        let t = body_template();
        if mesh.faces != t.mesh.faces {
            return Err(config_error("mesh has no UV coordinates and is not on the template connectivity"));
        }
        mesh.uvs = t.mesh.uvs;
    }
    Ok(mesh)
}

fn render(
    mesh: &Path,
    tex: &Path,
    camera: Option<&Path>,
    view: View,
    size: usize,
    out: &Path,
) -> Result<()> {
    existing(mesh, "mesh")?;
    existing(tex, "texture")?;
    let mesh = with_template_uvs(load_mesh(mesh)?)?;
    let texture = load_rgb_png(tex)?;
    let rotated = view != View::FRONT;
    let posed = if rotated {
        let c = mesh.vertices.iter().fold(Vec3::zeros(), |a, v| a + v) / mesh.vertex_count() as f64;
        let mut m = rotate_mesh(&mesh.translated(&-c), &view.rotation());
        m = m.translated(&c);
        m
    } else {
        mesh
    };
    let cam = match camera {
        Some(p) => {
            existing(p, "camera")?;
            let given = load_camera(p)?;
            if rotated {
                WeakPerspectiveCamera::fit_to_mesh(&posed, [given.width(), given.height()], 0.8)?
            } else {
                given
            }
        }
        None => WeakPerspectiveCamera::fit_to_mesh(&posed, [size, size], 0.8)?,
    };
    let image = render_texture(&posed, &rasterize(&cam, &posed), &texture)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| config_error(format!("cannot create {}: {e}", dir.display())))?;
    }
    save_rgb_png(&image, out)?;
    println!("rendered {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Recover(args) => {
            let cfg = load_config(&args)?;
            recover(&cfg, &pipeline_output(&args, &cfg, "recover")?)
        }
        Command::Stage { stage, config: args } => {
            let stage: Stage = stage.parse()?;
            let mut cfg = load_config(&args)?;
            cfg.stages = vec![stage];
            recover(&cfg, &pipeline_output(&args, &cfg, stage.name())?)
        }
        Command::Texture {
            texture: tex,
            mask,
            symmetry,
            config: args,
        } => {
            let cfg = load_config(&args)?;
            texture(&tex, &mask, symmetry, &cfg, &pipeline_output(&args, &cfg, "texture")?)
        }
        Command::Eval {
            mesh,
            harness,
            cases,
            seed,
            config: args,
        } => {
            let explicit = args.out.is_some() || std::env::var_os(OUT_ENV).is_some();
            let cfg = load_config(&args)?;
            let out = if explicit { Some(pipeline_output(&args, &cfg, "eval")?) } else { None };
            if harness {
                let cfg = if args.config.is_none() {
                    PipelineConfig {
                        stages: Stage::ALL.to_vec(),
                        ..cfg
                    }
                } else {
                    cfg
                };
                eval_harness(cases, seed, &cfg, out.as_deref())
            } else {
                if args.config.is_none() && mesh.is_none() {
                    return Err(config_error("eval needs --config (targets) or --harness"));
                }
                eval_mesh(mesh.as_deref(), cfg, out)
            }
        }
        Command::Synth {
            seed,
            cases,
            view,
            size,
            out,
        } => synth(seed, cases, view, size, &output_path(out.as_deref(), "synth")?),
        Command::Render {
            mesh,
            texture: tex,
            camera,
            azimuth,
            elevation,
            size,
            out,
        } => render(
            &mesh,
            &tex,
            camera.as_deref(),
            View { azimuth, elevation },
            size,
            &output_path(out.as_deref(), "render.png")?,
        ),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                _ => 3,
            })
        }
    }
}
