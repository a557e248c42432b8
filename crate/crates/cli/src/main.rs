use clap::{Parser, Subcommand, ValueEnum};
use dualdn_core::adcore::Tape;
use dualdn_core::dataio::{
    crop_rggb_full, generate_dataset, load_weights, mosaic_from_rgb, random_camera, read_png8, read_raw, scene_seed,
    write_png8, write_raw, write_split, ExperimentConfig,
};
use dualdn_core::diffisp::{run_isp, DemosaicKind};
use dualdn_core::eval::{denoise, denoise_raw_only, evaluate, EvalSettings, PostStage};
use dualdn_core::gradsuite::{run_suite, TOLERANCE};
use dualdn_core::metrics::format_db;
use dualdn_core::nets::ModelBundle;
use dualdn_core::rawmodel::{NoiseParams, RawImage, SamplerConfig};
use dualdn_core::train::{train_experiment, RunOptions};
use dualdn_core::{Error, Exec, Result};
use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(name = "dualdn", version, about = "Dual-domain raw/sRGB denoising through a differentiable ISP")]
struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum DemosaicArg {
    Bilinear,
    GradientCorrected,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PostArg {
    None,
    Sharpen,
    Clahe,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Synthesize train/test raw containers and their manifests.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Number of training scenes.
        #[arg(long)]
        count: Option<usize>,
        /// Directory of sRGB PNG/PPM sources to use instead of procedural scenes.
        #[arg(long)]
        rgb: Option<PathBuf>,
        /// Where the containers go (default: next to the train manifest).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Raw container to sRGB through the ISP alone.
    Render {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum)]
        demosaic: Option<DemosaicArg>,
        #[arg(long, conflicts_with = "clahe")]
        sharpen: bool,
        #[arg(long)]
        clahe: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the model an experiment config describes.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Progress line every this many iterations (0 = silent).
        #[arg(long, default_value_t = 100)]
        progress: usize,
    },
    /// PSNR/SSIM of the noisy input and each weights file over the test manifest.
    Eval {
        #[arg(long)]
        config: PathBuf,
        /// Weights file; repeat to compare several models.
        #[arg(long)]
        weights: Vec<PathBuf>,
        #[arg(long = "K", default_value_t = 0.02)]
        k: f64,
        /// Read variance (default: the sampler's mean line at K).
        #[arg(long)]
        sigma_r2: Option<f64>,
        #[arg(long, default_value_t = 0.0)]
        alpha: f64,
        #[arg(long, value_enum, default_value = "none")]
        post: PostArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Denoise one raw container end to end.
    Infer {
        #[arg(long)]
        raw: PathBuf,
        #[arg(long)]
        weights: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the raw-domain output as a container at this path.
        #[arg(long)]
        save_intermediate_raw: Option<PathBuf>,
        #[arg(long = "K", default_value_t = 0.02)]
        k: f64,
        #[arg(long)]
        sigma_r2: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Finite-difference gradient suite.
    Gradcheck {
        /// A stage name or "all".
        #[arg(long, default_value = "all")]
        stage: String,
        /// Repeatable; defaults to seeds 0..5.
        #[arg(long)]
        seed: Vec<u64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parameter(_) => 2,
        Error::Io(_) | Error::Csv(_) => 1,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            if e.use_stderr() {
                let first = e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string();
                eprintln!("error[usage]: {first}");
            } else {
                print!("{e}");
            }
            return ExitCode::from(code as u8);
        }
    };
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    match run(cli.cmd, exec) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), e.to_string().replace('\n', " "));
            ExitCode::from(exit_code(&e))
        }
    }
}

fn post_stage(p: PostArg) -> PostStage {
    match p {
        PostArg::None => PostStage::None,
        PostArg::Sharpen => PostStage::Sharpen,
        PostArg::Clahe => PostStage::Clahe,
    }
}

fn srgb_to_linear(v: f64) -> f64 {
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn rgb_sources(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or_default().to_ascii_lowercase();
            ext == "png" || ext == "ppm"
        })
        .collect();
    files.sort();
    Ok(files)
}

fn gen(config: &Path, seed: Option<u64>, count: Option<usize>, rgb: Option<&Path>, out_dir: Option<PathBuf>, exec: Exec) -> Result<()> {
    let text = fs::read_to_string(config)?;
    let exp: ExperimentConfig = serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", config.display())))?;
    let base = config.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    let mut data = exp.data.clone();
    data.train_manifest = resolve(&data.train_manifest);
    data.test_manifest = resolve(&data.test_manifest);
    if let Some(s) = seed {
        data.gen.seed = s;
    }
    if let Some(c) = count {
        data.gen.train_count = c;
    }
    let dir = out_dir.unwrap_or_else(|| data.train_manifest.parent().unwrap_or(Path::new(".")).join("scenes"));
    let (train, test) = match rgb {
        None => generate_dataset(&dir, &data, exec)?,
        Some(src) => {
            let files = rgb_sources(src)?;
            let total = data.gen.train_count + data.gen.test_count;
            if files.len() < total {
                return Err(Error::Data(format!(
                    "{} holds {} images, need {total}",
                    src.display(),
                    files.len()
                )));
            }
            let mut scenes = Vec::with_capacity(total);
            for (i, f) in files.iter().take(total).enumerate() {
                let linear = read_png8(f)?.map(srgb_to_linear);
                let p = random_camera(scene_seed(data.gen.seed, 2, i));
                scenes.push(mosaic_from_rgb(&linear, p.bayer, &p)?);
            }
            let (tr, te) = scenes.split_at(data.gen.train_count);
            fs::create_dir_all(&dir)?;
            (
                write_split(&dir, "train", tr, &data.train_manifest)?,
                write_split(&dir, "test", te, &data.test_manifest)?,
            )
        }
    };
    println!(
        "wrote {} train and {} test scenes to {}",
        train.files.len(),
        test.files.len(),
        dir.display()
    );
    Ok(())
}

fn render_isp(raw: &RawImage, p: &dualdn_core::diffisp::IspParams) -> Result<dualdn_core::Array<f64>> {
    let tape = Tape::<f64>::new();
    Ok(run_isp(raw.to_tensor(&tape), p)?.to_array())
}

fn noise_for(k: f64, sigma_r2: Option<f64>) -> Result<NoiseParams> {
    NoiseParams::new(k, sigma_r2.unwrap_or_else(|| SamplerConfig::default().read_variance_at(k)))
}

fn method_names(bundles: &[ModelBundle], paths: &[PathBuf]) -> Vec<String> {
    let mut seen = HashSet::new();
    bundles
        .iter()
        .zip(paths)
        .map(|(b, p)| {
            let name = b.kind().name().to_string();
            if seen.insert(name.clone()) {
                name
            } else {
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string()
            }
        })
        .collect()
}

fn run(cmd: Cmd, exec: Exec) -> Result<()> {
    match cmd {
        Cmd::Gen { config, seed, count, rgb, out_dir } => gen(&config, seed, count, rgb.as_deref(), out_dir, exec),
        Cmd::Render { raw, alpha, demosaic, sharpen, clahe, out } => {
            let img = crop_rggb_full(&read_raw(&raw)?)?;
            let mut p = img.params.clone();
            if let Some(a) = alpha {
                p.alpha_tm = a;
            }
            if let Some(d) = demosaic {
                p.demosaic = match d {
                    DemosaicArg::Bilinear => DemosaicKind::Bilinear,
                    DemosaicArg::GradientCorrected => DemosaicKind::GradientCorrected,
                };
            }
            p.validate()?;
            let post = if sharpen {
                PostStage::Sharpen
            } else if clahe {
                PostStage::Clahe
            } else {
                PostStage::None
            };
            let srgb = post.apply(&render_isp(&img, &p)?)?;
            write_png8(&out, &srgb)
        }
        Cmd::Train { config, resume, out_dir, progress } => {
            let exp = ExperimentConfig::load(&config)?;
            let opts = RunOptions { out_dir, resume, exec, progress_every: progress };
            let out = train_experiment(&exp, &opts)?;
            if let Some(last) = out.log.last() {
                println!("finished at iteration {} with loss {:.6}", last.iter + 1, last.loss);
            }
            Ok(())
        }
        Cmd::Eval { config, weights, k, sigma_r2, alpha, post, seed, csv } => {
            let exp = ExperimentConfig::load(&config)?;
            let (_, test) = exp.check_data()?;
            let scenes: Vec<RawImage> = test
                .load_images()?
                .into_iter()
                .map(|mut s| {
                    s.params = exp.isp.apply(&s.params);
                    s
                })
                .collect();
            let bundles = weights.iter().map(|w| load_weights(w)).collect::<Result<Vec<_>>>()?;
            let names = method_names(&bundles, &weights);
            let named: Vec<(&str, &ModelBundle)> = names.iter().map(String::as_str).zip(&bundles).collect();
            let settings = EvalSettings { k, sigma_r2, alpha, post: post_stage(post), seed };
            let report = evaluate(&scenes, &named, &exp.sampler, &settings, exec)?;
            for m in report.methods() {
                println!(
                    "{m:<12} psnr {:>8} dB  ssim {:.4}",
                    format_db(report.mean_psnr(&m).unwrap_or(f64::NAN)),
                    report.mean_ssim(&m).unwrap_or(f64::NAN)
                );
            }
            if let Some(path) = csv.or(exp.outputs.eval_csv) {
                report.write_csv(&path)?;
            }
            Ok(())
        }
        Cmd::Infer { raw, weights, out, save_intermediate_raw, k, sigma_r2, alpha } => {
            let bundle = load_weights(&weights)?;
            let img = crop_rggb_full(&read_raw(&raw)?)?;
            let mut p = img.params.clone();
            if let Some(a) = alpha {
                p.alpha_tm = a;
            }
            p.validate()?;
            let np = noise_for(k, sigma_r2)?;
            let srgb = denoise(&bundle, &img, &np, &p)?;
            write_png8(&out, &srgb)?;
            if let Some(path) = save_intermediate_raw {
                let mosaic = denoise_raw_only(&bundle, &img, &np, &p)?;
                let (h, w) = (img.height(), img.width());
                let plane = mosaic.map(|v| v.clamp(0.0, 1.0)).reshape(vec![h, w])?;
                write_raw(&path, &RawImage::new(plane, img.params.clone())?)?;
            }
            Ok(())
        }
        Cmd::Gradcheck { stage, seed } => {
            let seeds = if seed.is_empty() { (0..5).collect() } else { seed };
            let start = std::time::Instant::now();
            let results = run_suite(&stage, &seeds, exec)?;
            let mut failed = Vec::new();
            for r in &results {
                println!(
                    "{:<14} seed {:<3} max_rel_error {:.3e}  checked {:>4}  {}",
                    r.stage,
                    r.seed,
                    r.report.max_rel_error,
                    r.report.checked,
                    if r.passed() { "ok" } else { "FAIL" }
                );
                if !r.passed() {
                    failed.push(format!("{}@{}", r.stage, r.seed));
                }
            }
            println!("{} checks in {:.1} s, tolerance {TOLERANCE:e}", results.len(), start.elapsed().as_secs_f64());
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::Data(format!("gradient check failed for {}", failed.join(", "))))
            }
        }
    }
}
