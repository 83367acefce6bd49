//! The `shapegram` command line: `gen`, `infer`, `stats` and `render`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 runtime or data
//! error (unreadable image, zero posterior mass, failed statistics check).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::cache::{dp_key, edge_key, Cache};
use crate::config::{parse_grid, ConfigError, Overrides, RunConfig};
use crate::dp::{compute_backward_weights, ChildCache, PosteriorSampler};
use crate::geometry::TriangulatedPolygon;
use crate::grid::EdgeLayout;
use crate::image::{load_image, smooth_gradient, GrayImage};
use crate::likelihood::precompute_edge_table;
use crate::prior::{default_seed_edge, empirical_stats, sample_shapes};
use crate::render::{render_gallery, render_ppm, render_svg, Frame, Style};
use crate::rng::stream_rng;
use crate::shape_doc::{Provenance, ShapeDocument, ShapeRecord};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "shapegram", version, about = "Random shapes from a triangle grammar, and exact posterior samples of shapes in images")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample shapes from the prior.
    Gen(Common),
    /// Sample shapes from the posterior given an image.
    Infer(InferArgs),
    /// Compare closed-form structure statistics with Monte Carlo estimates.
    Stats(Common),
    /// Draw shape documents as SVG or PPM.
    Render(RenderArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
    /// Posterior grid, e.g. 40x40.
    #[arg(long, value_name = "WxH", value_parser = parse_grid)]
    pub grid: Option<[usize; 2]>,
    #[arg(long, value_name = "N")]
    pub depth: Option<usize>,
    #[arg(long, value_name = "F")]
    pub lambda: Option<f64>,
    /// Longest admissible edge, in grid steps.
    #[arg(long, value_name = "N")]
    pub lmax: Option<f64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Print a machine-readable report on stdout.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Args)]
pub struct InferArgs {
    #[command(flatten)]
    pub common: Common,
    /// Input image (PNG, PGM, ...); overrides `run.image`.
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Svg,
    Ppm,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub common: Common,
    /// Shape documents written by `gen` or `infer`.
    #[arg(required = true, value_name = "FILE")]
    pub files: Vec<PathBuf>,
    /// Backdrop image.
    #[arg(long, value_name = "PATH")]
    pub image: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Svg)]
    pub format: Format,
    /// Draw only the boundary, in image coordinates; needs --image.
    #[arg(long)]
    pub overlay: bool,
}

impl Common {
    fn resolve(&self, image: Option<&PathBuf>) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        cfg.apply(&Overrides {
            seed: self.seed,
            samples: self.samples,
            grid: self.grid,
            depth: self.depth,
            lambda: self.lambda,
            l_max: self.lmax,
            out: self.out.clone(),
            image: image.cloned(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if code == 0 {
                let _ = write!(stdout, "{text}");
            } else {
                let _ = write!(stderr, "{text}");
            }
            return code;
        }
    };
    match run(&cli.command, stdout, stderr) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(command: &Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Gen(c) => cmd_gen(c, stdout),
        Command::Infer(a) => cmd_infer(a, stdout, stderr),
        Command::Stats(c) => cmd_stats(c, stdout),
        Command::Render(a) => cmd_render(a, stdout),
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn print_json(stdout: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    writeln!(stdout, "{text}").map_err(runtime)
}

fn say(stdout: &mut dyn Write, text: std::fmt::Arguments) -> Result<(), CliError> {
    stdout.write_fmt(text).and_then(|_| writeln!(stdout)).map_err(runtime)
}

fn cmd_gen(c: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = c.resolve(None)?;
    let params = cfg.grammar_params()?;
    let shapes = sample_shapes(&params, &cfg.sampler_config(), cfg.run.samples, default_seed_edge()).map_err(runtime)?;
    let out = &cfg.run.out;
    create_dir(out)?;
    let hash = cfg.hash();
    let mut files = Vec::with_capacity(shapes.len());
    for (i, s) in shapes.iter().enumerate() {
        let doc = ShapeDocument::new(
            Provenance {
                command: "gen".into(),
                config_hash: hash.clone(),
                seed: cfg.run.seed,
                first_sample: i,
                image_hash: None,
                grid: None,
                image_size: None,
            },
            vec![ShapeRecord::new(s, None)],
        );
        let path = out.join(format!("shape_{i:03}.json"));
        write_file(&path, doc.to_json())?;
        files.push(path);
    }
    let gallery = out.join("gallery.svg");
    write_file(&gallery, render_gallery(&shapes, 5, 160.0))?;
    if c.json {
        print_json(
            stdout,
            &json!({
                "command": "gen",
                "config_hash": hash,
                "seed": cfg.run.seed,
                "files": files,
                "gallery": gallery,
                "triangles": shapes.iter().map(|s| s.len()).collect::<Vec<_>>(),
            }),
        )
    } else {
        say(stdout, format_args!("wrote {} shapes and {} to {}", shapes.len(), gallery.display(), out.display()))
    }
}

struct Posterior {
    sampler: PosteriorSampler,
    image: GrayImage,
}

fn build_posterior(cfg: &RunConfig, stderr: &mut dyn Write) -> Result<Posterior, CliError> {
    let path = cfg
        .run
        .image
        .as_ref()
        .ok_or_else(|| CliError::Usage("infer needs an image: pass --image or set run.image".into()))?;
    let image = load_image(path).map_err(runtime)?;
    let params = cfg.grammar_params()?;
    let pc = cfg.posterior_config();
    let layout = EdgeLayout::new(cfg.grid()?, pc.dp.l_min, pc.dp.l_max)
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    let cache = cfg.run.cache_dir.as_ref().map(Cache::new);
    let ekey = edge_key(&image, &layout, &pc.likelihood);
    let mut warn = |e: crate::cache::CacheError| {
        let _ = writeln!(stderr, "warning: ignoring cache: {e}");
    };

    let cached = cache.as_ref().and_then(|c| c.load_edges(&ekey, &layout).unwrap_or_else(|e| {
        warn(e);
        None
    }));
    let table = match cached {
        Some(t) => t,
        None => {
            let grad = smooth_gradient(&image, pc.likelihood.smooth_sigma);
            let t = precompute_edge_table(&layout, &grad, &pc.likelihood).map_err(runtime)?;
            if let Some(c) = &cache {
                c.store_edges(&ekey, &t).map_err(runtime)?;
            }
            t
        }
    };

    let lambda = pc.likelihood.lambda;
    let dkey = dp_key(&ekey, &params, lambda, pc.dp.depth);
    let cached = cache.as_ref().and_then(|c| c.load_dp(&dkey, &layout, pc.dp.depth).unwrap_or_else(|e| {
        warn(e);
        None
    }));
    let tables = match cached {
        Some(t) => t,
        None => {
            let t = compute_backward_weights(&table, &params, lambda, pc.dp.depth).map_err(runtime)?;
            if let Some(c) = &cache {
                c.store_dp(&dkey, &t).map_err(runtime)?;
            }
            t
        }
    };
    let sampler = PosteriorSampler::from_tables(table, &params, lambda, tables).map_err(runtime)?;
    Ok(Posterior { sampler, image })
}

fn cmd_infer(a: &InferArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let cfg = a.common.resolve(a.image.as_ref())?;
    let Posterior { sampler, image } = build_posterior(&cfg, stderr)?;
    let grid = cfg.grid()?;
    let frame = Frame::grid(grid, image.width(), image.height());
    let out = &cfg.run.out;
    create_dir(out)?;
    let hash = cfg.hash();
    let image_hash = image.content_hash();
    let mut cache = ChildCache::default();
    let mut report = Vec::with_capacity(cfg.run.samples);
    for i in 0..cfg.run.samples {
        let mut rng = stream_rng(cfg.run.seed, i as u64);
        let s = sampler.sample_with_cache(&mut rng, &mut cache).map_err(runtime)?;
        let doc = ShapeDocument::new(
            Provenance {
                command: "infer".into(),
                config_hash: hash.clone(),
                seed: cfg.run.seed,
                first_sample: i,
                image_hash: Some(image_hash.clone()),
                grid: Some(cfg.posterior.grid),
                image_size: Some([image.width(), image.height()]),
            },
            vec![ShapeRecord::new(&s.polygon, Some(s.log_posterior))],
        );
        let json_path = out.join(format!("sample_{i:03}.json"));
        write_file(&json_path, doc.to_json())?;
        let svg_path = out.join(format!("sample_{i:03}.svg"));
        write_file(
            &svg_path,
            render_svg(std::slice::from_ref(&s.polygon), &frame, Some(&image), &Style::overlay()),
        )?;
        report.push(json!({
            "file": json_path,
            "overlay": svg_path,
            "triangles": s.polygon.len(),
            "log_posterior": s.log_posterior,
        }));
    }
    let log_total = sampler.root_marginal().log_total();
    if a.common.json {
        print_json(
            stdout,
            &json!({
                "command": "infer",
                "config_hash": hash,
                "image_hash": image_hash,
                "seed": cfg.run.seed,
                "log_normalizer": log_total,
                "samples": report,
            }),
        )
    } else {
        say(stdout, format_args!("log normalizer {log_total:.6}"))?;
        say(stdout, format_args!("wrote {} posterior samples to {}", report.len(), out.display()))
    }
}

#[derive(Debug, Serialize)]
struct Check {
    analytic: f64,
    mean: f64,
    se: f64,
    ok: bool,
}

impl Check {
    fn new(analytic: f64, mean: f64, se: f64) -> Self {
        let slack = 4.0 * se + 1e-9 * analytic.abs().max(1.0);
        Check {
            analytic,
            mean,
            se,
            ok: (analytic - mean).abs() <= slack,
        }
    }
}

fn cmd_stats(c: &Common, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = c.resolve(None)?;
    let params = cfg.grammar_params()?;
    let exact = params.expected_counts();
    let mc = empirical_stats(&params, &cfg.sampler_config(), cfg.run.stats_samples).map_err(runtime)?;
    let checks = [
        ("n", Check::new(exact.expected_n, mc.mean_n, mc.se_n)),
        ("j", Check::new(exact.expected_j, mc.mean_j, mc.se_j)),
        ("m", Check::new(exact.m, mc.mean_m, mc.se_m)),
    ];
    let ok = checks.iter().all(|(_, k)| k.ok);
    if c.json {
        print_json(
            stdout,
            &json!({
                "command": "stats",
                "config_hash": cfg.hash(),
                "t": params.t,
                "samples": mc.n_samples,
                "capped_fraction": mc.capped_fraction,
                "n": checks[0].1,
                "j": checks[1].1,
                "m": checks[2].1,
                "ok": ok,
            }),
        )?;
    } else {
        say(stdout, format_args!("t = [{:.6}, {:.6}, {:.6}], {} samples", params.t[0], params.t[1], params.t[2], mc.n_samples))?;
        say(stdout, format_args!("{:<4}{:>12}{:>12}{:>12}  within 4 se", "", "analytic", "mean", "se"))?;
        for (name, k) in &checks {
            let label = if *name == "m" { "m".to_string() } else { format!("E({name})") };
            say(stdout, format_args!("{:<4}{:>12.6}{:>12.6}{:>12.6}  {}", label, k.analytic, k.mean, k.se, if k.ok { "yes" } else { "NO" }))?;
        }
        if mc.capped_fraction > 0.0 {
            say(stdout, format_args!("{:.4}% of structures hit the depth cap", 100.0 * mc.capped_fraction))?;
        }
    }
    if ok {
        Ok(())
    } else {
        Err(CliError::Runtime("Monte Carlo estimates disagree with the closed form".into()))
    }
}

fn cmd_render(a: &RenderArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    if a.overlay && a.image.is_none() {
        return Err(CliError::Usage("--overlay needs --image".into()));
    }
    let out = match &a.common.config {
        Some(_) => a.common.resolve(None)?.run.out,
        None => a.common.out.clone().unwrap_or_else(|| PathBuf::from("out")),
    };
    let image = match &a.image {
        Some(p) => Some(load_image(p).map_err(runtime)?),
        None => None,
    };
    let style = if a.overlay { Style::overlay() } else { Style::default() };
    create_dir(&out)?;
    let mut written = Vec::with_capacity(a.files.len());
    for file in &a.files {
        let doc = ShapeDocument::load(file).map_err(runtime)?;
        let shapes = doc.polygons().map_err(runtime)?;
        let frame = frame_for(&shapes, doc.provenance.grid, image.as_ref())?;
        let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "shape".into());
        let path = match a.format {
            Format::Svg => {
                let p = out.join(format!("{stem}.svg"));
                write_file(&p, render_svg(&shapes, &frame, image.as_ref(), &style))?;
                p
            }
            Format::Ppm => {
                let p = out.join(format!("{stem}.ppm"));
                write_file(&p, render_ppm(&shapes, &frame, image.as_ref(), &style))?;
                p
            }
        };
        written.push(path);
    }
    if a.common.json {
        print_json(stdout, &json!({ "command": "render", "files": written }))
    } else {
        say(stdout, format_args!("rendered {} files to {}", written.len(), out.display()))
    }
}

fn frame_for(shapes: &[TriangulatedPolygon], grid: Option<[usize; 2]>, image: Option<&GrayImage>) -> Result<Frame, CliError> {
    Ok(match (grid, image) {
        (Some([w, h]), Some(img)) => {
            let g = crate::grid::Grid::new(w, h).map_err(runtime)?;
            Frame::grid(g, img.width(), img.height())
        }
        (_, Some(img)) => Frame::fit(shapes, img.width().min(img.height()) as f64),
        (_, None) => Frame::fit(shapes, 512.0),
    })
}
