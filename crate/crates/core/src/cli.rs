//! The `scseg` command line: argument parsing, config merging and the four
//! subcommands. Exit codes: 0 success, 1 some input failed, 2 bad configuration.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::basis::BasisSpec;
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{evaluate_with, DatasetItem, EvalReport};
use crate::segment::{EdgePolicy, Method, Segmenter, SegmenterConfig};
use crate::synth::{synthesize, SynthConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "scseg", version, about = "Sparse + TV background/foreground segmentation of screen content")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a 0/255 foreground mask for each input image.
    Segment {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Also write the image with foreground tinted red.
        #[arg(long)]
        overlay: bool,
    },
    /// Score both methods on a directory of <name>.png / <name>_gt.png pairs.
    Eval { dir: PathBuf },
    /// Generate a seeded synthetic dataset of blocks and ground-truth masks.
    Synth {
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Stroke contrast, a value or a `lo:hi` range.
        #[arg(long)]
        contrast: Option<Range<f64>>,
        /// Stroke thickness in pixels, a value or a `lo:hi` range.
        #[arg(long)]
        thickness: Option<Range<usize>>,
    },
    /// Split one block into background, sparse layer and coefficients.
    Decompose { input: PathBuf },
}

/// Settings shared by all subcommands. Every field may also be given in the
/// `--config` file as `key = value` with the flag name as key.
#[derive(Debug, Default, Clone, Args)]
pub struct Options {
    #[arg(long, global = true)]
    pub block_size: Option<usize>,
    #[arg(long, global = true)]
    pub num_bases: Option<usize>,
    #[arg(long, global = true)]
    pub lambda1: Option<f64>,
    #[arg(long, global = true)]
    pub lambda2: Option<f64>,
    #[arg(long, global = true)]
    pub rho1: Option<f64>,
    #[arg(long, global = true)]
    pub rho2: Option<f64>,
    #[arg(long, global = true)]
    pub rho3: Option<f64>,
    /// ADMM iterations per block.
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    /// Early-stop tolerance on the ADMM residuals (0 runs all iterations).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Foreground threshold on |s|, in 8-bit intensity units.
    #[arg(long, global = true)]
    pub fg_threshold: Option<f64>,
    /// replicate (pad partial blocks) or strict (reject them).
    #[arg(long, global = true)]
    pub edge_policy: Option<EdgePolicy>,
    /// sparse-tv or lad.
    #[arg(long, global = true)]
    pub method: Option<Method>,
    /// Full-scale intensity used inside the solver.
    #[arg(long, global = true)]
    pub intensity_scale: Option<f64>,
    /// Write per-block diagnostics (coefficients, residual histories) as JSON.
    #[arg(long, global = true)]
    pub dump: bool,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing); defaults to the current one.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 or unset uses all cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// `lo:hi`, or a single value meaning `lo = hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range<T>(pub T, pub T);

impl<T: FromStr + Copy> FromStr for Range<T> {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parse = |p: &str| p.trim().parse::<T>().map_err(|_| format!("bad number {p:?}"));
        match s.split_once(':') {
            Some((a, b)) => Ok(Range(parse(a)?, parse(b)?)),
            None => {
                let v = parse(s)?;
                Ok(Range(v, v))
            }
        }
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone)]
pub struct Settings {
    pub segmenter: SegmenterConfig,
    pub dump: bool,
    pub seed: u64,
    pub out: PathBuf,
    pub jobs: usize,
}

fn set<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<()> {
    if slot.is_none() {
        *slot = Some(
            value
                .parse()
                .map_err(|_| Error::Config(format!("config key {key}: cannot parse {value:?}")))?,
        );
    }
    Ok(())
}

impl Options {
    /// Fills unset fields from config-file pairs; flags already set win.
    pub fn merge_file(&mut self, pairs: &[(String, String)]) -> Result<()> {
        for (key, value) in pairs {
            let k = key.replace('_', "-");
            match k.as_str() {
                "block-size" => set(&mut self.block_size, key, value)?,
                "num-bases" => set(&mut self.num_bases, key, value)?,
                "lambda1" => set(&mut self.lambda1, key, value)?,
                "lambda2" => set(&mut self.lambda2, key, value)?,
                "rho1" => set(&mut self.rho1, key, value)?,
                "rho2" => set(&mut self.rho2, key, value)?,
                "rho3" => set(&mut self.rho3, key, value)?,
                "iters" => set(&mut self.iters, key, value)?,
                "tol" => set(&mut self.tol, key, value)?,
                "fg-threshold" => set(&mut self.fg_threshold, key, value)?,
                "edge-policy" => set(&mut self.edge_policy, key, value)?,
                "method" => set(&mut self.method, key, value)?,
                "intensity-scale" => set(&mut self.intensity_scale, key, value)?,
                "seed" => set(&mut self.seed, key, value)?,
                "out" => set(&mut self.out, key, value)?,
                "jobs" => set(&mut self.jobs, key, value)?,
                "dump" => {
                    let on: bool = value
                        .parse()
                        .map_err(|_| Error::Config(format!("config key {key}: expected true or false")))?;
                    self.dump |= on;
                }
                _ => return Err(Error::Config(format!("unknown config key {key:?}"))),
            }
        }
        Ok(())
    }

    /// Applies the overrides to the defaults and validates the result.
    pub fn resolve(&self) -> Result<Settings> {
        let mut opts = self.clone();
        if let Some(path) = &self.config {
            opts.merge_file(&io::read_config(path)?)?;
        }
        let d = SegmenterConfig::default();
        let basis = BasisSpec::new(
            opts.block_size.unwrap_or(d.basis.block_size()),
            opts.num_bases.unwrap_or(d.basis.num_bases()),
        )?;
        let mut solver = d.solver;
        solver.lambda1 = opts.lambda1.unwrap_or(solver.lambda1);
        solver.lambda2 = opts.lambda2.unwrap_or(solver.lambda2);
        solver.rho1 = opts.rho1.unwrap_or(solver.rho1);
        solver.rho2 = opts.rho2.unwrap_or(solver.rho2);
        solver.rho3 = opts.rho3.unwrap_or(solver.rho3);
        solver.max_iters = opts.iters.unwrap_or(solver.max_iters);
        solver.primal_tol = opts.tol.unwrap_or(solver.primal_tol);
        let segmenter = SegmenterConfig {
            basis,
            solver,
            fg_threshold: opts.fg_threshold.unwrap_or(d.fg_threshold),
            edge_policy: opts.edge_policy.unwrap_or(d.edge_policy),
            method: opts.method.unwrap_or(d.method),
            intensity_scale: opts.intensity_scale.unwrap_or(d.intensity_scale),
        };
        segmenter.validate()?;
        Ok(Settings {
            segmenter,
            dump: opts.dump,
            seed: opts.seed.unwrap_or(2024),
            out: opts.out.unwrap_or_else(|| PathBuf::from(".")),
            jobs: opts.jobs.unwrap_or(0),
        })
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let settings = match cli.opts.resolve() {
        Ok(s) => s,
        Err(e) => {
            eprintln!("scseg: {e}");
            return EXIT_CONFIG;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(settings.jobs)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("scseg: cannot start worker pool: {e}");
            return EXIT_CONFIG;
        }
    };
    if let Err(e) = fs::create_dir_all(&settings.out) {
        eprintln!("scseg: {}: {e}", settings.out.display());
        return EXIT_FAILURE;
    }
    pool.install(|| match &cli.command {
        Command::Segment { inputs, overlay } => cmd_segment(inputs, *overlay, &settings),
        Command::Eval { dir } => cmd_eval(dir, &settings),
        Command::Synth {
            count,
            contrast,
            thickness,
        } => cmd_synth(*count, *contrast, *thickness, &settings),
        Command::Decompose { input } => cmd_decompose(input, &settings),
    })
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into())
}

fn report_failure(path: &Path, e: &Error) {
    eprintln!("scseg: {}: {e}", path.display());
}

fn exit_code(failures: usize) -> i32 {
    if failures == 0 {
        EXIT_OK
    } else {
        EXIT_FAILURE
    }
}

fn make_segmenter(cfg: SegmenterConfig) -> std::result::Result<Segmenter, i32> {
    Segmenter::new(cfg).map_err(|e| {
        eprintln!("scseg: {e}");
        EXIT_CONFIG
    })
}

/// Writes `<stem>_mask.png` per input, plus `<stem>_overlay.png` and
/// `<stem>_blocks.json` on request.
pub fn cmd_segment(inputs: &[PathBuf], overlay: bool, settings: &Settings) -> i32 {
    let seg = match make_segmenter(settings.segmenter) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut failures = 0;
    for input in inputs {
        let outcome = (|| -> Result<()> {
            let image = io::load_image(input)?;
            let (mask, blocks) = seg.segment_image_detailed(&image)?;
            let name = stem(input);
            io::save_mask(&mask, &settings.out.join(format!("{name}_mask.png")))?;
            if overlay {
                io::save_overlay(&image, &mask, &settings.out.join(format!("{name}_overlay.png")))?;
            }
            if settings.dump {
                let path = settings.out.join(format!("{name}_blocks.json"));
                let json = serde_json::to_string_pretty(&blocks)
                    .map_err(|e| Error::Internal(e.to_string()))?;
                fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            report_failure(input, &e);
            failures += 1;
        }
    }
    exit_code(failures)
}

type Loaded = std::result::Result<(crate::ImagePlane, crate::SegmentationMask), String>;

fn load_pair(pair: &io::DatasetPair) -> Loaded {
    let image = io::load_image(&pair.image).map_err(|e| e.to_string())?;
    let truth = io::load_mask(&pair.truth).map_err(|e| e.to_string())?;
    Ok((image, truth))
}

fn pct(v: f64) -> String {
    format!("{:>9.1}", 100.0 * v)
}

/// Aggregate table in the layout Precision / Recall / F1 (percent), one row
/// per method and averaging mode.
pub fn format_table(rows: &[(&str, &EvalReport)]) -> String {
    let mut s = format!(
        "{:<10} {:<6} {:>9} {:>9} {:>9} {:>7}\n",
        "method", "avg", "precision", "recall", "f1", "images"
    );
    for (name, rep) in rows {
        for (mode, sc) in [("macro", &rep.macro_avg), ("micro", &rep.micro_avg)] {
            s += &format!(
                "{:<10} {:<6} {} {} {} {:>7}\n",
                name,
                mode,
                pct(sc.precision),
                pct(sc.recall),
                pct(sc.f1),
                rep.per_image.len()
            );
        }
    }
    s
}

/// Scores the configured method and the LAD baseline; writes
/// `eval_<method>.csv` for each and prints the aggregate table.
pub fn cmd_eval(dir: &Path, settings: &Settings) -> i32 {
    let (pairs, unpaired) = match io::find_pairs(dir) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("scseg: {e}");
            return EXIT_FAILURE;
        }
    };
    let mut failures = unpaired.len();
    for path in &unpaired {
        eprintln!("scseg: {}: no matching image/ground-truth partner, skipped", path.display());
    }
    let items: Vec<DatasetItem> = pairs.iter().map(|p| (p.id.clone(), load_pair(p))).collect();

    let primary = settings.segmenter.method;
    let methods = [primary, if primary == Method::Lad { Method::SparseTv } else { Method::Lad }];
    let mut reports = Vec::new();
    for method in methods {
        let seg = match make_segmenter(SegmenterConfig {
            method,
            ..settings.segmenter
        }) {
            Ok(s) => s,
            Err(code) => return code,
        };
        let report = match evaluate_with(&items, &seg) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("scseg: {e}");
                return EXIT_FAILURE;
            }
        };
        let path = settings.out.join(format!("eval_{method}.csv"));
        if let Err(e) = io::save_report(&report, &path) {
            report_failure(&path, &e);
            failures += 1;
        }
        reports.push((method.to_string(), report));
    }
    for f in &reports[0].1.failures {
        eprintln!("scseg: {}: {}", f.id, f.message);
        failures += 1;
    }
    let rows: Vec<(&str, &EvalReport)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    print!("{}", format_table(&rows));
    exit_code(failures)
}

/// Writes `synth_NNNN.png` and `synth_NNNN_gt.png` pairs.
pub fn cmd_synth(
    count: usize,
    contrast: Option<Range<f64>>,
    thickness: Option<Range<usize>>,
    settings: &Settings,
) -> i32 {
    let mut cfg = SynthConfig {
        block_size: settings.segmenter.basis.block_size(),
        ..SynthConfig::default()
    };
    if let Some(Range(lo, hi)) = contrast {
        cfg.contrast = (lo, hi);
    }
    if let Some(Range(lo, hi)) = thickness {
        cfg.thickness = (lo, hi);
    }
    let items = match synthesize(count, settings.seed, &cfg) {
        Ok(items) => items,
        Err(e) => {
            eprintln!("scseg: {e}");
            return EXIT_CONFIG;
        }
    };
    let width = count.saturating_sub(1).to_string().len().max(4);
    for (i, item) in items.iter().enumerate() {
        let name = format!("synth_{i:0width$}");
        let written = io::save_image(&item.image, &settings.out.join(format!("{name}.png")))
            .and_then(|_| io::save_mask(&item.truth, &settings.out.join(format!("{name}_gt.png"))));
        if let Err(e) = written {
            eprintln!("scseg: {e}");
            return EXIT_FAILURE;
        }
    }
    EXIT_OK
}

/// Background `P alpha` and the signed sparse layer `s = f - P alpha` of one block.
#[derive(Debug, Clone)]
pub struct Layers {
    pub background: Vec<f64>,
    pub sparse: Vec<f64>,
    pub frequencies: Vec<(usize, usize)>,
    pub alpha: Vec<f64>,
}

pub fn decompose_layers(image: &crate::ImagePlane, seg: &Segmenter) -> Result<Layers> {
    let n = seg.block_size();
    if image.width() != n || image.height() != n {
        return Err(Error::Input(format!(
            "decompose needs one {n}x{n} block, got {}x{}",
            image.width(),
            image.height()
        )));
    }
    let r = seg.decompose_block(image.pixels())?;
    let background: Vec<f64> = r.background(seg.basis());
    let sparse = image
        .pixels()
        .iter()
        .zip(&background)
        .map(|(f, b)| f - b)
        .collect();
    Ok(Layers {
        background,
        sparse,
        frequencies: seg.basis().frequencies().to_vec(),
        alpha: r.alpha,
    })
}

/// Writes `<stem>_background.png` (clamped), `<stem>_sparse.png` (s + 128,
/// clamped) and `<stem>_alpha.txt` (`index u v value` per line).
pub fn cmd_decompose(input: &Path, settings: &Settings) -> i32 {
    let seg = match make_segmenter(settings.segmenter) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let outcome = (|| -> Result<()> {
        let image = io::load_image(input)?;
        let layers = decompose_layers(&image, &seg)?;
        let n = seg.block_size();
        let name = stem(input);
        io::save_gray(&layers.background, n, n, &settings.out.join(format!("{name}_background.png")))?;
        let shifted: Vec<f64> = layers.sparse.iter().map(|v| v + 128.0).collect();
        io::save_gray(&shifted, n, n, &settings.out.join(format!("{name}_sparse.png")))?;
        let mut text = String::from("# index u v alpha\n");
        for (k, ((u, v), a)) in layers.frequencies.iter().zip(&layers.alpha).enumerate() {
            text += &format!("{k} {u} {v} {a:.9}\n");
        }
        let path = settings.out.join(format!("{name}_alpha.txt"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    })();
    match outcome {
        Ok(()) => EXIT_OK,
        Err(e) => {
            report_failure(input, &e);
            EXIT_FAILURE
        }
    }
}
