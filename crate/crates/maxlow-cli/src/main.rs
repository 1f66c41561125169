//! `maxlow` — guaranteed lower bounds for 2D Maxwell eigenvalues.
//!
//! Verbs: `constants` (mesh constants report), `kappa` (hypercircle
//! constant per level), `evp` (discrete eigenvalues per level), `bounds`
//! (the full lower-bound table), and `validate` (self-check property
//! suite).  Exit codes: 0 success, 1 failed validation properties,
//! 2 configuration/input errors, 3 mesh/solver failures.

mod output;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use maxlow::constants::compute_constants;
use maxlow::eigenbounds::{
    divergence_free_dimension, maxwell_evp, reference_eigenvalues, run_mesh_pipeline,
    run_pipeline, select_eigenvalues, C1DivChoice, Domain, PipelineOptions,
};
use maxlow::galerkin::kappa_h;
use maxlow::mesh::{read_mesh, red_refine, Triangulation};
use maxlow::Error;

#[derive(Parser)]
#[command(
    name = "maxlow",
    version,
    about = "Guaranteed lower bounds for 2D Maxwell eigenvalues with lowest-order edge elements",
    after_help = "Log verbosity is controlled by the MAXLOW_LOG environment variable \
                  (error, warn, info, debug, trace)."
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Compute the stability-constant report of a mesh
    Constants(CommonOpts),
    /// Compute the hypercircle constant per refinement level
    Kappa(CommonOpts),
    /// Compute discrete Maxwell eigenvalues per refinement level
    Evp(CommonOpts),
    /// Compute the guaranteed eigenvalue lower-bound table
    Bounds(CommonOpts),
    /// Run the self-check property suite
    Validate(CommonOpts),
}

impl Cmd {
    fn opts(&self) -> &CommonOpts {
        match self {
            Cmd::Constants(o) | Cmd::Kappa(o) | Cmd::Evp(o) | Cmd::Bounds(o)
            | Cmd::Validate(o) => o,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DomainArg {
    Square,
    Lshape,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Square => Domain::Square,
            DomainArg::Lshape => Domain::Lshape,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    Json,
    Md,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum NormArg {
    /// Patch-diameter normalization (reproduces the published tables)
    Diam,
    /// Element-size normalization
    #[value(name = "hT", alias = "ht")]
    Ht,
}

#[derive(Clone, Copy, Debug)]
struct LevelRange {
    start: u32,
    end: u32,
}

fn parse_levels(s: &str) -> Result<LevelRange, String> {
    let (a, b) = if let Some((a, b)) = s.split_once("..=") {
        (a, b)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b)
    } else {
        (s, s)
    };
    let start: u32 = a.trim().parse().map_err(|_| format!("invalid level '{}'", a.trim()))?;
    let end: u32 = b.trim().parse().map_err(|_| format!("invalid level '{}'", b.trim()))?;
    if start > end {
        return Err(format!("empty level range {start}..{end}"));
    }
    Ok(LevelRange { start, end })
}

#[derive(Clone, Copy, Debug)]
enum C1DivArg {
    Formula,
    Override(f64),
}

fn parse_c1div(s: &str) -> Result<C1DivArg, String> {
    if s.eq_ignore_ascii_case("formula") {
        return Ok(C1DivArg::Formula);
    }
    let num = s.strip_prefix("table-override:").unwrap_or(s);
    let v: f64 = num
        .parse()
        .map_err(|_| format!("c1div must be 'formula' or a positive number, got '{s}'"))?;
    if !(v > 0.0 && v.is_finite()) {
        return Err(format!("c1div override must be a positive finite number, got {v}"));
    }
    Ok(C1DivArg::Override(v))
}

#[derive(Args)]
struct CommonOpts {
    /// Stock domain to run on
    #[arg(long, value_enum, conflicts_with = "mesh")]
    domain: Option<DomainArg>,

    /// Mesh file (mesh2d v1) to run on instead of a stock domain
    #[arg(long, value_name = "PATH")]
    mesh: Option<PathBuf>,

    /// Refinement level N or inclusive range A..B (file meshes: number of
    /// red refinements of the input, starting at 0)
    #[arg(long, value_parser = parse_levels, value_name = "N|A..B")]
    levels: Option<LevelRange>,

    /// Number of eigenvalues per level (evp, bounds)
    #[arg(short, default_value_t = 1, value_name = "N")]
    k: usize,

    /// Output format
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,

    /// Patch Poincaré normalization entering the perturbation constant
    #[arg(long = "tilde-c-normalization", value_enum, default_value_t = NormArg::Diam)]
    tilde_c_normalization: NormArg,

    /// Divergence-part constant: 'formula' or a positive override value
    #[arg(long, default_value = "formula", value_parser = parse_c1div)]
    c1div: C1DivArg,

    /// Worker threads (default: one per logical CPU)
    #[arg(long, value_name = "N")]
    threads: Option<usize>,

    /// Output file (stdout when omitted)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    /// Include wall-clock timings in the output
    #[arg(long)]
    timings: bool,

    /// Flip the sign of the curl coupling inside the dual-system audit
    /// (fault-injection hook for testing the validator itself)
    #[arg(long, hide = true)]
    inject_sign_error: bool,
}

/// Mesh source resolved from `--domain` / `--mesh`.
enum Source {
    Stock(Domain),
    File { name: String, base: Triangulation },
}

impl Source {
    fn name(&self) -> String {
        match self {
            Source::Stock(d) => d.name().to_string(),
            Source::File { name, .. } => name.clone(),
        }
    }

    /// Meshes for an inclusive level range: stock domains are generated per
    /// level, file meshes red-refined `level` times.
    fn meshes(&self, levels: LevelRange) -> Vec<(u32, Triangulation)> {
        match self {
            Source::Stock(d) => (levels.start..=levels.end).map(|lv| (lv, d.mesh(lv))).collect(),
            Source::File { base, .. } => {
                let mut out = Vec::new();
                let mut current = base.clone();
                let mut at = 0u32;
                for lv in levels.start..=levels.end {
                    while at < lv {
                        current = red_refine(&current);
                        at += 1;
                    }
                    out.push((lv, current.clone()));
                }
                out
            }
        }
    }
}

impl CommonOpts {
    fn source(&self, default_domain: Option<Domain>) -> Result<Source, Error> {
        match (&self.domain, &self.mesh) {
            (Some(d), None) => Ok(Source::Stock((*d).into())),
            (None, Some(p)) => {
                let base = read_mesh(p)?;
                let name = p
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "mesh".into());
                Ok(Source::File { name, base })
            }
            (None, None) => default_domain.map(Source::Stock).ok_or_else(|| {
                Error::Config("one of --domain or --mesh is required".into())
            }),
            (Some(_), Some(_)) => unreachable!("clap rejects --domain with --mesh"),
        }
    }

    /// Level range with a per-verb stock default; file meshes default to
    /// the unrefined input.
    fn levels_or(&self, source: &Source, stock_default: LevelRange) -> LevelRange {
        self.levels.unwrap_or(match source {
            Source::Stock(_) => stock_default,
            Source::File { .. } => LevelRange { start: 0, end: 0 },
        })
    }

    fn pipeline_options(&self) -> Result<PipelineOptions, Error> {
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        Ok(PipelineOptions {
            k: self.k,
            c1div: match self.c1div {
                C1DivArg::Formula => C1DivChoice::Formula,
                C1DivArg::Override(v) => C1DivChoice::Override(v),
            },
            tilde_c_ht: self.tilde_c_normalization == NormArg::Ht,
        })
    }
}

fn exit_code_of(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Parse { .. } => 2,
        Error::Mesh(_) | Error::Solver(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("MAXLOW_LOG")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.command.opts().threads {
        if n == 0 {
            eprintln!("error: config error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: config error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_of(&e))
        }
    }
}

fn run(cmd: &Cmd) -> Result<u8, Error> {
    match cmd {
        Cmd::Constants(o) => cmd_constants(o),
        Cmd::Kappa(o) => cmd_kappa(o),
        Cmd::Evp(o) => cmd_evp(o),
        Cmd::Bounds(o) => cmd_bounds(o),
        Cmd::Validate(o) => cmd_validate(o),
    }
}

fn cmd_constants(o: &CommonOpts) -> Result<u8, Error> {
    let src = o.source(None)?;
    let levels = o.levels_or(&src, LevelRange { start: 3, end: 3 });
    let mut entries = Vec::new();
    for (lv, mesh) in src.meshes(levels) {
        log::info!("constants: level {lv} ({} triangles)", mesh.num_triangles());
        entries.push((lv, compute_constants(&mesh)?));
    }
    output::emit_constants(o, &src.name(), &entries)?;
    Ok(0)
}

fn cmd_kappa(o: &CommonOpts) -> Result<u8, Error> {
    let src = o.source(None)?;
    let levels = o.levels_or(&src, LevelRange { start: 1, end: 3 });
    let mut rows = Vec::new();
    for (lv, mesh) in src.meshes(levels) {
        log::info!("kappa: level {lv} ({} triangles)", mesh.num_triangles());
        let res = kappa_h(&mesh)?;
        rows.push(output::KappaRow {
            level: lv,
            h_max: mesh.h_max(),
            kappa: res.kappa,
            mu: res.mu,
            iterations: res.iterations,
        });
    }
    output::emit_kappa(o, &src.name(), &rows)?;
    Ok(0)
}

fn cmd_evp(o: &CommonOpts) -> Result<u8, Error> {
    if o.k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let src = o.source(None)?;
    let levels = o.levels_or(&src, LevelRange { start: 1, end: 3 });
    let references = match &src {
        Source::Stock(d) => reference_eigenvalues(*d),
        Source::File { .. } => Vec::new(),
    };
    let mut rows = Vec::new();
    for (lv, mesh) in src.meshes(levels) {
        log::info!("evp: level {lv} ({} triangles)", mesh.num_triangles());
        let dim = divergence_free_dimension(&mesh);
        if o.k > dim {
            return Err(Error::Config(format!(
                "requested {} eigenvalues but the divergence-free space has dimension {dim} \
                 at level {lv}",
                o.k
            )));
        }
        let raw = maxwell_evp(&mesh, (o.k + 6).max(12).min(dim))?;
        let lambda = if references.is_empty() {
            raw.eigenvalues.iter().copied().take(o.k).collect()
        } else {
            select_eigenvalues(&raw.eigenvalues, &references, o.k)
        };
        rows.push(output::EvpRow { level: lv, h_max: mesh.h_max(), lambda });
    }
    output::emit_evp(o, &src.name(), o.k, &references, &rows)?;
    Ok(0)
}

fn cmd_bounds(o: &CommonOpts) -> Result<u8, Error> {
    let src = o.source(None)?;
    let levels = o.levels_or(&src, LevelRange { start: 1, end: 3 });
    let opts = o.pipeline_options()?;
    let mut table = match &src {
        Source::Stock(d) => run_pipeline(*d, levels.start..=levels.end, &opts)?,
        Source::File { name, base } => {
            run_mesh_pipeline(name.clone(), base, levels.start..=levels.end, &opts)?
        }
    };
    if !o.timings {
        for row in &mut table.rows {
            row.timings = None;
        }
    }
    output::emit_bounds(o, &table)?;
    Ok(0)
}

fn cmd_validate(o: &CommonOpts) -> Result<u8, Error> {
    let src = o.source(Some(Domain::Square))?;
    let levels = o.levels_or(&src, LevelRange { start: 2, end: 2 });
    let mesh = src
        .meshes(LevelRange { start: levels.start, end: levels.start })
        .pop()
        .expect("nonempty level range")
        .1;
    log::info!("validate: {} triangles", mesh.num_triangles());
    let report = validate::run_suite(&mesh, o.inject_sign_error)?;
    let passed = report.passed;
    output::emit_validate(o, &src.name(), &report)?;
    Ok(if passed { 0 } else { 1 })
}
