//! Command-line experiment runner. Every subcommand writes its outputs plus
//! a [`RunManifest`] that is enough to replay the run byte for byte.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::cone::{build_cone, ConeRep};
use crate::dynamics::{
    deform_scan, fixation_experiment, invariant_measure_test, scan_row, FixationOptions, OrbitOptions, ScanOptions,
    ScanRow, Verdict,
};
use crate::folding::{
    builtin_template, catalog, catalog_factors, chebyshev, fold_order, preimage_count, solve_fold, table_names,
    verify_factorization, FoldTemplate, PreimageOptions, SolveOptions,
};
use crate::maps::{membership_check, ExactMap, FloatMap, MembershipMode, SimplexMap};
use crate::scalar::{format_rational, Rational};
use crate::sampler::{deform_many, SamplerConfig, DEFAULT_ALPHA};
use crate::simplex::sample_uniform;

#[derive(Parser, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[command(name = "simplexfold", version, about = "Stochastic polynomial maps of the simplex and their dynamics")]
pub struct Cli {
    /// Master seed; drawn from entropy and recorded when absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true, env = "SIMPLEXFOLD_JOBS")]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Subcommand, Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Write the catalog maps and verify their factorizations and composition identities.
    Tables {
        #[arg(long, default_value = "tables")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Perturb tri:f2 before verifying (exercises the failure path).
        #[arg(long, hide = true)]
        corrupt: bool,
    },
    /// Build the Pólya cone K_N(Δⁿ, k) with its extreme rays.
    ConeBuild {
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: u32,
        #[arg(long = "N", default_value_t = 8)]
        level: u32,
        #[arg(long, default_value = "cone.json")]
        out: PathBuf,
    },
    /// Solve a folding-map template by coefficient matching.
    SolveFold {
        /// Template JSON file.
        #[arg(long, conflicts_with = "builtin")]
        template: Option<PathBuf>,
        /// `interval:d`, `tri:two-fold` or `tri:nine-fold`.
        #[arg(long)]
        builtin: Option<String>,
        #[arg(long, default_value_t = 200)]
        seeds: usize,
        #[arg(long, default_value_t = 5.0)]
        radius: f64,
        #[arg(long, default_value = "solutions.json")]
        out: PathBuf,
    },
    /// Check membership, factorization, boundary behavior and preimage counts of a map.
    VerifyFold {
        #[arg(long, conflicts_with = "name")]
        map: Option<PathBuf>,
        /// Catalog name such as `cheb:3` or `tri:f9`.
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 50)]
        targets: usize,
        #[arg(long, default_value = "verify.json")]
        out: PathBuf,
    },
    /// Sample ε-deformations of a map from a cone.
    DeformSample {
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        cone: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value = "deform")]
        out: PathBuf,
    },
    /// Deformation scan around the two-fold of the triangle.
    Fig6 {
        #[arg(long, default_value_t = 0.05)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long = "N", default_value_t = 8)]
        level: u32,
        /// Prebuilt cone; built on the fly otherwise.
        #[arg(long)]
        cone: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = DEFAULT_ALPHA)]
        alpha: f64,
        #[arg(long, default_value = "fig6")]
        out: PathBuf,
    },
    /// Fixation times of the nine-fold near the origin.
    Fig7 {
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        /// Side of the square of starting points.
        #[arg(long, default_value_t = 0.01)]
        region: f64,
        #[arg(long, default_value_t = 1e-9)]
        absorb_tol: f64,
        #[arg(long, default_value_t = 100_000)]
        max_iters: usize,
        #[arg(long, default_value_t = 40)]
        bins: usize,
        #[arg(long, default_value = "fig7")]
        out: PathBuf,
    },
    /// Kolmogorov–Smirnov test of the arcsine law under Chebyshev folds.
    MeasureTest {
        #[arg(long, value_delimiter = ',', default_values_t = vec![2u32, 3, 4])]
        d: Vec<u32>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value = "measure.json")]
        out: PathBuf,
    },
    /// Count interior preimages at random or given targets.
    PreimageCount {
        #[arg(long, conflicts_with = "name")]
        map: Option<PathBuf>,
        #[arg(long)]
        name: Option<String>,
        #[arg(long, default_value_t = 50)]
        targets: usize,
        /// Single target, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        point: Option<Vec<f64>>,
        #[arg(long, default_value = "preimages.csv")]
        out: PathBuf,
    },
    /// Rerun a manifest and check that every output hash matches.
    Replay {
        manifest: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Tables { .. } => "tables",
            Command::ConeBuild { .. } => "cone-build",
            Command::SolveFold { .. } => "solve-fold",
            Command::VerifyFold { .. } => "verify-fold",
            Command::DeformSample { .. } => "deform-sample",
            Command::Fig6 { .. } => "fig6",
            Command::Fig7 { .. } => "fig7",
            Command::MeasureTest { .. } => "measure-test",
            Command::PreimageCount { .. } => "preimage-count",
            Command::Replay { .. } => "replay",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    /// Full argument set with the seed filled in.
    pub args: Cli,
    pub master_seed: u64,
    pub version: String,
    /// Output path to hex SHA-256.
    pub outputs: BTreeMap<String, String>,
}

/// What a subcommand produced.
#[derive(Debug, Default)]
pub struct RunOutput {
    pub files: Vec<PathBuf>,
    pub manifest: Option<PathBuf>,
    /// Checks that failed; a nonempty list makes the process exit nonzero.
    pub failures: Vec<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Floats in CSV output: 17 significant digits, enough to round-trip.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        x.to_string()
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))
}

fn slug(name: &str) -> String {
    name.replace(':', "_")
}

/// Manifest location: `manifest.json` inside an output directory, or
/// `<file>.manifest.json` next to a single output file.
fn manifest_path(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join("manifest.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

fn load_map(path: &Path) -> Result<(Option<ExactMap>, FloatMap)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let v: Value = serde_json::from_str(&text)?;
    if let Ok(m) = ExactMap::from_json_value(&v) {
        let f = m.to_float();
        return Ok((Some(m), f));
    }
    Ok((None, FloatMap::from_json_value(&v)?))
}

fn resolve_map(map: &Option<PathBuf>, name: &Option<String>) -> Result<(Option<String>, Option<ExactMap>, FloatMap)> {
    match (map, name) {
        (Some(p), _) => {
            let (e, f) = load_map(p)?;
            Ok((None, e, f))
        }
        (None, Some(n)) => {
            let m = catalog(n)?;
            let f = m.to_float();
            Ok((Some(n.clone()), Some(m), f))
        }
        (None, None) => bail!("one of --map or --name is required"),
    }
}

fn load_cone(path: &Path) -> Result<ConeRep> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ConeRep::from_json_value(&serde_json::from_str(&text)?)?)
}

/// Random interior targets bounded away from the boundary.
fn interior_targets(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let y = sample_uniform(n, 1, &mut rng).remove(0).coords;
        let slack = 1.0 - y.iter().sum::<f64>();
        if y.iter().all(|&v| v > 1e-3) && slack > 1e-3 {
            out.push(y);
        }
    }
    out
}

/// Parses and runs a command line, with a rayon pool sized by `--jobs`.
pub fn run(cli: Cli) -> Result<RunOutput> {
    match cli.jobs {
        Some(j) if j > 0 => {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(j).build()?;
            pool.install(|| dispatch(cli))
        }
        _ => dispatch(cli),
    }
}

fn dispatch(mut cli: Cli) -> Result<RunOutput> {
    if let Command::Replay { manifest } = &cli.command {
        return replay(manifest);
    }
    let seed = *cli.seed.get_or_insert_with(|| rand::rng().random());
    let (mut out, is_dir) = match &cli.command {
        Command::Tables { out, format, corrupt } => (cmd_tables(out, *format, *corrupt)?, true),
        Command::ConeBuild { n, k, level, out } => (cmd_cone_build(*n, *k, *level, out)?, false),
        Command::SolveFold { template, builtin, seeds, radius, out } => {
            (cmd_solve_fold(template, builtin, *seeds, *radius, out)?, false)
        }
        Command::VerifyFold { map, name, targets, out } => (cmd_verify_fold(map, name, *targets, seed, out)?, false),
        Command::DeformSample { map, cone, eps, count, alpha, out } => {
            (cmd_deform_sample(map, cone, *eps, *count, *alpha, seed, out)?, true)
        }
        Command::Fig6 { eps, count, level, cone, trials, alpha, out } => {
            (cmd_fig6(*eps, *count, *level, cone, *trials, *alpha, seed, out)?, true)
        }
        Command::Fig7 { count, region, absorb_tol, max_iters, bins, out } => {
            let opts =
                FixationOptions { side: *region, count: *count, absorb_tol: *absorb_tol, max_iters: *max_iters, master_seed: seed };
            (cmd_fig7(&opts, *bins, out)?, true)
        }
        Command::MeasureTest { d, samples, out } => (cmd_measure_test(d, *samples, seed, out)?, false),
        Command::PreimageCount { map, name, targets, point, out } => {
            (cmd_preimage_count(map, name, *targets, point, seed, out)?, false)
        }
        Command::Replay { .. } => unreachable!(),
    };
    let target = match &cli.command {
        Command::Tables { out, .. }
        | Command::ConeBuild { out, .. }
        | Command::SolveFold { out, .. }
        | Command::VerifyFold { out, .. }
        | Command::DeformSample { out, .. }
        | Command::Fig6 { out, .. }
        | Command::Fig7 { out, .. }
        | Command::MeasureTest { out, .. }
        | Command::PreimageCount { out, .. } => out.clone(),
        Command::Replay { .. } => unreachable!(),
    };
    let mut outputs = BTreeMap::new();
    for f in &out.files {
        outputs.insert(f.to_string_lossy().into_owned(), sha256_file(f)?);
    }
    let manifest = RunManifest {
        subcommand: cli.command.name().into(),
        args: cli.clone(),
        master_seed: seed,
        version: env!("CARGO_PKG_VERSION").into(),
        outputs,
    };
    let path = manifest_path(&target, is_dir);
    write_json(&path, &serde_json::to_value(&manifest)?)?;
    out.manifest = Some(path);
    Ok(out)
}

fn replay(path: &Path) -> Result<RunOutput> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text)?;
    if matches!(manifest.args.command, Command::Replay { .. }) {
        bail!("a manifest cannot replay another replay");
    }
    let mut out = dispatch(manifest.args.clone())?;
    for (file, hash) in &manifest.outputs {
        let now = sha256_file(Path::new(file))?;
        if &now != hash {
            out.failures.push(format!("{file}: hash {now} differs from recorded {hash}"));
        }
    }
    Ok(out)
}

#[derive(Serialize)]
struct Check {
    check: String,
    subject: String,
    pass: bool,
    detail: String,
}

fn catalog_maps(corrupt: bool) -> Result<BTreeMap<String, ExactMap>> {
    let mut maps = BTreeMap::new();
    for name in table_names() {
        let mut m = catalog(&name)?;
        if corrupt && name == "tri:f2" {
            let mut polys = m.polys().to_vec();
            polys[0].add_term(crate::polynomial::Exponent(vec![1, 0]), Rational::from_integer(1.into()));
            m = SimplexMap::new(2, m.k(), polys, name.clone())?;
        }
        maps.insert(name, m);
    }
    Ok(maps)
}

/// Factorization and composition checks over a set of catalog maps.
pub fn verify_tables(maps: &BTreeMap<String, ExactMap>) -> Result<Vec<(String, String, bool, String)>> {
    let mut checks = Vec::new();
    for (name, m) in maps {
        let claims = catalog_factors(name)?;
        let rep = verify_factorization(m, &claims)?;
        checks.push(("factorization".into(), name.clone(), rep.ok, serde_json::to_string(&rep)?));
    }
    let same = |a: &ExactMap, b: &ExactMap| a.polys() == b.polys();
    for d in 1..=12u32 {
        for e in 1..=12 / d {
            let lhs = chebyshev(d).compose(&chebyshev(e))?;
            let ok = same(&lhs, &chebyshev(d * e));
            checks.push(("composition".into(), format!("cheb:{d}∘cheb:{e}=cheb:{}", d * e), ok, String::new()));
        }
    }
    let get = |n: &str| maps.get(n).ok_or_else(|| anyhow!("missing {n}"));
    let f2 = get("tri:f2")?;
    let f22 = f2.compose(f2)?;
    checks.push(("composition".into(), "tri:f2∘tri:f2=tri:f4".into(), same(&f22, get("tri:f4")?), String::new()));
    let f222 = f2.compose(&f22)?;
    checks.push(("composition".into(), "tri:f2∘tri:f2∘tri:f2=tri:f8".into(), same(&f222, get("tri:f8")?), String::new()));
    Ok(checks)
}

fn cmd_tables(out: &Path, format: Format, corrupt: bool) -> Result<RunOutput> {
    fs::create_dir_all(out)?;
    let maps = catalog_maps(corrupt)?;
    let mut files = Vec::new();
    for (name, m) in &maps {
        let p = out.join(format!("{}.json", slug(name)));
        write_json(&p, &m.to_json_value())?;
        files.push(p);
    }
    let checks = verify_tables(&maps)?;
    let failures: Vec<String> =
        checks.iter().filter(|c| !c.2).map(|c| format!("{} failed for {}", c.0, c.1)).collect();
    let rows: Vec<Check> = checks
        .into_iter()
        .map(|(check, subject, pass, detail)| Check { check, subject, pass, detail })
        .collect();
    let report = match format {
        Format::Json => {
            let p = out.join("verification.json");
            write_json(&p, &json!({ "all_pass": failures.is_empty(), "checks": rows }))?;
            p
        }
        Format::Csv => {
            let p = out.join("verification.csv");
            let mut w = csv_writer(&p)?;
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            p
        }
    };
    files.push(report);
    Ok(RunOutput { files, manifest: None, failures })
}

fn cmd_cone_build(n: usize, k: u32, level: u32, out: &Path) -> Result<RunOutput> {
    let cone = build_cone(n, k, level)?;
    eprintln!("cone (n={n}, k={k}, N={level}): {} rows, {} extreme rays", cone.ineq.len(), cone.rays.len());
    write_json(out, &cone.to_json_value())?;
    Ok(RunOutput { files: vec![out.to_path_buf()], ..Default::default() })
}

fn cmd_solve_fold(template: &Option<PathBuf>, builtin: &Option<String>, seeds: usize, radius: f64, out: &Path) -> Result<RunOutput> {
    let tpl = match (template, builtin) {
        (Some(p), _) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            FoldTemplate::from_json_value(&serde_json::from_str(&text)?)?
        }
        (None, Some(b)) => builtin_template(b)?,
        (None, None) => bail!("one of --template or --builtin is required"),
    };
    let opts = SolveOptions { seeds, radius, ..SolveOptions::default() };
    let report = solve_fold(&tpl, &opts)?;
    let solutions: Vec<Value> = report
        .solutions
        .iter()
        .map(|s| {
            json!({
                "params": s.params,
                "exact": s.exact.as_ref().map(|e| e.iter().map(format_rational).collect::<Vec<_>>()),
                "residual_norm": s.residual_norm,
                "map": s.exact_map.as_ref().map_or_else(|| s.map.to_json_value(), |m| m.to_json_value()),
            })
        })
        .collect();
    eprintln!("{}: {} solution(s)", tpl.name, solutions.len());
    write_json(out, &json!({ "template": tpl.to_json_value(), "stats": report.stats, "solutions": solutions }))?;
    Ok(RunOutput { files: vec![out.to_path_buf()], ..Default::default() })
}

/// Images of random boundary points stay on the boundary.
fn boundary_check(f: &FloatMap, count: usize, seed: u64) -> (usize, f64) {
    let n = f.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut bad = 0;
    for x in sample_uniform(n, count, &mut rng) {
        let mut x = x.coords;
        let face = rng.random_range(0..=n);
        if face < n {
            x[face] = 0.0;
        } else {
            let s: f64 = x.iter().sum();
            x.iter_mut().for_each(|v| *v /= s);
        }
        let y: Vec<f64> = f.all_polys().iter().map(|p| p.eval_f64(&x)).collect();
        let gap = y.iter().copied().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        worst = worst.max(gap);
        if gap > 1e-10 {
            bad += 1;
        }
    }
    (bad, worst)
}

fn cmd_verify_fold(map: &Option<PathBuf>, name: &Option<String>, targets: usize, seed: u64, out: &Path) -> Result<RunOutput> {
    let (name, exact, f) = resolve_map(map, name)?;
    let member = membership_check(&f, MembershipMode::default())?;
    let factorization = match (&name, &exact) {
        (Some(n), Some(m)) => Some(verify_factorization(m, &catalog_factors(n)?)?),
        _ => None,
    };
    let expected = name.as_deref().map(fold_order).transpose()?;
    let counts: Vec<usize> = {
        use rayon::prelude::*;
        let ts = interior_targets(f.n(), targets, seed);
        ts.par_iter().map(|y| preimage_count(&f, y, &PreimageOptions::default()).count).collect()
    };
    let mut hist = BTreeMap::new();
    for c in &counts {
        *hist.entry(c.to_string()).or_insert(0usize) += 1;
    }
    let constant = counts.windows(2).all(|w| w[0] == w[1]);
    let (boundary_bad, boundary_worst) = boundary_check(&f, 1000, seed ^ 1);
    let mut failures = Vec::new();
    if !member.member {
        failures.push("map is not a member of PMaps".into());
    }
    if factorization.as_ref().is_some_and(|r| !r.ok) {
        failures.push("factorization does not verify".into());
    }
    if !constant || expected.is_some_and(|d| counts.iter().any(|&c| c != d)) {
        failures.push(format!("preimage counts {hist:?}"));
    }
    write_json(
        out,
        &json!({
            "label": f.label(),
            "member": member.member,
            "membership_witnesses": member.witnesses(),
            "factorization": factorization,
            "expected_order": expected,
            "preimage_histogram": hist,
            "boundary_violations": boundary_bad,
            "boundary_worst": boundary_worst,
            "ok": failures.is_empty(),
        }),
    )?;
    Ok(RunOutput { files: vec![out.to_path_buf()], manifest: None, failures })
}

fn sampler_config(cone: ConeRep, alpha: f64, seed: u64, eps: f64) -> Result<SamplerConfig> {
    let mut cfg = SamplerConfig::new(cone, seed, eps)?;
    cfg.dirichlet_alpha = alpha;
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_deform_sample(map: &Path, cone: &Path, eps: f64, count: usize, alpha: f64, seed: u64, out: &Path) -> Result<RunOutput> {
    let (_, f_star) = load_map(map)?;
    let cfg = sampler_config(load_cone(cone)?, alpha, seed, eps)?;
    fs::create_dir_all(out)?;
    let draws = deform_many(&f_star, &cfg, count);
    let maps_path = out.join("samples.jsonl");
    let table_path = out.join("samples.csv");
    let mut lines = String::new();
    let mut w = csv_writer(&table_path)?;
    w.write_record(["index", "t", "l2_distance", "error"])?;
    for (i, d) in draws.iter().enumerate() {
        match d {
            Ok(d) => {
                lines.push_str(&serde_json::to_string(&d.map.to_json_value())?);
                lines.push('\n');
                w.write_record([i.to_string(), fmt_f64(d.t), fmt_f64(d.distance), String::new()])?;
            }
            Err(e) => {
                lines.push_str("null\n");
                w.write_record([i.to_string(), String::new(), String::new(), e.to_string()])?;
            }
        }
    }
    w.flush()?;
    fs::write(&maps_path, lines)?;
    Ok(RunOutput { files: vec![maps_path, table_path], ..Default::default() })
}

fn scan_record(kind: &str, row: &ScanRow) -> Vec<String> {
    vec![
        row.index.to_string(),
        kind.to_string(),
        fmt_f64(row.l2_distance),
        fmt_opt(row.min_abs_eig),
        match row.verdict {
            Some(Verdict::Green) => "green".into(),
            Some(Verdict::Red) => "red".into(),
            None => String::new(),
        },
        row.n_fixed_points.to_string(),
        row.per_point_min.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(";"),
        row.error.clone().unwrap_or_default(),
    ]
}

pub const FIG6_HEADER: [&str; 8] =
    ["index", "kind", "l2_distance", "min_abs_eig", "verdict", "n_fixed_points", "per_point_min_abs_eig", "error"];

#[allow(clippy::too_many_arguments)]
fn cmd_fig6(eps: f64, count: usize, level: u32, cone: &Option<PathBuf>, trials: usize, alpha: f64, seed: u64, out: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out)?;
    let f2 = catalog("tri:f2")?.to_float();
    let orbit = OrbitOptions::default();
    let scan = ScanOptions { trials, orbit, master_seed: seed, ..ScanOptions::default() };
    let csv_path = out.join("fig6.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(FIG6_HEADER)?;
    if count > 0 {
        let cone = match cone {
            Some(p) => load_cone(p)?,
            None => build_cone(2, 2, level)?,
        };
        let cfg = sampler_config(cone, alpha, seed, eps)?;
        let reference = scan_row(&f2, &f2, 0, &scan);
        w.write_record(scan_record("reference", &reference))?;
        let draws = deform_many(&f2, &cfg, count);
        let maps: Vec<FloatMap> = draws
            .iter()
            .map(|d| d.as_ref().map(|d| d.map.clone()).unwrap_or_else(|_| f2.clone()))
            .collect();
        let mut rows = deform_scan(&f2, &maps, &scan);
        for (i, (row, d)) in rows.iter_mut().zip(&draws).enumerate() {
            row.index = i + 1;
            if let Err(e) = d {
                *row = ScanRow { error: Some(e.to_string()), verdict: None, ..row.clone() };
            }
        }
        for row in &rows {
            w.write_record(scan_record("sample", row))?;
        }
    }
    w.flush()?;
    let meta_path = out.join("fig6.meta.json");
    write_json(
        &meta_path,
        &json!({
            "reference": "tri:f2",
            "eps": eps,
            "count": count,
            "N": level,
            "alpha": alpha,
            "trials": trials,
            "burn_in": orbit.burn_in,
            "window": orbit.window,
            "tol": orbit.tol,
            "green": "every trial orbit is non-periodic within the window (periods longer than the window count as green)",
            "red": "some trial orbit reaches a fixed point or a cycle of period at most the window",
            "min_abs_eig": "minimum over all fixed points of the smallest eigenvalue modulus",
        }),
    )?;
    Ok(RunOutput { files: vec![csv_path, meta_path], ..Default::default() })
}

/// Histogram of `ln t` over `bins` equal-width bins.
fn log_histogram(times: &[usize], bins: usize) -> Value {
    let logs: Vec<f64> = times.iter().filter(|&&t| t > 0).map(|&t| (t as f64).ln()).collect();
    if logs.is_empty() || bins == 0 {
        return json!({ "edges": [], "counts": [] });
    }
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for l in &logs {
        counts[(((l - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    json!({ "edges": edges, "counts": counts })
}

fn cmd_fig7(opts: &FixationOptions, bins: usize, out: &Path) -> Result<RunOutput> {
    fs::create_dir_all(out)?;
    let f9 = catalog("tri:f9")?;
    let res = fixation_experiment(&f9, opts);
    let csv_path = out.join("fixation.csv");
    let mut w = csv_writer(&csv_path)?;
    w.write_record(["x0_x", "x0_y", "vertex", "time"])?;
    let mut per_vertex = BTreeMap::new();
    for r in &res.records {
        let v = r.vertex.map(|v| v.to_string()).unwrap_or_default();
        *per_vertex.entry(if v.is_empty() { "none".to_string() } else { v.clone() }).or_insert(0usize) += 1;
        w.write_record([fmt_f64(r.x0[0]), fmt_f64(r.x0[1]), v, r.time.to_string()])?;
    }
    w.flush()?;
    let absorbed: Vec<usize> = res.records.iter().filter(|r| r.vertex.is_some()).map(|r| r.time).collect();
    let fit_path = out.join("fit.json");
    write_json(
        &fit_path,
        &json!({
            "map": "tri:f9",
            "fit": res.fit,
            "count": res.records.len(),
            "unabsorbed": res.unabsorbed,
            "absorbed_at": per_vertex,
            "log_time_histogram": log_histogram(&absorbed, bins),
        }),
    )?;
    if let Some(fit) = res.fit {
        eprintln!("lognormal fit: mu = {:.4}, sigma = {:.4} ({} absorbed)", fit.mu, fit.sigma, fit.count);
    }
    Ok(RunOutput { files: vec![csv_path, fit_path], ..Default::default() })
}

fn cmd_measure_test(ds: &[u32], samples: usize, seed: u64, out: &Path) -> Result<RunOutput> {
    if ds.contains(&0) {
        bail!("fold order must be at least 1");
    }
    let results: Vec<Value> = ds
        .iter()
        .map(|&d| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ d as u64);
            let ks = invariant_measure_test(d, samples, &mut rng);
            json!({ "d": d, "samples": samples, "ks": ks })
        })
        .collect();
    let critical = 1.36 / (samples.max(1) as f64).sqrt();
    write_json(out, &json!({ "critical_5pct": critical, "results": results }))?;
    Ok(RunOutput { files: vec![out.to_path_buf()], ..Default::default() })
}

fn cmd_preimage_count(
    map: &Option<PathBuf>,
    name: &Option<String>,
    targets: usize,
    point: &Option<Vec<f64>>,
    seed: u64,
    out: &Path,
) -> Result<RunOutput> {
    use rayon::prelude::*;
    let (_, _, f) = resolve_map(map, name)?;
    let ts = match point {
        Some(p) if p.len() != f.n() => bail!("--point has {} coordinates, the map has {}", p.len(), f.n()),
        Some(p) => vec![p.clone()],
        None => interior_targets(f.n(), targets, seed),
    };
    let counts: Vec<usize> = ts.par_iter().map(|y| preimage_count(&f, y, &PreimageOptions::default()).count).collect();
    let mut w = csv_writer(out)?;
    let mut header: Vec<String> = (1..=f.n()).map(|i| format!("y{i}")).collect();
    header.push("count".into());
    w.write_record(&header)?;
    for (y, c) in ts.iter().zip(&counts) {
        let mut rec: Vec<String> = y.iter().map(|v| fmt_f64(*v)).collect();
        rec.push(c.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(RunOutput { files: vec![out.to_path_buf()], ..Default::default() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for x in [0.1, 1.0 / 3.0, 2.5e-300, -7.0, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn manifest_locations() {
        assert_eq!(manifest_path(Path::new("out"), true), PathBuf::from("out/manifest.json"));
        assert_eq!(manifest_path(Path::new("c.json"), false), PathBuf::from("c.json.manifest.json"));
    }

    #[test]
    fn builtins_resolve() {
        assert!(builtin_template("interval:3").is_ok());
        assert!(builtin_template("tri:two-fold").is_ok());
        assert!(builtin_template("interval:0").is_err());
        assert!(builtin_template("nope").is_err());
    }

    #[test]
    fn tables_verify_and_detect_corruption() {
        let ok = verify_tables(&catalog_maps(false).unwrap()).unwrap();
        assert!(ok.iter().all(|c| c.2));
        let bad = verify_tables(&catalog_maps(true).unwrap()).unwrap();
        assert!(bad.iter().any(|c| !c.2));
    }

    #[test]
    fn histogram_counts_everything() {
        let h = log_histogram(&[1, 2, 3, 10, 100], 4);
        let counts: Vec<usize> = serde_json::from_value(h["counts"].clone()).unwrap();
        assert_eq!(counts.iter().sum::<usize>(), 5);
    }
}
