//! Batch front-end: reproducible simulation, estimation, testing, study grids
//! and pairwise dataset analysis, all emitting machine-readable outputs with a
//! manifest sufficient to replay the run.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use tailcausal::evt::{fit_gpd, CorrectionSpec, FitConfig, Link};
use tailcausal::ingest::{build_pair, comonotonicity_screen, load_csv, write_pair_csv, PairSpec};
use tailcausal::scm::{CausalConfiguration, ConfigLabel, Lscm, NoiseSpec};
use tailcausal::tail::{estimate, EstimatorConfig, KRule, PairedSample};
use tailcausal::{run_test, Error, TestSpec};

#[derive(Parser)]
#[command(name = "tailcausal", version, about = "Causal discovery between heavy-tailed variables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate replicates from a structural model file.
    Simulate(CommonOpts),
    /// Estimate the causal tail coefficients of a paired CSV.
    Estimate(CommonOpts),
    /// Permutation test for a directed effect on a paired CSV.
    Test(CommonOpts),
    /// Replicate study over causal configurations.
    Study(CommonOpts),
    /// Analyse real series pairs end to end.
    Pairs(CommonOpts),
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Structural model JSON (simulate/study).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Input data CSV (estimate/test: columns x1,x2,h…; pairs: date-indexed series).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Pair specification JSON array (pairs).
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample size per replicate.
    #[arg(long)]
    n: Option<usize>,
    /// Number of replicates.
    #[arg(long)]
    m: Option<usize>,
    /// Multiplier c in k = ⌊c·⌊n^0.4⌋⌋.
    #[arg(long = "k-mult")]
    k_mult: Option<f64>,
    /// Threshold quantile for the parametric variants.
    #[arg(long)]
    q: Option<f64>,
    /// Estimator variant: np | gpd | lgpd-pfc | lgpd-cf | lgpd-exp.
    #[arg(long)]
    variant: Option<String>,
    /// Permutation replicates.
    #[arg(short = 'R', long = "R")]
    replicates: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Fully resolved run configuration; recorded verbatim in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    seed: u64,
    n: usize,
    m: usize,
    k_mult: f64,
    q: f64,
    variant: String,
    replicates: usize,
    out: PathBuf,
    model: Option<PathBuf>,
    data: Option<PathBuf>,
    pairs: Option<PathBuf>,
    /// Study grid: configuration labels.
    configurations: Vec<String>,
    /// Study grid: noise families as (name, noise for x1/x2, noise for h).
    families: Vec<Family>,
    /// Study mode: "estimate" or "test".
    mode: String,
    /// Direct-effect weight override for study configurations A and D.
    beta21: Option<f64>,
    /// Comonotonicity warning threshold for pairs.
    screen_threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Family {
    name: String,
    noise_x: NoiseSpec,
    noise_h: NoiseSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            n: 10_000,
            m: 1,
            k_mult: 2.0,
            q: 0.9,
            variant: "np".into(),
            replicates: 500,
            out: PathBuf::from("out"),
            model: None,
            data: None,
            pairs: None,
            configurations: vec!["A".into(), "B".into(), "C".into(), "D".into()],
            families: vec![Family {
                name: "pareto2".into(),
                noise_x: NoiseSpec::Pareto { scale: 1.0, alpha: 2.0 },
                noise_h: NoiseSpec::Pareto { scale: 1.0, alpha: 2.0 },
            }],
            mode: "estimate".into(),
            beta21: None,
            screen_threshold: 0.99,
        }
    }
}

impl RunConfig {
    fn resolve(opts: &CommonOpts) -> Result<Self, Error> {
        let mut cfg = match &opts.config {
            Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
            None => RunConfig::default(),
        };
        if let Some(v) = opts.seed {
            cfg.seed = v;
        }
        if let Some(v) = opts.n {
            cfg.n = v;
        }
        if let Some(v) = opts.m {
            cfg.m = v;
        }
        if let Some(v) = opts.k_mult {
            cfg.k_mult = v;
        }
        if let Some(v) = opts.q {
            cfg.q = v;
        }
        if let Some(v) = &opts.variant {
            cfg.variant = v.clone();
        }
        if let Some(v) = opts.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = &opts.out {
            cfg.out = v.clone();
        }
        if let Some(v) = &opts.model {
            cfg.model = Some(v.clone());
        }
        if let Some(v) = &opts.data {
            cfg.data = Some(v.clone());
        }
        if let Some(v) = &opts.pairs {
            cfg.pairs = Some(v.clone());
        }
        Ok(cfg)
    }

    fn estimator(&self, variant: &str) -> Result<EstimatorConfig, Error> {
        let k = KRule::Power { c: self.k_mult, exponent: 0.4 };
        match variant {
            "np" => Ok(EstimatorConfig::nonparametric(k)),
            "gpd" => Ok(EstimatorConfig::gpd(k, self.q)),
            "lgpd-pfc" => Ok(EstimatorConfig::lgpd(k, self.q, CorrectionSpec::PostFit { epsilon: None })),
            "lgpd-cf" => Ok(EstimatorConfig::lgpd(k, self.q, CorrectionSpec::LinearConstraint)),
            "lgpd-exp" => Ok(EstimatorConfig::lgpd_exponential(k, self.q)),
            other => Err(Error::Input(format!(
                "unknown variant {other:?}; expected np, gpd, lgpd-pfc, lgpd-cf or lgpd-exp"
            ))),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn write_manifest(cfg: &RunConfig, command: &str, model_json: Option<&str>) -> Result<(), Error> {
    let manifest = serde_json::json!({
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": cfg,
        "model_hash": model_json.map(|j| format!("{:016x}", fnv1a64(j.as_bytes()))),
    });
    fs::create_dir_all(&cfg.out)?;
    fs::write(cfg.out.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

/// Replicate seed: a fixed stream per (base seed, replicate index).
fn replicate_seed(seed: u64, rep: u64) -> u64 {
    tailcausal::rng::SubstreamRng::new(seed).substream(rep).u64_at(0)
}

// --- simulate ---------------------------------------------------------------

fn cmd_simulate(cfg: &RunConfig) -> Result<bool, Error> {
    let model_path = cfg
        .model
        .as_ref()
        .ok_or_else(|| Error::Input("simulate needs --model".into()))?;
    let model_json = fs::read_to_string(model_path)?;
    let model = Lscm::from_json(&model_json)?;
    write_manifest(cfg, "simulate", Some(&model_json))?;
    for rep in 0..cfg.m {
        let seed = replicate_seed(cfg.seed, rep as u64);
        let sim = model.simulate(cfg.n, seed)?;
        let file = fs::File::create(cfg.out.join(format!("sample_{rep:03}.csv")))?;
        sim.write_csv(std::io::BufWriter::new(file))?;
    }
    Ok(false)
}

// --- estimate / test --------------------------------------------------------

/// Paired CSV reader: requires columns x1 and x2; every column whose name
/// starts with "h" becomes a confounder column, in header order.
fn read_paired_csv(path: &Path) -> Result<PairedSample, Error> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    let pos = |name: &str| headers.iter().position(|c| c == name);
    let i1 = pos("x1").ok_or_else(|| Error::Input("data CSV needs a column x1".into()))?;
    let i2 = pos("x2").ok_or_else(|| Error::Input("data CSV needs a column x2".into()))?;
    let hcols: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, c)| c.starts_with('h'))
        .map(|(i, _)| i)
        .collect();
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    let mut h: Vec<Vec<f64>> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let cell = |i: usize| -> Result<f64, Error> {
            record
                .get(i)
                .and_then(|c| c.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Input(format!("unparsable numeric cell in {}", path.display())))
        };
        x1.push(cell(i1)?);
        x2.push(cell(i2)?);
        if !hcols.is_empty() {
            h.push(hcols.iter().map(|&i| cell(i)).collect::<Result<_, _>>()?);
        }
    }
    PairedSample::new(x1, x2, if h.is_empty() { None } else { Some(h) })
}

fn cmd_estimate(cfg: &RunConfig) -> Result<bool, Error> {
    let data = cfg.data.as_ref().ok_or_else(|| Error::Input("estimate needs --data".into()))?;
    let s = read_paired_csv(data)?;
    let est = estimate(&s, &cfg.estimator(&cfg.variant)?)?;
    write_manifest(cfg, "estimate", None)?;
    let out = serde_json::to_string_pretty(&est)?;
    fs::write(cfg.out.join("estimate.json"), &out)?;
    println!("{out}");
    Ok(false)
}

fn cmd_test(cfg: &RunConfig) -> Result<bool, Error> {
    let data = cfg.data.as_ref().ok_or_else(|| Error::Input("test needs --data".into()))?;
    let s = read_paired_csv(data)?;
    let spec = TestSpec {
        estimator: cfg.estimator(&cfg.variant)?,
        replicates: cfg.replicates,
        seed: cfg.seed,
    };
    let result = run_test(&s, &spec)?;
    write_manifest(cfg, "test", None)?;
    let out = serde_json::to_string_pretty(&result)?;
    fs::write(cfg.out.join("test.json"), &out)?;
    println!("{out}");
    Ok(false)
}

// --- study ------------------------------------------------------------------

fn study_model(label: ConfigLabel, family: &Family, beta21: Option<f64>) -> Result<Lscm, Error> {
    let mut weights = CausalConfiguration::standard(label);
    if let Some(b) = beta21 {
        if matches!(label, ConfigLabel::A | ConfigLabel::D) {
            weights = CausalConfiguration::new(label, b, weights.beta1h, weights.beta2h)?;
        }
    }
    weights.to_lscm(family.noise_x.clone(), family.noise_h.clone())
}

fn histogram(values: &[f64], bins: usize) -> Vec<(f64, f64, usize)> {
    let lo = 0.0;
    let hi = 1.0;
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
        .iter()
        .enumerate()
        .map(|(b, &c)| (lo + b as f64 * width, lo + (b + 1) as f64 * width, c))
        .collect()
}

fn cmd_study(cfg: &RunConfig) -> Result<bool, Error> {
    write_manifest(cfg, "study", None)?;
    let estimator = cfg.estimator(&cfg.variant)?;
    let mut failures = false;
    let mut power_rows: Vec<(String, f64)> = Vec::new();
    for (ci, label_str) in cfg.configurations.iter().enumerate() {
        let label: ConfigLabel = label_str.parse()?;
        for (fi, family) in cfg.families.iter().enumerate() {
            let model = study_model(label, family, cfg.beta21)?;
            let cell = format!("{}_{}_{}", label_str, family.name, cfg.variant);
            let mut w = csv::Writer::from_path(cfg.out.join(format!("study_{cell}.csv")))?;
            let mut g12s: Vec<f64> = Vec::new();
            let mut g21s: Vec<f64> = Vec::new();
            let mut ps: Vec<f64> = Vec::new();
            if cfg.mode == "test" {
                w.write_record(["rep", "delta_obs", "p_mc", "error"])?;
            } else {
                w.write_record(["rep", "gamma12", "gamma21", "delta", "k12", "k21", "error"])?;
            }
            for rep in 0..cfg.m {
                let cell_stream = (ci as u64) << 40 | (fi as u64) << 32 | rep as u64;
                let seed = replicate_seed(cfg.seed, cell_stream);
                let result = model.simulate(cfg.n, seed).and_then(|sim| {
                    let with_h = cfg.variant.starts_with("lgpd");
                    let h = if with_h {
                        Some(sim.column("h").unwrap().iter().map(|&v| vec![v]).collect())
                    } else {
                        None
                    };
                    let s = PairedSample::new(
                        sim.column("x1").unwrap().to_vec(),
                        sim.column("x2").unwrap().to_vec(),
                        h,
                    )?;
                    if cfg.mode == "test" {
                        let spec = TestSpec {
                            estimator,
                            replicates: cfg.replicates,
                            seed: seed ^ 0x5bd1e995,
                        };
                        let r = run_test(&s, &spec)?;
                        Ok((r.delta_obs, r.p_value, 0.0, 0, 0))
                    } else {
                        let e = estimate(&s, &estimator)?;
                        Ok((e.gamma12, e.gamma21, e.delta, e.k12, e.k21))
                    }
                });
                match result {
                    Ok((a, b, c, k12, k21)) if cfg.mode == "test" => {
                        let _ = (c, k12, k21);
                        ps.push(b);
                        w.write_record([rep.to_string(), a.to_string(), b.to_string(), String::new()])?;
                    }
                    Ok((g12, g21, d, k12, k21)) => {
                        g12s.push(g12);
                        g21s.push(g21);
                        w.write_record([
                            rep.to_string(),
                            g12.to_string(),
                            g21.to_string(),
                            d.to_string(),
                            k12.to_string(),
                            k21.to_string(),
                            String::new(),
                        ])?;
                    }
                    Err(e) => {
                        failures = true;
                        let blank = if cfg.mode == "test" { 2 } else { 5 };
                        let mut row = vec![rep.to_string()];
                        row.extend(std::iter::repeat(String::new()).take(blank));
                        row.push(e.to_string());
                        w.write_record(&row)?;
                    }
                }
            }
            w.flush()?;
            if cfg.mode == "test" {
                // Uniform QQ data: sorted p against (i − ½)/m.
                let mut sorted = ps.clone();
                sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut qq = csv::Writer::from_path(cfg.out.join(format!("qq_{cell}.csv")))?;
                qq.write_record(["theoretical", "observed"])?;
                let m = sorted.len() as f64;
                for (i, p) in sorted.iter().enumerate() {
                    qq.write_record([((i as f64 + 0.5) / m).to_string(), p.to_string()])?;
                }
                qq.flush()?;
                let power = ps.iter().filter(|&&p| p <= 0.05).count() as f64 / ps.len().max(1) as f64;
                power_rows.push((cell, power));
            } else {
                let mut hist = csv::Writer::from_path(cfg.out.join(format!("hist_{cell}.csv")))?;
                hist.write_record(["bin_lo", "bin_hi", "count_gamma12", "count_gamma21"])?;
                let h12 = histogram(&g12s, 40);
                let h21 = histogram(&g21s, 40);
                for (b12, b21) in h12.iter().zip(&h21) {
                    hist.write_record([
                        b12.0.to_string(),
                        b12.1.to_string(),
                        b12.2.to_string(),
                        b21.2.to_string(),
                    ])?;
                }
                hist.flush()?;
            }
        }
    }
    if cfg.mode == "test" {
        let mut w = csv::Writer::from_path(cfg.out.join("power_summary.csv"))?;
        w.write_record(["cell", "power_at_0.05"])?;
        for (cell, power) in power_rows {
            w.write_record([cell, power.to_string()])?;
        }
        w.flush()?;
    }
    Ok(failures)
}

// --- pairs ------------------------------------------------------------------

const PAIR_COLUMNS: [&str; 14] = [
    "pair", "n", "k", "p_np", "p_pfc", "p_cf", "p_exp", "xi_h", "xi_h_se", "sigma1_x1",
    "sigma1_x1_se", "sigma1_x2", "sigma1_x2_se", "error",
];

fn json_or_null(v: Option<f64>) -> serde_json::Value {
    v.map_or(serde_json::Value::Null, |x| serde_json::json!(x))
}

fn analyse_pair(
    cfg: &RunConfig,
    s: &PairedSample,
    k: usize,
) -> Result<serde_json::Value, Error> {
    let variants = ["np", "lgpd-pfc", "lgpd-cf", "lgpd-exp"];
    let mut ps = Vec::new();
    for v in variants {
        let spec = TestSpec {
            estimator: cfg.estimator(v)?,
            replicates: cfg.replicates,
            seed: cfg.seed,
        };
        ps.push(run_test(s, &spec)?.p_value);
    }

    // Covariate tail: unconditional GPD shape of the aggregated confounder.
    let (xi_h, xi_h_se) = match &s.h {
        Some(rows) => {
            let hcol: Vec<f64> = rows.iter().map(|r| r[0]).collect();
            let fit = fit_gpd(&hcol, None, &FitConfig::unconditional(cfg.q))?;
            let se = fit.se.as_ref().and_then(|se| se.last().copied());
            (Some(fit.xi), se)
        }
        None => (None, None),
    };

    // Unconstrained scale slopes with standard errors, one fit per margin.
    let slope = |x: &[f64]| -> Result<(Option<f64>, Option<f64>), Error> {
        match &s.h {
            Some(rows) => {
                let fit = fit_gpd(x, Some(rows), &FitConfig { q: cfg.q, link: Link::Linear, correction: CorrectionSpec::None })?;
                let se = fit.raw_slope_se().map(|se| se[0]);
                Ok((Some(fit.scale.raw_slopes()[0]), se))
            }
            None => Ok((None, None)),
        }
    };
    let (s1, s1_se) = slope(&s.x1)?;
    let (s2, s2_se) = slope(&s.x2)?;

    Ok(serde_json::json!({
        "n": s.n(),
        "k": k,
        "p_np": ps[0],
        "p_pfc": ps[1],
        "p_cf": ps[2],
        "p_exp": ps[3],
        "xi_h": json_or_null(xi_h),
        "xi_h_se": json_or_null(xi_h_se),
        "sigma1_x1": json_or_null(s1),
        "sigma1_x1_se": json_or_null(s1_se),
        "sigma1_x2": json_or_null(s2),
        "sigma1_x2_se": json_or_null(s2_se),
    }))
}

fn cmd_pairs(cfg: &RunConfig) -> Result<bool, Error> {
    let data = cfg.data.as_ref().ok_or_else(|| Error::Input("pairs needs --data".into()))?;
    let pairs_path = cfg.pairs.as_ref().ok_or_else(|| Error::Input("pairs needs --pairs".into()))?;
    let store = load_csv(data)?;
    let specs: Vec<PairSpec> = serde_json::from_str(&fs::read_to_string(pairs_path)?)?;
    write_manifest(cfg, "pairs", None)?;

    let mut failures = false;
    let mut rows: Vec<serde_json::Value> = Vec::new();
    let mut w = csv::Writer::from_path(cfg.out.join("pairs_report.csv"))?;
    w.write_record(PAIR_COLUMNS)?;
    for spec in &specs {
        let name = format!("{}->{}", spec.upstream, spec.downstream);
        let outcome = (|| -> Result<serde_json::Value, Error> {
            let (s, dates, _report) = build_pair(&store, spec)?;
            let rho = comonotonicity_screen(&s)?;
            if rho.abs() > cfg.screen_threshold {
                eprintln!(
                    "warning: pair {name} is nearly comonotone (rank correlation {rho:.4}); \
                     direction may be unidentifiable"
                );
            }
            write_pair_csv(&cfg.out.join(format!("pair_{}_{}.csv", spec.upstream, spec.downstream)), &s, &dates)?;
            let k = KRule::Power { c: cfg.k_mult, exponent: 0.4 }.resolve(s.n())?;
            analyse_pair(cfg, &s, k)
        })();
        match outcome {
            Ok(mut row) => {
                row["pair"] = serde_json::json!(name);
                row["error"] = serde_json::Value::Null;
                w.write_record(PAIR_COLUMNS.iter().map(|c| match &row[*c] {
                    serde_json::Value::Null => String::new(),
                    serde_json::Value::String(s) => s.clone(),
                    other => other.to_string(),
                }))?;
                rows.push(row);
            }
            Err(e) => {
                failures = true;
                eprintln!("pair {name} failed: {e}");
                let mut row = vec![name.clone()];
                row.extend(std::iter::repeat(String::new()).take(PAIR_COLUMNS.len() - 2));
                row.push(e.to_string());
                w.write_record(&row)?;
                rows.push(serde_json::json!({ "pair": name, "error": e.to_string() }));
            }
        }
    }
    w.flush()?;
    fs::write(cfg.out.join("pairs_report.json"), serde_json::to_string_pretty(&rows)?)?;
    Ok(failures)
}

// ----------------------------------------------------------------------------

fn dispatch(command: &Command) -> Result<bool, Error> {
    let (opts, run): (&CommonOpts, fn(&RunConfig) -> Result<bool, Error>) = match command {
        Command::Simulate(o) => (o, cmd_simulate),
        Command::Estimate(o) => (o, cmd_estimate),
        Command::Test(o) => (o, cmd_test),
        Command::Study(o) => (o, cmd_study),
        Command::Pairs(o) => (o, cmd_pairs),
    };
    let cfg = RunConfig::resolve(opts)?;
    fs::create_dir_all(&cfg.out)?;
    run(&cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
