use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use gaprich::continuum::{
    continuum_bands, continuum_repeat_gap, continuum_sieve_gap, repeat_trace, sieve_trace, transfer_ode,
    CellPotential, ContinuumWord,
};
use gaprich::dimension::box_dimension_estimate;
use gaprich::gap::DEFAULT_DEPTH_CAP;
use gaprich::spectrum::band_edges;
use gaprich::thin::{
    build_gap_cover, check_stages, decay_experiment, run_stages, traces_to_csv, CoverOptions, StageOptions,
    StageState,
};
use gaprich::{BandSet, EnergyWindow, Error, FamilySpec, Interval, Word};

#[derive(Parser)]
#[command(name = "gaprich", version, about = "Band spectra, gap covers and thin-spectrum experiments")]
struct Cli {
    /// Worker threads for parallel sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Band edges of a periodic word.
    Bands(BandsArgs),
    /// Gap cover, measure decay and staged construction.
    Thinspec(ThinArgs),
    /// Box-counting slope of a band list or of the last stage.
    Dimension(DimensionArgs),
    /// Continuum bands and coupling searches.
    Continuum(ContinuumArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct Common {
    /// JSON file holding any of the subcommand's options; flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct BandsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Word as JSON (`{"block_size":..,"letters":..}` or `[2,0]`) or `2,0`.
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    word: Option<Value>,
    /// Coupling λ.
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    couplings: Option<Value>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct ThinArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// `full_line`, `sieve:K`, `polymer:N` or a JSON family.
    #[arg(long, value_parser = json_or_list)]
    family: Option<Value>,
    /// Base word (default `0`).
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    word: Option<Value>,
    /// Energy window K as `lo,hi[,lo,hi..]` or JSON pairs.
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    window: Option<Value>,
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    couplings: Option<Value>,
    /// Increasing N values (default: m·t doubled three times).
    #[arg(long, value_parser = json_or_list)]
    n_list: Option<Value>,
    /// Run this many stages instead of a single decay experiment.
    #[arg(long)]
    stages: Option<usize>,
    #[arg(long)]
    grid_step: Option<f64>,
    /// Perturbation size (initial ε with `--stages`).
    #[arg(long)]
    eps: Option<f64>,
    /// Initial η with `--stages`.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    depth_cap: Option<usize>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct DimensionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// Band CSV or stage JSON.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Box sizes.
    #[arg(long, value_parser = json_or_list)]
    eps: Option<Value>,
    /// Restrict to this window (stage input defaults to its window).
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    window: Option<Value>,
}

#[derive(Args, Serialize, Deserialize, Default)]
#[serde(default)]
struct ContinuumArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: Common,
    /// JSON list of cells `{"a":..,"samples":[..]}`.
    #[arg(long, value_parser = json_or_list)]
    word: Option<Value>,
    /// Energy range `lo,hi` for the band scan.
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    e_range: Option<Value>,
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    couplings: Option<Value>,
    /// Scan points for the band search.
    #[arg(long)]
    grid: Option<usize>,
    /// Repeated constant cell query `a,n,E`.
    #[arg(long, value_parser = json_or_list, allow_hyphen_values = true)]
    repeat_gap: Option<Value>,
    /// Sieve query `{"psi":cell,"a":..,"energy":..}`.
    #[arg(long, value_parser = json_or_list)]
    sieve_gap: Option<Value>,
    #[arg(long)]
    lambda_max: Option<f64>,
}

/// JSON if it parses, else a comma separated list of numbers, else a string.
fn json_or_list(s: &str) -> Result<Value, String> {
    if let Ok(v) = serde_json::from_str::<Value>(s) {
        return Ok(v);
    }
    let nums: Result<Vec<f64>, _> = s.split(',').map(|t| t.trim().parse::<f64>()).collect();
    match nums {
        Ok(v) => Ok(serde_json::json!(v)),
        Err(_) => Ok(Value::String(s.to_string())),
    }
}

enum Failure {
    Validation(String),
    Numeric(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Numeric(e)
        }
    }
}

type Run<T> = Result<T, Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

/// Overlays the explicitly given flags on the config file.
fn merged<T: Serialize + DeserializeOwned>(args: T, config: Option<&Path>) -> Run<T> {
    let mut base = match config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| invalid(format!("{}: {e}", p.display())))?;
            match serde_json::from_str::<Value>(&text) {
                Ok(Value::Object(m)) => m,
                Ok(_) => return Err(invalid("config must be a JSON object")),
                Err(e) => return Err(invalid(format!("config: {e}"))),
            }
        }
        None => Default::default(),
    };
    let Value::Object(flags) = serde_json::to_value(&args).map_err(|e| invalid(e.to_string()))? else {
        unreachable!("option structs serialize to objects")
    };
    if let Some(k) = base.keys().find(|k| !flags.contains_key(*k)) {
        return Err(invalid(format!("config: unknown key {k}")));
    }
    for (k, v) in flags {
        if !v.is_null() {
            base.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| invalid(format!("config: {e}")))
}

fn numbers(v: &Value, what: &str) -> Run<Vec<f64>> {
    match v {
        Value::Number(n) => Ok(vec![n.as_f64().unwrap_or(f64::NAN)]),
        Value::Array(a) => a
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| invalid(format!("{what}: expected numbers"))))
            .collect(),
        _ => Err(invalid(format!("{what}: expected a number list"))),
    }
}

fn parse_word(v: &Value) -> Run<Word> {
    match v {
        Value::Object(_) => serde_json::from_value(v.clone()).map_err(|e| invalid(format!("word: {e}"))),
        _ => Ok(Word::from_values(&numbers(v, "word")?)?),
    }
}

fn parse_window(v: &Value) -> Run<EnergyWindow> {
    let flat: Vec<f64> = match v {
        Value::Array(a) if a.iter().all(Value::is_array) => {
            let pairs: Vec<Interval> =
                serde_json::from_value(v.clone()).map_err(|e| invalid(format!("window: {e}")))?;
            pairs.iter().flat_map(|p| [p.lo, p.hi]).collect()
        }
        _ => numbers(v, "window")?,
    };
    if flat.is_empty() || flat.len() % 2 != 0 {
        return Err(invalid("window: expected lo,hi pairs"));
    }
    Ok(EnergyWindow::new(flat.chunks(2).map(|c| (c[0], c[1])).collect())?)
}

fn parse_family(v: &Value) -> Run<FamilySpec> {
    let fam = match v {
        Value::String(s) => {
            let (name, arg) = s.split_once(':').unwrap_or((s.as_str(), ""));
            let arg = || arg.parse::<usize>().map_err(|_| invalid(format!("family: bad argument in {s}")));
            match name {
                "full_line" => FamilySpec::full_line(1.0),
                "sieve" => FamilySpec::k_sieve(arg()?, 1.0),
                "polymer" => FamilySpec::polymer(arg()?, 1.0),
                _ => return Err(invalid(format!("unknown family {s}"))),
            }
        }
        _ => serde_json::from_value(v.clone()).map_err(|e| invalid(format!("family: {e}")))?,
    };
    fam.validate()?;
    Ok(fam)
}

fn couplings(v: Option<&Value>) -> Run<Vec<f64>> {
    let c = v.map(|v| numbers(v, "couplings")).transpose()?.unwrap_or_else(|| vec![1.0]);
    if c.is_empty() || c.iter().any(|x| !x.is_finite()) {
        return Err(invalid("couplings must be finite and nonempty"));
    }
    Ok(c)
}

struct Out(PathBuf);

impl Out {
    fn new(dir: Option<&PathBuf>) -> Run<Self> {
        let dir = dir.cloned().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).map_err(|e| invalid(format!("{}: {e}", dir.display())))?;
        Ok(Out(dir))
    }

    fn write(&self, name: &str, text: &str) -> Run<()> {
        let p = self.0.join(name);
        fs::write(&p, text).map_err(|e| invalid(format!("{}: {e}", p.display())))
    }

    fn json<T: Serialize>(&self, name: &str, v: &T) -> Run<()> {
        let mut s = serde_json::to_string_pretty(v).map_err(|e| invalid(e.to_string()))?;
        s.push('\n');
        self.write(name, &s)
    }
}

#[derive(Serialize)]
struct BandsSummary {
    q: usize,
    block_size: usize,
    coupling: f64,
    total_measure: f64,
    bands: Vec<Interval>,
    seed: Option<u64>,
}

fn cmd_bands(a: BandsArgs) -> Run<()> {
    let cfg = a.common.config.clone();
    let a: BandsArgs = merged(a, cfg.as_deref())?;
    let word = parse_word(a.word.as_ref().ok_or_else(|| invalid("--word is required"))?)?;
    let lambda = match couplings(a.couplings.as_ref())?.as_slice() {
        [l] => *l,
        _ => return Err(invalid("bands takes a single coupling")),
    };
    let bands = band_edges(&word, lambda);
    let out = Out::new(a.common.out.as_ref())?;
    out.write("bands.csv", &bands.to_csv())?;
    out.json(
        "bands.json",
        &BandsSummary {
            q: word.len(),
            block_size: word.block_size(),
            coupling: lambda,
            total_measure: bands.measure(),
            bands: bands.bands().to_vec(),
            seed: a.common.seed,
        },
    )
}

#[derive(Serialize)]
struct DecaySummary {
    m: usize,
    t: usize,
    p: usize,
    n_list: Vec<usize>,
    couplings: Vec<f64>,
    c0: Option<f64>,
    c0_by_lambda: Vec<Option<f64>>,
    c0_reference: f64,
    l_min_estimate: f64,
    seed: Option<u64>,
}

fn cmd_thinspec(a: ThinArgs) -> Run<()> {
    let cfg = a.common.config.clone();
    let a: ThinArgs = merged(a, cfg.as_deref())?;
    let family = a.family.as_ref().map(parse_family).transpose()?.unwrap_or(FamilySpec::full_line(1.0));
    let word = match &a.word {
        Some(v) => parse_word(v)?,
        None => Word::from_values(&[0.0])?,
    };
    let lambdas = couplings(a.couplings.as_ref())?;
    let cover = CoverOptions {
        grid_step: a.grid_step.unwrap_or(CoverOptions::default().grid_step),
        depth_cap: a.depth_cap.unwrap_or(DEFAULT_DEPTH_CAP),
        ..Default::default()
    };
    if !(cover.grid_step > 0.0) {
        return Err(invalid("grid step must be positive"));
    }
    let out = Out::new(a.common.out.as_ref())?;

    if let Some(stages) = a.stages {
        let opts = StageOptions {
            cover,
            ..Default::default()
        };
        let states = run_stages(
            &word,
            a.eps.unwrap_or(0.9),
            stages,
            &family,
            &lambdas,
            a.eta.unwrap_or(0.25),
            &opts,
        )?;
        out.json("stages.json", &states)?;
        // Re-read what was written and check it from scratch.
        let text = fs::read_to_string(out.0.join("stages.json")).map_err(|e| invalid(e.to_string()))?;
        let back: Vec<StageState> = serde_json::from_str(&text).map_err(|e| invalid(e.to_string()))?;
        let bad = check_stages(&back);
        if !bad.is_empty() {
            return Err(Failure::Numeric(Error::DegenerateInput(bad.join("; "))));
        }
        return Ok(());
    }

    let window = parse_window(a.window.as_ref().ok_or_else(|| invalid("--window is required"))?)?;
    let eps = a.eps.unwrap_or(1.0);
    let gc = build_gap_cover(&word, &window, eps, &lambdas, &family, &cover)?;
    let n_list: Vec<usize> = match &a.n_list {
        Some(v) => numbers(v, "n-list")?
            .into_iter()
            .map(|x| {
                if x >= 1.0 && x.fract() == 0.0 {
                    Ok(x as usize)
                } else {
                    Err(invalid(format!("n-list: {x} is not a positive integer")))
                }
            })
            .collect::<Run<_>>()?,
        None => (0..4).map(|i| gc.min_n() << i).collect(),
    };
    let r = decay_experiment(&gc, &word, &window, &n_list, &lambdas)?;
    out.write("decay.csv", &traces_to_csv(&r.traces))?;
    out.json("cover.json", &gc)?;
    out.json(
        "decay.json",
        &DecaySummary {
            m: gc.m(),
            t: gc.t,
            p: gc.p,
            n_list,
            couplings: lambdas,
            c0: r.c0,
            c0_by_lambda: r.c0_by_lambda,
            c0_reference: r.c0_reference,
            l_min_estimate: r.l_min_estimate,
            seed: a.common.seed,
        },
    )
}

fn cmd_dimension(a: DimensionArgs) -> Run<()> {
    let cfg = a.common.config.clone();
    let a: DimensionArgs = merged(a, cfg.as_deref())?;
    let path = a.input.as_ref().ok_or_else(|| invalid("--input is required"))?;
    let text = fs::read_to_string(path).map_err(|e| invalid(format!("{}: {e}", path.display())))?;
    let (set, mut window) = match serde_json::from_str::<Vec<StageState>>(&text) {
        Ok(states) => {
            let last = states.last().ok_or_else(|| invalid("stage list is empty"))?;
            let lambda = last.measures.first().map_or(1.0, |m| m.lambda);
            (band_edges(&last.word, lambda).bands().to_vec(), last.window.clone())
        }
        Err(_) => (BandSet::from_csv(&text)?.bands().to_vec(), EnergyWindow::empty()),
    };
    if set.is_empty() {
        return Err(invalid("band list is empty"));
    }
    if let Some(w) = &a.window {
        window = parse_window(w)?;
    }
    let eps = match &a.eps {
        Some(v) => numbers(v, "eps")?,
        None => (1..=4).map(|k| 10f64.powi(-k)).collect(),
    };
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) {
        return Err(invalid("need at least two positive box sizes"));
    }
    let d = box_dimension_estimate(&set, &window, &eps);
    let out = Out::new(a.common.out.as_ref())?;
    let mut csv = String::from("eps,count\n");
    for (e, c) in d.eps.iter().zip(&d.counts) {
        csv.push_str(&format!("{e},{c}\n"));
    }
    out.write("dimension.csv", &csv)?;
    out.json("dimension.json", &d)
}

#[derive(Serialize)]
struct GapResult {
    kind: &'static str,
    a: f64,
    n: Option<u32>,
    energy: f64,
    lambda: f64,
    trace: f64,
}

#[derive(Serialize)]
struct ContinuumSummary {
    coupling: f64,
    total_measure: Option<f64>,
    bands: Option<Vec<Interval>>,
    gaps: Vec<GapResult>,
    seed: Option<u64>,
}

#[derive(Deserialize)]
struct SieveQuery {
    psi: CellPotential,
    a: f64,
    energy: f64,
}

fn cmd_continuum(a: ContinuumArgs) -> Run<()> {
    let cfg = a.common.config.clone();
    let a: ContinuumArgs = merged(a, cfg.as_deref())?;
    let lambda = match couplings(a.couplings.as_ref())?.as_slice() {
        [l] => *l,
        _ => return Err(invalid("continuum takes a single coupling")),
    };
    let out = Out::new(a.common.out.as_ref())?;
    let mut summary = ContinuumSummary {
        coupling: lambda,
        total_measure: None,
        bands: None,
        gaps: Vec::new(),
        seed: a.common.seed,
    };
    if let Some(w) = &a.word {
        let word: ContinuumWord = match w {
            Value::Array(_) => serde_json::from_value(serde_json::json!({ "cells": w })),
            _ => serde_json::from_value(w.clone()),
        }
        .map_err(|e| invalid(format!("word: {e}")))?;
        let range = numbers(a.e_range.as_ref().ok_or_else(|| invalid("--e-range is required"))?, "e-range")?;
        let [lo, hi] = range[..] else {
            return Err(invalid("e-range: expected lo,hi"));
        };
        let bands = continuum_bands(&word, lo, hi, lambda, a.grid.unwrap_or(400))?;
        out.write("continuum_bands.csv", &bands.to_csv())?;
        summary.total_measure = Some(bands.measure());
        summary.bands = Some(bands.bands().to_vec());
    }
    let lambda_max = a.lambda_max.unwrap_or(10.0);
    if let Some(q) = &a.repeat_gap {
        let q = numbers(q, "repeat-gap")?;
        let [cell, n, e] = q[..] else {
            return Err(invalid("repeat-gap: expected a,n,E"));
        };
        if !(n >= 1.0 && n.fract() == 0.0 && n <= u32::MAX as f64) {
            return Err(invalid("repeat-gap: n must be a positive integer"));
        }
        let n = n as u32;
        let l = continuum_repeat_gap(cell, n, e, lambda_max)?;
        summary.gaps.push(GapResult {
            kind: "repeat",
            a: cell,
            n: Some(n),
            energy: e,
            lambda: l,
            trace: repeat_trace(cell, n, e, l),
        });
    }
    if let Some(q) = &a.sieve_gap {
        let q: SieveQuery = serde_json::from_value(q.clone()).map_err(|e| invalid(format!("sieve-gap: {e}")))?;
        let l = continuum_sieve_gap(&q.psi, q.a, q.energy, lambda_max)?;
        let m = transfer_ode(&q.psi, q.energy, l);
        summary.gaps.push(GapResult {
            kind: "sieve",
            a: q.a,
            n: None,
            energy: q.energy,
            lambda: l,
            trace: sieve_trace(&m, q.a, q.energy, l),
        });
    }
    out.json("continuum.json", &summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if n == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let res = match cli.command {
        Command::Bands(a) => cmd_bands(a),
        Command::Thinspec(a) => cmd_thinspec(a),
        Command::Dimension(a) => cmd_dimension(a),
        Command::Continuum(a) => cmd_continuum(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(e)) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(3)
        }
    }
}
