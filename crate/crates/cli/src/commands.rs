use std::fmt;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use gendiag::io::{read_distance_table, read_ndjson, traceplot_svg, write_ndjson, write_trace_csv};
use gendiag::sampler::RNG_ALGORITHM;
use gendiag::{
    build_chain_set, mh_run, run_generalized_diagnostic, synthetic_discrete_chains, traceplot_table, ChainSet,
    DiagnosticOptions, DiagnosticReport, DistanceSpec, DrawState, MapChoice, ScenarioSpec, SyntheticKind,
    SyntheticSpec, TourStart,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::{DiagArgs, MapArg, MapInputArgs, SimulateArgs, TraceplotArgs};

/// Bad flags, unreadable or malformed input. Exit status 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(g) = cause.downcast_ref::<gendiag::Error>() {
            return match g.root() {
                gendiag::Error::Io(_) => 1,
                _ => 2,
            };
        }
    }
    1
}

pub fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var("GENDIAG_THREADS") else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            return Err(usage(format!(
                "GENDIAG_THREADS must be a positive integer, got {raw:?}"
            )))
        }
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the thread pool")
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a temporary file in the same directory, then renames, so
/// readers never see a half-written artifact.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("moving output into place at {}", path.display()))
}

fn read_json(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: invalid JSON: {e}", path.display())))
}

/// Fully resolved description of a simulation, as stored in the sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SimSpec {
    Sampler(ScenarioSpec),
    Synthetic(SyntheticSpec),
}

#[derive(Serialize)]
struct Meta<'a> {
    tool: String,
    seed: u64,
    rng: &'static str,
    spec: &'a SimSpec,
    spec_sha256: String,
    output_sha256: String,
}

fn synthetic_default(name: &str, seed: u64) -> Option<SyntheticSpec> {
    let kind = match name {
        "synthetic-binary" => SyntheticKind::BinaryMatrix {
            rows: 8,
            cols: 8,
            flip_rate: 0.05,
        },
        "synthetic-partition" => SyntheticKind::Partition {
            n_obs: 20,
            n_clusters: 4,
            resample_rate: 0.05,
        },
        _ => return None,
    };
    Some(SyntheticSpec {
        kind,
        chains: 4,
        n_iter: 1000,
        seed,
        trapped: false,
    })
}

fn named_spec(name: &str, seed: u64) -> Result<SimSpec> {
    if let Some(s) = ScenarioSpec::builtin(name, seed) {
        return Ok(SimSpec::Sampler(s));
    }
    if let Some(s) = synthetic_default(name, seed) {
        return Ok(SimSpec::Synthetic(s));
    }
    Err(usage(format!(
        "unknown scenario {name:?}; expected m1, m2, m3, m4, synthetic-binary or synthetic-partition"
    )))
}

fn parse<T: for<'de> Deserialize<'de>>(v: Value, path: &Path) -> Result<T> {
    serde_json::from_value(v).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Accepts a sidecar, a tagged spec, a bare synthetic or sampler spec, or
/// `{"name": ..., "seed": ...}` naming a builtin.
fn spec_from_file(path: &Path) -> Result<SimSpec> {
    let mut v = read_json(path)?;
    if let Some(inner) = v.get_mut("spec") {
        v = inner.take();
    }
    let Some(obj) = v.as_object() else {
        return Err(usage(format!("{}: expected a JSON object", path.display())));
    };
    if obj.contains_key("sampler") || obj.contains_key("synthetic") {
        parse(v, path)
    } else if obj.contains_key("kind") {
        Ok(SimSpec::Synthetic(parse(v, path)?))
    } else if obj.contains_key("target") {
        Ok(SimSpec::Sampler(parse(v, path)?))
    } else if let Some(name) = obj.get("name").and_then(Value::as_str) {
        let seed = obj.get("seed").and_then(Value::as_u64).unwrap_or(0);
        named_spec(name, seed)
    } else {
        Err(usage(format!("{}: not a recognisable scenario", path.display())))
    }
}

fn resolve_sim_spec(a: &SimulateArgs) -> Result<SimSpec> {
    let mut spec = match (&a.scenario, &a.config) {
        (Some(name), None) => named_spec(name, a.seed.unwrap_or(0))?,
        (None, Some(path)) => spec_from_file(path)?,
        _ => return Err(usage("simulate needs exactly one of --scenario or --config")),
    };
    match &mut spec {
        SimSpec::Sampler(s) => {
            if a.chains.is_some() || a.trapped {
                return Err(usage("--chains and --trapped apply to synthetic scenarios only"));
            }
            if let Some(seed) = a.seed {
                s.seed = seed;
            }
            if let Some(n) = a.iters {
                s.n_iter = n;
            }
        }
        SimSpec::Synthetic(s) => {
            if let Some(seed) = a.seed {
                s.seed = seed;
            }
            if let Some(n) = a.iters {
                s.n_iter = n;
            }
            if let Some(k) = a.chains {
                s.chains = k;
            }
            s.trapped |= a.trapped;
        }
    }
    Ok(spec)
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let spec = resolve_sim_spec(a)?;
    let (cs, seed) = match &spec {
        SimSpec::Sampler(s) => {
            s.validate()?;
            (mh_run(s)?, s.seed)
        }
        SimSpec::Synthetic(s) => (synthetic_discrete_chains(s)?, s.seed),
    };
    let mut buf = Vec::new();
    write_ndjson(&mut buf, cs.chains())?;
    let spec_json = serde_json::to_string(&spec)?;
    let meta = Meta {
        tool: format!("gendiag {}", env!("CARGO_PKG_VERSION")),
        seed,
        rng: RNG_ALGORITHM,
        spec: &spec,
        spec_sha256: sha256_hex(spec_json.as_bytes()),
        output_sha256: sha256_hex(&buf),
    };
    let mut meta_json = serde_json::to_vec_pretty(&meta)?;
    meta_json.push(b'\n');
    write_atomic(&a.output, &buf)?;
    let mut meta_path = a.output.as_os_str().to_owned();
    meta_path.push(".meta.json");
    write_atomic(Path::new(&meta_path), &meta_json)
}

struct Prepared {
    cs: ChainSet,
    distance: DistanceSpec,
    map: MapChoice,
    input_sha256: String,
    extra: serde_json::Map<String, Value>,
}

fn mh_model(a: &MapInputArgs) -> Result<ScenarioSpec> {
    let spec = match (&a.scenario, &a.config) {
        (Some(name), None) => named_spec(name, 0)?,
        (None, Some(path)) => spec_from_file(path)?,
        _ => {
            return Err(usage(
                "--distance mh needs the target and proposal via --scenario or --config",
            ))
        }
    };
    match spec {
        SimSpec::Sampler(s) => {
            s.validate()?;
            Ok(s)
        }
        SimSpec::Synthetic(_) => Err(usage("--distance mh needs a sampler scenario, not a synthetic one")),
    }
}

fn prepare(a: &MapInputArgs) -> Result<Prepared> {
    let bytes = fs::read(&a.input).map_err(|e| usage(format!("cannot read {}: {e}", a.input.display())))?;
    let chains = read_ndjson(BufReader::new(&bytes[..])).with_context(|| format!("reading {}", a.input.display()))?;
    for c in &chains {
        if a.burn_in >= c.len() {
            return Err(usage(format!(
                "burn-in of {} leaves no draws in chain {} ({} draws)",
                a.burn_in,
                c.chain_id,
                c.len()
            )));
        }
    }
    let cs = build_chain_set(chains.into_iter().map(|c| c.without_burn_in(a.burn_in)).collect())?;

    let mut extra = serde_json::Map::new();
    extra.insert("burn_in".into(), a.burn_in.into());
    let distance = match a.distance.as_str() {
        "euclidean" => DistanceSpec::Euclidean,
        "hamming" => DistanceSpec::Hamming,
        "mh" => {
            let model = mh_model(a)?;
            extra.insert(
                "mh_model".into(),
                serde_json::json!({ "target": model.target, "proposal": model.proposal }),
            );
            DistanceSpec::metropolis_hastings(model.target, model.proposal)
        }
        other => match other.strip_prefix("table:") {
            Some(path) => {
                let raw = fs::read(path).map_err(|e| usage(format!("cannot read distance table {path}: {e}")))?;
                extra.insert("table_sha256".into(), sha256_hex(&raw).into());
                let table = read_distance_table(BufReader::new(&raw[..]), cs.n_unique())
                    .with_context(|| format!("reading distance table {path}"))?;
                DistanceSpec::UserTable(Arc::new(table))
            }
            None => {
                return Err(usage(format!(
                    "unknown distance {other:?}; expected euclidean, hamming, mh or table:PATH"
                )))
            }
        },
    };

    let map = match a.map {
        MapArg::Lanfear => {
            let path = a
                .reference
                .as_ref()
                .ok_or_else(|| usage("--map lanfear needs --reference"))?;
            let reference: DrawState = parse(read_json(path)?, path)?;
            MapChoice::Lanfear { reference }
        }
        MapArg::Nn => {
            if a.reference.is_some() {
                return Err(usage("--reference applies to --map lanfear only"));
            }
            let start = match (a.start_index, a.random_start) {
                (_, Some(seed)) => TourStart::Random { seed },
                (Some(i), None) => TourStart::Index(i),
                (None, None) => TourStart::Index(0),
            };
            MapChoice::NearestNeighbor { start }
        }
    };
    Ok(Prepared {
        cs,
        distance,
        map,
        input_sha256: sha256_hex(&bytes),
        extra,
    })
}

fn run(p: &Prepared, opts: DiagnosticOptions) -> Result<DiagnosticReport> {
    Ok(run_generalized_diagnostic(&p.cs, &p.distance, &p.map, opts)?)
}

fn write_plots(report: &DiagnosticReport, csv: Option<&Path>, svg: Option<&Path>) -> Result<()> {
    let rows = traceplot_table(&report.mapped);
    if let Some(path) = csv {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &rows)?;
        write_atomic(path, &buf)?;
    }
    if let Some(path) = svg {
        let title = format!(
            "Generalized traceplot ({} distance, {} map)",
            report.config.distance, report.config.map.kind
        );
        write_atomic(path, traceplot_svg(&rows, &title, "mapped value").as_bytes())?;
    }
    Ok(())
}

pub fn diag(a: &DiagArgs) -> Result<()> {
    let p = prepare(&a.input)?;
    let opts = DiagnosticOptions {
        ess: !a.no_ess,
        psrf: !a.no_psrf,
    };
    let report = run(&p, opts)?;

    let mut json = serde_json::to_value(&report)?;
    let config = json["config"].as_object_mut().expect("report config is an object");
    config.insert("input_sha256".into(), p.input_sha256.clone().into());
    config.extend(p.extra.clone());
    let mut out = serde_json::to_vec_pretty(&json)?;
    out.push(b'\n');
    match &a.output {
        Some(path) => write_atomic(path, &out)?,
        None => std::io::stdout().lock().write_all(&out)?,
    }
    write_plots(&report, a.csv.as_deref(), a.svg.as_deref())
}

pub fn traceplot(a: &TraceplotArgs) -> Result<()> {
    let p = prepare(&a.input)?;
    let report = run(
        &p,
        DiagnosticOptions {
            ess: false,
            psrf: false,
        },
    )?;
    if a.csv.is_none() && a.svg.is_none() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &traceplot_table(&report.mapped))?;
        std::io::stdout().lock().write_all(&buf)?;
        return Ok(());
    }
    write_plots(&report, a.csv.as_deref(), a.svg.as_deref())
}
