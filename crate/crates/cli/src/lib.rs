//! Batch commands behind the `twolocus` binary. Each command reads its inputs,
//! writes machine-readable output to the given writers and returns a library
//! error on failure; the binary maps errors to exit codes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twolocus::accuracy::{exact_values, run_table1, AccuracyOptions, Table1Report};
use twolocus::asymptotics::{
    first_order_series, pade_or_partial_sum, series_partial_sum, SeriesTable,
};
use twolocus::coalescent::{
    coupling_tally, estimate_q_mc, sim_c_rho, sim_d_inf, AncState, EventRecord, McEstimate, McModel,
};
use twolocus::error::{Error, ErrorFamily, Result};
use twolocus::gaussian::{sample_stationary, GaussianDraw, GaussianSeriesEngine, SamplerMode};
use twolocus::model::{binom, compositions, validate_params, ModelParams, SampleConfig};
use twolocus::moran::{
    check_fluctuations, check_lln, run_ensemble, MoranParams, MoranState, MIN_ENSEMBLE,
};
use twolocus::oracle::{ExactCache, SolveOptions};
use twolocus::rng::{chunks, stream_rng};

/// Largest number of configurations a single enumeration may produce.
pub const ENUMERATION_CAP: usize = 1_000_000;

/// Process exit code for an error family.
pub fn exit_code(family: ErrorFamily) -> i32 {
    match family {
        ErrorFamily::Validation => 3,
        ErrorFamily::Numerical => 4,
        ErrorFamily::Capacity => 5,
        ErrorFamily::ModelValidity => 6,
        ErrorFamily::Io => 7,
    }
}

pub fn family_name(family: ErrorFamily) -> &'static str {
    match family {
        ErrorFamily::Validation => "validation",
        ErrorFamily::Numerical => "numerical",
        ErrorFamily::Capacity => "capacity",
        ErrorFamily::ModelValidity => "model-validity",
        ErrorFamily::Io => "io",
    }
}

/// Single-line JSON description of an error.
pub fn error_json(err: &Error) -> String {
    serde_json::json!({
        "error": err.kind(),
        "family": family_name(err.family()),
        "message": err.to_string(),
    })
    .to_string()
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn load_params(path: &Path) -> Result<ModelParams> {
    let p: ModelParams = read_json(path)?;
    validate_params(&p)?;
    Ok(p)
}

/// Sample configuration as written in config files; omitted partial counts are zero.
#[derive(Debug, Clone, Deserialize)]
struct ConfigEntry {
    #[serde(default)]
    a: Option<Vec<u32>>,
    #[serde(default)]
    b: Option<Vec<u32>>,
    c: Vec<Vec<u32>>,
}

impl ConfigEntry {
    fn into_config(self) -> Result<SampleConfig> {
        let k = self.c.len();
        let l = self.c.first().map_or(0, |r| r.len());
        SampleConfig::new(
            self.a.unwrap_or_else(|| vec![0; k]),
            self.b.unwrap_or_else(|| vec![0; l]),
            self.c,
        )
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    One(ConfigEntry),
    Many(Vec<ConfigEntry>),
}

/// Read one configuration or an array of configurations.
pub fn load_configs(path: &Path) -> Result<Vec<SampleConfig>> {
    let entries = match read_json::<ConfigFile>(path)? {
        ConfigFile::One(e) => vec![e],
        ConfigFile::Many(v) => v,
    };
    if entries.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "{} holds no configurations",
            path.display()
        )));
    }
    entries.into_iter().map(ConfigEntry::into_config).collect()
}

/// Every fully observed configuration of size `n` for `k x l` haplotypes.
pub fn enumerate_full(k: usize, l: usize, n: u32) -> Result<Vec<SampleConfig>> {
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let cells = k * l;
    let count = binom(n + cells as u32 - 1, cells as u32 - 1);
    if count > ENUMERATION_CAP as f64 {
        return Err(Error::SizeLimit {
            what: "enumerated configurations",
            requested: count as usize,
            cap: ENUMERATION_CAP,
        });
    }
    compositions(n, cells)
        .into_iter()
        .map(|v| SampleConfig::full(v.chunks(l).map(<[u32]>::to_vec).collect()))
        .collect()
}

/// Output sink: a file when a path is given, otherwise the fallback writer.
pub fn sink<'a>(out: Option<&Path>, fallback: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(fallback),
    })
}

fn clamp(x: f64, enabled: bool) -> f64 {
    if enabled {
        x.clamp(0.0, 1.0)
    } else {
        x
    }
}

#[derive(Debug, Clone)]
pub struct QSpec {
    pub params: ModelParams,
    pub configs: Vec<SampleConfig>,
    pub rhos: Vec<f64>,
    pub lambdas: Vec<usize>,
    pub exact: bool,
    pub cache: Option<PathBuf>,
    pub unordered: bool,
    pub clamp: bool,
    pub solve: SolveOptions,
}

/// CSV of sampling probabilities, one row per `(config, rho)`.
pub fn cmd_q(spec: &QSpec, out: &mut dyn Write) -> Result<()> {
    validate_params(&spec.params)?;
    for cfg in &spec.configs {
        cfg.check_against(&spec.params)?;
    }
    for &rho in &spec.rhos {
        if rho.is_nan() || rho <= 0.0 {
            return Err(Error::NonPositiveRate {
                name: "rho",
                value: rho,
            });
        }
    }
    let max_lambda = spec.lambdas.iter().copied().max();
    let engine = match max_lambda {
        Some(m) => Some(GaussianSeriesEngine::new(spec.params.k, spec.params.l, m)?),
        None => None,
    };
    let mut cache = spec.cache.as_deref().map(ExactCache::open).transpose()?;

    let mut header = vec![
        "config",
        "rho",
        "q0",
        "q1",
        "first_order",
        "first_order_pade",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for l in &spec.lambdas {
        header.push(format!("gauss_{l}"));
        header.push(format!("gauss_pade_{l}"));
    }
    header.push("pade_fallback".into());
    if spec.exact {
        header.push("exact".into());
    }
    writeln!(out, "{}", header.join(","))?;

    for &rho in &spec.rhos {
        let p = spec.params.with_rho(rho);
        let exact = if spec.exact {
            Some(exact_values(
                &spec.configs,
                &p,
                &spec.solve,
                cache.as_mut(),
            )?)
        } else {
            None
        };
        let rows: Result<Vec<String>> = spec
            .configs
            .par_iter()
            .enumerate()
            .map(|(i, cfg)| {
                let scale = if spec.unordered {
                    cfg.multinomial()
                } else {
                    1.0
                };
                let truth = first_order_series(cfg, &p)?;
                let mut fallbacks = Vec::new();
                let mut approx = |name: String, t: &SeriesTable, cells: &mut Vec<String>| {
                    let (pade, fell_back) = pade_or_partial_sum(t, rho);
                    if fell_back {
                        fallbacks.push(name);
                    }
                    cells.push(fmt(clamp(scale * series_partial_sum(t, rho), spec.clamp)));
                    cells.push(fmt(clamp(scale * pade, spec.clamp)));
                };
                let mut cells = vec![
                    cfg.token(),
                    fmt(rho),
                    fmt(scale * truth.coeffs[0]),
                    fmt(scale * truth.coeffs[1]),
                ];
                approx("first_order".into(), &truth, &mut cells);
                if let (Some(engine), Some(m)) = (&engine, max_lambda) {
                    let series = engine.series(cfg, &p, Some(m))?;
                    for &l in &spec.lambdas {
                        approx(format!("gauss_{l}"), &series.truncated(l), &mut cells);
                    }
                }
                cells.push(if fallbacks.is_empty() {
                    "none".into()
                } else {
                    fallbacks.join(";")
                });
                if let Some(values) = &exact {
                    cells.push(fmt(scale * values[i]));
                }
                Ok(cells.join(","))
            })
            .collect();
        for row in rows? {
            writeln!(out, "{row}")?;
        }
    }
    Ok(())
}

/// Shortest decimal form that round-trips to the same `f64`.
pub fn fmt(x: f64) -> String {
    format!("{x:?}")
}

/// Run the accuracy experiment; returns the report and writes the per-row
/// CSV summary to `out`.
pub fn cmd_table1(
    opts: &AccuracyOptions,
    cache: Option<&Path>,
    out: &mut dyn Write,
) -> Result<Table1Report> {
    let report = run_table1(opts, cache)?;
    writeln!(
        out,
        "rho,lambda,method,phi_1,phi_10,phi_100,below_1,below_10,below_100,total,pade_fallbacks"
    )?;
    for r in &report.rows {
        let method = serde_json::to_value(r.method)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            fmt(r.rho),
            r.lambda,
            method.as_str().unwrap_or_default(),
            fmt(r.phi[0]),
            fmt(r.phi[1]),
            fmt(r.phi[2]),
            r.below[0],
            r.below[1],
            r.below[2],
            r.total,
            r.pade_fallbacks
        )?;
    }
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct MoranSpec {
    pub params: MoranParams,
    pub init: Vec<Vec<u64>>,
    pub horizon: f64,
    pub dt: f64,
    pub reps: usize,
    pub seed: u64,
}

/// Moran trajectories as CSV rows to `out`; the diagnostics summary, when
/// the ensemble is large enough, as one JSON document to `summary`.
pub fn cmd_sim_moran(spec: &MoranSpec, out: &mut dyn Write, summary: &mut dyn Write) -> Result<()> {
    spec.params.validate()?;
    let init = MoranState::new(spec.init.clone())?;
    if init.n != spec.params.n {
        return Err(Error::InvalidArgument(format!(
            "initial counts sum to {}, expected N = {}",
            init.n, spec.params.n
        )));
    }
    let trajs = run_ensemble(
        &spec.params,
        &init,
        spec.horizon,
        spec.dt,
        spec.reps,
        spec.seed,
    )?;
    let (k, l) = (init.k, init.l);
    let mut header = vec!["rep".to_string(), "t".to_string()];
    header.extend(indexed("X", k));
    header.extend(indexed("Y", l));
    header.extend(indexed2("D", k, l));
    writeln!(out, "{}", header.join(","))?;
    for (rep, tr) in trajs.iter().enumerate() {
        for pt in &tr.points {
            let cells = [rep.to_string(), fmt(pt.t)].into_iter().chain(
                pt.x.iter()
                    .chain(&pt.y)
                    .chain(pt.d.iter().flatten())
                    .map(|&v| fmt(v)),
            );
            writeln!(out, "{}", csv_row(cells))?;
        }
    }
    let report = if trajs.len() >= MIN_ENSEMBLE {
        serde_json::json!({
            "lln": check_lln(&trajs, &spec.params)?,
            "fluctuations": check_fluctuations(&trajs, &spec.params)?,
        })
    } else {
        serde_json::json!({ "note": format!("diagnostics need at least {MIN_ENSEMBLE} trajectories") })
    };
    writeln!(summary, "{report}")?;
    Ok(())
}

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn indexed2(prefix: &str, k: usize, l: usize) -> Vec<String> {
    (1..=k)
        .flat_map(|i| (1..=l).map(move |j| format!("{prefix}_{i}{j}")))
        .collect()
}

fn csv_row(cells: impl IntoIterator<Item = String>) -> String {
    cells.into_iter().collect::<Vec<_>>().join(",")
}

/// Stationary draws of the Gaussian diffusion as CSV rows.
pub fn cmd_sim_gaussian(
    p: &ModelParams,
    mode: SamplerMode,
    reps: u64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<()> {
    validate_params(p)?;
    let parts: Result<Vec<Vec<GaussianDraw>>> = chunks(reps)
        .into_par_iter()
        .map(|(stream, size)| {
            let mut rng = stream_rng(seed, stream);
            (0..size)
                .map(|_| sample_stationary(p, mode, &mut rng))
                .collect()
        })
        .collect();
    let (k, l) = (p.k, p.l);
    let mut header = indexed("X", k);
    header.extend(indexed("Y", l));
    header.extend(indexed2("D", k, l));
    header.extend(indexed2("H", k, l));
    header.push("accepted_after".into());
    writeln!(out, "{}", header.join(","))?;
    for draw in parts?.iter().flatten() {
        let cells = draw
            .x
            .iter()
            .chain(&draw.y)
            .chain(draw.d.iter().flatten())
            .chain(draw.h.iter().flatten())
            .map(|&v| fmt(v))
            .chain(std::iter::once(draw.rejections.to_string()));
        writeln!(out, "{}", csv_row(cells))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EventLine<'a> {
    rep: u64,
    #[serde(flatten)]
    event: &'a EventRecord,
}

/// Event logs, one JSON line per event, of the ancestral process (`process` is `"c"` for the
/// recombination-rate process or `"d"` for the artificial-recombination process).
pub fn cmd_sim_process(
    p: &ModelParams,
    process: &str,
    init: AncState,
    reps: u64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<()> {
    let sim = match process {
        "c" => sim_c_rho::<twolocus::rng::Rng>,
        "d" => sim_d_inf::<twolocus::rng::Rng>,
        other => {
            return Err(Error::InvalidArgument(format!(
                "unknown process {other:?}, expected c or d"
            )))
        }
    };
    let parts: Result<Vec<Vec<_>>> = chunks(reps)
        .into_par_iter()
        .map(|(stream, size)| {
            let mut rng = stream_rng(seed, stream);
            (0..size).map(|_| sim(init, p, &mut rng)).collect()
        })
        .collect();
    for (rep, run) in parts?.iter().flatten().enumerate() {
        for event in &run.log {
            let line = EventLine {
                rep: rep as u64,
                event,
            };
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingReport {
    pub init: AncState,
    pub rho: f64,
    pub reps: u64,
    pub seed: u64,
    /// Frequency of `T^(k) < T^MRCA` with its standard error, `k = 1, 2, 3`.
    pub failure: [(f64, f64); 3],
    /// `binom(c, 2) / rho`.
    pub first_order_target: f64,
    pub double_failure: (f64, f64),
    pub success: (f64, f64),
    pub failed: [u64; 3],
    pub double: u64,
    pub first_kind: [u64; 3],
    pub chain_in_s: [u64; 3],
}

/// Failure frequencies of the coupled processes.
pub fn cmd_sim_coupling(
    init: AncState,
    rho: f64,
    reps: u64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<CouplingReport> {
    let t = coupling_tally(init, rho, reps, seed)?;
    let prop = |h: u64| twolocus::stats::proportion(h, t.reps);
    let report = CouplingReport {
        init,
        rho,
        reps,
        seed,
        failure: t.failed.map(prop),
        first_order_target: binom(init.c, 2) / rho,
        double_failure: prop(t.double),
        success: prop(t.success),
        failed: t.failed,
        double: t.double,
        first_kind: t.first_kind,
        chain_in_s: t.chain_in_s,
    };
    writeln!(out, "{}", serde_json::to_string(&report)?)?;
    Ok(report)
}

/// Monte Carlo estimates of the ordered sampling probability as CSV.
pub fn cmd_sim_estimate(
    p: &ModelParams,
    configs: &[SampleConfig],
    model: McModel,
    reps: u64,
    seed: u64,
    out: &mut dyn Write,
) -> Result<Vec<McEstimate>> {
    writeln!(out, "config,model,rho,reps,estimate,se,hits")?;
    let mut all = Vec::with_capacity(configs.len());
    for cfg in configs {
        let est = estimate_q_mc(cfg, p, model, reps, seed)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cfg.token(),
            model.name(),
            fmt(p.rho),
            est.reps,
            fmt(est.estimate),
            fmt(est.se),
            est.hits
        )?;
        all.push(est);
    }
    Ok(all)
}
