use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use crowdlens_core::analytics::{aggregate_series, peak, Aggregation};
use crowdlens_core::connectors::{build_store, fetch_all_places, load_config, AppConfig, DriverRegistry, SourceKind};
use crowdlens_core::csvio::write_samples;
use crowdlens_core::scenario::generate;
use crowdlens_core::{Catalog, Region, Store, Timestamp};
use crowdlens_service::KeyStore;
use serde_json::json;

use crate::{Agg, Cli, Command, Format, KeyAction, Query, QueryArgs};

pub async fn run(cli: Cli) -> Result<ExitCode> {
    let registry = DriverRegistry::with_builtin();
    let config_path = cli.config;
    let config = || -> Result<AppConfig> {
        let path = config_path.as_deref().ok_or_else(|| anyhow!("no configuration: pass --config or set CROWDLENS_CONFIG"))?;
        load_config(path, &registry).map_err(|e| anyhow!("{}: {e}", path.display()))
    };
    match cli.command {
        Command::Serve => serve(&config()?, &registry).await,
        Command::ValidateConfig { path, places } => {
            let path = path.or(config_path.clone()).ok_or_else(|| anyhow!("no configuration path given"))?;
            validate(&path, places, &registry).await
        }
        Command::Ingest { source, from, to, snapshot } => ingest(&config()?, &registry, &source, from, to, snapshot).await,
        Command::Replay { source, speed, format } => replay(&config()?, &registry, &source, speed, format).await,
        Command::GenScenario { preset, seed, out } => {
            let scenario = generate(preset, seed);
            scenario.write_to(&out).with_context(|| format!("writing scenario to {}", out.display()))?;
            println!(
                "{}",
                json!({"preset": preset.name(), "seed": seed, "out": out, "places": scenario.places.len(), "samples": scenario.samples.len()})
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Query { query } => {
            let config = config()?;
            match query {
                Query::Peak(args) => query_peak(&config, &registry, &args).await,
                Query::Series(args) => query_series(&config, &registry, &args).await,
            }
        }
        Command::Keys { store, action } => {
            let path = match store {
                Some(p) => p,
                None => config()?.service.auth_store,
            };
            keys(&path, action)
        }
    }
}

fn parse_time(raw: Option<&str>, default: Timestamp) -> Result<Timestamp> {
    raw.map(|s| s.parse().map_err(|e| anyhow!("invalid time {s:?}: {e}"))).transpose().map(|t| t.unwrap_or(default))
}

/// Resolves on SIGINT or SIGTERM. Handlers are installed before this
/// returns, so a signal arriving during startup is not lost.
#[cfg(unix)]
fn termination() -> Result<impl std::future::Future<Output = ()>> {
    use tokio::signal::unix::{signal, SignalKind};
    let mut int = signal(SignalKind::interrupt())?;
    let mut term = signal(SignalKind::terminate())?;
    Ok(async move {
        tokio::select! {
            _ = int.recv() => {}
            _ = term.recv() => {}
        }
    })
}

#[cfg(not(unix))]
fn termination() -> Result<impl std::future::Future<Output = ()>> {
    Ok(async {
        let _ = tokio::signal::ctrl_c().await;
    })
}

async fn serve(config: &AppConfig, registry: &DriverRegistry) -> Result<ExitCode> {
    let stop = termination().context("installing signal handlers")?;
    let mut server = crowdlens_service::start(config, registry).await?;
    server.start_ingest(registry)?;
    stop.await;
    tracing::info!("shutting down");
    server.shutdown().await?;
    Ok(ExitCode::SUCCESS)
}

async fn validate(path: &Path, places: bool, registry: &DriverRegistry) -> Result<ExitCode> {
    let config = match load_config(path, registry) {
        Ok(c) => c,
        Err(e) => {
            println!("invalid: {e}");
            return Ok(ExitCode::FAILURE);
        }
    };
    if places {
        let checked = match fetch_all_places(&config, registry).await {
            Ok(p) => Catalog::new(p, config.metric_defs.clone()).map_err(|e| e.to_string()),
            Err(e) => Err(e.to_string()),
        };
        match checked {
            Ok(cat) => println!("places: {}", cat.places().len()),
            Err(e) => {
                println!("invalid: {e}");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    println!("ok: {} metrics, {} sources", config.metric_defs.len(), config.sources.len());
    Ok(ExitCode::SUCCESS)
}

async fn ingest(
    config: &AppConfig,
    registry: &DriverRegistry,
    source: &str,
    from: Option<String>,
    to: Option<String>,
    snapshot: Option<PathBuf>,
) -> Result<ExitCode> {
    let src = config.source(source).ok_or_else(|| anyhow!("no source named {source:?}"))?;
    if src.kind != SourceKind::Historical {
        bail!("source {source:?} is {}, not historical", src.kind);
    }
    let snapshot = snapshot
        .or_else(|| config.service.snapshot.clone())
        .ok_or_else(|| anyhow!("no snapshot path: pass --snapshot or set service.snapshot"))?;
    let (from, to) = (parse_time(from.as_deref(), Timestamp::MIN)?, parse_time(to.as_deref(), Timestamp::MAX)?);
    if from > to {
        bail!("--from is after --to");
    }
    let store = Store::new(std::sync::Arc::new(Catalog::new(fetch_all_places(config, registry).await?, config.metric_defs.clone())?));
    if snapshot.exists() {
        store.snapshot_load(&snapshot)?;
    }
    let samples = registry.historical_load(src, &src.metrics, from, to).await?;
    let loaded = store.upsert(&samples)?;
    let stats = store.snapshot_save(&snapshot)?;
    println!("{}", json!({"source": source, "loaded": loaded, "snapshot": snapshot, "samples": stats.sample_count}));
    Ok(ExitCode::SUCCESS)
}

async fn replay(config: &AppConfig, registry: &DriverRegistry, source: &str, speed: Option<String>, format: Format) -> Result<ExitCode> {
    let mut src = config.source(source).ok_or_else(|| anyhow!("no source named {source:?}"))?.clone();
    if src.kind != SourceKind::Realtime {
        bail!("source {source:?} is {}, not realtime", src.kind);
    }
    if let Some(s) = speed {
        src.params.insert("speed".into(), s);
    }
    let mut stream = registry.realtime_subscribe(&src)?;
    let mut out = std::io::stdout().lock();
    let mut header = true;
    while let Some(batch) = stream.next().await {
        let batch = batch?;
        match format {
            Format::Json => writeln!(out, "{}", json!({"t": batch.t, "samples": batch.samples}))?,
            Format::Csv => {
                let mut buf = Vec::new();
                write_samples(&mut buf, &batch.samples)?;
                let text = String::from_utf8(buf)?;
                let body = if header { text.as_str() } else { text.split_once('\n').map_or("", |(_, rest)| rest) };
                out.write_all(body.as_bytes())?;
                header = false;
            }
        }
        out.flush()?;
    }
    Ok(ExitCode::SUCCESS)
}

struct Window {
    from: Timestamp,
    to: Timestamp,
    region: Option<Region>,
    agg: Aggregation,
}

fn window(args: &QueryArgs) -> Result<Window> {
    let from = parse_time(args.from.as_deref(), Timestamp::MIN)?;
    let to = parse_time(args.to.as_deref(), Timestamp::MAX)?;
    let region = args
        .region_file
        .as_ref()
        .map(|p| -> Result<Region> {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Region::parse(&text).map_err(|e| anyhow!("{}: {e}", p.display()))
        })
        .transpose()?;
    let agg = match args.agg {
        Agg::Sum => Aggregation::Sum,
        Agg::Mean => Aggregation::Mean,
    };
    Ok(Window { from, to, region, agg })
}

async fn query_peak(config: &AppConfig, registry: &DriverRegistry, args: &QueryArgs) -> Result<ExitCode> {
    let w = window(args)?;
    let store = build_store(config, registry, true).await?;
    let series = aggregate_series(&store, &args.metric, w.from, w.to, w.region.as_ref(), w.agg)?;
    let (t, value) = peak(&series)?;
    match args.format {
        Format::Json => println!("{}", json!({"metric_id": args.metric, "t": t, "value": value})),
        Format::Csv => println!("t,value\n{t},{value}"),
    }
    Ok(ExitCode::SUCCESS)
}

async fn query_series(config: &AppConfig, registry: &DriverRegistry, args: &QueryArgs) -> Result<ExitCode> {
    let w = window(args)?;
    let store = build_store(config, registry, true).await?;
    let series = aggregate_series(&store, &args.metric, w.from, w.to, w.region.as_ref(), w.agg)?;
    let mut out = std::io::stdout().lock();
    match args.format {
        Format::Json => writeln!(out, "{}", serde_json::to_string(&series)?)?,
        Format::Csv => {
            writeln!(out, "t,value")?;
            for p in &series.points {
                match p.value {
                    Some(v) => writeln!(out, "{},{v}", p.t)?,
                    None => writeln!(out, "{},", p.t)?,
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn keys(path: &Path, action: KeyAction) -> Result<ExitCode> {
    let store = KeyStore::open(path)?;
    match action {
        KeyAction::Add { label } => {
            let issued = store.add(&label)?;
            eprintln!("issued key {} for {label:?}; the token below is shown only once", issued.key_id);
            println!("{}", issued.token);
        }
        KeyAction::Revoke { key_id } => {
            store.revoke(&key_id)?;
            println!("revoked {key_id}");
        }
        KeyAction::List { format } => {
            let keys = store.list();
            match format {
                Format::Json => println!("{}", serde_json::to_string(&keys)?),
                Format::Csv => {
                    println!("key_id,label,revoked,created_at");
                    for k in keys {
                        println!("{},{:?},{},{}", k.key_id, k.label, k.revoked, k.created_at);
                    }
                }
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
