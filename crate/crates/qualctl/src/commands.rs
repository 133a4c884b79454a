use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::net::SocketAddr;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rust_decimal::Decimal;
use serde::Serialize;

use qualkg::cleaning::{files, run_cleaning, CleaningConfig, PnPipelineConfig, RuleState};
use qualkg::corpus::{emit, generate, load_truth, CorpusConfig};
use qualkg::dataset::{load_plm, load_qc, save_qc, save_rules};
use qualkg::domain::{CascadeStage, QualificationReport};
use qualkg::llm::{HttpBackend, LlmGateway};
use qualkg::rag::{evaluate_rag, run_rag, select_subset, MetricsRow, RagConfig, RagPrediction};
use qualkg::retrieval::{Catalog, Retriever, DEFAULT_ALTERNATIVE_K};
use qualkg::vector::{Embedder, LocalEmbedder, RemoteEmbedder};
use qualkg_service::{AppState, ServiceConfig};

use crate::failure::Failure;
use crate::{CleanArgs, CostArgs, Ctx, EmbedderKind, EvalArgs, GenArgs, LlmKind, Profile, QueryArgs, RagArgs, ServeArgs};

fn gateway(ctx: &Ctx, kind: LlmKind) -> Result<LlmGateway, Failure> {
    match kind {
        LlmKind::Mock => Ok(LlmGateway::mock()),
        LlmKind::Http => {
            let backend = HttpBackend::new(ctx.config.http_config()?)?;
            Ok(LlmGateway::new(Arc::new(backend)))
        }
    }
}

fn embedder(kind: EmbedderKind) -> Result<Arc<dyn Embedder>, Failure> {
    match kind {
        EmbedderKind::Local => Ok(Arc::new(LocalEmbedder)),
        EmbedderKind::Remote => Ok(Arc::new(RemoteEmbedder::from_env()?)),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    std::fs::write(path, body)?;
    Ok(())
}

fn usage_k(k: usize) -> Result<usize, Failure> {
    if k == 0 {
        return Err(Failure::Usage("--k must be at least 1".into()));
    }
    Ok(k)
}

pub fn gen(ctx: &Ctx, a: &GenArgs) -> Result<(), Failure> {
    let mut cfg = match a.profile {
        Profile::Paper => CorpusConfig::default(),
        Profile::Config => ctx.config.corpus.clone().unwrap_or_default(),
    };
    cfg.seed = a.seed;
    if let Some(n) = a.components {
        cfg.n_components = n;
    }
    cfg.n_qualifications = match a.quals {
        Some(m) => m,
        None if a.profile == Profile::Paper => cfg.cards_for_direct_average().max(1),
        None => cfg.n_qualifications,
    };
    let corpus = generate(&cfg)?;
    let written = emit(&corpus, &a.out)?;
    ctx.say(format!(
        "generated {} components and {} qualification cards (seed {}) in {}",
        corpus.plm.len(),
        corpus.qc.len(),
        cfg.seed,
        a.out.display()
    ));
    for p in written {
        ctx.say(format!("  {}", p.display()));
    }
    Ok(())
}

#[derive(Serialize)]
struct CleanDiagnostics {
    manufacturer_names: usize,
    rules_by_state: BTreeMap<String, usize>,
    rule_table_rows: usize,
    validation: qualkg::cleaning::ValidationReport,
    messages: Vec<String>,
    cards: usize,
    flagged: usize,
    flagged_fraction: f64,
    flagged_by_reason: BTreeMap<String, usize>,
    pn_messages: Vec<String>,
}

pub fn clean(ctx: &Ctx, a: &CleanArgs) -> Result<(), Failure> {
    let plm = load_plm(&a.plm)?;
    let qc = load_qc(&a.qc)?;
    let gw = gateway(ctx, a.llm)?;
    std::fs::create_dir_all(&a.out)?;
    let checkpoint = a.out.join(files::CHECKPOINT);
    let limits = &ctx.config.limits;
    let cfg = CleaningConfig {
        auto_accept: !a.no_auto_accept,
        pipeline: PnPipelineConfig {
            concurrency: a.concurrency.or(limits.concurrency).unwrap_or(4).max(1),
            checkpoint: Some(checkpoint.clone()),
            checkpoint_every: limits.checkpoint_every.unwrap_or(qualkg::cleaning::CHECKPOINT_EVERY).max(1),
        },
    };
    let run = run_cleaning(&plm, &qc, &gw, &cfg)?;

    save_rules(&a.out.join(files::RULES_CSV), &run.rule_table)?;
    write_json(&a.out.join(files::RULES_JSON), &run.rules)?;
    save_qc(&a.out.join(files::QC_AUGMENTED), &run.pn.cards)?;
    write_json(&a.out.join(files::REVIEW_QUEUE), &run.pn.review)?;

    let mut rules_by_state = BTreeMap::new();
    for r in &run.rules {
        *rules_by_state.entry(format!("{:?}", r.state)).or_insert(0) += 1;
    }
    let mut flagged_by_reason = BTreeMap::new();
    for item in &run.pn.review {
        *flagged_by_reason.entry(item.reason.code().to_string()).or_insert(0) += 1;
    }
    let diagnostics = CleanDiagnostics {
        manufacturer_names: run.names.len(),
        rules_by_state,
        rule_table_rows: run.rule_table.len(),
        validation: run.validation.clone(),
        messages: run.diagnostics.clone(),
        cards: run.pn.cards.len(),
        flagged: run.pn.review.len(),
        flagged_fraction: run.pn.flagged_fraction(),
        flagged_by_reason,
        pn_messages: run.pn.diagnostics.clone(),
    };
    write_json(&a.out.join(files::DIAGNOSTICS), &diagnostics)?;

    let plm_copy = a.out.join(qualkg::corpus::PLM_FILE);
    let same = match (a.plm.canonicalize(), plm_copy.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    };
    if !same {
        std::fs::copy(&a.plm, &plm_copy)?;
    }
    if checkpoint.exists() {
        std::fs::remove_file(&checkpoint)?;
    }

    let pending = run.rules.iter().filter(|r| r.state == RuleState::Proposed).count();
    ctx.say(format!(
        "{} manufacturer names -> {} rules ({} awaiting review), {} table rows",
        run.names.len(),
        run.rules.len(),
        pending,
        run.rule_table.len()
    ));
    ctx.say(format!(
        "{} cards, {} flagged for part-number review ({:.2}%)",
        run.pn.cards.len(),
        run.pn.review.len(),
        100.0 * run.pn.flagged_fraction()
    ));
    ctx.say(format!("outputs in {}", a.out.display()));
    Ok(())
}

fn open_data(data: &Path, kind: EmbedderKind) -> Result<AppState, Failure> {
    let mut cfg = ServiceConfig::new(data);
    cfg.embedder = embedder(kind)?;
    cfg.read_only = true;
    let state = AppState::open(cfg)?;
    if state.loaded.is_none() {
        return Err(Failure::data(
            "not_loaded",
            format!("{} has no {}", data.display(), qualkg::corpus::PLM_FILE),
        ));
    }
    Ok(state)
}

fn catalog_of(state: &AppState) -> Arc<Catalog> {
    state.loaded.as_ref().expect("checked by open_data").view().catalog.clone()
}

pub fn query(ctx: &Ctx, a: &QueryArgs) -> Result<(), Failure> {
    let k = usage_k(a.k.or(ctx.config.limits.k).unwrap_or(DEFAULT_ALTERNATIVE_K))?;
    let state = open_data(&a.data, a.embedder)?;
    let catalog = catalog_of(&state);
    let report = state.retriever.retrieve(&catalog, &a.pn, k)?;
    if a.json {
        let value = serde_json::to_value(&report)?;
        println!("{}", serde_json::to_string_pretty(&value)?);
    } else {
        ctx.say(render_report(&report));
    }
    Ok(())
}

fn render_report(r: &QualificationReport) -> String {
    let c = &r.component;
    let mut out = format!(
        "{} ({} / {} / {}, {}): {:?}\n",
        c.part_number, c.package_code, c.subpackage_code, c.manufacturer_name, c.family, r.cascade_stage
    );
    for (label, list) in [("direct", &r.direct), ("similarity", &r.similarity), ("alternative", &r.alternative)] {
        if list.is_empty() {
            continue;
        }
        out.push_str(&format!("  {label}:\n"));
        for m in list {
            let q = &m.qualification;
            let score = m.score.map(|s| format!("  score {s:.4}  (suggestion)")).unwrap_or_default();
            out.push_str(&format!("    {}  {}  {}{}\n", q.number, q.manufacturer_name, q.status, score));
        }
    }
    for d in &r.diagnostics {
        out.push_str(&format!("  note: {d}\n"));
    }
    out.trim_end().to_string()
}

pub fn rag(ctx: &Ctx, a: &RagArgs) -> Result<(), Failure> {
    let limits = &ctx.config.limits;
    let cfg = RagConfig {
        k: usage_k(a.k.or(limits.k).unwrap_or(qualkg::rag::DEFAULT_K))?,
        subset: a.subset.or(limits.subset),
        concurrency: a.concurrency.or(limits.concurrency).unwrap_or(4).max(1),
        ..RagConfig::default()
    };
    let plm = load_plm(&a.plm)?;
    let qc = load_qc(&a.qc)?;
    let truth = load_truth(&a.truth)?;
    let gw = gateway(ctx, a.llm)?;
    let emb = embedder(a.embedder)?;
    let report = run_rag(&plm, &qc, &truth, &cfg, emb.as_ref(), &gw)?;
    write_json(&a.out, &report)?;
    ctx.say(format!(
        "{} components, context {} ({} backend, {} embedder)",
        report.components, report.k, report.backend, report.embedder
    ));
    ctx.say(report.table().trim_end());
    for p in &report.coverage {
        ctx.say(format!("truth in top {:>4}: {:.1}% ({}/{})", p.top, 100.0 * p.fraction, p.found, p.total));
    }
    ctx.say(format!(
        "{} non-compliant replies, {} out-of-context ids dropped; report in {}",
        report.non_compliant,
        report.dropped_ids,
        a.out.display()
    ));
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct EvalReport {
    pub components: usize,
    pub k: usize,
    pub embedder: String,
    pub rows: Vec<MetricsRow>,
    pub stages: BTreeMap<String, usize>,
    pub mean_direct: f64,
    pub mean_similarity: f64,
    pub mean_alternative: f64,
}

fn as_prediction(r: &QualificationReport) -> RagPrediction {
    let ids = |list: &[qualkg::domain::QualMatch]| list.iter().map(|m| m.number().to_string()).collect::<BTreeSet<_>>();
    RagPrediction {
        component_id: r.component.part_number.clone(),
        direct: ids(&r.direct),
        similarity: ids(&r.similarity),
        alternative: ids(&r.alternative),
        raw_llm_output: String::new(),
        compliant: true,
        dropped: Vec::new(),
    }
}

pub fn eval(ctx: &Ctx, a: &EvalArgs) -> Result<(), Failure> {
    let limits = &ctx.config.limits;
    let k = usage_k(a.k.or(limits.k).unwrap_or(DEFAULT_ALTERNATIVE_K))?;
    let truth = load_truth(&a.truth)?;
    let state = open_data(&a.data, a.embedder)?;
    let catalog = catalog_of(&state);
    let subset: Vec<String> = select_subset(&catalog.dataset().plm, a.subset.or(limits.subset))
        .into_iter()
        .map(|c| c.part_number.clone())
        .collect();
    let workers = a.concurrency.or(limits.concurrency).unwrap_or(4).clamp(1, subset.len().max(1));
    let chunk = subset.len().div_ceil(workers).max(1);
    let retriever: &Retriever = &state.retriever;
    let results: Vec<Result<Vec<QualificationReport>, Failure>> = std::thread::scope(|s| {
        let handles: Vec<_> = subset
            .chunks(chunk)
            .map(|part| {
                let catalog = &catalog;
                s.spawn(move || {
                    part.iter()
                        .map(|pn| retriever.retrieve(catalog, pn, k).map_err(Failure::from))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("eval worker panicked")).collect()
    });
    let mut reports = Vec::with_capacity(subset.len());
    for r in results {
        reports.extend(r?);
    }

    let predictions: Vec<RagPrediction> = reports.iter().map(as_prediction).collect();
    let mut stages: BTreeMap<String, usize> = BTreeMap::new();
    for r in &reports {
        *stages.entry(format!("{:?}", r.cascade_stage)).or_insert(0) += 1;
    }
    let qualified: Vec<&QualificationReport> = reports
        .iter()
        .filter(|r| truth.matches.get(&r.component.part_number).is_some_and(|t| !t.direct.is_empty() || !t.similarity.is_empty()))
        .collect();
    let mean = |f: &dyn Fn(&QualificationReport) -> usize| {
        if qualified.is_empty() {
            0.0
        } else {
            qualified.iter().map(|r| f(r) as f64).sum::<f64>() / qualified.len() as f64
        }
    };
    let report = EvalReport {
        components: reports.len(),
        k,
        embedder: catalog.embedder().tag(),
        rows: evaluate_rag(&predictions, &truth),
        stages,
        mean_direct: mean(&|r| r.direct.len()),
        mean_similarity: mean(&|r| r.similarity.len()),
        mean_alternative: {
            let alt: Vec<&QualificationReport> = reports.iter().filter(|r| r.cascade_stage == CascadeStage::AlternativeProposed).collect();
            if alt.is_empty() {
                0.0
            } else {
                alt.iter().map(|r| r.alternative.len() as f64).sum::<f64>() / alt.len() as f64
            }
        },
    };
    write_json(&a.out, &report)?;
    ctx.say(format!("{} components, alternatives capped at {}", report.components, k));
    ctx.say(format!("{:<14} {:>9} {:>9} {:>9} {:>9}", "type", "precision", "recall", "f1", "iou"));
    for r in &report.rows {
        ctx.say(format!(
            "{:<14} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            r.name, r.micro.precision, r.micro.recall, r.micro.f1, r.micro.iou
        ));
    }
    ctx.say(format!("stages: {:?}; report in {}", report.stages, a.out.display()));
    Ok(())
}

pub fn cost(ctx: &Ctx, a: &CostArgs) -> Result<(), Failure> {
    let mut model = ctx.config.cost_model()?;
    if let Some(pct) = &a.sensitivity {
        let pct = Decimal::from_str(pct.trim())
            .map_err(|_| Failure::Usage(format!("--sensitivity expects a percentage, got `{pct}`")))?;
        model = model.sensitivity(pct)?;
    }
    if a.step == 0 || a.max_n < a.step {
        return Err(Failure::Usage(format!("need --max-n >= --step >= 1, got {} and {}", a.max_n, a.step)));
    }
    if let Some(path) = &a.csv {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        model.write_csv(BufWriter::new(File::create(path)?), a.max_n, a.step)?;
    }
    let summary = model.summary();
    if let Some(path) = &a.summary {
        write_json(path, &summary)?;
    }
    let fmt = |v: Option<f64>| v.map_or_else(|| "never".to_string(), |n| format!("{n:.1}"));
    for ap in &summary.approaches {
        ctx.say(format!(
            "{:<8} setup {:>5} person-days, {:>5} min/component",
            ap.name.as_str(),
            ap.setup_person_days,
            ap.per_component_minutes
        ));
    }
    ctx.say(format!("break-even as-is/rag: {} components", fmt(summary.break_even_asis_rag)));
    ctx.say(format!("break-even rag/vkg-llm: {} components", fmt(summary.break_even_rag_vkg)));
    ctx.say(format!("break-even as-is/vkg-llm: {} components", fmt(summary.break_even_asis_vkg)));
    for s in &summary.savings {
        ctx.say(format!(
            "n={:>6}: rag saves {:.1}%, vkg-llm saves {:.1}%",
            s.n,
            100.0 * s.rag_savings,
            100.0 * s.vkg_savings
        ));
    }
    Ok(())
}

pub fn serve(ctx: &Ctx, a: &ServeArgs) -> Result<(), Failure> {
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|_| Failure::Usage(format!("bad listen address {}:{}", a.host, a.port)))?;
    let mut cfg = ServiceConfig::new(&a.data);
    cfg.read_only = a.read_only;
    cfg.embedder = embedder(a.embedder)?;
    cfg.cost = ctx.config.cost_model()?;
    if let Some(n) = a.snapshot_every.or(ctx.config.limits.snapshot_every) {
        cfg.snapshot_every = n;
    }
    if let Some(k) = ctx.config.limits.k {
        cfg.default_k = usage_k(k)?;
    }
    let state = Arc::new(AppState::open(cfg)?);
    if state.loaded.is_none() {
        ctx.say(format!("no component database in {}; data endpoints answer 503", a.data.display()));
    }
    if let Some(l) = &state.loaded {
        for w in &l.warnings {
            ctx.say(format!("note: {w}"));
        }
    }
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| Failure::data("runtime", e.to_string()))?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Failure::Transport(format!("bind {addr}: {e}")))?;
        let local = listener.local_addr()?;
        ctx.say(format!("listening on http://{local}"));
        let shutdown = async {
            let _ = tokio::signal::ctrl_c().await;
        };
        qualkg_service::serve_on(state, listener, shutdown).await.map_err(Failure::from)
    })?;
    ctx.say("stopped");
    Ok(())
}
