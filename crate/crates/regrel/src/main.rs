use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::Utc;
use clap::{Args, Parser, Subcommand, ValueEnum};
use sha2::{Digest, Sha256};

use regrel::io;
use regrel::remote::{RemoteConfig, RemoteProvider};
use regrel::runs::{self, JudgeParams, JudgeRequest, ProviderChoice, RankRequest};
use regrel::service::{self, AppState};
use regrel::store::{RunInfo, RunKind, RunStatus, Store, StoreRecord};
use regrel::synth::{self, UseCase};
use regrel_core::corpus::{published, CompositionSpec, CorpusBuilder, RegulatoryDocument, StudySet};
use regrel_core::crowd::{aggregate_all, AggregationConfig, Strategy, VoteRule, WorkerSubmission};
use regrel_core::eval::{evaluate, recommend_methods, PredictionRecord, ScenarioProfile};
use regrel_core::judge::{ClosureMode, Iteration, JudgeConfig};
use regrel_core::process::BusinessContext;
use regrel_core::retrieval::Method;
use regrel_core::review::{EnqueuePolicy, RunOutput};
use regrel_core::{DocId, Level, ParaId, ParagraphLabels};

#[derive(Parser)]
#[command(
    name = "regrel",
    version,
    about = "Relevance of regulatory paragraphs to business processes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest paragraphs into corpus.jsonl.
    Ingest(IngestArgs),
    /// Check a study set's group composition.
    ValidateSet(ValidateSetArgs),
    /// Validate or import process models
    #[command(subcommand)]
    Process(ProcessCommand),
    /// Rank the study set for every node at one level.
    Rank(RankArgs),
    /// Zero-shot judge every paragraph with a chat provider.
    Judge(JudgeArgs),
    /// Crowd annotation tools
    #[command(subcommand)]
    Crowd(CrowdCommand),
    /// Evaluate predictions against a gold standard.
    Eval(EvalArgs),
    /// Recommend a method combination for a scenario.
    Recommend(RecommendArgs),
    /// Run the review service.
    Serve(ServeArgs),
    /// Manage a review store
    #[command(subcommand)]
    Store(StoreCommand),
    /// Write a synthetic use case with the published composition.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum UseCaseArg {
    Uc1,
    Uc2,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    use_case: UseCaseArg,
    /// Directory for documents.jsonl, set.jsonl, crowd_set.jsonl,
    /// process.json and gold.jsonl.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum InputFormat {
    Jsonl,
    Plaintext,
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long = "in", required = true, num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "jsonl")]
    format: InputFormat,
    /// documents.jsonl the paragraphs' doc ids must resolve against.
    #[arg(long)]
    documents: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateSetArgs {
    #[arg(long)]
    set: PathBuf,
    /// A composition json file, or one of uc1, uc2, uc1-crowd, uc2-crowd.
    #[arg(long)]
    expect: String,
}

#[derive(Subcommand)]
enum ProcessCommand {
    /// Check a process model, including descriptions.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Extract a process skeleton from BPMN 2.0 XML.
    FromBpmn {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the file stem.
        #[arg(long)]
        model_id: Option<String>,
        #[arg(long, default_value = "")]
        business_id: String,
        #[arg(long, default_value = "")]
        location: String,
        #[arg(long, default_value = "")]
        domain: String,
        #[arg(long, default_value = "")]
        size: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    /// BM25 then cross-encoder.
    A,
    /// Bi-encoder then cross-encoder.
    B,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::A => Method::Bm25CrossEncoder,
            MethodArg::B => Method::BiEncoderCrossEncoder,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProviderArg {
    Fallback,
    Remote,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    process: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    level: u8,
    #[arg(long, value_enum, default_value = "fallback")]
    provider: ProviderArg,
    #[arg(long, default_value_t = 100)]
    initial_k: usize,
    #[arg(long)]
    out: PathBuf,
    /// Also write binary predictions, cut at the gold relevant count per node.
    #[arg(long, requires = "gold")]
    predictions: Option<PathBuf>,
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Record the run in this store so it can be queued for review.
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Args)]
struct JudgeArgs {
    #[arg(long)]
    set: PathBuf,
    #[arg(long)]
    process: PathBuf,
    #[arg(long)]
    documents: Option<PathBuf>,
    #[arg(long, default_value = "v3")]
    iteration: Iteration,
    #[arg(long)]
    out: PathBuf,
    #[arg(long = "post-filter-subprocess-threshold")]
    subprocess_threshold: Option<usize>,
    /// Reject replies violating propagation closure instead of repairing them.
    #[arg(long)]
    strict: bool,
    #[arg(long, default_value_t = 4)]
    max_in_flight: usize,
    #[arg(long)]
    predictions: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Unfiltered,
    QltFilter,
    QltComb,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Strategy {
        match s {
            StrategyArg::Unfiltered => Strategy::Unfiltered,
            StrategyArg::QltFilter => Strategy::QltFilter,
            StrategyArg::QltComb => Strategy::QltComb,
        }
    }
}

#[derive(Subcommand)]
enum CrowdCommand {
    /// Aggregate worker submissions into predictions.
    Aggregate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        process: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Use a vote-share threshold instead of the majority rule.
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    gold: PathBuf,
    #[arg(long = "pred")]
    pred: PathBuf,
    #[arg(long)]
    process: PathBuf,
    /// Study set supplying paragraph groups for group accuracy.
    #[arg(long)]
    set: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RecommendArgs {
    #[arg(long)]
    usage: regrel_core::eval::Usage,
    #[arg(long)]
    impact: regrel_core::eval::Impact,
    #[arg(long)]
    dynamics: regrel_core::eval::Dynamics,
    #[arg(long = "reg-input")]
    reg_input: regrel_core::eval::RegulatoryInput,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "REGREL_STORE")]
    store: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: String,
}

#[derive(Subcommand)]
enum StoreCommand {
    /// Add a study set.
    PutSet {
        #[arg(long, env = "REGREL_STORE")]
        store: PathBuf,
        #[arg(long)]
        set: PathBuf,
        /// Defaults to the file stem.
        #[arg(long)]
        set_id: Option<String>,
    },
    /// Add document metadata.
    PutDocuments {
        #[arg(long, env = "REGREL_STORE")]
        store: PathBuf,
        #[arg(long)]
        documents: PathBuf,
    },
    /// Add a process model and open its review queue.
    PutModel {
        #[arg(long, env = "REGREL_STORE")]
        store: PathBuf,
        #[arg(long)]
        process: PathBuf,
        #[arg(long)]
        use_case: String,
    },
    /// Queue a finished run for expert review.
    Enqueue {
        #[arg(long, env = "REGREL_STORE")]
        store: PathBuf,
        #[arg(long)]
        run: String,
        /// Queue the top k of every ranking; judgments are filtered by label.
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Merge gold labels from a jsonl file, replacing records per paragraph
    ImportGold {
        #[arg(long, env = "REGREL_STORE")]
        store: PathBuf,
        #[arg(long)]
        model_id: String,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Write a model's gold labels as jsonl
    ExportGold {
        #[arg(long, env = "REGREL_STORE")]
        store: PathBuf,
        #[arg(long)]
        model_id: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a snapshot of the current state.
    Snapshot {
        #[arg(long, env = "REGREL_STORE")]
        store: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Ingest(a) => ingest(a)?,
        Command::ValidateSet(a) => return validate_set(a),
        Command::Process(c) => process(c)?,
        Command::Rank(a) => rank(a)?,
        Command::Judge(a) => judge(a)?,
        Command::Crowd(CrowdCommand::Aggregate {
            input,
            process,
            strategy,
            threshold,
            out,
        }) => crowd_aggregate(&input, &process, strategy, threshold, &out)?,
        Command::Eval(a) => eval(a)?,
        Command::Recommend(a) => {
            let profile = ScenarioProfile {
                usage: a.usage,
                impact: a.impact,
                dynamics: a.dynamics,
                regulatory_input: a.reg_input,
            };
            println!("{}", serde_json::to_string_pretty(&recommend_methods(&profile))?);
        }
        Command::Serve(a) => serve(a)?,
        Command::Store(c) => store(c)?,
        Command::Synth(a) => synth(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn ingest(a: IngestArgs) -> Result<()> {
    let mut builder = CorpusBuilder::new();
    if let Some(path) = &a.documents {
        builder = builder.with_documents(io::read_documents(path)?.into_values())?;
    }
    for path in &a.inputs {
        let text = io::read_text(path)?;
        match a.format {
            InputFormat::Jsonl => builder.add_jsonl(&path.display().to_string(), &text)?,
            InputFormat::Plaintext => builder.add_plaintext(&DocId::new(io::stem(path)), &text)?,
        }
    }
    let (corpus, report) = builder.finish();
    for s in report.flagged() {
        log::warn!("{}: skipped {}: {}", s.location, s.para_id, s.reason);
    }
    io::write_atomic(&a.out, corpus.to_jsonl().as_bytes())?;
    log::info!("wrote {} paragraphs to {}", corpus.paragraphs.len(), a.out.display());
    Ok(())
}

fn validate_set(a: ValidateSetArgs) -> Result<ExitCode> {
    let expected: CompositionSpec = match a.expect.as_str() {
        "uc1" => published::USE_CASE_1,
        "uc2" => published::USE_CASE_2,
        "uc1-crowd" => published::USE_CASE_1_CROWD,
        "uc2-crowd" => published::USE_CASE_2_CROWD,
        path => io::read_json(Path::new(path))?,
    };
    let set = io::read_study_set(&a.set, None)?;
    let report = regrel_core::corpus::validate_study_set(&set, &expected);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn process(c: ProcessCommand) -> Result<()> {
    match c {
        ProcessCommand::Validate { input } => {
            let model = io::read_process(&input)?;
            let counts = model.counts();
            println!(
                "{}: valid, {} / {} / {} nodes",
                model.model_id, counts[0], counts[1], counts[2]
            );
        }
        ProcessCommand::FromBpmn {
            input,
            out,
            model_id,
            business_id,
            location,
            domain,
            size,
        } => {
            let context = BusinessContext {
                business_id,
                location,
                domain,
                size,
            };
            let id = model_id.unwrap_or_else(|| io::stem(&input));
            let model = regrel::bpmn::skeleton_from_bpmn(&io::read_text(&input)?, &id, context)?;
            io::write_json(&out, &model)?;
            let missing = model.empty_descriptions();
            if !missing.is_empty() {
                log::warn!("{} nodes need descriptions before use", missing.len());
            }
        }
    }
    Ok(())
}

fn digest(value: &impl serde::Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    let hash = Sha256::digest(&bytes);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn write_predictions(
    path: &Path,
    preds: BTreeMap<ParaId, ParagraphLabels>,
    method: &str,
    config_digest: &str,
) -> Result<()> {
    io::write_jsonl(
        path,
        preds.into_iter().map(|(para_id, labels)| PredictionRecord {
            para_id,
            labels,
            method: method.into(),
            config_digest: config_digest.into(),
        }),
    )
}

/// Records a run that was executed outside the service.
fn record_run(
    store_dir: &Path,
    kind: RunKind,
    set: &StudySet,
    model_id: &str,
    params: serde_json::Value,
    make_output: impl FnOnce(&str) -> RunOutput,
) -> Result<String> {
    let mut store = Store::open(store_dir)?;
    let state = store.state();
    if !state.models.contains_key(model_id) {
        bail!("model {model_id} is not in the store; add it with `regrel store put-model`");
    }
    match state.sets.get(&set.use_case_id) {
        Some(stored) if stored.paragraphs() == set.paragraphs() => {}
        Some(_) => bail!("store holds a different set named {}", set.use_case_id),
        None => {
            store.commit(StoreRecord::SetPut {
                set_id: set.use_case_id.clone(),
                paragraphs: set.paragraphs().to_vec(),
            })?;
        }
    }
    let run_id = store.next_run_id();
    store.commit(StoreRecord::RunStarted {
        run: RunInfo {
            run_id: run_id.clone(),
            kind,
            model_id: model_id.into(),
            set_id: set.use_case_id.clone(),
            params,
            status: RunStatus::Running,
            error: None,
            started_at: Utc::now(),
            finished_at: None,
        },
    })?;
    store.commit(StoreRecord::RunFinished {
        run_id: run_id.clone(),
        output: make_output(&run_id),
        at: Utc::now(),
    })?;
    Ok(run_id)
}

fn rank(a: RankArgs) -> Result<()> {
    let set = io::read_study_set(&a.set, None)?;
    let model = io::read_process(&a.process)?;
    let req = RankRequest {
        model_id: model.model_id.clone(),
        set_id: set.use_case_id.clone(),
        level: Level::try_from(a.level).map_err(anyhow::Error::msg)?,
        method: a.method.into(),
        initial_k: a.initial_k,
        provider: match a.provider {
            ProviderArg::Fallback => ProviderChoice::Fallback,
            ProviderArg::Remote => ProviderChoice::Remote,
        },
    };
    req.config().validate()?;
    let remote = RemoteConfig::from_env();
    let out = runs::rank_level(&set, &model, req.level, &req.config(), &req.provider, remote.as_ref())?;
    io::write_jsonl(&a.out, &out.rankings)?;
    log::info!("wrote {} rankings to {}", out.rankings.len(), a.out.display());
    if let (Some(pred_path), Some(gold_path)) = (&a.predictions, &a.gold) {
        let gold = io::read_gold(gold_path, &model, &set.use_case_id)?;
        let output = RunOutput::Rankings {
            run_id: String::new(),
            rankings: out.rankings.clone(),
        };
        let preds = runs::output_predictions(&output, &set, &model, &gold)?;
        write_predictions(pred_path, preds, req.method.as_str(), &digest(&req))?;
    }
    if let Some(dir) = &a.store {
        let rankings = out.rankings;
        let run_id = record_run(
            dir,
            RunKind::Rank,
            &set,
            &model.model_id,
            serde_json::to_value(&req)?,
            |id| RunOutput::Rankings {
                run_id: id.into(),
                rankings,
            },
        )?;
        println!("{run_id}");
    }
    Ok(())
}

fn judge(a: JudgeArgs) -> Result<()> {
    let set = io::read_study_set(&a.set, None)?;
    let model = io::read_process(&a.process)?;
    let documents: BTreeMap<DocId, RegulatoryDocument> = match &a.documents {
        Some(p) => io::read_documents(p)?,
        None => BTreeMap::new(),
    };
    let req = JudgeRequest {
        model_id: model.model_id.clone(),
        set_id: set.use_case_id.clone(),
        params: JudgeParams {
            iteration: a.iteration,
            config: JudgeConfig {
                closure: if a.strict {
                    ClosureMode::Strict
                } else {
                    ClosureMode::Lenient
                },
                subprocess_threshold: a.subprocess_threshold,
                ..JudgeConfig::default()
            },
            max_in_flight: a.max_in_flight,
        },
    };
    let cfg = RemoteConfig::from_env()
        .with_context(|| format!("judging needs a chat provider; set {}", regrel::remote::ENV_BASE_URL))?;
    let provider = RemoteProvider::new(cfg)?;
    let out = runs::judge_set(&provider, &set, &documents, &model, &req.params)?;
    io::write_jsonl(&a.out, &out.judgments)?;
    log::info!(
        "{} judged, {} failed, {} warnings",
        out.judgments.len(),
        out.failures.len(),
        out.warnings.len()
    );
    if let Some(path) = &a.predictions {
        let preds = out
            .judgments
            .iter()
            .map(|j| (j.para_id.clone(), j.labels.clone()))
            .collect();
        write_predictions(path, preds, &runs::judge_method_name(a.iteration), &digest(&req))?;
    }
    if !out.failures.is_empty() {
        bail!("{} paragraphs could not be judged", out.failures.len());
    }
    if let Some(dir) = &a.store {
        let judgments = out.judgments;
        let run_id = record_run(
            dir,
            RunKind::Judge,
            &set,
            &model.model_id,
            serde_json::to_value(&req)?,
            |id| RunOutput::Judgments {
                run_id: id.into(),
                method: runs::judge_method_name(a.iteration),
                judgments,
            },
        )?;
        println!("{run_id}");
    }
    Ok(())
}

fn crowd_aggregate(
    input: &Path,
    process: &Path,
    strategy: StrategyArg,
    threshold: Option<f64>,
    out: &Path,
) -> Result<()> {
    let model = io::read_process_skeleton(process)?;
    let subs = WorkerSubmission::parse_jsonl(&io::read_text(input)?)?;
    let mut config = AggregationConfig::with_strategy(strategy.into());
    if let Some(t) = threshold {
        config.vote_rule = VoteRule::Proportion { threshold: t };
    }
    let aggregates = aggregate_all(&subs, &model, &config)?;
    let mut preds = BTreeMap::new();
    for (id, agg) in aggregates {
        for w in &agg.warnings {
            log::warn!("{id}: {w:?}");
        }
        if !agg.has_data() {
            log::warn!("{id}: no qualified submissions, predicted irrelevant");
        }
        preds.insert(id, agg.labels);
    }
    let method = format!(
        "crowd_{}",
        serde_json::to_value(config.strategy)?.as_str().unwrap_or_default()
    );
    write_predictions(out, preds, &method, &digest(&config))
}

fn eval(a: EvalArgs) -> Result<()> {
    let model = io::read_process_skeleton(&a.process)?;
    let set = a.set.as_deref().map(|p| io::read_study_set(p, None)).transpose()?;
    let use_case = set
        .as_ref()
        .map_or_else(|| io::stem(&a.gold), |s| s.use_case_id.clone());
    let gold = io::read_gold(&a.gold, &model, &use_case)?;
    let preds = io::read_predictions(&a.pred)?;
    let groups = set.as_ref().map(StudySet::groups).unwrap_or_default();
    let report = evaluate(&preds, &gold, &groups, &model)?;
    match &a.out {
        Some(path) => io::write_json(path, &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    for m in &report.levels {
        let show = |r: &Option<regrel_core::eval::RatioView>| {
            r.as_ref().map_or("n/a".into(), |v| format!("{:.2}", v.0.rounded()))
        };
        log::info!(
            "level {}: accuracy {} precision {} recall {}",
            m.level,
            show(&m.accuracy),
            show(&m.precision),
            show(&m.recall)
        );
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let uc = match a.use_case {
        UseCaseArg::Uc1 => UseCase::One,
        UseCaseArg::Uc2 => UseCase::Two,
    };
    let case = synth::generate(uc);
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    io::write_jsonl(&a.out.join("documents.jsonl"), &case.documents)?;
    io::write_jsonl(&a.out.join("set.jsonl"), case.set.paragraphs())?;
    io::write_jsonl(&a.out.join("crowd_set.jsonl"), case.crowd_set.paragraphs())?;
    io::write_json(&a.out.join("process.json"), &case.model)?;
    io::write_jsonl(&a.out.join("gold.jsonl"), &case.gold)?;
    log::info!("wrote synthetic {} to {}", uc.id(), a.out.display());
    Ok(())
}

fn serve(a: ServeArgs) -> Result<()> {
    let store = Store::open(&a.store)?;
    let state = AppState::new(store).with_remote(RemoteConfig::from_env());
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(service::serve(state, &a.listen))
}

fn store(c: StoreCommand) -> Result<()> {
    match c {
        StoreCommand::PutSet { store, set, set_id } => {
            let s = io::read_study_set(&set, set_id.as_deref())?;
            Store::open(&store)?.commit(StoreRecord::SetPut {
                set_id: s.use_case_id.clone(),
                paragraphs: s.paragraphs().to_vec(),
            })?;
        }
        StoreCommand::PutDocuments { store, documents } => {
            let documents = io::read_documents(&documents)?.into_values().collect();
            Store::open(&store)?.commit(StoreRecord::DocumentsPut { documents })?;
        }
        StoreCommand::PutModel {
            store,
            process,
            use_case,
        } => {
            let model = io::read_process(&process)?;
            Store::open(&store)?.commit(StoreRecord::ModelPut {
                model,
                use_case_id: use_case,
            })?;
        }
        StoreCommand::Enqueue { store, run, top_k } => {
            let policy = match top_k {
                Some(k) => EnqueuePolicy::TopK { k },
                None => EnqueuePolicy::LabelFilter,
            };
            let items = Store::open(&store)?.enqueue(&run, policy)?;
            println!("{} items queued", items.len());
        }
        StoreCommand::ImportGold { store, model_id, gold } => {
            let records = regrel_core::eval::GoldStandard::parse_jsonl(&io::read_text(&gold)?)?;
            Store::open(&store)?.import_gold(&model_id, records)?;
        }
        StoreCommand::ExportGold { store, model_id, out } => {
            let store = Store::open(&store)?;
            let review = store
                .state()
                .reviews
                .get(&model_id)
                .with_context(|| format!("unknown model {model_id}"))?;
            io::write_atomic(&out, review.gold().to_jsonl().as_bytes())?;
        }
        StoreCommand::Snapshot { store } => {
            println!("{}", Store::open(&store)?.snapshot()?.display());
        }
    }
    Ok(())
}
