//! Subcommand implementations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::json;

use adam_core::augment::{
    augment_all, judge_csp, judge_tcp, leakage_venn, AugmentCache, AugmentationMode,
    CompletionProvider, HttpProvider, HttpProviderConfig, JudgeKind, JudgeVerdict, MockProvider,
};
use adam_core::clad::{
    AblationFlags, CladModel, ContrastiveMode, EmbeddingStore, LossConfig, ModelDims,
    TeacherBundle,
};
use adam_core::corpus::{
    load_dataset, stratified_split, write_dataset, Dataset, DatasetSplit, LanguageCode, Sample,
    TraitScheme, VariantTag,
};
use adam_core::eval::{mcnemar, pooled_aggregate, MetricsTable, PredictionCell, PredictionSet};
use adam_core::linguistics::corpus_report;
use adam_core::probe::{probe_split, run_probe_suite_rows, ClassRows, ProbeConfig, ProbeKind};
use adam_core::train::{
    evaluate_model, generate_synthetic, leave_one_language_out, load_checkpoint,
    prediction_set_average_ba, run_ablation, save_checkpoint, standard_ablation_combos, train,
    zero_shot_crosslingual, Checkpoint, GroundTruth, Objective, SyntheticConfig, TrainConfig,
    TrainData,
};
use adam_core::{Error, Result};

use crate::config::FileConfig;
use crate::manifest::ManifestBuilder;
use crate::{
    AblateArgs, AugmentArgs, Cli, Command, EvalArgs, GeneralizeArgs, JudgeArgs, LintArgs,
    ProbeArgs, SynthArgs, TrainArgs, TrainOpts, ZeroshotArgs,
};

pub fn run(cli: Cli) -> Result<()> {
    let file_cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth(args) => synth(args, cli.json),
        Command::Augment(args) => augment(args, cli.json),
        Command::Judge(args) => judge(args, cli.json),
        Command::Lint(args) => lint(args, cli.json),
        Command::Train(args) => cmd_train(args, &file_cfg, cli.json),
        Command::Ablate(args) => ablate(args, &file_cfg, cli.json),
        Command::Eval(args) => eval(args, cli.json),
        Command::Probe(args) => probe(args, cli.json),
        Command::Generalize(args) => generalize(args, &file_cfg, cli.json),
        Command::Zeroshot(args) => zeroshot(args, &file_cfg, cli.json),
    }
}

fn parse_f64_list(raw: &str, languages: usize, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad {what} value {p:?}")))
        })
        .collect::<Result<_>>()?;
    match parts.len() {
        1 => Ok(vec![parts[0]; languages]),
        n if n == languages => Ok(parts),
        n => Err(Error::Config(format!(
            "{what} lists {n} values for {languages} languages"
        ))),
    }
}

fn parse_ratios(raw: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<f64> = raw
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad split ratio {p:?}")))
        })
        .collect::<Result<_>>()?;
    if parts.len() != 3 {
        return Err(Error::Config("split ratios need exactly three values".into()));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn emit(json_mode: bool, human: &str, payload: serde_json::Value) {
    if json_mode {
        println!("{payload}");
    } else {
        println!("{human}");
    }
}

// ---------------------------------------------------------------- synth

fn synth(args: SynthArgs, json_mode: bool) -> Result<()> {
    let cfg = SyntheticConfig {
        languages: args.languages,
        dims: args.dims,
        groups: args.groups,
        signal_strength: args.signal_strength,
        teacher_blind_last_dim: args.teacher_blind_last_dim,
        language_spread: args.language_spread,
        noise: parse_f64_list(&args.noise, args.languages, "noise")?,
        flip_fraction: parse_f64_list(&args.flip_fraction, args.languages, "flip fraction")?,
        teacher_width: args.teacher_width,
        student_width: args.student_width,
        seed: args.seed,
    };
    let mut mb = ManifestBuilder::new(
        "synth",
        &args.out,
        json!({
            "synthetic": cfg,
            "split_ratios": args.split_ratios,
            "split_seed": args.split_seed,
        }),
    )?;
    mb.seed(args.seed);

    let data = generate_synthetic(&cfg)?;
    let split = stratified_split(&data.dataset, parse_ratios(&args.split_ratios)?, args.split_seed)?;

    write_dataset(&mb.out_path("dataset.jsonl"), &data.dataset)?;
    mb.note_output("dataset.jsonl");
    data.embeddings
        .write(&mb.out_path("student_embeddings.jsonl"))?;
    mb.note_output("student_embeddings.jsonl");
    data.teacher.write(&mb.out_path("teacher.jsonl"))?;
    mb.note_output("teacher.jsonl");
    mb.write_output(
        "split.json",
        &serde_json::to_string_pretty(&split).expect("split serializes"),
    )?;
    mb.write_output(
        "truth.json",
        &serde_json::to_string_pretty(&data.truth).expect("truth serializes"),
    )?;
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "wrote {} samples across {} groups to {}",
            data.dataset.len(),
            args.groups,
            args.out.display()
        ),
        json!({"status": "ok", "samples": data.dataset.len(), "outputs": manifest.outputs}),
    );
    Ok(())
}

// ------------------------------------------------------------ providers

fn make_provider(
    name: &str,
    base_url: Option<String>,
    model: Option<String>,
    token_env: String,
    temperature: Option<f64>,
    mock_keywords: &str,
) -> Result<Box<dyn CompletionProvider>> {
    match name {
        "mock" => Ok(Box::new(MockProvider::new(
            mock_keywords
                .split(',')
                .map(|k| k.trim().to_lowercase())
                .filter(|k| !k.is_empty())
                .collect(),
        ))),
        "http" => {
            let defaults = HttpProviderConfig::default();
            Ok(Box::new(HttpProvider::new(HttpProviderConfig {
                base_url: base_url.unwrap_or(defaults.base_url),
                model: model.unwrap_or(defaults.model),
                token_env,
                temperature,
                ..defaults
            })?))
        }
        other => Err(Error::Config(format!("unknown provider {other:?}"))),
    }
}

// -------------------------------------------------------------- augment

fn augment(args: AugmentArgs, json_mode: bool) -> Result<()> {
    let scheme = TraitScheme::parse(&args.scheme)?;
    let mode = AugmentationMode::parse(&args.mode)?;
    let target = LanguageCode::parse(&args.target_lang)?;
    let provider = make_provider(
        &args.provider,
        args.base_url.clone(),
        args.model.clone(),
        args.token_env.clone(),
        args.temperature,
        &args.mock_keywords,
    )?;
    let mut mb = ManifestBuilder::new(
        "augment",
        &args.out,
        json!({
            "input": args.input.display().to_string(),
            "mode": args.mode,
            "target_lang": args.target_lang,
            "provider": provider.identity(),
            "max_inflight": args.max_inflight,
        }),
    )?;
    mb.record_input(&args.input)?;

    let dataset = load_dataset(&args.input, &scheme)?;
    let sources: Vec<Sample> = dataset
        .samples()
        .iter()
        .filter(|s| s.language == LanguageCode::En && s.variant == VariantTag::Regular)
        .cloned()
        .collect();
    if sources.is_empty() {
        return Err(Error::schema("input has no regular English samples"));
    }
    let cache = AugmentCache::open(&args.cache_dir)?;
    let results = augment_all(
        provider.as_ref(),
        mode,
        &sources,
        target,
        &cache,
        args.max_inflight,
    )?;
    let augmented: Vec<Sample> = results.into_iter().map(|(_, s)| s).collect();
    let out_dataset = Dataset::new(scheme, augmented)?;
    write_dataset(&mb.out_path("augmented.jsonl"), &out_dataset)?;
    mb.note_output("augmented.jsonl");
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "augmented {} samples into {} ({})",
            out_dataset.len(),
            args.out.display(),
            args.mode
        ),
        json!({"status": "ok", "samples": out_dataset.len(), "outputs": manifest.outputs}),
    );
    Ok(())
}

// ---------------------------------------------------------------- judge

fn run_judge(
    provider: &dyn CompletionProvider,
    kind: JudgeKind,
    original: &Dataset,
    translated: &Dataset,
) -> Result<Vec<(String, JudgeVerdict)>> {
    let originals: BTreeMap<&str, &Sample> = original
        .samples()
        .iter()
        .filter(|s| s.variant == VariantTag::Regular && s.language == LanguageCode::En)
        .map(|s| (s.group_id.as_str(), s))
        .collect();
    let mut out = Vec::new();
    for s in translated.samples() {
        if s.variant == VariantTag::Opposite {
            continue;
        }
        let verdict = match kind {
            JudgeKind::Csp => judge_csp(provider, s)?,
            JudgeKind::Tcp => {
                let orig = originals.get(s.group_id.as_str()).ok_or_else(|| {
                    Error::schema(format!("no original sample for group {:?}", s.group_id))
                })?;
                judge_tcp(provider, orig, s)?
            }
        };
        out.push((s.group_id.clone(), verdict));
    }
    Ok(out)
}

fn verdicts_jsonl(rows: &[(String, JudgeVerdict)]) -> String {
    let mut out = String::new();
    for (gid, v) in rows {
        let _ = writeln!(
            out,
            "{}",
            json!({
                "group_id": gid,
                "kind": v.kind,
                "flagged": v.flagged,
                "raw_response": v.raw_response,
            })
        );
    }
    out
}

fn judge(args: JudgeArgs, json_mode: bool) -> Result<()> {
    let scheme = TraitScheme::parse(&args.scheme)?;
    let kind = JudgeKind::parse(&args.kind)?;
    let provider = make_provider(
        &args.provider,
        args.base_url.clone(),
        args.model.clone(),
        args.token_env.clone(),
        None,
        &args.mock_keywords,
    )?;
    let mut mb = ManifestBuilder::new(
        "judge",
        &args.out,
        json!({
            "original": args.original.display().to_string(),
            "kind": args.kind,
            "provider": provider.identity(),
        }),
    )?;
    mb.record_input(&args.original)?;
    let original = load_dataset(&args.original, &scheme)?;

    let payload = match (&args.translated, &args.toga, &args.piga) {
        (Some(translated), None, None) => {
            mb.record_input(translated)?;
            let rows = run_judge(provider.as_ref(), kind, &original, &load_dataset(translated, &scheme)?)?;
            mb.write_output("verdicts.jsonl", &verdicts_jsonl(&rows))?;
            let flagged = rows.iter().filter(|(_, v)| v.flagged).count();
            json!({"status": "ok", "rows": rows.len(), "flagged": flagged})
        }
        (None, Some(toga_path), Some(piga_path)) => {
            mb.record_input(toga_path)?;
            mb.record_input(piga_path)?;
            let toga_rows = run_judge(provider.as_ref(), kind, &original, &load_dataset(toga_path, &scheme)?)?;
            let piga_rows = run_judge(provider.as_ref(), kind, &original, &load_dataset(piga_path, &scheme)?)?;
            // Align on the shared group ids, sorted.
            let toga_map: BTreeMap<&str, &JudgeVerdict> =
                toga_rows.iter().map(|(g, v)| (g.as_str(), v)).collect();
            let piga_map: BTreeMap<&str, &JudgeVerdict> =
                piga_rows.iter().map(|(g, v)| (g.as_str(), v)).collect();
            let common: Vec<&str> = toga_map
                .keys()
                .filter(|g| piga_map.contains_key(*g))
                .copied()
                .collect();
            let toga_aligned: Vec<JudgeVerdict> =
                common.iter().map(|g| toga_map[g].clone()).collect();
            let piga_aligned: Vec<JudgeVerdict> =
                common.iter().map(|g| piga_map[g].clone()).collect();
            let venn = leakage_venn(&toga_aligned, &piga_aligned)?;
            mb.write_output("verdicts_toga.jsonl", &verdicts_jsonl(&toga_rows))?;
            mb.write_output("verdicts_piga.jsonl", &verdicts_jsonl(&piga_rows))?;
            mb.write_output(
                "venn.json",
                &serde_json::to_string_pretty(&json!({
                    "toga_only": venn.toga_only,
                    "piga_only": venn.piga_only,
                    "common": venn.common,
                    "neither": venn.neither,
                    "total": venn.total(),
                }))
                .expect("venn serializes"),
            )?;
            json!({"status": "ok", "rows": common.len(), "venn": venn})
        }
        _ => {
            return Err(Error::Config(
                "pass either --translated, or both --toga and --piga".into(),
            ))
        }
    };
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!("judge outputs written to {}", args.out.display()),
        json!({"outputs": manifest.outputs, "result": payload}),
    );
    Ok(())
}

// ----------------------------------------------------------------- lint

fn lint(args: LintArgs, json_mode: bool) -> Result<()> {
    if args.method != "toga" && args.method != "piga" {
        return Err(Error::Config(format!(
            "method must be toga or piga, got {:?}",
            args.method
        )));
    }
    let scheme = TraitScheme::parse(&args.scheme)?;
    let mut mb = ManifestBuilder::new(
        "lint",
        &args.out,
        json!({"input": args.input.display().to_string(), "method": args.method}),
    )?;
    mb.record_input(&args.input)?;
    let dataset = load_dataset(&args.input, &scheme)?;
    let report = corpus_report(&dataset, &args.method);
    mb.write_output("linguistics.csv", &report.to_csv())?;
    mb.write_output("summary.json", &report.summary_json())?;
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "linguistic report over {} samples written to {}",
            report.per_sample.len(),
            args.out.display()
        ),
        json!({"status": "ok", "samples": report.per_sample.len(), "outputs": manifest.outputs}),
    );
    Ok(())
}

// ------------------------------------------------------------- training

struct LoadedData {
    dataset: Dataset,
    split: DatasetSplit,
    teacher: TeacherBundle,
    embeddings: EmbeddingStore,
    truth: Option<GroundTruth>,
}

fn load_data_dir(dir: &Path, mb: &mut ManifestBuilder) -> Result<LoadedData> {
    let dataset_path = dir.join("dataset.jsonl");
    let split_path = dir.join("split.json");
    let teacher_path = dir.join("teacher.jsonl");
    let embeddings_path = dir.join("student_embeddings.jsonl");
    for p in [&dataset_path, &split_path, &teacher_path, &embeddings_path] {
        mb.record_input(p)?;
    }
    // Scheme is inferred from the first record's label count.
    let probe_scheme = |path: &Path| -> Result<TraitScheme> {
        let raw = std::fs::read_to_string(path)?;
        let first = raw
            .lines()
            .find(|l| !l.trim().is_empty())
            .ok_or_else(|| Error::schema("dataset file is empty"))?;
        let value: serde_json::Value = serde_json::from_str(first).map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        let labels = value
            .get("labels")
            .and_then(|l| l.as_array())
            .ok_or_else(|| Error::schema("first record has no labels array"))?;
        if labels.len() == 4 {
            Ok(TraitScheme::mbti4())
        } else {
            Ok(TraitScheme::big5())
        }
    };
    let scheme = probe_scheme(&dataset_path)?;
    let dataset = load_dataset(&dataset_path, &scheme)?;
    let split: DatasetSplit = serde_json::from_str(&std::fs::read_to_string(&split_path)?)
        .map_err(|e| Error::Config(format!("bad split file: {e}")))?;
    let teacher = TeacherBundle::load(&teacher_path)?;
    let embeddings = EmbeddingStore::load(&embeddings_path)?;
    let truth_path = dir.join("truth.json");
    let truth = if truth_path.exists() {
        mb.record_input(&truth_path)?;
        Some(
            serde_json::from_str(&std::fs::read_to_string(&truth_path)?)
                .map_err(|e| Error::Config(format!("bad truth file: {e}")))?,
        )
    } else {
        None
    };
    Ok(LoadedData {
        dataset,
        split,
        teacher,
        embeddings,
        truth,
    })
}

fn resolve_train_config(opts: &TrainOpts, cfg: &FileConfig) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    Ok(TrainConfig {
        learning_rate: cfg.resolve(opts.learning_rate, "learning_rate", d.learning_rate)?,
        beta1: d.beta1,
        beta2: d.beta2,
        epsilon: d.epsilon,
        batch_groups: cfg.resolve(opts.batch_groups, "batch_groups", d.batch_groups)?,
        max_epochs: cfg.resolve(opts.max_epochs, "max_epochs", d.max_epochs)?,
        patience: cfg.resolve(opts.patience, "patience", d.patience)?,
        seed: cfg.resolve(opts.seed, "seed", d.seed)?,
    })
}

fn parse_ablation(tag: &str) -> Result<AblationFlags> {
    let mut flags = AblationFlags {
        use_kl: false,
        use_al: false,
        use_cl: false,
    };
    if tag == "full" {
        return Ok(AblationFlags::all());
    }
    for part in tag.split('+') {
        match part.trim() {
            "kl" => flags.use_kl = true,
            "al" => flags.use_al = true,
            "cl" => flags.use_cl = true,
            other => {
                return Err(Error::Config(format!(
                    "unknown loss component {other:?} (expected kl, al, cl)"
                )))
            }
        }
    }
    Ok(flags)
}

fn resolve_loss_config(opts: &TrainOpts, cfg: &FileConfig, ablation: &str) -> Result<LossConfig> {
    let d = LossConfig::default();
    let mode = match cfg
        .resolve(opts.contrastive_mode.clone(), "contrastive_mode", "corrected".to_string())?
        .as_str()
    {
        "corrected" => ContrastiveMode::Corrected,
        "literal" => ContrastiveMode::Literal,
        other => {
            return Err(Error::Config(format!(
                "contrastive mode must be corrected or literal, got {other:?}"
            )))
        }
    };
    Ok(LossConfig {
        phi: cfg.resolve(opts.phi, "phi", d.phi)?,
        psi: cfg.resolve(opts.psi, "psi", d.psi)?,
        rho: cfg.resolve(opts.rho, "rho", d.rho)?,
        tau: cfg.resolve(opts.tau, "tau", d.tau)?,
        margin: cfg.resolve(opts.margin, "margin", d.margin)?,
        contrastive_mode: mode,
        attention_literal: opts.attention_literal,
        ablation: parse_ablation(ablation)?,
    })
}

fn model_dims_for(data: &LoadedData, opts: &TrainOpts, cfg: &FileConfig) -> Result<ModelDims> {
    let teacher_width = data
        .teacher
        .iter()
        .next()
        .map(|(_, e)| e.embedding.len())
        .ok_or_else(|| Error::schema("teacher bundle is empty"))?;
    let student_width = data
        .embeddings
        .iter()
        .next()
        .map(|(_, e)| e.len())
        .ok_or_else(|| Error::schema("student embedding store is empty"))?;
    let default_proj = student_width.div_ceil(2).clamp(4, 256);
    Ok(ModelDims {
        languages: LanguageCode::ALL.len(),
        dims: data.dataset.scheme().dimension_count(),
        teacher_width,
        student_width,
        proj_width: cfg.resolve(opts.proj_width, "proj_width", default_proj)?,
    })
}

fn cmd_train(args: TrainArgs, file_cfg: &FileConfig, json_mode: bool) -> Result<()> {
    let train_cfg = resolve_train_config(&args.opts, file_cfg)?;
    let objective = match args.objective.as_str() {
        "clad" => Objective::Clad(resolve_loss_config(&args.opts, file_cfg, &args.ablation)?),
        "bce" => Objective::WeightedBce,
        other => {
            return Err(Error::Config(format!(
                "objective must be clad or bce, got {other:?}"
            )))
        }
    };
    let mut mb = ManifestBuilder::new(
        "train",
        &args.out,
        json!({
            "data": args.data.display().to_string(),
            "objective": objective.tag(),
            "train": train_cfg,
        }),
    )?;
    mb.seed(train_cfg.seed);
    let data = load_data_dir(&args.data, &mut mb)?;
    let dims = model_dims_for(&data, &args.opts, file_cfg)?;
    let mut model = CladModel::init(dims, !args.opts.frozen_encoder, train_cfg.seed);
    let tdata = TrainData {
        dataset: &data.dataset,
        split: &data.split,
        teacher: &data.teacher,
        embeddings: &data.embeddings,
    };
    let report = train(&mut model, &tdata, &objective, &train_cfg)?;

    let mut metrics = BTreeMap::new();
    metrics.insert("best_val_ba".to_string(), report.best_val_ba);
    let checkpoint = Checkpoint::from_model(
        &model,
        json!({"objective": objective.tag(), "train": train_cfg}),
        report.best_epoch.unwrap_or(0),
        metrics,
    );
    save_checkpoint(&mb.out_path("checkpoint.bin"), &checkpoint)?;
    mb.note_output("checkpoint.bin");
    mb.write_output(
        "train_report.json",
        &serde_json::to_string_pretty(&report).expect("report serializes"),
    )?;

    let set = evaluate_model(
        &model,
        &data.dataset,
        &data.embeddings,
        &data.split.validation,
        None,
    )?;
    let dataset_name = args
        .data
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "data".into());
    let dim_names = data.dataset.scheme().dimension_names().to_vec();
    let table = MetricsTable::from_predictions(&objective.tag(), &dataset_name, &dim_names, &set)?;
    mb.write_output("results.csv", &table.to_csv())?;
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "trained {} for {} epochs; best validation BA {:.4} (epoch {:?})",
            objective.tag(),
            report.epochs.len(),
            report.best_val_ba,
            report.best_epoch
        ),
        json!({
            "status": "ok",
            "best_val_ba": report.best_val_ba,
            "epochs": report.epochs.len(),
            "outputs": manifest.outputs,
        }),
    );
    Ok(())
}

fn ablate(args: AblateArgs, file_cfg: &FileConfig, json_mode: bool) -> Result<()> {
    let train_cfg = resolve_train_config(&args.opts, file_cfg)?;
    let base_loss = resolve_loss_config(&args.opts, file_cfg, "kl+al+cl")?;
    let combos: Vec<AblationFlags> = if args.combos == "all" {
        standard_ablation_combos()
    } else {
        args.combos
            .split(',')
            .map(parse_ablation)
            .collect::<Result<_>>()?
    };
    let mut mb = ManifestBuilder::new(
        "ablate",
        &args.out,
        json!({
            "data": args.data.display().to_string(),
            "combos": args.combos,
            "train": train_cfg,
            "loss": base_loss,
        }),
    )?;
    mb.seed(train_cfg.seed);
    let data = load_data_dir(&args.data, &mut mb)?;
    let dims = model_dims_for(&data, &args.opts, file_cfg)?;
    let tdata = TrainData {
        dataset: &data.dataset,
        split: &data.split,
        teacher: &data.teacher,
        embeddings: &data.embeddings,
    };
    let table = run_ablation(
        &tdata,
        &combos,
        &base_loss,
        dims,
        !args.opts.frozen_encoder,
        &train_cfg,
        args.against_truth.then_some(data.truth.as_ref()).flatten(),
    )?;
    mb.write_output("ablation.csv", &table.to_csv())?;
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "ablation over {} combos written to {}",
            table.rows.len(),
            args.out.display()
        ),
        json!({"status": "ok", "rows": table.rows.len(), "outputs": manifest.outputs}),
    );
    Ok(())
}

// ----------------------------------------------------------------- eval

type PredictionRows = Vec<(String, LanguageCode, usize, u8, u8)>;

fn predict_rows(
    model: &CladModel,
    data: &LoadedData,
    group_ids: &[String],
    against_truth: bool,
) -> Result<(PredictionRows, PredictionSet)> {
    let members: std::collections::BTreeSet<&str> =
        group_ids.iter().map(|s| s.as_str()).collect();
    let mut rows = Vec::new();
    let mut set = PredictionSet::new();
    for s in data.dataset.samples() {
        if s.variant != VariantTag::Regular || !members.contains(s.group_id.as_str()) {
            continue;
        }
        let emb = data
            .embeddings
            .get(&s.group_id, s.language, VariantTag::Regular)
            .ok_or_else(|| {
                Error::schema(format!(
                    "no student embedding for ({}, {})",
                    s.group_id, s.language
                ))
            })?;
        let truth_bits = if against_truth {
            let truth = data
                .truth
                .as_ref()
                .ok_or_else(|| Error::Config("no truth.json in this data directory".into()))?;
            truth
                .labels
                .get(&s.group_id)
                .ok_or_else(|| {
                    Error::schema(format!("ground truth is missing group {:?}", s.group_id))
                })?
                .clone()
        } else {
            s.labels.bits().to_vec()
        };
        let pred = model.predict_bits(emb);
        for (dim, (&p, &t)) in pred.iter().zip(&truth_bits).enumerate() {
            rows.push((s.group_id.clone(), s.language, dim, t, p));
            let cell = set
                .entry((s.language, dim))
                .or_insert_with(PredictionCell::default);
            cell.y_true.push(t);
            cell.y_pred.push(p);
        }
    }
    Ok((rows, set))
}

fn eval(args: EvalArgs, json_mode: bool) -> Result<()> {
    let mut mb = ManifestBuilder::new(
        "eval",
        &args.out,
        json!({
            "data": args.data.display().to_string(),
            "checkpoint": args.checkpoint.display().to_string(),
            "split": args.split,
            "against_truth": args.against_truth,
        }),
    )?;
    mb.record_input(&args.checkpoint)?;
    let data = load_data_dir(&args.data, &mut mb)?;
    let part = match args.split.as_str() {
        "train" => &data.split.train,
        "validation" => &data.split.validation,
        "test" => &data.split.test,
        other => {
            return Err(Error::Config(format!(
                "split must be train, validation, or test, got {other:?}"
            )))
        }
    };
    let model = load_checkpoint(&args.checkpoint)?.restore_model()?;
    let (rows, set) = predict_rows(&model, &data, part, args.against_truth)?;

    let dataset_name = args
        .data
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "data".into());
    let dim_names = data.dataset.scheme().dimension_names().to_vec();
    let table = MetricsTable::from_predictions(&args.name, &dataset_name, &dim_names, &set)?;
    mb.write_output("results.csv", &table.to_csv())?;

    let mut predictions_csv = String::from("group_id,language,dimension,y_true,y_pred\n");
    for (gid, lang, dim, t, p) in &rows {
        let _ = writeln!(
            predictions_csv,
            "{gid},{lang},{},{t},{p}",
            dim_names[*dim]
        );
    }
    mb.write_output("predictions.csv", &predictions_csv)?;

    let mut payload = json!({
        "status": "ok",
        "average": table.overall_average().map(|c| json!({"ba": c.ba, "f1": c.f1})),
    });
    if let Some(compare) = &args.compare {
        mb.record_input(compare)?;
        let other = load_checkpoint(compare)?.restore_model()?;
        let (_, other_set) = predict_rows(&other, &data, part, args.against_truth)?;
        let (truth_a, preds_a) = pooled_aggregate(&set)?;
        let (truth_b, preds_b) = pooled_aggregate(&other_set)?;
        if truth_a != truth_b {
            return Err(Error::schema(
                "compared checkpoints saw different evaluation rows",
            ));
        }
        let result = mcnemar(&preds_a, &preds_b, &truth_a)?;
        mb.write_output(
            "mcnemar.json",
            &serde_json::to_string_pretty(&json!({
                "b": result.b,
                "c": result.c,
                "chi2": result.chi2,
                "p": result.p,
                "significant": result.significant(),
            }))
            .expect("mcnemar serializes"),
        )?;
        payload["mcnemar"] = json!({"b": result.b, "c": result.c, "p": result.p});
    }
    let manifest = mb.finish()?;
    payload["outputs"] = json!(manifest.outputs);
    emit(
        json_mode,
        &format!("{}", table.to_text()),
        payload,
    );
    Ok(())
}

// ---------------------------------------------------------------- probe

fn load_probe_rows(path: &Path) -> Result<ClassRows> {
    let store = EmbeddingStore::load(path)?;
    Ok(store
        .iter()
        .map(|((gid, _, _), emb)| (gid.clone(), emb.clone()))
        .collect())
}

fn probe(args: ProbeArgs, json_mode: bool) -> Result<()> {
    let kind = ProbeKind::parse(&args.kind)?;
    if args.seeds < 2 {
        return Err(Error::Config("need at least two probe seeds".into()));
    }
    let mut mb = ManifestBuilder::new(
        "probe",
        &args.out,
        json!({
            "a": args.a.display().to_string(),
            "b": args.b.display().to_string(),
            "kind": args.kind,
            "seeds": args.seeds,
            "l2": args.l2,
            "epochs": args.epochs,
            "learning_rate": args.learning_rate,
        }),
    )?;
    mb.record_input(&args.a)?;
    mb.record_input(&args.b)?;
    let minus = load_probe_rows(&args.a)?;
    let plus = load_probe_rows(&args.b)?;
    let split = match &args.split {
        Some(path) => {
            mb.record_input(path)?;
            serde_json::from_str(&std::fs::read_to_string(path)?)
                .map_err(|e| Error::Config(format!("bad split file: {e}")))?
        }
        None => {
            let ids: Vec<String> = minus
                .iter()
                .chain(plus.iter())
                .map(|(g, _)| g.clone())
                .collect();
            probe_split(&ids, args.split_seed)?
        }
    };
    let seeds: Vec<u64> = (0..args.seeds).collect();
    let summary = run_probe_suite_rows(
        &minus,
        &plus,
        &split,
        kind,
        &ProbeConfig {
            l2: args.l2,
            epochs: args.epochs,
            learning_rate: args.learning_rate,
        },
        &seeds,
    )?;
    mb.write_output(
        "probe.json",
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "probe ({:?}) mean −/+ = {:.2} / {:.2}, std {:.2} / {:.2}",
            summary.kind,
            summary.mean_minus,
            summary.mean_plus,
            summary.std_minus,
            summary.std_plus
        ),
        json!({
            "status": "ok",
            "mean_minus": summary.mean_minus,
            "mean_plus": summary.mean_plus,
            "outputs": manifest.outputs,
        }),
    );
    Ok(())
}

// -------------------------------------------------- generalize/zeroshot

fn held_out_csv(rows: &[adam_core::train::HeldOutResult]) -> String {
    let mut out = String::from("language,average_ba\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.6}", r.language, r.average_ba);
    }
    out
}

fn generalize(args: GeneralizeArgs, file_cfg: &FileConfig, json_mode: bool) -> Result<()> {
    let train_cfg = resolve_train_config(&args.opts, file_cfg)?;
    let loss = resolve_loss_config(&args.opts, file_cfg, "kl+al+cl")?;
    let mut mb = ManifestBuilder::new(
        "generalize",
        &args.out,
        json!({"data": args.data.display().to_string(), "train": train_cfg}),
    )?;
    mb.seed(train_cfg.seed);
    let data = load_data_dir(&args.data, &mut mb)?;
    let dims = model_dims_for(&data, &args.opts, file_cfg)?;
    let tdata = TrainData {
        dataset: &data.dataset,
        split: &data.split,
        teacher: &data.teacher,
        embeddings: &data.embeddings,
    };
    let rows = leave_one_language_out(
        &tdata,
        &Objective::Clad(loss),
        dims,
        !args.opts.frozen_encoder,
        &train_cfg,
        args.against_truth.then_some(data.truth.as_ref()).flatten(),
    )?;
    mb.write_output("lolo.csv", &held_out_csv(&rows))?;
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "leave-one-language-out over {} languages written to {}",
            rows.len(),
            args.out.display()
        ),
        json!({"status": "ok", "rows": rows.len(), "outputs": manifest.outputs}),
    );
    Ok(())
}

fn zeroshot(args: ZeroshotArgs, file_cfg: &FileConfig, json_mode: bool) -> Result<()> {
    let train_cfg = resolve_train_config(&args.opts, file_cfg)?;
    let loss = resolve_loss_config(&args.opts, file_cfg, "kl+al+cl")?;
    let mut mb = ManifestBuilder::new(
        "zeroshot",
        &args.out,
        json!({"data": args.data.display().to_string(), "train": train_cfg}),
    )?;
    mb.seed(train_cfg.seed);
    let data = load_data_dir(&args.data, &mut mb)?;
    let dims = model_dims_for(&data, &args.opts, file_cfg)?;
    let tdata = TrainData {
        dataset: &data.dataset,
        split: &data.split,
        teacher: &data.teacher,
        embeddings: &data.embeddings,
    };
    let rows = zero_shot_crosslingual(
        &tdata,
        &Objective::Clad(loss),
        dims,
        !args.opts.frozen_encoder,
        &train_cfg,
        args.against_truth.then_some(data.truth.as_ref()).flatten(),
    )?;
    mb.write_output("zeroshot.csv", &held_out_csv(&rows))?;
    let manifest = mb.finish()?;
    emit(
        json_mode,
        &format!(
            "zero-shot evaluation over {} languages written to {}",
            rows.len(),
            args.out.display()
        ),
        json!({"status": "ok", "rows": rows.len(), "outputs": manifest.outputs}),
    );
    Ok(())
}
