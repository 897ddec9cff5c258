use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context as _, Result};
use log::{info, warn};
use serde::Serialize;

use emotts::dataset::{
    augment_descriptions, hard_case_corpus, overfit_corpus, read_manifest, run_pipeline, select_split, split, stats,
    write_manifest, ClientSuite, ManifestEntry, PipelineConfig, RuleParaphraser, Split, SplitSizes, ToyTranscriber,
    DEFAULT_PARAPHRASES,
};
use emotts::decode::{generate_batch, DecodeConfig, GenerationResult, StopReason};
use emotts::eval::DEFAULT_RECALL_CATEGORIES;
use emotts::eval::{evaluate, render_table, synthetic_audit, AuditConfig, EvalItem, EvalReport, ToyEmotionModel};
use emotts::model::{Checkpoint, Model, ModelConfig, Variant};
use emotts::toyspeech::{transcribe_phonemes, EmotionCategory, CODEBOOK_SIZE};
use emotts::train::gradcheck::tiny_fixture;
use emotts::train::{
    build_targets, fit, grad_check as check_gradients, prompt_records, FitHooks, GradCheckOptions, Phase, TrainConfig,
    TrainingLog,
};
use emotts::vocab::{format_prompt, TokenId};

use crate::{AuditArgs, CompareArgs, Context, DecodeArgs, EvalArgs, GenDataArgs, GradCheckArgs, SynthArgs, TrainArgs};

#[derive(Serialize)]
struct Seeded<'a, T: Serialize> {
    seed: u64,
    #[serde(flatten)]
    body: &'a T,
}

fn write_json<T: Serialize>(path: &Path, seed: u64, body: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(&Seeded { seed, body })?)
        .with_context(|| format!("writing {}", path.display()))
}

fn write_jsonl<T: Serialize>(path: &Path, seed: u64, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for body in rows {
        out.push_str(&serde_json::to_string(&Seeded { seed, body })?);
        out.push('\n');
    }
    fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

fn parse_split(name: &str) -> Result<Option<Split>> {
    Ok(match name {
        "all" => None,
        "train" => Some(Split::Train),
        "val" => Some(Split::Val),
        "test" => Some(Split::Test),
        other => bail!("unknown split `{other}` (expected train, val, test or all)"),
    })
}

/// Reads a manifest and keeps one split; unlabelled manifests are kept whole.
fn load_entries(path: &str, split_name: &str) -> Result<Vec<ManifestEntry>> {
    let entries = read_manifest(path).with_context(|| format!("reading manifest {path}"))?;
    let chosen = match parse_split(split_name)? {
        Some(s) => select_split(&entries, s),
        None => entries,
    };
    ensure!(!chosen.is_empty(), "manifest {path} has no `{split_name}` entries");
    Ok(chosen)
}

fn recall_categories(names: &str) -> Result<Vec<EmotionCategory>> {
    match names {
        "default" => Ok(DEFAULT_RECALL_CATEGORIES.to_vec()),
        "all" => Ok(EmotionCategory::ALL.to_vec()),
        list => list
            .split(',')
            .map(|s| s.trim().parse::<EmotionCategory>().map_err(Into::into))
            .collect(),
    }
}

fn load_checkpoint(path: &str) -> Result<Checkpoint> {
    Checkpoint::load(path).with_context(|| format!("loading checkpoint {path}"))
}

/// The checkpoint's codec partition must cover every manifest token.
fn check_compatible(model: &Model, entries: &[ManifestEntry]) -> Result<()> {
    let audio = model.layout().audio_size;
    ensure!(
        audio == CODEBOOK_SIZE,
        "checkpoint audio partition has {audio} ids but the toy codec needs {CODEBOOK_SIZE}"
    );
    if let Some(e) = entries
        .iter()
        .find(|e| e.audio_tokens.iter().any(|&t| t as usize >= audio))
    {
        bail!(
            "entry `{}` has audio tokens outside the checkpoint's audio partition",
            e.id
        );
    }
    Ok(())
}

fn decode_config(ctx: &mut Context, a: &DecodeArgs) -> Result<DecodeConfig> {
    let d = DecodeConfig::default();
    let cfg = DecodeConfig {
        repetition_penalty: ctx
            .settings
            .get("repetition-penalty", a.repetition_penalty, d.repetition_penalty)?,
        max_steps: ctx.settings.get("max-steps", a.max_steps, d.max_steps)?,
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn gen_data(ctx: &mut Context, a: GenDataArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let corpus = s.get("corpus", a.corpus, "pipeline".to_string())?;
    let paraphrases = s.get("paraphrases", a.paraphrases, DEFAULT_PARAPHRASES)?;
    let (entries, pipeline) = match corpus.as_str() {
        "pipeline" => {
            let mut cfg = PipelineConfig::new(s.get("per-emotion", a.per_emotion, 10)?, ctx.seed);
            cfg.wer_threshold = s.get("wer-threshold", a.wer_threshold, cfg.wer_threshold)?;
            cfg.retry_cap = s.get("retry-cap", a.retry_cap, cfg.retry_cap)?;
            let out = run_pipeline(&cfg, &ClientSuite::toy(ctx.seed))?;
            info!(
                "{} pairs accepted, {} text / {} description rejections, {} filtered by WER",
                out.report.generated,
                out.report.text_rejections,
                out.report.description_rejections,
                out.report.filtered
            );
            (out.entries, Some(out.report))
        }
        "overfit" => (overfit_corpus(s.get("count", a.count, 64)?)?, None),
        "hard" => (hard_case_corpus()?, None),
        other => bail!("unknown corpus `{other}` (expected pipeline, overfit or hard)"),
    };
    let (mut entries, shortfalls) = augment_descriptions(&entries, &RuleParaphraser, paraphrases);
    if !shortfalls.is_empty() {
        warn!(
            "{} entries received fewer than {paraphrases} description variants",
            shortfalls.len()
        );
    }
    if pipeline.is_some() {
        let smallest = EmotionCategory::ALL
            .iter()
            .map(|&e| entries.iter().filter(|x| x.emotion == e).count())
            .filter(|&n| n > 0)
            .min()
            .unwrap_or(0);
        entries = split(&entries, SplitSizes::scaled(smallest), ctx.seed)?;
    }
    let dir = ctx.run_dir("gen-data")?;
    write_manifest(dir.file("manifest.jsonl"), &entries)?;
    let table = stats(&entries).render();
    fs::write(dir.file("stats.txt"), &table)?;
    if let Some(report) = &pipeline {
        write_json(&dir.file("pipeline_report.json"), ctx.seed, report)?;
    }
    print!("{table}");
    println!("manifest: {}", dir.file("manifest.jsonl").display());
    Ok(())
}

/// Longest teacher-forcing sequence the data needs under `config`.
fn required_context(entries: &[ManifestEntry], config: &ModelConfig, phase: Phase) -> Result<usize> {
    let mut longest = 0;
    for e in entries {
        let streams = build_targets(e, config.variant, &config.layout, config.group_size)?;
        let prompt = prompt_records(e, phase)
            .iter()
            .map(|r| format_prompt(r, &config.layout).map(|p| p.len()))
            .collect::<emotts::Result<Vec<_>>>()?
            .into_iter()
            .max()
            .unwrap_or(0);
        longest = longest.max(prompt + streams.decode_steps());
    }
    Ok(longest)
}

pub fn train(ctx: &mut Context, a: TrainArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let manifest = s.require::<String>("manifest", a.manifest)?;
    let phase = s.get("phase", a.phase, Phase::Pretrain)?;
    let checkpoint = s.get_opt::<String>("checkpoint", a.checkpoint)?;
    let split_name = s.get("split", a.split, "train".to_string())?;
    let entries = load_entries(&manifest, &split_name)?;
    let m = &a.model;
    let requested = s.get_opt("variant", m.variant)?;

    let mut model = match &checkpoint {
        Some(path) => {
            let ck = load_checkpoint(path)?;
            if let Some(v) = requested {
                ensure!(
                    v == ck.model.variant(),
                    "checkpoint {path} holds variant {}, not {v}",
                    ck.model.variant()
                );
            }
            info!("starting from {path} ({} step {})", ck.phase, ck.step);
            ck.model
        }
        None if phase == Phase::Finetune => {
            bail!("finetuning needs --checkpoint pointing at a pretrained model")
        }
        None => {
            let variant = requested.unwrap_or(Variant::AudioOnly);
            let mut config = ModelConfig::toy(variant);
            config.group_size = s.get("group-size", m.group_size, config.group_size)?;
            config.d_model = s.get("d-model", m.d_model, config.d_model)?;
            config.n_layers = s.get("layers", m.layers, config.n_layers)?;
            config.n_heads = s.get("heads", m.heads, config.n_heads)?;
            config.ff_dim = s.get("ff-dim", m.ff_dim, config.ff_dim)?;
            let needed = required_context(&entries, &config, phase)?;
            config.max_seq_len = s.get("max-seq-len", m.max_seq_len, config.max_seq_len.max(needed))?;
            Model::new(config, ctx.seed)?
        }
    };
    check_compatible(&model, &entries)?;

    let steps = s.get("steps", a.steps, 1000)?;
    let mut tc = TrainConfig::new(phase, steps);
    tc.peak_lr = s.get("lr", a.lr, tc.peak_lr)?;
    tc.warmup_steps = s.get("warmup", a.warmup, tc.warmup_steps)?;
    tc.batch_size = s.get("batch-size", a.batch_size, tc.batch_size)?;
    tc.checkpoint_every = s.get_opt("checkpoint-every", a.checkpoint_every)?;
    tc.seed = ctx.seed;
    tc.validate()?;

    let dir = ctx.run_dir("train")?;
    let every = (steps / 20).max(1);
    let hooks = FitHooks {
        checkpoint_dir: Some(dir.path.clone()),
        on_step: Some(Box::new(move |r, _| {
            if r.step % every == 0 || r.step == 1 {
                info!("step {:>6}  lr {:.3e}  loss {:.5}", r.step, r.lr, r.loss);
            }
        })),
    };
    info!(
        "training {} ({} parameters) on {} entries, {} phase, {steps} steps",
        model.variant(),
        model.weights.parameter_count(),
        entries.len(),
        phase
    );
    let log: TrainingLog = fit(&mut model, &entries, &tc, hooks)?;
    log.write_jsonl(dir.file("train_log.jsonl"))?;
    let last = log.checkpoints.last().context("no checkpoint written")?;
    println!(
        "loss {:.5} -> {:.5}; checkpoint: {}",
        log.first_loss().unwrap_or(f64::NAN),
        log.last_loss().unwrap_or(f64::NAN),
        last.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct GenerationRecord<'a> {
    id: &'a str,
    #[serde(flatten)]
    result: &'a GenerationResult,
}

/// Greedy synthesis of every entry; returns manifest-shaped records
/// carrying the generated audio and phonemes, plus the raw results.
fn synthesize(
    ck: &Checkpoint,
    entries: &[ManifestEntry],
    cfg: &DecodeConfig,
) -> Result<(Vec<ManifestEntry>, Vec<GenerationResult>)> {
    let model = &ck.model;
    check_compatible(model, entries)?;
    let phase = ck.phase.parse::<Phase>().unwrap_or(Phase::Finetune);
    let prompts: Vec<Vec<TokenId>> = entries
        .iter()
        .map(|e| {
            let record = prompt_records(e, phase)
                .into_iter()
                .next()
                .context("entry without prompt")?;
            format_prompt(&record, model.layout()).with_context(|| format!("prompt for `{}`", e.id))
        })
        .collect::<Result<_>>()?;
    let results = generate_batch(model, &prompts, cfg)?;
    let records = entries
        .iter()
        .zip(&results)
        .map(|(e, g)| {
            let decoded = g.phonemes(model.layout());
            ManifestEntry {
                phonemes: if decoded.is_empty() {
                    transcribe_phonemes(&g.audio_tokens)
                } else {
                    decoded
                },
                audio_tokens: g.audio_tokens.clone(),
                wer: None,
                ..e.clone()
            }
        })
        .collect();
    let capped = results.iter().filter(|g| g.stop_reason != StopReason::Eos).count();
    if capped > 0 {
        warn!(
            "{capped} of {} generations stopped without an end marker",
            results.len()
        );
    }
    Ok((records, results))
}

fn write_generations(path: &Path, seed: u64, entries: &[ManifestEntry], results: &[GenerationResult]) -> Result<()> {
    let rows: Vec<GenerationRecord> = entries
        .iter()
        .zip(results)
        .map(|(e, result)| GenerationRecord { id: &e.id, result })
        .collect();
    write_jsonl(path, seed, &rows)
}

pub fn synth(ctx: &mut Context, a: SynthArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let checkpoint = s.require::<String>("checkpoint", a.checkpoint)?;
    let manifest = s.require::<String>("manifest", a.manifest)?;
    let split_name = s.get("split", a.split, "test".to_string())?;
    let cfg = decode_config(ctx, &a.decode)?;
    let ck = load_checkpoint(&checkpoint)?;
    let entries = load_entries(&manifest, &split_name)?;
    let (records, results) = synthesize(&ck, &entries, &cfg)?;
    let dir = ctx.run_dir("synth")?;
    write_manifest(dir.file("synth.jsonl"), &records)?;
    write_generations(&dir.file("generations.jsonl"), ctx.seed, &records, &results)?;
    println!("{} utterances: {}", records.len(), dir.file("synth.jsonl").display());
    Ok(())
}

/// Pairs each generated record with its reference by id.
fn eval_items(generated: &[ManifestEntry], reference: &[ManifestEntry]) -> Result<Vec<EvalItem>> {
    generated
        .iter()
        .map(|g| {
            let r = reference
                .iter()
                .find(|r| r.id == g.id)
                .with_context(|| format!("no reference entry for `{}`", g.id))?;
            Ok(EvalItem {
                id: g.id.clone(),
                text: r.text.clone(),
                emotion: r.emotion,
                generated: g.audio_tokens.clone(),
                reference: r.audio_tokens.clone(),
            })
        })
        .collect()
}

fn score(items: &[EvalItem], recall: &[EmotionCategory], seed: u64) -> Result<EvalReport> {
    let mut report = evaluate(items, &ToyTranscriber, &ToyEmotionModel, recall)?;
    report.seed = Some(seed);
    Ok(report)
}

pub fn eval(ctx: &mut Context, a: EvalArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let reference_path = s.require::<String>("reference", a.reference)?;
    let generated_path = s.get_opt::<String>("generated", a.generated)?;
    let split_name = s.get("split", a.split, "all".to_string())?;
    let recall = recall_categories(&s.get("recall", a.recall, "default".to_string())?)?;
    let reference = read_manifest(&reference_path).with_context(|| format!("reading {reference_path}"))?;
    let generated = load_entries(generated_path.as_deref().unwrap_or(&reference_path), &split_name)?;
    let report = score(&eval_items(&generated, &reference)?, &recall, ctx.seed)?;
    let dir = ctx.run_dir("eval")?;
    fs::write(dir.file("report.json"), report.to_json()?)?;
    let name = generated_path
        .as_deref()
        .and_then(|p| Path::new(p).file_stem())
        .map_or("reference".to_string(), |s| s.to_string_lossy().into_owned());
    let table = render_table(&[(name, report)]);
    fs::write(dir.file("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn compare(ctx: &mut Context, a: CompareArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let joined = (!a.systems.is_empty()).then(|| a.systems.join(","));
    let systems_list = s.require::<String>("system", joined)?;
    let manifest = s.require::<String>("manifest", a.manifest)?;
    let split_name = s.get("split", a.split, "test".to_string())?;
    let recall = recall_categories(&s.get("recall", a.recall, "default".to_string())?)?;
    let cfg = decode_config(ctx, &a.decode)?;

    let mut systems = Vec::new();
    for pair in systems_list.split(',').map(str::trim).filter(|x| !x.is_empty()) {
        let Some((name, path)) = pair.split_once('=') else {
            bail!("system `{pair}` is not of the form name=checkpoint");
        };
        ensure!(
            !systems.iter().any(|(n, _): &(String, String)| n == name),
            "system `{name}` given twice"
        );
        systems.push((name.to_string(), path.to_string()));
    }
    let entries = load_entries(&manifest, &split_name)?;
    let dir = ctx.run_dir("compare")?;
    fs::create_dir_all(dir.file("reports"))?;
    fs::create_dir_all(dir.file("synth"))?;
    let mut rows = Vec::new();
    for (name, path) in systems {
        let ck = load_checkpoint(&path)?;
        info!("{name}: {} from {path}", ck.model.variant());
        let (records, results) = synthesize(&ck, &entries, &cfg).with_context(|| format!("system `{name}`"))?;
        write_manifest(dir.path.join("synth").join(format!("{name}.jsonl")), &records)?;
        write_generations(
            &dir.path.join("synth").join(format!("{name}.generations.jsonl")),
            ctx.seed,
            &records,
            &results,
        )?;
        let report = score(&eval_items(&records, &entries)?, &recall, ctx.seed)?;
        fs::write(dir.path.join("reports").join(format!("{name}.json")), report.to_json()?)?;
        rows.push((name, report));
    }
    let table = render_table(&rows);
    fs::write(dir.file("table.txt"), &table)?;
    print!("{table}");
    Ok(())
}

pub fn metric_audit(ctx: &mut Context, a: AuditArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let mut cfg = AuditConfig::toy(ctx.seed);
    cfg.systems = s.get("systems", a.systems, cfg.systems)?;
    cfg.items_per_system = s.get("items-per-system", a.items_per_system, cfg.items_per_system)?;
    cfg.raters = s.get("raters", a.raters, cfg.raters)?;
    let result = synthetic_audit(&cfg)?;
    let dir = ctx.run_dir("metric-audit")?;
    fs::write(dir.file("audit.json"), serde_json::to_string_pretty(&result)?)?;
    let table = result.render();
    fs::write(dir.file("audit.txt"), &table)?;
    print!("{table}");
    Ok(())
}

#[derive(Serialize)]
struct GradCheckRow {
    variant: String,
    max_rel_err: f64,
    max_abs_err: f64,
    worst_tensor: String,
    entries: usize,
    passed: bool,
}

pub fn grad_check(ctx: &mut Context, a: GradCheckArgs) -> Result<()> {
    let s = &mut ctx.settings;
    let variants = match s.get_opt("variant", a.variant)? {
        Some(v) => vec![v],
        None => Variant::ALL.to_vec(),
    };
    let options = GradCheckOptions {
        max_entries_per_tensor: s.get_opt("max-entries", a.max_entries)?,
        seed: ctx.seed,
        ..GradCheckOptions::default()
    };
    let warm = s.get("warm-steps", a.warm_steps, 10)?;
    let tolerance = s.get("tolerance", a.tolerance, 1e-4)?;
    let dir = ctx.run_dir("grad-check")?;
    let mut rows = Vec::new();
    for v in variants {
        let (model, plans) = tiny_fixture(v, ctx.seed, warm)?;
        let r = check_gradients(&model, &plans, &options)?;
        let row = GradCheckRow {
            variant: v.to_string(),
            max_rel_err: r.max_rel_err,
            max_abs_err: r.max_abs_err,
            worst_tensor: r.worst_tensor.clone(),
            entries: r.tensors.iter().map(|t| t.checked).sum(),
            passed: r.max_rel_err <= tolerance,
        };
        println!(
            "{} {:<6} max rel err {:.3e} (abs {:.1e}, {}) over {} entries",
            if row.passed { "PASS" } else { "FAIL" },
            row.variant,
            row.max_rel_err,
            row.max_abs_err,
            row.worst_tensor,
            row.entries
        );
        rows.push(row);
    }
    write_json(
        &dir.file("gradcheck.json"),
        ctx.seed,
        &serde_json::json!({ "tolerance": tolerance, "variants": rows }),
    )?;
    let failed = rows.iter().filter(|r| !r.passed).count();
    ensure!(failed == 0, "{failed} variant(s) exceed relative error {tolerance:e}");
    Ok(())
}
