use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ronc_core::classifier::{init_model, train, MlpModel, TrainConfig};
use ronc_core::conllu::{corpus_stats_with, parse_conllu_named, Corpus, StatsOptions};
use ronc_core::embeddings::{load_embeddings, EmbeddingTable, MissingWordPolicy};
use ronc_core::evaluation::{
    annotator_confusion, category_frequency_profile, evaluate, featurize, model_confusion, none_pattern_breakdown,
    AnalysisReport, ModelConfusionMode, ModelSection,
};
use ronc_core::extraction::{
    apply_exclusions, extract_candidates, pattern_breakdown, read_candidates, read_exclusions,
    select_by_head_frequency, word_compound_stats, write_candidates, write_word_stats, CompoundCandidate,
};
use ronc_core::taxonomy::{
    build_labeled_dataset, filter_annotators, read_annotations, read_dataset, split_dataset, write_dataset,
    LabeledCompound,
};
use ronc_service::{router, serve, shared, AnnotationStore};

use crate::{Cli, Command, ConfusionMode, ModelData};

/// Resolves path flags against the data directory.
struct Paths {
    data_dir: Option<PathBuf>,
}

impl Paths {
    fn resolve(&self, given: Option<PathBuf>, default_name: &str, flag: &str) -> Result<PathBuf> {
        match (given, &self.data_dir) {
            (Some(p), _) => Ok(p),
            (None, Some(dir)) => Ok(dir.join(default_name)),
            (None, None) => bail!("--{flag} is required when no data directory is set"),
        }
    }

    fn input(&self, given: Option<PathBuf>, default_name: &str, flag: &str) -> Result<PathBuf> {
        let path = self.resolve(given, default_name, flag)?;
        if !path.exists() {
            bail!("input {} (--{flag}) does not exist", path.display());
        }
        Ok(path)
    }

    fn output(&self, given: Option<PathBuf>, default_name: &str, flag: &str) -> Result<PathBuf> {
        self.resolve(given, default_name, flag)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn load_corpus(path: &Path) -> Result<Corpus> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let name = path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
    parse_conllu_named(&text, &name).with_context(|| format!("parsing {}", path.display()))
}

fn load_candidates(path: &Path) -> Result<Vec<CompoundCandidate>> {
    read_candidates(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_dataset(path: &Path) -> Result<Vec<LabeledCompound>> {
    read_dataset(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_table(path: &Path) -> Result<EmbeddingTable> {
    load_embeddings(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn load_model(path: &Path) -> Result<MlpModel> {
    MlpModel::load(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn policy(zero_missing: bool) -> MissingWordPolicy {
    if zero_missing {
        MissingWordPolicy::Zero
    } else {
        MissingWordPolicy::Error
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let paths = Paths { data_dir: cli.data_dir };
    match cli.command {
        Command::Extract {
            treebank,
            out,
            word_stats,
        } => {
            let treebank = paths.input(treebank, "treebank.conllu", "treebank")?;
            let out = paths.output(out, "candidates.tsv", "out")?;
            let corpus = load_corpus(&treebank)?;
            let candidates = extract_candidates(&corpus);
            let mut w = create(&out)?;
            write_candidates(&mut w, &candidates)?;
            w.flush()?;
            if let Some(path) = word_stats {
                let mut w = create(&path)?;
                write_word_stats(&mut w, &word_compound_stats(&corpus, &candidates))?;
                w.flush()?;
            }
            eprintln!("{} candidates -> {}", candidates.len(), out.display());
        }
        Command::Stats {
            treebank,
            include_propn,
        } => {
            let treebank = paths.input(treebank, "treebank.conllu", "treebank")?;
            let corpus = load_corpus(&treebank)?;
            let stats = corpus_stats_with(&corpus, StatsOptions { include_propn });
            let patterns = pattern_breakdown(&extract_candidates(&corpus));
            let json = serde_json::json!({
                "sentences": corpus.sentences.len(),
                "token_count": stats.token_count,
                "noun_count": stats.noun_count,
                "patterns": patterns,
            });
            println!("{}", serde_json::to_string_pretty(&json)?);
        }
        Command::Select {
            treebank,
            out,
            n,
            exclusions,
        } => {
            let treebank = paths.input(treebank, "treebank.conllu", "treebank")?;
            let exclusions = exclusions.map(|p| paths.input(Some(p), "", "exclusions")).transpose()?;
            let out = paths.output(out, "selected.tsv", "out")?;
            let corpus = load_corpus(&treebank)?;
            let candidates = extract_candidates(&corpus);
            let stats = word_compound_stats(&corpus, &candidates);
            let mut selected = select_by_head_frequency(&candidates, &stats, n);
            if let Some(path) = exclusions {
                let list = read_exclusions(open(&path)?).with_context(|| format!("reading {}", path.display()))?;
                selected = apply_exclusions(&selected, &list).kept;
            }
            let mut w = create(&out)?;
            write_candidates(&mut w, &selected)?;
            w.flush()?;
            eprintln!("{} compounds selected -> {}", selected.len(), out.display());
        }
        Command::Serve {
            candidates,
            annotations,
            addr,
            ui_dir,
            roster,
        } => {
            let candidates = paths.input(candidates, "selected.tsv", "candidates")?;
            let ui_dir = ui_dir.map(|p| paths.input(Some(p), "", "ui-dir")).transpose()?;
            let roster = roster.map(|p| paths.input(Some(p), "", "roster")).transpose()?;
            let annotations = paths.output(annotations, "annotations.tsv", "annotations")?;
            let roster = match roster {
                Some(path) => {
                    let mut text = String::new();
                    open(&path)?.read_to_string(&mut text)?;
                    let ids: BTreeSet<String> = text
                        .lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty() && !l.starts_with('#'))
                        .map(String::from)
                        .collect();
                    Some(ids)
                }
                None => None,
            };
            let store = AnnotationStore::open(&annotations, load_candidates(&candidates)?, roster)?;
            let app = router(shared(store), ui_dir);
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .with_context(|| format!("binding {addr}"))?;
                log::info!("listening on {}", listener.local_addr()?);
                eprintln!("listening on http://{}", listener.local_addr()?);
                // Every acknowledged judgment is already on disk, so stopping
                // mid-request loses nothing.
                tokio::select! {
                    r = serve(listener, app) => r.context("server failed"),
                    _ = tokio::signal::ctrl_c() => Ok(()),
                }
            })?;
        }
        Command::Dataset {
            candidates,
            annotations,
            out,
            min_labels,
        } => {
            let candidates = paths.input(candidates, "selected.tsv", "candidates")?;
            let annotations = paths.input(annotations, "annotations.tsv", "annotations")?;
            let out = paths.output(out, "dataset.tsv", "out")?;
            let records = read_annotations(open(&annotations)?)
                .with_context(|| format!("reading {}", annotations.display()))?;
            let kept = filter_annotators(&records, min_labels);
            let dataset = build_labeled_dataset(&load_candidates(&candidates)?, &kept)?;
            let mut w = create(&out)?;
            write_dataset(&mut w, &dataset.items)?;
            w.flush()?;
            eprintln!(
                "{} labelled compounds ({} records dropped by --min-labels, {} compounds lacking two labels) -> {}",
                dataset.items.len(),
                records.len() - kept.len(),
                dataset.excluded.len(),
                out.display()
            );
        }
        Command::Train {
            data,
            checkpoint,
            hidden,
            lr,
            epochs,
            batch,
            seed,
            loss_out,
        } => {
            if batch == 0 {
                bail!("--batch must be positive");
            }
            let (train_items, _, table) = split(&paths, &data, seed)?;
            let checkpoint = paths.output(checkpoint, "model.ckpt", "checkpoint")?;
            let features = featurize(&table, &train_items, policy(data.zero_missing))?;
            let targets: Vec<_> = train_items.iter().map(|i| i.target).collect();
            let config = TrainConfig {
                learning_rate: lr,
                epochs,
                batch_size: batch,
                seed,
            };
            let inputs: Vec<&[f64]> = features.iter().map(|f| f.as_slice()).collect();
            let model = init_model(2 * table.dimension(), hidden, seed);
            let (model, history) = train(&model, &inputs, &targets, &config)?;
            let mut w = create(&checkpoint)?;
            model.save(&mut w)?;
            w.flush()?;
            if let Some(path) = loss_out {
                let mut w = create(&path)?;
                writeln!(w, "epoch\tloss")?;
                for (i, l) in history.0.iter().enumerate() {
                    writeln!(w, "{}\t{l:.12}", i + 1)?;
                }
                w.flush()?;
            }
            eprintln!(
                "trained on {} compounds: loss {:.6} -> {:.6}; checkpoint {}",
                train_items.len(),
                history.first().unwrap_or(f64::NAN),
                history.last().unwrap_or(f64::NAN),
                checkpoint.display()
            );
        }
        Command::Evaluate {
            data,
            checkpoint,
            seed,
            out,
        } => {
            let checkpoint = paths.input(checkpoint, "model.ckpt", "checkpoint")?;
            let model = load_model(&checkpoint)?;
            let (_, test_items, table) = split(&paths, &data, seed.unwrap_or(model.seed))?;
            let features = featurize(&table, &test_items, policy(data.zero_missing))?;
            let report = evaluate(&model, &test_items, &features)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    w.write_all(report.to_tsv().as_bytes())?;
                    w.flush()?;
                }
                None => print!("{}", report.to_tsv()),
            }
        }
        Command::Report {
            dataset,
            treebank,
            report_dir,
            checkpoint,
            embeddings,
            train_size,
            seed,
            confusion_mode,
            zero_missing,
        } => {
            let dataset = paths.input(dataset, "dataset.tsv", "dataset")?;
            let treebank = paths.input(treebank, "treebank.conllu", "treebank")?;
            let checkpoint = checkpoint.map(|p| paths.input(Some(p), "", "checkpoint")).transpose()?;
            let report_dir = paths.output(report_dir, "reports", "report-dir")?;
            let items = load_dataset(&dataset)?;
            let corpus = load_corpus(&treebank)?;
            let stats = word_compound_stats(&corpus, &extract_candidates(&corpus));

            let model = match checkpoint {
                Some(ckpt) => {
                    let model = load_model(&ckpt)?;
                    let data = ModelData {
                        dataset: Some(dataset.clone()),
                        embeddings,
                        train_size,
                        zero_missing,
                    };
                    let (_, test_items, table) = split(&paths, &data, seed.unwrap_or(model.seed))?;
                    let features = featurize(&table, &test_items, policy(zero_missing))?;
                    let mode = match confusion_mode {
                        ConfusionMode::DistinctTop2 => ModelConfusionMode::DistinctTop2,
                        ConfusionMode::AgreementDiagonal => ModelConfusionMode::AgreementDiagonal,
                    };
                    Some(ModelSection {
                        eval: evaluate(&model, &test_items, &features)?,
                        test_annotator_confusion: annotator_confusion(&test_items),
                        model_confusion_mode: mode,
                        model_confusion: model_confusion(&model, &test_items, &features, mode)?,
                    })
                }
                None => None,
            };
            let report = AnalysisReport {
                n_compounds: items.len(),
                category_stats: category_frequency_profile(&items, &stats)?,
                none_patterns: none_pattern_breakdown(&items),
                annotator_confusion: annotator_confusion(&items),
                model,
            };
            write_report(&report_dir, &report)?;
            eprintln!("report written to {}", report_dir.display());
        }
    }
    Ok(())
}

/// Dataset split plus the embedding table, as `train`, `evaluate` and `report` share them.
fn split(paths: &Paths, data: &ModelData, seed: u64) -> Result<(Vec<LabeledCompound>, Vec<LabeledCompound>, EmbeddingTable)> {
    let dataset = paths.input(data.dataset.clone(), "dataset.tsv", "dataset")?;
    let embeddings = paths.input(data.embeddings.clone(), "embeddings.txt", "embeddings")?;
    let items = load_dataset(&dataset)?;
    let (train_items, test_items) = split_dataset(&items, data.train_size, seed)?;
    Ok((train_items, test_items, load_table(&embeddings)?))
}

fn write_report(dir: &Path, report: &AnalysisReport) -> Result<()> {
    let files: Vec<(&str, String)> = {
        let mut files = vec![
            ("report.json", serde_json::to_string_pretty(report)? + "\n"),
            ("categories.tsv", report.category_stats.frequency_tsv()),
            ("annotator_confusion.tsv", report.annotator_confusion.to_tsv()),
        ];
        if let Some(model) = &report.model {
            files.push(("eval.tsv", model.eval.to_tsv()));
            files.push(("test_annotator_confusion.tsv", model.test_annotator_confusion.to_tsv()));
            files.push(("model_confusion.tsv", model.model_confusion.to_tsv()));
        }
        files
    };
    for (name, body) in files {
        let mut w = create(&dir.join(name))?;
        w.write_all(body.as_bytes())?;
        w.flush()?;
    }
    Ok(())
}
