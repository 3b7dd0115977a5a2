use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use super::cli::{
    AttentionInputArg, CommonArgs, CompareArgs, CompareMode, EvalArgs, GenDataArgs, ModelArgs, OptimArgs, SplitArg,
    SweepArgs, TrainArgs,
};
use super::config::FileConfig;
use super::images::{magnitude_u8, save_gray, save_overlay};
use super::plot::{plot_dice_vs_blocks, Series};
use super::report::{
    dice_table, published_reference_block, reported_loss_average, reported_method_average, run_table, DatasetInfo, EvalReport, RunMetrics, RUN_FORMAT,
};
use super::{CliError, CliResult};
use crate::error::{Error, Result};
use crate::kspace::dataset::sha256_hex;
use crate::kspace::{build_dataset, manifest_checksum, write_dataset, DatasetSpec, DatasetStore, Split};
use crate::network::{
    checkpoint_to_bytes, load_checkpoint, AttentionInput, Model, ModelConfig, ModelKind, RegType,
};
use crate::phantom::TissueTable;
use crate::training::{
    evaluate, hard_labels, needs_x_full, train_model, Control, DiceScores, LossVariant, Phase, TrainConfig, TrainItem,
};

pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const METRICS_FILE: &str = "metrics.json";

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn as_usage(e: Error) -> CliError {
    CliError::Usage(e.to_string())
}

fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value.as_deref().ok_or_else(|| usage(format!("--{flag} is required")))
}

/// Creates `dir`, refusing to touch an existing one unless `force` is set.
fn prepare_out_dir(dir: &Path, force: bool) -> CliResult<()> {
    if dir.exists() {
        if !force {
            return Err(usage(format!("output directory {} already exists (pass --force to replace it)", dir.display())));
        }
        let removed = if dir.is_dir() { fs::remove_dir_all(dir) } else { fs::remove_file(dir) };
        removed.map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn load_config(common: &CommonArgs) -> CliResult<FileConfig> {
    FileConfig::load_optional(common.config.as_deref()).map_err(as_usage)
}

pub fn gen_data(args: &GenDataArgs) -> CliResult<()> {
    let file = load_config(&args.common)?;
    let d = &file.data;
    let defaults = DatasetSpec::default();
    let table_path = args.tissue_table.clone().or_else(|| d.tissue_table.clone());
    let tissue_table = match table_path {
        Some(p) => TissueTable::load(&p).map_err(as_usage)?,
        None => TissueTable::default(),
    };
    let spec = DatasetSpec {
        train_brains: args.brains.or(d.brains).unwrap_or(defaults.train_brains),
        test_brains: args.test_brains.or(d.test_brains).unwrap_or(defaults.test_brains),
        slices_per_brain: args.slices.or(d.slices).unwrap_or(defaults.slices_per_brain),
        height: args.height.or(d.height).unwrap_or(defaults.height),
        width: args.width.or(d.width).unwrap_or(defaults.width),
        rate: args.rate.or(d.rate).unwrap_or(defaults.rate),
        center_lines: args.center_lines.or(d.center_lines).unwrap_or(defaults.center_lines),
        noise_level: args.common.noise.or(d.noise).unwrap_or(defaults.noise_level),
        seed: args.common.seed.or(d.seed).unwrap_or(defaults.seed),
        tissue_table,
    };
    spec.validate().map_err(as_usage)?;
    let out = require(&args.common.out, "out")?;
    prepare_out_dir(out, args.common.force)?;

    let samples = build_dataset(&spec)?;
    let manifest = write_dataset(out, &spec, &samples)?;
    let s = &manifest.splits;
    println!(
        "wrote {} records to {}: train {} records from {} brains, test {} records from {} brains, noise {:.0}%",
        manifest.records.len(),
        out.display(),
        s.train_records,
        s.train_brains.len(),
        s.test_records,
        s.test_brains.len(),
        100.0 * spec.noise_level
    );
    println!("manifest sha256 {}", manifest_checksum(out)?);
    Ok(())
}

fn apply_model_args(cfg: &mut ModelConfig, args: &ModelArgs) -> Result<()> {
    if let Some(m) = &args.model {
        cfg.model_kind = m.parse()?;
    }
    if let Some(r) = &args.reg_type {
        cfg.reg_type = r.parse()?;
    }
    if let Some(v) = args.blocks {
        cfg.n_blocks = v;
    }
    if let Some(v) = args.recurrences {
        cfg.recurrences = v;
    }
    if let Some(v) = args.reg_channels {
        cfg.reg_channels = v;
    }
    if let Some(v) = args.unet_channels {
        cfg.unet_base_channels = v;
    }
    if let Some(v) = args.lstm_channels {
        cfg.lstm_hidden_channels = v;
    }
    if let Some(v) = args.unet_depth {
        cfg.unet_depth = v;
    }
    if let Some(a) = args.attention_input {
        cfg.attention_input = match a {
            AttentionInputArg::FixedNMinus1 => AttentionInput::FixedNMinus1,
            AttentionInputArg::PreviousX => AttentionInput::PreviousX,
        };
    }
    Ok(())
}

fn apply_optim_args(cfg: &mut TrainConfig, args: &OptimArgs) -> Result<()> {
    if let Some(l) = &args.loss {
        cfg.loss_variant = l.parse()?;
    }
    if let Some(v) = args.epochs {
        cfg.max_epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = args.decay_every {
        cfg.decay_every = v;
    }
    if let Some(v) = args.l2_weight {
        cfg.l2_weight = v;
    }
    Ok(())
}

/// Model and training configuration: defaults, then the config file, then flags.
fn resolve_configs(
    file: &FileConfig,
    common: &CommonArgs,
    model: &ModelArgs,
    optim: &OptimArgs,
) -> CliResult<(ModelConfig, TrainConfig)> {
    let mut mc = file.model.clone().unwrap_or_default();
    let mut tc = file.train.clone().unwrap_or_default();
    apply_model_args(&mut mc, model).map_err(as_usage)?;
    apply_optim_args(&mut tc, optim).map_err(as_usage)?;
    if let Some(seed) = common.seed {
        mc.weight_seed = seed;
        tc.seed = seed;
    }
    mc.validate().map_err(as_usage)?;
    tc.validate().map_err(as_usage)?;
    if mc.model_kind == ModelKind::OneStep && tc.loss_variant == LossVariant::CePlusL2 {
        return Err(usage("one_step has no reconstruction, so the ce_l2 loss does not apply"));
    }
    Ok((mc, tc))
}

fn open_dataset(common: &CommonArgs) -> CliResult<(DatasetStore, DatasetInfo)> {
    let dir = require(&common.data, "data")?;
    if !dir.join(crate::kspace::dataset::MANIFEST_FILE).is_file() {
        return Err(usage(format!("{} is not a dataset directory", dir.display())));
    }
    let store = DatasetStore::open(dir)?;
    let m = store.manifest();
    if let Some(noise) = common.noise {
        if (noise - m.spec.noise_level).abs() > 1e-12 {
            return Err(usage(format!("dataset noise level is {}, not {noise}", m.spec.noise_level)));
        }
    }
    let info = DatasetInfo {
        path: dir.display().to_string(),
        manifest_sha256: manifest_checksum(dir)?,
        noise_level: m.spec.noise_level,
        height: m.spec.height,
        width: m.spec.width,
        train_records: m.splits.train_records,
        test_records: m.splits.test_records,
    };
    Ok((store, info))
}

fn load_items(store: &DatasetStore, split: Split, with_x_full: bool) -> Result<Vec<TrainItem<f32>>> {
    store.split_indices(split).into_iter().map(|i| TrainItem::from_sample(&store.load(i, with_x_full)?)).collect()
}

/// Trains one model and writes checkpoint, metrics and log into `out`.
pub fn run_training(
    store: &DatasetStore,
    info: &DatasetInfo,
    mc: &ModelConfig,
    tc: &TrainConfig,
    out: &Path,
) -> Result<RunMetrics> {
    let started = Instant::now();
    let reads_before = store.x_full_reads();
    let train = load_items(store, Split::Train, needs_x_full(mc.model_kind, tc.loss_variant))?;
    if train.is_empty() {
        return Err(Error::Config("dataset has no training records".into()));
    }
    let test = load_items(store, Split::Test, false)?;
    let mut model = Model::<f32>::new(mc.clone())?;

    let mut log = String::new();
    let mut emit = |line: String| {
        println!("{line}");
        log.push_str(&line);
        log.push('\n');
    };
    emit(format!("run {}", mc.label()));
    emit(format!("parameters {}", model.num_parameters()));
    emit(format!("dataset {} ({} train / {} test records)", info.path, train.len(), test.len()));
    emit(format!("loss {} | lr {} | batch {} | epochs {}", tc.loss_variant, tc.learning_rate, tc.batch_size, tc.max_epochs));

    let mut current: Option<Phase> = None;
    let report = train_model(&mut model, tc, &train, &mut |e, _| {
        if current != Some(e.phase) {
            current = Some(e.phase);
            emit(format!("== {} ==", e.phase.title()));
        }
        emit(format!("epoch {:>3}/{} lr {:.3e} loss {:.6}", e.epoch + 1, tc.max_epochs, e.learning_rate, e.loss));
        Control::Continue
    })?;

    let train_dice = evaluate(&model, &train)?.mean;
    let test_dice = if test.is_empty() { None } else { Some(evaluate(&model, &test)?.mean) };
    let bytes = checkpoint_to_bytes(&model);
    write_file(&out.join(CHECKPOINT_FILE), &bytes)?;
    let metrics = RunMetrics {
        format: RUN_FORMAT.into(),
        label: mc.label(),
        model: mc.clone(),
        train: tc.clone(),
        dataset: info.clone(),
        parameters: model.num_parameters(),
        epochs: report.epochs,
        train_dice,
        test_dice,
        x_full_reads: store.x_full_reads() - reads_before,
        checkpoint_sha256: sha256_hex(&bytes),
    };
    let table = run_table(&metrics);
    emit(table.trim_end().to_string());
    log.push_str(&format!("elapsed {:.1}s\n", started.elapsed().as_secs_f64()));
    write_file(&out.join(METRICS_FILE), serde_json::to_string_pretty(&metrics)? + "\n")?;
    write_file(&out.join("metrics.txt"), table)?;
    write_file(&out.join("train.log"), log)?;
    Ok(metrics)
}

pub fn train(args: &TrainArgs) -> CliResult<()> {
    let file = load_config(&args.common)?;
    let (mc, tc) = resolve_configs(&file, &args.common, &args.model, &args.optim)?;
    let out = require(&args.common.out, "out")?;
    let (store, info) = open_dataset(&args.common)?;
    prepare_out_dir(out, args.common.force)?;
    run_training(&store, &info, &mc, &tc, out)?;
    Ok(())
}

pub fn eval(args: &EvalArgs) -> CliResult<()> {
    let ckpt = if args.checkpoint.is_dir() { args.checkpoint.join(CHECKPOINT_FILE) } else { args.checkpoint.clone() };
    let model = load_checkpoint(&ckpt)?;
    let mut expected = model.config().clone();
    apply_model_args(&mut expected, &args.model).map_err(as_usage)?;
    let differing = model.config().diff(&expected);
    if !differing.is_empty() {
        return Err(usage(format!(
            "checkpoint {} does not match the requested model; differing fields: {}",
            ckpt.display(),
            differing.join(", ")
        )));
    }
    if args.dump_images > 0 && args.common.out.is_none() {
        return Err(usage("--dump-images needs --out"));
    }
    let (store, info) = open_dataset(&args.common)?;
    if let Some(out) = &args.common.out {
        prepare_out_dir(out, args.common.force)?;
    }
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Test => Split::Test,
    };
    let items = load_items(&store, split, false)?;
    if items.is_empty() {
        return Err(CliError::Runtime(Error::Config(format!("dataset has no {split:?} records"))));
    }
    let evaluation = evaluate(&model, &items)?;
    let split_name = format!("{split:?}").to_lowercase();
    let table = dice_table(
        &format!("{} on {} split ({} records)", model.config().label(), split_name, items.len()),
        &[(model.config().label(), Some(evaluation.mean))],
    );
    print!("{table}");

    if let Some(out) = &args.common.out {
        let bytes = fs::read(&ckpt).map_err(|e| Error::io(&ckpt, e))?;
        let report = EvalReport {
            checkpoint: ckpt.display().to_string(),
            checkpoint_sha256: sha256_hex(&bytes),
            split: split_name,
            model: model.config().clone(),
            dataset: info,
            evaluation,
        };
        write_file(&out.join("eval.json"), serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n")?;
        write_file(&out.join("eval.txt"), &table)?;
        let indices = store.split_indices(split);
        for (item, index) in items.iter().zip(indices).take(args.dump_images) {
            dump_record_images(&model, item, index, out)?;
        }
    }
    Ok(())
}

fn dump_record_images(model: &Model<f32>, item: &TrainItem<f32>, index: usize, out: &Path) -> Result<()> {
    let (h, w) = item.measurement.shape();
    let pred = model.predict(&item.measurement)?;
    let image = pred.image.as_ref().unwrap_or(&item.measurement.zero_filled);
    let gray = magnitude_u8(image.data(), h, w);
    let zero_filled = magnitude_u8(item.measurement.zero_filled.data(), h, w);
    save_gray(&out.join(format!("{index:05}_zero_filled.png")), &zero_filled, h, w)?;
    save_gray(&out.join(format!("{index:05}_magnitude.png")), &gray, h, w)?;
    save_overlay(&out.join(format!("{index:05}_pred.png")), &gray, &hard_labels(pred.final_seg()), h, w)?;
    save_overlay(&out.join(format!("{index:05}_gt.png")), &gray, &item.labels, h, w)?;
    Ok(())
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> CliResult<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = text
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| usage(format!("bad {what} '{s}': {e}"))))
        .collect::<CliResult<_>>()?;
    if items.is_empty() {
        return Err(usage(format!("no {what} given")));
    }
    Ok(items)
}

#[derive(serde::Serialize)]
struct SweepRow {
    model: String,
    reg_type: String,
    n_blocks: usize,
    recurrences: usize,
    loss: String,
    seeds: String,
    csf: f64,
    gm: f64,
    wm: f64,
    average: f64,
    average_per_seed: String,
}

pub fn sweep_blocks(args: &SweepArgs) -> CliResult<()> {
    let file = load_config(&args.common)?;
    let kinds: Vec<ModelKind> = parse_list(&args.models, "model kind")?;
    let reg_types: Vec<RegType> = parse_list(&args.reg_types, "regularization type")?;
    let seeds: Vec<u64> = parse_list(&args.seeds, "seed")?;
    if args.n_max < 1 {
        return Err(usage("--n-max must be at least 1"));
    }
    if kinds.contains(&ModelKind::OneStep) {
        return Err(usage("one_step has no reconstruction blocks to sweep"));
    }
    if kinds.contains(&ModelKind::Seranet) && args.n_max < 2 {
        return Err(usage("seranet needs --n-max of at least 2"));
    }
    let mut model_args = args.model.clone();
    model_args.model = Some(ModelKind::Joint.as_str().into());
    model_args.blocks = Some(1);
    let (base_mc, base_tc) = resolve_configs(&file, &args.common, &model_args, &args.optim)?;
    let out = require(&args.common.out, "out")?;
    let (store, info) = open_dataset(&args.common)?;
    if info.test_records == 0 {
        return Err(usage("the sweep reports test-split Dice but the dataset has no test records"));
    }
    prepare_out_dir(out, args.common.force)?;
    let runs_dir = out.join("runs");

    let mut rows = Vec::new();
    let mut series: BTreeMap<String, Vec<(usize, f64)>> = BTreeMap::new();
    for &kind in &kinds {
        for &reg_type in &reg_types {
            let first = if kind == ModelKind::Seranet { 2 } else { 1 };
            for n in first..=args.n_max {
                let mut per_seed = Vec::new();
                for &seed in &seeds {
                    let mc = ModelConfig { model_kind: kind, reg_type, n_blocks: n, weight_seed: seed, ..base_mc.clone() };
                    let tc = TrainConfig { seed, ..base_tc.clone() };
                    let dir = runs_dir.join(format!("{}-s{seed}", mc.label()));
                    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
                    let m = run_training(&store, &info, &mc, &tc, &dir)?;
                    per_seed.push(m.test_dice.expect("test split checked above"));
                }
                let mean = DiceScores::mean(&per_seed).expect("at least one seed");
                series.entry(format!("{} ({reg_type})", kind.display_name())).or_default().push((n, mean.average));
                rows.push(SweepRow {
                    model: kind.as_str().into(),
                    reg_type: reg_type.to_string(),
                    n_blocks: n,
                    recurrences: if kind == ModelKind::Seranet { base_mc.recurrences } else { 0 },
                    loss: base_tc.loss_variant.to_string(),
                    seeds: seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(";"),
                    csf: mean.csf,
                    gm: mean.gm,
                    wm: mean.wm,
                    average: mean.average,
                    average_per_seed: per_seed.iter().map(|d| format!("{:.6}", d.average)).collect::<Vec<_>>().join(";"),
                });
            }
        }
    }

    let csv_path = out.join("sweep.csv");
    let mut writer = csv::Writer::from_path(&csv_path).map_err(|e| csv_error(&csv_path, e))?;
    for row in &rows {
        writer.serialize(row).map_err(|e| csv_error(&csv_path, e))?;
    }
    writer.flush().map_err(|e| Error::io(&csv_path, e))?;
    let series: Vec<Series> = series.into_iter().map(|(name, points)| Series { name, points }).collect();
    plot_dice_vs_blocks(&out.join("sweep.svg"), &series)?;

    let table_rows: Vec<(String, Option<DiceScores>)> = rows
        .iter()
        .map(|r| {
            (format!("{}-{} ({})", r.model, r.n_blocks, r.reg_type), Some(DiceScores::new(r.csf, r.gm, r.wm)))
        })
        .collect();
    let table = dice_table(&format!("block sweep, test split, noise {:.0}%", 100.0 * info.noise_level), &table_rows);
    print!("{table}");
    write_file(&out.join("sweep.txt"), table)?;
    Ok(())
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source: std::io::Error::other(e) }
}

/// Finds `metrics.json` files under the given paths, in sorted order.
fn collect_runs(paths: &[PathBuf]) -> Result<Vec<(PathBuf, RunMetrics)>> {
    fn walk(dir: &Path, depth: usize, found: &mut Vec<PathBuf>) -> Result<()> {
        let metrics = dir.join(METRICS_FILE);
        if metrics.is_file() {
            found.push(metrics);
            return Ok(());
        }
        if depth == 0 || !dir.is_dir() {
            return Ok(());
        }
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        entries.sort();
        for e in entries {
            walk(&e, depth - 1, found)?;
        }
        Ok(())
    }
    let mut found = Vec::new();
    for p in paths {
        if p.is_file() {
            found.push(p.clone());
        } else {
            walk(p, 3, &mut found)?;
        }
    }
    found.into_iter().map(|p| RunMetrics::load(&p).map(|m| (p, m))).collect()
}

fn noise_key(level: f64) -> u32 {
    (100.0 * level).round() as u32
}

pub fn compare(args: &CompareArgs) -> CliResult<()> {
    let runs = collect_runs(&args.runs)?;
    let mut missing: Vec<String> = args
        .runs
        .iter()
        .filter(|p| !p.exists())
        .map(|p| format!("{} (not found)", p.display()))
        .collect();
    if runs.is_empty() {
        missing.push("no metrics.json found under the given paths".into());
    }

    let mut by_noise: BTreeMap<u32, Vec<&RunMetrics>> = BTreeMap::new();
    for (_, m) in &runs {
        by_noise.entry(noise_key(m.dataset.noise_level)).or_default().push(m);
    }
    let mut text = String::new();
    let mut csv_rows: Vec<(u32, String, Option<DiceScores>, usize)> = Vec::new();
    for (noise, group) in &by_noise {
        let rows: Vec<(String, Option<DiceScores>, usize)> = match args.mode {
            CompareMode::Methods => {
                let mut named: BTreeMap<String, Vec<DiceScores>> = BTreeMap::new();
                let mut order = Vec::new();
                for m in group {
                    let mut name = m.method_name();
                    if m.train.loss_variant != LossVariant::CeFinal {
                        name = format!("{name} [{}]", m.train.loss_variant.short_name());
                    }
                    if !named.contains_key(&name) {
                        order.push(name.clone());
                    }
                    let entry = named.entry(name).or_default();
                    match m.test_dice {
                        Some(d) => entry.push(d),
                        None => missing.push(format!("{} has no test-split Dice", m.label)),
                    }
                }
                order.into_iter().map(|n| {
                    let scores = &named[&n];
                    (n, DiceScores::mean(scores), scores.len())
                }).collect()
            }
            CompareMode::Losses => LossVariant::ALL
                .iter()
                .map(|&v| {
                    let scores: Vec<DiceScores> = group
                        .iter()
                        .filter(|m| m.model.model_kind == ModelKind::Seranet && m.train.loss_variant == v)
                        .filter_map(|m| m.test_dice)
                        .collect();
                    if scores.is_empty() {
                        missing.push(format!("{} at {noise}% noise", v.short_name()));
                    }
                    (v.short_name().to_string(), DiceScores::mean(&scores), scores.len())
                })
                .collect(),
        };
        let title = match args.mode {
            CompareMode::Methods => format!("Method comparison, test split, {noise}% noise"),
            CompareMode::Losses => format!("Loss ablation (SERANet), test split, {noise}% noise"),
        };
        let display: Vec<(String, Option<DiceScores>)> = rows
            .iter()
            .map(|(n, d, k)| (if *k > 1 { format!("{n} x{k}") } else { n.clone() }, *d))
            .collect();
        text.push_str(&dice_table(&title, &display));
        let reported: Vec<String> = rows
            .iter()
            .filter_map(|(n, _, _)| {
                let value = match args.mode {
                    CompareMode::Methods => reported_method_average(n.split(" (").next().unwrap_or(n), *noise),
                    CompareMode::Losses => n.parse().ok().and_then(|v| reported_loss_average(v, *noise)),
                };
                value.map(|v| format!("{n} {v:.4}"))
            })
            .collect();
        if !reported.is_empty() {
            text.push_str(&format!("reported Aver. for matching rows: {}\n", reported.join(", ")));
        }
        text.push('\n');
        csv_rows.extend(rows.into_iter().map(|(n, d, k)| (*noise, n, d, k)));
    }
    if !missing.is_empty() {
        text.push_str("missing runs:\n");
        for m in &missing {
            text.push_str(&format!("  {m}\n"));
        }
        text.push('\n');
    }
    text.push_str(&published_reference_block());
    print!("{text}");

    if let Some(out) = &args.common.out {
        prepare_out_dir(out, args.common.force)?;
        write_file(&out.join("compare.txt"), &text)?;
        let path = out.join("compare.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["noise_percent", "row", "runs", "csf", "gm", "wm", "average"]).map_err(|e| csv_error(&path, e))?;
        for (noise, name, dice, runs) in &csv_rows {
            let vals: Vec<String> = match dice {
                Some(d) => d.as_array().iter().map(|v| format!("{v:.6}")).collect(),
                None => vec![String::new(); 4],
            };
            let mut record = vec![noise.to_string(), name.clone(), runs.to_string()];
            record.extend(vals);
            w.write_record(&record).map_err(|e| csv_error(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
    }
    let _ = std::io::stdout().flush();
    Ok(())
}
