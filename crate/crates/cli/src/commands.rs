//! One function per subcommand. Each returns the manifest name.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use gaitlrp::dataset::{self, FitScope, SynthConfig, WindowPlan};
use gaitlrp::lrp::{batch_explain, explain, RelevanceFile, RelevanceMap};
use gaitlrp::network::catalog::catalog_name;
use gaitlrp::pipeline::{fit, fold_seed};
use gaitlrp::stats::MeanStd;
use gaitlrp::viz::{render_curve_grid, render_relevance_plot, PlotSpec};
use gaitlrp::{
    run_perturbation, AnyModel, Architecture, Classifier, Dataset, FeatureSet, LrpConfig, NoiseKind,
    Ordering, PerturbationConfig, PerturbationReport, SplitPlan, Target, TrainConfig,
};

use crate::config::Keys;
use crate::error::{CliError, Result};
use crate::manifest::{sha256_file, Recorder};
use crate::tables::{Table, FEATURE_COLUMNS};

pub const OUT_ENV: &str = "GAITLRP_OUT";
const DEFAULT_OUT: &str = "gaitlrp-out";

fn defaults(command: &str) -> Keys {
    let mut k = Keys {
        seed: Some(0),
        threads: Some(1),
        ..Default::default()
    };
    match command {
        "synth" => {
            let r = SynthConfig::reference(0);
            k.name = Some("synth".into());
            k.feature_set = Some(r.feature_set.tag().into());
            k.subjects = Some(r.n_subjects);
            k.trials = Some(r.trials_per_subject);
            k.noise_std = Some(r.noise_std);
            k.amplitude = Some(r.bump_amplitude);
        }
        "ingest" => {}
        _ => {
            k.folds = Some(10);
            k.fit_scope = Some("full".into());
        }
    }
    if matches!(command, "explain" | "perturb" | "reliability" | "render") {
        k.target = Some("true".into());
        k.epsilon = Some(gaitlrp::lrp::DEFAULT_EPSILON);
    }
    if command == "perturb" {
        let cfg = PerturbationConfig::new(NoiseKind::Pepper, Ordering::Random, 0);
        let all: Vec<String> = NoiseKind::TABLE.iter().map(|n| n.to_string()).collect();
        k.noise = Some(all.join(","));
        k.ordering = Some(Ordering::Random.to_string());
        k.steps = Some(cfg.steps);
        k.repetitions = Some(cfg.repetitions);
        k.unpaired = Some(!cfg.paired);
    }
    if command == "render" {
        k.grid = Some(false);
    }
    k
}

/// Runs `command` and returns the path of its manifest.
pub fn dispatch(command: &str, keys: Keys) -> Result<PathBuf> {
    let out = keys
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    // the output root is not part of the echoed config
    let keys = Keys { out: None, ..keys }.or(defaults(command));
    let mut rec = Recorder::new(&out, command);
    let name = match command {
        "synth" => synth(&keys, &mut rec)?,
        "ingest" => ingest(&keys, &mut rec)?,
        "train" => train(&keys, &mut rec)?,
        "eval" => eval(&keys, &mut rec)?,
        "explain" => explain_cmd(&keys, &mut rec)?,
        "perturb" => perturb(&keys, &mut rec)?,
        "reliability" => reliability(&keys, &mut rec)?,
        "render" => render(&keys, &mut rec)?,
        other => return Err(CliError::Usage(format!("unknown command `{other}`"))),
    };
    rec.finish(&name, &keys)
}

fn require<T: Clone>(v: &Option<T>, flag: &str) -> Result<T> {
    v.clone().ok_or_else(|| CliError::Usage(format!("missing --{flag}")))
}

fn core_err(e: gaitlrp::Error) -> CliError {
    CliError::Core(e)
}

fn synth(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let fs: FeatureSet = require(&k.feature_set, "feature-set")?.parse()?;
    let cfg = SynthConfig {
        n_subjects: require(&k.subjects, "subjects")?,
        trials_per_subject: require(&k.trials, "trials")?,
        feature_set: fs,
        noise_std: require(&k.noise_std, "noise-std")?,
        windows: WindowPlan::Disjoint,
        bump_amplitude: require(&k.amplitude, "amplitude")?,
        seed: require(&k.seed, "seed")?,
    };
    let name = require(&k.name, "name")?;
    let (ds, truth) = dataset::synth_generate(&cfg)?;
    let rel = PathBuf::from("data").join(format!("{name}.csv"));
    dataset::write_csv(&ds, &rec.path_for(&rel)?)?;
    rec.register(&rel);
    rec.write_json(format!("data/{name}.truth.json"), &SynthOutput { config: &cfg, truth: &truth })?;
    rec.seeds.insert("synth".into(), cfg.seed);
    Ok(format!("synth_{name}"))
}

#[derive(Serialize)]
struct SynthOutput<'a> {
    config: &'a SynthConfig,
    truth: &'a dataset::SynthTruth,
}

#[derive(Serialize)]
struct IngestSummary {
    source: String,
    source_sha256: String,
    feature_set: FeatureSet,
    subjects: usize,
    trials: usize,
    channels: usize,
    time_points: usize,
}

fn ingest(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let input = require(&k.input, "input")?;
    if !input.is_file() {
        return Err(CliError::Io(format!("input {} not found", input.display())));
    }
    let ds = dataset::ingest_csv(&input)?;
    rec.input(&input);
    let name = match &k.name {
        Some(n) => n.clone(),
        None => input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .ok_or_else(|| CliError::Usage("cannot derive --name from --input".into()))?,
    };
    let rel = PathBuf::from("data").join(format!("{name}.csv"));
    let dst = rec.path_for(&rel)?;
    if dst.canonicalize().ok().is_some_and(|d| input.canonicalize().ok() == Some(d)) {
        return Err(CliError::Usage("ingest would overwrite its input".into()));
    }
    dataset::write_csv(&ds, &dst)?;
    rec.register(&rel);
    let summary = IngestSummary {
        source: input.to_string_lossy().into_owned(),
        source_sha256: sha256_file(&input)?,
        feature_set: ds.feature_set(),
        subjects: ds.n_subjects(),
        trials: ds.len(),
        channels: ds.channels(),
        time_points: ds.time_points(),
    };
    rec.write_json(format!("data/{name}.summary.json"), &summary)?;
    Ok(format!("ingest_{name}"))
}

/// Split plan and provenance shared by all fold models of one architecture.
#[derive(Debug, Serialize, Deserialize)]
struct PlanFile {
    model: String,
    dataset_sha256: String,
    fit_scope: String,
    seed: u64,
    plan: SplitPlan,
}

enum Scope {
    Full,
    Train,
}

/// The raw dataset plus everything needed to rebuild each round's model input.
struct Prepared {
    raw: Dataset,
    sha: String,
    scope: Scope,
    full: Option<Dataset>,
    folds: usize,
    seed: u64,
}

impl Prepared {
    fn load(k: &Keys, rec: &mut Recorder) -> Result<Prepared> {
        let path = require(&k.dataset, "dataset")?;
        if !path.is_file() {
            return Err(CliError::Io(format!("dataset {} not found", path.display())));
        }
        let raw = dataset::ingest_csv(&path)?;
        rec.input(&path);
        if let Some(fs) = &k.feature_set {
            let want: FeatureSet = fs.parse()?;
            if want != raw.feature_set() {
                return Err(CliError::Usage(format!(
                    "--feature-set {want} but the dataset holds {}",
                    raw.feature_set()
                )));
            }
        }
        let scope = match require(&k.fit_scope, "fit-scope")?.as_str() {
            "full" => Scope::Full,
            "train" => Scope::Train,
            other => return Err(CliError::Usage(format!("--fit-scope must be `full` or `train`, got `{other}`"))),
        };
        let full = match scope {
            Scope::Full => Some(dataset::preprocess(&raw, FitScope::Full)?),
            Scope::Train => None,
        };
        Ok(Prepared {
            sha: sha256_file(&path)?,
            raw,
            scope,
            full,
            folds: require(&k.folds, "folds")?,
            seed: require(&k.seed, "seed")?,
        })
    }

    fn fs(&self) -> FeatureSet {
        self.raw.feature_set()
    }

    fn scope_name(&self) -> &'static str {
        match self.scope {
            Scope::Full => "full",
            Scope::Train => "train",
        }
    }

    fn for_round(&self, plan: &SplitPlan, round: usize) -> Result<Dataset> {
        match &self.full {
            Some(d) => Ok(d.clone()),
            None => {
                let r = plan.round(round)?;
                Ok(dataset::preprocess(&self.raw, FitScope::Subset(r.train))?)
            }
        }
    }

    fn rounds(&self, k: &Keys) -> Result<Vec<usize>> {
        match k.fold {
            Some(f) if f >= self.folds => Err(CliError::Usage(format!("--fold {f} out of range for {} folds", self.folds))),
            Some(f) => Ok(vec![f]),
            None => Ok((0..self.folds).collect()),
        }
    }
}

fn parse_archs(k: &Keys, fs: FeatureSet) -> Result<Vec<Architecture>> {
    let text = require(&k.arch, "arch")?;
    let mut out = Vec::new();
    for item in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let arch = match item.rsplit_once('/') {
            Some((a, f)) => {
                let named: FeatureSet = f.parse()?;
                if named != fs {
                    return Err(CliError::Usage(format!("--arch {item} does not match the {fs} dataset")));
                }
                a.parse()?
            }
            None => item.parse()?,
        };
        if !out.contains(&arch) {
            out.push(arch);
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage("--arch lists no architectures".into()));
    }
    Ok(out)
}

fn stem(arch: Architecture, fs: FeatureSet) -> String {
    format!("{}_{}", arch.slug(), fs.tag().to_ascii_lowercase())
}

fn model_rel(arch: Architecture, fs: FeatureSet, round: usize) -> PathBuf {
    PathBuf::from("models").join(format!("{}_fold{round}.json", stem(arch, fs)))
}

fn plan_rel(arch: Architecture, fs: FeatureSet) -> PathBuf {
    PathBuf::from("models").join(format!("{}.plan.json", stem(arch, fs)))
}

fn manifest_name(command: &str, archs: &[Architecture], fs: FeatureSet) -> String {
    let slugs: Vec<String> = archs.iter().map(|a| a.slug()).collect();
    format!("{command}_{}_{}", slugs.join("+"), fs.tag().to_ascii_lowercase())
}

fn train(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let data = Prepared::load(k, rec)?;
    let fs = data.fs();
    let archs = parse_archs(k, fs)?;
    let plan = dataset::make_splits(&data.raw, data.folds, data.seed)?;
    let rounds = data.rounds(k)?;
    let cfg = TrainConfig::default();
    rec.seeds.insert("split".into(), data.seed);
    for &r in &rounds {
        rec.seeds.insert(format!("fold{r}"), fold_seed(data.seed, r));
    }
    for &arch in &archs {
        for &r in &rounds {
            let ds = data.for_round(&plan, r)?;
            let round = plan.round(r)?;
            let model = fit(arch, &ds, &round, data.seed, &cfg)?;
            let acc = model.accuracy(&ds.select(&round.validation))?;
            eprintln!("trained {} fold {r}: validation accuracy {:.3}", catalog_name(arch, fs), acc);
            rec.write(model_rel(arch, fs, r), model.to_json()?)?;
        }
        let pf = PlanFile {
            model: catalog_name(arch, fs),
            dataset_sha256: data.sha.clone(),
            fit_scope: data.scope_name().into(),
            seed: data.seed,
            plan: plan.clone(),
        };
        rec.write_json(plan_rel(arch, fs), &pf)?;
    }
    Ok(manifest_name("train", &archs, fs))
}

/// Fold models of one architecture, checked against the dataset they were trained on.
struct Trained {
    plan: SplitPlan,
    models: BTreeMap<usize, AnyModel>,
}

fn load_trained(data: &Prepared, arch: Architecture, rounds: &[usize], rec: &mut Recorder) -> Result<Trained> {
    let fs = data.fs();
    let plan_path = rec.root().join(plan_rel(arch, fs));
    let text = std::fs::read_to_string(&plan_path).map_err(|e| {
        CliError::Io(format!("cannot read {} ({e}); run `train` first", plan_path.display()))
    })?;
    let pf: PlanFile = serde_json::from_str(&text)?;
    rec.input(&plan_path);
    if pf.dataset_sha256 != data.sha {
        return Err(CliError::Usage(format!("{} was trained on a different dataset", pf.model)));
    }
    if pf.plan.n_folds != data.folds || pf.seed != data.seed || pf.fit_scope != data.scope_name() {
        return Err(CliError::Usage(format!(
            "{} was trained with folds={}, seed={}, fit_scope={}",
            pf.model, pf.plan.n_folds, pf.seed, pf.fit_scope
        )));
    }
    pf.plan.check_matches(&data.raw)?;
    let mut models = BTreeMap::new();
    for &r in rounds {
        let path = rec.root().join(model_rel(arch, fs, r));
        let model = AnyModel::load(&path).map_err(|e| match e {
            gaitlrp::Error::Io(io) => CliError::Io(format!("cannot read {} ({io}); run `train` first", path.display())),
            other => core_err(other),
        })?;
        rec.input(&path);
        models.insert(r, model);
    }
    Ok(Trained { plan: pf.plan, models })
}

fn lrp_config(k: &Keys) -> Result<LrpConfig> {
    let target = match require(&k.target, "target")?.as_str() {
        "true" => Target::TrueClass,
        "predicted" => Target::PredictedClass,
        other => return Err(CliError::Usage(format!("--target must be `true` or `predicted`, got `{other}`"))),
    };
    Ok(LrpConfig {
        epsilon: require(&k.epsilon, "epsilon")?,
        target,
    })
}

fn eval(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let data = Prepared::load(k, rec)?;
    let fs = data.fs();
    let archs = parse_archs(k, fs)?;
    let rounds = data.rounds(k)?;
    let mut table = Table::new(&FEATURE_COLUMNS);
    for &arch in &archs {
        let trained = load_trained(&data, arch, &rounds, rec)?;
        let mut csv = String::from("round,test_accuracy\n");
        let mut accs = Vec::new();
        for (&r, model) in &trained.models {
            let ds = data.for_round(&trained.plan, r)?;
            let round = trained.plan.round(r)?;
            let acc = model.accuracy(&ds.select(&round.test))?;
            csv.push_str(&format!("{r},{acc:.6}\n"));
            accs.push(100.0 * acc);
        }
        rec.write(format!("eval/{}_folds.csv", stem(arch, fs)), csv)?;
        let ms = MeanStd::of(&accs).expect("at least one round");
        table.set(&arch.table_label(), fs.tag(), ms.display(1))?;
    }
    rec.write(format!("tables/table1_{}.csv", fs.tag().to_ascii_lowercase()), table.to_csv()?)?;
    Ok(manifest_name("eval", &archs, fs))
}

/// Relevance maps of every test trial, one list per round.
fn explain_rounds(
    data: &Prepared,
    trained: &Trained,
    cfg: &LrpConfig,
    threads: usize,
) -> Result<Vec<(usize, Vec<RelevanceMap>)>> {
    trained
        .models
        .iter()
        .map(|(&r, model)| {
            let ds = data.for_round(&trained.plan, r)?;
            let test = ds.select(&trained.plan.round(r)?.test);
            Ok((r, batch_explain(model, &test, cfg, threads)?))
        })
        .collect()
}

fn explain_cmd(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let data = Prepared::load(k, rec)?;
    let fs = data.fs();
    let archs = parse_archs(k, fs)?;
    let rounds = data.rounds(k)?;
    let cfg = lrp_config(k)?;
    for &arch in &archs {
        let trained = load_trained(&data, arch, &rounds, rec)?;
        for (r, maps) in explain_rounds(&data, &trained, &cfg, require(&k.threads, "threads")?)? {
            let worst = maps.iter().map(|m| m.conservation().relative).fold(0.0, f64::max);
            eprintln!("explained {} fold {r}: {} maps, worst relative residual {worst:.2e}", catalog_name(arch, fs), maps.len());
            let files: Vec<RelevanceFile> = maps.iter().map(RelevanceMap::to_file).collect();
            rec.write_json(format!("relevance/{}_fold{r}.json", stem(arch, fs)), &files)?;
        }
    }
    Ok(manifest_name("explain", &archs, fs))
}

fn noise_slug(n: &NoiseKind) -> String {
    match n {
        NoiseKind::Gaussian { sigma } => format!("gaussian-{sigma}"),
        NoiseKind::SaltMinus => "salt-minus".into(),
        NoiseKind::SaltPlus => "salt-plus".into(),
        NoiseKind::Pepper => "pepper".into(),
        NoiseKind::Shot => "shot".into(),
    }
}

#[derive(Serialize)]
struct PerturbationSummary<'a> {
    model: String,
    noise: NoiseKind,
    ordering: Ordering,
    /// AOPC over all repetitions of all folds, percentage points.
    aopc: MeanStd,
    folds: Vec<FoldReport<'a>>,
}

#[derive(Serialize)]
struct FoldReport<'a> {
    round: usize,
    report: &'a PerturbationReport,
}

fn perturb(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let data = Prepared::load(k, rec)?;
    let fs = data.fs();
    let archs = parse_archs(k, fs)?;
    let rounds = data.rounds(k)?;
    let noises: Vec<NoiseKind> = require(&k.noise, "noise")?
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<gaitlrp::Result<_>>()?;
    let ordering: Ordering = require(&k.ordering, "ordering")?.parse()?;
    let threads = require(&k.threads, "threads")?;
    rec.seeds.insert("perturbation".into(), data.seed);
    let columns: Vec<String> = NoiseKind::TABLE.iter().map(NoiseKind::label).collect();
    let mut table = Table::new(&columns);
    for &arch in &archs {
        let trained = load_trained(&data, arch, &rounds, rec)?;
        let test_sets: Vec<(usize, Vec<gaitlrp::GaitSample>)> = trained
            .models
            .keys()
            .map(|&r| {
                let ds = data.for_round(&trained.plan, r)?;
                Ok((r, ds.select(&trained.plan.round(r)?.test)))
            })
            .collect::<Result<_>>()?;
        for noise in &noises {
            let cfg = PerturbationConfig {
                steps: require(&k.steps, "steps")?,
                repetitions: require(&k.repetitions, "repetitions")?,
                paired: !require(&k.unpaired, "unpaired")?,
                epsilon: require(&k.epsilon, "epsilon")?,
                ..PerturbationConfig::new(*noise, ordering, data.seed)
            };
            let mut reports = Vec::new();
            for (r, test) in &test_sets {
                reports.push((*r, run_perturbation(&trained.models[r], test, &cfg, threads)?));
            }
            let pooled: Vec<f64> = reports.iter().flat_map(|(_, p)| p.aopc_per_repetition.iter().copied()).collect();
            let ms = MeanStd::of(&pooled).expect("at least one repetition");
            let base = format!("perturbation/{}_{}_{ordering}", stem(arch, fs), noise_slug(noise));
            let summary = PerturbationSummary {
                model: catalog_name(arch, fs),
                noise: *noise,
                ordering,
                aopc: ms,
                folds: reports.iter().map(|(round, report)| FoldReport { round: *round, report }).collect(),
            };
            rec.write_json(format!("{base}.json"), &summary)?;
            rec.write(format!("{base}.csv"), curve_csv(&reports))?;
            eprintln!("{} {}: AOPC {}", summary.model, noise.label(), ms.display(1));
            if columns.contains(&noise.label()) {
                table.set(&arch.table_label(), &noise.label(), ms.display(1))?;
            }
        }
    }
    rec.write(format!("tables/table2_{}_{ordering}.csv", fs.tag().to_ascii_lowercase()), table.to_csv()?)?;
    Ok(format!("{}_{ordering}", manifest_name("perturb", &archs, fs)))
}

/// Accuracy per step: the mean over folds, then each fold's repetition mean.
fn curve_csv(reports: &[(usize, PerturbationReport)]) -> String {
    let steps = reports[0].1.mean_curve.len();
    let mean: Vec<f64> = (0..steps)
        .map(|s| reports.iter().map(|(_, p)| p.mean_curve[s]).sum::<f64>() / reports.len() as f64)
        .collect();
    let mut s = String::from("step,mean_accuracy");
    for (r, _) in reports {
        s.push_str(&format!(",fold{r}"));
    }
    s.push('\n');
    for (i, m) in mean.iter().enumerate() {
        s.push_str(&format!("{i},{m:.6}"));
        for (_, p) in reports {
            s.push_str(&format!(",{:.6}", p.mean_curve[i]));
        }
        s.push('\n');
    }
    s
}

fn reliability(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let data = Prepared::load(k, rec)?;
    let fs = data.fs();
    let archs = parse_archs(k, fs)?;
    let rounds = data.rounds(k)?;
    let cfg = lrp_config(k)?;
    let mut table = Table::new(&FEATURE_COLUMNS);
    for &arch in &archs {
        let trained = load_trained(&data, arch, &rounds, rec)?;
        let maps: Vec<RelevanceMap> = explain_rounds(&data, &trained, &cfg, require(&k.threads, "threads")?)?
            .into_iter()
            .flat_map(|(_, m)| m)
            .collect();
        let report = gaitlrp::reliability_report(&catalog_name(arch, fs), &maps)?;
        rec.write_json(format!("reliability/{}.json", stem(arch, fs)), &report)?;
        rec.write(format!("reliability/{}.csv", stem(arch, fs)), report.to_csv())?;
        let cell = report.summary.map(|s| s.display(2)).unwrap_or_else(|| "undefined".into());
        table.set(&arch.table_label(), fs.tag(), cell)?;
    }
    rec.write(format!("tables/table3_{}.csv", fs.tag().to_ascii_lowercase()), table.to_csv()?)?;
    Ok(manifest_name("reliability", &archs, fs))
}

fn parse_list<T: std::str::FromStr>(text: &str, flag: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("bad --{flag} entry `{s}`"))))
        .collect()
}

fn parse_ranges(text: &str) -> Result<Vec<Range<usize>>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let bad = || CliError::Usage(format!("bad --stance range `{s}` (expected start:end)"));
            let (a, b) = s.split_once(':').ok_or_else(bad)?;
            let (a, b): (usize, usize) = (a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?);
            if a >= b {
                return Err(bad());
            }
            Ok(a..b)
        })
        .collect()
}

fn render(k: &Keys, rec: &mut Recorder) -> Result<String> {
    let data = Prepared::load(k, rec)?;
    let fs = data.fs();
    let archs = parse_archs(k, fs)?;
    let [arch] = archs[..] else {
        return Err(CliError::Usage("render takes a single --arch".into()));
    };
    let subject = require(&k.subject, "subject")?;
    let cfg = lrp_config(k)?;
    let spec = PlotSpec {
        channels: k.channels.as_deref().map(|c| parse_list(c, "channels")).transpose()?,
        stance: k.stance.as_deref().map(parse_ranges).transpose()?.unwrap_or_default(),
        title: Some(catalog_name(arch, fs)),
        ..PlotSpec::default()
    };
    let mut indices: Vec<usize> = data
        .raw
        .samples()
        .iter()
        .enumerate()
        .filter(|(_, s)| s.subject_id == subject && k.trial.is_none_or(|t| t == s.trial_id))
        .map(|(i, _)| i)
        .collect();
    if indices.is_empty() {
        return Err(CliError::Core(gaitlrp::Error::Range(match k.trial {
            Some(t) => format!("no trial {t} for subject {subject}"),
            None => format!("no trials for subject {subject}"),
        })));
    }
    let grid = require(&k.grid, "grid")?;
    if !grid {
        indices.truncate(1);
    }
    let plan = dataset::make_splits(&data.raw, data.folds, data.seed)?;
    let rounds: Vec<usize> = {
        let mut r: Vec<usize> = indices.iter().map(|&i| plan.fold_of(i)).collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    let trained = load_trained(&data, arch, &rounds, rec)?;
    let mut pairs = Vec::new();
    for &i in &indices {
        let r = plan.fold_of(i);
        let ds = data.for_round(&trained.plan, r)?;
        let sample = ds.samples()[i].clone();
        let map = explain(&trained.models[&r], &sample, &cfg)?;
        pairs.push((sample, map.relevance));
    }
    let base = format!("figures/{}_s{subject}", stem(arch, fs));
    if grid {
        let refs: Vec<_> = pairs.iter().map(|(s, r)| (s, r)).collect();
        rec.write(format!("{base}_grid.svg"), render_curve_grid(&refs, &spec)?)?;
        Ok(format!("render_{}_s{subject}_grid", stem(arch, fs)))
    } else {
        let (sample, relevance) = &pairs[0];
        let plot = render_relevance_plot(sample, relevance, &spec)?;
        let t = sample.trial_id;
        rec.write(format!("{base}_t{t}.svg"), plot.svg)?;
        rec.write_json(format!("{base}_t{t}.json"), &plot.sidecar)?;
        Ok(format!("render_{}_s{subject}_t{t}", stem(arch, fs)))
    }
}
