use std::fs;
use std::io::{BufReader, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use prefbench_core::analysis::{
    accuracy_contingency, best_scaled_likelihood, fisher_exact, mann_whitney_u, noiseless_accuracy,
    partitioned_learning_experiment, spearman, spearman_exact, subsample_to_smallest, wilcoxon_signed_rank,
    AccuracyEntry, ExperimentReport, LikelihoodEntry, PartitionConfig, PartitionEntry, ReportFormat, TestEntry,
    TestResult,
};
use prefbench_core::dataset::{
    augment_identifiability, read_dataset, sample_pair_distinct_starts, sample_pair_random, sample_pair_terminal,
    synth_dataset, write_dataset, Polarity, PreferenceDataset, SEGMENT_ACTIONS,
};
use prefbench_core::learning::{train as train_weights, TrainConfig, TrainResult};
use prefbench_core::planner::{
    generate_candidate_sf_set, value_iteration, ReturnBaseline, SuccessorFeatureSet, ValueTable, DEFAULT_GAMMA,
    DEFAULT_TOL,
};
use prefbench_core::preference::{
    noiseless_label, partial_return, regret_d, ModelKind, PreferenceModelSpec, Segment, Values,
};
use prefbench_core::{GridMap, LinearReward};
use prefbench_service::config::load_map;
use prefbench_service::{Service, ServiceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::{
    AnalyzeArgs, EvalArgs, MapArgs, MapOpt, PairKind, ReportFormatArg, SegmentsArgs, ServeArgs, SfOpt, StatsArgs,
    StatsTest, SynthArgs, TextOrJson, TrainArgs,
};

const GT: LinearReward = LinearReward::GROUND_TRUTH;

fn open_map(opt: &MapOpt) -> Result<GridMap> {
    Ok(load_map(&opt.map)?)
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            std::io::stdout().lock().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load_dataset(map: &GridMap, path: &Path) -> Result<PreferenceDataset> {
    let file = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_dataset(map, BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

fn gt_values(map: &GridMap) -> Result<ValueTable> {
    Ok(value_iteration(map, &GT, DEFAULT_GAMMA, DEFAULT_TOL)?)
}

fn successor_features(map: &GridMap, opt: &SfOpt) -> Result<SuccessorFeatureSet> {
    if let Some(path) = opt.sf_cache.as_deref().filter(|p| p.exists()) {
        let text = fs::read_to_string(path)?;
        let sfs = SuccessorFeatureSet::from_json(map, &text).map_err(anyhow::Error::msg)?;
        if sfs.len() != opt.candidates {
            bail!("{} holds {} candidates, not {}", path.display(), sfs.len(), opt.candidates);
        }
        return Ok(sfs);
    }
    let sfs = generate_candidate_sf_set(map, opt.candidates, opt.sf_seed)?;
    if let Some(path) = &opt.sf_cache {
        fs::write(path, sfs.to_json(map))?;
    }
    Ok(sfs)
}

pub fn map(a: MapArgs) -> Result<()> {
    let map = open_map(&a.map)?;
    let w = a.weights.unwrap_or(GT);
    let vt = value_iteration(&map, &w, DEFAULT_GAMMA, DEFAULT_TOL)?;
    let values: Vec<Vec<Option<f64>>> = (0..map.height())
        .map(|y| (0..map.width()).map(|x| map.state_at(x, y).map(|s| vt.value(&s))).collect())
        .collect();
    let text = match a.format {
        TextOrJson::Json => {
            let doc = json!({
                "name": map.name(),
                "fingerprint": map.fingerprint(),
                "width": map.width(),
                "height": map.height(),
                "text": map.to_text(),
                "weights": w,
                "values": values,
            });
            format!("{}\n", serde_json::to_string_pretty(&doc)?)
        }
        TextOrJson::Text => {
            let mut s = format!("{} ({})\n{}\n", map.name(), map.fingerprint(), map.to_text().trim_end());
            s.push_str("\nstate values:\n");
            for row in &values {
                let cells: Vec<String> =
                    row.iter().map(|v| v.map_or_else(|| format!("{:>9}", "."), |v| format!("{v:>9.2}"))).collect();
                s.push_str(&cells.join(""));
                s.push('\n');
            }
            s
        }
    };
    emit(None, &text)
}

fn segment_json(s: &Segment, vt: &ValueTable) -> Result<serde_json::Value> {
    Ok(json!({
        "start": s.start(),
        "actions": s.actions(),
        "end": s.end(),
        "terminated": s.terminated(),
        "partial_return": partial_return(s, &GT),
        "regret": regret_d(s, &GT, vt)?,
    }))
}

pub fn segments(a: SegmentsArgs) -> Result<()> {
    let map = open_map(&a.map)?;
    let vt = gt_values(&map)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut out = String::new();
    for i in 0..a.count {
        let (s1, s2) = match a.kind {
            PairKind::Random => sample_pair_random(&map, SEGMENT_ACTIONS, &mut rng)?,
            PairKind::DistinctStarts => sample_pair_distinct_starts(&map, SEGMENT_ACTIONS, &mut rng)?,
            PairKind::Goal => sample_pair_terminal(&map, Polarity::Positive, &mut rng)?,
            PairKind::Sheep => sample_pair_terminal(&map, Polarity::Negative, &mut rng)?,
        };
        let label = |kind: ModelKind, values: Values<'_>| {
            noiseless_label(&PreferenceModelSpec::noiseless(kind), &s1, &s2, &GT, values)
        };
        let line = json!({
            "pair_id": format!("p{i:04}"),
            "segments": [segment_json(&s1, &vt)?, segment_json(&s2, &vt)?],
            "noiseless": {
                "partial_return": label(ModelKind::PartialReturn, Values::None)?,
                "regret": label(ModelKind::Regret, Values::Exact(&vt))?,
            },
        });
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    emit(None, &out)
}

pub fn synth(a: SynthArgs) -> Result<()> {
    let map = open_map(&a.map)?;
    let spec = match a.scale {
        Some(scale) => PreferenceModelSpec::boltzmann(a.model, scale),
        None => PreferenceModelSpec::noiseless(a.model),
    };
    let mut d = synth_dataset(&map, &GT, &spec, a.random, a.terminal, a.seed)?;
    if a.augment > 0 {
        d = augment_identifiability(&d, &map, &GT, a.augment, a.seed)?;
    }
    let mut buf = Vec::new();
    write_dataset(&d, &mut buf)?;
    emit(a.out.as_deref(), std::str::from_utf8(&buf)?)
}

#[derive(serde::Serialize)]
struct TrainOutput {
    #[serde(flatten)]
    result: TrainResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    normalized_return: Option<f64>,
}

pub fn train(a: TrainArgs) -> Result<()> {
    let map = open_map(&a.map)?;
    let d = load_dataset(&map, &a.data)?;
    let mut cfg = TrainConfig::for_model(a.model).with_seed(a.seed);
    if let Some(e) = a.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        cfg.learning_rate = lr;
    }
    let sfs = match a.model {
        ModelKind::Regret => Some(successor_features(&map, &a.sf)?),
        ModelKind::PartialReturn => None,
    };
    let result = train_weights(&d, &cfg, &map, sfs.as_ref())?;
    let normalized_return =
        if a.eval { Some(ReturnBaseline::new(&map, &GT)?.evaluate(&map, &result.weights)?) } else { None };
    let text = serde_json::to_string_pretty(&TrainOutput { result, normalized_return })?;
    emit(a.out.as_deref(), &format!("{text}\n"))
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let map = open_map(&a.map)?;
    let w = match (a.weights, &a.result) {
        (Some(w), _) => w,
        (None, Some(path)) => {
            let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
            serde_json::from_value(doc["weights"].clone()).context("reading weights from the train output")?
        }
        (None, None) => bail!("pass --weights or --result"),
    };
    let baseline = ReturnBaseline::new(&map, &GT)?;
    let doc = json!({
        "weights": w,
        "normalized_return": baseline.evaluate(&map, &w)?,
        "v_star": baseline.v_star,
        "v_uniform": baseline.v_uniform,
    });
    emit(None, &format!("{}\n", serde_json::to_string_pretty(&doc)?))
}

fn test_entry(condition: String, model: ModelKind, test: &str, r: TestResult) -> TestEntry {
    TestEntry { condition, model, test: test.into(), statistic: r.statistic, p_value: r.p_value }
}

pub fn analyze(a: AnalyzeArgs) -> Result<()> {
    let map = open_map(&a.map)?;
    let mut datasets = Vec::new();
    for (name, path) in &a.data {
        if datasets.iter().any(|(n, _)| n == name) {
            bail!("dataset name {name:?} given twice");
        }
        datasets.push((name.clone(), load_dataset(&map, path)?));
    }
    if let Some(c) = &a.control {
        if !datasets.iter().any(|(n, _)| n == c) {
            bail!("control {c:?} is not among the datasets");
        }
    }
    let vt = gt_values(&map)?;
    let values_for = |m: ModelKind| (m == ModelKind::Regret).then_some(&vt);

    let mut report = ExperimentReport::default();
    let mut per_sample_ce = Vec::new();
    for (name, d) in &datasets {
        for &m in &a.models {
            let fit = best_scaled_likelihood(d, m, &GT, values_for(m))?;
            report.likelihood.push(LikelihoodEntry {
                condition: name.clone(),
                model: m,
                best_scale: fit.best_scale,
                mean_ce: fit.mean_ce,
            });
            report.accuracy.push(AccuracyEntry {
                condition: name.clone(),
                model: m,
                accuracy: noiseless_accuracy(d, m, &GT, values_for(m))?,
                n: d.samples.iter().filter(|s| s.label.is_strict()).count(),
            });
            per_sample_ce.push(((name.clone(), m), fit.per_sample_ce));
        }
    }

    if let Some(control_name) = &a.control {
        let control = &datasets.iter().find(|(n, _)| n == control_name).expect("checked above").1;
        let ce = |name: &str, m: ModelKind| {
            &per_sample_ce.iter().find(|((n, k), _)| n == name && *k == m).expect("computed above").1
        };
        for (name, d) in datasets.iter().filter(|(n, _)| n != control_name) {
            for &m in &a.models {
                let label = format!("{name} vs {control_name}");
                let r = mann_whitney_u(ce(name, m), ce(control_name, m))?;
                report.tests.push(test_entry(label.clone(), m, "mann_whitney_ce", r));
                let table = accuracy_contingency(d, control, m, &GT, values_for(m))?;
                let p = fisher_exact(table)?;
                let frac = |col: usize| table[0][col] as f64 / (table[0][col] + table[1][col]).max(1) as f64;
                report.tests.push(TestEntry {
                    condition: label,
                    model: m,
                    test: "fisher_accuracy".into(),
                    statistic: frac(0) - frac(1),
                    p_value: p,
                });
            }
        }
    }

    if !a.partitions.is_empty() {
        let equal =
            subsample_to_smallest(&datasets.iter().map(|(_, d)| d.clone()).collect::<Vec<_>>(), a.subsample_seed);
        let sfs = if a.models.contains(&ModelKind::Regret) { Some(successor_features(&map, &a.sf)?) } else { None };
        for ((name, _), d) in datasets.iter().zip(&equal) {
            for &m in &a.models {
                let cfg = PartitionConfig {
                    partition_counts: a.partitions.clone(),
                    seeds: a.seeds.0.clone(),
                    train: TrainConfig::for_model(m),
                };
                let sfs = (m == ModelKind::Regret).then_some(sfs.as_ref()).flatten();
                let exp = partitioned_learning_experiment(d, &cfg, &map, &GT, sfs)?;
                report.partitions.extend(exp.summaries.iter().map(|s| PartitionEntry::from_summary(name, m, s)));
            }
        }
    }

    report.validate()?;
    let format = match a.format {
        ReportFormatArg::Json => ReportFormat::Json,
        ReportFormatArg::Csv => ReportFormat::Csv,
    };
    emit(a.out.as_deref(), &report.emit(format))
}

pub fn stats(a: StatsArgs) -> Result<()> {
    let doc = match a.test {
        StatsTest::MannWhitney { x, y } => serde_json::to_value(mann_whitney_u(&x, &y)?)?,
        StatsTest::Wilcoxon { x, y } => {
            if x.len() != y.len() {
                bail!("paired samples differ in length: {} vs {}", x.len(), y.len());
            }
            let pairs: Vec<(f64, f64)> = x.into_iter().zip(y).collect();
            serde_json::to_value(wilcoxon_signed_rank(&pairs)?)?
        }
        StatsTest::Fisher { table } => {
            let [a, b, c, d] = table[..] else { bail!("a 2x2 table needs 4 counts, got {}", table.len()) };
            json!({ "p_value": fisher_exact([[a, b], [c, d]])?, "exact": true })
        }
        StatsTest::Spearman { x, y, exact } => {
            let r = if exact { spearman_exact(&x, &y)? } else { spearman(&x, &y)? };
            serde_json::to_value(r)?
        }
    };
    emit(None, &format!("{doc}\n"))
}

pub fn serve(a: ServeArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(path) => ServiceConfig::from_file(path)?,
        None => ServiceConfig::default(),
    };
    if let Some(bind) = a.bind {
        cfg.bind = bind;
    }
    if let Some(store) = a.store {
        cfg.store = Some(store);
    }
    let service = Arc::new(Service::new(cfg)?);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(prefbench_service::serve(service))?;
    Ok(())
}
