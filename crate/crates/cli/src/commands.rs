use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use stgnn_core::config::{join_list, KeyValues};
use stgnn_core::data::{Profiles, Sample, SPEED_HEADER_PREFIX, VOLUME_HEADER_PREFIX};
use stgnn_core::graph::{self, io, DualGraph, MeanMode, NUM_STATIC, STATIC_NAMES};
use stgnn_core::model::{ModelConfig, Variant};
use stgnn_core::synth::{gen_network, gen_traffic, select_sensors, SynthConfig, TrafficMode};
use stgnn_core::train::{
    evaluate, hour_slice_csv, infer_network, load_checkpoint, prepare, run_ablations, run_seed,
    save_checkpoint, AblationRow, LabeledSet, MetricsReport, TrainConfig,
};

use crate::settings::{usage, Settings};
use crate::{Command, Common};

const DUAL_NODES: &str = "dual_nodes.csv";
const DUAL_EDGES: &str = "dual_edges.csv";
const SPEEDS: &str = "speeds.csv";
const VOLUMES: &str = "volumes.csv";
const VOLUMES_TRUTH: &str = "volumes_truth.csv";

pub fn dispatch(cmd: Command) -> (Common, Result<()>) {
    match cmd {
        Command::GenNet {
            common,
            grid,
            one_way_prob,
        } => {
            let r = gen_net(&common, grid.as_deref(), one_way_prob);
            (common, r)
        }
        Command::BuildDual {
            common,
            primal,
            unify,
            mean_mode,
            sensor_fraction,
        } => {
            let r = build_dual(&common, &primal, unify, &mean_mode, sensor_fraction);
            (common, r)
        }
        Command::GenTraffic { common, dual, mode } => {
            let r = gen_traffic_cmd(&common, &dual, mode.as_deref());
            (common, r)
        }
        Command::Train {
            common,
            dual,
            traffic,
            seeds,
            variant,
        } => {
            let r = train_cmd(&common, &dual, &traffic, seeds, variant.as_deref());
            (common, r)
        }
        Command::Evaluate {
            common,
            checkpoint,
            dual,
            traffic,
            all_sensors,
        } => {
            let r = evaluate_cmd(&common, &checkpoint, &dual, &traffic, all_sensors);
            (common, r)
        }
        Command::Ablate {
            common,
            dual,
            traffic,
            raw_traffic,
            seeds,
        } => {
            let r = ablate_cmd(&common, &dual, &traffic, &raw_traffic, seeds);
            (common, r)
        }
        Command::Infer {
            common,
            checkpoint,
            dual,
            traffic,
            day,
            hour,
        } => {
            let r = infer_cmd(&common, &checkpoint, &dual, &traffic, day, hour);
            (common, r)
        }
        Command::ReportFeatures { common, dual, bins } => {
            let r = report_features(&common, &dual, bins);
            (common, r)
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_dual(dir: &Path) -> Result<DualGraph> {
    Ok(io::read_dual(&dir.join(DUAL_NODES), &dir.join(DUAL_EDGES))?)
}

fn read_traffic(dir: &Path) -> Result<(Profiles, Profiles)> {
    let speeds = Profiles::read_auto(&dir.join(SPEEDS))?;
    let volumes = Profiles::read_auto(&dir.join(VOLUMES))?;
    Ok((speeds, volumes))
}

fn check_nodes(dual: &DualGraph, speeds: &Profiles) -> Result<()> {
    if let Some(&v) = speeds.nodes().iter().find(|&&v| v >= dual.num_nodes()) {
        return Err(stgnn_core::Error::InvalidInput(format!(
            "speed profiles reference node {v} but the dual graph has {} nodes",
            dual.num_nodes()
        ))
        .into());
    }
    Ok(())
}

fn synth_config(settings: &Settings) -> Result<SynthConfig> {
    Ok(SynthConfig::from_kv(&settings.kv)?)
}

/// Model config with the data-dependent widths filled in.
fn model_config(
    settings: &mut Settings,
    speeds: &Profiles,
    volumes: &Profiles,
    variant: Option<&str>,
) -> Result<ModelConfig> {
    settings.kv.set("model.steps", speeds.width());
    settings.kv.set("model.horizon", volumes.width());
    let mut cfg = ModelConfig::from_kv(&settings.kv)?;
    if let Some(name) = variant {
        if cfg.ablations.variant()? != Variant::Full {
            return Err(usage(
                "--variant conflicts with model ablation keys in the configuration",
            ));
        }
        let v: Variant = name.parse()?;
        cfg = cfg.with_variant(v);
        cfg.to_kv(&mut settings.kv);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn train_config(settings: &mut Settings, seeds: Option<usize>) -> Result<TrainConfig> {
    if let Some(n) = seeds {
        if n == 0 {
            return Err(usage("--seeds must be at least 1"));
        }
        let list: Vec<u64> = (0..n as u64).map(|i| settings.seed + i).collect();
        settings.kv.set("train.seeds", join_list(&list));
    }
    let cfg = TrainConfig::from_kv(&settings.kv)?;
    cfg.to_kv(&mut settings.kv);
    Ok(cfg)
}

fn gen_net(common: &Common, grid: Option<&str>, one_way_prob: Option<f64>) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    if let Some(g) = grid {
        let (r, c) = g
            .split_once(['x', 'X'])
            .ok_or_else(|| usage(format!("--grid expects ROWSxCOLS, got {g:?}")))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| usage(format!("bad grid size {g:?}")))
        };
        s.kv.set("synth.rows", parse(r)?);
        s.kv.set("synth.cols", parse(c)?);
    }
    if let Some(p) = one_way_prob {
        s.kv.set("synth.one_way_prob", p);
    }
    let cfg = synth_config(&s)?;
    cfg.to_kv(&mut s.kv);
    let primal = stgnn_core::par::with_workers(s.workers, || gen_network(&cfg, s.seed))?;
    s.save(&common.out)?;
    io::save_primal(&primal, &common.out.join("primal.txt"))?;
    log::info!(
        "{} intersections, {} links",
        primal.intersections().len(),
        primal.links().len()
    );
    Ok(())
}

fn build_dual(
    common: &Common,
    primal_path: &Path,
    unify: bool,
    mean_mode: &str,
    fraction: Option<f64>,
) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    s.set_path("primal", primal_path);
    if let Some(f) = fraction {
        s.kv.set("synth.sensor_fraction", f);
    }
    let cfg = synth_config(&s)?;
    s.kv.set("synth.sensor_fraction", cfg.sensor_fraction);
    let mut primal = io::read_primal(primal_path)?;
    if unify {
        let mode: MeanMode = mean_mode.parse()?;
        primal = graph::unify_segments(&primal, mode)?;
    }
    let mut dual = graph::build_dual(&primal)?;
    let sensors = select_sensors(&mut dual, cfg.sensor_fraction, s.seed);
    s.save(&common.out)?;
    io::save_dual(
        &dual,
        &common.out.join(DUAL_NODES),
        &common.out.join(DUAL_EDGES),
    )?;
    log::info!(
        "{} dual nodes, {} edges, {} sensors",
        dual.num_nodes(),
        dual.edges().len(),
        sensors.len()
    );
    Ok(())
}

fn gen_traffic_cmd(common: &Common, dual_dir: &Path, mode: Option<&str>) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    s.set_path("dual", dual_dir);
    if let Some(m) = mode {
        let m: TrafficMode = m.parse()?;
        s.kv.set("synth.mode", m);
    }
    let cfg = synth_config(&s)?;
    cfg.to_kv(&mut s.kv);
    let dual = read_dual(dual_dir)?;
    let t = stgnn_core::par::with_workers(s.workers, || gen_traffic(&cfg, &dual, s.seed))?;
    s.save(&common.out)?;
    t.speeds
        .save(&common.out.join(SPEEDS), SPEED_HEADER_PREFIX)?;
    t.observed
        .save(&common.out.join(VOLUMES), VOLUME_HEADER_PREFIX)?;
    t.truth
        .save(&common.out.join(VOLUMES_TRUTH), VOLUME_HEADER_PREFIX)?;
    Ok(())
}

fn report_row(out: &mut String, model: &str, seed: &str, m: &MetricsReport) {
    let _ = writeln!(
        out,
        "{model},{seed},{},{},{},{}",
        m.rmse, m.mape, m.geh, m.pct_geh_gt5
    );
}

fn train_cmd(
    common: &Common,
    dual_dir: &Path,
    traffic: &Path,
    seeds: Option<usize>,
    variant: Option<&str>,
) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    s.set_path("dual", dual_dir);
    s.set_path("traffic", traffic);
    let dual = read_dual(dual_dir)?;
    let (speeds, volumes) = read_traffic(traffic)?;
    check_nodes(&dual, &speeds)?;
    let mc = model_config(&mut s, &speeds, &volumes, variant)?;
    let tc = train_config(&mut s, seeds)?;
    s.save(&common.out)?;
    let samples = prepare(&dual, &speeds, &volumes, mc.k)?;
    log::info!(
        "{} samples from {} sensors",
        samples.len(),
        dual.labeled().len()
    );
    let name = mc.variant()?.name();
    let mut results = String::from("model,seed,rmse,mape,geh,pct_geh_gt5\n");
    let (mut model_reports, mut base_reports) = (Vec::new(), Vec::new());
    for &seed in &tc.seeds {
        let run = stgnn_core::par::with_workers(s.workers, || {
            run_seed(&dual, &speeds, &samples, &mc, &tc, seed)
        })?;
        let dir = common.out.join(format!("seed_{seed}"));
        save_checkpoint(&dir, &run.outcome.model, &run.norm)?;
        let mut split = KeyValues::new();
        split.set("split.seed", seed);
        split.set("split.train", join_list(&run.train_nodes));
        split.set("split.val", join_list(&run.val_nodes));
        split.set("split.best_epoch", run.outcome.best_epoch);
        split.save(&dir.join("split.cfg"))?;
        write(&dir.join("loss_curve.csv"), &run.outcome.curve_csv())?;
        if let (Some(m), Some(b)) = (run.val_metrics, run.baseline_metrics) {
            log::info!(
                "seed {seed}: held-out GEH {:.3} (class baseline {:.3})",
                m.geh,
                b.geh
            );
            report_row(&mut results, name, &seed.to_string(), &m);
            report_row(&mut results, "class_baseline", &seed.to_string(), &b);
            model_reports.push(m);
            base_reports.push(b);
        }
    }
    if !model_reports.is_empty() {
        report_row(
            &mut results,
            name,
            "mean",
            &MetricsReport::mean(&model_reports)?,
        );
        report_row(
            &mut results,
            "class_baseline",
            "mean",
            &MetricsReport::mean(&base_reports)?,
        );
    } else {
        log::warn!("no validation sensors; no held-out report");
    }
    write(&common.out.join("results.csv"), &results)
}

fn parse_nodes(kv: &KeyValues, key: &str) -> Result<BTreeSet<usize>> {
    if !kv.contains(key) {
        return Err(stgnn_core::Error::Config(format!("missing key {key}")).into());
    }
    Ok(kv
        .get_list_or::<usize>(key, Vec::new())?
        .into_iter()
        .collect())
}

fn evaluate_cmd(
    common: &Common,
    checkpoint: &Path,
    dual_dir: &Path,
    traffic: &Path,
    all_sensors: bool,
) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    s.set_path("checkpoint", checkpoint);
    s.set_path("dual", dual_dir);
    s.set_path("traffic", traffic);
    let (model, norm) = load_checkpoint(checkpoint)?;
    let dual = read_dual(dual_dir)?;
    let (speeds, volumes) = read_traffic(traffic)?;
    check_nodes(&dual, &speeds)?;
    let samples = prepare(&dual, &speeds, &volumes, model.config().k)?;
    let chosen: Vec<Sample> = if all_sensors {
        samples
    } else {
        let split = KeyValues::read(&checkpoint.join("split.cfg"))?;
        let val = parse_nodes(&split, "split.val")?;
        samples
            .into_iter()
            .filter(|x| val.contains(&x.target))
            .collect()
    };
    if chosen.is_empty() {
        return Err(stgnn_core::Error::InvalidInput("no samples to evaluate".into()).into());
    }
    s.save(&common.out)?;
    let set = LabeledSet::build(&dual, &speeds, &chosen, &norm)?;
    let tc = TrainConfig::from_kv(&s.kv)?;
    let (_, report, preds) =
        stgnn_core::par::with_workers(s.workers, || evaluate(&model, &set, &norm, tc.delta))?;
    let mut out = Profiles::new(model.config().horizon);
    for (x, p) in chosen.iter().zip(preds) {
        out.insert(x.target, x.day, p)?;
    }
    out.save(&common.out.join("predictions.csv"), VOLUME_HEADER_PREFIX)?;
    let mut csv = String::from("model,seed,rmse,mape,geh,pct_geh_gt5\n");
    report_row(
        &mut csv,
        model.variant().name(),
        &checkpoint.display().to_string(),
        &report,
    );
    write(&common.out.join("metrics.csv"), &csv)?;
    log::info!("GEH {:.3}, RMSE {:.1}", report.geh, report.rmse);
    Ok(())
}

fn ablate_cmd(
    common: &Common,
    dual_dir: &Path,
    traffic: &Path,
    raw: &Path,
    seeds: Option<usize>,
) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    s.set_path("dual", dual_dir);
    s.set_path("traffic", traffic);
    s.set_path("raw_traffic", raw);
    let dual = read_dual(dual_dir)?;
    let (speeds, volumes) = read_traffic(traffic)?;
    let (raw_speeds, raw_volumes) = read_traffic(raw)?;
    check_nodes(&dual, &speeds)?;
    check_nodes(&dual, &raw_speeds)?;
    if raw_speeds.width() != speeds.width() || raw_volumes.width() != volumes.width() {
        return Err(stgnn_core::Error::InvalidInput(
            "averaged and raw profiles differ in width".into(),
        )
        .into());
    }
    let mc = model_config(&mut s, &speeds, &volumes, None)?;
    if mc.variant()? != Variant::Full {
        return Err(usage(
            "ablate trains every variant; remove model ablation keys",
        ));
    }
    let tc = train_config(&mut s, seeds)?;
    s.save(&common.out)?;
    let samples = prepare(&dual, &speeds, &volumes, mc.k)?;
    let raw_samples = prepare(&dual, &raw_speeds, &raw_volumes, mc.k)?;
    let rows = stgnn_core::par::with_workers(s.workers, || {
        run_ablations(
            &dual,
            (&speeds, &samples),
            (&raw_speeds, &raw_samples),
            &mc,
            &tc,
        )
    })?;
    write(
        &common.out.join("ablation_results.csv"),
        &AblationRow::results_csv(&rows),
    )?;
    let table = AblationRow::table(&rows)?;
    write(
        &common.out.join("ablation_table.csv"),
        &AblationRow::table_csv(&table),
    )
}

fn infer_cmd(
    common: &Common,
    checkpoint: &Path,
    dual_dir: &Path,
    traffic: &Path,
    day: usize,
    hour: usize,
) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    s.set_path("checkpoint", checkpoint);
    s.set_path("dual", dual_dir);
    s.set_path("traffic", traffic);
    let (model, norm) = load_checkpoint(checkpoint)?;
    let dual = read_dual(dual_dir)?;
    let speeds = Profiles::read_auto(&traffic.join(SPEEDS))?;
    check_nodes(&dual, &speeds)?;
    if hour >= model.config().horizon {
        return Err(usage(format!(
            "--hour must be below {}",
            model.config().horizon
        )));
    }
    let days: Vec<usize> = speeds.days().into_iter().collect();
    if !days.contains(&day) {
        return Err(usage(format!("--day {day} has no speed profiles")));
    }
    s.save(&common.out)?;
    let all = stgnn_core::par::with_workers(s.workers, || {
        infer_network(&model, &dual, &speeds, &norm, &days)
    })?;
    all.save(
        &common.out.join("network_volumes.csv"),
        VOLUME_HEADER_PREFIX,
    )?;
    write(
        &common.out.join(format!("hour_slice_d{day}_h{hour}.csv")),
        &hour_slice_csv(&all, day, hour)?,
    )?;
    log::info!(
        "estimated {} profiles on {} nodes",
        all.len(),
        dual.num_nodes()
    );
    Ok(())
}

fn report_features(common: &Common, dual_dir: &Path, bins: usize) -> Result<()> {
    let mut s = Settings::resolve(common)?;
    s.set_path("dual", dual_dir);
    if bins == 0 {
        return Err(usage("--bins must be positive"));
    }
    let dual = read_dual(dual_dir)?;
    if dual.num_nodes() == 0 {
        return Err(stgnn_core::Error::InvalidInput("dual graph has no nodes".into()).into());
    }
    s.save(&common.out)?;
    let feats = dual.features();
    let mut csv = String::from("feature,bin,lo,hi,labeled,unlabeled\n");
    for j in 0..NUM_STATIC {
        let lo = feats.iter().map(|f| f[j]).fold(f64::INFINITY, f64::min);
        let hi = feats.iter().map(|f| f[j]).fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo {
            (hi - lo) / bins as f64
        } else {
            1.0
        };
        let mut counts = vec![(0usize, 0usize); bins];
        for (v, f) in feats.iter().enumerate() {
            let b = (((f[j] - lo) / width) as usize).min(bins - 1);
            if dual.node(v).sensor {
                counts[b].0 += 1;
            } else {
                counts[b].1 += 1;
            }
        }
        for (b, (l, u)) in counts.iter().enumerate() {
            let a = lo + b as f64 * width;
            let _ = writeln!(csv, "{},{b},{a},{},{l},{u}", STATIC_NAMES[j], a + width);
        }
    }
    write(&common.out.join("feature_histograms.csv"), &csv)?;
    let labeled = dual.labeled().len();
    log::info!(
        "{labeled} sensors, {} other nodes",
        dual.num_nodes() - labeled
    );
    Ok(())
}
