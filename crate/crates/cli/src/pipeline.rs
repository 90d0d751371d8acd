//! The end-to-end steps behind each subcommand. Every artifact carries the
//! config hash and seed in its metadata.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use classforget_core::baselines::{compare_table, ComparisonTable, UnlearnContext, UnlearnerRegistry};
use classforget_core::data::synth::generate;
use classforget_core::data::{build_limited_subset, load_split, Dataset, Subset};
use classforget_core::erwp::{erwp_run, loss_history_csv};
use classforget_core::eval::{evaluate_protocol, Evaluator, MetricsReport};
use classforget_core::io_util::write_atomic;
use classforget_core::model::{load_checkpoint_expecting, save_checkpoint, ArchRegistry, Architecture, ModelPair, Network};
use classforget_core::relevance::{identify_classes, RelevanceMask};
use classforget_core::train::train_original;
use classforget_core::{ClassPartition, Error, Result};

use crate::config::RunConfig;
use crate::plot::write_curves;

pub const ORIGINAL_CKPT: &str = "original.ckpt";
pub const ERWP_CKPT: &str = "erwp.ckpt";
pub const MASK_FILE: &str = "mask.txt";
pub const REPORTS_DIR: &str = "reports";

/// Loaded data and derived state shared by all steps of one run.
pub struct Workspace {
    pub cfg: RunConfig,
    pub hash: String,
    pub train: Dataset,
    pub test: Dataset,
    pub partition: ClassPartition,
    pub subset: Subset,
    archs: ArchRegistry,
}

impl Workspace {
    pub fn open(cfg: RunConfig) -> Result<Workspace> {
        cfg.validate()?;
        let archs = ArchRegistry::builtin();
        archs.get(&cfg.architecture)?;
        let (train, test) = match &cfg.data.dir {
            Some(dir) => (load_split(dir, "train")?, load_split(dir, "test")?),
            None => generate(&cfg.data.synthetic)?,
        };
        if train.num_classes() != test.num_classes() {
            return Err(Error::InsufficientData(format!(
                "train has {} classes, test has {}",
                train.num_classes(),
                test.num_classes()
            )));
        }
        let partition = cfg.partition.build(train.num_classes())?;
        let subset = build_limited_subset(&train, &cfg.subset.spec(cfg.seed)?)?;
        Ok(Workspace {
            hash: cfg.hash(),
            cfg,
            train,
            test,
            partition,
            subset,
            archs,
        })
    }

    pub fn arch(&self) -> &dyn Architecture {
        self.archs.get(&self.cfg.architecture).expect("checked on open")
    }

    pub fn evaluator(&self) -> Evaluator<'_> {
        Evaluator {
            l2_normalize: self.cfg.eval.l2_normalize,
            ..Evaluator::new(&self.train, &self.subset, &self.test, &self.partition)
        }
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    pub fn report_path(&self, method: &str) -> PathBuf {
        self.path(REPORTS_DIR).join(format!("{method}.json"))
    }

    fn stamp(&self, meta: &mut BTreeMap<String, String>) {
        meta.insert("config_hash".into(), self.hash.clone());
        meta.insert("seed".into(), self.cfg.seed.to_string());
    }

    pub fn load_model(&self, path: &Path) -> Result<Network<f32>> {
        load_checkpoint_expecting(path, self.arch().id())
    }

    /// The original checkpoint of this run's output directory.
    pub fn load_original(&self) -> Result<Network<f32>> {
        self.load_model(&self.path(ORIGINAL_CKPT))
    }

    fn save_model(&self, net: &mut Network<f32>, name: &str) -> Result<PathBuf> {
        self.stamp(&mut net.meta);
        let path = self.path(name);
        save_checkpoint(net, &path)?;
        Ok(path)
    }

    fn save_report(&self, report: &mut MetricsReport) -> Result<PathBuf> {
        self.stamp(&mut report.meta);
        let path = self.report_path(&report.method);
        report.save(&path)?;
        Ok(path)
    }

    pub fn write_config_copy(&self) -> Result<()> {
        write_atomic(&self.path("config.toml"), self.cfg.to_toml().as_bytes())
    }
}

/// Trains the original model on every class and scores it.
pub fn train_original_step(ws: &Workspace) -> Result<(Network<f32>, MetricsReport)> {
    ws.write_config_copy()?;
    let mut net = ws.arch().build(ws.train.num_classes(), ws.cfg.seed);
    train_original(&mut net, &ws.train, &ws.cfg.train, ws.cfg.seed)?;
    ws.save_model(&mut net, ORIGINAL_CKPT)?;
    let mut report = MetricsReport::new("original", ws.evaluator().metrics(&net)?, &ws.partition);
    ws.save_report(&mut report)?;
    Ok((net, report))
}

/// Relevance mask over the excluded classes. With no excluded classes the
/// mask is empty.
pub fn identify_step(ws: &Workspace, model: &Network<f32>, dest: &Path) -> Result<RelevanceMask> {
    if ws.partition.n_excluded() == 0 {
        log::warn!("partition excludes no classes; the mask selects nothing");
    }
    let classes: Vec<(usize, Vec<f32>)> = ws
        .partition
        .excluded()
        .iter()
        .map(|&c| (c, ws.train.gather(&ws.subset.filter(&ws.train, |l| l == c).indices)))
        .collect();
    let mut mask = identify_classes(
        model,
        &classes,
        ws.cfg.relevance.augmentation,
        &ws.cfg.relevance.search(),
        ws.cfg.seed,
    )?;
    ws.stamp(&mut mask.header.meta);
    mask.save(dest)?;
    Ok(mask)
}

/// Per-tensor selected fraction of `mask`, one line per tensor.
pub fn mask_summary(mask: &RelevanceMask) -> String {
    let mut s = String::new();
    for (i, name) in mask.names().iter().enumerate() {
        let n = mask.tensor(i).len();
        let k = mask.tensor_count(i);
        s += &format!("{name:<16} {k:>7}/{n:<7} {:>6.2}%\n", 100.0 * k as f64 / n.max(1) as f64);
    }
    s += &format!("{:<16} {:>7}/{:<7}\n", "total", mask.count(), mask.total());
    s
}

/// Runs ERwP from `model`, writing the final checkpoint, the report and
/// the per-epoch and per-batch CSVs.
pub fn unlearn_step(ws: &Workspace, model: &Network<f32>, mask: &RelevanceMask) -> Result<(Network<f32>, MetricsReport)> {
    let ev = ws.evaluator();
    let cfg = ws.cfg.unlearn_config();
    let out = erwp_run(
        ModelPair::from_original(model),
        &ws.train,
        &ws.subset,
        mask,
        &ws.partition,
        &cfg,
        Some(&ev),
    )?;
    let curve = out.metric_curve();
    write_atomic(&ws.path("erwp_losses.csv"), loss_history_csv(&out.history).as_bytes())?;
    let mut net = out.student;
    ws.save_model(&mut net, ERWP_CKPT)?;
    let mut report = evaluate_protocol(&net, model, &ev, &ws.cfg.gates, "ERwP")?;
    report.per_epoch = curve;
    report.meta.insert("mask_selected".into(), mask.count().to_string());
    ws.save_report(&mut report)?;
    write_curves(&report, &ws.cfg.out_dir, "erwp_curve")?;
    Ok((net, report))
}

/// Scores `model` against the run's original model under the gates.
pub fn evaluate_step(ws: &Workspace, model: &Network<f32>, original: &Network<f32>, method: &str) -> Result<MetricsReport> {
    let mut report = evaluate_protocol(model, original, &ws.evaluator(), &ws.cfg.gates, method)?;
    ws.stamp(&mut report.meta);
    Ok(report)
}

/// Runs the configured baselines and ERwP from `original`, saves every
/// report, and writes the comparison table and the ERwP curve plot.
pub fn baselines_step(ws: &Workspace, original: &Network<f32>, mask: &RelevanceMask) -> Result<ComparisonTable> {
    let registry = UnlearnerRegistry::builtin();
    let ev = ws.evaluator();
    let unlearn = ws.cfg.unlearn_config();
    let ctx = UnlearnContext {
        original,
        arch: ws.arch(),
        train: &ws.train,
        subset: &ws.subset,
        partition: &ws.partition,
        unlearn: &unlearn,
        train_cfg: &ws.cfg.train,
        mask: Some(mask),
        evaluator: Some(&ev),
    };
    let mut reports = BTreeMap::new();
    let mut first = MetricsReport::new("original", ev.metrics(original)?, &ws.partition);
    ws.save_report(&mut first)?;
    reports.insert(first.method.clone(), first);
    let mut ids: Vec<&str> = ws.cfg.baselines.iter().map(String::as_str).collect();
    ids.push("ERwP");
    for id in ids {
        let method = registry.get(id)?;
        log::info!("running {id}");
        let out = method.run(&ctx)?;
        let mut report = evaluate_protocol(&out.model, original, &ev, &ws.cfg.gates, id)?;
        report.per_epoch = out.per_epoch;
        report.meta.extend(out.meta);
        ws.save_report(&mut report)?;
        if id == "ERwP" {
            write_curves(&report, &ws.cfg.out_dir, "erwp_curve")?;
        }
        reports.insert(id.to_string(), report);
    }
    write_table(ws, &reports)
}

fn write_table(ws: &Workspace, reports: &BTreeMap<String, MetricsReport>) -> Result<ComparisonTable> {
    let table = compare_table(reports)?;
    write_atomic(&ws.path("table.csv"), table.to_csv().as_bytes())?;
    let text = format!("# config {} seed {}\n{}", ws.hash, ws.cfg.seed, table.to_text());
    write_atomic(&ws.path("table.txt"), text.as_bytes())?;
    Ok(table)
}

/// Rebuilds the table and the ERwP plot from the saved reports.
pub fn report_step(out_dir: &Path) -> Result<ComparisonTable> {
    let dir = out_dir.join(REPORTS_DIR);
    let entries = std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut reports = BTreeMap::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("json") {
            let r = MetricsReport::load(&path)?;
            reports.insert(r.method.clone(), r);
        }
    }
    let table = compare_table(&reports)?;
    write_atomic(&out_dir.join("table.csv"), table.to_csv().as_bytes())?;
    write_atomic(&out_dir.join("table.txt"), table.to_text().as_bytes())?;
    if let Some(r) = reports.get("ERwP").filter(|r| !r.per_epoch.is_empty()) {
        write_curves(r, out_dir, "erwp_curve")?;
    }
    Ok(table)
}
