//! One function per subcommand. Every artifact is written under the output
//! directory handed in by the caller.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use dualformer::data::{
    load_adjacency_csv, load_speed_csv, synth_generate, write_adjacency_csv, write_classes_csv, write_speed_csv,
    Prepared, SpeedDataset, DEFAULT_RATIOS,
};
use dualformer::distill::{
    alpha_sweep, distill_train, pretrain_teacher, train_baseline, DistillConfig, SweepTable, TrainReport,
    DEFAULT_SWEEP_PAIRS,
};
use dualformer::dual::{BranchMode, DualConfig, DualTransformer};
use dualformer::eval::{
    evaluate_per_horizon, evaluate_windows, format_table, period_ranges, periodwise_evaluate, MetricTriple,
    PeriodReport, PeriodResult,
};
use dualformer::teacher::{FrozenTeacher, RoadNetwork, Tgcn};
use dualformer::{Error, Forecaster, Result, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;

pub const TEACHER_CKPT: &str = "teacher.ckpt";
pub const STUDENT_CKPT: &str = "student.ckpt";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

const TEACHER_STREAM: u64 = 1;
const STUDENT_STREAM: u64 = 2;

fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    write_text(path, &(text + "\n"))
}

/// Creates the output directory and records the resolved configuration in it.
pub fn prepare_out_dir(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::Io {
        path: out.to_path_buf(),
        source: e,
    })?;
    write_text(&out.join(RESOLVED_CONFIG), &cfg.to_toml())
}

/// Loads the configured CSV files, or generates the synthetic dataset.
pub fn load_dataset(cfg: &RunConfig) -> Result<SpeedDataset> {
    let ds = match &cfg.data {
        Some(paths) => {
            let ds = load_speed_csv(&paths.speeds, cfg.window)?;
            match &paths.adjacency {
                Some(a) => ds.with_network(RoadNetwork::new(load_adjacency_csv(a)?)?)?,
                None => ds,
            }
        }
        None => synth_generate(&cfg.synth)?.dataset,
    };
    cfg.check_steps(ds.steps())?;
    Ok(ds)
}

fn network(ds: &SpeedDataset) -> Result<RoadNetwork> {
    ds.network().cloned().ok_or_else(|| {
        Error::Data(
            "the graph teacher takes the road adjacency matrix as input; set data.adjacency in the run config".into(),
        )
    })
}

pub fn build_teacher(cfg: &RunConfig, net: RoadNetwork) -> Result<Tgcn> {
    Tgcn::new(cfg.teacher, net, &mut init_rng(cfg.seed, TEACHER_STREAM))
}

pub fn build_student(cfg: &RunConfig, model: DualConfig, nodes: usize) -> Result<DualTransformer> {
    DualTransformer::new(
        model,
        nodes,
        cfg.window.lookback,
        cfg.window.horizon,
        &mut init_rng(cfg.seed, STUDENT_STREAM),
    )
}

/// Graph facts saved beside a teacher checkpoint. The weights themselves do
/// not depend on the node count, so this is what catches a teacher trained
/// on a different network.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
struct TeacherMeta {
    nodes: usize,
    edges: usize,
    hidden: usize,
}

impl TeacherMeta {
    fn of(t: &Tgcn) -> Self {
        TeacherMeta {
            nodes: t.nodes(),
            edges: t.network().adjacency().data().iter().filter(|w| **w != 0.0).count(),
            hidden: t.config().hidden,
        }
    }
}

fn meta_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("meta.json")
}

fn save_teacher(t: &FrozenTeacher, path: &Path) -> Result<()> {
    t.params().save(path)?;
    write_json(&meta_path(path), &TeacherMeta::of(t.model()))
}

fn load_teacher(cfg: &RunConfig, ds: &SpeedDataset, path: &Path) -> Result<FrozenTeacher> {
    let mut t = build_teacher(cfg, network(ds)?)?;
    match fs::read_to_string(meta_path(path)) {
        Ok(text) => {
            let saved: TeacherMeta = serde_json::from_str(&text)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", meta_path(path).display())))?;
            let here = TeacherMeta::of(&t);
            if saved != here {
                return Err(Error::Config(format!(
                    "teacher checkpoint was trained on {} nodes / {} edges / hidden {}, but this run has {} / {} / {}",
                    saved.nodes, saved.edges, saved.hidden, here.nodes, here.edges, here.hidden
                )));
            }
        }
        Err(_) => log::warn!(
            "no graph metadata next to {}; cannot confirm it matches the data",
            path.display()
        ),
    }
    t.load_checkpoint(path)?;
    Ok(t.freeze())
}

fn save_report(out: &Path, stem: &str, rep: &TrainReport) -> Result<()> {
    rep.write_json(&out.join(format!("{stem}_report.json")))?;
    rep.write_epoch_csv(&out.join(format!("{stem}_epochs.csv")))
}

/// A named row of the comparison tables.
#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Row {
    pub model: String,
    pub metrics: Option<MetricTriple>,
}

fn show(console: &mut dyn Write, text: &str) {
    if let Err(e) = console.write_all(text.as_bytes()) {
        log::warn!("cannot write to the console: {e}");
    }
}

fn emit_table(out: &Path, stem: &str, rows: &[Row]) -> Result<String> {
    write_json(&out.join(format!("{stem}.json")), &rows)?;
    let table = format_table(&rows.iter().map(|r| (r.model.clone(), r.metrics)).collect::<Vec<_>>());
    write_text(&out.join(format!("{stem}.txt")), &table)?;
    Ok(table)
}

/// Writes `speeds.csv`, `adjacency.csv` and `classes.csv`.
pub fn cmd_synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    cfg.synth.validate()?;
    let s = synth_generate(&cfg.synth)?;
    write_speed_csv(&out.join("speeds.csv"), &s.dataset)?;
    let net = s.dataset.network().expect("synthetic data carries a graph");
    write_adjacency_csv(&out.join("adjacency.csv"), net.adjacency())?;
    write_classes_csv(&out.join("classes.csv"), &s.classes)?;
    log::info!(
        "wrote {}×{} synthetic speeds to {}",
        s.dataset.steps(),
        s.dataset.nodes(),
        out.display()
    );
    Ok(())
}

/// Pretrains the graph teacher and saves its checkpoint.
pub fn cmd_train_teacher(cfg: &RunConfig, out: &Path, console: &mut dyn Write) -> Result<TrainReport> {
    let ds = load_dataset(cfg)?;
    let teacher = build_teacher(cfg, network(&ds)?)?;
    let data = Prepared::new(&ds, cfg.window, DEFAULT_RATIOS)?;
    let (frozen, rep) = pretrain_teacher(teacher, &data, &cfg.teacher_training())?;
    save_teacher(&frozen, &out.join(TEACHER_CKPT))?;
    save_report(out, "teacher", &rep)?;
    let table = emit_table(
        out,
        "teacher_metrics",
        &[Row {
            model: "teacher".into(),
            metrics: rep.test,
        }],
    )?;
    show(console, &table);
    Ok(rep)
}

fn student_row_name(cfg: &DistillConfig) -> &'static str {
    if cfg.is_baseline() {
        "student"
    } else {
        "student-DT"
    }
}

#[derive(Debug, Clone, Default)]
pub struct DistillOptions {
    pub teacher: Option<PathBuf>,
    pub ablation: bool,
}

/// Distills the student from a pretrained teacher checkpoint. With
/// `ablation`, trains the dual, spatial-only and temporal-only variants.
pub fn cmd_distill(
    cfg: &RunConfig,
    out: &Path,
    opts: &DistillOptions,
    console: &mut dyn Write,
) -> Result<Vec<TrainReport>> {
    let ds = load_dataset(cfg)?;
    let data = Prepared::new(&ds, cfg.window, DEFAULT_RATIOS)?;
    let needs_teacher = !cfg.training.is_baseline();
    let teacher = if needs_teacher {
        let path = opts.teacher.clone().unwrap_or_else(|| out.join(TEACHER_CKPT));
        Some(load_teacher(cfg, &ds, &path)?)
    } else {
        None
    };
    let teacher_row = match &teacher {
        Some(t) => Some(evaluate_windows(
            &|w: &Tensor| t.predict(w),
            &data.test,
            &data.stats,
            cfg.training.mape_floor,
        )?),
        None => None,
    };
    let modes: Vec<BranchMode> = if opts.ablation {
        BranchMode::ALL.to_vec()
    } else {
        vec![cfg.model.branch]
    };
    let mut rows = Vec::new();
    if teacher.is_some() {
        rows.push(Row {
            model: "teacher".into(),
            metrics: teacher_row,
        });
    }
    let mut reports = Vec::new();
    for mode in modes {
        let model = DualConfig {
            branch: mode,
            ..cfg.model
        };
        model.validate()?;
        let mut student = build_student(cfg, model, ds.nodes())?;
        let rep = match &teacher {
            Some(t) => distill_train(&mut student, t, &data, &cfg.training)?,
            None => train_baseline(&mut student, &data, &cfg.training)?,
        };
        let (ckpt, stem, name) = if opts.ablation {
            (
                format!("student_{mode}.ckpt"),
                format!("student_{mode}"),
                format!("{}[{mode}]", student_row_name(&cfg.training)),
            )
        } else {
            (
                STUDENT_CKPT.to_string(),
                "student".to_string(),
                student_row_name(&cfg.training).to_string(),
            )
        };
        student.params().save(&out.join(ckpt))?;
        save_report(out, &stem, &rep)?;
        rows.push(Row {
            model: name,
            metrics: rep.test,
        });
        reports.push(rep);
    }
    let table = emit_table(out, if opts.ablation { "ablation" } else { "comparison" }, &rows)?;
    show(console, &table);
    Ok(reports)
}

/// Distills one student per `(α, β)` pair and writes `sweep.csv`.
pub fn cmd_sweep(
    cfg: &RunConfig,
    out: &Path,
    teacher: Option<&Path>,
    pairs: Option<Vec<(f64, f64)>>,
    console: &mut dyn Write,
) -> Result<SweepTable> {
    let pairs = pairs.unwrap_or_else(|| DEFAULT_SWEEP_PAIRS.to_vec());
    let ds = load_dataset(cfg)?;
    let data = Prepared::new(&ds, cfg.window, DEFAULT_RATIOS)?;
    let path = teacher.map_or_else(|| out.join(TEACHER_CKPT), Path::to_path_buf);
    let t = load_teacher(cfg, &ds, &path)?;
    let (table, reports) = alpha_sweep(
        || build_student(cfg, cfg.model, ds.nodes()),
        &t,
        &data,
        &cfg.training,
        &pairs,
    )?;
    write_text(&out.join("sweep.csv"), &table.to_csv())?;
    write_json(&out.join("sweep_reports.json"), &reports)?;
    show(console, &table.to_csv());
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Teacher,
    Student,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub model: ModelKind,
    pub checkpoint: Option<PathBuf>,
    pub periods: Option<usize>,
    pub retrain_per_period: bool,
    pub threads: usize,
    pub per_horizon: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            model: ModelKind::Student,
            checkpoint: None,
            periods: None,
            retrain_per_period: false,
            threads: 1,
            per_horizon: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalOutput {
    pub model: ModelKind,
    pub checkpoint_sha256: String,
    pub test: MetricTriple,
    pub per_horizon: Option<Vec<MetricTriple>>,
    /// `single_model` or `retrained`.
    pub period_mode: Option<&'static str>,
    pub periods: Option<PeriodReport>,
}

enum Loaded {
    Teacher(FrozenTeacher),
    Student(DualTransformer),
}

impl Loaded {
    fn predict(&self, w: &Tensor) -> Result<Tensor> {
        match self {
            Loaded::Teacher(t) => t.predict(w),
            Loaded::Student(s) => s.predict(w),
        }
    }

    fn digest(&self) -> String {
        match self {
            Loaded::Teacher(t) => t.digest(),
            Loaded::Student(s) => s.params().digest(),
        }
    }
}

/// Scores a checkpoint on the test split, optionally per horizon step and
/// per period of the full series.
pub fn cmd_eval(cfg: &RunConfig, out: &Path, opts: &EvalOptions, console: &mut dyn Write) -> Result<EvalOutput> {
    if opts.threads == 0 {
        return Err(Error::Config("--threads must be ≥ 1".into()));
    }
    let ds = load_dataset(cfg)?;
    let data = Prepared::new(&ds, cfg.window, DEFAULT_RATIOS)?;
    let default_ckpt = match opts.model {
        ModelKind::Teacher => TEACHER_CKPT,
        ModelKind::Student => STUDENT_CKPT,
    };
    let path = opts.checkpoint.clone().unwrap_or_else(|| out.join(default_ckpt));
    let model = match opts.model {
        ModelKind::Teacher => Loaded::Teacher(load_teacher(cfg, &ds, &path)?),
        ModelKind::Student => {
            let mut s = build_student(cfg, cfg.model, ds.nodes())?;
            s.load_checkpoint(&path)?;
            Loaded::Student(s)
        }
    };
    let floor = cfg.training.mape_floor;
    let forward = |w: &Tensor| model.predict(w);
    let test = evaluate_windows(&forward, &data.test, &data.stats, floor)?;
    let per_horizon = if opts.per_horizon {
        Some(evaluate_per_horizon(&forward, &data.test, &data.stats, floor)?)
    } else {
        None
    };
    let (period_mode, periods) = match opts.periods {
        None => (None, None),
        Some(k) if opts.retrain_per_period => (
            Some("retrained"),
            Some(retrain_periods(cfg, &ds, opts.model, k, opts.threads)?),
        ),
        Some(k) => (
            Some("single_model"),
            Some(periodwise_evaluate(
                &forward,
                &data.normalized,
                &data.stats,
                cfg.window,
                k,
                floor,
                opts.threads,
            )?),
        ),
    };
    let output = EvalOutput {
        model: opts.model,
        checkpoint_sha256: model.digest(),
        test,
        per_horizon,
        period_mode,
        periods,
    };
    write_json(&out.join("eval.json"), &output)?;
    let name = match opts.model {
        ModelKind::Teacher => "teacher",
        ModelKind::Student => "student",
    };
    let mut rows = vec![Row {
        model: format!("{name}-test"),
        metrics: Some(output.test),
    }];
    if let Some(ph) = &output.per_horizon {
        rows.extend(ph.iter().enumerate().map(|(i, m)| Row {
            model: format!("horizon-{}", i + 1),
            metrics: Some(*m),
        }));
    }
    if let Some(p) = &output.periods {
        rows.extend(p.periods.iter().map(|r| Row {
            model: format!("period-{}", r.period + 1),
            metrics: r.metrics,
        }));
        rows.push(Row {
            model: "period-variance".into(),
            metrics: p.variance,
        });
    }
    let table = format_table(&rows.iter().map(|r| (r.model.clone(), r.metrics)).collect::<Vec<_>>());
    write_text(&out.join("eval.txt"), &table)?;
    show(console, &table);
    Ok(output)
}

/// Trains a fresh model on each period alone, with its own 70/20/10 split,
/// and reports its test metrics. Students train on ground truth only.
fn retrain_periods(
    cfg: &RunConfig,
    ds: &SpeedDataset,
    kind: ModelKind,
    k: usize,
    threads: usize,
) -> Result<PeriodReport> {
    let ranges = period_ranges(ds.steps(), k)?;
    let run_one = |i: usize| -> Result<PeriodResult> {
        let r = ranges[i].clone();
        let mut part = SpeedDataset::new(ds.speeds().slice_rows(r.start, r.end))?;
        if let Some(net) = ds.network() {
            part = part.with_network(net.clone())?;
        }
        let data = Prepared::new(&part, cfg.window, DEFAULT_RATIOS)?;
        let rep = match kind {
            ModelKind::Teacher => {
                pretrain_teacher(build_teacher(cfg, network(&part)?)?, &data, &cfg.teacher_training())?.1
            }
            ModelKind::Student => {
                train_baseline(&mut build_student(cfg, cfg.model, ds.nodes())?, &data, &cfg.training)?
            }
        };
        Ok(PeriodResult {
            period: i,
            start: r.start,
            end: r.end,
            metrics: rep.test,
        })
    };
    let mut results: Vec<Option<Result<PeriodResult>>> = (0..k).map(|_| None).collect();
    if threads <= 1 {
        for (i, slot) in results.iter_mut().enumerate() {
            *slot = Some(run_one(i));
        }
    } else {
        let chunk = k.div_ceil(threads);
        std::thread::scope(|s| {
            for (c, slots) in results.chunks_mut(chunk).enumerate() {
                let run_one = &run_one;
                s.spawn(move || {
                    for (j, slot) in slots.iter_mut().enumerate() {
                        *slot = Some(run_one(c * chunk + j));
                    }
                });
            }
        });
    }
    let periods = results
        .into_iter()
        .map(|r| r.expect("every period ran"))
        .collect::<Result<Vec<_>>>()?;
    Ok(PeriodReport::from_results(periods))
}
