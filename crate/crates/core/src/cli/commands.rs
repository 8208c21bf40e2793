use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Strategy};
use crate::agent::{
    evaluate, expected_performance, CurvePoint, EpisodeRecord, Evaluation, TrainedModel, Trainer,
    TrainerCheckpoint, TrainingData, TrainingRun,
};
use crate::benchmarks::run_benchmark;
use crate::error::{Error, Result};
use crate::market_data::{load_series, split_series, DatasetSplit, OhlcvSeries, Testbench};
use crate::metrics::{Indicator, PerformanceReport};
use crate::plot::{plot_curves, plot_trajectory, Curve};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesInfo {
    pub instrument: String,
    pub bars: usize,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    /// SHA-256 of the canonical CSV form of the bars.
    pub fingerprint: String,
}

impl SeriesInfo {
    fn of(series: &OhlcvSeries) -> Self {
        Self {
            instrument: series.instrument.clone(),
            bars: series.len(),
            first_date: series.first_date(),
            last_date: series.last_date(),
            fingerprint: series.fingerprint(),
        }
    }
}

/// Everything needed to repeat a run: resolved configuration, seeds and
/// input fingerprints, plus the files it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: RunConfig,
    pub seeds: Vec<u64>,
    pub data: Vec<SeriesInfo>,
    pub warnings: Vec<String>,
    /// Paths relative to the output directory, sorted.
    pub outputs: Vec<String>,
    #[serde(skip)]
    pub output_dir: PathBuf,
}

struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.files.push(name.to_string());
        Ok(p)
    }

    fn text(&mut self, name: &str, content: &str) -> Result<()> {
        let p = self.path(name)?;
        fs::write(&p, content).map_err(|e| Error::io(&p, e))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.text(name, &s)
    }

    fn finish(
        mut self,
        command: &str,
        config: &RunConfig,
        seeds: Vec<u64>,
        data: Vec<SeriesInfo>,
        warnings: Vec<String>,
    ) -> Result<Manifest> {
        self.files.push("manifest.json".into());
        self.files.sort();
        self.files.dedup();
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config: config.clone(),
            seeds,
            data,
            warnings,
            outputs: self.files.clone(),
            output_dir: self.dir.clone(),
        };
        let mut s = serde_json::to_string_pretty(&manifest)?;
        s.push('\n');
        let p = self.dir.join("manifest.json");
        fs::write(&p, s).map_err(|e| Error::io(&p, e))?;
        Ok(manifest)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ticker(config: &RunConfig) -> &str {
    config.ticker.as_deref().expect("validated")
}

fn load(config: &RunConfig, ticker: &str, warnings: &mut Vec<String>) -> Result<OhlcvSeries> {
    let loaded = load_series(&config.data_source()?, ticker, config.range())?;
    warnings.extend(loaded.warnings);
    Ok(loaded.series)
}

fn split(config: &RunConfig, series: &OhlcvSeries) -> Result<DatasetSplit> {
    split_series(
        series,
        config.train_end.expect("validated"),
        config.validation_fraction,
    )
}

fn history_csv(history: &[EpisodeRecord]) -> String {
    let mut s = String::from(
        "episode,variant,epsilon,updates,mean_loss,train_sharpe,validation_sharpe,test_sharpe\n",
    );
    for r in history {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.episode + 1,
            r.variant,
            r.epsilon,
            r.updates,
            opt(r.mean_loss),
            opt(r.train_sharpe),
            opt(r.validation_sharpe),
            opt(r.test_sharpe)
        );
    }
    s
}

fn report_csv_header() -> String {
    format!(
        "instrument,strategy,{}\n",
        PerformanceReport::CSV_COLUMNS.join(",")
    )
}

fn report_csv_row(instrument: &str, strategy: &str, r: &PerformanceReport) -> String {
    format!("{instrument},{strategy},{}\n", r.csv_fields().join(","))
}

/// Report, trajectory and figure for one evaluation under `prefix`.
fn write_evaluation(out: &mut Output, prefix: &str, strategy: &str, e: &Evaluation) -> Result<()> {
    out.json(&format!("{prefix}report.json"), &e.report)?;
    let mut csv = report_csv_header();
    csv.push_str(&report_csv_row(
        &e.trajectory.instrument,
        strategy,
        &e.report,
    ));
    out.text(&format!("{prefix}report.csv"), &csv)?;
    let mut buf = Vec::new();
    e.trajectory.write_csv(&mut buf)?;
    out.text(
        &format!("{prefix}trajectory.csv"),
        &String::from_utf8(buf).expect("csv is utf-8"),
    )?;
    let svg = out.path(&format!("{prefix}trajectory.svg"))?;
    plot_trajectory(&e.trajectory, &svg)
}

#[derive(Serialize)]
struct TrainingSummary<'a> {
    seed: u64,
    data_fingerprint: &'a str,
    best_episode: usize,
    stopped_early: bool,
    experiences_stored: u64,
    updates: u64,
    steps: u64,
    history: &'a [EpisodeRecord],
}

fn write_training(
    out: &mut Output,
    prefix: &str,
    instrument: &str,
    run: &TrainingRun,
) -> Result<()> {
    out.json(&format!("{prefix}model.json"), &run.best)?;
    out.json(&format!("{prefix}final_model.json"), &run.final_model)?;
    out.text(&format!("{prefix}history.csv"), &history_csv(&run.history))?;
    out.json(
        &format!("{prefix}training.json"),
        &TrainingSummary {
            seed: run.seed,
            data_fingerprint: &run.data_fingerprint,
            best_episode: run.best_episode,
            stopped_early: run.stopped_early,
            experiences_stored: run.experiences_stored,
            updates: run.updates,
            steps: run.steps,
            history: &run.history,
        },
    )?;
    let curves = [
        Curve {
            name: "train",
            mean: run.train_curve(),
            sd: vec![],
        },
        Curve {
            name: "validation",
            mean: run.validation_curve(),
            sd: vec![],
        },
        Curve {
            name: "test",
            mean: run.test_curve(),
            sd: vec![],
        },
    ];
    let svg = out.path(&format!("{prefix}curves.svg"))?;
    plot_curves(
        &format!("{instrument}: Sharpe ratio per episode (seed {})", run.seed),
        &curves,
        &svg,
    )
}

/// Trains to completion; the trainer checkpoint is returned alongside.
fn train_with_checkpoint(
    data: &TrainingData,
    config: &RunConfig,
) -> Result<(TrainingRun, TrainerCheckpoint)> {
    let mut trainer = match &config.resume {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let mut checkpoint: TrainerCheckpoint = serde_json::from_str(&text)?;
            let mut saved = checkpoint.config.clone();
            saved.hyper.episodes = config.agent.hyper.episodes;
            if saved != config.agent || checkpoint.seed != config.seed {
                return Err(Error::Checkpoint(
                    "configuration or seed differs from the checkpoint's (only the episode count may change)".into(),
                ));
            }
            checkpoint.config = saved;
            log::info!("resuming after episode {}", checkpoint.episodes_completed());
            Trainer::resume(data, checkpoint)?
        }
        None => Trainer::new(data, &config.agent, config.seed)?,
    };
    while !trainer.finished() {
        trainer.run_episode()?;
    }
    let checkpoint = trainer.checkpoint().clone();
    Ok((trainer.finish(), checkpoint))
}

fn fetch(config: &RunConfig) -> Result<Manifest> {
    let mut warnings = Vec::new();
    let t = ticker(config);
    let series = load(config, t, &mut warnings)?;
    let mut out = Output::new(config.output_dir("fetch"))?;
    let target = out.dir.join(format!("{t}.csv"));
    if let Some(src) = config.data_source()?.resolve_path(t) {
        if let (Ok(a), Ok(b)) = (src.canonicalize(), target.canonicalize()) {
            if a == b {
                return Err(Error::Config(format!(
                    "refusing to overwrite input file {}",
                    src.display()
                )));
            }
        }
    }
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    out.text(
        &format!("{t}.csv"),
        &String::from_utf8(buf).expect("csv is utf-8"),
    )?;
    out.finish(
        "fetch",
        config,
        vec![],
        vec![SeriesInfo::of(&series)],
        warnings,
    )
}

fn train(config: &RunConfig) -> Result<Manifest> {
    let mut warnings = Vec::new();
    let series = load(config, ticker(config), &mut warnings)?;
    let sp = split(config, &series)?;
    let data = TrainingData::prepare(&sp, &config.agent, config.seed)?;
    if data.clipped > 0 {
        warnings.push(format!("{} augmentation noise draws floored", data.clipped));
    }
    let (run, checkpoint) = train_with_checkpoint(&data, config)?;
    let mut out = Output::new(config.output_dir("train"))?;
    write_training(&mut out, "", &series.instrument, &run)?;
    out.json("checkpoint.json", &checkpoint)?;
    out.finish(
        "train",
        config,
        vec![config.seed],
        vec![SeriesInfo::of(&series)],
        warnings,
    )
}

fn backtest(config: &RunConfig) -> Result<Manifest> {
    let mut warnings = Vec::new();
    let series = load(config, ticker(config), &mut warnings)?;
    let sp = split(config, &series)?;
    let strategy = Strategy::parse(&config.strategy)?;
    let evaluation = match strategy {
        Strategy::Tdqn => {
            let path = config.model.as_ref().expect("validated");
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let model: TrainedModel = serde_json::from_str(&text)?;
            let mut env = config.agent.env;
            if env.features != model.features {
                warnings.push(format!(
                    "using the model's feature settings {:?}",
                    model.features
                ));
                env.features = model.features;
            }
            evaluate(&model, &sp.test_segment(env.features.warmup()), &env)?
        }
        Strategy::Benchmark(kind) => {
            let env = config.agent.env;
            run_benchmark(
                &config.strategy_spec(kind),
                &sp.test_segment(env.features.warmup()),
                &env,
            )?
        }
    };
    let mut out = Output::new(config.output_dir("backtest"))?;
    write_evaluation(&mut out, "", strategy.name(), &evaluation)?;
    out.finish(
        "backtest",
        config,
        vec![],
        vec![SeriesInfo::of(&series)],
        warnings,
    )
}

fn curves_csv(e: &crate::agent::ExpectedPerformance) -> String {
    let mut s = String::from("episode");
    for part in ["train", "validation", "test"] {
        let _ = write!(s, ",{part}_mean,{part}_sd,{part}_n");
    }
    s.push('\n');
    let cell = |p: Option<&CurvePoint>| match p {
        Some(p) => format!("{},{},{}", opt(p.mean), opt(p.sd), p.n),
        None => ",,0".to_string(),
    };
    for k in 0..e.train.len().max(e.test.len()).max(e.validation.len()) {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            k + 1,
            cell(e.train.get(k)),
            cell(e.validation.get(k)),
            cell(e.test.get(k))
        );
    }
    s
}

fn expected(config: &RunConfig) -> Result<Manifest> {
    let mut warnings = Vec::new();
    let series = load(config, ticker(config), &mut warnings)?;
    let sp = split(config, &series)?;
    let seeds: Vec<u64> = (0..config.runs as u64).map(|k| config.seed + k).collect();
    let (summary, runs) = expected_performance(&sp, &config.agent, &seeds, config.threads)?;
    let mut out = Output::new(config.output_dir("expected"))?;
    for run in runs.iter().flatten() {
        out.text(
            &format!("runs/seed-{}/history.csv", run.seed),
            &history_csv(&run.history),
        )?;
        out.json(&format!("runs/seed-{}/model.json", run.seed), &run.best)?;
    }
    for f in &summary.failures {
        warnings.push(format!("run with seed {} failed: {}", f.seed, f.error));
    }
    out.json("expected.json", &summary)?;
    out.text("curves.csv", &curves_csv(&summary))?;
    let curve = |name, points: &[CurvePoint]| Curve {
        name,
        mean: points.iter().map(|p| p.mean).collect(),
        sd: points.iter().map(|p| p.sd).collect(),
    };
    let svg = out.path("expected.svg")?;
    plot_curves(
        &format!(
            "{}: expected Sharpe ratio over {} runs",
            ticker(config),
            summary.completed
        ),
        &[curve("train", &summary.train), curve("test", &summary.test)],
        &svg,
    )?;
    out.finish(
        "expected",
        config,
        seeds,
        vec![SeriesInfo::of(&series)],
        warnings,
    )
}

fn mean_indicator(values: impl Iterator<Item = Indicator>) -> String {
    let values: Vec<Indicator> = values.collect();
    if values.contains(&Indicator::Infinite) {
        return Indicator::Infinite.to_string();
    }
    let finite: Vec<f64> = values.into_iter().filter_map(Indicator::value).collect();
    if finite.is_empty() {
        String::new()
    } else {
        (finite.iter().sum::<f64>() / finite.len() as f64).to_string()
    }
}

fn average_row(strategy: &str, reports: &[&PerformanceReport]) -> String {
    let num = |f: &dyn Fn(&PerformanceReport) -> f64| {
        (reports.iter().map(|r| f(r)).sum::<f64>() / reports.len() as f64).to_string()
    };
    let ind =
        |f: &dyn Fn(&PerformanceReport) -> Indicator| mean_indicator(reports.iter().map(|r| f(r)));
    let fields = [
        ind(&|r| r.sharpe),
        num(&|r| r.pnl),
        ind(&|r| r.annualized_return),
        ind(&|r| r.annualized_volatility),
        ind(&|r| r.profitability_ratio),
        ind(&|r| r.pnl_ratio),
        ind(&|r| r.sortino),
        num(&|r| r.max_drawdown),
        num(&|r| r.max_drawdown_duration as f64),
    ];
    format!("Average,{strategy},{}\n", fields.join(","))
}

fn testbench(config: &RunConfig) -> Result<Manifest> {
    let bench = match &config.testbench {
        Some(p) => Testbench::load(p)?,
        None => Testbench::default(),
    };
    let strategies = config
        .strategies
        .iter()
        .map(|s| Strategy::parse(s))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Output::new(config.output_dir("testbench"))?;
    let mut warnings = Vec::new();
    let mut data = Vec::new();
    let mut rows: Vec<(String, Strategy, PerformanceReport)> = Vec::new();
    for instrument in &bench.instruments {
        let t = &instrument.ticker;
        let prepared = load(config, t, &mut warnings).and_then(|s| {
            let sp = split(config, &s)?;
            Ok((s, sp))
        });
        let (series, sp) = match prepared {
            Ok(v) => v,
            Err(e) => {
                log::warn!("skipping {t}: {e}");
                warnings.push(format!("skipped {t}: {e}"));
                continue;
            }
        };
        data.push(SeriesInfo::of(&series));
        let test = sp.test_segment(config.agent.env.features.warmup());
        for &strategy in &strategies {
            log::info!("{t}: {}", strategy.name());
            let evaluation = match strategy {
                Strategy::Tdqn => {
                    let run = crate::agent::train(&sp, &config.agent, config.seed)?;
                    out.json(&format!("instruments/{t}/tdqn/model.json"), &run.best)?;
                    evaluate(&run.best, &test, &config.agent.env)?
                }
                Strategy::Benchmark(kind) => {
                    run_benchmark(&config.strategy_spec(kind), &test, &config.agent.env)?
                }
            };
            write_evaluation(
                &mut out,
                &format!("instruments/{t}/{}/", strategy.name()),
                strategy.name(),
                &evaluation,
            )?;
            rows.push((t.clone(), strategy, evaluation.report));
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(
            "no instrument of the testbench could be loaded".into(),
        ));
    }

    let mut summary = report_csv_header();
    for (t, s, r) in &rows {
        summary.push_str(&report_csv_row(t, s.name(), r));
    }
    for &s in &strategies {
        let reports: Vec<&PerformanceReport> = rows
            .iter()
            .filter(|(_, k, _)| *k == s)
            .map(|(_, _, r)| r)
            .collect();
        summary.push_str(&average_row(s.name(), &reports));
    }
    out.text("summary.csv", &summary)?;

    let mut table = String::from("instrument");
    for s in &strategies {
        let _ = write!(table, ",{}", s.name());
    }
    table.push('\n');
    let tickers: Vec<&String> = data.iter().map(|d| &d.instrument).collect();
    for t in &tickers {
        table.push_str(t);
        for &s in &strategies {
            let sharpe = rows
                .iter()
                .find(|(i, k, _)| i == *t && *k == s)
                .map(|(_, _, r)| r.sharpe);
            let _ = write!(
                table,
                ",{}",
                sharpe.map(|v| v.to_string()).unwrap_or_default()
            );
        }
        table.push('\n');
    }
    table.push_str("Average");
    for &s in &strategies {
        let avg = mean_indicator(
            rows.iter()
                .filter(|(_, k, _)| *k == s)
                .map(|(_, _, r)| r.sharpe),
        );
        let _ = write!(table, ",{avg}");
    }
    table.push('\n');
    out.text("sharpe_table.csv", &table)?;
    out.finish("testbench", config, vec![config.seed], data, warnings)
}

fn cost_sweep(config: &RunConfig) -> Result<Manifest> {
    let mut warnings = Vec::new();
    let series = load(config, ticker(config), &mut warnings)?;
    let sp = split(config, &series)?;
    let mut out = Output::new(config.output_dir("cost-sweep"))?;
    let mut summary =
        String::from("cost_rate,sharpe,pnl,annualized_return,position_changes,cumulative_reward\n");
    for &cost in &config.costs {
        log::info!("trading cost {cost}");
        let mut run_config = config.clone();
        run_config.agent.env.cost_rate = cost;
        run_config.resume = None;
        let data = TrainingData::prepare(&sp, &run_config.agent, run_config.seed)?;
        let (run, _) = train_with_checkpoint(&data, &run_config)?;
        let env = run_config.agent.env;
        let evaluation = evaluate(&run.best, &sp.test_segment(env.features.warmup()), &env)?;
        let prefix = format!("cost-{cost}/");
        write_training(&mut out, &prefix, &series.instrument, &run)?;
        write_evaluation(&mut out, &prefix, "tdqn", &evaluation)?;
        let _ = writeln!(
            summary,
            "{cost},{},{},{},{},{}",
            evaluation.report.sharpe,
            evaluation.report.pnl,
            evaluation.report.annualized_return,
            evaluation.trajectory.position_changes(),
            evaluation.trajectory.rewards().iter().sum::<f64>()
        );
    }
    out.text("costs.csv", &summary)?;
    out.finish(
        "cost-sweep",
        config,
        vec![config.seed],
        vec![SeriesInfo::of(&series)],
        warnings,
    )
}

pub(super) fn dispatch(command: &str, config: &RunConfig) -> Result<Manifest> {
    match command {
        "fetch" => fetch(config),
        "train" => train(config),
        "backtest" => backtest(config),
        "expected" => expected(config),
        "testbench" => testbench(config),
        "cost-sweep" => cost_sweep(config),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}
