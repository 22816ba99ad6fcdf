use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use geoadapt_core::config::RunConfig;
use geoadapt_core::curation::{self, AcceptAll, DatasetRecord, Rejection};
use geoadapt_core::eval::{self, EvalRecord, MetricReport, ReportFormat};
use geoadapt_core::grpo;
use geoadapt_core::jsonl::{self, LineError};
use geoadapt_core::names::{AliasTable, NameMatcher, RuleBasedExtractor};
use geoadapt_core::par::{self, Execution};
use geoadapt_core::policy::ToyPolicy;
use geoadapt_core::rewards::{GroundingTable, RewardModel, RewardRequest};
use geoadapt_core::world::SyntheticGeoWorld;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{
    plot, write_output, Cli, Command, DirArgs, EvalArgs, Format, IoArgs, Outcome, ReportArgs, RewardArgs, TrainArgs,
};

/// One entry of the reject log.
#[derive(Debug, Serialize)]
struct RejectEntry<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_id: Option<&'a str>,
    reason: &'a str,
}

struct Ctx<'a> {
    cli: &'a Cli,
    config: &'a RunConfig,
    exec: Execution,
}

impl Ctx<'_> {
    fn read_jsonl<T: DeserializeOwned>(&self, path: &Path) -> Result<(Vec<T>, Vec<LineError>)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        jsonl::parse(&text, self.cli.lenient).with_context(|| format!("parsing {}", path.display()))
    }

    /// Logs every rejection to stderr and the optional reject log.
    fn log_rejects(&self, lines: &[LineError], records: &[Rejection]) -> Result<Outcome> {
        let entries = lines
            .iter()
            .map(|e| RejectEntry {
                line: Some(e.line),
                image_id: None,
                reason: &e.reason,
            })
            .chain(records.iter().map(|r| RejectEntry {
                line: None,
                image_id: Some(&r.image_id),
                reason: &r.reason,
            }));
        let mut log = String::new();
        for entry in entries {
            log.push_str(&serde_json::to_string(&entry)?);
            log.push('\n');
        }
        if log.is_empty() {
            return Ok(Outcome::Clean);
        }
        for line in log.lines() {
            eprintln!("rejected: {line}");
        }
        if let Some(path) = &self.cli.reject_log {
            let mut f = std::fs::OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .with_context(|| format!("opening {}", path.display()))?;
            f.write_all(log.as_bytes())?;
        }
        Ok(Outcome::Rejected(lines.len() + records.len()))
    }

    fn input(&self, arg: &Option<PathBuf>) -> Result<PathBuf> {
        match arg.as_ref().or(self.config.dataset_in.as_ref()) {
            Some(p) => Ok(p.clone()),
            None => bail!("no input: pass --input or set `dataset_in`"),
        }
    }

    fn names(&self, arg: &Option<PathBuf>) -> Result<NameMatcher> {
        let aliases = match arg.as_ref().or(self.config.alias_table.as_ref()) {
            Some(p) => AliasTable::load(p).with_context(|| format!("loading aliases {}", p.display()))?,
            None => AliasTable::new(),
        };
        Ok(NameMatcher::new(aliases))
    }
}

pub(crate) fn dispatch(cli: &Cli, config: &RunConfig) -> Result<Outcome> {
    let ctx = Ctx {
        cli,
        config,
        exec: Execution::default(),
    };
    match &cli.command {
        Command::Score(args) => score(&ctx, args),
        Command::Stratify(args) => stratify(&ctx, args, false),
        Command::Curate(args) => stratify(&ctx, args, true),
        Command::Reward(args) => reward(&ctx, args),
        Command::TrainToy(args) => train_toy(&ctx, args),
        Command::Eval(args) => evaluate(&ctx, args),
        Command::Report(args) => report(args),
    }
}

fn plot_dir(output: Option<&Path>) -> PathBuf {
    output
        .and_then(Path::parent)
        .filter(|d| !d.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn score(ctx: &Ctx, args: &IoArgs) -> Result<Outcome> {
    let input = ctx.input(&args.input)?;
    let (records, bad_lines) = ctx.read_jsonl::<DatasetRecord>(&input)?;
    let params = ctx.config.locatability();
    let results = par::map(ctx.exec, &records, |r| curation::score_record(r.clone(), &params));

    let mut scored = Vec::with_capacity(records.len());
    let mut rejected = Vec::new();
    for (record, result) in records.iter().zip(results) {
        match result {
            Ok(r) => scored.push(r),
            Err(e) => rejected.push(Rejection {
                image_id: record.image_id.clone(),
                reason: e.to_string(),
            }),
        }
    }
    let output = args.output.as_deref().or(ctx.config.dataset_out.as_deref());
    write_output(output, &jsonl::to_string(&scored)?)?;
    if ctx.cli.plot {
        let values: Vec<f64> = scored.iter().filter_map(|r| r.scores.map(|s| s.l_opt)).collect();
        plot::l_opt_histogram(&plot_dir(output).join("l_opt_histogram.svg"), &histogram(&values))?;
    }
    ctx.log_rejects(&bad_lines, &rejected)
}

fn histogram(values: &[f64]) -> [u64; curation::HISTOGRAM_BINS] {
    let mut hist = [0; curation::HISTOGRAM_BINS];
    for &v in values {
        hist[curation::histogram_bin(v)] += 1;
    }
    hist
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_output(Some(path), &text)
}

fn stratify(ctx: &Ctx, args: &DirArgs, augment: bool) -> Result<Outcome> {
    let input = ctx.input(&args.input)?;
    let Some(out_dir) = args.out_dir.as_ref().or(ctx.config.dataset_out.as_ref()) else {
        bail!("no output directory: pass --out-dir or set `dataset_out`");
    };
    let (records, bad_lines) = ctx.read_jsonl::<DatasetRecord>(&input)?;

    let (standard, rag_superior, rejected, histogram) = if augment {
        let out = curation::curate(records, &ctx.config.curation(), &AcceptAll, ctx.exec)?;
        write_output(Some(&out_dir.join("audit.jsonl")), &jsonl::to_string(&out.audit)?)?;
        write_json(&out_dir.join("summary.json"), &out.summary)?;
        (
            out.standard,
            out.rag_superior,
            out.rejected,
            out.summary.l_opt_histogram,
        )
    } else {
        let out = curation::stratify(records, &ctx.config.locatability(), ctx.exec);
        let summary = out.summary();
        write_json(&out_dir.join("summary.json"), &summary)?;
        (out.standard, out.rag_superior, out.rejected, summary.l_opt_histogram)
    };
    write_output(Some(&out_dir.join("standard.jsonl")), &jsonl::to_string(&standard)?)?;
    write_output(
        Some(&out_dir.join("rag_superior.jsonl")),
        &jsonl::to_string(&rag_superior)?,
    )?;
    if ctx.cli.plot {
        plot::l_opt_histogram(&out_dir.join("l_opt_histogram.svg"), &histogram)?;
    }
    ctx.log_rejects(&bad_lines, &rejected)
}

fn reward(ctx: &Ctx, args: &RewardArgs) -> Result<Outcome> {
    let input = ctx.input(&args.io.input)?;
    let (requests, bad_lines) = ctx.read_jsonl::<RewardRequest>(&input)?;
    let grounding = match args.grounding.as_ref().or(ctx.config.grounding_table.as_ref()) {
        Some(p) => GroundingTable::load(p).with_context(|| format!("loading grounding {}", p.display()))?,
        None => GroundingTable::new(),
    };
    let gazetteer = match &args.gazetteer {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        None => String::new(),
    };
    let extractor = RuleBasedExtractor::new(gazetteer.lines().map(str::trim).filter(|l| !l.starts_with('#')));
    let names = ctx.names(&args.aliases)?;
    let params = ctx.config.rewards();
    let model = RewardModel {
        params,
        names: &names,
        grounding: &grounding,
        extractor: &extractor,
    };

    let responses = model.evaluate_batch(&requests, ctx.exec);
    let output = args.io.output.as_deref().or(ctx.config.dataset_out.as_deref());
    write_output(output, &jsonl::to_string(&responses)?)?;
    if ctx.cli.plot {
        plot::reward_surface(&plot_dir(output).join("reward_surface.svg"), &params)?;
    }
    ctx.log_rejects(&bad_lines, &[])
}

fn train_toy(ctx: &Ctx, args: &TrainArgs) -> Result<Outcome> {
    let config = ctx.config;
    let world = SyntheticGeoWorld::generate(config.world()).context("generating synthetic world")?;
    let init = ToyPolicy::zeros(world.num_cells(), world.num_features(), config.temperature)?;
    let mut cfg = config.curriculum();
    cfg.execution = ctx.exec;
    let outcome = grpo::run_curriculum(&world, &init, &config.rewards(), &cfg).context("training failed")?;

    let trace: Vec<_> = outcome.trace().copied().collect();
    let trace_path = args
        .trace
        .clone()
        .or_else(|| config.trace_out.clone())
        .unwrap_or_else(|| "trace.jsonl".into());
    let policy_path = args
        .policy
        .clone()
        .or_else(|| config.policy_out.clone())
        .unwrap_or_else(|| "policy.txt".into());
    write_output(Some(&trace_path), &jsonl::to_string(&trace)?)?;
    write_output(Some(&policy_path), &outcome.policy().to_text())?;
    if ctx.cli.plot {
        plot::reward_surface(
            &plot_dir(Some(&trace_path)).join("reward_surface.svg"),
            &config.rewards(),
        )?;
    }
    Ok(Outcome::Clean)
}

fn report_format(f: Format) -> ReportFormat {
    match f {
        Format::Json => ReportFormat::Json,
        Format::Csv => ReportFormat::Csv,
        Format::Table => ReportFormat::Table,
    }
}

fn evaluate(ctx: &Ctx, args: &EvalArgs) -> Result<Outcome> {
    let input = ctx.input(&args.io.input)?;
    let (records, bad_lines) = ctx.read_jsonl::<EvalRecord>(&input)?;
    let names = ctx.names(&args.aliases)?;
    let report = eval::evaluate(&records, &names, ctx.exec)?;
    let output = args.io.output.as_deref().or(ctx.config.report_out.as_deref());
    write_output(output, &eval::emit_report(&report, report_format(args.format))?)?;
    ctx.log_rejects(&bad_lines, &[])
}

fn report(args: &ReportArgs) -> Result<Outcome> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let report: MetricReport =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", args.input.display()))?;
    write_output(
        args.output.as_deref(),
        &eval::emit_report(&report, report_format(args.format))?,
    )?;
    Ok(Outcome::Clean)
}
