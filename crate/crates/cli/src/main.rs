mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use config::{FileConfig, LayersValue};
use filterprune::archmodel::{
    flops_drop, preset, recover_rate, ArchSpec, CountMode, FlopsOptions, FlopsReport, PresetName,
    PresetOptions, RecoveredRate,
};
use filterprune::compare::compare_criteria;
use filterprune::criteria::{score_layers, CriterionKind, Family, NormKind, SimilarityKind};
use filterprune::fsutil::{read_json, write_json};
use filterprune::planner::{apply_hard, apply_soft, build_plan, validate_plan, PruningPlan, RateSchedule};
use filterprune::tensor_io::{
    load_store, natural_cmp, save_store, select_conv_layers, LayerSelector, TensorStore,
};

#[derive(Parser)]
#[command(name = "filterprune", version, about = "Data-independent filter pruning for CNN weight stores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Score the filters of every selected layer.
    Score(Shared),
    /// Score layers and write a pruning plan.
    Plan(Shared),
    /// Apply a plan to a store.
    Apply(Shared),
    /// FLOPs reduction of a rate schedule on an architecture.
    Flops(Shared),
    /// Compare several criteria on the same layers.
    Compare(Shared),
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Norm,
    /// NORM with the l1 norm.
    L1,
    /// NORM with the l2 norm.
    L2,
    #[value(alias = "cosine_sum")]
    CosineSum,
    Fpgm,
    Dm,
    Hc,
    Whc,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SimilarityArg {
    Cosine,
    Correlation,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Soft,
    Hard,
}

#[derive(Clone, Copy, ValueEnum)]
enum CountArg {
    Analytic,
    Integer,
}

#[derive(Args)]
struct Shared {
    /// JSON config file; command-line flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Tensor container (`.st`).
    #[arg(long)]
    store: Option<PathBuf>,
    /// Comma-separated names or globs, or a JSON file `{"layers": [...]}`.
    /// Defaults to every rank-4 tensor in the store.
    #[arg(long)]
    layers: Option<String>,
    #[arg(long, value_enum)]
    criterion: Option<CriterionArg>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    #[arg(long, value_enum)]
    similarity: Option<SimilarityArg>,
    /// Default pruning rate in [0, 1].
    #[arg(long)]
    rate: Option<f64>,
    /// Per-layer rates, `name=rate,...`.
    #[arg(long)]
    rate_overrides: Option<String>,
    /// Architecture spec JSON.
    #[arg(long, conflicts_with = "preset")]
    arch: Option<PathBuf>,
    #[arg(long, value_parser = parse_preset)]
    preset: Option<PresetName>,
    /// Keep the stem convolution of a preset unpruned.
    #[arg(long)]
    no_prune_first_conv: bool,
    /// Keep the projection shortcuts of a preset unpruned.
    #[arg(long)]
    no_prune_projections: bool,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// FLOPs per multiply-accumulate.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=2))]
    flops_factor: Option<u64>,
    #[arg(long, value_enum)]
    count_mode: Option<CountArg>,
    /// Count only physically removable FLOPs (mask-only layers stay whole).
    #[arg(long)]
    structural_only: bool,
    /// Add classifier FLOPs to the totals.
    #[arg(long)]
    include_classifier: bool,
    /// Find the uniform rate whose drop matches this percentage.
    #[arg(long)]
    target_drop: Option<f64>,
    /// Plan JSON to apply.
    #[arg(long)]
    plan: Option<PathBuf>,
    /// Criteria to compare, comma-separated `family[:norm[:similarity]]`.
    #[arg(long, value_delimiter = ',', value_parser = parse_criterion)]
    criteria: Vec<CriterionKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_preset(s: &str) -> Result<PresetName, String> {
    s.parse().map_err(|e: filterprune::Error| e.to_string())
}

fn parse_criterion(s: &str) -> Result<CriterionKind, String> {
    CriterionKind::parse(s)
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<filterprune::Error> for Failure {
    fn from(e: filterprune::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Score(a) => Resolved::new(a).and_then(|r| r.score()),
        Command::Plan(a) => Resolved::new(a).and_then(|r| r.plan()),
        Command::Apply(a) => Resolved::new(a).and_then(|r| r.apply()),
        Command::Flops(a) => Resolved::new(a).and_then(|r| r.flops()),
        Command::Compare(a) => Resolved::new(a).and_then(|r| r.compare()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

/// Flags merged over the config file.
struct Resolved {
    args: Shared,
    file: FileConfig,
}

impl Resolved {
    fn new(args: Shared) -> CliResult<Self> {
        let file = match &args.config {
            Some(p) => read_json(p).map_err(|e| usage(format!("config {}: {e}", p.display())))?,
            None => FileConfig::default(),
        };
        Ok(Self { args, file })
    }

    fn store_path(&self) -> CliResult<PathBuf> {
        self.args
            .store
            .clone()
            .or_else(|| self.file.store.clone())
            .ok_or_else(|| usage("--store is required"))
    }

    fn out_path(&self) -> Option<PathBuf> {
        self.args.out.clone().or_else(|| self.file.out.clone())
    }

    fn required_out(&self) -> CliResult<PathBuf> {
        self.out_path().ok_or_else(|| usage("--out is required"))
    }

    fn selector(&self, store: &TensorStore) -> CliResult<LayerSelector> {
        if let Some(list) = &self.args.layers {
            let path = Path::new(list);
            if list.ends_with(".json") && path.is_file() {
                return Ok(LayerSelector::from_file(path)?);
            }
            return Ok(LayerSelector::parse_list(list));
        }
        match &self.file.layers {
            Some(LayersValue::List(s)) => Ok(LayerSelector::parse_list(s)),
            Some(LayersValue::Patterns(p)) => Ok(LayerSelector::new(p.clone())),
            None => {
                let mut names: Vec<&str> = store
                    .iter()
                    .filter(|(_, t)| t.rank() == 4)
                    .map(|(n, _)| n)
                    .collect();
                if names.is_empty() {
                    return Err(Failure::Data(
                        "layer selection failed: store has no rank-4 tensors".into(),
                    ));
                }
                names.sort_by(|a, b| natural_cmp(a, b));
                Ok(LayerSelector::new(names))
            }
        }
    }

    fn criterion(&self) -> CliResult<CriterionKind> {
        let base = match &self.file.criterion {
            Some(s) => CriterionKind::parse(s).map_err(usage)?,
            None => CriterionKind::whc(),
        };
        let mut family = base.family();
        let mut norm = match &self.file.norm {
            Some(s) => s.parse().map_err(usage)?,
            None => base.norm(),
        };
        let mut similarity = match &self.file.similarity {
            Some(s) => s.parse().map_err(usage)?,
            None => base.similarity(),
        };
        if let Some(c) = self.args.criterion {
            family = match c {
                CriterionArg::Norm => Family::Norm,
                CriterionArg::L1 => {
                    norm = NormKind::L1;
                    Family::Norm
                }
                CriterionArg::L2 => {
                    norm = NormKind::L2;
                    Family::Norm
                }
                CriterionArg::CosineSum => Family::CosineSum,
                CriterionArg::Fpgm => Family::Fpgm,
                CriterionArg::Dm => Family::Dm,
                CriterionArg::Hc => Family::Hc,
                CriterionArg::Whc => Family::Whc,
            };
        }
        if let Some(n) = self.args.norm {
            norm = match n {
                NormArg::L1 => NormKind::L1,
                NormArg::L2 => NormKind::L2,
            };
        }
        if let Some(s) = self.args.similarity {
            similarity = match s {
                SimilarityArg::Cosine => SimilarityKind::Cosine,
                SimilarityArg::Correlation => SimilarityKind::Correlation,
            };
        }
        Ok(CriterionKind::new(family, norm, similarity))
    }

    fn schedule(&self) -> CliResult<RateSchedule> {
        let rate = self
            .args
            .rate
            .or(self.file.rate)
            .ok_or_else(|| usage("--rate is required"))?;
        let mut overrides = self.file.rate_overrides.clone();
        if let Some(list) = &self.args.rate_overrides {
            overrides.extend(RateSchedule::parse_overrides(list).map_err(|e| usage(e.to_string()))?);
        }
        RateSchedule::new(rate, overrides).map_err(|e| usage(e.to_string()))
    }

    fn arch(&self) -> CliResult<ArchSpec> {
        let opts = PresetOptions {
            prune_first_conv: !self.args.no_prune_first_conv
                && self.file.prune_first_conv.unwrap_or(true),
            prune_projections: !self.args.no_prune_projections
                && self.file.prune_projections.unwrap_or(true),
        };
        let name = match (self.args.preset, &self.args.arch, &self.file.preset, &self.file.arch) {
            (Some(p), ..) => p,
            (None, Some(path), ..) => return Ok(ArchSpec::from_json_file(path)?),
            (None, None, Some(_), Some(_)) => {
                return Err(usage("config gives both `arch` and `preset`"))
            }
            (None, None, Some(s), None) => s.parse().map_err(|e: filterprune::Error| usage(e.to_string()))?,
            (None, None, None, Some(path)) => return Ok(ArchSpec::from_json_file(path)?),
            (None, None, None, None) => return Err(usage("--arch or --preset is required")),
        };
        Ok(preset(name, opts)?)
    }

    fn flops_options(&self) -> CliResult<FlopsOptions> {
        let mode = match (self.args.count_mode, &self.file.count_mode) {
            (Some(CountArg::Analytic), _) => CountMode::Analytic,
            (Some(CountArg::Integer), _) => CountMode::Integer,
            (None, Some(s)) => s.parse().map_err(usage)?,
            (None, None) => CountMode::Analytic,
        };
        let factor = self.args.flops_factor.or(self.file.flops_factor).unwrap_or(2);
        if !(1..=2).contains(&factor) {
            return Err(usage(format!("flops factor must be 1 or 2, got {factor}")));
        }
        Ok(FlopsOptions {
            mode,
            factor,
            structural_only: self.args.structural_only || self.file.structural_only.unwrap_or(false),
            include_classifier: self.args.include_classifier
                || self.file.include_classifier.unwrap_or(false),
        })
    }

    fn mode(&self) -> CliResult<ModeArg> {
        match (self.args.mode, &self.file.mode) {
            (Some(m), _) => Ok(m),
            (None, Some(s)) => ModeArg::from_str(s, true).map_err(|_| usage(format!("unknown mode `{s}`"))),
            (None, None) => Ok(ModeArg::Soft),
        }
    }

    fn score(&self) -> CliResult<()> {
        let out = self.required_out()?;
        let kind = self.criterion()?;
        let store = load_store(self.store_path()?)?;
        let sel = self.selector(&store)?;
        let layers = select_conv_layers(&store, &sel)?;
        let reports = score_layers(&layers, kind)?;
        write_json(&out, &reports)?;
        println!("scored {} layers with {kind} -> {}", reports.len(), out.display());
        Ok(())
    }

    fn plan(&self) -> CliResult<()> {
        let out = self.required_out()?;
        let kind = self.criterion()?;
        let schedule = self.schedule()?;
        let store = load_store(self.store_path()?)?;
        let sel = self.selector(&store)?;
        let layers = select_conv_layers(&store, &sel)?;
        let plan = build_plan(&score_layers(&layers, kind)?, &schedule)?;
        write_json(&out, &plan)?;
        for (name, (kept, pruned)) in plan.counts() {
            println!("{name}: kept {kept}, pruned {pruned}");
        }
        println!(
            "pruned {} filters in {} layers with {kind} -> {}",
            plan.total_pruned(),
            plan.layers.len(),
            out.display()
        );
        Ok(())
    }

    fn apply(&self) -> CliResult<()> {
        let out = self.required_out()?;
        let plan_path = self
            .args
            .plan
            .clone()
            .or_else(|| self.file.plan.clone())
            .ok_or_else(|| usage("--plan is required"))?;
        let mode = self.mode()?;
        let arch = if mode == ModeArg::Hard { Some(self.arch()?) } else { None };
        let store = load_store(self.store_path()?)?;
        let plan: PruningPlan = read_json(&plan_path)?;
        let sel = match &arch {
            Some(a) => a.selector(),
            None if self.args.layers.is_some() || self.file.layers.is_some() => self.selector(&store)?,
            None => LayerSelector::new(plan.layers.keys().cloned()),
        };
        let diags = validate_plan(&plan, &store, &sel);
        if !diags.is_empty() {
            for d in &diags {
                eprintln!("{d}");
            }
            return Err(Failure::Data(format!(
                "plan {} does not match the store ({} problems)",
                plan_path.display(),
                diags.len()
            )));
        }
        let pruned = match &arch {
            Some(a) => apply_hard(&store, &plan, a)?,
            None => apply_soft(&store, &plan, &sel)?,
        };
        save_store(&pruned, &out)?;
        let label = if arch.is_some() { "hard" } else { "soft" };
        println!(
            "{label}-pruned {} filters in {} layers -> {}",
            plan.total_pruned(),
            plan.layers.len(),
            out.display()
        );
        Ok(())
    }

    fn flops(&self) -> CliResult<()> {
        let arch = self.arch()?;
        let opts = self.flops_options()?;
        let target = self.args.target_drop.or(self.file.target_drop);
        let (schedule, recovered) = match target {
            Some(pct) => {
                if self.args.rate.is_some() || self.args.rate_overrides.is_some() {
                    return Err(usage("--target-drop cannot be combined with --rate or --rate-overrides"));
                }
                let found = recover_rate(&arch, pct / 100.0, 0.0, 1.0, opts)?.ok_or_else(|| {
                    Failure::Data(format!("no uniform rate reaches a {pct}% FLOPs drop"))
                })?;
                (RateSchedule::uniform(found.rate)?, Some(found))
            }
            None => (self.schedule()?, None),
        };
        let report = flops_drop(&arch, &schedule, opts)?;
        if let Some(out) = self.out_path() {
            write_json(&out, &FlopsOutput { report: &report, recovered })?;
        }
        if let Some(r) = recovered {
            println!("uniform rate {:.4}", r.rate);
        }
        println!(
            "base {:.0} FLOPs, pruned {:.0} FLOPs",
            report.total_base, report.total_pruned
        );
        println!("FLOPs drop: {:.1}%", report.drop_percent());
        Ok(())
    }

    fn compare(&self) -> CliResult<()> {
        let out = self.required_out()?;
        let criteria = if !self.args.criteria.is_empty() {
            self.args.criteria.clone()
        } else {
            self.file
                .criteria
                .iter()
                .flatten()
                .map(|s| CriterionKind::parse(s).map_err(usage))
                .collect::<CliResult<Vec<_>>>()?
        };
        if criteria.len() < 2 {
            return Err(usage("--criteria needs at least two entries"));
        }
        let schedule = self.schedule()?;
        let store = load_store(self.store_path()?)?;
        let sel = self.selector(&store)?;
        let layers = select_conv_layers(&store, &sel)?;
        let report = compare_criteria(&layers, &criteria, &schedule)?;
        write_json(&out, &report)?;
        for p in &report.summary {
            println!(
                "{} vs {}: agreement {:.3}, spearman {:.3}",
                p.a, p.b, p.agreement, p.spearman
            );
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct FlopsOutput<'a> {
    #[serde(flatten)]
    report: &'a FlopsReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    recovered: Option<RecoveredRate>,
}
