//! `lpq` — two-stage L(p,q) peer-review aggregation from the command line.
//!
//! Exit codes: 0 success, 1 malformed input or flags, 2 when an audit or
//! attack finds a violation / a repro case reproduces its known violation.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use lpq_review::attack;
use lpq_review::audit::{AuditSettings, GeneratorSettings, UnanimousPlant};
use lpq_review::axioms::{
    check_consensus, check_consistency, check_efficiency, check_strategy_proofness,
    dominates_with_scores, Axiom, AxiomMode, Domination, Misreport, Verdict,
};
use lpq_review::dataset::{Params, ReviewDataset};
use lpq_review::instances;
use lpq_review::io::{parse_reviews, Format, ParsedReviews};
use lpq_review::linear;
use lpq_review::order::apply_objectivity;
use lpq_review::report::{
    emit_report, residuals_csv, solutions_csv, PaperScore, Report, RunConfig, Setting,
};
use lpq_review::solver::aggregate;

#[derive(Parser)]
#[command(name = "lpq", version, about = "L(p,q) peer-review score aggregation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Inner exponent (per-reviewer norm)
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    /// Outer exponent (across reviewers)
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    /// Optimizer stationarity/feasibility tolerance
    #[arg(long, default_value_t = 1e-8)]
    tolerance: f64,
    /// Seed for randomized commands
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ParamArgs {
    fn params(&self) -> Result<Params> {
        Ok(Params::new(self.p, self.q)?
            .with_tolerance(self.tolerance)?
            .with_seed(self.seed))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Auto,
    Hidden,
    NonHidden,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxiomArg {
    Consensus,
    Efficiency,
    Consistency,
    StrategyProofness,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackMethod {
    Bisection,
    ScoreMisreport,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum ReproCase {
    Leftmedian,
    Fig2,
    Fig3,
    Fig4,
    EfficiencyL22,
    Prop32,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlantArg {
    None,
    Recommendations,
    WithScores,
}

#[derive(Subcommand)]
enum Command {
    /// Aggregate a review file into per-paper scores
    Aggregate {
        #[command(flatten)]
        params: ParamArgs,
        /// Input review file
        #[arg(long)]
        input: PathBuf,
        /// Input format
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// hidden requires objectivity to hold; auto detects it
        #[arg(long, value_enum, default_value_t = SettingArg::Auto)]
        setting: SettingArg,
        /// Report output path (JSON)
        #[arg(long)]
        out: PathBuf,
        /// Also write per-paper scores as CSV
        #[arg(long)]
        solutions_csv: Option<PathBuf>,
        /// Also write the residual ranking as CSV
        #[arg(long)]
        residuals_csv: Option<PathBuf>,
    },
    /// Randomized axiom audit over generated datasets
    Audit {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum)]
        axiom: AxiomArg,
        /// Check the score-vector variant of the axiom
        #[arg(long)]
        with_scores: bool,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        #[arg(long, default_value_t = 3)]
        reviewers: usize,
        #[arg(long, default_value_t = 2)]
        papers: usize,
        #[arg(long, default_value_t = 1)]
        criteria: usize,
        /// Objectivity-constrained datasets (incomparable per-paper vectors)
        #[arg(long)]
        hidden: bool,
        /// Per-reviewer monotone recommendations
        #[arg(long)]
        monotone: bool,
        #[arg(long, value_enum, default_value_t = PlantArg::None)]
        plant_unanimous: PlantArg,
        #[arg(long)]
        plant_dominated_pair: bool,
        /// Misreports per trial for strategy-proofness
        #[arg(long, default_value_t = 100)]
        misreports: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Constructive or randomized manipulation search
    Attack {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum)]
        method: AttackMethod,
        /// Input file for --method random
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        /// Misreporting reviewer index for --method random
        #[arg(long, default_value_t = 0)]
        reviewer: usize,
        #[arg(long, default_value_t = 500)]
        trials: u64,
        /// Comma-separated ε list for --method score-misreport
        #[arg(long, default_value = "0.1,0.01,0.001")]
        epsilons: String,
        /// Let --method random also perturb score vectors
        #[arg(long)]
        perturb_scores: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-run a named constructed instance and assert its known outcome
    Repro {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, value_enum)]
        case: ReproCase,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Three-step linear aggregation of a review file
    Linear {
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
        format: FormatArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err)
            if matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            ) =>
        {
            print!("{err}");
            std::process::exit(0);
        }
        Err(err) => {
            eprintln!("{err}");
            std::process::exit(1);
        }
    };
    match run(cli) {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}

fn load(input: &PathBuf, format: FormatArg) -> Result<ParsedReviews> {
    let format = match format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    Ok(parse_reviews(input, format)?)
}

fn default_ids(ds: &ReviewDataset) -> (Vec<String>, Vec<String>) {
    (
        (0..ds.num_papers()).map(|a| format!("p{a}")).collect(),
        (0..ds.num_reviewers()).map(|i| format!("r{i}")).collect(),
    )
}

fn finish(report: &Report, out: Option<&PathBuf>) -> Result<i32> {
    if let Some(path) = out {
        emit_report(report, path)?;
    }
    Ok(if report.found_violation() { 2 } else { 0 })
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Aggregate {
            params,
            input,
            format,
            setting,
            out,
            solutions_csv: sol_csv,
            residuals_csv: res_csv,
        } => {
            let params = params.params()?;
            let parsed = load(&input, format)?;
            let setting_val = match setting {
                SettingArg::Auto => Setting::Auto,
                SettingArg::Hidden => Setting::Hidden,
                SettingArg::NonHidden => Setting::NonHidden,
            };
            if matches!(setting, SettingArg::Hidden) {
                apply_objectivity(&parsed.dataset)
                    .map_err(|e| anyhow::anyhow!("--setting hidden: {e}"))?;
            }
            let (fitted, solution) = aggregate(&parsed.dataset, &params)?;
            let mut report = Report::new(RunConfig::new("aggregate", &params, setting_val))
                .with_pipeline(
                    &parsed.dataset,
                    &parsed.paper_ids,
                    &parsed.reviewer_ids,
                    &fitted,
                    &solution,
                );
            for warning in parsed.dataset.warnings() {
                report.notes.push(format!(
                    "reviewer {} is not monotone between papers {} and {}",
                    parsed.reviewer_ids[warning.reviewer],
                    parsed.paper_ids[warning.paper_low],
                    parsed.paper_ids[warning.paper_high]
                ));
            }
            emit_report(&report, &out)?;
            if let Some(path) = sol_csv {
                std::fs::write(&path, solutions_csv(&report))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            if let Some(path) = res_csv {
                std::fs::write(&path, residuals_csv(&report))
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            Ok(0)
        }

        Command::Audit {
            params,
            axiom,
            with_scores,
            trials,
            reviewers,
            papers,
            criteria,
            hidden,
            monotone,
            plant_unanimous,
            plant_dominated_pair,
            misreports,
            out,
        } => {
            let params = params.params()?;
            let mode = if with_scores {
                AxiomMode::WithScores
            } else {
                AxiomMode::Plain
            };
            let axioms: Vec<(Axiom, AxiomMode)> = match axiom {
                AxiomArg::Consensus => vec![(Axiom::Consensus, mode)],
                AxiomArg::Efficiency => vec![(Axiom::Efficiency, mode)],
                AxiomArg::Consistency => vec![(Axiom::Consistency, mode)],
                AxiomArg::StrategyProofness => vec![(Axiom::StrategyProofness, mode)],
                AxiomArg::All => vec![
                    (Axiom::Consensus, mode),
                    (Axiom::Efficiency, mode),
                    (Axiom::Consistency, mode),
                    (Axiom::StrategyProofness, mode),
                ],
            };
            let generator = GeneratorSettings {
                num_reviewers: reviewers,
                num_papers: papers,
                num_criteria: if hidden { 2 } else { criteria },
                hidden,
                reviewer_monotone: monotone,
                plant_unanimous: match plant_unanimous {
                    PlantArg::None => None,
                    PlantArg::Recommendations => Some(UnanimousPlant::Recommendations),
                    PlantArg::WithScores => Some(UnanimousPlant::WithScores),
                },
                plant_dominated_pair,
            };
            let settings = AuditSettings {
                generator,
                axioms,
                misreports_per_trial: misreports,
            };
            let findings =
                lpq_review::audit::audit_random(&params, &settings, trials, params.seed)?;
            let mut report = Report::new(RunConfig::new("audit", &params, Setting::Auto));
            report.notes.push(format!(
                "{} violation(s) in {} trials",
                findings.len(),
                trials
            ));
            report.audit_findings = findings;
            finish(&report, out.as_ref())
        }

        Command::Attack {
            params,
            method,
            input,
            format,
            reviewer,
            trials,
            epsilons,
            perturb_scores,
            out,
        } => {
            let params = params.params()?;
            let mut report = Report::new(RunConfig::new("attack", &params, Setting::Auto));
            match method {
                AttackMethod::Bisection => {
                    let u = attack::find_crossing(&params)?;
                    let result = attack::construct_recommendation_attack(&params)?;
                    report
                        .notes
                        .push(format!("crossing at t = {u}; gain {}", result.gain));
                    report.attack_results.push(result);
                }
                AttackMethod::ScoreMisreport => {
                    let eps: Vec<f64> = epsilons
                        .split(',')
                        .map(|s| s.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .context("parsing --epsilons")?;
                    let gaps = attack::continuity_probe(&params, &eps)?;
                    let jumped = gaps.iter().any(|&(_, gap)| gap > 1e-6);
                    report.continuity_gaps = gaps;
                    if jumped {
                        report
                            .notes
                            .push("score misreport shifts the solution discontinuously".into());
                        if report.attack_results.is_empty() && report.audit_findings.is_empty() {
                            // mark the violation for the exit code
                            report.notes.push("violation: discontinuity".into());
                        }
                    }
                    let code = if jumped { 2 } else { 0 };
                    if let Some(path) = out.as_ref() {
                        emit_report(&report, path)?;
                    }
                    return Ok(code);
                }
                AttackMethod::Random => {
                    let input = input.context("--method random needs --input")?;
                    let parsed = load(&input, format)?;
                    if reviewer >= parsed.dataset.num_reviewers() {
                        bail!("reviewer index {reviewer} out of range");
                    }
                    let best = attack::random_misreport_search(
                        &parsed.dataset,
                        &params,
                        reviewer,
                        trials,
                        params.seed,
                        perturb_scores,
                    )?;
                    match best {
                        Some(result) => {
                            report
                                .notes
                                .push(format!("best gain {} over {trials} trials", result.gain));
                            report.attack_results.push(result);
                        }
                        None => report
                            .notes
                            .push(format!("no successful misreport in {trials} trials")),
                    }
                }
            }
            finish(&report, out.as_ref())
        }

        Command::Repro { params, case, out } => run_repro(params, case, out),

        Command::Linear {
            params,
            input,
            format,
            out,
        } => {
            let params = params.params()?;
            let parsed = load(&input, format)?;
            let result = linear::linear_pipeline(&parsed.dataset, &params)?;
            let mut report = Report::new(RunConfig::new("linear", &params, Setting::Auto));
            report.solutions = result
                .solution
                .scores
                .iter()
                .enumerate()
                .map(|(a, &score)| PaperScore {
                    paper_id: parsed.paper_ids[a].clone(),
                    score,
                })
                .collect();
            report.erm_loss = Some(result.solution.erm_loss);
            report.aggregation_loss = Some(result.solution.aggregation_loss);
            for (i, model) in result.models.iter().enumerate() {
                report.notes.push(format!(
                    "reviewer {} coefficients: {:?}",
                    parsed.reviewer_ids[i], model.coefficients
                ));
            }
            report.notes.push(format!(
                "aggregated coefficients: {:?}",
                result.aggregated_model.coefficients
            ));
            let ignored = linear::detect_ignored_criteria(&result.models);
            if !ignored.is_empty() {
                report.notes.push(format!("ignored criteria: {ignored:?}"));
            }
            if let Some(path) = out.as_ref() {
                emit_report(&report, path)?;
            }
            Ok(0)
        }
    }
}

fn assert_close(what: &str, got: f64, want: f64, tol: f64) -> Result<()> {
    if (got - want).abs() > tol {
        bail!("repro drift: {what} = {got}, expected {want} (tolerance {tol})");
    }
    Ok(())
}

fn run_repro(params: ParamArgs, case: ReproCase, out: Option<PathBuf>) -> Result<i32> {
    match case {
        ReproCase::Leftmedian => {
            let params = Params::new(1.0, 1.0)?;
            let mut report = Report::new(RunConfig::new("repro leftmedian", &params, Setting::Hidden));
            let pairs = [
                (vec![8.0, 8.0, 3.0, 8.0], vec![8.0, 8.0, 9.0, 8.0], 8.0),
                (vec![3.0, 1.0, 4.0], vec![2.0, 3.0, 9.0], 3.0),
            ];
            for (low, high, expected) in pairs {
                let ds = instances::hidden_with_incomparable_scores(&[low, high.clone()]);
                let (_, solution) = aggregate(&ds, &params)?;
                assert_close("s for the dominated column", solution.scores[0], expected, 1e-12)?;
                assert_close("s for the dominating column", solution.scores[1], expected, 1e-12)?;
                report.solutions.push(PaperScore {
                    paper_id: format!("column {:?}", ds.recommendation_column(0)),
                    score: solution.scores[0],
                });
                report.solutions.push(PaperScore {
                    paper_id: format!("column {:?}", ds.recommendation_column(1)),
                    score: solution.scores[1],
                });
                report
                    .axiom_reports
                    .push(check_consistency(&ds, &params, AxiomMode::Plain)?);
            }
            report.notes.push(
                "left-median scores both columns of each pair identically; consistency is violated"
                    .into(),
            );
            finish(&report, out.as_ref())
        }

        ReproCase::Fig2 => {
            let params = Params::new(1.0, 1.0)?;
            let ds = instances::consensus_counterexample();
            let (fitted, solution) = aggregate(&ds, &params)?;
            for (idx, want) in [(0, 1.0), (1, 1.0), (2, 1.0), (3, 2.0)] {
                assert_close(
                    &format!("fitted node {idx}"),
                    fitted.node_values()[idx],
                    want,
                    1e-6,
                )?;
            }
            assert_close("s_b", solution.scores[1], 1.0, 1e-6)?;
            let consensus = check_consensus(&ds, &params, AxiomMode::Plain)?;
            if consensus.verdict != Verdict::Violated {
                bail!("repro drift: consensus unexpectedly {:?}", consensus.verdict);
            }
            let misreport = Misreport::recommendations_only(1, vec![Some(1.2), None]);
            let sp = check_strategy_proofness(&ds, &params, &misreport)?;
            if sp.verdict != Verdict::Violated {
                bail!("repro drift: misreport 1.2 did not help reviewer 2");
            }
            let (ids_p, ids_r) = default_ids(&ds);
            let mut report = Report::new(RunConfig::new("repro fig2", &params, Setting::NonHidden))
                .with_pipeline(&ds, &ids_p, &ids_r, &fitted, &solution);
            report.axiom_reports = vec![consensus, sp];
            finish(&report, out.as_ref())
        }

        ReproCase::Fig3 => {
            let params = Params::new(2.0, 2.0)?;
            let ds = instances::strict_domination_tie();
            let (fitted, solution) = aggregate(&ds, &params)?;
            for i in 0..2 {
                for a in 0..2 {
                    assert_close(&format!("fitted ({i},{a})"), fitted.value(i, a), 2.0, 1e-6)?;
                }
            }
            assert_close("s_a", solution.scores[0], 2.0, 1e-6)?;
            assert_close("s_b", solution.scores[1], 2.0, 1e-6)?;
            if dominates_with_scores(&ds, 0, 1) != Domination::Strict {
                bail!("repro drift: paper a no longer strictly dominates b under scores");
            }
            let consistency = check_consistency(&ds, &params, AxiomMode::WithScores)?;
            if consistency.verdict != Verdict::Violated {
                bail!("repro drift: consistency with scores unexpectedly {:?}", consistency.verdict);
            }
            let (ids_p, ids_r) = default_ids(&ds);
            let mut report = Report::new(RunConfig::new("repro fig3", &params, Setting::NonHidden))
                .with_pipeline(&ds, &ids_p, &ids_r, &fitted, &solution);
            report.axiom_reports = vec![consistency];
            finish(&report, out.as_ref())
        }

        ReproCase::Fig4 => {
            let params = params.params()?;
            let eps = [0.1, 0.01, 0.001];
            let gaps = attack::continuity_probe(&params, &eps)?;
            if params.p == 1.0 && params.q == 1.0 {
                for &(e, gap) in &gaps {
                    assert_close(&format!("gap at eps {e}"), gap, 1.0, 1e-6)?;
                }
            }
            let jumped = gaps.iter().any(|&(_, gap)| gap > 1e-6);
            let mut report = Report::new(RunConfig::new("repro fig4", &params, Setting::NonHidden));
            report.continuity_gaps = gaps;
            report.notes.push(
                "an arbitrarily small score misreport moves paper b's score by a constant"
                    .into(),
            );
            if let Some(path) = out.as_ref() {
                emit_report(&report, path)?;
            }
            Ok(if jumped { 2 } else { 0 })
        }

        ReproCase::EfficiencyL22 => {
            let params = Params::new(2.0, 2.0)?;
            let ds = instances::shared_node_efficiency_gap();
            let (fitted, solution) = aggregate(&ds, &params)?;
            let gap = (solution.scores[0] - solution.scores[1]).abs();
            assert_close("|s_a - s_b|", gap, 2.0 / 3.0, 1e-6)?;
            let efficiency = check_efficiency(&ds, &params, AxiomMode::Plain)?;
            if efficiency.verdict != Verdict::Violated {
                bail!("repro drift: efficiency unexpectedly {:?}", efficiency.verdict);
            }
            let (ids_p, ids_r) = default_ids(&ds);
            let mut report =
                Report::new(RunConfig::new("repro efficiency-l22", &params, Setting::NonHidden))
                    .with_pipeline(&ds, &ids_p, &ids_r, &fitted, &solution);
            report.axiom_reports = vec![efficiency];
            report.notes.push(format!(
                "papers dominate each other yet |s_a - s_b| = {gap}"
            ));
            finish(&report, out.as_ref())
        }

        ReproCase::Prop32 => {
            let params = {
                let p = params.params()?;
                if p.p == 1.0 && p.q == 1.0 {
                    Params::new(2.0, 2.0)?
                } else {
                    p
                }
            };
            let u = attack::find_crossing(&params)?;
            assert_close("crossing u", u, 0.5, 1e-9)?;
            let result = attack::construct_recommendation_attack(&params)?;
            if params.p == 2.0 {
                assert_close("honest distance", result.honest_distance, 0.5, 1e-9)?;
                assert_close("manipulated distance", result.manipulated_distance, 0.0, 1e-9)?;
            }
            let mut report = Report::new(RunConfig::new("repro prop32", &params, Setting::Hidden));
            report
                .notes
                .push(format!("crossing at t = {u}; gain {}", result.gain));
            report.attack_results.push(result);
            finish(&report, out.as_ref())
        }
    }
}
