use std::fs;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use dustmns::design::{run_design, DesignKind};
use dustmns::efficiency::{
    advise_k, lambda_bound, make_table, theta_star, AdviceConstraints, TableGrid, TableKind,
};
use dustmns::estimators::{
    estimate_dust_mns, estimate_dust_srs, estimate_imperfect, estimate_srs, realized_lag_sum,
    CiStyle, EstimateReport, MisrankingModel, DEFAULT_BOOTSTRAP_REPLICATES, DEFAULT_LEVEL,
};
use dustmns::frame::{
    diagnostics, diagnostics_with_threshold, empirical_quantile, load_frame, ArealFrame,
};
use dustmns::montecarlo::{run_study, McConfig, McResult};
use dustmns::sampler::DustParams;
use dustmns::Error as CoreError;

use crate::args::{
    AdviseArgs, CiChoice, EstimateArgs, FrameSource, SimulateArgs, TablesArgs, ThetaStarArgs,
    ValidateArgs,
};
use crate::error::{CliError, CliResult};
use crate::output::{Format, OutputDir, Rows};

pub const DEFAULT_QUANTILE: f64 = 0.9;

/// What a command produced: text for stdout and manifest details.
pub struct Outcome {
    pub stdout: String,
    pub config: Value,
    pub extra: Map<String, Value>,
    /// Error to report after all outputs were written.
    pub deferred: Option<CliError>,
}

impl Outcome {
    fn new(stdout: String, config: Value) -> Self {
        Self {
            stdout,
            config,
            extra: Map::new(),
            deferred: None,
        }
    }
}

fn require<T>(value: Option<T>, what: &str) -> CliResult<T> {
    value.ok_or_else(|| CliError::Input(format!("missing required argument {what}")))
}

fn to_config<T: serde::Serialize>(args: &T) -> Value {
    serde_json::to_value(args).unwrap_or(Value::Null)
}

fn num(x: f64) -> Value {
    Value::from(x)
}

fn opt_num(x: Option<f64>) -> Value {
    x.map(num).unwrap_or(Value::Null)
}

fn load(population: Option<PathBuf>, adjacency: Option<PathBuf>) -> CliResult<ArealFrame> {
    let pop = require(population, "--population")?;
    let adj = require(adjacency, "--adjacency")?;
    Ok(load_frame(&pop, &adj)?)
}

pub fn validate(args: ValidateArgs, out: &mut OutputDir) -> CliResult<Outcome> {
    let frame = load(args.population.clone(), args.adjacency.clone())?;
    let diag = match args.threshold {
        Some(c) => diagnostics_with_threshold(&frame, c)?,
        None => diagnostics(&frame, args.quantile.unwrap_or(DEFAULT_QUANTILE))?,
    };
    let text = out.json("diagnostics", &diag)?;
    if out.format() == Format::Csv {
        let mut rows = Rows::new([
            "n_units",
            "threshold_c",
            "census_theta",
            "morans_i",
            "kendall_tau",
            "mean_lag",
        ]);
        rows.push(vec![
            Value::from(diag.n_units),
            num(diag.threshold_c),
            num(diag.census_theta),
            opt_num(diag.morans_i),
            opt_num(diag.kendall_tau),
            opt_num(diag.mean_lag),
        ]);
        out.rows("diagnostics", &rows)?;
    }
    let mut resolved = args.clone();
    if resolved.threshold.is_none() {
        resolved.quantile.get_or_insert(DEFAULT_QUANTILE);
    }
    let mut outcome = Outcome::new(text, to_config(&resolved));
    if let Some(i) = diag.morans_i {
        outcome
            .extra
            .insert("suggested_eta0".into(), num(i.clamp(0.0, 0.99)));
    }
    Ok(outcome)
}

fn table_grid(kind: TableKind, args: &TablesArgs) -> CliResult<TableGrid> {
    let standard = TableGrid::standard(kind);
    Ok(match standard {
        TableGrid::Lambda { cells } => {
            let (ns, lags): (Vec<usize>, Vec<f64>) = match (&args.ns, &args.mean_lags) {
                (None, None) => {
                    let mut pairs: Vec<(usize, f64)> =
                        cells.iter().map(|&(_, n, l)| (n, l)).collect();
                    pairs.dedup();
                    pairs.into_iter().unzip()
                }
                (Some(ns), Some(ls)) if ns.len() == ls.len() => (ns.clone(), ls.clone()),
                _ => {
                    return Err(CliError::Input(
                        "the lambda table needs --ns and --mean-lags of equal length".into(),
                    ))
                }
            };
            let eta0s = args.eta0s.clone().unwrap_or_else(|| vec![0.2, 0.5, 0.8]);
            let cells = ns
                .iter()
                .zip(&lags)
                .flat_map(|(&n, &l)| eta0s.iter().map(move |&e| (e, n, l)))
                .collect();
            TableGrid::Lambda { cells }
        }
        TableGrid::Re { thetas, ks } => TableGrid::Re {
            thetas: args.thetas.clone().unwrap_or(thetas),
            ks: args.ks.clone().unwrap_or(ks),
        },
        TableGrid::ThetaStar { ks } => TableGrid::ThetaStar {
            ks: args.ks.clone().unwrap_or(ks),
        },
        TableGrid::ExactBias { thetas, ns, ks } => TableGrid::ExactBias {
            thetas: args.thetas.clone().unwrap_or(thetas),
            ns: args.ns.clone().unwrap_or(ns),
            ks: args.ks.clone().unwrap_or(ks),
        },
    })
}

pub fn tables(args: TablesArgs, out: &mut OutputDir) -> CliResult<Outcome> {
    let which = args.which.unwrap_or(crate::args::TableChoice::All);
    let mut stdout = String::new();
    for kind in which.kinds() {
        let table = make_table(&table_grid(kind, &args)?)?;
        let mut rows = Rows::new(table.columns.iter().copied());
        for row in &table.rows {
            rows.push(row.iter().map(|s| Value::from(s.as_str())).collect());
        }
        stdout.push_str(&out.rows(&format!("table_{}", kind.name()), &rows)?);
    }
    let mut resolved = args.clone();
    resolved.which = Some(which);
    Ok(Outcome::new(stdout, to_config(&resolved)))
}

fn misranking_model(args: &EstimateArgs) -> CliResult<Option<MisrankingModel>> {
    match (args.tau, &args.matrix) {
        (Some(_), Some(_)) => Err(CliError::Input(
            "give either --tau or --matrix, not both".into(),
        )),
        (Some(t), None) => Ok(Some(MisrankingModel::Tau(t))),
        (None, Some(path)) => {
            let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let nu: Vec<Vec<f64>> = serde_json::from_str(&text)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            Ok(Some(MisrankingModel::Matrix(nu)))
        }
        (None, None) => Ok(None),
    }
}

fn count_report(
    r_n: usize,
    n: usize,
    k: usize,
    model: Option<&MisrankingModel>,
) -> CliResult<EstimateReport> {
    Ok(match model {
        Some(m) => estimate_imperfect(r_n, n, k, m)?,
        None => estimate_dust_mns(r_n, n, k)?,
    })
}

pub fn estimate(args: EstimateArgs, seed: u64, out: &mut OutputDir) -> CliResult<Outcome> {
    let model = misranking_model(&args)?;
    let level = args.level.unwrap_or(DEFAULT_LEVEL);
    let replicates = args
        .bootstrap_replicates
        .unwrap_or(DEFAULT_BOOTSTRAP_REPLICATES);
    let mut extra = Map::new();

    let report = if let Some(survey) = &args.survey {
        let frame = load(args.population.clone(), args.adjacency.clone())?;
        let mut design = survey.design.clone();
        if let Some(q) = survey.quantile {
            design.threshold_c = empirical_quantile(&frame.p_values()?, q)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = run_design(&frame, &design, &mut rng)?;
        let mut units = Rows::new(["unit_id", "m", "x", "indicator"]);
        for m in &data.measured {
            units.push(vec![
                Value::from(frame.unit(m.unit).id.as_str()),
                m.m.map(Value::from).unwrap_or(Value::Null),
                m.x.map(Value::from).unwrap_or(Value::Null),
                Value::from(u8::from(m.indicator)),
            ]);
        }
        out.rows("survey", &units)?;
        extra.insert("threshold_c".into(), num(design.threshold_c));
        match design.kind {
            DesignKind::Srs => {
                let retained: Vec<usize> = data.measured.iter().map(|m| m.unit).collect();
                let lag_sum =
                    realized_lag_sum(&frame, &retained, design.dust.eta0, design.dust.max_lag);
                estimate_srs(&data.indicators, Some(lag_sum), None)?
            }
            DesignKind::DustSrs => estimate_dust_srs(&data.indicators, None)?,
            DesignKind::DustMns => count_report(data.r_n, data.n, data.k, model.as_ref())?,
        }
    } else {
        let r_n = require(args.rn, "--rn")?;
        let n = require(args.n, "--n")?;
        let k = require(args.k, "--k")?;
        count_report(r_n, n, k, model.as_ref())?
    };

    let bootstrap = CiStyle::Bootstrap { replicates, seed };
    let styles = [
        (CiChoice::Delta, CiStyle::Delta),
        (CiChoice::DeltaBc, CiStyle::DeltaBiasCorrected),
        (CiChoice::Bootstrap, bootstrap),
    ];
    let mut intervals = Rows::new(["style", "level", "low", "high", "note"]);
    for (_, style) in &styles {
        let row = match dustmns::estimators::confidence_interval(&report, level, *style) {
            Ok((lo, hi)) => vec![
                Value::from(style.label()),
                num(level),
                num(lo),
                num(hi),
                Value::Null,
            ],
            Err(CoreError::Boundary(msg)) => {
                vec![
                    Value::from(style.label()),
                    num(level),
                    Value::Null,
                    Value::Null,
                    Value::from(msg),
                ]
            }
            Err(e) => return Err(e.into()),
        };
        intervals.push(row);
    }
    out.rows("intervals", &intervals)?;

    let choice = args.ci.unwrap_or(CiChoice::DeltaBc);
    let style = styles
        .iter()
        .find(|(c, _)| *c == choice)
        .map(|(_, s)| *s)
        .unwrap_or(bootstrap);
    let (final_report, deferred) = match report.clone().with_interval(level, style) {
        Ok(r) => (r, None),
        Err(CoreError::Boundary(msg)) => {
            // the bootstrap interval is still reported
            (
                report.with_interval(level, bootstrap)?,
                Some(CliError::Core(CoreError::Boundary(msg))),
            )
        }
        Err(e) => return Err(e.into()),
    };
    let text = out.json("estimate", &final_report)?;
    let mut resolved = args.clone();
    resolved.level = Some(level);
    resolved.ci = Some(choice);
    resolved.bootstrap_replicates = Some(replicates);
    let mut outcome = Outcome::new(text, to_config(&resolved));
    extra.insert(
        "ci_method".into(),
        Value::from(final_report.ci_method.map(|s| s.label()).unwrap_or("none")),
    );
    if let Some(raw) = final_report.theta_bc_unclamped {
        extra.insert("theta_bc_unclamped".into(), num(raw));
    }
    outcome.extra = extra;
    outcome.deferred = deferred;
    Ok(outcome)
}

pub fn simulate(args: SimulateArgs, seed: u64, out: &mut OutputDir) -> CliResult<Outcome> {
    let source = require(args.frame.clone(), "simulate.frame (config file)")?;
    let mut study = require(args.study.clone(), "simulate.study (config file)")?;
    if let Some(b) = args.replicates {
        study.replicates = b;
    }
    if let Some(d) = &args.designs {
        study.designs = d.clone();
    }
    let frame = match &source {
        FrameSource::Files {
            population,
            adjacency,
        } => load_frame(population, adjacency)?,
        FrameSource::Synth(spec) => spec.build()?,
    };

    let mut rows = Rows::new(McResult::CSV_COLUMNS);
    let mut target = None;
    for &eta0 in &study.eta0 {
        let dust = DustParams::new(eta0)?
            .with_size_field(study.size_field)
            .with_max_lag(study.max_lag);
        for &measurement in &study.measurement {
            for &n in &study.n {
                for &k in &study.k {
                    let mut cfg = McConfig::new(n, k, measurement, dust)
                        .with_replicates(study.replicates)
                        .with_threshold(study.threshold)
                        .with_designs(&study.designs)
                        .with_seed(seed);
                    cfg.imperfect_ranking = study.imperfect_ranking;
                    cfg.imperfect_tau = study.imperfect_tau;
                    let result = run_study(&frame, &cfg)?;
                    target.get_or_insert(result.target);
                    for s in &result.summaries {
                        rows.push(vec![
                            Value::from(s.design.name()),
                            Value::from(s.n),
                            Value::from(s.k),
                            Value::from(s.f_m.as_str()),
                            num(s.eta0),
                            num(s.mse),
                            num(s.mse_se),
                            num(s.bias),
                            num(s.var),
                            opt_num(s.re_vs_dust_srs),
                        ]);
                    }
                }
            }
        }
    }
    let text = out.rows("study", &rows)?;
    let mut resolved = args.clone();
    resolved.study = Some(study);
    let mut outcome = Outcome::new(text, to_config(&resolved));
    if let Some(t) = target {
        outcome
            .extra
            .insert("threshold_c".into(), num(t.threshold_c));
        outcome.extra.insert("theta_n".into(), num(t.theta_n));
    }
    outcome
        .extra
        .insert("n_units".into(), Value::from(frame.len()));
    Ok(outcome)
}

pub fn advise(args: AdviseArgs, out: &mut OutputDir) -> CliResult<Outcome> {
    let theta = require(args.theta, "--theta")?;
    let ks = args.ks.clone().unwrap_or_else(|| vec![2, 3, 4, 5]);
    let n = args.n.unwrap_or(20);
    let constraints = AdviceConstraints {
        max_k: args.max_k,
        max_abs_bias: args.max_bias,
    };
    let advice = advise_k(theta, &ks, n, &constraints)?;
    let lambda = match (args.eta0, args.mean_lag) {
        (Some(e), Some(l)) => Some(lambda_bound(e, n, l)?.bound),
        (None, None) => None,
        _ => {
            return Err(CliError::Input(
                "--eta0 and --mean-lag must be given together".into(),
            ))
        }
    };
    let mut rejected = advice.rejected.clone();
    rejected.sort_by(|a, b| b.re.total_cmp(&a.re).then(a.k.cmp(&b.k)));
    let mut rows = Rows::new([
        "k",
        "feasible",
        "theta_star",
        "re",
        "leading_bias",
        "lambda_bound",
        "reason",
    ]);
    for a in advice.ranked.iter().chain(&rejected) {
        rows.push(vec![
            Value::from(a.k),
            Value::from(a.feasible),
            num(a.theta_star),
            num(a.re),
            num(a.leading_bias),
            opt_num(lambda),
            a.reason.clone().map(Value::from).unwrap_or(Value::Null),
        ]);
    }
    let text = out.rows("advice", &rows)?;
    let mut resolved = args.clone();
    resolved.ks = Some(ks);
    resolved.n = Some(n);
    let mut outcome = Outcome::new(text, to_config(&resolved));
    if let Some(why) = advice.explanation {
        outcome.extra.insert("explanation".into(), Value::from(why));
    }
    Ok(outcome)
}

pub fn thetastar(args: ThetaStarArgs, out: &mut OutputDir) -> CliResult<Outcome> {
    let ks = args.ks.clone().unwrap_or_else(|| (2..=10).collect());
    let mut rows = Rows::new(["k", "theta_star", "theta_star_exact"]);
    for &k in &ks {
        let t = theta_star(k)?;
        rows.push(vec![Value::from(k), Value::from(format!("{t:.4}")), num(t)]);
    }
    let text = out.rows("theta_star", &rows)?;
    Ok(Outcome::new(text, json!({ "ks": ks })))
}
