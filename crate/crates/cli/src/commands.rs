use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use steinselect::data::{load_csv, load_features_csv, read_matrix_csv, simulate as simulate_data};
use steinselect::metrics::{run_replications, write_summary_csv, HoldOut};
use steinselect::moment::SelectionDocument;
use steinselect::pipeline::{run_pipeline, Method, PipelineOutcome};
use steinselect::refit::{evaluate_mse, train, Optimizer, RefitModel};
use steinselect::rng::child_seed;
use steinselect::score::{CovarianceSource, Estimator};
use steinselect::screening::ScreeningRound;
use steinselect::tuning::{BicReport, EigengapReport, DEFAULT_BIC_LAMBDA, DEFAULT_GAMMA_REL, DEFAULT_K_MAX};
use steinselect::{
    Case, CovarianceChoice, CovarianceModel, Dataset, Design, Error, GroundTruth, K1Choice,
    PipelineConfig, RefitConfig, ScreeningConfig, ScreeningTrace, SelectionRule, SimSpec,
    SparsityChoice,
};

use crate::config::{Auto, CovSetting, RunConfig};
use crate::{
    BenchmarkCmd, CliError, Globals, PredictCmd, RefitCmd, ScreenCmd, ScreeningArgs, SelectCmd,
    SelectionArgs, SimulateCmd,
};

type Result<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn response_name<'a>(flag: &'a Option<String>, cfg: &'a RunConfig) -> &'a str {
    flag.as_deref().or(cfg.response.as_deref()).unwrap_or("y")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn refit_config(cfg: &RunConfig, seed: u64) -> RefitConfig {
    RefitConfig {
        seed,
        ..cfg.refit.clone().unwrap_or_default()
    }
}

/// Resolves the selection settings (flags over config over defaults).
fn pipeline_config(args: &SelectionArgs, cfg: &RunConfig, seed: u64) -> Result<PipelineConfig> {
    let sec = &cfg.selection;
    let k1 = match args.k1.or(sec.k1).unwrap_or(Auto::Auto) {
        Auto::Value(k) => K1Choice::Fixed(k),
        Auto::Auto => K1Choice::Auto {
            k_max: args.k_max.or(sec.k_max).unwrap_or(DEFAULT_K_MAX),
            gamma_rel: sec.gamma_rel.unwrap_or(DEFAULT_GAMMA_REL),
            rule: args.k1_rule.or(sec.k1_rule).unwrap_or_default(),
        },
    };
    let pick = |s: Option<Auto<usize>>, kappa: Option<f64>, level: &str| match (s, kappa) {
        (Some(_), Some(_)) => Err(invalid(format!("{level}: s and kappa are mutually exclusive"))),
        (s, Some(k)) => Ok(Some((s, Some(k)))),
        (Some(s), None) => Ok(Some((Some(s), None))),
        (None, None) => Ok(None),
    };
    let chosen = match pick(args.s, args.kappa, "flags")? {
        Some(c) => c,
        None => pick(sec.s, sec.kappa, "config")?.unwrap_or((Some(Auto::Auto), None)),
    };
    let sparsity = match chosen {
        (_, Some(kappa)) => SparsityChoice::Threshold(kappa),
        (Some(Auto::Value(s)), None) => SparsityChoice::TopS(s),
        _ => SparsityChoice::Bic {
            grid: args
                .s_grid
                .as_ref()
                .map(|g| g.0.clone())
                .or_else(|| sec.s_grid.clone())
                .unwrap_or_else(|| (1..=10).collect()),
            lambda: args.bic_lambda.or(sec.bic_lambda).unwrap_or(DEFAULT_BIC_LAMBDA),
        },
    };
    let pc = PipelineConfig {
        covariance: CovarianceChoice::Auto,
        k1,
        sparsity,
        method: Method::Plain,
        refit: refit_config(cfg, seed),
        center_response: args.center_response || sec.center_response.unwrap_or(false),
    };
    pc.validate()?;
    Ok(pc)
}

fn cov_setting(args: &SelectionArgs, cfg: &RunConfig) -> Result<CovSetting> {
    match (&args.cov, &cfg.selection.cov) {
        (Some(c), _) => Ok(c.clone()),
        (None, Some(text)) => text.parse().map_err(invalid),
        (None, None) => Ok(CovSetting::Auto),
    }
}

fn data_source(setting: &CovSetting) -> Result<CovarianceSource> {
    Ok(match setting {
        CovSetting::Sample => CovarianceSource::Estimated(Estimator::Sample),
        CovSetting::LedoitWolf => CovarianceSource::Estimated(Estimator::LedoitWolf),
        CovSetting::Auto => CovarianceSource::Estimated(Estimator::Auto),
        CovSetting::Known => {
            return Err(invalid("--cov known needs a file on real data: use known:<path>"))
        }
        CovSetting::KnownFile(path) => {
            let f = File::open(path).map_err(|e| {
                invalid(format!("cannot read covariance {}: {e}", path.display()))
            })?;
            let sigma = read_matrix_csv(std::io::BufReader::new(f))?;
            if sigma.nrows() != sigma.ncols() {
                return Err(CliError::Core(Error::Dimension {
                    context: "known covariance (square)".into(),
                    expected: sigma.nrows(),
                    found: sigma.ncols(),
                }));
            }
            CovarianceSource::Known(CovarianceModel::known(sigma)?)
        }
    })
}

fn simulation_choice(setting: &CovSetting) -> Result<CovarianceChoice> {
    Ok(match setting {
        CovSetting::Sample => CovarianceChoice::Sample,
        CovSetting::LedoitWolf => CovarianceChoice::LedoitWolf,
        CovSetting::Auto => CovarianceChoice::Auto,
        CovSetting::Known => CovarianceChoice::Known,
        CovSetting::KnownFile(_) => {
            return Err(invalid("benchmarks use the generator covariance: use --cov known"))
        }
    })
}

/// Screening settings for a sample of size `n`.
fn screening_config(args: &ScreeningArgs, cfg: &RunConfig, n: usize) -> Result<ScreeningConfig> {
    let sec = &cfg.screening;
    let zeta = args.zeta.or(sec.zeta).unwrap_or(Auto::Auto);
    let p0 = args.p0.or(sec.p0).unwrap_or(Auto::Auto);
    let auto = ScreeningConfig::auto();
    let mut sc = match (zeta, p0) {
        (Auto::Auto, Auto::Auto) => auto,
        (z, p) => {
            let (az, ap) = auto.resolve(n);
            let z = if let Auto::Value(z) = z { z } else { az };
            let p = if let Auto::Value(p) = p { p } else { ap };
            ScreeningConfig::fixed(z, p)
        }
    };
    if let Some(r) = args.max_rounds.or(sec.max_rounds) {
        sc.max_rounds = r;
    }
    sc.validate()?;
    Ok(sc)
}

/// The selection document written by `select` and `screen`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionFile {
    #[serde(flatten)]
    pub selection: SelectionDocument,
    pub n: usize,
    pub p: usize,
    pub covariance: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eigengap: Option<EigengapReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bic: Option<BicReport>,
}

#[derive(Debug, Serialize)]
struct TraceFile<'a> {
    zeta: f64,
    p0: usize,
    sizes: Vec<usize>,
    rounds: &'a [ScreeningRound],
    final_indices: &'a [usize],
    final_ids: Vec<String>,
}

fn write_trace(path: &Path, trace: &ScreeningTrace, sc: &ScreeningConfig, d: &Dataset) -> Result<()> {
    let (zeta, p0) = sc.resolve(d.n());
    write_json(
        path,
        &TraceFile {
            zeta,
            p0,
            sizes: trace.sizes(),
            rounds: &trace.rounds,
            final_indices: &trace.final_indices,
            final_ids: trace
                .final_indices
                .iter()
                .map(|&j| d.feature_ids()[j].clone())
                .collect(),
        },
    )
}

fn rule_text(rule: SelectionRule) -> String {
    match rule {
        SelectionRule::TopS { s } => format!("top {s}"),
        SelectionRule::Threshold { kappa } => format!("score >= {kappa}"),
    }
}

fn report(d: &Dataset, cov: &CovSetting, out: &PipelineOutcome) {
    let r = &out.result;
    println!("n = {}, p = {}, covariance = {cov}", d.n(), d.p());
    if let Some(t) = &out.trace {
        println!("screening sizes: {:?}", t.sizes());
    }
    match &out.eigengap {
        Some(g) => println!("k1 = {} (eigengap ratio, k_max = {})", r.k1_used, g.k_max),
        None => println!("k1 = {}", r.k1_used),
    }
    if let Some(b) = &out.bic {
        let table: Vec<String> = b.candidates.iter().map(|c| format!("{}:{:.3}", c.s, c.bic)).collect();
        println!("bic: {}", table.join(" "));
    }
    println!("rule: {}", rule_text(r.rule));
    let shown: Vec<String> = r
        .selected
        .iter()
        .map(|&j| format!("{} ({:.4})", d.feature_ids()[j], r.column_scores[j]))
        .collect();
    println!("selected ({}): {}", r.selected.len(), shown.join(", "));
    if r.empty_selection {
        println!("warning: no feature reached the threshold");
    }
}

fn run_selection(cmd: &SelectCmd, g: &Globals, screening: Option<&ScreeningArgs>, trace_path: Option<&Path>) -> Result<()> {
    let cfg = &g.config;
    let mut pc = pipeline_config(&cmd.selection, cfg, g.seed)?;
    let cov = cov_setting(&cmd.selection, cfg)?;
    let d = load_csv(&cmd.data, response_name(&cmd.response, cfg))?;
    let mut sc = None;
    if let Some(args) = screening {
        let c = screening_config(args, cfg, d.n())?;
        pc.method = Method::Screened(c);
        sc = Some(c);
    }
    let source = data_source(&cov)?;
    let out = match run_pipeline(&d, &source, &pc) {
        Ok(out) => out,
        Err(Error::IterationLimit { rounds, remaining, trace }) => {
            if let (Some(path), Some(c)) = (trace_path, &sc) {
                write_trace(path, &trace, c, &d)?;
            }
            return Err(Error::IterationLimit { rounds, remaining, trace }.into());
        }
        Err(e) => return Err(e.into()),
    };
    if let (Some(path), Some(c), Some(t)) = (trace_path, &sc, &out.trace) {
        write_trace(path, t, c, &d)?;
    }
    if let (Some(path), Some(g)) = (&cmd.eigengap_csv, &out.eigengap) {
        g.write_csv(BufWriter::new(File::create(path)?))?;
    }
    if let (Some(path), Some(b)) = (&cmd.bic_csv, &out.bic) {
        b.write_csv(BufWriter::new(File::create(path)?))?;
    }
    let doc = SelectionFile {
        selection: out.result.to_document(d.feature_ids()),
        n: d.n(),
        p: d.p(),
        covariance: cov.to_string(),
        eigengap: out.eigengap.clone(),
        bic: out.bic.clone(),
    };
    write_json(&cmd.out, &doc)?;
    report(&d, &cov, &out);
    Ok(())
}

pub fn select(cmd: &SelectCmd, g: &Globals) -> Result<()> {
    run_selection(cmd, g, None, None)
}

pub fn screen(cmd: &ScreenCmd, g: &Globals) -> Result<()> {
    run_selection(&cmd.select, g, Some(&cmd.screening), Some(&cmd.trace))
}

fn parse_case(k: u8) -> Result<Case> {
    Case::from_number(k).ok_or_else(|| invalid(format!("case must be 1 to 5, got {k}")))
}

#[derive(Debug, Serialize)]
struct TruthFile<'a> {
    spec: &'a SimSpec,
    support_ids: Vec<String>,
    #[serde(flatten)]
    truth: &'a GroundTruth,
}

pub fn simulate(cmd: &SimulateCmd, g: &Globals) -> Result<()> {
    let sec = &g.config.simulation;
    let case = parse_case(cmd.case.or(sec.case).unwrap_or(1))?;
    let n = cmd.n.or(sec.n).ok_or_else(|| invalid("--n is required"))?;
    let p = cmd.p.or(sec.p).ok_or_else(|| invalid("--p is required"))?;
    let mut spec = SimSpec::new(case, n, p, g.seed);
    if let Some(s) = cmd.s.or(sec.s) {
        spec.s = s;
    }
    if let Some(k) = cmd.k1.or(sec.k1) {
        spec.k1 = k;
    }
    if let Some(r) = cmd.rho.or(sec.rho) {
        spec.rho = r;
    }
    if let Some(design) = cmd.design.as_ref().or(sec.design.as_ref()) {
        spec.design = design.parse()?;
    }
    if let Some(sd) = cmd.noise_sd.or(sec.noise_sd) {
        spec.noise_sd = sd;
    }
    if let Some(w) = &cmd.weight_norm {
        spec.weight_norm = w.parse()?;
    } else if let Some(w) = sec.weight_norm {
        spec.weight_norm = w;
    }
    spec.validate()?;
    let (d, truth) = simulate_data(&spec)?;
    d.save_csv(&cmd.out, response_name(&None, &g.config))?;
    let support_ids = truth.support.iter().map(|&j| d.feature_ids()[j].clone()).collect();
    write_json(
        &cmd.truth,
        &TruthFile {
            spec: &spec,
            support_ids,
            truth: &truth,
        },
    )?;
    println!(
        "wrote {} (n = {n}, p = {p}) and {}; support {:?}",
        cmd.out.display(),
        cmd.truth.display(),
        truth.support
    );
    Ok(())
}

pub fn benchmark(cmd: &BenchmarkCmd, g: &Globals) -> Result<()> {
    let cfg = &g.config;
    let sec = &cfg.benchmark;
    let cases: Vec<usize> = cmd
        .cases
        .as_ref()
        .map(|l| l.0.clone())
        .or_else(|| sec.cases.as_ref().map(|c| c.iter().map(|&k| k as usize).collect()))
        .unwrap_or_else(|| vec![1]);
    let ns = cmd.n.as_ref().map(|l| l.0.clone()).or_else(|| sec.n.clone()).unwrap_or_default();
    let ps = cmd.p.as_ref().map(|l| l.0.clone()).or_else(|| sec.p.clone()).unwrap_or_default();
    let rhos = cmd.rho.as_ref().map(|l| l.0.clone()).or_else(|| sec.rho.clone()).unwrap_or_else(|| vec![0.0]);
    let designs = cmd
        .design
        .as_ref()
        .map(|l| l.0.clone())
        .or_else(|| sec.design.clone())
        .unwrap_or_else(|| vec!["gaussian".into()]);
    let methods = cmd
        .methods
        .as_ref()
        .map(|l| l.0.clone())
        .or_else(|| sec.methods.clone())
        .unwrap_or_else(|| vec!["plain".into()]);
    let reps = cmd.replications.or(sec.replications).unwrap_or(20);
    if [cases.len(), ns.len(), ps.len(), rhos.len(), designs.len(), methods.len()].contains(&0) {
        return Err(invalid("empty benchmark grid: cases, n, p, rho, design and methods all need values"));
    }
    if reps == 0 {
        return Err(invalid("replications must be >= 1"));
    }
    let designs: Vec<Design> = designs.iter().map(|d| d.parse()).collect::<std::result::Result<_, _>>()?;
    for m in &methods {
        if m != "plain" && m != "screened" {
            return Err(invalid(format!("unknown method {m:?} (expected plain or screened)")));
        }
    }
    let mut base = pipeline_config(&cmd.selection, cfg, g.seed)?;
    base.covariance = simulation_choice(&cov_setting(&cmd.selection, cfg)?)?;
    let holdout = match cmd.holdout_n.or(sec.holdout_n).unwrap_or(0) {
        0 => None,
        n_test => Some(HoldOut {
            n_test,
            refit: refit_config(cfg, g.seed),
        }),
    };
    let seeds: Vec<u64> = (0..reps as u64).map(|r| child_seed(g.seed, r)).collect();

    let mut summaries = Vec::new();
    for &case in &cases {
        let case = parse_case(u8::try_from(case).unwrap_or(0))?;
        for &n in &ns {
            for &p in &ps {
                for &rho in &rhos {
                    for &design in &designs {
                        let mut spec = SimSpec::new(case, n, p, 0);
                        spec.rho = rho;
                        spec.design = design;
                        if let Some(s) = sec.s {
                            spec.s = s;
                        }
                        if let Some(k) = sec.k1 {
                            spec.k1 = k;
                        }
                        if let Some(sd) = sec.noise_sd {
                            spec.noise_sd = sd;
                        }
                        for m in &methods {
                            let mut pc = base.clone();
                            if m == "screened" {
                                pc.method = Method::Screened(screening_config(&cmd.screening, cfg, n)?);
                            }
                            let s = run_replications(&spec, &pc, &seeds, holdout.as_ref())?;
                            println!(
                                "case {} n {n} p {p} rho {rho} {design} {m}: tpr {:.3} fpr {:.4} failures {}",
                                case, s.tpr_mean, s.fpr_mean, s.failures
                            );
                            summaries.push(s);
                        }
                    }
                }
            }
        }
    }
    let mut out = BufWriter::new(File::create(&cmd.out)?);
    write_summary_csv(&summaries, &mut out)?;
    out.flush()?;
    if let Some(path) = &cmd.records {
        write_json(path, &summaries)?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct SelectedIds {
    selected: Vec<String>,
}

pub fn refit(cmd: &RefitCmd, g: &Globals) -> Result<()> {
    let d = load_csv(&cmd.data, response_name(&cmd.response, &g.config))?;
    let text = std::fs::read_to_string(&cmd.selection)?;
    let ids: SelectedIds = serde_json::from_str(&text)
        .map_err(|e| invalid(format!("invalid selection file {}: {e}", cmd.selection.display())))?;
    if ids.selected.is_empty() {
        return Err(invalid("the selection is empty; nothing to refit"));
    }
    let selected = ids
        .selected
        .iter()
        .map(|id| {
            d.index_of(id)
                .ok_or_else(|| invalid(format!("selected feature {id:?} is not a column of the data")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rc = refit_config(&g.config, g.seed);
    if let Some(h) = &cmd.hidden {
        rc.hidden = h.0.clone();
    }
    if let Some(e) = cmd.epochs {
        rc.epochs = e;
    }
    if let Some(b) = cmd.batch_size {
        rc.batch_size = b;
    }
    if let Some(lr) = cmd.learning_rate {
        rc.learning_rate = lr;
    }
    let momentum = match (cmd.momentum, rc.optimizer) {
        (Some(m), _) => m,
        (None, Optimizer::SgdMomentum { momentum }) => momentum,
        (None, Optimizer::Adam) => 0.9,
    };
    match cmd.optimizer.as_deref() {
        Some("sgd") => rc.optimizer = Optimizer::SgdMomentum { momentum },
        Some("adam") => rc.optimizer = Optimizer::Adam,
        Some(other) => return Err(invalid(format!("unknown optimizer {other:?} (expected sgd or adam)"))),
        None => {
            if let Optimizer::SgdMomentum { .. } = rc.optimizer {
                rc.optimizer = Optimizer::SgdMomentum { momentum };
            }
        }
    }
    rc.validate()?;
    let model = train(&d, &selected, &rc)?;
    std::fs::write(&cmd.out, model.to_json()? + "\n")?;
    println!(
        "trained on {} features, {} epochs: train mse {} (initial {})",
        selected.len(),
        rc.epochs,
        model.final_mse,
        model.initial_mse
    );
    Ok(())
}

pub fn predict(cmd: &PredictCmd, g: &Globals) -> Result<()> {
    let text = std::fs::read_to_string(&cmd.model)?;
    let model = RefitModel::from_json(&text)?;
    let (d, has_y) = load_features_csv(&cmd.data, response_name(&cmd.response, &g.config))?;
    let pred = model.predict_dataset(&d)?;
    let mut out = BufWriter::new(File::create(&cmd.out)?);
    writeln!(out, "y_hat")?;
    for v in &pred {
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    if has_y {
        println!("mse {}", evaluate_mse(&model, &d)?);
    }
    println!("wrote {} predictions to {}", pred.len(), cmd.out.display());
    Ok(())
}
