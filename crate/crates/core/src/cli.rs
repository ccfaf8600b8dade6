//! Command-line front end.
//!
//! ```text
//! panelspec fit      --data F --unit C --time C --y C --x C[,C..] --method pooled|fe|re|wfe
//! panelspec test     --data F --unit C --time C --y C --x C[,C..] --which hausman|weighted|both
//! panelspec simulate --hypothesis null|alt --n N --t T --s S --gammas LIST ... [--out PATH]
//! panelspec generate --hypothesis null|alt --n N --t T --seed U64 ... [--out PATH]
//! ```
//!
//! Results go to standard output (or `--out`) as JSON, optionally CSV.
//! Exit status is 0 on success, 1 for data or estimation failures and 2 for
//! usage errors.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::Error;
use crate::estimators::{fit_fixed_effects, fit_pooled_ols, fit_random_effects_with};
use crate::inference::{fit_statistics, hausman_test, weighted_hausman_test, TestResult};
use crate::mcstudy::{
    contaminate, generate_dataset, test_label, write_study_csv, ContaminationConfig, DgpConfig,
    RngStream, StudyResult, StudyScenario,
};
use crate::panel::{load_long_csv, write_long_csv, ColumnSchema, EstimateResult, PanelDataset};
use crate::wle::{fit_weighted_fixed_effects, Raf, WleConfig};

/// Environment variable capping the simulation worker count (0 = automatic).
pub const THREADS_ENV: &str = "PANELSPEC_THREADS";

#[derive(Debug, Parser)]
#[command(name = "panelspec", version, about = "Panel-data specification tests")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit one estimator on a long-format CSV.
    Fit(FitArgs),
    /// Run the Hausman and/or weighted Hausman test on a long-format CSV.
    Test(TestArgs),
    /// Run a Monte Carlo size/power study.
    Simulate(SimulateArgs),
    /// Write one simulated (optionally contaminated) panel as long-format CSV.
    Generate(GenerateArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    unit: String,
    #[arg(long)]
    time: String,
    #[arg(long)]
    y: String,
    /// Regressor columns, comma separated.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    x: Vec<String>,
}

#[derive(Debug, Args)]
struct WleArgs {
    #[arg(long, default_value_t = 0.5)]
    kappa: f64,
    #[arg(long = "max-iter", default_value_t = 50)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, value_enum, default_value_t = RafArg::Hellinger, hide = true)]
    raf: RafArg,
}

impl WleArgs {
    fn config(&self) -> WleConfig {
        WleConfig {
            kappa: self.kappa,
            max_iterations: self.max_iter,
            tolerance: self.tol,
            raf: match self.raf {
                RafArg::Hellinger => Raf::Hellinger,
                RafArg::Identity => Raf::Identity,
            },
            ..WleConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RafArg {
    Hellinger,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Pooled,
    Fe,
    Re,
    Wfe,
}

#[derive(Debug, Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    method: MethodArg,
    #[command(flatten)]
    wle: WleArgs,
    /// Accepted for interface symmetry; fitting involves no randomness.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Which {
    Hausman,
    Weighted,
    Both,
}

#[derive(Debug, Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum, default_value_t = Which::Both)]
    which: Which,
    #[command(flatten)]
    wle: WleArgs,
    /// Use this quasi-demeaning weight for the random-effects fit.
    #[arg(long = "force-theta", hide = true)]
    force_theta: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HypothesisArg {
    Null,
    Alt,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ContaminationArg {
    None,
    Random,
    Concentrated,
}

#[derive(Debug, Args)]
struct DesignArgs {
    #[arg(long, value_enum, default_value_t = HypothesisArg::Null)]
    hypothesis: HypothesisArg,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long, value_enum, default_value_t = ContaminationArg::None)]
    contamination: ContaminationArg,
    #[arg(long, default_value_t = 0)]
    m: usize,
    #[arg(long)]
    low: Option<f64>,
    #[arg(long)]
    high: Option<f64>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl DesignArgs {
    fn dgp(&self, n: usize, t: usize, hypothesis: HypothesisArg) -> DgpConfig {
        match hypothesis {
            HypothesisArg::Null => DgpConfig::null(n, t, self.seed),
            HypothesisArg::Alt => DgpConfig::alternative(n, t, self.seed),
        }
    }

    fn contamination(&self, scheme: ContaminationArg, m: usize) -> ContaminationConfig {
        let mut cc = match scheme {
            ContaminationArg::None => ContaminationConfig::none(),
            ContaminationArg::Random => ContaminationConfig::random(m),
            ContaminationArg::Concentrated => ContaminationConfig::concentrated(m),
        };
        use crate::mcstudy::Contamination::*;
        if let RandomVertical { low, high } | ConcentratedVertical { low, high } = &mut cc.scheme {
            *low = self.low.unwrap_or(*low);
            *high = self.high.unwrap_or(*high);
        }
        cc
    }

    fn size(&self) -> Result<(usize, usize), CliError> {
        match (self.n, self.t) {
            (Some(n), Some(t)) => Ok((n, t)),
            _ => Err(CliError::Usage("--n and --t are required without --paper-figure".into())),
        }
    }
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[command(flatten)]
    design: DesignArgs,
    /// Monte Carlo replications per scenario (default 1000).
    #[arg(long)]
    s: Option<usize>,
    /// Nominal sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,
    #[arg(long)]
    kappa: Option<f64>,
    /// Expand to one of the preset scenario grids (1 to 5).
    #[arg(long = "paper-figure", value_parser = clap::value_parser!(u8).range(1..=5))]
    paper_figure: Option<u8>,
    /// Output file; format follows --format, else the extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    design: DesignArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Usage(String),
    Run(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Run(e)
    }
}

fn io_err(path: &str, e: io::Error) -> CliError {
    CliError::Run(Error::Io {
        path: path.to_string(),
        message: e.to_string(),
    })
}

/// Parses `args` (including the program name) and runs the command, writing
/// results to `out` and diagnostics to `err`. Returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Fit(a) => cmd_fit(&a, out),
        Command::Test(a) => cmd_test(&a, out),
        Command::Simulate(a) => cmd_simulate(&a, out),
        Command::Generate(a) => cmd_generate(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            2
        }
        Err(CliError::Run(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    let stdout = io::stdout();
    let stderr = io::stderr();
    let mut out = stdout.lock();
    let mut err = stderr.lock();
    run(std::env::args_os(), &mut out, &mut err)
}

fn load(data: &DataArgs) -> Result<PanelDataset, CliError> {
    let schema = ColumnSchema::new(&data.unit, &data.time, &data.y, data.x.iter().cloned());
    Ok(load_long_csv(&data.data, &schema)?)
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Run(Error::Csv(e.to_string())))?;
    writeln!(out, "{text}").map_err(|e| io_err("<stdout>", e))
}

fn estimate_json(ds: &PanelDataset, res: &EstimateResult) -> Value {
    let mut v = json!({
        "method": res.method.to_string(),
        "n_units": ds.n_units(),
        "n_periods": ds.n_periods(),
        "regressors": ds.regressor_names(),
        "beta": res.beta.as_slice(),
        "std_errors": res.std_errors().as_slice(),
        "cov_beta": rows(&res.cov_beta),
        "sigma2_eps": res.sigma2_eps,
        "sigma2_alpha": res.sigma2_alpha,
        "theta": res.variance_components.map(|vc| vc.theta),
        "rss": res.rss,
        "r_squared": res.r_squared,
        "converged": res.converged,
        "iterations": res.iterations,
    });
    if let Some(w) = &res.weights {
        v["min_weight"] = json!(w.min());
        v["weights"] = json!(rows(w));
    }
    v
}

fn cmd_fit(a: &FitArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ds = load(&a.data)?;
    let res = match a.method {
        MethodArg::Pooled => fit_pooled_ols(&ds)?,
        MethodArg::Fe => fit_fixed_effects(&ds)?,
        MethodArg::Re => fit_random_effects_with(&ds, None)?,
        MethodArg::Wfe => fit_weighted_fixed_effects(&ds, &a.wle.config())?,
    };
    match a.format {
        Format::Json => write_json(out, &estimate_json(&ds, &res)),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let se = res.std_errors();
            let run = |w: &mut csv::Writer<&mut dyn Write>| -> csv::Result<()> {
                w.write_record(["term", "estimate", "std_error"])?;
                for (k, name) in ds.regressor_names().iter().enumerate() {
                    w.write_record([name.clone(), res.beta[k].to_string(), se[k].to_string()])?;
                }
                w.flush()?;
                Ok(())
            };
            run(&mut w).map_err(|e| CliError::Run(Error::Csv(e.to_string())))
        }
    }
}

fn test_json(t: &TestResult) -> Value {
    json!({
        "test": test_label(t.kind),
        "statistic": t.statistic,
        "df": t.df,
        "p_value": t.p_value,
        "q": t.q.as_slice(),
        "m_matrix": rows(&t.m_matrix),
        "repaired": t.repaired,
    })
}

fn fit_summary(res: &EstimateResult) -> Result<Value, CliError> {
    let (rss, r2) = fit_statistics(res)?;
    let mut v = json!({
        "beta": res.beta.as_slice(),
        "std_errors": res.std_errors().as_slice(),
        "rss": rss,
        "r_squared": r2,
        "sigma2_eps": res.sigma2_eps,
    });
    if let Some(vc) = res.variance_components {
        v["sigma2_alpha"] = json!(vc.sigma2_alpha);
        v["theta"] = json!(vc.theta);
    }
    if res.weights.is_some() {
        v["converged"] = json!(res.converged);
        v["iterations"] = json!(res.iterations);
    }
    Ok(v)
}

fn cmd_test(a: &TestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let ds = load(&a.data)?;
    let fe = fit_fixed_effects(&ds)?;
    let re = fit_random_effects_with(&ds, a.force_theta)?;
    let mut tests = Vec::new();
    let mut fits = serde_json::Map::new();
    fits.insert("fe".into(), fit_summary(&fe)?);
    fits.insert("re".into(), fit_summary(&re)?);
    if a.which != Which::Weighted {
        tests.push(hausman_test(&fe, &re)?);
    }
    if a.which != Which::Hausman {
        let wfe = fit_weighted_fixed_effects(&ds, &a.wle.config())?;
        fits.insert("wfe".into(), fit_summary(&wfe)?);
        tests.push(weighted_hausman_test(&wfe, &re)?);
    }
    let find = |label: &str| tests.iter().find(|t| test_label(t.kind) == label);
    let table = json!({
        "m_h": find("hausman").map(|t| t.statistic),
        "p_h": find("hausman").map(|t| t.p_value),
        "m_hw": find("weighted").map(|t| t.statistic),
        "p_hw": find("weighted").map(|t| t.p_value),
        "rss_fe": fits["fe"]["rss"],
        "rss_re": fits["re"]["rss"],
        "r2_fe": fits["fe"]["r_squared"],
        "r2_re": fits["re"]["r_squared"],
    });
    match a.format {
        Format::Json => write_json(
            out,
            &json!({
                "n_units": ds.n_units(),
                "n_periods": ds.n_periods(),
                "regressors": ds.regressor_names(),
                "tests": tests.iter().map(test_json).collect::<Vec<_>>(),
                "fits": fits,
                "table": table,
            }),
        ),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            let run = |w: &mut csv::Writer<&mut dyn Write>| -> csv::Result<()> {
                w.write_record(["test", "statistic", "df", "p_value", "repaired"])?;
                for t in &tests {
                    w.write_record([
                        test_label(t.kind).to_string(),
                        t.statistic.to_string(),
                        t.df.to_string(),
                        t.p_value.to_string(),
                        t.repaired.to_string(),
                    ])?;
                }
                w.flush()?;
                Ok(())
            };
            run(&mut w).map_err(|e| CliError::Run(Error::Csv(e.to_string())))
        }
    }
}

const FIG12_GAMMAS: [f64; 4] = [0.05, 0.10, 0.15, 0.20];
const FIG45_GAMMAS: [f64; 7] = [0.01, 0.02, 0.05, 0.10, 0.15, 0.20, 0.25];

fn scenarios(a: &SimulateArgs) -> Result<Vec<StudyScenario>, CliError> {
    let d = &a.design;
    let s = a.s.unwrap_or(1000);
    let wle = WleConfig::with_kappa(a.kappa.unwrap_or(0.5));
    let scenario = |dgp: DgpConfig, contamination: ContaminationConfig, gammas: &[f64]| StudyScenario {
        dgp,
        contamination,
        s,
        gamma_grid: a.gammas.clone().unwrap_or_else(|| gammas.to_vec()),
        wle,
    };
    let list = match a.paper_figure {
        None => {
            let (n, t) = d.size()?;
            vec![scenario(
                d.dgp(n, t, d.hypothesis),
                d.contamination(d.contamination, d.m),
                &[0.05],
            )]
        }
        Some(fig @ 1..=3) => {
            let hyp = if fig == 2 { HypothesisArg::Alt } else { HypothesisArg::Null };
            let ns: &[usize] = if fig == 3 {
                &[30, 75, 150, 200]
            } else {
                &[25, 50, 75, 100, 150, 200]
            };
            ns.iter()
                .map(|&n| scenario(d.dgp(n, 4, hyp), ContaminationConfig::none(), &FIG12_GAMMAS))
                .collect()
        }
        Some(fig) => {
            let hyp = if fig == 5 { HypothesisArg::Alt } else { HypothesisArg::Null };
            let mut v = Vec::new();
            for scheme in [ContaminationArg::Random, ContaminationArg::Concentrated] {
                for m in [15, 30] {
                    v.push(scenario(d.dgp(100, 3, hyp), d.contamination(scheme, m), &FIG45_GAMMAS));
                }
            }
            v
        }
    };
    Ok(list)
}

fn thread_count() -> Result<usize, CliError> {
    match std::env::var(THREADS_ENV) {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Usage(format!("{THREADS_ENV} must be a nonnegative integer, got `{v}`"))),
        _ => Ok(0),
    }
}

#[derive(Serialize)]
struct ScenarioOutput<'a> {
    config: &'a StudyScenario,
    result: &'a StudyResult,
}

fn open_out<'a>(path: &Option<PathBuf>, out: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| io_err(&p.display().to_string(), e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(out)),
    }
}

fn cmd_simulate(a: &SimulateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let list = scenarios(a)?;
    for sc in &list {
        sc.dgp.validate()?;
        sc.contamination.validate(sc.dgp.n_units, sc.dgp.n_periods)?;
        sc.wle.validate()?;
    }
    let threads = thread_count()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let runs: Vec<(StudyScenario, StudyResult)> = pool.install(|| {
        list.into_iter()
            .map(|sc| sc.run().map(|r| (sc, r)))
            .collect::<Result<_, Error>>()
    })?;

    let format = a.format.unwrap_or_else(|| match &a.out {
        Some(p) if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) => Format::Csv,
        _ => Format::Json,
    });
    let mut sink = open_out(&a.out, out)?;
    match format {
        Format::Csv => write_study_csv(&runs, &mut sink)?,
        Format::Json => {
            let doc = json!({
                "scenarios": runs
                    .iter()
                    .map(|(config, result)| ScenarioOutput { config, result })
                    .collect::<Vec<_>>(),
            });
            write_json(&mut sink, &doc)?;
        }
    }
    sink.flush().map_err(|e| io_err("<output>", e))
}

fn cmd_generate(a: &GenerateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let d = &a.design;
    let (n, t) = d.size()?;
    let dgp = d.dgp(n, t, d.hypothesis);
    let cc = d.contamination(d.contamination, d.m);
    cc.validate(n, t)?;
    let mut stream = RngStream::substream(dgp.seed, 0);
    let clean = generate_dataset(&dgp, &mut stream)?;
    let ds = contaminate(&clean, &cc, &mut stream)?;
    let mut sink = open_out(&a.out, out)?;
    write_long_csv(&ds, &mut sink)?;
    sink.flush().map_err(|e| io_err("<output>", e))
}
