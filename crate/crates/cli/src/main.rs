use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cpflow::compare::{compare, fit_exponential, fit_power_law, CompareReport, FitKind, FitReport, Tolerance};
use cpflow::oracle::{collapse, oracle_series, trim, OracleBudget};
use cpflow::pareto::{classify_regime, parse_exact, pareto_front, planarity_check};
use cpflow::series::{compute_series, SeriesTable};
use cpflow::sim::{fmt_f64, monte_carlo, SimConfig, Trajectory};
use cpflow::theory::free::{free_loss, FreeRegime};
use cpflow::theory::ntk::ntk_diag;
use cpflow::theory::nu4::{nu4_threshold, nu4_trajectory, Nu4Params};
use cpflow::theory::sym2::sym2_loss;
use cpflow::{Error, Execution, Scenario, Setting};

#[derive(Parser)]
#[command(name = "cpflow", version, about = "Loss expansion, closed-form theory and simulation for CP tensor models")]
struct Cli {
    /// Write output here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Prefix output with a `# generated` comment line.
    #[arg(long, global = true, value_enum, default_value_t = Switch::Off)]
    timestamp: Switch,
    /// Run module work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Series coefficients Y_0..Y_smax as a text dump.
    Expand {
        #[command(flatten)]
        model: SettingArgs,
        #[arg(long)]
        smax: usize,
        /// Zero target.
        #[arg(long)]
        free: bool,
    },
    /// Pareto-optimal terms of each Y_s as CSV.
    Pareto {
        #[arg(long, required_unless_present = "input")]
        nu: Option<u32>,
        #[arg(long, required_unless_present = "input")]
        scenario: Option<Scenario>,
        #[arg(long, required_unless_present = "input")]
        smax: Option<usize>,
        /// Read a dump written by `expand` instead of expanding.
        #[arg(long, conflicts_with_all = ["smax", "nu", "scenario"])]
        input: Option<PathBuf>,
    },
    /// Leading face of the polygon under the scaling p^a H^b sigma^c.
    Classify {
        #[command(flatten)]
        model: SettingArgs,
        /// Comma-separated exponents a,b,c (decimals or fractions).
        #[arg(long, allow_hyphen_values = true)]
        alpha: String,
    },
    /// Closed-form curves as `t,value` CSV.
    Theory {
        #[command(subcommand)]
        curve: TheoryCmd,
    },
    /// Monte Carlo gradient flow from a JSON config; trajectory CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Simulation against a closed form; JSON report.
    Compare(CompareArgs),
    /// Engine against brute-force Gaussian moments at concrete p, H.
    OracleCheck {
        #[command(flatten)]
        model: SettingArgs,
        #[arg(long)]
        p: usize,
        #[arg(long = "H")]
        h: usize,
        #[arg(long)]
        smax: usize,
        #[arg(long)]
        free: bool,
    },
}

#[derive(Args)]
struct SettingArgs {
    #[arg(long)]
    nu: u32,
    #[arg(long)]
    scenario: Scenario,
}

impl SettingArgs {
    fn get(&self) -> Result<Setting, Error> {
        Setting::new(self.nu, self.scenario)
    }
}

#[derive(Args, Clone)]
struct Grid {
    /// Final time (`theory nu4` takes the final ascent time as a positive number).
    #[arg(long, default_value_t = 4.0)]
    tmax: f64,
    #[arg(long, default_value_t = 201)]
    points: usize,
}

impl Grid {
    fn times(&self, sign: f64) -> Vec<f64> {
        let n = self.points.max(2);
        // `+ 0.0` turns a negative zero into zero
        (0..n).map(|k| sign * self.tmax * k as f64 / (n - 1) as f64 + 0.0).collect()
    }
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Zero-target evolution E[L(t)]/E[L(0)].
    Free {
        #[arg(long)]
        regime: FreeRegime,
        #[command(flatten)]
        model: SettingArgs,
        #[arg(long)]
        p: f64,
        #[arg(long = "H")]
        h: f64,
        #[arg(long)]
        sigma: f64,
        #[arg(long = "T", default_value_t = 1.0)]
        t_scale: f64,
        #[command(flatten)]
        grid: Grid,
    },
    /// SYM nu=2 expected loss.
    Sym2 {
        #[arg(long)]
        p: f64,
        #[arg(long = "H")]
        h: f64,
        /// p sigma^2; alternative to --sigma.
        #[arg(long, conflicts_with = "sigma")]
        psigma2: Option<f64>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long = "T", default_value_t = 1.0)]
        t_scale: f64,
        #[command(flatten)]
        grid: Grid,
    },
    /// Diagonal model entry in the linearized regime, 1 - exp(-rate t).
    Ntk {
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        #[command(flatten)]
        grid: Grid,
    },
    /// SYM nu=4 gradient ascent; times are reported as tau <= 0.
    Nu4 {
        #[arg(long)]
        p: f64,
        #[arg(long = "H")]
        h: f64,
        #[arg(long, required_unless_present = "boundary")]
        sigma: Option<f64>,
        /// Print `p,H,theta,rho_star,sigma_star` instead of a curve.
        #[arg(long)]
        boundary: bool,
        #[command(flatten)]
        grid: Grid,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum TheoryName {
    FreeUnder,
    FreeOver,
    Sym2,
    Nu4,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fit {
    Powerlaw,
    Exponential,
}

#[derive(Args)]
struct CompareArgs {
    /// Simulation config; its parameters also feed the theory.
    #[arg(long)]
    config: PathBuf,
    /// Reuse a trajectory CSV from `simulate` instead of running.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    #[arg(long, value_enum)]
    theory: TheoryName,
    /// Theory points spread evenly over the simulated time range; defaults
    /// to the recorded simulation times.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    rel: f64,
    #[arg(long, default_value_t = 0.0)]
    abs: f64,
    #[arg(long, allow_hyphen_values = true)]
    t_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    t_max: Option<f64>,
    /// Points whose theory value is smaller in magnitude are not judged.
    #[arg(long, default_value_t = 0.0)]
    min_theory: f64,
    /// Also fit the simulated curve over the window (the final decade by default).
    #[arg(long, value_enum)]
    fit: Option<Fit>,
    /// Fail the comparison unless the fitted value is within this relative
    /// distance of the theory fit.
    #[arg(long, default_value_t = 0.1)]
    fit_tol: f64,
}

fn exec(cli: &Cli) -> Execution {
    if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    }
}

fn curve_csv(points: impl IntoIterator<Item = (f64, f64)>) -> String {
    let mut s = String::from("t,value\n");
    for (t, v) in points {
        s.push_str(&format!("{},{}\n", fmt_f64(t), fmt_f64(v)));
    }
    s
}

fn theory_curve(curve: &TheoryCmd) -> Result<String, Error> {
    match curve {
        TheoryCmd::Free { regime, model, p, h, sigma, t_scale, grid } => {
            let st = model.get()?;
            let pts = grid
                .times(1.0)
                .into_iter()
                .map(|t| Ok((t, free_loss(st, *regime, *p, *h, *sigma, *t_scale, t)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            Ok(curve_csv(pts))
        }
        TheoryCmd::Sym2 { p, h, psigma2, sigma, t_scale, grid } => {
            let sigma = match (psigma2, sigma) {
                (Some(z), None) => (z / p).sqrt(),
                (None, Some(s)) => *s,
                _ => return Err(Error::InvalidSetting("give --psigma2 or --sigma".into())),
            };
            let pts = grid
                .times(1.0)
                .into_iter()
                .map(|t| Ok((t, sym2_loss(t, *p, *h, sigma, *t_scale)?)))
                .collect::<Result<Vec<_>, Error>>()?;
            Ok(curve_csv(pts))
        }
        TheoryCmd::Ntk { rate, grid } => Ok(curve_csv(grid.times(1.0).into_iter().map(|t| (t, ntk_diag(*rate, t))))),
        TheoryCmd::Nu4 { p, h, sigma, boundary, grid } => {
            let theta = 1.0 + 3.0 * h / (p * p);
            if *boundary {
                let rho = nu4_threshold(theta)?;
                return Ok(format!(
                    "p,H,theta,rho_star,sigma_star\n{},{},{},{},{}\n",
                    fmt_f64(*p),
                    fmt_f64(*h),
                    fmt_f64(theta),
                    fmt_f64(rho),
                    fmt_f64((rho / p.powi(3)).powf(0.25))
                ));
            }
            let sigma = sigma.ok_or_else(|| Error::InvalidSetting("--sigma is required".into()))?;
            let traj = nu4_trajectory(Nu4Params { p: *p, h: *h, sigma }, &grid.times(-1.0))?;
            let mut s = curve_csv(traj.tau.iter().copied().zip(traj.loss.iter().copied()));
            if let Some(tc) = traj.tau_crit {
                s.push_str(&format!("# blow-up at tau = {}\n", fmt_f64(tc)));
            }
            Ok(s)
        }
    }
}

fn theory_values(name: TheoryName, cfg: &SimConfig, times: &[f64]) -> Result<Vec<(f64, f64)>, Error> {
    let m = &cfg.model;
    let st = Setting::new(m.nu, m.scenario)?;
    let (p, h) = (m.p as f64, m.h as f64);
    match name {
        TheoryName::FreeUnder | TheoryName::FreeOver => {
            let regime = if matches!(name, TheoryName::FreeUnder) { FreeRegime::Under } else { FreeRegime::Over };
            // the shape is normalized to E[L(0)] = 1
            let l0 = cpflow::theory::free::free_initial_loss(st, regime, p, h, m.sigma);
            times.iter().map(|&t| Ok((t, l0 * free_loss(st, regime, p, h, m.sigma, m.t_scale, t)?))).collect()
        }
        TheoryName::Sym2 => {
            if st != Setting::new(2, Scenario::Sym)? {
                return Err(Error::InvalidSetting("sym2 theory needs nu = 2, scenario sym".into()));
            }
            times.iter().map(|&t| Ok((t, sym2_loss(t, p, h, m.sigma, m.t_scale)?))).collect()
        }
        TheoryName::Nu4 => {
            if st != Setting::new(4, Scenario::Sym)? {
                return Err(Error::InvalidSetting("nu4 theory needs nu = 4, scenario sym".into()));
            }
            let taus: Vec<f64> = times.iter().map(|t| t / m.t_scale).collect();
            let traj = nu4_trajectory(Nu4Params { p, h, sigma: m.sigma }, &taus)?;
            Ok(traj.tau.iter().zip(&traj.loss).map(|(tau, l)| (tau * m.t_scale, *l)).collect())
        }
    }
}

fn cmd_compare(args: &CompareArgs, exec: Execution) -> Result<(CompareReport, String), Error> {
    let cfg = SimConfig::from_json(&fs::read_to_string(&args.config)?)?;
    let traj = match &args.trajectory {
        Some(path) => Trajectory::from_csv(&fs::read_to_string(path)?)?,
        None => monte_carlo(&cfg, exec)?,
    };
    let times: Vec<f64> = match args.points {
        Some(n) => {
            let n = n.max(2);
            (0..n).map(|k| cfg.t_max * k as f64 / (n - 1) as f64).collect()
        }
        None => traj.times.clone(),
    };
    let theory = theory_values(args.theory, &cfg, &times)?;
    let end = cfg.t_max;
    let tol = Tolerance {
        rel: args.rel,
        abs: args.abs,
        t_min: args.t_min.unwrap_or(f64::NEG_INFINITY),
        t_max: args.t_max.unwrap_or(f64::INFINITY),
        min_theory: args.min_theory,
    };
    let mut report = compare(&theory, &traj, tol)?;
    if let Some(fit) = args.fit {
        // default window: the final decade of |t|
        let (w0, w1) = match (args.t_min, args.t_max) {
            (Some(a), Some(b)) => (a, b),
            _ if end > 0.0 => (end / 10.0, end),
            _ => (end, end / 10.0),
        };
        let in_window = |t: f64| t >= w0 && t <= w1;
        let (st, sv): (Vec<f64>, Vec<f64>) =
            traj.times.iter().zip(&traj.loss.mean).filter(|(t, _)| in_window(**t)).map(|(t, v)| (*t, *v)).unzip();
        let (tt, tv): (Vec<f64>, Vec<f64>) = theory.iter().filter(|(t, _)| in_window(*t)).copied().unzip();
        let (kind, simulated, expected) = match fit {
            Fit::Powerlaw => {
                (FitKind::Powerlaw, fit_power_law(&st, &sv, w0, w1)?, fit_power_law(&tt, &tv, w0, w1)?)
            }
            Fit::Exponential => (FitKind::Exponential, fit_exponential(&st, &sv)?, fit_exponential(&tt, &tv)?),
        };
        let fit_ok = ((simulated - expected) / expected).abs() <= args.fit_tol;
        report.pass &= fit_ok;
        report.fit = Some(FitReport { kind, simulated, theory: expected });
    }
    let summary = format!(
        "{}: max |z| {:.3}, max relative deviation {:.4}{}",
        if report.pass { "pass" } else { "fail" },
        report.max_abs_z,
        report.max_rel_dev,
        report.fit.as_ref().map(|f| format!(", fit {:.4} vs theory {:.4}", f.simulated, f.theory)).unwrap_or_default()
    );
    Ok((report, summary))
}

fn cmd_oracle(model: &SettingArgs, p: usize, h: usize, smax: usize, free: bool, exec: Execution) -> Result<(String, bool), Error> {
    let st = model.get()?;
    let table = compute_series(st, smax, free, exec)?;
    let oracle = oracle_series(st, p, h, smax, free, OracleBudget::default())?;
    let mut out = String::from("s,equal,engine,oracle\n");
    let mut all = true;
    for s in 0..=smax {
        let e = collapse(&table.ys[s], p, h);
        let o = trim(oracle.ys[s].clone());
        let join = |v: &[num_rational::BigRational]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ");
        all &= e == o;
        out.push_str(&format!("{s},{},{},{}\n", e == o, join(&e), join(&o)));
    }
    Ok((out, all))
}

fn cmd_pareto(setting: Option<(u32, Scenario)>, smax: Option<usize>, input: &Option<PathBuf>, exec: Execution) -> Result<String, Error> {
    let table = match (input, setting) {
        (Some(path), _) => SeriesTable::parse(&fs::read_to_string(path)?)?,
        (None, Some((nu, sc))) => compute_series(Setting::new(nu, sc)?, smax.unwrap_or(0), false, exec)?,
        (None, None) => return Err(Error::InvalidSetting("--nu and --scenario are required".into())),
    };
    let mut out = String::from("s,q,n,l,coefficient\n");
    let mut residual = Vec::new();
    for (s, y) in table.ys.iter().enumerate() {
        let front = pareto_front(y);
        for t in &front {
            out.push_str(&format!("{s},{},{},{},{}\n", t.q, t.n, t.l, t.coeff));
        }
        residual.push(planarity_check(table.setting, &front)?.residual.to_string());
    }
    out.push_str(&format!("# plane residual per s: {}\n", residual.join(" ")));
    Ok(out)
}

fn cmd_classify(model: &SettingArgs, alpha: &str) -> Result<String, Error> {
    let parts: Vec<&str> = alpha.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Parse(format!("--alpha needs three comma-separated values, got '{alpha}'")));
    }
    let a = [parse_exact(parts[0])?, parse_exact(parts[1])?, parse_exact(parts[2])?];
    let r = classify_regime(model.get()?, &a)?;
    let mut s = format!("face {}", r.face);
    if let Some(i) = r.interpretation {
        s.push_str(&format!(" ({i})"));
    }
    s.push_str(&format!(", natural T = {}", r.natural_t));
    if r.degenerate {
        s.push_str(" [leading set is not a face]");
    }
    s.push('\n');
    Ok(s)
}

enum Outcome {
    Done(String),
    /// Output written, but the check it reports did not pass.
    Failed(String),
}

fn dispatch(cli: &Cli) -> Result<Outcome, Error> {
    let exec = exec(cli);
    Ok(match &cli.cmd {
        Command::Expand { model, smax, free } => Outcome::Done(compute_series(model.get()?, *smax, *free, exec)?.dump()),
        Command::Pareto { nu, scenario, smax, input } => {
            Outcome::Done(cmd_pareto(nu.zip(*scenario), *smax, input, exec)?)
        }
        Command::Classify { model, alpha } => Outcome::Done(cmd_classify(model, alpha)?),
        Command::Theory { curve } => Outcome::Done(theory_curve(curve)?),
        Command::Simulate { config } => {
            let cfg = SimConfig::from_json(&fs::read_to_string(config)?)?;
            let traj = monte_carlo(&cfg, exec)?;
            let mut s = format!("# config {}\n", traj.config_hash);
            for (seed, step) in &traj.diverged {
                s.push_str(&format!("# seed {seed} diverged at step {step}\n"));
            }
            s.push_str(&traj.to_csv());
            Outcome::Done(s)
        }
        Command::Compare(args) => {
            let (report, summary) = cmd_compare(args, exec)?;
            eprintln!("{summary}");
            let json = serde_json::to_string_pretty(&report)? + "\n";
            if report.pass {
                Outcome::Done(json)
            } else {
                Outcome::Failed(json)
            }
        }
        Command::OracleCheck { model, p, h, smax, free } => {
            let (out, ok) = cmd_oracle(model, *p, *h, *smax, *free, exec)?;
            if ok {
                Outcome::Done(out)
            } else {
                Outcome::Failed(out)
            }
        }
    })
}

fn emit(cli: &Cli, body: &str) -> Result<(), Error> {
    let mut text = String::new();
    if cli.timestamp == Switch::On {
        let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        text.push_str(&format!("# generated {secs}\n"));
    }
    text.push_str(body);
    match &cli.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = cpflow::exec::threads_from_env() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    let result = dispatch(&cli).and_then(|o| match o {
        Outcome::Done(s) => emit(&cli, &s).map(|_| true),
        Outcome::Failed(s) => emit(&cli, &s).map(|_| false),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
