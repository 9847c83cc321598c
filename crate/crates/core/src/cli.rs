//! `ssc` command line: JSON config plus flag overrides, five subcommands,
//! CSV/JSON writers.
//!
//! Exit codes: 0 success, 1 failed verification or I/O failure, 2 bad
//! configuration.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::boundaries::build_table;
use crate::error::Error;
use crate::model::Model;
use crate::simulate::{mc_cost, McConfig, Policy};
use crate::transform::obstacle_h;
use crate::value::Slice;
use crate::verify::{self, linspace, logspace, VerifyGrid};
use crate::BoundaryTable;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grids {
    pub c_min: f64,
    pub c_max: f64,
    pub n_c: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub n_x: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub n_y: usize,
}

impl Default for Grids {
    fn default() -> Self {
        Grids {
            c_min: 0.0,
            c_max: 1.0,
            n_c: 256,
            x_min: -3.0,
            x_max: 3.0,
            n_x: 400,
            y_min: 1e-4,
            y_max: 50.0,
            n_y: 400,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub bridge_correction: bool,
    pub policy: String,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            n_paths: 100_000,
            dt: 1e-3,
            horizon: 30.0,
            seed: 7,
            bridge_correction: true,
            policy: "optimal".into(),
        }
    }
}

/// State used by `simulate` (both fields) and `geometry` (`c` only).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Point {
    pub x: f64,
    pub c: f64,
}

impl Default for Point {
    fn default() -> Self {
        Point { x: 0.0, c: 0.55 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub lambda: f64,
    pub a: f64,
    pub grids: Grids,
    pub mc: McSection,
    pub point: Point,
    /// Output file; stdout when absent.
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            lambda: 0.5,
            a: 0.4,
            grids: Grids::default(),
            mc: McSection::default(),
            point: Point::default(),
            out: None,
        }
    }
}

/// Config after validation.
#[derive(Debug, Clone)]
pub struct Validated {
    pub model: Model,
    pub mc: McConfig,
    pub policy: Policy,
    pub config: RunConfig,
}

fn range_ok(name: &str, lo: f64, hi: f64, n: usize) -> Result<(), Error> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::Config(format!(
            "{name}: need finite min <= max, got [{lo}, {hi}]"
        )));
    }
    if n == 0 || (n == 1 && lo != hi) {
        return Err(Error::Config(format!(
            "{name}: {n} points cannot span [{lo}, {hi}]"
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn validate(self) -> Result<Validated, Error> {
        let model = Model::quadratic(self.lambda, self.a)?;
        let g = &self.grids;
        range_ok("c grid", g.c_min, g.c_max, g.n_c)?;
        if g.c_min < 0.0 || g.c_max > 1.0 {
            return Err(Error::Config("c grid must lie in [0, 1]".into()));
        }
        range_ok("x grid", g.x_min, g.x_max, g.n_x)?;
        range_ok("y grid", g.y_min, g.y_max, g.n_y)?;
        if g.y_min <= 0.0 {
            return Err(Error::Config("y grid must be positive".into()));
        }
        if !self.point.x.is_finite() || !(0.0..=1.0).contains(&self.point.c) {
            return Err(Error::Config(format!(
                "point ({}, {}) needs finite x and c in [0, 1]",
                self.point.x, self.point.c
            )));
        }
        let policy: Policy = self.mc.policy.parse()?;
        // Checked against the model by `simulate` only; the other commands
        // ignore this section.
        let mc = McConfig {
            n_paths: self.mc.n_paths,
            dt: self.mc.dt,
            horizon: self.mc.horizon,
            seed: self.mc.seed,
            bridge_correction: self.mc.bridge_correction,
        };
        Ok(Validated {
            model,
            mc,
            policy,
            config: self,
        })
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "ssc",
    version,
    about = "Free boundaries, value function and Monte Carlo checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// CSV of γ̂, β̂ and the contact points over the c grid
    Boundaries,
    /// CSV of W, W_x, W_c and the region over the (c, x) grid
    Value,
    /// JSON report of the invariant suite; exit 1 if any check fails
    Verify,
    /// JSON Monte Carlo cost estimate for one policy at one state
    Simulate,
    /// CSV of the obstacle H and its minorant Q at one c
    Geometry,
}

#[derive(Debug, Args)]
struct Flags {
    /// JSON config; flags override its fields
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Discount rate
    #[arg(long, global = true, allow_hyphen_values = true)]
    lambda: Option<f64>,
    /// Linear coefficient of the cost factor, in (0, 1)
    #[arg(long, global = true, allow_hyphen_values = true)]
    a: Option<f64>,
    /// Lower end of the c grid
    #[arg(long, global = true, allow_hyphen_values = true)]
    c_min: Option<f64>,
    /// Upper end of the c grid
    #[arg(long, global = true, allow_hyphen_values = true)]
    c_max: Option<f64>,
    /// Points on the c grid
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Lower end of the x grid
    #[arg(long, global = true, allow_hyphen_values = true)]
    x_min: Option<f64>,
    /// Upper end of the x grid
    #[arg(long, global = true, allow_hyphen_values = true)]
    x_max: Option<f64>,
    /// Points on the x grid
    #[arg(long, global = true)]
    n_x: Option<usize>,
    /// Lower end of the log-spaced y grid (geometry)
    #[arg(long, global = true)]
    y_min: Option<f64>,
    /// Upper end of the y grid
    #[arg(long, global = true)]
    y_max: Option<f64>,
    /// Points on the y grid
    #[arg(long, global = true)]
    n_y: Option<usize>,
    /// optimal, none, full-fill, delta:<d>, jump-to-chat or reflect-at-beta
    #[arg(long, global = true)]
    policy: Option<String>,
    /// Initial price (simulate)
    #[arg(long, global = true, allow_hyphen_values = true)]
    x: Option<f64>,
    /// Initial inventory (simulate, geometry)
    #[arg(long, global = true, allow_hyphen_values = true)]
    c: Option<f64>,
    /// Number of paths, even
    #[arg(long, global = true)]
    paths: Option<usize>,
    /// Random seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Time step
    #[arg(long, global = true)]
    dt: Option<f64>,
    /// Simulation horizon
    #[arg(long, global = true)]
    horizon: Option<f64>,
    /// Grid-only crossing detection
    #[arg(long, global = true)]
    no_bridge: bool,
    /// Output file (default stdout)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Flags {
    fn apply(&self, cfg: &mut RunConfig) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        set(&mut cfg.lambda, &self.lambda);
        set(&mut cfg.a, &self.a);
        set(&mut cfg.grids.c_min, &self.c_min);
        set(&mut cfg.grids.c_max, &self.c_max);
        set(&mut cfg.grids.n_c, &self.n);
        set(&mut cfg.grids.x_min, &self.x_min);
        set(&mut cfg.grids.x_max, &self.x_max);
        set(&mut cfg.grids.n_x, &self.n_x);
        set(&mut cfg.grids.y_min, &self.y_min);
        set(&mut cfg.grids.y_max, &self.y_max);
        set(&mut cfg.grids.n_y, &self.n_y);
        set(&mut cfg.mc.policy, &self.policy);
        set(&mut cfg.point.x, &self.x);
        set(&mut cfg.point.c, &self.c);
        set(&mut cfg.mc.n_paths, &self.paths);
        set(&mut cfg.mc.seed, &self.seed);
        set(&mut cfg.mc.dt, &self.dt);
        set(&mut cfg.mc.horizon, &self.horizon);
        if self.no_bridge {
            cfg.mc.bridge_correction = false;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
    }
}

/// Shortest round-trip decimal, with `+inf`/`-inf` sentinels and no `-0.0`.
pub fn fmt_f64(v: f64) -> String {
    if v == 0.0 {
        "0.0".into()
    } else if v == f64::INFINITY {
        "+inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        format!("{v:?}")
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

enum Failure {
    Config(String),
    Io(io::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Io(e)
    }
}

pub fn load_config(path: Option<&PathBuf>) -> Result<RunConfig, Error> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let file = File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_reader(io::BufReader::new(file))
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn boundaries_csv(v: &Validated, w: &mut dyn Write) -> Result<i32, Failure> {
    let g = &v.config.grids;
    let table = build_table(&v.model, &linspace(g.c_min, g.c_max, g.n_c))?;
    writeln!(w, "c,regime,gamma_hat,beta_hat,y1,y2")?;
    for r in table.rows() {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            fmt_f64(r.c),
            r.regime,
            fmt_f64(r.gamma_hat),
            fmt_f64(r.beta_hat),
            fmt_opt(r.y1),
            fmt_opt(r.y2)
        )?;
    }
    Ok(EXIT_OK)
}

fn value_csv(v: &Validated, w: &mut dyn Write) -> Result<i32, Failure> {
    let g = &v.config.grids;
    let table = build_table(&v.model, &linspace(g.c_min, g.c_max, g.n_c))?;
    let xs = linspace(g.x_min, g.x_max, g.n_x);
    writeln!(w, "x,c,W,W_x,W_c,region")?;
    for c in table.c_grid() {
        let slice = Slice::new(&table, c)?;
        for &x in &xs {
            let p = slice.point(x);
            writeln!(
                w,
                "{},{},{},{},{},{}",
                fmt_f64(p.x),
                fmt_f64(p.c),
                fmt_f64(p.w),
                fmt_f64(p.w_x),
                fmt_f64(p.w_c),
                p.region.as_str()
            )?;
        }
    }
    Ok(EXIT_OK)
}

fn verify_json(v: &Validated, w: &mut dyn Write) -> Result<i32, Failure> {
    let g = &v.config.grids;
    let grid = VerifyGrid {
        n_c: g.n_c,
        x_min: g.x_min,
        x_max: g.x_max,
        n_x: g.n_x,
    };
    let report = verify::run(&v.model, &grid)?;
    serde_json::to_writer_pretty(&mut *w, &report).map_err(io::Error::from)?;
    writeln!(w)?;
    Ok(if report.ok() { EXIT_OK } else { EXIT_FAILED })
}

#[derive(Serialize)]
struct SimulateOut {
    policy: String,
    x: f64,
    c: f64,
    mean: f64,
    std_error: f64,
    n_paths: usize,
    dt: f64,
    horizon: f64,
    seed: u64,
    truncated_paths: usize,
}

fn simulate_json(v: &Validated, w: &mut dyn Write) -> Result<i32, Failure> {
    let table = BoundaryTable::on_demand(&v.model);
    let Point { x, c } = v.config.point;
    let est = mc_cost(&table, x, c, v.policy, &v.mc)?;
    let out = SimulateOut {
        policy: v.policy.to_string(),
        x,
        c,
        mean: est.mean,
        std_error: est.std_error,
        n_paths: est.n_paths,
        dt: est.config.dt,
        horizon: est.config.horizon,
        seed: est.config.seed,
        truncated_paths: est.truncated_paths,
    };
    serde_json::to_writer_pretty(&mut *w, &out).map_err(io::Error::from)?;
    writeln!(w)?;
    Ok(EXIT_OK)
}

fn geometry_csv(v: &Validated, w: &mut dyn Write) -> Result<i32, Failure> {
    let g = &v.config.grids;
    let c = v.config.point.c;
    let table = BoundaryTable::on_demand(&v.model);
    let slice = Slice::new(&table, c)?;
    writeln!(w, "y,H,Q")?;
    for y in logspace(g.y_min, g.y_max, g.n_y) {
        let h = obstacle_h(&v.model, y, c)?.h;
        let q = slice.q(y)?;
        writeln!(w, "{},{},{}", fmt_f64(y), fmt_f64(h), fmt_f64(q))?;
    }
    Ok(EXIT_OK)
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    let validated = load_config(cli.flags.config.as_ref()).and_then(|mut cfg| {
        cli.flags.apply(&mut cfg);
        cfg.validate()
    });
    let v = match validated {
        Ok(v) => v,
        Err(e) => {
            eprintln!("ssc: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = match &v.config.out {
        Some(path) => match File::create(path) {
            Ok(f) => dispatch(cli.command, &v, &mut BufWriter::new(f)),
            Err(e) => Err(Failure::Io(e)),
        },
        None => dispatch(cli.command, &v, &mut BufWriter::new(io::stdout().lock())),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Config(msg)) => {
            eprintln!("ssc: {msg}");
            EXIT_CONFIG
        }
        Err(Failure::Io(e)) => {
            eprintln!("ssc: {e}");
            EXIT_FAILED
        }
    }
}

fn dispatch(cmd: Command, v: &Validated, w: &mut dyn Write) -> Result<i32, Failure> {
    let code = match cmd {
        Command::Boundaries => boundaries_csv(v, w)?,
        Command::Value => value_csv(v, w)?,
        Command::Verify => verify_json(v, w)?,
        Command::Simulate => simulate_json(v, w)?,
        Command::Geometry => geometry_csv(v, w)?,
    };
    w.flush()?;
    Ok(code)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        assert_eq!(fmt_f64(0.9), "0.9");
        assert_eq!(fmt_f64(-1.0), "-1.0");
        assert_eq!(fmt_f64(f64::INFINITY), "+inf");
        assert_eq!(fmt_f64(f64::NEG_INFINITY), "-inf");
        assert_eq!(fmt_f64(-0.0), "0.0");
        let v = 0.1 + 0.2;
        assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn flags_override_config() {
        let cli = Cli::try_parse_from([
            "ssc",
            "simulate",
            "--x",
            "-2",
            "--c",
            "0.3",
            "--paths",
            "10",
            "--no-bridge",
        ])
        .unwrap();
        let mut cfg = RunConfig::default();
        cli.flags.apply(&mut cfg);
        assert_eq!(cfg.point.x, -2.0);
        assert_eq!(cfg.point.c, 0.3);
        assert_eq!(cfg.mc.n_paths, 10);
        assert!(!cfg.mc.bridge_correction);
        assert_eq!(cfg.lambda, 0.5);
    }

    #[test]
    fn validation_rejects_bad_fields() {
        let bad = [
            RunConfig {
                a: 0.0,
                ..RunConfig::default()
            },
            RunConfig {
                grids: Grids {
                    c_max: 1.5,
                    ..Grids::default()
                },
                ..RunConfig::default()
            },
            RunConfig {
                mc: McSection {
                    policy: "sometimes".into(),
                    ..McSection::default()
                },
                ..RunConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.clone().validate().is_err(), "{cfg:?}");
        }
        assert!(RunConfig::default().validate().is_ok());
        // Monte Carlo settings are checked by `simulate` alone.
        let odd = RunConfig {
            mc: McSection {
                n_paths: 7,
                ..McSection::default()
            },
            ..RunConfig::default()
        }
        .validate()
        .unwrap();
        assert!(odd.mc.validate(&odd.model).is_err());
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let r: Result<RunConfig, _> = serde_json::from_str(r#"{"lambda": 0.5, "alpha": 1}"#);
        assert!(r.is_err());
        let r: RunConfig = serde_json::from_str(r#"{"grids": {"n_c": 8}}"#).unwrap();
        assert_eq!(r.grids.n_c, 8);
        assert_eq!(r.grids.c_max, 1.0);
    }
}
