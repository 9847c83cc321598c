//! Monte Carlo evaluation of the discounted cost
//! `E[∫ e^{-λs} λ X_s Φ(C_s) ds + ∫ e^{-λs} X_s dν_s]` under the optimal control
//! and a set of comparison policies, plus hitting-time Laplace checks.
//!
//! Paths come in antithetic pairs driven by one ChaCha8 stream per pair
//! (`seed`, stream = pair index), so estimates do not depend on scheduling.
//! Running cost uses the left point of each step with exact exponential
//! weights `e^{-λt}(1 - e^{-λΔt})`. Barrier crossings are detected on the grid
//! and, with the bridge correction, by the crossing probability
//! `exp(-2(x0 - L)(x1 - L)/Δt)` of the Brownian bridge between grid points.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundaries::{boundary_at, BoundaryTable};
use crate::error::{Error, Result};
use crate::model::Model;

/// Skip the bridge probability when `(x0 - L)(x1 - L) ≥ BRIDGE_CUTOFF·Δt`
/// (the probability is below `e^{-40}`).
const BRIDGE_CUTOFF: f64 = 20.0;
const ROUNDOFF_FLOOR: f64 = 1e-12;
/// Rows in the interpolation table used by the reflecting policy.
const REFLECT_ROWS: usize = 1025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McConfig {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
    pub bridge_correction: bool,
}

impl McConfig {
    pub fn new(
        model: &Model,
        n_paths: usize,
        dt: f64,
        horizon: f64,
        seed: u64,
        bridge_correction: bool,
    ) -> Result<Self> {
        let cfg = McConfig {
            n_paths,
            dt,
            horizon,
            seed,
            bridge_correction,
        };
        cfg.validate(model)?;
        Ok(cfg)
    }

    pub fn validate(&self, model: &Model) -> Result<()> {
        if self.n_paths == 0 || !self.n_paths.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_paths must be a positive even number (antithetic pairs), got {}",
                self.n_paths
            )));
        }
        if !(self.dt > 0.0 && self.dt <= 1e-2) {
            return Err(Error::Config(format!(
                "dt must lie in (0, 1e-2], got {}",
                self.dt
            )));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.dt) {
            return Err(Error::Config(format!(
                "horizon must be finite and at least dt, got {}",
                self.horizon
            )));
        }
        if !((-model.lambda() * self.horizon).exp() < 1e-6) {
            return Err(Error::Config(format!(
                "horizon {} too short: exp(-lambda T) must be below 1e-6",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Policy {
    Optimal,
    NoAction,
    FullFillNow,
    Delta(f64),
    JumpToChatThenNothing,
    ReflectAtBeta,
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Optimal => f.write_str("optimal"),
            Policy::NoAction => f.write_str("none"),
            Policy::FullFillNow => f.write_str("full-fill"),
            Policy::Delta(d) => write!(f, "delta:{d:?}"),
            Policy::JumpToChatThenNothing => f.write_str("jump-to-chat"),
            Policy::ReflectAtBeta => f.write_str("reflect-at-beta"),
        }
    }
}

impl FromStr for Policy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "optimal" => Policy::Optimal,
            "none" | "no-action" => Policy::NoAction,
            "full-fill" | "full-fill-now" => Policy::FullFillNow,
            "jump-to-chat" => Policy::JumpToChatThenNothing,
            "reflect-at-beta" | "reflect" => Policy::ReflectAtBeta,
            other => match other.strip_prefix("delta:") {
                Some(d) => Policy::Delta(
                    d.parse()
                        .map_err(|_| Error::Config(format!("bad delta in policy `{other}`")))?,
                ),
                None => return Err(Error::Config(format!("unknown policy `{other}`"))),
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HitSide {
    Lower,
    Upper,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOutcome {
    pub cost: f64,
    pub tau_hit: Option<f64>,
    pub hit_side: HitSide,
    /// `(time, size)` of every control jump, including reflection increments.
    pub jump_events: Vec<(f64, f64)>,
    pub final_inventory: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n_paths: usize,
    pub config: McConfig,
    pub truncated_paths: usize,
    /// Bound on the bias from horizon truncation plus a round-off floor.
    pub bias_budget: f64,
}

impl McEstimate {
    /// `|mean - target| ≤ 3·SE + bias_budget`.
    pub fn agrees_with(&self, target: f64) -> bool {
        (self.mean - target).abs() <= 3.0 * self.std_error + self.bias_budget
    }
}

/// Interpolation table of `(c, ŷ1)` on `[c0, ĉ]`, giving `γ̂(C)` for the
/// reflecting policy.
#[derive(Debug, Clone)]
struct ReflectTable {
    c: Vec<f64>,
    y1: Vec<f64>,
    rate: f64,
}

impl ReflectTable {
    fn new(model: &Model, c0: f64) -> Result<Self> {
        let top = model.c_hat() - 0.5e-9;
        let n = REFLECT_ROWS;
        let rows = (0..n)
            .into_par_iter()
            .map(|i| {
                let c = if i + 1 == n {
                    top
                } else {
                    c0 + (top - c0) * i as f64 / (n - 1) as f64
                };
                boundary_at(model, c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ReflectTable {
            c: rows.iter().map(|r| r.c).collect(),
            y1: rows.iter().map(|r| r.y1.unwrap_or(0.0)).collect(),
            rate: model.rate(),
        })
    }

    fn locate(&self, c: f64) -> (usize, f64) {
        let i = self
            .c
            .partition_point(|&v| v <= c)
            .clamp(1, self.c.len() - 1)
            - 1;
        let w = ((c - self.c[i]) / (self.c[i + 1] - self.c[i])).clamp(0.0, 1.0);
        (i, w)
    }

    fn gamma(&self, c: f64) -> f64 {
        let (i, w) = self.locate(c);
        let y1 = self.y1[i] + w * (self.y1[i + 1] - self.y1[i]);
        y1.ln() / (2.0 * self.rate)
    }
}

/// Per-(policy, c) data shared by all paths.
#[derive(Debug, Clone)]
struct Plan {
    policy: Policy,
    c0: f64,
    c_hat: f64,
    gamma_o: f64,
    gamma: f64,
    beta: f64,
    lambda: f64,
    model: Model,
    reflect: Option<ReflectTable>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Stage {
    Watching { lower: f64, upper: f64 },
    AwaitLower { level: f64 },
    Reflecting,
    Passive,
    Done,
}

#[derive(Debug, Clone)]
struct PathState {
    x: f64,
    c: f64,
    t: f64,
    disc: f64,
    cost: f64,
    stage: Stage,
    first_hit: Option<(f64, HitSide)>,
    events: Option<Vec<(f64, f64)>>,
    /// `Φ(c)`, refreshed on every inventory change.
    phi: f64,
    /// Running maximum of `X` and current `γ̂(c)`, used by the reflecting policy.
    peak: f64,
    lower: f64,
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform on `[0, 1)` as a pure function of `(key, step)`, so every path of a
/// pair (and every policy run on the pair) sees the same bridge draw.
#[inline]
fn step_uniform(key: u64, step: u64) -> f64 {
    (splitmix64(key ^ splitmix64(step)) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn bridge_key(seed: u64, pair: u64) -> u64 {
    splitmix64(seed ^ splitmix64(pair ^ 0xB81D_6E3A_5C2F_4017))
}

#[inline]
fn bridge_probability(d0: f64, d1: f64, dt: f64) -> f64 {
    let prod = d0 * d1;
    if prod >= BRIDGE_CUTOFF * dt {
        0.0
    } else {
        (-2.0 * prod / dt).exp()
    }
}

/// Per-step data shared by every path of a pair.
#[derive(Debug, Clone, Copy)]
struct StepCtx {
    dt: f64,
    /// `Some(key)` enables the bridge test.
    bridge: Option<u64>,
    step: u64,
    /// `e^{-λt}(1 - e^{-λΔt})` at the step start
    running_weight: f64,
    t_end: f64,
    disc_end: f64,
}

impl StepCtx {
    /// `disc0` is the discount at the step start, `weight = 1 - e^{-λΔt}`.
    #[inline(always)]
    fn new(dt: f64, bridge: Option<u64>, step: u64, disc0: f64, weight: f64) -> Self {
        StepCtx {
            dt,
            bridge,
            step,
            running_weight: disc0 * weight,
            t_end: (step + 1) as f64 * dt,
            disc_end: disc0 - disc0 * weight,
        }
    }
}

impl StepCtx {
    #[inline]
    fn crossing(&self, x0: f64, x1: f64, lower: f64, upper: f64) -> HitSide {
        if x1 <= lower {
            return HitSide::Lower;
        }
        if x1 >= upper {
            return HitSide::Upper;
        }
        let Some(key) = self.bridge else {
            return HitSide::None;
        };
        let pl = if lower.is_finite() {
            bridge_probability(x0 - lower, x1 - lower, self.dt)
        } else {
            0.0
        };
        let pu = if upper.is_finite() {
            bridge_probability(upper - x0, upper - x1, self.dt)
        } else {
            0.0
        };
        if pl == 0.0 && pu == 0.0 {
            return HitSide::None;
        }
        let u = step_uniform(key, self.step);
        if u < pl {
            HitSide::Lower
        } else if u < pl + pu {
            HitSide::Upper
        } else {
            HitSide::None
        }
    }
}

impl Plan {
    fn new(table: &BoundaryTable, policy: Policy, c: f64) -> Result<Self> {
        let model = table.model().clone();
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::OutOfDomain {
                what: "c",
                value: c,
                domain: "[0, 1]",
            });
        }
        let reject = |reason| {
            Err(Error::Policy {
                policy: policy.to_string(),
                c,
                reason,
            })
        };
        match policy {
            Policy::Delta(d) if !(d >= 0.0 && c + d <= 1.0) => {
                return reject("requires 0 <= delta <= 1 - c");
            }
            Policy::JumpToChatThenNothing if c > model.c_hat() => {
                return reject("requires c <= c_hat");
            }
            Policy::ReflectAtBeta if c >= model.c_hat() => {
                return reject("requires c < c_hat");
            }
            _ => {}
        }
        let bp = table.at(c)?;
        let reflect = match policy {
            Policy::ReflectAtBeta => Some(ReflectTable::new(&model, c)?),
            _ => None,
        };
        Ok(Plan {
            policy,
            c0: c,
            c_hat: model.c_hat(),
            gamma_o: model.gamma_o(),
            gamma: bp.gamma_hat,
            beta: bp.beta_hat,
            lambda: model.lambda(),
            reflect,
            model,
        })
    }

    fn set_c(&self, s: &mut PathState, c: f64) {
        s.c = c;
        s.phi = self.model.phi(c);
        if let Some(table) = &self.reflect {
            s.lower = table.gamma(c);
        }
    }

    fn record(&self, s: &mut PathState, size: f64, side: HitSide) {
        if s.first_hit.is_none() {
            s.first_hit = Some((s.t, side));
        }
        if let Some(ev) = s.events.as_mut() {
            ev.push((s.t, size));
        }
    }

    fn fill(&self, s: &mut PathState, price: f64, side: HitSide) {
        let size = 1.0 - s.c;
        s.cost += s.disc * price * size;
        self.record(s, size, side);
        self.set_c(s, 1.0);
        s.stage = Stage::Done;
    }

    /// Raise inventory to `ĉ` at `price`, then wait for `γ^o`.
    fn jump_to_c_hat(&self, s: &mut PathState, price: f64, side: HitSide) {
        let size = self.c_hat - s.c;
        s.cost += s.disc * price * size;
        self.record(s, size, side);
        self.set_c(s, self.c_hat);
        s.stage = Stage::AwaitLower {
            level: self.gamma_o,
        };
        if s.x <= self.gamma_o {
            self.fill(s, s.x, HitSide::Lower);
        }
    }

    /// Skorokhod push at the initial upper level: total control
    /// `min(ĉ - c0, sup_{s≤t}(X_s - β̂(c0))⁺)`, bought at the current price.
    fn reflect(&self, s: &mut PathState) {
        if s.x <= s.lower {
            self.fill(s, s.x, HitSide::Lower);
            return;
        }
        s.peak = s.peak.max(s.x);
        let push = (s.peak - self.beta).max(0.0);
        if push >= self.c_hat - self.c0 {
            self.jump_to_c_hat(s, s.x, HitSide::Upper);
            return;
        }
        let target = self.c0 + push;
        if target > s.c {
            let size = target - s.c;
            s.cost += s.disc * s.x * size;
            self.record(s, size, HitSide::Upper);
            self.set_c(s, target);
        }
    }

    fn start(&self, x: f64, record: bool) -> PathState {
        let mut s = PathState {
            x,
            c: self.c0,
            t: 0.0,
            disc: 1.0,
            cost: 0.0,
            stage: Stage::Passive,
            first_hit: None,
            events: record.then(Vec::new),
            phi: 0.0,
            peak: x,
            lower: f64::NEG_INFINITY,
        };
        self.set_c(&mut s, self.c0);
        if s.c >= 1.0 {
            s.stage = Stage::Done;
            return s;
        }
        match self.policy {
            Policy::NoAction => {}
            Policy::FullFillNow => self.fill(&mut s, x, HitSide::None),
            Policy::Delta(d) => {
                if d > 0.0 {
                    s.cost += x * d;
                    self.record(&mut s, d, HitSide::None);
                    self.set_c(&mut s, self.c0 + d);
                }
                if s.c >= 1.0 {
                    s.stage = Stage::Done;
                }
            }
            Policy::JumpToChatThenNothing => {
                let size = self.c_hat - s.c;
                if size > 0.0 {
                    s.cost += x * size;
                    self.record(&mut s, size, HitSide::None);
                    self.set_c(&mut s, self.c_hat);
                }
            }
            Policy::Optimal => {
                if x <= self.gamma {
                    self.fill(&mut s, x, HitSide::Lower);
                } else if x >= self.beta {
                    self.jump_to_c_hat(&mut s, x, HitSide::Upper);
                } else {
                    s.stage = Stage::Watching {
                        lower: self.gamma,
                        upper: self.beta,
                    };
                }
            }
            Policy::ReflectAtBeta => {
                s.stage = Stage::Reflecting;
                self.reflect(&mut s);
            }
        }
        s
    }

    #[inline(always)]
    fn step(&self, s: &mut PathState, dx: f64, ctx: &StepCtx) {
        if s.stage == Stage::Done {
            return;
        }
        s.cost += ctx.running_weight * s.x * s.phi;
        let x0 = s.x;
        let x1 = x0 + dx;
        s.x = x1;
        s.t = ctx.t_end;
        s.disc = ctx.disc_end;
        match s.stage {
            Stage::Watching { lower, upper } => match ctx.crossing(x0, x1, lower, upper) {
                HitSide::Lower => self.fill(s, lower, HitSide::Lower),
                HitSide::Upper => self.jump_to_c_hat(s, upper, HitSide::Upper),
                HitSide::None => {}
            },
            Stage::AwaitLower { level } => {
                if ctx.crossing(x0, x1, level, f64::INFINITY) == HitSide::Lower {
                    self.fill(s, level, HitSide::Lower);
                }
            }
            Stage::Reflecting => {
                let g = s.lower;
                if ctx.crossing(x0, x1, g, f64::INFINITY) == HitSide::Lower {
                    self.fill(s, g, HitSide::Lower);
                } else {
                    self.reflect(s);
                }
            }
            Stage::Passive | Stage::Done => {}
        }
    }

    /// Close a path at the horizon; returns whether it was truncated.
    fn close(&self, s: &mut PathState) -> bool {
        match s.stage {
            Stage::Done => false,
            // E[∫_T^∞ e^{-λs} λ X_s ds | X_T] = e^{-λT} X_T
            Stage::Passive => {
                s.cost += s.disc * s.x * s.phi;
                false
            }
            _ => {
                let size = 1.0 - s.c;
                s.cost += s.disc * s.x * size;
                if let Some(ev) = s.events.as_mut() {
                    ev.push((s.t, size));
                }
                self.set_c(s, 1.0);
                s.stage = Stage::Done;
                true
            }
        }
    }

    fn outcome(&self, mut s: PathState) -> PathOutcome {
        let truncated = self.close(&mut s);
        let (tau_hit, hit_side) = match s.first_hit {
            Some((t, side)) => (Some(t), side),
            None => (None, HitSide::None),
        };
        PathOutcome {
            cost: s.cost,
            tau_hit,
            hit_side,
            jump_events: s.events.unwrap_or_default(),
            final_inventory: s.c,
            truncated,
        }
    }

    fn bias_budget(&self, x: f64, cfg: &McConfig) -> f64 {
        let can_truncate = !matches!(
            self.policy,
            Policy::NoAction
                | Policy::FullFillNow
                | Policy::Delta(_)
                | Policy::JumpToChatThenNothing
        );
        let trunc = if can_truncate {
            let k = self.model.growth_constant();
            2.0 * (k + 1.0)
                * (1.0 + x.abs() + cfg.horizon.sqrt())
                * (-self.lambda * cfg.horizon).exp()
        } else {
            0.0
        };
        trunc + ROUNDOFF_FLOOR * (1.0 + x.abs())
    }
}

fn pair_rng(seed: u64, pair: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(pair);
    rng
}

fn run_plan_path(plan: &Plan, x: f64, increments: &[f64], dt: f64) -> PathOutcome {
    let weight = -(-plan.lambda * dt).exp_m1();
    let mut disc = 1.0;
    let mut s = plan.start(x, true);
    for (k, &dx) in increments.iter().enumerate() {
        if s.stage == Stage::Done {
            break;
        }
        let ctx = StepCtx::new(dt, None, k as u64, disc, weight);
        plan.step(&mut s, dx, &ctx);
        disc = ctx.disc_end;
    }
    plan.outcome(s)
}

/// Optimal control along one given path of Brownian increments, with grid
/// crossing detection only. Paths still holding unused control at the end of
/// `increments` are filled at the final price and marked truncated.
pub fn apply_optimal_policy(
    table: &BoundaryTable,
    x: f64,
    c: f64,
    increments: &[f64],
    dt: f64,
) -> Result<PathOutcome> {
    apply_policy(table, Policy::Optimal, x, c, increments, dt)
}

pub fn apply_policy(
    table: &BoundaryTable,
    policy: Policy,
    x: f64,
    c: f64,
    increments: &[f64],
    dt: f64,
) -> Result<PathOutcome> {
    if !(dt > 0.0) {
        return Err(Error::Config(format!("dt must be positive, got {dt}")));
    }
    let plan = Plan::new(table, policy, c)?;
    Ok(run_plan_path(&plan, x, increments, dt))
}

/// Antithetic pair number `pair` under the same random stream as
/// [`mc_cost`], with events recorded.
pub fn simulate_pair(
    table: &BoundaryTable,
    policy: Policy,
    x: f64,
    c: f64,
    cfg: &McConfig,
    pair: u64,
) -> Result<(PathOutcome, PathOutcome)> {
    cfg.validate(table.model())?;
    let plan = Plan::new(table, policy, c)?;
    let [a, b] = run_pair(std::slice::from_ref(&plan), x, cfg, pair, true)
        .pop()
        .expect("one plan");
    Ok((plan.outcome(a), plan.outcome(b)))
}

/// Runs every plan on the same antithetic pair of increment sequences.
fn run_pair(
    plans: &[Plan],
    x: f64,
    cfg: &McConfig,
    pair: u64,
    record: bool,
) -> Vec<[PathState; 2]> {
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let weight = -(-plans[0].lambda * dt).exp_m1();
    let n_steps = cfg.n_steps() as u64;
    let mut rng = pair_rng(cfg.seed, pair);
    let key = cfg.bridge_correction.then(|| bridge_key(cfg.seed, pair));
    let mut states: Vec<[PathState; 2]> = plans
        .iter()
        .map(|p| [p.start(x, record), p.start(x, record)])
        .collect();
    let mut block = Block {
        dt,
        bridge: key,
        first: 0,
        len: 0,
        dx: [0.0; BLOCK],
        disc: [0.0; BLOCK + 1],
        weight,
    };
    block.disc[0] = 1.0;
    while block.first < n_steps {
        if states
            .iter()
            .all(|[a, b]| a.stage == Stage::Done && b.stage == Stage::Done)
        {
            break;
        }
        block.fill(&mut rng, sq, n_steps);
        for (plan, [a, b]) in plans.iter().zip(states.iter_mut()) {
            plan.run_block(a, 1.0, &block);
            plan.run_block(b, -1.0, &block);
        }
        block.first += block.len as u64;
        block.disc[0] = block.disc[block.len];
    }
    states
}

const BLOCK: usize = 256;

/// Increments and discount factors for up to `BLOCK` consecutive steps.
struct Block {
    dt: f64,
    bridge: Option<u64>,
    first: u64,
    len: usize,
    dx: [f64; BLOCK],
    /// `disc[j]` is the discount at the start of step `first + j`.
    disc: [f64; BLOCK + 1],
    weight: f64,
}

impl Block {
    fn fill(&mut self, rng: &mut ChaCha8Rng, sq: f64, n_steps: u64) {
        self.len = (n_steps - self.first).min(BLOCK as u64) as usize;
        for j in 0..self.len {
            let z: f64 = rng.sample(StandardNormal);
            self.dx[j] = sq * z;
            let d = self.disc[j];
            self.disc[j + 1] = d - d * self.weight;
        }
    }

    #[inline(always)]
    fn ctx(&self, j: usize) -> StepCtx {
        StepCtx::new(
            self.dt,
            self.bridge,
            self.first + j as u64,
            self.disc[j],
            self.weight,
        )
    }
}

impl Plan {
    /// Advances one path through a block; `sign` = -1 for the antithetic path.
    fn run_block(&self, s: &mut PathState, sign: f64, b: &Block) {
        for j in 0..b.len {
            match s.stage {
                Stage::Done => return,
                Stage::Passive => {
                    let (mut x, mut cost) = (s.x, s.cost);
                    for i in j..b.len {
                        cost += b.disc[i] * b.weight * x * s.phi;
                        x += sign * b.dx[i];
                    }
                    s.x = x;
                    s.cost = cost;
                    s.t = (b.first + b.len as u64) as f64 * b.dt;
                    s.disc = b.disc[b.len];
                    return;
                }
                _ => self.step(s, sign * b.dx[j], &b.ctx(j)),
            }
        }
    }
}

struct PairSummary {
    mean: f64,
    truncated: usize,
}

fn reduce(samples: &[PairSummary]) -> (f64, f64, usize) {
    let n = samples.len() as f64;
    let mean = samples.iter().map(|s| s.mean).sum::<f64>() / n;
    let var = if samples.len() > 1 {
        samples.iter().map(|s| (s.mean - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let truncated = samples.iter().map(|s| s.truncated).sum();
    (mean, (var / n).sqrt(), truncated)
}

/// Monte Carlo cost of `policy` from `(x, c)`. The standard error is computed
/// from antithetic pair means.
pub fn mc_cost(
    table: &BoundaryTable,
    x: f64,
    c: f64,
    policy: Policy,
    cfg: &McConfig,
) -> Result<McEstimate> {
    Ok(mc_compare(table, x, c, &[policy], cfg)?.remove(0))
}

/// Several policies on common random numbers. Each estimate equals what
/// [`mc_cost`] returns for that policy alone.
pub fn mc_compare(
    table: &BoundaryTable,
    x: f64,
    c: f64,
    policies: &[Policy],
    cfg: &McConfig,
) -> Result<Vec<McEstimate>> {
    cfg.validate(table.model())?;
    if !x.is_finite() {
        return Err(Error::OutOfDomain {
            what: "x",
            value: x,
            domain: "finite",
        });
    }
    if policies.is_empty() {
        return Ok(Vec::new());
    }
    let plans = policies
        .iter()
        .map(|&p| Plan::new(table, p, c))
        .collect::<Result<Vec<_>>>()?;
    let n_pairs = cfg.n_paths / 2;
    let per_pair: Vec<Vec<PairSummary>> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            run_pair(&plans, x, cfg, i, false)
                .into_iter()
                .zip(&plans)
                .map(|([mut a, mut b], plan)| {
                    let ta = plan.close(&mut a) as usize;
                    let tb = plan.close(&mut b) as usize;
                    PairSummary {
                        mean: 0.5 * (a.cost + b.cost),
                        truncated: ta + tb,
                    }
                })
                .collect()
        })
        .collect();
    Ok(plans
        .iter()
        .enumerate()
        .map(|(j, plan)| {
            let samples: Vec<PairSummary> = per_pair
                .iter()
                .map(|row| PairSummary {
                    mean: row[j].mean,
                    truncated: row[j].truncated,
                })
                .collect();
            let (mean, std_error, truncated_paths) = reduce(&samples);
            McEstimate {
                mean,
                std_error,
                n_paths: cfg.n_paths,
                config: *cfg,
                truncated_paths,
                bias_budget: plan.bias_budget(x, cfg),
            }
        })
        .collect())
}

/// Expected cost of the policies with closed forms.
pub fn closed_form_cost(model: &Model, policy: Policy, x: f64, c: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&c) {
        return Err(Error::OutOfDomain {
            what: "c",
            value: c,
            domain: "[0, 1]",
        });
    }
    match policy {
        Policy::NoAction => Ok(x * model.phi(c)),
        Policy::FullFillNow => Ok(x * (1.0 - c)),
        Policy::Delta(d) => {
            if !(d >= 0.0 && c + d <= 1.0) {
                return Err(Error::Policy {
                    policy: policy.to_string(),
                    c,
                    reason: "requires 0 <= delta <= 1 - c",
                });
            }
            Ok(x * (d + model.phi(c + d)))
        }
        _ => Err(Error::Policy {
            policy: policy.to_string(),
            c,
            reason: "no closed form",
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceCheck {
    pub x: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// `E[e^{-λτ}]`
    pub closed_laplace: f64,
    pub mc_laplace: Estimate,
    /// `E[e^{-λτ} X_τ]`, two-sided case only.
    pub closed_weighted: Option<f64>,
    pub mc_weighted: Option<Estimate>,
    pub bias_budget: f64,
}

impl LaplaceCheck {
    pub fn passes(&self) -> bool {
        let ok = |e: &Estimate, target: f64| {
            (e.mean - target).abs() <= 3.0 * e.std_error + self.bias_budget
        };
        ok(&self.mc_laplace, self.closed_laplace)
            && match (self.mc_weighted, self.closed_weighted) {
                (Some(e), Some(t)) => ok(&e, t),
                _ => true,
            }
    }
}

/// Hitting-time transforms of `X = x + B` for the exit from `(lower, upper)`
/// against their closed forms.
pub fn laplace_check(
    model: &Model,
    x: f64,
    lower: Option<f64>,
    upper: Option<f64>,
    cfg: &McConfig,
) -> Result<LaplaceCheck> {
    cfg.validate(model)?;
    let l = lower.unwrap_or(f64::NEG_INFINITY);
    let u = upper.unwrap_or(f64::INFINITY);
    if lower.is_none() && upper.is_none() {
        return Err(Error::Config(
            "laplace_check needs at least one finite level".into(),
        ));
    }
    if !(l <= x && x <= u && l < u) {
        return Err(Error::OutOfDomain {
            what: "x",
            value: x,
            domain: "[lower, upper]",
        });
    }
    let s = model.rate();
    let (closed_laplace, closed_weighted) = match (lower, upper) {
        (None, Some(b)) => ((s * (x - b)).exp(), None),
        (Some(a), None) => ((-s * (x - a)).exp(), None),
        (Some(a), Some(b)) => {
            let den = (s * (b - a)).sinh();
            let p_low = (s * (b - x)).sinh() / den;
            let p_up = (s * (x - a)).sinh() / den;
            (p_low + p_up, Some(a * p_low + b * p_up))
        }
        (None, None) => unreachable!(),
    };
    let dt = cfg.dt;
    let sq = dt.sqrt();
    let weight = -(-model.lambda() * dt).exp_m1();
    let n_pairs = cfg.n_paths / 2;
    let samples: Vec<(f64, f64)> = (0..n_pairs as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = pair_rng(cfg.seed, i);
            let key = cfg.bridge_correction.then(|| bridge_key(cfg.seed, i));
            let mut pos = [x, x];
            let mut hit: [Option<(f64, f64)>; 2] = [None, None];
            for (k, h) in hit.iter_mut().enumerate() {
                if pos[k] <= l {
                    *h = Some((1.0, l));
                } else if pos[k] >= u {
                    *h = Some((1.0, u));
                }
            }
            let mut disc = 1.0;
            for step in 0..cfg.n_steps() as u64 {
                if hit[0].is_some() && hit[1].is_some() {
                    break;
                }
                let z: f64 = rng.sample(StandardNormal);
                let dx = sq * z;
                let ctx = StepCtx::new(dt, key, step, disc, weight);
                disc = ctx.disc_end;
                for (k, sign) in [(0usize, 1.0), (1usize, -1.0)] {
                    if hit[k].is_some() {
                        continue;
                    }
                    let x0 = pos[k];
                    let x1 = x0 + sign * dx;
                    pos[k] = x1;
                    match ctx.crossing(x0, x1, l, u) {
                        HitSide::Lower => hit[k] = Some((disc, l)),
                        HitSide::Upper => hit[k] = Some((disc, u)),
                        HitSide::None => {}
                    }
                }
            }
            let lap = hit.iter().map(|h| h.map_or(0.0, |(d, _)| d)).sum::<f64>() * 0.5;
            let wt = hit
                .iter()
                .map(|h| h.map_or(0.0, |(d, lv)| d * lv))
                .sum::<f64>()
                * 0.5;
            (lap, wt)
        })
        .collect();
    let est = |f: &dyn Fn(&(f64, f64)) -> f64| {
        let summaries: Vec<PairSummary> = samples
            .iter()
            .map(|p| PairSummary {
                mean: f(p),
                truncated: 0,
            })
            .collect();
        let (mean, std_error, _) = reduce(&summaries);
        Estimate { mean, std_error }
    };
    let mc_laplace = est(&|p| p.0);
    let mc_weighted = closed_weighted.map(|_| est(&|p| p.1));
    let scale = 1.0
        + [l, u]
            .iter()
            .filter(|v| v.is_finite())
            .fold(0.0f64, |m, v| m.max(v.abs()));
    let bias_budget =
        ((-model.lambda() * cfg.horizon).exp() + model.lambda() * dt) * scale + ROUNDOFF_FLOOR;
    Ok(LaplaceCheck {
        x,
        lower,
        upper,
        closed_laplace,
        mc_laplace,
        closed_weighted,
        mc_weighted,
        bias_budget,
    })
}
