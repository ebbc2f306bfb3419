//! Single-asset all-in/all-out trading environment with proportional
//! transaction costs, plus total-return and Sharpe-ratio metrics.

use crate::data::{PanelSeries, CLOSE};
use crate::{CoreError, Result};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Discrete actions: sell, hold, buy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Sell,
    Hold,
    Buy,
}

impl Action {
    pub fn from_i8(v: i8) -> Result<Action> {
        match v {
            -1 => Ok(Action::Sell),
            0 => Ok(Action::Hold),
            1 => Ok(Action::Buy),
            other => Err(CoreError::InvalidData(format!(
                "invalid action {other}, expected -1, 0 or 1"
            ))),
        }
    }

    pub fn as_i8(&self) -> i8 {
        match self {
            Action::Sell => -1,
            Action::Hold => 0,
            Action::Buy => 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnvConfig {
    pub initial_cash: f64,
    /// Proportional transaction cost on traded notional.
    pub cost: f64,
    /// Discount rate for agents; the environment itself does not discount.
    pub discount: f64,
    pub lookback: usize,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_cash: 1e4,
            cost: 1e-3,
            discount: 0.99,
            lookback: 60,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_cash <= 0.0 {
            return Err(CoreError::Config("initial cash must be positive".into()));
        }
        if !(0.0..0.1).contains(&self.cost) {
            return Err(CoreError::Config(format!(
                "transaction cost {} outside [0, 0.1)",
                self.cost
            )));
        }
        if self.lookback < 1 {
            return Err(CoreError::Config("lookback must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// What a policy sees: the trailing feature window and the position flag.
#[derive(Debug, Clone)]
pub struct Observation {
    pub window: Array2<f64>,
    pub position: u8,
}

/// One step's outcome.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

/// The environment over one stock of a panel. All-in/all-out: after every
/// trade either the cash or the share balance is zero.
pub struct TradingEnv<'a> {
    panel: &'a PanelSeries,
    stock: usize,
    cfg: EnvConfig,
    t: usize,
    cash: f64,
    shares: f64,
    position: u8,
    done: bool,
    values: Vec<f64>,
    trades: usize,
}

impl<'a> TradingEnv<'a> {
    pub fn new(panel: &'a PanelSeries, stock: usize, cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        if stock >= panel.num_stocks() {
            return Err(CoreError::Config(format!("stock {stock} out of range")));
        }
        if panel.len() < cfg.lookback + 1 {
            return Err(CoreError::InsufficientData(format!(
                "panel of {} rows cannot support lookback {}",
                panel.len(),
                cfg.lookback
            )));
        }
        let mut env = Self {
            panel,
            stock,
            cfg,
            t: 0,
            cash: 0.0,
            shares: 0.0,
            position: 0,
            done: false,
            values: Vec::new(),
            trades: 0,
        };
        env.reset();
        Ok(env)
    }

    pub fn reset(&mut self) -> Observation {
        self.t = self.cfg.lookback - 1;
        self.cash = self.cfg.initial_cash;
        self.shares = 0.0;
        self.position = 0;
        self.done = false;
        self.trades = 0;
        self.values = vec![self.cfg.initial_cash];
        self.observation()
    }

    fn price(&self, t: usize) -> f64 {
        self.panel.get(t, self.stock, CLOSE)
    }

    pub fn observation(&self) -> Observation {
        let start = self.t + 1 - self.cfg.lookback;
        Observation {
            window: self.panel.window(self.stock, start, self.cfg.lookback),
            position: self.position,
        }
    }

    pub fn portfolio_value(&self) -> f64 {
        self.cash + self.shares * self.price(self.t)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Execute an action at the current close, collect the reward
    /// p_{t−1}·r_mkt − c·|Δp|, and advance time. The episode ends when no
    /// next price remains for the market return.
    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.done {
            return Err(CoreError::InvalidData("step on a finished episode".into()));
        }
        let price = self.price(self.t);
        let prev_position = self.position;
        match (action, self.position) {
            (Action::Buy, 0) => {
                let value = self.cash;
                self.shares = (1.0 - self.cfg.cost) * value / price;
                self.cash = 0.0;
                self.position = 1;
                self.trades += 1;
            }
            (Action::Sell, 1) => {
                let value = self.shares * price;
                self.cash = (1.0 - self.cfg.cost) * value;
                self.shares = 0.0;
                self.position = 0;
                self.trades += 1;
            }
            // redundant action or hold: no trade
            _ => {}
        }
        let c_now = self.price(self.t);
        let c_next = self.price(self.t + 1);
        let market_return = (c_next - c_now) / c_now;
        let delta_p = (self.position as f64 - prev_position as f64).abs();
        let reward = prev_position as f64 * market_return - self.cfg.cost * delta_p;

        self.t += 1;
        self.values.push(self.portfolio_value());
        if self.t + 1 >= self.panel.len() {
            self.done = true;
        }
        Ok(StepResult {
            observation: self.observation(),
            reward,
            done: self.done,
        })
    }

    pub fn cash(&self) -> f64 {
        self.cash
    }

    pub fn shares(&self) -> f64 {
        self.shares
    }

    pub fn value_series(&self) -> &[f64] {
        &self.values
    }

    pub fn trade_count(&self) -> usize {
        self.trades
    }
}

/// Episode summary.
#[derive(Debug, Clone)]
pub struct EpisodeMetrics {
    pub total_return: f64,
    pub sharpe_ratio: f64,
    /// Set when the value series had zero variance (SR reported as 0).
    pub degenerate_sharpe: bool,
    pub trades: usize,
    pub values: Vec<f64>,
}

/// TR from the endpoints; SR = mean / population std of the per-step
/// simple returns, reported as 0 with a flag at zero variance.
pub fn compute_metrics(values: &[f64]) -> Result<(f64, f64, bool)> {
    if values.len() < 2 {
        return Err(CoreError::InsufficientData(
            "need ≥ 2 portfolio values".into(),
        ));
    }
    if values.iter().any(|&v| v <= 0.0) {
        return Err(CoreError::InvalidData("non-positive portfolio value".into()));
    }
    let tr = (values[values.len() - 1] - values[0]) / values[0];
    let rets: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect();
    let n = rets.len() as f64;
    let mean = rets.iter().sum::<f64>() / n;
    let var = rets.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Ok((tr, 0.0, true));
    }
    Ok((tr, mean / var.sqrt(), false))
}

/// A trading policy: observation in, action out.
pub trait TradingPolicy {
    fn act(&mut self, obs: &Observation) -> Action;
}

/// Uniform random actions from a seeded stream.
pub struct RandomPolicy {
    rng: ChaCha8Rng,
}

impl RandomPolicy {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl TradingPolicy for RandomPolicy {
    fn act(&mut self, _obs: &Observation) -> Action {
        match self.rng.random_range(0..3) {
            0 => Action::Sell,
            1 => Action::Hold,
            _ => Action::Buy,
        }
    }
}

/// Buy on the first step, hold to the end.
#[derive(Default)]
pub struct BuyAndHold {
    bought: bool,
}

impl TradingPolicy for BuyAndHold {
    fn act(&mut self, _obs: &Observation) -> Action {
        if self.bought {
            Action::Hold
        } else {
            self.bought = true;
            Action::Buy
        }
    }
}

/// Trajectory row for export: (t, price, action, position, value, reward).
#[derive(Debug, Clone)]
pub struct TrajectoryRow {
    pub t: usize,
    pub price: f64,
    pub action: i8,
    pub position: u8,
    pub value: f64,
    pub reward: f64,
}

/// Run one episode to completion.
pub fn run_episode(
    env: &mut TradingEnv,
    policy: &mut dyn TradingPolicy,
) -> Result<(Vec<TrajectoryRow>, EpisodeMetrics)> {
    let mut obs = env.reset();
    let mut rows = Vec::new();
    loop {
        let t_before = env.t;
        let price = env.price(t_before);
        let action = policy.act(&obs);
        let step = env.step(action)?;
        rows.push(TrajectoryRow {
            t: t_before,
            price,
            action: action.as_i8(),
            position: env.position,
            value: env.portfolio_value(),
            reward: step.reward,
        });
        obs = step.observation;
        if step.done {
            break;
        }
    }
    let (tr, sr, degenerate) = compute_metrics(env.value_series())?;
    Ok((
        rows,
        EpisodeMetrics {
            total_return: tr,
            sharpe_ratio: sr,
            degenerate_sharpe: degenerate,
            trades: env.trade_count(),
            values: env.value_series().to_vec(),
        },
    ))
}
