//! Bernoulli bandits, optionally confounded by a latent state that drives both
//! the payouts and the agent's natural arm choice.

use crate::scm::draw;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BanditError {
    #[error("InvalidEnv: {0}")]
    InvalidEnv(String),
    #[error("UnknownArm: arm {arm} with {arms} arms")]
    UnknownArm { arm: usize, arms: usize },
    #[error("UnknownState: confounder state {0}")]
    UnknownState(usize),
    #[error("MissingIntent: the environment has no confounder")]
    MissingIntent,
    #[error("InvalidHorizon: horizon must be at least 1")]
    InvalidHorizon,
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error("IncompatiblePolicy: {0}")]
    IncompatiblePolicy(String),
    #[error("Csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = BanditError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Confounder {
    pub states: Vec<String>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum PayoutDoc {
    Flat(Vec<f64>),
    ByState(BTreeMap<String, Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct EnvDoc {
    arms: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    confounder: Option<Confounder>,
    payout: PayoutDoc,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    intuition: BTreeMap<String, usize>,
}

/// `payout[u][a]` is the success probability of arm `a` in confounder state `u`;
/// an unconfounded env has a single state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EnvDoc", into = "EnvDoc")]
pub struct BanditEnv {
    arms: usize,
    confounder: Option<Confounder>,
    payout: Vec<Vec<f64>>,
    intuition: Vec<usize>,
}

impl TryFrom<EnvDoc> for BanditEnv {
    type Error = BanditError;
    fn try_from(doc: EnvDoc) -> Result<Self> {
        match (doc.confounder, doc.payout) {
            (None, PayoutDoc::Flat(p)) => BanditEnv::unconfounded(&p),
            (Some(c), PayoutDoc::ByState(map)) => {
                let mut payout = Vec::with_capacity(c.states.len());
                let mut intuition = Vec::with_capacity(c.states.len());
                for s in &c.states {
                    payout.push(map.get(s).cloned().ok_or_else(|| BanditError::InvalidEnv(format!("no payout row for {s}")))?);
                    intuition.push(*doc.intuition.get(s).ok_or_else(|| BanditError::InvalidEnv(format!("no intuition for {s}")))?);
                }
                if map.len() != c.states.len() || doc.intuition.len() != c.states.len() {
                    return Err(BanditError::InvalidEnv("payout/intuition keys must match the confounder states".into()));
                }
                BanditEnv::confounded(c, payout, intuition)
            }
            (Some(_), PayoutDoc::Flat(_)) => Err(BanditError::InvalidEnv("confounded payout must be keyed by state".into())),
            (None, PayoutDoc::ByState(_)) => Err(BanditError::InvalidEnv("keyed payout needs a confounder".into())),
        }
        .and_then(|env| {
            if env.arms != doc.arms {
                Err(BanditError::InvalidEnv(format!("arms is {} but payout has {}", doc.arms, env.arms)))
            } else {
                Ok(env)
            }
        })
    }
}

impl From<BanditEnv> for EnvDoc {
    fn from(env: BanditEnv) -> Self {
        match &env.confounder {
            None => EnvDoc { arms: env.arms, confounder: None, payout: PayoutDoc::Flat(env.payout[0].clone()), intuition: BTreeMap::new() },
            Some(c) => EnvDoc {
                arms: env.arms,
                payout: PayoutDoc::ByState(c.states.iter().cloned().zip(env.payout.iter().cloned()).collect()),
                intuition: c.states.iter().cloned().zip(env.intuition.iter().copied()).collect(),
                confounder: env.confounder,
            },
        }
    }
}

fn check_probs(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(BanditError::InvalidEnv(format!("{what} must lie in [0,1]")));
    }
    Ok(())
}

impl BanditEnv {
    pub fn unconfounded(payout: &[f64]) -> Result<Self> {
        if payout.is_empty() {
            return Err(BanditError::InvalidEnv("at least one arm is required".into()));
        }
        check_probs(payout, "payouts")?;
        Ok(BanditEnv { arms: payout.len(), confounder: None, payout: vec![payout.to_vec()], intuition: Vec::new() })
    }

    pub fn confounded(confounder: Confounder, payout: Vec<Vec<f64>>, intuition: Vec<usize>) -> Result<Self> {
        let n = confounder.states.len();
        if n == 0 || confounder.probs.len() != n || payout.len() != n || intuition.len() != n {
            return Err(BanditError::InvalidEnv("confounder states, probs, payout and intuition must align".into()));
        }
        check_probs(&confounder.probs, "confounder probabilities")?;
        if (confounder.probs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(BanditError::InvalidEnv("confounder probabilities must sum to 1".into()));
        }
        let arms = payout[0].len();
        if arms == 0 || payout.iter().any(|r| r.len() != arms) {
            return Err(BanditError::InvalidEnv("every payout row needs the same, non-zero number of arms".into()));
        }
        for r in &payout {
            check_probs(r, "payouts")?;
        }
        if let Some(&a) = intuition.iter().find(|&&a| a >= arms) {
            return Err(BanditError::UnknownArm { arm: a, arms });
        }
        Ok(BanditEnv { arms, confounder: Some(confounder), payout, intuition })
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn is_confounded(&self) -> bool {
        self.confounder.is_some()
    }

    pub fn n_states(&self) -> usize {
        self.payout.len()
    }

    pub fn payout(&self, state: usize, arm: usize) -> f64 {
        self.payout[state][arm]
    }

    pub fn intent(&self, state: usize) -> Option<usize> {
        self.confounder.as_ref().map(|_| self.intuition[state])
    }

    fn state_probs(&self) -> Vec<f64> {
        self.confounder.as_ref().map_or_else(|| vec![1.0], |c| c.probs.clone())
    }

    /// Expected payout of each arm averaged over the confounder.
    pub fn marginal_payout(&self) -> Vec<f64> {
        let probs = self.state_probs();
        (0..self.arms).map(|a| probs.iter().zip(&self.payout).map(|(p, row)| p * row[a]).sum()).collect()
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.confounder {
            None => 0,
            Some(c) => draw(&c.probs, rng),
        }
    }
}

/// One Bernoulli reward from `arm` in confounder state `state`.
pub fn pull<R: Rng + ?Sized>(env: &BanditEnv, arm: usize, state: usize, rng: &mut R) -> Result<u8> {
    if arm >= env.arms {
        return Err(BanditError::UnknownArm { arm, arms: env.arms });
    }
    if state >= env.n_states() {
        return Err(BanditError::UnknownState(state));
    }
    Ok(u8::from(rng.random::<f64>() < env.payout[state][arm]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPosterior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for BetaPosterior {
    fn default() -> Self {
        BetaPosterior { alpha: 1.0, beta: 1.0 }
    }
}

impl BetaPosterior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(BanditError::InvalidParameter(format!("Beta({alpha}, {beta}) needs positive parameters")));
        }
        Ok(BetaPosterior { alpha, beta })
    }

    pub fn update(self, reward: u8) -> Self {
        if reward == 1 {
            BetaPosterior { alpha: self.alpha + 1.0, ..self }
        } else {
            BetaPosterior { beta: self.beta + 1.0, ..self }
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    /// Draw via two Gamma variates: `X / (X + Y)` with `X ~ Gamma(α)`, `Y ~ Gamma(β)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let x = Gamma::new(self.alpha, 1.0).expect("alpha > 0").sample(rng);
        let y = Gamma::new(self.beta, 1.0).expect("beta > 0").sample(rng);
        if x + y == 0.0 {
            self.mean()
        } else {
            x / (x + y)
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn thompson_step<R: Rng + ?Sized>(posteriors: &[BetaPosterior], rng: &mut R) -> usize {
    let draws: Vec<f64> = posteriors.iter().map(|p| p.sample(rng)).collect();
    argmax(&draws)
}

pub fn epsilon_greedy_step<R: Rng + ?Sized>(estimates: &[f64], epsilon: f64, rng: &mut R) -> usize {
    if epsilon > 0.0 && rng.random::<f64>() < epsilon {
        rng.random_range(0..estimates.len())
    } else {
        argmax(estimates)
    }
}

/// Thompson step on the posteriors conditioned on the agent's natural intent.
///
/// The draw for the intended arm answers the intuition question and the draws for
/// the other arms the counter-intuition one; the intended arm wins ties.
pub fn causal_thompson_step<R: Rng + ?Sized>(intent: usize, posteriors: &[Vec<BetaPosterior>], rng: &mut R) -> usize {
    let row = &posteriors[intent];
    let draws: Vec<f64> = row.iter().map(|p| p.sample(rng)).collect();
    let best = argmax(&draws);
    if draws[intent] >= draws[best] {
        intent
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Policy {
    /// Plays the best arm for the realized state (or the marginal best under marginal regret).
    Oracle,
    Uniform,
    /// Plays the best empirical mean; unplayed arms estimate 0.
    Greedy,
    Epsilon { epsilon: f64 },
    Thompson,
    CausalThompson,
}

impl Policy {
    pub fn parse(name: &str, epsilon: Option<f64>) -> Result<Self> {
        Ok(match name {
            "oracle" => Policy::Oracle,
            "uniform" => Policy::Uniform,
            "greedy" => Policy::Greedy,
            "epsilon" | "epsilon-greedy" => Policy::Epsilon { epsilon: epsilon.unwrap_or(0.1) },
            "thompson" => Policy::Thompson,
            "causal-thompson" => Policy::CausalThompson,
            other => return Err(BanditError::InvalidParameter(format!("unknown policy {other:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Oracle => "oracle",
            Policy::Uniform => "uniform",
            Policy::Greedy => "greedy",
            Policy::Epsilon { .. } => "epsilon",
            Policy::Thompson => "thompson",
            Policy::CausalThompson => "causal-thompson",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegretMode {
    /// Against the best arm for the realized confounder state.
    #[default]
    Conditional,
    /// Against the arm with the best payout averaged over the confounder.
    Marginal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub policy: Policy,
    pub horizon: usize,
    pub prior: BetaPosterior,
    /// Pulls credited before the first round, as `(arm, reward)`.
    pub warm_start: Vec<(usize, u8)>,
    pub regret: RegretMode,
}

impl SimConfig {
    pub fn new(policy: Policy, horizon: usize) -> Self {
        SimConfig { policy, horizon, prior: BetaPosterior::default(), warm_start: Vec::new(), regret: RegretMode::Conditional }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Round {
    pub round: usize,
    pub state: usize,
    pub intent: Option<usize>,
    pub arm: usize,
    pub reward: u8,
    pub optimal: bool,
    pub regret: f64,
    pub cum_regret: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub policy: String,
    pub seed: u64,
    pub rounds: Vec<Round>,
}

impl RunResult {
    pub fn cumulative_regret(&self) -> f64 {
        self.rounds.last().map_or(0.0, |r| r.cum_regret)
    }

    /// Share of optimal plays among the final `fraction` of rounds.
    pub fn optimal_frequency(&self, fraction: f64) -> f64 {
        let k = ((self.rounds.len() as f64 * fraction).ceil() as usize).clamp(1, self.rounds.len());
        let tail = &self.rounds[self.rounds.len() - k..];
        tail.iter().filter(|r| r.optimal).count() as f64 / k as f64
    }

    pub fn arm_frequency(&self, arm: usize) -> f64 {
        self.rounds.iter().filter(|r| r.arm == arm).count() as f64 / self.rounds.len() as f64
    }

    pub fn mean_reward(&self) -> f64 {
        self.rounds.iter().map(|r| r.reward as f64).sum::<f64>() / self.rounds.len() as f64
    }

    /// Writes `round,arm,intent,reward,cum_regret`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["round", "arm", "intent", "reward", "cum_regret"])?;
        for r in &self.rounds {
            out.write_record([
                r.round.to_string(),
                r.arm.to_string(),
                r.intent.map_or_else(String::new, |i| i.to_string()),
                r.reward.to_string(),
                r.cum_regret.to_string(),
            ])?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

pub fn simulate(env: &BanditEnv, cfg: &SimConfig, seed: u64) -> Result<RunResult> {
    if cfg.horizon == 0 {
        return Err(BanditError::InvalidHorizon);
    }
    if let Policy::Epsilon { epsilon } = cfg.policy {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(BanditError::InvalidParameter(format!("epsilon {epsilon} outside [0,1]")));
        }
    }
    let prior = BetaPosterior::new(cfg.prior.alpha, cfg.prior.beta)?;
    if cfg.policy == Policy::CausalThompson {
        if !env.is_confounded() {
            return Err(BanditError::MissingIntent);
        }
        if !cfg.warm_start.is_empty() {
            return Err(BanditError::IncompatiblePolicy("warm start pulls carry no intent".into()));
        }
    }
    let k = env.arms;
    let mut posteriors = vec![prior; k];
    let mut causal = vec![vec![prior; k]; k];
    let mut pulls = vec![0usize; k];
    let mut wins = vec![0usize; k];
    for &(arm, reward) in &cfg.warm_start {
        if arm >= k {
            return Err(BanditError::UnknownArm { arm, arms: k });
        }
        if reward > 1 {
            return Err(BanditError::InvalidParameter(format!("reward {reward} is not 0 or 1")));
        }
        posteriors[arm] = posteriors[arm].update(reward);
        pulls[arm] += 1;
        wins[arm] += reward as usize;
    }
    let marginal = env.marginal_payout();
    let marginal_best = argmax(&marginal);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rounds = Vec::with_capacity(cfg.horizon);
    let mut cum = 0.0;
    for t in 0..cfg.horizon {
        let state = env.sample_state(&mut rng);
        let intent = env.intent(state);
        let best = match cfg.regret {
            RegretMode::Conditional => argmax(&env.payout[state]),
            RegretMode::Marginal => marginal_best,
        };
        let arm = match cfg.policy {
            Policy::Oracle => best,
            Policy::Uniform => rng.random_range(0..k),
            Policy::Greedy | Policy::Epsilon { .. } => {
                let est: Vec<f64> =
                    (0..k).map(|a| if pulls[a] == 0 { 0.0 } else { wins[a] as f64 / pulls[a] as f64 }).collect();
                let eps = if let Policy::Epsilon { epsilon } = cfg.policy { epsilon } else { 0.0 };
                epsilon_greedy_step(&est, eps, &mut rng)
            }
            Policy::Thompson => thompson_step(&posteriors, &mut rng),
            Policy::CausalThompson => causal_thompson_step(intent.expect("confounded"), &causal, &mut rng),
        };
        let reward = pull(env, arm, state, &mut rng)?;
        posteriors[arm] = posteriors[arm].update(reward);
        if let Some(i) = intent {
            causal[i][arm] = causal[i][arm].update(reward);
        }
        pulls[arm] += 1;
        wins[arm] += reward as usize;
        let regret = match cfg.regret {
            RegretMode::Conditional => env.payout[state][best] - env.payout[state][arm],
            RegretMode::Marginal => marginal[best] - marginal[arm],
        };
        cum += regret;
        rounds.push(Round {
            round: t,
            state,
            intent,
            arm,
            reward,
            optimal: regret <= 0.0,
            regret,
            cum_regret: cum,
        });
    }
    Ok(RunResult { policy: cfg.policy.name().to_string(), seed, rounds })
}

/// One run per seed, computed in parallel and returned in seed order.
pub fn sweep(env: &BanditEnv, cfg: &SimConfig, seeds: std::ops::Range<u64>) -> Result<Vec<RunResult>> {
    seeds.into_par_iter().map(|s| simulate(env, cfg, s)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSummary {
    pub runs: usize,
    pub mean_cumulative_regret: f64,
    pub mean_optimal_frequency_last_10pct: f64,
    pub mean_reward: f64,
}

pub fn summarize(runs: &[RunResult]) -> SweepSummary {
    let n = runs.len().max(1) as f64;
    SweepSummary {
        runs: runs.len(),
        mean_cumulative_regret: runs.iter().map(RunResult::cumulative_regret).sum::<f64>() / n,
        mean_optimal_frequency_last_10pct: runs.iter().map(|r| r.optimal_frequency(0.1)).sum::<f64>() / n,
        mean_reward: runs.iter().map(RunResult::mean_reward).sum::<f64>() / n,
    }
}
