//! Sequential decision makers.
//!
//! Every agent follows the same two-step protocol per round: [`Strategy::act`]
//! produces the probability vector, then [`Strategy::observe`] feeds back
//! the loss vector. Restarting strategies (AdaHedge and the doubling-trick
//! Hedge) decide whether to open a new segment inside `act`, before the
//! weights are handed out.

use std::fmt;

use crate::bounds;
use crate::error::{HedgeError, Result};
use crate::hedge::{self, CumulativeLoss, LossVector, WeightSnapshot};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StrategyKind {
    /// All mass on the current leaders, split uniformly among ties.
    FollowTheLeader,
    FixedHedge {
        eta: f64,
    },
    /// Hedge with `eta = sqrt(2 ln K / L*_T)` computed from the whole loss
    /// sequence in hindsight.
    OracleHedge,
    /// Restarts with `eta_i = phi^(1-i)` whenever the best action's loss in
    /// the current segment reaches `2 ln K / eta_i^2`.
    DoublingHedge {
        phi: f64,
    },
    AdaHedge {
        phi: f64,
    },
    /// `eta_t = min(1, sqrt(2 ln K / L*_{t-1}))`, recomputed every round.
    VariableHedge,
}

impl StrategyKind {
    pub fn validate(self) -> Result<Self> {
        match self {
            Self::FixedHedge { eta } if !(eta.is_finite() && eta > 0.0) => Err(
                HedgeError::InvalidArgument(format!("fixed learning rate must be > 0, got {eta}")),
            ),
            Self::DoublingHedge { phi } | Self::AdaHedge { phi }
                if !(phi.is_finite() && phi > 1.0) =>
            {
                Err(HedgeError::InvalidArgument(format!(
                    "restart factor phi must be > 1, got {phi}"
                )))
            }
            _ => Ok(self),
        }
    }

    /// Short file-name friendly label, e.g. `adahedge-2`.
    pub fn label(&self) -> String {
        match self {
            Self::FollowTheLeader => "ftl".into(),
            Self::FixedHedge { eta } => format!("hedge-fixed-{eta}"),
            Self::OracleHedge => "hedge-oracle".into(),
            Self::DoublingHedge { phi } => format!("hedge-doubling-{phi}"),
            Self::AdaHedge { phi } => format!("adahedge-{phi}"),
            Self::VariableHedge => "hedge-variable".into(),
        }
    }

    /// Whether the strategy restarts in segments.
    pub fn is_segmented(&self) -> bool {
        matches!(self, Self::DoublingHedge { .. } | Self::AdaHedge { .. })
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

/// What a finished segment looked like when it was closed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentSummary {
    pub index: u32,
    /// First round of the segment (1-based).
    pub start: u64,
    pub eta: f64,
    /// Cumulative mixability gap within the segment.
    pub delta_sum: f64,
    /// Loss of the best action counted within the segment only.
    pub best_loss: f64,
}

#[derive(Debug, Clone)]
pub struct Strategy {
    kind: StrategyKind,
    num_actions: usize,
    cum: CumulativeLoss,
    /// Losses since the start of the current segment.
    segment_cum: CumulativeLoss,
    weights: WeightSnapshot,
    eta: f64,
    /// AdaHedge's budget on `delta_sum`.
    budget: Option<f64>,
    /// Doubling Hedge's budget on the segment's best loss.
    lstar_budget: Option<f64>,
    delta_sum: f64,
    segment: u32,
    segment_starts: Vec<u64>,
    closed_segments: Vec<SegmentSummary>,
    /// Weights handed out for the round in progress, if `act` ran.
    decision: Option<WeightSnapshot>,
}

impl Strategy {
    /// Fresh state for `num_actions` actions. `OracleHedge` needs the final
    /// best loss; use [`Strategy::with_hindsight`] for it.
    pub fn new(kind: StrategyKind, num_actions: usize) -> Result<Self> {
        if kind == StrategyKind::OracleHedge {
            return Err(HedgeError::InvalidArgument(
                "OracleHedge needs the final best loss; use Strategy::with_hindsight".into(),
            ));
        }
        Self::build(kind, num_actions, 1.0)
    }

    /// Like [`Strategy::new`], passing `L*_T` of the sequence about to be
    /// played. Only `OracleHedge` uses it.
    pub fn with_hindsight(
        kind: StrategyKind,
        num_actions: usize,
        final_best_loss: f64,
    ) -> Result<Self> {
        let eta = match kind {
            StrategyKind::OracleHedge => bounds::oracle_eta(final_best_loss, num_actions)?,
            _ => 1.0,
        };
        Self::build(kind, num_actions, eta)
    }

    fn build(kind: StrategyKind, num_actions: usize, oracle_eta: f64) -> Result<Self> {
        let kind = kind.validate()?;
        let cum = CumulativeLoss::zeros(num_actions)?;
        let ln_k = (num_actions as f64).ln();
        let (eta, budget, lstar_budget) = match kind {
            StrategyKind::FollowTheLeader => (f64::INFINITY, None, None),
            StrategyKind::FixedHedge { eta } => (eta, None, None),
            StrategyKind::OracleHedge => (oracle_eta, None, None),
            StrategyKind::DoublingHedge { .. } => (1.0, None, Some(2.0 * ln_k)),
            StrategyKind::AdaHedge { .. } => (1.0, Some(bounds::budget(1.0, num_actions)?), None),
            StrategyKind::VariableHedge => (1.0, None, None),
        };
        Ok(Self {
            kind,
            num_actions,
            segment_cum: cum.clone(),
            cum,
            weights: WeightSnapshot::uniform(num_actions),
            eta,
            budget,
            lstar_budget,
            delta_sum: 0.0,
            segment: 1,
            segment_starts: vec![1],
            closed_segments: Vec::new(),
            decision: None,
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn cumulative(&self) -> &CumulativeLoss {
        &self.cum
    }

    pub fn segment_cumulative(&self) -> &CumulativeLoss {
        &self.segment_cum
    }

    /// Learning rate for the current (or next) round. Infinite for FTL.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn budget(&self) -> Option<f64> {
        self.budget
    }

    pub fn lstar_budget(&self) -> Option<f64> {
        self.lstar_budget
    }

    /// Mixability gap accumulated in the current segment.
    pub fn delta_sum(&self) -> f64 {
        self.delta_sum
    }

    pub fn segment(&self) -> u32 {
        self.segment
    }

    pub fn segment_starts(&self) -> &[u64] {
        &self.segment_starts
    }

    pub fn closed_segments(&self) -> &[SegmentSummary] {
        &self.closed_segments
    }

    fn next_round(&self) -> u64 {
        self.cum.rounds() + 1
    }

    fn should_restart(&self) -> bool {
        match self.kind {
            StrategyKind::AdaHedge { .. } => self.budget.is_some_and(|b| self.delta_sum >= b),
            StrategyKind::DoublingHedge { .. } => self
                .lstar_budget
                .is_some_and(|b| self.segment_cum.best() >= b),
            _ => false,
        }
    }

    fn restart(&mut self) -> Result<()> {
        let phi = match self.kind {
            StrategyKind::AdaHedge { phi } | StrategyKind::DoublingHedge { phi } => phi,
            _ => unreachable!("only segmented strategies restart"),
        };
        self.closed_segments.push(SegmentSummary {
            index: self.segment,
            start: *self
                .segment_starts
                .last()
                .expect("segment 1 always recorded"),
            eta: self.eta,
            delta_sum: self.delta_sum,
            best_loss: self.segment_cum.best(),
        });
        self.segment += 1;
        self.eta /= phi;
        match self.kind {
            StrategyKind::AdaHedge { .. } => {
                self.budget = Some(bounds::budget(self.eta, self.num_actions)?);
            }
            _ => {
                let ln_k = (self.num_actions as f64).ln();
                self.lstar_budget = Some(2.0 * ln_k / (self.eta * self.eta));
            }
        }
        self.delta_sum = 0.0;
        self.weights = WeightSnapshot::uniform(self.num_actions);
        self.segment_cum = CumulativeLoss::zeros(self.num_actions)?;
        self.segment_starts.push(self.next_round());
        Ok(())
    }

    fn variable_eta(&self) -> f64 {
        let lstar = self.cum.best();
        if lstar == 0.0 {
            1.0
        } else {
            (2.0 * (self.num_actions as f64).ln() / lstar)
                .sqrt()
                .min(1.0)
        }
    }

    /// Decision weights for the upcoming round. Calling it again before
    /// [`Strategy::observe`] returns the same weights.
    pub fn act(&mut self) -> Result<WeightSnapshot> {
        if let Some(w) = &self.decision {
            return Ok(w.clone());
        }
        if self.should_restart() {
            self.restart()?;
        }
        let w = match self.kind {
            StrategyKind::FollowTheLeader => {
                let leaders = self.cum.leaders();
                let mut mass = vec![0.0; self.num_actions];
                for k in leaders {
                    mass[k] = 1.0;
                }
                WeightSnapshot::from_weights(&mass)?
            }
            StrategyKind::VariableHedge => {
                self.eta = self.variable_eta();
                hedge::hedge_weights(&self.cum, self.eta)?
            }
            _ => self.weights.clone(),
        };
        self.decision = Some(w.clone());
        Ok(w)
    }

    /// Feeds back the round's losses and returns the agent's loss `w . l`.
    pub fn observe(&mut self, loss: &LossVector) -> Result<f64> {
        if loss.len() != self.num_actions {
            return Err(HedgeError::DimensionMismatch {
                expected: self.num_actions,
                got: loss.len(),
            });
        }
        let w = match self.decision.take() {
            Some(w) => w,
            None => {
                self.act()?;
                self.decision.take().expect("act stores its decision")
            }
        };
        let agent_loss = w.dot(loss)?;
        match self.kind {
            StrategyKind::FollowTheLeader => {}
            StrategyKind::VariableHedge => {
                self.delta_sum += hedge::mixability_gap(&w, loss, self.eta)?.delta;
            }
            _ => {
                self.delta_sum += hedge::mixability_gap(&w, loss, self.eta)?.delta;
                self.weights = hedge::posterior_update(&w, loss, self.eta)?;
            }
        }
        self.cum.add(loss)?;
        self.segment_cum.add(loss)?;
        Ok(agent_loss)
    }
}

/// One round of a [`RegretTrace`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub round: u64,
    pub agent_loss: f64,
    pub cum_agent_loss: f64,
    pub best_cum_loss: f64,
    pub regret: f64,
    pub segment: u32,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace {
    pub kind: StrategyKind,
    pub rows: Vec<TraceRow>,
    /// Rounds at which segments started; always begins with 1.
    pub segment_starts: Vec<u64>,
    pub closed_segments: Vec<SegmentSummary>,
}

impl RegretTrace {
    pub fn final_regret(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.regret)
    }

    pub fn segments_started(&self) -> u32 {
        self.segment_starts.len() as u32
    }

    pub fn regret_at(&self, round: u64) -> Option<f64> {
        let idx = usize::try_from(round).ok()?.checked_sub(1)?;
        self.rows.get(idx).map(|r| r.regret)
    }
}

/// Best action's final cumulative loss over a whole sequence.
pub fn final_best_loss(losses: &[LossVector]) -> Result<f64> {
    let first = losses
        .first()
        .ok_or_else(|| HedgeError::InvalidArgument("empty loss sequence".into()))?;
    let mut cum = CumulativeLoss::zeros(first.len())?;
    for l in losses {
        cum.add(l)?;
    }
    Ok(cum.best())
}

/// Plays `kind` against `losses` and records the regret after every round.
pub fn run(kind: StrategyKind, losses: &[LossVector]) -> Result<RegretTrace> {
    let lstar = final_best_loss(losses)?;
    let mut strategy = Strategy::with_hindsight(kind, losses[0].len(), lstar)?;
    let mut rows = Vec::with_capacity(losses.len());
    let mut cum_agent = 0.0;
    for loss in losses {
        strategy.act()?;
        let eta = strategy.eta();
        let segment = strategy.segment();
        let agent_loss = strategy.observe(loss)?;
        cum_agent += agent_loss;
        let cum = strategy.cumulative();
        let best = cum.best();
        rows.push(TraceRow {
            round: cum.rounds(),
            agent_loss,
            cum_agent_loss: cum_agent,
            best_cum_loss: best,
            regret: cum_agent - best,
            segment,
            eta,
        });
    }
    Ok(RegretTrace {
        kind,
        rows,
        segment_starts: strategy.segment_starts().to_vec(),
        closed_segments: strategy.closed_segments().to_vec(),
    })
}
