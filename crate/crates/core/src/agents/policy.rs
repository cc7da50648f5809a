use std::collections::VecDeque;
use std::sync::Arc;

use super::{AgentDiagnostics, Controller};
use crate::engine::{densify, sparse_units, Cell, Command, Faction, GameState, Roster};
use crate::model::{DecisionModel, StepEncoding};
use crate::trajectory::{Action, WindowStep};

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Wait,
    Play(Action),
    /// The decoded placement failed the legality gate.
    Illegal(Action),
}

/// Decodes one step of logits: play `(argmax select, argmax pos)` when the
/// predicted delay is at most `delay_threshold` and the engine accepts it.
pub fn decode_action(pos: &[f64], select: &[f64], delay: &[f64], delay_threshold: u32, state: &GameState, faction: Faction) -> Decision {
    if argmax(delay) as u32 > delay_threshold {
        return Decision::Wait;
    }
    let cell = Cell::from_index(argmax(pos));
    let a = Action { slot: argmax(select) as u8 + 1, x: cell.x, y: cell.y };
    match state.check_play(faction, a.slot, cell) {
        Ok(_) => Decision::Play(a),
        Err(_) => Decision::Illegal(a),
    }
}

/// Return-conditioned rollout of a trained model. The context holds cached
/// per-step encodings of at most `L` steps, oldest first.
pub struct PolicyAgent {
    model: Arc<DecisionModel>,
    roster: Roster,
    pub target_return: f64,
    pub delay_threshold: u32,
    rtg: f64,
    context: VecDeque<StepEncoding>,
    prev_action: Option<Action>,
    diagnostics: AgentDiagnostics,
}

impl PolicyAgent {
    pub fn new(model: Arc<DecisionModel>, roster: Roster, target_return: f64) -> Self {
        Self {
            model,
            roster,
            target_return,
            delay_threshold: 0,
            rtg: target_return,
            context: VecDeque::new(),
            prev_action: None,
            diagnostics: AgentDiagnostics::default(),
        }
    }

    pub fn with_delay_threshold(mut self, t: u32) -> Self {
        self.delay_threshold = t;
        self
    }

    pub fn context_len(&self) -> usize {
        self.context.len()
    }

    pub fn return_to_go(&self) -> f64 {
        self.rtg
    }

    fn current_step(&self, state: &GameState, faction: Faction) -> WindowStep {
        let p = state.player(faction);
        WindowStep {
            rtg: self.rtg,
            grid: densify(&sparse_units(state, faction), &self.roster),
            hand: p.hand.map(|h| h.unwrap_or(0)),
            costs: p.hand_costs(),
            elixir: p.elixir(),
            t_seconds: state.t_seconds(),
            action: None,
            prev_action: self.prev_action,
            delay: self.model.cfg.t_delay,
            target: None,
        }
    }
}

impl Controller for PolicyAgent {
    fn act(&mut self, state: &GameState, faction: Faction) -> Command {
        let step = self.current_step(state, faction);
        let enc = self.model.encode_steps(std::slice::from_ref(&step)).pop().expect("one step");
        if self.context.len() == self.model.cfg.l {
            self.context.pop_front();
        }
        self.context.push_back(enc);
        let (pos, select, delay) = self.model.predict_last(self.context.make_contiguous());
        let decision = decode_action(&pos, &select, &delay, self.delay_threshold, state, faction);
        self.prev_action = None;
        match decision {
            Decision::Wait => Command::Noop,
            Decision::Illegal(_) => {
                self.diagnostics.attempted += 1;
                self.diagnostics.illegal += 1;
                Command::Noop
            }
            Decision::Play(a) => {
                self.diagnostics.attempted += 1;
                self.diagnostics.executed += 1;
                self.prev_action = Some(a);
                Command::Play { slot: a.slot, pos: Cell::new(a.x, a.y) }
            }
        }
    }

    fn observe(&mut self, reward: f64) {
        self.rtg -= reward;
    }

    fn diagnostics(&self) -> AgentDiagnostics {
        self.diagnostics
    }
}
