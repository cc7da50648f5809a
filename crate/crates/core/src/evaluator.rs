//! Full matches between controllers and the aggregate metrics over many of them.

use serde::{Deserialize, Serialize};

use crate::agents::{AgentDiagnostics, Controller};
use crate::engine::{EngineError, GameState, Roster};
use crate::trajectory::{Episode, EpisodeHeader, EpisodeOutcome, EpisodeRecorder, Source};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchStats {
    pub seed: u64,
    pub total_reward: f64,
    pub duration_s: f64,
    pub executed_actions: u64,
    pub outcome: EpisodeOutcome,
    pub diagnostics: AgentDiagnostics,
}

/// Plays one match with `policy` on side 0 and returns the stats together with
/// the episode recorded from the policy's side.
pub fn run_match(
    policy: &mut dyn Controller,
    opponent: &mut dyn Controller,
    roster: &Roster,
    decks: (&[u32], &[u32]),
    seed: u64,
    source: Source,
) -> Result<(MatchStats, Episode), EngineError> {
    let mut state = GameState::new_match(roster, decks.0, decks.1, seed)?;
    let header = EpisodeHeader::new([decks.0.to_vec(), decks.1.to_vec()], seed, source, 0);
    let mut rec = EpisodeRecorder::new(header);
    while !state.is_finished() {
        let a = policy.act(&state, 0);
        let b = opponent.act(&state, 1);
        rec.begin(&state);
        let events = state.step(a, b)?;
        let frame = rec.end(&state, &events);
        let r = frame.reward.total();
        policy.observe(r);
        opponent.observe(-r);
    }
    let ep = rec.finish(&state);
    let stats = MatchStats {
        seed,
        total_reward: ep.total_reward(),
        duration_s: ep.t_end,
        executed_actions: ep.action_count() as u64,
        outcome: ep.outcome,
        diagnostics: policy.diagnostics(),
    };
    Ok((stats, ep))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: impl IntoIterator<Item = f64>) -> Self {
        let xs: Vec<f64> = xs.into_iter().collect();
        let n = xs.len().max(1) as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub base_seed: u64,
    pub total_reward: MeanStd,
    pub duration_s: MeanStd,
    pub executed_actions: MeanStd,
    pub wins: usize,
    pub losses: usize,
    pub draws: usize,
    pub win_rate: f64,
    pub diagnostics: AgentDiagnostics,
    pub per_episode: Vec<MatchStats>,
}

impl EvalReport {
    pub fn from_matches(base_seed: u64, per_episode: Vec<MatchStats>) -> Self {
        let n = per_episode.len();
        let count = |o: EpisodeOutcome| per_episode.iter().filter(|m| m.outcome == o).count();
        let mut diagnostics = AgentDiagnostics::default();
        for m in &per_episode {
            diagnostics += m.diagnostics;
        }
        let wins = count(EpisodeOutcome::Win);
        EvalReport {
            episodes: n,
            base_seed,
            total_reward: MeanStd::of(per_episode.iter().map(|m| m.total_reward)),
            duration_s: MeanStd::of(per_episode.iter().map(|m| m.duration_s)),
            executed_actions: MeanStd::of(per_episode.iter().map(|m| m.executed_actions as f64)),
            wins,
            losses: count(EpisodeOutcome::Loss),
            draws: count(EpisodeOutcome::Draw),
            win_rate: if n == 0 { 0.0 } else { wins as f64 / n as f64 },
            diagnostics,
            per_episode,
        }
    }
}

/// Episode `i` runs with seed `base_seed + i`; both factories receive that
/// seed so different policies face identical opponents.
pub fn evaluate<P, O>(
    mut make_policy: P,
    mut make_opponent: O,
    roster: &Roster,
    decks: (&[u32], &[u32]),
    n_episodes: usize,
    base_seed: u64,
) -> Result<EvalReport, EngineError>
where
    P: FnMut(u64) -> Box<dyn Controller>,
    O: FnMut(u64) -> Box<dyn Controller>,
{
    let mut rows = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes as u64 {
        let seed = base_seed + i;
        let mut p = make_policy(seed);
        let mut o = make_opponent(seed);
        let (stats, _) = run_match(p.as_mut(), o.as_mut(), roster, decks, seed, Source::Agent)?;
        rows.push(stats);
    }
    Ok(EvalReport::from_matches(base_seed, rows))
}

/// One-sided sign test: probability of at least `wins` successes out of
/// `trials` fair coin flips.
pub fn sign_test_p(wins: usize, trials: usize) -> f64 {
    let mut p = 0.0;
    for k in wins..=trials {
        p += binomial(trials, k) * 0.5f64.powi(trials as i32);
    }
    p
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sign test over paired rewards; ties are dropped. Returns `(wins, trials, p)`.
pub fn paired_sign_test(a: &[f64], b: &[f64]) -> (usize, usize, f64) {
    let wins = a.iter().zip(b).filter(|(x, y)| x > y).count();
    let trials = a.iter().zip(b).filter(|(x, y)| x != y).count();
    (wins, trials, sign_test_p(wins, trials))
}
