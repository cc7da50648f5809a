use super::roster::Roster;
use super::state::{Command, GameState};
use super::EngineError;

/// Per-tick `(friendly, enemy)` command pairs.
pub type CommandLog = Vec<(Command, Command)>;

/// Re-runs a full match. The log must end exactly when the match finishes.
pub fn replay(
    seed: u64,
    roster: &Roster,
    decks: (&[u32], &[u32]),
    log: &[(Command, Command)],
) -> Result<GameState, EngineError> {
    let mut state = GameState::new_match(roster, decks.0, decks.1, seed)?;
    for (i, &(a, b)) in log.iter().enumerate() {
        state.step(a, b)?;
        if state.is_finished() {
            let extra = log.len() - i - 1;
            return if extra == 0 { Ok(state) } else { Err(EngineError::LogTooLong { extra }) };
        }
    }
    Err(EngineError::LogTooShort { tick: state.tick })
}

/// Applies every entry of a (possibly partial) log, stopping early if the match ends.
pub fn replay_prefix(
    seed: u64,
    roster: &Roster,
    decks: (&[u32], &[u32]),
    log: &[(Command, Command)],
) -> Result<GameState, EngineError> {
    let mut state = GameState::new_match(roster, decks.0, decks.1, seed)?;
    for &(a, b) in log {
        if state.is_finished() {
            break;
        }
        state.step(a, b)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_noop_prefix_equals_one_step() {
        let r = Roster::builtin();
        let d = r.default_deck();
        let mut expect = GameState::new_match(&r, &d, &d, 5).unwrap();
        expect.step(Command::Noop, Command::Noop).unwrap();
        let got = replay_prefix(5, &r, (&d, &d), &[(Command::Noop, Command::Noop)]).unwrap();
        assert_eq!(got, expect);
    }

    #[test]
    fn short_log_is_an_error() {
        let r = Roster::builtin();
        let d = r.default_deck();
        let log = vec![(Command::Noop, Command::Noop); 10];
        assert_eq!(replay(5, &r, (&d, &d), &log), Err(EngineError::LogTooShort { tick: 10 }));
    }
}
