use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Action, Episode, EpisodeHeader, EpisodeOutcome, Frame, TrajectoryError};
use crate::engine::UnitView;
use crate::rewards::RewardBreakdown;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct FrameLine {
    t: u64,
    units: Vec<(u8, u8, u32, u8, f64)>,
    hand: [u8; 4],
    elixir: f64,
    action: Option<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    opp: Option<Action>,
    r: RewardBreakdown,
}

#[derive(Serialize, Deserialize)]
struct EndLine {
    outcome: EpisodeOutcome,
    t_end: f64,
}

fn to_line(f: &Frame) -> FrameLine {
    FrameLine {
        t: f.tick,
        units: f.units.iter().map(|u| (u.x, u.y, u.cls, u.bel, u.hp_frac)).collect(),
        hand: f.hand,
        elixir: f.elixir,
        action: f.action,
        opp: f.opp,
        r: f.reward,
    }
}

fn from_line(l: FrameLine) -> Frame {
    Frame {
        tick: l.t,
        units: l.units.into_iter().map(|(x, y, cls, bel, hp_frac)| UnitView { x, y, cls, bel, hp_frac }).collect(),
        hand: l.hand,
        elixir: l.elixir,
        action: l.action,
        opp: l.opp,
        reward: l.r,
    }
}

fn json_err(e: impl std::fmt::Display) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

pub fn write_episode(ep: &Episode, mut w: impl Write) -> Result<(), TrajectoryError> {
    serde_json::to_writer(&mut w, &ep.header).map_err(json_err)?;
    w.write_all(b"\n")?;
    for f in &ep.frames {
        serde_json::to_writer(&mut w, &to_line(f)).map_err(json_err)?;
        w.write_all(b"\n")?;
    }
    serde_json::to_writer(&mut w, &EndLine { outcome: ep.outcome, t_end: ep.t_end }).map_err(json_err)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn save_episode(ep: &Episode, path: impl AsRef<Path>) -> Result<(), TrajectoryError> {
    write_episode(ep, BufWriter::new(File::create(path)?))
}

fn malformed(line: usize, e: impl std::fmt::Display) -> TrajectoryError {
    TrajectoryError::Malformed { line, msg: e.to_string() }
}

pub fn parse_episode(r: impl Read) -> Result<Episode, TrajectoryError> {
    let mut lines = BufReader::new(r).lines().enumerate().filter(|(_, l)| match l {
        Ok(s) => !s.trim().is_empty(),
        Err(_) => true,
    });

    let Some((_, first)) = lines.next() else {
        return Err(TrajectoryError::TruncatedEpisode);
    };
    let head: Value = serde_json::from_str(&first?).map_err(|e| malformed(1, e))?;
    let v = head.get("v").and_then(Value::as_u64).ok_or_else(|| malformed(1, "header has no version field"))?;
    if v != FORMAT_VERSION as u64 {
        return Err(TrajectoryError::UnsupportedVersion(v as u32));
    }
    let header: EpisodeHeader = serde_json::from_value(head).map_err(|e| malformed(1, e))?;

    let mut frames = Vec::new();
    let mut end: Option<EndLine> = None;
    for (i, line) in lines {
        let line = line?;
        let n = i + 1;
        if end.is_some() {
            return Err(malformed(n, "content after the outcome line"));
        }
        let v: Value = serde_json::from_str(&line).map_err(|e| malformed(n, e))?;
        if v.get("outcome").is_some() {
            end = Some(serde_json::from_value(v).map_err(|e| malformed(n, e))?);
        } else {
            let fl: FrameLine = serde_json::from_value(v).map_err(|e| malformed(n, e))?;
            frames.push(from_line(fl));
        }
    }
    let end = end.ok_or(TrajectoryError::TruncatedEpisode)?;
    Ok(Episode { header, frames, outcome: end.outcome, t_end: end.t_end })
}

pub fn load_episode(path: impl AsRef<Path>) -> Result<Episode, TrajectoryError> {
    parse_episode(File::open(path)?)
}

/// Every `*.jsonl` file of a directory, in file-name order.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<(PathBuf, Episode)>, TrajectoryError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    paths.into_iter().map(|p| load_episode(&p).map(|e| (p, e))).collect()
}
