//! Plain-text arena description.
//!
//! ```text
//! # comment
//! arena.width_mm = 3600
//! arena.height_mm = 5000
//! obstacle = [900, 2300, 1800, 2700]   # repeated, one per block
//! pursuer_spawn = [300, 300, 3300, 1300]
//! evader_spawn = [300, 3700, 3300, 4700]
//! ```
//!
//! Rectangles are `[xmin, ymin, xmax, ymax]` in millimeters.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Arena, Rect};

pub const TRAIN_FIG5A: &str = include_str!("../../../arenas/train_fig5a");
pub const VAL_FIG5B: &str = include_str!("../../../arenas/val_fig5b");
pub const U_TRAP: &str = include_str!("../../../arenas/u_trap");

/// Looks up a bundled arena by file stem.
pub fn bundled(name: &str) -> Option<Arena> {
    let text = match name {
        "train_fig5a" => TRAIN_FIG5A,
        "val_fig5b" => VAL_FIG5B,
        "u_trap" => U_TRAP,
        _ => return None,
    };
    Some(parse_arena(text).expect("bundled arena files are valid"))
}

pub fn load_arena(path: &Path) -> Result<Arena> {
    let text = std::fs::read_to_string(path)?;
    parse_arena(&text)
}

fn parse_rect(value: &str, line: usize) -> Result<Rect> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| Error::Parse {
            line,
            message: format!("expected [xmin, ymin, xmax, ymax], got `{value}`"),
        })?;
    let nums = inner
        .split(',')
        .map(|s| parse_number(s.trim(), line))
        .collect::<Result<Vec<_>>>()?;
    if nums.len() != 4 {
        return Err(Error::Parse {
            line,
            message: format!("rectangle needs 4 numbers, got {}", nums.len()),
        });
    }
    Ok(Rect::new(nums[0], nums[1], nums[2], nums[3]))
}

fn parse_number(value: &str, line: usize) -> Result<f64> {
    let v: f64 = value.parse().map_err(|_| Error::Parse {
        line,
        message: format!("`{value}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("`{value}` is not finite"),
        });
    }
    Ok(v)
}

fn set_once<T>(slot: &mut Option<T>, value: T, key: &str, line: usize) -> Result<()> {
    if slot.is_some() {
        return Err(Error::Parse {
            line,
            message: format!("`{key}` given twice"),
        });
    }
    *slot = Some(value);
    Ok(())
}

pub fn parse_arena(text: &str) -> Result<Arena> {
    let mut width = None;
    let mut height = None;
    let mut obstacles = Vec::new();
    let mut pursuer_spawn = None;
    let mut evader_spawn = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("expected `key = value`, got `{content}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "arena.width_mm" => set_once(&mut width, parse_number(value, line)?, key, line)?,
            "arena.height_mm" => set_once(&mut height, parse_number(value, line)?, key, line)?,
            "obstacle" => obstacles.push(parse_rect(value, line)?),
            "pursuer_spawn" => set_once(&mut pursuer_spawn, parse_rect(value, line)?, key, line)?,
            "evader_spawn" => set_once(&mut evader_spawn, parse_rect(value, line)?, key, line)?,
            other => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown key `{other}`"),
                })
            }
        }
    }

    let missing = |what: &str| Error::Parse {
        line: text.lines().count(),
        message: format!("missing `{what}`"),
    };
    Arena::new(
        width.ok_or_else(|| missing("arena.width_mm"))?,
        height.ok_or_else(|| missing("arena.height_mm"))?,
        obstacles,
        pursuer_spawn.ok_or_else(|| missing("pursuer_spawn"))?,
        evader_spawn.ok_or_else(|| missing("evader_spawn"))?,
    )
}

pub fn format_arena(arena: &Arena) -> String {
    let rect = |r: &Rect| format!("[{}, {}, {}, {}]", r.min.x, r.min.y, r.max.x, r.max.y);
    let mut out = String::new();
    let _ = writeln!(out, "arena.width_mm = {}", arena.width);
    let _ = writeln!(out, "arena.height_mm = {}", arena.height);
    for o in &arena.obstacles {
        let _ = writeln!(out, "obstacle = {}", rect(o));
    }
    let _ = writeln!(out, "pursuer_spawn = {}", rect(&arena.pursuer_spawn));
    let _ = writeln!(out, "evader_spawn = {}", rect(&arena.evader_spawn));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_arenas_parse() {
        let train = bundled("train_fig5a").unwrap();
        assert_eq!((train.width, train.height), (3600.0, 5000.0));
        assert_eq!(train.obstacles.len(), 2);
        let val = bundled("val_fig5b").unwrap();
        assert_eq!(val.obstacles.len(), 4);
        assert!(bundled("u_trap").is_some());
        assert!(bundled("nope").is_none());
    }

    #[test]
    fn training_gaps_match_stated_widths() {
        let a = bundled("train_fig5a").unwrap();
        let (o1, o2) = (a.obstacles[0], a.obstacles[1]);
        assert_eq!(o1.min.x, 900.0);
        assert_eq!(o2.min.x - o1.max.x, 500.0);
        assert_eq!(a.width - o2.max.x, 500.0);
    }

    #[test]
    fn validation_gap_is_narrow() {
        let a = bundled("val_fig5b").unwrap();
        let o6 = a.obstacles[3];
        assert_eq!(a.width - o6.max.x, 400.0);
        assert_eq!(o6.min.x, 0.0);
    }

    #[test]
    fn format_then_parse_is_identity() {
        let a = bundled("val_fig5b").unwrap();
        assert_eq!(parse_arena(&format_arena(&a)).unwrap(), a);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_arena("arena.width_mm = 10\nbogus = 3\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_arena("arena.width_mm = 10\nobstacle = [1, 2, 3]\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_arena("arena.width_mm = 10\n").unwrap_err();
        assert!(err.to_string().contains("arena.height_mm"));
    }
}
