//! Validated per-mode task parameters.

use contimo::tasks::Gap;
use contimo::{Error, Result};

use crate::config::TaskTable;

#[derive(Clone, Debug, PartialEq)]
pub enum Mode {
    Interpolate { scale: f64 },
    Inbetween { gap: Gap },
    Extrapolate { tmin: f64, tmax: f64, count: Option<usize> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub mode: Mode,
    /// Overrides the frame rate written with the output.
    pub fps: Option<f64>,
}

fn missing(what: &str, flag: &str) -> Error {
    Error::Config(format!("{what} is required: pass {flag} or set it under [task]"))
}

impl TaskSpec {
    pub fn interpolate(table: &TaskTable, scale: Option<f64>, fps: Option<f64>) -> Result<Self> {
        let scale = scale.or(table.scale).ok_or_else(|| missing("scale", "--scale"))?;
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Config(format!("scale must be positive, got {scale}")));
        }
        Self::new(Mode::Interpolate { scale }, fps.or(table.fps))
    }

    pub fn inbetween(table: &TaskTable, gap: Option<(usize, usize)>, fps: Option<f64>) -> Result<Self> {
        let (start, len) = gap.or(table.gap).ok_or_else(|| missing("gap", "--gap START,LEN"))?;
        Self::new(Mode::Inbetween { gap: Gap { start, len } }, fps.or(table.fps))
    }

    pub fn extrapolate(
        table: &TaskTable,
        range: Option<(f64, f64)>,
        count: Option<usize>,
        fps: Option<f64>,
    ) -> Result<Self> {
        let (tmin, tmax) = range.or(table.range).ok_or_else(|| missing("range", "--range TMIN,TMAX"))?;
        if !(tmin.is_finite() && tmax.is_finite() && tmin < tmax) {
            return Err(Error::Config(format!("range needs finite TMIN < TMAX, got {tmin},{tmax}")));
        }
        let count = count.or(table.count);
        if count.is_some_and(|c| c < 2) {
            return Err(Error::Config("count must be at least 2".into()));
        }
        Self::new(Mode::Extrapolate { tmin, tmax, count }, fps.or(table.fps))
    }

    fn new(mode: Mode, fps: Option<f64>) -> Result<Self> {
        if let Some(f) = fps {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::Config(format!("fps must be positive, got {f}")));
            }
        }
        Ok(Self { mode, fps })
    }
}

/// Parses `A,B` pairs for clap.
pub fn parse_pair<T: std::str::FromStr>(s: &str) -> std::result::Result<(T, T), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected two comma-separated values, got `{s}`"))?;
    let parse = |v: &str| v.trim().parse::<T>().map_err(|_| format!("cannot parse `{v}`"));
    Ok((parse(a)?, parse(b)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_table() {
        let table = TaskTable { scale: Some(2.0), fps: Some(24.0), ..TaskTable::default() };
        let t = TaskSpec::interpolate(&table, Some(3.5), None).unwrap();
        assert_eq!(t.mode, Mode::Interpolate { scale: 3.5 });
        assert_eq!(t.fps, Some(24.0));
    }

    #[test]
    fn each_mode_requires_its_fields() {
        let empty = TaskTable::default();
        assert!(TaskSpec::interpolate(&empty, None, None).is_err());
        assert!(TaskSpec::inbetween(&empty, None, None).is_err());
        assert!(TaskSpec::extrapolate(&empty, None, None, None).is_err());
        assert!(TaskSpec::interpolate(&empty, Some(0.0), None).is_err());
        assert!(TaskSpec::extrapolate(&empty, Some((1.0, 0.5)), None, None).is_err());
        assert!(TaskSpec::extrapolate(&empty, Some((0.0, 1.0)), Some(1), None).is_err());
    }

    #[test]
    fn pairs() {
        assert_eq!(parse_pair::<usize>("10,5"), Ok((10, 5)));
        assert_eq!(parse_pair::<f64>("-0.2, 1.5"), Ok((-0.2, 1.5)));
        assert!(parse_pair::<usize>("10").is_err());
        assert!(parse_pair::<usize>("a,5").is_err());
    }
}
