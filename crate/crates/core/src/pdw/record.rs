use std::fmt;

use crate::error::{Error, Result};

/// Number of PDW variables fed to the embedding.
pub const N_VARS: usize = 5;

/// PDW variables in their fixed tensor order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variable {
    Toa,
    Rf,
    Pw,
    Pa,
    Doa,
}

impl Variable {
    pub const ALL: [Variable; N_VARS] = [
        Variable::Toa,
        Variable::Rf,
        Variable::Pw,
        Variable::Pa,
        Variable::Doa,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Variable::Toa => "toa",
            Variable::Rf => "rf",
            Variable::Pw => "pw",
            Variable::Pa => "pa",
            Variable::Doa => "doa",
        }
    }

    pub fn from_name(name: &str) -> Option<Variable> {
        Variable::ALL.into_iter().find(|v| v.name() == name)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One pulse: time of arrival (µs), radio frequency (MHz), pulse width (µs),
/// pulse amplitude (dBm), direction of arrival (degrees) and emitter label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdwRecord {
    pub toa: f64,
    pub rf: f64,
    pub pw: f64,
    pub pa: f64,
    pub doa: f64,
    pub label: u16,
}

impl PdwRecord {
    /// Values in [`Variable::ALL`] order.
    pub fn values(&self) -> [f64; N_VARS] {
        [self.toa, self.rf, self.pw, self.pa, self.doa]
    }

    pub fn value(&self, var: Variable) -> f64 {
        self.values()[var.index()]
    }

    pub fn from_values(values: [f64; N_VARS], label: u16) -> Self {
        let [toa, rf, pw, pa, doa] = values;
        PdwRecord {
            toa,
            rf,
            pw,
            pa,
            doa,
            label,
        }
    }

    pub fn validate(&self, classes: usize) -> Result<()> {
        if !(self.pw > 0.0) {
            return Err(Error::Precondition(format!("pw must be positive, got {}", self.pw)));
        }
        if !(0.0..360.0).contains(&self.doa) {
            return Err(Error::Precondition(format!("doa must lie in [0, 360), got {}", self.doa)));
        }
        if usize::from(self.label) >= classes {
            return Err(Error::Precondition(format!(
                "label {} out of range for {classes} classes",
                self.label
            )));
        }
        Ok(())
    }
}

/// Closed real interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    fn check(&self, field: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite()) || self.lo > self.hi {
            return Err(Error::config(
                field,
                format!("empty or non-finite range [{}, {}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PriPattern {
    /// Fixed interval at the midpoint of the PRI range.
    Constant,
    /// Uniform draw from the PRI range for every pulse.
    Jittered,
    /// Cycle through the listed intervals.
    Staggered(Vec<f64>),
}

impl fmt::Display for PriPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PriPattern::Constant => f.write_str("constant"),
            PriPattern::Jittered => f.write_str("jittered"),
            PriPattern::Staggered(levels) => {
                let parts: Vec<String> = levels.iter().map(|l| l.to_string()).collect();
                write!(f, "staggered:{}", parts.join(","))
            }
        }
    }
}

impl std::str::FromStr for PriPattern {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "constant" => Ok(PriPattern::Constant),
            "jittered" => Ok(PriPattern::Jittered),
            _ => {
                let levels = s
                    .strip_prefix("staggered:")
                    .ok_or_else(|| format!("unknown PRI pattern `{s}`"))?;
                let levels = levels
                    .split(',')
                    .map(|l| l.trim().parse::<f64>().map_err(|e| format!("bad stagger level `{l}`: {e}")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(PriPattern::Staggered(levels))
            }
        }
    }
}

/// Parameter ranges of one emitter class.
#[derive(Debug, Clone, PartialEq)]
pub struct EmitterSpec {
    pub id: u16,
    pub name: String,
    pub doa: Interval,
    pub pw: Interval,
    pub rf: Interval,
    pub pri: Interval,
    pub pa: Interval,
    pub pri_pattern: PriPattern,
    pub pulse_count: usize,
}

impl EmitterSpec {
    pub fn validate(&self) -> Result<()> {
        self.doa.check("doa_range")?;
        self.pw.check("pw_range")?;
        self.rf.check("rf_range")?;
        self.pri.check("pri_range")?;
        self.pa.check("pa_range")?;
        if self.pri.lo <= 0.0 {
            return Err(Error::config("pri_range", "lower bound must be positive"));
        }
        if self.pw.lo <= 0.0 {
            return Err(Error::config("pw_range", "lower bound must be positive"));
        }
        if self.doa.lo < 0.0 || self.doa.hi >= 360.0 {
            return Err(Error::config("doa_range", "must lie inside [0, 360)"));
        }
        if self.pulse_count == 0 {
            return Err(Error::config("pulse_count", "must be positive"));
        }
        if let PriPattern::Staggered(levels) = &self.pri_pattern {
            if levels.is_empty() {
                return Err(Error::config("pri_pattern", "staggered pattern needs at least one level"));
            }
            if let Some(bad) = levels.iter().find(|l| !self.pri.contains(**l)) {
                return Err(Error::config(
                    "pri_pattern",
                    format!("stagger level {bad} outside pri_range [{}, {}]", self.pri.lo, self.pri.hi),
                ));
            }
        }
        Ok(())
    }

    pub fn mean_pri(&self) -> f64 {
        match &self.pri_pattern {
            PriPattern::Constant | PriPattern::Jittered => self.pri.mid(),
            PriPattern::Staggered(levels) => levels.iter().sum::<f64>() / levels.len() as f64,
        }
    }

    pub fn range(&self, var: Variable) -> Option<Interval> {
        match var {
            Variable::Toa => None,
            Variable::Rf => Some(self.rf),
            Variable::Pw => Some(self.pw),
            Variable::Pa => Some(self.pa),
            Variable::Doa => Some(self.doa),
        }
    }
}

// DOA, PW, RF, PRI, PA rows of the twelve emitter classes.
const TABLE1: [[(f64, f64); 5]; 12] = [
    [(54., 61.), (8., 9.), (9591., 9619.), (37., 147.), (-102., 0.)],
    [(39., 47.), (8., 10.), (9610., 9620.), (37., 148.), (-115., 0.)],
    [(38., 45.), (9., 10.), (9606., 9612.), (37., 63.), (-135., 0.)],
    [(44., 51.), (8., 10.), (9636., 9643.), (37., 121.), (-103., 0.)],
    [(45., 52.), (9., 11.), (9592., 9625.), (37., 113.), (-117., 0.)],
    [(43., 51.), (8., 10.), (9579., 9596.), (36., 111.), (-114., 0.)],
    [(57., 63.), (9., 11.), (9557., 9564.), (37., 98.), (-109., 0.)],
    [(58., 65.), (9., 10.), (9566., 9616.), (7., 41.), (-132., 0.)],
    [(57., 64.), (9., 10.), (9558., 9613.), (16., 52.), (-120., 0.)],
    [(51., 58.), (9., 10.), (9575., 9580.), (24., 44.), (-112., 0.)],
    [(38., 45.), (1., 2.), (9579., 9653.), (7., 39.), (-132., 0.)],
    [(49., 55.), (33., 38.), (2825., 2841.), (398., 508.), (-91., 0.)],
];

/// Built-in emitter preset for radar `row` (1-based, 1..=12) of the
/// parameter table, with jittered PRI, labelled `label`.
pub fn table1_preset(row: usize, label: u16) -> Result<EmitterSpec> {
    if !(1..=TABLE1.len()).contains(&row) {
        return Err(Error::config("scenario.emitters", format!("no preset radar {row}; valid rows are 1..=12")));
    }
    let [doa, pw, rf, pri, pa] = TABLE1[row - 1];
    Ok(EmitterSpec {
        id: label,
        name: format!("radar-{row}"),
        doa: Interval::new(doa.0, doa.1),
        pw: Interval::new(pw.0, pw.1),
        rf: Interval::new(rf.0, rf.1),
        pri: Interval::new(pri.0, pri.1),
        pa: Interval::new(pa.0, pa.1),
        pri_pattern: PriPattern::Jittered,
        pulse_count: 1000,
    })
}

/// Radars 2, 3 and 5: mutually overlapping DOA, RF and PRI ranges.
pub const HARD_ROWS: [usize; 3] = [2, 3, 5];
/// Radars 1, 11 and 12: disjoint pulse-width bands.
pub const EASY_ROWS: [usize; 3] = [1, 11, 12];

pub fn preset_emitters(rows: &[usize]) -> Result<Vec<EmitterSpec>> {
    rows.iter()
        .enumerate()
        .map(|(label, &row)| table1_preset(row, label as u16))
        .collect()
}
