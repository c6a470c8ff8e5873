//! Best known values for both problems, embedded exactly as published.

use std::fmt;

use improvevolve_core::{ProblemKind, Solution};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Source {
    Human,
    AlphaEvolve,
    ImprovEvolve,
    ImprovEvolvePlusE,
}

impl Source {
    pub fn label(&self) -> &'static str {
        match self {
            Source::Human => "Human",
            Source::AlphaEvolve => "AlphaEvolve",
            Source::ImprovEvolve => "ImprovEvolve",
            Source::ImprovEvolvePlusE => "ImprovEvolve+E",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Min,
    Max,
}

/// One published value. `printed` keeps the digits as published, so
/// trailing zeros carry the precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct KnownBest {
    pub problem: &'static str,
    pub n: Option<usize>,
    pub source: Source,
    pub printed: &'static str,
    pub direction: Direction,
}

impl KnownBest {
    pub fn value(&self) -> f64 {
        self.printed.parse().expect("embedded values parse")
    }

    pub fn decimals(&self) -> usize {
        self.printed.split_once('.').map_or(0, |(_, frac)| frac.len())
    }
}

const fn hex(n: usize, source: Source, printed: &'static str) -> KnownBest {
    KnownBest { problem: "hex", n: Some(n), source, printed, direction: Direction::Min }
}

const fn aci(source: Source, printed: &'static str) -> KnownBest {
    KnownBest { problem: "aci", n: None, source, printed, direction: Direction::Max }
}

use Source::{AlphaEvolve as AE, Human as HU, ImprovEvolve as IE, ImprovEvolvePlusE as IEE};

pub const KNOWN_BEST: &[KnownBest] = &[
    hex(11, HU, "3.9434"),
    hex(11, AE, "3.9301"),
    hex(11, IE, "3.9245"),
    hex(11, IEE, "3.9245"),
    hex(12, HU, "4.0000"),
    hex(12, AE, "3.9419"),
    hex(12, IE, "3.9416"),
    hex(12, IEE, "3.9416"),
    aci(HU, "0.94136"),
    aci(AE, "0.96102"),
    aci(IE, "0.9512"),
    aci(IEE, "0.96258"),
    hex(13, HU, "4.0000"),
    hex(13, IE, "4.0000"),
    hex(13, IEE, "4.0000"),
    hex(14, HU, "4.2724"),
    hex(14, IE, "4.2724"),
    hex(14, IEE, "4.2690"),
    hex(15, HU, "4.4541"),
    hex(15, IE, "4.4473"),
    hex(15, IEE, "4.4473"),
    hex(16, HU, "4.5363"),
    hex(16, IE, "4.5275"),
    hex(16, IEE, "4.5275"),
    hex(17, HU, "4.6188"),
    hex(17, IE, "4.6188"),
    hex(17, IEE, "4.6136"),
    hex(18, HU, "4.6188"),
    hex(18, IE, "4.6188"),
    hex(18, IEE, "4.6188"),
    hex(19, HU, "4.6188"),
    hex(19, IE, "4.6188"),
    hex(19, IEE, "4.6188"),
    hex(20, HU, "5.0000"),
    hex(20, IE, "5.0000"),
    hex(20, IEE, "5.0000"),
    hex(21, HU, "5.0000"),
    hex(21, IE, "5.0000"),
    hex(21, IEE, "5.0000"),
    hex(22, HU, "5.2856"),
    hex(22, IE, "5.2857"),
    hex(22, IEE, "5.2856"),
    hex(23, HU, "5.4286"),
    hex(23, IE, "5.4848"),
    hex(23, IEE, "5.4000"),
    hex(24, HU, "5.4848"),
    hex(24, IE, "5.4848"),
    hex(24, IEE, "5.4848"),
    hex(25, IE, "5.6510"),
    hex(25, IEE, "5.6239"),
    hex(26, IE, "5.7142"),
    hex(26, IEE, "5.7097"),
    hex(27, IE, "5.7142"),
    hex(27, IEE, "5.7142"),
    hex(28, IE, "5.9723"),
    hex(28, IEE, "5.9089"),
    hex(29, IE, "6.0000"),
    hex(29, IEE, "6.0000"),
    hex(30, IE, "6.0045"),
    hex(30, IEE, "6.0000"),
];

/// Rows for a problem instance.
pub fn rows_for(kind: ProblemKind) -> Vec<KnownBest> {
    KNOWN_BEST
        .iter()
        .filter(|r| match kind {
            ProblemKind::Hex { n } => r.problem == "hex" && r.n == Some(n),
            ProblemKind::Aci { .. } => r.problem == "aci",
        })
        .copied()
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Matches,
    Beats,
    Unmet,
}

/// Same digits when rounded to the printed precision, else strictly better
/// or not.
pub fn compare(value: f64, row: &KnownBest) -> Verdict {
    let rounded = format!("{value:.*}", row.decimals());
    if rounded == row.printed {
        return Verdict::Matches;
    }
    let better = match row.direction {
        Direction::Min => value < row.value(),
        Direction::Max => value > row.value(),
    };
    if better {
        Verdict::Beats
    } else {
        Verdict::Unmet
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchLine {
    pub row: KnownBest,
    pub verdict: Verdict,
    /// Signed amount by which the solution is better than the row.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub problem: &'static str,
    pub n: Option<usize>,
    /// L for hexagons, C for step functions.
    pub value: f64,
    pub lines: Vec<BenchLine>,
}

/// `value` is L (hexagons) or C (step functions).
pub fn bench(kind: ProblemKind, value: f64) -> BenchReport {
    let lines = rows_for(kind)
        .into_iter()
        .map(|row| {
            let margin = match row.direction {
                Direction::Min => row.value() - value,
                Direction::Max => value - row.value(),
            };
            BenchLine { row, verdict: compare(value, &row), margin }
        })
        .collect();
    let n = match kind {
        ProblemKind::Hex { n } => Some(n),
        ProblemKind::Aci { .. } => None,
    };
    BenchReport { problem: kind.name(), n, value, lines }
}

pub fn bench_solution(s: &Solution) -> BenchReport {
    let value = match s {
        Solution::Hex(c) => c.side_length(),
        Solution::Aci(f) => improvevolve_core::aci::aci_fitness(f).c_value,
    };
    bench(s.kind(), value)
}

fn names(lines: &[&BenchLine]) -> String {
    lines.iter().map(|l| format!("{} {}", l.row.source.label(), l.row.printed)).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (symbol, digits) = if self.problem == "hex" { ("L", 4) } else { ("C", 5) };
        match self.n {
            Some(n) => writeln!(f, "{} {n}: {symbol} = {:.*}", self.problem.to_uppercase(), digits + 2, self.value)?,
            None => writeln!(f, "{}: {symbol} = {:.*}", self.problem.to_uppercase(), digits + 2, self.value)?,
        }
        if self.lines.is_empty() {
            return writeln!(f, "no published values for this instance");
        }
        for l in &self.lines {
            let verdict = match l.verdict {
                Verdict::Matches => "matches",
                Verdict::Beats => "beats",
                Verdict::Unmet => "unmet",
            };
            writeln!(f, "  {:<15} {:>8}  {verdict:<7} gap {:+.6}", l.row.source.label(), l.row.printed, l.margin)?;
        }
        let pick = |v: Verdict| self.lines.iter().filter(|l| l.verdict == v).collect::<Vec<_>>();
        let (matches, beats, unmet) = (pick(Verdict::Matches), pick(Verdict::Beats), pick(Verdict::Unmet));
        let mut parts = Vec::new();
        if !matches.is_empty() {
            parts.push(format!("matches {}", names(&matches)));
        }
        parts.push(if beats.is_empty() { "beats none".into() } else { format!("beats {}", names(&beats)) });
        if !unmet.is_empty() {
            parts.push(format!("{} unmet", names(&unmet)));
        }
        writeln!(f, "{}", parts.join("; "))
    }
}

/// One line per row, tab separated, in table order.
pub fn table_fixture() -> String {
    KNOWN_BEST
        .iter()
        .map(|r| {
            let n = r.n.map_or_else(|| "-".to_string(), |n| n.to_string());
            let dir = match r.direction {
                Direction::Min => "min",
                Direction::Max => "max",
            };
            format!("{}\t{n}\t{}\t{}\t{dir}\n", r.problem, r.source.label(), r.printed)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_thirteen_matches_human() {
        let r = bench(ProblemKind::Hex { n: 13 }, 4.0 + 1e-12);
        assert!(r.lines.iter().all(|l| l.verdict == Verdict::Matches));
        assert!(r.to_string().contains("matches Human 4.0000"), "{r}");
    }

    #[test]
    fn hex_eleven_at_3_95_beats_none() {
        let text = bench(ProblemKind::Hex { n: 11 }, 3.95).to_string();
        assert!(text.contains("beats none"), "{text}");
        assert!(text.contains("Human 3.9434"), "{text}");
        assert!(text.contains("ImprovEvolve 3.9245"), "{text}");
        assert!(text.contains("unmet"), "{text}");
    }

    #[test]
    fn aci_gap_is_reported() {
        let r = bench(ProblemKind::Aci { resolution: 600 }, 0.90);
        let best = r.lines.iter().find(|l| l.row.printed == "0.96258").unwrap();
        assert_eq!(best.verdict, Verdict::Unmet);
        assert!((best.margin + 0.06258).abs() < 1e-12);
        assert!(r.to_string().contains("-0.062580"));
    }

    #[test]
    fn verdicts_respect_direction() {
        let row = KNOWN_BEST.iter().find(|r| r.problem == "aci" && r.source == Source::Human).unwrap();
        assert_eq!(compare(0.941355, row), Verdict::Matches);
        assert_eq!(compare(0.95, row), Verdict::Beats);
        assert_eq!(compare(0.93, row), Verdict::Unmet);
        let row = &KNOWN_BEST[0];
        assert_eq!(compare(3.94, row), Verdict::Beats);
        assert_eq!(compare(3.95, row), Verdict::Unmet);
    }
}
