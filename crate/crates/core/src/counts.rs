//! Count tables indexed by basis and intensity setting.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;

use crate::config::Intensity;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub const BOTH: [Basis; 2] = [Basis::Z, Basis::X];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Basis::Z => "Z",
            Basis::X => "X",
        })
    }
}

/// Per-side total intensity of a pair. In the X basis the levels stand for
/// the doubled values 2ν and 2μ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Setting {
    pub a: Intensity,
    pub b: Intensity,
}

impl Setting {
    pub const fn new(a: Intensity, b: Intensity) -> Self {
        Setting { a, b }
    }

    /// The nine settings, key settings first.
    pub const ALL: [Setting; 9] = {
        use Intensity::*;
        [
            Setting::new(Signal, Signal),
            Setting::new(Signal, Decoy),
            Setting::new(Decoy, Signal),
            Setting::new(Decoy, Decoy),
            Setting::new(Vacuum, Signal),
            Setting::new(Vacuum, Decoy),
            Setting::new(Signal, Vacuum),
            Setting::new(Decoy, Vacuum),
            Setting::new(Vacuum, Vacuum),
        ]
    };

    /// Both sides nonzero: Z key settings, phase-sifted X settings.
    pub fn both_nonzero(self) -> bool {
        !self.a.is_vacuum() && !self.b.is_vacuum()
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).unwrap()
    }

    pub fn label(self, basis: Basis) -> (&'static str, &'static str) {
        (level_label(self.a, basis), level_label(self.b, basis))
    }
}

fn level_label(l: Intensity, basis: Basis) -> &'static str {
    match (l, basis) {
        (Intensity::Vacuum, _) => "0",
        (Intensity::Decoy, Basis::Z) => "nu",
        (Intensity::Signal, Basis::Z) => "mu",
        (Intensity::Decoy, Basis::X) => "2nu",
        (Intensity::Signal, Basis::X) => "2mu",
    }
}

fn parse_level(s: &str, basis: Basis) -> Option<Intensity> {
    Intensity::ALL.into_iter().find(|&l| level_label(l, basis) == s)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    #[serde(rename = "M")]
    pub m: f64,
    #[serde(rename = "EM")]
    pub em: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CountTable {
    cells: [[Cell; 9]; 2],
    /// Optional per-setting prior weights replacing the nominal ones.
    pub sent_pairs_prior: Option<[[f64; 9]; 2]>,
}

impl CountTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, basis: Basis, s: Setting) -> Cell {
        self.cells[basis.index()][s.index()]
    }

    pub fn get_mut(&mut self, basis: Basis, s: Setting) -> &mut Cell {
        &mut self.cells[basis.index()][s.index()]
    }

    pub fn set(&mut self, basis: Basis, s: Setting, m: f64, em: f64) {
        *self.get_mut(basis, s) = Cell { m, em };
    }

    pub fn add(&mut self, basis: Basis, s: Setting, m: f64, em: f64) {
        let c = self.get_mut(basis, s);
        c.m += m;
        c.em += em;
    }

    pub fn merge(&mut self, other: &CountTable) {
        for b in Basis::BOTH {
            for s in Setting::ALL {
                let c = other.get(b, s);
                self.add(b, s, c.m, c.em);
            }
        }
    }

    pub fn total_m(&self, basis: Basis) -> f64 {
        self.cells[basis.index()].iter().map(|c| c.m).sum()
    }

    pub fn prior(&self, basis: Basis, s: Setting) -> Option<f64> {
        self.sent_pairs_prior.map(|p| p[basis.index()][s.index()])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Basis, Setting, Cell)> + '_ {
        Basis::BOTH
            .into_iter()
            .flat_map(move |b| Setting::ALL.into_iter().map(move |s| (b, s, self.get(b, s))))
    }

    pub fn validate(&self) -> Result<()> {
        for (b, s, c) in self.iter() {
            let (la, lb) = s.label(b);
            if !(c.m.is_finite() && c.em.is_finite()) || c.m < 0.0 || c.em < 0.0 || c.em > c.m {
                return Err(Error::Data(format!(
                    "cell {b},{la},{lb} violates 0 <= EM <= M (M = {}, EM = {})",
                    c.m, c.em
                )));
            }
        }
        Ok(())
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Data(e.to_string()))?.clone();
        let want = ["basis", "set_a", "set_b", "M", "EM"];
        if headers.len() < 5 || headers.iter().take(5).ne(want.iter().copied()) {
            return Err(Error::Data(format!("counts header must be {}", want.join(","))));
        }
        let prior_col = headers.iter().position(|h| h == "prior");
        let mut table = CountTable::new();
        let mut seen = [[false; 9]; 2];
        let mut prior = [[0.0; 9]; 2];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Data(e.to_string()))?;
            let bad = |what: &str| Error::Data(format!("counts row {}: {what}", line + 1));
            let basis = match &rec[0] {
                "Z" => Basis::Z,
                "X" => Basis::X,
                other => return Err(bad(&format!("unknown basis {other:?}"))),
            };
            let a = parse_level(&rec[1], basis).ok_or_else(|| bad(&format!("bad set_a {:?}", &rec[1])))?;
            let b = parse_level(&rec[2], basis).ok_or_else(|| bad(&format!("bad set_b {:?}", &rec[2])))?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .and_then(|v| v.parse::<f64>().ok())
                    .ok_or_else(|| bad(&format!("column {} is not a number", i + 1)))
            };
            let s = Setting::new(a, b);
            if std::mem::replace(&mut seen[basis.index()][s.index()], true) {
                return Err(bad("duplicate cell"));
            }
            table.set(basis, s, num(3)?, num(4)?);
            if let Some(pc) = prior_col {
                prior[basis.index()][s.index()] = num(pc)?;
            }
        }
        let missing: Vec<String> = table
            .iter()
            .filter(|(b, s, _)| !seen[b.index()][s.index()])
            .map(|(b, s, _)| {
                let (la, lb) = s.label(b);
                format!("{b},{la},{lb}")
            })
            .collect();
        if !missing.is_empty() {
            return Err(Error::Data(format!("missing count cells: {}", missing.join(" "))));
        }
        if prior_col.is_some() {
            table.sent_pairs_prior = Some(prior);
        }
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("basis,set_a,set_b,M,EM");
        if self.sent_pairs_prior.is_some() {
            out.push_str(",prior");
        }
        out.push('\n');
        for (b, s, c) in self.iter() {
            let (la, lb) = s.label(b);
            out.push_str(&format!("{b},{la},{lb},{},{}", c.m, c.em));
            if let Some(p) = self.prior(b, s) {
                out.push_str(&format!(",{p}"));
            }
            out.push('\n');
        }
        out
    }
}
