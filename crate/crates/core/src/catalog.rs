//! Built-in mass sequences with their expected classification cells and the
//! horizons at which those cells are reproduced.

use crate::empirical::{Cell, FreqCell};
use crate::error::Result;
use crate::mass_seq::{MassLaw, MassSpec, RunIndex};
use serde::Serialize;

/// How far a sequence is generated before it is classified.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Terms(u64),
    Time(f64),
}

impl Horizon {
    pub fn index(&self, spec: &MassSpec) -> Result<RunIndex> {
        match *self {
            Horizon::Terms(n) => RunIndex::until_count(spec, n),
            Horizon::Time(t) => RunIndex::until_time(spec, t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CatalogEntry {
    /// Spec identifier as accepted on the command line.
    pub key: String,
    pub description: &'static str,
    pub spec: MassSpec,
    pub horizon: Horizon,
    /// `None` for auxiliary sequences without a chart position.
    pub expected: Option<Cell>,
}

/// Seed for the random entries of the table.
pub const CATALOG_SEED: u64 = 1;

const fn cell(regular: bool, bounded: bool, cesaro: bool, freq: FreqCell) -> Option<Cell> {
    Some(Cell { regular: Some(regular), bounded, cesaro_divergent: Some(cesaro), freq })
}

fn entry(spec: MassSpec, description: &'static str, horizon: Horizon, expected: Option<Cell>) -> CatalogEntry {
    CatalogEntry { key: spec.to_string(), description, spec, horizon, expected }
}

/// The fifteen classified sequences followed by auxiliary ones.
pub fn catalog() -> Vec<CatalogEntry> {
    use FreqCell::{None as NoFreq, Weak, L1};
    use Horizon::{Terms, Time};
    let iid = |law: MassLaw| MassSpec::Iid { law, seed: Some(CATALOG_SEED) };
    vec![
        entry(MassSpec::Const { c: 1.0 }, "unit increments", Terms(1 << 16), cell(true, true, false, L1)),
        entry(MassSpec::F0, "unit heads with vanishing tails", Terms(1 << 22), cell(true, true, false, L1)),
        entry(MassSpec::Fnot, "unit and tiny phases, oscillating frequency", Terms(1 << 22), cell(true, true, false, NoFreq)),
        entry(MassSpec::Irr { k: 1.0, l: 2.0 }, "alternating blocks of 1 and 2", Terms(1 << 26), cell(false, true, false, NoFreq)),
        entry(MassSpec::IrregBounded, "bounded irregular with vanishing frequency", Terms(1 << 24), cell(false, true, false, L1)),
        entry(MassSpec::Divergent, "linearly growing increments", Terms(1 << 16), cell(true, false, true, Weak)),
        entry(MassSpec::Cesar, "unit increments interleaved with growing ones", Terms(1 << 16), cell(true, false, true, Weak)),
        entry(MassSpec::Cesaroifreq, "Cesaro divergent without stable frequency", Terms(330), cell(true, false, true, NoFreq)),
        entry(MassSpec::Triangular, "triangular rows of one large and many unit increments", Terms(1 << 20), cell(true, false, false, Weak)),
        entry(MassSpec::Unbnofreq, "unbounded regular without stable frequency", Terms(1 << 22), cell(true, false, false, NoFreq)),
        entry(MassSpec::Remp, "unit runs alternating with single huge increments", Terms(1 << 22), cell(false, false, false, Weak)),
        entry(MassSpec::IrregL1, "huge increments separated by tiny runs", Time(1e7), cell(false, false, false, L1)),
        entry(MassSpec::Imifreq, "irregular without stable frequency", Terms(1 << 22), cell(false, false, false, NoFreq)),
        entry(iid(MassLaw::Uniform { values: vec![1.0, 2.0] }), "i.i.d. uniform on {1, 2}", Terms(1 << 20), cell(true, true, false, L1)),
        entry(iid(MassLaw::Pareto { alpha: 0.5, xmin: 1.0 }), "i.i.d. Pareto with infinite mean", Terms(1 << 20), cell(true, false, true, Weak)),
        entry(MassSpec::Geom4, "geometric growth by 4", Terms(64), None),
        entry(MassSpec::W2Counter, "masses with spike width 1/(k+1)", Terms(1 << 10), None),
    ]
}
