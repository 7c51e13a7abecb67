use super::{tiny_mass, MassLaw, MassSpec, Run, TINY_EXP_FLOOR};
use crate::error::{Error, Result};
use crate::ext::ExtFloat;
use crate::rng::{StreamKey, MASS_REPLICATION};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Pareto};
use std::collections::VecDeque;

type Block = (ExtFloat, u64);

/// Appends blocks to the queue; must push at least one block or fail.
pub(super) trait Refill: Send {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()>;
}

/// Splits generator blocks into runs of bounded length.
pub(crate) struct Splitter {
    gen: Box<dyn Refill>,
    queue: VecDeque<Block>,
}

impl Splitter {
    pub(super) fn new(gen: Box<dyn Refill>) -> Self {
        Splitter { gen, queue: VecDeque::new() }
    }

    fn front(&mut self) -> Result<&mut Block> {
        while self.queue.front().is_none_or(|b| b.1 == 0) {
            if self.queue.pop_front().is_none() {
                self.gen.refill(&mut self.queue)?;
            }
        }
        Ok(self.queue.front_mut().expect("non-empty queue"))
    }

    pub(super) fn peek(&mut self) -> Result<Block> {
        Ok(*self.front()?)
    }

    pub(super) fn next(&mut self, max: u64) -> Result<Run> {
        let block = self.front()?;
        let count = block.1.min(max);
        block.1 -= count;
        Ok(Run { mass: block.0, count })
    }

    fn single(&mut self) -> Result<ExtFloat> {
        Ok(self.next(1)?.mass)
    }
}

fn ext(x: f64) -> ExtFloat {
    ExtFloat::from_f64(x)
}

/// Pushes `2^-k` for `k` in `first..first+count`.
fn push_tiny(q: &mut VecDeque<Block>, first: u64, count: u64) {
    let mut k = first;
    let end = first + count;
    while k < end && k < TINY_EXP_FLOOR {
        q.push_back((ext(tiny_mass(k)), 1));
        k += 1;
    }
    if k < end {
        q.push_back((ext(tiny_mass(TINY_EXP_FLOOR)), end - k));
    }
}

pub(super) fn build(spec: &MassSpec) -> Result<Box<dyn Refill>> {
    Ok(match spec {
        MassSpec::Const { c } => Box::new(Const(*c)),
        MassSpec::Explicit { masses } => Box::new(Explicit { masses: masses.clone(), done: false }),
        MassSpec::F0 => Box::new(TriArray::new(Splitter::new(Box::new(Const(1.0))))),
        MassSpec::IrregBounded => Box::new(TriArray::new(Splitter::new(Box::new(Irr::new(1.0, 2.0))))),
        MassSpec::Triangular => Box::new(Triangular { row: 0 }),
        MassSpec::Irr { k, l } => Box::new(Irr::new(*k, *l)),
        MassSpec::Cesar => Box::new(Cesar { k: 0 }),
        MassSpec::Divergent => Box::new(Divergent { k: 0 }),
        MassSpec::Remp => Box::new(Remp::new()),
        MassSpec::IrregL1 => Box::new(IrregL1 { remp: Splitter::new(Box::new(Remp::new())), j: 0, next_k: 1, s_prime: 0 }),
        MassSpec::Fnot => Box::new(Fnot::new(None)),
        MassSpec::Unbnofreq => Box::new(Fnot::new(Some(Splitter::new(Box::new(Triangular { row: 0 }))))),
        MassSpec::Imifreq => Box::new(Fnot::new(Some(Splitter::new(Box::new(Remp::new()))))),
        MassSpec::Cesaroifreq => {
            Box::new(Cesaroifreq { irr: Splitter::new(Box::new(Irr::new(1.0, 2.0))), k: 0, total: ExtFloat::ZERO })
        }
        MassSpec::Iid { law, seed } => {
            let seed = seed.ok_or_else(|| Error::InvalidSpec("iid mass sequence requires a seed".into()))?;
            Box::new(Iid { law: law.clone(), rng: StreamKey::new(seed, MASS_REPLICATION).stream(0) })
        }
        MassSpec::Geom4 => Box::new(Geometric { base: ext(4.0), pow: ExtFloat::ONE }),
        MassSpec::Geometric { base } => Box::new(Geometric { base: ext(*base), pow: ExtFloat::ONE }),
        MassSpec::W2Counter => Box::new(W2Counter { k: 0 }),
    })
}

struct Const(f64);

impl Refill for Const {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        q.push_back((ext(self.0), u64::MAX));
        Ok(())
    }
}

struct Explicit {
    masses: Vec<f64>,
    done: bool,
}

impl Refill for Explicit {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        if self.done || self.masses.is_empty() {
            return Err(Error::SequenceExhausted(self.masses.len()));
        }
        self.done = true;
        q.extend(self.masses.iter().map(|&m| (ext(m), 1)));
        Ok(())
    }
}

/// Row `i` is a head term followed by `i - 1` copies of `2^-(i-1)`.
struct TriArray {
    head: Splitter,
    row: u64,
}

impl TriArray {
    fn new(head: Splitter) -> Self {
        TriArray { head, row: 0 }
    }
}

impl Refill for TriArray {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.row += 1;
        q.push_back((self.head.single()?, 1));
        if self.row >= 2 {
            q.push_back((ext(tiny_mass(self.row - 1)), self.row - 1));
        }
        Ok(())
    }
}

/// Row `i` is `i` followed by `i - 1` ones.
struct Triangular {
    row: u64,
}

impl Refill for Triangular {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.row += 1;
        q.push_back((ext(self.row as f64), 1));
        if self.row >= 2 {
            q.push_back((ExtFloat::ONE, self.row - 1));
        }
        Ok(())
    }
}

/// Alternating blocks of `A_n` copies of `K` and `B_n` copies of `L`, with
/// the block lengths chosen greedily as the smallest admissible integers.
struct Irr {
    k: f64,
    l: f64,
    n: u64,
    a: u64,
    b: u64,
    sa: f64,
    sb: f64,
}

impl Irr {
    fn new(k: f64, l: f64) -> Self {
        Irr { k, l, n: 0, a: 0, b: 0, sa: 0.0, sb: 0.0 }
    }

    /// Smallest integer `x > prev` with `(sum + x) >= need`.
    fn least(prev: u64, sum: f64, need: f64) -> u64 {
        let mut x = (need - sum).ceil().max(0.0) as u64;
        while sum + (x as f64) < need {
            x += 1;
        }
        x.max(prev + 1)
    }
}

impl Refill for Irr {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        if self.n == 0 {
            self.a = 1;
            self.b = 1;
        } else {
            let n = self.n as f64;
            self.a = Irr::least(self.a, self.sa, n * self.l * self.sb / self.k);
            self.b = Irr::least(self.b, self.sb, n * self.k * (self.sa + self.a as f64) / self.l);
        }
        self.n += 1;
        self.sa += self.a as f64;
        self.sb += self.b as f64;
        if self.sa > 2f64.powi(62) || self.sb > 2f64.powi(62) {
            return Err(Error::Overflow("example_irr block lengths exceed u64".into()));
        }
        q.push_back((ext(self.k), self.a));
        q.push_back((ext(self.l), self.b));
        Ok(())
    }
}

struct Cesar {
    k: u64,
}

impl Refill for Cesar {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.k += 1;
        let m = if self.k % 2 == 1 { 1.0 } else { self.k as f64 };
        q.push_back((ext(m), 1));
        Ok(())
    }
}

struct Divergent {
    k: u64,
}

impl Refill for Divergent {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.k += 1;
        q.push_back((ext(self.k as f64), 1));
        Ok(())
    }
}

/// `N_i` ones followed by a single `K_i`, with `K_i = i * (N_1 + .. + N_i)`
/// and `N_{i+1} = i * (K_1 + .. + K_i)`.
struct Remp {
    i: u128,
    n_next: u128,
    sum_n: u128,
    sum_k: u128,
}

impl Remp {
    fn new() -> Self {
        Remp { i: 0, n_next: 1, sum_n: 0, sum_k: 0 }
    }
}

impl Refill for Remp {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.i += 1;
        let n_i = self.n_next;
        self.sum_n += n_i;
        let k_i = self.i * self.sum_n;
        self.sum_k += k_i;
        self.n_next = self.i * self.sum_k;
        if self.n_next > u64::MAX as u128 / 4 {
            return Err(Error::Overflow("example_remp block lengths exceed u64".into()));
        }
        q.push_back((ExtFloat::ONE, n_i as u64));
        q.push_back((ext(k_i as f64), 1));
        Ok(())
    }
}

/// Terms of the `remp` sequence placed at `tau(j)`, separated by runs of
/// tiny masses `2^-k`, with `tau(j) - tau(j-1) = A_j > j (S'_j + 1)`.
struct IrregL1 {
    remp: Splitter,
    j: u64,
    next_k: u64,
    s_prime: u128,
}

fn overflow() -> Error {
    Error::Overflow("example_irregL1 index exceeds u64".into())
}

impl Refill for IrregL1 {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        let m = self.remp.single()?;
        self.j += 1;
        self.s_prime += m.to_f64_lossy() as u128;
        if self.j > 1 {
            let a_j = self.j as u128 * (self.s_prime + 1) + 1;
            if a_j > (u64::MAX / 4) as u128 {
                return Err(Error::Overflow("example_irregL1 gaps exceed u64".into()));
            }
            let gap = a_j as u64 - 1;
            push_tiny(q, self.next_k, gap);
            self.next_k = self.next_k.checked_add(gap + 1).ok_or_else(overflow)?;
        } else {
            self.next_k += 1;
        }
        q.push_back((m, 1));
        Ok(())
    }
}

/// Alternates a phase of tiny masses (while the share of unit masses exceeds
/// 1/4) with a phase of unit increments (while that share is below 3/4).
/// With a replacement sequence, the `k`-th unit increment is replaced by the
/// `k`-th term of that sequence; the share is tracked on the emitted terms.
struct Fnot {
    repl: Option<Splitter>,
    ones: u128,
    n: u128,
    small_mode: bool,
}

impl Fnot {
    fn new(repl: Option<Splitter>) -> Self {
        Fnot { repl, ones: 0, n: 0, small_mode: true }
    }

    fn emit(&mut self, q: &mut VecDeque<Block>, m: ExtFloat, count: u64) {
        if m == ExtFloat::ONE {
            self.ones += count as u128;
        }
        self.n += count as u128;
        q.push_back((m, count));
    }
}

impl Refill for Fnot {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        if self.n > (u64::MAX / 8) as u128 {
            return Err(Error::Overflow("example_Fnot index exceeds u64".into()));
        }
        if self.n == 0 {
            let m = match &mut self.repl {
                Some(r) => r.single()?,
                None => ExtFloat::ONE,
            };
            self.emit(q, m, 1);
            return Ok(());
        }
        loop {
            if self.small_mode {
                self.small_mode = false;
                if 4 * self.ones > self.n {
                    let count = (4 * self.ones - self.n) as u64;
                    push_tiny(q, self.n as u64 + 1, count);
                    self.n += count as u128;
                    return Ok(());
                }
            } else if 4 * self.ones < 3 * self.n {
                let deficit = (3 * self.n - 4 * self.ones) as u64;
                match &mut self.repl {
                    None => self.emit(q, ExtFloat::ONE, deficit),
                    Some(r) => {
                        let (m, _) = r.peek()?;
                        let run = r.next(if m == ExtFloat::ONE { deficit } else { 1 })?;
                        self.emit(q, run.mass, run.count);
                    }
                }
                return Ok(());
            } else {
                self.small_mode = true;
            }
        }
    }
}

/// `m_{2k-1} = m'_k` from `example_irr`, `m_{2k} = k (m_1 + .. + m_{2k-1})`.
struct Cesaroifreq {
    irr: Splitter,
    k: u64,
    total: ExtFloat,
}

impl Refill for Cesaroifreq {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.k += 1;
        let m = self.irr.single()?;
        self.total = self.total + m;
        let big = self.total * (self.k as f64);
        self.total = self.total + big;
        q.push_back((m, 1));
        q.push_back((big, 1));
        Ok(())
    }
}

struct Iid {
    law: MassLaw,
    rng: ChaCha8Rng,
}

impl Refill for Iid {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        let m = match &self.law {
            MassLaw::Uniform { values } => values[self.rng.random_range(0..values.len())],
            MassLaw::Discrete { atoms } => {
                let u: f64 = self.rng.random();
                let mut acc = 0.0;
                let mut pick = atoms[atoms.len() - 1].0;
                for &(v, p) in atoms {
                    acc += p;
                    if u < acc {
                        pick = v;
                        break;
                    }
                }
                pick
            }
            MassLaw::Exponential { rate } => {
                let d = Exp::new(*rate).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                loop {
                    let x = d.sample(&mut self.rng);
                    if x > 0.0 {
                        break x;
                    }
                }
            }
            MassLaw::Pareto { alpha, xmin } => {
                let d = Pareto::new(*xmin, *alpha).map_err(|e| Error::InvalidSpec(e.to_string()))?;
                d.sample(&mut self.rng)
            }
        };
        if !m.is_finite() {
            return Err(Error::Overflow("random mass is not finite".into()));
        }
        q.push_back((ext(m), 1));
        Ok(())
    }
}

struct Geometric {
    base: ExtFloat,
    pow: ExtFloat,
}

impl Refill for Geometric {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.pow = self.pow * self.base;
        q.push_back((self.pow, 1));
        Ok(())
    }
}

/// `m_k = (k + 1)^2 - 1`, so that `1 / sqrt(m_k + 1) = 1 / (k + 1)`.
struct W2Counter {
    k: u64,
}

impl Refill for W2Counter {
    fn refill(&mut self, q: &mut VecDeque<Block>) -> Result<()> {
        self.k += 1;
        let k = self.k as f64;
        q.push_back((ext(k * k + 2.0 * k), 1));
        Ok(())
    }
}
