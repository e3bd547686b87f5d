use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::sim::{DensityOp, Op};

/// Amplitudes that drift from unit norm by more than this are an error.
pub const NORM_SLACK: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Register {
    pub name: String,
    pub qubits: usize,
}

/// Ordered registers; the first register holds the most significant bits of
/// the basis index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    regs: Vec<Register>,
}

impl Layout {
    pub fn new(regs: &[(&str, usize)]) -> Result<Self> {
        let mut out: Vec<Register> = Vec::with_capacity(regs.len());
        for &(name, qubits) in regs {
            if out.iter().any(|r| r.name == name) {
                return Err(Error::Invariant(format!("duplicate register `{name}`")));
            }
            out.push(Register {
                name: name.to_string(),
                qubits,
            });
        }
        Ok(Self { regs: out })
    }

    pub fn registers(&self) -> &[Register] {
        &self.regs
    }

    pub fn total_qubits(&self) -> usize {
        self.regs.iter().map(|r| r.qubits).sum()
    }

    pub fn dim(&self) -> usize {
        1usize << self.total_qubits()
    }

    pub fn position(&self, name: &str) -> Result<usize> {
        self.regs
            .iter()
            .position(|r| r.name == name)
            .ok_or_else(|| Error::UnknownRegister(name.to_string()))
    }

    pub fn qubits(&self, name: &str) -> Result<usize> {
        Ok(self.regs[self.position(name)?].qubits)
    }

    /// Bit shift of register `k` inside the basis index.
    fn shift(&self, k: usize) -> usize {
        self.regs[k + 1..].iter().map(|r| r.qubits).sum()
    }

    /// Value of register `k` in basis index `idx`.
    fn value(&self, k: usize, idx: usize) -> usize {
        (idx >> self.shift(k)) & ((1usize << self.regs[k].qubits) - 1)
    }

    /// Per-register values of basis index `idx`, in layout order.
    pub fn values(&self, idx: usize) -> Vec<usize> {
        (0..self.regs.len()).map(|k| self.value(k, idx)).collect()
    }

    /// Basis index assembled from per-register values, in layout order.
    pub fn index(&self, values: &[usize]) -> usize {
        values
            .iter()
            .enumerate()
            .fold(0, |acc, (k, &v)| acc | (v << self.shift(k)))
    }
}

/// A condition on the basis state that gates an operation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ctrl {
    /// Register holds exactly this value.
    Value(String, usize),
    /// Bit `bit` (0 = least significant) of the register equals `set`.
    Bit(String, usize, bool),
}

impl Ctrl {
    pub fn value(reg: &str, v: usize) -> Self {
        Ctrl::Value(reg.to_string(), v)
    }

    pub fn bit(reg: &str, bit: usize) -> Self {
        Ctrl::Bit(reg.to_string(), bit, true)
    }
}

/// Index bookkeeping for applying an operator to a subset of registers.
struct Split {
    /// Offsets of each target sub-index inside the full index.
    target: Vec<usize>,
    /// Offsets of each configuration of the remaining registers.
    rest: Vec<usize>,
}

impl Split {
    fn new(layout: &Layout, targets: &[usize]) -> Self {
        let others: Vec<usize> = (0..layout.regs.len())
            .filter(|k| !targets.contains(k))
            .collect();
        Self {
            target: offsets(layout, targets),
            rest: offsets(layout, &others),
        }
    }
}

/// All index offsets spanned by the given registers, enumerated with the
/// first listed register most significant.
fn offsets(layout: &Layout, regs: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &k in regs {
        let shift = layout.shift(k);
        let size = 1usize << layout.regs[k].qubits;
        let mut next = Vec::with_capacity(out.len() * size);
        for &base in &out {
            for v in 0..size {
                next.push(base | (v << shift));
            }
        }
        out = next;
    }
    out
}

/// Register-partitioned state vector. Operations return new states.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    layout: Layout,
    amps: Vec<C64>,
}

impl SimState {
    /// All registers in |0>.
    pub fn init(layout: Layout) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[0] = C64::new(1.0, 0.0);
        Self { layout, amps }
    }

    /// Basis state with the given per-register values.
    pub fn basis(layout: Layout, values: &[usize]) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); layout.dim()];
        amps[layout.index(values)] = C64::new(1.0, 0.0);
        Self { layout, amps }
    }

    /// Wraps explicit amplitudes, which must have unit norm.
    pub fn from_amplitudes(layout: Layout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.dim() {
            return Err(Error::Dimension {
                expected: layout.dim(),
                found: amps.len(),
            });
        }
        let s = Self { layout, amps };
        s.check_norm()?;
        Ok(s)
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    fn check_norm(&self) -> Result<()> {
        let dev = (self.norm_sqr() - 1.0).abs();
        if dev > NORM_SLACK {
            return Err(Error::Invariant(format!("state norm drifted by {dev:e}")));
        }
        Ok(())
    }

    fn resolve(&self, names: &[&str]) -> Result<Vec<usize>> {
        names.iter().map(|n| self.layout.position(n)).collect()
    }

    fn target_dim(&self, targets: &[usize]) -> usize {
        1usize
            << targets
                .iter()
                .map(|&k| self.layout.regs[k].qubits)
                .sum::<usize>()
    }

    fn ctrl_holds(&self, ctrls: &[(usize, &Ctrl)], idx: usize) -> bool {
        ctrls.iter().all(|&(k, c)| {
            let v = self.layout.value(k, idx);
            match c {
                Ctrl::Value(_, want) => v == *want,
                Ctrl::Bit(_, bit, set) => ((v >> bit) & 1 == 1) == *set,
            }
        })
    }

    /// Applies `op` to the joint space of `targets` (first listed = most
    /// significant).
    pub fn apply(&self, op: &Op, targets: &[&str]) -> Result<Self> {
        self.apply_controlled(op, &[], targets)
    }

    /// Applies `op` on the branches where every control holds.
    pub fn apply_controlled(&self, op: &Op, controls: &[Ctrl], targets: &[&str]) -> Result<Self> {
        op.check_unitary()?;
        let mut out = self.clone();
        out.apply_branched_mut(controls, targets, |_| Some(op))?;
        Ok(out)
    }

    /// Applies a branch-dependent operator: for every configuration of the
    /// `selector` registers (values in listed order), `pick` returns the
    /// operator to apply to `targets`, or `None` to leave the branch alone.
    /// Operators returned by `pick` are validated for unitarity once per
    /// distinct selector value.
    pub fn apply_per_branch<'a, F>(
        &self,
        selector: &[&str],
        targets: &[&str],
        pick: F,
    ) -> Result<Self>
    where
        F: Fn(&[usize]) -> Option<&'a Op>,
    {
        let sel = self.resolve(selector)?;
        let sel_offsets = offsets(&self.layout, &sel);
        for off in &sel_offsets {
            let vals: Vec<usize> = sel.iter().map(|&k| self.layout.value(k, *off)).collect();
            if let Some(op) = pick(&vals) {
                op.check_unitary()?;
            }
        }
        let mut out = self.clone();
        let layout = self.layout.clone();
        let ctrls: Vec<Ctrl> = Vec::new();
        out.apply_branched_mut(&ctrls, targets, |idx| {
            let vals: Vec<usize> = sel.iter().map(|&k| layout.value(k, idx)).collect();
            pick(&vals)
        })?;
        Ok(out)
    }

    fn apply_branched_mut<'a, F>(
        &mut self,
        controls: &[Ctrl],
        targets: &[&str],
        pick: F,
    ) -> Result<()>
    where
        F: Fn(usize) -> Option<&'a Op>,
    {
        let tgt = self.resolve(targets)?;
        let ctrls: Vec<(usize, &Ctrl)> = controls
            .iter()
            .map(|c| {
                let name = match c {
                    Ctrl::Value(n, _) | Ctrl::Bit(n, _, _) => n,
                };
                let k = self.layout.position(name)?;
                if tgt.contains(&k) {
                    return Err(Error::Invariant(format!(
                        "register `{name}` is both control and target"
                    )));
                }
                Ok((k, c))
            })
            .collect::<Result<_>>()?;
        let dim = self.target_dim(&tgt);
        let split = Split::new(&self.layout, &tgt);
        let mut buf = vec![C64::new(0.0, 0.0); dim];
        for &base in &split.rest {
            if !self.ctrl_holds(&ctrls, base) {
                continue;
            }
            let Some(op) = pick(base) else { continue };
            if let Some(d) = op.dim() {
                if d != dim {
                    return Err(Error::Dimension {
                        expected: dim,
                        found: d,
                    });
                }
            }
            let mut any = false;
            for (t, &off) in split.target.iter().enumerate() {
                buf[t] = self.amps[base | off];
                any |= buf[t].re != 0.0 || buf[t].im != 0.0;
            }
            if !any {
                continue;
            }
            op.apply_to(&mut buf);
            for (t, &off) in split.target.iter().enumerate() {
                self.amps[base | off] = buf[t];
            }
        }
        self.check_norm()
    }

    /// Probability of each value of a register.
    pub fn marginal(&self, register: &str) -> Result<Vec<f64>> {
        let k = self.layout.position(register)?;
        let mut p = vec![0.0; 1usize << self.layout.regs[k].qubits];
        for (idx, z) in self.amps.iter().enumerate() {
            p[self.layout.value(k, idx)] += z.norm_sqr();
        }
        Ok(p)
    }

    /// Joint probabilities of several registers, indexed with the first
    /// listed register most significant.
    pub fn joint_marginal(&self, registers: &[&str]) -> Result<Vec<f64>> {
        let ks = self.resolve(registers)?;
        let mut p = vec![0.0; self.target_dim(&ks)];
        for (idx, z) in self.amps.iter().enumerate() {
            let mut key = 0;
            for &k in &ks {
                key = (key << self.layout.regs[k].qubits) | self.layout.value(k, idx);
            }
            p[key] += z.norm_sqr();
        }
        Ok(p)
    }

    /// Measures a register `shots` times; returns counts per outcome.
    pub fn measure<R: Rng>(&self, register: &str, shots: u64, rng: &mut R) -> Result<Vec<u64>> {
        if shots == 0 {
            return Err(Error::Parameter("shots must be at least 1".into()));
        }
        Ok(sample_counts(&self.marginal(register)?, shots, rng))
    }

    /// Single-shot measurement of a register.
    pub fn sample<R: Rng>(&self, register: &str, rng: &mut R) -> Result<usize> {
        Ok(sample_index(&self.marginal(register)?, rng))
    }

    /// Post-measurement state for `outcome` plus its probability.
    pub fn project(&self, register: &str, outcome: usize) -> Result<(Self, f64)> {
        let k = self.layout.position(register)?;
        let mut amps = self.amps.clone();
        let mut p = 0.0;
        for (idx, z) in amps.iter_mut().enumerate() {
            if self.layout.value(k, idx) == outcome {
                p += z.norm_sqr();
            } else {
                *z = C64::new(0.0, 0.0);
            }
        }
        if p <= 1e-24 {
            return Err(Error::ImpossibleOutcome {
                register: register.to_string(),
                outcome,
            });
        }
        let s = 1.0 / p.sqrt();
        amps.iter_mut().for_each(|z| *z *= s);
        Ok((
            Self {
                layout: self.layout.clone(),
                amps,
            },
            p,
        ))
    }

    /// Reduced density operator over `keep` (first listed most significant).
    pub fn partial_trace(&self, keep: &[&str]) -> Result<DensityOp> {
        let ks = self.resolve(keep)?;
        let dim = self.target_dim(&ks);
        let split = Split::new(&self.layout, &ks);
        let psi = DMatrix::from_fn(dim, split.rest.len(), |a, r| {
            self.amps[split.rest[r] | split.target[a]]
        });
        Ok(DensityOp::new(&psi * psi.adjoint()))
    }

    /// Amplitudes of `registers` with every other register fixed to the given
    /// values. Useful for reading out a product-form subsystem.
    pub fn slice(&self, registers: &[&str], fixed: &[(&str, usize)]) -> Result<Vec<C64>> {
        let ks = self.resolve(registers)?;
        let split = Split::new(&self.layout, &ks);
        let mut base = 0;
        for &(name, v) in fixed {
            let k = self.layout.position(name)?;
            base |= v << self.layout.shift(k);
        }
        Ok(split
            .target
            .iter()
            .map(|&off| self.amps[base | off])
            .collect())
    }

    /// |<self|other>|.
    pub fn fidelity(&self, other: &SimState) -> f64 {
        overlap(&self.amps, &other.amps).norm()
    }

    /// Amplitudes as (real, imag) pairs for JSON dumps.
    pub fn to_pairs(&self) -> Vec<(f64, f64)> {
        self.amps.iter().map(|z| (z.re, z.im)).collect()
    }
}

pub fn overlap(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Draws one index from a probability vector (which need not be exactly
/// normalized).
pub fn sample_index<R: Rng>(p: &[f64], rng: &mut R) -> usize {
    let total: f64 = p.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (k, &w) in p.iter().enumerate() {
        if u < w {
            return k;
        }
        u -= w;
    }
    p.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

/// Multinomial counts drawn as a chain of conditional binomials.
pub fn sample_counts<R: Rng>(p: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    let mut counts = vec![0u64; p.len()];
    let mut left = shots;
    let mut mass: f64 = p.iter().map(|w| w.max(0.0)).sum();
    for (k, &w) in p.iter().enumerate() {
        if left == 0 {
            break;
        }
        let w = w.max(0.0);
        if k + 1 == p.len() || w >= mass {
            counts[k] = left;
            break;
        }
        let q = (w / mass).clamp(0.0, 1.0);
        let c = Binomial::new(left, q).map(|b| b.sample(rng)).unwrap_or(0);
        counts[k] = c;
        left -= c;
        mass -= w;
    }
    counts
}
