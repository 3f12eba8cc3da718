//! Checks a correlation table against the self-testing conditions for a target state.

use serde::Serialize;

use crate::experiment::{Behavior, Variant, BSM_INPUT};
use crate::gates::{chsh_combination, correction_unitary, Pairing, Pauli, CHSH_BLOCKS};
use crate::tensor::{PureState, SiteLayout};
use crate::{Error, Result};

pub const MAX_3CHSH: f64 = 6.0 * std::f64::consts::SQRT_2;

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Tolerance {
    pub chsh: f64,
    pub tomography: f64,
    pub alignment: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { chsh: 1e-9, tomography: 1e-9, alignment: 1e-9 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PairChsh {
    /// Zero-based pair index.
    pub pair: usize,
    /// Sum of the three CHSH values; in the fully variant, the context with the largest deviation.
    pub total: f64,
    pub deviation: f64,
    /// Auxiliary settings `(y, y', y'')` of the reported context, fully variant only.
    pub context: Option<[String; 3]>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChshReport {
    pub pairs: Vec<PairChsh>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TomographyReport {
    pub max_residual: f64,
    /// Bell outcomes and Pauli settings where the residual peaks.
    pub worst_outcomes: Vec<usize>,
    pub worst_settings: Vec<usize>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentEntry {
    pub pairing: &'static str,
    pub parties: (usize, usize),
    pub outcome: String,
    pub column: &'static str,
    pub value: f64,
    pub expected: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AlignmentReport {
    pub max_residual: f64,
    pub entries: Vec<AlignmentEntry>,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CertReport {
    pub variant: Variant,
    pub n: usize,
    pub chsh: ChshReport,
    pub tomography: TomographyReport,
    pub alignment: Option<AlignmentReport>,
    pub pass: bool,
}

impl CertReport {
    pub fn failing_pairs(&self) -> Vec<usize> {
        self.chsh.pairs.iter().filter(|p| !p.pass).map(|p| p.pair).collect()
    }
}

fn aux_bit(behavior: &Behavior, j: usize, outcomes: &[usize]) -> usize {
    let s = behavior.scenario();
    let o = outcomes[s.aux_party(j)];
    match s.variant {
        Variant::Network => o,
        Variant::Fully => (o >> (s.n - 1 - j)) & 1,
    }
}

/// `<A_x B_y>` for pair `j`, other parties at input 0; `aux_input` is the auxiliary party's input index.
pub fn chsh_correlator(behavior: &Behavior, j: usize, x: usize, aux_input: usize) -> Result<f64> {
    let s = behavior.scenario();
    if j >= s.n || x >= 6 {
        return Err(Error::Alphabet(format!("pair {j}, input {x}")));
    }
    let mut inputs = vec![0; s.num_parties()];
    inputs[j] = x;
    inputs[s.aux_party(j)] = aux_input;
    behavior.expectation(&inputs, |o| if (o[j] + aux_bit(behavior, j, o)).is_multiple_of(2) { 1.0 } else { -1.0 })
}

/// CHSH value of block `k` (0..3) for pair `j`; `context` gives the auxiliary inputs standing for settings 0, 1, 2.
pub fn chsh_value(behavior: &Behavior, j: usize, k: usize, context: [usize; 3]) -> Result<f64> {
    let block = *CHSH_BLOCKS.get(k).ok_or_else(|| Error::Alphabet(format!("CHSH block {k}")))?;
    let (x1, x2, y1, y2) = block;
    let mut corr = [[0.0; 3]; 6];
    for x in [x1, x2] {
        for y in [y1, y2] {
            corr[x][y] = chsh_correlator(behavior, j, x, context[y])?;
        }
    }
    Ok(chsh_combination(block, |x, y| corr[x][y]))
}

fn total_for(corr: &[Vec<f64>], context: [usize; 3]) -> f64 {
    CHSH_BLOCKS.iter().map(|&b| chsh_combination(b, |x, y| corr[x][context[y]])).sum()
}

pub fn check_3chsh(behavior: &Behavior, tol: f64) -> Result<ChshReport> {
    let s = behavior.scenario();
    let mut pairs = Vec::with_capacity(s.n);
    for j in 0..s.n {
        let entry = match s.variant {
            Variant::Network => {
                let total: f64 = (0..3).map(|k| chsh_value(behavior, j, k, [0, 1, 2])).sum::<Result<f64>>()?;
                let deviation = (total - MAX_3CHSH).abs();
                PairChsh { pair: j, total, deviation, context: None, pass: deviation <= tol }
            }
            Variant::Fully => {
                let settings = 3usize.pow(s.n as u32);
                let corr: Vec<Vec<f64>> = (0..6)
                    .map(|x| (0..settings).map(|y| chsh_correlator(behavior, j, x, y)).collect())
                    .collect::<Result<_>>()?;
                let with_value =
                    |v: usize| -> Vec<usize> { (0..settings).filter(|&y| s.y_vector(y)[j] == v).collect() };
                let (c0, c1, c2) = (with_value(0), with_value(1), with_value(2));
                let mut worst: Option<(f64, [usize; 3])> = None;
                for &a in &c0 {
                    for &b in &c1 {
                        for &c in &c2 {
                            let t = total_for(&corr, [a, b, c]);
                            if worst.is_none_or(|(w, _)| (t - MAX_3CHSH).abs() > (w - MAX_3CHSH).abs()) {
                                worst = Some((t, [a, b, c]));
                            }
                        }
                    }
                }
                let (total, ctx) = worst.expect("at least one context");
                let deviation = (total - MAX_3CHSH).abs();
                let label = |y: usize| s.input_label(s.aux_party(j), y);
                PairChsh {
                    pair: j,
                    total,
                    deviation,
                    context: Some([label(ctx[0]), label(ctx[1]), label(ctx[2])]),
                    pass: deviation <= tol,
                }
            }
        };
        pairs.push(entry);
    }
    let pass = pairs.iter().all(|p| p.pass);
    Ok(ChshReport { pairs, pass })
}

/// `4^-N <psi| (⊗_j U_{a_j}^† sigma_{k_j} U_{a_j}) |psi>`.
pub fn teleported_expectation(psi: &PureState, a: &[usize], k: &[usize]) -> Result<f64> {
    let n = psi.layout().num_sites();
    let mut v = psi.clone();
    for j in 0..n {
        let u = correction_unitary(a[j])?;
        let op = u.adjoint().compose(&Pauli::from_index(k[j])?.op())?.compose(&u)?;
        v = v.apply(&op, &[j])?;
    }
    Ok(psi.inner(&v)?.re / 4f64.powi(n as i32))
}

pub fn check_tomography_condition(behavior: &Behavior, psi: &PureState, tol: f64) -> Result<TomographyReport> {
    let s = behavior.scenario();
    let n = s.n;
    if psi.layout() != &SiteLayout::qubits(n) {
        return Err(Error::DimensionMismatch(format!("target must have {n} qubits")));
    }
    let settings = 3usize.pow(n as u32);
    let mut report = TomographyReport { max_residual: 0.0, worst_outcomes: vec![], worst_settings: vec![], pass: true };
    for kin in 0..settings {
        let k = s.y_vector(kin);
        let mut inputs = vec![BSM_INPUT; n];
        match s.variant {
            Variant::Network => inputs.extend(&k),
            Variant::Fully => inputs.push(kin),
        }
        let row = behavior.require(&inputs)?;
        let aux_block = 1usize << n;
        for a_idx in 0..4usize.pow(n as u32) {
            let lhs: f64 = (0..aux_block)
                .map(|b| {
                    let p = row.probs[a_idx * aux_block + b];
                    if b.count_ones() % 2 == 0 {
                        p
                    } else {
                        -p
                    }
                })
                .sum();
            let a: Vec<usize> = (0..n).map(|j| (a_idx >> (2 * (n - 1 - j))) & 3).collect();
            let rhs = teleported_expectation(psi, &a, &k)?;
            let r = (lhs - rhs).abs();
            if r > report.max_residual || report.worst_outcomes.is_empty() {
                report.max_residual = report.max_residual.max(r);
                report.worst_outcomes = a;
                report.worst_settings = k.clone();
            }
        }
    }
    report.pass = report.max_residual <= tol;
    Ok(report)
}

fn sign(bit: usize) -> f64 {
    if bit.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

pub fn check_alignment(behavior: &Behavior, tol: f64) -> Result<AlignmentReport> {
    let s = behavior.scenario();
    if s.variant != Variant::Fully {
        return Err(Error::InvalidArgument("alignment conditions only exist in the fully variant".into()));
    }
    let n = s.n;
    let mut entries = Vec::new();
    for pairing in [Pairing::Even, Pairing::Odd] {
        let pairs = pairing.pairs(n);
        let count = pairs.len();
        let aux_in = s.pairing_input(pairing);
        for (m, &(p, q)) in pairs.iter().enumerate() {
            let digit = |o: &[usize]| (o[n] >> (2 * (count - 1 - m))) & 3;
            let corr = |x: usize, xq: usize, beta: usize| -> Result<f64> {
                let mut inputs = vec![0; s.num_parties()];
                inputs[p] = x;
                inputs[q] = xq;
                inputs[n] = aux_in;
                behavior.expectation(&inputs, |o| if digit(o) == beta { sign(o[p] + o[q]) } else { 0.0 })
            };
            for beta in 0..4 {
                let (b1, b2) = (beta >> 1, beta & 1);
                let mut inputs = vec![0; s.num_parties()];
                inputs[n] = aux_in;
                let identity = behavior.expectation(&inputs, |o| if digit(o) == beta { 1.0 } else { 0.0 })?;
                let mut zz = 0.0;
                let mut xx = 0.0;
                let mut yy = 0.0;
                for x in 0..2 {
                    for xq in 0..2 {
                        zz += 0.5 * corr(x, xq, beta)?;
                        xx += 0.5 * sign(x + xq) * corr(x, xq, beta)?;
                        yy += 0.5 * sign(x + xq) * corr(x + 2, xq + 2, beta)?;
                    }
                }
                let outcome = crate::gates::BELL_LABELS[beta].to_string();
                for (column, value, expected) in [
                    ("I", identity, 0.25),
                    ("ZZ", zz, 0.25 * sign(b1)),
                    ("XX", xx, 0.25 * sign(b2)),
                    ("YY", yy, 0.25 * sign(b1 + b2 + 1)),
                ] {
                    entries.push(AlignmentEntry {
                        pairing: pairing.name(),
                        parties: (p, q),
                        outcome: outcome.clone(),
                        column,
                        value,
                        expected,
                    });
                }
            }
        }
    }
    let max_residual = entries.iter().fold(0.0f64, |a, e| a.max((e.value - e.expected).abs()));
    Ok(AlignmentReport { max_residual, entries, pass: max_residual <= tol })
}

pub fn certify(behavior: &Behavior, psi: &PureState, tol: Tolerance) -> Result<CertReport> {
    let s = behavior.scenario();
    let chsh = check_3chsh(behavior, tol.chsh)?;
    let tomography = check_tomography_condition(behavior, psi, tol.tomography)?;
    let alignment = match s.variant {
        Variant::Network => None,
        Variant::Fully => Some(check_alignment(behavior, tol.alignment)?),
    };
    let pass = chsh.pass && tomography.pass && alignment.as_ref().is_none_or(|a| a.pass);
    Ok(CertReport { variant: s.variant, n: s.n, chsh, tomography, alignment, pass })
}
