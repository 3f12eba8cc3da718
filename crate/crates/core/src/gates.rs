//! Pauli operators, the dichotomic observables of the experiment, Bell-state
//! measurements and projective measurements in general.

use std::sync::OnceLock;

use num_complex::Complex64 as C64;

use crate::states::bell_state;
use crate::tensor::{hermitian_eigensystem, CMatrix, LinOp, PureState, SiteLayout, Tensor, ONE, ZERO};
use crate::{invalid, Error, Result};

const PROJ_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pauli {
    Z,
    X,
    Y,
}

impl Pauli {
    /// Index convention for the auxiliary measurements: 0 = Z, 1 = X, 2 = Y.
    pub fn from_index(k: usize) -> Result<Pauli> {
        match k {
            0 => Ok(Pauli::Z),
            1 => Ok(Pauli::X),
            2 => Ok(Pauli::Y),
            _ => Err(Error::Alphabet(format!("Pauli index {k}"))),
        }
    }

    pub fn op(self) -> LinOp {
        let i = C64::new(0.0, 1.0);
        let entries = match self {
            Pauli::Z => [ONE, ZERO, ZERO, -ONE],
            Pauli::X => [ZERO, ONE, ONE, ZERO],
            Pauli::Y => [ZERO, -i, i, ZERO],
        };
        LinOp::from_rows(2, &entries).expect("2x2")
    }
}

pub fn pauli(k: Pauli) -> LinOp {
    k.op()
}

fn qubit_identity() -> LinOp {
    LinOp::identity(SiteLayout::qubits(1))
}

/// Hermitian operator with spectrum in {+1, -1}.
#[derive(Clone, Debug)]
pub struct Observable {
    op: LinOp,
}

impl Observable {
    pub fn new(op: LinOp) -> Result<Self> {
        if !op.is_hermitian() || !op.is_unitary() {
            return invalid("an observable must be Hermitian with eigenvalues +-1");
        }
        Ok(Self { op })
    }

    pub fn op(&self) -> &LinOp {
        &self.op
    }

    /// Outcome 0 is the +1 eigenspace.
    pub fn projectors(&self) -> ProjectorSet {
        let id = LinOp::identity(self.op.layout().clone());
        let plus = id.add(&self.op).expect("same layout").scale(C64::from(0.5));
        let minus = id.add(&self.op.scale(-ONE)).expect("same layout").scale(C64::from(0.5));
        ProjectorSet::new(self.op.layout().clone(), vec![plus, minus], vec!["0".into(), "1".into()])
            .expect("observable projectors are complete")
    }
}

/// A complete family of orthogonal projectors with one label per outcome.
#[derive(Clone, Debug)]
pub struct ProjectorSet {
    layout: SiteLayout,
    projectors: Vec<LinOp>,
    labels: Vec<String>,
}

/// Orthonormal eigenbasis adapted to a projective measurement.
#[derive(Clone, Debug)]
pub struct MeasurementBasis {
    /// Unitary whose columns span the projector ranges.
    pub unitary: CMatrix,
    /// Outcome index of each column.
    pub outcome_of: Vec<usize>,
}

impl ProjectorSet {
    pub fn new(layout: SiteLayout, projectors: Vec<LinOp>, labels: Vec<String>) -> Result<Self> {
        if projectors.is_empty() || projectors.len() != labels.len() {
            return invalid("projector and label counts must agree and be nonzero");
        }
        let n = layout.total_dim();
        let mut sum = CMatrix::zeros(n, n);
        for (a, p) in projectors.iter().enumerate() {
            if p.layout() != &layout {
                return Err(Error::DimensionMismatch("projector layout differs from the set".into()));
            }
            if !p.is_hermitian() {
                return invalid(format!("projector {a} is not Hermitian"));
            }
            let sq = p.matrix() * p.matrix();
            if max_dev(&sq, p.matrix()) > PROJ_TOL {
                return invalid(format!("operator {a} is not idempotent"));
            }
            for q in &projectors[..a] {
                if max_dev(&(p.matrix() * q.matrix()), &CMatrix::zeros(n, n)) > PROJ_TOL {
                    return invalid("projectors are not mutually orthogonal");
                }
            }
            sum += p.matrix();
        }
        if max_dev(&sum, &CMatrix::identity(n, n)) > PROJ_TOL {
            return invalid("projectors do not sum to the identity");
        }
        Ok(Self { layout, projectors, labels })
    }

    /// The single-outcome measurement that does nothing.
    pub fn trivial(layout: SiteLayout) -> Self {
        let id = LinOp::identity(layout.clone());
        Self { layout, projectors: vec![id], labels: vec!["-".into()] }
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    pub fn projectors(&self) -> &[LinOp] {
        &self.projectors
    }

    pub fn projector(&self, a: usize) -> &LinOp {
        &self.projectors[a]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `sum_a (-1)^a P_a` for a two-outcome measurement.
    pub fn observable(&self) -> Result<Observable> {
        if self.len() != 2 {
            return invalid("only two-outcome measurements define an observable");
        }
        Observable::new(self.projectors[0].add(&self.projectors[1].scale(-ONE))?)
    }

    pub fn conj(&self) -> Self {
        use crate::tensor::Conjugate;
        Self { projectors: self.projectors.iter().map(|p| p.conj()).collect(), ..self.clone() }
    }

    /// Applies `f` to every projector, keeping labels and revalidating.
    pub fn map<F>(&self, layout: SiteLayout, f: F) -> Result<Self>
    where
        F: Fn(&LinOp) -> Result<LinOp>,
    {
        let projectors = self.projectors.iter().map(f).collect::<Result<Vec<_>>>()?;
        Self::new(layout, projectors, self.labels.clone())
    }

    /// Product measurement; labels are joined with `sep`, the first set most significant.
    pub fn tensor(&self, other: &ProjectorSet, sep: &str) -> ProjectorSet {
        let mut projectors = Vec::with_capacity(self.len() * other.len());
        let mut labels = Vec::with_capacity(projectors.capacity());
        for (p, lp) in self.projectors.iter().zip(&self.labels) {
            for (q, lq) in other.projectors.iter().zip(&other.labels) {
                projectors.push(p.tensor(q));
                labels.push(format!("{lp}{sep}{lq}"));
            }
        }
        ProjectorSet { layout: self.layout.concat(&other.layout), projectors, labels }
    }

    pub fn basis(&self) -> Result<MeasurementBasis> {
        let n = self.layout.total_dim();
        let mut unitary = CMatrix::zeros(n, n);
        let mut outcome_of = Vec::with_capacity(n);
        for (a, p) in self.projectors.iter().enumerate() {
            let e = hermitian_eigensystem(p)?;
            for (k, &v) in e.values.iter().enumerate() {
                if v > 0.5 {
                    if outcome_of.len() == n {
                        return invalid("projector ranks exceed the dimension");
                    }
                    unitary.set_column(outcome_of.len(), &e.vectors.column(k));
                    outcome_of.push(a);
                }
            }
        }
        if outcome_of.len() != n {
            return invalid("projector ranks do not add up to the dimension");
        }
        Ok(MeasurementBasis { unitary, outcome_of })
    }

    /// Orthonormal basis of each projector's range, as column vectors.
    pub fn ranges(&self) -> Result<Vec<Vec<Vec<C64>>>> {
        let b = self.basis()?;
        let mut out = vec![Vec::new(); self.len()];
        for (c, &a) in b.outcome_of.iter().enumerate() {
            out[a].push(b.unitary.column(c).iter().copied().collect());
        }
        Ok(out)
    }
}

fn max_dev(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).fold(0.0f64, |acc, (x, y)| acc.max((x - y).norm()))
}

fn combine(a: &LinOp, b: &LinOp, sa: f64, sb: f64) -> LinOp {
    a.scale(C64::from(sa)).add(&b.scale(C64::from(sb))).expect("same layout")
}

/// The six dichotomic observables of a main party, acting on its half of the shared pair.
pub fn main_observable(x: usize) -> Result<Observable> {
    main_convention_check();
    raw_main_observable(x)
}

fn raw_main_observable(x: usize) -> Result<Observable> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (z, xx, y) = (Pauli::Z.op(), Pauli::X.op(), Pauli::Y.op());
    let op = match x {
        0 => combine(&z, &xx, r, r),
        1 => combine(&z, &xx, r, -r),
        2 => combine(&z, &y, r, -r),
        3 => combine(&z, &y, r, r),
        4 => combine(&xx, &y, r, -r),
        5 => combine(&xx, &y, r, r),
        _ => return Err(Error::Alphabet(format!("main input {x}"))),
    };
    Observable::new(op)
}

/// Inputs `(x1, x2, y1, y2)` of the three CHSH blocks for one pair.
pub const CHSH_BLOCKS: [(usize, usize, usize, usize); 3] = [(0, 1, 0, 1), (2, 3, 0, 2), (4, 5, 1, 2)];

/// CHSH value of block `(x1, x2, y1, y2)` evaluated on a correlator `e(x, y)`.
pub fn chsh_combination(block: (usize, usize, usize, usize), e: impl Fn(usize, usize) -> f64) -> f64 {
    let (x1, x2, y1, y2) = block;
    e(x1, y1) + e(x1, y2) + e(x2, y1) - e(x2, y2)
}

fn main_convention_check() {
    static CHECKED: OnceLock<()> = OnceLock::new();
    CHECKED.get_or_init(|| {
        let phi = bell_state(0).expect("valid");
        let corr = |x: usize, y: usize| {
            let a = raw_main_observable(x).expect("valid").op;
            let b = Pauli::from_index(y).expect("valid").op();
            let psi = a.tensor(&b).apply_to(&phi).expect("two qubits");
            phi.inner(&psi).expect("same layout").re
        };
        let target = 2.0 * std::f64::consts::SQRT_2;
        for block in CHSH_BLOCKS {
            let v = chsh_combination(block, corr);
            assert!((v - target).abs() < 1e-12, "main observables do not reach the maximal CHSH value: {v}");
        }
    });
}

/// Projector for outcome `b` of the auxiliary Pauli measurement `y`.
pub fn aux_projector(b: usize, y: usize) -> Result<LinOp> {
    if b > 1 {
        return Err(Error::Alphabet(format!("auxiliary outcome {b}")));
    }
    Ok(aux_measurement(y)?.projectors[b].clone())
}

pub fn aux_measurement(y: usize) -> Result<ProjectorSet> {
    Ok(Observable::new(Pauli::from_index(y)?.op())?.projectors())
}

pub const BELL_LABELS: [&str; 4] = ["00", "01", "10", "11"];

pub fn bell_basis() -> ProjectorSet {
    let projectors = (0..4).map(|a| bell_projector(a).expect("valid label")).collect();
    ProjectorSet::new(SiteLayout::qubits(2), projectors, BELL_LABELS.iter().map(|s| s.to_string()).collect())
        .expect("Bell projectors are complete")
}

fn bell_projector(a: usize) -> Result<LinOp> {
    let d = bell_state(a)?.density();
    LinOp::new(SiteLayout::qubits(2), d.matrix().clone())
}

/// Correction applied after a Bell-state measurement with outcome `a` to restore the teleported state.
pub fn correction_unitary(a: usize) -> Result<LinOp> {
    teleportation_check();
    raw_correction(a)
}

fn raw_correction(a: usize) -> Result<LinOp> {
    match a {
        0 => Ok(qubit_identity()),
        1 => Ok(Pauli::Z.op()),
        2 => Ok(Pauli::X.op()),
        3 => Pauli::Z.op().compose(&Pauli::X.op()),
        _ => Err(Error::Alphabet(format!("Bell outcome {a}"))),
    }
}

/// Residual `|| U_a <beta_a| (phi ⊗ phi+) - phi/2 ||` of teleporting `phi` with outcome `a`.
pub fn teleportation_residual(phi: &PureState, a: usize) -> Result<f64> {
    if phi.layout() != &SiteLayout::qubits(1) {
        return invalid("teleportation acts on one qubit");
    }
    use crate::tensor::contract_bra;
    let joint = phi.tensor(&bell_state(0)?);
    let beta = bell_state(a)?;
    let rest = contract_bra(joint.amplitudes(), joint.layout(), &[0, 1], beta.amplitudes());
    let out = raw_correction(a)?.apply_to(&PureState::subnormalized(SiteLayout::qubits(1), rest)?)?;
    Ok(out.amplitudes().iter().zip(phi.amplitudes()).map(|(x, y)| (x - y * 0.5).norm_sqr()).sum::<f64>().sqrt())
}

fn teleportation_check() {
    static CHECKED: OnceLock<()> = OnceLock::new();
    CHECKED.get_or_init(|| {
        let i = C64::new(0.0, 1.0);
        let probes = [
            vec![ONE, ZERO],
            vec![ZERO, ONE],
            vec![ONE, ONE],
            vec![ONE, -ONE],
            vec![ONE, i],
            vec![C64::new(0.3, 0.1), C64::new(-0.7, 0.5)],
        ];
        for amps in probes {
            let phi = PureState::normalize(SiteLayout::qubits(1), amps).expect("nonzero");
            for a in 0..4 {
                let r = teleportation_residual(&phi, a).expect("valid");
                assert!(r < 1e-12, "correction {a} does not undo teleportation: {r}");
            }
        }
    });
}

/// Which neighbouring main parties are paired by a parallel Bell-state measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Pairing {
    /// Pairs (1,2), (3,4), ...
    Even,
    /// Pairs (N,1), (2,3), (4,5), ...
    Odd,
}

impl Pairing {
    /// Zero-based pairs of sites for `n` parties.
    pub fn pairs(self, n: usize) -> Vec<(usize, usize)> {
        let count = n / 2;
        match self {
            Pairing::Even => (0..count).map(|m| (2 * m, 2 * m + 1)).collect(),
            Pairing::Odd => {
                if count == 0 {
                    return vec![];
                }
                let mut out = vec![(n - 1, 0)];
                out.extend((1..count).map(|m| (2 * m - 1, 2 * m)));
                out
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Pairing::Even => "even",
            Pairing::Odd => "odd",
        }
    }
}

/// Bell-state measurements on the pairs of `pairing` over `n` qubits; labels join pair outcomes with '.'.
pub fn parallel_bsm(pairing: Pairing, n: usize) -> Result<ProjectorSet> {
    if n < 2 {
        return invalid("a parallel Bell-state measurement needs at least two qubits");
    }
    let layout = SiteLayout::qubits(n);
    let pairs = pairing.pairs(n);
    let singles: Vec<LinOp> = (0..4).map(bell_projector).collect::<Result<_>>()?;
    let count = 4usize.pow(pairs.len() as u32);
    let mut projectors = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for idx in 0..count {
        let mut digits = Vec::with_capacity(pairs.len());
        let mut rest = idx;
        for _ in 0..pairs.len() {
            digits.push(rest % 4);
            rest /= 4;
        }
        digits.reverse();
        let mut p = LinOp::identity(layout.clone());
        for (&(s, t), &a) in pairs.iter().zip(&digits) {
            p = p.compose(&singles[a].embed(&layout, &[s, t])?)?;
        }
        projectors.push(p);
        labels.push(digits.iter().map(|&a| BELL_LABELS[a]).collect::<Vec<_>>().join("."));
    }
    ProjectorSet::new(layout, projectors, labels)
}

/// `m ⊗ |0><0| + conj(m) ⊗ |1><1|`, with the flag qubit appended as the last site.
pub fn conjugation_controlled(m: &LinOp) -> LinOp {
    use crate::tensor::Conjugate;
    let p0 = LinOp::from_rows(2, &[ONE, ZERO, ZERO, ZERO]).expect("2x2");
    let p1 = LinOp::from_rows(2, &[ZERO, ZERO, ZERO, ONE]).expect("2x2");
    m.tensor(&p0).add(&m.conj().tensor(&p1)).expect("same layout")
}

pub fn conjugation_controlled_set(set: &ProjectorSet) -> Result<ProjectorSet> {
    let layout = set.layout().concat(&SiteLayout::qubits(1));
    set.map(layout, |p| Ok(conjugation_controlled(p)))
}

/// Number of qubits used to encode a local dimension `d`.
pub fn qubits_for(d: usize) -> usize {
    (usize::BITS - (d - 1).leading_zeros()) as usize
}

/// Encodes each site of dimension `d` into `ceil(log2 d)` qubits, basis state `|j>` as big-endian binary.
pub fn encode_qudit(psi: &PureState) -> Result<PureState> {
    let layout = psi.layout();
    let widths: Vec<usize> = layout.dims().iter().map(|&d| qubits_for(d)).collect();
    let total: usize = widths.iter().sum();
    let out_layout = SiteLayout::qubits(total);
    let mut amps = vec![ZERO; 1 << total];
    for (g, &a) in psi.amplitudes().iter().enumerate() {
        let idx = layout.digits(g).iter().zip(&widths).fold(0usize, |acc, (&j, &w)| (acc << w) | j);
        amps[idx] = a;
    }
    PureState::subnormalized(out_layout, amps)
}
