//! Operator regularization, the SWAP isometry and the extraction channel that maps a
//! physical model onto the target qubits plus one conjugation flag per party.

use num_complex::Complex64 as C64;
use serde::Serialize;

use crate::certify::{certify, Tolerance};
use crate::experiment::{certification_behavior, PhysicalModel, Variant, BSM_INPUT};
use crate::gates::{correction_unitary, ProjectorSet};
use crate::tensor::{
    apply_local, contract_bra, hermitian_eigensystem, reduced_matrix, CMatrix, Conjugate, DensityOp, LinOp, PureState,
    SiteLayout, ONE, ZERO,
};
use crate::{invalid, Error, Result};

/// Replaces every eigenvalue of a Hermitian operator by its sign, with sign(0) = +1.
pub fn regularize(op: &LinOp) -> Result<LinOp> {
    let e = hermitian_eigensystem(op)?;
    let n = e.values.len();
    let d = CMatrix::from_fn(n, n, |i, j| {
        if i != j {
            ZERO
        } else if e.values[i] < -1e-12 {
            -ONE
        } else {
            ONE
        }
    });
    LinOp::new(op.layout().clone(), &e.vectors * d * e.vectors.adjoint())
}

#[derive(Clone, Debug)]
pub struct RegularizedTriple {
    pub z: LinOp,
    pub x: LinOp,
    pub y: LinOp,
    /// `||{Z,X} rho||`, `||{Z,Y} rho||`, `||{X,Y} rho||` on the party's reduced state.
    pub anticommutation: [f64; 3],
}

impl RegularizedTriple {
    fn new(z: LinOp, x: LinOp, y: LinOp, rho: &DensityOp) -> Result<Self> {
        let anti = |p: &LinOp, q: &LinOp| {
            let m = (p.matrix() * q.matrix() + q.matrix() * p.matrix()) * rho.matrix();
            m.iter().fold(0.0f64, |acc, v| acc.max(v.norm()))
        };
        let anticommutation = [anti(&z, &x), anti(&z, &y), anti(&x, &y)];
        Ok(Self { z, x, y, anticommutation })
    }

    pub fn layout(&self) -> &SiteLayout {
        self.z.layout()
    }
}

/// Which party's triple to build; auxiliary triples are indexed by pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TripleSite {
    Main(usize),
    Aux(usize),
}

fn signed_sum(set: &ProjectorSet, sign: impl Fn(usize) -> f64) -> Result<LinOp> {
    let mut acc = LinOp::identity(set.layout().clone()).scale(ZERO);
    for (a, p) in set.projectors().iter().enumerate() {
        acc = acc.add(&p.scale(C64::from(sign(a))))?;
    }
    Ok(acc)
}

/// Regularized Pauli triple of a party, together with the global sites it acts on.
pub fn build_party_triple(model: &PhysicalModel, site: TripleSite) -> Result<(RegularizedTriple, Vec<usize>)> {
    let s = model.scenario();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    match site {
        TripleSite::Main(j) => {
            if j >= s.n {
                return invalid(format!("main party {j} out of range"));
            }
            let a: Vec<LinOp> =
                (0..4).map(|x| Ok(model.measurement(j, x).observable()?.op().clone())).collect::<Result<_>>()?;
            let comb = |p: &LinOp, q: &LinOp, sq: f64| p.scale(C64::from(r)).add(&q.scale(C64::from(sq * r)));
            let z = regularize(&comb(&a[0], &a[1], 1.0)?)?;
            let x = regularize(&comb(&a[0], &a[1], -1.0)?)?;
            let y = regularize(&comb(&a[2], &a[3], -1.0)?)?;
            let rho = model.reduced_party_state(j)?;
            Ok((RegularizedTriple::new(z, x, y, &rho)?, model.party_sites(j).to_vec()))
        }
        TripleSite::Aux(j) => {
            if j >= s.n {
                return invalid(format!("pair {j} out of range"));
            }
            let party = s.aux_party(j);
            let ops: Vec<LinOp> = match s.variant {
                Variant::Network => {
                    (0..3).map(|k| Ok(model.measurement(party, k).observable()?.op().clone())).collect::<Result<_>>()?
                }
                Variant::Fully => (0..3)
                    .map(|k| {
                        let mut y = vec![0; s.n];
                        y[j] = k;
                        let set = model.measurement(party, s.y_vector_input(&y));
                        signed_sum(set, |b| if (b >> (s.n - 1 - j)) & 1 == 0 { 1.0 } else { -1.0 })
                    })
                    .collect::<Result<_>>()?,
            };
            let mut ops = ops.into_iter().map(|o| regularize(&o));
            let (z, x, y) = (ops.next().unwrap()?, ops.next().unwrap()?, ops.next().unwrap()?);
            let rho = model.reduced_party_state(party)?;
            Ok((RegularizedTriple::new(z, x, y, &rho)?, model.party_sites(party).to_vec()))
        }
    }
}

fn hadamard() -> CMatrix {
    let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
    CMatrix::from_row_slice(2, 2, &[h, h, h, -h])
}

/// Applies `u` to `sites` on the branch where `control` is 1.
fn apply_controlled(amps: &mut [C64], layout: &SiteLayout, control: usize, sites: &[usize], u: &CMatrix) {
    let mut involved = vec![control];
    involved.extend_from_slice(sites);
    let local = layout.offsets(sites);
    let bases = layout.offsets(&layout.complement(&involved));
    let shift = layout.strides()[control];
    let d = local.len();
    let mut buf = vec![ZERO; d];
    for &b in &bases {
        let b = b + shift;
        for (k, &o) in local.iter().enumerate() {
            buf[k] = amps[b + o];
        }
        for r in 0..d {
            let mut acc = ZERO;
            for c in 0..d {
                acc += u[(r, c)] * buf[c];
            }
            amps[b + local[r]] = acc;
        }
    }
}

/// Runs the SWAP circuit of one side: system `sites`, fresh ancillas `prime` and `dprime` in |0>.
pub(crate) fn apply_swap_gadget(
    amps: &mut [C64],
    layout: &SiteLayout,
    sites: &[usize],
    prime: usize,
    dprime: usize,
    triple: &RegularizedTriple,
) {
    let h = hadamard();
    let iyx = (triple.y.matrix() * triple.x.matrix()).map(|v| v * C64::new(0.0, 1.0));
    apply_local(amps, layout, &[prime], &h);
    apply_controlled(amps, layout, prime, sites, triple.z.matrix());
    apply_local(amps, layout, &[prime], &h);
    apply_controlled(amps, layout, prime, sites, triple.x.matrix());
    apply_local(amps, layout, &[dprime], &h);
    apply_controlled(amps, layout, dprime, sites, &iyx);
    apply_local(amps, layout, &[dprime], &h);
}

/// Matrix of the SWAP isometry from the system into system ⊗ C' ⊗ C''.
pub fn swap_isometry(triple: &RegularizedTriple) -> CMatrix {
    let sys = triple.layout().clone();
    let d = sys.total_dim();
    let layout = sys.concat(&SiteLayout::qubits(2));
    let k = sys.num_sites();
    let sites: Vec<usize> = (0..k).collect();
    let mut v = CMatrix::zeros(4 * d, d);
    for i in 0..d {
        let mut amps = vec![ZERO; 4 * d];
        amps[4 * i] = ONE;
        apply_swap_gadget(&mut amps, &layout, &sites, k, k + 1, triple);
        for (r, a) in amps.into_iter().enumerate() {
            v[(r, i)] = a;
        }
    }
    v
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct AlphaDecomposition {
    /// Weight of the target with all flags 0.
    pub alpha: f64,
    /// Weight of the conjugate target with all flags 1.
    pub conjugate_weight: f64,
    pub residual: f64,
}

/// Splits an extracted state on (target ⊗ flags) into the two conjugation sectors.
pub fn decompose_alpha(extracted: &DensityOp, psi: &PureState) -> Result<AlphaDecomposition> {
    let n = psi.layout().num_sites();
    let expected = psi.layout().concat(&SiteLayout::qubits(n));
    if extracted.layout() != &expected {
        return Err(Error::DimensionMismatch("extracted state must hold the target and one flag per site".into()));
    }
    let flags = 1usize << n;
    let embed = |amps: &[C64], flag: usize| {
        let mut v = vec![ZERO; amps.len() * flags];
        for (t, &a) in amps.iter().enumerate() {
            v[t * flags + flag] = a;
        }
        PureState::subnormalized(expected.clone(), v)
    };
    let alpha = extracted.expectation(&embed(psi.amplitudes(), 0)?)?;
    let conjugate_weight = extracted.expectation(&embed(psi.conj().amplitudes(), flags - 1)?)?;
    Ok(AlphaDecomposition { alpha, conjugate_weight, residual: 1.0 - alpha - conjugate_weight })
}

#[derive(Clone, Copy, Debug)]
pub struct ExtractionOptions {
    /// Run the certifier on the model first and refuse to extract if it fails.
    pub require_certification: bool,
    pub tolerance: Tolerance,
}

impl Default for ExtractionOptions {
    fn default() -> Self {
        Self { require_certification: true, tolerance: Tolerance::default() }
    }
}

#[derive(Clone, Debug)]
pub struct ExtractionResult {
    /// State on `B'_1..B'_N` followed by the flags `B''_1..B''_N`.
    pub extracted: DensityOp,
    pub decomposition: AlphaDecomposition,
    /// `alpha + conjugate_weight`: overlap with the family of target/conjugate mixtures.
    pub family_fidelity: f64,
    /// Probability of each flag pattern, first flag most significant.
    pub flag_distribution: Vec<f64>,
    pub anticommutation: Vec<[f64; 3]>,
}

/// Applies the extraction channel to `model` and compares the output with `psi`.
pub fn extraction_channel(model: &PhysicalModel, psi: &PureState, opts: ExtractionOptions) -> Result<ExtractionResult> {
    let s = model.scenario();
    let n = s.n;
    if psi.layout() != &SiteLayout::qubits(n) {
        return Err(Error::DimensionMismatch(format!("target must have {n} qubits")));
    }
    if opts.require_certification {
        let report = certify(&certification_behavior(model)?, psi, opts.tolerance)?;
        if !report.pass {
            let pairs = report.failing_pairs();
            let reason = if pairs.is_empty() {
                format!("tomography residual {:.3e}", report.tomography.max_residual)
            } else {
                format!("3-CHSH fails on pairs {:?}", pairs.iter().map(|p| p + 1).collect::<Vec<_>>())
            };
            return Err(Error::NotCertified(reason));
        }
    }

    let mut triples = Vec::with_capacity(n);
    for j in 0..n {
        let (t, sites) = build_party_triple(model, TripleSite::Aux(j))?;
        let v = swap_isometry(&t);
        let dev =
            (v.adjoint() * &v - CMatrix::identity(v.ncols(), v.ncols())).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if dev > 1e-8 {
            return Err(Error::KrausIncomplete(dev));
        }
        triples.push((t, sites));
    }
    let mut ranges = Vec::with_capacity(n);
    for j in 0..n {
        let set = model.measurement(j, BSM_INPUT);
        let dim = set.layout().total_dim();
        let mut sum = CMatrix::zeros(dim, dim);
        for p in set.projectors() {
            sum += p.matrix();
        }
        let dev = (sum - CMatrix::identity(dim, dim)).iter().fold(0.0f64, |a, z| a.max(z.norm()));
        if dev > 1e-8 {
            return Err(Error::KrausIncomplete(dev));
        }
        ranges.push(set.ranges()?);
    }

    let base = model.layout().num_sites();
    let layout = model.layout().concat(&SiteLayout::qubits(2 * n));
    let anc = 1usize << (2 * n);
    let kept: Vec<usize> = (base..base + 2 * n).collect();
    let outcomes = 4usize.pow(n as u32);
    let mut per_outcome = vec![CMatrix::zeros(anc, anc); outcomes];

    for (w, component) in model.state().components() {
        let mut amps = vec![ZERO; component.amplitudes().len() * anc];
        for (g, &a) in component.amplitudes().iter().enumerate() {
            amps[g * anc] = a;
        }
        for (j, (t, sites)) in triples.iter().enumerate() {
            apply_swap_gadget(&mut amps, &layout, sites, base + j, base + n + j, t);
        }
        let alive: Vec<usize> = (0..layout.num_sites()).collect();
        let mut ctx = Contraction { model, ranges: &ranges, kept: &kept, weight: *w, per_outcome: &mut per_outcome };
        ctx.descend(0, 0, &amps, &layout, &alive);
    }

    let mut rho = CMatrix::zeros(anc, anc);
    let out_layout = SiteLayout::qubits(2 * n);
    for (a_idx, m) in per_outcome.iter().enumerate() {
        let mut u = LinOp::identity(SiteLayout::qubits(0));
        for j in 0..n {
            u = crate::tensor::Tensor::tensor(&u, &correction_unitary((a_idx >> (2 * (n - 1 - j))) & 3)?);
        }
        let sites: Vec<usize> = (0..n).collect();
        rho += crate::tensor::conjugate_matrix_by(m, &out_layout, &sites, u.matrix());
    }
    let trace = rho.trace().re;
    if (trace - 1.0).abs() > 1e-9 {
        return Err(Error::KrausIncomplete((trace - 1.0).abs()));
    }
    let extracted = DensityOp::from_hermitian(out_layout, rho)?;
    let decomposition = decompose_alpha(&extracted, psi)?;
    let flags = 1usize << n;
    let mut flag_distribution = vec![0.0; flags];
    for i in 0..anc {
        flag_distribution[i % flags] += extracted.matrix()[(i, i)].re;
    }
    Ok(ExtractionResult {
        family_fidelity: decomposition.alpha + decomposition.conjugate_weight,
        extracted,
        decomposition,
        flag_distribution,
        anticommutation: triples.iter().map(|(t, _)| t.anticommutation).collect(),
    })
}

struct Contraction<'a> {
    model: &'a PhysicalModel,
    ranges: &'a [Vec<Vec<Vec<C64>>>],
    kept: &'a [usize],
    weight: f64,
    per_outcome: &'a mut [CMatrix],
}

impl Contraction<'_> {
    /// Projects main party `j` onto each vector of each Bell outcome range, accumulating reduced states.
    fn descend(&mut self, j: usize, a_idx: usize, amps: &[C64], layout: &SiteLayout, alive: &[usize]) {
        let n = self.model.scenario().n;
        let position = |g: usize| alive.iter().position(|&s| s == g).expect("site still present");
        if j == n {
            let keep: Vec<usize> = self.kept.iter().map(|&g| position(g)).collect();
            let m = reduced_matrix(amps, layout, &keep);
            self.per_outcome[a_idx] += m.scale(self.weight);
            return;
        }
        let sites: Vec<usize> = self.model.party_sites(j).iter().map(|&g| position(g)).collect();
        let rest = layout.complement(&sites);
        let next_layout = layout.select(&rest).expect("valid sites");
        let next_alive: Vec<usize> = rest.iter().map(|&p| alive[p]).collect();
        for (a, vectors) in self.ranges[j].iter().enumerate() {
            for v in vectors {
                let out = contract_bra(amps, layout, &sites, v);
                self.descend(j + 1, a_idx * 4 + a, &out, &next_layout, &next_alive);
            }
        }
    }
}
