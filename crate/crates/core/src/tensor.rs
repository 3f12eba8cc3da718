//! Dense state vectors, density operators and local operators on tensor-product spaces.
//!
//! Site 0 is the most significant digit of a global basis index.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::{invalid, Error, Result};

pub type CMatrix = DMatrix<C64>;

const NORM_TOL: f64 = 1e-12;
const HERMITIAN_TOL: f64 = 1e-12;
const FLAG_TOL: f64 = 1e-10;
const PSD_FLOOR: f64 = -1e-10;

pub(crate) const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SiteLayout {
    dims: Vec<usize>,
}

impl SiteLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if let Some(d) = dims.iter().find(|&&d| d < 2) {
            return invalid(format!("local dimension {d} is below 2"));
        }
        Ok(Self { dims })
    }

    pub fn qubits(n: usize) -> Self {
        Self { dims: vec![2; n] }
    }

    pub(crate) fn raw(dims: Vec<usize>) -> Self {
        Self { dims }
    }

    pub fn num_sites(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, site: usize) -> usize {
        self.dims[site]
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn strides(&self) -> Vec<usize> {
        let mut strides = vec![1; self.dims.len()];
        for s in (0..self.dims.len().saturating_sub(1)).rev() {
            strides[s] = strides[s + 1] * self.dims[s + 1];
        }
        strides
    }

    pub fn concat(&self, other: &SiteLayout) -> SiteLayout {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        SiteLayout { dims }
    }

    /// Layout of the listed sites, in the listed order.
    pub fn select(&self, sites: &[usize]) -> Result<SiteLayout> {
        self.check_sites(sites)?;
        Ok(SiteLayout::raw(sites.iter().map(|&s| self.dims[s]).collect()))
    }

    pub fn check_sites(&self, sites: &[usize]) -> Result<()> {
        for (i, &s) in sites.iter().enumerate() {
            if s >= self.dims.len() {
                return Err(Error::SiteOutOfRange { site: s, sites: self.dims.len() });
            }
            if sites[..i].contains(&s) {
                return invalid(format!("site {s} listed twice"));
            }
        }
        Ok(())
    }

    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for s in (0..self.dims.len()).rev() {
            out[s] = index % self.dims[s];
            index /= self.dims[s];
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&d, &n)| acc * n + d)
    }

    /// Global offsets of every joint value of `sites`, the first listed site most significant.
    pub(crate) fn offsets(&self, sites: &[usize]) -> Vec<usize> {
        let strides = self.strides();
        let mut offs = vec![0usize];
        for &s in sites {
            let mut next = Vec::with_capacity(offs.len() * self.dims[s]);
            for &o in &offs {
                for k in 0..self.dims[s] {
                    next.push(o + k * strides[s]);
                }
            }
            offs = next;
        }
        offs
    }

    pub(crate) fn complement(&self, sites: &[usize]) -> Vec<usize> {
        (0..self.dims.len()).filter(|s| !sites.contains(s)).collect()
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum()
}

/// Applies `op` (row-major, dimension of the joint local space) to the listed sites of `amps`.
pub(crate) fn apply_local(amps: &mut [C64], layout: &SiteLayout, sites: &[usize], op: &CMatrix) {
    let local = layout.offsets(sites);
    let bases = layout.offsets(&layout.complement(sites));
    let d = local.len();
    let rows: Vec<C64> = (0..d).flat_map(|r| (0..d).map(move |c| (r, c))).map(|(r, c)| op[(r, c)]).collect();
    let mut buf = vec![ZERO; d];
    for &b in &bases {
        for (k, &o) in local.iter().enumerate() {
            buf[k] = amps[b + o];
        }
        for r in 0..d {
            let row = &rows[r * d..(r + 1) * d];
            let mut acc = ZERO;
            for (m, x) in row.iter().zip(&buf) {
                acc += m * x;
            }
            amps[b + local[r]] = acc;
        }
    }
}

/// Contracts `bra` against the listed sites; the result lives on the remaining sites in ascending order.
pub(crate) fn contract_bra(amps: &[C64], layout: &SiteLayout, sites: &[usize], bra: &[C64]) -> Vec<C64> {
    let local = layout.offsets(sites);
    let bases = layout.offsets(&layout.complement(sites));
    bases.iter().map(|&b| local.iter().zip(bra).map(|(&o, v)| v.conj() * amps[b + o]).sum()).collect()
}

/// Reduced density matrix of a pure vector on `keep` (in the listed order).
pub(crate) fn reduced_matrix(amps: &[C64], layout: &SiteLayout, keep: &[usize]) -> CMatrix {
    let local = layout.offsets(keep);
    let bases = layout.offsets(&layout.complement(keep));
    let m = CMatrix::from_fn(local.len(), bases.len(), |k, r| amps[bases[r] + local[k]]);
    &m * m.adjoint()
}

fn hermitian_deviation(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in i..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}

pub(crate) fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

#[derive(Clone, Debug)]
pub struct PureState {
    layout: SiteLayout,
    amps: Vec<C64>,
    normalized: bool,
}

impl PureState {
    /// A normalized state; the norm must be 1 within 1e-12.
    pub fn new(layout: SiteLayout, amps: Vec<C64>) -> Result<Self> {
        let state = Self::subnormalized(layout, amps)?;
        if !state.normalized {
            return Err(Error::NotNormalized(state.norm()));
        }
        Ok(state)
    }

    /// A vector of arbitrary norm, flagged as normalized only when it is.
    pub fn subnormalized(layout: SiteLayout, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != layout.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for a layout of dimension {}",
                amps.len(),
                layout.total_dim()
            )));
        }
        let normalized = (norm_sqr(&amps).sqrt() - 1.0).abs() <= NORM_TOL;
        Ok(Self { layout, amps, normalized })
    }

    pub fn normalize(layout: SiteLayout, amps: Vec<C64>) -> Result<Self> {
        let n = norm_sqr(&amps).sqrt();
        if n == 0.0 {
            return invalid("cannot normalize the zero vector");
        }
        Self::new(layout, amps.into_iter().map(|a| a / n).collect())
    }

    pub fn basis(layout: SiteLayout, index: usize) -> Result<Self> {
        let mut amps = vec![ZERO; layout.total_dim()];
        if index >= amps.len() {
            return invalid(format!("basis index {index} out of range"));
        }
        amps[index] = ONE;
        Self::new(layout, amps)
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch("inner product of different layouts".into()));
        }
        Ok(self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum())
    }

    pub fn density(&self) -> DensityOp {
        let n = self.amps.len();
        let m = CMatrix::from_fn(n, n, |i, j| self.amps[i] * self.amps[j].conj());
        DensityOp::from_parts(self.layout.clone(), m)
    }

    pub fn apply(&self, op: &LinOp, sites: &[usize]) -> Result<PureState> {
        check_op_on_sites(&self.layout, op, sites)?;
        let mut amps = self.amps.clone();
        apply_local(&mut amps, &self.layout, sites, &op.matrix);
        PureState::subnormalized(self.layout.clone(), amps)
    }

    pub fn reduced(&self, keep: &[usize]) -> Result<DensityOp> {
        partial_trace(self, keep)
    }

    /// Same amplitudes with the sites listed in `order` becoming sites 0, 1, ...
    pub fn permute(&self, order: &[usize]) -> Result<PureState> {
        if order.len() != self.layout.num_sites() {
            return invalid("permutation must list every site");
        }
        let layout = self.layout.select(order)?;
        let offs = self.layout.offsets(order);
        let amps = offs.iter().map(|&o| self.amps[o]).collect();
        PureState::subnormalized(layout, amps)
    }
}

#[derive(Clone, Debug)]
pub struct DensityOp {
    layout: SiteLayout,
    matrix: CMatrix,
    normalized: bool,
    positive: bool,
}

impl DensityOp {
    /// A density operator: Hermitian, unit trace and positive semidefinite.
    pub fn new(layout: SiteLayout, matrix: CMatrix) -> Result<Self> {
        let rho = Self::from_hermitian(layout, matrix)?;
        if !rho.normalized {
            return Err(Error::NotNormalized(rho.trace()));
        }
        if !rho.positive {
            return Err(Error::NegativeEigenvalue(rho.eigen().values.last().copied().unwrap_or(0.0)));
        }
        Ok(rho)
    }

    /// A Hermitian operator with trace and positivity recorded but not enforced.
    pub fn from_hermitian(layout: SiteLayout, matrix: CMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for a layout of dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let dev = hermitian_deviation(&matrix);
        if dev > HERMITIAN_TOL * (1.0 + max_abs(&matrix)) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(Self::from_parts(layout, hermitize(&matrix)))
    }

    pub(crate) fn from_parts(layout: SiteLayout, matrix: CMatrix) -> Self {
        let mut rho = Self { layout, matrix, normalized: false, positive: false };
        rho.normalized = (rho.trace() - 1.0).abs() <= NORM_TOL * 10.0;
        rho.positive = rho.eigen().values.last().is_none_or(|&v| v >= PSD_FLOOR);
        rho
    }

    pub fn maximally_mixed(layout: SiteLayout) -> Self {
        let n = layout.total_dim();
        Self::from_parts(layout, CMatrix::identity(n, n).scale(1.0 / n as f64))
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn eigen(&self) -> Eigensystem {
        eigen_of(&self.matrix)
    }

    /// `<psi|rho|psi>`.
    pub fn expectation(&self, psi: &PureState) -> Result<f64> {
        if &self.layout != psi.layout() {
            return Err(Error::DimensionMismatch("expectation on a different layout".into()));
        }
        let a = psi.amplitudes();
        let mut acc = ZERO;
        for i in 0..a.len() {
            for j in 0..a.len() {
                acc += a[i].conj() * self.matrix[(i, j)] * a[j];
            }
        }
        Ok(acc.re)
    }

    pub fn apply(&self, op: &LinOp, sites: &[usize]) -> Result<DensityOp> {
        check_op_on_sites(&self.layout, op, sites)?;
        let m = conjugate_matrix_by(&self.matrix, &self.layout, sites, &op.matrix);
        Ok(Self::from_parts(self.layout.clone(), hermitize(&m)))
    }
}

/// `U X U^dagger` with `U` acting on `sites` of `layout`.
pub(crate) fn conjugate_matrix_by(x: &CMatrix, layout: &SiteLayout, sites: &[usize], u: &CMatrix) -> CMatrix {
    let n = x.nrows();
    let mut left = x.clone();
    for c in 0..n {
        let mut col: Vec<C64> = left.column(c).iter().copied().collect();
        apply_local(&mut col, layout, sites, u);
        left.column_mut(c).copy_from_slice(&col);
    }
    // (U (U X)^dagger)^dagger = U X U^dagger
    let mut right = left.adjoint();
    for c in 0..n {
        let mut col: Vec<C64> = right.column(c).iter().copied().collect();
        apply_local(&mut col, layout, sites, u);
        right.column_mut(c).copy_from_slice(&col);
    }
    right.adjoint()
}

fn check_op_on_sites(layout: &SiteLayout, op: &LinOp, sites: &[usize]) -> Result<()> {
    let local = layout.select(sites)?;
    if local != op.layout {
        return Err(Error::DimensionMismatch(format!(
            "operator on dims {:?} applied to sites with dims {:?}",
            op.layout.dims(),
            local.dims()
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct LinOp {
    layout: SiteLayout,
    matrix: CMatrix,
    hermitian: bool,
    unitary: bool,
}

impl LinOp {
    pub fn new(layout: SiteLayout, matrix: CMatrix) -> Result<Self> {
        let n = layout.total_dim();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} matrix for a layout of dimension {n}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let hermitian = hermitian_deviation(&matrix) <= FLAG_TOL;
        let gram = matrix.adjoint() * &matrix;
        let unitary = max_abs(&(gram - CMatrix::identity(n, n))) <= FLAG_TOL;
        Ok(Self { layout, matrix, hermitian, unitary })
    }

    pub fn identity(layout: SiteLayout) -> Self {
        let n = layout.total_dim();
        Self { layout, matrix: CMatrix::identity(n, n), hermitian: true, unitary: true }
    }

    /// A single-qutrit or qubit operator from row-major entries.
    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return invalid("entry count does not match the dimension");
        }
        Self::new(SiteLayout::new(vec![dim])?, CMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_unitary(&self) -> bool {
        self.unitary
    }

    pub fn adjoint(&self) -> LinOp {
        Self { layout: self.layout.clone(), matrix: self.matrix.adjoint(), ..*self }
    }

    pub fn compose(&self, other: &LinOp) -> Result<LinOp> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch("composition of different layouts".into()));
        }
        LinOp::new(self.layout.clone(), &self.matrix * &other.matrix)
    }

    pub fn add(&self, other: &LinOp) -> Result<LinOp> {
        if self.layout != other.layout {
            return Err(Error::DimensionMismatch("sum of different layouts".into()));
        }
        LinOp::new(self.layout.clone(), &self.matrix + &other.matrix)
    }

    pub fn scale(&self, s: C64) -> LinOp {
        LinOp::new(self.layout.clone(), self.matrix.map(|z| z * s)).expect("same shape")
    }

    /// This operator acting on `sites` of `layout`, identity elsewhere.
    pub fn embed(&self, layout: &SiteLayout, sites: &[usize]) -> Result<LinOp> {
        check_op_on_sites(layout, self, sites)?;
        let n = layout.total_dim();
        let local = layout.offsets(sites);
        let bases = layout.offsets(&layout.complement(sites));
        let mut m = CMatrix::zeros(n, n);
        for &b in &bases {
            for (r, &or) in local.iter().enumerate() {
                for (c, &oc) in local.iter().enumerate() {
                    m[(b + or, b + oc)] = self.matrix[(r, c)];
                }
            }
        }
        Ok(Self { layout: layout.clone(), matrix: m, hermitian: self.hermitian, unitary: self.unitary })
    }

    /// `U self U^dagger` with `U` acting on `sites` of this operator's layout.
    pub fn conjugate_by(&self, u: &LinOp, sites: &[usize]) -> Result<LinOp> {
        check_op_on_sites(&self.layout, u, sites)?;
        LinOp::new(self.layout.clone(), conjugate_matrix_by(&self.matrix, &self.layout, sites, &u.matrix))
    }

    pub fn apply_to(&self, psi: &PureState) -> Result<PureState> {
        let sites: Vec<usize> = (0..self.layout.num_sites()).collect();
        psi.apply(self, &sites)
    }
}

#[derive(Clone, Debug)]
pub struct Eigensystem {
    /// Eigenvalues in descending order.
    pub values: Vec<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: CMatrix,
}

fn eigen_of(m: &CMatrix) -> Eigensystem {
    let n = m.nrows();
    if n == 0 {
        return Eigensystem { values: vec![], vectors: CMatrix::zeros(0, 0) };
    }
    let eig = SymmetricEigen::new(hermitize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Eigensystem { values, vectors }
}

pub fn hermitian_eigensystem(op: &LinOp) -> Result<Eigensystem> {
    if !op.hermitian {
        return Err(Error::NotHermitian(hermitian_deviation(&op.matrix)));
    }
    Ok(eigen_of(&op.matrix))
}

/// Borrowed view of either kind of state.
#[derive(Clone, Copy, Debug)]
pub enum StateRef<'a> {
    Pure(&'a PureState),
    Mixed(&'a DensityOp),
}

impl<'a> StateRef<'a> {
    pub fn layout(&self) -> &'a SiteLayout {
        match self {
            StateRef::Pure(p) => p.layout(),
            StateRef::Mixed(r) => r.layout(),
        }
    }
}

impl<'a> From<&'a PureState> for StateRef<'a> {
    fn from(p: &'a PureState) -> Self {
        StateRef::Pure(p)
    }
}

impl<'a> From<&'a DensityOp> for StateRef<'a> {
    fn from(r: &'a DensityOp) -> Self {
        StateRef::Mixed(r)
    }
}

pub trait Tensor: Sized {
    fn tensor(&self, other: &Self) -> Self;
}

impl Tensor for PureState {
    fn tensor(&self, other: &Self) -> Self {
        let amps = self.amps.iter().flat_map(|a| other.amps.iter().map(move |b| a * b)).collect();
        PureState::subnormalized(self.layout.concat(&other.layout), amps).expect("dimensions agree")
    }
}

impl Tensor for DensityOp {
    fn tensor(&self, other: &Self) -> Self {
        DensityOp::from_parts(self.layout.concat(&other.layout), self.matrix.kronecker(&other.matrix))
    }
}

impl Tensor for LinOp {
    fn tensor(&self, other: &Self) -> Self {
        LinOp::new(self.layout.concat(&other.layout), self.matrix.kronecker(&other.matrix)).expect("square")
    }
}

pub fn tensor_product<T: Tensor>(a: &T, b: &T) -> T {
    a.tensor(b)
}

pub trait Conjugate {
    /// Complex conjugate in the computational basis.
    fn conj(&self) -> Self;
}

impl Conjugate for PureState {
    fn conj(&self) -> Self {
        Self { amps: self.amps.iter().map(|a| a.conj()).collect(), ..self.clone() }
    }
}

impl Conjugate for DensityOp {
    fn conj(&self) -> Self {
        Self { matrix: self.matrix.map(|a| a.conj()), ..self.clone() }
    }
}

impl Conjugate for LinOp {
    fn conj(&self) -> Self {
        Self { matrix: self.matrix.map(|a| a.conj()), ..self.clone() }
    }
}

pub fn conjugate<T: Conjugate>(x: &T) -> T {
    x.conj()
}

pub fn apply_on_sites<'a>(target: impl Into<StateRef<'a>>, op: &LinOp, sites: &[usize]) -> Result<ApplyOutput> {
    match target.into() {
        StateRef::Pure(p) => p.apply(op, sites).map(ApplyOutput::Pure),
        StateRef::Mixed(r) => r.apply(op, sites).map(ApplyOutput::Mixed),
    }
}

#[derive(Clone, Debug)]
pub enum ApplyOutput {
    Pure(PureState),
    Mixed(DensityOp),
}

/// Reduced state on `keep`, sites kept in ascending order.
pub fn partial_trace<'a>(state: impl Into<StateRef<'a>>, keep: &[usize]) -> Result<DensityOp> {
    let state = state.into();
    let layout = state.layout();
    layout.check_sites(keep)?;
    if keep.is_empty() {
        return Err(Error::EmptyKeep);
    }
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    let out_layout = layout.select(&keep)?;
    let m = match state {
        StateRef::Pure(p) => reduced_matrix(p.amplitudes(), layout, &keep),
        StateRef::Mixed(r) => {
            let local = layout.offsets(&keep);
            let bases = layout.offsets(&layout.complement(&keep));
            CMatrix::from_fn(local.len(), local.len(), |i, j| {
                bases.iter().map(|&b| r.matrix[(b + local[i], b + local[j])]).sum()
            })
        }
    };
    Ok(DensityOp::from_parts(out_layout, hermitize(&m)))
}

/// Transposes the subsystem `subset`; the result is Hermitian but in general not positive.
pub fn partial_transpose<'a>(state: impl Into<StateRef<'a>>, subset: &[usize]) -> Result<LinOp> {
    let state = state.into();
    let layout = state.layout();
    layout.check_sites(subset)?;
    let rho = match state {
        StateRef::Pure(p) => p.density().matrix,
        StateRef::Mixed(r) => r.matrix.clone(),
    };
    Ok(partial_transpose_matrix(&rho, layout, subset))
}

pub(crate) fn partial_transpose_matrix(rho: &CMatrix, layout: &SiteLayout, subset: &[usize]) -> LinOp {
    let local = layout.offsets(subset);
    let bases = layout.offsets(&layout.complement(subset));
    let n = layout.total_dim();
    let mut out = CMatrix::zeros(n, n);
    for &b1 in &bases {
        for &b2 in &bases {
            for &s1 in &local {
                for &s2 in &local {
                    out[(b1 + s1, b2 + s2)] = rho[(b1 + s2, b2 + s1)];
                }
            }
        }
    }
    LinOp::new(layout.clone(), out).expect("square")
}

#[derive(Clone, Debug)]
pub struct Schmidt {
    /// Nonzero coefficients in descending order.
    pub coefficients: Vec<f64>,
    /// States on the chosen sites (ascending order).
    pub left: Vec<PureState>,
    /// States on the remaining sites.
    pub right: Vec<PureState>,
}

pub fn schmidt_decompose(psi: &PureState, sites: &[usize]) -> Result<Schmidt> {
    let layout = psi.layout();
    layout.check_sites(sites)?;
    if sites.is_empty() || sites.len() == layout.num_sites() {
        return invalid("a bipartition needs a proper nonempty subset of sites");
    }
    let mut left_sites = sites.to_vec();
    left_sites.sort_unstable();
    let right_sites = layout.complement(&left_sites);
    let local = layout.offsets(&left_sites);
    let bases = layout.offsets(&right_sites);
    let a = psi.amplitudes();
    let m = CMatrix::from_fn(local.len(), bases.len(), |i, j| a[local[i] + bases[j]]);
    let svd = m.svd(true, true);
    let u = svd.u.expect("requested");
    let vt = svd.v_t.expect("requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let left_layout = layout.select(&left_sites)?;
    let right_layout = layout.select(&right_sites)?;
    let mut out = Schmidt { coefficients: vec![], left: vec![], right: vec![] };
    for k in order {
        let s = svd.singular_values[k];
        if s <= 1e-12 {
            continue;
        }
        out.coefficients.push(s);
        let l: Vec<C64> = u.column(k).iter().copied().collect();
        let r: Vec<C64> = vt.row(k).iter().copied().collect();
        out.left.push(PureState::subnormalized(left_layout.clone(), l)?);
        out.right.push(PureState::subnormalized(right_layout.clone(), r)?);
    }
    Ok(out)
}

fn sqrt_psd(m: &CMatrix) -> CMatrix {
    let e = eigen_of(m);
    let n = m.nrows();
    let d = CMatrix::from_fn(n, n, |i, j| if i == j { C64::from(e.values[i].max(0.0).sqrt()) } else { ZERO });
    &e.vectors * d * e.vectors.adjoint()
}

/// Uhlmann fidelity, reducing to `|<a|b>|^2` for pure states.
pub fn fidelity<'a, 'b>(a: impl Into<StateRef<'a>>, b: impl Into<StateRef<'b>>) -> Result<f64> {
    let (a, b) = (a.into(), b.into());
    if a.layout() != b.layout() {
        return Err(Error::DimensionMismatch("fidelity between different layouts".into()));
    }
    let f = match (a, b) {
        (StateRef::Pure(p), StateRef::Pure(q)) => p.inner(q)?.norm_sqr(),
        (StateRef::Pure(p), StateRef::Mixed(r)) | (StateRef::Mixed(r), StateRef::Pure(p)) => r.expectation(p)?,
        (StateRef::Mixed(r), StateRef::Mixed(s)) => {
            let sr = sqrt_psd(&r.matrix);
            let inner = &sr * &s.matrix * &sr;
            eigen_of(&inner).values.iter().map(|v| v.max(0.0).sqrt()).sum::<f64>().powi(2)
        }
    };
    Ok(f.clamp(0.0, 1.0))
}

/// A purification with one extra site whose dimension equals the total dimension of `rho`.
pub fn purify(rho: &DensityOp) -> Result<PureState> {
    if !rho.is_normalized() {
        return Err(Error::NotNormalized(rho.trace()));
    }
    if !rho.is_positive() {
        return Err(Error::NegativeEigenvalue(rho.eigen().values.last().copied().unwrap_or(0.0)));
    }
    let n = rho.layout().total_dim();
    let e = rho.eigen();
    let mut amps = vec![ZERO; n * n];
    for (k, &p) in e.values.iter().enumerate() {
        let w = p.max(0.0).sqrt();
        for i in 0..n {
            amps[i * n + k] = e.vectors[(i, k)] * w;
        }
    }
    let layout = rho.layout().concat(&SiteLayout::raw(vec![n]));
    PureState::normalize(layout, amps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn phi_plus() -> PureState {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        PureState::new(SiteLayout::qubits(2), vec![c(h, 0.0), ZERO, ZERO, c(h, 0.0)]).unwrap()
    }

    #[test]
    fn strides_put_site_zero_first() {
        let l = SiteLayout::new(vec![2, 3, 2]).unwrap();
        assert_eq!(l.strides(), vec![6, 2, 1]);
        assert_eq!(l.digits(11), vec![1, 2, 1]);
        assert_eq!(l.index_of(&[1, 2, 1]), 11);
    }

    #[test]
    fn tensor_of_basis_states_is_a_basis_state() {
        let one = PureState::basis(SiteLayout::qubits(1), 1).unwrap();
        let zero = PureState::basis(SiteLayout::qubits(1), 0).unwrap();
        let t = one.tensor(&zero);
        assert_eq!(t.amplitudes()[2], ONE);
        assert_eq!(t.amplitudes().iter().filter(|a| a.norm() > 0.0).count(), 1);
    }

    #[test]
    fn partial_trace_of_bell_pair_is_maximally_mixed() {
        let r = partial_trace(&phi_plus(), &[0]).unwrap();
        assert!((r.matrix()[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((r.matrix()[(1, 1)].re - 0.5).abs() < 1e-15);
        assert!(r.matrix()[(0, 1)].norm() < 1e-15);
        assert!(matches!(partial_trace(&phi_plus(), &[]), Err(Error::EmptyKeep)));
    }

    #[test]
    fn mixed_and_pure_partial_traces_agree() {
        let layout = SiteLayout::new(vec![2, 3, 2]).unwrap();
        let amps: Vec<C64> = (0..12).map(|i| c((i as f64 * 0.37).sin(), (i as f64 * 0.91).cos())).collect();
        let psi = PureState::normalize(layout, amps).unwrap();
        for keep in [vec![0], vec![1], vec![0, 2], vec![1, 2]] {
            let a = partial_trace(&psi, &keep).unwrap();
            let b = partial_trace(&psi.density(), &keep).unwrap();
            assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-14);
        }
    }

    #[test]
    fn partial_transpose_of_bell_pair_is_swap_over_two() {
        let pt = partial_transpose(&phi_plus(), &[1]).unwrap();
        let e = hermitian_eigensystem(&pt).unwrap();
        let expected = [0.5, 0.5, 0.5, -0.5];
        for (v, x) in e.values.iter().zip(expected) {
            assert!((v - x).abs() < 1e-12);
        }
        assert!((pt.matrix()[(1, 2)].re - 0.5).abs() < 1e-15);
    }

    #[test]
    fn eigensystem_reconstructs_operator() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, -2.0), c(0.0, 2.0), c(-1.0, 0.0)]);
        let op = LinOp::new(SiteLayout::qubits(1), m.clone()).unwrap();
        let e = hermitian_eigensystem(&op).unwrap();
        assert!(e.values[0] >= e.values[1]);
        let d = CMatrix::from_fn(2, 2, |i, j| if i == j { C64::from(e.values[i]) } else { ZERO });
        let back = &e.vectors * d * e.vectors.adjoint();
        assert!(max_abs(&(back - m)) < 1e-10);
    }

    #[test]
    fn schmidt_of_product_and_bell() {
        let prod = PureState::basis(SiteLayout::qubits(2), 0).unwrap();
        assert_eq!(schmidt_decompose(&prod, &[0]).unwrap().coefficients, vec![1.0]);
        let s = schmidt_decompose(&phi_plus(), &[0]).unwrap();
        assert_eq!(s.coefficients.len(), 2);
        assert!(s.coefficients.iter().all(|x| (x - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12));
    }

    #[test]
    fn fidelity_variants_agree() {
        let p = phi_plus();
        let q =
            PureState::normalize(SiteLayout::qubits(2), vec![c(1.0, 0.0), c(0.2, 0.1), ZERO, c(0.5, -0.3)]).unwrap();
        let pure = fidelity(&p, &q).unwrap();
        let half = fidelity(&p, &q.density()).unwrap();
        let mixed = fidelity(&p.density(), &q.density()).unwrap();
        assert!((pure - half).abs() < 1e-12);
        assert!((pure - mixed).abs() < 1e-7);
    }

    #[test]
    fn purification_of_basis_projector() {
        let rho = PureState::basis(SiteLayout::qubits(1), 0).unwrap().density();
        let psi = purify(&rho).unwrap();
        assert!((psi.amplitudes()[0].re - 1.0).abs() < 1e-12);
        let mixed = DensityOp::maximally_mixed(SiteLayout::qubits(1));
        let psi = purify(&mixed).unwrap();
        let back = partial_trace(&psi, &[0]).unwrap();
        assert!(max_abs(&(back.matrix() - mixed.matrix())) < 1e-12);
    }

    #[test]
    fn conjugation_by_unitary_matches_embedding() {
        let layout = SiteLayout::qubits(3);
        let x = LinOp::from_rows(2, &[ZERO, ONE, ONE, ZERO]).unwrap();
        let ops = x.tensor(&x);
        let z = LinOp::from_rows(2, &[ONE, ZERO, ZERO, -ONE]).unwrap();
        let zfull = z.embed(&layout, &[2]).unwrap();
        let conj = zfull.conjugate_by(&ops, &[2, 0]).unwrap();
        let big = ops.embed(&layout, &[2, 0]).unwrap();
        let direct = big.matrix() * zfull.matrix() * big.matrix().adjoint();
        assert!(max_abs(&(conj.matrix() - direct)) < 1e-14);
        assert!((conj.matrix()[(0, 0)].re + 1.0).abs() < 1e-14);
    }

    #[test]
    fn density_rejects_bad_inputs() {
        let l = SiteLayout::qubits(1);
        let bad_trace = CMatrix::identity(2, 2);
        assert!(matches!(DensityOp::new(l.clone(), bad_trace), Err(Error::NotNormalized(_))));
        let non_psd = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), ZERO, ZERO, c(-0.5, 0.0)]);
        assert!(matches!(DensityOp::new(l.clone(), non_psd), Err(Error::NegativeEigenvalue(_))));
        let non_herm = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), ONE, ZERO, c(0.5, 0.0)]);
        assert!(matches!(DensityOp::new(l, non_herm), Err(Error::NotHermitian(_))));
    }
}
