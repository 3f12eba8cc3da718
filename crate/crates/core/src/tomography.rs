//! Partial-transpose spectra, linear-inversion tomography and the analysis of
//! mixtures of partially transposed copies of a target state.

use serde::Serialize;

use crate::gates::aux_measurement;
use crate::tensor::{
    partial_transpose, partial_transpose_matrix, schmidt_decompose, CMatrix, DensityOp, LinOp, PureState, SiteLayout,
    Tensor,
};
use crate::{invalid, Error, Result};

/// Origin of a partial-transpose eigenvalue in terms of Schmidt coefficient indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum PtTag {
    Square(usize),
    Plus(usize, usize),
    Minus(usize, usize),
}

#[derive(Clone, Debug, Serialize)]
pub struct PtSpectrum {
    /// Eigenvalues in descending order with their tags.
    pub entries: Vec<(f64, PtTag)>,
}

impl PtSpectrum {
    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.0).collect()
    }

    /// The values padded with zeros to `dim` entries, sorted descending.
    pub fn padded(&self, dim: usize) -> Vec<f64> {
        let mut v = self.values();
        v.resize(dim.max(v.len()), 0.0);
        v.sort_by(|a, b| b.total_cmp(a));
        v
    }
}

/// Spectrum of the partial transpose of a pure state with Schmidt coefficients `coeffs`.
pub fn pt_spectrum_pure(coeffs: &[f64]) -> Result<PtSpectrum> {
    if coeffs.is_empty() || coeffs.iter().any(|&c| c < 0.0 || !c.is_finite()) {
        return invalid("Schmidt coefficients must be nonnegative and nonempty");
    }
    let norm: f64 = coeffs.iter().map(|c| c * c).sum();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(Error::NotNormalized(norm.sqrt()));
    }
    let m = coeffs.len();
    let mut entries = Vec::with_capacity(m * m);
    for i in 0..m {
        entries.push((coeffs[i] * coeffs[i], PtTag::Square(i)));
        for j in i + 1..m {
            let p = coeffs[i] * coeffs[j];
            entries.push((p, PtTag::Plus(i, j)));
            entries.push((-p, PtTag::Minus(i, j)));
        }
    }
    entries.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(PtSpectrum { entries })
}

/// Spectrum from the Schmidt decomposition of `psi` across `sites | rest`.
pub fn pt_spectrum_of(psi: &PureState, sites: &[usize]) -> Result<PtSpectrum> {
    let s = schmidt_decompose(psi, sites)?;
    let norm: f64 = s.coefficients.iter().map(|c| c * c).sum::<f64>().sqrt();
    let coeffs: Vec<f64> = s.coefficients.iter().map(|c| c / norm).collect();
    pt_spectrum_pure(&coeffs)
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PtBounds {
    pub min: f64,
    pub max: f64,
    /// Largest eigenvalue reaches 1, as for product pure states.
    pub separable_flag: bool,
}

pub fn pt_bounds_check(rho: &DensityOp, subset: &[usize]) -> Result<PtBounds> {
    let values = crate::tensor::hermitian_eigensystem(&partial_transpose(rho, subset)?)?.values;
    let max = values[0];
    let min = *values.last().expect("nonempty");
    Ok(PtBounds { min, max, separable_flag: max >= 1.0 - 1e-9 })
}

/// Product Pauli-basis projectors for `n` qubits: every setting, every outcome.
pub fn pauli_frame(n: usize) -> Vec<LinOp> {
    let singles: Vec<LinOp> = (0..3).flat_map(|y| aux_measurement(y).expect("valid").projectors().to_vec()).collect();
    let mut frame: Vec<LinOp> = vec![LinOp::identity(SiteLayout::qubits(0))];
    for _ in 0..n {
        frame = frame.iter().flat_map(|f| singles.iter().map(move |s| f.tensor(s))).collect();
    }
    frame
}

pub fn frame_probabilities(frame: &[LinOp], rho: &DensityOp) -> Vec<f64> {
    frame.iter().map(|e| (e.matrix() * rho.matrix()).trace().re).collect()
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Hermitian estimate; positivity is reported by its flags, not enforced.
    pub rho: DensityOp,
    pub max_residual: f64,
}

/// Least-squares linear inversion of `p_i = Tr(E_i rho)`.
pub fn reconstruct_state(layout: &SiteLayout, frame: &[LinOp], probabilities: &[f64]) -> Result<Reconstruction> {
    let d = layout.total_dim();
    if frame.len() != probabilities.len() {
        return invalid("one probability per frame element is required");
    }
    if frame.iter().any(|e| e.layout() != layout) {
        return Err(Error::DimensionMismatch("frame element on a different layout".into()));
    }
    let a = CMatrix::from_fn(frame.len(), d * d, |i, k| frame[i].matrix()[(k / d, k % d)].conj());
    let gram = a.adjoint() * &a;
    let eig = crate::tensor::hermitian_eigensystem(&LinOp::new(SiteLayout::raw(vec![d * d]), gram)?)?;
    let top = eig.values[0].max(0.0);
    let rank = eig.values.iter().filter(|&&v| v > 1e-9 * top.max(1e-300)).count();
    if rank < d * d {
        return Err(Error::RankDeficient { rank, needed: d * d });
    }
    let p = CMatrix::from_fn(frame.len(), 1, |i, _| probabilities[i].into());
    let rhs = eig.vectors.adjoint() * (a.adjoint() * p);
    let scaled = CMatrix::from_fn(d * d, 1, |k, _| rhs[(k, 0)] / eig.values[k]);
    let x = &eig.vectors * scaled;
    let m = CMatrix::from_fn(d, d, |r, c| x[(r * d + c, 0)]);
    let rho = DensityOp::from_hermitian(layout.clone(), crate::tensor::hermitize(&m))?;
    let max_residual =
        frame_probabilities(frame, &rho).iter().zip(probabilities).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()));
    Ok(Reconstruction { rho, max_residual })
}

/// True when `psi` is entangled across every bipartition; a single site counts as genuinely entangled.
pub fn gme_check(psi: &PureState) -> Result<bool> {
    let n = psi.layout().num_sites();
    for mask in 0..(1usize << (n.saturating_sub(1))) {
        let mut side = vec![0];
        side.extend((1..n).filter(|&s| mask >> (s - 1) & 1 == 1));
        if side.len() == n {
            continue;
        }
        let rank = schmidt_decompose(psi, &side)?.coefficients.iter().filter(|&&c| c > 1e-9).count();
        if rank <= 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `sum_f w_f (psi psi^†)^{T_f}`, transposing the sites whose flag is `true`.
pub fn flagged_mixture(psi: &PureState, weights: &[(Vec<bool>, f64)]) -> Result<DensityOp> {
    let layout = psi.layout();
    let n = layout.num_sites();
    let total: f64 = weights.iter().map(|w| w.1).sum();
    if weights.iter().any(|(f, w)| f.len() != n || *w < 0.0) || (total - 1.0).abs() > 1e-12 {
        return invalid("flag weights need one flag per site, nonnegative weights and unit sum");
    }
    let base = psi.density();
    let dim = layout.total_dim();
    let mut m = CMatrix::zeros(dim, dim);
    for (flags, w) in weights {
        let subset: Vec<usize> = (0..n).filter(|&s| flags[s]).collect();
        m += partial_transpose_matrix(base.matrix(), layout, &subset).matrix().scale(*w);
    }
    DensityOp::from_hermitian(layout.clone(), m)
}

/// Weight `alpha` with `rho = alpha psi psi^† + (1 - alpha) psi* psi*^†`, or `None` when no such weight fits.
pub fn conjugation_decomposition(rho: &DensityOp, psi: &PureState) -> Result<Option<f64>> {
    if rho.layout() != psi.layout() {
        return Err(Error::DimensionMismatch("state and target layouts differ".into()));
    }
    use crate::tensor::Conjugate;
    let p = psi.density();
    let q = psi.conj().density();
    let diff = p.matrix() - q.matrix();
    let dn = diff.norm_squared();
    let fits = |alpha: f64| {
        let r = rho.matrix() - q.matrix() - diff.scale(alpha);
        r.iter().fold(0.0f64, |acc, z| acc.max(z.norm())) < 1e-9
    };
    if dn < 1e-24 {
        return Ok(fits(1.0).then_some(1.0));
    }
    let alpha = diff.zip_map(&(rho.matrix() - q.matrix()), |a, b| a.conj() * b).sum().re / dn;
    if !(-1e-9..=1.0 + 1e-9).contains(&alpha) || !fits(alpha) {
        return Ok(None);
    }
    Ok(Some(alpha.clamp(0.0, 1.0)))
}
