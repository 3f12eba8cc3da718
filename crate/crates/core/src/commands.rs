//! The operations behind the `netcert` command line, independent of argument parsing and files.

use serde::Serialize;

use crate::adversary::{make_model, AdversaryKind};
use crate::certify::{certify, CertReport, Tolerance};
use crate::experiment::{reference_behavior, Behavior, Scenario, Variant};
use crate::extract::{extraction_channel, ExtractionOptions};
use crate::gates::encode_qudit;
use crate::tensor::{hermitian_eigensystem, partial_transpose, PureState};
use crate::tomography::{pt_spectrum_of, PtTag};
use crate::{invalid, Error, Result};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Exit status for an operation's error.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::NotCertified(_) => EXIT_FAIL,
        _ => EXIT_INPUT,
    }
}

/// Turns a loaded state into a qubit target, encoding qudits when allowed.
pub fn prepare_target(psi: PureState, encode: bool) -> Result<PureState> {
    if psi.layout().dims().iter().all(|&d| d == 2) {
        return Ok(psi);
    }
    if !encode {
        return invalid("the target has sites of dimension above 2; pass --encode-qudit to encode them into qubits");
    }
    encode_qudit(&psi)
}

pub fn cmd_simulate(psi: &PureState, variant: Variant) -> Result<Behavior> {
    let scenario = Scenario::new(variant, psi.layout().num_sites())?;
    reference_behavior(psi, scenario)
}

pub fn cmd_certify(behavior: &Behavior, psi: &PureState, tol: Tolerance) -> Result<CertReport> {
    if psi.layout().num_sites() != behavior.scenario().n {
        return Err(Error::DimensionMismatch(format!(
            "target has {} qubits but the table has {} main parties",
            psi.layout().num_sites(),
            behavior.scenario().n
        )));
    }
    certify(behavior, psi, tol)
}

pub fn render_cert_report(r: &CertReport) -> String {
    let mark = |ok: bool| if ok { "PASS" } else { "FAIL" };
    let mut out = format!("scenario: {} N={}\n", r.variant.name(), r.n);
    for p in &r.chsh.pairs {
        out += &format!("3-CHSH pair {}: {:.12} (deviation {:.3e}) {}", p.pair + 1, p.total, p.deviation, mark(p.pass));
        if let Some(ctx) = &p.context {
            out += &format!(" at settings ({}, {}, {})", ctx[0], ctx[1], ctx[2]);
        }
        out.push('\n');
    }
    out += &format!("tomography residual: {:.3e} {}\n", r.tomography.max_residual, mark(r.tomography.pass));
    if let Some(a) = &r.alignment {
        out += &format!("alignment residual: {:.3e} {}\n", a.max_residual, mark(a.pass));
    }
    out += &format!("result: {}\n", mark(r.pass));
    out
}

#[derive(Clone, Debug, Serialize)]
pub struct ExtractReport {
    pub model: String,
    pub variant: Variant,
    pub n: usize,
    pub alpha: f64,
    pub conjugate_weight: f64,
    pub residual: f64,
    pub family_fidelity: f64,
    pub flag_distribution: Vec<f64>,
}

pub fn cmd_extract(
    psi: &PureState,
    kind: AdversaryKind,
    variant: Variant,
    skip_certify: bool,
) -> Result<ExtractReport> {
    let scenario = Scenario::new(variant, psi.layout().num_sites())?;
    let model = make_model(kind, psi, scenario)?;
    let opts = ExtractionOptions { require_certification: !skip_certify, ..Default::default() };
    let r = extraction_channel(&model, psi, opts)?;
    Ok(ExtractReport {
        model: format!("{kind:?}"),
        variant,
        n: scenario.n,
        alpha: r.decomposition.alpha,
        conjugate_weight: r.decomposition.conjugate_weight,
        residual: r.decomposition.residual,
        family_fidelity: r.family_fidelity,
        flag_distribution: r.flag_distribution,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PtReport {
    /// Transposed sites.
    pub sites: Vec<usize>,
    /// Eigenvalues predicted from the Schmidt coefficients, with their origin.
    pub predicted: Vec<(f64, PtTag)>,
    /// Eigenvalues of the explicitly transposed density matrix, descending.
    pub eigenvalues: Vec<f64>,
    pub sum: f64,
    pub min: f64,
    pub max: f64,
    /// Largest gap between the zero-padded prediction and the explicit spectrum.
    pub discrepancy: f64,
}

pub fn cmd_pt(psi: &PureState, sites: &[usize]) -> Result<PtReport> {
    let predicted = pt_spectrum_of(psi, sites)?;
    let eigenvalues = hermitian_eigensystem(&partial_transpose(psi, sites)?)?.values;
    let padded = predicted.padded(eigenvalues.len());
    let discrepancy = padded.iter().zip(&eigenvalues).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
    Ok(PtReport {
        sites: sites.to_vec(),
        sum: eigenvalues.iter().sum(),
        min: *eigenvalues.last().expect("nonempty"),
        max: eigenvalues[0],
        predicted: predicted.entries,
        eigenvalues,
        discrepancy,
    })
}
