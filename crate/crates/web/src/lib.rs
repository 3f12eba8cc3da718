//! Browser bindings for three small experiments: the partial-transpose spectrum of a
//! two-qubit state, 3-CHSH totals under a noisy source, and extraction from a flagged model.

use netcert_core::adversary::{behavior_equivalence, make_model, AdversaryKind};
use netcert_core::certify::{certify, Tolerance};
use netcert_core::experiment::{build_reference_model, certification_behavior, Scenario};
use netcert_core::extract::{extraction_channel, ExtractionOptions};
use netcert_core::states::phase_bell;
use netcert_core::tensor::{PureState, SiteLayout};
use netcert_core::tomography::pt_spectrum_of;
use netcert_core::C64;
use wasm_bindgen::prelude::*;

fn weighted_bell(p: f64) -> Result<PureState, String> {
    if !(0.0..=1.0).contains(&p) {
        return Err(format!("weight {p} outside [0, 1]"));
    }
    let amps = vec![C64::from(p.sqrt()), C64::from(0.0), C64::from(0.0), C64::from((1.0 - p).sqrt())];
    PureState::new(SiteLayout::qubits(2), amps).map_err(|e| e.to_string())
}

/// Eigenvalues of the partial transpose of `sqrt(p)|00> + sqrt(1-p)|11>`, descending.
pub fn pt_eigenvalues(p: f64) -> Result<Vec<f64>, String> {
    let psi = weighted_bell(p)?;
    Ok(pt_spectrum_of(&psi, &[0]).map_err(|e| e.to_string())?.padded(4))
}

/// 3-CHSH total of each pair when the source of `pair` emits a Werner state.
pub fn noisy_chsh(visibility: f64, pair: usize) -> Result<Vec<f64>, String> {
    let psi = phase_bell();
    let kind = AdversaryKind::Noisy { visibility, pair };
    let model = make_model(kind, &psi, Scenario::network(2)).map_err(|e| e.to_string())?;
    let behavior = certification_behavior(&model).map_err(|e| e.to_string())?;
    let report = certify(&behavior, &psi, Tolerance::default()).map_err(|e| e.to_string())?;
    Ok(report.chsh.pairs.iter().map(|p| p.total).collect())
}

/// `[alpha, conjugate weight, deviation of the flagged table from the reference table]`.
pub fn flagged_extraction(alpha: f64) -> Result<Vec<f64>, String> {
    let psi = phase_bell();
    let scenario = Scenario::network(2);
    let model = make_model(AdversaryKind::FlaggedSuperposition { alpha }, &psi, scenario).map_err(|e| e.to_string())?;
    let reference = build_reference_model(&psi, scenario).map_err(|e| e.to_string())?;
    let deviation = behavior_equivalence(&model, &reference).map_err(|e| e.to_string())?;
    let r = extraction_channel(&model, &psi, ExtractionOptions::default()).map_err(|e| e.to_string())?;
    Ok(vec![r.decomposition.alpha, r.decomposition.conjugate_weight, deviation])
}

#[wasm_bindgen(js_name = ptEigenvalues)]
pub fn pt_eigenvalues_js(p: f64) -> Result<Vec<f64>, JsError> {
    pt_eigenvalues(p).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = noisyChsh)]
pub fn noisy_chsh_js(visibility: f64, pair: usize) -> Result<Vec<f64>, JsError> {
    noisy_chsh(visibility, pair).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = flaggedExtraction)]
pub fn flagged_extraction_js(alpha: f64) -> Result<Vec<f64>, JsError> {
    flagged_extraction(alpha).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_interpolates_between_product_and_bell() {
        assert_eq!(pt_eigenvalues(1.0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        let half = pt_eigenvalues(0.5).unwrap();
        assert!((half[3] + 0.5).abs() < 1e-12);
        assert!(pt_eigenvalues(1.5).is_err());
    }

    #[test]
    fn noise_scales_one_pair() {
        let totals = noisy_chsh(0.5, 1).unwrap();
        let max = 6.0 * std::f64::consts::SQRT_2;
        assert!((totals[0] - max).abs() < 1e-9);
        assert!((totals[1] - 0.5 * max).abs() < 1e-9);
    }

    #[test]
    fn flagged_weight_is_invisible_in_the_table() {
        let r = flagged_extraction(0.25).unwrap();
        assert!((r[0] - 0.25).abs() < 1e-9 && (r[1] - 0.75).abs() < 1e-9);
        assert!(r[2] < 1e-10);
    }
}
