//! Physical models that reproduce, or deliberately fail to reproduce, the reference correlations.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::experiment::{
    behavior_of, behavior_on, build_reference_model, reference_measurements, reference_party_sites, reference_sources,
    Ensemble, PhysicalModel, Scenario, Source, Variant,
};
use crate::gates::{conjugation_controlled_set, ProjectorSet};
use crate::states::bell_state;
use crate::tensor::{apply_local, CMatrix, Conjugate, LinOp, PureState, SiteLayout, Tensor, ONE, ZERO};
use crate::{invalid, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AdversaryKind {
    ExactReference,
    /// Every state and measurement complex conjugated.
    GlobalConjugate,
    /// Coherent superposition of the reference and its conjugate, marked by one flag qubit per party.
    FlaggedSuperposition {
        alpha: f64,
    },
    /// Each party (or each source half) padded with a qubit and rotated by a Haar-random unitary.
    IsometryEmbedded {
        seed: u64,
    },
    /// One shared pair replaced by a Werner state of the given visibility.
    Noisy {
        visibility: f64,
        pair: usize,
    },
}

impl AdversaryKind {
    /// Parses `exact`, `conjugate`, `flagged:<alpha>`, `embedded` or `noisy:<visibility>`.
    pub fn parse(spec: &str, seed: u64) -> Result<AdversaryKind> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let number = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::InvalidArgument(format!("{name} needs a {what}, e.g. {name}:0.5")))?
                .parse::<f64>()
                .map_err(|e| Error::InvalidArgument(format!("bad {what}: {e}")))
        };
        match name {
            "exact" => Ok(AdversaryKind::ExactReference),
            "conjugate" => Ok(AdversaryKind::GlobalConjugate),
            "flagged" => Ok(AdversaryKind::FlaggedSuperposition { alpha: number("weight")? }),
            "embedded" => Ok(AdversaryKind::IsometryEmbedded { seed }),
            "noisy" => Ok(AdversaryKind::Noisy { visibility: number("visibility")?, pair: 0 }),
            _ => invalid(format!("unknown model '{spec}'")),
        }
    }
}

/// Haar-random unitary from the QR decomposition of a complex Gaussian matrix.
pub fn haar_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = g.qr();
    let (q, r) = (qr.q(), qr.r());
    let phases = CMatrix::from_fn(dim, dim, |i, j| {
        if i == j {
            let d = r[(i, i)];
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                ONE
            }
        } else {
            ZERO
        }
    });
    q * phases
}

pub fn make_model(kind: AdversaryKind, psi: &PureState, scenario: Scenario) -> Result<PhysicalModel> {
    match kind {
        AdversaryKind::ExactReference => build_reference_model(psi, scenario),
        AdversaryKind::GlobalConjugate => global_conjugate(psi, scenario),
        AdversaryKind::FlaggedSuperposition { alpha } => flagged_superposition(psi, scenario, alpha),
        AdversaryKind::IsometryEmbedded { seed } => isometry_embedded(psi, scenario, seed),
        AdversaryKind::Noisy { visibility, pair } => noisy(psi, scenario, visibility, pair),
    }
}

fn global_conjugate(psi: &PureState, scenario: Scenario) -> Result<PhysicalModel> {
    let reference = build_reference_model(psi, scenario)?;
    let sources = reference_sources(psi, scenario.n)
        .into_iter()
        .map(|s| Ok(Source { state: s.state.map_states(|p| Ok(p.conj()))?, ..s }))
        .collect::<Result<Vec<_>>>()?;
    let measurements = reference.measurements().iter().map(|party| party.iter().map(|m| m.conj()).collect()).collect();
    PhysicalModel::from_sources(
        scenario,
        reference.layout().clone(),
        sources,
        reference_party_sites(scenario),
        measurements,
    )
}

fn flagged_superposition(psi: &PureState, scenario: Scenario, alpha: f64) -> Result<PhysicalModel> {
    if scenario.variant == Variant::Fully {
        return Err(Error::SourceIndependence(
            "the flagged superposition prepares every flag and the target in one joint source".into(),
        ));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return invalid(format!("weight {alpha} outside [0, 1]"));
    }
    let n = scenario.n;
    let reference = build_reference_model(psi, scenario)?;
    let base = reference.state().as_pure().expect("reference state is pure").clone();
    let flags = SiteLayout::qubits(2 * n);
    let zeros = PureState::basis(flags.clone(), 0)?;
    let ones = PureState::basis(flags, (1 << (2 * n)) - 1)?;
    let a = base.tensor(&zeros);
    let b = base.conj().tensor(&ones);
    let (wa, wb) = (alpha.sqrt(), (1.0 - alpha).sqrt());
    let amps = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x * wa + y * wb).collect();
    let state = PureState::new(a.layout().clone(), amps)?;
    let party_sites: Vec<Vec<usize>> = reference_party_sites(scenario)
        .into_iter()
        .enumerate()
        .map(|(p, mut sites)| {
            sites.push(3 * n + p);
            sites
        })
        .collect();
    let measurements = reference
        .measurements()
        .iter()
        .map(|party| party.iter().map(conjugation_controlled_set).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    PhysicalModel::new(scenario, Ensemble::pure(state), party_sites, measurements)
}

/// `U (P ⊗ 1) U^†` for every projector, with the padding qubits appended after the party's sites.
fn pushed_through(set: &ProjectorSet, pad: usize, unitaries: &[(LinOp, Vec<usize>)]) -> Result<ProjectorSet> {
    let pad_layout = SiteLayout::qubits(pad);
    let layout = set.layout().concat(&pad_layout);
    set.map(layout, |p| {
        let mut q = p.tensor(&LinOp::identity(pad_layout.clone()));
        for (u, sites) in unitaries {
            q = q.conjugate_by(u, sites)?;
        }
        Ok(q)
    })
}

fn isometry_embedded(psi: &PureState, scenario: Scenario, seed: u64) -> Result<PhysicalModel> {
    let n = scenario.n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let reference_meas = reference_measurements(scenario)?;
    let layout = SiteLayout::qubits(5 * n);
    let mut party_sites = reference_party_sites(scenario);
    match scenario.variant {
        Variant::Network => {
            for (p, sites) in party_sites.iter_mut().enumerate() {
                sites.push(3 * n + p);
            }
            let mut amps = vec![ZERO; layout.total_dim()];
            let reference = build_reference_model(psi, scenario)?;
            let pad = 1usize << (2 * n);
            for (g, &a) in reference.state().as_pure().expect("pure").amplitudes().iter().enumerate() {
                amps[g * pad] = a;
            }
            let mut measurements = Vec::with_capacity(party_sites.len());
            for (p, sites) in party_sites.iter().enumerate() {
                let u = haar_unitary(1 << sites.len(), &mut rng);
                apply_local(&mut amps, &layout, sites, &u);
                let u = LinOp::new(SiteLayout::qubits(sites.len()), u)?;
                let all: Vec<usize> = (0..sites.len()).collect();
                let sets = reference_meas[p]
                    .iter()
                    .map(|m| pushed_through(m, 1, &[(u.clone(), all.clone())]))
                    .collect::<Result<Vec<_>>>()?;
                measurements.push(sets);
            }
            PhysicalModel::new(scenario, Ensemble::pure(PureState::new(layout, amps)?), party_sites, measurements)
        }
        Variant::Fully => {
            let mut sources =
                vec![Source { name: "target".into(), sites: (0..n).collect(), state: Ensemble::pure(psi.clone()) }];
            let mut main_u = Vec::with_capacity(n);
            let mut aux_u = Vec::with_capacity(n);
            for j in 0..n {
                let ua = LinOp::new(SiteLayout::qubits(2), haar_unitary(4, &mut rng))?;
                let ub = LinOp::new(SiteLayout::qubits(2), haar_unitary(4, &mut rng))?;
                let h = C64::from(std::f64::consts::FRAC_1_SQRT_2);
                let mut amps = vec![ZERO; 16];
                // sites (A-bar, pad, B, pad): phi+ on A-bar and B, pads in |0>
                amps[0b0000] = h;
                amps[0b1010] = h;
                let pair = PureState::new(SiteLayout::qubits(4), amps)?.apply(&ua, &[0, 1])?.apply(&ub, &[2, 3])?;
                sources.push(Source {
                    name: format!("pair{}", j + 1),
                    sites: vec![n + j, 3 * n + j, 2 * n + j, 4 * n + j],
                    state: Ensemble::pure(pair),
                });
                main_u.push(ua);
                aux_u.push(ub);
            }
            for (j, sites) in party_sites.iter_mut().enumerate().take(n) {
                sites.push(3 * n + j);
            }
            party_sites[n].extend(4 * n..5 * n);
            let mut measurements: Vec<Vec<ProjectorSet>> = Vec::with_capacity(n + 1);
            for j in 0..n {
                let sets = reference_meas[j]
                    .iter()
                    .map(|m| pushed_through(m, 1, &[(main_u[j].clone(), vec![1, 2])]))
                    .collect::<Result<Vec<_>>>()?;
                measurements.push(sets);
            }
            let aux: Vec<(LinOp, Vec<usize>)> =
                aux_u.iter().enumerate().map(|(j, u)| (u.clone(), vec![j, n + j])).collect();
            measurements
                .push(reference_meas[n].iter().map(|m| pushed_through(m, n, &aux)).collect::<Result<Vec<_>>>()?);
            PhysicalModel::from_sources(scenario, layout, sources, party_sites, measurements)
        }
    }
}

fn noisy(psi: &PureState, scenario: Scenario, visibility: f64, pair: usize) -> Result<PhysicalModel> {
    if !(0.0..=1.0).contains(&visibility) {
        return invalid(format!("visibility {visibility} outside [0, 1]"));
    }
    if pair >= scenario.n {
        return invalid(format!("pair {pair} out of range"));
    }
    let noise = (1.0 - visibility) / 4.0;
    let werner = Ensemble::new(
        (0..4)
            .map(|a| Ok((if a == 0 { visibility + noise } else { noise }, bell_state(a)?)))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let mut sources = reference_sources(psi, scenario.n);
    sources[pair + 1].state = werner;
    PhysicalModel::from_sources(
        scenario,
        SiteLayout::qubits(3 * scenario.n),
        sources,
        reference_party_sites(scenario),
        reference_measurements(scenario)?,
    )
}

/// Largest difference between the complete tables of two models.
pub fn behavior_equivalence(a: &PhysicalModel, b: &PhysicalModel) -> Result<f64> {
    if a.scenario() != b.scenario() {
        return invalid("models belong to different scenarios");
    }
    behavior_of(a)?.max_deviation(&behavior_of(b)?)
}

/// Largest difference between two models on the listed rows.
pub fn behavior_equivalence_on(a: &PhysicalModel, b: &PhysicalModel, rows: &[Vec<usize>]) -> Result<f64> {
    if a.scenario() != b.scenario() {
        return invalid("models belong to different scenarios");
    }
    behavior_on(a, rows)?.max_deviation(&behavior_on(b, rows)?)
}
