//! Scenarios, physical models and exact correlation tables.
//!
//! Parties are ordered with the main parties `A_1..A_N` first, followed by the auxiliary
//! parties (`B_1..B_N` in the network-assisted variant, a single `B` in the fully
//! network-assisted one). Input tuples are enumerated lexicographically with party 0
//! most significant, and the same holds for outcome tuples inside a row.

use std::collections::HashMap;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::gates::{aux_measurement, bell_basis, main_observable, parallel_bsm, Pairing, ProjectorSet};
use crate::par::ordered_map;
use crate::states::bell_phi_plus;
use crate::tensor::{apply_local, CMatrix, DensityOp, LinOp, PureState, SiteLayout, Tensor};
use crate::{invalid, Error, Result};

/// Index of the Bell-state measurement among a main party's inputs.
pub const BSM_INPUT: usize = 6;
pub const MAIN_INPUTS: usize = 7;
const MAX_TABLE_ENTRIES: usize = 60_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Network,
    Fully,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Variant> {
        match s {
            "network" => Ok(Variant::Network),
            "fully" => Ok(Variant::Fully),
            _ => invalid(format!("unknown variant '{s}' (expected network or fully)")),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Network => "network",
            Variant::Fully => "fully",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Scenario {
    pub variant: Variant,
    pub n: usize,
}

impl Scenario {
    pub fn new(variant: Variant, n: usize) -> Result<Self> {
        if n == 0 {
            return invalid("a scenario needs at least one main party");
        }
        Ok(Self { variant, n })
    }

    pub fn network(n: usize) -> Self {
        Self::new(Variant::Network, n).expect("n >= 1")
    }

    pub fn fully(n: usize) -> Self {
        Self::new(Variant::Fully, n).expect("n >= 1")
    }

    pub fn num_parties(&self) -> usize {
        match self.variant {
            Variant::Network => 2 * self.n,
            Variant::Fully => self.n + 1,
        }
    }

    pub fn is_main(&self, party: usize) -> bool {
        party < self.n
    }

    /// Party holding the auxiliary side of pair `j`.
    pub fn aux_party(&self, j: usize) -> usize {
        match self.variant {
            Variant::Network => self.n + j,
            Variant::Fully => self.n,
        }
    }

    fn vector_inputs(&self) -> usize {
        3usize.pow(self.n as u32)
    }

    pub fn even_input(&self) -> usize {
        self.vector_inputs()
    }

    pub fn odd_input(&self) -> usize {
        self.vector_inputs() + 1
    }

    pub fn pairing_input(&self, pairing: Pairing) -> usize {
        match pairing {
            Pairing::Even => self.even_input(),
            Pairing::Odd => self.odd_input(),
        }
    }

    /// Input index of the Pauli-setting vector `y` (entries in 0..3, first entry most significant).
    pub fn y_vector_input(&self, y: &[usize]) -> usize {
        y.iter().fold(0, |acc, &v| acc * 3 + v)
    }

    pub fn y_vector(&self, mut input: usize) -> Vec<usize> {
        let mut y = vec![0; self.n];
        for j in (0..self.n).rev() {
            y[j] = input % 3;
            input /= 3;
        }
        y
    }

    pub fn input_count(&self, party: usize) -> usize {
        if self.is_main(party) {
            MAIN_INPUTS
        } else {
            match self.variant {
                Variant::Network => 3,
                Variant::Fully => self.vector_inputs() + 2,
            }
        }
    }

    fn pairs_in(&self, pairing: Pairing) -> usize {
        pairing.pairs(self.n).len()
    }

    pub fn outcome_count(&self, party: usize, input: usize) -> usize {
        if self.is_main(party) {
            if input == BSM_INPUT {
                4
            } else {
                2
            }
        } else {
            match self.variant {
                Variant::Network => 2,
                Variant::Fully if input < self.vector_inputs() => 1 << self.n,
                Variant::Fully if input == self.even_input() => 4usize.pow(self.pairs_in(Pairing::Even) as u32),
                Variant::Fully => 4usize.pow(self.pairs_in(Pairing::Odd) as u32),
            }
        }
    }

    pub fn input_label(&self, party: usize, input: usize) -> String {
        if self.is_main(party) {
            if input == BSM_INPUT {
                "bsm".into()
            } else {
                input.to_string()
            }
        } else {
            match self.variant {
                Variant::Network => input.to_string(),
                Variant::Fully if input == self.even_input() => "even".into(),
                Variant::Fully if input == self.odd_input() => "odd".into(),
                Variant::Fully => self.y_vector(input).iter().map(|v| v.to_string()).collect(),
            }
        }
    }

    pub fn parse_input(&self, party: usize, label: &str) -> Result<usize> {
        (0..self.input_count(party))
            .find(|&x| self.input_label(party, x) == label)
            .ok_or_else(|| Error::Alphabet(format!("input '{label}' for party {party}")))
    }

    pub fn outcome_label(&self, party: usize, input: usize, outcome: usize) -> String {
        let bits = |v: usize, width: usize| {
            (0..width).rev().map(|k| if v >> k & 1 == 1 { '1' } else { '0' }).collect::<String>()
        };
        if self.is_main(party) {
            if input == BSM_INPUT {
                bits(outcome, 2)
            } else {
                outcome.to_string()
            }
        } else {
            match self.variant {
                Variant::Network => outcome.to_string(),
                Variant::Fully if input < self.vector_inputs() => bits(outcome, self.n),
                Variant::Fully => {
                    let pairing = if input == self.even_input() { Pairing::Even } else { Pairing::Odd };
                    let count = self.pairs_in(pairing);
                    if count == 0 {
                        return "-".into();
                    }
                    (0..count).rev().map(|m| bits(outcome >> (2 * m) & 3, 2)).collect::<Vec<_>>().join(".")
                }
            }
        }
    }

    pub fn parse_outcome(&self, party: usize, input: usize, label: &str) -> Result<usize> {
        (0..self.outcome_count(party, input))
            .find(|&o| self.outcome_label(party, input, o) == label)
            .ok_or_else(|| Error::Alphabet(format!("outcome '{label}' for party {party}")))
    }

    pub fn num_rows(&self) -> usize {
        (0..self.num_parties()).map(|p| self.input_count(p)).product()
    }

    /// Total number of probabilities in a complete table.
    pub fn table_entries(&self) -> usize {
        (0..self.num_parties())
            .map(|p| (0..self.input_count(p)).map(|x| self.outcome_count(p, x)).sum::<usize>())
            .product()
    }

    pub fn all_inputs(&self) -> Vec<Vec<usize>> {
        let counts: Vec<usize> = (0..self.num_parties()).map(|p| self.input_count(p)).collect();
        let mut out = vec![vec![]];
        for &c in &counts {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..c).map(move |x| {
                        let mut v = prefix.clone();
                        v.push(x);
                        v
                    })
                })
                .collect();
        }
        out
    }

    pub fn outcome_radices(&self, inputs: &[usize]) -> Vec<usize> {
        inputs.iter().enumerate().map(|(p, &x)| self.outcome_count(p, x)).collect()
    }

    pub fn check_inputs(&self, inputs: &[usize]) -> Result<()> {
        if inputs.len() != self.num_parties() {
            return Err(Error::Alphabet(format!("{} inputs for {} parties", inputs.len(), self.num_parties())));
        }
        for (p, &x) in inputs.iter().enumerate() {
            if x >= self.input_count(p) {
                return Err(Error::Alphabet(format!("input {x} for party {p}")));
            }
        }
        Ok(())
    }

    /// The rows read by the certifier, with every party not involved in a condition at input 0.
    pub fn certification_inputs(&self) -> Vec<Vec<usize>> {
        let n = self.n;
        let base = vec![0; self.num_parties()];
        let mut rows = Vec::new();
        let aux_settings: Vec<usize> = match self.variant {
            Variant::Network => (0..3).collect(),
            Variant::Fully => (0..self.vector_inputs()).collect(),
        };
        for j in 0..n {
            for x in 0..6 {
                for &y in &aux_settings {
                    let mut r = base.clone();
                    r[j] = x;
                    r[self.aux_party(j)] = y;
                    rows.push(r);
                }
            }
        }
        for k in 0..self.vector_inputs() {
            let mut r = vec![BSM_INPUT; n];
            match self.variant {
                Variant::Network => r.extend(self.y_vector(k)),
                Variant::Fully => r.push(k),
            }
            rows.push(r);
        }
        if self.variant == Variant::Fully {
            for pairing in [Pairing::Even, Pairing::Odd] {
                for (p, q) in pairing.pairs(n) {
                    for x in 0..4 {
                        for xq in 0..4 {
                            let mut r = base.clone();
                            r[p] = x;
                            r[q] = xq;
                            r[n] = self.pairing_input(pairing);
                            rows.push(r);
                        }
                    }
                }
            }
        }
        rows.sort();
        rows.dedup();
        rows
    }
}

pub(crate) fn decode(radices: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for p in (0..radices.len()).rev() {
        out[p] = idx % radices[p];
        idx /= radices[p];
    }
    out
}

pub(crate) fn encode(radices: &[usize], digits: &[usize]) -> usize {
    digits.iter().zip(radices).fold(0, |acc, (&d, &r)| acc * r + d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub inputs: Vec<usize>,
    /// Probabilities of every outcome tuple, in canonical order.
    pub probs: Vec<f64>,
}

/// A table of conditional outcome probabilities, complete or restricted to selected rows.
#[derive(Clone, Debug)]
pub struct Behavior {
    scenario: Scenario,
    rows: Vec<Row>,
}

impl Behavior {
    /// Validates alphabets, normalization (1e-10) and no-signaling (1e-9).
    pub fn new(scenario: Scenario, mut rows: Vec<Row>) -> Result<Self> {
        rows.sort_by(|a, b| a.inputs.cmp(&b.inputs));
        for w in rows.windows(2) {
            if w[0].inputs == w[1].inputs {
                return Err(Error::InvalidBehavior(format!("duplicate row {:?}", w[0].inputs)));
            }
        }
        for row in &mut rows {
            scenario.check_inputs(&row.inputs)?;
            let expected: usize = scenario.outcome_radices(&row.inputs).iter().product();
            if row.probs.len() != expected {
                return Err(Error::InvalidBehavior(format!(
                    "row {:?} has {} entries, expected {expected}",
                    row.inputs,
                    row.probs.len()
                )));
            }
            for p in &mut row.probs {
                if *p < -1e-12 || !p.is_finite() {
                    return Err(Error::InvalidBehavior(format!("probability {p} in row {:?}", row.inputs)));
                }
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
            let total: f64 = row.probs.iter().sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(Error::InvalidBehavior(format!("row {:?} sums to {total}", row.inputs)));
            }
        }
        let b = Self { scenario, rows };
        b.check_no_signaling(1e-9)?;
        Ok(b)
    }

    fn check_no_signaling(&self, tol: f64) -> Result<()> {
        for p in 0..self.scenario.num_parties() {
            let mut seen: HashMap<Vec<usize>, Vec<f64>> = HashMap::new();
            for row in &self.rows {
                let radices = self.scenario.outcome_radices(&row.inputs);
                let low: usize = radices[p + 1..].iter().product();
                let count = radices[p];
                let mut marginal = vec![0.0; row.probs.len() / count];
                for (idx, &v) in row.probs.iter().enumerate() {
                    let hi = idx / (count * low);
                    let lo = idx % low;
                    marginal[hi * low + lo] += v;
                }
                let mut key = row.inputs.clone();
                key[p] = usize::MAX;
                match seen.get(&key) {
                    Some(reference) => {
                        let dev = reference.iter().zip(&marginal).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
                        if dev > tol {
                            return Err(Error::InvalidBehavior(format!(
                                "party {p} signals to the others at inputs {:?} (deviation {dev:.3e})",
                                row.inputs
                            )));
                        }
                    }
                    None => {
                        seen.insert(key, marginal);
                    }
                }
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn is_complete(&self) -> bool {
        self.rows.len() == self.scenario.num_rows()
    }

    pub fn row(&self, inputs: &[usize]) -> Option<&Row> {
        self.rows.binary_search_by(|r| r.inputs.as_slice().cmp(inputs)).ok().map(|i| &self.rows[i])
    }

    pub fn require(&self, inputs: &[usize]) -> Result<&Row> {
        self.row(inputs).ok_or_else(|| {
            let labels: Vec<String> =
                inputs.iter().enumerate().map(|(p, &x)| self.scenario.input_label(p, x)).collect();
            Error::MissingInputs(format!("no row for inputs ({})", labels.join(",")))
        })
    }

    pub fn prob(&self, inputs: &[usize], outcomes: &[usize]) -> Result<f64> {
        let row = self.require(inputs)?;
        let radices = self.scenario.outcome_radices(inputs);
        if outcomes.len() != radices.len() || outcomes.iter().zip(&radices).any(|(&o, &r)| o >= r) {
            return Err(Error::Alphabet(format!("outcomes {outcomes:?}")));
        }
        Ok(row.probs[encode(&radices, outcomes)])
    }

    /// `sum_outcomes sign(outcomes) P(outcomes | inputs)`.
    pub fn expectation(&self, inputs: &[usize], sign: impl Fn(&[usize]) -> f64) -> Result<f64> {
        let row = self.require(inputs)?;
        let radices = self.scenario.outcome_radices(inputs);
        Ok(row
            .probs
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(|(idx, &p)| sign(&decode(&radices, idx)) * p)
            .sum())
    }

    /// Largest entrywise difference over the rows both tables contain; errors if the row sets differ.
    pub fn max_deviation(&self, other: &Behavior) -> Result<f64> {
        if self.scenario != other.scenario {
            return invalid("behaviors belong to different scenarios");
        }
        if self.rows.len() != other.rows.len() {
            return invalid("behaviors cover different rows");
        }
        let mut worst: f64 = 0.0;
        for (a, b) in self.rows.iter().zip(&other.rows) {
            if a.inputs != b.inputs {
                return invalid("behaviors cover different rows");
            }
            for (x, y) in a.probs.iter().zip(&b.probs) {
                worst = worst.max((x - y).abs());
            }
        }
        Ok(worst)
    }
}

/// A mixture of pure states on a common layout.
#[derive(Clone, Debug)]
pub struct Ensemble {
    components: Vec<(f64, PureState)>,
}

impl Ensemble {
    pub fn pure(psi: PureState) -> Self {
        Self { components: vec![(1.0, psi)] }
    }

    pub fn new(components: Vec<(f64, PureState)>) -> Result<Self> {
        let Some((_, first)) = components.first() else {
            return invalid("an ensemble needs at least one component");
        };
        let layout = first.layout().clone();
        let mut total = 0.0;
        for (w, s) in &components {
            if *w < 0.0 || s.layout() != &layout || !s.is_normalized() {
                return invalid("ensemble components need nonnegative weights, normalized states and one layout");
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self { components: components.into_iter().filter(|(w, _)| *w > 0.0).collect() })
    }

    pub fn components(&self) -> &[(f64, PureState)] {
        &self.components
    }

    pub fn layout(&self) -> &SiteLayout {
        self.components[0].1.layout()
    }

    pub fn as_pure(&self) -> Option<&PureState> {
        match self.components.as_slice() {
            [(_, s)] => Some(s),
            _ => None,
        }
    }

    pub fn density(&self) -> DensityOp {
        let n = self.layout().total_dim();
        let mut m = CMatrix::zeros(n, n);
        for (w, s) in &self.components {
            m += s.density().matrix().scale(*w);
        }
        DensityOp::from_hermitian(self.layout().clone(), m).expect("mixture of pure states")
    }

    pub fn tensor(&self, other: &Ensemble) -> Ensemble {
        let mut components = Vec::with_capacity(self.components.len() * other.components.len());
        for (w, s) in &self.components {
            for (v, t) in &other.components {
                components.push((w * v, s.tensor(t)));
            }
        }
        Ensemble { components }
    }

    pub fn map_states<F>(&self, f: F) -> Result<Ensemble>
    where
        F: Fn(&PureState) -> Result<PureState>,
    {
        let components = self.components.iter().map(|(w, s)| Ok((*w, f(s)?))).collect::<Result<_>>()?;
        Ok(Ensemble { components })
    }

    pub fn reduced(&self, keep: &[usize]) -> Result<DensityOp> {
        let mut acc: Option<CMatrix> = None;
        for (w, s) in &self.components {
            let r = s.reduced(keep)?.matrix().scale(*w);
            acc = Some(match acc {
                Some(a) => a + r,
                None => r,
            });
        }
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        DensityOp::from_hermitian(self.layout().select(&keep_sorted)?, acc.expect("nonempty"))
    }
}

/// A preparation source: its state lives on the listed global sites.
#[derive(Clone, Debug)]
pub struct Source {
    pub name: String,
    pub sites: Vec<usize>,
    pub state: Ensemble,
}

/// Global state, the sites owned by each party and each party's measurements.
#[derive(Clone, Debug)]
pub struct PhysicalModel {
    scenario: Scenario,
    layout: SiteLayout,
    state: Ensemble,
    party_sites: Vec<Vec<usize>>,
    measurements: Vec<Vec<ProjectorSet>>,
    sources: Option<Vec<Source>>,
}

impl PhysicalModel {
    /// A model with an arbitrary global state; only allowed in the network-assisted variant.
    pub fn new(
        scenario: Scenario,
        state: Ensemble,
        party_sites: Vec<Vec<usize>>,
        measurements: Vec<Vec<ProjectorSet>>,
    ) -> Result<Self> {
        if scenario.variant == Variant::Fully {
            return Err(Error::SourceIndependence(
                "fully network-assisted models must be assembled from independent sources".into(),
            ));
        }
        let layout = state.layout().clone();
        let model = Self { scenario, layout, state, party_sites, measurements, sources: None };
        model.validate()?;
        Ok(model)
    }

    /// A model whose global state is the product of independent sources.
    pub fn from_sources(
        scenario: Scenario,
        layout: SiteLayout,
        sources: Vec<Source>,
        party_sites: Vec<Vec<usize>>,
        measurements: Vec<Vec<ProjectorSet>>,
    ) -> Result<Self> {
        let state = assemble_sources(&layout, &sources)?;
        let model = Self { scenario, layout, state, party_sites, measurements, sources: Some(sources) };
        model.validate()?;
        if scenario.variant == Variant::Fully {
            model.check_source_independence()?;
        }
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let s = &self.scenario;
        if self.party_sites.len() != s.num_parties() || self.measurements.len() != s.num_parties() {
            return invalid(format!("expected {} parties", s.num_parties()));
        }
        let mut owned = vec![false; self.layout.num_sites()];
        for (p, sites) in self.party_sites.iter().enumerate() {
            self.layout.check_sites(sites)?;
            for &site in sites {
                if owned[site] {
                    return invalid(format!("site {site} is owned by two parties"));
                }
                owned[site] = true;
            }
            let local = self.layout.select(sites)?;
            if self.measurements[p].len() != s.input_count(p) {
                return invalid(format!("party {p} needs {} measurements", s.input_count(p)));
            }
            for (x, m) in self.measurements[p].iter().enumerate() {
                if m.layout() != &local {
                    return Err(Error::DimensionMismatch(format!(
                        "measurement {x} of party {p} acts on the wrong space"
                    )));
                }
                if m.len() != s.outcome_count(p, x) {
                    return invalid(format!("measurement {x} of party {p} has {} outcomes", m.len()));
                }
                for (o, label) in m.labels().iter().enumerate() {
                    if *label != s.outcome_label(p, x, o) {
                        return invalid(format!("measurement {x} of party {p} has label '{label}' at outcome {o}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Any source reaching the auxiliary party may touch at most one main party.
    fn check_source_independence(&self) -> Result<()> {
        let sources = self.sources.as_ref().expect("checked by caller");
        let owner = |site: usize| self.party_sites.iter().position(|s| s.contains(&site));
        for src in sources {
            let owners: Vec<usize> = src.sites.iter().filter_map(|&s| owner(s)).collect();
            let touches_aux = owners.iter().any(|&p| !self.scenario.is_main(p));
            let mut mains: Vec<usize> = owners.into_iter().filter(|&p| self.scenario.is_main(p)).collect();
            mains.sort_unstable();
            mains.dedup();
            if touches_aux && mains.len() > 1 {
                return Err(Error::SourceIndependence(format!(
                    "source '{}' correlates the auxiliary party with {} main parties",
                    src.name,
                    mains.len()
                )));
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Scenario {
        self.scenario
    }

    pub fn layout(&self) -> &SiteLayout {
        &self.layout
    }

    pub fn state(&self) -> &Ensemble {
        &self.state
    }

    pub fn party_sites(&self, party: usize) -> &[usize] {
        &self.party_sites[party]
    }

    pub fn measurement(&self, party: usize, input: usize) -> &ProjectorSet {
        &self.measurements[party][input]
    }

    pub fn measurements(&self) -> &[Vec<ProjectorSet>] {
        &self.measurements
    }

    pub fn sources(&self) -> Option<&[Source]> {
        self.sources.as_deref()
    }

    pub fn reduced_party_state(&self, party: usize) -> Result<DensityOp> {
        self.state.reduced(&self.party_sites[party])
    }

    /// Copy of this model with the given measurements (validated again).
    pub fn with_measurements(&self, measurements: Vec<Vec<ProjectorSet>>) -> Result<Self> {
        let model = Self { measurements, ..self.clone() };
        model.validate()?;
        Ok(model)
    }
}

fn assemble_sources(layout: &SiteLayout, sources: &[Source]) -> Result<Ensemble> {
    let mut covered = vec![false; layout.num_sites()];
    for src in sources {
        layout.check_sites(&src.sites)?;
        if &layout.select(&src.sites)? != src.state.layout() {
            return Err(Error::DimensionMismatch(format!("source '{}' does not match its sites", src.name)));
        }
        for &s in &src.sites {
            if covered[s] {
                return invalid(format!("site {s} is prepared by two sources"));
            }
            covered[s] = true;
        }
    }
    if covered.iter().any(|c| !c) {
        return invalid("every site must be prepared by a source");
    }
    let mut order = Vec::new();
    let mut joint: Option<Ensemble> = None;
    for src in sources {
        order.extend_from_slice(&src.sites);
        joint = Some(match joint {
            Some(j) => j.tensor(&src.state),
            None => src.state.clone(),
        });
    }
    let joint = joint.ok_or_else(|| Error::InvalidArgument("no sources".into()))?;
    // joint site k holds global site order[k]; invert to bring sites into layout order
    let mut inverse = vec![0; order.len()];
    for (k, &g) in order.iter().enumerate() {
        inverse[g] = k;
    }
    let components =
        joint.components.iter().map(|(w, s)| Ok((*w, s.permute(&inverse)?))).collect::<Result<Vec<_>>>()?;
    Ensemble::new(components)
}

/// Probability of `outcomes` given `inputs`, by direct projection.
pub fn born_probability(model: &PhysicalModel, inputs: &[usize], outcomes: &[usize]) -> Result<f64> {
    let s = model.scenario();
    s.check_inputs(inputs)?;
    let radices = s.outcome_radices(inputs);
    if outcomes.len() != radices.len() || outcomes.iter().zip(&radices).any(|(&o, &r)| o >= r) {
        return Err(Error::Alphabet(format!("outcomes {outcomes:?}")));
    }
    let mut total = 0.0;
    for (w, psi) in model.state.components() {
        let mut v = psi.clone();
        for p in 0..s.num_parties() {
            v = v.apply(model.measurement(p, inputs[p]).projector(outcomes[p]), model.party_sites(p))?;
        }
        total += w * v.norm().powi(2);
    }
    Ok(total)
}

struct Plan {
    /// Per party and input: adjoint of the measurement basis.
    rotations: Vec<Vec<CMatrix>>,
    /// Per party and input: outcome of every global basis index.
    outcome_at: Vec<Vec<Vec<u16>>>,
}

impl Plan {
    fn new(model: &PhysicalModel) -> Result<Self> {
        let s = model.scenario();
        let layout = model.layout();
        let dim = layout.total_dim();
        let mut rotations = Vec::new();
        let mut outcome_at = Vec::new();
        for p in 0..s.num_parties() {
            let sites = model.party_sites(p);
            let local = layout.offsets(sites);
            let bases = layout.offsets(&layout.complement(sites));
            let mut local_of = vec![0usize; dim];
            for &b in &bases {
                for (k, &o) in local.iter().enumerate() {
                    local_of[b + o] = k;
                }
            }
            let mut rot = Vec::new();
            let mut outs = Vec::new();
            for x in 0..s.input_count(p) {
                let basis = model.measurement(p, x).basis()?;
                rot.push(basis.unitary.adjoint());
                outs.push(local_of.iter().map(|&k| basis.outcome_of[k] as u16).collect());
            }
            rotations.push(rot);
            outcome_at.push(outs);
        }
        Ok(Self { rotations, outcome_at })
    }

    fn rotate(&self, model: &PhysicalModel, vecs: &[Vec<C64>], party: usize, input: usize) -> Vec<Vec<C64>> {
        vecs.iter()
            .map(|v| {
                let mut w = v.clone();
                apply_local(&mut w, model.layout(), model.party_sites(party), &self.rotations[party][input]);
                w
            })
            .collect()
    }

    fn histogram(&self, model: &PhysicalModel, inputs: &[usize], vecs: &[Vec<C64>]) -> Row {
        let s = model.scenario();
        let radices = s.outcome_radices(inputs);
        let mut probs = vec![0.0; radices.iter().product()];
        let tables: Vec<&[u16]> = inputs.iter().enumerate().map(|(p, &x)| self.outcome_at[p][x].as_slice()).collect();
        for ((w, _), v) in model.state().components().iter().zip(vecs) {
            for (g, a) in v.iter().enumerate() {
                let pr = a.norm_sqr();
                if pr == 0.0 {
                    continue;
                }
                let mut idx = 0usize;
                for (t, &r) in tables.iter().zip(&radices) {
                    idx = idx * r + t[g] as usize;
                }
                probs[idx] += w * pr;
            }
        }
        Row { inputs: inputs.to_vec(), probs }
    }

    fn subtree(&self, model: &PhysicalModel, prefix: &mut Vec<usize>, vecs: &[Vec<C64>], out: &mut Vec<Row>) {
        let s = model.scenario();
        let depth = prefix.len();
        if depth == s.num_parties() {
            out.push(self.histogram(model, prefix, vecs));
            return;
        }
        for x in 0..s.input_count(depth) {
            let next = self.rotate(model, vecs, depth, x);
            prefix.push(x);
            self.subtree(model, prefix, &next, out);
            prefix.pop();
        }
    }
}

fn initial_vectors(model: &PhysicalModel) -> Vec<Vec<C64>> {
    model.state().components().iter().map(|(_, s)| s.amplitudes().to_vec()).collect()
}

/// The complete correlation table of `model`.
pub fn behavior_of(model: &PhysicalModel) -> Result<Behavior> {
    let s = model.scenario();
    if s.table_entries() > MAX_TABLE_ENTRIES {
        return invalid(format!(
            "a complete table would hold {} probabilities; request selected rows instead",
            s.table_entries()
        ));
    }
    let plan = Plan::new(model)?;
    let start = initial_vectors(model);
    let split = s.num_parties().min(2);
    let prefixes: Vec<Vec<usize>> =
        s.all_inputs().into_iter().map(|v| v[..split].to_vec()).fold(Vec::new(), |mut acc, p| {
            if acc.last() != Some(&p) {
                acc.push(p);
            }
            acc
        });
    let chunks = ordered_map(prefixes, |prefix| {
        let mut vecs = start.clone();
        for (p, &x) in prefix.iter().enumerate() {
            vecs = plan.rotate(model, &vecs, p, x);
        }
        let mut out = Vec::new();
        let mut prefix = prefix;
        plan.subtree(model, &mut prefix, &vecs, &mut out);
        out
    });
    Behavior::new(s, chunks.into_iter().flatten().collect())
}

/// The rows of `model`'s table for the listed input tuples.
pub fn behavior_on(model: &PhysicalModel, inputs: &[Vec<usize>]) -> Result<Behavior> {
    let s = model.scenario();
    for i in inputs {
        s.check_inputs(i)?;
    }
    let mut inputs = inputs.to_vec();
    inputs.sort();
    inputs.dedup();
    let plan = Plan::new(model)?;
    let start = initial_vectors(model);
    let rows = ordered_map(inputs, |inp| {
        let mut vecs = start.clone();
        for (p, &x) in inp.iter().enumerate() {
            vecs = plan.rotate(model, &vecs, p, x);
        }
        plan.histogram(model, &inp, &vecs)
    });
    Behavior::new(s, rows)
}

/// The rows needed by the certifier.
pub fn certification_behavior(model: &PhysicalModel) -> Result<Behavior> {
    behavior_on(model, &model.scenario().certification_inputs())
}

fn main_measurements() -> Result<Vec<ProjectorSet>> {
    let q2 = SiteLayout::qubits(2);
    let id = LinOp::identity(SiteLayout::qubits(1));
    let mut out = Vec::with_capacity(MAIN_INPUTS);
    for x in 0..6 {
        out.push(main_observable(x)?.projectors().map(q2.clone(), |p| Ok(id.tensor(p)))?);
    }
    out.push(bell_basis());
    Ok(out)
}

fn fully_aux_measurements(n: usize) -> Result<Vec<ProjectorSet>> {
    let s = Scenario::fully(n);
    let mut out = Vec::new();
    for input in 0..3usize.pow(n as u32) {
        let y = s.y_vector(input);
        let mut m = aux_measurement(y[0])?;
        for &yj in &y[1..] {
            m = m.tensor(&aux_measurement(yj)?, "");
        }
        out.push(m);
    }
    for pairing in [Pairing::Even, Pairing::Odd] {
        out.push(if n >= 2 { parallel_bsm(pairing, n)? } else { ProjectorSet::trivial(SiteLayout::qubits(n)) });
    }
    Ok(out)
}

/// Sites of the reference experiment: targets `0..N`, main halves `N..2N`, auxiliary halves `2N..3N`.
pub fn reference_party_sites(scenario: Scenario) -> Vec<Vec<usize>> {
    let n = scenario.n;
    let mut sites: Vec<Vec<usize>> = (0..n).map(|j| vec![j, n + j]).collect();
    match scenario.variant {
        Variant::Network => sites.extend((0..n).map(|j| vec![2 * n + j])),
        Variant::Fully => sites.push((2 * n..3 * n).collect()),
    }
    sites
}

pub fn reference_measurements(scenario: Scenario) -> Result<Vec<Vec<ProjectorSet>>> {
    let n = scenario.n;
    let main = main_measurements()?;
    let mut out: Vec<Vec<ProjectorSet>> = (0..n).map(|_| main.clone()).collect();
    match scenario.variant {
        Variant::Network => {
            let aux = (0..3).map(aux_measurement).collect::<Result<Vec<_>>>()?;
            out.extend((0..n).map(|_| aux.clone()));
        }
        Variant::Fully => out.push(fully_aux_measurements(n)?),
    }
    Ok(out)
}

pub fn reference_sources(psi: &PureState, n: usize) -> Vec<Source> {
    let mut sources =
        vec![Source { name: "target".into(), sites: (0..n).collect(), state: Ensemble::pure(psi.clone()) }];
    for j in 0..n {
        sources.push(Source {
            name: format!("pair{}", j + 1),
            sites: vec![n + j, 2 * n + j],
            state: Ensemble::pure(bell_phi_plus()),
        });
    }
    sources
}

/// The ideal experiment for a target of `N` qubits.
pub fn build_reference_model(psi: &PureState, scenario: Scenario) -> Result<PhysicalModel> {
    let n = scenario.n;
    if psi.layout() != &SiteLayout::qubits(n) {
        return Err(Error::DimensionMismatch(format!(
            "the target must have {n} qubit sites; encode qudits first (got dims {:?})",
            psi.layout().dims()
        )));
    }
    if !psi.is_normalized() {
        return Err(Error::NotNormalized(psi.norm()));
    }
    PhysicalModel::from_sources(
        scenario,
        SiteLayout::qubits(3 * n),
        reference_sources(psi, n),
        reference_party_sites(scenario),
        reference_measurements(scenario)?,
    )
}

pub fn reference_behavior(psi: &PureState, scenario: Scenario) -> Result<Behavior> {
    behavior_of(&build_reference_model(psi, scenario)?)
}
