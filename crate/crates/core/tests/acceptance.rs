//! End-to-end acceptance checks. Run with `--nocapture` to see one PASS/FAIL line per criterion.

use std::f64::consts::SQRT_2;
use std::process::Command;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netcert_core::adversary::{behavior_equivalence, make_model, AdversaryKind};
use netcert_core::certify::{certify, check_alignment, Tolerance, MAX_3CHSH};
use netcert_core::experiment::{
    behavior_of, build_reference_model, certification_behavior, Behavior, Scenario, Variant, BSM_INPUT,
};
use netcert_core::extract::{extraction_channel, ExtractionOptions};
use netcert_core::io::state_to_file;
use netcert_core::states::{ghz, phase_bell, random_state, w_state};
use netcert_core::tensor::{hermitian_eigensystem, DensityOp, LinOp, PureState, SiteLayout};
use netcert_core::tomography::{flagged_mixture, gme_check, pt_bounds_check, pt_spectrum_pure};
use netcert_core::{Error, C64};

type M = DMatrix<C64>;

struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Self { failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        if !ok {
            self.failures.push(what());
        }
    }

    fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    fn report(self, id: u32, title: &str) {
        let mark = if self.failures.is_empty() { "PASS" } else { "FAIL" };
        println!("[{mark}] criterion {id}: {title} ({})", self.notes.join("; "));
        for f in &self.failures {
            println!("       {f}");
        }
        assert!(self.failures.is_empty(), "criterion {id} failed: {:?}", self.failures);
    }
}

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn pauli_matrix(k: usize) -> M {
    let (o, l, i) = (c(0.0, 0.0), c(1.0, 0.0), c(0.0, 1.0));
    match k {
        0 => M::from_row_slice(2, 2, &[l, o, o, -l]),
        1 => M::from_row_slice(2, 2, &[o, l, l, o]),
        _ => M::from_row_slice(2, 2, &[o, -i, i, o]),
    }
}

fn correction(a: usize) -> M {
    match a {
        0 => M::identity(2, 2),
        1 => pauli_matrix(0),
        2 => pauli_matrix(1),
        _ => pauli_matrix(0) * pauli_matrix(1),
    }
}

fn kron_all(ops: &[M]) -> M {
    ops.iter().skip(1).fold(ops[0].clone(), |acc, m| acc.kronecker(m))
}

fn ket(psi: &PureState) -> M {
    M::from_column_slice(psi.amplitudes().len(), 1, psi.amplitudes())
}

/// Mixed-radix digits, first digit most significant.
fn digits(radices: &[usize], mut idx: usize) -> Vec<usize> {
    let mut out = vec![0; radices.len()];
    for (d, &r) in out.iter_mut().zip(radices).rev() {
        *d = idx % r;
        idx /= r;
    }
    out
}

fn row_expectation(b: &Behavior, inputs: &[usize], f: impl Fn(&[usize]) -> f64) -> f64 {
    let s = b.scenario();
    let row = b.row(inputs).expect("row present");
    let radices: Vec<usize> = inputs.iter().enumerate().map(|(p, &x)| s.outcome_count(p, x)).collect();
    row.probs.iter().enumerate().map(|(i, p)| p * f(&digits(&radices, i))).sum()
}

fn parity(bits: usize) -> f64 {
    if bits.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Sum over the three blocks of `E(x1,y1) + E(x1,y2) + E(x2,y1) - E(x2,y2)`, computed straight from the rows.
fn oracle_3chsh(b: &Behavior, j: usize) -> f64 {
    let s = b.scenario();
    let n = s.n;
    let corr = |x: usize, y: usize| {
        let mut inputs = vec![0; s.num_parties()];
        inputs[j] = x;
        let aux = match s.variant {
            Variant::Network => n + j,
            Variant::Fully => n,
        };
        inputs[aux] = match s.variant {
            Variant::Network => y,
            Variant::Fully => y * 3usize.pow((n - 1 - j) as u32),
        };
        row_expectation(b, &inputs, |o| {
            let bit = match s.variant {
                Variant::Network => o[aux],
                Variant::Fully => (o[aux] >> (n - 1 - j)) & 1,
            };
            parity(o[j] + bit)
        })
    };
    [(0, 1, 0, 1), (2, 3, 0, 2), (4, 5, 1, 2)]
        .iter()
        .map(|&(x1, x2, y1, y2)| corr(x1, y1) + corr(x1, y2) + corr(x2, y1) - corr(x2, y2))
        .sum()
}

/// `4^-N <psi| ⊗_j U_{a_j}^† sigma_{k_j} U_{a_j} |psi>` from explicit Kronecker products.
fn oracle_rhs(psi: &PureState, a: &[usize], k: &[usize]) -> f64 {
    let ops: Vec<M> =
        a.iter().zip(k).map(|(&aj, &kj)| correction(aj).adjoint() * pauli_matrix(kj) * correction(aj)).collect();
    let v = ket(psi);
    (v.adjoint() * kron_all(&ops) * &v)[(0, 0)].re / 4f64.powi(a.len() as i32)
}

/// Largest gap between the teleportation rows and the oracle right-hand side.
fn oracle_tomography_residual(b: &Behavior, psi: &PureState) -> f64 {
    let s = b.scenario();
    let n = s.n;
    let mut worst = 0.0f64;
    for kin in 0..3usize.pow(n as u32) {
        let k = digits(&vec![3; n], kin);
        let mut inputs = vec![BSM_INPUT; n];
        match s.variant {
            Variant::Network => inputs.extend(&k),
            Variant::Fully => inputs.push(kin),
        }
        for a_idx in 0..4usize.pow(n as u32) {
            let a = digits(&vec![4; n], a_idx);
            let lhs = row_expectation(b, &inputs, |o| {
                if digits(&vec![4; n], a_idx) != o[..n] {
                    return 0.0;
                }
                let bits: usize = match s.variant {
                    Variant::Network => o[n..].iter().sum(),
                    Variant::Fully => o[n].count_ones() as usize,
                };
                parity(bits)
            });
            worst = worst.max((lhs - oracle_rhs(psi, &a, &k)).abs());
        }
    }
    worst
}

fn random_targets(n: usize, count: usize, seed: u64) -> Vec<PureState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_state(SiteLayout::qubits(n), &mut rng)).collect()
}

#[test]
fn three_chsh_reaches_the_maximum() {
    let mut out = Outcome::new();
    let mut worst = 0.0f64;
    for n in 1..=3 {
        let start = Instant::now();
        for psi in random_targets(n, 5, 100 + n as u64) {
            let b = behavior_of(&build_reference_model(&psi, Scenario::network(n)).unwrap()).unwrap();
            let report = certify(&b, &psi, Tolerance::default()).unwrap();
            for j in 0..n {
                let total = oracle_3chsh(&b, j);
                let module = report.chsh.pairs[j].total;
                worst = worst.max((total - 6.0 * SQRT_2).abs()).max((module - MAX_3CHSH).abs());
                out.check((total - 6.0 * SQRT_2).abs() <= 1e-9, || format!("N={n} pair {j}: {total}"));
                out.check((module - total).abs() <= 1e-12, || format!("N={n} pair {j}: certifier {module} vs {total}"));
            }
        }
        let secs = start.elapsed().as_secs_f64();
        out.check(secs < 60.0, || format!("N={n} took {secs:.1}s"));
        out.note(format!("N={n} {secs:.2}s"));
    }
    for n in 2..=3 {
        for psi in random_targets(n, 2, 200 + n as u64) {
            let b = certification_behavior(&build_reference_model(&psi, Scenario::fully(n)).unwrap()).unwrap();
            for j in 0..n {
                let total = oracle_3chsh(&b, j);
                worst = worst.max((total - 6.0 * SQRT_2).abs());
                out.check((total - 6.0 * SQRT_2).abs() <= 1e-9, || format!("fully N={n} pair {j}: {total}"));
            }
        }
    }
    out.note(format!("max |total - 6√2| = {worst:.2e}"));
    out.report(1, "3-CHSH equals 6√2 on every pair");
}

#[test]
fn teleportation_rows_match_the_target() {
    let mut out = Outcome::new();
    let mut worst = 0.0f64;
    for n in 1..=3 {
        for (i, psi) in random_targets(n, 3, 300 + n as u64).into_iter().enumerate() {
            for scenario in [Scenario::network(n), Scenario::fully(n)] {
                let b = certification_behavior(&build_reference_model(&psi, scenario).unwrap()).unwrap();
                let oracle = oracle_tomography_residual(&b, &psi);
                let module = certify(&b, &psi, Tolerance::default()).unwrap().tomography;
                worst = worst.max(oracle).max(module.max_residual);
                out.check(oracle < 1e-9, || {
                    format!("{} N={n} #{i}: oracle residual {oracle:e}", scenario.variant.name())
                });
                out.check(module.pass, || {
                    format!("{} N={n} #{i}: certifier residual {:e}", scenario.variant.name(), module.max_residual)
                });
            }
        }
    }
    out.note(format!("max residual {worst:.2e}"));
    out.report(2, "tomography condition holds for N ≤ 3");
}

#[test]
fn alignment_table_is_reproduced() {
    let mut out = Outcome::new();
    let mut worst = 0.0f64;
    let mut entries = 0;
    for n in 2..=4 {
        let psi = random_targets(n, 1, 400 + n as u64).remove(0);
        let s = Scenario::fully(n);
        let b = certification_behavior(&build_reference_model(&psi, s).unwrap()).unwrap();
        for (pairing_input, pairs) in [(s.even_input(), even_pairs(n)), (s.odd_input(), odd_pairs(n))] {
            let count = pairs.len();
            for (m, &(p, q)) in pairs.iter().enumerate() {
                for beta in 0..4usize {
                    let (b1, b2) = (beta >> 1, beta & 1);
                    let digit = |o: &[usize]| (o[n] >> (2 * (count - 1 - m))) & 3;
                    let corr = |x: usize, xq: usize| {
                        let mut inputs = vec![0; n + 1];
                        inputs[p] = x;
                        inputs[q] = xq;
                        inputs[n] = pairing_input;
                        row_expectation(&b, &inputs, |o| if digit(o) == beta { parity(o[p] + o[q]) } else { 0.0 })
                    };
                    let mut inputs = vec![0; n + 1];
                    inputs[n] = pairing_input;
                    let ident = row_expectation(&b, &inputs, |o| if digit(o) == beta { 1.0 } else { 0.0 });
                    // Z = (A0 + A1)/√2, X = (A0 - A1)/√2, Y = (A3 - A2)/√2
                    let zz = 0.5 * (corr(0, 0) + corr(0, 1) + corr(1, 0) + corr(1, 1));
                    let xx = 0.5 * (corr(0, 0) - corr(0, 1) - corr(1, 0) + corr(1, 1));
                    let yy = 0.5 * (corr(3, 3) - corr(3, 2) - corr(2, 3) + corr(2, 2));
                    let expected = [0.25, 0.25 * parity(b1), 0.25 * parity(b2), -0.25 * parity(b1 + b2)];
                    for (v, e) in [ident, zz, xx, yy].iter().zip(expected) {
                        entries += 1;
                        worst = worst.max((v - e).abs());
                        out.check((v - e).abs() <= 1e-9, || format!("N={n} ({p},{q}) beta={beta}: {v} vs {e}"));
                    }
                }
            }
        }
        let module = check_alignment(&b, 1e-9).unwrap();
        out.check(module.pass, || format!("N={n}: certifier alignment residual {:e}", module.max_residual));
    }
    out.note(format!("{entries} entries, max deviation {worst:.2e}"));
    out.report(3, "alignment correlations match the ±1/4 table for N ∈ {2,3,4}");
}

fn even_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n / 2).map(|i| (2 * i, 2 * i + 1)).collect()
}

fn odd_pairs(n: usize) -> Vec<(usize, usize)> {
    let mut v = vec![(n - 1, 0)];
    v.extend((0..(n / 2).saturating_sub(1)).map(|i| (2 * i + 1, 2 * i + 2)));
    v
}

fn targets() -> Vec<(&'static str, PureState)> {
    vec![("GHZ3", ghz(3).unwrap()), ("W3", w_state(3).unwrap()), ("phase-Bell", phase_bell())]
}

#[test]
fn network_extraction_recovers_alpha() {
    let mut out = Outcome::new();
    let mut runs = 0;
    let mut worst_alpha = 0.0f64;
    let mut worst_fid = 0.0f64;
    let mut kinds: Vec<(AdversaryKind, f64)> =
        vec![(AdversaryKind::ExactReference, 1.0), (AdversaryKind::GlobalConjugate, 0.0)];
    kinds.extend([0.0, 0.3, 0.7, 1.0].map(|a| (AdversaryKind::FlaggedSuperposition { alpha: a }, a)));
    kinds.extend([1, 2, 3].map(|seed| (AdversaryKind::IsometryEmbedded { seed }, 1.0)));
    for (name, psi) in targets() {
        let scenario = Scenario::network(psi.layout().num_sites());
        for &(kind, alpha) in &kinds {
            let model = make_model(kind, &psi, scenario).unwrap();
            match extraction_channel(&model, &psi, ExtractionOptions::default()) {
                Ok(r) => {
                    runs += 1;
                    let da = (r.decomposition.alpha - alpha).abs();
                    worst_alpha = worst_alpha.max(da);
                    worst_fid = worst_fid.max(1.0 - r.family_fidelity);
                    out.check(da <= 1e-8, || format!("{name} {kind:?}: alpha {}", r.decomposition.alpha));
                    out.check(r.family_fidelity >= 1.0 - 1e-8, || {
                        format!("{name} {kind:?}: fidelity {}", r.family_fidelity)
                    });
                }
                Err(e) => out.check(false, || format!("{name} {kind:?}: {e}")),
            }
        }
    }
    out.note(format!("{runs} runs, max alpha error {worst_alpha:.2e}, max fidelity gap {worst_fid:.2e}"));
    out.report(4, "network extraction yields the target/conjugate family with the right weight");
}

#[test]
fn fully_extraction_is_all_or_nothing() {
    let mut out = Outcome::new();
    let mut seen = Vec::new();
    let kinds = [
        (AdversaryKind::ExactReference, 1.0),
        (AdversaryKind::GlobalConjugate, 0.0),
        (AdversaryKind::IsometryEmbedded { seed: 1 }, 1.0),
        (AdversaryKind::IsometryEmbedded { seed: 2 }, 1.0),
        (AdversaryKind::IsometryEmbedded { seed: 3 }, 1.0),
    ];
    for (name, psi) in [("phase-Bell", phase_bell()), ("GHZ3", ghz(3).unwrap())] {
        let scenario = Scenario::fully(psi.layout().num_sites());
        for (kind, alpha) in kinds {
            let model = make_model(kind, &psi, scenario).unwrap();
            match extraction_channel(&model, &psi, ExtractionOptions::default()) {
                Ok(r) => {
                    let a = r.decomposition.alpha;
                    seen.push(a);
                    out.check(a.abs() <= 1e-8 || (a - 1.0).abs() <= 1e-8, || format!("{name} {kind:?}: alpha {a}"));
                    out.check((a - alpha).abs() <= 1e-8, || format!("{name} {kind:?}: alpha {a}, expected {alpha}"));
                }
                Err(e) => out.check(false, || format!("{name} {kind:?}: {e}")),
            }
        }
        let flagged = make_model(AdversaryKind::FlaggedSuperposition { alpha: 0.3 }, &psi, scenario);
        out.check(matches!(flagged, Err(Error::SourceIndependence(_))), || format!("{name}: flagged model accepted"));
    }
    out.note(format!(
        "{} runs, alphas {:?}, flagged model rejected",
        seen.len(),
        seen.iter().map(|a| a.round()).collect::<Vec<_>>()
    ));
    out.report(5, "fully variant extraction gives alpha ∈ {0,1}");
}

#[test]
fn flagged_behavior_does_not_depend_on_alpha() {
    let mut out = Outcome::new();
    let mut worst = 0.0f64;
    for (name, psi) in [("phase-Bell", phase_bell()), ("GHZ2", ghz(2).unwrap())] {
        let scenario = Scenario::network(2);
        let base = make_model(AdversaryKind::FlaggedSuperposition { alpha: 0.0 }, &psi, scenario).unwrap();
        for alpha in [0.3, 1.0] {
            let other = make_model(AdversaryKind::FlaggedSuperposition { alpha }, &psi, scenario).unwrap();
            let dev = behavior_equivalence(&base, &other).unwrap();
            worst = worst.max(dev);
            out.check(dev <= 1e-10, || format!("{name} alpha={alpha}: deviation {dev:e}"));
        }
        let reference = build_reference_model(&psi, scenario).unwrap();
        let dev = behavior_equivalence(&base, &reference).unwrap();
        worst = worst.max(dev);
        out.check(dev <= 1e-10, || format!("{name}: flagged vs reference {dev:e}"));
    }
    out.note(format!("complete tables, max deviation {worst:.2e}"));
    out.report(6, "flagged behaviors agree for alpha ∈ {0, 0.3, 1}");
}

/// `(psi psi^†)^{T_A}` for `psi = sum_i c_i |i>|i>`, built entry by entry.
fn brute_pt(coeffs: &[f64]) -> M {
    let m = coeffs.len();
    let idx = |a: usize, b: usize| a * m + b;
    let mut out = M::zeros(m * m, m * m);
    for i in 0..m {
        for j in 0..m {
            // |ii><jj| transposed on the first factor becomes |ji><ij|
            out[(idx(j, i), idx(i, j))] = c(coeffs[i] * coeffs[j], 0.0);
        }
    }
    out
}

fn random_density<R: Rng>(layout: SiteLayout, rng: &mut R) -> DensityOp {
    let d = layout.total_dim();
    let rank = rng.random_range(1..=d);
    let weights: Vec<f64> = (0..rank).map(|_| rng.random::<f64>()).collect();
    let total: f64 = weights.iter().sum();
    let mut m = M::zeros(d, d);
    for w in weights {
        m += random_state(layout.clone(), rng).density().matrix().scale(w / total);
    }
    DensityOp::new(layout, m).unwrap()
}

#[test]
fn partial_transpose_spectra() {
    let mut out = Outcome::new();
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let m = rng.random_range(1..=4);
        let raw: Vec<f64> = (0..m).map(|_| rng.random::<f64>() + 1e-3).collect();
        let norm = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        let coeffs: Vec<f64> = raw.iter().map(|x| x / norm).collect();
        let mut predicted = pt_spectrum_pure(&coeffs).unwrap().values();
        predicted.sort_by(|a, b| b.total_cmp(a));
        let mut brute: Vec<f64> = brute_pt(&coeffs).symmetric_eigenvalues().iter().copied().collect();
        brute.sort_by(|a, b| b.total_cmp(a));
        for (p, q) in predicted.iter().zip(&brute) {
            worst = worst.max((p - q).abs());
        }
        out.check(predicted.len() == brute.len(), || {
            format!("m={m}: {} vs {} eigenvalues", predicted.len(), brute.len())
        });
    }
    out.check(worst <= 1e-10, || format!("Schmidt spectra differ by {worst:e}"));

    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..200 {
        let dims = match rng.random_range(0..4) {
            0 => vec![2, 2],
            1 => vec![2, 3],
            2 => vec![2, 2, 2],
            _ => vec![3, 3],
        };
        let layout = SiteLayout::new(dims).unwrap();
        let k = layout.num_sites();
        let subset: Vec<usize> = (0..k).filter(|_| rng.random::<bool>()).collect();
        let rho = random_density(layout, &mut rng);
        let b = pt_bounds_check(&rho, &subset).unwrap();
        lo = lo.min(b.min);
        hi = hi.max(b.max);
        out.check(b.min >= -0.5 - 1e-10 && b.max <= 1.0 + 1e-10, || format!("eigenvalues [{}, {}]", b.min, b.max));
    }

    let mut gme_states = vec![ghz(3).unwrap(), w_state(3).unwrap(), ghz(4).unwrap(), phase_bell()];
    gme_states.extend(random_targets(3, 3, 701));
    let mut patterns = 0;
    let mut most_negative = 0.0f64;
    for psi in &gme_states {
        out.check(gme_check(psi).unwrap(), || "target is not genuinely entangled".into());
        let n = psi.layout().num_sites();
        for mask in 1..(1usize << n) - 1 {
            let flags: Vec<bool> = (0..n).map(|s| mask >> s & 1 == 1).collect();
            let rho = flagged_mixture(psi, &[(flags.clone(), 1.0)]).unwrap();
            let min = *hermitian_eigensystem(&LinOp::new(rho.layout().clone(), rho.matrix().clone()).unwrap())
                .unwrap()
                .values
                .last()
                .unwrap();
            patterns += 1;
            most_negative = most_negative.min(min);
            out.check(min < -1e-9, || format!("flags {flags:?}: smallest eigenvalue {min:e}"));
        }
    }
    out.note(format!(
        "Schmidt max error {worst:.2e}; PT range [{lo:.3}, {hi:.3}]; {patterns} mixed patterns all negative"
    ));
    out.report(7, "partial-transpose spectra, bounds and mixed-flag negativity");
}

#[test]
fn noisy_and_wrong_targets_fail() {
    let mut out = Outcome::new();
    let psi = ghz(3).unwrap();
    let s = Scenario::network(3);
    let noisy = make_model(AdversaryKind::Noisy { visibility: 0.9, pair: 0 }, &psi, s).unwrap();
    let b = certification_behavior(&noisy).unwrap();
    let report = certify(&b, &psi, Tolerance::default()).unwrap();
    let total = report.chsh.pairs[0].total;
    let oracle = oracle_3chsh(&b, 0);
    out.check(!report.pass, || "noisy model certified".into());
    out.check((total - 0.9 * 6.0 * SQRT_2).abs() <= 1e-9, || format!("pair 1 total {total}"));
    out.check((oracle - total).abs() <= 1e-12, || format!("oracle {oracle} vs {total}"));
    out.check(report.failing_pairs() == vec![0], || format!("failing pairs {:?}", report.failing_pairs()));
    let refused = extraction_channel(&noisy, &psi, ExtractionOptions::default());
    out.check(matches!(refused, Err(Error::NotCertified(_))), || "extraction ran on a noisy model".into());
    out.note(format!("pair 1 total {total:.12}"));

    let mut rng = ChaCha8Rng::seed_from_u64(800);
    for n in 1..=3 {
        let truth = random_state(SiteLayout::qubits(n), &mut rng);
        let wrong = random_state(SiteLayout::qubits(n), &mut rng);
        let b = certification_behavior(&build_reference_model(&truth, Scenario::network(n)).unwrap()).unwrap();
        let r = certify(&b, &wrong, Tolerance::default()).unwrap();
        let mut gap = 0.0f64;
        for kin in 0..3usize.pow(n as u32) {
            for a_idx in 0..4usize.pow(n as u32) {
                let (a, k) = (digits(&vec![4; n], a_idx), digits(&vec![3; n], kin));
                gap = gap.max((oracle_rhs(&truth, &a, &k) - oracle_rhs(&wrong, &a, &k)).abs());
            }
        }
        out.check(!r.tomography.pass && r.chsh.pass, || format!("N={n}: wrong target accepted"));
        out.check(r.tomography.max_residual >= gap - 1e-9, || {
            format!("N={n}: residual {} below gap {gap}", r.tomography.max_residual)
        });
        out.note(format!("wrong N={n} residual {:.3e}", r.tomography.max_residual));
    }
    out.report(8, "noisy source and wrong target are rejected");
}

#[test]
fn simulate_is_thread_count_independent() {
    let mut out = Outcome::new();
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("ghz3.json");
    std::fs::write(&state, serde_json::to_string(&state_to_file(&ghz(3).unwrap())).unwrap()).unwrap();
    let run = |threads: &str| {
        let target = dir.path().join(format!("b{threads}.json"));
        let status = Command::new(env!("CARGO_BIN_EXE_netcert"))
            .env("NETCERT_THREADS", threads)
            .args(["simulate", "--variant", "network", "--out"])
            .arg(&target)
            .arg(&state)
            .status()
            .unwrap();
        let stdout = Command::new(env!("CARGO_BIN_EXE_netcert"))
            .env("NETCERT_THREADS", threads)
            .arg("simulate")
            .arg(&state)
            .output()
            .unwrap()
            .stdout;
        (status.success(), std::fs::read(target).unwrap_or_default(), stdout)
    };
    let (ok1, file1, out1) = run("1");
    let (ok8, file8, out8) = run("8");
    out.check(ok1 && ok8, || "simulate exited with an error".into());
    out.check(!file1.is_empty() && file1 == file8, || "--out files differ".into());
    out.check(!out1.is_empty() && out1 == out8, || "stdout differs".into());
    out.note(format!("{} bytes identical", file1.len()));
    out.report(9, "simulate output is identical with 1 and 8 threads");
}
