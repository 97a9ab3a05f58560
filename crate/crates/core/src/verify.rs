//! Certification harness: every identity and inequality the library knows
//! about, evaluated on one spin system or matroid, collected into a
//! deterministic report.

use num_rational::BigRational;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    block_kernel, glauber_kernel, lazy, mixing_report, shattering_check, tensorization_summary,
    MAX_KERNEL_STATES,
};
use crate::error::{Error, Result};
use crate::gibbs::{parse_rational, Caps, Graph, SpinSystem};
use crate::influence::{
    entries_bounded, influence_matrix, influence_spectrum, spectral_independence, unit_diagonal,
};
use crate::levels::{
    config_face, dirichlet, expectation, pinning_face, variance, variance_pairwise, LevelGap,
    WeightedComplex,
};
use crate::matroid::{
    axioms_check, bases_exchange_kernel, reliability_direct, reliability_dual, reliability_exact,
    set_label, trickle_down_certify, Matroid, MatroidSpec,
};
use crate::numerics::{
    gap, multiset_deviation, power_iteration, reversible_eigen, reversible_spectrum, DenseMatrix,
    WalkKernel,
};
use crate::rng;

pub const SCHEMA_VERSION: u32 = 1;

pub const IDENTITY_TOLERANCE: f64 = 1e-10;
pub const EXACT_TOLERANCE: f64 = 1e-12;
pub const INEQUALITY_TOLERANCE: f64 = 1e-9;
pub const MULTISET_TOLERANCE: f64 = 1e-8;
pub const PROBES: usize = 32;

/// Every check the spin suite can emit, in registry order.
pub const SPIN_CHECKS: &[&str] = &[
    "influence.unit_diagonal",
    "influence.entries_bounded",
    "influence.factorization",
    "influence.psd",
    "influence.power_iteration_agreement",
    "influence.eta_consistency",
    "levels.normalization",
    "levels.stochastic_operators",
    "levels.down_preserves_levels",
    "levels.up_down_reversibility",
    "levels.up_down_closed_form",
    "levels.local_walk_embedding",
    "levels.lazy_root_walk",
    "levels.local_walk_spectrum",
    "levels.local_gap_from_eta",
    "levels.nonzero_spectra_agree",
    "levels.mean_preserving_projection",
    "levels.variance_forms",
    "levels.step_factorization",
    "levels.up_down_local_decomposition",
    "levels.down_up_local_variance",
    "levels.up_down_dominates_down_up",
    "levels.multi_level_dirichlet",
    "levels.two_step_variance",
    "levels.down_up_growth",
    "dynamics.glauber_equals_top_down_up",
    "dynamics.block_equals_multi_level",
    "dynamics.glauber_reversible",
    "dynamics.psd",
    "dynamics.poincare",
    "dynamics.lazy_contraction",
    "dynamics.local_to_global",
    "dynamics.improved_block_gap",
    "dynamics.improved_level_gap",
    "dynamics.relaxation_bound",
    "dynamics.mixing_bound",
    "dynamics.mixing_monotone",
    "dynamics.mixing_boosting",
    "dynamics.entropy_tensorization",
    "dynamics.shattering",
];

/// Every check the matroid suite can emit, in registry order.
pub const MATROID_CHECKS: &[&str] = &[
    "matroid.axioms",
    "matroid.duality_involution",
    "matroid.exchange_equals_down_up",
    "matroid.exchange_gap",
    "matroid.rank_two_links",
    "matroid.trickle_down",
    "matroid.link_gap_at_least_one",
    "matroid.link_dirichlet_decomposition",
    "matroid.link_expectation_decomposition",
    "matroid.second_eigenvector_average",
    "matroid.reliability_paths",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckKind {
    /// |lhs − rhs| ≤ tolerance.
    Identity,
    /// lhs ≥ rhs − tolerance.
    Inequality,
    /// Sorted elementwise deviation ≤ tolerance.
    Multiset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Scalar(f64),
    Multiset(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub instance: String,
    pub kind: CheckKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lhs: Option<Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rhs: Option<Value>,
    /// lhs − rhs for inequalities, the largest deviation for identities.
    pub margin: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

impl CheckResult {
    /// Distance from failing: nonnegative exactly when the check passes.
    pub fn slack(&self) -> Option<f64> {
        let m = self.margin?;
        Some(match self.kind {
            CheckKind::Inequality => m + self.tolerance,
            CheckKind::Identity | CheckKind::Multiset => self.tolerance - m,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub identity: f64,
    pub exact: f64,
    pub inequality: f64,
    pub multiset: f64,
    pub probes: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            identity: IDENTITY_TOLERANCE,
            exact: EXACT_TOLERANCE,
            inequality: INEQUALITY_TOLERANCE,
            multiset: MULTISET_TOLERANCE,
            probes: PROBES,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckSummary {
    pub name: String,
    pub total: usize,
    pub failed: usize,
    pub skipped: usize,
    pub worst_slack: Option<f64>,
    pub worst_instance: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub subject: String,
    pub seed: u64,
    pub tolerances: Tolerances,
    pub pass: bool,
    pub passed: usize,
    pub failed: usize,
    pub skipped: usize,
    pub summary: Vec<CheckSummary>,
    pub checks: Vec<CheckResult>,
}

impl SuiteReport {
    fn assemble(subject: String, seed: u64, mut checks: Vec<CheckResult>) -> Self {
        // Stable: instances keep their generation order within a name.
        checks.sort_by(|a, b| a.name.cmp(&b.name));
        let failed = checks.iter().filter(|c| !c.pass).count();
        let skipped = checks.iter().filter(|c| c.skipped.is_some()).count();
        let mut summary: Vec<CheckSummary> = Vec::new();
        for c in &checks {
            if summary.last().is_none_or(|s| s.name != c.name) {
                summary.push(CheckSummary {
                    name: c.name.clone(),
                    total: 0,
                    failed: 0,
                    skipped: 0,
                    worst_slack: None,
                    worst_instance: None,
                });
            }
            let s = summary.last_mut().expect("just pushed");
            s.total += 1;
            s.failed += usize::from(!c.pass);
            s.skipped += usize::from(c.skipped.is_some());
            if let Some(slack) = c.slack() {
                if s.worst_slack.is_none_or(|w| slack < w) {
                    s.worst_slack = Some(slack);
                    s.worst_instance = Some(c.instance.clone());
                }
            }
        }
        Self {
            schema_version: SCHEMA_VERSION,
            subject,
            seed,
            tolerances: Tolerances::default(),
            pass: failed == 0,
            passed: checks.len() - failed - skipped,
            failed,
            skipped,
            summary,
            checks,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn names(&self) -> std::collections::BTreeSet<&str> {
        self.checks.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Collects results for one suite run.
struct Recorder {
    seed: u64,
    out: Vec<CheckResult>,
}

impl Recorder {
    fn new(seed: u64) -> Self {
        Self {
            seed,
            out: Vec::new(),
        }
    }

    /// A reproducible generator for the probes of check `name`.
    fn rng(&self, name: &str, salt: u64) -> rng::Rng {
        let idx = SPIN_CHECKS
            .iter()
            .chain(MATROID_CHECKS)
            .position(|c| *c == name)
            .expect("registered check") as u64;
        rng::stream(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15), idx)
    }

    fn identity(&mut self, name: &str, instance: String, lhs: f64, rhs: f64, tol: f64) {
        let dev = (lhs - rhs).abs();
        self.push(name, instance, CheckKind::Identity, Some(Value::Scalar(lhs)), Some(Value::Scalar(rhs)), dev, tol, None);
    }

    fn deviation(&mut self, name: &str, instance: String, dev: f64, tol: f64, notes: Option<String>) {
        self.push(name, instance, CheckKind::Identity, None, None, dev, tol, notes);
    }

    fn at_least(&mut self, name: &str, instance: String, lhs: f64, rhs: f64, tol: f64) {
        self.push(
            name,
            instance,
            CheckKind::Inequality,
            Some(Value::Scalar(lhs)),
            Some(Value::Scalar(rhs)),
            lhs - rhs,
            tol,
            None,
        );
    }

    fn multiset(&mut self, name: &str, instance: String, lhs: Vec<f64>, rhs: Vec<f64>, tol: f64) {
        let dev = multiset_deviation(&lhs, &rhs).unwrap_or(f64::INFINITY);
        let notes = (lhs.len() != rhs.len()).then(|| format!("sizes differ: {} vs {}", lhs.len(), rhs.len()));
        self.push(name, instance, CheckKind::Multiset, Some(Value::Multiset(lhs)), Some(Value::Multiset(rhs)), dev, tol, notes);
    }

    fn skip(&mut self, name: &str, instance: String, reason: impl Into<String>) {
        self.out.push(CheckResult {
            name: name.into(),
            instance,
            kind: CheckKind::Inequality,
            lhs: None,
            rhs: None,
            margin: None,
            tolerance: 0.0,
            pass: true,
            skipped: Some(reason.into()),
            notes: None,
        });
    }

    fn fail(&mut self, name: &str, instance: String, reason: impl Into<String>) {
        self.out.push(CheckResult {
            name: name.into(),
            instance,
            kind: CheckKind::Identity,
            lhs: None,
            rhs: None,
            margin: None,
            tolerance: 0.0,
            pass: false,
            skipped: None,
            notes: Some(reason.into()),
        });
    }

    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        name: &str,
        instance: String,
        kind: CheckKind,
        lhs: Option<Value>,
        rhs: Option<Value>,
        margin: f64,
        tol: f64,
        notes: Option<String>,
    ) {
        let pass = match kind {
            CheckKind::Inequality => margin >= -tol,
            CheckKind::Identity | CheckKind::Multiset => margin <= tol,
        };
        self.out.push(CheckResult {
            name: name.into(),
            instance,
            kind,
            lhs,
            rhs,
            margin: Some(margin),
            tolerance: tol,
            pass,
            skipped: None,
            notes,
        });
    }
}

fn probe(rng: &mut rng::Rng, len: usize) -> Vec<f64> {
    rng::normal_vector(rng, len)
}

fn max_abs(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Reorders a level-n kernel into the support order of `system`.
fn to_support_order(system: &SpinSystem, complex: &WeightedComplex, kernel: &WalkKernel) -> Result<DenseMatrix> {
    let top = complex.level(system.n())?;
    let perm: Vec<usize> = system
        .support()
        .iter()
        .map(|&c| top.index_of(config_face(c, system.n())).expect("support config is a top face"))
        .collect();
    let d = perm.len();
    let mut m = DenseMatrix::zeros(d, d);
    for x in 0..d {
        for y in 0..d {
            m[(x, y)] = kernel.matrix[(perm[x], perm[y])];
        }
    }
    Ok(m)
}

/// Γ_i = ∏_{j<i}(2γ_j − 1) for i = 0..count, or the first index with a
/// nonpositive factor.
fn gamma_products(gaps: &[f64], count: usize) -> std::result::Result<Vec<f64>, usize> {
    let mut out = vec![1.0];
    for i in 1..count {
        let factor = 2.0 * gaps[i - 1] - 1.0;
        if factor <= 0.0 {
            return Err(i - 1);
        }
        out.push(out[i - 1] * factor);
    }
    Ok(out)
}

fn describe_system(system: &SpinSystem) -> String {
    match system.graph() {
        Some(g) => format!("spin system n={} |Ω|={} graph={}", system.n(), system.len(), g.to_json()),
        None => format!("spin system n={} |Ω|={}", system.n(), system.len()),
    }
}

/// Runs every spin-system check on `system`. Random probes are drawn from
/// streams derived from `seed`.
pub fn run_spin_suite(system: &SpinSystem, seed: u64, caps: &Caps) -> Result<SuiteReport> {
    if system.len() > MAX_KERNEL_STATES {
        return Err(Error::CapExceeded {
            what: "kernel states",
            required: system.len() as u128,
            cap: MAX_KERNEL_STATES as u128,
        });
    }
    let mut rec = Recorder::new(seed);
    let complex = WeightedComplex::from_spin_system(system, caps)?;
    let n = system.n();
    let si = spectral_independence(system, caps)?;
    influence_checks(&mut rec, system, caps, si.eta)?;
    let gaps = complex.local_gaps()?;
    level_checks(&mut rec, system, &complex, caps, &gaps, si.eta)?;
    dynamics_checks(&mut rec, system, &complex, &gaps)?;
    if let Some(g) = system.graph() {
        shattering_checks(&mut rec, g, seed)?;
    } else {
        rec.skip("dynamics.shattering", format!("n={n}"), "system has no underlying graph");
    }
    Ok(SuiteReport::assemble(describe_system(system), seed, rec.out))
}

fn influence_checks(rec: &mut Recorder, system: &SpinSystem, caps: &Caps, eta: f64) -> Result<()> {
    let n = system.n();
    let mut best: f64 = 0.0;
    for k in 0..=n {
        let pinnings = system.enumerate_pinnings(k, caps)?;
        let computed: Vec<_> = pinnings
            .par_iter()
            .map(|p| {
                let psi = influence_matrix(system, p)?;
                let spec = influence_spectrum(&psi)?;
                Ok((p, psi, spec))
            })
            .collect::<Result<_>>()?;
        let mut degenerate = 0;
        for (p, psi, spec) in computed {
            if psi.is_degenerate() {
                degenerate += 1;
                continue;
            }
            let inst = format!("pinning {p}");
            match &psi.exact {
                Some(ex) => {
                    let dev = if unit_diagonal(&ex.entries) { 0.0 } else { 1.0 };
                    rec.deviation("influence.unit_diagonal", inst.clone(), dev, 0.0, Some("exact".into()));
                    let ok = entries_bounded(&ex.entries);
                    rec.deviation("influence.entries_bounded", inst.clone(), if ok { 0.0 } else { 1.0 }, 0.0, Some("exact".into()));
                    let exact = psi.factorization_exact() == Some(true);
                    rec.deviation(
                        "influence.factorization",
                        inst.clone(),
                        if exact { 0.0 } else { psi.factorization_residual() },
                        EXACT_TOLERANCE,
                        Some(if exact { "exact rational equality" } else { "floating residual" }.into()),
                    );
                }
                None => {
                    let d = psi.dim();
                    let diag = (0..d).map(|i| (psi.entries[(i, i)] - 1.0).abs()).fold(0.0, f64::max);
                    rec.deviation("influence.unit_diagonal", inst.clone(), diag, EXACT_TOLERANCE, None);
                    let over = psi.entries.as_slice().iter().map(|x| (x.abs() - 1.0).max(0.0)).fold(0.0, f64::max);
                    rec.deviation("influence.entries_bounded", inst.clone(), over, EXACT_TOLERANCE, None);
                    rec.deviation("influence.factorization", inst.clone(), psi.factorization_residual(), EXACT_TOLERANCE, None);
                }
            }
            let lmin = spec.min().unwrap_or(1.0);
            let lmax = spec.max().unwrap_or(1.0);
            rec.at_least("influence.psd", inst.clone(), lmin, 0.0, IDENTITY_TOLERANCE);
            if psi.dim() >= 2 {
                best = best.max(lmax - 1.0);
                let l2 = spec.eigenvalues[1];
                let sep = lmax - l2;
                // Power iteration error decays like (λ₂/λ₁)^t.
                let iters = if l2 <= 1e-12 {
                    64.0
                } else {
                    (40.0 / (lmax / l2).ln()).ceil()
                };
                if sep <= 1e-6 {
                    rec.skip("influence.power_iteration_agreement", inst, "spectral separation at most 1e-6");
                } else if iters > 200_000.0 {
                    rec.skip("influence.power_iteration_agreement", inst, format!("power iteration would need {iters} steps"));
                } else {
                    let pw = power_iteration(&psi.entries, iters as usize);
                    rec.identity("influence.power_iteration_agreement", inst, pw, lmax, MULTISET_TOLERANCE);
                }
            }
        }
        if degenerate > 0 {
            rec.skip("influence.factorization", format!("level {k}"), format!("{degenerate} pinnings have no free vertex"));
        }
    }
    rec.identity("influence.eta_consistency", "all pinnings".into(), eta, best.max(0.0), IDENTITY_TOLERANCE);
    Ok(())
}

fn level_checks(
    rec: &mut Recorder,
    system: &SpinSystem,
    complex: &WeightedComplex,
    caps: &Caps,
    gaps: &[LevelGap],
    eta: f64,
) -> Result<()> {
    let n = system.n();
    for k in 0..=n {
        let l = complex.level(k)?;
        rec.identity("levels.normalization", format!("k={k}"), l.pi.iter().sum(), 1.0, EXACT_TOLERANCE);
    }
    for k in 1..=n {
        let down = complex.down(k)?;
        let up = complex.up(k - 1)?;
        let rows = down
            .matrix
            .row_sums()
            .into_iter()
            .chain(up.matrix.row_sums())
            .map(|s| (s - 1.0).abs())
            .fold(0.0, f64::max);
        rec.deviation("levels.stochastic_operators", format!("k={k}"), rows, EXACT_TOLERANCE, None);
        let pushed = down.matrix.vec_mul(&complex.level(k)?.pi)?;
        rec.deviation("levels.down_preserves_levels", format!("k={k}"), max_abs(&pushed, &complex.level(k - 1)?.pi), EXACT_TOLERANCE, None);
        let lo = complex.level(k - 1)?;
        let hi = complex.level(k)?;
        let mut worst: f64 = 0.0;
        for i in 0..lo.len() {
            for j in 0..hi.len() {
                worst = worst.max((lo.pi[i] * up.matrix[(i, j)] - hi.pi[j] * down.matrix[(j, i)]).abs());
            }
        }
        rec.deviation("levels.up_down_reversibility", format!("k={}", k - 1), worst, EXACT_TOLERANCE, None);
    }
    for k in 0..n {
        let a = complex.up_down(k)?;
        let b = complex.up_down_direct(k)?;
        rec.deviation("levels.up_down_closed_form", format!("k={k}"), a.matrix.max_abs_diff(&b.matrix), EXACT_TOLERANCE, None);
    }
    for k in 1..n {
        let ud = complex.up_down(k)?;
        let here = complex.level(k)?;
        let mut worst: f64 = 0.0;
        for &eta_face in &complex.level(k - 1)?.faces {
            let q = complex.local_walk(eta_face)?;
            for (x, &a) in q.states.iter().enumerate() {
                for (y, &b) in q.states.iter().enumerate() {
                    if x == y {
                        continue;
                    }
                    let i = here.index_of(eta_face | 1 << a).expect("extension is a face");
                    let j = here.index_of(eta_face | 1 << b).expect("extension is a face");
                    worst = worst.max((ud.matrix[(i, j)] - q.kernel.matrix[(x, y)] / (k + 1) as f64).abs());
                }
            }
        }
        rec.deviation("levels.local_walk_embedding", format!("k={k}"), worst, EXACT_TOLERANCE, None);
    }
    if n >= 2 {
        let ud = complex.up_down(1)?;
        let q = complex.local_walk(0)?;
        let one = complex.level(1)?;
        let mut worst: f64 = 0.0;
        for (x, &a) in q.states.iter().enumerate() {
            for (y, &b) in q.states.iter().enumerate() {
                let lazy = (q.kernel.matrix[(x, y)] + if x == y { 1.0 } else { 0.0 }) / 2.0;
                let i = one.index_of(1 << a).expect("state is a face");
                let j = one.index_of(1 << b).expect("state is a face");
                worst = worst.max((ud.matrix[(i, j)] - lazy).abs());
            }
        }
        rec.deviation("levels.lazy_root_walk", "k=1".into(), worst, EXACT_TOLERANCE, None);
    } else {
        rec.skip("levels.lazy_root_walk", "k=1".into(), "fewer than two vertices");
    }
    local_spectrum_checks(rec, system, complex, caps)?;
    for g in gaps {
        let inst = format!("k={}", g.k);
        if !g.reducible.is_empty() {
            rec.skip("levels.local_gap_from_eta", inst, format!("reducible local walk at {}", complex.face_label(g.reducible[0])));
        } else {
            let free = (n - g.k - 1) as f64;
            rec.at_least("levels.local_gap_from_eta", inst, g.gamma, 1.0 - eta / free, INEQUALITY_TOLERANCE);
        }
    }
    for k in 1..=n {
        let a = reversible_spectrum(&complex.up_down(k - 1)?)?;
        let b = reversible_spectrum(&complex.down_up(k)?)?;
        let nz = |s: &[f64]| s.iter().copied().filter(|x| x.abs() > 1e-7).collect::<Vec<_>>();
        rec.multiset("levels.nonzero_spectra_agree", format!("k={k}"), nz(&a.eigenvalues), nz(&b.eigenvalues), MULTISET_TOLERANCE);
    }
    {
        let mut r = rec.rng("levels.mean_preserving_projection", 0);
        for k in 0..n {
            let hi = complex.level(k + 1)?;
            let lo = complex.level(k)?;
            let mut worst: f64 = 0.0;
            for _ in 0..PROBES {
                let f = probe(&mut r, hi.len());
                let g = complex.project(k, &f)?;
                worst = worst.max((expectation(&lo.pi, &g)? - expectation(&hi.pi, &f)?).abs());
            }
            rec.deviation("levels.mean_preserving_projection", format!("k={k}"), worst, EXACT_TOLERANCE, None);
        }
        let mut r = rec.rng("levels.variance_forms", 0);
        for k in 0..=n {
            let l = complex.level(k)?;
            let mut worst: f64 = 0.0;
            for _ in 0..PROBES {
                let f = probe(&mut r, l.len());
                worst = worst.max((variance(&l.pi, &f)? - variance_pairwise(&l.pi, &f)?).abs());
            }
            rec.deviation("levels.variance_forms", format!("k={k}"), worst, EXACT_TOLERANCE, None);
        }
    }
    for k in 1..=n {
        let lo = complex.level(k - 1)?;
        let hi = complex.level(k)?;
        let mut worst: f64 = 0.0;
        for (i, &eta_face) in lo.faces.iter().enumerate() {
            let (rho, probs) = complex.conditional_level(eta_face, 1)?;
            for (r, p) in rho.iter().zip(probs) {
                let lhs = hi.pi[hi.index_of(eta_face | r).expect("extension is a face")];
                worst = worst.max((lhs - k as f64 * lo.pi[i] * p).abs());
            }
        }
        rec.deviation("levels.step_factorization", format!("k={k}"), worst, EXACT_TOLERANCE, None);
    }
    probe_identities(rec, complex, gaps)
}

fn local_spectrum_checks(rec: &mut Recorder, system: &SpinSystem, complex: &WeightedComplex, caps: &Caps) -> Result<()> {
    let n = system.n();
    for k in 0..n.saturating_sub(1) {
        let pinnings = system.enumerate_pinnings(k, caps)?;
        let rows: Vec<(String, Vec<f64>, Vec<f64>)> = pinnings
            .par_iter()
            .map(|p| {
                let q = complex.local_walk(pinning_face(p))?;
                let lhs = reversible_spectrum(&q.kernel)?.eigenvalues;
                let psi = influence_matrix(system, p)?;
                let free = (n - k - 1) as f64;
                let mut rhs: Vec<f64> = influence_spectrum(&psi)?
                    .eigenvalues
                    .iter()
                    .map(|l| (l - 1.0) / free)
                    .collect();
                rhs.push(1.0);
                rhs.extend(std::iter::repeat_n(-1.0 / free, n - k - 1));
                Ok((format!("pinning {p}"), lhs, rhs))
            })
            .collect::<Result<_>>()?;
        for (inst, lhs, rhs) in rows {
            rec.multiset("levels.local_walk_spectrum", inst, lhs, rhs, MULTISET_TOLERANCE);
        }
    }
    if n < 2 {
        rec.skip("levels.local_walk_spectrum", "all pinnings".into(), "fewer than two vertices");
    }
    Ok(())
}

/// Identities and inequalities quantified over random test functions.
fn probe_identities(rec: &mut Recorder, complex: &WeightedComplex, gaps: &[LevelGap]) -> Result<()> {
    let n = complex.rank();
    let gamma_of = |k: usize| gaps.get(k).filter(|g| g.reducible.is_empty()).map(|g| g.gamma);

    // Dirichlet forms of the up-down walk against the local walks below.
    let mut r = rec.rng("levels.up_down_local_decomposition", 0);
    let mut r2 = rec.rng("levels.down_up_local_variance", 0);
    let mut r3 = rec.rng("levels.up_down_dominates_down_up", 0);
    for k in 1..=n {
        let here = complex.level(k)?;
        let below = complex.level(k - 1)?;
        let du = complex.down_up(k)?;
        let walks = if k < n {
            Some(below.faces.iter().map(|&f| complex.local_walk(f)).collect::<Result<Vec<_>>>()?)
        } else {
            None
        };
        let conds = below
            .faces
            .iter()
            .map(|&f| complex.conditional_level(f, 1))
            .collect::<Result<Vec<_>>>()?;
        let ud = if k < n { Some(complex.up_down(k)?) } else { None };
        let (mut w1, mut w2) = (0.0f64, 0.0f64);
        let mut w3 = f64::INFINITY;
        for _ in 0..PROBES {
            let f = probe(&mut r, here.len());
            if let (Some(ud), Some(walks)) = (&ud, &walks) {
                let lhs = dirichlet(ud, &f)?;
                let mut rhs = 0.0;
                for (i, q) in walks.iter().enumerate() {
                    rhs += below.pi[i] * dirichlet(&q.kernel, &q.restrict(here, &f))?;
                }
                rhs *= k as f64 / (k + 1) as f64;
                w1 = w1.max((lhs - rhs).abs());
            }
            let f2 = probe(&mut r2, here.len());
            let lhs = dirichlet(&du, &f2)?;
            let mut rhs = 0.0;
            for (i, (rho, probs)) in conds.iter().enumerate() {
                let eta_face = below.faces[i];
                let vals: Vec<f64> = rho
                    .iter()
                    .map(|r| f2[here.index_of(eta_face | r).expect("extension is a face")])
                    .collect();
                rhs += below.pi[i] * variance(probs, &vals)?;
            }
            w2 = w2.max((lhs - rhs).abs());
            if let (Some(ud), Some(g)) = (&ud, gamma_of(k - 1)) {
                let f3 = probe(&mut r3, here.len());
                let lhs = dirichlet(ud, &f3)?;
                let rhs = k as f64 / (k + 1) as f64 * g * dirichlet(&du, &f3)?;
                w3 = w3.min(lhs - rhs);
            }
        }
        if k < n {
            rec.deviation("levels.up_down_local_decomposition", format!("k={k}"), w1, IDENTITY_TOLERANCE, Some(format!("{PROBES} probes")));
            match gamma_of(k - 1) {
                Some(_) => rec.push(
                    "levels.up_down_dominates_down_up",
                    format!("k={k}"),
                    CheckKind::Inequality,
                    None,
                    None,
                    w3,
                    IDENTITY_TOLERANCE,
                    Some(format!("worst of {PROBES} probes")),
                ),
                None => rec.skip("levels.up_down_dominates_down_up", format!("k={k}"), format!("reducible local walk at level {}", k - 1)),
            }
        }
        rec.deviation("levels.down_up_local_variance", format!("k={k}"), w2, IDENTITY_TOLERANCE, Some(format!("{PROBES} probes")));
    }

    // P↓↑_{i,j} Dirichlet form as a variance drop between projections.
    let mut r = rec.rng("levels.multi_level_dirichlet", 0);
    for i in 1..=n {
        for j in 0..i {
            let walk = complex.down_up_multi(i, j)?;
            let top = complex.level(i)?;
            let bottom = complex.level(j)?;
            let mut worst: f64 = 0.0;
            for _ in 0..PROBES {
                let f = probe(&mut r, top.len());
                let g = complex.project_to(i, j, &f)?;
                let lhs = dirichlet(&walk, &f)?;
                let rhs = variance(&top.pi, &f)? - variance(&bottom.pi, &g)?;
                worst = worst.max((lhs - rhs).abs());
            }
            rec.deviation("levels.multi_level_dirichlet", format!("i={i} j={j}"), worst, IDENTITY_TOLERANCE, Some(format!("{PROBES} probes")));
        }
    }

    // Law of total variance across two levels.
    let mut r = rec.rng("levels.two_step_variance", 0);
    for k in 1..n {
        let top = complex.level(k + 1)?;
        let bottom = complex.level(k - 1)?;
        let conds = bottom
            .faces
            .iter()
            .map(|&f| complex.conditional_level(f, 2))
            .collect::<Result<Vec<_>>>()?;
        let mut worst: f64 = 0.0;
        for _ in 0..PROBES {
            let f = probe(&mut r, top.len());
            let g = complex.project_to(k + 1, k - 1, &f)?;
            let lhs = variance(&top.pi, &f)? - variance(&bottom.pi, &g)?;
            let mut rhs = 0.0;
            for (i, (rho, probs)) in conds.iter().enumerate() {
                let vals: Vec<f64> = rho
                    .iter()
                    .map(|r| f[top.index_of(bottom.faces[i] | r).expect("extension is a face")])
                    .collect();
                rhs += bottom.pi[i] * variance(probs, &vals)?;
            }
            worst = worst.max((lhs - rhs).abs());
        }
        rec.deviation("levels.two_step_variance", format!("k={k}"), worst, IDENTITY_TOLERANCE, Some(format!("{PROBES} probes")));
    }

    // Growth of the down-up Dirichlet form under projection.
    let mut r = rec.rng("levels.down_up_growth", 0);
    for k in 1..n {
        let Some(g) = gamma_of(k - 1) else {
            rec.skip("levels.down_up_growth", format!("k={k}"), format!("reducible local walk at level {}", k - 1));
            continue;
        };
        let upper = complex.down_up(k + 1)?;
        let lower = complex.down_up(k)?;
        let mut worst = f64::INFINITY;
        for _ in 0..PROBES {
            let f = probe(&mut r, complex.level(n)?.len());
            let fk1 = complex.project_to(n, k + 1, &f)?;
            let fk = complex.project(k, &fk1)?;
            worst = worst.min(dirichlet(&upper, &fk1)? - (2.0 * g - 1.0) * dirichlet(&lower, &fk)?);
        }
        rec.push(
            "levels.down_up_growth",
            format!("k={k}"),
            CheckKind::Inequality,
            None,
            None,
            worst,
            IDENTITY_TOLERANCE,
            Some(format!("worst of {PROBES} probes")),
        );
    }
    if n < 2 {
        for name in ["levels.two_step_variance", "levels.down_up_growth", "levels.up_down_local_decomposition", "levels.up_down_dominates_down_up"] {
            rec.skip(name, "all levels".into(), "fewer than two vertices");
        }
    }
    Ok(())
}

fn dynamics_checks(rec: &mut Recorder, system: &SpinSystem, complex: &WeightedComplex, gaps: &[LevelGap]) -> Result<()> {
    let n = system.n();
    let glauber = glauber_kernel(system)?;
    let top = to_support_order(system, complex, &complex.down_up(n)?)?;
    rec.deviation("dynamics.glauber_equals_top_down_up", format!("n={n}"), glauber.matrix.max_abs_diff(&top), EXACT_TOLERANCE, None);
    let mut blocks = Vec::new();
    for m in 1..=n {
        let b = block_kernel(system, m)?;
        let multi = to_support_order(system, complex, &complex.down_up_multi(n, n - m)?)?;
        rec.deviation("dynamics.block_equals_multi_level", format!("m={m}"), b.matrix.max_abs_diff(&multi), EXACT_TOLERANCE, None);
        blocks.push(b);
    }
    rec.deviation(
        "dynamics.glauber_reversible",
        format!("n={n}"),
        glauber.detailed_balance_residual().max(glauber.stationarity_residual()),
        EXACT_TOLERANCE,
        None,
    );
    let spec = reversible_spectrum(&glauber)?;
    rec.at_least("dynamics.psd", "glauber".into(), spec.min().unwrap_or(1.0), 0.0, INEQUALITY_TOLERANCE);
    for (i, b) in blocks.iter().enumerate() {
        let s = reversible_spectrum(b)?;
        rec.at_least("dynamics.psd", format!("block m={}", i + 1), s.min().unwrap_or(1.0), 0.0, INEQUALITY_TOLERANCE);
    }
    let g = gap(&spec);
    let pi = system.probs();
    if system.len() >= 2 {
        let mut r = rec.rng("dynamics.poincare", 0);
        let mut worst = f64::INFINITY;
        for _ in 0..PROBES {
            let f = probe(&mut r, system.len());
            worst = worst.min(dirichlet(&glauber, &f)? - g.gamma * variance(pi, &f)?);
        }
        rec.push("dynamics.poincare", "random probes".into(), CheckKind::Inequality, None, None, worst, IDENTITY_TOLERANCE, Some(format!("E(f) − γVar(f), worst of {PROBES}")));
        let eig = reversible_eigen(&glauber)?;
        let f2 = eig.vector(1);
        rec.identity("dynamics.poincare", "second eigenvector".into(), dirichlet(&glauber, &f2)?, g.gamma * variance(pi, &f2)?, 1e-6);
        let lz = lazy(&glauber)?;
        let mut r = rec.rng("dynamics.lazy_contraction", 0);
        let mut worst = f64::INFINITY;
        for _ in 0..PROBES {
            let f = probe(&mut r, system.len());
            let pf = lz.matrix.mul_vec(&f)?;
            worst = worst.min((1.0 - g.gamma / 2.0) * variance(pi, &f)? - variance(pi, &pf)?);
        }
        rec.push("dynamics.lazy_contraction", "random probes".into(), CheckKind::Inequality, None, None, worst, IDENTITY_TOLERANCE, Some(format!("worst of {PROBES} probes")));
    } else {
        for name in ["dynamics.poincare", "dynamics.lazy_contraction"] {
            rec.skip(name, "single state".into(), "state space has one configuration");
        }
    }

    // Local-to-global bounds from the per-level local gaps.
    let reducible = gaps.iter().find(|g| !g.reducible.is_empty());
    let local: Vec<f64> = gaps.iter().map(|g| g.gamma).collect();
    if n < 2 {
        for name in ["dynamics.local_to_global", "dynamics.improved_level_gap"] {
            rec.skip(name, format!("n={n}"), "needs at least two vertices");
        }
    }
    for k in 2..=n {
        let inst = format!("k={k}");
        let measured = complex.down_up_gap(k)?;
        match reducible.filter(|g| g.k <= k - 2) {
            Some(g) => rec.skip("dynamics.local_to_global", inst.clone(), format!("reducible local walk at level {}", g.k)),
            None => {
                let bound = local[..k - 1].iter().product::<f64>() / k as f64;
                rec.at_least("dynamics.local_to_global", inst.clone(), measured, bound, INEQUALITY_TOLERANCE);
            }
        }
        match gamma_products(&local, k) {
            Ok(big) if reducible.is_none_or(|g| g.k > k - 2) => {
                let bound = big[k - 1] / big.iter().sum::<f64>();
                rec.at_least("dynamics.improved_level_gap", inst, measured, bound, INEQUALITY_TOLERANCE);
            }
            Ok(_) => rec.skip("dynamics.improved_level_gap", inst, "reducible local walk"),
            Err(j) => rec.skip("dynamics.improved_level_gap", inst, format!("factor 2γ_{j} − 1 = {} is not positive", 2.0 * local[j] - 1.0)),
        }
    }
    match gamma_products(&local, n) {
        Ok(_) if reducible.is_some() => rec.skip("dynamics.improved_block_gap", "all l".into(), "reducible local walk"),
        Ok(big) => {
            let total: f64 = big.iter().sum();
            for l in 0..n {
                let measured = gap(&reversible_spectrum(&complex.down_up_multi(n, l)?)?).gamma;
                let bound = big[l..].iter().sum::<f64>() / total;
                rec.at_least("dynamics.improved_block_gap", format!("l={l}"), measured, bound, INEQUALITY_TOLERANCE);
            }
        }
        Err(j) => rec.skip(
            "dynamics.improved_block_gap",
            "all l".into(),
            format!("factor 2γ_{j} − 1 = {} is not positive", 2.0 * local[j] - 1.0),
        ),
    }

    // Mixing and relaxation.
    let eps = [0.25, 0.125, 0.0625];
    match mixing_report(&glauber, n, &eps) {
        Ok(m) => {
            rec.at_least("dynamics.relaxation_bound", format!("n={n}"), m.t_relax_bound, m.t_relax, INEQUALITY_TOLERANCE);
            let t4 = m.t_mix_at(0.25).expect("requested");
            rec.at_least("dynamics.mixing_bound", "eps=1/4".into(), m.t_mix_bound, t4 as f64, INEQUALITY_TOLERANCE);
            let ts: Vec<u64> = m.t_mix.iter().map(|t| t.t_mix).collect();
            let mono = ts.windows(2).all(|w| w[0] <= w[1]);
            rec.deviation("dynamics.mixing_monotone", format!("t_mix={ts:?}"), if mono { 0.0 } else { 1.0 }, 0.0, None);
            for (e, label, mult) in [(0.125, "eps=1/8", 3.0), (0.0625, "eps=1/16", 4.0)] {
                let t = m.t_mix_at(e).expect("requested") as f64;
                rec.at_least("dynamics.mixing_boosting", label.into(), t4 as f64 * mult, t, INEQUALITY_TOLERANCE);
            }
        }
        Err(Error::NonErgodic) => {
            for name in ["dynamics.relaxation_bound", "dynamics.mixing_bound", "dynamics.mixing_monotone", "dynamics.mixing_boosting"] {
                rec.skip(name, format!("n={n}"), "Glauber dynamics is not ergodic on this support");
            }
        }
        Err(e) => return Err(e),
    }

    let t = tensorization_summary(system, rec.seed, PROBES)?;
    let finite = t.max_ratio.is_finite();
    let t_mix = mixing_report(&glauber, n, &[0.25]).ok().and_then(|m| m.t_mix_at(0.25));
    rec.push(
        "dynamics.entropy_tensorization",
        format!("max ratio over probes ({})", t.witness),
        CheckKind::Inequality,
        Some(Value::Scalar(t.max_ratio)),
        Some(Value::Scalar(1.0)),
        if finite { t.max_ratio - 1.0 } else { f64::NEG_INFINITY },
        INEQUALITY_TOLERANCE,
        Some(format!(
            "C·n·log log(1/μ*) = {:.6} against exact t_mix(1/4) = {}; reported, not asserted",
            t.t_mix_bound,
            t_mix.map_or("n/a".into(), |t| t.to_string())
        )),
    );
    Ok(())
}

fn shattering_checks(rec: &mut Recorder, graph: &Graph, seed: u64) -> Result<()> {
    for m in 1..=graph.n() {
        let report = shattering_check(graph, m, 200_000, seed, 1)?;
        let worst = report
            .rows
            .iter()
            .map(|r| r.bound - r.ci_upper.map_or(r.max_prob, |_| r.max_prob))
            .fold(f64::INFINITY, f64::min);
        let mut res = CheckResult {
            name: "dynamics.shattering".into(),
            instance: format!("block size {m}"),
            kind: CheckKind::Inequality,
            lhs: None,
            rhs: None,
            margin: Some(worst),
            tolerance: 0.0,
            pass: report.violations == 0,
            skipped: None,
            notes: Some(format!(
                "{} rows, {} violations, {}",
                report.rows.len(),
                report.violations,
                if report.exact { "exact".to_string() } else { format!("{} samples", report.samples) }
            )),
        };
        if report.rows.is_empty() {
            res.margin = None;
        }
        rec.out.push(res);
    }
    Ok(())
}

fn describe_matroid(m: &Matroid) -> String {
    format!("{} matroid n={} r={}", m.kind_name(), m.ground_size(), m.rank())
}

/// Runs every matroid check. A family that fails the axioms gets no
/// further checks; they are listed as skipped.
pub fn run_matroid_suite(m: &Matroid, seed: u64, caps: &Caps) -> Result<SuiteReport> {
    let mut rec = Recorder::new(seed);
    let axioms = axioms_check(m, caps)?;
    if axioms.pass {
        rec.deviation("matroid.axioms", format!("{} independent sets", axioms.independent_sets), 0.0, 0.0, None);
    } else {
        rec.fail("matroid.axioms", "exhaustive".into(), axioms.witness.clone().unwrap_or_default());
        for name in &MATROID_CHECKS[1..] {
            rec.skip(name, "all".into(), "not a matroid");
        }
        return Ok(SuiteReport::assemble(describe_matroid(m), seed, rec.out));
    }
    let r = m.rank();
    let bases = m.bases(caps)?;
    let twice = m.dual().dual().bases(caps)?;
    rec.deviation("matroid.duality_involution", format!("{} bases", bases.len()), if twice == bases { 0.0 } else { 1.0 }, 0.0, None);

    let complex = m.to_complex(caps)?;
    let walk = bases_exchange_kernel(m, caps)?;
    if r >= 1 {
        let du = complex.down_up(r)?;
        rec.deviation("matroid.exchange_equals_down_up", format!("r={r}"), walk.kernel.matrix.max_abs_diff(&du.matrix), EXACT_TOLERANCE, None);
        let g = gap(&reversible_spectrum(&walk.kernel)?).gamma;
        rec.at_least("matroid.exchange_gap", format!("r={r}"), g, 1.0 / r as f64, INEQUALITY_TOLERANCE);
    } else {
        rec.skip("matroid.exchange_equals_down_up", "r=0".into(), "rank zero");
        rec.skip("matroid.exchange_gap", "r=0".into(), "rank zero");
    }

    if r < 2 {
        for name in [
            "matroid.rank_two_links",
            "matroid.trickle_down",
            "matroid.link_gap_at_least_one",
            "matroid.second_eigenvector_average",
            "matroid.link_expectation_decomposition",
        ] {
            rec.skip(name, format!("r={r}"), "rank below 2 leaves no local walks");
        }
    } else {
        let report = trickle_down_certify(m, &complex)?;
        if let Some(w) = &report.reducible_witness {
            for name in ["matroid.trickle_down", "matroid.link_gap_at_least_one"] {
                rec.skip(name, "all links".into(), format!("reducible link at {w:?}"));
            }
        } else {
            for lvl in report.levels.windows(2) {
                let bound = 2.0 - 1.0 / lvl[1].min_gamma;
                rec.at_least("matroid.trickle_down", format!("level {}", lvl[0].level), lvl[0].min_gamma, bound, INEQUALITY_TOLERANCE);
            }
            for link in &report.links {
                if let Some(b) = link.trickle_bound {
                    let s = link.set.iter().fold(0u64, |acc, &e| acc | 1 << e);
                    rec.at_least("matroid.trickle_down", format!("link {}", set_label(s)), link.gamma, b, INEQUALITY_TOLERANCE);
                }
            }
            if report.levels.len() < 2 {
                rec.skip("matroid.trickle_down", "levels".into(), "only one level of links");
            }
            rec.at_least("matroid.link_gap_at_least_one", "all links".into(), report.min_gamma, 1.0, INEQUALITY_TOLERANCE);
        }
        for link in report.links.iter().filter(|l| l.set.len() == r - 2) {
            let s = link.set.iter().fold(0u64, |acc, &e| acc | 1 << e);
            rec.at_least("matroid.rank_two_links", format!("link {}", set_label(s)), 0.0, link.lambda2, INEQUALITY_TOLERANCE);
        }
        eigenvector_checks(&mut rec, &complex, r)?;
    }
    if r < 3 {
        rec.skip("matroid.link_dirichlet_decomposition", format!("r={r}"), "needs links two levels deep (rank at least 3)");
    } else {
        dirichlet_decomposition(&mut rec, &complex, m, r)?;
    }

    for (label, p) in [("1/4", 0.25), ("1/2", 0.5), ("3/4", 0.75)] {
        let inst = format!("p={label}");
        match (reliability_dual(m, p, caps), reliability_direct(m, p, caps)) {
            (Ok(a), Ok(b)) => {
                let exact = reliability_exact(m, &parse_rational(label)?, caps)?;
                let ex = crate::gibbs::rational_to_f64(&exact);
                let dev = (a - b).abs().max((a - ex).abs());
                rec.push(
                    "matroid.reliability_paths",
                    inst,
                    CheckKind::Identity,
                    Some(Value::Scalar(a)),
                    Some(Value::Scalar(b)),
                    dev,
                    EXACT_TOLERANCE,
                    Some(format!("exact {}", crate::gibbs::format_rational(&exact))),
                );
            }
            (Err(Error::CapExceeded { .. }), _) | (_, Err(Error::CapExceeded { .. })) => {
                rec.skip("matroid.reliability_paths", inst, "subset enumeration exceeds the cap")
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    Ok(SuiteReport::assemble(describe_matroid(m), seed, rec.out))
}

/// For each link S with |S| ≤ r−2: the conditional expectation identity over
/// S∪a, and the second eigenvector of Q_S averaged under π_{S∪a}.
fn eigenvector_checks(rec: &mut Recorder, complex: &WeightedComplex, r: usize) -> Result<()> {
    let mut rnd = rec.rng("matroid.link_expectation_decomposition", 0);
    let ground = complex.element_count();
    for k in 0..=r - 2 {
        let faces = complex.level(k)?.faces.clone();
        for s in faces {
            let label = set_label(s);
            let q = complex.local_walk(s)?;
            let (rho, probs) = complex.conditional_level(s, 1)?;
            let mut worst: f64 = 0.0;
            for _ in 0..PROBES {
                let f = probe(&mut rnd, ground);
                let lhs: f64 = rho.iter().zip(&probs).map(|(a, p)| p * f[a.trailing_zeros() as usize]).sum();
                let mut rhs = 0.0;
                for (a, p) in rho.iter().zip(&probs) {
                    let (rb, pb) = complex.conditional_level(s | a, 1)?;
                    rhs += p * rb.iter().zip(&pb).map(|(b, q)| q * f[b.trailing_zeros() as usize]).sum::<f64>();
                }
                worst = worst.max((lhs - rhs).abs());
            }
            rec.deviation("matroid.link_expectation_decomposition", format!("link {label}"), worst, IDENTITY_TOLERANCE, Some(format!("{PROBES} probes")));

            let eig = reversible_eigen(&q.kernel)?;
            let lambda2 = eig.values[1];
            let fstar = eig.vector(1);
            let at = |b: usize| q.states.iter().position(|&x| x == b);
            let mut worst: f64 = 0.0;
            for (x, &a) in q.states.iter().enumerate() {
                let (rb, pb) = complex.conditional_level(s | 1 << a, 1)?;
                let avg: f64 = rb
                    .iter()
                    .zip(&pb)
                    .map(|(b, p)| p * fstar[at(b.trailing_zeros() as usize).expect("extension is a state")])
                    .sum();
                worst = worst.max((avg - lambda2 * fstar[x]).abs());
            }
            rec.deviation("matroid.second_eigenvector_average", format!("link {label}"), worst, MULTISET_TOLERANCE, None);
        }
    }
    Ok(())
}

fn dirichlet_decomposition(rec: &mut Recorder, complex: &WeightedComplex, m: &Matroid, r: usize) -> Result<()> {
    let mut rnd = rec.rng("matroid.link_dirichlet_decomposition", 0);
    for k in 0..=r - 3 {
        let faces = complex.level(k)?.faces.clone();
        for s in faces {
            let q = complex.local_walk(s)?;
            let children = q
                .states
                .iter()
                .map(|&a| complex.local_walk(s | 1 << a))
                .collect::<Result<Vec<_>>>()?;
            let pi = q.kernel.stationary.clone().expect("local walks are reversible");
            let mut worst: f64 = 0.0;
            for _ in 0..PROBES {
                let f = probe(&mut rnd, m.ground_size());
                let lhs = dirichlet(&q.kernel, &q.states.iter().map(|&a| f[a]).collect::<Vec<_>>())?;
                let mut rhs = 0.0;
                for (x, c) in children.iter().enumerate() {
                    let fc: Vec<f64> = c.states.iter().map(|&b| f[b]).collect();
                    rhs += pi[x] * dirichlet(&c.kernel, &fc)?;
                }
                worst = worst.max((lhs - rhs).abs());
            }
            rec.deviation("matroid.link_dirichlet_decomposition", format!("link {}", set_label(s)), worst, IDENTITY_TOLERANCE, Some(format!("{PROBES} probes")));
        }
    }
    Ok(())
}

/// Graph families for sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphFamily {
    Path { sizes: Vec<usize> },
    Cycle { sizes: Vec<usize> },
    Clique { sizes: Vec<usize> },
    Empty { sizes: Vec<usize> },
    ErdosRenyi { n: usize, p: f64, count: u64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub graphs: Vec<GraphFamily>,
    /// Activities as rational strings such as "1/2".
    #[serde(default)]
    pub lambdas: Vec<String>,
    #[serde(default)]
    pub matroids: Vec<MatroidSpec>,
}

impl SweepConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            Error::Parse(format!("sweep config at line {} column {}: {e}", e.line(), e.column()))
        })
    }
}

/// Everything needed to rerun one failing instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replay {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub graph: Option<serde_json::Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matroid: Option<MatroidSpec>,
    pub seed: u64,
    pub failed_checks: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub instances: usize,
    pub passed: usize,
    pub failed: usize,
    pub reports: Vec<SuiteReport>,
    pub failures: Vec<Replay>,
}

/// Deterministic G(n, p) drawn from stream `index` of `seed`.
pub fn erdos_renyi(n: usize, p: f64, seed: u64, index: u64) -> Result<Graph> {
    let mut r = rng::stream(seed, index);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if r.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::new(n, &edges)
}

/// Expands the configured families into concrete instances in order.
pub fn sweep_graphs(config: &SweepConfig) -> Result<Vec<Graph>> {
    let mut out = Vec::new();
    let mut er_index = 0u64;
    for fam in &config.graphs {
        match fam {
            GraphFamily::Path { sizes } => out.extend(sizes.iter().map(|&n| Graph::path(n))),
            GraphFamily::Cycle { sizes } => out.extend(sizes.iter().map(|&n| Graph::cycle(n))),
            GraphFamily::Clique { sizes } => out.extend(sizes.iter().map(|&n| Graph::complete(n))),
            GraphFamily::Empty { sizes } => out.extend(sizes.iter().map(|&n| Graph::empty(n))),
            GraphFamily::ErdosRenyi { n, p, count } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidInput(format!("edge probability {p} outside [0,1]")));
                }
                for _ in 0..*count {
                    out.push(erdos_renyi(*n, *p, config.seed, er_index)?);
                    er_index += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Runs the spin suite on every (graph, λ) pair and the matroid suite on
/// every listed matroid.
pub fn sweep(config: &SweepConfig, caps: &Caps) -> Result<SweepOutcome> {
    let lambdas: Vec<(String, BigRational)> = config
        .lambdas
        .iter()
        .map(|s| Ok((s.clone(), parse_rational(s)?)))
        .collect::<Result<_>>()?;
    let graphs = sweep_graphs(config)?;
    let mut jobs: Vec<(Graph, String, BigRational)> = Vec::new();
    for g in &graphs {
        for (label, l) in &lambdas {
            jobs.push((g.clone(), label.clone(), l.clone()));
        }
    }
    let seed = config.seed;
    let spin: Vec<(SuiteReport, Replay)> = jobs
        .par_iter()
        .map(|(g, label, l)| {
            let sys = SpinSystem::build_hardcore(g, l, caps)?;
            let mut report = run_spin_suite(&sys, seed, caps)?;
            report.subject = format!("hard-core λ={label} graph={}", g.to_json());
            let replay = Replay {
                graph: serde_json::from_str(&g.to_json()).ok(),
                lambda: Some(label.clone()),
                matroid: None,
                seed,
                failed_checks: report.failures().map(|c| format!("{} [{}]", c.name, c.instance)).collect(),
            };
            Ok((report, replay))
        })
        .collect::<Result<_>>()?;
    let mats: Vec<(SuiteReport, Replay)> = config
        .matroids
        .par_iter()
        .map(|spec| {
            let m = spec.build()?;
            let mut report = run_matroid_suite(&m, seed, caps)?;
            report.subject = spec.to_json();
            let replay = Replay {
                graph: None,
                lambda: None,
                matroid: Some(spec.clone()),
                seed,
                failed_checks: report.failures().map(|c| format!("{} [{}]", c.name, c.instance)).collect(),
            };
            Ok((report, replay))
        })
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (rep, replay) in spin.into_iter().chain(mats) {
        if !rep.pass {
            failures.push(replay);
        }
        reports.push(rep);
    }
    Ok(SweepOutcome {
        instances: reports.len(),
        passed: reports.len() - failures.len(),
        failed: failures.len(),
        reports,
        failures,
    })
}

/// Number of (graph, λ) instances a config expands to, without running it.
pub fn sweep_size(config: &SweepConfig) -> Result<usize> {
    Ok(sweep_graphs(config)?.len() * config.lambdas.len() + config.matroids.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::Graph;

    fn hardcore(g: &Graph, l: &str) -> SpinSystem {
        SpinSystem::build_hardcore(g, &parse_rational(l).unwrap(), &Caps::default()).unwrap()
    }

    fn assert_all_pass(r: &SuiteReport) {
        let bad: Vec<_> = r.failures().map(|c| format!("{} [{}] {:?} {:?}", c.name, c.instance, c.margin, c.notes)).collect();
        assert!(bad.is_empty(), "{}: {bad:#?}", r.subject);
    }

    #[test]
    fn edge_suite_passes_and_covers_registry() {
        let sys = hardcore(&Graph::path(2), "1");
        let r = run_spin_suite(&sys, 7, &Caps::default()).unwrap();
        assert_all_pass(&r);
        let names: std::collections::BTreeSet<&str> = SPIN_CHECKS.iter().copied().collect();
        assert_eq!(r.names(), names);
        let spec = r.checks.iter().find(|c| c.name == "levels.local_walk_spectrum").unwrap();
        let Some(Value::Multiset(lhs)) = &spec.lhs else { panic!() };
        let mut expected: Vec<f64> = vec![1.0, 0.5, -0.5, -1.0];
        let mut got = lhs.clone();
        got.sort_by(|a, b| b.total_cmp(a));
        expected.sort_by(|a, b| b.total_cmp(a));
        assert!(multiset_deviation(&got, &expected).unwrap() < 1e-10);
    }

    #[test]
    fn product_and_cycle_suites_pass() {
        let r = run_spin_suite(&hardcore(&Graph::empty(3), "1"), 1, &Caps::default()).unwrap();
        assert_all_pass(&r);
        let eta = r.checks.iter().find(|c| c.name == "influence.eta_consistency").unwrap();
        assert_eq!(eta.lhs, Some(Value::Scalar(0.0)));
        for l in ["1/2", "1", "2"] {
            let r = run_spin_suite(&hardcore(&Graph::cycle(5), l), 3, &Caps::default()).unwrap();
            assert_all_pass(&r);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let sys = hardcore(&Graph::path(3), "1");
        let a = run_spin_suite(&sys, 11, &Caps::default()).unwrap();
        let b = run_spin_suite(&sys, 11, &Caps::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn skipped_checks_carry_reasons() {
        let r = run_spin_suite(&hardcore(&Graph::path(4), "2"), 1, &Caps::default()).unwrap();
        for c in &r.checks {
            if let Some(reason) = &c.skipped {
                assert!(!reason.is_empty());
                assert!(c.pass);
            }
        }
    }

    #[test]
    fn matroid_suites() {
        let caps = Caps::default();
        let tri = Matroid::graphic(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let r = run_matroid_suite(&tri, 1, &caps).unwrap();
        assert_all_pass(&r);
        let names: std::collections::BTreeSet<&str> = MATROID_CHECKS.iter().copied().collect();
        let k4 = Matroid::graphic(4, &[(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let r4 = run_matroid_suite(&k4, 1, &caps).unwrap();
        assert_all_pass(&r4);
        assert_eq!(r4.names(), names);
        assert!(r4.checks.iter().filter(|c| c.skipped.is_some()).count() == 0);
        let u = Matroid::uniform(4, 2).unwrap();
        assert_all_pass(&run_matroid_suite(&u, 1, &caps).unwrap());
        let bad = Matroid::explicit_unchecked(3, &[vec![0], vec![1, 2]]).unwrap();
        let rb = run_matroid_suite(&bad, 1, &caps).unwrap();
        assert!(!rb.pass);
        assert_eq!(rb.failed, 1);
    }

    #[test]
    fn sweeps() {
        let caps = Caps::default();
        let empty = sweep(&SweepConfig::default(), &caps).unwrap();
        assert_eq!(empty.instances, 0);
        let cfg = SweepConfig::from_json(
            r#"{"seed":5,"graphs":[{"family":"path","sizes":[2,3,4,5]}],"lambdas":["1/2","1","2"]}"#,
        )
        .unwrap();
        let out = sweep(&cfg, &caps).unwrap();
        assert_eq!(out.instances, 12);
        assert_eq!(out.failed, 0, "{:?}", out.failures);
        let er = SweepConfig::from_json(
            r#"{"seed":9,"graphs":[{"family":"erdos_renyi","n":5,"p":0.5,"count":10}],"lambdas":["1"]}"#,
        )
        .unwrap();
        assert_eq!(sweep_size(&er).unwrap(), 10);
        assert_eq!(sweep_graphs(&er).unwrap(), sweep_graphs(&er).unwrap());
    }
}
