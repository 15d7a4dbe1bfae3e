//! Batch driver: run the diagnostic suites over a corpus and emit a report.
//!
//! [`run`] walks the instances in id order, executes the suites selected by
//! the [`Command`], compares every outcome against the expectations pinned on
//! the reference points, and assembles a schema-versioned [`Report`] that
//! renders as JSON or as a human-readable table.
//!
//! All randomness is derived from the configured seed through per-instance
//! sub-seeds, so adding or removing an instance never shifts another
//! instance's sample stream and identical `(corpus, config, seed)` inputs
//! render byte-identical reports. Wall-clock timings are opt-in for the same
//! reason.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::cones::{self, ConeBundle, EstimatorOptions};
use crate::corpus::{CorpusInstance, Expectation, ExpectedValue, InstancePayload, ReferencePoint};
use crate::deriv;
use crate::diagnostics::{self, Consensus, DiagnosticVerdict, SemismoothOptions};
use crate::linalg::{self, Mat};
use crate::maps::{SetValuedMap, SmoothMap};
use crate::prox::{self, ProxRegularFunction, TrapezoidSchedule};
use crate::regularity::{self, RegularityVerdict};
use crate::scalar::{fl, Scalar, Tol};
use crate::{Result, VarError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Sampled estimates must stay within this many degrees of a supplied cone.
const SAMPLED_ANGLE_LIMIT_DEG: f64 = 2.0;
/// Comparison slack for expected real numbers and matrix entries.
const VALUE_TOL: f64 = 1e-9;
/// Round-trip residual allowed for the prox inverse identity.
const ROUNDTRIP_TOL: f64 = 1e-9;
/// Relative error allowed between the envelope gradient and finite
/// differences of the envelope.
const ENVELOPE_FD_TOL: f64 = 1e-5;

const DIAGNOSE_SALT: u64 = 0x6469_6167;
const PROX_SALT: u64 = 0x7072_6f78;
const SURVEY_SALT: u64 = 0x7375_7276;

/// Which suites a run executes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Diagnose,
    Regularity,
    Prox,
    Survey,
    All,
}

impl Command {
    pub const NAMES: [&'static str; 5] = ["diagnose", "regularity", "prox", "survey", "all"];

    pub fn parse(name: &str) -> Result<Command> {
        match name {
            "diagnose" => Ok(Command::Diagnose),
            "regularity" => Ok(Command::Regularity),
            "prox" => Ok(Command::Prox),
            "survey" => Ok(Command::Survey),
            "all" => Ok(Command::All),
            other => Err(VarError::Validation(format!(
                "unknown command '{other}', expected one of {}",
                Command::NAMES.join(", ")
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Diagnose => "diagnose",
            Command::Regularity => "regularity",
            Command::Prox => "prox",
            Command::Survey => "survey",
            Command::All => "all",
        }
    }

    fn includes(self, suite: Command) -> bool {
        self == Command::All || self == suite
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunConfig<S> {
    pub seed: u64,
    /// Set-equality tolerance handed to the verdict batteries.
    pub tol_eq: S,
    /// Record wall-clock milliseconds per instance. Off by default because
    /// timing noise would break byte-for-byte report reproducibility.
    pub timings: bool,
}

impl<S: Scalar> Default for RunConfig<S> {
    fn default() -> Self {
        RunConfig { seed: 0, tol_eq: Tol::standard().eq, timings: false }
    }
}

/// One executed check at one reference point.
#[derive(Clone, Debug, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    /// "holds", "fails", "undetermined", "inconsistent", a rendered number
    /// or matrix, or "error: ...".
    pub outcome: String,
    /// Dimensions, witnesses, and distances behind the outcome.
    pub evidence: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected: Option<String>,
    /// Whether the outcome met the expectation; absent when the corpus pins
    /// no value for this check.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PointReport {
    pub at: Vec<f64>,
    pub checks: Vec<CheckOutcome>,
}

#[derive(Clone, Debug, Serialize)]
pub struct InstanceReport {
    pub id: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub millis: Option<u64>,
    pub points: Vec<PointReport>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub instances: usize,
    pub points: usize,
    pub checks: usize,
    pub matched: usize,
    pub mismatched: usize,
    pub errors: usize,
    /// `id @ point :: check` paths whose internal votes disagreed.
    pub inconsistencies: Vec<String>,
    /// `id @ point :: check` paths that missed their pinned expectation.
    pub mismatches: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub instances: Vec<InstanceReport>,
    pub summary: Summary,
}

impl Report {
    /// True when no expectation was missed and no battery was inconsistent;
    /// this is what a zero exit status means.
    pub fn clean(&self) -> bool {
        self.summary.mismatched == 0 && self.summary.inconsistencies.is_empty()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "report schema {} | command {} | seed {}\n",
            self.schema_version, self.command, self.seed
        ));
        for inst in &self.instances {
            match inst.millis {
                Some(ms) => out.push_str(&format!("\n{} ({}, {} ms)\n", inst.id, inst.kind, ms)),
                None => out.push_str(&format!("\n{} ({})\n", inst.id, inst.kind)),
            }
            for point in &inst.points {
                out.push_str(&format!("  at {}\n", render_vec(&point.at)));
                for check in &point.checks {
                    let verdict = match (&check.expected, check.matched) {
                        (Some(e), Some(true)) => format!("  [expected {e}: ok]"),
                        (Some(e), _) => format!("  [expected {e}: MISMATCH]"),
                        _ => String::new(),
                    };
                    out.push_str(&format!(
                        "    {:<24} {}{}\n        {}\n",
                        check.name, check.outcome, verdict, check.evidence
                    ));
                }
            }
        }
        let s = &self.summary;
        out.push_str(&format!(
            "\nsummary: {} instances, {} points, {} checks, {} matched, {} mismatched, {} errors\n",
            s.instances, s.points, s.checks, s.matched, s.mismatched, s.errors
        ));
        if s.mismatches.is_empty() && s.inconsistencies.is_empty() {
            out.push_str("all expectations matched\n");
        }
        for path in &s.inconsistencies {
            out.push_str(&format!("inconsistent: {path}\n"));
        }
        for path in &s.mismatches {
            out.push_str(&format!("mismatch: {path}\n"));
        }
        out
    }
}

/// Execute the selected suites over the corpus.
pub fn run<S: Scalar>(command: Command, corpus: &[CorpusInstance<S>], config: &RunConfig<S>) -> Report {
    let mut order: Vec<&CorpusInstance<S>> = corpus.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));

    let mut instances = Vec::new();
    let mut summary = Summary::default();
    for inst in order {
        let started = Instant::now();
        let base = sub_seed(config.seed, &inst.id);
        let mut points = Vec::new();
        for (idx, rp) in inst.points.iter().enumerate() {
            let mut checks = Vec::new();
            match &inst.payload {
                InstancePayload::Map(map) => {
                    if command.includes(Command::Diagnose) {
                        let mut rng = point_rng(base ^ DIAGNOSE_SALT, idx);
                        checks.extend(diagnose_point(map, rp, config.tol_eq, &mut rng));
                    }
                    if command.includes(Command::Regularity) {
                        checks.extend(regularity_point(map, rp));
                    }
                    if command.includes(Command::Survey) {
                        let mut rng = point_rng(base ^ SURVEY_SALT, idx);
                        checks.extend(survey_point(map, rp, &mut rng));
                    }
                }
                InstancePayload::Sum { smooth, inner, assembled } => {
                    if command.includes(Command::Diagnose) {
                        let mut rng = point_rng(base ^ DIAGNOSE_SALT, idx);
                        checks.extend(diagnose_point(assembled, rp, config.tol_eq, &mut rng));
                    }
                    if command.includes(Command::Regularity) {
                        checks.extend(sum_point(smooth, inner, rp));
                    }
                    if command.includes(Command::Survey) {
                        let mut rng = point_rng(base ^ SURVEY_SALT, idx);
                        checks.extend(survey_point(assembled, rp, &mut rng));
                    }
                }
                InstancePayload::Prox(phi) => {
                    if command.includes(Command::Prox) {
                        checks.extend(prox_point(phi, rp, base ^ PROX_SALT));
                    }
                }
            }
            tally(&mut summary, &inst.id, rp, &checks);
            points.push(PointReport { at: to_f64_vec(&rp.z), checks });
        }
        summary.instances += 1;
        summary.points += inst.points.len();
        instances.push(InstanceReport {
            id: inst.id.clone(),
            kind: inst.kind_name().to_string(),
            millis: config.timings.then(|| started.elapsed().as_millis() as u64),
            points,
        });
    }
    Report {
        schema_version: REPORT_SCHEMA_VERSION,
        command: command.name().to_string(),
        seed: config.seed,
        instances,
        summary,
    }
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

/// Cone laws, the two consensus batteries, the semismooth* probe, observed
/// dimensions, and the sampled cross-checks for supplied bundles.
fn diagnose_point<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    rp: &ReferencePoint<S>,
    tol: S,
    rng: &mut R,
) -> Vec<CheckOutcome> {
    let mut rows = Vec::new();

    let bundle = match &rp.supplied {
        Some(sc) => Ok(sc.bundle.clone()),
        None => cones::cones_at(map, &rp.z),
    };
    let bundle = match bundle {
        Ok(b) => b,
        Err(e) => {
            for name in ["cone_laws", "strictly_smooth", "strict_proto"] {
                rows.push(make_row(name, rp.expect.get(name), Observed::Error(e.to_string()), String::new()));
            }
            rows.push(semismooth_row(map, rp, rng));
            return rows;
        }
    };

    let violations = bundle.verify(tol);
    rows.push(make_row(
        "cone_laws",
        rp.expect.get("cone_laws"),
        Observed::Flag(violations.is_empty()),
        if violations.is_empty() {
            "inclusion chain, polarity, and paratingent symmetry hold".to_string()
        } else {
            violations.join("; ")
        },
    ));

    let d = match &rp.supplied {
        Some(sc) => deriv::derivative_bundle_from_cones(map.dims(), &bundle, sc.strata.clone()),
        None => match deriv::derivative_bundle(map, &rp.z) {
            Ok(d) => d,
            Err(e) => {
                rows.push(make_row("strict_proto", rp.expect.get("strict_proto"), Observed::Error(e.to_string()), String::new()));
                rows.push(semismooth_row(map, rp, rng));
                return rows;
            }
        },
    };

    let smooth_v = diagnostics::check_strictly_smooth(&bundle, rp.chart_dim, tol);
    rows.push(verdict_row("strictly_smooth", rp, &smooth_v));
    let proto_v = diagnostics::check_strict_proto(&d, rp.chart_dim, tol);
    rows.push(verdict_row("strict_proto", rp, &proto_v));
    rows.push(semismooth_row(map, rp, rng));

    rows.push(dim_row("strict_derivative_dim", rp, &proto_v, "strict_derivative"));
    rows.push(dim_row("coderivative_dim", rp, &proto_v, "coderivative"));
    rows.push(dim_row("paratingent_dim", rp, &smooth_v, "paratingent"));

    if let Some(exp) = rp.expect.get("tangent_dirs") {
        rows.push(tangent_dirs_row(&bundle, exp));
    }
    if rp.supplied.is_some() {
        rows.push(sampled_cones_row(map, rp, &bundle, rng));
    }
    rows
}

fn semismooth_row<S: Scalar, R: Rng>(map: &SetValuedMap<S>, rp: &ReferencePoint<S>, rng: &mut R) -> CheckOutcome {
    match diagnostics::check_semismooth_star(map, &rp.z, &SemismoothOptions::default(), rng) {
        Ok(v) => verdict_row("semismooth_star", rp, &v),
        Err(e) => make_row("semismooth_star", rp.expect.get("semismooth_star"), Observed::Error(e.to_string()), String::new()),
    }
}

fn tangent_dirs_row<S: Scalar>(bundle: &ConeBundle<S>, exp: &Expectation) -> CheckOutcome {
    let dirs = match &exp.value {
        ExpectedValue::Matrix(rows) => rows.clone(),
        _ => Vec::new(),
    };
    let mut outside = Vec::new();
    for dir in &dirs {
        let v: Vec<S> = dir.iter().map(|&x| fl(x)).collect();
        let unit = match linalg::normalized(&v, fl(1e-12)) {
            Some(u) => u,
            None => {
                outside.push(render_vec(dir));
                continue;
            }
        };
        if bundle.tangent.distance(&unit).to_f64().unwrap_or(f64::NAN) > VALUE_TOL {
            outside.push(render_vec(dir));
        }
    }
    let matched = outside.is_empty();
    CheckOutcome {
        name: "tangent_dirs".to_string(),
        outcome: if matched { "holds".to_string() } else { "fails".to_string() },
        evidence: if matched {
            format!("all {} expected directions belong to the tangent cone", dirs.len())
        } else {
            format!("directions outside the tangent cone: {}", outside.join(", "))
        },
        expected: Some(exp.value.to_string()),
        matched: Some(matched),
    }
}

/// Sampled tangent and paratingent directions must fall inside the supplied
/// analytic cones. Curvature bends secants away from the tangent at a rate
/// proportional to the radius, so the base radius is chosen to keep that
/// error well under the angular limit.
fn sampled_cones_row<S: Scalar, R: Rng>(
    map: &SetValuedMap<S>,
    rp: &ReferencePoint<S>,
    bundle: &ConeBundle<S>,
    rng: &mut R,
) -> CheckOutcome {
    let opts = EstimatorOptions { base_radius: fl(0.02), levels: 3, samples_per_level: 32, cluster_angle_deg: 1.0 };
    let sampled = cones::estimate_tangent_dirs(map, &rp.z, &opts, rng)
        .and_then(|t| cones::estimate_paratingent_dirs(map, &rp.z, &opts, rng).map(|p| (t, p)));
    match sampled {
        Ok((t_dirs, p_dirs)) => {
            let t_ang = cones::max_angle_outside(&t_dirs, &bundle.tangent).to_f64().unwrap_or(f64::NAN);
            let p_ang = cones::max_angle_outside(&p_dirs, &bundle.paratingent).to_f64().unwrap_or(f64::NAN);
            let ok = t_ang <= SAMPLED_ANGLE_LIMIT_DEG && p_ang <= SAMPLED_ANGLE_LIMIT_DEG;
            make_row(
                "sampled_cones",
                rp.expect.get("sampled_cones"),
                Observed::Flag(ok),
                format!(
                    "{} tangent dirs within {} deg, {} paratingent dirs within {} deg of the supplied cones (limit {} deg)",
                    t_dirs.len(),
                    render_num(t_ang),
                    p_dirs.len(),
                    render_num(p_ang),
                    render_num(SAMPLED_ANGLE_LIMIT_DEG)
                ),
            )
        }
        Err(e) => make_row("sampled_cones", None, Observed::Error(e.to_string()), String::new()),
    }
}

/// Kernel classification: smsr, mr, smr, and the inverse slope.
fn regularity_point<S: Scalar>(map: &SetValuedMap<S>, rp: &ReferencePoint<S>) -> Vec<CheckOutcome> {
    let verdict = match &rp.supplied {
        Some(sc) => {
            let d = deriv::derivative_bundle_from_cones(map.dims(), &sc.bundle, sc.strata.clone());
            Ok(regularity::regularity_from_derivatives(&d))
        }
        None => regularity::classify_under_strict_proto(map, &rp.z),
    };
    match verdict {
        Ok(v) => regularity_rows(rp, &v),
        Err(e) => regularity_error_rows(rp, &e),
    }
}

/// Classification of `g + G` through the inner map, with the built-in
/// agreement check against the assembled graph.
fn sum_point<S: Scalar>(smooth: &SmoothMap<S>, inner: &SetValuedMap<S>, rp: &ReferencePoint<S>) -> Vec<CheckOutcome> {
    match regularity::classify_sum(smooth, inner, &rp.z) {
        Ok(v) => {
            let mut rows = regularity_rows(rp, &v);
            rows.push(make_row(
                "sum_rule_agreement",
                rp.expect.get("sum_rule_agreement"),
                Observed::Flag(true),
                "sum classification matches the direct classification of the assembled graph".to_string(),
            ));
            rows
        }
        Err(e) => {
            let mut rows = regularity_error_rows(rp, &e);
            rows.push(make_row("sum_rule_agreement", None, Observed::Error(e.to_string()), String::new()));
            rows
        }
    }
}

fn regularity_rows<S: Scalar>(rp: &ReferencePoint<S>, v: &RegularityVerdict<S>) -> Vec<CheckOutcome> {
    let mut rows = Vec::new();
    rows.push(make_row(
        "smsr",
        rp.expect.get("smsr"),
        Observed::Flag(v.strongly_subregular),
        match &v.subregularity_witness {
            Some(w) => format!("direction {} maps to 0 under the graphical derivative", render_vec(&to_f64_vec(w))),
            None => "no nonzero (u, 0) in the graphical derivative graph".to_string(),
        },
    ));
    rows.push(make_row(
        "mr",
        rp.expect.get("mr"),
        Observed::Flag(v.metrically_regular),
        match &v.regularity_witness {
            Some(w) => format!("covector {} maps to 0 under the coderivative", render_vec(&to_f64_vec(w))),
            None => "no nonzero (y*, 0) in the coderivative graph".to_string(),
        },
    ));
    rows.push(make_row(
        "smr",
        rp.expect.get("smr"),
        Observed::Flag(v.strongly_regular),
        if v.strongly_regular {
            "metrically regular with a trivial strict derivative kernel".to_string()
        } else {
            "metric regularity or the strict derivative kernel condition fails".to_string()
        },
    ));
    let slope_obs = match &v.inverse_slope {
        Some(c) => Observed::Matrix(mat_to_rows(c)),
        None => Observed::Note("none".to_string()),
    };
    rows.push(make_row(
        "inverse_slope",
        rp.expect.get("inverse_slope"),
        slope_obs,
        if v.inverse_slope.is_some() {
            "graphical derivative graph is rge (C, I), coderivative graph is rge (C^T, I)".to_string()
        } else {
            "no single-valued Lipschitz inverse localization certified".to_string()
        },
    ));
    rows.push(make_row(
        "regularity_equivalence",
        rp.expect.get("regularity_equivalence"),
        Observed::Note(if v.equivalence_applicable { "applicable".to_string() } else { "not applicable".to_string() }),
        format!(
            "smsr {}, mr {}, smr {}{}",
            v.strongly_subregular,
            v.metrically_regular,
            v.strongly_regular,
            if v.equivalence_applicable { "; the three properties coincide here" } else { "" }
        ),
    ));
    rows
}

fn regularity_error_rows<S: Scalar>(rp: &ReferencePoint<S>, e: &VarError) -> Vec<CheckOutcome> {
    ["smsr", "mr", "smr", "inverse_slope"]
        .iter()
        .map(|name| make_row(name, rp.expect.get(*name), Observed::Error(e.to_string()), String::new()))
        .collect()
}

/// Prox round-trip, envelope gradient, the subgradient battery, and the two
/// trapezoid decay reports.
fn prox_point<S: Scalar>(phi: &ProxRegularFunction<S>, rp: &ReferencePoint<S>, seed: u64) -> Vec<CheckOutcome> {
    let mut rows = Vec::new();
    let lambda = phi.default_lambda();

    let loc = match prox::attentive_localization(phi, lambda) {
        Ok(loc) => loc,
        Err(e) => {
            for name in
                ["prox_roundtrip", "envelope_gradient", "strict_proto_subgrad", "one_point_decays", "two_point_decays", "two_point_shell_max"]
            {
                rows.push(make_row(name, rp.expect.get(name), Observed::Error(e.to_string()), String::new()));
            }
            return rows;
        }
    };
    let center = loc.prox_center();
    let window = loc.window_radius;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    rows.push(match roundtrip_residual(phi, lambda, &center, window, 40, &mut rng) {
        Ok(worst) => make_row(
            "prox_roundtrip",
            rp.expect.get("prox_roundtrip"),
            Observed::Flag(worst <= ROUNDTRIP_TOL),
            format!("max inverse-identity residual {} over 40 window samples (limit {})", render_num(worst), render_num(ROUNDTRIP_TOL)),
        ),
        Err(e) => make_row("prox_roundtrip", rp.expect.get("prox_roundtrip"), Observed::Error(e.to_string()), String::new()),
    });

    rows.push(match envelope_fd_error(phi, lambda, &center, window) {
        Ok(worst) => make_row(
            "envelope_gradient",
            rp.expect.get("envelope_gradient"),
            Observed::Flag(worst <= ENVELOPE_FD_TOL),
            format!("max relative gap to central differences {} (limit {})", render_num(worst), render_num(ENVELOPE_FD_TOL)),
        ),
        Err(e) => make_row("envelope_gradient", rp.expect.get("envelope_gradient"), Observed::Error(e.to_string()), String::new()),
    });

    rows.push(match prox::check_strict_proto_subgrad(phi, lambda) {
        Ok(v) => verdict_row("strict_proto_subgrad", rp, &v),
        Err(e) => make_row("strict_proto_subgrad", rp.expect.get("strict_proto_subgrad"), Observed::Error(e.to_string()), String::new()),
    });

    let schedule = TrapezoidSchedule::default();
    let mut two_point_max: Option<f64> = None;
    for (name, report) in [
        ("one_point_decays", prox::trapezoid_one_point(phi, lambda, &schedule, seed)),
        ("two_point_decays", prox::trapezoid_two_point(phi, lambda, &schedule, seed)),
    ] {
        rows.push(match report {
            Ok(r) => {
                let maxima = to_f64_vec(&r.shell_maxima);
                if name == "two_point_decays" {
                    two_point_max = Some(maxima.iter().cloned().fold(0.0, f64::max));
                }
                make_row(
                    name,
                    rp.expect.get(name),
                    Observed::Flag(r.decays),
                    format!(
                        "shell maxima {} over radii {}, fitted slope {}, hypothesis {}",
                        render_vec(&maxima),
                        render_vec(&to_f64_vec(&r.shell_radii)),
                        render_num(r.slope.to_f64().unwrap_or(f64::NAN)),
                        if r.hypothesis_verified { "verified" } else { "unverified" }
                    ),
                )
            }
            Err(e) => make_row(name, rp.expect.get(name), Observed::Error(e.to_string()), String::new()),
        });
    }
    rows.push(match two_point_max {
        Some(worst) => make_row(
            "two_point_shell_max",
            rp.expect.get("two_point_shell_max"),
            Observed::Value(worst),
            "largest two-point shell maximum across all shells".to_string(),
        ),
        None => make_row("two_point_shell_max", rp.expect.get("two_point_shell_max"), Observed::Error("two-point report unavailable".to_string()), String::new()),
    });
    rows
}

/// How generically strict proto-differentiability holds near the point.
fn survey_point<S: Scalar, R: Rng>(map: &SetValuedMap<S>, rp: &ReferencePoint<S>, rng: &mut R) -> Vec<CheckOutcome> {
    let row = match diagnostics::ae_strict_proto_survey(map, &rp.z, fl(0.25), 40, rng) {
        Ok(rep) => {
            let exceptions = if rep.exceptions.is_empty() {
                "no exceptions".to_string()
            } else {
                format!(
                    "exceptions near {}",
                    rep.exceptions.iter().map(|z| render_vec(&to_f64_vec(z))).collect::<Vec<_>>().join(", ")
                )
            };
            make_row(
                "ae_strict_proto",
                rp.expect.get("ae_strict_proto"),
                Observed::Note(format!("{}/{} hold", rep.holding, rep.evaluated)),
                exceptions,
            )
        }
        Err(e) => make_row("ae_strict_proto", rp.expect.get("ae_strict_proto"), Observed::Error(e.to_string()), String::new()),
    };
    vec![row]
}

// ---------------------------------------------------------------------------
// Prox helpers
// ---------------------------------------------------------------------------

/// Largest residual of `P_lambda(x + lambda x*) = x` over graph points reached
/// through the prox parametrization of window samples.
fn roundtrip_residual<S: Scalar, R: Rng>(
    phi: &ProxRegularFunction<S>,
    lambda: S,
    center: &[S],
    window: S,
    count: usize,
    rng: &mut R,
) -> Result<f64> {
    let mut worst = 0.0f64;
    for _ in 0..count {
        let dir = unit_dir(center.len(), rng);
        let r = window * fl(0.9 * rng.gen::<f64>());
        let u = linalg::axpy(center, r, &dir);
        let p = prox::prox_map(phi, lambda, &u)?;
        let xstar = linalg::scale_vec(&linalg::sub_vec(&u, &p), S::one() / lambda);
        let back = linalg::axpy(&p, lambda, &xstar);
        let p2 = prox::prox_map(phi, lambda, &back)?;
        worst = worst.max(linalg::dist(&p2, &p).to_f64().unwrap_or(f64::NAN));
    }
    Ok(worst)
}

/// Largest relative gap between the envelope gradient and central finite
/// differences of the envelope over axis probes inside the window.
fn envelope_fd_error<S: Scalar>(phi: &ProxRegularFunction<S>, lambda: S, center: &[S], window: S) -> Result<f64> {
    let n = center.len();
    let mut probes = vec![center.to_vec()];
    for i in 0..n {
        for scale in [-0.6, -0.3, 0.3, 0.6] {
            let mut u = center.to_vec();
            u[i] = u[i] + window * fl(scale);
            probes.push(u);
        }
    }
    let mut worst = 0.0f64;
    for u in &probes {
        let grad = prox::envelope_gradient(phi, lambda, u)?;
        let h = fl::<S>(1e-5) * (S::one() + linalg::norm(u));
        let mut fd = Vec::with_capacity(n);
        for i in 0..n {
            let mut up = u.clone();
            let mut dn = u.clone();
            up[i] = up[i] + h;
            dn[i] = dn[i] - h;
            let hi = prox::moreau_envelope(phi, lambda, &up)?;
            let lo = prox::moreau_envelope(phi, lambda, &dn)?;
            fd.push((hi - lo) / (fl::<S>(2.0) * h));
        }
        let rel = linalg::dist(&grad, &fd) / (S::one() + linalg::norm(&grad));
        worst = worst.max(rel.to_f64().unwrap_or(f64::NAN));
    }
    Ok(worst)
}

// ---------------------------------------------------------------------------
// Row construction
// ---------------------------------------------------------------------------

enum Observed {
    Verdict(Consensus),
    Flag(bool),
    Dim(Option<usize>),
    Value(f64),
    Matrix(Vec<Vec<f64>>),
    Note(String),
    Error(String),
}

fn outcome_string(obs: &Observed) -> String {
    match obs {
        Observed::Verdict(Consensus::Holds) | Observed::Flag(true) => "holds".to_string(),
        Observed::Verdict(Consensus::Fails) | Observed::Flag(false) => "fails".to_string(),
        Observed::Verdict(Consensus::Undetermined) => "undetermined".to_string(),
        Observed::Verdict(Consensus::Inconsistent) => "inconsistent".to_string(),
        Observed::Dim(Some(d)) => d.to_string(),
        Observed::Dim(None) => "not a subspace".to_string(),
        Observed::Value(v) => render_num(*v),
        Observed::Matrix(m) => render_matf(m),
        Observed::Note(s) => s.clone(),
        Observed::Error(e) => format!("error: {e}"),
    }
}

fn meets(expected: &ExpectedValue, obs: &Observed) -> bool {
    match (expected, obs) {
        (ExpectedValue::Bool(b), Observed::Verdict(c)) => match c {
            Consensus::Holds => *b,
            Consensus::Fails => !*b,
            _ => false,
        },
        (ExpectedValue::Bool(b), Observed::Flag(f)) => f == b,
        (ExpectedValue::Dim(d), Observed::Dim(Some(o))) => o == d,
        (ExpectedValue::Real(r), Observed::Value(v)) => (v - r).abs() <= VALUE_TOL,
        (ExpectedValue::Matrix(e), Observed::Matrix(a)) => {
            e.len() == a.len()
                && e.iter().zip(a).all(|(er, ar)| {
                    er.len() == ar.len()
                        && er.iter().zip(ar).all(|(ev, av)| (av - ev).abs() <= VALUE_TOL * (1.0 + ev.abs()))
                })
        }
        _ => false,
    }
}

fn make_row(name: &str, expect: Option<&Expectation>, obs: Observed, evidence: String) -> CheckOutcome {
    CheckOutcome {
        name: name.to_string(),
        outcome: outcome_string(&obs),
        evidence,
        expected: expect.map(|e| e.value.to_string()),
        matched: expect.map(|e| meets(&e.value, &obs)),
    }
}

fn verdict_row<S: Scalar>(name: &str, rp: &ReferencePoint<S>, v: &DiagnosticVerdict) -> CheckOutcome {
    make_row(name, rp.expect.get(name), Observed::Verdict(v.consensus), vote_summary(v))
}

fn dim_row<S: Scalar>(name: &str, rp: &ReferencePoint<S>, v: &DiagnosticVerdict, key: &str) -> CheckOutcome {
    let dim = v.observed_dims.iter().find(|(k, _)| *k == key).map(|(_, d)| *d);
    make_row(
        name,
        rp.expect.get(name),
        Observed::Dim(dim),
        match dim {
            Some(d) => format!("{key} graph is a subspace of dimension {d}"),
            None => format!("{key} graph is not a subspace"),
        },
    )
}

fn vote_summary(v: &DiagnosticVerdict) -> String {
    let mut parts: Vec<String> = v
        .votes
        .iter()
        .map(|c| {
            let mark = if !c.applicable { "abstains" } else if c.holds { "holds" } else { "fails" };
            format!("{} {} ({})", c.name, mark, c.detail)
        })
        .collect();
    for (name, dim) in &v.observed_dims {
        parts.push(format!("dim {name} = {dim}"));
    }
    parts.join("; ")
}

fn tally<S: Scalar>(summary: &mut Summary, id: &str, rp: &ReferencePoint<S>, checks: &[CheckOutcome]) {
    for check in checks {
        summary.checks += 1;
        match check.matched {
            Some(true) => summary.matched += 1,
            Some(false) => {
                summary.mismatched += 1;
                summary.mismatches.push(check_path(id, rp, &check.name));
            }
            None => {}
        }
        if check.outcome.starts_with("error: ") {
            summary.errors += 1;
        }
        if check.outcome == "inconsistent" {
            summary.inconsistencies.push(check_path(id, rp, &check.name));
        }
    }
}

fn check_path<S: Scalar>(id: &str, rp: &ReferencePoint<S>, name: &str) -> String {
    format!("{} @ {} :: {}", id, render_vec(&to_f64_vec(&rp.z)), name)
}

// ---------------------------------------------------------------------------
// Rendering and seeding
// ---------------------------------------------------------------------------

fn render_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if (1e-4..1e7).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn render_vec(xs: &[f64]) -> String {
    let body: Vec<String> = xs.iter().map(|&x| render_num(x)).collect();
    format!("({})", body.join(", "))
}

fn render_matf(rows: &[Vec<f64>]) -> String {
    let body: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|&x| render_num(x)).collect::<Vec<_>>().join(", ")))
        .collect();
    format!("[{}]", body.join(", "))
}

fn to_f64_vec<S: Scalar>(xs: &[S]) -> Vec<f64> {
    xs.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect()
}

fn mat_to_rows<S: Scalar>(m: &Mat<S>) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|i| to_f64_vec(m.row(i))).collect()
}

/// FNV-1a over the instance id, folded with the run seed.
fn sub_seed(seed: u64, id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h ^ seed
}

fn point_rng(base: u64, idx: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(base ^ (idx as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

fn unit_dir<S: Scalar, R: Rng>(n: usize, rng: &mut R) -> Vec<S> {
    loop {
        let v: Vec<S> = (0..n).map(|_| fl(rng.gen::<f64>() * 2.0 - 1.0)).collect();
        let nrm = linalg::norm(&v);
        if nrm > fl(0.1) {
            return linalg::scale_vec(&v, S::one() / nrm);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus;

    #[test]
    fn command_names_parse_and_unknown_names_are_rejected() {
        for name in Command::NAMES {
            assert_eq!(Command::parse(name).unwrap().name(), name);
        }
        let err = Command::parse("audit").unwrap_err();
        assert!(matches!(err, VarError::Validation(_)), "got {err:?}");
        assert!(err.to_string().contains("audit"));
    }

    #[test]
    fn builtin_corpus_matches_every_expectation() {
        let corpus = corpus::builtin::<f64>();
        let report = run(Command::All, &corpus, &RunConfig::default());
        assert!(
            report.clean(),
            "mismatches: {:?}, inconsistencies: {:?}",
            report.summary.mismatches,
            report.summary.inconsistencies
        );
        assert_eq!(report.summary.mismatched, 0);
        assert!(report.summary.matched > 100, "expectations exercised: {}", report.summary.matched);
        let expected_total: usize = corpus.iter().flat_map(|i| i.points.iter()).map(|p| p.expect.len()).sum();
        assert_eq!(
            report.summary.matched, expected_total,
            "every pinned expectation is consumed by exactly one check"
        );
    }

    #[test]
    fn reports_are_byte_identical_for_the_same_seed() {
        let corpus = corpus::builtin::<f64>();
        let a = run(Command::All, &corpus, &RunConfig::default());
        let b = run(Command::All, &corpus, &RunConfig::default());
        assert_eq!(a.to_json(), b.to_json());
        assert_eq!(a.to_text(), b.to_text());
    }

    #[test]
    fn check_names_are_unique_per_point_and_instances_are_ordered() {
        let corpus = corpus::builtin::<f64>();
        let report = run(Command::All, &corpus, &RunConfig::default());
        let ids: Vec<&String> = report.instances.iter().map(|i| &i.id).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
        for inst in &report.instances {
            for point in &inst.points {
                let mut names: Vec<&String> = point.checks.iter().map(|c| &c.name).collect();
                let before = names.len();
                names.sort();
                names.dedup();
                assert_eq!(before, names.len(), "duplicate check at {} {:?}", inst.id, point.at);
            }
        }
    }

    #[test]
    fn corrupted_expectations_surface_as_mismatches() {
        let mut corpus = corpus::builtin::<f64>();
        let inst = corpus.iter_mut().find(|i| i.id == "linear_2x").unwrap();
        inst.points[0].expect.insert(
            "mr".to_string(),
            Expectation { value: ExpectedValue::Bool(false), basis: "negative control".to_string() },
        );
        let report = run(Command::Regularity, &corpus, &RunConfig::default());
        assert!(!report.clean());
        assert_eq!(report.summary.mismatched, 1);
        assert!(report.summary.mismatches[0].contains("linear_2x"));
        assert!(report.summary.mismatches[0].contains("mr"));
        assert!(report.to_text().contains("MISMATCH"));
    }

    #[test]
    fn json_report_is_valid_and_versioned() {
        let corpus = corpus::builtin::<f64>();
        let report = run(Command::Prox, &corpus, &RunConfig { seed: 7, ..RunConfig::default() });
        let value: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
        assert_eq!(value["schema_version"], 1);
        assert_eq!(value["command"], "prox");
        assert_eq!(value["seed"], 7);
        assert!(value["instances"].as_array().unwrap().len() >= 8);
    }

    #[test]
    fn timings_are_absent_by_default_and_present_on_request() {
        let corpus = corpus::builtin::<f64>();
        let quiet = run(Command::Regularity, &corpus, &RunConfig::default());
        assert!(quiet.instances.iter().all(|i| i.millis.is_none()));
        assert!(!quiet.to_json().contains("millis"));
        let timed = run(Command::Regularity, &corpus, &RunConfig { timings: true, ..RunConfig::default() });
        assert!(timed.instances.iter().all(|i| i.millis.is_some()));
    }
}
