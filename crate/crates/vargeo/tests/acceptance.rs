//! Acceptance suite: one test per release criterion, each printing a
//! `criterion N (name): PASS|FAIL` line. Tolerances and runtime budgets are
//! pinned here and nowhere else.

use std::panic;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vargeo::cones::{self, ConeBundle, EstimatorOptions};
use vargeo::corpus::{self, CorpusInstance, InstancePayload, ReferencePoint};
use vargeo::deriv::{self, DerivativeBundle};
use vargeo::diagnostics::{self, chart_point, extract_chart, Consensus, SemismoothOptions};
use vargeo::harness::{self, Command, RunConfig};
use vargeo::linalg;
use vargeo::maps::SetValuedMap;
use vargeo::prox::{self, TrapezoidSchedule};
use vargeo::regularity::{self, RegularityVerdict};
use vargeo::scalar::Tol;
use vargeo::subspace::{SplitDims, Subspace};

const EQ_TOL: f64 = 1e-8;

fn criterion(n: usize, name: &str, body: impl FnOnce()) {
    let result = panic::catch_unwind(panic::AssertUnwindSafe(body));
    println!("criterion {n} ({name}): {}", if result.is_ok() { "PASS" } else { "FAIL" });
    if let Err(cause) = result {
        panic::resume_unwind(cause);
    }
}

/// The graph-backed map of an instance: the map itself, or the assembled sum.
fn graph_map(inst: &CorpusInstance<f64>) -> Option<&SetValuedMap<f64>> {
    match &inst.payload {
        InstancePayload::Map(map) => Some(map),
        InstancePayload::Sum { assembled, .. } => Some(assembled),
        InstancePayload::Prox(_) => None,
    }
}

fn point_bundles(map: &SetValuedMap<f64>, rp: &ReferencePoint<f64>) -> (ConeBundle<f64>, DerivativeBundle<f64>) {
    match &rp.supplied {
        Some(sc) => {
            let d = deriv::derivative_bundle_from_cones(map.dims(), &sc.bundle, sc.strata.clone());
            (sc.bundle.clone(), d)
        }
        None => (
            cones::cones_at(map, &rp.z).expect("corpus points sit on their graphs"),
            deriv::derivative_bundle(map, &rp.z).expect("corpus points sit on their graphs"),
        ),
    }
}

fn observed_dim(v: &diagnostics::DiagnosticVerdict, key: &str) -> Option<usize> {
    v.observed_dims.iter().find(|(k, _)| *k == key).map(|(_, d)| *d)
}

#[test]
fn criterion_01_subspace_adjoint_laws() {
    criterion(1, "subspace adjoint laws", || {
        let started = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let n = rng.gen_range(1..=4usize);
            let m = rng.gen_range(1..=4usize);
            let dims = SplitDims::new(n, m);
            let total = n + m;
            let l1 = Subspace::<f64>::random(total, rng.gen_range(0..=total), &mut rng);
            let l2 = Subspace::<f64>::random(total, rng.gen_range(0..=total), &mut rng);

            let a1 = l1.adjoint(dims);
            let a2 = l2.adjoint(dims);
            assert_eq!(a1.dim(), total - l1.dim(), "adjoint dimension law");
            assert!(a1.adjoint(dims.swapped()).distance(&l1) <= EQ_TOL, "adjoint involution");
            assert!((a1.distance(&a2) - l1.distance(&l2)).abs() <= EQ_TOL, "adjoint isometry");
        }
        assert!(started.elapsed().as_secs_f64() < 5.0, "runtime budget");
    });
}

#[test]
fn criterion_02_cone_bundle_laws_across_the_corpus() {
    criterion(2, "cone bundle laws across the corpus", || {
        let started = Instant::now();
        let corpus = corpus::builtin::<f64>();
        let tol = Tol::standard().eq;
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for inst in &corpus {
            if let Some(map) = graph_map(inst) {
                for rp in &inst.points {
                    let (bundle, _) = point_bundles(map, rp);
                    let bad = bundle.verify(tol);
                    assert!(bad.is_empty(), "{} at {:?}: {:?}", inst.id, rp.z, bad);
                    if rp.supplied.is_some() {
                        let opts = EstimatorOptions {
                            base_radius: 0.02,
                            levels: 3,
                            samples_per_level: 32,
                            cluster_angle_deg: 1.0,
                        };
                        let t = cones::estimate_tangent_dirs(map, &rp.z, &opts, &mut rng).unwrap();
                        let p = cones::estimate_paratingent_dirs(map, &rp.z, &opts, &mut rng).unwrap();
                        assert!(cones::max_angle_outside(&t, &bundle.tangent) <= 2.0, "{}", inst.id);
                        assert!(cones::max_angle_outside(&p, &bundle.paratingent) <= 2.0, "{}", inst.id);
                    }
                }
            } else if let InstancePayload::Prox(phi) = &inst.payload {
                let loc = prox::attentive_localization(phi, phi.default_lambda()).unwrap();
                let bundle = cones::cones_at(&loc.as_map, &loc.center).unwrap();
                assert!(bundle.verify(tol).is_empty(), "{}", inst.id);
            }
        }
        assert!(started.elapsed().as_secs_f64() < 30.0, "runtime budget");
    });
}

#[test]
fn criterion_03_crossing_parabolas_fill_the_paratingent_plane() {
    criterion(3, "crossing parabolas fill the paratingent plane", || {
        let corpus = corpus::builtin::<f64>();
        let inst = corpus.iter().find(|i| i.id == "pm_square").unwrap();
        let map = graph_map(inst).unwrap();
        let rp = &inst.points[0];
        let sc = rp.supplied.as_ref().unwrap();
        let tol = Tol::standard().eq;

        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let dirs =
            cones::estimate_paratingent_dirs(map, &rp.z, &EstimatorOptions::default(), &mut rng).unwrap();
        let mut angles: Vec<f64> = dirs.iter().map(|d| d[1].atan2(d[0])).collect();
        angles.sort_by(f64::total_cmp);
        let mut gap: f64 = 0.0;
        for i in 0..angles.len() {
            let next = if i + 1 == angles.len() {
                angles[0] + std::f64::consts::TAU
            } else {
                angles[i + 1]
            };
            gap = gap.max(next - angles[i]);
        }
        assert!(
            gap.to_degrees() < 10.0,
            "sampled paratingent leaves a {:.2} degree gap on the unit circle",
            gap.to_degrees()
        );

        let x_axis = Subspace::from_cols(2, &[vec![1.0, 0.0]]);
        let tangent = sc.bundle.tangent.is_subspace(tol).expect("tangent is a line");
        assert!(tangent.distance(&x_axis) <= tol, "tangent cone is the horizontal axis");
        let clarke = vargeo::poly::ConeUnion::from_cone(sc.bundle.clarke.clone())
            .is_subspace(tol)
            .expect("clarke tangent is a line");
        assert!(clarke.distance(&x_axis) <= tol, "clarke tangent matches the tangent");

        let v = diagnostics::check_strictly_smooth(&sc.bundle, rp.chart_dim, tol);
        assert_eq!(v.consensus, Consensus::Fails);
        assert_eq!(observed_dim(&v, "paratingent"), Some(2), "paratingent is the full plane");
        let vote = v.votes.iter().find(|c| c.name == "paratingent_equals_clarke_tangent").unwrap();
        assert!(vote.applicable && !vote.holds, "the paratingent comparison is the failing vote");
    });
}

#[test]
fn criterion_04_battery_consistency_and_dimension_identities() {
    criterion(4, "battery consistency and dimension identities", || {
        let corpus = corpus::builtin::<f64>();
        let tol = Tol::standard().eq;
        let mut instances = 0;
        let mut points = 0;
        for inst in &corpus {
            let Some(map) = graph_map(inst) else { continue };
            instances += 1;
            for rp in &inst.points {
                points += 1;
                let (_, d) = point_bundles(map, rp);
                let v = diagnostics::check_strict_proto(&d, rp.chart_dim, tol);
                assert_ne!(v.consensus, Consensus::Inconsistent, "{} at {:?}", inst.id, rp.z);
                if v.consensus == Consensus::Holds {
                    let total = map.dims().total();
                    let strict = observed_dim(&v, "strict_derivative").expect("strict graph is a subspace");
                    let cod = observed_dim(&v, "coderivative").expect("coderivative graph is a subspace");
                    assert_eq!(strict + cod, total, "{} at {:?}", inst.id, rp.z);
                    if let Some(c) = rp.chart_dim {
                        assert_eq!(strict, c, "{} at {:?}", inst.id, rp.z);
                    }
                }
            }
        }
        assert!(instances >= 12, "graph instances: {instances}");
        assert!(points >= 30, "reference points: {points}");
    });
}

#[test]
fn criterion_05_strict_smoothness_implies_semismoothness_star() {
    criterion(5, "strict smoothness implies semismoothness*", || {
        let corpus = corpus::builtin::<f64>();
        let tol = Tol::standard().eq;
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let mut smooth_points = 0;
        for inst in &corpus {
            let Some(map) = graph_map(inst) else { continue };
            for rp in &inst.points {
                let (bundle, _) = point_bundles(map, rp);
                let smooth = diagnostics::check_strictly_smooth(&bundle, rp.chart_dim, tol);
                if smooth.consensus != Consensus::Holds {
                    continue;
                }
                smooth_points += 1;
                let star =
                    diagnostics::check_semismooth_star(map, &rp.z, &SemismoothOptions::default(), &mut rng)
                        .unwrap();
                assert_eq!(star.consensus, Consensus::Holds, "{} at {:?}", inst.id, rp.z);
            }
        }
        assert!(smooth_points >= 10, "strictly smooth points exercised: {smooth_points}");
    });
}

#[test]
fn criterion_06_chart_extraction_with_verified_slopes() {
    criterion(6, "chart extraction with verified slopes", || {
        let corpus = corpus::builtin::<f64>();
        let tol = Tol::standard().eq;
        let mut charts = 0;
        for inst in &corpus {
            let Some(map) = graph_map(inst) else { continue };
            for rp in &inst.points {
                let (_, d) = point_bundles(map, rp);
                let v = diagnostics::check_strict_proto(&d, rp.chart_dim, tol);
                if v.consensus != Consensus::Holds {
                    continue;
                }
                let strict = d.strict.is_subspace(tol).expect("consensus-true strict graph");
                let total = map.dims().total();
                if strict.dim() == 0 || strict.dim() >= total {
                    continue;
                }
                let cert = extract_chart(map, &rp.z, &strict).unwrap();
                charts += 1;

                let base: Vec<f64> = cert.coords.iter().map(|&i| rp.z[i]).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(66);
                for _ in 0..100 {
                    let mut q = base.clone();
                    for entry in q.iter_mut() {
                        *entry += 0.2 * (rng.gen::<f64>() - 0.5);
                    }
                    let z = chart_point(map, &cert, &rp.z, &q).unwrap();
                    let residual = map.graph_residual(&z);
                    assert!(residual < 1e-9, "{} at {:?}: residual {residual}", inst.id, rp.z);
                }

                let rest = cert.complement_coords(total);
                let h = 1e-6;
                for j in 0..cert.dim {
                    let mut up = base.clone();
                    let mut dn = base.clone();
                    up[j] += h;
                    dn[j] -= h;
                    let zu = chart_point(map, &cert, &rp.z, &up).unwrap();
                    let zd = chart_point(map, &cert, &rp.z, &dn).unwrap();
                    for (r, &coord) in rest.iter().enumerate() {
                        let fd = (zu[coord] - zd[coord]) / (2.0 * h);
                        let slope = cert.slope.row(r)[j];
                        assert!(
                            (fd - slope).abs() <= 1e-5 * (1.0 + slope.abs()),
                            "{} at {:?}: slope[{r}][{j}] {slope} vs finite difference {fd}",
                            inst.id,
                            rp.z
                        );
                    }
                }
            }
        }
        assert!(charts >= 15, "charts extracted: {charts}");
    });
}

#[test]
fn criterion_07_regularity_equivalence_at_chart_points() {
    criterion(7, "regularity equivalence at chart points", || {
        let corpus = corpus::builtin::<f64>();
        let tol = Tol::standard().eq;
        let mut equivalence_points = 0;
        for inst in &corpus {
            let Some(map) = graph_map(inst) else { continue };
            for rp in &inst.points {
                if rp.chart_dim != Some(map.dims().m) {
                    continue;
                }
                let (_, d) = point_bundles(map, rp);
                if diagnostics::check_strict_proto(&d, rp.chart_dim, tol).consensus != Consensus::Holds {
                    continue;
                }
                equivalence_points += 1;
                let v = classify_point(inst, map, rp);
                assert_eq!(v.strongly_subregular, v.metrically_regular, "{} at {:?}", inst.id, rp.z);
                assert_eq!(v.metrically_regular, v.strongly_regular, "{} at {:?}", inst.id, rp.z);
            }
        }
        assert!(equivalence_points >= 8, "chart points exercised: {equivalence_points}");

        let corpus = corpus::builtin::<f64>();
        let flat = corpus.iter().find(|i| i.id == "subgrad_abs").unwrap();
        let map = graph_map(flat).unwrap();
        let origin = flat.points.iter().find(|p| p.z == vec![0.0, 0.0]).unwrap();
        let v = regularity::classify_under_strict_proto(map, &origin.z).unwrap();
        assert!(v.strongly_subregular && v.metrically_regular && v.strongly_regular);
        let c = v.inverse_slope.expect("single-valued inverse localization");
        assert_eq!((c.rows(), c.cols()), (1, 1));
        assert!(c.row(0)[0].abs() <= 1e-12, "inverse slope is zero");

        let crossing = corpus.iter().find(|i| i.id == "pm_square").unwrap();
        let cmap = graph_map(crossing).unwrap();
        let crp = &crossing.points[0];
        let (_, d) = point_bundles(cmap, crp);
        assert!(
            d.strict.distance(&[1.0, 0.0]) <= tol,
            "the strict derivative slice contains a nonzero direction mapped to zero"
        );
        let v = regularity::regularity_from_derivatives(&d);
        assert!(!v.strongly_regular, "strong regularity fails through the strict slice");
    });
}

fn classify_point(
    inst: &CorpusInstance<f64>,
    map: &SetValuedMap<f64>,
    rp: &ReferencePoint<f64>,
) -> RegularityVerdict<f64> {
    match &inst.payload {
        InstancePayload::Sum { smooth, inner, .. } => {
            regularity::classify_sum(smooth, inner, &rp.z).unwrap()
        }
        _ => match &rp.supplied {
            Some(sc) => {
                let d = deriv::derivative_bundle_from_cones(map.dims(), &sc.bundle, sc.strata.clone());
                regularity::regularity_from_derivatives(&d)
            }
            None => regularity::classify_under_strict_proto(map, &rp.z).unwrap(),
        },
    }
}

#[test]
fn criterion_08_sum_classification_agrees_with_the_assembled_graph() {
    criterion(8, "sum classification agrees with the assembled graph", || {
        let corpus = corpus::builtin::<f64>();
        let mut pairs = 0;
        for inst in &corpus {
            let InstancePayload::Sum { smooth, inner, assembled } = &inst.payload else { continue };
            for rp in &inst.points {
                pairs += 1;
                let via_sum = regularity::classify_sum(smooth, inner, &rp.z).unwrap();
                let direct = regularity::classify_under_strict_proto(assembled, &rp.z).unwrap();
                assert_eq!(via_sum.strongly_subregular, direct.strongly_subregular, "{}", inst.id);
                assert_eq!(via_sum.metrically_regular, direct.metrically_regular, "{}", inst.id);
                assert_eq!(via_sum.strongly_regular, direct.strongly_regular, "{}", inst.id);
                match (&via_sum.inverse_slope, &direct.inverse_slope) {
                    (Some(a), Some(b)) => {
                        for i in 0..a.rows() {
                            for j in 0..a.cols() {
                                assert!((a.row(i)[j] - b.row(i)[j]).abs() <= 1e-9, "{}", inst.id);
                            }
                        }
                    }
                    (None, None) => {}
                    _ => panic!("{}: inverse slopes disagree on existence", inst.id),
                }
            }
        }
        assert!(pairs >= 3, "sum pairs exercised: {pairs}");

        let corpus = corpus::builtin::<f64>();
        let singular = corpus.iter().find(|i| i.id == "sum_cancellation").unwrap();
        let InstancePayload::Sum { smooth, inner, .. } = &singular.payload else { unreachable!() };
        let v = regularity::classify_sum(smooth, inner, &singular.points[0].z).unwrap();
        assert!(!v.strongly_subregular && !v.metrically_regular && !v.strongly_regular);
    });
}

#[test]
fn criterion_09_prox_inverse_identity_and_envelope_gradient() {
    criterion(9, "prox inverse identity and envelope gradient", || {
        let corpus = corpus::builtin::<f64>();
        let mut fixtures = 0;
        for inst in &corpus {
            let InstancePayload::Prox(phi) = &inst.payload else { continue };
            fixtures += 1;
            let lambda = phi.default_lambda();
            let loc = prox::attentive_localization(phi, lambda).unwrap();
            let center = loc.prox_center();
            let window = loc.window_radius;
            let n = center.len();
            let mut rng = ChaCha8Rng::seed_from_u64(99);

            for _ in 0..200 {
                let mut dir: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let norm = linalg::norm(&dir);
                if norm < 0.1 {
                    dir = vec![1.0; n];
                }
                let norm = linalg::norm(&dir);
                let r = window * 0.9 * rng.gen::<f64>() / norm;
                let u = linalg::axpy(&center, r, &dir);
                let p = prox::prox_map(phi, lambda, &u).unwrap();
                let xstar = linalg::scale_vec(&linalg::sub_vec(&u, &p), 1.0 / lambda);
                let back = linalg::axpy(&p, lambda, &xstar);
                let p2 = prox::prox_map(phi, lambda, &back).unwrap();
                let residual = linalg::dist(&p2, &p);
                assert!(residual < 1e-9, "{}: inverse identity residual {residual}", inst.id);
            }

            for i in 0..n {
                for scale in [-0.6, -0.3, 0.0, 0.3, 0.6] {
                    let mut u = center.clone();
                    u[i] += window * scale;
                    let grad = prox::envelope_gradient(phi, lambda, &u).unwrap();
                    let h = 1e-5 * (1.0 + linalg::norm(&u));
                    let mut fd = Vec::with_capacity(n);
                    for j in 0..n {
                        let mut up = u.clone();
                        let mut dn = u.clone();
                        up[j] += h;
                        dn[j] -= h;
                        let hi = prox::moreau_envelope(phi, lambda, &up).unwrap();
                        let lo = prox::moreau_envelope(phi, lambda, &dn).unwrap();
                        fd.push((hi - lo) / (2.0 * h));
                    }
                    let rel = linalg::dist(&grad, &fd) / (1.0 + linalg::norm(&grad));
                    assert!(rel <= 1e-5, "{}: envelope gradient gap {rel}", inst.id);
                }
            }
        }
        assert!(fixtures >= 5, "prox fixtures exercised: {fixtures}");
    });
}

#[test]
fn criterion_10_trapezoid_decay_separates_the_corner() {
    criterion(10, "trapezoid decay separates the corner", || {
        let started = Instant::now();
        let schedule = TrapezoidSchedule::default();

        for (label, phi) in [
            ("convex quadratic", prox::quadratic_prox::<f64>(2.0, 0.0)),
            ("concave quadratic", prox::quadratic_prox::<f64>(-1.0, 0.0)),
        ] {
            let lambda = phi.default_lambda();
            let one = prox::trapezoid_one_point(&phi, lambda, &schedule, 0).unwrap();
            let two = prox::trapezoid_two_point(&phi, lambda, &schedule, 0).unwrap();
            for report in [&one, &two] {
                assert!(report.decays, "{label}");
                for &worst in &report.shell_maxima {
                    assert!(worst <= 1e-12, "{label}: shell maximum {worst}");
                }
            }
        }

        let corner = prox::abs_prox::<f64>(0.0, 1.0);
        let lambda = corner.default_lambda();
        let one = prox::trapezoid_one_point(&corner, lambda, &schedule, 0).unwrap();
        assert!(one.decays, "one-point residuals vanish at the corner");
        assert!(one.slope > 0.5, "one-point decay slope {}", one.slope);

        let two = prox::trapezoid_two_point(&corner, lambda, &schedule, 0).unwrap();
        assert!(!two.decays, "two-point residuals persist at the corner");
        assert!(*two.shell_maxima.last().unwrap() >= 0.2, "final shell maximum stays large");

        for t in [0.25, 0.1, 0.05, 0.01, 0.005] {
            let z = vec![t, 1.0];
            let w = vec![0.0, 1.0 - t];
            let ratio = prox::two_point_ratio(&corner, &z, &w);
            assert!((ratio + 0.25).abs() <= 1e-9, "witness pair ratio {ratio} at t = {t}");

            let manual = (corner.value(&[0.0]) - corner.value(&[t])
                - 0.5 * ((1.0 - t) + 1.0) * (0.0 - t))
                / (2.0 * t * t);
            assert!((manual + 0.25).abs() <= 1e-9, "recomputed ratio {manual} at t = {t}");
        }

        let v = prox::check_strict_proto_subgrad(&corner, lambda).unwrap();
        assert_eq!(v.consensus, Consensus::Fails, "the corner is not strictly proto-differentiable");

        assert!(started.elapsed().as_secs_f64() < 60.0, "runtime budget");
    });
}

#[test]
fn criterion_11_reports_are_deterministic() {
    criterion(11, "reports are deterministic", || {
        let corpus = corpus::builtin::<f64>();
        let first = harness::run(Command::All, &corpus, &RunConfig::default());
        let second = harness::run(Command::All, &corpus, &RunConfig::default());
        assert_eq!(first.to_json(), second.to_json(), "JSON reports are byte-identical");
        assert_eq!(first.to_text(), second.to_text(), "text reports are byte-identical");
        assert!(first.clean(), "the built-in corpus passes under the default seed");
    });
}
