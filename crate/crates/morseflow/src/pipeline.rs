//! Orchestration: geometry → critical points → reachability → connecting
//! orbits → complexes → loop-space checks → obstruction queries, collected
//! into a deterministic report. Check failures land in the report summary;
//! stage errors abort with the stage name attached.

use std::collections::BTreeMap;
use std::io::Write;

use thiserror::Error;

use crate::complex::{
    build_morse_complex, duality_transpose_check, homology_ranks, Coefficients, ComplexError,
    GradedComplex,
};
use crate::config::{Check, ManifoldSpec, RunConfig};
use crate::critical::{consecutive_pairs, find_critical_points, ConsecutivePair, CriticalPoint};
use crate::expr;
use crate::flow::{
    enumerate_orbits_zero_dim, reachability, sample_moduli, ConnectingOrbit, ModuliSample,
    OrbitParams,
};
use crate::geometry::{Catalog, ImplicitManifold, RestrictedFunction};
use crate::loop_homology::{
    assign_loop_class, build_extended_complex, gap_one_entry, make_ring, LoopError,
    PontryaginRing, RingElement,
};
use crate::report::{
    CheckOutcome, ComplexReport, CriticalPointReport, DualitySection, ExtendedSection,
    ModuliReport, ObstructionReport, PairReport, Report, Summary,
};
use crate::stems::{smoothing_verdict, StemElement};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message}")]
    Stage { stage: String, message: String },
}

fn stage<T, E: std::fmt::Display>(name: &str, r: Result<T, E>) -> Result<T, PipelineError> {
    r.map_err(|e| PipelineError::Stage {
        stage: name.to_string(),
        message: e.to_string(),
    })
}

/// One exportable orbit polyline.
#[derive(Debug, Clone)]
pub struct FlowlineRecord {
    pub orbit_id: usize,
    pub polyline: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub report: Report,
    pub flowlines: Vec<FlowlineRecord>,
}

struct GeometryRun {
    rf: RestrictedFunction,
    points: Vec<CriticalPoint>,
    pairs: Vec<ConsecutivePair>,
    orbits: Vec<ConnectingOrbit>,
    pair_reports: Vec<PairReport>,
}

fn build_manifold(spec: &ManifoldSpec) -> Result<(ImplicitManifold, Vec<f64>), PipelineError> {
    match spec {
        ManifoldSpec::Catalog { catalog } => {
            let halfwidths = catalog.bounding_halfwidths();
            let m = stage("geometry", ImplicitManifold::from_catalog(catalog.clone()))?;
            Ok((m, halfwidths))
        }
        ManifoldSpec::Explicit {
            ambient_dim,
            constraints,
        } => {
            let mut parsed = Vec::new();
            for c in constraints {
                parsed.push(stage("geometry", expr::parse(c, *ambient_dim))?);
            }
            let m = stage("geometry", ImplicitManifold::new(*ambient_dim, parsed))?;
            Ok((m, vec![2.0; *ambient_dim]))
        }
    }
}

fn run_geometry(
    rf: &RestrictedFunction,
    halfwidths: &[f64],
    config: &RunConfig,
    params: &OrbitParams,
) -> Result<GeometryRun, PipelineError> {
    let points = stage(
        "critical-points",
        find_critical_points(rf, config.budget, config.seed, halfwidths),
    )?;
    let reach = stage("reachability", reachability(rf, &points, params))?;
    let pairs = consecutive_pairs(&points, |a, b| reach[a][b]);

    let mut orbits = Vec::new();
    let mut pair_reports = Vec::new();
    for pair in &pairs {
        if pair.index_gap == 1 {
            let set = stage(
                "orbit-enumeration",
                enumerate_orbits_zero_dim(rf, &points, pair, config.resolution, params),
            )?;
            pair_reports.push(PairReport {
                upper: pair.upper,
                lower: pair.lower,
                index_gap: pair.index_gap,
                orbit_count: Some(set.orbits.len()),
                orbit_signs: set.orbits.iter().map(|o| o.sign).collect(),
                warnings: set.warnings.clone(),
            });
            orbits.extend(set.orbits);
        } else {
            pair_reports.push(PairReport {
                upper: pair.upper,
                lower: pair.lower,
                index_gap: pair.index_gap,
                orbit_count: None,
                orbit_signs: Vec::new(),
                warnings: Vec::new(),
            });
        }
    }
    Ok(GeometryRun {
        rf: rf.clone(),
        points,
        pairs,
        orbits,
        pair_reports,
    })
}

fn complex_report(
    complex: &GradedComplex,
) -> ComplexReport {
    ComplexReport {
        basis: complex.basis.clone(),
        differentials: complex.differentials.clone(),
        d_squared_zero: true, // construction verifies d∘d = 0
        homology: homology_ranks(complex),
    }
}

fn resolve_ring(config: &RunConfig, manifold: &ImplicitManifold) -> Result<PontryaginRing, PipelineError> {
    let tag = if let Some(tag) = &config.ring {
        tag.clone()
    } else if let Some(tag) = manifold.catalog.as_ref().and_then(Catalog::ring_tag) {
        tag
    } else {
        // no catalogued loop ring; only degree-0 (unit) entries can occur,
        // so any catalogued ring serves as the coefficient table
        "sphere(2)".to_string()
    };
    stage("extended-complex", make_ring(&tag, config.degree_cap))
}

fn extended_entries(
    geo: &GeometryRun,
    config: &RunConfig,
    ring: &PontryaginRing,
    params: &OrbitParams,
    moduli_out: &mut Vec<(ModuliSample, ModuliReport)>,
) -> Result<BTreeMap<(usize, usize), RingElement>, PipelineError> {
    let mut entries = BTreeMap::new();
    let supplied: BTreeMap<(usize, usize), &Vec<String>> = config
        .supplied_classes
        .iter()
        .map(|s| ((s.upper, s.lower), &s.class))
        .collect();
    for pair in &geo.pairs {
        let key = (pair.upper, pair.lower);
        let element = if let Some(names) = supplied.get(&key) {
            stage("extended-complex", ring.element_from_names(names))?
        } else if pair.index_gap == 1 {
            let count = geo
                .pair_reports
                .iter()
                .find(|r| (r.upper, r.lower) == key)
                .and_then(|r| r.orbit_count)
                .unwrap_or(0);
            gap_one_entry(count, ring)
        } else if pair.index_gap >= 2 {
            let sample = stage(
                "moduli",
                sample_moduli(
                    &geo.rf,
                    &geo.points,
                    pair,
                    config.moduli_samples,
                    config.seed,
                    params,
                ),
            )?;
            let class = stage("extended-complex", assign_loop_class(&sample, ring))?;
            moduli_out.push((
                sample.clone(),
                ModuliReport {
                    upper: sample.upper,
                    lower: sample.lower,
                    dimension: sample.dimension,
                    hit_count: sample.hit_parameters.len(),
                    component_count: sample.component_count,
                    swept_label: sample.swept_label.clone(),
                    factor_variance: sample.factor_variance.clone(),
                },
            ));
            class
        } else {
            continue;
        };
        if !element.is_zero() {
            entries.insert(key, element);
        }
    }
    Ok(entries)
}

/// Execute every stage requested by the config. `collect_flowlines`
/// retains orbit polylines for CSV export.
pub fn run_pipeline(
    config: &RunConfig,
    collect_flowlines: bool,
) -> Result<PipelineOutput, PipelineError> {
    config.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let params = OrbitParams {
        r_shoot: config.tolerances.shoot_radius,
        arrival_radius: config.tolerances.arrival_radius,
    };
    let mut checks: Vec<CheckOutcome> = Vec::new();

    // geometric stages
    let geo: Option<GeometryRun> = match (&config.manifold, &config.function) {
        (Some(spec), Some(f)) => {
            let (manifold, halfwidths) = build_manifold(spec)?;
            let fx = stage("geometry", expr::parse(f, manifold.ambient_dim))?;
            let rf = RestrictedFunction::new(fx, manifold);
            Some(run_geometry(&rf, &halfwidths, config, &params)?)
        }
        _ => None,
    };

    let n = geo.as_ref().map(|g| g.rf.manifold.intrinsic_dim());
    let mut integer_complex = None;
    let mut mod2_complex = None;
    let mut mod2_graded: Option<GradedComplex> = None;

    if config.checks.contains(&Check::ClassicalComplex) {
        let g = geo.as_ref().expect("validated geometric config");
        let n = n.unwrap();
        let built = build_morse_complex(&g.points, &g.orbits, n, Coefficients::Integer)
            .and_then(|ci| {
                build_morse_complex(&g.points, &g.orbits, n, Coefficients::Mod2)
                    .map(|c2| (ci, c2))
            });
        match built {
            Ok((ci, c2)) => {
                integer_complex = Some(complex_report(&ci));
                mod2_complex = Some(complex_report(&c2));
                mod2_graded = Some(c2);
                checks.push(CheckOutcome {
                    check: "classical_complex".into(),
                    passed: true,
                    detail: "d∘d = 0 over Z and Z/2".into(),
                });
            }
            Err(e @ ComplexError::Inconsistent { .. }) => {
                checks.push(CheckOutcome {
                    check: "classical_complex".into(),
                    passed: false,
                    detail: e.to_string(),
                });
            }
            Err(e) => {
                return Err(PipelineError::Stage {
                    stage: "morse-complex".into(),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut duality = None;
    if config.checks.contains(&Check::Duality) {
        let g = geo.as_ref().expect("validated geometric config");
        let n = n.unwrap();
        let halfwidths = match config.manifold.as_ref().expect("geometric config") {
            ManifoldSpec::Catalog { catalog } => catalog.bounding_halfwidths(),
            ManifoldSpec::Explicit { ambient_dim, .. } => vec![2.0; *ambient_dim],
        };
        let back = run_geometry(&g.rf.negated(), &halfwidths, config, &params)?;
        let forward_cx = stage(
            "duality",
            build_morse_complex(&g.points, &g.orbits, n, Coefficients::Integer),
        )?;
        let backward_cx = stage(
            "duality",
            build_morse_complex(&back.points, &back.orbits, n, Coefficients::Integer),
        )?;
        match duality_transpose_check(&forward_cx, &g.points, &backward_cx, &back.points) {
            Ok(r) => {
                checks.push(CheckOutcome {
                    check: "duality".into(),
                    passed: r.holds,
                    detail: r.detail.clone(),
                });
                duality = Some(DualitySection {
                    holds: r.holds,
                    detail: r.detail,
                });
            }
            Err(ComplexError::DualityViolation(msg)) => {
                checks.push(CheckOutcome {
                    check: "duality".into(),
                    passed: false,
                    detail: msg.clone(),
                });
                duality = Some(DualitySection {
                    holds: false,
                    detail: msg,
                });
            }
            Err(e) => {
                return Err(PipelineError::Stage {
                    stage: "duality".into(),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut moduli_reports: Vec<ModuliReport> = Vec::new();
    let mut extended_section = None;
    if config.checks.contains(&Check::ExtendedComplex) {
        let (ring, points, entries) = if let Some(synth) = &config.synthetic_extended {
            let ring = stage("extended-complex", make_ring(&synth.ring, config.degree_cap))?;
            let points: Vec<CriticalPoint> = synth
                .points
                .iter()
                .map(|&(id, value, index)| CriticalPoint {
                    id,
                    location: vec![],
                    value,
                    index,
                    hessian_spectrum: vec![],
                    unstable_frame: nalgebra::DMatrix::zeros(0, 0),
                    stable_frame: nalgebra::DMatrix::zeros(0, 0),
                })
                .collect();
            let mut entries = BTreeMap::new();
            for s in &synth.entries {
                entries.insert(
                    (s.upper, s.lower),
                    stage("extended-complex", ring.element_from_names(&s.class))?,
                );
            }
            (ring, points, entries)
        } else {
            let g = geo.as_ref().expect("validated geometric config");
            let ring = resolve_ring(config, &g.rf.manifold)?;
            let mut moduli = Vec::new();
            let entries = extended_entries(g, config, &ring, &params, &mut moduli)?;
            for (_, r) in moduli {
                moduli_reports.push(r);
            }
            (ring, g.points.clone(), entries)
        };
        match build_extended_complex(&points, &entries, &ring) {
            Ok(ec) => {
                // augmentation must reproduce the mod-2 classical complex
                let mut aug_ok = true;
                if let Some(c2) = &mod2_graded {
                    let aug = ec.augmentation();
                    for k in 1..c2.differentials.len() {
                        let d = &c2.differentials[k];
                        for (ci, &col_id) in c2.basis[k].iter().enumerate() {
                            for (ri, &row_id) in c2.basis[k - 1].iter().enumerate() {
                                let expected = d.get(ri, ci).rem_euclid(2) as u8;
                                let got = aug.get(&(col_id, row_id)).copied().unwrap_or(0);
                                if expected != got {
                                    aug_ok = false;
                                }
                            }
                        }
                    }
                }
                checks.push(CheckOutcome {
                    check: "extended_complex".into(),
                    passed: aug_ok,
                    detail: if aug_ok {
                        format!("d′∘d′ = 0 ({} composites)", ec.composites_checked)
                    } else {
                        "augmentation disagrees with the mod-2 classical complex".into()
                    },
                });
                extended_section = Some(ExtendedSection {
                    ring_tag: ring.tag.clone(),
                    ring_basis: ring.basis.iter().map(|m| m.name.clone()).collect(),
                    levels: ec.levels.clone(),
                    level_basis: ec.level_basis.clone(),
                    entries: ec.entries.clone(),
                    composites_checked: ec.composites_checked,
                    accepted: aug_ok,
                });
            }
            Err(e @ LoopError::Inconsistent { .. }) => {
                checks.push(CheckOutcome {
                    check: "extended_complex".into(),
                    passed: false,
                    detail: e.to_string(),
                });
            }
            Err(e) => {
                return Err(PipelineError::Stage {
                    stage: "extended-complex".into(),
                    message: e.to_string(),
                });
            }
        }
    }

    let mut obstructions = Vec::new();
    if config.checks.contains(&Check::Obstructions) {
        for q in &config.obstruction_queries {
            let delta = StemElement {
                residues: q.delta.clone(),
            };
            let delta_prime = StemElement {
                residues: q.delta_prime.clone(),
            };
            let verdict = stage(
                "obstructions",
                smoothing_verdict(q.k, &delta, &delta_prime),
            )?;
            obstructions.push(ObstructionReport {
                k: q.k,
                delta: q.delta.clone(),
                delta_prime: q.delta_prime.clone(),
                verdict,
                note: "conservative necessary condition via Im(J⁰)".into(),
            });
        }
        checks.push(CheckOutcome {
            check: "obstructions".into(),
            passed: true,
            detail: format!("{} verdicts delivered", obstructions.len()),
        });
    }

    let flowlines = if collect_flowlines {
        geo.as_ref()
            .map(|g| {
                g.orbits
                    .iter()
                    .enumerate()
                    .map(|(i, o)| FlowlineRecord {
                        orbit_id: i,
                        polyline: o.trajectory.polyline.clone(),
                    })
                    .collect()
            })
            .unwrap_or_default()
    } else {
        Vec::new()
    };

    let all_passed = checks.iter().all(|c| c.passed);
    let report = Report {
        morseflow_schema: crate::report::SCHEMA_VERSION,
        seed: config.seed,
        budget: config.budget,
        resolution: config.resolution,
        moduli_samples: config.moduli_samples,
        tolerances: config.tolerances.clone(),
        critical_points: geo
            .as_ref()
            .map(|g| {
                g.points
                    .iter()
                    .map(|p| CriticalPointReport {
                        id: p.id,
                        location: p.location.clone(),
                        value: p.value,
                        index: p.index,
                    })
                    .collect()
            })
            .unwrap_or_default(),
        pairs: geo.map(|g| g.pair_reports).unwrap_or_default(),
        integer_complex,
        mod2_complex,
        duality,
        moduli: moduli_reports,
        extended_complex: extended_section,
        obstructions,
        summary: Summary {
            checks,
            all_passed,
        },
    };
    Ok(PipelineOutput { report, flowlines })
}

/// CSV export: one row per polyline vertex, columns
/// run_id, orbit_id, t_index, x1..xN.
pub fn write_flowlines_csv(
    run_id: &str,
    flowlines: &[FlowlineRecord],
    out: &mut dyn Write,
) -> std::io::Result<()> {
    let dim = flowlines
        .iter()
        .flat_map(|f| f.polyline.first())
        .map(Vec::len)
        .max()
        .unwrap_or(0);
    write!(out, "run_id,orbit_id,t_index")?;
    for i in 1..=dim {
        write!(out, ",x{i}")?;
    }
    writeln!(out)?;
    for f in flowlines {
        for (t, v) in f.polyline.iter().enumerate() {
            write!(out, "{run_id},{},{t}", f.orbit_id)?;
            for x in v {
                write!(out, ",{x}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstruction_only_pipeline() {
        let cfg = RunConfig::from_json(
            r#"{
                "morseflow_schema": 1,
                "checks": ["obstructions"],
                "obstruction_queries": [
                    { "k": 2, "delta": [0], "delta_prime": [1] },
                    { "k": 3, "delta": [0], "delta_prime": [5] }
                ]
            }"#,
        )
        .unwrap();
        let out = run_pipeline(&cfg, false).unwrap();
        assert!(out.report.summary.all_passed);
        assert_eq!(out.report.obstructions.len(), 2);
        assert_eq!(
            out.report.obstructions[0].verdict,
            crate::stems::Verdict::Obstructed
        );
        assert_eq!(
            out.report.obstructions[1].verdict,
            crate::stems::Verdict::Passes
        );
    }

    #[test]
    fn synthetic_extended_pipeline() {
        let cfg = RunConfig::from_json(
            r#"{
                "morseflow_schema": 1,
                "checks": ["extended_complex"],
                "synthetic_extended": {
                    "ring": "cpn(2)",
                    "points": [[0, 2.0, 4], [1, 0.0, 2], [2, -2.0, 0]],
                    "entries": [
                        { "upper": 0, "lower": 1, "class": ["u"] },
                        { "upper": 1, "lower": 2, "class": ["u"] }
                    ]
                }
            }"#,
        )
        .unwrap();
        let out = run_pipeline(&cfg, false).unwrap();
        assert!(out.report.summary.all_passed);
        let ext = out.report.extended_complex.unwrap();
        assert!(ext.accepted);
        assert_eq!(ext.composites_checked, 1);
    }

    #[test]
    fn csv_columns() {
        let flows = vec![FlowlineRecord {
            orbit_id: 0,
            polyline: vec![vec![0.0, 1.0], vec![0.5, 0.5]],
        }];
        let mut buf = Vec::new();
        write_flowlines_csv("run-0", &flows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "run_id,orbit_id,t_index,x1,x2");
        assert_eq!(lines.next().unwrap(), "run-0,0,0,0,1");
    }
}
