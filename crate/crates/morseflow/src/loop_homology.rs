//! Mod-2 Pontryagin rings H_*(ΩM; Z/2) for catalog manifolds, and the
//! level-graded extended Morse complex with ring-valued entries. The
//! extended differential d′ drops one critical level; entries between
//! index-gap-1 points are orbit counts mod 2, entries across larger gaps
//! carry the loop class of the connecting moduli. Acceptance of a complex
//! means every composite entry vanishes in the ring.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::critical::CriticalPoint;
use crate::flow::ModuliSample;

/// Default truncation degree for generated ring tables.
pub const DEFAULT_DEGREE_CAP: usize = 12;

/// Distinct critical values closer than this share a level.
const LEVEL_MERGE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LoopError {
    #[error("unsupported manifold tag `{0}`")]
    UnsupportedTag(String),
    #[error("product degree {degree} exceeds ring cap {cap}")]
    CapExceeded { degree: usize, cap: usize },
    #[error("loop class unknown for pair ({upper}, {lower}): {reason}")]
    ClassUnknown {
        upper: usize,
        lower: usize,
        reason: String,
    },
    #[error("extended complex inconsistent at ({upper}, {lower}): composite {element}")]
    Inconsistent {
        upper: usize,
        lower: usize,
        element: String,
    },
    #[error("precondition violation: {0}")]
    Precondition(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RingShape {
    /// ΩSⁿ: Z/2[x] with deg x = n-1.
    Sphere { gen_deg: usize },
    /// Ω(S^a × S^b): Z/2[a] ⊗ Z/2[b].
    Product { deg_a: usize, deg_b: usize },
    /// ΩCPⁿ: Λ(u) ⊗ Z/2[v], deg u = 1, deg v = 2n.
    Cpn { n: usize },
}

/// One basis monomial of the graded ring.
#[derive(Debug, Clone, Serialize)]
pub struct Monomial {
    pub name: String,
    pub degree: usize,
    /// generator exponents, shape-dependent ordering
    exponents: Vec<u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TableEntry {
    Zero,
    Basis(usize),
    Overflow,
}

/// Graded Z/2 basis with a full multiplication table, truncated at the cap.
#[derive(Debug, Clone)]
pub struct PontryaginRing {
    pub tag: String,
    pub degree_cap: usize,
    pub basis: Vec<Monomial>,
    shape: RingShape,
    table: Vec<Vec<TableEntry>>,
}

fn parse_tag(tag: &str) -> Result<RingShape, LoopError> {
    let t: String = tag.chars().filter(|c| !c.is_whitespace()).collect();
    let sphere_n = |s: &str| -> Option<usize> {
        s.strip_prefix("sphere(")?
            .strip_suffix(")")?
            .parse::<usize>()
            .ok()
    };
    if let Some(n) = sphere_n(&t) {
        if n >= 2 {
            return Ok(RingShape::Sphere { gen_deg: n - 1 });
        }
    } else if let Some(inner) = t.strip_prefix("product(").and_then(|s| s.strip_suffix(")")) {
        // split at the comma between the two factor tags
        if let Some(mid) = inner.find("),") {
            let (first, rest) = inner.split_at(mid + 1);
            let second = &rest[1..];
            if let (Some(a), Some(b)) = (sphere_n(first), sphere_n(second)) {
                if a >= 2 && b >= 2 {
                    return Ok(RingShape::Product {
                        deg_a: a - 1,
                        deg_b: b - 1,
                    });
                }
            }
        }
    } else if let Some(n) = t
        .strip_prefix("cpn(")
        .and_then(|s| s.strip_suffix(")"))
        .and_then(|s| s.parse::<usize>().ok())
    {
        if n >= 1 {
            return Ok(RingShape::Cpn { n });
        }
    }
    Err(LoopError::UnsupportedTag(tag.to_string()))
}

fn power_name(gen: &str, e: u32) -> Option<String> {
    match e {
        0 => None,
        1 => Some(gen.to_string()),
        _ => Some(format!("{gen}^{e}")),
    }
}

fn monomial_name(parts: &[Option<String>]) -> String {
    let joined: Vec<String> = parts.iter().flatten().cloned().collect();
    if joined.is_empty() {
        "1".to_string()
    } else {
        joined.join("*")
    }
}

impl PontryaginRing {
    fn generator_names(shape: RingShape) -> Vec<String> {
        match shape {
            RingShape::Sphere { gen_deg } => vec![format!("x{gen_deg}")],
            RingShape::Product { .. } => vec!["a".into(), "b".into()],
            RingShape::Cpn { .. } => vec!["u".into(), "v".into()],
        }
    }

    fn generator_degrees(shape: RingShape) -> Vec<usize> {
        match shape {
            RingShape::Sphere { gen_deg } => vec![gen_deg],
            RingShape::Product { deg_a, deg_b } => vec![deg_a, deg_b],
            RingShape::Cpn { n } => vec![1, 2 * n],
        }
    }

    pub fn unit(&self) -> RingElement {
        RingElement::monomial(0)
    }

    /// Basis index of generator_i^1 (factor numbering starts at 1).
    pub fn generator(&self, factor: usize) -> Option<usize> {
        let gens = Self::generator_names(self.shape);
        let name = gens.get(factor.checked_sub(1)?)?;
        self.basis.iter().position(|m| m.name == *name)
    }

    /// Coefficient counts per degree, 0..=cap.
    pub fn poincare_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.degree_cap + 1];
        for m in &self.basis {
            counts[m.degree] += 1;
        }
        counts
    }

    /// Element from monomial names, for config-supplied classes.
    pub fn element_from_names(&self, names: &[String]) -> Result<RingElement, LoopError> {
        let mut acc = RingElement::zero();
        for name in names {
            let idx = self
                .basis
                .iter()
                .position(|m| m.name == *name)
                .ok_or_else(|| {
                    LoopError::Precondition(format!(
                        "unknown monomial `{name}` in ring `{}`",
                        self.tag
                    ))
                })?;
            acc = acc.add(&RingElement::monomial(idx));
        }
        Ok(acc)
    }

    pub fn render(&self, e: &RingElement) -> Vec<String> {
        e.terms.iter().map(|&i| self.basis[i].name.clone()).collect()
    }

    pub fn degree_of(&self, e: &RingElement) -> Option<usize> {
        let mut degs: Vec<usize> = e.terms.iter().map(|&i| self.basis[i].degree).collect();
        degs.dedup();
        match degs.len() {
            1 => Some(degs[0]),
            _ => None,
        }
    }
}

/// Build the ring table for a catalog tag, truncated at `degree_cap`.
pub fn make_ring(tag: &str, degree_cap: usize) -> Result<PontryaginRing, LoopError> {
    let shape = parse_tag(tag)?;
    let gen_degs = PontryaginRing::generator_degrees(shape);
    let gen_names = PontryaginRing::generator_names(shape);

    // enumerate exponent vectors within the cap, degree-major order
    let mut basis: Vec<Monomial> = Vec::new();
    let max_exp: Vec<u32> = gen_degs
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            if matches!(shape, RingShape::Cpn { .. }) && i == 0 {
                1 // u squares to zero
            } else {
                (degree_cap / d) as u32
            }
        })
        .collect();
    let mut stack: Vec<Vec<u32>> = vec![Vec::new()];
    for &m in &max_exp {
        let mut next = Vec::new();
        for prefix in &stack {
            for e in 0..=m {
                let mut v = prefix.clone();
                v.push(e);
                next.push(v);
            }
        }
        stack = next;
    }
    for exps in stack {
        let degree: usize = exps
            .iter()
            .zip(&gen_degs)
            .map(|(&e, &d)| e as usize * d)
            .sum();
        if degree > degree_cap {
            continue;
        }
        let parts: Vec<Option<String>> = exps
            .iter()
            .zip(&gen_names)
            .map(|(&e, g)| power_name(g, e))
            .collect();
        basis.push(Monomial {
            name: monomial_name(&parts),
            degree,
            exponents: exps,
        });
    }
    basis.sort_by(|p, q| p.degree.cmp(&q.degree).then(p.exponents.cmp(&q.exponents)));

    let find = |exps: &[u32]| basis.iter().position(|m| m.exponents == exps);
    let mut table = vec![vec![TableEntry::Zero; basis.len()]; basis.len()];
    for (i, mi) in basis.iter().enumerate() {
        for (j, mj) in basis.iter().enumerate() {
            let sum: Vec<u32> = mi
                .exponents
                .iter()
                .zip(&mj.exponents)
                .map(|(a, b)| a + b)
                .collect();
            if matches!(shape, RingShape::Cpn { .. }) && sum[0] >= 2 {
                table[i][j] = TableEntry::Zero;
                continue;
            }
            let degree: usize = sum
                .iter()
                .zip(&gen_degs)
                .map(|(&e, &d)| e as usize * d)
                .sum();
            table[i][j] = if degree > degree_cap {
                TableEntry::Overflow
            } else {
                TableEntry::Basis(find(&sum).expect("product monomial within cap"))
            };
        }
    }

    Ok(PontryaginRing {
        tag: tag.to_string(),
        degree_cap,
        basis,
        shape,
        table,
    })
}

/// Z/2 linear combination of basis monomials, stored as sorted indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct RingElement {
    terms: Vec<usize>,
}

impl RingElement {
    pub fn zero() -> Self {
        RingElement::default()
    }

    pub fn monomial(index: usize) -> Self {
        RingElement { terms: vec![index] }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn add(&self, other: &RingElement) -> RingElement {
        // symmetric difference: coefficients live in Z/2
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() || j < other.terms.len() {
            match (self.terms.get(i), other.terms.get(j)) {
                (Some(&a), Some(&b)) if a == b => {
                    i += 1;
                    j += 1;
                }
                (Some(&a), Some(&b)) if a < b => {
                    out.push(a);
                    i += 1;
                }
                (Some(_), Some(&b)) => {
                    out.push(b);
                    j += 1;
                }
                (Some(&a), None) => {
                    out.push(a);
                    i += 1;
                }
                (None, Some(&b)) => {
                    out.push(b);
                    j += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        RingElement { terms: out }
    }

    /// Coefficient of the unit monomial (index 0).
    pub fn unit_coefficient(&self) -> u8 {
        u8::from(self.terms.contains(&0))
    }
}

/// Bilinear extension of the basis table over Z/2.
pub fn multiply(
    ring: &PontryaginRing,
    e1: &RingElement,
    e2: &RingElement,
) -> Result<RingElement, LoopError> {
    let mut acc = RingElement::zero();
    for &i in &e1.terms {
        for &j in &e2.terms {
            match ring.table[i][j] {
                TableEntry::Zero => {}
                TableEntry::Basis(k) => acc = acc.add(&RingElement::monomial(k)),
                TableEntry::Overflow => {
                    return Err(LoopError::CapExceeded {
                        degree: ring.basis[i].degree + ring.basis[j].degree,
                        cap: ring.degree_cap,
                    });
                }
            }
        }
    }
    Ok(acc)
}

/// Loop class of a positive-dimensional moduli sample. Only the swept-factor
/// label of a catalog product is translatable; anything else must come from
/// the run configuration.
pub fn assign_loop_class(
    sample: &ModuliSample,
    ring: &PontryaginRing,
) -> Result<RingElement, LoopError> {
    let Some(label) = &sample.swept_label else {
        return Err(LoopError::ClassUnknown {
            upper: sample.upper,
            lower: sample.lower,
            reason: "sample carries no swept-factor label".into(),
        });
    };
    let factor: usize = label
        .strip_prefix("factor-")
        .and_then(|s| s.strip_suffix(" sphere"))
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| LoopError::ClassUnknown {
            upper: sample.upper,
            lower: sample.lower,
            reason: format!("unrecognized swept label `{label}`"),
        })?;
    let idx = ring.generator(factor).ok_or_else(|| LoopError::ClassUnknown {
        upper: sample.upper,
        lower: sample.lower,
        reason: format!("ring `{}` has no factor {factor} generator", ring.tag),
    })?;
    if ring.basis[idx].degree != sample.dimension {
        return Err(LoopError::ClassUnknown {
            upper: sample.upper,
            lower: sample.lower,
            reason: format!(
                "factor {factor} generator has degree {}, moduli dimension is {}",
                ring.basis[idx].degree, sample.dimension
            ),
        });
    }
    Ok(RingElement::monomial(idx))
}

/// Ring entry for an index-gap-1 pair: orbit count mod 2 times the unit.
pub fn gap_one_entry(orbit_count: usize, ring: &PontryaginRing) -> RingElement {
    if orbit_count % 2 == 1 {
        ring.unit()
    } else {
        RingElement::zero()
    }
}

/// One nonzero extended-differential entry, rendered for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct ExtendedEntry {
    pub upper: usize,
    pub lower: usize,
    pub class: Vec<String>,
}

/// Level-graded extended complex; construction implies acceptance
/// (all composite entries vanished).
#[derive(Debug, Clone, Serialize)]
pub struct ExtendedComplex {
    /// distinct critical levels, ascending
    pub levels: Vec<f64>,
    /// point ids per level, aligned with `levels`
    pub level_basis: Vec<Vec<usize>>,
    pub entries: Vec<ExtendedEntry>,
    pub composites_checked: usize,
    #[serde(skip)]
    raw_entries: BTreeMap<(usize, usize), RingElement>,
}

impl ExtendedComplex {
    /// Unit coefficients of all entries: the degree-0 augmentation, which
    /// must reproduce the mod-2 classical Morse differential.
    pub fn augmentation(&self) -> BTreeMap<(usize, usize), u8> {
        self.raw_entries
            .iter()
            .map(|(&k, v)| (k, v.unit_coefficient()))
            .collect()
    }
}

/// Group points into critical levels and verify d′∘d′ = 0 given the entry
/// map keyed by (upper id, lower id). Every entry must connect adjacent
/// levels.
pub fn build_extended_complex(
    points: &[CriticalPoint],
    entries: &BTreeMap<(usize, usize), RingElement>,
    ring: &PontryaginRing,
) -> Result<ExtendedComplex, LoopError> {
    if points.is_empty() {
        return Err(LoopError::Precondition("no critical points".into()));
    }
    // points are value-descending; build ascending levels
    let mut levels: Vec<f64> = Vec::new();
    let mut level_basis: Vec<Vec<usize>> = Vec::new();
    for p in points.iter().rev() {
        match levels.last() {
            Some(&v) if (p.value - v).abs() < LEVEL_MERGE_TOL => {
                level_basis.last_mut().unwrap().push(p.id);
            }
            _ => {
                levels.push(p.value);
                level_basis.push(vec![p.id]);
            }
        }
    }
    for b in level_basis.iter_mut() {
        b.sort_unstable();
    }
    let level_of = |id: usize| -> Option<usize> {
        level_basis.iter().position(|b| b.contains(&id))
    };

    for (&(u, l), _) in entries.iter() {
        let (Some(lu), Some(ll)) = (level_of(u), level_of(l)) else {
            return Err(LoopError::Precondition(format!(
                "entry ({u}, {l}) references unknown point"
            )));
        };
        if lu != ll + 1 {
            return Err(LoopError::Precondition(format!(
                "entry ({u}, {l}) spans levels {lu} -> {ll}, expected adjacent"
            )));
        }
    }

    let zero = RingElement::zero();
    let entry = |u: usize, l: usize| entries.get(&(u, l)).unwrap_or(&zero);
    let mut composites_checked = 0usize;
    for top in (2..levels.len()).rev() {
        for &p in &level_basis[top] {
            for &r in &level_basis[top - 2] {
                let mut acc = RingElement::zero();
                for &q in &level_basis[top - 1] {
                    let prod = multiply(ring, entry(p, q), entry(q, r))?;
                    acc = acc.add(&prod);
                }
                composites_checked += 1;
                if !acc.is_zero() {
                    let mut s = String::new();
                    for (i, name) in ring.render(&acc).iter().enumerate() {
                        if i > 0 {
                            let _ = write!(s, " + ");
                        }
                        let _ = write!(s, "{name}");
                    }
                    return Err(LoopError::Inconsistent {
                        upper: p,
                        lower: r,
                        element: s,
                    });
                }
            }
        }
    }

    let rendered = entries
        .iter()
        .filter(|(_, e)| !e.is_zero())
        .map(|(&(u, l), e)| ExtendedEntry {
            upper: u,
            lower: l,
            class: ring.render(e),
        })
        .collect();
    Ok(ExtendedComplex {
        levels,
        level_basis,
        entries: rendered,
        composites_checked,
        raw_entries: entries.clone(),
    })
}
