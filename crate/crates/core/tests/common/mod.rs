//! Random small coherent phased mission systems.

#![allow(dead_code)]

use std::collections::BTreeSet;

use phasesig::{
    validate_system, Component, ComponentId, Law, LifetimeModel, PhaseSpec, PhasedSystem,
    PhysicalType, StructureExpr,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const NAMES: [&str; 5] = ["a", "b", "c", "d", "e"];

fn random_law(rng: &mut impl Rng) -> Law {
    if rng.random_bool(0.5) {
        Law::Exponential {
            rate: rng.random_range(0.05..0.6),
        }
    } else {
        Law::Weibull {
            scale: rng.random_range(1.5..8.0),
            shape: rng.random_range(0.6..3.0),
        }
    }
}

pub fn random_lifetime(rng: &mut impl Rng, phases: usize, constant_only: bool) -> LifetimeModel {
    let pick = if constant_only {
        rng.random_range(0..2) * 3
    } else {
        rng.random_range(0..4)
    };
    match pick {
        0 => LifetimeModel::PhaseHazard(
            (0..phases)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        0.0
                    } else {
                        rng.random_range(0.05..0.6)
                    }
                })
                .collect(),
        ),
        1 => LifetimeModel::Global(random_law(rng)),
        2 => LifetimeModel::PhaseConditional((0..phases).map(|_| random_law(rng)).collect()),
        _ => LifetimeModel::Global(Law::Exponential {
            rate: rng.random_range(0.05..0.6),
        }),
    }
}

/// Random coherent expression using every name in `names` exactly once.
pub fn random_expr(rng: &mut impl Rng, names: &[&str]) -> StructureExpr {
    if names.len() == 1 {
        return StructureExpr::comp(names[0]);
    }
    let groups = rng.random_range(2..=names.len());
    let mut shuffled = names.to_vec();
    shuffled.shuffle(rng);
    let mut parts: Vec<Vec<&str>> = vec![Vec::new(); groups];
    for (i, n) in shuffled.into_iter().enumerate() {
        let g = if i < groups {
            i
        } else {
            rng.random_range(0..groups)
        };
        parts[g].push(n);
    }
    let children: Vec<StructureExpr> = parts.iter().map(|p| random_expr(rng, p)).collect();
    match rng.random_range(0..3) {
        0 => StructureExpr::And(children),
        1 => StructureExpr::Or(children),
        _ => StructureExpr::KOutOfN {
            k: rng.random_range(1..=children.len()),
            children,
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Shape {
    pub max_phases: usize,
    pub max_components: usize,
    pub max_types: usize,
    pub constant_hazard_only: bool,
}

pub const SMALL: Shape = Shape {
    max_phases: 3,
    max_components: 5,
    max_types: 2,
    constant_hazard_only: false,
};

/// A valid random system with 2..=max_phases phases.
pub fn random_system(rng: &mut impl Rng, shape: Shape) -> PhasedSystem {
    let n_phases = rng.random_range(2..=shape.max_phases);
    let n_comp = rng.random_range(1..=shape.max_components);
    let n_types = rng.random_range(1..=shape.max_types);
    let names = &NAMES[..n_comp];

    let types: Vec<PhysicalType> = (0..n_types)
        .map(|t| PhysicalType {
            name: format!("T{t}"),
            lifetime: random_lifetime(rng, n_phases, shape.constant_hazard_only),
        })
        .collect();
    let components: Vec<Component> = names
        .iter()
        .map(|n| Component {
            id: ComponentId::from(*n),
            physical_type: format!("T{}", rng.random_range(0..n_types)),
        })
        .collect();

    // every component in at least one phase, every phase non-empty
    let mut present: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); n_phases];
    for n in names {
        let mut any = false;
        for p in present.iter_mut() {
            if rng.random_bool(0.6) {
                p.insert(n);
                any = true;
            }
        }
        if !any {
            present[rng.random_range(0..n_phases)].insert(n);
        }
    }
    for p in present.iter_mut() {
        if p.is_empty() {
            p.insert(names[rng.random_range(0..n_comp)]);
        }
    }

    let mut t = 0.0;
    let phases = present
        .iter()
        .enumerate()
        .map(|(i, comps)| {
            let start = t;
            t += rng.random_range(0.3..2.5);
            let mut used: Vec<&str> = comps.iter().copied().collect();
            // occasionally leave a present component out of the structure
            if used.len() > 1 && rng.random_bool(0.15) {
                used.remove(rng.random_range(0..used.len()));
            }
            PhaseSpec::new(
                i + 1,
                start,
                t,
                comps.iter().map(|c| ComponentId::from(*c)),
                random_expr(rng, &used),
            )
        })
        .collect();
    let sys = PhasedSystem::new(types, components, phases, t);
    assert!(
        validate_system(&sys).is_valid(),
        "generator produced an invalid system"
    );
    sys
}

/// `count` systems from a fixed seed.
pub fn corpus(seed: u64, count: usize, shape: Shape) -> Vec<PhasedSystem> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_system(&mut rng, shape)).collect()
}

/// Same structures, but every component of one physical type and present
/// in every phase.
pub fn single_type_view(sys: &PhasedSystem) -> PhasedSystem {
    let all: Vec<ComponentId> = sys.components().iter().map(|c| c.id.clone()).collect();
    let ty = sys.types()[0].clone();
    PhasedSystem::new(
        vec![ty.clone()],
        all.iter()
            .map(|id| Component {
                id: id.clone(),
                physical_type: ty.name.clone(),
            })
            .collect(),
        sys.phases()
            .iter()
            .map(|p| PhaseSpec::new(p.index, p.start, p.end, all.clone(), p.structure.clone()))
            .collect(),
        sys.mission_end(),
    )
}

/// Evaluation points inside and at the edges of every phase.
pub fn probe_points(sys: &PhasedSystem) -> Vec<phasesig::EvalPoint> {
    let mut pts = phasesig::key_points(sys);
    for p in sys.phases() {
        pts.push(phasesig::EvalPoint::interior(p.start + 0.37 * p.duration()));
    }
    pts.sort_by(|a, b| (a.t, a.side).partial_cmp(&(b.t, b.side)).unwrap());
    pts
}
