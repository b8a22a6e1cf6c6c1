//! Structure-function evaluation and meta-type derivation.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::model::{ComponentId, MetaType, MetaTypeAssignment, PhasedSystem, StructureExpr};

/// States of the components present in one phase (the vector `X_i`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseState {
    pub phase: usize,
    pub states: BTreeMap<ComponentId, bool>,
}

impl PhaseState {
    pub fn new(phase: usize, states: impl IntoIterator<Item = (ComponentId, bool)>) -> Self {
        PhaseState {
            phase,
            states: states.into_iter().collect(),
        }
    }

    /// Every listed component working except those in `failed`.
    pub fn all_but<'a>(
        phase: usize,
        present: impl IntoIterator<Item = &'a ComponentId>,
        failed: &[&str],
    ) -> Self {
        Self::new(
            phase,
            present
                .into_iter()
                .map(|id| (id.clone(), !failed.contains(&id.as_str()))),
        )
    }
}

/// One [`PhaseState`] per phase, in phase order (the vector `X`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MissionTrajectory {
    pub phases: Vec<PhaseState>,
}

/// Evaluates `φ_i(X_i)`.
pub fn eval_phase(expr: &StructureExpr, state: &PhaseState) -> Result<bool> {
    match expr {
        StructureExpr::Component(id) => {
            state
                .states
                .get(id)
                .copied()
                .ok_or_else(|| Error::MissingAtom {
                    component: id.to_string(),
                    phase: state.phase,
                })
        }
        StructureExpr::And(cs) => {
            let mut all = true;
            for c in cs {
                all &= eval_phase(c, state)?;
            }
            Ok(all)
        }
        StructureExpr::Or(cs) => {
            let mut any = false;
            for c in cs {
                any |= eval_phase(c, state)?;
            }
            Ok(any)
        }
        StructureExpr::KOutOfN { k, children } => {
            let mut up = 0;
            for c in children {
                up += eval_phase(c, state)? as usize;
            }
            Ok(up >= *k)
        }
    }
}

/// Evaluates the mission structure function, the product of the phase
/// structure functions.
pub fn eval_mission(sys: &PhasedSystem, traj: &MissionTrajectory) -> Result<bool> {
    if traj.phases.len() != sys.phase_count() {
        return Err(Error::StateCoverage {
            phase: traj.phases.len().min(sys.phase_count()) + 1,
            detail: format!(
                "trajectory has {} phases, system has {}",
                traj.phases.len(),
                sys.phase_count()
            ),
        });
    }
    for (spec, state) in sys.phases().iter().zip(&traj.phases) {
        let keys: BTreeSet<&ComponentId> = state.states.keys().collect();
        let expected: BTreeSet<&ComponentId> = spec.components.iter().collect();
        if state.phase != spec.index || keys != expected {
            let missing: Vec<_> = expected.difference(&keys).map(|c| c.as_str()).collect();
            let extra: Vec<_> = keys.difference(&expected).map(|c| c.as_str()).collect();
            return Err(Error::StateCoverage {
                phase: spec.index,
                detail: format!(
                    "state labelled phase {}, missing {missing:?}, extra {extra:?}",
                    state.phase
                ),
            });
        }
    }

    let mut failed_at: BTreeMap<&ComponentId, usize> = BTreeMap::new();
    for state in &traj.phases {
        for (id, &up) in &state.states {
            match (up, failed_at.get(id)) {
                (true, Some(&failed_in)) => {
                    return Err(Error::InconsistentTrajectory {
                        component: id.to_string(),
                        failed_in,
                        works_in: state.phase,
                    })
                }
                (false, None) => {
                    failed_at.insert(id, state.phase);
                }
                _ => {}
            }
        }
    }

    let mut works = true;
    for (spec, state) in sys.phases().iter().zip(&traj.phases) {
        works &= eval_phase(&spec.structure, state)?;
    }
    Ok(works)
}

/// A structure expression with atoms resolved to bit positions, for
/// evaluating many states quickly. Bit `c` is component `c` in declaration
/// order.
#[derive(Debug, Clone)]
pub(crate) enum Compiled {
    Atom(u64),
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
    AtLeast(usize, Vec<Compiled>),
}

impl Compiled {
    /// Panics on atoms that are not declared components; validated systems
    /// have none.
    pub(crate) fn new(expr: &StructureExpr, sys: &PhasedSystem) -> Self {
        let many = |cs: &[StructureExpr]| cs.iter().map(|c| Compiled::new(c, sys)).collect();
        match expr {
            StructureExpr::Component(id) => {
                let idx = sys
                    .component_index(id)
                    .expect("structure atom is not a declared component");
                Compiled::Atom(1u64 << idx)
            }
            StructureExpr::And(cs) => Compiled::And(many(cs)),
            StructureExpr::Or(cs) => Compiled::Or(many(cs)),
            StructureExpr::KOutOfN { k, children } => Compiled::AtLeast(*k, many(children)),
        }
    }

    pub(crate) fn eval(&self, up: u64) -> bool {
        match self {
            Compiled::Atom(bit) => up & bit != 0,
            Compiled::And(cs) => cs.iter().all(|c| c.eval(up)),
            Compiled::Or(cs) => cs.iter().any(|c| c.eval(up)),
            Compiled::AtLeast(k, cs) => cs.iter().filter(|c| c.eval(up)).count() >= *k,
        }
    }
}

pub(crate) fn compile_phases(sys: &PhasedSystem) -> Vec<Compiled> {
    sys.phases()
        .iter()
        .map(|p| Compiled::new(&p.structure, sys))
        .collect()
}

/// Bitmask of the components present in each phase.
pub(crate) fn presence_masks(sys: &PhasedSystem) -> Vec<u64> {
    sys.presence_matrix()
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .filter(|(_, &p)| p)
                .fold(0u64, |m, (c, _)| m | 1 << c)
        })
        .collect()
}

/// Components in meta-type order: earliest phase, then name.
fn appearance_order(sys: &PhasedSystem) -> Vec<(ComponentId, String, BTreeSet<usize>)> {
    let mut comps: Vec<_> = sys
        .components()
        .iter()
        .map(|c| (c.id.clone(), c.physical_type.clone(), sys.appearance(&c.id)))
        .collect();
    comps.sort_by(|a, b| {
        let first = |s: &BTreeSet<usize>| s.iter().next().copied().unwrap_or(usize::MAX);
        (first(&a.2), &a.0).cmp(&(first(&b.2), &b.0))
    });
    comps
}

/// Partitions the components into meta-types.
///
/// Strict mode groups components with the same physical type and the same
/// phase-appearance set. Relaxed mode additionally lets a component join an
/// existing group of its physical type when it enters in one of the group's
/// phases and, from then on, is present in exactly the group's phases. This
/// keeps "survivors of the previous phase plus new entrants" exact for the
/// group's counts, and is only valid when the type's per-phase law does not
/// depend on a component's history.
pub fn derive_meta_types(
    sys: &PhasedSystem,
    relax_exponential: bool,
) -> Result<MetaTypeAssignment> {
    struct Group {
        physical: String,
        appearance: BTreeSet<usize>,
        members: Vec<ComponentId>,
        entrants: BTreeMap<usize, usize>,
    }
    let mut groups: Vec<Group> = Vec::new();

    for (id, physical, appearance) in appearance_order(sys) {
        let entry = appearance.iter().next().copied().unwrap_or(0);
        let strict = groups
            .iter()
            .position(|g| g.physical == physical && g.appearance == appearance);
        let target = match strict {
            Some(g) => Some(g),
            None if relax_exponential => {
                let late = groups.iter().position(|g| {
                    g.physical == physical
                        && g.appearance
                            .range(entry..)
                            .copied()
                            .collect::<BTreeSet<_>>()
                            == appearance
                });
                if late.is_some() {
                    let history_free = sys
                        .physical_type(&physical)
                        .is_some_and(|t| t.lifetime.is_history_free());
                    if !history_free {
                        return Err(Error::RelaxationNotExponential { physical });
                    }
                }
                late
            }
            None => None,
        };
        match target {
            Some(g) => {
                let g = &mut groups[g];
                g.members.push(id);
                *g.entrants.entry(entry).or_default() += 1;
            }
            None => groups.push(Group {
                physical,
                appearance,
                members: vec![id],
                entrants: BTreeMap::from([(entry, 1)]),
            }),
        }
    }

    let mut of_component = BTreeMap::new();
    let metatypes = groups
        .into_iter()
        .enumerate()
        .map(|(k, g)| {
            for m in &g.members {
                of_component.insert(m.clone(), k);
            }
            MetaType {
                id: k + 1,
                physical: g.physical,
                members: g.members,
                appearance: g.appearance,
                exponential_relaxed: g.entrants.len() > 1,
                entrants: g.entrants,
            }
        })
        .collect();
    Ok(MetaTypeAssignment {
        metatypes,
        of_component,
    })
}

/// Checks that `mta` partitions exactly the components of `sys` and that
/// every group is internally consistent with the system's phase layout.
pub(crate) fn check_assignment(sys: &PhasedSystem, mta: &MetaTypeAssignment) -> Result<()> {
    let bad = |msg: String| Err(Error::AssignmentMismatch(msg));
    if mta.of_component.len() != sys.components().len() {
        return bad(format!(
            "{} components assigned, system has {}",
            mta.of_component.len(),
            sys.components().len()
        ));
    }
    let mut seen = BTreeSet::new();
    for (k, mt) in mta.metatypes.iter().enumerate() {
        if mt.members.is_empty() {
            return bad(format!("meta-type {} is empty", mt.id));
        }
        let mut entrants: BTreeMap<usize, usize> = BTreeMap::new();
        for m in &mt.members {
            let Some(c) = sys.components().iter().find(|c| &c.id == m) else {
                return bad(format!("unknown component `{m}`"));
            };
            if c.physical_type != mt.physical {
                return bad(format!("`{m}` is not of physical type `{}`", mt.physical));
            }
            if !seen.insert(m) || mta.of_component.get(m) != Some(&k) {
                return bad(format!("`{m}` is assigned inconsistently"));
            }
            let app = sys.appearance(m);
            let entry = app.iter().next().copied().unwrap_or(0);
            if mt
                .appearance
                .range(entry..)
                .copied()
                .collect::<BTreeSet<_>>()
                != app
            {
                return bad(format!(
                    "`{m}` appears in {app:?}, which does not follow meta-type {} phases {:?}",
                    mt.id, mt.appearance
                ));
            }
            *entrants.entry(entry).or_default() += 1;
        }
        if entrants != mt.entrants {
            return bad(format!("meta-type {} entrant counts are wrong", mt.id));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ids(names: &[&str]) -> Vec<ComponentId> {
        names.iter().map(|n| ComponentId::from(*n)).collect()
    }

    #[test]
    fn series_all_working() {
        let sys = fixtures::example1();
        let p1 = sys.phase(1).unwrap();
        let s = PhaseState::all_but(1, &p1.components, &[]);
        assert!(eval_phase(&p1.structure, &s).unwrap());
    }

    #[test]
    fn example1_phase3_truth_table() {
        let sys = fixtures::example1();
        let p3 = sys.phase(3).unwrap();
        let s = PhaseState::all_but(3, &p3.components, &["B"]);
        assert!(eval_phase(&p3.structure, &s).unwrap());
        let working = [["B"], ["C"], ["A"]]
            .iter()
            .filter(|f| {
                eval_phase(&p3.structure, &PhaseState::all_but(3, &p3.components, *f)).unwrap()
            })
            .count();
        assert_eq!(working, 2);
    }

    #[test]
    fn k_out_of_n_below_threshold() {
        let e = StructureExpr::k_out_of_n(
            2,
            ids(&["a", "b", "c"])
                .into_iter()
                .map(StructureExpr::Component),
        );
        let s = PhaseState::new(
            1,
            [("a".into(), true), ("b".into(), false), ("c".into(), false)],
        );
        assert!(!eval_phase(&e, &s).unwrap());
    }

    #[test]
    fn missing_atom() {
        let e = StructureExpr::series(&["a", "b"]);
        let s = PhaseState::new(2, [("a".into(), true)]);
        assert_eq!(
            eval_phase(&e, &s),
            Err(Error::MissingAtom {
                component: "b".into(),
                phase: 2
            })
        );
    }

    fn traj(sys: &PhasedSystem, failed: [&[&str]; 3]) -> MissionTrajectory {
        MissionTrajectory {
            phases: sys
                .phases()
                .iter()
                .zip(failed)
                .map(|(p, f)| PhaseState::all_but(p.index, &p.components, f))
                .collect(),
        }
    }

    #[test]
    fn mission_examples() {
        let sys = fixtures::example1();
        assert!(eval_mission(&sys, &traj(&sys, [&[], &[], &[]])).unwrap());
        assert!(!eval_mission(&sys, &traj(&sys, [&[], &["A"], &["A"]])).unwrap());
        assert!(matches!(
            eval_mission(&sys, &traj(&sys, [&["A"], &[], &[]])),
            Err(Error::InconsistentTrajectory {
                failed_in: 1,
                works_in: 2,
                ..
            })
        ));
        assert!(matches!(
            eval_mission(&sys, &MissionTrajectory { phases: vec![] }),
            Err(Error::StateCoverage { .. })
        ));
    }

    fn members(mta: &MetaTypeAssignment) -> Vec<Vec<&str>> {
        mta.metatypes
            .iter()
            .map(|m| m.members.iter().map(|c| c.as_str()).collect())
            .collect()
    }

    #[test]
    fn example3_strict_split() {
        let sys = fixtures::example3();
        let mta = derive_meta_types(&sys, false).unwrap();
        assert_eq!(
            members(&mta),
            vec![
                vec!["Ha", "Hb"],
                vec!["Hc", "Hd"],
                vec!["La", "Lb"],
                vec!["Aa", "Ab"],
                vec!["Ca", "Cb"]
            ]
        );
        check_assignment(&sys, &mta).unwrap();
    }

    #[test]
    fn example2_relaxed_split() {
        let sys = fixtures::example2();
        let mta = derive_meta_types(&sys, true).unwrap();
        assert_eq!(members(&mta), vec![vec!["A", "E"], vec!["B", "C", "D"]]);
        assert!(mta.metatypes[1].exponential_relaxed);
        assert_eq!(mta.metatypes[1].entrants, BTreeMap::from([(1, 1), (3, 2)]));
        check_assignment(&sys, &mta).unwrap();
        assert_eq!(derive_meta_types(&sys, false).unwrap().len(), 3);
    }

    #[test]
    fn single_meta_type() {
        let mta = derive_meta_types(&fixtures::example1(), false).unwrap();
        assert_eq!(mta.len(), 1);
        assert!(!mta.metatypes[0].exponential_relaxed);
    }

    #[test]
    fn relaxation_needs_history_free_law() {
        use crate::lifetime::{Law, LifetimeModel};
        use crate::model::PhysicalType;
        let sys = fixtures::example2();
        let types = vec![PhysicalType {
            name: sys.types()[0].name.clone(),
            lifetime: LifetimeModel::Global(Law::Weibull {
                scale: 250.0,
                shape: 2.6,
            }),
        }];
        let sys = PhasedSystem::new(
            types,
            sys.components().to_vec(),
            sys.phases().to_vec(),
            sys.mission_end(),
        );
        assert!(matches!(
            derive_meta_types(&sys, true),
            Err(Error::RelaxationNotExponential { .. })
        ));
        assert!(derive_meta_types(&sys, false).is_ok());
    }

    #[test]
    fn compiled_matches_tree() {
        let sys = fixtures::example3();
        let compiled = compile_phases(&sys);
        let n = sys.components().len();
        for (spec, c) in sys.phases().iter().zip(&compiled) {
            for up in 0u64..(1 << n) {
                let state = PhaseState::new(
                    spec.index,
                    spec.components.iter().map(|id| {
                        let i = sys.component_index(id).unwrap();
                        (id.clone(), up >> i & 1 == 1)
                    }),
                );
                assert_eq!(c.eval(up), eval_phase(&spec.structure, &state).unwrap());
            }
        }
    }
}
