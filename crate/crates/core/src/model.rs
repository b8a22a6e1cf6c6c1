//! Domain model for phased mission systems.
//!
//! A [`PhasedSystem`] is an ordered list of phases. Each phase declares which
//! components take part in it and a coherent structure expression over them.
//! Every component belongs to one [`PhysicalType`] that carries its lifetime
//! law. The model is plain data: construct it, run [`validate_system`], then
//! hand it to the analysis modules.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use crate::lifetime::LifetimeModel;

/// Largest number of components the bitmask evaluators support.
pub const MAX_COMPONENTS: usize = 64;

/// Unique, non-empty component label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ComponentId(String);

impl ComponentId {
    pub fn new(name: impl Into<String>) -> Self {
        ComponentId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ComponentId {
    fn from(s: &str) -> Self {
        ComponentId::new(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalType {
    pub name: String,
    pub lifetime: LifetimeModel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: ComponentId,
    /// Name of the component's [`PhysicalType`].
    pub physical_type: String,
}

/// Coherent structure expression. There is no negation node, so every
/// expression is monotone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StructureExpr {
    Component(ComponentId),
    And(Vec<StructureExpr>),
    Or(Vec<StructureExpr>),
    /// Works when at least `k` children work.
    KOutOfN {
        k: usize,
        children: Vec<StructureExpr>,
    },
}

impl StructureExpr {
    pub fn comp(name: &str) -> Self {
        StructureExpr::Component(ComponentId::new(name))
    }

    pub fn and(children: impl IntoIterator<Item = StructureExpr>) -> Self {
        StructureExpr::And(children.into_iter().collect())
    }

    pub fn or(children: impl IntoIterator<Item = StructureExpr>) -> Self {
        StructureExpr::Or(children.into_iter().collect())
    }

    pub fn k_out_of_n(k: usize, children: impl IntoIterator<Item = StructureExpr>) -> Self {
        StructureExpr::KOutOfN {
            k,
            children: children.into_iter().collect(),
        }
    }

    /// Series block of the named components.
    pub fn series(names: &[&str]) -> Self {
        Self::and(names.iter().map(|n| Self::comp(n)))
    }

    /// Parallel block of the named components.
    pub fn parallel(names: &[&str]) -> Self {
        Self::or(names.iter().map(|n| Self::comp(n)))
    }

    /// All atoms in left-to-right order (duplicates kept).
    pub fn atoms(&self) -> Vec<&ComponentId> {
        let mut out = Vec::new();
        self.collect_atoms(&mut out);
        out
    }

    fn collect_atoms<'a>(&'a self, out: &mut Vec<&'a ComponentId>) {
        match self {
            StructureExpr::Component(id) => out.push(id),
            StructureExpr::And(cs) | StructureExpr::Or(cs) => {
                cs.iter().for_each(|c| c.collect_atoms(out))
            }
            StructureExpr::KOutOfN { children, .. } => {
                children.iter().for_each(|c| c.collect_atoms(out))
            }
        }
    }
}

/// Prefix notation, e.g. `and(comp A, or(comp B, comp C))`.
impl fmt::Display for StructureExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, cs: &[StructureExpr]) -> fmt::Result {
            for (i, c) in cs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{c}")?;
            }
            Ok(())
        }
        match self {
            StructureExpr::Component(id) => write!(f, "comp {id}"),
            StructureExpr::And(cs) => {
                f.write_str("and(")?;
                list(f, cs)?;
                f.write_str(")")
            }
            StructureExpr::Or(cs) => {
                f.write_str("or(")?;
                list(f, cs)?;
                f.write_str(")")
            }
            StructureExpr::KOutOfN { k, children } => {
                write!(f, "koutofn({k}")?;
                if !children.is_empty() {
                    f.write_str(", ")?;
                }
                list(f, children)?;
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseSpec {
    /// 1-based phase number.
    pub index: usize,
    pub start: f64,
    pub end: f64,
    pub components: BTreeSet<ComponentId>,
    pub structure: StructureExpr,
}

impl PhaseSpec {
    pub fn new(
        index: usize,
        start: f64,
        end: f64,
        components: impl IntoIterator<Item = ComponentId>,
        structure: StructureExpr,
    ) -> Self {
        PhaseSpec {
            index,
            start,
            end,
            components: components.into_iter().collect(),
            structure,
        }
    }

    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// A full mission model. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasedSystem {
    types: Vec<PhysicalType>,
    components: Vec<Component>,
    phases: Vec<PhaseSpec>,
    mission_end: f64,
}

impl PhasedSystem {
    /// Assembles a system without checking it; see [`validate_system`].
    pub fn new(
        types: Vec<PhysicalType>,
        components: Vec<Component>,
        phases: Vec<PhaseSpec>,
        mission_end: f64,
    ) -> Self {
        PhasedSystem {
            types,
            components,
            phases,
            mission_end,
        }
    }

    pub fn types(&self) -> &[PhysicalType] {
        &self.types
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn phases(&self) -> &[PhaseSpec] {
        &self.phases
    }

    pub fn phase_count(&self) -> usize {
        self.phases.len()
    }

    /// Phase by 1-based index.
    pub fn phase(&self, index: usize) -> Option<&PhaseSpec> {
        index.checked_sub(1).and_then(|i| self.phases.get(i))
    }

    pub fn mission_end(&self) -> f64 {
        self.mission_end
    }

    /// Boundaries `[τ_1, …, τ_{N+1}]`.
    pub fn boundaries(&self) -> Vec<f64> {
        let mut tau: Vec<f64> = self.phases.iter().map(|p| p.start).collect();
        tau.push(self.mission_end);
        tau
    }

    pub fn component_index(&self, id: &ComponentId) -> Option<usize> {
        self.components.iter().position(|c| &c.id == id)
    }

    pub fn physical_type(&self, name: &str) -> Option<&PhysicalType> {
        self.types.iter().find(|t| t.name == name)
    }

    /// Lifetime law of the component at `index`.
    pub fn lifetime_of(&self, index: usize) -> Option<&LifetimeModel> {
        let c = self.components.get(index)?;
        self.physical_type(&c.physical_type).map(|t| &t.lifetime)
    }

    /// Lifetime law per component, in declaration order.
    ///
    /// Panics if a component references an unknown type; validated systems
    /// never do.
    pub fn component_lifetimes(&self) -> Vec<LifetimeModel> {
        (0..self.components.len())
            .map(|i| {
                self.lifetime_of(i)
                    .cloned()
                    .expect("component references an unknown physical type")
            })
            .collect()
    }

    /// 1-based phases in which the component is present.
    pub fn appearance(&self, id: &ComponentId) -> BTreeSet<usize> {
        self.phases
            .iter()
            .filter(|p| p.components.contains(id))
            .map(|p| p.index)
            .collect()
    }

    /// `present[i][c]`: whether component `c` takes part in phase `i + 1`.
    pub fn presence_matrix(&self) -> Vec<Vec<bool>> {
        self.phases
            .iter()
            .map(|p| {
                self.components
                    .iter()
                    .map(|c| p.components.contains(&c.id))
                    .collect()
            })
            .collect()
    }
}

/// A group of exchangeable components: same physical type, and either the
/// same phases (strict) or a late-entry pattern valid for history-free laws
/// (relaxed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaType {
    /// 1-based id.
    pub id: usize,
    pub physical: String,
    pub members: Vec<ComponentId>,
    /// Phases in which at least one member is present.
    pub appearance: BTreeSet<usize>,
    pub exponential_relaxed: bool,
    /// Number of members entering the system for the first time, per phase.
    pub entrants: BTreeMap<usize, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetaTypeAssignment {
    pub metatypes: Vec<MetaType>,
    /// Component → 0-based position in `metatypes`.
    pub of_component: BTreeMap<ComponentId, usize>,
}

impl MetaTypeAssignment {
    pub fn len(&self) -> usize {
        self.metatypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metatypes.is_empty()
    }

    pub fn metatype_of(&self, id: &ComponentId) -> Option<&MetaType> {
        self.of_component.get(id).map(|&k| &self.metatypes[k])
    }
}

/// A violated structural invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    TooFewPhases {
        found: usize,
    },
    PhaseIndex {
        position: usize,
        found: usize,
    },
    FirstBoundaryNotZero {
        start: f64,
    },
    NonFiniteBoundary {
        phase: usize,
    },
    NonIncreasingBoundary {
        phase: usize,
        start: f64,
        end: f64,
    },
    BoundaryGap {
        phase: usize,
        end: f64,
        next_start: f64,
    },
    MissionEndMismatch {
        mission_end: f64,
        last_end: f64,
    },
    EmptyComponentName,
    DuplicateComponent {
        component: String,
    },
    DuplicatePhysicalType {
        physical: String,
    },
    UnknownPhysicalType {
        component: String,
        physical: String,
    },
    ComponentNeverPresent {
        component: String,
    },
    UnknownPhaseComponent {
        phase: usize,
        component: String,
    },
    UnknownAtom {
        phase: usize,
        component: String,
    },
    EmptyGate {
        phase: usize,
    },
    InvalidThreshold {
        phase: usize,
        k: usize,
        n: usize,
    },
    InvalidLifetime {
        physical: String,
        detail: String,
    },
    TooManyComponents {
        found: usize,
        limit: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            TooFewPhases { found } => write!(f, "too few phases: {found} (need at least 2)"),
            PhaseIndex { position, found } => {
                write!(f, "phase at position {position} has index {found}")
            }
            FirstBoundaryNotZero { start } => {
                write!(f, "first phase starts at {start}, expected 0")
            }
            NonFiniteBoundary { phase } => write!(f, "phase {phase}: non-finite boundary"),
            NonIncreasingBoundary { phase, start, end } => write!(
                f,
                "phase {phase}: non-increasing boundary (start {start}, end {end})"
            ),
            BoundaryGap {
                phase,
                end,
                next_start,
            } => write!(
                f,
                "phase {phase} ends at {end} but phase {} starts at {next_start}",
                phase + 1
            ),
            MissionEndMismatch {
                mission_end,
                last_end,
            } => write!(
                f,
                "mission end {mission_end} differs from last phase end {last_end}"
            ),
            EmptyComponentName => write!(f, "empty component name"),
            DuplicateComponent { component } => write!(f, "duplicate component `{component}`"),
            DuplicatePhysicalType { physical } => {
                write!(f, "duplicate physical type `{physical}`")
            }
            UnknownPhysicalType {
                component,
                physical,
            } => write!(
                f,
                "component `{component}` references unknown physical type `{physical}`"
            ),
            ComponentNeverPresent { component } => {
                write!(f, "component `{component}` appears in no phase")
            }
            UnknownPhaseComponent { phase, component } => {
                write!(f, "phase {phase}: lists undeclared component `{component}`")
            }
            UnknownAtom { phase, component } => write!(
                f,
                "phase {phase}: unknown atom `{component}` (not present in the phase)"
            ),
            EmptyGate { phase } => write!(f, "phase {phase}: gate without children"),
            InvalidThreshold { phase, k, n } => write!(
                f,
                "phase {phase}: koutofn threshold {k} invalid for {n} children"
            ),
            InvalidLifetime { physical, detail } => {
                write!(f, "physical type `{physical}`: {detail}")
            }
            TooManyComponents { found, limit } => {
                write!(
                    f,
                    "{found} components exceed the supported maximum of {limit}"
                )
            }
        }
    }
}

/// Non-fatal observation about a system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    /// Present in the phase but never used by its structure expression.
    UnusedComponent { phase: usize, component: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::UnusedComponent { phase, component } => write!(
                f,
                "phase {phase}: component `{component}` is present but structurally irrelevant"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Warning>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// `Ok(())` for a valid system, otherwise all violations joined.
    pub fn into_result(self) -> crate::Result<()> {
        if self.is_valid() {
            Ok(())
        } else {
            let msgs: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(crate::Error::InvalidSystem(msgs.join("; ")))
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "valid")?;
        }
        for v in &self.violations {
            writeln!(f, "error: {v}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// Checks every structural invariant of the model and reports all violations.
pub fn validate_system(sys: &PhasedSystem) -> ValidationReport {
    let mut report = ValidationReport::default();
    let v = &mut report.violations;
    let n = sys.phases.len();

    if n < 2 {
        v.push(Violation::TooFewPhases { found: n });
    }
    for (pos, phase) in sys.phases.iter().enumerate() {
        if phase.index != pos + 1 {
            v.push(Violation::PhaseIndex {
                position: pos + 1,
                found: phase.index,
            });
        }
        if !phase.start.is_finite() || !phase.end.is_finite() {
            v.push(Violation::NonFiniteBoundary { phase: pos + 1 });
        } else if phase.end <= phase.start {
            v.push(Violation::NonIncreasingBoundary {
                phase: pos + 1,
                start: phase.start,
                end: phase.end,
            });
        }
    }
    if let Some(first) = sys.phases.first() {
        if first.start != 0.0 {
            v.push(Violation::FirstBoundaryNotZero { start: first.start });
        }
    }
    for (pos, pair) in sys.phases.windows(2).enumerate() {
        if pair[0].end != pair[1].start {
            v.push(Violation::BoundaryGap {
                phase: pos + 1,
                end: pair[0].end,
                next_start: pair[1].start,
            });
        }
    }
    if let Some(last) = sys.phases.last() {
        if last.end != sys.mission_end {
            v.push(Violation::MissionEndMismatch {
                mission_end: sys.mission_end,
                last_end: last.end,
            });
        }
    }

    let mut type_names = HashSet::new();
    for t in &sys.types {
        if !type_names.insert(t.name.as_str()) {
            v.push(Violation::DuplicatePhysicalType {
                physical: t.name.clone(),
            });
        }
        if let Err(detail) = t.lifetime.check(n) {
            v.push(Violation::InvalidLifetime {
                physical: t.name.clone(),
                detail,
            });
        }
    }

    if sys.components.len() > MAX_COMPONENTS {
        v.push(Violation::TooManyComponents {
            found: sys.components.len(),
            limit: MAX_COMPONENTS,
        });
    }
    let mut declared = HashSet::new();
    for c in &sys.components {
        if c.id.as_str().is_empty() {
            v.push(Violation::EmptyComponentName);
        }
        if !declared.insert(&c.id) {
            v.push(Violation::DuplicateComponent {
                component: c.id.to_string(),
            });
        }
        if !type_names.contains(c.physical_type.as_str()) {
            v.push(Violation::UnknownPhysicalType {
                component: c.id.to_string(),
                physical: c.physical_type.clone(),
            });
        }
        if !sys.phases.iter().any(|p| p.components.contains(&c.id)) {
            v.push(Violation::ComponentNeverPresent {
                component: c.id.to_string(),
            });
        }
    }

    for (pos, phase) in sys.phases.iter().enumerate() {
        let idx = pos + 1;
        for id in &phase.components {
            if !declared.contains(id) {
                v.push(Violation::UnknownPhaseComponent {
                    phase: idx,
                    component: id.to_string(),
                });
            }
        }
        check_expr(&phase.structure, idx, &phase.components, v);
        let used: HashSet<&ComponentId> = phase.structure.atoms().into_iter().collect();
        for id in &phase.components {
            if !used.contains(id) {
                report.warnings.push(Warning::UnusedComponent {
                    phase: idx,
                    component: id.to_string(),
                });
            }
        }
    }
    report
}

fn check_expr(
    expr: &StructureExpr,
    phase: usize,
    present: &BTreeSet<ComponentId>,
    v: &mut Vec<Violation>,
) {
    match expr {
        StructureExpr::Component(id) => {
            if !present.contains(id) {
                v.push(Violation::UnknownAtom {
                    phase,
                    component: id.to_string(),
                });
            }
        }
        StructureExpr::And(cs) | StructureExpr::Or(cs) => {
            if cs.is_empty() {
                v.push(Violation::EmptyGate { phase });
            }
            cs.iter().for_each(|c| check_expr(c, phase, present, v));
        }
        StructureExpr::KOutOfN { k, children } => {
            if *k == 0 || *k > children.len() {
                v.push(Violation::InvalidThreshold {
                    phase,
                    k: *k,
                    n: children.len(),
                });
            }
            children
                .iter()
                .for_each(|c| check_expr(c, phase, present, v));
        }
    }
}
