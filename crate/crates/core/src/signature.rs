//! Phase-indexed survival signatures.
//!
//! `Φ_p(l)` is the probability that the mission has not failed by the end of
//! phase `p`, given that exactly `l_ik` members of meta-type `k` work in
//! phase `i` for every `i ≤ p`. Tables are computed exactly by walking
//! nested chains of working subsets, one chain per meta-type, so only
//! trajectories that respect non-repairability are ever counted.
//!
//! A level vector holds one count per *slot*, a pair `(phase, meta-type)`
//! where the meta-type is present, ordered by phase and then meta-type.
//! Meta-types absent from a phase contribute no column.

use std::collections::{BTreeMap, HashMap};
use std::fmt::{self, Write as _};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{MetaTypeAssignment, PhasedSystem};
use crate::structure::{check_assignment, compile_phases, presence_masks, Compiled};

/// Largest number of component-phase slots the brute-force oracle accepts.
pub const BRUTE_FORCE_LIMIT: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LevelVector(pub Vec<u32>);

impl LevelVector {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

impl From<Vec<u32>> for LevelVector {
    fn from(v: Vec<u32>) -> Self {
        LevelVector(v)
    }
}

impl From<&[u32]> for LevelVector {
    fn from(v: &[u32]) -> Self {
        LevelVector(v.to_vec())
    }
}

impl fmt::Display for LevelVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for (i, l) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{l}")?;
        }
        f.write_str(")")
    }
}

/// `successes / total`, where `total = ∏ C(m_ik, l_ik)` counts every chain
/// with the given levels and `successes` those that keep the mission alive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureValue {
    pub successes: BigUint,
    pub total: BigUint,
}

impl SignatureValue {
    /// Reduced exact value.
    pub fn ratio(&self) -> BigRational {
        BigRational::new(
            BigInt::from(self.successes.clone()),
            BigInt::from(self.total.clone()),
        )
    }

    pub fn to_f64(&self) -> f64 {
        ratio_to_f64(&self.ratio())
    }
}

pub(crate) fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Which meta-types are present in each phase and how many new members
/// each brings in. Drives the `m_ik` recursion.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    /// `present[i][k]` for 0-based phase `i` and meta-type `k`.
    pub present: Vec<Vec<bool>>,
    /// `entrants[i][k]`: members of `k` first present in phase `i + 1`.
    pub entrants: Vec<Vec<u32>>,
}

impl Layout {
    pub fn new(sys: &PhasedSystem, mta: &MetaTypeAssignment) -> Self {
        let n = sys.phase_count();
        let k = mta.len();
        let mut present = vec![vec![false; k]; n];
        let mut entrants = vec![vec![0u32; k]; n];
        for (k, mt) in mta.metatypes.iter().enumerate() {
            for &i in &mt.appearance {
                present[i - 1][k] = true;
            }
            for (&i, &c) in &mt.entrants {
                entrants[i - 1][k] = c as u32;
            }
        }
        Layout { present, entrants }
    }

    pub fn phases(&self) -> usize {
        self.present.len()
    }

    pub fn metatypes(&self) -> usize {
        self.present.first().map_or(0, Vec::len)
    }

    /// `(phase, meta-type)` pairs, 1-based, for the first `p` phases.
    pub fn slots(&self, p: usize) -> Vec<(usize, usize)> {
        (0..p.min(self.phases()))
            .flat_map(|i| {
                (0..self.metatypes())
                    .filter(move |&k| self.present[i][k])
                    .map(move |k| (i + 1, k + 1))
            })
            .collect()
    }

    /// `m_ik` for every slot of `l`, or an infeasible-level error.
    pub fn m_counts(&self, p: usize, l: &[u32]) -> Result<Vec<u32>> {
        let slots = self.slots(p);
        if l.len() != slots.len() {
            return Err(Error::InfeasibleLevel(format!(
                "{} levels given, phase {p} has {} slots",
                l.len(),
                slots.len()
            )));
        }
        let mut alive = vec![0u32; self.metatypes()];
        let mut m = Vec::with_capacity(l.len());
        for (&(i, k), &lik) in slots.iter().zip(l) {
            let mik = alive[k - 1] + self.entrants[i - 1][k - 1];
            if lik > mik {
                return Err(Error::InfeasibleLevel(format!(
                    "l_{i}{k} = {lik} exceeds m_{i}{k} = {mik}"
                )));
            }
            alive[k - 1] = lik;
            m.push(mik);
        }
        Ok(m)
    }

    /// Every feasible level vector of depth `p`, in lexicographic order.
    pub fn feasible_levels(&self, p: usize) -> Vec<LevelVector> {
        let slots = self.slots(p);
        let mut out = Vec::new();
        let mut cur = Vec::with_capacity(slots.len());
        let mut alive = vec![0u32; self.metatypes()];
        self.feasible_rec(&slots, 0, &mut alive, &mut cur, &mut out);
        out
    }

    fn feasible_rec(
        &self,
        slots: &[(usize, usize)],
        pos: usize,
        alive: &mut Vec<u32>,
        cur: &mut Vec<u32>,
        out: &mut Vec<LevelVector>,
    ) {
        let Some(&(i, k)) = slots.get(pos) else {
            out.push(LevelVector(cur.clone()));
            return;
        };
        let saved = alive[k - 1];
        let m = saved + self.entrants[i - 1][k - 1];
        for l in 0..=m {
            alive[k - 1] = l;
            cur.push(l);
            self.feasible_rec(slots, pos + 1, alive, cur, out);
            cur.pop();
        }
        alive[k - 1] = saved;
    }
}

/// Sparse table of `Φ_p`. Zero entries are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureTable {
    pub depth: usize,
    pub slots: Vec<(usize, usize)>,
    pub entries: BTreeMap<LevelVector, SignatureValue>,
}

impl SignatureTable {
    fn header(&self, metatypes: usize, phases: usize) -> Vec<String> {
        let compact = metatypes < 10 && phases < 10;
        self.slots
            .iter()
            .map(|(i, k)| {
                if compact {
                    format!("l_{i}{k}")
                } else {
                    format!("l_{i}_{k}")
                }
            })
            .collect()
    }
}

/// `Φ_1 … Φ_N` together with the assignment they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureFamily {
    pub assignment: MetaTypeAssignment,
    pub layout: Layout,
    pub tables: Vec<SignatureTable>,
}

impl SignatureFamily {
    pub fn phases(&self) -> usize {
        self.tables.len()
    }

    /// Table of `Φ_p`, 1-based.
    pub fn table(&self, p: usize) -> Option<&SignatureTable> {
        p.checked_sub(1).and_then(|i| self.tables.get(i))
    }

    /// CSV with columns `l_11…, numerator, denominator, decimal`. Fractions
    /// are reduced.
    pub fn table_csv(&self, p: usize) -> Result<String> {
        let table = self.checked_table(p)?;
        let mut out = table
            .header(self.layout.metatypes(), self.phases())
            .join(",");
        out.push_str(",numerator,denominator,decimal\n");
        for (l, v) in &table.entries {
            let r = v.ratio();
            for x in l.as_slice() {
                write!(out, "{x},").unwrap();
            }
            writeln!(out, "{},{},{}", r.numer(), r.denom(), v.to_f64()).unwrap();
        }
        Ok(out)
    }

    /// Aligned text table in the usual layout: level columns then `Φ_p`.
    pub fn table_text(&self, p: usize) -> Result<String> {
        let table = self.checked_table(p)?;
        let mut header = table.header(self.layout.metatypes(), self.phases());
        header.push(format!("Phi_{p}"));
        let rows: Vec<Vec<String>> = table
            .entries
            .iter()
            .map(|(l, v)| {
                let mut row: Vec<String> = l.as_slice().iter().map(u32::to_string).collect();
                row.push(v.ratio().to_string());
                row
            })
            .collect();
        let width: Vec<usize> = (0..header.len())
            .map(|c| {
                rows.iter()
                    .map(|r| r[c].len())
                    .chain([header[c].len()])
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        let line = |out: &mut String, cells: &[String]| {
            let cells: Vec<String> = cells
                .iter()
                .zip(&width)
                .map(|(c, w)| format!("{c:>w$}"))
                .collect();
            writeln!(out, "{}", cells.join("  ")).unwrap();
        };
        line(&mut out, &header);
        for r in &rows {
            line(&mut out, r);
        }
        Ok(out)
    }

    fn checked_table(&self, p: usize) -> Result<&SignatureTable> {
        self.table(p).ok_or(Error::PhaseOutOfRange {
            phase: p,
            phases: self.phases(),
        })
    }
}

/// Counts of surviving chains for every depth, keyed by level prefix.
type Counts = Vec<HashMap<Vec<u32>, u64>>;

struct Walker<'a> {
    phases: &'a [Compiled],
    presence: &'a [u64],
    /// Member mask of each meta-type.
    members: &'a [u64],
    layout: &'a Layout,
}

impl Walker<'_> {
    /// Candidate mask (present, alive members) of phase `i` (0-based).
    fn candidates(&self, i: usize, alive: u64) -> u64 {
        (0..self.members.len())
            .filter(|&k| self.layout.present[i][k])
            .fold(0, |acc, k| {
                acc | (alive & self.members[k] & self.presence[i])
            })
    }

    /// Extends the chain with working set `up` in phase `i`, recording a
    /// success at depth `i + 1` and descending if the phase works.
    fn step(&self, i: usize, alive: u64, up: u64, prefix: &mut Vec<u32>, counts: &mut Counts) {
        let cand = self.candidates(i, alive);
        let next_alive = (alive & !cand) | up;
        if !self.phases[i].eval(next_alive & self.presence[i]) {
            return;
        }
        let base = prefix.len();
        for k in 0..self.members.len() {
            if self.layout.present[i][k] {
                prefix.push((up & self.members[k]).count_ones());
            }
        }
        *counts[i].entry(prefix.clone()).or_insert(0) += 1;
        if i + 1 < self.phases.len() {
            let cand = self.candidates(i + 1, next_alive);
            for sub in submasks(cand) {
                self.step(i + 1, next_alive, sub, prefix, counts);
            }
        }
        prefix.truncate(base);
    }
}

/// All submasks of `mask`, including `mask` itself and zero.
fn submasks(mask: u64) -> impl Iterator<Item = u64> {
    let mut next = Some(mask);
    std::iter::from_fn(move || {
        let cur = next?;
        next = if cur == 0 {
            None
        } else {
            Some((cur - 1) & mask)
        };
        Some(cur)
    })
}

fn member_masks(sys: &PhasedSystem, mta: &MetaTypeAssignment) -> Vec<u64> {
    mta.metatypes
        .iter()
        .map(|mt| {
            mt.members.iter().fold(0u64, |m, id| {
                m | 1 << sys.component_index(id).expect("assignment checked")
            })
        })
        .collect()
}

fn binomial(n: u32, k: u32) -> BigUint {
    let mut acc = BigUint::one();
    for j in 0..k.min(n - k) {
        acc = acc * (n - j) / (j + 1);
    }
    acc
}

/// Exact family `Φ_1 … Φ_N`.
///
/// The system must have passed validation and `mta` must come from
/// [`derive_meta_types`](crate::structure::derive_meta_types) or satisfy
/// the same rules.
pub fn compute_signature_family(
    sys: &PhasedSystem,
    mta: &MetaTypeAssignment,
) -> Result<SignatureFamily> {
    crate::model::validate_system(sys).into_result()?;
    check_assignment(sys, mta)?;
    let layout = Layout::new(sys, mta);
    let phases = compile_phases(sys);
    let presence = presence_masks(sys);
    let members = member_masks(sys, mta);
    let walker = Walker {
        phases: &phases,
        presence: &presence,
        members: &members,
        layout: &layout,
    };
    let n = sys.phase_count();
    let all_alive = members.iter().fold(0, |a, m| a | m);

    let first: Vec<u64> = submasks(walker.candidates(0, all_alive)).collect();
    let counts = first
        .into_par_iter()
        .fold(
            || vec![HashMap::new(); n],
            |mut counts: Counts, up| {
                walker.step(0, all_alive, up, &mut Vec::new(), &mut counts);
                counts
            },
        )
        .reduce(
            || vec![HashMap::new(); n],
            |mut a, b| {
                for (da, db) in a.iter_mut().zip(b) {
                    for (key, c) in db {
                        *da.entry(key).or_insert(0) += c;
                    }
                }
                a
            },
        );

    let tables = counts
        .into_iter()
        .enumerate()
        .map(|(i, depth)| {
            let p = i + 1;
            let entries = depth
                .into_iter()
                .map(|(key, c)| {
                    let m = layout
                        .m_counts(p, &key)
                        .expect("enumerated levels are feasible");
                    let total = m
                        .iter()
                        .zip(&key)
                        .fold(BigUint::one(), |acc, (&m, &l)| acc * binomial(m, l));
                    (
                        LevelVector(key),
                        SignatureValue {
                            successes: BigUint::from(c),
                            total,
                        },
                    )
                })
                .collect();
            SignatureTable {
                depth: p,
                slots: layout.slots(p),
                entries,
            }
        })
        .collect();

    Ok(SignatureFamily {
        assignment: mta.clone(),
        layout,
        tables,
    })
}

/// `Φ_p(l)`: the stored value, or zero for a feasible vector that is not
/// stored.
pub fn signature_at(fam: &SignatureFamily, p: usize, l: &LevelVector) -> Result<BigRational> {
    let table = fam.checked_table(p)?;
    fam.layout.m_counts(p, l.as_slice())?;
    Ok(table
        .entries
        .get(l)
        .map(SignatureValue::ratio)
        .unwrap_or_else(BigRational::zero))
}

/// Direct evaluation of `Φ_p` for every feasible level vector by
/// enumerating all raw state assignments of the first `p` phases, discarding
/// those that repair a component, and averaging the mission structure
/// function per level vector.
pub fn brute_force_table(
    sys: &PhasedSystem,
    mta: &MetaTypeAssignment,
    p: usize,
) -> Result<BTreeMap<LevelVector, BigRational>> {
    crate::model::validate_system(sys).into_result()?;
    check_assignment(sys, mta)?;
    let n = sys.phase_count();
    if p == 0 || p > n {
        return Err(Error::PhaseOutOfRange {
            phase: p,
            phases: n,
        });
    }
    let presence = sys.presence_matrix();
    let cells: Vec<(usize, usize)> = (0..p)
        .flat_map(|i| {
            presence[i]
                .iter()
                .enumerate()
                .filter(|(_, &on)| on)
                .map(move |(c, _)| (i, c))
        })
        .collect();
    if cells.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge {
            slots: cells.len(),
            limit: BRUTE_FORCE_LIMIT,
        });
    }

    let phases = &sys.phases()[..p];
    let type_of: Vec<usize> = sys
        .components()
        .iter()
        .map(|c| mta.of_component[&c.id])
        .collect();
    let layout = Layout::new(sys, mta);
    let slots = layout.slots(p);

    let mut tally: BTreeMap<Vec<u32>, (u64, u64)> = BTreeMap::new();
    'raw: for raw in 0u64..(1 << cells.len()) {
        let mut failed = vec![false; sys.components().len()];
        let mut states: Vec<BTreeMap<&crate::model::ComponentId, bool>> = vec![BTreeMap::new(); p];
        let mut levels: BTreeMap<(usize, usize), u32> = BTreeMap::new();
        for (bit, &(i, c)) in cells.iter().enumerate() {
            let up = raw >> bit & 1 == 1;
            if up && failed[c] {
                continue 'raw;
            }
            failed[c] |= !up;
            states[i].insert(&sys.components()[c].id, up);
            *levels.entry((i + 1, type_of[c] + 1)).or_insert(0) += up as u32;
        }
        let key: Vec<u32> = slots
            .iter()
            .map(|s| levels.get(s).copied().unwrap_or(0))
            .collect();
        let works = phases.iter().zip(&states).all(|(spec, st)| {
            let state = crate::structure::PhaseState::new(
                spec.index,
                st.iter().map(|(id, &up)| ((*id).clone(), up)),
            );
            crate::structure::eval_phase(&spec.structure, &state).expect("validated system")
        });
        let e = tally.entry(key).or_insert((0, 0));
        e.0 += works as u64;
        e.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(k, (s, t))| (LevelVector(k), BigRational::new(s.into(), t.into())))
        .collect())
}

/// Single entry of [`brute_force_table`].
pub fn brute_force_signature(
    sys: &PhasedSystem,
    mta: &MetaTypeAssignment,
    p: usize,
    l: &LevelVector,
) -> Result<BigRational> {
    Layout::new(sys, mta).m_counts(p, l.as_slice())?;
    brute_force_table(sys, mta, p)?
        .remove(l)
        .ok_or_else(|| Error::InfeasibleLevel(format!("no trajectory has levels {l}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::structure::derive_meta_types;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn lv(v: &[u32]) -> LevelVector {
        LevelVector(v.to_vec())
    }

    fn example1_family() -> (PhasedSystem, SignatureFamily) {
        let sys = fixtures::example1();
        let mta = derive_meta_types(&sys, false).unwrap();
        let fam = compute_signature_family(&sys, &mta).unwrap();
        (sys, fam)
    }

    #[test]
    fn example1_lookups() {
        let (_, fam) = example1_family();
        assert_eq!(signature_at(&fam, 3, &lv(&[3, 3, 2])).unwrap(), q(2, 3));
        assert_eq!(signature_at(&fam, 3, &lv(&[3, 2, 2])).unwrap(), q(2, 3));
        assert_eq!(signature_at(&fam, 2, &lv(&[3, 1])).unwrap(), q(1, 1));
        assert_eq!(signature_at(&fam, 1, &lv(&[0])).unwrap(), q(0, 1));
        assert!(matches!(
            signature_at(&fam, 2, &lv(&[2, 3])),
            Err(Error::InfeasibleLevel(_))
        ));
        assert!(matches!(
            signature_at(&fam, 4, &lv(&[3, 3, 3, 3])),
            Err(Error::PhaseOutOfRange { .. })
        ));
    }

    #[test]
    fn example1_brute_force() {
        let (sys, fam) = example1_family();
        let mta = &fam.assignment;
        assert_eq!(
            brute_force_signature(&sys, mta, 3, &lv(&[3, 2, 2])).unwrap(),
            q(2, 3)
        );
        assert_eq!(
            brute_force_signature(&sys, mta, 3, &lv(&[3, 3, 3])).unwrap(),
            q(1, 1)
        );
    }

    #[test]
    fn denominators_are_chain_counts() {
        let (_, fam) = example1_family();
        let v = &fam.table(3).unwrap().entries[&lv(&[3, 2, 2])];
        assert_eq!(v.total, BigUint::from(3u32));
        assert_eq!(v.successes, BigUint::from(2u32));
    }

    #[test]
    fn feasible_levels_single_type() {
        let (_, fam) = example1_family();
        let all = fam.layout.feasible_levels(2);
        // n ≥ l_1 ≥ l_2 with n = 3
        assert_eq!(all.len(), 10);
        assert!(all.iter().all(|l| l.0[0] >= l.0[1]));
    }

    #[test]
    fn csv_and_text() {
        let (_, fam) = example1_family();
        let csv = fam.table_csv(3).unwrap();
        assert_eq!(
            csv,
            "l_11,l_21,l_31,numerator,denominator,decimal\n\
             3,2,2,2,3,0.6666666666666666\n\
             3,3,2,2,3,0.6666666666666666\n\
             3,3,3,1,1,1\n"
        );
        let text = fam.table_text(3).unwrap();
        assert!(text.lines().next().unwrap().ends_with("Phi_3"));
        assert!(text.contains("2/3"));
    }

    // Late entrants share a pool with survivors: one more survivor of the
    // first group in phase 1 can be the weaker `e` in phase 2.
    #[test]
    fn relaxed_tables_need_not_be_monotone_in_earlier_phases() {
        let spec = crate::specfile::parse_spec_str(
            r#"
boundaries = [0.0, 1.0, 2.0]

[[types]]
name = "T0"
lifetime = "exponential(0.1)"

[[types]]
name = "T1"
lifetime = "exponential(0.2)"

[components]
a = "T0"
b = "T0"
c = "T0"
d = "T1"
e = "T1"

[[phases]]
components = ["a", "c", "e"]
structure = "or(comp c, comp a)"

[[phases]]
components = ["a", "b", "c", "d", "e"]
structure = "or(comp c, comp a, koutofn(2, or(comp e, comp b), comp d))"
"#,
        )
        .unwrap();
        let sys = spec.system;
        let mta = derive_meta_types(&sys, true).unwrap();
        assert_eq!(mta.metatypes.len(), 2);
        let fam = compute_signature_family(&sys, &mta).unwrap();
        let low = lv(&[1, 0, 1, 1]);
        let high = lv(&[1, 1, 1, 1]);
        assert_eq!(signature_at(&fam, 2, &low).unwrap(), q(1, 1));
        assert_eq!(signature_at(&fam, 2, &high).unwrap(), q(3, 4));
        assert_eq!(
            brute_force_signature(&sys, &mta, 2, &high).unwrap(),
            q(3, 4)
        );
    }

    #[test]
    fn submask_enumeration() {
        let subs: Vec<u64> = submasks(0b1010).collect();
        assert_eq!(subs, vec![0b1010, 0b1000, 0b0010, 0]);
        assert_eq!(submasks(0).collect::<Vec<_>>(), vec![0]);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), BigUint::from(10u32));
        assert_eq!(binomial(0, 0), BigUint::one());
        assert_eq!(
            binomial(64, 32),
            BigUint::from(1_832_624_140_942_590_534u64)
        );
    }
}
