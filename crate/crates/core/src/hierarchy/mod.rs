//! Multi-level label hierarchies.
//!
//! Levels are stored coarse-to-fine: `levels[0]` is the coarsest grouping.
//! Every level maps each fine class to exactly one coarse index, and
//! consecutive levels must nest (a tree), which [`LabelHierarchy::new`]
//! enforces.
//!
//! # Text format
//!
//! ```text
//! # comment (anything after '#' is ignored; blank lines are skipped)
//! fine=<F> levels=<n>
//! level <name> M=<M>
//! <fine_index> <coarse_index>     # exactly F pairs per level, any order
//! ...
//! ```
//!
//! Tokens are separated by ASCII whitespace. `<name>` is a single token.
//! The `level` headers appear in coarse-to-fine order.

pub mod cifar100;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Level {
    pub name: String,
    pub coarse_count: usize,
    /// `parent_of[fine] = coarse index` in `[0, coarse_count)`.
    pub parent_of: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelHierarchy {
    fine_count: usize,
    levels: Vec<Level>,
}

/// Partition of one level's coarse indices into new, coarser classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MergeSpec {
    pub groups: Vec<Vec<usize>>,
}

impl MergeSpec {
    pub fn new(groups: Vec<Vec<usize>>) -> Self {
        MergeSpec { groups }
    }

    fn from_static(groups: &[&[usize]]) -> Self {
        MergeSpec {
            groups: groups.iter().map(|g| g.to_vec()).collect(),
        }
    }

    /// Built-in CIFAR-100 groupings by target class count (20, 10, 5 or 2).
    pub fn cifar100(target: usize) -> Option<Self> {
        match target {
            20 => Some(MergeSpec {
                groups: (0..20).map(|c| vec![c]).collect(),
            }),
            10 => Some(Self::from_static(&cifar100::MERGE_TO_10)),
            5 => Some(Self::from_static(&cifar100::MERGE_TO_5)),
            2 => Some(Self::from_static(&cifar100::MERGE_TO_2)),
            _ => None,
        }
    }

    /// `group_of[old coarse] = new coarse`; errors unless the groups
    /// partition `0..coarse_count` exactly.
    fn group_map(&self, coarse_count: usize) -> Result<Vec<usize>> {
        let mut group_of = vec![usize::MAX; coarse_count];
        for (g, members) in self.groups.iter().enumerate() {
            if members.is_empty() {
                return Err(Error::Contract(format!("merge group {g} is empty")));
            }
            for &c in members {
                if c >= coarse_count {
                    return Err(Error::Contract(format!(
                        "merge group {g} names coarse class {c}, level has {coarse_count}"
                    )));
                }
                if group_of[c] != usize::MAX {
                    return Err(Error::Contract(format!(
                        "coarse class {c} appears in merge groups {} and {g}",
                        group_of[c]
                    )));
                }
                group_of[c] = g;
            }
        }
        if let Some(c) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Contract(format!(
                "merge groups do not cover coarse class {c}"
            )));
        }
        Ok(group_of)
    }
}

impl LabelHierarchy {
    /// Builds and validates a hierarchy.
    pub fn new(fine_count: usize, levels: Vec<Level>) -> Result<Self> {
        let h = LabelHierarchy { fine_count, levels };
        h.validate()?;
        Ok(h)
    }

    /// Hierarchy where fine class `f` belongs to coarse class `f / per_coarse`.
    pub fn uniform(coarse_count: usize, per_coarse: usize) -> Result<Self> {
        let fine = coarse_count * per_coarse;
        Self::new(
            fine,
            vec![Level {
                name: "coarse".into(),
                coarse_count,
                parent_of: (0..fine).map(|f| f / per_coarse.max(1)).collect(),
            }],
        )
    }

    /// The 100-class / 20-superclass CIFAR-100 hierarchy.
    pub fn cifar100() -> Self {
        Self::new(
            100,
            vec![Level {
                name: "superclass".into(),
                coarse_count: 20,
                parent_of: cifar100::FINE_TO_COARSE.to_vec(),
            }],
        )
        .expect("built-in taxonomy is valid")
    }

    /// CIFAR-100 with its superclasses merged down to `target` classes (20, 10, 5, 2).
    pub fn cifar100_merged(target: usize) -> Result<Self> {
        let spec = MergeSpec::cifar100(target).ok_or_else(|| {
            Error::Config(format!("no CIFAR-100 merge preset with {target} classes"))
        })?;
        merge_coarse(&Self::cifar100(), 0, &spec)
    }

    pub fn fine_count(&self) -> usize {
        self.fine_count
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn level(&self, level: usize) -> Result<&Level> {
        self.levels.get(level).ok_or(Error::Index {
            index: level,
            len: self.levels.len(),
        })
    }

    pub fn coarse_count(&self, level: usize) -> Result<usize> {
        Ok(self.level(level)?.coarse_count)
    }

    fn validate(&self) -> Result<()> {
        if self.fine_count == 0 {
            return Err(Error::Validation("hierarchy has no fine classes".into()));
        }
        for (li, level) in self.levels.iter().enumerate() {
            if level.parent_of.len() != self.fine_count {
                return Err(Error::Validation(format!(
                    "level {li} ({}) maps {} fine classes, expected {}",
                    level.name,
                    level.parent_of.len(),
                    self.fine_count
                )));
            }
            if let Some((f, &c)) = level
                .parent_of
                .iter()
                .enumerate()
                .find(|(_, &c)| c >= level.coarse_count)
            {
                return Err(Error::Validation(format!(
                    "level {li} ({}): fine class {f} maps to coarse {c} but M={}",
                    level.name, level.coarse_count
                )));
            }
            let distinct: BTreeSet<usize> = level.parent_of.iter().copied().collect();
            if distinct.len() != level.coarse_count {
                return Err(Error::Validation(format!(
                    "level {li} ({}): declares M={} but uses {} distinct coarse classes",
                    level.name,
                    level.coarse_count,
                    distinct.len()
                )));
            }
        }
        for (li, pair) in self.levels.windows(2).enumerate() {
            let (coarser, finer) = (&pair[0], &pair[1]);
            if coarser.coarse_count > finer.coarse_count {
                return Err(Error::Validation(format!(
                    "level {li} (M={}) is listed before level {} (M={}) but is finer",
                    coarser.coarse_count,
                    li + 1,
                    finer.coarse_count
                )));
            }
            // first fine class seen under each finer-level node
            let mut witness = vec![usize::MAX; finer.coarse_count];
            for f in 0..self.fine_count {
                let node = finer.parent_of[f];
                let w = witness[node];
                if w == usize::MAX {
                    witness[node] = f;
                } else if coarser.parent_of[w] != coarser.parent_of[f] {
                    return Err(Error::Validation(format!(
                        "tree consistency violated: fine classes {w} and {f} share ancestor {node} \
                         at level {} but have ancestors {} and {} at level {li}",
                        li + 1,
                        coarser.parent_of[w],
                        coarser.parent_of[f]
                    )));
                }
            }
        }
        Ok(())
    }

    /// Coarse ancestor of a fine class at `level`.
    pub fn ancestor_of(&self, fine: usize, level: usize) -> Result<usize> {
        let lv = self.level(level)?;
        lv.parent_of.get(fine).copied().ok_or(Error::Index {
            index: fine,
            len: self.fine_count,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
            .filter(|(_, l)| !l.is_empty());

        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 0,
            msg: "empty hierarchy file".into(),
        })?;
        let mut fine_count = None;
        let mut level_count = None;
        for tok in header.split_whitespace() {
            match tok.split_once('=') {
                Some(("fine", v)) => fine_count = Some(parse_usize(v, hline)?),
                Some(("levels", v)) => level_count = Some(parse_usize(v, hline)?),
                _ => {
                    return Err(Error::Parse {
                        line: hline,
                        msg: format!("unexpected header token '{tok}'"),
                    })
                }
            }
        }
        let (fine_count, level_count) = match (fine_count, level_count) {
            (Some(f), Some(l)) => (f, l),
            _ => {
                return Err(Error::Parse {
                    line: hline,
                    msg: "header must be 'fine=<count> levels=<n>'".into(),
                })
            }
        };

        let mut levels: Vec<(Level, Vec<bool>)> = Vec::new();
        for (ln, line) in lines {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks[0] == "level" {
                let (name, m) = match toks.as_slice() {
                    [_, name, m] => (name, m),
                    _ => {
                        return Err(Error::Parse {
                            line: ln,
                            msg: "level line must be 'level <name> M=<count>'".into(),
                        })
                    }
                };
                let m = m.strip_prefix("M=").ok_or_else(|| Error::Parse {
                    line: ln,
                    msg: format!("expected M=<count>, found '{m}'"),
                })?;
                levels.push((
                    Level {
                        name: name.to_string(),
                        coarse_count: parse_usize(m, ln)?,
                        parent_of: vec![usize::MAX; fine_count],
                    },
                    vec![false; fine_count],
                ));
                continue;
            }
            let (level, seen) = levels.last_mut().ok_or_else(|| Error::Parse {
                line: ln,
                msg: "mapping line before any 'level' line".into(),
            })?;
            let [f, c] = toks.as_slice() else {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("expected '<fine> <coarse>', found '{line}'"),
                });
            };
            let f = parse_usize(f, ln)?;
            let c = parse_usize(c, ln)?;
            if f >= fine_count {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("unknown fine index {f} (fine={fine_count})"),
                });
            }
            if c >= level.coarse_count {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("coarse index {c} out of range for M={}", level.coarse_count),
                });
            }
            if seen[f] {
                return Err(Error::Parse {
                    line: ln,
                    msg: format!("fine index {f} mapped twice in level {}", level.name),
                });
            }
            seen[f] = true;
            level.parent_of[f] = c;
        }
        if levels.len() != level_count {
            return Err(Error::Parse {
                line: hline,
                msg: format!("header declares {level_count} levels, found {}", levels.len()),
            });
        }
        for (level, seen) in &levels {
            if let Some(f) = seen.iter().position(|s| !s) {
                return Err(Error::Validation(format!(
                    "level {} has no mapping for fine class {f}",
                    level.name
                )));
            }
        }
        Self::new(fine_count, levels.into_iter().map(|(l, _)| l).collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("fine={} levels={}\n", self.fine_count, self.levels.len());
        for level in &self.levels {
            let _ = writeln!(s, "level {} M={}", level.name, level.coarse_count);
            for (f, c) in level.parent_of.iter().enumerate() {
                let _ = writeln!(s, "{f} {c}");
            }
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("expected a non-negative integer, found '{s}'"),
    })
}

/// Coarsens one level by merging its coarse classes into the given groups.
pub fn merge_coarse(h: &LabelHierarchy, level: usize, spec: &MergeSpec) -> Result<LabelHierarchy> {
    let lv = h.level(level)?;
    let group_of = spec.group_map(lv.coarse_count)?;
    let mut levels = h.levels.clone();
    levels[level] = Level {
        name: if spec.groups.len() == lv.coarse_count {
            lv.name.clone()
        } else {
            format!("{}-merged{}", lv.name, spec.groups.len())
        },
        coarse_count: spec.groups.len(),
        parent_of: lv.parent_of.iter().map(|&c| group_of[c]).collect(),
    };
    LabelHierarchy::new(h.fine_count, levels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cifar_taxonomy_shape() {
        let h = LabelHierarchy::cifar100();
        assert_eq!(h.fine_count(), 100);
        assert_eq!(h.levels().len(), 1);
        assert_eq!(h.coarse_count(0).unwrap(), 20);
        for c in 0..20 {
            let n = cifar100::FINE_TO_COARSE.iter().filter(|&&x| x == c).count();
            assert_eq!(n, 5, "superclass {c}");
        }
        let fish: Vec<&str> = (0..100)
            .filter(|&f| h.ancestor_of(f, 0).unwrap() == 1)
            .map(|f| cifar100::FINE_NAMES[f])
            .collect();
        assert_eq!(fish, ["aquarium_fish", "flatfish", "ray", "shark", "trout"]);
        assert_eq!(cifar100::COARSE_NAMES[1], "fish");
    }

    #[test]
    fn shipped_file_loads() {
        let text = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/data/cifar100.hierarchy"
        ))
        .unwrap();
        let h = LabelHierarchy::parse(&text).unwrap();
        assert_eq!(h, LabelHierarchy::cifar100());
        assert_eq!(h.ancestor_of(91, 0).unwrap(), 1); // trout
    }

    #[test]
    fn single_coarse_class_is_valid() {
        let text = "fine=3 levels=1\nlevel all M=1\n0 0\n1 0\n2 0\n";
        let h = LabelHierarchy::parse(text).unwrap();
        assert_eq!(h.coarse_count(0).unwrap(), 1);
        assert_eq!(h.ancestor_of(2, 0).unwrap(), 0);
    }

    #[test]
    fn tree_violation_names_pair() {
        // level 1 puts fines 6 and 7 together under node 2, level 0 splits them
        let mut text = String::from("fine=8 levels=2\nlevel top M=2\n");
        for f in 0..8 {
            text += &format!("{f} {}\n", if f < 7 { 0 } else { 1 });
        }
        text += "level mid M=3\n";
        for f in 0..8 {
            text += &format!("{f} {}\n", f / 3);
        }
        let err = LabelHierarchy::parse(&text).unwrap_err();
        match err {
            Error::Validation(msg) => assert!(msg.contains("6 and 7"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_fine_reports_line() {
        let text = "# header\nfine=2 levels=1\nlevel a M=1\n0 0\n\n5 0\n";
        match LabelHierarchy::parse(text).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 6),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn finer_before_coarser_rejected() {
        let text = "fine=2 levels=2\nlevel a M=2\n0 0\n1 1\nlevel b M=1\n0 0\n1 0\n";
        assert!(matches!(LabelHierarchy::parse(text), Err(Error::Validation(_))));
    }

    #[test]
    fn declared_m_must_match_usage() {
        let text = "fine=2 levels=1\nlevel a M=3\n0 0\n1 1\n";
        assert!(matches!(LabelHierarchy::parse(text), Err(Error::Validation(_))));
    }

    #[test]
    fn cifar_merge_presets() {
        for (target, expect) in [(10, 10), (5, 5), (2, 2), (20, 20)] {
            let h = LabelHierarchy::cifar100_merged(target).unwrap();
            assert_eq!(h.coarse_count(0).unwrap(), expect);
            assert_eq!(h.fine_count(), 100);
        }
        let h10 = LabelHierarchy::cifar100_merged(10).unwrap();
        // aquatic mammals and fish share a merged class
        assert_eq!(h10.ancestor_of(4, 0).unwrap(), h10.ancestor_of(1, 0).unwrap());
        assert_eq!(
            LabelHierarchy::cifar100_merged(20).unwrap(),
            LabelHierarchy::cifar100()
        );
    }

    #[test]
    fn non_partition_rejected() {
        let h = LabelHierarchy::uniform(3, 2).unwrap();
        for groups in [
            vec![vec![0, 1]],
            vec![vec![0, 1], vec![1, 2]],
            vec![vec![0, 1, 2], vec![]],
            vec![vec![0, 1, 2, 3]],
        ] {
            assert!(matches!(
                merge_coarse(&h, 0, &MergeSpec::new(groups)),
                Err(Error::Contract(_))
            ));
        }
    }

    #[test]
    fn ancestor_of_bounds() {
        let h = LabelHierarchy::uniform(1, 4).unwrap();
        assert_eq!(h.ancestor_of(3, 0).unwrap(), 0);
        assert!(matches!(h.ancestor_of(4, 0), Err(Error::Index { .. })));
        assert!(matches!(h.ancestor_of(0, 1), Err(Error::Index { .. })));
        let s = LabelHierarchy::uniform(5, 3).unwrap();
        for c in 0..5 {
            for k in 0..3 {
                assert_eq!(s.ancestor_of(c * 3 + k, 0).unwrap(), c);
            }
        }
    }

    fn arb_hierarchy() -> impl Strategy<Value = LabelHierarchy> {
        // two nested levels built from random assignments
        (2usize..6, 1usize..4, 1usize..4).prop_flat_map(|(mid, per_mid, top)| {
            let fine = mid * per_mid;
            let top = top.min(mid);
            (
                Just((mid, per_mid, top)),
                proptest::collection::vec(0..top, mid),
                Just(fine),
            )
        })
        .prop_filter_map("top level must use every class", |((mid, per_mid, top), top_of_mid, fine)| {
            let used: BTreeSet<usize> = top_of_mid.iter().copied().collect();
            if used.len() != top {
                return None;
            }
            let mid_of = (0..fine).map(|f| f / per_mid).collect::<Vec<_>>();
            LabelHierarchy::new(
                fine,
                vec![
                    Level {
                        name: "top".into(),
                        coarse_count: top,
                        parent_of: mid_of.iter().map(|&m| top_of_mid[m]).collect(),
                    },
                    Level {
                        name: "mid".into(),
                        coarse_count: mid,
                        parent_of: mid_of,
                    },
                ],
            )
            .ok()
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(h in arb_hierarchy()) {
            prop_assert_eq!(LabelHierarchy::parse(&h.to_text()).unwrap(), h);
        }

        #[test]
        fn merge_preserves_tree(assign in proptest::collection::vec(0usize..20, 20)) {
            // random partition of the 20 CIFAR superclasses
            let mut groups: Vec<Vec<usize>> = vec![Vec::new(); 20];
            for (c, &g) in assign.iter().enumerate() {
                groups[g].push(c);
            }
            groups.retain(|g| !g.is_empty());
            let n = groups.len();
            let h = merge_coarse(&LabelHierarchy::cifar100(), 0, &MergeSpec::new(groups.clone())).unwrap();
            prop_assert_eq!(h.fine_count(), 100);
            prop_assert_eq!(h.coarse_count(0).unwrap(), n);
            for f in 0..100 {
                let old = cifar100::FINE_TO_COARSE[f];
                let new = h.ancestor_of(f, 0).unwrap();
                prop_assert!(groups[new].contains(&old));
            }
        }
    }
}
