use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const TIMIT_48: &str = include_str!("../../data/timit_48.map");

/// Outcome of folding one raw label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fold {
    Class(usize),
    Drop,
}

/// Raw label → class index folding, plus confusion groups over classes.
///
/// Text format: a fold table of `raw class` lines (class `-` drops the
/// segment), then an optional `[groups]` section with one whitespace
/// separated group of class labels per line. Class indices follow first
/// appearance in the fold table.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    fold: HashMap<String, Fold>,
    classes: Vec<String>,
    groups: Vec<Option<usize>>,
    n_groups: usize,
}

impl ClassMap {
    /// Kai-Fu Lee folding of the 61 TIMIT labels to 48 classes with the
    /// 7 standard confusion groups.
    pub fn timit_48() -> Self {
        Self::parse(TIMIT_48).expect("bundled class map is valid")
    }

    /// Identity map over `names` with no confusion groups.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Self {
        let classes: Vec<String> = names.iter().map(|s| s.as_ref().to_string()).collect();
        let fold = classes
            .iter()
            .enumerate()
            .map(|(i, c)| (c.clone(), Fold::Class(i)))
            .collect();
        let n = classes.len();
        ClassMap {
            fold,
            classes,
            groups: vec![None; n],
            n_groups: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut fold = HashMap::new();
        let mut classes: Vec<String> = Vec::new();
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut group_lines: Vec<Vec<String>> = Vec::new();
        let mut in_groups = false;
        for (lineno, line) in text.lines().enumerate() {
            // '#' starts a comment only at a word boundary, since "h#" is a label
            let line = line.split(" #").next().unwrap_or("").trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line == "[groups]" {
                in_groups = true;
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if in_groups {
                group_lines.push(fields.iter().map(|s| s.to_string()).collect());
                continue;
            }
            if fields.len() != 2 {
                return Err(Error::Config(format!("line {}: expected 'raw class'", lineno + 1)));
            }
            let (raw, class) = (fields[0], fields[1]);
            let f = if class == "-" {
                Fold::Drop
            } else {
                let next = classes.len();
                let id = *index.entry(class.to_string()).or_insert_with(|| {
                    classes.push(class.to_string());
                    next
                });
                Fold::Class(id)
            };
            if fold.insert(raw.to_string(), f).is_some() {
                return Err(Error::Config(format!("line {}: duplicate label '{raw}'", lineno + 1)));
            }
        }
        // every class label folds to itself
        for (i, c) in classes.iter().enumerate() {
            match fold.get(c) {
                Some(Fold::Class(j)) if *j == i => {}
                Some(_) => return Err(Error::Config(format!("class '{c}' does not fold to itself"))),
                None => {
                    fold.insert(c.clone(), Fold::Class(i));
                }
            }
        }
        let mut groups = vec![None; classes.len()];
        for (g, members) in group_lines.iter().enumerate() {
            if members.len() < 2 {
                return Err(Error::Config(format!("group {} has fewer than two members", g + 1)));
            }
            for m in members {
                let id = *index
                    .get(m)
                    .ok_or_else(|| Error::Config(format!("group member '{m}' is not a class")))?;
                if groups[id].is_some() {
                    return Err(Error::Config(format!("class '{m}' is in two groups")));
                }
                groups[id] = Some(g);
            }
        }
        Ok(ClassMap {
            fold,
            classes,
            groups,
            n_groups: group_lines.len(),
        })
    }

    /// Serializes back into the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut raws: Vec<(&String, &Fold)> = self.fold.iter().collect();
        raws.sort_by_key(|(raw, f)| match f {
            Fold::Class(i) => (*i, self.classes[*i] != **raw, (*raw).clone()),
            Fold::Drop => (usize::MAX, true, (*raw).clone()),
        });
        for (raw, f) in raws {
            match f {
                Fold::Class(i) => writeln!(out, "{raw} {}", self.classes[*i]).unwrap(),
                Fold::Drop => writeln!(out, "{raw} -").unwrap(),
            }
        }
        if self.n_groups > 0 {
            out.push_str("\n[groups]\n");
            for g in 0..self.n_groups {
                let members: Vec<&str> = (0..self.classes.len())
                    .filter(|&c| self.groups[c] == Some(g))
                    .map(|c| self.classes[c].as_str())
                    .collect();
                out.push_str(&members.join(" "));
                out.push('\n');
            }
        }
        out
    }

    pub fn fold(&self, label: &str) -> Option<Fold> {
        self.fold.get(label).copied()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn num_groups(&self) -> usize {
        self.n_groups
    }

    pub fn class_name(&self, id: usize) -> &str {
        &self.classes[id]
    }

    pub fn class_names(&self) -> &[String] {
        &self.classes
    }

    pub fn class_id(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn group(&self, class_id: usize) -> Option<usize> {
        self.groups.get(class_id).copied().flatten()
    }

    /// Whether predicting `pred` for true class `truth` counts as correct.
    pub fn equivalent(&self, pred: usize, truth: usize) -> bool {
        pred == truth || matches!((self.group(pred), self.group(truth)), (Some(a), Some(b)) if a == b)
    }

    /// Checks the class and group counts of the map.
    pub fn check_inventory(&self, classes: usize, groups: usize) -> Result<()> {
        if self.num_classes() != classes || self.num_groups() != groups {
            return Err(Error::Config(format!(
                "class map has {} classes and {} groups, expected {classes} and {groups}",
                self.num_classes(),
                self.num_groups()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timit_inventory() {
        let map = ClassMap::timit_48();
        map.check_inventory(48, 7).unwrap();
        assert_eq!(map.fold("q"), Some(Fold::Drop));
        assert_eq!(map.fold("pcl"), map.fold("cl"));
        assert_eq!(map.fold("h#"), map.fold("sil"));
        let sil = map.class_id("sil").unwrap();
        let epi = map.class_id("epi").unwrap();
        assert!(map.equivalent(sil, epi));
        assert!(!map.equivalent(map.class_id("aa").unwrap(), map.class_id("ae").unwrap()));
    }

    #[test]
    fn all_61_timit_labels_fold() {
        let labels = "b d g p t k dx q jh ch s sh z zh f th v dh m n ng em en eng nx l r w y hh hv el \
                      iy ih eh ey ae aa aw ay ah ao oy ow uh uw ux er ax ix axr ax-h pau epi h# \
                      bcl dcl gcl pcl tcl kcl";
        let map = ClassMap::timit_48();
        let all: Vec<&str> = labels.split_whitespace().collect();
        assert_eq!(all.len(), 61);
        for l in all {
            assert!(map.fold(l).is_some(), "{l}");
        }
    }

    #[test]
    fn folding_is_idempotent() {
        let map = ClassMap::timit_48();
        for raw in ["ax-h", "nx", "gcl", "aa", "pau"] {
            let Some(Fold::Class(id)) = map.fold(raw) else { panic!() };
            assert_eq!(map.fold(map.class_name(id)), Some(Fold::Class(id)));
        }
    }

    #[test]
    fn text_round_trip() {
        let map = ClassMap::timit_48();
        assert_eq!(ClassMap::parse(&map.to_text()).unwrap(), map);
    }

    #[test]
    fn rejects_singleton_group() {
        assert!(ClassMap::parse("a a\nb b\n[groups]\na\n").is_err());
    }
}
