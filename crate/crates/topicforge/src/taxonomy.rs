//! The canonical 21-category topic support set and label-set algebra.
//!
//! Categories are the MeSH Biology subcategories (descriptors under the
//! `H01.158.273.*` tree), ordered by descending reference-corpus frequency so
//! that index 0 is the most common topic. The order is part of the public
//! contract: count vectors, share vectors, and report rows all use it.

use std::fmt;

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};

/// Number of canonical categories.
pub const CATEGORY_COUNT: usize = 21;

/// One canonical topic category.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Category {
    /// Position in the canonical order, `0..21`.
    pub index: usize,
    /// Canonical display name, unique and case-sensitive.
    pub name: &'static str,
    /// MeSH tree code; documentation metadata only, never traversed.
    pub mesh_code: &'static str,
}

// Frequency-rank order; the mesh codes follow MeSH's alphabetical-gap
// allocation under the Biology subtree.
pub const CATEGORIES: [Category; CATEGORY_COUNT] = [
    Category { index: 0, name: "Computational Biology", mesh_code: "H01.158.273.180" },
    Category { index: 1, name: "Genetics", mesh_code: "H01.158.273.343" },
    Category { index: 2, name: "Microbiology", mesh_code: "H01.158.273.540" },
    Category { index: 3, name: "Ecology", mesh_code: "H01.158.273.248" },
    Category { index: 4, name: "Molecular Biology", mesh_code: "H01.158.273.555" },
    Category { index: 5, name: "Synthetic Biology", mesh_code: "H01.158.273.856" },
    Category { index: 6, name: "Botany", mesh_code: "H01.158.273.118" },
    Category { index: 7, name: "Developmental Biology", mesh_code: "H01.158.273.230" },
    Category { index: 8, name: "Zoology", mesh_code: "H01.158.273.910" },
    Category { index: 9, name: "Neurobiology", mesh_code: "H01.158.273.610" },
    Category { index: 10, name: "Exobiology", mesh_code: "H01.158.273.278" },
    Category { index: 11, name: "Radiobiology", mesh_code: "H01.158.273.736" },
    Category { index: 12, name: "Parasitology", mesh_code: "H01.158.273.688" },
    Category { index: 13, name: "Cell Biology", mesh_code: "H01.158.273.160" },
    Category { index: 14, name: "Marine Biology", mesh_code: "H01.158.273.520" },
    Category { index: 15, name: "Laboratory Animal Science", mesh_code: "H01.158.273.478" },
    Category { index: 16, name: "Natural History", mesh_code: "H01.158.273.582" },
    Category { index: 17, name: "Photobiology", mesh_code: "H01.158.273.705" },
    Category { index: 18, name: "Cryobiology", mesh_code: "H01.158.273.190" },
    Category { index: 19, name: "Cytology", mesh_code: "H01.158.273.210" },
    Category { index: 20, name: "Sociobiology", mesh_code: "H01.158.273.800" },
];

/// The canonical categories in their stable order.
pub fn canonical_categories() -> &'static [Category; CATEGORY_COUNT] {
    &CATEGORIES
}

/// Look up a category by name: case-insensitive, surrounding whitespace
/// ignored. No other aliasing is performed.
pub fn category_by_name(name: &str) -> Option<&'static Category> {
    let needle = name.trim();
    CATEGORIES.iter().find(|c| c.name.eq_ignore_ascii_case(needle))
}

/// A subset of the canonical categories, packed as a bitmask.
///
/// `Copy` and 4 bytes wide, so sampler hot loops can shuffle millions of them
/// without allocation. The empty set is a legal value: records whose content
/// matches no category keep an empty set rather than being errors.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LabelSet(u32);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    /// Set containing the given category indices. Indices outside `0..21`
    /// are ignored.
    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut set = LabelSet(0);
        for i in indices {
            set.insert(i);
        }
        set
    }

    pub fn insert(&mut self, index: usize) {
        if index < CATEGORY_COUNT {
            self.0 |= 1 << index;
        }
    }

    pub fn contains(self, index: usize) -> bool {
        index < CATEGORY_COUNT && self.0 & (1 << index) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn union(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 | other.0)
    }

    pub fn intersection(self, other: LabelSet) -> LabelSet {
        LabelSet(self.0 & other.0)
    }

    /// Member category indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let bits = self.0;
        (0..CATEGORY_COUNT).filter(move |i| bits & (1 << i) != 0)
    }

    /// Member category names in canonical index order.
    pub fn names(self) -> impl Iterator<Item = &'static str> {
        self.iter().map(|i| CATEGORIES[i].name)
    }

    /// Raw bitmask; bit `i` is category index `i`.
    pub fn bits(self) -> u32 {
        self.0
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        LabelSet::from_indices(iter)
    }
}

impl fmt::Debug for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.names()).finish()
    }
}

impl Serialize for LabelSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut seq = serializer.serialize_seq(Some(self.len()))?;
        for name in self.names() {
            seq.serialize_element(name)?;
        }
        seq.end()
    }
}

impl<'de> Deserialize<'de> for LabelSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct LabelSetVisitor;

        impl<'de> Visitor<'de> for LabelSetVisitor {
            type Value = LabelSet;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an array of canonical category names")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<LabelSet, A::Error> {
                let mut set = LabelSet::EMPTY;
                while let Some(name) = seq.next_element::<String>()? {
                    match category_by_name(&name) {
                        Some(cat) => set.insert(cat.index),
                        None => {
                            return Err(de::Error::custom(format!(
                                "unknown category name {name:?}"
                            )))
                        }
                    }
                }
                Ok(set)
            }
        }

        deserializer.deserialize_seq(LabelSetVisitor)
    }
}

/// Map free-form names onto the canonical set.
///
/// Matching is the same as [`category_by_name`]. Non-canonical names are
/// returned in `dropped` (first occurrence order, duplicates collapsed), never
/// silently discarded: classifier output regularly contains off-taxonomy
/// names and callers decide whether that matters.
pub fn parse_labels<I, S>(names: I) -> (LabelSet, Vec<String>)
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut set = LabelSet::EMPTY;
    let mut dropped: Vec<String> = Vec::new();
    for name in names {
        let name = name.as_ref().trim();
        match category_by_name(name) {
            Some(cat) => set.insert(cat.index),
            None => {
                if !dropped.iter().any(|d| d.eq_ignore_ascii_case(name)) {
                    dropped.push(name.to_string());
                }
            }
        }
    }
    (set, dropped)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_order_is_stable() {
        let cats = canonical_categories();
        assert_eq!(cats.len(), 21);
        assert_eq!(cats[0].name, "Computational Biology");
        assert_eq!(cats[20].name, "Sociobiology");
        for (i, c) in cats.iter().enumerate() {
            assert_eq!(c.index, i);
            assert!(c.mesh_code.starts_with("H01.158.273."));
        }
    }

    #[test]
    fn names_are_unique() {
        for a in canonical_categories() {
            let hits = canonical_categories()
                .iter()
                .filter(|b| b.name.eq_ignore_ascii_case(a.name))
                .count();
            assert_eq!(hits, 1, "duplicate name {}", a.name);
        }
    }

    #[test]
    fn lookup_is_case_insensitive_and_trims() {
        assert_eq!(category_by_name("genetics").unwrap().index, 1);
        assert_eq!(category_by_name("  MICROBIOLOGY \n").unwrap().index, 2);
        assert!(category_by_name("Psychology").is_none());
    }

    #[test]
    fn parse_labels_splits_canonical_from_dropped() {
        let (set, dropped) = parse_labels(["Genetics"]);
        assert_eq!(set, LabelSet::from_indices([1]));
        assert!(dropped.is_empty());

        let (set, dropped) = parse_labels(["Psychology", "Genetics"]);
        assert_eq!(set, LabelSet::from_indices([1]));
        assert_eq!(dropped, vec!["Psychology"]);

        let (set, dropped) = parse_labels(Vec::<&str>::new());
        assert!(set.is_empty());
        assert!(dropped.is_empty());
    }

    #[test]
    fn parse_labels_collapses_duplicates() {
        let (set, dropped) =
            parse_labels(["Genetics", "genetics", "Toxicology", "toxicology", "Toxicology"]);
        assert_eq!(set.len(), 1);
        assert_eq!(dropped, vec!["Toxicology"]);
    }

    #[test]
    fn labelset_algebra() {
        let a = LabelSet::from_indices([0, 2, 20]);
        assert_eq!(a.len(), 3);
        assert!(a.contains(20));
        assert!(!a.contains(1));
        assert_eq!(a.iter().collect::<Vec<_>>(), vec![0, 2, 20]);

        let b = LabelSet::from_indices([2, 3]);
        assert_eq!(a.union(b).len(), 4);
        assert_eq!(a.intersection(b), LabelSet::from_indices([2]));

        // out-of-range indices are ignored, keeping the u32 invariant
        let c = LabelSet::from_indices([21, 400]);
        assert!(c.is_empty());
    }

    #[test]
    fn labelset_serde_uses_canonical_names() {
        let set = LabelSet::from_indices([1, 2]);
        let json = serde_json::to_string(&set).unwrap();
        assert_eq!(json, r#"["Genetics","Microbiology"]"#);
        let back: LabelSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);

        let err = serde_json::from_str::<LabelSet>(r#"["Astrology"]"#).unwrap_err();
        assert!(err.to_string().contains("Astrology"));
    }
}
