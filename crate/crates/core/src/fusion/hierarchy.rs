use crate::{Error, Result};

pub const SUPERCLASSES: [&str; 3] = ["indoor", "outdoor", "transportation"];

/// The ten scene labels in their conventional (alphabetical) order.
pub const SCENE_CLASSES: [&str; 10] = [
    "airport",
    "bus",
    "metro",
    "metro_station",
    "park",
    "public_square",
    "shopping_mall",
    "street_pedestrian",
    "street_traffic",
    "tram",
];

const BUILTIN_PARENTS: [(&str, &str); 10] = [
    ("airport", "indoor"),
    ("bus", "transportation"),
    ("metro", "transportation"),
    ("metro_station", "indoor"),
    ("park", "outdoor"),
    ("public_square", "outdoor"),
    ("shopping_mall", "indoor"),
    ("street_pedestrian", "outdoor"),
    ("street_traffic", "outdoor"),
    ("tram", "transportation"),
];

/// Scene classes grouped under superclasses; every class has exactly one
/// parent and every superclass at least one child.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHierarchy {
    superclasses: Vec<String>,
    classes: Vec<String>,
    parent: Vec<usize>,
}

impl ClassHierarchy {
    pub fn builtin() -> Self {
        Self::from_pairs(
            SUPERCLASSES.iter().map(|s| s.to_string()).collect(),
            BUILTIN_PARENTS
                .iter()
                .map(|&(c, p)| (c.to_string(), p.to_string()))
                .collect(),
        )
        .expect("builtin hierarchy is valid")
    }

    /// Superclasses not in `superclasses` are appended in order of first
    /// appearance; classes keep the order of `pairs`.
    fn from_pairs(mut superclasses: Vec<String>, pairs: Vec<(String, String)>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Config("class hierarchy is empty".into()));
        }
        let mut classes = Vec::new();
        let mut parent = Vec::new();
        for (c, p) in pairs {
            if classes.contains(&c) {
                return Err(Error::Config(format!(
                    "class {c:?} listed twice in hierarchy"
                )));
            }
            let pi = match superclasses.iter().position(|s| *s == p) {
                Some(i) => i,
                None => {
                    superclasses.push(p);
                    superclasses.len() - 1
                }
            };
            classes.push(c);
            parent.push(pi);
        }
        if let Some(empty) = (0..superclasses.len()).find(|p| !parent.contains(p)) {
            return Err(Error::Config(format!(
                "superclass {:?} has no classes",
                superclasses[empty]
            )));
        }
        Ok(Self {
            superclasses,
            classes,
            parent,
        })
    }

    /// Parse `class<whitespace>parent` lines; `#` starts a comment. An
    /// optional `@superclasses a b c` line fixes the superclass order.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut order = Vec::new();
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            if f[0] == "@superclasses" {
                order = f[1..].iter().map(|s| s.to_string()).collect();
                continue;
            }
            if f.len() != 2 {
                return Err(Error::Config(format!(
                    "hierarchy line {}: expected `class parent`, got {line:?}",
                    n + 1
                )));
            }
            pairs.push((f[0].to_string(), f[1].to_string()));
        }
        Self::from_pairs(order, pairs)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("@superclasses {}\n", self.superclasses.join(" "));
        for (c, &p) in self.classes.iter().zip(&self.parent) {
            out.push_str(&format!("{c}\t{}\n", self.superclasses[p]));
        }
        out
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn n_superclasses(&self) -> usize {
        self.superclasses.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn superclasses(&self) -> &[String] {
        &self.superclasses
    }

    pub fn parent(&self, class: usize) -> usize {
        self.parent[class]
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn superclass_index(&self, name: &str) -> Option<usize> {
        self.superclasses.iter().position(|c| c == name)
    }

    /// Children of superclass `p` in class order.
    pub fn children(&self, p: usize) -> Vec<usize> {
        (0..self.classes.len())
            .filter(|&q| self.parent[q] == p)
            .collect()
    }

    /// Superclass label for a scene label name.
    pub fn parent_name(&self, class: &str) -> Option<&str> {
        self.class_index(class)
            .map(|q| self.superclasses[self.parent[q]].as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_partition() {
        let h = ClassHierarchy::builtin();
        assert_eq!(h.superclasses(), SUPERCLASSES);
        assert_eq!(h.classes(), SCENE_CLASSES);
        let names = |p: &str| -> Vec<&str> {
            h.children(h.superclass_index(p).unwrap())
                .into_iter()
                .map(|q| h.classes()[q].as_str())
                .collect()
        };
        assert_eq!(
            names("indoor"),
            ["airport", "metro_station", "shopping_mall"]
        );
        assert_eq!(
            names("outdoor"),
            [
                "park",
                "public_square",
                "street_pedestrian",
                "street_traffic"
            ]
        );
        assert_eq!(names("transportation"), ["bus", "metro", "tram"]);
        let total: usize = (0..3).map(|p| h.children(p).len()).sum();
        assert_eq!(total, 10);
    }

    #[test]
    fn text_round_trip_and_errors() {
        let h = ClassHierarchy::builtin();
        assert_eq!(ClassHierarchy::from_text(&h.to_text()).unwrap(), h);
        let custom = ClassHierarchy::from_text("# two groups\na x\nb y\nc x\n").unwrap();
        assert_eq!(custom.superclasses(), ["x", "y"]);
        assert_eq!(custom.parent(2), 0);
        assert!(ClassHierarchy::from_text("a x\na y\n").is_err());
        assert!(ClassHierarchy::from_text("a\n").is_err());
        assert!(ClassHierarchy::from_text("").is_err());
    }
}
