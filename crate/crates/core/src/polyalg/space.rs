use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{structure, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub dim: usize,
}

/// Ordered blocks of scalar variables. Scalars are named `<block><k>` with
/// `k` starting at 1, except in blocks of dimension one which use the bare
/// block name (`<block>1` is accepted as an alias).
#[derive(Clone, Debug)]
pub struct VariableSpace {
    blocks: Vec<Block>,
    offsets: Vec<usize>,
    names: Vec<String>,
    lookup: HashMap<String, usize>,
}

impl PartialEq for VariableSpace {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl Eq for VariableSpace {}

impl VariableSpace {
    pub fn new<S: AsRef<str>>(blocks: &[(S, usize)]) -> Result<Arc<Self>> {
        let mut out = VariableSpace {
            blocks: Vec::new(),
            offsets: Vec::new(),
            names: Vec::new(),
            lookup: HashMap::new(),
        };
        for (name, dim) in blocks {
            let name = name.as_ref();
            if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                return structure(format!("invalid block name {name:?}"));
            }
            if name.chars().next().is_some_and(|c| c.is_ascii_digit()) {
                return structure(format!("block name {name:?} starts with a digit"));
            }
            if out.blocks.iter().any(|b| b.name == name) {
                return structure(format!("duplicate block name {name:?}"));
            }
            out.offsets.push(out.names.len());
            out.blocks.push(Block {
                name: name.to_string(),
                dim: *dim,
            });
            for k in 0..*dim {
                let scalar = if *dim == 1 {
                    name.to_string()
                } else {
                    format!("{name}{}", k + 1)
                };
                if out.lookup.insert(scalar.clone(), out.names.len()).is_some() {
                    return structure(format!("scalar name {scalar:?} is ambiguous"));
                }
                out.names.push(scalar);
            }
        }
        for (b, off) in out.blocks.iter().zip(&out.offsets) {
            if b.dim == 1 {
                out.lookup.entry(format!("{}1", b.name)).or_insert(*off);
            }
        }
        Ok(Arc::new(out))
    }

    pub fn nvars(&self) -> usize {
        self.names.len()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_range(&self, name: &str) -> Option<Range<usize>> {
        self.blocks
            .iter()
            .position(|b| b.name == name)
            .map(|i| self.offsets[i]..self.offsets[i] + self.blocks[i].dim)
    }

    pub fn has_block(&self, name: &str) -> bool {
        self.block_range(name).is_some_and(|r| !r.is_empty())
    }

    /// Block name owning scalar `i`.
    pub fn block_of(&self, i: usize) -> &str {
        let b = self.offsets.partition_point(|&o| o <= i) - 1;
        // skip empty blocks sharing the same offset
        let b = (0..=b)
            .rev()
            .find(|&k| self.offsets[k] <= i && i < self.offsets[k] + self.blocks[k].dim)
            .unwrap_or(b);
        &self.blocks[b].name
    }

    pub fn scalar_name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn scalar_names(&self) -> &[String] {
        &self.names
    }

    pub fn index(&self, scalar: &str) -> Option<usize> {
        self.lookup.get(scalar).copied()
    }

    /// Index of coordinate `k` (0-based) of block `name`.
    pub fn var(&self, name: &str, k: usize) -> Result<usize> {
        match self.block_range(name) {
            Some(r) if k < r.len() => Ok(r.start + k),
            _ => structure(format!("no coordinate {k} in block {name:?}")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_aliases() {
        let s = VariableSpace::new(&[("x", 2), ("z", 0), ("u", 1), ("zeta", 1), ("t", 3)]).unwrap();
        assert_eq!(s.nvars(), 7);
        assert_eq!(s.scalar_names(), &["x1", "x2", "u", "zeta", "t1", "t2", "t3"]);
        assert_eq!(s.index("u1"), Some(2));
        assert_eq!(s.index("z"), None);
        assert_eq!(s.block_of(3), "zeta");
        assert_eq!(s.block_of(4), "t");
        assert!(!s.has_block("z"));
    }

    #[test]
    fn rejects_duplicates() {
        assert!(VariableSpace::new(&[("x", 1), ("x", 2)]).is_err());
        assert!(VariableSpace::new(&[("x", 2), ("x1", 1)]).is_err());
    }
}
