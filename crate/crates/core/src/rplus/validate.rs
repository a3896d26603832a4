use std::collections::HashSet;
use std::fmt;

use super::{Node, NodeKind, RPlusTree};
use crate::model::RecordId;

/// One broken structural invariant. `path` lists child indexes from the root.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// A child region or leaf point sticks out of its parent's region.
    Containment {
        path: Vec<usize>,
    },
    /// Two siblings share interior volume.
    Overlap {
        path: Vec<usize>,
        first: usize,
        second: usize,
        volume: f64,
    },
    Overflow {
        path: Vec<usize>,
        count: usize,
    },
    Underfill {
        path: Vec<usize>,
        count: usize,
    },
    EmptyNode {
        path: Vec<usize>,
    },
    UnevenDepth {
        path: Vec<usize>,
        depth: usize,
        expected: usize,
    },
    Dimension {
        path: Vec<usize>,
        found: usize,
    },
    DuplicateId {
        id: RecordId,
    },
    SizeMismatch {
        recorded: usize,
        counted: usize,
    },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::Containment { .. } => "containment",
            Violation::Overlap { .. } => "overlap",
            Violation::Overflow { .. } => "overflow",
            Violation::Underfill { .. } => "underfill",
            Violation::EmptyNode { .. } => "empty-node",
            Violation::UnevenDepth { .. } => "uneven-depth",
            Violation::Dimension { .. } => "dimension",
            Violation::DuplicateId { .. } => "duplicate-id",
            Violation::SizeMismatch { .. } => "size-mismatch",
        }
    }
}

struct PathFmt<'a>(&'a [usize]);

impl fmt::Display for PathFmt<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for i in self.0 {
            write!(f, "/{i}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.kind())?;
        match self {
            Violation::Containment { path } => write!(f, "at={}", PathFmt(path)),
            Violation::Overlap {
                path,
                first,
                second,
                volume,
            } => {
                write!(f, "at={} children={first},{second} volume={volume}", PathFmt(path))
            }
            Violation::Overflow { path, count } | Violation::Underfill { path, count } => {
                write!(f, "at={} count={count}", PathFmt(path))
            }
            Violation::EmptyNode { path } => write!(f, "at={}", PathFmt(path)),
            Violation::UnevenDepth { path, depth, expected } => {
                write!(f, "at={} depth={depth} expected={expected}", PathFmt(path))
            }
            Violation::Dimension { path, found } => write!(f, "at={} dim={found}", PathFmt(path)),
            Violation::DuplicateId { id } => write!(f, "id={id}"),
            Violation::SizeMismatch { recorded, counted } => {
                write!(f, "recorded={recorded} counted={counted}")
            }
        }
    }
}

struct Checker<'t> {
    tree: &'t RPlusTree,
    out: Vec<Violation>,
    seen: HashSet<RecordId>,
    counted: usize,
}

impl Checker<'_> {
    fn node(&mut self, node: &Node, path: &mut Vec<usize>, depth: usize) {
        let cfg = &self.tree.config;
        let is_root = path.is_empty();
        if node.region.dim() != cfg.dimension {
            self.out.push(Violation::Dimension {
                path: path.clone(),
                found: node.region.dim(),
            });
            return;
        }
        let count = node.len();
        if count == 0 {
            self.out.push(Violation::EmptyNode { path: path.clone() });
        }
        if count > cfg.max_entries {
            self.out.push(Violation::Overflow {
                path: path.clone(),
                count,
            });
        }
        if self.tree.packed && !is_root && count < cfg.min_fill {
            self.out.push(Violation::Underfill {
                path: path.clone(),
                count,
            });
        }
        match &node.kind {
            NodeKind::Leaf(entries) => {
                if depth != self.tree.height {
                    self.out.push(Violation::UnevenDepth {
                        path: path.clone(),
                        depth,
                        expected: self.tree.height,
                    });
                }
                let mut outside = false;
                for e in entries {
                    self.counted += 1;
                    if e.point.dim() != cfg.dimension {
                        self.out.push(Violation::Dimension {
                            path: path.clone(),
                            found: e.point.dim(),
                        });
                        continue;
                    }
                    outside |= !node.region.contains_point(&e.point);
                    if !self.seen.insert(e.id) {
                        self.out.push(Violation::DuplicateId { id: e.id });
                    }
                }
                if outside {
                    self.out.push(Violation::Containment { path: path.clone() });
                }
            }
            NodeKind::Internal(children) => {
                for (i, a) in children.iter().enumerate() {
                    for (j, b) in children.iter().enumerate().skip(i + 1) {
                        if a.region.dim() == b.region.dim() && a.region.interiors_overlap(&b.region) {
                            self.out.push(Violation::Overlap {
                                path: path.clone(),
                                first: i,
                                second: j,
                                volume: a.region.overlap_volume(&b.region),
                            });
                        }
                    }
                }
                for (i, c) in children.iter().enumerate() {
                    path.push(i);
                    if c.region.dim() == node.region.dim() && !node.region.contains_rect(&c.region) {
                        self.out.push(Violation::Containment { path: path.clone() });
                    }
                    self.node(c, path, depth + 1);
                    path.pop();
                }
            }
        }
    }
}

impl RPlusTree {
    /// Every broken invariant, empty when the tree is sound.
    ///
    /// Minimum fill is only enforced on a tree that came straight out of
    /// bulk loading; inserts may leave nodes underfull.
    pub fn validate(&self) -> Vec<Violation> {
        let mut checker = Checker {
            tree: self,
            out: Vec::new(),
            seen: HashSet::with_capacity(self.size),
            counted: 0,
        };
        if let Some(root) = &self.root {
            checker.node(root, &mut Vec::new(), 1);
        }
        if checker.counted != self.size {
            checker.out.push(Violation::SizeMismatch {
                recorded: self.size,
                counted: checker.counted,
            });
        }
        checker.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point;
    use crate::model::CaseRecord;
    use crate::rplus::TreeConfig;

    fn grid_tree() -> RPlusTree {
        let recs: Vec<CaseRecord> = (0..100)
            .map(|i| CaseRecord::at(i, Point::xy((i % 10) as f64, (i / 10) as f64).unwrap()))
            .collect();
        RPlusTree::bulk_load(TreeConfig::with_max_entries(2, 4), &recs).unwrap()
    }

    #[test]
    fn empty_tree_is_valid() {
        assert!(RPlusTree::new(TreeConfig::new(2)).unwrap().validate().is_empty());
    }

    #[test]
    fn inflated_child_is_one_containment_violation() {
        let mut t = grid_tree();
        assert!(t.validate().is_empty());
        let root = t.root_mut().unwrap();
        let root_lo_x = root.region.lo(0);
        // the child hugging the root's low-x face, grown further out along -x
        let (idx, child) = match &mut root.kind {
            NodeKind::Internal(c) => c
                .iter_mut()
                .enumerate()
                .find(|(_, c)| c.region.lo(0) == root_lo_x)
                .unwrap(),
            NodeKind::Leaf(_) => unreachable!(),
        };
        child.region.set_lo(0, root_lo_x - 5.0);
        let v = t.validate();
        assert_eq!(v, vec![Violation::Containment { path: vec![idx] }], "{v:?}");
        assert_eq!(v[0].to_string(), format!("containment at=/{idx}"));
    }

    #[test]
    fn detects_overlap_size_and_depth_problems() {
        let mut t = grid_tree();
        t.size += 1;
        let v = t.validate();
        assert!(v.iter().any(|x| matches!(
            x,
            Violation::SizeMismatch {
                recorded: 101,
                counted: 100
            }
        )));

        let mut t = grid_tree();
        let root = t.root_mut().unwrap();
        if let NodeKind::Internal(c) = &mut root.kind {
            let grow = c[1].region.clone();
            c[0].region.expand_rect(&grow);
        }
        assert!(t.validate().iter().any(|x| x.kind() == "overlap"));

        let mut t = grid_tree();
        t.height += 1;
        assert!(t.validate().iter().all(|x| x.kind() == "uneven-depth"));
    }
}
