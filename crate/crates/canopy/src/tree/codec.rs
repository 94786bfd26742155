//! Tree serialization (little-endian).
//!
//! Layout: magic `CTRE`, version `u16`, mode `u8` (0 standard, 1 top
//! tree), `d u32`, `k u32`, node count `u64`, then per node: kind `u8`
//! (0 internal, 1 leaf), feature `i32` (-1 for leaves), threshold `f32`,
//! left `u32`, right `u32`, and for leaves the payload: `k x u64`
//! histogram, or `f64` mean + `u64` count (regression), or `u64` bucket
//! index (top-tree mode).

use std::io::Read;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::tree::{LeafPayload, TreeMode, TreeModel, TreeNode};

pub const TREE_MAGIC: [u8; 4] = *b"CTRE";
pub const TREE_VERSION: u16 = 1;

/// Serialize a tree to bytes. The encoding is canonical: re-serializing a
/// deserialized tree reproduces the input byte for byte.
pub fn serialize(tree: &TreeModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(32 + tree.n_nodes() * 24);
    out.extend_from_slice(&TREE_MAGIC);
    out.write_u16::<LittleEndian>(TREE_VERSION).unwrap();
    out.write_u8(match tree.mode() {
        TreeMode::Standard => 0,
        TreeMode::TopTree => 1,
    })
    .unwrap();
    out.write_u32::<LittleEndian>(tree.n_features()).unwrap();
    out.write_u32::<LittleEndian>(tree.n_classes()).unwrap();
    out.write_u64::<LittleEndian>(tree.n_nodes() as u64)
        .unwrap();
    for node in tree.nodes() {
        match node {
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                out.write_u8(0).unwrap();
                out.write_i32::<LittleEndian>(*feature as i32).unwrap();
                out.write_f32::<LittleEndian>(*threshold).unwrap();
                out.write_u32::<LittleEndian>(*left).unwrap();
                out.write_u32::<LittleEndian>(*right).unwrap();
            }
            TreeNode::Leaf(payload) => {
                out.write_u8(1).unwrap();
                out.write_i32::<LittleEndian>(-1).unwrap();
                out.write_f32::<LittleEndian>(0.0).unwrap();
                out.write_u32::<LittleEndian>(0).unwrap();
                out.write_u32::<LittleEndian>(0).unwrap();
                match payload {
                    LeafPayload::Histogram(counts) => {
                        for &c in counts.iter() {
                            out.write_u64::<LittleEndian>(c).unwrap();
                        }
                    }
                    LeafPayload::Mean { mean, weight } => {
                        out.write_f64::<LittleEndian>(*mean).unwrap();
                        out.write_u64::<LittleEndian>(*weight).unwrap();
                    }
                    LeafPayload::Bucket(i) => {
                        out.write_u64::<LittleEndian>(*i).unwrap();
                    }
                }
            }
        }
    }
    out
}

/// Decode and validate a serialized tree.
pub fn deserialize(bytes: &[u8]) -> Result<TreeModel> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("tree blob too short"))?;
    if magic != TREE_MAGIC {
        return Err(Error::format("bad tree magic"));
    }
    let version = r.read_u16::<LittleEndian>().map_err(truncated)?;
    if version != TREE_VERSION {
        return Err(Error::format(format!("unsupported tree version {version}")));
    }
    let mode = match r.read_u8().map_err(truncated)? {
        0 => TreeMode::Standard,
        1 => TreeMode::TopTree,
        other => return Err(Error::format(format!("unknown tree mode {other}"))),
    };
    let n_features = r.read_u32::<LittleEndian>().map_err(truncated)?;
    let n_classes = r.read_u32::<LittleEndian>().map_err(truncated)?;
    let n_nodes = r.read_u64::<LittleEndian>().map_err(truncated)? as usize;
    if n_nodes == 0 {
        return Err(Error::format("tree has no nodes"));
    }
    if n_nodes > u32::MAX as usize {
        return Err(Error::format("node count exceeds index range"));
    }

    let mut nodes = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let kind = r.read_u8().map_err(truncated)?;
        let feature = r.read_i32::<LittleEndian>().map_err(truncated)?;
        let threshold = r.read_f32::<LittleEndian>().map_err(truncated)?;
        let left = r.read_u32::<LittleEndian>().map_err(truncated)?;
        let right = r.read_u32::<LittleEndian>().map_err(truncated)?;
        match kind {
            0 => {
                if feature < 0 || feature as u32 >= n_features {
                    return Err(Error::format(format!(
                        "split feature {feature} outside [0, {n_features})"
                    )));
                }
                nodes.push(TreeNode::Internal {
                    feature: feature as u32,
                    threshold,
                    left,
                    right,
                });
            }
            1 => {
                let payload = match (mode, n_classes) {
                    (TreeMode::TopTree, _) => {
                        LeafPayload::Bucket(r.read_u64::<LittleEndian>().map_err(truncated)?)
                    }
                    (TreeMode::Standard, 0) => {
                        let mean = r.read_f64::<LittleEndian>().map_err(truncated)?;
                        let weight = r.read_u64::<LittleEndian>().map_err(truncated)?;
                        LeafPayload::Mean { mean, weight }
                    }
                    (TreeMode::Standard, k) => {
                        let mut counts = vec![0u64; k as usize];
                        for c in counts.iter_mut() {
                            *c = r.read_u64::<LittleEndian>().map_err(truncated)?;
                        }
                        LeafPayload::Histogram(counts.into_boxed_slice())
                    }
                };
                nodes.push(TreeNode::Leaf(payload));
            }
            other => return Err(Error::format(format!("unknown node kind {other}"))),
        }
    }
    if !r.is_empty() {
        return Err(Error::format("trailing bytes after tree payload"));
    }

    validate_structure(&nodes, mode)?;
    Ok(TreeModel::from_nodes(nodes, n_features, n_classes, mode))
}

fn truncated(_: std::io::Error) -> Error {
    Error::format("tree blob truncated")
}

/// Check the node array encodes a single binary tree: every non-root node
/// has exactly one parent, all nodes are reachable from the root, and (in
/// top-tree mode) leaf bucket indices are exactly `0..n_leaves`.
fn validate_structure(nodes: &[TreeNode], mode: TreeMode) -> Result<()> {
    let n = nodes.len();
    let mut ref_count = vec![0u8; n];
    for node in nodes {
        if let TreeNode::Internal { left, right, .. } = node {
            for &child in [left, right] {
                let child = child as usize;
                if child >= n {
                    return Err(Error::format("child index out of range"));
                }
                if child == 0 {
                    return Err(Error::format("root referenced as a child"));
                }
                if ref_count[child] == 1 {
                    return Err(Error::format("node has two parents"));
                }
                ref_count[child] = 1;
            }
        }
    }
    if ref_count.iter().skip(1).any(|&c| c == 0) {
        return Err(Error::format("unreachable node"));
    }

    if mode == TreeMode::TopTree {
        let mut buckets: Vec<u64> = nodes
            .iter()
            .filter_map(|node| match node {
                TreeNode::Leaf(LeafPayload::Bucket(i)) => Some(*i),
                _ => None,
            })
            .collect();
        buckets.sort_unstable();
        for (expect, got) in buckets.iter().enumerate() {
            if expect as u64 != *got {
                return Err(Error::format("bucket indices are not dense"));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corrupted_magic_rejected() {
        let tree = crate::tree::constant_tree(crate::tree::LeafLabel::Class(1), 3, 2);
        let mut bytes = serialize(&tree);
        bytes[0] = b'X';
        assert!(matches!(deserialize(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn empty_stream_rejected() {
        assert!(matches!(deserialize(&[]), Err(Error::Format(_))));
    }

    #[test]
    fn truncation_rejected() {
        let tree = crate::tree::constant_tree(crate::tree::LeafLabel::Class(0), 3, 2);
        let bytes = serialize(&tree);
        assert!(matches!(
            deserialize(&bytes[..bytes.len() - 3]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn version_mismatch_rejected() {
        let tree = crate::tree::constant_tree(crate::tree::LeafLabel::Class(0), 3, 2);
        let mut bytes = serialize(&tree);
        bytes[4] = 0xAA;
        bytes[5] = 0xAA;
        match deserialize(&bytes) {
            Err(Error::Format(msg)) => assert!(msg.contains("version")),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
