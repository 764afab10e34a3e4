//! `THFOR01` model files. Little-endian throughout:
//!
//! ```text
//! magic "THFOR01" | version u32 | n_trees u32 | feature_dim u32 | seed u64
//! | min_leaf u32 | features_per_split u32 | max_depth u32 (0 = unlimited) | bootstrap u8
//! per tree: node_count u32, then per node
//!   feature u16 | threshold f64 | left u32 | right u32 | leaf_value f64 | is_leaf u8
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::forest::{ForestConfig, ForestModel, Node, Tree};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 7] = b"THFOR01";
pub const VERSION: u32 = 1;

pub fn write_model(model: &ForestModel, mut out: impl Write) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(model.trees.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.feature_dim as u32).to_le_bytes());
    buf.extend_from_slice(&model.seed.to_le_bytes());
    let c = &model.config;
    buf.extend_from_slice(&(c.min_leaf as u32).to_le_bytes());
    buf.extend_from_slice(&(c.features_per_split as u32).to_le_bytes());
    buf.extend_from_slice(&(c.max_depth.unwrap_or(0) as u32).to_le_bytes());
    buf.push(c.bootstrap as u8);
    for tree in &model.trees {
        buf.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
        for n in &tree.nodes {
            buf.extend_from_slice(&n.feature.to_le_bytes());
            buf.extend_from_slice(&n.threshold.to_le_bytes());
            buf.extend_from_slice(&n.left.to_le_bytes());
            buf.extend_from_slice(&n.right.to_le_bytes());
            buf.extend_from_slice(&n.leaf_value.to_le_bytes());
            buf.push(n.is_leaf as u8);
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::CorruptNode(format!("file truncated at byte {}", self.pos)));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_model(mut input: impl Read) -> Result<ForestModel> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(Error::BadMagic);
    }
    let mut c = Cursor {
        bytes: &bytes,
        pos: MAGIC.len(),
    };
    let version = c.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let n_trees = c.u32()? as usize;
    let feature_dim = c.u32()? as usize;
    let seed = c.u64()?;
    let min_leaf = c.u32()? as usize;
    let features_per_split = c.u32()? as usize;
    let max_depth = match c.u32()? {
        0 => None,
        d => Some(d as usize),
    };
    let bootstrap = c.u8()? != 0;
    let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
    for t in 0..n_trees {
        let count = c.u32()? as usize;
        if count == 0 {
            return Err(Error::CorruptNode(format!("tree {t} has no nodes")));
        }
        let mut nodes = Vec::with_capacity(count.min(1 << 20));
        for i in 0..count {
            let node = Node {
                feature: c.u16()?,
                threshold: c.f64()?,
                left: c.u32()?,
                right: c.u32()?,
                leaf_value: c.f64()?,
                is_leaf: c.u8()? != 0,
            };
            let bad = if node.is_leaf {
                !node.leaf_value.is_finite()
            } else {
                let child_ok = |ch: u32| (ch as usize) > i && (ch as usize) < count;
                node.feature as usize >= feature_dim || !child_ok(node.left) || !child_ok(node.right) || node.threshold.is_nan()
            };
            if bad {
                return Err(Error::CorruptNode(format!("tree {t} node {i}")));
            }
            nodes.push(node);
        }
        trees.push(Tree { nodes });
    }
    if c.pos != bytes.len() {
        return Err(Error::CorruptNode(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    Ok(ForestModel {
        trees,
        feature_dim,
        seed,
        config: ForestConfig {
            n_trees,
            min_leaf,
            features_per_split,
            max_depth,
            bootstrap,
        },
    })
}

pub fn save_model(model: &ForestModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    read_model(std::io::BufReader::new(std::fs::File::open(path)?))
}
