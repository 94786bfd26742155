//! Forest container: a single file holding a text manifest (key=value
//! lines: version, scheme, task, shape, config echo, tree inventory)
//! followed by length-prefixed tree blobs in canonical order (per unit:
//! top tree, then bottom trees leaf by leaf and slot by slot).

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::data::Task;
use crate::error::{Error, Result};
use crate::forest::{ForestMembers, ForestModel, Scheme, TopUnit};
use crate::tree;

pub const FOREST_MAGIC: [u8; 4] = *b"CFOR";
pub const FOREST_VERSION: u16 = 1;

/// Serialize a forest. `extra` lines (config echo) are appended to the
/// manifest verbatim, in the given order.
pub fn write_forest(model: &ForestModel, extra: &[(String, String)]) -> Vec<u8> {
    let mut manifest = String::new();
    manifest.push_str(&format!("version={FOREST_VERSION}\n"));
    manifest.push_str(&format!("scheme={}\n", model.scheme.name()));
    manifest.push_str(&format!("task={}\n", model.task.kind()));
    manifest.push_str(&format!("d={}\n", model.n_features));
    manifest.push_str(&format!("k={}\n", model.task.n_classes()));
    let combiner = match model.task {
        Task::Classification { .. } => "vote",
        Task::Regression => "mean",
    };
    manifest.push_str(&format!("combiner={combiner}\n"));

    let mut blobs: Vec<Vec<u8>> = Vec::new();
    match &model.members {
        ForestMembers::Flat(trees) => {
            manifest.push_str(&format!("trees={}\n", trees.len()));
            for t in trees {
                blobs.push(tree::serialize(t));
            }
        }
        ForestMembers::Layered(units) => {
            let n_b = units[0].leaf_trees.first().map(Vec::len).unwrap_or(0);
            manifest.push_str(&format!("units={}\n", units.len()));
            manifest.push_str(&format!("n_b={n_b}\n"));
            for (i, unit) in units.iter().enumerate() {
                manifest.push_str(&format!("unit.{i}.leaves={}\n", unit.leaf_trees.len()));
            }
            for unit in units {
                blobs.push(tree::serialize(&unit.top));
                for group in &unit.leaf_trees {
                    for t in group {
                        blobs.push(tree::serialize(t));
                    }
                }
            }
        }
    }
    for (key, value) in extra {
        manifest.push_str(&format!("{key}={value}\n"));
    }

    let manifest = manifest.into_bytes();
    let mut out = Vec::new();
    out.extend_from_slice(&FOREST_MAGIC);
    out.write_u16::<LittleEndian>(FOREST_VERSION).unwrap();
    out.write_u64::<LittleEndian>(manifest.len() as u64)
        .unwrap();
    out.extend_from_slice(&manifest);
    out.write_u64::<LittleEndian>(blobs.len() as u64).unwrap();
    for blob in blobs {
        out.write_u64::<LittleEndian>(blob.len() as u64).unwrap();
        out.extend_from_slice(&blob);
    }
    out
}

/// Decode a forest container, returning the model and the manifest pairs.
pub fn read_forest(bytes: &[u8]) -> Result<(ForestModel, BTreeMap<String, String>)> {
    let mut r = bytes;
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|_| Error::format("forest blob too short"))?;
    if magic != FOREST_MAGIC {
        return Err(Error::format("bad forest magic"));
    }
    let version = r.read_u16::<LittleEndian>().map_err(short)?;
    if version != FOREST_VERSION {
        return Err(Error::format(format!(
            "unsupported forest version {version}"
        )));
    }
    let manifest_len = r.read_u64::<LittleEndian>().map_err(short)? as usize;
    if manifest_len > r.len() {
        return Err(Error::format("forest manifest truncated"));
    }
    let manifest_bytes = &r[..manifest_len];
    let manifest_text = std::str::from_utf8(manifest_bytes)
        .map_err(|_| Error::format("forest manifest is not utf-8"))?;
    let mut pairs = BTreeMap::new();
    for line in manifest_text.lines() {
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::format(format!("bad manifest line {line:?}")))?;
        pairs.insert(key.to_string(), value.to_string());
    }
    r = &r[manifest_len..];

    let get = |key: &str| -> Result<&String> {
        pairs
            .get(key)
            .ok_or_else(|| Error::format(format!("manifest misses key {key:?}")))
    };
    let parse_u64 = |key: &str| -> Result<u64> {
        get(key)?
            .parse()
            .map_err(|_| Error::format(format!("manifest key {key:?} is not a number")))
    };

    let scheme =
        Scheme::parse(get("scheme")?).ok_or_else(|| Error::format("unknown scheme in manifest"))?;
    let d = parse_u64("d")? as u32;
    let k = parse_u64("k")? as u32;
    let task = match get("task")?.as_str() {
        "classification" => {
            if k == 0 {
                return Err(Error::format("classification forest with k = 0"));
            }
            Task::Classification { n_classes: k }
        }
        "regression" => Task::Regression,
        other => return Err(Error::format(format!("unknown task {other:?}"))),
    };

    let n_blobs = r.read_u64::<LittleEndian>().map_err(short)? as usize;
    let mut blobs = Vec::with_capacity(n_blobs);
    for _ in 0..n_blobs {
        let len = r.read_u64::<LittleEndian>().map_err(short)? as usize;
        if len > r.len() {
            return Err(Error::format("forest blob truncated"));
        }
        blobs.push(tree::deserialize(&r[..len])?);
        r = &r[len..];
    }
    if !r.is_empty() {
        return Err(Error::format("trailing bytes after forest payload"));
    }

    let members = if pairs.contains_key("trees") {
        let n = parse_u64("trees")? as usize;
        if n != blobs.len() {
            return Err(Error::format("tree inventory does not match blobs"));
        }
        ForestMembers::Flat(blobs)
    } else {
        let units = parse_u64("units")? as usize;
        let n_b = parse_u64("n_b")? as usize;
        let mut iter = blobs.into_iter();
        let mut out = Vec::with_capacity(units);
        for i in 0..units {
            let leaves = parse_u64(&format!("unit.{i}.leaves"))? as usize;
            let top = iter
                .next()
                .ok_or_else(|| Error::format("missing top tree blob"))?;
            let mut leaf_trees = Vec::with_capacity(leaves);
            for _ in 0..leaves {
                let mut group = Vec::with_capacity(n_b);
                for _ in 0..n_b {
                    group.push(
                        iter.next()
                            .ok_or_else(|| Error::format("missing bottom tree blob"))?,
                    );
                }
                leaf_trees.push(group);
            }
            out.push(TopUnit { top, leaf_trees });
        }
        if iter.next().is_some() {
            return Err(Error::format("surplus tree blobs"));
        }
        ForestMembers::Layered(out)
    };

    let model = ForestModel {
        scheme,
        task,
        n_features: d,
        members,
    };
    model.validate()?;
    Ok((model, pairs))
}

fn short(_: std::io::Error) -> Error {
    Error::format("forest blob truncated")
}

pub fn save_forest(path: &Path, model: &ForestModel, extra: &[(String, String)]) -> Result<()> {
    std::fs::write(path, write_forest(model, extra))?;
    Ok(())
}

pub fn load_forest(path: &Path) -> Result<(ForestModel, BTreeMap<String, String>)> {
    let bytes = std::fs::read(path)?;
    read_forest(&bytes)
}
