//! Text formats for cluster maps and descriptor databases.
//!
//! Cluster map:
//!
//! ```text
//! # sgloc-clustermap v1 count=<N> frame=<frame id> config=<hash>
//! <id> <class> <cx> <cy> <cz> <sxx> <sxy> <sxz> <syy> <syz> <szz> <n>
//! ```
//!
//! Descriptor database: the same cluster records under a
//! `# sgloc-descriptordb v1 count=<N> triangles=<M> quantum=<q> frame=.. config=..`
//! header, followed by `M` records `<id1> <id2> <id3> <d12> <d23> <d31>`.
//! Floats carry 9 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geom::{check_psd_tol, GaussianCluster, SemanticClass};
use crate::scene_graph::{DescriptorDb, TriangleDescriptor};

pub const CLUSTER_MAP_VERSION: u32 = 1;
pub const DESCRIPTOR_DB_VERSION: u32 = 1;

const MAP_MAGIC: &str = "sgloc-clustermap";
const DB_MAGIC: &str = "sgloc-descriptordb";

/// Clusters of the reference map in the world frame; a cluster's id is its
/// index.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMap {
    pub clusters: Vec<GaussianCluster>,
    pub frame_id: String,
    /// Short digest of the parameters the map was built with.
    pub config_hash: String,
}

impl Default for ClusterMap {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl ClusterMap {
    pub fn new(clusters: Vec<GaussianCluster>) -> Self {
        Self {
            clusters,
            frame_id: "world".to_string(),
            config_hash: "none".to_string(),
        }
    }

    pub fn with_config(clusters: Vec<GaussianCluster>, config_text: &str) -> Self {
        Self {
            config_hash: config_digest(config_text),
            ..Self::new(clusters)
        }
    }

    pub fn len(&self) -> usize {
        self.clusters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clusters.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for c in &self.clusters {
            c.validate()?;
        }
        Ok(())
    }
}

pub(crate) fn config_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn check_token(s: &str, what: &str) -> Result<()> {
    if s.is_empty() || s.contains(char::is_whitespace) {
        Err(Error::Format(format!("{what} `{s}` must be a non-empty token without whitespace")))
    } else {
        Ok(())
    }
}

fn g9(v: f64) -> String {
    format!("{v:.8e}")
}

fn cluster_record(out: &mut String, id: usize, c: &GaussianCluster) {
    let m = &c.covariance;
    let fields = [
        c.centroid.x,
        c.centroid.y,
        c.centroid.z,
        m[(0, 0)],
        m[(0, 1)],
        m[(0, 2)],
        m[(1, 1)],
        m[(1, 2)],
        m[(2, 2)],
    ];
    write!(out, "{id} {}", c.label.0).unwrap();
    for f in fields {
        write!(out, " {}", g9(f)).unwrap();
    }
    writeln!(out, " {}", c.point_count).unwrap();
}

fn write_header(out: &mut String, magic: &str, version: u32, extra: &[(&str, String)]) {
    write!(out, "# {magic} v{version}").unwrap();
    for (k, v) in extra {
        write!(out, " {k}={v}").unwrap();
    }
    out.push('\n');
}

struct Header {
    fields: BTreeMap<String, String>,
}

impl Header {
    fn parse(line: Option<&str>, magic: &str, version: u32, path: &Path) -> Result<Self> {
        let line = line.ok_or_else(|| Error::parse(path, 1, "missing header"))?;
        let mut toks = line.split_whitespace();
        if toks.next() != Some("#") || toks.next() != Some(magic) {
            return Err(Error::parse(path, 1, format!("expected `# {magic}` header")));
        }
        let v = toks.next().unwrap_or("");
        if v != format!("v{version}") {
            return Err(Error::parse(path, 1, format!("unsupported version `{v}`")));
        }
        let mut fields = BTreeMap::new();
        for t in toks {
            let (k, v) = t
                .split_once('=')
                .ok_or_else(|| Error::parse(path, 1, format!("bad header field `{t}`")))?;
            fields.insert(k.to_string(), v.to_string());
        }
        Ok(Self { fields })
    }

    fn get(&self, key: &str, path: &Path) -> Result<&str> {
        self.fields
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::parse(path, 1, format!("header lacks `{key}`")))
    }

    fn count(&self, key: &str, path: &Path) -> Result<usize> {
        self.get(key, path)?
            .parse()
            .map_err(|_| Error::parse(path, 1, format!("bad `{key}` in header")))
    }
}

fn parse_cluster_record(line: &str, lineno: usize, path: &Path) -> Result<(usize, GaussianCluster)> {
    let toks: Vec<&str> = line.split_whitespace().collect();
    if toks.len() != 12 {
        return Err(Error::parse(path, lineno, format!("expected 12 fields, found {}", toks.len())));
    }
    let id: usize = toks[0]
        .parse()
        .map_err(|_| Error::parse(path, lineno, "bad cluster id"))?;
    let class: u16 = toks[1]
        .parse()
        .map_err(|_| Error::parse(path, lineno, "bad class id"))?;
    let mut f = [0.0f64; 9];
    for (slot, tok) in f.iter_mut().zip(&toks[2..11]) {
        *slot = tok
            .parse()
            .map_err(|_| Error::parse(path, lineno, format!("bad number `{tok}`")))?;
        if !slot.is_finite() {
            return Err(Error::parse(path, lineno, "non-finite value"));
        }
    }
    let n: usize = toks[11]
        .parse()
        .map_err(|_| Error::parse(path, lineno, "bad point count"))?;
    let cov = Matrix3::new(f[3], f[4], f[5], f[4], f[6], f[7], f[5], f[7], f[8]);
    let c = GaussianCluster::new(SemanticClass(class), Vector3::new(f[0], f[1], f[2]), cov, n);
    // records carry 9 significant digits, so allow rounding-level negativity
    check_psd_tol(&c.covariance, 1e-7).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
    Ok((id, c))
}

/// Reads `count` cluster records starting at the iterator's position.
fn parse_clusters<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    count: usize,
    path: &Path,
) -> Result<Vec<GaussianCluster>> {
    let mut by_id: BTreeMap<usize, GaussianCluster> = BTreeMap::new();
    for _ in 0..count {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: truncated, expected {count} clusters", path.display())))?;
        let (id, c) = parse_cluster_record(line, lineno, path)?;
        if by_id.insert(id, c).is_some() {
            return Err(Error::parse(path, lineno, format!("duplicate cluster id {id}")));
        }
    }
    if let Some((i, id)) = by_id.keys().enumerate().find(|(i, id)| *i != **id) {
        return Err(Error::Format(format!(
            "{}: cluster ids must be dense from 0 (found {id} at rank {i})",
            path.display()
        )));
    }
    Ok(by_id.into_values().collect())
}

fn numbered_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn map_header_fields(map: &ClusterMap) -> Result<Vec<(&'static str, String)>> {
    check_token(&map.frame_id, "frame id")?;
    check_token(&map.config_hash, "config hash")?;
    Ok(vec![
        ("count", map.clusters.len().to_string()),
        ("frame", map.frame_id.clone()),
        ("config", map.config_hash.clone()),
    ])
}

pub fn write_cluster_map(map: &ClusterMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    write_header(&mut out, MAP_MAGIC, CLUSTER_MAP_VERSION, &map_header_fields(map)?);
    for (id, c) in map.clusters.iter().enumerate() {
        cluster_record(&mut out, id, c);
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_cluster_map(path: impl AsRef<Path>) -> Result<ClusterMap> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = numbered_lines(&text);
    let header = Header::parse(lines.next().map(|(_, l)| l), MAP_MAGIC, CLUSTER_MAP_VERSION, path)?;
    let count = header.count("count", path)?;
    let clusters = parse_clusters(&mut lines, count, path)?;
    if let Some((lineno, _)) = lines.next() {
        return Err(Error::parse(path, lineno, "trailing data after the last cluster"));
    }
    Ok(ClusterMap {
        clusters,
        frame_id: header.get("frame", path)?.to_string(),
        config_hash: header.get("config", path)?.to_string(),
    })
}

/// Writes the map and the triangles of `db` built from it.
pub fn write_descriptor_db(db: &DescriptorDb, map: &ClusterMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut fields = map_header_fields(map)?;
    fields.insert(1, ("triangles", db.len().to_string()));
    fields.insert(2, ("quantum", format!("{}", db.quantum)));
    let mut out = String::new();
    write_header(&mut out, DB_MAGIC, DESCRIPTOR_DB_VERSION, &fields);
    for (id, c) in map.clusters.iter().enumerate() {
        cluster_record(&mut out, id, c);
    }
    for t in db.triangles() {
        let [a, b, c] = t.vertex_ids;
        writeln!(out, "{a} {b} {c} {} {} {}", g9(t.sides[0]), g9(t.sides[1]), g9(t.sides[2])).unwrap();
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a descriptor database. Triangles are re-derived from the stored
/// cluster centroids and checked against the recorded side lengths.
pub fn read_descriptor_db(path: impl AsRef<Path>) -> Result<(ClusterMap, DescriptorDb)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = numbered_lines(&text);
    let header = Header::parse(lines.next().map(|(_, l)| l), DB_MAGIC, DESCRIPTOR_DB_VERSION, path)?;
    let count = header.count("count", path)?;
    let n_tri = header.count("triangles", path)?;
    let quantum: f64 = header
        .get("quantum", path)?
        .parse()
        .map_err(|_| Error::parse(path, 1, "bad quantum"))?;
    if quantum.is_nan() || quantum <= 0.0 {
        return Err(Error::parse(path, 1, "quantum must be positive"));
    }
    let clusters = parse_clusters(&mut lines, count, path)?;

    let mut tris = Vec::with_capacity(n_tri);
    for _ in 0..n_tri {
        let (lineno, line) = lines
            .next()
            .ok_or_else(|| Error::Format(format!("{}: truncated, expected {n_tri} triangles", path.display())))?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 6 {
            return Err(Error::parse(path, lineno, format!("expected 6 fields, found {}", toks.len())));
        }
        let mut ids = [0usize; 3];
        for (slot, tok) in ids.iter_mut().zip(&toks[..3]) {
            *slot = tok.parse().map_err(|_| Error::parse(path, lineno, "bad vertex id"))?;
            if *slot >= clusters.len() {
                return Err(Error::parse(path, lineno, format!("vertex id {slot} out of range")));
            }
        }
        if ids[0] == ids[1] || ids[1] == ids[2] || ids[0] == ids[2] {
            return Err(Error::parse(path, lineno, "vertex ids must be distinct"));
        }
        let t = TriangleDescriptor::new(ids, &clusters);
        for (k, tok) in toks[3..].iter().enumerate() {
            let d: f64 = tok.parse().map_err(|_| Error::parse(path, lineno, "bad side length"))?;
            if (d - t.sides[k]).abs() > 1e-6 * t.sides[k].max(1.0) {
                return Err(Error::parse(
                    path,
                    lineno,
                    format!("side length {d} disagrees with cluster centroids ({})", t.sides[k]),
                ));
            }
        }
        tris.push(t);
    }
    if let Some((lineno, _)) = lines.next() {
        return Err(Error::parse(path, lineno, "trailing data after the last triangle"));
    }
    let map = ClusterMap {
        clusters,
        frame_id: header.get("frame", path)?.to_string(),
        config_hash: header.get("config", path)?.to_string(),
    };
    Ok((map, DescriptorDb::from_triangles(quantum, tris)))
}
