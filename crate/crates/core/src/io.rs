//! LBF1 binary field files and JSON manifests for ensembles and law curves.

use crate::ensemble::{Ensemble, LawCurve};
use crate::error::{Error, Result};
use crate::fields::{Grid, GridField};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const LBF1_MAGIC: &[u8; 4] = b"LBF1";
pub const LBF1_VERSION: u32 = 1;
pub const MANIFEST_VERSION: u32 = 1;

pub fn encode_field(f: &GridField) -> Vec<u8> {
    let g = f.grid();
    let mut out = Vec::with_capacity(16 + 4 * g.d() + 8 * f.values().len());
    out.extend_from_slice(LBF1_MAGIC);
    out.extend_from_slice(&LBF1_VERSION.to_le_bytes());
    out.push(g.d() as u8);
    out.push(f.m() as u8);
    out.extend_from_slice(&0u16.to_le_bytes());
    for _ in 0..g.d() {
        out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    }
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::Format("LBF1 file is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_field(bytes: &[u8]) -> Result<GridField> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4)? != LBF1_MAGIC {
        return Err(Error::Format("bad magic, expected LBF1".into()));
    }
    let version = c.u32()?;
    if version != LBF1_VERSION {
        return Err(Error::Format(format!("unsupported LBF1 version {version}")));
    }
    let head = c.take(4)?;
    let (d, m) = (head[0] as usize, head[1] as usize);
    if u16::from_le_bytes([head[2], head[3]]) != 0 {
        return Err(Error::Format("reserved header bytes must be zero".into()));
    }
    if m == 0 || !(1..=2).contains(&d) {
        return Err(Error::Format(format!("unsupported shape d={d}, m={m}")));
    }
    let ns = (0..d).map(|_| c.u32().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
    if ns.iter().any(|&n| n != ns[0]) {
        return Err(Error::Format("grid sides must be equal".into()));
    }
    let grid = Grid::new(d, ns[0])?;
    let count = m * grid.points();
    let body = c.take(8 * count)?;
    if c.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after LBF1 payload".into()));
    }
    let values = body.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
    GridField::from_values(grid, m, values)
}

pub fn write_field(path: &Path, f: &GridField) -> Result<()> {
    std::fs::write(path, encode_field(f))?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<GridField> {
    decode_field(&std::fs::read(path)?)
}

/// Member files relative to the manifest directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleManifest {
    pub version: u32,
    pub time: f64,
    pub grid: Grid,
    pub m: usize,
    pub members: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveEntry {
    pub time: f64,
    pub ensemble: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LawCurveManifest {
    pub version: u32,
    pub entries: Vec<CurveEntry>,
}

fn check_version(found: u32, what: &str) -> Result<()> {
    if found != MANIFEST_VERSION {
        return Err(Error::Format(format!("unsupported {what} manifest version {found}")));
    }
    Ok(())
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::InvalidArgument(format!("manifest path {} has no file name", path.display())))
}

/// Writes one `<stem>.<i>.lbf` per member next to the manifest at `path`.
pub fn write_ensemble(path: &Path, e: &Ensemble, time: f64) -> Result<()> {
    let dir = base_dir(path);
    let stem = stem(path)?;
    let mut members = Vec::with_capacity(e.len());
    for (i, u) in e.members().iter().enumerate() {
        let name = format!("{stem}.{i:04}.lbf");
        write_field(&dir.join(&name), u)?;
        members.push(name);
    }
    let manifest = EnsembleManifest { version: MANIFEST_VERSION, time, grid: e.grid(), m: e.m(), members };
    std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn read_ensemble(path: &Path) -> Result<(Ensemble, f64)> {
    let manifest: EnsembleManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    check_version(manifest.version, "ensemble")?;
    let dir = base_dir(path);
    let members = manifest
        .members
        .iter()
        .map(|name| {
            let f = read_field(&dir.join(name))?;
            if f.grid() != manifest.grid || f.m() != manifest.m {
                return Err(Error::Mismatch(format!("member {name} does not match the manifest grid")));
            }
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((Ensemble::new(members)?, manifest.time))
}

/// Writes `<stem>.t<j>.json` ensemble manifests and the curve manifest at `path`.
pub fn write_law_curve(path: &Path, c: &LawCurve) -> Result<()> {
    let dir = base_dir(path);
    let stem = stem(path)?;
    let mut entries = Vec::with_capacity(c.times().len());
    for (j, (&t, e)) in c.times().iter().zip(c.ensembles()).enumerate() {
        let name = format!("{stem}.t{j:04}.json");
        write_ensemble(&dir.join(&name), e, t)?;
        entries.push(CurveEntry { time: t, ensemble: name });
    }
    let manifest = LawCurveManifest { version: MANIFEST_VERSION, entries };
    std::fs::write(path, serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(())
}

pub fn read_law_curve(path: &Path) -> Result<LawCurve> {
    let manifest: LawCurveManifest = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    check_version(manifest.version, "law-curve")?;
    let dir = base_dir(path);
    let mut times = Vec::with_capacity(manifest.entries.len());
    let mut ensembles = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let (e, t) = read_ensemble(&dir.join(&entry.ensemble))?;
        if t.to_bits() != entry.time.to_bits() {
            return Err(Error::Mismatch(format!(
                "ensemble {} has time {t}, curve lists {}",
                entry.ensemble, entry.time
            )));
        }
        times.push(t);
        ensembles.push(e);
    }
    LawCurve::new(times, ensembles)
}
