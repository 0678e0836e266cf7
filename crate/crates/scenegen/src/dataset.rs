//! Binary dataset files.
//!
//! Layout (little-endian): magic `ABDS`, format version `u32`, header length
//! `u32`, JSON header, header CRC32, then one record per example followed by
//! the CRC32 of the record bytes. A record holds the scenario code `u32`, seed
//! `u64`, channel payloads `f32` (channel-major), waypoints and agent history
//! as `f64` triples, and occupancy grids `f32`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SceneError};
use crate::example::{Example, Waypoint, OCCUPANCY_FACTOR};
use crate::grid::GridConfig;
use crate::raster::RasterStack;
use crate::scenario::ScenarioKind;
use crate::scene::{DT, HORIZON, PAST_STEPS};

pub const MAGIC: &[u8; 4] = b"ABDS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub grid: GridConfig,
    pub channels: Vec<String>,
    pub dense_subset: Vec<String>,
    pub horizon: usize,
    pub past_steps: usize,
    pub occupancy_factor: usize,
    pub dt: f64,
    pub count: usize,
}

impl DatasetHeader {
    fn record_len(&self) -> usize {
        let cells = self.grid.cells();
        let side = self.grid.resolution / self.occupancy_factor;
        4 + 8 + 4 * cells * self.channels.len() + 8 * 3 * (self.horizon + self.past_steps)
            + 4 * self.horizon * side * side
    }
}

fn header_for(examples: &[Example]) -> Result<DatasetHeader> {
    let (grid, channels, dense) = match examples.first() {
        Some(e) => (e.raster.grid, e.raster.names.clone(), e.raster.dense_subset.clone()),
        None => {
            let r = RasterStack::zeros(GridConfig::default());
            (r.grid, r.names, r.dense_subset)
        }
    };
    for (i, e) in examples.iter().enumerate() {
        if e.raster.grid != grid || e.raster.names != channels || e.raster.dense_subset != dense {
            return Err(SceneError::InvalidArgument(format!(
                "example {i} uses a different grid or channel layout"
            )));
        }
        if e.waypoints.len() != HORIZON || e.agent_past.len() != PAST_STEPS || e.occupancy.len() != HORIZON {
            return Err(SceneError::InvalidArgument(format!("example {i} has wrong sequence lengths")));
        }
    }
    Ok(DatasetHeader {
        grid,
        channels,
        dense_subset: dense,
        horizon: HORIZON,
        past_steps: PAST_STEPS,
        occupancy_factor: OCCUPANCY_FACTOR,
        dt: DT,
        count: examples.len(),
    })
}

fn encode(e: &Example, buf: &mut Vec<u8>) {
    buf.extend_from_slice(&e.kind.code().to_le_bytes());
    buf.extend_from_slice(&e.seed.to_le_bytes());
    for ch in &e.raster.channels {
        for v in ch {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for w in e.waypoints.iter().chain(&e.agent_past) {
        for v in [w.x, w.y, w.heading] {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    for grid in &e.occupancy {
        for v in grid {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn write_dataset(examples: &[Example], path: &Path) -> Result<()> {
    let header = header_for(examples)?;
    let json = serde_json::to_vec(&header).map_err(|e| SceneError::Header(e.to_string()))?;
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(json.len() as u32).to_le_bytes())?;
    out.write_all(&json)?;
    out.write_all(&crc32fast::hash(&json).to_le_bytes())?;
    let mut buf = Vec::with_capacity(header.record_len());
    for e in examples {
        buf.clear();
        encode(e, &mut buf);
        out.write_all(&buf)?;
        out.write_all(&crc32fast::hash(&buf).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_exact(r: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => SceneError::Truncated(what.to_string()),
        _ => SceneError::Io(e),
    })
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

struct Cursor<'a>(&'a [u8]);

impl Cursor<'_> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let (head, rest) = self.0.split_at(N);
        self.0 = rest;
        head.try_into().unwrap()
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
    fn waypoint(&mut self) -> Waypoint {
        Waypoint {
            x: self.f64(),
            y: self.f64(),
            heading: self.f64(),
        }
    }
}

/// Reads the header only.
pub fn read_header(path: &Path) -> Result<DatasetHeader> {
    let mut r = BufReader::new(File::open(path)?);
    parse_header(&mut r)
}

fn parse_header(r: &mut impl Read) -> Result<DatasetHeader> {
    let mut magic = [0u8; 4];
    read_exact(r, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(SceneError::BadMagic);
    }
    let version = read_u32(r, "version")?;
    if version != FORMAT_VERSION {
        return Err(SceneError::VersionMismatch {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let len = read_u32(r, "header length")? as usize;
    let mut json = vec![0u8; len];
    read_exact(r, &mut json, "header")?;
    let crc = read_u32(r, "header checksum")?;
    if crc != crc32fast::hash(&json) {
        return Err(SceneError::Header("header checksum mismatch".into()));
    }
    let header: DatasetHeader =
        serde_json::from_slice(&json).map_err(|e| SceneError::Header(e.to_string()))?;
    if header.occupancy_factor == 0 || header.grid.resolution % header.occupancy_factor != 0 {
        return Err(SceneError::Header("occupancy factor does not divide the grid".into()));
    }
    Ok(header)
}

pub fn read_dataset(path: &Path) -> Result<Vec<Example>> {
    let mut r = BufReader::new(File::open(path)?);
    let header = parse_header(&mut r)?;
    let cells = header.grid.cells();
    let side = header.grid.resolution / header.occupancy_factor;
    let mut buf = vec![0u8; header.record_len()];
    let mut out = Vec::with_capacity(header.count);
    for i in 0..header.count {
        read_exact(&mut r, &mut buf, &format!("record {i}"))?;
        let crc = read_u32(&mut r, &format!("checksum of record {i}"))?;
        if crc != crc32fast::hash(&buf) {
            return Err(SceneError::Checksum { record: i });
        }
        let mut c = Cursor(&buf);
        let code = u32::from_le_bytes(c.take());
        let kind = ScenarioKind::from_code(code)
            .ok_or_else(|| SceneError::Header(format!("record {i} has unknown scenario code {code}")))?;
        let seed = u64::from_le_bytes(c.take());
        let channels = (0..header.channels.len())
            .map(|_| (0..cells).map(|_| c.f32()).collect())
            .collect();
        let waypoints = (0..header.horizon).map(|_| c.waypoint()).collect();
        let agent_past = (0..header.past_steps).map(|_| c.waypoint()).collect();
        let occupancy = (0..header.horizon)
            .map(|_| (0..side * side).map(|_| c.f32()).collect())
            .collect();
        out.push(Example {
            kind,
            seed,
            raster: RasterStack {
                grid: header.grid,
                names: header.channels.clone(),
                channels,
                dense_subset: header.dense_subset.clone(),
            },
            waypoints,
            agent_past,
            occupancy,
        });
    }
    Ok(out)
}
