//! Space-time fields and their on-disk formats.
//!
//! The binary layout is little-endian throughout:
//!
//! | bytes | content |
//! |-------|---------|
//! | 4 | magic `FOBF` |
//! | 4 | format version (`u32`, currently 1) |
//! | 4 | spatial dimension `n` (`u32`) |
//! | 8·n | interior nodes per axis (`u64`) |
//! | 8 | number of time slices (`u64`) |
//! | 8 | spacing `h` (`f64`) |
//! | 8 | time step `dt` (`f64`) |
//! | 8 | halo radius (`f64`) |
//! | 8·n | lower box corner (`f64`) |
//! | ... | payload: `f64` values, slice-major, nodes in row-major order |

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::discretization::Grid;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"FOBF";
const VERSION: u32 = 1;

/// Values on the interior nodes of a grid at times `0, dt, ..., n dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceTimeField {
    grid: Grid,
    dt: f64,
    n_slices: usize,
    data: Vec<f64>,
}

/// JSON sidecar describing a binary field file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub format: String,
    pub version: u32,
    pub grid: Grid,
    pub dt: f64,
    pub n_slices: usize,
    pub description: String,
}

impl SpaceTimeField {
    /// Builds a field from its slices; every slice must match the grid and
    /// every value must be finite.
    pub fn from_slices(grid: &Grid, dt: f64, slices: Vec<Vec<f64>>) -> Result<Self> {
        let n = grid.len();
        let mut data = Vec::with_capacity(n * slices.len());
        for s in &slices {
            if s.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: s.len(),
                });
            }
            data.extend_from_slice(s);
        }
        Self::from_flat(grid, dt, slices.len(), data)
    }

    pub fn from_flat(grid: &Grid, dt: f64, n_slices: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_slices * grid.len() {
            return Err(Error::Shape {
                expected: n_slices * grid.len(),
                got: data.len(),
            });
        }
        if n_slices == 0 {
            return Err(Error::Domain("a field needs at least one slice".into()));
        }
        if !(dt > 0.0) {
            return Err(Error::Domain(format!("time step must be positive, got {dt}")));
        }
        if let Some(p) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite value in slice {} at node {}",
                p / grid.len(),
                p % grid.len()
            )));
        }
        Ok(Self {
            grid: grid.clone(),
            dt,
            n_slices,
            data,
        })
    }

    /// Samples `f(x, t)` on the grid at every time level.
    pub fn sample<F: Fn(&[f64], f64) -> f64>(grid: &Grid, dt: f64, n_slices: usize, f: F) -> Result<Self> {
        let coords = grid.all_coords();
        let mut data = Vec::with_capacity(n_slices * coords.len());
        for k in 0..n_slices {
            let t = k as f64 * dt;
            data.extend(coords.iter().map(|x| f(x, t)));
        }
        Self::from_flat(grid, dt, n_slices, data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn nodes(&self) -> usize {
        self.grid.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn slice(&self, k: usize) -> &[f64] {
        let n = self.nodes();
        &self.data[k * n..(k + 1) * n]
    }

    pub fn at(&self, k: usize, node: usize) -> f64 {
        self.data[k * self.nodes() + node]
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn slices(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.nodes())
    }

    /// Applies `f` nodewise.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            data: self.data.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    /// Combines two fields on the same grid nodewise.
    pub fn zip_with(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            ..self.clone()
        })
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.n_slices != other.n_slices {
            return Err(Error::Shape {
                expected: self.data.len(),
                got: other.data.len(),
            });
        }
        if self.dt != other.dt {
            return Err(Error::Domain(format!("time steps differ: {} vs {}", self.dt, other.dt)));
        }
        Ok(())
    }

    /// `max |self - other|` over all nodes and slices.
    pub fn sup_distance(&self, other: &Self) -> Result<f64> {
        self.check_compatible(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        for n in self.grid.interior_shape() {
            w.write_all(&(n as u64).to_le_bytes())?;
        }
        w.write_all(&(self.n_slices as u64).to_le_bytes())?;
        w.write_all(&self.grid.h().to_le_bytes())?;
        w.write_all(&self.dt.to_le_bytes())?;
        w.write_all(&self.grid.halo().to_le_bytes())?;
        for a in self.grid.lower() {
            w.write_all(&a.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * self.data.len());
        for v in &self.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a field file (bad magic)".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!("unsupported field format version {version}")));
        }
        let dim = read_u32(&mut r)? as usize;
        if !(dim == 1 || dim == 2) {
            return Err(Error::Format(format!("unsupported dimension {dim}")));
        }
        let shape: Vec<usize> = (0..dim).map(|_| read_u64(&mut r).map(|v| v as usize)).collect::<Result<_>>()?;
        let n_slices = read_u64(&mut r)? as usize;
        let h = read_f64(&mut r)?;
        let dt = read_f64(&mut r)?;
        let halo = read_f64(&mut r)?;
        let lower: Vec<f64> = (0..dim).map(|_| read_f64(&mut r)).collect::<Result<_>>()?;
        let upper: Vec<f64> = lower.iter().zip(&shape).map(|(a, &n)| a + (n + 1) as f64 * h).collect();
        let grid = Grid::new(&lower, &upper, h)?.with_halo(halo)?;
        let count = n_slices
            .checked_mul(grid.len())
            .ok_or_else(|| Error::Format("field size overflows".into()))?;
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        if bytes.len() != 8 * count {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header promises {}",
                bytes.len(),
                8 * count
            )));
        }
        let data = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        Self::from_flat(&grid, dt, n_slices, data)
    }

    /// Writes `<stem>.bin` and `<stem>.json` into `dir`.
    pub fn save(&self, dir: &Path, stem: &str, description: &str) -> Result<()> {
        let file = std::fs::File::create(dir.join(format!("{stem}.bin")))?;
        self.write_binary(std::io::BufWriter::new(file))?;
        let sidecar = FieldSidecar {
            format: "FOBF".into(),
            version: VERSION,
            grid: self.grid.clone(),
            dt: self.dt,
            n_slices: self.n_slices,
            description: description.into(),
        };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_binary(std::io::BufReader::new(file))
    }

    /// Writes slice `k` as CSV with one coordinate column per axis.
    pub fn write_slice_csv<W: Write>(&self, k: usize, writer: W) -> Result<()> {
        if k >= self.n_slices {
            return Err(Error::Domain(format!("slice {k} out of range 0..{}", self.n_slices)));
        }
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.grid.dim()).map(|d| format!("x{d}")).collect();
        header.push("t".into());
        header.push("value".into());
        w.write_record(&header)?;
        let t = self.time(k);
        for (i, v) in self.slice(k).iter().enumerate() {
            let mut rec: Vec<String> = self.grid.coords(i).iter().map(|c| format!("{c:.16e}")).collect();
            rec.push(format!("{t:.16e}"));
            rec.push(format!("{v:.16e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
