//! Time-stamped position measurements and their on-disk formats.
//!
//! Two formats share one header:
//!
//! * CSV: lines starting with `# ` carry the header as one JSON line, then
//!   `# columns: …`, then one row per grid point (distributions) or per shot
//!   (samples).
//! * Binary, little endian: magic `NDTR`, `u32` version, `u64` header length
//!   followed by the header JSON, `u64` block count, then per block:
//!   `f64 t`, `u32` mode count `N`, `N × f64` phases, `N × i64` fold counts,
//!   `u8` kind (0 distribution, 1 samples), `u64` value count and the `f64`
//!   values. Samples are stored shot-major, `N` coordinates per shot.

use std::collections::BTreeMap;
use std::io::{BufRead, Read, Write};

use serde::{Deserialize, Serialize};

use crate::chain::{ChainSystem, NormalModeBasis};
use crate::error::{Error, Result};
use crate::grid::{tensor_len, SpatialGrid};
use crate::osc_forward::OscillatorSystem;
use crate::semicontinuous::{BoxSystem, PeriodicSystem};

const MAGIC: &[u8; 4] = b"NDTR";
const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SystemSpec {
    Oscillator(OscillatorSystem),
    Chain(ChainSystem),
    Periodic(PeriodicSystem),
    Box(BoxSystem),
}

impl SystemSpec {
    pub fn modes(&self) -> usize {
        match self {
            SystemSpec::Oscillator(s) => s.omegas.len(),
            SystemSpec::Chain(s) => s.n,
            SystemSpec::Periodic(s) => s.modes.len(),
            SystemSpec::Box(s) => s.modes.len(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SystemSpec::Oscillator(_) => "oscillator",
            SystemSpec::Chain(_) => "chain",
            SystemSpec::Periodic(_) => "periodic",
            SystemSpec::Box(_) => "box",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordHeader {
    pub system: SystemSpec,
    pub grids: Vec<SpatialGrid>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub shots: Option<u64>,
    /// Free-form provenance such as the hash of the generating config.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
    /// Present when samples are expressed in, or convertible to, normal
    /// coordinates of a coupled chain.
    #[serde(default)]
    pub normal_modes: Option<NormalModeBasis>,
    /// `true` once samples have been rotated into normal coordinates.
    #[serde(default)]
    pub normal_coordinates: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "values", rename_all = "snake_case")]
pub enum BlockData {
    /// Probability density on the tensor-product grid, first mode slowest.
    Distribution(Vec<f64>),
    /// Joint positions, shot-major.
    Samples(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordBlock {
    pub t: f64,
    /// Per-mode phase `ω_j t mod π` (oscillators only; empty otherwise).
    pub theta: Vec<f64>,
    /// Per-mode fold count `⌊ω_j t / π⌋` (oscillators only).
    pub folds: Vec<i64>,
    pub data: BlockData,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub header: RecordHeader,
    pub blocks: Vec<RecordBlock>,
}

impl MeasurementRecord {
    pub fn modes(&self) -> usize {
        self.header.grids.len()
    }

    /// Checks the blocks against the header.
    pub fn validate(&self) -> Result<()> {
        let n = self.modes();
        if n == 0 || n != self.header.system.modes() {
            return Err(Error::Shape(format!(
                "{} grids for a {}-mode system",
                n,
                self.header.system.modes()
            )));
        }
        for g in &self.header.grids {
            g.validate()?;
        }
        let len = tensor_len(&self.header.grids);
        for (i, b) in self.blocks.iter().enumerate() {
            if !b.theta.is_empty() && (b.theta.len() != n || b.folds.len() != n) {
                return Err(Error::Shape(format!(
                    "block {i}: phase/fold vectors do not match {n} modes"
                )));
            }
            match &b.data {
                BlockData::Distribution(v) if v.len() != len => {
                    return Err(Error::Shape(format!(
                        "block {i}: {} values for a grid of {len}",
                        v.len()
                    )))
                }
                BlockData::Samples(v) if v.len() % n != 0 => {
                    return Err(Error::Shape(format!(
                        "block {i}: {} sample coordinates for {n} modes",
                        v.len()
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn has_samples(&self) -> bool {
        self.blocks
            .iter()
            .all(|b| matches!(b.data, BlockData::Samples(_)))
            && !self.blocks.is_empty()
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::to_vec(&self.header)?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.blocks.len() as u64).to_le_bytes())?;
        for b in &self.blocks {
            w.write_all(&b.t.to_le_bytes())?;
            w.write_all(&(b.theta.len() as u32).to_le_bytes())?;
            for th in &b.theta {
                w.write_all(&th.to_le_bytes())?;
            }
            for f in &b.folds {
                w.write_all(&f.to_le_bytes())?;
            }
            let (kind, values) = match &b.data {
                BlockData::Distribution(v) => (0u8, v),
                BlockData::Samples(v) => (1u8, v),
            };
            w.write_all(&[kind])?;
            w.write_all(&(values.len() as u64).to_le_bytes())?;
            let mut buf = Vec::with_capacity(8 * values.len());
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a binary measurement record".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(Error::Format(format!(
                "unsupported record version {version}"
            )));
        }
        let hlen = read_u64(&mut r)? as usize;
        let mut hbuf = vec![0u8; hlen];
        r.read_exact(&mut hbuf)?;
        let header: RecordHeader = serde_json::from_slice(&hbuf)?;
        let nblocks = read_u64(&mut r)? as usize;
        let mut blocks = Vec::with_capacity(nblocks.min(1 << 20));
        for _ in 0..nblocks {
            let t = read_f64(&mut r)?;
            let n = read_u32(&mut r)? as usize;
            let theta = (0..n)
                .map(|_| read_f64(&mut r))
                .collect::<Result<Vec<_>>>()?;
            let folds = (0..n)
                .map(|_| read_u64(&mut r).map(|v| v as i64))
                .collect::<Result<Vec<_>>>()?;
            let mut kind = [0u8];
            r.read_exact(&mut kind)?;
            let len = read_u64(&mut r)? as usize;
            let mut buf = vec![0u8; 8 * len];
            r.read_exact(&mut buf)?;
            let values = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let data = match kind[0] {
                0 => BlockData::Distribution(values),
                1 => BlockData::Samples(values),
                k => return Err(Error::Format(format!("unknown block kind {k}"))),
            };
            blocks.push(RecordBlock {
                t,
                theta,
                folds,
                data,
            });
        }
        let rec = Self { header, blocks };
        rec.validate()?;
        Ok(rec)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.modes();
        writeln!(w, "# {}", serde_json::to_string(&self.header)?)?;
        let mut cols = vec!["block".to_string(), "t".to_string()];
        cols.extend((1..=n).map(|j| format!("theta_{j}")));
        cols.extend((1..=n).map(|j| format!("fold_{j}")));
        cols.push("kind".into());
        cols.extend((1..=n).map(|j| format!("x_{j}")));
        cols.push("value".into());
        writeln!(w, "# columns: {}", cols.join(","))?;
        let grids = &self.header.grids;
        let points: Vec<Vec<f64>> = grids.iter().map(SpatialGrid::points).collect();
        let dims: Vec<usize> = grids.iter().map(|g| g.n_points).collect();
        for (i, b) in self.blocks.iter().enumerate() {
            let mut prefix = format!("{i},{:e}", b.t);
            for j in 0..n {
                prefix.push_str(&format!(
                    ",{:e}",
                    b.theta.get(j).copied().unwrap_or(f64::NAN)
                ));
            }
            for j in 0..n {
                prefix.push_str(&format!(",{}", b.folds.get(j).copied().unwrap_or(0)));
            }
            match &b.data {
                BlockData::Distribution(v) => {
                    for (flat, val) in v.iter().enumerate() {
                        let idx = crate::grid::unravel(flat, &dims);
                        let xs: Vec<String> = idx
                            .iter()
                            .enumerate()
                            .map(|(j, &k)| format!("{:e}", points[j][k]))
                            .collect();
                        writeln!(w, "{prefix},distribution,{},{:e}", xs.join(","), val)?;
                    }
                }
                BlockData::Samples(v) => {
                    for (shot, xs) in v.chunks_exact(n).enumerate() {
                        let xs: Vec<String> = xs.iter().map(|x| format!("{x:e}")).collect();
                        writeln!(w, "{prefix},sample,{},{shot}", xs.join(","))?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let first = lines
            .next()
            .ok_or_else(|| Error::Format("empty CSV record".into()))??;
        let json = first
            .strip_prefix("# ")
            .ok_or_else(|| Error::Format("missing header line".into()))?;
        let header: RecordHeader = serde_json::from_str(json)?;
        let n = header.grids.len();
        let mut blocks: Vec<RecordBlock> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 2 + 2 * n + 1 + n + 1 {
                return Err(Error::Format(format!(
                    "line {}: expected {} fields",
                    lineno + 2,
                    4 + 3 * n
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))
            };
            let block: usize = f[0]
                .parse()
                .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 2)))?;
            if block == blocks.len() {
                let theta: Vec<f64> = (0..n).map(|j| num(f[2 + j])).collect::<Result<_>>()?;
                let folds: Vec<i64> = (0..n)
                    .map(|j| {
                        f[2 + n + j]
                            .parse::<i64>()
                            .map_err(|e| Error::Format(e.to_string()))
                    })
                    .collect::<Result<_>>()?;
                let oscillator = theta.iter().all(|v| !v.is_nan());
                let data = match f[2 + 2 * n] {
                    "distribution" => BlockData::Distribution(Vec::new()),
                    "sample" => BlockData::Samples(Vec::new()),
                    k => return Err(Error::Format(format!("unknown kind {k}"))),
                };
                blocks.push(RecordBlock {
                    t: num(f[1])?,
                    theta: if oscillator { theta } else { Vec::new() },
                    folds: if oscillator { folds } else { Vec::new() },
                    data,
                });
            } else if block + 1 != blocks.len() {
                return Err(Error::Format(format!(
                    "line {}: blocks out of order",
                    lineno + 2
                )));
            }
            let b = blocks.last_mut().expect("pushed above");
            match &mut b.data {
                BlockData::Distribution(v) => v.push(num(f[3 + 3 * n])?),
                BlockData::Samples(v) => {
                    for j in 0..n {
                        v.push(num(f[3 + 2 * n + j])?);
                    }
                }
            }
        }
        let rec = Self { header, blocks };
        rec.validate()?;
        Ok(rec)
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

/// Draws `shots` cell indices from unnormalized nonnegative cell weights by
/// sequential binomial splitting, returning per-cell counts.
pub fn multinomial_counts<R: rand::Rng>(weights: &[f64], shots: u64, rng: &mut R) -> Vec<u64> {
    use rand_distr::{Binomial, Distribution};
    let mut remaining_mass: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let mut remaining = shots;
    let mut counts = vec![0u64; weights.len()];
    for (i, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let w = w.max(0.0);
        let p = if remaining_mass > 0.0 {
            (w / remaining_mass).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let k = if p >= 1.0 {
            remaining
        } else if p <= 0.0 {
            0
        } else {
            Binomial::new(remaining, p)
                .expect("valid binomial")
                .sample(rng)
        };
        counts[i] = k;
        remaining -= k;
        remaining_mass -= w;
    }
    if remaining > 0 {
        // Rounding left mass unassigned; give it to the heaviest cell.
        let (imax, _) = weights
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |a, (i, &w)| if w > a.1 { (i, w) } else { a });
        counts[imax] += remaining;
    }
    counts
}

/// Deterministic per-block generator: one seed, one stream per block.
pub fn block_rng(seed: u64, block: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    rng
}

/// Samples a block from a density on the tensor grid.
pub fn sample_distribution(
    grids: &[SpatialGrid],
    density: &[f64],
    shots: u64,
    seed: u64,
    block: u64,
) -> Vec<f64> {
    let weights: Vec<f64> = crate::grid::tensor_weights(grids)
        .iter()
        .zip(density)
        .map(|(w, p)| w * p)
        .collect();
    let mut rng = block_rng(seed, block);
    let counts = multinomial_counts(&weights, shots, &mut rng);
    let dims: Vec<usize> = grids.iter().map(|g| g.n_points).collect();
    let mut out = Vec::with_capacity(shots as usize * grids.len());
    for (flat, &k) in counts.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let idx = crate::grid::unravel(flat, &dims);
        for _ in 0..k {
            for (j, g) in grids.iter().enumerate() {
                out.push(g.point(idx[j]));
            }
        }
    }
    out
}

/// Bins per-shot samples back into an empirical density on the grid.
pub fn histogram(grids: &[SpatialGrid], samples: &[f64]) -> Vec<f64> {
    let n = grids.len();
    let dims: Vec<usize> = grids.iter().map(|g| g.n_points).collect();
    let weights = crate::grid::tensor_weights(grids);
    let mut counts = vec![0.0; weights.len()];
    let shots = samples.len() / n;
    for xs in samples.chunks_exact(n) {
        let mut idx = Vec::with_capacity(n);
        let mut inside = true;
        for (j, g) in grids.iter().enumerate() {
            let f = ((xs[j] - g.x_min) / g.spacing()).round();
            let k = if g.periodic {
                f.rem_euclid(g.n_points as f64)
            } else {
                f
            };
            if k < 0.0 || k >= g.n_points as f64 {
                inside = false;
                break;
            }
            idx.push(k as usize);
        }
        if inside {
            counts[crate::grid::ravel(&idx, &dims)] += 1.0;
        }
    }
    counts
        .iter()
        .zip(&weights)
        .map(|(c, w)| c / (shots.max(1) as f64 * w))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> MeasurementRecord {
        let g = SpatialGrid::new(-2.0, 2.0, 16).unwrap();
        MeasurementRecord {
            header: RecordHeader {
                system: SystemSpec::Oscillator(OscillatorSystem { omegas: vec![1.0] }),
                grids: vec![g],
                seed: Some(7),
                shots: None,
                provenance: BTreeMap::from([("config_sha256".into(), "abc".into())]),
                normal_modes: None,
                normal_coordinates: false,
            },
            blocks: vec![
                RecordBlock {
                    t: 0.0,
                    theta: vec![0.0],
                    folds: vec![0],
                    data: BlockData::Distribution((0..16).map(|i| i as f64 * 0.1).collect()),
                },
                RecordBlock {
                    t: 4.0,
                    theta: vec![4.0 - std::f64::consts::PI],
                    folds: vec![1],
                    data: BlockData::Samples(vec![0.5, -1.25, 1.0 / 3.0]),
                },
            ],
        }
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let rec = toy();
        let mut buf = Vec::new();
        rec.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"NDTR");
        assert_eq!(MeasurementRecord::read_binary(&buf[..]).unwrap(), rec);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let rec = toy();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("# columns: block,t,theta_1,fold_1,kind,x_1,value"));
        assert_eq!(MeasurementRecord::read_csv(&buf[..]).unwrap(), rec);
    }

    #[test]
    fn corrupted_binary_is_rejected() {
        let mut buf = Vec::new();
        toy().write_binary(&mut buf).unwrap();
        buf[0] = b'X';
        assert!(matches!(
            MeasurementRecord::read_binary(&buf[..]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn multinomial_conserves_shots_and_is_deterministic() {
        let w = [0.1, 0.0, 0.5, 0.4];
        let a = multinomial_counts(&w, 10_000, &mut block_rng(3, 0));
        let b = multinomial_counts(&w, 10_000, &mut block_rng(3, 0));
        assert_eq!(a, b);
        assert_eq!(a.iter().sum::<u64>(), 10_000);
        assert_eq!(a[1], 0);
        let c = multinomial_counts(&w, 10_000, &mut block_rng(3, 1));
        assert_ne!(a, c);
    }
}
