//! Per-pour logs: one CSV row per tick, plus a bit-packed file holding the
//! inner-pixel labels observed at each tick.

use std::io::{BufWriter, Read, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionMask;
use crate::observation::PixelLabelMap;

pub const CSV_HEADER: [&str; 10] = [
    "tick", "time_s", "wrist_rad", "cmd_rad_s", "src_ml", "flight_ml", "tgt_ml", "spill_ml", "est_ml",
    "liq_px",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PourRecord {
    pub tick: u64,
    pub time_s: f64,
    pub wrist_rad: f64,
    pub cmd_rad_s: f64,
    pub src_ml: f64,
    pub flight_ml: f64,
    pub tgt_ml: f64,
    pub spill_ml: f64,
    pub est_ml: f64,
    pub liq_px: u32,
    /// Relabeled ground truth, added by Viterbi relabeling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gt_ml: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PourLog {
    pub records: Vec<PourRecord>,
    /// Set when the run stopped early; holds the reason.
    pub aborted: Option<String>,
}

impl PourLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn final_target_ml(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.tgt_ml)
    }

    pub fn truth(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.tgt_ml).collect()
    }

    pub fn estimates(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.est_ml).collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.gt_ml.is_some())
    }

    /// Volumes to learn from: relabeled ground truth when every row has it,
    /// simulator truth otherwise.
    pub fn training_volumes(&self) -> Vec<f64> {
        if self.has_ground_truth() {
            self.records.iter().map(|r| r.gt_ml.unwrap_or(r.tgt_ml)).collect()
        } else {
            self.truth()
        }
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_writer(BufWriter::new(file));
        let with_gt = self.has_ground_truth();
        let mut header: Vec<&str> = CSV_HEADER.to_vec();
        if with_gt {
            header.push("gt_ml");
        }
        let csv_err = |e: csv::Error| Error::format(path, e.to_string());
        w.write_record(&header).map_err(csv_err)?;
        for r in &self.records {
            let mut row = r.clone();
            if !with_gt {
                row.gt_ml = None;
            }
            w.serialize(row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let headers = rdr.headers().map_err(|e| Error::format(path, e.to_string()))?.clone();
        if headers.len() < CSV_HEADER.len() || headers.iter().zip(CSV_HEADER).any(|(a, b)| a != b) {
            return Err(Error::format(path, "unexpected pour log header"));
        }
        let records = rdr
            .deserialize()
            .enumerate()
            .map(|(i, r)| {
                r.map_err(|e| Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 2,
                    msg: e.to_string(),
                })
            })
            .collect::<Result<Vec<PourRecord>>>()?;
        Ok(Self {
            records,
            aborted: None,
        })
    }
}

const OBS_MAGIC: &[u8] = b"POBS1\n";

/// Writes the inner-pixel labels of each frame, bit-packed in raster order.
pub fn write_observations(path: impl AsRef<Path>, mask: &RegionMask, frames: &[Vec<bool>]) -> Result<()> {
    let path = path.as_ref();
    let inner = mask.inner_count();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(OBS_MAGIC).map_err(io)?;
    writeln!(w, "{} {} {} {}", mask.width(), mask.height(), inner, frames.len()).map_err(io)?;
    let mut buf = vec![0u8; inner.div_ceil(8)];
    for frame in frames {
        if frame.len() != inner {
            return Err(Error::DimensionMismatch {
                expected: inner,
                actual: frame.len(),
            });
        }
        buf.fill(0);
        for (k, &l) in frame.iter().enumerate() {
            if l {
                buf[k / 8] |= 1 << (k % 8);
            }
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Inner-pixel labels of a full map, in raster order.
pub fn inner_labels(map: &PixelLabelMap) -> Vec<bool> {
    map.mask().inner_indices().map(|i| map.labels()[i]).collect()
}

/// Reads frames written by [`write_observations`] back into label maps over
/// `mask`, which must be the mask the file was recorded with.
pub fn read_observations(path: impl AsRef<Path>, mask: Arc<RegionMask>) -> Result<Vec<PixelLabelMap>> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if !bytes.starts_with(OBS_MAGIC) {
        return Err(Error::format(path, "not an observation file"));
    }
    let rest = &bytes[OBS_MAGIC.len()..];
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "truncated header"))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|_| Error::format(path, "bad header"))?;
    let nums: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::format(path, "bad header"))?;
    let [w, h, inner, frames] = nums[..] else {
        return Err(Error::format(path, "bad header"));
    };
    if (w, h, inner) != (mask.width(), mask.height(), mask.inner_count()) {
        return Err(Error::CacheMismatch);
    }
    let stride = inner.div_ceil(8);
    let data = &rest[nl + 1..];
    if data.len() != stride * frames {
        return Err(Error::format(path, "observation data is truncated"));
    }
    let inner_idx: Vec<usize> = mask.inner_indices().collect();
    Ok(data
        .chunks(stride)
        .map(|chunk| {
            let mut map = PixelLabelMap::empty(mask.clone());
            let labels = map.labels_mut();
            for (k, &i) in inner_idx.iter().enumerate() {
                labels[i] = chunk[k / 8] >> (k % 8) & 1 == 1;
            }
            map
        })
        .collect())
}
