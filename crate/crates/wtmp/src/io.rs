//! Binary channel dumps, CSV tables and run manifests.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelSnapshot;
use crate::error::{Result, WtmpError};
use crate::evaluation::ExperimentResult;
use crate::numerics::{CMatrix, C64};

pub const DUMP_MAGIC: &[u8; 8] = b"WTMPCH01";
pub const DUMP_HEADER_LEN: usize = 32;

/// Dump header: dimensions and sample period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DumpHeader {
    pub n_ports: u32,
    pub n_samples: u32,
    pub n_t: u32,
    pub n_f: u32,
    pub t_sample: f64,
}

/// Samples of every port, `samples[port][k]`, each `N_t × N_f`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelDump {
    pub header: DumpHeader,
    pub samples: Vec<Vec<ChannelSnapshot>>,
}

impl ChannelDump {
    pub fn new(samples: Vec<Vec<ChannelSnapshot>>, t_sample: f64) -> Result<Self> {
        let first = samples
            .first()
            .and_then(|p| p.first())
            .ok_or_else(|| WtmpError::Format("dump needs at least one sample".into()))?;
        let (n_t, n_f) = first.h.shape();
        let n_samples = samples[0].len();
        for port in &samples {
            if port.len() != n_samples || port.iter().any(|s| s.h.shape() != (n_t, n_f)) {
                return Err(WtmpError::Dimension("ports disagree on sample count or shape".into()));
            }
        }
        let dim = |x: usize| u32::try_from(x).map_err(|_| WtmpError::Format(format!("dimension {x} too large")));
        Ok(ChannelDump {
            header: DumpHeader {
                n_ports: dim(samples.len())?,
                n_samples: dim(n_samples)?,
                n_t: dim(n_t)?,
                n_f: dim(n_f)?,
                t_sample,
            },
            samples,
        })
    }
}

/// Layout: magic, then `n_ports, n_samples, n_t, n_f` as u32 LE, then `T`
/// as f64 LE, then every entry as interleaved (re, im) f64 LE in
/// port, sample, antenna, subcarrier order.
pub fn write_dump(path: &Path, dump: &ChannelDump) -> Result<()> {
    let f = File::create(path).map_err(|e| WtmpError::io(path, e))?;
    let mut w = BufWriter::new(f);
    let h = &dump.header;
    let mut head = Vec::with_capacity(DUMP_HEADER_LEN);
    head.extend_from_slice(DUMP_MAGIC);
    for v in [h.n_ports, h.n_samples, h.n_t, h.n_f] {
        head.extend_from_slice(&v.to_le_bytes());
    }
    head.extend_from_slice(&h.t_sample.to_le_bytes());
    w.write_all(&head).map_err(|e| WtmpError::io(path, e))?;
    for port in &dump.samples {
        for s in port {
            for z in s.h.as_slice() {
                w.write_all(&z.re.to_le_bytes()).map_err(|e| WtmpError::io(path, e))?;
                w.write_all(&z.im.to_le_bytes()).map_err(|e| WtmpError::io(path, e))?;
            }
        }
    }
    w.flush().map_err(|e| WtmpError::io(path, e))
}

pub fn read_dump_header(bytes: &[u8]) -> Result<DumpHeader> {
    if bytes.len() < DUMP_HEADER_LEN || &bytes[..8] != DUMP_MAGIC {
        return Err(WtmpError::Format("not a channel dump (bad magic)".into()));
    }
    let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    Ok(DumpHeader {
        n_ports: u(8),
        n_samples: u(12),
        n_t: u(16),
        n_f: u(20),
        t_sample: f64::from_le_bytes(bytes[24..32].try_into().unwrap()),
    })
}

pub fn read_dump(path: &Path) -> Result<ChannelDump> {
    let f = File::open(path).map_err(|e| WtmpError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(f).read_to_end(&mut bytes).map_err(|e| WtmpError::io(path, e))?;
    let h = read_dump_header(&bytes)?;
    let (p, k, nt, nf) = (h.n_ports as usize, h.n_samples as usize, h.n_t as usize, h.n_f as usize);
    let expected = DUMP_HEADER_LEN + p * k * nt * nf * 16;
    if bytes.len() != expected {
        return Err(WtmpError::Format(format!("dump is {} bytes, header implies {expected}", bytes.len())));
    }
    let mut off = DUMP_HEADER_LEN;
    let mut f64_at = || {
        let v = f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap());
        off += 8;
        v
    };
    let mut samples = Vec::with_capacity(p);
    for _ in 0..p {
        let mut port = Vec::with_capacity(k);
        for i in 0..k {
            let data: Vec<C64> = (0..nt * nf)
                .map(|_| {
                    let re = f64_at();
                    C64::new(re, f64_at())
                })
                .collect();
            let h_mat = CMatrix::new(nt, nf, data).map_err(|_| WtmpError::Format("non-finite entry in dump".into()))?;
            port.push(ChannelSnapshot {
                h: h_mat,
                t: (i + 1) as f64 * h.t_sample,
            });
        }
        samples.push(port);
    }
    Ok(ChannelDump { header: h, samples })
}

/// Write serializable rows as CSV with a header row.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| WtmpError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> WtmpError {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => WtmpError::io(path, io),
            other => WtmpError::Format(format!("{other:?}")),
        }
    } else {
        WtmpError::Format(e.to_string())
    }
}

/// Summary CSV of an experiment: `series,axis,mean,stderr,n`.
pub fn write_experiment_csv(path: &Path, r: &ExperimentResult) -> Result<()> {
    write_csv(path, &r.summary())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub git_revision: Option<String>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Revision of the enclosing git checkout, if any.
pub fn git_revision() -> Option<String> {
    let out = std::process::Command::new("git").args(["rev-parse", "HEAD"]).output().ok()?;
    out.status
        .success()
        .then(|| String::from_utf8_lossy(&out.stdout).trim().to_string())
        .filter(|s| !s.is_empty())
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| WtmpError::Format(e.to_string()))?;
    std::fs::write(path, s).map_err(|e| WtmpError::io(path, e))
}

pub fn write_manifest(path: &Path, m: &Manifest) -> Result<()> {
    write_json(path, m)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dump() -> ChannelDump {
        let samples = (0..2)
            .map(|p| {
                (1..=3)
                    .map(|k| ChannelSnapshot {
                        h: CMatrix::from_fn(4, 2, |i, j| C64::new((p * 100 + k * 10 + i) as f64, j as f64 - 0.5)),
                        t: k as f64 * 0.5e-3,
                    })
                    .collect()
            })
            .collect();
        ChannelDump::new(samples, 0.5e-3).unwrap()
    }

    #[test]
    fn dump_round_trip() {
        let dir = std::env::temp_dir().join(format!("wtmp-io-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("a.bin");
        let d = dump();
        write_dump(&path, &d).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), DUMP_HEADER_LEN + 2 * 3 * 4 * 2 * 16);
        assert_eq!(&bytes[..8], DUMP_MAGIC);
        let h = read_dump_header(&bytes).unwrap();
        assert_eq!((h.n_ports, h.n_samples, h.n_t, h.n_f), (2, 3, 4, 2));
        assert_eq!(read_dump(&path).unwrap(), d);
        std::fs::write(&path, &bytes[..40]).unwrap();
        assert!(matches!(read_dump(&path), Err(WtmpError::Format(_))));
        assert!(matches!(read_dump(&dir.join("missing.bin")), Err(WtmpError::Io { .. })));
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn hashing() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
