//! Line-delimited JSON result files.
//!
//! Line 1 is a header naming the format and version, followed by the config
//! echo, a summary, one record per observed combination and one record per
//! RPS entry in rank order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::RunConfig;
use crate::enumerate::{RashomonSet, RpsEntry};
use crate::error::{Error, Result};
use crate::hasse::{pools_from_sigma, Partition, PartitionMatrix, Profile};
use crate::loss::{CellStats, Dataset};

pub const ARTIFACT_FORMAT: &str = "rashomon-partition-set";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Artifact {
    pub config: RunConfig,
    pub data: Dataset,
    pub rps: RashomonSet,
    /// The cardinality cap stopped enumeration early.
    pub partial: bool,
}

#[derive(Serialize, Deserialize)]
struct SigmaRecord {
    profile: String,
    rows: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase", deny_unknown_fields)]
enum Record {
    Header {
        format: String,
        version: u32,
    },
    Config {
        config: RunConfig,
    },
    Summary {
        q0: f64,
        epsilon: f64,
        theta: f64,
        profiles: Vec<String>,
        observations: u64,
        entries: usize,
        partial: bool,
    },
    Cell {
        index: usize,
        levels: Vec<usize>,
        count: u64,
        mean: f64,
        m2: f64,
    },
    Entry {
        rank: usize,
        q: f64,
        num_pools: usize,
        weight: f64,
        sigmas: Vec<SigmaRecord>,
        merges: Vec<Vec<(String, usize)>>,
    },
}

fn line(out: &mut Vec<u8>, r: &Record) -> Result<()> {
    serde_json::to_writer(&mut *out, r)?;
    out.push(b'\n');
    Ok(())
}

/// Serializes an artifact. Output depends only on the inputs.
pub fn artifact_bytes(a: &Artifact) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    line(&mut out, &Record::Header { format: ARTIFACT_FORMAT.into(), version: ARTIFACT_VERSION })?;
    line(&mut out, &Record::Config { config: a.config.clone() })?;
    line(
        &mut out,
        &Record::Summary {
            q0: a.rps.q0,
            epsilon: a.rps.epsilon,
            theta: a.rps.theta,
            profiles: a.rps.profiles.iter().map(Profile::to_bits_string).collect(),
            observations: a.data.n(),
            entries: a.rps.len(),
            partial: a.partial,
        },
    )?;
    let space = a.data.space();
    for (i, c) in a.data.cells().iter().enumerate() {
        if c.count > 0 {
            line(
                &mut out,
                &Record::Cell { index: i, levels: space.combination(i).0, count: c.count, mean: c.mean, m2: c.m2 },
            )?;
        }
    }
    for (rank, e) in a.rps.entries.iter().enumerate() {
        line(
            &mut out,
            &Record::Entry {
                rank,
                q: e.q,
                num_pools: e.num_pools(),
                weight: e.weight,
                sigmas: e
                    .sigmas
                    .iter()
                    .map(|s| SigmaRecord { profile: s.profile().to_bits_string(), rows: s.row_strings() })
                    .collect(),
                merges: e
                    .merges
                    .iter()
                    .map(|g| g.iter().map(|(p, k)| (p.to_bits_string(), *k)).collect())
                    .collect(),
            },
        )?;
    }
    Ok(out)
}

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path.file_name().ok_or_else(|| Error::Artifact(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })?;
    Ok(())
}

pub fn write_artifact(path: &Path, a: &Artifact) -> Result<()> {
    write_atomic(path, &artifact_bytes(a)?)
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Artifact(format!("line {line}: {msg}"))
}

/// Rebuilds the global partition from per-profile matrices and merges.
fn rebuild_partition(
    data: &Dataset,
    sigmas: &[PartitionMatrix],
    merges: &[Vec<(Profile, usize)>],
) -> Result<Partition> {
    let space = data.space();
    let mut groups: Vec<Vec<Vec<usize>>> = Vec::with_capacity(sigmas.len());
    for s in sigmas {
        groups.push(pools_from_sigma(space, s)?.pools().iter().map(|p| p.members().to_vec()).collect());
    }
    let index_of = |p: Profile| sigmas.iter().position(|s| s.profile() == p);
    for group in merges {
        let mut joined = Vec::new();
        for &(p, k) in group {
            let i = index_of(p).ok_or_else(|| Error::Artifact(format!("merge names unknown profile {p}")))?;
            let pool = groups[i]
                .get_mut(k)
                .ok_or_else(|| Error::Artifact(format!("merge names missing pool {k} of profile {p}")))?;
            if pool.is_empty() {
                return Err(Error::Artifact(format!("pool {k} of profile {p} merged twice")));
            }
            joined.append(pool);
        }
        groups[0].push(joined);
    }
    Ok(Partition::from_sets(groups.into_iter().flatten().filter(|g| !g.is_empty()).collect()))
}

pub fn parse_artifact(text: &str) -> Result<Artifact> {
    let mut config: Option<RunConfig> = None;
    let mut summary = None;
    let mut data: Option<Dataset> = None;
    let mut cells: Option<Vec<CellStats>> = None;
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(raw).map_err(|e| bad(n, e))?;
        match (n, rec) {
            (1, Record::Header { format, version }) => {
                if format != ARTIFACT_FORMAT || version != ARTIFACT_VERSION {
                    return Err(bad(n, format!("unsupported artifact {format} v{version}")));
                }
            }
            (1, _) => return Err(bad(n, "missing header")),
            (_, Record::Header { .. }) => return Err(bad(n, "repeated header")),
            (_, Record::Config { config: c }) => {
                c.validate().map_err(|e| bad(n, e))?;
                cells = Some(vec![CellStats::default(); c.space()?.size()]);
                config = Some(c);
            }
            (_, Record::Summary { q0, epsilon, theta, profiles, observations, entries, partial }) => {
                let profiles = profiles.iter().map(|p| Profile::parse(p)).collect::<Result<Vec<_>>>()?;
                summary = Some((q0, epsilon, theta, profiles, observations, entries, partial));
            }
            (_, Record::Cell { index, levels, count, mean, m2 }) => {
                let (Some(cfg), Some(cells)) = (&config, cells.as_mut()) else {
                    return Err(bad(n, "cell record before config"));
                };
                let space = cfg.space()?;
                if index >= space.size() || space.combination(index).0 != levels {
                    return Err(bad(n, format!("cell {index} does not match levels {levels:?}")));
                }
                cells[index] = CellStats { count, mean, m2 };
            }
            (_, Record::Entry { rank, q, num_pools, weight, sigmas, merges }) => {
                let Some(cfg) = &config else { return Err(bad(n, "entry before config")) };
                if data.is_none() {
                    let c = cells.take().ok_or_else(|| bad(n, "entry before cells"))?;
                    data = Some(Dataset::from_cells(cfg.space()?, c).map_err(|e| bad(n, e))?);
                }
                let d = data.as_ref().expect("dataset built");
                if rank != entries.len() {
                    return Err(bad(n, format!("entry rank {rank} out of order")));
                }
                let space = d.space();
                let sigmas = sigmas
                    .iter()
                    .map(|s| PartitionMatrix::from_row_strings(space, Profile::parse(&s.profile)?, &s.rows))
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| bad(n, e))?;
                let merges = merges
                    .iter()
                    .map(|g| g.iter().map(|(p, k)| Ok((Profile::parse(p)?, *k))).collect::<Result<Vec<_>>>())
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| bad(n, e))?;
                let partition = rebuild_partition(d, &sigmas, &merges).map_err(|e| bad(n, e))?;
                if partition.len() != num_pools {
                    return Err(bad(n, format!("entry has {} pools, record says {num_pools}", partition.len())));
                }
                entries.push(RpsEntry { sigmas, merges, partition, q, weight });
            }
        }
    }
    let config = config.ok_or_else(|| Error::Artifact("missing config record".into()))?;
    let (q0, epsilon, theta, profiles, observations, count, partial) =
        summary.ok_or_else(|| Error::Artifact("missing summary record".into()))?;
    let data = match data {
        Some(d) => d,
        None => Dataset::from_cells(config.space()?, cells.ok_or_else(|| Error::Artifact("missing cells".into()))?)?,
    };
    if data.n() != observations {
        return Err(Error::Artifact(format!("cells hold {} observations, summary says {observations}", data.n())));
    }
    if entries.len() != count {
        return Err(Error::Artifact(format!("found {} entries, summary says {count}", entries.len())));
    }
    let rps = RashomonSet { profiles, q0, epsilon, theta, entries };
    Ok(Artifact { config, data, rps, partial })
}

pub fn read_artifact(path: &Path) -> Result<Artifact> {
    parse_artifact(&fs::read_to_string(path)?)
}
