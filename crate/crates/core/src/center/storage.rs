//! Record store: one append-only log per array plus an in-memory index
//! sorted by `(timestamp, array)`.
//!
//! Every accepted record is appended to `array-{id}.log` in arrival order.
//! The index keeps the last record received for each key, so rebuilding it
//! by replaying the logs reproduces the same contents.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::ops::Bound;
use std::path::{Path, PathBuf};

use super::wire::WireRecord;
use crate::error::{Error, Result};

/// Ingest counters. `received == ingested + rejected` always holds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub received: u64,
    pub ingested: u64,
    pub rejected: u64,
    /// Ingested records whose key was already present.
    pub duplicates: u64,
    /// Duplicates whose payload differed from the record they replaced.
    pub conflicting_duplicates: u64,
    /// Incomplete trailing lines discarded when a connection closed.
    pub partial_lines: u64,
}

#[derive(Debug)]
pub struct Storage {
    dir: Option<PathBuf>,
    index: BTreeMap<(i64, u16), WireRecord>,
    logs: HashMap<u16, BufWriter<File>>,
    stats: IngestStats,
}

pub fn log_file_name(array_id: u16) -> String {
    format!("array-{array_id}.log")
}

fn same_payload(a: &WireRecord, b: &WireRecord) -> bool {
    a.dx == b.dx && a.dy == b.dy && a.dz == b.dz && a.energy == b.energy
}

impl Storage {
    pub fn in_memory() -> Self {
        Storage {
            dir: None,
            index: BTreeMap::new(),
            logs: HashMap::new(),
            stats: IngestStats::default(),
        }
    }

    /// Opens (creating if needed) a storage directory and rebuilds the index
    /// from any existing logs.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut s = Storage::in_memory();
        s.dir = Some(dir.clone());
        let mut ids: Vec<u16> = Vec::new();
        for entry in fs::read_dir(&dir)? {
            let name = entry?.file_name();
            let name = name.to_string_lossy();
            if let Some(id) = name
                .strip_prefix("array-")
                .and_then(|r| r.strip_suffix(".log"))
                .and_then(|id| id.parse::<u16>().ok())
            {
                ids.push(id);
            }
        }
        ids.sort_unstable();
        for id in ids {
            let f = BufReader::new(File::open(dir.join(log_file_name(id)))?);
            for (i, line) in f.lines().enumerate() {
                let line = line?;
                let rec = WireRecord::parse(&line)
                    .map_err(|e| Error::parse(i + 1, format!("{}: {e}", log_file_name(id))))?;
                if rec.array_id != id {
                    return Err(Error::parse(i + 1, format!("{} holds array {}", log_file_name(id), rec.array_id)));
                }
                s.index.insert((rec.timestamp_ms, rec.array_id), rec);
            }
        }
        Ok(s)
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn note_partial_line(&mut self) {
        self.stats.partial_lines += 1;
    }

    /// Parses and stores one wire line. Malformed lines are counted and
    /// reported, never fatal to the caller's stream.
    pub fn ingest_line(&mut self, line: &str) -> Result<()> {
        self.stats.received += 1;
        match WireRecord::parse(line).and_then(|r| r.normalized()) {
            Ok(rec) => self.store(rec),
            Err(e) => {
                self.stats.rejected += 1;
                Err(e)
            }
        }
    }

    pub fn ingest_record(&mut self, rec: WireRecord) -> Result<()> {
        self.stats.received += 1;
        match rec.validate().and_then(|_| rec.normalized()) {
            Ok(rec) => self.store(rec),
            Err(e) => {
                self.stats.rejected += 1;
                Err(e)
            }
        }
    }

    /// Batch ingest of newline-delimited records. Blank lines are skipped.
    pub fn ingest_reader<R: BufRead>(&mut self, r: R) -> Result<IngestStats> {
        let before = self.stats;
        for line in r.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                let _ = self.ingest_line(&line);
            }
        }
        let after = self.stats;
        Ok(IngestStats {
            received: after.received - before.received,
            ingested: after.ingested - before.ingested,
            rejected: after.rejected - before.rejected,
            duplicates: after.duplicates - before.duplicates,
            conflicting_duplicates: after.conflicting_duplicates - before.conflicting_duplicates,
            partial_lines: after.partial_lines - before.partial_lines,
        })
    }

    fn store(&mut self, rec: WireRecord) -> Result<()> {
        if let Some(dir) = &self.dir {
            let w = match self.logs.entry(rec.array_id) {
                std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::hash_map::Entry::Vacant(v) => {
                    let f = OpenOptions::new()
                        .create(true)
                        .append(true)
                        .open(dir.join(log_file_name(rec.array_id)))?;
                    v.insert(BufWriter::new(f))
                }
            };
            writeln!(w, "{rec}")?;
        }
        if let Some(old) = self.index.insert((rec.timestamp_ms, rec.array_id), rec) {
            self.stats.duplicates += 1;
            if !same_payload(&old, &rec) {
                self.stats.conflicting_duplicates += 1;
            }
        }
        self.stats.ingested += 1;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        for w in self.logs.values_mut() {
            w.flush()?;
        }
        Ok(())
    }

    /// Stored records with `from <= timestamp < to`, ordered by timestamp
    /// then array id.
    pub fn records_in(&self, from: i64, to: i64) -> Vec<WireRecord> {
        if from >= to {
            return Vec::new();
        }
        self.index
            .range((Bound::Included((from, 0)), Bound::Excluded((to, 0))))
            .map(|(_, r)| *r)
            .collect()
    }

    pub fn records(&self) -> Vec<WireRecord> {
        self.index.values().copied().collect()
    }

    pub fn time_span(&self) -> Option<(i64, i64)> {
        let first = self.index.keys().next()?.0;
        let last = self.index.keys().next_back()?.0;
        Some((first, last))
    }
}

impl Drop for Storage {
    fn drop(&mut self) {
        let _ = self.flush();
    }
}
