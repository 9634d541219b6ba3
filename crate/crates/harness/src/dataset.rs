//! Categorical datasets: CSV ingestion with first-appearance index mapping,
//! an indexed on-disk form, and seeded uniform synthesis.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use ldplab_core::multidim::MultidimConfig;

/// Rows of value indices, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    names: Vec<String>,
    domains: Vec<usize>,
    cells: Vec<usize>,
}

impl Dataset {
    pub fn new(names: Vec<String>, domains: Vec<usize>, rows: Vec<Vec<usize>>) -> Result<Self> {
        if names.len() != domains.len() || names.is_empty() {
            return Err(HarnessError::InvalidSpec(format!(
                "{} attribute names for {} domains",
                names.len(),
                domains.len()
            )));
        }
        let d = domains.len();
        let mut cells = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(HarnessError::load(i + 1, format!("expected {d} cells, found {}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if v >= domains[j] {
                    return Err(HarnessError::load(
                        i + 1,
                        format!("value {v} outside domain {} of '{}'", domains[j], names[j]),
                    ));
                }
            }
            cells.extend_from_slice(row);
        }
        Ok(Self { names, domains, cells })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn domains(&self) -> &[usize] {
        &self.domains
    }

    pub fn d(&self) -> usize {
        self.domains.len()
    }

    pub fn n(&self) -> usize {
        self.cells.len() / self.d()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        let d = self.d();
        &self.cells[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[usize]> + '_ {
        self.cells.chunks_exact(self.d())
    }

    pub fn config(&self) -> Result<MultidimConfig> {
        Ok(MultidimConfig::new(self.domains.clone())?)
    }

    /// Exact per-attribute value frequencies over all rows.
    pub fn true_frequencies(&self) -> Vec<Vec<f64>> {
        let mut counts: Vec<Vec<u64>> = self.domains.iter().map(|&c| vec![0; c]).collect();
        for row in self.rows() {
            for (j, &v) in row.iter().enumerate() {
                counts[j][v] += 1;
            }
        }
        let n = self.n().max(1) as f64;
        counts
            .into_iter()
            .map(|c| c.into_iter().map(|k| k as f64 / n).collect())
            .collect()
    }
}

/// Original category labels, indexed by attribute then value index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValueMapping {
    pub attributes: Vec<AttributeMapping>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeMapping {
    pub name: String,
    pub values: Vec<String>,
}

/// Read a categorical CSV with a header row. Labels are assigned indices in
/// order of first appearance per column. Row numbers in errors are file
/// lines, the header being line 1.
pub fn load_csv<R: Read>(reader: R) -> Result<(Dataset, ValueMapping)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(HarnessError::load(1, "empty file")),
        Some(h) => h.map_err(|e| csv_load_error(e, 1))?,
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    if names.iter().any(String::is_empty) {
        return Err(HarnessError::load(1, "empty column name in header"));
    }
    let d = names.len();
    let mut lookup: Vec<HashMap<String, usize>> = vec![HashMap::new(); d];
    let mut labels: Vec<Vec<String>> = vec![Vec::new(); d];
    let mut cells = Vec::new();
    let mut line = 1;
    for record in records {
        line += 1;
        let record = record.map_err(|e| csv_load_error(e, line))?;
        let line = record.position().map_or(line, |p| p.line() as usize);
        if record.len() != d {
            return Err(HarnessError::load(
                line,
                format!("expected {d} cells, found {}", record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if cell.is_empty() {
                return Err(HarnessError::load(line, format!("missing value for '{}'", names[j])));
            }
            let next = labels[j].len();
            let idx = *lookup[j].entry(cell.to_string()).or_insert(next);
            if idx == next {
                labels[j].push(cell.to_string());
            }
            cells.push(idx);
        }
    }
    if cells.is_empty() {
        return Err(HarnessError::load(1, "no data rows"));
    }
    // A single-valued column would be a domain of one, which no oracle accepts;
    // the declared domain is kept at least two so the value is still reportable.
    let domains = labels.iter().map(|l| l.len().max(2)).collect();
    let mapping = ValueMapping {
        attributes: names
            .iter()
            .zip(labels)
            .map(|(name, values)| AttributeMapping {
                name: name.clone(),
                values,
            })
            .collect(),
    };
    Ok((Dataset { names, domains, cells }, mapping))
}

pub fn load_csv_path(path: &Path) -> Result<(Dataset, ValueMapping)> {
    let file = std::fs::File::open(path).map_err(|e| HarnessError::load(0, format!("{}: {e}", path.display())))?;
    load_csv(file)
}

fn csv_load_error(e: csv::Error, line: usize) -> HarnessError {
    let line = e.position().map_or(line, |p| p.line() as usize);
    HarnessError::load(line, e.to_string())
}

/// Write the dataset as a CSV of value indices under the original header.
pub fn write_indexed<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(&dataset.names)?;
    for row in dataset.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_mapping<W: Write>(mapping: &ValueMapping, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, mapping)?;
    Ok(())
}

/// Inverse of [`write_indexed`] plus [`write_mapping`].
pub fn load_indexed<R: Read, M: Read>(data: R, mapping: M) -> Result<(Dataset, ValueMapping)> {
    let mapping: ValueMapping = serde_json::from_reader(mapping)?;
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(data);
    let names: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let expected: Vec<&str> = mapping.attributes.iter().map(|a| a.name.as_str()).collect();
    if names != expected {
        return Err(HarnessError::load(1, "header does not match the mapping"));
    }
    let domains: Vec<usize> = mapping.attributes.iter().map(|a| a.values.len().max(2)).collect();
    let d = domains.len();
    let mut cells = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != d {
            return Err(HarnessError::load(line, format!("expected {d} cells, found {}", record.len())));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: usize = cell
                .trim()
                .parse()
                .map_err(|_| HarnessError::load(line, format!("'{cell}' is not a value index")))?;
            if v >= mapping.attributes[j].values.len() {
                return Err(HarnessError::load(line, format!("index {v} has no label in '{}'", names[j])));
            }
            cells.push(v);
        }
    }
    Ok((Dataset { names, domains, cells }, mapping))
}

/// `n` rows drawn i.i.d. uniformly per attribute; identical for equal seeds.
pub fn synth_uniform(n: usize, domains: &[usize], seed: u64) -> Result<Dataset> {
    MultidimConfig::new(domains.to_vec())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = domains.len();
    let mut cells = Vec::with_capacity(n * d);
    for _ in 0..n {
        cells.extend(domains.iter().map(|&c| rng.random_range(0..c)));
    }
    Ok(Dataset {
        names: (0..d).map(|j| format!("A{}", j + 1)).collect(),
        domains: domains.to_vec(),
        cells,
    })
}
