//! Batch location obfuscation over a CSV of planar coordinates.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HarnessError, Result};
use ldplab_core::noise::{planar_laplace, GeoBudget, PlanarPoint};

/// Coordinate column pairs recognised in the header, tried in order.
const COLUMN_PAIRS: [(&str, &str); 3] = [("x", "y"), ("lon", "lat"), ("longitude", "latitude")];

fn find_columns(header: &csv::StringRecord) -> Option<(usize, usize)> {
    let pos = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    COLUMN_PAIRS
        .iter()
        .find_map(|(a, b)| Some((pos(a)?, pos(b)?)))
}

/// Perturb every row's coordinates with planar Laplace noise at
/// `epsilon = l / r`, leaving other columns untouched. Rows are processed in
/// file order from a single stream seeded by `seed`. Returns the row count.
pub fn geo_sanitize<R: Read, W: Write>(input: R, output: W, l: f64, r: f64, seed: u64) -> Result<usize> {
    let budget = GeoBudget::from_level_radius(l, r)?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(input);
    let header = rdr.headers().map_err(|e| HarnessError::load(1, e.to_string()))?.clone();
    let (xi, yi) = find_columns(&header)
        .ok_or_else(|| HarnessError::load(1, "no x/y or lon/lat coordinate columns in header"))?;
    let mut w = csv::Writer::from_writer(output);
    w.write_record(&header)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            HarnessError::load(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let coord = |i: usize| -> Result<f64> {
            let cell = record.get(i).unwrap_or("").trim();
            cell.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| HarnessError::load(line, format!("'{cell}' is not a numeric coordinate")))
        };
        let loc = PlanarPoint::new(coord(xi)?, coord(yi)?)?;
        let out = planar_laplace(loc, budget, &mut rng);
        let fields: Vec<String> = record
            .iter()
            .enumerate()
            .map(|(i, f)| match i {
                _ if i == xi => out.x.to_string(),
                _ if i == yi => out.y.to_string(),
                _ => f.to_string(),
            })
            .collect();
        w.write_record(&fields)?;
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}
