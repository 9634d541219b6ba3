//! Closed-form variance tables for the one-round oracles and the two-round
//! longitudinal protocols, in long format (one row per cell).

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use ldplab_core::longitudinal::{longitudinal_params, longitudinal_variance_approx, LongitudinalProtocol};
use ldplab_core::oracle::{grr_params, oue_params, sue_params, variance_approx};
use ldplab_core::LdpError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableConfig {
    pub n: u64,
    pub eps_inf: Vec<f64>,
    /// `eps_1 / eps_inf` ratios of the longitudinal table, one block each.
    pub eps1_fracs: Vec<f64>,
    /// Domain sizes of the GRR and L-GRR columns.
    pub grr_domains: Vec<usize>,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            n: 10_000,
            eps_inf: vec![0.5, 1.0, 2.0, 4.0],
            eps1_fracs: vec![0.6, 0.5, 0.4, 0.3, 0.2, 0.1],
            grr_domains: vec![2, 32, 1024],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableKind {
    OneRound,
    Longitudinal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableCell {
    pub table: TableKind,
    pub eps_inf: f64,
    pub eps_1: Option<f64>,
    pub eps1_frac: Option<f64>,
    pub protocol: String,
    pub c: Option<usize>,
    pub variance: Option<f64>,
    pub status: String,
}

impl TableCell {
    pub fn is_infeasible(&self) -> bool {
        self.variance.is_none()
    }
}

fn cell(
    table: TableKind,
    eps_inf: f64,
    eps_1: Option<f64>,
    frac: Option<f64>,
    protocol: &str,
    c: Option<usize>,
    variance: std::result::Result<f64, LdpError>,
) -> Result<TableCell> {
    let (variance, status) = match variance {
        Ok(v) => (Some(v), "ok".to_string()),
        Err(LdpError::Infeasible { reason, .. }) => (None, format!("infeasible: {reason}")),
        Err(e) => return Err(e.into()),
    };
    Ok(TableCell {
        table,
        eps_inf,
        eps_1,
        eps1_frac: frac,
        protocol: protocol.to_string(),
        c,
        variance,
        status,
    })
}

/// Approximate variances (`f = 0`) of GRR per domain size, OUE and SUE.
pub fn one_round_table(config: &TableConfig) -> Result<Vec<TableCell>> {
    let n = config.n;
    let mut cells = Vec::new();
    for &eps in &config.eps_inf {
        for &c in &config.grr_domains {
            let v = grr_params(eps, c).map(|p| variance_approx(&p, n));
            cells.push(cell(TableKind::OneRound, eps, None, None, "GRR", Some(c), v)?);
        }
        let oue = oue_params(eps).map(|p| variance_approx(&p, n));
        cells.push(cell(TableKind::OneRound, eps, None, None, "OUE", None, oue)?);
        let sue = sue_params(eps).map(|p| variance_approx(&p, n));
        cells.push(cell(TableKind::OneRound, eps, None, None, "SUE", None, sue)?);
    }
    Ok(cells)
}

/// Approximate longitudinal variances; budgets a protocol cannot satisfy are
/// kept as infeasible cells rather than dropped.
pub fn longitudinal_table(config: &TableConfig) -> Result<Vec<TableCell>> {
    let n = config.n;
    let ue = [
        LongitudinalProtocol::LOsue,
        LongitudinalProtocol::LSue,
        LongitudinalProtocol::LSoue,
        LongitudinalProtocol::LOue,
    ];
    let mut cells = Vec::new();
    for &frac in &config.eps1_fracs {
        for &eps_inf in &config.eps_inf {
            let eps_1 = frac * eps_inf;
            let row = |protocol: LongitudinalProtocol, c: usize| {
                longitudinal_params(protocol, eps_inf, eps_1, c).map(|p| longitudinal_variance_approx(&p, n))
            };
            for &c in &config.grr_domains {
                let v = row(LongitudinalProtocol::LGrr, c);
                cells.push(cell(
                    TableKind::Longitudinal,
                    eps_inf,
                    Some(eps_1),
                    Some(frac),
                    "L-GRR",
                    Some(c),
                    v,
                )?);
            }
            for protocol in ue {
                // Unary protocols do not depend on the domain size.
                let v = row(protocol, 2);
                cells.push(cell(
                    TableKind::Longitudinal,
                    eps_inf,
                    Some(eps_1),
                    Some(frac),
                    protocol.name(),
                    None,
                    v,
                )?);
            }
        }
    }
    Ok(cells)
}

/// Both tables, one-round first.
pub fn variance_table(config: &TableConfig) -> Result<Vec<TableCell>> {
    let mut cells = one_round_table(config)?;
    cells.extend(longitudinal_table(config)?);
    Ok(cells)
}

pub fn write_table_csv<W: Write>(cells: &[TableCell], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for c in cells {
        w.serialize(c)?;
    }
    w.flush()?;
    Ok(())
}
