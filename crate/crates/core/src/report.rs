use serde::{Deserialize, Serialize};

use crate::oracle::UnaryVector;

/// What a client sends to the aggregator.
///
/// `Value` and `Unary` double as the per-slot kind tag inside tuples, so a
/// tuple mixing GRR and unary slots decodes without ambiguity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Report {
    Value(usize),
    Unary(UnaryVector),
    Sampled(SampledReport),
    Tuple(TupleReport),
}

/// A single perturbed attribute together with its (disclosed) index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledReport {
    pub attribute_index: usize,
    pub payload: Box<Report>,
}

/// One report per attribute; the structure does not reveal which slot, if
/// any, carries the real value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TupleReport {
    pub per_attribute: Vec<Report>,
}

impl Report {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Report::Value(_) => "value",
            Report::Unary(_) => "unary",
            Report::Sampled(_) => "sampled",
            Report::Tuple(_) => "tuple",
        }
    }

    pub fn sampled(attribute_index: usize, payload: Report) -> Self {
        Report::Sampled(SampledReport {
            attribute_index,
            payload: Box::new(payload),
        })
    }
}
