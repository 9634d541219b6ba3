//! Explicit channel matrices `Pr[output | input]` for small domains.
//!
//! These are used to measure the privacy loss a parameterization actually
//! realizes (the maximum log-ratio over outputs and input pairs) and to
//! compose two sanitization rounds exactly.

use crate::error::{LdpError, Result};

/// Largest unary domain whose `2^c` output space is enumerated.
pub const MAX_UE_ENUMERATION: usize = 16;

/// Row-major `inputs x outputs` transition matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMatrix {
    inputs: usize,
    outputs: usize,
    probs: Vec<f64>,
}

impl ChannelMatrix {
    pub fn from_fn(inputs: usize, outputs: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut probs = Vec::with_capacity(inputs * outputs);
        for x in 0..inputs {
            for y in 0..outputs {
                probs.push(f(x, y));
            }
        }
        Self {
            inputs,
            outputs,
            probs,
        }
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn prob(&self, x: usize, y: usize) -> f64 {
        self.probs[x * self.outputs + y]
    }

    pub fn row(&self, x: usize) -> &[f64] {
        &self.probs[x * self.outputs..(x + 1) * self.outputs]
    }

    /// Largest row-sum deviation from 1.
    pub fn stochastic_error(&self) -> f64 {
        (0..self.inputs)
            .map(|x| (self.row(x).iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `max_y max_{x1,x2} ln(Pr[y|x1] / Pr[y|x2])`; infinite when some output
    /// is possible under one input and impossible under another.
    pub fn max_log_ratio(&self) -> f64 {
        let mut worst = 0.0f64;
        for y in 0..self.outputs {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for x in 0..self.inputs {
                let p = self.prob(x, y);
                lo = lo.min(p);
                hi = hi.max(p);
            }
            if hi == 0.0 {
                continue;
            }
            if lo == 0.0 {
                return f64::INFINITY;
            }
            worst = worst.max((hi / lo).ln());
        }
        worst
    }

    /// Channel of `next` applied to the output of `self`.
    pub fn compose(&self, next: &ChannelMatrix) -> Result<ChannelMatrix> {
        if self.outputs != next.inputs {
            return Err(LdpError::ShapeMismatch(format!(
                "cannot feed {} outputs into a channel with {} inputs",
                self.outputs, next.inputs
            )));
        }
        let mut probs = vec![0.0; self.inputs * next.outputs];
        for x in 0..self.inputs {
            let out = &mut probs[x * next.outputs..(x + 1) * next.outputs];
            for (mid, &pm) in self.row(x).iter().enumerate() {
                if pm == 0.0 {
                    continue;
                }
                for (o, &pn) in out.iter_mut().zip(next.row(mid)) {
                    *o += pm * pn;
                }
            }
        }
        Ok(ChannelMatrix {
            inputs: self.inputs,
            outputs: next.outputs,
            probs,
        })
    }
}

/// `c x c` randomized-response channel: `p` on the diagonal, `q` elsewhere.
pub fn grr_channel(p: f64, q: f64, c: usize) -> ChannelMatrix {
    ChannelMatrix::from_fn(c, c, |x, y| if x == y { p } else { q })
}

/// Unary-encoding channel from `c` one-hot inputs to all `2^c` bit patterns.
/// Output index `o` has bit `i` equal to `(o >> i) & 1`.
pub fn ue_channel(p: f64, q: f64, c: usize) -> Result<ChannelMatrix> {
    if c > MAX_UE_ENUMERATION {
        return Err(LdpError::EnumerationLimit(format!(
            "unary channel over {c} bits needs 2^{c} outputs (limit 2^{MAX_UE_ENUMERATION})"
        )));
    }
    Ok(ChannelMatrix::from_fn(c, 1 << c, |v, o| {
        (0..c)
            .map(|i| {
                let rate = if i == v { p } else { q };
                if (o >> i) & 1 == 1 {
                    rate
                } else {
                    1.0 - rate
                }
            })
            .product()
    }))
}

/// Unary-encoding channel over arbitrary bit-vector inputs (`2^c x 2^c`).
/// Needed to compose a second unary round after the first.
pub fn ue_bits_channel(p: f64, q: f64, c: usize) -> Result<ChannelMatrix> {
    if c > MAX_UE_ENUMERATION / 2 {
        return Err(LdpError::EnumerationLimit(format!(
            "bitwise unary channel over {c} bits is too large to enumerate"
        )));
    }
    let n = 1usize << c;
    Ok(ChannelMatrix::from_fn(n, n, |x, o| {
        (0..c)
            .map(|i| {
                let rate = if (x >> i) & 1 == 1 { p } else { q };
                if (o >> i) & 1 == 1 {
                    rate
                } else {
                    1.0 - rate
                }
            })
            .product()
    }))
}
