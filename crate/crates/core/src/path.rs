//! Simulated paths of the self-similar process and their dump formats.

use std::io::Write;

use crate::error::Result;

/// Where a simulated path came from: enough to reproduce it exactly.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Provenance {
    pub scheme: String,
    pub seed: u64,
    pub path_index: u64,
    pub config_digest: String,
}

/// A simulated path of the self-similar process on a grid of output times.
///
/// All values are non-negative; once the absorption time is reached every later
/// value is zero.
#[derive(Debug, Clone)]
pub struct SimPath {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// First hitting time of zero, when reached within the simulated window.
    pub absorption: Option<f64>,
    pub provenance: Provenance,
}

impl SimPath {
    /// Writes the documented dump format: a `t,Z` CSV.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> Result<()> {
        writeln!(w, "t,Z")?;
        for (t, z) in self.times.iter().zip(&self.values) {
            writeln!(w, "{t},{z}")?;
        }
        Ok(())
    }
}

/// FNV-1a digest of a canonical configuration string, rendered as hex.
pub fn config_digest(canonical: &str) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in canonical.as_bytes() {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
