//! Batch protocol for out-of-process reconstruction engines.
//!
//! The toolkit writes a request CSV listing every (source_id, input path,
//! strength) job; the engine materializes outputs into the cache layout and
//! writes an acknowledgment CSV with a per-row status. Subsequent runs then
//! resolve everything through the cache.

use std::path::Path;

use crate::error::{Error, Result};
use crate::reconstruct::ReconstructionParams;

#[derive(Debug, Clone, PartialEq)]
pub struct BatchRequestRow {
    pub source_id: String,
    pub input_path: String,
    pub strength: f64,
    pub seed: u64,
    pub steps: u32,
    pub guidance: f64,
    pub prompt: String,
}

impl BatchRequestRow {
    pub fn new(source_id: &str, input_path: &str, strength: f64, params: &ReconstructionParams) -> Self {
        Self {
            source_id: source_id.to_string(),
            input_path: input_path.to_string(),
            strength,
            seed: params.seed,
            steps: params.total_steps,
            guidance: params.guidance_scale,
            prompt: params.prompt.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchAckRow {
    pub source_id: String,
    pub strength: f64,
    pub ok: bool,
    pub message: String,
}

pub fn write_request_file(rows: &[BatchRequestRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["source_id", "input_path", "strength", "seed", "steps", "guidance", "prompt"])?;
    for r in rows {
        w.write_record([
            r.source_id.as_str(),
            r.input_path.as_str(),
            &r.strength.to_string(),
            &r.seed.to_string(),
            &r.steps.to_string(),
            &r.guidance.to_string(),
            r.prompt.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_request_file(path: &Path) -> Result<Vec<BatchRequestRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize, name: &str| -> Result<String> {
            rec.get(i)
                .map(str::to_string)
                .ok_or_else(|| Error::SchemaMismatch(format!("request row missing `{name}`")))
        };
        rows.push(BatchRequestRow {
            source_id: field(0, "source_id")?,
            input_path: field(1, "input_path")?,
            strength: field(2, "strength")?
                .parse()
                .map_err(|_| Error::SchemaMismatch("bad strength in request".into()))?,
            seed: field(3, "seed")?
                .parse()
                .map_err(|_| Error::SchemaMismatch("bad seed in request".into()))?,
            steps: field(4, "steps")?
                .parse()
                .map_err(|_| Error::SchemaMismatch("bad steps in request".into()))?,
            guidance: field(5, "guidance")?
                .parse()
                .map_err(|_| Error::SchemaMismatch("bad guidance in request".into()))?,
            prompt: field(6, "prompt")?,
        });
    }
    Ok(rows)
}

pub fn write_ack_file(rows: &[BatchAckRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["source_id", "strength", "status", "message"])?;
    for r in rows {
        w.write_record([
            r.source_id.as_str(),
            &r.strength.to_string(),
            if r.ok { "ok" } else { "failed" },
            r.message.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_ack_file(path: &Path) -> Result<Vec<BatchAckRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let status = rec.get(2).unwrap_or("");
        let ok = match status {
            "ok" => true,
            "failed" => false,
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "ack status must be ok|failed, got `{other}`"
                )))
            }
        };
        rows.push(BatchAckRow {
            source_id: rec.get(0).unwrap_or("").to_string(),
            strength: rec
                .get(1)
                .unwrap_or("")
                .parse()
                .map_err(|_| Error::SchemaMismatch("bad strength in ack".into()))?,
            ok,
            message: rec.get(3).unwrap_or("").to_string(),
        });
    }
    Ok(rows)
}
