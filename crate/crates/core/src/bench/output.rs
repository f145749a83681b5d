use std::io::{Read, Write};

use super::runner::MetricRecord;
use crate::error::Result;

pub const CSV_HEADER: &str = "case,algorithm,kappa,snr,trial,b_mse_us2,f_rel_err,elapsed_s,status";

/// Writes the header and one row per record.
pub fn emit_csv<W: Write>(records: &[MetricRecord], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv<R: Read>(input: R) -> Result<Vec<MetricRecord>> {
    let mut rd = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rd.deserialize() {
        out.push(row?);
    }
    Ok(out)
}
