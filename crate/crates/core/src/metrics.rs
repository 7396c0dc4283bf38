//! CSV metric writers with fixed headers, flushed per row so interrupted
//! runs leave readable files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::trainer::{EvalRecord, StepRecord};
use crate::Result;

pub const LOSS_HEADER: &str = "step,total_loss,l_r,l_v,l_p,l_g,l_c,lr";
pub const EVAL_HEADER: &str = "step,reward_mean,reward_std";

pub struct LossCsv {
    out: BufWriter<File>,
}

impl LossCsv {
    pub fn create(path: &Path) -> Result<LossCsv> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{LOSS_HEADER}")?;
        out.flush()?;
        Ok(LossCsv { out })
    }

    pub fn append(&mut self, record: &StepRecord) -> Result<()> {
        let b = &record.breakdown;
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{}",
            record.step, b.total, b.reward, b.value, b.policy, b.reconstruction, b.consistency,
            record.lr
        )?;
        self.out.flush()?;
        Ok(())
    }
}

pub struct EvalCsv {
    out: BufWriter<File>,
}

impl EvalCsv {
    pub fn create(path: &Path) -> Result<EvalCsv> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{EVAL_HEADER}")?;
        out.flush()?;
        Ok(EvalCsv { out })
    }

    pub fn append(&mut self, record: &EvalRecord) -> Result<()> {
        writeln!(self.out, "{},{},{}", record.step, record.mean, record.std)?;
        self.out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::LossBreakdown;

    #[test]
    fn loss_csv_has_expected_header_and_roundtrips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("losses.csv");
        let mut csv = LossCsv::create(&path).unwrap();
        csv.append(&StepRecord {
            step: 1,
            breakdown: LossBreakdown {
                reward: 0.5,
                value: 0.25,
                policy: 0.125,
                reconstruction: 0.0625,
                consistency: 0.03125,
                total: 0.96875,
            },
            lr: 0.02,
        })
        .unwrap();
        drop(csv);
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), LOSS_HEADER);
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|v| v.parse().unwrap())
            .collect();
        assert_eq!(row, vec![1.0, 0.96875, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.02]);
    }

    #[test]
    fn eval_csv_has_expected_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("evals.csv");
        let mut csv = EvalCsv::create(&path).unwrap();
        csv.append(&EvalRecord {
            step: 100,
            mean: 42.5,
            std: 3.0,
        })
        .unwrap();
        drop(csv);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, format!("{EVAL_HEADER}\n100,42.5,3\n"));
    }
}
