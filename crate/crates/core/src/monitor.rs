//! Live monitoring of a stream against a calibrated limit.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{BaselineCalibration, Calibration};
use crate::data::{format_f64, Dataset};
use crate::error::{DriftError, Result};
use crate::mewma::{ewma_step, t2, ScoreMoments};
use crate::model::FittedModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorRecord {
    /// 1-based observation index.
    pub i: usize,
    pub t2: f64,
    pub cl: f64,
    /// `t2 > cl`.
    pub signal: bool,
}

/// Score each observation, update the MEWMA from zero and compare `T²` with
/// `cl(i)`.
pub fn monitor_stream(
    model: &FittedModel,
    moments: &ScoreMoments,
    lambda: f64,
    stream: &Dataset,
    cl: impl Fn(usize) -> f64,
) -> Result<Vec<MonitorRecord>> {
    if stream.n_features() != model.n_features() {
        return Err(DriftError::Dimension { expected: model.n_features(), got: stream.n_features() });
    }
    stream.ensure_finite()?;
    let mut z = vec![0.0; moments.dim()];
    Ok(stream
        .iter()
        .enumerate()
        .map(|(k, (x, y))| {
            ewma_step(&mut z, &model.score(x, y), lambda);
            let i = k + 1;
            let t2 = t2(&z, moments, 1.0);
            let cl = cl(i);
            MonitorRecord { i, t2, cl, signal: t2 > cl }
        })
        .collect())
}

impl Calibration {
    pub fn monitor(&self, stream: &Dataset) -> Result<Vec<MonitorRecord>> {
        monitor_stream(&self.model, &self.moments, self.config.lambda, stream, |i| self.cl_at(i))
    }
}

impl BaselineCalibration {
    pub fn monitor(&self, stream: &Dataset) -> Result<Vec<MonitorRecord>> {
        monitor_stream(&self.model, &self.moments, self.lambda, stream, |_| self.cl)
    }
}

/// Index of the first signalling record.
pub fn first_signal(records: &[MonitorRecord]) -> Option<usize> {
    records.iter().find(|r| r.signal).map(|r| r.i)
}

pub fn write_records_csv<W: Write>(records: &[MonitorRecord], writer: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    w.write_record(["i", "t2", "cl", "signal"])?;
    for r in records {
        w.write_record([r.i.to_string(), format_f64(r.t2), format_f64(r.cl), u8::from(r.signal).to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bootstrap::{calibrate, BootstrapConfig};
    use crate::datagen::{gen_linear, LinearMode};
    use crate::model::ModelSpec;

    #[test]
    fn records_flag_exceedances() {
        let data = gen_linear(200, LinearMode::Single, 3);
        let config = BootstrapConfig { outer: 5, inner: 20, horizon: 50, alpha: 0.01, seed: 1, ..Default::default() };
        let cal = calibrate(&data, &ModelSpec::linear(0.1), &config).unwrap();
        let recs = cal.monitor(&gen_linear(120, LinearMode::Mixture, 4)).unwrap();
        assert_eq!(recs.len(), 120);
        for r in &recs {
            assert_eq!(r.signal, r.t2 > r.cl);
            assert_eq!(r.cl, cal.cl_at(r.i));
        }
        assert_eq!(recs[119].cl, cal.cl[49]);

        let mut buf = Vec::new();
        write_records_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("i,t2,cl,signal\n1,"));
        assert_eq!(text.lines().count(), 121);
    }

    #[test]
    fn training_replay_starts_near_zero() {
        let data = gen_linear(500, LinearMode::Single, 8);
        let config = BootstrapConfig { outer: 3, inner: 10, horizon: 20, alpha: 0.05, seed: 2, ..Default::default() };
        let cal = calibrate(&data, &ModelSpec::linear(0.1), &config).unwrap();
        let recs = cal.monitor(&data).unwrap();
        // z_1 = λ s_1 is tiny relative to the score spread.
        assert!(recs[0].t2 < 1e-2);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let data = gen_linear(100, LinearMode::Single, 3);
        let config = BootstrapConfig { outer: 2, inner: 2, horizon: 5, seed: 1, ..Default::default() };
        let cal = calibrate(&data, &ModelSpec::linear(0.1), &config).unwrap();
        let wide = Dataset::new(2, vec![0.0, 1.0], vec![1.0]).unwrap();
        assert!(matches!(cal.monitor(&wide), Err(DriftError::Dimension { .. })));
    }
}
