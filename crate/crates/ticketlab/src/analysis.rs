//! Post-hoc mask interpretation: which input dimensions a ticket still reads,
//! how strongly it reads them, how pruning is distributed over layers and
//! (for the grid maze's channel-major encodings) over object channels, and
//! the transfer experiment that trains a dense network restricted to a
//! ticket's input support.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::agents::{EvalPoint, TrainSettings, Trainer};
use crate::error::{Error, Result};
use crate::imp::ImpRunReport;
use crate::net::{MaskSet, ParamSet};

/// Per-input-dimension view of a first-layer mask.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDimStats {
    pub dim: usize,
    /// Channel index when a channel grouping applies (channel-major layout).
    pub channel: Option<usize>,
    pub alive_count: usize,
    /// Sum of |W[i,j] * M[i,j]| over first-layer rows i.
    pub cum_magnitude: f64,
    pub eliminated: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputMaskSummary {
    pub dims: Vec<InputDimStats>,
}

impl InputMaskSummary {
    pub fn eliminated_dims(&self) -> Vec<usize> {
        self.dims.iter().filter(|d| d.eliminated).map(|d| d.dim).collect()
    }
}

/// Column-wise first-layer statistics. `channel_shape` is
/// `(n_channels, cells_per_channel)` for channel-major inputs; dimension `j`
/// then belongs to channel `j / cells_per_channel`.
pub fn input_column_stats(
    params: &ParamSet,
    masks: &MaskSet,
    channel_shape: Option<(usize, usize)>,
) -> Result<InputMaskSummary> {
    let w = &params.layers[0].weight;
    let m = &masks.layers[0];
    if w.dim() != m.dim() {
        return Err(Error::invalid("first-layer weight/mask shape mismatch"));
    }
    if let Some((channels, cells)) = channel_shape {
        if channels * cells != w.ncols() {
            return Err(Error::invalid(format!(
                "channel shape {}x{} does not cover {} input dims",
                channels,
                cells,
                w.ncols()
            )));
        }
    }
    let dims = (0..w.ncols())
        .map(|j| {
            let alive_count = m.column(j).iter().filter(|&&v| v != 0.0).count();
            let cum_magnitude: f64 = w
                .column(j)
                .iter()
                .zip(m.column(j).iter())
                .map(|(&wv, &mv)| (wv * mv).abs())
                .sum();
            InputDimStats {
                dim: j,
                channel: channel_shape.map(|(_, cells)| j / cells),
                alive_count,
                cum_magnitude,
                eliminated: alive_count == 0,
            }
        })
        .collect();
    Ok(InputMaskSummary { dims })
}

/// Input dimensions with an all-zero first-layer mask column.
pub fn eliminated_dims(masks: &MaskSet) -> Vec<usize> {
    crate::imp::eliminated_inputs(masks)
}

/// Alive-connection fraction per channel: the weighted mean of the member
/// columns' alive fractions (weights are row counts, equal per column, so
/// this is total alive / total positions within the channel block).
pub fn channel_ratio(summary: &InputMaskSummary, rows: usize) -> Result<Vec<f64>> {
    let n_channels = summary
        .dims
        .iter()
        .map(|d| d.channel.ok_or_else(|| Error::invalid("summary has no channel grouping")))
        .try_fold(0usize, |acc, c| c.map(|c| acc.max(c + 1)))?;
    let mut alive = vec![0usize; n_channels];
    let mut total = vec![0usize; n_channels];
    for d in &summary.dims {
        let c = d.channel.unwrap();
        alive[c] += d.alive_count;
        total[c] += rows;
    }
    Ok(alive.iter().zip(&total).map(|(&a, &t)| a as f64 / t as f64).collect())
}

/// Per-layer remaining-fraction trajectories: `curves[layer][iteration]`.
pub fn layer_ratio_curve(report: &ImpRunReport) -> Vec<Vec<f64>> {
    if report.records.is_empty() {
        return Vec::new();
    }
    let n_layers = report.records[0].layer_remaining.len();
    (0..n_layers)
        .map(|l| report.records.iter().map(|r| r.layer_remaining[l]).collect())
        .collect()
}

/// Trains a fresh dense network whose input layer is restricted to `keep`:
/// all first-layer columns outside the keep set are hard-zeroed, everything
/// else stays dense. Returns the evaluation curve.
pub fn mask_transfer_train(
    trainer: &dyn Trainer,
    keep: &[usize],
    settings: &TrainSettings,
    init_seed: u64,
) -> Result<Vec<EvalPoint>> {
    if keep.is_empty() {
        return Err(Error::invalid("mask transfer needs a nonempty keep set"));
    }
    let (params, _) = trainer.init(init_seed)?;
    let input_dim = params.layers[0].weight.ncols();
    if let Some(&bad) = keep.iter().find(|&&d| d >= input_dim) {
        return Err(Error::invalid(format!(
            "keep dimension {bad} out of range for input size {input_dim}"
        )));
    }
    let mut masks = MaskSet::ones_like(&params);
    let first: &mut Array2<f64> = &mut masks.layers[0];
    for j in 0..input_dim {
        if !keep.contains(&j) {
            first.column_mut(j).fill(0.0);
        }
    }
    let outcome = trainer.train(&params, &masks, settings)?;
    Ok(outcome.evals)
}

pub const INPUT_SUMMARY_HEADER: &str = "run_id,dim,channel,alive_count,cum_magnitude,eliminated";
pub const LAYER_RATIOS_HEADER: &str = "run_id,iteration,layer,remaining";

/// Appends one run's rows to an `input_summary.csv` stream (no header).
pub fn write_input_summary_rows(
    w: &mut dyn Write,
    run_id: &str,
    summary: &InputMaskSummary,
) -> Result<()> {
    for d in &summary.dims {
        let channel = d.channel.map(|c| c.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            run_id, d.dim, channel, d.alive_count, d.cum_magnitude, d.eliminated
        )?;
    }
    Ok(())
}

/// Appends one run's rows to a `layer_ratios.csv` stream (no header).
pub fn write_layer_ratio_rows(w: &mut dyn Write, report: &ImpRunReport) -> Result<()> {
    for r in &report.records {
        for (layer, &remaining) in r.layer_remaining.iter().enumerate() {
            writeln!(w, "{},{},{},{}", report.run_id, r.iteration, layer, remaining)?;
        }
    }
    Ok(())
}

/// Writes `input_summary.csv` for a single run.
pub fn write_input_summary_csv(
    path: &Path,
    run_id: &str,
    summary: &InputMaskSummary,
) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{INPUT_SUMMARY_HEADER}")?;
    write_input_summary_rows(&mut f, run_id, summary)
}

/// Writes `layer_ratios.csv` for a single run.
pub fn write_layer_ratios_csv(path: &Path, report: &ImpRunReport) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "{LAYER_RATIOS_HEADER}")?;
    write_layer_ratio_rows(&mut f, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn toy() -> (ParamSet, MaskSet) {
        let params = ParamSet {
            layers: vec![crate::net::LayerParams {
                weight: array![[0.5, -0.5], [0.0, 1.0]],
                bias: array![0.0, 0.0],
            }],
        };
        let masks = MaskSet { layers: vec![array![[1.0, 1.0], [1.0, 1.0]]] };
        (params, masks)
    }

    #[test]
    fn column_sums_match_hand_values() {
        let (params, masks) = toy();
        let s = input_column_stats(&params, &masks, None).unwrap();
        assert_eq!(s.dims[0].cum_magnitude, 0.5);
        assert_eq!(s.dims[1].cum_magnitude, 1.5);
        assert!(s.eliminated_dims().is_empty());
    }

    #[test]
    fn zeroed_column_is_eliminated_with_zero_sum() {
        let (params, mut masks) = toy();
        masks.layers[0].column_mut(0).fill(0.0);
        let s = input_column_stats(&params, &masks, None).unwrap();
        assert!(s.dims[0].eliminated);
        assert_eq!(s.dims[0].cum_magnitude, 0.0);
        assert_eq!(s.dims[0].alive_count, 0);
        assert_eq!(s.eliminated_dims(), vec![0]);
        assert_eq!(eliminated_dims(&masks), vec![0]);
    }

    #[test]
    fn eliminated_iff_zero_magnitude() {
        // The two notions of elimination coincide even with zero-valued
        // weights at alive positions.
        let (params, masks) = toy();
        let s = input_column_stats(&params, &masks, None).unwrap();
        for d in &s.dims {
            assert_eq!(d.eliminated, d.alive_count == 0);
            if d.eliminated {
                assert_eq!(d.cum_magnitude, 0.0);
            }
        }
    }

    #[test]
    fn channel_grouping_and_ratios() {
        // 4 inputs as 2 channels x 2 cells, 2 rows; kill one full channel.
        let params = ParamSet {
            layers: vec![crate::net::LayerParams {
                weight: Array2::ones((2, 4)),
                bias: array![0.0, 0.0],
            }],
        };
        let mut masks = MaskSet { layers: vec![Array2::ones((2, 4))] };
        masks.layers[0].column_mut(2).fill(0.0);
        masks.layers[0].column_mut(3).fill(0.0);
        let s = input_column_stats(&params, &masks, Some((2, 2))).unwrap();
        assert_eq!(s.dims[1].channel, Some(0));
        assert_eq!(s.dims[2].channel, Some(1));
        let ratios = channel_ratio(&s, 2).unwrap();
        assert_eq!(ratios, vec![1.0, 0.0]);
    }

    #[test]
    fn channel_shape_must_cover_inputs() {
        let (params, masks) = toy();
        assert!(input_column_stats(&params, &masks, Some((2, 3))).is_err());
    }

    #[test]
    fn channel_fractions_are_weighted_column_means() {
        // Random-ish mask: channel fraction equals mean of member column
        // alive fractions (columns share the same row count).
        let params = ParamSet {
            layers: vec![crate::net::LayerParams {
                weight: Array2::ones((4, 4)),
                bias: ndarray::Array1::zeros(4),
            }],
        };
        let mut masks = MaskSet { layers: vec![Array2::ones((4, 4))] };
        masks.layers[0][[0, 0]] = 0.0;
        masks.layers[0][[1, 0]] = 0.0;
        masks.layers[0][[2, 3]] = 0.0;
        let s = input_column_stats(&params, &masks, Some((2, 2))).unwrap();
        let ratios = channel_ratio(&s, 4).unwrap();
        let col = |j: usize| {
            masks.layers[0].column(j).iter().filter(|&&v| v != 0.0).count() as f64 / 4.0
        };
        assert_eq!(ratios[0], (col(0) + col(1)) / 2.0);
        assert_eq!(ratios[1], (col(2) + col(3)) / 2.0);
    }
}
