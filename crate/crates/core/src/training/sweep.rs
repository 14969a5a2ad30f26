use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::TrainState;
use crate::training::{
    evaluate_zsc, train_attribute_extraction, train_zsc, DatasetSplit, RunConfig, RunReport, SplitMode, TaskData,
    ZscEvaluation,
};

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub state: TrainState,
    pub attribute_report: Option<RunReport>,
    pub zsc_report: RunReport,
    pub evaluation: ZscEvaluation,
}

/// Optional phase II for `attribute_epochs`, then phase III warm-started
/// from it, then evaluation on the test side.
pub fn run_pipeline(
    cfg: &RunConfig,
    attribute_epochs: usize,
    split: &DatasetSplit,
    data: &TaskData<'_>,
) -> Result<PipelineOutcome> {
    let (init, attribute_report) = if attribute_epochs > 0 {
        let attr_cfg = RunConfig {
            epochs: attribute_epochs,
            ..cfg.clone()
        };
        let (s, r) = train_attribute_extraction(&attr_cfg, split, data)?;
        (Some(s), Some(r))
    } else {
        (None, None)
    };
    let (state, mut zsc_report) = train_zsc(cfg, split, data, init)?;
    let evaluation = evaluate_zsc(&state, split, data)?;
    zsc_report.metrics.insert("top1".into(), evaluation.top1);
    zsc_report.metrics.insert("top5".into(), evaluation.top5);
    Ok(PipelineOutcome {
        state,
        attribute_report,
        zsc_report,
        evaluation,
    })
}

/// Axes of a hyperparameter grid. Expansion order is fixed: epochs vary
/// slowest, then batch size, learning rate, `1/K`, weight decay.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub epochs: Vec<usize>,
    pub batch_size: Vec<usize>,
    pub lr: Vec<f64>,
    pub inv_temperature: Vec<f64>,
    pub weight_decay: Vec<f64>,
}

impl GridSpec {
    /// Empty axes fall back to the base value.
    pub fn expand(&self, base: &RunConfig) -> Vec<RunConfig> {
        fn axis<T: Copy>(v: &[T], default: T) -> Vec<T> {
            if v.is_empty() {
                vec![default]
            } else {
                v.to_vec()
            }
        }
        let mut out = Vec::new();
        for &epochs in &axis(&self.epochs, base.epochs) {
            for &batch_size in &axis(&self.batch_size, base.batch_size) {
                for &lr in &axis(&self.lr, base.lr) {
                    for &inv_temperature in &axis(&self.inv_temperature, base.inv_temperature) {
                        for &weight_decay in &axis(&self.weight_decay, base.weight_decay) {
                            out.push(RunConfig {
                                epochs,
                                batch_size,
                                lr,
                                lr_min: base.lr_min.min(lr),
                                inv_temperature,
                                weight_decay,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub config: RunConfig,
    pub report: RunReport,
    pub val_top1: f64,
    pub val_top5: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Row with the highest validation top-1 (first one on ties).
    pub best: usize,
    pub val_classes: Vec<u32>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut s = format!("# val_classes={:?}\n# best={}\n", self.val_classes, self.best);
        s += "index,epochs,batch_size,lr,inv_temperature,weight_decay,seed,final_loss,val_top1,val_top5,config\n";
        for r in &self.rows {
            let c = &r.config;
            s += &format!(
                "{},{},{},{},{},{},{},{},{},{},\"{}\"\n",
                r.index,
                c.epochs,
                c.batch_size,
                c.lr,
                c.inv_temperature,
                c.weight_decay,
                c.seed,
                r.report.final_loss().map_or(String::new(), |l| l.to_string()),
                r.val_top1,
                r.val_top5,
                c.to_json().replace('"', "\"\"")
            );
        }
        s
    }
}

/// Trains every grid point on the training classes minus `val_classes`
/// carved-out validation classes and scores it on those. The test side is
/// never touched. Grid points run in parallel; rows keep grid order.
pub fn sweep(
    grid: &[RunConfig],
    attribute_epochs: usize,
    split: &DatasetSplit,
    data: &TaskData<'_>,
    val_classes: usize,
) -> Result<SweepTable> {
    let first = grid.first().ok_or(Error::EmptyGrid)?;
    if split.mode != SplitMode::Zs {
        return Err(Error::Split("sweeps carve validation classes and need a ZS split".into()));
    }
    let carved = split.carve_validation(val_classes, first.seed)?;
    let val_split = carved.validation_as_test();
    let rows = grid
        .par_iter()
        .enumerate()
        .map(|(index, cfg)| {
            let out = run_pipeline(cfg, attribute_epochs, &val_split, data)?;
            Ok(SweepRow {
                index,
                config: cfg.clone(),
                report: out.zsc_report,
                val_top1: out.evaluation.top1,
                val_top5: out.evaluation.top5,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let best = rows
        .iter()
        .fold(0, |b, r| if r.val_top1 > rows[b].val_top1 { r.index } else { b });
    Ok(SweepTable {
        rows,
        best,
        val_classes: val_split.test.classes.clone(),
    })
}
