//! Seeded synthetic benchmark: generate cases, run the pipeline on each and
//! summarise silhouette IoU per stage.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::pipeline::{run_with_inputs, PipelineInputs};
use crate::synth::{harness_cases, SynthConfig, View};
use crate::template::body_template;

pub const HARNESS_SEED: u64 = 2024;
pub const HARNESS_CASES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseSummary {
    pub view: View,
    pub seed: u64,
    pub stages: Vec<String>,
    pub sil_iou: Vec<f64>,
    pub joint_err_px: Vec<f64>,
    pub chamfer_full_mm: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub seed: u64,
    pub stages: Vec<String>,
    pub median_sil_iou: Vec<f64>,
    pub median_joint_err_px: Vec<f64>,
    pub cases: Vec<CaseSummary>,
}

impl HarnessReport {
    pub fn median_iou(&self, stage: &str) -> Option<f64> {
        let k = self.stages.iter().position(|s| s == stage)?;
        Some(self.median_sil_iou[k])
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Runs `count` seeded cases. With an output directory, each case's inputs
/// go to `case_NN/input` and the stage outputs to `case_NN/run`, plus a
/// `harness.json` summary at the top.
pub fn run_harness(
    count: usize,
    seed: u64,
    synth: &SynthConfig,
    config: &PipelineConfig,
    output: Option<&Path>,
) -> Result<HarnessReport> {
    let template = body_template();
    let cases = harness_cases(&template, count, seed, synth)?;
    let mut summaries = Vec::with_capacity(cases.len());
    for (i, case) in cases.iter().enumerate() {
        let dir = output.map(|o| o.join(format!("case_{i:02}")));
        if let Some(d) = &dir {
            case.save(d.join("input"))?;
        }
        let run_dir = dir.as_ref().map(|d| d.join("run"));
        let out = run_with_inputs(&PipelineInputs::from_case(case), config, run_dir.as_deref())?;
        let metrics: Vec<_> = out.records.iter().filter_map(|r| r.metrics.as_ref()).collect();
        summaries.push(CaseSummary {
            view: case.view,
            seed: case.seed,
            stages: metrics.iter().map(|m| m.stage.clone()).collect(),
            sil_iou: metrics.iter().map(|m| m.sil_iou).collect(),
            joint_err_px: metrics.iter().map(|m| m.joint_err_px).collect(),
            chamfer_full_mm: metrics.iter().map(|m| m.chamfer_full_mm).collect(),
        });
    }
    let stages = summaries.first().map(|c| c.stages.clone()).unwrap_or_default();
    let column = |k: usize, f: fn(&CaseSummary) -> &Vec<f64>| median(&summaries.iter().map(|c| f(c)[k]).collect::<Vec<_>>());
    let report = HarnessReport {
        seed,
        median_sil_iou: (0..stages.len()).map(|k| column(k, |c| &c.sil_iou)).collect(),
        median_joint_err_px: (0..stages.len()).map(|k| column(k, |c| &c.joint_err_px)).collect(),
        stages,
        cases: summaries,
    };
    if let Some(o) = output {
        let path = o.join("harness.json");
        let text = serde_json::to_string_pretty(&report).map_err(|e| Error::json(&path, e))?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
