use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dot_core::eval::{aggregate, flow_metrics, parallel_map, summary_csv, EvalRecord, EvalReport};
use dot_core::io::{read_flo, read_mask};
use dot_core::MetricReport;

use crate::error::CliError;
use crate::fsutil::{prepare_out_dir, write_text};
use crate::Global;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Predictions: `flow_s_t.flo` plus `mask_s_t.png`, one directory per scene
    /// when the ground truth holds several.
    #[arg(long)]
    pub pred: PathBuf,
    /// A generated dataset root, one scene directory, or a flat directory of
    /// `flow_s_t.flo` and `vis_s_t.png`.
    #[arg(long)]
    pub gt: PathBuf,
    /// Only score pairs starting at this frame.
    #[arg(long, default_value_t = 0)]
    pub source: usize,
    /// Method name used in the report.
    #[arg(long, default_value = "dot")]
    pub method: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

/// One video's ground truth and where its predictions should be.
#[derive(Debug)]
struct Job {
    name: String,
    gt: PathBuf,
    pred: PathBuf,
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    out.sort();
    Ok(out)
}

fn jobs(gt_root: &Path, pred_root: &Path) -> Result<Vec<Job>, CliError> {
    let name_of = |p: &Path| p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    if gt_root.join("gt").is_dir() {
        return Ok(vec![Job {
            name: name_of(gt_root),
            gt: gt_root.join("gt"),
            pred: pred_root.to_path_buf(),
        }]);
    }
    let scenes: Vec<PathBuf> = list_dir(gt_root)?
        .into_iter()
        .filter(|p| p.join("gt").is_dir())
        .collect();
    if scenes.is_empty() {
        return Ok(vec![Job {
            name: name_of(gt_root),
            gt: gt_root.to_path_buf(),
            pred: pred_root.to_path_buf(),
        }]);
    }
    Ok(scenes
        .into_iter()
        .map(|s| {
            let name = name_of(&s);
            Job {
                pred: pred_root.join(&name),
                gt: s.join("gt"),
                name,
            }
        })
        .collect())
}

/// `(s, t)` of every `flow_s_t.flo` in `dir`.
fn gt_pairs(dir: &Path, source: usize) -> Result<Vec<(usize, usize)>, CliError> {
    let mut pairs = Vec::new();
    for p in list_dir(dir)? {
        let Some(stem) = p.file_name().and_then(|n| n.to_str()).and_then(|n| n.strip_suffix(".flo")) else {
            continue;
        };
        let mut it = stem.strip_prefix("flow_").unwrap_or("").split('_').map(str::parse::<usize>);
        if let (Some(Ok(s)), Some(Ok(t)), None) = (it.next(), it.next(), it.next()) {
            if s == source {
                pairs.push((s, t));
            }
        }
    }
    pairs.sort_unstable();
    Ok(pairs)
}

fn pred_mask_path(dir: &Path, s: usize, t: usize) -> Option<PathBuf> {
    [format!("mask_{s}_{t}.png"), format!("vis_{s}_{t}.png")]
        .into_iter()
        .map(|n| dir.join(n))
        .find(|p| p.is_file())
}

/// Mean metrics of one video, the pairs without a prediction and the pair count.
fn score(job: &Job, source: usize) -> Result<(Option<MetricReport>, Vec<String>, usize), CliError> {
    let mut reports = Vec::new();
    let mut missing = Vec::new();
    let pairs = gt_pairs(&job.gt, source)?;
    for &(s, t) in &pairs {
        let flow_path = job.pred.join(format!("flow_{s}_{t}.flo"));
        let mask_path = pred_mask_path(&job.pred, s, t);
        let (true, Some(mask_path)) = (flow_path.is_file(), mask_path) else {
            missing.push(format!("{}:{s}->{t}", job.name));
            continue;
        };
        let gt_flow = read_flo(job.gt.join(format!("flow_{s}_{t}.flo")))?;
        let gt_vis = read_mask(job.gt.join(format!("vis_{s}_{t}.png")))?;
        let m = flow_metrics(&read_flo(&flow_path)?, &read_mask(&mask_path)?, &gt_flow, &gt_vis)?;
        reports.push(EvalRecord {
            method: String::new(),
            video: String::new(),
            metrics: m,
        });
    }
    let mean = aggregate(&reports).into_iter().next().map(|(_, m)| m);
    Ok((mean, missing, pairs.len()))
}

pub fn run(global: &Global, args: EvalArgs) -> Result<(), CliError> {
    let jobs = jobs(&args.gt, &args.pred)?;
    prepare_out_dir(&args.out, args.force)?;
    let results = parallel_map(&jobs, global.workers, |j| score(j, args.source));
    let mut records = Vec::new();
    let mut missing = Vec::new();
    let mut total = 0;
    for (job, r) in jobs.iter().zip(results) {
        let (mean, miss, n) = r?;
        missing.extend(miss);
        total += n;
        if let Some(metrics) = mean {
            records.push(EvalRecord {
                method: args.method.clone(),
                video: job.name.clone(),
                metrics,
            });
        }
    }
    if total == 0 {
        return Err(CliError::Usage(format!(
            "no ground-truth pairs from frame {} under {}",
            args.source,
            args.gt.display()
        )));
    }
    let report = EvalReport::new(records);
    write_text(&args.out.join("report.json"), &report.to_json())?;
    write_text(&args.out.join("summary.csv"), &summary_csv(&report.aggregate))?;
    if let Some((_, m)) = report.aggregate.first() {
        log::info!(
            "{}: epe {:.4} iou {:.4} over {} videos",
            args.method,
            m.epe_all.unwrap_or(f64::NAN),
            m.iou_occ.unwrap_or(f64::NAN),
            report.records.len()
        );
    }
    if missing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial {
            done: total - missing.len(),
            total,
            missing,
        })
    }
}
