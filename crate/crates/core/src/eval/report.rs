use serde::{Deserialize, Serialize};

use crate::types::MetricReport;

/// Metrics of one method on one video.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: String,
    pub video: String,
    pub metrics: MetricReport,
}

/// Per-video records and per-method means, methods in first-seen order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub records: Vec<EvalRecord>,
    pub aggregate: Vec<(String, MetricReport)>,
}

impl EvalReport {
    pub fn new(records: Vec<EvalRecord>) -> Self {
        let aggregate = aggregate(&records);
        EvalReport { records, aggregate }
    }

    pub fn method(&self, name: &str) -> Option<&MetricReport> {
        self.aggregate.iter().find(|(m, _)| m == name).map(|(_, r)| r)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values.flatten() {
        s += v;
        n += 1;
    }
    (n > 0).then(|| s / n as f64)
}

/// Mean of every metric per method, skipping absent values.
pub fn aggregate(records: &[EvalRecord]) -> Vec<(String, MetricReport)> {
    let mut methods: Vec<&str> = Vec::new();
    for r in records {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let rs: Vec<&MetricReport> = records.iter().filter(|r| r.method == m).map(|r| &r.metrics).collect();
            let field = |f: fn(&MetricReport) -> Option<f64>| mean_of(rs.iter().map(|r| f(r)));
            let agg = MetricReport {
                epe_all: field(|r| r.epe_all),
                epe_vis: field(|r| r.epe_vis),
                epe_occ: field(|r| r.epe_occ),
                iou_occ: field(|r| r.iou_occ),
                aj: field(|r| r.aj),
                delta_avg: field(|r| r.delta_avg),
                oa: field(|r| r.oa),
                wall_time: field(|r| r.wall_time),
            };
            (m.to_string(), agg)
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// One row per method: EPE all/vis/occ, occlusion IoU, seconds per video.
pub fn summary_csv(aggregate: &[(String, MetricReport)]) -> String {
    let mut s = String::from("method,epe_all,epe_vis,epe_occ,iou_occ,time_s\n");
    for (m, r) in aggregate {
        s.push_str(&format!(
            "{m},{},{},{},{},{}\n",
            cell(r.epe_all),
            cell(r.epe_vis),
            cell(r.epe_occ),
            cell(r.iou_occ),
            cell(r.wall_time)
        ));
    }
    s
}

/// Map over `items` on up to `workers` scoped threads, keeping input order.
pub fn parallel_map<I: Sync, O: Send>(items: &[I], workers: usize, f: impl Fn(&I) -> O + Sync) -> Vec<O> {
    let workers = workers.clamp(1, items.len().max(1));
    if workers == 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    let f = &f;
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(f).collect::<Vec<O>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}
