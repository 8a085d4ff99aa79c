use std::path::{Path, PathBuf};

use clap::Args;
use dot_core::color::flow_to_color;
use dot_core::io::{read_flo, read_frame, read_tracks, write_rgb};
use dot_core::TrackSource;
use plotters::prelude::*;

use crate::error::CliError;
use crate::fsutil::prepare_out_dir;
use crate::Global;

#[derive(Debug, Args)]
pub struct PlotArgs {
    /// Flow files to render as color maps, one PNG each.
    #[arg(long, num_args = 1..)]
    pub flow: Vec<PathBuf>,
    /// Tracks JSON to draw over `--frame`.
    #[arg(long, requires = "frame")]
    pub tracks: Option<PathBuf>,
    #[arg(long)]
    pub frame: Option<PathBuf>,
    /// `summary.csv` of a track-budget sweep (rows `n<N>`).
    #[arg(long)]
    pub nsweep: Option<PathBuf>,
    /// `summary.csv` of an ablation run (rows `full` and `patch-8`).
    #[arg(long)]
    pub ablation: Option<PathBuf>,
    /// Upscaling of image figures.
    #[arg(long, default_value_t = 4)]
    pub scale: usize,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

const CHART: (u32, u32) = (480, 360);

fn plot_err(e: impl std::fmt::Display) -> CliError {
    CliError::Plot(e.to_string())
}

fn upscale(rgb: &[u8], h: usize, w: usize, k: usize) -> Vec<u8> {
    let mut out = vec![0u8; h * k * w * k * 3];
    for y in 0..h * k {
        for x in 0..w * k {
            let src = ((y / k) * w + x / k) * 3;
            let dst = (y * w * k + x) * 3;
            out[dst..dst + 3].copy_from_slice(&rgb[src..src + 3]);
        }
    }
    out
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "flow".into())
}

fn flow_figure(path: &Path, out: &Path, scale: usize) -> Result<PathBuf, CliError> {
    let flow = read_flo(path)?;
    let rgb = upscale(&flow_to_color(&flow, None), flow.height, flow.width, scale);
    let dst = out.join(format!("color_{}.png", stem(path)));
    write_rgb(flow.height * scale, flow.width * scale, &rgb, &dst)?;
    Ok(dst)
}

/// Trajectories over the frame; occluded stretches are not drawn and the
/// query positions are marked.
fn track_figure(tracks: &Path, frame: &Path, out: &Path, scale: usize) -> Result<PathBuf, CliError> {
    let frame = read_frame(frame)?;
    let tracks = read_tracks(tracks, TrackSource::Sampled)?;
    let (h, w) = (frame.height * scale, frame.width * scale);
    let bytes: Vec<u8> = frame.data.iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let mut rgb = upscale(&bytes, frame.height, frame.width, scale);
    {
        let root = BitMapBackend::with_buffer(&mut rgb, (w as u32, h as u32)).into_drawing_area();
        let k = scale as f32;
        let to_px = |x: f32, y: f32| (((x + 0.5) * k) as i32, ((y + 0.5) * k) as i32);
        for (i, track) in tracks.tracks().iter().enumerate() {
            let color = Palette99::pick(i).to_rgba();
            let mut run: Vec<(i32, i32)> = Vec::new();
            for p in track.iter().chain(std::iter::once(&dot_core::TrackPoint::new(0.0, 0.0, false))) {
                if p.visible {
                    run.push(to_px(p.x, p.y));
                } else if !run.is_empty() {
                    root.draw(&PathElement::new(std::mem::take(&mut run), color.stroke_width(1)))
                        .map_err(plot_err)?;
                }
            }
            let q = track[0];
            root.draw(&Circle::new(to_px(q.x, q.y), 2, color.filled()))
                .map_err(plot_err)?;
        }
        root.present().map_err(plot_err)?;
    }
    let dst = out.join("tracks.png");
    write_rgb(h, w, &rgb, &dst)?;
    Ok(dst)
}

#[derive(Debug, serde::Deserialize)]
struct SummaryRow {
    method: String,
    epe_all: Option<f64>,
}

/// `(method, epe_all)` rows of a summary CSV; rows without EPE are skipped.
fn read_summary(path: &Path) -> Result<Vec<(String, f64)>, CliError> {
    let bad = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(bad)?;
    let mut rows = Vec::new();
    for row in reader.deserialize::<SummaryRow>() {
        let row = row.map_err(bad)?;
        if let Some(e) = row.epe_all {
            rows.push((row.method, e));
        }
    }
    Ok(rows)
}

/// Line chart of `points`, x on a log2 axis when `log_x`.
fn line_chart(points: &[(f64, f64)], log_x: bool, dst: &Path) -> Result<(), CliError> {
    if points.is_empty() {
        return Err(CliError::Usage(format!("no data points for {}", dst.display())));
    }
    let (w, h) = CHART;
    let mut rgb = vec![255u8; (w * h * 3) as usize];
    {
        let root = BitMapBackend::with_buffer(&mut rgb, (w, h)).into_drawing_area();
        let xs: Vec<f64> = points.iter().map(|p| if log_x { p.0.log2() } else { p.0 }).collect();
        let (x0, x1) = xs.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
        let y1 = points.iter().map(|p| p.1).fold(0.0, f64::max) * 1.15 + 1e-9;
        let pad = ((x1 - x0) * 0.1).max(0.5);
        let mut chart = ChartBuilder::on(&root)
            .margin(20)
            .build_cartesian_2d((x0 - pad)..(x1 + pad), 0.0..y1)
            .map_err(plot_err)?;
        for i in 0..=4 {
            let y = y1 * i as f64 / 4.0;
            chart
                .draw_series(LineSeries::new([(x0 - pad, y), (x1 + pad, y)], RGBColor(220, 220, 220)))
                .map_err(plot_err)?;
        }
        let series: Vec<(f64, f64)> = xs.iter().zip(points).map(|(&x, p)| (x, p.1)).collect();
        chart
            .draw_series(LineSeries::new(series.clone(), BLUE.stroke_width(2)))
            .map_err(plot_err)?;
        chart
            .draw_series(series.iter().map(|&p| Circle::new(p, 4, BLUE.filled())))
            .map_err(plot_err)?;
        root.present().map_err(plot_err)?;
    }
    write_rgb(h as usize, w as usize, &rgb, dst)?;
    Ok(())
}

fn nsweep_figure(csv: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let mut points: Vec<(f64, f64)> = read_summary(csv)?
        .into_iter()
        .filter_map(|(m, e)| Some((m.strip_prefix('n')?.parse().ok()?, e)))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dst = out.join("n_vs_epe.png");
    line_chart(&points, true, &dst)?;
    Ok(dst)
}

fn patch_figure(csv: &Path, out: &Path) -> Result<PathBuf, CliError> {
    let points: Vec<(f64, f64)> = read_summary(csv)?
        .into_iter()
        .filter_map(|(m, e)| match m.as_str() {
            "full" => Some((4.0, e)),
            "patch-8" => Some((8.0, e)),
            _ => None,
        })
        .collect();
    let dst = out.join("p_vs_epe.png");
    line_chart(&points, false, &dst)?;
    Ok(dst)
}

pub fn run(_global: &Global, args: PlotArgs) -> Result<(), CliError> {
    if args.flow.is_empty() && args.tracks.is_none() && args.nsweep.is_none() && args.ablation.is_none() {
        return Err(CliError::Usage("nothing to plot: pass --flow, --tracks, --nsweep or --ablation".into()));
    }
    let scale = args.scale.max(1);
    prepare_out_dir(&args.out, args.force)?;
    let mut written = Vec::new();
    for f in &args.flow {
        written.push(flow_figure(f, &args.out, scale)?);
    }
    if let (Some(t), Some(f)) = (&args.tracks, &args.frame) {
        written.push(track_figure(t, f, &args.out, scale)?);
    }
    if let Some(c) = &args.nsweep {
        written.push(nsweep_figure(c, &args.out)?);
    }
    if let Some(c) = &args.ablation {
        written.push(patch_figure(c, &args.out)?);
    }
    for p in &written {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}
