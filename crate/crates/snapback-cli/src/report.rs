//! The `report` command: figures and their underlying CSV tables, rendered
//! from artifacts already present in the run directory.

use std::path::Path;
use std::sync::OnceLock;

use anyhow::{anyhow, Context, Result};
use plotters::prelude::*;
use plotters::style::text_anchor::{HPos, Pos, VPos};

use snapback_core::features::{load_features, FeatureMatrix, FEATURE_NAMES};
use snapback_core::model::{fit_imputer, apply_imputer};

use crate::commands::{CmdError, CmdResult, TrainReport};
use crate::config::PipelineConfig;
use crate::rundir::RunDir;

const FONT_PATH: &str = "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf";

fn fonts_available() -> bool {
    static INIT: OnceLock<bool> = OnceLock::new();
    *INIT.get_or_init(|| match std::fs::read(FONT_PATH) {
        Ok(bytes) => plotters::style::register_font(
            "sans-serif",
            FontStyle::Normal,
            Box::leak(bytes.into_boxed_slice()),
        )
        .is_ok(),
        Err(_) => false,
    })
}

struct ScoreRow {
    label: u8,
    split: String,
    score: f64,
}

fn read_scores(path: &Path) -> Result<Vec<ScoreRow>> {
    let mut rdr = csv::Reader::from_path(path)
        .with_context(|| format!("cannot read {}", path.display()))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        out.push(ScoreRow {
            label: rec[1].parse()?,
            split: rec[2].to_string(),
            score: rec[3].parse()?,
        });
    }
    if out.is_empty() {
        return Err(anyhow!("{} holds no score rows", path.display()));
    }
    Ok(out)
}

/// ROC points for one split: (fpr, tpr), threshold sweep over all scores.
fn roc_points(rows: &[ScoreRow], split: &str) -> Vec<(f64, f64)> {
    let mut pairs: Vec<(f64, u8)> = rows
        .iter()
        .filter(|r| r.split == split)
        .map(|r| (r.score, r.label))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let pos = pairs.iter().filter(|p| p.1 == 1).count() as f64;
    let neg = pairs.len() as f64 - pos;
    let mut pts = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0f64, 0.0f64);
    let mut i = 0;
    while i < pairs.len() {
        let t = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == t {
            if pairs[i].1 == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        pts.push((fp / neg.max(1.0), tp / pos.max(1.0)));
    }
    pts
}

fn write_xy_csv(path: &Path, header: [&str; 2], pts: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for (x, y) in pts {
        w.write_record([x.to_string(), y.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn plot_roc(dir: &Path, cv: &[(f64, f64)], holdout: &[(f64, f64)]) -> Result<()> {
    let path = dir.join("roc.png");
    let root = BitMapBackend::new(&path, (640, 640)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("ROC", ("sans-serif", 24))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..1.0, 0.0..1.0)?;
    chart
        .configure_mesh()
        .x_desc("false positive rate")
        .y_desc("true positive rate")
        .draw()?;
    chart.draw_series(LineSeries::new(vec![(0.0, 0.0), (1.0, 1.0)], &BLACK.mix(0.3)))?;
    chart
        .draw_series(LineSeries::new(cv.to_vec(), &BLUE))?
        .label("cross-validation")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], BLUE));
    chart
        .draw_series(LineSeries::new(holdout.to_vec(), &RED))?
        .label("holdout")
        .legend(|(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], RED));
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

fn plot_reliability(dir: &Path, report: &TrainReport) -> Result<()> {
    let pts: Vec<(f64, f64)> = report
        .cv
        .reliability
        .iter()
        .filter_map(|b| Some((b.mean_predicted?, b.empirical_rate?)))
        .collect();
    write_xy_csv(&dir.join("reliability.csv"), ["mean_predicted", "empirical_rate"], &pts)?;
    let path = dir.join("reliability.png");
    let root = BitMapBackend::new(&path, (640, 640)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Reliability (cross-validation)", ("sans-serif", 24))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(48)
        .build_cartesian_2d(0.0..1.0, 0.0..1.0)?;
    chart
        .configure_mesh()
        .x_desc("mean predicted probability")
        .y_desc("empirical synthetic rate")
        .draw()?;
    chart.draw_series(LineSeries::new(vec![(0.0, 0.0), (1.0, 1.0)], &BLACK.mix(0.3)))?;
    chart.draw_series(LineSeries::new(pts.clone(), &BLUE))?;
    chart.draw_series(pts.iter().map(|&(x, y)| Circle::new((x, y), 4, BLUE.filled())))?;
    root.present()?;
    Ok(())
}

fn plot_confusion(dir: &Path, report: &TrainReport) -> Result<()> {
    let c = &report.cv.confusion;
    let mut w = csv::Writer::from_path(dir.join("confusion.csv"))?;
    w.write_record(["tp", "fp", "tn", "fn"])?;
    w.write_record([
        c.tp.to_string(),
        c.fp.to_string(),
        c.tn.to_string(),
        c.false_neg.to_string(),
    ])?;
    w.flush()?;

    let path = dir.join("confusion.png");
    let root = BitMapBackend::new(&path, (520, 520)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Confusion (cross-validation)", ("sans-serif", 22))
        .margin(18)
        .x_label_area_size(36)
        .y_label_area_size(36)
        .build_cartesian_2d(0i32..2, 0i32..2)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .x_desc("predicted (0 capture, 1 synthetic)")
        .y_desc("actual")
        .draw()?;
    // grid: (pred, actual) -> count
    let cells = [
        ((0, 0), c.tn),
        ((1, 0), c.fp),
        ((0, 1), c.false_neg),
        ((1, 1), c.tp),
    ];
    let max = cells.iter().map(|&(_, n)| n).max().unwrap_or(1).max(1) as f64;
    chart.draw_series(cells.iter().map(|&((px, py), n)| {
        let shade = (255.0 - 200.0 * (n as f64 / max)) as u8;
        Rectangle::new(
            [(px, py), (px + 1, py + 1)],
            RGBColor(shade, shade, 255).filled(),
        )
    }))?;
    let style = TextStyle::from(("sans-serif", 28))
        .pos(Pos::new(HPos::Center, VPos::Center))
        .color(&BLACK);
    chart.draw_series(cells.iter().map(|&((px, py), n)| {
        Text::new(
            n.to_string(),
            (px, py),
            style.clone(),
        )
    }))?;
    root.present()?;
    Ok(())
}

struct Trajectory {
    metric: &'static str,
    strength: f64,
    label: u8,
    mean: f64,
    std: f64,
}

fn trajectories(matrix: &FeatureMatrix) -> Vec<Trajectory> {
    let strengths = [0.15, 0.30, 0.60, 0.90];
    let mut out = Vec::new();
    for (mi, metric) in ["lpips", "ssim", "psnr"].into_iter().enumerate() {
        for (si, &s) in strengths.iter().enumerate() {
            let col = si * 3 + mi;
            for label in 0..2u8 {
                let vals: Vec<f64> = matrix
                    .rows
                    .iter()
                    .filter(|r| r.label == label)
                    .filter_map(|r| r.features.values[col])
                    .collect();
                if vals.is_empty() {
                    continue;
                }
                let n = vals.len() as f64;
                let mean = vals.iter().sum::<f64>() / n;
                let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                out.push(Trajectory {
                    metric,
                    strength: s,
                    label,
                    mean,
                    std: var.sqrt(),
                });
            }
        }
    }
    out
}

fn plot_trajectories(dir: &Path, rows: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_path(dir.join("trajectories.csv"))?;
    w.write_record(["metric", "strength", "label", "mean", "std"])?;
    for t in rows {
        w.write_record([
            t.metric.to_string(),
            t.strength.to_string(),
            t.label.to_string(),
            t.mean.to_string(),
            t.std.to_string(),
        ])?;
    }
    w.flush()?;

    let path = dir.join("trajectories.png");
    let root = BitMapBackend::new(&path, (1280, 440)).into_drawing_area();
    root.fill(&WHITE)?;
    let panels = root.split_evenly((1, 3));
    for (panel, metric) in panels.iter().zip(["lpips", "ssim", "psnr"]) {
        let pts: Vec<&Trajectory> = rows.iter().filter(|t| t.metric == metric).collect();
        if pts.is_empty() {
            continue;
        }
        let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t.mean - t.std), hi.max(t.mean + t.std))
        });
        let pad = (hi - lo).max(1e-6) * 0.1;
        let mut chart = ChartBuilder::on(panel)
            .caption(metric, ("sans-serif", 20))
            .margin(10)
            .x_label_area_size(34)
            .y_label_area_size(50)
            .build_cartesian_2d(0.0..1.0, (lo - pad)..(hi + pad))?;
        chart.configure_mesh().x_desc("strength").draw()?;
        for label in 0..2u8 {
            let color = if label == 0 { BLUE } else { RED };
            let series: Vec<(f64, f64)> = pts
                .iter()
                .filter(|t| t.label == label)
                .map(|t| (t.strength, t.mean))
                .collect();
            let band: Vec<(f64, f64, f64)> = pts
                .iter()
                .filter(|t| t.label == label)
                .map(|t| (t.strength, t.mean - t.std, t.mean + t.std))
                .collect();
            let mut poly: Vec<(f64, f64)> = band.iter().map(|&(x, y, _)| (x, y)).collect();
            poly.extend(band.iter().rev().map(|&(x, _, y)| (x, y)));
            chart.draw_series(std::iter::once(Polygon::new(poly, color.mix(0.15))))?;
            chart
                .draw_series(LineSeries::new(series.clone(), &color))?
                .label(if label == 0 { "capture" } else { "synthetic" })
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 16, y)], color));
            chart.draw_series(series.iter().map(|&(x, y)| Circle::new((x, y), 3, color.filled())))?;
        }
        chart
            .configure_series_labels()
            .border_style(BLACK)
            .background_style(WHITE.mix(0.8))
            .draw()?;
    }
    root.present()?;
    Ok(())
}

fn plot_scatter(dir: &Path, matrix: &FeatureMatrix) -> Result<()> {
    let pts: Vec<(u8, f64, f64)> = matrix
        .rows
        .iter()
        .filter_map(|r| Some((r.label, r.features.values[0]?, r.features.values[6]?)))
        .collect();
    let mut w = csv::Writer::from_path(dir.join("scatter.csv"))?;
    w.write_record(["label", "lpips_0.15", "lpips_0.60"])?;
    for &(l, a, b) in &pts {
        w.write_record([l.to_string(), a.to_string(), b.to_string()])?;
    }
    w.flush()?;

    let (xmax, ymax) = pts
        .iter()
        .fold((1e-6f64, 1e-6f64), |(xm, ym), &(_, x, y)| (xm.max(x), ym.max(y)));
    let path = dir.join("scatter.png");
    let root = BitMapBackend::new(&path, (640, 640)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Early vs mid-strength perceptual distance", ("sans-serif", 22))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(52)
        .build_cartesian_2d(0.0..xmax * 1.05, 0.0..ymax * 1.05)?;
    chart
        .configure_mesh()
        .x_desc("lpips at strength 0.15")
        .y_desc("lpips at strength 0.60")
        .draw()?;
    for label in 0..2u8 {
        let color = if label == 0 { BLUE } else { RED };
        chart
            .draw_series(
                pts.iter()
                    .filter(|p| p.0 == label)
                    .map(|&(_, x, y)| Circle::new((x, y), 3, color.mix(0.6).filled())),
            )?
            .label(if label == 0 { "capture" } else { "synthetic" })
            .legend(move |(x, y)| Circle::new((x + 8, y), 4, color.filled()));
    }
    chart
        .configure_series_labels()
        .border_style(BLACK)
        .background_style(WHITE.mix(0.8))
        .draw()?;
    root.present()?;
    Ok(())
}

fn correlation_matrix(matrix: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
    let names: Vec<String> = FEATURE_NAMES.iter().map(|s| s.to_string()).collect();
    let x: Vec<Vec<Option<f64>>> = matrix
        .rows
        .iter()
        .map(|r| r.features.values.to_vec())
        .collect();
    let medians = fit_imputer(&x, &names)?;
    let filled = apply_imputer(&medians, &x);
    let d = names.len();
    let n = filled.len() as f64;
    let means: Vec<f64> = (0..d)
        .map(|j| filled.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect();
    let stds: Vec<f64> = (0..d)
        .map(|j| {
            (filled.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n).sqrt()
        })
        .collect();
    let mut corr = vec![vec![0.0f64; d]; d];
    for i in 0..d {
        for j in 0..d {
            if stds[i] == 0.0 || stds[j] == 0.0 {
                corr[i][j] = if i == j { 1.0 } else { 0.0 };
                continue;
            }
            let cov = filled
                .iter()
                .map(|r| (r[i] - means[i]) * (r[j] - means[j]))
                .sum::<f64>()
                / n;
            corr[i][j] = cov / (stds[i] * stds[j]);
        }
    }
    Ok(corr)
}

fn plot_correlation(dir: &Path, corr: &[Vec<f64>]) -> Result<()> {
    let d = corr.len();
    let mut w = csv::Writer::from_path(dir.join("correlation.csv"))?;
    let mut header = vec!["feature".to_string()];
    header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    for (i, row) in corr.iter().enumerate() {
        let mut rec = vec![FEATURE_NAMES[i].to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let path = dir.join("correlation.png");
    let root = BitMapBackend::new(&path, (820, 760)).into_drawing_area();
    root.fill(&WHITE)?;
    let mut chart = ChartBuilder::on(&root)
        .caption("Feature correlation", ("sans-serif", 22))
        .margin(14)
        .x_label_area_size(110)
        .y_label_area_size(110)
        .build_cartesian_2d(0i32..d as i32, 0i32..d as i32)?;
    chart
        .configure_mesh()
        .disable_mesh()
        .x_labels(d)
        .y_labels(d)
        .x_label_formatter(&|v| {
            FEATURE_NAMES
                .get(*v as usize)
                .map(|s| s.to_string())
                .unwrap_or_default()
        })
        .y_label_formatter(&|v| {
            FEATURE_NAMES
                .get(*v as usize)
                .map(|s| s.to_string())
                .unwrap_or_default()
        })
        .x_label_style(TextStyle::from(("sans-serif", 11)).transform(FontTransform::Rotate90))
        .y_label_style(("sans-serif", 11))
        .draw()?;
    chart.draw_series((0..d).flat_map(|i| {
        let corr = &corr[i];
        (0..d).map(move |j| {
            let v = corr[j].clamp(-1.0, 1.0);
            // blue for negative, red for positive
            let color = if v >= 0.0 {
                RGBColor(255, (255.0 * (1.0 - v)) as u8, (255.0 * (1.0 - v)) as u8)
            } else {
                RGBColor((255.0 * (1.0 + v)) as u8, (255.0 * (1.0 + v)) as u8, 255)
            };
            Rectangle::new([(j as i32, i as i32), (j as i32 + 1, i as i32 + 1)], color.filled())
        })
    }))?;
    root.present()?;
    Ok(())
}

fn try_plot(name: &str, result: Result<()>) {
    if let Err(e) = result {
        eprintln!("warning: could not render {name}: {e}");
    }
}

pub fn cmd_report(cfg: &PipelineConfig) -> CmdResult {
    let err3 = |e: anyhow::Error| CmdError { code: 3, err: e };
    let err1 = |e: anyhow::Error| CmdError { code: 1, err: e };
    let run = RunDir::new(cfg.run_dir()).map_err(err1)?;

    let matrix = load_features(&run.features_csv())
        .map_err(|e| err3(anyhow!("{}: {e}", run.features_csv().display())))?;
    let report_text = std::fs::read_to_string(run.report_json())
        .map_err(|e| err3(anyhow!("{}: {e} (run `train` first)", run.report_json().display())))?;
    let report: TrainReport =
        serde_json::from_str(&report_text).map_err(|e| err3(anyhow!("report.json: {e}")))?;
    let scores = read_scores(&run.scores_csv()).map_err(err3)?;

    let dir = run.plots_dir().map_err(err1)?;
    if !fonts_available() {
        eprintln!("warning: no usable font found at {FONT_PATH}; figure text may be missing");
    }

    let cv_roc = roc_points(&scores, "cv");
    let holdout_roc = roc_points(&scores, "holdout");
    write_xy_csv(&dir.join("roc.csv"), ["fpr", "tpr"], &cv_roc).map_err(err1)?;
    try_plot("roc.png", plot_roc(&dir, &cv_roc, &holdout_roc));
    try_plot("reliability.png", plot_reliability(&dir, &report));
    try_plot("confusion.png", plot_confusion(&dir, &report));
    let traj = trajectories(&matrix);
    try_plot("trajectories.png", plot_trajectories(&dir, &traj));
    try_plot("scatter.png", plot_scatter(&dir, &matrix));
    let corr = correlation_matrix(&matrix).map_err(err1)?;
    try_plot("correlation.png", plot_correlation(&dir, &corr));

    println!("report written to {}", dir.display());
    Ok(())
}
