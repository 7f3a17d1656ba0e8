//! The 15-dimensional reconstruction-dynamics feature vector, the pixel
//! baseline featurizer, and feature CSV persistence.
//!
//! Column order is fixed: the 12 point-wise values grouped per strength
//! (lpips, ssim, psnr at 0.15, 0.30, 0.60, 0.90), then auc_lpips, delta_lp,
//! knee_step.

use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{MetricCurve, DEFAULT_SSIM_TAU};
use crate::raster::RasterImage;
use crate::reconstruct::DEFAULT_STRENGTHS;

pub const FEATURE_COUNT: usize = 15;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "lpips_0.15",
    "ssim_0.15",
    "psnr_0.15",
    "lpips_0.30",
    "ssim_0.30",
    "psnr_0.30",
    "lpips_0.60",
    "ssim_0.60",
    "psnr_0.60",
    "lpips_0.90",
    "ssim_0.90",
    "psnr_0.90",
    "auc_lpips",
    "delta_lp",
    "knee_step",
];

/// Sentinel knee value when SSIM never drops below tau across the schedule.
pub const KNEE_SENTINEL: f64 = 1.0;

/// 15 named features; `None` marks a missing value awaiting imputation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: [Option<f64>; FEATURE_COUNT],
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        FEATURE_NAMES
            .iter()
            .position(|&n| n == name)
            .and_then(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub id: String,
    pub label: u8,
    pub features: FeatureVector,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureMatrix {
    pub rows: Vec<FeatureRow>,
}

/// Trapezoidal area under the LPIPS-vs-strength curve, with the true
/// strengths as abscissae. Missing interior points are skipped (the
/// trapezoid spans the gap). Needs at least two valid points.
pub fn auc_lpips(curve: &MetricCurve) -> Option<f64> {
    let pts: Vec<(f64, f64)> = curve.valid_points().map(|(s, t)| (s, t.lpips)).collect();
    if pts.len() < 2 {
        return None;
    }
    let mut area = 0.0;
    for w in pts.windows(2) {
        area += 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0);
    }
    Some(area)
}

/// LPIPS(0.60) - LPIPS(0.15): positive when degradation grows with strength.
pub fn delta_lp(curve: &MetricCurve) -> Option<f64> {
    let lo = curve.triple_at(0.15)?.lpips;
    let mid = curve.triple_at(0.60)?.lpips;
    Some(mid - lo)
}

/// Smallest schedule strength whose SSIM is below `tau`; sentinel 1.0 when
/// the curve never crosses. Missing points are skipped; all-missing is a
/// missing value.
pub fn knee_step(curve: &MetricCurve, tau: f64) -> Option<f64> {
    let mut any_valid = false;
    for (s, t) in curve.valid_points() {
        any_valid = true;
        if t.ssim < tau {
            return Some(s);
        }
    }
    any_valid.then_some(KNEE_SENTINEL)
}

/// Assemble the full 15-feature vector from a default-schedule curve.
pub fn featurize(curve: &MetricCurve, tau: f64) -> FeatureVector {
    let mut values = [None; FEATURE_COUNT];
    for (i, &s) in DEFAULT_STRENGTHS.iter().enumerate() {
        if let Some(t) = curve.triple_at(s) {
            values[3 * i] = Some(t.lpips);
            values[3 * i + 1] = Some(t.ssim);
            values[3 * i + 2] = Some(t.psnr);
        }
    }
    values[12] = auc_lpips(curve);
    values[13] = delta_lp(curve);
    values[14] = knee_step(curve, tau);
    FeatureVector { values }
}

pub fn featurize_default(curve: &MetricCurve) -> FeatureVector {
    featurize(curve, DEFAULT_SSIM_TAU)
}

/// Pixel-level baseline: bilinear downscale to 32x32 RGB, flattened
/// row-major channel-last to 3072 values in [0,1].
pub fn pixel_baseline_features(image: &RasterImage) -> Vec<f64> {
    image
        .resize_bilinear(32, 32)
        .data()
        .iter()
        .map(|&v| f64::from(v))
        .collect()
}

fn csv_header() -> Vec<String> {
    let mut h = vec!["id".to_string(), "label".to_string()];
    h.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
    h
}

/// Write the feature matrix as CSV. Missing values are empty cells; floats
/// use the shortest round-trip decimal form.
pub fn save_features(matrix: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(csv_header())?;
    for row in &matrix.rows {
        let mut rec = vec![row.id.clone(), row.label.to_string()];
        for v in &row.features.values {
            rec.push(v.map(|x| format!("{x}")).unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Exact inverse of [`save_features`]. Any header deviation (missing,
/// reordered, or unknown column) is a schema error naming the column.
pub fn load_features(path: &Path) -> Result<FeatureMatrix> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let expected = csv_header();
    {
        let headers = r.headers()?;
        for (i, want) in expected.iter().enumerate() {
            match headers.get(i) {
                Some(got) if got == want => {}
                Some(got) => {
                    return Err(Error::SchemaMismatch(format!(
                        "column {i}: expected `{want}`, found `{got}`"
                    )))
                }
                None => {
                    return Err(Error::SchemaMismatch(format!(
                        "missing column `{want}`"
                    )))
                }
            }
        }
        if headers.len() > expected.len() {
            return Err(Error::SchemaMismatch(format!(
                "unknown extra column `{}`",
                headers.get(expected.len()).unwrap_or("")
            )));
        }
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let id = rec
            .get(0)
            .ok_or_else(|| Error::SchemaMismatch("row missing id".into()))?
            .to_string();
        let label: u8 = match rec.get(1) {
            Some("0") => 0,
            Some("1") => 1,
            other => {
                return Err(Error::SchemaMismatch(format!(
                    "row `{id}`: label {:?} not in {{0,1}}",
                    other.unwrap_or("")
                )))
            }
        };
        let mut values = [None; FEATURE_COUNT];
        for (i, slot) in values.iter_mut().enumerate() {
            let cell = rec.get(2 + i).unwrap_or("");
            if !cell.is_empty() {
                *slot = Some(cell.parse::<f64>().map_err(|_| {
                    Error::SchemaMismatch(format!(
                        "row `{id}`, column `{}`: cannot parse `{cell}`",
                        FEATURE_NAMES[i]
                    ))
                })?);
            }
        }
        rows.push(FeatureRow {
            id,
            label,
            features: FeatureVector { values },
        });
    }
    Ok(FeatureMatrix { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::MetricTriple;
    use proptest::prelude::*;

    fn curve_from(lpips: [f64; 4], ssim: [f64; 4]) -> MetricCurve {
        MetricCurve {
            source_id: "t".into(),
            label: None,
            points: DEFAULT_STRENGTHS
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    (
                        s,
                        Some(MetricTriple {
                            lpips: lpips[i],
                            ssim: ssim[i],
                            psnr: 30.0,
                        }),
                    )
                })
                .collect(),
        }
    }

    fn drop_point(curve: &mut MetricCurve, strength: f64) {
        for (s, t) in &mut curve.points {
            if *s == strength {
                *t = None;
            }
        }
    }

    #[test]
    fn auc_hand_computed_case() {
        let c = curve_from([0.1, 0.2, 0.4, 0.5], [1.0; 4]);
        assert!((auc_lpips(&c).unwrap() - 0.2475).abs() < 1e-9);
    }

    #[test]
    fn auc_constant_curve() {
        for &k in &[0.0, 0.5, 1.3] {
            let c = curve_from([k; 4], [1.0; 4]);
            assert!((auc_lpips(&c).unwrap() - 0.75 * k).abs() < 1e-9);
        }
    }

    #[test]
    fn auc_skips_missing_interior() {
        let mut c = curve_from([0.1, 0.2, 0.4, 0.5], [1.0; 4]);
        drop_point(&mut c, 0.30);
        // trapezoids: (0.15..0.60) over lpips 0.1->0.4, (0.60..0.90) 0.4->0.5
        let expected = 0.5 * (0.1 + 0.4) * 0.45 + 0.5 * (0.4 + 0.5) * 0.30;
        assert!((auc_lpips(&c).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn auc_single_point_is_missing() {
        let mut c = curve_from([0.1, 0.2, 0.4, 0.5], [1.0; 4]);
        drop_point(&mut c, 0.15);
        drop_point(&mut c, 0.30);
        drop_point(&mut c, 0.60);
        assert!(auc_lpips(&c).is_none());
    }

    #[test]
    fn delta_lp_cases() {
        let c = curve_from([0.1, 0.2, 0.4, 0.5], [1.0; 4]);
        assert!((delta_lp(&c).unwrap() - 0.3).abs() < 1e-12);
        let flat = curve_from([0.2; 4], [1.0; 4]);
        assert_eq!(delta_lp(&flat).unwrap(), 0.0);
        let mut missing = curve_from([0.1, 0.2, 0.4, 0.5], [1.0; 4]);
        drop_point(&mut missing, 0.15);
        assert!(delta_lp(&missing).is_none());
    }

    #[test]
    fn knee_cases() {
        let c = curve_from([0.0; 4], [0.95, 0.85, 0.70, 0.50]);
        assert_eq!(knee_step(&c, 0.80).unwrap(), 0.60);
        let never = curve_from([0.0; 4], [0.95, 0.92, 0.90, 0.88]);
        assert_eq!(knee_step(&never, 0.80).unwrap(), KNEE_SENTINEL);
        let first = curve_from([0.0; 4], [0.70, 0.60, 0.50, 0.40]);
        assert_eq!(knee_step(&first, 0.80).unwrap(), 0.15);
    }

    #[test]
    fn knee_all_missing_is_missing() {
        let mut c = curve_from([0.0; 4], [0.9; 4]);
        for &s in &DEFAULT_STRENGTHS {
            drop_point(&mut c, s);
        }
        assert!(knee_step(&c, 0.8).is_none());
    }

    #[test]
    fn featurize_identity_reconstructions() {
        let c = curve_from([0.0; 4], [1.0; 4]);
        let f = featurize_default(&c);
        assert!(f.values.iter().all(|v| v.is_some()));
        assert_eq!(f.get("auc_lpips").unwrap(), 0.0);
        assert_eq!(f.get("delta_lp").unwrap(), 0.0);
        assert_eq!(f.get("knee_step").unwrap(), KNEE_SENTINEL);
    }

    #[test]
    fn featurize_missing_strength_propagates() {
        let mut c = curve_from([0.1, 0.2, 0.4, 0.5], [0.9; 4]);
        drop_point(&mut c, 0.30);
        let f = featurize_default(&c);
        assert!(f.get("lpips_0.30").is_none());
        assert!(f.get("ssim_0.30").is_none());
        assert!(f.get("psnr_0.30").is_none());
        assert!(f.get("auc_lpips").is_some());
        assert_eq!(f.values.iter().filter(|v| v.is_none()).count(), 3);
    }

    #[test]
    fn pixel_baseline_shape_and_constants() {
        let img = RasterImage::filled(512, 512, 0.5);
        let v = pixel_baseline_features(&img);
        assert_eq!(v.len(), 3072);
        assert!(v.iter().all(|&x| (x - 0.5).abs() < 1e-6));
        let a = crate::synth::gen_image(1);
        let b = crate::synth::gen_image(2);
        assert_eq!(pixel_baseline_features(&a), pixel_baseline_features(&a));
        assert_ne!(pixel_baseline_features(&a), pixel_baseline_features(&b));
    }

    #[test]
    fn save_load_roundtrip_with_missing() {
        let mut values = [Some(0.5); FEATURE_COUNT];
        values[3] = None;
        values[14] = Some(KNEE_SENTINEL);
        let matrix = FeatureMatrix {
            rows: vec![
                FeatureRow {
                    id: "a".into(),
                    label: 0,
                    features: FeatureVector { values },
                },
                FeatureRow {
                    id: "b".into(),
                    label: 1,
                    features: FeatureVector {
                        values: [Some(0.123456789012345); FEATURE_COUNT],
                    },
                },
            ],
        };
        let f = tempfile::NamedTempFile::new().unwrap();
        save_features(&matrix, f.path()).unwrap();
        let back = load_features(f.path()).unwrap();
        assert_eq!(matrix, back);
    }

    #[test]
    fn load_rejects_unknown_column() {
        let f = tempfile::NamedTempFile::new().unwrap();
        let mut header = vec!["id".to_string(), "label".to_string()];
        header.extend(FEATURE_NAMES.iter().map(|s| s.to_string()));
        header.push("extra".into());
        std::fs::write(f.path(), format!("{}\n", header.join(","))).unwrap();
        match load_features(f.path()) {
            Err(Error::SchemaMismatch(msg)) => assert!(msg.contains("extra")),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn auc_is_linear_in_scale(
            lpips in proptest::array::uniform4(0.0f64..2.0),
            k in 0.0f64..5.0,
        ) {
            let base = curve_from(lpips, [1.0; 4]);
            let scaled = curve_from(
                [lpips[0] * k, lpips[1] * k, lpips[2] * k, lpips[3] * k],
                [1.0; 4],
            );
            let a = auc_lpips(&base).unwrap();
            let b = auc_lpips(&scaled).unwrap();
            prop_assert!((b - k * a).abs() < 1e-9 * (1.0 + a.abs() * k));
        }

        #[test]
        fn knee_monotone_in_tau(
            ssim in proptest::array::uniform4(0.0f64..1.0),
            tau1 in 0.0f64..1.0,
            tau2 in 0.0f64..1.0,
        ) {
            let (lo, hi) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
            let c = curve_from([0.0; 4], ssim);
            let k_lo = knee_step(&c, lo).unwrap();
            let k_hi = knee_step(&c, hi).unwrap();
            prop_assert!(k_lo >= k_hi);
        }

        #[test]
        fn featurize_is_pure(
            lpips in proptest::array::uniform4(0.0f64..1.0),
            ssim in proptest::array::uniform4(0.0f64..1.0),
        ) {
            let c = curve_from(lpips, ssim);
            prop_assert_eq!(featurize_default(&c), featurize_default(&c));
        }
    }
}
