//! Restricted augmentation set and positive-pair view construction.
//!
//! The augmentation pipeline is horizontal flip, small rotation (bilinear,
//! zero-padded borders), optional area-scale crop at fixed aspect ratio, and
//! bilinear resize to the output size. Color-jitter-style augmentations are
//! deliberately absent.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cohort::ImageRecord;
use crate::error::{Error, Result};
use crate::pixels::Pixels;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    pub horizontal_flip_prob: f64,
    /// Rotation angle range in degrees, drawn uniformly.
    pub rotation_range_degrees: (f64, f64),
    /// Optional random-resized-crop area scale range, aspect ratio fixed.
    #[serde(default)]
    pub crop_scale_range: Option<(f64, f64)>,
    pub output_size: (usize, usize),
}

impl AugmentationSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.horizontal_flip_prob) {
            return Err(Error::config("horizontal_flip_prob", "must be in [0, 1]"));
        }
        let (lo, hi) = self.rotation_range_degrees;
        if lo > hi || lo < -180.0 || hi > 180.0 {
            return Err(Error::config(
                "rotation_range_degrees",
                "must satisfy -180 <= lo <= hi <= 180",
            ));
        }
        if let Some((lo, hi)) = self.crop_scale_range {
            if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
                return Err(Error::config(
                    "crop_scale_range",
                    "must satisfy 0 < lo <= hi <= 1",
                ));
            }
        }
        let (h, w) = self.output_size;
        if h == 0 || w == 0 {
            return Err(Error::config("output_size", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CropParams {
    pub scale: f64,
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

/// The transform parameters actually drawn for a view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_image_id: u64,
    pub flipped: bool,
    pub rotation_degrees: f64,
    pub crop: Option<CropParams>,
}

/// An augmented view: transformed pixels plus how they were produced.
#[derive(Debug, Clone, PartialEq)]
pub struct View {
    pub pixels: Pixels,
    pub provenance: Provenance,
}

fn hflip(src: &Pixels) -> Pixels {
    let (h, w) = (src.h(), src.w());
    let mut out = Pixels::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            out.set(r, c, src.get(r, w - 1 - c));
        }
    }
    out
}

/// Bilinear sample with zero padding outside the frame.
fn sample_zero_pad(src: &Pixels, y: f64, x: f64) -> f64 {
    let y0 = y.floor();
    let x0 = x.floor();
    let wy = y - y0;
    let wx = x - x0;
    let mut acc = 0.0;
    for (dy, fy) in [(0i64, 1.0 - wy), (1, wy)] {
        for (dx, fx) in [(0i64, 1.0 - wx), (1, wx)] {
            let r = y0 as i64 + dy;
            let c = x0 as i64 + dx;
            if r >= 0 && c >= 0 && (r as usize) < src.h() && (c as usize) < src.w() {
                acc += fy * fx * src.get(r as usize, c as usize);
            }
        }
    }
    acc
}

/// Rotation about the image center, bilinear resampling, zero padding.
pub fn rotate_bilinear(src: &Pixels, degrees: f64) -> Pixels {
    let (h, w) = (src.h(), src.w());
    let theta = degrees.to_radians();
    let (sin, cos) = theta.sin_cos();
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = Pixels::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let dy = r as f64 - cy;
            let dx = c as f64 - cx;
            let sy = cy + dy * cos - dx * sin;
            let sx = cx + dy * sin + dx * cos;
            out.set(r, c, sample_zero_pad(src, sy, sx));
        }
    }
    out
}

fn crop(src: &Pixels, params: &CropParams) -> Pixels {
    let mut out = Pixels::zeros(params.height, params.width);
    for r in 0..params.height {
        for c in 0..params.width {
            out.set(r, c, src.get(params.row + r, params.col + c));
        }
    }
    out
}

/// Bilinear resize with edge clamping. Identity when sizes already match.
pub fn resize_bilinear(src: &Pixels, out_h: usize, out_w: usize) -> Pixels {
    if src.h() == out_h && src.w() == out_w {
        return src.clone();
    }
    let mut out = Pixels::zeros(out_h, out_w);
    let sy = src.h() as f64 / out_h as f64;
    let sx = src.w() as f64 / out_w as f64;
    for r in 0..out_h {
        for c in 0..out_w {
            let y = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, src.h() as f64 - 1.0);
            let x = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, src.w() as f64 - 1.0);
            out.set(r, c, sample_zero_pad(src, y, x));
        }
    }
    out
}

/// Applies the augmentation pipeline to one record, drawing all parameters
/// from `rng`.
pub fn apply(spec: &AugmentationSpec, record: &ImageRecord, rng: &mut ChaCha8Rng) -> Result<View> {
    spec.validate()?;
    let source = record
        .pixels
        .as_ref()
        .ok_or(Error::MissingPixels(record.image_id))?;

    let flipped = rng.random::<f64>() < spec.horizontal_flip_prob;
    let (lo, hi) = spec.rotation_range_degrees;
    let angle = rng.random_range(lo..=hi);

    let mut pixels = if flipped { hflip(source) } else { source.clone() };
    if angle != 0.0 {
        pixels = rotate_bilinear(&pixels, angle);
    }
    let crop_params = match spec.crop_scale_range {
        Some((s_lo, s_hi)) => {
            let scale = rng.random_range(s_lo..=s_hi);
            let side = scale.sqrt();
            let height = ((pixels.h() as f64 * side).round() as usize).clamp(1, pixels.h());
            let width = ((pixels.w() as f64 * side).round() as usize).clamp(1, pixels.w());
            let row = rng.random_range(0..=pixels.h() - height);
            let col = rng.random_range(0..=pixels.w() - width);
            let params = CropParams {
                scale,
                row,
                col,
                height,
                width,
            };
            pixels = crop(&pixels, &params);
            Some(params)
        }
        None => None,
    };
    let (out_h, out_w) = spec.output_size;
    let mut pixels = resize_bilinear(&pixels, out_h, out_w);
    pixels.clamp01();
    Ok(View {
        pixels,
        provenance: Provenance {
            source_image_id: record.image_id,
            flipped,
            rotation_degrees: angle,
            crop: crop_params,
        },
    })
}

/// Independent augmentation draws for the query and its selected partner.
/// Returns the ordered pair (view of query, view of partner).
pub fn make_positive_pair(
    query: &ImageRecord,
    partner: &ImageRecord,
    spec: &AugmentationSpec,
    rng: &mut ChaCha8Rng,
) -> Result<(View, View)> {
    let query_view = apply(spec, query, rng)?;
    let partner_view = apply(spec, partner, rng)?;
    Ok((query_view, partner_view))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{signal_regions, Laterality};
    use crate::rng::stream;

    fn record_with(pixels: Pixels) -> ImageRecord {
        ImageRecord {
            image_id: 42,
            patient_id: 1,
            study_id: 1,
            laterality: Laterality::Frontal,
            labels: vec![0],
            pixels: Some(pixels),
        }
    }

    fn identity_spec(h: usize, w: usize) -> AugmentationSpec {
        AugmentationSpec {
            horizontal_flip_prob: 0.0,
            rotation_range_degrees: (0.0, 0.0),
            crop_scale_range: None,
            output_size: (h, w),
        }
    }

    #[test]
    fn flip_prob_one_reverses_columns() {
        let mut spec = identity_spec(2, 2);
        spec.horizontal_flip_prob = 1.0;
        let record = record_with(
            Pixels::from_rows(&[vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap(),
        );
        let view = apply(&spec, &record, &mut stream(0, &[1])).unwrap();
        let expected = Pixels::from_rows(&[vec![0.2, 0.1], vec![0.4, 0.3]]).unwrap();
        assert_eq!(view.pixels, expected);
        assert!(view.provenance.flipped);
    }

    #[test]
    fn identity_spec_is_identity() {
        let pixels = Pixels::from_rows(&[
            vec![0.1, 0.2, 0.3],
            vec![0.4, 0.5, 0.6],
            vec![0.7, 0.8, 0.9],
        ])
        .unwrap();
        let record = record_with(pixels.clone());
        let view = apply(&identity_spec(3, 3), &record, &mut stream(0, &[2])).unwrap();
        assert_eq!(view.pixels, pixels);
        assert_eq!(view.provenance.rotation_degrees, 0.0);
    }

    #[test]
    fn full_frame_crop_equals_resize_only() {
        let mut pixels = Pixels::zeros(6, 6);
        for r in 0..6 {
            for c in 0..6 {
                pixels.set(r, c, (r * 6 + c) as f64 / 40.0);
            }
        }
        let record = record_with(pixels);
        let mut with_crop = identity_spec(4, 4);
        with_crop.crop_scale_range = Some((1.0, 1.0));
        let without_crop = identity_spec(4, 4);
        let a = apply(&with_crop, &record, &mut stream(3, &[1])).unwrap();
        let b = apply(&without_crop, &record, &mut stream(3, &[1])).unwrap();
        assert_eq!(a.pixels, b.pixels);
    }

    #[test]
    fn hflip_reverses_each_row() {
        let grid = Pixels::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let expected = Pixels::from_rows(&[vec![2.0, 1.0], vec![4.0, 3.0]]).unwrap();
        assert_eq!(hflip(&grid), expected);
    }

    #[test]
    fn double_flip_is_identity() {
        let mut pixels = Pixels::zeros(5, 7);
        for (i, v) in pixels.as_mut_slice().iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin().abs();
        }
        assert_eq!(hflip(&hflip(&pixels)), pixels);
    }

    fn gaussian_bump(n: usize) -> Pixels {
        let mut pixels = Pixels::zeros(n, n);
        let c = (n as f64 - 1.0) / 2.0;
        let sigma = n as f64 / 6.0;
        for r in 0..n {
            for col in 0..n {
                let d2 = (r as f64 - c).powi(2) + (col as f64 - c).powi(2);
                pixels.set(r, col, 0.9 * (-d2 / (2.0 * sigma * sigma)).exp());
            }
        }
        pixels
    }

    #[test]
    fn rotation_round_trip_within_interpolation_tolerance() {
        let pixels = gaussian_bump(32);
        let back = rotate_bilinear(&rotate_bilinear(&pixels, 10.0), -10.0);
        let max_err = pixels
            .as_slice()
            .iter()
            .zip(back.as_slice())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err <= 0.05, "max abs error {max_err} > 0.05");
    }

    #[test]
    fn min_scale_crop_always_contains_signal_region() {
        // exhaustive over crop offsets at the minimum scale 0.95
        let (h, w) = (32usize, 32usize);
        let regions = signal_regions(h, w, 1).unwrap();
        let region = regions[0];
        let side = 0.95f64.sqrt();
        let crop_h = ((h as f64 * side).round() as usize).clamp(1, h);
        let crop_w = ((w as f64 * side).round() as usize).clamp(1, w);
        for row in 0..=h - crop_h {
            for col in 0..=w - crop_w {
                let contains = row <= region.row
                    && col <= region.col
                    && region.row + region.side <= row + crop_h
                    && region.col + region.side <= col + crop_w;
                assert!(
                    contains,
                    "crop at ({row},{col}) size {crop_h}x{crop_w} cuts the signal region"
                );
            }
        }
    }

    #[test]
    fn positive_pair_bookkeeping_and_determinism() {
        let pixels = gaussian_bump(8);
        let query = record_with(pixels.clone());
        let mut partner = record_with(pixels);
        partner.image_id = 43;
        let spec = AugmentationSpec {
            horizontal_flip_prob: 0.5,
            rotation_range_degrees: (-10.0, 10.0),
            crop_scale_range: Some((0.95, 1.0)),
            output_size: (8, 8),
        };

        let (v1, v2) = make_positive_pair(&query, &partner, &spec, &mut stream(9, &[7])).unwrap();
        assert_eq!(v1.provenance.source_image_id, 42);
        assert_eq!(v2.provenance.source_image_id, 43);

        let (w1, w2) = make_positive_pair(&query, &partner, &spec, &mut stream(9, &[7])).unwrap();
        assert_eq!(v1, w1);
        assert_eq!(v2, w2);

        // partner == query with identity spec yields two identical views
        let id_spec = identity_spec(8, 8);
        let (a, b) = make_positive_pair(&query, &query, &id_spec, &mut stream(9, &[8])).unwrap();
        assert_eq!(a.pixels, b.pixels);
        assert_eq!(a.provenance.source_image_id, b.provenance.source_image_id);
    }

    #[test]
    fn missing_pixels_is_error() {
        let mut record = record_with(Pixels::zeros(4, 4));
        record.pixels = None;
        match apply(&identity_spec(4, 4), &record, &mut stream(0, &[0])) {
            Err(Error::MissingPixels(id)) => assert_eq!(id, 42),
            other => panic!("expected missing pixels error, got {other:?}"),
        }
    }
}
