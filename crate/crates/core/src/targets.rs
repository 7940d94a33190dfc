//! Dense training targets derived from annotated gaze points.

use crate::error::{ensure, Result};
use crate::geometry::{BBox, Point};
use crate::metrics::gaze::cell_of;

/// Peak-normalized Gaussian centered on the grid cell containing `point`,
/// row-major `height x width`.
pub fn synth_gt_heatmap(point: &Point, height: usize, width: usize, sigma: f64) -> Result<Vec<f64>> {
    ensure!(point.is_finite() && point.in_unit_square(), "gaze point ({}, {}) outside the unit square", point.x, point.y);
    ensure!(height > 0 && width > 0, "empty heatmap");
    ensure!(sigma > 0.0, "sigma must be positive");
    let (r0, c0) = cell_of(point, height, width);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut out = Vec::with_capacity(height * width);
    for r in 0..height {
        for c in 0..width {
            let dr = r as f64 - r0 as f64;
            let dc = c as f64 - c0 as f64;
            out.push((-(dr * dr + dc * dc) * inv).exp());
        }
    }
    Ok(out)
}

/// Unit vector from the head center to the gaze point; `None` when the two
/// (nearly) coincide.
pub fn synth_gt_vector(head: &BBox, gaze: &Point) -> Option<[f64; 2]> {
    let c = head.center();
    let (dx, dy) = (gaze.x - c.x, gaze.y - c.y);
    let n = (dx * dx + dy * dy).sqrt();
    (n >= 1e-6).then(|| [dx / n, dy / n])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heatmap_peak_and_mass() {
        let h = synth_gt_heatmap(&Point::new(0.5, 0.5), 64, 64, 3.0).unwrap();
        assert_eq!(h[32 * 64 + 32], 1.0);
        let max = h.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(max, 1.0);
        let sum: f64 = h.iter().sum();
        let expected = 2.0 * std::f64::consts::PI * 9.0;
        assert!((sum - expected).abs() / expected < 0.01, "{sum}");
    }

    #[test]
    fn heatmap_corner_and_range() {
        let h = synth_gt_heatmap(&Point::new(0.0, 0.0), 64, 64, 3.0).unwrap();
        assert_eq!(h[0], 1.0);
        assert!(synth_gt_heatmap(&Point::new(1.2, 0.0), 8, 8, 3.0).is_err());
        let h = synth_gt_heatmap(&Point::new(1.0, 1.0), 8, 8, 3.0).unwrap();
        assert_eq!(h[63], 1.0);
    }

    #[test]
    fn vector_examples() {
        let head = BBox::new(0.4, 0.4, 0.6, 0.6);
        assert_eq!(synth_gt_vector(&head, &Point::new(0.5, 0.25)), Some([0.0, -1.0]));
        assert_eq!(synth_gt_vector(&head, &Point::new(0.5, 0.5)), None);
        let head = BBox::new(0.2, 0.2, 0.3, 0.3);
        let v = synth_gt_vector(&head, &Point::new(0.75, 0.25)).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
    }
}
