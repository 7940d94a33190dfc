//! Static overlays of predictions: head boxes, gaze rays and social labels.

use std::collections::BTreeMap;

use image::imageops::{self, FilterType};
use image::{Rgb, RgbImage};
use socialgaze_core::annotations::UnifiedFrameRecord;
use socialgaze_core::predictions::PredictionFrame;

use crate::draw;

const PALETTE: [Rgb<u8>; 8] = [
    Rgb([230, 25, 75]),
    Rgb([60, 180, 75]),
    Rgb([255, 225, 25]),
    Rgb([0, 130, 200]),
    Rgb([245, 130, 48]),
    Rgb([145, 30, 180]),
    Rgb([70, 240, 240]),
    Rgb([240, 50, 230]),
];
const INK: Rgb<u8> = Rgb([0, 0, 0]);

pub fn color_of(person_id: u32) -> Rgb<u8> {
    PALETTE[person_id as usize % PALETTE.len()]
}

/// Social partners of one person above the decision threshold.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SocialLabel {
    /// The partner with the highest looking-at score.
    pub looks_at: Option<u32>,
    pub mutual: Vec<u32>,
    pub shared: Vec<u32>,
}

impl SocialLabel {
    pub fn is_empty(&self) -> bool {
        self.looks_at.is_none() && self.mutual.is_empty() && self.shared.is_empty()
    }

    /// Text lines: `L<id>` looks at, `E<ids>` each other, `A<ids>` shared attention.
    pub fn lines(&self) -> Vec<String> {
        let join = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
        let mut out = Vec::new();
        if let Some(t) = self.looks_at {
            out.push(format!("L{t}"));
        }
        if !self.mutual.is_empty() {
            out.push(format!("E{}", join(&self.mutual)));
        }
        if !self.shared.is_empty() {
            out.push(format!("A{}", join(&self.shared)));
        }
        out
    }
}

/// Labels per person id.
pub fn social_labels(frame: &PredictionFrame, threshold: f64) -> BTreeMap<u32, SocialLabel> {
    let ids: Vec<u32> = frame.persons.iter().map(|p| p.person_id).collect();
    let above = |m: &[Vec<f64>], i: usize| -> Vec<u32> {
        (0..ids.len()).filter(|&j| j != i && m[i][j] >= threshold).map(|j| ids[j]).collect()
    };
    (0..ids.len())
        .map(|i| {
            let looks_at = (0..ids.len())
                .filter(|&j| j != i && frame.lah[i][j] >= threshold)
                .fold(None, |best: Option<usize>, j| match best {
                    Some(b) if frame.lah[i][b] >= frame.lah[i][j] => Some(b),
                    _ => Some(j),
                })
                .map(|j| ids[j]);
            let label = SocialLabel {
                looks_at,
                mutual: above(&frame.laeo, i),
                shared: above(&frame.sa, i),
            };
            (ids[i], label)
        })
        .collect()
}

pub struct RenderOptions {
    /// Frames are upscaled (nearest neighbour) to at least this width.
    pub min_width: u32,
    pub threshold: f64,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { min_width: 256, threshold: 0.5 }
    }
}

/// Draws one frame's predictions over its image. Head boxes come from the
/// ground-truth record of the same frame.
pub fn render_frame(img: &RgbImage, pred: &PredictionFrame, gt: &UnifiedFrameRecord, opts: &RenderOptions) -> RgbImage {
    let k = opts.min_width.div_ceil(img.width().max(1)).max(1);
    let mut out = imageops::resize(img, img.width() * k, img.height() * k, FilterType::Nearest);
    let (w, h) = (out.width() as f64, out.height() as f64);
    let px = |x: f64, y: f64| ((x * w).round() as i64, (y * h).round() as i64);
    let stroke = (k as i64 / 2).max(1);
    let labels = social_labels(pred, opts.threshold);

    for p in &pred.persons {
        let Some(person) = gt.person(p.person_id) else { continue };
        let c = color_of(p.person_id);
        let b = &person.head_box;
        let (x0, y0) = px(b.xmin, b.ymin);
        let (x1, y1) = px(b.xmax, b.ymax);
        draw::rect(&mut out, x0, y0, x1, y1, stroke, c);
        let head = px((b.xmin + b.xmax) / 2.0, (b.ymin + b.ymax) / 2.0);
        let target = px(p.gaze_point.x, p.gaze_point.y);
        draw::line(&mut out, head, target, c);
        if p.inout >= 0.5 {
            draw::disc(&mut out, target, stroke + 1, c);
        } else {
            draw::cross(&mut out, target, stroke + 2, c);
        }
    }

    // labels last so rays never cover them
    let scale = (k as i64 / 2).max(1);
    for p in &pred.persons {
        let Some(person) = gt.person(p.person_id) else { continue };
        let mut lines = vec![p.person_id.to_string()];
        lines.extend(labels.get(&p.person_id).map(SocialLabel::lines).unwrap_or_default());
        let (x0, y0) = px(person.head_box.xmin, person.head_box.ymin);
        let (_, y1) = px(0.0, person.head_box.ymax);
        let line_h = draw::GLYPH_H * scale;
        let block = line_h * lines.len() as i64;
        let top = if y0 - block >= 0 { y0 - block } else { y1 + 1 };
        for (n, text) in lines.iter().enumerate() {
            let y = top + n as i64 * line_h;
            draw::fill_rect(&mut out, x0, y, draw::text_width(text, scale) + scale, line_h, color_of(p.person_id));
            draw::text(&mut out, x0 + scale, y + scale / 2, text, scale, INK);
        }
    }
    out
}
