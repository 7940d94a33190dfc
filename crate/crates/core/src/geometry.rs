//! Normalized image-plane geometry: points, head boxes, IoU and containment.
//!
//! All coordinates live in the unit square with `y` growing downward.

use serde::de::{Deserialize, Deserializer};
use serde::ser::{Serialize, SerializeTuple, Serializer};

use crate::error::{ensure, Result};

/// Rounds to the 6-decimal grid used by every on-disk format.
pub fn round6(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Serializes a float with exactly six decimals.
pub(crate) struct Fixed6(pub f64);

impl Serialize for Fixed6 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(serde::ser::Error::custom("non-finite float"));
        }
        let text = format!("{:.6}", round6(self.0));
        let raw = serde_json::value::RawValue::from_string(text).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    }
}

pub(crate) fn ser_opt_fixed6<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => Fixed6(*v).serialize(s),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn rounded(&self) -> Point {
        Point::new(round6(self.x), round6(self.y))
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(2)?;
        t.serialize_element(&Fixed6(self.x))?;
        t.serialize_element(&Fixed6(self.y))?;
        t.end()
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [x, y] = <[f64; 2]>::deserialize(d)?;
        Ok(Point { x, y })
    }
}

/// Axis-aligned box `(xmin, ymin, xmax, ymax)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    pub const fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    /// Builds a box and checks it is non-degenerate and inside the unit square.
    pub fn checked(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let b = Self::new(xmin, ymin, xmax, ymax);
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.as_array();
        ensure!(c.iter().all(|v| v.is_finite()), "box has non-finite coordinates: {c:?}");
        ensure!(
            c.iter().all(|v| (0.0..=1.0).contains(v)),
            "box coordinates outside [0,1]: {c:?}"
        );
        ensure!(
            self.xmin < self.xmax && self.ymin < self.ymax,
            "degenerate box: {c:?}"
        );
        Ok(())
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    pub fn center(&self) -> Point {
        Point::new((self.xmin + self.xmax) / 2.0, (self.ymin + self.ymax) / 2.0)
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    /// Closed-interval containment: points on the boundary are inside.
    pub fn contains(&self, p: &Point) -> bool {
        p.x >= self.xmin && p.x <= self.xmax && p.y >= self.ymin && p.y <= self.ymax
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.xmax.min(other.xmax) - self.xmin.max(other.xmin);
        let h = self.ymax.min(other.ymax) - self.ymin.max(other.ymin);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = self.intersection_area(other);
        let union = self.area() + other.area() - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }

    pub fn rounded(&self) -> BBox {
        BBox::new(
            round6(self.xmin),
            round6(self.ymin),
            round6(self.xmax),
            round6(self.ymax),
        )
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut t = s.serialize_tuple(4)?;
        for v in self.as_array() {
            t.serialize_element(&Fixed6(v))?;
        }
        t.end()
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let [a, b, c, e] = <[f64; 4]>::deserialize(d)?;
        Ok(BBox::new(a, b, c, e))
    }
}

/// Among `candidates` whose box contains `point`, returns the index of the one
/// whose center is nearest; equal distances resolve to the earliest candidate.
pub fn nearest_containing<'a, I>(point: &Point, candidates: I) -> Option<usize>
where
    I: IntoIterator<Item = &'a BBox>,
{
    let mut best: Option<(usize, f64)> = None;
    for (idx, b) in candidates.into_iter().enumerate() {
        if !b.contains(point) {
            continue;
        }
        let d = b.center().distance(point);
        match best {
            Some((_, bd)) if bd <= d => {}
            _ => best = Some((idx, d)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iou_of_offset_squares_is_one_seventh() {
        let a = BBox::new(0.0, 0.0, 0.5, 0.5);
        let b = BBox::new(0.25, 0.25, 0.75, 0.75);
        // overlap 0.25^2 = 1/16, union 2/4 - 1/16 = 7/16
        assert!((a.iou(&b) - 1.0 / 7.0).abs() < 1e-12);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(0.6, 0.6, 0.9, 0.9)), 0.0);
    }

    #[test]
    fn containment_is_closed() {
        let b = BBox::new(0.4, 0.4, 0.6, 0.6);
        assert!(b.contains(&Point::new(0.4, 0.6)));
        assert!(b.contains(&Point::new(0.5, 0.5)));
        assert!(!b.contains(&Point::new(0.61, 0.5)));
    }

    #[test]
    fn nearest_center_breaks_nested_boxes() {
        let outer = BBox::new(0.0, 0.0, 1.0, 1.0);
        let inner = BBox::new(0.1, 0.1, 0.3, 0.3);
        let p = Point::new(0.2, 0.2);
        assert_eq!(nearest_containing(&p, [&outer, &inner]), Some(1));
        assert_eq!(nearest_containing(&Point::new(0.9, 0.9), [&inner]), None);
    }

    #[test]
    fn validation_rejects_degenerate_and_out_of_range() {
        assert!(BBox::checked(0.2, 0.2, 0.2, 0.4).is_err());
        assert!(BBox::checked(0.2, 0.2, 1.2, 0.4).is_err());
        assert!(BBox::checked(0.2, 0.2, 0.3, 0.4).is_ok());
    }

    #[test]
    fn fixed_six_decimals() {
        let s = serde_json::to_string(&BBox::new(0.2, 0.25, 1.0, 1.0 / 3.0)).unwrap();
        assert_eq!(s, "[0.200000,0.250000,1.000000,0.333333]");
        let p: Point = serde_json::from_str("[0.3,0.4]").unwrap();
        assert_eq!(p, Point::new(0.3, 0.4));
    }

    #[test]
    fn round6_is_stable_through_text() {
        for x in [0.1234565, 0.3, 1.0 / 3.0, 0.9999996, 1e-9] {
            let r = round6(x);
            let back: f64 = format!("{r:.6}").parse().unwrap();
            assert_eq!(r, back);
        }
    }
}
