//! Procedural scenes with analytically known gaze.
//!
//! Each person is a disc whose hue encodes the direction of its gaze and
//! whose white pupil sits off-center toward the target. Non-person targets
//! are white square markers. Every position is snapped to the center of a
//! `grid x grid` lattice so heatmap argmax points can hit the ground truth
//! exactly. Labels come from the annotation pipeline.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::annotations::{DatasetId, GazeSource, InOut, UnifiedFrameRecord, UnifiedPerson, SCHEMA_VERSION};
use crate::error::{ensure, Error, Result};
use crate::frames::FrameStore;
use crate::geometry::{round6, BBox, Point};
use crate::pipeline::{derive_laeo, derive_lah, derive_sa};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOptions {
    pub seed: u64,
    pub n_clips: usize,
    pub persons_per_clip: usize,
    pub frames_per_clip: usize,
    /// Rendered frame side in pixels.
    pub frame_size: u32,
    pub grid: usize,
    /// Head box side in grid cells; odd.
    pub head_cells: usize,
    /// Chance that a clip opens with a mutual-gaze pair.
    pub p_mutual: f64,
    pub p_person: f64,
    pub p_marker: f64,
    pub speaking: bool,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            n_clips: 32,
            persons_per_clip: 3,
            frames_per_clip: 5,
            frame_size: 64,
            grid: 16,
            head_cells: 3,
            p_mutual: 0.3,
            p_person: 0.5,
            p_marker: 0.35,
            speaking: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SynthTarget {
    /// Index of another person of the same scene.
    Person(usize),
    Marker(Point),
    /// A point outside the unit square giving the gaze direction.
    Outside(Point),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPerson {
    pub person_id: u32,
    pub head_box: BBox,
    pub target: SynthTarget,
    pub speaking: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub clip_id: String,
    pub frames: usize,
    pub persons: Vec<SynthPerson>,
}

/// Box of side `cells` grid cells centered on cell `(row, col)`.
pub fn cell_box(row: usize, col: usize, grid: usize, cells: usize) -> BBox {
    let g = grid as f64;
    let half = cells as f64 / (2.0 * g);
    let (cx, cy) = ((col as f64 + 0.5) / g, (row as f64 + 0.5) / g);
    BBox::new(round6(cx - half), round6(cy - half), round6(cx + half), round6(cy + half))
}

pub fn cell_point(row: usize, col: usize, grid: usize) -> Point {
    let g = grid as f64;
    Point::new(round6((col as f64 + 0.5) / g), round6((row as f64 + 0.5) / g))
}

fn hsv(h: f64, s: f64, v: f64) -> Rgb<u8> {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let c = v * s;
    let x = c * (1.0 - (h6 % 2.0 - 1.0).abs());
    let (r, g, b) = match h6 as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    let q = |u: f64| ((u + m) * 255.0).round() as u8;
    Rgb([q(r), q(g), q(b)])
}

impl SyntheticScene {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.frames >= 1, "scene needs at least one frame");
        ensure!(!self.persons.is_empty(), "scene needs at least one person");
        for (i, p) in self.persons.iter().enumerate() {
            p.head_box.validate()?;
            match p.target {
                SynthTarget::Person(j) => ensure!(j < self.persons.len() && j != i, "bad person target {j}"),
                SynthTarget::Marker(m) => ensure!(m.in_unit_square(), "marker outside the frame"),
                SynthTarget::Outside(o) => ensure!(!o.in_unit_square(), "outside target inside the frame"),
            }
        }
        Ok(())
    }

    /// The point person `i` looks at (possibly outside the frame).
    pub fn target_point(&self, i: usize) -> Point {
        match self.persons[i].target {
            SynthTarget::Person(j) => self.persons[j].head_box.center(),
            SynthTarget::Marker(m) | SynthTarget::Outside(m) => m,
        }
    }

    pub fn unified_persons(&self) -> Vec<UnifiedPerson> {
        self.persons
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let outside = matches!(p.target, SynthTarget::Outside(_));
                UnifiedPerson {
                    person_id: p.person_id,
                    head_box: p.head_box,
                    gaze_point: (!outside).then(|| self.target_point(i).rounded()),
                    inout: Some(if outside { InOut::Out } else { InOut::In }),
                    gaze_source: GazeSource::Native,
                    annotator_points: Vec::new(),
                    speaking: p.speaking,
                }
            })
            .collect()
    }

    /// One unified record per frame, labels derived by the pipeline.
    pub fn records(&self) -> Vec<UnifiedFrameRecord> {
        let mut persons = self.unified_persons();
        persons.sort_by_key(|p| p.person_id);
        let ids: Vec<u32> = persons.iter().map(|p| p.person_id).collect();
        let lah = derive_lah(&persons);
        let laeo = derive_laeo(&lah, &ids);
        let sa = derive_sa(&lah, &ids);
        (0..self.frames as u32)
            .map(|t| UnifiedFrameRecord {
                schema: SCHEMA_VERSION.into(),
                dataset: DatasetId::Synthetic,
                clip_id: self.clip_id.clone(),
                frame_idx: t,
                persons: persons.clone(),
                lah: lah.clone(),
                laeo: laeo.clone(),
                sa: sa.clone(),
            })
            .collect()
    }

    /// Renders frame `t`. Scenes are static, so every frame is identical.
    pub fn render(&self, _t: usize, size: u32) -> RgbImage {
        let mut img = RgbImage::from_pixel(size, size, Rgb([40, 40, 40]));
        let s = size as f64;
        let markers: Vec<(Point, f64)> = self
            .persons
            .iter()
            .filter_map(|p| match p.target {
                SynthTarget::Marker(m) => Some((m, 0.3 * p.head_box.width())),
                _ => None,
            })
            .collect();
        for (x, y, px) in img.enumerate_pixels_mut() {
            let q = Point::new((x as f64 + 0.5) / s, (y as f64 + 0.5) / s);
            for &(m, half) in &markers {
                if (q.x - m.x).abs() <= half && (q.y - m.y).abs() <= half {
                    *px = Rgb([255, 255, 255]);
                }
            }
            for (i, p) in self.persons.iter().enumerate() {
                let c = p.head_box.center();
                let r = 0.5 * p.head_box.width().min(p.head_box.height());
                if q.distance(&c) > r {
                    continue;
                }
                let t = self.target_point(i);
                let (dx, dy) = (t.x - c.x, t.y - c.y);
                let n = (dx * dx + dy * dy).sqrt().max(1e-12);
                let hue = dy.atan2(dx) / std::f64::consts::TAU;
                *px = hsv(hue, 1.0, 1.0);
                let pupil = Point::new(c.x + 0.5 * r * dx / n, c.y + 0.5 * r * dy / n);
                if q.distance(&pupil) <= r / 3.0 {
                    *px = Rgb([255, 255, 255]);
                }
            }
        }
        img
    }
}

fn chebyshev(a: (usize, usize), b: (usize, usize)) -> usize {
    a.0.abs_diff(b.0).max(a.1.abs_diff(b.1))
}

fn random_scene(rng: &mut ChaCha8Rng, clip_id: String, o: &SynthOptions) -> Result<SyntheticScene> {
    let half = o.head_cells / 2;
    let lo = half;
    let hi = o.grid - 1 - half;
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut attempts = 0;
    while cells.len() < o.persons_per_clip {
        attempts += 1;
        if attempts > 10_000 {
            return Err(Error::validation("grid too small to place every head"));
        }
        let c = (rng.random_range(lo..=hi), rng.random_range(lo..=hi));
        if cells.iter().all(|&d| chebyshev(c, d) > o.head_cells) {
            cells.push(c);
        }
    }
    let free: Vec<(usize, usize)> = (0..o.grid)
        .flat_map(|r| (0..o.grid).map(move |c| (r, c)))
        .filter(|&c| cells.iter().all(|&d| chebyshev(c, d) > half))
        .collect();
    ensure!(!free.is_empty(), "no free cell for markers");

    let n = o.persons_per_clip;
    let mut targets: Vec<Option<SynthTarget>> = vec![None; n];
    if n >= 2 && rng.random_bool(o.p_mutual) {
        let a = rng.random_range(0..n);
        let b = (a + rng.random_range(1..n)) % n;
        targets[a] = Some(SynthTarget::Person(b));
        targets[b] = Some(SynthTarget::Person(a));
    }
    for i in 0..n {
        if targets[i].is_some() {
            continue;
        }
        let u: f64 = rng.random();
        targets[i] = Some(if n >= 2 && u < o.p_person {
            SynthTarget::Person((i + rng.random_range(1..n)) % n)
        } else if u < o.p_person + o.p_marker {
            let (r, c) = free[rng.random_range(0..free.len())];
            SynthTarget::Marker(cell_point(r, c, o.grid))
        } else {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let (r, c) = cells[i];
            let base = cell_point(r, c, o.grid);
            SynthTarget::Outside(Point::new(round6(base.x + 2.0 * angle.cos()), round6(base.y + 2.0 * angle.sin())))
        });
    }
    let persons = cells
        .iter()
        .zip(targets)
        .enumerate()
        .map(|(i, (&(r, c), t))| SynthPerson {
            person_id: i as u32 + 1,
            head_box: cell_box(r, c, o.grid, o.head_cells),
            target: t.expect("every person has a target"),
            speaking: o.speaking.then(|| round6(rng.random::<f64>())),
        })
        .collect();
    let scene = SyntheticScene {
        clip_id,
        frames: o.frames_per_clip,
        persons,
    };
    scene.validate()?;
    Ok(scene)
}

/// Scenes of a synthetic dataset; a pure function of the options.
pub fn synth_generate(o: &SynthOptions) -> Result<Vec<SyntheticScene>> {
    ensure!(o.n_clips >= 1 && o.persons_per_clip >= 1 && o.frames_per_clip >= 1, "synthetic sizes must be positive");
    ensure!(o.head_cells % 2 == 1, "head_cells must be odd");
    ensure!(o.grid > o.head_cells, "grid must be larger than a head");
    ensure!(o.frame_size >= 8, "frames must be at least 8 pixels");
    for p in [o.p_mutual, o.p_person, o.p_marker] {
        ensure!((0.0..=1.0).contains(&p), "probabilities must lie in [0,1]");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(o.seed);
    (0..o.n_clips)
        .map(|k| random_scene(&mut rng, format!("synth_{k:04}"), o))
        .collect()
}

/// Records plus rendered frames for every scene.
pub fn synth_dataset(o: &SynthOptions) -> Result<(Vec<UnifiedFrameRecord>, FrameStore)> {
    let scenes = synth_generate(o)?;
    let mut records = Vec::new();
    let mut store = FrameStore::default();
    for s in &scenes {
        for r in s.records() {
            store.insert(r.dataset, &r.clip_id, r.frame_idx, s.render(r.frame_idx as usize, o.frame_size));
            records.push(r);
        }
    }
    Ok((records, store))
}
