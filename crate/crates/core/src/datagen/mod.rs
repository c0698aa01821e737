//! Synthetic datasets: multi-label tagging, toy box detection and the
//! subset-sum CAPTCHA, plus JSONL serialization.
//!
//! Every instance is generated from its own RNG stream, derived from the
//! dataset seed and the instance id, so datasets are reproducible and any
//! prefix of a larger dataset equals the smaller dataset with the same seed.

pub mod font;
pub mod idx;

use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Task;
use crate::error::{Error, Result};
use crate::geometry::{iou, AABox};
use crate::setloss::{GroundTruthSet, LabeledBox};
use font::{Canvas, GLYPH_H, GLYPH_W};
pub use idx::{load_idx, parse_idx, DigitGlyphs, IdxArray};

/// Side of the tagging and detection canvases.
pub const CANVAS: usize = 32;
pub const CAPTCHA_W: usize = 96;
pub const CAPTCHA_H: usize = 24;
pub const QUERY_SIDE: usize = 16;
/// Glyph scale of scene digits (10x14 pixels).
pub const CAPTCHA_SCALE: usize = 2;
/// Largest offset of a CAPTCHA glyph from the centre of its cell, per axis.
pub const CAPTCHA_JITTER: usize = 0;
/// Width of a CAPTCHA model input: scene pixels followed by query pixels.
pub const CAPTCHA_INPUT: usize = CAPTCHA_W * CAPTCHA_H + QUERY_SIDE * QUERY_SIDE;
/// Most labels a tagging canvas can hold (a 4x4 grid of cells).
pub const MAX_TAGGING_LABELS: usize = 16;
const MAX_TAGGING_SET: usize = 5;
const NOISE_MAX: f64 = 0.2;
const MAX_TRIES: usize = 10_000;
/// Side lengths of toy-detection boxes, in pixels.
const MIN_SIDE: usize = 8;
const MAX_SIDE: usize = 18;

/// One digit of a CAPTCHA scene.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneDigit {
    pub value: u8,
    #[serde(rename = "box")]
    pub bbox: AABox,
}

/// CAPTCHA metadata: the query digit and every digit drawn in the scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaptchaScene {
    pub query: u8,
    pub digits: Vec<SceneDigit>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub id: u64,
    /// Canvas width and height in pixels. Box coordinates live in this frame.
    pub width: usize,
    pub height: usize,
    pub input: Vec<f64>,
    pub gt: GroundTruthSet,
    pub scene: Option<CaptchaScene>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub task: Task,
    pub instances: Vec<Instance>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn input_width(&self) -> Option<usize> {
        self.instances.first().map(|i| i.input.len())
    }

    pub fn max_cardinality(&self) -> usize {
        self.instances.iter().map(|i| i.gt.len()).max().unwrap_or(0)
    }

    /// Instances `range` as a new dataset.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Dataset {
        Dataset {
            task: self.task,
            instances: self.instances[range].to_vec(),
        }
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The RNG stream of instance `id` of generator `stream` under `seed`.
pub fn instance_rng(seed: u64, stream: u64, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed ^ mix(stream)) ^ id))
}

fn add_noise<R: Rng>(canvas: &mut Canvas, rng: &mut R) {
    canvas.add_noise(|| rng.random_range(0.0..NOISE_MAX));
}

/// 6x6 binary pattern identifying a tagging label. Patterns are fixed across
/// seeds and pairwise distinct.
fn label_pattern(label: usize) -> [[bool; 6]; 6] {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(0x7A66 + label as u64));
    loop {
        let mut p = [[false; 6]; 6];
        let mut on = 0;
        for row in &mut p {
            for px in row.iter_mut() {
                *px = rng.random_bool(0.5);
                on += *px as usize;
            }
        }
        if (14..=22).contains(&on) {
            return p;
        }
    }
}

/// Multi-label tagging: label `l` is drawn as a fixed glyph in cell `l` of a
/// 4x4 grid of 8x8 cells, with up to 2 pixels of jitter. Sets have 1 to 5
/// labels, chosen uniformly; every label is equally likely to be present.
pub fn gen_multilabel(n: usize, num_labels: usize, seed: u64) -> Result<Dataset> {
    if num_labels == 0 || num_labels > MAX_TAGGING_LABELS {
        return Err(Error::Config(format!(
            "tagging needs 1..={MAX_TAGGING_LABELS} labels, got {num_labels}"
        )));
    }
    let patterns: Vec<_> = (0..num_labels).map(label_pattern).collect();
    let max_set = MAX_TAGGING_SET.min(num_labels);
    let instances = (0..n as u64)
        .map(|id| {
            let mut rng = instance_rng(seed, 1, id);
            let k = rng.random_range(1..=max_set);
            let mut all: Vec<usize> = (0..num_labels).collect();
            all.shuffle(&mut rng);
            let labels = all[..k].to_vec();
            let mut c = Canvas::new(CANVAS, CANVAS);
            for &l in &labels {
                let (cx, cy) = ((l % 4) * 8, (l / 4) * 8);
                let (jx, jy) = (rng.random_range(0..=2), rng.random_range(0..=2));
                for (y, row) in patterns[l].iter().enumerate() {
                    for (x, &on) in row.iter().enumerate() {
                        if on {
                            c.paint(cx + jx + x, cy + jy + y, 1.0);
                        }
                    }
                }
            }
            add_noise(&mut c, &mut rng);
            Instance {
                id,
                width: CANVAS,
                height: CANVAS,
                input: c.into_quantized(),
                gt: GroundTruthSet::Labels(labels),
                scene: None,
            }
        })
        .collect();
    Ok(Dataset {
        task: Task::Tagging,
        instances,
    })
}

/// Toy detection: 0 to `max_objects` rectangles (uniform count) with integer
/// corners on a 32x32 canvas, drawn as bright outlines over a dim fill. Any
/// two boxes have IoU at most `overlap_level`. Ground truth is stored in
/// generation order, which is random.
pub fn gen_toy_detection(n: usize, max_objects: usize, overlap_level: f64, seed: u64) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&overlap_level) {
        return Err(Error::Config(format!("overlap_level must be in [0, 1], got {overlap_level}")));
    }
    if max_objects > 12 {
        return Err(Error::Config("toy detection supports at most 12 objects".into()));
    }
    let mut instances = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let mut rng = instance_rng(seed, 2, id);
        let m = rng.random_range(0..=max_objects);
        let boxes = place_boxes(&mut rng, m, overlap_level)
            .ok_or_else(|| Error::Generation(format!("could not place {m} boxes with overlap <= {overlap_level}")))?;
        let mut c = Canvas::new(CANVAS, CANVAS);
        for b in &boxes {
            draw_box(&mut c, b);
        }
        add_noise(&mut c, &mut rng);
        instances.push(Instance {
            id,
            width: CANVAS,
            height: CANVAS,
            input: c.into_quantized(),
            gt: GroundTruthSet::Boxes(boxes.into_iter().map(|bbox| LabeledBox { bbox, class: 0 }).collect()),
            scene: None,
        });
    }
    Ok(Dataset {
        task: Task::Detect,
        instances,
    })
}

fn place_boxes<R: Rng>(rng: &mut R, m: usize, overlap_level: f64) -> Option<Vec<AABox>> {
    'attempt: for _ in 0..MAX_TRIES / 100 {
        let mut boxes: Vec<AABox> = Vec::with_capacity(m);
        while boxes.len() < m {
            let mut placed = false;
            for _ in 0..100 {
                let w = rng.random_range(MIN_SIDE..=MAX_SIDE);
                let h = rng.random_range(MIN_SIDE..=MAX_SIDE);
                let x = rng.random_range(0..=CANVAS - w);
                let y = rng.random_range(0..=CANVAS - h);
                let b = AABox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).expect("positive size");
                if boxes.iter().all(|o| iou(o, &b) <= overlap_level) {
                    boxes.push(b);
                    placed = true;
                    break;
                }
            }
            if !placed {
                continue 'attempt;
            }
        }
        return Some(boxes);
    }
    None
}

fn draw_box(c: &mut Canvas, b: &AABox) {
    let (x1, y1, x2, y2) = (b.x1 as usize, b.y1 as usize, b.x2 as usize - 1, b.y2 as usize - 1);
    for y in y1..=y2 {
        for x in x1..=x2 {
            let edge = x == x1 || x == x2 || y == y1 || y == y2;
            c.paint(x, y, if edge { 1.0 } else { 0.3 });
        }
    }
}

/// Number of sub-multisets of `digits` summing to `query` (the empty set
/// counts when `query == 0`).
pub fn count_subset_solutions(digits: &[u8], query: u8) -> usize {
    let q = query as usize;
    let mut ways = vec![0usize; q + 1];
    ways[0] = 1;
    for &d in digits {
        let d = d as usize;
        for s in (d..=q).rev() {
            ways[s] += ways[s - d];
        }
    }
    ways[q]
}

/// Whether a CAPTCHA instance has exactly one solution and its ground truth
/// is that solution.
pub fn verify_unique_solution(instance: &Instance) -> bool {
    let Some(scene) = &instance.scene else {
        return false;
    };
    let values: Vec<u8> = scene.digits.iter().map(|d| d.value).collect();
    if count_subset_solutions(&values, scene.query) != 1 {
        return false;
    }
    let Some(gt) = instance.gt.boxes() else {
        return false;
    };
    // find the unique subset and compare box sets
    let n = values.len();
    for mask in 0u32..(1 << n) {
        let sum: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| values[i] as usize).sum();
        if sum == scene.query as usize {
            let mut want: Vec<[f64; 4]> = (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| scene.digits[i].bbox.to_array())
                .collect();
            let mut got: Vec<[f64; 4]> = gt.iter().map(|b| b.bbox.to_array()).collect();
            want.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            got.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            return want == got;
        }
    }
    false
}

/// Digit glyph source for CAPTCHA rendering.
#[derive(Clone, Debug, Default)]
pub enum GlyphSource {
    #[default]
    Bitmap,
    Images(DigitGlyphs),
}

impl GlyphSource {
    fn draw<R: Rng>(&self, c: &mut Canvas, d: u8, b: &AABox, rng: &mut R) {
        let (x0, y0) = (b.x1 as usize, b.y1 as usize);
        let (w, h) = (b.width() as usize, b.height() as usize);
        match self {
            GlyphSource::Bitmap => c.stamp(x0, y0, w, h, GLYPH_W, GLYPH_H, |x, y| {
                if font::digit_pixel(d, x, y) {
                    1.0
                } else {
                    0.0
                }
            }),
            GlyphSource::Images(g) => {
                let imgs = &g.by_digit[d as usize];
                let img = &imgs[rng.random_range(0..imgs.len())];
                c.stamp(x0, y0, w, h, g.width, g.height, |x, y| img[y * g.width + x] as f64 / 255.0);
            }
        }
    }
}

/// Subset-sum CAPTCHA with bitmap digits. See [`gen_captcha_with`].
pub fn gen_captcha(n: usize, scene_digits: usize, seed: u64) -> Result<Dataset> {
    gen_captcha_with(n, scene_digits, seed, &GlyphSource::Bitmap)
}

/// Subset-sum CAPTCHA: a 96x24 scene with 2 to `scene_digits` digits
/// (uniform count, values 1..=9, one digit per cell of a `scene_digits`-cell
/// row, within [`CAPTCHA_JITTER`] pixels of the cell centre) and a 16x16
/// query image of a digit `q` in 0..=9. The target set is the boxes of the
/// unique scene subset summing to `q`; scenes without exactly one solution
/// are redrawn. Model input is the scene pixels followed by the query pixels.
pub fn gen_captcha_with(n: usize, scene_digits: usize, seed: u64, glyphs: &GlyphSource) -> Result<Dataset> {
    if !(2..=6).contains(&scene_digits) {
        return Err(Error::Config(format!("scene_digits must be in 2..=6, got {scene_digits}")));
    }
    let mut instances = Vec::with_capacity(n);
    for id in 0..n as u64 {
        let mut rng = instance_rng(seed, 3, id);
        let mut found = None;
        for _ in 0..MAX_TRIES {
            let k = rng.random_range(2..=scene_digits);
            let values: Vec<u8> = (0..k).map(|_| rng.random_range(1..=9u8)).collect();
            let q = rng.random_range(0..=9u8);
            if count_subset_solutions(&values, q) != 1 {
                continue;
            }
            found = Some((values, q, place_digits(&mut rng, k, scene_digits)));
            break;
        }
        let (values, q, boxes) =
            found.ok_or_else(|| Error::Generation(format!("no uniquely solvable scene after {MAX_TRIES} tries")))?;

        let mut scene = Canvas::new(CAPTCHA_W, CAPTCHA_H);
        for (v, b) in values.iter().zip(&boxes) {
            glyphs.draw(&mut scene, *v, b, &mut rng);
        }
        add_noise(&mut scene, &mut rng);
        let mut query = Canvas::new(QUERY_SIDE, QUERY_SIDE);
        let (qw, qh) = (GLYPH_W * CAPTCHA_SCALE, GLYPH_H * CAPTCHA_SCALE);
        let (qx, qy) = jittered(&mut rng, 0, 0, QUERY_SIDE, QUERY_SIDE, qw, qh);
        let qbox = AABox::new(qx as f64, qy as f64, (qx + qw) as f64, (qy + qh) as f64)?;
        glyphs.draw(&mut query, q, &qbox, &mut rng);
        add_noise(&mut query, &mut rng);

        let digits: Vec<SceneDigit> = values.iter().zip(&boxes).map(|(&value, &bbox)| SceneDigit { value, bbox }).collect();
        let gt = solution_boxes(&digits, q);
        let mut input = scene.into_quantized();
        input.extend(query.into_quantized());
        instances.push(Instance {
            id,
            width: CAPTCHA_W,
            height: CAPTCHA_H,
            input,
            gt: GroundTruthSet::Boxes(gt),
            scene: Some(CaptchaScene { query: q, digits }),
        });
    }
    Ok(Dataset {
        task: Task::Captcha,
        instances,
    })
}

fn solution_boxes(digits: &[SceneDigit], q: u8) -> Vec<LabeledBox> {
    let n = digits.len();
    for mask in 0u32..(1 << n) {
        let sum: usize = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| digits[i].value as usize).sum();
        if sum == q as usize {
            return (0..n)
                .filter(|i| mask & (1 << i) != 0)
                .map(|i| LabeledBox {
                    bbox: digits[i].bbox,
                    class: 0,
                })
                .collect();
        }
    }
    Vec::new()
}

/// Top-left corner of a `w x h` glyph centred in a `cw x ch` cell at
/// `(x0, y0)`, shifted by up to [`CAPTCHA_JITTER`] pixels on each axis.
fn jittered<R: Rng>(rng: &mut R, x0: usize, y0: usize, cw: usize, ch: usize, w: usize, h: usize) -> (usize, usize) {
    let (cx, cy) = ((cw - w) / 2, (ch - h) / 2);
    let (jx, jy) = (CAPTCHA_JITTER.min(cx), CAPTCHA_JITTER.min(cy));
    let x = x0 + cx - jx + rng.random_range(0..=2 * jx);
    let y = y0 + cy - jy + rng.random_range(0..=2 * jy);
    (x, y)
}

/// The scene is a row of `columns` equal cells; the `k` digits take random
/// distinct cells, left to right, at glyph scale 2.
fn place_digits<R: Rng>(rng: &mut R, k: usize, columns: usize) -> Vec<AABox> {
    let (w, h) = (GLYPH_W * CAPTCHA_SCALE, GLYPH_H * CAPTCHA_SCALE);
    let cw = CAPTCHA_W / columns;
    let mut cells = rand::seq::index::sample(rng, columns, k).into_vec();
    cells.sort_unstable();
    cells
        .into_iter()
        .map(|c| {
            let (x, y) = jittered(rng, c * cw, 0, cw, CAPTCHA_H, w, h);
            AABox::new(x as f64, y as f64, (x + w) as f64, (y + h) as f64).expect("positive size")
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ElementRecord {
    #[serde(rename = "box")]
    bbox: [f64; 4],
    class: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceRecord {
    id: u64,
    w: usize,
    h: usize,
    input: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    elements: Option<Vec<ElementRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scene: Option<CaptchaScene>,
}

/// Writes one JSON object per line:
/// `{"id", "w", "h", "input", "elements": [{"box": [x1,y1,x2,y2], "class"}]}`
/// for box tasks, or `"labels": [..]` instead of `"elements"` for tagging.
/// CAPTCHA instances also carry `"scene": {"query", "digits"}`.
pub fn write_jsonl<W: Write>(data: &Dataset, mut w: W) -> Result<()> {
    for inst in &data.instances {
        let (elements, labels) = match &inst.gt {
            GroundTruthSet::Boxes(b) => (
                Some(b.iter().map(|e| ElementRecord { bbox: e.bbox.to_array(), class: e.class }).collect()),
                None,
            ),
            GroundTruthSet::Labels(l) => (None, Some(l.clone())),
        };
        let rec = InstanceRecord {
            id: inst.id,
            w: inst.width,
            h: inst.height,
            input: inst.input.clone(),
            elements,
            labels,
            scene: inst.scene.clone(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads the format of [`write_jsonl`]. Errors report the byte offset of the
/// offending line. Zero-area boxes and inconsistent input widths are rejected.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut instances = Vec::new();
    let mut task: Option<Task> = None;
    let mut offset = 0u64;
    for line in reader.split(b'\n') {
        let line = line?;
        let here = offset;
        offset += line.len() as u64 + 1;
        if line.iter().all(|b| b.is_ascii_whitespace()) {
            continue;
        }
        let fail = |msg: String| Error::Format { offset: here, msg };
        let rec: InstanceRecord = serde_json::from_slice(&line).map_err(|e| fail(e.to_string()))?;
        if rec.w == 0 || rec.h == 0 {
            return Err(fail("canvas size must be positive".into()));
        }
        let (gt, this_task) = match (rec.elements, rec.labels) {
            (Some(els), None) => {
                let mut boxes = Vec::with_capacity(els.len());
                for e in els {
                    let bbox = AABox::from_array(e.bbox)
                        .ok()
                        .filter(|b| b.area() > 0.0)
                        .ok_or_else(|| fail(format!("degenerate box {:?}", e.bbox)))?;
                    boxes.push(LabeledBox { bbox, class: e.class });
                }
                let t = if rec.scene.is_some() { Task::Captcha } else { Task::Detect };
                (GroundTruthSet::Boxes(boxes), t)
            }
            (None, Some(labels)) => (GroundTruthSet::Labels(labels), Task::Tagging),
            _ => return Err(fail("exactly one of 'elements' and 'labels' is required".into())),
        };
        match task {
            None => task = Some(this_task),
            Some(t) if t != this_task => {
                return Err(fail(format!("{} instance in a {} file", this_task.name(), t.name())))
            }
            _ => {}
        }
        if let Some(first) = instances.first() {
            let first: &Instance = first;
            if first.input.len() != rec.input.len() {
                return Err(fail(format!(
                    "input has {} values, earlier instances have {}",
                    rec.input.len(),
                    first.input.len()
                )));
            }
        }
        if rec.input.iter().any(|v| !v.is_finite()) {
            return Err(fail("input must be finite".into()));
        }
        instances.push(Instance {
            id: rec.id,
            width: rec.w,
            height: rec.h,
            input: rec.input,
            gt,
            scene: rec.scene,
        });
    }
    Ok(Dataset {
        task: task.unwrap_or(Task::Detect),
        instances,
    })
}

pub fn save_jsonl(data: &Dataset, path: &std::path::Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_jsonl(data, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_jsonl(path: &std::path::Path) -> Result<Dataset> {
    read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_counting() {
        assert_eq!(count_subset_solutions(&[], 0), 1);
        assert_eq!(count_subset_solutions(&[], 3), 0);
        assert_eq!(count_subset_solutions(&[3, 4, 7], 7), 2);
        assert_eq!(count_subset_solutions(&[1, 2, 5], 3), 1);
        assert_eq!(count_subset_solutions(&[2, 2], 2), 2);
    }

    #[test]
    fn empty_scene_with_zero_query_is_unique() {
        let inst = Instance {
            id: 0,
            width: CAPTCHA_W,
            height: CAPTCHA_H,
            input: vec![],
            gt: GroundTruthSet::Boxes(vec![]),
            scene: Some(CaptchaScene {
                query: 0,
                digits: vec![],
            }),
        };
        assert!(verify_unique_solution(&inst));
    }

    #[test]
    fn prefixes_agree() {
        let a = gen_toy_detection(5, 4, 0.2, 11).unwrap();
        let b = gen_toy_detection(9, 4, 0.2, 11).unwrap();
        assert_eq!(a.instances[..], b.instances[..5]);
        let c = gen_toy_detection(5, 4, 0.2, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn captcha_instances_are_unique_and_sized() {
        let d = gen_captcha(30, 4, 5).unwrap();
        for inst in &d.instances {
            assert_eq!(inst.input.len(), CAPTCHA_INPUT);
            assert!(verify_unique_solution(inst));
            let scene = inst.scene.as_ref().unwrap();
            assert!((2..=4).contains(&scene.digits.len()));
            assert!(scene.digits.iter().all(|d| (1..=9).contains(&d.value)));
        }
    }

    #[test]
    fn tagging_labels_in_range() {
        let d = gen_multilabel(50, 10, 3).unwrap();
        for inst in &d.instances {
            let l = inst.gt.labels().unwrap();
            assert!((1..=5).contains(&l.len()));
            assert!(l.iter().all(|&v| v < 10));
            assert!(inst.input.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(gen_multilabel(1, 17, 0).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        for d in [
            gen_toy_detection(4, 3, 0.3, 1).unwrap(),
            gen_multilabel(4, 8, 1).unwrap(),
            gen_captcha(3, 3, 1).unwrap(),
        ] {
            let mut buf = Vec::new();
            write_jsonl(&d, &mut buf).unwrap();
            assert_eq!(read_jsonl(&buf[..]).unwrap(), d);
        }
    }

    #[test]
    fn jsonl_rejects_degenerate_boxes_with_offset() {
        let good = r#"{"id":0,"w":4,"h":4,"input":[0.0],"elements":[]}"#;
        let bad = r#"{"id":1,"w":4,"h":4,"input":[0.0],"elements":[{"box":[1,1,1,3],"class":0}]}"#;
        let text = format!("{good}\n{bad}\n");
        match read_jsonl(text.as_bytes()) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, good.len() as u64 + 1),
            other => panic!("{other:?}"),
        }
        assert!(read_jsonl(&b"{not json}\n"[..]).is_err());
    }
}
