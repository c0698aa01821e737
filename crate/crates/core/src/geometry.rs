//! Axis-aligned box arithmetic and the box-regression losses used as state
//! losses for detection-style sets.
//!
//! Boxes are stored in corner form `(x1, y1, x2, y2)`. Network slots predict
//! boxes as [`BoxParams`] `(cx, cy, ln w, ln h)`, so decoded widths and heights
//! are always positive. Losses are evaluated on the decoded corners; their
//! gradients are reported with respect to the four raw parameters.

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Axis-aligned box in corner form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AABox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl AABox {
    /// Checked constructor: coordinates finite, `x1 <= x2`, `y1 <= y2`.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let b = AABox { x1, y1, x2, y2 };
        if !b.is_valid() {
            return Err(contract(format!("invalid box {b:?}")));
        }
        Ok(b)
    }

    pub fn from_cxcywh(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn is_valid(&self) -> bool {
        [self.x1, self.y1, self.x2, self.y2].iter().all(|v| v.is_finite())
            && self.x1 <= self.x2
            && self.y1 <= self.y2
    }

    #[inline]
    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    #[inline]
    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn intersection_area(&self, other: &AABox) -> f64 {
        let iw = (self.x2.min(other.x2) - self.x1.max(other.x1)).max(0.0);
        let ih = (self.y2.min(other.y2) - self.y1.max(other.y1)).max(0.0);
        iw * ih
    }

    /// Smallest box enclosing both.
    pub fn hull(&self, other: &AABox) -> AABox {
        AABox {
            x1: self.x1.min(other.x1),
            y1: self.y1.min(other.y1),
            x2: self.x2.max(other.x2),
            y2: self.y2.max(other.y2),
        }
    }

    /// Scales x coordinates by `sx` and y coordinates by `sy`.
    pub fn scaled(&self, sx: f64, sy: f64) -> AABox {
        AABox {
            x1: self.x1 * sx,
            y1: self.y1 * sy,
            x2: self.x2 * sx,
            y2: self.y2 * sy,
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> AABox {
        AABox {
            x1: self.x1 + dx,
            y1: self.y1 + dy,
            x2: self.x2 + dx,
            y2: self.y2 + dy,
        }
    }

    pub fn contains(&self, other: &AABox) -> bool {
        other.x1 >= self.x1 && other.y1 >= self.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }
}

/// Jaccard overlap. Two zero-area boxes have IoU 0.
pub fn iou(a: &AABox, b: &AABox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: `IoU - (hull - union) / hull`, in `(-1, 1]`.
pub fn giou(a: &AABox, b: &AABox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    let hull = a.hull(b).area();
    let iou = if union <= 0.0 { 0.0 } else { inter / union };
    if hull <= 0.0 {
        iou
    } else {
        iou - (hull - union) / hull
    }
}

/// Raw box parameters predicted by a network slot: centre plus log-size.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoxParams {
    pub cx: f64,
    pub cy: f64,
    pub log_w: f64,
    pub log_h: f64,
}

impl BoxParams {
    pub fn from_slice(p: &[f64]) -> Self {
        BoxParams {
            cx: p[0],
            cy: p[1],
            log_w: p[2],
            log_h: p[3],
        }
    }

    /// Parameters whose decoded box has centre `(cx, cy)` and size `w x h`.
    pub fn from_cxcywh(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoxParams {
            cx,
            cy,
            log_w: w.ln(),
            log_h: h.ln(),
        }
    }

    /// Parameters that decode exactly onto `b` (up to rounding). `b` must
    /// have positive area.
    pub fn from_box(b: &AABox) -> Self {
        Self::from_cxcywh(
            0.5 * (b.x1 + b.x2),
            0.5 * (b.y1 + b.y2),
            b.width(),
            b.height(),
        )
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.cx, self.cy, self.log_w, self.log_h]
    }

    pub fn decode(&self) -> AABox {
        let hw = 0.5 * self.log_w.exp();
        let hh = 0.5 * self.log_h.exp();
        AABox {
            x1: self.cx - hw,
            y1: self.cy - hh,
            x2: self.cx + hw,
            y2: self.cy + hh,
        }
    }

    /// Chains a gradient over decoded corners `(x1, y1, x2, y2)` back to the
    /// raw parameters.
    pub fn corner_grad_to_params(&self, g: [f64; 4]) -> [f64; 4] {
        let hw = 0.5 * self.log_w.exp();
        let hh = 0.5 * self.log_h.exp();
        [
            g[0] + g[2],
            g[1] + g[3],
            hw * (g[2] - g[0]),
            hh * (g[3] - g[1]),
        ]
    }
}

/// `1 - GIoU(pred, target)` and its gradient with respect to the corners of
/// `pred`. The loss is piecewise smooth; at ties between edges the
/// subgradient of the `min`/`max` that selects `pred` is used.
pub fn giou_loss_corner_grad(pred: &AABox, target: &AABox) -> (f64, [f64; 4]) {
    let (a, b) = (pred, target);

    let ix1 = a.x1.max(b.x1);
    let iy1 = a.y1.max(b.y1);
    let ix2 = a.x2.min(b.x2);
    let iy2 = a.y2.min(b.y2);
    let iw = ix2 - ix1;
    let ih = iy2 - iy1;
    let overlapping = iw > 0.0 && ih > 0.0;
    let inter = if overlapping { iw * ih } else { 0.0 };

    let aw = a.width();
    let ah = a.height();
    let union = aw * ah + b.area() - inter;

    let cw = a.x2.max(b.x2) - a.x1.min(b.x1);
    let ch = a.y2.max(b.y2) - a.y1.min(b.y1);
    let hull = cw * ch;

    if union <= 0.0 || hull <= 0.0 {
        return (1.0, [0.0; 4]);
    }
    let g = inter / union - (hull - union) / hull;

    // d(inter)/d(corner)
    let mut d_inter = [0.0; 4];
    if overlapping {
        if a.x1 >= b.x1 {
            d_inter[0] = -ih;
        }
        if a.x2 <= b.x2 {
            d_inter[2] = ih;
        }
        if a.y1 >= b.y1 {
            d_inter[1] = -iw;
        }
        if a.y2 <= b.y2 {
            d_inter[3] = iw;
        }
    }
    let d_area = [-ah, -aw, ah, aw];
    let mut d_hull = [0.0; 4];
    if a.x1 <= b.x1 {
        d_hull[0] = -ch;
    }
    if a.x2 >= b.x2 {
        d_hull[2] = ch;
    }
    if a.y1 <= b.y1 {
        d_hull[1] = -cw;
    }
    if a.y2 >= b.y2 {
        d_hull[3] = cw;
    }

    // giou = I/U - 1 + U/C
    let mut grad = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        let d_giou = d_inter[k] / union - inter * d_union / (union * union) + d_union / hull
            - union * d_hull[k] / (hull * hull);
        grad[k] = -d_giou;
    }
    (1.0 - g, grad)
}

/// `1 - GIoU` of a parameterized prediction, with the gradient over
/// `(cx, cy, ln w, ln h)`.
pub fn giou_loss_grad(pred: &BoxParams, target: &AABox) -> (f64, [f64; 4]) {
    let (loss, g) = giou_loss_corner_grad(&pred.decode(), target);
    (loss, pred.corner_grad_to_params(g))
}

/// Huber-form smooth-L1, summed over coordinates: `0.5 d^2 / delta` when
/// `|d| < delta`, else `|d| - 0.5 delta`. Returns the gradient over `pred`.
pub fn smooth_l1(pred: &[f64], target: &[f64], delta: f64) -> Result<(f64, Vec<f64>)> {
    if pred.len() != target.len() {
        return Err(contract(format!(
            "smooth_l1 length mismatch: {} vs {}",
            pred.len(),
            target.len()
        )));
    }
    if !(delta > 0.0) {
        return Err(contract(format!("smooth_l1 delta must be > 0, got {delta}")));
    }
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let d = p - t;
            if d.abs() < delta {
                loss += 0.5 * d * d / delta;
                d / delta
            } else {
                loss += d.abs() - 0.5 * delta;
                d.signum()
            }
        })
        .collect();
    Ok((loss, grad))
}
