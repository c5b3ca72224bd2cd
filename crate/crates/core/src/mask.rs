use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle in pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl Rect {
    pub const fn new(x: usize, y: usize, w: usize, h: usize) -> Self {
        Rect { x, y, w, h }
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x && x < self.x + self.w && y >= self.y && y < self.y + self.h
    }

    pub fn center_x(&self) -> f64 {
        self.x as f64 + self.w as f64 / 2.0
    }
}

/// Boolean grid stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl Mask {
    pub fn empty(width: usize, height: usize) -> Self {
        Mask {
            width,
            height,
            bits: vec![false; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<bool>) -> Option<Self> {
        (bits.len() == width * height).then_some(Mask { width, height, bits })
    }

    /// A mask with `rect` set; `None` when the rectangle leaves the grid.
    pub fn from_rect(width: usize, height: usize, rect: Rect) -> Option<Self> {
        if rect.w == 0 || rect.h == 0 || rect.x + rect.w > width || rect.y + rect.h > height {
            return None;
        }
        let mut m = Mask::empty(width, height);
        for y in rect.y..rect.y + rect.h {
            m.bits[y * width + rect.x..y * width + rect.x + rect.w].fill(true);
        }
        Some(m)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.bits[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    pub fn union_with(&mut self, other: &Mask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= *b;
        }
    }

    /// Bounding box of the set cells.
    pub fn bbox(&self) -> Option<Rect> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y) {
                    let b = bounds.get_or_insert((x, y, x, y));
                    b.0 = b.0.min(x);
                    b.1 = b.1.min(y);
                    b.2 = b.2.max(x);
                    b.3 = b.3.max(y);
                }
            }
        }
        bounds.map(|(x0, y0, x1, y1)| Rect::new(x0, y0, x1 - x0 + 1, y1 - y0 + 1))
    }

    /// Intersection over union; 0 when both are empty or sizes differ.
    pub fn iou(&self, other: &Mask) -> f64 {
        if self.width != other.width || self.height != other.height {
            return 0.0;
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for (a, b) in self.bits.iter().zip(&other.bits) {
            inter += (*a && *b) as usize;
            union += (*a || *b) as usize;
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Downsamples by area coverage: an output cell is set when at least half
    /// of its footprint is set.
    pub fn downsample(&self, out_w: usize, out_h: usize) -> Mask {
        let mut out = Mask::empty(out_w, out_h);
        for oy in 0..out_h {
            let y0 = oy * self.height / out_h;
            let y1 = ((oy + 1) * self.height).div_ceil(out_h);
            for ox in 0..out_w {
                let x0 = ox * self.width / out_w;
                let x1 = ((ox + 1) * self.width).div_ceil(out_w);
                let total = (y1 - y0) * (x1 - x0);
                let set = (y0..y1)
                    .flat_map(|y| (x0..x1).map(move |x| (x, y)))
                    .filter(|&(x, y)| self.get(x, y))
                    .count();
                out.set(ox, oy, set * 2 >= total);
            }
        }
        out
    }
}
