//! Brute-force reference implementations, written independently of the library.

use std::collections::BTreeMap;

use vanish::evalharness::Detection;
use vanish::imagecore::{Grid, ImageBuffer, Kernel};

/// Area-weighted form: each corner is weighted by the area of the opposite sub-rectangle.
pub fn bilinear(a: (f64, f64), b: (f64, f64), f: [f64; 4], p: (f64, f64)) -> f64 {
    let [f11, f12, f21, f22] = f;
    let (x, y) = p;
    let area = (a.1 - a.0) * (b.1 - b.0);
    (f11 * (a.1 - x) * (b.1 - y)
        + f21 * (x - a.0) * (b.1 - y)
        + f12 * (a.1 - x) * (y - b.0)
        + f22 * (x - a.0) * (y - b.0))
        / area
}

/// Tent-kernel sum over every source sample with align-corners coordinates.
pub fn resize(img: &ImageBuffer, w: usize, h: usize) -> Vec<f64> {
    let map = |d: usize, dd: usize, sd: usize| {
        if dd == 1 || sd == 1 {
            0.0
        } else {
            d as f64 * (sd - 1) as f64 / (dd - 1) as f64
        }
    };
    let tent = |t: f64| (1.0 - t.abs()).max(0.0);
    let mut out = Vec::new();
    for y in 0..h {
        let sy = map(y, h, img.height());
        for x in 0..w {
            let sx = map(x, w, img.width());
            for c in 0..img.channels() {
                let mut acc = 0.0;
                for j in 0..img.height() {
                    let wy = tent(sy - j as f64);
                    if wy == 0.0 {
                        continue;
                    }
                    for i in 0..img.width() {
                        acc += wy * tent(sx - i as f64) * img.get(i, j, c);
                    }
                }
                out.push(acc);
            }
        }
    }
    out
}

/// Valid cross-correlation as a matrix product over gathered patches.
pub fn conv(img: &ImageBuffer, kernel: &Kernel, stride: usize) -> (usize, usize, Vec<f64>) {
    let k = kernel.size();
    let ow = (img.width() - k) / stride + 1;
    let oh = (img.height() - k) / stride + 1;
    let mut weights = Vec::new();
    for _c in 0..img.channels() {
        weights.push(kernel.weights().to_vec());
    }
    let mut out = Vec::new();
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for (c, wc) in weights.iter().enumerate() {
                for r in 0..k {
                    for s in 0..k {
                        acc += img.get(ox * stride + s, oy * stride + r, c) * wc[r * k + s];
                    }
                }
            }
            out.push(acc);
        }
    }
    (ow, oh, out)
}

/// Sum over all unordered 4-neighbor pairs.
pub fn total_variation(g: &Grid) -> f64 {
    let d = g.dims();
    let mut pairs = Vec::new();
    for y in 0..d.height {
        for x in 0..d.width {
            if x + 1 < d.width {
                pairs.push(((x, y), (x + 1, y)));
            }
            if y + 1 < d.height {
                pairs.push(((x, y), (x, y + 1)));
            }
        }
    }
    let mut tv = 0.0;
    for ((x0, y0), (x1, y1)) in pairs {
        for c in 0..d.channels {
            tv += (g.get(x0, y0, c) - g.get(x1, y1, c)).abs();
        }
    }
    tv
}

/// `(boxes origin, boxes adv, new, disappeared)` by removing matched labels one at a time.
pub fn label_diff(origin: &[Detection], adv: &[Detection], thr: f64) -> (usize, usize, usize, usize) {
    let group = |ds: &[Detection]| {
        let mut m: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for d in ds.iter().filter(|d| d.score >= thr) {
            m.entry(d.image_id).or_default().push(d.category_id);
        }
        m
    };
    let (o, a) = (group(origin), group(adv));
    let n_o: usize = o.values().map(Vec::len).sum();
    let n_a: usize = a.values().map(Vec::len).sum();
    let mut new = 0;
    let mut gone = 0;
    let mut images: Vec<u64> = o.keys().chain(a.keys()).copied().collect();
    images.sort();
    images.dedup();
    for img in images {
        let mut remaining = o.get(&img).cloned().unwrap_or_default();
        for cat in a.get(&img).cloned().unwrap_or_default() {
            match remaining.iter().position(|&c| c == cat) {
                Some(i) => {
                    remaining.swap_remove(i);
                }
                None => new += 1,
            }
        }
        gone += remaining.len();
    }
    (n_o, n_a, new, gone)
}
