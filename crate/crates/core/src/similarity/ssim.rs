use crate::sensors::DepthImage;

/// Mean SSIM structure term `(σxy + c2/2) / (σx σy + c2/2)` over square
/// windows, mapped from `[-1, 1]` onto `[0, 1]`.
///
/// Depths are divided by `depth_range` (or by the larger image maximum)
/// before windowing. When no full window fits, the whole image is one
/// window.
pub fn structure_similarity(
    a: &DepthImage,
    b: &DepthImage,
    window: usize,
    stride: usize,
    c2: f64,
    depth_range: Option<f64>,
) -> f64 {
    let scale = depth_range.unwrap_or_else(|| {
        let peak = a.values().iter().chain(b.values()).cloned().fold(0.0, f64::max);
        if peak > 0.0 {
            peak
        } else {
            1.0
        }
    });
    let (w, h) = (a.width(), a.height());
    let starts = |n: usize| -> Vec<(usize, usize)> {
        if n < window {
            vec![(0, n)]
        } else {
            (0..=n - window).step_by(stride).map(|s| (s, window)).collect()
        }
    };
    let rows = starts(h);
    let cols = starts(w);
    let c3 = c2 / 2.0;
    let mut total = 0.0;
    let mut count = 0usize;
    for &(r0, rh) in &rows {
        for &(c0, cw) in &cols {
            let n = (rh * cw) as f64;
            let (mut sx, mut sy) = (0.0, 0.0);
            for r in r0..r0 + rh {
                for c in c0..c0 + cw {
                    sx += a.get(r, c) / scale;
                    sy += b.get(r, c) / scale;
                }
            }
            let (mx, my) = (sx / n, sy / n);
            let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
            for r in r0..r0 + rh {
                for c in c0..c0 + cw {
                    let dx = a.get(r, c) / scale - mx;
                    let dy = b.get(r, c) / scale - my;
                    vx += dx * dx;
                    vy += dy * dy;
                    cov += dx * dy;
                }
            }
            let (vx, vy, cov) = (vx / n, vy / n, cov / n);
            // sqrt(vx * vy) keeps the term exactly 1 for identical windows
            // and exactly symmetric in (a, b).
            total += (cov + c3) / ((vx * vy).sqrt() + c3);
            count += 1;
        }
    }
    let mean = total / count as f64;
    ((mean + 1.0) / 2.0).clamp(0.0, 1.0)
}
