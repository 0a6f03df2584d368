use crate::sensors::Mask;

/// Hu invariants smaller than this in magnitude are skipped, as in
/// OpenCV's `matchShapes`.
const HU_EPS: f64 = 1e-5;

/// The seven Hu moment invariants of a binary mask (pixel centers as
/// sample points). `None` for an empty mask.
pub fn hu_moments(mask: &Mask) -> Option<[f64; 7]> {
    let (mut m00, mut m10, mut m01) = (0.0, 0.0, 0.0);
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if mask.get(r, c) {
                m00 += 1.0;
                m10 += c as f64;
                m01 += r as f64;
            }
        }
    }
    if m00 == 0.0 {
        return None;
    }
    let (xb, yb) = (m10 / m00, m01 / m00);
    let mut mu = [[0.0f64; 4]; 4];
    for r in 0..mask.height() {
        for c in 0..mask.width() {
            if !mask.get(r, c) {
                continue;
            }
            let (dx, dy) = (c as f64 - xb, r as f64 - yb);
            for (p, row) in mu.iter_mut().enumerate() {
                for (q, slot) in row.iter_mut().enumerate() {
                    if (2..=3).contains(&(p + q)) {
                        *slot += dx.powi(p as i32) * dy.powi(q as i32);
                    }
                }
            }
        }
    }
    let eta = |p: usize, q: usize| mu[p][q] / m00.powf(1.0 + (p + q) as f64 / 2.0);
    let (n20, n02, n11) = (eta(2, 0), eta(0, 2), eta(1, 1));
    let (n30, n03, n21, n12) = (eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2));

    let a = n30 + n12;
    let b = n21 + n03;
    let h1 = n20 + n02;
    let h2 = (n20 - n02).powi(2) + 4.0 * n11 * n11;
    let h3 = (n30 - 3.0 * n12).powi(2) + (3.0 * n21 - n03).powi(2);
    let h4 = a * a + b * b;
    let h5 = (n30 - 3.0 * n12) * a * (a * a - 3.0 * b * b) + (3.0 * n21 - n03) * b * (3.0 * a * a - b * b);
    let h6 = (n20 - n02) * (a * a - b * b) + 4.0 * n11 * a * b;
    let h7 = (3.0 * n21 - n03) * a * (a * a - 3.0 * b * b) - (n30 - 3.0 * n12) * b * (3.0 * a * a - b * b);
    Some([h1, h2, h3, h4, h5, h6, h7])
}

/// `sum_i |m_i(A) - m_i(B)|` with `m = sign(h) * log10|h|` over Hu
/// invariants that are significant in both masks.
///
/// Two empty masks are at distance 0; an empty mask against a non-empty
/// one has no defined distance.
pub fn moment_shape_distance(a: &Mask, b: &Mask) -> Option<f64> {
    match (hu_moments(a), hu_moments(b)) {
        (None, None) => Some(0.0),
        (Some(ha), Some(hb)) => {
            let log_scale = |h: f64| h.signum() * h.abs().log10();
            let d = ha
                .iter()
                .zip(&hb)
                .filter(|(x, y)| x.abs() > HU_EPS && y.abs() > HU_EPS)
                .map(|(&x, &y)| (log_scale(x) - log_scale(y)).abs())
                .sum();
            Some(d)
        }
        _ => None,
    }
}
