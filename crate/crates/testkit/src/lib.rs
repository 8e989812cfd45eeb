//! Brute-force reference computations for tests.
//!
//! Nothing here calls into `palpsim-core`: every oracle works on raw
//! positions and index triples and takes its own numerical route, so it can
//! check the engine rather than repeat it.

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub type V3 = Vector3<f64>;

fn closest_on_segment(p: &V3, a: &V3, b: &V3) -> V3 {
    let ab = b - a;
    let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    a + ab * t
}

/// Closest point on a triangle by plane projection with an inside test,
/// falling back to the three edges.
pub fn closest_on_triangle(p: &V3, a: &V3, b: &V3, c: &V3) -> V3 {
    let n = (b - a).cross(&(c - a));
    let foot = p - n * ((p - a).dot(&n) / n.norm_squared());
    let inside = [(a, b), (b, c), (c, a)]
        .iter()
        .all(|(u, v)| (*v - *u).cross(&(foot - *u)).dot(&n) >= 0.0);
    if inside {
        return foot;
    }
    [
        closest_on_segment(p, a, b),
        closest_on_segment(p, b, c),
        closest_on_segment(p, c, a),
    ]
    .into_iter()
    .min_by(|x, y| (p - x).norm_squared().total_cmp(&(p - y).norm_squared()))
    .unwrap()
}

/// Scan of every triangle: `(distance, lowest triangle id at that distance,
/// closest point)`.
pub fn brute_closest(positions: &[V3], triangles: &[[u32; 3]], p: &V3) -> (f64, usize, V3) {
    let mut best = (f64::INFINITY, usize::MAX, V3::zeros());
    for (t, tri) in triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|i| positions[i as usize]);
        let q = closest_on_triangle(p, &a, &b, &c);
        let d = (p - q).norm();
        if d < best.0 {
            best = (d, t, q);
        }
    }
    best
}

/// Möller–Trumbore crossing count along `dir`; odd means inside.
pub fn ray_parity_inside(positions: &[V3], triangles: &[[u32; 3]], p: &V3, dir: &V3) -> bool {
    let mut crossings = 0;
    for tri in triangles {
        let [a, b, c] = tri.map(|i| positions[i as usize]);
        let e1 = b - a;
        let e2 = c - a;
        let h = dir.cross(&e2);
        let det = e1.dot(&h);
        if det.abs() < 1e-14 {
            continue;
        }
        let inv = 1.0 / det;
        let s = p - a;
        let u = s.dot(&h) * inv;
        if !(0.0..=1.0).contains(&u) {
            continue;
        }
        let q = s.cross(&e1);
        let v = dir.dot(&q) * inv;
        if v < 0.0 || u + v > 1.0 {
            continue;
        }
        if e2.dot(&q) * inv > 0.0 {
            crossings += 1;
        }
    }
    crossings % 2 == 1
}

fn area_samples(positions: &[V3], triangles: &[[u32; 3]], count: usize, rng: &mut ChaCha8Rng) -> Vec<V3> {
    let areas: Vec<f64> = triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| positions[i as usize]);
            0.5 * (b - a).cross(&(c - a)).norm()
        })
        .collect();
    let total: f64 = areas.iter().sum();
    (0..count)
        .map(|_| {
            let mut r = rng.gen::<f64>() * total;
            let mut t = 0;
            while t + 1 < areas.len() && r > areas[t] {
                r -= areas[t];
                t += 1;
            }
            let [a, b, c] = triangles[t].map(|i| positions[i as usize]);
            let (mut u, mut v) = (rng.gen::<f64>(), rng.gen::<f64>());
            if u + v > 1.0 {
                u = 1.0 - u;
                v = 1.0 - v;
            }
            a + (b - a) * u + (c - a) * v
        })
        .collect()
}

/// Point-to-mesh distance by exhaustive scan, culling triangles whose
/// bounding sphere is already farther than the best hit.
fn scan_distance(spheres: &[(V3, f64)], positions: &[V3], triangles: &[[u32; 3]], p: &V3) -> f64 {
    let mut best = f64::INFINITY;
    for (tri, (centre, radius)) in triangles.iter().zip(spheres) {
        if (p - centre).norm() - radius >= best {
            continue;
        }
        let [a, b, c] = tri.map(|i| positions[i as usize]);
        best = best.min((p - closest_on_triangle(p, &a, &b, &c)).norm());
    }
    best
}

fn bounding_spheres(positions: &[V3], triangles: &[[u32; 3]]) -> Vec<(V3, f64)> {
    triangles
        .iter()
        .map(|t| {
            let [a, b, c] = t.map(|i| positions[i as usize]);
            let centre = (a + b + c) / 3.0;
            let r = [a, b, c].iter().map(|x| (x - centre).norm()).fold(0.0, f64::max);
            (centre, r)
        })
        .collect()
}

/// Symmetric Hausdorff distance from `samples` area-weighted points on each
/// surface, measured by exhaustive scan against the other surface.
pub fn brute_hausdorff(
    a: (&[V3], &[[u32; 3]]),
    b: (&[V3], &[[u32; 3]]),
    samples: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for (from, to) in [(a, b), (b, a)] {
        let spheres = bounding_spheres(to.0, to.1);
        for p in area_samples(from.0, from.1, samples, &mut rng) {
            worst = worst.max(scan_distance(&spheres, to.0, to.1, &p));
        }
    }
    worst
}

/// Peaks by definition: a non-endpoint sample that is the strict maximum of
/// every earlier sample and at least every later sample within
/// `min_separation` of it, whose topographic prominence reaches
/// `min_prominence`. Returns sample indices.
pub fn windowed_max_peaks(t: &[f64], v: &[f64], min_prominence: f64, min_separation: f64) -> Vec<usize> {
    let n = v.len();
    let mut out = Vec::new();
    for i in 1..n.saturating_sub(1) {
        let window_ok = (0..n)
            .filter(|&j| j != i && (t[j] - t[i]).abs() < min_separation)
            .all(|j| if j < i { v[j] < v[i] } else { v[j] <= v[i] });
        if !window_ok {
            continue;
        }
        // the plateau containing i must not touch either end
        let mut hi = i;
        while hi + 1 < n && v[hi + 1] == v[i] {
            hi += 1;
        }
        if hi == n - 1 || v[hi + 1] > v[i] {
            continue;
        }
        if v[i - 1] >= v[i] {
            continue;
        }
        let mut left_min = v[i];
        for j in (0..i).rev() {
            if v[j] > v[i] {
                break;
            }
            left_min = left_min.min(v[j]);
        }
        let mut right_min = v[i];
        for &x in &v[i + 1..] {
            if x > v[i] {
                break;
            }
            right_min = right_min.min(x);
        }
        if v[i] - left_min.max(right_min) >= min_prominence {
            out.push(i);
        }
    }
    out
}

/// Pearson chi-square goodness-of-fit p-value against a uniform expectation.
pub fn chi_square_uniform_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_triangle_projection() {
        let (a, b, c) = (V3::zeros(), V3::x(), V3::y());
        let q = closest_on_triangle(&V3::new(0.2, 0.2, 5.0), &a, &b, &c);
        assert!((q - V3::new(0.2, 0.2, 0.0)).norm() < 1e-15);
        let q = closest_on_triangle(&V3::new(2.0, -1.0, 0.0), &a, &b, &c);
        assert!((q - V3::x()).norm() < 1e-15);
    }

    #[test]
    fn windowed_peaks_simple() {
        let t: Vec<f64> = (0..7).map(|i| i as f64).collect();
        let v = [0.0, 1.0, 0.0, 0.0, 2.0, 2.0, 0.0];
        assert_eq!(windowed_max_peaks(&t, &v, 0.5, 1.5), vec![1, 4]);
        let ramp = [0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        assert!(windowed_max_peaks(&t, &ramp, 0.1, 1.0).is_empty());
    }

    #[test]
    fn chi_square_of_exact_uniform_is_one() {
        assert!((chi_square_uniform_p(&[10, 10, 10, 10]) - 1.0).abs() < 1e-12);
    }
}
