//! Shape descriptors and stroke geometry helpers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{interior_depth, skeletonize, BBox, BinaryMask, Polyline};

/// Geometric cues of one connected region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    pub area: usize,
    pub bbox: BBox,
    /// Maximum interior distance to the region boundary.
    pub depth: f64,
    /// Area over convex-hull area, with pixels taken as unit squares.
    pub solidity: f64,
}

pub fn component_stats(region: &BinaryMask) -> Result<ComponentStats> {
    let mut bbox: Option<BBox> = None;
    let mut area = 0;
    // Convex hull of pixel squares only depends on each row's extreme pixels.
    let mut corners: Vec<(i64, i64)> = Vec::new();
    for y in 0..region.height() {
        let mut row = (0..region.width()).filter(|&x| region.get(x, y));
        let Some(first) = row.next() else { continue };
        let last = row.next_back().unwrap_or(first);
        area += (first..=last).filter(|&x| region.get(x, y)).count();
        for x in [first, last] {
            let (xi, yi) = (x as i64, y as i64);
            corners.extend([(xi, yi), (xi + 1, yi), (xi, yi + 1), (xi + 1, yi + 1)]);
        }
        let b = bbox.get_or_insert(BBox {
            min_x: first,
            min_y: y,
            max_x: last,
            max_y: y,
        });
        b.min_x = b.min_x.min(first);
        b.max_x = b.max_x.max(last);
        b.max_y = y;
    }
    let bbox = bbox.ok_or(Error::EmptyRegion)?;
    let hull = convex_hull(corners);
    let hull_area = polygon_area2(&hull) as f64 / 2.0;
    let depth = interior_depth(region).max_finite().unwrap_or(0.0);
    Ok(ComponentStats {
        area,
        bbox,
        depth,
        solidity: area as f64 / hull_area,
    })
}

fn cross(o: (i64, i64), a: (i64, i64), b: (i64, i64)) -> i64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Andrew's monotone chain; returns the hull without repeated endpoints.
fn convex_hull(mut pts: Vec<(i64, i64)>) -> Vec<(i64, i64)> {
    pts.sort_unstable();
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<(i64, i64)> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<(i64, i64)> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

fn polygon_area2(poly: &[(i64, i64)]) -> i64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<i64>()
        .abs()
}

/// Decomposes the skeleton of `region` into pixel paths covering every
/// skeleton pixel. Walks start at endpoints when possible and prefer
/// 4-neighbours, so straight runs become single paths.
pub fn centerline_paths(region: &BinaryMask) -> Vec<Polyline> {
    let skel = skeletonize(region);
    let (w, h) = skel.dims();
    let mut visited = vec![false; w * h];
    const ORDER: [(i64, i64); 8] = [(1, 0), (0, 1), (-1, 0), (0, -1), (1, 1), (-1, 1), (-1, -1), (1, -1)];

    let unvisited_neighbors = |visited: &[bool], x: i64, y: i64| {
        ORDER
            .iter()
            .filter(|(dx, dy)| {
                let (nx, ny) = (x + dx, y + dy);
                skel.get_signed(nx, ny) && !visited[ny as usize * w + nx as usize]
            })
            .count()
    };

    let mut paths = Vec::new();
    loop {
        let pending: Vec<usize> = (0..w * h).filter(|&i| skel.get_index(i) && !visited[i]).collect();
        if pending.is_empty() {
            break;
        }
        let start = pending
            .iter()
            .copied()
            .find(|&i| unvisited_neighbors(&visited, (i % w) as i64, (i / w) as i64) <= 1)
            .unwrap_or(pending[0]);
        let mut cur = ((start % w) as i64, (start / w) as i64);
        visited[start] = true;
        let mut pts = vec![(cur.0 as f64, cur.1 as f64)];
        loop {
            let next = ORDER.iter().map(|(dx, dy)| (cur.0 + dx, cur.1 + dy)).find(|&(nx, ny)| {
                skel.get_signed(nx, ny) && !visited[ny as usize * w + nx as usize]
            });
            let Some(n) = next else { break };
            visited[n.1 as usize * w + n.0 as usize] = true;
            pts.push((n.0 as f64, n.1 as f64));
            cur = n;
        }
        if pts.len() == 1 {
            pts.push(pts[0]);
        }
        paths.push(Polyline::open(pts));
    }
    paths
}

/// Offsets each vertex along the local normal by
/// `amplitude * sin(2π s / period + phase)`, `s` being arc length.
pub fn wave_path(path: &Polyline, amplitude: f64, period: f64, phase: f64) -> Polyline {
    let pts = path.points();
    let n = pts.len();
    if n < 3 || amplitude == 0.0 {
        return path.clone();
    }
    let mut s = 0.0;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        if i > 0 {
            s += ((pts[i].0 - pts[i - 1].0).powi(2) + (pts[i].1 - pts[i - 1].1).powi(2)).sqrt();
        }
        let a = pts[i.saturating_sub(2)];
        let b = pts[(i + 2).min(n - 1)];
        let (tx, ty) = (b.0 - a.0, b.1 - a.1);
        let norm = (tx * tx + ty * ty).sqrt();
        let (nx, ny) = if norm > 0.0 { (-ty / norm, tx / norm) } else { (0.0, 0.0) };
        let off = amplitude * (std::f64::consts::TAU * s / period + phase).sin();
        out.push((pts[i].0 + off * nx, pts[i].1 + off * ny));
    }
    Polyline::open(out)
}
