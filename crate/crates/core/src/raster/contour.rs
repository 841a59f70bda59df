//! Moore-neighbour boundary tracing.

use super::components::connected_components;
use super::mask::BinaryMask;
use super::stroke::Polyline;
use super::NEIGHBORS8;

/// One closed polyline per component, tracing its outer boundary through
/// foreground pixels, counter-clockwise as seen on screen (y down).
///
/// Components come in label order; each loop starts at the component's first
/// row-major pixel. A single-pixel component yields a one-vertex loop.
pub fn trace_contours(mask: &BinaryMask) -> Vec<Polyline> {
    let comps = connected_components(mask);
    let w = mask.width();
    let mut out = Vec::with_capacity(comps.count);
    for id in 1..=comps.count as u32 {
        let start_idx = comps.labels.iter().position(|&l| l == id).expect("component has pixels");
        let start = ((start_idx % w) as i64, (start_idx / w) as i64);
        let inside = |x: i64, y: i64| {
            x >= 0
                && y >= 0
                && (x as usize) < w
                && (y as usize) < mask.height()
                && comps.labels[y as usize * w + x as usize] == id
        };

        let mut pts = vec![start];
        let mut cur = start;
        // The start is the first pixel in scan order, so its west neighbour is
        // outside the component.
        let mut back = 0usize;
        let mut first_step: Option<(i64, i64)> = None;
        let mut closed = false;
        // Each boundary pixel is entered at most 4 times; bound the walk.
        let limit = 4 * comps.areas[id as usize - 1] + 8;
        for _ in 0..limit {
            let mut found = None;
            for i in 1..=8 {
                let d = (back + i) % 8;
                let (dx, dy) = NEIGHBORS8[d];
                if inside(cur.0 + dx, cur.1 + dy) {
                    found = Some(d);
                    break;
                }
            }
            let Some(d) = found else { break };
            let next = (cur.0 + NEIGHBORS8[d].0, cur.1 + NEIGHBORS8[d].1);
            if cur == start {
                match first_step {
                    Some(f) if f == next => {
                        closed = true;
                        break;
                    }
                    None => first_step = Some(next),
                    _ => {}
                }
            }
            let prev = (
                cur.0 + NEIGHBORS8[(d + 7) % 8].0,
                cur.1 + NEIGHBORS8[(d + 7) % 8].1,
            );
            let rel = (prev.0 - next.0, prev.1 - next.1);
            back = NEIGHBORS8.iter().position(|&o| o == rel).expect("adjacent ring cells");
            cur = next;
            pts.push(cur);
        }
        if closed {
            pts.pop();
        }
        // The walk runs clockwise on screen; flip to counter-clockwise.
        pts[1..].reverse();
        out.push(Polyline::closed(
            pts.into_iter().map(|(x, y)| (x as f64, y as f64)).collect(),
        ));
    }
    out
}
