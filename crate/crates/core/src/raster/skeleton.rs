//! Zhang–Suen two-subiteration thinning.

use super::components::{connected_components, deepest_pixel};
use super::mask::BinaryMask;

/// Thins `mask` to a one-pixel-wide 8-connected skeleton.
///
/// Components that plain Zhang–Suen erases completely (2×2 blocks and the
/// like) keep their deepest interior pixel, so every input component is
/// represented. The result is a fixed point: thinning it again changes
/// nothing.
pub fn skeletonize(mask: &BinaryMask) -> BinaryMask {
    let (w, h) = mask.dims();
    let mut img = mask.clone();
    let mut marked = Vec::new();
    loop {
        let mut changed = false;
        for step in 0..2 {
            marked.clear();
            for y in 0..h {
                for x in 0..w {
                    if img.get(x, y) && deletable(&img, x as i64, y as i64, step) {
                        marked.push(y * w + x);
                    }
                }
            }
            changed |= !marked.is_empty();
            for &i in &marked {
                img.set_index(i, false);
            }
        }
        if !changed {
            break;
        }
    }

    let comps = connected_components(mask);
    for id in 1..=comps.count {
        let region = comps.component_mask(id);
        if region.intersection_count(&img).unwrap_or(0) == 0 {
            if let Some((x, y)) = deepest_pixel(&region) {
                img.set(x, y, true);
            }
        }
    }
    img
}

fn deletable(img: &BinaryMask, x: i64, y: i64, step: usize) -> bool {
    // P2..P9: N, NE, E, SE, S, SW, W, NW
    let p = [
        img.get_signed(x, y - 1),
        img.get_signed(x + 1, y - 1),
        img.get_signed(x + 1, y),
        img.get_signed(x + 1, y + 1),
        img.get_signed(x, y + 1),
        img.get_signed(x - 1, y + 1),
        img.get_signed(x - 1, y),
        img.get_signed(x - 1, y - 1),
    ];
    let b = p.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) {
        return false;
    }
    let a = (0..8).filter(|&i| !p[i] && p[(i + 1) % 8]).count();
    if a != 1 {
        return false;
    }
    let (n, e, s, wst) = (p[0], p[2], p[4], p[6]);
    if step == 0 {
        !(n && e && s) && !(e && s && wst)
    } else {
        !(n && e && wst) && !(n && s && wst)
    }
}
