use rand::Rng;

use super::geometry::{centerline_paths, component_stats, wave_path};
use super::params::{select_style, GenParams, ScribbleStyle};
use super::perturb::perturb_stroke;
use crate::error::{Error, Result};
use crate::raster::{
    connected_components, deepest_pixel, interior_depth, rasterize_stroke, trace_contours, BinaryMask,
    Polyline, ScribbleMap,
};
use crate::rng::stream;

/// Synthesizes positive scribbles for every component of `gt` whose area is
/// at least `params.min_component_area`.
///
/// Every qualifying component receives at least one stroke pixel and all
/// stroke pixels lie inside `gt`. Each component draws from its own random
/// stream keyed by its first pixel, so dropping other components from the
/// mask does not change its strokes.
pub fn generate_scribble<R: Rng + ?Sized>(
    gt: &BinaryMask,
    style: ScribbleStyle,
    params: &GenParams,
    rng: &mut R,
) -> Result<ScribbleMap> {
    params.validate()?;
    if style == ScribbleStyle::Line {
        return Err(Error::invalid("line style only produces negative strokes"));
    }
    let (w, h) = gt.dims();
    let comps = connected_components(gt);
    let qualifying: Vec<usize> = (1..=comps.count)
        .filter(|&id| comps.areas[id - 1] >= params.min_component_area)
        .collect();
    if qualifying.is_empty() {
        return Err(Error::TargetTooSmall {
            min_area: params.min_component_area,
        });
    }
    let base: u64 = rng.gen();
    let mut positive = BinaryMask::new(w, h);
    for id in qualifying {
        let region = comps.component_mask(id);
        let key = first_pixel_index(&region);
        let mut crng = stream(base, &[key]);
        let resolved = match style {
            ScribbleStyle::Adaptive => select_style(&component_stats(&region)?, params),
            s => s,
        };
        let strokes = match resolved {
            ScribbleStyle::Wave => {
                let phase = crng.gen_range(0.0..std::f64::consts::TAU);
                centerline_paths(&region)
                    .iter()
                    .map(|p| wave_path(p, params.wave_amplitude, params.wave_period, phase))
                    .collect()
            }
            ScribbleStyle::Contour => contour_paths(&region, params.contour_inward_offset),
            _ => centerline_paths(&region),
        };
        let drawn = draw_clipped(&region, &strokes, params, &mut crng)?;
        positive = positive.or(&drawn)?;
    }
    Ok(ScribbleMap::from_positive(positive))
}

/// Synthesizes cross-out strokes over every component of `region`: an X
/// through the deepest pixel, or a single line along the long axis when the
/// component is less than three pixels across.
pub fn generate_negative<R: Rng + ?Sized>(
    region: &BinaryMask,
    params: &GenParams,
    rng: &mut R,
) -> Result<ScribbleMap> {
    params.validate()?;
    if region.count() == 0 {
        return Err(Error::EmptyRegion);
    }
    let (w, h) = region.dims();
    let comps = connected_components(region);
    let base: u64 = rng.gen();
    let mut negative = BinaryMask::new(w, h);
    for id in 1..=comps.count {
        let comp = comps.component_mask(id);
        let mut crng = stream(base, &[first_pixel_index(&comp)]);
        let (cx, cy) = deepest_pixel(&comp).ok_or(Error::EmptyRegion)?;
        let bbox = comps.bboxes[id - 1];
        let centre = (cx as f64, cy as f64);
        let directions: Vec<f64> = if bbox.width() >= 3 && bbox.height() >= 3 {
            let tilt = crng.gen_range(-0.25..0.25);
            vec![std::f64::consts::FRAC_PI_4 + tilt, 3.0 * std::f64::consts::FRAC_PI_4 + tilt]
        } else if bbox.width() >= bbox.height() {
            vec![0.0]
        } else {
            vec![std::f64::consts::FRAC_PI_2]
        };
        let strokes: Vec<Polyline> = directions
            .into_iter()
            .map(|theta| chord_through(&comp, centre, theta))
            .collect();
        let drawn = draw_clipped(&comp, &strokes, params, &mut crng)?;
        negative = negative.or(&drawn)?;
    }
    Ok(ScribbleMap::from_negative(negative))
}

fn first_pixel_index(region: &BinaryMask) -> u64 {
    region.bits().iter().position(|&b| b).unwrap_or(0) as u64
}

/// Closed loops tracing the level set `depth > offset * max_depth`. Falls
/// back to centerlines when the level set is empty.
fn contour_paths(region: &BinaryMask, offset: f64) -> Vec<Polyline> {
    let depth = interior_depth(region);
    let level = offset * depth.max_finite().unwrap_or(0.0);
    let (w, h) = region.dims();
    let inner = BinaryMask::from_fn(w, h, |x, y| depth.get(x, y) > level);
    let loops: Vec<Polyline> = trace_contours(&inner)
        .into_iter()
        .map(|p| {
            if p.len() < 3 {
                let mut pts = p.points().to_vec();
                pts.push(pts[0]);
                Polyline::open(pts)
            } else {
                p
            }
        })
        .collect();
    if loops.is_empty() {
        centerline_paths(region)
    } else {
        loops
    }
}

/// Segment through `centre` at angle `theta`, extended in both directions
/// while the rounded sample stays inside `comp`.
fn chord_through(comp: &BinaryMask, centre: (f64, f64), theta: f64) -> Polyline {
    let (dx, dy) = (theta.cos(), theta.sin());
    let reach = |sign: f64| {
        let mut t = 0.0;
        loop {
            let nt = t + 0.5;
            let x = (centre.0 + sign * nt * dx).round() as i64;
            let y = (centre.1 + sign * nt * dy).round() as i64;
            if !comp.get_signed(x, y) {
                return t;
            }
            t = nt;
        }
    };
    let (a, b) = (reach(-1.0), reach(1.0));
    Polyline::open(vec![
        (centre.0 - a * dx, centre.1 - a * dy),
        (centre.0 + b * dx, centre.1 + b * dy),
    ])
}

/// Rasterizes perturbed strokes and clips them to `region`.
///
/// A perturbed stroke is dropped when it keeps less than half of the pixels
/// its unperturbed version covers inside the region. If nothing survives the
/// unperturbed strokes are used, and failing that the deepest pixel.
fn draw_clipped<R: Rng + ?Sized>(
    region: &BinaryMask,
    strokes: &[Polyline],
    params: &GenParams,
    rng: &mut R,
) -> Result<BinaryMask> {
    let dims = region.dims();
    let mut drawn = BinaryMask::new(dims.0, dims.1);
    let mut fallback = BinaryMask::new(dims.0, dims.1);
    for stroke in strokes {
        let jittered = perturb_stroke(stroke, params.perturb_sigma, rng);
        let reference = rasterize_stroke(dims, stroke, params.stroke_width)?.and(region)?;
        let kept = rasterize_stroke(dims, &jittered, params.stroke_width)?.and(region)?;
        if kept.count() * 2 >= reference.count() && kept.count() > 0 {
            drawn = drawn.or(&kept)?;
        }
        fallback = fallback.or(&reference)?;
    }
    if drawn.count() == 0 {
        drawn = fallback;
    }
    if drawn.count() == 0 {
        let (x, y) = deepest_pixel(region).ok_or(Error::EmptyRegion)?;
        drawn.set(x, y, true);
    }
    Ok(drawn)
}
