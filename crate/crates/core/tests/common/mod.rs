//! Naive full-search block matcher written from the matching rules alone:
//! per-pixel SAD over every admissible shift, smallest shift on ties,
//! uniqueness against costs more than one shift away, and a three-point
//! parabola snapped to the subpixel lattice.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slsim::sensor::Orientation;
use slsim::stereo::{match_image_offset, BlockMatch, MatchParams, SubpixelMethod};
use slsim::Grid;

pub fn naive(
    is: &Grid<u8>,
    it: &Grid<u8>,
    origin: usize,
    search: (i32, i32),
    vertical: bool,
    p: &MatchParams,
) -> Grid<Option<BlockMatch>> {
    // work in "rows along the epipolar axis" coordinates
    let get = |g: &Grid<u8>, a: i64, b: i64| -> i64 {
        if vertical {
            *g.get(b as usize, a as usize) as i64
        } else {
            *g.get(a as usize, b as usize) as i64
        }
    };
    let (along, across) = if vertical { (is.height(), is.width()) } else { (is.width(), is.height()) };
    let ref_along = if vertical { it.height() } else { it.width() };
    let r = (p.window / 2) as i64;
    let mut out = Grid::new(is.width(), is.height(), None);
    for b in r..across as i64 - r {
        for a in r..along as i64 - r {
            let mut lo_v = i64::MAX;
            let mut hi_v = i64::MIN;
            for j in -r..=r {
                for i in -r..=r {
                    let v = get(is, a + i, b + j);
                    lo_v = lo_v.min(v);
                    hi_v = hi_v.max(v);
                }
            }
            if hi_v - lo_v < p.min_texture as i64 {
                continue;
            }
            let mut costs: Vec<(i64, i64)> = Vec::new();
            for s in search.0 as i64..=search.1 as i64 {
                let c = a + origin as i64 + s;
                if c - r < 0 || c + r >= ref_along as i64 {
                    continue;
                }
                let mut sad = 0;
                for j in -r..=r {
                    for i in -r..=r {
                        sad += (get(is, a + i, b + j) - get(it, c + i, b + j)).abs();
                    }
                }
                costs.push((s, sad));
            }
            if costs.is_empty() {
                continue;
            }
            let mut k = 0;
            for (idx, &(_, c)) in costs.iter().enumerate() {
                if c < costs[k].1 {
                    k = idx;
                }
            }
            let (shift, best) = costs[k];
            let second = costs
                .iter()
                .filter(|(s, _)| (s - shift).abs() > 1)
                .map(|&(_, c)| c)
                .min();
            if let Some(second) = second {
                if second == 0 || best as f64 > p.uniqueness_ratio * second as f64 {
                    continue;
                }
            }
            let den = p.subpixel_denominator as i64;
            let mut steps = shift * den;
            if p.subpixel == SubpixelMethod::Parabolic && best > 0 && k > 0 && k + 1 < costs.len() {
                let (cm, cp) = (costs[k - 1].1 as f64, costs[k + 1].1 as f64);
                let curv = cm - 2.0 * best as f64 + cp;
                if curv > 0.0 {
                    steps += ((cm - cp) / (2.0 * curv) * den as f64).round() as i64;
                }
            }
            let (x, y) = if vertical { (b, a) } else { (a, b) };
            out.set(
                x as usize,
                y as usize,
                Some(BlockMatch {
                    shift: shift as i32,
                    steps,
                    cost: best as u32,
                }),
            );
        }
    }
    out
}

/// Reference image of the given size; with `shift` it is the capture moved
/// along the epipolar axis plus a little noise, otherwise independent.
pub fn pair(rng: &mut ChaCha8Rng, w: usize, h: usize, extra: usize, vertical: bool) -> (Grid<u8>, Grid<u8>, usize) {
    let levels: u8 = *[2u8, 4, 16, 255].get(rng.random_range(0..4)).unwrap();
    let is = Grid::from_fn(w, h, |_, _| rng.random_range(0..=levels));
    let origin = rng.random_range(0..=extra);
    let (rw, rh) = if vertical { (w, h + extra) } else { (w + extra, h) };
    let it = if rng.random_bool(0.7) {
        let shift = rng.random_range(-6i64..=6);
        let noise = rng.random_range(0..3u8);
        Grid::from_fn(rw, rh, |x, y| {
            let (a, b) = if vertical { (y as i64, x as i64) } else { (x as i64, y as i64) };
            let src = a - origin as i64 - shift;
            let along = if vertical { h } else { w } as i64;
            let base = if (0..along).contains(&src) {
                if vertical {
                    *is.get(b as usize, src as usize)
                } else {
                    *is.get(src as usize, b as usize)
                }
            } else {
                rng.random_range(0..=levels)
            };
            base.saturating_add(rng.random_range(0..=noise))
        })
    } else {
        Grid::from_fn(rw, rh, |_, _| rng.random_range(0..=levels))
    };
    (is, it, origin)
}

/// Outcome of comparing the optimized matcher with [`naive`] on random
/// image pairs.
pub struct OracleRun {
    pub pixels: usize,
    pub matched: usize,
    pub mismatches: Vec<String>,
}

/// `pairs` random pairs up to 64x64 with random window, search range,
/// origin, orientation and matching parameters.
pub fn compare_random_pairs(pairs: usize, seed: u64) -> OracleRun {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut run = OracleRun {
        pixels: 0,
        matched: 0,
        mismatches: Vec::new(),
    };
    for case in 0..pairs {
        let window = [3usize, 5, 7, 9][rng.random_range(0..4)];
        let w = rng.random_range(window..=64);
        let h = rng.random_range(window..=64);
        let vertical = rng.random_bool(0.3);
        let extra = if rng.random_bool(0.5) { 0 } else { rng.random_range(0..20) };
        let (is, it, origin) = pair(&mut rng, w, h, extra, vertical);
        let lo = rng.random_range(-20..=5);
        let search = (lo, lo + rng.random_range(0..30));
        let params = MatchParams {
            window,
            subpixel_denominator: [1u32, 2, 8, 16][rng.random_range(0..4)],
            uniqueness_ratio: [1.0, 0.9, 0.8, 0.5][rng.random_range(0..4)],
            min_texture: rng.random_range(0..4),
            subpixel: if rng.random_bool(0.8) { SubpixelMethod::Parabolic } else { SubpixelMethod::None },
        };
        let orientation = if vertical { Orientation::Vertical } else { Orientation::Horizontal };
        let fast = match_image_offset(&is, &it, origin, search, orientation, &params);
        let slow = naive(&is, &it, origin, search, vertical, &params);
        for y in 0..h {
            for x in 0..w {
                if fast.get(x, y) != slow.get(x, y) {
                    run.mismatches.push(format!(
                        "case {case} at ({x}, {y}): {:?} vs {:?} ({w}x{h}, window {window}, search {search:?}, origin {origin})",
                        fast.get(x, y),
                        slow.get(x, y)
                    ));
                }
                run.pixels += 1;
                run.matched += slow.get(x, y).is_some() as usize;
            }
        }
    }
    run
}
