//! Binary morphology and connected-component labeling.

use crate::raster::{BitMask, LabelMap};

fn disk_offsets(radius: usize) -> Vec<(isize, isize)> {
    let r = radius as isize;
    let r2 = (radius * radius) as isize;
    let mut offs = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r2 {
                offs.push((dx, dy));
            }
        }
    }
    offs
}

/// Dilation with a Euclidean disk; out-of-bounds counts as background.
pub fn dilate(mask: &BitMask, radius: usize) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let offs = disk_offsets(radius);
    let mut out = BitMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let hit = offs.iter().any(|&(dx, dy)| {
                let sx = x as isize + dx;
                let sy = y as isize + dy;
                sx >= 0
                    && sy >= 0
                    && (sx as usize) < w
                    && (sy as usize) < h
                    && mask.get(sx as usize, sy as usize)
            });
            out.set(x, y, hit);
        }
    }
    out
}

/// Erosion with a Euclidean disk; out-of-bounds counts as foreground, so
/// closing does not erode at the image border.
pub fn erode(mask: &BitMask, radius: usize) -> BitMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let offs = disk_offsets(radius);
    let mut out = BitMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let all = offs.iter().all(|&(dx, dy)| {
                let sx = x as isize + dx;
                let sy = y as isize + dy;
                if sx < 0 || sy < 0 || sx as usize >= w || sy as usize >= h {
                    true
                } else {
                    mask.get(sx as usize, sy as usize)
                }
            });
            out.set(x, y, all);
        }
    }
    out
}

/// Closing: dilation followed by erosion. Radius 0 is the identity.
pub fn morph_close(mask: &BitMask, radius: usize) -> BitMask {
    erode(&dilate(mask, radius), radius)
}

/// Fills background regions not 4-connected to the image border.
pub fn fill_holes(mask: &BitMask) -> BitMask {
    let (w, h) = (mask.width(), mask.height());
    let mut reached = vec![false; w * h];
    let mut stack: Vec<(usize, usize)> = Vec::new();
    let push = |stack: &mut Vec<(usize, usize)>, reached: &mut Vec<bool>, x: usize, y: usize| {
        let i = y * w + x;
        if !mask.get(x, y) && !reached[i] {
            reached[i] = true;
            stack.push((x, y));
        }
    };
    for x in 0..w {
        push(&mut stack, &mut reached, x, 0);
        push(&mut stack, &mut reached, x, h - 1);
    }
    for y in 0..h {
        push(&mut stack, &mut reached, 0, y);
        push(&mut stack, &mut reached, w - 1, y);
    }
    while let Some((x, y)) = stack.pop() {
        if x > 0 {
            push(&mut stack, &mut reached, x - 1, y);
        }
        if x + 1 < w {
            push(&mut stack, &mut reached, x + 1, y);
        }
        if y > 0 {
            push(&mut stack, &mut reached, x, y - 1);
        }
        if y + 1 < h {
            push(&mut stack, &mut reached, x, y + 1);
        }
    }
    let bits = (0..w * h)
        .map(|i| mask.bits()[i] || !reached[i])
        .collect();
    BitMask::new(w, h, bits).expect("same dims")
}

/// 8-connected labeling; labels 1..=K assigned in raster-scan
/// first-encounter order, background 0.
pub fn connected_components(mask: &BitMask) -> LabelMap {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            let i0 = y0 * w + x0;
            if !mask.bits()[i0] || labels[i0] != 0 {
                continue;
            }
            next += 1;
            labels[i0] = next;
            stack.push((x0, y0));
            while let Some((x, y)) = stack.pop() {
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        if dx == 0 && dy == 0 {
                            continue;
                        }
                        let nx = x as isize + dx;
                        let ny = y as isize + dy;
                        if nx < 0 || ny < 0 || nx as usize >= w || ny as usize >= h {
                            continue;
                        }
                        let ni = ny as usize * w + nx as usize;
                        if mask.bits()[ni] && labels[ni] == 0 {
                            labels[ni] = next;
                            stack.push((nx as usize, ny as usize));
                        }
                    }
                }
            }
        }
    }
    LabelMap::from_parts(w, h, labels, next)
}

/// Mask of the largest component; ties go to the smallest label.
/// An all-background labeling yields an empty mask.
pub fn largest_component(labels: &LabelMap) -> BitMask {
    let k = labels.num_labels() as usize;
    let (w, h) = (labels.width(), labels.height());
    if k == 0 {
        return BitMask::filled(w, h, false);
    }
    let mut counts = vec![0usize; k + 1];
    for &l in labels.labels() {
        counts[l as usize] += 1;
    }
    let mut best = 1usize;
    for l in 2..=k {
        if counts[l] > counts[best] {
            best = l;
        }
    }
    let bits = labels.labels().iter().map(|&l| l as usize == best).collect();
    BitMask::new(w, h, bits).expect("same dims")
}
