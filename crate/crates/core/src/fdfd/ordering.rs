//! Geometric nested-dissection ordering for 5-point grid graphs.

/// Elimination order for an `nx × ny` row-major grid: `order[new] = old`.
///
/// Rectangles are split across their longer side by a one-cell separator
/// that is numbered after both halves; small blocks keep natural order.
pub fn nested_dissection(nx: usize, ny: usize) -> Vec<usize> {
    let mut order = Vec::with_capacity(nx * ny);
    dissect(nx, 0, nx, 0, ny, &mut order);
    order
}

const LEAF: usize = 16;

fn dissect(nx: usize, x0: usize, x1: usize, y0: usize, y1: usize, out: &mut Vec<usize>) {
    let w = x1 - x0;
    let h = y1 - y0;
    if w == 0 || h == 0 {
        return;
    }
    if w * h <= LEAF || (w < 3 && h < 3) {
        for iy in y0..y1 {
            for ix in x0..x1 {
                out.push(iy * nx + ix);
            }
        }
        return;
    }
    if w >= h {
        let mid = x0 + w / 2;
        dissect(nx, x0, mid, y0, y1, out);
        dissect(nx, mid + 1, x1, y0, y1, out);
        for iy in y0..y1 {
            out.push(iy * nx + mid);
        }
    } else {
        let mid = y0 + h / 2;
        dissect(nx, x0, x1, y0, mid, out);
        dissect(nx, x0, x1, mid + 1, y1, out);
        for ix in x0..x1 {
            out.push(mid * nx + ix);
        }
    }
}

/// Inverse permutation.
pub fn invert(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (new, &old) in order.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn is_a_permutation() {
        for &(nx, ny) in &[(1, 1), (3, 7), (16, 16), (37, 21), (100, 3)] {
            let mut o = nested_dissection(nx, ny);
            assert_eq!(o.len(), nx * ny);
            o.sort_unstable();
            assert!(o.iter().enumerate().all(|(i, &v)| i == v));
        }
    }

    #[test]
    fn separator_comes_last() {
        let o = nested_dissection(9, 9);
        // Top-level separator is column 4, ordered after both halves.
        let tail: Vec<usize> = o[o.len() - 9..].to_vec();
        assert!(tail.iter().all(|&k| k % 9 == 4));
    }
}
