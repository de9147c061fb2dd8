use crate::error::{check_len, Error, Result};

/// Integral-image (summed-area table) operator on a `rows × cols` raster.
///
/// Row `i` of the operator is the indicator of the upper-left rectangle ending
/// at raster location `i`. Indices are zero-based throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct IntegralOperator {
    rows: usize,
    cols: usize,
}

impl IntegralOperator {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("integral operator needs a non-empty raster".into()));
        }
        Ok(Self { rows, cols })
    }

    pub fn square(side: usize) -> Result<Self> {
        Self::new(side, side)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inclusive 2D cumulative sum.
    pub fn apply(&self, image: &[f64]) -> Result<Vec<f64>> {
        check_len("integral transform", self.len(), image.len())?;
        let mut out = image.to_vec();
        self.apply_in_place(&mut out);
        Ok(out)
    }

    /// In-place variant of [`apply`](Self::apply); `buf` must have `len()` entries.
    pub fn apply_in_place(&self, buf: &mut [f64]) {
        let (rows, cols) = (self.rows, self.cols);
        debug_assert_eq!(buf.len(), rows * cols);
        for r in 0..rows {
            let (above, row) = buf.split_at_mut(r * cols);
            let row = &mut row[..cols];
            let mut run = 0.0;
            for v in row.iter_mut() {
                run += *v;
                *v = run;
            }
            if r > 0 {
                let prev = &above[(r - 1) * cols..];
                for (v, p) in row.iter_mut().zip(prev) {
                    *v += p;
                }
            }
        }
    }

    /// Transpose application: `out[j] = Σ_{i ⪰ j} v[i]`, the reverse inclusive
    /// cumulative sum.
    pub fn apply_transpose_in_place(&self, buf: &mut [f64]) {
        let (rows, cols) = (self.rows, self.cols);
        debug_assert_eq!(buf.len(), rows * cols);
        for r in (0..rows).rev() {
            let (head, below) = buf.split_at_mut((r + 1) * cols);
            let row = &mut head[r * cols..];
            let mut run = 0.0;
            for v in row.iter_mut().rev() {
                run += *v;
                *v = run;
            }
            if r + 1 < rows {
                for (v, b) in row.iter_mut().zip(&below[..cols]) {
                    *v += b;
                }
            }
        }
    }

    /// Row `i` of the operator as a dense 0/1 vector.
    pub fn row(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: self.len(),
            });
        }
        let (ri, ci) = (i / self.cols, i % self.cols);
        let mut h = vec![0.0; self.len()];
        for r in 0..=ri {
            for c in 0..=ci {
                h[r * self.cols + c] = 1.0;
            }
        }
        Ok(h)
    }
}

/// Sum over the `k × k` window centred at each pixel, read off the integral
/// image with the four-corner identity. Windows are cropped at the border.
pub fn box_filter_from_integral(integral: &[f64], rows: usize, cols: usize, k: usize) -> Result<Vec<f64>> {
    check_len("box filter", rows * cols, integral.len())?;
    if k.is_multiple_of(2) {
        return Err(Error::Domain(format!("box filter side must be odd, got {k}")));
    }
    if k > rows.min(cols) {
        return Err(Error::Domain(format!(
            "box filter side {k} exceeds image size {rows}x{cols}"
        )));
    }
    let half = k / 2;
    let at = |r: usize, c: usize| integral[r * cols + c];
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let r1 = r.saturating_sub(half);
        let r2 = (r + half).min(rows - 1);
        for c in 0..cols {
            let c1 = c.saturating_sub(half);
            let c2 = (c + half).min(cols - 1);
            let mut s = at(r2, c2);
            if r1 > 0 {
                s -= at(r1 - 1, c2);
            }
            if c1 > 0 {
                s -= at(r2, c1 - 1);
            }
            if r1 > 0 && c1 > 0 {
                s += at(r1 - 1, c1 - 1);
            }
            out[r * cols + c] = s;
        }
    }
    Ok(out)
}
