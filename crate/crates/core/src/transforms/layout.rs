use crate::error::{check_len, Error, Result};

/// Tiling of an image into non-overlapping `f × f` blocks.
///
/// Blocks are numbered in raster order of the block grid and pixels inside a
/// block are stored in raster order. Source images whose sides are not
/// multiples of `f` are centre-cropped to the largest multiple; the crop window
/// is recorded here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BlockLayout {
    source_rows: usize,
    source_cols: usize,
    image_rows: usize,
    image_cols: usize,
    block_side: usize,
    crop_top: usize,
    crop_left: usize,
}

impl BlockLayout {
    /// Layout for an image whose sides are exact multiples of `block_side`.
    pub fn new(image_rows: usize, image_cols: usize, block_side: usize) -> Result<Self> {
        if block_side == 0 {
            return Err(Error::Domain("block side must be positive".into()));
        }
        if image_rows == 0
            || image_cols == 0
            || !image_rows.is_multiple_of(block_side)
            || !image_cols.is_multiple_of(block_side)
        {
            return Err(Error::Domain(format!(
                "image {image_rows}x{image_cols} is not tiled by {block_side}x{block_side} blocks"
            )));
        }
        Ok(Self {
            source_rows: image_rows,
            source_cols: image_cols,
            image_rows,
            image_cols,
            block_side,
            crop_top: 0,
            crop_left: 0,
        })
    }

    /// Layout that centre-crops a `source_rows × source_cols` image to whole blocks.
    pub fn center_cropped(source_rows: usize, source_cols: usize, block_side: usize) -> Result<Self> {
        if block_side == 0 {
            return Err(Error::Domain("block side must be positive".into()));
        }
        let image_rows = source_rows / block_side * block_side;
        let image_cols = source_cols / block_side * block_side;
        if image_rows == 0 || image_cols == 0 {
            return Err(Error::Domain(format!(
                "image {source_rows}x{source_cols} is smaller than one {block_side}x{block_side} block"
            )));
        }
        Ok(Self {
            source_rows,
            source_cols,
            image_rows,
            image_cols,
            block_side,
            crop_top: (source_rows - image_rows) / 2,
            crop_left: (source_cols - image_cols) / 2,
        })
    }

    pub fn image_rows(&self) -> usize {
        self.image_rows
    }

    pub fn image_cols(&self) -> usize {
        self.image_cols
    }

    pub fn image_len(&self) -> usize {
        self.image_rows * self.image_cols
    }

    pub fn source_dims(&self) -> (usize, usize) {
        (self.source_rows, self.source_cols)
    }

    pub fn crop_offset(&self) -> (usize, usize) {
        (self.crop_top, self.crop_left)
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn block_len(&self) -> usize {
        self.block_side * self.block_side
    }

    pub fn blocks_down(&self) -> usize {
        self.image_rows / self.block_side
    }

    pub fn blocks_across(&self) -> usize {
        self.image_cols / self.block_side
    }

    pub fn block_count(&self) -> usize {
        self.blocks_down() * self.blocks_across()
    }

    /// Applies the recorded crop to a source-sized raster.
    pub fn crop(&self, source: &[f64]) -> Result<Vec<f64>> {
        check_len("crop", self.source_rows * self.source_cols, source.len())?;
        let mut out = Vec::with_capacity(self.image_len());
        for r in 0..self.image_rows {
            let start = (r + self.crop_top) * self.source_cols + self.crop_left;
            out.extend_from_slice(&source[start..start + self.image_cols]);
        }
        Ok(out)
    }

    /// Raster offset of the top-left pixel of block `b`.
    fn block_origin(&self, b: usize) -> usize {
        let f = self.block_side;
        let (br, bc) = (b / self.blocks_across(), b % self.blocks_across());
        br * f * self.image_cols + bc * f
    }

    /// Copies block `b` of `image` into `out` (length `f²`).
    pub fn read_block(&self, image: &[f64], b: usize, out: &mut [f64]) {
        let f = self.block_side;
        let origin = self.block_origin(b);
        for r in 0..f {
            let src = origin + r * self.image_cols;
            out[r * f..(r + 1) * f].copy_from_slice(&image[src..src + f]);
        }
    }

    /// Writes `block` (length `f²`) into block position `b` of `image`.
    pub fn write_block(&self, block: &[f64], b: usize, image: &mut [f64]) {
        let f = self.block_side;
        let origin = self.block_origin(b);
        for r in 0..f {
            let dst = origin + r * self.image_cols;
            image[dst..dst + f].copy_from_slice(&block[r * f..(r + 1) * f]);
        }
    }
}

pub fn partition_blocks(image: &[f64], layout: &BlockLayout) -> Result<Vec<Vec<f64>>> {
    check_len("partition", layout.image_len(), image.len())?;
    Ok((0..layout.block_count())
        .map(|b| {
            let mut block = vec![0.0; layout.block_len()];
            layout.read_block(image, b, &mut block);
            block
        })
        .collect())
}

pub fn reassemble_blocks(blocks: &[Vec<f64>], layout: &BlockLayout) -> Result<Vec<f64>> {
    check_len("reassemble (block count)", layout.block_count(), blocks.len())?;
    let mut image = vec![0.0; layout.image_len()];
    for (b, block) in blocks.iter().enumerate() {
        check_len("reassemble (block size)", layout.block_len(), block.len())?;
        layout.write_block(block, b, &mut image);
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_block() {
        let layout = BlockLayout::new(2, 2, 2).unwrap();
        let img = vec![1.0, 2.0, 3.0, 4.0];
        assert_eq!(partition_blocks(&img, &layout).unwrap(), vec![img.clone()]);
    }

    #[test]
    fn second_block_is_top_right() {
        let layout = BlockLayout::new(64, 64, 32).unwrap();
        let img: Vec<f64> = (0..64 * 64).map(|i| i as f64).collect();
        let blocks = partition_blocks(&img, &layout).unwrap();
        assert_eq!(blocks.len(), 4);
        for r in 0..32 {
            for c in 0..32 {
                assert_eq!(blocks[1][r * 32 + c], img[r * 64 + 32 + c]);
            }
        }
        assert_eq!(reassemble_blocks(&blocks, &layout).unwrap(), img);
    }

    #[test]
    fn rejects_untiled_and_crops_centrally() {
        assert!(BlockLayout::new(10, 8, 4).is_err());
        let layout = BlockLayout::center_cropped(11, 9, 4).unwrap();
        assert_eq!((layout.image_rows(), layout.image_cols()), (8, 8));
        assert_eq!(layout.crop_offset(), (1, 0));
        let src: Vec<f64> = (0..99).map(|i| i as f64).collect();
        let cropped = layout.crop(&src).unwrap();
        assert_eq!(cropped[0], 9.0);
        assert_eq!(cropped.len(), 64);
        assert!(BlockLayout::center_cropped(3, 9, 4).is_err());
    }
}
