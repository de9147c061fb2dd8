//! Distortion targets, block-diagonal sensing and single-multiply estimation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::design::SensingOperatorPair;
use crate::error::{check_len, Error, Result};
use crate::transforms::{box_filter_from_integral, BlockLayout, IntegralOperator};

/// Per-location distortion limits `δ` for one block size.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaTargets {
    pub delta: Vec<f64>,
    pub corpus_id: String,
    pub n_components: usize,
    pub quantile: f64,
}

impl DeltaTargets {
    /// `index,delta` rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("index,delta\n");
        for (i, d) in self.delta.iter().enumerate() {
            s.push_str(&format!("{i},{d}\n"));
        }
        s
    }
}

fn validate_blocks(blocks: &[Vec<f64>], block_side: usize) -> Result<usize> {
    let n = block_side * block_side;
    if n == 0 {
        return Err(Error::Domain("block side must be positive".into()));
    }
    for b in blocks {
        check_len("training block", n, b.len())?;
    }
    Ok(n)
}

/// PCA sensing operator `φ = φ^d = [𝟙ᵀ/√n ; V_kᵀ]` with `V_k` the top
/// `n_components` principal directions of the blocks after removing each
/// block's own mean. The result has `n_components + 1` rows and
/// `φᵀφ` is an orthogonal projection.
pub fn pca_operator(blocks: &[Vec<f64>], block_side: usize, n_components: usize) -> Result<SensingOperatorPair> {
    let n = validate_blocks(blocks, block_side)?;
    if n_components == 0 || n_components >= n {
        return Err(Error::Config(format!(
            "component count must lie in 1..{n}, got {n_components}"
        )));
    }
    if blocks.len() < n_components + 1 {
        return Err(Error::InsufficientData(format!(
            "{} training blocks, need at least {}",
            blocks.len(),
            n_components + 1
        )));
    }

    let mut second_moment = DMatrix::<f64>::zeros(n, n);
    let mut detail = DVector::<f64>::zeros(n);
    let mut energy = 0.0;
    let mut total = 0.0;
    for b in blocks {
        let mean = b.iter().sum::<f64>() / n as f64;
        total += b.iter().map(|v| v * v).sum::<f64>();
        for (d, v) in detail.iter_mut().zip(b) {
            *d = v - mean;
        }
        energy += detail.norm_squared();
        second_moment.ger(1.0, &detail, &detail, 1.0);
    }
    // Mean removal leaves roundoff-sized detail in constant blocks.
    if energy <= 1e-24 * total {
        return Err(Error::InsufficientData("zero-variance corpus".into()));
    }
    second_moment /= blocks.len() as f64;

    let eig = SymmetricEigen::new(second_moment);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let ones = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut rows: Vec<DVector<f64>> = vec![ones.clone()];
    for &k in &order {
        if rows.len() == n_components + 1 {
            break;
        }
        let mut v = eig.eigenvectors.column(k).into_owned();
        for r in &rows {
            let c = r.dot(&v);
            v.axpy(-c, r, 1.0);
        }
        let norm = v.norm();
        if norm > 1e-8 {
            rows.push(v / norm);
        }
    }
    let mut phi = DMatrix::zeros(rows.len(), n);
    for (i, r) in rows.iter().enumerate() {
        phi.set_row(i, &r.transpose());
    }
    SensingOperatorPair::new(phi.clone(), phi, block_side)
}

/// Nearest-rank `quantile` of `values` (which are reordered).
fn nearest_rank(values: &mut [f64], quantile: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let rank = (quantile * values.len() as f64).ceil().max(1.0) as usize;
    values[rank.min(values.len()) - 1]
}

/// Distortion limits from the PCA sensing of a training corpus: `δ_i` is the
/// nearest-rank `quantile` of `|d_i^j|` over training blocks `j`, where
/// `d^j = H((φᵀφ − I) x_j)` for the [`pca_operator`].
pub fn compute_delta_targets(
    blocks: &[Vec<f64>],
    block_side: usize,
    n_components: usize,
    quantile: f64,
    corpus_id: &str,
) -> Result<DeltaTargets> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(Error::Config(format!("quantile must lie in (0, 1], got {quantile}")));
    }
    let op = pca_operator(blocks, block_side, n_components)?;
    let n = op.block_len();
    let mut columns = vec![Vec::with_capacity(blocks.len()); n];
    for b in blocks {
        let d = distortion_vector(b, &op)?;
        for (col, v) in columns.iter_mut().zip(d) {
            col.push(v.abs());
        }
    }
    let delta = columns.iter_mut().map(|c| nearest_rank(c, quantile)).collect();
    Ok(DeltaTargets {
        delta,
        corpus_id: corpus_id.to_string(),
        n_components,
        quantile,
    })
}

/// Block measurements `y_b = φ x_b`, blocks in raster order of the block grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub per_block: Vec<Vec<f64>>,
    pub layout: BlockLayout,
    pub operator_id: u64,
}

impl Measurements {
    /// Measurements per block, `M`.
    pub fn rank(&self) -> usize {
        self.per_block.first().map_or(0, Vec::len)
    }

    pub fn total(&self) -> usize {
        self.per_block.iter().map(Vec::len).sum()
    }

    pub fn measurement_rate(&self) -> f64 {
        self.rank() as f64 / self.layout.block_len() as f64
    }
}

fn check_layout(op: &SensingOperatorPair, layout: &BlockLayout) -> Result<()> {
    if op.block_side() != layout.block_side() {
        return Err(Error::OperatorMismatch(format!(
            "operator block side {} vs layout block side {}",
            op.block_side(),
            layout.block_side()
        )));
    }
    Ok(())
}

pub fn sense(image: &[f64], op: &SensingOperatorPair, layout: &BlockLayout) -> Result<Measurements> {
    check_layout(op, layout)?;
    check_len("sensed image", layout.image_len(), image.len())?;
    let mut block = DVector::zeros(layout.block_len());
    let per_block = (0..layout.block_count())
        .map(|b| {
            layout.read_block(image, b, block.as_mut_slice());
            (op.phi() * &block).as_slice().to_vec()
        })
        .collect();
    Ok(Measurements {
        per_block,
        layout: *layout,
        operator_id: op.operator_hash(),
    })
}

/// Tallies the arithmetic performed by the estimator.
pub trait OpCounter {
    fn multiply_accumulate(&mut self, count: usize);
    fn scan(&mut self, count: usize);
}

/// Counter that records nothing.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoCount;

impl OpCounter for NoCount {
    #[inline(always)]
    fn multiply_accumulate(&mut self, _: usize) {}
    #[inline(always)]
    fn scan(&mut self, _: usize) {}
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct OpTally {
    pub multiply_accumulates: usize,
    /// Pixels visited by the cumulative-sum pass.
    pub scanned: usize,
}

impl OpCounter for OpTally {
    fn multiply_accumulate(&mut self, count: usize) {
        self.multiply_accumulates += count;
    }
    fn scan(&mut self, count: usize) {
        self.scanned += count;
    }
}

/// Proxy image `x̂_b = (φ^d)ᵀ y_b` reassembled into raster order.
pub fn proxy_image(meas: &Measurements, op: &SensingOperatorPair, layout: &BlockLayout) -> Result<Vec<f64>> {
    proxy_image_counted(meas, op, layout, &mut NoCount)
}

fn proxy_image_counted<C: OpCounter>(
    meas: &Measurements,
    op: &SensingOperatorPair,
    layout: &BlockLayout,
    counter: &mut C,
) -> Result<Vec<f64>> {
    check_layout(op, layout)?;
    if meas.layout != *layout {
        return Err(Error::OperatorMismatch(
            "measurements were taken with a different layout".into(),
        ));
    }
    if meas.operator_id != op.operator_hash() {
        return Err(Error::OperatorMismatch(format!(
            "measurements carry operator {:016x}, estimator has {:016x}",
            meas.operator_id,
            op.operator_hash()
        )));
    }
    check_len("measurement blocks", layout.block_count(), meas.per_block.len())?;
    let n = layout.block_len();
    let m = op.rank();
    let dual_t = op.phi_dual_t();
    let mut image = vec![0.0; layout.image_len()];
    let mut block = vec![0.0; n];
    for (b, y) in meas.per_block.iter().enumerate() {
        check_len("measurement vector", m, y.len())?;
        block.iter_mut().for_each(|v| *v = 0.0);
        for (k, &yk) in y.iter().enumerate() {
            let col = dual_t.column(k);
            for (v, w) in block.iter_mut().zip(col.iter()) {
                *v += yk * w;
            }
            counter.multiply_accumulate(n);
        }
        layout.write_block(&block, b, &mut image);
    }
    Ok(image)
}

/// Integral-image estimate `Î = H · blockdiag((φ^d)ᵀ) · y`, with the block
/// proxies placed back in raster order before the cumulative sum.
pub fn estimate_integral(meas: &Measurements, op: &SensingOperatorPair, layout: &BlockLayout) -> Result<Vec<f64>> {
    estimate_integral_counted(meas, op, layout, &mut NoCount)
}

/// [`estimate_integral`] reporting its arithmetic to `counter`.
pub fn estimate_integral_counted<C: OpCounter>(
    meas: &Measurements,
    op: &SensingOperatorPair,
    layout: &BlockLayout,
    counter: &mut C,
) -> Result<Vec<f64>> {
    let mut image = proxy_image_counted(meas, op, layout, counter)?;
    IntegralOperator::new(layout.image_rows(), layout.image_cols())?.apply_in_place(&mut image);
    counter.scan(image.len());
    Ok(image)
}

pub fn estimate_box_filtered(
    meas: &Measurements,
    op: &SensingOperatorPair,
    layout: &BlockLayout,
    k: usize,
) -> Result<Vec<f64>> {
    let integral = estimate_integral(meas, op, layout)?;
    box_filter_from_integral(&integral, layout.image_rows(), layout.image_cols(), k)
}

/// `d = H(Q_M x − x)` for a single block.
pub fn distortion_vector(block: &[f64], op: &SensingOperatorPair) -> Result<Vec<f64>> {
    let n = op.block_len();
    check_len("distortion block", n, block.len())?;
    let x = DVector::from_column_slice(block);
    let mut d = (op.phi_dual_t() * (op.phi() * &x) - &x).as_slice().to_vec();
    IntegralOperator::square(op.block_side())?.apply_in_place(&mut d);
    Ok(d)
}
