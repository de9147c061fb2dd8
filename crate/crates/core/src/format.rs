//! Little-endian binary files for designs, operators, measurements and priors.
//!
//! Every file starts with an 8-byte magic, a `u32` version and a `u32` flag
//! word. Sizes are `u32`, matrices are row-major `f64`.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::design::{SensingDesign, SensingOperatorPair};
use crate::error::{Error, Result};
use crate::ggd::{GgdShape, MggdModel};
use crate::pipeline::Measurements;
use crate::transforms::BlockLayout;

pub const FORMAT_VERSION: u32 = 1;

const DESIGN_MAGIC: &[u8; 8] = b"INTSDSGN";
const OPERATOR_MAGIC: &[u8; 8] = b"INTSOPER";
const MEASUREMENT_MAGIC: &[u8; 8] = b"INTSMEAS";
const PRIOR_MAGIC: &[u8; 8] = b"INTSPRIR";

const FLAG_CONVERGED: u32 = 1;

fn write_header<W: Write>(w: &mut W, magic: &[u8; 8], flags: u32) -> Result<()> {
    w.write_all(magic)?;
    write_u32(w, FORMAT_VERSION)?;
    write_u32(w, flags)
}

fn read_header<R: Read>(r: &mut R, magic: &[u8; 8]) -> Result<u32> {
    let mut found = [0u8; 8];
    r.read_exact(&mut found)?;
    if &found != magic {
        return Err(Error::Format(format!(
            "expected magic {:?}, found {:?}",
            String::from_utf8_lossy(magic),
            String::from_utf8_lossy(&found)
        )));
    }
    let version = read_u32(r)?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    read_u32(r)
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn write_size<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("size {v} exceeds u32")))?;
    write_u32(w, v)
}

fn write_f64s<W: Write>(w: &mut W, values: impl IntoIterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_size<R: Read>(r: &mut R) -> Result<usize> {
    Ok(read_u32(r)? as usize)
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64s<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![
        0u8;
        count
            .checked_mul(8)
            .ok_or_else(|| Error::Format("length overflow".into()))?
    ];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight")))
        .collect())
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> Result<()> {
    write_size(w, m.nrows())?;
    write_size(w, m.ncols())?;
    for i in 0..m.nrows() {
        write_f64s(w, m.row(i).iter().copied())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R) -> Result<DMatrix<f64>> {
    let rows = read_size(r)?;
    let cols = read_size(r)?;
    let data = read_f64s(r, rows * cols)?;
    Ok(DMatrix::from_row_slice(rows, cols, &data))
}

/// `Q*`, its singular values and the recorded feasibility margins.
pub fn write_design<W: Write>(w: &mut W, design: &SensingDesign) -> Result<()> {
    write_header(w, DESIGN_MAGIC, if design.converged { FLAG_CONVERGED } else { 0 })?;
    write_matrix(w, &design.q)?;
    write_size(w, design.singular_values.len())?;
    write_f64s(w, design.singular_values.iter().copied())?;
    write_size(w, design.feasibility_margins.len())?;
    write_f64s(w, design.feasibility_margins.iter().copied())
}

pub fn read_design<R: Read>(r: &mut R) -> Result<SensingDesign> {
    let flags = read_header(r, DESIGN_MAGIC)?;
    let q = read_matrix(r)?;
    let count = read_size(r)?;
    let stored = read_f64s(r, count)?;
    let margins_len = read_size(r)?;
    let margins = read_f64s(r, margins_len)?;
    let mut design = SensingDesign::from_q(q)?;
    if stored.len() != design.singular_values.len() {
        return Err(Error::Format(format!(
            "{} stored singular values for a {}-dimensional design",
            stored.len(),
            design.len()
        )));
    }
    design.singular_values = stored;
    design.feasibility_margins = margins;
    design.converged = flags & FLAG_CONVERGED != 0;
    Ok(design)
}

pub fn write_operator<W: Write>(w: &mut W, op: &SensingOperatorPair) -> Result<()> {
    write_header(w, OPERATOR_MAGIC, 0)?;
    write_size(w, op.block_side())?;
    write_matrix(w, op.phi())?;
    write_matrix(w, op.phi_dual())
}

pub fn read_operator<R: Read>(r: &mut R) -> Result<SensingOperatorPair> {
    read_header(r, OPERATOR_MAGIC)?;
    let side = read_size(r)?;
    let phi = read_matrix(r)?;
    let dual = read_matrix(r)?;
    SensingOperatorPair::new(phi, dual, side)
}

pub fn write_measurements<W: Write>(w: &mut W, meas: &Measurements) -> Result<()> {
    write_header(w, MEASUREMENT_MAGIC, 0)?;
    let (rows, cols) = meas.layout.source_dims();
    write_size(w, rows)?;
    write_size(w, cols)?;
    write_size(w, meas.layout.block_side())?;
    w.write_all(&meas.operator_id.to_le_bytes())?;
    write_size(w, meas.per_block.len())?;
    write_size(w, meas.rank())?;
    for y in &meas.per_block {
        write_f64s(w, y.iter().copied())?;
    }
    Ok(())
}

pub fn read_measurements<R: Read>(r: &mut R) -> Result<Measurements> {
    read_header(r, MEASUREMENT_MAGIC)?;
    let rows = read_size(r)?;
    let cols = read_size(r)?;
    let side = read_size(r)?;
    let layout = BlockLayout::center_cropped(rows, cols, side)?;
    let operator_id = read_u64(r)?;
    let blocks = read_size(r)?;
    if blocks != layout.block_count() {
        return Err(Error::Format(format!(
            "{blocks} blocks for a layout of {}",
            layout.block_count()
        )));
    }
    let m = read_size(r)?;
    let per_block = (0..blocks).map(|_| read_f64s(r, m)).collect::<Result<_>>()?;
    Ok(Measurements {
        per_block,
        layout,
        operator_id,
    })
}

pub fn write_prior<W: Write>(w: &mut W, model: &MggdModel) -> Result<()> {
    write_header(w, PRIOR_MAGIC, 0)?;
    write_f64s(w, [model.beta().value()])?;
    write_matrix(w, model.scatter())
}

pub fn read_prior<R: Read>(r: &mut R) -> Result<MggdModel> {
    read_header(r, PRIOR_MAGIC)?;
    let beta = read_f64s(r, 1)?[0];
    let scatter = read_matrix(r)?;
    MggdModel::new(GgdShape::new(beta)?, scatter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::assemble_q;

    #[test]
    fn operator_roundtrip_preserves_hash() {
        let phi = DMatrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 * 0.1 - 0.3);
        let op = SensingOperatorPair::new(phi.clone(), phi * 2.0, 2).unwrap();
        let mut buf = Vec::new();
        write_operator(&mut buf, &op).unwrap();
        let back = read_operator(&mut buf.as_slice()).unwrap();
        assert_eq!(back, op);
        assert_eq!(back.operator_hash(), op.operator_hash());
    }

    #[test]
    fn design_roundtrip() {
        let p = DMatrix::from_fn(4, 4, |i, j| if i == j { 0.75 } else { -0.25 });
        let mut d = assemble_q(&p).unwrap();
        d.feasibility_margins = vec![-0.1, 0.0, -1e-9];
        d.converged = false;
        let mut buf = Vec::new();
        write_design(&mut buf, &d).unwrap();
        let back = read_design(&mut buf.as_slice()).unwrap();
        assert_eq!(back.q, d.q);
        assert_eq!(back.singular_values, d.singular_values);
        assert_eq!(back.feasibility_margins, d.feasibility_margins);
        assert!(!back.converged);
    }

    #[test]
    fn measurements_and_prior_roundtrip() {
        let layout = BlockLayout::center_cropped(5, 7, 2).unwrap();
        let meas = Measurements {
            per_block: (0..layout.block_count()).map(|b| vec![b as f64, -0.5]).collect(),
            layout,
            operator_id: 0xdead_beef_1234,
        };
        let mut buf = Vec::new();
        write_measurements(&mut buf, &meas).unwrap();
        assert_eq!(read_measurements(&mut buf.as_slice()).unwrap(), meas);

        let model = MggdModel::new(GgdShape::new(0.68).unwrap(), DMatrix::identity(3, 3) * 0.4).unwrap();
        let mut buf = Vec::new();
        write_prior(&mut buf, &model).unwrap();
        assert_eq!(read_prior(&mut buf.as_slice()).unwrap(), model);
    }

    #[test]
    fn wrong_magic_and_truncation() {
        let mut buf = Vec::new();
        write_operator(&mut buf, &SensingOperatorPair::identity(2).unwrap()).unwrap();
        assert!(matches!(read_design(&mut buf.as_slice()), Err(Error::Format(_))));
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_operator(&mut buf.as_slice()), Err(Error::Io(_))));
    }
}
