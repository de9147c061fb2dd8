use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::problem::DesignProblem;
use crate::error::{check_len, Error, Result};
use crate::linalg::{numerical_rank, sorted_svd};

/// Relative singular-value threshold used for every rank statement.
pub const RANK_THRESHOLD: f64 = 1e-8;

fn side_of(n: usize) -> Result<usize> {
    let f = (n as f64).sqrt().round() as usize;
    if f * f != n || f == 0 {
        return Err(Error::Domain(format!("{n} pixels do not form a square block")));
    }
    Ok(f)
}

/// `Q* = P* + (1/n)·𝟙𝟙ᵀ` and its singular triplets.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingDesign {
    pub q: DMatrix<f64>,
    /// Nonincreasing.
    pub singular_values: Vec<f64>,
    /// Left singular vectors as columns, matching `singular_values`.
    pub left_vectors: DMatrix<f64>,
    /// Right singular vectors as columns, matching `singular_values`.
    pub right_vectors: DMatrix<f64>,
    /// `‖A_i(P*) − b_i‖ − Δ_i` per constraint; empty until recorded.
    pub feasibility_margins: Vec<f64>,
    pub rank_p: usize,
    pub rank_q: usize,
    /// `‖P* 𝟙‖ / (‖P*‖_F √n)`: how far the row space of `P*` leaks onto the mean.
    pub mean_leakage: f64,
    /// Whether the solver that produced `P*` met its tolerances.
    pub converged: bool,
}

impl SensingDesign {
    pub fn len(&self) -> usize {
        self.q.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn block_side(&self) -> usize {
        side_of(self.len()).unwrap_or(0)
    }

    pub fn numerical_rank(&self) -> usize {
        self.rank_q
    }

    /// Whether `rank(Q*) = rank(P*) + 1` held at [`RANK_THRESHOLD`].
    pub fn rank_identity_holds(&self) -> bool {
        self.rank_q == self.rank_p + 1
    }

    pub fn record_feasibility(&mut self, problem: &DesignProblem, p_star: &DMatrix<f64>) -> Result<()> {
        self.feasibility_margins = problem.constraint_margins(p_star)?;
        Ok(())
    }

    pub fn max_margin(&self) -> f64 {
        self.feasibility_margins
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Singular values as CSV (`index,singular_value,relative`).
    pub fn singular_values_csv(&self) -> String {
        let top = self.singular_values.first().copied().unwrap_or(0.0);
        let mut s = String::from("index,singular_value,relative\n");
        for (k, v) in self.singular_values.iter().enumerate() {
            let rel = if top > 0.0 { v / top } else { 0.0 };
            s.push_str(&format!("{},{},{}\n", k + 1, v, rel));
        }
        s
    }

    /// Feasibility margins as CSV (`index,margin`).
    pub fn feasibility_csv(&self) -> String {
        let mut s = String::from("index,margin\n");
        for (i, m) in self.feasibility_margins.iter().enumerate() {
            s.push_str(&format!("{i},{m}\n"));
        }
        s
    }
}

/// Adds the rank-one mean block to `P*` and factorizes the result.
pub fn assemble_q(p_star: &DMatrix<f64>) -> Result<SensingDesign> {
    if !p_star.is_square() {
        return Err(Error::Domain("P* must be square".into()));
    }
    let n = p_star.nrows();
    side_of(n)?;
    factorize(p_star.add_scalar(1.0 / n as f64), p_star)
}

impl SensingDesign {
    /// Rebuilds the factorization from a stored `Q*`.
    pub fn from_q(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() {
            return Err(Error::Domain("Q* must be square".into()));
        }
        let n = q.nrows();
        side_of(n)?;
        let p = q.add_scalar(-1.0 / n as f64);
        factorize(q, &p)
    }
}

fn factorize(q: DMatrix<f64>, p_star: &DMatrix<f64>) -> Result<SensingDesign> {
    let n = q.nrows();
    let svd_q = sorted_svd(&q)?;
    let svd_p = sorted_svd(p_star)?;
    let rank_q = numerical_rank(&svd_q.values, RANK_THRESHOLD);
    let rank_p = numerical_rank(&svd_p.values, RANK_THRESHOLD);
    let p_norm = p_star.norm();
    let mean_leakage = if p_norm > 0.0 {
        (p_star * DVector::from_element(n, 1.0)).norm() / (p_norm * (n as f64).sqrt())
    } else {
        0.0
    };
    Ok(SensingDesign {
        q,
        singular_values: svd_q.values,
        left_vectors: svd_q.u,
        right_vectors: svd_q.v,
        feasibility_margins: Vec::new(),
        rank_p,
        rank_q,
        mean_leakage,
        converged: true,
    })
}

/// Measurement matrix `φ` (`M × n`) and its dual `φ^d` with `(φ^d)ᵀ φ ≈ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingOperatorPair {
    phi: DMatrix<f64>,
    phi_dual: DMatrix<f64>,
    /// `(φ^d)ᵀ`, kept so the estimator reads contiguous columns.
    phi_dual_t: DMatrix<f64>,
    block_side: usize,
    hash: u64,
}

impl SensingOperatorPair {
    pub fn new(phi: DMatrix<f64>, phi_dual: DMatrix<f64>, block_side: usize) -> Result<Self> {
        let n = block_side * block_side;
        if block_side == 0 || phi.nrows() == 0 {
            return Err(Error::Domain("sensing operator needs at least one row".into()));
        }
        check_len("phi columns", n, phi.ncols())?;
        check_len("phi_dual columns", n, phi_dual.ncols())?;
        check_len("phi_dual rows", phi.nrows(), phi_dual.nrows())?;
        let phi_dual_t = phi_dual.transpose();
        let hash = hash_operator(&phi, &phi_dual, block_side);
        Ok(Self {
            phi,
            phi_dual,
            phi_dual_t,
            block_side,
            hash,
        })
    }

    /// Bypass operator `φ = φ^d = I` (`M = f²`).
    pub fn identity(block_side: usize) -> Result<Self> {
        let n = block_side * block_side;
        Self::new(DMatrix::identity(n, n), DMatrix::identity(n, n), block_side)
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn phi_dual(&self) -> &DMatrix<f64> {
        &self.phi_dual
    }

    pub fn phi_dual_t(&self) -> &DMatrix<f64> {
        &self.phi_dual_t
    }

    pub fn rank(&self) -> usize {
        self.phi.nrows()
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn block_len(&self) -> usize {
        self.block_side * self.block_side
    }

    /// Measurements per pixel, `M / f²`.
    pub fn measurement_rate(&self) -> f64 {
        self.rank() as f64 / self.block_len() as f64
    }

    /// `Q_M = (φ^d)ᵀ φ`.
    pub fn proxy_matrix(&self) -> DMatrix<f64> {
        &self.phi_dual_t * &self.phi
    }

    /// First eight bytes (little-endian) of the SHA-256 of the operator's
    /// dimensions and entries.
    pub fn operator_hash(&self) -> u64 {
        self.hash
    }
}

fn hash_operator(phi: &DMatrix<f64>, phi_dual: &DMatrix<f64>, block_side: usize) -> u64 {
    let mut h = Sha256::new();
    h.update((phi.nrows() as u32).to_le_bytes());
    h.update((block_side as u32).to_le_bytes());
    for m in [phi, phi_dual] {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                h.update(m[(r, c)].to_le_bytes());
            }
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Rank-`M` factorization `φ = Σ_M^{1/2} V_Mᵀ`, `(φ^d)ᵀ = W_M Σ_M^{1/2}`.
pub fn make_sensing_operator(design: &SensingDesign, m_rank: usize) -> Result<SensingOperatorPair> {
    let available = design.numerical_rank();
    if m_rank == 0 || m_rank > available {
        return Err(Error::RankExceeded {
            requested: m_rank,
            available,
        });
    }
    let n = design.len();
    let mut phi = DMatrix::zeros(m_rank, n);
    let mut phi_dual = DMatrix::zeros(m_rank, n);
    for k in 0..m_rank {
        let root = design.singular_values[k].sqrt();
        phi.set_row(k, &(design.right_vectors.column(k).transpose() * root));
        phi_dual.set_row(k, &(design.left_vectors.column(k).transpose() * root));
    }
    SensingOperatorPair::new(phi, phi_dual, side_of(n)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_p_gives_rank_one_mean_block() {
        let d = assemble_q(&DMatrix::zeros(16, 16)).unwrap();
        assert!((d.singular_values[0] - 1.0).abs() < 1e-12);
        assert!(d.singular_values[1..].iter().all(|s| s.abs() < 1e-12));
        assert_eq!(d.rank_q, 1);
        assert_eq!(d.rank_p, 0);
        assert!(d.rank_identity_holds());
        let v = d.right_vectors.column(0);
        assert!(v.iter().all(|x| (x.abs() - 0.25).abs() < 1e-12));
    }

    #[test]
    fn rank_requests_are_bounded() {
        let d = assemble_q(&DMatrix::zeros(4, 4)).unwrap();
        assert!(matches!(
            make_sensing_operator(&d, 2),
            Err(Error::RankExceeded {
                requested: 2,
                available: 1
            })
        ));
        assert!(make_sensing_operator(&d, 0).is_err());
        let op = make_sensing_operator(&d, 1).unwrap();
        assert!((op.proxy_matrix() - &d.q).norm() < 1e-12);
    }

    #[test]
    fn non_square_block_rejected() {
        assert!(assemble_q(&DMatrix::zeros(6, 6)).is_err());
    }

    #[test]
    fn hash_distinguishes_operators() {
        let a = SensingOperatorPair::identity(2).unwrap();
        let mut phi = DMatrix::identity(4, 4);
        phi[(0, 1)] = 1e-9;
        let b = SensingOperatorPair::new(phi, DMatrix::identity(4, 4), 2).unwrap();
        assert_ne!(a.operator_hash(), b.operator_hash());
        assert_eq!(
            a.operator_hash(),
            SensingOperatorPair::identity(2).unwrap().operator_hash()
        );
    }
}
