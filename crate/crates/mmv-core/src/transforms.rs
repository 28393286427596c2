//! Changes of variables with exact log-Jacobians: the unit-ball/expansion
//! maps on rectangular blocks, beta type I <-> type II, Gram/normalized-block
//! decompositions and symmetric-matrix inversion.

use nalgebra::DMatrix;

use crate::error::{MmvError, Result};
use crate::matrix::{MatrixBlock, SpdMatrix};

/// Which companion construction a block decomposition produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CompanionFamily {
    /// T_i = X_i V0^{-1/2}: unconstrained blocks.
    T,
    /// F_i = T_i' T_i: SPD companions.
    Beta2,
    /// R_i = X_i (W0 + X_i'X_i)^{-1/2}: blocks inside the unit ball.
    Pearson2,
    /// U_i = R_i' R_i: SPD companions with I - U_i SPD.
    Beta1,
}

/// Companion matrices of a decomposition, tagged by family.
#[derive(Debug, Clone)]
pub enum Companions {
    T(Vec<MatrixBlock>),
    Beta2(Vec<SpdMatrix>),
    Pearson2(Vec<MatrixBlock>),
    Beta1(Vec<SpdMatrix>),
}

impl Companions {
    pub fn family(&self) -> CompanionFamily {
        match self {
            Companions::T(_) => CompanionFamily::T,
            Companions::Beta2(_) => CompanionFamily::Beta2,
            Companions::Pearson2(_) => CompanionFamily::Pearson2,
            Companions::Beta1(_) => CompanionFamily::Beta1,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Companions::T(v) | Companions::Pearson2(v) => v.len(),
            Companions::Beta2(v) | Companions::Beta1(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Maps an unconstrained block T to R = T (I + T'T)^{-1/2} inside the unit
/// ball. Returns the log-Jacobian log|d R / d T| =
/// -((n+m+1)/2) logdet(I + T'T). The map is total for rows >= cols.
pub fn t_to_r(t: &MatrixBlock) -> Result<(MatrixBlock, f64)> {
    let (n, m) = (t.rows(), t.cols());
    if n < m {
        return Err(MmvError::Shape(format!(
            "expansion map needs rows >= cols, got {n}x{m}"
        )));
    }
    let g = gram_plus_identity(t);
    let s = SpdMatrix::new(g)?;
    let log_jac = -((n + m + 1) as f64 / 2.0) * s.logdet()?;
    let r = t.mul_right(s.inv_sqrt()?.as_matrix())?;
    Ok((r, log_jac))
}

/// Maps a unit-ball block R to T = R (I - R'R)^{-1/2}. Returns the
/// log-Jacobian log|d T / d R| = -((n+m+1)/2) logdet(I - R'R).
/// Fails when I - R'R is not positive definite (block outside the unit ball).
pub fn r_to_t(r: &MatrixBlock) -> Result<(MatrixBlock, f64)> {
    let (n, m) = (r.rows(), r.cols());
    if n < m {
        return Err(MmvError::Shape(format!(
            "contraction map needs rows >= cols, got {n}x{m}"
        )));
    }
    let s = identity_minus_gram(r).map_err(|_| {
        MmvError::Domain("block outside unit ball: I - R'R is not positive definite".into())
    })?;
    let log_jac = -((n + m + 1) as f64 / 2.0) * s.logdet()?;
    let t = r.mul_right(s.inv_sqrt()?.as_matrix())?;
    Ok((t, log_jac))
}

/// F = (I - U)^{-1} - I, the beta type I to type II map. Needs I - U SPD.
pub fn beta1_to_beta2(u: &SpdMatrix) -> Result<SpdMatrix> {
    let m = u.dim();
    let s = SpdMatrix::new(DMatrix::identity(m, m) - u.as_matrix())
        .map_err(|_| MmvError::Domain("I - U is not positive definite".into()))?;
    let f = s.inverse()?.into_matrix() - DMatrix::identity(m, m);
    SpdMatrix::new(f)
}

/// U = I - (I + F)^{-1}, inverse of [`beta1_to_beta2`]; total for SPD F.
pub fn beta2_to_beta1(f: &SpdMatrix) -> Result<SpdMatrix> {
    let m = f.dim();
    let s = SpdMatrix::new(DMatrix::identity(m, m) + f.as_matrix())?;
    let u = DMatrix::identity(m, m) - s.inverse()?.into_matrix();
    SpdMatrix::new(u)
}

/// Log-Jacobian log|d F / d U| = -(m+1) logdet(I - U) of the beta I -> II
/// map on symmetric coordinates; the additive factor that carries a density
/// on F back to one on U.
pub fn beta1_to_beta2_log_jac(u: &SpdMatrix) -> Result<f64> {
    let m = u.dim();
    let s = SpdMatrix::new(DMatrix::identity(m, m) - u.as_matrix())
        .map_err(|_| MmvError::Domain("I - U is not positive definite".into()))?;
    Ok(-((m + 1) as f64) * s.logdet()?)
}

/// Gram anchor plus per-family companions:
/// anchor V0 = X0'X0, then T_i = X_i V0^{-1/2}, F_i = T_i'T_i,
/// R_i = X_i (V0 + X_i'X_i)^{-1/2} or U_i = R_i'R_i.
pub fn decompose_blocks(
    blocks: &[MatrixBlock],
    family: CompanionFamily,
) -> Result<(SpdMatrix, Companions)> {
    let anchor_block = blocks
        .first()
        .ok_or_else(|| MmvError::Shape("decomposition needs at least the anchor block".into()))?;
    let m = anchor_block.cols();
    if blocks.iter().any(|b| b.cols() != m) {
        return Err(MmvError::Shape(
            "all blocks must share the same column count".into(),
        ));
    }
    if anchor_block.rows() < m {
        return Err(MmvError::Shape(format!(
            "anchor block needs rows >= cols, got {}x{}",
            anchor_block.rows(),
            m
        )));
    }
    let v0 = anchor_block
        .gram_spd()
        .map_err(|_| MmvError::Domain("anchor block is rank deficient".into()))?;
    let rest = &blocks[1..];
    let companions = match family {
        CompanionFamily::T => {
            let v0_is = v0.inv_sqrt()?;
            let ts = rest
                .iter()
                .map(|x| x.mul_right(v0_is.as_matrix()))
                .collect::<Result<Vec<_>>>()?;
            Companions::T(ts)
        }
        CompanionFamily::Beta2 => {
            let v0_is = v0.inv_sqrt()?;
            let fs = rest
                .iter()
                .map(|x| x.mul_right(v0_is.as_matrix())?.gram_spd())
                .collect::<Result<Vec<_>>>()?;
            Companions::Beta2(fs)
        }
        CompanionFamily::Pearson2 => {
            let rs = rest
                .iter()
                .map(|x| pearson_block(&v0, x))
                .collect::<Result<Vec<_>>>()?;
            Companions::Pearson2(rs)
        }
        CompanionFamily::Beta1 => {
            let us = rest
                .iter()
                .map(|x| pearson_block(&v0, x)?.gram_spd())
                .collect::<Result<Vec<_>>>()?;
            Companions::Beta1(us)
        }
    };
    Ok((v0, companions))
}

fn pearson_block(w0: &SpdMatrix, x: &MatrixBlock) -> Result<MatrixBlock> {
    let denom = SpdMatrix::new(w0.as_matrix() + x.gram()?)?;
    x.mul_right(denom.inv_sqrt()?.as_matrix())
}

/// Three-block decomposition W0 = X0'X0, T = X1 W0^{-1/2},
/// R = X2 (W0 + X2'X2)^{-1/2}, W = W0 + X2'X2.
pub fn trimatric_decompose(
    x0: &MatrixBlock,
    x1: &MatrixBlock,
    x2: &MatrixBlock,
) -> Result<(SpdMatrix, MatrixBlock, MatrixBlock)> {
    let m = x0.cols();
    if x1.cols() != m || x2.cols() != m {
        return Err(MmvError::Shape(
            "all blocks must share the same column count".into(),
        ));
    }
    if x0.rows() < m {
        return Err(MmvError::Shape(format!(
            "anchor block needs rows >= cols, got {}x{}",
            x0.rows(),
            m
        )));
    }
    let w0 = x0
        .gram_spd()
        .map_err(|_| MmvError::Domain("anchor block is rank deficient".into()))?;
    let t = x1.mul_right(w0.inv_sqrt()?.as_matrix())?;
    let w = SpdMatrix::new(w0.as_matrix() + x2.gram()?)?;
    let r = x2.mul_right(w.inv_sqrt()?.as_matrix())?;
    Ok((w, t, r))
}

/// W = V^{-1} with log_jac = -(m+1) logdet(W) on symmetric coordinates: the
/// additive factor that carries a density on V to one on W, equivalently the
/// log |det| of the inversion map differentiated at W.
pub fn invert_spd(v: &SpdMatrix) -> Result<(SpdMatrix, f64)> {
    let w = v.inverse()?;
    let log_jac = -((v.dim() + 1) as f64) * w.logdet()?;
    Ok((w, log_jac))
}

/// I + X'X as a validated SPD matrix.
fn gram_plus_identity(x: &MatrixBlock) -> DMatrix<f64> {
    let m = x.cols();
    DMatrix::identity(m, m) + x.gram().expect("caller checked rows >= cols")
}

/// I - X'X, failing when any singular value of X reaches 1.
fn identity_minus_gram(x: &MatrixBlock) -> Result<SpdMatrix> {
    let m = x.cols();
    SpdMatrix::new(DMatrix::identity(m, m) - x.gram()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::dmatrix;

    fn block(rows: &[Vec<f64>]) -> MatrixBlock {
        MatrixBlock::from_rows(rows).unwrap()
    }

    fn pseudo_uniform(state: &mut u64) -> f64 {
        *state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*state >> 11) as f64 / (1u64 << 53) as f64
    }

    fn random_block(n: usize, m: usize, scale: f64, state: &mut u64) -> MatrixBlock {
        MatrixBlock::new(DMatrix::from_fn(n, m, |_, _| {
            (pseudo_uniform(state) - 0.5) * 2.0 * scale
        }))
        .unwrap()
    }

    #[test]
    fn t_to_r_scalar_cases() {
        let zero = block(&[vec![0.0]]);
        let (r, lj) = t_to_r(&zero).unwrap();
        assert_eq!(r.as_matrix()[(0, 0)], 0.0);
        assert_eq!(lj, 0.0);

        let one = block(&[vec![1.0]]);
        let (r, lj) = t_to_r(&one).unwrap();
        assert_abs_diff_eq!(r.as_matrix()[(0, 0)], 1.0 / 2.0f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(lj, -1.5 * 2.0f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lj, -1.0397207708399179, epsilon = 1e-12);
    }

    #[test]
    fn r_to_t_scalar_cases() {
        let zero = block(&[vec![0.0]]);
        let (t, lj) = r_to_t(&zero).unwrap();
        assert_eq!(t.as_matrix()[(0, 0)], 0.0);
        assert_eq!(lj, 0.0);

        let r = block(&[vec![0.6]]);
        let (t, lj) = r_to_t(&r).unwrap();
        assert_abs_diff_eq!(t.as_matrix()[(0, 0)], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(lj, -1.5 * 0.64f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(lj, 0.6694306539426292, epsilon = 1e-12);
    }

    #[test]
    fn r_to_t_rejects_outside_unit_ball() {
        let r = block(&[vec![1.1]]);
        assert!(matches!(r_to_t(&r), Err(MmvError::Domain(_))));
    }

    #[test]
    fn round_trips_and_jacobian_antisymmetry() {
        let mut state = 3u64;
        for &(n, m) in &[(1usize, 1usize), (2, 1), (2, 2), (3, 2)] {
            for _ in 0..20 {
                let r0 = random_block(n, m, 0.5 / (n as f64).sqrt(), &mut state);
                let (t, lj_rt) = r_to_t(&r0).unwrap();
                let (r1, lj_tr) = t_to_r(&t).unwrap();
                assert!((r1.as_matrix() - r0.as_matrix()).amax() < 1e-10);
                assert_abs_diff_eq!(lj_rt + lj_tr, 0.0, epsilon = 1e-9);

                let t0 = random_block(n, m, 2.0, &mut state);
                let (r, _) = t_to_r(&t0).unwrap();
                let (t1, _) = r_to_t(&r).unwrap();
                assert!((t1.as_matrix() - t0.as_matrix()).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn beta_maps_scalar_and_round_trip() {
        let u = SpdMatrix::new(dmatrix![0.5]).unwrap();
        let f = beta1_to_beta2(&u).unwrap();
        assert_abs_diff_eq!(f.as_matrix()[(0, 0)], 1.0, epsilon = 1e-12);

        let tiny = SpdMatrix::new(dmatrix![1e-9]).unwrap();
        let f = beta1_to_beta2(&tiny).unwrap();
        assert_abs_diff_eq!(f.as_matrix()[(0, 0)], 0.0, epsilon = 1e-8);

        let mut state = 17u64;
        for _ in 0..30 {
            let x = random_block(4, 2, 0.4, &mut state);
            let u = identity_minus_gram(&x)
                .map(|s| {
                    // any SPD matrix strictly inside the unit interval works
                    SpdMatrix::new(DMatrix::identity(2, 2) - s.as_matrix()).unwrap()
                })
                .unwrap();
            let f = beta1_to_beta2(&u).unwrap();
            let back = beta2_to_beta1(&f).unwrap();
            assert!((back.as_matrix() - u.as_matrix()).amax() < 1e-10);
        }
    }

    #[test]
    fn beta2_to_beta1_round_trip_from_spd() {
        let mut state = 29u64;
        for _ in 0..30 {
            let x = random_block(3, 2, 1.5, &mut state);
            let f0 = SpdMatrix::new(x.gram().unwrap() + DMatrix::identity(2, 2) * 0.1).unwrap();
            let u = beta2_to_beta1(&f0).unwrap();
            let f1 = beta1_to_beta2(&u).unwrap();
            assert!((f1.as_matrix() - f0.as_matrix()).amax() < 1e-10);
        }
    }

    #[test]
    fn decompose_scalar_arithmetic() {
        // X0 = (1,1)', X1 = (1): V0 = 2, T1 = 1/sqrt(2), U1 = 1/3.
        let x0 = block(&[vec![1.0], vec![1.0]]);
        let x1 = block(&[vec![1.0]]);
        let (v0, comp) = decompose_blocks(&[x0.clone(), x1.clone()], CompanionFamily::T).unwrap();
        assert_abs_diff_eq!(v0.as_matrix()[(0, 0)], 2.0, epsilon = 1e-14);
        match comp {
            Companions::T(ts) => {
                assert_abs_diff_eq!(
                    ts[0].as_matrix()[(0, 0)],
                    1.0 / 2.0f64.sqrt(),
                    epsilon = 1e-14
                );
            }
            _ => panic!("wrong companion kind"),
        }

        let (_, comp) = decompose_blocks(&[x0, x1], CompanionFamily::Beta1).unwrap();
        match comp {
            Companions::Beta1(us) => {
                assert_abs_diff_eq!(us[0].as_matrix()[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
            }
            _ => panic!("wrong companion kind"),
        }
    }

    #[test]
    fn decompose_cross_construction_identities() {
        let mut state = 5u64;
        for _ in 0..20 {
            let blocks = vec![
                random_block(4, 2, 1.0, &mut state),
                random_block(3, 2, 1.0, &mut state),
                random_block(2, 2, 1.0, &mut state),
            ];
            let (_, t) = decompose_blocks(&blocks, CompanionFamily::T).unwrap();
            let (_, f) = decompose_blocks(&blocks, CompanionFamily::Beta2).unwrap();
            let (_, r) = decompose_blocks(&blocks, CompanionFamily::Pearson2).unwrap();
            let (_, u) = decompose_blocks(&blocks, CompanionFamily::Beta1).unwrap();
            let (ts, fs, rs, us) = match (t, f, r, u) {
                (
                    Companions::T(a),
                    Companions::Beta2(b),
                    Companions::Pearson2(c),
                    Companions::Beta1(d),
                ) => (a, b, c, d),
                _ => panic!("wrong companion kinds"),
            };
            for i in 0..2 {
                // F_i = T_i'T_i and U_i = R_i'R_i
                assert!((ts[i].gram().unwrap() - fs[i].as_matrix()).amax() < 1e-10);
                assert!((rs[i].gram().unwrap() - us[i].as_matrix()).amax() < 1e-10);
                // beta2_to_beta1(F_i) and U_i are orthogonally similar (they
                // conjugate the same product in different orders), so they
                // share eigenvalues; entrywise equality holds only at m = 1.
                let u_from_f = beta2_to_beta1(&fs[i]).unwrap();
                let mut e1 = u_from_f.as_matrix().clone().symmetric_eigenvalues();
                let mut e2 = us[i].as_matrix().clone().symmetric_eigenvalues();
                e1.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
                e2.as_mut_slice().sort_by(|a, b| a.partial_cmp(b).unwrap());
                assert!((e1 - e2).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn decompose_beta1_matches_beta2_route_for_scalars() {
        let mut state = 41u64;
        for _ in 0..20 {
            let blocks = vec![
                random_block(2, 1, 1.0, &mut state),
                random_block(1, 1, 1.0, &mut state),
                random_block(3, 1, 1.0, &mut state),
            ];
            let (_, f) = decompose_blocks(&blocks, CompanionFamily::Beta2).unwrap();
            let (_, u) = decompose_blocks(&blocks, CompanionFamily::Beta1).unwrap();
            let (fs, us) = match (f, u) {
                (Companions::Beta2(a), Companions::Beta1(b)) => (a, b),
                _ => panic!("wrong companion kinds"),
            };
            for i in 0..2 {
                let u_from_f = beta2_to_beta1(&fs[i]).unwrap();
                assert!((u_from_f.as_matrix() - us[i].as_matrix()).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn decompose_rejects_rank_deficient_anchor() {
        let x0 = block(&[vec![1.0, 0.0], vec![2.0, 0.0]]);
        let x1 = block(&[vec![0.5, 0.5], vec![0.1, 0.2]]);
        assert!(matches!(
            decompose_blocks(&[x0, x1], CompanionFamily::Beta2),
            Err(MmvError::Domain(_))
        ));
    }

    #[test]
    fn trimatric_scalar_and_degenerate() {
        // x0=1, x1=2, x2=3: W = 10, T = 2, R = 3/sqrt(10)
        let (w, t, r) = trimatric_decompose(
            &block(&[vec![1.0]]),
            &block(&[vec![2.0]]),
            &block(&[vec![3.0]]),
        )
        .unwrap();
        assert_abs_diff_eq!(w.as_matrix()[(0, 0)], 10.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t.as_matrix()[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.as_matrix()[(0, 0)], 3.0 / 10.0f64.sqrt(), epsilon = 1e-12);

        // zero third block: W = W0 and R = 0
        let (w, _, r) = trimatric_decompose(
            &block(&[vec![2.0]]),
            &block(&[vec![1.0]]),
            &block(&[vec![0.0]]),
        )
        .unwrap();
        assert_abs_diff_eq!(w.as_matrix()[(0, 0)], 4.0, epsilon = 1e-12);
        assert_eq!(r.as_matrix()[(0, 0)], 0.0);
    }

    #[test]
    fn trimatric_determinant_and_trace_identities() {
        let mut state = 11u64;
        for _ in 0..20 {
            let x0 = random_block(3, 2, 1.0, &mut state);
            let x1 = random_block(2, 2, 1.0, &mut state);
            let x2 = random_block(4, 2, 1.0, &mut state);
            let w0 = x0.gram_spd().unwrap();
            let (w, _, r) = trimatric_decompose(&x0, &x1, &x2).unwrap();
            let s = SpdMatrix::new(DMatrix::identity(2, 2) - r.gram().unwrap()).unwrap();
            // |W0| = |W| |I - R'R|
            assert_abs_diff_eq!(
                w0.logdet().unwrap(),
                w.logdet().unwrap() + s.logdet().unwrap(),
                epsilon = 1e-10
            );
            // tr W0 = tr W (I - R'R)
            assert_abs_diff_eq!(
                w0.trace(),
                (w.as_matrix() * s.as_matrix()).trace(),
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn invert_spd_cases() {
        let (w, lj) = invert_spd(&SpdMatrix::identity(3)).unwrap();
        assert!((w.as_matrix() - DMatrix::identity(3, 3)).amax() < 1e-14);
        assert_abs_diff_eq!(lj, 0.0, epsilon = 1e-14);

        let (w, lj) = invert_spd(&SpdMatrix::new(dmatrix![2.0]).unwrap()).unwrap();
        assert_abs_diff_eq!(w.as_matrix()[(0, 0)], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(lj, 4.0f64.ln(), epsilon = 1e-12);
    }
}
