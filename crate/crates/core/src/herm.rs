//! Realified Hermitian matrix algebra.
//!
//! Matrix scenarios live in the real vector space of m×m complex Hermitian
//! matrices, flattened to ℝ^{m²}. Coordinates are the m diagonal entries
//! followed by (√2·Re X_ij, √2·Im X_ij) for i < j in lexicographic order.
//! The √2 scaling makes the Euclidean dot product of coordinate vectors
//! equal to the Frobenius inner product tr(XY), so the ambient metric of a
//! matrix scenario is the Frobenius metric with no further bookkeeping.

use nalgebra::{Complex, DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub type CMatrix = DMatrix<Complex<f64>>;

const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Standard normal sample; pins the f64 instantiation of the distribution.
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Coordinate chart for m×m Hermitian matrices, realified to ℝ^{m²}.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermCoords {
    pub size: usize,
}

impl HermCoords {
    pub fn new(size: usize) -> Self {
        HermCoords { size }
    }

    /// Real dimension m² of the coordinate space.
    pub fn dim(&self) -> usize {
        self.size * self.size
    }

    /// Flatten a Hermitian matrix into real coordinates.
    pub fn to_vec(&self, x: &CMatrix) -> DVector<f64> {
        let m = self.size;
        assert_eq!(x.nrows(), m);
        assert_eq!(x.ncols(), m);
        let mut v = DVector::zeros(self.dim());
        for i in 0..m {
            v[i] = x[(i, i)].re;
        }
        let mut k = m;
        for i in 0..m {
            for j in (i + 1)..m {
                v[k] = SQRT2 * x[(i, j)].re;
                v[k + 1] = SQRT2 * x[(i, j)].im;
                k += 2;
            }
        }
        v
    }

    /// Rebuild the Hermitian matrix from real coordinates.
    pub fn to_matrix(&self, v: &DVector<f64>) -> CMatrix {
        let m = self.size;
        assert_eq!(v.len(), self.dim());
        let mut x = CMatrix::zeros(m, m);
        for i in 0..m {
            x[(i, i)] = Complex::new(v[i], 0.0);
        }
        let mut k = m;
        for i in 0..m {
            for j in (i + 1)..m {
                let re = v[k] / SQRT2;
                let im = v[k + 1] / SQRT2;
                x[(i, j)] = Complex::new(re, im);
                x[(j, i)] = Complex::new(re, -im);
                k += 2;
            }
        }
        x
    }

    /// Realify a linear map L: Herm(m) → Herm(m) into an m²×m² real matrix
    /// by evaluating it on the coordinate basis.
    pub fn realify_linear<F>(&self, mut map: F) -> DMatrix<f64>
    where
        F: FnMut(&CMatrix) -> CMatrix,
    {
        let n = self.dim();
        let mut out = DMatrix::zeros(n, n);
        for a in 0..n {
            let mut e = DVector::zeros(n);
            e[a] = 1.0;
            let col = self.to_vec(&map(&self.to_matrix(&e)));
            out.set_column(a, &col);
        }
        out
    }

    /// Realified adjoint action X ↦ aX − Xa of a skew-Hermitian generator a.
    ///
    /// This is the Lie-algebra field of the conjugation action
    /// X ↦ exp(θa) X exp(θa)*, and is skew-symmetric in the realified
    /// coordinates because conjugation preserves the Frobenius metric.
    pub fn realify_ad(&self, a: &CMatrix) -> DMatrix<f64> {
        self.realify_linear(|x| a * x - x * a)
    }
}

/// Hermitian eigendecomposition with eigenvalues sorted ascending.
///
/// Returns (eigenvalues, unitary) with the i-th column of the unitary the
/// eigenvector of the i-th eigenvalue.
pub fn eigh_ascending(x: &CMatrix) -> (DVector<f64>, CMatrix) {
    let se = x.clone().symmetric_eigen();
    let m = x.nrows();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let mut vals = DVector::zeros(m);
    let mut vecs = CMatrix::zeros(m, m);
    for (dst, &src) in order.iter().enumerate() {
        vals[dst] = se.eigenvalues[src];
        vecs.set_column(dst, &se.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Haar-distributed random unitary via QR of a complex Ginibre matrix.
pub fn random_unitary<R: Rng>(size: usize, rng: &mut R) -> CMatrix {
    let g = CMatrix::from_fn(size, size, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex::new(re, im)
    });
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    // Fix the phase ambiguity so the distribution is Haar.
    for j in 0..size {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex::new(1.0, 0.0) };
        for i in 0..size {
            q[(i, j)] *= phase.conj();
        }
    }
    q
}

/// Trace of a complex matrix.
pub fn ctrace(x: &CMatrix) -> Complex<f64> {
    let mut t = Complex::new(0.0, 0.0);
    for i in 0..x.nrows() {
        t += x[(i, i)];
    }
    t
}

/// Identity matrix over ℂ.
pub fn ceye(size: usize) -> CMatrix {
    CMatrix::identity(size, size)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian<R: Rng>(m: usize, rng: &mut R) -> CMatrix {
        let g = CMatrix::from_fn(m, m, |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex::new(re, im)
        });
        (&g + g.adjoint()) * Complex::new(0.5, 0.0)
    }

    #[test]
    fn round_trip_and_frobenius_inner_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hc = HermCoords::new(3);
        for _ in 0..20 {
            let x = random_hermitian(3, &mut rng);
            let y = random_hermitian(3, &mut rng);
            let vx = hc.to_vec(&x);
            let vy = hc.to_vec(&y);
            assert!((hc.to_matrix(&vx) - &x).norm() < 1e-14);
            let frob = ctrace(&(&x * &y)).re;
            assert!((vx.dot(&vy) - frob).abs() < 1e-12);
        }
    }

    #[test]
    fn realified_ad_is_skew_symmetric() {
        let hc = HermCoords::new(3);
        let i = Complex::new(0.0, 1.0);
        let mut a = CMatrix::zeros(3, 3);
        a[(0, 0)] = i;
        a[(1, 1)] = -i;
        let ad = hc.realify_ad(&a);
        assert!((&ad + ad.transpose()).norm() < 1e-13);
    }

    #[test]
    fn eigh_sorts_ascending_and_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_hermitian(4, &mut rng);
        let (vals, u) = eigh_ascending(&x);
        for i in 1..4 {
            assert!(vals[i] >= vals[i - 1]);
        }
        let d = CMatrix::from_diagonal(&vals.map(|v| Complex::new(v, 0.0)));
        assert!((&u * d * u.adjoint() - &x).norm() < 1e-12);
    }

    #[test]
    fn random_unitary_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_unitary(3, &mut rng);
        assert!((u.adjoint() * &u - ceye(3)).norm() < 1e-12);
    }
}
