//! Squared maximum mean discrepancy with a Gaussian kernel.
//!
//! Each distribution row is treated as `D` scalar samples (its per-position
//! probability masses). The mean embeddings are never formed; every term is
//! a kernel sum.

use crate::error::{config_err, shape_err, Result};
use crate::scalar::Real;

/// `exp(−(a−b)² / 2σ²)`
#[inline]
pub fn gaussian_kernel<S: Real>(a: S, b: S, sigma: S) -> S {
    let d = a - b;
    (-(d * d) / (S::of(2.0) * sigma * sigma)).exp()
}

/// `Σ_a Σ_b k(x_a, y_b)`
pub(crate) fn kernel_sum<S: Real>(x: &[S], y: &[S], sigma: S) -> S {
    let mut total = S::zero();
    for &a in x {
        for &b in y {
            total += gaussian_kernel(a, b, sigma);
        }
    }
    total
}

/// Adds `scale · ∂/∂x_e Σ_b k(x_e, y_b)` to `out[e]` for every `e`.
pub(crate) fn kernel_sum_grad<S: Real>(x: &[S], y: &[S], sigma: S, scale: S, out: &mut [S]) {
    let inv_var = S::one() / (sigma * sigma);
    for (slot, &a) in out.iter_mut().zip(x) {
        let mut acc = S::zero();
        for &b in y {
            acc += gaussian_kernel(a, b, sigma) * (b - a);
        }
        *slot += scale * acc * inv_var;
    }
}

fn check<S: Real>(p: &[S], q: &[S], sigma: S) -> Result<()> {
    if !(sigma > S::zero()) {
        return config_err(format!("kernel bandwidth must be > 0, got {sigma:?}"));
    }
    if p.len() != q.len() || p.is_empty() {
        return shape_err(format!("MMD needs two equal-length rows, got {} and {}", p.len(), q.len()));
    }
    Ok(())
}

/// `(1/D²)·[Σ k(p,p') + Σ k(q,q') − 2 Σ k(p,q)]`
pub fn mmd_squared<S: Real>(p: &[S], q: &[S], sigma: S) -> Result<S> {
    check(p, q, sigma)?;
    let d = S::of(p.len() as f64);
    let value = kernel_sum(p, p, sigma) + kernel_sum(q, q, sigma) - S::of(2.0) * kernel_sum(p, q, sigma);
    Ok(value / (d * d))
}

/// Gradients of [`mmd_squared`] with respect to both rows.
pub fn mmd_squared_grad<S: Real>(p: &[S], q: &[S], sigma: S) -> Result<(Vec<S>, Vec<S>)> {
    check(p, q, sigma)?;
    let d = S::of(p.len() as f64);
    let two = S::of(2.0) / (d * d);
    let mut gp = vec![S::zero(); p.len()];
    let mut gq = vec![S::zero(); q.len()];
    kernel_sum_grad(p, p, sigma, two, &mut gp);
    kernel_sum_grad(p, q, sigma, -two, &mut gp);
    kernel_sum_grad(q, q, sigma, two, &mut gq);
    kernel_sum_grad(q, p, sigma, -two, &mut gq);
    Ok((gp, gq))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_rows_have_zero_discrepancy() {
        let p = [0.1f64, 0.2, 0.3, 0.4];
        assert!(mmd_squared(&p, &p, 0.5).unwrap().abs() <= 1e-15);
    }

    #[test]
    fn two_point_example_matches_hand_sum() {
        // p = [1,0], q = [0,1], σ = 1: the sample multisets coincide, so every
        // kernel term cancels: (k11+k10+k01+k00)·2 − 2·(k10+k11+k00+k01) = 0.
        let v = mmd_squared(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap();
        let k = |a: f64, b: f64| (-(a - b).powi(2) / 2.0).exp();
        let pp = k(1., 1.) + k(1., 0.) + k(0., 1.) + k(0., 0.);
        let qq = pp;
        let pq = k(1., 0.) + k(1., 1.) + k(0., 0.) + k(0., 1.);
        assert_eq!(v, (pp + qq - 2.0 * pq) / 4.0);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(mmd_squared(&[0.5, 0.5], &[0.5, 0.5], 0.0).is_err());
        assert!(mmd_squared(&[0.5, 0.5], &[1.0], 1.0).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = [0.7f64, 0.1, 0.15, 0.05];
        let q = [0.25f64, 0.25, 0.3, 0.2];
        let (gp, gq) = mmd_squared_grad(&p, &q, 0.3).unwrap();
        let h = 1e-6;
        for e in 0..4 {
            let mut pp = p;
            pp[e] += h;
            let mut pm = p;
            pm[e] -= h;
            let fd = (mmd_squared(&pp, &q, 0.3).unwrap() - mmd_squared(&pm, &q, 0.3).unwrap()) / (2.0 * h);
            assert!((fd - gp[e]).abs() < 1e-8, "p[{e}]: {fd} vs {}", gp[e]);
            let mut qp = q;
            qp[e] += h;
            let mut qm = q;
            qm[e] -= h;
            let fd = (mmd_squared(&p, &qp, 0.3).unwrap() - mmd_squared(&p, &qm, 0.3).unwrap()) / (2.0 * h);
            assert!((fd - gq[e]).abs() < 1e-8);
        }
    }
}
