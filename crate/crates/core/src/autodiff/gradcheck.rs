use alloc::format;
use alloc::vec::Vec;

use super::{Tape, Tensor, Var};
use crate::{Error, Result};

/// Outcome of a central-difference comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Index of the input tensor holding the worst coordinate.
    pub worst_param: usize,
    pub worst_coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coords_checked: usize,
}

/// `|a − b| / max(1e−8, |a| + |b|)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

fn evaluate<F>(f: &mut F, params: &[Tensor]) -> Result<f64>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &leaves)?;
    tape.value(out)
        .item()
        .ok_or_else(|| Error::Contract("gradient check needs a scalar objective".into()))
}

/// Compares reverse-mode gradients of the scalar graph built by `f` against
/// central differences `(f(θ+ε) − f(θ−ε)) / 2ε`, coordinate by coordinate.
///
/// `f` receives a fresh tape and one leaf per entry of `params` and must
/// return a scalar. It has to be deterministic: it is evaluated twice at the
/// unperturbed point and any difference is reported as a contract error.
pub fn finite_diff_check<F>(params: &[Tensor], epsilon: f64, mut f: F) -> Result<GradCheck>
where
    F: FnMut(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(epsilon > 0.0) {
        return Err(Error::Parameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let first = evaluate(&mut f, params)?;
    let second = evaluate(&mut f, params)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Contract(format!(
            "objective is not deterministic ({first} vs {second})"
        )));
    }

    let mut tape = Tape::new();
    let leaves: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &leaves)?;
    let grads = tape.backward(out)?;
    let analytic: Vec<Tensor> = leaves.iter().map(|&v| grads.wrt(&tape, v)).collect();
    drop(tape);

    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst_param: 0,
        worst_coord: 0,
        analytic: 0.0,
        numeric: 0.0,
        coords_checked: 0,
    };
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        for ci in 0..grad.len() {
            let orig = work[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + epsilon;
            let plus = evaluate(&mut f, &work)?;
            work[pi].data_mut()[ci] = orig - epsilon;
            let minus = evaluate(&mut f, &work)?;
            work[pi].data_mut()[ci] = orig;

            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[ci];
            let err = relative_error(a, numeric);
            report.coords_checked += 1;
            if err > report.max_rel_error || !err.is_finite() {
                report.max_rel_error = err;
                report.worst_param = pi;
                report.worst_coord = ci;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Activation;
    use alloc::vec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(
            shape.to_vec(),
            (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn quadratic_is_exact() {
        let r = finite_diff_check(&[Tensor::scalar(3.0)], 1e-5, |t, v| t.mul(v[0], v[0])).unwrap();
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        assert!((r.analytic - 6.0).abs() < 1e-12);
    }

    #[test]
    fn constant_objective_has_zero_error() {
        let r = finite_diff_check(&[Tensor::filled(&[3], 1.0)], 1e-5, |t, v| {
            let z = t.affine(v[0], 0.0, 2.0);
            Ok(t.sum(z))
        })
        .unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.analytic, 0.0);
    }

    #[test]
    fn nondeterminism_is_detected() {
        let mut calls = 0u32;
        let err = finite_diff_check(&[Tensor::scalar(1.0)], 1e-5, |t, v| {
            calls += 1;
            let s = t.affine(v[0], 1.0, calls as f64);
            Ok(t.sum(s))
        })
        .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn matmul_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let r = finite_diff_check(&[a, b], 1e-6, |t, v| {
            let p = t.matmul(v[0], v[1])?;
            Ok(t.sum(p))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn concat_and_slice_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let params = vec![
            random(&mut rng, &[2, 3]),
            random(&mut rng, &[2, 2]),
            random(&mut rng, &[4, 1]),
        ];
        let r = finite_diff_check(&params, 1e-6, |t, v| {
            let c = t.concat(&[v[0], v[1]], 1)?;
            let s = t.slice_cols(c, 1, 5)?;
            let th = t.activation(s, Activation::Tanh);
            let c0 = t.concat(&[th, th], 0)?;
            let k = t_const(t, 4);
            let w = t.matmul(c0, k)?;
            let sq = t.mul(w, w)?;
            let last = t.concat(&[sq, v[2]], 1)?;
            let r = t.reshape(last, vec![2, 4])?;
            let q = t.mul(r, r)?;
            Ok(t.sum(q))
        });
        fn t_const(t: &mut Tape, n: usize) -> Var {
            let data = (0..n).map(|i| 0.3 * i as f64 - 0.4).collect();
            t.constant(Tensor::matrix(n, 1, data).unwrap())
        }
        let r = r.unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }

    #[test]
    fn softmax_scale_and_groups_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let params = vec![random(&mut rng, &[2, 4]), random(&mut rng, &[8, 3])];
        let r = finite_diff_check(&params, 1e-6, |t, v| {
            let mask = [true, false, true, true, true, true, false, true];
            let s = t.masked_softmax_rows(v[0], 0.7, &mask)?;
            let col = t.reshape(s, vec![8, 1])?;
            let scaled = t.scale_rows(v[1], col)?;
            let pooled = t.sum_row_groups(scaled, 4)?;
            let sig = t.activation(pooled, Activation::Sigmoid);
            let probs = t.softmax_rows(sig, 1.0)?;
            t.nll_loss(probs, &[2, 0])
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-6, "{r:?}");
    }
}
