use super::{Tape, Tensor, TensorError, Var};

/// Checks analytic gradients of a scalar-valued function against central
/// finite differences.
///
/// `f` receives a fresh tape plus one registered leaf per entry of `params`
/// and must return a single-element node. The result is the worst relative
/// error over every parameter element,
/// `|analytic - central| / (|analytic| + |central| + 1e-12)`.
pub fn finite_diff_check<F>(f: F, params: &[Tensor], h: f64) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |tensors: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = tensors
            .iter()
            .map(|p| tape.leaf(p.clone().with_requires_grad(false)))
            .collect();
        let out = f(&mut tape, &vars)?;
        if tape.data(out).len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: tape.shape(out).to_vec(),
            });
        }
        Ok(tape.data(out)[0])
    };

    // analytic pass
    let mut tape = Tape::new();
    let vars: Vec<Var> = params
        .iter()
        .map(|p| tape.leaf(p.clone().with_requires_grad(true)))
        .collect();
    let loss = f(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            tape.grad(v)
                .map(|g| g.to_vec())
                .unwrap_or_else(|| vec![0.0; p.numel()])
        })
        .collect();

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, p) in params.iter().enumerate() {
        for j in 0..p.numel() {
            let orig = p.data()[j];
            work[pi].data_mut()[j] = orig + h;
            let plus = eval(&work)?;
            work[pi].data_mut()[j] = orig - h;
            let minus = eval(&work)?;
            work[pi].data_mut()[j] = orig;
            let central = (plus - minus) / (2.0 * h);
            let a = analytic[pi][j];
            let rel = (a - central).abs() / (a.abs() + central.abs() + 1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::LAYER_NORM_EPS;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_tensor(rng: &mut ChaCha20Rng, shape: &[usize], scale: f64) -> Tensor {
        let n: usize = shape.iter().product();
        let data: Vec<f64> = (0..n).map(|_| rng.random_range(-scale..scale)).collect();
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn quadratic_gradients_are_nearly_exact() {
        let x = Tensor::new(&[4], vec![0.5, -1.5, 2.0, 3.25]).unwrap();
        let err = finite_diff_check(
            |tape, vars| {
                let sq = tape.mul(vars[0], vars[0])?;
                let scaled = tape.mul_scalar(sq, 3.0);
                Ok(tape.sum(scaled))
            },
            &[x],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-8, "quadratic fd error {err}");
    }

    #[test]
    fn linear_layer_gradients_match() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let x = random_tensor(&mut rng, &[3, 4], 1.0);
        let w = random_tensor(&mut rng, &[4, 2], 1.0);
        let b = random_tensor(&mut rng, &[2], 1.0);
        let err = finite_diff_check(
            |tape, vars| {
                let y = tape.linear(vars[0], vars[1], vars[2])?;
                Ok(tape.sum(y))
            },
            &[x, w, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "linear fd error {err}");
    }

    #[test]
    fn elementwise_chain_gradients_match() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let a = random_tensor(&mut rng, &[6], 1.5);
        let mut b = random_tensor(&mut rng, &[6], 0.4);
        // keep denominators and log/gamma arguments well away from zero
        for v in b.data_mut() {
            *v += 2.0;
        }
        let err = finite_diff_check(
            |tape, vars| {
                let q = tape.div(vars[0], vars[1])?;
                let sp = tape.softplus(q);
                let shifted = tape.add_scalar(sp, 1.5);
                let lg = tape.ln_gamma(shifted);
                let lnb = tape.ln(vars[1]);
                let both = tape.add(lg, lnb)?;
                let prod = tape.mul(both, vars[0])?;
                let diff = tape.sub(prod, vars[1])?;
                Ok(tape.sum(diff))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "elementwise fd error {err}");
    }

    #[test]
    fn softmax_gradients_match() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let x = random_tensor(&mut rng, &[2, 5], 2.0);
        let wts = random_tensor(&mut rng, &[2, 5], 1.0);
        for axis in [0, 1] {
            let w = wts.clone();
            let err = finite_diff_check(
                |tape, vars| {
                    let y = tape.softmax(vars[0], axis)?;
                    let c = tape.constant(&w);
                    let weighted = tape.mul(y, c)?;
                    Ok(tape.sum(weighted))
                },
                std::slice::from_ref(&x),
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-7, "softmax axis {axis} fd error {err}");
        }
    }

    #[test]
    fn layer_norm_gradients_match() {
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let x = random_tensor(&mut rng, &[3, 6], 1.0);
        let gain = random_tensor(&mut rng, &[6], 1.0);
        let bias = random_tensor(&mut rng, &[6], 1.0);
        let wts = random_tensor(&mut rng, &[3, 6], 1.0);
        let err = finite_diff_check(
            |tape, vars| {
                let y = tape.layer_norm(vars[0], vars[1], vars[2])?;
                let c = tape.constant(&wts);
                let weighted = tape.mul(y, c)?;
                Ok(tape.sum(weighted))
            },
            &[x, gain, bias],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "layer_norm fd error {err}");
        let _ = LAYER_NORM_EPS;
    }

    #[test]
    fn matmul_gradients_match_both_forms() {
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        // 2-D rhs broadcast over a batch
        let a = random_tensor(&mut rng, &[2, 3, 4], 1.0);
        let w = random_tensor(&mut rng, &[4, 2], 1.0);
        let err = finite_diff_check(
            |tape, vars| {
                let y = tape.matmul(vars[0], vars[1])?;
                Ok(tape.sum(y))
            },
            &[a.clone(), w],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "broadcast matmul fd error {err}");
        // fully batched
        let b = random_tensor(&mut rng, &[2, 4, 3], 1.0);
        let err = finite_diff_check(
            |tape, vars| {
                let y = tape.matmul(vars[0], vars[1])?;
                Ok(tape.sum(y))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "batched matmul fd error {err}");
    }

    #[test]
    fn transpose_reshape_gradients_match() {
        let mut rng = ChaCha20Rng::seed_from_u64(19);
        let x = random_tensor(&mut rng, &[2, 3, 4], 1.0);
        let wts = random_tensor(&mut rng, &[4, 6], 1.0);
        let err = finite_diff_check(
            |tape, vars| {
                let t = tape.transpose(vars[0], 0, 2)?;
                let r = tape.reshape(t, &[4, 6])?;
                let c = tape.constant(&wts);
                let m = tape.mul(r, c)?;
                Ok(tape.sum(m))
            },
            std::slice::from_ref(&x),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-7, "transpose/reshape fd error {err}");
    }
}
