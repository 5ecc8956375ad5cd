//! Central finite-difference checks for gradients.

use crate::error::Result;
use crate::grad::{Tape, Tensor, Var};

/// Compares the analytic gradient of `f` at `x` against central finite
/// differences with step `eps` and returns the maximum relative error,
/// using `max(1, |analytic|)` as the denominator.
pub fn finite_diff_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &Var) -> Result<Var>,
{
    finite_diff_check_multi(|tape, vars| f(tape, &vars[0]), std::slice::from_ref(x), eps)
}

/// Multi-input variant of [`finite_diff_check`]; the maximum relative error
/// is taken over every element of every input.
pub fn finite_diff_check_multi<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&Tape, &[Var]) -> Result<Var>,
{
    let eval = |points: &[Tensor]| -> Result<f64> {
        let tape = Tape::new();
        let vars: Vec<Var> = points
            .iter()
            .map(|t| tape.from_tensor(t))
            .collect::<Result<_>>()?;
        Ok(f(&tape, &vars)?.scalar_value())
    };

    // Analytic gradients from one taped evaluation.
    let tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|t| tape.from_tensor(t))
        .collect::<Result<_>>()?;
    let loss = f(&tape, &vars)?;
    loss.backward()?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(Var::grad).collect();

    let mut worst = 0.0f64;
    for (which, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[which].values_mut()[i] += eps;
            let mut minus = inputs.to_vec();
            minus[which].values_mut()[i] -= eps;
            let fd = (eval(&plus)? - eval(&minus)?) / (2.0 * eps);
            let an = analytic[which][i];
            let rel = (fd - an).abs() / an.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn simple_quadratic_checks_out() {
        // f(x) = sum(x ⊙ x)
        let x = Tensor::new(&[3], vec![0.5, -1.0, 2.0]).unwrap();
        let err = finite_diff_check(|_, v| Ok(v.mul(v)?.sum()), &x, 1e-5).unwrap();
        assert!(err < 1e-8, "relative error {err}");
    }

    #[test]
    fn primitives_match_finite_differences() {
        // Random composites over every primitive, 100 seeds, shapes ≤ 8×8.
        for seed in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = rng.gen_range(2..=8);
            let cols = rng.gen_range(2..=8);
            let a = Tensor::new(
                &[rows, cols],
                (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let b = Tensor::new(
                &[rows, cols],
                (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let w = Tensor::new(
                &[cols, 3],
                (0..cols * 3).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap();
            let err = finite_diff_check_multi(
                |_, vars| {
                    let (a, b, w) = (&vars[0], &vars[1], &vars[2]);
                    let prod = a.mul(b)?;
                    let sm = prod.softmax(1)?;
                    let lin = sm.matmul(w)?;
                    let act = lin.sigmoid().clamp(1e-9, 1.0 - 1e-9).log()?;
                    let row = a.sum_axis(1)?.softmax(0)?;
                    let extra = row
                        .reshape(&[1, rows])?
                        .matmul(&b.relu().add_scalar(0.3))?
                        .softplus()
                        .mean();
                    let u = a.sum_axis(0)?;
                    let v = b.sum_axis(0)?.add_scalar(0.1);
                    let cs = u.cosine_sim(&v)?;
                    Ok(act
                        .sum()
                        .scale(0.25)
                        .add(&extra)?
                        .add(&cs)?
                        .add(&u.l2_norm().scale(0.1))?
                        .sub(&a.exp().mean())?
                        .mean())
                },
                &[a, b, w],
                1e-5,
            )
            .unwrap();
            assert!(err <= 1e-4, "seed {seed}: relative error {err}");
        }
    }

    #[test]
    fn linearity_of_gradients() {
        // grad(a·f + b·g) == a·grad f + b·grad g within 1e-9.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let x = Tensor::new(&[4], (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect()).unwrap();
            let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));

            let grad_of = |build: &dyn Fn(&Var) -> Result<Var>| -> Vec<f64> {
                let tape = Tape::new();
                let v = tape.from_tensor(&x).unwrap();
                let loss = build(&v).unwrap();
                loss.backward().unwrap();
                v.grad()
            };
            let f = |v: &Var| -> Result<Var> { Ok(v.sigmoid().sum()) };
            let g = |v: &Var| -> Result<Var> { Ok(v.mul(v)?.mean()) };
            let gf = grad_of(&f);
            let gg = grad_of(&g);
            let combined = grad_of(&|v: &Var| Ok(f(v)?.scale(a).add(&g(v)?.scale(b))?));
            for i in 0..4 {
                assert!((combined[i] - (a * gf[i] + b * gg[i])).abs() < 1e-9);
            }
        }
    }
}
