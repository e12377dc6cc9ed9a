use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{GradMap, ParamStore};
use super::scalar::Scalar;
use crate::error::Result;

/// Worst observed coordinate for one parameter.
#[derive(Clone, Debug)]
pub struct GradCheckItem {
    pub name: String,
    pub coords_checked: usize,
    pub max_rel_err: f64,
    pub worst_flat_index: usize,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
}

#[derive(Clone, Debug, Default)]
pub struct GradCheckReport {
    pub items: Vec<GradCheckItem>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.items
            .iter()
            .map(|i| i.max_rel_err)
            .fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_err() < tol
    }
}

/// Compare analytic gradients against central finite differences.
///
/// `f` must be a deterministic map from parameter values to a scalar loss
/// plus its analytic gradient; any stochastic choices (actions, episodes)
/// and any stop-gradient targets must be frozen outside of it so that
/// perturbing a parameter moves the loss only along differentiable paths.
/// Per coordinate: rel = |analytic − central| / (|central| + 1e-8).
pub fn finite_diff_check<F, Func>(
    store: &mut ParamStore<F>,
    mut f: Func,
    h: f64,
    samples_per_param: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Scalar,
    Func: FnMut(&ParamStore<F>) -> Result<(f64, GradMap<F>)>,
{
    let (_, analytic) = f(store)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<String> = store.names().map(|s| s.to_string()).collect();
    let mut report = GradCheckReport::default();

    for name in names {
        let len = store.get(&name).len();
        let mut coords: Vec<usize> = (0..len).collect();
        coords.shuffle(&mut rng);
        coords.truncate(samples_per_param.min(len));
        coords.sort_unstable();

        let mut item = GradCheckItem {
            name: name.clone(),
            coords_checked: coords.len(),
            max_rel_err: 0.0,
            worst_flat_index: 0,
            analytic_at_worst: 0.0,
            numeric_at_worst: 0.0,
        };
        for &c in &coords {
            let orig = store.get(&name).data[c];
            store.get_mut(&name).data[c] = orig + F::of(h);
            let (lp, _) = f(store)?;
            store.get_mut(&name).data[c] = orig - F::of(h);
            let (lm, _) = f(store)?;
            store.get_mut(&name).data[c] = orig;

            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.get(&name)[c].to_f64();
            let rel = (a - numeric).abs() / (numeric.abs() + 1e-8);
            if rel > item.max_rel_err {
                item.max_rel_err = rel;
                item.worst_flat_index = c;
                item.analytic_at_worst = a;
                item.numeric_at_worst = numeric;
            }
        }
        report.items.push(item);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::params::TapeBinding;
    use crate::numerics::tape::Tape;
    use crate::numerics::tensor::Tensor;

    #[test]
    fn quadratic_gradient_is_exact() {
        // f(x) = x^2 at x = 3: analytic 6, central difference 6.
        let mut store: ParamStore<f64> = ParamStore::new();
        store.insert("x", Tensor::row(vec![3.0]));
        let report = finite_diff_check(
            &mut store,
            |s| {
                let mut tape = Tape::new();
                let b = TapeBinding::bind(&mut tape, s);
                let x = b.id("x");
                let y = tape.hadamard(x, x)?;
                let loss = tape.sum(y);
                tape.backward(loss)?;
                Ok((tape.scalar_value(loss), b.export_grads(&tape)))
            },
            1e-4,
            8,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-8, "rel = {}", report.max_rel_err());
    }

    #[test]
    fn composed_graph_passes() {
        let mut store: ParamStore<f64> = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        store.add_uniform("w1", 4, 3, &mut rng);
        store.add_uniform("w2", 3, 2, &mut rng);
        let report = finite_diff_check(
            &mut store,
            |s| {
                let mut tape = Tape::new();
                let b = TapeBinding::bind(&mut tape, s);
                let x = tape.constant_row(vec![0.3, -0.7, 1.1, 0.2]);
                let h = tape.matmul(x, b.id("w1"))?;
                let a = tape.tanh(h)?;
                let o = tape.matmul(a, b.id("w2"))?;
                let lp = tape.log_softmax_rows(o)?;
                let p = tape.softmax_rows(o)?;
                let plog = tape.hadamard(p, lp)?;
                let loss = tape.sum(plog);
                tape.backward(loss)?;
                Ok((tape.scalar_value(loss), b.export_grads(&tape)))
            },
            1e-4,
            12,
            0,
        )
        .unwrap();
        assert!(report.max_rel_err() < 1e-4, "rel = {}", report.max_rel_err());
    }
}
