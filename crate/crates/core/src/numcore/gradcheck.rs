//! Central finite-difference check of analytic gradients.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
pub const DEFAULT_COORDINATES: usize = 200;
/// Denominator floor for the relative error. Central differences at
/// `DEFAULT_STEP` carry absolute noise near 1e-9 on losses of order one, so
/// gradients smaller than the floor are compared absolutely.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// A scalar objective over a parameter set.
pub trait Objective {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn loss(&self) -> Result<f64>;
    /// Loss plus one dense gradient per parameter, in parameter order.
    fn loss_and_grad(&self) -> Result<(f64, Vec<Tensor>)>;
}

#[derive(Clone, Debug, Serialize)]
pub struct CoordinateCheck {
    pub param: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub checked: usize,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub failures: Vec<CoordinateCheck>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.checked > 0
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Compares analytic gradients against central differences on `coords`
/// randomly chosen coordinates. Every parameter tensor contributes at least
/// one coordinate; the remainder is drawn uniformly over all values.
pub fn gradcheck<O: Objective>(obj: &mut O, coords: usize, tolerance: f64, seed: u64) -> Result<GradcheckReport> {
    let (_, analytic) = obj.loss_and_grad()?;
    let sizes: Vec<usize> = obj.params().iter().map(|p| p.value.len()).collect();
    if analytic.len() != sizes.len() {
        return Err(Error::shape(format!("{} gradients for {} parameters", analytic.len(), sizes.len())));
    }
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Err(Error::param("objective has no parameters"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0, |acc, &n| {
            let start = *acc;
            *acc += n;
            Some(start)
        })
        .collect();
    let mut flat: Vec<usize> = offsets
        .iter()
        .zip(&sizes)
        .filter(|(_, &n)| n > 0)
        .map(|(&start, &n)| start + rng.gen_range(0..n))
        .collect();
    let want = coords.min(total).max(flat.len());
    let extra = rand::seq::index::sample(&mut rng, total, (want + flat.len()).min(total));
    for i in extra.iter() {
        if flat.len() >= want {
            break;
        }
        if !flat.contains(&i) {
            flat.push(i);
        }
    }
    flat.shuffle(&mut rng);
    let picks: Vec<(usize, usize)> = flat
        .into_iter()
        .map(|i| {
            let p = offsets.partition_point(|&o| o <= i) - 1;
            (p, i - offsets[p])
        })
        .collect();

    let mut report = GradcheckReport {
        checked: 0,
        tolerance,
        max_rel_error: 0.0,
        failures: Vec::new(),
    };
    let ids: Vec<_> = (0..sizes.len()).map(super::ParamId).collect();
    for (p, i) in picks {
        let id = ids[p];
        let original = obj.params().get(id).value.data()[i];
        obj.params_mut().get_mut(id).value.data_mut()[i] = original + DEFAULT_STEP;
        let up = obj.loss()?;
        obj.params_mut().get_mut(id).value.data_mut()[i] = original - DEFAULT_STEP;
        let down = obj.loss()?;
        obj.params_mut().get_mut(id).value.data_mut()[i] = original;

        let numeric = (up - down) / (2.0 * DEFAULT_STEP);
        let a = analytic[p].data()[i];
        let rel = relative_error(a, numeric);
        report.checked += 1;
        report.max_rel_error = report.max_rel_error.max(rel);
        if !(rel < tolerance) {
            report.failures.push(CoordinateCheck {
                param: obj.params().get(id).name.clone(),
                index: i,
                analytic: a,
                numeric,
                rel_error: rel,
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::Graph;

    /// `sum(sigmoid(xW + b)^2)` with an optional deliberately wrong gradient.
    struct Quadratic {
        params: ParamSet,
        negate: Option<usize>,
    }

    impl Quadratic {
        fn new(negate: Option<usize>) -> Self {
            let mut params = ParamSet::new();
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            let w = (0..12 * 20).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
            params.add("w", Tensor::matrix(12, 20, w).unwrap());
            params.add("b", Tensor::matrix(1, 20, b).unwrap());
            Quadratic { params, negate }
        }

        fn run(&self) -> (f64, Vec<Tensor>) {
            let mut g = Graph::new(&self.params);
            let x = g.constant(Tensor::matrix(3, 12, (0..36).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap());
            let w = g.param(super::super::ParamId(0));
            let b = g.param(super::super::ParamId(1));
            let y = g.matmul(x, w).unwrap();
            let y = g.add_bias(y, b).unwrap();
            let y = g.sigmoid(y);
            let yy = g.mul(y, y).unwrap();
            let loss = g.sum(yy);
            let mut grads = g.backward(loss).unwrap().to_dense(&self.params);
            if let Some(i) = self.negate {
                let d = grads[0].data_mut();
                d[i] = -d[i];
            }
            (g.scalar(loss), grads)
        }
    }

    impl Objective for Quadratic {
        fn params(&self) -> &ParamSet {
            &self.params
        }
        fn params_mut(&mut self) -> &mut ParamSet {
            &mut self.params
        }
        fn loss(&self) -> Result<f64> {
            Ok(self.run().0)
        }
        fn loss_and_grad(&self) -> Result<(f64, Vec<Tensor>)> {
            Ok(self.run())
        }
    }

    #[test]
    fn passes_on_exact_gradients() {
        let report = gradcheck(&mut Quadratic::new(None), DEFAULT_COORDINATES, DEFAULT_TOLERANCE, 0).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 200);
    }

    #[test]
    fn catches_a_negated_coordinate() {
        // check every coordinate so the mutated one is always visited
        let report = gradcheck(&mut Quadratic::new(Some(17)), 260, DEFAULT_TOLERANCE, 0).unwrap();
        assert!(!report.passed());
        assert_eq!(report.failures.len(), 1);
        assert_eq!((report.failures[0].param.as_str(), report.failures[0].index), ("w", 17));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-9, 2e-9) < 1e-4);
    }
}
