use super::params::{accumulate_grads, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true
/// gradient is ~0 are judged by absolute error instead.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub coords: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error() <= tol
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences `(f(θ+ε) − f(θ−ε)) / 2ε`, one coordinate at a time.
///
/// `f` builds the computation on a fresh tape, binding parameters with
/// [`Tape::param`], and returns the scalar output.
pub fn grad_check<F>(params: &ParamSet, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamSet) -> Var,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let out = f(&mut tape, p);
        let v = tape.value(out).item();
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("grad_check objective evaluated to {v}")))
        }
    };

    let mut tape = Tape::new();
    let out = f(&mut tape, params);
    if !tape.value(out).item().is_finite() {
        return Err(Error::Numeric("grad_check objective is not finite".into()));
    }
    let analytic = accumulate_grads(params, tape.backward(out).into_params());

    let mut probe = params.clone();
    let mut report = Vec::with_capacity(params.len());
    for id in params.ids() {
        let mut worst = 0.0f64;
        let n = params.get(id).len();
        for k in 0..n {
            let original = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = original + eps;
            let plus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = original - eps;
            let minus = eval(&probe)?;
            probe.get_mut(id).data_mut()[k] = original;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.0].data()[k];
            if !a.is_finite() {
                return Err(Error::Numeric(format!(
                    "analytic gradient of `{}`[{k}] is {a}",
                    params.name(id)
                )));
            }
            worst = worst.max(relative_error(a, numeric));
        }
        report.push(ParamCheck {
            name: params.name(id).to_string(),
            max_rel_error: worst,
            coords: n,
        });
    }
    Ok(GradCheckReport { params: report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;

    #[test]
    fn square_at_three() {
        let mut set = ParamSet::new();
        let x = set.register("x", Tensor::scalar(3.0), true);
        let report = grad_check(&set, 1e-5, |tape, p| {
            let v = tape.param(x, p.get(x));
            tape.sum_squares(v)
        })
        .unwrap();
        assert!(report.max_rel_error() < 1e-9);

        let mut tape = Tape::new();
        let v = tape.param(x, set.get(x));
        let y = tape.sum_squares(v);
        let g = tape.backward(y);
        assert_eq!(g.params()[0].1.item(), 6.0);
    }

    #[test]
    fn non_finite_objective_is_fatal() {
        let mut set = ParamSet::new();
        let x = set.register("x", Tensor::scalar(0.0), true);
        let err = grad_check(&set, 1e-5, |tape, p| {
            let v = tape.param(x, p.get(x));
            let l = tape.log(v);
            tape.sum(l)
        });
        assert!(matches!(err, Err(Error::Numeric(_))));
    }
}
