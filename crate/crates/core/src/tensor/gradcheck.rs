use super::{Bound, ParamSet, Tape, Tensor, TensorError, Var};

/// Largest disagreement found by [`grad_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `name[flat index]` of the worst coordinate.
    pub worst: String,
    pub coordinates: usize,
}

const STEP: f64 = 1e-5;

/// Compares tape gradients of `f` against central finite differences.
///
/// `f` must be deterministic: any noise it consumes has to be regenerated
/// from a fixed seed on every call. The relative error per coordinate is
/// `|analytic - numeric| / max(1e-8, |analytic| + |numeric|)`.
pub fn grad_check<F>(params: &ParamSet<f64>, f: F) -> Result<GradCheckReport, TensorError>
where
    F: for<'t> Fn(&'t Tape<f64>, &Bound<'t, f64>) -> Result<Var<'t, f64>, TensorError>,
{
    let eval = |ps: &ParamSet<f64>| -> Result<f64, TensorError> {
        let tape = Tape::no_grad();
        let bound = tape.bind(ps);
        f(&tape, &bound)?.item()
    };

    let first = eval(params)?;
    let second = eval(params)?;
    if first.to_bits() != second.to_bits() {
        return Err(TensorError::Contract(format!(
            "function is not deterministic: {first} vs {second}"
        )));
    }

    let tape = Tape::new();
    let bound = tape.bind(params);
    let loss = f(&tape, &bound)?;
    let grads = tape.backward(loss)?;

    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: String::new(),
        coordinates: 0,
    };
    let ids: Vec<_> = (0..params.len()).map(super::ParamId).collect();
    for id in ids {
        let n = params.value(id).len();
        let zero = Tensor::zeros(params.value(id).shape());
        let analytic = grads.get(params, id).unwrap_or(&zero).clone();
        for i in 0..n {
            let orig = params.value(id).data()[i];
            probe.get_mut(id).value_mut().data_mut()[i] = orig + STEP;
            let plus = eval(&probe)?;
            probe.get_mut(id).value_mut().data_mut()[i] = orig - STEP;
            let minus = eval(&probe)?;
            probe.get_mut(id).value_mut().data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * STEP);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
            report.coordinates += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst = format!("{}[{i}] analytic={a:e} numeric={numeric:e}", params.get(id).name);
            }
        }
    }
    Ok(report)
}
