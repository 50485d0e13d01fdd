use crate::error::{Error, Result};

use super::Tensor;

/// Comparison of analytic and central-difference gradients for one parameter.
#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    /// Flat index of the worst element.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().fold(0.0, |m, p| m.max(p.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }
}

/// `|a - n| / max(|a|, |n|, 1e-8)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Checks analytic gradients against central differences
/// `(f(x + h) - f(x - h)) / 2h`, one element at a time.
///
/// `objective` receives the parameters in the order given by `params`.
/// Parameters left out of `params` are treated as frozen and do not appear
/// in the report. The objective is evaluated twice at the base point first;
/// any difference aborts the check.
pub fn grad_check<F>(
    mut objective: F,
    params: &[(&str, &Tensor)],
    analytic: &[&Tensor],
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor]) -> Result<f64>,
{
    if params.len() != analytic.len() {
        return Err(Error::Dimension(format!(
            "{} parameters but {} analytic gradients",
            params.len(),
            analytic.len()
        )));
    }
    for ((name, p), g) in params.iter().zip(analytic) {
        if p.shape() != g.shape() {
            return Err(Error::Dimension(format!(
                "gradient for {name} has shape {:?}, parameter has {:?}",
                g.shape(),
                p.shape()
            )));
        }
    }
    if !(h > 0.0) {
        return Err(Error::Parameter(format!(
            "perturbation must be positive, got {h}"
        )));
    }

    let mut point: Vec<Tensor> = params.iter().map(|(_, t)| (*t).clone()).collect();
    let first = objective(&point)?;
    let second = objective(&point)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Nondeterministic { first, second });
    }

    let mut checks = Vec::with_capacity(params.len());
    for (pi, (name, _)) in params.iter().enumerate() {
        let mut worst = ParamCheck {
            name: (*name).to_string(),
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for i in 0..point[pi].len() {
            let orig = point[pi].data()[i];
            point[pi].data_mut()[i] = orig + h;
            let plus = objective(&point)?;
            point[pi].data_mut()[i] = orig - h;
            let minus = objective(&point)?;
            point[pi].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[pi].data()[i];
            let err = relative_error(a, numeric);
            if err > worst.max_rel_error || !err.is_finite() {
                worst.max_rel_error = if err.is_finite() { err } else { f64::INFINITY };
                worst.worst_index = i;
                worst.analytic = a;
                worst.numeric = numeric;
            }
        }
        checks.push(worst);
    }
    Ok(GradCheckReport {
        params: checks,
        tolerance,
    })
}
