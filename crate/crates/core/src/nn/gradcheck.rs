use serde::Serialize;

use super::{GradientStore, NnError, ParamSet};

/// Worst relative error seen for one named parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries_checked: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub epsilon: f64,
    pub tolerance: f64,
    pub per_param: Vec<ParamCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.per_param.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.per_param.iter().all(|p| p.max_rel_error <= self.tolerance)
    }
}

/// Denominator floor for the relative error. Entries whose true gradient is
/// exactly zero would otherwise divide two rounding residues; 1e-8 sits well
/// above the f64 central-difference noise (about 1e-13 for eps = 1e-3).
const DENOMINATOR_FLOOR: f64 = 1e-8;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(DENOMINATOR_FLOOR)
}

/// Compare `analytic` against central differences of `loss` for every entry
/// of every parameter (or every `stride`-th entry, to bound the cost on large
/// tables). Parameters are restored after each probe.
pub fn gradcheck<P, F>(
    model: &mut P,
    loss: F,
    analytic: &GradientStore<f64>,
    epsilon: f64,
    tolerance: f64,
    stride: usize,
) -> Result<GradcheckReport, NnError>
where
    P: ParamSet<f64>,
    F: Fn(&P) -> f64,
{
    analytic.check_matches(model)?;
    let stride = stride.max(1);
    let names: Vec<(String, usize)> = model.named_params().into_iter().map(|(n, t)| (n, t.len())).collect();
    let mut per_param = Vec::with_capacity(names.len());
    for (name, len) in names {
        let grad = analytic.get(&name).expect("checked above").data().to_vec();
        let mut check = ParamCheck {
            name: name.clone(),
            entries_checked: 0,
            max_rel_error: 0.0,
            worst_index: 0,
            analytic: 0.0,
            numeric: 0.0,
        };
        for idx in (0..len).step_by(stride) {
            let original = read_entry(model, &name, idx);
            write_entry(model, &name, idx, original + epsilon);
            let up = loss(model);
            write_entry(model, &name, idx, original - epsilon);
            let down = loss(model);
            write_entry(model, &name, idx, original);
            let numeric = (up - down) / (2.0 * epsilon);
            if !numeric.is_finite() {
                return Err(NnError::NonFinite(format!("numeric gradient of {name}[{idx}]")));
            }
            let err = relative_error(grad[idx], numeric);
            check.entries_checked += 1;
            if err > check.max_rel_error || check.entries_checked == 1 {
                check.max_rel_error = err;
                check.worst_index = idx;
                check.analytic = grad[idx];
                check.numeric = numeric;
            }
        }
        per_param.push(check);
    }
    Ok(GradcheckReport { epsilon, tolerance, per_param })
}

fn read_entry<P: ParamSet<f64>>(model: &P, name: &str, idx: usize) -> f64 {
    model.param(name).expect("parameter listed").data()[idx]
}

fn write_entry<P: ParamSet<f64>>(model: &mut P, name: &str, idx: usize, value: f64) {
    model.visit_params_mut(&mut |n, t| {
        if n == name {
            t.data_mut()[idx] = value;
        }
    });
}
