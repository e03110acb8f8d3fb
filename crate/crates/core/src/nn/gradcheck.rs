use rand::Rng;

use super::{Network, Tape};
use crate::encode::{PhaseMatrix, StateTensor};
use crate::error::{Error, Result};

/// Result of comparing analytic gradients against central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    /// Draws rejected because the perturbation crossed a ReLU or max-pool
    /// boundary on one of the inputs.
    pub skipped: usize,
    pub max_rel_err: f64,
    /// Parameter array and index of the worst entry.
    pub worst: (String, usize),
}

/// Relative error with a floor on the denominator so that two gradients that
/// are both numerically zero compare equal.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

fn tapes(net: &Network<f64>, inputs: &[(&StateTensor, &PhaseMatrix)]) -> Result<Vec<Tape<f64>>> {
    inputs.iter().map(|(s, h)| net.forward_tape(s, h)).collect()
}

fn same(a: &[Tape<f64>], b: &[Tape<f64>]) -> bool {
    a.iter().zip(b).all(|(x, y)| x.same_pattern(y))
}

/// Checks `count` parameters picked round-robin over the arrays, each at a
/// random index. `backward` must accumulate the gradient of `loss` into a
/// zeroed store; `inputs` are the network inputs `loss` evaluates, used to
/// reject perturbations that straddle a kink.
#[allow(clippy::too_many_arguments)]
pub fn check_gradients<R, L, B>(
    net: &mut Network<f64>,
    inputs: &[(&StateTensor, &PhaseMatrix)],
    count: usize,
    h: f64,
    floor: f64,
    rng: &mut R,
    loss: L,
    backward: B,
) -> Result<GradCheck>
where
    R: Rng,
    L: Fn(&Network<f64>) -> Result<f64>,
    B: Fn(&mut Network<f64>) -> Result<()>,
{
    net.params.zero_grad();
    backward(net)?;
    let base = tapes(net, inputs)?;
    let arrays = net.params.len();
    let mut report = GradCheck {
        checked: 0,
        skipped: 0,
        max_rel_err: 0.0,
        worst: (String::new(), 0),
    };
    let mut draw = 0;
    while report.checked < count {
        if report.skipped > 10 * count {
            return Err(Error::Empty("smooth coordinates for the gradient check"));
        }
        let a = draw % arrays;
        draw += 1;
        let idx = rng.gen_range(0..net.params.get(a).len());
        let analytic = net.params.get(a).grad[idx];
        let orig = net.params.get(a).value[idx];
        net.params.get_mut(a).value[idx] = orig + h;
        let up = loss(net)?;
        let smooth_up = same(&base, &tapes(net, inputs)?);
        net.params.get_mut(a).value[idx] = orig - h;
        let down = loss(net)?;
        let smooth_down = same(&base, &tapes(net, inputs)?);
        net.params.get_mut(a).value[idx] = orig;
        if !(smooth_up && smooth_down) {
            report.skipped += 1;
            continue;
        }
        let numeric = (up - down) / (2.0 * h);
        let err = rel_err(analytic, numeric, floor);
        if report.checked == 0 || err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst = (net.params.get(a).name.clone(), idx);
        }
        report.checked += 1;
    }
    Ok(report)
}
