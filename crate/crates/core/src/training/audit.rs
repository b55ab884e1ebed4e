use super::assign::LossConfig;
use super::augment::FrameDirective;
use super::clip::{run_clip, TrainFrame};
use crate::associator::AssociatorModel;
use crate::autograd::Graph;
use crate::error::Result;

/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientAudit {
    pub max_relative_error: f64,
    /// Parameter tensor holding the worst entry.
    pub worst_parameter: String,
    pub checked: usize,
}

/// Relative error with a floor so that entries whose true gradient is
/// (numerically) zero do not divide by noise.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Checks every scalar parameter of `model` against central differences of the
/// clip loss. Stop-gradient values (reference boxes, labels) are replayed from
/// the unperturbed pass so both sides differentiate the same function.
pub fn gradient_audit(
    model: &AssociatorModel,
    frames: &[TrainFrame<'_>],
    directives: &[FrameDirective],
    loss_cfg: &LossConfig,
    step: f64,
    floor: f64,
) -> Result<GradientAudit> {
    let mut g = Graph::new();
    let run = run_clip(&mut g, model, frames, directives, loss_cfg)?;
    let grads = g.backward(run.loss.total);
    let analytic = g.param_grads(&grads, &model.params);
    let replay = g.stopped_values().to_vec();

    let mut probe = model.clone();
    let eval = |m: &AssociatorModel| -> Result<f64> {
        let mut g = Graph::with_replay(replay.clone());
        Ok(run_clip(&mut g, m, frames, directives, loss_cfg)?
            .loss
            .parts
            .total)
    };
    let mut audit = GradientAudit {
        max_relative_error: 0.0,
        worst_parameter: String::new(),
        checked: 0,
    };
    let ids: Vec<_> = model.params.ids().collect();
    for (slot, id) in ids.into_iter().enumerate() {
        for k in 0..model.params.get(id).len() {
            let orig = model.params.get(id).data()[k];
            probe.params.get_mut(id).data_mut()[k] = orig + step;
            let up = eval(&probe)?;
            probe.params.get_mut(id).data_mut()[k] = orig - step;
            let down = eval(&probe)?;
            probe.params.get_mut(id).data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic[slot].data()[k], numeric, floor);
            if err > audit.max_relative_error {
                audit.max_relative_error = err;
                audit.worst_parameter = model.params.name(id).to_string();
            }
            audit.checked += 1;
        }
    }
    Ok(audit)
}
