use super::params::{Grads, ParamSet};

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor name, flat index)` of the worst entry.
    pub worst: Option<(String, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub entries_checked: usize,
    /// Entries re-checked at a shifted point because their probe straddled
    /// a kink. Always 0 for [`grad_check`].
    pub entries_nudged: usize,
}

impl GradCheckReport {
    fn new() -> Self {
        Self {
            max_rel_error: 0.0,
            worst: None,
            analytic: 0.0,
            numeric: 0.0,
            entries_checked: 0,
            entries_nudged: 0,
        }
    }

    fn record(&mut self, name: &str, i: usize, a: f64, numeric: f64) {
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        self.entries_checked += 1;
        if rel > self.max_rel_error {
            self.max_rel_error = rel;
            self.worst = Some((name.to_string(), i));
            self.analytic = a;
            self.numeric = numeric;
        }
    }
}

fn check_eps(eps: f64) {
    assert!(
        (1e-6..=1e-3).contains(&eps),
        "finite-difference step {eps} outside [1e-6, 1e-3]"
    );
}

fn central<F>(loss: &F, probe: &mut ParamSet, scratch: &mut Grads, id: usize, i: usize, eps: f64) -> f64
where
    F: Fn(&ParamSet, &mut Grads) -> f64,
{
    let w = probe.get(id).data()[i];
    probe.get_mut(id).data_mut()[i] = w + eps;
    let up = loss(probe, scratch);
    probe.get_mut(id).data_mut()[i] = w - eps;
    let down = loss(probe, scratch);
    probe.get_mut(id).data_mut()[i] = w;
    (up - down) / (2.0 * eps)
}

/// Compares reverse-mode gradients with central differences over every
/// scalar parameter entry.
///
/// `loss` must be a deterministic function of the parameters; it returns
/// the loss value and accumulates its gradient into the supplied buffer.
/// The relative error of an entry is `|a − n| / max(|a|, |n|, 1e-8)`.
pub fn grad_check<F>(loss: F, params: &ParamSet, eps: f64) -> GradCheckReport
where
    F: Fn(&ParamSet, &mut Grads) -> f64,
{
    check_eps(eps);
    let mut analytic = Grads::zeros_like(params);
    loss(params, &mut analytic);

    let mut scratch = Grads::zeros_like(params);
    let mut probe = params.clone();
    let mut report = GradCheckReport::new();
    for id in 0..params.len() {
        for i in 0..params.get(id).data().len() {
            let numeric = central(&loss, &mut probe, &mut scratch, id, i, eps);
            report.record(params.name(id), i, analytic.get(id).data()[i], numeric);
        }
    }
    report
}

/// Offsets, in multiples of the step, tried when an entry sits on a kink.
pub const NUDGE_STEPS: [f64; 8] = [3.0, -3.0, 7.0, -7.0, 15.0, -15.0, 31.0, -31.0];

/// Central difference at the probe's current value of entry `(id, i)`, and
/// whether the loss looks smooth on `[w − eps, w + eps]`.
///
/// On a smooth interval the central differences at `eps` and `eps / 2`
/// agree, and the gap between forward and backward differences halves with
/// the step. A kink anywhere inside the interval breaks one of the two.
fn probe_entry<F>(
    loss: &F,
    probe: &mut ParamSet,
    scratch: &mut Grads,
    id: usize,
    i: usize,
    eps: f64,
    at: f64,
) -> (f64, bool)
where
    F: Fn(&ParamSet, &mut Grads) -> f64,
{
    let w = probe.get(id).data()[i];
    let mut eval = |x: f64| {
        probe.get_mut(id).data_mut()[i] = x;
        loss(probe, scratch)
    };
    let (up, down) = (eval(w + eps), eval(w - eps));
    let h = eps / 2.0;
    let (up_h, down_h) = (eval(w + h), eval(w - h));
    probe.get_mut(id).data_mut()[i] = w;

    let central = (up - down) / (2.0 * eps);
    let central_h = (up_h - down_h) / (2.0 * h);
    let gap = (up - 2.0 * at + down) / eps;
    let gap_h = (up_h - 2.0 * at + down_h) / h;
    let tol = 1e-5 * central.abs().max(central_h.abs()) + 1e-9;
    let smooth = (central - central_h).abs() <= tol && (gap - 2.0 * gap_h).abs() <= tol;
    (central, smooth)
}

/// [`grad_check`] for piecewise-smooth losses such as rectifiers and hinges.
///
/// An entry whose probe interval contains a kink is moved by the offsets in
/// [`NUDGE_STEPS`] until the interval is smooth, and both gradients are
/// recomputed at the shifted point. No entry is skipped: if every offset
/// still looks non-smooth, the last one is reported as is.
pub fn grad_check_nudged<F>(loss: F, params: &ParamSet, eps: f64) -> GradCheckReport
where
    F: Fn(&ParamSet, &mut Grads) -> f64,
{
    check_eps(eps);
    let mut analytic = Grads::zeros_like(params);
    let base = loss(params, &mut analytic);

    let mut scratch = Grads::zeros_like(params);
    let mut probe = params.clone();
    let mut report = GradCheckReport::new();
    for id in 0..params.len() {
        for i in 0..params.get(id).data().len() {
            let mut a = analytic.get(id).data()[i];
            let (mut numeric, smooth) = probe_entry(&loss, &mut probe, &mut scratch, id, i, eps, base);
            if !smooth {
                report.entries_nudged += 1;
                let w = params.get(id).data()[i];
                for step in NUDGE_STEPS {
                    probe.get_mut(id).data_mut()[i] = w + step * eps;
                    let mut g = Grads::zeros_like(params);
                    let at = loss(&probe, &mut g);
                    a = g.get(id).data()[i];
                    let (n, smooth) = probe_entry(&loss, &mut probe, &mut scratch, id, i, eps, at);
                    numeric = n;
                    if smooth {
                        break;
                    }
                }
                probe.get_mut(id).data_mut()[i] = w;
            }
            report.record(params.name(id), i, a, numeric);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::{Dense2, Tape};

    #[test]
    fn quadratic_is_exact() {
        let mut p = ParamSet::new();
        p.push("w", Dense2::scalar(3.0));
        let f = |ps: &ParamSet, g: &mut Grads| {
            let mut tape = Tape::new(ps);
            let w = tape.param(0);
            let sq = tape.matmul(w, w).unwrap();
            tape.backward(sq, 1.0, g).unwrap();
            tape.value(sq).item()
        };
        let r = grad_check(f, &p, 1e-4);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
        let mut g = Grads::zeros_like(&p);
        f(&p, &mut g);
        assert_eq!(g.get(0).item(), 6.0);
    }

    #[test]
    fn constant_loss_has_zero_error() {
        let mut p = ParamSet::new();
        p.push("w", Dense2::row_vector(vec![1.0, -2.0]));
        let r = grad_check(|_, _| 4.2, &p, 1e-5);
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.entries_checked, 2);
    }

    #[test]
    fn nudging_moves_off_a_kink() {
        let mut p = ParamSet::new();
        p.push("w", Dense2::scalar(0.0));
        let f = |ps: &ParamSet, g: &mut Grads| {
            let mut tape = Tape::new(ps);
            let w = tape.param(0);
            let r = tape.relu(w);
            tape.backward(r, 1.0, g).unwrap();
            tape.value(r).item()
        };
        assert!(grad_check(f, &p, 1e-5).max_rel_error > 0.4);
        let r = grad_check_nudged(f, &p, 1e-5);
        assert_eq!(r.entries_nudged, 1);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }
}
